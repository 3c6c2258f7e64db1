use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::median;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Global,
    PerSubject,
}

/// Training-set medians, overall and per subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub global: f64,
    pub per_subject: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePredictions {
    pub values: Vec<f64>,
    /// Rows whose subject was unseen in training and got the global median.
    pub fallback: Vec<bool>,
}

impl BaselinePredictions {
    pub fn any_fallback(&self) -> bool {
        self.fallback.iter().any(|f| *f)
    }
}

impl BaselineModel {
    pub fn fit(targets: &[f64], subject_ids: &[String]) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidInput("baseline needs at least one training target".into()));
        }
        if targets.len() != subject_ids.len() {
            return Err(Error::InvalidInput("targets and subject ids differ in length".into()));
        }
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (y, s) in targets.iter().zip(subject_ids) {
            groups.entry(s.clone()).or_default().push(*y);
        }
        Ok(Self {
            global: median(targets),
            per_subject: groups.into_iter().map(|(s, v)| (s, median(&v))).collect(),
        })
    }

    pub fn predict(&self, subject_ids: &[String], mode: BaselineMode) -> BaselinePredictions {
        let (values, fallback) = subject_ids
            .iter()
            .map(|s| match mode {
                BaselineMode::Global => (self.global, false),
                BaselineMode::PerSubject => match self.per_subject.get(s) {
                    Some(v) => (*v, false),
                    None => (self.global, true),
                },
            })
            .unzip();
        BaselinePredictions { values, fallback }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn global_median() {
        let m = BaselineModel::fit(&[100.0, 110.0, 120.0], &ids(&["a", "b", "c"])).unwrap();
        let p = m.predict(&ids(&["x", "a"]), BaselineMode::Global);
        assert_eq!(p.values, vec![110.0, 110.0]);
        assert!(!p.any_fallback());
    }

    #[test]
    fn per_subject_with_fallback() {
        let m = BaselineModel::fit(&[100.0, 120.0, 140.0], &ids(&["A", "A", "B"])).unwrap();
        let p = m.predict(&ids(&["A", "B", "C"]), BaselineMode::PerSubject);
        assert_eq!(p.values, vec![110.0, 140.0, 120.0]);
        assert_eq!(p.fallback, vec![false, false, true]);
        assert!(BaselineModel::fit(&[], &[]).is_err());
    }
}
