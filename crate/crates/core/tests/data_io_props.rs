use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use proptest::prelude::*;
use pulsebench::data_io::{
    generate_split, load_named, save_segments, store_path, Manifest, ManifestEntry, SplitMode,
    SplitSpec, SplitTag, StoredSegment, MANIFEST_VERSION, STRATIFY_TOLERANCE,
};
use pulsebench::signal::{Labels, Segment};

/// Manifest without a store: `cohort[s]` is (segment count, positives) for subject `s`.
fn manifest(cohort: &[(usize, usize)]) -> Manifest {
    let mut entries = Vec::new();
    for (s, &(n, pos)) in cohort.iter().enumerate() {
        for k in 0..n {
            entries.push(ManifestEntry {
                segment_id: format!("s{s:03}-{k:03}"),
                subject_id: format!("subj{s:03}"),
                offset: 0,
                labels: Some(Labels::Af { af: k < pos }),
                sha256: None,
            });
        }
    }
    Manifest {
        version: MANIFEST_VERSION,
        name: "props".into(),
        fs: 32.0,
        duration_s: 25.0,
        segment_len: 800,
        entries,
        splits: None,
    }
}

fn subjects_by_split(m: &Manifest, split: &BTreeMap<String, SplitTag>) -> [BTreeSet<String>; 3] {
    let mut out: [BTreeSet<String>; 3] = Default::default();
    for e in &m.entries {
        if let Some(tag) = split.get(&e.segment_id) {
            out[tag.index()].insert(e.subject_id.clone());
        }
    }
    out
}

fn cohort() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((1usize..12, any::<bool>()), 10..60).prop_map(|v| {
        v.into_iter().map(|(n, af)| (n, if af { n } else { 0 })).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn disjoint_modes_never_share_subjects(
        c in cohort(),
        seed in any::<u64>(),
        stratified in any::<bool>(),
    ) {
        let m = manifest(&c);
        let spec = if stratified {
            SplitSpec::af(seed)
        } else {
            SplitSpec::bp_calibfree(seed)
        };
        let Ok(split) = generate_split(&m, &spec) else {
            prop_assume!(false);
            unreachable!()
        };
        prop_assert_eq!(split.len(), m.entries.len());
        let sets = subjects_by_split(&m, &split);
        for i in 0..3 {
            for j in i + 1..3 {
                prop_assert!(sets[i].is_disjoint(&sets[j]), "splits {i} and {j} share subjects");
            }
        }
        prop_assert_eq!(generate_split(&m, &spec).unwrap(), split);
    }

    #[test]
    fn stratified_splits_keep_the_positive_ratio(c in cohort(), seed in any::<u64>()) {
        let m = manifest(&c);
        let total = m.entries.len() as f64;
        let pos = c.iter().map(|(_, p)| p).sum::<usize>() as f64;
        match generate_split(&m, &SplitSpec::af(seed)) {
            Ok(split) => {
                let global = pos / total;
                for tag in SplitTag::ALL {
                    let ids: Vec<&ManifestEntry> =
                        m.entries.iter().filter(|e| split.get(&e.segment_id) == Some(&tag)).collect();
                    prop_assert!(!ids.is_empty());
                    let p = ids.iter().filter(|e| e.labels == Some(Labels::Af { af: true })).count() as f64;
                    let gap = (p / ids.len() as f64 - global).abs();
                    prop_assert!(gap <= STRATIFY_TOLERANCE, "{tag:?} gap {gap}");
                }
            }
            Err(e) => prop_assert!(e.to_string().contains("subjects"), "{e}"),
        }
    }

    #[test]
    fn overlap_split_assigns_every_segment(c in cohort(), seed in any::<u64>()) {
        let m = manifest(&c);
        let split = generate_split(&m, &SplitSpec::new(SplitMode::SubjectOverlap, [0.8, 0.1, 0.1], seed).unwrap()).unwrap();
        prop_assert_eq!(split.len(), m.entries.len());
        prop_assert!(m.entries.iter().all(|e| split.contains_key(&e.segment_id)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn load_after_save_is_identity(
        data in prop::collection::vec(prop::collection::vec(-1e6..1e6f32, 64), 1..20),
    ) {
        let segs: Vec<StoredSegment> = data
            .iter()
            .enumerate()
            .map(|(i, v)| StoredSegment {
                id: format!("seg{i}"),
                segment: Segment::new(v.iter().map(|x| *x as f64).collect(), 32.0, format!("p{}", i % 3))
                    .unwrap()
                    .with_labels(Labels::Bp { sbp: 100.0 + i as f64, dbp: 60.0 }),
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        save_segments(dir.path(), "a", &segs, None).unwrap();
        let loaded = load_named(dir.path(), "a", None).unwrap();
        for (s, l) in data.iter().zip(&loaded.segments) {
            let bits: Vec<u32> = l.segment.samples.iter().map(|v| (*v as f32).to_bits()).collect();
            prop_assert_eq!(bits, s.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
        prop_assert_eq!(&loaded.segments, &segs);
        save_segments(dir.path(), "b", &loaded.segments, None).unwrap();
        prop_assert_eq!(
            fs::read(store_path(dir.path(), "a")).unwrap(),
            fs::read(store_path(dir.path(), "b")).unwrap()
        );
    }
}

