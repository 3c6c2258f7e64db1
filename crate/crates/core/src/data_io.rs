//! Segment store, manifests, split generation and feature CSV files.
//!
//! A dataset `name` lives in two files: `<name>.f32` holds every segment's
//! samples as little-endian 32-bit floats, and `<name>.manifest.json`
//! describes where each segment starts and what its labels are.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signal::{Labels, Segment, Task};

pub const MANIFEST_VERSION: u32 = 1;
/// Allowed gap between a split's positive ratio and the global ratio.
pub const STRATIFY_TOLERANCE: f64 = 0.03;
const STRATIFY_RESTARTS: u64 = 64;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Validation, SplitTag::Test];

    pub fn index(self) -> usize {
        self as usize
    }
}

pub type SplitAssignment = BTreeMap<String, SplitTag>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub segment_id: String,
    pub subject_id: String,
    /// Byte offset of the first sample in the store.
    pub offset: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
    /// Hex SHA-256 of the segment's stored bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub name: String,
    pub fs: f64,
    pub duration_s: f64,
    /// Samples per segment.
    pub segment_len: usize,
    pub entries: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<SplitAssignment>,
}

impl Manifest {
    /// Checks the invariants that do not need the store.
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Schema(format!(
                "manifest version {} (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        if !(self.fs > 0.0) || !(self.duration_s > 0.0) {
            return Err(Error::Schema(format!("fs {} and duration {} must be positive", self.fs, self.duration_s)));
        }
        let declared = (self.fs * self.duration_s).round() as usize;
        if declared != self.segment_len {
            return Err(Error::Schema(format!(
                "fs {} × duration {} = {declared} samples, but segment_len is {}",
                self.fs, self.duration_s, self.segment_len
            )));
        }
        let mut seen = HashSet::new();
        let mut dups = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.segment_id.as_str()) {
                dups.insert(e.segment_id.clone());
            }
            if e.subject_id.is_empty() {
                return Err(Error::segment(&e.segment_id, "empty subject_id"));
            }
        }
        if !dups.is_empty() {
            return Err(Error::DuplicateIds(dups.into_iter().collect()));
        }
        if let Some(splits) = &self.splits {
            let missing: Vec<String> = splits.keys().filter(|id| !seen.contains(id.as_str())).cloned().collect();
            if !missing.is_empty() {
                return Err(Error::Schema(format!("split ids not in entries: {}", missing.join(", "))));
            }
        }
        Ok(())
    }

    /// Checks fs and duration against the task's nominal values.
    pub fn check_task(&self, task: Task) -> Result<()> {
        if self.fs != task.nominal_fs() {
            return Err(Error::Schema(format!(
                "manifest fs {} Hz does not match {:?} task fs {} Hz",
                self.fs,
                task,
                task.nominal_fs()
            )));
        }
        if self.duration_s != task.nominal_duration() {
            return Err(Error::Schema(format!(
                "manifest duration {} s does not match {:?} task duration {} s",
                self.duration_s,
                task,
                task.nominal_duration()
            )));
        }
        Ok(())
    }
}

pub fn store_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.f32"))
}

pub fn manifest_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.manifest.json"))
}

/// A segment with its id, as stored in or loaded from a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSegment {
    pub id: String,
    pub segment: Segment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub segments: Vec<StoredSegment>,
}

impl Dataset {
    pub fn ids(&self) -> Vec<String> {
        self.segments.iter().map(|s| s.id.clone()).collect()
    }

    /// Segments tagged `tag` in the manifest's split map, in store order.
    pub fn split(&self, tag: SplitTag) -> Result<Vec<&StoredSegment>> {
        let splits = self
            .manifest
            .splits
            .as_ref()
            .ok_or_else(|| Error::Schema(format!("dataset {} has no split assignment", self.manifest.name)))?;
        Ok(self.segments.iter().filter(|s| splits.get(&s.id) == Some(&tag)).collect())
    }
}

/// Writes `<name>.f32` and `<name>.manifest.json` under `dir`. Samples are
/// narrowed to f32.
pub fn save_segments(
    dir: &Path,
    name: &str,
    segments: &[StoredSegment],
    splits: Option<SplitAssignment>,
) -> Result<Manifest> {
    let first = segments
        .first()
        .ok_or_else(|| Error::InvalidInput("no segments to save".into()))?;
    let fs = first.segment.fs;
    let segment_len = first.segment.samples.len();
    let mut bytes = Vec::with_capacity(segments.len() * segment_len * 4);
    let mut entries = Vec::with_capacity(segments.len());
    for s in segments {
        if s.segment.fs != fs {
            return Err(Error::segment(&s.id, format!("fs {} differs from {fs}", s.segment.fs)));
        }
        if s.segment.samples.len() != segment_len {
            return Err(Error::segment(
                &s.id,
                format!("{} samples, expected {segment_len}", s.segment.samples.len()),
            ));
        }
        let offset = bytes.len();
        for v in &s.segment.samples {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        entries.push(ManifestEntry {
            segment_id: s.id.clone(),
            subject_id: s.segment.subject_id.clone(),
            offset: offset as u64,
            labels: s.segment.labels,
            sha256: Some(sha256_hex(&bytes[offset..])),
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        name: name.to_string(),
        fs,
        duration_s: segment_len as f64 / fs,
        segment_len,
        entries,
        splits,
    };
    manifest.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sp = store_path(dir, name);
    fs::write(&sp, &bytes).map_err(|e| Error::io(&sp, e))?;
    write_manifest(&manifest_path(dir, name), &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    m.validate()?;
    Ok(m)
}

/// Loads and validates every segment. With `task`, the manifest's fs and
/// duration must match the task's nominal values.
pub fn load_segments(store: &Path, manifest: &Path, task: Option<Task>) -> Result<Dataset> {
    let manifest = read_manifest(manifest)?;
    if let Some(t) = task {
        manifest.check_task(t)?;
    }
    let bytes = fs::read(store).map_err(|e| Error::io(store, e))?;
    let width = manifest.segment_len * 4;
    let mut segments = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let start = usize::try_from(e.offset).map_err(|_| Error::segment(&e.segment_id, "offset overflows"))?;
        if start % 4 != 0 {
            return Err(Error::segment(&e.segment_id, format!("offset {start} is not 4-byte aligned")));
        }
        let end = start
            .checked_add(width)
            .filter(|end| *end <= bytes.len())
            .ok_or_else(|| {
                Error::segment(
                    &e.segment_id,
                    format!("offset {start} + {width} bytes exceeds store size {}", bytes.len()),
                )
            })?;
        let raw = &bytes[start..end];
        if let Some(expected) = &e.sha256 {
            let got = sha256_hex(raw);
            if !got.eq_ignore_ascii_case(expected) {
                return Err(Error::segment(&e.segment_id, format!("checksum mismatch: {got} != {expected}")));
            }
        }
        let samples: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::segment(&e.segment_id, format!("non-finite sample at index {i}")));
        }
        segments.push(StoredSegment {
            id: e.segment_id.clone(),
            segment: Segment {
                samples,
                fs: manifest.fs,
                subject_id: e.subject_id.clone(),
                labels: e.labels,
            },
        });
    }
    Ok(Dataset { manifest, segments })
}

/// Loads `<dir>/<name>.f32` with its manifest.
pub fn load_named(dir: &Path, name: &str, task: Option<Task>) -> Result<Dataset> {
    load_segments(&store_path(dir, name), &manifest_path(dir, name), task)
}

pub fn write_splits(path: &Path, splits: &SplitAssignment) -> Result<()> {
    let text = serde_json::to_string_pretty(splits)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_splits(path: &Path) -> Result<SplitAssignment> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Subjects appear in every split; each subject's segments are divided.
    SubjectOverlap,
    /// Every subject is in exactly one split.
    SubjectDisjoint,
    /// Subject-disjoint with the positive-class ratio balanced across splits.
    StratifiedDisjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// Train, validation and test fractions of all segments.
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(mode: SplitMode, fractions: [f64; 3], seed: u64) -> Result<Self> {
        let s = Self { mode, fractions, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn bp_calib(seed: u64) -> Self {
        Self { mode: SplitMode::SubjectOverlap, fractions: [0.8, 0.1, 0.1], seed }
    }

    pub fn bp_calibfree(seed: u64) -> Self {
        Self { mode: SplitMode::SubjectDisjoint, fractions: [0.8, 0.1, 0.1], seed }
    }

    pub fn af(seed: u64) -> Self {
        Self { mode: SplitMode::StratifiedDisjoint, fractions: [0.78, 0.11, 0.11], seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::InvalidSpec(format!("split fractions {:?} must be positive", self.fractions)));
        }
        if self.fractions.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Err(Error::InvalidSpec(format!("split fractions {:?} sum above 1", self.fractions)));
        }
        Ok(())
    }

    /// Fractions with a fourth bin for the unassigned remainder.
    fn bins(&self) -> Vec<f64> {
        let mut b = self.fractions.to_vec();
        let rest = 1.0 - b.iter().sum::<f64>();
        if rest > 1e-9 {
            b.push(rest);
        }
        b
    }
}

struct SubjectGroup {
    ids: Vec<String>,
    positives: usize,
}

impl SubjectGroup {
    fn len(&self) -> usize {
        self.ids.len()
    }

    fn negatives(&self) -> usize {
        self.ids.len() - self.positives
    }
}

fn group_subjects(manifest: &Manifest, need_class: bool) -> Result<Vec<SubjectGroup>> {
    let mut groups: BTreeMap<&str, SubjectGroup> = BTreeMap::new();
    for e in &manifest.entries {
        if e.subject_id.is_empty() {
            return Err(Error::segment(&e.segment_id, "empty subject_id"));
        }
        let positive = match (need_class, e.labels) {
            (false, _) => false,
            (true, Some(Labels::Af { af })) => af,
            (true, _) => return Err(Error::segment(&e.segment_id, "stratified split needs an AF label")),
        };
        let g = groups
            .entry(&e.subject_id)
            .or_insert_with(|| SubjectGroup { ids: Vec::new(), positives: 0 });
        g.ids.push(e.segment_id.clone());
        g.positives += positive as usize;
    }
    Ok(groups.into_values().collect())
}

/// Assigns segments to train/validation/test. Deterministic given the seed.
pub fn generate_split(manifest: &Manifest, spec: &SplitSpec) -> Result<SplitAssignment> {
    spec.validate()?;
    manifest.validate()?;
    if manifest.entries.is_empty() {
        return Err(Error::InvalidInput("manifest has no entries".into()));
    }
    let stratify = spec.mode == SplitMode::StratifiedDisjoint;
    let groups = group_subjects(manifest, stratify)?;
    let bins = spec.bins();
    let bin_of_group = match spec.mode {
        SplitMode::SubjectOverlap => return Ok(overlap_split(&groups, &bins, spec.seed)),
        SplitMode::SubjectDisjoint => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut order: Vec<usize> = (0..groups.len()).collect();
            order.shuffle(&mut rng);
            pack_by_size(&groups, &order, &bins)
        }
        SplitMode::StratifiedDisjoint => stratified_pack(&groups, &bins, spec.seed)?,
    };
    let mut out = SplitAssignment::new();
    for (g, bin) in groups.iter().zip(bin_of_group) {
        if let Some(tag) = SplitTag::ALL.get(bin) {
            for id in &g.ids {
                out.insert(id.clone(), *tag);
            }
        }
    }
    Ok(out)
}

fn overlap_split(groups: &[SubjectGroup], bins: &[f64], seed: u64) -> SplitAssignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SplitAssignment::new();
    for g in groups {
        let mut ids = g.ids.clone();
        ids.shuffle(&mut rng);
        let n = ids.len() as f64;
        let mut cum = 0.0;
        let mut start = 0;
        for (bin, f) in bins.iter().enumerate() {
            cum += f;
            let end = ((n * cum).round() as usize).min(ids.len());
            if let Some(tag) = SplitTag::ALL.get(bin) {
                for id in &ids[start..end] {
                    out.insert(id.clone(), *tag);
                }
            }
            start = end;
        }
    }
    out
}

/// Greedy bin-packing: largest subjects first (ties kept in shuffled order),
/// each to the bin with the largest remaining capacity.
fn pack_by_size(groups: &[SubjectGroup], order: &[usize], bins: &[f64]) -> Vec<usize> {
    let total: usize = groups.iter().map(SubjectGroup::len).sum();
    let targets: Vec<f64> = bins.iter().map(|f| f * total as f64).collect();
    let mut filled = vec![0.0; bins.len()];
    let mut sorted = order.to_vec();
    sorted.sort_by_key(|&g| std::cmp::Reverse(groups[g].len()));
    let mut out = vec![0; groups.len()];
    for g in sorted {
        let bin = (0..bins.len())
            .max_by(|&a, &b| (targets[a] - filled[a]).total_cmp(&(targets[b] - filled[b])).then(b.cmp(&a)))
            .expect("at least one bin");
        filled[bin] += groups[g].len() as f64;
        out[g] = bin;
    }
    out
}

struct StratState<'a> {
    groups: &'a [SubjectGroup],
    target_pos: Vec<f64>,
    target_neg: Vec<f64>,
    pos: Vec<f64>,
    neg: Vec<f64>,
    scale_pos: f64,
    scale_neg: f64,
}

impl<'a> StratState<'a> {
    fn new(groups: &'a [SubjectGroup], bins: &[f64]) -> Self {
        let p: usize = groups.iter().map(|g| g.positives).sum();
        let n: usize = groups.iter().map(SubjectGroup::negatives).sum();
        Self {
            groups,
            target_pos: bins.iter().map(|f| f * p as f64).collect(),
            target_neg: bins.iter().map(|f| f * n as f64).collect(),
            pos: vec![0.0; bins.len()],
            neg: vec![0.0; bins.len()],
            scale_pos: 1.0 / (p.max(1) as f64),
            scale_neg: 1.0 / (n.max(1) as f64),
        }
    }

    fn bin_cost(&self, b: usize, dp: f64, dn: f64) -> f64 {
        let ep = self.pos[b] + dp - self.target_pos[b];
        let en = self.neg[b] + dn - self.target_neg[b];
        ep * ep * self.scale_pos + en * en * self.scale_neg
    }

    fn add(&mut self, g: usize, b: usize, sign: f64) {
        self.pos[b] += sign * self.groups[g].positives as f64;
        self.neg[b] += sign * self.groups[g].negatives() as f64;
    }

    /// Cost change from moving `g` out of `from` and into `to`.
    fn move_delta(&self, g: usize, from: usize, to: usize) -> f64 {
        let (p, n) = (self.groups[g].positives as f64, self.groups[g].negatives() as f64);
        self.bin_cost(from, -p, -n) + self.bin_cost(to, p, n) - self.bin_cost(from, 0.0, 0.0) - self.bin_cost(to, 0.0, 0.0)
    }

    fn swap_delta(&self, g: usize, a: usize, h: usize, b: usize) -> f64 {
        let dp = self.groups[h].positives as f64 - self.groups[g].positives as f64;
        let dn = self.groups[h].negatives() as f64 - self.groups[g].negatives() as f64;
        self.bin_cost(a, dp, dn) + self.bin_cost(b, -dp, -dn) - self.bin_cost(a, 0.0, 0.0) - self.bin_cost(b, 0.0, 0.0)
    }

    fn ratio_gaps(&self) -> Vec<f64> {
        let p: f64 = self.pos.iter().sum();
        let n: f64 = self.neg.iter().sum();
        let global = p / (p + n);
        (0..SplitTag::ALL.len().min(self.pos.len()))
            .map(|b| {
                let t = self.pos[b] + self.neg[b];
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    (self.pos[b] / t - global).abs()
                }
            })
            .collect()
    }
}

fn stratified_pack(groups: &[SubjectGroup], bins: &[f64], seed: u64) -> Result<Vec<usize>> {
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for restart in 0..STRATIFY_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.shuffle(&mut rng);
        order.sort_by_key(|&g| std::cmp::Reverse(groups[g].len()));
        let mut st = StratState::new(groups, bins);
        let mut assign = vec![0; groups.len()];
        for g in order {
            let b = (0..bins.len())
                .min_by(|&a, &b| {
                    let da = st.bin_cost(a, groups[g].positives as f64, groups[g].negatives() as f64) - st.bin_cost(a, 0.0, 0.0);
                    let db = st.bin_cost(b, groups[g].positives as f64, groups[g].negatives() as f64) - st.bin_cost(b, 0.0, 0.0);
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("at least one bin");
            st.add(g, b, 1.0);
            assign[g] = b;
        }
        local_search(&mut st, &mut assign, bins.len());
        let gaps = st.ratio_gaps();
        let worst = gaps.iter().cloned().fold(0.0, f64::max);
        if worst <= STRATIFY_TOLERANCE {
            return Ok(assign);
        }
        if best.as_ref().is_none_or(|(w, _, _)| worst < *w) {
            best = Some((worst, assign, gaps));
        }
    }
    let (worst, assign, gaps) = best.expect("at least one restart");
    let positives_by_subject = groups.iter().filter(|g| g.positives > 0).count();
    let sizes: Vec<String> = (0..SplitTag::ALL.len().min(bins.len()))
        .map(|b| {
            let n = groups.iter().zip(&assign).filter(|(_, a)| **a == b).count();
            format!("{:?}: {n} subjects, ratio gap {:.4}", SplitTag::ALL[b], gaps[b])
        })
        .collect();
    Err(Error::InfeasibleSplit(format!(
        "no assignment keeps every split within ±{STRATIFY_TOLERANCE} of the global positive ratio \
         after {STRATIFY_RESTARTS} restarts (best worst-case gap {worst:.4}; {positives_by_subject} of {} subjects \
         have positive segments; {})",
        groups.len(),
        sizes.join("; ")
    )))
}

/// First-improvement moves and swaps until no single change lowers the cost.
fn local_search(st: &mut StratState, assign: &mut [usize], n_bins: usize) {
    const EPS: f64 = 1e-12;
    loop {
        let mut improved = false;
        for g in 0..assign.len() {
            for to in 0..n_bins {
                if to != assign[g] && st.move_delta(g, assign[g], to) < -EPS {
                    st.add(g, assign[g], -1.0);
                    st.add(g, to, 1.0);
                    assign[g] = to;
                    improved = true;
                }
            }
        }
        for g in 0..assign.len() {
            for h in g + 1..assign.len() {
                let (a, b) = (assign[g], assign[h]);
                if a != b && st.swap_delta(g, a, h, b) < -EPS {
                    st.add(g, a, -1.0);
                    st.add(h, b, -1.0);
                    st.add(g, b, 1.0);
                    st.add(h, a, 1.0);
                    assign.swap(g, h);
                    improved = true;
                }
            }
        }
        if !improved {
            return;
        }
    }
}

/// Feature matrix with named columns, keyed by segment id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>, ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::InvalidInput(format!("{} ids for {} rows", ids.len(), rows.len())));
        }
        for (id, r) in ids.iter().zip(&rows) {
            if r.len() != names.len() {
                return Err(Error::segment(id, format!("{} values for {} columns", r.len(), names.len())));
            }
        }
        Ok(Self { names, ids, rows })
    }
}

/// Writes `segment_id,<names...>`. NaN or infinite cells are rejected.
pub fn export_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["segment_id".to_string()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header)?;
    for (id, row) in table.ids.iter().zip(&table.rows) {
        if row.len() != table.names.len() {
            return Err(Error::segment(id, format!("{} values for {} columns", row.len(), table.names.len())));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::segment(id, format!("non-finite value in column {}", table.names[j])));
        }
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn import_features(path: &Path) -> Result<FeatureTable> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.get(0) != Some("segment_id") {
        return Err(Error::Schema(format!("{}: first column must be segment_id", path.display())));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let row = rec
            .iter()
            .skip(1)
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::segment(&id, format!("unparsable cell: {e}")))?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::segment(&id, "non-finite value"));
        }
        ids.push(id);
        rows.push(row);
    }
    FeatureTable::new(names, ids, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn segments(n: usize, subjects: usize, seed: u64) -> Vec<StoredSegment> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| StoredSegment {
                id: format!("s{i:04}"),
                segment: Segment {
                    samples: (0..320).map(|_| rng.random::<f32>() as f64 * 4.0 - 2.0).collect(),
                    fs: 32.0,
                    subject_id: format!("p{}", i % subjects),
                    labels: Some(Labels::Af { af: i % 3 == 0 }),
                },
            })
            .collect()
    }

    fn manifest_for(groups: &[(usize, usize)]) -> Manifest {
        // (segments, positives) per subject
        let mut entries = Vec::new();
        for (s, &(n, p)) in groups.iter().enumerate() {
            for k in 0..n {
                entries.push(ManifestEntry {
                    segment_id: format!("p{s}-{k}"),
                    subject_id: format!("p{s}"),
                    offset: 0,
                    labels: Some(Labels::Af { af: k < p }),
                    sha256: None,
                });
            }
        }
        Manifest { version: 1, name: "t".into(), fs: 32.0, duration_s: 25.0, segment_len: 800, entries, splits: None }
    }

    fn subject_sets(m: &Manifest, a: &SplitAssignment) -> [BTreeSet<String>; 3] {
        let mut sets: [BTreeSet<String>; 3] = Default::default();
        for e in &m.entries {
            if let Some(t) = a.get(&e.segment_id) {
                sets[t.index()].insert(e.subject_id.clone());
            }
        }
        sets
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let segs = segments(100, 7, 1);
        save_segments(dir.path(), "rt", &segs, None).unwrap();
        let ds = load_named(dir.path(), "rt", None).unwrap();
        assert_eq!(ds.segments.len(), 100);
        for (a, b) in segs.iter().zip(&ds.segments) {
            assert_eq!(a.id, b.id);
            let ab: Vec<u32> = a.segment.samples.iter().map(|v| (*v as f32).to_bits()).collect();
            let bb: Vec<u32> = b.segment.samples.iter().map(|v| (*v as f32).to_bits()).collect();
            assert_eq!(ab, bb);
            assert_eq!(a.segment, b.segment);
        }
        // saving the loaded set again reproduces the store byte for byte
        let dir2 = tempfile::tempdir().unwrap();
        save_segments(dir2.path(), "rt", &ds.segments, None).unwrap();
        assert_eq!(
            fs::read(store_path(dir.path(), "rt")).unwrap(),
            fs::read(store_path(dir2.path(), "rt")).unwrap()
        );
    }

    #[test]
    fn out_of_bounds_offset_names_segment() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = save_segments(dir.path(), "oob", &segments(5, 2, 2), None).unwrap();
        m.entries[3].offset = 10_000_000;
        write_manifest(&manifest_path(dir.path(), "oob"), &m).unwrap();
        match load_named(dir.path(), "oob", None) {
            Err(Error::Segment { segment_id, reason }) => {
                assert_eq!(segment_id, "s0003");
                assert!(reason.contains("exceeds"), "{reason}");
            }
            other => panic!("expected segment error, got {other:?}"),
        }
    }

    #[test]
    fn checksum_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        save_segments(dir.path(), "ck", &segments(4, 2, 3), None).unwrap();
        let sp = store_path(dir.path(), "ck");
        let mut bytes = fs::read(&sp).unwrap();
        bytes[320 * 4 * 2 + 5] ^= 0x40;
        fs::write(&sp, bytes).unwrap();
        match load_named(dir.path(), "ck", None) {
            Err(Error::Segment { segment_id, reason }) => {
                assert_eq!(segment_id, "s0002");
                assert!(reason.contains("checksum"));
            }
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn fs_mismatch_with_task_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let segs: Vec<StoredSegment> = segments(3, 1, 4)
            .into_iter()
            .map(|mut s| {
                s.segment.samples = vec![0.5; 800];
                s
            })
            .collect();
        save_segments(dir.path(), "af", &segs, None).unwrap();
        assert!(load_named(dir.path(), "af", Some(Task::Af)).is_ok());
        assert!(matches!(load_named(dir.path(), "af", Some(Task::Bp)), Err(Error::Schema(_))));
    }

    #[test]
    fn manifest_invariants() {
        let mut m = manifest_for(&[(3, 1), (2, 0)]);
        m.validate().unwrap();
        m.entries[1].segment_id = "p0-0".into();
        assert!(matches!(m.validate(), Err(Error::DuplicateIds(ids)) if ids == ["p0-0"]));
        let mut m = manifest_for(&[(3, 1)]);
        m.splits = Some([("ghost".to_string(), SplitTag::Test)].into_iter().collect());
        assert!(matches!(m.validate(), Err(Error::Schema(_))));
        let mut m = manifest_for(&[(3, 1)]);
        m.segment_len = 799;
        assert!(matches!(m.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn disjoint_ten_subjects_exhaustive() {
        let m = manifest_for(&(0..10).map(|i| (5 + i, 0)).collect::<Vec<_>>());
        for seed in 0..50 {
            let a = generate_split(&m, &SplitSpec::bp_calibfree(seed)).unwrap();
            assert_eq!(a.len(), m.entries.len());
            let sets = subject_sets(&m, &a);
            for i in 0..3 {
                for j in i + 1..3 {
                    assert!(sets[i].is_disjoint(&sets[j]), "seed {seed}");
                }
            }
            assert!(sets.iter().all(|s| !s.is_empty()), "seed {seed}");
        }
    }

    #[test]
    fn overlap_split_shares_subjects() {
        let m = manifest_for(&(0..6).map(|_| (20, 0)).collect::<Vec<_>>());
        let a = generate_split(&m, &SplitSpec::bp_calib(3)).unwrap();
        let sets = subject_sets(&m, &a);
        assert!(sets.iter().all(|s| s.len() == 6));
        let train = a.values().filter(|t| **t == SplitTag::Train).count();
        assert_eq!(train, 6 * 16);
    }

    #[test]
    fn fractions_below_one_leave_segments_out() {
        let m = manifest_for(&(0..6).map(|_| (20, 0)).collect::<Vec<_>>());
        let spec = SplitSpec::new(SplitMode::SubjectOverlap, [0.5, 0.1, 0.1], 0).unwrap();
        let a = generate_split(&m, &spec).unwrap();
        assert_eq!(a.len(), 6 * 14);
    }

    #[test]
    fn stratified_keeps_ratio_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let groups: Vec<(usize, usize)> = (0..60)
            .map(|i| {
                let n = rng.random_range(10..40);
                (n, if i % 8 < 3 { n } else { 0 })
            })
            .collect();
        let m = manifest_for(&groups);
        let a = generate_split(&m, &SplitSpec::af(5)).unwrap();
        assert_eq!(a, generate_split(&m, &SplitSpec::af(5)).unwrap());
        let pos: HashSet<&str> = m
            .entries
            .iter()
            .filter(|e| e.labels == Some(Labels::Af { af: true }))
            .map(|e| e.segment_id.as_str())
            .collect();
        let global = pos.len() as f64 / m.entries.len() as f64;
        for tag in SplitTag::ALL {
            let ids: Vec<&String> = a.iter().filter(|(_, t)| **t == tag).map(|(id, _)| id).collect();
            let r = ids.iter().filter(|id| pos.contains(id.as_str())).count() as f64 / ids.len() as f64;
            assert!((r - global).abs() <= STRATIFY_TOLERANCE, "{tag:?}: {r} vs {global}");
        }
        let sets = subject_sets(&m, &a);
        assert!(sets[0].is_disjoint(&sets[1]) && sets[0].is_disjoint(&sets[2]) && sets[1].is_disjoint(&sets[2]));
    }

    #[test]
    fn single_positive_subject_is_infeasible() {
        let mut groups = vec![(30, 30)];
        groups.extend((0..20).map(|_| (10, 0)));
        let m = manifest_for(&groups);
        match generate_split(&m, &SplitSpec::af(0)) {
            Err(Error::InfeasibleSplit(msg)) => assert!(msg.contains("1 of 21 subjects"), "{msg}"),
            other => panic!("expected infeasible split, got {other:?}"),
        }
    }

    #[test]
    fn bad_fractions_rejected() {
        assert!(SplitSpec::new(SplitMode::SubjectDisjoint, [0.8, 0.2, 0.1], 0).is_err());
        assert!(SplitSpec::new(SplitMode::SubjectDisjoint, [0.8, 0.0, 0.1], 0).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let names: Vec<String> = crate::morph::MORPH_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..28).map(|_| rng.random::<f64>() * 1e3 - 1.0).collect()).collect();
        let ids: Vec<String> = (0..5).map(|i| format!("s{i}")).collect();
        let t = FeatureTable::new(names, ids, rows).unwrap();
        export_features(&path, &t).unwrap();
        let header = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header.split(',').count(), 29);
        assert!(header.starts_with("segment_id,"));
        assert_eq!(import_features(&path).unwrap(), t);
    }

    #[test]
    fn feature_csv_rejects_nan_and_width() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let t = FeatureTable {
            names: vec!["a".into(), "b".into()],
            ids: vec!["x".into()],
            rows: vec![vec![1.0, f64::NAN]],
        };
        assert!(matches!(export_features(&path, &t), Err(Error::Segment { .. })));
        assert!(FeatureTable::new(vec!["a".into()], vec!["x".into()], vec![vec![1.0, 2.0]]).is_err());
        fs::write(&path, "segment_id,a\nx,NaN\n").unwrap();
        assert!(import_features(&path).is_err());
    }
}
