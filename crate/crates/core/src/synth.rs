//! Synthetic PPG cohorts for desk-scale benchmarks.
//!
//! BP segments are two-wave pulse trains whose diastolic-wave ratio, delay
//! and heart rate drive SBP/DBP through a fixed linear map plus noise. AF
//! segments are regular (sinus-like) or irregular (AF-like) pulse trains,
//! with AF assigned per subject.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::data_io::{save_segments, Manifest, StoredSegment};
use crate::error::{Error, Result};
use crate::signal::{Labels, Segment, Task};

pub const SYNTH_AF_RATIO: f64 = 0.38;
pub const SEGMENTS_PER_SUBJECT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub task: Task,
    pub n: usize,
    pub seed: u64,
    /// Defaults to one subject per 20 segments, at least 10.
    pub subjects: Option<usize>,
    /// Target fraction of AF segments.
    pub af_ratio: f64,
}

impl SynthConfig {
    pub fn new(task: Task, n: usize, seed: u64) -> Self {
        Self { task, n, seed, subjects: None, af_ratio: SYNTH_AF_RATIO }
    }

    fn n_subjects(&self) -> usize {
        self.subjects.unwrap_or((self.n / SEGMENTS_PER_SUBJECT).max(10)).min(self.n)
    }
}

/// Linear target map for BP cohorts; `noise` is added by the generator.
pub fn bp_targets(dia_ratio: f64, dia_delay_s: f64, hr_bpm: f64) -> (f64, f64) {
    let sbp = 120.0 + 50.0 * (dia_ratio - 0.5) - 150.0 * (dia_delay_s - 0.29) + 0.3 * (hr_bpm - 75.0);
    let dbp = 75.0 + 15.0 * (dia_ratio - 0.5) - 70.0 * (dia_delay_s - 0.29) + 0.25 * (hr_bpm - 75.0);
    (sbp, dbp)
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).expect("finite sd").sample(rng)
}

struct BeatShape {
    sys_at: f64,
    sys_sd: f64,
    dia_ratio: f64,
    dia_delay: f64,
    dia_sd: f64,
}

/// Sums two Gaussian waves per beat starting at each `onsets` time, scaled
/// by the matching `amps`.
fn render(n: usize, fs: f64, onsets: &[f64], amps: &[f64], shape: &BeatShape) -> Vec<f64> {
    let mut x = vec![0.0; n];
    let mut bump = |center: f64, amp: f64, sd: f64| {
        let lo = ((center - 5.0 * sd) * fs).floor().max(0.0) as usize;
        let hi = (((center + 5.0 * sd) * fs).ceil().max(0.0) as usize).min(n);
        for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
            let t = i as f64 / fs;
            *v += amp * (-(t - center).powi(2) / (2.0 * sd * sd)).exp();
        }
    };
    for (&t0, &a) in onsets.iter().zip(amps) {
        bump(t0 + shape.sys_at, a, shape.sys_sd);
        bump(t0 + shape.sys_at + shape.dia_delay, a * shape.dia_ratio, shape.dia_sd);
    }
    x
}

/// Onset times from a first onset before t = 0 until past `duration`.
fn onsets_from(rng: &mut ChaCha8Rng, duration: f64, mut next_interval: impl FnMut(&mut ChaCha8Rng, f64) -> f64) -> Vec<f64> {
    let first = next_interval(rng, 0.0);
    let mut t = -rng.random::<f64>() * first;
    let mut out = vec![t];
    while t < duration {
        t += next_interval(rng, t);
        out.push(t);
    }
    out
}

fn add_wander_and_noise(rng: &mut ChaCha8Rng, x: &mut [f64], fs: f64, wander: f64, noise: f64) {
    let f = rng.random_range(0.1..0.3);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let offset = rng.random_range(-1.0..1.0);
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / fs;
        *v += offset + wander * (std::f64::consts::TAU * f * t + phase).sin() + normal(rng, noise);
    }
}

/// Segment counts per subject: one each, the remainder drawn with random
/// subject weights.
fn subject_counts(rng: &mut ChaCha8Rng, n: usize, subjects: usize) -> Vec<usize> {
    let mut counts = vec![1; subjects];
    let weights: Vec<f64> = (0..subjects).map(|_| rng.random_range(0.3..1.7)).collect();
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    for _ in subjects..n {
        counts[dist.sample(rng)] += 1;
    }
    counts
}

struct BpSubject {
    hr: f64,
    dia_ratio: f64,
    dia_delay: f64,
    sys_sd: f64,
    scale: f64,
}

fn bp_segment(rng: &mut ChaCha8Rng, s: &BpSubject) -> (Vec<f64>, Labels) {
    let fs = Task::Bp.nominal_fs();
    let duration = Task::Bp.nominal_duration();
    let n = (fs * duration).round() as usize;
    let hr = (s.hr + normal(rng, 4.0)).clamp(45.0, 120.0);
    let dia_ratio = (s.dia_ratio + normal(rng, 0.05)).clamp(0.15, 0.9);
    let dia_delay = (s.dia_delay + normal(rng, 0.012)).clamp(0.18, 0.4);
    let rr = 60.0 / hr;
    let onsets = onsets_from(rng, duration, |r, _| rr * (1.0 + normal(r, 0.02)));
    let amps: Vec<f64> = onsets.iter().map(|_| s.scale * (1.0 + normal(rng, 0.02))).collect();
    let shape = BeatShape { sys_at: 0.13, sys_sd: s.sys_sd, dia_ratio, dia_delay, dia_sd: 0.06 };
    let mut x = render(n, fs, &onsets, &amps, &shape);
    add_wander_and_noise(rng, &mut x, fs, 0.1 * s.scale, 0.01 * s.scale);
    let (sbp, dbp) = bp_targets(dia_ratio, dia_delay, hr);
    let labels = Labels::Bp { sbp: sbp + normal(rng, 3.0), dbp: dbp + normal(rng, 2.0) };
    (x, labels)
}

struct AfSubject {
    af: bool,
    hr: f64,
    cv: f64,
    sys_sd: f64,
    scale: f64,
}

fn af_segment(rng: &mut ChaCha8Rng, s: &AfSubject) -> Vec<f64> {
    let fs = Task::Af.nominal_fs();
    let duration = Task::Af.nominal_duration();
    let n = (fs * duration).round() as usize;
    let rr = 60.0 / (s.hr + normal(rng, 5.0)).clamp(45.0, 150.0);
    let (onsets, amps): (Vec<f64>, Vec<f64>) = if s.af {
        let onsets = onsets_from(rng, duration, |r, _| (rr * normal(r, s.cv).exp()).clamp(0.3, 2.0));
        let amps = onsets
            .windows(2)
            .map(|w| s.scale * (0.7 + 0.3 * ((w[1] - w[0]) / rr).min(1.0)) * (1.0 + normal(rng, 0.05)))
            .chain(std::iter::once(s.scale))
            .collect();
        (onsets, amps)
    } else {
        let resp = rng.random_range(3.0..6.0);
        let onsets = onsets_from(rng, duration, |r, t| {
            rr * (1.0 + 0.03 * (std::f64::consts::TAU * t / resp).sin() + normal(r, 0.015))
        });
        let amps = onsets.iter().map(|_| s.scale * (1.0 + normal(rng, 0.02))).collect();
        (onsets, amps)
    };
    let shape = BeatShape { sys_at: 0.12, sys_sd: s.sys_sd, dia_ratio: 0.35, dia_delay: 0.25, dia_sd: 0.08 };
    let mut x = render(n, fs, &onsets, &amps, &shape);
    add_wander_and_noise(rng, &mut x, fs, 0.15 * s.scale, 0.02 * s.scale);
    x
}

/// Greedily marks shuffled subjects as AF while that moves the AF segment
/// count closer to `ratio · n`.
fn choose_af_subjects(rng: &mut ChaCha8Rng, counts: &[usize], ratio: f64) -> Vec<bool> {
    let n: usize = counts.iter().sum();
    let target = ratio * n as f64;
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.shuffle(rng);
    let mut af = vec![false; counts.len()];
    let mut total = 0.0;
    for s in order {
        let with = total + counts[s] as f64;
        if (with - target).abs() < (total - target).abs() {
            af[s] = true;
            total = with;
        }
    }
    af
}

/// Generates `cfg.n` labelled segments. Samples are rounded to f32 so that a
/// saved and reloaded cohort is identical to the generated one.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<StoredSegment>> {
    if cfg.n == 0 {
        return Err(Error::InvalidInput("synthetic cohort needs at least one segment".into()));
    }
    if !(0.0..=1.0).contains(&cfg.af_ratio) {
        return Err(Error::InvalidInput(format!("AF ratio {} outside [0, 1]", cfg.af_ratio)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let subjects = cfg.n_subjects();
    let counts = subject_counts(&mut rng, cfg.n, subjects);
    let prefix = match cfg.task {
        Task::Bp => "bp",
        Task::Af => "af",
    };
    let af = match cfg.task {
        Task::Af => choose_af_subjects(&mut rng, &counts, cfg.af_ratio),
        Task::Bp => vec![false; subjects],
    };
    let mut out = Vec::with_capacity(cfg.n);
    for (s, &count) in counts.iter().enumerate() {
        let subject_id = format!("{prefix}-subj{s:04}");
        let scale = rng.random_range(0.6..1.6);
        let sys_sd = rng.random_range(0.04..0.055);
        let bp_subject = BpSubject {
            hr: rng.random_range(55.0..95.0),
            dia_ratio: rng.random_range(0.25..0.75),
            dia_delay: rng.random_range(0.22..0.36),
            sys_sd,
            scale,
        };
        let af_subject = AfSubject {
            af: af[s],
            hr: if af[s] { rng.random_range(75.0..130.0) } else { rng.random_range(55.0..100.0) },
            cv: rng.random_range(0.15..0.3),
            sys_sd: sys_sd + 0.01,
            scale,
        };
        for k in 0..count {
            let (samples, labels) = match cfg.task {
                Task::Bp => bp_segment(&mut rng, &bp_subject),
                Task::Af => (af_segment(&mut rng, &af_subject), Labels::Af { af: af[s] }),
            };
            out.push(StoredSegment {
                id: format!("{subject_id}-{k:04}"),
                segment: Segment {
                    samples: samples.into_iter().map(|v| v as f32 as f64).collect(),
                    fs: cfg.task.nominal_fs(),
                    subject_id: subject_id.clone(),
                    labels: Some(labels),
                },
            });
        }
    }
    Ok(out)
}

/// Generates a cohort and writes it as `<dir>/<name>.f32` plus manifest.
pub fn write_dataset(dir: &Path, name: &str, cfg: &SynthConfig) -> Result<Manifest> {
    save_segments(dir, name, &generate(cfg)?, None)
}
