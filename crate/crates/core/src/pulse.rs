//! Heartbeat detection and per-beat fiducial points.
//!
//! Systolic peaks are local maxima above an adaptive threshold: the rolling
//! minimum of a centered 2 s window plus half the 90th percentile of the
//! local-peak heights in that window. Peaks closer than the 0.24 s refractory period compete and
//! the larger one survives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{derivative_slice, Segment};

pub const REFRACTORY_S: f64 = 0.24;
pub const MIN_INTERVAL_S: f64 = 0.24;
pub const MAX_INTERVAL_S: f64 = 3.0;
pub const THRESHOLD_WINDOW_S: f64 = 2.0;
pub const THRESHOLD_PERCENTILE: f64 = 0.9;
pub const MIN_BEAT_S: f64 = 0.3;
pub const MIN_PEAKS: usize = 3;

/// Peak-to-peak interval series.
///
/// `peak_indices` holds every detected systolic peak; `intervals` holds the
/// spacings of consecutive peaks that pass the 0.24-3.0 s plausibility bound,
/// so `intervals.len() == peak_indices.len() - 1` unless a gap was dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PPSeries {
    pub intervals: Vec<f64>,
    pub peak_indices: Vec<usize>,
}

impl PPSeries {
    /// Wraps a bare interval series (seconds); peak positions are left empty.
    pub fn from_intervals(intervals: Vec<f64>) -> Result<Self> {
        if let Some(v) = intervals.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!("interval {v} must be finite and > 0")));
        }
        Ok(PPSeries {
            intervals,
            peak_indices: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

/// Sample index and amplitude of a landmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub idx: usize,
    pub amp: f64,
}

/// Landmarks of one beat. Pulse amplitudes (`p1`..`p3`) are raw sample
/// values; `a`..`e` are values of the second derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseFiducials {
    pub onset_idx: usize,
    pub p1: Point,
    pub p2: Option<Point>,
    pub p3: Option<Point>,
    /// Dicrotic notch: first upward zero crossing of the first derivative after P1.
    pub notch_idx: Option<usize>,
    pub end_idx: usize,
    pub a: Point,
    pub b: Point,
    pub c: Option<Point>,
    pub d: Option<Point>,
    pub e: Option<Point>,
}

fn is_local_max(x: &[f64], i: usize) -> bool {
    x[i] > x[i - 1] && x[i] >= x[i + 1]
}

/// Threshold at sample `i`: window minimum plus half the 90th percentile of
/// local-maximum heights (above that minimum) inside the centered window.
fn threshold_at(x: &[f64], maxima: &[usize], i: usize, half: usize, buf: &mut Vec<f64>) -> f64 {
    let lo = i.saturating_sub(half);
    let hi = (i + half + 1).min(x.len());
    let min = x[lo..hi].iter().copied().fold(f64::INFINITY, f64::min);
    let first = maxima.partition_point(|&m| m < lo);
    buf.clear();
    buf.extend(maxima[first..].iter().take_while(|&&m| m < hi).map(|&m| x[m] - min));
    if buf.is_empty() {
        return f64::INFINITY;
    }
    let k = (THRESHOLD_PERCENTILE * (buf.len() - 1) as f64).round() as usize;
    let (_, p90, _) = buf.select_nth_unstable_by(k, f64::total_cmp);
    min + 0.5 * *p90
}

pub fn detect_peaks(x: &[f64], fs: f64) -> Vec<usize> {
    if x.len() < 3 {
        return Vec::new();
    }
    let half = ((THRESHOLD_WINDOW_S * fs) / 2.0).round() as usize;
    let maxima: Vec<usize> = (1..x.len() - 1).filter(|&i| is_local_max(x, i)).collect();
    let refractory = REFRACTORY_S * fs;
    let mut buf = Vec::new();
    let mut peaks: Vec<usize> = Vec::new();
    for &i in &maxima {
        if x[i] <= threshold_at(x, &maxima, i, half, &mut buf) {
            continue;
        }
        match peaks.last_mut() {
            Some(last) if ((i - *last) as f64) < refractory => {
                if x[i] > x[*last] {
                    *last = i;
                }
            }
            _ => peaks.push(i),
        }
    }
    peaks
}

pub fn detect_pulses_slice(x: &[f64], fs: f64) -> Result<PPSeries> {
    let peaks = detect_peaks(x, fs);
    if peaks.len() < MIN_PEAKS {
        return Err(Error::InsufficientBeats {
            found: peaks.len(),
            needed: MIN_PEAKS,
        });
    }
    let intervals = peaks
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / fs)
        .filter(|iv| (MIN_INTERVAL_S..=MAX_INTERVAL_S).contains(iv))
        .collect();
    Ok(PPSeries {
        intervals,
        peak_indices: peaks,
    })
}

pub fn detect_pulses(seg: &Segment) -> Result<PPSeries> {
    detect_pulses_slice(&seg.samples, seg.fs)
}

/// Signal plus derivatives, computed once per segment.
pub struct BeatContext<'a> {
    pub x: &'a [f64],
    pub fs: f64,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl<'a> BeatContext<'a> {
    pub fn new(x: &'a [f64], fs: f64) -> Result<Self> {
        Ok(BeatContext {
            x,
            fs,
            d1: derivative_slice(x, fs, 1)?,
            d2: derivative_slice(x, fs, 2)?,
        })
    }

    fn argmin(&self, lo: usize, hi: usize) -> usize {
        (lo..=hi)
            .min_by(|&i, &j| self.x[i].total_cmp(&self.x[j]))
            .unwrap_or(lo)
    }

    /// Fiducials of the beat whose systolic peak is `peaks[beat]`. Boundary
    /// beats (first and last peak) have no complete window.
    pub fn fiducials(&self, peaks: &[usize], beat: usize) -> Result<PulseFiducials> {
        if beat == 0 || beat + 1 >= peaks.len() {
            return Err(Error::DegenerateBeat(format!(
                "beat {beat} has no complete window among {} peaks",
                peaks.len()
            )));
        }
        let peak = peaks[beat];
        let onset = self.argmin(peaks[beat - 1], peak);
        let end = self.argmin(peak, peaks[beat + 1]);
        self.fiducials_in_window(onset, peak, end)
    }

    pub fn fiducials_in_window(&self, onset: usize, peak: usize, end: usize) -> Result<PulseFiducials> {
        let x = self.x;
        if end >= x.len() || !(onset < peak && peak < end) {
            return Err(Error::DegenerateBeat(format!(
                "landmark order violated: onset {onset}, peak {peak}, end {end}"
            )));
        }
        if ((end - onset) as f64) / self.fs < MIN_BEAT_S {
            return Err(Error::DegenerateBeat(format!(
                "beat window {:.3} s shorter than {MIN_BEAT_S} s",
                (end - onset) as f64 / self.fs
            )));
        }
        let d1 = &self.d1;
        let d2 = &self.d2;
        let pt = |i: usize| Point { idx: i, amp: x[i] };

        let notch = (peak + 1..end).find(|&i| d1[i - 1] < 0.0 && d1[i] >= 0.0);
        let p3 = notch.and_then(|n| {
            (n + 1..end)
                .find(|&i| d1[i - 1] > 0.0 && d1[i] <= 0.0)
                .map(|i| if x[i - 1] > x[i] { i - 1 } else { i })
                .map(pt)
        });
        let limit = notch.unwrap_or(end);
        let p2 = (peak + 2..limit)
            .find(|&i| (d1[i - 1] > 0.0 && d1[i] <= 0.0) || (d2[i - 1] > 0.0 && d2[i] <= 0.0))
            .map(pt);

        // alternating extrema of the second derivative: a max, b min, c max, ...
        let mut waves: Vec<Point> = Vec::with_capacity(5);
        let mut want_max = true;
        for i in onset + 1..end {
            if waves.len() == 5 {
                break;
            }
            let is_ext = if want_max {
                d2[i] > d2[i - 1] && d2[i] >= d2[i + 1]
            } else {
                d2[i] < d2[i - 1] && d2[i] <= d2[i + 1]
            };
            if is_ext {
                waves.push(Point { idx: i, amp: d2[i] });
                want_max = !want_max;
            }
        }
        if waves.len() < 2 {
            return Err(Error::DegenerateBeat(
                "second derivative lacks a and b waves".into(),
            ));
        }
        let get = |k: usize| waves.get(k).copied();
        Ok(PulseFiducials {
            onset_idx: onset,
            p1: pt(peak),
            p2,
            p3,
            notch_idx: notch,
            end_idx: end,
            a: waves[0],
            b: waves[1],
            c: get(2),
            d: get(3),
            e: get(4),
        })
    }
}

pub fn locate_fiducials(seg: &Segment, pp: &PPSeries, beat: usize) -> Result<PulseFiducials> {
    BeatContext::new(&seg.samples, seg.fs)?.fiducials(&pp.peak_indices, beat)
}
