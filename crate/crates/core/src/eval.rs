//! Evaluation metrics: ROC/AUROC, event-window TPR/FPR, FPR-calibrated
//! thresholds and bootstrap intervals.

use serde::{Deserialize, Serialize};

use crate::datagen::EventLabel;
use crate::rng::SeededRng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Records scoring at or above this value are called anomalous.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auroc: f64,
}

/// Sweeps every distinct score from the top down; equal scores move the
/// curve in one diagonal step. AUROC is the trapezoidal area.
pub fn roc_auc(scores: &[f64], anomalous: &[bool]) -> Result<RocCurve> {
    if scores.len() != anomalous.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: anomalous.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores contain NaN".into()));
    }
    let positives = anomalous.iter().filter(|&&a| a).count();
    let negatives = anomalous.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidInput(
            "ROC needs at least one anomalous and one normal record".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if anomalous[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("anchored");
        let p = RocPoint {
            threshold: s,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        };
        area += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auroc: area })
}

/// Window and exclusions for event-based evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventWindowConfig {
    /// Bins before an event's start and after its end that still count as the event.
    pub window: usize,
    /// Half-open `[start, end)` spans left out of the FPR (maintenance and the like).
    pub mask: Vec<(usize, usize)>,
}

impl Default for EventWindowConfig {
    fn default() -> Self {
        Self {
            window: 5,
            mask: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMetrics {
    /// Detected events over all events; 1.0 when there are no events.
    pub tpr: f64,
    /// Exceeding bins over normal bins; 0.0 when there are no normal bins.
    pub fpr: f64,
    pub zero_events: bool,
    pub detected: Vec<bool>,
    pub normal_bins: usize,
    pub false_alarms: usize,
}

fn event_span(e: &EventLabel, window: usize) -> (usize, usize) {
    let start = e.timestamp.saturating_sub(window);
    let end = e.timestamp + e.duration.max(1) + window;
    (start, end)
}

/// An event is detected if any bin in its window scores above `threshold`.
/// FPR counts bins outside every event window and every masked span.
pub fn event_tpr_fpr(
    scores: &[f64],
    threshold: f64,
    events: &[EventLabel],
    cfg: &EventWindowConfig,
) -> EventMetrics {
    let spans: Vec<(usize, usize)> = events.iter().map(|e| event_span(e, cfg.window)).collect();
    let detected: Vec<bool> = spans
        .iter()
        .map(|&(a, b)| (a..b.min(scores.len())).any(|t| scores[t] > threshold))
        .collect();
    let mut normal_bins = 0;
    let mut false_alarms = 0;
    for (t, &s) in scores.iter().enumerate() {
        let excluded = spans.iter().chain(&cfg.mask).any(|&(a, b)| t >= a && t < b);
        if !excluded {
            normal_bins += 1;
            if s > threshold {
                false_alarms += 1;
            }
        }
    }
    let hits = detected.iter().filter(|&&d| d).count();
    EventMetrics {
        tpr: if events.is_empty() {
            1.0
        } else {
            hits as f64 / events.len() as f64
        },
        fpr: if normal_bins == 0 {
            0.0
        } else {
            false_alarms as f64 / normal_bins as f64
        },
        zero_events: events.is_empty(),
        detected,
        normal_bins,
        false_alarms,
    }
}

/// Bins that are outside every event window and mask span.
pub fn normal_bin_mask(len: usize, events: &[EventLabel], cfg: &EventWindowConfig) -> Vec<bool> {
    let spans: Vec<(usize, usize)> = events.iter().map(|e| event_span(e, cfg.window)).collect();
    (0..len)
        .map(|t| !spans.iter().chain(&cfg.mask).any(|&(a, b)| t >= a && t < b))
        .collect()
}

/// Smallest order statistic `t` of `normal_scores` such that the fraction of
/// scores strictly above `t` is at most `target`. Target 0 yields the value
/// just above the maximum; target 1 yields negative infinity.
pub fn threshold_for_fpr(normal_scores: &[f64], target: f64) -> Result<f64> {
    if normal_scores.is_empty() {
        return Err(Error::EmptyData("no normal scores".into()));
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::InvalidInput(format!("target FPR {target} outside [0, 1]")));
    }
    if normal_scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores contain NaN".into()));
    }
    let mut sorted = normal_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if target == 0.0 {
        return Ok(sorted[n - 1].next_up());
    }
    let allowed = ((target * n as f64) + 1e-9).floor() as usize;
    if allowed >= n {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(sorted[n - allowed - 1])
}

/// Mean with a percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// 95% percentile bootstrap interval of the mean.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, seed: u64) -> Interval {
    let n = values.len();
    if n == 0 {
        return Interval {
            mean: f64::NAN,
            low: f64::NAN,
            high: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = SeededRng::new(seed);
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| values[rng.below(n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let pick = |q: f64| means[((q * (means.len() - 1) as f64).round() as usize).min(means.len() - 1)];
    Interval {
        mean,
        low: pick(0.025),
        high: pick(0.975),
    }
}
