//! Sparse contribution degrees for detected anomalies.
//!
//! For a normalized record `x` flagged by a detector, the contribution
//! degree `eta` solves
//!
//! ```text
//! min_eta  MSE(x - eta) + lambda * ||eta||_1
//! ```
//!
//! approximately, by proximal gradient steps (gradient step on the MSE,
//! soft-thresholding for the L1 term). Iteration stops as soon as the amended
//! record `x - eta` scores below the detector threshold. Several `lambda`
//! values are tried from largest to smallest and the first (sparsest) one
//! that brings the score under the threshold wins.

use std::collections::BTreeSet;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::detector::AeDetector;
use crate::neuralnet::DenseNetwork;
use crate::{Error, Result};

/// A smooth anomaly score over normalized inputs with its input gradient.
pub trait SmoothScore {
    fn dim(&self) -> usize;
    fn score(&self, z: ArrayView1<f64>) -> Result<f64>;
    fn score_and_grad(&self, z: ArrayView1<f64>) -> Result<(f64, Array1<f64>)>;
}

impl SmoothScore for DenseNetwork {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn score(&self, z: ArrayView1<f64>) -> Result<f64> {
        self.reconstruction_mse(z)
    }

    fn score_and_grad(&self, z: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        self.mse_and_grad_input(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum StepRule {
    Fixed { step: f64 },
    /// Each iteration starts from twice the last accepted step and halves until
    /// the quadratic upper bound of the smooth part holds.
    Backtracking { initial: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionConfig {
    pub lambdas: Vec<f64>,
    pub step: StepRule,
    pub max_iters: usize,
    /// Score level that ends the iteration; `None` uses the detector threshold.
    pub mse_stop: Option<f64>,
    /// Stop early once no coordinate of `eta` moves by more than this.
    pub tolerance: f64,
}

impl Default for ContributionConfig {
    fn default() -> Self {
        Self {
            lambdas: default_lambdas(),
            step: StepRule::Backtracking { initial: 1.0 },
            max_iters: 500,
            mse_stop: None,
            tolerance: 1e-12,
        }
    }
}

/// Eight values log-spaced over `[1e-4, 1e-1]`, largest first.
pub fn default_lambdas() -> Vec<f64> {
    (0..8).map(|k| 10f64.powf(-1.0 - 3.0 * k as f64 / 7.0)).collect()
}

impl ContributionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::Config("contribution.lambdas must not be empty".into()));
        }
        if self.lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Config("contribution.lambdas must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("contribution.max_iters must be at least 1".into()));
        }
        match self.step {
            StepRule::Fixed { step } | StepRule::Backtracking { initial: step } if !(step > 0.0) => {
                Err(Error::Config("contribution step must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Outcome of an estimation. `eta` is in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionResult {
    pub eta: Array1<f64>,
    pub lambda_used: f64,
    pub iterations: usize,
    pub final_mse: f64,
    /// The amended record scored below the stop level.
    pub converged: bool,
}

/// `sign(v) * max(|v| - t, 0)` element-wise.
pub fn soft_threshold(v: ArrayView1<f64>, t: f64) -> Array1<f64> {
    v.mapv(|x| shrink(x, t))
}

#[inline]
fn shrink(x: f64, t: f64) -> f64 {
    let m = x.abs() - t;
    if m > 0.0 {
        m.copysign(x)
    } else {
        0.0
    }
}

/// Proximal-gradient estimate for one lambda, starting from `eta = 0`.
pub fn solve_for_lambda<S: SmoothScore + ?Sized>(
    model: &S,
    x: ArrayView1<f64>,
    lambda: f64,
    stop: f64,
    cfg: &ContributionConfig,
) -> Result<ContributionResult> {
    let dim = x.len();
    if dim != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: dim,
        });
    }
    let mut eta = Array1::<f64>::zeros(dim);
    let mut current = model.score(x)?;
    let (mut step, backtrack) = match cfg.step {
        StepRule::Fixed { step } => (step, false),
        StepRule::Backtracking { initial } => (initial, true),
    };
    let mut iterations = 0;
    let non_finite = |iteration| Error::NonFinite { lambda, iteration };

    while iterations < cfg.max_iters && !(current < stop) {
        iterations += 1;
        let amended = &x - &eta;
        let (value, grad_x) = model.score_and_grad(amended.view())?;
        // d/d(eta) MSE(x - eta) = -grad_x
        let grad_eta = -grad_x;
        if !value.is_finite() || grad_eta.iter().any(|g| !g.is_finite()) {
            return Err(non_finite(iterations));
        }

        let mut t = step;
        let (candidate, cand_value) = loop {
            let moved = &eta - &(&grad_eta * t);
            let cand = soft_threshold(moved.view(), t * lambda);
            let cand_value = model.score((&x - &cand).view())?;
            if !backtrack {
                break (cand, cand_value);
            }
            let d = &cand - &eta;
            let bound = value + grad_eta.dot(&d) + d.dot(&d) / (2.0 * t);
            if cand_value <= bound || t < 1e-300 {
                break (cand, cand_value);
            }
            t *= 0.5;
        };
        if !cand_value.is_finite() || candidate.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(iterations));
        }
        debug_assert!(
            !backtrack
                || cand_value + lambda * l1(&candidate)
                    <= value + lambda * l1(&eta) + 1e-12 * (1.0 + value.abs()),
            "composite objective increased"
        );
        let moved = candidate
            .iter()
            .zip(&eta)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        eta = candidate;
        current = cand_value;
        if backtrack {
            step = t * 2.0;
        }
        if moved <= cfg.tolerance {
            break;
        }
    }
    Ok(ContributionResult {
        eta,
        lambda_used: lambda,
        iterations,
        final_mse: current,
        converged: current < stop,
    })
}

fn l1(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Runs the lambda sweep on a normalized record against any smooth score.
pub fn estimate_with<S: SmoothScore + ?Sized>(
    model: &S,
    x: ArrayView1<f64>,
    stop: f64,
    cfg: &ContributionConfig,
) -> Result<ContributionResult> {
    cfg.validate()?;
    let mut lambdas = cfg.lambdas.clone();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let entry = model.score(x)?;
    if entry <= stop {
        return Ok(ContributionResult {
            eta: Array1::zeros(x.len()),
            lambda_used: lambdas[0],
            iterations: 0,
            final_mse: entry,
            converged: true,
        });
    }
    let mut best: Option<ContributionResult> = None;
    for &lambda in &lambdas {
        let result = solve_for_lambda(model, x, lambda, stop, cfg)?;
        if result.converged {
            return Ok(result);
        }
        if best.as_ref().is_none_or(|b| result.final_mse < b.final_mse) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one lambda"))
}

fn stop_level(det: &AeDetector, cfg: &ContributionConfig) -> f64 {
    cfg.mse_stop.unwrap_or(det.threshold)
}

/// Contribution degree of a raw record for a plain AE detector.
pub fn estimate_contribution(det: &AeDetector, x: ArrayView1<f64>, cfg: &ContributionConfig) -> Result<ContributionResult> {
    let z = det.normalizer.normalize(x)?;
    estimate_with(&det.net, z.view(), stop_level(det, cfg), cfg)
}

/// Same iteration with `lambda = 0`: plain gradient descent on the MSE.
pub fn contribution_without_l1(det: &AeDetector, x: ArrayView1<f64>, cfg: &ContributionConfig) -> Result<ContributionResult> {
    let z = det.normalizer.normalize(x)?;
    let stop = stop_level(det, cfg);
    let entry = det.net.score(z.view())?;
    if entry <= stop {
        return Ok(ContributionResult {
            eta: Array1::zeros(z.len()),
            lambda_used: 0.0,
            iterations: 0,
            final_mse: entry,
            converged: true,
        });
    }
    solve_for_lambda(&det.net, z.view(), 0.0, stop, cfg)
}

/// One entry of a ranking by absolute value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedDimension {
    pub index: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopDimensions {
    pub entries: Vec<RankedDimension>,
    /// Every listed magnitude is zero.
    pub no_contributors: bool,
    /// The list had to be padded with zero-valued dimensions.
    pub includes_zeros: bool,
}

/// The `k` largest `|v_i|`, ties broken by ascending index.
pub fn top_k_dimensions(values: ArrayView1<f64>, k: usize) -> TopDimensions {
    let mut ranked: Vec<RankedDimension> = values
        .iter()
        .enumerate()
        .map(|(index, v)| RankedDimension {
            index,
            magnitude: v.abs(),
        })
        .collect();
    ranked.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude).then(a.index.cmp(&b.index)));
    ranked.truncate(k);
    let zeros = ranked.iter().filter(|r| r.magnitude == 0.0).count();
    TopDimensions {
        no_contributors: !ranked.is_empty() && zeros == ranked.len(),
        includes_zeros: zeros > 0,
        entries: ranked,
    }
}

/// Dimensions whose absolute value exceeds the mean absolute value.
pub fn estimated_dimension_set(values: ArrayView1<f64>) -> BTreeSet<usize> {
    if values.is_empty() {
        return BTreeSet::new();
    }
    let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > mean_abs)
        .map(|(i, _)| i)
        .collect()
}

/// `(recall, precision)`; an empty estimate has precision 0, an empty truth has recall 1.
pub fn recall_precision(estimated: &BTreeSet<usize>, actual: &BTreeSet<usize>) -> (f64, f64) {
    let hits = estimated.intersection(actual).count() as f64;
    let recall = if actual.is_empty() {
        1.0
    } else {
        hits / actual.len() as f64
    };
    let precision = if estimated.is_empty() {
        0.0
    } else {
        hits / estimated.len() as f64
    };
    (recall, precision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::tests::map_detector;
    use ndarray::{array, Array2};

    fn unit_train(n: usize) -> Array2<f64> {
        let mut t = Array2::zeros((2, n));
        t.row_mut(1).fill(1.0);
        t
    }

    /// Detector whose reconstruction is identically zero, so MSE(z) = ||z||^2 / N.
    fn zero_map(n: usize, threshold: f64) -> AeDetector {
        map_detector(Array2::zeros((n, n)), unit_train(n)).with_threshold(threshold)
    }

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn soft_threshold_cases() {
        let v = array![1.2, -0.3, 0.5];
        let out = soft_threshold(v.view(), 0.5);
        assert!((out[0] - 0.7).abs() < 1e-15);
        assert_eq!(out[1], 0.0);
        assert_eq!(out[2], 0.0);
        assert_eq!(soft_threshold(v.view(), 0.0), v);
        assert!(soft_threshold(v.view(), 1.2).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn below_threshold_returns_zero() {
        let det = zero_map(3, 1.0);
        let r = estimate_contribution(&det, array![0.1, 0.2, 0.3].view(), &ContributionConfig::default()).unwrap();
        assert!(r.eta.iter().all(|&v| v == 0.0));
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
    }

    #[test]
    fn zero_map_closed_form() {
        let n = 4;
        let det = zero_map(n, 1e-300);
        let x = array![0.9, -0.4, 0.05, 0.6];
        let lambda = 0.1;
        let cfg = ContributionConfig {
            lambdas: vec![lambda],
            max_iters: 10_000,
            ..Default::default()
        };
        let r = estimate_contribution(&det, x.view(), &cfg).unwrap();
        let expected = soft_threshold(x.view(), lambda * n as f64 / 2.0);
        for (a, b) in r.eta.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn positive_input_gives_non_negative_eta() {
        let det = zero_map(5, 1e-4);
        let x = array![0.8, 0.0, 0.3, 0.9, 0.1];
        let r = estimate_contribution(&det, x.view(), &ContributionConfig::default()).unwrap();
        assert!(r.eta.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn largest_successful_lambda_wins() {
        let det = zero_map(4, 0.01);
        let x = array![1.0, 0.0, 0.0, 0.0];
        let cfg = ContributionConfig::default();
        let r = estimate_contribution(&det, x.view(), &cfg).unwrap();
        assert!(r.converged);
        // the residual must end below the stop level and the winner is the first converging lambda
        assert!(r.final_mse < 0.01);
        let mut sorted = cfg.lambdas.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for &larger in sorted.iter().filter(|&&l| l > r.lambda_used) {
            let attempt = solve_for_lambda(&det.net, x.view(), larger, 0.01, &cfg).unwrap();
            assert!(!attempt.converged);
        }
    }

    #[test]
    fn unreachable_stop_returns_best_unconverged() {
        // the stop level can never be met, so every lambda runs to stationarity
        let det = zero_map(3, 0.0);
        let cfg = ContributionConfig {
            lambdas: vec![0.5, 0.05],
            max_iters: 200,
            mse_stop: Some(-1.0),
            ..Default::default()
        };
        let r = estimate_contribution(&det, array![1.0, 1.0, 1.0].view(), &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.lambda_used, 0.05);
    }

    #[test]
    fn without_l1_reaches_threshold_along_gradient_path() {
        let tau = 0.05;
        let det = zero_map(4, tau);
        let x = array![0.9, 0.8, 0.7, 0.6];
        let r = contribution_without_l1(&det, x.view(), &ContributionConfig::default()).unwrap();
        assert!(r.converged);
        let resid = &x - &r.eta;
        assert!(resid.dot(&resid) / 4.0 < tau);
        // gradient descent on ||x - eta||^2 moves eta along x: eta stays parallel to x
        let ratio = r.eta[0] / x[0];
        for (e, xi) in r.eta.iter().zip(&x) {
            assert!((e / xi - ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn without_l1_below_threshold_is_zero() {
        let det = zero_map(2, 10.0);
        let r = contribution_without_l1(&det, array![0.5, 0.5].view(), &ContributionConfig::default()).unwrap();
        assert!(r.eta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fixed_step_also_converges() {
        let det = zero_map(3, 1e-300);
        let cfg = ContributionConfig {
            lambdas: vec![0.05],
            step: StepRule::Fixed { step: 1.0 },
            max_iters: 5000,
            ..Default::default()
        };
        let x = array![0.5, -0.2, 0.01];
        let r = estimate_contribution(&det, x.view(), &cfg).unwrap();
        let expected = soft_threshold(x.view(), 0.05 * 1.5);
        for (a, b) in r.eta.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_input_reports_lambda_and_iteration() {
        let det = zero_map(2, 1e-3);
        let err = estimate_with(&det.net, array![f64::INFINITY, 1.0].view(), 1e-3, &ContributionConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { iteration: 1, .. }), "{err:?}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = ContributionConfig::default();
        cfg.lambdas.clear();
        assert!(cfg.validate().is_err());
        let cfg = ContributionConfig {
            lambdas: vec![-1.0],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ContributionConfig {
            max_iters: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_grid() {
        let l = default_lambdas();
        assert_eq!(l.len(), 8);
        assert!((l[0] - 1e-1).abs() < 1e-15);
        assert!((l[7] - 1e-4).abs() < 1e-15);
        assert!(l.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn top_k_cases() {
        let t = top_k_dimensions(array![0.0, -3.0, 2.0].view(), 2);
        assert_eq!(
            t.entries,
            vec![
                RankedDimension { index: 1, magnitude: 3.0 },
                RankedDimension { index: 2, magnitude: 2.0 }
            ]
        );
        assert!(!t.no_contributors);
        let z = top_k_dimensions(array![0.0, 0.0, 0.0, 0.0].view(), 3);
        assert_eq!(z.entries.len(), 3);
        assert!(z.no_contributors);
        assert_eq!(z.entries.iter().map(|e| e.index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(top_k_dimensions(array![1.0, 2.0].view(), 5).entries.len(), 2);
    }

    #[test]
    fn estimated_set_cases() {
        assert_eq!(estimated_dimension_set(array![4.0, 0.0, 0.0, 0.0].view()), set(&[0]));
        assert!(estimated_dimension_set(array![2.0, 2.0, 2.0, 2.0].view()).is_empty());
        assert_eq!(estimated_dimension_set(array![3.0, 1.0, 0.0, 0.0].view()), set(&[0]));
        assert_eq!(estimated_dimension_set(array![-3.0, 1.0, 0.0, 0.0].view()), set(&[0]));
    }

    #[test]
    fn recall_precision_cases() {
        let (r, p) = recall_precision(&set(&[1, 2, 3]), &set(&[2, 3, 4]));
        assert!((r - 2.0 / 3.0).abs() < 1e-15 && (p - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(recall_precision(&set(&[]), &set(&[1])), (0.0, 0.0));
        assert_eq!(recall_precision(&set(&[5, 6]), &set(&[5, 6])), (1.0, 1.0));
    }
}
