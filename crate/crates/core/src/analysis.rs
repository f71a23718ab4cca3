//! Post-processing of run results: distance binning, logistic curve fitting
//! and sweep summary tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::CampaignResult;
use crate::scenario::Protocol;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub p1: f64,
    pub p2: f64,
    /// Sum of squared residuals at the solution.
    pub residual: f64,
    pub iterations: u32,
    pub converged: bool,
}

/// Loss model `1 / (1 + exp(p1 - p2 d))`.
pub fn logistic_loss(p1: f64, p2: f64, d: f64) -> f64 {
    1.0 / (1.0 + (p1 - p2 * d).exp())
}

const FIT_INIT: (f64, f64) = (8.0, 0.02);
const FIT_MAX_ITER: u32 = 200;
const FIT_REL_TOL: f64 = 1e-9;
const FIT_GRAD_TOL: f64 = 1e-8;

fn cost(points: &[(f64, f64)], p1: f64, p2: f64) -> f64 {
    points.iter().map(|&(d, y)| (logistic_loss(p1, p2, d) - y).powi(2)).sum()
}

/// Levenberg-Marquardt least-squares fit of the logistic loss model.
///
/// Distances are rescaled internally so both parameters have comparable
/// magnitude. Fewer than two distinct distances gives `converged = false`.
pub fn fit_logistic(points: &[(f64, f64)]) -> FitResult {
    let (mut p1, mut p2) = FIT_INIT;
    let distinct = {
        let mut ds: Vec<f64> = points.iter().map(|p| p.0).filter(|d| d.is_finite()).collect();
        ds.sort_by(f64::total_cmp);
        ds.dedup();
        ds.len()
    };
    if distinct < 2 {
        return FitResult { p1, p2, residual: cost(points, p1, p2), iterations: 0, converged: false };
    }
    let scale = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max).max(1.0);
    // work in q2 = p2 * scale so that the Jacobian columns are balanced
    let mut q2 = p2 * scale;
    let scaled: Vec<(f64, f64)> = points.iter().map(|&(d, y)| (d / scale, y)).collect();
    let mut c = cost(&scaled, p1, q2);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < FIT_MAX_ITER {
        iterations += 1;
        // normal equations J^T J and J^T r for r = model - y
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y) in &scaled {
            let f = logistic_loss(p1, q2, x);
            let s = f * (1.0 - f);
            let (j1, j2) = (-s, s * x);
            let r = f - y;
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
            g1 += j1 * r;
            g2 += j2 * r;
        }
        if g1.hypot(g2) < FIT_GRAD_TOL {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let (b11, b22) = (a11 * (1.0 + lambda), a22 * (1.0 + lambda));
            let det = b11 * b22 - a12 * a12;
            if det.abs() > 1e-300 {
                let d1 = -(b22 * g1 - a12 * g2) / det;
                let d2 = -(b11 * g2 - a12 * g1) / det;
                let trial = cost(&scaled, p1 + d1, q2 + d2);
                if trial.is_finite() && trial <= c {
                    let rel = (c - trial) / c.max(f64::MIN_POSITIVE);
                    p1 += d1;
                    q2 += d2;
                    c = trial;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if rel < FIT_REL_TOL || c < 1e-30 {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: stationary to machine precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    p2 = q2 / scale;
    // a fit whose transition lies far outside the data cannot pin down p1
    let identifiable = p1.is_finite() && p2.is_finite() && p2.abs() > 1e-9 && {
        let mid = p1 / p2;
        let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.0), h.max(p.0)));
        let span = hi - lo;
        mid > lo - 2.0 * span && mid < hi + 2.0 * span
    };
    FitResult { p1, p2, residual: cost(points, p1, p2), iterations, converged: converged && identifiable }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub center: f64,
    pub mean_dlr: f64,
    pub count: usize,
}

/// Groups `(distance, dlr)` samples into left-closed bins `[k w, (k+1) w)`.
pub fn bin_dlr_by_distance(samples: &[(f64, f64)], bin_width: f64) -> Vec<DistanceBin> {
    assert!(bin_width > 0.0, "bin width must be positive");
    let mut bins: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for &(d, dlr) in samples {
        let e = bins.entry((d / bin_width).floor() as i64).or_insert((0.0, 0));
        e.0 += dlr;
        e.1 += 1;
    }
    bins.into_iter()
        .map(|(k, (sum, n))| DistanceBin {
            center: (k as f64 + 0.5) * bin_width,
            mean_dlr: sum / n as f64,
            count: n,
        })
        .collect()
}

/// One sweep configuration and its campaign outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub protocol: Protocol,
    pub hello_interval: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub repetitions: u32,
    pub mean_outage: f64,
    pub mean_goodput: f64,
}

impl SweepEntry {
    pub fn from_campaign(protocol: Protocol, hi: f64, alpha: f64, beta: f64, gamma: f64, c: &CampaignResult) -> Self {
        SweepEntry {
            protocol,
            hello_interval: hi,
            alpha,
            beta,
            gamma,
            repetitions: c.repetitions,
            mean_outage: c.mean_outage,
            mean_goodput: c.mean_goodput,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub protocol: Protocol,
    pub hello_interval: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub repetitions: u32,
    pub mean_outage: f64,
    pub mean_goodput: f64,
    /// `1 - outage / baseline outage` against OLSR with the same HI and alpha.
    pub outage_reduction: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no OLSR baseline with hello interval {hello_interval} and alpha {alpha}")]
    MissingBaseline { hello_interval: f64, alpha: f64 },
}

/// Relative reduction of `outage` against `baseline`; 0 when both are zero.
pub fn relative_reduction(outage: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        if outage == 0.0 { 0.0 } else { f64::NEG_INFINITY }
    } else {
        1.0 - outage / baseline
    }
}

/// One row per entry, with the reduction against the matched OLSR baseline.
pub fn sweep_table(entries: &[SweepEntry]) -> Result<Vec<SweepRow>, AnalysisError> {
    entries
        .iter()
        .map(|e| {
            let base = entries
                .iter()
                .find(|b| b.protocol == Protocol::Olsr && b.hello_interval == e.hello_interval && b.alpha == e.alpha)
                .ok_or(AnalysisError::MissingBaseline { hello_interval: e.hello_interval, alpha: e.alpha })?;
            Ok(SweepRow {
                protocol: e.protocol,
                hello_interval: e.hello_interval,
                alpha: e.alpha,
                beta: e.beta,
                gamma: e.gamma,
                repetitions: e.repetitions,
                mean_outage: e.mean_outage,
                mean_goodput: e.mean_goodput,
                outage_reduction: relative_reduction(e.mean_outage, base.mean_outage),
            })
        })
        .collect()
}
