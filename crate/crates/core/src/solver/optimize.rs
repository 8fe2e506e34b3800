use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Criterion;

use super::{criterion_value, PenalizedSystem, SmoothingParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    /// Search interval for log10 λ.
    pub log_lambda_bracket: (f64, f64),
    /// Golden-section termination width (log10 units).
    pub tolerance: f64,
    /// Points in the coarse scan that locates the golden-section bracket.
    pub coarse_points: usize,
    /// Cyclic coordinate descent over per-term weights and the ridge weight.
    pub tune_term_weights: bool,
    pub max_cycles: usize,
    /// Stop cycling when a cycle improves the criterion by less than this (relative).
    pub rel_improvement: f64,
    /// Half-width (log10 units) of the bracket around each weight in a cycle.
    pub weight_span: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            log_lambda_bracket: (-8.0, 2.0),
            tolerance: 1e-3,
            coarse_points: 21,
            tune_term_weights: true,
            max_cycles: 25,
            rel_improvement: 1e-6,
            weight_span: 2.0,
        }
    }
}

/// Golden-section minimization of `f` on `[lo, hi]`; returns `(x, f(x))`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a) > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Coarse scan over `[lo, hi]` followed by golden section in the cell pair
/// around the best scan point.
fn scan_then_golden(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, points: usize, tol: f64) -> (f64, f64) {
    let points = points.max(3);
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = (lo, f64::INFINITY);
    for i in 0..points {
        let x = lo + step * i as f64;
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    if !best.1.is_finite() {
        return best;
    }
    let a = (best.0 - step).max(lo);
    let b = (best.0 + step).min(hi);
    let refined = golden_section(&mut f, a, b, tol);
    if refined.1 <= best.1 {
        refined
    } else {
        best
    }
}

fn score(system: &PenalizedSystem, params: &SmoothingParams, criterion: Criterion) -> f64 {
    match criterion_value(system, params, criterion) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

/// Choose λ (and, when enabled, the per-term weights θ and the ridge weight
/// λ_b) by minimizing the GCV or GML criterion.
pub fn optimize_params(
    system: &PenalizedSystem,
    criterion: Criterion,
    options: &OptimizerOptions,
) -> Result<SmoothingParams> {
    let (lo, hi) = options.log_lambda_bracket;
    let mut params = SmoothingParams::initial(system, lo);
    if system.penalized_terms() == 0 && !system.has_random_intercept() {
        // Nothing is penalized; λ has no effect.
        params.log_lambda = 0.0;
        return Ok(params);
    }

    let search_lambda = |params: &mut SmoothingParams| -> f64 {
        let mut trial = params.clone();
        let (x, v) = scan_then_golden(
            |x| {
                trial.log_lambda = x;
                score(system, &trial, criterion)
            },
            lo,
            hi,
            options.coarse_points,
            options.tolerance,
        );
        params.log_lambda = x;
        v
    };

    let mut best = search_lambda(&mut params);
    if !best.is_finite() {
        return Err(Error::Optimization(
            "criterion is not finite anywhere on the lambda bracket".into(),
        ));
    }
    if !options.tune_term_weights {
        return Ok(params);
    }

    let n_weights = system.penalized_terms() + usize::from(system.has_random_intercept());
    for _ in 0..options.max_cycles {
        let cycle_start = best;
        for w in 0..n_weights {
            let current = weight(&params, w);
            let mut trial = params.clone();
            let (x, v) = golden_section(
                |x| {
                    set_weight(&mut trial, w, x);
                    score(system, &trial, criterion)
                },
                current - options.weight_span,
                current + options.weight_span,
                options.tolerance,
            );
            if v < best {
                set_weight(&mut params, w, x);
                best = v;
            }
        }
        let mut trial = params.clone();
        let v = search_lambda(&mut trial);
        if v < best {
            params = trial;
            best = v;
        }
        if cycle_start - best < options.rel_improvement * cycle_start.abs() {
            break;
        }
    }
    Ok(params)
}

fn weight(params: &SmoothingParams, w: usize) -> f64 {
    if w < params.log_theta.len() {
        params.log_theta[w]
    } else {
        params.log_lambda_b.unwrap_or(0.0)
    }
}

fn set_weight(params: &mut SmoothingParams, w: usize, x: f64) {
    if w < params.log_theta.len() {
        params.log_theta[w] = x;
    } else {
        params.log_lambda_b = Some(x);
    }
}
