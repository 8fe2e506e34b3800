//! Component curves, predictions, group differences and their Bayesian
//! confidence bands, plus extraction of time regions where a band excludes zero.
//!
//! The posterior variance of any linear functional `hᵀβ` of the coefficients
//! is `σ̂²_ε · hᵀ M⁻¹ h`, with `M` the penalized normal-equations matrix kept in
//! the fitted model.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernel::CovariatePoint;
use crate::model::{unit_time, TermKind, TermSpec, DAY_MINUTES};
use crate::solver::FittedModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEstimate {
    pub target: String,
    /// Confidence level of the band.
    pub level: f64,
    /// Minutes of the day, or level indices for a nominal main effect.
    pub grid: Vec<f64>,
    /// Level labels when `grid` indexes factor levels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub value: Vec<f64>,
    pub se: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CurveEstimate {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub start_minute: f64,
    pub end_minute: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    pub intervals: Vec<Region>,
    pub level: f64,
}

/// `0, step, 2 step, …, 1440`.
pub fn daily_grid(step_minutes: f64) -> Vec<f64> {
    assert!(step_minutes > 0.0);
    let count = (DAY_MINUTES / step_minutes).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|i| i as f64 * step_minutes).collect();
    if *grid.last().unwrap() < DAY_MINUTES {
        grid.push(DAY_MINUTES);
    }
    grid
}

fn z_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level {level} not in (0, 1)")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf((1.0 + level) / 2.0))
}

fn check_grid(grid: &[f64]) -> Result<()> {
    match grid.iter().find(|m| !(0.0..=DAY_MINUTES).contains(*m)) {
        Some(m) => Err(Error::Domain(format!("grid minute {m} outside [0, 1440]"))),
        None => Ok(()),
    }
}

impl FittedModel {
    fn coefficients(&self) -> DVector<f64> {
        let mut beta = DVector::zeros(self.d.len() + self.c.len() + self.b_hat.len());
        beta.rows_mut(0, self.d.len()).copy_from(&self.d);
        beta.rows_mut(self.d.len(), self.c.len()).copy_from(&self.c);
        beta.rows_mut(self.d.len() + self.c.len(), self.b_hat.len())
            .copy_from(&self.b_hat);
        beta
    }

    /// Coefficient-space vector `h(x)` for the masked terms: null-basis values
    /// in their columns and θ-weighted kernel sections at the knots.
    pub fn basis_row(&self, x: &CovariatePoint, mask: &[bool]) -> DVector<f64> {
        let m = self.d.len();
        let mut h = DVector::zeros(m + self.c.len() + self.b_hat.len());
        let theta = self.theta();
        let mut buf = Vec::new();
        for (i, kernel) in self.kernels.iter().enumerate() {
            if !mask[i] {
                continue;
            }
            let layout = &self.layout[i];
            if !layout.null_cols.is_empty() {
                buf.clear();
                kernel.null_basis_into(x, &mut buf);
                for (j, v) in layout.null_cols.clone().zip(&buf) {
                    h[j] += *v;
                }
            }
            if let Some(a) = layout.penalized {
                for (k, knot) in self.knots.iter().enumerate() {
                    h[m + k] += theta[a] * kernel.eval(x, knot);
                }
            }
        }
        h
    }

    /// Mask selecting every fixed-effect (non-random) term.
    pub fn function_mask(&self) -> Vec<bool> {
        self.plan.terms.iter().map(|t| !t.is_random()).collect()
    }

    fn point(&self, minute: f64, levels: Vec<usize>) -> CovariatePoint {
        CovariatePoint {
            t: unit_time(minute),
            levels,
            subject: None,
        }
    }

    fn curve_from_rows(
        &self,
        target: String,
        grid: Vec<f64>,
        rows: Vec<DVector<f64>>,
        level: f64,
    ) -> Result<CurveEstimate> {
        let z = z_value(level)?;
        let beta = self.coefficients();
        let mut value = Vec::with_capacity(rows.len());
        let mut se = Vec::with_capacity(rows.len());
        for h in &rows {
            value.push(h.dot(&beta));
            se.push((self.sigma2_eps * self.factor.inv_quad(h)).max(0.0).sqrt());
        }
        let lower = value.iter().zip(&se).map(|(v, s)| v - z * s).collect();
        let upper = value.iter().zip(&se).map(|(v, s)| v + z * s).collect();
        Ok(CurveEstimate {
            target,
            level,
            grid,
            labels: None,
            value,
            se,
            lower,
            upper,
        })
    }
}

/// Posterior variances of the masked part of `η̂` at each target point.
pub fn posterior_covariance(model: &FittedModel, targets: &[CovariatePoint], mask: &[bool]) -> Result<Vec<f64>> {
    if mask.len() != model.plan.terms.len() || !mask.iter().any(|m| *m) {
        return Err(Error::Inference("component mask must select at least one term".into()));
    }
    Ok(targets
        .iter()
        .map(|x| model.sigma2_eps * model.factor().inv_quad(&model.basis_row(x, mask)))
        .collect())
}

/// One curve per relevant level: a single curve for time-only terms, a
/// level-indexed curve for nominal main effects, and one curve per level for
/// time-by-nominal interactions.
pub fn eval_component(model: &FittedModel, term: &TermSpec, grid: &[f64], level: f64) -> Result<Vec<CurveEstimate>> {
    eval_effect(model, &term.label(), std::slice::from_ref(term), grid, level)
}

/// Function terms grouped into ANOVA components: the constant, the time main
/// effect, each nominal main effect and each time-by-nominal interaction.
/// Linear and smooth parts of one effect share a component.
pub fn anova_components(model: &FittedModel) -> Vec<(String, Vec<TermSpec>)> {
    let mut out: Vec<(String, Vec<TermSpec>)> = Vec::new();
    for term in &model.plan.terms {
        let name = match &term.spec.kind {
            TermKind::RandomIntercept => continue,
            TermKind::Constant => "constant".to_owned(),
            TermKind::TimeLinear | TermKind::TimeSmooth => "time".to_owned(),
            TermKind::NominalMain(f) => f.clone(),
            TermKind::TimeByNominalLinear(f) | TermKind::TimeByNominalSmooth(f) => format!("time_x_{f}"),
        };
        match out.iter_mut().find(|(n, _)| *n == name) {
            Some((_, terms)) => terms.push(term.spec.clone()),
            None => out.push((name, vec![term.spec.clone()])),
        }
    }
    out
}

/// The sum of several terms with its joint band. Terms may involve at most
/// one factor; time-only terms are shared across its levels. Nominal main
/// effects alone give one level-indexed curve, anything else one curve per
/// level over `grid`.
pub fn eval_effect(
    model: &FittedModel,
    name: &str,
    terms: &[TermSpec],
    grid: &[f64],
    level: f64,
) -> Result<Vec<CurveEstimate>> {
    check_grid(grid)?;
    if terms.is_empty() {
        return Err(Error::Inference(format!("component {name} has no terms")));
    }
    let mut mask = vec![false; model.plan.terms.len()];
    let mut factor = None;
    for term in terms {
        let idx = model
            .plan
            .term_index(term)
            .ok_or_else(|| Error::Inference(format!("term {} is not in the model", term.label())))?;
        if model.plan.terms[idx].is_random() {
            return Err(Error::Inference(
                "random intercepts are not a function component".into(),
            ));
        }
        if let Some(f) = model.plan.terms[idx].factor {
            if factor.is_some_and(|g| g != f) {
                return Err(Error::Inference(format!(
                    "terms of {name} involve more than one factor"
                )));
            }
            factor = Some(f);
        }
        mask[idx] = true;
    }
    let nominal_only = terms.iter().all(|t| matches!(t.kind, TermKind::NominalMain(_)));
    let shape = (nominal_only, factor);
    let nf = model.plan.factor_defs.len();

    match shape {
        (true, Some((f, k))) => {
            let rows = (0..k)
                .map(|g| {
                    let mut levels = vec![0; nf];
                    levels[f] = g;
                    model.basis_row(&model.point(0.0, levels), &mask)
                })
                .collect();
            let mut curve = model.curve_from_rows(name.to_owned(), (0..k).map(|g| g as f64).collect(), rows, level)?;
            curve.labels = Some(model.plan.factor_defs[f].levels().to_vec());
            Ok(vec![curve])
        }
        (_, Some((f, k))) => (0..k)
            .map(|g| {
                let rows = grid
                    .iter()
                    .map(|&t| {
                        let mut levels = vec![0; nf];
                        levels[f] = g;
                        model.basis_row(&model.point(t, levels), &mask)
                    })
                    .collect();
                let level_name = &model.plan.factor_defs[f].levels()[g];
                model.curve_from_rows(format!("{name}[{level_name}]"), grid.to_vec(), rows, level)
            })
            .collect(),
        (_, None) => {
            let rows = grid
                .iter()
                .map(|&t| model.basis_row(&model.point(t, vec![0; nf]), &mask))
                .collect();
            Ok(vec![model.curve_from_rows(
                name.to_owned(),
                grid.to_vec(),
                rows,
                level,
            )?])
        }
    }
}

fn level_indices(model: &FittedModel, levels: &[&str]) -> Result<Vec<usize>> {
    let defs = &model.plan.factor_defs;
    if levels.len() != defs.len() {
        return Err(Error::Inference(format!(
            "expected {} factor levels, got {}",
            defs.len(),
            levels.len()
        )));
    }
    levels
        .iter()
        .zip(defs)
        .map(|(l, f)| {
            f.index_of(l)
                .ok_or_else(|| Error::Inference(format!("unknown level \"{l}\" for factor {}", f.name())))
        })
        .collect()
}

/// Fixed-effect prediction `η̂(t, levels)` over a grid of minutes, excluding
/// subject intercepts.
pub fn predict(model: &FittedModel, grid: &[f64], levels: &[&str], level: f64) -> Result<CurveEstimate> {
    check_grid(grid)?;
    let idx = level_indices(model, levels)?;
    let mask = model.function_mask();
    let rows = grid
        .iter()
        .map(|&t| model.basis_row(&model.point(t, idx.clone()), &mask))
        .collect();
    let target = if levels.is_empty() {
        "prediction".to_owned()
    } else {
        format!("prediction[{}]", levels.join(","))
    };
    model.curve_from_rows(target, grid.to_vec(), rows, level)
}

/// Prediction at arbitrary covariate points; `grid` of the result holds their minutes.
pub fn predict_points(model: &FittedModel, points: &[CovariatePoint], level: f64) -> Result<CurveEstimate> {
    let mask = model.function_mask();
    let rows = points.iter().map(|p| model.basis_row(p, &mask)).collect();
    let grid = points.iter().map(|p| p.t * DAY_MINUTES).collect();
    model.curve_from_rows("prediction".into(), grid, rows, level)
}

/// `δ̂(t | g, g*) = η̂(t, g) − η̂(t, g*)` for levels of `factor`, with its band.
pub fn difference_curve(
    model: &FittedModel,
    factor: &str,
    g: &str,
    g_star: &str,
    grid: &[f64],
    level: f64,
) -> Result<CurveEstimate> {
    check_grid(grid)?;
    let (f, def) = model
        .plan
        .factor_defs
        .iter()
        .enumerate()
        .find(|(_, d)| d.name() == factor)
        .ok_or_else(|| Error::Inference(format!("unknown factor {factor}")))?;
    let gi = def
        .index_of(g)
        .ok_or_else(|| Error::Inference(format!("unknown level \"{g}\" for factor {factor}")))?;
    let hi = def
        .index_of(g_star)
        .ok_or_else(|| Error::Inference(format!("unknown level \"{g_star}\" for factor {factor}")))?;
    let mask: Vec<bool> = model
        .plan
        .terms
        .iter()
        .map(|t| t.factor.map(|(i, _)| i) == Some(f))
        .collect();
    let nf = model.plan.factor_defs.len();
    let rows = grid
        .iter()
        .map(|&t| {
            if !mask.iter().any(|m| *m) {
                return DVector::zeros(model.normal_matrix.nrows());
            }
            let mut a = vec![0; nf];
            a[f] = gi;
            let mut b = vec![0; nf];
            b[f] = hi;
            model.basis_row(&model.point(t, a), &mask) - model.basis_row(&model.point(t, b), &mask)
        })
        .collect();
    model.curve_from_rows(
        format!("difference[{factor}: {g} - {g_star}]"),
        grid.to_vec(),
        rows,
        level,
    )
}

/// Maximal runs of grid points where the band lies strictly above or strictly
/// below zero. A change of sign starts a new run.
pub fn significant_regions(curve: &CurveEstimate) -> RegionSet {
    let sign = |i: usize| -> i8 {
        if curve.lower[i] > 0.0 {
            1
        } else if curve.upper[i] < 0.0 {
            -1
        } else {
            0
        }
    };
    let mut intervals = Vec::new();
    let mut run: Option<(usize, i8)> = None;
    for i in 0..curve.len() {
        let s = sign(i);
        match run {
            Some((start, rs)) if rs != s => {
                intervals.push(Region {
                    start_minute: curve.grid[start],
                    end_minute: curve.grid[i - 1],
                });
                run = (s != 0).then_some((i, s));
            }
            None if s != 0 => run = Some((i, s)),
            _ => {}
        }
    }
    if let Some((start, _)) = run {
        intervals.push(Region {
            start_minute: curve.grid[start],
            end_minute: curve.grid[curve.len() - 1],
        });
    }
    RegionSet {
        intervals,
        level: curve.level,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermWeight {
    pub term: String,
    pub theta: f64,
}

/// Headline numbers of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n: usize,
    pub knots: usize,
    pub r_squared: f64,
    pub sigma_eps: f64,
    pub sigma2_eps: f64,
    pub sigma_b: Option<f64>,
    pub sigma2_b: Option<f64>,
    pub trace_a: f64,
    pub criterion: String,
    pub criterion_value: f64,
    pub log10_lambda: f64,
    pub log10_lambda_b: Option<f64>,
    pub theta: Vec<TermWeight>,
}

pub fn summarize_fit(model: &FittedModel) -> FitReport {
    FitReport {
        n: model.n,
        knots: model.knots.len(),
        r_squared: model.r_squared,
        sigma_eps: model.sigma2_eps.sqrt(),
        sigma2_eps: model.sigma2_eps,
        sigma_b: model.sigma2_b.map(f64::sqrt),
        sigma2_b: model.sigma2_b,
        trace_a: model.trace_a,
        criterion: format!("{:?}", model.spec().criterion).to_lowercase(),
        criterion_value: model.criterion_value,
        log10_lambda: model.params.log_lambda,
        log10_lambda_b: model.params.log_lambda_b,
        theta: model
            .term_labels
            .iter()
            .zip(model.theta())
            .map(|(term, theta)| TermWeight {
                term: term.clone(),
                theta,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(lower: &[f64], upper: &[f64]) -> CurveEstimate {
        let n = lower.len();
        CurveEstimate {
            target: "t".into(),
            level: 0.95,
            grid: (0..n).map(|i| i as f64).collect(),
            labels: None,
            value: lower.iter().zip(upper).map(|(a, b)| (a + b) / 2.0).collect(),
            se: vec![1.0; n],
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        }
    }

    #[test]
    fn no_regions_when_band_contains_zero() {
        let c = curve(&[-1.0; 5], &[1.0; 5]);
        assert!(significant_regions(&c).intervals.is_empty());
    }

    #[test]
    fn single_run() {
        let n = 1441;
        let lower: Vec<f64> = (0..n)
            .map(|i| if (360..=600).contains(&i) { 0.5 } else { -0.5 })
            .collect();
        let upper = vec![1.0; n];
        let r = significant_regions(&curve(&lower, &upper));
        assert_eq!(
            r.intervals,
            vec![Region {
                start_minute: 360.0,
                end_minute: 600.0
            }]
        );
    }

    #[test]
    fn sign_change_splits() {
        // + + 0 + + - - 0 +
        let lower = [1.0, 1.0, -1.0, 1.0, 1.0, -3.0, -3.0, -1.0, 1.0];
        let upper = [2.0, 2.0, 1.0, 2.0, 2.0, -1.0, -1.0, 1.0, 2.0];
        let r = significant_regions(&curve(&lower, &upper));
        let got: Vec<(f64, f64)> = r.intervals.iter().map(|r| (r.start_minute, r.end_minute)).collect();
        assert_eq!(got, vec![(0.0, 1.0), (3.0, 4.0), (5.0, 6.0), (8.0, 8.0)]);
    }

    #[test]
    fn direct_sign_flip_without_gap() {
        let lower = [1.0, -3.0];
        let upper = [2.0, -1.0];
        let r = significant_regions(&curve(&lower, &upper));
        assert_eq!(r.intervals.len(), 2);
    }

    #[test]
    fn grid_helper() {
        let g = daily_grid(1.0);
        assert_eq!(g.len(), 1441);
        assert_eq!(g[1440], 1440.0);
        assert_eq!(daily_grid(7.0).last(), Some(&1440.0));
    }

    #[test]
    fn z_for_95() {
        assert!((z_value(0.95).unwrap() - 1.959963984540054).abs() < 1e-9);
        assert!(z_value(1.0).is_err());
    }
}
