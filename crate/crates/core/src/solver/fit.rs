use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SpecError};
use crate::kernel::{planned_kernel, CovariatePoint, TermKernel};
use crate::model::{unit_time, ModelPlan, ModelSpec, ObservationTable, TermKind};

use super::knots::select_knot_points;
use super::optimize::{optimize_params, OptimizerOptions};
use super::{criterion_value, solve_at, NormalFactor, PenalizedSystem, SmoothingParams};

/// Where a plan term's coefficients live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct TermLayout {
    pub null_cols: Range<usize>,
    pub penalized: Option<usize>,
}

/// A fitted model. Coefficients are on the transformed-response scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "crate::persist::ModelFile", into = "crate::persist::ModelFile")]
pub struct FittedModel {
    pub plan: ModelPlan,
    pub subjects: Vec<String>,
    pub knots: Vec<CovariatePoint>,
    pub null_labels: Vec<String>,
    pub term_labels: Vec<String>,
    pub d: DVector<f64>,
    pub c: DVector<f64>,
    pub b_hat: DVector<f64>,
    pub params: SmoothingParams,
    pub sigma2_eps: f64,
    pub sigma2_b: Option<f64>,
    pub trace_a: f64,
    pub criterion_value: f64,
    pub r_squared: f64,
    pub n: usize,
    /// Penalized normal-equations matrix (scale-free; retained for inference).
    pub normal_matrix: DMatrix<f64>,
    /// Fitted values including subject intercepts; empty for models loaded from disk.
    pub fitted: Vec<f64>,
    pub(crate) factor: NormalFactor,
    pub(crate) kernels: Vec<TermKernel>,
    pub(crate) layout: Vec<TermLayout>,
}

pub(crate) fn build_layout(plan: &ModelPlan) -> Result<(Vec<TermKernel>, Vec<TermLayout>)> {
    let mut kernels = Vec::new();
    let mut layout = Vec::new();
    let mut col = 0;
    let mut pen = 0;
    for term in &plan.terms {
        let k = planned_kernel(term, &plan.factor_defs)?;
        let nd = k.null_dim();
        let penalized = (k.is_penalized() && !term.is_random()).then(|| {
            pen += 1;
            pen - 1
        });
        layout.push(TermLayout {
            null_cols: col..col + nd,
            penalized,
        });
        col += nd;
        kernels.push(k);
    }
    Ok((kernels, layout))
}

impl FittedModel {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        plan: ModelPlan,
        subjects: Vec<String>,
        knots: Vec<CovariatePoint>,
        d: DVector<f64>,
        c: DVector<f64>,
        b_hat: DVector<f64>,
        params: SmoothingParams,
        stats: (f64, Option<f64>, f64, f64, f64, usize),
        normal_matrix: DMatrix<f64>,
        fitted: Vec<f64>,
    ) -> Result<Self> {
        let (kernels, layout) = build_layout(&plan)?;
        let null_labels = kernels.iter().flat_map(TermKernel::null_labels).collect();
        let term_labels = layout
            .iter()
            .zip(&kernels)
            .filter(|(l, _)| l.penalized.is_some())
            .map(|(_, k)| k.term().label())
            .collect();
        let (sigma2_eps, sigma2_b, trace_a, criterion_value, r_squared, n) = stats;
        let p = normal_matrix.nrows();
        let factor = NormalFactor::new(&normal_matrix, |j| format!("column {j}"))?;
        if p != d.len() + c.len() + b_hat.len() {
            return Err(Error::ModelFile(
                "coefficient lengths disagree with the normal matrix".into(),
            ));
        }
        Ok(Self {
            plan,
            subjects,
            knots,
            null_labels,
            term_labels,
            d,
            c,
            b_hat,
            params,
            sigma2_eps,
            sigma2_b,
            trace_a,
            criterion_value,
            r_squared,
            n,
            normal_matrix,
            fitted,
            factor,
            kernels,
            layout,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.plan.spec
    }

    pub fn factor(&self) -> &NormalFactor {
        &self.factor
    }

    /// θ weights for the penalized function terms, in plan order.
    pub fn theta(&self) -> Vec<f64> {
        self.params.theta()
    }

    /// Subject intercept prediction by label.
    pub fn subject_effect(&self, subject: &str) -> Option<f64> {
        self.subjects.iter().position(|s| s == subject).map(|i| self.b_hat[i])
    }
}

/// Map table rows to covariate points (unit time, level indices, subject index).
pub(crate) fn covariate_points(table: &ObservationTable, subjects: &[String]) -> Vec<CovariatePoint> {
    table
        .observations()
        .iter()
        .map(|o| CovariatePoint {
            t: unit_time(o.time),
            levels: o
                .levels
                .iter()
                .zip(table.factor_defs())
                .map(|(l, f)| f.index_of(l).expect("validated level"))
                .collect(),
            subject: subjects.binary_search(&o.subject_id).ok(),
        })
        .collect()
}

/// Validate, then fit.
pub fn fit(table: &ObservationTable, spec: &ModelSpec) -> Result<FittedModel> {
    let plan = crate::model::validate_spec(spec, table)?;
    let options = OptimizerOptions {
        tune_term_weights: spec.tune_term_weights,
        ..OptimizerOptions::default()
    };
    fit_plan(table, plan, &options)
}

/// Fit a validated plan: transform and standardize the response, select
/// knots, choose smoothing parameters, solve, and estimate variances.
pub fn fit_plan(table: &ObservationTable, plan: ModelPlan, options: &OptimizerOptions) -> Result<FittedModel> {
    let spec = plan.spec.clone();
    let subjects = table.subjects();
    let random = plan.has_random_intercept();
    if random && subjects.len() < 2 {
        return Err(vec![SpecError::TooFewSubjects(subjects.len())].into());
    }

    let raw: Vec<f64> = table
        .observations()
        .iter()
        .map(|o| spec.response_transform.apply(o.response))
        .collect::<Result<_>>()?;
    let n = raw.len();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let tss: f64 = raw.iter().map(|v| (v - mean).powi(2)).sum();
    let sd = (tss / n as f64).sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    let has_constant = plan.terms.iter().any(|t| t.spec.kind == TermKind::Constant);
    let center = if has_constant { mean } else { 0.0 };
    let y = DVector::from_iterator(n, raw.iter().map(|v| (v - center) / scale));

    let points = covariate_points(table, &subjects);
    let knots = select_knot_points(&points, spec.knot_count, spec.seed)?;
    let (kernels, layout) = build_layout(&plan)?;
    let null_terms: Vec<TermKernel> = kernels.iter().filter(|k| k.null_dim() > 0).cloned().collect();
    let penalized: Vec<TermKernel> = kernels
        .iter()
        .zip(&layout)
        .filter(|(_, l)| l.penalized.is_some())
        .map(|(k, _)| k.clone())
        .collect();
    let m: usize = null_terms.iter().map(TermKernel::null_dim).sum();
    if n < m + 1 {
        return Err(Error::Domain(format!(
            "need at least {} observations for {m} unpenalized columns, found {n}",
            m + 1
        )));
    }
    let system = PenalizedSystem::from_kernels(
        points,
        null_terms,
        penalized,
        knots.clone(),
        random.then_some(subjects.len()),
        y,
    )?;

    let params = optimize_params(&system, spec.criterion, options)?;
    let crit = criterion_value(&system, &params, spec.criterion)?;
    let sol = solve_at(&system, &params)?;

    let df = n as f64 - sol.trace;
    let sigma2_std = sol.rss / df;
    let sigma2_eps = sigma2_std * scale * scale;
    let sigma2_b = params
        .lambda_b()
        .map(|lb| sigma2_eps / (n as f64 * params.lambda() * lb));
    let r_squared = if tss > 0.0 {
        (1.0 - sol.rss * scale * scale / tss).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let mut d = sol.d * scale;
    if has_constant {
        let const_col = plan
            .terms
            .iter()
            .zip(&layout)
            .find(|(t, _)| t.spec.kind == TermKind::Constant)
            .map(|(_, l)| l.null_cols.start)
            .expect("constant term present");
        d[const_col] += center;
    }
    let c = sol.c * scale;
    let b_hat = sol.b * scale;
    let fitted: Vec<f64> = sol.fitted.iter().map(|v| v * scale + center).collect();

    FittedModel::assemble(
        plan,
        subjects,
        knots,
        d,
        c,
        b_hat,
        params,
        (sigma2_eps, sigma2_b, sol.trace, crit * scale * scale, r_squared, n),
        sol.matrix,
        fitted,
    )
}
