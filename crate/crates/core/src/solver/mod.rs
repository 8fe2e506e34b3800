//! Penalized least-squares fitting with smoothing-parameter selection.
//!
//! Coefficients are `(d, c, b)`: null-space coefficients, kernel coefficients
//! at the knots (shared by all penalized terms through the θ-weighted kernel
//! sum), and subject intercepts. With `X = [S, R_θ, Z]` the normal equations
//! are `(XᵀX + P) β = Xᵀy`, `P = diag(0, nλ Q_θ, nλλ_b I)`.

mod factor;
mod fit;
mod knots;
mod optimize;
mod system;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use factor::NormalFactor;
pub use fit::{fit, fit_plan, FittedModel};
pub use knots::{auto_knot_count, resolve_knot_count, select_knot_points, select_knots};
pub use optimize::{golden_section, optimize_params, OptimizerOptions};
pub use system::{Design, PenalizedSystem};

pub(crate) use system::pair_index;

/// Smoothing parameters on a log10 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub log_lambda: f64,
    /// One weight per penalized function term.
    pub log_theta: Vec<f64>,
    /// Relative ridge weight on the subject intercepts; the effective ridge is `λ λ_b`.
    pub log_lambda_b: Option<f64>,
}

impl SmoothingParams {
    pub fn lambda(&self) -> f64 {
        10f64.powf(self.log_lambda)
    }

    pub fn theta(&self) -> Vec<f64> {
        self.log_theta.iter().map(|v| 10f64.powf(*v)).collect()
    }

    pub fn lambda_b(&self) -> Option<f64> {
        self.log_lambda_b.map(|v| 10f64.powf(v))
    }

    /// Unit-trace starting weights `θ_β = 1 / tr(Q_β)` and `λ_b = 1`.
    pub fn initial(system: &PenalizedSystem, log_lambda: f64) -> Self {
        let log_theta = system
            .q_list
            .iter()
            .map(|q| {
                let tr = q.trace();
                if tr > 0.0 {
                    -tr.log10()
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            log_lambda,
            log_theta,
            log_lambda_b: system.has_random_intercept().then_some(0.0),
        }
    }

    fn check(&self, system: &PenalizedSystem) -> Result<()> {
        let finite = self.log_lambda.is_finite()
            && self.log_theta.iter().all(|v| v.is_finite())
            && self.log_lambda_b.is_none_or(f64::is_finite);
        if !finite {
            return Err(Error::Domain("smoothing parameters must be finite".into()));
        }
        if self.log_theta.len() != system.penalized_terms() {
            return Err(Error::Domain(format!(
                "{} theta values for {} penalized terms",
                self.log_theta.len(),
                system.penalized_terms()
            )));
        }
        if self.log_lambda_b.is_some() != system.has_random_intercept() {
            return Err(Error::Domain(
                "lambda_b present iff the model has a random intercept".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) struct NormalEquations {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub matrix: DMatrix<f64>,
}

impl PenalizedSystem {
    pub(crate) fn normal_equations(&self, params: &SmoothingParams) -> NormalEquations {
        let m = self.null_dim();
        let q = self.q;
        let ns = self.n_subjects;
        let p = m + q + ns;
        let terms = self.penalized_terms();
        let theta = params.theta();
        let n = self.n as f64;

        let mut g = DMatrix::zeros(p, p);
        let mut xty = DVector::zeros(p);

        g.view_mut((0, 0), (m, m)).copy_from(&self.sts);
        xty.rows_mut(0, m).copy_from(&self.sty);

        let mut scr = DMatrix::zeros(m, q);
        let mut rcc = DMatrix::zeros(q, q);
        let mut rcy = DVector::zeros(q);
        let mut rcz = DMatrix::zeros(q, ns);
        for a in 0..terms {
            scr += &self.str_[a] * theta[a];
            rcy.axpy(theta[a], &self.rty[a], 1.0);
            rcz += &self.rtz[a] * theta[a];
            for b in a..terms {
                let block = &self.rtr[pair_index(a, b, terms)];
                let w = theta[a] * theta[b];
                rcc += block * w;
                if b != a {
                    rcc += block.transpose() * w;
                }
            }
        }
        g.view_mut((0, m), (m, q)).copy_from(&scr);
        g.view_mut((m, 0), (q, m)).copy_from(&scr.transpose());
        g.view_mut((m, m), (q, q)).copy_from(&rcc);
        xty.rows_mut(m, q).copy_from(&rcy);

        if ns > 0 {
            let o = m + q;
            g.view_mut((0, o), (m, ns)).copy_from(&self.stz);
            g.view_mut((o, 0), (ns, m)).copy_from(&self.stz.transpose());
            g.view_mut((m, o), (q, ns)).copy_from(&rcz);
            g.view_mut((o, m), (ns, q)).copy_from(&rcz.transpose());
            for k in 0..ns {
                g[(o + k, o + k)] = self.ztz[k];
            }
            xty.rows_mut(o, ns).copy_from(&self.zty);
        }

        let mut matrix = g.clone();
        let scale = n * params.lambda();
        for a in 0..terms {
            let mut blk = matrix.view_mut((m, m), (q, q));
            blk += &self.q_list[a] * (scale * theta[a]);
        }
        if let Some(lb) = params.lambda_b() {
            let o = m + q;
            for k in 0..ns {
                matrix[(o + k, o + k)] += scale * lb;
            }
        }
        NormalEquations { gram: g, xty, matrix }
    }

    fn factor(&self, matrix: &DMatrix<f64>) -> Result<NormalFactor> {
        NormalFactor::new(matrix, |j| self.column_label(j))
    }

    /// Fitted values `S d + R_θ c + Z b` for coefficients in system units.
    pub fn fitted_values(
        &self,
        params: &SmoothingParams,
        d: &DVector<f64>,
        c: &DVector<f64>,
        b: &DVector<f64>,
    ) -> DVector<f64> {
        let theta = params.theta();
        let mut out = DVector::zeros(self.n);
        self.design.for_each_chunk(|chunk| {
            let mut rows = chunk.s.as_ref() * d;
            for (a, r) in chunk.r.iter().enumerate() {
                rows.gemv(theta[a], r, c, 1.0);
            }
            if let Some(subj) = &chunk.subjects {
                for (i, &k) in subj.iter().enumerate() {
                    rows[i] += b[k];
                }
            }
            out.rows_mut(chunk.rows.start, chunk.rows.len()).copy_from(&rows);
        });
        out
    }
}

/// Everything computed at one parameter point without touching the data rows.
pub(crate) struct Evaluation {
    pub beta: DVector<f64>,
    pub rss: f64,
    /// `yᵀ(I − A)y`.
    pub resid_quad: f64,
    pub trace: f64,
    pub whitened: DMatrix<f64>,
    pub factor: NormalFactor,
    pub matrix: DMatrix<f64>,
}

pub(crate) fn evaluate(system: &PenalizedSystem, params: &SmoothingParams) -> Result<Evaluation> {
    params.check(system)?;
    let ne = system.normal_equations(params);
    let factor = system.factor(&ne.matrix)?;
    let beta = factor.solve(&ne.xty);
    let bxy = beta.dot(&ne.xty);
    let bgb = (&ne.gram * &beta).dot(&beta);
    let rss = (system.yty - 2.0 * bxy + bgb).max(0.0);
    let resid_quad = (system.yty - bxy).max(0.0);
    let whitened = factor.whiten(&ne.gram);
    let trace = whitened.trace();
    Ok(Evaluation {
        beta,
        rss,
        resid_quad,
        trace,
        whitened,
        factor,
        matrix: ne.matrix,
    })
}

/// Output of [`solve_at`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub d: DVector<f64>,
    pub c: DVector<f64>,
    pub b: DVector<f64>,
    pub fitted: DVector<f64>,
    /// `tr(A)`, the effective degrees of freedom.
    pub trace: f64,
    pub rss: f64,
    pub factor: NormalFactor,
    /// The penalized normal-equations matrix that was factored.
    pub matrix: DMatrix<f64>,
}

/// Minimize the penalized least-squares objective at fixed smoothing parameters.
pub fn solve_at(system: &PenalizedSystem, params: &SmoothingParams) -> Result<Solution> {
    let ev = evaluate(system, params)?;
    let m = system.null_dim();
    let q = system.q;
    let d = ev.beta.rows(0, m).into_owned();
    let c = ev.beta.rows(m, q).into_owned();
    let b = ev.beta.rows(m + q, system.n_subjects).into_owned();
    let fitted = system.fitted_values(params, &d, &c, &b);
    let rss = (system.y() - &fitted).norm_squared();
    Ok(Solution {
        d,
        c,
        b,
        fitted,
        trace: ev.trace,
        rss,
        factor: ev.factor,
        matrix: ev.matrix,
    })
}

fn residual_df(system: &PenalizedSystem, trace: f64) -> Result<f64> {
    let n = system.n as f64;
    let df = n - trace;
    if df <= n * 1e-12 {
        return Err(Error::Criterion(format!(
            "degenerate trace: tr(A) = {trace} with n = {}",
            system.n
        )));
    }
    Ok(df)
}

pub(crate) fn gcv_of(system: &PenalizedSystem, ev: &Evaluation) -> Result<f64> {
    let df = residual_df(system, ev.trace)?;
    Ok(system.n as f64 * ev.rss / (df * df))
}

pub(crate) fn gml_of(system: &PenalizedSystem, ev: &Evaluation) -> Result<f64> {
    residual_df(system, ev.trace)?;
    let m = system.null_dim();
    let n = system.n;
    if n <= m {
        return Err(Error::Criterion("n must exceed the null-space dimension".into()));
    }
    // Nonzero eigenvalues of I − A are 1 − μ for the eigenvalues μ of the
    // whitened Gram, except the m null-space directions where μ = 1.
    let mut one_minus: Vec<f64> = ev.whitened.symmetric_eigenvalues().iter().map(|mu| 1.0 - mu).collect();
    one_minus.sort_by(|a, b| a.total_cmp(b));
    let kept = &one_minus[m.min(one_minus.len())..];
    if kept.iter().any(|v| *v <= 0.0) {
        return Err(Error::Criterion("I − A has non-positive eigenvalues".into()));
    }
    let log_det: f64 = kept.iter().map(|v| v.ln()).sum();
    Ok(ev.resid_quad / (log_det / (n - m) as f64).exp())
}

/// Generalized cross-validation score `n ‖(I − A)y‖² / tr(I − A)²`.
pub fn gcv(system: &PenalizedSystem, params: &SmoothingParams) -> Result<f64> {
    let ev = evaluate(system, params)?;
    gcv_of(system, &ev)
}

/// Generalized maximum likelihood score `yᵀ(I − A)y / det⁺(I − A)^{1/(n − m)}`.
pub fn gml(system: &PenalizedSystem, params: &SmoothingParams) -> Result<f64> {
    let ev = evaluate(system, params)?;
    gml_of(system, &ev)
}

pub(crate) fn criterion_of(
    system: &PenalizedSystem,
    ev: &Evaluation,
    criterion: crate::model::Criterion,
) -> Result<f64> {
    match criterion {
        crate::model::Criterion::Gcv => gcv_of(system, ev),
        crate::model::Criterion::Gml => gml_of(system, ev),
    }
}

/// Criterion value at `params`.
pub fn criterion_value(
    system: &PenalizedSystem,
    params: &SmoothingParams,
    criterion: crate::model::Criterion,
) -> Result<f64> {
    let ev = evaluate(system, params)?;
    criterion_of(system, &ev, criterion)
}
