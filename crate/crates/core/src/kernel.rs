//! Reproducing kernels and null-space bases for each term kind.
//!
//! Time lives on `[0, 1]` (minutes divided by 1440). The cubic smoothing
//! spline kernel is built from scaled Bernoulli polynomials so that every
//! kernel section integrates to zero over the day, and nominal kernels sum to
//! zero over levels. Together these make the ANOVA components identifiable.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactorDef, PlannedTerm, TermKind, TermSpec};

/// Scaled Bernoulli polynomial of degree 1.
#[inline]
pub fn k1(u: f64) -> f64 {
    u - 0.5
}

/// Scaled Bernoulli polynomial of degree 2, `B2(u) / 2!`.
#[inline]
pub fn k2(u: f64) -> f64 {
    let a = k1(u);
    (a * a - 1.0 / 12.0) / 2.0
}

/// Scaled Bernoulli polynomial of degree 4, `B4(u) / 4!`.
#[inline]
pub fn k4(u: f64) -> f64 {
    let a = k1(u);
    let a2 = a * a;
    (a2 * a2 - a2 / 2.0 + 7.0 / 240.0) / 24.0
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("time {x} outside [0, 1]")))
    }
}

#[inline]
pub(crate) fn cubic_kernel_unchecked(x: f64, y: f64) -> f64 {
    k2(x) * k2(y) - k4((x - y).abs())
}

/// Cubic spline reproducing kernel on `[0, 1]` for the penalty `∫(f'')²`.
pub fn cubic_kernel(x: f64, y: f64) -> Result<f64> {
    check_unit(x)?;
    check_unit(y)?;
    Ok(cubic_kernel_unchecked(x, y))
}

/// Basis of the cubic-spline null space: `[1, k1(x)]`.
pub fn cubic_null_basis(x: f64) -> Result<[f64; 2]> {
    check_unit(x)?;
    Ok([1.0, k1(x)])
}

/// Shrinkage kernel on `K` levels: `1[g = h] - 1/K`.
pub fn nominal_kernel(g: usize, h: usize, k: usize) -> Result<f64> {
    if k < 2 || g >= k || h >= k {
        return Err(Error::Domain(format!(
            "level indices ({g}, {h}) invalid for {k} levels"
        )));
    }
    Ok(nominal_unchecked(g, h, k))
}

#[inline]
fn nominal_unchecked(g: usize, h: usize, k: usize) -> f64 {
    let same = if g == h { 1.0 } else { 0.0 };
    same - 1.0 / k as f64
}

/// A point in covariate space: unit time, one level index per factor, and
/// the subject index when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariatePoint {
    pub t: f64,
    pub levels: Vec<usize>,
    pub subject: Option<usize>,
}

impl CovariatePoint {
    pub fn at_time(t: f64) -> Self {
        Self {
            t,
            levels: Vec::new(),
            subject: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Constant,
    TimeLinear,
    TimeSmooth,
    Nominal { factor: usize, k: usize },
    NominalContrasts { factor: usize, k: usize },
    TimeLinearByNominal { factor: usize, k: usize },
    TimeSmoothByNominal { factor: usize, k: usize },
    Subject,
}

/// Kernel and null-space basis for a single model term.
#[derive(Debug, Clone, PartialEq)]
pub struct TermKernel {
    term: TermSpec,
    shape: Shape,
}

impl TermKernel {
    pub fn term(&self) -> &TermSpec {
        &self.term
    }

    fn level(x: &CovariatePoint, factor: usize) -> usize {
        x.levels[factor]
    }

    /// Kernel value `R(x, y)`. Zero for terms that live entirely in the null space.
    pub fn eval(&self, x: &CovariatePoint, y: &CovariatePoint) -> f64 {
        match self.shape {
            Shape::Constant | Shape::TimeLinear | Shape::NominalContrasts { .. } => 0.0,
            Shape::TimeSmooth => cubic_kernel_unchecked(x.t, y.t),
            Shape::Nominal { factor, k } => nominal_unchecked(Self::level(x, factor), Self::level(y, factor), k),
            Shape::TimeLinearByNominal { factor, k } => {
                k1(x.t) * k1(y.t) * nominal_unchecked(Self::level(x, factor), Self::level(y, factor), k)
            }
            Shape::TimeSmoothByNominal { factor, k } => {
                cubic_kernel_unchecked(x.t, y.t) * nominal_unchecked(Self::level(x, factor), Self::level(y, factor), k)
            }
            Shape::Subject => match (x.subject, y.subject) {
                (Some(a), Some(b)) if a == b => 1.0,
                _ => 0.0,
            },
        }
    }

    pub fn null_dim(&self) -> usize {
        match self.shape {
            Shape::Constant | Shape::TimeLinear => 1,
            Shape::NominalContrasts { k, .. } => k - 1,
            _ => 0,
        }
    }

    /// Unpenalized basis functions contributed by this term, evaluated at `x`.
    pub fn null_basis(&self, x: &CovariatePoint) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.null_dim());
        self.null_basis_into(x, &mut out);
        out
    }

    pub(crate) fn null_basis_into(&self, x: &CovariatePoint, out: &mut Vec<f64>) {
        match self.shape {
            Shape::Constant => out.push(1.0),
            Shape::TimeLinear => out.push(k1(x.t)),
            Shape::NominalContrasts { factor, k } => {
                // sum-to-zero contrasts 1[g = j] - 1/K for j < K - 1
                let g = Self::level(x, factor);
                out.extend((0..k - 1).map(|j| nominal_unchecked(g, j, k)));
            }
            _ => {}
        }
    }

    pub fn null_labels(&self) -> Vec<String> {
        let base = self.term.label();
        match self.null_dim() {
            0 => vec![],
            1 => vec![base],
            d => (0..d).map(|j| format!("{base}[{j}]")).collect(),
        }
    }

    /// Whether this term carries a kernel (penalized) part.
    pub fn is_penalized(&self) -> bool {
        !matches!(
            self.shape,
            Shape::Constant | Shape::TimeLinear | Shape::NominalContrasts { .. }
        )
    }

    /// Factor index the term depends on, if any.
    pub fn factor(&self) -> Option<usize> {
        match self.shape {
            Shape::Nominal { factor, .. }
            | Shape::NominalContrasts { factor, .. }
            | Shape::TimeLinearByNominal { factor, .. }
            | Shape::TimeSmoothByNominal { factor, .. } => Some(factor),
            _ => None,
        }
    }

    pub fn depends_on_time(&self) -> bool {
        matches!(
            self.shape,
            Shape::TimeLinear
                | Shape::TimeSmooth
                | Shape::TimeLinearByNominal { .. }
                | Shape::TimeSmoothByNominal { .. }
        )
    }
}

/// Build the kernel for a term, resolving its factor against `factor_defs`.
pub fn term_kernel(term: &TermSpec, factor_defs: &[FactorDef]) -> Result<TermKernel> {
    let resolve = |name: &str| -> Result<(usize, usize)> {
        factor_defs
            .iter()
            .position(|f| f.name() == name)
            .map(|i| (i, factor_defs[i].len()))
            .ok_or_else(|| Error::Domain(format!("unknown factor {name}")))
    };
    let shape = match &term.kind {
        TermKind::Constant => Shape::Constant,
        TermKind::TimeLinear => Shape::TimeLinear,
        TermKind::TimeSmooth => Shape::TimeSmooth,
        TermKind::NominalMain(f) => {
            let (factor, k) = resolve(f)?;
            if term.penalized {
                Shape::Nominal { factor, k }
            } else {
                Shape::NominalContrasts { factor, k }
            }
        }
        TermKind::TimeByNominalLinear(f) => {
            let (factor, k) = resolve(f)?;
            Shape::TimeLinearByNominal { factor, k }
        }
        TermKind::TimeByNominalSmooth(f) => {
            let (factor, k) = resolve(f)?;
            Shape::TimeSmoothByNominal { factor, k }
        }
        TermKind::RandomIntercept => Shape::Subject,
    };
    Ok(TermKernel {
        term: term.clone(),
        shape,
    })
}

pub(crate) fn planned_kernel(term: &PlannedTerm, factor_defs: &[FactorDef]) -> Result<TermKernel> {
    term_kernel(&term.spec, factor_defs)
}

/// Gram matrix `M[i][j] = kernel.eval(rows[i], cols[j])`.
pub fn assemble_gram(kernel: &TermKernel, rows: &[CovariatePoint], cols: &[CovariatePoint]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| kernel.eval(&rows[i], &cols[j]))
}
