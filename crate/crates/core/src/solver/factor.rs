//! Cholesky factorization of the penalized normal-equations matrix.
//!
//! The matrix is symmetrically equilibrated to unit diagonal before
//! factoring. If the plain factorization fails or leaves a squared pivot
//! below `p·ε`, a diagonal jitter starting at `1e-10` (relative to the mean
//! diagonal, which is 1 after equilibration) is added and escalated by 10x on
//! failure up to `1e-6`. Solves against a jittered factor are refined by
//! preconditioned conjugate gradients on the unshifted matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;
const REFINE_STEPS: usize = 50;

#[derive(Debug, Clone)]
pub struct NormalFactor {
    scale: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    /// Equilibrated unshifted matrix, kept for refinement when jittered.
    equilibrated: Option<DMatrix<f64>>,
}

impl NormalFactor {
    /// Factor `m`; `label` names column `j` in the error raised when the
    /// matrix cannot be factored even with the largest jitter.
    pub fn new(m: &DMatrix<f64>, label: impl Fn(usize) -> String) -> Result<Self> {
        let p = m.nrows();
        let scale = DVector::from_fn(p, |i, _| {
            let d = m[(i, i)];
            if d > 0.0 && d.is_finite() {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        });
        let mut eq = m.clone();
        for j in 0..p {
            for i in 0..p {
                eq[(i, j)] *= scale[i] * scale[j];
            }
        }
        let mean_diag = eq.trace() / p.max(1) as f64;
        if let Some(chol) = Cholesky::new(eq.clone()) {
            let min_pivot = chol
                .l_dirty()
                .diagonal()
                .iter()
                .fold(f64::INFINITY, |a, &d| a.min(d * d));
            // A squared pivot below p·ε sits at the rounding level of the
            // factorization itself.
            if min_pivot >= p as f64 * f64::EPSILON * mean_diag {
                return Ok(Self {
                    scale,
                    chol,
                    jitter: 0.0,
                    equilibrated: None,
                });
            }
        }
        let mut jitter = JITTER_START;
        while jitter <= JITTER_MAX * (1.0 + 1e-9) {
            let mut shifted = eq.clone();
            for i in 0..p {
                shifted[(i, i)] += jitter * mean_diag;
            }
            if let Some(chol) = Cholesky::new(shifted) {
                return Ok(Self {
                    scale,
                    chol,
                    jitter: jitter * mean_diag,
                    equilibrated: Some(eq),
                });
            }
            jitter *= 10.0;
        }
        let mut shifted = eq;
        for i in 0..p {
            shifted[(i, i)] += JITTER_MAX * mean_diag;
        }
        let bad = failing_pivots(&shifted, 0.0);
        Err(Error::SingularFit(bad.into_iter().map(label).collect()))
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// Jitter that was added to the equilibrated diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `M⁻¹ rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let b = rhs.component_mul(&self.scale);
        let x = match &self.equilibrated {
            Some(eq) => self.refine(eq, &b),
            None => self.chol.solve(&b),
        };
        x.component_mul(&self.scale)
    }

    /// Conjugate gradients on the unshifted system, preconditioned by the
    /// jittered factor and started from its solution.
    fn refine(&self, eq: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        let mut x = self.chol.solve(b);
        let mut r = b - eq * &x;
        let mut z = self.chol.solve(&r);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        let stop = 1e-30 * b.norm_squared();
        for _ in 0..REFINE_STEPS {
            if r.norm_squared() <= stop || rz <= 0.0 {
                break;
            }
            let ap = eq * &p;
            let pap = p.dot(&ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            x.axpy(alpha, &p, 1.0);
            r.axpy(-alpha, &ap, 1.0);
            z = self.chol.solve(&r);
            let rz_next = r.dot(&z);
            p = &z + &p * (rz_next / rz);
            rz = rz_next;
        }
        x
    }

    /// `hᵀ M⁻¹ h`.
    pub fn inv_quad(&self, h: &DVector<f64>) -> f64 {
        let mut v = h.component_mul(&self.scale);
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        v.norm_squared()
    }

    /// `L⁻¹ D G D L⁻ᵀ` for symmetric `g`, where `D M D = L Lᵀ`. Its trace is
    /// `tr(M⁻¹ G)` and its eigenvalues are those of `M⁻¹ G`.
    pub fn whiten(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let p = self.dim();
        let mut y = DMatrix::from_fn(p, p, |i, j| g[(i, j)] * self.scale[i] * self.scale[j]);
        let l = self.chol.l_dirty();
        l.solve_lower_triangular_mut(&mut y);
        let mut yt = y.transpose();
        l.solve_lower_triangular_mut(&mut yt);
        yt
    }
}

/// Indices of columns whose Cholesky pivot falls below `tol` times the
/// original diagonal; dependent columns are skipped so every one is reported.
pub(crate) fn failing_pivots(a: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let p = a.nrows();
    let mut l = DMatrix::<f64>::zeros(p, p);
    let mut bad = Vec::new();
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > tol * a[(j, j)].abs()) || d <= 0.0 {
            bad.push(j);
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    bad
}

/// Columns of a Gram matrix `SᵀS` that are linearly dependent on earlier ones.
pub(crate) fn dependent_columns(sts: &DMatrix<f64>) -> Vec<usize> {
    let p = sts.nrows();
    let mut eq = sts.clone();
    for i in 0..p {
        for j in 0..p {
            let di = sts[(i, i)];
            let dj = sts[(j, j)];
            eq[(i, j)] = if di > 0.0 && dj > 0.0 {
                sts[(i, j)] / (di * dj).sqrt()
            } else {
                0.0
            };
        }
    }
    failing_pivots(&eq, 1e-9)
}
