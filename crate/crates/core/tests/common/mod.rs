#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssanova::kernel::{cubic_kernel, k1};
use ssanova::solver::{PenalizedSystem, SmoothingParams};

/// A single-smooth-term instance with knots at the data points.
pub struct Instance {
    pub t: Vec<f64>,
    pub y: DVector<f64>,
    pub subjects: Option<(Vec<usize>, usize)>,
    pub s: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

pub fn instance(seed: u64, n: usize, subjects: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let subj: Vec<usize> = (0..n).map(|i| i % subjects.max(1)).collect();
    let offsets: Vec<f64> = (0..subjects.max(1)).map(|_| rng.random::<f64>() - 0.5).collect();
    let y = DVector::from_iterator(
        n,
        t.iter().zip(&subj).map(|(&x, &s)| {
            (std::f64::consts::TAU * x).sin()
                + if subjects > 0 { offsets[s] } else { 0.0 }
                + 0.3 * (rng.random::<f64>() - 0.5)
        }),
    );
    let s = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { k1(t[i]) });
    let r = DMatrix::from_fn(n, n, |i, j| cubic_kernel(t[i], t[j]).unwrap());
    let q = r.clone();
    Instance {
        t,
        y,
        subjects: (subjects > 0).then_some((subj, subjects)),
        s,
        r,
        q,
    }
}

impl Instance {
    pub fn system(&self) -> PenalizedSystem {
        PenalizedSystem::from_dense(
            self.s.clone(),
            vec![self.r.clone()],
            vec![self.q.clone()],
            self.subjects.clone(),
            self.y.clone(),
        )
        .unwrap()
    }

    pub fn params(&self, log_lambda: f64) -> SmoothingParams {
        SmoothingParams {
            log_lambda,
            log_theta: vec![0.0],
            log_lambda_b: self.subjects.as_ref().map(|_| 0.0),
        }
    }

    /// Full design `[S, θR, Z]` and penalty `P` with objective
    /// `‖y − Xβ‖²/n + βᵀPβ`.
    pub fn dense(&self, params: &SmoothingParams) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.t.len();
        let m = self.s.ncols();
        let q = self.r.ncols();
        let ns = self.subjects.as_ref().map_or(0, |s| s.1);
        let theta = params.theta()[0];
        let lambda = params.lambda();
        let p = m + q + ns;
        let mut x = DMatrix::zeros(n, p);
        x.view_mut((0, 0), (n, m)).copy_from(&self.s);
        x.view_mut((0, m), (n, q)).copy_from(&(&self.r * theta));
        if let Some((subj, _)) = &self.subjects {
            for (i, &k) in subj.iter().enumerate() {
                x[(i, m + q + k)] = 1.0;
            }
        }
        let mut pen = DMatrix::zeros(p, p);
        pen.view_mut((m, m), (q, q)).copy_from(&(&self.q * (lambda * theta)));
        if let Some(lb) = params.lambda_b() {
            for k in 0..ns {
                pen[(m + q + k, m + q + k)] = lambda * lb;
            }
        }
        (x, pen)
    }
}

/// Stacked design `[X/√n; P^{1/2}]`; least squares against `[y/√n; 0]`
/// minimizes `‖y − Xβ‖²/n + βᵀPβ` without squaring the condition number.
fn stacked(x: &DMatrix<f64>, pen: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let p = x.ncols();
    let eig = pen.clone().symmetric_eigen();
    let root = DMatrix::from_fn(p, p, |i, j| {
        eig.eigenvalues[i].max(0.0).sqrt() * eig.eigenvectors[(j, i)]
    });
    let mut a = DMatrix::zeros(n + p, p);
    a.view_mut((0, 0), (n, p)).copy_from(&(x / (n as f64).sqrt()));
    a.view_mut((n, 0), (p, p)).copy_from(&root);
    a
}

/// Minimizer of `‖y − Xβ‖²/n + βᵀPβ` by SVD of the stacked system.
pub fn brute_force(x: &DMatrix<f64>, pen: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let n = x.nrows();
    let a = stacked(x, pen);
    let mut b = DVector::zeros(a.nrows());
    b.rows_mut(0, n).copy_from(&(y / (n as f64).sqrt()));
    a.svd(true, true).solve(&b, 1e-14).unwrap()
}

/// Explicit smoother matrix `A` with `ŷ = A y`, built column by column from
/// the stacked-system pseudo-inverse.
pub fn smoother(x: &DMatrix<f64>, pen: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let pinv = stacked(x, pen).pseudo_inverse(1e-14).unwrap();
    x * pinv.columns(0, n) / (n as f64).sqrt()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
