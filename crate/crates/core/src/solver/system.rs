use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{CovariatePoint, TermKernel};

use super::factor::dependent_columns;

const CHUNK_ROWS: usize = 2048;

/// Where the rows of the design come from.
///
/// Kernel designs are evaluated in row chunks on demand, so memory stays at
/// `O(chunk * q)` regardless of the number of observations.
#[derive(Debug, Clone)]
pub enum Design {
    Dense {
        s: DMatrix<f64>,
        r: Vec<DMatrix<f64>>,
        subjects: Option<Vec<usize>>,
    },
    Kernel {
        points: Vec<CovariatePoint>,
        null_terms: Vec<TermKernel>,
        penalized: Vec<TermKernel>,
        knots: Vec<CovariatePoint>,
        random_intercept: bool,
    },
}

/// One block of consecutive design rows.
pub(crate) struct Chunk<'a> {
    pub rows: Range<usize>,
    pub s: std::borrow::Cow<'a, DMatrix<f64>>,
    pub r: std::borrow::Cow<'a, [DMatrix<f64>]>,
    pub subjects: Option<std::borrow::Cow<'a, [usize]>>,
}

impl Design {
    fn n(&self) -> usize {
        match self {
            Design::Dense { s, .. } => s.nrows(),
            Design::Kernel { points, .. } => points.len(),
        }
    }

    pub(crate) fn for_each_chunk(&self, mut f: impl FnMut(Chunk<'_>)) {
        match self {
            Design::Dense { s, r, subjects } => f(Chunk {
                rows: 0..s.nrows(),
                s: std::borrow::Cow::Borrowed(s),
                r: std::borrow::Cow::Borrowed(r.as_slice()),
                subjects: subjects.as_deref().map(std::borrow::Cow::Borrowed),
            }),
            Design::Kernel {
                points,
                null_terms,
                penalized,
                knots,
                random_intercept,
            } => {
                let m: usize = null_terms.iter().map(TermKernel::null_dim).sum();
                let mut buf = Vec::with_capacity(m);
                let mut start = 0;
                while start < points.len() {
                    let end = (start + CHUNK_ROWS).min(points.len());
                    let rows = &points[start..end];
                    let mut s = DMatrix::zeros(rows.len(), m);
                    for (i, p) in rows.iter().enumerate() {
                        buf.clear();
                        for t in null_terms {
                            t.null_basis_into(p, &mut buf);
                        }
                        for (j, v) in buf.iter().enumerate() {
                            s[(i, j)] = *v;
                        }
                    }
                    let r: Vec<DMatrix<f64>> = penalized
                        .iter()
                        .map(|k| DMatrix::from_fn(rows.len(), knots.len(), |i, j| k.eval(&rows[i], &knots[j])))
                        .collect();
                    let subjects = random_intercept
                        .then(|| std::borrow::Cow::Owned(rows.iter().map(|p| p.subject.unwrap_or(0)).collect()));
                    f(Chunk {
                        rows: start..end,
                        s: std::borrow::Cow::Owned(s),
                        r: std::borrow::Cow::Owned(r),
                        subjects,
                    });
                    start = end;
                }
            }
        }
    }
}

/// Sufficient statistics of the penalized least-squares problem
/// `‖y − S d − Σ θ_β R_β c − Z b‖² / n + λ cᵀ(Σ θ_β Q_β)c + λ λ_b ‖b‖²`.
#[derive(Debug, Clone)]
pub struct PenalizedSystem {
    pub(crate) n: usize,
    pub(crate) null_labels: Vec<String>,
    pub(crate) term_labels: Vec<String>,
    pub(crate) q: usize,
    pub(crate) n_subjects: usize,
    pub(crate) y: DVector<f64>,
    pub(crate) design: Design,
    pub(crate) q_list: Vec<DMatrix<f64>>,

    pub(crate) sts: DMatrix<f64>,
    pub(crate) sty: DVector<f64>,
    pub(crate) yty: f64,
    pub(crate) str_: Vec<DMatrix<f64>>,
    pub(crate) rty: Vec<DVector<f64>>,
    /// `R_aᵀ R_b` for `a <= b`, packed row by row.
    pub(crate) rtr: Vec<DMatrix<f64>>,
    pub(crate) ztz: DVector<f64>,
    pub(crate) zty: DVector<f64>,
    pub(crate) stz: DMatrix<f64>,
    pub(crate) rtz: Vec<DMatrix<f64>>,
}

pub(crate) fn pair_index(a: usize, b: usize, terms: usize) -> usize {
    debug_assert!(a <= b);
    a * terms - a * (a + 1) / 2 + b
}

impl PenalizedSystem {
    /// System from explicit design matrices: `s` is `n × m`, each `r` is
    /// `n × q`, each `q_list` entry is `q × q`, and `subjects` (when present)
    /// gives each row's subject index in `0..n_subjects`.
    pub fn from_dense(
        s: DMatrix<f64>,
        r: Vec<DMatrix<f64>>,
        q_list: Vec<DMatrix<f64>>,
        subjects: Option<(Vec<usize>, usize)>,
        y: DVector<f64>,
    ) -> Result<Self> {
        let n = s.nrows();
        if y.len() != n || r.iter().any(|m| m.nrows() != n) {
            return Err(Error::Domain("design row counts disagree with y".into()));
        }
        let q = q_list.first().map_or(0, |m| m.nrows());
        if r.len() != q_list.len() || r.iter().any(|m| m.ncols() != q) {
            return Err(Error::Domain("kernel blocks and knot Grams disagree".into()));
        }
        let (subj, n_subjects) = match subjects {
            Some((v, k)) => {
                if v.len() != n || v.iter().any(|&i| i >= k) {
                    return Err(Error::Domain("bad subject indices".into()));
                }
                (Some(v), k)
            }
            None => (None, 0),
        };
        let null_labels = (0..s.ncols()).map(|j| format!("null[{j}]")).collect();
        let term_labels = (0..r.len()).map(|j| format!("term[{j}]")).collect();
        let design = Design::Dense { s, r, subjects: subj };
        Self::build(design, q_list, null_labels, term_labels, n_subjects, y)
    }

    /// System backed by kernel evaluations at data points against knots.
    pub fn from_kernels(
        points: Vec<CovariatePoint>,
        null_terms: Vec<TermKernel>,
        penalized: Vec<TermKernel>,
        knots: Vec<CovariatePoint>,
        n_subjects: Option<usize>,
        y: DVector<f64>,
    ) -> Result<Self> {
        if points.len() != y.len() {
            return Err(Error::Domain("point count disagrees with y".into()));
        }
        let null_labels = null_terms.iter().flat_map(TermKernel::null_labels).collect();
        let term_labels = penalized.iter().map(|k| k.term().label()).collect();
        let q_list = penalized
            .iter()
            .map(|k| crate::kernel::assemble_gram(k, &knots, &knots))
            .collect();
        let design = Design::Kernel {
            points,
            null_terms,
            penalized,
            knots,
            random_intercept: n_subjects.is_some(),
        };
        Self::build(design, q_list, null_labels, term_labels, n_subjects.unwrap_or(0), y)
    }

    fn build(
        design: Design,
        q_list: Vec<DMatrix<f64>>,
        null_labels: Vec<String>,
        term_labels: Vec<String>,
        n_subjects: usize,
        y: DVector<f64>,
    ) -> Result<Self> {
        let n = design.n();
        let m = null_labels.len();
        let q = q_list.first().map_or(0, |m| m.nrows());
        let terms = q_list.len();
        let ns = n_subjects;

        let mut sts = DMatrix::zeros(m, m);
        let mut sty = DVector::zeros(m);
        let mut str_ = vec![DMatrix::zeros(m, q); terms];
        let mut rty = vec![DVector::zeros(q); terms];
        let mut rtr = vec![DMatrix::zeros(q, q); terms * (terms + 1) / 2];
        let mut ztz = DVector::zeros(ns);
        let mut zty = DVector::zeros(ns);
        let mut stz = DMatrix::zeros(m, ns);
        let mut rtz = vec![DMatrix::zeros(q, ns); terms];

        design.for_each_chunk(|chunk| {
            let yc = y.rows(chunk.rows.start, chunk.rows.len());
            let s = chunk.s.as_ref();
            sts.gemm_tr(1.0, s, s, 1.0);
            sty.gemv_tr(1.0, s, &yc, 1.0);
            for a in 0..terms {
                let ra = &chunk.r[a];
                str_[a].gemm_tr(1.0, s, ra, 1.0);
                rty[a].gemv_tr(1.0, ra, &yc, 1.0);
                for b in a..terms {
                    rtr[pair_index(a, b, terms)].gemm_tr(1.0, ra, &chunk.r[b], 1.0);
                }
            }
            if let Some(subj) = &chunk.subjects {
                for (i, &k) in subj.iter().enumerate() {
                    ztz[k] += 1.0;
                    zty[k] += yc[i];
                    for j in 0..m {
                        stz[(j, k)] += s[(i, j)];
                    }
                    for a in 0..terms {
                        let ra = &chunk.r[a];
                        for j in 0..q {
                            rtz[a][(j, k)] += ra[(i, j)];
                        }
                    }
                }
            }
        });

        let dependent = dependent_columns(&sts);
        if !dependent.is_empty() {
            return Err(Error::SingularFit(
                dependent.into_iter().map(|j| null_labels[j].clone()).collect(),
            ));
        }

        Ok(Self {
            n,
            null_labels,
            term_labels,
            q,
            n_subjects: ns,
            yty: y.norm_squared(),
            y,
            design,
            q_list,
            sts,
            sty,
            str_,
            rty,
            rtr,
            ztz,
            zty,
            stz,
            rtz,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Null-space dimension `m`.
    pub fn null_dim(&self) -> usize {
        self.null_labels.len()
    }

    pub fn knot_count(&self) -> usize {
        self.q
    }

    pub fn penalized_terms(&self) -> usize {
        self.q_list.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn has_random_intercept(&self) -> bool {
        self.n_subjects > 0
    }

    /// Total number of coefficients `m + q + S`.
    pub fn dim(&self) -> usize {
        self.null_dim() + self.q + self.n_subjects
    }

    pub fn q_list(&self) -> &[DMatrix<f64>] {
        &self.q_list
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn column_label(&self, j: usize) -> String {
        let m = self.null_dim();
        if j < m {
            self.null_labels[j].clone()
        } else if j < m + self.q {
            format!("kernel[{}]", j - m)
        } else {
            format!("subject[{}]", j - m - self.q)
        }
    }

    pub fn null_labels(&self) -> &[String] {
        &self.null_labels
    }

    pub fn term_labels(&self) -> &[String] {
        &self.term_labels
    }
}
