//! JSON model files.
//!
//! A model file holds everything inference needs (plan, knots, coefficients,
//! smoothing parameters, variance estimates and the normal-equations matrix),
//! so curves and bands can be produced without refitting. Floats are written
//! with shortest round-trip formatting and parsed exactly.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::CovariatePoint;
use crate::model::ModelPlan;
use crate::solver::{FittedModel, SmoothingParams};

const FORMAT: &str = "ssanova-model/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub plan: ModelPlan,
    pub subjects: Vec<String>,
    pub knots: Vec<CovariatePoint>,
    pub d: Vec<f64>,
    pub c: Vec<f64>,
    pub b_hat: Vec<f64>,
    pub params: SmoothingParams,
    pub sigma2_eps: f64,
    pub sigma2_b: Option<f64>,
    pub trace_a: f64,
    pub criterion_value: f64,
    pub r_squared: f64,
    pub n: usize,
    /// Row-major rows of the penalized normal-equations matrix.
    pub normal_matrix: Vec<Vec<f64>>,
}

impl From<FittedModel> for ModelFile {
    fn from(m: FittedModel) -> Self {
        let p = m.normal_matrix.nrows();
        Self {
            format: FORMAT.into(),
            plan: m.plan,
            subjects: m.subjects,
            knots: m.knots,
            d: m.d.iter().copied().collect(),
            c: m.c.iter().copied().collect(),
            b_hat: m.b_hat.iter().copied().collect(),
            params: m.params,
            sigma2_eps: m.sigma2_eps,
            sigma2_b: m.sigma2_b,
            trace_a: m.trace_a,
            criterion_value: m.criterion_value,
            r_squared: m.r_squared,
            n: m.n,
            normal_matrix: (0..p)
                .map(|i| m.normal_matrix.row(i).iter().copied().collect())
                .collect(),
        }
    }
}

impl TryFrom<ModelFile> for FittedModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format != FORMAT {
            return Err(Error::ModelFile(format!("unsupported format {:?}", f.format)));
        }
        let p = f.normal_matrix.len();
        if f.normal_matrix.iter().any(|r| r.len() != p) {
            return Err(Error::ModelFile("normal matrix is not square".into()));
        }
        let normal = DMatrix::from_fn(p, p, |i, j| f.normal_matrix[i][j]);
        FittedModel::assemble(
            f.plan,
            f.subjects,
            f.knots,
            DVector::from_vec(f.d),
            DVector::from_vec(f.c),
            DVector::from_vec(f.b_hat),
            f.params,
            (f.sigma2_eps, f.sigma2_b, f.trace_a, f.criterion_value, f.r_squared, f.n),
            normal,
            Vec::new(),
        )
    }
}

impl FittedModel {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
