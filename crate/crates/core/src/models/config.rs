//! JSON model configuration.
//!
//! ```json
//! {
//!   "dim": 2,
//!   "signal": { "type": "linear_gaussian", "a": 0.5, "sigma": 1.0, "sigma0": 1.0 },
//!   "likelihood": { "type": "gaussian", "c": 1.0, "r": [[1.0, 0.0], [0.0, 2.0]] }
//! }
//! ```
//!
//! Matrices are row-major nested arrays; a bare number stands for that multiple
//! of the identity. Vectors may likewise be given as a single number.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    DriftMap, HuberNonlinearSignal, Likelihood, LinearGaussianSignal, LipschitzBounds, ModelSpec,
    Observations, Signal,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn to_matrix(&self, rows: usize, cols: usize, name: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Scalar(v) => {
                if rows != cols {
                    return Err(Error::Model(format!("{name}: a scalar needs a square shape")));
                }
                Ok(DMatrix::from_diagonal_element(rows, cols, *v))
            }
            MatrixSpec::Rows(r) => {
                if r.len() != rows || r.iter().any(|row| row.len() != cols) {
                    return Err(Error::Model(format!("{name} must be {rows} x {cols}")));
                }
                Ok(DMatrix::from_fn(rows, cols, |i, j| r[i][j]))
            }
        }
    }

    /// Matrix with `rows` rows and whatever column count the data gives.
    fn to_matrix_rows(&self, rows: usize, name: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Scalar(_) => self.to_matrix(rows, rows, name),
            MatrixSpec::Rows(r) => self.to_matrix(rows, r.first().map_or(0, Vec::len), name),
        }
    }

    /// Matrix with `cols` columns and whatever row count the data gives.
    fn to_matrix_cols(&self, cols: usize, name: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Scalar(_) => self.to_matrix(cols, cols, name),
            MatrixSpec::Rows(r) => self.to_matrix(r.len(), cols, name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Scalar(f64),
    Values(Vec<f64>),
}

impl Default for VectorSpec {
    fn default() -> Self {
        VectorSpec::Scalar(0.0)
    }
}

impl VectorSpec {
    pub fn to_vec(&self, len: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            VectorSpec::Scalar(v) => Ok(vec![*v; len]),
            VectorSpec::Values(v) if v.len() == len => Ok(v.clone()),
            VectorSpec::Values(v) => Err(Error::Model(format!("{name} has length {}, expected {len}", v.len()))),
        }
    }
}

fn identity() -> MatrixSpec {
    MatrixSpec::Scalar(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalConfig {
    LinearGaussian {
        a: MatrixSpec,
        #[serde(default)]
        b: VectorSpec,
        #[serde(default = "identity")]
        sigma: MatrixSpec,
        #[serde(default)]
        b0: VectorSpec,
        /// Omitted: the stationary covariance when `a` is a scalar with `|a| < 1`, else `sigma`.
        #[serde(default)]
        sigma0: Option<MatrixSpec>,
    },
    Huber {
        drift_matrix: MatrixSpec,
        #[serde(default)]
        tanh_scale: f64,
        #[serde(default)]
        b: VectorSpec,
        #[serde(default)]
        b0: VectorSpec,
        huber_c: f64,
        #[serde(default)]
        lipschitz: Option<LipschitzBounds>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LikelihoodConfig {
    Gaussian {
        #[serde(default = "identity")]
        c: MatrixSpec,
        #[serde(default = "identity")]
        r: MatrixSpec,
    },
    StudentT {
        #[serde(default = "one")]
        dof: f64,
    },
    StochVol {
        loadings: MatrixSpec,
    },
    NeuralPseudo {
        neurons: usize,
        trials: usize,
    },
    NeuralExact {
        neurons: usize,
        trials: usize,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub signal: SignalConfig,
    pub likelihood: LikelihoodConfig,
    #[serde(default)]
    pub chi: Option<f64>,
    #[serde(default)]
    pub lambda_g: Option<f64>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(text)?;
        if cfg.dim == 0 {
            return Err(Error::Model("dim must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn build_signal(&self) -> Result<Signal> {
        let d = self.dim;
        match &self.signal {
            SignalConfig::LinearGaussian { a, b, sigma, b0, sigma0 } => {
                let am = a.to_matrix(d, d, "a")?;
                let sm = sigma.to_matrix(d, d, "sigma")?;
                let s0 = match (sigma0, a) {
                    (Some(s0), _) => s0.to_matrix(d, d, "sigma0")?,
                    (None, MatrixSpec::Scalar(av)) if av.abs() < 1.0 => &sm / (1.0 - av * av),
                    (None, _) => sm.clone(),
                };
                Ok(Signal::LinearGaussian(LinearGaussianSignal::new(
                    am,
                    b.to_vec(d, "b")?,
                    sm,
                    b0.to_vec(d, "b0")?,
                    s0,
                )?))
            }
            SignalConfig::Huber { drift_matrix, tanh_scale, b, b0, huber_c, lipschitz } => {
                let drift = DriftMap {
                    matrix: drift_matrix.to_matrix(d, d, "drift_matrix")?,
                    tanh_scale: *tanh_scale,
                };
                Ok(Signal::Huber(HuberNonlinearSignal::new(
                    drift,
                    b.to_vec(d, "b")?,
                    b0.to_vec(d, "b0")?,
                    *huber_c,
                    *lipschitz,
                )?))
            }
        }
    }

    /// The likelihood; `factors` supplies the StochVol factor series when known.
    pub fn build_likelihood(&self, factors: Option<Vec<Vec<f64>>>) -> Result<Likelihood> {
        let d = self.dim;
        Ok(match &self.likelihood {
            LikelihoodConfig::Gaussian { c, r } => {
                let cm = c.to_matrix_cols(d, "c")?;
                let p = cm.nrows();
                Likelihood::Gaussian {
                    c: cm,
                    r: r.to_matrix(p, p, "r")?,
                }
            }
            LikelihoodConfig::StudentT { dof } => Likelihood::StudentT { dof: *dof },
            LikelihoodConfig::StochVol { loadings } => Likelihood::StochVol {
                loadings: loadings.to_matrix_rows(d, "loadings")?,
                factors: factors.unwrap_or_default(),
            },
            LikelihoodConfig::NeuralPseudo { neurons, trials } => Likelihood::NeuralPseudo {
                neurons: *neurons,
                trials: *trials,
            },
            LikelihoodConfig::NeuralExact { neurons, trials } => Likelihood::NeuralExact {
                neurons: *neurons,
                trials: *trials,
            },
        })
    }

    pub fn build_model(&self, observations: Observations, factors: Option<Vec<Vec<f64>>>) -> Result<ModelSpec> {
        let mut model = ModelSpec::new(self.build_signal()?, self.build_likelihood(factors)?, observations)?;
        if self.chi.is_some() {
            model = model.with_chi(self.chi)?;
        }
        if let Some(l) = self.lambda_g {
            model = model.with_lambda_g(l)?;
        }
        Ok(model)
    }
}
