//! The negative log posterior `U^n` over a full horizon or over a window of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::BlockOp;
use crate::models::{ModelSpec, Signal};
use crate::path::{gamma_inner, gamma_norm, GammaWeight, PathVector};
use crate::plan::IndexRange;

/// A smooth objective on paths of fixed shape.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    /// Horizon of the paths this objective accepts.
    fn horizon(&self) -> usize;
    fn value(&self, x: &PathVector) -> f64;
    /// Writes `∇U(x)` into `out`, which must have the shape of `x`.
    fn gradient_into(&self, x: &PathVector, out: &mut PathVector);

    fn gradient(&self, x: &PathVector) -> PathVector {
        let mut out = PathVector::zeros(x.horizon(), x.dim());
        self.gradient_into(x, &mut out);
        out
    }
}

/// Prior term used at the first block of a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// The initial density `μ`; exact only for windows starting at time 0.
    FullPrior,
    /// The prior marginal of `X_a`; linear-Gaussian signals only.
    MarginalPrior,
    /// No prior term at the window start.
    FlatStart,
}

impl BoundaryMode {
    /// `FullPrior` at time 0, `MarginalPrior` for linear-Gaussian signals, `FlatStart` otherwise.
    pub fn default_for(model: &ModelSpec, window: IndexRange) -> Self {
        if window.start == 0 {
            BoundaryMode::FullPrior
        } else if matches!(model.signal(), Signal::LinearGaussian(_)) {
            BoundaryMode::MarginalPrior
        } else {
            BoundaryMode::FlatStart
        }
    }
}

#[derive(Debug, Clone)]
enum StartTerm {
    Mu,
    Gaussian { mean: Vec<f64>, precision: BlockOp, log_norm: f64 },
    Flat,
}

/// `−log pr(x_a, …, x_b | y_a, …, y_b)` up to the window's prior choice.
#[derive(Debug, Clone)]
pub struct WindowedObjective<'a> {
    model: &'a ModelSpec,
    window: IndexRange,
    mode: BoundaryMode,
    start: StartTerm,
}

impl<'a> WindowedObjective<'a> {
    pub fn new(model: &'a ModelSpec, window: IndexRange, mode: BoundaryMode) -> Result<Self> {
        if window.end < window.start || window.end > model.horizon() {
            return Err(Error::Index {
                index: window.end,
                range: format!("window within 0..={}", model.horizon()),
            });
        }
        let start = match mode {
            BoundaryMode::FullPrior => StartTerm::Mu,
            BoundaryMode::FlatStart => StartTerm::Flat,
            BoundaryMode::MarginalPrior => match model.signal() {
                Signal::LinearGaussian(s) => {
                    let (mean, cov) = s.marginal(window.start)?;
                    let d = mean.len() as f64;
                    let log_norm = -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + cov.log_det_spd()?);
                    StartTerm::Gaussian {
                        mean,
                        precision: cov.inverse_spd()?,
                        log_norm,
                    }
                }
                Signal::Huber(_) => {
                    return Err(Error::UnsupportedMode(
                        "marginal-prior windows need a linear-Gaussian signal".into(),
                    ))
                }
            },
        };
        Ok(Self { model, window, mode, start })
    }

    /// Whole horizon with the full prior; this is `U^n` itself.
    pub fn full(model: &'a ModelSpec) -> Self {
        Self {
            model,
            window: IndexRange::new(0, model.horizon()),
            mode: BoundaryMode::FullPrior,
            start: StartTerm::Mu,
        }
    }

    /// Window with the mode chosen by [`BoundaryMode::default_for`].
    pub fn with_default_mode(model: &'a ModelSpec, window: IndexRange) -> Result<Self> {
        Self::new(model, window, BoundaryMode::default_for(model, window))
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    pub fn window(&self) -> IndexRange {
        self.window
    }

    pub fn boundary_mode(&self) -> BoundaryMode {
        self.mode
    }

    fn check(&self, x: &PathVector) -> Result<()> {
        if x.dim() != self.model.dim() || x.num_blocks() != self.window.len() {
            return Err(Error::Shape(format!(
                "expected {} blocks of dimension {}, got {} of dimension {}",
                self.window.len(),
                self.model.dim(),
                x.num_blocks(),
                x.dim()
            )));
        }
        Ok(())
    }

    pub fn try_value(&self, x: &PathVector) -> Result<f64> {
        self.check(x)?;
        Ok(self.value(x))
    }

    pub fn try_gradient(&self, x: &PathVector) -> Result<PathVector> {
        self.check(x)?;
        Ok(self.gradient(x))
    }
}

impl Objective for WindowedObjective<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn horizon(&self) -> usize {
        self.window.len() - 1
    }

    fn value(&self, x: &PathVector) -> f64 {
        let a = self.window.start;
        let x0 = x.block(0);
        let mut u = match &self.start {
            StartTerm::Mu => -self.model.log_mu(x0),
            StartTerm::Gaussian { mean, precision, log_norm } => {
                let e: Vec<f64> = x0.iter().zip(mean).map(|(v, m)| v - m).collect();
                0.5 * precision.quad_form(&e) - log_norm
            }
            StartTerm::Flat => 0.0,
        };
        u -= self.model.log_g(a, x0);
        for m in 1..x.num_blocks() {
            u -= self.model.log_f(x.block(m - 1), x.block(m));
            u -= self.model.log_g(a + m, x.block(m));
        }
        u
    }

    fn gradient_into(&self, x: &PathVector, out: &mut PathVector) {
        let d = x.dim();
        let a = self.window.start;
        let g = out.as_mut_slice();
        g.iter_mut().for_each(|v| *v = 0.0);
        let x0 = x.block(0);
        match &self.start {
            StartTerm::Mu => self.model.grad_log_mu_add(x0, -1.0, &mut g[..d]),
            StartTerm::Gaussian { mean, precision, .. } => {
                let e: Vec<f64> = x0.iter().zip(mean).map(|(v, m)| v - m).collect();
                precision.apply_add(&e, 1.0, &mut g[..d]);
            }
            StartTerm::Flat => {}
        }
        let mut scratch = vec![0.0; 2 * d];
        for m in 0..x.num_blocks() {
            let xm = x.block(m);
            if m > 0 {
                let (before, after) = g.split_at_mut(m * d);
                self.model.transition_grad_add(
                    x.block(m - 1),
                    xm,
                    -1.0,
                    &mut before[(m - 1) * d..],
                    &mut after[..d],
                    &mut scratch,
                );
            }
            self.model.grad_log_g_add(a + m, xm, -1.0, &mut g[m * d..(m + 1) * d]);
        }
    }
}

fn check_full(model: &ModelSpec, x: &PathVector) -> Result<()> {
    if x.horizon() != model.horizon() || x.dim() != model.dim() {
        return Err(Error::Shape(format!(
            "path has horizon {} and dimension {}, model has {} and {}",
            x.horizon(),
            x.dim(),
            model.horizon(),
            model.dim()
        )));
    }
    Ok(())
}

/// `U^n(x) = −log μ(x_0) − Σ log f(x_{m−1}, x_m) − Σ log g(x_m, y_m)`, normalizing
/// constants included.
pub fn eval_u(model: &ModelSpec, x: &PathVector) -> Result<f64> {
    check_full(model, x)?;
    Ok(WindowedObjective::full(model).value(x))
}

/// `∇U^n(x)`.
pub fn grad_u(model: &ModelSpec, x: &PathVector) -> Result<PathVector> {
    check_full(model, x)?;
    Ok(WindowedObjective::full(model).gradient(x))
}

pub fn grad_u_windowed(obj: &WindowedObjective<'_>, x: &PathVector) -> Result<PathVector> {
    obj.try_gradient(x)
}

/// Step scale for the finite-difference directional derivatives.
pub const HESSIAN_FD_EPS: f64 = 1e-5;

/// `⟨v, ∇²U(x) v⟩_γ` from a central difference of gradients along `v`.
pub fn hessian_quadratic_form_of(obj: &impl Objective, x: &PathVector, v: &PathVector, w: GammaWeight) -> Result<f64> {
    x.check_shape(v)?;
    let nv = gamma_norm(v, w);
    if nv == 0.0 {
        return Ok(0.0);
    }
    let eps = HESSIAN_FD_EPS / nv;
    let gp = obj.gradient(&x.axpy(eps, v)?);
    let gm = obj.gradient(&x.axpy(-eps, v)?);
    let diff = gp.sub(&gm)?.scaled(1.0 / (2.0 * eps));
    gamma_inner(v, &diff, w)
}

pub fn hessian_quadratic_form(model: &ModelSpec, x: &PathVector, v: &PathVector, w: GammaWeight) -> Result<f64> {
    check_full(model, x)?;
    hessian_quadratic_form_of(&WindowedObjective::full(model), x, v, w)
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::models::{Likelihood, LinearGaussianSignal, Observations};

    fn unit_model(a: f64, ys: &[f64]) -> ModelSpec {
        let s = LinearGaussianSignal::isotropic_ar1(1, a, 1.0, false).unwrap();
        ModelSpec::new(
            Signal::LinearGaussian(s),
            Likelihood::Gaussian {
                c: DMatrix::identity(1, 1),
                r: DMatrix::identity(1, 1),
            },
            Observations::Vectors(ys.iter().map(|y| vec![*y]).collect()),
        )
        .unwrap()
    }

    #[test]
    fn constants_only_value() {
        let m = unit_model(0.5, &[0.0]);
        let u = eval_u(&m, &PathVector::zeros(0, 1)).unwrap();
        assert!((u - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn decoupled_map_is_stationary() {
        let ys = [1.0, -2.0, 0.5, 3.0];
        let m = unit_model(0.0, &ys);
        let x = PathVector::from_blocks(&ys.iter().map(|y| vec![y / 2.0]).collect::<Vec<_>>()).unwrap();
        let g = grad_u(&m, &x).unwrap();
        assert!(g.as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn gradient_is_affine_in_observations() {
        let m1 = unit_model(0.5, &[0.3, 0.1, -0.2]);
        let m2 = unit_model(0.5, &[1.3, 0.6, -0.4]);
        let x = PathVector::from_blocks(&[vec![0.4], vec![-1.0], vec![2.0]]).unwrap();
        let diff = grad_u(&m2, &x).unwrap().sub(&grad_u(&m1, &x).unwrap()).unwrap();
        for (d, dy) in diff.as_slice().iter().zip([1.0, 0.5, -0.2]) {
            assert!((d + dy).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_errors() {
        let m = unit_model(0.5, &[0.0, 1.0]);
        assert!(matches!(eval_u(&m, &PathVector::zeros(0, 1)), Err(Error::Shape(_))));
        let w = WindowedObjective::new(&m, IndexRange::new(1, 1), BoundaryMode::FlatStart).unwrap();
        assert!(w.try_gradient(&PathVector::zeros(1, 1)).is_err());
        assert!(WindowedObjective::new(&m, IndexRange::new(0, 2), BoundaryMode::FlatStart).is_err());
    }

    #[test]
    fn flat_start_omits_prior() {
        let m = unit_model(0.5, &[0.0, 1.0, 2.0]);
        let flat = WindowedObjective::new(&m, IndexRange::new(1, 2), BoundaryMode::FlatStart).unwrap();
        let x = PathVector::from_blocks(&[vec![0.7], vec![0.1]]).unwrap();
        let g = flat.gradient(&x);
        // Block 0: transition to block 1 and emission at time 1 only.
        let expected = -(0.5 * (0.1 - 0.5 * 0.7)) + (0.7 - 1.0);
        assert!((g.block(0)[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn marginal_mode_needs_linear_signal() {
        use crate::models::{DriftMap, HuberNonlinearSignal};
        let s = HuberNonlinearSignal::new(
            DriftMap {
                matrix: DMatrix::from_element(1, 1, 0.5),
                tanh_scale: 0.0,
            },
            vec![0.0],
            vec![0.0],
            1.0,
            None,
        )
        .unwrap();
        let m = ModelSpec::new(
            Signal::Huber(s),
            Likelihood::StudentT { dof: 1.0 },
            Observations::Vectors(vec![vec![0.0]; 4]),
        )
        .unwrap();
        let r = WindowedObjective::new(&m, IndexRange::new(1, 3), BoundaryMode::MarginalPrior);
        assert!(matches!(r, Err(Error::UnsupportedMode(_))));
        assert_eq!(BoundaryMode::default_for(&m, IndexRange::new(1, 3)), BoundaryMode::FlatStart);
    }
}
