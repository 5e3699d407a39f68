//! First-order MAP solvers: fixed-step gradient descent and an Armijo
//! backtracking variant, stopping on the γ-norm of the gradient.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::objective::{Objective, WindowedObjective};
use crate::path::{gamma_inner_raw, GammaWeight, PathVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    Fixed,
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub step_mode: StepMode,
    /// Step for fixed mode; initial trial step for backtracking.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop once `‖∇U‖_γ ≤ grad_tol`. `None` means `1e-8·√(n+1)`.
    pub grad_tol: Option<f64>,
    pub gamma: GammaWeight,
}

impl SolverConfig {
    pub fn fixed(step_size: f64, max_iters: usize) -> Self {
        Self {
            step_mode: StepMode::Fixed,
            step_size,
            max_iters,
            grad_tol: None,
            gamma: GammaWeight::ONE,
        }
    }

    pub fn backtracking(max_iters: usize) -> Self {
        Self {
            step_mode: StepMode::Backtracking,
            step_size: 1.0,
            max_iters,
            grad_tol: None,
            gamma: GammaWeight::ONE,
        }
    }

    pub fn with_grad_tol(mut self, tol: f64) -> Self {
        self.grad_tol = Some(tol);
        self
    }

    pub fn with_gamma(mut self, gamma: GammaWeight) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Model(format!("step size must be positive, got {}", self.step_size)));
        }
        if self.max_iters == 0 {
            return Err(Error::Model("max_iters must be at least 1".into()));
        }
        if let Some(t) = self.grad_tol {
            if !(t >= 0.0) {
                return Err(Error::Model(format!("grad_tol must be nonnegative, got {t}")));
            }
        }
        Ok(())
    }

    pub fn tolerance_for(&self, horizon: usize) -> f64 {
        self.grad_tol.unwrap_or(1e-8 * ((horizon + 1) as f64).sqrt())
    }
}

/// Outcome of a solve. The solution path is omitted from the JSON form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub solution: PathVector,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub objective_value: f64,
    pub wall_clock_seconds: f64,
    pub converged: bool,
}

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Runs the configured descent on any objective.
pub fn solve<O: Objective>(obj: &O, cfg: &SolverConfig, init: Option<&PathVector>) -> Result<SolveReport> {
    solve_traced(obj, cfg, init, None)
}

/// As [`solve`], additionally recording the objective after every accepted
/// backtracking step.
pub fn solve_traced<O: Objective>(
    obj: &O,
    cfg: &SolverConfig,
    init: Option<&PathVector>,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SolveReport> {
    cfg.validate()?;
    let started = Instant::now();
    let (n, d) = (obj.horizon(), obj.dim());
    let mut x = match init {
        Some(x0) => {
            if x0.horizon() != n || x0.dim() != d {
                return Err(Error::Shape(format!(
                    "initial path has horizon {} and dimension {}, expected {n} and {d}",
                    x0.horizon(),
                    x0.dim()
                )));
            }
            x0.clone()
        }
        None => PathVector::zeros(n, d),
    };
    let gamma = cfg.gamma.value();
    let tol = cfg.tolerance_for(n);
    let mut g = PathVector::zeros(n, d);
    obj.gradient_into(&x, &mut g);
    let mut gnorm = check_norm(gamma_inner_raw(g.as_slice(), g.as_slice(), d, gamma).sqrt(), 0)?;
    let mut iterations = 0;

    match cfg.step_mode {
        StepMode::Fixed => {
            let h = cfg.step_size;
            while iterations < cfg.max_iters && gnorm > tol {
                for (xi, gi) in x.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *xi -= h * gi;
                }
                iterations += 1;
                obj.gradient_into(&x, &mut g);
                gnorm = check_norm(gamma_inner_raw(g.as_slice(), g.as_slice(), d, gamma).sqrt(), iterations)?;
            }
        }
        StepMode::Backtracking => {
            let mut u = check_value(obj.value(&x), 0)?;
            if let Some(t) = trace.as_deref_mut() {
                t.push(u);
            }
            let mut trial = x.clone();
            let mut g_new = PathVector::zeros(n, d);
            let mut h = cfg.step_size;
            while iterations < cfg.max_iters && gnorm > tol {
                let g2 = gamma_inner_raw(g.as_slice(), g.as_slice(), d, 1.0);
                let mut accepted = false;
                for _ in 0..MAX_HALVINGS {
                    for ((ti, xi), gi) in trial.as_mut_slice().iter_mut().zip(x.as_slice()).zip(g.as_slice()) {
                        *ti = xi - h * gi;
                    }
                    let u_new = obj.value(&trial);
                    if u_new.is_finite() {
                        let scale = 1.0 + u.abs();
                        if (u - u_new).abs() <= 1e-12 * scale {
                            // Near the optimum ΔU is lost to rounding; use the
                            // trapezoidal estimate of the decrease from gradients.
                            obj.gradient_into(&trial, &mut g_new);
                            let cross = gamma_inner_raw(g_new.as_slice(), g.as_slice(), d, 1.0);
                            if 0.5 * h * (g2 + cross) >= ARMIJO_C * h * g2 {
                                u = u_new;
                                accepted = true;
                                break;
                            }
                        } else if u_new <= u - ARMIJO_C * h * g2 {
                            obj.gradient_into(&trial, &mut g_new);
                            u = u_new;
                            accepted = true;
                            break;
                        }
                    }
                    h *= 0.5;
                }
                if !accepted {
                    break;
                }
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut g, &mut g_new);
                iterations += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(u);
                }
                gnorm = check_norm(gamma_inner_raw(g.as_slice(), g.as_slice(), d, gamma).sqrt(), iterations)?;
                h = (2.0 * h).min(cfg.step_size);
            }
        }
    }
    let objective_value = check_value(obj.value(&x), iterations)?;
    Ok(SolveReport {
        converged: gnorm <= tol,
        solution: x,
        iterations,
        final_grad_norm: gnorm,
        objective_value,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

fn check_norm(v: f64, iteration: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence {
            iteration,
            detail: "gradient is not finite; the step size is likely too large".into(),
        })
    }
}

fn check_value(v: f64, iteration: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence {
            iteration,
            detail: "objective is not finite".into(),
        })
    }
}

/// MAP path over the model's whole horizon.
pub fn solve_map(model: &ModelSpec, cfg: &SolverConfig, init: Option<&PathVector>) -> Result<SolveReport> {
    solve(&WindowedObjective::full(model), cfg, init)
}

pub fn solve_windowed(obj: &WindowedObjective<'_>, cfg: &SolverConfig, init: Option<&PathVector>) -> Result<SolveReport> {
    solve(obj, cfg, init)
}
