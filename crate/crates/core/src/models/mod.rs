//! State-space model specification: signal prior, likelihood, observations,
//! block gradients of the local log-density sums, and the β/α/η/χ bookkeeping.

pub mod config;
mod likelihood;
pub mod neural;
pub mod signal;
pub mod simulate;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use likelihood::{Likelihood, Observations};
pub use neural::{neural_pseudo_field, pair_count, pair_index, SpikeTrains, MAX_EXACT_NEURONS};
pub use signal::{
    huber, huber_grad, huber_log_normalizer, DriftMap, HuberNonlinearSignal, LinearGaussianSignal,
    LipschitzBounds, Signal,
};
pub use simulate::{simulate, Simulation};

use crate::error::{Error, Result};
use crate::linalg::BlockOp;
use crate::path::{weighted_norm_at, GammaWeight, PathVector};
use likelihood::Emission;

/// A complete model: prior, likelihood and the observations it conditions on.
///
/// Immutable after construction; safe to share between threads.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    signal: Signal,
    likelihood: Likelihood,
    observations: Observations,
    emission: Emission,
    chi: Option<f64>,
    lambda_g: f64,
}

impl ModelSpec {
    pub fn new(signal: Signal, likelihood: Likelihood, observations: Observations) -> Result<Self> {
        let emission = Emission::prepare(&likelihood, &observations, signal.dim())?;
        let lambda_g = likelihood.semi_log_concavity();
        let mut model = Self {
            signal,
            likelihood,
            observations,
            emission,
            chi: None,
            lambda_g,
        };
        model.chi = model.gaussian_chi();
        Ok(model)
    }

    /// Overrides the quadratic-growth constant `χ`.
    pub fn with_chi(mut self, chi: Option<f64>) -> Result<Self> {
        if let Some(c) = chi {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Model(format!("chi must be a nonnegative real, got {c}")));
            }
        }
        self.chi = chi;
        Ok(self)
    }

    /// Overrides the semi-log-concavity constant `λ_g` of the likelihood.
    pub fn with_lambda_g(mut self, lambda_g: f64) -> Result<Self> {
        if !lambda_g.is_finite() {
            return Err(Error::Model("lambda_g must be finite".into()));
        }
        self.lambda_g = lambda_g;
        Ok(self)
    }

    /// Same model conditioned on a different observation record.
    pub fn with_observations(&self, observations: Observations) -> Result<Self> {
        let emission = Emission::prepare(&self.likelihood, &observations, self.dim())?;
        Ok(Self {
            observations,
            emission,
            ..self.clone()
        })
    }

    /// Same model with observations truncated to times `0..=horizon`.
    pub fn truncated(&self, horizon: usize) -> Result<Self> {
        if horizon > self.horizon() {
            return Err(Error::Index {
                index: horizon,
                range: format!("0..={}", self.horizon()),
            });
        }
        self.with_observations(self.observations.truncated(horizon + 1))
    }

    pub fn dim(&self) -> usize {
        self.signal.dim()
    }

    /// Largest observed time index.
    pub fn horizon(&self) -> usize {
        self.observations.len() - 1
    }

    pub fn signal(&self) -> &Signal {
        &self.signal
    }

    pub fn likelihood(&self) -> &Likelihood {
        &self.likelihood
    }

    pub fn observations(&self) -> &Observations {
        &self.observations
    }

    pub fn chi(&self) -> Option<f64> {
        self.chi
    }

    pub fn lambda_g(&self) -> f64 {
        self.lambda_g
    }

    pub fn log_mu(&self, x0: &[f64]) -> f64 {
        self.signal.log_mu(x0)
    }

    pub fn log_f(&self, prev: &[f64], cur: &[f64]) -> f64 {
        self.signal.log_f(prev, cur)
    }

    /// `log g(x, y_t)`; `t` must not exceed [`ModelSpec::horizon`].
    pub fn log_g(&self, t: usize, x: &[f64]) -> f64 {
        self.emission.log_g(t, x)
    }

    pub fn grad_log_g_add(&self, t: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        self.emission.grad_add(t, x, scale, out)
    }

    pub fn grad_log_mu_add(&self, x0: &[f64], scale: f64, out: &mut [f64]) {
        self.signal.grad_log_mu_add(x0, scale, out)
    }

    /// See [`Signal::transition_grad_add`]; `scratch` must hold `2·dim` entries.
    #[inline]
    pub fn transition_grad_add(
        &self,
        prev: &[f64],
        cur: &[f64],
        scale: f64,
        g_prev: &mut [f64],
        g_cur: &mut [f64],
        scratch: &mut [f64],
    ) {
        self.signal.transition_grad_add(prev, cur, scale, g_prev, g_cur, scratch)
    }

    /// Upper bound on the Lipschitz constant of `∇U^n`, uniform in `n`, when one is available.
    pub fn gradient_lipschitz_bound(&self) -> Option<f64> {
        let prior = match &self.signal {
            Signal::LinearGaussian(s) => {
                let na = s.a_op().op_norm();
                s.sigma0_inv().op_norm().max(s.sigma_inv().op_norm() * (1.0 + na) * (1.0 + na))
            }
            Signal::Huber(s) => {
                let b = s.bounds();
                b.l_grad_psi * (1.0 + b.l_a) * (1.0 + b.l_a) + b.l_psi * b.l_grad_a
            }
        };
        let emission = match (&self.likelihood, &self.emission) {
            (_, Emission::Gaussian { info, .. }) => info.op_norm(),
            (Likelihood::StudentT { dof }, _) => (dof + 1.0) / dof,
            _ => return None,
        };
        Some(prior + emission)
    }

    fn check_time(&self, n: usize, x: &PathVector) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::Shape(format!("path dimension {} but model dimension {}", x.dim(), self.dim())));
        }
        if n > x.horizon() || n > self.horizon() {
            return Err(Error::Index {
                index: n,
                range: format!("0..={}", x.horizon().min(self.horizon())),
            });
        }
        Ok(())
    }

    /// Gradient in `cur` of the log-density terms touching time `t`.
    fn local_grad(
        &self,
        t: usize,
        prev: Option<&[f64]>,
        cur: &[f64],
        next: Option<&[f64]>,
        with_mu: bool,
    ) -> Vec<f64> {
        let d = cur.len();
        let mut g = vec![0.0; d];
        let mut sink = vec![0.0; d];
        let mut scratch = vec![0.0; 2 * d];
        if with_mu {
            self.grad_log_mu_add(cur, 1.0, &mut g);
        }
        if let Some(p) = prev {
            self.transition_grad_add(p, cur, 1.0, &mut sink, &mut g, &mut scratch);
        }
        if let Some(nx) = next {
            self.transition_grad_add(cur, nx, 1.0, &mut g, &mut sink, &mut scratch);
        }
        self.grad_log_g_add(t, cur, 1.0, &mut g);
        g
    }

    /// `∇_n φ_n(x)`, `φ_n = log f(x_{n-1}, x_n) + log f(x_n, x_{n+1}) + log g(x_n, y_n)`.
    /// Blocks beyond the horizon of `x` are read as zero.
    pub fn grad_phi(&self, x: &PathVector, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Index { index: 0, range: "1..".into() });
        }
        self.check_time(n, x)?;
        let zero = vec![0.0; self.dim()];
        let next = if n < x.horizon() { x.block(n + 1) } else { &zero };
        Ok(self.local_grad(n, Some(x.block(n - 1)), x.block(n), Some(next), false))
    }

    /// `∇_n φ̃_n(x)`: for `n = 0` the prior, forward transition and emission; otherwise
    /// the backward transition and emission.
    pub fn grad_phi_tilde(&self, x: &PathVector, n: usize) -> Result<Vec<f64>> {
        self.check_time(n, x)?;
        if n == 0 {
            let zero = vec![0.0; self.dim()];
            let next = if x.horizon() >= 1 { x.block(1) } else { &zero };
            Ok(self.local_grad(0, None, x.block(0), Some(next), true))
        } else {
            Ok(self.local_grad(n, Some(x.block(n - 1)), x.block(n), None, false))
        }
    }

    /// `β_m = ‖∇φ_m(0)‖² ∨ ‖∇φ̃_m(0)‖²`; at `m = 0` only `φ̃_0` exists.
    pub fn beta_m(&self, m: usize) -> Result<f64> {
        if m > self.horizon() {
            return Err(Error::Index {
                index: m,
                range: format!("0..={}", self.horizon()),
            });
        }
        let z = vec![0.0; self.dim()];
        let sq = |v: Vec<f64>| v.iter().map(|a| a * a).sum::<f64>();
        if m == 0 {
            return Ok(sq(self.local_grad(0, None, &z, Some(&z), true)));
        }
        let interior = sq(self.local_grad(m, Some(&z), &z, Some(&z), false));
        let boundary = sq(self.local_grad(m, Some(&z), &z, None, false));
        Ok(interior.max(boundary))
    }

    /// `β_0, …, β_horizon`.
    pub fn betas(&self) -> Vec<f64> {
        (0..=self.horizon()).map(|m| self.beta_m(m).expect("in range")).collect()
    }

    /// `α_{γ,n} = Σ_{m=0}^{n} γ^{n-m} β_m`.
    pub fn alpha_gamma_n(&self, w: GammaWeight, n: usize) -> Result<f64> {
        if n > self.horizon() {
            return Err(Error::Index {
                index: n,
                range: format!("0..={}", self.horizon()),
            });
        }
        let betas: Vec<f64> = (0..=n).map(|m| self.beta_m(m)).collect::<Result<_>>()?;
        Ok(alpha_from_betas(&betas, w.value(), n))
    }

    /// Certified upper bound on `η_n(r)`.
    ///
    /// With `χ` known this is `β_n + χ r / γ`. Without it, a stochastic-volatility
    /// likelihood over a linear-Gaussian signal uses the model-specific bound
    /// `3r/ρ_min(Σ) · (1 + ρ_max(AᵀA)/(γ ρ_max(I+AᵀA)²)) + ¼ Σ_i (r_i² e^{√r} - 1)`,
    /// where `r_i` are the observation residuals and `ρ_max(I+AᵀA)²` is read as the
    /// square of the largest eigenvalue of `I + AᵀA`. The data term is clamped at zero
    /// from below. The grouping of the source expression is ambiguous and this
    /// reading is not independently certified.
    pub fn eta_bound(&self, n: usize, r: f64, w: GammaWeight) -> Result<f64> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("radius must be a nonnegative real, got {r}")));
        }
        if n > self.horizon() {
            return Err(Error::Index {
                index: n,
                range: format!("0..={}", self.horizon()),
            });
        }
        let gamma = w.value();
        if let Some(chi) = self.chi {
            return Ok(self.beta_m(n)? + chi * r / gamma);
        }
        match (&self.signal, self.emission.stoch_vol_resid_sq(n, self.dim())) {
            (Signal::LinearGaussian(s), Some(res)) => {
                let (sig_min, _) = BlockOp::from_matrix(s.sigma()).sym_eig_extremes();
                let (_, ata_max) = s.a_op().gram_eig_extremes();
                let linear = 3.0 * r / sig_min * (1.0 + ata_max / (gamma * (1.0 + ata_max).powi(2)));
                let grow = r.sqrt().exp();
                let data = 0.25 * res.iter().map(|q| q * grow - 1.0).sum::<f64>();
                Ok(linear + data.max(0.0))
            }
            _ => Err(Error::UnsupportedBound(format!(
                "no chi and no model-specific eta bound for a {} likelihood",
                self.likelihood.name()
            ))),
        }
    }

    /// `χ` for Gaussian emission over a linear-Gaussian signal.
    ///
    /// `∇φ_n` is affine in `(x_{n-1}, x_n, x_{n+1})` with coefficient blocks of operator
    /// norm at most `L`, so its linear part is bounded by `3L²r/γ` on the ball
    /// `‖x‖²_{γ,n} ≤ r`; together with `‖a+b‖² ≤ 2‖a‖² + 2‖b‖²` this gives `χ = 6L²`.
    fn gaussian_chi(&self) -> Option<f64> {
        let (Signal::LinearGaussian(s), Some(info)) = (&self.signal, self.emission.gaussian_info()) else {
            return None;
        };
        let sa = s.sigma_inv().mul(s.a_op());
        let atsa = s.a_op().transpose().mul(&sa);
        let center = s.sigma_inv().add(&atsa).add(info);
        let first = s.sigma0_inv().add(&atsa).add(info);
        let last = s.sigma_inv().add(info);
        let l = [sa.op_norm(), center.op_norm(), first.op_norm(), last.op_norm()]
            .into_iter()
            .fold(0.0_f64, f64::max);
        Some(6.0 * l * l)
    }

    /// Samples `‖∇φ_n(x)‖² ∨ ‖∇φ̃_n(x)‖²` over points with `‖x‖²_{γ,n} = r` for a spread
    /// of radii and returns the largest ratio to [`ModelSpec::eta_bound`]. A value
    /// at most one means no sampled point violated the bound.
    pub fn validate_chi(&self, n: usize, w: GammaWeight, samples: usize, seed: u64) -> Result<f64> {
        let horizon = (n + 1).min(self.horizon());
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0_f64;
        for s in 0..samples {
            let r = 10f64.powi((s % 7) as i32 - 2);
            let data: Vec<f64> = (0..(horizon + 1) * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = PathVector::from_flat(d, data)?;
            let norm = weighted_norm_at(&x, n as i64, w)?;
            if norm == 0.0 {
                continue;
            }
            let x = x.scaled(r.sqrt() / norm);
            let sq = |v: Vec<f64>| v.iter().map(|a| a * a).sum::<f64>();
            let mut eta = sq(self.grad_phi_tilde(&x, n)?);
            if n >= 1 {
                eta = eta.max(sq(self.grad_phi(&x, n)?));
            }
            let bound = self.eta_bound(n, r, w)?;
            if bound > 0.0 {
                worst = worst.max(eta / bound);
            } else if eta > 0.0 {
                worst = f64::INFINITY;
            }
        }
        Ok(worst)
    }
}

/// `Σ_{m=0}^{n} γ^{n-m} β_m` from a precomputed β sequence.
pub fn alpha_from_betas(betas: &[f64], gamma: f64, n: usize) -> f64 {
    betas[..=n].iter().fold(0.0, |acc, b| acc * gamma + b)
}
