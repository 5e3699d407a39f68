//! Decay-convexity certificates `(ζ, ζ̃, θ)`, the feasible `γ` range, the
//! admissible `λ`, and evaluators for the distance-to-limit bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::BlockOp;
use crate::models::{alpha_from_betas, HuberNonlinearSignal, LinearGaussianSignal, LipschitzBounds, ModelSpec, Signal};
use crate::objective::{hessian_quadratic_form, WindowedObjective, Objective};
use crate::path::{gamma_inner_raw, GammaWeight, PathVector};

/// `γ ∈ (lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaInterval {
    pub lower: f64,
    pub upper: f64,
}

impl GammaInterval {
    pub fn contains(&self, gamma: f64) -> bool {
        gamma > self.lower && gamma <= self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayConvexityCertificate {
    pub family: String,
    pub zeta: f64,
    pub zeta_tilde: f64,
    pub theta: f64,
    pub lambda_g: f64,
    /// `θ < ζ/2 ∧ ζ̃`.
    pub feasible: bool,
    pub gamma_interval: Option<GammaInterval>,
    pub chosen_gamma: Option<f64>,
    pub chosen_lambda: Option<f64>,
    /// Which inequality fails when infeasible.
    pub failure: Option<String>,
}

impl DecayConvexityCertificate {
    /// Builds a certificate from the three constants, choosing `γ` at the
    /// midpoint of the feasible interval and the largest `λ` there.
    pub fn from_constants(family: &str, zeta: f64, zeta_tilde: f64, theta: f64, lambda_g: f64) -> Self {
        let feasible = theta >= 0.0 && theta < (zeta / 2.0).min(zeta_tilde);
        let mut cert = Self {
            family: family.to_string(),
            zeta,
            zeta_tilde,
            theta,
            lambda_g,
            feasible,
            gamma_interval: None,
            chosen_gamma: None,
            chosen_lambda: None,
            failure: None,
        };
        cert.gamma_interval = feasible_gamma_interval(&cert);
        match cert.gamma_interval {
            Some(iv) if feasible => {
                let g = iv.midpoint();
                cert.chosen_gamma = Some(g);
                cert.chosen_lambda = lambda_max(&cert, g).ok();
            }
            _ => {
                cert.feasible = false;
                let mut why = if zeta / 2.0 <= zeta_tilde {
                    format!("theta = {theta} is not below zeta/2 = {}", zeta / 2.0)
                } else {
                    format!("theta = {theta} is not below zeta_tilde = {zeta_tilde}")
                };
                if lambda_g > 0.0 {
                    why.push_str(&format!(
                        "; the likelihood is only semi-log-concave with lambda_g = {lambda_g} > 0"
                    ));
                }
                cert.failure = Some(why);
            }
        }
        cert
    }

    /// Replaces the default `(γ, λ)` choice. `λ` defaults to `lambda_max(γ)` and may not exceed it.
    pub fn with_choice(mut self, gamma: Option<f64>, lambda: Option<f64>) -> Result<Self> {
        if !self.feasible {
            return Err(Error::Certificate(self.failure.clone().unwrap_or_default()));
        }
        let g = gamma.or(self.chosen_gamma).expect("feasible certificates carry a gamma");
        let lmax = lambda_max(&self, g)?;
        let l = lambda.unwrap_or(lmax);
        if !(l > 0.0 && l <= lmax) {
            return Err(Error::Domain(format!("lambda must lie in (0, {lmax}] at gamma = {g}, got {l}")));
        }
        self.chosen_gamma = Some(g);
        self.chosen_lambda = Some(l);
        Ok(self)
    }

    /// `(γ, λ)` of a feasible certificate.
    pub fn choice(&self) -> Result<(f64, f64)> {
        match (self.feasible, self.chosen_gamma, self.chosen_lambda) {
            (true, Some(g), Some(l)) => Ok((g, l)),
            _ => Err(Error::Certificate(
                self.failure.clone().unwrap_or_else(|| "certificate is not feasible".into()),
            )),
        }
    }
}

/// Constants for `X_n = A X_{n-1} + b + W_n` with semi-log-concave likelihood.
pub fn certify_linear_gaussian(signal: &LinearGaussianSignal, lambda_g: f64) -> Result<DecayConvexityCertificate> {
    let (sig_min, sig_max) = BlockOp::from_matrix(signal.sigma()).sym_eig_extremes();
    let (_, sig0_max) = BlockOp::from_matrix(signal.sigma0()).sym_eig_extremes();
    if !(sig_min > 0.0 && sig0_max > 0.0) {
        return Err(Error::Certificate("covariances must be positive definite".into()));
    }
    let (ata_min, ata_max) = signal.a_op().gram_eig_extremes();
    let ata_min = ata_min.max(0.0);
    let zeta = (1.0 + ata_min) / sig_max - lambda_g;
    let zeta_tilde = (1.0 / sig_max).min(1.0 / sig0_max + ata_min / sig_max) - lambda_g;
    let theta = ata_max.max(0.0).sqrt() / sig_min;
    Ok(DecayConvexityCertificate::from_constants(
        "linear_gaussian",
        zeta,
        zeta_tilde,
        theta,
        lambda_g,
    ))
}

/// Constants for the Huber-noise nonlinear signal from its Lipschitz bounds.
pub fn certify_huber_bounds(b: &LipschitzBounds, lambda_g: f64) -> DecayConvexityCertificate {
    let zeta = -(b.l_grad_psi + b.l_a * b.l_a * b.l_grad_psi + b.l_psi * b.l_grad_a) - lambda_g;
    let theta = b.l_grad_psi * b.l_a;
    DecayConvexityCertificate::from_constants("huber", zeta, zeta, theta, lambda_g)
}

pub fn certify_huber(signal: &HuberNonlinearSignal, lambda_g: f64) -> DecayConvexityCertificate {
    certify_huber_bounds(&signal.bounds(), lambda_g)
}

/// Certificate for a model's signal family with the model's `λ_g`.
pub fn certify(model: &ModelSpec) -> Result<DecayConvexityCertificate> {
    match model.signal() {
        Signal::LinearGaussian(s) => certify_linear_gaussian(s, model.lambda_g()),
        Signal::Huber(s) => Ok(certify_huber(s, model.lambda_g())),
    }
}

/// All `γ ∈ (0, 1]` with `ζ > θ(1+γ)²/(2γ)` and `ζ̃ > θ(1+γ)/(2γ)`; `None` if empty.
pub fn feasible_gamma_interval(cert: &DecayConvexityCertificate) -> Option<GammaInterval> {
    let (zeta, zt, theta) = (cert.zeta, cert.zeta_tilde, cert.theta);
    if theta == 0.0 {
        return (zeta > 0.0 && zt > 0.0).then_some(GammaInterval { lower: 0.0, upper: 1.0 });
    }
    // θγ² − 2(ζ−θ)γ + θ < 0 has roots with product one; the smaller is the lower end.
    let p = zeta - theta;
    if !(p > 0.0) || p * p <= theta * theta {
        return None;
    }
    let lower_quad = theta / (p + (p * p - theta * theta).sqrt());
    // γ(2ζ̃ − θ) > θ.
    if !(2.0 * zt - theta > 0.0) {
        return None;
    }
    let lower_lin = theta / (2.0 * zt - theta);
    let lower = lower_quad.max(lower_lin);
    (lower < 1.0).then_some(GammaInterval { lower, upper: 1.0 })
}

/// `{ζ − θ(1+γ)²/(2γ)} ∧ {ζ̃ − θ(1+γ)/(2γ)}` for `γ` in the feasible interval.
pub fn lambda_max(cert: &DecayConvexityCertificate, gamma: f64) -> Result<f64> {
    let iv = feasible_gamma_interval(cert)
        .ok_or_else(|| Error::Domain("the certificate has no feasible gamma".into()))?;
    if !iv.contains(gamma) {
        return Err(Error::Domain(format!(
            "gamma = {gamma} is outside the feasible interval ({}, {}]",
            iv.lower, iv.upper
        )));
    }
    Ok(lambda_rhs(cert, gamma))
}

fn lambda_rhs(cert: &DecayConvexityCertificate, gamma: f64) -> f64 {
    let t = cert.theta * (1.0 + gamma) / (2.0 * gamma);
    (cert.zeta - t * (1.0 + gamma)).min(cert.zeta_tilde - t)
}

/// A bound value together with the last index included in its tail sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundValue {
    pub value: f64,
    /// Terms beyond this index are omitted, so the tail sum underestimates the infinite one.
    pub tail_horizon: usize,
    /// The requested tail horizon exceeded the data and was shortened.
    pub tail_clipped: bool,
}

fn tail(betas: &[f64], gamma: f64, from: usize, to: usize) -> f64 {
    if from > to {
        return 0.0;
    }
    let mut w = gamma.powi(from as i32);
    let mut acc = 0.0;
    for b in &betas[from..=to] {
        acc += w * b;
        w *= gamma;
    }
    acc
}

/// `γⁿ/λ² η_n(α/λ²) + γ^{n+1}/λ² η_{n+1}(γα/λ²) + λ⁻² Σ_{k=n+2}^{K} γ^k β_k`, `α = α_{γ,n}`.
///
/// `eta(m, r)` must bound `η_m(r)`; `betas` must reach index `K = tail_horizon`.
pub fn thm1_bound_from(
    betas: &[f64],
    mut eta: impl FnMut(usize, f64) -> Result<f64>,
    gamma: f64,
    lambda: f64,
    n: usize,
    tail_horizon: usize,
) -> Result<f64> {
    let l2 = lambda * lambda;
    let alpha = alpha_from_betas(betas, gamma, n);
    let gn = gamma.powi(n as i32);
    let first = gn / l2 * eta(n, alpha / l2)?;
    let second = gn * gamma / l2 * eta(n + 1, gamma * alpha / l2)?;
    Ok(first + second + tail(betas, gamma, n + 2, tail_horizon) / l2)
}

/// `λ⁻² (γ^{n−1} α_{γ,n} 2χ/λ² + Σ_{k=n}^{K} γ^k β_k)`.
pub fn thm2_bound_from(betas: &[f64], chi: f64, gamma: f64, lambda: f64, n: usize, tail_horizon: usize) -> f64 {
    let l2 = lambda * lambda;
    let alpha = alpha_from_betas(betas, gamma, n);
    (gamma.powi(n as i32 - 1) * alpha * 2.0 * chi / l2 + tail(betas, gamma, n, tail_horizon)) / l2
}

/// `λ⁻² (γ^{δ−1} (2χ/λ²) α_{γ,Δ+δ} + Σ_{k=δ}^{K} γ^k β_{Δ+k})`.
pub fn cor3_bound_from(
    betas: &[f64],
    chi: f64,
    gamma: f64,
    lambda: f64,
    big_delta: usize,
    delta: usize,
    tail_horizon: usize,
) -> f64 {
    let l2 = lambda * lambda;
    let alpha = alpha_from_betas(betas, gamma, big_delta + delta);
    let mut t = 0.0;
    if delta <= tail_horizon {
        let mut w = gamma.powi(delta as i32);
        for k in delta..=tail_horizon {
            t += w * betas[big_delta + k];
            w *= gamma;
        }
    }
    (gamma.powi(delta as i32 - 1) * 2.0 * chi / l2 * alpha + t) / l2
}

fn clip(requested: usize, available: usize) -> (usize, bool) {
    if requested > available {
        (available, true)
    } else {
        (requested, false)
    }
}

fn require_index(n: usize, horizon: usize) -> Result<()> {
    if n > horizon {
        return Err(Error::Index {
            index: n,
            range: format!("0..={horizon}"),
        });
    }
    Ok(())
}

/// Bound on `sup_{m ≥ n} ‖ξⁿ − ξᵐ‖²_γ` using the model's `η` bound.
pub fn thm1_bound(
    model: &ModelSpec,
    cert: &DecayConvexityCertificate,
    n: usize,
    tail_horizon: usize,
) -> Result<BoundValue> {
    let (gamma, lambda) = cert.choice()?;
    require_index(n + 1, model.horizon())?;
    let w = GammaWeight::new(gamma)?;
    let betas = model.betas();
    let (k, clipped) = clip(tail_horizon, model.horizon());
    let value = thm1_bound_from(&betas, |m, r| model.eta_bound(m, r, w), gamma, lambda, n, k)?;
    Ok(BoundValue {
        value,
        tail_horizon: k,
        tail_clipped: clipped,
    })
}

fn chi_of(model: &ModelSpec) -> Result<f64> {
    model
        .chi()
        .ok_or_else(|| Error::UnsupportedBound("the growth constant chi is not available for this model".into()))
}

/// Bound on `sup_{m ≥ n} ‖ξⁿ − ξᵐ‖²_γ` using `χ`.
pub fn thm2_bound(
    model: &ModelSpec,
    cert: &DecayConvexityCertificate,
    n: usize,
    tail_horizon: usize,
) -> Result<BoundValue> {
    let chi = chi_of(model)?;
    let (gamma, lambda) = cert.choice()?;
    require_index(n, model.horizon())?;
    let (k, clipped) = clip(tail_horizon, model.horizon());
    Ok(BoundValue {
        value: thm2_bound_from(&model.betas(), chi, gamma, lambda, n, k),
        tail_horizon: k,
        tail_clipped: clipped,
    })
}

/// Bound on `sup_n Σ_{m=0}^{Δ} ‖ξ_m^{Δ+δ} − ξ_m^n‖²`, the squared error on the kept
/// part of a first segment `{0..Δ}` solved over `{0..Δ+δ}`.
pub fn cor3_bound(
    model: &ModelSpec,
    cert: &DecayConvexityCertificate,
    big_delta: usize,
    delta: usize,
    tail_horizon: usize,
) -> Result<BoundValue> {
    let chi = chi_of(model)?;
    let (gamma, lambda) = cert.choice()?;
    require_index(big_delta + delta, model.horizon())?;
    let (k, clipped) = clip(tail_horizon, model.horizon() - big_delta);
    Ok(BoundValue {
        value: cor3_bound_from(&model.betas(), chi, gamma, lambda, big_delta, delta, k),
        tail_horizon: k,
        tail_clipped: clipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayConvexityCheck {
    pub trials: usize,
    pub gamma: f64,
    pub lambda: f64,
    /// `min ⟨x−x′, ∇U(x)−∇U(x′)⟩_γ − λ‖x−x′‖²_γ` over the sample.
    pub min_slack: f64,
    /// Same with `γ = 1`.
    pub min_slack_gamma_one: f64,
    /// Both minima scaled by `‖x − x′‖²` of the attaining pair.
    pub min_relative_slack: f64,
    pub min_relative_slack_gamma_one: f64,
}

const SAMPLE_SCALES: [f64; 4] = [0.01, 0.3, 1.0, 10.0];

fn random_path(n: usize, d: usize, scale: f64, rng: &mut ChaCha8Rng) -> PathVector {
    let data = (0..(n + 1) * d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    PathVector::from_flat(d, data).expect("finite samples")
}

/// Samples path pairs and reports the smallest slack in the decay-convexity inequality.
///
/// Trial `t` draws from its own generator seeded with `seed + t`.
pub fn empirical_decay_convexity(
    model: &ModelSpec,
    cert: &DecayConvexityCertificate,
    trials: usize,
    seed: u64,
) -> Result<DecayConvexityCheck> {
    let (gamma, lambda) = match (cert.chosen_gamma, cert.chosen_lambda) {
        (Some(g), Some(l)) => (g, l),
        _ => return Err(Error::Certificate("no (gamma, lambda) choice to check".into())),
    };
    empirical_decay_convexity_at(model, gamma, lambda, trials, seed)
}

/// As [`empirical_decay_convexity`] with explicit `(γ, λ)`, which need not be certified.
pub fn empirical_decay_convexity_at(
    model: &ModelSpec,
    gamma: f64,
    lambda: f64,
    trials: usize,
    seed: u64,
) -> Result<DecayConvexityCheck> {
    if trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    GammaWeight::new(gamma)?;
    let obj = WindowedObjective::full(model);
    let (n, d) = (model.horizon(), model.dim());
    let mut out = DecayConvexityCheck {
        trials,
        gamma,
        lambda,
        min_slack: f64::INFINITY,
        min_slack_gamma_one: f64::INFINITY,
        min_relative_slack: f64::INFINITY,
        min_relative_slack_gamma_one: f64::INFINITY,
    };
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let scale = SAMPLE_SCALES[t % SAMPLE_SCALES.len()];
        let x = random_path(n, d, scale, &mut rng);
        let x2 = if t % 2 == 0 {
            random_path(n, d, scale, &mut rng)
        } else {
            // Nearby pair: probes the local curvature.
            let dx = random_path(n, d, 1e-3 * scale, &mut rng);
            x.axpy(1.0, &dx)?
        };
        let diff = x.sub(&x2)?;
        let gdiff = obj.gradient(&x).sub(&obj.gradient(&x2))?;
        for (g, slack, rel) in [
            (gamma, &mut out.min_slack, &mut out.min_relative_slack),
            (1.0, &mut out.min_slack_gamma_one, &mut out.min_relative_slack_gamma_one),
        ] {
            let inner = gamma_inner_raw(diff.as_slice(), gdiff.as_slice(), d, g);
            let norm2 = gamma_inner_raw(diff.as_slice(), diff.as_slice(), d, g);
            let s = inner - lambda * norm2;
            *slack = slack.min(s);
            if norm2 > 0.0 {
                *rel = rel.min(s / norm2);
            }
        }
    }
    Ok(out)
}

/// Smallest `⟨v, ∇²U(x) v⟩_γ − λ‖v‖²_γ` over random `(x, v)` with `‖v‖_γ = 1`.
pub fn empirical_hessian_slack(model: &ModelSpec, gamma: f64, lambda: f64, trials: usize, seed: u64) -> Result<f64> {
    let w = GammaWeight::new(gamma)?;
    let (n, d) = (model.horizon(), model.dim());
    let mut worst = f64::INFINITY;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let x = random_path(n, d, SAMPLE_SCALES[t % SAMPLE_SCALES.len()], &mut rng);
        let v = random_path(n, d, 1.0, &mut rng);
        let v = v.scaled(1.0 / crate::path::gamma_norm(&v, w));
        worst = worst.min(hessian_quadratic_form(model, &x, &v, w)? - lambda);
    }
    Ok(worst)
}
