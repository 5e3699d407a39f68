#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use viterbi_par::models::{simulate, DriftMap, HuberNonlinearSignal, LinearGaussianSignal};
use viterbi_par::{Likelihood, ModelSpec, PathVector, Signal};

pub const FAMILIES: [&str; 5] = ["gaussian", "student_t", "stoch_vol", "neural_pseudo", "neural_exact"];
pub const SIGNALS: [&str; 2] = ["linear_gaussian", "huber"];

/// Three neurons give `d = 3`, so every family shares one state dimension.
pub const DIM: usize = 3;

pub fn linear_signal(d: usize) -> Signal {
    let a = DMatrix::from_fn(d, d, |i, j| if i == j { 0.6 } else { 0.1 / d as f64 });
    let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 0.5 } else { 0.1 });
    let sigma0 = DMatrix::identity(d, d) * 2.0;
    let b = (0..d).map(|i| 0.1 * i as f64).collect();
    Signal::LinearGaussian(LinearGaussianSignal::new(a, b, sigma, vec![0.0; d], sigma0).unwrap())
}

pub fn huber_signal(d: usize) -> Signal {
    let drift = DriftMap {
        matrix: DMatrix::from_fn(d, d, |i, j| if i == j { 0.5 } else { 0.05 }),
        tanh_scale: 0.3,
    };
    Signal::Huber(HuberNonlinearSignal::new(drift, vec![0.05; d], vec![0.0; d], 1.5, None).unwrap())
}

pub fn signal(name: &str, d: usize) -> Signal {
    match name {
        "linear_gaussian" => linear_signal(d),
        "huber" => huber_signal(d),
        _ => panic!("unknown signal {name}"),
    }
}

pub fn likelihood(name: &str, d: usize) -> Likelihood {
    match name {
        "gaussian" => Likelihood::Gaussian {
            c: DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.2 }),
            r: DMatrix::identity(d, d) * 0.5,
        },
        "student_t" => Likelihood::StudentT { dof: 3.0 },
        "stoch_vol" => Likelihood::StochVol {
            loadings: DMatrix::from_fn(d, 2, |i, j| 0.3 + 0.1 * (i + j) as f64),
            factors: Vec::new(),
        },
        "neural_pseudo" => Likelihood::NeuralPseudo { neurons: 3, trials: 4 },
        "neural_exact" => Likelihood::NeuralExact { neurons: 3, trials: 4 },
        _ => panic!("unknown likelihood {name}"),
    }
}

/// A model with simulated observations; StochVol factors come from the simulation.
pub fn model(signal_name: &str, family: &str, horizon: usize, seed: u64) -> ModelSpec {
    let s = signal(signal_name, DIM);
    let lik = likelihood(family, DIM);
    let sim = simulate(&s, &lik, horizon, seed).unwrap();
    let lik = match (lik, sim.factors) {
        (Likelihood::StochVol { loadings, .. }, Some(f)) => Likelihood::StochVol { loadings, factors: f },
        (l, _) => l,
    };
    ModelSpec::new(s, lik, sim.observations).unwrap()
}

pub fn all_models(horizon: usize, seed: u64) -> Vec<(String, ModelSpec)> {
    let mut out = Vec::new();
    for s in SIGNALS {
        for f in FAMILIES {
            out.push((format!("{s}/{f}"), model(s, f, horizon, seed)));
        }
    }
    out
}

/// Scalar AR(1) with Gaussian emission: `A = aI`, `Σ = σ²I`, stationary `Σ₀`, `C = I`, `R = rI`.
pub fn isotropic_gaussian(d: usize, a: f64, sigma2: f64, r: f64, horizon: usize, seed: u64) -> ModelSpec {
    let s = Signal::LinearGaussian(LinearGaussianSignal::isotropic_ar1(d, a, sigma2, true).unwrap());
    let lik = Likelihood::Gaussian {
        c: DMatrix::identity(d, d),
        r: DMatrix::identity(d, d) * r,
    };
    let sim = simulate(&s, &lik, horizon, seed).unwrap();
    ModelSpec::new(s, lik, sim.observations).unwrap()
}

pub fn random_path(horizon: usize, d: usize, scale: f64, seed: u64) -> PathVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..(horizon + 1) * d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    PathVector::from_flat(d, data).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_diff(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(floor)
}
