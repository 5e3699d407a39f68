//! Seeded synthetic data from a model's generative definition.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::neural::{centered_configurations, pair_energy, pair_count, MAX_EXACT_NEURONS};
use super::{HuberNonlinearSignal, Likelihood, LinearGaussianSignal, Observations, Signal, SpikeTrains};
use crate::error::{Error, Result};
use crate::path::PathVector;

/// Hidden states, observations and, for factor models, the factor series.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub states: PathVector,
    pub observations: Observations,
    pub factors: Option<Vec<Vec<f64>>>,
}

/// Draws `X_0, …, X_horizon` from the signal and observations from the likelihood.
///
/// Parameters carried by `likelihood` that describe data (StochVol factors) are
/// ignored: fresh standard-normal factors are drawn and returned. Spike rates
/// used for generation are ½ for every neuron. Deterministic for a given seed.
pub fn simulate(signal: &Signal, likelihood: &Likelihood, horizon: usize, seed: u64) -> Result<Simulation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = signal.dim();
    let states = match signal {
        Signal::LinearGaussian(s) => simulate_linear(s, horizon, &mut rng)?,
        Signal::Huber(s) => simulate_huber(s, horizon, &mut rng),
    };
    let states = PathVector::from_flat(d, states)?;
    let (observations, factors) = match likelihood {
        Likelihood::Gaussian { c, r } => {
            let l = Cholesky::new(r.clone())
                .ok_or_else(|| Error::Model("R is not positive definite".into()))?
                .l();
            let ys = states
                .blocks()
                .map(|x| {
                    let mean = c * DVector::from_column_slice(x);
                    let e = &l * normal_vec(r.nrows(), &mut rng);
                    (mean + e).iter().copied().collect()
                })
                .collect();
            (Observations::Vectors(ys), None)
        }
        Likelihood::StudentT { dof } => {
            let t = rand_distr::StudentT::new(*dof).map_err(|e| Error::Model(e.to_string()))?;
            let ys = states
                .blocks()
                .map(|x| x.iter().map(|xi| xi + t.sample(&mut rng)).collect())
                .collect();
            (Observations::Vectors(ys), None)
        }
        Likelihood::StochVol { loadings, .. } => {
            let q = loadings.ncols();
            let mut zs = Vec::with_capacity(horizon + 1);
            let ys = states
                .blocks()
                .map(|x| {
                    let z = normal_vec(q, &mut rng);
                    let bz = loadings * &z;
                    zs.push(z.iter().copied().collect());
                    x.iter()
                        .zip(bz.iter())
                        .map(|(xi, m)| m + (0.5 * xi).exp() * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            (Observations::Vectors(ys), Some(zs))
        }
        Likelihood::NeuralExact { neurons, trials } | Likelihood::NeuralPseudo { neurons, trials } => {
            if matches!(likelihood, Likelihood::NeuralExact { .. }) && *neurons > MAX_EXACT_NEURONS {
                return Err(Error::Size(format!(
                    "exact neural simulation supports at most {MAX_EXACT_NEURONS} neurons, got {neurons}"
                )));
            }
            if d != pair_count(*neurons) {
                return Err(Error::Model(format!(
                    "state dimension {d} must equal N(N-1)/2 = {}",
                    pair_count(*neurons)
                )));
            }
            let spikes = simulate_spikes(&states, *neurons, *trials, &mut rng);
            (Observations::Spikes(spikes?), None)
        }
    };
    Ok(Simulation {
        states,
        observations,
        factors,
    })
}

fn normal_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn chol(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(Cholesky::new(m.clone())
        .ok_or_else(|| Error::Model("covariance is not positive definite".into()))?
        .l())
}

fn simulate_linear(s: &LinearGaussianSignal, horizon: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let d = s.dim();
    let l0 = chol(s.sigma0())?;
    let l = chol(s.sigma())?;
    let mut out = Vec::with_capacity((horizon + 1) * d);
    let mut x = DVector::from_column_slice(s.b0()) + &l0 * normal_vec(d, rng);
    out.extend(x.iter());
    let b = DVector::from_column_slice(s.b());
    for _ in 0..horizon {
        let mut next = &b + &l * normal_vec(d, rng);
        s.a_op().apply_add(x.as_slice(), 1.0, next.as_mut_slice());
        x = next;
        out.extend(x.iter());
    }
    Ok(out)
}

/// One draw from the density `∝ exp(-ψ(w))`, `ψ` the Huber function with threshold `c`.
///
/// Mixture of the Gaussian core on `[-c, c]` (mass `√(2πc)·erf(√(c/2))`) and two
/// shifted exponential tails (mass `e^{-c/2}` each).
pub fn sample_huber_noise(c: f64, rng: &mut impl Rng) -> f64 {
    let core = (2.0 * std::f64::consts::PI * c).sqrt() * libm::erf((c / 2.0).sqrt());
    let tail = 2.0 * (-c / 2.0).exp();
    if rng.random::<f64>() * (core + tail) < core {
        let sd = c.sqrt();
        loop {
            let w = sd * rng.sample::<f64, _>(StandardNormal);
            if w.abs() <= c {
                return w;
            }
        }
    } else {
        let w = c + rng.sample::<f64, _>(Exp1);
        if rng.random::<bool>() {
            w
        } else {
            -w
        }
    }
}

fn simulate_huber(s: &HuberNonlinearSignal, horizon: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = s.dim();
    let c = s.huber_c();
    let mut out = Vec::with_capacity((horizon + 1) * d);
    let mut x: Vec<f64> = s.b0().iter().map(|m| m + sample_huber_noise(c, rng)).collect();
    out.extend_from_slice(&x);
    for _ in 0..horizon {
        let mean = s.drift().eval(&x);
        x = mean
            .iter()
            .zip(s.b())
            .map(|(m, b)| m + b + sample_huber_noise(c, rng))
            .collect();
        out.extend_from_slice(&x);
    }
    out
}

/// Gibbs sweeps per bin and trial when the population is too large to enumerate.
const GIBBS_SWEEPS: usize = 50;

fn simulate_spikes(
    states: &PathVector,
    neurons: usize,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SpikeTrains> {
    let rates = vec![0.5; neurons];
    let mut data = vec![vec![vec![0u8; neurons]; states.num_blocks()]; trials];
    let configs = (neurons <= MAX_EXACT_NEURONS).then(|| centered_configurations(&rates));
    for (n, x) in states.blocks().enumerate() {
        let weights = configs.as_ref().map(|cfg| {
            let e: Vec<f64> = cfg.iter().map(|u| pair_energy(x, u)).collect();
            let top = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = e.iter().map(|v| (v - top).exp()).collect();
            rand_distr::weighted::WeightedIndex::new(w).expect("positive weights")
        });
        for trial in data.iter_mut() {
            let row = &mut trial[n];
            match &weights {
                Some(wi) => {
                    let mask = wi.sample(rng);
                    for (i, y) in row.iter_mut().enumerate() {
                        *y = ((mask >> i) & 1) as u8;
                    }
                }
                None => gibbs(x, &rates, row, rng),
            }
        }
    }
    SpikeTrains::from_trials(&data, None)
}

fn gibbs(x: &[f64], rates: &[f64], row: &mut [u8], rng: &mut ChaCha8Rng) {
    let n = row.len();
    for y in row.iter_mut() {
        *y = rng.random::<bool>() as u8;
    }
    for _ in 0..GIBBS_SWEEPS {
        for i in 0..n {
            // Conditional log-odds of y^i = 1 given the rest.
            let mut field = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                field += x[super::pair_index(n, a, b)] * (row[j] as f64 - rates[j]);
            }
            let p = 1.0 / (1.0 + (-field).exp());
            row[i] = (rng.random::<f64>() < p) as u8;
        }
    }
}
