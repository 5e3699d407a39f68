//! Binary spike data and the pairwise-coupling likelihoods built on it.
//!
//! The latent state at each time bin holds one coupling `x^{ij}` per pair
//! of neurons `i < j`, ordered lexicographically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest population for which the exact normalizer is enumerated.
pub const MAX_EXACT_NEURONS: usize = 10;

/// Number of coupling coordinates for `n` neurons.
pub fn pair_count(neurons: usize) -> usize {
    neurons * neurons.saturating_sub(1) / 2
}

/// Position of the pair `(i, j)`, `i < j`, in the state vector.
#[inline]
pub fn pair_index(neurons: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < neurons);
    i * neurons - i * (i + 1) / 2 + (j - i - 1)
}

/// Spike indicators `y[n][k][i]` for time bin `n`, trial `k`, neuron `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrains {
    neurons: usize,
    trials: usize,
    bins: usize,
    bin_width: Option<f64>,
    data: Vec<u8>,
    rates: Vec<f64>,
}

impl SpikeTrains {
    /// Builds from per-trial matrices `trials[k][n][i]`; rates are the
    /// empirical means over all bins and trials.
    pub fn from_trials(trials: &[Vec<Vec<u8>>], bin_width: Option<f64>) -> Result<Self> {
        let r = trials.len();
        if r == 0 {
            return Err(Error::Model("spike data needs at least one trial".into()));
        }
        let bins = trials[0].len();
        let neurons = trials[0].first().map(Vec::len).unwrap_or(0);
        if bins == 0 || neurons < 2 {
            return Err(Error::Model("spike data needs at least one bin and two neurons".into()));
        }
        let mut data = vec![0u8; bins * r * neurons];
        for (k, trial) in trials.iter().enumerate() {
            if trial.len() != bins {
                return Err(Error::Model(format!("trial {k} has {} bins, expected {bins}", trial.len())));
            }
            for (n, row) in trial.iter().enumerate() {
                if row.len() != neurons {
                    return Err(Error::Model(format!(
                        "trial {k} bin {n} has {} neurons, expected {neurons}",
                        row.len()
                    )));
                }
                for (i, &v) in row.iter().enumerate() {
                    if v > 1 {
                        return Err(Error::Model(format!("spike entries must be 0 or 1, got {v}")));
                    }
                    data[(n * r + k) * neurons + i] = v;
                }
            }
        }
        let mut rates = vec![0.0; neurons];
        for chunk in data.chunks_exact(neurons) {
            for (c, &v) in rates.iter_mut().zip(chunk) {
                *c += v as f64;
            }
        }
        let total = (bins * r) as f64;
        rates.iter_mut().for_each(|c| *c /= total);
        Ok(Self {
            neurons,
            trials: r,
            bins,
            bin_width,
            data,
            rates,
        })
    }

    /// Replaces the rates `c^i`, which must lie in `[0, 1]`.
    pub fn with_rates(mut self, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != self.neurons || rates.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Model("rates must have one entry in [0, 1] per neuron".into()));
        }
        self.rates = rates;
        Ok(self)
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }
    pub fn trials(&self) -> usize {
        self.trials
    }
    pub fn bins(&self) -> usize {
        self.bins
    }
    pub fn bin_width(&self) -> Option<f64> {
        self.bin_width
    }
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    #[inline]
    pub fn spike(&self, n: usize, k: usize, i: usize) -> u8 {
        self.data[(n * self.trials + k) * self.neurons + i]
    }

    /// Spikes of all neurons in bin `n`, trial `k`.
    #[inline]
    pub fn row(&self, n: usize, k: usize) -> &[u8] {
        let start = (n * self.trials + k) * self.neurons;
        &self.data[start..start + self.neurons]
    }

    /// Trial `k` as a bins × neurons matrix.
    pub fn trial_matrix(&self, k: usize) -> Vec<Vec<u8>> {
        (0..self.bins).map(|n| self.row(n, k).to_vec()).collect()
    }

    /// Observations `0..=n` only.
    pub fn truncated(&self, bins: usize) -> SpikeTrains {
        let bins = bins.min(self.bins);
        SpikeTrains {
            data: self.data[..bins * self.trials * self.neurons].to_vec(),
            bins,
            ..self.clone()
        }
    }

    /// Permutes time bins: bin `m` of the result is bin `perm[m]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> SpikeTrains {
        let stride = self.trials * self.neurons;
        let mut data = Vec::with_capacity(self.data.len());
        for &src in perm {
            data.extend_from_slice(&self.data[src * stride..(src + 1) * stride]);
        }
        SpikeTrains {
            data,
            bins: perm.len(),
            ..self.clone()
        }
    }
}

/// Per-neuron fields `z^i_{n,k} = (1/R) Σ_{j≠i} x^{ij} (y^j_{n,k} - c^j)` of the pseudo-likelihood.
pub fn neural_pseudo_field(spikes: &SpikeTrains, x: &[f64], n: usize, k: usize) -> Result<Vec<f64>> {
    let big_n = spikes.neurons;
    if x.len() != pair_count(big_n) {
        return Err(Error::Shape(format!(
            "coupling vector has length {}, expected {}",
            x.len(),
            pair_count(big_n)
        )));
    }
    if n >= spikes.bins {
        return Err(Error::Index { index: n, range: format!("0..{}", spikes.bins) });
    }
    if k >= spikes.trials {
        return Err(Error::Index { index: k, range: format!("0..{}", spikes.trials) });
    }
    let mut z = vec![0.0; big_n];
    let centered: Vec<f64> = spikes
        .row(n, k)
        .iter()
        .zip(&spikes.rates)
        .map(|(&y, c)| y as f64 - c)
        .collect();
    pseudo_fields_into(x, &centered, big_n, spikes.trials as f64, &mut z);
    Ok(z)
}

#[inline]
pub(crate) fn pseudo_fields_into(x: &[f64], centered: &[f64], neurons: usize, r: f64, z: &mut [f64]) {
    z.iter_mut().for_each(|v| *v = 0.0);
    let mut p = 0;
    for i in 0..neurons {
        for j in i + 1..neurons {
            let xij = x[p];
            z[i] += xij * centered[j];
            z[j] += xij * centered[i];
            p += 1;
        }
    }
    z.iter_mut().for_each(|v| *v /= r);
}

/// `log(1 + e^t)` without overflow.
#[inline]
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// All `2^N` centred spike configurations `y - c`.
pub(crate) fn centered_configurations(rates: &[f64]) -> Vec<Vec<f64>> {
    let n = rates.len();
    (0..1u32 << n)
        .map(|mask| {
            (0..n)
                .map(|i| ((mask >> i) & 1) as f64 - rates[i])
                .collect()
        })
        .collect()
}

#[inline]
pub(crate) fn pair_energy(x: &[f64], u: &[f64]) -> f64 {
    let n = u.len();
    let mut p = 0;
    let mut e = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            e += x[p] * u[i] * u[j];
            p += 1;
        }
    }
    e
}

/// `A(x) = log Σ_y exp(Σ_{i<j} x^{ij}(y^i-c^i)(y^j-c^j))` by enumeration.
pub(crate) fn log_partition(x: &[f64], configs: &[Vec<f64>]) -> f64 {
    let energies: Vec<f64> = configs.iter().map(|u| pair_energy(x, u)).collect();
    let top = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + energies.iter().map(|e| (e - top).exp()).sum::<f64>().ln()
}

/// `∇A(x)`: model expectation of `(y^i-c^i)(y^j-c^j)` for every pair.
pub(crate) fn log_partition_grad(x: &[f64], configs: &[Vec<f64>]) -> Vec<f64> {
    let energies: Vec<f64> = configs.iter().map(|u| pair_energy(x, u)).collect();
    let top = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = energies.iter().map(|e| (e - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut grad = vec![0.0; x.len()];
    for (u, w) in configs.iter().zip(&weights) {
        let n = u.len();
        let mut p = 0;
        for i in 0..n {
            for j in i + 1..n {
                grad[p] += w * u[i] * u[j];
                p += 1;
            }
        }
    }
    grad.iter_mut().for_each(|g| *g /= total);
    grad
}
