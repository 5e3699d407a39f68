//! Observation densities `g(x, y)` and their per-time caches.

use nalgebra::DMatrix;

use super::neural::{
    centered_configurations, log_partition, log_partition_grad, pair_count, pseudo_fields_into,
    sigmoid, softplus, SpikeTrains, MAX_EXACT_NEURONS,
};
use crate::error::{Error, Result};
use crate::linalg::{check_spd, BlockOp};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// The likelihood family of a model, with its fixed parameters.
#[derive(Debug, Clone)]
pub enum Likelihood {
    /// `y = C x + v`, `v ~ N(0, R)`.
    Gaussian { c: DMatrix<f64>, r: DMatrix<f64> },
    /// Coordinate-wise `x`-centred Student-t density with `dof` degrees of freedom.
    StudentT { dof: f64 },
    /// Factor model with log-variances `x`: `y = B z + diag(e^{x/2}) ε`.
    StochVol { loadings: DMatrix<f64>, factors: Vec<Vec<f64>> },
    /// Product of per-neuron logistic conditionals.
    NeuralPseudo { neurons: usize, trials: usize },
    /// Pairwise random field with its exact normalizer; at most ten neurons.
    NeuralExact { neurons: usize, trials: usize },
}

impl Likelihood {
    pub fn name(&self) -> &'static str {
        match self {
            Likelihood::Gaussian { .. } => "gaussian",
            Likelihood::StudentT { .. } => "student_t",
            Likelihood::StochVol { .. } => "stoch_vol",
            Likelihood::NeuralPseudo { .. } => "neural_pseudo",
            Likelihood::NeuralExact { .. } => "neural_exact",
        }
    }

    /// Known semi-log-concavity constant `λ_g` of the family.
    pub fn semi_log_concavity(&self) -> f64 {
        match self {
            Likelihood::Gaussian { c, r } => {
                let rinv = BlockOp::from_matrix(r).inverse_spd().map(|o| o.to_dense());
                match rinv {
                    Ok(rinv) => {
                        let info = c.transpose() * rinv * c;
                        -crate::linalg::sym_eig_extremes(&info).0
                    }
                    Err(_) => f64::NAN,
                }
            }
            // sup_u ∂²/∂x² log g, attained at u² = 3ν.
            Likelihood::StudentT { dof } => (dof + 1.0) / (8.0 * dof),
            Likelihood::StochVol { .. }
            | Likelihood::NeuralPseudo { .. }
            | Likelihood::NeuralExact { .. } => 0.0,
        }
    }
}

/// Time-indexed observation storage.
#[derive(Debug, Clone, PartialEq)]
pub enum Observations {
    Vectors(Vec<Vec<f64>>),
    Spikes(SpikeTrains),
}

impl Observations {
    pub fn len(&self) -> usize {
        match self {
            Observations::Vectors(v) => v.len(),
            Observations::Spikes(s) => s.bins(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn truncated(&self, bins: usize) -> Observations {
        match self {
            Observations::Vectors(v) => Observations::Vectors(v[..bins.min(v.len())].to_vec()),
            Observations::Spikes(s) => Observations::Spikes(s.truncated(bins)),
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Observations {
        match self {
            Observations::Vectors(v) => Observations::Vectors(perm.iter().map(|&i| v[i].clone()).collect()),
            Observations::Spikes(s) => Observations::Spikes(s.permuted(perm)),
        }
    }
}

/// Per-family caches derived from the likelihood and the observations.
#[derive(Debug, Clone)]
pub(crate) enum Emission {
    Gaussian {
        c: DMatrix<f64>,
        c_op: Option<BlockOp>,
        r_inv: BlockOp,
        info: BlockOp,
        /// `Cᵀ R⁻¹ y_t`, one block per time.
        h: Vec<f64>,
        y: Vec<f64>,
        p: usize,
        log_norm: f64,
    },
    StudentT {
        dof: f64,
        y: Vec<f64>,
        log_norm: f64,
    },
    StochVol {
        /// `(y_t - B z_t)²` coordinate-wise.
        resid_sq: Vec<f64>,
        log_norm: f64,
    },
    NeuralPseudo {
        neurons: usize,
        trials: usize,
        centered: Vec<f64>,
        spikes: Vec<f64>,
    },
    NeuralExact {
        /// Trial-averaged centred pair products.
        sbar: Vec<f64>,
        configs: Vec<Vec<f64>>,
    },
}

fn flatten(v: &[Vec<f64>], width: usize, what: &str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(v.len() * width);
    for (t, row) in v.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Model(format!(
                "{what} at time {t} has length {}, expected {width}",
                row.len()
            )));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::Model(format!("{what} at time {t} is not finite")));
        }
        out.extend_from_slice(row);
    }
    Ok(out)
}

impl Emission {
    pub(crate) fn prepare(lik: &Likelihood, obs: &Observations, dim: usize) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::Model("observations must cover at least time 0".into()));
        }
        match (lik, obs) {
            (Likelihood::Gaussian { c, r }, Observations::Vectors(ys)) => {
                let p = c.nrows();
                if c.ncols() != dim || r.nrows() != p || r.ncols() != p {
                    return Err(Error::Model(format!(
                        "Gaussian emission needs C of size p x {dim} and R of size p x p"
                    )));
                }
                check_spd(r, "R")?;
                let r_op = BlockOp::from_matrix(r);
                let r_inv = r_op.inverse_spd()?;
                let ct_rinv = c.transpose() * r_inv.to_dense();
                let info = BlockOp::from_matrix(&(&ct_rinv * c));
                let y = flatten(ys, p, "observation")?;
                let mut h = Vec::with_capacity(ys.len() * dim);
                for yt in y.chunks_exact(p) {
                    let v = &ct_rinv * nalgebra::DVector::from_column_slice(yt);
                    h.extend(v.iter());
                }
                let c_op = (p == dim).then(|| BlockOp::from_matrix(c));
                Ok(Emission::Gaussian {
                    c: c.clone(),
                    c_op,
                    r_inv,
                    info,
                    h,
                    y,
                    p,
                    log_norm: -0.5 * (p as f64 * LN_2PI + r_op.log_det_spd()?),
                })
            }
            (Likelihood::StudentT { dof }, Observations::Vectors(ys)) => {
                if !(*dof > 0.0 && dof.is_finite()) {
                    return Err(Error::Model(format!("dof must be positive, got {dof}")));
                }
                let y = flatten(ys, dim, "observation")?;
                let nu = *dof;
                let log_norm = libm::lgamma(0.5 * (nu + 1.0))
                    - libm::lgamma(0.5 * nu)
                    - 0.5 * (nu * std::f64::consts::PI).ln();
                Ok(Emission::StudentT { dof: nu, y, log_norm })
            }
            (Likelihood::StochVol { loadings, factors }, Observations::Vectors(ys)) => {
                if loadings.nrows() != dim {
                    return Err(Error::Model(format!("B must have {dim} rows")));
                }
                if factors.len() < ys.len() {
                    return Err(Error::Model(format!(
                        "factors cover {} times but observations cover {}",
                        factors.len(),
                        ys.len()
                    )));
                }
                let q = loadings.ncols();
                let y = flatten(ys, dim, "observation")?;
                let z = flatten(&factors[..ys.len()], q, "factor")?;
                let mut resid_sq = Vec::with_capacity(y.len());
                for (yt, zt) in y.chunks_exact(dim).zip(z.chunks_exact(q)) {
                    let bz = loadings * nalgebra::DVector::from_column_slice(zt);
                    resid_sq.extend(yt.iter().zip(bz.iter()).map(|(a, b)| (a - b) * (a - b)));
                }
                Ok(Emission::StochVol {
                    resid_sq,
                    log_norm: -0.5 * dim as f64 * LN_2PI,
                })
            }
            (
                Likelihood::NeuralPseudo { neurons, trials } | Likelihood::NeuralExact { neurons, trials },
                Observations::Spikes(s),
            ) => {
                if s.neurons() != *neurons || s.trials() != *trials {
                    return Err(Error::Model(format!(
                        "spike data has {} neurons x {} trials, model expects {neurons} x {trials}",
                        s.neurons(),
                        s.trials()
                    )));
                }
                if dim != pair_count(*neurons) {
                    return Err(Error::Model(format!(
                        "state dimension {dim} must equal N(N-1)/2 = {}",
                        pair_count(*neurons)
                    )));
                }
                let rates = s.rates();
                if let Likelihood::NeuralExact { .. } = lik {
                    if *neurons > MAX_EXACT_NEURONS {
                        return Err(Error::Size(format!(
                            "exact neural likelihood supports at most {MAX_EXACT_NEURONS} neurons, got {neurons}"
                        )));
                    }
                    let mut sbar = vec![0.0; s.bins() * dim];
                    for n in 0..s.bins() {
                        let out = &mut sbar[n * dim..(n + 1) * dim];
                        for k in 0..*trials {
                            let u: Vec<f64> =
                                s.row(n, k).iter().zip(rates).map(|(&y, c)| y as f64 - c).collect();
                            let mut p = 0;
                            for i in 0..*neurons {
                                for j in i + 1..*neurons {
                                    out[p] += u[i] * u[j];
                                    p += 1;
                                }
                            }
                        }
                        out.iter_mut().for_each(|v| *v /= *trials as f64);
                    }
                    return Ok(Emission::NeuralExact {
                        sbar,
                        configs: centered_configurations(rates),
                    });
                }
                let mut centered = Vec::with_capacity(s.bins() * trials * neurons);
                let mut spikes = Vec::with_capacity(centered.capacity());
                for n in 0..s.bins() {
                    for k in 0..*trials {
                        for (&y, c) in s.row(n, k).iter().zip(rates) {
                            centered.push(y as f64 - c);
                            spikes.push(y as f64);
                        }
                    }
                }
                Ok(Emission::NeuralPseudo {
                    neurons: *neurons,
                    trials: *trials,
                    centered,
                    spikes,
                })
            }
            (lik, _) => Err(Error::Model(format!(
                "observation storage does not match the {} likelihood",
                lik.name()
            ))),
        }
    }

    /// `log g(x, y_t)`.
    pub(crate) fn log_g(&self, t: usize, x: &[f64]) -> f64 {
        let d = x.len();
        match self {
            Emission::Gaussian { c, c_op, r_inv, y, p, log_norm, .. } => {
                let yt = &y[t * p..(t + 1) * p];
                let cx: Vec<f64> = match c_op {
                    Some(op) => op.apply(x),
                    None => (c * nalgebra::DVector::from_column_slice(x)).iter().copied().collect(),
                };
                let e: Vec<f64> = yt.iter().zip(&cx).map(|(a, b)| a - b).collect();
                log_norm - 0.5 * r_inv.quad_form(&e)
            }
            Emission::StudentT { dof, y, log_norm } => {
                let yt = &y[t * d..(t + 1) * d];
                x.iter()
                    .zip(yt)
                    .map(|(xi, yi)| {
                        let u = yi - xi;
                        log_norm - 0.5 * (dof + 1.0) * (u * u / dof).ln_1p()
                    })
                    .sum()
            }
            Emission::StochVol { resid_sq, log_norm } => {
                let r = &resid_sq[t * d..(t + 1) * d];
                log_norm
                    - 0.5
                        * x.iter()
                            .zip(r)
                            .map(|(xi, ri)| xi + ri * (-xi).exp())
                            .sum::<f64>()
            }
            Emission::NeuralPseudo { neurons, trials, centered, spikes } => {
                let stride = neurons * trials;
                let mut z = vec![0.0; *neurons];
                let mut acc = 0.0;
                for k in 0..*trials {
                    let off = t * stride + k * neurons;
                    pseudo_fields_into(x, &centered[off..off + neurons], *neurons, *trials as f64, &mut z);
                    for i in 0..*neurons {
                        acc -= softplus(-spikes[off + i] * z[i]);
                    }
                }
                acc
            }
            Emission::NeuralExact { sbar, configs } => {
                let s = &sbar[t * d..(t + 1) * d];
                x.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() - log_partition(x, configs)
            }
        }
    }

    /// `out += s · ∇_x log g(x, y_t)`.
    #[inline]
    pub(crate) fn grad_add(&self, t: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let d = x.len();
        match self {
            Emission::Gaussian { info, h, .. } => {
                let ht = &h[t * d..(t + 1) * d];
                for i in 0..d {
                    out[i] += scale * ht[i];
                }
                info.apply_add(x, -scale, out);
            }
            Emission::StudentT { dof, y, .. } => {
                let yt = &y[t * d..(t + 1) * d];
                for i in 0..d {
                    let u = yt[i] - x[i];
                    out[i] += scale * (dof + 1.0) * u / (dof + u * u);
                }
            }
            Emission::StochVol { resid_sq, .. } => {
                let r = &resid_sq[t * d..(t + 1) * d];
                for i in 0..d {
                    out[i] += scale * 0.5 * (r[i] * (-x[i]).exp() - 1.0);
                }
            }
            Emission::NeuralPseudo { neurons, trials, centered, spikes } => {
                let n = *neurons;
                let stride = n * trials;
                let rr = *trials as f64;
                let mut z = vec![0.0; n];
                let mut w = vec![0.0; n];
                for k in 0..*trials {
                    let off = t * stride + k * n;
                    let u = &centered[off..off + n];
                    pseudo_fields_into(x, u, n, rr, &mut z);
                    for i in 0..n {
                        let y = spikes[off + i];
                        // d/dz log σ(y z) = y σ(-y z)
                        w[i] = y * sigmoid(-y * z[i]);
                    }
                    let mut p = 0;
                    for i in 0..n {
                        for j in i + 1..n {
                            out[p] += scale * (w[i] * u[j] + w[j] * u[i]) / rr;
                            p += 1;
                        }
                    }
                }
            }
            Emission::NeuralExact { sbar, configs } => {
                let s = &sbar[t * d..(t + 1) * d];
                let e = log_partition_grad(x, configs);
                for i in 0..d {
                    out[i] += scale * (s[i] - e[i]);
                }
            }
        }
    }

    /// Gaussian information matrix `Cᵀ R⁻¹ C`, if this is the Gaussian family.
    pub(crate) fn gaussian_info(&self) -> Option<&BlockOp> {
        match self {
            Emission::Gaussian { info, .. } => Some(info),
            _ => None,
        }
    }

    pub(crate) fn stoch_vol_resid_sq(&self, t: usize, d: usize) -> Option<&[f64]> {
        match self {
            Emission::StochVol { resid_sq, .. } => Some(&resid_sq[t * d..(t + 1) * d]),
            _ => None,
        }
    }
}
