//! Reference computations for verification: exact Gaussian smoothing, finite
//! differences, and brute-force neural normalizers. Not intended as solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::neural::{centered_configurations, log_partition, log_partition_grad};
use crate::models::{Likelihood, LinearGaussianSignal, ModelSpec, Observations, Signal, MAX_EXACT_NEURONS};
use crate::path::PathVector;

fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(m.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Model(format!("{what} is not positive definite")))
}

/// Kalman filter followed by the Rauch–Tung–Striebel backward pass.
/// Returns the smoothed means, which are the MAP path of a linear-Gaussian model.
pub fn rts_smoother(
    signal: &LinearGaussianSignal,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    observations: &[Vec<f64>],
) -> Result<PathVector> {
    let d = signal.dim();
    if observations.is_empty() {
        return Err(Error::Model("no observations".into()));
    }
    let a = signal.a();
    let b = DVector::from_column_slice(signal.b());
    let mut m_pred = DVector::from_column_slice(signal.b0());
    let mut p_pred = signal.sigma0().clone();
    let mut filt_m = Vec::with_capacity(observations.len());
    let mut filt_p = Vec::with_capacity(observations.len());
    let mut pred_m = Vec::with_capacity(observations.len());
    let mut pred_p = Vec::with_capacity(observations.len());
    for y in observations {
        let y = DVector::from_column_slice(y);
        let s = c * &p_pred * c.transpose() + r;
        let k = &p_pred * c.transpose() * spd_inverse(&s, "innovation covariance")?;
        let m = &m_pred + &k * (y - c * &m_pred);
        let ikc = DMatrix::identity(d, d) - &k * c;
        // Joseph form keeps the covariance symmetric.
        let p = &ikc * &p_pred * ikc.transpose() + &k * r * k.transpose();
        pred_m.push(m_pred.clone());
        pred_p.push(p_pred.clone());
        m_pred = a * &m + &b;
        p_pred = a * &p * a.transpose() + signal.sigma();
        filt_m.push(m);
        filt_p.push(p);
    }
    let n = observations.len();
    let mut smooth = vec![DVector::zeros(d); n];
    smooth[n - 1] = filt_m[n - 1].clone();
    for t in (0..n - 1).rev() {
        let g = &filt_p[t] * a.transpose() * spd_inverse(&pred_p[t + 1], "predicted covariance")?;
        smooth[t] = &filt_m[t] + g * (&smooth[t + 1] - &pred_m[t + 1]);
    }
    PathVector::from_flat(d, smooth.iter().flat_map(|v| v.iter().copied()).collect())
}

/// [`rts_smoother`] on a model; only linear-Gaussian signals with Gaussian emission qualify.
pub fn rts_smoother_model(model: &ModelSpec) -> Result<PathVector> {
    match (model.signal(), model.likelihood(), model.observations()) {
        (Signal::LinearGaussian(s), Likelihood::Gaussian { c, r }, Observations::Vectors(ys)) => {
            rts_smoother(s, c, r, ys)
        }
        _ => Err(Error::Unsupported(
            "the RTS smoother needs a linear-Gaussian signal with Gaussian emission".into(),
        )),
    }
}

/// Central differences `(f(x + εe_i) − f(x − εe_i)) / 2ε` for every coordinate.
pub fn finite_diff_grad(f: impl Fn(&PathVector) -> f64, x: &PathVector, eps: f64) -> Result<PathVector> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
    }
    let mut probe = x.clone();
    let mut out = vec![0.0; x.as_slice().len()];
    for (i, o) in out.iter_mut().enumerate() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + eps;
        let fp = f(&probe);
        probe.as_mut_slice()[i] = orig - eps;
        let fm = f(&probe);
        probe.as_mut_slice()[i] = orig;
        *o = (fp - fm) / (2.0 * eps);
    }
    PathVector::from_flat(x.dim(), out)
}

fn check_neurons(rates: &[f64], x: &[f64]) -> Result<()> {
    let n = rates.len();
    if n > MAX_EXACT_NEURONS {
        return Err(Error::Size(format!(
            "exact normalizer supports at most {MAX_EXACT_NEURONS} neurons, got {n}"
        )));
    }
    if x.len() != crate::models::pair_count(n) {
        return Err(Error::Shape(format!(
            "coupling vector has length {}, expected {}",
            x.len(),
            crate::models::pair_count(n)
        )));
    }
    Ok(())
}

/// `A(x) = log Σ_{y ∈ {0,1}^N} exp(Σ_{i<j} x^{ij} (y^i − c^i)(y^j − c^j))` by enumeration.
pub fn exact_neural_normalizer(rates: &[f64], x: &[f64]) -> Result<f64> {
    check_neurons(rates, x)?;
    Ok(log_partition(x, &centered_configurations(rates)))
}

/// `∇A(x)`, the model expectation of each centred pair product.
pub fn exact_neural_normalizer_grad(rates: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_neurons(rates, x)?;
    Ok(log_partition_grad(x, &centered_configurations(rates)))
}

/// Dense Hessian of `U^n` for a linear-Gaussian signal with Gaussian emission.
pub fn exact_gaussian_hessian(model: &ModelSpec) -> Result<DMatrix<f64>> {
    let (Signal::LinearGaussian(s), Likelihood::Gaussian { c, r }) = (model.signal(), model.likelihood()) else {
        return Err(Error::Unsupported("exact Hessian needs a linear-Gaussian model".into()));
    };
    let d = s.dim();
    let n = model.horizon();
    let si = spd_inverse(s.sigma(), "Sigma")?;
    let s0i = spd_inverse(s.sigma0(), "Sigma0")?;
    let info = c.transpose() * spd_inverse(r, "R")? * c;
    let a = s.a();
    let ata = a.transpose() * &si * a;
    let off = -(&si * a);
    let mut h = DMatrix::zeros((n + 1) * d, (n + 1) * d);
    for m in 0..=n {
        let mut diag = info.clone();
        diag += if m == 0 { &s0i } else { &si };
        if m < n {
            diag += &ata;
        }
        h.view_mut((m * d, m * d), (d, d)).copy_from(&diag);
        if m < n {
            h.view_mut(((m + 1) * d, m * d), (d, d)).copy_from(&off);
            h.view_mut((m * d, (m + 1) * d), (d, d)).copy_from(&off.transpose());
        }
    }
    Ok(h)
}
