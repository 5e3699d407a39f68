//! Signal priors: the initial density `μ` and transition density `f`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_spd, BlockOp};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `X_n = A X_{n-1} + b + W_n`, `W_n ~ N(0, Σ)`, `X_0 ~ N(b₀, Σ₀)`.
#[derive(Debug, Clone)]
pub struct LinearGaussianSignal {
    a: DMatrix<f64>,
    b: Vec<f64>,
    sigma: DMatrix<f64>,
    b0: Vec<f64>,
    sigma0: DMatrix<f64>,
    // cached operators
    a_op: BlockOp,
    sigma_inv: BlockOp,
    sigma0_inv: BlockOp,
    log_norm: f64,
    log_norm0: f64,
}

impl LinearGaussianSignal {
    pub fn new(
        a: DMatrix<f64>,
        b: Vec<f64>,
        sigma: DMatrix<f64>,
        b0: Vec<f64>,
        sigma0: DMatrix<f64>,
    ) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || !a.is_square() {
            return Err(Error::Model("A must be a nonempty square matrix".into()));
        }
        if b.len() != d || b0.len() != d || sigma.nrows() != d || sigma0.nrows() != d {
            return Err(Error::Model(format!("signal parameters must all have dimension {d}")));
        }
        check_spd(&sigma, "Sigma")?;
        check_spd(&sigma0, "Sigma0")?;
        let sigma_op = BlockOp::from_matrix(&sigma);
        let sigma0_op = BlockOp::from_matrix(&sigma0);
        let log_norm = -0.5 * (d as f64 * LN_2PI + sigma_op.log_det_spd()?);
        let log_norm0 = -0.5 * (d as f64 * LN_2PI + sigma0_op.log_det_spd()?);
        Ok(Self {
            a_op: BlockOp::from_matrix(&a),
            sigma_inv: sigma_op.inverse_spd()?,
            sigma0_inv: sigma0_op.inverse_spd()?,
            a,
            b,
            sigma,
            b0,
            sigma0,
            log_norm,
            log_norm0,
        })
    }

    /// `A = a·I`, `Σ = σ²·I`, zero offsets. With `stationary_start` the
    /// initial covariance is the stationary one, `σ²/(1-a²)·I`.
    pub fn isotropic_ar1(dim: usize, a: f64, sigma2: f64, stationary_start: bool) -> Result<Self> {
        let sigma0 = if stationary_start {
            if a.abs() >= 1.0 {
                return Err(Error::Model("stationary start requires |a| < 1".into()));
            }
            sigma2 / (1.0 - a * a)
        } else {
            sigma2
        };
        Self::new(
            DMatrix::from_diagonal_element(dim, dim, a),
            vec![0.0; dim],
            DMatrix::from_diagonal_element(dim, dim, sigma2),
            vec![0.0; dim],
            DMatrix::from_diagonal_element(dim, dim, sigma0),
        )
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    pub fn b0(&self) -> &[f64] {
        &self.b0
    }
    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }
    pub fn a_op(&self) -> &BlockOp {
        &self.a_op
    }
    pub fn sigma_inv(&self) -> &BlockOp {
        &self.sigma_inv
    }
    pub fn sigma0_inv(&self) -> &BlockOp {
        &self.sigma0_inv
    }

    /// Prior marginal `N(m_t, P_t)` of `X_t`.
    pub fn marginal(&self, t: usize) -> Result<(Vec<f64>, BlockOp)> {
        let mut mean = self.b0.clone();
        let mut cov = BlockOp::from_matrix(&self.sigma0);
        let sigma = BlockOp::from_matrix(&self.sigma);
        let at = self.a_op.transpose();
        for _ in 0..t {
            let mut next_mean = self.b.clone();
            self.a_op.apply_add(&mean, 1.0, &mut next_mean);
            let next_cov = self.a_op.mul(&cov).mul(&at).add(&sigma);
            // Once the recursion reaches its fixed point further steps only
            // shuffle rounding errors.
            let settled = max_rel_change(&mean, &next_mean) <= 1e-15
                && max_rel_change_op(&cov, &next_cov) <= 1e-15;
            mean = next_mean;
            cov = next_cov;
            if settled {
                break;
            }
        }
        Ok((mean, cov))
    }
}

/// Drift `A(x) = M x + k·tanh(x)` (tanh applied coordinate-wise).
#[derive(Debug, Clone)]
pub struct DriftMap {
    pub matrix: DMatrix<f64>,
    pub tanh_scale: f64,
}

/// Maximum of `|d/dx sech²(x)| = |2 sech²(x) tanh(x)|`, attained at `tanh² = 1/3`.
const MAX_SECH2_SLOPE: f64 = 0.769_800_358_919_501;

impl DriftMap {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for i in 0..x.len() {
            let mut acc = self.tanh_scale * x[i].tanh();
            for j in 0..x.len() {
                acc += self.matrix[(i, j)] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut j = self.matrix.clone();
        for i in 0..x.len() {
            let t = x[i].tanh();
            j[(i, i)] += self.tanh_scale * (1.0 - t * t);
        }
        j
    }

    /// `out += s · J_A(x)ᵀ v`.
    pub fn jacobian_transpose_add(&self, x: &[f64], v: &[f64], s: f64, out: &mut [f64]) {
        let d = x.len();
        for j in 0..d {
            let mut acc = 0.0;
            for i in 0..d {
                acc += self.matrix[(i, j)] * v[i];
            }
            let t = x[j].tanh();
            acc += self.tanh_scale * (1.0 - t * t) * v[j];
            out[j] += s * acc;
        }
    }

    /// `(L_A, L_∇A)`: bounds on the Jacobian operator norm and its Lipschitz constant.
    pub fn lipschitz(&self) -> (f64, f64) {
        let m_norm = BlockOp::Dense(self.matrix.clone()).op_norm();
        let k = self.tanh_scale.abs();
        (m_norm + k, k * MAX_SECH2_SLOPE)
    }
}

/// Lipschitz constants `(L_ψ, L_∇ψ, L_A, L_∇A)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzBounds {
    pub l_psi: f64,
    pub l_grad_psi: f64,
    pub l_a: f64,
    pub l_grad_a: f64,
}

/// Huber function with threshold `c` and its derivative.
#[inline]
pub fn huber(w: f64, c: f64) -> f64 {
    if w.abs() <= c {
        w * w / (2.0 * c)
    } else {
        w.abs() - 0.5 * c
    }
}

#[inline]
pub fn huber_grad(w: f64, c: f64) -> f64 {
    (w / c).clamp(-1.0, 1.0)
}

/// `log ∫ e^{-ψ(w)} dw` for the one-dimensional Huber function.
pub fn huber_log_normalizer(c: f64) -> f64 {
    let core = (2.0 * std::f64::consts::PI * c).sqrt() * libm::erf((c / 2.0).sqrt());
    let tails = 2.0 * (-0.5 * c).exp();
    (core + tails).ln()
}

/// `X_n = A(X_{n-1}) + b + W_n`, `W_n ∝ e^{-ψ(w)}`, `X_0 ∝ e^{-ψ(x - b₀)}`,
/// with `ψ` the coordinate-wise Huber function.
#[derive(Debug, Clone)]
pub struct HuberNonlinearSignal {
    drift: DriftMap,
    b: Vec<f64>,
    b0: Vec<f64>,
    huber_c: f64,
    bounds: LipschitzBounds,
    log_z: f64,
}

impl HuberNonlinearSignal {
    /// Builds the signal. Missing Lipschitz bounds are derived from the
    /// drift; supplied ones are spot-checked against it.
    pub fn new(
        drift: DriftMap,
        b: Vec<f64>,
        b0: Vec<f64>,
        huber_c: f64,
        bounds: Option<LipschitzBounds>,
    ) -> Result<Self> {
        let d = drift.matrix.nrows();
        if d == 0 || !drift.matrix.is_square() || b.len() != d || b0.len() != d {
            return Err(Error::Model(format!("Huber signal parameters must have dimension {d}")));
        }
        if !(huber_c > 0.0 && huber_c.is_finite()) {
            return Err(Error::Model(format!("huber_c must be positive, got {huber_c}")));
        }
        let (l_a, l_grad_a) = drift.lipschitz();
        let derived = LipschitzBounds {
            l_psi: (d as f64).sqrt(),
            l_grad_psi: 1.0 / huber_c,
            l_a,
            l_grad_a,
        };
        let bounds = match bounds {
            None => derived,
            Some(user) => {
                let vals = [user.l_psi, user.l_grad_psi, user.l_a, user.l_grad_a];
                if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Model("Lipschitz bounds must be finite and nonnegative".into()));
                }
                spot_check_bounds(&drift, huber_c, &user)?;
                user
            }
        };
        Ok(Self {
            log_z: d as f64 * huber_log_normalizer(huber_c),
            drift,
            b,
            b0,
            huber_c,
            bounds,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }
    pub fn drift(&self) -> &DriftMap {
        &self.drift
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn b0(&self) -> &[f64] {
        &self.b0
    }
    pub fn huber_c(&self) -> f64 {
        self.huber_c
    }
    pub fn bounds(&self) -> LipschitzBounds {
        self.bounds
    }
}

fn spot_check_bounds(drift: &DriftMap, c: f64, b: &LipschitzBounds) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let d = drift.matrix.nrows();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let slack = 1.0 + 1e-9;
    if (d as f64).sqrt() > b.l_psi * slack || 1.0 / c > b.l_grad_psi * slack {
        return Err(Error::Model("supplied Huber gradient bounds are smaller than the Huber function's".into()));
    }
    for _ in 0..64 {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let jx = drift.jacobian(&x);
        let jy = drift.jacobian(&y);
        let nx = BlockOp::Dense(jx.clone()).op_norm();
        if nx > b.l_a * slack {
            return Err(Error::Model(format!("drift Jacobian norm {nx} exceeds L_A = {}", b.l_a)));
        }
        let dist = DVector::from_iterator(d, x.iter().zip(&y).map(|(p, q)| p - q)).norm();
        let dj = BlockOp::Dense(jx - jy).op_norm();
        if dj > b.l_grad_a * dist * slack + 1e-12 {
            return Err(Error::Model(format!(
                "drift Jacobian variation {dj} exceeds L_gradA·|x-y| = {}",
                b.l_grad_a * dist
            )));
        }
    }
    Ok(())
}

/// The signal prior of a model.
#[derive(Debug, Clone)]
pub enum Signal {
    LinearGaussian(LinearGaussianSignal),
    Huber(HuberNonlinearSignal),
}

impl Signal {
    pub fn dim(&self) -> usize {
        match self {
            Signal::LinearGaussian(s) => s.dim(),
            Signal::Huber(s) => s.dim(),
        }
    }

    pub fn log_mu(&self, x0: &[f64]) -> f64 {
        match self {
            Signal::LinearGaussian(s) => {
                let e: Vec<f64> = x0.iter().zip(&s.b0).map(|(x, m)| x - m).collect();
                s.log_norm0 - 0.5 * s.sigma0_inv.quad_form(&e)
            }
            Signal::Huber(s) => {
                -x0.iter()
                    .zip(&s.b0)
                    .map(|(x, m)| huber(x - m, s.huber_c))
                    .sum::<f64>()
                    - s.log_z
            }
        }
    }

    /// `out += s · ∇ log μ(x0)`.
    pub fn grad_log_mu_add(&self, x0: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            Signal::LinearGaussian(s) => {
                let e: Vec<f64> = x0.iter().zip(&s.b0).map(|(x, m)| x - m).collect();
                s.sigma0_inv.apply_add(&e, -scale, out);
            }
            Signal::Huber(s) => {
                for ((o, x), m) in out.iter_mut().zip(x0).zip(&s.b0) {
                    *o -= scale * huber_grad(x - m, s.huber_c);
                }
            }
        }
    }

    pub fn log_f(&self, prev: &[f64], cur: &[f64]) -> f64 {
        match self {
            Signal::LinearGaussian(s) => {
                let e = lg_residual(s, prev, cur);
                s.log_norm - 0.5 * s.sigma_inv.quad_form(&e)
            }
            Signal::Huber(s) => {
                let mean = s.drift.eval(prev);
                -cur.iter()
                    .zip(&mean)
                    .zip(&s.b)
                    .map(|((x, m), b)| huber(x - m - b, s.huber_c))
                    .sum::<f64>()
                    - s.log_z
            }
        }
    }

    /// Adds `s·∇_prev log f(prev, cur)` to `g_prev` and `s·∇_cur log f(prev, cur)` to `g_cur`.
    /// `scratch` must hold at least `dim` entries.
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
        match self {
            Signal::LinearGaussian(s) => {
                let d = cur.len();
                let e = &mut scratch[..d];
                for i in 0..d {
                    e[i] = cur[i] - s.b[i];
                }
                s.a_op.apply_add(prev, -1.0, e);
                // w = Σ⁻¹ e, written over the second half of the scratch.
                let (e, rest) = scratch.split_at_mut(d);
                let w = &mut rest[..d];
                w.iter_mut().for_each(|v| *v = 0.0);
                s.sigma_inv.apply_add(e, 1.0, w);
                for i in 0..d {
                    g_cur[i] -= scale * w[i];
                }
                s.a_op.apply_transpose_add(w, scale, g_prev);
            }
            Signal::Huber(s) => {
                let d = cur.len();
                let mean = s.drift.eval(prev);
                let psi = &mut scratch[..d];
                for i in 0..d {
                    psi[i] = huber_grad(cur[i] - mean[i] - s.b[i], s.huber_c);
                    g_cur[i] -= scale * psi[i];
                }
                s.drift.jacobian_transpose_add(prev, psi, scale, g_prev);
            }
        }
    }
}

fn max_rel_change(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn max_rel_change_op(a: &BlockOp, b: &BlockOp) -> f64 {
    let (a, b) = (a.to_dense(), b.to_dense());
    max_rel_change(a.as_slice(), b.as_slice())
}

fn lg_residual(s: &LinearGaussianSignal, prev: &[f64], cur: &[f64]) -> Vec<f64> {
    let mut e: Vec<f64> = cur.iter().zip(&s.b).map(|(x, b)| x - b).collect();
    s.a_op.apply_add(prev, -1.0, &mut e);
    e
}
