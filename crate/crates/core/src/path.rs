//! Path vectors and the γ-weighted geometry they live in.
//!
//! A [`PathVector`] stores the blocks `x_0, …, x_n` of a trajectory in
//! `ℝ^d`. Blocks past the horizon are implicitly zero, so every norm here
//! is the norm of the zero-padded infinite sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight `γ ∈ (0, 1]` of the discounted inner product.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GammaWeight(f64);

impl GammaWeight {
    pub const ONE: GammaWeight = GammaWeight(1.0);

    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma <= 1.0 {
            Ok(Self(gamma))
        } else {
            Err(Error::Domain(format!("gamma must lie in (0, 1], got {gamma}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for GammaWeight {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GammaWeight> for f64 {
    fn from(w: GammaWeight) -> f64 {
        w.0
    }
}

/// A finite-horizon trajectory: `horizon + 1` blocks of length `dim`,
/// stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct PathVector {
    dim: usize,
    data: Vec<f64>,
}

impl PathVector {
    pub fn zeros(horizon: usize, dim: usize) -> Self {
        assert!(dim > 0, "path dimension must be positive");
        Self {
            dim,
            data: vec![0.0; (horizon + 1) * dim],
        }
    }

    /// Builds a path from a flat buffer of `(horizon + 1) * dim` finite values.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("path dimension must be positive".into()));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "buffer of length {} is not a positive multiple of dim {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite entry at block {} coordinate {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_blocks(blocks: &[Vec<f64>]) -> Result<Self> {
        let dim = blocks
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Shape("path needs at least one block".into()))?;
        let mut data = Vec::with_capacity(blocks.len() * dim);
        for (m, b) in blocks.iter().enumerate() {
            if b.len() != dim {
                return Err(Error::Shape(format!(
                    "block {m} has length {}, expected {dim}",
                    b.len()
                )));
            }
            data.extend_from_slice(b);
        }
        Self::from_flat(dim, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.data.len() / self.dim - 1
    }

    #[inline]
    pub fn num_blocks(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn block(&self, m: usize) -> &[f64] {
        &self.data[m * self.dim..(m + 1) * self.dim]
    }

    #[inline]
    pub fn block_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.dim..(m + 1) * self.dim]
    }

    pub fn blocks(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &PathVector) -> bool {
        self.dim == other.dim && self.data.len() == other.data.len()
    }

    pub(crate) fn check_shape(&self, other: &PathVector) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "paths ({} blocks x {}) and ({} blocks x {}) differ",
                self.num_blocks(),
                self.dim,
                other.num_blocks(),
                other.dim
            )))
        }
    }

    /// Copy of blocks `start..=end`.
    pub fn sub_path(&self, start: usize, end: usize) -> PathVector {
        assert!(start <= end && end <= self.horizon());
        PathVector {
            dim: self.dim,
            data: self.data[start * self.dim..(end + 1) * self.dim].to_vec(),
        }
    }

    /// Zero-extends (or truncates) to a new horizon.
    pub fn resized(&self, horizon: usize) -> PathVector {
        let mut data = self.data.clone();
        data.resize((horizon + 1) * self.dim, 0.0);
        PathVector {
            dim: self.dim,
            data,
        }
    }

    pub fn scaled(&self, s: f64) -> PathVector {
        PathVector {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &PathVector) -> Result<PathVector> {
        self.check_shape(other)?;
        Ok(PathVector {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + s * b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &PathVector) -> Result<PathVector> {
        self.axpy(-1.0, other)
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &PathVector) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs())))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_m γ^m ⟨x_m, y_m⟩` over raw block buffers.
pub(crate) fn gamma_inner_raw(x: &[f64], y: &[f64], dim: usize, gamma: f64) -> f64 {
    let mut weight = 1.0;
    let mut acc = 0.0;
    for (xb, yb) in x.chunks_exact(dim).zip(y.chunks_exact(dim)) {
        acc += weight * dot(xb, yb);
        weight *= gamma;
    }
    acc
}

/// Discounted inner product `⟨x, y⟩_γ = Σ_m γ^m ⟨x_m, y_m⟩`.
pub fn gamma_inner(x: &PathVector, y: &PathVector, w: GammaWeight) -> Result<f64> {
    x.check_shape(y)?;
    Ok(gamma_inner_raw(&x.data, &y.data, x.dim, w.value()))
}

/// `‖x‖_γ`.
pub fn gamma_norm(x: &PathVector, w: GammaWeight) -> f64 {
    gamma_inner_raw(&x.data, &x.data, x.dim, w.value()).sqrt()
}

/// `‖x‖_{γ,n} = (Σ_m γ^{|m-n|} ‖x_m‖²)^{1/2}`, the norm centred at block `center`.
///
/// The centre may lie past the stored horizon; the zero blocks in between
/// contribute nothing.
pub fn weighted_norm_at(x: &PathVector, center: i64, w: GammaWeight) -> Result<f64> {
    if center < 0 {
        return Err(Error::Domain(format!("centre index must be nonnegative, got {center}")));
    }
    let center = center as usize;
    let gamma = w.value();
    let mut acc = 0.0;
    // Blocks at and after the centre.
    let mut weight = 1.0;
    for m in center..x.num_blocks() {
        let b = x.block(m);
        acc += weight * dot(b, b);
        weight *= gamma;
    }
    // Blocks before the centre, walking outward from the nearest stored one.
    let before = center.min(x.num_blocks());
    if before > 0 {
        let mut weight = gamma.powi((center - (before - 1)) as i32);
        for m in (0..before).rev() {
            let b = x.block(m);
            acc += weight * dot(b, b);
            weight *= gamma;
        }
    }
    Ok(acc.sqrt())
}
