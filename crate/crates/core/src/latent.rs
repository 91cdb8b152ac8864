//! Latent vectors standing in for encoded frames.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A finite real vector of fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentPoint(Vec<f64>);

impl LatentPoint {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("values", "latent dimension must be at least 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent point"));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "latent dimension must be at least 1");
        Self(vec![0.0; dim])
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(vec![v]).expect("finite scalar")
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn ensure_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: self.dim(),
            });
        }
        Ok(())
    }

    /// `a * self + b * other`, coordinate-wise.
    pub fn lin_comb(&self, a: f64, other: &LatentPoint, b: f64) -> LatentPoint {
        debug_assert_eq!(self.dim(), other.dim());
        LatentPoint(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(u, v)| a * u + b * v)
                .collect(),
        )
    }

    pub fn sub(&self, other: &LatentPoint) -> LatentPoint {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn add_scaled(&self, scale: f64, dir: &[f64]) -> LatentPoint {
        debug_assert_eq!(self.dim(), dir.len());
        LatentPoint(self.0.iter().zip(dir).map(|(u, v)| u + scale * v).collect())
    }

    pub fn squared_distance(&self, other: &LatentPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(u, v)| (u - v) * (u - v))
            .sum()
    }

    pub fn max_abs_diff(&self, other: &LatentPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for LatentPoint {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        LatentPoint::new(values)
    }
}

impl From<LatentPoint> for Vec<f64> {
    fn from(p: LatentPoint) -> Self {
        p.0
    }
}

/// Which known endpoint a bridge runs toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BridgeSide {
    /// Previous endpoint `y`.
    Prev,
    /// Next endpoint `z`.
    Next,
}

impl BridgeSide {
    pub const BOTH: [BridgeSide; 2] = [BridgeSide::Prev, BridgeSide::Next];
}

/// An ordered `(y, x, z)` triple: previous endpoint, ground truth, next endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub y: LatentPoint,
    pub x: LatentPoint,
    pub z: LatentPoint,
}

impl Triplet {
    pub fn new(y: LatentPoint, x: LatentPoint, z: LatentPoint) -> Result<Self> {
        x.ensure_dim(y.dim())?;
        z.ensure_dim(y.dim())?;
        Ok(Self { y, x, z })
    }

    pub fn dim(&self) -> usize {
        self.y.dim()
    }

    pub fn endpoint(&self, side: BridgeSide) -> &LatentPoint {
        match side {
            BridgeSide::Prev => &self.y,
            BridgeSide::Next => &self.z,
        }
    }
}
