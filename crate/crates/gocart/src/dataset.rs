//! Paired covariate/response samples: x_i in [0,1]^d, y_i in R^p.

use serde::{Deserialize, Serialize};

use crate::dpt::Hyperrectangle;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    d: usize,
    p: usize,
    n: usize,
    /// Row-major n x d.
    x: Vec<f64>,
    /// Row-major n x p.
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(d: usize, p: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if d == 0 || p == 0 {
            return Err(Error::Data("dimensions must be positive".into()));
        }
        if x.len() % d != 0 || y.len() % p != 0 || x.len() / d != y.len() / p {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p,
            });
        }
        let n = x.len() / d;
        Ok(Dataset { d, p, n, x, y })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn covariate_dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn response_dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.p..(i + 1) * self.p]
    }

    /// Indices of samples whose covariate lies in `rect` (half-open rule).
    pub fn indices_in(&self, rect: &Hyperrectangle) -> Vec<usize> {
        (0..self.n).filter(|&i| rect.contains(self.x_row(i))).collect()
    }

    /// Concatenated responses for the given sample indices.
    pub fn gather_y(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.p);
        for &i in indices {
            out.extend_from_slice(self.y_row(i));
        }
        out
    }

    pub fn check_compatible(&self, other: &Dataset) -> Result<()> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        if self.p != other.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: other.p,
            });
        }
        Ok(())
    }
}
