use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// Uniform discretization of a truncated real line [x_min, x_max].
///
/// The grid must straddle the origin and carry at least 11 points; spacing is
/// h = (x_max − x_min)/(n − 1), exactly uniform since points are generated as
/// x_min + i·h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() {
            return Err(CoreError::InvalidGrid("bounds must be finite".into()));
        }
        if n < 11 {
            return Err(CoreError::InvalidGrid(format!("n = {n} < 11")));
        }
        if !(x_min < 0.0 && 0.0 < x_max) {
            return Err(CoreError::InvalidGrid(format!(
                "grid must straddle the origin, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Grid { x_min, x_max, n })
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    /// Index of the grid point nearest to x (clamped to the grid).
    pub fn nearest_index(&self, x: f64) -> usize {
        let i = ((x - self.x_min) / self.spacing()).round();
        (i.max(0.0) as usize).min(self.n - 1)
    }

    /// Trapezoid-rule integral of sampled values over the whole grid.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        let h = self.spacing();
        let interior: f64 = values[1..self.n - 1].iter().sum();
        h * (0.5 * (values[0] + values[self.n - 1]) + interior)
    }

    /// Trapezoid inner product ∫ f g dx of two sample arrays.
    pub fn inner_product(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n);
        debug_assert_eq!(g.len(), self.n);
        let h = self.spacing();
        let mut acc = 0.5 * (f[0] * g[0] + f[self.n - 1] * g[self.n - 1]);
        for i in 1..self.n - 1 {
            acc += f[i] * g[i];
        }
        h * acc
    }
}
