//! Uniform one-dimensional cell grid shared by the particle and
//! finite-volume solvers.

use serde::Serialize;

/// Uniform cells over `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
}

impl Grid {
    pub fn new(domain: [f64; 2], nx: usize) -> Self {
        Self {
            x_min: domain[0],
            x_max: domain[1],
            nx,
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    /// Cell of `x`; the right edge belongs to the last cell.
    #[inline]
    pub fn cell(&self, x: f64) -> usize {
        let k = ((x - self.x_min) / self.dx()).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.nx - 1)
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    pub fn centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nx)
            .map(|k| self.x_min + (k as f64 + 0.5) * dx)
            .collect()
    }
}
