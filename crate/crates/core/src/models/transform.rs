//! Collocation transforms between eigen-coefficients and grid values on `(0, pi)`.
//!
//! Functions live in `L^2((0, pi), dx/pi)`; with that normalisation the
//! Neumann basis is `1, sqrt(2) cos(kx), ...` and the Dirichlet basis is
//! `sqrt(2) sin(kx)`, so a constant function has coefficient equal to its
//! value. Analysis uses the midpoint rule on `M` cells, which is exact for
//! trigonometric products of total degree below `2M`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// `cos(kx)`, `k = 0..N`: homogeneous Neumann conditions.
    Cosine,
    /// `sin(kx)`, `k = 1..=N`: homogeneous Dirichlet conditions.
    Sine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformPair {
    kind: BasisKind,
    modes: usize,
    grid_size: usize,
    /// `basis[j * modes + k] = e_k(x_j)`.
    basis: Vec<f64>,
}

impl TransformPair {
    /// Default grid of `2(N + 1)` points: cubic products stay alias-free.
    pub fn new(kind: BasisKind, modes: usize) -> Self {
        Self::with_grid(kind, modes, 2 * (modes + 1))
    }

    pub fn with_grid(kind: BasisKind, modes: usize, grid_size: usize) -> Self {
        assert!(modes > 0 && grid_size >= 2 * modes, "grid must hold at least 2N points");
        let mut basis = Vec::with_capacity(grid_size * modes);
        for j in 0..grid_size {
            let x = (j as f64 + 0.5) * PI / grid_size as f64;
            for k in 0..modes {
                basis.push(match kind {
                    BasisKind::Cosine if k == 0 => 1.0,
                    BasisKind::Cosine => SQRT_2 * (k as f64 * x).cos(),
                    BasisKind::Sine => SQRT_2 * ((k + 1) as f64 * x).sin(),
                });
            }
        }
        Self {
            kind,
            modes,
            grid_size,
            basis,
        }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn grid_points(&self) -> Vec<f64> {
        (0..self.grid_size)
            .map(|j| (j as f64 + 0.5) * PI / self.grid_size as f64)
            .collect()
    }

    /// Grid values `u(x_j)` from coefficients.
    pub fn synthesis(&self, coeffs: &[f64], grid: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.modes);
        for (j, g) in grid.iter_mut().enumerate() {
            let row = &self.basis[j * self.modes..(j + 1) * self.modes];
            *g = row.iter().zip(coeffs).map(|(b, c)| b * c).sum();
        }
    }

    /// Coefficients of the truncated `L^2(dx/pi)` projection of grid values.
    pub fn analysis(&self, grid: &[f64], coeffs: &mut [f64]) {
        debug_assert_eq!(grid.len(), self.grid_size);
        coeffs.iter_mut().for_each(|c| *c = 0.0);
        for (j, &g) in grid.iter().enumerate() {
            let row = &self.basis[j * self.modes..(j + 1) * self.modes];
            for (c, b) in coeffs.iter_mut().zip(row) {
                *c += g * b;
            }
        }
        let w = 1.0 / self.grid_size as f64;
        coeffs.iter_mut().for_each(|c| *c *= w);
    }
}
