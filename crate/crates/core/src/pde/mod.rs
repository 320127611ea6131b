//! Spatial discretization of the time-reversed pricing PDE.

pub mod axis;
pub mod grid;
pub mod operators;
pub mod smoothing;

pub use axis::{Axis, AxisKind};
pub use grid::Grid;
pub use operators::{
    assemble_operators, coefficients_at, time_coefficient_lambda, time_coefficient_lambda_slope,
    OperatorCoeffs, Part, SplitOperators,
};
pub use smoothing::smooth_payoff;

use crate::error::{FmmError, Result};

/// Mesh family for every axis after the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeshKind {
    /// Axis 1 uniform, the others sinh-stretched around the strike.
    #[default]
    NonUniform,
    Uniform,
}

/// Resolution and extent of a PDE grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// `M_k` per axis.
    pub resolution: Vec<usize>,
    /// `R_k^max` per axis.
    pub r_max: Vec<f64>,
    pub mesh: MeshKind,
    /// Stretch `L_k` as a multiple of the strike.
    pub stretch: f64,
}

impl GridSpec {
    pub const DEFAULT_STRETCH: f64 = 0.1;

    /// `R_max = max(0.5, 30 K_ATM)` for the given ATM strike.
    pub fn default_r_max(k_atm: f64) -> f64 {
        (30.0 * k_atm).max(0.5)
    }

    /// `L` intervals on each of `n` axes.
    pub fn square(n: usize, l: usize, r_max: f64) -> Self {
        Self {
            resolution: vec![l; n],
            r_max: vec![r_max; n],
            mesh: MeshKind::NonUniform,
            stretch: Self::DEFAULT_STRETCH,
        }
    }

    pub fn with_mesh(mut self, mesh: MeshKind) -> Self {
        self.mesh = mesh;
        self
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    /// Builds the grid for a swaption struck at `strike`.
    pub fn build(&self, strike: f64) -> Result<Grid> {
        if self.resolution.len() != self.r_max.len() || self.resolution.is_empty() {
            return Err(FmmError::config(
                "pde.resolution",
                "needs one resolution and one R_max per axis",
            ));
        }
        let axes = self
            .resolution
            .iter()
            .zip(&self.r_max)
            .enumerate()
            .map(|(k, (&m, &r))| match (k, self.mesh) {
                (0, _) | (_, MeshKind::Uniform) => Axis::uniform(r, m),
                _ => Axis::sinh(strike, r, m, self.stretch * strike),
            })
            .collect::<Result<Vec<_>>>()?;
        Grid::new(axes)
    }
}
