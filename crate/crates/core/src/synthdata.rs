//! Isotropic Gaussian mixture with modes on a square grid.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Geometry of the grid, as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureConfig {
    pub grid_side: usize,
    pub spacing: f64,
    pub sigma: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            grid_side: 5,
            spacing: 2.0,
            sigma: 0.05,
        }
    }
}

impl MixtureConfig {
    pub fn build(&self) -> Result<GridMixture> {
        make_grid(self.grid_side, self.spacing, self.sigma)
    }
}

/// `grid_side^2` equally weighted components centred on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMixture {
    means: Matrix,
    sigma: f64,
    grid_side: usize,
    spacing: f64,
}

pub fn make_grid(grid_side: usize, spacing: f64, sigma: f64) -> Result<GridMixture> {
    if grid_side == 0 || !(spacing > 0.0) || !(sigma > 0.0) {
        return Err(Error::Config(format!(
            "grid needs grid_side >= 1, spacing > 0, sigma > 0 (got {grid_side}, {spacing}, {sigma})"
        )));
    }
    if grid_side > 1 && spacing <= 6.0 * sigma {
        log::warn!(
            "grid spacing {spacing} <= 6 sigma ({}); nearest-mode metrics become ambiguous",
            6.0 * sigma
        );
    }
    let offset = (grid_side as f64 - 1.0) / 2.0;
    let coord = |i: usize| (i as f64 - offset) * spacing;
    let k = grid_side * grid_side;
    let means = Matrix::from_shape_fn((k, 2), |(idx, axis)| {
        if axis == 0 {
            coord(idx / grid_side)
        } else {
            coord(idx % grid_side)
        }
    });
    Ok(GridMixture {
        means,
        sigma,
        grid_side,
        spacing,
    })
}

impl GridMixture {
    pub fn num_modes(&self) -> usize {
        self.means.nrows()
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn mean(&self, k: usize) -> [f64; 2] {
        [self.means[[k, 0]], self.means[[k, 1]]]
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn is_well_separated(&self) -> bool {
        self.grid_side == 1 || self.spacing > 6.0 * self.sigma
    }

    /// `n` i.i.d. points, one row each.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Matrix {
        let mut out = Matrix::zeros((n, 2));
        for mut row in out.rows_mut() {
            let k = rng.random_range(0..self.num_modes());
            let (dx, dy): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            row[0] = self.means[[k, 0]] + self.sigma * dx;
            row[1] = self.means[[k, 1]] + self.sigma * dy;
        }
        out
    }

    /// Closest component and the Euclidean distance to its mean. Ties go to
    /// the lower index.
    pub fn nearest_mode(&self, point: [f64; 2]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, m) in self.means.rows().into_iter().enumerate() {
            let d2 = (point[0] - m[0]).powi(2) + (point[1] - m[1]).powi(2);
            if d2 < best.1 {
                best = (k, d2);
            }
        }
        (best.0, best.1.sqrt())
    }
}
