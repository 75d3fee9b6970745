//! Frequency grids, Lorentzian line shapes, and sampled spectral curves.

use crate::error::{ModelError, Result};

/// Area-normalized Lorentzian `(gamma/pi) / ((omega - center)^2 + gamma^2)`.
///
/// Integrates to 1 over the whole real line; peak height `1/(pi*gamma)`.
pub fn lorentzian(omega: f64, center: f64, gamma: f64) -> f64 {
    let d = omega - center;
    gamma / std::f64::consts::PI / (d * d + gamma * gamma)
}

/// Uniform frequency grid over `[omega_min, omega_max]` with `points`
/// samples (endpoints included).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    omega_min: f64,
    omega_max: f64,
    points: usize,
}

impl Grid {
    pub fn new(omega_min: f64, omega_max: f64, points: usize) -> Result<Self> {
        if !omega_min.is_finite() || !omega_max.is_finite() {
            return Err(ModelError::invalid("grid", "bounds must be finite"));
        }
        if omega_max <= omega_min {
            return Err(ModelError::invalid(
                "grid",
                format!("omega_max {omega_max} must exceed omega_min {omega_min}"),
            ));
        }
        if points < 2 {
            return Err(ModelError::invalid("grid", "need at least 2 points"));
        }
        Ok(Grid {
            omega_min,
            omega_max,
            points,
        })
    }

    /// Grid spanning `[lo - pad, hi + pad]`, the default policy for spectra
    /// around a set of eigenvalues.
    pub fn spanning(lo: f64, hi: f64, pad: f64, points: usize) -> Result<Self> {
        Grid::new(lo - pad, hi + pad, points)
    }

    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false // constructor enforces >= 2 points
    }

    pub fn step(&self) -> f64 {
        (self.omega_max - self.omega_min) / (self.points - 1) as f64
    }

    pub fn at(&self, i: usize) -> f64 {
        debug_assert!(i < self.points);
        self.omega_min + self.step() * i as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |i| self.at(i))
    }
}

/// A real-valued spectral curve sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct SpectralFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl SpectralFunction {
    /// Sample `f` on every grid point.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.iter().map(f).collect();
        SpectralFunction { grid, values }
    }

    /// Trapezoid-rule integral over the grid span.
    pub fn integral(&self) -> f64 {
        let h = self.grid.step();
        let n = self.values.len();
        let mut acc = 0.5 * (self.values[0] + self.values[n - 1]);
        for v in &self.values[1..n - 1] {
            acc += v;
        }
        acc * h
    }

    /// Location and value of the maximum sample (first occurrence on ties).
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (self.grid.at(best), self.values[best])
    }
}

/// Discrete stick spectrum: a list of `(frequency, weight)` lines.
#[derive(Debug, Clone, Default)]
pub struct StickSpectrum {
    pub sticks: Vec<(f64, f64)>,
}

impl StickSpectrum {
    pub fn total_weight(&self) -> f64 {
        self.sticks.iter().map(|&(_, w)| w).sum()
    }

    /// Lorentzian-broadened density at a single frequency:
    /// `sum_j w_j L(omega; omega_j, gamma)`.
    pub fn density_at(&self, omega: f64, gamma: f64) -> f64 {
        self.sticks
            .iter()
            .map(|&(pos, w)| w * lorentzian(omega, pos, gamma))
            .sum()
    }

    /// Broadened curve sampled on `grid`.
    pub fn broadened(&self, grid: &Grid, gamma: f64) -> SpectralFunction {
        SpectralFunction::from_fn(grid.clone(), |omega| self.density_at(omega, gamma))
    }
}
