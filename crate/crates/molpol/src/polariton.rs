//! Collective light-matter blocks and the photon linear response.
//!
//! In the occupation-number representation of N identical molecules, the
//! first excitation manifold splits into blocks labeled by the spectator
//! ground-surface phonon content. Each block couples one photon state to
//! the excited-surface vibronic states of a single collective excitation;
//! the photon talks only to the vertically excited (vibrational-vacuum)
//! matter state, with collective strength `g*sqrt(N - M)` when `M`
//! spectator molecules hold a phonon.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{ModelError, Result};
use crate::grid::{Grid, SpectralFunction};
use crate::linalg;
use crate::vibronic::{VibrationalBasis, VibronicCouplingMatrix};

/// Cavity and collective-coupling parameters.
///
/// The collective coupling `g_sqrt_n = g*sqrt(N)` is the configured
/// quantity (it is what fixes the Rabi splitting); the single-molecule `g`
/// is derived. A zero coupling is accepted so empty-cavity limits remain
/// expressible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityModel {
    pub omega_c: f64,
    pub g_sqrt_n: f64,
    pub n_molecules: u64,
    pub kappa: f64,
    pub gamma_xi: f64,
}

impl CavityModel {
    pub fn new(
        omega_c: f64,
        g_sqrt_n: f64,
        n_molecules: u64,
        kappa: f64,
        gamma_xi: f64,
    ) -> Result<Self> {
        if !omega_c.is_finite() || omega_c <= 0.0 {
            return Err(ModelError::invalid(
                "omega_c",
                format!("cavity frequency must be positive, got {omega_c}"),
            ));
        }
        if !g_sqrt_n.is_finite() || g_sqrt_n < 0.0 {
            return Err(ModelError::invalid(
                "g_sqrt_n",
                format!("collective coupling must be non-negative, got {g_sqrt_n}"),
            ));
        }
        if n_molecules == 0 {
            return Err(ModelError::invalid("n_molecules", "need at least one molecule"));
        }
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(ModelError::invalid(
                "kappa",
                format!("cavity linewidth must be positive, got {kappa}"),
            ));
        }
        if !gamma_xi.is_finite() || gamma_xi <= 0.0 {
            return Err(ModelError::invalid(
                "gamma_xi",
                format!("eigenstate broadening must be positive, got {gamma_xi}"),
            ));
        }
        Ok(CavityModel {
            omega_c,
            g_sqrt_n,
            n_molecules,
            kappa,
            gamma_xi,
        })
    }

    /// Single-molecule coupling `g = g_sqrt_n / sqrt(N)`.
    pub fn g(&self) -> f64 {
        self.g_sqrt_n / (self.n_molecules as f64).sqrt()
    }

    /// Detuning from a molecular reference frequency.
    pub fn detuning(&self, omega0: f64) -> f64 {
        self.omega_c - omega0
    }
}

/// One first-excitation block: a photon state dressed by spectator ground
/// phonons, coupled to the excited-surface vibronic states.
#[derive(Debug, Clone)]
pub struct PolaritonBlockHamiltonian {
    /// Spectator phonon content as (basis state index, molecule count);
    /// empty for the primary block.
    pub sector: Vec<(usize, u32)>,
    /// Total spectator phonon energy added to every diagonal entry.
    pub sector_energy: f64,
    /// Number of spectator molecules `M` carrying a phonon.
    pub m_spectators: u64,
    /// Effective photon-matter coupling `g*sqrt(N - M)`.
    pub coupling: f64,
    /// `(m+1) x (m+1)` symmetric matrix; row/column 0 is the photon.
    pub matrix: DMatrix<f64>,
}

/// Assemble the block Hamiltonian for a spectator-phonon `sector`.
///
/// The sector lists `(state index, count)` pairs over non-vacuum basis
/// states; the primary block is the empty sector.
pub fn build_block(
    sector: &[(usize, u32)],
    veg: &VibronicCouplingMatrix,
    basis: &VibrationalBasis,
    cavity: &CavityModel,
) -> Result<PolaritonBlockHamiltonian> {
    if veg.dim() != basis.len() {
        return Err(ModelError::invalid(
            "veg",
            format!("coupling dim {} != basis size {}", veg.dim(), basis.len()),
        ));
    }
    let mut m_spectators: u64 = 0;
    let mut sector_energy = 0.0;
    for &(state, count) in sector {
        if state >= basis.len() {
            return Err(ModelError::invalid(
                "sector",
                format!("state index {state} outside basis of size {}", basis.len()),
            ));
        }
        if state == basis.vacuum() {
            return Err(ModelError::invalid(
                "sector",
                "spectator entries must be non-vacuum states",
            ));
        }
        if count == 0 {
            return Err(ModelError::invalid("sector", "zero-count sector entry"));
        }
        m_spectators += count as u64;
        sector_energy += count as f64 * basis.energy(state);
    }
    if m_spectators > cavity.n_molecules {
        return Err(ModelError::invalid(
            "sector",
            format!(
                "{m_spectators} spectator molecules exceed N = {}",
                cavity.n_molecules
            ),
        ));
    }

    let m = basis.len();
    let coupling = cavity.g() * ((cavity.n_molecules - m_spectators) as f64).sqrt();
    let mut h = DMatrix::zeros(m + 1, m + 1);
    h[(0, 0)] = cavity.omega_c + sector_energy;
    let fc = basis.vacuum() + 1; // matrix row of the vibrational vacuum
    h[(0, fc)] = coupling;
    h[(fc, 0)] = coupling;
    for i in 0..m {
        h[(1 + i, 1 + i)] = veg.omega_e(i) + sector_energy;
        for j in (i + 1)..m {
            let v = veg.v(i, j);
            if v != 0.0 {
                h[(1 + i, 1 + j)] = v;
                h[(1 + j, 1 + i)] = v;
            }
        }
    }
    Ok(PolaritonBlockHamiltonian {
        sector: sector.to_vec(),
        sector_energy,
        m_spectators,
        coupling,
        matrix: h,
    })
}

/// Eigensystem of a block: energies with photon and matter amplitudes.
#[derive(Debug, Clone)]
pub struct PolaritonEigensystem {
    /// Ascending eigenvalues `omega_xi`, xi = 0..m.
    pub eigenvalues: Vec<f64>,
    /// Photon amplitudes `a_xi` (signed; weights are their squares).
    pub photon: Vec<f64>,
    /// Matter amplitudes `b[(i, xi)]` on basis state `i` for eigenstate `xi`.
    pub matter: DMatrix<f64>,
}

impl PolaritonEigensystem {
    /// Number of eigenstates (m + 1).
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn photon_weight(&self, xi: usize) -> f64 {
        self.photon[xi] * self.photon[xi]
    }

    /// Photon-weighted mean frequency, `sum_xi |a_xi|^2 omega_xi`.
    pub fn photon_mean_frequency(&self) -> f64 {
        (0..self.len())
            .map(|xi| self.photon_weight(xi) * self.eigenvalues[xi])
            .sum()
    }

    /// Index of the lower-polariton eigenstate: the largest photon weight
    /// among states below the photon-weighted mean frequency.
    pub fn lower_polariton(&self) -> usize {
        let mean = self.photon_mean_frequency();
        let mut best: Option<usize> = None;
        for xi in 0..self.len() {
            if self.eigenvalues[xi] < mean
                && best.is_none_or(|b| self.photon_weight(xi) > self.photon_weight(b))
            {
                best = Some(xi);
            }
        }
        best.unwrap_or(0)
    }

    /// Index of the upper-polariton eigenstate (counterpart of
    /// [`lower_polariton`](Self::lower_polariton) above the mean).
    pub fn upper_polariton(&self) -> usize {
        let mean = self.photon_mean_frequency();
        let mut best: Option<usize> = None;
        for xi in 0..self.len() {
            if self.eigenvalues[xi] >= mean
                && best.is_none_or(|b| self.photon_weight(xi) > self.photon_weight(b))
            {
                best = Some(xi);
            }
        }
        best.unwrap_or(self.len() - 1)
    }
}

/// Diagonalize a block; exact eigenvalue ties are ordered by matter weight
/// on the vertically excited state so degenerate manifolds come out in a
/// reproducible order.
pub fn diagonalize(block: &PolaritonBlockHamiltonian) -> Result<PolaritonEigensystem> {
    let eig = linalg::eigh(&block.matrix)?;
    let n = eig.dim();
    let m = n - 1;
    let mut order: Vec<usize> = (0..n).collect();
    let fc_row = 1; // vacuum is basis index 0
    order.sort_by(|&x, &y| {
        eig.values[x]
            .partial_cmp(&eig.values[y])
            .unwrap()
            .then_with(|| {
                let wx = eig.vectors[(fc_row, x)].abs();
                let wy = eig.vectors[(fc_row, y)].abs();
                wx.partial_cmp(&wy).unwrap()
            })
    });
    let mut eigenvalues = Vec::with_capacity(n);
    let mut photon = Vec::with_capacity(n);
    let mut matter = DMatrix::zeros(m, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues.push(eig.values[src]);
        photon.push(eig.vectors[(0, src)]);
        for i in 0..m {
            matter[(i, dst)] = eig.vectors[(1 + i, src)];
        }
    }
    Ok(PolaritonEigensystem {
        eigenvalues,
        photon,
        matter,
    })
}

/// Analytic two-level polariton pair for a structureless exciton line.
#[derive(Debug, Clone, Copy)]
pub struct TcPolaritons {
    pub omega_upper: f64,
    pub omega_lower: f64,
    pub photon_weight_upper: f64,
    pub photon_weight_lower: f64,
}

/// Closed-form upper/lower polaritons of the two-level collective problem:
/// `omega_pm = omega0 + (delta pm sqrt(4 g^2 N + delta^2)) / 2`.
pub fn tc_polaritons(cavity: &CavityModel, omega0: f64) -> TcPolaritons {
    let delta = cavity.detuning(omega0);
    let rabi = (4.0 * cavity.g_sqrt_n * cavity.g_sqrt_n + delta * delta).sqrt();
    let frac = if rabi > 0.0 { delta / rabi } else { 0.0 };
    TcPolaritons {
        omega_upper: omega0 + 0.5 * (delta + rabi),
        omega_lower: omega0 + 0.5 * (delta - rabi),
        photon_weight_upper: 0.5 * (1.0 + frac),
        photon_weight_lower: 0.5 * (1.0 - frac),
    }
}

/// Retarded photon propagator of a diagonalized block, as a pole expansion
/// `D^R(omega) = sum_xi |a_xi|^2 / (omega - omega_xi + i gamma_xi)`.
#[derive(Debug, Clone)]
pub struct PhotonGreenFunction {
    pub grid: Grid,
    pub dr: Vec<Complex64>,
    poles: Vec<f64>,
    weights: Vec<f64>,
    pub gamma_xi: f64,
}

impl PhotonGreenFunction {
    /// Analytic evaluation at an arbitrary frequency.
    pub fn dr_at(&self, omega: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&pole, &w) in self.poles.iter().zip(&self.weights) {
            acc += w / Complex64::new(omega - pole, self.gamma_xi);
        }
        acc
    }

    /// Spectral density `-Im D^R(omega)`.
    pub fn spectral_at(&self, omega: f64) -> f64 {
        -self.dr_at(omega).im
    }

    /// Total pole weight (1 for a complete eigensystem).
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Build the photon propagator from a block eigensystem on a grid.
pub fn photon_green_function(
    eig: &PolaritonEigensystem,
    gamma_xi: f64,
    grid: &Grid,
) -> Result<PhotonGreenFunction> {
    if !(gamma_xi > 0.0) {
        return Err(ModelError::invalid("gamma_xi", "must be positive"));
    }
    let poles = eig.eigenvalues.clone();
    let weights: Vec<f64> = (0..eig.len()).map(|xi| eig.photon_weight(xi)).collect();
    let gf = PhotonGreenFunction {
        grid: grid.clone(),
        dr: Vec::new(),
        poles,
        weights,
        gamma_xi,
    };
    let dr: Vec<Complex64> = grid.iter().map(|w| gf.dr_at(w)).collect();
    Ok(PhotonGreenFunction { dr, ..gf })
}

/// Photon linear response: propagator plus the absorption/transmission
/// split for a symmetric two-mirror cavity.
#[derive(Debug, Clone)]
pub struct LinearResponse {
    pub gf: PhotonGreenFunction,
    /// Absorption `A(omega) = kappa*(-Im D^R) - 2T`, sampled on the grid.
    pub a: Vec<f64>,
    /// Transmission `T(omega) = (kappa^2/4)|D^R|^2`, sampled on the grid.
    pub t: Vec<f64>,
    pub kappa: f64,
}

impl LinearResponse {
    pub fn grid(&self) -> &Grid {
        &self.gf.grid
    }

    pub fn t_at(&self, omega: f64) -> f64 {
        let d = self.gf.dr_at(omega);
        0.25 * self.kappa * self.kappa * d.norm_sqr()
    }

    pub fn a_at(&self, omega: f64) -> f64 {
        self.kappa * self.gf.spectral_at(omega) - 2.0 * self.t_at(omega)
    }

    /// Sampled spectral density `-Im D^R` as a curve.
    pub fn spectral_density(&self) -> SpectralFunction {
        SpectralFunction {
            grid: self.gf.grid.clone(),
            values: self.gf.dr.iter().map(|d| -d.im).collect(),
        }
    }
}

/// Split the photon response into absorbed and transmitted channels,
/// `T = (kappa^2/4)|D^R|^2` and `A = kappa*(-Im D^R) - 2T`, so the
/// identity `A + 2T = kappa*(-Im D^R)` holds exactly by construction.
pub fn absorption_transmission(gf: &PhotonGreenFunction, kappa: f64) -> Result<LinearResponse> {
    if !(kappa > 0.0) {
        return Err(ModelError::invalid("kappa", "must be positive"));
    }
    let t: Vec<f64> = gf
        .dr
        .iter()
        .map(|d| 0.25 * kappa * kappa * d.norm_sqr())
        .collect();
    let a: Vec<f64> = gf
        .dr
        .iter()
        .zip(&t)
        .map(|(d, &t_val)| kappa * (-d.im) - 2.0 * t_val)
        .collect();
    Ok(LinearResponse {
        gf: gf.clone(),
        a,
        t,
        kappa,
    })
}
