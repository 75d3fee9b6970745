//! Single-molecule vibronic structure: truncated vibrational basis on the
//! ground-state potential surface, the vibronic coupling matrix of the
//! linearly displaced excited surface, the relaxed (Stokes-shifted) excited
//! state, and bare absorption/emission stick spectra.
//!
//! Conventions: the electronic gap `omega0` is the *vertical* excitation
//! energy measured from the vibrational vacuum, i.e. the diagonal matrix
//! element of the excited surface at zero vibrational quanta. The relaxed
//! excited state then lies near `omega0 - lambda`, with reorganization
//! energy `lambda = sum_k omega_nu_k * s_k`, and the emission band is
//! mirror-symmetric to absorption about that relaxed line.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{ModelError, Result};
use crate::grid::{Grid, SpectralFunction, StickSpectrum};
use crate::linalg;

/// One harmonic vibrational mode displaced between the two electronic
/// surfaces by a Huang-Rhys factor `s` (dimensionless squared displacement).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VibrationalMode {
    pub omega_nu: f64,
    pub huang_rhys: f64,
    /// Maximum occupation retained for this mode (inclusive).
    pub n_max: usize,
}

impl VibrationalMode {
    pub fn new(omega_nu: f64, huang_rhys: f64, n_max: usize) -> Result<Self> {
        if !(omega_nu > 0.0) || !omega_nu.is_finite() {
            return Err(ModelError::invalid(
                "omega_nu",
                format!("mode frequency must be positive and finite, got {omega_nu}"),
            ));
        }
        if !(huang_rhys >= 0.0) || !huang_rhys.is_finite() {
            return Err(ModelError::invalid(
                "huang_rhys",
                format!("Huang-Rhys factor must be non-negative, got {huang_rhys}"),
            ));
        }
        Ok(VibrationalMode {
            omega_nu,
            huang_rhys,
            n_max,
        })
    }

    /// Convenience constructor taking `sqrt(s)` instead of `s`.
    pub fn from_sqrt_s(omega_nu: f64, sqrt_s: f64, n_max: usize) -> Result<Self> {
        if !sqrt_s.is_finite() || sqrt_s < 0.0 {
            return Err(ModelError::invalid(
                "sqrt_s",
                format!("sqrt(s) must be non-negative, got {sqrt_s}"),
            ));
        }
        VibrationalMode::new(omega_nu, sqrt_s * sqrt_s, n_max)
    }

    /// Reorganization energy contributed by this mode, `omega_nu * s`.
    pub fn reorganization(&self) -> f64 {
        self.omega_nu * self.huang_rhys
    }
}

/// A molecule with one electronic transition and a set of displaced
/// harmonic modes; `total_quanta_cap` bounds the summed occupation of an
/// enumerated basis tuple on top of the per-mode caps.
#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeModel {
    pub omega0: f64,
    pub modes: Vec<VibrationalMode>,
    pub total_quanta_cap: usize,
}

impl MoleculeModel {
    pub fn new(omega0: f64, modes: Vec<VibrationalMode>, total_quanta_cap: usize) -> Result<Self> {
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return Err(ModelError::invalid(
                "omega0",
                format!("electronic gap must be positive and finite, got {omega0}"),
            ));
        }
        if modes.is_empty() {
            return Err(ModelError::invalid("modes", "need at least one vibrational mode"));
        }
        Ok(MoleculeModel {
            omega0,
            modes,
            total_quanta_cap,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Total reorganization energy `lambda = sum_k omega_nu_k * s_k`.
    pub fn reorganization_energy(&self) -> f64 {
        self.modes.iter().map(|m| m.reorganization()).sum()
    }
}

/// Enumerated occupation-tuple basis for the ground-surface vibrations,
/// canonically ordered by energy (ties by lexicographic tuple order).
/// Index 0 is always the vibrational vacuum with energy 0.
#[derive(Debug, Clone)]
pub struct VibrationalBasis {
    states: Vec<Vec<u32>>,
    energies: Vec<f64>,
    index: HashMap<Vec<u32>, usize>,
    n_modes: usize,
}

impl VibrationalBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Occupation tuple of state `i`.
    pub fn state(&self, i: usize) -> &[u32] {
        &self.states[i]
    }

    /// Vibrational energy `omega_g_i = sum_k n_k omega_nu_k` of state `i`.
    pub fn energy(&self, i: usize) -> f64 {
        self.energies[i]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Index of an occupation tuple, if it is inside the truncation.
    pub fn index_of(&self, occ: &[u32]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// Index of the vibrational vacuum (always 0).
    pub fn vacuum(&self) -> usize {
        0
    }

    /// Human-readable label like `(1,0)` for state `i`.
    pub fn label(&self, i: usize) -> String {
        let parts: Vec<String> = self.states[i].iter().map(|n| n.to_string()).collect();
        format!("({})", parts.join(","))
    }
}

/// Enumerate all occupation tuples with `n_k <= n_max(k)` and
/// `sum_k n_k <= total_quanta_cap`, sorted by energy then tuple order.
pub fn enumerate_basis(molecule: &MoleculeModel) -> Result<VibrationalBasis> {
    let n_modes = molecule.n_modes();
    let mut states: Vec<Vec<u32>> = Vec::new();
    let mut current = vec![0u32; n_modes];

    // Depth-first product of per-mode ranges under the total cap.
    fn fill(
        modes: &[VibrationalMode],
        total_cap: usize,
        k: usize,
        used: usize,
        current: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if k == modes.len() {
            out.push(current.clone());
            return;
        }
        let cap = modes[k].n_max.min(total_cap - used);
        for n in 0..=cap {
            current[k] = n as u32;
            fill(modes, total_cap, k + 1, used + n, current, out);
        }
        current[k] = 0;
    }
    fill(
        &molecule.modes,
        molecule.total_quanta_cap,
        0,
        0,
        &mut current,
        &mut states,
    );

    if states.is_empty() {
        return Err(ModelError::invalid("basis", "truncation produced no states"));
    }

    let energy_of = |occ: &[u32]| -> f64 {
        occ.iter()
            .zip(&molecule.modes)
            .map(|(&n, m)| n as f64 * m.omega_nu)
            .sum()
    };
    states.sort_by(|a, b| {
        let (ea, eb) = (energy_of(a), energy_of(b));
        ea.partial_cmp(&eb)
            .expect("finite energies")
            .then_with(|| a.cmp(b))
    });

    let energies: Vec<f64> = states.iter().map(|s| energy_of(s)).collect();
    let index: HashMap<Vec<u32>, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    if index.len() != states.len() {
        return Err(ModelError::invalid("basis", "duplicate occupation tuples"));
    }
    debug_assert!(states[0].iter().all(|&n| n == 0), "vacuum must sort first");

    Ok(VibrationalBasis {
        states,
        energies,
        index,
        n_modes,
    })
}

/// Excited-surface Hamiltonian in the ground-vibrational basis: diagonal
/// energies `omega_e_i = omega0 + omega_g_i` plus the displacement coupling
/// `V_eg`, which connects tuples differing by one quantum in one mode with
/// magnitude `omega_nu_k sqrt(s_k) sqrt(n_k + 1)`.
#[derive(Debug, Clone)]
pub struct VibronicCouplingMatrix {
    /// Off-diagonal coupling; symmetric with zero diagonal.
    v: DMatrix<f64>,
    /// Diagonal excited energies `omega_g_i + omega0`.
    omega_e: Vec<f64>,
    omega0: f64,
}

impl VibronicCouplingMatrix {
    pub fn dim(&self) -> usize {
        self.omega_e.len()
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn omega_e(&self, i: usize) -> f64 {
        self.omega_e[i]
    }

    /// Off-diagonal element `V_eg,ij` (zero on the diagonal).
    pub fn v(&self, i: usize, j: usize) -> f64 {
        self.v[(i, j)]
    }

    pub fn v_matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Dense excited-surface block `diag(omega_e) + V_eg`.
    pub fn excited_block(&self) -> DMatrix<f64> {
        let mut m = self.v.clone();
        for i in 0..self.dim() {
            m[(i, i)] = self.omega_e[i];
        }
        m
    }

    /// Number of nonzero off-diagonal pairs (i < j).
    pub fn off_diagonal_count(&self) -> usize {
        let n = self.dim();
        let mut count = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.v[(i, j)] != 0.0 {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Build the vibronic coupling matrix for `basis` enumerated from `molecule`.
pub fn build_veg(basis: &VibrationalBasis, molecule: &MoleculeModel) -> Result<VibronicCouplingMatrix> {
    if basis.n_modes() != molecule.n_modes() {
        return Err(ModelError::invalid(
            "basis",
            format!(
                "basis has {} modes but molecule has {}",
                basis.n_modes(),
                molecule.n_modes()
            ),
        ));
    }
    let m = basis.len();
    let mut v = DMatrix::zeros(m, m);
    let mut raised = vec![0u32; basis.n_modes()];
    for i in 0..m {
        for (k, mode) in molecule.modes.iter().enumerate() {
            raised.clear();
            raised.extend_from_slice(basis.state(i));
            raised[k] += 1;
            if let Some(j) = basis.index_of(&raised) {
                let n_upper = raised[k] as f64;
                let elem = mode.omega_nu * mode.huang_rhys.sqrt() * n_upper.sqrt();
                v[(i, j)] = elem;
                v[(j, i)] = elem;
            }
        }
    }
    let omega_e: Vec<f64> = basis.energies().iter().map(|e| e + molecule.omega0).collect();
    Ok(VibronicCouplingMatrix {
        v,
        omega_e,
        omega0: molecule.omega0,
    })
}

/// Relaxed excited state: the lowest eigenpair of the excited-surface block.
///
/// `fc_leak` is the squared amplitude remaining on the vibrational vacuum
/// (the vertically excited doorway state); it quantifies how far the
/// relaxed emitter is from that doorway and is reported rather than
/// assumed negligible.
#[derive(Debug, Clone)]
pub struct StokesShiftedState {
    pub coefficients: DVector<f64>,
    pub energy: f64,
    pub fc_leak: f64,
}

impl StokesShiftedState {
    /// Amplitude on basis state `j`.
    pub fn c(&self, j: usize) -> f64 {
        self.coefficients[j]
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }
}

/// Diagonalize the excited-surface block and keep the lowest eigenpair.
pub fn stokes_shifted_state(veg: &VibronicCouplingMatrix) -> Result<StokesShiftedState> {
    let eig = linalg::eigh(&veg.excited_block())?;
    let coefficients = eig.vector(0);
    let fc_leak = coefficients[0] * coefficients[0];
    Ok(StokesShiftedState {
        energy: eig.values[0],
        coefficients,
        fc_leak,
    })
}

/// A bare molecular spectrum: stick lines plus a Lorentzian-broadened curve.
#[derive(Debug, Clone)]
pub struct BareSpectrum {
    pub sticks: StickSpectrum,
    pub broadened: SpectralFunction,
    pub gamma_mol: f64,
}

impl BareSpectrum {
    fn from_sticks(sticks: Vec<(f64, f64)>, gamma_mol: f64, grid: &Grid) -> Self {
        let sticks = StickSpectrum { sticks };
        let broadened = sticks.broadened(grid, gamma_mol);
        BareSpectrum {
            sticks,
            broadened,
            gamma_mol,
        }
    }
}

/// Bare emission from the relaxed excited state: sticks at
/// `omega_ss - omega_g_j` with weights `|c_j|^2`.
///
/// The zero-phonon line (`j` = vacuum) is excluded by default — emission
/// into the vibrational vacuum is resonant with the collective absorber and
/// is handled by the polariton response, not the bare profile. Passing
/// `include_zero_phonon = true` restores it (needed e.g. for the s -> 0
/// sanity limit).
pub fn bare_emission(
    ss: &StokesShiftedState,
    basis: &VibrationalBasis,
    gamma_mol: f64,
    grid: &Grid,
    include_zero_phonon: bool,
) -> Result<BareSpectrum> {
    if ss.dim() != basis.len() {
        return Err(ModelError::invalid(
            "stokes_state",
            format!("state dim {} != basis size {}", ss.dim(), basis.len()),
        ));
    }
    let start = if include_zero_phonon { 0 } else { 1 };
    let sticks: Vec<(f64, f64)> = (start..basis.len())
        .map(|j| (ss.energy - basis.energy(j), ss.c(j) * ss.c(j)))
        .collect();
    Ok(BareSpectrum::from_sticks(sticks, gamma_mol, grid))
}

/// Weight normalization for [`bare_absorption`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AbsorptionPrefactor {
    /// Stick weights are Franck-Condon factors summing to 1.
    Unit,
    /// Weights scaled by `pi * N * g^2`, the collective ensemble response.
    CollectiveNg2 { n_molecules: u64, g: f64 },
}

/// Bare absorption from the vibrational vacuum: sticks at the excited-block
/// eigenvalues with weights given by the squared vacuum component of each
/// eigenvector.
pub fn bare_absorption(
    veg: &VibronicCouplingMatrix,
    gamma_mol: f64,
    grid: &Grid,
    prefactor: AbsorptionPrefactor,
) -> Result<BareSpectrum> {
    let eig = linalg::eigh(&veg.excited_block())?;
    let scale = match prefactor {
        AbsorptionPrefactor::Unit => 1.0,
        AbsorptionPrefactor::CollectiveNg2 { n_molecules, g } => {
            std::f64::consts::PI * n_molecules as f64 * g * g
        }
    };
    let sticks: Vec<(f64, f64)> = (0..eig.dim())
        .map(|alpha| {
            let amp = eig.vectors[(0, alpha)];
            (eig.values[alpha], scale * amp * amp)
        })
        .collect();
    Ok(BareSpectrum::from_sticks(sticks, gamma_mol, grid))
}

/// A molecule solved at automatically grown truncation caps, bundling the
/// basis, coupling matrix, and relaxed state that were solved together.
#[derive(Debug, Clone)]
pub struct ConvergedMolecule {
    pub molecule: MoleculeModel,
    pub basis: VibrationalBasis,
    pub veg: VibronicCouplingMatrix,
    pub stokes: StokesShiftedState,
    /// Growth rounds performed (0 = initial guess was already converged).
    pub growth_rounds: usize,
}

/// Initial per-mode cap guess: mean occupation `s` plus a few standard
/// deviations of the displaced-state (Poisson) occupation distribution.
pub fn initial_cap(s: f64) -> usize {
    (s + 4.5 * (s + 0.25).sqrt() + 3.5).ceil() as usize
}

/// Solve the molecule with per-mode caps grown until the emission stick
/// weights are stable to `epsilon` per stick between successive rounds.
/// The returned solution is the one after the final growth (the larger
/// basis of the last comparison).
pub fn converge_molecule(
    omega0: f64,
    modes: &[(f64, f64)], // (omega_nu, huang_rhys)
    epsilon: f64,
) -> Result<ConvergedMolecule> {
    if !(epsilon > 0.0) {
        return Err(ModelError::invalid("epsilon", "must be positive"));
    }
    let mut caps: Vec<usize> = modes.iter().map(|&(_, s)| initial_cap(s)).collect();

    let solve = |caps: &[usize]| -> Result<(MoleculeModel, VibrationalBasis, VibronicCouplingMatrix, StokesShiftedState)> {
        let mode_list: Result<Vec<VibrationalMode>> = modes
            .iter()
            .zip(caps)
            .map(|(&(w, s), &cap)| VibrationalMode::new(w, s, cap))
            .collect();
        let molecule = MoleculeModel::new(omega0, mode_list?, caps.iter().sum())?;
        let basis = enumerate_basis(&molecule)?;
        let veg = build_veg(&basis, &molecule)?;
        let stokes = stokes_shifted_state(&veg)?;
        Ok((molecule, basis, veg, stokes))
    };

    let weights_by_tuple = |basis: &VibrationalBasis, ss: &StokesShiftedState| {
        let mut map: HashMap<Vec<u32>, f64> = HashMap::with_capacity(basis.len());
        for j in 0..basis.len() {
            map.insert(basis.state(j).to_vec(), ss.c(j) * ss.c(j));
        }
        map
    };

    const MAX_ROUNDS: usize = 30;
    let (_, basis, _, stokes) = solve(&caps)?;
    let mut prev = weights_by_tuple(&basis, &stokes);
    let mut last_delta = f64::INFINITY;
    for round in 0..MAX_ROUNDS {
        for cap in caps.iter_mut() {
            *cap += (*cap / 4).max(2);
        }
        let (molecule, basis, veg, stokes) = solve(&caps)?;
        let next = weights_by_tuple(&basis, &stokes);
        let mut delta: f64 = 0.0;
        for (tuple, &w) in &next {
            delta = delta.max((w - prev.get(tuple).copied().unwrap_or(0.0)).abs());
        }
        if delta < epsilon {
            return Ok(ConvergedMolecule {
                molecule,
                basis,
                veg,
                stokes,
                growth_rounds: round + 1,
            });
        }
        prev = next;
        last_delta = delta;
    }
    Err(ModelError::NotConverged {
        iterations: MAX_ROUNDS,
        delta: last_delta,
        epsilon,
    })
}
