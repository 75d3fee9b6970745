//! Brute-force cross-checks for the collective bosonic description.
//!
//! For a handful of molecules the many-body problem can be solved without
//! any mapping: enumerate every product state of N distinguishable
//! molecules and a photon mode, build the Hamiltonian directly, project
//! onto the permutation-symmetric subspace, and compare spectra against the
//! occupation-number Hamiltonian the production code is built on. The same
//! machinery evaluates golden-rule rates by explicit summation over
//! eigenstates, certifying the closed-form relaxation rates at small N.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{ModelError, Result};
use crate::grid::lorentzian;
use crate::linalg::{self, EigenDecomposition};
use crate::polariton::CavityModel;
use crate::vibronic::{self, MoleculeModel, VibrationalBasis, VibronicCouplingMatrix};

/// Hard cap on dense oracle dimensions; everything here is meant for
/// exhaustive diagonalization, not production scale.
pub const DIMENSION_CAP: usize = 4096;

/// One distinguishable-molecule product state: photon number plus
/// `(excited, vibrational state)` per molecule.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FqState {
    pub n_ph: u32,
    pub molecules: Vec<(bool, usize)>,
}

/// The exact N-molecule problem in the distinguishable product basis,
/// restricted to a fixed total excitation number.
#[derive(Debug, Clone)]
pub struct FirstQuantizedSystem {
    pub n_molecules: usize,
    pub n_exc: u32,
    pub vib: VibrationalBasis,
    pub states: Vec<FqState>,
    pub h: DMatrix<f64>,
    index: HashMap<FqState, usize>,
}

impl FirstQuantizedSystem {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: &FqState) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Largest change of any Hamiltonian entry under a relabeling of the
    /// molecules; zero for a permutation-invariant Hamiltonian.
    pub fn permutation_deviation(&self, perm: &[usize]) -> f64 {
        assert_eq!(perm.len(), self.n_molecules);
        let permuted: Vec<usize> = self
            .states
            .iter()
            .map(|s| {
                let molecules: Vec<(bool, usize)> =
                    perm.iter().map(|&p| s.molecules[p]).collect();
                self.index[&FqState {
                    n_ph: s.n_ph,
                    molecules,
                }]
            })
            .collect();
        let mut worst = 0.0_f64;
        for a in 0..self.dim() {
            for b in 0..self.dim() {
                let diff = (self.h[(permuted[a], permuted[b])] - self.h[(a, b)]).abs();
                worst = worst.max(diff);
            }
        }
        worst
    }
}

fn enumerate_fq_states(n_molecules: usize, m: usize, n_exc: u32) -> Vec<FqState> {
    let mut states = Vec::new();
    for excited_count in 0..=n_molecules.min(n_exc as usize) {
        let n_ph = n_exc - excited_count as u32;
        for mask in 0u32..(1 << n_molecules) {
            if mask.count_ones() as usize != excited_count {
                continue;
            }
            // Mixed-radix sweep over the vibrational indices.
            let mut vib = vec![0usize; n_molecules];
            loop {
                let molecules: Vec<(bool, usize)> = (0..n_molecules)
                    .map(|j| (mask & (1 << j) != 0, vib[j]))
                    .collect();
                states.push(FqState { n_ph, molecules });
                let mut pos = n_molecules;
                loop {
                    if pos == 0 {
                        break;
                    }
                    pos -= 1;
                    vib[pos] += 1;
                    if vib[pos] < m {
                        break;
                    }
                    vib[pos] = 0;
                }
                if vib.iter().all(|&v| v == 0) {
                    break;
                }
            }
        }
    }
    states
}

/// Build the exact distinguishable-molecule Hamiltonian in the `n_exc`
/// excitation manifold. The cavity parameters must be stated for the same
/// molecule count so the single-molecule coupling is unambiguous.
pub fn build_first_quantized(
    molecule: &MoleculeModel,
    cavity: &CavityModel,
    n_molecules: usize,
    n_exc: u32,
) -> Result<FirstQuantizedSystem> {
    if n_molecules == 0 || n_molecules > 3 {
        return Err(ModelError::invalid(
            "n_molecules",
            format!("exhaustive construction supports 1-3 molecules, got {n_molecules}"),
        ));
    }
    if cavity.n_molecules != n_molecules as u64 {
        return Err(ModelError::invalid(
            "cavity",
            format!(
                "cavity describes {} molecules but {} were requested",
                cavity.n_molecules, n_molecules
            ),
        ));
    }
    let vib = vibronic::enumerate_basis(molecule)?;
    let veg = vibronic::build_veg(&vib, molecule)?;
    let m = vib.len();
    let states = enumerate_fq_states(n_molecules, m, n_exc);
    let dim = states.len();
    if dim > DIMENSION_CAP {
        return Err(ModelError::OracleTooLarge {
            dim,
            cap: DIMENSION_CAP,
        });
    }
    let index: HashMap<FqState, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    let g = cavity.g();
    let mut h = DMatrix::zeros(dim, dim);
    for (b, state) in states.iter().enumerate() {
        // Per-molecule terms are sorted before summation so the diagonal is
        // bitwise independent of molecule labeling; the permutation-invariance
        // check can then demand exact zeros.
        let mut terms: Vec<f64> = state
            .molecules
            .iter()
            .map(|&(excited, v)| vib.energy(v) + if excited { molecule.omega0 } else { 0.0 })
            .collect();
        terms.sort_by(f64::total_cmp);
        let diag = terms.iter().sum::<f64>() + state.n_ph as f64 * cavity.omega_c;
        h[(b, b)] = diag;

        for (j, &(excited, v)) in state.molecules.iter().enumerate() {
            if excited {
                // Intramolecular vibronic coupling moves this molecule's
                // vibrational state.
                for i in 0..m {
                    let coupling = veg.v(i, v);
                    if coupling == 0.0 {
                        continue;
                    }
                    let mut to = state.clone();
                    to.molecules[j].1 = i;
                    h[(index[&to], b)] += coupling;
                }
                // Photon emission: molecule returns to the ground surface
                // with its vibrational state frozen.
                let mut to = state.clone();
                to.n_ph += 1;
                to.molecules[j].0 = false;
                if let Some(&a) = index.get(&to) {
                    h[(a, b)] += g * (to.n_ph as f64).sqrt();
                }
            } else if state.n_ph > 0 {
                // Photon absorption: vertical excitation of molecule j.
                let mut to = state.clone();
                to.n_ph -= 1;
                to.molecules[j].0 = true;
                if let Some(&a) = index.get(&to) {
                    h[(a, b)] += g * (state.n_ph as f64).sqrt();
                }
            }
        }
    }
    Ok(FirstQuantizedSystem {
        n_molecules,
        n_exc,
        vib,
        states,
        h,
        index,
    })
}

/// Occupation-number label: photon count plus per-vibrational-state counts
/// of ground-surface and excited-surface molecules.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupationLabel {
    pub n_ph: u32,
    pub ground: Vec<u32>,
    pub excited: Vec<u32>,
}

impl OccupationLabel {
    pub fn excitations(&self) -> u32 {
        self.n_ph + self.excited.iter().sum::<u32>()
    }

    pub fn molecules(&self) -> u32 {
        self.ground.iter().sum::<u32>() + self.excited.iter().sum::<u32>()
    }
}

/// The permutation-symmetric subspace of a [`FirstQuantizedSystem`]: one
/// normalized symmetric vector per occupation label.
#[derive(Debug, Clone)]
pub struct SymmetricSubspace {
    /// `(label, member product-state indices)`, sorted by label.
    pub groups: Vec<(OccupationLabel, Vec<usize>)>,
}

impl SymmetricSubspace {
    pub fn dim(&self) -> usize {
        self.groups.len()
    }

    /// Project a distinguishable-basis operator onto the symmetric
    /// subspace: `(S^T O S)` with one `1/sqrt(|group|)` column per label.
    pub fn project(&self, op: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for (a, (_, ga)) in self.groups.iter().enumerate() {
            for (b, (_, gb)) in self.groups.iter().enumerate() {
                let mut acc = 0.0;
                for &p in ga {
                    for &q in gb {
                        acc += op[(p, q)];
                    }
                }
                out[(a, b)] = acc / ((ga.len() as f64) * (gb.len() as f64)).sqrt();
            }
        }
        out
    }

    /// The normalized symmetric vector for one label, in the
    /// distinguishable basis.
    pub fn vector(&self, group: usize, dim: usize) -> DVector<f64> {
        let (_, members) = &self.groups[group];
        let amp = 1.0 / (members.len() as f64).sqrt();
        let mut v = DVector::zeros(dim);
        for &p in members {
            v[p] = amp;
        }
        v
    }
}

fn occupation_of(state: &FqState, m: usize) -> OccupationLabel {
    let mut ground = vec![0u32; m];
    let mut excited = vec![0u32; m];
    for &(exc, v) in &state.molecules {
        if exc {
            excited[v] += 1;
        } else {
            ground[v] += 1;
        }
    }
    OccupationLabel {
        n_ph: state.n_ph,
        ground,
        excited,
    }
}

/// Group the product basis by occupation label; each group spans one
/// symmetric basis vector.
pub fn symmetric_projector(sys: &FirstQuantizedSystem) -> SymmetricSubspace {
    let m = sys.vib.len();
    let mut by_label: HashMap<OccupationLabel, Vec<usize>> = HashMap::new();
    for (i, state) in sys.states.iter().enumerate() {
        by_label.entry(occupation_of(state, m)).or_default().push(i);
    }
    let mut groups: Vec<(OccupationLabel, Vec<usize>)> = by_label.into_iter().collect();
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    SymmetricSubspace { groups }
}

/// Occupation-number basis for N molecules shared between ground and
/// excited surfaces, with the photon number either fixed by a total
/// excitation count or free up to `photon_max`.
#[derive(Debug, Clone)]
pub struct BosonicBasis {
    pub states: Vec<OccupationLabel>,
    pub n_molecules: u64,
    index: HashMap<OccupationLabel, usize>,
}

impl BosonicBasis {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, label: &OccupationLabel) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Photon-number expectation of a normalized state vector.
    pub fn photon_population(&self, v: &DVector<f64>) -> f64 {
        self.states
            .iter()
            .zip(v.iter())
            .map(|(s, &c)| s.n_ph as f64 * c * c)
            .sum()
    }
}

fn compositions(total: u32, slots: usize) -> Vec<Vec<u32>> {
    if slots == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    let mut current = vec![0u32; slots];
    fn rec(pos: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == current.len() - 1 {
            current[pos] = remaining;
            out.push(current.clone());
            return;
        }
        for take in 0..=remaining {
            current[pos] = take;
            rec(pos + 1, remaining - take, current, out);
        }
    }
    rec(0, total, &mut current, &mut out);
    out
}

/// Enumerate occupation labels. `n_exc = Some(k)` pins `n_ph + excited = k`;
/// `None` sweeps the photon number independently up to `photon_max`.
pub fn bosonic_basis(
    m: usize,
    n_molecules: u64,
    photon_max: u32,
    n_exc: Option<u32>,
) -> Result<BosonicBasis> {
    let mut states = Vec::new();
    let n = n_molecules as u32;
    for excited_total in 0..=n {
        let ground_total = n - excited_total;
        for excited in compositions(excited_total, m) {
            for ground in compositions(ground_total, m) {
                let photon_numbers: Vec<u32> = match n_exc {
                    Some(k) => {
                        if excited_total > k {
                            continue;
                        }
                        vec![k - excited_total]
                    }
                    None => (0..=photon_max).collect(),
                };
                for n_ph in photon_numbers {
                    if n_ph > photon_max {
                        continue;
                    }
                    states.push(OccupationLabel {
                        n_ph,
                        ground: ground.clone(),
                        excited: excited.clone(),
                    });
                }
            }
        }
    }
    states.sort();
    if states.len() > DIMENSION_CAP {
        return Err(ModelError::OracleTooLarge {
            dim: states.len(),
            cap: DIMENSION_CAP,
        });
    }
    let index = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    Ok(BosonicBasis {
        states,
        n_molecules,
        index,
    })
}

/// Assemble the occupation-number Hamiltonian on `bb`. Set
/// `include_vibronic = false` to obtain the zeroth-order Hamiltonian whose
/// perturbation is exactly the vibronic coupling.
pub fn bosonic_hamiltonian(
    bb: &BosonicBasis,
    vib: &VibrationalBasis,
    veg: &VibronicCouplingMatrix,
    cavity: &CavityModel,
    include_vibronic: bool,
) -> Result<DMatrix<f64>> {
    if veg.dim() != vib.len() {
        return Err(ModelError::invalid(
            "veg",
            format!("coupling dim {} != basis size {}", veg.dim(), vib.len()),
        ));
    }
    if cavity.n_molecules != bb.n_molecules {
        return Err(ModelError::invalid(
            "cavity",
            format!(
                "cavity describes {} molecules but the basis holds {}",
                cavity.n_molecules, bb.n_molecules
            ),
        ));
    }
    let m = vib.len();
    let g = cavity.g();
    let dim = bb.dim();
    let mut h = DMatrix::zeros(dim, dim);
    for (b, state) in bb.states.iter().enumerate() {
        let mut diag = state.n_ph as f64 * cavity.omega_c;
        for i in 0..m {
            diag += state.ground[i] as f64 * vib.energy(i);
            diag += state.excited[i] as f64 * (veg.omega0() + vib.energy(i));
        }
        h[(b, b)] = diag;

        if include_vibronic {
            // Vibronic coupling relocates one excited-surface quantum.
            for j in 0..m {
                if state.excited[j] == 0 {
                    continue;
                }
                for i in 0..m {
                    let coupling = veg.v(i, j);
                    if coupling == 0.0 {
                        continue;
                    }
                    let mut to = state.clone();
                    to.excited[j] -= 1;
                    to.excited[i] += 1;
                    if let Some(a) = bb.index_of(&to) {
                        let factor =
                            ((state.excited[j] as f64) * (to.excited[i] as f64)).sqrt();
                        h[(a, b)] += coupling * factor;
                    }
                }
            }
        }

        // Photon absorption: a ground-surface molecule is promoted with its
        // vibrational state unchanged.
        if state.n_ph > 0 {
            for i in 0..m {
                if state.ground[i] == 0 {
                    continue;
                }
                let mut to = state.clone();
                to.n_ph -= 1;
                to.ground[i] -= 1;
                to.excited[i] += 1;
                if let Some(a) = bb.index_of(&to) {
                    let factor = ((state.n_ph as f64)
                        * (state.ground[i] as f64)
                        * (to.excited[i] as f64))
                        .sqrt();
                    h[(a, b)] += g * factor;
                }
            }
        }
        // Photon emission from any excited-surface molecule.
        for i in 0..m {
            if state.excited[i] == 0 {
                continue;
            }
            let mut to = state.clone();
            to.n_ph += 1;
            to.ground[i] += 1;
            to.excited[i] -= 1;
            if let Some(a) = bb.index_of(&to) {
                let factor = ((to.n_ph as f64)
                    * (to.ground[i] as f64)
                    * (state.excited[i] as f64))
                    .sqrt();
                h[(a, b)] += g * factor;
            }
        }
    }
    Ok(h)
}

/// One validation measurement with its threshold.
#[derive(Debug, Clone)]
pub struct CheckRecord {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        let pass = measured <= threshold;
        CheckRecord {
            name: name.into(),
            measured,
            threshold,
            pass,
        }
    }
}

/// Result of the spectral-equivalence check.
#[derive(Debug, Clone)]
pub struct MappingReport {
    pub dim_first_quantized: usize,
    pub dim_symmetric: usize,
    pub dim_bosonic: usize,
    pub max_abs_deviation: f64,
}

impl MappingReport {
    pub fn record(&self, threshold: f64) -> CheckRecord {
        CheckRecord::new("bosonic_mapping_spectral_equivalence", self.max_abs_deviation, threshold)
    }
}

/// Compare sorted spectra of the symmetric-projected product Hamiltonian
/// and an occupation-number Hamiltonian over the matching sector.
pub fn verify_mapping(
    sys: &FirstQuantizedSystem,
    sub: &SymmetricSubspace,
    h_bosonic: &DMatrix<f64>,
) -> Result<MappingReport> {
    if sub.dim() != h_bosonic.nrows() {
        return Err(ModelError::invalid(
            "h_bosonic",
            format!(
                "symmetric subspace dim {} != bosonic dim {}",
                sub.dim(),
                h_bosonic.nrows()
            ),
        ));
    }
    let projected = sub.project(&sys.h);
    let eig_a = linalg::eigh(&projected)?;
    let eig_b = linalg::eigh(h_bosonic)?;
    let max_abs_deviation = eig_a
        .values
        .iter()
        .zip(&eig_b.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    Ok(MappingReport {
        dim_first_quantized: sys.dim(),
        dim_symmetric: sub.dim(),
        dim_bosonic: h_bosonic.nrows(),
        max_abs_deviation,
    })
}

/// Commutator norms of a Hamiltonian against the two conserved counts.
#[derive(Debug, Clone)]
pub struct ConservationReport {
    pub excitation_norm: f64,
    pub molecule_norm: f64,
}

impl ConservationReport {
    pub fn records(&self, threshold: f64) -> Vec<CheckRecord> {
        vec![
            CheckRecord::new("excitation_number_commutator", self.excitation_norm, threshold),
            CheckRecord::new("molecule_number_commutator", self.molecule_norm, threshold),
        ]
    }
}

/// Max-entry norm of `[H, Q]` for the excitation count and the molecule
/// count; both vanish exactly when every matrix element connects states of
/// equal charge.
pub fn verify_conservation(h: &DMatrix<f64>, bb: &BosonicBasis) -> Result<ConservationReport> {
    if h.nrows() != bb.dim() || h.ncols() != bb.dim() {
        return Err(ModelError::invalid(
            "h",
            format!("matrix is {}x{}, basis has {}", h.nrows(), h.ncols(), bb.dim()),
        ));
    }
    let q_exc: Vec<f64> = bb.states.iter().map(|s| s.excitations() as f64).collect();
    let q_mol: Vec<f64> = bb.states.iter().map(|s| s.molecules() as f64).collect();
    let mut excitation_norm = 0.0_f64;
    let mut molecule_norm = 0.0_f64;
    for a in 0..bb.dim() {
        for b in 0..bb.dim() {
            let entry = h[(a, b)];
            if entry == 0.0 {
                continue;
            }
            excitation_norm = excitation_norm.max((entry * (q_exc[b] - q_exc[a])).abs());
            molecule_norm = molecule_norm.max((entry * (q_mol[b] - q_mol[a])).abs());
        }
    }
    Ok(ConservationReport {
        excitation_norm,
        molecule_norm,
    })
}

/// Electronic reduced density matrix of molecule 0 for a product-basis
/// state vector: `[[rho_gg, rho_ge], [rho_eg, rho_ee]]`.
pub fn electronic_rdm(sys: &FirstQuantizedSystem, v: &DVector<f64>) -> [[f64; 2]; 2] {
    let mut slots: HashMap<(u32, usize, Vec<(bool, usize)>), [f64; 2]> = HashMap::new();
    for (idx, state) in sys.states.iter().enumerate() {
        let (excited, vib) = state.molecules[0];
        let key = (state.n_ph, vib, state.molecules[1..].to_vec());
        let entry = slots.entry(key).or_insert([0.0, 0.0]);
        entry[usize::from(excited)] += v[idx];
    }
    let mut rho = [[0.0; 2]; 2];
    for amps in slots.values() {
        for a in 0..2 {
            for b in 0..2 {
                rho[a][b] += amps[a] * amps[b];
            }
        }
    }
    rho
}

/// Golden-rule rate from an explicit initial state through a perturbation
/// into every eigenstate of the unperturbed Hamiltonian:
/// `2 pi sum_f |<f|V|i>|^2 L(omega_f; omega_i, gamma)`.
pub fn fgr_oracle(
    eig: &EigenDecomposition,
    initial: &DVector<f64>,
    initial_energy: f64,
    perturbation: &DMatrix<f64>,
    gamma: f64,
) -> Result<f64> {
    fgr_oracle_filtered(eig, initial, initial_energy, perturbation, gamma, |_| true)
}

/// [`fgr_oracle`] restricted to final eigenstates selected by `keep`; used
/// to separate polaritonic from reservoir final states when comparing with
/// closed forms that count only one family.
pub fn fgr_oracle_filtered(
    eig: &EigenDecomposition,
    initial: &DVector<f64>,
    initial_energy: f64,
    perturbation: &DMatrix<f64>,
    gamma: f64,
    keep: impl Fn(usize) -> bool,
) -> Result<f64> {
    let norm = initial.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(ModelError::invalid(
            "initial",
            format!("initial state must be normalized, |v| = {norm}"),
        ));
    }
    if !(gamma > 0.0) {
        return Err(ModelError::invalid("gamma", "must be positive"));
    }
    let driven = perturbation * initial;
    let mut rate = 0.0;
    for f in 0..eig.dim() {
        if !keep(f) {
            continue;
        }
        let element: f64 = eig.vectors.column(f).dot(&driven);
        rate += 2.0
            * std::f64::consts::PI
            * element
            * element
            * lorentzian(eig.values[f], initial_energy, gamma);
    }
    Ok(rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polariton::build_block;
    use crate::vibronic::VibrationalMode;
    use approx::assert_abs_diff_eq;

    fn molecule(s: f64, cap: usize) -> MoleculeModel {
        MoleculeModel::new(
            0.1,
            vec![VibrationalMode::new(0.01, s, cap).unwrap()],
            cap,
        )
        .unwrap()
    }

    fn two_mode_molecule(cap: usize) -> MoleculeModel {
        MoleculeModel::new(
            0.1,
            vec![
                VibrationalMode::new(0.01, 0.9, cap).unwrap(),
                VibrationalMode::new(0.0008, 1.4, cap).unwrap(),
            ],
            cap,
        )
        .unwrap()
    }

    #[test]
    fn single_molecule_mapping_is_a_relabeling() {
        // With one molecule the distinguishable and occupation-number pictures
        // are the same operator, so the spectra agree to solver precision.
        let mol = molecule(1.1, 3);
        let cavity = CavityModel::new(0.104, 0.02, 1, 0.003, 0.0015).unwrap();
        let sys = build_first_quantized(&mol, &cavity, 1, 1).unwrap();
        let eig = linalg::eigh(&sys.h).unwrap();
        let vib = vibronic::enumerate_basis(&mol).unwrap();
        let veg = vibronic::build_veg(&vib, &mol).unwrap();
        let bb = bosonic_basis(vib.len(), 1, 1, Some(1)).unwrap();
        let hb = bosonic_hamiltonian(&bb, &vib, &veg, &cavity, true).unwrap();
        let beig = linalg::eigh(&hb).unwrap();
        assert_eq!(eig.dim(), beig.dim());
        for (a, b) in eig.values.iter().zip(&beig.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_molecule_block_is_a_principal_submatrix() {
        // The production polariton block keeps the photon-vacuum state and the
        // excited ladder; at N = 1 those rows and columns of the full
        // occupation-number Hamiltonian reproduce the block entry for entry.
        let mol = molecule(1.1, 3);
        let cavity = CavityModel::new(0.104, 0.02, 1, 0.003, 0.0015).unwrap();
        let vib = vibronic::enumerate_basis(&mol).unwrap();
        let m = vib.len();
        let veg = vibronic::build_veg(&vib, &mol).unwrap();
        let bb = bosonic_basis(m, 1, 1, Some(1)).unwrap();
        let hb = bosonic_hamiltonian(&bb, &vib, &veg, &cavity, true).unwrap();
        let block = build_block(&[], &veg, &vib, &cavity).unwrap();

        let mut keep = Vec::with_capacity(m + 1);
        let mut photon_vac = OccupationLabel {
            n_ph: 1,
            ground: vec![0; m],
            excited: vec![0; m],
        };
        photon_vac.ground[0] = 1;
        keep.push(bb.index_of(&photon_vac).unwrap());
        for i in 0..m {
            let mut excited = OccupationLabel {
                n_ph: 0,
                ground: vec![0; m],
                excited: vec![0; m],
            };
            excited.excited[i] = 1;
            keep.push(bb.index_of(&excited).unwrap());
        }
        for (r, &br) in keep.iter().enumerate() {
            for (c, &bc) in keep.iter().enumerate() {
                assert_eq!(hb[(br, bc)], block.matrix[(r, c)], "entry ({r}, {c})");
            }
        }
    }

    #[test]
    fn product_basis_count_matches_combinatorics() {
        let mol = molecule(0.5, 1); // m = 2
        let cavity = CavityModel::new(0.1, 0.02, 2, 0.003, 0.0015).unwrap();
        let sys = build_first_quantized(&mol, &cavity, 2, 1).unwrap();
        // One excitation over 2 molecules with 2 vibrational states each:
        // photon x m^2 + 2 x (excited molecule) x m^2.
        assert_eq!(sys.dim(), 4 + 2 * 4);
    }

    #[test]
    fn hamiltonian_is_permutation_invariant() {
        let mol = two_mode_molecule(2);
        let cavity = CavityModel::new(0.1, 0.03, 3, 0.003, 0.0015).unwrap();
        let sys = build_first_quantized(&mol, &cavity, 3, 1).unwrap();
        assert_eq!(sys.permutation_deviation(&[1, 0, 2]), 0.0);
        assert_eq!(sys.permutation_deviation(&[2, 0, 1]), 0.0);
    }

    #[test]
    fn symmetric_groups_have_multinomial_sizes() {
        let mol = molecule(0.5, 2); // m = 3
        let cavity = CavityModel::new(0.1, 0.02, 2, 0.003, 0.0015).unwrap();
        let sys = build_first_quantized(&mol, &cavity, 2, 1).unwrap();
        let sub = symmetric_projector(&sys);
        for (label, members) in &sub.groups {
            let mut expected = factorial(2);
            for &c in label.ground.iter().chain(&label.excited) {
                expected /= factorial(c as u64);
            }
            assert_eq!(members.len() as u64, expected, "label {label:?}");
        }
        // Two distinguishable arrangements of distinct states, one of equal.
        let bb = bosonic_basis(3, 2, 1, Some(1)).unwrap();
        assert_eq!(sub.dim(), bb.dim());
    }

    fn factorial(k: u64) -> u64 {
        (1..=k).product::<u64>().max(1)
    }

    #[test]
    fn mapping_holds_for_two_molecules() {
        let mol = molecule(0.8, 2); // m = 3
        let cavity = CavityModel::new(0.098, 0.03, 2, 0.003, 0.0015).unwrap();
        let sys = build_first_quantized(&mol, &cavity, 2, 1).unwrap();
        let sub = symmetric_projector(&sys);
        let vib = vibronic::enumerate_basis(&mol).unwrap();
        let veg = vibronic::build_veg(&vib, &mol).unwrap();
        let bb = bosonic_basis(vib.len(), 2, 1, Some(1)).unwrap();
        let h = bosonic_hamiltonian(&bb, &vib, &veg, &cavity, true).unwrap();
        let report = verify_mapping(&sys, &sub, &h).unwrap();
        assert!(
            report.max_abs_deviation <= 1e-10,
            "deviation {:.3e}",
            report.max_abs_deviation
        );
    }

    #[test]
    fn conservation_exact_and_negative_control() {
        let mol = molecule(0.7, 2);
        let vib = vibronic::enumerate_basis(&mol).unwrap();
        let veg = vibronic::build_veg(&vib, &mol).unwrap();
        let cavity = CavityModel::new(0.1, 0.03, 2, 0.003, 0.0015).unwrap();
        let bb = bosonic_basis(vib.len(), 2, 2, None).unwrap();
        let h = bosonic_hamiltonian(&bb, &vib, &veg, &cavity, true).unwrap();
        let report = verify_conservation(&h, &bb).unwrap();
        assert_eq!(report.excitation_norm, 0.0);
        assert_eq!(report.molecule_norm, 0.0);

        // Corrupt one entry across excitation sectors; the check must see it.
        let mut bad = h.clone();
        let (a, b) = cross_sector_pair(&bb);
        bad[(a, b)] += 1e-3;
        bad[(b, a)] += 1e-3;
        let report = verify_conservation(&bad, &bb).unwrap();
        assert!(report.excitation_norm > 1e-4);
    }

    fn cross_sector_pair(bb: &BosonicBasis) -> (usize, usize) {
        for a in 0..bb.dim() {
            for b in 0..bb.dim() {
                if bb.states[a].excitations() != bb.states[b].excitations() {
                    return (a, b);
                }
            }
        }
        panic!("basis has a single sector");
    }

    #[test]
    fn dark_exciton_rdm_is_maximally_mixed() {
        // Symmetrized two-molecule state: one molecule excited with a
        // vibrational quantum, the other in the ground vacuum.
        let mol = molecule(0.6, 2);
        let cavity = CavityModel::new(0.1, 0.02, 2, 0.003, 0.0015).unwrap();
        let sys = build_first_quantized(&mol, &cavity, 2, 1).unwrap();
        let sub = symmetric_projector(&sys);
        let target = sub
            .groups
            .iter()
            .position(|(label, _)| {
                label.n_ph == 0 && label.excited[1] == 1 && label.ground[0] == 1
            })
            .expect("vibrationally excited exciton label");
        let v = sub.vector(target, sys.dim());
        let rho = electronic_rdm(&sys, &v);
        assert_abs_diff_eq!(rho[0][0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rho[1][1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rho[0][1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fgr_two_level_hand_value() {
        let mut h0 = DMatrix::zeros(2, 2);
        h0[(0, 0)] = 1.0;
        h0[(1, 1)] = 1.5;
        let eig = linalg::eigh(&h0).unwrap();
        let mut v = DMatrix::zeros(2, 2);
        v[(0, 1)] = 0.02;
        v[(1, 0)] = 0.02;
        let initial = DVector::from_vec(vec![1.0, 0.0]);
        let rate = fgr_oracle(&eig, &initial, 1.0, &v, 0.01).unwrap();
        let expect = 2.0 * std::f64::consts::PI * 0.02 * 0.02 * lorentzian(1.5, 1.0, 0.01);
        assert_abs_diff_eq!(rate, expect, epsilon = 1e-15 * expect.abs());
    }

    #[test]
    fn fgr_rejects_unnormalized_initial() {
        let h0 = DMatrix::identity(2, 2);
        let eig = linalg::eigh(&h0).unwrap();
        let v = DMatrix::zeros(2, 2);
        let initial = DVector::from_vec(vec![2.0, 0.0]);
        assert!(fgr_oracle(&eig, &initial, 1.0, &v, 0.01).is_err());
    }

    #[test]
    fn oversized_request_is_rejected() {
        let mol = molecule(1.0, 10); // m = 11: 4 * 11^3 states exceed the cap
        let cavity = CavityModel::new(0.1, 0.02, 3, 0.003, 0.0015).unwrap();
        let err = build_first_quantized(&mol, &cavity, 3, 1).unwrap_err();
        assert!(matches!(err, ModelError::OracleTooLarge { .. }));
    }
}
