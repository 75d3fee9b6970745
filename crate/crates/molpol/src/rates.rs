//! Fermi-golden-rule relaxation rates between polariton and reservoir states.
//!
//! Four processes are covered: radiative pumping of polaritons by reservoir
//! emission (in two algebraically equivalent forms), the reabsorbed
//! ("photon recycling") share of that emission, phonon-assisted relaxation
//! of a reservoir state into the polariton branches, and two-phonon Raman
//! scattering from the relaxed emitter into the lower polariton region.
//! All rates share one Lorentzian final-state resolution `gamma_xi` and are
//! reported with a per-final-state breakdown.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{ModelError, Result};
use crate::grid::{lorentzian, SpectralFunction};
use crate::polariton::{CavityModel, LinearResponse, PolaritonEigensystem};
use crate::vibronic::{
    BareSpectrum, MoleculeModel, StokesShiftedState, VibrationalBasis, VibronicCouplingMatrix,
};

/// Contributions below this fraction of the running total are dropped from
/// the sum and the breakdown; the iteration order is fixed, so the
/// truncation is reproducible.
pub const CONTRIBUTION_CUTOFF: f64 = 1e-15;

/// Pair weight below which a two-phonon final state is skipped entirely.
pub const PAIR_WEIGHT_CUTOFF: f64 = 1e-10;

/// A rate with its decomposition over final states and optional extras.
#[derive(Debug, Clone)]
pub struct RateResult {
    /// Total rate (inverse time, atomic units).
    pub total: f64,
    /// `(label, contribution)` per retained final state, in evaluation order.
    pub per_final_state: Vec<(String, f64)>,
    /// Rate density over frequency, where the process defines one.
    pub frequency_resolved: Option<SpectralFunction>,
    /// Named partial rates (e.g. transmitted/reabsorbed split).
    pub channels: BTreeMap<String, f64>,
}

/// Accumulates non-negative contributions in a fixed order, dropping terms
/// below [`CONTRIBUTION_CUTOFF`] of the running total.
#[derive(Debug, Default)]
struct RateAccumulator {
    total: f64,
    entries: Vec<(String, f64)>,
}

impl RateAccumulator {
    fn push(&mut self, label: impl FnOnce() -> String, value: f64) {
        debug_assert!(value >= 0.0, "negative rate contribution {value}");
        if value < CONTRIBUTION_CUTOFF * self.total {
            return;
        }
        self.total += value;
        self.entries.push((label(), value));
    }

    fn into_result(self) -> RateResult {
        RateResult {
            total: self.total,
            per_final_state: self.entries,
            frequency_resolved: None,
            channels: BTreeMap::new(),
        }
    }
}

/// Radiative pumping as an explicit double sum over polariton eigenstates
/// and reservoir emission lines:
/// `2 pi g^2 sum_xi sum_j |a_xi|^2 |c_j|^2 L(omega_xi; omega_ss - omega_g_j)`.
///
/// `eig` must be the primary-block eigensystem; the reservoir-shifted
/// blocks enter through the collective-coupling contraction bound, not
/// explicitly.
pub fn radiative_pumping_sum(
    ss: &StokesShiftedState,
    eig: &PolaritonEigensystem,
    basis: &VibrationalBasis,
    cavity: &CavityModel,
) -> Result<RateResult> {
    if ss.dim() != basis.len() || eig.matter.nrows() != basis.len() {
        return Err(ModelError::invalid(
            "basis",
            format!(
                "size mismatch: emitter {} / eigensystem {} / basis {}",
                ss.dim(),
                eig.matter.nrows(),
                basis.len()
            ),
        ));
    }
    let g = cavity.g();
    let pref = 2.0 * std::f64::consts::PI * g * g;
    let gamma = cavity.gamma_xi;
    let mut acc = RateAccumulator::default();
    for j in 0..basis.len() {
        if j == basis.vacuum() {
            continue;
        }
        let w_j = ss.c(j) * ss.c(j);
        if w_j == 0.0 {
            continue;
        }
        let center = ss.energy - basis.energy(j);
        for xi in 0..eig.len() {
            let value =
                pref * eig.photon_weight(xi) * w_j * lorentzian(eig.eigenvalues[xi], center, gamma);
            acc.push(|| format!("xi{xi}<-{}", basis.label(j)), value);
        }
    }
    Ok(acc.into_result())
}

fn stick_overlap_channels(
    em: &BareSpectrum,
    lr: &LinearResponse,
    prefactor: f64,
) -> (RateAccumulator, f64, f64) {
    let mut acc = RateAccumulator::default();
    let mut reabsorbed = 0.0;
    let mut transmitted = 0.0;
    for (s, &(omega, weight)) in em.sticks.sticks.iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        let a = lr.a_at(omega);
        let t2 = 2.0 * lr.t_at(omega);
        let value = prefactor * weight * (a + t2);
        reabsorbed += prefactor * weight * a;
        transmitted += prefactor * weight * t2;
        acc.push(|| format!("em{s}@{omega:.6}"), value.max(0.0));
    }
    (acc, reabsorbed, transmitted)
}

/// Radiative pumping as the overlap of bare emission with the cavity
/// response, `(2 g^2 / kappa) * integral of sigma_em (A + 2T)`.
///
/// The total and the transmitted/reabsorbed channel split are evaluated on
/// the emission stick lines with the analytic response (the sticks already
/// carry the final-state Lorentzian through `A` and `T`, so broadening the
/// emission again would widen every line twice). The broadened emission
/// profile enters only the frequency-resolved curve reported for plotting.
pub fn radiative_pumping_overlap(
    em: &BareSpectrum,
    lr: &LinearResponse,
    cavity: &CavityModel,
) -> Result<RateResult> {
    let g = cavity.g();
    let pref = 2.0 * g * g / cavity.kappa;
    let (acc, reabsorbed, transmitted) = stick_overlap_channels(em, lr, pref);
    let mut result = acc.into_result();
    let grid = lr.grid().clone();
    let density: Vec<f64> = grid
        .iter()
        .zip(lr.a.iter().zip(&lr.t))
        .map(|(omega, (&a, &t))| {
            pref * em.sticks.density_at(omega, em.gamma_mol) * (a + 2.0 * t)
        })
        .collect();
    result.frequency_resolved = Some(SpectralFunction {
        grid,
        values: density,
    });
    result
        .channels
        .insert("reabsorbed".to_string(), reabsorbed);
    result
        .channels
        .insert("transmitted".to_string(), transmitted);
    Ok(result)
}

/// Photon recycling output: the reabsorbed rate plus the `A/(2T)` ratio
/// diagnostic used to judge where reabsorption dominates transmission.
#[derive(Debug, Clone)]
pub struct RecyclingRate {
    pub rate: RateResult,
    /// `A(omega) / (2 T(omega))` wherever `T > 1e-30`, else 0.
    pub ratio: SpectralFunction,
}

/// Reabsorbed ("recycled") share of the reservoir emission:
/// `(2 g^2 / kappa) * integral of sigma_em A`.
pub fn recycling_rate(
    em: &BareSpectrum,
    lr: &LinearResponse,
    cavity: &CavityModel,
) -> Result<RecyclingRate> {
    let g = cavity.g();
    let pref = 2.0 * g * g / cavity.kappa;
    let mut acc = RateAccumulator::default();
    for (s, &(omega, weight)) in em.sticks.sticks.iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        let value = (pref * weight * lr.a_at(omega)).max(0.0);
        acc.push(|| format!("em{s}@{omega:.6}"), value);
    }
    let mut rate = acc.into_result();
    let grid = lr.grid().clone();
    let density: Vec<f64> = grid
        .iter()
        .zip(&lr.a)
        .map(|(omega, &a)| pref * em.sticks.density_at(omega, em.gamma_mol) * a)
        .collect();
    rate.frequency_resolved = Some(SpectralFunction {
        grid: grid.clone(),
        values: density,
    });
    let ratio_values: Vec<f64> = lr
        .a
        .iter()
        .zip(&lr.t)
        .map(|(&a, &t)| if t > 1e-30 { a / (2.0 * t) } else { 0.0 })
        .collect();
    Ok(RecyclingRate {
        rate,
        ratio: SpectralFunction {
            grid,
            values: ratio_values,
        },
    })
}

/// Variant of the reservoir-to-polariton relaxation rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VrVariant {
    /// All four coupling pathways.
    Full4,
    /// Only the two pathways that survive dropping couplings back into the
    /// vertically excited region.
    Reduced2,
    /// Mode-sum estimate: one generic single-quantum channel per mode.
    Litinskaya,
}

/// Rates into the upper (+) and lower (-) polariton branches.
#[derive(Debug, Clone)]
pub struct BranchRates {
    pub upper: RateResult,
    pub lower: RateResult,
}

/// Names of the four relaxation pathways, in evaluation order.
const VR_CHANNELS: [&str; 4] = [
    "second_order_g",
    "first_order_g",
    "fc_recurrence",
    "same_mode",
];

/// Relaxation of the reservoir state with one phonon in basis state `k`
/// into the polariton branches at zero detuning.
///
/// Channels, with `l(x) = (gamma/pi)/(x^2 + gamma^2)` and the upper/lower
/// sign choice `s = +1/-1`:
/// - `second_order_g`: `2 pi (N-1)/(2N^2) sum_{i != k} V_ik^2 l(omega_i - omega_k + s gN)`
/// - `first_order_g`:  `2 pi 1/(2N^2) sum_{i != k} V_i0^2 l(omega_i + s gN)`
/// - `fc_recurrence`:  `2 pi (N-1)/(2N) V_0k^2 l(-omega_k + s gN)` (full4 only)
/// - `same_mode`:      `2 pi 1/N^2 V_k0^2 l(omega_k + s gN)` (full4 only)
///
/// where `omega_i` are ground-surface phonon energies, `V` the vibronic
/// coupling, and `gN` the collective coupling. The `litinskaya` variant
/// replaces the state sum with one generic channel per mode,
/// `2 pi (N-1)/(2N^2) sum_modes omega_nu^2 s_HR l(omega_nu + s gN)`.
pub fn vibrational_relaxation(
    k: usize,
    veg: &VibronicCouplingMatrix,
    molecule: &MoleculeModel,
    cavity: &CavityModel,
    variant: VrVariant,
) -> Result<BranchRates> {
    if k == 0 || k >= veg.dim() {
        return Err(ModelError::invalid(
            "k",
            format!(
                "initial phonon state must be a non-vacuum basis index (got {k}, basis size {})",
                veg.dim()
            ),
        ));
    }
    if veg.omega0() != molecule.omega0 {
        return Err(ModelError::invalid(
            "molecule",
            "coupling matrix was built for a different electronic gap",
        ));
    }
    let delta = cavity.detuning(veg.omega0());
    if delta.abs() > 1e-14 {
        return Err(ModelError::invalid(
            "detuning",
            format!("relaxation closed form requires zero detuning, got {delta:.3e}"),
        ));
    }
    let upper = vr_branch(k, veg, molecule, cavity, variant, 1.0)?;
    let lower = vr_branch(k, veg, molecule, cavity, variant, -1.0)?;
    Ok(BranchRates { upper, lower })
}

fn vr_branch(
    k: usize,
    veg: &VibronicCouplingMatrix,
    molecule: &MoleculeModel,
    cavity: &CavityModel,
    variant: VrVariant,
    sign: f64,
) -> Result<RateResult> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let n = cavity.n_molecules as f64;
    let gn = sign * cavity.g_sqrt_n;
    let gamma = cavity.gamma_xi;
    let omega_g = |i: usize| veg.omega_e(i) - veg.omega0();
    let l = |x: f64| lorentzian(x, 0.0, gamma);

    if variant == VrVariant::Litinskaya {
        let pref = two_pi * (n - 1.0) / (2.0 * n * n);
        let mut acc = RateAccumulator::default();
        for (idx, mode) in molecule.modes.iter().enumerate() {
            let value =
                pref * mode.omega_nu * mode.omega_nu * mode.huang_rhys * l(mode.omega_nu + gn);
            acc.push(|| format!("mode{idx}"), value);
        }
        return Ok(acc.into_result());
    }

    let mut channels = BTreeMap::new();
    let mut acc = RateAccumulator::default();
    let mut channel_totals = [0.0_f64; 4];

    // second_order_g: phonon hops between reservoir configurations.
    let pref = two_pi * (n - 1.0) / (2.0 * n * n);
    for i in 1..veg.dim() {
        if i == k {
            continue;
        }
        let v = veg.v(i, k);
        if v == 0.0 {
            continue;
        }
        let value = pref * v * v * l(omega_g(i) - omega_g(k) + gn);
        channel_totals[0] += value;
        acc.push(|| format!("second_order_g:i{i}"), value);
    }

    // first_order_g: the excited configuration picks up a fresh phonon.
    let pref = two_pi / (2.0 * n * n);
    for i in 1..veg.dim() {
        if i == k {
            continue;
        }
        let v = veg.v(i, 0);
        if v == 0.0 {
            continue;
        }
        let value = pref * v * v * l(omega_g(i) + gn);
        channel_totals[1] += value;
        acc.push(|| format!("first_order_g:i{i}"), value);
    }

    if variant == VrVariant::Full4 {
        // fc_recurrence: the reservoir phonon is reabsorbed and the
        // configuration returns to the vertically excited region.
        let pref = two_pi * (n - 1.0) / (2.0 * n);
        let v = veg.v(0, k);
        if v != 0.0 {
            let value = pref * v * v * l(-omega_g(k) + gn);
            channel_totals[2] += value;
            acc.push(|| "fc_recurrence".to_string(), value);
        }

        // same_mode: the fresh phonon lands in the initial state k.
        let pref = two_pi / (n * n);
        let v = veg.v(k, 0);
        if v != 0.0 {
            let value = pref * v * v * l(omega_g(k) + gn);
            channel_totals[3] += value;
            acc.push(|| "same_mode".to_string(), value);
        }
    }

    let kept = match variant {
        VrVariant::Reduced2 => 2,
        _ => 4,
    };
    for (name, total) in VR_CHANNELS.iter().zip(channel_totals).take(kept) {
        channels.insert((*name).to_string(), total);
    }
    // Recompute the total as the ordered channel sum so that dropping the
    // two extra pathways reproduces the reduced variant bit-for-bit.
    let total = channel_totals[..kept].iter().sum();
    let mut result = acc.into_result();
    result.total = total;
    result.channels = channels;
    Ok(result)
}

/// Two-phonon Raman scattering from the relaxed emitter into the polariton
/// spectrum.
///
/// For the final state with phonons in basis states `i >= j`, the amplitude
/// sums the two emission orderings through all intermediate eigenstates,
/// `M_ij = G_j(E_i) c_i + G_i(E_j) c_j` with
/// `G_j(E) = sum_xi b_(xi,j) a_xi / (omega_xi - E + i gamma)` and
/// `E_i = omega_ss - omega_g_i`; the `i = j` amplitude is `sqrt(2) G_i(E_i) c_i`.
/// The sum over final polariton states collapses exactly onto the photon
/// spectral density, so each pair contributes
/// `2 pi g^4 |M_ij|^2 rho(omega_ss - omega_g_i - omega_g_j)` with
/// `rho(omega) = sum_xi |a_xi|^2 L(omega; omega_xi, gamma)`.
pub fn raman_scattering(
    ss: &StokesShiftedState,
    eig: &PolaritonEigensystem,
    basis: &VibrationalBasis,
    cavity: &CavityModel,
) -> Result<RateResult> {
    let m = basis.len();
    if ss.dim() != m || eig.matter.nrows() != m {
        return Err(ModelError::invalid(
            "basis",
            format!(
                "size mismatch: emitter {} / eigensystem {} / basis {}",
                ss.dim(),
                eig.matter.nrows(),
                m
            ),
        ));
    }
    let g = cavity.g();
    let g4 = g * g * g * g;
    let gamma = cavity.gamma_xi;
    let two_pi = 2.0 * std::f64::consts::PI;

    // Green-function row G_j(E_i) for every target energy E_i at once.
    let mut green: Vec<Vec<Complex64>> = vec![Vec::new(); m];
    for i in 1..m {
        let e_i = ss.energy - basis.energy(i);
        let phi: Vec<Complex64> = (0..eig.len())
            .map(|xi| Complex64::new(eig.photon[xi], 0.0) / Complex64::new(eig.eigenvalues[xi] - e_i, gamma))
            .collect();
        let mut row = vec![Complex64::new(0.0, 0.0); m];
        for xi in 0..eig.len() {
            let p = phi[xi];
            if p.norm_sqr() == 0.0 {
                continue;
            }
            for (j, slot) in row.iter_mut().enumerate() {
                *slot += eig.matter[(j, xi)] * p;
            }
        }
        green[i] = row;
    }

    let rho = |omega: f64| -> f64 {
        (0..eig.len())
            .map(|xi| eig.photon_weight(xi) * lorentzian(omega, eig.eigenvalues[xi], gamma))
            .sum()
    };

    let mut acc = RateAccumulator::default();
    for i in 1..m {
        let w_i = ss.c(i) * ss.c(i);
        for j in 1..=i {
            let w_j = ss.c(j) * ss.c(j);
            if w_i + w_j < PAIR_WEIGHT_CUTOFF {
                continue;
            }
            let amp = if i == j {
                std::f64::consts::SQRT_2 * green[i][i] * ss.c(i)
            } else {
                green[i][j] * ss.c(i) + green[j][i] * ss.c(j)
            };
            let target = ss.energy - basis.energy(i) - basis.energy(j);
            let value = two_pi * g4 * amp.norm_sqr() * rho(target);
            acc.push(|| format!("{}+{}", basis.label(i), basis.label(j)), value);
        }
    }
    Ok(acc.into_result())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::polariton::{
        absorption_transmission, build_block, diagonalize, photon_green_function,
    };
    use crate::vibronic::{
        self, bare_emission, stokes_shifted_state, MoleculeModel, VibrationalMode,
    };
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    struct Setup {
        basis: crate::vibronic::VibrationalBasis,
        veg: VibronicCouplingMatrix,
        ss: StokesShiftedState,
        eig: PolaritonEigensystem,
        cavity: CavityModel,
    }

    fn setup(omega_c: f64, g_sqrt_n: f64, n: u64, s: f64, cap: usize) -> Setup {
        let molecule = MoleculeModel::new(
            0.1,
            vec![VibrationalMode::new(0.01, s, cap).unwrap()],
            cap,
        )
        .unwrap();
        let basis = vibronic::enumerate_basis(&molecule).unwrap();
        let veg = vibronic::build_veg(&basis, &molecule).unwrap();
        let ss = stokes_shifted_state(&veg).unwrap();
        let cavity = CavityModel::new(omega_c, g_sqrt_n, n, 0.003, 0.0015).unwrap();
        let block = build_block(&[], &veg, &basis, &cavity).unwrap();
        let eig = diagonalize(&block).unwrap();
        Setup {
            basis,
            veg,
            ss,
            eig,
            cavity,
        }
    }

    #[test]
    fn pumping_vanishes_without_coupling() {
        let s = setup(0.1, 0.0, 1000, 1.0, 6);
        let r = radiative_pumping_sum(&s.ss, &s.eig, &s.basis, &s.cavity).unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn pumping_two_term_hand_value() {
        // Uncoupled vibration (s = 0) leaves an ideal resonant polariton pair
        // with half photon weight each, plus one dark state that carries no
        // photon weight at all. An emitter placed entirely on the one-quantum
        // line then pumps exactly two final states with analytic positions.
        let s = setup(0.1, 0.04, 100_000, 0.0, 1);
        let omega_ss = 0.095;
        let emitter = StokesShiftedState {
            coefficients: nalgebra::DVector::from_vec(vec![0.0, 1.0]),
            energy: omega_ss,
            fc_leak: 0.0,
        };
        let r = radiative_pumping_sum(&emitter, &s.eig, &s.basis, &s.cavity).unwrap();
        let g = s.cavity.g();
        let center = omega_ss - s.basis.energy(1);
        let gn = s.cavity.g_sqrt_n;
        let expect = 2.0 * std::f64::consts::PI
            * g
            * g
            * 0.5
            * (lorentzian(0.1 - gn, center, 0.0015) + lorentzian(0.1 + gn, center, 0.0015));
        assert_relative_eq!(r.total, expect, max_relative = 1e-10);
        // The dark state's contribution is exactly zero and is dropped from
        // the breakdown by the contribution cutoff.
        assert_eq!(r.per_final_state.len(), 2);
    }

    #[test]
    fn pumping_total_matches_breakdown() {
        let s = setup(0.095, 0.04, 100_000, 2.0, 12);
        let r = radiative_pumping_sum(&s.ss, &s.eig, &s.basis, &s.cavity).unwrap();
        let sum: f64 = r.per_final_state.iter().map(|(_, v)| v).sum();
        assert_relative_eq!(r.total, sum, max_relative = 1e-12);
        assert!(r.per_final_state.iter().all(|&(_, v)| v >= 0.0));
    }

    fn overlap_setup(s: &Setup, points: usize) -> (BareSpectrum, LinearResponse) {
        let lo = s.eig.eigenvalues[0] - 0.05;
        let hi = s.eig.eigenvalues[s.eig.len() - 1] + 0.05;
        let grid = Grid::new(lo, hi, points).unwrap();
        let em = bare_emission(&s.ss, &s.basis, s.cavity.gamma_xi, &grid, false).unwrap();
        let gf = photon_green_function(&s.eig, s.cavity.gamma_xi, &grid).unwrap();
        let lr = absorption_transmission(&gf, s.cavity.kappa).unwrap();
        (em, lr)
    }

    #[test]
    fn overlap_form_equals_sum_form() {
        let s = setup(0.1, 0.04, 100_000, 1.5, 10);
        let (em, lr) = overlap_setup(&s, 2001);
        let sum = radiative_pumping_sum(&s.ss, &s.eig, &s.basis, &s.cavity).unwrap();
        let overlap = radiative_pumping_overlap(&em, &lr, &s.cavity).unwrap();
        assert_relative_eq!(overlap.total, sum.total, max_relative = 1e-10);
    }

    #[test]
    fn overlap_channels_add_up() {
        let s = setup(0.102, 0.04, 100_000, 1.5, 10);
        let (em, lr) = overlap_setup(&s, 2001);
        let overlap = radiative_pumping_overlap(&em, &lr, &s.cavity).unwrap();
        let t = overlap.channels["transmitted"];
        let a = overlap.channels["reabsorbed"];
        assert_relative_eq!(t + a, overlap.total, max_relative = 1e-12);
        assert!(overlap.frequency_resolved.is_some());
    }

    #[test]
    fn pumping_halves_when_n_doubles() {
        let s1 = setup(0.1, 0.04, 100_000, 1.5, 10);
        let s2 = setup(0.1, 0.04, 200_000, 1.5, 10);
        let r1 = radiative_pumping_sum(&s1.ss, &s1.eig, &s1.basis, &s1.cavity).unwrap();
        let r2 = radiative_pumping_sum(&s2.ss, &s2.eig, &s2.basis, &s2.cavity).unwrap();
        assert_relative_eq!(r2.total, r1.total / 2.0, max_relative = 0.01);
    }

    #[test]
    fn recycling_is_the_reabsorbed_channel() {
        let s = setup(0.1, 0.04, 100_000, 1.5, 10);
        let (em, lr) = overlap_setup(&s, 2001);
        let overlap = radiative_pumping_overlap(&em, &lr, &s.cavity).unwrap();
        let rec = recycling_rate(&em, &lr, &s.cavity).unwrap();
        assert_relative_eq!(
            rec.rate.total,
            overlap.channels["reabsorbed"],
            max_relative = 1e-10
        );
    }

    #[test]
    fn recycling_zero_in_empty_cavity() {
        let s = setup(0.1, 0.0, 1000, 1.0, 6);
        // Empty-cavity response: gamma_xi = kappa/2 makes A identically 0.
        let cavity = CavityModel::new(0.1, 0.0, 1000, 0.003, 0.0015).unwrap();
        let block = build_block(&[], &s.veg, &s.basis, &cavity).unwrap();
        let eig = diagonalize(&block).unwrap();
        let grid = Grid::new(0.0, 0.2, 1001).unwrap();
        let gf = photon_green_function(&eig, cavity.kappa / 2.0, &grid).unwrap();
        let lr = absorption_transmission(&gf, cavity.kappa).unwrap();
        let em = bare_emission(&s.ss, &s.basis, cavity.gamma_xi, &grid, false).unwrap();
        let rec = recycling_rate(&em, &lr, &cavity).unwrap();
        assert_abs_diff_eq!(rec.rate.total, 0.0, epsilon = 1e-18);
    }

    fn vr_setup(s: f64, cap: usize) -> (MoleculeModel, VibronicCouplingMatrix, CavityModel) {
        let molecule = MoleculeModel::new(
            0.1,
            vec![VibrationalMode::new(0.01, s, cap).unwrap()],
            cap,
        )
        .unwrap();
        let basis = vibronic::enumerate_basis(&molecule).unwrap();
        let veg = vibronic::build_veg(&basis, &molecule).unwrap();
        let cavity = CavityModel::new(0.1, 0.04, 100_000, 0.003, 0.0015).unwrap();
        (molecule, veg, cavity)
    }

    #[test]
    fn relaxation_zero_without_vibronic_coupling() {
        let (molecule, veg, cavity) = vr_setup(0.0, 3);
        for variant in [VrVariant::Full4, VrVariant::Reduced2, VrVariant::Litinskaya] {
            let r = vibrational_relaxation(1, &veg, &molecule, &cavity, variant).unwrap();
            assert_eq!(r.upper.total, 0.0);
            assert_eq!(r.lower.total, 0.0);
        }
    }

    #[test]
    fn relaxation_rejects_bad_inputs() {
        let (molecule, veg, cavity) = vr_setup(1.0, 4);
        assert!(vibrational_relaxation(0, &veg, &molecule, &cavity, VrVariant::Full4).is_err());
        assert!(vibrational_relaxation(99, &veg, &molecule, &cavity, VrVariant::Full4).is_err());
        let detuned = CavityModel::new(0.11, 0.04, 100_000, 0.003, 0.0015).unwrap();
        assert!(vibrational_relaxation(1, &veg, &molecule, &detuned, VrVariant::Full4).is_err());
    }

    #[test]
    fn relaxation_single_mode_hand_value() {
        // Cap 2, k = 1: second_order_g sees only i = 2 with V^2 = 2 w^2 s;
        // first_order_g sees only i = 2 with V_20 = 0 (two-quantum jump).
        let (molecule, veg, cavity) = vr_setup(0.8, 2);
        let r = vibrational_relaxation(1, &veg, &molecule, &cavity, VrVariant::Reduced2).unwrap();
        let n = 1e5_f64;
        let w = 0.01_f64;
        let s = 0.8_f64;
        let expect_upper = 2.0 * std::f64::consts::PI * (n - 1.0) / (2.0 * n * n)
            * (2.0 * w * w * s)
            * lorentzian(w + 0.04, 0.0, 0.0015);
        assert_relative_eq!(r.upper.total, expect_upper, max_relative = 1e-12);
        assert_eq!(r.upper.channels["first_order_g"], 0.0);
    }

    #[test]
    fn reduced_variant_is_full_minus_extra_channels() {
        let molecule = MoleculeModel::new(
            0.1,
            vec![
                VibrationalMode::new(0.01, 1.0, 3).unwrap(),
                VibrationalMode::new(0.0008, 2.0, 3).unwrap(),
            ],
            5,
        )
        .unwrap();
        let basis = vibronic::enumerate_basis(&molecule).unwrap();
        let veg = vibronic::build_veg(&basis, &molecule).unwrap();
        let cavity = CavityModel::new(0.1, 0.04, 100_000, 0.003, 0.0015).unwrap();
        for k in [1, 2, 3] {
            let full =
                vibrational_relaxation(k, &veg, &molecule, &cavity, VrVariant::Full4).unwrap();
            let red =
                vibrational_relaxation(k, &veg, &molecule, &cavity, VrVariant::Reduced2).unwrap();
            for (f, r) in [(&full.upper, &red.upper), (&full.lower, &red.lower)] {
                // Bitwise: the kept channels and their ordered sum agree.
                assert_eq!(r.channels["second_order_g"], f.channels["second_order_g"]);
                assert_eq!(r.channels["first_order_g"], f.channels["first_order_g"]);
                assert_eq!(
                    r.total,
                    f.channels["second_order_g"] + f.channels["first_order_g"]
                );
                assert!(f.total >= r.total);
            }
        }
    }

    #[test]
    fn litinskaya_matches_reduced_for_spectator_initial_mode() {
        // Every mode capped at one quantum and the initial phonon in an
        // uncoupled mode: the reservoir-hop channel then has exactly one
        // connected state per coupled mode with V^2 = omega^2 s.
        let molecule = MoleculeModel::new(
            0.1,
            vec![
                VibrationalMode::new(0.002, 0.0, 1).unwrap(), // spectator
                VibrationalMode::new(0.01, 1.3, 1).unwrap(),
                VibrationalMode::new(0.0008, 0.7, 1).unwrap(),
            ],
            3,
        )
        .unwrap();
        let basis = vibronic::enumerate_basis(&molecule).unwrap();
        let veg = vibronic::build_veg(&basis, &molecule).unwrap();
        let cavity = CavityModel::new(0.1, 0.04, 100_000, 0.003, 0.0015).unwrap();
        let k = basis.index_of(&[1, 0, 0]).unwrap();
        let red = vibrational_relaxation(k, &veg, &molecule, &cavity, VrVariant::Reduced2).unwrap();
        let lit =
            vibrational_relaxation(k, &veg, &molecule, &cavity, VrVariant::Litinskaya).unwrap();
        assert_relative_eq!(
            lit.upper.total,
            red.upper.channels["second_order_g"],
            max_relative = 1e-10
        );
        assert_relative_eq!(
            lit.lower.total,
            red.lower.channels["second_order_g"],
            max_relative = 1e-10
        );
    }

    #[test]
    fn raman_vanishes_without_coupling() {
        let s = setup(0.1, 0.0, 1000, 1.0, 6);
        let r = raman_scattering(&s.ss, &s.eig, &s.basis, &s.cavity).unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn raman_quarters_when_n_doubles() {
        let s1 = setup(0.1, 0.035, 100_000, 1.5, 10);
        let s2 = setup(0.1, 0.035, 200_000, 1.5, 10);
        let r1 = raman_scattering(&s1.ss, &s1.eig, &s1.basis, &s1.cavity).unwrap();
        let r2 = raman_scattering(&s2.ss, &s2.eig, &s2.basis, &s2.cavity).unwrap();
        assert_relative_eq!(r2.total, r1.total / 4.0, max_relative = 0.01);
    }

    /// Literal triple-sum evaluation of the scattering amplitude formula,
    /// kept as an independent reference for the folded implementation.
    fn raman_naive(s: &Setup) -> f64 {
        let m = s.basis.len();
        let g = s.cavity.g();
        let gamma = s.cavity.gamma_xi;
        let mut total = 0.0;
        for xi_f in 0..s.eig.len() {
            let a_f = s.eig.photon[xi_f];
            for i in 1..m {
                for j in 1..=i {
                    let mut amp = Complex64::new(0.0, 0.0);
                    for xi in 0..s.eig.len() {
                        let a = s.eig.photon[xi];
                        let e_i = s.ss.energy - s.basis.energy(i);
                        let e_j = s.ss.energy - s.basis.energy(j);
                        let term_a = s.eig.matter[(j, xi)] * a * s.ss.c(i)
                            / Complex64::new(s.eig.eigenvalues[xi] - e_i, gamma);
                        let term_b = s.eig.matter[(i, xi)] * a * s.ss.c(j)
                            / Complex64::new(s.eig.eigenvalues[xi] - e_j, gamma);
                        amp += if i == j {
                            // Single pathway with the two-quantum weight.
                            std::f64::consts::SQRT_2 / 2.0 * (term_a + term_b)
                        } else {
                            term_a + term_b
                        };
                    }
                    amp *= g * g * a_f;
                    total += 2.0 * std::f64::consts::PI
                        * amp.norm_sqr()
                        * lorentzian(
                            s.eig.eigenvalues[xi_f] + s.basis.energy(j),
                            s.ss.energy - s.basis.energy(i),
                            gamma,
                        );
                }
            }
        }
        total
    }

    #[test]
    fn raman_folded_matches_naive_triple_sum() {
        let s = setup(0.1, 0.03, 50_000, 1.2, 7);
        let folded = raman_scattering(&s.ss, &s.eig, &s.basis, &s.cavity).unwrap();
        let naive = raman_naive(&s);
        assert_relative_eq!(folded.total, naive, max_relative = 1e-10);
    }

    #[test]
    fn raman_total_matches_breakdown() {
        let s = setup(0.1, 0.035, 100_000, 2.0, 9);
        let r = raman_scattering(&s.ss, &s.eig, &s.basis, &s.cavity).unwrap();
        let sum: f64 = r.per_final_state.iter().map(|(_, v)| v).sum();
        assert_relative_eq!(r.total, sum, max_relative = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        // Rates and their breakdowns stay non-negative and consistent over
        // a range of couplings and displacements.
        #[test]
        fn rates_non_negative(
            s in 0.2f64..2.0,
            g in 0.005f64..0.05,
            dc in -0.02f64..0.02,
        ) {
            let st = setup(0.1 + dc, g, 10_000, s, 6);
            let rp = radiative_pumping_sum(&st.ss, &st.eig, &st.basis, &st.cavity).unwrap();
            prop_assert!(rp.total >= 0.0);
            prop_assert!(rp.per_final_state.iter().all(|&(_, v)| v >= 0.0));
            let sc = raman_scattering(&st.ss, &st.eig, &st.basis, &st.cavity).unwrap();
            prop_assert!(sc.total >= 0.0);
            prop_assert!(sc.per_final_state.iter().all(|&(_, v)| v >= 0.0));
        }

        #[test]
        fn relaxation_branches_non_negative(
            s in 0.2f64..2.5,
            k in 1usize..4,
        ) {
            let (molecule, veg, cavity) = vr_setup(s, 4);
            for variant in [VrVariant::Full4, VrVariant::Reduced2, VrVariant::Litinskaya] {
                let r = vibrational_relaxation(k, &veg, &molecule, &cavity, variant).unwrap();
                for b in [&r.upper, &r.lower] {
                    prop_assert!(b.total >= 0.0);
                    let sum: f64 = b.per_final_state.iter().map(|(_, v)| v).sum();
                    prop_assert!((b.total - sum).abs() <= 1e-12 * b.total.max(1e-300));
                }
            }
        }
    }
}
