//! Task execution: solve the configured model, run each requested task, and
//! render the result tables plus the run summary.
//!
//! Sweeps fan out over a dedicated thread pool, each point into its own
//! pre-assigned slot, so the artifacts are byte-identical regardless of the
//! worker count or scheduling order.

use std::collections::BTreeMap;
use std::path::Path;

use molpol::grid::Grid;
use molpol::oracle::{
    bosonic_basis, bosonic_hamiltonian, build_first_quantized, symmetric_projector,
    verify_conservation, verify_mapping, CheckRecord,
};
use molpol::polariton::{
    absorption_transmission, build_block, diagonalize, photon_green_function, CavityModel,
    LinearResponse, PolaritonEigensystem,
};
use molpol::rates::{
    radiative_pumping_overlap, radiative_pumping_sum, raman_scattering, recycling_rate,
    vibrational_relaxation,
};
use molpol::vibronic::{
    bare_absorption, bare_emission, build_veg, converge_molecule, enumerate_basis,
    stokes_shifted_state, AbsorptionPrefactor, BareSpectrum, ConvergedMolecule, MoleculeModel,
    VibrationalMode,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    apply_sweep, CliError, GridParams, ModelParams, OutputFormat, RunConfig, Task, VrParams,
};
use crate::output::{Cell, Table};

fn numerical<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

// ---------------------------------------------------------------------------
// Model assembly.
// ---------------------------------------------------------------------------

struct Solved {
    conv: ConvergedMolecule,
    cavity: CavityModel,
    eig: PolaritonEigensystem,
}

fn solve(p: &ModelParams) -> Result<Solved, CliError> {
    let conv = if p.auto_converge {
        let pairs: Vec<(f64, f64)> = p.modes.iter().map(|m| (m.omega_nu, m.s)).collect();
        converge_molecule(p.omega0, &pairs, p.epsilon).map_err(numerical)?
    } else {
        let modes: Vec<VibrationalMode> = p
            .modes
            .iter()
            .map(|m| {
                VibrationalMode::new(m.omega_nu, m.s, m.n_max.expect("caps checked at load"))
            })
            .collect::<Result<_, _>>()
            .map_err(numerical)?;
        let total = p
            .total_quanta_cap
            .unwrap_or_else(|| modes.iter().map(|m| m.n_max).sum());
        let molecule = MoleculeModel::new(p.omega0, modes, total).map_err(numerical)?;
        let basis = enumerate_basis(&molecule).map_err(numerical)?;
        let veg = build_veg(&basis, &molecule).map_err(numerical)?;
        let stokes = stokes_shifted_state(&veg).map_err(numerical)?;
        ConvergedMolecule {
            molecule,
            basis,
            veg,
            stokes,
            growth_rounds: 0,
        }
    };
    let cavity = CavityModel::new(p.omega_c(), p.g_sqrt_n, p.n_molecules, p.kappa, p.gamma_xi)
        .map_err(numerical)?;
    let block = build_block(&[], &conv.veg, &conv.basis, &cavity).map_err(numerical)?;
    let eig = diagonalize(&block).map_err(numerical)?;
    Ok(Solved { conv, cavity, eig })
}

/// Frequency-resolved photon response plus the reservoir emission entering
/// the pumping and recycling overlaps (zero-phonon line excluded: that
/// emission returns the molecule to its global ground state and does not
/// feed the polariton band).
struct Response {
    grid: Grid,
    lr: LinearResponse,
    em_rp: BareSpectrum,
}

fn response(s: &Solved, gp: &GridParams, gamma_mol: f64) -> Result<Response, CliError> {
    let grid = Grid::new(gp.omega_min, gp.omega_max, gp.points).map_err(numerical)?;
    let gf = photon_green_function(&s.eig, s.cavity.gamma_xi, &grid).map_err(numerical)?;
    let lr = absorption_transmission(&gf, s.cavity.kappa).map_err(numerical)?;
    let em_rp = bare_emission(&s.conv.stokes, &s.conv.basis, gamma_mol, &grid, false)
        .map_err(numerical)?;
    Ok(Response { grid, lr, em_rp })
}

fn needs_response(tasks: &[Task]) -> bool {
    tasks
        .iter()
        .any(|t| matches!(t, Task::Spectra | Task::Rp | Task::Rec))
}

// ---------------------------------------------------------------------------
// Rate tasks.
// ---------------------------------------------------------------------------

/// One rate task's result: the headline scalar, named partial rates, and
/// any extra scalars worth keeping in the summary.
struct RateDetail {
    total: f64,
    channels: BTreeMap<String, f64>,
    scalars: BTreeMap<&'static str, f64>,
}

fn compute_rate(
    task: Task,
    s: &Solved,
    resp: Option<&Response>,
    vr: &VrParams,
) -> Result<RateDetail, CliError> {
    match task {
        Task::Rp => {
            let sum = radiative_pumping_sum(&s.conv.stokes, &s.eig, &s.conv.basis, &s.cavity)
                .map_err(numerical)?;
            let resp = resp.expect("grid presence checked at load");
            let overlap = radiative_pumping_overlap(&resp.em_rp, &resp.lr, &s.cavity)
                .map_err(numerical)?;
            let mut scalars = BTreeMap::new();
            scalars.insert("overlap_total", overlap.total);
            Ok(RateDetail {
                total: sum.total,
                channels: overlap.channels,
                scalars,
            })
        }
        Task::Rec => {
            let resp = resp.expect("grid presence checked at load");
            let rec = recycling_rate(&resp.em_rp, &resp.lr, &s.cavity).map_err(numerical)?;
            Ok(RateDetail {
                total: rec.rate.total,
                channels: rec.rate.channels,
                scalars: BTreeMap::new(),
            })
        }
        Task::Vr => {
            let mut occ = vec![0u32; s.conv.molecule.modes.len()];
            occ[vr.initial_mode] = 1;
            let k = s.conv.basis.index_of(&occ).ok_or_else(|| {
                CliError::Numerical(format!(
                    "initial vibrational state {occ:?} is outside the retained basis"
                ))
            })?;
            let br = vibrational_relaxation(k, &s.conv.veg, &s.conv.molecule, &s.cavity, vr.variant)
                .map_err(numerical)?;
            let mut channels = BTreeMap::new();
            channels.insert("upper".to_string(), br.upper.total);
            channels.insert("lower".to_string(), br.lower.total);
            for (name, value) in &br.upper.channels {
                channels.insert(format!("upper.{name}"), *value);
            }
            for (name, value) in &br.lower.channels {
                channels.insert(format!("lower.{name}"), *value);
            }
            Ok(RateDetail {
                total: br.upper.total + br.lower.total,
                channels,
                scalars: BTreeMap::new(),
            })
        }
        Task::Scatt => {
            let rate = raman_scattering(&s.conv.stokes, &s.eig, &s.conv.basis, &s.cavity)
                .map_err(numerical)?;
            let mut scalars = BTreeMap::new();
            scalars.insert("final_state_pairs", rate.per_final_state.len() as f64);
            Ok(RateDetail {
                total: rate.total,
                channels: rate.channels,
                scalars,
            })
        }
        Task::Spectra | Task::Oracle => unreachable!("not a rate task"),
    }
}

/// All rate tasks for one sweep point, solved from scratch.
fn point_rates(
    p: &ModelParams,
    tasks: &[Task],
    grid: Option<&GridParams>,
    vr: &VrParams,
) -> Result<BTreeMap<Task, RateDetail>, CliError> {
    let solved = solve(p)?;
    let resp = match grid {
        Some(gp) if needs_response(tasks) => Some(response(&solved, gp, p.gamma_mol)?),
        _ => None,
    };
    let mut out = BTreeMap::new();
    for &task in tasks {
        out.insert(task, compute_rate(task, &solved, resp.as_ref(), vr)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Table tasks.
// ---------------------------------------------------------------------------

const SPECTRA_COLUMNS: [&str; 7] = [
    "omega",
    "sigma_abs",
    "sigma_em",
    "A",
    "T",
    "minus_im_DR",
    "gamma_rp_omega",
];

fn spectra_table(s: &Solved, resp: &Response, p: &ModelParams) -> Result<Table, CliError> {
    let prefactor = AbsorptionPrefactor::CollectiveNg2 {
        n_molecules: p.n_molecules,
        g: s.cavity.g(),
    };
    let ab = bare_absorption(&s.conv.veg, p.gamma_mol, &resp.grid, prefactor).map_err(numerical)?;
    let em = bare_emission(&s.conv.stokes, &s.conv.basis, p.gamma_mol, &resp.grid, true)
        .map_err(numerical)?;
    let rp = radiative_pumping_overlap(&resp.em_rp, &resp.lr, &s.cavity).map_err(numerical)?;
    let rp_curve = rp
        .frequency_resolved
        .ok_or_else(|| CliError::Numerical("pumping overlap returned no curve".to_string()))?;
    let mut table = Table::new(&SPECTRA_COLUMNS);
    for i in 0..resp.grid.len() {
        table.push(vec![
            Cell::Num(resp.grid.at(i)),
            Cell::Num(ab.broadened.values[i]),
            Cell::Num(em.broadened.values[i]),
            Cell::Num(resp.lr.a[i]),
            Cell::Num(resp.lr.t[i]),
            Cell::Num(-resp.lr.gf.dr[i].im),
            Cell::Num(rp_curve.values[i]),
        ]);
    }
    Ok(table)
}

/// Small exactly solvable instances checking the production matrix elements
/// against a brute-force distinguishable-molecule reference.
fn oracle_checks(p: &ModelParams) -> Result<Vec<CheckRecord>, CliError> {
    let mode0 = &p.modes[0];
    let mut records = Vec::new();
    for &(n, cap, n_exc) in &[(2usize, 2usize, 1u32), (2, 2, 2), (3, 1, 1)] {
        let m = cap + 1;
        let mol = MoleculeModel::new(
            p.omega0,
            vec![VibrationalMode::new(mode0.omega_nu, mode0.s, cap).map_err(numerical)?],
            cap,
        )
        .map_err(numerical)?;
        let cavity = CavityModel::new(p.omega_c(), p.g_sqrt_n, n as u64, p.kappa, p.gamma_xi)
            .map_err(numerical)?;
        let sys = build_first_quantized(&mol, &cavity, n, n_exc).map_err(numerical)?;
        let sub = symmetric_projector(&sys);
        let vib = enumerate_basis(&mol).map_err(numerical)?;
        let veg = build_veg(&vib, &mol).map_err(numerical)?;
        let bb = bosonic_basis(m, n as u64, n_exc, Some(n_exc)).map_err(numerical)?;
        let hb = bosonic_hamiltonian(&bb, &vib, &veg, &cavity, true).map_err(numerical)?;
        let report = verify_mapping(&sys, &sub, &hb).map_err(numerical)?;
        records.push(CheckRecord::new(
            format!("mapping_n{n}_m{m}_exc{n_exc}"),
            report.max_abs_deviation,
            1e-10,
        ));
    }
    // Conservation laws on a basis spanning several excitation sectors.
    let mol = MoleculeModel::new(
        p.omega0,
        vec![VibrationalMode::new(mode0.omega_nu, mode0.s, 2).map_err(numerical)?],
        2,
    )
    .map_err(numerical)?;
    let cavity =
        CavityModel::new(p.omega_c(), p.g_sqrt_n, 3, p.kappa, p.gamma_xi).map_err(numerical)?;
    let vib = enumerate_basis(&mol).map_err(numerical)?;
    let veg = build_veg(&vib, &mol).map_err(numerical)?;
    let bb = bosonic_basis(vib.len(), 3, 2, None).map_err(numerical)?;
    let hb = bosonic_hamiltonian(&bb, &vib, &veg, &cavity, true).map_err(numerical)?;
    let conservation = verify_conservation(&hb, &bb).map_err(numerical)?;
    records.extend(conservation.records(0.0));
    Ok(records)
}

fn oracle_table(records: &[CheckRecord]) -> Table {
    let mut table = Table::new(&["name", "measured", "threshold", "pass"]);
    for r in records {
        table.push(vec![
            Cell::Text(r.name.clone()),
            Cell::Num(r.measured),
            Cell::Num(r.threshold),
            Cell::Flag(r.pass),
        ]);
    }
    table
}

// ---------------------------------------------------------------------------
// Summary document.
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MoleculeSummary {
    basis_size: usize,
    caps: Vec<usize>,
    total_quanta_cap: usize,
    omega_0: f64,
    reorganization: f64,
    emitter_energy: f64,
    fc_leak: f64,
    auto_converge: bool,
    growth_rounds: usize,
    converged: bool,
}

#[derive(Serialize)]
struct CavitySummary {
    omega_c: f64,
    detuning: f64,
    g_sqrt_n: f64,
    g: f64,
    n_molecules: u64,
    kappa: f64,
    gamma_xi: f64,
    gamma_mol: f64,
}

#[derive(Serialize)]
struct SweepSummary {
    parameter: String,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct Summary {
    molecule: MoleculeSummary,
    cavity: CavitySummary,
    tasks: BTreeMap<&'static str, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepSummary>,
}

fn molecule_summary(base: &Solved, p: &ModelParams) -> MoleculeSummary {
    MoleculeSummary {
        basis_size: base.conv.basis.len(),
        caps: base.conv.molecule.modes.iter().map(|m| m.n_max).collect(),
        total_quanta_cap: base.conv.molecule.total_quanta_cap,
        omega_0: p.omega0,
        reorganization: p.reorganization(),
        emitter_energy: base.conv.stokes.energy,
        fc_leak: base.conv.stokes.fc_leak,
        auto_converge: p.auto_converge,
        growth_rounds: base.conv.growth_rounds,
        converged: true,
    }
}

fn cavity_summary(p: &ModelParams) -> CavitySummary {
    CavitySummary {
        omega_c: p.omega_c(),
        detuning: p.detuning(),
        g_sqrt_n: p.g_sqrt_n,
        g: p.g(),
        n_molecules: p.n_molecules,
        kappa: p.kappa,
        gamma_xi: p.gamma_xi,
        gamma_mol: p.gamma_mol,
    }
}

fn rate_json(d: &RateDetail) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    map.insert("total".to_string(), serde_json::json!(d.total));
    for (name, value) in &d.scalars {
        map.insert(name.to_string(), serde_json::json!(value));
    }
    map.insert("channels".to_string(), serde_json::json!(d.channels));
    serde_json::Value::Object(map)
}

// ---------------------------------------------------------------------------
// Run drivers.
// ---------------------------------------------------------------------------

/// Execute every configured task and return the artifacts to write, as
/// `(file name, bytes)` pairs.
pub fn run(cfg: &RunConfig, threads: usize) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let base = solve(&cfg.model)?;
    let resp = match &cfg.grid {
        Some(gp) if needs_response(&cfg.tasks) => {
            Some(response(&base, gp, cfg.model.gamma_mol)?)
        }
        _ => None,
    };

    let ext = match cfg.format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    let encode = |t: &Table| match cfg.format {
        OutputFormat::Csv => t.csv(),
        OutputFormat::Json => t.json(),
    };

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut task_json: BTreeMap<&'static str, serde_json::Value> = BTreeMap::new();

    match &cfg.sweep {
        None => {
            for &task in &cfg.tasks {
                let (table, doc) = match task {
                    Task::Spectra => {
                        let resp = resp.as_ref().expect("grid presence checked at load");
                        let table = spectra_table(&base, resp, &cfg.model)?;
                        let doc = serde_json::json!({ "grid_points": table.rows.len() });
                        (table, doc)
                    }
                    Task::Oracle => {
                        let records = oracle_checks(&cfg.model)?;
                        let table = oracle_table(&records);
                        let checks: Vec<serde_json::Value> = records
                            .iter()
                            .map(|r| {
                                serde_json::json!({
                                    "name": r.name,
                                    "measured": r.measured,
                                    "threshold": r.threshold,
                                    "pass": r.pass,
                                })
                            })
                            .collect();
                        let doc = serde_json::json!({
                            "all_pass": records.iter().all(|r| r.pass),
                            "checks": checks,
                        });
                        (table, doc)
                    }
                    rate => {
                        let detail = compute_rate(rate, &base, resp.as_ref(), &cfg.vr)?;
                        let mut table = Table::new(&["rate"]);
                        table.push(vec![Cell::Num(detail.total)]);
                        (table, rate_json(&detail))
                    }
                };
                files.push((format!("{}.{ext}", task.name()), encode(&table)));
                task_json.insert(task.name(), doc);
            }
        }
        Some(sweep) => {
            // Validation has already vetted every (parameter, value) pair.
            let points: Vec<ModelParams> = sweep
                .values
                .iter()
                .map(|&v| {
                    apply_sweep(&cfg.model, &sweep.parameter, v)
                        .expect("sweep values checked at load")
                })
                .collect();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Io(format!("cannot build thread pool: {e}")))?;
            let details: Vec<BTreeMap<Task, RateDetail>> = pool.install(|| {
                points
                    .par_iter()
                    .map(|p| point_rates(p, &cfg.tasks, cfg.grid.as_ref(), &cfg.vr))
                    .collect::<Result<Vec<_>, CliError>>()
            })?;
            for &task in &cfg.tasks {
                let mut table = Table::new(&["sweep_value", "rate"]);
                let mut rates = Vec::with_capacity(details.len());
                let mut channels = Vec::with_capacity(details.len());
                for (value, detail) in sweep.values.iter().zip(&details) {
                    let d = &detail[&task];
                    table.push(vec![Cell::Num(*value), Cell::Num(d.total)]);
                    rates.push(d.total);
                    channels.push(d.channels.clone());
                }
                files.push((format!("{}.{ext}", task.name()), encode(&table)));
                task_json.insert(
                    task.name(),
                    serde_json::json!({ "rates": rates, "channels": channels }),
                );
            }
        }
    }

    let summary = Summary {
        molecule: molecule_summary(&base, &cfg.model),
        cavity: cavity_summary(&cfg.model),
        tasks: task_json,
        sweep: cfg.sweep.as_ref().map(|s| SweepSummary {
            parameter: s.parameter.clone(),
            values: s.values.clone(),
        }),
    };
    let mut summary_bytes =
        serde_json::to_vec_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    summary_bytes.push(b'\n');
    files.push(("summary.json".to_string(), summary_bytes));
    Ok(files)
}

/// Human-readable `validate` report: derived quantities and the planned
/// work, with no model solving.
pub fn validate_report(cfg: &RunConfig, path: &Path) -> String {
    let m = &cfg.model;
    let caps = m.caps();
    let total_cap: usize = m.total_quanta_cap.unwrap_or_else(|| caps.iter().sum());
    let tasks: Vec<&str> = cfg.tasks.iter().map(|t| t.name()).collect();
    let runs = cfg.sweep.as_ref().map_or(1, |s| s.values.len());
    let mut out = String::new();
    out.push_str(&format!("configuration OK: {}\n", path.display()));
    out.push_str(&format!(
        "molecule: {} mode(s), basis size estimate {} (caps {:?}, total quanta cap {}{})\n",
        m.modes.len(),
        m.basis_size_estimate(),
        caps,
        total_cap,
        if m.auto_converge {
            ", before adaptive growth"
        } else {
            ""
        },
    ));
    out.push_str(&format!(
        "cavity: omega_c = {}, detuning = {}, g_sqrt_n = {}, g = {}, n_molecules = {}\n",
        m.omega_c(),
        m.detuning(),
        m.g_sqrt_n,
        m.g(),
        m.n_molecules,
    ));
    out.push_str(&format!("tasks: {}\n", tasks.join(", ")));
    match &cfg.sweep {
        Some(s) => out.push_str(&format!(
            "sweep: {} over {} value(s)\n",
            s.parameter,
            s.values.len()
        )),
        None => out.push_str("sweep: none\n"),
    }
    out.push_str(&format!("planned runs: {runs}\n"));
    out
}
