//! Run-configuration loading: TOML schema, validation with line-anchored
//! diagnostics, and sweep-parameter application.
//!
//! Every rejection names the offending key and the line it sits on (or the
//! enclosing section header when the key is absent), so a bad config can be
//! fixed without reading this source.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use molpol::rates::VrVariant;
use molpol::vibronic::initial_cap;
use serde::Deserialize;

/// Fatal error carrying the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unusable configuration (exit 2), anchored to a line of the file.
    Config {
        path: String,
        line: usize,
        message: String,
    },
    /// Numerical failure while executing a run (exit 3).
    Numerical(String),
    /// Filesystem failure (exit 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config {
                path,
                line,
                message,
            } => write!(f, "{path}:{line}: {message}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Raw TOML schema. Everything is optional here so that missing keys surface
// as our own anchored messages instead of serde's.
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    molecule: Option<RawMolecule>,
    cavity: Option<RawCavity>,
    grid: Option<RawGrid>,
    tasks: Option<Vec<String>>,
    vr: Option<RawVr>,
    sweep: Option<RawSweep>,
    output: Option<RawOutput>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMolecule {
    omega_0: Option<f64>,
    modes: Option<Vec<RawMode>>,
    total_quanta_cap: Option<usize>,
    auto_converge: Option<bool>,
    epsilon: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    omega_nu: Option<f64>,
    sqrt_s: Option<f64>,
    s: Option<f64>,
    n_max: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCavity {
    omega_c: Option<f64>,
    detuning: Option<f64>,
    vertical_resonance: Option<bool>,
    g_sqrt_n: Option<f64>,
    n_molecules: Option<u64>,
    kappa: Option<f64>,
    gamma_xi: Option<f64>,
    gamma_mol: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    omega_min: Option<f64>,
    omega_max: Option<f64>,
    points: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVr {
    initial_mode: Option<usize>,
    variant: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: Option<String>,
    values: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<String>,
    format: Option<String>,
}

// ---------------------------------------------------------------------------
// Resolved configuration.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Task {
    Spectra,
    Rp,
    Rec,
    Vr,
    Scatt,
    Oracle,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Spectra => "spectra",
            Task::Rp => "rp",
            Task::Rec => "rec",
            Task::Vr => "vr",
            Task::Scatt => "scatt",
            Task::Oracle => "oracle",
        }
    }

    fn from_name(name: &str) -> Option<Task> {
        match name {
            "spectra" => Some(Task::Spectra),
            "rp" => Some(Task::Rp),
            "rec" => Some(Task::Rec),
            "vr" => Some(Task::Vr),
            "scatt" => Some(Task::Scatt),
            "oracle" => Some(Task::Oracle),
            _ => None,
        }
    }

    /// Rate tasks produce one scalar per sweep point; the others produce
    /// per-run tables and refuse to sweep.
    pub fn is_rate(self) -> bool {
        matches!(self, Task::Rp | Task::Rec | Task::Vr | Task::Scatt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Which cavity-placement key the config used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CavityChoice {
    /// Absolute cavity frequency.
    OmegaC(f64),
    /// Offset from the electronic origin: `omega_c = omega_0 + detuning`.
    Detuning(f64),
    /// Cavity at the vertical transition: `omega_c = omega_0 + sum(omega_nu s)`.
    VerticalResonance,
}

#[derive(Debug, Clone)]
pub struct ModeParams {
    pub omega_nu: f64,
    pub s: f64,
    pub n_max: Option<usize>,
}

/// The numeric model behind one run (or one sweep point).
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub omega0: f64,
    pub modes: Vec<ModeParams>,
    pub total_quanta_cap: Option<usize>,
    pub auto_converge: bool,
    pub epsilon: f64,
    pub cavity: CavityChoice,
    pub g_sqrt_n: f64,
    pub n_molecules: u64,
    pub kappa: f64,
    pub gamma_xi: f64,
    pub gamma_mol: f64,
}

impl ModelParams {
    /// Total reorganization energy `sum_k omega_nu_k s_k`.
    pub fn reorganization(&self) -> f64 {
        self.modes.iter().map(|m| m.omega_nu * m.s).sum()
    }

    /// Cavity frequency after resolving the configured placement key.
    pub fn omega_c(&self) -> f64 {
        match self.cavity {
            CavityChoice::OmegaC(w) => w,
            CavityChoice::Detuning(d) => self.omega0 + d,
            CavityChoice::VerticalResonance => self.omega0 + self.reorganization(),
        }
    }

    /// Resolved `omega_c - omega_0`.
    pub fn detuning(&self) -> f64 {
        self.omega_c() - self.omega0
    }

    /// Single-molecule coupling `g = g_sqrt_n / sqrt(N)`.
    pub fn g(&self) -> f64 {
        self.g_sqrt_n / (self.n_molecules as f64).sqrt()
    }

    /// Per-mode caps actually used: explicit `n_max`, or the statistical
    /// starting guess when the run auto-converges.
    pub fn caps(&self) -> Vec<usize> {
        self.modes
            .iter()
            .map(|m| m.n_max.unwrap_or_else(|| initial_cap(m.s)))
            .collect()
    }

    /// Count of vibrational occupation tuples under the per-mode and total
    /// caps, without enumerating them.
    pub fn basis_size_estimate(&self) -> u64 {
        let caps = self.caps();
        let total: usize = self
            .total_quanta_cap
            .unwrap_or_else(|| caps.iter().sum())
            .min(caps.iter().sum());
        let mut ways = vec![0u64; total + 1];
        ways[0] = 1;
        for &cap in &caps {
            let mut next = vec![0u64; total + 1];
            for t in 0..=total {
                for n in 0..=cap.min(t) {
                    next[t] = next[t].saturating_add(ways[t - n]);
                }
            }
            ways = next;
        }
        ways.iter().fold(0u64, |a, &b| a.saturating_add(b))
    }
}

#[derive(Debug, Clone)]
pub struct GridParams {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct VrParams {
    pub initial_mode: usize,
    pub variant: VrVariant,
}

#[derive(Debug, Clone)]
pub struct SweepParams {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: Option<GridParams>,
    pub tasks: Vec<Task>,
    pub vr: VrParams,
    pub sweep: Option<SweepParams>,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
}

// ---------------------------------------------------------------------------
// Line anchoring.
// ---------------------------------------------------------------------------

/// 1-based line of a byte offset.
fn line_of_offset(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

/// Lines of the file with their 1-based numbers, with full-line comments
/// skipped.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.starts_with('#'))
}

/// Line of the `index`-th header for `section` (`[section]` or
/// `[[section]]`), if present.
fn section_header_line(text: &str, section: &str, index: usize) -> Option<usize> {
    let mut seen = 0;
    for (n, line) in numbered_lines(text) {
        let name = line
            .strip_prefix("[[")
            .and_then(|r| r.strip_suffix("]]"))
            .or_else(|| line.strip_prefix('[').and_then(|r| r.strip_suffix(']')));
        if name.map(str::trim) == Some(section) {
            if seen == index {
                return Some(n);
            }
            seen += 1;
        }
    }
    None
}

/// Line where `key` is assigned inside the `index`-th `section` table, if
/// it can be located. Falls back to the section header, then line 1.
fn key_line(text: &str, section: &str, index: usize, key: &str) -> usize {
    let header = section_header_line(text, section, index);
    if let Some(start) = header {
        for (n, line) in numbered_lines(text) {
            if n <= start {
                continue;
            }
            if line.starts_with('[') {
                break;
            }
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return n;
                }
            }
        }
    }
    header.unwrap_or(1)
}

/// Line for a key of the top-level table (e.g. `tasks`).
fn top_key_line(text: &str, key: &str) -> usize {
    for (n, line) in numbered_lines(text) {
        if line.starts_with('[') {
            break;
        }
        if let Some(rest) = line.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return n;
            }
        }
    }
    1
}

// ---------------------------------------------------------------------------
// Loading and validation.
// ---------------------------------------------------------------------------

/// Read and validate a run configuration from disk.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    parse(&path.display().to_string(), &text)
}

/// Validate a configuration from text; `path` is only used in messages.
pub fn parse(path: &str, text: &str) -> Result<RunConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| line_of_offset(text, s.start))
            .unwrap_or(1);
        CliError::Config {
            path: path.to_string(),
            line,
            message: e.message().to_string(),
        }
    })?;
    Validator { path, text }.resolve(raw)
}

struct Validator<'a> {
    path: &'a str,
    text: &'a str,
}

impl<'a> Validator<'a> {
    fn fail<T>(&self, line: usize, message: impl Into<String>) -> Result<T, CliError> {
        Err(CliError::Config {
            path: self.path.to_string(),
            line,
            message: message.into(),
        })
    }

    fn fail_key<T>(&self, section: &str, key: &str, message: impl Into<String>) -> Result<T, CliError> {
        self.fail(key_line(self.text, section, 0, key), message)
    }

    fn section_line(&self, section: &str) -> usize {
        section_header_line(self.text, section, 0).unwrap_or(1)
    }

    /// Line for a key of the `i`-th `[[molecule.modes]]` table; degrades to
    /// the inline `modes = [...]` assignment, then the `[molecule]` header.
    fn mode_line(&self, i: usize, key: &str) -> usize {
        if section_header_line(self.text, "molecule.modes", i).is_some() {
            key_line(self.text, "molecule.modes", i, key)
        } else {
            key_line(self.text, "molecule", 0, "modes")
        }
    }

    fn require<T>(
        &self,
        value: Option<T>,
        section: &str,
        key: &str,
    ) -> Result<T, CliError> {
        match value {
            Some(v) => Ok(v),
            None => self.fail(
                self.section_line(section),
                format!("{section}: missing required key `{key}`"),
            ),
        }
    }

    fn positive(&self, value: f64, section: &str, key: &str) -> Result<f64, CliError> {
        if value.is_finite() && value > 0.0 {
            Ok(value)
        } else {
            self.fail_key(
                section,
                key,
                format!("{section}.{key} must be a positive finite number, got {value}"),
            )
        }
    }

    fn nonnegative(&self, value: f64, section: &str, key: &str) -> Result<f64, CliError> {
        if value.is_finite() && value >= 0.0 {
            Ok(value)
        } else {
            self.fail_key(
                section,
                key,
                format!("{section}.{key} must be a nonnegative finite number, got {value}"),
            )
        }
    }

    fn resolve(&self, raw: RawConfig) -> Result<RunConfig, CliError> {
        let model = self.resolve_model(raw.molecule, raw.cavity)?;
        let grid = self.resolve_grid(raw.grid)?;
        let tasks = self.resolve_tasks(raw.tasks)?;
        let vr = self.resolve_vr(raw.vr, &tasks, &model)?;
        let sweep = self.resolve_sweep(raw.sweep, &tasks, &model)?;
        let (out_dir, format) = self.resolve_output(raw.output)?;

        if grid.is_none() {
            for &t in &tasks {
                if matches!(t, Task::Spectra | Task::Rp | Task::Rec) {
                    return self.fail(
                        top_key_line(self.text, "tasks"),
                        format!("task `{}` requires a [grid] section", t.name()),
                    );
                }
            }
        }

        Ok(RunConfig {
            model,
            grid,
            tasks,
            vr,
            sweep,
            out_dir,
            format,
        })
    }

    fn resolve_model(
        &self,
        molecule: Option<RawMolecule>,
        cavity: Option<RawCavity>,
    ) -> Result<ModelParams, CliError> {
        let Some(mol) = molecule else {
            return self.fail(1, "missing required [molecule] section");
        };
        let Some(cav) = cavity else {
            return self.fail(1, "missing required [cavity] section");
        };

        let omega0 = self.positive(
            self.require(mol.omega_0, "molecule", "omega_0")?,
            "molecule",
            "omega_0",
        )?;
        let auto_converge = mol.auto_converge.unwrap_or(false);
        if let Some(eps) = mol.epsilon {
            if !auto_converge {
                return self.fail_key(
                    "molecule",
                    "epsilon",
                    "molecule.epsilon requires auto_converge = true",
                );
            }
            self.positive(eps, "molecule", "epsilon")?;
        }
        let epsilon = mol.epsilon.unwrap_or(1e-8);

        let raw_modes = self.require(mol.modes, "molecule", "modes")?;
        if raw_modes.is_empty() {
            return self.fail_key("molecule", "modes", "molecule.modes must not be empty");
        }
        let mut modes = Vec::with_capacity(raw_modes.len());
        for (i, m) in raw_modes.iter().enumerate() {
            modes.push(self.resolve_mode(i, m, auto_converge)?);
        }

        if auto_converge && mol.total_quanta_cap.is_some() {
            return self.fail_key(
                "molecule",
                "total_quanta_cap",
                "molecule.total_quanta_cap conflicts with auto_converge = true \
                 (the cap is chosen automatically)",
            );
        }
        if let Some(cap) = mol.total_quanta_cap {
            if cap == 0 {
                return self.fail_key(
                    "molecule",
                    "total_quanta_cap",
                    "molecule.total_quanta_cap must be at least 1",
                );
            }
        }

        let cavity = self.resolve_cavity_choice(&cav)?;
        let g_sqrt_n = self.nonnegative(
            self.require(cav.g_sqrt_n, "cavity", "g_sqrt_n")?,
            "cavity",
            "g_sqrt_n",
        )?;
        let n_molecules = self.require(cav.n_molecules, "cavity", "n_molecules")?;
        if n_molecules == 0 {
            return self.fail_key(
                "cavity",
                "n_molecules",
                "cavity.n_molecules must be at least 1",
            );
        }
        let kappa = self.positive(
            self.require(cav.kappa, "cavity", "kappa")?,
            "cavity",
            "kappa",
        )?;
        let gamma_xi = self.positive(
            self.require(cav.gamma_xi, "cavity", "gamma_xi")?,
            "cavity",
            "gamma_xi",
        )?;
        let gamma_mol = self.positive(
            self.require(cav.gamma_mol, "cavity", "gamma_mol")?,
            "cavity",
            "gamma_mol",
        )?;

        Ok(ModelParams {
            omega0,
            modes,
            total_quanta_cap: mol.total_quanta_cap,
            auto_converge,
            epsilon,
            cavity,
            g_sqrt_n,
            n_molecules,
            kappa,
            gamma_xi,
            gamma_mol,
        })
    }

    fn resolve_mode(
        &self,
        i: usize,
        m: &RawMode,
        auto_converge: bool,
    ) -> Result<ModeParams, CliError> {
        let omega_nu = match m.omega_nu {
            Some(w) if w.is_finite() && w > 0.0 => w,
            Some(w) => {
                return self.fail(
                    self.mode_line(i, "omega_nu"),
                    format!("mode {i}: omega_nu must be a positive finite number, got {w}"),
                )
            }
            None => {
                return self.fail(
                    self.mode_line(i, "omega_nu"),
                    format!("mode {i}: missing required key `omega_nu`"),
                )
            }
        };
        let s = match (m.sqrt_s, m.s) {
            (Some(_), Some(_)) => {
                return self.fail(
                    self.mode_line(i, "sqrt_s"),
                    format!("mode {i}: `sqrt_s` and `s` are mutually exclusive; give exactly one"),
                )
            }
            (Some(r), None) if r.is_finite() && r >= 0.0 => r * r,
            (None, Some(s)) if s.is_finite() && s >= 0.0 => s,
            (Some(r), None) => {
                return self.fail(
                    self.mode_line(i, "sqrt_s"),
                    format!("mode {i}: sqrt_s must be a nonnegative finite number, got {r}"),
                )
            }
            (None, Some(s)) => {
                return self.fail(
                    self.mode_line(i, "s"),
                    format!("mode {i}: s must be a nonnegative finite number, got {s}"),
                )
            }
            (None, None) => {
                return self.fail(
                    self.mode_line(i, "omega_nu"),
                    format!("mode {i}: one of `sqrt_s` or `s` is required"),
                )
            }
        };
        match m.n_max {
            Some(0) => self.fail(
                self.mode_line(i, "n_max"),
                format!("mode {i}: n_max must be at least 1"),
            ),
            None if !auto_converge => self.fail(
                self.mode_line(i, "omega_nu"),
                format!(
                    "mode {i}: `n_max` is required unless molecule.auto_converge = true"
                ),
            ),
            n_max => Ok(ModeParams { omega_nu, s, n_max }),
        }
    }

    fn resolve_cavity_choice(&self, cav: &RawCavity) -> Result<CavityChoice, CliError> {
        if cav.vertical_resonance == Some(false) {
            return self.fail_key(
                "cavity",
                "vertical_resonance",
                "cavity.vertical_resonance must be true when present (omit it otherwise)",
            );
        }
        let mut present: Vec<(&str, CavityChoice)> = Vec::new();
        if let Some(w) = cav.omega_c {
            self.positive(w, "cavity", "omega_c")?;
            present.push(("omega_c", CavityChoice::OmegaC(w)));
        }
        if let Some(d) = cav.detuning {
            if !d.is_finite() {
                return self.fail_key(
                    "cavity",
                    "detuning",
                    format!("cavity.detuning must be finite, got {d}"),
                );
            }
            present.push(("detuning", CavityChoice::Detuning(d)));
        }
        if cav.vertical_resonance == Some(true) {
            present.push(("vertical_resonance", CavityChoice::VerticalResonance));
        }
        match present.len() {
            1 => Ok(present.pop().unwrap().1),
            0 => self.fail(
                self.section_line("cavity"),
                "cavity: exactly one of `omega_c`, `detuning`, `vertical_resonance` is required",
            ),
            _ => self.fail_key(
                "cavity",
                present[1].0,
                format!(
                    "cavity: `{}` and `{}` are mutually exclusive; give exactly one \
                     of `omega_c`, `detuning`, `vertical_resonance`",
                    present[0].0, present[1].0
                ),
            ),
        }
    }

    fn resolve_grid(&self, grid: Option<RawGrid>) -> Result<Option<GridParams>, CliError> {
        let Some(g) = grid else { return Ok(None) };
        let omega_min = self.require(g.omega_min, "grid", "omega_min")?;
        let omega_max = self.require(g.omega_max, "grid", "omega_max")?;
        if !omega_min.is_finite() || !omega_max.is_finite() || omega_min >= omega_max {
            return self.fail_key(
                "grid",
                "omega_min",
                format!(
                    "grid: omega_min must be finite and below omega_max \
                     (got omega_min = {omega_min}, omega_max = {omega_max})"
                ),
            );
        }
        let points = self.require(g.points, "grid", "points")?;
        if points < 2 {
            return self.fail_key("grid", "points", "grid.points must be at least 2");
        }
        Ok(Some(GridParams {
            omega_min,
            omega_max,
            points,
        }))
    }

    fn resolve_tasks(&self, tasks: Option<Vec<String>>) -> Result<Vec<Task>, CliError> {
        let line = top_key_line(self.text, "tasks");
        let Some(names) = tasks else {
            return self.fail(1, "missing required top-level key `tasks`");
        };
        if names.is_empty() {
            return self.fail(line, "tasks must not be empty");
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(names.len());
        for name in &names {
            let Some(task) = Task::from_name(name) else {
                return self.fail(
                    line,
                    format!(
                        "tasks: unknown task `{name}` (expected spectra, rp, rec, vr, \
                         scatt, or oracle)"
                    ),
                );
            };
            if !seen.insert(task) {
                return self.fail(line, format!("tasks: duplicate task `{name}`"));
            }
            out.push(task);
        }
        Ok(out)
    }

    fn resolve_vr(
        &self,
        vr: Option<RawVr>,
        tasks: &[Task],
        model: &ModelParams,
    ) -> Result<VrParams, CliError> {
        let has_vr_task = tasks.contains(&Task::Vr);
        if vr.is_some() && !has_vr_task {
            return self.fail(
                self.section_line("vr"),
                "vr: section requires the `vr` task",
            );
        }
        let raw = vr.unwrap_or(RawVr {
            initial_mode: None,
            variant: None,
        });
        let initial_mode = raw.initial_mode.unwrap_or(0);
        if initial_mode >= model.modes.len() {
            return self.fail_key(
                "vr",
                "initial_mode",
                format!(
                    "vr.initial_mode {initial_mode} is out of range (molecule has {} modes)",
                    model.modes.len()
                ),
            );
        }
        let variant = match raw.variant.as_deref() {
            None | Some("full4") => VrVariant::Full4,
            Some("reduced2") => VrVariant::Reduced2,
            Some("litinskaya") => VrVariant::Litinskaya,
            Some(other) => {
                return self.fail_key(
                    "vr",
                    "variant",
                    format!(
                        "vr.variant: unknown variant `{other}` (expected full4, \
                         reduced2, or litinskaya)"
                    ),
                )
            }
        };
        if has_vr_task && model.detuning().abs() > 1e-14 {
            return self.fail(
                self.section_line("cavity"),
                format!(
                    "task `vr` requires a resonant cavity (omega_c = omega_0); \
                     the configured cavity resolves to detuning {:e}",
                    model.detuning()
                ),
            );
        }
        Ok(VrParams {
            initial_mode,
            variant,
        })
    }

    fn resolve_sweep(
        &self,
        sweep: Option<RawSweep>,
        tasks: &[Task],
        model: &ModelParams,
    ) -> Result<Option<SweepParams>, CliError> {
        let Some(raw) = sweep else { return Ok(None) };
        let parameter = self.require(raw.parameter, "sweep", "parameter")?;
        let values = self.require(raw.values, "sweep", "values")?;
        if values.is_empty() {
            return self.fail_key("sweep", "values", "sweep.values must not be empty");
        }
        for &t in tasks {
            if !t.is_rate() {
                return self.fail(
                    self.section_line("sweep"),
                    format!(
                        "sweep cannot be combined with task `{}` (only the rate \
                         tasks rp, rec, vr, scatt sweep)",
                        t.name()
                    ),
                );
            }
        }
        if tasks.contains(&Task::Vr)
            && matches!(parameter.as_str(), "cavity.omega_c" | "cavity.detuning")
        {
            return self.fail_key(
                "sweep",
                "parameter",
                format!(
                    "sweep.parameter `{parameter}` would detune the cavity, but task \
                     `vr` requires exact resonance"
                ),
            );
        }
        for (j, &v) in values.iter().enumerate() {
            if let Err(msg) = apply_sweep(model, &parameter, v) {
                return self.fail_key("sweep", "values", format!("sweep.values[{j}]: {msg}"));
            }
        }
        Ok(Some(SweepParams { parameter, values }))
    }

    fn resolve_output(
        &self,
        output: Option<RawOutput>,
    ) -> Result<(PathBuf, OutputFormat), CliError> {
        let raw = output.unwrap_or(RawOutput {
            directory: None,
            format: None,
        });
        let dir = PathBuf::from(raw.directory.unwrap_or_else(|| "out".to_string()));
        let format = match raw.format.as_deref() {
            None | Some("csv") => OutputFormat::Csv,
            Some("json") => OutputFormat::Json,
            Some(other) => {
                return self.fail_key(
                    "output",
                    "format",
                    format!("output.format: unknown format `{other}` (expected csv or json)"),
                )
            }
        };
        Ok((dir, format))
    }
}

// ---------------------------------------------------------------------------
// Sweep application.
// ---------------------------------------------------------------------------

/// Keys a sweep may target, for diagnostics.
const SWEEP_KEYS: &str = "molecule.omega_0, molecule.modes.<i>.omega_nu, \
     molecule.modes.<i>.sqrt_s, molecule.modes.<i>.s, cavity.omega_c, \
     cavity.detuning, cavity.g_sqrt_n, cavity.n_molecules, cavity.kappa, \
     cavity.gamma_xi, cavity.gamma_mol";

/// Return a copy of `model` with the swept parameter set to `value`.
///
/// The error is a bare message; the caller anchors it to the config file.
pub fn apply_sweep(model: &ModelParams, parameter: &str, value: f64) -> Result<ModelParams, String> {
    let mut out = model.clone();
    let parts: Vec<&str> = parameter.split('.').collect();
    let positive = |key: &str| -> Result<f64, String> {
        if value.is_finite() && value > 0.0 {
            Ok(value)
        } else {
            Err(format!("{key} must be a positive finite number, got {value}"))
        }
    };
    let nonnegative = |key: &str| -> Result<f64, String> {
        if value.is_finite() && value >= 0.0 {
            Ok(value)
        } else {
            Err(format!("{key} must be a nonnegative finite number, got {value}"))
        }
    };
    match parts.as_slice() {
        ["molecule", "omega_0"] => out.omega0 = positive(parameter)?,
        ["molecule", "modes", idx, key] => {
            let i: usize = idx
                .parse()
                .map_err(|_| format!("bad mode index `{idx}` in sweep parameter `{parameter}`"))?;
            if i >= out.modes.len() {
                return Err(format!(
                    "sweep parameter `{parameter}` is out of range (molecule has {} modes)",
                    out.modes.len()
                ));
            }
            match *key {
                "omega_nu" => out.modes[i].omega_nu = positive(parameter)?,
                "sqrt_s" => {
                    let r = nonnegative(parameter)?;
                    out.modes[i].s = r * r;
                }
                "s" => out.modes[i].s = nonnegative(parameter)?,
                _ => {
                    return Err(format!(
                        "unknown sweep parameter `{parameter}` (expected one of {SWEEP_KEYS})"
                    ))
                }
            }
        }
        ["cavity", "omega_c"] => match out.cavity {
            CavityChoice::OmegaC(_) => out.cavity = CavityChoice::OmegaC(positive(parameter)?),
            _ => {
                return Err(
                    "sweep parameter `cavity.omega_c` does not match the configured \
                     cavity placement key"
                        .to_string(),
                )
            }
        },
        ["cavity", "detuning"] => match out.cavity {
            CavityChoice::Detuning(_) => {
                if !value.is_finite() {
                    return Err(format!("cavity.detuning must be finite, got {value}"));
                }
                out.cavity = CavityChoice::Detuning(value);
            }
            _ => {
                return Err(
                    "sweep parameter `cavity.detuning` does not match the configured \
                     cavity placement key"
                        .to_string(),
                )
            }
        },
        ["cavity", "g_sqrt_n"] => out.g_sqrt_n = nonnegative(parameter)?,
        ["cavity", "n_molecules"] => {
            if !value.is_finite() || value < 1.0 || value.fract() != 0.0 {
                return Err(format!(
                    "cavity.n_molecules must be a positive integer, got {value}"
                ));
            }
            out.n_molecules = value as u64;
        }
        ["cavity", "kappa"] => out.kappa = positive(parameter)?,
        ["cavity", "gamma_xi"] => out.gamma_xi = positive(parameter)?,
        ["cavity", "gamma_mol"] => out.gamma_mol = positive(parameter)?,
        _ => {
            return Err(format!(
                "unknown sweep parameter `{parameter}` (expected one of {SWEEP_KEYS})"
            ))
        }
    }
    Ok(out)
}
