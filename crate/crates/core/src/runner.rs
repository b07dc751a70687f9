//! Configuration, command orchestration, file emission and plot scripts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collision::{apply_collision, build_collision_kernel_with, GammaMode, LightPacket, TOL_KERNEL};
use crate::diagnostics::{fringe_visibility, kinetic_energy, momentum, Stencil};
use crate::error::{Error, Result};
use crate::evolution::{evolve_with, run_scenario, CollisionSchedule, QuadratureOptions, Scenario, Snapshot, TimeSpec};
use crate::fmt_num;
use crate::oracle::{convergence_study, default_taus, OracleConfig, TOL_ORACLE_NORM};
use crate::scattering::{build_amplitude_table_with, MomentumGrid, PotentialSpec};
use crate::state::{heavy_wavefunction, position_density, pure_density, DensityMatrix, GridSpec, HeavyStateSpec};

/// Accumulated trace/Hermiticity drift allowed over a whole run.
pub const TOL_RUN_DRIFT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub nodes: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { half_width: 0.1, nodes: 201 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub final_time: f64,
    pub steps: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { final_time: 1.92e-2, steps: 2401 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeavySection {
    pub x0: f64,
    pub p_h: f64,
    pub sigma_h: f64,
    pub mass: f64,
}

impl Default for HeavySection {
    fn default() -> Self {
        Self { x0: 0.05, p_h: 340.0, sigma_h: 0.01, mass: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    /// One of `delta`, `barrier`, `gaussian`, `tabulated`.
    pub kind: String,
    pub alpha: f64,
    pub a: Option<f64>,
    pub sigma_v: Option<f64>,
    pub samples: Option<Vec<[f64; 2]>>,
    pub support: Option<f64>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self { kind: "delta".into(), alpha: 1000.0, a: None, sigma_v: None, samples: None, support: None }
    }
}

impl PotentialSection {
    pub fn to_spec(&self) -> Result<PotentialSpec> {
        let need = |field: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::Config(format!("potential.kind = \"{}\" requires potential.{field}", self.kind)))
        };
        let potential = match self.kind.as_str() {
            "delta" => PotentialSpec::Delta { alpha: self.alpha },
            "barrier" => PotentialSpec::Barrier { alpha: self.alpha, a: need("a", self.a)? },
            "gaussian" => PotentialSpec::Gaussian { alpha: self.alpha, sigma_v: need("sigma_v", self.sigma_v)? },
            "tabulated" => {
                let samples = self.samples.as_ref().ok_or_else(|| {
                    Error::Config("potential.kind = \"tabulated\" requires potential.samples".into())
                })?;
                PotentialSpec::tabulated(samples.iter().map(|s| (s[0], s[1])).collect(), self.support)
                    .map_err(|e| Error::Config(format!("potential.samples: {e}")))?
            }
            other => {
                return Err(Error::Config(format!(
                    "potential.kind = \"{other}\" is not one of delta, barrier, gaussian, tabulated"
                )))
            }
        };
        potential.validate().map_err(|e| Error::Config(format!("potential: {e}")))?;
        Ok(potential)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacketSection {
    pub x_l: f64,
    pub sigma: f64,
    pub p: f64,
}

impl Default for PacketSection {
    fn default() -> Self {
        Self { x_l: 0.2, sigma: 0.02, p: 250.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub collisions: usize,
    pub interval_steps: usize,
    pub rescale: bool,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { collisions: 1, interval_steps: 4, rescale: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSection {
    pub momentum_points: usize,
    pub bvp_points: usize,
    pub neglect_gamma: bool,
    /// `second` or `eighth`, used for momentum and energy in the time series.
    pub stencil: String,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self { momentum_points: 2048, bvp_points: 4096, neglect_gamma: false, stencil: "second".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub snapshots: Vec<usize>,
    pub visibility_window: [f64; 2],
    pub emit_plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { snapshots: Vec::new(), visibility_window: [-0.02, 0.02], emit_plots: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    /// Strengths for the antidiagonal overlay written by the kernel command.
    pub overlay_alphas: Vec<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self { overlay_alphas: vec![250.0, 500.0, 1000.0, 2000.0, 4000.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ScanSection {
    /// Strengths for the visibility-at-t* scan run by the scenario command.
    pub alphas: Vec<f64>,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub alpha: f64,
    pub taus: Vec<f64>,
    pub x_l: f64,
    pub sigma: Option<f64>,
    pub p: Option<f64>,
    pub x_window: Option<f64>,
    pub n_x: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { alpha: 1000.0, taus: default_taus(), x_l: 0.0, sigma: None, p: None, x_window: None, n_x: 1 << 15 }
    }
}

/// The whole run configuration; omitted fields take the reference values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    pub heavy: HeavySection,
    pub potential: PotentialSection,
    pub packet: PacketSection,
    pub schedule: ScheduleSection,
    pub quadrature: QuadratureSection,
    pub output: OutputSection,
    pub kernel: KernelSection,
    pub scan: ScanSection,
    pub oracle: OracleSection,
}

/// Validated domain objects built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: Scenario,
    pub stencil: Stencil,
    pub oracle: OracleConfig,
}

/// Parses a TOML document. Unknown keys are errors; omitted keys take defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.resolve()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    pub fn inputs_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let cfg = |e: Error| Error::Config(e.to_string());
        let grid = GridSpec::new(self.grid.half_width, self.grid.nodes)
            .map_err(|e| Error::Config(format!("grid.nodes / grid.half_width: {e}")))?;
        let time = TimeSpec::new(self.time.final_time, self.time.steps).map_err(cfg)?;
        let h = &self.heavy;
        let heavy = HeavyStateSpec::new(h.x0, h.p_h, h.sigma_h, h.mass).map_err(cfg)?;
        heavy.fits(&grid).map_err(|e| {
            Error::Config(format!("heavy.sigma_h / heavy.x0 versus grid.half_width: {e}"))
        })?;
        let t_star = heavy.overlap_time();
        if t_star > time.final_time {
            return Err(Error::Config(format!(
                "heavy state overlap time X0 M / p_H = {t_star} exceeds time.final_time = {}",
                time.final_time
            )));
        }
        let potential = self.potential.to_spec()?;
        let packet = LightPacket::new(self.packet.x_l, self.packet.sigma, self.packet.p).map_err(cfg)?;
        let q = &self.quadrature;
        if q.momentum_points < 64 || !q.momentum_points.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "quadrature.momentum_points must be even and >= 64, got {}",
                q.momentum_points
            )));
        }
        let kgrid = MomentumGrid::for_packet(packet.p, packet.sigma, q.momentum_points).map_err(cfg)?;
        let outside = packet.weight_outside(kgrid.min(), kgrid.max());
        if outside > 1e-12 {
            return Err(Error::Config(format!(
                "packet weight {outside:.3e} lies outside the amplitude grid [{}, {}]",
                kgrid.min(),
                kgrid.max()
            )));
        }
        if q.bvp_points < 64 {
            return Err(Error::Config(format!("quadrature.bvp_points must be >= 64, got {}", q.bvp_points)));
        }
        let stencil = match q.stencil.as_str() {
            "second" => Stencil::Second,
            "eighth" => Stencil::Eighth,
            other => return Err(Error::Config(format!("quadrature.stencil = \"{other}\" is not second or eighth"))),
        };
        let schedule = CollisionSchedule::new(self.schedule.collisions, self.schedule.interval_steps, self.schedule.rescale)
            .map_err(cfg)?;
        let [lo, hi] = self.output.visibility_window;
        if !(lo < hi) || lo < -grid.half_width || hi > grid.half_width {
            return Err(Error::Config(format!(
                "output.visibility_window [{lo}, {hi}] must lie inside grid.half_width = {}",
                grid.half_width
            )));
        }
        if let Some(s) = self.output.snapshots.iter().find(|s| **s > time.steps) {
            return Err(Error::Config(format!("output.snapshots entry {s} exceeds time.steps = {}", time.steps)));
        }

        let o = &self.oracle;
        let oracle_packet = LightPacket::new(o.x_l, o.sigma.unwrap_or(packet.sigma), o.p.unwrap_or(packet.p)).map_err(cfg)?;
        let minimum = OracleConfig::minimum_window(&o.taus, &oracle_packet);
        let x_window = o.x_window.unwrap_or_else(|| minimum.max(1.0));
        if x_window < minimum {
            return Err(Error::Config(format!(
                "oracle.x_window = {x_window} is too small for the packet trajectory; minimum is {minimum:.6}"
            )));
        }
        let oracle = OracleConfig { alpha: o.alpha, taus: o.taus.clone(), packet: oracle_packet, x_window, n_x: o.n_x };
        oracle.validate().map_err(cfg)?;

        Ok(Resolved {
            scenario: Scenario {
                heavy,
                grid,
                time,
                potential,
                packet,
                schedule,
                quadrature: QuadratureOptions {
                    momentum_points: q.momentum_points,
                    bvp_points: q.bvp_points,
                    gamma: if q.neglect_gamma { GammaMode::Neglect } else { GammaMode::Exact },
                },
                snapshots: self.output.snapshots.clone(),
            },
            stencil,
            oracle,
        })
    }
}

/// The command-line subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Amplitudes,
    Kernel,
    Evolve,
    Scenario,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Amplitudes => "amplitudes",
            Command::Kernel => "kernel",
            Command::Evolve => "evolve",
            Command::Scenario => "scenario",
            Command::Validate => "validate",
        }
    }
}

/// Outcome of one named invariant check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl InvariantCheck {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, passed: value <= limit }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    inputs_sha256: String,
    threads: usize,
    status: &'a str,
    files: Vec<String>,
    invariants: &'a [InvariantCheck],
    timings_seconds: BTreeMap<String, f64>,
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub command: Command,
    pub files: Vec<PathBuf>,
    pub invariants: Vec<InvariantCheck>,
    pub manifest: PathBuf,
}

/// A fully specified command execution.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub emit_plots: bool,
}

/// Runs a command, inside a dedicated thread pool when `threads` is set.
pub fn execute(inv: &Invocation) -> Result<RunSummary> {
    match inv.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_command(inv))
        }
        None => run_command(inv),
    }
}

struct Recorder {
    out: PathBuf,
    files: Vec<PathBuf>,
    checks: Vec<InvariantCheck>,
    timings: BTreeMap<String, f64>,
    clock: Instant,
}

impl Recorder {
    fn file(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.files.push(p.clone());
        p
    }

    fn lap(&mut self, label: &str) {
        self.timings.insert(label.into(), self.clock.elapsed().as_secs_f64());
        self.clock = Instant::now();
    }

    fn check(&mut self, name: &str, value: f64, limit: f64) {
        self.checks.push(InvariantCheck::at_most(name, value, limit));
    }
}

fn run_command(inv: &Invocation) -> Result<RunSummary> {
    let resolved = inv.config.resolve()?;
    fs::create_dir_all(&inv.out_dir)?;
    let started = Instant::now();
    let mut rec = Recorder {
        out: inv.out_dir.clone(),
        files: Vec::new(),
        checks: Vec::new(),
        timings: BTreeMap::new(),
        clock: Instant::now(),
    };
    let outcome = match inv.command {
        Command::Amplitudes => cmd_amplitudes(&resolved, &mut rec),
        Command::Kernel => cmd_kernel(&inv.config, &resolved, &mut rec),
        Command::Evolve => cmd_evolve(&inv.config, &resolved, &mut rec),
        Command::Scenario => cmd_scenario(&inv.config, &resolved, &mut rec),
        Command::Validate => cmd_validate(&resolved, &mut rec),
    };
    if outcome.is_ok() && (inv.emit_plots || inv.config.output.emit_plots) {
        let csvs: Vec<PathBuf> = rec.files.clone();
        let scripts = emit_plot_scripts(&inv.out_dir, &csvs)?;
        rec.files.extend(scripts);
    }
    rec.timings.insert("total".into(), started.elapsed().as_secs_f64());

    let failed: Vec<&InvariantCheck> = rec.checks.iter().filter(|c| !c.passed).collect();
    let status = match (&outcome, failed.is_empty()) {
        (Err(_), _) => "error",
        (Ok(()), false) => "invariant_violation",
        (Ok(()), true) => "ok",
    };
    let manifest_path = inv.out_dir.join(format!("manifest_{}.toml", inv.command.name()));
    let manifest = Manifest {
        command: inv.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        inputs_sha256: inv.config.inputs_hash(),
        threads: rayon::current_num_threads(),
        status,
        files: rec
            .files
            .iter()
            .map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
            .collect(),
        invariants: &rec.checks,
        timings_seconds: rec.timings.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Numerical(format!("manifest: {e}")))?;
    fs::write(&manifest_path, text)?;
    outcome?;
    if let Some(bad) = failed.first() {
        return Err(Error::Invariant(format!(
            "{}: {:.3e} exceeds {:.1e}",
            bad.name, bad.value, bad.limit
        )));
    }
    Ok(RunSummary { command: inv.command, files: rec.files, invariants: rec.checks, manifest: manifest_path })
}

fn cmd_amplitudes(res: &Resolved, rec: &mut Recorder) -> Result<()> {
    let s = &res.scenario;
    let grid = MomentumGrid::for_packet(s.packet.p, s.packet.sigma, s.quadrature.momentum_points)?;
    let table = build_amplitude_table_with(&s.potential, &grid, s.quadrature.bvp_points)?;
    rec.lap("amplitudes");
    rec.check("unitarity", table.max_unitarity_defect(), table.tolerance);
    table.write_csv(&rec.file("amplitudes.csv"))?;
    Ok(())
}

fn with_strength(pot: &PotentialSpec, alpha: f64) -> Result<PotentialSpec> {
    Ok(match pot {
        PotentialSpec::Delta { .. } => PotentialSpec::Delta { alpha },
        PotentialSpec::Barrier { a, .. } => PotentialSpec::Barrier { alpha, a: *a },
        PotentialSpec::Gaussian { sigma_v, .. } => PotentialSpec::Gaussian { alpha, sigma_v: *sigma_v },
        PotentialSpec::Tabulated { .. } => {
            let current = pot.strength();
            if current == 0.0 {
                return Err(Error::Config("cannot rescale a tabulated potential of zero strength".into()));
            }
            pot.scaled(alpha / current)
        }
    })
}

fn initial_state(s: &Scenario) -> Result<DensityMatrix> {
    pure_density(&heavy_wavefunction(&s.heavy, &s.grid)?, &s.grid)
}

fn cmd_kernel(cfg: &RunConfig, res: &Resolved, rec: &mut Recorder) -> Result<()> {
    let s = &res.scenario;
    let kgrid = MomentumGrid::for_packet(s.packet.p, s.packet.sigma, s.quadrature.momentum_points)?;
    let kernel_for = |pot: &PotentialSpec| {
        let table = build_amplitude_table_with(pot, &kgrid, s.quadrature.bvp_points)?;
        build_collision_kernel_with(&table, &s.packet, &s.grid, s.quadrature.gamma)
    };
    let kernel = kernel_for(&s.potential)?;
    rec.lap("kernel");
    rec.check("kernel diagonal |I(X,X) - 1|", kernel.diagonal_defect(), TOL_KERNEL);
    rec.check("kernel modulus max|I| - 1", kernel.max_modulus() - 1.0, TOL_KERNEL);
    rec.check("kernel Hermitian symmetry", kernel.hermiticity_defect(), TOL_KERNEL);
    let rho = initial_state(s)?;
    let collided = apply_collision(&rho, &kernel)?;
    rec.check("trace after collision |Tr(I rho) - 1|", (collided.trace() - 1.0).abs(), 1e-12);
    kernel.write_csv(&rec.file("kernel.csv"))?;
    kernel.write_antidiagonal_csv(&rec.file("kernel_antidiag.csv"))?;

    if !cfg.kernel.overlay_alphas.is_empty() {
        let mut columns = Vec::new();
        for &alpha in &cfg.kernel.overlay_alphas {
            columns.push(kernel_for(&with_strength(&s.potential, alpha)?)?.antidiagonal());
        }
        let mut w = csv::Writer::from_path(rec.file("kernel_antidiag_overlay.csv"))?;
        let mut header = vec!["X".to_string()];
        header.extend(cfg.kernel.overlay_alphas.iter().map(|a| format!("alpha_{a}")));
        w.write_record(&header)?;
        for i in 0..columns[0].len() {
            let mut row = vec![fmt_num(columns[0][i].0)];
            row.extend(columns.iter().map(|c| fmt_num(c[i].1)));
            w.write_record(&row)?;
        }
        w.flush()?;
        rec.lap("overlay");
    }
    Ok(())
}

/// One line of `timeseries.csv`.
struct SeriesRow {
    step: usize,
    t: f64,
    trace: f64,
    herm: f64,
    momentum: f64,
    energy: f64,
    visibility: f64,
}

fn series_row(step: usize, t: f64, rho: &DensityMatrix, stencil: Stencil, window: (f64, f64)) -> SeriesRow {
    SeriesRow {
        step,
        t,
        trace: rho.trace(),
        herm: rho.hermiticity_defect(),
        momentum: momentum(rho, stencil),
        energy: kinetic_energy(rho, stencil),
        visibility: fringe_visibility(&position_density(rho), &rho.grid, window).unwrap_or(f64::NAN),
    }
}

fn write_series(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "t", "trace", "herm_defect", "momentum", "kinetic_energy", "visibility"])?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            fmt_num(r.t),
            fmt_num(r.trace),
            fmt_num(r.herm),
            fmt_num(r.momentum),
            fmt_num(r.energy),
            fmt_num(r.visibility),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_snapshots(snapshots: &[Snapshot], rec: &mut Recorder) -> Result<()> {
    for snap in snapshots {
        snap.rho.write_density_csv(&rec.file(&format!("density_t{}.csv", snap.step)))?;
        snap.rho.write_abs_csv(&rec.file(&format!("rho_abs_t{}.csv", snap.step)))?;
    }
    Ok(())
}

fn drift_checks(rows: &[SeriesRow], rec: &mut Recorder) {
    let t0 = rows.first().map(|r| r.trace).unwrap_or(1.0);
    let trace = rows.iter().map(|r| (r.trace - t0).abs()).fold(0.0, f64::max);
    let herm = rows.iter().map(|r| r.herm).fold(0.0, f64::max);
    rec.check("trace drift over run", trace, TOL_RUN_DRIFT);
    rec.check("Hermiticity defect over run", herm, TOL_RUN_DRIFT);
}

fn cmd_evolve(cfg: &RunConfig, res: &Resolved, rec: &mut Recorder) -> Result<()> {
    let s = &res.scenario;
    let window = (cfg.output.visibility_window[0], cfg.output.visibility_window[1]);
    let rho = initial_state(s)?;
    let mut wanted = vec![0, s.overlap_step(), s.time.steps];
    wanted.extend(s.snapshots.iter().copied());
    wanted.sort_unstable();
    wanted.dedup();
    let mut rows = Vec::with_capacity(s.time.steps + 1);
    let mut snapshots = Vec::new();
    evolve_with(&rho, &s.time, s.heavy.mass, &[], None, |step, t, state| {
        rows.push(series_row(step, t, state, res.stencil, window));
        if wanted.contains(&step) {
            snapshots.push(Snapshot {
                step,
                time: t,
                rho: state.clone(),
                trace: state.trace(),
                herm_defect: state.hermiticity_defect(),
            });
        }
        Ok(())
    })?;
    rec.lap("evolve");
    drift_checks(&rows, rec);
    write_snapshots(&snapshots, rec)?;
    write_series(&rec.file("timeseries.csv"), &rows)?;
    Ok(())
}

fn cmd_scenario(cfg: &RunConfig, res: &Resolved, rec: &mut Recorder) -> Result<()> {
    let s = &res.scenario;
    let window = (cfg.output.visibility_window[0], cfg.output.visibility_window[1]);
    let mut rows = Vec::with_capacity(s.time.steps + 1);
    let out = run_scenario(s, |step, t, rho| {
        rows.push(series_row(step, t, rho, res.stencil, window));
        Ok(())
    })?;
    rec.lap("scenario");
    rec.check("kernel diagonal |I(X,X) - 1|", out.kernel.diagonal_defect(), TOL_KERNEL);
    rec.check("kernel modulus max|I| - 1", out.kernel.max_modulus() - 1.0, TOL_KERNEL);
    rec.check("kernel Hermitian symmetry", out.kernel.hermiticity_defect(), TOL_KERNEL);
    rec.check("per-step trace drift", out.drift.max_step_trace_drift, crate::evolution::TOL_STEP_DRIFT);
    drift_checks(&rows, rec);
    write_snapshots(&out.snapshots, rec)?;
    write_series(&rec.file("timeseries.csv"), &rows)?;

    if !cfg.scan.alphas.is_empty() {
        let mut w = csv::Writer::from_path(rec.file("visibility_alpha.csv"))?;
        w.write_record(["alpha", "visibility"])?;
        for &alpha in &cfg.scan.alphas {
            let mut variant = s.clone();
            variant.potential = with_strength(&s.potential, alpha)?;
            variant.time = TimeSpec::new(s.time.time(s.overlap_step()).max(s.time.dt()), s.overlap_step().max(1))?;
            let run = run_scenario(&variant, |_, _, _| Ok(()))?;
            let v = fringe_visibility(&position_density(&run.final_state), &s.grid, window).unwrap_or(f64::NAN);
            w.write_record([fmt_num(alpha), fmt_num(v)])?;
        }
        w.flush()?;
        rec.lap("visibility scan");
    }
    Ok(())
}

fn cmd_validate(res: &Resolved, rec: &mut Recorder) -> Result<()> {
    let report = convergence_study(&res.oracle)?;
    rec.lap("oracle");
    let norm = report.points.iter().map(|p| p.norm_defect).fold(0.0, f64::max);
    rec.check("oracle norm defect", norm, TOL_ORACLE_NORM);
    rec.check("oracle log-log slope", report.slope, -0.2);
    report.write_csv(&rec.file("oracle_convergence.csv"))?;
    Ok(())
}

/// Writes gnuplot scripts that render the emitted CSVs; they only read files.
pub fn emit_plot_scripts(out_dir: &Path, csv_files: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut names = Vec::new();
    for path in csv_files.iter().filter(|p| p.extension().is_some_and(|e| e == "csv")) {
        if !path.exists() {
            return Err(Error::Invariant(format!("plot script references missing CSV {}", path.display())));
        }
        names.push(path.file_name().unwrap().to_string_lossy().into_owned());
    }
    let has = |n: &str| names.iter().any(|x| x == n);
    let with_prefix = |p: &str| {
        let mut v: Vec<&String> = names.iter().filter(|x| x.starts_with(p)).collect();
        v.sort_by_key(|x| step_of(x));
        v
    };
    let mut scripts: Vec<(String, String)> = Vec::new();
    let head = "set datafile separator ','\nset key autotitle columnhead\n";

    if has("amplitudes.csv") {
        scripts.push((
            "plot_amplitudes.gp".into(),
            format!("{head}set terminal pngcairo size 900,600\nset output 'amplitudes.png'\nset xlabel 'k'\nset ylabel '|r_k|^2'\nplot 'amplitudes.csv' using 1:6 with lines title '|r|^2'\n"),
        ));
    }
    if has("kernel_antidiag.csv") {
        let mut body = format!("{head}set terminal pngcairo size 900,600\nset output 'kernel_antidiag.png'\nset xlabel 'X'\nset ylabel '|I(X,-X)|'\n");
        if has("kernel_antidiag_overlay.csv") {
            body.push_str("stats 'kernel_antidiag_overlay.csv' skip 1 nooutput\nplot for [c=2:STATS_columns] 'kernel_antidiag_overlay.csv' using 1:c with lines\n");
        } else {
            body.push_str("plot 'kernel_antidiag.csv' using 1:2 with lines\n");
        }
        scripts.push(("plot_kernel_antidiag.gp".into(), body));
    }
    let densities = with_prefix("density_t");
    if !densities.is_empty() {
        let plots: Vec<String> = densities
            .iter()
            .map(|f| format!("'{f}' using 1:2 with lines title 'step {}'", step_of(f)))
            .collect();
        scripts.push((
            "plot_density.gp".into(),
            format!("{head}set terminal pngcairo size 900,600\nset output 'density.png'\nset xlabel 'X'\nset ylabel 'rho(X,X)'\nplot {}\n", plots.join(", \\\n     ")),
        ));
    }
    let heatmaps = with_prefix("rho_abs_t");
    if !heatmaps.is_empty() {
        let mut body = format!("{head}set terminal pngcairo size 700,600\nset view map\nset xlabel 'X'\nset ylabel \"X'\"\n");
        for f in heatmaps {
            body.push_str(&format!(
                "set output 'rho_abs_t{0}.png'\nsplot '{f}' using 1:2:3 with image title 'step {0}'\n",
                step_of(f)
            ));
        }
        scripts.push(("plot_rho_abs.gp".into(), body));
    }
    if has("timeseries.csv") {
        scripts.push((
            "plot_timeseries.gp".into(),
            format!("{head}set terminal pngcairo size 900,900\nset output 'timeseries.png'\nset multiplot layout 3,1\nset xlabel 't'\nplot 'timeseries.csv' using 2:7 with lines title 'visibility'\nplot 'timeseries.csv' using 2:5 with lines title 'momentum'\nplot 'timeseries.csv' using 2:6 with lines title 'kinetic energy'\nunset multiplot\n"),
        ));
    }
    if has("visibility_alpha.csv") {
        scripts.push((
            "plot_visibility_alpha.gp".into(),
            format!("{head}set terminal pngcairo size 900,600\nset output 'visibility_alpha.png'\nset xlabel 'alpha'\nset ylabel 'visibility at t*'\nplot 'visibility_alpha.csv' using 1:2 with linespoints\n"),
        ));
    }
    if has("oracle_convergence.csv") {
        scripts.push((
            "plot_oracle.gp".into(),
            format!("{head}set terminal pngcairo size 900,600\nset output 'oracle_convergence.png'\nset logscale xy\nset xlabel 'tau'\nset ylabel 'L2 error'\nplot 'oracle_convergence.csv' using 1:2 with linespoints\n"),
        ));
    }

    let mut written = Vec::new();
    for (name, body) in scripts {
        let path = out_dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

fn step_of(name: &str) -> usize {
    name.trim_end_matches(".csv")
        .rsplit('t')
        .next()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}
