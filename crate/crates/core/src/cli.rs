//! Command-line front end. Every run writes its artifacts and a
//! `manifest.json` under `<out>/<hash8>-<subcommand>/`, where `hash8` is
//! the prefix of the normalized config hash. The equilibrium is cached per
//! config hash in `$MTDC_CACHE_DIR` when that variable is set.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::config::SystemConfig;
use crate::dynamics::{self, DynamicsError, ModelKind, SimOptions};
use crate::modal::{self, ModalError};
use crate::network;
use crate::region::{self, RegionError, RegionGrid, RegionMethod};
use crate::study::{self, Study, StudyError};

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

/// Environment variable naming the equilibrium cache directory.
pub const CACHE_ENV: &str = "MTDC_CACHE_DIR";

/// W/V per MW/kV.
const MW_PER_KV: f64 = 1e3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("report: {0}")]
    Report(String),
}

impl From<RegionError> for CliError {
    fn from(e: RegionError) -> Self {
        CliError::Study(StudyError::Region(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_CONFIG,
            CliError::Io(_) | CliError::Report(_) => EXIT_OTHER,
            CliError::Study(e) => match e {
                StudyError::Config(_) | StudyError::Case(_) | StudyError::Network(_) => EXIT_CONFIG,
                StudyError::Dynamics(
                    DynamicsError::NoConvergence { .. }
                    | DynamicsError::StepUnderflow { .. }
                    | DynamicsError::Singular
                    | DynamicsError::OutOfBand { .. },
                ) => EXIT_CONVERGENCE,
                StudyError::Modal(ModalError::NoConvergence) => EXIT_CONVERGENCE,
                StudyError::Region(RegionError::InfeasibleExpansion { .. }) => EXIT_INFEASIBLE,
                StudyError::Region(RegionError::Modal(ModalError::NoConvergence)) => EXIT_CONVERGENCE,
                _ => EXIT_OTHER,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mtdc", version, about = "Droop-slope stability analysis of MMC-based dc grids")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config override `path=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Base directory for run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a config; print state and droop-axis counts.
    Validate(ConfigArg),
    /// Solve and report the operating point.
    Equilibrium(CaseArgs),
    /// Time-domain simulation of the config scenario.
    Sim(SimArgs),
    /// Global state-space matrices.
    Model {
        #[command(subcommand)]
        action: DumpAction,
    },
    /// Dc network matrices.
    Network {
        #[command(subcommand)]
        action: DumpAction,
    },
    /// Eigenvalues, gaps and exclusions.
    Eig(CaseArgs),
    /// First- and second-order eigenvalue sensitivities.
    Sens(CaseArgs),
    /// Supremum of one droop slope from the quadratic constraints.
    Sup(SupArgs),
    /// Stability region over two droop slopes.
    Region(RegionArgs),
    /// Eigenvalue loci along one slope with the exact supremum.
    Loci(LociArgs),
    /// Self- and cross-validation of one or two expansion-point cases.
    Xval(XvalArgs),
    /// Consolidated comparison tables from xval runs.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum DumpAction {
    /// Write matrices as CSV.
    Dump(CaseArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    config: PathBuf,
}

#[derive(Debug, Args)]
struct CaseArgs {
    config: PathBuf,
    /// Expansion-point case (droop slopes); P0 is compensated.
    #[arg(long)]
    at_case: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SimModel {
    Nonlinear,
    Linearized,
    Both,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, value_enum, default_value = "both")]
    model: SimModel,
    /// Horizon, s.
    #[arg(long, default_value_t = 3.0)]
    t_end: f64,
    /// Integration step, s.
    #[arg(long, default_value_t = dynamics::DEFAULT_STEP)]
    step: f64,
    #[arg(long, default_value_t = 20)]
    record_every: usize,
    /// Include the full state vector in the CSV.
    #[arg(long)]
    states: bool,
}

#[derive(Debug, Args)]
struct SupArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Droop axis, e.g. `k2`.
    #[arg(long)]
    axis: String,
    /// Initial deviations `k1=-10,k3=7` in MW/kV.
    #[arg(long)]
    deviations: Option<String>,
    /// Reported supremum offset when no constraint binds, MW/kV.
    #[arg(long, default_value_t = 1000.0)]
    cap: f64,
    /// Also compute the exact supremum by the loci oracle.
    #[arg(long)]
    exact: bool,
    /// Upper end of the loci bracket, MW/kV.
    #[arg(long, default_value_t = 400.0)]
    bracket_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Taylor,
    Loci,
    Both,
}

#[derive(Debug, Args)]
struct RegionArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Two droop axes, e.g. `k1,k2`.
    #[arg(long)]
    axes: String,
    /// Slope range `lo:hi` in MW/kV for both axes.
    #[arg(long, default_value = "0:120")]
    range: String,
    /// Range of the second axis when different.
    #[arg(long)]
    range2: Option<String>,
    /// Cells per axis.
    #[arg(long, default_value_t = 50)]
    res: usize,
    #[arg(long, value_enum, default_value = "both")]
    method: MethodArg,
}

#[derive(Debug, Args)]
struct LociArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long)]
    axis: String,
    /// Bracket `lo:hi` in MW/kV; defaults to the current slope up to 400.
    #[arg(long)]
    range: Option<String>,
    #[arg(long, default_value_t = 41)]
    points: usize,
}

#[derive(Debug, Args)]
struct XvalArgs {
    config: PathBuf,
    /// One or two case files, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    cases: Vec<PathBuf>,
    /// Also compute exact suprema by the loci oracle.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 1000.0)]
    cap: f64,
    #[arg(long, default_value_t = 400.0)]
    bracket_max: f64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directories of `xval` runs.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
}

/// Parses `argv` (program name first), runs, and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Artifacts of one run.
struct Run {
    dir: PathBuf,
    subcommand: String,
    config_path: Option<PathBuf>,
    config_hash: Option<String>,
    artifacts: Vec<String>,
    summary: Value,
    overrides: Vec<String>,
}

impl Run {
    fn new(out: &Path, subcommand: &str, config: Option<(&Path, &SystemConfig)>, overrides: &[String]) -> Result<Run, CliError> {
        let hash = config.map(|(_, c)| c.hash());
        let prefix = hash.as_deref().map_or("nocfg".to_string(), |h| h[..8].to_string());
        let dir = out.join(format!("{prefix}-{subcommand}"));
        std::fs::create_dir_all(&dir)?;
        Ok(Run {
            dir,
            subcommand: subcommand.to_string(),
            config_path: config.map(|(p, _)| p.to_path_buf()),
            config_hash: hash,
            artifacts: Vec::new(),
            summary: Value::Null,
            overrides: overrides.to_vec(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), contents)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
        self.write(name, &text)
    }

    fn finish(self) -> Result<(), CliError> {
        let manifest = json!({
            "subcommand": self.subcommand,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config_path.map(|p| p.display().to_string()),
            "config_hash": self.config_hash,
            "overrides": self.overrides,
            "artifacts": self.artifacts,
            "summary": self.summary,
        });
        let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
        std::fs::write(self.dir.join("manifest.json"), text)?;
        println!("run directory: {}", self.dir.display());
        Ok(())
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate(a) => validate(cli, a),
        Command::Equilibrium(a) => equilibrium(cli, a),
        Command::Sim(a) => sim(cli, a),
        Command::Model { action: DumpAction::Dump(a) } => model_dump(cli, a),
        Command::Network { action: DumpAction::Dump(a) } => network_dump(cli, a),
        Command::Eig(a) => eig(cli, a),
        Command::Sens(a) => sens(cli, a),
        Command::Sup(a) => sup(cli, a),
        Command::Region(a) => region_cmd(cli, a),
        Command::Loci(a) => loci(cli, a),
        Command::Xval(a) => xval(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

fn load(cli: &Cli, path: &Path) -> Result<SystemConfig, CliError> {
    Ok(study::load_config(path, &cli.set)?)
}

fn cache_file(config: &SystemConfig) -> Option<PathBuf> {
    let dir = std::env::var_os(CACHE_ENV)?;
    Some(PathBuf::from(dir).join(config.hash()).join("equilibrium.json"))
}

/// Equilibrium from the cache when present, else solved and stored. States
/// are stored as IEEE bit patterns so reuse is exact.
fn cached_study(config: &SystemConfig) -> Result<Study, CliError> {
    let file = cache_file(config);
    if let Some(f) = &file {
        if let Ok(text) = std::fs::read_to_string(f) {
            let bits: Option<Vec<f64>> = serde_json::from_str::<Value>(&text)
                .ok()
                .and_then(|v| v.get("x_bits").cloned())
                .and_then(|v| serde_json::from_value::<Vec<String>>(v).ok())
                .and_then(|v| {
                    v.iter()
                        .map(|s| u64::from_str_radix(s, 16).ok().map(f64::from_bits))
                        .collect()
                });
            if let Some(x) = bits {
                return Ok(Study::from_state(config, &DVector::from_vec(x))?);
            }
        }
    }
    let study = Study::new(config, None)?;
    if let Some(f) = file {
        let bits: Vec<String> = study.op.x.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
        if let Some(parent) = f.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&f, serde_json::to_string(&json!({ "x_bits": bits })).expect("serializable"))?;
    }
    Ok(study)
}

fn study_for(cli: &Cli, args: &CaseArgs) -> Result<(SystemConfig, Study), CliError> {
    let config = load(cli, &args.config)?;
    let mut study = cached_study(&config)?;
    if let Some(case) = &args.at_case {
        study = study.with_case(&study::load_case(case)?)?;
    }
    Ok((config, study))
}

fn parse_range(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("range `{s}` must be lo:hi"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if hi <= lo {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn mwkv(v: &[f64]) -> Vec<f64> {
    v.iter().map(|k| k / MW_PER_KV).collect()
}

fn matrix_csv(m: &DMatrix<f64>, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.17e}", m[(r, c)]);
        }
        out.push('\n');
    }
    out
}

fn validate(cli: &Cli, a: &ConfigArg) -> Result<(), CliError> {
    let config = load(cli, &a.config)?;
    let axes: Vec<String> = config
        .droop_axes()
        .iter()
        .map(|&u| study::axis_name(&config.nodes[u]))
        .collect();
    println!("states: {}, droop axes: {}", config.state_dimension(), axes.len());
    println!("droop stations: {}", axes.join(", "));
    println!("config hash: {}", config.hash());
    let mut run = Run::new(&cli.out, "validate", Some((&a.config, &config)), &cli.set)?;
    run.write_json("config.normalized.json", &config.to_json())?;
    run.summary = json!({"states": config.state_dimension(), "droop_axes": axes});
    run.finish()
}

fn equilibrium(cli: &Cli, a: &CaseArgs) -> Result<(), CliError> {
    let (config, study) = study_for(cli, a)?;
    let v = study.v_eq();
    let mut csv = String::from("node,v_dc_kV,p_ref_MW,q_ref_Mvar\n");
    for (u, node) in config.nodes.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{node},{:.12e},{:.12e},{:.12e}",
            v[u] / 1e3,
            study.op.p_ref[u] / 1e6,
            study.op.q_ref[u] / 1e6
        );
    }
    println!(
        "equilibrium: residual {:.3e} after {} iterations ({:?})",
        study.op.residual_norm, study.op.iterations, study.op.method
    );
    let mut run = Run::new(&cli.out, "equilibrium", Some((&a.config, &config)), &cli.set)?;
    run.write("equilibrium.csv", &csv)?;
    let names = study.sys.state_names();
    let mut states = String::from("state,value\n");
    for (n, x) in names.iter().zip(study.op.x.iter()) {
        let _ = writeln!(states, "{n},{x:.17e}");
    }
    run.write("state.csv", &states)?;
    run.summary = json!({
        "residual": study.op.residual_norm,
        "iterations": study.op.iterations,
        "method": study.op.method,
        "case": study.case_name,
    });
    run.finish()
}

fn sim(cli: &Cli, a: &SimArgs) -> Result<(), CliError> {
    let (config, study) = study_for(cli, &a.case)?;
    let opts = SimOptions {
        t_end: a.t_end,
        step: a.step,
        record_every: a.record_every.max(1),
        ..SimOptions::default()
    };
    let kinds: &[ModelKind] = match a.model {
        SimModel::Nonlinear => &[ModelKind::Nonlinear],
        SimModel::Linearized => &[ModelKind::Linearized],
        SimModel::Both => &[ModelKind::Nonlinear, ModelKind::Linearized],
    };
    let mut run = Run::new(&cli.out, "sim", Some((&a.case.config, &config)), &cli.set)?;
    let mut trajectories = Vec::new();
    for &kind in kinds {
        let traj = dynamics::simulate(&study.sys, &study.op, &config.scenario, &opts, kind)
            .map_err(StudyError::from)?;
        let name = match kind {
            ModelKind::Nonlinear => "trajectory_nonlinear.csv",
            ModelKind::Linearized => "trajectory_linearized.csv",
        };
        run.write(name, &traj.to_csv(a.states))?;
        println!("{name}: {} samples, diverged: {}", traj.len(), traj.diverged);
        trajectories.push(traj);
    }
    let mut summary = json!({
        "events": config.scenario.len(),
        "diverged": trajectories.iter().map(|t| t.diverged).collect::<Vec<_>>(),
    });
    if let [nl, lin] = trajectories.as_slice() {
        let rms = trajectory_rms_difference(nl, lin);
        println!("relative RMS difference of dc voltage and power deviations: {rms:.4e}");
        summary["relative_rms_difference"] = json!(rms);
    }
    run.summary = summary;
    run.finish()
}

/// RMS of the difference of deviations from the initial sample, relative
/// to the RMS of the nonlinear deviation, over P and v_dc of every node.
pub fn trajectory_rms_difference(a: &dynamics::Trajectory, b: &dynamics::Trajectory) -> f64 {
    let cols = a.len().min(b.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for mats in [(&a.p, &b.p), (&a.v_dc, &b.v_dc)] {
        for r in 0..mats.0.nrows() {
            for c in 0..cols {
                let da = mats.0[(r, c)] - mats.0[(r, 0)];
                let db = mats.1[(r, c)] - mats.1[(r, 0)];
                num += (da - db).powi(2);
                den += da.powi(2);
            }
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

fn model_dump(cli: &Cli, a: &CaseArgs) -> Result<(), CliError> {
    let (config, study) = study_for(cli, a)?;
    let mut run = Run::new(&cli.out, "model-dump", Some((&a.config, &config)), &cli.set)?;
    let names = study.sys.state_names();
    run.write("a_ss.csv", &matrix_csv(&study.model.a_ss, Some(&names)))?;
    run.write("a0.csv", &matrix_csv(&study.model.a0, Some(&names)))?;
    for (axis, m) in study.axis_names().iter().zip(&study.model.m) {
        run.write(&format!("m_{axis}.csv"), &matrix_csv(m, Some(&names)))?;
    }
    run.write("states.csv", &(String::from("index,state\n") + &names.iter().enumerate().map(|(i, n)| format!("{i},{n}\n")).collect::<String>()))?;
    println!("A_ss: {}x{}, droop axes: {}", study.model.dim(), study.model.dim(), study.model.m.len());
    run.summary = json!({"dim": study.model.dim(), "axes": study.axis_names(), "slopes_MW_per_kV": mwkv(&study.slopes())});
    run.finish()
}

fn network_dump(cli: &Cli, a: &CaseArgs) -> Result<(), CliError> {
    let config = load(cli, &a.config)?;
    let inc = network::build_incidence(config.n_nodes(), &config.lines);
    let net = network::assemble_network(&inc, &config).map_err(StudyError::from)?;
    let mut run = Run::new(&cli.out, "network-dump", Some((&a.config, &config)), &cli.set)?;
    run.write("incidence.csv", &matrix_csv(&inc.j, Some(&config.nodes)))?;
    let names = net.state_names(&config.nodes);
    run.write("a3.csv", &matrix_csv(&net.a3, Some(&names)))?;
    run.write("b3.csv", &matrix_csv(&net.b3, Some(&config.nodes)))?;
    run.write("mass.csv", &matrix_csv(&net.mass, None))?;
    println!("network: {} nodes, {} lines, {} states", config.n_nodes(), config.n_lines(), net.dim());
    run.summary = json!({"nodes": config.n_nodes(), "lines": config.n_lines(), "mass_condition": network::mass_condition(&net.mass)});
    run.finish()
}

fn eig(cli: &Cli, a: &CaseArgs) -> Result<(), CliError> {
    let (config, study) = study_for(cli, a)?;
    let sol = study.eig()?;
    let names = study.sys.state_names();
    let excluded = sol.excluded();
    let mut csv = String::from("mode,re,im,freq_hz,damping_ratio,gap,condition,partner,excluded,dominant_state\n");
    for i in 0..sol.len() {
        let v = sol.values[i];
        let damping = if v.norm() > 0.0 { -v.re / v.norm() } else { 1.0 };
        let reason = excluded
            .iter()
            .find(|e| e.mode == i)
            .map_or("", |e| match e.reason {
                modal::ExclusionReason::Degenerate => "degenerate",
                modal::ExclusionReason::Defective => "defective",
            });
        // participation |w_ki z_ik|
        let dominant = (0..sol.len())
            .max_by(|&p, &q| {
                let f = |k: usize| (sol.right[(k, i)] * sol.left[(i, k)]).norm();
                f(p).total_cmp(&f(q))
            })
            .unwrap_or(0);
        let _ = writeln!(
            csv,
            "{i},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{},{reason},{}",
            v.re,
            v.im,
            v.im.abs() / (2.0 * std::f64::consts::PI),
            damping,
            sol.gaps[i],
            sol.condition[i],
            sol.partner[i],
            names[dominant]
        );
    }
    let abscissa = sol.spectral_abscissa();
    println!(
        "{} eigenvalues, spectral abscissa {abscissa:.6e} 1/s, {} excluded from sensitivity analysis",
        sol.len(),
        excluded.len()
    );
    let mut run = Run::new(&cli.out, "eig", Some((&a.config, &config)), &cli.set)?;
    run.write("eigenvalues.csv", &csv)?;
    run.summary = json!({
        "modes": sol.len(),
        "spectral_abscissa": abscissa,
        "stable": abscissa < 0.0,
        "norm2": sol.norm,
        "degeneracy_threshold": sol.degeneracy_threshold(),
        "excluded": excluded,
        "case": study.case_name,
    });
    run.finish()
}

fn sens(cli: &Cli, a: &CaseArgs) -> Result<(), CliError> {
    let (config, study) = study_for(cli, a)?;
    let sol = study.eig()?;
    let bundle = study.bundle(&sol);
    let axes = study.axis_names();
    let mut csv = String::from("mode,re,im,margin");
    for ax in &axes {
        let _ = write!(csv, ",d_{ax}_re,d_{ax}_im");
    }
    for j in 0..axes.len() {
        for l in j..axes.len() {
            let _ = write!(csv, ",d2_{}_{}_re", axes[j], axes[l]);
        }
    }
    csv.push('\n');
    for i in 0..bundle.values.len() {
        let v = bundle.values[i];
        let _ = write!(csv, "{i},{:.12e},{:.12e},{:.12e}", v.re, v.im, bundle.margins[i]);
        for j in 0..axes.len() {
            let d = bundle.first[(i, j)];
            let _ = write!(csv, ",{:.12e},{:.12e}", d.re, d.im);
        }
        for j in 0..axes.len() {
            for l in j..axes.len() {
                let _ = write!(csv, ",{:.12e}", bundle.second[i][(j, l)].re);
            }
        }
        csv.push('\n');
    }
    println!("sensitivities of {} modes to {} droop axes (per W/V)", bundle.values.len(), axes.len());
    let mut run = Run::new(&cli.out, "sens", Some((&a.config, &config)), &cli.set)?;
    run.write("sensitivities.csv", &csv)?;
    run.summary = json!({"axes": axes, "excluded": bundle.excluded, "case": study.case_name});
    run.finish()
}

fn parse_deviations(study: &Study, s: Option<&str>) -> Result<Vec<f64>, CliError> {
    let mut dev = vec![0.0; study.slopes().len()];
    if let Some(s) = s {
        for item in s.split(',').filter(|t| !t.trim().is_empty()) {
            let (name, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("deviation `{item}` must be axis=value")))?;
            let at = study.axis_index(name.trim())?;
            dev[at] = v
                .trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("deviation `{item}` is not a number")))?
                * MW_PER_KV;
        }
    }
    Ok(dev)
}

fn supremum_json(axes: &[String], r: &region::SupremumResult) -> Value {
    json!({
        "axis": axes[r.axis],
        "k_sup_MW_per_kV": r.k_sup / MW_PER_KV,
        "bounded": r.bounded,
        "binding_mode": r.binding_mode,
        "init_deviations_MW_per_kV": mwkv(&r.init_deviations),
    })
}

fn sup(cli: &Cli, a: &SupArgs) -> Result<(), CliError> {
    let (config, study) = study_for(cli, &a.case)?;
    let axis = study.axis_index(&a.axis)?;
    let dev = parse_deviations(&study, a.deviations.as_deref())?;
    let sol = study.eig()?;
    let set = region::build_constraints(&study.bundle(&sol), &study.slopes());
    let r = region::estimate_supremum(&set, axis, &dev, a.cap * MW_PER_KV)?;
    let axes = study.axis_names();
    let mut out = supremum_json(&axes, &r);
    if let Some(m) = r.binding_mode {
        out["binding_eigenvalue"] = json!([sol.values[m].re, sol.values[m].im]);
    }
    out["case"] = json!(study.case_name);
    out["constraints"] = json!(set.constraints.len());
    out["excluded_modes"] = json!(set.excluded.len());
    if a.exact {
        let k = study.slopes()[axis];
        let l = study.loci_supremum(axis, (k, a.bracket_max * MW_PER_KV), &region::LociOptions::default())?;
        out["exact_k_sup_MW_per_kV"] = json!(l.k_sup / MW_PER_KV);
        out["relative_gap"] = json!((r.k_sup - l.k_sup) / l.k_sup);
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    let mut run = Run::new(&cli.out, "sup", Some((&a.case.config, &config)), &cli.set)?;
    run.write_json("sup.json", &out)?;
    run.summary = out;
    run.finish()
}

fn region_cmd(cli: &Cli, a: &RegionArgs) -> Result<(), CliError> {
    let (config, study) = study_for(cli, &a.case)?;
    let (ni, nj) = a
        .axes
        .split_once(',')
        .ok_or_else(|| CliError::Usage("--axes expects two axes `ki,kj`".into()))?;
    let axes = (study.axis_index(ni.trim())?, study.axis_index(nj.trim())?);
    if axes.0 == axes.1 {
        return Err(CliError::Usage("--axes must name two different axes".into()));
    }
    let ri = parse_range(&a.range)?;
    let rj = a.range2.as_deref().map_or(Ok(ri), parse_range)?;
    let scale = |r: (f64, f64)| (r.0 * MW_PER_KV, r.1 * MW_PER_KV);
    let ranges = (scale(ri), scale(rj));
    let res = (a.res.max(1), a.res.max(1));
    let base = study.slopes();
    let names = (ni.trim(), nj.trim());
    let mut run = Run::new(&cli.out, "region", Some((&a.case.config, &config)), &cli.set)?;
    let mut grids: Vec<RegionGrid> = Vec::new();
    if matches!(a.method, MethodArg::Taylor | MethodArg::Both) {
        let set = study.constraints()?;
        grids.push(region::scan_region_taylor(&set, axes, ranges, res, &base));
    }
    if matches!(a.method, MethodArg::Loci | MethodArg::Both) {
        let build = |k: &[f64]| study.state_matrix(k);
        grids.push(region::scan_region_loci(build, axes, ranges, res, &base)?);
    }
    let mut summary = json!({"axes": [names.0, names.1], "resolution": a.res, "range_i": ri, "range_j": rj});
    for g in &grids {
        let to_mwkv = RegionGrid {
            range_i: ri,
            range_j: rj,
            ..g.clone()
        };
        let name = match g.method {
            RegionMethod::Taylor => "region_taylor.csv",
            RegionMethod::Loci => "region_loci.csv",
        };
        run.write(name, &to_mwkv.to_csv(names))?;
        let stable = g.stable.iter().filter(|s| **s).count();
        println!("{name}: {stable} of {} cells stable", g.stable.len());
    }
    if let [taylor, loci] = grids.as_slice() {
        let (agreement, adjacent, disagreements) = region::compare_grids(taylor, loci, 2);
        println!("agreement {:.2}% ({disagreements} cells differ, all near the loci boundary: {adjacent})", 100.0 * agreement);
        summary["agreement"] = json!(agreement);
        summary["disagreements"] = json!(disagreements);
        summary["disagreements_near_boundary"] = json!(adjacent);
    }
    run.write_json("region.json", &summary)?;
    run.summary = summary;
    run.finish()
}

fn loci(cli: &Cli, a: &LociArgs) -> Result<(), CliError> {
    let (config, study) = study_for(cli, &a.case)?;
    let axis = study.axis_index(&a.axis)?;
    let bracket = match &a.range {
        Some(r) => parse_range(r)?,
        None => (study.slopes()[axis] / MW_PER_KV, 400.0),
    };
    let opts = region::LociOptions {
        scan_points: a.points.max(2),
        ..Default::default()
    };
    let mut run = Run::new(&cli.out, "loci", Some((&a.case.config, &config)), &cli.set)?;
    let result = study.loci_supremum(axis, (bracket.0 * MW_PER_KV, bracket.1 * MW_PER_KV), &opts);
    let r = match result {
        Ok(r) => r,
        Err(e) => return Err(e.into()),
    };
    let mut csv = String::from("k_MW_per_kV,mode,re,im,max_re\n");
    for p in &r.table {
        for (i, v) in p.eigenvalues.iter().enumerate() {
            let _ = writeln!(csv, "{:.9e},{i},{:.12e},{:.12e},{:.12e}", p.k / MW_PER_KV, v.re, v.im, p.max_re);
        }
    }
    run.write("loci.csv", &csv)?;
    let out = json!({
        "axis": a.axis,
        "k_sup_MW_per_kV": r.k_sup / MW_PER_KV,
        "max_re_at_sup": r.f_at_sup,
        "evaluations": r.evaluations,
        "warnings": r.warnings,
        "case": study.case_name,
    });
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    run.write_json("loci.json", &out)?;
    run.summary = out;
    run.finish()
}

/// Self/cross validation data of one case, slopes in MW/kV.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CaseValidation {
    pub name: String,
    pub axes: Vec<String>,
    pub slopes: Vec<f64>,
    pub exact: Option<Vec<f64>>,
    pub self_estimate: Vec<f64>,
    pub cross: Option<CrossRow>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CrossRow {
    pub by: String,
    pub deviations: Vec<f64>,
    pub estimate: Vec<f64>,
}

/// Runs self- (and, for two cases, cross-) validation.
pub fn validate_cases(
    base: &Study,
    cases: &[study::CaseSpec],
    exact: bool,
    cap: f64,
    bracket_max: f64,
) -> Result<Vec<CaseValidation>, StudyError> {
    let studies: Vec<Study> = cases.iter().map(|c| base.with_case(c)).collect::<Result<_, _>>()?;
    let sets: Vec<region::ConstraintSet> = studies.iter().map(Study::constraints).collect::<Result<_, _>>()?;
    let estimates = |res: Vec<region::SupremumResult>| res.iter().map(|r| r.k_sup / MW_PER_KV).collect::<Vec<_>>();
    let mut out = Vec::new();
    for (i, st) in studies.iter().enumerate() {
        let self_estimate = estimates(region::self_validate(&sets[i], cap)?);
        let cross = if studies.len() == 2 {
            let other = 1 - i;
            let res = region::cross_validate(&sets[other], &st.slopes(), cap)?;
            Some(CrossRow {
                by: studies[other].case_name.clone(),
                deviations: mwkv(&st.slopes().iter().zip(&sets[other].expansion).map(|(a, b)| a - b).collect::<Vec<_>>()),
                estimate: estimates(res),
            })
        } else {
            None
        };
        let exact = if exact {
            let mut v = Vec::new();
            for axis in 0..st.slopes().len() {
                let k = st.slopes()[axis];
                let l = st.loci_supremum(axis, (k, bracket_max), &region::LociOptions::default())?;
                v.push(l.k_sup / MW_PER_KV);
            }
            Some(v)
        } else {
            None
        };
        out.push(CaseValidation {
            name: st.case_name.clone(),
            axes: st.axis_names(),
            slopes: mwkv(&st.slopes()),
            exact,
            self_estimate,
            cross,
        });
    }
    Ok(out)
}

fn xval(cli: &Cli, a: &XvalArgs) -> Result<(), CliError> {
    if a.cases.len() > 2 {
        return Err(CliError::Usage("--cases takes one or two case files".into()));
    }
    let config = load(cli, &a.config)?;
    let base = cached_study(&config)?;
    let cases: Vec<study::CaseSpec> = a.cases.iter().map(|p| study::load_case(p)).collect::<Result<_, _>>()?;
    let rows = validate_cases(&base, &cases, a.exact, a.cap * MW_PER_KV, a.bracket_max * MW_PER_KV)?;
    let mut run = Run::new(&cli.out, "xval", Some((&a.config, &config)), &cli.set)?;
    let doc = json!({ "cases": rows });
    run.write_json("xval.json", &doc)?;
    let table = render_report(&rows);
    print!("{table}");
    run.write("xval.txt", &table)?;
    run.summary = json!({"cases": rows.iter().map(|r| r.name.clone()).collect::<Vec<_>>()});
    run.finish()
}

/// Tables of exact, self-estimated and cross-estimated suprema per case.
pub fn render_report(rows: &[CaseValidation]) -> String {
    let mut out = String::new();
    for r in rows {
        let cell = |v: f64| format!("{v:>10.4}");
        let line = |label: &str, vals: &[f64]| {
            let cells: Vec<String> = vals.iter().map(|v| cell(*v)).collect();
            format!("{label:<28}{}\n", cells.join(""))
        };
        let _ = writeln!(out, "{}", r.name);
        let head: Vec<String> = r.axes.iter().map(|a| format!("{a:>10}")).collect();
        let _ = writeln!(out, "{:<28}{}", "", head.join(""));
        out.push_str(&line("initial value", &r.slopes));
        if let Some(e) = &r.exact {
            out.push_str(&line("exact supremum", e));
        }
        let _ = writeln!(out, "self-validation by {}'s inequalities", r.name);
        out.push_str(&line("initialized deviation", &vec![0.0; r.axes.len()]));
        out.push_str(&line("estimated supremum", &r.self_estimate));
        if let Some(c) = &r.cross {
            let _ = writeln!(out, "cross-validation by {}'s inequalities", c.by);
            out.push_str(&line("initialized deviation", &c.deviations));
            out.push_str(&line("estimated supremum", &c.estimate));
        }
        out.push('\n');
    }
    out
}

/// Gathers cases from xval run directories; all must share droop axes.
pub fn collect_runs(dirs: &[PathBuf]) -> Result<Vec<CaseValidation>, CliError> {
    let mut rows: Vec<CaseValidation> = Vec::new();
    for d in dirs {
        let file = d.join("xval.json");
        let text = std::fs::read_to_string(&file)
            .map_err(|e| CliError::Report(format!("missing run {}: {e}", file.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Report(format!("{}: {e}", file.display())))?;
        let cases: Vec<CaseValidation> = serde_json::from_value(v["cases"].clone())
            .map_err(|e| CliError::Report(format!("{}: {e}", file.display())))?;
        rows.extend(cases);
    }
    if let Some(first) = rows.first() {
        if let Some(bad) = rows.iter().find(|r| r.axes != first.axes) {
            return Err(CliError::Report(format!(
                "droop axes differ between cases `{}` ({}) and `{}` ({})",
                first.name,
                first.axes.join(","),
                bad.name,
                bad.axes.join(",")
            )));
        }
    } else {
        return Err(CliError::Report("no cases in the given runs".into()));
    }
    Ok(rows)
}

fn report(cli: &Cli, a: &ReportArgs) -> Result<(), CliError> {
    let rows = collect_runs(&a.runs)?;
    let table = render_report(&rows);
    print!("{table}");
    let mut csv = String::from("case,row,by");
    for ax in &rows[0].axes {
        let _ = write!(csv, ",{ax}");
    }
    csv.push('\n');
    let mut push = |case: &str, row: &str, by: &str, vals: &[f64]| {
        let _ = write!(csv, "{case},{row},{by}");
        for v in vals {
            let _ = write!(csv, ",{v:.9e}");
        }
        csv.push('\n');
    };
    for r in &rows {
        push(&r.name, "initial", "", &r.slopes);
        if let Some(e) = &r.exact {
            push(&r.name, "exact", "", e);
        }
        push(&r.name, "self", &r.name, &r.self_estimate);
        if let Some(c) = &r.cross {
            push(&r.name, "cross_deviation", &c.by, &c.deviations);
            push(&r.name, "cross", &c.by, &c.estimate);
        }
    }
    let mut run = Run::new(&cli.out, "report", None, &cli.set)?;
    run.write("report.txt", &table)?;
    run.write("report.csv", &csv)?;
    run.summary = json!({"cases": rows.iter().map(|r| r.name.clone()).collect::<Vec<_>>()});
    run.finish()
}
