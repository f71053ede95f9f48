use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use bilinear_dd::design::{best_design, log_grid};
use bilinear_dd::io::write_atomic;
use bilinear_dd::solver::trace_csv;
use bilinear_dd::{
    delta_from_system, design_data_based, design_model_based, diagnose, run_seeded_experiment, sweep_eps1,
    verify_all, BilinearSystem, DataRecord, DesignConfig, DesignResult, Error, SolveStatus, SolverOptions,
    SweepTable, SweepTarget, Vector, VerificationReport, VerifyConfig, EXAMPLE_DELTA, EXAMPLE_T,
};
use serde::Serialize;
use serde_json::json;

use crate::args::{Cli, Command, DesignArgs, DesignMbArgs, ExperimentArgs, ReplayArgs, Sweep, SystemSource, VerifyArgs};
use crate::manifest::{self, schema, OutputFile, RunManifest, MANIFEST_SCHEMA};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

/// Default output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "BILINEAR_DD_OUT_DIR";

/// Gain entries of a design and of its stored closed loop must agree to this.
const GAIN_CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::ExperimentDiverged { .. } | Error::Overflow { .. } | Error::Internal(_)) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        Failure { code, error }
    }
}

type CmdResult = Result<u8, Failure>;

/// What a command wrote, for the manifest.
struct Run {
    code: u8,
    primary: PathBuf,
    inputs: Vec<PathBuf>,
    config: serde_json::Value,
    seed: Option<u64>,
    outputs: Vec<OutputFile>,
}

pub fn dispatch(cli: Cli, args: &[String]) -> CmdResult {
    let started_at = manifest::now();
    let (name, run) = match cli.command {
        Command::Experiment(a) => ("experiment", experiment(a)?),
        Command::Design(a) => ("design", design(a)?),
        Command::DesignMb(a) => ("design-mb", design_mb(a)?),
        Command::Verify(a) => ("verify", verify(a)?),
        Command::Replay(a) => return replay(a),
    };
    let m = RunManifest {
        schema_version: MANIFEST_SCHEMA.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        args: args.to_vec(),
        working_dir: std::env::current_dir().unwrap_or_default(),
        inputs: run.inputs,
        config: run.config,
        seed: run.seed,
        started_at,
        finished_at: manifest::now(),
        outputs: run.outputs,
        exit_code: run.code,
    };
    let path = manifest::manifest_path(&run.primary);
    write_json(&path, &m)?;
    println!("manifest: {}", path.display());
    Ok(run.code)
}

fn replay(a: ReplayArgs) -> CmdResult {
    let m = RunManifest::load(&a.manifest)?;
    if m.command == "replay" {
        return Err(anyhow!("manifest records a replay, refusing to recurse").into());
    }
    std::env::set_current_dir(&m.working_dir)
        .with_context(|| format!("entering recorded working directory {}", m.working_dir.display()))?;
    let mut argv = vec!["bilinear-dd".to_string()];
    argv.extend(m.args.iter().cloned());
    Ok(crate::run(argv))
}

fn out_path(out: Option<PathBuf>, default_name: &str) -> PathBuf {
    out.unwrap_or_else(|| match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(default_name),
        _ => PathBuf::from(default_name),
    })
}

fn load_system(src: &SystemSource) -> anyhow::Result<(BilinearSystem, Option<PathBuf>)> {
    match &src.system {
        Some(p) => Ok((read_json(p)?, Some(p.clone()))),
        None => Ok((BilinearSystem::example(), None)),
    }
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    bilinear_dd::io::read_json(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    bilinear_dd::io::write_json(path, value).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn output(path: &Path, schema: &str) -> OutputFile {
    OutputFile { path: path.to_path_buf(), schema: schema.into() }
}

fn grid(s: Sweep) -> anyhow::Result<Vec<f64>> {
    Ok(log_grid(s.lo, s.hi, s.points)?)
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal => EXIT_OK,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::NumericalTrouble | SolveStatus::IterationLimit => EXIT_NUMERICAL,
    }
}

fn fmt_row(m: &bilinear_dd::Mat) -> String {
    let v: Vec<String> = m.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", v.join(", "))
}

fn experiment(a: ExperimentArgs) -> Result<Run, Failure> {
    let (sys, sys_path) = load_system(&a.source)?;
    let t = a.t.map(|t| t as usize).unwrap_or(EXAMPLE_T);
    let x0 = a.x0.clone().map(Vector::from_vec);
    if let Some(x) = &x0 {
        if x.len() != sys.n() {
            return Err(anyhow!("--x0 has {} entries, the system has {} states", x.len(), sys.n()).into());
        }
    }
    let record = run_seeded_experiment(&sys, t, a.seed, x0).map_err(anyhow::Error::from)?;
    let diag = diagnose(&record);
    let out = out_path(a.out, "record.json");
    let diag_path = manifest::sibling(&out, "diagnostics.json");
    write_json(&out, &record)?;
    write_json(&diag_path, &diag)?;
    println!(
        "record: {} (T = {t}, n = {}), rank X0 = {}, cond X0 = {:.3e}",
        out.display(),
        record.n(),
        diag.rank_x0,
        diag.cond_x0
    );
    if diag.has_warning() {
        eprintln!("warning: X0 is rank deficient or ill conditioned; designs from this record may fail");
    }
    Ok(Run {
        code: EXIT_OK,
        primary: out.clone(),
        inputs: sys_path.into_iter().collect(),
        config: json!({ "example": a.source.example, "T": t, "x0": a.x0 }),
        seed: Some(a.seed),
        outputs: vec![output(&out, schema::DATA_RECORD), output(&diag_path, schema::DIAGNOSTICS)],
    })
}

fn design(a: DesignArgs) -> Result<Run, Failure> {
    let data: DataRecord = read_json(&a.data)?;
    let mut cfg = DesignConfig::new(a.delta, a.eps1.eps1.unwrap_or(1.0)).with_mu(a.mu);
    cfg.solver.trace = a.trace.is_some();
    let out = out_path(a.out, "design.json");
    let inputs = vec![a.data.clone()];
    if let Some(s) = a.eps1.sweep {
        cfg = cfg.with_grid(grid(s)?);
        let table = sweep_eps1(SweepTarget::Data(&data), &cfg).map_err(anyhow::Error::from)?;
        return Ok(write_sweep(&out, &table, inputs, &cfg)?);
    }
    let result = design_data_based(&data, &cfg).map_err(anyhow::Error::from)?;
    let mut outputs = vec![output(&out, schema::DESIGN)];
    write_json(&out, &result)?;
    if let Some(trace) = &a.trace {
        write_text(trace, &trace_csv(&result.trace))?;
        outputs.push(output(trace, schema::TRACE_CSV));
    }
    let code = report_single(&result, &out);
    let mut config = serde_json::to_value(&cfg).map_err(anyhow::Error::from)?;
    // the grid is only used by sweeps
    config.as_object_mut().map(|o| o.remove("grid"));
    Ok(Run { code, primary: out, inputs, config, seed: None, outputs })
}

fn design_mb(a: DesignMbArgs) -> Result<Run, Failure> {
    let (sys, sys_path) = load_system(&a.source)?;
    let out = out_path(a.out, "design-mb.json");
    let mut inputs: Vec<PathBuf> = sys_path.into_iter().collect();
    let opts = SolverOptions::default();
    if let Some(s) = a.eps1.sweep {
        let data: Option<DataRecord> = a.data.as_deref().map(read_json).transpose()?;
        inputs.extend(a.data.clone());
        let delta = a.delta.unwrap_or(EXAMPLE_DELTA);
        let cfg = DesignConfig::new(delta, 1.0).with_grid(grid(s)?);
        let target = match &data {
            Some(d) => SweepTarget::Both { data: d, sys: &sys },
            None => SweepTarget::Model(&sys),
        };
        let table = sweep_eps1(target, &cfg).map_err(anyhow::Error::from)?;
        return Ok(write_sweep(&out, &table, inputs, &cfg)?);
    }
    let eps1 = a.eps1.eps1.expect("clap enforces eps1 or sweep");
    let result = design_model_based(&sys, eps1, &opts).map_err(anyhow::Error::from)?;
    write_json(&out, &result)?;
    let code = report_single(&result, &out);
    Ok(Run {
        code,
        primary: out.clone(),
        inputs,
        config: json!({ "example": a.source.example, "eps1": eps1, "solver": opts }),
        seed: None,
        outputs: vec![output(&out, schema::DESIGN)],
    })
}

fn report_single(result: &DesignResult, out: &Path) -> u8 {
    match result.status {
        SolveStatus::Optimal => {
            println!(
                "{} design at eps1 = {}: K = {}, det P = {:.6}",
                result.provenance,
                result.eps1,
                fmt_row(result.k.as_ref().unwrap()),
                result.det_p().unwrap()
            );
            println!("design: {}", out.display());
        }
        SolveStatus::Infeasible => eprintln!(
            "infeasible at eps1 = {}; the inequality has no solution for this multiplier. \
             Try --sweep LO:HI:POINTS (for example --sweep 1e-3:1e2:50) to search over eps1",
            result.eps1
        ),
        s => eprintln!(
            "solver stopped with status {s} at eps1 = {}: {}",
            result.eps1,
            result.solve.message.as_deref().unwrap_or("no further detail")
        ),
    }
    status_code(result.status)
}

/// Writes the table as JSON and CSV and the best design, if any.
fn write_sweep(out: &Path, table: &SweepTable, inputs: Vec<PathBuf>, cfg: &DesignConfig) -> anyhow::Result<Run> {
    let csv = manifest::sibling(out, "csv");
    write_json(out, table)?;
    write_text(&csv, &table.to_csv())?;
    let mut outputs = vec![output(out, schema::SWEEP_JSON), output(&csv, schema::SWEEP_CSV)];
    for p in table.pipelines() {
        println!("{p}: {} of {} grid points feasible", table.feasible(p).count(), table.len());
    }
    println!("sweep: {} and {}", out.display(), csv.display());
    let code = match best_design(table) {
        Ok(best) => {
            let path = manifest::sibling(out, "best.json");
            write_json(&path, &best)?;
            outputs.push(output(&path, schema::DESIGN));
            println!(
                "best {} design: eps1 = {}, K = {}, det P = {:.6} -> {}",
                best.provenance,
                best.eps1,
                fmt_row(best.k.as_ref().unwrap()),
                best.det_p().unwrap(),
                path.display()
            );
            EXIT_OK
        }
        Err(_) => {
            eprintln!("no feasible design on the grid; widen the range or refine it");
            EXIT_INFEASIBLE
        }
    };
    Ok(Run { code, primary: out.to_path_buf(), inputs, config: serde_json::to_value(cfg)?, seed: None, outputs })
}

#[derive(Serialize)]
struct CheckLine {
    name: String,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct VerifyOutput {
    passed: bool,
    checks: Vec<CheckLine>,
    report: Option<VerificationReport>,
}

fn verify(a: VerifyArgs) -> Result<Run, Failure> {
    let result: DesignResult = read_json(&a.design)?;
    let (sys, sys_path) = load_system(&a.source)?;
    let mut inputs = vec![a.design.clone()];
    inputs.extend(sys_path);
    if !result.is_optimal() {
        return Err(anyhow!("design status is {}; only optimal designs can be verified", result.status).into());
    }
    let delta = a.delta.or(result.delta).unwrap_or_else(|| delta_from_system(&sys));
    let cfg = VerifyConfig {
        samples: a.samples as usize,
        num_d: a.num_d as usize,
        basin_starts: a.starts as usize,
        horizon: a.horizon as usize,
        seed: a.seed,
        ..VerifyConfig::default()
    };
    let out = out_path(a.out, "verification.json");

    let mut checks = vec![gain_consistency(&result)];
    let report = verify_all(&sys, &result, delta, &cfg).map_err(anyhow::Error::from)?;
    checks.extend(report.checks().into_iter().map(|(n, p, d)| CheckLine { name: n.into(), passed: p, detail: d }));
    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    write_json(&out, &VerifyOutput { passed, checks, report: Some(report) })?;
    println!("report: {}", out.display());
    Ok(Run {
        code: if passed { EXIT_OK } else { EXIT_VERIFY },
        primary: out.clone(),
        inputs,
        config: json!({ "example": a.source.example, "delta": delta, "verify": cfg }),
        seed: Some(a.seed),
        outputs: vec![output(&out, schema::VERIFICATION)],
    })
}

/// The gain in the file must match the one the closed loop was built with.
fn gain_consistency(result: &DesignResult) -> CheckLine {
    let (passed, detail) = match (&result.k, &result.closed_loop) {
        (Some(k), Some(cl)) if k.shape() == cl.kc.shape() => {
            let diff = (k - &cl.kc).amax() / cl.kc.amax().max(1.0);
            (diff <= GAIN_CONSISTENCY_TOL, format!("relative difference between K and stored closed loop {diff:.2e}"))
        }
        _ => (false, "design lacks K or closed-loop matrices of matching size".to_string()),
    };
    CheckLine { name: "gain-consistency".into(), passed, detail }
}
