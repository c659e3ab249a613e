//! `dcgrid` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 divergence or Newton
//! failure, 4 voltage containment violated, 5 certification failed.
//! Every flag can also be given through an environment variable with the
//! `DCGRID_` prefix (`DCGRID_CONFIG`, `DCGRID_STRATEGY`, ...).

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dcgrid::config::{RunConfig, StrategyConfig};
use dcgrid::equilibrium::{find_equilibrium, EquilibriumReport};
use dcgrid::io::{report_to_toml, write_gershgorin_csv, write_toml_report, write_trace_csv};
use dcgrid::simulator::{resolve_strategy, run_scenario, SummaryReport};
use dcgrid::stability::{
    apply_strategy, gershgorin_scan, timescale_requirement, worst_case_search, OffRowMode, SearchBox, SearchConfig,
    TimescaleReport, WorstCaseResult, ZEvaluator,
};
use dcgrid::{load_config, Error, GershgorinReport, Microgrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_CONTAINMENT: i32 = 4;
pub const EXIT_CERTIFY: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "dcgrid", version, about = "DC microgrid simulation and stability certification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured event script and write trace + summary.
    Simulate(CommonArgs),
    /// Worst-case search, Geršgorin scan and time-scale check.
    Certify(CommonArgs),
    /// Equilibrium and KKT residuals.
    Equilibrium(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Configuration file; repeat to layer overlays (later files win).
    #[arg(long = "config", env = "DCGRID_CONFIG", value_delimiter = ',', required = true)]
    pub config: Vec<PathBuf>,
    /// Catalogue strategy id (1-6), overriding the `[strategy]` section.
    #[arg(long, env = "DCGRID_STRATEGY")]
    pub strategy: Option<usize>,
    #[arg(long, env = "DCGRID_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Integration step [s].
    #[arg(long, env = "DCGRID_DT")]
    pub dt: Option<f64>,
    /// Search box `lo,hi` [V].
    #[arg(long = "box", env = "DCGRID_BOX", value_delimiter = ',', allow_hyphen_values = true)]
    pub search_box: Option<Vec<f64>>,
    /// Geršgorin grid step [V].
    #[arg(long, env = "DCGRID_GRID_STEP")]
    pub grid_step: Option<f64>,
    /// Trace sampling interval [s].
    #[arg(long, env = "DCGRID_DECIMATE")]
    pub decimate: Option<f64>,
    /// Seed for random probes.
    #[arg(long, env = "DCGRID_SEED")]
    pub seed: Option<u64>,
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub files: Vec<PathBuf>,
    pub message: String,
}

/// Exit code for an error raised while executing a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(Error::Divergence { .. } | Error::NewtonFailed { .. } | Error::Singular(_)) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

/// Layered config with command-line overrides applied.
pub fn resolve_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = load_config(&args.config)?;
    if let Some(id) = args.strategy {
        cfg.strategy = Some(StrategyConfig { id: Some(id), ..Default::default() });
    }
    if let Some(dt) = args.dt {
        cfg.simulation.dt = dt;
    }
    if let Some(d) = args.decimate {
        cfg.simulation.decimate = d;
    }
    if let Some(b) = &args.search_box {
        let [lo, hi] = b[..] else {
            return Err(Error::Config(format!("--box needs two values `lo,hi`, got {b:?}")).into());
        };
        cfg.analysis.box_bounds = Some([lo, hi]);
    }
    if let Some(s) = args.grid_step {
        cfg.analysis.grid_step = Some(s);
    }
    if let Some(s) = args.seed {
        cfg.analysis.seed = s;
    }
    if let Some(o) = &args.out_dir {
        cfg.output.out_dir = o.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output.out_dir);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Microgrid with the configured strategy applied, and the strategy label.
pub fn tuned_microgrid(cfg: &RunConfig) -> Result<(Microgrid, String)> {
    let mg = Microgrid::from_config(cfg)?;
    Ok(match resolve_strategy(cfg, None)? {
        Some(s) => (apply_strategy(&mg, &s)?, s.name),
        None => (mg, "base case".into()),
    })
}

pub fn cmd_simulate(args: &CommonArgs) -> Result<Outcome> {
    let cfg = resolve_config(args)?;
    let out = run_scenario(&cfg)?;
    let dir = out_dir(&cfg)?;
    let trace = dir.join("trace.csv");
    let summary = dir.join("summary.toml");
    write_trace_csv(&trace, &out.trace)?;
    write_toml_report(&summary, &out.summary)?;
    let s: &SummaryReport = &out.summary;
    let message = format!(
        "{}: {} samples, containment {}, u in [{:.4}, {:.4}] V, settled Δ_max {:.2} % ({})",
        s.strategy,
        s.samples,
        if s.containment_ok { "ok" } else { "VIOLATED" },
        s.u_min,
        s.u_max,
        100.0 * s.max_settled_delta,
        if s.practical_sharing { "within 5 %" } else { "above 5 %" },
    );
    let code = if s.containment_ok { EXIT_OK } else { EXIT_CONTAINMENT };
    Ok(Outcome { code, files: vec![trace, summary], message })
}

#[derive(Debug, Clone, Serialize)]
pub struct RowVerdict {
    pub row: usize,
    pub margin: f64,
    pub v_at_margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub strategy: String,
    pub pass: bool,
    pub off_row: OffRowMode,
    pub search_box: [f64; 2],
    pub grid_step: f64,
    pub failing_rows: Vec<usize>,
    pub worst_v: Vec<f64>,
    /// Smallest eigenvalue of the symmetrized Jacobian over random box samples.
    pub sampled_min_eigenvalue: f64,
    pub seed: u64,
    pub rows: Vec<RowVerdict>,
    pub timescale: TimescaleReport,
    pub worst_case: WorstCaseResult,
}

/// Full certification of the configured tuning, with the Geršgorin curves.
pub fn certify(cfg: &RunConfig) -> Result<(CertifyReport, GershgorinReport)> {
    use rand::{Rng, SeedableRng};

    let (mg, label) = tuned_microgrid(cfg)?;
    let ev = ZEvaluator::new(&mg)?;
    let delta = mg.env.delta;
    let sbox = match cfg.analysis.box_bounds {
        Some([lo, hi]) => SearchBox { lo, hi },
        None => SearchBox::default_for(&mg.env),
    };
    let step = cfg.analysis.grid_step.unwrap_or(delta / 100.0);
    let coarse = cfg.analysis.coarse_step.unwrap_or(delta / 10.0);
    let mode: OffRowMode = cfg.analysis.off_row.into();
    let wc = worst_case_search(&ev, sbox, SearchConfig::new(coarse, cfg.analysis.refine_tol))?;
    let scan = gershgorin_scan(&ev, sbox, step, mode)?;
    let ts = timescale_requirement(&mg, &label);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.analysis.seed);
    let mut min_eig = f64::INFINITY;
    for _ in 0..1000 {
        let v: Vec<f64> = (0..mg.n_i()).map(|_| rng.gen_range(sbox.lo..=sbox.hi)).collect();
        let s = ev.sym_jacobian(&v)?;
        min_eig = min_eig.min(s.symmetric_eigen().eigenvalues.min());
    }

    let rep = CertifyReport {
        strategy: label,
        pass: scan.pass && ts.pass,
        off_row: mode,
        search_box: [sbox.lo, sbox.hi],
        grid_step: step,
        failing_rows: scan.failing_rows().iter().map(|r| r + 1).collect(),
        worst_v: wc.worst_v(),
        sampled_min_eigenvalue: min_eig,
        seed: cfg.analysis.seed,
        rows: scan
            .rows
            .iter()
            .map(|r| RowVerdict { row: r.row + 1, margin: r.margin, v_at_margin: r.v_at_margin, pass: r.pass })
            .collect(),
        timescale: ts,
        worst_case: wc,
    };
    Ok((rep, scan))
}

pub fn cmd_certify(args: &CommonArgs) -> Result<Outcome> {
    let cfg = resolve_config(args)?;
    let (rep, scan) = certify(&cfg)?;
    let dir = out_dir(&cfg)?;
    let report = dir.join("certificate.toml");
    let curves = dir.join("gershgorin.csv");
    fs::write(&report, report_to_toml(&rep)?)?;
    write_gershgorin_csv(fs::File::create(&curves)?, &scan)?;
    let fmt_v = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
    let message = if rep.pass {
        format!(
            "{}: certified; required tau = {} s (configured {} s)",
            rep.strategy, rep.timescale.required_tau_rounded, rep.timescale.actual_tau
        )
    } else {
        format!(
            "{}: NOT certified; failing rows {:?}, worst v = [{}], required tau = {} s (configured {} s)",
            rep.strategy,
            rep.failing_rows,
            fmt_v(&rep.worst_v),
            rep.timescale.required_tau_rounded,
            rep.timescale.actual_tau
        )
    };
    let code = if rep.pass { EXIT_OK } else { EXIT_CERTIFY };
    Ok(Outcome { code, files: vec![report, curves], message })
}

pub fn cmd_equilibrium(args: &CommonArgs) -> Result<Outcome> {
    let cfg = resolve_config(args)?;
    let (mg, label) = tuned_microgrid(&cfg)?;
    let eq = find_equilibrium(&mg, &vec![0.0; mg.n_i()])?;
    let rep = EquilibriumReport::new(&eq, &mg, &label);
    let dir = out_dir(&cfg)?;
    let path = dir.join("equilibrium.toml");
    write_toml_report(&path, &rep)?;
    let message = format!(
        "{label}: lambda_s = {:.6}, KKT primal {:.3e}, dual {:.3e}, Newton {} iterations",
        rep.consensus_value, rep.kkt_primal_residual, rep.kkt_dual_residual, rep.newton_iterations
    );
    Ok(Outcome { code: EXIT_OK, files: vec![path], message })
}

/// Runs a parsed command line, printing the outcome; returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    let res = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Equilibrium(a) => cmd_equilibrium(a),
    };
    match res {
        Ok(o) => {
            println!("{}", o.message);
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            o.code
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
