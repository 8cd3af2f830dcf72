//! `ncs-redteam` command-line front end.

mod matrix_csv;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use ncs_redteam::attack::{self, ReachParams};
use ncs_redteam::config::{ExperimentConfig, ScenarioFile};
use ncs_redteam::dmd::{self, SnapshotBuffer};
use ncs_redteam::harness::{self, Mode, RunRecord};
use ncs_redteam::laprec::{self, RecoveryOptions};
use ncs_redteam::plot::{Plot, Series};
use ncs_redteam::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "ncs-redteam", version, about = "Attack workbench for formation-control networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Nominal,
    Fdi,
    #[value(name = "fdi_dos")]
    FdiDos,
    /// All three modes, run concurrently into `<out>/<mode>/`.
    All,
}

impl ModeArg {
    fn single(self) -> Option<Mode> {
        match self {
            ModeArg::Nominal => Some(Mode::Nominal),
            ModeArg::Fdi => Some(Mode::Fdi),
            ModeArg::FdiDos => Some(Mode::FdiDos),
            ModeArg::All => None,
        }
    }
}

#[derive(clap::Args, Debug)]
struct ScenarioArgs {
    /// Scenario file; omitted keys (or a missing flag) use the 5-UAV defaults.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides `rng_seed` from the scenario file.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ExperimentConfig<f64>> {
        let mut file = match &self.scenario {
            Some(p) => ScenarioFile::load(p)?,
            None => ScenarioFile::default(),
        };
        if let Some(s) = self.seed {
            file.rng_seed = s;
        }
        ExperimentConfig::from_file(&file)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write trajectories, errors, attack log and plots.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value = "nominal")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the snapshot matrices and identified model at a step.
    DmdExport {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value = "nominal")]
        mode: ModeArg,
        /// Step whose buffer is fitted (default: the final step).
        #[arg(long)]
        at: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump per-agent reach polygons for 1..=horizon steps ahead of a step.
    ReachsetDump {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value = "nominal")]
        mode: ModeArg,
        #[arg(long)]
        at: usize,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover S, T and a Laplacian from an identified one-step matrix.
    RecoverLaplacian {
        /// Square matrix as headerless CSV.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        block: usize,
        #[arg(long, default_value_t = 1e-6)]
        threshold: f64,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = laprec::EDGE_THRESHOLD)]
        edge_threshold: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) => 3,
        Error::Config { .. } => 4,
        Error::Io { .. } => 5,
        Error::Parse { .. } => 6,
        Error::InsufficientData(_) => 7,
        Error::DegenerateGeometry(_) => 8,
        Error::NotFound(_) => 9,
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { scenario, mode, out } => simulate(&scenario.load()?, mode, &out),
        Command::DmdExport {
            scenario,
            mode,
            at,
            out,
        } => dmd_export(&scenario.load()?, single_mode(mode)?, at, &out),
        Command::ReachsetDump {
            scenario,
            mode,
            at,
            horizon,
            out,
        } => reachset_dump(&scenario.load()?, single_mode(mode)?, at, horizon, &out),
        Command::RecoverLaplacian {
            input,
            out,
            block,
            threshold,
            max_iters,
            seed,
            edge_threshold,
        } => {
            let opts = RecoveryOptions {
                block,
                threshold,
                max_iters,
                seed,
            };
            recover_laplacian(&input, &out, &opts, edge_threshold)
        }
    }
}

fn single_mode(m: ModeArg) -> Result<Mode> {
    m.single()
        .ok_or_else(|| Error::InvalidInput("this subcommand takes a single mode".into()))
}

fn simulate(cfg: &ExperimentConfig<f64>, mode: ModeArg, out: &Path) -> Result<()> {
    if let Some(m) = mode.single() {
        let r = harness::run(cfg, m)?;
        harness::emit(&r, out)?;
        print_summary(&r);
        return Ok(());
    }
    let runs: Vec<Result<RunRecord<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = Mode::ALL.iter().map(|&m| s.spawn(move || harness::run(cfg, m))).collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    for r in runs {
        let r = r?;
        harness::emit(&r, out.join(r.mode.as_str()))?;
        print_summary(&r);
    }
    Ok(())
}

fn print_summary(r: &RunRecord<f64>) {
    let m = harness::metrics(r);
    println!("mode {}: {} steps, {} attacked", r.mode, r.horizon(), m.attacked_steps);
    for p in &m.pairs {
        println!("  e{}-{}  max {:.6}  final {:.6}", p.pair.0, p.pair.1, p.max, p.last);
    }
    if let (Some(mx), Some(fin)) = (m.max_tracking(), m.final_tracking()) {
        println!("  tracking  max {mx:.6}  final {fin:.6}");
    }
    if let Some(d) = &r.dos {
        match d.target {
            Some((i, j)) => println!(
                "  dos at step {}: link {}-{} ({})",
                d.step,
                i,
                j,
                if d.effective { "removed" } else { "not in graph" }
            ),
            None => println!("  dos at step {}: no link selected", d.step),
        }
    }
}

/// Runs `mode` up to step `at` and returns the record.
fn run_until(cfg: &ExperimentConfig<f64>, mode: Mode, at: usize) -> Result<RunRecord<f64>> {
    if at > cfg.scenario.horizon_steps {
        return Err(Error::InvalidInput(format!(
            "step {at} is beyond the horizon {}",
            cfg.scenario.horizon_steps
        )));
    }
    let mut c = cfg.clone();
    c.scenario.horizon_steps = at;
    harness::run(&c, mode)
}

/// Buffer holding the `width + 1` states observed up to and including `at`.
fn buffer_at(cfg: &ExperimentConfig<f64>, r: &RunRecord<f64>) -> Result<SnapshotBuffer<f64>> {
    let mut buf = SnapshotBuffer::new(cfg.snapshot_width, cfg.scenario.state_dim())?;
    let start = r.states.len().saturating_sub(cfg.snapshot_width + 1);
    for s in &r.states[start..] {
        buf.push(&s.x)?;
    }
    Ok(buf)
}

fn dmd_export(cfg: &ExperimentConfig<f64>, mode: Mode, at: Option<usize>, out: &Path) -> Result<()> {
    let at = at.unwrap_or(cfg.scenario.horizon_steps);
    let r = run_until(cfg, mode, at)?;
    let buf = buffer_at(cfg, &r)?;
    let (x, xp) = buf.snapshot_matrices()?;
    let model = dmd::fit_snapshots(&x, &xp, cfg.svd_tol)?;
    create_dir(out)?;
    matrix_csv::write(&out.join("X.csv"), &x)?;
    matrix_csv::write(&out.join("Xplus.csv"), &xp)?;
    matrix_csv::write(&out.join("K.csv"), &model.k)?;
    println!(
        "step {at}: {} snapshot pairs, rank {}, relative residual {:e}",
        x.ncols(),
        model.rank_used,
        model.residual
    );
    Ok(())
}

fn reachset_dump(cfg: &ExperimentConfig<f64>, mode: Mode, at: usize, horizon: usize, out: &Path) -> Result<()> {
    let r = run_until(cfg, mode, at)?;
    let buf = buffer_at(cfg, &r)?;
    let model = dmd::fit(&buf, cfg.svd_tol)?;
    let omega = cfg.attack.input_polytope()?;
    if omega.is_origin() {
        return Err(Error::Config {
            key: "rho".into(),
            reason: "reach sets need a positive budget".into(),
        });
    }
    let x0 = &r.states.last().expect("at least the initial state").x;
    let n = cfg.scenario.n_agents();
    let agents: Vec<usize> = (0..n).collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut plot = Plot::new(format!("Reach sets from step {at}"), "x [m]", "y [m]");
    plot.equal_axes = true;
    let csv_err = |e: csv::Error| Error::Parse {
        what: "reachset.csv".into(),
        reason: e.to_string(),
    };
    w.write_record(["step", "agent", "vertex", "x", "y"]).map_err(csv_err)?;
    for h in 1..=horizon {
        let reach = ReachParams::new(*cfg.scenario.model.b(), h, cfg.reach.directions.len())?;
        let polys = reach.polygons(&model, &omega, x0, &agents)?;
        for p in &polys {
            for (v, q) in p.vertices().iter().enumerate() {
                w.write_record([
                    (at + h).to_string(),
                    p.agent.to_string(),
                    v.to_string(),
                    q.x.to_string(),
                    q.y.to_string(),
                ])
                .map_err(csv_err)?;
            }
            let pts = p.vertices().iter().map(|q| (q.x, q.y)).collect();
            plot.push(Series::outline(format!("agent {} +{h}", p.agent), pts));
        }
        if h == 1 {
            let targets = attack::select_targets(&polys)?;
            println!("step {at}: farthest pair at +1 is {}-{}", targets.0, targets.1);
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse {
        what: "reachset.csv".into(),
        reason: e.to_string(),
    })?;
    create_dir(out)?;
    write(&out.join("reachset.csv"), &bytes)?;
    write(&out.join("reachset.svg"), plot.to_svg().as_bytes())?;
    Ok(())
}

fn recover_laplacian(input: &Path, out: &Path, opts: &RecoveryOptions<f64>, edge_threshold: f64) -> Result<()> {
    let k: DMatrix<f64> = matrix_csv::read(input)?;
    let res = laprec::recover(&k, opts)?;
    create_dir(out)?;
    matrix_csv::write(&out.join("L.csv"), &res.model.l)?;
    matrix_csv::write(&out.join("S.csv"), &res.model.s)?;
    matrix_csv::write(&out.join("T.csv"), &res.model.t)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Parse {
        what: "trace.csv".into(),
        reason: e.to_string(),
    };
    w.write_record(["iteration", "frobenius_residual", "gamma"]).map_err(csv_err)?;
    for t in &res.trace {
        w.write_record([t.iteration.to_string(), t.frobenius.to_string(), t.gamma.to_string()])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse {
        what: "trace.csv".into(),
        reason: e.to_string(),
    })?;
    write(&out.join("trace.csv"), &bytes)?;
    let graph = res.model.graph(edge_threshold)?;
    println!(
        "gamma {:e} after {} iterations ({}), edges {}",
        res.gamma,
        res.iterations,
        if res.converged { "converged" } else { "not converged" },
        graph
    );
    Ok(())
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn write(p: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(p, bytes).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}
