//! Experiment orchestration: nominal, FDI and FDI+DoS runs, error metrics,
//! and CSV/SVG output.
//!
//! CSV numbers use Rust's shortest round-trip formatting, so parsing an
//! emitted file reproduces the recorded values exactly.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DVector, Vector2, Vector4};

use crate::attack::{self, AttackDecision, DosPlan};
use crate::config::ExperimentConfig;
use crate::dmd::{self, SnapshotBuffer};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::laprec;
use crate::ncs::{self, StackedState, STATE_DIM};
use crate::plot::{Plot, Series};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Nominal,
    Fdi,
    FdiDos,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Nominal, Mode::Fdi, Mode::FdiDos];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Nominal => "nominal",
            Mode::Fdi => "fdi",
            Mode::FdiDos => "fdi_dos",
        }
    }

    pub fn attacks(self) -> bool {
        self != Mode::Nominal
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(Mode::Nominal),
            "fdi" => Ok(Mode::Fdi),
            "fdi_dos" => Ok(Mode::FdiDos),
            other => Err(Error::invalid(format!("unknown mode `{other}` (nominal, fdi, fdi_dos)"))),
        }
    }
}

/// What happened at the DoS step.
#[derive(Clone, Debug)]
pub struct DosRecord<T: Real> {
    pub step: usize,
    /// `None` when the link was fixed in the configuration.
    pub plan: Option<DosPlan<T>>,
    /// Link the attacker tried to cut.
    pub target: Option<(usize, usize)>,
    /// The link existed in the true graph and was removed.
    pub effective: bool,
    pub recovery_gamma: Option<T>,
    pub recovery_iterations: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunRecord<T: Real> {
    pub mode: Mode,
    pub dt: T,
    /// Desired per-agent states (offsets).
    pub formation: Vec<Vector4<T>>,
    /// Stacked state for `k = 0..=horizon`.
    pub states: Vec<StackedState<T>>,
    /// Control inputs applied at `k = 0..horizon`.
    pub inputs: Vec<Vec<Vector2<T>>>,
    /// Attack decision applied at step `k`, if any.
    pub decisions: Vec<Option<AttackDecision<T>>>,
    /// Index into `graphs` of the graph active at each state.
    pub graph_ids: Vec<usize>,
    pub graphs: Vec<Graph>,
    pub dos: Option<DosRecord<T>>,
}

impl<T: Real> RunRecord<T> {
    pub fn n_agents(&self) -> usize {
        self.formation.len()
    }

    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// Position-only formation error of pair `(i, j)` at step `k`.
    pub fn pair_error(&self, k: usize, i: usize, j: usize) -> T {
        let s = &self.states[k];
        let off = self.formation[i] - self.formation[j];
        let d = s.position(i) - s.position(j) - Vector2::new(off[0], off[2]);
        d.norm()
    }

    /// `‖x_0 − x*_k‖` over the leader's full state.
    pub fn tracking_error(&self, k: usize) -> T {
        (self.states[k].agent(0) - ncs::reference::<T>(k)).norm()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_agents();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    }

    pub fn attacked_steps(&self) -> usize {
        self.decisions.iter().filter(|d| d.is_some()).count()
    }
}

/// Runs one experiment.
pub fn run<T: Real>(cfg: &ExperimentConfig<T>, mode: Mode) -> Result<RunRecord<T>> {
    let sc = &cfg.scenario;
    sc.validate()?;
    cfg.attack.validate()?;
    let horizon = sc.horizon_steps;
    let omega = cfg.attack.input_polytope()?;
    let dos = match mode {
        Mode::FdiDos => Some(cfg.attack.dos.ok_or_else(|| Error::config("dos_step", "fdi_dos mode needs a DoS step"))?),
        _ => None,
    };

    let mut plant = sc.clone();
    let mut graphs = vec![sc.graph.clone()];
    let mut state = sc.initial_state();
    let mut buffer = SnapshotBuffer::new(cfg.snapshot_width, sc.state_dim())?;
    let mut rec = RunRecord {
        mode,
        dt: sc.model.dt(),
        formation: sc.formation.clone(),
        states: Vec::with_capacity(horizon + 1),
        inputs: Vec::with_capacity(horizon),
        decisions: Vec::with_capacity(horizon),
        graph_ids: Vec::with_capacity(horizon + 1),
        graphs: Vec::new(),
        dos: None,
    };

    for k in 0..horizon {
        if mode.attacks() {
            buffer.push(&state.x)?;
        }
        if let Some(ev) = dos.filter(|ev| ev.step == k) {
            let record = denial_of_service(cfg, &buffer, &plant.graph, ev)?;
            if let (true, Some((i, j))) = (record.effective, record.target) {
                plant = plant.with_graph(plant.graph.remove_edge(i, j)?)?;
                graphs.push(plant.graph.clone());
            }
            rec.dos = Some(record);
        }
        rec.graph_ids.push(graphs.len() - 1);

        let decision = if mode.attacks() && k >= cfg.attack.start_step && buffer.can_fit() && !omega.is_origin() {
            let model = dmd::fit(&buffer, cfg.svd_tol)?;
            Some(attack::plan_step(k, &model, &omega, &state.x, &cfg.reach)?)
        } else {
            None
        };
        let inputs = ncs::control_inputs(&plant, &state)?;
        let next = ncs::step_with_inputs(&plant, &state, &inputs, decision.as_ref().map(|d| &d.u_a))?;
        rec.states.push(std::mem::replace(&mut state, next));
        rec.inputs.push(inputs);
        rec.decisions.push(decision);
    }
    rec.graph_ids.push(graphs.len() - 1);
    rec.states.push(state);
    rec.graphs = graphs;
    Ok(rec)
}

fn denial_of_service<T: Real>(
    cfg: &ExperimentConfig<T>,
    buffer: &SnapshotBuffer<T>,
    truth: &Graph,
    ev: attack::DosSchedule,
) -> Result<DosRecord<T>> {
    let (plan, target, gamma, iterations) = match ev.edge {
        Some(e) => (None, Some(e), None, None),
        None => {
            if !buffer.can_fit() {
                return Err(Error::config(
                    "dos_step",
                    format!("no identified model at step {} (need at least 2 snapshots)", ev.step),
                ));
            }
            let model = dmd::fit(buffer, cfg.svd_tol)?;
            let recovery = laprec::recover(&model.k, &cfg.recovery)?;
            let plan = attack::plan_dos(&recovery, cfg.edge_threshold)?;
            let target = plan.edge();
            (Some(plan), target, Some(recovery.gamma), Some(recovery.iterations))
        }
    };
    let effective = target.is_some_and(|(i, j)| truth.has_edge(i, j));
    Ok(DosRecord {
        step: ev.step,
        plan,
        target,
        effective,
        recovery_gamma: gamma,
        recovery_iterations: iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairMetric<T: Real> {
    pub pair: (usize, usize),
    pub max: T,
    pub last: T,
}

/// Summary table of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics<T: Real> {
    pub pairs: Vec<PairMetric<T>>,
    pub tracking: Vec<T>,
    pub attacked_steps: usize,
    /// Number of steps each pair was targeted, same order as `pairs`.
    pub target_counts: Vec<usize>,
    pub dos_edge: Option<(usize, usize)>,
}

impl<T: Real> Metrics<T> {
    pub fn max_tracking(&self) -> Option<T> {
        self.tracking.iter().copied().reduce(|a, b| a.max(b))
    }

    pub fn final_tracking(&self) -> Option<T> {
        self.tracking.last().copied()
    }

    pub fn max_pair_error(&self) -> Option<T> {
        self.pairs.iter().map(|p| p.max).reduce(|a, b| a.max(b))
    }

    pub fn final_pair_error(&self) -> Option<T> {
        self.pairs.iter().map(|p| p.last).reduce(|a, b| a.max(b))
    }
}

pub fn metrics<T: Real>(r: &RunRecord<T>) -> Metrics<T> {
    let pairs = if r.states.is_empty() { Vec::new() } else { r.pairs() };
    let last = r.states.len().saturating_sub(1);
    let table = pairs
        .iter()
        .map(|&(i, j)| PairMetric {
            pair: (i, j),
            max: (0..r.states.len()).map(|k| r.pair_error(k, i, j)).fold(T::zero(), |a, b| a.max(b)),
            last: r.pair_error(last, i, j),
        })
        .collect();
    let target_counts = pairs
        .iter()
        .map(|&p| r.decisions.iter().flatten().filter(|d| d.targets == p).count())
        .collect();
    Metrics {
        pairs: table,
        tracking: (0..r.states.len()).map(|k| r.tracking_error(k)).collect(),
        attacked_steps: r.attacked_steps(),
        target_counts,
        dos_edge: r.dos.as_ref().filter(|d| d.effective).and_then(|d| d.target),
    }
}

/// Output files written by [`emit`].
pub const OUTPUT_FILES: [&str; 5] = [
    "trajectories.csv",
    "errors.csv",
    "attack.csv",
    "trajectories.svg",
    "errors.svg",
];

/// Writes CSVs and SVG plots into `out_dir` (created if missing).
pub fn emit<T: Real>(r: &RunRecord<T>, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files: Vec<PathBuf> = OUTPUT_FILES.iter().map(|f| dir.join(f)).collect();
    write_file(&files[0], &trajectories_csv(r)?)?;
    write_file(&files[1], &errors_csv(r)?)?;
    write_file(&files[2], &attack_csv(r)?)?;
    write_file(&files[3], &trajectory_plot(r).to_svg())?;
    write_file(&files[4], &error_plot(r).to_svg())?;
    Ok(files)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_text(rows: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let parse = |e: csv::Error| Error::Parse {
        what: "csv".into(),
        reason: e.to_string(),
    };
    rows(&mut w).map_err(parse)?;
    let bytes = w.into_inner().map_err(|e| Error::Parse {
        what: "csv".into(),
        reason: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

pub fn trajectories_csv<T: Real>(r: &RunRecord<T>) -> Result<String> {
    csv_text(|w| {
        w.write_record(["k", "t", "agent", "x", "vx", "y", "vy"])?;
        for (k, s) in r.states.iter().enumerate() {
            let t = T::from_usize_lossy(k) * r.dt;
            for a in 0..r.n_agents() {
                let x = s.agent(a);
                w.write_record([
                    k.to_string(),
                    t.to_string(),
                    a.to_string(),
                    x[0].to_string(),
                    x[1].to_string(),
                    x[2].to_string(),
                    x[3].to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn errors_csv<T: Real>(r: &RunRecord<T>) -> Result<String> {
    let pairs = r.pairs();
    csv_text(|w| {
        w.write_record(["k", "pair", "e"])?;
        for k in 0..r.states.len() {
            for &(i, j) in &pairs {
                w.write_record([k.to_string(), format!("{i}-{j}"), r.pair_error(k, i, j).to_string()])?;
            }
        }
        Ok(())
    })
}

/// One row per attacked step plus the DoS step; `u_a_*` is the stacked
/// injection.
pub fn attack_csv<T: Real>(r: &RunRecord<T>) -> Result<String> {
    let m = r.n_agents() * ncs::INPUT_DIM;
    let dos_step = r.dos.as_ref().map(|d| d.step);
    csv_text(|w| {
        let mut header: Vec<String> = ["step", "i", "j"].iter().map(|s| s.to_string()).collect();
        header.extend((0..m).map(|c| format!("u_a_{c}")));
        header.extend(["separation_before", "separation_after", "dos_event"].map(String::from));
        w.write_record(&header)?;
        for (k, d) in r.decisions.iter().enumerate() {
            let dos = if dos_step == Some(k) { "1" } else { "0" };
            match d {
                Some(d) => {
                    let mut row = vec![k.to_string(), d.targets.0.to_string(), d.targets.1.to_string()];
                    row.extend(d.u_a.iter().map(|v| v.to_string()));
                    row.extend([d.separation_before.to_string(), d.separation_after.to_string(), dos.to_string()]);
                    w.write_record(&row)?;
                }
                None if dos == "1" => {
                    let mut row = vec![k.to_string(), String::new(), String::new()];
                    row.extend(std::iter::repeat_n(String::new(), m + 2));
                    row.push(dos.to_string());
                    w.write_record(&row)?;
                }
                None => {}
            }
        }
        Ok(())
    })
}

fn trajectory_plot<T: Real>(r: &RunRecord<T>) -> Plot {
    let mut p = Plot::new(format!("Trajectories ({})", r.mode), "x [m]", "y [m]");
    p.equal_axes = true;
    for a in 0..r.n_agents() {
        let pts = r
            .states
            .iter()
            .map(|s| {
                let q = s.position(a);
                (q.x.as_f64(), q.y.as_f64())
            })
            .collect();
        p.push(Series::line(format!("agent {a}"), pts));
    }
    p
}

fn error_plot<T: Real>(r: &RunRecord<T>) -> Plot {
    let mut p = Plot::new(format!("Inter-agent errors ({})", r.mode), "t [s]", "e [m]");
    let dt = r.dt.as_f64();
    for (i, j) in r.pairs() {
        let pts = (0..r.states.len())
            .map(|k| (k as f64 * dt, r.pair_error(k, i, j).as_f64()))
            .collect();
        p.push(Series::line(format!("e{i}{j}"), pts));
    }
    p
}

/// Parses `trajectories.csv` back into stacked states.
pub fn read_trajectories<T: Real>(reader: impl Read) -> Result<Vec<StackedState<T>>> {
    let perr = |reason: String| Error::Parse {
        what: "trajectories.csv".into(),
        reason,
    };
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows: Vec<(usize, usize, Vector4<T>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        if rec.len() != 7 {
            return Err(perr(format!("expected 7 fields, got {}", rec.len())));
        }
        let int = |i: usize| rec[i].parse::<usize>().map_err(|_| perr(format!("bad integer `{}`", &rec[i])));
        let num = |i: usize| rec[i].parse::<T>().map_err(|_| perr(format!("bad number `{}`", &rec[i])));
        rows.push((int(0)?, int(2)?, Vector4::new(num(3)?, num(4)?, num(5)?, num(6)?)));
    }
    let n = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    let steps = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    if rows.len() != n * steps {
        return Err(perr(format!("{} rows do not form {} steps of {} agents", rows.len(), steps, n)));
    }
    let mut out: Vec<StackedState<T>> = (0..steps).map(|k| StackedState::new(k, DVector::zeros(n * STATE_DIM))).collect();
    for (k, a, x) in rows {
        out[k].x.fixed_rows_mut::<4>(a * STATE_DIM).copy_from(&x);
    }
    Ok(out)
}
