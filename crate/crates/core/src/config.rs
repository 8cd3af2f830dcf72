//! Flat key-value scenario files (TOML syntax).
//!
//! Every key is optional; omitted keys take the 5-UAV experiment defaults.
//! Edges are written 1-based as `"i-j"` strings.
//!
//! ```toml
//! dt = 0.2
//! horizon_steps = 500
//! edges = ["1-2", "1-3", "2-4", "3-5"]
//! rho = 0.05
//! ```

use std::path::Path;

use nalgebra::Vector4;
use serde::Deserialize;

use crate::attack::{AttackConfig, DosSchedule, ReachParams};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::laprec::{RecoveryOptions, EDGE_THRESHOLD};
use crate::ncs::{self, AgentModel, Scenario};
use crate::scalar::Real;

/// Raw file contents with defaults filled in.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub n_agents: usize,
    pub dt: f64,
    pub horizon_steps: usize,
    pub gain: [[f64; 4]; 2],
    pub leader_gain: [[f64; 4]; 2],
    pub edges: Vec<String>,
    /// Desired `(x, y)` per agent, leader first.
    pub formation: Vec<[f64; 2]>,
    /// Half-width of the square initial positions are drawn from.
    pub initial_box: f64,
    /// Explicit `[x, vx, y, vy]` per agent; overrides the random draw.
    pub initial_states: Option<Vec<[f64; 4]>>,
    pub rng_seed: u64,
    pub rho: f64,
    pub d_star: f64,
    pub polytope_faces: usize,
    pub attack_start: usize,
    pub dos_step: usize,
    /// Fixed 1-based link to cut instead of the planned one.
    pub dos_edge: Option<String>,
    pub snapshot_width: usize,
    pub svd_tol: f64,
    pub reach_horizon: usize,
    pub reach_directions: usize,
    pub recovery_threshold: f64,
    pub recovery_max_iters: usize,
    pub recovery_seed: u64,
    pub edge_threshold: f64,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        ScenarioFile {
            n_agents: 5,
            dt: 0.2,
            horizon_steps: 500,
            gain: ncs::FORMATION_GAIN,
            leader_gain: ncs::FORMATION_GAIN,
            edges: ncs::FORMATION_EDGES
                .iter()
                .map(|(i, j)| format!("{}-{}", i + 1, j + 1))
                .collect(),
            formation: ncs::FORMATION_OFFSETS.to_vec(),
            initial_box: 10.0,
            initial_states: None,
            rng_seed: 0,
            rho: 0.05,
            d_star: 1.0,
            polytope_faces: 8,
            attack_start: 51,
            dos_step: 100,
            dos_edge: None,
            snapshot_width: 50,
            svd_tol: crate::dmd::DEFAULT_SVD_TOL,
            reach_horizon: 1,
            reach_directions: crate::reachset::DEFAULT_DIRECTIONS,
            recovery_threshold: 1e-6,
            recovery_max_iters: 100,
            recovery_seed: 0,
            edge_threshold: EDGE_THRESHOLD,
        }
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match unknown_key(&msg) {
                Some(key) => Error::config(&key, "unknown key"),
                None => Error::Parse {
                    what: "scenario".into(),
                    reason: e.to_string(),
                },
            }
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn unknown_key(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest.split('`').next()?.to_string())
}

/// Everything one experiment needs, validated.
#[derive(Clone, Debug)]
pub struct ExperimentConfig<T: Real> {
    pub scenario: Scenario<T>,
    pub attack: AttackConfig<T>,
    pub snapshot_width: usize,
    pub svd_tol: T,
    pub reach: ReachParams<T>,
    pub recovery: RecoveryOptions<T>,
    pub edge_threshold: T,
    pub seed: u64,
}

impl<T: Real> ExperimentConfig<T> {
    /// The 5-UAV experiment with initial states drawn from `seed`.
    pub fn five_uav(seed: u64) -> Self {
        let file = ScenarioFile {
            rng_seed: seed,
            ..Default::default()
        };
        Self::from_file(&file).expect("defaults are valid")
    }

    pub fn from_file(f: &ScenarioFile) -> Result<Self> {
        let n = f.n_agents;
        if n < 2 {
            return Err(Error::config("n_agents", format!("need at least 2 agents, got {n}")));
        }
        if !(f.dt > 0.0 && f.dt.is_finite()) {
            return Err(Error::config("dt", format!("must be positive, got {}", f.dt)));
        }
        if f.formation.len() != n {
            return Err(Error::config(
                "formation",
                format!("{} offsets for {} agents", f.formation.len(), n),
            ));
        }
        let pairs = f
            .edges
            .iter()
            .map(|e| Graph::parse_edge_list(e))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::config("edges", e.to_string()))?;
        let graph = Graph::new(n, pairs.into_iter().flatten()).map_err(|e| Error::config("edges", e.to_string()))?;
        if !(f.initial_box >= 0.0 && f.initial_box.is_finite()) {
            return Err(Error::config("initial_box", format!("must be non-negative, got {}", f.initial_box)));
        }
        let initial_states = match &f.initial_states {
            Some(v) if v.len() != n => {
                return Err(Error::config("initial_states", format!("{} states for {} agents", v.len(), n)));
            }
            Some(v) => v.iter().map(|s| Vector4::new(T::lit(s[0]), T::lit(s[1]), T::lit(s[2]), T::lit(s[3]))).collect(),
            None => ncs::random_initial_states(n, T::lit(f.initial_box), f.rng_seed),
        };
        let model = AgentModel::double_integrator(T::lit(f.dt)).map_err(|e| Error::config("dt", e.to_string()))?;
        let scenario = Scenario {
            model,
            graph,
            gain: ncs::gain_from_rows(&f.gain),
            leader_gain: ncs::gain_from_rows(&f.leader_gain),
            formation: f
                .formation
                .iter()
                .map(|p| Vector4::new(T::lit(p[0]), T::zero(), T::lit(p[1]), T::zero()))
                .collect(),
            horizon_steps: f.horizon_steps,
            initial_states,
        };
        scenario.validate()?;

        let dos_edge = match &f.dos_edge {
            None => None,
            Some(s) => {
                let e = Graph::parse_edge_list(s).map_err(|e| Error::config("dos_edge", e.to_string()))?;
                match e.as_slice() {
                    [(i, j)] if *i < n && *j < n => Some((*i.min(j), *i.max(j))),
                    _ => return Err(Error::config("dos_edge", format!("expected a single edge among {n} agents, got `{s}`"))),
                }
            }
        };
        let attack = AttackConfig {
            rho: T::lit(f.rho),
            d_star: T::lit(f.d_star),
            faces: f.polytope_faces,
            start_step: f.attack_start,
            dos: Some(DosSchedule {
                step: f.dos_step,
                edge: dos_edge,
            }),
        };
        attack.validate()?;
        if f.snapshot_width == 0 {
            return Err(Error::config("snapshot_width", "must be positive"));
        }
        if !(f.svd_tol > 0.0 && f.svd_tol < 1.0) {
            return Err(Error::config("svd_tol", format!("must lie in (0, 1), got {}", f.svd_tol)));
        }
        let reach = ReachParams::new(*scenario.model.b(), f.reach_horizon, f.reach_directions)?;
        if !(f.recovery_threshold > 0.0) {
            return Err(Error::config("recovery_threshold", "must be positive"));
        }
        if f.recovery_max_iters == 0 {
            return Err(Error::config("recovery_max_iters", "must be positive"));
        }
        if !(f.edge_threshold > 0.0 && f.edge_threshold < 1.0) {
            return Err(Error::config("edge_threshold", format!("must lie in (0, 1), got {}", f.edge_threshold)));
        }
        Ok(ExperimentConfig {
            scenario,
            attack,
            snapshot_width: f.snapshot_width,
            svd_tol: T::lit(f.svd_tol),
            reach,
            recovery: RecoveryOptions {
                block: ncs::STATE_DIM,
                threshold: T::lit(f.recovery_threshold),
                max_iters: f.recovery_max_iters,
                seed: f.recovery_seed,
            },
            edge_threshold: T::lit(f.edge_threshold),
            seed: f.rng_seed,
        })
    }
}
