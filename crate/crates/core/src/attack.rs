//! Attack synthesis: target-pair selection from reach-set separation,
//! vertex-enumerated actuator injections, and DoS link selection from a
//! recovered Laplacian.

use nalgebra::{DMatrix, DVector, Matrix4x2, Vector2};

use crate::dmd::DmdModel;
use crate::error::{Error, Result};
use crate::graph::{self, Graph};
use crate::laprec::RecoveryResult;
use crate::ncs::{INPUT_DIM, STATE_DIM};
use crate::reachset::{self, AgentPolygon, InputPolytope};
use crate::scalar::Real;

/// Relative tolerance under which Fiedler magnitudes count as tied.
pub const FIEDLER_TIE_TOL: f64 = 1e-9;

/// Scheduled link removal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DosSchedule {
    pub step: usize,
    /// Fixed link to cut; `None` lets the attacker choose from the
    /// recovered Laplacian.
    pub edge: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackConfig<T: Real> {
    /// Per-agent injection budget; zero disables injections.
    pub rho: T,
    /// Separation (meters) the attacker is trying to reach.
    pub d_star: T,
    /// Input-polytope face count.
    pub faces: usize,
    pub start_step: usize,
    pub dos: Option<DosSchedule>,
}

impl<T: Real> Default for AttackConfig<T> {
    fn default() -> Self {
        AttackConfig {
            rho: T::lit(0.05),
            d_star: T::one(),
            faces: 8,
            start_step: 51,
            dos: None,
        }
    }
}

impl<T: Real> AttackConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= T::zero()) {
            return Err(Error::config("rho", format!("budget must be non-negative, got {}", self.rho)));
        }
        if !(self.d_star > T::zero()) {
            return Err(Error::config("d_star", format!("target separation must be positive, got {}", self.d_star)));
        }
        if self.faces < 3 {
            return Err(Error::config("polytope_faces", format!("need at least 3 faces, got {}", self.faces)));
        }
        Ok(())
    }

    /// Regular polytope circumscribing the `rho`-disc, or `{0}` for a zero
    /// budget.
    pub fn input_polytope(&self) -> Result<InputPolytope<T>> {
        if self.rho == T::zero() {
            return Ok(InputPolytope::origin());
        }
        InputPolytope::regular(self.rho, self.faces, T::zero())
    }
}

/// What the attacker knows about reachability: the per-agent input map and
/// the query grid.
#[derive(Clone, Debug)]
pub struct ReachParams<T: Real> {
    pub agent_input: Matrix4x2<T>,
    pub horizon: usize,
    pub directions: Vec<Vector2<T>>,
}

impl<T: Real> ReachParams<T> {
    pub fn new(agent_input: Matrix4x2<T>, horizon: usize, n_directions: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::config("reach_horizon", "must be at least 1"));
        }
        if n_directions < 3 {
            return Err(Error::config("reach_directions", format!("need at least 3, got {n_directions}")));
        }
        Ok(ReachParams {
            agent_input,
            horizon,
            directions: reachset::uniform_directions(n_directions),
        })
    }

    /// Position polygons of `agents` for the horizon-step reach set from
    /// `x0`, with every agent's actuator channel driven by `omega`.
    pub fn polygons(
        &self,
        model: &DmdModel<T>,
        omega: &InputPolytope<T>,
        x0: &DVector<T>,
        agents: &[usize],
    ) -> Result<Vec<AgentPolygon<T>>> {
        let n = x0.len() / STATE_DIM;
        let all: Vec<usize> = (0..n).collect();
        let bsel = reachset::channel_map(&self.agent_input, n, &all)?;
        let k_seq = vec![model.k.clone(); self.horizon];
        reachset::reach_polygons(&k_seq, &bsel, x0, omega, agents, &self.directions)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackDecision<T: Real> {
    pub k: usize,
    pub targets: (usize, usize),
    /// Stacked injection in `R^{2N}`, zero outside the targets.
    pub u_a: DVector<T>,
    pub separation_before: T,
    pub separation_after: T,
    /// Separation predicted for the zero injection.
    pub separation_zero: T,
}

impl<T: Real> AttackDecision<T> {
    pub fn injection(&self, agent: usize) -> Vector2<T> {
        Vector2::new(self.u_a[INPUT_DIM * agent], self.u_a[INPUT_DIM * agent + 1])
    }

    pub fn reaches(&self, d_star: T) -> bool {
        self.separation_after >= d_star
    }
}

/// Pair of agents whose polygons are farthest apart; ties go to the
/// lexicographically smallest pair.
pub fn select_targets<T: Real>(polygons: &[AgentPolygon<T>]) -> Result<(usize, usize)> {
    Ok(select_targets_scored(polygons)?.0)
}

fn select_targets_scored<T: Real>(polygons: &[AgentPolygon<T>]) -> Result<((usize, usize), T)> {
    if polygons.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 agents, got {}", polygons.len())));
    }
    let mut best: Option<((usize, usize), T)> = None;
    for a in 0..polygons.len() {
        for b in a + 1..polygons.len() {
            let d = reachset::polygon_distance(&polygons[a], &polygons[b])?;
            let (i, j) = order(polygons[a].agent, polygons[b].agent);
            best = match best {
                Some((p, v)) if v > d || (v == d && p < (i, j)) => Some((p, v)),
                _ => Some(((i, j), d)),
            };
        }
    }
    Ok(best.expect("at least one pair"))
}

fn order(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// `4N × 2N` injection map with the agent input block at both targets.
pub fn selection_matrix<T: Real>(
    targets: (usize, usize),
    n_agents: usize,
    agent_input: &Matrix4x2<T>,
) -> Result<DMatrix<T>> {
    let (i, j) = targets;
    if i == j {
        return Err(Error::invalid(format!("targets must be distinct, got ({i}, {j})")));
    }
    reachset::channel_map(agent_input, n_agents, &[i, j])
}

/// Picks the injection for `targets` that maximizes next-step reach-set
/// separation under the identified model.
///
/// Candidates are every pair of `omega` vertices (first target's vertex
/// outer) followed by the zero injection; a later candidate replaces the
/// incumbent only if strictly better.
pub fn synthesize_fdi<T: Real>(
    k: usize,
    targets: (usize, usize),
    model: &DmdModel<T>,
    omega: &InputPolytope<T>,
    state: &DVector<T>,
    reach: &ReachParams<T>,
) -> Result<AttackDecision<T>> {
    let n = state.len() / STATE_DIM;
    if state.len() != model.dim() || state.len() % STATE_DIM != 0 {
        return Err(Error::invalid(format!(
            "state has length {}, model expects {}",
            state.len(),
            model.dim()
        )));
    }
    let (i, j) = targets;
    let ba = selection_matrix(targets, n, &reach.agent_input)?;
    let pair = [i, j];

    let separation = |x0: &DVector<T>| -> Result<T> {
        let p = reach.polygons(model, omega, x0, &pair)?;
        reachset::polygon_distance(&p[0], &p[1])
    };
    let separation_before = separation(state)?;
    let drift = &model.k * state;

    let mut candidates = Vec::with_capacity(omega.vertices().len().pow(2) + 1);
    for vi in omega.vertices() {
        for vj in omega.vertices() {
            let mut u = DVector::zeros(n * INPUT_DIM);
            u[INPUT_DIM * i] = vi.x;
            u[INPUT_DIM * i + 1] = vi.y;
            u[INPUT_DIM * j] = vj.x;
            u[INPUT_DIM * j + 1] = vj.y;
            candidates.push(u);
        }
    }
    candidates.push(DVector::zeros(n * INPUT_DIM));

    let mut best: Option<(usize, T)> = None;
    let mut separation_zero = T::zero();
    let last = candidates.len() - 1;
    for (c, u) in candidates.iter().enumerate() {
        let next = &drift + &ba * u;
        let d = separation(&next)?;
        if c == last {
            separation_zero = d;
        }
        if best.is_none_or(|(_, v)| d > v) {
            best = Some((c, d));
        }
    }
    let (c, separation_after) = best.expect("at least the zero candidate");
    Ok(AttackDecision {
        k,
        targets,
        u_a: candidates.swap_remove(c),
        separation_before,
        separation_after,
        separation_zero,
    })
}

/// One full attack step: polygons for all agents, target choice, injection.
pub fn plan_step<T: Real>(
    k: usize,
    model: &DmdModel<T>,
    omega: &InputPolytope<T>,
    state: &DVector<T>,
    reach: &ReachParams<T>,
) -> Result<AttackDecision<T>> {
    let n = state.len() / STATE_DIM;
    let agents: Vec<usize> = (0..n).collect();
    let polygons = reach.polygons(model, omega, state, &agents)?;
    let targets = select_targets(&polygons)?;
    synthesize_fdi(k, targets, model, omega, state, reach)
}

/// Outcome of DoS planning.
#[derive(Clone, Debug, PartialEq)]
pub enum DosPlan<T: Real> {
    Disconnect {
        node: usize,
        edge: (usize, usize),
        /// Recovered graph the decision was made on.
        recovered: Graph,
        lambda2_before: T,
        lambda2_after: T,
    },
    /// The recovered graph is already disconnected; nothing to cut.
    NoOp { recovered: Graph },
}

impl<T: Real> DosPlan<T> {
    pub fn edge(&self) -> Option<(usize, usize)> {
        match self {
            DosPlan::Disconnect { edge, .. } => Some(*edge),
            DosPlan::NoOp { .. } => None,
        }
    }
}

/// Chooses the link to cut from the recovered Laplacian.
///
/// The node is the non-leader with the largest Fiedler-vector magnitude
/// (near-ties go to the highest index); the edge is its incident edge in the
/// thresholded graph whose removal leaves the smallest `λ₂`.
pub fn plan_dos<T: Real>(recovery: &RecoveryResult<T>, edge_threshold: T) -> Result<DosPlan<T>> {
    let l = &recovery.model.l;
    let recovered = Graph::from_laplacian_pattern(l, edge_threshold)?;
    let n = recovered.n_nodes();
    if n < 2 || !recovered.is_connected() {
        return Ok(DosPlan::NoOp { recovered });
    }
    let conn = graph::spectral_connectivity(l)?;
    let mags: Vec<T> = conn.fiedler.iter().map(|v| v.abs()).collect();
    let peak = mags.iter().skip(1).copied().fold(T::zero(), |a, b| a.max(b));
    let tol = T::lit(FIEDLER_TIE_TOL) * peak.max(T::one());
    let node = (1..n)
        .rev()
        .find(|&i| mags[i] >= peak - tol)
        .expect("non-leader nodes exist");

    let lambda2_before = graph::algebraic_connectivity::<T>(&recovered)?.lambda2;
    let mut best: Option<((usize, usize), T)> = None;
    for nb in recovered.neighbors(node) {
        let edge = order(node, nb);
        let cut = recovered.remove_edge(edge.0, edge.1)?;
        let l2 = graph::algebraic_connectivity::<T>(&cut)?.lambda2;
        if best.is_none_or(|(_, v)| l2 < v) {
            best = Some((edge, l2));
        }
    }
    match best {
        Some((edge, lambda2_after)) => Ok(DosPlan::Disconnect {
            node,
            edge,
            recovered,
            lambda2_before,
            lambda2_after,
        }),
        None => Ok(DosPlan::NoOp { recovered }),
    }
}
