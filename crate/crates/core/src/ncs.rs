//! Ground-truth plant: discrete-time double integrators coupled by the
//! distributed formation-control law.
//!
//! Per-agent state is `[x, vx, y, vy]`; stacked states are agent-major.

use nalgebra::{DMatrix, DVector, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Real;

/// Per-agent state dimension.
pub const STATE_DIM: usize = 4;
/// Per-agent input dimension.
pub const INPUT_DIM: usize = 2;

/// Gain printed for the 5-UAV experiment.
pub const FORMATION_GAIN: [[f64; 4]; 2] = [[-0.2263, -0.4712, 0.0, 0.0], [0.0, 0.0, -0.2263, -0.4712]];

/// Default desired positions (meters); leader first.
pub const FORMATION_OFFSETS: [[f64; 2]; 5] = [[0.0, 0.0], [-4.0, -3.0], [4.0, -3.0], [-8.0, 0.0], [8.0, 0.0]];

/// Default formation graph, 0-based (`1-2, 1-3, 2-4, 3-5` in 1-based form).
pub const FORMATION_EDGES: [(usize, usize); 4] = [(0, 1), (0, 2), (1, 3), (2, 4)];

#[derive(Clone, Debug, PartialEq)]
pub struct AgentModel<T: Real> {
    a: Matrix4<T>,
    b: Matrix4x2<T>,
    dt: T,
}

impl<T: Real> AgentModel<T> {
    /// Planar double integrator sampled at `dt` seconds.
    pub fn double_integrator(dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::invalid(format!("sampling period must be positive, got {dt}")));
        }
        let z = T::zero();
        let o = T::one();
        let h = dt * dt * T::lit(0.5);
        #[rustfmt::skip]
        let a = Matrix4::new(
            o, dt, z, z,
            z, o, z, z,
            z, z, o, dt,
            z, z, z, o,
        );
        #[rustfmt::skip]
        let b = Matrix4x2::new(
            h, z,
            dt, z,
            z, h,
            z, dt,
        );
        Ok(AgentModel { a, b, dt })
    }

    pub fn a(&self) -> &Matrix4<T> {
        &self.a
    }

    pub fn b(&self) -> &Matrix4x2<T> {
        &self.b
    }

    pub fn dt(&self) -> T {
        self.dt
    }
}

/// Desired leader state at step `k`: `[-k sin(3k/100), 1, -k cos(3k/100), 1]`.
pub fn reference<T: Real>(k: usize) -> Vector4<T> {
    let kf = T::from_usize_lossy(k);
    let angle = T::lit(3.0) * kf / T::lit(100.0);
    Vector4::new(-kf * angle.sin(), T::one(), -kf * angle.cos(), T::one())
}

pub fn gain_from_rows<T: Real>(rows: &[[f64; 4]; 2]) -> Matrix2x4<T> {
    Matrix2x4::from_fn(|r, c| T::lit(rows[r][c]))
}

/// Stacked state of all agents at step `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedState<T: Real> {
    pub k: usize,
    pub x: DVector<T>,
}

impl<T: Real> StackedState<T> {
    pub fn new(k: usize, x: DVector<T>) -> Self {
        StackedState { k, x }
    }

    pub fn from_agents(k: usize, agents: &[Vector4<T>]) -> Self {
        let mut x = DVector::zeros(agents.len() * STATE_DIM);
        for (i, s) in agents.iter().enumerate() {
            x.fixed_rows_mut::<4>(i * STATE_DIM).copy_from(s);
        }
        StackedState { k, x }
    }

    pub fn n_agents(&self) -> usize {
        self.x.len() / STATE_DIM
    }

    pub fn agent(&self, i: usize) -> Vector4<T> {
        self.x.fixed_rows::<4>(i * STATE_DIM).into_owned()
    }

    pub fn position(&self, i: usize) -> Vector2<T> {
        Vector2::new(self.x[i * STATE_DIM], self.x[i * STATE_DIM + 2])
    }
}

/// Complete description of one formation-control experiment's plant.
#[derive(Clone, Debug)]
pub struct Scenario<T: Real> {
    pub model: AgentModel<T>,
    pub graph: Graph,
    /// Neighbour coupling gain `K_ij` (shared by all pairs).
    pub gain: Matrix2x4<T>,
    /// Leader reference-tracking gain `K_1`.
    pub leader_gain: Matrix2x4<T>,
    /// Desired per-agent states; `x*_ij = x*_i - x*_j`.
    pub formation: Vec<Vector4<T>>,
    pub horizon_steps: usize,
    pub initial_states: Vec<Vector4<T>>,
}

impl<T: Real> Scenario<T> {
    /// The 5-UAV experiment: dt = 0.2 s, 500 steps, printed gain for both
    /// neighbour and leader terms, initial positions uniform in
    /// `[-10, 10]^2` with zero velocity.
    pub fn five_uav(seed: u64) -> Self {
        let model = AgentModel::double_integrator(T::lit(0.2)).expect("positive dt");
        let graph = Graph::new(5, FORMATION_EDGES).expect("valid formation graph");
        let gain = gain_from_rows(&FORMATION_GAIN);
        let formation = FORMATION_OFFSETS
            .iter()
            .map(|p| Vector4::new(T::lit(p[0]), T::zero(), T::lit(p[1]), T::zero()))
            .collect();
        Scenario {
            model,
            graph,
            gain,
            leader_gain: gain,
            formation,
            horizon_steps: 500,
            initial_states: random_initial_states(5, T::lit(10.0), seed),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.formation.len()
    }

    pub fn state_dim(&self) -> usize {
        self.n_agents() * STATE_DIM
    }

    /// Same plant on a different communication graph.
    pub fn with_graph(&self, graph: Graph) -> Result<Self> {
        if graph.n_nodes() != self.n_agents() {
            return Err(Error::invalid(format!(
                "graph has {} nodes, scenario has {} agents",
                graph.n_nodes(),
                self.n_agents()
            )));
        }
        Ok(Scenario {
            graph,
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_agents();
        if n == 0 {
            return Err(Error::config("formation", "at least one agent required"));
        }
        if self.graph.n_nodes() != n {
            return Err(Error::config(
                "edges",
                format!("graph has {} nodes but {} agents are configured", self.graph.n_nodes(), n),
            ));
        }
        if self.initial_states.len() != n {
            return Err(Error::config(
                "initial_states",
                format!("{} initial states for {} agents", self.initial_states.len(), n),
            ));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> StackedState<T> {
        StackedState::from_agents(0, &self.initial_states)
    }

    /// Desired offset `x*_i - x*_j`.
    pub fn offset(&self, i: usize, j: usize) -> Vector4<T> {
        self.formation[i] - self.formation[j]
    }
}

/// Positions uniform in `[-half_width, half_width]^2`, zero velocities.
pub fn random_initial_states<T: Real>(n: usize, half_width: T, seed: u64) -> Vec<Vector4<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = half_width.as_f64();
    (0..n)
        .map(|_| {
            let px = if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
            let py = if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
            Vector4::new(T::lit(px), T::zero(), T::lit(py), T::zero())
        })
        .collect()
}

fn check_dim<T: Real>(s: &Scenario<T>, state: &StackedState<T>) -> Result<()> {
    if state.x.len() != s.state_dim() {
        return Err(Error::invalid(format!(
            "stacked state has length {}, expected {}",
            state.x.len(),
            s.state_dim()
        )));
    }
    Ok(())
}

/// Distributed formation-control inputs, one 2-vector per agent.
///
/// Agent 0 (leader) adds `K_1 (x_0 - x*_k)`; every agent adds
/// `K_ij (x_i - x_j - x*_ij)` over its neighbours.
pub fn control_inputs<T: Real>(s: &Scenario<T>, state: &StackedState<T>) -> Result<Vec<Vector2<T>>> {
    check_dim(s, state)?;
    let n = s.n_agents();
    let agents: Vec<Vector4<T>> = (0..n).map(|i| state.agent(i)).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut u = Vector2::zeros();
        if i == 0 {
            u += s.leader_gain * (agents[0] - reference::<T>(state.k));
        }
        for j in s.graph.neighbors(i) {
            u += s.gain * (agents[i] - agents[j] - s.offset(i, j));
        }
        out.push(u);
    }
    Ok(out)
}

/// Advances the plant one step; `fdi` is an optional stacked actuator
/// injection of length `2N` added to the control inputs.
pub fn step<T: Real>(
    s: &Scenario<T>,
    state: &StackedState<T>,
    fdi: Option<&DVector<T>>,
) -> Result<StackedState<T>> {
    let u = control_inputs(s, state)?;
    step_with_inputs(s, state, &u, fdi)
}

/// Like [`step`] with precomputed control inputs.
pub fn step_with_inputs<T: Real>(
    s: &Scenario<T>,
    state: &StackedState<T>,
    inputs: &[Vector2<T>],
    fdi: Option<&DVector<T>>,
) -> Result<StackedState<T>> {
    check_dim(s, state)?;
    let n = s.n_agents();
    if inputs.len() != n {
        return Err(Error::invalid(format!("{} inputs for {} agents", inputs.len(), n)));
    }
    if let Some(f) = fdi {
        if f.len() != n * INPUT_DIM {
            return Err(Error::invalid(format!(
                "injection has length {}, expected {}",
                f.len(),
                n * INPUT_DIM
            )));
        }
    }
    let a = s.model.a();
    let b = s.model.b();
    let mut next = DVector::zeros(s.state_dim());
    for i in 0..n {
        let mut u = inputs[i];
        if let Some(f) = fdi {
            u += Vector2::new(f[2 * i], f[2 * i + 1]);
        }
        let xi = a * state.agent(i) + b * u;
        next.fixed_rows_mut::<4>(i * STATE_DIM).copy_from(&xi);
    }
    Ok(StackedState::new(state.k + 1, next))
}

/// One-step closed-loop matrix assembled block-wise:
/// block `(i,i) = A + |N_i| B K (+ B K_1 for the leader)`, block `(i,j) = -B K`.
pub fn stacked_closed_loop<T: Real>(s: &Scenario<T>) -> DMatrix<T> {
    let n = s.n_agents();
    let dim = s.state_dim();
    let bk = s.model.b() * s.gain;
    let bk1 = s.model.b() * s.leader_gain;
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..n {
        let nbrs = s.graph.neighbors(i);
        let mut diag = *s.model.a() + bk * T::from_usize_lossy(nbrs.len());
        if i == 0 {
            diag += bk1;
        }
        m.fixed_view_mut::<4, 4>(i * 4, i * 4).copy_from(&diag);
        for j in nbrs {
            m.fixed_view_mut::<4, 4>(i * 4, j * 4).copy_from(&(-bk));
        }
    }
    m
}

/// Affine term `f_k` with `x_{k+1} = M x_k + f_k` for the nominal loop:
/// formation-offset feed-through plus the leader's reference feed-through.
pub fn affine_term<T: Real>(s: &Scenario<T>, k: usize) -> DVector<T> {
    let n = s.n_agents();
    let b = s.model.b();
    let mut f = DVector::zeros(s.state_dim());
    for i in 0..n {
        let mut u = Vector2::zeros();
        if i == 0 {
            u -= s.leader_gain * reference::<T>(k);
        }
        for j in s.graph.neighbors(i) {
            u -= s.gain * s.offset(i, j);
        }
        f.fixed_rows_mut::<4>(i * 4).copy_from(&(b * u));
    }
    f
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> T {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| (c.re * c.re + c.im * c.im).sqrt())
        .fold(T::zero(), |a, b| a.max(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_integrator_matrices() {
        let m = AgentModel::<f64>::double_integrator(0.2).unwrap();
        assert_eq!(m.a().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.2, 0.0, 0.0]);
        assert!((m.b()[(0, 0)] - 0.02).abs() < 1e-15);
        assert_eq!(m.b()[(0, 1)], 0.0);

        let m = AgentModel::<f64>::double_integrator(1.0).unwrap();
        let expect = Matrix4x2::new(0.5, 0.0, 1.0, 0.0, 0.0, 0.5, 0.0, 1.0);
        assert_eq!(*m.b(), expect);

        let m = AgentModel::<f64>::double_integrator(0.5).unwrap();
        assert_eq!(m.a()[(0, 1)], 0.5);
        assert_eq!(m.b()[(0, 0)], 0.125);
    }

    #[test]
    fn double_integrator_rejects_nonpositive_dt() {
        assert!(AgentModel::<f64>::double_integrator(0.0).is_err());
        assert!(AgentModel::<f64>::double_integrator(-0.1).is_err());
    }

    #[test]
    fn reference_values() {
        assert_eq!(reference::<f64>(0), Vector4::new(0.0, 1.0, -0.0, 1.0));
        let r = reference::<f64>(50);
        assert!((r[0] + 50.0 * 1.5f64.sin()).abs() < 1e-12);
        assert!((r[2] + 50.0 * 1.5f64.cos()).abs() < 1e-12);
        let r = reference::<f64>(500);
        assert!((r[0] + 500.0 * 15f64.sin()).abs() < 1e-10);
        assert!((r[2] + 500.0 * 15f64.cos()).abs() < 1e-10);
        assert_eq!((r[1], r[3]), (1.0, 1.0));
    }

    fn two_agent_line() -> Scenario<f64> {
        let mut s = Scenario::<f64>::five_uav(0);
        s.graph = Graph::complete(2).unwrap();
        s.formation = vec![Vector4::zeros(); 2];
        s.initial_states = vec![Vector4::zeros(); 2];
        s
    }

    #[test]
    fn on_formation_inputs_vanish() {
        let s = Scenario::<f64>::five_uav(3);
        let k = 17;
        let r = reference::<f64>(k);
        let agents: Vec<_> = s.formation.iter().map(|f| f + r - s.formation[0]).collect();
        let u = control_inputs(&s, &StackedState::from_agents(k, &agents)).unwrap();
        for ui in u {
            assert!(ui.norm() < 1e-12);
        }
    }

    #[test]
    fn displaced_follower_input() {
        let mut s = two_agent_line();
        s.leader_gain = Matrix2x4::zeros();
        let delta = 0.7;
        let agents = [Vector4::zeros(), Vector4::new(delta, 0.0, 0.0, 0.0)];
        let u = control_inputs(&s, &StackedState::from_agents(0, &agents)).unwrap();
        assert!((u[1][0] + 0.2263 * delta).abs() < 1e-15);
        assert_eq!(u[1][1], 0.0);
    }

    #[test]
    fn single_agent_injection_moves_through_b() {
        let mut s = Scenario::<f64>::five_uav(0);
        s.graph = Graph::empty(1).unwrap();
        s.formation = vec![Vector4::zeros()];
        s.leader_gain = Matrix2x4::zeros();
        let st = StackedState::from_agents(0, &[Vector4::zeros()]);
        let next = step(&s, &st, Some(&DVector::from_vec(vec![1.0, 0.0]))).unwrap();
        assert!((next.x[0] - 0.02).abs() < 1e-15);
        assert!((next.x[1] - 0.2).abs() < 1e-15);
        assert_eq!(next.k, 1);
    }

    #[test]
    fn zero_state_stays_zero_without_reference() {
        let mut s = Scenario::<f64>::five_uav(0);
        s.leader_gain = Matrix2x4::zeros();
        s.formation = vec![Vector4::zeros(); 5];
        let st = StackedState::new(4, DVector::zeros(20));
        let next = step(&s, &st, Some(&DVector::zeros(10))).unwrap();
        assert_eq!(next.x, DVector::zeros(20));
    }

    #[test]
    fn zero_fdi_matches_nominal() {
        let s = Scenario::<f64>::five_uav(9);
        let st = s.initial_state();
        let a = step(&s, &st, None).unwrap();
        let b = step(&s, &st, Some(&DVector::zeros(10))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_dimension_mismatch() {
        let s = Scenario::<f64>::five_uav(0);
        let st = s.initial_state();
        assert!(step(&s, &st, Some(&DVector::zeros(3))).is_err());
        assert!(step(&s, &StackedState::new(0, DVector::zeros(7)), None).is_err());
    }

    #[test]
    fn edgeless_closed_loop_is_block_diagonal_a() {
        let mut s = Scenario::<f64>::five_uav(0);
        s.graph = Graph::empty(5).unwrap();
        s.leader_gain = Matrix2x4::zeros();
        let m = stacked_closed_loop(&s);
        for i in 0..5 {
            for j in 0..5 {
                let blk = m.view((4 * i, 4 * j), (4, 4));
                if i == j {
                    assert_eq!(blk, *s.model.a());
                } else {
                    assert!(blk.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn two_agent_closed_loop_matches_hand_assembly() {
        let s = two_agent_line();
        let a = *s.model.a();
        let bk = s.model.b() * s.gain;
        let mut expect = DMatrix::<f64>::zeros(8, 8);
        expect.view_mut((0, 0), (4, 4)).copy_from(&(a + bk + bk));
        expect.view_mut((4, 4), (4, 4)).copy_from(&(a + bk));
        expect.view_mut((0, 4), (4, 4)).copy_from(&(-bk));
        expect.view_mut((4, 0), (4, 4)).copy_from(&(-bk));
        assert!((stacked_closed_loop(&s) - expect).norm() < 1e-15);
    }

    #[test]
    fn formation_error_dynamics_stable() {
        let s = Scenario::<f64>::five_uav(0);
        let rho = spectral_radius(&stacked_closed_loop(&s));
        assert!(rho < 1.0, "spectral radius {rho}");
    }

    #[test]
    fn step_equals_closed_loop_plus_affine() {
        let s = Scenario::<f64>::five_uav(5);
        let mut st = s.initial_state();
        let m = stacked_closed_loop(&s);
        for _ in 0..20 {
            let next = step(&s, &st, None).unwrap();
            let lin = &m * &st.x + affine_term(&s, st.k);
            assert!((next.x.clone() - lin).norm() <= 1e-10 * (1.0 + next.x.norm()));
            st = next;
        }
    }

    #[test]
    fn seeded_initial_states_in_box() {
        let a = random_initial_states::<f64>(5, 10.0, 42);
        assert_eq!(a, random_initial_states::<f64>(5, 10.0, 42));
        assert_ne!(a, random_initial_states::<f64>(5, 10.0, 43));
        for s in &a {
            assert!(s[0].abs() <= 10.0 && s[2].abs() <= 10.0);
            assert_eq!((s[1], s[3]), (0.0, 0.0));
        }
    }
}
