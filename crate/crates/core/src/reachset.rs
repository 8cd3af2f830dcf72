//! Outer polytopic reachable sets of an identified linear model under
//! bounded actuator injections.
//!
//! Each query direction is answered exactly: the costate is propagated
//! backwards through the transposed one-step maps, the maximizing input at
//! every step is an input-polytope vertex, and the support point is
//! propagated forwards. Per-agent position polygons are intersections of the
//! supporting halfspaces in the agent's `(x, y)` plane.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix4x2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ncs::{INPUT_DIM, STATE_DIM};
use crate::polygon::{ConvexPolygon, Halfspace};
use crate::scalar::Real;

/// Default number of planar query directions per agent.
pub const DEFAULT_DIRECTIONS: usize = 16;

/// Planar input polytope circumscribing the disc of radius `rho`.
///
/// `faces[i]` is the supporting line between `vertices[i-1]` and `vertices[i]`
/// (indices mod `s`); vertices are counter-clockwise.
#[derive(Clone, Debug, PartialEq)]
pub struct InputPolytope<T: Real> {
    vertices: Vec<Vector2<T>>,
    faces: Vec<Halfspace<T>>,
    rho: T,
}

impl<T: Real> InputPolytope<T> {
    /// Tangent polygon with face normals at the given angles (radians,
    /// ascending, consecutive gaps below π).
    fn tangent(rho: T, normal_angles: &[T]) -> Result<Self> {
        let s = normal_angles.len();
        if s < 3 {
            return Err(Error::invalid(format!("input polytope needs s >= 3 faces, got {s}")));
        }
        if !(rho > T::zero()) {
            return Err(Error::invalid(format!("budget rho must be positive, got {rho}")));
        }
        let faces: Vec<Halfspace<T>> = normal_angles
            .iter()
            .map(|&a| Halfspace::new(Vector2::new(a.cos(), a.sin()), rho))
            .collect();
        let mut vertices = Vec::with_capacity(s);
        for i in 0..s {
            let a0 = normal_angles[i];
            let mut a1 = normal_angles[(i + 1) % s];
            if i + 1 == s {
                a1 += T::two_pi();
            }
            let half = (a1 - a0) * T::lit(0.5);
            if !(half < T::frac_pi_2()) {
                return Err(Error::invalid("face normals leave a gap of π or more"));
            }
            let mid = a0 + half;
            let r = rho / half.cos();
            vertices.push(Vector2::new(r * mid.cos(), r * mid.sin()));
        }
        Ok(InputPolytope { vertices, faces, rho })
    }

    /// Regular `s`-gon with a face normal at angle `phase`; `s = 4`,
    /// `phase = 0` gives the axis-aligned square `|u_x|, |u_y| ≤ rho`.
    pub fn regular(rho: T, s: usize, phase: T) -> Result<Self> {
        let angles: Vec<T> = (0..s)
            .map(|i| phase + T::two_pi() * T::from_usize_lossy(i) / T::from_usize_lossy(s.max(1)))
            .collect();
        Self::tangent(rho, &angles)
    }

    /// Polygon with `s` randomly placed (seeded) faces, each tangent to the
    /// `rho`-disc, so the disc is circumscribed.
    pub fn circumscribe_ball(rho: T, s: usize, seed: u64) -> Result<Self> {
        if s < 3 {
            return Err(Error::invalid(format!("input polytope needs s >= 3 faces, got {s}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let step = std::f64::consts::TAU / s as f64;
        let phase: f64 = rng.random_range(0.0..step);
        let angles: Vec<T> = (0..s)
            .map(|i| T::lit(phase + (i as f64 + rng.random_range(-0.2..0.2)) * step))
            .collect();
        Self::tangent(rho, &angles)
    }

    /// Degenerate polytope `{0}` used for a zero budget.
    pub fn origin() -> Self {
        InputPolytope {
            vertices: vec![Vector2::zeros()],
            faces: Vec::new(),
            rho: T::zero(),
        }
    }

    pub fn vertices(&self) -> &[Vector2<T>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Halfspace<T>] {
        &self.faces
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn is_origin(&self) -> bool {
        self.faces.is_empty()
    }

    /// Copy scaled by `alpha > 0`.
    pub fn scaled(&self, alpha: T) -> Self {
        InputPolytope {
            vertices: self.vertices.iter().map(|v| v * alpha).collect(),
            faces: self
                .faces
                .iter()
                .map(|f| Halfspace::new(f.normal, f.offset * alpha))
                .collect(),
            rho: self.rho * alpha,
        }
    }

    pub fn contains(&self, u: &Vector2<T>, slack: T) -> bool {
        if self.is_origin() {
            return u.norm() <= slack;
        }
        self.faces.iter().all(|f| f.violation(u) <= slack)
    }

    /// Smallest distance from the origin to a face line.
    pub fn inradius(&self) -> T {
        self.faces
            .iter()
            .map(|f| f.offset / f.normal.norm())
            .fold(T::max_value().unwrap_or(T::one()), |a, b| a.min(b))
    }

    /// First vertex maximizing `⟨c, v⟩`.
    pub fn argmax(&self, c: &Vector2<T>) -> usize {
        let mut best = 0;
        let mut val = c.dot(&self.vertices[0]);
        for (i, v) in self.vertices.iter().enumerate().skip(1) {
            let d = c.dot(v);
            if d > val {
                val = d;
                best = i;
            }
        }
        best
    }
}

/// Injection map `4N × 2N` with agent `B` blocks at the listed agents.
pub fn channel_map<T: Real>(b: &Matrix4x2<T>, n_agents: usize, agents: &[usize]) -> Result<DMatrix<T>> {
    let mut m = DMatrix::zeros(n_agents * STATE_DIM, n_agents * INPUT_DIM);
    for &i in agents {
        if i >= n_agents {
            return Err(Error::invalid(format!("agent {i} out of range for {n_agents} agents")));
        }
        m.fixed_view_mut::<4, 2>(i * STATE_DIM, i * INPUT_DIM).copy_from(b);
    }
    Ok(m)
}

/// Lifts a planar direction onto agent `agent`'s position coordinates.
pub fn lift_direction<T: Real>(dir: &Vector2<T>, agent: usize, dim: usize) -> DVector<T> {
    let mut d = DVector::zeros(dim);
    d[agent * STATE_DIM] = dir.x;
    d[agent * STATE_DIM + 2] = dir.y;
    d
}

/// `m` unit directions at angles `2πk/m`.
pub fn uniform_directions<T: Real>(m: usize) -> Vec<Vector2<T>> {
    (0..m)
        .map(|k| {
            let a = T::two_pi() * T::from_usize_lossy(k) / T::from_usize_lossy(m);
            Vector2::new(a.cos(), a.sin())
        })
        .collect()
}

/// Answer to one support query.
#[derive(Clone, Debug, PartialEq)]
pub struct Support<T: Real> {
    /// Support value `⟨final_dir, point⟩`.
    pub gamma: T,
    /// Support point at the final step.
    pub point: DVector<T>,
    /// Maximizing stacked inputs, one `2N` vector per step.
    pub inputs: Vec<DVector<T>>,
}

/// Support function of the `h`-step reach set of
/// `x_{k+1} = K_k x_k + Bsel u_k` from the singleton `{x0}`, where each
/// consecutive pair of `u_k`'s entries ranges over `omega`.
pub fn reach_support<T: Real>(
    k_seq: &[DMatrix<T>],
    bsel: &DMatrix<T>,
    x0: &DVector<T>,
    omega: &InputPolytope<T>,
    final_dir: &DVector<T>,
) -> Result<Support<T>> {
    let h = k_seq.len();
    if h == 0 {
        return Err(Error::invalid("reach horizon must be at least one step"));
    }
    let dim = x0.len();
    if final_dir.len() != dim || bsel.nrows() != dim || bsel.ncols() % INPUT_DIM != 0 {
        return Err(Error::invalid("dimension mismatch between state, direction and injection map"));
    }
    if k_seq.iter().any(|k| k.nrows() != dim || k.ncols() != dim) {
        return Err(Error::invalid("one-step matrices must be square with the state dimension"));
    }

    // λ_h = d, λ_k = K_kᵀ λ_{k+1}; costates[k] holds λ_{k+1}.
    let mut costates = vec![DVector::zeros(dim); h];
    let mut lam = final_dir.clone();
    for k in (0..h).rev() {
        costates[k] = lam.clone();
        lam = k_seq[k].transpose() * lam;
    }

    let channels = bsel.ncols() / INPUT_DIM;
    let mut x = x0.clone();
    let mut inputs = Vec::with_capacity(h);
    for k in 0..h {
        let weight = bsel.transpose() * &costates[k];
        let mut u = DVector::zeros(bsel.ncols());
        for c in 0..channels {
            let w = Vector2::new(weight[2 * c], weight[2 * c + 1]);
            let v = omega.vertices()[omega.argmax(&w)];
            u[2 * c] = v.x;
            u[2 * c + 1] = v.y;
        }
        x = &k_seq[k] * x + bsel * &u;
        inputs.push(u);
    }
    Ok(Support {
        gamma: final_dir.dot(&x),
        point: x,
        inputs,
    })
}

/// Propagates `x0` under a given input sequence (no maximization).
pub fn propagate<T: Real>(k_seq: &[DMatrix<T>], bsel: &DMatrix<T>, x0: &DVector<T>, inputs: &[DVector<T>]) -> DVector<T> {
    let mut x = x0.clone();
    for (k, u) in k_seq.iter().zip(inputs) {
        x = k * x + bsel * u;
    }
    x
}

/// Support queries collected for a set of agents.
#[derive(Clone, Debug)]
pub struct ReachSpec<T: Real> {
    pub directions: Vec<Vector2<T>>,
    pub horizon: usize,
    /// `(agent, direction index) → support`.
    pub supports: BTreeMap<(usize, usize), Support<T>>,
}

impl<T: Real> ReachSpec<T> {
    /// Runs every `(agent, direction)` query.
    pub fn compute(
        k_seq: &[DMatrix<T>],
        bsel: &DMatrix<T>,
        x0: &DVector<T>,
        omega: &InputPolytope<T>,
        agents: &[usize],
        directions: &[Vector2<T>],
    ) -> Result<Self> {
        let mut supports = BTreeMap::new();
        for &a in agents {
            for (di, d) in directions.iter().enumerate() {
                let lifted = lift_direction(d, a, x0.len());
                supports.insert((a, di), reach_support(k_seq, bsel, x0, omega, &lifted)?);
            }
        }
        Ok(ReachSpec {
            directions: directions.to_vec(),
            horizon: k_seq.len(),
            supports,
        })
    }

    pub fn polygon(&self, agent: usize) -> Result<AgentPolygon<T>> {
        let pairs: Vec<(Vector2<T>, T)> = (0..self.directions.len())
            .map(|di| {
                self.supports
                    .get(&(agent, di))
                    .map(|s| (self.directions[di], s.gamma))
                    .ok_or_else(|| Error::NotFound(format!("support for agent {agent}, direction {di}")))
            })
            .collect::<Result<_>>()?;
        agent_polygon(agent, &pairs)
    }
}

/// Agent's planar position reach polygon.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentPolygon<T: Real> {
    pub agent: usize,
    pub halfspaces: Vec<Halfspace<T>>,
    pub polygon: ConvexPolygon<T>,
}

impl<T: Real> AgentPolygon<T> {
    pub fn vertices(&self) -> &[Vector2<T>] {
        self.polygon.vertices()
    }
}

/// Intersection of `{p : ⟨d_k, p⟩ ≤ γ_k}` over the supplied `(d_k, γ_k)`.
pub fn agent_polygon<T: Real>(agent: usize, supports: &[(Vector2<T>, T)]) -> Result<AgentPolygon<T>> {
    let halfspaces: Vec<Halfspace<T>> = supports.iter().map(|&(d, g)| Halfspace::new(d, g)).collect();
    let polygon = ConvexPolygon::from_halfspaces(&halfspaces)?;
    Ok(AgentPolygon {
        agent,
        halfspaces,
        polygon,
    })
}

/// Position polygons of `agents` for the `h`-step reach set from `x0`.
pub fn reach_polygons<T: Real>(
    k_seq: &[DMatrix<T>],
    bsel: &DMatrix<T>,
    x0: &DVector<T>,
    omega: &InputPolytope<T>,
    agents: &[usize],
    directions: &[Vector2<T>],
) -> Result<Vec<AgentPolygon<T>>> {
    let spec = ReachSpec::compute(k_seq, bsel, x0, omega, agents, directions)?;
    agents.iter().map(|&a| spec.polygon(a)).collect()
}

/// Euclidean distance between two agent polygons.
pub fn polygon_distance<T: Real>(p: &AgentPolygon<T>, q: &AgentPolygon<T>) -> Result<T> {
    crate::polygon::polygon_distance(&p.polygon, &q.polygon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_square() {
        let p = InputPolytope::<f64>::regular(0.3, 4, 0.0).unwrap();
        let normals: Vec<_> = p.faces().iter().map(|f| f.normal).collect();
        for n in [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0), Vector2::new(-1.0, 0.0), Vector2::new(0.0, -1.0)] {
            assert!(normals.iter().any(|m| (m - n).norm() < 1e-12));
        }
        for f in p.faces() {
            assert!((f.offset - 0.3).abs() < 1e-15);
        }
        for v in p.vertices() {
            assert!((v.x.abs() - 0.3).abs() < 1e-12 && (v.y.abs() - 0.3).abs() < 1e-12);
        }
        // edge midpoints touch the disc
        let n = p.vertices().len();
        for i in 0..n {
            let mid = (p.vertices()[i] + p.vertices()[(i + 1) % n]) * 0.5;
            assert!((mid.norm() - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn faces_contain_own_vertices() {
        let p = InputPolytope::<f64>::circumscribe_ball(0.05, 8, 7).unwrap();
        let s = p.n_faces();
        for f in p.faces() {
            for v in p.vertices() {
                assert!(f.violation(v) <= 1e-15);
            }
        }
        for (i, f) in p.faces().iter().enumerate() {
            assert!(f.violation(&p.vertices()[i]).abs() < 1e-14);
            assert!(f.violation(&p.vertices()[(i + s - 1) % s]).abs() < 1e-14);
        }
        assert!(p.inradius() >= 0.05 - 1e-15);
    }

    #[test]
    fn polytope_rejects_few_faces() {
        assert!(InputPolytope::<f64>::circumscribe_ball(0.05, 2, 0).is_err());
        assert!(InputPolytope::<f64>::circumscribe_ball(0.0, 8, 0).is_err());
    }

    #[test]
    fn circumscription_seeded() {
        let a = InputPolytope::<f64>::circumscribe_ball(0.05, 8, 1).unwrap();
        let b = InputPolytope::<f64>::circumscribe_ball(0.05, 8, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, InputPolytope::<f64>::circumscribe_ball(0.05, 8, 2).unwrap());
    }

    #[test]
    fn no_channel_is_point_propagation() {
        let k = DMatrix::<f64>::from_fn(4, 4, |r, c| ((r * 3 + c) as f64).sin() * 0.5);
        let x0 = DVector::from_vec(vec![1.0, -1.0, 2.0, 0.5]);
        let b = DMatrix::zeros(4, 2);
        let omega = InputPolytope::regular(1.0, 4, 0.0).unwrap();
        let d = DVector::from_vec(vec![0.6, 0.0, 0.8, 0.0]);
        let s = reach_support(&[k.clone(), k.clone()], &b, &x0, &omega, &d).unwrap();
        let expect = d.dot(&(&k * &k * &x0));
        assert!((s.gamma - expect).abs() < 1e-12);

        let dirs = uniform_directions::<f64>(8);
        let polys = reach_polygons(&[k.clone()], &b, &x0, &omega, &[0], &dirs).unwrap();
        let p = &k * &x0;
        for v in polys[0].vertices() {
            assert!((v - Vector2::new(p[0], p[2])).norm() < 1e-9);
        }
    }

    #[test]
    fn one_step_square_minkowski() {
        let rho = 0.25;
        let k = DMatrix::<f64>::identity(4, 4);
        let b = crate::ncs::AgentModel::<f64>::double_integrator(0.2).unwrap();
        let bsel = channel_map(b.b(), 1, &[0]).unwrap();
        let omega = InputPolytope::regular(rho, 4, 0.0).unwrap();
        let x0 = DVector::from_vec(vec![3.0, 1.0, -2.0, 0.0]);
        let d = lift_direction(&Vector2::new(1.0, 0.0), 0, 4);
        let s = reach_support(&[k], &bsel, &x0, &omega, &d).unwrap();
        assert!((s.gamma - (3.0 + rho * 0.02)).abs() < 1e-15);
    }

    #[test]
    fn disc_supports_give_circumscribed_octagon() {
        let dirs = uniform_directions::<f64>(8);
        let pairs: Vec<_> = dirs.iter().map(|&d| (d, 1.0)).collect();
        let p = agent_polygon(0, &pairs).unwrap();
        assert_eq!(p.vertices().len(), 8);
        let r = 1.0 / (std::f64::consts::PI / 8.0).cos();
        for v in p.vertices() {
            assert!((v.norm() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn non_spanning_directions_error() {
        let pairs = [
            (Vector2::new(1.0, 0.0), 1.0),
            (Vector2::new(0.0, 1.0), 1.0),
            (Vector2::new(0.7071, 0.7071), 1.0),
        ];
        assert!(matches!(agent_polygon(0, &pairs), Err(Error::DegenerateGeometry(_))));
    }
}
