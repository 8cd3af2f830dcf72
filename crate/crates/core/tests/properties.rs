//! Property-based invariants.

use nalgebra::{DMatrix, DVector, Matrix4x2, Vector2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ncs_redteam::attack::{self, ReachParams};
use ncs_redteam::dmd::{self, DmdModel};
use ncs_redteam::graph::{self, Graph};
use ncs_redteam::laprec::{self, RecoveryOptions};
use ncs_redteam::ncs::{self, Scenario, StackedState};
use ncs_redteam::polygon::{polygon_distance, ConvexPolygon};
use ncs_redteam::reachset::{self, InputPolytope};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut r = rng(seed);
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|_| r.random_bool(p))
        .collect();
    Graph::new(n, edges).unwrap()
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-scale..scale))
}

fn random_polygon(r: &mut ChaCha8Rng, center: Vector2<f64>) -> ConvexPolygon<f64> {
    let m = r.random_range(3..9);
    let pts: Vec<Vector2<f64>> = (0..m)
        .map(|_| center + Vector2::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect();
    ConvexPolygon::hull(&pts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_is_symmetric_psd_with_zero_rows(n in 2usize..9, p in 0.0f64..1.0, seed in any::<u64>()) {
        let g = random_graph(n, p, seed);
        let l = g.laplacian::<f64>();
        prop_assert_eq!(&l, &l.transpose());
        for i in 0..n {
            prop_assert!(l.row(i).sum().abs() < 1e-12);
        }
        let eig = l.clone().symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&v| v > -1e-9));
        let conn = graph::algebraic_connectivity::<f64>(&g).unwrap();
        prop_assert_eq!(conn.lambda2 > graph::EIGEN_TOL, g.is_connected());
        prop_assert!((conn.fiedler.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn error_dynamics_superpose(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, k in 0usize..400) {
        let s = Scenario::<f64>::five_uav(1);
        let mut r = rng(seed);
        let x1 = DVector::from_fn(20, |_, _| r.random_range(-50.0..50.0));
        let x2 = DVector::from_fn(20, |_, _| r.random_range(-50.0..50.0));
        let aff = ncs::affine_term(&s, k);
        let lin = |x: &DVector<f64>| ncs::step(&s, &StackedState::new(k, x.clone()), None).unwrap().x - &aff;
        let combo = lin(&(&x1 * a + &x2 * b));
        let parts = lin(&x1) * a + lin(&x2) * b;
        prop_assert!((combo - parts).norm() <= 1e-10 * (1.0 + x1.norm() + x2.norm()) * (1.0 + aff.norm()));
    }

    #[test]
    fn step_is_closed_loop_plus_feedthrough(seed in any::<u64>(), k in 0usize..500) {
        let s = Scenario::<f64>::five_uav(seed % 7);
        let mut r = rng(seed);
        let x = DVector::from_fn(20, |_, _| r.random_range(-30.0..30.0));
        let next = ncs::step(&s, &StackedState::new(k, x.clone()), None).unwrap();
        let m = ncs::stacked_closed_loop(&s);
        let expect = &m * &x + ncs::affine_term(&s, k);
        prop_assert!((next.x - expect).norm() <= 1e-10 * (1.0 + x.norm() + k as f64));
    }

    #[test]
    fn dmd_is_least_squares_optimal(seed in any::<u64>(), dim in 2usize..7, cols in 2usize..15) {
        let mut r = rng(seed);
        let x = random_matrix(&mut r, dim, cols, 1.0);
        let xp = random_matrix(&mut r, dim, cols, 1.0);
        let m = dmd::fit_snapshots(&x, &xp, 1e-10).unwrap();
        let base = (&xp - &m.k * &x).norm();
        for _ in 0..5 {
            let e = random_matrix(&mut r, dim, dim, 1e-3);
            let other = (&xp - (&m.k + e) * &x).norm();
            prop_assert!(other >= base - 1e-12);
        }
    }

    #[test]
    fn dmd_recovers_exact_maps(seed in any::<u64>(), dim in 2usize..9) {
        let mut r = rng(seed);
        let mut a = random_matrix(&mut r, dim, dim, 1.0);
        let rho = a.clone().complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max);
        a /= rho.max(1e-3) * 1.05;
        let mut buf = dmd::SnapshotBuffer::new(3 * dim, dim).unwrap();
        let mut v = DVector::from_fn(dim, |_, _| r.random_range(-1.0..1.0));
        // persistent excitation keeps X full rank
        for _ in 0..=3 * dim {
            buf.push(&v).unwrap();
            v = &a * v + DVector::from_fn(dim, |_, _| r.random_range(-1.0..1.0));
        }
        let (x, _) = buf.snapshot_matrices().unwrap();
        let xp = DMatrix::from_columns(&(0..x.ncols()).map(|c| &a * x.column(c)).collect::<Vec<_>>());
        let m = dmd::fit_snapshots(&x, &xp, 1e-12).unwrap();
        prop_assert_eq!(m.rank_used, dim);
        prop_assert!((&m.k - &a).norm() < 1e-8);
    }

    #[test]
    fn reach_sets_contain_sampled_endpoints(seed in any::<u64>(), agents in 1usize..3, h in 1usize..5, s in 3usize..9) {
        let mut r = rng(seed);
        let dim = 4 * agents;
        let k_seq: Vec<DMatrix<f64>> = (0..h).map(|_| random_matrix(&mut r, dim, dim, 0.6)).collect();
        let b = Matrix4x2::from_fn(|_, _| r.random_range(-1.0..1.0));
        let all: Vec<usize> = (0..agents).collect();
        let bsel = reachset::channel_map(&b, agents, &all).unwrap();
        let omega = InputPolytope::circumscribe_ball(r.random_range(0.01..2.0), s, seed).unwrap();
        let x0 = DVector::from_fn(dim, |_, _| r.random_range(-5.0..5.0));
        let dirs = reachset::uniform_directions::<f64>(16);
        let spec = reachset::ReachSpec::compute(&k_seq, &bsel, &x0, &omega, &all, &dirs).unwrap();
        for _ in 0..200 {
            let inputs: Vec<DVector<f64>> = (0..h)
                .map(|_| {
                    let mut u = DVector::zeros(2 * agents);
                    for a in 0..agents {
                        let mut w: Vec<f64> = (0..s).map(|_| r.random::<f64>()).collect();
                        let tot: f64 = w.iter().sum();
                        w.iter_mut().for_each(|x| *x /= tot);
                        let p = omega.vertices().iter().zip(&w).fold(Vector2::zeros(), |acc, (v, c)| acc + v * *c);
                        u[2 * a] = p.x;
                        u[2 * a + 1] = p.y;
                    }
                    u
                })
                .collect();
            let end = reachset::propagate(&k_seq, &bsel, &x0, &inputs);
            for ((a, di), sup) in &spec.supports {
                let d = reachset::lift_direction(&dirs[*di], *a, dim);
                prop_assert!(d.dot(&end) <= sup.gamma + 1e-9 * (1.0 + sup.gamma.abs()));
            }
        }
        for ((a, di), sup) in &spec.supports {
            let d = reachset::lift_direction(&dirs[*di], *a, dim);
            let end = reachset::propagate(&k_seq, &bsel, &x0, &sup.inputs);
            prop_assert!((d.dot(&end) - sup.gamma).abs() <= 1e-9 * (1.0 + sup.gamma.abs()));
            for u in &sup.inputs {
                for c in 0..agents {
                    prop_assert!(omega.contains(&Vector2::new(u[2 * c], u[2 * c + 1]), 1e-12));
                }
            }
        }
    }

    #[test]
    fn larger_budget_never_shrinks_supports(seed in any::<u64>(), alpha in 1.0f64..4.0, h in 1usize..4) {
        let mut r = rng(seed);
        let k_seq: Vec<DMatrix<f64>> = (0..h).map(|_| random_matrix(&mut r, 8, 8, 0.7)).collect();
        let b = Matrix4x2::from_fn(|_, _| r.random_range(-1.0..1.0));
        let bsel = reachset::channel_map(&b, 2, &[0, 1]).unwrap();
        let omega = InputPolytope::regular(0.3, 6, 0.1).unwrap();
        let big = omega.scaled(alpha);
        let x0 = DVector::from_fn(8, |_, _| r.random_range(-5.0..5.0));
        for d in reachset::uniform_directions::<f64>(8) {
            for a in 0..2 {
                let dir = reachset::lift_direction(&d, a, 8);
                let g1 = reachset::reach_support(&k_seq, &bsel, &x0, &omega, &dir).unwrap().gamma;
                let g2 = reachset::reach_support(&k_seq, &bsel, &x0, &big, &dir).unwrap().gamma;
                prop_assert!(g2 >= g1 - 1e-12 * (1.0 + g1.abs()));
            }
        }
    }

    #[test]
    fn polygon_distance_symmetric_and_consistent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut c = || Vector2::new(r.random_range(-4.0..4.0), r.random_range(-4.0..4.0));
        let (cp, cq, cr) = (c(), c(), c());
        let mut r = rng(seed ^ 1);
        let p = random_polygon(&mut r, cp);
        let q = random_polygon(&mut r, cq);
        let s = random_polygon(&mut r, cr);
        let dpq = polygon_distance(&p, &q).unwrap();
        let dqp = polygon_distance(&q, &p).unwrap();
        prop_assert!((dpq - dqp).abs() < 1e-12);
        let diam = q.vertices().iter().flat_map(|a| q.vertices().iter().map(move |b| (a - b).norm())).fold(0.0, f64::max);
        let dps = polygon_distance(&p, &s).unwrap();
        let dqs = polygon_distance(&q, &s).unwrap();
        prop_assert!(dps <= dpq + diam + dqs + 1e-12);
        // vertex-to-vertex distance never undercuts the set distance
        let vmin = p.vertices().iter().flat_map(|a| q.vertices().iter().map(move |b| (a - b).norm())).fold(f64::INFINITY, f64::min);
        prop_assert!(dpq <= vmin + 1e-12);
    }

    #[test]
    fn recovered_laplacian_stays_in_cone(seed in any::<u64>(), n in 2usize..6) {
        let mut r = rng(seed);
        let k = random_matrix(&mut r, 4 * n, 4 * n, 1.0);
        let opts = RecoveryOptions { max_iters: 20, seed, ..Default::default() };
        let res = laprec::recover(&k, &opts).unwrap();
        let l = &res.model.l;
        prop_assert!((l - l.transpose()).norm() < 1e-8);
        for i in 0..n {
            prop_assert!(l.row(i).sum().abs() < 1e-8);
        }
        prop_assert!(l.clone().symmetric_eigenvalues().iter().all(|&v| v > -1e-8));
        for w in res.trace.windows(2) {
            prop_assert!(w[1].best_gamma <= w[0].best_gamma + 1e-12);
        }
        prop_assert!(res.iterations <= 20);
        prop_assert!((laprec::spectral_norm(&(&k - res.model.assemble())) - res.gamma).abs() < 1e-9 * (1.0 + res.gamma));
    }

    #[test]
    fn structure_is_scale_invariant(seed in any::<u64>(), n in 3usize..7, p in 0.3f64..0.9) {
        let g = random_graph(n, p, seed);
        prop_assume!(g.n_edges() > 0);
        let mut r = rng(seed);
        let t0 = random_matrix(&mut r, 4, 4, 1.0);
        let mut s0 = DMatrix::zeros(4 * n, 4 * n);
        for i in 0..n {
            s0.view_mut((4 * i, 4 * i), (4, 4)).copy_from(&random_matrix(&mut r, 4, 4, 1.0));
        }
        let base = g.laplacian::<f64>().kronecker(&t0);
        for alpha in [0.5, 1.0, 2.0] {
            let k = &s0 + &base * alpha;
            let res = laprec::recover(&k, &RecoveryOptions { seed, ..Default::default() }).unwrap();
            prop_assert!(res.gamma < 1e-6, "gamma {}", res.gamma);
            prop_assert_eq!(res.model.graph(0.5).unwrap(), g.clone());
        }
    }

    #[test]
    fn schur_block_matches_spectral_bound(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6, f in 0.5f64..1.5) {
        let mut r = rng(seed);
        let res = random_matrix(&mut r, rows, cols, 1.0);
        let g = laprec::spectral_norm(&res) * f;
        prop_assume!((f - 1.0).abs() > 1e-6);
        prop_assert_eq!(laprec::schur_certificate(&res, g, 1e-12), f > 1.0);
    }

    #[test]
    fn attack_decision_invariants(seed in 0u64..40, k in 60usize..120) {
        let s = Scenario::<f64>::five_uav(seed);
        let mut state = s.initial_state();
        let mut buf = dmd::SnapshotBuffer::new(50, 20).unwrap();
        for _ in 0..k {
            buf.push(&state.x).unwrap();
            state = ncs::step(&s, &state, None).unwrap();
        }
        buf.push(&state.x).unwrap();
        let model: DmdModel<f64> = dmd::fit(&buf, 1e-10).unwrap();
        let reach = ReachParams::new(*s.model.b(), 1, 16).unwrap();
        let omega = InputPolytope::regular(0.05, 8, 0.0).unwrap();
        let d = attack::plan_step(k, &model, &omega, &state.x, &reach).unwrap();
        let again = attack::plan_step(k, &model, &omega, &state.x, &reach).unwrap();
        prop_assert_eq!(&d, &again);
        prop_assert!(d.separation_after >= d.separation_zero);
        let (i, j) = d.targets;
        for a in 0..5 {
            let u = d.injection(a);
            if a == i || a == j {
                prop_assert!(omega.contains(&u, 1e-12));
            } else {
                prop_assert_eq!(u, Vector2::zeros());
            }
        }
    }
}
