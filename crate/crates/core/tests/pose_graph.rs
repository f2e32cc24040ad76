mod common;

use common::random_rotation_vector;
use lieopt::lie::element::{Element, Tangent};
use lieopt::lie::Family;
use lieopt::optim::Termination;
use lieopt::pose_graph::{
    chi2, circle_graph, edge_jacobians, edge_residual, optimize_pgo, parse_g2o_str, write_g2o, CircleSpec,
    PgoConfig, Pose,
};
use nalgebra::{Matrix6, Vector3, Vector6};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exp_se3(xi: &Vector6<f64>) -> Pose {
    Element::exp(
        Family::SE3,
        &Tangent {
            rho: Vector3::new(xi[0], xi[1], xi[2]),
            phi: Vector3::new(xi[3], xi[4], xi[5]),
            sigma: 0.0,
        },
    )
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let phi = random_rotation_vector(rng, 3.0);
    let t = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    let mut p = exp_se3(&Vector6::new(0.0, 0.0, 0.0, phi.x, phi.y, phi.z));
    p.t = t;
    p
}

/// Central differences of the edge residual under left perturbations.
fn numeric_edge_jacobians(xi: &Pose, xj: &Pose, z: &Pose) -> (Matrix6<f64>, Matrix6<f64>) {
    let h = 1e-6;
    let mut ji = Matrix6::zeros();
    let mut jj = Matrix6::zeros();
    for c in 0..6 {
        let mut d = Vector6::zeros();
        d[c] = h;
        let plus = exp_se3(&d);
        let minus = exp_se3(&-d);
        ji.set_column(
            c,
            &((edge_residual(&plus.compose(xi), xj, z) - edge_residual(&minus.compose(xi), xj, z)) / (2.0 * h)),
        );
        jj.set_column(
            c,
            &((edge_residual(xi, &plus.compose(xj), z) - edge_residual(xi, &minus.compose(xj), z)) / (2.0 * h)),
        );
    }
    (ji, jj)
}

fn relative(a: &Matrix6<f64>, b: &Matrix6<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

proptest! {
    #[test]
    fn analytic_edge_jacobians_match_central_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi = random_pose(&mut rng);
        let xj = random_pose(&mut rng);
        // measurements near the true relative pose keep the residual away
        // from the rotation cut locus
        let noise = random_rotation_vector(&mut rng, 1.0);
        let z = xi.inverse().compose(&xj).compose(&exp_se3(&Vector6::new(0.1, -0.2, 0.3, noise.x, noise.y, noise.z)));
        let (_, ai, aj) = edge_jacobians(&xi, &xj, &z);
        let (ni, nj) = numeric_edge_jacobians(&xi, &xj, &z);
        prop_assert!(relative(&ai, &ni) < 1e-5, "{}", relative(&ai, &ni));
        prop_assert!(relative(&aj, &nj) < 1e-5, "{}", relative(&aj, &nj));
    }
}

#[test]
fn g2o_round_trip_preserves_values() {
    let (graph, _) = circle_graph(&CircleSpec {
        nodes: 20,
        ..CircleSpec::default()
    })
    .unwrap();
    let text = write_g2o(&graph);
    let back = parse_g2o_str(&text).unwrap();
    assert_eq!(back.nodes.len(), graph.nodes.len());
    assert_eq!(back.edges.len(), graph.edges.len());
    for (id, p) in &graph.nodes {
        let q = &back.nodes[id];
        assert!((p.t - q.t).amax() < 1e-12);
        assert!(p.q.iter().zip(&q.q).all(|(a, b)| (a - b).abs() < 1e-12));
    }
    for (a, b) in graph.edges.iter().zip(&back.edges) {
        assert_eq!((a.from, a.to), (b.from, b.to));
        assert!((a.measurement.t - b.measurement.t).amax() < 1e-12);
        assert!((a.information - b.information).amax() < 1e-12 * a.information.amax());
    }
    assert!((chi2(&graph) - chi2(&back)).abs() < 1e-9 * chi2(&graph));
}

#[test]
fn circle_optimisation_is_monotone_and_keeps_the_anchor() {
    let (graph, truth) = circle_graph(&CircleSpec::default()).unwrap();
    let config = PgoConfig {
        steps: 50,
        ..PgoConfig::default()
    };
    let (out, stats) = optimize_pgo(&graph, &config).unwrap();
    assert!(stats.final_chi2 / stats.initial_chi2 < 1e-3, "{stats:?}");
    assert!(stats.iterations <= 50);
    assert!(stats.history.windows(2).all(|w| w[1] <= w[0]), "{:?}", stats.history);

    let anchor = graph.anchor.unwrap();
    let (a, b) = (&graph.nodes[&anchor], &out.nodes[&anchor]);
    assert_eq!(a.t.as_slice(), b.t.as_slice());
    assert_eq!(a.q, b.q);

    // the optimum lies closer to the ground truth than the odometry chain
    let err = |g: &lieopt::pose_graph::PoseGraph| -> f64 {
        g.nodes.iter().map(|(id, p)| (p.t - truth.nodes[id].t).norm()).fold(0.0, f64::max)
    };
    assert!(err(&out) < err(&graph));
}

#[test]
fn optimum_is_gauge_covariant() {
    let (graph, _) = circle_graph(&CircleSpec {
        nodes: 30,
        seed: 4,
        ..CircleSpec::default()
    })
    .unwrap();
    let g = exp_se3(&Vector6::new(1.0, -2.0, 0.5, 0.3, -0.2, 0.9));
    let (a, sa) = optimize_pgo(&graph, &PgoConfig::default()).unwrap();
    let (b, sb) = optimize_pgo(&graph.transformed(&g), &PgoConfig::default()).unwrap();
    assert!((sa.initial_chi2 - sb.initial_chi2).abs() < 1e-9 * sa.initial_chi2);
    assert!((sa.final_chi2 - sb.final_chi2).abs() < 1e-6 * sa.initial_chi2);
    for (id, p) in &a.nodes {
        let moved = g.compose(p);
        assert!((moved.t - b.nodes[id].t).amax() < 1e-6, "node {id}");
    }
}

#[test]
fn numeric_and_analytic_jacobians_reach_the_same_optimum() {
    let (graph, _) = circle_graph(&CircleSpec {
        nodes: 12,
        seed: 2,
        ..CircleSpec::default()
    })
    .unwrap();
    let (_, analytic) = optimize_pgo(&graph, &PgoConfig::default()).unwrap();
    let (_, numeric) = optimize_pgo(
        &graph,
        &PgoConfig {
            numeric_jacobian: true,
            ..PgoConfig::default()
        },
    )
    .unwrap();
    assert!(!matches!(analytic.termination, Termination::Error(_)));
    assert!((analytic.final_chi2 - numeric.final_chi2).abs() < 1e-6 * analytic.initial_chi2);
}

#[test]
fn robust_kernel_downweights_a_false_loop_closure() {
    let (mut graph, truth) = circle_graph(&CircleSpec {
        nodes: 30,
        seed: 1,
        ..CircleSpec::default()
    })
    .unwrap();
    // a bogus closure claiming node 15 coincides with node 0
    let info = graph.edges[0].information;
    graph.add_edge(0, 15, Pose::identity(), info).unwrap();
    let worst = |g: &lieopt::pose_graph::PoseGraph| -> f64 {
        g.nodes.iter().map(|(id, p)| (p.t - truth.nodes[id].t).norm()).fold(0.0, f64::max)
    };
    let (plain, _) = optimize_pgo(&graph, &PgoConfig::default()).unwrap();
    let (robust, _) = optimize_pgo(
        &graph,
        &PgoConfig {
            kernel: lieopt::optim::Kernel::Cauchy(1.0),
            ..PgoConfig::default()
        },
    )
    .unwrap();
    assert!(worst(&robust) < worst(&plain), "{} vs {}", worst(&robust), worst(&plain));
}
