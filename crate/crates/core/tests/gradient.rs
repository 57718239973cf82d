mod common;

use common::{fd_check, naive_q, signed_theta, KinkRule};
use disco::dqn::grad_theta;
use disco::embedding::{embed, init_theta, q_values, EmbedConfig};
use disco::graph::NodeId;
use disco::rng::rng_from_seed;

#[test]
fn forward_pass_matches_naive_oracle() {
    let mut rng = rng_from_seed(11);
    for directed in [false, true] {
        let g = common::random_graph(9, 0.3, directed, &mut rng);
        let theta = signed_theta(5, 0.5, &mut rng);
        let seeds = [NodeId(2), NodeId(7)];
        let state = embed(&g, &seeds, &theta, &EmbedConfig::new(3)).unwrap();
        let got = q_values(&state, &theta).unwrap();
        let (want, _) = naive_q(&g, &seeds, &theta, 3);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = rng_from_seed(5);
    let mut points = 0;
    let mut worst: f64 = 0.0;
    while points < 6 {
        let graphs = vec![common::random_graph(8, 0.35, false, &mut rng), common::random_graph(7, 0.3, true, &mut rng)];
        let batch = common::random_batch(&graphs, 4, &mut rng);
        let theta = signed_theta(6, 0.4, &mut rng);
        let grad = grad_theta(&batch, &theta, &graphs, 0.9, EmbedConfig::new(3)).unwrap();
        if let Some(pts) = fd_check(&graphs, &batch, &theta, &grad, 0.9, 3, 1e-5, KinkRule::Margin(1e-4), 20, &mut rng) {
            for p in &pts {
                worst = worst.max(p.rel_err());
            }
            points += 1;
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn positive_init_gradient_matches_central_differences() {
    let mut rng = rng_from_seed(8);
    let graphs = vec![common::random_graph(10, 0.3, false, &mut rng)];
    let batch = common::random_batch(&graphs, 3, &mut rng);
    let theta = init_theta(4, 3).unwrap();
    let grad = grad_theta(&batch, &theta, &graphs, 0.99, EmbedConfig::default()).unwrap();
    let pts = fd_check(&graphs, &batch, &theta, &grad, 0.99, 4, 1e-5, KinkRule::Margin(1e-4), 30, &mut rng).expect("no kinks");
    for p in pts {
        assert!(p.rel_err() <= 1e-4, "{} vs {}", p.analytic, p.numeric);
    }
}
