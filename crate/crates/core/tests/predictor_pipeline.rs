mod common;

use mdcp::dynamics;
use mdcp::graph::{self, RandomModel};
use mdcp::predictor::{self, MemoryWindow, PredictorConfig, PredictorError, Step};
use proptest::prelude::*;
use rand::Rng;

fn scan_config() -> PredictorConfig {
    PredictorConfig {
        scan_columns: Some(60),
        ..PredictorConfig::default()
    }
}

fn padded(a: &[f64], len: usize) -> Vec<f64> {
    let mut v = a.to_vec();
    v.resize(len, 0.0);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// First-order systems: every agent recovers the weighted average from
    /// the spectral projector and reproduces its own samples.
    #[test]
    fn first_order_prediction_matches_oracle(seed: u64) {
        let sys = common::random_system(&mut common::rng(seed), 8, 1);
        let s = sys.system.s;
        let traj = dynamics::simulate(&sys.system, &sys.x0, 150).unwrap();
        let oracle = predictor::spectral_oracle(&sys.system, &sys.x0).unwrap();
        let scale = traj.states.iter().map(|x| x.amax()).fold(0.0, f64::max);
        let mut first: Option<Vec<f64>> = None;
        for agent in 0..sys.system.n {
            let window = MemoryWindow::from_trajectory(&traj, agent);
            let res = predictor::mdcp_run(&window, s, &scan_config()).unwrap();
            prop_assert!(res.pair.rank_drop_is_minimal());
            for l in 1..=s {
                let want = padded(&oracle.polys[agent][l - 1].coeffs, s);
                let got = padded(&res.consensus.orders[l - 1].coeffs, s);
                let err = common::rel(&got, &want);
                prop_assert!(err <= 1e-6, "agent {agent} order {l}: {err:e}");
            }
            let k0 = padded(&res.consensus.orders[0].coeffs, s);
            match &first {
                None => first = Some(k0),
                Some(f) => prop_assert!(common::rel(&k0, f) <= 1e-6),
            }
            for k in 0..=150 {
                let err = (res.predict(1, k as u64) - traj.value(k, agent, 1)).abs() / scale;
                prop_assert!(err <= 1e-6, "deadbeat agent {agent} k {k}: {err:e}");
            }
        }
    }
}

#[test]
fn balanced_first_order_predicts_average() {
    let g = graph::generate_random(RandomModel::Er { rho: 0.5 }, 6, 3).unwrap();
    let sys = dynamics::build_perron(&g, 1, 0.1, -0.3, &[1.0]).unwrap();
    assert!(dynamics::spectral_check(&sys).converges());
    let mut rng = common::rng(5);
    let x0: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..30.0)).collect();
    let mean = x0.iter().sum::<f64>() / 6.0;
    let traj = dynamics::simulate(&sys, &x0, 80).unwrap();
    for agent in 0..6 {
        let res = predictor::mdcp_run(&MemoryWindow::from_trajectory(&traj, agent), 1, &scan_config())
            .unwrap();
        assert_eq!(res.consensus.orders[0].degree(), Some(0));
        assert!((res.consensus.eval(1, 0.0) - mean).abs() <= 1e-8 * mean);
    }
}

#[test]
fn consensus_initialized_window_has_no_disagreement() {
    let g = graph::reference_topology();
    let sys = dynamics::build_perron(&g, 3, 0.1, -0.2, &[2.0, 6.0, 4.0]).unwrap();
    let c = [4.0, -1.5, 0.25];
    let x0: Vec<f64> = c.iter().flat_map(|&v| std::iter::repeat_n(v, 5)).collect();
    let traj = dynamics::simulate(&sys, &x0, 20).unwrap();
    let p = graph::left_eigenvector(&g).unwrap();
    let proj = dynamics::consensus_projection(&p, &x0, 0.1, 3).unwrap();
    let res =
        predictor::mdcp_run(&MemoryWindow::from_trajectory(&traj, 2), 3, &PredictorConfig::default())
            .unwrap();
    assert_eq!(res.pair.degree, 0);
    assert_eq!(res.samples_consumed(), predictor::required_samples(0, 3));
    assert_eq!(res.disagreement.expansion, Default::default());
    for l in 1..=3 {
        let err = common::rel(&res.consensus.orders[l - 1].coeffs, &proj.polynomial(l).coeffs);
        assert!(err <= 1e-12, "order {l}: {err:e}");
    }
}

#[test]
fn higher_orders_are_scaled_differences() {
    let sys = dynamics::reference_system();
    let traj = dynamics::simulate(&sys, &dynamics::reference::X0, 200).unwrap();
    let res = predictor::mdcp_run(&MemoryWindow::from_trajectory(&traj, 0), 4, &scan_config()).unwrap();
    for l in 2..=4 {
        for k in [0u64, 7, 50, 400] {
            let diff = (res.predict(l - 1, k + 1) - res.predict(l - 1, k)) / 0.1;
            let got = res.predict(l, k);
            assert!((got - diff).abs() <= 1e-9 * diff.abs().max(1.0), "order {l} k {k}");
        }
    }
}

#[test]
fn prediction_json_shape() {
    let sys = dynamics::reference_system();
    let traj = dynamics::simulate(&sys, &dynamics::reference::X0, 200).unwrap();
    let res = predictor::mdcp_run(&MemoryWindow::from_trajectory(&traj, 1), 4, &scan_config()).unwrap();
    let text = serde_json::to_string(&res.export()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["agent"], 1);
    assert_eq!(v["degree"].as_u64().unwrap() as usize, res.pair.degree);
    for (l, len) in [("1", 4), ("2", 3), ("3", 2), ("4", 1)] {
        assert_eq!(v["consensus"][l].as_array().unwrap().len(), len);
    }
    for key in ["impulse", "real", "conjugate", "repeated"] {
        assert!(v["disagreement"].get(key).is_some(), "{key}");
    }
    let back: predictor::PredictionJson = serde_json::from_str(&text).unwrap();
    assert_eq!(back, res.export());
}

#[test]
fn pipeline_errors_name_their_step() {
    let window = MemoryWindow {
        agent: 0,
        samples: vec![1.0; 3],
        eps: 0.1,
    };
    let err = predictor::mdcp_run(&window, 0, &PredictorConfig::default()).unwrap_err();
    assert_eq!(err.step, Step::Window);
    let err = predictor::mdcp_run(&window, 4, &PredictorConfig::default()).unwrap_err();
    assert!(matches!(err.source, PredictorError::ShortWindow { required: 5, .. }));
    // white noise satisfies no short recurrence
    let mut rng = common::rng(9);
    let window = MemoryWindow {
        agent: 0,
        samples: (0..30).map(|_| rng.random_range(-1.0..1.0)).collect(),
        eps: 0.1,
    };
    let err = predictor::mdcp_run(&window, 2, &PredictorConfig::default()).unwrap_err();
    assert_eq!(err.step, Step::RankScan);
    assert_eq!(err.step.line(), 2);
}
