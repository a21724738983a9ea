//! Behavior of the forward pass and inference: candidate counts, clamping,
//! permutation equivariance, selection soundness, and agreement between the
//! tensor-op loss and the scalar loss kernel.

use gridflow_autodiff::engine::{Engine, EvalEngine};
use gridflow_core::loss::loss_report;
use gridflow_core::network::{Bus, BusType, Network};
use gridflow_core::synth::{
    assign_node_types, case_rng, generate_topology, sample_supply_task, GeneratorParams,
};
use gridflow_neural::bundle::state_matrix;
use gridflow_neural::forward::{bind_params, candidate_train_loss, forward, ForwardCtx};
use gridflow_neural::{infer_best, randomize_start, CaseBundle, ModelConfig, ModelParams};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_cfg() -> ModelConfig {
    ModelConfig { d: 12, iterations_train: 4, iterations_infer: 6, restarts_infer: 3, ..ModelConfig::default() }
}

fn random_case(seed: u64, n: usize) -> Network<f64> {
    let mut params = GeneratorParams::synthetic_mv();
    params.topology.n_buses = gridflow_core::synth::CountRange(n, n);
    params.supply.pv_node_fraction = 0.2;
    let mut rng = case_rng(seed, 0);
    let net = generate_topology::<f64>(&params.topology, &mut rng);
    let net = assign_node_types(net, &params.supply, &mut rng);
    sample_supply_task(net, &params.supply, &mut rng)
}

fn random_params(cfg: &ModelConfig, seed: u64) -> ModelParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams::init(cfg, &mut rng)
}

fn run_forward(
    bundle: &CaseBundle<f64>,
    params: &ModelParams<f64>,
    cfg: &ModelConfig,
    iterations: usize,
    noise_seed: u64,
) -> Vec<gridflow_autodiff::Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let start = randomize_start(&bundle.flat, &cfg.noise, &mut rng);
    let features = bundle.features(&start);
    let mut e = EvalEngine;
    let bound = bind_params(&mut e, params, cfg.leaky_slope, false);
    let ctx = ForwardCtx {
        graph: &bundle.graph,
        residuals: &bundle.residuals,
        unknown_mask: &bundle.unknown_mask,
        known_values: &bundle.known_values,
    };
    forward(&mut e, &bound, &ctx, &features, &state_matrix(&bundle.flat), iterations)
        .iter()
        .map(|c| e.to_tensor(c))
        .collect()
}

#[test]
fn one_iteration_one_candidate() {
    let cfg = tiny_cfg();
    let bundle = CaseBundle::new(random_case(1, 6)).unwrap();
    let params = random_params(&cfg, 1);
    let candidates = run_forward(&bundle, &params, &cfg, 1, 7);
    assert_eq!(candidates.len(), 1);
}

#[test]
fn candidates_respect_known_values_exactly() {
    let cfg = tiny_cfg();
    let bundle = CaseBundle::new(random_case(2, 9)).unwrap();
    let params = random_params(&cfg, 2);
    for cand in run_forward(&bundle, &params, &cfg, 5, 3) {
        let state = bundle.candidate_state(&cand);
        for i in 0..bundle.n_buses() {
            let k = state.known[i];
            if k.p {
                assert_eq!(state.p[i], bundle.flat.p[i]);
            }
            if k.q {
                assert_eq!(state.q[i], bundle.flat.q[i]);
            }
            if k.vm {
                assert_eq!(state.vm[i], bundle.flat.vm[i]);
            }
            if k.va {
                assert_eq!(state.va[i], bundle.flat.va[i]);
            }
            assert!(state.p[i].is_finite() && state.vm[i].is_finite());
        }
    }
}

#[test]
fn permutation_equivariance_of_losses() {
    let cfg = tiny_cfg();
    let net = random_case(3, 8);
    let params = random_params(&cfg, 3);
    let bundle = CaseBundle::new(net.clone()).unwrap();

    // reverse the bus order (slack moves to the end)
    let n = net.buses.len();
    let perm: Vec<usize> = (0..n).rev().collect();
    let mut pnet = net.clone();
    pnet.buses = perm.iter().map(|&i| net.buses[i].clone()).collect();
    let pbundle = CaseBundle::new(pnet).unwrap();

    // one noised start, permuted consistently
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let start = randomize_start(&bundle.flat, &cfg.noise, &mut rng);
    let mut pstart = pbundle.flat.clone();
    for (new_i, &old_i) in perm.iter().enumerate() {
        pstart.p[new_i] = start.p[old_i];
        pstart.q[new_i] = start.q[old_i];
        pstart.vm[new_i] = start.vm[old_i];
        pstart.va[new_i] = start.va[old_i];
    }

    let losses = |b: &CaseBundle<f64>, s: &gridflow_core::GridState<f64>| -> Vec<f64> {
        let mut e = EvalEngine;
        let bound = bind_params(&mut e, &params, cfg.leaky_slope, false);
        let ctx = ForwardCtx {
            graph: &b.graph,
            residuals: &b.residuals,
            unknown_mask: &b.unknown_mask,
            known_values: &b.known_values,
        };
        let features = b.features(s);
        forward(&mut e, &bound, &ctx, &features, &state_matrix(&b.flat), 5)
            .iter()
            .map(|c| {
                let state = b.candidate_state(&e.to_tensor(c));
                loss_report(&b.net, &b.ybus, &state).unwrap().total
            })
            .collect()
    };

    let original = losses(&bundle, &start);
    let permuted = losses(&pbundle, &pstart);
    for (a, b) in original.iter().zip(&permuted) {
        assert!((a - b).abs() <= 1e-9, "losses diverge: {a} vs {b}");
    }
}

#[test]
fn tensor_loss_matches_scalar_kernel() {
    let cfg = tiny_cfg();
    let bundle = CaseBundle::new(random_case(4, 10)).unwrap();
    let params = random_params(&cfg, 4);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let start = randomize_start(&bundle.flat, &cfg.noise, &mut rng);
    let features = bundle.features(&start);
    let mut e = EvalEngine;
    let bound = bind_params(&mut e, &params, cfg.leaky_slope, false);
    let ctx = ForwardCtx {
        graph: &bundle.graph,
        residuals: &bundle.residuals,
        unknown_mask: &bundle.unknown_mask,
        known_values: &bundle.known_values,
    };
    let candidates = forward(&mut e, &bound, &ctx, &features, &state_matrix(&bundle.flat), 3);
    for cand in &candidates {
        let tensor_loss = candidate_train_loss(&mut e, &ctx, cand).scalar_value();
        let state = bundle.candidate_state(&e.to_tensor(cand));
        let report = loss_report(&bundle.net, &bundle.ybus, &state).unwrap();
        assert!(
            (tensor_loss - report.train).abs() <= 1e-12 * report.train.abs().max(1.0),
            "{tensor_loss} vs {}",
            report.train
        );
    }
}

#[test]
fn infer_examines_the_full_budget_and_reports_reproducible_loss() {
    let cfg = ModelConfig { d: 10, iterations_infer: 50, restarts_infer: 10, ..ModelConfig::default() };
    let bundle = CaseBundle::new(random_case(5, 7)).unwrap();
    let params = random_params(&cfg, 5);
    let inf = infer_best(&bundle, &params, &cfg, 17);
    assert_eq!(inf.candidates_examined, 500);
    // independent re-evaluation of the returned state
    let report = loss_report(&bundle.net, &bundle.ybus, &inf.state).unwrap();
    assert!((report.total - inf.loss.total).abs() <= 1e-9);
    assert!(inf.best_iteration < 50 && inf.best_restart < 10);
}

#[test]
fn more_restarts_never_increase_the_returned_loss() {
    let base = ModelConfig { d: 10, iterations_infer: 8, ..ModelConfig::default() };
    let bundle = CaseBundle::new(random_case(6, 8)).unwrap();
    let params = random_params(&base, 6);
    let mut last = f64::INFINITY;
    for restarts in [1usize, 2, 5, 10] {
        let cfg = ModelConfig { restarts_infer: restarts, ..base.clone() };
        let inf = infer_best(&bundle, &params, &cfg, 23);
        assert!(
            inf.loss.total <= last + 1e-12,
            "restarts {restarts} worsened the loss: {} > {last}",
            inf.loss.total
        );
        last = inf.loss.total;
    }
}

#[test]
fn slack_only_net_still_forwards() {
    // degenerate single-bus network: no branches, no PQ rows
    let net = Network {
        base_mva: 10.0,
        buses: vec![Bus { id: 0, bus_type: BusType::Slack, p: 0.0, q: 0.0, vm: 1.0, va: 0.0, base_kv: 20.0 }],
        branches: vec![],
    };
    let cfg = tiny_cfg();
    let bundle = CaseBundle::new(net).unwrap();
    let params = random_params(&cfg, 7);
    let candidates = run_forward(&bundle, &params, &cfg, 2, 9);
    assert_eq!(candidates.len(), 2);
    let state = bundle.candidate_state(&candidates[1]);
    assert_eq!(state.vm[0], 1.0);
}
