//! Training-loop behavior: determinism, loss reduction against the flat
//! start, and fine-tuning semantics. These run a genuinely small model so
//! the suite stays fast; the full-scale run lives in the acceptance suite.

use gridflow_core::loss::loss_report;
use gridflow_core::state::flat_state;
use gridflow_core::synth::{
    assign_node_types, case_rng, generate_topology, sample_supply_task, CountRange,
    GeneratorParams,
};
use gridflow_neural::{
    fine_tune, train, CaseBundle, LossMode, ModelConfig, ModelParams, NoiseSpec, TrainOptions,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn make_cases(count: usize, lo: usize, hi: usize, seed: u64) -> Vec<CaseBundle<f64>> {
    let mut params = GeneratorParams::synthetic_mv();
    params.topology.n_buses = CountRange(lo, hi);
    (0..count)
        .map(|i| {
            let mut rng = case_rng(seed, i);
            let net = generate_topology::<f64>(&params.topology, &mut rng);
            let net = assign_node_types(net, &params.supply, &mut rng);
            let net = sample_supply_task(net, &params.supply, &mut rng);
            CaseBundle::new(net).unwrap()
        })
        .collect()
}

fn small_cfg() -> ModelConfig {
    ModelConfig {
        d: 16,
        iterations_train: 5,
        iterations_infer: 8,
        restarts_infer: 3,
        learning_rate: 3e-3,
        batch_size: 8,
        noise: NoiseSpec::default(),
        ..ModelConfig::default()
    }
}

fn flat_mean_mva(cases: &[CaseBundle<f64>]) -> f64 {
    let sum: f64 = cases
        .iter()
        .map(|b| {
            let flat = flat_state(&b.net);
            loss_report(&b.net, &b.ybus, &flat).unwrap().per_node_mva
        })
        .sum();
    sum / cases.len() as f64
}

#[test]
fn zero_epochs_change_nothing() {
    let cases = make_cases(4, 4, 6, 11);
    let cfg = small_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = ModelParams::<f64>::init(&cfg, &mut rng);
    let before = params.clone();
    let log = train(&cases, &[], &mut params, &cfg, &TrainOptions { epochs: 0, ..Default::default() })
        .unwrap();
    assert!(log.is_empty());
    assert_eq!(params, before);

    let log = fine_tune(&mut params, &cases, &[], &cfg, &TrainOptions { epochs: 0, ..Default::default() })
        .unwrap();
    assert!(log.is_empty());
    assert_eq!(params, before);
}

#[test]
fn empty_dataset_is_an_error() {
    let cfg = small_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut params = ModelParams::<f64>::init(&cfg, &mut rng);
    assert!(train(&[], &[], &mut params, &cfg, &TrainOptions::default()).is_err());
}

#[test]
fn training_is_deterministic() {
    let cases = make_cases(12, 4, 7, 13);
    let cfg = small_cfg();
    let opts = TrainOptions { epochs: 3, seed: 42, ..Default::default() };
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut params = ModelParams::<f64>::init(&cfg, &mut rng);
        let log = train(&cases, &[], &mut params, &cfg, &opts).unwrap();
        (params, log)
    };
    let (p1, l1) = run();
    let (p2, l2) = run();
    assert_eq!(p1, p2, "parameters diverged between identical runs");
    for (a, b) in l1.iter().zip(&l2) {
        assert_eq!(a.mean_train, b.mean_train);
        assert_eq!(a.mean_mva, b.mean_mva);
    }
}

#[test]
fn training_beats_the_flat_start() {
    let train_set = make_cases(48, 4, 9, 17);
    let held_out = make_cases(12, 4, 9, 1717);
    let cfg = small_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = ModelParams::<f64>::init(&cfg, &mut rng);

    let opts = TrainOptions { epochs: 40, seed: 9, ..Default::default() };
    let log = train(&train_set, &[], &mut params, &cfg, &opts).unwrap();
    let first = log.first().unwrap().mean_train;
    let last = log.last().unwrap().mean_train;
    assert!(last < first, "training loss did not decrease: {first} -> {last}");

    let flat = flat_mean_mva(&held_out);
    let model = gridflow_neural::train::evaluate_mean_mva(&held_out, &params, &cfg, 3, 99);
    eprintln!("flat {flat} vs model {model} (train loss {first} -> {last})");
    assert!(model < flat, "model ({model}) did not beat flat start ({flat})");
}

#[test]
fn fine_tune_specializes_without_forgetting_much() {
    let general = make_cases(32, 4, 9, 23);
    let general_val = make_cases(8, 4, 9, 2323);
    let cfg = small_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut params = ModelParams::<f64>::init(&cfg, &mut rng);
    train(&general, &[], &mut params, &cfg, &TrainOptions { epochs: 25, seed: 31, ..Default::default() })
        .unwrap();
    let before = gridflow_neural::train::evaluate_mean_mva(&general_val, &params, &cfg, 2, 7);

    // one fixed topology, many supply tasks: the fine-tuning target
    let single_topology = {
        let mut p = GeneratorParams::synthetic_mv();
        p.topology.n_buses = CountRange(8, 8);
        let mut rng = case_rng(77, 0);
        let net = generate_topology::<f64>(&p.topology, &mut rng);
        let net = assign_node_types(net, &p.supply, &mut rng);
        (p, net)
    };
    let ft_cases: Vec<CaseBundle<f64>> = (0..24)
        .map(|i| {
            let mut rng = case_rng(78, i);
            let net = sample_supply_task(single_topology.1.clone(), &single_topology.0.supply, &mut rng);
            CaseBundle::new(net).unwrap()
        })
        .collect();
    let ft_held: Vec<CaseBundle<f64>> = (100..112)
        .map(|i| {
            let mut rng = case_rng(78, i);
            let net = sample_supply_task(single_topology.1.clone(), &single_topology.0.supply, &mut rng);
            CaseBundle::new(net).unwrap()
        })
        .collect();

    let general_on_topology =
        gridflow_neural::train::evaluate_mean_mva(&ft_held, &params, &cfg, 2, 7);
    let mut ft_params = params.clone();
    fine_tune(&mut ft_params, &ft_cases, &[], &cfg, &TrainOptions { epochs: 15, seed: 37, ..Default::default() })
        .unwrap();

    let ft_on_topology = gridflow_neural::train::evaluate_mean_mva(&ft_held, &ft_params, &cfg, 2, 7);
    eprintln!("general on topology {general_on_topology}, fine-tuned {ft_on_topology}");
    assert!(
        ft_on_topology <= general_on_topology,
        "fine-tuning regressed on its own topology: {ft_on_topology} > {general_on_topology}"
    );

    // and the general distribution did not fall apart
    let after = gridflow_neural::train::evaluate_mean_mva(&general_val, &ft_params, &cfg, 2, 7);
    assert!(
        after <= before * 1.5,
        "fine-tuning destroyed general performance: {before} -> {after}"
    );
}

#[test]
fn final_loss_mode_also_trains() {
    let cases = make_cases(16, 4, 7, 29);
    let cfg = ModelConfig { loss_mode: LossMode::Final, ..small_cfg() };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut params = ModelParams::<f64>::init(&cfg, &mut rng);
    let log = train(&cases, &[], &mut params, &cfg, &TrainOptions { epochs: 10, seed: 3, ..Default::default() })
        .unwrap();
    assert!(log.last().unwrap().mean_train < log.first().unwrap().mean_train);
}
