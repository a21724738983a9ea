//! Inspect per-tensor gradient norms for one training batch.

use gridflow_core::synth::{
    assign_node_types, case_rng, generate_topology, sample_supply_task, CountRange, GeneratorParams,
};
use gridflow_neural::train::{batch_loss_and_gradients, noised_batch_inputs};
use gridflow_neural::{train, CaseBundle, ModelConfig, ModelParams, TrainOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn make_cases(count: usize, seed: u64) -> Vec<CaseBundle<f64>> {
    let mut params = GeneratorParams::synthetic_mv();
    params.topology.n_buses = CountRange(5, 15);
    params.supply.pv_node_fraction = 0.0;
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

fn main() {
    let cases = make_cases(16, 50);
    let cfg = ModelConfig {
        d: 32,
        iterations_train: 10,
        learning_rate: 3e-3,
        batch_size: 16,
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = ModelParams::<f64>::init(&cfg, &mut rng);

    let refs: Vec<&CaseBundle<f64>> = cases.iter().collect();
    let report = |tag: &str, params: &ModelParams<f64>| {
        let inputs = noised_batch_inputs(&refs, &cfg, 77);
        let (loss, grads) = batch_loss_and_gradients(&refs, params, &cfg, &inputs).unwrap();
        eprintln!("[{tag}] loss {loss:.6}");
        for ((name, t), g) in params.tensors().iter().zip(&grads) {
            let pn = (t.data().iter().map(|v| v * v).sum::<f64>()).sqrt();
            let gn = (g.data().iter().map(|v| v * v).sum::<f64>()).sqrt();
            eprintln!("  {name:24} |p| {pn:10.4}  |g| {gn:12.6}");
        }
    };
    report("init", &params);
    let opts = TrainOptions { epochs: 30, seed: 5, ..Default::default() };
    train(&cases, &[], &mut params, &cfg, &opts).unwrap();
    report("after 30 epochs", &params);
}
