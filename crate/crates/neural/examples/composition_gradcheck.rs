//! Finite-difference check of the full training-loss composition.

use gridflow_core::synth::{
    assign_node_types, case_rng, generate_topology, sample_supply_task, CountRange, GeneratorParams,
};
use gridflow_neural::train::{batch_loss_and_gradients, batch_loss_value, noised_batch_inputs};
use gridflow_neural::{CaseBundle, ModelConfig, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut gp = GeneratorParams::synthetic_mv();
    gp.topology.n_buses = CountRange(5, 5);
    gp.supply.pv_node_fraction = 0.3;
    let mut rng = case_rng(3, 0);
    let net = generate_topology::<f64>(&gp.topology, &mut rng);
    let net = assign_node_types(net, &gp.supply, &mut rng);
    let net = sample_supply_task(net, &gp.supply, &mut rng);
    let bundle = CaseBundle::new(net).unwrap();

    let cfg = ModelConfig { d: 6, iterations_train: 3, ..ModelConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut params = ModelParams::<f64>::init(&cfg, &mut rng);
    // nonzero output projection so the full network participates
    for (name, t) in params.tensors_mut() {
        if name == "decoder.1.w" {
            let mut r = ChaCha8Rng::seed_from_u64(10);
            for v in t.data_mut() {
                *v = rand::Rng::random_range(&mut r, -0.3..0.3);
            }
        }
    }

    let refs = [&bundle];
    let inputs = noised_batch_inputs(&refs, &cfg, 123);
    let (loss0, grads) = batch_loss_and_gradients(&refs, &params, &cfg, &inputs).unwrap();
    eprintln!("loss {loss0:.9}");

    let h: f64 = std::env::var("H").map_or(1e-5, |v| v.parse().unwrap());
    let names: Vec<String> = params.tensors().iter().map(|(n, _)| n.clone()).collect();
    let mut worst = (0.0f64, String::new(), 0usize);
    for ti in 0..names.len() {
        let len = params.tensors()[ti].1.len();
        let stride = (len / 6).max(1);
        for j in (0..len).step_by(stride) {
            let orig = params.tensors()[ti].1.data()[j];
            params.tensors_mut()[ti].1.data_mut()[j] = orig + h;
            let lp = batch_loss_value(&refs, &params, &cfg, &inputs);
            params.tensors_mut()[ti].1.data_mut()[j] = orig - h;
            let lm = batch_loss_value(&refs, &params, &cfg, &inputs);
            params.tensors_mut()[ti].1.data_mut()[j] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let ad = grads[ti].data()[j];
            let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, names[ti].clone(), j);
            }
        }
    }
    eprintln!("worst rel err {} at {} [{}]", worst.0, worst.1, worst.2);
}
