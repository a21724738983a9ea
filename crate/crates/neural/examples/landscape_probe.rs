//! Optimize the candidate state directly (no network) to probe the loss
//! landscape conditioning.

use gridflow_autodiff::{AdamState, Tape, Tensor};
use gridflow_core::loss::loss_report;
use gridflow_core::synth::{
    assign_node_types, case_rng, generate_topology, sample_supply_task, CountRange, GeneratorParams,
};
use gridflow_neural::bundle::state_matrix;
use gridflow_neural::forward::{candidate_train_loss, ForwardCtx};
use gridflow_neural::CaseBundle;

fn main() {
    let mut gp = GeneratorParams::synthetic_mv();
    gp.topology.n_buses = CountRange(10, 10);
    gp.supply.pv_node_fraction = 0.0;
    let mut rng = case_rng(4, 0);
    let net = generate_topology::<f64>(&gp.topology, &mut rng);
    let net = assign_node_types(net, &gp.supply, &mut rng);
    let net = sample_supply_task(net, &gp.supply, &mut rng);
    let bundle = CaseBundle::new(net).unwrap();

    let flat = loss_report(&bundle.net, &bundle.ybus, &bundle.flat).unwrap();
    eprintln!("flat: total {:.6} per-node MVA {:.4}", flat.total, flat.per_node_mva);

    let mut cand = state_matrix(&bundle.flat);
    let lr = std::env::var("LR").map_or(1e-2, |s| s.parse().unwrap());
    let mut adam = AdamState::new(&[&cand], lr);
    for step in 0..=2000 {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(cand.clone(), true);
        let mask = tape.leaf(bundle.unknown_mask.clone(), false);
        let known = tape.leaf(bundle.known_values.clone(), false);
        let free = tape.mul(x, mask).unwrap();
        let clamped = tape.add(free, known).unwrap();
        let ctx = ForwardCtx {
            graph: &bundle.graph,
            residuals: &bundle.residuals,
            unknown_mask: &bundle.unknown_mask,
            known_values: &bundle.known_values,
        };
        let loss = candidate_train_loss(&mut tape, &ctx, &clamped);
        if step % 200 == 0 {
            let state = bundle.candidate_state(&cand);
            let report = loss_report(&bundle.net, &bundle.ybus, &state).unwrap();
            eprintln!(
                "step {:5} train {:.8} per-node MVA {:.5}",
                step,
                tape.value(loss).scalar_value(),
                report.per_node_mva
            );
        }
        tape.backward(loss).unwrap();
        let g = tape.grad(x).unwrap().clone();
        adam.step(&mut [&mut cand], &[&g]).unwrap();
    }
}
