//! Scratch probe for training dynamics on small synthetic sets.
//! Run: cargo run -p gridflow-neural --example train_probe --release -- [cases] [epochs] [d] [iters]

use gridflow_core::loss::loss_report;
use gridflow_core::state::flat_state;
use gridflow_core::synth::{
    assign_node_types, case_rng, generate_topology, sample_supply_task, CountRange, GeneratorParams,
};
use gridflow_neural::{train, CaseBundle, ModelConfig, ModelParams, TrainOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn make_cases(count: usize, lo: usize, hi: usize, seed: u64) -> Vec<CaseBundle<f64>> {
    let mut params = GeneratorParams::synthetic_mv();
    params.topology.n_buses = CountRange(lo, hi);
    if let Ok(f) = std::env::var("PV") {
        params.supply.pv_node_fraction = f.parse().unwrap();
    }
    if let Ok(v) = std::env::var("VSET") {
        let v: f64 = v.parse().unwrap();
        params.supply.pv_vset_pu = gridflow_core::synth::ValueRange(1.0, v);
    }
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

fn flat_mean(cases: &[CaseBundle<f64>]) -> f64 {
    cases
        .iter()
        .map(|b| loss_report(&b.net, &b.ybus, &flat_state(&b.net)).unwrap().per_node_mva)
        .sum::<f64>()
        / cases.len() as f64
}

fn diagnose(cases: &[CaseBundle<f64>], params: &gridflow_neural::ModelParams<f64>, cfg: &ModelConfig) {
    use gridflow_core::newton::{solve_nr, NrOptions};
    for (i, b) in cases.iter().take(4).enumerate() {
        let (nr, _) = solve_nr(&b.net, &flat_state(&b.net), &NrOptions::default()).unwrap();
        let inf = gridflow_neural::infer_best(b, params, cfg, 55);
        let m = &inf.state;
        let dv_model: f64 = (0..m.len()).map(|k| (m.vm[k] - nr.vm[k]).abs()).fold(0.0, f64::max);
        let dv_flat: f64 = (0..m.len()).map(|k| (1.0 - nr.vm[k]).abs()).fold(0.0, f64::max);
        let dt_model: f64 = (0..m.len()).map(|k| (m.va[k] - nr.va[k]).abs()).fold(0.0, f64::max);
        let dt_flat: f64 = (0..m.len()).map(|k| nr.va[k].abs()).fold(0.0, f64::max);
        let p_res: f64 = inf.loss.per_node_p.iter().sum();
        let q_res: f64 = inf.loss.per_node_q.iter().sum();
        let slack = b.net.slack_index().unwrap();
        eprintln!(
            "case {i} n={} |dV| model {dv_model:.5} flat {dv_flat:.5} | |dTh| model {dt_model:.5} flat {dt_flat:.5} | P res {p_res:.4} Q res {q_res:.4} | slack P err {:.4} (nr {:.4})",
            m.len(), (m.p[slack] - nr.p[slack]).abs(), nr.p[slack]
        );
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let count: usize = args.get(1).map_or(100, |s| s.parse().unwrap());
    let epochs: usize = args.get(2).map_or(60, |s| s.parse().unwrap());
    let d: usize = args.get(3).map_or(32, |s| s.parse().unwrap());
    let iters: usize = args.get(4).map_or(10, |s| s.parse().unwrap());

    let train_set = make_cases(count, 5, 15, 100);
    let held = make_cases(20, 5, 15, 9_999);
    let noise_scale: f64 = std::env::var("NOISE").map_or(1.0, |s| s.parse().unwrap());
    let lr: f64 = std::env::var("LR").map_or(3e-3, |s| s.parse().unwrap());
    let batch: usize = std::env::var("BATCH").map_or(16, |s| s.parse().unwrap());
    let final_only = std::env::var("FINAL").is_ok();
    let mut noise = gridflow_neural::NoiseSpec::default();
    for m in &mut noise.means { *m *= noise_scale; }
    for sd in &mut noise.std_devs { *sd *= noise_scale; }
    let cfg = ModelConfig {
        d,
        iterations_train: iters,
        iterations_infer: 2 * iters,
        restarts_infer: 5,
        learning_rate: lr,
        batch_size: batch,
        noise,
        loss_mode: if final_only { gridflow_neural::LossMode::Final } else { gridflow_neural::LossMode::Deep },
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = ModelParams::<f64>::init(&cfg, &mut rng);

    let flat_train = flat_mean(&train_set);
    let flat_held = flat_mean(&held);
    eprintln!("flat: train {flat_train:.4} held {flat_held:.4} MVA/node");

    let diag = std::env::var("DIAG").is_ok();
    let t0 = std::time::Instant::now();
    for round in 0..epochs / 5 {
        let opts = TrainOptions { epochs: 5, seed: 1000 + round as u64, cosine_lr: std::env::var("COS").is_ok(), ..Default::default() };
        let log = train(&train_set, &[], &mut params, &cfg, &opts).unwrap();
        let train_eval = gridflow_neural::train::evaluate_mean_mva(&train_set[..20.min(train_set.len())], &params, &cfg, 3, 5);
        let held_eval = gridflow_neural::train::evaluate_mean_mva(&held, &params, &cfg, 3, 5);
        eprintln!(
            "epoch {:3}  L_train {:.5}  batchMVA {:.4}  trainEval {:.4}  heldEval {:.4}  ({:.1}s)",
            (round + 1) * 5,
            log.last().unwrap().mean_train,
            log.last().unwrap().mean_mva,
            train_eval,
            held_eval,
            t0.elapsed().as_secs_f64()
        );
    }
    if diag {
        diagnose(&held, &params, &cfg);
    }
}
