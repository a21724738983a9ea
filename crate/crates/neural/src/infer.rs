//! Inference: randomized restarts, one batched forward over the disjoint
//! union of all (case, restart) replicas, and best-candidate selection by
//! the physics loss. The selection needs no reference solution, and the
//! reported loss is re-derivable from the returned state alone.

use gridflow_autodiff::engine::{Engine, EvalEngine};
use gridflow_autodiff::{Dtype, Tensor};
use gridflow_core::loss::{loss_report, LossReport};
use gridflow_core::GridState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bundle::{state_matrix, union_batch, CaseBundle};
use crate::forward::{bind_params, forward, ForwardCtx};
use crate::model::{ModelConfig, ModelParams};
use crate::noise::randomize_start;

#[derive(Debug, Clone)]
pub struct Inference<T> {
    pub state: GridState<T>,
    pub loss: LossReport<T>,
    pub candidates_examined: usize,
    pub best_restart: usize,
    pub best_iteration: usize,
}

/// Extracts the rows of one member from a union candidate tensor.
pub(crate) fn member_rows<T: Dtype>(
    cand: &Tensor<T>,
    range: &std::ops::Range<usize>,
) -> Tensor<T> {
    let mut out = Tensor::zeros(range.len(), cand.cols());
    for (local, global) in range.clone().enumerate() {
        for c in 0..cand.cols() {
            out.set(local, c, cand.at(global, c));
        }
    }
    out
}

/// Runs `restarts` randomized forward passes per bundle as one disjoint
/// union batch and returns, per bundle, the candidate with the lowest total
/// loss over all restarts and iterations.
///
/// Restart r of bundle i uses RNG stream `i * restarts + r` of `seed`, so
/// for a single bundle a larger restart budget only appends candidates.
pub fn infer_union<T: Dtype>(
    bundles: &[&CaseBundle<T>],
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    iterations: usize,
    restarts: usize,
    seed: u64,
) -> Vec<Inference<T>> {
    assert!(!bundles.is_empty() && restarts > 0);
    let replicas: Vec<&CaseBundle<T>> = bundles
        .iter()
        .flat_map(|b| std::iter::repeat_n(*b, restarts))
        .collect();
    let union = union_batch(&replicas);

    let mut feature_rows: Vec<Vec<T>> = Vec::new();
    let mut start_rows: Vec<Vec<T>> = Vec::new();
    for (bi, bundle) in bundles.iter().enumerate() {
        for r in 0..restarts {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((bi * restarts + r) as u64);
            let start = randomize_start(&bundle.flat, &cfg.noise, &mut rng);
            let feats = bundle.features(&start);
            for row in 0..feats.rows() {
                feature_rows.push(feats.row_slice(row).to_vec());
            }
            let mat = state_matrix(&bundle.flat);
            for row in 0..mat.rows() {
                start_rows.push(mat.row_slice(row).to_vec());
            }
        }
    }
    let features = Tensor::from_rows(&feature_rows);
    let start_values = Tensor::from_rows(&start_rows);

    let mut e = EvalEngine;
    let bound = bind_params(&mut e, params, cfg.leaky_slope, false);
    let ctx = ForwardCtx {
        graph: &union.graph,
        residuals: &union.residuals,
        unknown_mask: &union.unknown_mask,
        known_values: &union.known_values,
    };
    let candidates = forward(&mut e, &bound, &ctx, &features, &start_values, iterations);

    let mut best: Vec<Option<Inference<T>>> = vec![None; bundles.len()];
    for (it, cand) in candidates.iter().enumerate() {
        let cand = e.to_tensor(cand);
        for (bi, bundle) in bundles.iter().enumerate() {
            for r in 0..restarts {
                let range = &union.ranges[bi * restarts + r];
                let decoded = member_rows(&cand, range);
                let state = bundle.candidate_state(&decoded);
                let report = loss_report(&bundle.net, &bundle.ybus, &state)
                    .expect("bundle dimensions are consistent");
                let better = match &best[bi] {
                    None => true,
                    Some(prev) => report.total < prev.loss.total,
                };
                if better {
                    best[bi] = Some(Inference {
                        state,
                        loss: report,
                        candidates_examined: 0,
                        best_restart: r,
                        best_iteration: it,
                    });
                }
            }
        }
    }
    best.into_iter()
        .map(|b| {
            let mut inf = b.expect("at least one candidate");
            inf.candidates_examined = restarts * iterations;
            inf
        })
        .collect()
}

/// Best-of-restarts inference for a single case with the configured
/// restart and iteration budget.
pub fn infer_best<T: Dtype>(
    bundle: &CaseBundle<T>,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    seed: u64,
) -> Inference<T> {
    infer_union(&[bundle], params, cfg, cfg.iterations_infer, cfg.restarts_infer, seed)
        .into_iter()
        .next()
        .expect("one bundle in, one inference out")
}
