//! Unsupervised training: disjoint-union batches, randomized starts, the
//! recurrent forward pass on a tape, and Adam on the ln(1 + sum-of-squares)
//! training loss. Solutions in the dataset are never read.

use std::time::Instant;

use gridflow_autodiff::{AdamState, Dtype, Tape, Tensor};
use gridflow_core::loss::loss_report;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::{state_matrix, union_batch, CaseBundle};
use crate::error::TrainError;
use crate::forward::{bind_params, candidate_train_loss, forward, ForwardCtx};
use crate::infer::{infer_union, member_rows};
use crate::model::{LossMode, ModelConfig, ModelParams};
use crate::noise::randomize_start;

/// Periodic validation with an absolute stop target in MVA per node.
#[derive(Debug, Clone, Copy)]
pub struct EarlyStop {
    pub check_every: usize,
    pub target_mva: f64,
    /// Restart budget for the validation inference (kept small for speed).
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
    /// Cosine-anneal the learning rate to 5% of its initial value over the
    /// epoch budget.
    pub cosine_lr: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { epochs: 100, seed: 0, early_stop: None, cosine_lr: true }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss per case (deep supervision mean when enabled).
    pub mean_train: f64,
    /// Mean loss per node in MVA of the final candidates seen in training.
    pub mean_mva: f64,
    /// Validation mean loss per node (MVA), when this epoch evaluated it.
    pub val_mva: Option<f64>,
    pub wall_s: f64,
}

/// Writes the log in CSV form: epoch, mean L_train, mean loss per node in
/// MVA, validation MVA (blank when not measured), wall seconds.
pub fn write_log_csv(log: &[EpochLog], mut w: impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "epoch,mean_train,mean_mva,val_mva,wall_s")?;
    for row in log {
        let val = row.val_mva.map_or(String::new(), |v| format!("{v}"));
        writeln!(w, "{},{},{},{},{}", row.epoch, row.mean_train, row.mean_mva, val, row.wall_s)?;
    }
    Ok(())
}

/// Mean loss per node (MVA) of `infer_union` over a case set.
pub fn evaluate_mean_mva<T: Dtype>(
    cases: &[CaseBundle<T>],
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    restarts: usize,
    seed: u64,
) -> f64 {
    if cases.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for bundle in cases {
        let inf = infer_union(&[bundle], params, cfg, cfg.iterations_infer, restarts, seed)
            .remove(0);
        sum += inf.loss.per_node_mva.to_f64();
    }
    sum / cases.len() as f64
}

/// Stacked encoder features and raw start values for a batch of noised
/// starts.
#[derive(Debug, Clone)]
pub struct BatchInputs<T> {
    pub features: Tensor<T>,
    pub start: Tensor<T>,
}

pub fn batch_inputs<T: Dtype>(
    bundles: &[&CaseBundle<T>],
    starts: &[gridflow_core::GridState<T>],
) -> BatchInputs<T> {
    let mut feature_rows: Vec<Vec<T>> = Vec::new();
    let mut start_rows: Vec<Vec<T>> = Vec::new();
    for (bundle, start) in bundles.iter().zip(starts) {
        let feats = bundle.features(start);
        for r in 0..feats.rows() {
            feature_rows.push(feats.row_slice(r).to_vec());
        }
        // the refinement chain always starts from the flat state; the
        // randomized start only enters through the encoder features
        let mat = state_matrix(&bundle.flat);
        for r in 0..mat.rows() {
            start_rows.push(mat.row_slice(r).to_vec());
        }
    }
    BatchInputs { features: Tensor::from_rows(&feature_rows), start: Tensor::from_rows(&start_rows) }
}

/// Batch inputs with one deterministic noise draw per bundle from `seed`.
pub fn noised_batch_inputs<T: Dtype>(
    bundles: &[&CaseBundle<T>],
    cfg: &ModelConfig,
    seed: u64,
) -> BatchInputs<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<gridflow_core::GridState<T>> =
        bundles.iter().map(|b| randomize_start(&b.flat, &cfg.noise, &mut rng)).collect();
    batch_inputs(bundles, &starts)
}

fn batch_loss_on_tape<T: Dtype>(
    tape: &mut Tape<T>,
    bundles: &[&CaseBundle<T>],
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    inputs: &BatchInputs<T>,
) -> (gridflow_autodiff::Var, Vec<gridflow_autodiff::Var>) {
    let union = union_batch(bundles);
    let bound = bind_params(tape, params, cfg.leaky_slope, true);
    let ctx = ForwardCtx {
        graph: &union.graph,
        residuals: &union.residuals,
        unknown_mask: &union.unknown_mask,
        known_values: &union.known_values,
    };
    let candidates =
        forward(tape, &bound, &ctx, &inputs.features, &inputs.start, cfg.iterations_train);
    let loss = match cfg.loss_mode {
        LossMode::Final => {
            candidate_train_loss(tape, &ctx, candidates.last().expect("iterations >= 1"))
        }
        LossMode::Deep => {
            let mut acc = None;
            for cand in &candidates {
                let l = candidate_train_loss(tape, &ctx, cand);
                acc = Some(match acc {
                    None => l,
                    Some(prev) => tape.add(prev, l).expect("scalar shapes"),
                });
            }
            let total = acc.expect("iterations >= 1");
            Tape::scale(tape, total, T::one() / T::from_usize(candidates.len()))
        }
    };
    (loss, bound.flat)
}

/// The training objective of one batch, evaluated without a tape.
pub fn batch_loss_value<T: Dtype>(
    bundles: &[&CaseBundle<T>],
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    inputs: &BatchInputs<T>,
) -> f64 {
    use gridflow_autodiff::engine::EvalEngine;
    let union = union_batch(bundles);
    let mut e = EvalEngine;
    let bound = bind_params(&mut e, params, cfg.leaky_slope, false);
    let ctx = ForwardCtx {
        graph: &union.graph,
        residuals: &union.residuals,
        unknown_mask: &union.unknown_mask,
        known_values: &union.known_values,
    };
    let candidates =
        forward(&mut e, &bound, &ctx, &inputs.features, &inputs.start, cfg.iterations_train);
    match cfg.loss_mode {
        LossMode::Final => {
            candidate_train_loss(&mut e, &ctx, candidates.last().expect("iterations >= 1"))
                .scalar_value()
                .to_f64()
        }
        LossMode::Deep => {
            let mut acc = 0.0;
            for cand in &candidates {
                acc += candidate_train_loss(&mut e, &ctx, cand).scalar_value().to_f64();
            }
            acc / candidates.len() as f64
        }
    }
}

/// The training objective and its gradients with respect to every
/// parameter tensor, in [`ModelParams::tensors`] order.
pub fn batch_loss_and_gradients<T: Dtype>(
    bundles: &[&CaseBundle<T>],
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    inputs: &BatchInputs<T>,
) -> Result<(f64, Vec<Tensor<T>>), TrainError> {
    let mut tape = Tape::new();
    let (loss, flat) = batch_loss_on_tape(&mut tape, bundles, params, cfg, inputs);
    let value = tape.value(loss).scalar_value().to_f64();
    tape.backward(loss)?;
    let grads = flat
        .iter()
        .map(|&v| {
            tape.grad(v).cloned().unwrap_or_else(|| {
                let t = tape.value(v);
                Tensor::zeros(t.rows(), t.cols())
            })
        })
        .collect();
    Ok((value, grads))
}

/// Trains in place for up to `opts.epochs` epochs. Deterministic for a
/// fixed seed: the shuffle, the noise draws, and every numeric step follow
/// the same sequence on every run.
pub fn train<T: Dtype>(
    train_set: &[CaseBundle<T>],
    val_set: &[CaseBundle<T>],
    params: &mut ModelParams<T>,
    cfg: &ModelConfig,
    opts: &TrainOptions,
) -> Result<Vec<EpochLog>, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let lr = T::from_f64(cfg.learning_rate);
    let mut adam = {
        let tensors = params.tensors();
        let refs: Vec<&Tensor<T>> = tensors.iter().map(|(_, t)| *t).collect();
        AdamState::new(&refs, lr)
    };

    let mut log = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let t0 = Instant::now();
        if opts.cosine_lr && opts.epochs > 1 {
            let progress = epoch as f64 / (opts.epochs - 1) as f64;
            let factor = 0.05 + 0.95 * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
            adam.learning_rate = lr * T::from_f64(factor);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(1 + epoch as u64);

        let mut order: Vec<usize> = (0..train_set.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }

        let mut train_sum = 0.0;
        let mut mva_sum = 0.0;
        let mut case_count = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let bundles: Vec<&CaseBundle<T>> = chunk.iter().map(|&i| &train_set[i]).collect();
            let union = union_batch(&bundles);

            let starts: Vec<gridflow_core::GridState<T>> = bundles
                .iter()
                .map(|b| randomize_start(&b.flat, &cfg.noise, &mut rng))
                .collect();
            let inputs = batch_inputs(&bundles, &starts);

            let mut tape = Tape::new();
            let bound = bind_params(&mut tape, params, cfg.leaky_slope, true);
            let ctx = ForwardCtx {
                graph: &union.graph,
                residuals: &union.residuals,
                unknown_mask: &union.unknown_mask,
                known_values: &union.known_values,
            };
            let candidates = forward(
                &mut tape,
                &bound,
                &ctx,
                &inputs.features,
                &inputs.start,
                cfg.iterations_train,
            );

            let loss = match cfg.loss_mode {
                LossMode::Final => {
                    candidate_train_loss(&mut tape, &ctx, candidates.last().expect("iterations >= 1"))
                }
                LossMode::Deep => {
                    let mut acc = None;
                    for cand in &candidates {
                        let l = candidate_train_loss(&mut tape, &ctx, cand);
                        acc = Some(match acc {
                            None => l,
                            Some(prev) => tape.add(prev, l).expect("scalar shapes"),
                        });
                    }
                    let total = acc.expect("iterations >= 1");
                    Tape::scale(&mut tape, total, T::one() / T::from_usize(candidates.len()))
                }
            };

            let loss_value = tape.value(loss).scalar_value().to_f64();
            if !loss_value.is_finite() {
                return Err(TrainError::NonFinite { epoch, step });
            }
            train_sum += loss_value;

            // loss per node (MVA) of the final candidates, for the log
            let final_cand = tape.value(*candidates.last().expect("nonempty")).clone();
            for (bundle, range) in bundles.iter().zip(&union.ranges) {
                let state = bundle.candidate_state(&member_rows(&final_cand, range));
                let report = loss_report(&bundle.net, &bundle.ybus, &state)
                    .expect("consistent dimensions");
                mva_sum += report.per_node_mva.to_f64();
            }
            case_count += bundles.len();

            tape.backward(loss)?;
            let grads: Vec<Tensor<T>> = bound
                .flat
                .iter()
                .map(|&v| {
                    tape.grad(v).cloned().unwrap_or_else(|| {
                        let t = tape.value(v);
                        Tensor::zeros(t.rows(), t.cols())
                    })
                })
                .collect();
            let mut tensors = params.tensors_mut();
            let mut param_refs: Vec<&mut Tensor<T>> =
                tensors.iter_mut().map(|(_, t)| &mut **t).collect();
            let grad_refs: Vec<&Tensor<T>> = grads.iter().collect();
            adam.step(&mut param_refs, &grad_refs)?;
        }

        let steps = order.len().div_ceil(cfg.batch_size);
        let mut row = EpochLog {
            epoch,
            mean_train: train_sum / steps.max(1) as f64,
            mean_mva: mva_sum / case_count.max(1) as f64,
            val_mva: None,
            wall_s: t0.elapsed().as_secs_f64(),
        };

        let mut stop = false;
        if let Some(es) = &opts.early_stop {
            if !val_set.is_empty() && (epoch + 1) % es.check_every.max(1) == 0 {
                let val = evaluate_mean_mva(val_set, params, cfg, es.restarts, opts.seed ^ 0x5eed);
                row.val_mva = Some(val);
                row.wall_s = t0.elapsed().as_secs_f64();
                stop = val <= es.target_mva;
            }
        }
        log.push(row);
        if stop {
            break;
        }
    }
    Ok(log)
}

/// Continued training from existing weights on a (typically more specific)
/// dataset; the loop is identical to `train`.
pub fn fine_tune<T: Dtype>(
    params: &mut ModelParams<T>,
    train_set: &[CaseBundle<T>],
    val_set: &[CaseBundle<T>],
    cfg: &ModelConfig,
    opts: &TrainOptions,
) -> Result<Vec<EpochLog>, TrainError> {
    train(train_set, val_set, params, cfg, opts)
}
