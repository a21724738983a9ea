//! The recurrent message-passing forward pass, written once against the
//! engine abstraction so training (taped) and inference (eager) share the
//! exact same computation.
//!
//! Per iteration: bus states emit messages through the message MLP along
//! bus->branch arcs (sum aggregation); the aggregate is concatenated with
//! the branch's series (G, B) and passed through the edge receiver MLP into
//! the branch LSTM; branch states travel back through the transmitter and
//! node receiver MLPs; each bus type's LSTM updates its buses from the
//! encoder output, the received aggregate, and its own cell state; the bus
//! states pass a final LSTM cell and the decoder maps [state, graph mean]
//! back to (P, Q, V, theta), with known variables clamped to the case data.

use std::rc::Rc;

use gridflow_autodiff::engine::Engine;
use gridflow_autodiff::{Dtype, Tensor};

use crate::graph::{ResidualIndex, SolverGraph};
use crate::model::{LstmCell, Mlp, ModelParams};

/// Decoded columns: p, q, vm, va.
const DECODE_COLS: usize = crate::model::DECODED;
/// Per-iteration correction scale per column (p, q, vm, va): each candidate
/// refines the previous one by a physically sized step, so the raw decoder
/// outputs live in the network's natural O(1) range. Voltage steps are
/// small because distribution-grid solutions sit within about a percent of
/// flat, while the free injections at the slack span tenths of a unit.
const DECODE_SCALES: [f64; 4] = [0.1, 0.1, 0.001, 0.001];

#[derive(Clone)]
pub struct BoundLinear<V> {
    pub w: V,
    pub b: V,
}

#[derive(Clone)]
pub struct BoundMlp<V> {
    pub layers: Vec<BoundLinear<V>>,
}

#[derive(Clone)]
pub struct BoundLstm<V> {
    pub w: V,
    pub u: V,
    pub b: V,
}

/// Model parameters bound into an engine. `flat` lists the underlying
/// engine values in [`ModelParams::tensors`] order, which is also the
/// optimizer slot order.
pub struct BoundParams<V> {
    pub d: usize,
    pub leaky_slope: f64,
    pub encoder: BoundMlp<V>,
    pub message: BoundMlp<V>,
    pub edge_receiver: BoundMlp<V>,
    pub transmitter: BoundMlp<V>,
    pub node_receiver: BoundMlp<V>,
    pub decoder: BoundMlp<V>,
    pub lstm_pq: BoundLstm<V>,
    pub lstm_pv: BoundLstm<V>,
    pub lstm_slack: BoundLstm<V>,
    pub lstm_branch: BoundLstm<V>,
    pub lstm_final: BoundLstm<V>,
    pub flat: Vec<V>,
}

pub fn bind_params<T: Dtype, E: Engine<T>>(
    e: &mut E,
    params: &ModelParams<T>,
    leaky_slope: f64,
    trainable: bool,
) -> BoundParams<E::V> {
    let mut flat = Vec::new();
    let bind = |e: &mut E, t: &Tensor<T>, flat: &mut Vec<E::V>| -> E::V {
        let v = if trainable { e.param(t.clone()) } else { e.constant(t.clone()) };
        flat.push(v.clone());
        v
    };
    let mlp = |e: &mut E, m: &Mlp<T>, flat: &mut Vec<E::V>| -> BoundMlp<E::V> {
        BoundMlp {
            layers: m
                .layers
                .iter()
                .map(|l| BoundLinear { w: bind(e, &l.w, flat), b: bind(e, &l.b, flat) })
                .collect(),
        }
    };
    let encoder = mlp(e, &params.encoder, &mut flat);
    let message = mlp(e, &params.message, &mut flat);
    let edge_receiver = mlp(e, &params.edge_receiver, &mut flat);
    let transmitter = mlp(e, &params.transmitter, &mut flat);
    let node_receiver = mlp(e, &params.node_receiver, &mut flat);
    let decoder = mlp(e, &params.decoder, &mut flat);
    let lstm = |e: &mut E, c: &LstmCell<T>, flat: &mut Vec<E::V>| -> BoundLstm<E::V> {
        BoundLstm { w: bind(e, &c.w, flat), u: bind(e, &c.u, flat), b: bind(e, &c.b, flat) }
    };
    let lstm_pq = lstm(e, &params.lstm_pq, &mut flat);
    let lstm_pv = lstm(e, &params.lstm_pv, &mut flat);
    let lstm_slack = lstm(e, &params.lstm_slack, &mut flat);
    let lstm_branch = lstm(e, &params.lstm_branch, &mut flat);
    let lstm_final = lstm(e, &params.lstm_final, &mut flat);
    BoundParams {
        d: params.d,
        leaky_slope,
        encoder,
        message,
        edge_receiver,
        transmitter,
        node_receiver,
        decoder,
        lstm_pq,
        lstm_pv,
        lstm_slack,
        lstm_branch,
        lstm_final,
        flat,
    }
}

fn apply_mlp<T: Dtype, E: Engine<T>>(
    e: &mut E,
    m: &BoundMlp<E::V>,
    x: &E::V,
    slope: T,
) -> E::V {
    let mut h = x.clone();
    let last = m.layers.len() - 1;
    for (i, layer) in m.layers.iter().enumerate() {
        let z = e.matmul(&h, &layer.w);
        let z = e.add_bias(&z, &layer.b);
        h = if i == last { z } else { e.leaky_relu(&z, slope) };
    }
    h
}

/// One LSTM step over row-aligned states. Gate layout [i, f, g, o].
fn lstm_step<T: Dtype, E: Engine<T>>(
    e: &mut E,
    cell: &BoundLstm<E::V>,
    d: usize,
    x: &E::V,
    h: &E::V,
    c: &E::V,
) -> (E::V, E::V) {
    let zx = e.matmul(x, &cell.w);
    let zh = e.matmul(h, &cell.u);
    let z = e.add(&zx, &zh);
    let z = e.add_bias(&z, &cell.b);
    let zi = e.slice_cols(&z, 0, d);
    let zf = e.slice_cols(&z, d, 2 * d);
    let zg = e.slice_cols(&z, 2 * d, 3 * d);
    let zo = e.slice_cols(&z, 3 * d, 4 * d);
    let i = e.sigmoid(&zi);
    let f = e.sigmoid(&zf);
    let g = e.tanh(&zg);
    let o = e.sigmoid(&zo);
    let fc = e.mul(&f, c);
    let ig = e.mul(&i, &g);
    let c_next = e.add(&fc, &ig);
    let ct = e.tanh(&c_next);
    let h_next = e.mul(&o, &ct);
    (h_next, c_next)
}

/// Everything the forward pass needs besides the parameters.
pub struct ForwardCtx<'a, T> {
    pub graph: &'a SolverGraph<T>,
    pub residuals: &'a ResidualIndex<T>,
    pub unknown_mask: &'a Tensor<T>,
    pub known_values: &'a Tensor<T>,
}

/// Runs the recurrent stack for `iterations` steps and returns one clamped
/// (n x 4) candidate per iteration.
pub fn forward<T: Dtype, E: Engine<T>>(
    e: &mut E,
    p: &BoundParams<E::V>,
    ctx: &ForwardCtx<'_, T>,
    features: &Tensor<T>,
    start_values: &Tensor<T>,
    iterations: usize,
) -> Vec<E::V> {
    let graph = ctx.graph;
    let d = p.d;
    let slope = T::from_f64(p.leaky_slope);
    let n = graph.n_bus;
    let m = graph.n_branch;

    let feat = e.constant(features.clone());
    // series admittances reach hundreds of per-unit; asinh-compress them so
    // the edge receiver and branch LSTM stay out of saturation
    let branch_gb = {
        let compress = |v: T| -> T {
            let x = v.to_f64();
            T::from_f64(x.asinh() / 4.0)
        };
        let mut t = Tensor::zeros(m, 2);
        for i in 0..m {
            t.set(i, 0, compress(graph.branch_g[i]));
            t.set(i, 1, compress(graph.branch_b[i]));
        }
        e.constant(t)
    };
    let unknown_mask = e.constant(ctx.unknown_mask.clone());
    let known_values = e.constant(ctx.known_values.clone());
    let decode_scale = {
        let mut scale = Tensor::zeros(n, DECODE_COLS);
        for i in 0..n {
            for c in 0..DECODE_COLS {
                if ctx.unknown_mask.at(i, c) != T::zero() {
                    scale.set(i, c, T::from_f64(DECODE_SCALES[c]));
                }
            }
        }
        e.constant(scale)
    };
    // the start state, clamped, is the candidate the first iteration refines
    let mut prev = {
        let raw = e.constant(start_values.clone());
        let free = e.mul(&raw, &unknown_mask);
        e.add(&free, &known_values)
    };
    let inv_sizes: Rc<Vec<T>> = Rc::new(
        graph.graph_sizes.iter().map(|&s| T::one() / T::from_usize(s.max(1))).collect(),
    );

    // encoder output doubles as the initial bus hidden state; cell states
    // start at zero
    let enc = apply_mlp(e, &p.encoder, &feat, slope);
    let mut h_bus = enc.clone();
    let mut c_bus = e.constant(Tensor::zeros(n, d));
    let mut h_br = e.constant(Tensor::zeros(m, d));
    let mut c_br = e.constant(Tensor::zeros(m, d));
    let mut h_fin = e.constant(Tensor::zeros(n, d));
    let mut c_fin = e.constant(Tensor::zeros(n, d));

    let mut candidates = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        // bus -> branch
        let msg = apply_mlp(e, &p.message, &h_bus, slope);
        let msg_arcs = e.gather_rows(&msg, graph.arc_bus.clone());
        let agg_br = e.scatter_add_rows(&msg_arcs, graph.arc_branch.clone(), m);
        let edge_in = e.concat_cols(&[agg_br, branch_gb.clone()]);
        let edge_in = apply_mlp(e, &p.edge_receiver, &edge_in, slope);
        let (h2, c2) = lstm_step(e, &p.lstm_branch, d, &edge_in, &h_br, &c_br);
        h_br = h2;
        c_br = c2;

        // branch -> bus
        let tr = apply_mlp(e, &p.transmitter, &h_br, slope);
        let tr_arcs = e.gather_rows(&tr, graph.arc_branch.clone());
        let agg_bus = e.scatter_add_rows(&tr_arcs, graph.arc_bus.clone(), n);
        let rec = apply_mlp(e, &p.node_receiver, &agg_bus, slope);
        let lstm_in = e.concat_cols(&[enc.clone(), rec]);

        // per-type LSTM update, reassembled by disjoint scatter
        let cells = [&p.lstm_pq, &p.lstm_pv, &p.lstm_slack];
        let mut h_parts: Option<E::V> = None;
        let mut c_parts: Option<E::V> = None;
        for (slot, cell) in cells.into_iter().enumerate() {
            let rows = &graph.type_rows[slot];
            if rows.is_empty() {
                continue;
            }
            let x_t = e.gather_rows(&lstm_in, rows.clone());
            let h_t = e.gather_rows(&h_bus, rows.clone());
            let c_t = e.gather_rows(&c_bus, rows.clone());
            let (h_new, c_new) = lstm_step(e, cell, d, &x_t, &h_t, &c_t);
            let h_sc = e.scatter_add_rows(&h_new, rows.clone(), n);
            let c_sc = e.scatter_add_rows(&c_new, rows.clone(), n);
            h_parts = Some(match h_parts {
                None => h_sc,
                Some(acc) => e.add(&acc, &h_sc),
            });
            c_parts = Some(match c_parts {
                None => c_sc,
                Some(acc) => e.add(&acc, &c_sc),
            });
        }
        h_bus = h_parts.expect("at least one bus");
        c_bus = c_parts.expect("at least one bus");

        // final cell and decode with the per-graph mean embedding
        let (hf, cf) = lstm_step(e, &p.lstm_final, d, &h_bus, &h_fin, &c_fin);
        h_fin = hf;
        c_fin = cf;
        let gsum = e.scatter_add_rows(&h_fin, graph.graph_of_bus.clone(), graph.n_graphs);
        let gmean = e.scale_rows(&gsum, inv_sizes.clone());
        let gctx = e.gather_rows(&gmean, graph.graph_of_bus.clone());
        let dec_in = e.concat_cols(&[h_fin.clone(), gctx]);
        let dec = apply_mlp(e, &p.decoder, &dec_in, slope);

        // refine the previous candidate; known variables stay clamped
        let delta = e.mul(&dec, &decode_scale);
        let moved = e.add(&prev, &delta);
        let free = e.mul(&moved, &unknown_mask);
        let cand = e.add(&free, &known_values);
        candidates.push(cand.clone());
        prev = cand;
    }
    candidates
}

/// Sum of squared power-balance residuals per member graph (G x 1), from a
/// clamped candidate, evaluated with tensor ops so gradients flow.
pub fn candidate_squared_residuals<T: Dtype, E: Engine<T>>(
    e: &mut E,
    ctx: &ForwardCtx<'_, T>,
    cand: &E::V,
) -> E::V {
    let graph = ctx.graph;
    let r = ctx.residuals;
    let n = r.n_bus;
    let p_col = e.slice_cols(cand, 0, 1);
    let q_col = e.slice_cols(cand, 1, 2);
    let vm = e.slice_cols(cand, 2, 3);
    let va = e.slice_cols(cand, 3, 4);

    let g_const = e.constant(Tensor::column(r.g.clone()));
    let b_const = e.constant(Tensor::column(r.b.clone()));
    let vi = e.gather_rows(&vm, r.rows.clone());
    let vk = e.gather_rows(&vm, r.cols.clone());
    let ti = e.gather_rows(&va, r.rows.clone());
    let tk = e.gather_rows(&va, r.cols.clone());
    let dt = e.sub(&ti, &tk);
    let s = e.sin(&dt);
    let c = e.cos(&dt);
    let vv = e.mul(&vi, &vk);

    let gc = e.mul(&g_const, &c);
    let bs = e.mul(&b_const, &s);
    let p_term = e.add(&gc, &bs);
    let p_term = e.mul(&vv, &p_term);
    let p_calc = e.scatter_add_rows(&p_term, r.rows.clone(), n);

    let gs = e.mul(&g_const, &s);
    let bc = e.mul(&b_const, &c);
    let q_term = e.sub(&gs, &bc);
    let q_term = e.mul(&vv, &q_term);
    let q_calc = e.scatter_add_rows(&q_term, r.rows.clone(), n);

    let lp = e.sub(&p_col, &p_calc);
    let lq = e.sub(&q_col, &q_calc);
    let lp2 = e.square(&lp);
    let lq2 = e.square(&lq);
    let sq = e.add(&lp2, &lq2);
    e.scatter_add_rows(&sq, graph.graph_of_bus.clone(), graph.n_graphs)
}

/// Batch training loss of one candidate: sum over member graphs of
/// ln(1 + residual square sum).
pub fn candidate_train_loss<T: Dtype, E: Engine<T>>(
    e: &mut E,
    ctx: &ForwardCtx<'_, T>,
    cand: &E::V,
) -> E::V {
    let sq = candidate_squared_residuals(e, ctx, cand);
    let lt = e.ln1p(&sq);
    e.sum_all(&lt)
}
