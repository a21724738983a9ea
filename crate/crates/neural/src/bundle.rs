//! Per-case precomputation shared by training, inference, and evaluation:
//! the network, its admittance matrix, the solver graph, the residual index
//! lists, and the clamp tensors that pin known variables.

use std::path::Path;

use gridflow_autodiff::{Dtype, Tensor};
use gridflow_core::casefile::{to_network, CaseDocument};
use gridflow_core::dataset::{read_dataset, DatasetManifest, Split};
use gridflow_core::error::DatasetError;
use gridflow_core::network::Network;
use gridflow_core::state::flat_state;
use gridflow_core::ybus::{build_ybus, AdmittanceMatrix};
use gridflow_core::GridState;

use crate::graph::{ResidualIndex, SolverGraph};
use crate::model::DECODED;

#[derive(Debug, Clone)]
pub struct CaseBundle<T> {
    pub net: Network<T>,
    pub ybus: AdmittanceMatrix<T>,
    pub flat: GridState<T>,
    pub graph: SolverGraph<T>,
    pub residuals: ResidualIndex<T>,
    /// n x 4 with ones where (p, q, vm, va) is a decision variable.
    pub unknown_mask: Tensor<T>,
    /// n x 4 with the specified value where known, zero elsewhere.
    pub known_values: Tensor<T>,
}

impl<T: Dtype> CaseBundle<T> {
    pub fn new(net: Network<T>) -> Result<Self, gridflow_core::NetworkError> {
        let ybus = build_ybus(&net)?;
        let flat = flat_state(&net);
        let graph = SolverGraph::build(&net);
        let residuals = ResidualIndex::build(&ybus);
        let n = net.n_buses();
        let mut unknown_mask = Tensor::zeros(n, DECODED);
        let mut known_values = Tensor::zeros(n, DECODED);
        for i in 0..n {
            let k = flat.known[i];
            let vals = [flat.p[i], flat.q[i], flat.vm[i], flat.va[i]];
            for (col, known) in [k.p, k.q, k.vm, k.va].into_iter().enumerate() {
                if known {
                    known_values.set(i, col, vals[col]);
                } else {
                    unknown_mask.set(i, col, T::one());
                }
            }
        }
        Ok(CaseBundle { net, ybus, flat, graph, residuals, unknown_mask, known_values })
    }

    pub fn from_document(doc: &CaseDocument) -> Result<Self, DatasetError> {
        let net = to_network::<T>(doc)?;
        CaseBundle::new(net).map_err(|e| {
            DatasetError::BadManifest(format!("case does not form a solvable network: {e}"))
        })
    }

    pub fn n_buses(&self) -> usize {
        self.net.n_buses()
    }

    /// Node feature rows for a (typically randomized) start state:
    /// [p, q, vm, va, sin va, cos va, one-hot(PQ, PV, Slack)].
    pub fn features(&self, state: &GridState<T>) -> Tensor<T> {
        state_features(&self.net, state)
    }

    /// Reads a decoded n x 4 candidate back into a grid state, overwriting
    /// every known variable with the case value so clamping is bit-exact.
    pub fn candidate_state(&self, decoded: &Tensor<T>) -> GridState<T> {
        debug_assert_eq!(decoded.rows(), self.n_buses());
        let mut state = self.flat.clone();
        for i in 0..self.n_buses() {
            let k = state.known[i];
            if !k.p {
                state.p[i] = decoded.at(i, 0);
            }
            if !k.q {
                state.q[i] = decoded.at(i, 1);
            }
            if !k.vm {
                state.vm[i] = decoded.at(i, 2);
            }
            if !k.va {
                state.va[i] = decoded.at(i, 3);
            }
        }
        state
    }
}

/// Input preconditioning: injections and angles are small in per-unit
/// terms, so they are scaled up to give every feature comparable variance.
const INJECTION_FEATURE_SCALE: f64 = 20.0;
const VOLTAGE_FEATURE_SCALE: f64 = 10.0;

/// The raw (p, q, vm, va) state as an n x 4 matrix, the shape the decoder
/// refines.
pub fn state_matrix<T: Dtype>(state: &GridState<T>) -> Tensor<T> {
    let n = state.len();
    let mut out = Tensor::zeros(n, DECODED);
    for i in 0..n {
        out.set(i, 0, state.p[i]);
        out.set(i, 1, state.q[i]);
        out.set(i, 2, state.vm[i]);
        out.set(i, 3, state.va[i]);
    }
    out
}

pub fn state_features<T: Dtype>(net: &Network<T>, state: &GridState<T>) -> Tensor<T> {
    let n = state.len();
    let s_inj = T::from_f64(INJECTION_FEATURE_SCALE);
    let s_v = T::from_f64(VOLTAGE_FEATURE_SCALE);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![
            state.p[i] * s_inj,
            state.q[i] * s_inj,
            (state.vm[i] - T::one()) * s_v,
            state.va[i] * s_v,
            state.va[i].sin(),
            state.va[i].cos(),
            T::zero(),
            T::zero(),
            T::zero(),
        ];
        let slot = match net.buses[i].bus_type {
            gridflow_core::BusType::Pq => 6,
            gridflow_core::BusType::Pv => 7,
            gridflow_core::BusType::Slack => 8,
        };
        row[slot] = T::one();
        rows.push(row);
    }
    Tensor::from_rows(&rows)
}

/// A batch of bundles merged into one disjoint union.
#[derive(Debug)]
pub struct UnionBatch<T> {
    pub graph: SolverGraph<T>,
    pub residuals: ResidualIndex<T>,
    pub unknown_mask: Tensor<T>,
    pub known_values: Tensor<T>,
    /// Bus ranges per member, in batch order.
    pub ranges: Vec<std::ops::Range<usize>>,
}

pub fn union_batch<T: Dtype>(bundles: &[&CaseBundle<T>]) -> UnionBatch<T> {
    let graphs: Vec<&SolverGraph<T>> = bundles.iter().map(|b| &b.graph).collect();
    let residx: Vec<&ResidualIndex<T>> = bundles.iter().map(|b| &b.residuals).collect();
    let graph = SolverGraph::union(&graphs);
    let residuals = ResidualIndex::union(&residx);
    let n: usize = bundles.iter().map(|b| b.n_buses()).sum();
    let mut unknown_mask = Tensor::zeros(n, DECODED);
    let mut known_values = Tensor::zeros(n, DECODED);
    let mut ranges = Vec::with_capacity(bundles.len());
    let mut offset = 0usize;
    for b in bundles {
        let nb = b.n_buses();
        for i in 0..nb {
            for c in 0..DECODED {
                unknown_mask.set(offset + i, c, b.unknown_mask.at(i, c));
                known_values.set(offset + i, c, b.known_values.at(i, c));
            }
        }
        ranges.push(offset..offset + nb);
        offset += nb;
    }
    UnionBatch { graph, residuals, unknown_mask, known_values, ranges }
}

/// Loads one split of a dataset into memory as bundles (unsolved cases; the
/// solver never sees the stored solutions).
pub fn load_split<T: Dtype>(
    dir: &Path,
    split: Split,
) -> Result<(DatasetManifest, Vec<CaseBundle<T>>), DatasetError> {
    let (manifest, stream) = read_dataset(dir)?;
    let range = manifest.indices_of(split);
    let mut bundles = Vec::with_capacity(range.len());
    for (i, doc) in stream.enumerate() {
        if range.contains(&i) {
            bundles.push(CaseBundle::from_document(&doc?)?);
        }
    }
    Ok((manifest, bundles))
}
