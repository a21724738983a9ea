//! The bipartite solver graph: every bus and every in-service branch of the
//! electrical graph becomes a node, and each electrical incidence becomes a
//! pair of opposing directed arcs, so hidden state can live on both buses
//! and branches.

use std::rc::Rc;

use gridflow_autodiff::Dtype;
use gridflow_core::network::{BusType, Network};
use gridflow_core::ybus::AdmittanceMatrix;

#[derive(Debug, Clone)]
pub struct SolverGraph<T> {
    pub n_bus: usize,
    pub n_branch: usize,
    /// Positions of the represented branches in `Network.branches`.
    pub branch_index: Vec<usize>,
    /// Bus endpoint per incidence (2 entries per branch); each incidence
    /// carries one bus->branch arc and one branch->bus arc.
    pub arc_bus: Rc<Vec<usize>>,
    /// Branch node per incidence, aligned with `arc_bus`.
    pub arc_branch: Rc<Vec<usize>>,
    /// Series conductance per branch node (tap and charging excluded).
    pub branch_g: Vec<T>,
    /// Series susceptance per branch node.
    pub branch_b: Vec<T>,
    /// Bus rows per bus type, order [PQ, PV, Slack].
    pub type_rows: [Rc<Vec<usize>>; 3],
    /// Which member graph each bus belongs to (all zero for a single case).
    pub graph_of_bus: Rc<Vec<usize>>,
    pub n_graphs: usize,
    pub graph_sizes: Vec<usize>,
}

impl<T: Dtype> SolverGraph<T> {
    /// Directed arc count: two incidences per branch, two directions each.
    pub fn arc_count(&self) -> usize {
        2 * self.arc_bus.len()
    }

    pub fn node_count(&self) -> usize {
        self.n_bus + self.n_branch
    }

    pub fn build(net: &Network<T>) -> Self {
        let index = net.bus_index();
        let n_bus = net.buses.len();
        let mut branch_index = Vec::new();
        let mut arc_bus = Vec::new();
        let mut arc_branch = Vec::new();
        let mut branch_g = Vec::new();
        let mut branch_b = Vec::new();
        for (bi, br) in net.in_service_branches() {
            let e = branch_index.len();
            branch_index.push(bi);
            let denom = br.r * br.r + br.x * br.x;
            branch_g.push(br.r / denom);
            branch_b.push(-br.x / denom);
            for bus in [br.from_bus, br.to_bus] {
                arc_bus.push(index[&bus]);
                arc_branch.push(e);
            }
        }

        let mut type_rows = [Vec::new(), Vec::new(), Vec::new()];
        for (i, bus) in net.buses.iter().enumerate() {
            let slot = match bus.bus_type {
                BusType::Pq => 0,
                BusType::Pv => 1,
                BusType::Slack => 2,
            };
            type_rows[slot].push(i);
        }

        SolverGraph {
            n_bus,
            n_branch: branch_index.len(),
            branch_index,
            arc_bus: Rc::new(arc_bus),
            arc_branch: Rc::new(arc_branch),
            branch_g,
            branch_b,
            type_rows: type_rows.map(Rc::new),
            graph_of_bus: Rc::new(vec![0; n_bus]),
            n_graphs: 1,
            graph_sizes: vec![n_bus],
        }
    }

    /// Disjoint union of solver graphs: indices shift, no arcs between
    /// members, and `graph_of_bus` tracks membership for per-graph
    /// reductions.
    pub fn union(graphs: &[&SolverGraph<T>]) -> Self {
        let mut out = SolverGraph {
            n_bus: 0,
            n_branch: 0,
            branch_index: Vec::new(),
            arc_bus: Rc::new(Vec::new()),
            arc_branch: Rc::new(Vec::new()),
            branch_g: Vec::new(),
            branch_b: Vec::new(),
            type_rows: [Rc::new(Vec::new()), Rc::new(Vec::new()), Rc::new(Vec::new())],
            graph_of_bus: Rc::new(Vec::new()),
            n_graphs: graphs.len(),
            graph_sizes: Vec::new(),
        };
        let mut arc_bus = Vec::new();
        let mut arc_branch = Vec::new();
        let mut graph_of_bus = Vec::new();
        let mut type_rows = [Vec::new(), Vec::new(), Vec::new()];
        for (g, graph) in graphs.iter().enumerate() {
            let bus_offset = out.n_bus;
            let branch_offset = out.n_branch;
            arc_bus.extend(graph.arc_bus.iter().map(|&b| b + bus_offset));
            arc_branch.extend(graph.arc_branch.iter().map(|&e| e + branch_offset));
            for slot in 0..3 {
                type_rows[slot].extend(graph.type_rows[slot].iter().map(|&r| r + bus_offset));
            }
            graph_of_bus.extend(std::iter::repeat_n(g, graph.n_bus));
            out.branch_index.extend(graph.branch_index.iter().copied());
            out.branch_g.extend(graph.branch_g.iter().copied());
            out.branch_b.extend(graph.branch_b.iter().copied());
            out.n_bus += graph.n_bus;
            out.n_branch += graph.n_branch;
            out.graph_sizes.push(graph.n_bus);
        }
        out.arc_bus = Rc::new(arc_bus);
        out.arc_branch = Rc::new(arc_branch);
        out.type_rows = type_rows.map(Rc::new);
        out.graph_of_bus = Rc::new(graph_of_bus);
        out
    }
}

/// Index lists over the admittance matrix entries, used to evaluate the
/// power-balance residuals with tensor ops inside the training graph.
/// Entry order matches `AdmittanceMatrix::entries`, which is also the order
/// the scalar loss kernel uses.
#[derive(Debug, Clone)]
pub struct ResidualIndex<T> {
    pub n_bus: usize,
    pub rows: Rc<Vec<usize>>,
    pub cols: Rc<Vec<usize>>,
    pub g: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Dtype> ResidualIndex<T> {
    pub fn build(y: &AdmittanceMatrix<T>) -> Self {
        let mut rows = Vec::with_capacity(y.nnz());
        let mut cols = Vec::with_capacity(y.nnz());
        let mut g = Vec::with_capacity(y.nnz());
        let mut b = Vec::with_capacity(y.nnz());
        for (i, k, gv, bv) in y.entries() {
            rows.push(i);
            cols.push(k);
            g.push(gv);
            b.push(bv);
        }
        ResidualIndex { n_bus: y.dim(), rows: Rc::new(rows), cols: Rc::new(cols), g, b }
    }

    pub fn union(parts: &[&ResidualIndex<T>]) -> Self {
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut g = Vec::new();
        let mut b = Vec::new();
        let mut offset = 0usize;
        for part in parts {
            rows.extend(part.rows.iter().map(|&r| r + offset));
            cols.extend(part.cols.iter().map(|&c| c + offset));
            g.extend(part.g.iter().copied());
            b.extend(part.b.iter().copied());
            offset += part.n_bus;
        }
        ResidualIndex { n_bus: offset, rows: Rc::new(rows), cols: Rc::new(cols), g, b }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridflow_core::network::{Branch, Bus};

    fn bus(id: usize, bus_type: BusType) -> Bus<f64> {
        Bus { id, bus_type, p: 0.0, q: 0.0, vm: 1.0, va: 0.0, base_kv: 20.0 }
    }

    fn line(from_bus: usize, to_bus: usize, r: f64, x: f64) -> Branch<f64> {
        Branch { from_bus, to_bus, r, x, b_charging: 0.0, tap: 1.0, in_service: true }
    }

    #[test]
    fn two_bus_graph_has_three_nodes_four_arcs() {
        let net = Network {
            base_mva: 10.0,
            buses: vec![bus(0, BusType::Slack), bus(1, BusType::Pq)],
            branches: vec![line(0, 1, 0.01, 0.05)],
        };
        let g = SolverGraph::build(&net);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.arc_count(), 4);
    }

    #[test]
    fn closed_ring_counts() {
        let n = 7;
        let buses = (0..n)
            .map(|i| bus(i, if i == 0 { BusType::Slack } else { BusType::Pq }))
            .collect();
        let branches = (0..n).map(|i| line(i, (i + 1) % n, 0.01, 0.05)).collect();
        let net = Network { base_mva: 10.0, buses, branches };
        let g = SolverGraph::build(&net);
        // ring of n buses and n branches: 2n solver nodes, 4n arcs
        assert_eq!(g.node_count(), 2 * n);
        assert_eq!(g.arc_count(), 4 * n);
    }

    #[test]
    fn branch_features_are_series_admittance() {
        let net = Network {
            base_mva: 10.0,
            buses: vec![bus(0, BusType::Slack), bus(1, BusType::Pq)],
            branches: vec![line(0, 1, 0.0, 0.1)],
        };
        let g = SolverGraph::build(&net);
        // oracle: y = 1/(j 0.1) = -j10
        assert!((g.branch_g[0] - 0.0).abs() < 1e-12);
        assert!((g.branch_b[0] - (-10.0)).abs() < 1e-9);
    }

    #[test]
    fn union_offsets_and_membership() {
        let net = Network {
            base_mva: 10.0,
            buses: vec![bus(0, BusType::Slack), bus(1, BusType::Pq)],
            branches: vec![line(0, 1, 0.01, 0.05)],
        };
        let g = SolverGraph::build(&net);
        let u = SolverGraph::union(&[&g, &g, &g]);
        assert_eq!(u.n_bus, 6);
        assert_eq!(u.n_branch, 3);
        assert_eq!(u.arc_count(), 12);
        assert_eq!(u.graph_of_bus.as_ref(), &vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(u.type_rows[2].as_ref(), &vec![0, 2, 4]);
    }
}
