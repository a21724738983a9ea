//! Electrical network data model and validation.
//!
//! Sign convention: injections are generation-positive. A load of 1.48 MW on
//! a 10 MVA base appears as `p = -0.148` p.u. Angles are radians internally;
//! degrees exist only at file boundaries.

use std::collections::BTreeMap;

use crate::error::NetworkError;
use crate::scalar::Scalar;

/// Power flow bus classification. Determines which of the four node
/// variables (P, Q, V, theta) are specified and which are solved for:
/// PQ fixes P and Q, PV fixes P and V, the slack fixes V and theta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BusType {
    Pq,
    Pv,
    Slack,
}

impl BusType {
    /// Numeric code used by the ppc-style case tables (1 = PQ, 2 = PV, 3 = slack).
    pub fn code(self) -> u8 {
        match self {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Slack => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(BusType::Pq),
            2 => Some(BusType::Pv),
            3 => Some(BusType::Slack),
            _ => None,
        }
    }
}

/// A single electrical node. `p`/`q` are net injections in per-unit,
/// `vm` in per-unit, `va` in radians. Which fields are meaningful as data
/// depends on `bus_type`; the rest are starting values or solver output.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus<T> {
    pub id: usize,
    pub bus_type: BusType,
    pub p: T,
    pub q: T,
    pub vm: T,
    pub va: T,
    pub base_kv: T,
}

/// A series branch (line or two-winding transformer) in the pi model.
/// `tap` is the off-nominal turns ratio on the `from` side, 1.0 meaning none.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch<T> {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: T,
    pub x: T,
    pub b_charging: T,
    pub tap: T,
    pub in_service: bool,
}

/// The electrical graph: buses, branches, and the system base power.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub base_mva: T,
    pub buses: Vec<Bus<T>>,
    pub branches: Vec<Branch<T>>,
}

/// A violated network invariant. Violations are data, not failures;
/// `validate` returns all of them in a deterministic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateBusId { id: usize },
    NoSlack,
    MultipleSlack { bus_ids: Vec<usize> },
    Disconnected { bus: usize },
    UnknownBus { branch: usize, bus: usize },
    SelfLoop { branch: usize },
    ZeroImpedance { branch: usize },
    NonPositiveTap { branch: usize },
    NonPositiveVm { bus: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DuplicateBusId { id } => write!(f, "duplicate bus id {id}"),
            Violation::NoSlack => write!(f, "network has no slack bus"),
            Violation::MultipleSlack { bus_ids } => write!(f, "multiple slack buses: {bus_ids:?}"),
            Violation::Disconnected { bus } => write!(f, "bus {bus} is not connected to the slack"),
            Violation::UnknownBus { branch, bus } => {
                write!(f, "branch {branch} references unknown bus {bus}")
            }
            Violation::SelfLoop { branch } => write!(f, "branch {branch} is a self loop"),
            Violation::ZeroImpedance { branch } => {
                write!(f, "branch {branch} has r = x = 0")
            }
            Violation::NonPositiveTap { branch } => write!(f, "branch {branch} has tap <= 0"),
            Violation::NonPositiveVm { bus } => {
                write!(f, "bus {bus} has a specified vm <= 0")
            }
        }
    }
}

impl<T: Scalar> Network<T> {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Map from bus id to positional index.
    pub fn bus_index(&self) -> BTreeMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    /// Positional index of the slack bus, if there is exactly one.
    pub fn slack_index(&self) -> Option<usize> {
        let mut it = self
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.bus_type == BusType::Slack);
        let first = it.next()?;
        if it.next().is_some() {
            return None;
        }
        Some(first.0)
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = (usize, &Branch<T>)> {
        self.branches.iter().enumerate().filter(|(_, b)| b.in_service)
    }

    /// Checks every structural invariant and returns all violations,
    /// ordered deterministically (by kind, then by bus/branch id).
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        let mut seen = BTreeMap::new();
        for bus in &self.buses {
            *seen.entry(bus.id).or_insert(0usize) += 1;
        }
        for (&id, &count) in &seen {
            if count > 1 {
                out.push(Violation::DuplicateBusId { id });
            }
        }

        let slack_ids: Vec<usize> = self
            .buses
            .iter()
            .filter(|b| b.bus_type == BusType::Slack)
            .map(|b| b.id)
            .collect();
        if slack_ids.is_empty() {
            out.push(Violation::NoSlack);
        } else if slack_ids.len() > 1 {
            let mut ids = slack_ids.clone();
            ids.sort_unstable();
            out.push(Violation::MultipleSlack { bus_ids: ids });
        }

        for (i, bus) in self.buses.iter().enumerate() {
            let vm_specified = matches!(bus.bus_type, BusType::Pv | BusType::Slack);
            if vm_specified && bus.vm <= T::zero() {
                out.push(Violation::NonPositiveVm { bus: self.buses[i].id });
            }
        }

        let index = self.bus_index();
        for (bi, br) in self.branches.iter().enumerate() {
            if br.from_bus == br.to_bus {
                out.push(Violation::SelfLoop { branch: bi });
            }
            for bus in [br.from_bus, br.to_bus] {
                if !index.contains_key(&bus) {
                    out.push(Violation::UnknownBus { branch: bi, bus });
                }
            }
            if br.r == T::zero() && br.x == T::zero() {
                out.push(Violation::ZeroImpedance { branch: bi });
            }
            if br.tap <= T::zero() {
                out.push(Violation::NonPositiveTap { branch: bi });
            }
        }

        // Connectivity over in-service branches, from the slack if there is
        // one, otherwise from the first bus.
        if !self.buses.is_empty() {
            let root = self.slack_index().unwrap_or(0);
            let reach = self.reachable_from(root, true, &index);
            for (i, bus) in self.buses.iter().enumerate() {
                if !reach[i] {
                    out.push(Violation::Disconnected { bus: bus.id });
                }
            }
        }

        out.sort_by_key(violation_order);
        out
    }

    fn reachable_from(
        &self,
        root: usize,
        in_service_only: bool,
        index: &BTreeMap<usize, usize>,
    ) -> Vec<bool> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            if in_service_only && !br.in_service {
                continue;
            }
            if let (Some(&f), Some(&t)) = (index.get(&br.from_bus), index.get(&br.to_bus)) {
                adj[f].push(t);
                adj[t].push(f);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(i) = stack.pop() {
            for &k in &adj[i] {
                if !seen[k] {
                    seen[k] = true;
                    stack.push(k);
                }
            }
        }
        seen
    }

    /// Splits a network into its connected components (all branches count,
    /// in service or not, so the branch multiset is preserved exactly).
    /// Every component must contain at least one slack bus.
    pub fn split_by_slack(&self) -> Result<Vec<Network<T>>, NetworkError> {
        let n = self.buses.len();
        let index = self.bus_index();
        let mut component = vec![usize::MAX; n];
        let mut n_components = 0;
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let reach = self.reachable_from(start, false, &index);
            for (i, &r) in reach.iter().enumerate() {
                if r && component[i] == usize::MAX {
                    component[i] = n_components;
                }
            }
            n_components += 1;
        }

        let mut nets: Vec<Network<T>> = (0..n_components)
            .map(|_| Network { base_mva: self.base_mva, buses: Vec::new(), branches: Vec::new() })
            .collect();
        for (i, bus) in self.buses.iter().enumerate() {
            nets[component[i]].buses.push(bus.clone());
        }
        for br in &self.branches {
            let c = component[index[&br.from_bus]];
            nets[c].branches.push(br.clone());
        }
        for (c, net) in nets.iter().enumerate() {
            if !net.buses.iter().any(|b| b.bus_type == BusType::Slack) {
                return Err(NetworkError::ComponentWithoutSlack { component: c });
            }
        }
        Ok(nets)
    }
}

fn violation_order(v: &Violation) -> (u8, usize) {
    match v {
        Violation::DuplicateBusId { id } => (0, *id),
        Violation::NoSlack => (1, 0),
        Violation::MultipleSlack { .. } => (2, 0),
        Violation::UnknownBus { branch, .. } => (3, *branch),
        Violation::SelfLoop { branch } => (4, *branch),
        Violation::ZeroImpedance { branch } => (5, *branch),
        Violation::NonPositiveTap { branch } => (6, *branch),
        Violation::NonPositiveVm { bus } => (7, *bus),
        Violation::Disconnected { bus } => (8, *bus),
    }
}

/// Merges networks into one with no edges between the parts, relabelling bus
/// ids to the global bus position. Returns the merged network and, per input,
/// the range of bus positions it occupies.
pub fn disjoint_union<T: Scalar>(nets: &[&Network<T>]) -> (Network<T>, Vec<std::ops::Range<usize>>) {
    let mut buses = Vec::new();
    let mut branches = Vec::new();
    let mut ranges = Vec::with_capacity(nets.len());
    for net in nets {
        let offset = buses.len();
        let index = net.bus_index();
        for bus in &net.buses {
            let mut b = bus.clone();
            b.id = offset + index[&bus.id];
            buses.push(b);
        }
        for br in &net.branches {
            let mut b = br.clone();
            b.from_bus = offset + index[&br.from_bus];
            b.to_bus = offset + index[&br.to_bus];
            branches.push(b);
        }
        ranges.push(offset..buses.len());
    }
    let base = nets.first().map(|n| n.base_mva).unwrap_or_else(T::one);
    (Network { base_mva: base, buses, branches }, ranges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bus(id: usize, bus_type: BusType) -> Bus<f64> {
        Bus { id, bus_type, p: 0.0, q: 0.0, vm: 1.0, va: 0.0, base_kv: 20.0 }
    }

    fn line(from_bus: usize, to_bus: usize) -> Branch<f64> {
        Branch { from_bus, to_bus, r: 0.01, x: 0.05, b_charging: 0.0, tap: 1.0, in_service: true }
    }

    fn two_bus() -> Network64 {
        Network {
            base_mva: 10.0,
            buses: vec![bus(0, BusType::Slack), bus(1, BusType::Pq)],
            branches: vec![line(0, 1)],
        }
    }

    use crate::Network64;

    #[test]
    fn minimal_net_is_valid() {
        assert!(two_bus().validate().is_empty());
    }

    #[test]
    fn two_slacks_flagged() {
        let mut net = two_bus();
        net.buses[1].bus_type = BusType::Slack;
        assert_eq!(net.validate(), vec![Violation::MultipleSlack { bus_ids: vec![0, 1] }]);
    }

    #[test]
    fn isolated_bus_flagged() {
        let mut net = two_bus();
        net.buses.push(bus(3, BusType::Pq));
        assert_eq!(net.validate(), vec![Violation::Disconnected { bus: 3 }]);
    }

    #[test]
    fn zero_impedance_and_self_loop_flagged() {
        let mut net = two_bus();
        net.branches.push(Branch { from_bus: 1, to_bus: 1, r: 0.0, x: 0.0, b_charging: 0.0, tap: 1.0, in_service: true });
        let v = net.validate();
        assert!(v.contains(&Violation::SelfLoop { branch: 1 }));
        assert!(v.contains(&Violation::ZeroImpedance { branch: 1 }));
    }

    #[test]
    fn split_is_identity_on_connected_net() {
        let net = two_bus();
        let parts = net.split_by_slack().unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0], net);
    }

    #[test]
    fn split_two_rings() {
        // two disjoint 3-bus rings, each with its own slack
        let mut buses = Vec::new();
        let mut branches = Vec::new();
        for ring in 0..2 {
            let base = ring * 3;
            buses.push(bus(base, BusType::Slack));
            buses.push(bus(base + 1, BusType::Pq));
            buses.push(bus(base + 2, BusType::Pq));
            branches.push(line(base, base + 1));
            branches.push(line(base + 1, base + 2));
            branches.push(line(base + 2, base));
        }
        let net = Network { base_mva: 10.0, buses, branches };
        let parts = net.split_by_slack().unwrap();
        assert_eq!(parts.len(), 2);
        for part in &parts {
            assert!(part.validate().is_empty());
            assert_eq!(part.buses.len(), 3);
            assert_eq!(part.branches.len(), 3);
        }
    }

    #[test]
    fn split_sizes_preserved() {
        // disjoint grids of sizes 100 and 20 split into exactly those sizes
        let mut buses = Vec::new();
        let mut branches = Vec::new();
        for (offset, size) in [(0usize, 100usize), (100, 20)] {
            buses.push(bus(offset, BusType::Slack));
            for i in 1..size {
                buses.push(bus(offset + i, BusType::Pq));
                branches.push(line(offset + i - 1, offset + i));
            }
        }
        let net = Network { base_mva: 10.0, buses, branches };
        let mut sizes: Vec<usize> =
            net.split_by_slack().unwrap().iter().map(|n| n.buses.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![20, 100]);
        let total_branches: usize =
            net.split_by_slack().unwrap().iter().map(|n| n.branches.len()).sum();
        assert_eq!(total_branches, net.branches.len());
    }

    #[test]
    fn split_without_slack_errors() {
        let mut net = two_bus();
        net.buses.push(bus(7, BusType::Pq));
        match net.split_by_slack() {
            Err(NetworkError::ComponentWithoutSlack { component }) => assert_eq!(component, 1),
            other => panic!("expected ComponentWithoutSlack, got {other:?}"),
        }
    }

    #[test]
    fn disjoint_union_has_no_cross_edges() {
        let a = two_bus();
        let b = two_bus();
        let (u, ranges) = disjoint_union(&[&a, &b]);
        assert_eq!(u.buses.len(), 4);
        assert_eq!(ranges, vec![0..2, 2..4]);
        for br in &u.branches {
            let ga = ranges.iter().position(|r| r.contains(&br.from_bus));
            let gb = ranges.iter().position(|r| r.contains(&br.to_bus));
            assert_eq!(ga, gb);
        }
    }
}
