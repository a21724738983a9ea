//! Per-bus electrical state with known/unknown masks.

use crate::network::{BusType, Network};
use crate::scalar::Scalar;

/// Which of the four node variables are specified for a bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnownFlags {
    pub p: bool,
    pub q: bool,
    pub vm: bool,
    pub va: bool,
}

impl KnownFlags {
    pub fn for_bus_type(bt: BusType) -> Self {
        match bt {
            BusType::Pq => KnownFlags { p: true, q: true, vm: false, va: false },
            BusType::Pv => KnownFlags { p: true, q: false, vm: true, va: false },
            BusType::Slack => KnownFlags { p: false, q: false, vm: true, va: true },
        }
    }
}

/// Full per-bus state: injections (per-unit), voltage magnitude (per-unit)
/// and angle (radians), plus the known mask derived from the bus types.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState<T> {
    pub p: Vec<T>,
    pub q: Vec<T>,
    pub vm: Vec<T>,
    pub va: Vec<T>,
    pub known: Vec<KnownFlags>,
}

impl<T: Scalar> GridState<T> {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Concatenates states in order (used with disjoint network unions).
    pub fn concat(states: &[&GridState<T>]) -> GridState<T> {
        let mut out = GridState {
            p: Vec::new(),
            q: Vec::new(),
            vm: Vec::new(),
            va: Vec::new(),
            known: Vec::new(),
        };
        for s in states {
            out.p.extend_from_slice(&s.p);
            out.q.extend_from_slice(&s.q);
            out.vm.extend_from_slice(&s.vm);
            out.va.extend_from_slice(&s.va);
            out.known.extend_from_slice(&s.known);
        }
        out
    }
}

/// The flat start: known fields copied from the buses, unknown voltage
/// magnitudes set to 1.0 p.u., every other unknown set to zero.
pub fn flat_state<T: Scalar>(net: &Network<T>) -> GridState<T> {
    let n = net.buses.len();
    let mut state = GridState {
        p: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        vm: Vec::with_capacity(n),
        va: Vec::with_capacity(n),
        known: Vec::with_capacity(n),
    };
    for bus in &net.buses {
        let known = KnownFlags::for_bus_type(bus.bus_type);
        state.p.push(if known.p { bus.p } else { T::zero() });
        state.q.push(if known.q { bus.q } else { T::zero() });
        state.vm.push(if known.vm { bus.vm } else { T::one() });
        state.va.push(if known.va { bus.va } else { T::zero() });
        state.known.push(known);
    }
    state
}
