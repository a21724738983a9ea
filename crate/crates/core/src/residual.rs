//! The shared power-balance residual kernel.
//!
//! Both the Newton-Raphson mismatch and the physics loss are this one
//! computation, so the solver and the metric can never drift apart:
//!
//!   dP_i = P_i - sum_k |V_i||V_k| (G_ik cos t_ik + B_ik sin t_ik)
//!   dQ_i = Q_i - sum_k |V_i||V_k| (G_ik sin t_ik - B_ik cos t_ik)
//!
//! with t_ik = theta_i - theta_k.

use crate::error::LossError;
use crate::scalar::Scalar;
use crate::state::GridState;
use crate::ybus::AdmittanceMatrix;

/// Compensated (Kahan) accumulator; keeps long sums order-stable enough to
/// test additivity at 1e-9.
#[derive(Debug, Clone, Copy)]
pub struct KahanSum<T> {
    sum: T,
    c: T,
}

impl<T: Scalar> KahanSum<T> {
    pub fn new() -> Self {
        KahanSum { sum: T::zero(), c: T::zero() }
    }

    #[inline]
    pub fn add(&mut self, v: T) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum
    }
}

impl<T: Scalar> Default for KahanSum<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Computed nodal injections implied by the voltage state: for every bus,
/// (P_calc, Q_calc) = the double sum over the Ybus row.
pub fn computed_injections<T: Scalar>(
    y: &AdmittanceMatrix<T>,
    state: &GridState<T>,
) -> Result<(Vec<T>, Vec<T>), LossError> {
    let n = y.dim();
    if state.len() != n {
        return Err(LossError::DimensionMismatch { expected: n, found: state.len() });
    }
    let mut p_calc = vec![T::zero(); n];
    let mut q_calc = vec![T::zero(); n];
    for i in 0..n {
        let vi = state.vm[i];
        let ti = state.va[i];
        let mut ps = KahanSum::new();
        let mut qs = KahanSum::new();
        for &(k, g, b) in y.row(i) {
            let d = ti - state.va[k];
            let (s, c) = d.sin_cos();
            let vv = vi * state.vm[k];
            ps.add(vv * (g * c + b * s));
            qs.add(vv * (g * s - b * c));
        }
        p_calc[i] = ps.value();
        q_calc[i] = qs.value();
    }
    Ok((p_calc, q_calc))
}

/// Per-bus power-balance residuals (dP, dQ) in per-unit.
pub fn power_residuals<T: Scalar>(
    y: &AdmittanceMatrix<T>,
    state: &GridState<T>,
) -> Result<(Vec<T>, Vec<T>), LossError> {
    let (mut p_calc, mut q_calc) = computed_injections(y, state)?;
    for i in 0..y.dim() {
        p_calc[i] = state.p[i] - p_calc[i];
        q_calc[i] = state.q[i] - q_calc[i];
    }
    Ok((p_calc, q_calc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Branch, Bus, BusType, Network};
    use crate::state::flat_state;
    use crate::ybus::build_ybus;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_injection_flat_state_is_balanced() {
        let buses = (0..4)
            .map(|id| Bus {
                id,
                bus_type: if id == 0 { BusType::Slack } else { BusType::Pq },
                p: 0.0,
                q: 0.0,
                vm: 1.0,
                va: 0.0,
                base_kv: 20.0,
            })
            .collect();
        let branches = (0..3)
            .map(|i| Branch {
                from_bus: i,
                to_bus: i + 1,
                r: 0.01,
                x: 0.05,
                b_charging: 0.0,
                tap: 1.0,
                in_service: true,
            })
            .collect();
        let net = Network { base_mva: 10.0, buses, branches };
        let y = build_ybus(&net).unwrap();
        let (dp, dq) = power_residuals(&y, &flat_state(&net)).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(dp[i], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(dq[i], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_bus_matches_hand_formula() {
        // oracle: direct scalar evaluation of the two-term sums
        let net = Network {
            base_mva: 10.0,
            buses: vec![
                Bus { id: 0, bus_type: BusType::Slack, p: 0.0, q: 0.0, vm: 1.0, va: 0.0, base_kv: 20.0 },
                Bus { id: 1, bus_type: BusType::Pq, p: -0.1, q: -0.02, vm: 1.0, va: 0.0, base_kv: 20.0 },
            ],
            branches: vec![Branch {
                from_bus: 0,
                to_bus: 1,
                r: 0.02,
                x: 0.1,
                b_charging: 0.0,
                tap: 1.0,
                in_service: true,
            }],
        };
        let y = build_ybus(&net).unwrap();
        let mut state = flat_state(&net);
        state.vm[1] = 0.97;
        state.va[1] = -0.03;

        let (dp, dq) = power_residuals(&y, &state).unwrap();

        let (g00, b00) = y.get(0, 0).unwrap();
        let (g01, b01) = y.get(0, 1).unwrap();
        let (g10, b10) = y.get(1, 0).unwrap();
        let (g11, b11) = y.get(1, 1).unwrap();
        let (v0, v1, t0, t1) = (1.0f64, 0.97f64, 0.0f64, -0.03f64);

        let p0 = v0 * v0 * (g00 * (0.0f64).cos() + b00 * (0.0f64).sin())
            + v0 * v1 * (g01 * (t0 - t1).cos() + b01 * (t0 - t1).sin());
        let q0 = v0 * v0 * (g00 * (0.0f64).sin() - b00 * (0.0f64).cos())
            + v0 * v1 * (g01 * (t0 - t1).sin() - b01 * (t0 - t1).cos());
        let p1 = v1 * v1 * g11 + v1 * v0 * (g10 * (t1 - t0).cos() + b10 * (t1 - t0).sin());
        let q1 = v1 * v1 * (-b11) + v1 * v0 * (g10 * (t1 - t0).sin() - b10 * (t1 - t0).cos());

        assert_abs_diff_eq!(dp[0], 0.0 - p0, epsilon = 1e-14);
        assert_abs_diff_eq!(dq[0], 0.0 - q0, epsilon = 1e-14);
        assert_abs_diff_eq!(dp[1], -0.1 - p1, epsilon = 1e-14);
        assert_abs_diff_eq!(dq[1], -0.02 - q1, epsilon = 1e-14);
    }
}
