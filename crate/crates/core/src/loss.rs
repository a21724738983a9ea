//! Power-balance losses: per-node residual magnitudes, the absolute-sum
//! total, the log-of-squares training loss, and disjoint-union batching.

use crate::error::LossError;
use crate::network::{disjoint_union, Network};
use crate::residual::{power_residuals, KahanSum};
use crate::scalar::Scalar;
use crate::state::GridState;
use crate::ybus::{build_ybus, AdmittanceMatrix};

/// Loss summary for one grid and state.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LossReport<T> {
    /// |L_P| per bus, per-unit.
    pub per_node_p: Vec<T>,
    /// |L_Q| per bus, per-unit.
    pub per_node_q: Vec<T>,
    /// sum of |L_P| + |L_Q| over all buses, per-unit.
    pub total: T,
    /// ln(1 + sum of L_P^2 + L_Q^2), dimensionless.
    pub train: T,
    /// total * base_mva / bus count, the "loss per node" in MVA.
    pub per_node_mva: T,
}

/// Sum of absolute residuals (compensated summation, order independent to
/// well below 1e-12 for the magnitudes seen here).
pub fn total_loss<T: Scalar>(dp: &[T], dq: &[T]) -> T {
    let mut acc = KahanSum::new();
    for &v in dp {
        acc.add(v.abs());
    }
    for &v in dq {
        acc.add(v.abs());
    }
    acc.value()
}

/// ln(1 + sum of squared residuals). Zero exactly when every residual is
/// zero, and with a finite gradient there.
pub fn train_loss<T: Scalar>(dp: &[T], dq: &[T]) -> T {
    let mut acc = KahanSum::new();
    for &v in dp {
        acc.add(v * v);
    }
    for &v in dq {
        acc.add(v * v);
    }
    acc.value().ln_1p()
}

/// Per-bus residuals (L_P, L_Q); numerically identical to the solver
/// mismatch because both call the shared kernel.
pub fn node_residuals<T: Scalar>(
    y: &AdmittanceMatrix<T>,
    state: &GridState<T>,
) -> Result<(Vec<T>, Vec<T>), LossError> {
    power_residuals(y, state)
}

/// Full loss report for one network and state.
pub fn loss_report<T: Scalar>(
    net: &Network<T>,
    y: &AdmittanceMatrix<T>,
    state: &GridState<T>,
) -> Result<LossReport<T>, LossError> {
    let (dp, dq) = node_residuals(y, state)?;
    Ok(report_from_residuals(net.base_mva, &dp, &dq))
}

fn report_from_residuals<T: Scalar>(base_mva: T, dp: &[T], dq: &[T]) -> LossReport<T> {
    let total = total_loss(dp, dq);
    let train = train_loss(dp, dq);
    let n = T::from_usize(dp.len().max(1));
    LossReport {
        per_node_p: dp.iter().map(|v| v.abs()).collect(),
        per_node_q: dq.iter().map(|v| v.abs()).collect(),
        total,
        train,
        per_node_mva: total * base_mva / n,
    }
}

/// Evaluates a batch on the disjoint union of its graphs: one merged network
/// with no edges between members, residuals computed once, then reduced per
/// graph. Returns the batch training loss (sum of per-graph train losses)
/// and one report per graph, in input order.
pub fn batched_loss<T: Scalar>(
    batch: &[(&Network<T>, &GridState<T>)],
) -> Result<(T, Vec<LossReport<T>>), LossError> {
    if batch.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let nets: Vec<&Network<T>> = batch.iter().map(|(n, _)| *n).collect();
    let states: Vec<&GridState<T>> = batch.iter().map(|(_, s)| *s).collect();
    let (union, ranges) = disjoint_union(&nets);
    let union_state = GridState::concat(&states);
    let y = build_ybus(&union).map_err(|_| LossError::DimensionMismatch {
        expected: union.n_buses(),
        found: union_state.len(),
    })?;

    // structural check: the union must not couple members
    for (i, k, _, _) in y.entries() {
        let gi = ranges.iter().position(|r| r.contains(&i));
        let gk = ranges.iter().position(|r| r.contains(&k));
        debug_assert_eq!(gi, gk, "cross-graph admittance entry ({i}, {k})");
        if gi != gk {
            return Err(LossError::DimensionMismatch { expected: i, found: k });
        }
    }

    let (dp, dq) = node_residuals(&y, &union_state)?;
    let mut reports = Vec::with_capacity(batch.len());
    let mut batch_train = KahanSum::new();
    for (g, range) in ranges.iter().enumerate() {
        let report =
            report_from_residuals(nets[g].base_mva, &dp[range.clone()], &dq[range.clone()]);
        batch_train.add(report.train);
        reports.push(report);
    }
    Ok((batch_train.value(), reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Branch, Bus, BusType};
    use crate::state::flat_state;
    use approx::assert_abs_diff_eq;

    fn chain(n: usize, load_p: f64, load_q: f64) -> Network<f64> {
        let buses = (0..n)
            .map(|id| Bus {
                id,
                bus_type: if id == 0 { BusType::Slack } else { BusType::Pq },
                p: if id == 0 { 0.0 } else { load_p },
                q: if id == 0 { 0.0 } else { load_q },
                vm: 1.0,
                va: 0.0,
                base_kv: 20.0,
            })
            .collect();
        let branches = (1..n)
            .map(|i| Branch {
                from_bus: i - 1,
                to_bus: i,
                r: 0.01,
                x: 0.05,
                b_charging: 0.0,
                tap: 1.0,
                in_service: true,
            })
            .collect();
        Network { base_mva: 10.0, buses, branches }
    }

    #[test]
    fn flat_state_zero_injection_loss_is_exactly_zero() {
        let net = chain(5, 0.0, 0.0);
        let y = build_ybus(&net).unwrap();
        let report = loss_report(&net, &y, &flat_state(&net)).unwrap();
        assert_eq!(report.total, 0.0);
        assert_eq!(report.train, 0.0);
    }

    #[test]
    fn flat_state_residual_equals_injection_at_load_buses() {
        // at flat voltages with no charging the implied flows vanish,
        // leaving L_P = P at every bus
        let net = chain(4, -0.12, -0.03);
        let y = build_ybus(&net).unwrap();
        let (dp, dq) = node_residuals(&y, &flat_state(&net)).unwrap();
        for i in 1..4 {
            assert_abs_diff_eq!(dp[i], -0.12, epsilon = 1e-12);
            assert_abs_diff_eq!(dq[i], -0.03, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(dp[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn total_loss_is_absolute_sum() {
        assert_eq!(total_loss::<f64>(&[], &[]), 0.0);
        assert_eq!(total_loss(&[0.3], &[-0.4]), 0.7);
    }

    #[test]
    fn total_loss_matches_exact_summation_oracle() {
        // oracle: exact accumulation via two-sum expansion, independent of
        // the Kahan implementation
        let mut rng = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        let dp: Vec<f64> = (0..500).map(|_| next() * 1e-3).collect();
        let dq: Vec<f64> = (0..500).map(|_| next() * 1e3).collect();

        fn exact_sum(values: impl Iterator<Item = f64>) -> f64 {
            let mut parts: Vec<f64> = Vec::new();
            for mut x in values {
                let mut i = 0;
                for k in 0..parts.len() {
                    let y = parts[k];
                    let hi = x + y;
                    let lo = if x.abs() < y.abs() { x - (hi - y) } else { y - (hi - x) };
                    if lo != 0.0 {
                        parts[i] = lo;
                        i += 1;
                    }
                    x = hi;
                }
                parts.truncate(i);
                parts.push(x);
            }
            parts.iter().sum()
        }

        let expect = exact_sum(dp.iter().chain(dq.iter()).map(|v| v.abs()));
        assert_abs_diff_eq!(total_loss(&dp, &dq), expect, epsilon = 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn train_loss_values() {
        assert_eq!(train_loss::<f64>(&[0.0, 0.0], &[0.0]), 0.0);
        assert_abs_diff_eq!(train_loss(&[1.0], &[]), std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn total_zero_iff_train_zero() {
        let cases: Vec<(Vec<f64>, Vec<f64>)> =
            vec![(vec![0.0; 3], vec![0.0; 3]), (vec![1e-8, 0.0, 0.0], vec![0.0; 3])];
        for (dp, dq) in cases {
            let t = total_loss(&dp, &dq);
            let l = train_loss(&dp, &dq);
            assert_eq!(t == 0.0, l == 0.0);
        }
    }

    #[test]
    fn batch_of_one_equals_single_evaluation() {
        let net = chain(6, -0.1, -0.02);
        let state = flat_state(&net);
        let y = build_ybus(&net).unwrap();
        let single = loss_report(&net, &y, &state).unwrap();
        let (batch_train, reports) = batched_loss(&[(&net, &state)]).unwrap();
        assert_abs_diff_eq!(batch_train, single.train, epsilon = 1e-15);
        assert_abs_diff_eq!(reports[0].total, single.total, epsilon = 1e-15);
    }

    #[test]
    fn batch_of_copies_gives_identical_reports() {
        let net = chain(5, -0.08, -0.01);
        let state = flat_state(&net);
        let batch: Vec<_> = (0..4).map(|_| (&net, &state)).collect();
        let (_, reports) = batched_loss(&batch).unwrap();
        for r in &reports[1..] {
            assert_eq!(r.total, reports[0].total);
            assert_eq!(r.train, reports[0].train);
        }
    }

    #[test]
    fn batch_total_equals_sum_of_individuals() {
        let nets: Vec<Network<f64>> =
            vec![chain(3, -0.1, -0.02), chain(7, -0.05, 0.0), chain(12, -0.2, -0.04)];
        let states: Vec<GridState<f64>> = nets.iter().map(flat_state).collect();
        let batch: Vec<_> = nets.iter().zip(states.iter()).collect();
        let batch_refs: Vec<(&Network<f64>, &GridState<f64>)> =
            batch.iter().map(|(n, s)| (*n, *s)).collect();
        let (batch_train, _) = batched_loss(&batch_refs).unwrap();
        let mut expect = 0.0;
        for (net, state) in &batch_refs {
            let y = build_ybus(net).unwrap();
            expect += loss_report(net, &y, state).unwrap().train;
        }
        assert_abs_diff_eq!(batch_train, expect, epsilon = 1e-9);
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert!(matches!(batched_loss::<f64>(&[]), Err(LossError::EmptyBatch)));
    }
}
