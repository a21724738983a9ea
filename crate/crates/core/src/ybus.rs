//! Nodal admittance matrix construction (standard pi model).

use std::collections::BTreeMap;

use crate::error::NetworkError;
use crate::network::Network;
use crate::scalar::Scalar;

/// Sparse complex nodal admittance matrix, stored as per-row lists of
/// `(column, G, B)` sorted by column. Structurally symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix<T> {
    n: usize,
    rows: Vec<Vec<(usize, T, T)>>,
}

impl<T: Scalar> AdmittanceMatrix<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry (i, k) as (G, B), or None where the matrix is structurally zero.
    pub fn get(&self, i: usize, k: usize) -> Option<(T, T)> {
        self.rows[i]
            .binary_search_by_key(&k, |e| e.0)
            .ok()
            .map(|pos| (self.rows[i][pos].1, self.rows[i][pos].2))
    }

    /// Entries of row i, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, T, T)] {
        &self.rows[i]
    }

    /// All entries in row-major order as (i, k, G, B).
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T, T)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(k, g, b)| (i, k, g, b)))
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        self.entries().all(|(i, k, _, _)| self.get(k, i).is_some())
    }

    fn from_map(n: usize, map: BTreeMap<(usize, usize), (T, T)>) -> Self {
        let mut rows = vec![Vec::new(); n];
        for ((i, k), (g, b)) in map {
            rows[i].push((k, g, b));
        }
        AdmittanceMatrix { n, rows }
    }
}

/// Builds the bus admittance matrix from a network's in-service branches.
///
/// Per branch with series impedance z = r + jx, charging b_c and tap ratio t:
/// the from-side diagonal gains (y + j b_c/2) / t^2, the to-side diagonal
/// gains y + j b_c/2, and both off-diagonals gain -y / t.
pub fn build_ybus<T: Scalar>(net: &Network<T>) -> Result<AdmittanceMatrix<T>, NetworkError> {
    let index = net.bus_index();
    let n = net.buses.len();
    let mut map: BTreeMap<(usize, usize), (T, T)> = BTreeMap::new();
    let mut add = |i: usize, k: usize, g: T, b: T| {
        let e = map.entry((i, k)).or_insert((T::zero(), T::zero()));
        e.0 += g;
        e.1 += b;
    };

    let two = T::from_f64(2.0);
    for (bi, br) in net.in_service_branches() {
        let denom = br.r * br.r + br.x * br.x;
        if denom == T::zero() {
            return Err(NetworkError::SingularBranch { branch: bi });
        }
        let g = br.r / denom;
        let b = -br.x / denom;
        let bc2 = br.b_charging / two;
        let tap = br.tap;
        let f = *index.get(&br.from_bus).ok_or(NetworkError::UnknownBus { bus: br.from_bus })?;
        let t = *index.get(&br.to_bus).ok_or(NetworkError::UnknownBus { bus: br.to_bus })?;

        add(f, f, g / (tap * tap), (b + bc2) / (tap * tap));
        add(t, t, g, b + bc2);
        add(f, t, -g / tap, -b / tap);
        add(t, f, -g / tap, -b / tap);
    }

    Ok(AdmittanceMatrix::from_map(n, map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Branch, Bus, BusType};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn net_with_branches(n: usize, branches: Vec<Branch<f64>>) -> Network<f64> {
        let buses = (0..n)
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
        Network { base_mva: 10.0, buses, branches }
    }

    #[test]
    fn no_branches_gives_zero_matrix() {
        let net = net_with_branches(3, vec![]);
        let y = build_ybus(&net).unwrap();
        assert_eq!(y.dim(), 3);
        assert_eq!(y.nnz(), 0);
    }

    #[test]
    fn two_bus_reactive_line() {
        // oracle: independent complex arithmetic, y = 1/(j 0.1)
        let z = Complex64::new(0.0, 0.1);
        let y_series = z.inv();
        let net = net_with_branches(
            2,
            vec![Branch { from_bus: 0, to_bus: 1, r: 0.0, x: 0.1, b_charging: 0.0, tap: 1.0, in_service: true }],
        );
        let y = build_ybus(&net).unwrap();
        let (g01, b01) = y.get(0, 1).unwrap();
        let (g00, b00) = y.get(0, 0).unwrap();
        assert_abs_diff_eq!(g01, -y_series.re, epsilon = 1e-15);
        assert_abs_diff_eq!(b01, -y_series.im, epsilon = 1e-15);
        assert_abs_diff_eq!(g00, y_series.re, epsilon = 1e-15);
        assert_abs_diff_eq!(b00, y_series.im, epsilon = 1e-15);
        // spelled out: B01 = 10, B00 = -10, G zero
        assert_abs_diff_eq!(b01, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b00, -10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g01, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tap_branch_matches_complex_oracle() {
        let r = 0.02;
        let x = 0.08;
        let bc = 0.04;
        let tap = 0.98;
        let net = net_with_branches(
            2,
            vec![Branch { from_bus: 0, to_bus: 1, r, x, b_charging: bc, tap, in_service: true }],
        );
        let y = build_ybus(&net).unwrap();
        let ys = Complex64::new(r, x).inv();
        let shunt = Complex64::new(0.0, bc / 2.0);
        let yff = (ys + shunt) / (tap * tap);
        let ytt = ys + shunt;
        let yft = -ys / tap;
        let (g00, b00) = y.get(0, 0).unwrap();
        let (g11, b11) = y.get(1, 1).unwrap();
        let (g01, b01) = y.get(0, 1).unwrap();
        assert_abs_diff_eq!(g00, yff.re, epsilon = 1e-14);
        assert_abs_diff_eq!(b00, yff.im, epsilon = 1e-14);
        assert_abs_diff_eq!(g11, ytt.re, epsilon = 1e-14);
        assert_abs_diff_eq!(b11, ytt.im, epsilon = 1e-14);
        assert_abs_diff_eq!(g01, yft.re, epsilon = 1e-14);
        assert_abs_diff_eq!(b01, yft.im, epsilon = 1e-14);
    }

    #[test]
    fn ring_is_numerically_symmetric() {
        let n = 6;
        let mut branches = Vec::new();
        for i in 0..n {
            branches.push(Branch {
                from_bus: i,
                to_bus: (i + 1) % n,
                r: 0.01,
                x: 0.04,
                b_charging: 0.02,
                tap: 1.0,
                in_service: true,
            });
        }
        let y = build_ybus(&net_with_branches(n, branches)).unwrap();
        assert!(y.is_structurally_symmetric());
        for (i, k, g, b) in y.entries() {
            let (g2, b2) = y.get(k, i).unwrap();
            assert_abs_diff_eq!(g, g2, epsilon = 1e-15);
            assert_abs_diff_eq!(b, b2, epsilon = 1e-15);
        }
    }

    #[test]
    fn out_of_service_branch_ignored() {
        let mut branches = vec![Branch {
            from_bus: 0,
            to_bus: 1,
            r: 0.01,
            x: 0.05,
            b_charging: 0.0,
            tap: 1.0,
            in_service: true,
        }];
        branches.push(Branch { in_service: false, ..branches[0].clone() });
        let y = build_ybus(&net_with_branches(2, branches)).unwrap();
        let single = build_ybus(&net_with_branches(
            2,
            vec![Branch { from_bus: 0, to_bus: 1, r: 0.01, x: 0.05, b_charging: 0.0, tap: 1.0, in_service: true }],
        ))
        .unwrap();
        assert_eq!(y, single);
    }

    #[test]
    fn singular_branch_rejected() {
        let net = net_with_branches(
            2,
            vec![Branch { from_bus: 0, to_bus: 1, r: 0.0, x: 0.0, b_charging: 0.0, tap: 1.0, in_service: true }],
        );
        assert_eq!(build_ybus(&net), Err(NetworkError::SingularBranch { branch: 0 }));
    }
}
