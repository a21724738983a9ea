//! Newton-Raphson AC power flow in polar form.

use std::time::Instant;

use crate::error::NrError;
use crate::linsolve::{solve_dense, solve_sparse, SparseMatrix};
use crate::network::Network;
use crate::residual::{computed_injections, power_residuals};
use crate::scalar::Scalar;
use crate::state::GridState;
use crate::ybus::AdmittanceMatrix;

/// Which linear solver backs the Newton step. `Auto` uses dense LU up to
/// 500 unknowns and sparse elimination above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolverKind {
    Auto,
    Dense,
    Sparse,
}

pub const DENSE_UNKNOWN_LIMIT: usize = 500;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct NrOptions<T> {
    /// Convergence threshold on the infinity norm of the mismatch (p.u.).
    pub tol: T,
    pub max_iter: usize,
    pub linear_solver: LinearSolverKind,
}

impl<T: Scalar> Default for NrOptions<T> {
    fn default() -> Self {
        NrOptions { tol: T::from_f64(1e-8), max_iter: 30, linear_solver: LinearSolverKind::Auto }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct NrReport<T> {
    pub converged: bool,
    pub iterations: usize,
    pub final_mismatch: T,
    pub wall_time: f64,
}

/// Row/column layout of the reduced Newton system: P equations for PQ and PV
/// buses, then Q equations for PQ buses; theta columns for PQ and PV, then
/// V columns for PQ. Bus order is ascending within each block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLayout {
    pub theta_buses: Vec<usize>,
    pub v_buses: Vec<usize>,
}

impl UnknownLayout {
    pub fn from_state<T: Scalar>(state: &GridState<T>) -> Self {
        let theta_buses =
            (0..state.len()).filter(|&i| !state.known[i].va).collect();
        let v_buses = (0..state.len()).filter(|&i| !state.known[i].vm).collect();
        UnknownLayout { theta_buses, v_buses }
    }

    pub fn n_unknowns(&self) -> usize {
        self.theta_buses.len() + self.v_buses.len()
    }
}

/// Per-bus power mismatch (dP, dQ); the shared residual kernel with a
/// dimension check against the network.
pub fn power_mismatch<T: Scalar>(
    net: &Network<T>,
    y: &AdmittanceMatrix<T>,
    state: &GridState<T>,
) -> Result<(Vec<T>, Vec<T>), NrError> {
    if net.n_buses() != y.dim() || net.n_buses() != state.len() {
        return Err(NrError::DimensionMismatch { expected: net.n_buses(), found: state.len() });
    }
    power_residuals(y, state)
        .map_err(|_| NrError::DimensionMismatch { expected: y.dim(), found: state.len() })
}

/// The polar Newton Jacobian over the unknowns, as a sparse matrix in the
/// layout of [`UnknownLayout`]. Entries are derivatives of the *computed*
/// injections, so `J dx = mismatch` is the Newton step for `x += dx`.
pub fn nr_jacobian<T: Scalar>(
    net: &Network<T>,
    y: &AdmittanceMatrix<T>,
    state: &GridState<T>,
) -> Result<(SparseMatrix<T>, UnknownLayout), NrError> {
    if net.n_buses() != y.dim() || net.n_buses() != state.len() {
        return Err(NrError::DimensionMismatch { expected: net.n_buses(), found: state.len() });
    }
    let layout = UnknownLayout::from_state(state);
    let n = state.len();
    let (p_calc, q_calc) = computed_injections(y, state)
        .map_err(|_| NrError::DimensionMismatch { expected: n, found: state.len() })?;

    // positions of each bus in the unknown vectors
    let mut theta_col = vec![usize::MAX; n];
    for (c, &bus) in layout.theta_buses.iter().enumerate() {
        theta_col[bus] = c;
    }
    let n_theta = layout.theta_buses.len();
    let mut v_col = vec![usize::MAX; n];
    for (c, &bus) in layout.v_buses.iter().enumerate() {
        v_col[bus] = n_theta + c;
    }
    let n_unk = layout.n_unknowns();

    let mut jac = SparseMatrix::zero(n_unk);
    // P equations
    for (r, &i) in layout.theta_buses.iter().enumerate() {
        let vi = state.vm[i];
        for &(k, g, b) in y.row(i) {
            if k == i {
                let dp_dti = -q_calc[i] - b * vi * vi;
                jac.push(r, theta_col[i], dp_dti);
                if v_col[i] != usize::MAX {
                    let dp_dvi = p_calc[i] / vi + g * vi;
                    jac.push(r, v_col[i], dp_dvi);
                }
            } else {
                let d = state.va[i] - state.va[k];
                let (s, c) = d.sin_cos();
                if theta_col[k] != usize::MAX {
                    jac.push(r, theta_col[k], vi * state.vm[k] * (g * s - b * c));
                }
                if v_col[k] != usize::MAX {
                    jac.push(r, v_col[k], vi * (g * c + b * s));
                }
            }
        }
    }
    // Q equations
    for (rq, &i) in layout.v_buses.iter().enumerate() {
        let r = n_theta + rq;
        let vi = state.vm[i];
        for &(k, g, b) in y.row(i) {
            if k == i {
                let dq_dti = p_calc[i] - g * vi * vi;
                jac.push(r, theta_col[i], dq_dti);
                let dq_dvi = q_calc[i] / vi - b * vi;
                jac.push(r, v_col[i], dq_dvi);
            } else {
                let d = state.va[i] - state.va[k];
                let (s, c) = d.sin_cos();
                if theta_col[k] != usize::MAX {
                    jac.push(r, theta_col[k], -vi * state.vm[k] * (g * c + b * s));
                }
                if v_col[k] != usize::MAX {
                    jac.push(r, v_col[k], vi * (g * s - b * c));
                }
            }
        }
    }
    jac.sort_rows();
    Ok((jac, layout))
}

fn mismatch_vector<T: Scalar>(dp: &[T], dq: &[T], layout: &UnknownLayout) -> Vec<T> {
    let mut f = Vec::with_capacity(layout.n_unknowns());
    f.extend(layout.theta_buses.iter().map(|&i| dp[i]));
    f.extend(layout.v_buses.iter().map(|&i| dq[i]));
    f
}

fn inf_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| if x.abs() > acc { x.abs() } else { acc })
}

/// Solves the power flow by Newton iteration from `start`. On convergence
/// the free injections (slack P and Q, PV Q) are filled from the power
/// equations so all four variables are populated.
pub fn solve_nr<T: Scalar>(
    net: &Network<T>,
    start: &GridState<T>,
    opts: &NrOptions<T>,
) -> Result<(GridState<T>, NrReport<T>), NrError> {
    let t0 = Instant::now();
    let y = crate::ybus::build_ybus(net)
        .map_err(|_| NrError::DimensionMismatch { expected: net.n_buses(), found: start.len() })?;
    solve_nr_with_ybus(net, &y, start, opts, t0)
}

pub fn solve_nr_with_ybus<T: Scalar>(
    net: &Network<T>,
    y: &AdmittanceMatrix<T>,
    start: &GridState<T>,
    opts: &NrOptions<T>,
    t0: Instant,
) -> Result<(GridState<T>, NrReport<T>), NrError> {
    if net.n_buses() != start.len() {
        return Err(NrError::DimensionMismatch { expected: net.n_buses(), found: start.len() });
    }
    let mut state = start.clone();
    let layout = UnknownLayout::from_state(&state);
    let n_unk = layout.n_unknowns();

    let mut iterations = 0usize;
    loop {
        let (dp, dq) = power_mismatch(net, y, &state)?;
        let f = mismatch_vector(&dp, &dq, &layout);
        let norm = inf_norm(&f);
        if !norm.is_finite() {
            return Err(NrError::Diverged { iterations, final_mismatch: norm.to_f64() });
        }
        if norm <= opts.tol || n_unk == 0 {
            fill_free_injections(y, &mut state);
            let report = NrReport {
                converged: true,
                iterations,
                final_mismatch: norm,
                wall_time: t0.elapsed().as_secs_f64(),
            };
            return Ok((state, report));
        }
        if iterations >= opts.max_iter {
            return Err(NrError::Diverged { iterations, final_mismatch: norm.to_f64() });
        }

        let (jac, _) = nr_jacobian(net, y, &state)?;
        let use_dense = match opts.linear_solver {
            LinearSolverKind::Dense => true,
            LinearSolverKind::Sparse => false,
            LinearSolverKind::Auto => n_unk <= DENSE_UNKNOWN_LIMIT,
        };
        let dx = if use_dense {
            let mut dense = jac.to_dense();
            let mut rhs = f.clone();
            solve_dense(&mut dense, n_unk, &mut rhs)
                .map_err(|_| NrError::SingularJacobian { iteration: iterations })?;
            rhs
        } else {
            solve_sparse(&jac, &f)
                .map_err(|_| NrError::SingularJacobian { iteration: iterations })?
        };

        for (c, &bus) in layout.theta_buses.iter().enumerate() {
            state.va[bus] += dx[c];
        }
        for (c, &bus) in layout.v_buses.iter().enumerate() {
            state.vm[bus] += dx[layout.theta_buses.len() + c];
        }
        iterations += 1;
    }
}

/// Overwrites the unknown injections (slack P/Q, PV Q) with the values the
/// power equations imply at the current voltages.
fn fill_free_injections<T: Scalar>(y: &AdmittanceMatrix<T>, state: &mut GridState<T>) {
    if let Ok((p_calc, q_calc)) = computed_injections(y, state) {
        for i in 0..state.len() {
            if !state.known[i].p {
                state.p[i] = p_calc[i];
            }
            if !state.known[i].q {
                state.q[i] = q_calc[i];
            }
        }
    }
}
