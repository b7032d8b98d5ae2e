//! The margin-rescaled QP with non-negative weights
//!
//! `min ½‖w‖² + c Σ_k ξ_k  s.t.  w·δψ_j ≥ ℓ_j - ξ_k(j),  ξ ≥ 0,  w ≥ 0`
//!
//! over `(w, ξ)`, solved with the Clarabel interior-point solver. Slacks are
//! then recomputed exactly from `w`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DIM: usize = 3;

pub type Vector = [f64; DIM];

/// `w·δψ ≥ ℓ - ξ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub dpsi: Vector,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub w: Vector,
    /// Slack per group.
    pub xi: Vec<f64>,
    pub objective: f64,
    /// `½‖w‖²`.
    pub norm_term: f64,
    /// `c Σ ξ`.
    pub slack_term: f64,
    /// Largest primal or dual residual reported by the solver.
    pub residual: f64,
    pub iterations: usize,
}

pub const KKT_TOL: f64 = 1e-6;

fn dot(a: &Vector, b: &Vector) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn csc(rows: usize, cols: usize, dense: &[Vec<f64>]) -> CscMatrix<f64> {
    let mut colptr = vec![0];
    let (mut rowval, mut nzval) = (Vec::new(), Vec::new());
    for j in 0..cols {
        for (i, row) in dense.iter().enumerate() {
            if row[j] != 0.0 {
                rowval.push(i);
                nzval.push(row[j]);
            }
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(rows, cols, colptr, rowval, nzval)
}

fn finish(
    groups: &[Vec<Constraint>],
    c: f64,
    w: Vector,
    residual: f64,
    iterations: usize,
) -> QpSolution {
    let xi: Vec<f64> = groups
        .iter()
        .map(|cons| {
            cons.iter()
                .map(|x| x.loss - dot(&x.dpsi, &w))
                .fold(0.0, f64::max)
        })
        .collect();
    let norm_term = 0.5 * dot(&w, &w);
    let slack_term = c * xi.iter().sum::<f64>();
    QpSolution {
        w,
        xi,
        objective: norm_term + slack_term,
        norm_term,
        slack_term,
        residual,
        iterations,
    }
}

/// Solves the QP with slack price `c` per group (`c = C / K`).
pub fn solve_qp(groups: &[Vec<Constraint>], c: f64) -> Result<QpSolution> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::InvalidInput(format!(
            "slack price {c} must be finite and non-negative"
        )));
    }
    if c == 0.0 || groups.iter().all(|g| g.is_empty()) {
        return Ok(finish(groups, c, [0.0; DIM], 0.0, 0));
    }
    let k = groups.len();
    let n = DIM + k;
    let p = csc(
        n,
        n,
        &(0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j && i < DIM { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect::<Vec<_>>(),
    );
    let mut q = vec![0.0; n];
    q[DIM..].iter_mut().for_each(|x| *x = c);
    // rows of A z + s = b with s ≥ 0, i.e. -a·z ≤ -b for every a·z ≥ b
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (g, cons) in groups.iter().enumerate() {
        for x in cons {
            let mut row = vec![0.0; n];
            for i in 0..DIM {
                row[i] = -x.dpsi[i];
            }
            row[DIM + g] = -1.0;
            a.push(row);
            b.push(-x.loss);
        }
    }
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = -1.0;
        a.push(row);
        b.push(0.0);
    }
    let m = a.len();
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_threads(1)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .tol_feas(1e-10)
        .build()
        .map_err(|e| Error::Other(format!("QP settings: {e:?}")))?;
    let mut solver =
        DefaultSolver::new(&p, &q, &csc(m, n, &a), &b, &[NonnegativeConeT(m)], settings)
            .map_err(|e| Error::Other(format!("QP setup: {e:?}")))?;
    solver.solve();
    let info = &solver.info;
    let residual = info.res_primal.max(info.res_dual);
    let iterations = info.iterations as usize;
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        status => {
            tracing::warn!(?status, "QP solver failed");
            return Err(Error::QpNonConvergence {
                residual,
                iterations,
            });
        }
    }
    if residual > KKT_TOL {
        return Err(Error::QpNonConvergence {
            residual,
            iterations,
        });
    }
    let x = &solver.solution.x;
    let primal = finish(
        groups,
        c,
        std::array::from_fn(|i| x[i].max(0.0)),
        residual,
        iterations,
    );
    // stationarity gives w = [Σ z_j δψ_j]_+, exact on the zero bounds
    let z = &solver.solution.z;
    let mut v = [0.0; DIM];
    for (j, x) in groups.iter().flatten().enumerate() {
        for i in 0..DIM {
            v[i] += z[j].max(0.0) * x.dpsi[i];
        }
    }
    let dual = finish(groups, c, v.map(|e| e.max(0.0)), residual, iterations);
    Ok(if dual.objective <= primal.objective {
        dual
    } else {
        primal
    })
}
