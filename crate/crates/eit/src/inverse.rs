//! Linearized difference imaging: sensitivity matrix, Laplacian
//! regularizer, and sign-constrained reconstruction.
//!
//! Damage only removes material, so conductivity can only drop. The
//! reconstruction solves
//!
//! ```text
//! minimize ||J dsigma - dV||^2 + alpha ||R dsigma||^2   s.t. dsigma <= 0
//! ```
//!
//! with J the frame sensitivity about the undamaged background and R the
//! graph Laplacian over element adjacency. Substituting x = -dsigma turns
//! it into non-negative least squares, solved by an active-set iteration
//! on the Gram system J^T J + alpha R^T R. The Gram matrix is formed once
//! and shared across records; each reconstruction only re-derives the
//! right-hand side from its own voltage difference.

use crate::config::SimConfig;
use crate::dense::{DenseCholesky, Mat};
use crate::error::{Error, Result};
use crate::forward::{assemble_system, drive_injection, sense_electrodes, solve_forward};
use crate::mesh::Mesh;
use crate::sparse::{SparseSym, SymSparseBuilder};

/// Sensitivity of every frame measurement to every element conductivity,
/// row order matching the frame, computed with the adjoint method: the
/// derivative of measurement (d, m) w.r.t. element k is
/// -integral_k grad(u_d) . grad(u_m) with the sense field at unit current,
/// which reuses the sixteen drive fields (sense pairs are drive pairs).
pub fn compute_jacobian(mesh: &Mesh, sigma0: &[f64], config: &SimConfig) -> Result<Mat> {
    let system = assemble_system(mesh, sigma0, config)?;
    let l = config.n_electrodes;
    let amp = config.injection_current;
    let fields: Vec<Vec<f64>> = (0..l)
        .map(|d| {
            solve_forward(&system, &drive_injection(l, d, amp)).map(|s| s.node_potentials)
        })
        .collect::<Result<_>>()?;

    // Per element: shape-gradient coefficients and area, then the two
    // gradient components of every field scaled by 2A. The integral over
    // element k of grad(u).grad(v) is (pu pv + qu qv) / (4 A) with
    // p = sum_i u_i b_i, q = sum_i u_i c_i.
    let n_el = mesh.n_elements();
    let mut inv_4a = vec![0.0; n_el];
    let mut p = vec![vec![0.0; n_el]; l];
    let mut q = vec![vec![0.0; n_el]; l];
    for k in 0..n_el {
        let el = mesh.elements[k];
        let [p0, p1, p2] = mesh.element_points(k);
        let b = [p1.y - p2.y, p2.y - p0.y, p0.y - p1.y];
        let c = [p2.x - p1.x, p0.x - p2.x, p1.x - p0.x];
        let two_a = crate::geom::orient2d(p0, p1, p2);
        inv_4a[k] = 1.0 / (2.0 * two_a);
        for (f, u) in fields.iter().enumerate() {
            let mut pk = 0.0;
            let mut qk = 0.0;
            for i in 0..3 {
                let ui = u[el[i] as usize];
                pk += ui * b[i];
                qk += ui * c[i];
            }
            p[f][k] = pk;
            q[f][k] = qk;
        }
    }

    let mut j = Mat::zeros(l * (l - 3), n_el);
    let mut row = 0;
    for d in 0..l {
        for m in sense_electrodes(l, d) {
            let (pd, qd) = (&p[d], &q[d]);
            let (pm, qm) = (&p[m], &q[m]);
            let out = j.row_mut(row);
            for k in 0..n_el {
                out[k] = -(pd[k] * pm[k] + qd[k] * qm[k]) * inv_4a[k] / amp;
            }
            row += 1;
        }
    }
    Ok(j)
}

/// Graph Laplacian over element adjacency: degree on the diagonal, -1 for
/// each pair of edge-sharing elements. Symmetric, positive semi-definite,
/// constant vectors in its null space.
pub fn build_regularizer(adjacency: &[Vec<u32>]) -> SparseSym {
    let n = adjacency.len();
    let mut b = SymSparseBuilder::new(n);
    for (i, neighbors) in adjacency.iter().enumerate() {
        b.add(i, i, neighbors.len() as f64);
        for &j in neighbors {
            let j = j as usize;
            if j > i {
                b.add(i, j, -1.0);
            }
        }
    }
    b.build()
}

/// Dimensionally balanced default regularization weight:
/// 1e-2 * trace(J^T J) / trace(R^T R).
pub fn default_alpha(jacobian: &Mat, regularizer: &SparseSym) -> f64 {
    let tr_j = jacobian.frobenius_sq();
    let mut tr_r = 0.0;
    for i in 0..regularizer.dim() {
        let (_, vals) = regularizer.row(i);
        tr_r += vals.iter().map(|v| v * v).sum::<f64>();
    }
    1e-2 * tr_j / tr_r
}

/// Value of the reconstruction objective for a candidate conductivity
/// change.
pub fn objective(
    jacobian: &Mat,
    regularizer: &SparseSym,
    alpha: f64,
    delta_v: &[f64],
    delta_sigma: &[f64],
) -> f64 {
    let jd = jacobian.matvec(delta_sigma);
    let misfit: f64 = jd
        .iter()
        .zip(delta_v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let rd = regularizer.matvec(delta_sigma);
    misfit + alpha * rd.iter().map(|v| v * v).sum::<f64>()
}

/// Precomputed Gram system shared by every reconstruction on one mesh.
pub struct ReconstructionOperator {
    jacobian: Mat,
    gram: Mat,
    alpha: f64,
    iteration_cap: usize,
}

impl ReconstructionOperator {
    /// Form J^T J + alpha R^T R once. The regularizer must match the
    /// Jacobian's element count and alpha must be positive.
    pub fn prepare(jacobian: Mat, regularizer: &SparseSym, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "regularization weight must be positive, got {alpha}"
            )));
        }
        let n = jacobian.cols();
        if regularizer.dim() != n {
            return Err(Error::ShapeMismatch(format!(
                "regularizer over {} elements, Jacobian over {n}",
                regularizer.dim()
            )));
        }
        let mut gram = jacobian.gram();
        // alpha R^T R = alpha R^2: accumulate outer products of the sparse
        // rows (R is symmetric).
        for k in 0..n {
            let (cols, vals) = regularizer.row(k);
            for (&i, &vi) in cols.iter().zip(vals) {
                let row = gram.row_mut(i as usize);
                for (&j, &vj) in cols.iter().zip(vals) {
                    row[j as usize] += alpha * vi * vj;
                }
            }
        }
        Ok(Self {
            jacobian,
            gram,
            alpha,
            iteration_cap: 10 * n,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn jacobian(&self) -> &Mat {
        &self.jacobian
    }

    /// Solve for the non-positive conductivity change explaining the
    /// voltage difference.
    pub fn reconstruct(&self, delta_v: &[f64]) -> Result<Vec<f64>> {
        if delta_v.len() != self.jacobian.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} measurements for a {}-row Jacobian",
                delta_v.len(),
                self.jacobian.rows()
            )));
        }
        // x = -dsigma >= 0 turns the objective into
        // x^T G x + 2 x^T J^T dV + const, an NNLS problem with c = -J^T dV.
        let c: Vec<f64> = self
            .jacobian
            .tr_matvec(delta_v)
            .into_iter()
            .map(|v| -v)
            .collect();
        let x = nnls(&self.gram, &c, self.iteration_cap)?;
        Ok(x.into_iter().map(|v| -v).collect())
    }
}

/// One-call convenience wrapper around [`ReconstructionOperator`].
pub fn reconstruct(
    jacobian: &Mat,
    regularizer: &SparseSym,
    delta_v: &[f64],
    alpha: f64,
) -> Result<Vec<f64>> {
    ReconstructionOperator::prepare(jacobian.clone(), regularizer, alpha)?.reconstruct(delta_v)
}

/// Non-negative least squares on the Gram form: minimize
/// 1/2 x^T G x - c^T x over x >= 0 by the Lawson-Hanson active-set method.
/// G must be symmetric positive definite.
pub(crate) fn nnls(g: &Mat, c: &[f64], iteration_cap: usize) -> Result<Vec<f64>> {
    let n = c.len();
    let mut x = vec![0.0; n];
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(x);
    }
    let enter_tol = 1e-13 * scale;
    let mut passive: Vec<usize> = Vec::new();
    let mut in_passive = vec![false; n];
    let mut iterations = 0;

    loop {
        // Most negative gradient component among the active (zero) set.
        let gx = g.matvec(&x);
        let mut entering: Option<(usize, f64)> = None;
        for k in 0..n {
            if !in_passive[k] {
                let w = c[k] - gx[k];
                if w > enter_tol && entering.map_or(true, |(_, bw)| w > bw) {
                    entering = Some((k, w));
                }
            }
        }
        let Some((entering, _)) = entering else {
            return Ok(x);
        };
        passive.push(entering);
        in_passive[entering] = true;

        // Re-solve on the passive set, stepping back to the boundary and
        // shrinking the set until the subproblem solution is feasible.
        loop {
            iterations += 1;
            if iterations > iteration_cap {
                return Err(Error::NonConvergence(iteration_cap));
            }
            let y = solve_on_support(g, c, &passive)?;
            if y.iter().all(|&v| v > 0.0) {
                for (idx, &k) in passive.iter().enumerate() {
                    x[k] = y[idx];
                }
                break;
            }
            let mut theta = 1.0;
            let mut blocker = usize::MAX;
            for (idx, &k) in passive.iter().enumerate() {
                if y[idx] <= 0.0 {
                    let d = x[k] - y[idx];
                    let t = if d > 0.0 { x[k] / d } else { 0.0 };
                    if t < theta {
                        theta = t;
                        blocker = k;
                    }
                }
            }
            for (idx, &k) in passive.iter().enumerate() {
                x[k] += theta * (y[idx] - x[k]);
            }
            if blocker != usize::MAX {
                x[blocker] = 0.0;
            }
            passive.retain(|&k| {
                if x[k] > 0.0 {
                    true
                } else {
                    x[k] = 0.0;
                    in_passive[k] = false;
                    false
                }
            });
        }
    }
}

/// Solve G restricted to the given indices against c restricted likewise.
fn solve_on_support(g: &Mat, c: &[f64], support: &[usize]) -> Result<Vec<f64>> {
    let m = support.len();
    let mut sub = Mat::zeros(m, m);
    for (a, &i) in support.iter().enumerate() {
        let gi = g.row(i);
        let row = sub.row_mut(a);
        for (b, &j) in support.iter().enumerate() {
            row[b] = gi[j];
        }
    }
    let rhs: Vec<f64> = support.iter().map(|&i| c[i]).collect();
    let chol = DenseCholesky::factor(&sub).ok_or_else(|| {
        Error::SolveFailure(format!(
            "gram submatrix of order {m} lost positive definiteness"
        ))
    })?;
    Ok(chol.solve(&rhs))
}

/// Gradient (half) of the NNLS objective at the reconstruction, in the
/// non-negative coordinates: G x - c. Used by the optimality checks.
pub fn kkt_gradient(
    op: &ReconstructionOperator,
    delta_v: &[f64],
    delta_sigma: &[f64],
) -> Vec<f64> {
    let x: Vec<f64> = delta_sigma.iter().map(|v| -v).collect();
    let c: Vec<f64> = op.jacobian.tr_matvec(delta_v).into_iter().map(|v| -v).collect();
    let gx = op.gram.matvec(&x);
    gx.iter().zip(&c).map(|(a, b)| a - b).collect()
}
