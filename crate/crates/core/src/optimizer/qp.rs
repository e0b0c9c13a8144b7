//! Interior-point core for the rebalancing problem.
//!
//! The decision problem
//!
//! ```text
//!   max  r'w - w' Q w - kappa * |w - w_prev|_1
//!   s.t. 1'w = 1,  w >= 0            (Q = lambda * Sigma + ridge * I)
//! ```
//!
//! is rewritten with the trade split `w = w_prev + u+ - u-`, `u+, u- >= 0`,
//! turning the L1 term into the linear cost `kappa * 1'(u+ + u-)`. The
//! resulting convex QP in `x = (u+, u-)` has one equality constraint
//! (`1'u+ - 1'u- = 0`) and the inequalities `u+ >= 0`, `u- >= 0`,
//! `w_prev + u+ - u- >= 0`, and is solved by an infeasible-start Mehrotra
//! predictor-corrector method. The reduced Newton system is assembled in
//! block form and factored with a dense Cholesky per iteration, which is
//! comfortably fast for the target sizes (n <= 64).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Primal-dual iterate returned by the interior-point core.
///
/// `z_w` is the multiplier of `w >= 0`; `y` is the budget multiplier in
/// minimization sign convention. The trade-split variables `u+`, `u-` and
/// their multipliers are internal to the method and not reported.
#[derive(Debug, Clone)]
pub struct IpmOutcome {
    pub w: DVector<f64>,
    pub y: f64,
    pub z_w: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final complementarity gap s'z / m.
    pub gap: f64,
    /// Final residual norms (dual, equality, inequality).
    pub residuals: (f64, f64, f64),
}

/// One row of the per-iteration convergence trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iter: usize,
    pub r_dual: f64,
    pub r_eq: f64,
    pub r_ineq: f64,
    pub gap: f64,
}

const STEP_SCALE: f64 = 0.995;
const GAP_FLOOR: f64 = 1e-16;

/// Solves the split rebalancing QP to `tol` on dual/primal residuals and the
/// complementarity gap.
pub fn solve_rebalance_qp(
    r_hat: &DVector<f64>,
    q_tilde: &DMatrix<f64>,
    w_prev: &DVector<f64>,
    kappa: f64,
    tol: f64,
    max_iter: usize,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<IpmOutcome> {
    let n = r_hat.len();
    let m = 3 * n;

    let mut up = DVector::from_element(n, 0.5 / n as f64);
    let mut um = DVector::from_element(n, 0.5 / n as f64);
    let mut y = 0.0f64;
    let mut s1 = up.clone();
    let mut s2 = um.clone();
    let mut s3 = DVector::from_fn(n, |i, _| w_prev[i].max(0.05));
    let dual_scale = (1.0 + r_hat.amax() + kappa).max(1.0);
    let mut z1 = DVector::from_element(n, dual_scale);
    let mut z2 = DVector::from_element(n, dual_scale);
    let mut z3 = DVector::from_element(n, dual_scale);

    let mut k_mat = DMatrix::zeros(2 * n, 2 * n);
    let mut iterations = 0;
    let mut converged = false;

    let mut gap = DVector::dot(&s1, &z1) + s2.dot(&z2) + s3.dot(&z3);
    gap /= m as f64;
    let mut res = (f64::INFINITY, f64::INFINITY, f64::INFINITY);

    for iter in 0..max_iter {
        iterations = iter;
        let w = w_prev + &up - &um;
        let grad_w = 2.0 * (q_tilde * &w) - r_hat;

        // KKT residuals of the minimization form.
        let rd_p = DVector::from_fn(n, |i, _| grad_w[i] + kappa + y - z1[i] - z3[i]);
        let rd_m = DVector::from_fn(n, |i, _| -grad_w[i] + kappa - y - z2[i] + z3[i]);
        let r_eq = up.sum() - um.sum();
        let rg1 = &s1 - &up;
        let rg2 = &s2 - &um;
        let rg3 = &s3 - &w;

        gap = (s1.dot(&z1) + s2.dot(&z2) + s3.dot(&z3)) / m as f64;
        let rd_norm = rd_p.amax().max(rd_m.amax());
        let rg_norm = rg1.amax().max(rg2.amax()).max(rg3.amax());
        res = (rd_norm, r_eq.abs(), rg_norm);
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceRow {
                iter,
                r_dual: rd_norm,
                r_eq: r_eq.abs(),
                r_ineq: rg_norm,
                gap,
            });
        }
        if rd_norm <= tol && r_eq.abs() <= tol && rg_norm <= tol && gap <= tol {
            converged = true;
            break;
        }
        if gap <= GAP_FLOOR {
            break;
        }

        // Reduced system K = P + G' D G assembled blockwise:
        // K11 = 2Q + diag(d1 + d3), K12 = -2Q - diag(d3), K22 = 2Q + diag(d2 + d3).
        let d1 = z1.component_div(&s1);
        let d2 = z2.component_div(&s2);
        let d3 = z3.component_div(&s3);
        for i in 0..n {
            for j in 0..n {
                let two_q = 2.0 * q_tilde[(i, j)];
                k_mat[(i, j)] = two_q;
                k_mat[(i, j + n)] = -two_q;
                k_mat[(i + n, j)] = -two_q;
                k_mat[(i + n, j + n)] = two_q;
            }
            k_mat[(i, i)] += d1[i] + d3[i];
            k_mat[(i, i + n)] -= d3[i];
            k_mat[(i + n, i)] -= d3[i];
            k_mat[(i + n, i + n)] += d2[i] + d3[i];
        }
        let chol = match cholesky_with_jitter(&k_mat) {
            Some(c) => c,
            None => {
                return Err(Error::Solver(format!(
                    "reduced KKT system not factorizable at iteration {iter} (gap {gap:.3e})"
                )))
            }
        };

        // a = (1, ..., 1, -1, ..., -1) is the equality row.
        let mut a_vec = DVector::from_element(2 * n, 1.0);
        for i in n..2 * n {
            a_vec[i] = -1.0;
        }
        let k_inv_a = chol.solve(&a_vec);
        let a_k_a = a_vec.dot(&k_inv_a);

        let newton = |rc1: &DVector<f64>, rc2: &DVector<f64>, rc3: &DVector<f64>| {
            let v1 = DVector::from_fn(n, |i, _| (rc1[i] + z1[i] * rg1[i]) / s1[i]);
            let v2 = DVector::from_fn(n, |i, _| (rc2[i] + z2[i] * rg2[i]) / s2[i]);
            let v3 = DVector::from_fn(n, |i, _| (rc3[i] + z3[i] * rg3[i]) / s3[i]);
            let mut rhs = DVector::zeros(2 * n);
            for i in 0..n {
                rhs[i] = -rd_p[i] + v1[i] + v3[i];
                rhs[i + n] = -rd_m[i] + v2[i] - v3[i];
            }
            let k_inv_rhs = chol.solve(&rhs);
            let dy = (a_vec.dot(&k_inv_rhs) + r_eq) / a_k_a;
            let dx = &k_inv_rhs - &k_inv_a * dy;
            let dup = dx.rows(0, n).into_owned();
            let dum = dx.rows(n, n).into_owned();
            let dw = &dup - &dum;
            let ds1 = -&rg1 + &dup;
            let ds2 = -&rg2 + &dum;
            let ds3 = -&rg3 + &dw;
            let dz1 = DVector::from_fn(n, |i, _| (rc1[i] - z1[i] * ds1[i]) / s1[i]);
            let dz2 = DVector::from_fn(n, |i, _| (rc2[i] - z2[i] * ds2[i]) / s2[i]);
            let dz3 = DVector::from_fn(n, |i, _| (rc3[i] - z3[i] * ds3[i]) / s3[i]);
            (dup, dum, ds1, ds2, ds3, dz1, dz2, dz3, dy)
        };

        // Affine (predictor) direction.
        let rc1 = DVector::from_fn(n, |i, _| -s1[i] * z1[i]);
        let rc2 = DVector::from_fn(n, |i, _| -s2[i] * z2[i]);
        let rc3 = DVector::from_fn(n, |i, _| -s3[i] * z3[i]);
        let aff = newton(&rc1, &rc2, &rc3);
        let (_, _, ds1_a, ds2_a, ds3_a, dz1_a, dz2_a, dz3_a, _) = &aff;

        let ap_aff = step_bound(&[(&s1, ds1_a), (&s2, ds2_a), (&s3, ds3_a)]).min(1.0);
        let ad_aff = step_bound(&[(&z1, dz1_a), (&z2, dz2_a), (&z3, dz3_a)]).min(1.0);
        let gap_aff = (dot_stepped(&s1, ds1_a, ap_aff, &z1, dz1_a, ad_aff)
            + dot_stepped(&s2, ds2_a, ap_aff, &z2, dz2_a, ad_aff)
            + dot_stepped(&s3, ds3_a, ap_aff, &z3, dz3_a, ad_aff))
            / m as f64;
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

        // Corrector direction with Mehrotra's second-order term.
        let target = sigma * gap;
        let rc1 = DVector::from_fn(n, |i, _| -s1[i] * z1[i] - ds1_a[i] * dz1_a[i] + target);
        let rc2 = DVector::from_fn(n, |i, _| -s2[i] * z2[i] - ds2_a[i] * dz2_a[i] + target);
        let rc3 = DVector::from_fn(n, |i, _| -s3[i] * z3[i] - ds3_a[i] * dz3_a[i] + target);
        let (dup, dum, ds1, ds2, ds3, dz1, dz2, dz3, dy) = newton(&rc1, &rc2, &rc3);
        drop(aff);

        let ap = (STEP_SCALE * step_bound(&[(&s1, &ds1), (&s2, &ds2), (&s3, &ds3)])).min(1.0);
        let ad = (STEP_SCALE * step_bound(&[(&z1, &dz1), (&z2, &dz2), (&z3, &dz3)])).min(1.0);
        if ap < 1e-13 && ad < 1e-13 {
            break;
        }

        up += ap * &dup;
        um += ap * &dum;
        s1 += ap * &ds1;
        s2 += ap * &ds2;
        s3 += ap * &ds3;
        y += ad * dy;
        z1 += ad * &dz1;
        z2 += ad * &dz2;
        z3 += ad * &dz3;
    }

    let w = w_prev + &up - &um;
    Ok(IpmOutcome {
        w,
        y,
        z_w: z3,
        iterations: iterations + 1,
        converged,
        gap,
        residuals: res,
    })
}

/// Largest alpha with v + alpha * dv >= 0 over all listed pairs.
fn step_bound(pairs: &[(&DVector<f64>, &DVector<f64>)]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (v, dv) in pairs {
        for i in 0..v.len() {
            if dv[i] < 0.0 {
                alpha = alpha.min(-v[i] / dv[i]);
            }
        }
    }
    alpha
}

fn dot_stepped(
    s: &DVector<f64>,
    ds: &DVector<f64>,
    ap: f64,
    z: &DVector<f64>,
    dz: &DVector<f64>,
    ad: f64,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..s.len() {
        acc += (s[i] + ap * ds[i]) * (z[i] + ad * dz[i]);
    }
    acc
}

fn cholesky_with_jitter(k: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = k.clone().cholesky() {
        return Some(c);
    }
    let scale = (0..k.nrows()).map(|i| k[(i, i)].abs()).fold(0.0, f64::max);
    let mut jitter = 1e-14 * scale.max(1.0);
    for _ in 0..5 {
        let mut kj = k.clone();
        for i in 0..k.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = kj.cholesky() {
            return Some(c);
        }
        jitter *= 100.0;
    }
    None
}
