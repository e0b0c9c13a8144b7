//! Mean-variance rebalancing with proportional transaction costs.
//!
//! Solves
//!
//! ```text
//!   max  r_hat'w - lambda * w'Sigma w - kappa * |w - w_prev|_1
//!   s.t. 1'w = 1,  w >= 0
//! ```
//!
//! and reports the optimal weights together with the dual variables of the
//! budget and non-negativity constraints and an L1 subgradient, so callers
//! can check the stationarity structure directly: every active asset's
//! cost-adjusted score `r_hat_i - 2 lambda (Sigma w)_i - kappa s_i` equals
//! the budget multiplier nu, and every inactive asset's score is at most nu.
//!
//! A tiny ridge is added to the quadratic term inside the solver so the
//! minimizer is unique even when the problem is otherwise degenerate (for
//! example duplicated scores at lambda = kappa = 0, which split evenly).
//! Reported objectives and residuals always refer to the unridged problem.

mod qp;

pub use qp::TraceRow;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default solve tolerance on the KKT residual.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Strict-convexification ridge added to the quadratic term inside the
/// solver; keeps the minimizer unique without visibly perturbing it.
pub const CONVEXIFY_RIDGE: f64 = 1e-10;

const MAX_IPM_ITER: usize = 200;

/// Activity threshold used when classifying assets in KKT reports.
const ACTIVITY_EPS: f64 = 1e-7;
/// Threshold on |w_i - w_prev_i| below which an asset counts as untraded.
const MOVE_EPS: f64 = 1e-7;

/// One rebalancing decision instance.
///
/// `sigma` is stored symmetrized; construction rejects matrices that are
/// asymmetric beyond rounding, non-PSD covariance, negative penalty weights,
/// and previous weights that are not on the simplex (within 1e-9). Previous
/// weights are canonicalized: entries in [-1e-9, 0) are clamped to zero and
/// the vector renormalized.
#[derive(Debug, Clone)]
pub struct DecisionProblem {
    pub r_hat: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub lambda: f64,
    pub kappa: f64,
    pub w_prev: DVector<f64>,
}

impl DecisionProblem {
    pub fn new(
        r_hat: DVector<f64>,
        sigma: DMatrix<f64>,
        lambda: f64,
        kappa: f64,
        w_prev: DVector<f64>,
    ) -> Result<Self> {
        let n = r_hat.len();
        if n == 0 {
            return Err(Error::Input("empty return vector".into()));
        }
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(Error::Shape(format!(
                "sigma is {}x{} for {n} assets",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if w_prev.len() != n {
            return Err(Error::Shape(format!(
                "w_prev has {} entries for {n} assets",
                w_prev.len()
            )));
        }
        if r_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("r_hat contains non-finite entries".into()));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Input(format!("lambda {lambda} must be >= 0")));
        }
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::Input(format!("kappa {kappa} must be >= 0")));
        }

        let scale = sigma.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-8 * scale {
                    return Err(Error::Input(format!(
                        "sigma is asymmetric at ({i},{j}): {} vs {}",
                        sigma[(i, j)],
                        sigma[(j, i)]
                    )));
                }
            }
        }
        let sigma_sym = (&sigma + sigma.transpose()) * 0.5;
        let mut check = sigma_sym.clone();
        for i in 0..n {
            check[(i, i)] += 1e-10 * scale;
        }
        if check.cholesky().is_none() {
            return Err(Error::Input(
                "sigma is not positive semidefinite after symmetrization".into(),
            ));
        }

        let sum: f64 = w_prev.sum();
        let min = w_prev.min();
        if (sum - 1.0).abs() > 1e-9 || min < -1e-9 {
            return Err(Error::Input(format!(
                "w_prev is off the simplex (sum {sum}, min {min})"
            )));
        }
        let mut w_canon = w_prev.map(|v| v.max(0.0));
        w_canon /= w_canon.sum();

        Ok(DecisionProblem {
            r_hat,
            sigma: sigma_sym,
            lambda,
            kappa,
            w_prev: w_canon,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.r_hat.len()
    }

    /// Objective value of the unridged problem at `w`.
    pub fn objective(&self, w: &DVector<f64>) -> f64 {
        let quad = self.lambda * (w.transpose() * &self.sigma * w)[(0, 0)];
        let trade: f64 = w
            .iter()
            .zip(self.w_prev.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        self.r_hat.dot(w) - quad - self.kappa * trade
    }

    /// Cost-adjusted marginal score `r_hat - 2 lambda Sigma w` at `w`.
    pub fn score(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.r_hat - 2.0 * self.lambda * (&self.sigma * w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// KKT residual within tolerance.
    Optimal,
    /// Iteration cap was reached but the returned point still meets the
    /// tolerance (usually because the active-set refinement rescued it).
    MaxIter,
    /// Reserved; the feasible set of this problem is never empty for valid
    /// inputs.
    Infeasible,
}

/// Solver output: weights plus the dual certificate.
#[derive(Debug, Clone)]
pub struct DecisionResult {
    pub weights: DVector<f64>,
    /// Objective of the unridged problem at `weights`.
    pub objective: f64,
    /// Budget-constraint multiplier: the common threshold of active assets.
    pub nu: f64,
    /// Non-negativity multipliers, one per asset.
    pub mu: DVector<f64>,
    /// L1 subgradient of the trade term, in [-1, 1] per asset.
    pub s: DVector<f64>,
    /// Worst violation across stationarity, feasibility, sign, and
    /// complementarity conditions of the unridged problem. Dual-scale terms
    /// are measured relative to the magnitude of the objective coefficients
    /// (floored at one), so the figure stays comparable across problems with
    /// very different prediction scales.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Solves the rebalancing problem to `tol` on the KKT residual.
pub fn solve(problem: &DecisionProblem, tol: f64) -> Result<DecisionResult> {
    solve_inner(problem, tol, None)
}

/// Like [`solve`], additionally returning the per-iteration residual trace.
pub fn solve_traced(
    problem: &DecisionProblem,
    tol: f64,
) -> Result<(DecisionResult, Vec<TraceRow>)> {
    let mut rows = Vec::new();
    let result = solve_inner(problem, tol, Some(&mut rows))?;
    Ok((result, rows))
}

/// Serializes a solve trace as CSV for debugging.
pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("iter,r_dual,r_eq,r_ineq,gap\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iter, r.r_dual, r.r_eq, r.r_ineq, r.gap
        ));
    }
    out
}

/// Best decision under the realized returns: the benchmark action used by
/// regret and decision-loss computations. Identical to [`solve`] on a
/// problem whose predicted returns are the realized ones.
pub fn oracle_decision(
    realized: &DVector<f64>,
    sigma: &DMatrix<f64>,
    lambda: f64,
    kappa: f64,
    w_prev: &DVector<f64>,
    tol: f64,
) -> Result<DecisionResult> {
    let problem = DecisionProblem::new(
        realized.clone(),
        sigma.clone(),
        lambda,
        kappa,
        w_prev.clone(),
    )?;
    solve(&problem, tol)
}

fn solve_inner(
    problem: &DecisionProblem,
    tol: f64,
    trace: Option<&mut Vec<TraceRow>>,
) -> Result<DecisionResult> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::Input(format!("tolerance {tol} must be positive")));
    }
    let n = problem.n_assets();
    let mut q_tilde = &problem.sigma * problem.lambda;
    for i in 0..n {
        q_tilde[(i, i)] += CONVEXIFY_RIDGE;
    }

    // The optimal weights are unchanged when the predicted returns, the risk
    // term, and the trade cost are divided by a common factor, so hand the
    // interior-point method a unit-scale problem and blow its duals back up.
    // This keeps convergence honest when predictions inflate by orders of
    // magnitude.
    let scale = coefficient_scale(problem);
    let mut q_scaled = &problem.sigma * (problem.lambda / scale);
    for i in 0..n {
        q_scaled[(i, i)] += CONVEXIFY_RIDGE;
    }
    let ipm_tol = (tol * 1e-2).max(1e-13);
    let mut ipm = qp::solve_rebalance_qp(
        &(&problem.r_hat / scale),
        &q_scaled,
        &problem.w_prev,
        problem.kappa / scale,
        ipm_tol,
        MAX_IPM_ITER,
        trace,
    )?;
    ipm.y *= scale;
    ipm.z_w *= scale;

    // Candidate 1: the interior-point iterate with duals read off directly.
    let raw = candidate_from_ipm(problem, &ipm);
    // Candidate 2: active-set refinement around the iterate.
    let polished = polish(problem, &q_tilde, &ipm.w, tol);

    // Prefer the polished point whenever it meets the tolerance: its pinned
    // and sold-out weights are exact, which keeps downstream trade accounting
    // and the KKT report free of interior-point dust.
    let (weights, nu, mu, s, residual) = match polished {
        Some(p) if p.4 <= tol || p.4 <= raw.4 => p,
        _ => raw,
    };

    if residual > tol {
        return Err(Error::Solver(format!(
            "residual {residual:.3e} exceeds tolerance {tol:.1e} after {} iterations \
             (gap {:.3e}, dual {:.3e}, primal {:.3e}/{:.3e})",
            ipm.iterations, ipm.gap, ipm.residuals.0, ipm.residuals.1, ipm.residuals.2
        )));
    }
    let status = if ipm.converged {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIter
    };
    let objective = problem.objective(&weights);
    Ok(DecisionResult {
        weights,
        objective,
        nu,
        mu,
        s,
        kkt_residual: residual,
        iterations: ipm.iterations,
        status,
    })
}

type Candidate = (DVector<f64>, f64, DVector<f64>, DVector<f64>, f64);

fn candidate_from_ipm(problem: &DecisionProblem, ipm: &qp::IpmOutcome) -> Candidate {
    let n = problem.n_assets();
    let w = ipm.w.clone();
    let nu = ipm.y;
    let mu = ipm.z_w.clone();
    let g = problem.score(&w);
    let s = DVector::from_fn(n, |i, _| {
        subgradient(
            problem.kappa,
            g[i],
            mu[i],
            nu,
            w[i] - problem.w_prev[i],
        )
    });
    let residual = kkt_residual(problem, &w, nu, &mu, &s);
    (w, nu, mu, s, residual)
}

fn subgradient(kappa: f64, g: f64, mu: f64, nu: f64, movement: f64) -> f64 {
    if kappa > 0.0 {
        ((g + mu - nu) / kappa).clamp(-1.0, 1.0)
    } else if movement > MOVE_EPS {
        1.0
    } else if movement < -MOVE_EPS {
        -1.0
    } else {
        0.0
    }
}

/// Worst KKT violation of the unridged problem at `(w, nu, mu, s)`.
/// Magnitude of the problem's objective coefficients, floored at one.
/// Dual-scale optimality terms are measured relative to it, so the same
/// tolerance works for unit-scale returns and for wildly inflated
/// predictions, without loosening anything on ordinary instances.
fn coefficient_scale(problem: &DecisionProblem) -> f64 {
    problem
        .r_hat
        .amax()
        .max(problem.lambda * problem.sigma.amax())
        .max(problem.kappa)
        .max(1.0)
}

fn kkt_residual(
    problem: &DecisionProblem,
    w: &DVector<f64>,
    nu: f64,
    mu: &DVector<f64>,
    s: &DVector<f64>,
) -> f64 {
    let n = problem.n_assets();
    let scale = coefficient_scale(problem);
    let g = problem.score(w);
    let mut worst: f64 = (w.sum() - 1.0).abs();
    for i in 0..n {
        worst = worst.max(-w[i]).max(-mu[i] / scale);
        worst = worst.max((mu[i] * w[i]).abs() / scale);
        worst = worst.max((g[i] - problem.kappa * s[i] - nu + mu[i]).abs() / scale);
        worst = worst.max(problem.kappa * (s[i].abs() - 1.0).max(0.0) / scale);
        // s must be a subgradient of the L1 move: s_i * d_i = |d_i|. The
        // complementarity form needs no movement threshold and vanishes
        // smoothly with the trade size.
        let movement = w[i] - problem.w_prev[i];
        worst = worst.max(problem.kappa * (movement.abs() - s[i] * movement) / scale);
    }
    worst
}

/// Re-solves the equality-constrained problem on the active set implied by
/// the interior-point iterate: traded assets free with their trade sign
/// fixed, untraded active assets pinned at the previous weight, inactive
/// assets pinned at zero. An asset whose refit weight contradicts its label
/// (negative, or moved against its sign) is demoted and the system re-solved;
/// the free set only shrinks inside a pass, so each pass ends. When the
/// consistent point still misses the tolerance, the worst dual violation is
/// promoted instead (a pinned or sold-out asset whose adjusted score escapes
/// the threshold band becomes free, a zero-weight asset that wants back in
/// becomes pinned or free) and the refit repeats, keeping the best candidate
/// seen. A repeated structure or a pass budget stops the exchange. Returns
/// None when no consistent structure was ever found, in which case the caller
/// keeps the raw iterate.
fn polish(
    problem: &DecisionProblem,
    q_tilde: &DMatrix<f64>,
    w_ipm: &DVector<f64>,
    tol: f64,
) -> Option<Candidate> {
    const ACT: f64 = 1e-6;
    const KINK: f64 = 1e-6;
    let n = problem.n_assets();
    let wp = &problem.w_prev;
    let kappa = problem.kappa;
    let scale = coefficient_scale(problem);

    let mut free = Vec::new();
    let mut sign = Vec::new();
    let mut pinned = Vec::new();
    let mut inactive = Vec::new();
    for i in 0..n {
        if w_ipm[i] > ACT {
            let movement = w_ipm[i] - wp[i];
            if movement.abs() > KINK || kappa == 0.0 {
                free.push(i);
                sign.push(if kappa == 0.0 && movement.abs() <= KINK {
                    0.0
                } else {
                    movement.signum()
                });
            } else {
                pinned.push(i);
            }
        } else {
            inactive.push(i);
        }
    }

    let mut best: Option<Candidate> = None;
    let mut seen = std::collections::HashSet::new();
    let mut w = DVector::zeros(n);
    for _pass in 0..(4 * n + 8) {
        let mut nu = f64::NAN;
        let mut consistent = true;
        loop {
            let pinned_mass: f64 = pinned.iter().map(|&i| wp[i]).sum();
            w.fill(0.0);
            for &i in &pinned {
                w[i] = wp[i];
            }

            if free.is_empty() {
                if (pinned_mass - 1.0).abs() > 1e-9 {
                    consistent = false;
                    break;
                }
                // Only the threshold is unknown; pick it inside the interval
                // that every stationarity condition allows.
                let g = problem.score(&w);
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                for &i in &pinned {
                    lo = lo.max(g[i] - kappa);
                    hi = hi.min(g[i] + kappa);
                }
                for &i in &inactive {
                    // mu_i >= 0 requires nu >= g_i - kappa * s_best.
                    let s_best = if wp[i] > ACT { -1.0 } else { 1.0 };
                    lo = lo.max(g[i] - kappa * s_best);
                }
                if lo > hi + 1e-12 {
                    consistent = false;
                    break;
                }
                nu = if lo.is_finite() && hi.is_finite() {
                    0.5 * (lo + hi.max(lo))
                } else if lo.is_finite() {
                    lo
                } else if hi.is_finite() {
                    hi
                } else {
                    0.0
                };
                break;
            }

            let f = free.len();
            let mut system = DMatrix::zeros(f + 1, f + 1);
            let mut rhs = DVector::zeros(f + 1);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    system[(a, b)] = 2.0 * q_tilde[(i, j)];
                }
                system[(a, f)] = 1.0;
                system[(f, a)] = 1.0;
                let pinned_coupling: f64 = pinned.iter().map(|&j| q_tilde[(i, j)] * wp[j]).sum();
                rhs[a] = problem.r_hat[i] - kappa * sign[a] - 2.0 * pinned_coupling;
            }
            rhs[f] = 1.0 - pinned_mass;
            let sol = match system.lu().solve(&rhs) {
                Some(sol) if sol.iter().all(|v| v.is_finite()) => sol,
                _ => {
                    consistent = false;
                    break;
                }
            };

            // Demote the worst contradiction, if any, and re-solve.
            let mut demote: Option<(usize, bool, f64)> = None;
            for (a, &i) in free.iter().enumerate() {
                let wi = sol[a];
                if wi < -1e-12 {
                    let severity = -wi;
                    if demote.is_none() || severity > demote.unwrap().2 {
                        demote = Some((a, false, severity));
                    }
                } else if sign[a] != 0.0 && sign[a] * (wi - wp[i]) < -1e-12 {
                    let severity = (wi - wp[i]).abs();
                    if demote.is_none() || severity > demote.unwrap().2 {
                        demote = Some((a, true, severity));
                    }
                }
            }
            match demote {
                Some((a, to_pinned, _)) => {
                    let i = free.remove(a);
                    sign.remove(a);
                    if to_pinned {
                        pinned.push(i);
                    } else {
                        inactive.push(i);
                    }
                }
                None => {
                    for (a, &i) in free.iter().enumerate() {
                        w[i] = sol[a].max(0.0);
                    }
                    nu = sol[f];
                    break;
                }
            }
        }
        if !consistent {
            break;
        }

        let g = problem.score(&w);
        let mut mu = DVector::zeros(n);
        let mut s = DVector::zeros(n);
        for (a, &i) in free.iter().enumerate() {
            s[i] = sign[a];
        }
        for &i in &pinned {
            s[i] = if kappa > 0.0 {
                ((g[i] - nu) / kappa).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
        for &i in &inactive {
            if kappa > 0.0 {
                s[i] = if wp[i] > ACT {
                    -1.0
                } else {
                    ((g[i] - nu) / kappa).clamp(-1.0, 1.0)
                };
                mu[i] = (nu + kappa * s[i] - g[i]).max(0.0);
            } else {
                mu[i] = (nu - g[i]).max(0.0);
            }
        }
        let residual = kkt_residual(problem, &w, nu, &mu, &s);
        let improved = best.as_ref().is_none_or(|b| residual < b.4);
        if improved {
            best = Some((w.clone(), nu, mu, s, residual));
        }
        if residual <= tol {
            break;
        }

        // The structure is primal-consistent but a dual condition failed:
        // promote the worst violator and try again. Stop on a structure
        // already visited; the exchange would cycle.
        let mut labels = vec![0u8; n];
        for (a, &i) in free.iter().enumerate() {
            labels[i] = if sign[a] >= 0.0 { 2 } else { 3 };
        }
        for &i in &pinned {
            labels[i] = 1;
        }
        if !seen.insert(labels) {
            break;
        }

        let peps = (0.5 * tol).max(1e-13) * scale;
        #[derive(Clone, Copy)]
        enum Move {
            PinnedToFree { slot: usize },
            InactiveToFree { slot: usize },
            InactiveToPinned { slot: usize },
        }
        let mut promote: Option<(Move, f64)> = None;
        for (slot, &i) in pinned.iter().enumerate() {
            // Stationarity at a hold needs |g - nu| <= kappa.
            let gap = (g[i] - nu).abs() - kappa;
            if gap > peps && promote.map_or(true, |p| gap > p.1) {
                promote = Some((Move::PinnedToFree { slot }, gap));
            }
        }
        for (slot, &i) in inactive.iter().enumerate() {
            // mu_i = nu + kappa * s_i - g_i must be nonnegative at the
            // structure's subgradient; a positive gap says the asset pays
            // its way back in. A previously held asset whose score sits
            // inside the threshold band returns as a hold, anything else
            // returns as a trade.
            let (gap, mv) = if kappa > 0.0 && wp[i] > ACT {
                let m = if (g[i] - nu).abs() <= kappa {
                    Move::InactiveToPinned { slot }
                } else {
                    Move::InactiveToFree { slot }
                };
                (g[i] - nu + kappa, m)
            } else {
                (g[i] - nu - kappa, Move::InactiveToFree { slot })
            };
            if gap > peps && promote.map_or(true, |p| gap > p.1) {
                promote = Some((mv, gap));
            }
        }
        match promote {
            Some((Move::PinnedToFree { slot }, _)) => {
                let i = pinned.remove(slot);
                free.push(i);
                sign.push(if kappa > 0.0 { (g[i] - nu).signum() } else { 0.0 });
            }
            Some((Move::InactiveToFree { slot }, _)) => {
                let i = inactive.remove(slot);
                free.push(i);
                sign.push(if kappa > 0.0 { (g[i] - nu).signum() } else { 0.0 });
            }
            Some((Move::InactiveToPinned { slot }, _)) => {
                let i = inactive.remove(slot);
                pinned.push(i);
            }
            None => break,
        }
    }
    best
}

/// Classification of one asset in a KKT report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KktCase {
    /// Held with a non-zero trade: the cost-adjusted score must equal nu.
    Moved,
    /// Held at exactly the previous weight: the score may sit anywhere
    /// inside the kappa-wide band around nu.
    Held,
    /// Not held: the best achievable adjusted score must not exceed nu.
    Inactive,
}

#[derive(Debug, Clone)]
pub struct KktAssetCheck {
    pub asset: usize,
    pub case: KktCase,
    /// Marginal score g_i = r_hat_i - 2 lambda (Sigma w)_i.
    pub score: f64,
    pub residual: f64,
}

/// Outcome of checking the threshold structure of a solved decision.
#[derive(Debug, Clone)]
pub struct KktReport {
    pub nu: f64,
    pub worst_residual: f64,
    pub passed: bool,
    pub assets: Vec<KktAssetCheck>,
}

/// Checks the stationarity case split and complementary slackness of a
/// solved decision against its own duals. A failed check is reported, not an
/// error; the result must carry `status = Optimal`.
pub fn verify_kkt(problem: &DecisionProblem, result: &DecisionResult, tol: f64) -> Result<KktReport> {
    if result.status != SolveStatus::Optimal {
        return Err(Error::Input(format!(
            "verify_kkt requires an optimal result, got {:?}",
            result.status
        )));
    }
    if result.weights.len() != problem.n_assets() {
        return Err(Error::Shape(format!(
            "result has {} weights for {} assets",
            result.weights.len(),
            problem.n_assets()
        )));
    }
    let w = &result.weights;
    let g = problem.score(w);
    let nu = result.nu;
    let kappa = problem.kappa;
    let mut assets = Vec::with_capacity(problem.n_assets());
    let mut worst: f64 = 0.0;
    for i in 0..problem.n_assets() {
        let movement = w[i] - problem.w_prev[i];
        let (case, mut residual) = if w[i] > ACTIVITY_EPS {
            if movement.abs() > MOVE_EPS {
                (KktCase::Moved, (g[i] - kappa * movement.signum() - nu).abs())
            } else {
                (KktCase::Held, ((g[i] - nu).abs() - kappa).max(0.0))
            }
        } else {
            // Selling out pins the subgradient at -1; a never-held asset may
            // use the most favorable subgradient +1.
            let s_best = if problem.w_prev[i] > ACTIVITY_EPS {
                -1.0
            } else {
                1.0
            };
            (KktCase::Inactive, (g[i] - kappa * s_best - nu).max(0.0))
        };
        residual = residual.max((result.mu[i] * w[i]).abs());
        worst = worst.max(residual);
        assets.push(KktAssetCheck {
            asset: i,
            case,
            score: g[i],
            residual,
        });
    }
    Ok(KktReport {
        nu,
        worst_residual: worst,
        passed: worst <= tol,
        assets,
    })
}
