//! Linear return prediction trained on squared error or on decision loss.
//!
//! The model is `r_hat_i = theta' x_i + bias_i`: one coefficient vector
//! shared across assets plus a per-asset intercept. Squared-error training
//! has a ridge closed form. Decision-loss training descends a convex upper
//! bound on decision regret whose (sub)gradient only needs two optimizer
//! calls per sample: the bound at predictions `r_hat` against realized
//! returns `r` is
//!
//! ```text
//!   L(r_hat, r) = z*(2 r_hat - r) - [ (2 r_hat - r)' w*(r) - R(w*(r)) ]
//! ```
//!
//! where `w*(v)` and `z*(v)` are the optimal weights and objective of the
//! rebalancing problem under scores `v`, and `R` collects its risk and
//! trade-cost terms. The bound is non-negative, zero exactly at
//! `r_hat = r`, and `d L / d r_hat = 2 (w*(2 r_hat - r) - w*(r))`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optimizer::{self, DecisionProblem, DecisionResult};

/// Linear predictor coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    /// Feature weights, shared across assets.
    pub theta: DVector<f64>,
    /// Per-asset intercept.
    pub bias: DVector<f64>,
}

impl PredictorParams {
    pub fn zeros(n_features: usize, n_assets: usize) -> PredictorParams {
        PredictorParams {
            theta: DVector::zeros(n_features),
            bias: DVector::zeros(n_assets),
        }
    }

    pub fn n_features(&self) -> usize {
        self.theta.len()
    }

    pub fn n_assets(&self) -> usize {
        self.bias.len()
    }
}

/// Predicted returns for one cross-section of per-asset feature vectors.
pub fn predict(params: &PredictorParams, features: &[DVector<f64>]) -> Result<DVector<f64>> {
    if features.len() != params.n_assets() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} assets",
            features.len(),
            params.n_assets()
        )));
    }
    let mut out = DVector::zeros(features.len());
    for (i, x) in features.iter().enumerate() {
        if x.len() != params.n_features() {
            return Err(Error::Shape(format!(
                "feature row {i} has {} entries, model expects {}",
                x.len(),
                params.n_features()
            )));
        }
        out[i] = params.theta.dot(x) + params.bias[i];
    }
    Ok(out)
}

/// One training month: the cross-section of features observed at the
/// rebalance date, the returns realized over the following month, the risk
/// model in force, and the portfolio the decision would trade away from.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub features: Vec<DVector<f64>>,
    pub realized: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub w_anchor: DVector<f64>,
}

impl TrainSample {
    fn check(&self, n_features: usize) -> Result<()> {
        let n = self.realized.len();
        if self.features.len() != n {
            return Err(Error::Shape(format!(
                "{} feature rows for {n} realized returns",
                self.features.len()
            )));
        }
        for (i, x) in self.features.iter().enumerate() {
            if x.len() != n_features {
                return Err(Error::Shape(format!(
                    "feature row {i} has {} entries, expected {n_features}",
                    x.len()
                )));
            }
        }
        Ok(())
    }
}

/// Gradient of a loss with respect to the predictor parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub theta: DVector<f64>,
    pub bias: DVector<f64>,
}

const SOLVE_TOL: f64 = 1e-8;

fn sample_problem(
    scores: &DVector<f64>,
    sample: &TrainSample,
    lambda: f64,
    kappa: f64,
) -> Result<DecisionProblem> {
    DecisionProblem::new(
        scores.clone(),
        sample.sigma.clone(),
        lambda,
        kappa,
        sample.w_anchor.clone(),
    )
}

fn oracle_for(sample: &TrainSample, lambda: f64, kappa: f64) -> Result<DecisionResult> {
    let p = sample_problem(&sample.realized, sample, lambda, kappa)?;
    optimizer::solve(&p, SOLVE_TOL)
}

/// Decision-loss value and parameter gradient at `params` for one sample.
pub fn spo_plus_loss(
    params: &PredictorParams,
    sample: &TrainSample,
    lambda: f64,
    kappa: f64,
) -> Result<(f64, LossGrad)> {
    sample.check(params.n_features())?;
    let oracle = oracle_for(sample, lambda, kappa)?;
    loss_with_oracle(params, sample, lambda, kappa, &oracle)
}

fn loss_with_oracle(
    params: &PredictorParams,
    sample: &TrainSample,
    lambda: f64,
    kappa: f64,
    oracle: &DecisionResult,
) -> Result<(f64, LossGrad)> {
    let r_hat = predict(params, &sample.features)?;
    let shifted = 2.0 * &r_hat - &sample.realized;
    let shifted_problem = sample_problem(&shifted, sample, lambda, kappa)?;
    let shifted_solution = optimizer::solve(&shifted_problem, SOLVE_TOL)?;
    // Objective of the shifted problem at the oracle's weights; subtracting
    // it from the shifted optimum gives the bound.
    let value_at_oracle = shifted_problem.objective(&oracle.weights);
    let loss = shifted_solution.objective - value_at_oracle;

    let d_r_hat = 2.0 * (&shifted_solution.weights - &oracle.weights);
    let mut grad_theta = DVector::zeros(params.n_features());
    for (i, x) in sample.features.iter().enumerate() {
        grad_theta += x * d_r_hat[i];
    }
    Ok((
        loss,
        LossGrad {
            theta: grad_theta,
            bias: d_r_hat,
        },
    ))
}

/// Realized-return shortfall of acting on `r_hat` instead of knowing the
/// realized returns: `r' w*(r) - r' w*(r_hat)`, both decisions anchored at
/// the sample's held portfolio.
pub fn decision_regret(
    r_hat: &DVector<f64>,
    sample: &TrainSample,
    lambda: f64,
    kappa: f64,
) -> Result<f64> {
    let oracle = oracle_for(sample, lambda, kappa)?;
    let taken = optimizer::solve(&sample_problem(r_hat, sample, lambda, kappa)?, SOLVE_TOL)?;
    Ok(sample.realized.dot(&oracle.weights) - sample.realized.dot(&taken.weights))
}

/// Which loss the trainer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainObjective {
    /// Ridge-regularized squared prediction error; closed form.
    SquaredError,
    /// Mean decision loss by full-batch subgradient descent.
    DecisionLoss,
}

impl TrainObjective {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainObjective::SquaredError => "pto",
            TrainObjective::DecisionLoss => "spo",
        }
    }

    pub fn parse(s: &str) -> Result<TrainObjective> {
        match s {
            "pto" => Ok(TrainObjective::SquaredError),
            "spo" => Ok(TrainObjective::DecisionLoss),
            other => Err(Error::ModelFormat(format!("unknown objective {other:?}"))),
        }
    }
}

/// Training knobs. Squared-error training uses only `l2`; decision-loss
/// training uses all three.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.01,
            epochs: 150,
            l2: 1e-3,
        }
    }
}

impl Hyperparams {
    fn check(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Input(format!(
                "learning rate {} must be >= 0",
                self.learning_rate
            )));
        }
        if !self.l2.is_finite() || self.l2 < 0.0 {
            return Err(Error::Input(format!("l2 {} must be >= 0", self.l2)));
        }
        Ok(())
    }
}

/// A trained predictor together with how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: PredictorParams,
    pub objective: TrainObjective,
    pub hyper: Hyperparams,
    /// True when an unregularized squared-error fit was rank-deficient and
    /// the minimum-norm solution was taken instead.
    pub min_norm: bool,
}

/// Trains a predictor on monthly samples.
///
/// Both paths are deterministic: the squared-error fit is a linear solve and
/// decision-loss descent is full-batch from a fixed start (zero feature
/// weights, per-asset mean realized returns as intercepts).
pub fn train(
    objective: TrainObjective,
    samples: &[TrainSample],
    lambda: f64,
    kappa: f64,
    hyper: Hyperparams,
) -> Result<TrainedModel> {
    hyper.check()?;
    if samples.is_empty() {
        return Err(Error::Fit("no training samples".into()));
    }
    let n_features = samples[0]
        .features
        .first()
        .map(|x| x.len())
        .ok_or_else(|| Error::Fit("sample has no feature rows".into()))?;
    let n_assets = samples[0].realized.len();
    for s in samples {
        s.check(n_features)?;
        if s.realized.len() != n_assets {
            return Err(Error::Shape(format!(
                "mixed cross-section sizes: {} vs {n_assets}",
                s.realized.len()
            )));
        }
    }
    match objective {
        TrainObjective::SquaredError => fit_squared_error(samples, n_features, n_assets, hyper),
        TrainObjective::DecisionLoss => {
            descend_decision_loss(samples, n_features, n_assets, lambda, kappa, hyper)
        }
    }
}

fn fit_squared_error(
    samples: &[TrainSample],
    n_features: usize,
    n_assets: usize,
    hyper: Hyperparams,
) -> Result<TrainedModel> {
    let rows = samples.len() * n_assets;
    let cols = n_features + n_assets;
    let mut a = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    let mut row = 0;
    for s in samples {
        for i in 0..n_assets {
            for k in 0..n_features {
                a[(row, k)] = s.features[i][k];
            }
            a[(row, n_features + i)] = 1.0;
            y[row] = s.realized[i];
            row += 1;
        }
    }
    let aty = a.transpose() * &y;
    let mut normal = a.transpose() * &a;
    for k in 0..n_features {
        normal[(k, k)] += hyper.l2;
    }
    let (p, min_norm) = match normal.cholesky().map(|ch| ch.solve(&aty)) {
        Some(p) => (p, false),
        None => {
            // Rank-deficient design: fall back to the minimum-norm solution.
            let svd = a.svd(true, true);
            let p = svd
                .solve(&y, 1e-12)
                .map_err(|e| Error::Fit(format!("rank-deficient fit: {e}")))?;
            (p, true)
        }
    };
    Ok(TrainedModel {
        params: PredictorParams {
            theta: p.rows(0, n_features).into_owned(),
            bias: p.rows(n_features, n_assets).into_owned(),
        },
        objective: TrainObjective::SquaredError,
        hyper,
        min_norm,
    })
}

fn descend_decision_loss(
    samples: &[TrainSample],
    n_features: usize,
    n_assets: usize,
    lambda: f64,
    kappa: f64,
    hyper: Hyperparams,
) -> Result<TrainedModel> {
    let t = samples.len() as f64;
    let mut params = PredictorParams::zeros(n_features, n_assets);
    for s in samples {
        params.bias += &s.realized / t;
    }
    let oracles: Vec<DecisionResult> = samples
        .iter()
        .map(|s| oracle_for(s, lambda, kappa))
        .collect::<Result<_>>()?;
    for _ in 0..hyper.epochs {
        let mut g_theta = DVector::zeros(n_features);
        let mut g_bias = DVector::zeros(n_assets);
        for (s, oracle) in samples.iter().zip(&oracles) {
            let (_, grad) = loss_with_oracle(&params, s, lambda, kappa, oracle)?;
            g_theta += grad.theta / t;
            g_bias += grad.bias / t;
        }
        g_theta += 2.0 * hyper.l2 * &params.theta;
        params.theta -= hyper.learning_rate * g_theta;
        params.bias -= hyper.learning_rate * g_bias;
    }
    Ok(TrainedModel {
        params,
        objective: TrainObjective::DecisionLoss,
        hyper,
        min_norm: false,
    })
}

/// Mean decision loss of `params` over `samples`.
pub fn mean_decision_loss(
    params: &PredictorParams,
    samples: &[TrainSample],
    lambda: f64,
    kappa: f64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Fit("no samples".into()));
    }
    let mut total = 0.0;
    for s in samples {
        total += spo_plus_loss(params, s, lambda, kappa)?.0;
    }
    Ok(total / samples.len() as f64)
}

/// One evaluated hyperparameter candidate.
#[derive(Debug, Clone, Copy)]
pub struct SearchEval {
    pub hyper: Hyperparams,
    pub score: f64,
}

/// Result of a hyperparameter search: the best candidate by validation
/// score (lower is better) and the full evaluation log in evaluation order.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Hyperparams,
    pub best_score: f64,
    pub evaluations: Vec<SearchEval>,
}

const LR_RANGE: (f64, f64) = (1e-4, 1.0);
const EPOCH_RANGE: (usize, usize) = (50, 500);
const L2_RANGE: (f64, f64) = (1e-6, 1.0);

fn draw_candidate(rng: &mut ChaCha8Rng) -> Hyperparams {
    let log_lr = rng.random_range(LR_RANGE.0.ln()..=LR_RANGE.1.ln());
    let epochs = rng.random_range(EPOCH_RANGE.0..=EPOCH_RANGE.1);
    let log_l2 = rng.random_range(L2_RANGE.0.ln()..=L2_RANGE.1.ln());
    Hyperparams {
        learning_rate: log_lr.exp(),
        epochs,
        l2: log_l2.exp(),
    }
}

fn candidate_coords(h: &Hyperparams) -> [f64; 3] {
    let unit = |v: f64, lo: f64, hi: f64| (v.ln() - lo.ln()) / (hi.ln() - lo.ln());
    [
        unit(h.learning_rate, LR_RANGE.0, LR_RANGE.1),
        (h.epochs - EPOCH_RANGE.0) as f64 / (EPOCH_RANGE.1 - EPOCH_RANGE.0) as f64,
        unit(h.l2, L2_RANGE.0, L2_RANGE.1),
    ]
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Sequential search over training hyperparameters.
///
/// Seeded and fully deterministic: each step draws a pool of proposals and
/// evaluates the one whose nearest already-evaluated neighbor has the best
/// score, discounted by distance so far-away proposals stay attractive.
/// Scores are mean validation decision regret for decision-loss training and
/// validation mean squared error for squared-error training.
pub fn search_hyperparams(
    objective: TrainObjective,
    train_samples: &[TrainSample],
    val_samples: &[TrainSample],
    lambda: f64,
    kappa: f64,
    budget: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    if budget == 0 {
        return Err(Error::Input("search budget must be at least 1".into()));
    }
    if train_samples.is_empty() || val_samples.is_empty() {
        return Err(Error::Fit(
            "hyperparameter search needs non-empty training and validation sets".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluations: Vec<SearchEval> = Vec::with_capacity(budget);
    let mut coords: Vec<[f64; 3]> = Vec::with_capacity(budget);
    for step in 0..budget {
        let hyper = if step == 0 {
            draw_candidate(&mut rng)
        } else {
            let pool: Vec<Hyperparams> = (0..8).map(|_| draw_candidate(&mut rng)).collect();
            let mut best_idx = 0;
            let mut best_rank = f64::INFINITY;
            for (idx, cand) in pool.iter().enumerate() {
                let c = candidate_coords(cand);
                let (nn_score, nn_dist) = evaluations
                    .iter()
                    .zip(&coords)
                    .map(|(e, pt)| (e.score, distance(&c, pt)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("non-empty");
                let rank = nn_score - 0.5 * nn_dist;
                if rank < best_rank {
                    best_rank = rank;
                    best_idx = idx;
                }
            }
            pool[best_idx]
        };
        let model = train(objective, train_samples, lambda, kappa, hyper)?;
        let score = validation_score(objective, &model.params, val_samples, lambda, kappa)?;
        coords.push(candidate_coords(&hyper));
        evaluations.push(SearchEval { hyper, score });
    }
    let best = evaluations
        .iter()
        .min_by(|a, b| a.score.total_cmp(&b.score))
        .expect("budget >= 1");
    Ok(SearchOutcome {
        best: best.hyper,
        best_score: best.score,
        evaluations: evaluations.clone(),
    })
}

fn validation_score(
    objective: TrainObjective,
    params: &PredictorParams,
    val: &[TrainSample],
    lambda: f64,
    kappa: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for s in val {
        let r_hat = predict(params, &s.features)?;
        total += match objective {
            TrainObjective::DecisionLoss => decision_regret(&r_hat, s, lambda, kappa)?,
            TrainObjective::SquaredError => {
                (&r_hat - &s.realized).norm_squared() / s.realized.len() as f64
            }
        };
    }
    Ok(total / val.len() as f64)
}

const MODEL_MAGIC: &str = "spofolio-model v1";

/// Serializes a trained model as a small text file.
pub fn save_model<P: AsRef<Path>>(model: &TrainedModel, path: P) -> Result<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn model_to_string(model: &TrainedModel) -> String {
    let join = |v: &DVector<f64>| {
        v.iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!(
        "{MODEL_MAGIC} mode={}\nfeatures {} assets {}\ntheta {}\nbias {}\nhyper lr={} epochs={} l2={}\nmin_norm {}\n",
        model.objective.as_str(),
        model.params.n_features(),
        model.params.n_assets(),
        join(&model.params.theta),
        join(&model.params.bias),
        model.hyper.learning_rate,
        model.hyper.epochs,
        model.hyper.l2,
        model.min_norm,
    )
}

pub fn load_model<P: AsRef<Path>>(path: P) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path)?;
    model_from_str(&text)
}

pub fn model_from_str(text: &str) -> Result<TrainedModel> {
    let bad = |msg: String| Error::ModelFormat(msg);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty model file".into()))?;
    let mode = header
        .strip_prefix(MODEL_MAGIC)
        .and_then(|rest| rest.trim().strip_prefix("mode="))
        .ok_or_else(|| bad(format!("bad header `{header}`")))?;
    let objective = TrainObjective::parse(mode.trim())?;

    let dims = lines.next().ok_or_else(|| bad("missing dimensions".into()))?;
    let dims: Vec<&str> = dims.split_whitespace().collect();
    if dims.len() != 4 || dims[0] != "features" || dims[2] != "assets" {
        return Err(bad(format!("bad dimensions line `{}`", dims.join(" "))));
    }
    let n_features: usize = dims[1]
        .parse()
        .map_err(|e| bad(format!("bad feature count: {e}")))?;
    let n_assets: usize = dims[3]
        .parse()
        .map_err(|e| bad(format!("bad asset count: {e}")))?;

    let parse_vec = |lines: &mut std::str::Lines<'_>, label: &str, len: usize| -> Result<DVector<f64>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::ModelFormat(format!("missing {label} line")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(label) {
            return Err(Error::ModelFormat(format!("expected {label} line, got `{line}`")));
        }
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|e| Error::ModelFormat(format!("bad {label} value `{p}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != len {
            return Err(Error::ModelFormat(format!(
                "{label} has {} values, expected {len}",
                values.len()
            )));
        }
        Ok(DVector::from_vec(values))
    };
    let theta = parse_vec(&mut lines, "theta", n_features)?;
    let bias = parse_vec(&mut lines, "bias", n_assets)?;

    let hyper_line = lines.next().ok_or_else(|| bad("missing hyper line".into()))?;
    let mut lr = None;
    let mut epochs = None;
    let mut l2 = None;
    for part in hyper_line
        .strip_prefix("hyper ")
        .ok_or_else(|| bad(format!("bad hyper line `{hyper_line}`")))?
        .split_whitespace()
    {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("bad hyper entry `{part}`")))?;
        match key {
            "lr" => lr = Some(value.parse::<f64>().map_err(|e| bad(format!("bad lr: {e}")))?),
            "epochs" => {
                epochs = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| bad(format!("bad epochs: {e}")))?,
                )
            }
            "l2" => l2 = Some(value.parse::<f64>().map_err(|e| bad(format!("bad l2: {e}")))?),
            other => return Err(bad(format!("unknown hyper key `{other}`"))),
        }
    }
    let (Some(learning_rate), Some(epochs), Some(l2)) = (lr, epochs, l2) else {
        return Err(bad(format!("incomplete hyper line `{hyper_line}`")));
    };

    let flag_line = lines.next().ok_or_else(|| bad("missing min_norm line".into()))?;
    let min_norm = match flag_line.split_whitespace().collect::<Vec<_>>()[..] {
        ["min_norm", "true"] => true,
        ["min_norm", "false"] => false,
        _ => return Err(bad(format!("bad min_norm line `{flag_line}`"))),
    };

    Ok(TrainedModel {
        params: PredictorParams { theta, bias },
        objective,
        hyper: Hyperparams {
            learning_rate,
            epochs,
            l2,
        },
        min_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn vec(values: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(values)
    }

    fn uniform(n: usize) -> DVector<f64> {
        DVector::from_element(n, 1.0 / n as f64)
    }

    /// Two assets, no risk or cost terms, features carrying no signal; the
    /// model predicts through its intercepts alone.
    fn crossed_sample() -> TrainSample {
        TrainSample {
            features: vec![vec(&[0.0]), vec(&[0.0])],
            realized: vec(&[0.1, 0.0]),
            sigma: DMatrix::zeros(2, 2),
            w_anchor: uniform(2),
        }
    }

    #[test]
    fn loss_fixture_where_the_ranking_is_inverted() {
        let params = PredictorParams {
            theta: vec(&[0.0]),
            bias: vec(&[0.0, 0.1]),
        };
        let sample = crossed_sample();
        let (loss, grad) = spo_plus_loss(&params, &sample, 0.0, 0.0).unwrap();
        assert_relative_eq!(loss, 0.3, epsilon = 1e-7);
        assert_relative_eq!(grad.bias[0], -2.0, epsilon = 1e-5);
        assert_relative_eq!(grad.bias[1], 2.0, epsilon = 1e-5);
        assert_relative_eq!(grad.theta[0], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn loss_is_exactly_zero_at_perfect_predictions() {
        let sample = crossed_sample();
        let params = PredictorParams {
            theta: vec(&[0.0]),
            bias: sample.realized.clone(),
        };
        let (loss, grad) = spo_plus_loss(&params, &sample, 0.0, 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad.bias, DVector::zeros(2));
        assert_eq!(grad.theta, DVector::zeros(1));

        // Also with active risk and cost terms.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-0.03..0.03));
        let sample = TrainSample {
            features: vec![vec(&[0.2, -0.1]), vec(&[0.0, 0.3]), vec(&[-0.4, 0.1])],
            realized: vec(&[0.04, -0.02, 0.01]),
            sigma: &l * l.transpose(),
            w_anchor: uniform(3),
        };
        let params = PredictorParams {
            theta: DVector::zeros(2),
            bias: sample.realized.clone(),
        };
        let (loss, grad) = spo_plus_loss(&params, &sample, 5.0, 0.01).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad.bias, DVector::zeros(3));
    }

    #[test]
    fn loss_is_never_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let l = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-0.05..0.05));
            let sample = TrainSample {
                features: vec![
                    vec(&[rng.random_range(-1.0..1.0)]),
                    vec(&[rng.random_range(-1.0..1.0)]),
                    vec(&[rng.random_range(-1.0..1.0)]),
                ],
                realized: DVector::from_fn(3, |_, _| rng.random_range(-0.1..0.1)),
                sigma: &l * l.transpose(),
                w_anchor: uniform(3),
            };
            let params = PredictorParams {
                theta: vec(&[rng.random_range(-0.1..0.1)]),
                bias: DVector::from_fn(3, |_, _| rng.random_range(-0.05..0.05)),
            };
            let (loss, _) = spo_plus_loss(&params, &sample, 2.0, 0.002).unwrap();
            assert!(loss >= -1e-9, "negative loss {loss}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_away_from_kinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let l = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-0.04..0.04));
        let sample = TrainSample {
            features: vec![vec(&[0.5, -0.2]), vec(&[-0.3, 0.4]), vec(&[0.1, 0.8])],
            realized: vec(&[0.03, -0.04, 0.02]),
            sigma: &l * l.transpose() + DMatrix::identity(3, 3) * 1e-4,
            w_anchor: uniform(3),
        };
        let params = PredictorParams {
            theta: vec(&[0.02, -0.03]),
            bias: vec(&[0.01, 0.0, -0.02]),
        };
        let lambda = 3.0;
        let kappa = 0.002;
        let (_, grad) = spo_plus_loss(&params, &sample, lambda, kappa).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut up = params.clone();
            let mut dn = params.clone();
            up.theta[k] += h;
            dn.theta[k] -= h;
            let fd = (spo_plus_loss(&up, &sample, lambda, kappa).unwrap().0
                - spo_plus_loss(&dn, &sample, lambda, kappa).unwrap().0)
                / (2.0 * h);
            assert_relative_eq!(grad.theta[k], fd, epsilon = 1e-4, max_relative = 1e-3);
        }
        for i in 0..3 {
            let mut up = params.clone();
            let mut dn = params.clone();
            up.bias[i] += h;
            dn.bias[i] -= h;
            let fd = (spo_plus_loss(&up, &sample, lambda, kappa).unwrap().0
                - spo_plus_loss(&dn, &sample, lambda, kappa).unwrap().0)
                / (2.0 * h);
            assert_relative_eq!(grad.bias[i], fd, epsilon = 1e-4, max_relative = 1e-3);
        }
    }

    fn linear_samples(slope: f64, noise: &mut ChaCha8Rng, t: usize) -> Vec<TrainSample> {
        (0..t)
            .map(|_| {
                let x0 = noise.random_range(-1.0..1.0);
                let x1 = noise.random_range(-1.0..1.0);
                TrainSample {
                    features: vec![vec(&[x0]), vec(&[x1])],
                    realized: vec(&[slope * x0 + 0.01, slope * x1 - 0.01]),
                    sigma: DMatrix::identity(2, 2) * 1e-4,
                    w_anchor: uniform(2),
                }
            })
            .collect()
    }

    #[test]
    fn squared_error_fit_recovers_a_noiseless_linear_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let samples = linear_samples(0.05, &mut rng, 30);
        let model = train(
            TrainObjective::SquaredError,
            &samples,
            1.0,
            0.0,
            Hyperparams {
                l2: 0.0,
                ..Hyperparams::default()
            },
        )
        .unwrap();
        assert_relative_eq!(model.params.theta[0], 0.05, epsilon = 1e-8);
        assert_relative_eq!(model.params.bias[0], 0.01, epsilon = 1e-8);
        assert_relative_eq!(model.params.bias[1], -0.01, epsilon = 1e-8);
        assert!(!model.min_norm);
    }

    #[test]
    fn ridge_shrinks_the_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let samples = linear_samples(0.05, &mut rng, 30);
        let strong = train(
            TrainObjective::SquaredError,
            &samples,
            1.0,
            0.0,
            Hyperparams {
                l2: 100.0,
                ..Hyperparams::default()
            },
        )
        .unwrap();
        assert!(strong.params.theta[0].abs() < 0.05 * 0.5);
    }

    #[test]
    fn squared_error_fit_matches_local_gradient_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let samples = linear_samples(0.03, &mut rng, 12);
        let l2 = 0.01;
        let model = train(
            TrainObjective::SquaredError,
            &samples,
            1.0,
            0.0,
            Hyperparams {
                l2,
                ..Hyperparams::default()
            },
        )
        .unwrap();

        // Plain gradient descent on the identical ridge objective.
        let mut theta = 0.0f64;
        let mut bias = [0.0f64, 0.0f64];
        let lr = 0.05;
        for _ in 0..20000 {
            let mut g_theta = 2.0 * l2 * theta;
            let mut g_bias = [0.0, 0.0];
            for s in &samples {
                for i in 0..2 {
                    let x = s.features[i][0];
                    let err = theta * x + bias[i] - s.realized[i];
                    g_theta += 2.0 * err * x;
                    g_bias[i] += 2.0 * err;
                }
            }
            theta -= lr * g_theta / (samples.len() as f64 * 2.0);
            bias[0] -= lr * g_bias[0] / (samples.len() as f64 * 2.0);
            bias[1] -= lr * g_bias[1] / (samples.len() as f64 * 2.0);
        }
        // The loop divides the full gradient (penalty included) by the row
        // count, so it minimizes the same objective as the closed form.
        assert_relative_eq!(model.params.theta[0], theta, epsilon = 1e-6);
        assert_relative_eq!(model.params.bias[0], bias[0], epsilon = 1e-6);
        assert_relative_eq!(model.params.bias[1], bias[1], epsilon = 1e-6);
    }

    #[test]
    fn zero_learning_rate_keeps_the_initial_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let samples = linear_samples(0.05, &mut rng, 10);
        let model = train(
            TrainObjective::DecisionLoss,
            &samples,
            1.0,
            0.001,
            Hyperparams {
                learning_rate: 0.0,
                epochs: 5,
                l2: 0.0,
            },
        )
        .unwrap();
        assert_eq!(model.params.theta, DVector::zeros(1));
        let mean0: f64 = samples.iter().map(|s| s.realized[0]).sum::<f64>() / 10.0;
        assert_relative_eq!(model.params.bias[0], mean0, epsilon = 1e-12);
    }

    #[test]
    fn decision_loss_descent_reduces_the_training_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let samples = linear_samples(0.08, &mut rng, 15);
        let init = {
            let t = samples.len() as f64;
            let mut p = PredictorParams::zeros(1, 2);
            for s in &samples {
                p.bias += &s.realized / t;
            }
            p
        };
        let before = mean_decision_loss(&init, &samples, 1.0, 0.001).unwrap();
        let model = train(
            TrainObjective::DecisionLoss,
            &samples,
            1.0,
            0.001,
            Hyperparams {
                learning_rate: 0.05,
                epochs: 120,
                l2: 0.0,
            },
        )
        .unwrap();
        let after = mean_decision_loss(&model.params, &samples, 1.0, 0.001).unwrap();
        assert!(
            after < before - 1e-6,
            "loss did not improve: {before} -> {after}"
        );
        // The planted rule is feature-driven, so the slope must move off zero.
        assert!(model.params.theta[0].abs() > 1e-3);
    }

    #[test]
    fn regret_of_perfect_predictions_is_zero() {
        let sample = crossed_sample();
        let regret = decision_regret(&sample.realized, &sample, 0.0, 0.0).unwrap();
        assert_relative_eq!(regret, 0.0, epsilon = 1e-9);
        let inverted = vec(&[0.0, 0.1]);
        let regret = decision_regret(&inverted, &sample, 0.0, 0.0).unwrap();
        assert_relative_eq!(regret, 0.1, epsilon = 1e-6);
    }

    #[test]
    fn model_files_round_trip() {
        let model = TrainedModel {
            params: PredictorParams {
                theta: vec(&[0.0123456789, -4.2e-7]),
                bias: vec(&[0.1, -0.25, 3e-16]),
            },
            objective: TrainObjective::DecisionLoss,
            hyper: Hyperparams {
                learning_rate: 0.037,
                epochs: 212,
                l2: 4.5e-4,
            },
            min_norm: true,
        };
        let text = model_to_string(&model);
        let back = model_from_str(&text).unwrap();
        assert_eq!(back, model);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }

    #[test]
    fn malformed_model_files_are_rejected() {
        assert!(model_from_str("").is_err());
        assert!(model_from_str("wrong-magic v1 mode=spo\n").is_err());
        assert!(model_from_str("spofolio-model v1 mode=banana\n").is_err());
        let good = model_to_string(&TrainedModel {
            params: PredictorParams::zeros(2, 2),
            objective: TrainObjective::SquaredError,
            hyper: Hyperparams::default(),
            min_norm: false,
        });
        let truncated: String = good.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(model_from_str(&truncated).is_err());
        let wrong_len = good.replace("theta 0 0", "theta 0 0 0");
        assert!(matches!(
            model_from_str(&wrong_len),
            Err(Error::ModelFormat(_))
        ));
    }

    #[test]
    fn search_respects_its_budget_and_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let train_s = linear_samples(0.05, &mut rng, 8);
        let val_s = linear_samples(0.05, &mut rng, 3);
        let a = search_hyperparams(
            TrainObjective::SquaredError,
            &train_s,
            &val_s,
            1.0,
            0.001,
            5,
            7,
        )
        .unwrap();
        assert_eq!(a.evaluations.len(), 5);
        let b = search_hyperparams(
            TrainObjective::SquaredError,
            &train_s,
            &val_s,
            1.0,
            0.001,
            5,
            7,
        )
        .unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.best_score, b.best_score);
        let min_seen = a
            .evaluations
            .iter()
            .map(|e| e.score)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_score, min_seen);

        let single = search_hyperparams(
            TrainObjective::SquaredError,
            &train_s,
            &val_s,
            1.0,
            0.001,
            1,
            7,
        )
        .unwrap();
        assert_eq!(single.evaluations.len(), 1);
        assert_eq!(single.best, single.evaluations[0].hyper);
    }

    #[test]
    fn predict_checks_shapes() {
        let params = PredictorParams::zeros(2, 3);
        assert!(predict(&params, &[vec(&[1.0, 2.0]), vec(&[0.0, 0.0])]).is_err());
        assert!(predict(
            &params,
            &[vec(&[1.0]), vec(&[1.0]), vec(&[1.0])]
        )
        .is_err());
    }
}
