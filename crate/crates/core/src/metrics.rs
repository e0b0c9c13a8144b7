//! Performance summaries over monthly backtest returns.

use crate::error::{Error, Result};

/// How per-period returns are compounded into an annual figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Annualization {
    /// Geometric: grow wealth through every period, then take the
    /// twelve-per-year root. The default everywhere.
    Geometric,
    /// Arithmetic: twelve times the mean period return.
    Arithmetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceSummary {
    pub ann_return: f64,
    /// Population standard deviation of period returns, scaled by sqrt(12).
    pub ann_vol: f64,
    /// `ann_return / ann_vol`; summarizing errors out on zero volatility
    /// rather than returning an infinity.
    pub sharpe: f64,
    /// Most negative peak-to-trough decline of the compounded wealth curve;
    /// zero or negative.
    pub max_drawdown: f64,
    pub mean_turnover: f64,
    pub n_periods: usize,
}

/// Compounded wealth curve: `prod_{s<=t} (1 + r_s)` per period.
pub fn wealth_curve(returns: &[f64]) -> Result<Vec<f64>> {
    let mut wealth = Vec::with_capacity(returns.len());
    let mut w = 1.0;
    for (t, r) in returns.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::Metrics(format!("non-finite return at period {t}")));
        }
        if *r <= -1.0 {
            return Err(Error::Metrics(format!(
                "return {r} at period {t} wipes out the portfolio"
            )));
        }
        w *= 1.0 + r;
        wealth.push(w);
    }
    Ok(wealth)
}

/// Maximum drawdown of the compounded wealth curve, as a non-positive
/// fraction of the running peak.
pub fn max_drawdown(returns: &[f64]) -> Result<f64> {
    let wealth = wealth_curve(returns)?;
    let mut peak = 1.0f64;
    let mut worst = 0.0f64;
    for w in wealth {
        peak = peak.max(w);
        worst = worst.min(w / peak - 1.0);
    }
    Ok(worst)
}

/// Summarizes a backtest's monthly net returns and per-rebalance turnovers.
pub fn summarize(
    net_returns: &[f64],
    turnovers: &[f64],
    annualization: Annualization,
) -> Result<PerformanceSummary> {
    let t = net_returns.len();
    if t == 0 {
        return Err(Error::Metrics("no periods to summarize".into()));
    }
    if turnovers.len() != t {
        return Err(Error::Shape(format!(
            "{t} returns but {} turnovers",
            turnovers.len()
        )));
    }
    for (i, to) in turnovers.iter().enumerate() {
        if !to.is_finite() || *to < 0.0 {
            return Err(Error::Metrics(format!("bad turnover {to} at period {i}")));
        }
    }
    let wealth = wealth_curve(net_returns)?;

    let periods_per_year = 12.0;
    let mean = net_returns.iter().sum::<f64>() / t as f64;
    let ann_return = match annualization {
        Annualization::Geometric => {
            let terminal = *wealth.last().expect("non-empty");
            terminal.powf(periods_per_year / t as f64) - 1.0
        }
        Annualization::Arithmetic => mean * periods_per_year,
    };
    // A constant series must report exactly zero variance; the centered sum
    // alone can leave rounding dust from the mean.
    let constant = net_returns.iter().all(|r| *r == net_returns[0]);
    let var = if constant {
        0.0
    } else {
        net_returns
            .iter()
            .map(|r| (r - mean) * (r - mean))
            .sum::<f64>()
            / t as f64
    };
    let ann_vol = var.sqrt() * periods_per_year.sqrt();
    if ann_vol == 0.0 {
        return Err(Error::Metrics(
            "zero return volatility; the ratio of annual return to volatility is undefined".into(),
        ));
    }
    let sharpe = ann_return / ann_vol;
    let max_drawdown = {
        let mut peak = 1.0f64;
        let mut worst = 0.0f64;
        for w in &wealth {
            peak = peak.max(*w);
            worst = worst.min(w / peak - 1.0);
        }
        worst
    };
    let mean_turnover = turnovers.iter().sum::<f64>() / t as f64;
    Ok(PerformanceSummary {
        ann_return,
        ann_vol,
        sharpe,
        max_drawdown,
        mean_turnover,
        n_periods: t,
    })
}
