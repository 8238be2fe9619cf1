//! Rolling-window out-of-sample evaluation of minimum-variance portfolios.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::assembly::{estimate, sample_cov};
use crate::error::{Error, Result};
use crate::io::{format_f64, write_atomic};
use crate::panel::{FactorPanel, ReturnsPanel};
use crate::portfolio::optimize::{
    min_var_long_only, min_var_unconstrained, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::scod::DEFAULT_CQ;

/// Which covariance estimate drives the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Cluster,
    Sample,
}

/// Which minimum-variance problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Unconstrained,
    LongOnly,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Cluster => "cluster",
            Estimator::Sample => "sample",
        })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Unconstrained => "unconstrained",
            Scheme::LongOnly => "long_only",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster" => Ok(Estimator::Cluster),
            "sample" => Ok(Estimator::Sample),
            _ => Err(Error::InvalidParameter(format!(
                "estimator must be cluster or sample, got {s:?}"
            ))),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unconstrained" => Ok(Scheme::Unconstrained),
            "long_only" | "long-only" => Ok(Scheme::LongOnly),
            _ => Err(Error::InvalidParameter(format!(
                "scheme must be unconstrained or long_only, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub train_window: usize,
    pub rebalance_every: usize,
    pub estimator: Estimator,
    pub scheme: Scheme,
    pub delta: f64,
    pub c_q: f64,
    pub annualization: f64,
    /// Inputs are already in percent; skips the ×100 in AV and SD.
    pub percent_inputs: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            train_window: 504,
            rebalance_every: 1,
            estimator: Estimator::Cluster,
            scheme: Scheme::Unconstrained,
            delta: 0.0,
            c_q: DEFAULT_CQ,
            annualization: 252.0,
            percent_inputs: false,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_window < 2 {
            return Err(Error::InvalidParameter("train_window must be at least 2".into()));
        }
        if self.rebalance_every < 1 {
            return Err(Error::InvalidParameter("rebalance_every must be at least 1".into()));
        }
        if !(self.annualization > 0.0 && self.annualization.is_finite()) {
            return Err(Error::InvalidParameter("annualization must be positive".into()));
        }
        Ok(())
    }
}

/// Annualized out-of-sample statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Performance {
    pub av: f64,
    pub sd: f64,
    /// `None` when SD is zero up to rounding.
    pub ir: Option<f64>,
}

/// AV = A·mean·100, SD = √A·stdev·100 (stdev with denominator n − 1),
/// IR = AV/SD. The ×100 is dropped when `percent_inputs` is set.
pub fn performance(daily: &[f64], annualization: f64, percent_inputs: bool) -> Result<Performance> {
    let n = daily.len();
    if n < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: n,
        });
    }
    let mult = if percent_inputs { 1.0 } else { 100.0 };
    let mean = daily.iter().sum::<f64>() / n as f64;
    let var = daily.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd_raw = var.sqrt();
    let av = annualization * mean * mult;
    let sd = annualization.sqrt() * sd_raw * mult;
    let degenerate = sd_raw <= 1e-12 * mean.abs() || sd_raw == 0.0;
    Ok(Performance {
        av,
        sd,
        ir: if degenerate { None } else { Some(av / sd) },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub estimator: Estimator,
    pub scheme: Scheme,
    pub dates: Vec<String>,
    pub daily_returns: Vec<f64>,
    /// (first test date the weights apply to, weights)
    pub weights_history: Vec<(String, Vec<f64>)>,
    pub performance: Performance,
    pub cumulative: Vec<f64>,
}

impl BacktestReport {
    pub fn summary_csv(&self) -> String {
        let p = &self.performance;
        format!(
            "estimator,scheme,av,sd,ir\n{},{},{},{},{}\n",
            self.estimator,
            self.scheme,
            format_f64(p.av),
            format_f64(p.sd),
            p.ir.map(format_f64).unwrap_or_else(|| "NA".into())
        )
    }

    pub fn series_csv(&self) -> String {
        let mut out = String::from("date,daily_return,cumulative\n");
        for ((d, r), c) in self.dates.iter().zip(&self.daily_returns).zip(&self.cumulative) {
            out.push_str(&format!("{d},{},{}\n", format_f64(*r), format_f64(*c)));
        }
        out
    }

    pub fn weights_csv(&self, names: &[String]) -> String {
        let mut out = String::from("date");
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (d, w) in &self.weights_history {
            out.push_str(d);
            for v in w {
                out.push(',');
                out.push_str(&format_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Writes `summary.csv`, `series.csv` and `weights.csv` into `dir`.
    pub fn save(&self, dir: &Path, names: &[String]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("summary.csv"), self.summary_csv().as_bytes())?;
        write_atomic(&dir.join("series.csv"), self.series_csv().as_bytes())?;
        write_atomic(&dir.join("weights.csv"), self.weights_csv(names).as_bytes())
    }
}

fn weights_for_window(
    returns: &ReturnsPanel,
    factors: &FactorPanel,
    start: usize,
    end: usize,
    config: &BacktestConfig,
) -> Result<Vec<f64>> {
    let (sigma, precision) = match config.estimator {
        Estimator::Cluster => {
            let r = returns.slice_rows(start, end)?;
            let f = factors.slice_rows(start, end)?;
            let est = estimate(&r, &f, config.delta, config.c_q)?.estimate;
            (est.sigma, Some(est.precision))
        }
        Estimator::Sample => {
            let window = returns.values().rows(start, end - start).into_owned();
            (sample_cov(&window)?, None)
        }
    };
    match config.scheme {
        Scheme::Unconstrained => {
            let precision = match precision {
                Some(p) => p,
                None => sigma.spd_inverse("sample covariance")?,
            };
            min_var_unconstrained(&precision)
        }
        Scheme::LongOnly => min_var_long_only(&sigma, DEFAULT_TOL, DEFAULT_MAX_ITER),
    }
}

/// Rolling-window backtest over the rows `test_range` of time-aligned panels.
///
/// On each rebalance day `s` the estimator is fitted on rows
/// `s − train_window .. s`, and the resulting weights are held for
/// `rebalance_every` days (or to the end of the range). Rebalance windows are
/// solved in parallel; the report does not depend on the thread count.
pub fn backtest(
    returns: &ReturnsPanel,
    factors: &FactorPanel,
    test_range: Range<usize>,
    config: &BacktestConfig,
) -> Result<BacktestReport> {
    config.validate()?;
    if returns.times() != factors.times() {
        return Err(Error::InvalidPanel(
            "returns and factors must share the same dates; align them first".into(),
        ));
    }
    let t = returns.len();
    if test_range.start >= test_range.end || test_range.end > t {
        return Err(Error::InvalidParameter(format!(
            "test range {}..{} is empty or exceeds the {t} available rows",
            test_range.start, test_range.end
        )));
    }
    if test_range.start < config.train_window {
        return Err(Error::InsufficientData {
            required: config.train_window,
            actual: test_range.start,
        });
    }

    let rebalance_days: Vec<usize> = test_range.clone().step_by(config.rebalance_every).collect();
    let weights: Vec<Result<Vec<f64>>> = rebalance_days
        .par_iter()
        .map(|&s| {
            weights_for_window(returns, factors, s - config.train_window, s, config).map_err(|e| {
                Error::Window {
                    end_date: returns.times()[s - 1].clone(),
                    source: Box::new(e),
                }
            })
        })
        .collect();
    let weights = weights.into_iter().collect::<Result<Vec<_>>>()?;

    let y = returns.values();
    let mut daily = Vec::with_capacity(test_range.len());
    for (k, &s) in rebalance_days.iter().enumerate() {
        let w = DVector::from_column_slice(&weights[k]);
        let stop = (s + config.rebalance_every).min(test_range.end);
        for row in s..stop {
            daily.push(y.row(row).transpose().dot(&w));
        }
    }
    let performance = performance(&daily, config.annualization, config.percent_inputs)?;
    let cumulative = daily
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r;
            Some(*acc)
        })
        .collect();
    Ok(BacktestReport {
        estimator: config.estimator,
        scheme: config.scheme,
        dates: returns.times()[test_range].to_vec(),
        daily_returns: daily,
        weights_history: rebalance_days
            .iter()
            .map(|&s| returns.times()[s].clone())
            .zip(weights)
            .collect(),
        performance,
        cumulative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_day_arithmetic() {
        let p = performance(&[0.01, -0.01, 0.03], 252.0, false).unwrap();
        assert!((p.av - 252.0).abs() < 1e-9);
        let sd = 252f64.sqrt() * 0.02 * 100.0;
        assert!((p.sd - sd).abs() < 1e-9 * sd);
        assert!((p.ir.unwrap() - 252.0 / sd).abs() < 1e-9);
        let q = performance(&[1.0, -1.0, 3.0], 252.0, true).unwrap();
        assert!((q.av - 252.0).abs() < 1e-9 && (q.sd - sd).abs() < 1e-9 * sd);
    }

    #[test]
    fn constant_returns_have_no_ir() {
        let p = performance(&[0.002; 10], 252.0, false).unwrap();
        assert!(p.ir.is_none());
        assert!((p.av - 252.0 * 0.002 * 100.0).abs() < 1e-9);
    }

    #[test]
    fn parse_choices() {
        assert_eq!("cluster".parse::<Estimator>().unwrap(), Estimator::Cluster);
        assert_eq!("long_only".parse::<Scheme>().unwrap(), Scheme::LongOnly);
        assert!("dense".parse::<Estimator>().is_err());
    }
}
