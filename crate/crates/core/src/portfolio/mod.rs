//! Minimum-variance portfolios and rolling-window backtests.

pub mod backtest;
pub mod optimize;

pub use backtest::{backtest, performance, BacktestConfig, BacktestReport, Estimator, Performance, Scheme};
pub use optimize::{min_var_long_only, min_var_unconstrained};
