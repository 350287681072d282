//! Money-line betting backtests: odds handling, ledgers, team features,
//! predictors and reports.

pub mod error;
pub mod features;
pub mod ingest;
pub mod ledger;
pub mod money;
pub mod odds;
pub mod pipeline;
pub mod predictors;
pub mod report;

pub use error::RowError;
pub use ledger::{Accuracy, Backtest, BaselineReport, LedgerEntry, MatchId, MatchRecord, WinningsCurve};
pub use money::Money;
pub use odds::{BetCategory, BetOutcome, MoneyLine, RawQuote, TeamId};
