//! Regularized adjusted plus-minus (RAPM) player ratings and prior-informed
//! lineup ratings (L-RAPM) computed from possession-level basketball data.
//!
//! The pipeline is:
//!
//! 1. [`ingest`] reads a possession CSV into a week-indexed [`PossessionSet`].
//! 2. [`rapm`] fits per-player offensive/defensive ratings on a rating season.
//! 3. [`lineup`] turns those ratings into per-lineup priors and fits a lineup
//!    regression whose coefficients shrink toward the priors instead of zero.
//! 4. [`baseline`] keeps the raw per-100 ratings used as the comparison model.
//! 5. [`eval`] runs the expanding-window backtest and reports RMSE and the
//!    relative improvement over the baseline.
//!
//! [`synth`] generates leagues with known player effects so that every
//! statistical claim can be checked against ground truth, and [`solver`] is
//! the sparse ridge solver with non-zero shrinkage targets underneath both
//! regressions.

pub mod baseline;
pub mod domain;
pub mod error;
pub mod eval;
pub mod fmt;
pub mod ingest;
pub mod lineup;
pub mod rapm;
pub mod solver;
pub mod synth;

pub use domain::{LineupKey, PlayerId, PlayerRatings, Possession, Side};
pub use error::{Error, Result};
pub use ingest::PossessionSet;
pub use lineup::{LineupPriorTable, LineupRatings};
pub use solver::{LambdaPair, SolveOptions};
