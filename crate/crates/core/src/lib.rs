//! Finite-sample Bell/CHSH experiments.
//!
//! * [`table`] and [`chsh`]: the counterfactual spreadsheet, random
//!   observation and the observed CHSH statistic with its standard error.
//! * [`conjecture`]: probability that the observed statistic exceeds 2.
//! * [`bounds`]: Hoeffding-type tail bounds and loophole-adjusted limits.
//! * [`quantum`], [`lhv`]: singlet predictions and local hidden variable models.
//! * [`events`]: pairing of timed detection events and loophole verdicts.
//! * [`polytope`]: the local, quantum and no-signalling sets for two parties.
//! * [`qrc`]: referee for challenge sessions against external programs.

pub mod bounds;
pub mod chsh;
pub mod conjecture;
pub mod error;
pub mod events;
pub mod lhv;
pub mod polytope;
pub mod qrc;
pub mod quantum;
pub mod rng;
pub mod table;

pub use bounds::{BoundReport, EfficiencyBound, Loophole};
pub use chsh::{observe, observed_correlations, ChshSummary, ObservedRun};
pub use error::{Error, Result};
pub use events::{EventStream, PairingResult, TimedEvent};
pub use lhv::{CheaterConfig, DeterministicStrategy, LhvModel, TernaryOutcome};
pub use polytope::{Behavior, Classification};
pub use quantum::AngleSet;
pub use rng::{BellRng, RngSeed};
pub use table::{CounterfactualRow, CounterfactualTable, SettingPair, SettingsStream, Sign};
