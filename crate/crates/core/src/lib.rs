//! Table-cleaning MDP with a bit-packed state encoding, tabular SARSA, and
//! contextual-affordance masking of epsilon-greedy exploration.
//!
//! - [`env`]: grid, objects, arm, transitions and rewards.
//! - [`codec`]: single-integer state encoding and encoding-size counts.
//! - [`affordance`]: exact and noisy affordance predictors.
//! - [`learner`]: Q-table, SARSA backup, action selection, episodes.
//! - [`harness`]: multi-run experiments, learning curves, exact planning oracle.

pub mod affordance;
pub mod codec;
pub mod env;
pub mod harness;
pub mod learner;

pub use affordance::{build_oracle, AffordanceOracle, AffordancePredictor, GroundTruth};
pub use codec::{decode, encode, EncodedState};
pub use env::{
    Action, CellState, EnvState, GridDims, GridPos, HeldObject, Placement, StepOutcome, StepResult,
};
pub use learner::{EpisodeOutcome, LearnerConfig, Mode, QTable};
