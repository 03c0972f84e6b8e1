//! Contextual-affordance predictors.
//!
//! [`GroundTruth`] answers from the environment dynamics. [`AffordanceOracle`]
//! is a fixed table of labels over every reachable (state, action) pair, each
//! label correct with a configured probability and flipped otherwise. Labels
//! are drawn once at construction; queries are lookups.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{encode, EncodedState};
use crate::env::{self, available_actions, Action, EnvState, GridDims};

/// Largest table whose reachable state set is enumerated for oracle coverage.
pub const MAX_ORACLE_CELLS: usize = 10;

#[derive(Debug, Error)]
pub enum AffordanceError {
    #[error("accuracy {0} is outside [0, 1]")]
    Accuracy(f64),
    #[error("table {0} has more than {MAX_ORACLE_CELLS} cells, too large to enumerate")]
    TooLarge(GridDims),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Predicts which actions are safe to take in a state.
pub trait AffordancePredictor {
    fn is_afforded(&self, s: &EnvState, a: Action) -> bool;

    /// The subset of `actions` predicted safe, in the given order.
    fn safe_actions(&self, s: &EnvState, actions: &[Action]) -> Vec<Action> {
        actions
            .iter()
            .copied()
            .filter(|&a| self.is_afforded(s, a))
            .collect()
    }
}

/// Exact affordances from the environment.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruth;

impl AffordancePredictor for GroundTruth {
    fn is_afforded(&self, s: &EnvState, a: Action) -> bool {
        matches!(env::step(s, a), Ok(o) if o.result != env::StepResult::Failed)
    }
}

#[derive(Debug, Clone)]
pub struct AffordanceOracle {
    dims: GridDims,
    accuracy: f64,
    seed: u64,
    labels: HashMap<(EncodedState, Action), bool>,
}

/// Labels every reachable (state, available action) pair. Each label agrees
/// with ground truth with probability `accuracy`, independently per pair.
pub fn build_oracle(
    dims: GridDims,
    accuracy: f64,
    seed: u64,
) -> Result<AffordanceOracle, AffordanceError> {
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(AffordanceError::Accuracy(accuracy));
    }
    if dims.cell_count() > MAX_ORACLE_CELLS {
        return Err(AffordanceError::TooLarge(dims));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions = available_actions(dims);
    let states = env::reachable_states(dims);
    let mut labels = HashMap::with_capacity(states.len() * actions.len());
    for s in &states {
        let key = encode(s);
        let afforded = env::afforded_actions(s);
        for &a in actions {
            let truth = afforded.contains(&a);
            let correct = rng.gen::<f64>() < accuracy;
            labels.insert((key, a), truth == correct);
        }
    }
    Ok(AffordanceOracle {
        dims,
        accuracy,
        seed,
        labels,
    })
}

impl AffordanceOracle {
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Stored prediction for a pair, if the pair is covered.
    pub fn label(&self, key: EncodedState, a: Action) -> Option<bool> {
        self.labels.get(&(key, a)).copied()
    }

    /// Actions predicted safe in `s`; possibly empty.
    pub fn safe_action_set(&self, s: &EnvState) -> Vec<Action> {
        self.safe_actions(s, available_actions(self.dims))
    }

    /// Fraction of stored labels that agree with ground truth.
    pub fn measure_accuracy(&self) -> f64 {
        if self.labels.is_empty() {
            return 1.0;
        }
        let agree = self
            .labels
            .iter()
            .filter(|((key, a), &label)| {
                let s = crate::codec::decode(*key, self.dims).expect("oracle keys decode");
                GroundTruth.is_afforded(&s, *a) == label
            })
            .count();
        agree as f64 / self.labels.len() as f64
    }

    /// Writes the label table: a metadata comment, a header, then
    /// `state,action,label` records sorted by state and action ordinal.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# width={} height={} accuracy={} seed={}",
            self.dims.width(),
            self.dims.height(),
            self.accuracy,
            self.seed
        )?;
        writeln!(out, "state,action,label")?;
        let mut rows: Vec<_> = self.labels.iter().collect();
        rows.sort_unstable_by_key(|((key, a), _)| (*key, *a));
        for ((key, a), label) in rows {
            writeln!(out, "{},{},{}", key.0, a.ordinal(), u8::from(*label))?;
        }
        Ok(())
    }

    /// Reads a table written by [`AffordanceOracle::dump`].
    pub fn load<R: BufRead>(input: R) -> Result<Self, AffordanceError> {
        let mut meta: Option<(GridDims, f64, u64)> = None;
        let mut labels = HashMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let err = |reason: &str| AffordanceError::Parse {
                line: lineno,
                reason: reason.to_string(),
            };
            let line = line.trim();
            if line.is_empty() || line == "state,action,label" {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                meta = Some(parse_meta(rest).ok_or_else(|| err("bad metadata line"))?);
                continue;
            }
            let (dims, _, _) = meta.ok_or_else(|| err("record before metadata"))?;
            let mut parts = line.split(',');
            let (Some(state), Some(action), Some(label), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(err("expected three fields"));
            };
            let key = EncodedState(state.parse().map_err(|_| err("bad state"))?);
            crate::codec::decode(key, dims).map_err(|e| err(&e.to_string()))?;
            let action = action
                .parse()
                .ok()
                .and_then(Action::from_ordinal)
                .filter(|a| available_actions(dims).contains(a))
                .ok_or_else(|| err("bad action ordinal"))?;
            let label = match label {
                "0" => false,
                "1" => true,
                _ => return Err(err("label must be 0 or 1")),
            };
            labels.insert((key, action), label);
        }
        let (dims, accuracy, seed) = meta.ok_or(AffordanceError::Parse {
            line: 0,
            reason: "missing metadata".into(),
        })?;
        Ok(AffordanceOracle {
            dims,
            accuracy,
            seed,
            labels,
        })
    }
}

fn parse_meta(rest: &str) -> Option<(GridDims, f64, u64)> {
    let mut width = None;
    let mut height = None;
    let mut accuracy = None;
    let mut seed = None;
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "width" => width = v.parse().ok(),
            "height" => height = v.parse().ok(),
            "accuracy" => accuracy = v.parse().ok(),
            "seed" => seed = v.parse().ok(),
            _ => return None,
        }
    }
    let dims = GridDims::new(width?, height?).ok()?;
    Some((dims, accuracy?, seed?))
}

impl AffordancePredictor for AffordanceOracle {
    /// Pairs outside the labelled set are predicted unsafe.
    fn is_afforded(&self, s: &EnvState, a: Action) -> bool {
        self.label(encode(s), a).unwrap_or(false)
    }
}
