//! Tabular SARSA with plain and affordance-masked epsilon-greedy exploration.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::affordance::AffordancePredictor;
use crate::codec::{encode, EncodedState};
use crate::env::{self, available_actions, Action, EnvState, StepResult};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("non-finite value in update: {0}")]
    NonFinite(&'static str),
    #[error("invalid learner config: {0}")]
    Config(String),
    #[error("affordance mode needs a predictor, standard mode must not have one")]
    ModeMismatch,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Action-value estimates keyed by encoded state and action. Absent keys read
/// as 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    entries: HashMap<(EncodedState, Action), f64>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, s: EncodedState, a: Action) -> f64 {
        self.entries.get(&(s, a)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, s: EncodedState, a: Action, value: f64) {
        self.entries.insert((s, a), value);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EncodedState, Action, f64)> + '_ {
        self.entries.iter().map(|(&(s, a), &v)| (s, a, v))
    }

    /// `state,action,value` records sorted by state then action ordinal.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "state,action,value")?;
        let mut rows: Vec<_> = self.iter().collect();
        rows.sort_unstable_by_key(|&(s, a, _)| (s, a));
        for (s, a, v) in rows {
            writeln!(out, "{},{},{}", s.0, a.ordinal(), v)?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self, LearnerError> {
        let mut q = QTable::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line == "state,action,value" {
                continue;
            }
            let err = |reason: &str| LearnerError::Parse {
                line: i + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            let [state, action, value] = fields[..] else {
                return Err(err("expected three fields"));
            };
            let state = EncodedState(state.parse().map_err(|_| err("bad state"))?);
            let action = action
                .parse()
                .ok()
                .and_then(Action::from_ordinal)
                .ok_or_else(|| err("bad action ordinal"))?;
            let value: f64 = value.parse().map_err(|_| err("bad value"))?;
            if !value.is_finite() {
                return Err(err("value is not finite"));
            }
            q.set(state, action, value);
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Standard,
    Affordance,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::Affordance => "affordance",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Mode::Standard),
            "affordance" => Ok(Mode::Affordance),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub episodes: usize,
    pub max_steps_per_episode: usize,
    pub mode: Mode,
    /// Label accuracy of the synthetic oracle used in affordance mode.
    pub oracle_accuracy: f64,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            alpha: 0.3,
            gamma: 0.9,
            epsilon: 0.1,
            episodes: 1000,
            max_steps_per_episode: 100,
            mode: Mode::Standard,
            oracle_accuracy: 0.9,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |msg: String| Err(LearnerError::Config(msg));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} must be in (0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} must be in [0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} must be in [0, 1]", self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.oracle_accuracy) {
            return bad(format!(
                "oracle accuracy {} must be in [0, 1]",
                self.oracle_accuracy
            ));
        }
        if self.episodes == 0 || self.max_steps_per_episode == 0 {
            return bad("episodes and max steps must be positive".into());
        }
        Ok(())
    }
}

/// One SARSA backup. `next` is the following (state, action) pair, or `None`
/// when the transition ended the episode, in which case the bootstrap term is
/// zero. Returns the new estimate.
pub fn sarsa_update(
    q: &mut QTable,
    s: EncodedState,
    a: Action,
    reward: f64,
    next: Option<(EncodedState, Action)>,
    alpha: f64,
    gamma: f64,
) -> Result<f64, LearnerError> {
    for (name, v) in [("reward", reward), ("alpha", alpha), ("gamma", gamma)] {
        if !v.is_finite() {
            return Err(LearnerError::NonFinite(name));
        }
    }
    let current = q.get(s, a);
    let bootstrap = next.map_or(0.0, |(s2, a2)| q.get(s2, a2));
    let updated = current + alpha * (reward + gamma * bootstrap - current);
    if !updated.is_finite() {
        return Err(LearnerError::NonFinite("updated estimate"));
    }
    q.set(s, a, updated);
    Ok(updated)
}

/// Argmax of `Q(s, .)` over `actions`, ties broken uniformly at random.
pub fn greedy_action<R: Rng + ?Sized>(
    q: &QTable,
    s: EncodedState,
    actions: &[Action],
    rng: &mut R,
) -> Action {
    let best = actions
        .iter()
        .map(|&a| q.get(s, a))
        .fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<Action> = actions
        .iter()
        .copied()
        .filter(|&a| q.get(s, a) == best)
        .collect();
    *ties.choose(rng).expect("action set is non-empty")
}

/// Argmax of `Q(s, .)` over `actions`, ties resolved to the lowest ordinal.
pub fn greedy_action_first(q: &QTable, s: EncodedState, actions: &[Action]) -> Action {
    let mut best = actions[0];
    let mut best_value = q.get(s, best);
    for &a in &actions[1..] {
        let v = q.get(s, a);
        if v > best_value {
            best = a;
            best_value = v;
        }
    }
    best
}

/// Epsilon-greedy over the full action set.
pub fn select_action_standard<R: Rng + ?Sized>(
    q: &QTable,
    s: EncodedState,
    actions: &[Action],
    epsilon: f64,
    rng: &mut R,
) -> Action {
    if rng.gen::<f64>() < epsilon {
        *actions.choose(rng).expect("action set is non-empty")
    } else {
        greedy_action(q, s, actions, rng)
    }
}

/// Uniform draw from the predicted-safe subset of `actions`, or from all of
/// `actions` when nothing is predicted safe.
pub fn explore_afforded<R: Rng + ?Sized>(
    state: &EnvState,
    actions: &[Action],
    predictor: &dyn AffordancePredictor,
    rng: &mut R,
) -> Action {
    let safe = predictor.safe_actions(state, actions);
    let pool = if safe.is_empty() { actions } else { &safe[..] };
    *pool.choose(rng).expect("non-empty action set")
}

/// Epsilon-greedy where only the exploration branch is masked by the
/// predictor; the greedy branch ranks every action.
pub fn select_action_affordance<R: Rng + ?Sized>(
    q: &QTable,
    state: &EnvState,
    s: EncodedState,
    actions: &[Action],
    epsilon: f64,
    rng: &mut R,
    predictor: &dyn AffordancePredictor,
) -> Action {
    if rng.gen::<f64>() < epsilon {
        explore_afforded(state, actions, predictor, rng)
    } else {
        greedy_action(q, s, actions, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EpisodeOutcome {
    Final,
    Failed,
    Truncated,
}

impl EpisodeOutcome {
    pub fn label(self) -> &'static str {
        match self {
            EpisodeOutcome::Final => "final",
            EpisodeOutcome::Failed => "failed",
            EpisodeOutcome::Truncated => "truncated",
        }
    }
}

impl fmt::Display for EpisodeOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub total_reward: f64,
    pub steps: usize,
    pub outcome: EpisodeOutcome,
}

fn select<R: Rng + ?Sized>(
    q: &QTable,
    state: &EnvState,
    key: EncodedState,
    cfg: &LearnerConfig,
    predictor: Option<&dyn AffordancePredictor>,
    rng: &mut R,
) -> Action {
    let actions = available_actions(state.dims());
    match predictor {
        Some(p) => select_action_affordance(q, state, key, actions, cfg.epsilon, rng, p),
        None => select_action_standard(q, key, actions, cfg.epsilon, rng),
    }
}

/// Runs one on-policy SARSA episode from `start`, updating `q` in place.
pub fn run_episode<R: Rng + ?Sized>(
    start: EnvState,
    q: &mut QTable,
    cfg: &LearnerConfig,
    predictor: Option<&dyn AffordancePredictor>,
    rng: &mut R,
) -> Result<EpisodeSummary, LearnerError> {
    if predictor.is_some() != (cfg.mode == Mode::Affordance) {
        return Err(LearnerError::ModeMismatch);
    }
    let mut state = start;
    let mut key = encode(&state);
    let mut action = select(q, &state, key, cfg, predictor, rng);
    let mut total_reward = 0.0;
    let mut steps = 0;
    let outcome = loop {
        if steps == cfg.max_steps_per_episode {
            break EpisodeOutcome::Truncated;
        }
        let out = env::step(&state, action).expect("selected actions are available");
        steps += 1;
        total_reward += out.reward;
        match out.result {
            StepResult::Continue(next) => {
                let next_key = encode(&next);
                let next_action = select(q, &next, next_key, cfg, predictor, rng);
                sarsa_update(
                    q,
                    key,
                    action,
                    out.reward,
                    Some((next_key, next_action)),
                    cfg.alpha,
                    cfg.gamma,
                )?;
                state = next;
                key = next_key;
                action = next_action;
            }
            StepResult::Final | StepResult::Failed => {
                sarsa_update(q, key, action, out.reward, None, cfg.alpha, cfg.gamma)?;
                break if out.result == StepResult::Final {
                    EpisodeOutcome::Final
                } else {
                    EpisodeOutcome::Failed
                };
            }
        }
    };
    Ok(EpisodeSummary {
        total_reward,
        steps,
        outcome,
    })
}

/// Undiscounted return of the deterministic greedy policy from `start`,
/// stopping at a terminal state or after `horizon` steps.
pub fn greedy_policy_return(q: &QTable, start: &EnvState, horizon: usize) -> f64 {
    let actions = available_actions(start.dims());
    let mut state = *start;
    let mut total = 0.0;
    for _ in 0..horizon {
        let a = greedy_action_first(q, encode(&state), actions);
        let out = env::step(&state, a).expect("available action");
        total += out.reward;
        match out.result {
            StepResult::Continue(next) => state = next,
            StepResult::Final | StepResult::Failed => break,
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affordance::GroundTruth;
    use crate::env::{CellState, GridDims, GridPos, HeldObject};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const S: EncodedState = EncodedState(295);
    const S2: EncodedState = EncodedState(296);

    fn start_3x1() -> EnvState {
        env::initial_state(
            GridDims::new(3, 1).unwrap(),
            env::Placement::Fixed {
                arm: GridPos::new(0, 0),
                cup: GridPos::new(2, 0),
                sponge: GridPos::new(1, 0),
            },
        )
        .unwrap()
    }

    #[test]
    fn update_from_zero_table() {
        let mut q = QTable::new();
        let v = sarsa_update(
            &mut q,
            S,
            Action::GoLeft,
            -0.01,
            Some((S2, Action::Clean)),
            0.3,
            0.9,
        )
        .unwrap();
        assert!((v - -0.003).abs() < 1e-12);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn update_terminal_bootstraps_zero() {
        let mut q = QTable::new();
        q.set(S2, Action::Clean, 123.0);
        let v = sarsa_update(&mut q, S, Action::Clean, 1.0, None, 0.3, 0.9).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
    }

    #[test]
    fn update_with_bootstrap() {
        let mut q = QTable::new();
        q.set(S, Action::PickUp, 0.5);
        q.set(S2, Action::PutDown, 0.8);
        let v = sarsa_update(
            &mut q,
            S,
            Action::PickUp,
            -0.01,
            Some((S2, Action::PutDown)),
            0.3,
            0.9,
        )
        .unwrap();
        assert!((v - 0.563).abs() < 1e-12);
        assert_eq!(q.get(S2, Action::PutDown), 0.8);
    }

    #[test]
    fn update_rejects_non_finite() {
        let mut q = QTable::new();
        assert!(sarsa_update(&mut q, S, Action::PickUp, f64::NAN, None, 0.3, 0.9).is_err());
        assert!(sarsa_update(&mut q, S, Action::PickUp, 1.0, None, f64::INFINITY, 0.9).is_err());
        assert!(q.is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(LearnerConfig::default().validate().is_ok());
        for cfg in [
            LearnerConfig {
                alpha: 0.0,
                ..Default::default()
            },
            LearnerConfig {
                gamma: 1.1,
                ..Default::default()
            },
            LearnerConfig {
                epsilon: -0.1,
                ..Default::default()
            },
            LearnerConfig {
                episodes: 0,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn pure_greedy_picks_unique_max() {
        let mut q = QTable::new();
        q.set(S, Action::GoRight, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let actions = &Action::ALL[..5];
        for _ in 0..100 {
            assert_eq!(
                select_action_standard(&q, S, actions, 0.0, &mut rng),
                Action::GoRight
            );
        }
    }

    #[test]
    fn greedy_first_breaks_ties_by_ordinal() {
        let q = QTable::new();
        assert_eq!(greedy_action_first(&q, S, &Action::ALL), Action::PickUp);
    }

    #[test]
    fn greedy_ties_are_random() {
        let q = QTable::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            seen.insert(greedy_action(&q, S, &Action::ALL[..5], &mut rng));
        }
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn singleton_mask_forces_action() {
        // holding the cup at the left edge above the sponge: only go-right
        // is safe
        let d = GridDims::new(3, 1).unwrap();
        let s = EnvState::new(
            d,
            &[CellState::Dirty; 3],
            GridPos::new(0, 0),
            GridPos::new(0, 0),
            GridPos::new(0, 0),
            HeldObject::Cup,
        )
        .unwrap();
        assert_eq!(env::afforded_actions(&s), vec![Action::GoRight]);
        let q = QTable::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let key = encode(&s);
        for _ in 0..200 {
            let a = select_action_affordance(
                &q,
                &s,
                key,
                &Action::ALL[..5],
                1.0,
                &mut rng,
                &GroundTruth,
            );
            assert_eq!(a, Action::GoRight);
        }
    }

    struct NothingSafe;

    impl AffordancePredictor for NothingSafe {
        fn is_afforded(&self, _: &EnvState, _: Action) -> bool {
            false
        }
    }

    #[test]
    fn empty_mask_explores_all_actions() {
        let s = start_3x1();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let actions = &Action::ALL[..5];
        let mut seen = std::collections::HashSet::new();
        for _ in 0..500 {
            seen.insert(explore_afforded(&s, actions, &NothingSafe, &mut rng));
        }
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn truncated_episode_sums_penalties() {
        // epsilon 0 with an empty table from a start where pick-up fails
        // would end quickly, so bias the table toward a safe shuttle.
        let start = start_3x1();
        let mut q = QTable::new();
        let cfg = LearnerConfig {
            epsilon: 0.0,
            max_steps_per_episode: 7,
            alpha: 1e-9,
            ..Default::default()
        };
        // Shuttle between cells 0 and 1 forever.
        q.set(encode(&start), Action::GoRight, 10.0);
        let mut right = start;
        if let StepResult::Continue(n) = env::step(&start, Action::GoRight).unwrap().result {
            right = n;
        }
        q.set(encode(&right), Action::GoLeft, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = run_episode(start, &mut q, &cfg, None, &mut rng).unwrap();
        assert_eq!(ep.outcome, EpisodeOutcome::Truncated);
        assert_eq!(ep.steps, 7);
        assert!((ep.total_reward - -0.07).abs() < 1e-12);
    }

    #[test]
    fn failed_episode_reward() {
        let start = start_3x1();
        let mut q = QTable::new();
        q.set(encode(&start), Action::GoLeft, 1.0);
        let cfg = LearnerConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = run_episode(start, &mut q, &cfg, None, &mut rng).unwrap();
        assert_eq!(ep.outcome, EpisodeOutcome::Failed);
        assert_eq!(ep.steps, 1);
        assert_eq!(ep.total_reward, -1.0);
        assert!((q.get(encode(&start), Action::GoLeft) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let mut q = QTable::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = LearnerConfig {
            mode: Mode::Affordance,
            ..Default::default()
        };
        assert!(matches!(
            run_episode(start_3x1(), &mut q, &cfg, None, &mut rng),
            Err(LearnerError::ModeMismatch)
        ));
        let cfg = LearnerConfig::default();
        assert!(matches!(
            run_episode(start_3x1(), &mut q, &cfg, Some(&GroundTruth), &mut rng),
            Err(LearnerError::ModeMismatch)
        ));
    }

    #[test]
    fn greedy_rollout_of_empty_table_terminates() {
        // pick-up first by ordinal: fails at once on this start
        let r = greedy_policy_return(&QTable::new(), &start_3x1(), 50);
        assert_eq!(r, -1.0);
    }

    #[test]
    fn one_step_greedy_rollout() {
        let d = GridDims::new(3, 1).unwrap();
        let s = EnvState::new(
            d,
            &[CellState::Dirty, CellState::Clean, CellState::Clean],
            GridPos::new(0, 0),
            GridPos::new(2, 0),
            GridPos::new(0, 0),
            HeldObject::Sponge,
        )
        .unwrap();
        let mut q = QTable::new();
        q.set(encode(&s), Action::Clean, 0.5);
        assert_eq!(greedy_policy_return(&q, &s, 1), 1.0);
    }

    #[test]
    fn qtable_dump_load() {
        let mut q = QTable::new();
        q.set(S, Action::Clean, -0.003);
        q.set(S2, Action::PickUp, 0.25);
        let mut buf = Vec::new();
        q.dump(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "state,action,value\n295,2,-0.003\n296,0,0.25\n"
        );
        assert_eq!(QTable::load(&buf[..]).unwrap(), q);
        assert!(QTable::load("1,9,0.5\n".as_bytes()).is_err());
        assert!(QTable::load("1,1,NaN\n".as_bytes()).is_err());
    }
}
