mod common;

use std::collections::HashMap;
use std::fs;

use common::dims;
use table_affordance::codec::{encode, EncodedState};
use table_affordance::env::{self, available_actions, GridDims, StepResult};
use table_affordance::harness::{
    optimal_return, run_experiment, ExperimentConfig, EPISODES_CSV_HEADER,
};
use table_affordance::learner::{greedy_policy_return, LearnerConfig, Mode, QTable};

fn small_config(out: Option<std::path::PathBuf>) -> ExperimentConfig {
    ExperimentConfig {
        runs: 3,
        learner: LearnerConfig {
            episodes: 40,
            max_steps_per_episode: 30,
            seed: 17,
            ..LearnerConfig::default()
        },
        smoothing_window: 5,
        output_dir: out,
        ..ExperimentConfig::new(dims(3, 1))
    }
}

#[test]
fn csv_has_one_row_per_episode_and_reproduces() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&small_config(Some(a.path().to_path_buf()))).unwrap();
    run_experiment(&small_config(Some(b.path().to_path_buf()))).unwrap();
    for name in ["episodes.csv", "curve.csv", "curve.svg"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
    let text = fs::read_to_string(a.path().join("episodes.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(EPISODES_CSV_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3 * 40 * 2);
    let first: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(&first[..3], ["0", "0", "standard"]);
    let last: Vec<&str> = rows.last().unwrap().split(',').collect();
    assert_eq!(&last[..3], ["2", "39", "affordance"]);
}

#[test]
fn curve_means_lie_within_run_extremes() {
    let report = run_experiment(&small_config(None)).unwrap();
    assert!(report.files.is_empty());
    for curve in &report.curves {
        let mut by_episode: HashMap<usize, Vec<f64>> = HashMap::new();
        for r in report.records.iter().filter(|r| r.mode == curve.mode) {
            by_episode
                .entry(r.episode_index)
                .or_default()
                .push(r.total_reward);
        }
        for (i, &m) in curve.mean.iter().enumerate() {
            let rewards = &by_episode[&i];
            let lo = rewards.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo - 1e-12 <= m && m <= hi + 1e-12);
            let avg = rewards.iter().sum::<f64>() / rewards.len() as f64;
            assert!((avg - m).abs() < 1e-12);
        }
        for (i, &s) in curve.smoothed.iter().enumerate() {
            let lo = i.saturating_sub(4);
            let window = &curve.mean[lo..=i];
            let expected = window.iter().sum::<f64>() / window.len() as f64;
            assert!((s - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn modes_differ_only_in_selection() {
    let report = run_experiment(&small_config(None)).unwrap();
    let starts = |mode| {
        report
            .records
            .iter()
            .filter(|r| r.mode == mode && r.episode_index == 0)
            .map(|r| r.start_state)
            .collect::<Vec<_>>()
    };
    assert_eq!(starts(Mode::Standard), starts(Mode::Affordance));
}

/// Undiscounted value iteration over the reachable set, from a pessimistic
/// start so that every value converges to its best path.
fn value_iteration(d: GridDims) -> HashMap<EncodedState, f64> {
    let states = env::reachable_states(d);
    let mut v: HashMap<EncodedState, f64> = states.iter().map(|s| (encode(s), -1e9)).collect();
    loop {
        let mut delta: f64 = 0.0;
        for s in &states {
            let best = available_actions(d)
                .iter()
                .map(|&a| {
                    let out = env::step(s, a).unwrap();
                    match out.result {
                        StepResult::Continue(next) => out.reward + v[&encode(&next)],
                        _ => out.reward,
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let slot = v.get_mut(&encode(s)).unwrap();
            delta = delta.max((best - *slot).abs());
            *slot = best;
        }
        if delta < 1e-12 {
            return v;
        }
    }
}

#[test]
fn search_optimum_matches_value_iteration() {
    for (w, h) in [(3, 1), (4, 1)] {
        let d = dims(w, h);
        let v = value_iteration(d);
        for s in env::all_initial_states(d) {
            let opt = optimal_return(&s).unwrap();
            assert!(
                (opt - v[&encode(&s)]).abs() < 1e-9,
                "{s}: {opt} vs {}",
                v[&encode(&s)]
            );
        }
    }
}

#[test]
fn pinned_start_optimum() {
    // sixteen steps by hand: fetch the sponge, clean two cells, park it,
    // move the cup off the last cell, fetch the sponge again and clean
    let d = dims(3, 1);
    let start = env::initial_state(
        d,
        env::Placement::Fixed {
            arm: env::GridPos::new(0, 0),
            cup: env::GridPos::new(2, 0),
            sponge: env::GridPos::new(1, 0),
        },
    )
    .unwrap();
    assert!((optimal_return(&start).unwrap() - 0.85).abs() < 1e-9);
}

#[test]
fn greedy_on_optimal_table_is_optimal() {
    let d = dims(3, 1);
    let v = value_iteration(d);
    let mut q = QTable::new();
    for s in env::reachable_states(d) {
        for &a in available_actions(d) {
            let out = env::step(&s, a).unwrap();
            let value = match out.result {
                StepResult::Continue(next) => out.reward + v[&encode(&next)],
                _ => out.reward,
            };
            q.set(encode(&s), a, value);
        }
    }
    for s in env::all_initial_states(d) {
        let g = greedy_policy_return(&q, &s, 100);
        assert!((g - optimal_return(&s).unwrap()).abs() < 1e-9, "{s}");
    }
}
