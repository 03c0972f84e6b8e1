mod common;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::dims;
use table_affordance::affordance::{build_oracle, GroundTruth};
use table_affordance::codec::encode;
use table_affordance::env::{self, available_actions, Action};
use table_affordance::learner::{select_action_affordance, select_action_standard, QTable};

fn counts(draws: impl Iterator<Item = Action>) -> [usize; 7] {
    let mut c = [0; 7];
    for a in draws {
        c[a.ordinal()] += 1;
    }
    c
}

#[test]
fn full_exploration_is_uniform() {
    let s = env::all_initial_states(dims(3, 1))[0];
    let key = encode(&s);
    let actions = available_actions(s.dims());
    let mut q = QTable::new();
    q.set(key, Action::GoRight, 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let c = counts((0..n).map(|_| select_action_standard(&q, key, actions, 1.0, &mut rng)));
    let expected = n as f64 / actions.len() as f64;
    let chi2: f64 = c[..actions.len()]
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum();
    // 4 degrees of freedom, 0.1% upper tail
    assert!(chi2 < 18.467, "chi2 = {chi2}, counts {c:?}");
}

#[test]
fn exploration_rate_accounting() {
    let s = env::all_initial_states(dims(3, 1))[0];
    let key = encode(&s);
    let actions = available_actions(s.dims());
    let mut q = QTable::new();
    q.set(key, Action::GoRight, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let off = (0..n)
        .filter(|_| select_action_standard(&q, key, actions, 0.1, &mut rng) != Action::GoRight)
        .count();
    let k = actions.len() as f64;
    let freq = off as f64 / n as f64;
    assert!((freq - 0.1 * (k - 1.0) / k).abs() <= 0.01, "{freq}");
}

#[test]
fn masked_exploration_is_uniform_over_the_mask() {
    let d = dims(3, 1);
    let oracle = build_oracle(d, 1.0, 0).unwrap();
    let s = env::reachable_states(d)
        .into_iter()
        .find(|s| env::afforded_actions(s).len() == 3)
        .expect("a state affording three actions");
    let mask = env::afforded_actions(&s);
    let key = encode(&s);
    let q = QTable::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000;
    let c = counts((0..n).map(|_| {
        select_action_affordance(&q, &s, key, available_actions(d), 1.0, &mut rng, &oracle)
    }));
    for (ordinal, &count) in c.iter().enumerate() {
        let a = Action::from_ordinal(ordinal).unwrap();
        if mask.contains(&a) {
            assert!(
                (count as f64 / n as f64 - 1.0 / 3.0).abs() <= 0.03,
                "{a}: {count}"
            );
        } else {
            assert_eq!(count, 0, "{a} outside the mask");
        }
    }
}

#[test]
fn zero_epsilon_ignores_the_mask() {
    let d = dims(4, 1);
    let states = env::reachable_states(d);
    let mut q = QTable::new();
    let mut fill = ChaCha8Rng::seed_from_u64(4);
    for s in states.iter().step_by(3) {
        for &a in available_actions(d) {
            // coarse values so that ties occur
            q.set(
                encode(s),
                a,
                f64::from(rand::Rng::gen_range(&mut fill, 0..3)),
            );
        }
    }
    let mut r1 = ChaCha8Rng::seed_from_u64(5);
    let mut r2 = ChaCha8Rng::seed_from_u64(5);
    for s in states.iter().take(500) {
        let key = encode(s);
        let a = select_action_standard(&q, key, available_actions(d), 0.0, &mut r1);
        let b =
            select_action_affordance(&q, s, key, available_actions(d), 0.0, &mut r2, &GroundTruth);
        assert_eq!(a, b);
    }
}
