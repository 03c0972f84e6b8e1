#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use table_affordance::env::{EnvState, GridDims, HeldObject};

pub const TABLE_DIMS: [(usize, usize); 7] =
    [(3, 1), (4, 1), (5, 1), (6, 1), (7, 1), (2, 2), (3, 2)];

pub fn dims(w: usize, h: usize) -> GridDims {
    GridDims::new(w, h).unwrap()
}

/// Uniform over the three holding cases, then uniform positions consistent
/// with the case and a uniform dirty mask.
pub fn random_valid_state<R: Rng>(d: GridDims, rng: &mut R) -> EnvState {
    let n = d.cell_count();
    let mask = rng.gen::<u64>() & ((1u64 << n) - 1);
    let arm = rng.gen_range(0..n);
    let (cup, sponge, held) = match rng.gen_range(0..3) {
        0 => {
            let cup = rng.gen_range(0..n);
            let mut sponge = rng.gen_range(0..n - 1);
            if sponge >= cup {
                sponge += 1;
            }
            (cup, sponge, HeldObject::None)
        }
        1 => (arm, rng.gen_range(0..n), HeldObject::Cup),
        _ => (rng.gen_range(0..n), arm, HeldObject::Sponge),
    };
    EnvState::from_mask(
        d,
        mask,
        d.pos_at(arm),
        d.pos_at(cup),
        d.pos_at(sponge),
        held,
    )
    .unwrap()
}

pub fn seeded_state(table: usize, seed: u64) -> EnvState {
    let (w, h) = TABLE_DIMS[table % TABLE_DIMS.len()];
    random_valid_state(dims(w, h), &mut ChaCha8Rng::seed_from_u64(seed))
}
