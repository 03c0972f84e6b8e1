//! Bit-packed integer encoding of [`EnvState`].
//!
//! For a table of `n` cells with `p = ceil(log2(n))` position bits, from the
//! least significant bit upward:
//!
//! ```text
//! [0, n)            cell dirtiness, cell i at bit i (dirty = 1)
//! [n, n+p)          arm linear index
//! [n+p, n+2p)       sponge linear index
//! [n+2p, n+3p)      cup linear index
//! [n+3p, n+3p+2)    held object (0 none, 1 cup, 2 sponge)
//! ```
//!
//! The encoding depends on the table size, so a value is only meaningful
//! together with its [`GridDims`].

use std::fmt;

use thiserror::Error;

use crate::env::{available_actions, EnvState, GridDims, HeldObject};

/// A state packed into a single integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EncodedState(pub u64);

impl fmt::Display for EncodedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("held-object code {0} is not defined")]
    HeldCode(u64),
    #[error("{field} position {index} is outside a table of {cells} cells")]
    Position {
        field: &'static str,
        index: u64,
        cells: usize,
    },
    #[error("bits above the {used}-bit layout are set in {value}")]
    StrayBits { value: u64, used: u32 },
    #[error("decoded fields do not form a valid state: {0}")]
    Invalid(#[from] crate::env::EnvError),
}

/// Position bits for a table of `cells` cells: `ceil(log2(cells))`.
pub fn position_bits(cells: usize) -> u32 {
    debug_assert!(cells >= 1);
    usize::BITS - (cells - 1).leading_zeros()
}

/// Total bits used by the layout for a table of `cells` cells.
pub fn layout_bits(cells: usize) -> u32 {
    cells as u32 + 3 * position_bits(cells) + 2
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    cells: u32,
    pos_bits: u32,
}

impl Layout {
    fn new(dims: GridDims) -> Self {
        let n = dims.cell_count();
        Layout {
            cells: n as u32,
            pos_bits: position_bits(n),
        }
    }

    fn arm_shift(self) -> u32 {
        self.cells
    }

    fn sponge_shift(self) -> u32 {
        self.cells + self.pos_bits
    }

    fn cup_shift(self) -> u32 {
        self.cells + 2 * self.pos_bits
    }

    fn held_shift(self) -> u32 {
        self.cells + 3 * self.pos_bits
    }

    fn used_bits(self) -> u32 {
        self.held_shift() + 2
    }
}

fn field(value: u64, shift: u32, width: u32) -> u64 {
    (value >> shift) & ((1u64 << width) - 1)
}

pub fn encode(s: &EnvState) -> EncodedState {
    let dims = s.dims();
    let layout = Layout::new(dims);
    let value = s.dirty_mask()
        | (dims.index_of(s.arm()) as u64) << layout.arm_shift()
        | (dims.index_of(s.sponge()) as u64) << layout.sponge_shift()
        | (dims.index_of(s.cup()) as u64) << layout.cup_shift()
        | s.held().code() << layout.held_shift();
    EncodedState(value)
}

pub fn decode(e: EncodedState, dims: GridDims) -> Result<EnvState, CodecError> {
    let layout = Layout::new(dims);
    let value = e.0;
    let used = layout.used_bits();
    if used < 64 && value >> used != 0 {
        return Err(CodecError::StrayBits { value, used });
    }
    let cells = dims.cell_count();
    let position = |name: &'static str, shift: u32| {
        let index = field(value, shift, layout.pos_bits);
        if index as usize >= cells {
            Err(CodecError::Position {
                field: name,
                index,
                cells,
            })
        } else {
            Ok(dims.pos_at(index as usize))
        }
    };
    let arm = position("arm", layout.arm_shift())?;
    let sponge = position("sponge", layout.sponge_shift())?;
    let cup = position("cup", layout.cup_shift())?;
    let code = field(value, layout.held_shift(), 2);
    let held = HeldObject::from_code(code).ok_or(CodecError::HeldCode(code))?;
    let dirty = field(value, 0, layout.cells);
    Ok(EnvState::from_mask(dims, dirty, arm, cup, sponge, held)?)
}

/// Number of distinct bit patterns with a defined held-object code:
/// `3 * 2^(n + 3p)`.
pub fn state_space_size(dims: GridDims) -> u128 {
    let n = dims.cell_count();
    3u128 << (n as u32 + 3 * position_bits(n))
}

pub fn state_action_pair_count(dims: GridDims) -> u128 {
    state_space_size(dims) * available_actions(dims).len() as u128
}
