//! Deterministic table-cleaning environment.
//!
//! A table is a row-major grid of cells, each either clean or dirty. A cup and
//! a sponge sit on the table and a robotic arm moves over it, optionally holding
//! one of the two objects. The arm must use the sponge to clean every cell
//! without cleaning under the cup, which would break it.
//!
//! Every action that violates its precondition ends the episode in a failed
//! state. An action is therefore afforded in a state exactly when stepping it
//! does not fail.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec;

/// Reward for the transition that leaves every cell clean.
pub const REWARD_FINAL: f64 = 1.0;
/// Reward for a transition into a failed state.
pub const REWARD_FAILED: f64 = -1.0;
/// Per-step cost of every non-terminal transition.
pub const STEP_PENALTY: f64 = -0.01;

/// Smallest table: two objects on distinct cells plus a third cell.
pub const MIN_CELLS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("table {width}x{height} has {cells} cells, need at least {MIN_CELLS}")]
    TooFewCells {
        width: usize,
        height: usize,
        cells: usize,
    },
    #[error("table {width}x{height} needs {bits} encoding bits, more than 64")]
    TooManyCells {
        width: usize,
        height: usize,
        bits: u32,
    },
    #[error("position ({x}, {y}) lies outside a {width}x{height} table")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("cup and sponge cannot share cell ({x}, {y})")]
    ObjectsOverlap { x: usize, y: usize },
    #[error("held {held} must be at the arm position")]
    HeldAway { held: HeldObject },
    #[error("expected {expected} cells, got {got}")]
    CellCount { expected: usize, got: usize },
    #[error("action {action} is not available on a {width}x{height} table")]
    UnavailableAction {
        action: Action,
        width: usize,
        height: usize,
    },
}

/// Table size in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridDims {
    width: usize,
    height: usize,
}

impl GridDims {
    /// Validates the table size: at least three cells, and a bit-packed state
    /// that fits in a `u64`.
    pub fn new(width: usize, height: usize) -> Result<Self, EnvError> {
        let cells = width.saturating_mul(height);
        if width == 0 || height == 0 || cells < MIN_CELLS {
            return Err(EnvError::TooFewCells {
                width,
                height,
                cells,
            });
        }
        let bits = codec::layout_bits(cells);
        if bits > 64 {
            return Err(EnvError::TooManyCells {
                width,
                height,
                bits,
            });
        }
        Ok(GridDims { width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, pos: GridPos) -> bool {
        pos.x < self.width && pos.y < self.height
    }

    /// Row-major linear index of `pos`.
    pub fn index_of(&self, pos: GridPos) -> usize {
        pos.y * self.width + pos.x
    }

    pub fn pos_at(&self, index: usize) -> GridPos {
        GridPos {
            x: index % self.width,
            y: index / self.width,
        }
    }

    fn check(&self, pos: GridPos) -> Result<(), EnvError> {
        if self.contains(pos) {
            Ok(())
        } else {
            Err(EnvError::OutOfBounds {
                x: pos.x,
                y: pos.y,
                width: self.width,
                height: self.height,
            })
        }
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// A cell coordinate; `x` is the column, `y` the row (row 0 at the top).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPos {
    pub x: usize,
    pub y: usize,
}

impl GridPos {
    pub const fn new(x: usize, y: usize) -> Self {
        GridPos { x, y }
    }
}

impl fmt::Display for GridPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Clean,
    Dirty,
}

/// Object in the gripper. The discriminants are the encoded held-object codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeldObject {
    None = 0,
    Cup = 1,
    Sponge = 2,
}

impl HeldObject {
    pub fn code(self) -> u64 {
        self as u64
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(HeldObject::None),
            1 => Some(HeldObject::Cup),
            2 => Some(HeldObject::Sponge),
            _ => None,
        }
    }
}

impl fmt::Display for HeldObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeldObject::None => "none",
            HeldObject::Cup => "cup",
            HeldObject::Sponge => "sponge",
        })
    }
}

/// The seven arm actions, in their stable ordinal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    PickUp = 0,
    PutDown = 1,
    Clean = 2,
    GoLeft = 3,
    GoRight = 4,
    GoUp = 5,
    GoDown = 6,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::PickUp,
        Action::PutDown,
        Action::Clean,
        Action::GoLeft,
        Action::GoRight,
        Action::GoUp,
        Action::GoDown,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Self> {
        Action::ALL.get(ordinal).copied()
    }

    fn is_vertical(self) -> bool {
        matches!(self, Action::GoUp | Action::GoDown)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::PickUp => "pick-up",
            Action::PutDown => "put-down",
            Action::Clean => "clean",
            Action::GoLeft => "go-left",
            Action::GoRight => "go-right",
            Action::GoUp => "go-up",
            Action::GoDown => "go-down",
        })
    }
}

/// Full simulator configuration.
///
/// Cell dirtiness is held as a bitmask in row-major order (bit `i` set means
/// cell `i` is dirty). A held object always shares the arm position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnvState {
    dims: GridDims,
    dirty: u64,
    arm: GridPos,
    cup: GridPos,
    sponge: GridPos,
    held: HeldObject,
}

impl EnvState {
    /// Builds a state from an explicit row-major cell list.
    pub fn new(
        dims: GridDims,
        cells: &[CellState],
        arm: GridPos,
        cup: GridPos,
        sponge: GridPos,
        held: HeldObject,
    ) -> Result<Self, EnvError> {
        if cells.len() != dims.cell_count() {
            return Err(EnvError::CellCount {
                expected: dims.cell_count(),
                got: cells.len(),
            });
        }
        let dirty = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == CellState::Dirty)
            .fold(0u64, |mask, (i, _)| mask | (1 << i));
        Self::from_mask(dims, dirty, arm, cup, sponge, held)
    }

    /// Builds a state from a dirtiness bitmask; bits beyond the cell count are
    /// ignored.
    pub fn from_mask(
        dims: GridDims,
        dirty: u64,
        arm: GridPos,
        cup: GridPos,
        sponge: GridPos,
        held: HeldObject,
    ) -> Result<Self, EnvError> {
        dims.check(arm)?;
        dims.check(cup)?;
        dims.check(sponge)?;
        match held {
            HeldObject::None if cup == sponge => {
                return Err(EnvError::ObjectsOverlap { x: cup.x, y: cup.y })
            }
            HeldObject::Cup if cup != arm => return Err(EnvError::HeldAway { held }),
            HeldObject::Sponge if sponge != arm => return Err(EnvError::HeldAway { held }),
            _ => {}
        }
        Ok(EnvState {
            dims,
            dirty: dirty & full_mask(dims.cell_count()),
            arm,
            cup,
            sponge,
            held,
        })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn arm(&self) -> GridPos {
        self.arm
    }

    pub fn cup(&self) -> GridPos {
        self.cup
    }

    pub fn sponge(&self) -> GridPos {
        self.sponge
    }

    pub fn held(&self) -> HeldObject {
        self.held
    }

    /// Dirtiness bitmask, bit `i` for row-major cell `i`.
    pub fn dirty_mask(&self) -> u64 {
        self.dirty
    }

    pub fn cell(&self, pos: GridPos) -> CellState {
        if self.dirty >> self.dims.index_of(pos) & 1 == 1 {
            CellState::Dirty
        } else {
            CellState::Clean
        }
    }

    pub fn cells(&self) -> Vec<CellState> {
        (0..self.dims.cell_count())
            .map(|i| self.cell(self.dims.pos_at(i)))
            .collect()
    }

    pub fn dirty_count(&self) -> u32 {
        self.dirty.count_ones()
    }
}

impl fmt::Display for EnvState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in 0..self.dims.height {
            if y > 0 {
                f.write_str("/")?;
            }
            for x in 0..self.dims.width {
                let c = match self.cell(GridPos::new(x, y)) {
                    CellState::Clean => '.',
                    CellState::Dirty => '#',
                };
                write!(f, "{c}")?;
            }
        }
        write!(
            f,
            " arm={} cup={} sponge={} held={}",
            self.arm, self.cup, self.sponge, self.held
        )
    }
}

fn full_mask(cells: usize) -> u64 {
    if cells >= 64 {
        u64::MAX
    } else {
        (1u64 << cells) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepResult {
    Continue(EnvState),
    Final,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub result: StepResult,
    pub reward: f64,
}

impl StepOutcome {
    fn continue_with(next: EnvState) -> Self {
        StepOutcome {
            result: StepResult::Continue(next),
            reward: STEP_PENALTY,
        }
    }

    fn failed() -> Self {
        StepOutcome {
            result: StepResult::Failed,
            reward: REWARD_FAILED,
        }
    }

    fn finished() -> Self {
        StepOutcome {
            result: StepResult::Final,
            reward: REWARD_FINAL,
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self.result, StepResult::Continue(_))
    }
}

/// Actions the arm may attempt on a table of the given size. Single-row tables
/// drop the vertical moves.
pub fn available_actions(dims: GridDims) -> &'static [Action] {
    if dims.height >= 2 {
        &Action::ALL
    } else {
        &Action::ALL[..5]
    }
}

/// How objects and the arm are placed at the start of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Fixed {
        arm: GridPos,
        cup: GridPos,
        sponge: GridPos,
    },
    Random(u64),
}

/// All-dirty starting state.
pub fn initial_state(dims: GridDims, placement: Placement) -> Result<EnvState, EnvError> {
    match placement {
        Placement::Fixed { arm, cup, sponge } => {
            EnvState::from_mask(dims, u64::MAX, arm, cup, sponge, HeldObject::None)
        }
        Placement::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(random_initial_state(dims, &mut rng))
        }
    }
}

/// All-dirty state with the arm uniform over cells and the cup and sponge
/// uniform over distinct cells.
pub fn random_initial_state<R: Rng + ?Sized>(dims: GridDims, rng: &mut R) -> EnvState {
    let n = dims.cell_count();
    let arm = rng.gen_range(0..n);
    let cup = rng.gen_range(0..n);
    let mut sponge = rng.gen_range(0..n - 1);
    if sponge >= cup {
        sponge += 1;
    }
    EnvState {
        dims,
        dirty: full_mask(n),
        arm: dims.pos_at(arm),
        cup: dims.pos_at(cup),
        sponge: dims.pos_at(sponge),
        held: HeldObject::None,
    }
}

/// Every all-dirty start state, ordered by (arm, cup, sponge) linear index.
pub fn all_initial_states(dims: GridDims) -> Vec<EnvState> {
    let n = dims.cell_count();
    let mut starts = Vec::with_capacity(n * n * (n - 1));
    for arm in 0..n {
        for cup in 0..n {
            for sponge in (0..n).filter(|&s| s != cup) {
                starts.push(EnvState {
                    dims,
                    dirty: full_mask(n),
                    arm: dims.pos_at(arm),
                    cup: dims.pos_at(cup),
                    sponge: dims.pos_at(sponge),
                    held: HeldObject::None,
                });
            }
        }
    }
    starts
}

pub fn is_final(s: &EnvState) -> bool {
    s.dirty == 0
}

/// Applies one action. Returns an error only when the action is not part of
/// the table's action set; in-model violations produce a `Failed` outcome.
pub fn step(s: &EnvState, a: Action) -> Result<StepOutcome, EnvError> {
    if a.is_vertical() && s.dims.height < 2 {
        return Err(EnvError::UnavailableAction {
            action: a,
            width: s.dims.width,
            height: s.dims.height,
        });
    }
    Ok(transition(s, a))
}

fn transition(s: &EnvState, a: Action) -> StepOutcome {
    let mut next = *s;
    match a {
        Action::PickUp => {
            if s.held != HeldObject::None {
                return StepOutcome::failed();
            }
            next.held = if s.cup == s.arm {
                HeldObject::Cup
            } else if s.sponge == s.arm {
                HeldObject::Sponge
            } else {
                return StepOutcome::failed();
            };
        }
        Action::PutDown => {
            let blocked = match s.held {
                HeldObject::None => true,
                HeldObject::Cup => s.sponge == s.arm,
                HeldObject::Sponge => s.cup == s.arm,
            };
            if blocked {
                return StepOutcome::failed();
            }
            next.held = HeldObject::None;
        }
        Action::Clean => {
            if s.held != HeldObject::Sponge || s.cup == s.arm {
                return StepOutcome::failed();
            }
            next.dirty &= !(1u64 << s.dims.index_of(s.arm));
            if is_final(&next) {
                return StepOutcome::finished();
            }
        }
        Action::GoLeft | Action::GoRight | Action::GoUp | Action::GoDown => {
            let GridPos { x, y } = s.arm;
            let moved = match a {
                Action::GoLeft => x.checked_sub(1).map(|x| GridPos::new(x, y)),
                Action::GoRight => Some(GridPos::new(x + 1, y)),
                Action::GoUp => y.checked_sub(1).map(|y| GridPos::new(x, y)),
                _ => Some(GridPos::new(x, y + 1)),
            };
            let Some(pos) = moved.filter(|p| s.dims.contains(*p)) else {
                return StepOutcome::failed();
            };
            next.arm = pos;
            match s.held {
                HeldObject::Cup => next.cup = pos,
                HeldObject::Sponge => next.sponge = pos,
                HeldObject::None => {}
            }
        }
    }
    StepOutcome::continue_with(next)
}

/// Ground-truth affordances: the available actions whose step does not fail.
pub fn afforded_actions(s: &EnvState) -> Vec<Action> {
    available_actions(s.dims)
        .iter()
        .copied()
        .filter(|&a| transition(s, a).result != StepResult::Failed)
        .collect()
}

/// Non-terminal states reachable from any all-dirty start, in breadth-first
/// discovery order.
pub fn reachable_states(dims: GridDims) -> Vec<EnvState> {
    let mut seen: HashSet<EnvState> = HashSet::new();
    let mut order = Vec::new();
    let mut queue = VecDeque::new();
    for s in all_initial_states(dims) {
        if seen.insert(s) {
            queue.push_back(s);
        }
    }
    while let Some(s) = queue.pop_front() {
        order.push(s);
        for &a in available_actions(dims) {
            if let StepResult::Continue(next) = transition(&s, a).result {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
    }
    order
}
