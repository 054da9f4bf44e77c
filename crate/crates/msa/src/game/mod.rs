//! Players, coalitions, value tensors and the game contract.
//!
//! A game maps a [`Coalition`] (the set of players left intact) to a
//! [`ValueTensor`]. Games must be pure functions of the coalition:
//! evaluating the same coalition twice returns bitwise-identical tensors.
//! Stochastic models have to fix their own seeds internally.

mod reference;
mod tabular;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use reference::{make_reference_game, AdditiveGame, GloveGame, MajorityGame, ReferenceKind};
pub use tabular::{load_tabular_game, TabularGame};

/// Errors produced by game construction, loading and evaluation.
#[derive(Debug, Error)]
pub enum GameError {
    #[error("coalition width {got} does not match game player count {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("no table entry for coalition {coalition}")]
    MissingEntry { coalition: String },
    #[error("non-finite value {value} at element {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("shape {shape:?} implies {expected} elements, got {got}")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("element shapes differ: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: duplicate coalition {coalition}")]
    DuplicateCoalition { line: u64, coalition: String },
    #[error("invalid game parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Index of a player within a game; indices run contiguously over `0..n`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub usize);

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

const BLOCK_BITS: usize = 64;

/// Fixed-width set of intact players. Bit `i` set means player `i` is
/// included (unlesioned); cleared bits are the perturbed players.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Coalition {
    width: usize,
    blocks: Vec<u64>,
}

impl Coalition {
    /// The empty coalition over `width` players (everything lesioned).
    pub fn empty(width: usize) -> Self {
        let n_blocks = width.div_ceil(BLOCK_BITS).max(1);
        Coalition {
            width,
            blocks: vec![0; n_blocks],
        }
    }

    /// The grand coalition: all `width` players intact.
    pub fn grand(width: usize) -> Self {
        let mut c = Coalition::empty(width);
        for i in 0..width {
            c.insert(i);
        }
        c
    }

    pub fn from_members<I: IntoIterator<Item = usize>>(
        width: usize,
        members: I,
    ) -> Result<Self, GameError> {
        let mut c = Coalition::empty(width);
        for i in members {
            if i >= width {
                return Err(GameError::InvalidParams(format!(
                    "player {i} out of range for width {width}"
                )));
            }
            c.insert(i);
        }
        Ok(c)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn contains(&self, player: usize) -> bool {
        assert!(player < self.width, "player {player} out of range");
        self.blocks[player / BLOCK_BITS] >> (player % BLOCK_BITS) & 1 == 1
    }

    pub fn insert(&mut self, player: usize) {
        assert!(player < self.width, "player {player} out of range");
        self.blocks[player / BLOCK_BITS] |= 1u64 << (player % BLOCK_BITS);
    }

    pub fn remove(&mut self, player: usize) {
        assert!(player < self.width, "player {player} out of range");
        self.blocks[player / BLOCK_BITS] &= !(1u64 << (player % BLOCK_BITS));
    }

    /// Copy of `self` with `player` added.
    pub fn with(&self, player: usize) -> Self {
        let mut c = self.clone();
        c.insert(player);
        c
    }

    /// Number of intact players.
    pub fn count(&self) -> usize {
        self.blocks.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Intact player indices in ascending order.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&i| self.contains(i))
    }

    /// Bitstring with one char per player, leftmost char = player 0,
    /// `'1'` = intact.
    pub fn to_bitstring(&self) -> String {
        (0..self.width)
            .map(|i| if self.contains(i) { '1' } else { '0' })
            .collect()
    }

    pub fn from_bitstring(s: &str) -> Result<Self, GameError> {
        let width = s.chars().count();
        let mut c = Coalition::empty(width);
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '1' => c.insert(i),
                '0' => {}
                other => {
                    return Err(GameError::InvalidParams(format!(
                        "invalid bitstring character {other:?} at position {i}"
                    )))
                }
            }
        }
        Ok(c)
    }

    /// Low `width` bits of `mask`, bit `i` = player `i`. Only valid for
    /// games with at most 64 players; used by exact enumeration.
    pub(crate) fn from_mask(mask: u64, width: usize) -> Self {
        debug_assert!(width <= 64);
        let mut c = Coalition::empty(width);
        c.blocks[0] = if width == 64 {
            mask
        } else {
            mask & ((1u64 << width) - 1)
        };
        c
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bitstring())
    }
}

/// Shaped, finite, row-major numeric output of a game evaluation.
/// Scalars are shape `[]` with a single element.
#[derive(Clone, PartialEq, Debug)]
pub struct ValueTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl ValueTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, GameError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(GameError::ShapeDataMismatch {
                shape,
                expected,
                got: data.len(),
            });
        }
        for (index, &value) in data.iter().enumerate() {
            if !value.is_finite() {
                return Err(GameError::NonFinite { index, value });
            }
        }
        Ok(ValueTensor { shape, data })
    }

    pub fn scalar(value: f64) -> Result<Self, GameError> {
        ValueTensor::new(Vec::new(), vec![value])
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        ValueTensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Number of elements (1 for scalars).
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single element of a scalar tensor, if this is one.
    pub fn as_scalar(&self) -> Option<f64> {
        if self.shape.is_empty() {
            Some(self.data[0])
        } else {
            None
        }
    }

    /// Element-wise difference `self - other`.
    pub fn subtract(&self, other: &ValueTensor) -> Result<ValueTensor, GameError> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Element-wise sum `self + other`.
    pub fn add(&self, other: &ValueTensor) -> Result<ValueTensor, GameError> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(
        &self,
        other: &ValueTensor,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<ValueTensor, GameError> {
        if self.shape != other.shape {
            return Err(GameError::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        // No finiteness re-check: results of arithmetic on finite inputs are
        // validated where tensors re-enter a game or a result.
        Ok(ValueTensor {
            shape: self.shape.clone(),
            data,
        })
    }
}

/// Static description of a game: player count, output shape and a
/// human-readable descriptor echoed into run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub n_players: usize,
    pub output_shape: Vec<usize>,
    pub descriptor: String,
}

/// The value-function contract. Implementations must be deterministic:
/// the same coalition yields a bitwise-identical tensor on every call.
///
/// Games are evaluated concurrently from multiple workers. A game that is
/// not safe for shared concurrent use can instead return a fresh copy from
/// [`Game::worker_replica`]; the engine then gives each worker its own
/// instance and never shares one across threads.
pub trait Game: Send + Sync {
    fn n_players(&self) -> usize;

    fn output_shape(&self) -> Vec<usize>;

    /// Game-kind tag plus parameters, e.g. `additive(w=[2, 5, 3])`.
    fn descriptor(&self) -> String;

    /// Value of the game when exactly the members of `coalition` are intact.
    fn evaluate(&self, coalition: &Coalition) -> Result<ValueTensor, GameError>;

    fn player_labels(&self) -> Vec<String> {
        (0..self.n_players()).map(|i| format!("p{i}")).collect()
    }

    /// `Some(copy)` if the game wants one instance per worker instead of
    /// shared `&self` access. Default: shared.
    fn worker_replica(&self) -> Option<Box<dyn Game>> {
        None
    }

    fn spec(&self) -> GameSpec {
        GameSpec {
            n_players: self.n_players(),
            output_shape: self.output_shape(),
            descriptor: self.descriptor(),
        }
    }
}

pub(crate) fn check_width(game: &dyn Game, coalition: &Coalition) -> Result<(), GameError> {
    if coalition.width() != game.n_players() {
        return Err(GameError::WidthMismatch {
            expected: game.n_players(),
            got: coalition.width(),
        });
    }
    Ok(())
}

pub(crate) fn sorted_set(players: &[usize]) -> BTreeSet<usize> {
    players.iter().copied().collect()
}
