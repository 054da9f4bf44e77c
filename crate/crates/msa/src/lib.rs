//! Game-theoretic attribution of function to lesionable model units.
//!
//! A trained model is treated as a cooperative game: its units (hidden
//! neurons, filters, experts) are players, a coalition is the set of units
//! left intact, and the value function is whatever the model produces or
//! scores under that lesion pattern — a scalar or a full output tensor.
//! The [`engine`] module estimates each player's Shapley value (or, for
//! multidimensional outputs, its Shapley Mode: one contribution tensor per
//! player, shaped like the output) by exact enumeration or seeded Monte
//! Carlo permutation sampling with deterministic parallel reduction.
//!
//! On top of the estimates, [`analysis`] provides the distribution-of-
//! computation index, inter-function similarity matrices, ranked lesion
//! sweeps and an edit-distance scorer, and [`cluster`] groups players by
//! contribution similarity via Louvain community detection. [`mlp`] is a
//! small lesionable feed-forward classifier whose hidden neurons are the
//! players of per-class accuracy games.

pub mod analysis;
pub mod cluster;
pub mod engine;
pub mod game;
pub mod mlp;

pub use engine::{
    convergence_trace, marginal_contribution, shapley_auto, shapley_exact, shapley_sampled,
    SamplingMode, SamplingPlan, ShapleyResult,
};
pub use game::{Coalition, Game, GameError, GameSpec, PlayerId, ValueTensor};
