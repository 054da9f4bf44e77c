//! Built-in games with analytically known Shapley values, used as oracles
//! for the estimation engine and as ready-made CLI game sources.

use super::{check_width, sorted_set, Coalition, Game, GameError, ValueTensor};

/// Parameters for [`make_reference_game`].
#[derive(Clone, Debug)]
pub enum ReferenceKind {
    /// `v(S) = sum of weights of included players`; Shapley values equal
    /// the weights.
    Additive(Vec<f64>),
    /// `v(S) = 1` iff `|S| >= quota`, else 0; all players symmetric.
    Majority { n_players: usize, quota: usize },
    /// `v(S) = min(|S ∩ left|, |S ∩ right|)`; left/right partition the
    /// player set.
    Glove { left: Vec<usize>, right: Vec<usize> },
}

pub fn make_reference_game(kind: ReferenceKind) -> Result<Box<dyn Game>, GameError> {
    match kind {
        ReferenceKind::Additive(weights) => Ok(Box::new(AdditiveGame::new(weights)?)),
        ReferenceKind::Majority { n_players, quota } => {
            Ok(Box::new(MajorityGame::new(n_players, quota)?))
        }
        ReferenceKind::Glove { left, right } => Ok(Box::new(GloveGame::new(&left, &right)?)),
    }
}

/// Sum-of-included-weights game. By the additivity axiom its exact Shapley
/// values are the weights themselves, independent of coalition structure.
#[derive(Clone, Debug)]
pub struct AdditiveGame {
    weights: Vec<f64>,
}

impl AdditiveGame {
    pub fn new(weights: Vec<f64>) -> Result<Self, GameError> {
        if weights.is_empty() {
            return Err(GameError::InvalidParams("additive game needs at least one weight".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(GameError::InvalidParams(format!("non-finite weight {w}")));
        }
        Ok(AdditiveGame { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Game for AdditiveGame {
    fn n_players(&self) -> usize {
        self.weights.len()
    }

    fn output_shape(&self) -> Vec<usize> {
        Vec::new()
    }

    fn descriptor(&self) -> String {
        format!("additive(w={:?})", self.weights)
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<ValueTensor, GameError> {
        check_width(self, coalition)?;
        // Summed in ascending player order so a zero-weight player never
        // perturbs the partial sums: its marginal is bitwise zero.
        let mut total = 0.0;
        for i in 0..self.weights.len() {
            if coalition.contains(i) {
                total += self.weights[i];
            }
        }
        ValueTensor::scalar(total)
    }
}

/// Threshold game: the coalition wins (value 1) once it reaches `quota`
/// members. Every player is symmetric, so each gets `1/n` exactly.
#[derive(Clone, Debug)]
pub struct MajorityGame {
    n_players: usize,
    quota: usize,
}

impl MajorityGame {
    pub fn new(n_players: usize, quota: usize) -> Result<Self, GameError> {
        if n_players == 0 {
            return Err(GameError::InvalidParams("majority game needs players".into()));
        }
        if quota == 0 || quota > n_players {
            return Err(GameError::InvalidParams(format!(
                "quota {quota} must be in 1..={n_players}"
            )));
        }
        Ok(MajorityGame { n_players, quota })
    }
}

impl Game for MajorityGame {
    fn n_players(&self) -> usize {
        self.n_players
    }

    fn output_shape(&self) -> Vec<usize> {
        Vec::new()
    }

    fn descriptor(&self) -> String {
        format!("majority(quota={}, n={})", self.quota, self.n_players)
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<ValueTensor, GameError> {
        check_width(self, coalition)?;
        ValueTensor::scalar(if coalition.count() >= self.quota { 1.0 } else { 0.0 })
    }
}

/// Matching game over two disjoint player sets:
/// `v(S) = min(|S ∩ left|, |S ∩ right|)`.
#[derive(Clone, Debug)]
pub struct GloveGame {
    // is_left[i] = player i belongs to the left set
    is_left: Vec<bool>,
}

impl GloveGame {
    pub fn new(left: &[usize], right: &[usize]) -> Result<Self, GameError> {
        let n = left.len() + right.len();
        if n == 0 {
            return Err(GameError::InvalidParams("glove game needs players".into()));
        }
        let left_set = sorted_set(left);
        let right_set = sorted_set(right);
        if left_set.len() != left.len() || right_set.len() != right.len() {
            return Err(GameError::InvalidParams("duplicate player in glove sets".into()));
        }
        if left_set.intersection(&right_set).next().is_some() {
            return Err(GameError::InvalidParams("left and right sets overlap".into()));
        }
        let mut is_left = vec![false; n];
        for &i in &left_set {
            if i >= n {
                return Err(GameError::InvalidParams(format!(
                    "player {i} out of range; glove sets must partition 0..{n}"
                )));
            }
            is_left[i] = true;
        }
        for &i in &right_set {
            if i >= n {
                return Err(GameError::InvalidParams(format!(
                    "player {i} out of range; glove sets must partition 0..{n}"
                )));
            }
        }
        Ok(GloveGame { is_left })
    }

    /// The canonical 3-player fixture: left = {0, 1}, right = {2}, exact
    /// Shapley values (1/6, 1/6, 2/3).
    pub fn canonical() -> Self {
        GloveGame::new(&[0, 1], &[2]).expect("canonical glove game is well-formed")
    }
}

impl Game for GloveGame {
    fn n_players(&self) -> usize {
        self.is_left.len()
    }

    fn output_shape(&self) -> Vec<usize> {
        Vec::new()
    }

    fn descriptor(&self) -> String {
        let left: Vec<usize> = (0..self.is_left.len()).filter(|&i| self.is_left[i]).collect();
        let right: Vec<usize> = (0..self.is_left.len()).filter(|&i| !self.is_left[i]).collect();
        format!("glove(left={left:?}, right={right:?})")
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<ValueTensor, GameError> {
        check_width(self, coalition)?;
        let mut left = 0usize;
        let mut right = 0usize;
        for i in coalition.members() {
            if self.is_left[i] {
                left += 1;
            } else {
                right += 1;
            }
        }
        ValueTensor::scalar(left.min(right) as f64)
    }
}
