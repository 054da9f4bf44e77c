//! Derived metrics over contribution vectors and matrices: the index of
//! distributed computation, inter-function similarity, ranked lesion
//! sweeps, and edit-distance scoring of string predictions.

use std::io::{self, Read};
use std::path::Path;

use thiserror::Error;

use crate::engine::ShapleyResult;
use crate::game::{Coalition, Game, GameError, ValueTensor};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("contribution vector is all zeros; the squared distribution is undefined")]
    AllZero,
    #[error("need at least {needed} {what}, got {got}")]
    TooFew { what: &'static str, needed: usize, got: usize },
    #[error("function column {0} is all zeros")]
    ZeroColumn(String),
    #[error("element index {element} out of range for {elements} elements")]
    BadElement { element: usize, elements: usize },
    #[error("lesion counts must be ascending and below the player count {n}: {ks:?}")]
    BadKs { ks: Vec<usize>, n: usize },
    #[error("result has {result} players but game has {game}")]
    PlayerMismatch { result: usize, game: usize },
    #[error("truth string is empty")]
    EmptyTruth,
    #[error("non-finite contribution at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("matrix is empty")]
    EmptyMatrix,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Pearson correlation coefficient, or `None` when either vector has zero
/// variance (the caller decides how to flag that case).
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson needs equal-length vectors");
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return None;
    }
    Some((cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0))
}

/// Index of distributed computation for one contribution vector.
///
/// Contributions are squared (`s_i = c_i²`, sign-insensitive), normalized
/// into a distribution `p_i = s_i / Σ s_j`, scored with Shannon entropy
/// `H = −Σ p_i ln p_i` (with `0·ln 0 = 0`) and normalized by
/// `H_max = ln n`. 1 means fully distributed, 0 means single-unit
/// dominance. Natural logarithms throughout; the ratio is base-invariant.
pub fn idc(contributions: &[f64]) -> Result<f64, AnalysisError> {
    Ok(idc_with_entropy(contributions)?.0)
}

fn idc_with_entropy(contributions: &[f64]) -> Result<(f64, f64), AnalysisError> {
    let n = contributions.len();
    if n < 2 {
        return Err(AnalysisError::TooFew { what: "contributions", needed: 2, got: n });
    }
    let squared: Vec<f64> = contributions.iter().map(|c| c * c).collect();
    let total: f64 = squared.iter().sum();
    if total == 0.0 {
        return Err(AnalysisError::AllZero);
    }
    let mut entropy = 0.0;
    for s in squared {
        let p = s / total;
        if p > 0.0 {
            entropy -= p * p.ln();
        }
    }
    let h_max = (n as f64).ln();
    Ok(((entropy / h_max).clamp(0.0, 1.0), entropy))
}

/// Players × functions matrix of contributions `c_{i,f}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContributionMatrix {
    values: Vec<f64>, // row-major, players × functions
    n_players: usize,
    n_functions: usize,
    pub player_labels: Vec<String>,
    pub function_labels: Vec<String>,
}

impl ContributionMatrix {
    pub fn new(
        values: Vec<f64>,
        player_labels: Vec<String>,
        function_labels: Vec<String>,
    ) -> Result<Self, AnalysisError> {
        let n_players = player_labels.len();
        let n_functions = function_labels.len();
        if n_players == 0 || n_functions == 0 {
            return Err(AnalysisError::EmptyMatrix);
        }
        if values.len() != n_players * n_functions {
            return Err(AnalysisError::TooFew {
                what: "matrix entries",
                needed: n_players * n_functions,
                got: values.len(),
            });
        }
        for (idx, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(AnalysisError::NonFinite {
                    row: idx / n_functions,
                    column: idx % n_functions,
                });
            }
        }
        Ok(ContributionMatrix { values, n_players, n_functions, player_labels, function_labels })
    }

    /// Players × flattened-elements matrix from an estimation result.
    pub fn from_result(result: &ShapleyResult) -> Result<Self, AnalysisError> {
        let n_functions = result.n_elements();
        let mut values = Vec::with_capacity(result.n_players() * n_functions);
        for mode in &result.modes {
            values.extend_from_slice(mode.data());
        }
        let function_labels = (0..n_functions).map(|j| format!("f{j}")).collect();
        ContributionMatrix::new(values, result.player_labels.clone(), function_labels)
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn n_functions(&self) -> usize {
        self.n_functions
    }

    pub fn value(&self, player: usize, function: usize) -> f64 {
        self.values[player * self.n_functions + function]
    }

    pub fn column(&self, function: usize) -> Vec<f64> {
        (0..self.n_players).map(|i| self.value(i, function)).collect()
    }

    pub fn row(&self, player: usize) -> &[f64] {
        &self.values[player * self.n_functions..(player + 1) * self.n_functions]
    }

    /// CSV with header `player,<function_0>,...`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = Vec::with_capacity(self.n_functions + 1);
        header.push("player".to_string());
        header.extend(self.function_labels.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n_players {
            let mut row = Vec::with_capacity(self.n_functions + 1);
            row.push(self.player_labels[i].clone());
            for v in self.row(i) {
                row.push(v.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, AnalysisError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = r
            .headers()
            .map_err(|e| AnalysisError::Parse { line: 1, message: e.to_string() })?
            .clone();
        if headers.get(0) != Some("player") || headers.len() < 2 {
            return Err(AnalysisError::Parse {
                line: 1,
                message: "expected header `player,<function_0>,...`".into(),
            });
        }
        let function_labels: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut player_labels = Vec::new();
        let mut values = Vec::new();
        for record in r.records() {
            let record = record.map_err(|e| AnalysisError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != headers.len() {
                return Err(AnalysisError::Parse {
                    line,
                    message: format!("expected {} fields, got {}", headers.len(), record.len()),
                });
            }
            player_labels.push(record.get(0).unwrap_or("").to_string());
            for (k, field) in record.iter().skip(1).enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| AnalysisError::Parse {
                    line,
                    message: format!(
                        "column {}: cannot parse `{field}` as a number",
                        function_labels[k]
                    ),
                })?;
                values.push(v);
            }
        }
        if player_labels.is_empty() {
            return Err(AnalysisError::Parse { line: 1, message: "no data rows".into() });
        }
        ContributionMatrix::new(values, player_labels, function_labels)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, AnalysisError> {
        let file = std::fs::File::open(path)?;
        ContributionMatrix::read_csv(file)
    }
}

/// Per-function distribution indices plus the raw entropies behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct IdcReport {
    pub function_labels: Vec<String>,
    /// Normalized index M per function, each in [0, 1].
    pub per_function: Vec<f64>,
    /// Raw entropies H (natural log).
    pub entropies: Vec<f64>,
    /// ln(number of players), shared by all functions.
    pub h_max: f64,
}

/// IDC of every function column of a contribution matrix.
pub fn idc_report(matrix: &ContributionMatrix) -> Result<IdcReport, AnalysisError> {
    let mut per_function = Vec::with_capacity(matrix.n_functions());
    let mut entropies = Vec::with_capacity(matrix.n_functions());
    for f in 0..matrix.n_functions() {
        let column = matrix.column(f);
        let (m, h) = idc_with_entropy(&column).map_err(|e| match e {
            AnalysisError::AllZero => {
                AnalysisError::ZeroColumn(matrix.function_labels[f].clone())
            }
            other => other,
        })?;
        per_function.push(m);
        entropies.push(h);
    }
    Ok(IdcReport {
        function_labels: matrix.function_labels.clone(),
        per_function,
        entropies,
        h_max: (matrix.n_players() as f64).ln(),
    })
}

/// Symmetric functions × functions correlation matrix with unit diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    values: Vec<f64>, // row-major, n × n
    /// Functions whose contribution column had zero variance; their
    /// off-diagonal correlations are reported as 0.
    pub zero_variance: Vec<bool>,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n() + b]
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["function".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for a in 0..self.n() {
            let mut row = vec![self.labels[a].clone()];
            for b in 0..self.n() {
                row.push(self.value(a, b).to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()
    }
}

/// How strongly two functions reuse the same players: the Pearson
/// correlation of their contribution columns.
pub fn interclass_similarity(
    matrix: &ContributionMatrix,
) -> Result<SimilarityMatrix, AnalysisError> {
    if matrix.n_players() < 2 {
        return Err(AnalysisError::TooFew {
            what: "players",
            needed: 2,
            got: matrix.n_players(),
        });
    }
    let n = matrix.n_functions();
    let columns: Vec<Vec<f64>> = (0..n).map(|f| matrix.column(f)).collect();
    let mut values = vec![0.0; n * n];
    let mut zero_variance = vec![false; n];
    for a in 0..n {
        values[a * n + a] = 1.0;
        for b in (a + 1)..n {
            let r = match pearson(&columns[a], &columns[b]) {
                Some(r) => r,
                None => {
                    // Attribute the flag to whichever side is degenerate.
                    for (f, column) in [(a, &columns[a]), (b, &columns[b])] {
                        let mean = column.iter().sum::<f64>() / column.len() as f64;
                        if column.iter().all(|&v| v == mean) {
                            zero_variance[f] = true;
                        }
                    }
                    0.0
                }
            };
            values[a * n + b] = r;
            values[b * n + a] = r;
        }
    }
    Ok(SimilarityMatrix { labels: matrix.function_labels.clone(), values, zero_variance })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepOrder {
    /// Lesion the k highest contributors first.
    TopFirst,
    /// Lesion the k lowest contributors first.
    BottomFirst,
}

/// Re-evaluate the game after lesioning the k top (or bottom) contributors
/// to one output element, for each k. Every entry is a fresh evaluation —
/// Shapley linearity does not predict joint-lesion effects. Ranking ties
/// break toward the lower player index; `k = 0` returns `V(N)` bitwise.
pub fn lesion_sweep(
    game: &dyn Game,
    result: &ShapleyResult,
    element: usize,
    order: SweepOrder,
    ks: &[usize],
) -> Result<Vec<(usize, ValueTensor)>, AnalysisError> {
    let n = game.n_players();
    if result.n_players() != n {
        return Err(AnalysisError::PlayerMismatch { result: result.n_players(), game: n });
    }
    let elements = result.n_elements();
    if element >= elements {
        return Err(AnalysisError::BadElement { element, elements });
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) || ks.last().is_some_and(|&k| k >= n) {
        return Err(AnalysisError::BadKs { ks: ks.to_vec(), n });
    }

    let mut ranked: Vec<usize> = (0..n).collect();
    let score = |i: usize| result.modes[i].data()[element];
    match order {
        SweepOrder::TopFirst => {
            ranked.sort_by(|&a, &b| {
                score(b).partial_cmp(&score(a)).expect("finite contributions").then(a.cmp(&b))
            });
        }
        SweepOrder::BottomFirst => {
            ranked.sort_by(|&a, &b| {
                score(a).partial_cmp(&score(b)).expect("finite contributions").then(a.cmp(&b))
            });
        }
    }

    let mut sweep = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut coalition = Coalition::grand(n);
        for &player in &ranked[..k] {
            coalition.remove(player);
        }
        let value = game.evaluate(&coalition)?;
        sweep.push((k, value));
    }
    Ok(sweep)
}

/// Minimum number of single-character edits (insertions, deletions,
/// substitutions) turning `a` into `b`, over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diagonal = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = (above + 1)
                .min(row[j] + 1)
                .min(diagonal + usize::from(ca != cb));
            diagonal = above;
        }
    }
    row[b.len()]
}

/// Overlap score in [0, 1] between a predicted string and the truth:
/// `1 − levenshtein / max(len)`, clamped. 1 is an exact match, 0 means
/// every character needs an edit.
pub fn digit_overlap_score(prediction: &str, truth: &str) -> Result<f64, AnalysisError> {
    let truth_len = truth.chars().count();
    if truth_len == 0 {
        return Err(AnalysisError::EmptyTruth);
    }
    let longest = prediction.chars().count().max(truth_len);
    let distance = levenshtein(prediction, truth);
    Ok((1.0 - distance as f64 / longest as f64).clamp(0.0, 1.0))
}
