//! A lesionable three-layer perceptron: input → hidden → class scores.
//!
//! Hidden neurons are the players. Lesioning zeroes a neuron's
//! post-activation value before the output layer (for relu this matches
//! pre-activation zeroing; for tanh or sigmoid it does not, and
//! post-activation is the rule). The per-class accuracy game exposes the
//! model to the estimation engine with output shape `[classes + 1]`:
//! class accuracies in ascending class order, then overall accuracy.

use std::io::{self, Read};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::pearson;
use crate::engine::ShapleyResult;
use crate::game::{Coalition, Game, GameError, ValueTensor};

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite weight in {0}")]
    NonFinite(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("class {0} has no samples in the dataset")]
    ClassAbsent(usize),
    #[error("line {line}: label {label} out of range for {classes} classes")]
    LabelOutOfRange { line: u64, label: usize, classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("result has {result} players, model has {hidden} hidden neurons")]
    ResultMismatch { result: usize, hidden: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

/// Immutable three-layer perceptron weights. Matrices are row-major:
/// `w1` is hidden × input, `w2` is classes × hidden.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    input: usize,
    hidden: usize,
    classes: usize,
    activation: Activation,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl MlpModel {
    #[allow(clippy::too_many_arguments)] // mirrors the weight-file layout
    pub fn new(
        input: usize,
        hidden: usize,
        classes: usize,
        activation: Activation,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self, MlpError> {
        if input == 0 || hidden == 0 || classes == 0 {
            return Err(MlpError::Dimension("layer sizes must be positive".into()));
        }
        let check = |name: &str, data: &[f64], expected: usize| -> Result<(), MlpError> {
            if data.len() != expected {
                return Err(MlpError::Dimension(format!(
                    "{name} has {} entries, expected {expected}",
                    data.len()
                )));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(MlpError::NonFinite(name.to_string()));
            }
            Ok(())
        };
        check("w1", &w1, hidden * input)?;
        check("b1", &b1, hidden)?;
        check("w2", &w2, classes * hidden)?;
        check("b2", &b2, classes)?;
        Ok(MlpModel { input, hidden, classes, activation, w1, b1, w2, b2 })
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Incoming weight row of one hidden neuron.
    pub fn w1_row(&self, neuron: usize) -> &[f64] {
        &self.w1[neuron * self.input..(neuron + 1) * self.input]
    }

    /// Post-activation hidden vector for one input, before any lesion.
    pub fn hidden_activations(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        if x.len() != self.input {
            return Err(MlpError::Dimension(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input
            )));
        }
        Ok((0..self.hidden)
            .map(|h| {
                let row = self.w1_row(h);
                let mut pre = self.b1[h];
                for (w, xi) in row.iter().zip(x) {
                    pre += w * xi;
                }
                self.activation.apply(pre)
            })
            .collect())
    }

    /// Class scores with the masked-out neurons' activations replaced by
    /// exactly zero before the output layer.
    pub fn forward_masked(&self, x: &[f64], mask: &Coalition) -> Result<Vec<f64>, MlpError> {
        if mask.width() != self.hidden {
            return Err(MlpError::Dimension(format!(
                "mask width {} does not match hidden count {}",
                mask.width(),
                self.hidden
            )));
        }
        let mut activations = self.hidden_activations(x)?;
        for (h, a) in activations.iter_mut().enumerate() {
            if !mask.contains(h) {
                *a = 0.0;
            }
        }
        Ok((0..self.classes)
            .map(|c| {
                let mut score = self.b2[c];
                let row = &self.w2[c * self.hidden..(c + 1) * self.hidden];
                for (w, a) in row.iter().zip(&activations) {
                    score += w * a;
                }
                score
            })
            .collect())
    }

    pub fn to_json_string(&self) -> String {
        let doc = ModelDoc {
            input: self.input,
            hidden: self.hidden,
            classes: self.classes,
            activation: self.activation,
            w1: self.w1.chunks(self.input).map(<[f64]>::to_vec).collect(),
            b1: self.b1.clone(),
            w2: self.w2.chunks(self.hidden).map(<[f64]>::to_vec).collect(),
            b2: self.b2.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
    }

    pub fn from_json_str(raw: &str) -> Result<Self, MlpError> {
        let doc: ModelDoc = serde_json::from_str(raw)?;
        let flatten = |name: &str, rows: Vec<Vec<f64>>, cols: usize| -> Result<Vec<f64>, MlpError> {
            let mut flat = Vec::with_capacity(rows.len() * cols);
            for (i, row) in rows.into_iter().enumerate() {
                if row.len() != cols {
                    return Err(MlpError::Dimension(format!(
                        "{name} row {i} has {} columns, expected {cols}",
                        row.len()
                    )));
                }
                flat.extend(row);
            }
            Ok(flat)
        };
        if doc.w1.len() != doc.hidden {
            return Err(MlpError::Dimension(format!(
                "w1 has {} rows, expected hidden = {}",
                doc.w1.len(),
                doc.hidden
            )));
        }
        if doc.w2.len() != doc.classes {
            return Err(MlpError::Dimension(format!(
                "w2 has {} rows, expected classes = {}",
                doc.w2.len(),
                doc.classes
            )));
        }
        let w1 = flatten("w1", doc.w1, doc.input)?;
        let w2 = flatten("w2", doc.w2, doc.hidden)?;
        MlpModel::new(doc.input, doc.hidden, doc.classes, doc.activation, w1, doc.b1, w2, doc.b2)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MlpError> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    input: usize,
    hidden: usize,
    classes: usize,
    activation: Activation,
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
}

pub fn load_mlp(path: impl AsRef<Path>) -> Result<MlpModel, MlpError> {
    let mut raw = String::new();
    std::fs::File::open(path)?.read_to_string(&mut raw)?;
    MlpModel::from_json_str(&raw)
}

/// Feature matrix plus integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>, // samples × input, row-major
    labels: Vec<usize>,
    input: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, input: usize) -> Result<Self, MlpError> {
        if labels.is_empty() {
            return Err(MlpError::EmptyDataset);
        }
        if input == 0 || features.len() != labels.len() * input {
            return Err(MlpError::Dimension(format!(
                "{} feature values do not form {} samples of {input} features",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(MlpError::NonFinite("features".into()));
        }
        Ok(LabeledDataset { features, labels, input })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn sample(&self, index: usize) -> &[f64] {
        &self.features[index * self.input..(index + 1) * self.input]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    /// Highest label + 1.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.input).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.sample(i).iter().map(f64::to_string).collect();
            row.push(self.label(i).to_string());
            w.write_record(&row)?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MlpError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)?;
        Ok(())
    }
}

/// Load a dataset CSV with header `f0,...,f{d-1},label`.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset, MlpError> {
    let file = std::fs::File::open(path)?;
    read_dataset(file)
}

pub fn read_dataset<R: Read>(reader: R) -> Result<LabeledDataset, MlpError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = r
        .headers()
        .map_err(|e| MlpError::Parse { line: 1, message: e.to_string() })?
        .clone();
    if headers.len() < 2 || headers.iter().next_back() != Some("label") {
        return Err(MlpError::Parse {
            line: 1,
            message: "expected header `f0,...,f{d-1},label`".into(),
        });
    }
    let input = headers.len() - 1;
    for (j, name) in headers.iter().take(input).enumerate() {
        if name != format!("f{j}") {
            return Err(MlpError::Parse {
                line: 1,
                message: format!("expected feature column `f{j}`, found `{name}`"),
            });
        }
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| MlpError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(MlpError::Parse {
                line,
                message: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        for (j, field) in record.iter().take(input).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| MlpError::Parse {
                line,
                message: format!("feature f{j}: cannot parse `{field}` as a number"),
            })?;
            features.push(v);
        }
        let label_field = record.get(input).unwrap_or("");
        let label: usize = label_field.trim().parse().map_err(|_| MlpError::Parse {
            line,
            message: format!("label: cannot parse `{label_field}` as a class index"),
        })?;
        labels.push(label);
    }
    LabeledDataset::new(features, labels, input)
}

/// Per-class accuracies plus the overall accuracy (their sample-weighted
/// mean), all in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ClasswiseAccuracy {
    pub per_class: Vec<f64>,
    pub overall: f64,
}

/// Predicted class: argmax over scores, ties broken toward the lowest
/// class index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

/// Classification accuracy of the lesioned model on a dataset.
pub fn classwise_accuracy(
    model: &MlpModel,
    dataset: &LabeledDataset,
    mask: &Coalition,
) -> Result<ClasswiseAccuracy, MlpError> {
    let game = AccuracyGame::new(model.clone(), dataset.clone())?;
    Ok(game.classwise(mask))
}

/// The per-class accuracy game over a model's hidden neurons. Output shape
/// is `[classes + 1]`: class accuracies in ascending order, then overall.
///
/// Hidden activations are independent of the lesion mask, so they are
/// computed once per sample at construction; an evaluation then only sums
/// the output-layer columns of the intact neurons, which is exactly the
/// masked forward pass.
pub struct AccuracyGame {
    model: Arc<MlpModel>,
    labels: Arc<Vec<usize>>,
    activations: Arc<Vec<f64>>, // samples × hidden
    class_counts: Vec<usize>,
}

impl AccuracyGame {
    pub fn new(model: MlpModel, dataset: LabeledDataset) -> Result<Self, MlpError> {
        if dataset.input() != model.input() {
            return Err(MlpError::Dimension(format!(
                "dataset has {} features, model expects {}",
                dataset.input(),
                model.input()
            )));
        }
        let mut class_counts = vec![0usize; model.classes()];
        for i in 0..dataset.len() {
            let label = dataset.label(i);
            if label >= model.classes() {
                return Err(MlpError::LabelOutOfRange {
                    line: i as u64 + 2,
                    label,
                    classes: model.classes(),
                });
            }
            class_counts[label] += 1;
        }
        if let Some(class) = class_counts.iter().position(|&c| c == 0) {
            return Err(MlpError::ClassAbsent(class));
        }
        let mut activations = Vec::with_capacity(dataset.len() * model.hidden());
        for i in 0..dataset.len() {
            activations.extend(model.hidden_activations(dataset.sample(i))?);
        }
        let labels = (0..dataset.len()).map(|i| dataset.label(i)).collect();
        Ok(AccuracyGame {
            model: Arc::new(model),
            labels: Arc::new(labels),
            activations: Arc::new(activations),
            class_counts,
        })
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    fn classwise(&self, mask: &Coalition) -> ClasswiseAccuracy {
        let model = &self.model;
        let hidden = model.hidden();
        let classes = model.classes();
        let intact: Vec<usize> = mask.members().collect();
        let mut correct = vec![0usize; classes];
        let mut scores = vec![0.0; classes];
        for (i, &label) in self.labels.iter().enumerate() {
            let acts = &self.activations[i * hidden..(i + 1) * hidden];
            scores.copy_from_slice(&model.b2);
            for &h in &intact {
                let a = acts[h];
                for (c, score) in scores.iter_mut().enumerate() {
                    *score += model.w2[c * hidden + h] * a;
                }
            }
            if argmax(&scores) == label {
                correct[label] += 1;
            }
        }
        let per_class: Vec<f64> = correct
            .iter()
            .zip(&self.class_counts)
            .map(|(&c, &n)| c as f64 / n as f64)
            .collect();
        let total: usize = correct.iter().sum();
        let overall = total as f64 / self.labels.len() as f64;
        ClasswiseAccuracy { per_class, overall }
    }
}

impl Game for AccuracyGame {
    fn n_players(&self) -> usize {
        self.model.hidden()
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.model.classes() + 1]
    }

    fn descriptor(&self) -> String {
        format!(
            "mlp-accuracy(input={}, hidden={}, classes={}, samples={})",
            self.model.input(),
            self.model.hidden(),
            self.model.classes(),
            self.labels.len()
        )
    }

    fn player_labels(&self) -> Vec<String> {
        (0..self.model.hidden()).map(|h| format!("h{h}")).collect()
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<ValueTensor, GameError> {
        if coalition.width() != self.model.hidden() {
            return Err(GameError::WidthMismatch {
                expected: self.model.hidden(),
                got: coalition.width(),
            });
        }
        let acc = self.classwise(coalition);
        let mut data = acc.per_class;
        data.push(acc.overall);
        ValueTensor::new(vec![self.model.classes() + 1], data)
    }
}

/// Build the per-class accuracy game, validating that the dataset matches
/// the model and that every class is represented.
pub fn accuracy_game(model: MlpModel, dataset: LabeledDataset) -> Result<AccuracyGame, MlpError> {
    AccuracyGame::new(model, dataset)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeuronImportance {
    pub neuron: usize,
    /// Mean of |incoming weights| ∪ |outgoing weights| ∪ |bias|.
    pub mean_abs_weight: f64,
    /// The neuron's Shapley value for the overall-accuracy element.
    pub shapley_overall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightImportanceStats {
    pub per_neuron: Vec<NeuronImportance>,
    /// Pearson correlation between mean absolute weights and overall
    /// Shapley values; 0 with `zero_variance` set when either vector is
    /// constant.
    pub pearson_r: f64,
    pub zero_variance: bool,
}

/// Relate weight magnitude to causal importance. The overall-accuracy
/// contribution is the last element of each mode tensor (elements are
/// ordered classes-then-overall; scalar results use their single element).
pub fn weight_importance_stats(
    model: &MlpModel,
    result: &ShapleyResult,
) -> Result<WeightImportanceStats, MlpError> {
    let hidden = model.hidden();
    if result.n_players() != hidden {
        return Err(MlpError::ResultMismatch { result: result.n_players(), hidden });
    }
    let elements = result.n_elements();
    if elements == 0 {
        return Err(MlpError::Dimension("result has no elements".into()));
    }
    let overall_index = elements - 1;

    let mut mean_abs = Vec::with_capacity(hidden);
    let mut shapley = Vec::with_capacity(hidden);
    for h in 0..hidden {
        let mut total = 0.0;
        for w in model.w1_row(h) {
            total += w.abs();
        }
        for c in 0..model.classes() {
            total += model.w2[c * hidden + h].abs();
        }
        total += model.b1[h].abs();
        mean_abs.push(total / (model.input() + model.classes() + 1) as f64);
        shapley.push(result.modes[h].data()[overall_index]);
    }

    let (pearson_r, zero_variance) = match pearson(&mean_abs, &shapley) {
        Some(r) => (r, false),
        None => (0.0, true),
    };
    let per_neuron = (0..hidden)
        .map(|neuron| NeuronImportance {
            neuron,
            mean_abs_weight: mean_abs[neuron],
            shapley_overall: shapley[neuron],
        })
        .collect();
    Ok(WeightImportanceStats { per_neuron, pearson_r, zero_variance })
}
