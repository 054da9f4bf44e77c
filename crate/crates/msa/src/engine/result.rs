//! Estimation results and their JSON / CSV representations.

use std::io;

use serde::{Deserialize, Serialize};

use crate::engine::EngineError;
use crate::game::ValueTensor;

/// Per-player Shapley Modes plus sampling metadata.
///
/// The element-wise sum of `modes` over players equals
/// `v_grand − v_empty` up to accumulated floating-point error (the
/// telescoping identity holds per sampled ordering, hence for the mean).
#[derive(Clone, Debug)]
pub struct ShapleyResult {
    pub player_labels: Vec<String>,
    pub output_shape: Vec<usize>,
    /// One tensor per player, each of the game's output shape.
    pub modes: Vec<ValueTensor>,
    /// Element-wise standard error of the mean (sample standard deviation
    /// of per-ordering marginals over √p); `None` for exact results, zeros
    /// when p = 1.
    pub stderr: Option<Vec<ValueTensor>>,
    pub v_empty: ValueTensor,
    pub v_grand: ValueTensor,
    pub seed: u64,
    /// Orderings actually averaged: p for sampled runs, n! for exact ones.
    pub permutations_used: u64,
    pub elapsed_s: f64,
    /// Value-function invocations (after cache hits).
    pub evaluations: u64,
    pub cache_hits: u64,
}

/// Wire format: flat row-major arrays carried alongside the shape.
#[derive(Serialize, Deserialize)]
struct ResultDoc {
    players: Vec<String>,
    shape: Vec<usize>,
    modes: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    stderr: Option<Vec<Vec<f64>>>,
    v_empty: Vec<f64>,
    v_grand: Vec<f64>,
    seed: u64,
    p: u64,
    elapsed_s: f64,
}

impl ShapleyResult {
    pub fn n_players(&self) -> usize {
        self.modes.len()
    }

    /// Flattened element count of one mode tensor.
    pub fn n_elements(&self) -> usize {
        self.output_shape.iter().product()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let doc = ResultDoc {
            players: self.player_labels.clone(),
            shape: self.output_shape.clone(),
            modes: self.modes.iter().map(|m| m.data().to_vec()).collect(),
            stderr: self
                .stderr
                .as_ref()
                .map(|s| s.iter().map(|t| t.data().to_vec()).collect()),
            v_empty: self.v_empty.data().to_vec(),
            v_grand: self.v_grand.data().to_vec(),
            seed: self.seed,
            p: self.permutations_used,
            elapsed_s: self.elapsed_s,
        };
        serde_json::to_value(doc).expect("result serialization cannot fail")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value())
            .expect("result serialization cannot fail")
    }

    pub fn from_json_str(raw: &str) -> Result<Self, EngineError> {
        let doc: ResultDoc =
            serde_json::from_str(raw).map_err(|e| EngineError::Document(e.to_string()))?;
        let n = doc.players.len();
        if doc.modes.len() != n {
            return Err(EngineError::Document(format!(
                "{} players but {} mode rows",
                n,
                doc.modes.len()
            )));
        }
        let tensors = |rows: Vec<Vec<f64>>| -> Result<Vec<ValueTensor>, EngineError> {
            rows.into_iter()
                .map(|row| {
                    ValueTensor::new(doc.shape.clone(), row)
                        .map_err(|e| EngineError::Document(e.to_string()))
                })
                .collect()
        };
        let modes = tensors(doc.modes)?;
        let stderr = doc.stderr.map(tensors).transpose()?;
        if let Some(s) = &stderr {
            if s.len() != n {
                return Err(EngineError::Document(format!(
                    "{} players but {} stderr rows",
                    n,
                    s.len()
                )));
            }
        }
        let v_empty = ValueTensor::new(doc.shape.clone(), doc.v_empty)
            .map_err(|e| EngineError::Document(e.to_string()))?;
        let v_grand = ValueTensor::new(doc.shape.clone(), doc.v_grand)
            .map_err(|e| EngineError::Document(e.to_string()))?;
        Ok(ShapleyResult {
            player_labels: doc.players,
            output_shape: doc.shape,
            modes,
            stderr,
            v_empty,
            v_grand,
            seed: doc.seed,
            permutations_used: doc.p,
            elapsed_s: doc.elapsed_s,
            evaluations: 0,
            cache_hits: 0,
        })
    }

    /// CSV of players × flattened mode elements, header `player,v0,...`.
    pub fn write_modes_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let elems = self.n_elements();
        let mut header = Vec::with_capacity(elems + 1);
        header.push("player".to_string());
        for j in 0..elems {
            header.push(format!("v{j}"));
        }
        w.write_record(&header)?;
        for (label, mode) in self.player_labels.iter().zip(&self.modes) {
            let mut row = Vec::with_capacity(elems + 1);
            row.push(label.clone());
            for value in mode.data() {
                row.push(value.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_result() -> ShapleyResult {
        ShapleyResult {
            player_labels: vec!["a".into(), "b".into()],
            output_shape: vec![2],
            modes: vec![
                ValueTensor::new(vec![2], vec![0.5, 1.5]).unwrap(),
                ValueTensor::new(vec![2], vec![-0.5, 2.5]).unwrap(),
            ],
            stderr: Some(vec![
                ValueTensor::new(vec![2], vec![0.1, 0.2]).unwrap(),
                ValueTensor::new(vec![2], vec![0.3, 0.4]).unwrap(),
            ]),
            v_empty: ValueTensor::new(vec![2], vec![0.0, 0.0]).unwrap(),
            v_grand: ValueTensor::new(vec![2], vec![0.0, 4.0]).unwrap(),
            seed: 7,
            permutations_used: 100,
            elapsed_s: 0.25,
            evaluations: 400,
            cache_hits: 2,
        }
    }

    #[test]
    fn json_round_trip_preserves_payload() {
        let r = sample_result();
        let back = ShapleyResult::from_json_str(&r.to_json_string()).unwrap();
        assert_eq!(back.player_labels, r.player_labels);
        assert_eq!(back.output_shape, r.output_shape);
        assert_eq!(back.modes, r.modes);
        assert_eq!(back.stderr, r.stderr);
        assert_eq!(back.seed, 7);
        assert_eq!(back.permutations_used, 100);
    }

    #[test]
    fn stderr_is_omitted_for_exact_results() {
        let mut r = sample_result();
        r.stderr = None;
        let value = r.to_json_value();
        assert!(value.get("stderr").is_none());
        let back = ShapleyResult::from_json_str(&r.to_json_string()).unwrap();
        assert!(back.stderr.is_none());
    }

    #[test]
    fn mismatched_mode_rows_are_rejected() {
        let raw = r#"{"players":["a"],"shape":[],"modes":[[1.0],[2.0]],
                      "v_empty":[0.0],"v_grand":[3.0],"seed":0,"p":1,"elapsed_s":0.0}"#;
        assert!(ShapleyResult::from_json_str(raw).is_err());
    }

    #[test]
    fn modes_csv_has_player_rows() {
        let r = sample_result();
        let mut buf = Vec::new();
        r.write_modes_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("player,v0,v1"));
        assert_eq!(lines.next(), Some("a,0.5,1.5"));
        assert_eq!(lines.next(), Some("b,-0.5,2.5"));
    }
}
