//! Coalition-table games: an explicit (complete or partial) mapping from
//! coalitions to value tensors, loadable from CSV.
//!
//! File format: UTF-8 CSV with header `coalition,v0[,v1,...]`. The
//! `coalition` column is a bitstring of length n with the leftmost char
//! for player 0 and `'1'` meaning intact; value columns are decimal
//! floats. A table with k value columns answers with shape `[k]`, or `[]`
//! (scalar) when k = 1.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use super::{check_width, Coalition, Game, GameError, ValueTensor};

#[derive(Clone, Debug)]
pub struct TabularGame {
    n_players: usize,
    output_shape: Vec<usize>,
    table: HashMap<Coalition, ValueTensor>,
    descriptor: String,
}

impl TabularGame {
    /// Build a table from explicit entries. All tensors must share one
    /// shape; duplicate coalitions are rejected. Partial tables are
    /// allowed — querying a missing coalition is a defined error.
    pub fn new(
        n_players: usize,
        entries: impl IntoIterator<Item = (Coalition, ValueTensor)>,
    ) -> Result<Self, GameError> {
        let mut table = HashMap::new();
        let mut output_shape: Option<Vec<usize>> = None;
        for (coalition, value) in entries {
            if coalition.width() != n_players {
                return Err(GameError::WidthMismatch {
                    expected: n_players,
                    got: coalition.width(),
                });
            }
            match &output_shape {
                None => output_shape = Some(value.shape().to_vec()),
                Some(shape) if shape != value.shape() => {
                    return Err(GameError::ShapeMismatch {
                        left: shape.clone(),
                        right: value.shape().to_vec(),
                    })
                }
                Some(_) => {}
            }
            let key = coalition.to_bitstring();
            if table.insert(coalition, value).is_some() {
                return Err(GameError::InvalidParams(format!("duplicate coalition {key}")));
            }
        }
        let output_shape =
            output_shape.ok_or_else(|| GameError::InvalidParams("empty coalition table".into()))?;
        Ok(TabularGame {
            n_players,
            output_shape,
            table,
            descriptor: format!("tabular(n={n_players})"),
        })
    }

    /// Complete table over all `2^n` coalitions with values supplied by `f`.
    /// Intended for test games and small synthetic benchmarks; `n` is
    /// capped at 24 to keep the table enumerable.
    pub fn from_fn(
        n_players: usize,
        shape: Vec<usize>,
        mut f: impl FnMut(&Coalition) -> Vec<f64>,
    ) -> Result<Self, GameError> {
        if n_players > 24 {
            return Err(GameError::InvalidParams(format!(
                "from_fn enumerates 2^n coalitions; n={n_players} is too large"
            )));
        }
        let mut entries = Vec::with_capacity(1 << n_players);
        for mask in 0u64..(1u64 << n_players) {
            let coalition = Coalition::from_mask(mask, n_players);
            let value = ValueTensor::new(shape.clone(), f(&coalition))?;
            entries.push((coalition, value));
        }
        TabularGame::new(n_players, entries)
    }

    /// True when every one of the `2^n` coalitions has an entry.
    pub fn is_complete(&self) -> bool {
        self.n_players < 64 && self.table.len() as u128 == 1u128 << self.n_players
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    fn set_descriptor(&mut self, descriptor: String) {
        self.descriptor = descriptor;
    }
}

impl Game for TabularGame {
    fn n_players(&self) -> usize {
        self.n_players
    }

    fn output_shape(&self) -> Vec<usize> {
        self.output_shape.clone()
    }

    fn descriptor(&self) -> String {
        self.descriptor.clone()
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<ValueTensor, GameError> {
        check_width(self, coalition)?;
        self.table
            .get(coalition)
            .cloned()
            .ok_or_else(|| GameError::MissingEntry {
                coalition: coalition.to_bitstring(),
            })
    }
}

/// Load a coalition-table game from a CSV file (format in the module docs).
pub fn load_tabular_game(path: impl AsRef<Path>) -> Result<TabularGame, GameError> {
    let path = path.as_ref();
    let mut raw = String::new();
    std::fs::File::open(path)?.read_to_string(&mut raw)?;
    let mut game = parse_tabular_csv(&raw)?;
    game.set_descriptor(format!("tabular({})", path.display()));
    Ok(game)
}

fn parse_tabular_csv(raw: &str) -> Result<TabularGame, GameError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(raw.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| GameError::Parse { line: 1, message: e.to_string() })?
        .clone();
    if headers.is_empty() || headers.get(0) != Some("coalition") {
        return Err(GameError::Parse {
            line: 1,
            message: format!(
                "expected header starting with `coalition`, found {:?}",
                headers.iter().collect::<Vec<_>>()
            ),
        });
    }
    let n_values = headers.len() - 1;
    if n_values == 0 {
        return Err(GameError::Parse {
            line: 1,
            message: "expected at least one value column `v0`".into(),
        });
    }
    for (k, name) in headers.iter().skip(1).enumerate() {
        if name != format!("v{k}") {
            return Err(GameError::Parse {
                line: 1,
                message: format!("expected value column `v{k}`, found `{name}`"),
            });
        }
    }
    // k columns answer with shape [k]; a single column is a scalar game.
    let shape = if n_values == 1 { Vec::new() } else { vec![n_values] };

    let mut n_players: Option<usize> = None;
    let mut entries: Vec<(Coalition, ValueTensor)> = Vec::new();
    let mut seen: HashMap<Coalition, u64> = HashMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| GameError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(GameError::Parse {
                line,
                message: format!(
                    "expected {} fields (coalition + {n_values} values), found {}",
                    headers.len(),
                    record.len()
                ),
            });
        }
        let bits = record.get(0).unwrap_or("");
        let coalition = Coalition::from_bitstring(bits)
            .map_err(|e| GameError::Parse { line, message: e.to_string() })?;
        match n_players {
            None => n_players = Some(coalition.width()),
            Some(n) if n != coalition.width() => {
                return Err(GameError::Parse {
                    line,
                    message: format!(
                        "bitstring width {} differs from first row's width {n}",
                        coalition.width()
                    ),
                })
            }
            Some(_) => {}
        }
        let mut values = Vec::with_capacity(n_values);
        for (k, field) in record.iter().skip(1).enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| GameError::Parse {
                line,
                message: format!("value column v{k}: cannot parse `{field}` as a number"),
            })?;
            if !value.is_finite() {
                return Err(GameError::Parse {
                    line,
                    message: format!("value column v{k}: non-finite value `{field}`"),
                });
            }
            values.push(value);
        }
        if let Some(&first_line) = seen.get(&coalition) {
            return Err(GameError::DuplicateCoalition {
                line,
                coalition: format!("{bits} (first seen on line {first_line})"),
            });
        }
        seen.insert(coalition.clone(), line);
        entries.push((coalition, ValueTensor::new(shape.clone(), values)?));
    }

    let n_players =
        n_players.ok_or_else(|| GameError::Parse { line: 1, message: "no data rows".into() })?;
    TabularGame::new(n_players, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(raw: &str) -> Result<TabularGame, GameError> {
        parse_tabular_csv(raw)
    }

    #[test]
    fn two_player_table_answers_all_coalitions() {
        let g = parse("coalition,v0\n00,0\n10,1\n01,2\n11,5\n").unwrap();
        assert_eq!(g.n_players(), 2);
        assert!(g.is_complete());
        let check = |members: &[usize], want: f64| {
            let c = Coalition::from_members(2, members.iter().copied()).unwrap();
            assert_eq!(g.evaluate(&c).unwrap().as_scalar(), Some(want));
        };
        check(&[], 0.0);
        check(&[0], 1.0);
        check(&[1], 2.0);
        check(&[0, 1], 5.0);
    }

    #[test]
    fn missing_entry_is_a_defined_error() {
        // Table without the row for player 0 alone ("10").
        let g = parse("coalition,v0\n00,0\n01,2\n11,5\n").unwrap();
        assert!(!g.is_complete());
        let missing = Coalition::from_members(2, [0]).unwrap();
        assert!(matches!(
            g.evaluate(&missing),
            Err(GameError::MissingEntry { coalition }) if coalition == "10"
        ));
    }

    #[test]
    fn nan_value_is_rejected_with_line_number() {
        let err = parse("coalition,v0\n00,0\n10,NaN\n").unwrap_err();
        match err {
            GameError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("non-finite"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_coalition_is_rejected() {
        let err = parse("coalition,v0\n00,0\n00,1\n").unwrap_err();
        assert!(matches!(err, GameError::DuplicateCoalition { line: 3, .. }));
    }

    #[test]
    fn inconsistent_value_arity_is_rejected() {
        let err = parse("coalition,v0,v1\n00,0,1\n10,2\n").unwrap_err();
        assert!(matches!(err, GameError::Parse { line: 3, .. }));
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(parse("subset,v0\n00,0\n").is_err());
        assert!(parse("coalition,value\n00,0\n").is_err());
    }

    #[test]
    fn multi_column_tables_have_vector_shape() {
        let g = parse("coalition,v0,v1,v2\n0,1,2,3\n1,4,5,6\n").unwrap();
        assert_eq!(g.output_shape(), vec![3]);
        let grand = Coalition::grand(1);
        assert_eq!(g.evaluate(&grand).unwrap().data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn from_fn_builds_complete_tables() {
        let g = TabularGame::from_fn(3, Vec::new(), |c| vec![c.count() as f64]).unwrap();
        assert!(g.is_complete());
        assert_eq!(g.len(), 8);
        let s = Coalition::from_members(3, [0, 2]).unwrap();
        assert_eq!(g.evaluate(&s).unwrap().as_scalar(), Some(2.0));
    }

    #[test]
    fn load_round_trips_through_a_file() {
        let dir = std::env::temp_dir().join(format!("msa-tab-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("table.csv");
        std::fs::write(&path, "coalition,v0\n00,0\n10,1\n01,2\n11,5\n").unwrap();
        let g = load_tabular_game(&path).unwrap();
        assert_eq!(g.len(), 4);
        std::fs::remove_dir_all(&dir).ok();
    }
}
