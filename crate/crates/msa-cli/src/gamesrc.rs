//! Resolving the `--game` / `--table` / `--weights --dataset` flags into a
//! boxed game plus the list of input files that fed it.

use std::path::PathBuf;

use msa::game::{
    load_tabular_game, make_reference_game, Game, GloveGame, ReferenceKind,
};
use msa::mlp::{accuracy_game, load_dataset, load_mlp};

use crate::{CliError, GameSourceArgs};

pub struct ResolvedGame {
    pub game: Box<dyn Game>,
    pub inputs: Vec<PathBuf>,
    pub source: String,
}

impl GameSourceArgs {
    pub fn is_empty(&self) -> bool {
        self.game.is_none()
            && self.table.is_none()
            && self.weights.is_none()
            && self.dataset.is_none()
    }

    pub fn resolve(&self) -> Result<ResolvedGame, CliError> {
        let chosen = [
            self.game.is_some(),
            self.table.is_some(),
            self.weights.is_some() || self.dataset.is_some(),
        ]
        .iter()
        .filter(|&&c| c)
        .count();
        if chosen != 1 {
            return Err(CliError::Config(
                "exactly one game source is required: --game, --table, or --weights with --dataset"
                    .into(),
            ));
        }

        if let Some(spec) = &self.game {
            let game = parse_builtin(spec)?;
            return Ok(ResolvedGame { game, inputs: Vec::new(), source: format!("builtin:{spec}") });
        }
        if let Some(path) = &self.table {
            let game = load_tabular_game(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            return Ok(ResolvedGame {
                game: Box::new(game),
                inputs: vec![path.clone()],
                source: format!("table:{}", path.display()),
            });
        }
        let (weights, dataset) = match (&self.weights, &self.dataset) {
            (Some(w), Some(d)) => (w, d),
            _ => {
                return Err(CliError::Config(
                    "--weights and --dataset must be given together".into(),
                ))
            }
        };
        let model = load_mlp(weights)
            .map_err(|e| CliError::Config(format!("{}: {e}", weights.display())))?;
        let data = load_dataset(dataset)
            .map_err(|e| CliError::Config(format!("{}: {e}", dataset.display())))?;
        let game = accuracy_game(model, data)
            .map_err(|e| CliError::Config(format!("accuracy game: {e}")))?;
        Ok(ResolvedGame {
            game: Box::new(game),
            inputs: vec![weights.clone(), dataset.clone()],
            source: format!("mlp:{}+{}", weights.display(), dataset.display()),
        })
    }
}

/// `glove`, `glove:L0,L1/R0`, `additive:w0,w1,...`, `majority:quota@n`.
fn parse_builtin(spec: &str) -> Result<Box<dyn Game>, CliError> {
    let (kind, params) = match spec.split_once(':') {
        Some((kind, params)) => (kind, Some(params)),
        None => (spec, None),
    };
    match kind {
        "glove" => match params {
            None => Ok(Box::new(GloveGame::canonical())),
            Some(params) => {
                let (left, right) = params.split_once('/').ok_or_else(|| {
                    CliError::Config(format!(
                        "glove spec `{spec}` must look like glove:0,1/2 (left/right)"
                    ))
                })?;
                let parse_side = |side: &str| -> Result<Vec<usize>, CliError> {
                    if side.trim().is_empty() {
                        return Ok(Vec::new());
                    }
                    side.split(',')
                        .map(|tok| {
                            tok.trim().parse::<usize>().map_err(|_| {
                                CliError::Config(format!("glove spec: invalid player `{tok}`"))
                            })
                        })
                        .collect()
                };
                let kind =
                    ReferenceKind::Glove { left: parse_side(left)?, right: parse_side(right)? };
                make_reference_game(kind).map_err(CliError::config)
            }
        },
        "additive" => {
            let params = params.ok_or_else(|| {
                CliError::Config("additive needs weights, e.g. additive:2,5,3".into())
            })?;
            let weights = params
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| {
                        CliError::Config(format!("additive spec: invalid weight `{tok}`"))
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            make_reference_game(ReferenceKind::Additive(weights)).map_err(CliError::config)
        }
        "majority" => {
            let params = params.ok_or_else(|| {
                CliError::Config("majority needs quota@n, e.g. majority:2@3".into())
            })?;
            let (quota, n) = params.split_once('@').ok_or_else(|| {
                CliError::Config(format!("majority spec `{spec}` must look like majority:2@3"))
            })?;
            let quota = quota.trim().parse::<usize>().map_err(|_| {
                CliError::Config(format!("majority spec: invalid quota `{quota}`"))
            })?;
            let n = n
                .trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("majority spec: invalid n `{n}`")))?;
            make_reference_game(ReferenceKind::Majority { n_players: n, quota })
                .map_err(CliError::config)
        }
        other => Err(CliError::Config(format!(
            "unknown builtin game `{other}` (expected glove, additive or majority)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_specs_parse() {
        assert_eq!(parse_builtin("glove").unwrap().n_players(), 3);
        assert_eq!(parse_builtin("glove:0,1,2/3,4").unwrap().n_players(), 5);
        assert_eq!(parse_builtin("additive:2,5,3").unwrap().n_players(), 3);
        assert_eq!(parse_builtin("majority:2@5").unwrap().n_players(), 5);
        assert!(parse_builtin("glove:0,1").is_err());
        assert!(parse_builtin("additive:2,x").is_err());
        assert!(parse_builtin("majority:9@3").is_err());
        assert!(parse_builtin("poker").is_err());
    }
}
