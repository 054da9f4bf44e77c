//! One function per subcommand. Every command writes its data products
//! plus `manifest.json` under the configured output directory and touches
//! nothing else.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use msa::analysis::{
    idc_report, interclass_similarity, lesion_sweep as run_sweep, ContributionMatrix, SweepOrder,
};
use msa::cluster::{cluster_lesion, louvain, similarity_graph, SimilarityGraph};
use msa::engine::{
    shapley_auto, shapley_exact_with_cap, shapley_sampled, CachePolicy, EngineError, SamplingMode,
    SamplingPlan, ShapleyResult,
};
use msa::mlp::{load_mlp, weight_importance_stats};

use crate::gamesrc::ResolvedGame;
use crate::manifest::{write_output, RunManifest};
use crate::svg::{render, Heatmap};
use crate::{CliError, Format, GameSourceArgs, OutputArgs, PlanArgs};

impl OutputArgs {
    fn wants(&self, format: Format) -> bool {
        self.format.is_empty() || self.format.contains(&format)
    }
}

/// Engine failures during evaluation are runtime errors (exit 3); plan
/// shape problems are configuration errors (exit 2).
fn engine_error(err: EngineError) -> CliError {
    match err {
        EngineError::Evaluation { .. }
        | EngineError::OutputShape { .. }
        | EngineError::Game(_) => CliError::runtime(err),
        other => CliError::config(other),
    }
}

enum Dispatch {
    Exact,
    ForcedSampled,
    Auto,
}

fn resolve_plan(args: &PlanArgs) -> Result<(SamplingPlan, Dispatch), CliError> {
    if args.permutations == Some(0) {
        return Err(CliError::Config("--permutations must be at least 1".into()));
    }
    let workers = match args.workers {
        Some(0) => return Err(CliError::Config("--workers must be at least 1".into())),
        Some(w) => w,
        None => match std::env::var("MSA_WORKERS") {
            Ok(raw) => raw
                .parse::<usize>()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| CliError::Config(format!("MSA_WORKERS=`{raw}` is not a positive integer")))?,
            Err(_) => std::thread::available_parallelism().map(usize::from).unwrap_or(1),
        },
    };
    let cache = match args.cache {
        Some(0) => return Err(CliError::Config("--cache must be at least 1".into())),
        Some(capacity) => CachePolicy::Lru { capacity },
        None => CachePolicy::Off,
    };
    let dispatch = if args.exact {
        Dispatch::Exact
    } else if args.permutations.is_some() {
        Dispatch::ForcedSampled
    } else {
        Dispatch::Auto
    };
    let plan = SamplingPlan {
        mode: if args.exact { SamplingMode::Exact } else { SamplingMode::MonteCarlo },
        permutations: args.permutations.unwrap_or(1000),
        seed: args.seed,
        workers,
        exact_cap: args.exact_cap,
        cache,
    };
    Ok((plan, dispatch))
}

fn load_result(path: &Path) -> Result<ShapleyResult, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    ShapleyResult::from_json_str(&raw)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_contributions(path: &Path) -> Result<ContributionMatrix, CliError> {
    ContributionMatrix::load_csv(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn attribute(
    source: GameSourceArgs,
    plan_args: PlanArgs,
    output: OutputArgs,
) -> Result<(), CliError> {
    let started = Instant::now();
    let ResolvedGame { game, inputs, source } = source.resolve()?;
    let (plan, dispatch) = resolve_plan(&plan_args)?;

    let result = match dispatch {
        Dispatch::Exact => shapley_exact_with_cap(game.as_ref(), plan.exact_cap),
        Dispatch::ForcedSampled => shapley_sampled(game.as_ref(), &plan),
        Dispatch::Auto => shapley_auto(game.as_ref(), &plan),
    }
    .map_err(engine_error)?;

    if output.wants(Format::Json) {
        write_output(&output.out, "result.json", result.to_json_string().as_bytes())?;
    }
    if output.wants(Format::Csv) {
        let mut buf = Vec::new();
        result.write_modes_csv(&mut buf).map_err(CliError::runtime)?;
        write_output(&output.out, "modes.csv", &buf)?;
    }

    let mut manifest = RunManifest::new(
        "attribute",
        json!({
            "source": source,
            "game": game.spec(),
            "mode": match dispatch {
                Dispatch::Exact => "exact",
                Dispatch::ForcedSampled => "monte_carlo",
                Dispatch::Auto => "auto",
            },
            "permutations": result.permutations_used,
            "seed": plan.seed,
            "workers": plan.workers,
            "exact_cap": plan.exact_cap,
            "cache": plan_args.cache,
            "cache_hits": result.cache_hits,
            "out": output.out,
        }),
    );
    manifest.add_inputs(&inputs)?;
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.evaluations = result.evaluations;
    manifest.write(&output.out)
}

pub fn idc(contributions: PathBuf, output: OutputArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let matrix = load_contributions(&contributions)?;
    let report = idc_report(&matrix).map_err(CliError::config)?;

    if output.wants(Format::Csv) {
        let mut csv = String::from("function,m,h\n");
        for (i, label) in report.function_labels.iter().enumerate() {
            csv.push_str(&format!("{label},{},{}\n", report.per_function[i], report.entropies[i]));
        }
        write_output(&output.out, "idc.csv", csv.as_bytes())?;
    }
    if output.wants(Format::Json) {
        let doc = json!({
            "functions": report.function_labels,
            "m": report.per_function,
            "h": report.entropies,
            "h_max": report.h_max,
        });
        write_output(
            &output.out,
            "idc.json",
            serde_json::to_string_pretty(&doc).expect("json").as_bytes(),
        )?;
    }

    let mut manifest = RunManifest::new(
        "idc",
        json!({ "contributions": contributions, "out": output.out }),
    );
    manifest.add_input(&contributions)?;
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.write(&output.out)
}

pub fn similarity(contributions: PathBuf, output: OutputArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let matrix = load_contributions(&contributions)?;
    let sim = interclass_similarity(&matrix).map_err(CliError::config)?;

    if output.wants(Format::Csv) {
        let mut buf = Vec::new();
        sim.write_csv(&mut buf).map_err(CliError::runtime)?;
        write_output(&output.out, "similarity.csv", &buf)?;
    }
    if output.wants(Format::Json) {
        let n = sim.n();
        let rows: Vec<Vec<f64>> =
            (0..n).map(|a| (0..n).map(|b| sim.value(a, b)).collect()).collect();
        let doc = json!({
            "labels": sim.labels,
            "values": rows,
            "zero_variance": sim.zero_variance,
        });
        write_output(
            &output.out,
            "similarity.json",
            serde_json::to_string_pretty(&doc).expect("json").as_bytes(),
        )?;
    }

    let mut manifest = RunManifest::new(
        "similarity",
        json!({ "contributions": contributions, "out": output.out }),
    );
    manifest.add_input(&contributions)?;
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.write(&output.out)
}

#[allow(clippy::too_many_arguments)]
pub fn cluster(
    result: Option<PathBuf>,
    graph_path: Option<PathBuf>,
    seed: u64,
    resolution: f64,
    threshold: f64,
    source: GameSourceArgs,
    output: OutputArgs,
) -> Result<(), CliError> {
    let started = Instant::now();
    let mut inputs = Vec::new();
    let (graph, graph_source) = match (&result, &graph_path) {
        (Some(path), None) => {
            let result = load_result(path)?;
            inputs.push(path.clone());
            let mut graph = similarity_graph(&result.modes).map_err(CliError::config)?;
            if threshold > 0.0 {
                graph.apply_threshold(threshold);
            }
            (graph, format!("result:{}", path.display()))
        }
        (None, Some(path)) => {
            let mut graph = SimilarityGraph::load_edge_csv(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            inputs.push(path.clone());
            if threshold > 0.0 {
                graph.apply_threshold(threshold);
            }
            (graph, format!("graph:{}", path.display()))
        }
        _ => {
            return Err(CliError::Config(
                "cluster needs exactly one of --result or --graph".into(),
            ))
        }
    };

    let assignment = louvain(&graph, seed, resolution).map_err(CliError::config)?;

    if output.wants(Format::Csv) && result.is_some() {
        // The derived graph is a product worth keeping; an input graph is
        // already on disk.
        let mut buf = Vec::new();
        graph.write_edge_csv(&mut buf).map_err(CliError::runtime)?;
        write_output(&output.out, "graph.csv", &buf)?;
    }
    if output.wants(Format::Json) {
        let doc = json!({
            "labels": assignment.labels,
            "modularity": assignment.modularity,
            "seed": seed,
            "resolution": resolution,
        });
        write_output(
            &output.out,
            "clusters.json",
            serde_json::to_string_pretty(&doc).expect("json").as_bytes(),
        )?;
    }

    let mut evaluations = 0u64;
    if !source.is_empty() {
        let resolved = source.resolve()?;
        if resolved.game.n_players() != graph.n() {
            return Err(CliError::Config(format!(
                "game has {} players but the graph has {} nodes",
                resolved.game.n_players(),
                graph.n()
            )));
        }
        inputs.extend(resolved.inputs.iter().cloned());
        let mut csv = String::from("community,size,values\n");
        for community in 0..assignment.n_communities() {
            let members = assignment.members(community);
            let value = cluster_lesion(resolved.game.as_ref(), &assignment, community)
                .map_err(CliError::runtime)?;
            evaluations += 1;
            let values: Vec<String> = value.data().iter().map(f64::to_string).collect();
            csv.push_str(&format!("{community},{},{}\n", members.len(), values.join(" ")));
        }
        if output.wants(Format::Csv) {
            write_output(&output.out, "cluster_lesions.csv", csv.as_bytes())?;
        }
    }

    let mut manifest = RunManifest::new(
        "cluster",
        json!({
            "source": graph_source,
            "seed": seed,
            "resolution": resolution,
            "threshold": threshold,
            "communities": assignment.n_communities(),
            "modularity": assignment.modularity,
            "out": output.out,
        }),
    );
    manifest.add_inputs(&inputs)?;
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.evaluations = evaluations;
    manifest.write(&output.out)
}

pub fn lesion_sweep(
    source: GameSourceArgs,
    result_path: PathBuf,
    element: Option<usize>,
    ks: Vec<usize>,
    order: SweepOrder,
    output: OutputArgs,
) -> Result<(), CliError> {
    let started = Instant::now();
    let ResolvedGame { game, inputs, source } = source.resolve()?;
    let result = load_result(&result_path)?;
    let element = element.unwrap_or_else(|| result.n_elements().saturating_sub(1));

    let sweep = run_sweep(game.as_ref(), &result, element, order, &ks).map_err(|e| match e {
        msa::analysis::AnalysisError::Game(_) => CliError::runtime(e),
        other => CliError::config(other),
    })?;

    if output.wants(Format::Csv) {
        let elems = result.n_elements();
        let mut csv = String::from("k");
        for j in 0..elems {
            csv.push_str(&format!(",v{j}"));
        }
        csv.push('\n');
        for (k, value) in &sweep {
            csv.push_str(&k.to_string());
            for v in value.data() {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
        write_output(&output.out, "sweep.csv", csv.as_bytes())?;
    }
    if output.wants(Format::Json) {
        let entries: Vec<serde_json::Value> =
            sweep.iter().map(|(k, v)| json!({ "k": k, "values": v.data() })).collect();
        let doc = json!({
            "element": element,
            "order": match order {
                SweepOrder::TopFirst => "top_first",
                SweepOrder::BottomFirst => "bottom_first",
            },
            "sweep": entries,
        });
        write_output(
            &output.out,
            "sweep.json",
            serde_json::to_string_pretty(&doc).expect("json").as_bytes(),
        )?;
    }

    let mut manifest = RunManifest::new(
        "lesion-sweep",
        json!({
            "source": source,
            "result": result_path,
            "element": element,
            "ks": ks,
            "order": match order {
                SweepOrder::TopFirst => "top_first",
                SweepOrder::BottomFirst => "bottom_first",
            },
            "out": output.out,
        }),
    );
    let mut all_inputs = inputs;
    all_inputs.push(result_path);
    manifest.add_inputs(&all_inputs)?;
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.evaluations = ks.len() as u64;
    manifest.write(&output.out)
}

pub fn weight_importance(
    weights: PathBuf,
    result_path: PathBuf,
    output: OutputArgs,
) -> Result<(), CliError> {
    let started = Instant::now();
    let model =
        load_mlp(&weights).map_err(|e| CliError::Config(format!("{}: {e}", weights.display())))?;
    let result = load_result(&result_path)?;
    let stats = weight_importance_stats(&model, &result).map_err(CliError::config)?;

    if output.wants(Format::Csv) {
        let mut csv = String::from("neuron,mean_abs_weight,shapley_overall\n");
        for record in &stats.per_neuron {
            csv.push_str(&format!(
                "{},{},{}\n",
                record.neuron, record.mean_abs_weight, record.shapley_overall
            ));
        }
        write_output(&output.out, "weight_importance.csv", csv.as_bytes())?;
    }
    if output.wants(Format::Json) {
        write_output(
            &output.out,
            "weight_importance.json",
            serde_json::to_string_pretty(&stats).expect("json").as_bytes(),
        )?;
    }

    let mut manifest = RunManifest::new(
        "weight-importance",
        json!({
            "weights": weights,
            "result": result_path,
            "pearson_r": stats.pearson_r,
            "zero_variance": stats.zero_variance,
            "out": output.out,
        }),
    );
    manifest.add_inputs(&[weights, result_path])?;
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.write(&output.out)
}

/// Parse a similarity CSV written by `similarity` back into labels and a
/// row-major square matrix.
fn read_similarity_csv(path: &Path) -> Result<(Vec<String>, Vec<f64>), CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut lines = raw.lines();
    let header =
        lines.next().ok_or_else(|| CliError::Config(format!("{}: empty file", path.display())))?;
    let labels: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    if labels.is_empty() {
        return Err(CliError::Config(format!(
            "{}: expected header `function,<labels...>`",
            path.display()
        )));
    }
    let mut values = Vec::with_capacity(labels.len() * labels.len());
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != labels.len() + 1 {
            return Err(CliError::Config(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                i + 2,
                fields.len(),
                labels.len() + 1
            )));
        }
        for field in &fields[1..] {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Config(format!(
                    "{}: row {}: cannot parse `{field}` as a number",
                    path.display(),
                    i + 2
                ))
            })?;
            values.push(v);
        }
    }
    if values.len() != labels.len() * labels.len() {
        return Err(CliError::Config(format!(
            "{}: expected a {}x{} matrix",
            path.display(),
            labels.len(),
            labels.len()
        )));
    }
    Ok((labels, values))
}

pub fn report(
    contributions: Option<PathBuf>,
    similarity: Option<PathBuf>,
    output: OutputArgs,
) -> Result<(), CliError> {
    let started = Instant::now();
    if contributions.is_none() && similarity.is_none() {
        return Err(CliError::Config(
            "report needs --contributions and/or --similarity".into(),
        ));
    }
    let mut inputs = Vec::new();

    if let Some(path) = &contributions {
        let matrix = load_contributions(path)?;
        let values: Vec<f64> = (0..matrix.n_players())
            .flat_map(|i| matrix.row(i).to_vec())
            .collect();
        let svg = render(&Heatmap {
            title: "per-player contributions",
            row_labels: &matrix.player_labels,
            col_labels: &matrix.function_labels,
            values: &values,
        });
        if output.wants(Format::Svg) {
            write_output(&output.out, "contributions.svg", svg.as_bytes())?;
        }
        inputs.push(path.clone());
    }

    if let Some(path) = &similarity {
        let (labels, values) = read_similarity_csv(path)?;
        let svg = render(&Heatmap {
            title: "inter-function similarity",
            row_labels: &labels,
            col_labels: &labels,
            values: &values,
        });
        if output.wants(Format::Svg) {
            write_output(&output.out, "similarity.svg", svg.as_bytes())?;
        }
        inputs.push(path.clone());
    }

    let mut manifest = RunManifest::new(
        "report",
        json!({
            "contributions": contributions,
            "similarity": similarity,
            "out": output.out,
        }),
    );
    manifest.add_inputs(&inputs)?;
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.write(&output.out)
}
