//! Grouping players by contribution similarity: Pearson correlations of
//! their (flattened) contribution tensors form an absolute-value adjacency
//! matrix, and Louvain community detection partitions the resulting
//! weighted graph.

use std::collections::BTreeMap;
use std::io::{self, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::pearson;
use crate::game::{Coalition, Game, GameError, ValueTensor};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least {needed} {what}, got {got}")]
    TooFew { what: &'static str, needed: usize, got: usize },
    #[error("tensor {index} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch { index: usize, expected: Vec<usize>, got: Vec<usize> },
    #[error("graph has no positive edge weight; nothing to cluster")]
    AllZeroGraph,
    #[error("resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("community {community} out of range; assignment has {communities} communities")]
    BadCommunity { community: usize, communities: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Weighted undirected graph over players: symmetric non-negative weights
/// in [0, 1] with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityGraph {
    n: usize,
    weights: Vec<f64>, // row-major n × n
    /// Players whose contribution tensor had zero variance; they carry
    /// weight 0 to every other node.
    pub zero_variance: Vec<bool>,
}

impl SimilarityGraph {
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self, ClusterError> {
        if n < 2 {
            return Err(ClusterError::TooFew { what: "nodes", needed: 2, got: n });
        }
        if weights.len() != n * n {
            return Err(ClusterError::InvalidGraph(format!(
                "expected {} weights for {n} nodes, got {}",
                n * n,
                weights.len()
            )));
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(ClusterError::InvalidGraph(format!("nonzero diagonal at node {i}")));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if !w.is_finite() || !(0.0..=1.0).contains(&w) {
                    return Err(ClusterError::InvalidGraph(format!(
                        "weight ({i},{j}) = {w} outside [0, 1]"
                    )));
                }
                if w != weights[j * n + i] {
                    return Err(ClusterError::InvalidGraph(format!(
                        "asymmetric weights at ({i},{j})"
                    )));
                }
            }
        }
        Ok(SimilarityGraph { n, weights, zero_variance: vec![false; n] })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Zero out edges below `threshold` (default pipeline applies none).
    pub fn apply_threshold(&mut self, threshold: f64) {
        for w in &mut self.weights {
            if *w < threshold {
                *w = 0.0;
            }
        }
    }

    /// Edge list CSV `i,j,weight` with one row per undirected edge (i < j,
    /// zero-weight edges omitted).
    pub fn write_edge_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "weight"])?;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let weight = self.weight(i, j);
                if weight > 0.0 {
                    w.write_record(&[i.to_string(), j.to_string(), weight.to_string()])?;
                }
            }
        }
        w.flush()
    }

    pub fn read_edge_csv<R: Read>(reader: R) -> Result<Self, ClusterError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = r
            .headers()
            .map_err(|e| ClusterError::Parse { line: 1, message: e.to_string() })?
            .clone();
        if headers.iter().collect::<Vec<_>>() != vec!["i", "j", "weight"] {
            return Err(ClusterError::Parse {
                line: 1,
                message: "expected header `i,j,weight`".into(),
            });
        }
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        let mut max_node = 0usize;
        for record in r.records() {
            let record = record.map_err(|e| ClusterError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |k: usize| record.get(k).unwrap_or("").trim().to_string();
            let parse_node = |s: String| {
                s.parse::<usize>().map_err(|_| ClusterError::Parse {
                    line,
                    message: format!("cannot parse node index `{s}`"),
                })
            };
            let i = parse_node(field(0))?;
            let j = parse_node(field(1))?;
            let weight: f64 = field(2).parse().map_err(|_| ClusterError::Parse {
                line,
                message: format!("cannot parse weight `{}`", field(2)),
            })?;
            if i == j {
                return Err(ClusterError::Parse {
                    line,
                    message: format!("self-loop on node {i}; the diagonal must stay zero"),
                });
            }
            if !weight.is_finite() || !(0.0..=1.0).contains(&weight) {
                return Err(ClusterError::Parse {
                    line,
                    message: format!("weight {weight} outside [0, 1]"),
                });
            }
            max_node = max_node.max(i).max(j);
            edges.push((i, j, weight));
        }
        if edges.is_empty() {
            return Err(ClusterError::Parse { line: 1, message: "no edges".into() });
        }
        let n = max_node + 1;
        let mut weights = vec![0.0; n * n];
        for (i, j, w) in edges {
            if weights[i * n + j] != 0.0 {
                return Err(ClusterError::InvalidGraph(format!("duplicate edge ({i},{j})")));
            }
            weights[i * n + j] = w;
            weights[j * n + i] = w;
        }
        SimilarityGraph::from_weights(n, weights)
    }

    pub fn load_edge_csv(path: impl AsRef<Path>) -> Result<Self, ClusterError> {
        let file = std::fs::File::open(path)?;
        SimilarityGraph::read_edge_csv(file)
    }
}

/// Build the similarity graph over players from their contribution
/// tensors: edge weight (i, j) is `|pearson(flat_i, flat_j)|`. A tensor
/// with zero variance gets weight 0 to all others and is flagged.
pub fn similarity_graph(modes: &[ValueTensor]) -> Result<SimilarityGraph, ClusterError> {
    let n = modes.len();
    if n < 2 {
        return Err(ClusterError::TooFew { what: "tensors", needed: 2, got: n });
    }
    let shape = modes[0].shape().to_vec();
    for (index, mode) in modes.iter().enumerate().skip(1) {
        if mode.shape() != shape {
            return Err(ClusterError::ShapeMismatch {
                index,
                expected: shape,
                got: mode.shape().to_vec(),
            });
        }
    }
    let mut zero_variance = vec![false; n];
    for (i, flag) in zero_variance.iter_mut().enumerate() {
        let x = modes[i].data();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        *flag = x.iter().all(|&v| v == mean);
    }
    // Pairs are independent, so the row loop parallelizes with each row
    // written at a fixed offset; the output is the same at any width.
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            for j in (i + 1)..n {
                row[j] = match pearson(modes[i].data(), modes[j].data()) {
                    Some(r) => r.abs().clamp(0.0, 1.0),
                    None => 0.0,
                };
            }
            row
        })
        .collect();
    let mut weights = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        for j in (i + 1)..n {
            weights[i * n + j] = row[j];
            weights[j * n + i] = row[j];
        }
    }
    let mut graph = SimilarityGraph::from_weights(n, weights)?;
    graph.zero_variance = zero_variance;
    Ok(graph)
}

/// A partition of the graph's nodes into communities labeled 0..k.
#[derive(Clone, Debug, PartialEq)]
pub struct CommunityAssignment {
    /// Community id per node; ids are contiguous from 0.
    pub labels: Vec<usize>,
    /// Modularity Q of this partition on the input graph.
    pub modularity: f64,
}

impl CommunityAssignment {
    pub fn n_communities(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn members(&self, community: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == community).collect()
    }
}

/// Weighted modularity of a partition: for each community,
/// `Σ_in/(2m) − γ·(Σ_tot/(2m))²`, where `Σ_in` counts ordered intra-
/// community pairs and `Σ_tot` sums member degrees.
pub fn modularity(graph: &SimilarityGraph, labels: &[usize], resolution: f64) -> f64 {
    let n = graph.n();
    assert_eq!(labels.len(), n, "one label per node");
    let degrees: Vec<f64> = (0..n).map(|i| (0..n).map(|j| graph.weight(i, j)).sum()).collect();
    let two_m: f64 = degrees.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let n_comms = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut internal = vec![0.0; n_comms];
    let mut total_degree = vec![0.0; n_comms];
    for i in 0..n {
        total_degree[labels[i]] += degrees[i];
        for j in 0..n {
            if labels[i] == labels[j] {
                internal[labels[i]] += graph.weight(i, j);
            }
        }
    }
    (0..n_comms)
        .map(|c| internal[c] / two_m - resolution * (total_degree[c] / two_m).powi(2))
        .sum()
}

/// Working graph for the aggregation phases. `adj[u][v]` holds the edge
/// weight for u ≠ v and twice the self-loop weight for u = v, so a node's
/// degree is simply the sum of its adjacency row.
struct LevelGraph {
    n: usize,
    adj: Vec<BTreeMap<usize, f64>>,
    two_m: f64,
    /// Original node ids carried through aggregation.
    carried: Vec<Vec<usize>>,
}

impl LevelGraph {
    fn degree(&self, node: usize) -> f64 {
        self.adj[node].values().sum()
    }
}

/// Two-phase Louvain on the weighted graph: local moves that strictly
/// increase modularity (ties keep the current community), then aggregation
/// of communities into nodes, repeated to a fixed point. Node visit order
/// is reshuffled every pass from a ChaCha8 stream seeded by `seed`, so the
/// outcome is a deterministic function of (graph, seed, resolution).
pub fn louvain(
    graph: &SimilarityGraph,
    seed: u64,
    resolution: f64,
) -> Result<CommunityAssignment, ClusterError> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(ClusterError::BadResolution(resolution));
    }
    let n = graph.n();
    let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut two_m = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let w = graph.weight(i, j);
            if w > 0.0 {
                adj[i].insert(j, w);
                adj[j].insert(i, w);
                two_m += 2.0 * w;
            }
        }
    }
    if two_m == 0.0 {
        return Err(ClusterError::AllZeroGraph);
    }
    let mut level = LevelGraph { n, adj, two_m, carried: (0..n).map(|i| vec![i]).collect() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut final_labels: Vec<usize> = (0..n).collect();

    loop {
        let node_to_comm = local_moves(&level, resolution, &mut rng);
        let moved = node_to_comm.iter().enumerate().any(|(i, &c)| c != i);
        if !moved {
            break;
        }
        // Relabel communities contiguously in ascending id order.
        let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in &node_to_comm {
            let next = remap.len();
            remap.entry(c).or_insert(next);
        }
        let n_comms = remap.len();

        let mut carried = vec![Vec::new(); n_comms];
        for (node, &c) in node_to_comm.iter().enumerate() {
            carried[remap[&c]].extend(level.carried[node].iter().copied());
        }
        for (new_comm, members) in carried.iter().enumerate() {
            for &original in members {
                final_labels[original] = new_comm;
            }
        }
        if n_comms == level.n {
            break;
        }

        // Aggregate: communities become nodes; intra-community weight
        // appears as doubled self-loop weight.
        let mut new_adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_comms];
        for node in 0..level.n {
            let cu = remap[&node_to_comm[node]];
            for (&neighbor, &w) in &level.adj[node] {
                let cv = remap[&node_to_comm[neighbor]];
                *new_adj[cu].entry(cv).or_insert(0.0) += w;
            }
        }
        level = LevelGraph { n: n_comms, adj: new_adj, two_m: level.two_m, carried };
    }

    // Canonicalize labels by first appearance over ascending node index.
    let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
    let labels: Vec<usize> = final_labels
        .iter()
        .map(|&c| {
            let next = remap.len();
            *remap.entry(c).or_insert(next)
        })
        .collect();
    let q = modularity(graph, &labels, resolution);
    Ok(CommunityAssignment { labels, modularity: q })
}

/// One level of local moving. Returns the community of each node; starts
/// from singletons. Only strictly positive modularity gains move a node,
/// which both breaks ties toward staying and guarantees termination.
fn local_moves(graph: &LevelGraph, resolution: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = graph.n;
    let two_m = graph.two_m;
    let mut node_to_comm: Vec<usize> = (0..n).collect();
    let degrees: Vec<f64> = (0..n).map(|i| graph.degree(i)).collect();
    let mut community_degree = degrees.clone();

    let mut order: Vec<usize> = (0..n).collect();
    loop {
        order.shuffle(rng);
        let mut moves = 0usize;
        for &node in &order {
            let current = node_to_comm[node];
            let k_i = degrees[node];
            community_degree[current] -= k_i;

            // Weight from `node` to each neighboring community, self-loop
            // excluded; BTreeMap keeps candidate order deterministic.
            let mut to_comm: BTreeMap<usize, f64> = BTreeMap::new();
            for (&neighbor, &w) in &graph.adj[node] {
                if neighbor != node {
                    *to_comm.entry(node_to_comm[neighbor]).or_insert(0.0) += w;
                }
            }

            let w_current = to_comm.get(&current).copied().unwrap_or(0.0);
            let removal = -(w_current / two_m)
                + resolution * community_degree[current] * k_i / (two_m * two_m);

            let mut best = current;
            let mut best_gain = 0.0;
            for (&candidate, &w_cand) in &to_comm {
                if candidate == current {
                    continue;
                }
                let addition = w_cand / two_m
                    - resolution * community_degree[candidate] * k_i / (two_m * two_m);
                let gain = removal + addition;
                if gain > best_gain {
                    best_gain = gain;
                    best = candidate;
                }
            }

            community_degree[best] += k_i;
            if best != current {
                node_to_comm[node] = best;
                moves += 1;
            }
        }
        if moves == 0 {
            break;
        }
    }
    node_to_comm
}

/// Evaluate the game with every member of one community lesioned at once.
pub fn cluster_lesion(
    game: &dyn Game,
    assignment: &CommunityAssignment,
    community: usize,
) -> Result<ValueTensor, ClusterError> {
    let communities = assignment.n_communities();
    if community >= communities {
        return Err(ClusterError::BadCommunity { community, communities });
    }
    lesion_players(game, &assignment.members(community))
}

/// Evaluate the game with the given players lesioned: an empty selection
/// is the grand coalition, all players the empty one.
pub fn lesion_players(game: &dyn Game, players: &[usize]) -> Result<ValueTensor, ClusterError> {
    let mut coalition = Coalition::grand(game.n_players());
    for &player in players {
        if player >= game.n_players() {
            return Err(ClusterError::InvalidGraph(format!(
                "player {player} out of range for a {}-player game",
                game.n_players()
            )));
        }
        coalition.remove(player);
    }
    Ok(game.evaluate(&coalition)?)
}

/// The eight-node fixture of two unit-weight 4-cliques joined by a single
/// weak edge (3, 4); Louvain splits it exactly into the two cliques.
pub fn two_cliques_fixture() -> SimilarityGraph {
    let n = 8;
    let mut weights = vec![0.0; n * n];
    let mut set = |i: usize, j: usize, w: f64| {
        weights[i * n + j] = w;
        weights[j * n + i] = w;
    };
    for clique in [0usize, 4] {
        for a in clique..clique + 4 {
            for b in (a + 1)..clique + 4 {
                set(a, b, 1.0);
            }
        }
    }
    set(3, 4, 0.1);
    SimilarityGraph::from_weights(n, weights).expect("fixture is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::AdditiveGame;

    fn tensor(data: Vec<f64>) -> ValueTensor {
        let len = data.len();
        ValueTensor::new(vec![len], data).unwrap()
    }

    #[test]
    fn similarity_graph_scaled_and_negated_tensors() {
        let base = tensor(vec![1.0, 2.0, 4.0]);
        let doubled = tensor(vec![2.0, 4.0, 8.0]);
        let negated = tensor(vec![-1.0, -2.0, -4.0]);
        let g = similarity_graph(&[base, doubled, negated]).unwrap();
        assert!((g.weight(0, 1) - 1.0).abs() < 1e-12);
        assert!((g.weight(0, 2) - 1.0).abs() < 1e-12);
        assert_eq!(g.weight(0, 0), 0.0);
    }

    #[test]
    fn similarity_graph_flags_constant_tensors() {
        let constant = tensor(vec![3.0, 3.0, 3.0]);
        let varying = tensor(vec![1.0, 2.0, 3.0]);
        let g = similarity_graph(&[constant, varying]).unwrap();
        assert_eq!(g.weight(0, 1), 0.0);
        assert_eq!(g.zero_variance, vec![true, false]);
    }

    #[test]
    fn similarity_graph_rejects_shape_mismatch_and_single_tensor() {
        let a = tensor(vec![1.0, 2.0]);
        let b = ValueTensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            similarity_graph(&[a.clone(), b]),
            Err(ClusterError::ShapeMismatch { index: 1, .. })
        ));
        assert!(matches!(similarity_graph(&[a]), Err(ClusterError::TooFew { .. })));
    }

    #[test]
    fn louvain_recovers_two_cliques() {
        let g = two_cliques_fixture();
        for seed in 0..10 {
            let assignment = louvain(&g, seed, 1.0).unwrap();
            assert_eq!(assignment.n_communities(), 2, "seed {seed}");
            assert_eq!(assignment.members(assignment.labels[0]), vec![0, 1, 2, 3]);
            assert_eq!(assignment.members(assignment.labels[4]), vec![4, 5, 6, 7]);
            assert!(assignment.modularity > 0.0);
        }
    }

    #[test]
    fn louvain_merges_uniform_complete_graph() {
        // Every split of a uniform complete graph has Q < 0; merging into a
        // single community (Q = 0) is the optimum.
        let n = 6;
        let mut weights = vec![1.0; n * n];
        for i in 0..n {
            weights[i * n + i] = 0.0;
        }
        let g = SimilarityGraph::from_weights(n, weights).unwrap();
        let assignment = louvain(&g, 0, 1.0).unwrap();
        assert_eq!(assignment.n_communities(), 1);
        assert!(assignment.modularity.abs() < 1e-12);
    }

    #[test]
    fn louvain_never_spans_disconnected_components() {
        let n = 6;
        let mut weights = vec![0.0; n * n];
        let mut set = |i: usize, j: usize| {
            weights[i * n + j] = 1.0;
            weights[j * n + i] = 1.0;
        };
        set(0, 1);
        set(1, 2);
        set(0, 2);
        set(3, 4);
        set(4, 5);
        set(3, 5);
        let g = SimilarityGraph::from_weights(n, weights).unwrap();
        for seed in 0..5 {
            let assignment = louvain(&g, seed, 1.0).unwrap();
            for i in 0..3 {
                for j in 3..6 {
                    assert_ne!(assignment.labels[i], assignment.labels[j]);
                }
            }
        }
    }

    #[test]
    fn louvain_rejects_zero_graph_and_bad_resolution() {
        let g = SimilarityGraph::from_weights(2, vec![0.0; 4]).unwrap();
        assert!(matches!(louvain(&g, 0, 1.0), Err(ClusterError::AllZeroGraph)));
        let g2 = two_cliques_fixture();
        assert!(matches!(louvain(&g2, 0, 0.0), Err(ClusterError::BadResolution(_))));
    }

    #[test]
    fn louvain_is_deterministic_per_seed() {
        let g = two_cliques_fixture();
        let a = louvain(&g, 42, 1.0).unwrap();
        let b = louvain(&g, 42, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cluster_lesion_examples() {
        let game = AdditiveGame::new(vec![2.0, 5.0, 3.0]).unwrap();
        let assignment = CommunityAssignment { labels: vec![0, 1, 0], modularity: 0.0 };
        // Lesion community 0 = players {0, 2}: remaining weight 5.
        let v = cluster_lesion(&game, &assignment, 0).unwrap();
        assert_eq!(v.as_scalar(), Some(5.0));
        assert!(matches!(
            cluster_lesion(&game, &assignment, 2),
            Err(ClusterError::BadCommunity { community: 2, communities: 2 })
        ));
        // Empty selection keeps the grand coalition; all players clear it.
        assert_eq!(lesion_players(&game, &[]).unwrap().as_scalar(), Some(10.0));
        assert_eq!(lesion_players(&game, &[0, 1, 2]).unwrap().as_scalar(), Some(0.0));
    }

    #[test]
    fn edge_csv_round_trip() {
        let g = two_cliques_fixture();
        let mut buf = Vec::new();
        g.write_edge_csv(&mut buf).unwrap();
        let back = SimilarityGraph::read_edge_csv(buf.as_slice()).unwrap();
        assert_eq!(back.n(), g.n());
        for i in 0..g.n() {
            for j in 0..g.n() {
                assert_eq!(back.weight(i, j), g.weight(i, j));
            }
        }
    }

    #[test]
    fn edge_csv_rejects_self_loops_and_bad_weights() {
        assert!(SimilarityGraph::read_edge_csv("i,j,weight\n1,1,0.5\n".as_bytes()).is_err());
        assert!(SimilarityGraph::read_edge_csv("i,j,weight\n0,1,1.5\n".as_bytes()).is_err());
        assert!(SimilarityGraph::read_edge_csv("i,j,weight\n0,1,0.5\n1,0,0.5\n".as_bytes()).is_err());
    }
}
