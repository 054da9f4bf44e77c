//! Shapley value / Shapley Mode estimation.
//!
//! Two routes are provided. [`shapley_exact`] enumerates all `2^n`
//! coalitions and applies the combinatorial weighting
//! `w(s) = s!(n-1-s)!/n! = 1/(n * C(n-1, s))`, which is algebraically
//! equivalent to averaging marginal contributions over all `n!` player
//! orderings. [`shapley_sampled`] draws orderings with replacement and
//! sweeps each one telescopically: the `n + 1` nested coalitions along an
//! ordering are evaluated once and every player is paid the difference
//! between consecutive values, so one ordering prices all players.
//!
//! # Determinism
//!
//! Sampled results are a pure function of `(game, seed, p)`, independent
//! of the worker count. Ordering `i` is the Fisher-Yates shuffle driven by
//! a ChaCha8 generator seeded with the plan seed on stream `i` (a
//! counter-based generator, so any worker can reproduce any ordering).
//! Per-ordering marginals are accumulated in fixed batches of
//! [`REDUCTION_BATCH`] consecutive ordering indices and the batch partials
//! are reduced in ascending batch order on a single thread, which pins the
//! floating-point grouping regardless of how many workers ran the batches.

use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use lru::LruCache;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::game::{Coalition, Game, GameError, PlayerId, ValueTensor};

mod result;

pub use result::ShapleyResult;

/// Largest player count `shapley_exact` accepts by default.
pub const DEFAULT_EXACT_CAP: usize = 12;

/// Number of consecutive ordering indices accumulated per reduction batch.
pub const REDUCTION_BATCH: usize = 32;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("player {player} is already in the coalition")]
    PlayerInCoalition { player: usize },
    #[error("player {player} out of range for a {n}-player game")]
    PlayerOutOfRange { player: usize, n: usize },
    #[error("exact mode supports at most {cap} players, game has {n}")]
    ExactCapExceeded { n: usize, cap: usize },
    #[error("game has no players")]
    EmptyGame,
    #[error("sampling plan requires at least one permutation")]
    ZeroPermutations,
    #[error("sampling plan requires at least one worker")]
    ZeroWorkers,
    #[error("cache capacity must be positive")]
    ZeroCacheCapacity,
    #[error("game returned shape {got:?}, declared {expected:?}")]
    OutputShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("evaluating coalition {coalition}: {source}")]
    Evaluation {
        coalition: String,
        #[source]
        source: GameError,
    },
    #[error("checkpoints must be non-empty, strictly ascending and within 1..=p")]
    BadCheckpoints,
    #[error("invalid result document: {0}")]
    Document(String),
    #[error("worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// A player ordering: a bijection on `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self, EngineError> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || seen[i] {
                return Err(EngineError::Document(format!(
                    "order {order:?} is not a bijection on 0..{n}"
                )));
            }
            seen[i] = true;
        }
        Ok(Permutation { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// The ordering the sampler uses for index `index` under `seed`. Exposed
/// so callers can audit exactly which coalitions a run evaluated.
pub fn sampled_permutation(seed: u64, index: u64, n: usize) -> Permutation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    Permutation { order }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingMode {
    Exact,
    MonteCarlo,
}

/// Opt-in memoization of coalition evaluations. Each worker keeps its own
/// cache (no locks on the hot path); hits are summed into the result
/// metadata.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CachePolicy {
    Off,
    Lru { capacity: usize },
}

#[derive(Clone, Debug)]
pub struct SamplingPlan {
    pub mode: SamplingMode,
    /// Number of sampled orderings `p` (Monte Carlo only).
    pub permutations: usize,
    pub seed: u64,
    pub workers: usize,
    /// Player-count ceiling for exact enumeration.
    pub exact_cap: usize,
    pub cache: CachePolicy,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            mode: SamplingMode::MonteCarlo,
            permutations: 1000,
            seed: 0,
            workers: 1,
            exact_cap: DEFAULT_EXACT_CAP,
            cache: CachePolicy::Off,
        }
    }
}

impl SamplingPlan {
    fn validate(&self) -> Result<(), EngineError> {
        if self.workers == 0 {
            return Err(EngineError::ZeroWorkers);
        }
        if let CachePolicy::Lru { capacity: 0 } = self.cache {
            return Err(EngineError::ZeroCacheCapacity);
        }
        Ok(())
    }
}

fn eval(
    game: &dyn Game,
    coalition: &Coalition,
    expected_shape: &[usize],
    evaluations: &AtomicU64,
) -> Result<ValueTensor, EngineError> {
    let value = game
        .evaluate(coalition)
        .map_err(|source| EngineError::Evaluation {
            coalition: coalition.to_bitstring(),
            source,
        })?;
    if value.shape() != expected_shape {
        return Err(EngineError::OutputShape {
            expected: expected_shape.to_vec(),
            got: value.shape().to_vec(),
        });
    }
    evaluations.fetch_add(1, Ordering::Relaxed);
    Ok(value)
}

struct WorkerState {
    replica: Option<Box<dyn Game>>,
    cache: Option<LruCache<Coalition, ValueTensor>>,
}

fn worker_state(game: &dyn Game, cache: CachePolicy) -> WorkerState {
    WorkerState {
        replica: game.worker_replica(),
        cache: match cache {
            CachePolicy::Off => None,
            CachePolicy::Lru { capacity } => NonZeroUsize::new(capacity).map(LruCache::new),
        },
    }
}

fn eval_cached(
    game: &dyn Game,
    coalition: &Coalition,
    expected_shape: &[usize],
    cache: &mut Option<LruCache<Coalition, ValueTensor>>,
    evaluations: &AtomicU64,
    cache_hits: &AtomicU64,
) -> Result<ValueTensor, EngineError> {
    if let Some(cache) = cache {
        if let Some(hit) = cache.get(coalition) {
            cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit.clone());
        }
        let value = eval(game, coalition, expected_shape, evaluations)?;
        cache.put(coalition.clone(), value.clone());
        Ok(value)
    } else {
        eval(game, coalition, expected_shape, evaluations)
    }
}

/// `Δ_i(S) = V(S ∪ {i}) − V(S)`, element-wise. Requires `i ∉ S`.
pub fn marginal_contribution(
    game: &dyn Game,
    coalition: &Coalition,
    player: PlayerId,
) -> Result<ValueTensor, EngineError> {
    let n = game.n_players();
    if player.0 >= n {
        return Err(EngineError::PlayerOutOfRange { player: player.0, n });
    }
    if coalition.width() != n {
        return Err(EngineError::Game(GameError::WidthMismatch {
            expected: n,
            got: coalition.width(),
        }));
    }
    if coalition.contains(player.0) {
        return Err(EngineError::PlayerInCoalition { player: player.0 });
    }
    let shape = game.output_shape();
    let counter = AtomicU64::new(0);
    let without = eval(game, coalition, &shape, &counter)?;
    let with = eval(game, &coalition.with(player.0), &shape, &counter)?;
    let difference = with.subtract(&without)?;
    // Re-validate: differences of huge finite values can overflow.
    Ok(ValueTensor::new(shape, difference.data().to_vec())?)
}

fn factorial_saturating(n: usize) -> u64 {
    (1..=n as u64).try_fold(1u64, |acc, k| acc.checked_mul(k)).unwrap_or(u64::MAX)
}

/// Exact binomial coefficient; callers keep arguments small enough that
/// the result is far below 2^53 and thus exact as an f64.
fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc * (n - k + i) as u128 / i as u128;
    }
    acc
}

/// Exact Shapley Modes by coalition enumeration, default player cap.
pub fn shapley_exact(game: &dyn Game) -> Result<ShapleyResult, EngineError> {
    shapley_exact_with_cap(game, DEFAULT_EXACT_CAP)
}

/// Exact Shapley Modes with an explicit player-count cap.
pub fn shapley_exact_with_cap(game: &dyn Game, cap: usize) -> Result<ShapleyResult, EngineError> {
    let started = Instant::now();
    let n = game.n_players();
    if n == 0 {
        return Err(EngineError::EmptyGame);
    }
    if n > cap {
        return Err(EngineError::ExactCapExceeded { n, cap });
    }
    if n > 30 {
        return Err(EngineError::ExactCapExceeded { n, cap: 30 });
    }
    let shape = game.output_shape();
    let elems: usize = shape.iter().product();
    let evaluations = AtomicU64::new(0);

    let total = 1u64 << n;
    let values: Vec<ValueTensor> = (0..total)
        .into_par_iter()
        .map(|mask| eval(game, &Coalition::from_mask(mask, n), &shape, &evaluations))
        .collect::<Result<_, _>>()?;

    // w(s) = 1/(n * C(n-1, s)): the weight of a coalition of size s in the
    // ordering average.
    let weights: Vec<f64> = (0..n).map(|s| 1.0 / (n as f64 * binomial(n - 1, s) as f64)).collect();

    let mut modes = Vec::with_capacity(n);
    for i in 0..n {
        let bit = 1u64 << i;
        let mut acc = vec![0.0; elems];
        for mask in 0..total {
            if mask & bit != 0 {
                continue;
            }
            let w = weights[mask.count_ones() as usize];
            let with = values[(mask | bit) as usize].data();
            let without = values[mask as usize].data();
            for j in 0..elems {
                acc[j] += w * (with[j] - without[j]);
            }
        }
        modes.push(ValueTensor::new(shape.clone(), acc)?);
    }

    Ok(ShapleyResult {
        player_labels: game.player_labels(),
        output_shape: shape,
        modes,
        stderr: None,
        v_empty: values[0].clone(),
        v_grand: values[(total - 1) as usize].clone(),
        seed: 0,
        permutations_used: factorial_saturating(n),
        elapsed_s: started.elapsed().as_secs_f64(),
        evaluations: evaluations.into_inner(),
        cache_hits: 0,
    })
}

/// A contiguous range of ordering indices accumulated by one worker.
struct BatchPartial {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_batch(
    game: &dyn Game,
    state: &mut WorkerState,
    seed: u64,
    range: std::ops::Range<u64>,
    n: usize,
    shape: &[usize],
    v_empty: &[f64],
    evaluations: &AtomicU64,
    cache_hits: &AtomicU64,
) -> Result<BatchPartial, EngineError> {
    let elems = v_empty.len();
    let game: &dyn Game = state.replica.as_deref().unwrap_or(game);
    let mut sum = vec![0.0; n * elems];
    let mut sumsq = vec![0.0; n * elems];
    let mut prev = vec![0.0; elems];
    for index in range {
        let perm = sampled_permutation(seed, index, n);
        let mut coalition = Coalition::empty(n);
        prev.copy_from_slice(v_empty);
        for &player in perm.order() {
            coalition.insert(player);
            let value = eval_cached(game, &coalition, shape, &mut state.cache, evaluations, cache_hits)?;
            let cur = value.data();
            let base = player * elems;
            for j in 0..elems {
                let d = cur[j] - prev[j];
                sum[base + j] += d;
                sumsq[base + j] += d * d;
            }
            prev.copy_from_slice(cur);
        }
    }
    Ok(BatchPartial { sum, sumsq })
}

fn batch_ranges(p: usize) -> Vec<std::ops::Range<u64>> {
    (0..p)
        .step_by(REDUCTION_BATCH)
        .map(|start| start as u64..(start + REDUCTION_BATCH).min(p) as u64)
        .collect()
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, EngineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EngineError::ThreadPool(e.to_string()))
}

/// Monte Carlo Shapley Modes over `plan.permutations` sampled orderings.
pub fn shapley_sampled(game: &dyn Game, plan: &SamplingPlan) -> Result<ShapleyResult, EngineError> {
    let started = Instant::now();
    plan.validate()?;
    if plan.permutations == 0 {
        return Err(EngineError::ZeroPermutations);
    }
    let n = game.n_players();
    if n == 0 {
        return Err(EngineError::EmptyGame);
    }
    let shape = game.output_shape();
    let elems: usize = shape.iter().product();
    let evaluations = AtomicU64::new(0);
    let cache_hits = AtomicU64::new(0);

    let v_empty = eval(game, &Coalition::empty(n), &shape, &evaluations)?;
    let v_grand = eval(game, &Coalition::grand(n), &shape, &evaluations)?;

    let p = plan.permutations;
    let pool = build_pool(plan.workers)?;
    let partials: Vec<BatchPartial> = pool.install(|| {
        batch_ranges(p)
            .into_par_iter()
            .map_init(
                || worker_state(game, plan.cache),
                |state, range| {
                    run_batch(
                        game,
                        state,
                        plan.seed,
                        range,
                        n,
                        &shape,
                        v_empty.data(),
                        &evaluations,
                        &cache_hits,
                    )
                },
            )
            .collect::<Result<_, _>>()
    })?;

    // Single-threaded, batch-ordered reduction: the float grouping is a
    // function of p alone, never of the worker count.
    let width = n * elems;
    let mut sum = vec![0.0; width];
    let mut sumsq = vec![0.0; width];
    for partial in &partials {
        for j in 0..width {
            sum[j] += partial.sum[j];
            sumsq[j] += partial.sumsq[j];
        }
    }

    let pf = p as f64;
    let mut modes = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    for i in 0..n {
        let base = i * elems;
        let mean: Vec<f64> = (0..elems).map(|j| sum[base + j] / pf).collect();
        let se: Vec<f64> = (0..elems)
            .map(|j| {
                if p < 2 {
                    return 0.0;
                }
                let m = sum[base + j] / pf;
                let var = (sumsq[base + j] - pf * m * m) / (pf - 1.0);
                (var.max(0.0) / pf).sqrt()
            })
            .collect();
        modes.push(ValueTensor::new(shape.clone(), mean)?);
        stderr.push(ValueTensor::new(shape.clone(), se)?);
    }

    Ok(ShapleyResult {
        player_labels: game.player_labels(),
        output_shape: shape,
        modes,
        stderr: Some(stderr),
        v_empty,
        v_grand,
        seed: plan.seed,
        permutations_used: p as u64,
        elapsed_s: started.elapsed().as_secs_f64(),
        evaluations: evaluations.into_inner(),
        cache_hits: cache_hits.into_inner(),
    })
}

/// Dispatch to exact enumeration when the game is small enough, otherwise
/// sample. `SamplingMode::Exact` insists on enumeration and fails beyond
/// the cap; `SamplingMode::MonteCarlo` still prefers exact below the cap,
/// where it is both cheaper and noiseless.
pub fn shapley_auto(game: &dyn Game, plan: &SamplingPlan) -> Result<ShapleyResult, EngineError> {
    plan.validate()?;
    let n = game.n_players();
    if n == 0 {
        return Err(EngineError::EmptyGame);
    }
    match plan.mode {
        SamplingMode::Exact => {
            if n <= plan.exact_cap {
                shapley_exact_with_cap(game, plan.exact_cap)
            } else {
                Err(EngineError::ExactCapExceeded { n, cap: plan.exact_cap })
            }
        }
        SamplingMode::MonteCarlo => {
            if n <= plan.exact_cap {
                shapley_exact_with_cap(game, plan.exact_cap)
            } else {
                shapley_sampled(game, plan)
            }
        }
    }
}

/// Per-player mean estimates after each checkpoint prefix of the sampled
/// ordering stream. A checkpoint entry at `c` is bitwise what
/// [`shapley_sampled`] would report for `p = c` under the same seed.
pub fn convergence_trace(
    game: &dyn Game,
    plan: &SamplingPlan,
    checkpoints: &[usize],
) -> Result<Vec<(usize, Vec<ValueTensor>)>, EngineError> {
    plan.validate()?;
    if plan.permutations == 0 {
        return Err(EngineError::ZeroPermutations);
    }
    if checkpoints.is_empty()
        || checkpoints[0] == 0
        || checkpoints.windows(2).any(|w| w[0] >= w[1])
        || *checkpoints.last().unwrap() > plan.permutations
    {
        return Err(EngineError::BadCheckpoints);
    }
    let n = game.n_players();
    if n == 0 {
        return Err(EngineError::EmptyGame);
    }
    let shape = game.output_shape();
    let elems: usize = shape.iter().product();
    let evaluations = AtomicU64::new(0);
    let cache_hits = AtomicU64::new(0);
    let v_empty = eval(game, &Coalition::empty(n), &shape, &evaluations)?;

    let last = *checkpoints.last().unwrap();
    let width = n * elems;

    // Per-ordering marginals, kept so every checkpoint prefix can be folded
    // with the same batch grouping the sampler uses.
    let pool = build_pool(plan.workers)?;
    let per_batch: Vec<Vec<Vec<f64>>> = pool.install(|| {
        batch_ranges(last)
            .into_par_iter()
            .map_init(
                || worker_state(game, plan.cache),
                |state, range| {
                    let game: &dyn Game = state.replica.as_deref().unwrap_or(game);
                    let mut batch = Vec::with_capacity((range.end - range.start) as usize);
                    let mut prev = vec![0.0; elems];
                    for index in range {
                        let perm = sampled_permutation(plan.seed, index, n);
                        let mut coalition = Coalition::empty(n);
                        prev.copy_from_slice(v_empty.data());
                        let mut marginals = vec![0.0; width];
                        for &player in perm.order() {
                            coalition.insert(player);
                            let value = eval_cached(
                                game,
                                &coalition,
                                &shape,
                                &mut state.cache,
                                &evaluations,
                                &cache_hits,
                            )?;
                            let cur = value.data();
                            let base = player * elems;
                            for j in 0..elems {
                                marginals[base + j] = cur[j] - prev[j];
                            }
                            prev.copy_from_slice(cur);
                        }
                        batch.push(marginals);
                    }
                    Ok::<_, EngineError>(batch)
                },
            )
            .collect::<Result<_, _>>()
    })?;
    let marginals: Vec<Vec<f64>> = per_batch.into_iter().flatten().collect();

    let mut trace = Vec::with_capacity(checkpoints.len());
    for &c in checkpoints {
        let mut total = vec![0.0; width];
        for start in (0..c).step_by(REDUCTION_BATCH) {
            let mut partial = vec![0.0; width];
            for marginal in marginals.iter().take((start + REDUCTION_BATCH).min(c)).skip(start) {
                for j in 0..width {
                    partial[j] += marginal[j];
                }
            }
            for j in 0..width {
                total[j] += partial[j];
            }
        }
        let cf = c as f64;
        let estimates: Vec<ValueTensor> = (0..n)
            .map(|i| {
                let base = i * elems;
                let mean: Vec<f64> = (0..elems).map(|j| total[base + j] / cf).collect();
                ValueTensor::new(shape.clone(), mean)
            })
            .collect::<Result<_, _>>()?;
        trace.push((c, estimates));
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{AdditiveGame, GloveGame, MajorityGame, TabularGame};

    fn scalars(result: &ShapleyResult) -> Vec<f64> {
        result.modes.iter().map(|m| m.data()[0]).collect()
    }

    #[test]
    fn marginal_contribution_examples() {
        let additive = AdditiveGame::new(vec![2.0, 5.0, 3.0]).unwrap();
        let s = Coalition::from_members(3, [0]).unwrap();
        let d = marginal_contribution(&additive, &s, PlayerId(2)).unwrap();
        assert_eq!(d.data(), &[3.0]);

        let majority = MajorityGame::new(3, 2).unwrap();
        let d = marginal_contribution(&majority, &s, PlayerId(1)).unwrap();
        assert_eq!(d.data(), &[1.0]);

        let glove = GloveGame::canonical();
        let d = marginal_contribution(&glove, &Coalition::empty(3), PlayerId(2)).unwrap();
        assert_eq!(d.data(), &[0.0]);
    }

    #[test]
    fn marginal_rejects_member_player() {
        let g = AdditiveGame::new(vec![1.0, 2.0]).unwrap();
        let s = Coalition::from_members(2, [1]).unwrap();
        assert!(matches!(
            marginal_contribution(&g, &s, PlayerId(1)),
            Err(EngineError::PlayerInCoalition { player: 1 })
        ));
    }

    #[test]
    fn exact_glove_matches_hand_enumeration() {
        let r = shapley_exact(&GloveGame::canonical()).unwrap();
        let phi = scalars(&r);
        assert!((phi[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((phi[1] - 1.0 / 6.0).abs() < 1e-12);
        assert!((phi[2] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.permutations_used, 6);
    }

    #[test]
    fn exact_additive_recovers_weights() {
        let r = shapley_exact(&AdditiveGame::new(vec![2.0, 5.0, 3.0]).unwrap()).unwrap();
        assert_eq!(scalars(&r), vec![2.0, 5.0, 3.0]);
    }

    #[test]
    fn exact_two_player_table() {
        // v(∅)=0, v({0})=1, v({1})=2, v({0,1})=5: orderings (0,1) and (1,0)
        // give player 0 (1+3)/2 = 2 and player 1 (2+4)/2 = 3.
        let g = TabularGame::from_fn(2, Vec::new(), |c| {
            vec![match (c.contains(0), c.contains(1)) {
                (false, false) => 0.0,
                (true, false) => 1.0,
                (false, true) => 2.0,
                (true, true) => 5.0,
            }]
        })
        .unwrap();
        let r = shapley_exact(&g).unwrap();
        assert!((scalars(&r)[0] - 2.0).abs() < 1e-12);
        assert!((scalars(&r)[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn exact_cap_is_enforced() {
        let g = TabularGame::from_fn(13, Vec::new(), |c| vec![c.count() as f64]).unwrap();
        assert!(matches!(
            shapley_exact(&g),
            Err(EngineError::ExactCapExceeded { n: 13, cap: 12 })
        ));
    }

    #[test]
    fn sampled_additive_is_exact_for_any_plan() {
        let g = AdditiveGame::new(vec![2.0, 5.0, 3.0]).unwrap();
        for (p, seed) in [(1, 0u64), (7, 3), (64, 42), (100, 7)] {
            let plan = SamplingPlan { permutations: p, seed, ..SamplingPlan::default() };
            let r = shapley_sampled(&g, &plan).unwrap();
            assert_eq!(scalars(&r), vec![2.0, 5.0, 3.0], "p={p} seed={seed}");
        }
    }

    #[test]
    fn sampled_single_permutation_telescopes_to_grand_minus_empty() {
        let g = GloveGame::canonical();
        let plan = SamplingPlan { permutations: 1, seed: 11, ..SamplingPlan::default() };
        let r = shapley_sampled(&g, &plan).unwrap();
        let total: f64 = scalars(&r).iter().sum();
        let expected = r.v_grand.data()[0] - r.v_empty.data()[0];
        assert!((total - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }

    #[test]
    fn sampled_rejects_zero_permutations() {
        let g = GloveGame::canonical();
        let plan = SamplingPlan { permutations: 0, ..SamplingPlan::default() };
        assert!(matches!(shapley_sampled(&g, &plan), Err(EngineError::ZeroPermutations)));
    }

    #[test]
    fn auto_dispatches_by_size_and_mode() {
        let small = GloveGame::canonical();
        let auto = shapley_auto(&small, &SamplingPlan::default()).unwrap();
        // Exact results carry no standard error.
        assert!(auto.stderr.is_none());

        let big = AdditiveGame::new(vec![1.0; 100]).unwrap();
        let plan = SamplingPlan { permutations: 10, ..SamplingPlan::default() };
        let sampled = shapley_auto(&big, &plan).unwrap();
        assert!(sampled.stderr.is_some());

        let mid = TabularGame::from_fn(13, Vec::new(), |c| vec![c.count() as f64]).unwrap();
        let exact_plan = SamplingPlan { mode: SamplingMode::Exact, ..SamplingPlan::default() };
        assert!(matches!(
            shapley_auto(&mid, &exact_plan),
            Err(EngineError::ExactCapExceeded { n: 13, cap: 12 })
        ));
    }

    #[test]
    fn cache_changes_nothing_but_counts_hits() {
        let g = GloveGame::canonical();
        let plan = SamplingPlan { permutations: 200, seed: 5, ..SamplingPlan::default() };
        let cold = shapley_sampled(&g, &plan).unwrap();
        let cached_plan =
            SamplingPlan { cache: CachePolicy::Lru { capacity: 64 }, ..plan.clone() };
        let warm = shapley_sampled(&g, &cached_plan).unwrap();
        for (a, b) in cold.modes.iter().zip(&warm.modes) {
            assert_eq!(a.data()[0].to_bits(), b.data()[0].to_bits());
        }
        assert!(warm.cache_hits > 0);
        assert!(warm.evaluations < cold.evaluations);
    }

    #[test]
    fn trace_single_checkpoint_equals_sampled_bitwise() {
        let g = GloveGame::canonical();
        let plan = SamplingPlan { permutations: 97, seed: 9, ..SamplingPlan::default() };
        let sampled = shapley_sampled(&g, &plan).unwrap();
        let trace = convergence_trace(&g, &plan, &[97]).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].0, 97);
        for (est, mode) in trace[0].1.iter().zip(&sampled.modes) {
            assert_eq!(est.data()[0].to_bits(), mode.data()[0].to_bits());
        }
    }

    #[test]
    fn trace_on_zero_variance_game_is_flat() {
        let g = AdditiveGame::new(vec![2.0, 5.0, 3.0]).unwrap();
        let plan = SamplingPlan { permutations: 100, seed: 4, ..SamplingPlan::default() };
        let trace = convergence_trace(&g, &plan, &[1, 10, 50, 100]).unwrap();
        for (_, estimates) in &trace {
            let phi: Vec<f64> = estimates.iter().map(|t| t.data()[0]).collect();
            assert_eq!(phi, vec![2.0, 5.0, 3.0]);
        }
    }

    #[test]
    fn trace_validates_checkpoints() {
        let g = GloveGame::canonical();
        let plan = SamplingPlan { permutations: 10, ..SamplingPlan::default() };
        assert!(matches!(
            convergence_trace(&g, &plan, &[]),
            Err(EngineError::BadCheckpoints)
        ));
        assert!(matches!(
            convergence_trace(&g, &plan, &[5, 5]),
            Err(EngineError::BadCheckpoints)
        ));
        assert!(matches!(
            convergence_trace(&g, &plan, &[5, 11]),
            Err(EngineError::BadCheckpoints)
        ));
        assert!(matches!(
            convergence_trace(&g, &plan, &[0, 5]),
            Err(EngineError::BadCheckpoints)
        ));
    }

    #[test]
    fn permutation_validates_bijection() {
        assert!(Permutation::new(vec![2, 0, 1]).is_ok());
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn sampled_permutations_are_stable_for_seed_and_index() {
        let a = sampled_permutation(42, 7, 20);
        let b = sampled_permutation(42, 7, 20);
        assert_eq!(a, b);
        let c = sampled_permutation(42, 8, 20);
        assert_ne!(a, c);
    }
}
