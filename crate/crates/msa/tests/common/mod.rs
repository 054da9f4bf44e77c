//! Shared test utilities: independent oracles and synthetic fixtures.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use msa::game::{Coalition, Game, TabularGame, ValueTensor};
use msa::mlp::{Activation, LabeledDataset, MlpModel};

/// Brute-force Shapley values by enumerating all n! player orderings and
/// averaging telescoping marginals. Independent of the engine's
/// coalition-weighting route; n is capped where factorial enumeration
/// stays cheap.
pub fn brute_force_shapley(game: &dyn Game) -> Vec<Vec<f64>> {
    let n = game.n_players();
    assert!(n >= 1 && n <= 10, "oracle enumerates n! orderings");
    let elems: usize = game.output_shape().iter().product();

    // Pre-evaluate every coalition once, indexed by bit mask.
    let values: Vec<Vec<f64>> = (0..(1usize << n))
        .map(|mask| {
            let members = (0..n).filter(|i| mask >> i & 1 == 1);
            let coalition = Coalition::from_members(n, members).unwrap();
            game.evaluate(&coalition).unwrap().data().to_vec()
        })
        .collect();

    let mut acc = vec![vec![0.0; elems]; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut count = 0u64;
    heap_permutations(&mut order, &mut |order| {
        count += 1;
        let mut mask = 0usize;
        for &player in order {
            let prev = mask;
            mask |= 1 << player;
            for j in 0..elems {
                acc[player][j] += values[mask][j] - values[prev][j];
            }
        }
    });
    let factorial: f64 = (1..=n as u64).product::<u64>() as f64;
    assert_eq!(count as f64, factorial);
    for row in &mut acc {
        for v in row {
            *v /= factorial;
        }
    }
    acc
}

fn heap_permutations(order: &mut [usize], visit: &mut impl FnMut(&[usize])) {
    fn recurse(k: usize, order: &mut [usize], visit: &mut impl FnMut(&[usize])) {
        if k <= 1 {
            visit(order);
            return;
        }
        for i in 0..k {
            recurse(k - 1, order, visit);
            if k % 2 == 0 {
                order.swap(i, k - 1);
            } else {
                order.swap(0, k - 1);
            }
        }
    }
    let n = order.len();
    recurse(n, order, visit);
}

/// Complete scalar tabular game with values uniform in (-1, 1).
pub fn random_scalar_tabular(n: usize, seed: u64) -> TabularGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TabularGame::from_fn(n, Vec::new(), |_| vec![rng.random_range(-1.0..1.0)]).unwrap()
}

/// Complete tabular game with output shape [k], values uniform in (-1, 1).
pub fn random_vector_tabular(n: usize, k: usize, seed: u64) -> TabularGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TabularGame::from_fn(n, vec![k], |_| {
        (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()
    })
    .unwrap()
}

/// Visit every partition of `0..n` as a restricted-growth label string.
pub fn for_each_partition(n: usize, visit: &mut impl FnMut(&[usize])) {
    fn recurse(labels: &mut Vec<usize>, next_free: usize, n: usize, visit: &mut impl FnMut(&[usize])) {
        if labels.len() == n {
            visit(labels);
            return;
        }
        for label in 0..=next_free {
            labels.push(label);
            recurse(labels, next_free.max(label + 1), n, visit);
            labels.pop();
        }
    }
    recurse(&mut Vec::with_capacity(n), 0, n, visit);
}

/// A shared-safe additive game that asks for one replica per worker, to
/// exercise the engine's clone-per-worker path.
pub struct ClonePerWorkerAdditive {
    pub weights: Vec<f64>,
}

impl Game for ClonePerWorkerAdditive {
    fn n_players(&self) -> usize {
        self.weights.len()
    }

    fn output_shape(&self) -> Vec<usize> {
        Vec::new()
    }

    fn descriptor(&self) -> String {
        "clone-per-worker additive".into()
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<ValueTensor, msa::game::GameError> {
        let mut total = 0.0;
        for i in coalition.members() {
            total += self.weights[i];
        }
        ValueTensor::scalar(total)
    }

    fn worker_replica(&self) -> Option<Box<dyn Game>> {
        Some(Box::new(ClonePerWorkerAdditive { weights: self.weights.clone() }))
    }
}

/// Procedural pseudo-random game over many players: the value is a
/// deterministic hash of the coalition bits mapped into [0, 1). Cheap to
/// evaluate at any player count, unlike an enumerated table.
pub struct HashGame {
    pub n: usize,
    pub salt: u64,
}

impl Game for HashGame {
    fn n_players(&self) -> usize {
        self.n
    }

    fn output_shape(&self) -> Vec<usize> {
        Vec::new()
    }

    fn descriptor(&self) -> String {
        format!("hash(n={}, salt={})", self.n, self.salt)
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<ValueTensor, msa::game::GameError> {
        let mut acc = self.salt ^ 0x9e37_79b9_7f4a_7c15;
        let mut word = 0u64;
        for i in 0..self.n {
            word = (word << 1) | u64::from(coalition.contains(i));
            if i % 64 == 63 || i == self.n - 1 {
                acc = splitmix64(acc ^ word);
                word = 0;
            }
        }
        ValueTensor::scalar(acc as f64 / u64::MAX as f64)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Full-matrix dynamic-programming edit distance, independent of the
/// two-row implementation in the library.
pub fn levenshtein_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in table.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        table[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let substitution = table[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            table[i][j] = substitution.min(table[i - 1][j] + 1).min(table[i][j - 1] + 1);
        }
    }
    table[a.len()][b.len()]
}

// --- Desk-scale fixtures -------------------------------------------------
//
// A synthetic 4-class Gaussian-blobs dataset (64 features, 400 samples)
// and a hand-constructed 32-neuron prototype classifier over it. The
// construction is deterministic; the bundled files under fixtures/ are
// its serialized output (see tests/fixtures.rs for the drift guard and
// the regeneration entry point).

pub const DESK_FEATURES: usize = 64;
pub const DESK_CLASSES: usize = 4;
pub const DESK_HIDDEN: usize = 32;
pub const DESK_SAMPLES_PER_CLASS: usize = 100;
const DESK_SEED: u64 = 2024;
const CENTER_SCALE: f64 = 2.5;

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one value per call keeps the stream layout simple.
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v {
        *x /= norm;
    }
}

/// Unit directions of the four class centers.
fn desk_center_directions() -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(DESK_SEED);
    (0..DESK_CLASSES)
        .map(|_| {
            let mut dir: Vec<f64> = (0..DESK_FEATURES).map(|_| standard_normal(&mut rng)).collect();
            normalize(&mut dir);
            dir
        })
        .collect()
}

/// The bundled 400-sample Gaussian-blobs dataset.
pub fn desk_blobs() -> LabeledDataset {
    let directions = desk_center_directions();
    let mut rng = ChaCha8Rng::seed_from_u64(DESK_SEED.wrapping_add(1));
    let total = DESK_CLASSES * DESK_SAMPLES_PER_CLASS;
    let mut features = Vec::with_capacity(total * DESK_FEATURES);
    let mut labels = Vec::with_capacity(total);
    for i in 0..total {
        let class = i % DESK_CLASSES;
        for j in 0..DESK_FEATURES {
            features.push(CENTER_SCALE * directions[class][j] + standard_normal(&mut rng));
        }
        labels.push(class);
    }
    LabeledDataset::new(features, labels, DESK_FEATURES).unwrap()
}

/// The bundled 32-neuron prototype classifier. Neuron roles are graded on
/// purpose: 4 primary detectors, 4 secondary detectors, 8 pair detectors,
/// 8 weak noise detectors, and 8 neurons whose output column is exactly
/// zero, so the importance ranking has a wide, stable spread.
pub fn desk_model() -> MlpModel {
    let directions = desk_center_directions();
    let mut rng = ChaCha8Rng::seed_from_u64(DESK_SEED.wrapping_add(2));
    let mut w1 = vec![0.0; DESK_HIDDEN * DESK_FEATURES];
    let mut b1 = vec![0.0; DESK_HIDDEN];
    let mut w2 = vec![0.0; DESK_CLASSES * DESK_HIDDEN];
    let b2 = vec![0.05, 0.02, 0.0, 0.03];

    let set_row = |w1: &mut Vec<f64>, h: usize, dir: &[f64]| {
        w1[h * DESK_FEATURES..(h + 1) * DESK_FEATURES].copy_from_slice(dir);
    };

    // Primary detectors: one per class, strong output weight.
    for c in 0..DESK_CLASSES {
        let h = c;
        set_row(&mut w1, h, &directions[c]);
        b1[h] = -1.2;
        w2[c * DESK_HIDDEN + h] = 2.0;
    }
    // Secondary detectors: same directions, higher threshold, weaker output.
    for c in 0..DESK_CLASSES {
        let h = 4 + c;
        set_row(&mut w1, h, &directions[c]);
        b1[h] = -1.8;
        w2[c * DESK_HIDDEN + h] = 0.8;
    }
    // Pair detectors: respond to two classes at once.
    let pairs = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (1, 3), (1, 0), (3, 2)];
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let h = 8 + k;
        let mut dir: Vec<f64> = (0..DESK_FEATURES)
            .map(|j| directions[a][j] + directions[b][j])
            .collect();
        normalize(&mut dir);
        set_row(&mut w1, h, &dir);
        b1[h] = -1.0;
        w2[a * DESK_HIDDEN + h] = 0.35;
        w2[b * DESK_HIDDEN + h] = 0.35;
    }
    // Weak noise detectors: random directions, tiny output weights.
    for k in 0..8 {
        let h = 16 + k;
        let mut dir: Vec<f64> = (0..DESK_FEATURES).map(|_| standard_normal(&mut rng)).collect();
        normalize(&mut dir);
        set_row(&mut w1, h, &dir);
        b1[h] = -0.8;
        for c in 0..DESK_CLASSES {
            w2[c * DESK_HIDDEN + h] = 0.08 * standard_normal(&mut rng);
        }
    }
    // Idle neurons: active inputs but an exactly-zero output column.
    for k in 0..8 {
        let h = 24 + k;
        let mut dir: Vec<f64> = (0..DESK_FEATURES).map(|_| standard_normal(&mut rng)).collect();
        normalize(&mut dir);
        for v in &mut dir {
            *v *= 0.05;
        }
        set_row(&mut w1, h, &dir);
    }

    MlpModel::new(DESK_FEATURES, DESK_HIDDEN, DESK_CLASSES, Activation::Relu, w1, b1, w2, b2)
        .unwrap()
}

/// Path of the bundled fixtures directory at the workspace root.
pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}
