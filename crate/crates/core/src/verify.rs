//! Exhaustive checks of the allocation guarantees on small random instances.
//!
//! The optimum is found by enumerating every glass-box subset, so these
//! checks share no code with the ranking they verify beyond the score
//! function itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allocation::{allocate_top_q, desirability_percentile, desirability_score, QGrid};
use crate::sufficiency::Category;

/// Random sufficiency pairs and losses for `n` observations.
#[derive(Debug, Clone)]
pub struct Instance {
    pub s_g: Vec<bool>,
    pub s_b: Vec<bool>,
    pub loss_g: Vec<f64>,
    pub loss_b: Vec<f64>,
}

impl Instance {
    /// Half of the instances draw losses from a coarse lattice so that exact
    /// score ties occur.
    pub fn random(rng: &mut impl Rng, n: usize) -> Instance {
        let lattice = rng.gen_bool(0.5);
        let loss = |rng: &mut dyn rand::RngCore| {
            if lattice {
                f64::from(rng.gen_range(0..8u8)) * 0.25
            } else {
                rng.gen_range(0.0..5.0)
            }
        };
        Instance {
            s_g: (0..n).map(|_| rng.gen_bool(0.5)).collect(),
            s_b: (0..n).map(|_| rng.gen_bool(0.5)).collect(),
            loss_g: (0..n).map(|_| loss(rng)).collect(),
            loss_b: (0..n).map(|_| loss(rng)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.s_g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_g.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| desirability_score(self.s_g[i], self.s_b[i], self.loss_g[i], self.loss_b[i]))
            .collect()
    }

    /// `(Σ sufficient, Σ glass-sufficient)` counts of a mask.
    pub fn counts(&self, mask: &[bool]) -> (usize, usize) {
        let mut total = 0;
        let mut glass = 0;
        for (i, &m) in mask.iter().enumerate() {
            if m {
                total += usize::from(self.s_g[i]);
                glass += usize::from(self.s_g[i]);
            } else {
                total += usize::from(self.s_b[i]);
            }
        }
        (total, glass)
    }

    /// For each subset size `k`: the best achievable sufficient count, and
    /// the best glass-sufficient count among subsets attaining it.
    pub fn brute_force(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut best = vec![(0usize, 0usize); n + 1];
        let mut seen = vec![false; n + 1];
        let mut mask = vec![false; n];
        for bits in 0u32..(1u32 << n) {
            for (i, m) in mask.iter_mut().enumerate() {
                *m = bits >> i & 1 == 1;
            }
            let k = bits.count_ones() as usize;
            let c = self.counts(&mask);
            if !seen[k] || c > best[k] {
                best[k] = c;
                seen[k] = true;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub instances: usize,
    pub failures: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Top-`q` allocation on true scores attains the exhaustive optimum of
/// sufficient performance (`.0`) and, among optima, of glass-box
/// sufficient performance (`.1`), for every `q = i/n`.
pub fn check_optimality(instances: usize, seed: u64) -> (CheckResult, CheckResult) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut fail_total, mut fail_glass) = (0, 0);
    for _ in 0..instances {
        let n = rng.gen_range(6..=12);
        let inst = Instance::random(&mut rng, n);
        let best = inst.brute_force();
        let scores = inst.scores();
        let (mut bad_total, mut bad_glass) = (false, false);
        for (i, &(opt_total, opt_glass)) in best.iter().enumerate() {
            let q = i as f64 / n as f64;
            let (total, glass) = inst.counts(&allocate_top_q(&scores, q));
            bad_total |= total != opt_total;
            bad_glass |= total != opt_total || glass != opt_glass;
        }
        fail_total += usize::from(bad_total);
        fail_glass += usize::from(bad_glass);
    }
    (
        CheckResult {
            name: "maximal sufficient performance",
            instances,
            failures: fail_total,
        },
        CheckResult {
            name: "maximal sufficient explainable performance",
            instances,
            failures: fail_glass,
        },
    )
}

/// Masks are nested as `q` increases along `grid`.
pub fn check_monotone(instances: usize, seed: u64, grid: &QGrid) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..instances {
        let n = rng.gen_range(1..=200);
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.gen_range(-40..40i32)) / 10.0)
            .collect();
        let masks: Vec<Vec<bool>> = grid
            .points()
            .iter()
            .map(|&q| allocate_top_q(&scores, q))
            .collect();
        let nested = masks
            .windows(2)
            .all(|w| w[0].iter().zip(&w[1]).all(|(&a, &b)| !a || b));
        failures += usize::from(!nested);
    }
    CheckResult {
        name: "monotone allocation",
        instances,
        failures,
    }
}

fn interval(c: Category) -> (f64, f64) {
    match c {
        Category::Zb => (-2.0, -1.0),
        Category::Z0 => (-1.0, 0.0),
        Category::Z2 => (0.0, 1.0),
        Category::Zg => (1.0, 2.0),
    }
}

/// Raw scores fall strictly inside their category's interval.
pub fn check_intervals(instances: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..instances {
        let s_g = rng.gen_bool(0.5);
        let s_b = rng.gen_bool(0.5);
        // Log-uniform magnitudes reach the saturated tails of the logistic.
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let loss_g = rng.gen_range(0.0..1.0) * scale;
        let loss_b = rng.gen_range(0.0..1.0) * scale;
        let r = desirability_score(s_g, s_b, loss_g, loss_b);
        let (lo, hi) = interval(Category::from_indicators(s_g, s_b));
        failures += usize::from(!(r > lo && r < hi));
    }
    CheckResult {
        name: "category score intervals",
        instances,
        failures,
    }
}

/// `|mask(i/n)| = i` for every `i`.
pub fn check_cardinality(instances: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..instances {
        let n = rng.gen_range(1..=60);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ok = (0..=n).all(|i| {
            let q = i as f64 / n as f64;
            allocate_top_q(&scores, q).iter().filter(|&&m| m).count() == i
        });
        failures += usize::from(!ok);
    }
    CheckResult {
        name: "allocation cardinality",
        instances,
        failures,
    }
}

/// With every prediction sufficient, glass-box priority follows ascending
/// `loss_b − loss_g`; equal differences go to the higher id first.
pub fn check_reduction(instances: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..instances {
        let n = rng.gen_range(2..=50);
        let mut inst = Instance::random(&mut rng, n);
        inst.s_g = vec![true; n];
        inst.s_b = vec![true; n];
        let ranks = desirability_percentile(&inst.scores()).ranks;
        let diff: Vec<f64> = (0..n).map(|i| inst.loss_b[i] - inst.loss_g[i]).collect();
        // Rank 1 first: largest difference first, ties by ascending id.
        let mut expected: Vec<usize> = (0..n).collect();
        expected.sort_by(|&a, &b| diff[b].total_cmp(&diff[a]).then(a.cmp(&b)));
        let mut actual: Vec<usize> = (0..n).collect();
        actual.sort_by_key(|&i| ranks[i]);
        failures += usize::from(actual != expected);
    }
    CheckResult {
        name: "reduction to loss-based ranking",
        instances,
        failures,
    }
}

/// Runs every check with the default sizes.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let (p1, p2) = check_optimality(200, seed);
    vec![
        p1,
        p2,
        check_monotone(100, seed.wrapping_add(1), &QGrid::default()),
        check_intervals(10_000, seed.wrapping_add(2)),
        check_cardinality(200, seed.wrapping_add(3)),
        check_reduction(1_000, seed.wrapping_add(4)),
    ]
}
