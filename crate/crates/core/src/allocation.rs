//! Desirability ranking and allocation of observations between the glass
//! box and the black box.
//!
//! The raw desirability score of an observation is
//! `2·s_g − s_b − σ(loss_b − loss_g)`, which places the four sufficiency
//! categories in disjoint intervals: `Zb ⊂ (−2, −1)`, `Z0 ⊂ (−1, 0)`,
//! `Z2 ⊂ (0, 1)` and `Zg ⊂ (1, 2)`. Ranking observations by this score and
//! sending the top `n_q` to the glass box maximizes sufficient ensemble
//! performance at every explainability level `q`, breaks ties toward
//! glass-box sufficiency, and gives nested allocations as `q` grows.
//!
//! Everything here is transductive: masks are computed by ranking the
//! scores of the batch being allocated. Ties are broken by position in the
//! batch, which is ascending observation id for datasets produced by
//! [`crate::dataset`].

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Task};
use crate::metrics::sufficient_performance;
use crate::models::{grid_search, FitReport, Hyper, HyperparameterGrid, Model, Prediction};
use crate::sufficiency::{Category, CategoryCounts, PairEvaluation, SufficiencyPartition};
use crate::{Error, Result, PROB_FLOOR};

/// Logistic function clamped to `[ε, 1 − ε]` (machine epsilon) so that
/// scores never reach the category interval endpoints.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

/// Raw glass-box allocation desirability of one observation.
pub fn desirability_score(s_g: bool, s_b: bool, loss_g: f64, loss_b: f64) -> f64 {
    2.0 * f64::from(u8::from(s_g)) - f64::from(u8::from(s_b)) - sigmoid(loss_b - loss_g)
}

/// Desirability scores of every observation of an evaluated pair.
pub fn desirability_scores(eval: &PairEvaluation) -> Vec<f64> {
    let p = &eval.partition;
    (0..p.len())
        .map(|i| desirability_score(p.s_g[i], p.s_b[i], eval.loss_g[i], eval.loss_b[i]))
        .collect()
}

/// Ordinal ranks of a score sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DesirabilityRanking {
    pub scores: Vec<f64>,
    /// `ranks[i] ∈ 1..=n`, ascending in score, ties to the lower position.
    pub ranks: Vec<usize>,
    /// `rank / n`.
    pub percentiles: Vec<f64>,
}

impl DesirabilityRanking {
    pub fn from_scores(scores: &[f64]) -> DesirabilityRanking {
        let n = scores.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let mut ranks = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            ranks[i] = r + 1;
        }
        let percentiles = ranks.iter().map(|&r| r as f64 / n as f64).collect();
        DesirabilityRanking {
            scores: scores.to_vec(),
            ranks,
            percentiles,
        }
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Glass-box mask holding the `n_q` highest-ranked observations.
    pub fn top_q(&self, q: f64) -> Vec<bool> {
        let n = self.len();
        let keep = n_q(q, n);
        self.ranks.iter().map(|&r| r > n - keep).collect()
    }
}

/// Percentile ranking of a score sequence.
pub fn desirability_percentile(scores: &[f64]) -> DesirabilityRanking {
    DesirabilityRanking::from_scores(scores)
}

/// `round(q · n)`, halves to even.
pub fn n_q(q: f64, n: usize) -> usize {
    ((q * n as f64).round_ties_even() as usize).min(n)
}

/// Marks the `round(q · n)` highest scores for the glass box.
pub fn allocate_top_q(scores: &[f64], q: f64) -> Vec<bool> {
    DesirabilityRanking::from_scores(scores).top_q(q)
}

/// Strictly increasing explainability levels including 0 and 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QGrid(Vec<f64>);

impl QGrid {
    pub fn new(points: Vec<f64>) -> Result<QGrid> {
        if points.len() < 2 {
            return Err(Error::invalid("q grid needs at least two points"));
        }
        if points.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::invalid("q grid values must lie in [0, 1]"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("q grid must be strictly increasing"));
        }
        if points[0] != 0.0 || *points.last().unwrap() != 1.0 {
            return Err(Error::invalid("q grid must include 0 and 1"));
        }
        Ok(QGrid(points))
    }

    /// `points` evenly spaced values from 0 to 1.
    pub fn uniform(points: usize) -> Result<QGrid> {
        if points < 2 {
            return Err(Error::invalid("q grid needs at least two points"));
        }
        let steps = (points - 1) as f64;
        QGrid::new((0..points).map(|i| i as f64 / steps).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for QGrid {
    /// 41 points, step 0.025.
    fn default() -> Self {
        QGrid::uniform(41).expect("valid default grid")
    }
}

impl TryFrom<Vec<f64>> for QGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        QGrid::new(v)
    }
}

impl From<QGrid> for Vec<f64> {
    fn from(g: QGrid) -> Self {
        g.0
    }
}

/// Which allocator produced a mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocatorTag {
    FeatureDependent,
    FeatureIndependent,
    Oracle,
    RandomExpectation,
}

impl AllocatorTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            AllocatorTag::FeatureDependent => "feature-dependent",
            AllocatorTag::FeatureIndependent => "feature-independent",
            AllocatorTag::Oracle => "oracle",
            AllocatorTag::RandomExpectation => "random-expectation",
        }
    }
}

impl std::fmt::Display for AllocatorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Glass-box masks over an evaluation batch, one per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPolicy {
    pub grid: QGrid,
    pub masks: Vec<Vec<bool>>,
    pub tags: Vec<AllocatorTag>,
}

impl AllocationPolicy {
    /// Top-`q` masks of a single score sequence at every grid point.
    pub fn from_scores(scores: &[f64], grid: &QGrid, tag: AllocatorTag) -> AllocationPolicy {
        let ranking = DesirabilityRanking::from_scores(scores);
        AllocationPolicy {
            grid: grid.clone(),
            masks: grid.points().iter().map(|&q| ranking.top_q(q)).collect(),
            tags: vec![tag; grid.len()],
        }
    }

    /// Per-`q` choice between the learned and the distance-based allocator.
    pub fn ensembled(
        learned: &[f64],
        independent: &[f64],
        grid: &QGrid,
        selection: &[AllocatorTag],
    ) -> Result<AllocationPolicy> {
        if selection.len() != grid.len() {
            return Err(Error::invalid("selection map does not cover the grid"));
        }
        if learned.len() != independent.len() {
            return Err(Error::invalid("score sequences differ in length"));
        }
        let dep = DesirabilityRanking::from_scores(learned);
        let ind = DesirabilityRanking::from_scores(independent);
        let masks = grid
            .points()
            .iter()
            .zip(selection)
            .map(|(&q, tag)| match tag {
                AllocatorTag::FeatureDependent => dep.top_q(q),
                _ => ind.top_q(q),
            })
            .collect();
        Ok(AllocationPolicy {
            grid: grid.clone(),
            masks,
            tags: selection.to_vec(),
        })
    }
}

/// Oracle mask: top-`q` of the true desirability scores.
pub fn oracle_allocation(eval: &PairEvaluation, q: f64) -> Vec<bool> {
    allocate_top_q(&desirability_scores(eval), q)
}

/// Oracle policy over a grid.
pub fn oracle_policy(eval: &PairEvaluation, grid: &QGrid) -> AllocationPolicy {
    AllocationPolicy::from_scores(&desirability_scores(eval), grid, AllocatorTag::Oracle)
}

/// Expected sufficient performance of uniform random allocation:
/// `q · mean(s_g) + (1 − q) · mean(s_b)`.
pub fn random_expectation_curve(partition: &SufficiencyPartition, grid: &QGrid) -> Vec<f64> {
    let (g, b) = (partition.mean_s_g(), partition.mean_s_b());
    grid.points()
        .iter()
        .map(|&q| q * g + (1.0 - q) * b)
        .collect()
}

/// Monte-Carlo estimate of the random allocator's curve: the mean of `draws`
/// uniformly drawn masks of size `n_q` at every grid point.
pub fn sampled_random_curve(
    partition: &SufficiencyPartition,
    grid: &QGrid,
    draws: usize,
    seed: u64,
) -> Vec<f64> {
    let n = partition.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; n];
    grid.points()
        .iter()
        .map(|&q| {
            let k = n_q(q, n);
            let mut total = 0.0;
            for _ in 0..draws.max(1) {
                mask.iter_mut().for_each(|m| *m = false);
                for i in sample(&mut rng, n, k) {
                    mask[i] = true;
                }
                total += sufficient_performance(&mask, partition);
            }
            total / draws.max(1) as f64
        })
        .collect()
}

/// Inputs the learned allocator may see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AllocatorFeatureSet {
    pub x: bool,
    pub g: bool,
    pub b: bool,
    pub d_ce: bool,
    pub d_mse: bool,
}

impl AllocatorFeatureSet {
    /// All candidate features.
    pub const KITCHEN_SINK: AllocatorFeatureSet = AllocatorFeatureSet {
        x: true,
        g: true,
        b: true,
        d_ce: true,
        d_mse: true,
    };

    /// The twelve ablation configurations.
    pub const ABLATION_SETS: [&'static str; 12] = [
        "x",
        "g+b",
        "d_ce",
        "d_mse",
        "x+d_ce",
        "x+d_mse",
        "g+b+d_ce",
        "g+b+d_mse",
        "x+g+b",
        "x+g+b+d_ce",
        "x+g+b+d_mse",
        "x+g+b+d_ce+d_mse",
    ];

    pub fn ablation_sets() -> Vec<AllocatorFeatureSet> {
        Self::ABLATION_SETS
            .iter()
            .map(|s| s.parse().expect("valid set"))
            .collect()
    }

    /// The largest subset usable for a task (drops `d_ce` for regression).
    pub fn for_task(self, task: Task) -> AllocatorFeatureSet {
        match task {
            Task::Regression => AllocatorFeatureSet {
                d_ce: false,
                ..self
            },
            Task::Classification { .. } => self,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.x || self.g || self.b || self.d_ce || self.d_mse)
    }

    pub fn validate(&self, task: Task) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("allocator feature set is empty"));
        }
        if self.d_ce && task == Task::Regression {
            return Err(Error::invalid("d_ce is not defined for regression"));
        }
        Ok(())
    }

    /// Column names of the augmented feature vector.
    pub fn names(&self, x_names: &[String], outputs: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.x {
            out.extend(x_names.iter().cloned());
        }
        if self.g {
            out.extend((0..outputs).map(|k| format!("g_{k}")));
        }
        if self.b {
            out.extend((0..outputs).map(|k| format!("b_{k}")));
        }
        if self.d_ce {
            out.push("d_ce".into());
        }
        if self.d_mse {
            out.push("d_mse".into());
        }
        out
    }
}

impl Default for AllocatorFeatureSet {
    fn default() -> Self {
        Self::KITCHEN_SINK
    }
}

impl std::str::FromStr for AllocatorFeatureSet {
    type Err = Error;

    /// Parses `+`- or `,`-separated member names, e.g. `x+g+b+d_mse`.
    fn from_str(s: &str) -> Result<Self> {
        let mut set = AllocatorFeatureSet {
            x: false,
            g: false,
            b: false,
            d_ce: false,
            d_mse: false,
        };
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "x" => set.x = true,
                "g" => set.g = true,
                "b" => set.b = true,
                "d_ce" => set.d_ce = true,
                "d_mse" => set.d_mse = true,
                other => {
                    return Err(Error::invalid(format!(
                        "unknown allocator feature `{other}`"
                    )))
                }
            }
        }
        if set.is_empty() {
            return Err(Error::invalid(format!("empty allocator feature set `{s}`")));
        }
        Ok(set)
    }
}

impl std::fmt::Display for AllocatorFeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<&str> = [
            (self.x, "x"),
            (self.g, "g"),
            (self.b, "b"),
            (self.d_ce, "d_ce"),
            (self.d_mse, "d_mse"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, name)| *name)
        .collect();
        f.write_str(&parts.join("+"))
    }
}

impl TryFrom<String> for AllocatorFeatureSet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AllocatorFeatureSet> for String {
    fn from(s: AllocatorFeatureSet) -> Self {
        s.to_string()
    }
}

/// Cross-entropy of `b`'s distribution under `g`'s: `−Σ p_b · ln p_g`.
pub fn d_ce(g_out: &[f64], b_out: &[f64]) -> f64 {
    -g_out
        .iter()
        .zip(b_out)
        .map(|(&pg, &pb)| pb * pg.max(PROB_FLOOR).ln())
        .sum::<f64>()
}

/// Mean squared difference of two output vectors.
pub fn d_mse(g_out: &[f64], b_out: &[f64]) -> f64 {
    g_out
        .iter()
        .zip(b_out)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / g_out.len().max(1) as f64
}

/// Allocator input for one observation.
pub fn build_allocator_features(
    x: &[f64],
    g_out: &Prediction,
    b_out: &Prediction,
    set: AllocatorFeatureSet,
) -> Result<Vec<f64>> {
    let classification = matches!(g_out, Prediction::Probabilities(_));
    if set.d_ce && !classification {
        return Err(Error::invalid("d_ce is not defined for regression"));
    }
    let (g, b) = (g_out.as_slice(), b_out.as_slice());
    let mut out = Vec::with_capacity(x.len() + 2 * g.len() + 2);
    if set.x {
        out.extend_from_slice(x);
    }
    if set.g {
        out.extend_from_slice(g);
    }
    if set.b {
        out.extend_from_slice(b);
    }
    if set.d_ce {
        out.push(d_ce(g, b));
    }
    if set.d_mse {
        out.push(d_mse(g, b));
    }
    Ok(out)
}

/// Distance-based scores: `d_ce` for classification, `d_mse` for
/// regression. Ranking by them gives the feature-independent allocator,
/// which prefers the glass box where the two models disagree most.
pub fn feature_independent_scores(g_outs: &[Prediction], b_outs: &[Prediction]) -> Vec<f64> {
    g_outs
        .iter()
        .zip(b_outs)
        .map(|(g, b)| match (g, b) {
            (Prediction::Probabilities(pg), Prediction::Probabilities(pb)) => d_ce(pg, pb),
            _ => d_mse(g.as_slice(), b.as_slice()),
        })
        .collect()
}

/// How the allocator's GBT hyperparameters are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocatorTraining {
    Fixed(Hyper),
    Tuned {
        grid: HyperparameterGrid,
        folds: usize,
    },
}

/// GBT regressor estimating the desirability percentile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedAllocator {
    pub feature_set: AllocatorFeatureSet,
    pub model: Model,
    pub report: Option<FitReport>,
}

fn allocator_dataset(
    data: &Dataset,
    eval: &PairEvaluation,
    set: AllocatorFeatureSet,
    targets: &[f64],
) -> Result<Dataset> {
    let rows = data
        .observations
        .iter()
        .zip(eval.g_out.iter().zip(&eval.b_out))
        .map(|(o, (g, b))| build_allocator_features(&o.x, g, b, set))
        .collect::<Result<Vec<_>>>()?;
    let outputs = eval.g_out.first().map_or(1, |p| p.as_slice().len());
    data.with_features(
        set.names(&data.feature_names, outputs),
        rows,
        Task::Regression,
        targets,
    )
}

/// Fits the allocator on the training set with target `r′`, the training
/// desirability percentile.
pub fn train_learned_allocator(
    train: &Dataset,
    train_eval: &PairEvaluation,
    feature_set: AllocatorFeatureSet,
    training: &AllocatorTraining,
    seed: u64,
) -> Result<LearnedAllocator> {
    feature_set.validate(train.task)?;
    if train_eval.partition.len() != train.len() {
        return Err(Error::invalid(
            "training evaluation does not cover the training set",
        ));
    }
    let ranking = DesirabilityRanking::from_scores(&desirability_scores(train_eval));
    let data = allocator_dataset(train, train_eval, feature_set, &ranking.percentiles)?;
    let (model, report) = match training {
        AllocatorTraining::Fixed(hyper) => {
            if hyper.family() != crate::models::Family::Gbt {
                return Err(Error::invalid(
                    "the allocator is a gradient-boosted regressor",
                ));
            }
            (Model::fit(hyper, &data, seed)?, None)
        }
        AllocatorTraining::Tuned { grid, folds } => {
            let (m, r) = grid_search(grid, &data, *folds, seed)?;
            (m, Some(r))
        }
    };
    Ok(LearnedAllocator {
        feature_set,
        model,
        report,
    })
}

impl LearnedAllocator {
    /// Predicted desirability percentile of every observation.
    pub fn predict_scores(&self, data: &Dataset, eval: &PairEvaluation) -> Result<Vec<f64>> {
        data.observations
            .iter()
            .zip(eval.g_out.iter().zip(&eval.b_out))
            .map(|(o, (g, b))| {
                let features = build_allocator_features(&o.x, g, b, self.feature_set)?;
                self.model.predict(&features)
            })
            .collect()
    }
}

/// Picks, per grid point, the allocator with the higher validation
/// sufficient performance. Ties go to the feature-independent allocator.
pub fn ensemble_allocators(
    learned_scores: &[f64],
    independent_scores: &[f64],
    validation: &SufficiencyPartition,
    grid: &QGrid,
) -> Result<Vec<AllocatorTag>> {
    if learned_scores.len() != validation.len() || independent_scores.len() != validation.len() {
        return Err(Error::invalid(
            "allocator scores do not cover the validation set",
        ));
    }
    let dep = DesirabilityRanking::from_scores(learned_scores);
    let ind = DesirabilityRanking::from_scores(independent_scores);
    Ok(grid
        .points()
        .iter()
        .map(|&q| {
            let t_dep = sufficient_performance(&dep.top_q(q), validation);
            let t_ind = sufficient_performance(&ind.top_q(q), validation);
            if t_dep > t_ind {
                AllocatorTag::FeatureDependent
            } else {
                AllocatorTag::FeatureIndependent
            }
        })
        .collect())
}

/// Maps a desirability percentile to a sufficiency category using the
/// cumulative training proportions in ranking order `Zb → Z0 → Z2 → Zg`.
pub fn estimate_sufficiency_category(percentile: f64, counts: &CategoryCounts) -> Result<Category> {
    let n = counts.total();
    if n == 0 {
        return Err(Error::invalid("category counts are all zero"));
    }
    let n = n as f64;
    let slack = 1e-12;
    let b = counts.n_b as f64 / n;
    let b0 = (counts.n_b + counts.n_0) as f64 / n;
    let b02 = (counts.n_b + counts.n_0 + counts.n_2) as f64 / n;
    Ok(if percentile <= b + slack {
        Category::Zb
    } else if percentile <= b0 + slack {
        Category::Z0
    } else if percentile <= b02 + slack {
        Category::Z2
    } else {
        Category::Zg
    })
}
