//! CART trees grown best-first on presorted feature columns.
//!
//! The same builder serves classification trees (Gini), regression trees
//! (squared error) and the stage trees of gradient boosting, which split on
//! squared error over residuals but set their own leaf values.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Task};

/// Column-major copy of a dataset's features.
pub(crate) struct Columns {
    pub cols: Vec<Vec<f64>>,
    pub n: usize,
}

impl Columns {
    pub fn from_dataset(data: &Dataset) -> Self {
        let d = data.n_features();
        let mut cols = vec![Vec::with_capacity(data.len()); d];
        for obs in &data.observations {
            for (j, &v) in obs.x.iter().enumerate() {
                cols[j].push(v);
            }
        }
        Columns {
            cols,
            n: data.len(),
        }
    }

    /// Row indices sorted by value, one list per feature.
    pub fn presort(&self) -> Vec<Vec<u32>> {
        self.cols
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..self.n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: Vec<f64>,
    },
}

/// A fitted binary tree stored as a node array rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Depth of the deepest leaf; a single leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct GrowParams {
    pub min_split: usize,
    pub max_leaf: usize,
    pub max_depth: usize,
}

impl GrowParams {
    /// Smallest admissible child size.
    fn min_child(&self) -> usize {
        (self.min_split / 2).max(1)
    }
}

pub(crate) enum SplitTarget<'a> {
    Classes {
        labels: &'a [usize],
        n_classes: usize,
    },
    Values(&'a [f64]),
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Pending {
    node: usize,
    depth: usize,
    /// Member rows, sorted by value, per feature.
    sorted: Vec<Vec<u32>>,
    best: Option<Candidate>,
}

/// Grows a tree on the rows listed in `sorted` (per-feature sorted member
/// lists, all holding the same set of rows).
///
/// Nodes are expanded best-first by impurity decrease (ties to the older
/// node). A node is split only if it holds at least `min_split` rows, is
/// impure, is above `max_depth`, and both children keep at least
/// `max(1, min_split / 2)` rows. Zero-gain splits are allowed.
pub(crate) fn grow(
    columns: &Columns,
    sorted: Vec<Vec<u32>>,
    target: &SplitTarget<'_>,
    params: GrowParams,
    leaf_value: &dyn Fn(&[u32]) -> Vec<f64>,
) -> Tree {
    let mut nodes: Vec<Node> = vec![Node::Leaf { value: Vec::new() }];
    let mut open: Vec<Pending> = Vec::new();
    let mut scratch = vec![false; columns.n];

    let root = Pending {
        best: best_split(columns, &sorted, target, params, 0),
        node: 0,
        depth: 0,
        sorted,
    };
    open.push(root);
    let mut leaves = 1usize;

    while leaves < params.max_leaf {
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.best.map(|c| (i, c.gain, p.node)))
            .fold(None::<(usize, f64, usize)>, |acc, cur| match acc {
                Some(a) if a.1 > cur.1 || (a.1 == cur.1 && a.2 < cur.2) => Some(a),
                _ => Some(cur),
            });
        let Some((pos, _, _)) = pick else { break };
        let parent = open.swap_remove(pos);
        let cand = parent.best.expect("picked node has a candidate");

        let col = &columns.cols[cand.feature];
        for &r in &parent.sorted[cand.feature] {
            scratch[r as usize] = col[r as usize] <= cand.threshold;
        }
        let mut left_sorted = Vec::with_capacity(parent.sorted.len());
        let mut right_sorted = Vec::with_capacity(parent.sorted.len());
        for list in &parent.sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.iter().partition(|&&r| scratch[r as usize]);
            left_sorted.push(l);
            right_sorted.push(r);
        }

        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { value: Vec::new() });
        nodes.push(Node::Leaf { value: Vec::new() });
        nodes[parent.node] = Node::Split {
            feature: cand.feature,
            threshold: cand.threshold,
            left,
            right,
        };
        leaves += 1;
        let depth = parent.depth + 1;
        for (node, sorted) in [(left, left_sorted), (right, right_sorted)] {
            open.push(Pending {
                best: best_split(columns, &sorted, target, params, depth),
                node,
                depth,
                sorted,
            });
        }
    }
    for p in open {
        nodes[p.node] = Node::Leaf {
            value: leaf_value(&p.sorted[0]),
        };
    }
    Tree { nodes }
}

fn best_split(
    columns: &Columns,
    sorted: &[Vec<u32>],
    target: &SplitTarget<'_>,
    params: GrowParams,
    depth: usize,
) -> Option<Candidate> {
    let n = sorted.first().map_or(0, Vec::len);
    if n < params.min_split.max(2) || depth >= params.max_depth {
        return None;
    }
    let min_child = params.min_child();
    if n < 2 * min_child {
        return None;
    }
    let mut best: Option<Candidate> = None;
    match target {
        SplitTarget::Classes { labels, n_classes } => {
            let mut total = vec![0usize; *n_classes];
            for &r in &sorted[0] {
                total[labels[r as usize]] += 1;
            }
            if total.iter().filter(|&&c| c > 0).count() <= 1 {
                return None;
            }
            let total_sq: f64 = total.iter().map(|&c| (c * c) as f64).sum();
            let parent_score = total_sq / n as f64;
            for (f, list) in sorted.iter().enumerate() {
                let col = &columns.cols[f];
                let mut left = vec![0usize; *n_classes];
                let mut left_sq = 0.0f64;
                let mut right_sq = total_sq;
                for i in 0..n - 1 {
                    let r = list[i] as usize;
                    let k = labels[r];
                    let right_k = total[k] - left[k];
                    left_sq += (2 * left[k] + 1) as f64;
                    right_sq -= (2 * right_k - 1) as f64;
                    left[k] += 1;
                    let n_left = i + 1;
                    let n_right = n - n_left;
                    if n_left < min_child || n_right < min_child {
                        continue;
                    }
                    let (a, b) = (col[r], col[list[i + 1] as usize]);
                    if a >= b {
                        continue;
                    }
                    // Decrease of n·Gini: Σc²/n split across the children.
                    let gain = left_sq / n_left as f64 + right_sq / n_right as f64 - parent_score;
                    consider(&mut best, f, a, b, gain);
                }
            }
        }
        SplitTarget::Values(values) => {
            let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
            for &r in &sorted[0] {
                let v = values[r as usize];
                sum += v;
                sum_sq += v * v;
            }
            let sse = sum_sq - sum * sum / n as f64;
            if sse <= 1e-12 * (1.0 + sum_sq) {
                return None;
            }
            let parent_score = sum * sum / n as f64;
            for (f, list) in sorted.iter().enumerate() {
                let col = &columns.cols[f];
                let mut left_sum = 0.0f64;
                for i in 0..n - 1 {
                    let r = list[i] as usize;
                    left_sum += values[r];
                    let n_left = i + 1;
                    let n_right = n - n_left;
                    if n_left < min_child || n_right < min_child {
                        continue;
                    }
                    let (a, b) = (col[r], col[list[i + 1] as usize]);
                    if a >= b {
                        continue;
                    }
                    let right_sum = sum - left_sum;
                    let gain = left_sum * left_sum / n_left as f64
                        + right_sum * right_sum / n_right as f64
                        - parent_score;
                    consider(&mut best, f, a, b, gain);
                }
            }
        }
    }
    best
}

fn consider(best: &mut Option<Candidate>, feature: usize, lo: f64, hi: f64, gain: f64) {
    let gain = gain.max(0.0);
    if best.is_none_or(|b| gain > b.gain) {
        let mid = lo + (hi - lo) / 2.0;
        let threshold = if mid < hi { mid } else { lo };
        *best = Some(Candidate {
            feature,
            threshold,
            gain,
        });
    }
}

/// A single CART tree for classification or regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub task: Task,
    pub n_features: usize,
    pub min_split: usize,
    pub max_leaf: usize,
    pub max_depth: usize,
    pub tree: Tree,
}

impl TreeModel {
    pub fn fit(
        train: &Dataset,
        min_split: usize,
        max_leaf: usize,
        max_depth: usize,
    ) -> crate::Result<TreeModel> {
        if min_split == 0 || max_leaf == 0 || max_depth == 0 {
            return Err(crate::Error::invalid("tree constraints must be positive"));
        }
        if train.is_empty() {
            return Err(crate::Error::invalid("empty training set"));
        }
        let columns = Columns::from_dataset(train);
        let sorted = columns.presort();
        let params = GrowParams {
            min_split,
            max_leaf,
            max_depth,
        };
        let tree = match train.task {
            Task::Classification { n_classes } => {
                let labels: Vec<usize> = train.observations.iter().map(|o| o.class()).collect();
                let freq = |rows: &[u32]| {
                    let mut counts = vec![0.0; n_classes];
                    for &r in rows {
                        counts[labels[r as usize]] += 1.0;
                    }
                    let total = rows.len().max(1) as f64;
                    counts.iter().map(|c| c / total).collect()
                };
                grow(
                    &columns,
                    sorted,
                    &SplitTarget::Classes {
                        labels: &labels,
                        n_classes,
                    },
                    params,
                    &freq,
                )
            }
            Task::Regression => {
                let values = train.targets();
                let mean = |rows: &[u32]| {
                    vec![
                        rows.iter().map(|&r| values[r as usize]).sum::<f64>()
                            / rows.len().max(1) as f64,
                    ]
                };
                grow(
                    &columns,
                    sorted,
                    &SplitTarget::Values(&values),
                    params,
                    &mean,
                )
            }
        };
        Ok(TreeModel {
            task: train.task,
            n_features: train.n_features(),
            min_split,
            max_leaf,
            max_depth,
            tree,
        })
    }

    pub(crate) fn raw(&self, x: &[f64]) -> Vec<f64> {
        self.tree.leaf_value(x).to_vec()
    }
}
