//! Binary decision trees on numeric features.
//!
//! Splits send `x[feature] <= threshold` left. Thresholds are midpoints
//! between consecutive distinct values of the node's rows. Candidate splits
//! are scanned by ascending feature index, then ascending threshold, and a
//! later candidate only wins if strictly better.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::MatrixView;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Flat node arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

impl DecisionTree {
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("tree has no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = *node
            {
                if feature >= n_features || !threshold.is_finite() {
                    return Err(Error::InvalidInput(format!("bad split at node {i}")));
                }
                // children always come after their parent, so there are no cycles
                if left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::InvalidInput(format!("bad children at node {i}")));
                }
            }
        }
        Ok(Self { nodes, n_features })
    }

    /// A single-leaf tree.
    pub fn constant(value: f64, n_features: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
            n_features,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub(crate) fn scale_leaves(&mut self, factor: f64) {
        for node in &mut self.nodes {
            if let Node::Leaf { value } = node {
                *value *= factor;
            }
        }
    }
}

/// Growth limits for one tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Features examined per split; all features when `>= n_features`.
    pub max_features: usize,
}

/// Column-major copy of a training matrix, shared by all trees of an ensemble.
pub(crate) struct Columns {
    cols: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Columns {
    pub(crate) fn new(x: MatrixView<'_>) -> Self {
        let n_rows = x.n_rows();
        let cols = (0..x.n_cols())
            .map(|j| (0..n_rows).map(|i| x.get(i, j)).collect())
            .collect();
        Self { cols, n_rows }
    }

    pub(crate) fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub(crate) fn n_features(&self) -> usize {
        self.cols.len()
    }
}

/// Split cost over additive per-side statistics.
pub(crate) trait Criterion {
    type Stats: Copy + Default;
    fn add(&self, s: &mut Self::Stats, row: usize);
    fn diff(total: Self::Stats, part: Self::Stats) -> Self::Stats;
    /// Impurity of one side, scaled by its size; lower is better.
    fn cost(s: &Self::Stats) -> f64;
    fn is_pure(s: &Self::Stats) -> bool;
    fn leaf_value(&self, rows: &[usize]) -> f64;
}

/// Gini impurity on 0/1 labels. Leaves hold the positive fraction.
pub(crate) struct GiniCriterion<'a> {
    pub labels: &'a [u8],
}

#[derive(Clone, Copy, Default)]
pub(crate) struct ClassStats {
    n: f64,
    pos: f64,
}

impl Criterion for GiniCriterion<'_> {
    type Stats = ClassStats;

    #[inline]
    fn add(&self, s: &mut ClassStats, row: usize) {
        s.n += 1.0;
        s.pos += f64::from(self.labels[row]);
    }

    fn diff(total: ClassStats, part: ClassStats) -> ClassStats {
        ClassStats {
            n: total.n - part.n,
            pos: total.pos - part.pos,
        }
    }

    #[inline]
    fn cost(s: &ClassStats) -> f64 {
        if s.n == 0.0 {
            0.0
        } else {
            // n · (1 − p² − (1 − p)²)
            2.0 * s.pos * (s.n - s.pos) / s.n
        }
    }

    fn is_pure(s: &ClassStats) -> bool {
        s.pos == 0.0 || s.pos == s.n
    }

    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let pos: usize = rows.iter().map(|&i| usize::from(self.labels[i])).sum();
        pos as f64 / rows.len() as f64
    }
}

/// Squared error on gradient-boosting residuals, with leaves set by one
/// Newton step: `Σ residual / Σ hessian`.
pub(crate) struct NewtonCriterion<'a> {
    pub residuals: &'a [f64],
    pub hessians: &'a [f64],
}

#[derive(Clone, Copy, Default)]
pub(crate) struct SumStats {
    n: f64,
    sum: f64,
}

impl Criterion for NewtonCriterion<'_> {
    type Stats = SumStats;

    #[inline]
    fn add(&self, s: &mut SumStats, row: usize) {
        s.n += 1.0;
        s.sum += self.residuals[row];
    }

    fn diff(total: SumStats, part: SumStats) -> SumStats {
        SumStats {
            n: total.n - part.n,
            sum: total.sum - part.sum,
        }
    }

    #[inline]
    fn cost(s: &SumStats) -> f64 {
        // SSE minus the split-independent Σr² term
        if s.n == 0.0 {
            0.0
        } else {
            -s.sum * s.sum / s.n
        }
    }

    fn is_pure(_: &SumStats) -> bool {
        false
    }

    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let num: f64 = rows.iter().map(|&i| self.residuals[i]).sum();
        let den: f64 = rows.iter().map(|&i| self.hessians[i]).sum();
        if den.abs() < 1e-150 {
            0.0
        } else {
            num / den
        }
    }
}

struct Builder<'a, C: Criterion, R: Rng> {
    cols: &'a Columns,
    criterion: &'a C,
    params: TreeParams,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
    scratch: Vec<(f64, usize)>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    cost: f64,
}

impl<C: Criterion, R: Rng> Builder<'_, C, R> {
    fn build(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });

        let mut total = C::Stats::default();
        for &i in rows.iter() {
            self.criterion.add(&mut total, i);
        }
        let split = if depth >= self.params.max_depth || rows.len() < 2 || C::is_pure(&total) {
            None
        } else {
            self.best_split(rows, total)
        };
        let Some(split) = split else {
            self.nodes[id] = Node::Leaf {
                value: self.criterion.leaf_value(rows),
            };
            return id;
        };

        let col = &self.cols.cols[split.feature];
        let mut k = 0;
        for j in 0..rows.len() {
            if col[rows[j]] <= split.threshold {
                rows.swap(j, k);
                k += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(k);
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.cols.n_features();
        let k = self.params.max_features.max(1);
        match self.rng.as_deref_mut() {
            Some(rng) if k < d => {
                let mut f = index::sample(rng, d, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize], total: C::Stats) -> Option<BestSplit> {
        let parent_cost = C::cost(&total);
        let mut best: Option<BestSplit> = None;
        for f in self.candidate_features() {
            let col = &self.cols.cols[f];
            self.scratch.clear();
            self.scratch.extend(rows.iter().map(|&i| (col[i], i)));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            let mut left = C::Stats::default();
            for j in 0..self.scratch.len() - 1 {
                self.criterion.add(&mut left, self.scratch[j].1);
                let (lo, hi) = (self.scratch[j].0, self.scratch[j + 1].0);
                if lo == hi {
                    continue;
                }
                let cost = C::cost(&left) + C::cost(&C::diff(total, left));
                let improves = match &best {
                    None => cost < parent_cost - 1e-12 * parent_cost.abs().max(1.0),
                    Some(b) => cost < b.cost - 1e-12 * b.cost.abs().max(1.0),
                };
                if improves {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        cost,
                    });
                }
            }
        }
        best
    }
}

/// Grow a tree on `rows` (indices into `cols`, repeats allowed).
pub(crate) fn grow<C: Criterion, R: Rng>(
    cols: &Columns,
    criterion: &C,
    mut rows: Vec<usize>,
    params: TreeParams,
    rng: Option<&mut R>,
) -> DecisionTree {
    let mut b = Builder {
        cols,
        criterion,
        params,
        rng,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(rows.len()),
    };
    if rows.is_empty() {
        return DecisionTree::constant(0.0, cols.n_features());
    }
    b.build(&mut rows, 0);
    DecisionTree {
        nodes: b.nodes,
        n_features: cols.n_features(),
    }
}

/// Classification tree with Gini splits on all rows and all features.
pub fn fit_classification_tree(x: MatrixView<'_>, labels: &[u8], max_depth: usize) -> Result<DecisionTree> {
    if x.n_rows() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} labels",
            x.n_rows(),
            labels.len()
        )));
    }
    let cols = Columns::new(x);
    let params = TreeParams {
        max_depth,
        max_features: cols.n_features(),
    };
    let rows = (0..cols.n_rows()).collect();
    Ok(grow::<_, rand_chacha::ChaCha8Rng>(
        &cols,
        &GiniCriterion { labels },
        rows,
        params,
        None,
    ))
}
