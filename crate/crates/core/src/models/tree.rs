//! CART decision trees on column-major data with sample weights.
//!
//! Impurity is the weighted variance of the target. For 0/1 targets that
//! is half the Gini index, so one code path serves both criteria; the
//! `Gini` criterion only rescales importances and node impurities.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitter {
    /// Exhaustive search over midpoints between distinct values.
    Best,
    /// One uniform threshold per candidate feature (extremely randomized trees).
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub splitter: Splitter,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Number of features examined per split; `None` means all.
    pub max_features: Option<usize>,
}

impl TreeParams {
    pub fn new(criterion: Criterion) -> Self {
        TreeParams {
            criterion,
            splitter: Splitter::Best,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    /// Total weighted impurity decrease per feature.
    pub impurity_decrease: Vec<f64>,
}

/// Feature columns of a training set. `cols[f][i]` is feature `f` of row `i`.
pub struct Columns<'a> {
    pub cols: &'a [Vec<f64>],
    pub n_rows: usize,
}

impl<'a> Columns<'a> {
    pub fn new(cols: &'a [Vec<f64>]) -> Self {
        let n_rows = cols.first().map_or(0, |c| c.len());
        Columns { cols, n_rows }
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

pub fn to_columns(x: ndarray::ArrayView2<f64>) -> Vec<Vec<f64>> {
    x.columns().into_iter().map(|c| c.to_vec()).collect()
}

#[derive(Clone, Copy, Default)]
struct Sums {
    w: f64,
    s: f64,
    q: f64,
    n: usize,
}

impl Sums {
    fn add(&mut self, y: f64, w: f64) {
        self.w += w;
        self.s += w * y;
        self.q += w * y * y;
        self.n += 1;
    }

    fn minus(self, o: Sums) -> Sums {
        Sums {
            w: self.w - o.w,
            s: self.s - o.s,
            q: self.q - o.q,
            n: self.n - o.n,
        }
    }

    /// Weighted variance.
    fn impurity(&self) -> f64 {
        if self.w <= 0.0 {
            return 0.0;
        }
        let m = self.s / self.w;
        (self.q / self.w - m * m).max(0.0)
    }

    /// Sum of squared deviations, i.e. weight times impurity.
    fn sse(&self) -> f64 {
        if self.w <= 0.0 {
            return 0.0;
        }
        (self.q - self.s * self.s / self.w).max(0.0)
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn better(c: &Candidate, best: &Option<Candidate>) -> bool {
    match best {
        None => true,
        Some(b) => {
            let eps = 1e-12 * b.gain.abs().max(1e-300);
            c.gain > b.gain + eps
                || (c.gain >= b.gain - eps && (c.feature, c.threshold) < (b.feature, b.threshold))
        }
    }
}

struct Builder<'a, 'r> {
    x: &'a Columns<'a>,
    y: &'a [f64],
    w: &'a [f64],
    params: TreeParams,
    rng: &'r mut ChaCha8Rng,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    scratch: Vec<(f64, usize)>,
}

impl Builder<'_, '_> {
    fn sums(&self, rows: &[usize]) -> Sums {
        let mut s = Sums::default();
        for &i in rows {
            s.add(self.y[i], self.w[i]);
        }
        s
    }

    fn leaf(&mut self, total: &Sums) -> usize {
        let value = if total.w > 0.0 {
            total.s / total.w
        } else {
            0.0
        };
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    fn build(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let total = self.sums(rows);
        let stop = rows.len() < self.params.min_samples_split
            || rows.len() < 2 * self.params.min_samples_leaf
            || self.params.max_depth.is_some_and(|d| depth >= d)
            || total.impurity() <= 1e-12 * (total.q / total.w.max(1e-300)).max(1e-300);
        if stop {
            return self.leaf(&total);
        }
        let Some(best) = self.find_split(rows, &total) else {
            return self.leaf(&total);
        };

        let f = &self.x.cols[best.feature];
        let mut split = 0;
        for k in 0..rows.len() {
            if f[rows[k]] <= best.threshold {
                rows.swap(k, split);
                split += 1;
            }
        }
        // keep each side in ascending row order so the tree does not depend
        // on the partition's swap pattern
        let (left, right) = rows.split_at_mut(split);
        left.sort_unstable();
        right.sort_unstable();

        self.importance[best.feature] += best.gain;
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn find_split(&mut self, rows: &[usize], total: &Sums) -> Option<Candidate> {
        let p = self.x.n_features();
        let wanted = self.params.max_features.unwrap_or(p).clamp(1, p);
        let mut order: Vec<usize> = (0..p).collect();
        if wanted < p {
            order.shuffle(self.rng);
        }
        let mut best: Option<Candidate> = None;
        let mut informative = 0;
        for &f in &order {
            if informative >= wanted {
                break;
            }
            let candidate = match self.params.splitter {
                Splitter::Best => self.best_threshold(f, rows, total),
                Splitter::Random => self.random_threshold(f, rows, total),
            };
            // constant features do not count towards the budget
            let Some(c) = candidate else { continue };
            informative += 1;
            if let Some(c) = c {
                if better(&c, &best) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// `None` if the feature is constant on `rows`; `Some(None)` if it has
    /// no admissible split.
    fn best_threshold(
        &mut self,
        f: usize,
        rows: &[usize],
        total: &Sums,
    ) -> Option<Option<Candidate>> {
        let col = &self.x.cols[f];
        self.scratch.clear();
        self.scratch.extend(rows.iter().map(|&i| (col[i], i)));
        self.scratch
            .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (lo, hi) = (self.scratch[0].0, self.scratch[self.scratch.len() - 1].0);
        if lo >= hi {
            return None;
        }
        let msl = self.params.min_samples_leaf;
        let parent = total.sse();
        let mut left = Sums::default();
        let mut best: Option<Candidate> = None;
        let n = self.scratch.len();
        for k in 0..n - 1 {
            let (v, i) = self.scratch[k];
            left.add(self.y[i], self.w[i]);
            let next = self.scratch[k + 1].0;
            if v >= next || left.n < msl || n - left.n < msl {
                continue;
            }
            let right = total.minus(left);
            let gain = parent - left.sse() - right.sse();
            let mut threshold = 0.5 * (v + next);
            if threshold >= next {
                threshold = v;
            }
            let c = Candidate {
                feature: f,
                threshold,
                gain,
            };
            if better(&c, &best) {
                best = Some(c);
            }
        }
        Some(best)
    }

    fn random_threshold(
        &mut self,
        f: usize,
        rows: &[usize],
        total: &Sums,
    ) -> Option<Option<Candidate>> {
        let col = &self.x.cols[f];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in rows {
            lo = lo.min(col[i]);
            hi = hi.max(col[i]);
        }
        if lo >= hi {
            return None;
        }
        let threshold = self.rng.gen_range(lo..hi);
        let mut left = Sums::default();
        for &i in rows {
            if col[i] <= threshold {
                left.add(self.y[i], self.w[i]);
            }
        }
        let msl = self.params.min_samples_leaf;
        if left.n < msl || rows.len() - left.n < msl {
            return Some(None);
        }
        let right = total.minus(left);
        let gain = total.sse() - left.sse() - right.sse();
        Some(Some(Candidate {
            feature: f,
            threshold,
            gain,
        }))
    }
}

impl Tree {
    /// Fits a tree on the rows with positive weight. `y` must be 0/1 for the
    /// Gini criterion.
    pub fn fit(
        x: &Columns,
        y: &[f64],
        w: &[f64],
        params: TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        let mut rows: Vec<usize> = (0..x.n_rows).filter(|&i| w[i] > 0.0).collect();
        let mut b = Builder {
            x,
            y,
            w,
            params,
            rng,
            nodes: Vec::new(),
            importance: vec![0.0; x.n_features()],
            scratch: Vec::with_capacity(rows.len()),
        };
        if rows.is_empty() {
            b.nodes.push(Node::Leaf { value: 0.0 });
        } else {
            b.build(&mut rows, 0);
        }
        let scale = if params.criterion == Criterion::Gini {
            2.0
        } else {
            1.0
        };
        Tree {
            nodes: b.nodes,
            n_features: x.n_features(),
            impurity_decrease: b.importance.into_iter().map(|v| v * scale).collect(),
        }
    }

    /// Index of the leaf reached by `row`.
    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_of(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_of returns leaves"),
        }
    }

    pub fn set_leaf_value(&mut self, id: usize, v: f64) {
        if let Node::Leaf { value } = &mut self.nodes[id] {
            *value = v;
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, id: usize) -> usize {
            match t.nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Impurity decreases normalized to sum 1 (all zeros for a single leaf).
    pub fn normalized_importance(&self) -> Vec<f64> {
        normalize(&self.impurity_decrease)
    }
}

pub(crate) fn normalize(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter().map(|x| x / total).collect()
    } else {
        vec![0.0; v.len()]
    }
}
