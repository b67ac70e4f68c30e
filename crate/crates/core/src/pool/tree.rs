//! CART regression trees grown on presorted feature columns.
//!
//! Splits minimize the summed squared error of the children. Ties in the
//! impurity reduction keep the first candidate seen, which scans features in
//! ascending index order and thresholds in ascending value order.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<T> {
    Leaf {
        value: T,
    },
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> RegressionTree<T> {
    /// Single-leaf tree.
    pub fn constant(value: T) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[T]) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { .. } => return k,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_row(&self, x: &[T]) -> T {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => *value,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    /// Overwrites the value stored at leaf `k`.
    pub fn set_leaf(&mut self, k: usize, value: T) {
        if let Node::Leaf { value: v } = &mut self.nodes[k] {
            *v = value;
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n, Node::Leaf { .. }))
            .map(|(k, _)| k)
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[Node<T>], k: usize) -> usize {
            match &nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Column-major copy of a design matrix with each feature's rows presorted.
pub struct SortedColumns<T> {
    columns: Vec<Vec<T>>,
    order: Vec<Vec<usize>>,
}

impl<T: Real> SortedColumns<T> {
    pub fn new<'a>(rows: impl Iterator<Item = &'a [T]>, n_cols: usize) -> Self {
        let mut columns = vec![Vec::new(); n_cols];
        for r in rows {
            for (c, &v) in r.iter().enumerate() {
                columns[c].push(v);
            }
        }
        let order = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<usize> = (0..col.len()).collect();
                idx.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap_or(std::cmp::Ordering::Equal));
                idx
            })
            .collect();
        SortedColumns { columns, order }
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` uses all.
    pub max_features: Option<usize>,
}

/// Result of growing a tree on a sample.
pub struct FittedTree<T> {
    pub tree: RegressionTree<T>,
    /// Leaf index reached by each sample slot.
    pub leaf_of_slot: Vec<usize>,
}

struct Grower<'a, T, R> {
    data: &'a SortedColumns<T>,
    targets: &'a [T],
    slot_row: &'a [usize],
    params: TreeParams,
    rng: &'a mut R,
    sorted: Vec<Vec<usize>>,
    scratch: Vec<usize>,
    go_left: Vec<bool>,
    nodes: Vec<Node<T>>,
    leaf_of_slot: Vec<usize>,
}

/// Grows a tree on `slot_row` (row index of each sample slot; repeats allowed)
/// fitting `targets[slot]`.
pub fn grow_tree<T: Real, R: Rng>(
    data: &SortedColumns<T>,
    slot_row: &[usize],
    targets: &[T],
    params: TreeParams,
    rng: &mut R,
) -> FittedTree<T> {
    debug_assert_eq!(slot_row.len(), targets.len());
    let n_rows = data.n_rows();
    let m = slot_row.len();
    // bucket slots by row so the global row order yields slot order per feature
    let mut start = vec![0usize; n_rows + 1];
    for &r in slot_row {
        start[r + 1] += 1;
    }
    for r in 0..n_rows {
        start[r + 1] += start[r];
    }
    let mut fill = start.clone();
    let mut by_row = vec![0usize; m];
    for (s, &r) in slot_row.iter().enumerate() {
        by_row[fill[r]] = s;
        fill[r] += 1;
    }
    let sorted = data
        .order
        .iter()
        .map(|ord| {
            let mut v = Vec::with_capacity(m);
            for &r in ord {
                v.extend_from_slice(&by_row[start[r]..start[r + 1]]);
            }
            v
        })
        .collect();

    let mut g = Grower {
        data,
        targets,
        slot_row,
        params,
        rng,
        sorted,
        scratch: vec![0; m],
        go_left: vec![false; m],
        nodes: Vec::new(),
        leaf_of_slot: vec![0; m],
    };
    if m == 0 {
        return FittedTree {
            tree: RegressionTree::constant(T::zero()),
            leaf_of_slot: Vec::new(),
        };
    }
    g.grow(0, m, 0);
    FittedTree {
        tree: RegressionTree { nodes: g.nodes },
        leaf_of_slot: g.leaf_of_slot,
    }
}

struct Best<T> {
    gain: T,
    feature: usize,
    threshold: T,
    n_left: usize,
}

impl<'a, T: Real, R: Rng> Grower<'a, T, R> {
    fn value(&self, slot: usize, f: usize) -> T {
        self.data.columns[f][self.slot_row[slot]]
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        let n = hi - lo;
        let slots = &self.sorted[0][lo..hi];
        let sum: T = slots.iter().map(|&s| self.targets[s]).sum();
        let mean = sum / T::of_usize(n);
        self.nodes.push(Node::Leaf { value: mean });

        let pure = slots.iter().all(|&s| self.targets[s] == self.targets[slots[0]]);
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let min_leaf = self.params.min_samples_leaf.max(1);
        if pure || !depth_ok || n < 2 * min_leaf {
            self.mark_leaf(lo, hi, id);
            return id;
        }

        let d = self.data.n_cols();
        let mut features: Vec<usize> = match self.params.max_features {
            Some(k) if k < d => {
                let mut f = sample(self.rng, d, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let mut best = self.search(lo, hi, sum, &features, min_leaf);
        if best.is_none() && features.len() < d {
            // sampled features were all constant here: fall back to the rest
            features = (0..d).filter(|f| !features.contains(f)).collect();
            best = self.search(lo, hi, sum, &features, min_leaf);
        }
        let Some(best) = best else {
            self.mark_leaf(lo, hi, id);
            return id;
        };

        for &s in &self.sorted[best.feature][lo..hi] {
            self.go_left[s] = self.value(s, best.feature) <= best.threshold;
        }
        // stable partition of every feature's segment through the scratch buffer
        let buf = &mut self.scratch[..n];
        for f in 0..d {
            let seg = &mut self.sorted[f][lo..hi];
            let (mut li, mut ri) = (0, best.n_left);
            for &s in seg.iter() {
                if self.go_left[s] {
                    buf[li] = s;
                    li += 1;
                } else {
                    buf[ri] = s;
                    ri += 1;
                }
            }
            seg.copy_from_slice(buf);
        }

        let mid = lo + best.n_left;
        let left = self.grow(lo, mid, depth + 1);
        let right = self.grow(mid, hi, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn mark_leaf(&mut self, lo: usize, hi: usize, id: usize) {
        for &s in &self.sorted[0][lo..hi] {
            self.leaf_of_slot[s] = id;
        }
    }

    fn search(&self, lo: usize, hi: usize, total: T, features: &[usize], min_leaf: usize) -> Option<Best<T>> {
        let n = hi - lo;
        let nt = T::of_usize(n);
        let parent = total * total / nt;
        let mut best: Option<Best<T>> = None;
        for &f in features {
            let seg = &self.sorted[f][lo..hi];
            let mut left_sum = T::zero();
            for k in 0..n - 1 {
                let s = seg[k];
                left_sum = left_sum + self.targets[s];
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let v = self.value(s, f);
                let v_next = self.value(seg[k + 1], f);
                if !(v < v_next) {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / T::of_usize(nl) + right_sum * right_sum / T::of_usize(nr) - parent;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = (v + v_next) / T::of(2.0);
                    if !(threshold < v_next) {
                        threshold = v;
                    }
                    best = Some(Best {
                        gain,
                        feature: f,
                        threshold,
                        n_left: nl,
                    });
                }
            }
        }
        best.filter(|b| b.gain > T::zero())
    }
}
