use rand::seq::index::sample;
use rand::Rng;

/// Flattened CART tree. Node 0 is the root; `feature[i] < 0` marks a leaf.
/// Samples go left when `value <= threshold[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub n_classes: usize,
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    /// `n_nodes × n_classes` training-sample class counts per node.
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub max_features: usize,
}

/// Column-major view of a feature matrix.
pub struct Columns<'a> {
    pub cols: &'a [Vec<f64>],
}

impl Tree {
    /// Grows a tree on `samples` (indices into `cols`, duplicates allowed for
    /// bootstrap draws) by greedy Gini minimization.
    pub fn fit<R: Rng>(
        cols: &Columns<'_>,
        labels: &[usize],
        n_classes: usize,
        samples: Vec<usize>,
        params: TreeParams,
        rng: &mut R,
    ) -> Tree {
        let mut t = Tree {
            n_classes,
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            counts: Vec::new(),
        };
        // explicit stack: (node id, samples, depth)
        let root = t.push_node(labels, &samples);
        let mut stack = vec![(root, samples, 0usize)];
        let n_features = cols.cols.len();
        let mtry = params.max_features.clamp(1, n_features.max(1));
        while let Some((node, idx, depth)) = stack.pop() {
            let counts = &t.counts[node * n_classes..(node + 1) * n_classes];
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            if pure || depth >= params.max_depth || idx.len() < params.min_samples_split || n_features == 0 {
                continue;
            }
            let parent_counts: Vec<u32> = counts.to_vec();
            let mut best: Option<(f64, usize, f64)> = None;
            for f in sample(rng, n_features, mtry).into_iter() {
                if let Some((score, thr)) = best_split(&cols.cols[f], labels, &idx, &parent_counts) {
                    if best.is_none_or(|b| score < b.0) {
                        best = Some((score, f, thr));
                    }
                }
            }
            let Some((score, f, thr)) = best else { continue };
            let parent_score = gini_sum(&parent_counts);
            if score >= parent_score - 1e-12 {
                continue;
            }
            let col = &cols.cols[f];
            let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| col[i] <= thr);
            let li = t.push_node(labels, &l);
            let ri = t.push_node(labels, &r);
            t.feature[node] = f as i32;
            t.threshold[node] = thr;
            t.left[node] = li as u32;
            t.right[node] = ri as u32;
            stack.push((ri, r, depth + 1));
            stack.push((li, l, depth + 1));
        }
        t
    }

    fn push_node(&mut self, labels: &[usize], idx: &[usize]) -> usize {
        let id = self.feature.len();
        self.feature.push(-1);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        let base = self.counts.len();
        self.counts.resize(base + self.n_classes, 0);
        for &i in idx {
            self.counts[base + labels[i]] += 1;
        }
        id
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, n: usize) -> usize {
            if t.feature[n] < 0 {
                0
            } else {
                1 + go(t, t.left[n] as usize).max(go(t, t.right[n] as usize))
            }
        }
        go(self, 0)
    }

    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut n = 0;
        while self.feature[n] >= 0 {
            n = if row[self.feature[n] as usize] <= self.threshold[n] {
                self.left[n] as usize
            } else {
                self.right[n] as usize
            };
        }
        n
    }

    /// Class frequencies of the leaf reached by `row`, added into `out`.
    pub fn accumulate_proba(&self, row: &[f64], out: &mut [f64]) {
        let leaf = self.leaf_of(row);
        let c = &self.counts[leaf * self.n_classes..(leaf + 1) * self.n_classes];
        let total: u32 = c.iter().sum();
        if total == 0 {
            return;
        }
        for (o, &v) in out.iter_mut().zip(c) {
            *o += v as f64 / total as f64;
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        self.accumulate_proba(row, &mut p);
        p
    }
}

/// `n · gini` for a count vector (the weighted impurity contribution).
fn gini_sum(counts: &[u32]) -> f64 {
    let n: u32 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    n - sq / n
}

/// Best threshold on one feature: minimizes `n_l·gini_l + n_r·gini_r`.
/// Thresholds are midpoints between consecutive distinct values.
fn best_split(col: &[f64], labels: &[usize], idx: &[usize], parent: &[u32]) -> Option<(f64, f64)> {
    let mut order: Vec<(f64, usize)> = idx.iter().map(|&i| (col[i], labels[i])).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    if order.first()?.0 == order.last()?.0 {
        return None;
    }
    let k = parent.len();
    let n = order.len() as f64;
    let mut left = vec![0f64; k];
    let right_init: Vec<f64> = parent.iter().map(|&c| c as f64).collect();
    let sq_total: f64 = right_init.iter().map(|c| c * c).sum();
    let (mut sq_l, mut sq_r) = (0.0, sq_total);
    let mut right = right_init;
    let mut best: Option<(f64, f64)> = None;
    for s in 0..order.len() - 1 {
        let c = order[s].1;
        sq_l += 2.0 * left[c] + 1.0;
        left[c] += 1.0;
        sq_r += -2.0 * right[c] + 1.0;
        right[c] -= 1.0;
        if order[s].0 == order[s + 1].0 {
            continue;
        }
        let nl = (s + 1) as f64;
        let nr = n - nl;
        let score = (nl - sq_l / nl) + (nr - sq_r / nr);
        if best.is_none_or(|b| score < b.0) {
            let thr = 0.5 * (order[s].0 + order[s + 1].0);
            // midpoint can round up to the right value for adjacent floats
            let thr = if thr >= order[s + 1].0 { order[s].0 } else { thr };
            best = Some((score, thr));
        }
    }
    best
}
