use serde::{Deserialize, Serialize};

use super::{ClassWeights, ClassifierModel, Dataset, LearnError, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub depth_cap: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { depth_cap: 12, min_leaf: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// Rows with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

/// Node of a tree stored in preorder; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Weighted class mass of the training rows reaching this node.
    pub counts: [f64; 2],
    pub prediction: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

pub(crate) fn predict_tree(nodes: &[TreeNode], row: &[f64]) -> u8 {
    let mut at = 0;
    loop {
        let node = &nodes[at];
        match &node.split {
            None => return node.prediction,
            Some(s) => at = if row[s.feature] <= s.threshold { s.left } else { s.right },
        }
    }
}

fn gini(c: [f64; 2]) -> f64 {
    let total = c[0] + c[1];
    if total <= 0.0 {
        return 0.0;
    }
    let (p0, p1) = (c[0] / total, c[1] / total);
    1.0 - p0 * p0 - p1 * p1
}

/// Greedy CART with weighted Gini impurity.
///
/// Features are scanned in schema order and thresholds are midpoints between
/// consecutive distinct values; a candidate replaces the incumbent only if it
/// is strictly better, so the first best split wins. Categorical features are
/// split on their level index.
pub fn train_tree(ds: &Dataset, weights: ClassWeights, params: TreeParams) -> Result<ClassifierModel, LearnError> {
    let counts = ds.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(LearnError::SingleClass);
    }
    let mut builder = Builder { ds, weights, params, nodes: Vec::new() };
    let all: Vec<usize> = (0..ds.len()).collect();
    builder.grow(all, 0);
    Ok(ClassifierModel::new(
        super::Family::DecisionTree,
        ds.schema().clone(),
        weights,
        ModelParams::Tree { nodes: builder.nodes },
    ))
}

struct Builder<'a> {
    ds: &'a Dataset,
    weights: ClassWeights,
    params: TreeParams,
    nodes: Vec<TreeNode>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let labels = self.ds.labels();
        let mut counts = [0.0; 2];
        let mut raw = [0usize; 2];
        for &i in &rows {
            let y = labels[i] as usize;
            counts[y] += self.weights.0[y];
            raw[y] += 1;
        }
        let prediction = if counts[1] > counts[0] {
            1
        } else if counts[0] > counts[1] {
            0
        } else {
            u8::from(raw[1] > raw[0])
        };
        let id = self.nodes.len();
        self.nodes.push(TreeNode { counts, prediction, split: None });

        let pure = raw[0] == 0 || raw[1] == 0;
        if pure || depth >= self.params.depth_cap || rows.len() < 2 * self.params.min_leaf.max(1) {
            return id;
        }
        let parent = gini(counts) * (counts[0] + counts[1]);
        let Some(best) = self.best_split(&rows) else { return id };
        if best.impurity >= parent - 1e-12 * parent.max(1.0) {
            return id;
        }
        let x = self.ds.rows();
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| x[i][best.feature] <= best.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id].split = Some(Split { feature: best.feature, threshold: best.threshold, left: l, right: r });
        id
    }

    fn best_split(&self, rows: &[usize]) -> Option<Candidate> {
        let x = self.ds.rows();
        let labels = self.ds.labels();
        let min_leaf = self.params.min_leaf.max(1);
        let total = rows.iter().fold([0.0; 2], |mut c, &i| {
            c[labels[i] as usize] += self.weights.of(labels[i]);
            c
        });
        let mut best: Option<Candidate> = None;
        let mut order = rows.to_vec();
        #[allow(clippy::needless_range_loop)] // `f` is a column index into every row
        for f in 0..self.ds.schema().len() {
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            let mut left = [0.0; 2];
            for k in 0..order.len() - 1 {
                let i = order[k];
                left[labels[i] as usize] += self.weights.of(labels[i]);
                let (v, next) = (x[i][f], x[order[k + 1]][f]);
                if v == next || k + 1 < min_leaf || order.len() - (k + 1) < min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let impurity = gini(left) * (left[0] + left[1]) + gini(right) * (right[0] + right[1]);
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mid = v + (next - v) / 2.0;
                    let threshold = if mid < next { mid } else { v };
                    best = Some(Candidate { feature: f, threshold, impurity });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{class_weights, evaluate, Schema};

    fn ds(xs: Vec<Vec<f64>>, ys: Vec<u8>, names: &[&str]) -> Dataset {
        Dataset::new(Schema::numeric(names), xs, ys).unwrap()
    }

    #[test]
    fn separable_set_gets_one_split() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0]).collect();
        let ys: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let d = ds(xs, ys, &["x"]);
        let m = train_tree(&d, ClassWeights::UNIFORM, TreeParams::default()).unwrap();
        let ModelParams::Tree { nodes } = &m.params else { panic!() };
        assert_eq!(nodes.len(), 3);
        let s = nodes[0].split.as_ref().unwrap();
        assert!((s.threshold - 0.475).abs() < 1e-12);
        assert_eq!(evaluate(&m, &d).unwrap().accuracy, 100.0);
    }

    #[test]
    fn constant_feature_gives_majority_leaf() {
        let d = ds(vec![vec![1.0]; 30], [vec![0u8; 20], vec![1u8; 10]].concat(), &["x"]);
        let m = train_tree(&d, ClassWeights::UNIFORM, TreeParams::default()).unwrap();
        let ModelParams::Tree { nodes } = &m.params else { panic!() };
        assert_eq!(nodes.len(), 1);
        assert_eq!(nodes[0].prediction, 0);
    }

    #[test]
    fn weighting_raises_minority_recall() {
        // x=1 holds 100 negatives and 90 positives; only weighting flips that leaf.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (x, y, n) in [(0.0, 0u8, 800), (1.0, 0, 100), (0.0, 1, 10), (1.0, 1, 90)] {
            xs.extend(std::iter::repeat_n(vec![x], n));
            ys.extend(std::iter::repeat_n(y, n));
        }
        let d = ds(xs, ys, &["x"]);
        let plain = train_tree(&d, ClassWeights::UNIFORM, TreeParams::default()).unwrap();
        let weighted = train_tree(&d, class_weights(d.labels()).unwrap(), TreeParams::default()).unwrap();
        let r0 = evaluate(&plain, &d).unwrap().recall;
        let r1 = evaluate(&weighted, &d).unwrap().recall;
        assert_eq!(r0, 0.0);
        assert_eq!(r1, 90.0);
    }

    #[test]
    fn first_best_split_wins_ties() {
        // Both features separate perfectly; the earlier one must be chosen.
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![(i / 10) as f64, (i / 10) as f64]).collect();
        let ys: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let m = train_tree(&ds(xs, ys, &["a", "b"]), ClassWeights::UNIFORM, TreeParams::default()).unwrap();
        let ModelParams::Tree { nodes } = &m.params else { panic!() };
        assert_eq!(nodes[0].split.as_ref().unwrap().feature, 0);
    }

    #[test]
    fn single_class_rejected() {
        let d = ds(vec![vec![0.0], vec![1.0]], vec![1, 1], &["x"]);
        assert!(matches!(train_tree(&d, ClassWeights::UNIFORM, TreeParams::default()), Err(LearnError::SingleClass)));
    }

    #[test]
    fn min_leaf_and_depth_cap_respected() {
        let xs: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let ys: Vec<u8> = (0..64).map(|i| (i % 2) as u8).collect();
        let d = ds(xs, ys, &["x"]);
        let m = train_tree(&d, ClassWeights::UNIFORM, TreeParams { depth_cap: 3, min_leaf: 4 }).unwrap();
        let ModelParams::Tree { nodes } = &m.params else { panic!() };
        assert!(nodes.len() <= 15);
        fn depth(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at].split {
                None => 0,
                Some(s) => 1 + depth(nodes, s.left).max(depth(nodes, s.right)),
            }
        }
        assert!(depth(nodes, 0) <= 3);
    }
}
