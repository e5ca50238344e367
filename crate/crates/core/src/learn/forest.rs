use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ForestParams, LabeledDataset};
use crate::exec::Execution;

/// Flat tree node. Rows with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Fraction of malicious training rows that reached this leaf.
        malicious: f64,
    },
}

/// Decision tree stored as a node table; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn malicious_probability(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { malicious } => return malicious,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, left).max(walk(nodes, right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub dim: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mean of the trees' leaf probabilities.
    pub fn malicious_probability(&self, row: &[f64]) -> f64 {
        let total: f64 = self
            .trees
            .iter()
            .map(|t| t.malicious_probability(row))
            .sum();
        total / self.trees.len() as f64
    }
}

fn gini(malicious: usize, total: usize) -> f64 {
    let p = malicious as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

struct Grower<'a> {
    data: &'a LabeledDataset,
    params: &'a ForestParams,
    max_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
    // scratch buffer of (value, is_malicious)
    column: Vec<(f64, bool)>,
}

impl Grower<'_> {
    fn malicious(&self, i: usize) -> bool {
        self.data.labels()[i].is_malicious()
    }

    /// Best split over randomly ordered features, stopping once
    /// `max_features` non-constant ones have been examined.
    fn best_split(&mut self, members: &[usize]) -> Option<Split> {
        let dim = self.data.dim();
        let mut features: Vec<usize> = (0..dim).collect();
        features.shuffle(&mut self.rng);
        let min_leaf = self.params.min_leaf;
        let n = members.len();
        let total_mal = members.iter().filter(|&&i| self.malicious(i)).count();
        let mut best: Option<Split> = None;
        let mut examined = 0;
        for feature in features {
            if examined == self.max_features {
                break;
            }
            self.column.clear();
            let rows = self.data.rows();
            let labels = self.data.labels();
            self.column.extend(
                members
                    .iter()
                    .map(|&i| (rows[i][feature], labels[i].is_malicious())),
            );
            self.column.sort_by(|a, b| a.0.total_cmp(&b.0));
            if self.column[0].0 == self.column[n - 1].0 {
                continue;
            }
            examined += 1;
            let mut left_mal = 0;
            for i in 0..n - 1 {
                left_mal += usize::from(self.column[i].1);
                let (lo, hi) = (self.column[i].0, self.column[i + 1].0);
                let left = i + 1;
                if lo == hi || left < min_leaf || n - left < min_leaf {
                    continue;
                }
                let right = n - left;
                let impurity = (left as f64 * gini(left_mal, left)
                    + right as f64 * gini(total_mal - left_mal, right))
                    / n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(Split {
                        feature,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }

    fn grow(mut self, sample: Vec<usize>) -> Tree {
        self.nodes.push(TreeNode::Leaf { malicious: 0.0 });
        let mut pending = vec![(0usize, sample, 0usize)];
        while let Some((slot, members, depth)) = pending.pop() {
            let n = members.len();
            let mal = members.iter().filter(|&&i| self.malicious(i)).count();
            let leaf = TreeNode::Leaf {
                malicious: mal as f64 / n as f64,
            };
            let stop = mal == 0
                || mal == n
                || n < 2 * self.params.min_leaf
                || self.params.max_depth.is_some_and(|d| depth >= d);
            let split = if stop {
                None
            } else {
                self.best_split(&members)
            };
            let Some(split) = split else {
                self.nodes[slot] = leaf;
                continue;
            };
            let rows = self.data.rows();
            let (left, right): (Vec<usize>, Vec<usize>) = members
                .iter()
                .partition(|&&i| rows[i][split.feature] <= split.threshold);
            let (l, r) = (self.nodes.len(), self.nodes.len() + 1);
            self.nodes.push(TreeNode::Leaf { malicious: 0.0 });
            self.nodes.push(TreeNode::Leaf { malicious: 0.0 });
            self.nodes[slot] = TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: l,
                right: r,
            };
            pending.push((r, right, depth + 1));
            pending.push((l, left, depth + 1));
        }
        Tree { nodes: self.nodes }
    }
}

/// One tree on a bootstrap sample drawn with `seed`.
pub(crate) fn fit_tree(data: &LabeledDataset, params: &ForestParams, seed: u64) -> Tree {
    let dim = data.dim();
    let max_features = params
        .max_features
        .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
        .min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.len();
    let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    Grower {
        data,
        params,
        max_features,
        rng,
        nodes: Vec::new(),
        column: Vec::with_capacity(n),
    }
    .grow(sample)
}

/// Tree `t` uses seed `seed + t`, so the forest is the same whichever
/// execution strategy schedules the trees.
pub(crate) fn fit_forest(
    data: &LabeledDataset,
    params: &ForestParams,
    seed: u64,
    exec: Execution,
) -> Forest {
    let trees = exec.map_range(params.trees, |t| {
        fit_tree(data, params, seed.wrapping_add(t as u64))
    });
    Forest {
        dim: data.dim(),
        trees,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Label;
    use crate::learn::{train, HyperParams, ModelKind, ModelParams};
    use rand::Rng;

    fn stump(feature: usize, threshold: f64, left: f64, right: f64) -> Tree {
        Tree {
            nodes: vec![
                TreeNode::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                TreeNode::Leaf { malicious: left },
                TreeNode::Leaf { malicious: right },
            ],
        }
    }

    #[test]
    fn stump_vote_matches_hand_evaluation() {
        let forest = Forest {
            dim: 2,
            trees: vec![
                stump(0, 0.5, 0.0, 1.0),
                stump(1, 2.0, 1.0, 0.0),
                stump(0, 1.5, 0.0, 1.0),
            ],
        };
        let model = ModelParams::Rf(forest);
        // per-tree leaf values worked out by hand
        let cases = [
            ([0.0, 0.0], [0.0, 1.0, 0.0], Label::Benign),
            ([1.0, 0.0], [1.0, 1.0, 0.0], Label::Malicious),
            ([1.0, 3.0], [1.0, 0.0, 0.0], Label::Benign),
            ([2.0, 3.0], [1.0, 0.0, 1.0], Label::Malicious),
            ([0.2, 5.0], [0.0, 0.0, 0.0], Label::Benign),
        ];
        for (x, votes, expected) in cases {
            let p: f64 = votes.iter().sum::<f64>() / 3.0;
            assert_eq!(p > 0.5, expected == Label::Malicious);
            assert_eq!(model.predict_row(&x), expected, "{x:?}");
        }
    }

    #[test]
    fn even_split_ties_to_benign() {
        let forest = Forest {
            dim: 1,
            trees: vec![stump(0, 0.0, 0.0, 1.0), stump(0, 0.0, 1.0, 0.0)],
        };
        assert_eq!(ModelParams::Rf(forest).predict_row(&[1.0]), Label::Benign);
    }

    fn noisy(seed: u64, n: usize) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let labels = rows
            .iter()
            .map(|r| {
                let flip = rng.gen_bool(0.15);
                if (r[0] + r[1] > 1.0) ^ flip {
                    Label::Malicious
                } else {
                    Label::Benign
                }
            })
            .collect();
        LabeledDataset::new(rows, labels).unwrap()
    }

    fn accuracy(predict: impl Fn(&[f64]) -> bool, data: &LabeledDataset) -> f64 {
        let hits = data
            .rows()
            .iter()
            .zip(data.labels())
            .filter(|(r, l)| predict(r) == l.is_malicious())
            .count();
        hits as f64 / data.len() as f64
    }

    #[test]
    fn forest_beats_single_trees_on_training_data() {
        let params = ForestParams {
            trees: 25,
            ..ForestParams::default()
        };
        let mut wins = 0;
        let trials = 20;
        for seed in 0..trials {
            let data = noisy(seed, 120);
            let forest = fit_forest(&data, &params, seed, Execution::default());
            let forest_acc = accuracy(|r| forest.malicious_probability(r) > 0.5, &data);
            let best_tree = forest
                .trees
                .iter()
                .map(|t| accuracy(|r| t.malicious_probability(r) > 0.5, &data))
                .fold(0.0, f64::max);
            if forest_acc >= best_tree {
                wins += 1;
            }
        }
        assert!(wins * 10 >= trials * 9, "forest won {wins}/{trials}");
    }

    #[test]
    fn unlimited_trees_fit_distinct_rows_exactly() {
        let data = noisy(3, 80);
        let params = ForestParams::default();
        let tree = fit_tree(
            &data,
            &ForestParams {
                max_features: Some(4),
                ..params
            },
            1,
        );
        for node in &tree.nodes {
            if let TreeNode::Split { threshold, .. } = node {
                assert!(threshold.is_finite());
            }
        }
        let shallow = fit_tree(
            &data,
            &ForestParams {
                max_depth: Some(2),
                ..params
            },
            1,
        );
        assert!(shallow.depth() <= 2);
    }

    #[test]
    fn parallel_and_sequential_forests_match() {
        let data = noisy(5, 100);
        let params = ForestParams {
            trees: 16,
            ..ForestParams::default()
        };
        assert_eq!(
            fit_forest(&data, &params, 9, Execution::Sequential),
            fit_forest(&data, &params, 9, Execution::Parallel)
        );
        let model = train(ModelKind::Rf, &data, &HyperParams::default(), 9).unwrap();
        assert_eq!(model.dim(), 4);
    }

    #[test]
    fn min_leaf_is_respected() {
        let data = noisy(4, 60);
        let params = ForestParams {
            trees: 1,
            min_leaf: 5,
            ..ForestParams::default()
        };
        let tree = fit_tree(&data, &params, 2);
        // count bootstrap rows reaching each leaf
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sample: Vec<usize> = (0..60).map(|_| rng.gen_range(0..60)).collect();
        let mut reach = vec![0usize; tree.nodes.len()];
        for &i in &sample {
            let row = &data.rows()[i];
            let mut at = 0;
            while let TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } = tree.nodes[at]
            {
                at = if row[feature] <= threshold {
                    left
                } else {
                    right
                };
            }
            reach[at] += 1;
        }
        for (i, node) in tree.nodes.iter().enumerate() {
            if matches!(node, TreeNode::Leaf { .. }) {
                assert!(reach[i] >= 5, "leaf {i} holds {}", reach[i]);
            }
        }
    }
}
