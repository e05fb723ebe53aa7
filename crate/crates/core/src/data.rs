//! Training data with per-variable cutpoint grids.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::SplitRule;

pub const DEFAULT_MIN_NODE_SIZE: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("feature column {var} has {got} rows, response has {expected}")]
    RaggedColumns {
        var: usize,
        got: usize,
        expected: usize,
    },
    #[error("feature {var} row {row} is {value}, expected a finite value in [0, 1]")]
    FeatureOutOfRange { var: usize, row: usize, value: f64 },
    #[error("response row {row} is not finite")]
    NonFiniteResponse { row: usize },
    #[error("cutpoint grid for variable {var} is empty or not strictly increasing")]
    BadGrid { var: usize },
    #[error("expected {expected} cutpoint grids, got {got}")]
    GridCount { expected: usize, got: usize },
    #[error("minimum node size must be at least 1")]
    MinNodeSize,
    #[error("dataset needs at least one feature")]
    NoFeatures,
}

/// Affine map taking a raw feature value into the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub min: f64,
    pub range: f64,
}

impl FeatureScale {
    pub const IDENTITY: FeatureScale = FeatureScale {
        min: 0.0,
        range: 1.0,
    };

    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.min) / self.range
    }

    pub fn invert(&self, unit: f64) -> f64 {
        unit * self.range + self.min
    }
}

/// Interior uniform grid `k / (n_cut + 1)` for `k = 1..=n_cut`.
pub fn uniform_grid(n_cut: usize) -> Vec<f64> {
    (1..=n_cut).map(|k| k as f64 / (n_cut + 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    response: Vec<f64>,
    grids: Vec<Vec<f64>>,
    // ranks[v][i]: first cut index k with x[v][i] <= grid[v][k]
    ranks: Vec<Vec<u32>>,
    min_node_size: usize,
    scales: Vec<FeatureScale>,
    names: Vec<String>,
}

impl Dataset {
    /// `columns` holds one vector per feature, already on the unit interval.
    pub fn new(
        columns: Vec<Vec<f64>>,
        response: Vec<f64>,
        grids: Vec<Vec<f64>>,
        min_node_size: usize,
    ) -> Result<Self, DataError> {
        let n = response.len();
        if columns.is_empty() {
            return Err(DataError::NoFeatures);
        }
        if grids.len() != columns.len() {
            return Err(DataError::GridCount {
                expected: columns.len(),
                got: grids.len(),
            });
        }
        if min_node_size == 0 {
            return Err(DataError::MinNodeSize);
        }
        for (var, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(DataError::RaggedColumns {
                    var,
                    got: col.len(),
                    expected: n,
                });
            }
            if let Some((row, &value)) = col
                .iter()
                .enumerate()
                .find(|(_, x)| !(x.is_finite() && (0.0..=1.0).contains(*x)))
            {
                return Err(DataError::FeatureOutOfRange { var, row, value });
            }
        }
        if let Some(row) = response.iter().position(|y| !y.is_finite()) {
            return Err(DataError::NonFiniteResponse { row });
        }
        for (var, grid) in grids.iter().enumerate() {
            let increasing = grid.windows(2).all(|w| w[0] < w[1]);
            if grid.is_empty() || !increasing || grid.iter().any(|c| !c.is_finite()) {
                return Err(DataError::BadGrid { var });
            }
        }
        let ranks = columns
            .iter()
            .zip(&grids)
            .map(|(col, grid)| col.iter().map(|&x| rank_in(grid, x) as u32).collect())
            .collect();
        let d = columns.len();
        Ok(Dataset {
            columns,
            response,
            grids,
            ranks,
            min_node_size,
            scales: vec![FeatureScale::IDENTITY; d],
            names: (1..=d).map(|v| format!("x{v}")).collect(),
        })
    }

    /// Same grid of `n_cut` interior points for every variable.
    pub fn with_uniform_grid(
        columns: Vec<Vec<f64>>,
        response: Vec<f64>,
        n_cut: usize,
        min_node_size: usize,
    ) -> Result<Self, DataError> {
        let grids = vec![uniform_grid(n_cut); columns.len()];
        Dataset::new(columns, response, grids, min_node_size)
    }

    pub fn with_scales(mut self, scales: Vec<FeatureScale>) -> Self {
        assert_eq!(scales.len(), self.d());
        self.scales = scales;
        self
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.d());
        self.names = names;
        self
    }

    pub fn with_min_node_size(mut self, min_node_size: usize) -> Result<Self, DataError> {
        if min_node_size == 0 {
            return Err(DataError::MinNodeSize);
        }
        self.min_node_size = min_node_size;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn column(&self, var: usize) -> &[f64] {
        &self.columns[var]
    }

    pub fn feature(&self, var: usize, row: usize) -> f64 {
        self.columns[var][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    pub fn grid(&self, var: usize) -> &[f64] {
        &self.grids[var]
    }

    pub fn grids(&self) -> &[Vec<f64>] {
        &self.grids
    }

    /// Grid size for a variable.
    pub fn n_cuts(&self, var: usize) -> usize {
        self.grids[var].len()
    }

    pub fn rank(&self, var: usize, row: usize) -> usize {
        self.ranks[var][row] as usize
    }

    pub fn min_node_size(&self) -> usize {
        self.min_node_size
    }

    pub fn scales(&self) -> &[FeatureScale] {
        &self.scales
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn goes_left(&self, rule: SplitRule, row: usize) -> bool {
        self.rank(rule.var, row) <= rule.cut
    }

    /// Routing test for an arbitrary (already normalized) feature vector.
    pub fn point_goes_left(&self, rule: SplitRule, x: &[f64]) -> bool {
        x[rule.var] <= self.grids[rule.var][rule.cut]
    }

    /// Map a raw feature vector through the recorded normalization.
    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.scales)
            .map(|(x, s)| s.apply(*x))
            .collect()
    }

    /// Sample variance of the response (divisor n - 1).
    pub fn response_variance(&self) -> f64 {
        sample_variance(&self.response)
    }
}

fn rank_in(grid: &[f64], x: f64) -> usize {
    grid.partition_point(|&c| c < x)
}

pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Held-out observations for prediction: rows on the training data's
/// normalized scale, the observed response, and optionally the noiseless
/// regression function at each row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSet {
    pub rows: Vec<Vec<f64>>,
    pub response: Vec<f64>,
    pub truth: Option<Vec<f64>>,
}

impl EvalSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn from_dataset(data: &Dataset, truth: Option<Vec<f64>>) -> Self {
        EvalSet {
            rows: (0..data.n()).map(|i| data.row(i)).collect(),
            response: data.response().to_vec(),
            truth,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{NodeId, Tree};

    #[test]
    fn grid_is_interior_and_uniform() {
        assert_eq!(uniform_grid(3), vec![0.25, 0.5, 0.75]);
        assert_eq!(uniform_grid(99)[49], 0.5);
    }

    #[test]
    fn ranks_route_like_cutpoints() {
        let data = Dataset::new(
            vec![vec![0.0, 0.25, 0.3, 1.0]],
            vec![0.0; 4],
            vec![vec![0.25, 0.5]],
            1,
        )
        .unwrap();
        assert_eq!(
            (0..4).map(|i| data.rank(0, i)).collect::<Vec<_>>(),
            vec![0, 0, 1, 2]
        );
        for i in 0..4 {
            for cut in 0..2 {
                let rule = SplitRule::new(0, cut);
                assert_eq!(
                    data.goes_left(rule, i),
                    data.feature(0, i) <= data.grid(0)[cut]
                );
                assert_eq!(
                    data.goes_left(rule, i),
                    data.point_goes_left(rule, &data.row(i))
                );
            }
        }
    }

    #[test]
    fn validation_errors() {
        let grid = vec![vec![0.5]];
        assert!(matches!(
            Dataset::new(vec![vec![1.5]], vec![0.0], grid.clone(), 1),
            Err(DataError::FeatureOutOfRange { .. })
        ));
        assert!(matches!(
            Dataset::new(vec![vec![0.5]], vec![f64::NAN], grid.clone(), 1),
            Err(DataError::NonFiniteResponse { row: 0 })
        ));
        assert!(matches!(
            Dataset::new(vec![vec![0.5]], vec![0.0], vec![vec![0.5, 0.5]], 1),
            Err(DataError::BadGrid { var: 0 })
        ));
        assert!(matches!(
            Dataset::new(vec![vec![0.5, 0.1]], vec![0.0], grid.clone(), 1),
            Err(DataError::RaggedColumns { .. })
        ));
        assert!(matches!(
            Dataset::new(vec![vec![0.5]], vec![0.0], grid, 0),
            Err(DataError::MinNodeSize)
        ));
    }

    #[test]
    fn root_partition_holds_everything() {
        let data = Dataset::with_uniform_grid(vec![vec![0.1, 0.2, 0.9]], vec![1.0, 2.0, 3.0], 9, 1)
            .unwrap();
        let part = Tree::root_only().partition(&data);
        assert_eq!(part.counts().get(&NodeId(0)), Some(&3));
    }

    #[test]
    fn partition_ignores_values() {
        let data = Dataset::with_uniform_grid(vec![vec![0.1, 0.6, 0.9]], vec![1.0, 2.0, 3.0], 9, 1)
            .unwrap();
        let mut tree: Tree = "I(v=0,c=4,T,T)".parse().unwrap();
        let before = tree.partition(&data);
        tree.set_mu(NodeId(1), Some(9.0)).unwrap();
        tree.set_mu(NodeId(2), Some(-9.0)).unwrap();
        assert_eq!(tree.partition(&data), before);
        assert_eq!(before.leaf_of, vec![NodeId(1), NodeId(2), NodeId(2)]);
    }

    #[test]
    fn normalization_round_trip() {
        let s = FeatureScale {
            min: 2.0,
            range: 10.0,
        };
        assert_eq!(s.apply(7.0), 0.5);
        assert_eq!(s.invert(0.5), 7.0);
    }
}
