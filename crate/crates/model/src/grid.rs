//! Hyperparameter grid search ranked by best validation loss.

use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, TrainConfig};
use crate::params::{count_params, Params};
use crate::train::{train, Example, StopReason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpace {
    pub d_model: Vec<usize>,
    pub n_layers: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub batch_size: Vec<usize>,
}

impl Default for GridSpace {
    fn default() -> Self {
        GridSpace {
            d_model: vec![128, 256, 512],
            n_layers: vec![2, 4, 6],
            learning_rate: vec![1e-4, 5e-4, 1e-3],
            batch_size: vec![8, 16, 32],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub d_model: usize,
    pub n_layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl GridSpace {
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &d_model in &self.d_model {
            for &n_layers in &self.n_layers {
                for &learning_rate in &self.learning_rate {
                    for &batch_size in &self.batch_size {
                        out.push(Cell { d_model, n_layers, learning_rate, batch_size });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub params: usize,
    pub best_val_loss: Option<f64>,
    pub best_step: usize,
    pub steps: usize,
    pub seconds: f64,
    pub stop: Option<StopReason>,
    /// Set when the cell failed; the search carries on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        self.error.is_some() || self.stop == Some(StopReason::Diverged) || self.best_val_loss.is_none()
    }
}

/// Model config for a cell: the base config with width, depth and a
/// proportional feed-forward size (4·d) substituted.
pub fn cell_model(base: &ModelConfig, cell: &Cell) -> ModelConfig {
    ModelConfig { d_model: cell.d_model, n_layers: cell.n_layers, d_ff: 4 * cell.d_model, ..base.clone() }
}

pub fn cell_train(base: &TrainConfig, cell: &Cell) -> TrainConfig {
    TrainConfig { learning_rate: cell.learning_rate, batch_size: cell.batch_size, ..base.clone() }
}

/// Trains every cell under the budget in `base_train` (max_steps and
/// max_seconds) and returns results ranked by best validation loss, failed
/// cells last. `on_cell` sees each result as it completes.
pub fn grid_search(
    space: &GridSpace,
    base_model: &ModelConfig,
    base_train: &TrainConfig,
    train_set: &[Example],
    val_set: &[Example],
    mut on_cell: impl FnMut(&CellResult),
) -> Vec<CellResult> {
    let mut results = Vec::new();
    for cell in space.cells() {
        let model = cell_model(base_model, &cell);
        let tc = cell_train(base_train, &cell);
        let mut r = CellResult {
            cell,
            params: count_params(&model),
            best_val_loss: None,
            best_step: 0,
            steps: 0,
            seconds: 0.0,
            stop: None,
            error: None,
        };
        let outcome = Params::<f32>::init(&model, tc.seed)
            .map_err(|e| e.to_string())
            .and_then(|p| train(p, train_set, val_set, &tc, |_, _, _| {}).map_err(|e| e.to_string()));
        match outcome {
            Ok(o) => {
                r.best_val_loss = o.best_val_loss.is_finite().then_some(o.best_val_loss);
                r.best_step = o.best_step;
                r.steps = o.steps;
                r.seconds = o.seconds;
                r.stop = Some(o.stop);
            }
            Err(e) => r.error = Some(e),
        }
        on_cell(&r);
        results.push(r);
    }
    rank(&mut results);
    results
}

pub fn rank(results: &mut [CellResult]) {
    results.sort_by(|a, b| {
        let key = |r: &CellResult| if r.failed() { f64::INFINITY } else { r.best_val_loss.unwrap_or(f64::INFINITY) };
        key(a).total_cmp(&key(b))
    });
}

/// Plain-text table, one row per cell in ranked order.
pub fn report_table(results: &[CellResult]) -> String {
    let mut s = String::from("rank  d_model  layers  lr       batch  params     best_val  step    status\n");
    for (i, r) in results.iter().enumerate() {
        let val = r.best_val_loss.map_or("-".to_string(), |v| format!("{v:.4}"));
        let status = match (&r.error, r.stop) {
            (Some(e), _) => format!("failed: {e}"),
            (None, Some(StopReason::Diverged)) => "failed: diverged".to_string(),
            (None, Some(stop)) => format!("{stop:?}"),
            (None, None) => "-".to_string(),
        };
        s.push_str(&format!(
            "{:<5} {:<8} {:<7} {:<8.0e} {:<6} {:<10} {:<9} {:<7} {}\n",
            i + 1,
            r.cell.d_model,
            r.cell.n_layers,
            r.cell.learning_rate,
            r.cell.batch_size,
            r.params,
            val,
            r.best_step,
            status
        ));
    }
    s
}
