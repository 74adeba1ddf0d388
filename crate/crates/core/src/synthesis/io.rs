use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Gains, SynthesisConfig, SynthesisError, SynthesisResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellGainsDocument {
    pub cell: usize,
    /// Global ids of the landmarks the columns of `K` refer to.
    pub landmarks: Vec<usize>,
    #[serde(rename = "K")]
    pub feedback: Vec<Vec<f64>>,
    pub k: Vec<f64>,
    pub config: SynthesisConfig,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsDocument {
    pub cells: Vec<CellGainsDocument>,
}

impl CellGainsDocument {
    pub fn new(cell: usize, landmarks: Vec<usize>, gains: &Gains, config: &SynthesisConfig, objective: f64) -> Self {
        let feedback = gains.feedback.row_iter().map(|r| r.iter().copied().collect()).collect();
        Self {
            cell,
            landmarks,
            feedback,
            k: gains.offset.iter().copied().collect(),
            config: config.clone(),
            objective,
        }
    }

    pub fn gains(&self) -> Result<Gains, SynthesisError> {
        let rows = self.feedback.len();
        let cols = self.feedback.first().map_or(0, |r| r.len());
        if self.feedback.iter().any(|r| r.len() != cols) {
            return Err(SynthesisError::Dimension(format!("cell {}: ragged K", self.cell)));
        }
        if self.k.len() != rows {
            return Err(SynthesisError::Dimension(format!(
                "cell {}: K has {rows} rows but k has {} entries",
                self.cell,
                self.k.len()
            )));
        }
        Ok(Gains {
            feedback: DMatrix::from_fn(rows, cols, |r, c| self.feedback[r][c]),
            offset: DVector::from_column_slice(&self.k),
        })
    }
}

impl GainsDocument {
    pub fn from_results(
        results: &BTreeMap<usize, SynthesisResult>,
        landmark_ids: impl Fn(usize) -> Vec<usize>,
        config: &SynthesisConfig,
    ) -> Self {
        Self {
            cells: results
                .iter()
                .map(|(&i, r)| CellGainsDocument::new(i, landmark_ids(i), &r.gains, config, r.objective))
                .collect(),
        }
    }

    pub fn gains_map(&self) -> Result<BTreeMap<usize, Gains>, SynthesisError> {
        self.cells.iter().map(|c| Ok((c.cell, c.gains()?))).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("gains document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SynthesisError> {
        serde_json::from_str(text).map_err(|e| SynthesisError::Config(format!("gains document: {e}")))
    }
}
