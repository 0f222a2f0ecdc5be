//! JSON documents written by the command-line tool. Complex matrices are
//! nested row arrays of `[re, im]` pairs.

use serde::{Deserialize, Serialize};

use gridsleuth_core::events::EventRecord;
use gridsleuth_core::ident::IdentifiedModel;
use gridsleuth_core::numerics::{ComplexMatrix, C64};

pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &ComplexMatrix) -> MatrixJson {
    (0..m.rows()).map(|r| m.row(r).iter().map(|z| [z.re, z.im]).collect()).collect()
}

pub fn matrix_from_json(j: &MatrixJson) -> Result<ComplexMatrix, String> {
    let rows = j.len();
    let cols = j.first().map_or(0, Vec::len);
    if j.iter().any(|r| r.len() != cols) {
        return Err("ragged matrix rows".into());
    }
    let data: Vec<C64> = j.iter().flatten().map(|p| C64::new(p[0], p[1])).collect();
    ComplexMatrix::new(rows, cols, data).map_err(|e| e.to_string())
}

/// Admittance matrix with node labels, e.g. the ground truth written by
/// `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YbusDoc {
    pub config_hash: String,
    pub labels: Vec<String>,
    pub y: MatrixJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualsDoc {
    pub basis: f64,
    pub y_x: f64,
    pub c_asymmetry: f64,
    pub sparse_constraint: f64,
    pub y12: f64,
    pub sparse_iterations: usize,
    pub sparse_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub config_hash: String,
    pub tau: f64,
    pub first_slot: u64,
    pub samples: usize,
    pub rank: usize,
    pub labels: Vec<String>,
    /// Node indices whose voltages lie in the span of the others.
    pub dep_rows: Vec<usize>,
    pub ind_rows: Vec<usize>,
    pub perm: Vec<usize>,
    pub x: MatrixJson,
    pub y11: MatrixJson,
    pub y22: MatrixJson,
    pub y12: MatrixJson,
    /// Assembled admittance in the original node order.
    pub y: MatrixJson,
    pub residuals: ResidualsDoc,
}

impl ModelDoc {
    pub fn new(
        m: &IdentifiedModel,
        config_hash: String,
        tau: f64,
        first_slot: u64,
        samples: usize,
        labels: Vec<String>,
    ) -> Self {
        let r = &m.residuals;
        Self {
            config_hash,
            tau,
            first_slot,
            samples,
            rank: m.partition.rank,
            labels,
            dep_rows: m.partition.dep_rows.clone(),
            ind_rows: m.partition.ind_rows.clone(),
            perm: m.partition.perm.clone(),
            x: matrix_to_json(&m.x),
            y11: matrix_to_json(&m.y11),
            y22: matrix_to_json(&m.y22),
            y12: matrix_to_json(&m.y12),
            y: matrix_to_json(&m.assemble()),
            residuals: ResidualsDoc {
                basis: r.basis,
                y_x: r.y_x,
                c_asymmetry: r.c_asymmetry,
                sparse_constraint: r.sparse_constraint,
                y12: r.y12,
                sparse_iterations: r.sparse_iterations,
                sparse_gap: r.sparse_gap,
            },
        }
    }
}

/// Errors of an identified model against a ground-truth admittance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub config_hash: String,
    pub max_relative_error_y11: Option<f64>,
    pub max_relative_error_y22: f64,
    pub max_relative_error_y12: Option<f64>,
    /// Largest `|Y22_true − Y22_est| / |Y22_true|` over nonzero true entries.
    pub max_grid_ratio_y22: f64,
    pub y22_entries: usize,
    pub y22_entries_within_1_5_percent: usize,
    pub grid_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDoc {
    pub row_bus: String,
    pub col_bus: String,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventDoc {
    pub config_hash: String,
    pub t: u64,
    pub classification: String,
    pub lines: Vec<String>,
    pub changed_blocks: Vec<BlockDoc>,
    pub window_first_slot: u64,
    pub samples_used: usize,
    pub constraint_residual: f64,
    pub l1_norm: f64,
    pub labels: Vec<String>,
    pub delta: MatrixJson,
}

impl EventDoc {
    pub fn new(rec: &EventRecord, config_hash: String, window_first_slot: u64, labels: Vec<String>) -> Self {
        Self {
            config_hash,
            t: rec.t,
            classification: rec.classification.as_str().to_string(),
            lines: rec.lines.clone(),
            changed_blocks: rec
                .changed_blocks
                .iter()
                .map(|b| BlockDoc { row_bus: b.row_bus.clone(), col_bus: b.col_bus.clone(), magnitude: b.magnitude })
                .collect(),
            window_first_slot,
            samples_used: rec.samples_used,
            constraint_residual: rec.constraint_residual,
            l1_norm: rec.l1_norm,
            labels,
            delta: matrix_to_json(&rec.delta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureDoc {
    pub t: u64,
    pub advice: String,
}

/// Outcome of a `monitor` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub config_hash: String,
    pub stream_hash: String,
    pub slots: usize,
    pub gamma: f64,
    pub gamma_source: String,
    pub alarms: Vec<u64>,
    /// Alarms with no scheduled event since the last localized change.
    pub false_alarms: usize,
    /// Alarms whose localization recovered no admittance change.
    pub unconfirmed_alarms: Vec<u64>,
    pub events: Vec<String>,
    pub localization_failures: Vec<FailureDoc>,
    pub exit_code: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestDoc {
    pub tool: String,
    pub version: String,
    pub format_version: u16,
    pub config_hash: String,
    pub seed: u64,
    pub household_seed: u64,
    pub noise_seed: u64,
    pub slots: u64,
    pub nodes: usize,
    pub feeder_sha256: String,
    pub allocation_sha256: String,
    pub files: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let m = ComplexMatrix::from_fn(2, 3, |r, c| C64::new(r as f64 - 0.5, c as f64 * 1e-9));
        let j = matrix_to_json(&m);
        assert_eq!(j[1][2], [0.5, 2e-9]);
        let text = serde_json::to_string(&j).unwrap();
        let back: MatrixJson = serde_json::from_str(&text).unwrap();
        assert_eq!(matrix_from_json(&back).unwrap(), m);
        assert!(matrix_from_json(&vec![vec![[0.0, 0.0]], vec![]]).is_err());
    }
}
