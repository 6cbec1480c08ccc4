//! Rolling-shutter timing: per-row sensing times and their chunked approximation.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RollingShutterParams {
    /// Seconds from the first row to the last.
    pub readout_time: f64,
    /// Normalized scene time at which row 0 is sensed.
    #[serde(default)]
    pub frame_time: f64,
    /// Seconds per unit of normalized scene time.
    pub time_scale: f64,
    /// Rows sharing one sensing time (`N_c`).
    #[serde(default = "default_chunk_rows")]
    pub chunk_rows: usize,
}

fn default_chunk_rows() -> usize {
    4
}

impl RollingShutterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.readout_time.is_finite() && self.readout_time > 0.0) {
            return Err(Error::param("readout_time must be positive"));
        }
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(Error::param("time_scale must be positive"));
        }
        if !(0.0..=1.0).contains(&self.frame_time) {
            return Err(Error::param("frame_time must lie in [0, 1]"));
        }
        if self.chunk_rows == 0 {
            return Err(Error::param("chunk_rows must be at least 1"));
        }
        Ok(())
    }
}

/// Sensing time of `row`: a linear top-to-bottom schedule, clamped to `[0, 1]`.
pub fn row_sensing_time(rs: &RollingShutterParams, row: usize, height: usize) -> f64 {
    let offset = (row as f64 / height as f64) * rs.readout_time / rs.time_scale;
    (rs.frame_time + offset).clamp(0.0, 1.0)
}

/// A block of rows traced against one deformed snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub rows: Range<usize>,
    pub time: f64,
}

/// Splits the rows into chunks of `chunk_rows` (the last may be short), each
/// timed at the mean sensing time of its rows.
pub fn chunk_schedule(rs: &RollingShutterParams, height: usize) -> Vec<Chunk> {
    let n = rs.chunk_rows.max(1);
    (0..height)
        .step_by(n)
        .map(|start| {
            let rows = start..(start + n).min(height);
            let time = if rows.len() == 1 {
                row_sensing_time(rs, start, height)
            } else {
                rows.clone().map(|r| row_sensing_time(rs, r, height)).sum::<f64>() / rows.len() as f64
            };
            Chunk { rows, time }
        })
        .collect()
}
