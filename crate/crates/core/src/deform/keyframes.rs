use serde::{Deserialize, Serialize};

use super::Residuals;
use crate::{Error, Result};

/// Per-Gaussian residuals sampled at keyframe times, interpolated linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KeyframeRecord", into = "KeyframeRecord")]
pub struct KeyframeTrack {
    times: Vec<f64>,
    deltas: Vec<Vec<Residuals>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyframeRecord {
    times: Vec<f64>,
    deltas: Vec<Vec<Residuals>>,
}

impl TryFrom<KeyframeRecord> for KeyframeTrack {
    type Error = Error;

    fn try_from(r: KeyframeRecord) -> Result<Self> {
        KeyframeTrack::new(r.times, r.deltas)
    }
}

impl From<KeyframeTrack> for KeyframeRecord {
    fn from(k: KeyframeTrack) -> Self {
        KeyframeRecord {
            times: k.times,
            deltas: k.deltas,
        }
    }
}

impl KeyframeTrack {
    pub fn new(times: Vec<f64>, deltas: Vec<Vec<Residuals>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::param("keyframe track needs at least one keyframe"));
        }
        if times.len() != deltas.len() {
            return Err(Error::param(format!(
                "{} keyframe times but {} delta sets",
                times.len(),
                deltas.len()
            )));
        }
        if !times.iter().all(|t| (0.0..=1.0).contains(t)) {
            return Err(Error::param("keyframe times must lie in [0, 1]"));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("keyframe times must be strictly increasing"));
        }
        let count = deltas[0].len();
        if deltas.iter().any(|d| d.len() != count) {
            return Err(Error::param("every keyframe must carry the same number of deltas"));
        }
        let finite = deltas.iter().flatten().all(|r| {
            r.mean.iter().chain(&r.rotation).chain(&r.scale).all(|v| v.is_finite())
        });
        if !finite {
            return Err(Error::param("non-finite keyframe delta"));
        }
        Ok(KeyframeTrack { times, deltas })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub(crate) fn select(&self, origins: &[usize]) -> KeyframeTrack {
        KeyframeTrack {
            times: self.times.clone(),
            deltas: self.deltas.iter().map(|d| origins.iter().map(|&o| d[o]).collect()).collect(),
        }
    }

    pub(crate) fn validate_for(&self, count: usize) -> Result<()> {
        let have = self.deltas[0].len();
        if have != count {
            return Err(Error::param(format!(
                "keyframe deltas cover {have} gaussians, scene has {count}"
            )));
        }
        Ok(())
    }

    /// Residual of Gaussian `index` at `t`, held constant outside the keyed range.
    pub fn residual(&self, index: usize, t: f64) -> Residuals {
        let n = self.times.len();
        let upper = self.times.partition_point(|&k| k <= t);
        if upper == 0 {
            return self.deltas[0][index];
        }
        if upper == n {
            return self.deltas[n - 1][index];
        }
        let (t0, t1) = (self.times[upper - 1], self.times[upper]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (&self.deltas[upper - 1][index], &self.deltas[upper][index]);
        let lerp = |x: f64, y: f64| if x == y { x } else { x + w * (y - x) };
        Residuals {
            mean: std::array::from_fn(|k| lerp(a.mean[k], b.mean[k])),
            rotation: std::array::from_fn(|k| lerp(a.rotation[k], b.rotation[k])),
            scale: std::array::from_fn(|k| lerp(a.scale[k], b.scale[k])),
        }
    }
}
