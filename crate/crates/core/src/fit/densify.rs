use crate::scene::{Gaussian, SceneSnapshot};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifyRule {
    /// Gaussians whose score exceeds this are split or cloned.
    pub threshold: f64,
    /// Split when the largest scale exceeds this fraction of the diagonal of
    /// the mean bounding box; clone otherwise.
    pub split_scale_fraction: f64,
    pub split_divisor: f64,
    pub prune_opacity: f64,
}

impl Default for DensifyRule {
    fn default() -> Self {
        DensifyRule {
            threshold: 2.5e-5,
            split_scale_fraction: 0.01,
            split_divisor: 1.6,
            prune_opacity: 0.005,
        }
    }
}

/// Where an output Gaussian came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Kept(usize),
    Cloned(usize),
    Split(usize),
}

impl Origin {
    pub fn source(&self) -> usize {
        match *self {
            Origin::Kept(i) | Origin::Cloned(i) | Origin::Split(i) => i,
        }
    }
}

/// Splits or clones Gaussians whose score (accumulated mean-gradient
/// magnitude) exceeds the threshold and drops those below the prune opacity.
/// Returns the new snapshot and the origin of each of its Gaussians.
pub fn densify_and_prune(snapshot: &SceneSnapshot, scores: &[f64], rule: &DensifyRule) -> (SceneSnapshot, Vec<Origin>) {
    assert_eq!(scores.len(), snapshot.len(), "one score per gaussian");
    let diagonal = snapshot.mean_bounds().map_or(0.0, |(lo, hi)| (hi - lo).norm());
    let split_above = rule.split_scale_fraction * diagonal;

    let mut out = Vec::with_capacity(snapshot.len());
    let mut origins = Vec::with_capacity(snapshot.len());
    for (i, g) in snapshot.gaussians().iter().enumerate() {
        if g.opacity < rule.prune_opacity {
            continue;
        }
        if scores[i] <= rule.threshold {
            out.push(g.clone());
            origins.push(Origin::Kept(i));
            continue;
        }
        let axis = g.scale.imax();
        if g.scale[axis] > split_above {
            let offset = g.rotation_matrix().column(axis) * (0.5 * g.scale[axis]);
            for sign in [1.0, -1.0] {
                out.push(Gaussian {
                    mean: g.mean + offset * sign,
                    scale: g.scale / rule.split_divisor,
                    ..g.clone()
                });
                origins.push(Origin::Split(i));
            }
        } else {
            out.push(g.clone());
            origins.push(Origin::Kept(i));
            out.push(g.clone());
            origins.push(Origin::Cloned(i));
        }
    }
    (SceneSnapshot::new_unchecked(out, snapshot.time(), snapshot.sh_degree()), origins)
}
