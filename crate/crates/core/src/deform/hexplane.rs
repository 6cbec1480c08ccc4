//! Forward evaluation of a hexplane deformation field: six multi-resolution
//! feature planes over coordinate pairs of (x, y, z, t), fused by an MLP and
//! decoded by three residual heads.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Residuals;
use crate::math::Vec3;
use crate::{Error, Result};

/// Coordinate pairs indexed into `(x, y, z, t)`, in plane order.
pub const PLANE_AXES: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];
pub const PLANE_NAMES: [&str; 6] = ["xy", "xz", "yz", "xt", "yt", "zt"];

/// A 2D grid of `channels`-wide feature vectors, stored channel-major then
/// by the first axis then the second. Grid points sit at `i / (res - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePlane {
    channels: usize,
    res_u: usize,
    res_v: usize,
    data: Vec<f64>,
}

impl FeaturePlane {
    pub fn new(channels: usize, res_u: usize, res_v: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || res_u == 0 || res_v == 0 {
            return Err(Error::param("feature plane dimensions must be positive"));
        }
        if data.len() != channels * res_u * res_v {
            return Err(Error::param(format!(
                "feature plane {channels}x{res_u}x{res_v} needs {} values, got {}",
                channels * res_u * res_v,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::param("non-finite feature plane value"));
        }
        Ok(FeaturePlane {
            channels,
            res_u,
            res_v,
            data,
        })
    }

    pub fn constant(channels: usize, res_u: usize, res_v: usize, value: f64) -> Self {
        FeaturePlane {
            channels,
            res_u,
            res_v,
            data: vec![value; channels * res_u * res_v],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.res_u, self.res_v)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn texel(&self, channel: usize, iu: usize, iv: usize) -> f64 {
        self.data[(channel * self.res_u + iu) * self.res_v + iv]
    }

    /// Bilinear lookup without range checks; coordinates are clamped.
    fn sample_into(&self, u: f64, v: f64, out: &mut [f64]) {
        let (iu, fu) = cell(u.clamp(0.0, 1.0), self.res_u);
        let (iv, fv) = cell(v.clamp(0.0, 1.0), self.res_v);
        let iu1 = (iu + 1).min(self.res_u - 1);
        let iv1 = (iv + 1).min(self.res_v - 1);
        let w00 = (1.0 - fu) * (1.0 - fv);
        let w10 = fu * (1.0 - fv);
        let w01 = (1.0 - fu) * fv;
        let w11 = fu * fv;
        for (c, o) in out.iter_mut().enumerate() {
            *o = w00 * self.texel(c, iu, iv)
                + w10 * self.texel(c, iu1, iv)
                + w01 * self.texel(c, iu, iv1)
                + w11 * self.texel(c, iu1, iv1);
        }
    }
}

fn cell(u: f64, res: usize) -> (usize, f64) {
    if res == 1 {
        return (0, 0.0);
    }
    let x = u * (res - 1) as f64;
    let i = (x.floor() as usize).min(res - 2);
    (i, x - i as f64)
}

/// Bilinear interpolation of a feature plane at `(u, v) in [0, 1]^2`.
pub fn interp_plane(plane: &FeaturePlane, u: f64, v: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return Err(Error::OutOfBounds { u, v });
    }
    let mut out = vec![0.0; plane.channels];
    plane.sample_into(u, v, &mut out);
    Ok(out)
}

/// Fully connected layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let layer = Dense {
            inputs,
            outputs,
            weights,
            bias,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn identity(width: usize) -> Self {
        let mut layer = Dense::zeros(width, width);
        for i in 0..width {
            layer.weights[i * width + i] = 1.0;
        }
        layer
    }

    fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.outputs == 0 {
            return Err(Error::param("dense layer widths must be positive"));
        }
        if self.weights.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(Error::param(format!(
                "dense layer {}->{} has {} weights and {} biases",
                self.inputs,
                self.outputs,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if !self.weights.iter().chain(&self.bias).all(|v| v.is_finite()) {
            return Err(Error::param("non-finite dense layer parameter"));
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Multilayer perceptron with ReLU between layers and a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRecord", into = "MlpRecord")]
pub struct Mlp {
    layers: Vec<Dense>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpRecord {
    layers: Vec<Dense>,
}

impl TryFrom<MlpRecord> for Mlp {
    type Error = Error;
    fn try_from(r: MlpRecord) -> Result<Self> {
        Mlp::new(r.layers)
    }
}

impl From<Mlp> for MlpRecord {
    fn from(m: Mlp) -> Self {
        MlpRecord { layers: m.layers }
    }
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("an MLP needs at least one layer"));
        }
        for l in &layers {
            l.validate()?;
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::param(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].outputs,
                    i + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_width() {
            return Err(Error::param(format!(
                "MLP expects {} inputs, got {}",
                self.input_width(),
                x.len()
            )));
        }
        Ok(self.forward_unchecked(x))
    }

    fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut act = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            act = layer.forward(&act);
            if i != last {
                act.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        act
    }
}

/// Residual decoders for the mean (3), rotation (4) and scale (3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationHeads {
    pub mean: Mlp,
    pub rotation: Mlp,
    pub scale: Mlp,
}

impl DeformationHeads {
    fn validate(&self, input: usize) -> Result<()> {
        for (name, head, out) in [
            ("mean", &self.mean, 3),
            ("rotation", &self.rotation, 4),
            ("scale", &self.scale, 3),
        ] {
            if head.input_width() != input {
                return Err(Error::param(format!(
                    "{name} head expects {} inputs, fused feature has {input}",
                    head.input_width()
                )));
            }
            if head.output_width() != out {
                return Err(Error::param(format!(
                    "{name} head must output {out} values, not {}",
                    head.output_width()
                )));
            }
        }
        Ok(())
    }
}

/// Decodes a fused feature into deformation residuals.
pub fn decode_residuals(f: &[f64], heads: &DeformationHeads) -> Result<Residuals> {
    let mean = heads.mean.forward(f)?;
    let rotation = heads.rotation.forward(f)?;
    let scale = heads.scale.forward(f)?;
    Ok(Residuals {
        mean: [mean[0], mean[1], mean[2]],
        rotation: [rotation[0], rotation[1], rotation[2], rotation[3]],
        scale: [scale[0], scale[1], scale[2]],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// A hexplane field with its fusion MLP and residual heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HexPlaneRecord", into = "HexPlaneRecord")]
pub struct HexPlaneField {
    feature_dim: usize,
    levels: Vec<usize>,
    base_resolution: usize,
    bounds: Bounds,
    /// `planes[level][plane]` in [`PLANE_NAMES`] order.
    planes: Vec<[FeaturePlane; 6]>,
    fuse_mlp: Mlp,
    heads: DeformationHeads,
}

impl HexPlaneField {
    /// Assembles a field, checking every shape invariant.
    pub fn new(
        feature_dim: usize,
        levels: Vec<usize>,
        base_resolution: usize,
        bounds: Bounds,
        planes: Vec<[FeaturePlane; 6]>,
        fuse_mlp: Mlp,
        heads: DeformationHeads,
    ) -> Result<Self> {
        if feature_dim == 0 || base_resolution == 0 || levels.is_empty() {
            return Err(Error::param("hexplane needs positive feature_dim, base_resolution and levels"));
        }
        if levels.contains(&0) {
            return Err(Error::param("hexplane levels must be positive"));
        }
        if planes.len() != levels.len() {
            return Err(Error::param(format!(
                "{} plane sets for {} levels",
                planes.len(),
                levels.len()
            )));
        }
        for (set, &l) in planes.iter().zip(&levels) {
            let res = l * base_resolution;
            for (plane, name) in set.iter().zip(PLANE_NAMES) {
                if plane.channels != feature_dim || plane.resolution() != (res, res) {
                    return Err(Error::param(format!(
                        "plane {name} at level {l} is {}x{}x{}, expected {feature_dim}x{res}x{res}",
                        plane.channels, plane.res_u, plane.res_v
                    )));
                }
            }
        }
        for k in 0..3 {
            let ok = bounds.min[k].is_finite() && bounds.max[k].is_finite() && bounds.max[k] > bounds.min[k];
            if !ok {
                return Err(Error::param("hexplane bounds must satisfy min < max on every axis"));
            }
        }
        if fuse_mlp.input_width() != feature_dim * levels.len() {
            return Err(Error::param(format!(
                "fusion MLP expects {} inputs, the planes produce {}",
                fuse_mlp.input_width(),
                feature_dim * levels.len()
            )));
        }
        heads.validate(fuse_mlp.output_width())?;
        Ok(HexPlaneField {
            feature_dim,
            levels,
            base_resolution,
            bounds,
            planes,
            fuse_mlp,
            heads,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn base_resolution(&self) -> usize {
        self.base_resolution
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn planes(&self) -> &[[FeaturePlane; 6]] {
        &self.planes
    }

    pub fn fuse_mlp(&self) -> &Mlp {
        &self.fuse_mlp
    }

    pub fn heads(&self) -> &DeformationHeads {
        &self.heads
    }

    /// Maps a world position and time to the clamped lookup coordinates `(x, y, z, t)`.
    pub fn normalize(&self, position: &Vec3, t: f64) -> [f64; 4] {
        let b = &self.bounds;
        let n = |k: usize| ((position[k] - b.min[k]) / (b.max[k] - b.min[k])).clamp(0.0, 1.0);
        [n(0), n(1), n(2), t.clamp(0.0, 1.0)]
    }

    /// Concatenated per-level products of the six plane features, before fusion.
    pub fn plane_features(&self, position: &Vec3, t: f64) -> Vec<f64> {
        let coords = self.normalize(position, t);
        let h = self.feature_dim;
        let mut out = vec![1.0; h * self.levels.len()];
        let mut sample = vec![0.0; h];
        for (level, set) in out.chunks_exact_mut(h).zip(&self.planes) {
            for (plane, (a, b)) in set.iter().zip(PLANE_AXES) {
                plane.sample_into(coords[a], coords[b], &mut sample);
                level.iter_mut().zip(&sample).for_each(|(o, s)| *o *= s);
            }
        }
        out
    }

    pub(crate) fn residual_at(&self, position: &Vec3, t: f64) -> Residuals {
        let f = encode_spacetime(self, position, t);
        decode_residuals(&f, &self.heads).expect("head widths validated at construction")
    }
}

/// Fused spatio-temporal feature for a position and time. Positions outside
/// the field bounds are clamped onto them.
pub fn encode_spacetime(field: &HexPlaneField, position: &Vec3, t: f64) -> Vec<f64> {
    field.fuse_mlp.forward_unchecked(&field.plane_features(position, t))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HexPlaneRecord {
    feature_dim: usize,
    levels: Vec<usize>,
    base_resolution: usize,
    bounds: Bounds,
    /// Plane name to one flat array per level.
    planes: BTreeMap<String, Vec<Vec<f64>>>,
    fuse_mlp: Mlp,
    heads: DeformationHeads,
}

impl TryFrom<HexPlaneRecord> for HexPlaneField {
    type Error = Error;

    fn try_from(mut r: HexPlaneRecord) -> Result<Self> {
        if let Some(extra) = r.planes.keys().find(|k| !PLANE_NAMES.contains(&k.as_str())) {
            return Err(Error::param(format!("unknown plane {extra:?}")));
        }
        let mut per_name = Vec::with_capacity(6);
        for name in PLANE_NAMES {
            let levels = r
                .planes
                .remove(name)
                .ok_or_else(|| Error::param(format!("missing plane {name}")))?;
            if levels.len() != r.levels.len() {
                return Err(Error::param(format!(
                    "plane {name} has {} levels, expected {}",
                    levels.len(),
                    r.levels.len()
                )));
            }
            per_name.push(levels.into_iter());
        }
        let mut planes = Vec::with_capacity(r.levels.len());
        for &l in &r.levels {
            let res = l * r.base_resolution;
            let mut set = Vec::with_capacity(6);
            for it in per_name.iter_mut() {
                let data = it.next().expect("level count checked");
                set.push(FeaturePlane::new(r.feature_dim, res, res, data)?);
            }
            planes.push(<[FeaturePlane; 6]>::try_from(set).expect("six planes"));
        }
        HexPlaneField::new(
            r.feature_dim,
            r.levels,
            r.base_resolution,
            r.bounds,
            planes,
            r.fuse_mlp,
            r.heads,
        )
    }
}

impl From<HexPlaneField> for HexPlaneRecord {
    fn from(f: HexPlaneField) -> Self {
        let mut planes: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        for set in f.planes {
            for (plane, name) in set.into_iter().zip(PLANE_NAMES) {
                planes.entry(name.to_string()).or_default().push(plane.data);
            }
        }
        HexPlaneRecord {
            feature_dim: f.feature_dim,
            levels: f.levels,
            base_resolution: f.base_resolution,
            bounds: f.bounds,
            planes,
            fuse_mlp: f.fuse_mlp,
            heads: f.heads,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const UNIT: Bounds = Bounds {
        min: [0.0; 3],
        max: [1.0; 3],
    };

    fn constant_planes(h: usize, levels: &[usize], n: usize, values: [f64; 6]) -> Vec<[FeaturePlane; 6]> {
        levels
            .iter()
            .map(|l| values.map(|v| FeaturePlane::constant(h, l * n, l * n, v)))
            .collect()
    }

    fn zero_heads(width: usize) -> DeformationHeads {
        DeformationHeads {
            mean: Mlp::new(vec![Dense::zeros(width, 3)]).unwrap(),
            rotation: Mlp::new(vec![Dense::zeros(width, 4)]).unwrap(),
            scale: Mlp::new(vec![Dense::zeros(width, 3)]).unwrap(),
        }
    }

    #[test]
    fn constant_plane_interpolates_to_constant() {
        let p = FeaturePlane::constant(3, 5, 7, 2.5);
        for (u, v) in [(0.0, 0.0), (0.33, 0.71), (1.0, 1.0), (0.5, 0.0)] {
            assert_eq!(interp_plane(&p, u, v).unwrap(), vec![2.5; 3]);
        }
    }

    #[test]
    fn two_by_two_center_is_average() {
        let p = FeaturePlane::new(2, 2, 2, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(interp_plane(&p, 0.5, 0.5).unwrap(), vec![0.25, 0.25]);
    }

    #[test]
    fn texel_queries_return_stored_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..2 * 64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = FeaturePlane::new(2, 8, 8, data).unwrap();
        for iu in 0..8 {
            for iv in 0..8 {
                let got = interp_plane(&p, iu as f64 / 7.0, iv as f64 / 7.0).unwrap();
                for c in 0..2 {
                    assert!((got[c] - p.texel(c, iu, iv)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn out_of_range_lookup_is_an_error() {
        let p = FeaturePlane::constant(1, 4, 4, 0.0);
        assert!(matches!(interp_plane(&p, 1.01, 0.5), Err(Error::OutOfBounds { .. })));
        assert!(interp_plane(&p, 0.5, -0.1).is_err());
    }

    #[test]
    fn product_of_ones_through_identity_fusion() {
        let (h, levels) = (4, vec![1, 2]);
        let width = h * levels.len();
        let field = HexPlaneField::new(
            h,
            levels.clone(),
            3,
            UNIT,
            constant_planes(h, &levels, 3, [1.0; 6]),
            Mlp::new(vec![Dense::identity(width)]).unwrap(),
            zero_heads(width),
        )
        .unwrap();
        assert_eq!(encode_spacetime(&field, &Vec3::new(0.3, 0.2, 0.9), 0.4), vec![1.0; width]);

        let field = HexPlaneField::new(
            h,
            levels.clone(),
            3,
            UNIT,
            constant_planes(h, &levels, 3, [1.0, 1.0, 2.0, 1.0, 1.0, 1.0]),
            Mlp::new(vec![Dense::identity(width)]).unwrap(),
            zero_heads(width),
        )
        .unwrap();
        assert_eq!(field.plane_features(&Vec3::new(0.3, 0.2, 0.9), 0.4), vec![2.0; width]);
        // Outside the bounds is clamped, not an error.
        assert_eq!(field.plane_features(&Vec3::new(-4.0, 9.0, 0.5), 0.4), vec![2.0; width]);
    }

    #[test]
    fn zero_heads_decode_to_zero() {
        let r = decode_residuals(&[0.3, -1.0, 2.0], &zero_heads(3)).unwrap();
        assert!(r.is_zero());
    }

    #[test]
    fn linear_readout() {
        let mut layer = Dense::zeros(5, 3);
        for i in 0..3 {
            layer.weights[i * 5 + i] = 1.0;
        }
        let heads = DeformationHeads {
            mean: Mlp::new(vec![layer]).unwrap(),
            ..zero_heads(5)
        };
        let r = decode_residuals(&[0.5, -2.0, 3.0, 9.0, 9.0], &heads).unwrap();
        assert_eq!(r.mean, [0.5, -2.0, 3.0]);
        assert!(decode_residuals(&[1.0], &heads).is_err());
    }

    #[test]
    fn shape_validation() {
        let h = 2;
        let planes = constant_planes(h, &[1], 4, [1.0; 6]);
        let ok_fuse = Mlp::new(vec![Dense::identity(2)]).unwrap();
        assert!(HexPlaneField::new(h, vec![1], 4, UNIT, planes.clone(), ok_fuse.clone(), zero_heads(2)).is_ok());
        // Fusion input must be h * |levels|.
        let bad_fuse = Mlp::new(vec![Dense::identity(3)]).unwrap();
        assert!(HexPlaneField::new(h, vec![1], 4, UNIT, planes.clone(), bad_fuse, zero_heads(3)).is_err());
        // Wrong head output width.
        let mut heads = zero_heads(2);
        heads.rotation = Mlp::new(vec![Dense::zeros(2, 3)]).unwrap();
        assert!(HexPlaneField::new(h, vec![1], 4, UNIT, planes.clone(), ok_fuse.clone(), heads).is_err());
        // Wrong plane resolution for the declared level.
        assert!(HexPlaneField::new(h, vec![2], 4, UNIT, planes, ok_fuse, zero_heads(2)).is_err());
        // Chained layer widths.
        assert!(Mlp::new(vec![Dense::zeros(2, 3), Dense::zeros(4, 1)]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let h = 2;
        let field = HexPlaneField::new(
            h,
            vec![1, 2],
            2,
            UNIT,
            constant_planes(h, &[1, 2], 2, [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]),
            Mlp::new(vec![Dense::identity(4), Dense::zeros(4, 2)]).unwrap(),
            zero_heads(2),
        )
        .unwrap();
        let text = serde_json::to_string(&field).unwrap();
        let back: HexPlaneField = serde_json::from_str(&text).unwrap();
        assert_eq!(back, field);
    }
}
