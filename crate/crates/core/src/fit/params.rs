//! Unconstrained parameterization of a Gaussian set, flat gradient buffers
//! and the Adam update.

use serde::{Deserialize, Serialize};

use super::backprop::HitGradient;
use crate::deform::{Residuals, SCALE_EPSILON};
use crate::math::{logit, normalize_vjp, quat_from_wxyz, quat_to_wxyz, sigmoid, Vec3};
use crate::scene::{sh, Gaussian, SceneSnapshot};

/// Opacities are kept this far from 0 and 1 so the logit stays finite.
pub const OPACITY_CLAMP: f64 = 1e-6;

const MEAN: usize = 0;
const LOG_SCALE: usize = 3;
const ROTATION: usize = 6;
const OPACITY: usize = 10;
const SH: usize = 11;

/// Per-group step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub mean: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub sh: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            mean: 1.6e-4,
            scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            sh: 2.5e-3,
        }
    }
}

impl LearningRates {
    pub fn all(&self) -> [f64; 5] {
        [self.mean, self.scale, self.rotation, self.opacity, self.sh]
    }

    fn for_offset(&self, offset: usize) -> f64 {
        match offset {
            o if o < LOG_SCALE => self.mean,
            o if o < ROTATION => self.scale,
            o if o < OPACITY => self.rotation,
            OPACITY => self.opacity,
            _ => self.sh,
        }
    }
}

/// Gaussians stored as flat unconstrained parameters (mean, log scale, raw
/// quaternion, opacity logit, SH), alongside the activated Gaussians. An
/// activated field is recomputed only when its raw parameters change, so
/// untouched Gaussians round-trip bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct FitParams {
    stride: usize,
    sh_degree: u8,
    raw: Vec<f64>,
    gaussians: Vec<Gaussian>,
}

impl FitParams {
    pub fn from_snapshot(snapshot: &SceneSnapshot) -> Self {
        let n_coeffs = sh::coeff_count(snapshot.sh_degree());
        let stride = SH + 3 * n_coeffs;
        let mut raw = Vec::with_capacity(stride * snapshot.len());
        for g in snapshot.gaussians() {
            raw.extend(g.mean.iter());
            raw.extend(g.scale.iter().map(|s| s.ln()));
            raw.extend(quat_to_wxyz(&g.rotation));
            raw.push(logit(g.opacity.clamp(OPACITY_CLAMP, 1.0 - OPACITY_CLAMP)));
            for c in &g.sh[..n_coeffs] {
                raw.extend(c.iter());
            }
        }
        FitParams {
            stride,
            sh_degree: snapshot.sh_degree(),
            raw,
            gaussians: snapshot.gaussians().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn sh_degree(&self) -> u8 {
        self.sh_degree
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn gaussians(&self) -> &[Gaussian] {
        &self.gaussians
    }

    pub fn snapshot(&self, time: f64) -> SceneSnapshot {
        SceneSnapshot::new_unchecked(self.gaussians.clone(), time, self.sh_degree)
    }

    fn block(&self, i: usize) -> &[f64] {
        &self.raw[i * self.stride..(i + 1) * self.stride]
    }

    /// Overwrites raw parameter `j` of Gaussian `i` and refreshes its activation.
    pub fn set_raw(&mut self, i: usize, j: usize, value: f64) {
        self.raw[i * self.stride + j] = value;
        self.refresh(i, group_of(j));
    }

    fn refresh(&mut self, i: usize, group: Group) {
        let b = self.block(i).to_vec();
        let g = &mut self.gaussians[i];
        match group {
            Group::Mean => g.mean = Vec3::new(b[0], b[1], b[2]),
            Group::Scale => g.scale = Vec3::new(b[3], b[4], b[5]).map(f64::exp),
            Group::Rotation => {
                let q = quat_from_wxyz([b[6], b[7], b[8], b[9]]);
                g.rotation = q / q.norm();
            }
            Group::Opacity => g.opacity = sigmoid(b[OPACITY]),
            Group::Sh => {
                for (k, c) in g.sh.iter_mut().enumerate().take((self.stride - SH) / 3) {
                    let o = SH + 3 * k;
                    *c = Vec3::new(b[o], b[o + 1], b[o + 2]);
                }
            }
        }
    }

    /// Parameters for a new Gaussian list. Entries with a source copy that
    /// Gaussian's raw values; the rest are derived from the Gaussians.
    pub(crate) fn rebuild(&self, gaussians: Vec<Gaussian>, keep_raw: &[Option<usize>]) -> FitParams {
        let snapshot = SceneSnapshot::new_unchecked(gaussians, 0.0, self.sh_degree);
        let mut out = FitParams::from_snapshot(&snapshot);
        for (i, src) in keep_raw.iter().enumerate() {
            if let Some(s) = src {
                out.raw[i * self.stride..(i + 1) * self.stride].copy_from_slice(self.block(*s));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Mean,
    Scale,
    Rotation,
    Opacity,
    Sh,
}

fn group_of(offset: usize) -> Group {
    match offset {
        o if o < LOG_SCALE => Group::Mean,
        o if o < ROTATION => Group::Scale,
        o if o < OPACITY => Group::Rotation,
        OPACITY => Group::Opacity,
        _ => Group::Sh,
    }
}

/// Loss gradients in the raw parameter layout of a [`FitParams`], plus the
/// per-Gaussian densification statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    stride: usize,
    data: Vec<f64>,
    /// Largest (optionally distance-scaled) mean-gradient norm seen since the
    /// last densification.
    pub mean_grad_max: Vec<f64>,
}

impl ParamGradients {
    pub fn zeros(params: &FitParams) -> Self {
        ParamGradients {
            stride: params.stride,
            data: vec![0.0; params.raw.len()],
            mean_grad_max: vec![0.0; params.len()],
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }

    pub fn mean(&self, i: usize) -> Vec3 {
        let b = self.block(i);
        Vec3::new(b[0], b[1], b[2])
    }

    pub fn log_scale(&self, i: usize) -> Vec3 {
        let b = self.block(i);
        Vec3::new(b[3], b[4], b[5])
    }

    pub fn rotation(&self, i: usize) -> [f64; 4] {
        let b = self.block(i);
        [b[6], b[7], b[8], b[9]]
    }

    pub fn opacity_logit(&self, i: usize) -> f64 {
        self.block(i)[OPACITY]
    }

    pub fn sh(&self, i: usize) -> &[f64] {
        &self.block(i)[SH..]
    }

    pub fn clear(&mut self) {
        self.data.fill(0.0);
    }

    pub fn add(&mut self, other: &ParamGradients) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Folds the mean-gradient norms of this iteration into the running max.
    pub fn track_mean_norms(&mut self, scale: impl Fn(usize) -> f64) {
        for i in 0..self.mean_grad_max.len() {
            let m = self.mean(i).norm() * scale(i);
            if m > self.mean_grad_max[i] {
                self.mean_grad_max[i] = m;
            }
        }
    }

    /// Adds a hit gradient, expressed on the deformed Gaussian, to the raw
    /// parameters of its canonical Gaussian. Residual gradients with respect
    /// to the canonical mean (position-dependent fields) are not propagated.
    pub fn accumulate(&mut self, params: &FitParams, residuals: &Residuals, hit: &HitGradient) {
        let i = hit.gaussian_index;
        let g = &params.gaussians[i];
        let n_coeffs = (self.stride - SH) / 3;
        let raw_q = {
            let b = params.block(i);
            [b[6], b[7], b[8], b[9]]
        };
        let out = &mut self.data[i * self.stride..(i + 1) * self.stride];

        for k in 0..3 {
            out[MEAN + k] += hit.mean[k];
            let passes = residuals.scale[k] == 0.0 || g.scale[k] + residuals.scale[k] > SCALE_EPSILON;
            if passes {
                out[LOG_SCALE + k] += hit.scale[k] * g.scale[k];
            }
        }

        let mut d_q = hit.rotation;
        if residuals.rotation.iter().any(|v| *v != 0.0) {
            let [w, x, y, z] = residuals.rotation;
            let q = g.rotation + nalgebra::Quaternion::new(w, x, y, z);
            let n = q.norm();
            if n > 1e-12 && n.is_finite() {
                d_q = normalize_vjp(quat_to_wxyz(&q), d_q);
            }
        }
        let d_raw = normalize_vjp(raw_q, d_q);
        for k in 0..4 {
            out[ROTATION + k] += d_raw[k];
        }

        out[OPACITY] += hit.opacity * g.opacity * (1.0 - g.opacity);
        for k in 0..n_coeffs {
            for ch in 0..3 {
                out[SH + 3 * k + ch] += hit.sh[k][ch];
            }
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates, one pair per raw parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: LearningRates,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: LearningRates, params: &FitParams) -> Self {
        Adam {
            lr,
            step: 0,
            m: vec![0.0; params.raw.len()],
            v: vec![0.0; params.raw.len()],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. Activations are refreshed per group only
    /// where a raw value actually moved.
    pub fn step(&mut self, params: &mut FitParams, grads: &ParamGradients) {
        debug_assert_eq!(grads.data.len(), params.raw.len());
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        let stride = params.stride;
        for i in 0..params.len() {
            let mut changed = [false; 5];
            for j in 0..stride {
                let idx = i * stride + j;
                let g = grads.data[idx];
                self.m[idx] = ADAM_BETA1 * self.m[idx] + (1.0 - ADAM_BETA1) * g;
                self.v[idx] = ADAM_BETA2 * self.v[idx] + (1.0 - ADAM_BETA2) * g * g;
                let update = self.lr.for_offset(j) * (self.m[idx] / bc1) / ((self.v[idx] / bc2).sqrt() + ADAM_EPSILON);
                let next = params.raw[idx] - update;
                if next != params.raw[idx] {
                    params.raw[idx] = next;
                    changed[group_of(j) as usize] = true;
                }
            }
            for (flag, group) in changed.iter().zip([Group::Mean, Group::Scale, Group::Rotation, Group::Opacity, Group::Sh]) {
                if *flag {
                    params.refresh(i, group);
                }
            }
            if changed[Group::Rotation as usize] {
                // Keep the raw quaternion unit so its gradient stays well scaled.
                let o = i * stride + ROTATION;
                let n = params.raw[o..o + 4].iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in &mut params.raw[o..o + 4] {
                    *v /= n;
                }
            }
        }
    }

    /// Moments for a rebuilt parameter set: entries with a source keep its
    /// moments, new ones start at zero.
    pub(crate) fn remap(&self, stride: usize, sources: &[Option<usize>]) -> Adam {
        let mut m = vec![0.0; sources.len() * stride];
        let mut v = vec![0.0; sources.len() * stride];
        for (i, src) in sources.iter().enumerate() {
            if let Some(s) = src {
                m[i * stride..(i + 1) * stride].copy_from_slice(&self.m[s * stride..(s + 1) * stride]);
                v[i * stride..(i + 1) * stride].copy_from_slice(&self.v[s * stride..(s + 1) * stride]);
            }
        }
        Adam { lr: self.lr, step: self.step, m, v }
    }
}
