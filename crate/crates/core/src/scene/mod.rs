//! Gaussian primitives and scene snapshots.

mod file;
pub mod sh;

pub use file::{load_scene, save_scene, SceneFile};
pub use sh::{sh_basis, sh_eval_color};

use nalgebra::Quaternion;

use crate::math::{self, Mat3, Vec3};
use crate::{Error, Result};

/// Tolerance on the quaternion norm accepted by validation.
pub const ROTATION_NORM_TOLERANCE: f64 = 1e-6;

/// One anisotropic Gaussian.
///
/// `scale` holds standard deviations along the rotated principal axes and
/// `opacity` is the activated value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Vec3,
    pub rotation: Quaternion<f64>,
    pub scale: Vec3,
    pub opacity: f64,
    pub sh: Vec<Vec3>,
}

impl Gaussian {
    /// A Gaussian with a constant (degree-0) color.
    pub fn isotropic(mean: Vec3, sigma: f64, opacity: f64, dc: Vec3) -> Self {
        Gaussian {
            mean,
            rotation: Quaternion::identity(),
            scale: Vec3::repeat(sigma),
            opacity,
            sh: vec![dc],
        }
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        math::rotation_matrix(&self.rotation)
    }

    pub fn covariance(&self) -> Mat3 {
        covariance_unchecked(&self.rotation, &self.scale)
    }

    /// Checks every invariant, reporting the first offending field.
    pub fn validate(&self, index: usize, sh_degree: u8) -> Result<()> {
        let bad = |field: &'static str, reason: String| Error::InvalidGaussian {
            index,
            field,
            reason,
        };
        if !math::is_finite3(&self.mean) {
            return Err(bad("mean", "non-finite component".into()));
        }
        let qn = self.rotation.norm();
        if !qn.is_finite() || (qn - 1.0).abs() > ROTATION_NORM_TOLERANCE {
            return Err(bad("rotation", format!("norm {qn} is not 1")));
        }
        if !self.scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(bad(
                "scale",
                format!("components must be positive, got {:?}", self.scale.as_slice()),
            ));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(bad("opacity", format!("{} outside [0, 1]", self.opacity)));
        }
        let expected = sh::coeff_count(sh_degree);
        if self.sh.len() != expected {
            return Err(bad(
                "sh",
                format!("{} coefficients, degree {sh_degree} needs {expected}", self.sh.len()),
            ));
        }
        if !self.sh.iter().all(math::is_finite3) {
            return Err(bad("sh", "non-finite coefficient".into()));
        }
        Ok(())
    }
}

/// All Gaussians at one instant; the unit the tracer consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSnapshot {
    gaussians: Vec<Gaussian>,
    time: f64,
    sh_degree: u8,
}

impl SceneSnapshot {
    pub fn new(gaussians: Vec<Gaussian>, time: f64, sh_degree: u8) -> Result<Self> {
        if sh_degree > sh::MAX_SH_DEGREE {
            return Err(Error::param(format!("sh_degree {sh_degree} exceeds 3")));
        }
        if !(0.0..=1.0).contains(&time) {
            return Err(Error::param(format!("time {time} outside [0, 1]")));
        }
        for (i, g) in gaussians.iter().enumerate() {
            g.validate(i, sh_degree)?;
        }
        Ok(SceneSnapshot {
            gaussians,
            time,
            sh_degree,
        })
    }

    /// For producers that maintain the invariants by construction.
    pub(crate) fn new_unchecked(gaussians: Vec<Gaussian>, time: f64, sh_degree: u8) -> Self {
        debug_assert!(gaussians
            .iter()
            .enumerate()
            .all(|(i, g)| g.validate(i, sh_degree).is_ok()));
        SceneSnapshot {
            gaussians,
            time,
            sh_degree,
        }
    }

    pub fn gaussians(&self) -> &[Gaussian] {
        &self.gaussians
    }

    pub fn into_gaussians(self) -> Vec<Gaussian> {
        self.gaussians
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn sh_degree(&self) -> u8 {
        self.sh_degree
    }

    pub(crate) fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// Axis-aligned bounds of the Gaussian means, or `None` for an empty scene.
    pub fn mean_bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = self.gaussians.first()?.mean;
        Some(self.gaussians.iter().fold((first, first), |(lo, hi), g| {
            (lo.inf(&g.mean), hi.sup(&g.mean))
        }))
    }
}

/// `R S S^T R^T` for a unit quaternion and positive scales.
pub fn covariance_from_params(rotation: &Quaternion<f64>, scale: &Vec3) -> Result<Mat3> {
    let finite = rotation.coords.iter().all(|c| c.is_finite()) && math::is_finite3(scale);
    if !finite {
        return Err(Error::param("non-finite rotation or scale"));
    }
    if !scale.iter().all(|s| *s > 0.0) {
        return Err(Error::param("scale components must be positive"));
    }
    let n = rotation.norm();
    if (n - 1.0).abs() > ROTATION_NORM_TOLERANCE {
        return Err(Error::param(format!("rotation norm {n} is not 1")));
    }
    Ok(covariance_unchecked(rotation, scale))
}

pub(crate) fn covariance_unchecked(rotation: &Quaternion<f64>, scale: &Vec3) -> Mat3 {
    let m = math::rotation_matrix(rotation) * Mat3::from_diagonal(scale);
    m * m.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn unit_quat() -> impl Strategy<Value = Quaternion<f64>> {
        prop::array::uniform4(-1.0f64..1.0)
            .prop_filter("non-degenerate", |q| q.iter().map(|v| v * v).sum::<f64>() > 1e-3)
            .prop_map(|q| math::quat_from_wxyz(q).normalize())
    }

    #[test]
    fn identity_rotation_is_diagonal() {
        let c = covariance_from_params(&Quaternion::identity(), &Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(c, Mat3::from_diagonal(&Vec3::new(1.0, 4.0, 9.0)));
    }

    #[test]
    fn quarter_turn_about_z_swaps_axes() {
        let q = Quaternion::new(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2);
        let c = covariance_from_params(&q, &Vec3::new(1.0, 2.0, 1.0)).unwrap();
        let expected = Mat3::from_diagonal(&Vec3::new(4.0, 1.0, 1.0));
        assert!((c - expected).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_and_non_positive() {
        let q = Quaternion::identity();
        assert!(covariance_from_params(&q, &Vec3::new(f64::NAN, 1.0, 1.0)).is_err());
        assert!(covariance_from_params(&q, &Vec3::new(0.0, 1.0, 1.0)).is_err());
        let bad = Quaternion::new(f64::INFINITY, 0.0, 0.0, 0.0);
        assert!(covariance_from_params(&bad, &Vec3::repeat(1.0)).is_err());
    }

    #[test]
    fn validate_names_field() {
        let mut g = Gaussian::isotropic(Vec3::zeros(), 1.0, 0.5, Vec3::zeros());
        g.scale = Vec3::new(0.0, 1.0, 1.0);
        match g.validate(7, 0) {
            Err(Error::InvalidGaussian { index: 7, field: "scale", .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        g.scale = Vec3::repeat(1.0);
        g.opacity = 1.5;
        assert!(matches!(
            g.validate(0, 0),
            Err(Error::InvalidGaussian { field: "opacity", .. })
        ));
        g.opacity = 0.5;
        assert!(matches!(
            g.validate(0, 1),
            Err(Error::InvalidGaussian { field: "sh", .. })
        ));
    }

    proptest! {
        /// Eigenvalues of the covariance are the squared scales (symmetric
        /// eigen-decomposition as the oracle).
        #[test]
        fn eigenvalues_are_squared_scales(
            q in unit_quat(),
            s in prop::array::uniform3(0.05f64..3.0),
        ) {
            let s = Vec3::from(s);
            let c = covariance_from_params(&q, &s).unwrap();
            prop_assert!((c - c.transpose()).abs().max() < 1e-12);
            let mut eig: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            let mut expected: Vec<f64> = s.iter().map(|v| v * v).collect();
            expected.sort_by(f64::total_cmp);
            for (a, b) in eig.iter().zip(&expected) {
                prop_assert!((a - b).abs() < 1e-9 * b.max(1.0));
            }
        }

        #[test]
        fn double_cover_and_determinant(
            q in unit_quat(),
            s in prop::array::uniform3(0.05f64..3.0),
        ) {
            let s = Vec3::from(s);
            let a = covariance_from_params(&q, &s).unwrap();
            let b = covariance_from_params(&-q, &s).unwrap();
            prop_assert!((a - b).abs().max() < 1e-15);
            let det = (s.x * s.y * s.z).powi(2);
            prop_assert!((a.determinant() - det).abs() <= 1e-9 * det);
        }
    }
}
