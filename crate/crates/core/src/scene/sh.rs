//! Real spherical harmonics up to degree 3, in the sign convention used by
//! common Gaussian-splatting checkpoints.

use crate::math::Vec3;
use crate::{Error, Result};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_SH_DEGREE: u8 = 3;

/// Number of coefficients per color channel for a degree.
pub const fn coeff_count(degree: u8) -> usize {
    (degree as usize + 1) * (degree as usize + 1)
}

pub fn degree_for_count(count: usize) -> Result<u8> {
    match count {
        1 => Ok(0),
        4 => Ok(1),
        9 => Ok(2),
        16 => Ok(3),
        n => Err(Error::param(format!(
            "{n} SH coefficients is not (degree+1)^2 for a degree in 0..=3"
        ))),
    }
}

/// Basis values for all 16 functions; entries beyond the degree in use are ignored by callers.
pub fn sh_basis(dir: &Vec3) -> [f64; 16] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * x * y,
        SH_C2[1] * y * z,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * x * z,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * x * y * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// SH expansion plus the 0.5 offset, before clamping.
pub(crate) fn eval_unclamped(coeffs: &[Vec3], dir: &Vec3) -> Vec3 {
    let basis = sh_basis(dir);
    let mut c = Vec3::repeat(0.5);
    for (coeff, b) in coeffs.iter().zip(basis) {
        c += coeff * b;
    }
    c
}

/// View-dependent RGB color of a Gaussian, clamped to `[0, 1]`.
pub fn sh_eval_color(coeffs: &[Vec3], view_dir: &Vec3) -> Result<Vec3> {
    degree_for_count(coeffs.len())?;
    let n = view_dir.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
        return Err(Error::param(format!("view direction norm {n} is not unit")));
    }
    Ok(eval_unclamped(coeffs, view_dir).map(|v| v.clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dc_white() {
        let c = sh_eval_color(&[Vec3::repeat(1.0)], &Vec3::new(0.0, 0.6, 0.8)).unwrap();
        for ch in c.iter() {
            assert!((ch - 0.782_094_79).abs() < 1e-8);
        }
    }

    #[test]
    fn dc_zero_is_offset() {
        let c = sh_eval_color(&[Vec3::zeros()], &Vec3::z()).unwrap();
        assert_eq!(c, Vec3::repeat(0.5));
    }

    #[test]
    fn z_band_antisymmetry() {
        // Y_1^0 = sqrt(3 / (4 pi)) z evaluates to +-sqrt(3/(4 pi)) at +-z.
        let y10 = (3.0 / (4.0 * std::f64::consts::PI)).sqrt();
        let coeff = 0.3;
        let mut coeffs = vec![Vec3::zeros(); 4];
        coeffs[2] = Vec3::repeat(coeff);
        let up = eval_unclamped(&coeffs, &Vec3::z());
        let down = eval_unclamped(&coeffs, &-Vec3::z());
        assert!(((up.x - down.x) - 2.0 * y10 * coeff).abs() < 1e-12);
        let clamped = sh_eval_color(&coeffs, &Vec3::z()).unwrap();
        assert_eq!(clamped, up);
    }

    #[test]
    fn bad_counts_rejected() {
        for n in [0, 2, 3, 5, 10, 25] {
            assert!(sh_eval_color(&vec![Vec3::zeros(); n], &Vec3::z()).is_err());
        }
    }

    #[test]
    fn non_unit_direction_rejected() {
        assert!(sh_eval_color(&[Vec3::zeros()], &Vec3::new(0.0, 0.0, 2.0)).is_err());
    }

    /// Orthonormality over the sphere, checked with a product Gauss-style
    /// midpoint quadrature in (cos theta, phi).
    #[test]
    fn basis_is_orthonormal() {
        let (nt, np) = (200, 400);
        let mut gram = [[0.0f64; 16]; 16];
        for a in 0..nt {
            let ct = -1.0 + (a as f64 + 0.5) * 2.0 / nt as f64;
            let st = (1.0 - ct * ct).sqrt();
            for b in 0..np {
                let phi = (b as f64 + 0.5) * std::f64::consts::TAU / np as f64;
                let d = Vec3::new(st * phi.cos(), st * phi.sin(), ct);
                let y = sh_basis(&d);
                let w = (2.0 / nt as f64) * (std::f64::consts::TAU / np as f64);
                for i in 0..16 {
                    for j in 0..16 {
                        gram[i][j] += w * y[i] * y[j];
                    }
                }
            }
        }
        for i in 0..16 {
            for j in 0..16 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i][j] - expected).abs() < 1e-3, "({i},{j}) = {}", gram[i][j]);
            }
        }
    }

    proptest! {
        #[test]
        fn color_always_in_unit_cube(
            coeffs in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 16),
            theta in 0.0f64..std::f64::consts::PI,
            phi in 0.0f64..std::f64::consts::TAU,
            degree in 0u8..=3,
        ) {
            let coeffs: Vec<Vec3> = coeffs[..coeff_count(degree)].iter().map(|c| Vec3::from(*c)).collect();
            let d = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            let c = sh_eval_color(&coeffs, &d).unwrap();
            prop_assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
