//! Small quaternion and vector helpers shared across modules.
//!
//! Quaternions follow the scalar-first `[w, x, y, z]` convention used in the
//! scene and camera files.

use nalgebra::{Matrix3, Quaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Builds a quaternion from scalar-first components.
pub fn quat_from_wxyz(q: [f64; 4]) -> Quaternion<f64> {
    Quaternion::new(q[0], q[1], q[2], q[3])
}

pub fn quat_to_wxyz(q: &Quaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

/// Rotation matrix of the normalized quaternion. The input need not be unit.
pub fn rotation_matrix(q: &Quaternion<f64>) -> Mat3 {
    let n = q.norm();
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
    rotation_matrix_unit(w, x, y, z)
}

pub(crate) fn rotation_matrix_unit(w: f64, x: f64, y: f64, z: f64) -> Mat3 {
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient with respect to the entries of `R(w, x, y, z)` back to the
/// four quaternion components, treating them as already normalized.
pub(crate) fn rotation_matrix_vjp(q: [f64; 4], g: &Mat3) -> [f64; 4] {
    let [w, x, y, z] = q;
    let g = |r: usize, c: usize| g[(r, c)];
    let dw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2)
            + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let dy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2)
            - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let dz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    [dw, dx, dy, dz]
}

/// Gradient through `q / |q|`: maps d/d(normalized) to d/d(raw).
pub(crate) fn normalize_vjp(raw: [f64; 4], grad: [f64; 4]) -> [f64; 4] {
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let unit = raw.map(|v| v / n);
    let dot: f64 = unit.iter().zip(&grad).map(|(a, b)| a * b).sum();
    [0, 1, 2, 3].map(|i| (grad[i] - unit[i] * dot) / n)
}

pub fn is_finite3(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_matrix_is_orthonormal() {
        let q = quat_from_wxyz([0.3, -0.5, 0.7, 0.2]);
        let r = rotation_matrix(&q);
        let err = (r.transpose() * r - Mat3::identity()).abs().max();
        assert!(err < 1e-14);
        assert!((r.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn matches_nalgebra_unit_quaternion() {
        let q = quat_from_wxyz([0.9, 0.1, -0.3, 0.2]);
        let ours = rotation_matrix(&q);
        let theirs = nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        assert!((ours - theirs.matrix()).abs().max() < 1e-14);
    }

    #[test]
    fn rotation_vjp_matches_finite_differences() {
        let q = [0.8, 0.2, -0.4, 0.3];
        let g = Mat3::new(0.3, -1.0, 0.2, 0.5, 0.7, -0.1, 1.1, 0.4, -0.6);
        let f = |q: [f64; 4]| rotation_matrix_unit(q[0], q[1], q[2], q[3]).component_mul(&g).sum();
        let analytic = rotation_matrix_vjp(q, &g);
        for i in 0..4 {
            let (mut p, mut m) = (q, q);
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (f(p) - f(m)) / 2e-6;
            assert!((fd - analytic[i]).abs() < 1e-8, "component {i}: {fd} vs {}", analytic[i]);
        }
    }
}
