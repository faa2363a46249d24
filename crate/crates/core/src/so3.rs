//! Rotation representations on SO(3).
//!
//! Rotation matrices, unit quaternions and rotation vectors (axis times
//! angle), the hat/vee isomorphism between R³ and so(3), the Rodrigues
//! exponential and its logarithm, and geodesic interpolation of quaternions
//! together with the analytic τ-derivative of the SLERP path.
//!
//! Quaternions use the scalar-first convention `(w, x, y, z)`. `q` and `-q`
//! describe the same rotation; conversions always return the representative
//! with `w >= 0`, and SLERP takes the shortest arc by negating the end point
//! when the two inputs lie in opposite hemispheres.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3, Vector4};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this angle the Rodrigues coefficients switch to their Taylor series.
pub const EXP_TAYLOR_THRESHOLD: f64 = 1e-8;
/// `log_map` refuses rotations whose angle is this close to π.
pub const LOG_PI_MARGIN: f64 = 1e-6;
/// Below this arc SLERP degrades to normalized linear interpolation.
pub const SLERP_SMALL_ARC: f64 = 1e-7;
/// Minimum hemisphere-fixed dot product for a unique SLERP path.
pub const ANTIPODAL_DOT: f64 = 1e-7;
/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum So3Error {
    #[error("AngleAtPi: rotation angle {angle} is within {LOG_PI_MARGIN} of pi")]
    AngleAtPi { angle: f64 },
    #[error("AntipodalPair: quaternion dot product {dot} leaves the geodesic undefined")]
    AntipodalPair { dot: f64 },
    #[error("NotARotation: orthonormality error {orthonormality}, determinant {det}")]
    NotARotation { orthonormality: f64, det: f64 },
    #[error("DegenerateQuaternion: components must be finite and not all zero")]
    DegenerateQuaternion,
}

impl So3Error {
    /// Short variant name, used as the library error name in diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            So3Error::AngleAtPi { .. } => "AngleAtPi",
            So3Error::AntipodalPair { .. } => "AntipodalPair",
            So3Error::NotARotation { .. } => "NotARotation",
            So3Error::DegenerateQuaternion => "DegenerateQuaternion",
        }
    }
}

/// A proper rotation: `mᵀm = I` and `det m = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Mat3::identity())
    }

    /// Validates orthonormality and determinant within [`ROTATION_TOLERANCE`].
    pub fn new(m: Mat3) -> Result<Self, So3Error> {
        let r = RotationMatrix(m);
        let orthonormality = r.orthonormality_error();
        let det = m.determinant();
        if !(orthonormality <= ROTATION_TOLERANCE && (det - 1.0).abs() <= ROTATION_TOLERANCE) {
            return Err(So3Error::NotARotation {
                orthonormality,
                det,
            });
        }
        Ok(r)
    }

    /// Wraps a matrix the caller already knows to be a rotation.
    pub fn new_unchecked(m: Mat3) -> Self {
        RotationMatrix(m)
    }

    /// Builds a rotation from three orthonormal columns.
    pub fn from_columns(e1: &Vec3, e2: &Vec3, e3: &Vec3) -> Self {
        RotationMatrix(Mat3::from_columns(&[*e1, *e2, *e3]))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn into_inner(self) -> Mat3 {
        self.0
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Largest elementwise deviation of `mᵀm` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).abs().max()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Geodesic distance to the identity, in radians on `[0, π]`.
    pub fn angle(&self) -> f64 {
        let (sin, cos) = sin_cos_of_angle(&self.0);
        sin.atan2(cos)
    }

    /// Geodesic distance between two rotations.
    pub fn angle_to(&self, other: &RotationMatrix) -> f64 {
        (self.transpose() * *other).angle()
    }

    pub fn to_quaternion(&self) -> UnitQuaternion {
        quat_from_matrix(self)
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Unit quaternion `(w, x, y, z)` with `w² + x² + y² + z² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        UnitQuaternion {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Normalizes the given components.
    pub fn new_normalize(w: f64, x: f64, y: f64, z: f64) -> Result<Self, So3Error> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(So3Error::DegenerateQuaternion);
        }
        Ok(UnitQuaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Takes components verbatim; the caller guarantees unit norm.
    pub fn from_array_unchecked(q: [f64; 4]) -> Self {
        UnitQuaternion {
            w: q[0],
            x: q[1],
            y: q[2],
            z: q[3],
        }
    }

    pub fn from_array(q: [f64; 4]) -> Result<Self, So3Error> {
        Self::new_normalize(q[0], q[1], q[2], q[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    fn from_vector_unchecked(v: Vector4<f64>) -> Self {
        UnitQuaternion {
            w: v[0],
            x: v[1],
            y: v[2],
            z: v[3],
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn dot(&self, other: &UnitQuaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn negated(&self) -> Self {
        UnitQuaternion {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// The representative with `w >= 0`.
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            self.negated()
        } else {
            *self
        }
    }

    /// Arc length on S³ between the two quaternions (not hemisphere-fixed).
    pub fn sphere_angle(&self, other: &UnitQuaternion) -> f64 {
        let a = self.to_vector();
        let b = other.to_vector();
        2.0 * (b - a).norm().atan2((b + a).norm())
    }

    pub fn to_matrix(&self) -> RotationMatrix {
        matrix_from_quat(self)
    }
}

/// Axis-angle vector `θ·n̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationVector(pub Vec3);

impl RotationVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        RotationVector(Vec3::new(x, y, z))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        RotationVector(axis * angle)
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }
}

/// Extrinsic tangent of a quaternion path, in R⁴ per unit τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuaternionTangent(pub [f64; 4]);

impl QuaternionTangent {
    pub fn zero() -> Self {
        QuaternionTangent([0.0; 4])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// `(sin θ, cos θ)` of a rotation matrix, with the cosine clamped to `[-1, 1]`.
fn sin_cos_of_angle(m: &Mat3) -> (f64, f64) {
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let sin = vee(&(m - m.transpose())).norm() / 2.0;
    (sin, cos)
}

/// Rodrigues' formula.
pub fn exp_map(omega: &RotationVector) -> RotationMatrix {
    let theta = omega.0.norm();
    let k = hat(&omega.0);
    let (a, b) = if theta < EXP_TAYLOR_THRESHOLD {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    RotationMatrix(Mat3::identity() + k * a + k * k * b)
}

/// Inverse of [`exp_map`] on rotations with angle strictly below π.
pub fn log_map(r: &RotationMatrix) -> Result<RotationVector, So3Error> {
    let m = r.matrix();
    let (sin, cos) = sin_cos_of_angle(m);
    let theta = sin.atan2(cos);
    if std::f64::consts::PI - theta < LOG_PI_MARGIN {
        return Err(So3Error::AngleAtPi { angle: theta });
    }
    let skew = vee(&(m - m.transpose()));
    if theta < EXP_TAYLOR_THRESHOLD {
        return Ok(RotationVector(skew * (0.5 * (1.0 + theta * theta / 6.0))));
    }
    Ok(RotationVector(skew * (theta / (2.0 * sin))))
}

/// Shepperd's method; the result has `w >= 0`.
pub fn quat_from_matrix(r: &RotationMatrix) -> UnitQuaternion {
    let m = r.matrix();
    let (m00, m11, m22) = (m[(0, 0)], m[(1, 1)], m[(2, 2)]);
    let trace = m00 + m11 + m22;
    let (w, x, y, z) = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        (
            0.25 * s,
            (m[(2, 1)] - m[(1, 2)]) / s,
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(1, 0)] - m[(0, 1)]) / s,
        )
    } else if m00 > m11 && m00 > m22 {
        let s = (1.0 + m00 - m11 - m22).sqrt() * 2.0;
        (
            (m[(2, 1)] - m[(1, 2)]) / s,
            0.25 * s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
        )
    } else if m11 > m22 {
        let s = (1.0 + m11 - m00 - m22).sqrt() * 2.0;
        (
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            0.25 * s,
            (m[(1, 2)] + m[(2, 1)]) / s,
        )
    } else {
        let s = (1.0 + m22 - m00 - m11).sqrt() * 2.0;
        (
            (m[(1, 0)] - m[(0, 1)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
            (m[(1, 2)] + m[(2, 1)]) / s,
            0.25 * s,
        )
    };
    let n = (w * w + x * x + y * y + z * z).sqrt();
    UnitQuaternion {
        w: w / n,
        x: x / n,
        y: y / n,
        z: z / n,
    }
    .canonical()
}

pub fn matrix_from_quat(q: &UnitQuaternion) -> RotationMatrix {
    let UnitQuaternion { w, x, y, z } = *q;
    RotationMatrix(Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

/// Hemisphere-fixed end point and the arc `φ` between the two quaternions.
fn geodesic(
    q0: &UnitQuaternion,
    q1: &UnitQuaternion,
) -> Result<(Vector4<f64>, Vector4<f64>, f64), So3Error> {
    let a = q0.to_vector();
    let mut b = q1.to_vector();
    let mut dot = a.dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    if dot < ANTIPODAL_DOT {
        return Err(So3Error::AntipodalPair { dot });
    }
    let phi = 2.0 * (b - a).norm().atan2((b + a).norm());
    Ok((a, b, phi))
}

/// Spherical linear interpolation along the shortest arc.
pub fn slerp(
    q0: &UnitQuaternion,
    q1: &UnitQuaternion,
    tau: f64,
) -> Result<UnitQuaternion, So3Error> {
    let (a, b, phi) = geodesic(q0, q1)?;
    if phi < SLERP_SMALL_ARC {
        let v = a * (1.0 - tau) + b * tau;
        return Ok(UnitQuaternion::from_vector_unchecked(v / v.norm()));
    }
    let s = phi.sin();
    let v = a * (((1.0 - tau) * phi).sin() / s) + b * ((tau * phi).sin() / s);
    Ok(UnitQuaternion::from_vector_unchecked(v))
}

/// Analytic `d/dτ slerp(q0, q1, τ)`.
///
/// `φ(−cos((1−τ)φ)·q0 + cos(τφ)·q1) / sin φ`, which has norm `φ` for every τ.
/// Below [`SLERP_SMALL_ARC`] the chord `q1 − q0` is returned.
pub fn slerp_derivative(
    q0: &UnitQuaternion,
    q1: &UnitQuaternion,
    tau: f64,
) -> Result<QuaternionTangent, So3Error> {
    let (a, b, phi) = geodesic(q0, q1)?;
    let v = if phi < SLERP_SMALL_ARC {
        b - a
    } else {
        let k = phi / phi.sin();
        a * (-k * ((1.0 - tau) * phi).cos()) + b * (k * (tau * phi).cos())
    };
    Ok(QuaternionTangent([v[0], v[1], v[2], v[3]]))
}

pub fn lerp(t0: &Vec3, t1: &Vec3, tau: f64) -> Vec3 {
    t1 * tau + t0 * (1.0 - tau)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_vec(rng: &mut impl Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ) * scale
    }

    fn random_quat(rng: &mut impl Rng) -> UnitQuaternion {
        loop {
            let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n2: f64 = c.iter().map(|v| v * v).sum();
            if n2 > 1e-3 && n2 <= 1.0 {
                return UnitQuaternion::from_array(c).unwrap();
            }
        }
    }

    fn random_omega(rng: &mut impl Rng, max_angle: f64) -> RotationVector {
        let axis = loop {
            let v = random_vec(rng, 1.0);
            if v.norm() > 1e-3 {
                break v.normalize();
            }
        };
        RotationVector::from_axis_angle(&axis, rng.random_range(0.0..max_angle))
    }

    /// Truncated power series of the matrix exponential.
    fn exp_series(k: &Mat3) -> Mat3 {
        let mut sum = Mat3::identity();
        let mut term = Mat3::identity();
        for n in 1..=30 {
            term = term * k / n as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn hat_matches_definition() {
        assert_eq!(hat(&Vec3::zeros()), Mat3::zeros());
        let expected = Mat3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(hat(&Vec3::new(1.0, 2.0, 3.0)), expected);
    }

    #[test]
    fn hat_is_cross_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_vec(&mut rng, 5.0);
        for _ in 0..100 {
            let p = random_vec(&mut rng, 5.0);
            assert!((hat(&v) * p - v.cross(&p)).norm() < 1e-12);
        }
    }

    #[test]
    fn exp_map_known_values() {
        assert_eq!(
            exp_map(&RotationVector::new(0.0, 0.0, 0.0)).into_inner(),
            Mat3::identity()
        );
        let r = exp_map(&RotationVector::new(0.0, 0.0, FRAC_PI_2));
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r.matrix() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn exp_map_matches_power_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let omega = random_omega(&mut rng, PI);
            let series = exp_series(&hat(&omega.0));
            assert!((exp_map(&omega).matrix() - series).abs().max() < 1e-10);
        }
    }

    #[test]
    fn exp_map_small_angle_branch_is_continuous() {
        let axis = Vec3::new(1.0, -2.0, 0.5).normalize();
        for theta in [1e-12, 5e-9, 9.9e-9, 1.01e-8, 1e-7] {
            let omega = RotationVector::from_axis_angle(&axis, theta);
            let series = exp_series(&hat(&omega.0));
            assert!((exp_map(&omega).matrix() - series).abs().max() < 1e-15);
        }
    }

    #[test]
    fn log_map_identity_and_roundtrip() {
        assert_eq!(
            log_map(&RotationMatrix::identity()).unwrap().0,
            Vec3::zeros()
        );
        let axis = Vec3::new(0.3, -0.4, 0.866).normalize();
        for angle in [0.1, 1.0, 3.0] {
            let omega = RotationVector::from_axis_angle(&axis, angle);
            let back = log_map(&exp_map(&omega)).unwrap();
            assert!((back.0 - omega.0).norm() < 1e-12, "angle {angle}");
        }
    }

    #[test]
    fn log_map_angle_matches_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let r = random_quat(&mut rng).to_matrix();
            let Ok(omega) = log_map(&r) else { continue };
            let direct = ((r.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
            assert!((omega.angle() - direct).abs() < 1e-7);
        }
    }

    #[test]
    fn log_map_rejects_half_turn() {
        let r = exp_map(&RotationVector::new(PI, 0.0, 0.0));
        assert!(matches!(log_map(&r), Err(So3Error::AngleAtPi { .. })));
        let r = exp_map(&RotationVector::new(0.0, PI - 1e-7, 0.0));
        assert!(matches!(log_map(&r), Err(So3Error::AngleAtPi { .. })));
        let r = exp_map(&RotationVector::new(0.0, PI - 1e-4, 0.0));
        assert!(log_map(&r).is_ok());
    }

    #[test]
    fn quaternion_conversions() {
        let q = quat_from_matrix(&RotationMatrix::identity());
        assert_eq!(q.to_array(), [1.0, 0.0, 0.0, 0.0]);
        let q = quat_from_matrix(&exp_map(&RotationVector::new(0.0, 0.0, FRAC_PI_2)));
        let expected = [FRAC_PI_4.cos(), 0.0, 0.0, FRAC_PI_4.sin()];
        for (a, b) in q.to_array().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn quaternion_roundtrip_covers_all_shepperd_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rotations: Vec<RotationMatrix> = (0..500)
            .map(|_| random_quat(&mut rng).to_matrix())
            .collect();
        // near-half-turns about each axis force the non-trace branches
        for axis in [Vec3::x(), Vec3::y(), Vec3::z()] {
            rotations.push(exp_map(&RotationVector::from_axis_angle(&axis, PI - 1e-3)));
            rotations.push(exp_map(&RotationVector::from_axis_angle(&axis, PI)));
        }
        for r in rotations {
            let q = quat_from_matrix(&r);
            assert!(q.w() >= 0.0);
            assert!((q.norm() - 1.0).abs() < 1e-12);
            assert!((matrix_from_quat(&q).matrix() - r.matrix()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn double_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let q = random_quat(&mut rng);
            assert_eq!(matrix_from_quat(&q), matrix_from_quat(&q.negated()));
        }
    }

    #[test]
    fn slerp_identity_path_and_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = random_quat(&mut rng);
        for tau in [0.0, 0.25, 0.5, 1.0] {
            let s = slerp(&q, &q, tau).unwrap();
            assert!(s.sphere_angle(&q) < 1e-15);
        }
        let q1 = quat_from_matrix(&exp_map(&RotationVector::new(0.0, 0.0, FRAC_PI_2)));
        let mid = slerp(&UnitQuaternion::identity(), &q1, 0.5).unwrap();
        let expected = exp_map(&RotationVector::new(0.0, 0.0, FRAC_PI_4));
        assert!((mid.to_matrix().matrix() - expected.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn slerp_endpoints_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (q0, q1) = (random_quat(&mut rng), random_quat(&mut rng));
            let fixed = if q0.dot(&q1) < 0.0 { q1.negated() } else { q1 };
            assert_eq!(slerp(&q0, &q1, 0.0).unwrap().to_array(), q0.to_array());
            assert_eq!(slerp(&q0, &q1, 1.0).unwrap().to_array(), fixed.to_array());
        }
    }

    #[test]
    fn slerp_angle_is_proportional_to_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let (q0, q1) = (random_quat(&mut rng), random_quat(&mut rng));
            let fixed = if q0.dot(&q1) < 0.0 { q1.negated() } else { q1 };
            let phi = q0.sphere_angle(&fixed);
            let tau: f64 = rng.random_range(0.0..1.0);
            let s = slerp(&q0, &q1, tau).unwrap();
            assert!((q0.sphere_angle(&s) - tau * phi).abs() < 1e-9);
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn slerp_rejects_antipodal_rotations() {
        let q1 = quat_from_matrix(&exp_map(&RotationVector::new(PI, 0.0, 0.0)));
        assert!(matches!(
            slerp(&UnitQuaternion::identity(), &q1, 0.5),
            Err(So3Error::AntipodalPair { .. })
        ));
        assert!(matches!(
            slerp_derivative(&UnitQuaternion::identity(), &q1, 0.5),
            Err(So3Error::AntipodalPair { .. })
        ));
    }

    #[test]
    fn slerp_small_arc_falls_back_to_nlerp() {
        let q0 = UnitQuaternion::identity();
        let q1 = quat_from_matrix(&exp_map(&RotationVector::new(1e-8, 0.0, 0.0)));
        let s = slerp(&q0, &q1, 0.5).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-15);
        assert!((q0.sphere_angle(&s) - 0.5 * q0.sphere_angle(&q1)).abs() < 1e-15);
        let d = slerp_derivative(&q0, &q1, 0.5).unwrap();
        assert!((d.norm() - q0.sphere_angle(&q1)).abs() < 1e-15);
    }

    #[test]
    fn slerp_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-5;
        for _ in 0..200 {
            let (q0, q1) = (random_quat(&mut rng), random_quat(&mut rng));
            let tau = 0.3;
            let plus = slerp(&q0, &q1, tau + h).unwrap().to_array();
            let minus = slerp(&q0, &q1, tau - h).unwrap().to_array();
            let fd: Vec<f64> = (0..4).map(|k| (plus[k] - minus[k]) / (2.0 * h)).collect();
            let analytic = slerp_derivative(&q0, &q1, tau).unwrap();
            let err: f64 = (0..4)
                .map(|k| (analytic.0[k] - fd[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err / analytic.norm() < 1e-6);
        }
    }

    #[test]
    fn slerp_derivative_has_constant_speed() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let (q0, q1) = (random_quat(&mut rng), random_quat(&mut rng));
            let fixed = if q0.dot(&q1) < 0.0 { q1.negated() } else { q1 };
            let phi = q0.sphere_angle(&fixed);
            for k in 0..=10 {
                let d = slerp_derivative(&q0, &q1, k as f64 / 10.0).unwrap();
                assert!((d.norm() - phi).abs() < 1e-12);
            }
        }
        let q = random_quat(&mut rng);
        assert_eq!(
            slerp_derivative(&q, &q, 0.4).unwrap(),
            QuaternionTangent::zero()
        );
    }

    #[test]
    fn lerp_values() {
        let t0 = Vec3::new(1.0, -2.0, 3.0);
        let t1 = Vec3::new(-4.0, 5.0, 0.5);
        assert_eq!(lerp(&t0, &t1, 0.0), t0);
        assert_eq!(lerp(&t0, &t1, 1.0), t1);
        assert_eq!(
            lerp(&Vec3::zeros(), &Vec3::new(2.0, 4.0, 6.0), 0.5),
            Vec3::new(1.0, 2.0, 3.0)
        );
        let d1 = lerp(&t0, &t1, 0.3 + 1e-3) - lerp(&t0, &t1, 0.3);
        let d2 = lerp(&t0, &t1, 0.8 + 1e-3) - lerp(&t0, &t1, 0.8);
        assert!((d1 - d2).norm() < 1e-12);
        assert!((d1 / 1e-3 - (t1 - t0)).norm() < 1e-9);
    }

    #[test]
    fn rotation_validation() {
        assert!(RotationMatrix::new(Mat3::identity()).is_ok());
        assert!(RotationMatrix::new(Mat3::identity() * 1.01).is_err());
        let reflection = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(matches!(
            RotationMatrix::new(reflection),
            Err(So3Error::NotARotation { .. })
        ));
    }

    mod props {
        use proptest::prelude::*;

        use super::super::*;

        fn vec3() -> impl Strategy<Value = Vec3> {
            (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64)
                .prop_map(|(x, y, z)| Vec3::new(x, y, z))
        }

        proptest! {
            #[test]
            fn vee_inverts_hat(v in vec3()) {
                let h = hat(&v);
                prop_assert_eq!(vee(&h), v);
                prop_assert_eq!(h.transpose(), -h);
            }

            #[test]
            fn exp_log_roundtrip(dir in vec3(), angle in 1e-6..(std::f64::consts::PI - 0.01)) {
                prop_assume!(dir.norm() > 1e-3);
                let omega = RotationVector::from_axis_angle(&dir.normalize(), angle);
                let back = log_map(&exp_map(&omega)).unwrap();
                prop_assert!((back.0 - omega.0).norm() < 1e-8);
            }

            #[test]
            fn hemisphere_fix_gives_same_rotation(
                a in vec3(), b in vec3(), tau in 0.0..1.0f64
            ) {
                prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
                let q0 = exp_map(&RotationVector(a.normalize() * 1.2)).to_quaternion();
                let q1 = exp_map(&RotationVector(b.normalize() * 2.5)).to_quaternion();
                prop_assume!(q0.dot(&q1).abs() > 1e-3);
                let s1 = slerp(&q0, &q1, tau).unwrap().to_matrix();
                let s2 = slerp(&q0, &q1.negated(), tau).unwrap().to_matrix();
                prop_assert!((s1.matrix() - s2.matrix()).abs().max() < 1e-9);
            }
        }
    }
}
