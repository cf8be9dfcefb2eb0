//! Rigid and similarity transforms in 3-D.
//!
//! [`Pose`] is an SE(3) element stored as a unit quaternion plus a
//! translation. [`Tangent6`] is its Lie-algebra coordinate with the
//! translational part first, `(rho, phi)`. [`SimTransform`] adds a positive
//! scale and is only used for point alignment.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Quaternion, UnitQuaternion, Vector3, Vector6};

use crate::error::{Error, Result};

/// Below this rotation angle the closed forms switch to Taylor expansions.
const SMALL_ANGLE: f64 = 1e-6;

/// Taylor threshold for the higher-order Jacobian coefficients, whose closed
/// forms lose precision well before `SMALL_ANGLE`.
const SMALL_ANGLE_JACOBIAN: f64 = 5e-2;

/// Allowed deviation of a stored quaternion's norm from 1.
pub const UNIT_TOL: f64 = 1e-9;

/// Distance from pi inside which the logarithm refuses to pick a branch.
const BRANCH_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: renormalize(rotation.into_inner()),
            translation,
        }
    }

    /// Builds a pose from raw quaternion components, normalizing them.
    pub fn from_parts(w: f64, x: f64, y: f64, z: f64, translation: Vector3<f64>) -> Self {
        Self {
            rotation: renormalize(Quaternion::new(w, x, y, z)),
            translation,
        }
    }

    /// Like [`Pose::from_parts`], but keeps the components untouched when the
    /// quaternion is already unit within `UNIT_TOL`. Used by text parsers so
    /// that printed quaternions read back to the same digits.
    pub(crate) fn from_parts_tolerant(w: f64, x: f64, y: f64, z: f64, translation: Vector3<f64>) -> Self {
        let q = Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() <= UNIT_TOL {
            let q = if w < 0.0 { -q } else { q };
            Self {
                rotation: UnitQuaternion::new_unchecked(q),
                translation,
            }
        } else {
            Self::from_parts(w, x, y, z, translation)
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Rotation of `angle` radians about +z followed by no translation.
    pub fn from_yaw(angle: f64, translation: Vector3<f64>) -> Self {
        Self::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle),
            translation,
        )
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// `self ∘ other`: the pose reached by applying `other` in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: renormalize((self.rotation * other.rotation).into_inner()),
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    /// Relative pose `self⁻¹ ∘ other`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        self.rotation.angle()
    }

    pub fn exp(v: &Tangent6) -> Pose {
        let rotation = so3_exp(&v.phi);
        let translation = so3_left_jacobian(&v.phi) * v.rho;
        Pose {
            rotation,
            translation,
        }
    }

    pub fn log(&self) -> Result<Tangent6> {
        let phi = so3_log(&self.rotation)?;
        let rho = so3_left_jacobian_inv(&phi) * self.translation;
        Ok(Tangent6 { rho, phi })
    }

    /// Adjoint in `(rho, phi)` ordering: `[[R, t^R], [0, R]]`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation_matrix();
        let tr = hat(&self.translation) * r;
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(0, 3).copy_from(&tr);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad
    }

    /// Rotation angle and translation distance between two poses.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        let d = self.between(other);
        (d.angle(), d.translation.norm())
    }
}

/// se(3) coordinates: `rho` translational, `phi` rotational (radians).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Tangent6 {
    pub rho: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl Tangent6 {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self { rho, phi }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            rho: v.fixed_rows::<3>(0).into_owned(),
            phi: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.rho.x, self.rho.y, self.rho.z, self.phi.x, self.phi.y, self.phi.z,
        )
    }

    pub fn norm(&self) -> f64 {
        (self.rho.norm_squared() + self.phi.norm_squared()).sqrt()
    }
}

/// A similarity transform `p ↦ a·R·p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
    scale: f64,
}

impl SimTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidScale(scale));
        }
        Ok(Self {
            rotation: renormalize(rotation.into_inner()),
            translation,
            scale,
        })
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &SimTransform) -> SimTransform {
        SimTransform {
            rotation: renormalize((self.rotation * other.rotation).into_inner()),
            translation: self.scale * (self.rotation * other.translation) + self.translation,
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> SimTransform {
        let inv = self.rotation.inverse();
        SimTransform {
            rotation: inv,
            translation: -(inv * self.translation) / self.scale,
            scale: 1.0 / self.scale,
        }
    }
}

/// `a·R·p + t`
pub fn apply_sim(s: &SimTransform, p: &Vector3<f64>) -> Vector3<f64> {
    s.apply(p)
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn exp(v: &Tangent6) -> Pose {
    Pose::exp(v)
}

pub fn log(p: &Pose) -> Result<Tangent6> {
    p.log()
}

fn renormalize(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    // already-unit inputs pass through untouched so renormalizing is idempotent
    let q = if (q.norm_squared() - 1.0).abs() <= 4.0 * f64::EPSILON {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::new_normalize(q)
    };
    // keep w >= 0 so equal rotations compare equal component-wise
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub(crate) fn so3_exp(phi: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta = phi.norm();
    let half = 0.5 * theta;
    let (w, k) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 8.0, 0.5 - t2 / 48.0)
    } else {
        (half.cos(), half.sin() / theta)
    };
    renormalize(Quaternion::new(w, k * phi.x, k * phi.y, k * phi.z))
}

pub(crate) fn so3_log(q: &UnitQuaternion<f64>) -> Result<Vector3<f64>> {
    let mut w = q.w;
    let mut v = q.imag();
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let s = v.norm();
    let theta = 2.0 * s.atan2(w);
    if (PI - theta).abs() < BRANCH_EPS {
        return Err(Error::LogBranch { angle: theta });
    }
    if theta < SMALL_ANGLE {
        // theta / sin(theta/2) ≈ 2/w · (1 + s²/(6w²))
        let k = 2.0 / w * (1.0 - s * s / (3.0 * w * w));
        Ok(v * k)
    } else {
        Ok(v * (theta / s))
    }
}

/// Left Jacobian of SO(3); also the `V` matrix mapping `rho` to translation.
pub(crate) fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let (a, b) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        let sh = (0.5 * theta).sin();
        (2.0 * sh * sh / t2, (theta - theta.sin()) / (t2 * theta))
    };
    let k = hat(phi);
    Matrix3::identity() + k * a + k * k * b
}

pub(crate) fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let c = if theta < SMALL_ANGLE_JACOBIAN {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    let k = hat(phi);
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// The `Q(rho, phi)` coupling block of the SE(3) left Jacobian.
fn se3_q(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let t2 = theta * theta;
    let (c1, c2, c3) = if theta < SMALL_ANGLE_JACOBIAN {
        let t4 = t2 * t2;
        let c1 = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0;
        let c2 = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0;
        let c3 = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0;
        (c1, c2, c3)
    } else {
        let (s, c) = theta.sin_cos();
        let t3 = t2 * theta;
        let t4 = t2 * t2;
        let t5 = t4 * theta;
        let c1 = (theta - s) / t3;
        let c2 = (0.5 * t2 + c - 1.0) / t4;
        let c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t5);
        (c1, c2, c3)
    };
    let p = hat(phi);
    let r = hat(rho);
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    r * 0.5 + (pr + rp + prp) * c1 + (p * pr + rp * p - prp * 3.0) * c2 + (prp * p + p * prp) * c3
}

/// Inverse of the SE(3) left Jacobian, `(rho, phi)` ordering.
pub(crate) fn se3_left_jacobian_inv(v: &Tangent6) -> Matrix6<f64> {
    let a = so3_left_jacobian_inv(&v.phi);
    let q = se3_q(&v.rho, &v.phi);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-(a * q * a)));
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&a);
    out
}

/// Inverse of the SE(3) right Jacobian: `d log(E·exp(δ)) / dδ` at `δ = 0`.
pub(crate) fn se3_right_jacobian_inv(v: &Tangent6) -> Matrix6<f64> {
    se3_left_jacobian_inv(&Tangent6::new(-v.rho, -v.phi))
}
