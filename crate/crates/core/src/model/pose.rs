//! Rigid transforms and Cartesian velocities.
//!
//! A [`Pose`] stores a position in meters and a unit quaternion. The
//! quaternion is renormalized and sign-canonicalized (`w >= 0`) by every
//! constructor so two poses describing the same transform compare equal.

use nalgebra::{Isometry3, Matrix3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    position: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let q = UnitQuaternion::new_normalize(*q.quaternion());
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonical(orientation),
        }
    }

    /// Builds a pose from raw components, rejecting non-finite values and
    /// quaternions too close to zero to normalize.
    pub fn from_parts(p: [f64; 3], q: [f64; 4]) -> Result<Self, ModelError> {
        if p.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidPose("non-finite component".into()));
        }
        let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
        if raw.norm() < 1e-6 {
            return Err(ModelError::InvalidPose("quaternion norm is zero".into()));
        }
        Ok(Self::new(
            Vector3::new(p[0], p[1], p[2]),
            UnitQuaternion::from_quaternion(raw),
        ))
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let rot = match nalgebra::Unit::try_new(axis, 1e-12) {
            Some(axis) => UnitQuaternion::from_axis_angle(&axis, angle),
            None => UnitQuaternion::identity(),
        };
        Self::new(Vector3::zeros(), rot)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::z(), angle)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn position(&self) -> Vector3<f64> {
        self.position
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        self.orientation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    /// `[w, x, y, z]`
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn with_position(mut self, position: Vector3<f64>) -> Self {
        self.position = position;
        self
    }

    /// `self ∘ other`: `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.position + self.orientation * other.position,
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    /// Position distance and rotation angle between two poses.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        (
            (self.position - other.position).norm(),
            self.orientation.angle_to(&other.orientation),
        )
    }

    /// Error twist taking `self` to `target`, both in the world frame:
    /// linear part is the position difference, angular part the rotation
    /// vector of `target.R * self.Rᵀ`.
    pub fn error_to(&self, target: &Pose) -> [f64; 6] {
        let dp = target.position - self.position;
        let dr = (target.orientation * self.orientation.inverse()).scaled_axis();
        [dp.x, dp.y, dp.z, dr.x, dr.y, dr.z]
    }

    /// Interpolates position linearly and orientation by slerp along the
    /// shorter arc.
    pub fn interpolate(&self, other: &Pose, s: f64) -> Pose {
        if s <= 0.0 {
            return *self;
        }
        if s >= 1.0 {
            return *other;
        }
        Pose::new(
            self.position.lerp(&other.position, s),
            slerp(&self.orientation, &other.orientation, s),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Spherical interpolation, exact at both endpoints.
pub fn slerp(q0: &UnitQuaternion<f64>, q1: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    if s <= 0.0 {
        return canonical(*q0);
    }
    if s >= 1.0 {
        return canonical(*q1);
    }
    let mut end = *q1.quaternion();
    if q0.coords.dot(&end.coords) < 0.0 {
        end = -end;
    }
    let end = UnitQuaternion::new_unchecked(end);
    match q0.try_slerp(&end, s, 1e-12) {
        Some(q) => canonical(q),
        None => canonical(UnitQuaternion::from_quaternion(q0.lerp(&end, s))),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    p: [f64; 3],
    q: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PoseDoc {
            p: [self.position.x, self.position.y, self.position.z],
            q: self.quaternion_wxyz(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = PoseDoc::deserialize(deserializer)?;
        Pose::from_parts(doc.p, doc.q).map_err(serde::de::Error::custom)
    }
}

/// Cartesian velocity: linear (m/s) and angular (rad/s), world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Twist {
    pub linear: [f64; 3],
    pub angular: [f64; 3],
}

impl Twist {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(linear: [f64; 3], angular: [f64; 3]) -> Result<Self, ModelError> {
        if linear.iter().chain(angular.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidTwist);
        }
        Ok(Self { linear, angular })
    }

    pub fn is_zero(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| *v == 0.0)
    }

    /// Scales each part independently so its norm does not exceed the limit.
    pub fn clamped(&self, max_linear: f64, max_angular: f64) -> Twist {
        fn clamp3(v: [f64; 3], max: f64) -> [f64; 3] {
            let n = Vector3::from(v).norm();
            if n > max && n > 0.0 {
                let s = max / n;
                [v[0] * s, v[1] * s, v[2] * s]
            } else {
                v
            }
        }
        Twist {
            linear: clamp3(self.linear, max_linear),
            angular: clamp3(self.angular, max_angular),
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        let (l, a) = (self.linear, self.angular);
        [l[0], l[1], l[2], a[0], a[1], a[2]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
        let (dp, da) = a.distance(b);
        dp < tol && da < tol
    }

    #[test]
    fn identity_is_neutral() {
        let p = Pose::new(
            Vector3::new(0.1, -0.2, 0.3),
            UnitQuaternion::from_euler_angles(0.3, -0.1, 1.2),
        );
        assert_eq!(Pose::identity().compose(&p), p);
        assert!(close(&p.compose(&Pose::identity()), &p, 1e-15));
    }

    #[test]
    fn inverse_composes_to_identity() {
        let p = Pose::new(
            Vector3::new(1.0, 2.0, -3.0),
            UnitQuaternion::from_euler_angles(2.0, 0.4, -2.5),
        );
        assert!(close(&p.compose(&p.inverse()), &Pose::identity(), 1e-9));
        assert_eq!(Pose::identity().inverse(), Pose::identity());
        let t = Pose::from_translation(1.0, -2.0, 3.0).inverse();
        assert_eq!(t.position(), Vector3::new(-1.0, 2.0, -3.0));
    }

    #[test]
    fn sign_is_canonical() {
        let q = UnitQuaternion::new_unchecked(-UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3).into_inner());
        let p = Pose::new(Vector3::zeros(), q);
        assert!(p.quaternion_wxyz()[0] >= 0.0);
        // 350° about z has w < 0 before canonicalization
        let r = Pose::rot_z(350f64.to_radians());
        assert!(r.quaternion_wxyz()[0] >= 0.0);
    }

    #[test]
    fn json_layout() {
        let p = Pose::new(Vector3::new(1.0, 2.0, 3.0), UnitQuaternion::from_euler_angles(0.0, 0.0, FRAC_PI_2));
        let v = serde_json::to_value(p).unwrap();
        assert_eq!(v["p"], serde_json::json!([1.0, 2.0, 3.0]));
        assert_eq!(v["q"].as_array().unwrap().len(), 4);
        let back: Pose = serde_json::from_value(v).unwrap();
        assert!(close(&back, &p, 1e-15));

        let bad = serde_json::json!({"p": [0, 0, 0], "q": [1, 0, 0, 0], "frame": "x"});
        assert!(serde_json::from_value::<Pose>(bad).is_err());
        let zero = serde_json::json!({"p": [0, 0, 0], "q": [0, 0, 0, 0]});
        assert!(serde_json::from_value::<Pose>(zero).is_err());
    }

    #[test]
    fn slerp_endpoints() {
        let a = UnitQuaternion::from_euler_angles(0.2, 0.1, -0.4);
        let b = UnitQuaternion::from_euler_angles(-1.0, 0.7, 2.9);
        assert!(slerp(&a, &b, 0.0).angle_to(&a) < 1e-9);
        assert!(slerp(&a, &b, 1.0).angle_to(&b) < 1e-9);
        assert!(slerp(&a, &b, 1.0).w >= 0.0);
        let mid = slerp(&a, &b, 0.5);
        assert!((mid.angle_to(&a) - mid.angle_to(&b)).abs() < 1e-9);
    }

    #[test]
    fn twist_clamp() {
        let t = Twist::new([1.0, 0.0, 0.0], [0.0, 0.0, 3.0]).unwrap().clamped(0.25, 1.0);
        assert!((t.linear[0] - 0.25).abs() < 1e-15);
        assert!((t.angular[2] - 1.0).abs() < 1e-15);
        assert!(Twist::new([f64::NAN, 0.0, 0.0], [0.0; 3]).is_err());
    }
}
