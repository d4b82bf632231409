//! Rigid 3D transforms (rotation + translation).

use nalgebra::{Matrix3, Vector3};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An SE(3) pose: `x -> R x + t`. Used both for pairwise relative poses
/// and for global per-DSM poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally),
    /// with zero translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let rotation = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            angle,
        )
        .into_inner();
        RigidTransform {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// Rotation about a fixed world point instead of the origin, plus an
    /// extra shift. The natural parametrization for perturbing a tile in
    /// place: `x -> R (x - c) + c + shift`.
    pub fn about_point(
        axis: Vector3<f64>,
        angle: f64,
        center: Vector3<f64>,
        shift: Vector3<f64>,
    ) -> Self {
        let r = Self::from_axis_angle(axis, angle).rotation;
        RigidTransform {
            rotation: r,
            translation: center - r * center + shift,
        }
    }

    pub fn apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_xyz(&self, x: f64, y: f64, z: f64) -> (f64, f64, f64) {
        let q = self.apply(Vector3::new(x, y, z));
        (q.x, q.y, q.z)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians, in [0, pi].
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn translation_norm(&self) -> f64 {
        self.translation.norm()
    }

    /// Frobenius distance between the two rotation matrices.
    pub fn chordal_distance(&self, other: &RigidTransform) -> f64 {
        (self.rotation - other.rotation).norm()
    }

    /// Orthonormality and determinant check for SO(3) membership.
    pub fn rotation_is_valid(&self) -> bool {
        let defect = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        defect <= 1e-9 && self.rotation.determinant() > 0.0
    }
}

#[derive(Serialize, Deserialize)]
struct RigidTransformWire {
    /// Row-major 3x3 rotation.
    rotation: Vec<f64>,
    translation: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut rotation = Vec::with_capacity(9);
        for r in 0..3 {
            for c in 0..3 {
                rotation.push(self.rotation[(r, c)]);
            }
        }
        RigidTransformWire {
            rotation,
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = RigidTransformWire::deserialize(deserializer)?;
        if wire.rotation.len() != 9 {
            return Err(D::Error::custom(format!(
                "rotation must have 9 entries, got {}",
                wire.rotation.len()
            )));
        }
        let rotation = Matrix3::from_row_slice(&wire.rotation);
        Ok(RigidTransform {
            rotation,
            translation: Vector3::new(
                wire.translation[0],
                wire.translation[1],
                wire.translation[2],
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn compose_then_inverse_is_identity() {
        let a = RigidTransform::from_axis_angle(Vector3::new(0.2, -1.0, 0.5), 0.3)
            .compose(&RigidTransform::from_translation(1.0, -2.0, 3.0));
        let i = a.compose(&a.inverse());
        assert_abs_diff_eq!(i.rotation_angle(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(i.translation_norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rotation_angle_matches_axis_angle() {
        let t = RigidTransform::from_axis_angle(Vector3::z(), 0.25);
        assert_abs_diff_eq!(t.rotation_angle(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn about_point_fixes_center() {
        let c = Vector3::new(100.0, 50.0, 10.0);
        let t = RigidTransform::about_point(Vector3::z(), 0.1, c, Vector3::zeros());
        assert_abs_diff_eq!((t.apply(c) - c).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn json_wire_format() {
        let t = RigidTransform::from_translation(1.0, 2.0, 3.0);
        let j = serde_json::to_value(&t).unwrap();
        assert_eq!(j["rotation"].as_array().unwrap().len(), 9);
        assert_eq!(j["rotation"][0], 1.0);
        assert_eq!(j["rotation"][1], 0.0);
        assert_eq!(j["translation"][2], 3.0);
        let back: RigidTransform = serde_json::from_value(j).unwrap();
        assert_eq!(back, t);
    }
}
