//! Rigid transforms and the pinhole camera model.
//!
//! Poses are stored world→camera: a world point `X` maps to camera coordinates
//! `R·X + t`, with the camera looking down `+z`.

use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// World→camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
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
            rotation,
            translation,
        }
    }

    /// World→camera pose of a camera centred at `center` whose optical axis
    /// points at `target`, with image rows pointing along `-up` where possible.
    pub fn look_at(center: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Self {
        let z = (target - center).normalize();
        let mut x = z.cross(&up);
        if x.norm() < 1e-9 {
            x = z.cross(&Vector3::x());
        }
        let x = x.normalize();
        let y = z.cross(&x);
        // Rows of the world→camera rotation are the camera axes in world coordinates.
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let rotation = UnitQuaternion::from_matrix(&r);
        let translation = -(rotation * center);
        Self {
            rotation,
            translation,
        }
    }

    pub fn transform(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.inverse();
        Self {
            rotation,
            translation: -(rotation * self.translation),
        }
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * self.translation)
    }

    /// Right-multiplied local update: `R ← R·Exp(ω)`, `t ← t + R·ν` for the
    /// tangent vector `δ = (ω, ν)`.
    pub fn retract(&self, delta: &Vector6<f64>) -> Self {
        let omega = Vector3::new(delta[0], delta[1], delta[2]);
        let nu = Vector3::new(delta[3], delta[4], delta[5]);
        Self {
            rotation: self.rotation * UnitQuaternion::from_scaled_axis(omega),
            translation: self.translation + self.rotation * nu,
        }
    }

    /// Geodesic rotation angle between two poses, radians.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }
}

/// Skew-symmetric cross-product matrix.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Pinhole intrinsics. Radial coefficients are carried for files that have
/// them (BAL) but never used by the projection model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub radial: [f64; 2],
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            radial: [0.0; 2],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width
            && self.cy > 0.0
            && self.cy < self.height
            && self.width.is_finite()
            && self.height.is_finite()
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0 && pixel.x < self.width && pixel.y >= 0.0 && pixel.y < self.height
    }
}

/// Minimum camera-frame depth (meters) for a point to count as in front.
pub const DEPTH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Pixel(Vector2<f64>),
    Behind,
}

impl Projection {
    pub fn pixel(self) -> Option<Vector2<f64>> {
        match self {
            Projection::Pixel(p) => Some(p),
            Projection::Behind => None,
        }
    }
}

/// Pinhole projection of a world point.
pub fn project(pose: &Pose, intrinsics: &Intrinsics, point: &Vector3<f64>) -> Projection {
    let pc = pose.transform(point);
    if pc.z <= DEPTH_EPS {
        return Projection::Behind;
    }
    Projection::Pixel(Vector2::new(
        intrinsics.fx * pc.x / pc.z + intrinsics.cx,
        intrinsics.fy * pc.y / pc.z + intrinsics.cy,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100.0, 100.0);
        let p = project(&Pose::identity(), &k, &Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(p, Projection::Pixel(Vector2::new(50.0, 50.0)));
    }

    #[test]
    fn shallow_depth_is_behind() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100.0, 100.0);
        let p = project(&Pose::identity(), &k, &Vector3::new(0.1, 0.0, 1e-6));
        assert_eq!(p, Projection::Behind);
        let p = project(&Pose::identity(), &k, &Vector3::new(0.0, 0.0, -2.0));
        assert_eq!(p, Projection::Behind);
    }

    #[test]
    fn projection_matches_homogeneous_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = Intrinsics::new(420.0, 410.0, 320.0, 240.0, 640.0, 480.0);
        for _ in 0..500 {
            let axis = Vector3::new(rng.random::<f64>(), rng.random(), rng.random()) - Vector3::repeat(0.5);
            let pose = Pose::new(
                UnitQuaternion::from_scaled_axis(axis * 2.0),
                Vector3::new(rng.random(), rng.random(), rng.random()) * 2.0,
            );
            let x = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 3.0 + rng.random::<f64>());
            let world = pose.inverse().transform(&x);

            let mut t = Matrix4::identity();
            t.fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&pose.rotation.to_rotation_matrix().into_inner());
            t.fixed_view_mut::<3, 1>(0, 3).copy_from(&pose.translation);
            let mut kmat = nalgebra::Matrix3x4::zeros();
            kmat[(0, 0)] = k.fx;
            kmat[(1, 1)] = k.fy;
            kmat[(0, 2)] = k.cx;
            kmat[(1, 2)] = k.cy;
            kmat[(2, 2)] = 1.0;
            let h = kmat * t * Vector4::new(world.x, world.y, world.z, 1.0);
            let expected = Vector2::new(h.x / h.z, h.y / h.z);

            let got = project(&pose, &k, &world).pixel().unwrap();
            assert!((got - expected).amax() <= 1e-10 * expected.amax().max(1.0));
        }
    }

    #[test]
    fn look_at_centres_target() {
        let pose = Pose::look_at(Vector3::new(10.0, 0.0, 1.0), Vector3::zeros(), Vector3::z());
        let k = Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640.0, 480.0);
        let px = project(&pose, &k, &Vector3::zeros()).pixel().unwrap();
        assert!((px - Vector2::new(320.0, 240.0)).norm() < 1e-9);
        assert!((pose.center() - Vector3::new(10.0, 0.0, 1.0)).norm() < 1e-12);
    }
}
