//! Pinhole-camera and rigid-transform math shared by every other module.
//!
//! Poses map camera coordinates to scene coordinates
//! (`x_scene = R * x_cam + t`); projection inverts the pose internally.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Scalar type used throughout the library.
pub type Real = f64;
/// 3-vector of [`Real`].
pub type Vec3 = Vector3<Real>;
/// 3×3 matrix of [`Real`].
pub type Mat3 = Matrix3<Real>;

/// Camera-frame depth below which a point counts as behind the camera.
pub const EPS_DEPTH: Real = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z_cam = {z_cam})")]
    BehindCamera { z_cam: Real },
    #[error("depth must be positive (got {depth})")]
    NonPositiveDepth { depth: Real },
    #[error("rotation block is degenerate: {reason}")]
    DegenerateRotation { reason: &'static str },
    #[error("rotation fails orthonormality: {residual}")]
    NotOrthonormal { residual: Real },
    #[error("intrinsics invalid: {reason}")]
    InvalidIntrinsics { reason: &'static str },
}

/// 2D pixel position. Reprojections may fall outside the image bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: Real,
    pub v: Real,
}

impl Pixel {
    pub fn new(u: Real, v: Real) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &Pixel) -> Real {
        ((self.u - other.u).powi(2) + (self.v - other.v).powi(2)).sqrt()
    }
}

/// A 3D position in the scene frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneCoordinate {
    pub x: Real,
    pub y: Real,
    pub z: Real,
}

impl SceneCoordinate {
    pub fn new(x: Real, y: Real, z: Real) -> Self {
        Self { x, y, z }
    }

    pub fn from_vec(v: Vec3) -> Self {
        Self { x: v.x, y: v.y, z: v.z }
    }

    pub fn vec(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }
}

/// Pinhole calibration with a single focal length and centered principal
/// point; square, unskewed pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub f: Real,
    pub cx: Real,
    pub cy: Real,
    pub width: Real,
    pub height: Real,
}

impl CameraIntrinsics {
    /// Intrinsics with the principal point at the image center.
    pub fn centered(f: Real, width: Real, height: Real) -> Result<Self, GeometryError> {
        if !(f > 0.0) {
            return Err(GeometryError::InvalidIntrinsics { reason: "focal length must be positive" });
        }
        if !(width > 0.0 && height > 0.0) {
            return Err(GeometryError::InvalidIntrinsics { reason: "image dimensions must be positive" });
        }
        Ok(Self { f, cx: width / 2.0, cy: height / 2.0, width, height })
    }

    /// Same calibration with a different focal length.
    pub fn with_focal(&self, f: Real) -> Self {
        Self { f, ..*self }
    }
}

/// Rigid body transform mapping camera coordinates to scene coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    r: Mat3,
    t: Vec3,
}

impl RigidPose {
    /// Validates orthonormality (`RᵀR = I`, `det R = +1`) to 1e-9.
    pub fn new(r: Mat3, t: Vec3) -> Result<Self, GeometryError> {
        let residual = (r.transpose() * r - Mat3::identity()).norm();
        let det = r.determinant();
        if residual > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(GeometryError::NotOrthonormal { residual: residual.max((det - 1.0).abs()) });
        }
        Ok(Self { r, t })
    }

    /// Constructs without validation; the caller guarantees orthonormality.
    pub(crate) fn from_parts_unchecked(r: Mat3, t: Vec3) -> Self {
        Self { r, t }
    }

    pub fn identity() -> Self {
        Self { r: Mat3::identity(), t: Vec3::zeros() }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.r
    }

    pub fn translation(&self) -> &Vec3 {
        &self.t
    }

    /// Camera center in scene coordinates (equals the translation under the
    /// camera-to-scene convention).
    pub fn camera_center(&self) -> Vec3 {
        self.t
    }

    /// Applies the transform: camera frame -> scene frame.
    pub fn transform(&self, x_cam: Vec3) -> Vec3 {
        self.r * x_cam + self.t
    }

    /// Scene frame -> camera frame.
    pub fn transform_inverse(&self, x_scene: Vec3) -> Vec3 {
        self.r.transpose() * (x_scene - self.t)
    }

    /// The 12 values of the 3×4 matrix `[R | t]` in row-major order.
    pub fn flatten(&self) -> [Real; 12] {
        let (r, t) = (&self.r, &self.t);
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }
}

/// 12 unconstrained scalars laid out as a 3×4 matrix, row-major.
/// The pre-orthonormalization pose representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPose {
    pub m: [Real; 12],
}

impl RawPose {
    pub fn new(m: [Real; 12]) -> Self {
        Self { m }
    }

    pub fn from_pose(pose: &RigidPose) -> Self {
        Self { m: pose.flatten() }
    }

    fn column(&self, c: usize) -> Vec3 {
        Vec3::new(self.m[c], self.m[4 + c], self.m[8 + c])
    }
}

/// Projects a scene point into the image of a camera at pose `t_pose`.
pub fn project(
    k: &CameraIntrinsics,
    t_pose: &RigidPose,
    y: &SceneCoordinate,
) -> Result<Pixel, GeometryError> {
    let x_cam = t_pose.transform_inverse(y.vec());
    if x_cam.z <= EPS_DEPTH {
        return Err(GeometryError::BehindCamera { z_cam: x_cam.z });
    }
    Ok(Pixel::new(
        k.f * x_cam.x / x_cam.z + k.cx,
        k.f * x_cam.y / x_cam.z + k.cy,
    ))
}

/// Back-projects a pixel at depth `d` into the camera frame:
/// `d · K⁻¹ · (u, v, 1)ᵀ`.
pub fn backproject(
    k: &CameraIntrinsics,
    p: &Pixel,
    d: Real,
) -> Result<SceneCoordinate, GeometryError> {
    if d <= 0.0 {
        return Err(GeometryError::NonPositiveDepth { depth: d });
    }
    Ok(SceneCoordinate::new(
        (p.u - k.cx) * d / k.f,
        (p.v - k.cy) * d / k.f,
        d,
    ))
}

/// Intermediates of [`orthonormalize_with_cache`] needed for its backward pass.
#[derive(Debug, Clone)]
pub struct GramSchmidtCache {
    c1: Vec3,
    c2: Vec3,
    r1: Vec3,
    r2: Vec3,
    r3: Vec3,
    n1: Real,
    n2: Real,
}

/// Gram–Schmidt over the first two columns of the rotation block; the third
/// rotation column comes from the cross product and the translation is copied
/// verbatim from column 4. The third raw column never influences the result.
pub fn orthonormalize(raw: &RawPose) -> Result<RigidPose, GeometryError> {
    orthonormalize_with_cache(raw).map(|(pose, _)| pose)
}

/// As [`orthonormalize`], also returning the cache for [`gram_schmidt_backward`].
pub fn orthonormalize_with_cache(
    raw: &RawPose,
) -> Result<(RigidPose, GramSchmidtCache), GeometryError> {
    let c1 = raw.column(0);
    let c2 = raw.column(1);
    let t = raw.column(3);

    let n1 = c1.norm();
    if n1 < 1e-12 {
        return Err(GeometryError::DegenerateRotation { reason: "first column is zero" });
    }
    let r1 = c1 / n1;

    let u2 = c2 - r1 * c2.dot(&r1);
    let n2 = u2.norm();
    // angle(c1, c2) > 1e-8 rad requires |u2| > sin(1e-8)·|c2|
    if n2 < 1e-12 || n2 < 1e-8 * c2.norm() {
        return Err(GeometryError::DegenerateRotation { reason: "first two columns are parallel" });
    }
    let r2 = u2 / n2;
    let r3 = r1.cross(&r2);

    let r = Mat3::from_columns(&[r1, r2, r3]);
    Ok((
        RigidPose::from_parts_unchecked(r, t),
        GramSchmidtCache { c1, c2, r1, r2, r3, n1, n2 },
    ))
}

/// Backpropagates gradients through Gram–Schmidt: given gradients w.r.t. the
/// output rotation and translation, returns the gradient w.r.t. the 12 raw
/// values (row-major 3×4). The ignored third column receives zero gradient.
pub fn gram_schmidt_backward(cache: &GramSchmidtCache, g_rot: &Mat3, g_t: &Vec3) -> [Real; 12] {
    let GramSchmidtCache { c1: _, c2, r1, r2, r3: _, n1, n2 } = cache;

    let g_r3 = g_rot.column(2).into_owned();
    let g_r2 = g_rot.column(1).into_owned() + g_r3.cross(r1);
    let mut g_r1 = g_rot.column(0).into_owned() + r2.cross(&g_r3);

    // r2 = u2 / |u2|
    let g_u2 = (g_r2 - r2 * r2.dot(&g_r2)) / *n2;
    // u2 = c2 - (c2·r1) r1
    let g_c2 = g_u2 - r1 * r1.dot(&g_u2);
    g_r1 += -c2 * g_u2.dot(r1) - g_u2 * c2.dot(r1);
    // r1 = c1 / |c1|
    let g_c1 = (g_r1 - r1 * r1.dot(&g_r1)) / *n1;

    [
        g_c1.x, g_c2.x, 0.0, g_t.x,
        g_c1.y, g_c2.y, 0.0, g_t.y,
        g_c1.z, g_c2.z, 0.0, g_t.z,
    ]
}

/// `compose(a, b)·x = a·(b·x)`.
pub fn compose(a: &RigidPose, b: &RigidPose) -> RigidPose {
    RigidPose::from_parts_unchecked(a.r * b.r, a.r * b.t + a.t)
}

/// `inverse(t)·(t·x) = x`.
pub fn inverse(t_pose: &RigidPose) -> RigidPose {
    let r_inv = t_pose.r.transpose();
    RigidPose::from_parts_unchecked(r_inv, -(r_inv * t_pose.t))
}

/// Rotation error in degrees (clamped to [0, 180]) and translation error in
/// scene units.
pub fn pose_error(est: &RigidPose, gt: &RigidPose) -> (Real, Real) {
    let cos_angle = ((est.r.transpose() * gt.r).trace() - 1.0) / 2.0;
    let rot_deg = cos_angle.clamp(-1.0, 1.0).acos().to_degrees();
    let trans = (est.t - gt.t).norm();
    (rot_deg, trans)
}

/// Rotation about `axis` by `angle_rad` via the Rodrigues formula.
pub fn rotation_about_axis(axis: &Vec3, angle_rad: Real) -> Mat3 {
    let a = axis.normalize();
    let k = Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0);
    Mat3::identity() + k * angle_rad.sin() + k * k * (1.0 - angle_rad.cos())
}
