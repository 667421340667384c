//! Helpers shared by unit tests across modules. Not part of the public API
//! surface proper, but exported so integration tests can reuse them.

use crate::geometry::{rotation_about_axis, Real, RigidPose, Vec3};
use rand::Rng;

/// Uniform random unit vector.
pub fn random_unit_vec<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random rigid pose with translation magnitude up to `t_scale`.
pub fn random_pose<R: Rng>(rng: &mut R, t_scale: Real) -> RigidPose {
    let axis = random_unit_vec(rng);
    let angle: Real = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let r = rotation_about_axis(&axis, angle);
    let t = random_unit_vec(rng) * rng.random_range(0.0..t_scale);
    RigidPose::new(r, t).expect("rodrigues rotation is orthonormal")
}

/// Perturbs a pose by `rot_deg` degrees about a random axis and a random
/// translation offset of magnitude `trans`.
pub fn perturb_pose<R: Rng>(rng: &mut R, pose: &RigidPose, rot_deg: Real, trans: Real) -> RigidPose {
    let axis = random_unit_vec(rng);
    let delta = rotation_about_axis(&axis, rot_deg.to_radians());
    let t = *pose.translation() + random_unit_vec(rng) * trans;
    RigidPose::new(pose.rotation() * delta, t).expect("perturbed rotation stays orthonormal")
}
