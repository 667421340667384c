//! Self-supervised incremental structure-from-motion: recovers camera poses
//! and a shared focal length for an unposed view collection by iterating
//! between training a scene-coordinate regressor on the registered views and
//! re-registering all views against it with PnP + RANSAC.
//!
//! The crate is organized around the stages of that loop:
//!
//! - [`geometry`]: pinhole projection, rigid transforms, Gram–Schmidt
//!   orthonormalization with a hand-derived backward pass.
//! - [`pnp`]: P3P minimal solver, damped Gauss–Newton refinement, and the
//!   seeded RANSAC loop producing pose + inlier-count confidence.
//! - [`regressor`]: the scene-coordinate MLP with reverse-mode gradients,
//!   reprojection/Euclidean losses, and decoupled-weight-decay Adam.
//! - [`refiners`]: the pose-refinement MLP (additive offsets, re-orthonormalized)
//!   and the one-parameter focal refiner.
//! - [`mapping`]: one neural-mapping iteration — buffer sampling, the linear
//!   learning-rate schedule with adaptive early stopping, joint optimization.
//! - [`pipeline`]: seed selection, the relocalize/map loop, termination, and
//!   the final refit.
//! - [`synth`]: synthetic scenes with exact ground truth standing in for a
//!   camera plus a pretrained feature backbone.
//! - [`eval`]: robust similarity alignment (Kabsch/Umeyama inside RANSAC) and
//!   pose-accuracy reporting.

pub mod geometry;
pub mod pnp;
pub mod rng;
pub mod testutil;

pub use geometry::{
    backproject, compose, inverse, orthonormalize, pose_error, project, CameraIntrinsics,
    GeometryError, Pixel, RawPose, Real, RigidPose, SceneCoordinate,
};
pub use pnp::{count_inliers, ransac_pose, refine_pose, Correspondence, PoseEstimate, RansacConfig};
