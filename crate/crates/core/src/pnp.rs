//! Robust camera-pose estimation from 2D–3D correspondences: a P3P minimal
//! solver based on the classical distance quartic, iterative pose refinement,
//! and a deterministic seeded RANSAC loop whose confidence score is the
//! inlier count.

use crate::geometry::{
    project, CameraIntrinsics, Mat3, Pixel, Real, RigidPose, SceneCoordinate, Vec3, EPS_DEPTH,
};
use nalgebra::{Matrix4, Matrix6, Vector6};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// A 2D pixel observation paired with a predicted 3D scene coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub pixel: Pixel,
    pub scene: SceneCoordinate,
}

impl Correspondence {
    pub fn new(pixel: Pixel, scene: SceneCoordinate) -> Self {
        Self { pixel, scene }
    }
}

/// RANSAC + refinement parameters. Defaults are the reconstruction-time
/// configuration; [`RansacConfig::final_relocalization`] doubles the
/// hypothesis count for the stricter final registration pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RansacConfig {
    pub hypotheses: usize,
    pub max_retries: usize,
    pub inlier_threshold: Real,
    pub refine_rounds_max: usize,
    pub min_sample_inliers: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            hypotheses: 32,
            max_retries: 16,
            inlier_threshold: 10.0,
            refine_rounds_max: 8,
            min_sample_inliers: 4,
        }
    }
}

impl RansacConfig {
    /// Standalone / end-of-reconstruction configuration (64 hypotheses).
    pub fn final_relocalization() -> Self {
        Self { hypotheses: 64, ..Self::default() }
    }
}

/// A pose hypothesis with its inlier-count confidence score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub pose: RigidPose,
    pub inlier_count: usize,
    pub converged: bool,
}

impl PoseEstimate {
    pub fn failed() -> Self {
        Self { pose: RigidPose::identity(), inlier_count: 0, converged: false }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PnpError {
    #[error("degenerate minimal sample (collinear points or duplicate pixels)")]
    DegenerateSample,
    #[error("distance quartic has no valid real solution")]
    NoRealSolution,
    #[error("only {found} inliers at entry, need {needed}")]
    InsufficientInliers { found: usize, needed: usize },
}

/// Reprojection error in pixels, or `None` when the point falls behind the
/// camera.
pub fn reprojection_error(
    pose: &RigidPose,
    corr: &Correspondence,
    k: &CameraIntrinsics,
) -> Option<Real> {
    project(k, pose, &corr.scene).ok().map(|p| p.distance(&corr.pixel))
}

/// Number of correspondences with reprojection error strictly below
/// `threshold`. Points behind the camera are never inliers.
pub fn count_inliers(
    pose: &RigidPose,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    threshold: Real,
) -> usize {
    corrs
        .iter()
        .filter(|c| reprojection_error(pose, c, k).is_some_and(|e| e < threshold))
        .count()
}

fn inlier_indices(
    pose: &RigidPose,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    threshold: Real,
) -> Vec<usize> {
    corrs
        .iter()
        .enumerate()
        .filter(|(_, c)| reprojection_error(pose, c, k).is_some_and(|e| e < threshold))
        .map(|(i, _)| i)
        .collect()
}

/// (inlier count, mean inlier reprojection error); mean is +inf with no inliers.
fn score_pose(
    pose: &RigidPose,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    threshold: Real,
) -> (usize, Real) {
    let mut count = 0usize;
    let mut sum = 0.0;
    for c in corrs {
        if let Some(e) = reprojection_error(pose, c, k) {
            if e < threshold {
                count += 1;
                sum += e;
            }
        }
    }
    if count == 0 {
        (0, Real::INFINITY)
    } else {
        (count, sum / count as Real)
    }
}

// --- P3P minimal solver -----------------------------------------------------

/// Real roots of `c[0] + c[1]·v + ... + c[n]·vⁿ` via the companion matrix,
/// polished by Newton iterations on the original polynomial.
fn real_poly_roots(coeffs: &[Real]) -> Vec<Real> {
    let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let c: Vec<Real> = coeffs.iter().map(|x| x / scale).collect();
    let mut deg = c.len() - 1;
    while deg > 0 && c[deg].abs() < 1e-12 {
        deg -= 1;
    }
    let eval = |x: Real| -> (Real, Real) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for i in (0..=deg).rev() {
            dp = dp * x + p;
            p = p * x + c[i];
        }
        (p, dp)
    };
    let mut roots = Vec::new();
    match deg {
        0 => {}
        1 => roots.push(-c[0] / c[1]),
        2 => {
            let (a, b, cc) = (c[2], c[1], c[0]);
            let disc = b * b - 4.0 * a * cc;
            if disc >= 0.0 {
                let q = -0.5 * (b + b.signum() * disc.sqrt());
                if q.abs() > 0.0 {
                    roots.push(q / a);
                    roots.push(cc / q);
                } else {
                    roots.push(0.0);
                }
            }
        }
        _ => {
            // monic companion matrix, padded to 4x4 for the cubic case
            let lead = c[deg];
            let mut m = Matrix4::<Real>::zeros();
            for i in 0..deg {
                m[(0, i)] = -c[deg - 1 - i] / lead;
            }
            for i in 1..deg {
                m[(i, i - 1)] = 1.0;
            }
            if deg == 3 {
                // decouple the padding dimension with a harmless eigenvalue
                m[(3, 3)] = 1e30;
            }
            let eig = m.complex_eigenvalues();
            for i in 0..deg {
                let z = eig[i];
                if z.im.abs() < 1e-6 * (1.0 + z.re.abs()) && z.re.abs() < 1e20 {
                    roots.push(z.re);
                }
            }
        }
    }
    for r in roots.iter_mut() {
        for _ in 0..10 {
            let (p, dp) = eval(*r);
            if dp.abs() < 1e-300 {
                break;
            }
            let step = p / dp;
            *r -= step;
            if step.abs() < 1e-15 * (1.0 + r.abs()) {
                break;
            }
        }
    }
    roots.sort_by(Real::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * (1.0 + a.abs()));
    roots
}

/// Polynomial product, coefficients in ascending order.
fn poly_mul(a: &[Real], b: &[Real]) -> Vec<Real> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Newton polish of the three depths on the law-of-cosines system; keeps the
/// refined triple only while the residual improves.
#[allow(clippy::too_many_arguments)]
fn refine_depths(
    mut s: Vec3,
    a_sq: Real,
    b_sq: Real,
    c_sq: Real,
    cos_a: Real,
    cos_b: Real,
    cos_g: Real,
) -> Vec3 {
    let residual = |s: &Vec3| {
        Vec3::new(
            s.y * s.y + s.z * s.z - 2.0 * s.y * s.z * cos_a - a_sq,
            s.x * s.x + s.z * s.z - 2.0 * s.x * s.z * cos_b - b_sq,
            s.x * s.x + s.y * s.y - 2.0 * s.x * s.y * cos_g - c_sq,
        )
    };
    let mut r = residual(&s);
    for _ in 0..5 {
        if r.norm() < 1e-14 * (a_sq + b_sq + c_sq) {
            break;
        }
        let j = Mat3::new(
            0.0,
            2.0 * (s.y - s.z * cos_a),
            2.0 * (s.z - s.y * cos_a),
            2.0 * (s.x - s.z * cos_b),
            0.0,
            2.0 * (s.z - s.x * cos_b),
            2.0 * (s.x - s.y * cos_g),
            2.0 * (s.y - s.x * cos_g),
            0.0,
        );
        let Some(j_inv) = j.try_inverse() else { break };
        let s_new = s - j_inv * r;
        let r_new = residual(&s_new);
        if r_new.norm() >= r.norm() {
            break;
        }
        s = s_new;
        r = r_new;
    }
    s
}

/// Orthonormal triad from three non-collinear points.
fn triad(p1: Vec3, p2: Vec3, p3: Vec3) -> Option<Mat3> {
    let e1 = (p2 - p1).try_normalize(1e-12)?;
    let w = p3 - p1;
    let e2 = (w - e1 * w.dot(&e1)).try_normalize(1e-12)?;
    Some(Mat3::from_columns(&[e1, e2, e1.cross(&e2)]))
}

/// Solves the perspective-three-point problem: up to four camera-to-scene
/// poses consistent with three pixel/scene-point correspondences.
///
/// Uses the classical formulation: with ratios `u = s2/s1`, `v = s3/s1` of
/// the three point depths along their bearing rays, the law-of-cosines
/// system reduces to a quartic in `v`.
pub fn solve_p3p(
    corrs: &[Correspondence; 3],
    k: &CameraIntrinsics,
) -> Result<Vec<RigidPose>, PnpError> {
    let x1 = corrs[0].scene.vec();
    let x2 = corrs[1].scene.vec();
    let x3 = corrs[2].scene.vec();

    // triangle area of the scene points
    if (x2 - x1).cross(&(x3 - x1)).norm() / 2.0 <= 1e-9 {
        return Err(PnpError::DegenerateSample);
    }
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        if corrs[a].pixel.distance(&corrs[b].pixel) <= 1e-9 {
            return Err(PnpError::DegenerateSample);
        }
    }

    let bearing = |p: &Pixel| Vec3::new((p.u - k.cx) / k.f, (p.v - k.cy) / k.f, 1.0).normalize();
    let f1 = bearing(&corrs[0].pixel);
    let f2 = bearing(&corrs[1].pixel);
    let f3 = bearing(&corrs[2].pixel);

    let a_sq = (x2 - x3).norm_squared();
    let b_sq = (x1 - x3).norm_squared();
    let c_sq = (x1 - x2).norm_squared();
    let cos_a = f2.dot(&f3);
    let cos_b = f1.dot(&f3);
    let cos_g = f1.dot(&f2);

    let rab = a_sq / b_sq;
    let rcb = c_sq / b_sq;

    // w(v) = 1 + v² - 2v·cos_b appears in every ratio equation
    let w_poly = [1.0, -2.0 * cos_b, 1.0];
    // u·D(v) = N(v)  with  D = 2(cos_g - v·cos_a)
    let n_poly = [
        1.0 + (rab - rcb) * w_poly[0],
        (rab - rcb) * w_poly[1],
        -1.0 + (rab - rcb) * w_poly[2],
    ];
    let d_poly = [2.0 * cos_g, -2.0 * cos_a];
    // u² - 2u·cos_g + Q(v) = 0  with  Q = 1 - rcb·w
    let q_poly = [1.0 - rcb * w_poly[0], -rcb * w_poly[1], -rcb * w_poly[2]];

    // quartic: N² - 2·cos_g·N·D + D²·Q = 0
    let mut quartic = poly_mul(&n_poly, &n_poly);
    for (i, c) in poly_mul(&n_poly, &d_poly).iter().enumerate() {
        quartic[i] -= 2.0 * cos_g * c;
    }
    for (i, c) in poly_mul(&poly_mul(&d_poly, &d_poly), &q_poly).iter().enumerate() {
        quartic[i] += c;
    }

    let eval_poly = |c: &[Real], x: Real| c.iter().rev().fold(0.0, |acc, ci| acc * x + ci);

    let mut candidates: Vec<(Real, RigidPose)> = Vec::new();
    for v in real_poly_roots(&quartic) {
        if v <= 1e-12 {
            continue;
        }
        let w = eval_poly(&w_poly, v);
        if w <= 1e-12 {
            continue;
        }
        let s1 = (b_sq / w).sqrt();

        let denom = eval_poly(&d_poly, v);
        let mut us = Vec::new();
        if denom.abs() > 1e-9 {
            us.push(eval_poly(&n_poly, v) / denom);
        } else {
            // fall back to the quadratic in u and keep roots satisfying the
            // remaining ratio equation
            let q = eval_poly(&q_poly, v);
            let disc = cos_g * cos_g - q;
            if disc >= 0.0 {
                for u in [cos_g + disc.sqrt(), cos_g - disc.sqrt()] {
                    let lhs = u * u + v * v - 2.0 * u * v * cos_a;
                    let rhs = rab * w;
                    if (lhs - rhs).abs() < 1e-6 * (1.0 + rhs.abs()) {
                        us.push(u);
                    }
                }
            }
        }

        for u in us {
            if u <= 1e-12 {
                continue;
            }
            let depths =
                refine_depths(Vec3::new(s1, u * s1, v * s1), a_sq, b_sq, c_sq, cos_a, cos_b, cos_g);
            if depths.x <= 0.0 || depths.y <= 0.0 || depths.z <= 0.0 {
                continue;
            }
            let q1 = f1 * depths.x;
            let q2 = f2 * depths.y;
            let q3 = f3 * depths.z;
            let (Some(b_cam), Some(b_scene)) = (triad(q1, q2, q3), triad(x1, x2, x3)) else {
                continue;
            };
            let rot = b_scene * b_cam.transpose();
            let t = x1 - rot * q1;
            let pose = RigidPose::from_parts_unchecked(rot, t);
            let residual: Real = corrs
                .iter()
                .map(|c| {
                    reprojection_error(&pose, c, k).unwrap_or(Real::INFINITY)
                })
                .sum();
            candidates.push((residual, pose));
        }
    }

    if candidates.is_empty() {
        return Err(PnpError::NoRealSolution);
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    candidates.truncate(4);
    Ok(candidates.into_iter().map(|(_, p)| p).collect())
}

// --- iterative refinement ----------------------------------------------------

fn exp_so3(w: Vec3) -> Mat3 {
    let theta = w.norm();
    if theta < 1e-12 {
        let k = Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0);
        return Mat3::identity() + k;
    }
    crate::geometry::rotation_about_axis(&w, theta)
}

/// Total squared reprojection error over `subset`, +inf if any point falls
/// behind the camera.
fn subset_cost(
    pose: &RigidPose,
    corrs: &[Correspondence],
    subset: &[usize],
    k: &CameraIntrinsics,
) -> Real {
    let mut cost = 0.0;
    for &i in subset {
        match reprojection_error(pose, &corrs[i], k) {
            Some(e) => cost += e * e,
            None => return Real::INFINITY,
        }
    }
    cost
}

/// Minimizes total squared reprojection error over a fixed subset by damped
/// Gauss–Newton on a 6-parameter local pose increment.
fn gauss_newton_subset(
    pose: &RigidPose,
    corrs: &[Correspondence],
    subset: &[usize],
    k: &CameraIntrinsics,
) -> RigidPose {
    let mut current = *pose;
    let mut lambda = 1e-3;
    let mut cost = subset_cost(&current, corrs, subset, k);

    for _ in 0..100 {
        let mut a = Matrix6::<Real>::zeros();
        let mut g = Vector6::<Real>::zeros();
        for &i in subset {
            let c = &corrs[i];
            let x_cam = current.transform_inverse(c.scene.vec());
            if x_cam.z <= EPS_DEPTH {
                continue;
            }
            let inv_z = 1.0 / x_cam.z;
            let r_u = k.f * x_cam.x * inv_z + k.cx - c.pixel.u;
            let r_v = k.f * x_cam.y * inv_z + k.cy - c.pixel.v;
            // rows of d(pixel)/d(x_cam)
            let ju = Vec3::new(k.f * inv_z, 0.0, -k.f * x_cam.x * inv_z * inv_z);
            let jv = Vec3::new(0.0, k.f * inv_z, -k.f * x_cam.y * inv_z * inv_z);
            // local increment: x_cam' = exp(ω̂)·x_cam + τ
            let dxd_omega = Mat3::new(
                0.0, x_cam.z, -x_cam.y,
                -x_cam.z, 0.0, x_cam.x,
                x_cam.y, -x_cam.x, 0.0,
            );
            let mut row_u = Vector6::zeros();
            let mut row_v = Vector6::zeros();
            let ju_omega = dxd_omega.transpose() * ju;
            let jv_omega = dxd_omega.transpose() * jv;
            for d in 0..3 {
                row_u[d] = ju_omega[d];
                row_u[3 + d] = ju[d];
                row_v[d] = jv_omega[d];
                row_v[3 + d] = jv[d];
            }
            a += row_u * row_u.transpose() + row_v * row_v.transpose();
            g += row_u * r_u + row_v * r_v;
        }

        let mut stepped = false;
        while lambda < 1e12 {
            let damped = a + Matrix6::identity() * lambda;
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-g));
            let omega = Vec3::new(delta[0], delta[1], delta[2]);
            let tau = Vec3::new(delta[3], delta[4], delta[5]);
            let r_new = current.rotation() * exp_so3(-omega);
            let t_new = current.translation() - r_new * tau;
            let trial = RigidPose::from_parts_unchecked(r_new, t_new);
            let trial_cost = subset_cost(&trial, corrs, subset, k);
            if trial_cost < cost {
                current = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                stepped = delta.norm() >= 1e-10;
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            break;
        }
    }
    current
}

/// Refines a pose by alternating between collecting inliers at the configured
/// threshold and minimizing squared reprojection error over them, until the
/// inlier set stops growing. Never returns fewer inliers than the entry pose.
pub fn refine_pose(
    pose: &RigidPose,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> Result<PoseEstimate, PnpError> {
    let entry_set = inlier_indices(pose, corrs, k, cfg.inlier_threshold);
    if entry_set.len() < cfg.min_sample_inliers {
        return Err(PnpError::InsufficientInliers {
            found: entry_set.len(),
            needed: cfg.min_sample_inliers,
        });
    }

    let entry_count = entry_set.len();
    let mut current = *pose;
    let mut active = entry_set;
    for _ in 0..cfg.refine_rounds_max {
        current = gauss_newton_subset(&current, corrs, &active, k);
        let grown = inlier_indices(&current, corrs, k, cfg.inlier_threshold);
        let stalled = grown.len() <= active.len();
        if grown.len() >= active.len() {
            active = grown;
        }
        if stalled {
            break;
        }
    }

    let final_count = count_inliers(&current, corrs, k, cfg.inlier_threshold);
    if final_count < entry_count {
        // refinement degraded the consensus; keep the entry pose
        return Ok(PoseEstimate { pose: *pose, inlier_count: entry_count, converged: true });
    }
    Ok(PoseEstimate { pose: current, inlier_count: final_count, converged: true })
}

// --- RANSAC -------------------------------------------------------------------

fn sample_distinct<R: Rng>(rng: &mut R, n: usize, count: usize) -> Vec<usize> {
    let mut picked = Vec::with_capacity(count);
    while picked.len() < count {
        let i = rng.random_range(0..n);
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    picked
}

/// Estimates a pose by sampling up to `cfg.hypotheses` P3P hypotheses from
/// random 3-subsets (each disambiguated by a fourth random correspondence),
/// scoring them by inlier count, and refining the best. Deterministic given
/// `rng_seed`; failure is signaled by `converged == false`, never a panic.
pub fn ransac_pose(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
    rng_seed: u64,
) -> PoseEstimate {
    if corrs.len() < 4 {
        return PoseEstimate::failed();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best: Option<(RigidPose, usize, Real)> = None;

    for _slot in 0..cfg.hypotheses {
        for _attempt in 0..=cfg.max_retries {
            let idx = sample_distinct(&mut rng, corrs.len(), 4);
            let sample = [corrs[idx[0]], corrs[idx[1]], corrs[idx[2]]];
            let Ok(cands) = solve_p3p(&sample, k) else { continue };

            // disambiguate with the fourth correspondence
            let probe = &corrs[idx[3]];
            let hyp = cands
                .into_iter()
                .map(|p| {
                    let e = reprojection_error(&p, probe, k).unwrap_or(Real::INFINITY);
                    (e, p)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, p)| p);
            let Some(hyp) = hyp else { continue };

            let (count, mean_err) = score_pose(&hyp, corrs, k, cfg.inlier_threshold);
            let better = match &best {
                None => true,
                Some((_, bc, be)) => count > *bc || (count == *bc && mean_err < *be),
            };
            if better {
                best = Some((hyp, count, mean_err));
            }
            break;
        }
    }

    let Some((pose, count, _)) = best else {
        return PoseEstimate::failed();
    };
    if count < cfg.min_sample_inliers {
        return PoseEstimate { pose, inlier_count: count, converged: false };
    }
    match refine_pose(&pose, corrs, k, cfg) {
        Ok(est) => est,
        Err(_) => PoseEstimate { pose, inlier_count: count, converged: false },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_about_axis;
    use crate::testutil::{perturb_pose, random_pose, random_unit_vec};
    use rand::{Rng, SeedableRng};

    fn k_test() -> CameraIntrinsics {
        CameraIntrinsics::centered(600.0, 640.0, 480.0).unwrap()
    }

    /// Forward-renders `n` correspondences visible from `pose`.
    fn render_corrs<R: Rng>(
        rng: &mut R,
        pose: &RigidPose,
        k: &CameraIntrinsics,
        n: usize,
    ) -> Vec<Correspondence> {
        (0..n)
            .map(|_| {
                let x_cam = Vec3::new(
                    rng.random_range(-1.2..1.2),
                    rng.random_range(-0.9..0.9),
                    rng.random_range(1.0..6.0),
                );
                let y = SceneCoordinate::from_vec(pose.transform(x_cam));
                let pixel = project(k, pose, &y).unwrap();
                Correspondence::new(pixel, y)
            })
            .collect()
    }

    fn replace_with_outliers<R: Rng>(
        rng: &mut R,
        corrs: &mut [Correspondence],
        fraction: f64,
    ) -> usize {
        let n_out = (corrs.len() as f64 * fraction).round() as usize;
        for c in corrs.iter_mut().take(n_out) {
            // displaced scene point forces a gross (>= 50 px) reprojection error
            c.scene = SceneCoordinate::from_vec(c.scene.vec() + random_unit_vec(rng) * 5.0);
            c.pixel = Pixel::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        }
        n_out
    }

    #[test]
    fn p3p_recovers_known_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let k = k_test();
        let mut hits = 0;
        for _ in 0..200 {
            let pose = random_pose(&mut rng, 2.0);
            let corrs = render_corrs(&mut rng, &pose, &k, 3);
            let sample = [corrs[0], corrs[1], corrs[2]];
            let Ok(cands) = solve_p3p(&sample, &k) else { continue };
            assert!(cands.len() <= 4);
            let found = cands.iter().any(|cand| {
                sample
                    .iter()
                    .all(|c| reprojection_error(cand, c, &k).is_some_and(|e| e < 1e-6))
                    && pose_close(cand, &pose)
            });
            if found {
                hits += 1;
            }
            // every candidate must interpolate the three sample points
            for cand in &cands {
                for c in &sample {
                    let e = reprojection_error(cand, c, &k).unwrap_or(f64::INFINITY);
                    assert!(e < 1e-6, "candidate residual {e}");
                }
            }
        }
        assert!(hits >= 195, "recovered only {hits}/200 poses");
    }

    fn pose_close(a: &RigidPose, b: &RigidPose) -> bool {
        let (rot, trans) = crate::geometry::pose_error(a, b);
        rot < 1e-4 && trans < 1e-5
    }

    #[test]
    fn p3p_rejects_collinear_points() {
        let k = k_test();
        let pose = RigidPose::identity();
        let ys = [
            SceneCoordinate::new(0.0, 0.0, 2.0),
            SceneCoordinate::new(0.2, 0.0, 2.0),
            SceneCoordinate::new(0.4, 0.0, 2.0),
        ];
        let corrs: Vec<Correspondence> = ys
            .iter()
            .map(|y| Correspondence::new(project(&k, &pose, y).unwrap(), *y))
            .collect();
        let sample = [corrs[0], corrs[1], corrs[2]];
        assert_eq!(solve_p3p(&sample, &k), Err(PnpError::DegenerateSample));
    }

    #[test]
    fn p3p_rejects_duplicate_pixels() {
        let k = k_test();
        let y = SceneCoordinate::new(0.0, 0.0, 2.0);
        let c = Correspondence::new(Pixel::new(320.0, 240.0), y);
        let c2 = Correspondence::new(Pixel::new(320.0, 240.0), SceneCoordinate::new(0.5, 0.3, 2.0));
        let c3 = Correspondence::new(Pixel::new(100.0, 240.0), SceneCoordinate::new(-0.5, 0.3, 2.0));
        assert_eq!(solve_p3p(&[c, c2, c3], &k), Err(PnpError::DegenerateSample));
    }

    #[test]
    fn count_inliers_all_clean() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let k = k_test();
        let pose = random_pose(&mut rng, 2.0);
        let corrs = render_corrs(&mut rng, &pose, &k, 100);
        assert_eq!(count_inliers(&pose, &corrs, &k, 10.0), 100);
    }

    #[test]
    fn count_inliers_ignores_gross_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let k = k_test();
        let pose = random_pose(&mut rng, 2.0);
        let mut corrs = render_corrs(&mut rng, &pose, &k, 100);
        let n_out = replace_with_outliers(&mut rng, &mut corrs, 0.3);
        // gross outliers sit >= 50 px away with overwhelming probability
        let clean = corrs.len() - n_out;
        assert_eq!(count_inliers(&pose, &corrs, &k, 10.0), clean);
    }

    #[test]
    fn count_inliers_vanishing_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let k = k_test();
        let pose = random_pose(&mut rng, 2.0);
        let mut corrs = render_corrs(&mut rng, &pose, &k, 50);
        for c in corrs.iter_mut() {
            c.pixel.u += rng.random_range(0.5..1.0);
        }
        assert_eq!(count_inliers(&pose, &corrs, &k, 1e-12), 0);
    }

    #[test]
    fn refine_recovers_from_perturbed_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let k = k_test();
        let cfg = RansacConfig { inlier_threshold: 50.0, ..Default::default() };
        for _ in 0..20 {
            let pose = random_pose(&mut rng, 2.0);
            let corrs = render_corrs(&mut rng, &pose, &k, 60);
            let start = perturb_pose(&mut rng, &pose, 2.0, 0.05);
            let est = refine_pose(&start, &corrs, &k, &cfg).unwrap();
            let (rot, trans) = crate::geometry::pose_error(&est.pose, &pose);
            assert!(rot < 1e-4, "rotation error {rot}");
            assert!(trans < 1e-6, "translation error {trans}");
            assert_eq!(est.inlier_count, 60);
        }
    }

    #[test]
    fn refine_at_optimum_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let k = k_test();
        let cfg = RansacConfig::default();
        let pose = random_pose(&mut rng, 2.0);
        let corrs = render_corrs(&mut rng, &pose, &k, 40);
        let est = refine_pose(&pose, &corrs, &k, &cfg).unwrap();
        let (rot, trans) = crate::geometry::pose_error(&est.pose, &pose);
        assert!(rot.to_radians() < 1e-9 && trans < 1e-9);
    }

    #[test]
    fn refine_with_gross_outliers_keeps_clean_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let k = k_test();
        let cfg = RansacConfig::default();
        for _ in 0..10 {
            let pose = random_pose(&mut rng, 2.0);
            let mut corrs = render_corrs(&mut rng, &pose, &k, 100);
            let n_out = replace_with_outliers(&mut rng, &mut corrs, 0.4);
            let clean = corrs.len() - n_out;
            let start = perturb_pose(&mut rng, &pose, 0.5, 0.01);
            let est = refine_pose(&start, &corrs, &k, &cfg).unwrap();
            assert_eq!(est.inlier_count, clean);
        }
    }

    #[test]
    fn refine_errors_without_inliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let k = k_test();
        let pose = random_pose(&mut rng, 2.0);
        let far = perturb_pose(&mut rng, &pose, 60.0, 3.0);
        let corrs = render_corrs(&mut rng, &pose, &k, 30);
        assert!(matches!(
            refine_pose(&far, &corrs, &k, &RansacConfig::default()),
            Err(PnpError::InsufficientInliers { .. })
        ));
    }

    #[test]
    fn refine_never_loses_inliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let k = k_test();
        let cfg = RansacConfig::default();
        for _ in 0..30 {
            let pose = random_pose(&mut rng, 2.0);
            let mut corrs = render_corrs(&mut rng, &pose, &k, 80);
            for c in corrs.iter_mut() {
                c.pixel.u += rng.random_range(-2.0..2.0);
                c.pixel.v += rng.random_range(-2.0..2.0);
            }
            let start = perturb_pose(&mut rng, &pose, 1.0, 0.02);
            let before = count_inliers(&start, &corrs, &k, cfg.inlier_threshold);
            if let Ok(est) = refine_pose(&start, &corrs, &k, &cfg) {
                assert!(est.inlier_count >= before);
            }
        }
    }

    #[test]
    fn ransac_recovers_noiseless_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let k = k_test();
        let cfg = RansacConfig::default();
        let pose = random_pose(&mut rng, 2.0);
        let corrs = render_corrs(&mut rng, &pose, &k, 200);
        let est = ransac_pose(&corrs, &k, &cfg, 17);
        assert!(est.converged);
        assert_eq!(est.inlier_count, 200);
        let (rot, trans) = crate::geometry::pose_error(&est.pose, &pose);
        assert!(rot < 1e-4 && trans < 1e-6, "rot {rot} trans {trans}");
    }

    #[test]
    fn ransac_fails_on_pure_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let k = k_test();
        let corrs: Vec<Correspondence> = (0..60)
            .map(|_| {
                Correspondence::new(
                    Pixel::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
                    SceneCoordinate::new(
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    ),
                )
            })
            .collect();
        let est = ransac_pose(&corrs, &k, &RansacConfig::default(), 3);
        assert!(!est.converged || est.inlier_count < 4);
    }

    #[test]
    fn ransac_with_half_outliers_is_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let k = k_test();
        let pose = random_pose(&mut rng, 2.0);
        let mut corrs = render_corrs(&mut rng, &pose, &k, 200);
        let n_out = replace_with_outliers(&mut rng, &mut corrs, 0.5);
        let clean = corrs.len() - n_out;
        let a = ransac_pose(&corrs, &k, &RansacConfig::default(), 99);
        let b = ransac_pose(&corrs, &k, &RansacConfig::default(), 99);
        assert_eq!(a.inlier_count, clean);
        assert!(a.converged);
        // bitwise repeatability
        assert_eq!(a.pose.flatten(), b.pose.flatten());
        assert_eq!(a.inlier_count, b.inlier_count);
    }

    #[test]
    fn ransac_score_matches_independent_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let k = k_test();
        let cfg = RansacConfig::default();
        for trial in 0..10 {
            let pose = random_pose(&mut rng, 2.0);
            let mut corrs = render_corrs(&mut rng, &pose, &k, 120);
            replace_with_outliers(&mut rng, &mut corrs, 0.3);
            let est = ransac_pose(&corrs, &k, &cfg, trial);
            assert_eq!(
                est.inlier_count,
                count_inliers(&est.pose, &corrs, &k, cfg.inlier_threshold)
            );
        }
    }

    #[test]
    fn ransac_returns_failed_below_minimum_input() {
        let k = k_test();
        let corrs = vec![
            Correspondence::new(Pixel::new(1.0, 2.0), SceneCoordinate::new(0.0, 0.0, 2.0));
            3
        ];
        let est = ransac_pose(&corrs, &k, &RansacConfig::default(), 0);
        assert!(!est.converged);
        assert_eq!(est.inlier_count, 0);
    }

    #[test]
    fn ransac_small_rotation_disambiguation() {
        // tight cluster of hypotheses still picks a consistent one
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let k = k_test();
        let base = RigidPose::identity();
        let r = rotation_about_axis(&Vec3::y(), 0.3);
        let pose = RigidPose::new(r, Vec3::new(0.4, -0.1, 0.2)).unwrap();
        let _ = base;
        let corrs = render_corrs(&mut rng, &pose, &k, 50);
        let est = ransac_pose(&corrs, &k, &RansacConfig::default(), 5);
        assert!(est.converged);
        assert_eq!(est.inlier_count, 50);
    }
}
