//! DSM-ICP: pairwise registration of two height rasters.
//!
//! Alternates the grid-bounded correspondence search with a closed-form
//! SVD rigid estimation until the trimmed RMS residual stops improving,
//! producing the relative pose of the moving raster in the reference
//! frame together with its registration error.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::uv_to_world;
use crate::nn::{initial_bound, nn_search};
use crate::raster::{DsmGrid, PixelRect};
use crate::se3::RigidTransform;

/// Tuning knobs for one pairwise registration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    /// Number of query points sampled from the moving raster.
    pub n_queries: usize,
    pub max_iterations: usize,
    /// Stop when the RMS residual change falls below this fraction.
    pub rel_tol: f64,
    /// Stop when the pose increment (rotation angle + translation norm)
    /// falls below this, meters/radians combined.
    pub abs_tol: f64,
    /// Fraction of the worst residuals dropped each iteration.
    pub trim_fraction: f64,
    /// Correspondences farther than this are rejected, meters.
    pub correspondence_reject: f64,
    /// Seed for query sampling.
    pub seed: u64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            n_queries: 2065,
            max_iterations: 50,
            rel_tol: 1e-6,
            abs_tol: 1e-4,
            trim_fraction: 0.1,
            correspondence_reject: 10.0,
            seed: 0,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_queries == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "n_queries and max_iterations must be positive".into(),
            ));
        }
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) || !(self.correspondence_reject > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.trim_fraction) {
            return Err(Error::InvalidInput("trim_fraction must be in [0,1)".into()));
        }
        Ok(())
    }
}

/// Per-iteration trace of one ICP run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IcpIteration {
    /// Trimmed RMS residual after the estimation step, meters.
    pub rms: f64,
    pub n_correspondences: usize,
    /// Mean candidate pixels scanned per NN search this iteration.
    pub mean_candidates_scanned: f64,
}

/// Outcome of one pairwise registration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistrationReport {
    /// Maps moving-raster points into the reference frame.
    pub transform: RigidTransform,
    /// RMS residual over surviving correspondences at the final iteration.
    pub err: f64,
    pub iterations: usize,
    pub n_correspondences: usize,
    pub converged: bool,
    /// Mean candidate pixels scanned per NN search at the final iteration.
    pub mean_candidates_scanned: f64,
    /// Per-iteration trace, oldest first.
    pub history: Vec<IcpIteration>,
}

/// Deterministic stratified sample of valid pixels from the moving raster.
///
/// The raster is partitioned into ceil(sqrt(n)) x ceil(sqrt(n)) cells with
/// one uniformly random valid pixel per non-empty cell, topped up (or
/// thinned) uniformly at random to exactly `n`. Returns every valid pixel
/// when the raster has no more than `n` of them. Streams the raster in
/// row bands; memory stays O(cells + n).
pub fn sample_queries(moving: &DsmGrid, n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let c = (n as f64).sqrt().ceil() as usize;
    let cell_w = moving.width().div_ceil(c);
    let cell_h = moving.height().div_ceil(c);

    // Pass 1: per-cell reservoirs of size one, plus the total valid count.
    let mut picks: Vec<Option<(usize, usize)>> = vec![None; c * c];
    let mut counts: Vec<u64> = vec![0; c * c];
    let mut valid_total = 0usize;
    for_each_valid(moving, |u, v| {
        valid_total += 1;
        let cell = (v / cell_h) * c + u / cell_w;
        counts[cell] += 1;
        if rng.random_range(0..counts[cell]) == 0 {
            picks[cell] = Some((u, v));
        }
    })?;
    if valid_total == 0 {
        return Err(Error::NoValidPixels);
    }
    if valid_total <= n {
        let mut all = Vec::with_capacity(valid_total);
        for_each_valid(moving, |u, v| all.push((u, v)))?;
        return Ok(all);
    }

    let mut selected: Vec<(usize, usize)> = picks.into_iter().flatten().collect();
    if selected.len() > n {
        selected.shuffle(&mut rng);
        selected.truncate(n);
        selected.sort_unstable_by_key(|&(u, v)| (v, u));
        return Ok(selected);
    }

    // Pass 2: uniform reservoir over valid pixels not already selected.
    let k = n - selected.len();
    if k > 0 {
        let chosen: std::collections::HashSet<(usize, usize)> = selected.iter().copied().collect();
        let mut reservoir: Vec<(usize, usize)> = Vec::with_capacity(k);
        let mut seen = 0u64;
        for_each_valid(moving, |u, v| {
            if chosen.contains(&(u, v)) {
                return;
            }
            if reservoir.len() < k {
                reservoir.push((u, v));
            } else {
                seen += 1;
                let j = rng.random_range(0..reservoir.len() as u64 + seen);
                if (j as usize) < k {
                    reservoir[j as usize] = (u, v);
                }
            }
        })?;
        selected.extend(reservoir);
    }
    selected.sort_unstable_by_key(|&(u, v)| (v, u));
    Ok(selected)
}

fn for_each_valid(grid: &DsmGrid, mut f: impl FnMut(usize, usize)) -> Result<()> {
    let band = (1 << 20) / grid.width().max(1) + 1;
    let mut v0 = 0usize;
    while v0 < grid.height() {
        let v1 = (v0 + band).min(grid.height()) - 1;
        let win = grid.read_window(PixelRect::new(
            0,
            grid.width() as i64 - 1,
            v0 as i64,
            v1 as i64,
        ))?;
        for (u, v, _) in win.iter_valid() {
            f(u, v);
        }
        v0 = v1 + 1;
    }
    Ok(())
}

/// Closed-form weighted least-squares rigid fit: returns the (R, t)
/// minimizing sum w_i |R p_i + t - q_i|^2 via centroid subtraction,
/// cross-covariance SVD, and the determinant-sign correction.
pub fn estimate_rigid(
    correspondences: &[(Vector3<f64>, Vector3<f64>)],
    weights: Option<&[f64]>,
) -> Result<RigidTransform> {
    let n = correspondences.len();
    if n < 3 {
        return Err(Error::DegenerateGeometry);
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::InvalidInput(format!(
                "weights length {} != correspondences {}",
                w.len(),
                n
            )));
        }
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);

    let mut w_sum = 0.0;
    let mut p_bar = Vector3::zeros();
    let mut q_bar = Vector3::zeros();
    for (i, (p, q)) in correspondences.iter().enumerate() {
        let w = weight(i);
        w_sum += w;
        p_bar += w * p;
        q_bar += w * q;
    }
    if w_sum <= 0.0 {
        return Err(Error::InvalidInput("weights must sum to > 0".into()));
    }
    p_bar /= w_sum;
    q_bar /= w_sum;

    // Cross-covariance H = sum w (p - p_bar)(q - q_bar)^T; the optimal
    // rotation maximizes tr(R H).
    let mut h = Matrix3::zeros();
    for (i, (p, q)) in correspondences.iter().enumerate() {
        let w = weight(i);
        h += w * (p - p_bar) * (q - q_bar).transpose();
    }

    let svd = h.svd(true, true);
    let sigma = svd.singular_values;
    if !(sigma[1] > sigma[0] * 1e-13) || sigma[0] == 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    let u = svd.u.ok_or_else(|| Error::NumericalFailure("SVD produced no U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::NumericalFailure("SVD produced no V^T".into()))?;
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let translation = q_bar - rotation * p_bar;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

/// Bounding boxes of the two rasters must intersect once the moving one
/// is posed; a cheap NoOverlap guard before any sampling work.
fn footprints_overlap(moving: &DsmGrid, reference: &DsmGrid, init: &RigidTransform) -> bool {
    let (mx0, mx1, my0, my1) = moving.world_bounds();
    let corners = [
        (mx0, my0),
        (mx0, my1),
        (mx1, my0),
        (mx1, my1),
    ];
    let mut x0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for (x, y) in corners {
        let (px, py, _) = init.apply_xyz(x, y, 0.0);
        x0 = x0.min(px);
        x1 = x1.max(px);
        y0 = y0.min(py);
        y1 = y1.max(py);
    }
    let (rx0, rx1, ry0, ry1) = reference.world_bounds();
    // Pad by one pixel so border-only overlaps are not rejected early.
    let pad = reference.geotransform().min_abs_scale();
    x1 + pad >= rx0 && rx1 + pad >= x0 && y1 + pad >= ry0 && ry1 + pad >= y0
}

/// Register `moving` onto `reference`, starting from `init`.
///
/// Each iteration transforms the sampled moving points by the current
/// pose, searches their exact NN in the reference, rejects distant pairs,
/// trims the worst residual fraction, and re-estimates the pose. The
/// returned transform includes `init`.
pub fn dsm_icp(
    moving: &DsmGrid,
    reference: &DsmGrid,
    params: &IcpParams,
    init: &RigidTransform,
) -> Result<RegistrationReport> {
    params.validate()?;
    if !footprints_overlap(moving, reference, init) {
        return Err(Error::NoOverlap);
    }

    let gt_m = moving.geotransform();
    let pixels = sample_queries(moving, params.n_queries, params.seed)?;
    let points: Vec<Vector3<f64>> = pixels
        .iter()
        .filter_map(|&(u, v)| {
            let h = moving.sample_pixel(u as i64, v as i64)?;
            let (x, y, z) = uv_to_world(u as f64, v as f64, gt_m, h);
            Some(Vector3::new(x, y, z))
        })
        .collect();

    let mut pose = *init;
    let mut history: Vec<IcpIteration> = Vec::new();
    let mut converged = false;

    for _ in 0..params.max_iterations {
        // Correspondence step: exact bounded NN per transformed query.
        let matches: Vec<Option<(Vector3<f64>, Vector3<f64>, f64, usize)>> = points
            .par_iter()
            .map(|p| {
                let y = pose.apply(*p);
                let q = (y.x, y.y, y.z);
                let bound = initial_bound(q, reference).ok()?;
                let nn = nn_search(q, reference, &bound).ok()?;
                Some((
                    y,
                    Vector3::new(nn.ref_point.0, nn.ref_point.1, nn.ref_point.2),
                    nn.distance,
                    nn.candidates_scanned,
                ))
            })
            .collect();

        let mut pairs: Vec<(Vector3<f64>, Vector3<f64>, f64)> = Vec::new();
        let mut scanned_total = 0usize;
        let mut searches = 0usize;
        for m in matches.into_iter().flatten() {
            let (y, q, dist, scanned) = m;
            scanned_total += scanned;
            searches += 1;
            if dist <= params.correspondence_reject {
                pairs.push((y, q, dist));
            }
        }
        let mean_scanned = if searches > 0 {
            scanned_total as f64 / searches as f64
        } else {
            0.0
        };

        // Trim the worst residuals.
        pairs.sort_by(|a, b| a.2.total_cmp(&b.2));
        let keep = pairs.len() - (pairs.len() as f64 * params.trim_fraction).floor() as usize;
        pairs.truncate(keep);
        if pairs.len() < 3 {
            return Err(Error::TooFewCorrespondences(pairs.len()));
        }

        // Estimation step on the surviving correspondences.
        let set: Vec<(Vector3<f64>, Vector3<f64>)> =
            pairs.iter().map(|(y, q, _)| (*y, *q)).collect();
        let delta = estimate_rigid(&set, None)?;

        let mut ss = 0.0;
        for (y, q) in &set {
            ss += (delta.apply(*y) - q).norm_squared();
        }
        let rms = (ss / set.len() as f64).sqrt();
        pose = delta.compose(&pose);

        let prev_rms = history.last().map(|h| h.rms);
        history.push(IcpIteration {
            rms,
            n_correspondences: set.len(),
            mean_candidates_scanned: mean_scanned,
        });

        let pose_delta = delta.rotation_angle() + delta.translation_norm();
        let residual_settled = match prev_rms {
            Some(prev) => (prev - rms).abs() < params.rel_tol * prev.max(f64::MIN_POSITIVE),
            None => false,
        };
        if residual_settled || pose_delta < params.abs_tol {
            converged = true;
            break;
        }
    }

    let last = history.last().expect("max_iterations >= 1");
    Ok(RegistrationReport {
        transform: pose,
        err: last.rms,
        iterations: history.len(),
        n_correspondences: last.n_correspondences,
        converged,
        mean_candidates_scanned: last.mean_candidates_scanned,
        history,
    })
}
