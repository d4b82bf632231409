//! Posing, resampling, fusion, and evaluation metrics for registered DSMs.
//!
//! Metrics and fusion sample with nodata-aware bilinear interpolation;
//! registration itself reads integer pixels only (see the icp module) so
//! the NN exactness argument stays intact. The split is deliberate:
//! smoothness matters here, exactness matters there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{uv_to_world, world_to_uv, GeoTransform};
use crate::raster::{DsmGrid, PixelRect};
use crate::se3::RigidTransform;

/// Configuration for the outlier-gated RMSE metric.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Inlier threshold tau, meters. Differences at or above it are
    /// excluded from the RMSE.
    pub tau: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { tau: 10.0 }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidInput("tau must be > 0".into()));
        }
        Ok(())
    }
}

/// Outcome of one RMSE_tau evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RmseTauReport {
    pub rmse_tau: f64,
    /// Inliers over co-located pairs.
    pub inlier_ratio: f64,
    pub n_colocated: usize,
    pub n_inliers: usize,
}

/// A fused DSM plus its per-pixel contributor counts.
#[derive(Debug, Clone)]
pub struct FusedDsm {
    pub grid: DsmGrid,
    pub contributors: DsmGrid,
}

/// Nodata-aware bilinear sample at fractional pixel coordinates. Weights
/// of invalid or out-of-range corners are dropped and the rest
/// renormalized; an exact integer hit returns the stored value bit-exact.
pub fn bilinear_sample(grid: &DsmGrid, uf: f64, vf: f64) -> Option<f64> {
    if !uf.is_finite() || !vf.is_finite() {
        return None;
    }
    let u0 = uf.floor();
    let v0 = vf.floor();
    let fx = uf - u0;
    let fy = vf - v0;
    let (u0, v0) = (u0 as i64, v0 as i64);
    let corners = [
        (u0, v0, (1.0 - fx) * (1.0 - fy)),
        (u0 + 1, v0, fx * (1.0 - fy)),
        (u0, v0 + 1, (1.0 - fx) * fy),
        (u0 + 1, v0 + 1, fx * fy),
    ];
    let mut acc = 0.0;
    let mut w_sum = 0.0;
    for (u, v, w) in corners {
        if w == 0.0 {
            continue;
        }
        if let Some(h) = grid.sample_pixel(u, v) {
            acc += w * h;
            w_sum += w;
        }
    }
    if w_sum == 0.0 {
        None
    } else {
        Some(acc / w_sum)
    }
}

/// Sample the posed surface height at a target world (x, y): invert the
/// pose to the source frame, read the source by bilinear interpolation,
/// and push the point back through the pose. The horizontal coupling
/// introduced by rotation is resolved by fixed-point iteration.
fn posed_height(grid: &DsmGrid, pose: &RigidTransform, inverse: &RigidTransform, x: f64, y: f64) -> Option<f64> {
    let gt = grid.geotransform();
    let pure_shift = pose.rotation_angle() < 1e-12;
    let mut h_t = 0.0;
    let iterations = if pure_shift { 1 } else { 3 };
    let mut out = None;
    for _ in 0..iterations {
        let s = inverse.apply(nalgebra::Vector3::new(x, y, h_t));
        let (us, vs) = world_to_uv(s.x, s.y, gt).ok()?;
        let hs = bilinear_sample(grid, us, vs)?;
        if pure_shift {
            return Some(hs + pose.translation.z);
        }
        let p = pose.apply(nalgebra::Vector3::new(s.x, s.y, hs));
        h_t = p.z;
        out = Some(p.z);
    }
    out
}

/// World bounding box of the raster once posed, from its border points.
fn posed_bounds(grid: &DsmGrid, pose: &RigidTransform) -> (f64, f64, f64, f64) {
    let gt = grid.geotransform();
    let (w, h) = (grid.width(), grid.height());
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    let mut visit = |u: usize, v: usize| {
        let z = grid.sample_pixel(u as i64, v as i64).unwrap_or(0.0);
        let (x, y, z) = uv_to_world(u as f64, v as f64, gt, z);
        let p = pose.apply(nalgebra::Vector3::new(x, y, z));
        x_min = x_min.min(p.x);
        x_max = x_max.max(p.x);
        y_min = y_min.min(p.y);
        y_max = y_max.max(p.y);
    };
    let su = (w / 32).max(1);
    let sv = (h / 32).max(1);
    for u in (0..w).step_by(su).chain([w - 1]) {
        visit(u, 0);
        visit(u, h - 1);
    }
    for v in (0..h).step_by(sv).chain([h - 1]) {
        visit(0, v);
        visit(w - 1, v);
    }
    (x_min, x_max, y_min, y_max)
}

/// Resample `grid` under `pose` onto a target lattice by inverse mapping.
/// Pixels that map off-source or onto nodata become nodata (NaN).
pub fn apply_pose(
    grid: &DsmGrid,
    pose: &RigidTransform,
    target_gt: &GeoTransform,
    target_width: usize,
    target_height: usize,
) -> Result<DsmGrid> {
    let heights = warp_rows(grid, pose, target_gt, target_width, 0, target_height);
    let valid = heights.iter().filter(|h| h.is_finite()).count();
    if valid == 0 {
        return Err(Error::EmptyResult);
    }
    DsmGrid::from_heights(target_width, target_height, heights, *target_gt, f64::NAN)
}

/// Warp rows [v0, v0+rows) of the target lattice; NaN marks nodata.
fn warp_rows(
    grid: &DsmGrid,
    pose: &RigidTransform,
    target_gt: &GeoTransform,
    target_width: usize,
    v0: usize,
    rows: usize,
) -> Vec<f64> {
    let inverse = pose.inverse();
    let mut out = vec![f64::NAN; target_width * rows];
    let band = 64usize;
    let chunks: Vec<(usize, &mut [f64])> = out
        .chunks_mut(band * target_width)
        .enumerate()
        .map(|(k, c)| (v0 + k * band, c))
        .collect();
    chunks.into_par_iter().for_each(|(v_start, chunk)| {
        for (row, line) in chunk.chunks_mut(target_width).enumerate() {
            let v = v_start + row;
            for (u, slot) in line.iter_mut().enumerate() {
                let (x, y, _) = uv_to_world(u as f64, v as f64, target_gt, 0.0);
                if let Some(h) = posed_height(grid, pose, &inverse, x, y) {
                    *slot = h;
                }
            }
        }
    });
    out
}

/// RMSE over co-located valid pixel pairs with differences below tau;
/// the divisor is the inlier count and the inlier ratio is reported
/// alongside. Pixel centers of `a` are sampled bilinearly in `b`.
pub fn rmse_tau(a: &DsmGrid, b: &DsmGrid, cfg: &MetricConfig) -> Result<RmseTauReport> {
    cfg.validate()?;
    let gt_a = a.geotransform();
    let gt_b = b.geotransform();
    let mut n_colocated = 0usize;
    let mut n_inliers = 0usize;
    let mut sum_sq = 0.0f64;
    // Sequential row-major accumulation: the metric is defined as the
    // plain double loop and must reproduce it exactly.
    let band = (1 << 20) / a.width().max(1) + 1;
    let mut v0 = 0usize;
    while v0 < a.height() {
        let v1 = (v0 + band).min(a.height()) - 1;
        let win = a.read_window(PixelRect::new(0, a.width() as i64 - 1, v0 as i64, v1 as i64))?;
        for (u, v, ha) in win.iter_valid() {
            let (x, y, _) = uv_to_world(u as f64, v as f64, gt_a, 0.0);
            let Ok((ub, vb)) = world_to_uv(x, y, gt_b) else {
                continue;
            };
            let Some(hb) = bilinear_sample(b, ub, vb) else {
                continue;
            };
            n_colocated += 1;
            let d = ha - hb;
            if d.abs() < cfg.tau {
                n_inliers += 1;
                sum_sq += d * d;
            }
        }
        v0 = v1 + 1;
    }
    if n_colocated == 0 {
        return Err(Error::NoOverlap);
    }
    if n_inliers == 0 {
        return Err(Error::NoInliers);
    }
    Ok(RmseTauReport {
        rmse_tau: (sum_sq / n_inliers as f64).sqrt(),
        inlier_ratio: n_inliers as f64 / n_colocated as f64,
        n_colocated,
        n_inliers,
    })
}

/// Summary of the all-pairs evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanPairwiseReport {
    pub mean_rmse_tau: f64,
    pub n_pairs: usize,
    /// Pairs excluded because no difference fell below tau.
    pub n_pairs_excluded: usize,
    pub per_pair: Vec<PairRmse>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairRmse {
    pub i: usize,
    pub j: usize,
    pub rmse_tau: f64,
}

/// Pose every raster, then average rmse_tau over all overlapping pairs.
pub fn mean_pairwise_rmse(
    dsms: &[DsmGrid],
    poses: &[RigidTransform],
    cfg: &MetricConfig,
) -> Result<MeanPairwiseReport> {
    cfg.validate()?;
    if dsms.len() < 2 || dsms.len() != poses.len() {
        return Err(Error::InvalidInput(format!(
            "need >= 2 rasters with one pose each, got {} rasters and {} poses",
            dsms.len(),
            poses.len()
        )));
    }
    let warped: Vec<DsmGrid> = dsms
        .iter()
        .zip(poses)
        .map(|(g, p)| {
            if p.rotation_angle() == 0.0 && p.translation_norm() == 0.0 {
                Ok(g.clone())
            } else {
                let gsd = g.geotransform().min_abs_scale();
                let (x0, x1, y0, y1) = posed_bounds(g, p);
                let gt = GeoTransform::north_up(x0, y1, gsd);
                let w = ((x1 - x0) / gsd).ceil() as usize + 1;
                let h = ((y1 - y0) / gsd).ceil() as usize + 1;
                apply_pose(g, p, &gt, w, h)
            }
        })
        .collect::<Result<_>>()?;

    let mut per_pair = Vec::new();
    let mut excluded = 0usize;
    let mut sum = 0.0;
    for i in 0..warped.len() {
        for j in (i + 1)..warped.len() {
            match rmse_tau(&warped[i], &warped[j], cfg) {
                Ok(r) => {
                    sum += r.rmse_tau;
                    per_pair.push(PairRmse {
                        i,
                        j,
                        rmse_tau: r.rmse_tau,
                    });
                }
                Err(Error::NoOverlap) => {}
                Err(Error::NoInliers) => excluded += 1,
                Err(e) => return Err(e),
            }
        }
    }
    if per_pair.is_empty() {
        return Err(Error::NoOverlappingPairs);
    }
    Ok(MeanPairwiseReport {
        mean_rmse_tau: sum / per_pair.len() as f64,
        n_pairs: per_pair.len(),
        n_pairs_excluded: excluded,
        per_pair,
    })
}

/// Fuse registered DSMs onto one lattice at `target_gsd`: every raster is
/// posed and resampled, and each output pixel takes the median of its
/// contributors (robust to residual outliers). Also returns the
/// contributor-count raster.
pub fn fuse(dsms: &[DsmGrid], poses: &[RigidTransform], target_gsd: f64) -> Result<FusedDsm> {
    if dsms.is_empty() || dsms.len() != poses.len() {
        return Err(Error::InvalidInput(format!(
            "need >= 1 raster with one pose each, got {} rasters and {} poses",
            dsms.len(),
            poses.len()
        )));
    }
    if !(target_gsd > 0.0) {
        return Err(Error::InvalidInput("target_gsd must be > 0".into()));
    }
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (g, p) in dsms.iter().zip(poses) {
        let (x0, x1, y0, y1) = posed_bounds(g, p);
        x_min = x_min.min(x0);
        x_max = x_max.max(x1);
        y_min = y_min.min(y0);
        y_max = y_max.max(y1);
    }
    if !x_min.is_finite() {
        return Err(Error::EmptyResult);
    }
    let gt = GeoTransform::north_up(x_min, y_max, target_gsd);
    let width = ((x_max - x_min) / target_gsd).ceil() as usize + 1;
    let height = ((y_max - y_min) / target_gsd).ceil() as usize + 1;

    let mut fused = vec![f64::NAN; width * height];
    let mut counts = vec![f64::NAN; width * height];
    let band = 256usize;
    let mut v0 = 0usize;
    let mut n_valid = 0usize;
    while v0 < height {
        let rows = band.min(height - v0);
        let layers: Vec<Vec<f64>> = dsms
            .iter()
            .zip(poses)
            .map(|(g, p)| warp_rows(g, p, &gt, width, v0, rows))
            .collect();
        let base = v0 * width;
        let mut values = Vec::with_capacity(dsms.len());
        for k in 0..rows * width {
            values.clear();
            for layer in &layers {
                if layer[k].is_finite() {
                    values.push(layer[k]);
                }
            }
            if values.is_empty() {
                continue;
            }
            values.sort_by(|a, b| a.total_cmp(b));
            let m = values.len();
            let median = if m % 2 == 1 {
                values[m / 2]
            } else {
                0.5 * (values[m / 2 - 1] + values[m / 2])
            };
            fused[base + k] = median;
            counts[base + k] = m as f64;
            n_valid += 1;
        }
        v0 += rows;
    }
    if n_valid == 0 {
        return Err(Error::EmptyResult);
    }
    Ok(FusedDsm {
        grid: DsmGrid::from_heights(width, height, fused, gt, f64::NAN)?,
        contributors: DsmGrid::from_heights(width, height, counts, gt, f64::NAN)?,
    })
}

/// Signed per-pixel difference fused - reference on the fused lattice,
/// with the gated RMSE as the companion summary.
pub fn error_map(
    fused: &DsmGrid,
    reference: &DsmGrid,
    cfg: &MetricConfig,
) -> Result<(DsmGrid, RmseTauReport)> {
    let summary = rmse_tau(fused, reference, cfg)?;
    let gt_f = fused.geotransform();
    let gt_r = reference.geotransform();
    let mut diff = vec![f64::NAN; fused.width() * fused.height()];
    let band = (1 << 20) / fused.width().max(1) + 1;
    let mut v0 = 0usize;
    while v0 < fused.height() {
        let v1 = (v0 + band).min(fused.height()) - 1;
        let win = fused.read_window(PixelRect::new(
            0,
            fused.width() as i64 - 1,
            v0 as i64,
            v1 as i64,
        ))?;
        for (u, v, hf) in win.iter_valid() {
            let (x, y, _) = uv_to_world(u as f64, v as f64, gt_f, 0.0);
            let Ok((ur, vr)) = world_to_uv(x, y, gt_r) else {
                continue;
            };
            if let Some(hr) = bilinear_sample(reference, ur, vr) {
                diff[v * fused.width() + u] = hf - hr;
            }
        }
        v0 = v1 + 1;
    }
    let map = DsmGrid::from_heights(fused.width(), fused.height(), diff, *gt_f, f64::NAN)?;
    Ok((map, summary))
}
