//! Synthetic test scenes: fractal terrain, overlapping tiles, and known
//! ground-truth poses, all deterministic per seed. This is what makes
//! every pipeline stage reproducible at desk scale.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fusion::apply_pose;
use crate::geo::GeoTransform;
use crate::motion::GlobalPoses;
use crate::raster::{DsmGrid, PixelRect};
use crate::se3::RigidTransform;

/// Parameters of one synthetic scene.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub seed: u64,
    /// Master terrain side length, pixels.
    pub terrain_size: usize,
    /// Ground sampling distance, meters per pixel.
    pub gsd: f64,
    pub tile_rows: usize,
    pub tile_cols: usize,
    /// Overlap fraction between rook-adjacent tiles, [0, 0.9].
    pub overlap: f64,
    /// Per-tile perturbation bounds. Magnitudes are drawn from the upper
    /// half of each range so "recovered within 10% of applied" is a
    /// meaningful ratio; tile 0 is never perturbed and fixes the gauge.
    pub rot_max_deg: f64,
    pub shift_max_px: f64,
    pub dz_max: f64,
    /// Fraction of tile pixels knocked out as nodata holes.
    pub nodata_fraction: f64,
    /// Additive Gaussian height noise, meters.
    pub noise_sigma: f64,
    pub base_height: f64,
    pub relief: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            terrain_size: 513,
            gsd: 1.0,
            tile_rows: 3,
            tile_cols: 3,
            overlap: 0.25,
            rot_max_deg: 1.0,
            shift_max_px: 3.0,
            dz_max: 3.0,
            nodata_fraction: 0.0,
            noise_sigma: 0.0,
            base_height: 100.0,
            relief: 80.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.terrain_size < 16 {
            return Err(Error::InvalidInput("terrain_size must be >= 16".into()));
        }
        if self.tile_rows == 0 || self.tile_cols == 0 {
            return Err(Error::InvalidInput("tile layout must be >= 1x1".into()));
        }
        if !(0.0..=0.9).contains(&self.overlap) {
            return Err(Error::InvalidInput("overlap must be in [0, 0.9]".into()));
        }
        if !(self.gsd > 0.0) {
            return Err(Error::InvalidInput("gsd must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.nodata_fraction) {
            return Err(Error::InvalidInput("nodata_fraction must be in [0,1)".into()));
        }
        if self.rot_max_deg < 0.0 || self.shift_max_px < 0.0 || self.dz_max < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::InvalidInput("perturbation bounds must be >= 0".into()));
        }
        Ok(())
    }
}

/// A generated scene: the master truth raster, the perturbed tiles, the
/// applied perturbations, and the poses that undo them.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub terrain: DsmGrid,
    pub tiles: Vec<DsmGrid>,
    /// E_i actually applied to tile i's points.
    pub applied: Vec<RigidTransform>,
    /// T_i = E_i^{-1}: the poses a perfect solver would recover.
    pub truth: GlobalPoses,
}

/// Classic diamond-square heightmap on a (2^k + 1)^2 lattice, returned
/// cropped to `size` x `size` and rescaled to [base, base + relief].
pub fn diamond_square(size: usize, seed: u64, roughness: f64, base: f64, relief: f64) -> Vec<f64> {
    let mut k = 0usize;
    while (1usize << k) + 1 < size {
        k += 1;
    }
    let n = (1usize << k) + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = vec![0.0f64; n * n];
    let idx = |u: usize, v: usize| v * n + u;
    for &(u, v) in &[(0, 0), (n - 1, 0), (0, n - 1), (n - 1, n - 1)] {
        h[idx(u, v)] = rng.random_range(-1.0..1.0);
    }
    let mut step = n - 1;
    let mut amp = 1.0f64;
    while step > 1 {
        let half = step / 2;
        // Diamond: centers of squares.
        for v in (half..n).step_by(step) {
            for u in (half..n).step_by(step) {
                let avg = (h[idx(u - half, v - half)]
                    + h[idx(u + half, v - half)]
                    + h[idx(u - half, v + half)]
                    + h[idx(u + half, v + half)])
                    / 4.0;
                h[idx(u, v)] = avg + amp * rng.random_range(-1.0..1.0);
            }
        }
        // Square: edge midpoints.
        for v in (0..n).step_by(half) {
            let u_start = if (v / half) % 2 == 0 { half } else { 0 };
            for u in (u_start..n).step_by(step) {
                let mut sum = 0.0;
                let mut cnt = 0.0;
                if u >= half {
                    sum += h[idx(u - half, v)];
                    cnt += 1.0;
                }
                if u + half < n {
                    sum += h[idx(u + half, v)];
                    cnt += 1.0;
                }
                if v >= half {
                    sum += h[idx(u, v - half)];
                    cnt += 1.0;
                }
                if v + half < n {
                    sum += h[idx(u, v + half)];
                    cnt += 1.0;
                }
                h[idx(u, v)] = sum / cnt + amp * rng.random_range(-1.0..1.0);
            }
        }
        step = half;
        amp *= roughness;
    }
    // Crop and rescale.
    let mut out = Vec::with_capacity(size * size);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in 0..size {
        for u in 0..size {
            let x = h[idx(u, v)];
            min = min.min(x);
            max = max.max(x);
            out.push(x);
        }
    }
    let span = (max - min).max(1e-12);
    for x in out.iter_mut() {
        *x = base + relief * (*x - min) / span;
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; keeps the dependency surface small.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Magnitude in [max/2, max] with a random sign, or 0 when max is 0.
fn bounded_magnitude(rng: &mut ChaCha8Rng, max: f64) -> f64 {
    if max == 0.0 {
        return 0.0;
    }
    let m = rng.random_range(0.5 * max..=max);
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

/// Generate the scene: smooth fractal terrain centered on the world
/// origin, tiles cut per the layout, per-tile SE(3) perturbations applied
/// by resampling, plus optional height noise and nodata holes.
pub fn generate(spec: &SynthSpec) -> Result<SynthScene> {
    spec.validate()?;
    let size = spec.terrain_size;
    let heights = diamond_square(size, spec.seed, 0.55, spec.base_height, spec.relief);
    // Center the footprint on the world origin so rotation magnitudes and
    // translation magnitudes stay decoupled.
    let half = (size as f64 - 1.0) / 2.0 * spec.gsd;
    let gt = GeoTransform::north_up(-half, half, spec.gsd);
    let terrain = DsmGrid::from_heights(size, size, heights, gt, -9999.0)?;

    // Tile layout with the requested mutual overlap.
    let cols = spec.tile_cols as f64;
    let rows = spec.tile_rows as f64;
    let tile_w = (size as f64 / (cols - (cols - 1.0) * spec.overlap)).floor() as usize;
    let tile_h = (size as f64 / (rows - (rows - 1.0) * spec.overlap)).floor() as usize;
    if tile_w < 8 || tile_h < 8 {
        return Err(Error::InvalidInput(
            "tile layout leaves tiles smaller than 8 px".into(),
        ));
    }
    let step_x = if spec.tile_cols > 1 {
        (size - tile_w) as f64 / (cols - 1.0)
    } else {
        0.0
    };
    let step_y = if spec.tile_rows > 1 {
        (size - tile_h) as f64 / (rows - 1.0)
    } else {
        0.0
    };

    let mut pose_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    pose_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(2);
    let mut hole_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    hole_rng.set_stream(3);

    let mut tiles = Vec::new();
    let mut applied = Vec::new();
    for r in 0..spec.tile_rows {
        for c in 0..spec.tile_cols {
            let u0 = (c as f64 * step_x).round() as usize;
            let v0 = (r as f64 * step_y).round() as usize;
            let tile_gt = GeoTransform::north_up(
                gt.x_origin + u0 as f64 * spec.gsd,
                gt.y_origin - v0 as f64 * spec.gsd,
                spec.gsd,
            );

            let first = r == 0 && c == 0;
            let perturbation = if first {
                RigidTransform::identity()
            } else {
                let axis = Vector3::new(
                    pose_rng.random_range(-1.0..1.0),
                    pose_rng.random_range(-1.0..1.0),
                    pose_rng.random_range(-1.0..1.0f64).max(0.2),
                );
                let angle = bounded_magnitude(&mut pose_rng, spec.rot_max_deg.to_radians());
                let shift = Vector3::new(
                    bounded_magnitude(&mut pose_rng, spec.shift_max_px * spec.gsd),
                    bounded_magnitude(&mut pose_rng, spec.shift_max_px * spec.gsd),
                    bounded_magnitude(&mut pose_rng, spec.dz_max),
                );
                let center = Vector3::new(
                    tile_gt.x_origin + (tile_w as f64 - 1.0) / 2.0 * spec.gsd,
                    tile_gt.y_origin - (tile_h as f64 - 1.0) / 2.0 * spec.gsd,
                    spec.base_height,
                );
                RigidTransform::about_point(axis, angle, center, shift)
            };

            let mut tile = if first || perturbation == RigidTransform::identity() {
                // Exact crop keeps the no-perturbation tile bit-identical
                // to the terrain.
                let win = terrain.read_window(PixelRect::new(
                    u0 as i64,
                    (u0 + tile_w - 1) as i64,
                    v0 as i64,
                    (v0 + tile_h - 1) as i64,
                ))?;
                let mut data = Vec::with_capacity(tile_w * tile_h);
                for v in win.v_min..=win.v_max {
                    for u in win.u_min..=win.u_max {
                        data.push(win.get(u, v).unwrap_or(f64::NAN));
                    }
                }
                DsmGrid::from_heights(tile_w, tile_h, data, tile_gt, -9999.0)?
            } else {
                apply_pose(&terrain, &perturbation, &tile_gt, tile_w, tile_h)?
            };

            if spec.noise_sigma > 0.0 || spec.nodata_fraction > 0.0 {
                let win = tile.read_window(PixelRect::full(tile_w, tile_h))?;
                let mut data = Vec::with_capacity(tile_w * tile_h);
                for v in 0..tile_h {
                    for u in 0..tile_w {
                        let mut h = win.get(u, v).unwrap_or(f64::NAN);
                        if h.is_finite() && spec.noise_sigma > 0.0 {
                            h += spec.noise_sigma * gaussian(&mut noise_rng);
                        }
                        if spec.nodata_fraction > 0.0
                            && hole_rng.random::<f64>() < spec.nodata_fraction
                        {
                            h = f64::NAN;
                        }
                        data.push(h);
                    }
                }
                tile = DsmGrid::from_heights(tile_w, tile_h, data, tile_gt, -9999.0)?;
            }

            tiles.push(tile.with_id(tiles.len()));
            applied.push(perturbation);
        }
    }

    let truth_poses: Vec<RigidTransform> = applied.iter().map(|e| e.inverse()).collect();
    Ok(SynthScene {
        terrain,
        tiles,
        applied,
        truth: GlobalPoses {
            anchor: 0,
            poses: truth_poses,
            objective: None,
        },
    })
}
