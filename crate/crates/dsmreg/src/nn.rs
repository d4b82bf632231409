//! Exact nearest-neighbor search from a query 3D point into a reference
//! DSM, bounded to a small pixel window.
//!
//! The search never builds an index over the reference: the co-located
//! reference pixel gives an upper bound on the NN distance, the bound's
//! sphere is projected to a pixel rectangle, and only that rectangle is
//! read and scanned. Memory and time per query are proportional to the
//! rectangle, independent of raster size.

use crate::error::{Error, Result};
use crate::geo::{uv_to_world, world_to_uv};
use crate::raster::{DsmGrid, PixelRect};

/// Default Chebyshev radius limit for the nodata-anchor fallback scan.
pub const DEFAULT_MAX_RING_RADIUS: usize = 64;

/// Upper bound on the nearest neighbor of one query point.
#[derive(Debug, Clone, Copy)]
pub struct SearchBound {
    /// Anchor pixel in the reference: the co-located pixel, or the nearest
    /// valid pixel found by ring scan when the co-located one is nodata.
    pub anchor_pixel: (i64, i64),
    /// Height at the anchor pixel.
    pub anchor_height: f64,
    /// Radius of the sphere guaranteed to contain the true NN: the 3D
    /// distance from the query to the anchor pixel's point. For a query
    /// exactly on a pixel center this is the paper's |h_p - h_q|.
    pub radius_d: f64,
    /// Scan rectangle before clipping, centered on the query's rounded
    /// pixel position.
    pub rect: PixelRect,
}

/// Outcome of one bounded NN search.
#[derive(Debug, Clone, Copy)]
pub struct NnResult {
    /// World coordinates of the chosen reference point.
    pub ref_point: (f64, f64, f64),
    /// Euclidean 3D distance between query and `ref_point`.
    pub distance: f64,
    /// Number of valid candidate pixels examined (the paper's k).
    pub candidates_scanned: usize,
}

/// Compute the initial correspondence and search bound for one query,
/// with the default ring-scan limit.
pub fn initial_bound(query_point: (f64, f64, f64), reference: &DsmGrid) -> Result<SearchBound> {
    initial_bound_with_ring_limit(query_point, reference, DEFAULT_MAX_RING_RADIUS)
}

/// As [`initial_bound`] with an explicit limit on the nodata fallback scan.
pub fn initial_bound_with_ring_limit(
    query_point: (f64, f64, f64),
    reference: &DsmGrid,
    max_ring_radius: usize,
) -> Result<SearchBound> {
    let (x, y, _) = query_point;
    let gt = reference.geotransform();
    let (uf, vf) = world_to_uv(x, y, gt)?;
    let u_r = uf.round() as i64;
    let v_r = vf.round() as i64;
    if !reference.contains_pixel(u_r, v_r) {
        return Err(Error::NoOverlap);
    }

    let (anchor, anchor_height) = match reference.sample_pixel(u_r, v_r) {
        Some(h_q) => ((u_r, v_r), h_q),
        None => nearest_valid_by_ring(reference, (u_r, v_r), (x, y), max_ring_radius)?,
    };

    let (ax, ay, ah) = uv_to_world(anchor.0 as f64, anchor.1 as f64, gt, anchor_height);
    let radius_d = dist3(query_point, (ax, ay, ah)).sqrt();

    let rect = bound_rect(reference, (u_r, v_r), (x, y), radius_d);
    Ok(SearchBound {
        anchor_pixel: anchor,
        anchor_height,
        radius_d,
        rect,
    })
}

/// Rectangle of pixels whose centers can lie inside the bound sphere.
fn bound_rect(reference: &DsmGrid, center: (i64, i64), query_xy: (f64, f64), d: f64) -> PixelRect {
    let gt = reference.geotransform();
    if gt.x_skew == 0.0 && gt.y_skew == 0.0 {
        // Axis-aligned case: half-width of ceil(d / finer scale) around
        // the rounded query pixel covers the sphere's projection.
        let r = (d / gt.min_abs_scale()).ceil() as i64;
        PixelRect::new(center.0 - r, center.0 + r, center.1 - r, center.1 + r)
    } else {
        // Skewed case: map the world-space bounding square's corners to
        // pixel space and take their bounding box, padded one pixel.
        let (x, y) = query_xy;
        let corners = [
            (x - d, y - d),
            (x - d, y + d),
            (x + d, y - d),
            (x + d, y + d),
        ];
        let mut u_min = f64::INFINITY;
        let mut u_max = f64::NEG_INFINITY;
        let mut v_min = f64::INFINITY;
        let mut v_max = f64::NEG_INFINITY;
        for (cx, cy) in corners {
            // Invertibility was checked by world_to_uv on the query.
            let (u, v) = world_to_uv(cx, cy, gt).expect("checked invertible");
            u_min = u_min.min(u);
            u_max = u_max.max(u);
            v_min = v_min.min(v);
            v_max = v_max.max(v);
        }
        PixelRect::new(
            u_min.floor() as i64 - 1,
            u_max.ceil() as i64 + 1,
            v_min.floor() as i64 - 1,
            v_max.ceil() as i64 + 1,
        )
    }
}

/// Outward Chebyshev ring scan for the nearest valid pixel; within the
/// first non-empty ring the pixel with the smallest horizontal world
/// distance wins, ties broken by smallest (v, u).
fn nearest_valid_by_ring(
    reference: &DsmGrid,
    center: (i64, i64),
    query_xy: (f64, f64),
    max_radius: usize,
) -> Result<((i64, i64), f64)> {
    let gt = reference.geotransform();
    for r in 1..=max_radius as i64 {
        let mut best: Option<(f64, i64, i64, f64)> = None;
        let mut consider = |u: i64, v: i64| {
            if let Some(h) = reference.sample_pixel(u, v) {
                let (px, py, _) = uv_to_world(u as f64, v as f64, gt, h);
                let d2 = (px - query_xy.0).powi(2) + (py - query_xy.1).powi(2);
                let cand = (d2, v, u, h);
                let better = match &best {
                    None => true,
                    Some((bd2, bv, bu, _)) => {
                        (d2, v, u) < (*bd2, *bv, *bu)
                    }
                };
                if better {
                    best = Some(cand);
                }
            }
        };
        for u in (center.0 - r)..=(center.0 + r) {
            consider(u, center.1 - r);
            consider(u, center.1 + r);
        }
        for v in (center.1 - r + 1)..=(center.1 + r - 1) {
            consider(center.0 - r, v);
            consider(center.0 + r, v);
        }
        if let Some((_, v, u, h)) = best {
            return Ok(((u, v), h));
        }
    }
    Err(Error::AllNodata)
}

/// Exact nearest valid reference point within the bound's rectangle. By
/// the bound's validity this is the global NN over the whole reference.
/// Ties break to the smallest (v, u) pixel index.
pub fn nn_search(
    query_point: (f64, f64, f64),
    reference: &DsmGrid,
    bound: &SearchBound,
) -> Result<NnResult> {
    let window = match reference.read_window(bound.rect) {
        Ok(w) => w,
        Err(Error::OutOfBounds { .. }) => return Err(Error::AllNodata),
        Err(e) => return Err(e),
    };
    let gt = reference.geotransform();
    let mut best: Option<(f64, usize, usize, f64)> = None;
    let mut scanned = 0usize;
    for (u, v, h) in window.iter_valid() {
        scanned += 1;
        let (px, py, ph) = uv_to_world(u as f64, v as f64, gt, h);
        let d2 = dist3(query_point, (px, py, ph));
        let better = match &best {
            None => true,
            Some((bd2, bv, bu, _)) => (d2, v, u) < (*bd2, *bv, *bu),
        };
        if better {
            best = Some((d2, v, u, h));
        }
    }
    match best {
        Some((d2, v, u, h)) => Ok(NnResult {
            ref_point: uv_to_world(u as f64, v as f64, gt, h),
            distance: d2.sqrt(),
            candidates_scanned: scanned,
        }),
        None => Err(Error::AllNodata),
    }
}

/// Bound then search in one call.
pub fn nn_query(query_point: (f64, f64, f64), reference: &DsmGrid) -> Result<NnResult> {
    let bound = initial_bound(query_point, reference)?;
    nn_search(query_point, reference, &bound)
}

/// Exhaustive scan over every valid pixel; the correctness oracle for
/// [`nn_search`]. Same distance arithmetic, same tie-break. Row-banded so
/// it stays usable on moderately large rasters.
pub fn brute_force_nn(query_point: (f64, f64, f64), reference: &DsmGrid) -> Result<NnResult> {
    let gt = reference.geotransform();
    let mut best: Option<(f64, usize, usize, f64)> = None;
    let mut scanned = 0usize;
    let band = (1 << 18) / reference.width().max(1) + 1;
    let mut v0 = 0usize;
    while v0 < reference.height() {
        let v1 = (v0 + band).min(reference.height()) - 1;
        let window = reference.read_window(PixelRect::new(
            0,
            reference.width() as i64 - 1,
            v0 as i64,
            v1 as i64,
        ))?;
        for (u, v, h) in window.iter_valid() {
            scanned += 1;
            let (px, py, ph) = uv_to_world(u as f64, v as f64, gt, h);
            let d2 = dist3(query_point, (px, py, ph));
            let better = match &best {
                None => true,
                Some((bd2, bv, bu, _)) => (d2, v, u) < (*bd2, *bv, *bu),
            };
            if better {
                best = Some((d2, v, u, h));
            }
        }
        v0 = v1 + 1;
    }
    match best {
        Some((d2, v, u, h)) => Ok(NnResult {
            ref_point: uv_to_world(u as f64, v as f64, gt, h),
            distance: d2.sqrt(),
            candidates_scanned: scanned,
        }),
        None => Err(Error::AllNodata),
    }
}

#[inline]
fn dist3(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    let dz = a.2 - b.2;
    dx * dx + dy * dy + dz * dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoTransform;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_grid(width: usize, height: usize, heights: Vec<f64>) -> DsmGrid {
        DsmGrid::from_heights(
            width,
            height,
            heights,
            GeoTransform::new(0.0, 0.0, 1.0, 1.0),
            -9999.0,
        )
        .unwrap()
    }

    fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize, nodata_frac: f64) -> DsmGrid {
        let heights: Vec<f64> = (0..w * h)
            .map(|_| {
                if rng.random::<f64>() < nodata_frac {
                    -9999.0
                } else {
                    rng.random_range(-10.0..10.0)
                }
            })
            .collect();
        unit_grid(w, h, heights)
    }

    #[test]
    fn coincident_height_gives_zero_radius_single_pixel() {
        let mut heights = vec![5.0; 100];
        heights[5 * 10 + 5] = 10.0;
        let g = unit_grid(10, 10, heights);
        let b = initial_bound((5.0, 5.0, 10.0), &g).unwrap();
        assert_eq!(b.anchor_pixel, (5, 5));
        assert_eq!(b.radius_d, 0.0);
        assert_eq!(b.rect, PixelRect::new(5, 5, 5, 5));
        let r = nn_search((5.0, 5.0, 10.0), &g, &b).unwrap();
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.candidates_scanned, 1);
    }

    #[test]
    fn height_difference_sets_rect_radius() {
        // d = |10 - 7| = 3 at 1 m GSD: rect spans +-3 px around the anchor.
        let g = unit_grid(11, 11, vec![7.0; 121]);
        let b = initial_bound((5.0, 5.0, 10.0), &g).unwrap();
        assert_abs_diff_eq!(b.radius_d, 3.0);
        assert_eq!(b.rect, PixelRect::new(2, 8, 2, 8));
    }

    #[test]
    fn nodata_anchor_falls_back_to_ring_scan() {
        // Anchor (5,5) nodata; nearest valid pixel 2 px east with h = 9.
        // radius = sqrt(2^2 + 0^2 + 1^2) = sqrt(5).
        let mut heights = vec![-9999.0; 121];
        heights[5 * 11 + 7] = 9.0;
        let g = unit_grid(11, 11, heights);
        let b = initial_bound((5.0, 5.0, 10.0), &g).unwrap();
        assert_eq!(b.anchor_pixel, (7, 5));
        assert_abs_diff_eq!(b.radius_d, 5.0f64.sqrt(), epsilon = 1e-12);
        let r = nn_search((5.0, 5.0, 10.0), &g, &b).unwrap();
        assert_abs_diff_eq!(r.distance, 5.0f64.sqrt(), epsilon = 1e-12);
        assert_eq!(r.ref_point, (7.0, 5.0, 9.0));
    }

    #[test]
    fn off_extent_query_is_no_overlap() {
        let g = unit_grid(4, 4, vec![0.0; 16]);
        assert!(matches!(
            initial_bound((40.0, 2.0, 0.0), &g),
            Err(Error::NoOverlap)
        ));
    }

    #[test]
    fn all_nodata_within_ring_limit() {
        let g = unit_grid(9, 9, vec![-9999.0; 81]);
        assert!(matches!(
            initial_bound_with_ring_limit((4.0, 4.0, 0.0), &g, 3),
            Err(Error::AllNodata)
        ));
    }

    #[test]
    fn matches_brute_force_on_random_rasters() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..40 {
            let g = random_grid(&mut rng, 23, 17, 0.3);
            for _ in 0..25 {
                let q = (
                    rng.random_range(0.0..22.0),
                    rng.random_range(0.0..16.0),
                    rng.random_range(-12.0..12.0),
                );
                let fast = nn_query(q, &g);
                let slow = brute_force_nn(q, &g);
                match (fast, slow) {
                    (Ok(a), Ok(b)) => {
                        assert_eq!(a.distance, b.distance, "case {case} query {q:?}");
                        assert_eq!(a.ref_point, b.ref_point, "case {case} query {q:?}");
                        assert!(a.candidates_scanned <= b.candidates_scanned);
                    }
                    (Err(Error::AllNodata), Err(Error::AllNodata)) => {}
                    (a, b) => panic!("disagree: {a:?} vs {b:?}"),
                }
            }
        }
    }

    #[test]
    fn brute_force_agrees_with_independent_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let g = random_grid(&mut rng, 7, 7, 0.2);
        for _ in 0..50 {
            let q = (
                rng.random_range(0.0..6.0),
                rng.random_range(0.0..6.0),
                rng.random_range(-12.0..12.0),
            );
            // Second, independently written exhaustive scan.
            let mut best: Option<((f64, f64, f64), f64)> = None;
            for v in 0..7i64 {
                for u in 0..7i64 {
                    if let Some(h) = g.sample_pixel(u, v) {
                        let p = (u as f64, v as f64, h);
                        let d = ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2) + (q.2 - p.2).powi(2))
                            .sqrt();
                        let replace = match &best {
                            None => true,
                            Some((_, bd)) => d < *bd,
                        };
                        if replace {
                            best = Some((p, d));
                        }
                    }
                }
            }
            let (p, d) = best.unwrap();
            let r = brute_force_nn(q, &g).unwrap();
            assert_abs_diff_eq!(r.distance, d, epsilon = 1e-12);
            assert_eq!(r.ref_point, p);
        }
    }

    #[test]
    fn bound_validity_and_memory_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_grid(&mut rng, 64, 64, 0.25);
        for _ in 0..200 {
            let q = (
                rng.random_range(0.0..63.0),
                rng.random_range(0.0..63.0),
                rng.random_range(-11.0..11.0),
            );
            let Ok(b) = initial_bound(q, &g) else { continue };
            let Ok(r) = nn_search(q, &g, &b) else { continue };
            assert!(r.distance <= b.radius_d + 1e-12);
            let side = 2 * ((b.radius_d / 1.0).ceil() as usize) + 1;
            assert_eq!(
                (b.rect.u_max - b.rect.u_min + 1) as usize,
                side,
                "rect side must be 2*ceil(d/gsd)+1 before clipping"
            );
            assert!(r.candidates_scanned <= side * side);
        }
    }

    #[test]
    fn uniform_flat_raster_zero_distance_at_center() {
        let g = unit_grid(6, 6, vec![0.0; 36]);
        let r = nn_query((3.0, 2.0, 0.0), &g).unwrap();
        assert_eq!(r.distance, 0.0);
    }

    #[test]
    fn single_valid_pixel_is_found() {
        let mut heights = vec![-9999.0; 49];
        heights[3 * 7 + 2] = 4.0;
        let g = unit_grid(7, 7, heights);
        let r = brute_force_nn((6.0, 6.0, 0.0), &g).unwrap();
        assert_eq!(r.ref_point, (2.0, 3.0, 4.0));
        // The bounded search finds it too (ring scan anchors on it).
        let r2 = nn_query((6.0, 6.0, 0.0), &g).unwrap();
        assert_eq!(r2.ref_point, r.ref_point);
    }

    #[test]
    fn shrinking_residuals_shrink_candidate_counts() {
        let g = unit_grid(64, 64, vec![1.0; 64 * 64]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let queries: Vec<(f64, f64)> = (0..100)
            .map(|_| (rng.random_range(5.0..58.0), rng.random_range(5.0..58.0)))
            .collect();
        let mean_scanned = |dz: f64| -> f64 {
            let mut total = 0usize;
            for &(x, y) in &queries {
                let r = nn_query((x, y, 1.0 + dz), &g).unwrap();
                total += r.candidates_scanned;
            }
            total as f64 / queries.len() as f64
        };
        // Pose B (residual 1 m) must scan no more than pose A (residual 3 m).
        assert!(mean_scanned(1.0) <= mean_scanned(3.0));
    }

    #[test]
    fn exactness_with_skewed_geotransform() {
        let gt = GeoTransform {
            x_origin: 10.0,
            y_origin: 20.0,
            x_scale: 0.8,
            y_scale: -0.9,
            x_skew: 0.1,
            y_skew: -0.05,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let heights: Vec<f64> = (0..900).map(|_| rng.random_range(-5.0..5.0)).collect();
        let g = DsmGrid::from_heights(30, 30, heights, gt, -9999.0).unwrap();
        for _ in 0..100 {
            let u = rng.random_range(1.0..28.0);
            let v = rng.random_range(1.0..28.0);
            let (x, y, _) = uv_to_world(u, v, &gt, 0.0);
            let q = (x, y, rng.random_range(-6.0..6.0));
            let fast = nn_query(q, &g).unwrap();
            let slow = brute_force_nn(q, &g).unwrap();
            assert_eq!(fast.distance, slow.distance);
            assert_eq!(fast.ref_point, slow.ref_point);
        }
    }
}
