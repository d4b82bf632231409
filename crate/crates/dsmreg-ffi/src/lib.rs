//! C ABI for dsmreg: open rasters, read windows, register pairs, and run
//! motion averaging from other languages.
//!
//! Handles are opaque pointers owned by this library; every function
//! returns a [`DsmregStatus`] and the last failure message is retrievable
//! per thread via [`dsmreg_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use dsmreg::error::Error;
use dsmreg::graph::{SceneEdge, SceneGraph, SceneVertex};
use dsmreg::icp::{dsm_icp, IcpParams};
use dsmreg::io::load_dsm;
use dsmreg::motion::{greedy_mst_solve, motion_average, GlobalPoses};
use dsmreg::raster::{DsmGrid, PixelRect};
use dsmreg::se3::RigidTransform;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsmregStatus {
    Ok = 0,
    /// File could not be read or written.
    Io = 1,
    /// File exists but does not parse as a supported raster.
    Parse = 2,
    /// Inputs do not overlap where they must.
    NoOverlap = 3,
    /// Geometry too degenerate to estimate a pose.
    Degenerate = 4,
    /// Scene graph is unusable (disconnected, too few rasters).
    Graph = 5,
    /// A numerical routine failed to converge.
    Numeric = 6,
    /// Bad argument from the caller (null pointer, bad range).
    InvalidArgument = 7,
    Other = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitized);
}

fn status_from(e: &Error) -> DsmregStatus {
    set_error(&e.to_string());
    match e {
        Error::Io { .. } => DsmregStatus::Io,
        Error::Parse { .. } | Error::UnsupportedFormat(_) => DsmregStatus::Parse,
        Error::NoOverlap | Error::NoOverlappingPairs | Error::NoInliers => DsmregStatus::NoOverlap,
        Error::AllNodata
        | Error::NoValidPixels
        | Error::DegenerateGeometry
        | Error::DegenerateMatrix
        | Error::TooFewCorrespondences(_) => DsmregStatus::Degenerate,
        Error::DisconnectedGraph(_) | Error::NotEnoughDsms(_) => DsmregStatus::Graph,
        Error::NumericalFailure(_) => DsmregStatus::Numeric,
        Error::InvalidInput(_) | Error::SingularTransform | Error::OutOfBounds { .. } => {
            DsmregStatus::InvalidArgument
        }
        Error::EmptyResult => DsmregStatus::Other,
    }
}

fn invalid(message: &str) -> DsmregStatus {
    set_error(message);
    DsmregStatus::InvalidArgument
}

/// Opaque raster handle.
pub struct DsmregGrid {
    inner: DsmGrid,
}

/// ICP tuning parameters; get defaults from `dsmreg_icp_params_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DsmregIcpParams {
    pub n_queries: u64,
    pub max_iterations: u64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub trim_fraction: f64,
    pub correspondence_reject: f64,
    pub seed: u64,
}

impl From<DsmregIcpParams> for IcpParams {
    fn from(p: DsmregIcpParams) -> Self {
        IcpParams {
            n_queries: p.n_queries as usize,
            max_iterations: p.max_iterations as usize,
            rel_tol: p.rel_tol,
            abs_tol: p.abs_tol,
            trim_fraction: p.trim_fraction,
            correspondence_reject: p.correspondence_reject,
            seed: p.seed,
        }
    }
}

/// Result of one pairwise registration. `rotation` is row-major; the
/// transform maps moving-raster points into the reference frame.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DsmregRegistration {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub err: f64,
    pub iterations: u64,
    pub n_correspondences: u64,
    pub mean_candidates_scanned: f64,
    pub converged: bool,
}

/// One scene-graph edge: the pose maps frame `j` into frame `i`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DsmregEdge {
    pub i: u64,
    pub j: u64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub weight: f64,
}

/// One global pose (row-major rotation).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DsmregPose {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

fn pack_pose(t: &RigidTransform) -> DsmregPose {
    let mut rotation = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            rotation[3 * r + c] = t.rotation[(r, c)];
        }
    }
    DsmregPose {
        rotation,
        translation: [t.translation.x, t.translation.y, t.translation.z],
    }
}

fn unpack_pose(rotation: &[f64; 9], translation: &[f64; 3]) -> RigidTransform {
    RigidTransform {
        rotation: nalgebra::Matrix3::from_row_slice(rotation),
        translation: nalgebra::Vector3::new(translation[0], translation[1], translation[2]),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dsmreg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dsmreg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Open a raster file (format inferred). On success `*out` owns the
/// handle; release it with [`dsmreg_grid_free`].
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsmreg_grid_open(
    path: *const c_char,
    out: *mut *mut DsmregGrid,
) -> DsmregStatus {
    if path.is_null() || out.is_null() {
        return invalid("null pointer argument");
    }
    let path = match unsafe { CStr::from_ptr(path) }.to_str() {
        Ok(s) => s,
        Err(_) => return invalid("path is not valid UTF-8"),
    };
    match load_dsm(path, None) {
        Ok(grid) => {
            unsafe { *out = Box::into_raw(Box::new(DsmregGrid { inner: grid })) };
            DsmregStatus::Ok
        }
        Err(e) => status_from(&e),
    }
}

/// Release a handle returned by [`dsmreg_grid_open`]. Null is a no-op.
///
/// # Safety
/// `grid` must be a pointer from `dsmreg_grid_open` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dsmreg_grid_free(grid: *mut DsmregGrid) {
    if !grid.is_null() {
        drop(unsafe { Box::from_raw(grid) });
    }
}

/// # Safety
/// `grid` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsmreg_grid_width(grid: *const DsmregGrid) -> u64 {
    if grid.is_null() {
        return 0;
    }
    unsafe { &*grid }.inner.width() as u64
}

/// # Safety
/// `grid` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsmreg_grid_height(grid: *const DsmregGrid) -> u64 {
    if grid.is_null() {
        return 0;
    }
    unsafe { &*grid }.inner.height() as u64
}

/// # Safety
/// `grid` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsmreg_grid_nodata(grid: *const DsmregGrid) -> f64 {
    if grid.is_null() {
        return f64::NAN;
    }
    unsafe { &*grid }.inner.nodata()
}

/// Geotransform in world-file order: x_scale, y_skew, x_skew, y_scale,
/// x_origin, y_origin (center of pixel (0,0)).
///
/// # Safety
/// `grid` must be a live handle and `out` must point to 6 doubles.
#[no_mangle]
pub unsafe extern "C" fn dsmreg_grid_geotransform(
    grid: *const DsmregGrid,
    out: *mut f64,
) -> DsmregStatus {
    if grid.is_null() || out.is_null() {
        return invalid("null pointer argument");
    }
    let params = unsafe { &*grid }.inner.geotransform().to_world_file_params();
    unsafe { std::ptr::copy_nonoverlapping(params.as_ptr(), out, 6) };
    DsmregStatus::Ok
}

/// Read a window clipped to the raster extent. `heights` and `mask` must
/// hold `capacity` elements; the clipped size is returned through
/// `out_width`/`out_height` (row-major, north row first). `mask[k]` is 1
/// where the cell is valid.
///
/// # Safety
/// All pointers must be valid; `heights` and `mask` must have room for
/// `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn dsmreg_grid_read_window(
    grid: *const DsmregGrid,
    u_min: i64,
    u_max: i64,
    v_min: i64,
    v_max: i64,
    heights: *mut f64,
    mask: *mut u8,
    capacity: usize,
    out_width: *mut u64,
    out_height: *mut u64,
) -> DsmregStatus {
    if grid.is_null()
        || heights.is_null()
        || mask.is_null()
        || out_width.is_null()
        || out_height.is_null()
    {
        return invalid("null pointer argument");
    }
    let grid = &unsafe { &*grid }.inner;
    let window = match grid.read_window(PixelRect::new(u_min, u_max, v_min, v_max)) {
        Ok(w) => w,
        Err(e) => return status_from(&e),
    };
    if window.len() > capacity {
        return invalid(&format!(
            "window needs {} elements but capacity is {}",
            window.len(),
            capacity
        ));
    }
    unsafe {
        std::ptr::copy_nonoverlapping(window.heights().as_ptr(), heights, window.len());
        for (k, &valid) in window.mask().iter().enumerate() {
            *mask.add(k) = valid as u8;
        }
        *out_width = window.width() as u64;
        *out_height = window.height() as u64;
    }
    DsmregStatus::Ok
}

/// Default ICP parameters.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsmreg_icp_params_default(out: *mut DsmregIcpParams) {
    if out.is_null() {
        return;
    }
    let p = IcpParams::default();
    unsafe {
        *out = DsmregIcpParams {
            n_queries: p.n_queries as u64,
            max_iterations: p.max_iterations as u64,
            rel_tol: p.rel_tol,
            abs_tol: p.abs_tol,
            trim_fraction: p.trim_fraction,
            correspondence_reject: p.correspondence_reject,
            seed: p.seed,
        };
    }
}

/// Register `moving` onto `reference` with DSM-ICP from the identity
/// initialization. `params` may be null for defaults.
///
/// # Safety
/// `moving` and `reference` must be live handles; `out` must be valid;
/// `params` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn dsmreg_register(
    moving: *const DsmregGrid,
    reference: *const DsmregGrid,
    params: *const DsmregIcpParams,
    out: *mut DsmregRegistration,
) -> DsmregStatus {
    if moving.is_null() || reference.is_null() || out.is_null() {
        return invalid("null pointer argument");
    }
    let icp_params: IcpParams = if params.is_null() {
        IcpParams::default()
    } else {
        (unsafe { *params }).into()
    };
    let moving = &unsafe { &*moving }.inner;
    let reference = &unsafe { &*reference }.inner;
    match dsm_icp(moving, reference, &icp_params, &RigidTransform::identity()) {
        Ok(report) => {
            let pose = pack_pose(&report.transform);
            unsafe {
                *out = DsmregRegistration {
                    rotation: pose.rotation,
                    translation: pose.translation,
                    err: report.err,
                    iterations: report.iterations as u64,
                    n_correspondences: report.n_correspondences as u64,
                    mean_candidates_scanned: report.mean_candidates_scanned,
                    converged: report.converged,
                };
            }
            DsmregStatus::Ok
        }
        Err(e) => status_from(&e),
    }
}

unsafe fn solve_common(
    n_vertices: u64,
    edges: *const DsmregEdge,
    n_edges: usize,
    anchor: u64,
    poses_out: *mut DsmregPose,
    objective_out: *mut f64,
    greedy: bool,
) -> DsmregStatus {
    if (edges.is_null() && n_edges > 0) || poses_out.is_null() {
        return invalid("null pointer argument");
    }
    let n = n_vertices as usize;
    let edge_slice: &[DsmregEdge] = if n_edges == 0 {
        &[]
    } else {
        unsafe { std::slice::from_raw_parts(edges, n_edges) }
    };
    let mut scene_edges = Vec::with_capacity(n_edges);
    for e in edge_slice {
        let (i, j) = (e.i as usize, e.j as usize);
        if i >= n || j >= n || i == j {
            return invalid(&format!("edge ({}, {}) out of range", e.i, e.j));
        }
        let pose = unpack_pose(&e.rotation, &e.translation);
        // Canonicalize to i < j; the stored pose maps frame j into frame i.
        let (i, j, pose) = if i < j {
            (i, j, pose)
        } else {
            (j, i, pose.inverse())
        };
        scene_edges.push(SceneEdge {
            i,
            j,
            relative: pose,
            err: 0.0,
            overlap: 1.0,
            quality: 1.0,
            weight: e.weight,
        });
    }
    let graph = SceneGraph {
        vertices: (0..n)
            .map(|id| SceneVertex {
                id,
                path: String::new(),
            })
            .collect(),
        edges: scene_edges,
    };
    let solved: Result<GlobalPoses, Error> = if greedy {
        greedy_mst_solve(&graph, anchor as usize)
    } else {
        motion_average(&graph, anchor as usize)
    };
    match solved {
        Ok(poses) => {
            for (k, pose) in poses.poses.iter().enumerate() {
                unsafe { *poses_out.add(k) = pack_pose(pose) };
            }
            if !objective_out.is_null() {
                unsafe { *objective_out = poses.objective.unwrap_or(f64::NAN) };
            }
            DsmregStatus::Ok
        }
        Err(e) => status_from(&e),
    }
}

/// Estimate global poses by motion averaging over weighted relative
/// poses. `poses_out` must hold `n_vertices` entries; the anchor pose
/// comes back as the identity. `objective_out` may be null.
///
/// # Safety
/// `edges` must point to `n_edges` entries and `poses_out` to
/// `n_vertices` entries.
#[no_mangle]
pub unsafe extern "C" fn dsmreg_motion_average(
    n_vertices: u64,
    edges: *const DsmregEdge,
    n_edges: usize,
    anchor: u64,
    poses_out: *mut DsmregPose,
    objective_out: *mut f64,
) -> DsmregStatus {
    unsafe { solve_common(n_vertices, edges, n_edges, anchor, poses_out, objective_out, false) }
}

/// Greedy baseline: maximum-weight spanning tree chaining. Same contract
/// as [`dsmreg_motion_average`].
///
/// # Safety
/// `edges` must point to `n_edges` entries and `poses_out` to
/// `n_vertices` entries.
#[no_mangle]
pub unsafe extern "C" fn dsmreg_greedy_mst(
    n_vertices: u64,
    edges: *const DsmregEdge,
    n_edges: usize,
    anchor: u64,
    poses_out: *mut DsmregPose,
    objective_out: *mut f64,
) -> DsmregStatus {
    unsafe { solve_common(n_vertices, edges, n_edges, anchor, poses_out, objective_out, true) }
}
