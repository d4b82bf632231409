//! Scene graph assembly: overlap scoring, pairwise registration of all
//! sufficiently overlapping DSM pairs, and edge weighting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{uv_to_world, world_to_uv};
use crate::icp::{dsm_icp, IcpParams};
use crate::raster::{DsmGrid, PixelRect};
use crate::se3::RigidTransform;

/// Rasters above this pixel count have their overlap computed on a
/// decimated lattice (every 4th pixel per axis).
const DECIMATION_THRESHOLD: usize = 10_000_000;

/// One registered DSM pair. `relative` maps points of DSM `j` into DSM
/// `i`'s frame, i.e. `dsm_icp(moving = j, reference = i)`.
#[derive(Debug, Clone)]
pub struct SceneEdge {
    pub i: usize,
    pub j: usize,
    pub relative: RigidTransform,
    /// Pairwise registration error err_ij, meters.
    pub err: f64,
    /// Overlap score s_ij in [0,1].
    pub overlap: f64,
    /// Registration quality r_ij in (0,1].
    pub quality: f64,
    /// Edge weight w_ij = s_ij * r_ij.
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneVertex {
    pub id: usize,
    pub path: String,
}

/// Vertices are DSMs, edges carry relative poses with reliability weights.
#[derive(Debug, Clone, Default)]
pub struct SceneGraph {
    pub vertices: Vec<SceneVertex>,
    pub edges: Vec<SceneEdge>,
}

#[derive(Serialize, Deserialize)]
struct SceneEdgeWire {
    i: usize,
    j: usize,
    rotation: Vec<f64>,
    translation: [f64; 3],
    err: f64,
    overlap: f64,
    quality: f64,
    weight: f64,
}

impl Serialize for SceneEdge {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut rotation = Vec::with_capacity(9);
        for r in 0..3 {
            for c in 0..3 {
                rotation.push(self.relative.rotation[(r, c)]);
            }
        }
        SceneEdgeWire {
            i: self.i,
            j: self.j,
            rotation,
            translation: [
                self.relative.translation.x,
                self.relative.translation.y,
                self.relative.translation.z,
            ],
            err: self.err,
            overlap: self.overlap,
            quality: self.quality,
            weight: self.weight,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SceneEdge {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let wire = SceneEdgeWire::deserialize(d)?;
        if wire.rotation.len() != 9 {
            return Err(D::Error::custom("edge rotation must have 9 entries"));
        }
        Ok(SceneEdge {
            i: wire.i,
            j: wire.j,
            relative: RigidTransform {
                rotation: nalgebra::Matrix3::from_row_slice(&wire.rotation),
                translation: nalgebra::Vector3::new(
                    wire.translation[0],
                    wire.translation[1],
                    wire.translation[2],
                ),
            },
            err: wire.err,
            overlap: wire.overlap,
            quality: wire.quality,
            weight: wire.weight,
        })
    }
}

impl Serialize for SceneGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            vertices: &'a [SceneVertex],
            edges: &'a [SceneEdge],
        }
        Wire {
            vertices: &self.vertices,
            edges: &self.edges,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SceneGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            vertices: Vec<SceneVertex>,
            edges: Vec<SceneEdge>,
        }
        let w = Wire::deserialize(d)?;
        Ok(SceneGraph {
            vertices: w.vertices,
            edges: w.edges,
        })
    }
}

impl SceneGraph {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidInput(format!("graph serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: SceneGraph = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("graph JSON: {e}")))?;
        for e in &g.edges {
            if e.i >= e.j || e.j >= g.vertices.len() {
                return Err(Error::InvalidInput(format!(
                    "edge ({}, {}) out of range or not canonically oriented",
                    e.i, e.j
                )));
            }
        }
        Ok(g)
    }

    /// Connected components over the present edges, each sorted.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.vertices.len();
        let mut dsu = Dsu::new(n);
        for e in &self.edges {
            dsu.union(e.i, e.j);
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for v in 0..n {
            groups.entry(dsu.find(v)).or_default().push(v);
        }
        groups.into_values().collect()
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }
}

/// Union-find with path compression.
pub(crate) struct Dsu {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl Dsu {
    pub(crate) fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (hi, lo) = if self.rank[ra] >= self.rank[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[lo] = hi;
        if self.rank[hi] == self.rank[lo] {
            self.rank[hi] += 1;
        }
        true
    }
}

/// Overlap score s in [0,1]: valid pixels of the sparser raster whose
/// centers project onto valid pixels of the other, divided by the sparser
/// raster's valid count. Symmetric by construction; 1.0 for nested
/// coverage; 0.0 for disjoint footprints.
pub fn overlap_score(a: &DsmGrid, b: &DsmGrid) -> Result<f64> {
    // Orient deterministically so that score(a,b) == score(b,a) exactly.
    let (small, big) = order_for_overlap(a, b)?;
    let step = if small.pixel_count() > DECIMATION_THRESHOLD {
        4
    } else {
        1
    };
    let gt_s = small.geotransform();
    let gt_b = big.geotransform();
    let mut n_valid = 0u64;
    let mut n_overlap = 0u64;
    let band = ((1 << 20) / small.width().max(1) + 1) * step;
    let mut v0 = 0usize;
    while v0 < small.height() {
        let v1 = (v0 + band).min(small.height()) - 1;
        let win = small.read_window(PixelRect::new(
            0,
            small.width() as i64 - 1,
            v0 as i64,
            v1 as i64,
        ))?;
        for (u, v, _) in win.iter_valid() {
            if u % step != 0 || v % step != 0 {
                continue;
            }
            n_valid += 1;
            let (x, y, _) = uv_to_world(u as f64, v as f64, gt_s, 0.0);
            let Ok((ub, vb)) = world_to_uv(x, y, gt_b) else {
                continue;
            };
            let (ub, vb) = (ub.round() as i64, vb.round() as i64);
            if big.sample_pixel(ub, vb).is_some() {
                n_overlap += 1;
            }
        }
        v0 = v1 + 1;
    }
    if n_valid == 0 {
        return Ok(0.0);
    }
    Ok(n_overlap as f64 / n_valid as f64)
}

fn order_for_overlap<'a>(a: &'a DsmGrid, b: &'a DsmGrid) -> Result<(&'a DsmGrid, &'a DsmGrid)> {
    let ka = overlap_order_key(a)?;
    let kb = overlap_order_key(b)?;
    if ka <= kb {
        Ok((a, b))
    } else {
        Ok((b, a))
    }
}

fn overlap_order_key(g: &DsmGrid) -> Result<(usize, usize, u64, u64, usize, usize)> {
    let gt = g.geotransform();
    Ok((
        g.valid_count()?,
        g.id(),
        gt.x_origin.to_bits(),
        gt.y_origin.to_bits(),
        g.width(),
        g.height(),
    ))
}

/// Register every pair with overlap above `overlap_threshold` and insert
/// the resulting edges. Pairs where ICP fails with too few or degenerate
/// correspondences are skipped with a warning; the graph must come out
/// connected.
pub fn build_graph(
    dsms: &[DsmGrid],
    overlap_threshold: f64,
    icp_params: &IcpParams,
) -> Result<SceneGraph> {
    if dsms.len() < 2 {
        return Err(Error::NotEnoughDsms(dsms.len()));
    }
    let n = dsms.len();
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = overlap_score(&dsms[i], &dsms[j])?;
            if s > overlap_threshold {
                candidates.push((i, j, s));
            }
        }
    }

    let results: Vec<Result<Option<SceneEdge>>> = candidates
        .par_iter()
        .map(|&(i, j, s)| {
            match dsm_icp(&dsms[j], &dsms[i], icp_params, &RigidTransform::identity()) {
                Ok(report) => Ok(Some(SceneEdge {
                    i,
                    j,
                    relative: report.transform,
                    err: report.err,
                    overlap: s,
                    quality: 0.0,
                    weight: 0.0,
                })),
                Err(
                    e @ (Error::TooFewCorrespondences(_)
                    | Error::NoOverlap
                    | Error::AllNodata
                    | Error::NoValidPixels
                    | Error::DegenerateGeometry),
                ) => {
                    log::warn!("skipping pair ({i}, {j}): {e}");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut edges = Vec::new();
    for r in results {
        if let Some(edge) = r? {
            edges.push(edge);
        }
    }

    let graph = SceneGraph {
        vertices: dsms
            .iter()
            .enumerate()
            .map(|(id, g)| SceneVertex {
                id,
                path: g
                    .source_path()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            })
            .collect(),
        edges,
    };
    let components = graph.components();
    if components.len() > 1 {
        return Err(Error::DisconnectedGraph(components));
    }
    Ok(graph)
}

/// Edge weights w_ij = s_ij * r_ij with the quality r_ij given by the
/// softmax of negative registration errors over all edges, normalized so
/// the best-quality edge has r = 1. A single edge therefore gets exactly
/// w = s, and only relative weights reach the downstream solve.
pub fn assign_weights(mut g: SceneGraph) -> SceneGraph {
    if g.edges.is_empty() {
        return g;
    }
    let z: f64 = g.edges.iter().map(|e| (-e.err).exp()).sum();
    let mut max_r = 0.0f64;
    for e in &mut g.edges {
        e.quality = (-e.err).exp() / z;
        max_r = max_r.max(e.quality);
    }
    for e in &mut g.edges {
        e.quality /= max_r;
        e.weight = e.overlap * e.quality;
    }
    g
}
