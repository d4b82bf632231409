//! Motion averaging: global pose estimation from weighted relative poses.
//!
//! Rotations are synchronized by the spectral chordal relaxation — the
//! three smallest eigenvectors of the rotation-block graph Laplacian,
//! each vertex block projected back to SO(3) — and translations follow
//! from a weighted linear least squares with the rotations fixed. A
//! greedy maximum-weight spanning-tree solver serves as the baseline the
//! averaged solution is compared against.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dsu, SceneGraph};
use crate::se3::RigidTransform;
use crate::sparse::{
    block_identity, fill_reducing_order, BlockCsc, BlockLdl, LdlFactor, SymCsc, BLOCK_ZERO,
};

/// Globally consistent poses, one per scene-graph vertex. The anchor's
/// pose is the identity; every other pose maps that DSM's frame into the
/// anchor frame.
#[derive(Debug, Clone)]
pub struct GlobalPoses {
    pub anchor: usize,
    pub poses: Vec<RigidTransform>,
    /// Weighted consistency objective of the solution, when computed.
    pub objective: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseEntryWire {
    id: usize,
    rotation: Vec<f64>,
    translation: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct GlobalPosesWire {
    anchor: usize,
    poses: Vec<PoseEntryWire>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
}

impl Serialize for GlobalPoses {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let poses = self
            .poses
            .iter()
            .enumerate()
            .map(|(id, t)| {
                let mut rotation = Vec::with_capacity(9);
                for r in 0..3 {
                    for c in 0..3 {
                        rotation.push(t.rotation[(r, c)]);
                    }
                }
                PoseEntryWire {
                    id,
                    rotation,
                    translation: [t.translation.x, t.translation.y, t.translation.z],
                }
            })
            .collect();
        GlobalPosesWire {
            anchor: self.anchor,
            poses,
            objective: self.objective,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GlobalPoses {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let wire = GlobalPosesWire::deserialize(d)?;
        let mut poses = vec![RigidTransform::identity(); wire.poses.len()];
        for p in &wire.poses {
            if p.id >= poses.len() || p.rotation.len() != 9 {
                return Err(D::Error::custom("malformed pose entry"));
            }
            poses[p.id] = RigidTransform {
                rotation: Matrix3::from_row_slice(&p.rotation),
                translation: Vector3::new(p.translation[0], p.translation[1], p.translation[2]),
            };
        }
        Ok(GlobalPoses {
            anchor: wire.anchor,
            poses,
            objective: wire.objective,
        })
    }
}

impl GlobalPoses {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidInput(format!("poses serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("poses JSON: {e}")))
    }
}

/// Nearest rotation in the Frobenius norm: SVD m = U S V^T, then
/// R = U diag(1, 1, det(U V^T)) V^T.
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let sigma = svd.singular_values;
    if sigma[0] == 0.0 || sigma[1] <= sigma[0] * 1e-13 {
        return Err(Error::DegenerateMatrix);
    }
    let u = svd
        .u
        .ok_or_else(|| Error::NumericalFailure("SVD produced no U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::NumericalFailure("SVD produced no V^T".into()))?;
    let d = (u * v_t).determinant().signum();
    Ok(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t)
}

fn check_solvable(g: &SceneGraph) -> Result<()> {
    let comps = g.components();
    if comps.len() > 1 {
        return Err(Error::DisconnectedGraph(comps));
    }
    if g.edges.iter().any(|e| !(e.weight > 0.0)) {
        return Err(Error::InvalidInput(
            "scene graph edges must carry positive weights (run assign_weights)".into(),
        ));
    }
    Ok(())
}

fn check_anchor(g: &SceneGraph, anchor: usize) -> Result<()> {
    if anchor >= g.n_vertices() {
        return Err(Error::InvalidInput(format!(
            "anchor {anchor} out of range for {} vertices",
            g.n_vertices()
        )));
    }
    Ok(())
}

/// Global rotations by spectral chordal relaxation, gauge-fixed so the
/// anchor rotation is exactly the identity.
pub fn rotation_average(g: &SceneGraph, anchor: usize) -> Result<Vec<Matrix3<f64>>> {
    check_anchor(g, anchor)?;
    check_solvable(g)?;
    let n = g.n_vertices();
    if n == 1 {
        return Ok(vec![Matrix3::identity()]);
    }

    // Block Laplacian: diagonal (sum_j w_ij) I, off-diagonal -w_ij R_ij.
    let mut triplets: Vec<(usize, usize, crate::sparse::Block)> =
        Vec::with_capacity(n + 2 * g.edges.len());
    let mut degree = vec![0.0f64; n];
    for e in &g.edges {
        degree[e.i] += e.weight;
        degree[e.j] += e.weight;
        let r = &e.relative.rotation;
        let mut fw = BLOCK_ZERO;
        for a in 0..3 {
            for b in 0..3 {
                fw[3 * a + b] = -e.weight * r[(a, b)];
            }
        }
        let mut bw = BLOCK_ZERO;
        for a in 0..3 {
            for b in 0..3 {
                bw[3 * b + a] = fw[3 * a + b];
            }
        }
        triplets.push((e.i, e.j, fw));
        triplets.push((e.j, e.i, bw));
    }
    let mean_degree = degree.iter().sum::<f64>() / n as f64;
    let shift = mean_degree * 1e-8;
    for (i, &deg) in degree.iter().enumerate() {
        triplets.push((i, i, block_identity(deg)));
    }
    let laplacian = BlockCsc::from_triplets(n, &triplets);

    let block_edges: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.i, e.j)).collect();
    let order = fill_reducing_order(n, &block_edges);
    let factor = BlockLdl::new(&laplacian, order, shift)?;

    // Seed the inverse subspace iteration with the spanning-tree chaining;
    // on a noise-free graph that is already the exact null space.
    let tree = spanning_tree_rotations(g, anchor)?;
    let mut cols: [Vec<f64>; 3] = [vec![0.0; 3 * n], vec![0.0; 3 * n], vec![0.0; 3 * n]];
    for (i, r) in tree.iter().enumerate() {
        // Block row i of the null-space basis is R_i^T.
        for a in 0..3 {
            for (c, col) in cols.iter_mut().enumerate() {
                col[3 * i + a] = r[(c, a)];
            }
        }
    }

    let tol = mean_degree * 1e-10;
    let mut ritz = [0.0f64; 3];
    let mut converged = false;
    let mut work = vec![0.0f64; 3 * n];
    for _ in 0..500 {
        for col in cols.iter_mut() {
            factor.solve(col);
        }
        orthonormalize(&mut cols);

        // Rayleigh-Ritz on the unshifted Laplacian.
        let mut lx: [Vec<f64>; 3] = [vec![0.0; 3 * n], vec![0.0; 3 * n], vec![0.0; 3 * n]];
        for (k, col) in cols.iter().enumerate() {
            laplacian.matvec(col, &mut lx[k]);
        }
        let mut b = Matrix3::zeros();
        for r in 0..3 {
            for c in 0..3 {
                b[(r, c)] = dot(&cols[r], &lx[c]);
            }
        }
        b = (b + b.transpose()) * 0.5;
        let eig = b.symmetric_eigen();
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b2| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b2]));

        let mut rotated: [Vec<f64>; 3] =
            [vec![0.0; 3 * n], vec![0.0; 3 * n], vec![0.0; 3 * n]];
        for (k, &src) in idx.iter().enumerate() {
            ritz[k] = eig.eigenvalues[src];
            for t in 0..3 * n {
                rotated[k][t] = (0..3)
                    .map(|c| cols[c][t] * eig.eigenvectors[(c, src)])
                    .sum();
            }
        }
        cols = rotated;

        let mut residual = 0.0f64;
        for (k, col) in cols.iter().enumerate() {
            laplacian.matvec(col, &mut work);
            let mut r2 = 0.0;
            for t in 0..3 * n {
                let r = work[t] - ritz[k] * col[t];
                r2 += r * r;
            }
            residual = residual.max(r2.sqrt());
        }
        if residual <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(
            "rotation eigen-solve did not converge".into(),
        ));
    }

    // Vertex blocks B_i (approximately R_i^T up to one global orthogonal
    // gauge). Repair a possibly improper gauge, project every block to
    // SO(3), then left-multiply by the anchor's transpose.
    let block = |i: usize, cols: &[Vec<f64>; 3]| -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for a in 0..3 {
            for c in 0..3 {
                m[(a, c)] = cols[c][3 * i + a];
            }
        }
        m
    };
    let det_sum: f64 = (0..n).map(|i| block(i, &cols).determinant()).sum();
    if det_sum < 0.0 {
        for t in 0..3 * n {
            cols[2][t] = -cols[2][t];
        }
    }
    let mut rotations = Vec::with_capacity(n);
    for i in 0..n {
        rotations.push(project_to_so3(&block(i, &cols).transpose())?);
    }
    let anchor_t = rotations[anchor].transpose();
    for r in rotations.iter_mut() {
        *r = anchor_t * *r;
    }
    rotations[anchor] = Matrix3::identity();
    Ok(rotations)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthonormalize(cols: &mut [Vec<f64>; 3]) {
    for k in 0..3 {
        for j in 0..k {
            let (head, tail) = cols.split_at_mut(k);
            let proj = dot(&head[j], &tail[0]);
            for t in 0..tail[0].len() {
                tail[0][t] -= proj * head[j][t];
            }
        }
        let norm = dot(&cols[k], &cols[k]).sqrt();
        if norm > 0.0 {
            cols[k].iter_mut().for_each(|x| *x /= norm);
        }
    }
}

/// Rotations chained along the maximum-weight spanning tree; used as the
/// eigensolver seed and by the greedy baseline.
fn spanning_tree_rotations(g: &SceneGraph, anchor: usize) -> Result<Vec<Matrix3<f64>>> {
    let poses = greedy_mst_poses(g, anchor)?;
    Ok(poses.into_iter().map(|p| p.rotation).collect())
}

/// Global translations with rotations fixed: per-axis weighted scalar
/// Laplacian solve with the anchor pinned to zero.
pub fn translation_solve(
    g: &SceneGraph,
    rotations: &[Matrix3<f64>],
    anchor: usize,
) -> Result<Vec<Vector3<f64>>> {
    check_anchor(g, anchor)?;
    check_solvable(g)?;
    let n = g.n_vertices();
    if rotations.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} rotations for {} vertices",
            rotations.len(),
            n
        )));
    }
    if n == 1 {
        return Ok(vec![Vector3::zeros()]);
    }

    // Unknown index for every non-anchor vertex.
    let mut index = vec![usize::MAX; n];
    let mut next = 0usize;
    for (v, ix) in index.iter_mut().enumerate() {
        if v != anchor {
            *ix = next;
            next += 1;
        }
    }
    let m = n - 1;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = [vec![0.0f64; m], vec![0.0f64; m], vec![0.0f64; m]];
    let mut reduced_edges: Vec<(usize, usize)> = Vec::new();
    for e in &g.edges {
        let w = e.weight;
        // Residual R_i t_ij + t_i - t_j with c = R_i t_ij constant.
        let c = rotations[e.i] * e.relative.translation;
        let (ii, jj) = (index[e.i], index[e.j]);
        if ii != usize::MAX {
            triplets.push((ii, ii, w));
            for a in 0..3 {
                rhs[a][ii] -= w * c[a];
            }
        }
        if jj != usize::MAX {
            triplets.push((jj, jj, w));
            for a in 0..3 {
                rhs[a][jj] += w * c[a];
            }
        }
        if ii != usize::MAX && jj != usize::MAX {
            triplets.push((ii, jj, -w));
            triplets.push((jj, ii, -w));
            reduced_edges.push((ii, jj));
        }
    }
    let a = SymCsc::from_triplets(m, &triplets);
    let order = fill_reducing_order(m, &reduced_edges);
    let factor = LdlFactor::new(&a, order)?;
    for r in rhs.iter_mut() {
        factor.solve(r);
    }
    let mut out = vec![Vector3::zeros(); n];
    for v in 0..n {
        if v != anchor {
            let ix = index[v];
            out[v] = Vector3::new(rhs[0][ix], rhs[1][ix], rhs[2][ix]);
        }
    }
    Ok(out)
}

/// The weighted consistency objective: for every edge,
/// w (|R_ij - R_i^T R_j|_F^2 + |R_i t_ij + t_i - t_j|^2).
pub fn consistency_objective(g: &SceneGraph, poses: &[RigidTransform]) -> f64 {
    let mut total = 0.0;
    for e in &g.edges {
        let ri = &poses[e.i].rotation;
        let rj = &poses[e.j].rotation;
        let rot_res = (e.relative.rotation - ri.transpose() * rj).norm_squared();
        let t_res = (ri * e.relative.translation + poses[e.i].translation
            - poses[e.j].translation)
            .norm_squared();
        total += e.weight * (rot_res + t_res);
    }
    total
}

/// Decoupled closed-form solve: rotation averaging, then the translation
/// least squares, reporting the final objective.
pub fn motion_average(g: &SceneGraph, anchor: usize) -> Result<GlobalPoses> {
    let rotations = rotation_average(g, anchor)?;
    let translations = translation_solve(g, &rotations, anchor)?;
    let poses: Vec<RigidTransform> = rotations
        .into_iter()
        .zip(translations)
        .map(|(rotation, translation)| RigidTransform {
            rotation,
            translation,
        })
        .collect();
    let objective = consistency_objective(g, &poses);
    Ok(GlobalPoses {
        anchor,
        poses,
        objective: Some(objective),
    })
}

fn greedy_mst_poses(g: &SceneGraph, anchor: usize) -> Result<Vec<RigidTransform>> {
    check_anchor(g, anchor)?;
    let n = g.n_vertices();
    // Kruskal on descending weight, ties broken by smaller (i, j).
    let mut order: Vec<usize> = (0..g.edges.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&g.edges[a], &g.edges[b]);
        eb.weight
            .total_cmp(&ea.weight)
            .then(ea.i.cmp(&eb.i))
            .then(ea.j.cmp(&eb.j))
    });
    let mut dsu = Dsu::new(n);
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n]; // (neighbor, edge idx)
    for &k in &order {
        let e = &g.edges[k];
        if dsu.union(e.i, e.j) {
            adjacency[e.i].push((e.j, k));
            adjacency[e.j].push((e.i, k));
        }
    }

    let mut poses = vec![RigidTransform::identity(); n];
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen[anchor] = true;
    queue.push_back(anchor);
    while let Some(v) = queue.pop_front() {
        for &(u, k) in &adjacency[v] {
            if seen[u] {
                continue;
            }
            let e = &g.edges[k];
            // T_ij maps frame j into frame i; compose along the tree path.
            poses[u] = if e.j == u {
                poses[v].compose(&e.relative)
            } else {
                poses[v].compose(&e.relative.inverse())
            };
            seen[u] = true;
            queue.push_back(u);
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::DisconnectedGraph(g.components()));
    }
    Ok(poses)
}

/// Greedy baseline: maximum-weight spanning tree via Kruskal, poses
/// composed along tree paths from the anchor.
pub fn greedy_mst_solve(g: &SceneGraph, anchor: usize) -> Result<GlobalPoses> {
    let poses = greedy_mst_poses(g, anchor)?;
    let objective = consistency_objective(g, &poses);
    Ok(GlobalPoses {
        anchor,
        poses,
        objective: Some(objective),
    })
}
