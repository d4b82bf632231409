//! Minimal sparse symmetric machinery for the pose-graph solves: CSC
//! assembly, a greedy minimum-degree ordering, and an up-looking LDL^T
//! factorization. Graph Laplacians at scene-graph sizes factor in
//! microseconds to milliseconds with near-linear fill, which is what
//! keeps the global solve fast as the number of DSMs grows.


use crate::error::{Error, Result};

/// Symmetric sparse matrix in CSC form; the full pattern is stored and
/// columns are sorted by row index.
#[derive(Debug, Clone)]
pub(crate) struct SymCsc {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SymCsc {
    /// Build from (row, col, value) triplets, summing duplicates. Only
    /// entries actually provided are stored; symmetry is the caller's
    /// responsibility.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut entries: Vec<(usize, usize, f64)> =
            triplets.iter().map(|&(r, c, v)| (c, r, v)).collect();
        entries.sort_unstable_by_key(|&(c, r, _)| (c, r));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut k = 0;
        while k < entries.len() {
            let (c, r, mut v) = entries[k];
            let mut k2 = k + 1;
            while k2 < entries.len() && entries[k2].0 == c && entries[k2].1 == r {
                v += entries[k2].2;
                k2 += 1;
            }
            col_ptr[c + 1] += 1;
            row_idx.push(r);
            values.push(v);
            k = k2;
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        SymCsc {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// y = A x, using the stored (full) pattern.
    #[cfg(test)]
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.n {
            let xc = x[c];
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[p]] += self.values[p] * xc;
            }
        }
    }
}

/// Greedy exact minimum-degree ordering of an undirected graph, ties
/// broken by smallest vertex index. Returns `order` with `order[k]` = the
/// k-th vertex to eliminate. Adjacency is kept as sorted vectors so the
/// clique updates of an elimination are linear merges.
pub(crate) fn min_degree_order(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<(usize, usize)>> =
        (0..n).map(|v| std::cmp::Reverse((adj[v].len(), v))).collect();
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut merged: Vec<usize> = Vec::new();
    while let Some(std::cmp::Reverse((d, v))) = heap.pop() {
        if eliminated[v] || d != adj[v].len() {
            continue; // stale entry
        }
        eliminated[v] = true;
        order.push(v);
        let clique = std::mem::take(&mut adj[v]);
        for &u in &clique {
            // adj[u] := (adj[u] merge clique) minus {u, v}.
            merged.clear();
            merged.reserve(adj[u].len() + clique.len());
            let l = &adj[u];
            let (mut i, mut j) = (0usize, 0usize);
            while i < l.len() || j < clique.len() {
                let a = if i < l.len() { l[i] } else { usize::MAX };
                let b = if j < clique.len() { clique[j] } else { usize::MAX };
                let next = a.min(b);
                if a == next {
                    i += 1;
                }
                if b == next {
                    j += 1;
                }
                if next != u && next != v {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            heap.push(std::cmp::Reverse((adj[u].len(), u)));
        }
    }
    order
}

/// LDL^T factorization of a permuted symmetric matrix.
pub(crate) struct LdlFactor {
    n: usize,
    /// perm[k] = original index placed at position k.
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl LdlFactor {
    /// Factor P A P^T = L D L^T where `perm` gives P. `a` must be
    /// symmetric with the full pattern stored.
    pub fn new(a: &SymCsc, perm: Vec<usize>) -> Result<Self> {
        let n = a.n;
        debug_assert_eq!(perm.len(), n);
        let mut iperm = vec![0usize; n];
        for (k, &old) in perm.iter().enumerate() {
            iperm[old] = k;
        }

        // Permuted upper-triangular CSC (row <= col in new indices).
        let mut tri: Vec<(usize, usize)> = Vec::new(); // (new col, source ptr)
        for c_old in 0..n {
            for p in a.col_ptr[c_old]..a.col_ptr[c_old + 1] {
                let r_old = a.row_idx[p];
                let (r_new, c_new) = (iperm[r_old], iperm[c_old]);
                if r_new <= c_new {
                    tri.push((c_new * n + r_new, p));
                }
            }
        }
        tri.sort_unstable_by_key(|&(key, _)| key);
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(tri.len());
        let mut ax = Vec::with_capacity(tri.len());
        for &(key, p) in &tri {
            let (c, r) = (key / n, key % n);
            ap[c + 1] += 1;
            ai.push(r);
            ax.push(a.values[p]);
        }
        for c in 0..n {
            ap[c + 1] += ap[c];
        }

        // Symbolic: elimination tree and column counts.
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            parent[k] = usize::MAX;
            flag[k] = k;
            for p in ap[k]..ap[k + 1] {
                let mut i = ai[p];
                while i < k && flag[i] != k {
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }

        // Numeric.
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0f64; nnz];
        let mut d = vec![0.0f64; n];
        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0usize; n];
        let mut lfill = vec![0usize; n];
        flag.iter_mut().for_each(|f| *f = usize::MAX);
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for p in ap[k]..ap[k + 1] {
                let i0 = ai[p];
                y[i0] += ax[p];
                let mut len = 0usize;
                let mut i = i0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for s in top..n {
                let i = pattern[s];
                let yi = y[i];
                y[i] = 0.0;
                let p2 = lp[i] + lfill[i];
                for p in lp[i]..p2 {
                    y[li[p]] -= lx[p] * yi;
                }
                let lki = yi / d[i];
                d[k] -= lki * yi;
                li[p2] = k;
                lx[p2] = lki;
                lfill[i] += 1;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "LDL^T pivot {k} is zero or non-finite"
                )));
            }
        }

        Ok(LdlFactor {
            n,
            perm,
            lp,
            li,
            lx,
            d,
        })
    }

    /// Solve A x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let mut y = vec![0.0f64; self.n];
        for k in 0..self.n {
            y[k] = b[self.perm[k]];
        }
        // L y' = y
        for j in 0..self.n {
            let yj = y[j];
            for p in self.lp[j]..self.lp[j + 1] {
                y[self.li[p]] -= self.lx[p] * yj;
            }
        }
        for k in 0..self.n {
            y[k] /= self.d[k];
        }
        // L^T x = y
        for j in (0..self.n).rev() {
            let mut yj = y[j];
            for p in self.lp[j]..self.lp[j + 1] {
                yj -= self.lx[p] * y[self.li[p]];
            }
            y[j] = yj;
        }
        for k in 0..self.n {
            b[self.perm[k]] = y[k];
        }
    }
}

// ---------------------------------------------------------------------------
// 3x3-block variants for the rotation synchronization system.
// ---------------------------------------------------------------------------

/// Row-major 3x3 block.
pub(crate) type Block = [f64; 9];

pub(crate) const BLOCK_ZERO: Block = [0.0; 9];

#[inline]
pub(crate) fn block_identity(scale: f64) -> Block {
    let mut b = BLOCK_ZERO;
    b[0] = scale;
    b[4] = scale;
    b[8] = scale;
    b
}

#[inline]
fn block_mul(a: &Block, b: &Block) -> Block {
    let mut c = BLOCK_ZERO;
    for r in 0..3 {
        for k in 0..3 {
            let arc = a[3 * r + k];
            for s in 0..3 {
                c[3 * r + s] += arc * b[3 * k + s];
            }
        }
    }
    c
}

#[inline]
fn block_transpose(a: &Block) -> Block {
    [a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]]
}

#[inline]
fn block_sub_assign(a: &mut Block, b: &Block) {
    for k in 0..9 {
        a[k] -= b[k];
    }
}

/// Inverse via the adjugate; None when near-singular.
fn block_inverse(a: &Block) -> Option<Block> {
    let det = a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
        + a[2] * (a[3] * a[7] - a[4] * a[6]);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    Some([
        (a[4] * a[8] - a[5] * a[7]) * inv_det,
        (a[2] * a[7] - a[1] * a[8]) * inv_det,
        (a[1] * a[5] - a[2] * a[4]) * inv_det,
        (a[5] * a[6] - a[3] * a[8]) * inv_det,
        (a[0] * a[8] - a[2] * a[6]) * inv_det,
        (a[2] * a[3] - a[0] * a[5]) * inv_det,
        (a[3] * a[7] - a[4] * a[6]) * inv_det,
        (a[1] * a[6] - a[0] * a[7]) * inv_det,
        (a[0] * a[4] - a[1] * a[3]) * inv_det,
    ])
}

/// Symmetric block sparse matrix in block-CSC form, full pattern stored,
/// rows sorted within each column.
#[derive(Debug, Clone)]
pub(crate) struct BlockCsc {
    pub n_blocks: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<Block>,
}

impl BlockCsc {
    pub fn from_triplets(n_blocks: usize, triplets: &[(usize, usize, Block)]) -> Self {
        let mut idx: Vec<usize> = (0..triplets.len()).collect();
        idx.sort_unstable_by_key(|&k| (triplets[k].1, triplets[k].0));
        let mut col_ptr = vec![0usize; n_blocks + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<Block> = Vec::with_capacity(triplets.len());
        let mut k = 0;
        while k < idx.len() {
            let (r, c, mut v) = triplets[idx[k]];
            let mut k2 = k + 1;
            while k2 < idx.len() && triplets[idx[k2]].1 == c && triplets[idx[k2]].0 == r {
                for (slot, add) in v.iter_mut().zip(triplets[idx[k2]].2.iter()) {
                    *slot += add;
                }
                k2 += 1;
            }
            col_ptr[c + 1] += 1;
            row_idx.push(r);
            values.push(v);
            k = k2;
        }
        for c in 0..n_blocks {
            col_ptr[c + 1] += col_ptr[c];
        }
        BlockCsc {
            n_blocks,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// y = A x over the scalar view (3 * n_blocks entries).
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.n_blocks {
            let xc = &x[3 * c..3 * c + 3];
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p];
                let b = &self.values[p];
                let yr = &mut y[3 * r..3 * r + 3];
                for i in 0..3 {
                    yr[i] += b[3 * i] * xc[0] + b[3 * i + 1] * xc[1] + b[3 * i + 2] * xc[2];
                }
            }
        }
    }
}

/// Up-looking LDL^T with 3x3 block pivots over a block-permuted matrix.
pub(crate) struct BlockLdl {
    n_blocks: usize,
    /// perm[k] = original block index placed at position k.
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<Block>,
    d_inv: Vec<Block>,
}

impl BlockLdl {
    /// Factor P (A + shift I) P^T. `shift` is added to the diagonal of
    /// every diagonal block.
    pub fn new(a: &BlockCsc, perm: Vec<usize>, shift: f64) -> Result<Self> {
        let n = a.n_blocks;
        debug_assert_eq!(perm.len(), n);
        let mut iperm = vec![0usize; n];
        for (k, &old) in perm.iter().enumerate() {
            iperm[old] = k;
        }

        // Permuted upper-triangular block pattern (row <= col, new ids).
        let mut tri: Vec<(usize, usize, usize)> = Vec::new(); // (col_new, row_new, src ptr)
        for c_old in 0..n {
            for p in a.col_ptr[c_old]..a.col_ptr[c_old + 1] {
                let r_old = a.row_idx[p];
                let (r_new, c_new) = (iperm[r_old], iperm[c_old]);
                if r_new <= c_new {
                    tri.push((c_new, r_new, p));
                }
            }
        }
        tri.sort_unstable();
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(tri.len());
        let mut ax: Vec<Block> = Vec::with_capacity(tri.len());
        for &(c, r, p) in &tri {
            ap[c + 1] += 1;
            ai.push(r);
            let mut v = a.values[p];
            if r == c {
                v[0] += shift;
                v[4] += shift;
                v[8] += shift;
            }
            ax.push(v);
        }
        for c in 0..n {
            ap[c + 1] += ap[c];
        }

        // Symbolic pass on the block pattern.
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            parent[k] = usize::MAX;
            flag[k] = k;
            for p in ap[k]..ap[k + 1] {
                let mut i = ai[p];
                while i < k && flag[i] != k {
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }

        // Numeric pass: block analog of the scalar up-looking LDL^T.
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![BLOCK_ZERO; nnz];
        let mut d_inv = vec![BLOCK_ZERO; n];
        let mut y = vec![BLOCK_ZERO; n];
        let mut pattern = vec![0usize; n];
        let mut lfill = vec![0usize; n];
        flag.iter_mut().for_each(|f| *f = usize::MAX);
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            let mut d_k = BLOCK_ZERO;
            for p in ap[k]..ap[k + 1] {
                let i0 = ai[p];
                if i0 == k {
                    for (slot, add) in d_k.iter_mut().zip(ax[p].iter()) {
                        *slot += add;
                    }
                    continue;
                }
                for (slot, add) in y[i0].iter_mut().zip(ax[p].iter()) {
                    *slot += add;
                }
                let mut len = 0usize;
                let mut i = i0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = pattern[len];
                }
            }
            for s in top..n {
                let i = pattern[s];
                let z_i = y[i];
                y[i] = BLOCK_ZERO;
                let p2 = lp[i] + lfill[i];
                for p in lp[i]..p2 {
                    // y_r -= L(r, i) * z_i
                    let upd = block_mul(&lx[p], &z_i);
                    if li[p] == k {
                        block_sub_assign(&mut d_k, &upd);
                    } else {
                        block_sub_assign(&mut y[li[p]], &upd);
                    }
                }
                // L(k, i) = z_i^T D_i^{-1}; D_k -= L(k, i) z_i.
                let l_ki = block_mul(&block_transpose(&z_i), &d_inv[i]);
                block_sub_assign(&mut d_k, &block_mul(&l_ki, &z_i));
                li[p2] = k;
                lx[p2] = l_ki;
                lfill[i] += 1;
            }
            d_inv[k] = block_inverse(&d_k).ok_or_else(|| {
                Error::NumericalFailure(format!("block LDL^T pivot {k} is singular"))
            })?;
        }

        Ok(BlockLdl {
            n_blocks: n,
            perm,
            lp,
            li,
            lx,
            d_inv,
        })
    }

    /// Solve (A + shift I) x = b in place; `b` has 3 * n_blocks scalars.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n_blocks;
        debug_assert_eq!(b.len(), 3 * n);
        let mut y = vec![0.0f64; 3 * n];
        for k in 0..n {
            let src = 3 * self.perm[k];
            y[3 * k..3 * k + 3].copy_from_slice(&b[src..src + 3]);
        }
        // Forward: L y' = y.
        for j in 0..n {
            let yj = [y[3 * j], y[3 * j + 1], y[3 * j + 2]];
            for p in self.lp[j]..self.lp[j + 1] {
                let r = self.li[p];
                let l = &self.lx[p];
                for i in 0..3 {
                    y[3 * r + i] -=
                        l[3 * i] * yj[0] + l[3 * i + 1] * yj[1] + l[3 * i + 2] * yj[2];
                }
            }
        }
        // Diagonal: y = D^{-1} y.
        for k in 0..n {
            let v = [y[3 * k], y[3 * k + 1], y[3 * k + 2]];
            let d = &self.d_inv[k];
            for i in 0..3 {
                y[3 * k + i] = d[3 * i] * v[0] + d[3 * i + 1] * v[1] + d[3 * i + 2] * v[2];
            }
        }
        // Backward: L^T x = y.
        for j in (0..n).rev() {
            let mut yj = [y[3 * j], y[3 * j + 1], y[3 * j + 2]];
            for p in self.lp[j]..self.lp[j + 1] {
                let r = self.li[p];
                let l = &self.lx[p];
                // yj -= L(r, j)^T y_r
                let yr = [y[3 * r], y[3 * r + 1], y[3 * r + 2]];
                for i in 0..3 {
                    yj[i] -= l[i] * yr[0] + l[3 + i] * yr[1] + l[6 + i] * yr[2];
                }
            }
            y[3 * j..3 * j + 3].copy_from_slice(&yj);
        }
        for k in 0..n {
            let dst = 3 * self.perm[k];
            b[dst..dst + 3].copy_from_slice(&y[3 * k..3 * k + 3]);
        }
    }
}

/// Fill-reducing ordering: BFS-based nested dissection with a
/// minimum-degree base case. Linear-ish time, good separators on the
/// grid-like graphs the pose solves produce.
pub(crate) fn fill_reducing_order(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let mut order = Vec::with_capacity(n);
    let mut active: Vec<usize> = (0..n).collect();
    nd_recurse(&adj, &mut active, &mut order, n);
    order
}

fn nd_recurse(adj: &[Vec<usize>], nodes: &mut Vec<usize>, out: &mut Vec<usize>, n_total: usize) {
    const BASE: usize = 40;
    if nodes.len() <= BASE {
        base_order(adj, nodes, out);
        return;
    }
    // Membership mask for this subgraph.
    let mut level = vec![usize::MAX; n_total];
    for &v in nodes.iter() {
        level[v] = usize::MAX - 1; // member, unvisited
    }
    // BFS from the first node, twice, to approximate a peripheral start.
    let mut start = nodes[0];
    for _ in 0..2 {
        let mut queue = std::collections::VecDeque::new();
        for &v in nodes.iter() {
            if level[v] != usize::MAX {
                level[v] = usize::MAX - 1;
            }
        }
        level[start] = 0;
        queue.push_back(start);
        let mut last = start;
        while let Some(v) = queue.pop_front() {
            last = v;
            for &u in &adj[v] {
                if level[u] == usize::MAX - 1 {
                    level[u] = level[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        start = last;
    }
    // Disconnected subgraph: order the unreached part separately.
    let unreached: Vec<usize> = nodes
        .iter()
        .copied()
        .filter(|&v| level[v] == usize::MAX - 1)
        .collect();
    if !unreached.is_empty() {
        let mut reached: Vec<usize> = nodes
            .iter()
            .copied()
            .filter(|&v| level[v] != usize::MAX - 1)
            .collect();
        let mut rest = unreached;
        nd_recurse(adj, &mut reached, out, n_total);
        nd_recurse(adj, &mut rest, out, n_total);
        return;
    }
    let depth = nodes.iter().map(|&v| level[v]).max().unwrap_or(0);
    if depth < 2 {
        base_order(adj, nodes, out);
        return;
    }
    // Separator = the BFS level at the median node.
    let mut counts = vec![0usize; depth + 1];
    for &v in nodes.iter() {
        counts[level[v]] += 1;
    }
    let half = nodes.len() / 2;
    let mut acc = 0usize;
    let mut sep_level = 1;
    for (l, &c) in counts.iter().enumerate() {
        acc += c;
        if acc >= half {
            sep_level = l.clamp(1, depth - 1);
            break;
        }
    }
    let mut part_a: Vec<usize> = Vec::new();
    let mut part_b: Vec<usize> = Vec::new();
    let mut sep: Vec<usize> = Vec::new();
    for &v in nodes.iter() {
        match level[v].cmp(&sep_level) {
            std::cmp::Ordering::Less => part_a.push(v),
            std::cmp::Ordering::Equal => sep.push(v),
            std::cmp::Ordering::Greater => part_b.push(v),
        }
    }
    if part_a.is_empty() || part_b.is_empty() {
        base_order(adj, nodes, out);
        return;
    }
    nd_recurse(adj, &mut part_a, out, n_total);
    nd_recurse(adj, &mut part_b, out, n_total);
    sep.sort_unstable();
    out.extend_from_slice(&sep);
}

/// Minimum-degree on the subgraph induced by `nodes`.
fn base_order(adj: &[Vec<usize>], nodes: &[usize], out: &mut Vec<usize>) {
    let set: std::collections::HashSet<usize> = nodes.iter().copied().collect();
    let mut local: Vec<usize> = nodes.to_vec();
    local.sort_unstable();
    let index: std::collections::HashMap<usize, usize> =
        local.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let mut edges = Vec::new();
    for &v in &local {
        for &u in &adj[v] {
            if u > v && set.contains(&u) {
                edges.push((index[&v], index[&u]));
            }
        }
    }
    for k in min_degree_order(local.len(), &edges) {
        out.push(local[k]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize, density: f64) -> (SymCsc, DMatrix<f64>) {
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                if rng.random::<f64>() < density {
                    let v = rng.random_range(-1.0..1.0);
                    dense[(i, j)] = v;
                    dense[(j, i)] = v;
                }
            }
        }
        for i in 0..n {
            let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| dense[(i, j)].abs()).sum();
            dense[(i, i)] = row_sum + 1.0 + rng.random::<f64>();
        }
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if dense[(i, j)] != 0.0 {
                    trip.push((i, j, dense[(i, j)]));
                }
            }
        }
        (SymCsc::from_triplets(n, &trip), dense)
    }

    #[test]
    fn matvec_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, dense) = random_spd(&mut rng, 30, 0.2);
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut y = vec![0.0; 30];
        a.matvec(&x, &mut y);
        let yd = &dense * DMatrix::from_column_slice(30, 1, &x);
        for i in 0..30 {
            assert!((y[i] - yd[(i, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn ldl_solves_match_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let n = rng.random_range(5..60);
            let (a, dense) = random_spd(&mut rng, n, 0.25);
            let edges: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (0..i).map(move |j| (i, j)))
                .filter(|&(i, j)| dense[(i, j)] != 0.0)
                .collect();
            let order = min_degree_order(n, &edges);
            let f = LdlFactor::new(&a, order).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut x = b.clone();
            f.solve(&mut x);
            let xd = dense
                .clone()
                .lu()
                .solve(&DMatrix::from_column_slice(n, 1, &b))
                .unwrap();
            for i in 0..n {
                assert!(
                    (x[i] - xd[(i, 0)]).abs() < 1e-8,
                    "trial {trial} component {i}: {} vs {}",
                    x[i],
                    xd[(i, 0)]
                );
            }
        }
    }

    #[test]
    fn block_ldl_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..15 {
            let nb = rng.random_range(2..20);
            let n = 3 * nb;
            // Random block-sparse SPD matrix: A = B B^T + diag boost,
            // with a connected block pattern.
            let mut dense = DMatrix::<f64>::zeros(n, n);
            let mut pairs = Vec::new();
            for i in 1..nb {
                pairs.push((rng.random_range(0..i), i));
            }
            for i in 0..nb {
                for j in (i + 1)..nb {
                    if rng.random::<f64>() < 0.3 && !pairs.contains(&(i, j)) {
                        pairs.push((i, j));
                    }
                }
            }
            for &(bi, bj) in &pairs {
                for r in 0..3 {
                    for c in 0..3 {
                        let v = rng.random_range(-1.0..1.0);
                        dense[(3 * bi + r, 3 * bj + c)] = v;
                        dense[(3 * bj + c, 3 * bi + r)] = v;
                    }
                }
            }
            for i in 0..n {
                let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| dense[(i, j)].abs()).sum();
                dense[(i, i)] = row_sum + 1.0 + rng.random::<f64>();
            }
            // Assemble block triplets from the dense reference.
            let mut trips: Vec<(usize, usize, Block)> = Vec::new();
            for bi in 0..nb {
                for bj in 0..nb {
                    let mut blk = BLOCK_ZERO;
                    let mut any = false;
                    for r in 0..3 {
                        for c in 0..3 {
                            let v = dense[(3 * bi + r, 3 * bj + c)];
                            blk[3 * r + c] = v;
                            any |= v != 0.0;
                        }
                    }
                    if any {
                        trips.push((bi, bj, blk));
                    }
                }
            }
            let a = BlockCsc::from_triplets(nb, &trips);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut y = vec![0.0; n];
            a.matvec(&x, &mut y);
            let yd = &dense * DMatrix::from_column_slice(n, 1, &x);
            for i in 0..n {
                assert!((y[i] - yd[(i, 0)]).abs() < 1e-10, "matvec trial {trial}");
            }

            let order = fill_reducing_order(nb, &pairs);
            let f = BlockLdl::new(&a, order, 0.0).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut got = b.clone();
            f.solve(&mut got);
            let want = dense
                .clone()
                .lu()
                .solve(&DMatrix::from_column_slice(n, 1, &b))
                .unwrap();
            for i in 0..n {
                assert!(
                    (got[i] - want[(i, 0)]).abs() < 1e-7,
                    "trial {trial} x[{i}]: {} vs {}",
                    got[i],
                    want[(i, 0)]
                );
            }
        }
    }

    #[test]
    fn block_ldl_shift_is_applied() {
        // Singular block Laplacian becomes solvable with a shift.
        let w = 2.5;
        let mut off = BLOCK_ZERO;
        off[0] = -w;
        off[4] = -w;
        off[8] = -w;
        let trips = vec![
            (0usize, 0usize, block_identity(w)),
            (1, 1, block_identity(w)),
            (0, 1, off),
            (1, 0, off),
        ];
        let a = BlockCsc::from_triplets(2, &trips);
        let shift = 1e-6;
        let f = BlockLdl::new(&a, vec![0, 1], shift).unwrap();
        let b = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let mut x = b.clone();
        f.solve(&mut x);
        // Verify (A + shift I) x = b via matvec.
        let mut ax = vec![0.0; 6];
        a.matvec(&x, &mut ax);
        for i in 0..6 {
            ax[i] += shift * x[i];
            assert!((ax[i] - b[i]).abs() < 1e-7, "residual {i}: {}", ax[i] - b[i]);
        }
    }

    #[test]
    fn fill_reducing_order_is_permutation_on_grid() {
        let side = 20;
        let n = side * side;
        let mut edges = Vec::new();
        for r in 0..side {
            for c in 0..side {
                let v = r * side + c;
                if c + 1 < side {
                    edges.push((v, v + 1));
                }
                if r + 1 < side {
                    edges.push((v, v + side));
                }
            }
        }
        let order = fill_reducing_order(n, &edges);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn min_degree_is_a_permutation() {
        let edges = vec![(0, 1), (1, 2), (2, 3), (3, 0), (1, 3)];
        let order = min_degree_order(5, &edges);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn grid_laplacian_solve() {
        // 2D grid Laplacian + epsilon I, the exact shape of the pose solves.
        let side = 12;
        let n = side * side;
        let idx = |r: usize, c: usize| r * side + c;
        let mut edges = Vec::new();
        for r in 0..side {
            for c in 0..side {
                if c + 1 < side {
                    edges.push((idx(r, c), idx(r, c + 1)));
                }
                if r + 1 < side {
                    edges.push((idx(r, c), idx(r + 1, c)));
                }
            }
        }
        let mut trip = Vec::new();
        let mut diag = vec![1e-6; n];
        for &(a, b) in &edges {
            trip.push((a, b, -1.0));
            trip.push((b, a, -1.0));
            diag[a] += 1.0;
            diag[b] += 1.0;
        }
        for (i, &v) in diag.iter().enumerate() {
            trip.push((i, i, v));
        }
        let a = SymCsc::from_triplets(n, &trip);
        let order = min_degree_order(n, &edges);
        let f = LdlFactor::new(&a, order).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = b.clone();
        f.solve(&mut x);
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-7, "residual at {i}");
        }
    }
}
