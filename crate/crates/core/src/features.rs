//! Angular power profiles, per-BS dissimilarities and global fusion.

use crate::channel::{steering_vector, CsiSample};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;

pub const MISSING: f64 = f64::INFINITY;

/// Normalized power angular profile over a uniform DOA grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AngularProfile {
    pub grid: Vec<f64>,
    pub power: Vec<f64>,
}

/// Global fused dissimilarity matrix, labeled samples first.
/// Entries equal to `MISSING` (infinity) mark pairs no BS observed jointly.
#[derive(Clone, Debug, PartialEq)]
pub struct DissimilarityMatrix {
    pub d: DMatrix<f64>,
    pub n_labeled: usize,
}

impl DissimilarityMatrix {
    pub fn len(&self) -> usize {
        self.d.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.d.nrows() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.d.iter().all(|x| x.is_finite())
    }
}

pub fn doa_grid(g: usize) -> Vec<f64> {
    (0..g)
        .map(|i| -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * (i as f64 + 0.5) / g as f64)
        .collect()
}

/// Bartlett beamformer spectrum of a covariance, clamped at zero and
/// normalized to unit sum.
pub fn angular_power_profile(cov: &CsiSample, g: usize) -> Result<AngularProfile> {
    angular_power_profile_spaced(cov, g, 0.5)
}

/// Bartlett spectrum for an array with non-half-wavelength spacing.
pub fn angular_power_profile_spaced(
    cov: &CsiSample,
    g: usize,
    spacing_wl: f64,
) -> Result<AngularProfile> {
    let cov_mat = cov
        .cov
        .as_ref()
        .ok_or_else(|| Error::validation(format!("absent CSI sample for BS {}", cov.bs_id)))?;
    if g < 8 {
        return Err(Error::validation(format!("angular grid size {g} < 8")));
    }
    let m = cov_mat.nrows();
    let grid = doa_grid(g);
    let mut power: Vec<f64> = grid
        .iter()
        .map(|&phi| {
            let s = steering_vector(phi, m, spacing_wl);
            let quad = (s.adjoint() * cov_mat * &s)[(0, 0)].re;
            (quad / (m * m) as f64).max(0.0)
        })
        .collect();
    let total: f64 = power.iter().sum();
    if total > 0.0 {
        for p in &mut power {
            *p /= total;
        }
    } else {
        // zero covariance: fall back to a flat profile
        power = vec![1.0 / g as f64; g];
    }
    Ok(AngularProfile { grid, power })
}

/// Hellinger distance between two normalized profiles, in [0, 1].
pub fn local_dissimilarity(a: &AngularProfile, b: &AngularProfile) -> Result<f64> {
    if a.power.len() != b.power.len() {
        return Err(Error::dimension(format!(
            "profile grids differ: {} vs {}",
            a.power.len(),
            b.power.len()
        )));
    }
    let bc: f64 = a
        .power
        .iter()
        .zip(&b.power)
        .map(|(&x, &y)| (x * y).sqrt())
        .sum();
    Ok((1.0 - bc.min(1.0)).max(0.0).sqrt())
}

/// Fuse per-BS local dissimilarities into one global matrix.
///
/// Entry (n, m) is the quality-weighted mean over BSs observing both
/// samples, with weight min(rx_power_n, rx_power_m). Pairs with no common
/// BS become `MISSING`.
pub fn fuse_global(
    local: &[DMatrix<f64>],
    qualities: &[Vec<f64>],
    n_labeled: usize,
) -> Result<DissimilarityMatrix> {
    if local.is_empty() {
        return Err(Error::validation("fuse_global: no BS matrices"));
    }
    if local.len() != qualities.len() {
        return Err(Error::dimension("local matrices and quality vectors differ in count"));
    }
    let n = local[0].nrows();
    for (b, l) in local.iter().enumerate() {
        if l.nrows() != n || l.ncols() != n {
            return Err(Error::dimension(format!("BS {b}: local matrix is not {n}x{n}")));
        }
        if qualities[b].len() != n {
            return Err(Error::dimension(format!("BS {b}: quality vector length mismatch")));
        }
        if qualities[b].iter().any(|&q| q < 0.0) {
            return Err(Error::validation(format!("BS {b}: negative quality")));
        }
    }
    let mut d = DMatrix::from_element(n, n, 0.0);
    let mut any_pair = false;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut num = 0.0;
            let mut den = 0.0;
            for (l, q) in local.iter().zip(qualities) {
                let w = q[i].min(q[j]);
                if w > 0.0 {
                    num += w * l[(i, j)];
                    den += w;
                }
            }
            let v = if den > 0.0 {
                any_pair = true;
                num / den
            } else {
                MISSING
            };
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    if !any_pair && n > 1 {
        return Err(Error::validation("disconnected dataset: no pair observed by any BS"));
    }
    Ok(DissimilarityMatrix { d, n_labeled })
}

fn knn_edges(d: &DMatrix<f64>, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = d.nrows();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        let mut cands: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i && d[(i, j)].is_finite())
            .map(|j| (j, d[(i, j)]))
            .collect();
        cands.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        for &(j, w) in cands.iter().take(k) {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
    }
    for nbrs in &mut adj {
        nbrs.sort_by(|a, b| a.0.cmp(&b.0));
        nbrs.dedup_by_key(|e| e.0);
    }
    adj
}

fn component_sizes(adj: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut size = 0;
        while let Some(u) = stack.pop() {
            size += 1;
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

/// Replace `MISSING` entries by geodesic (shortest-path) distances on the
/// symmetric k-nearest-neighbor graph built from the finite entries.
/// Finite entries pass through unchanged.
pub fn complete_missing(d: &DissimilarityMatrix, k_graph: usize) -> Result<DissimilarityMatrix> {
    if d.is_finite() {
        return Ok(d.clone());
    }
    let n = d.len();
    let adj = knn_edges(&d.d, k_graph);
    let sizes = component_sizes(&adj);
    if sizes.len() > 1 {
        return Err(Error::Disconnected(sizes));
    }
    let mut out = d.d.clone();
    for src in 0..n {
        if (0..n).all(|j| out[(src, j)].is_finite()) {
            continue;
        }
        let dist = dijkstra(&adj, src);
        for j in 0..n {
            if !out[(src, j)].is_finite() {
                out[(src, j)] = dist[j];
            }
        }
    }
    // enforce exact symmetry after per-row fills
    for i in 0..n {
        for j in (i + 1)..n {
            let v = out[(i, j)].min(out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(DissimilarityMatrix { d: out, n_labeled: d.n_labeled })
}

fn dijkstra(adj: &[Vec<(usize, f64)>], src: usize) -> Vec<f64> {
    use std::cmp::Reverse;
    #[derive(PartialEq)]
    struct Entry(f64, usize);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
        }
    }
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    dist[src] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Entry(0.0, src)));
    while let Some(Reverse(Entry(du, u))) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let alt = du + w;
            if alt < dist[v] {
                dist[v] = alt;
                heap.push(Reverse(Entry(alt, v)));
            }
        }
    }
    dist
}
