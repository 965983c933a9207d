//! Reference localizers on the same dissimilarity matrix: kNN
//! fingerprinting and semi-supervised Laplacian Eigenmap realized as
//! clamped harmonic interpolation on a Gaussian-weighted kNN graph.

use crate::error::{Error, Result};
use crate::features::DissimilarityMatrix;
use crate::geom::Vec2;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SleParams {
    pub k_graph: usize,
    /// Gaussian edge-weight width; `None` = median finite dissimilarity.
    pub kernel_width: Option<f64>,
}

impl Default for SleParams {
    fn default() -> Self {
        SleParams { k_graph: 10, kernel_width: None }
    }
}

/// Each unlabeled sample's estimate: unweighted centroid of its k nearest
/// labeled samples under D, ties broken by lower sample index.
pub fn knn_localize(d: &DissimilarityMatrix, labels: &[Vec2], k: usize) -> Result<Vec<Vec2>> {
    let l = labels.len();
    if l != d.n_labeled {
        return Err(Error::dimension(format!(
            "{l} labels but matrix declares {} labeled rows",
            d.n_labeled
        )));
    }
    if k == 0 || k > l {
        return Err(Error::validation(format!("k = {k} outside 1..={l}")));
    }
    let n = d.len();
    let mut out = Vec::with_capacity(n - l);
    for i in l..n {
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&a, &b| d.d[(i, a)].total_cmp(&d.d[(i, b)]).then(a.cmp(&b)));
        let mut cx = 0.0;
        let mut cy = 0.0;
        for &j in order.iter().take(k) {
            cx += labels[j].x;
            cy += labels[j].y;
        }
        out.push(Vec2::new(cx / k as f64, cy / k as f64));
    }
    Ok(out)
}

fn median_finite_offdiag(d: &DMatrix<f64>) -> f64 {
    let n = d.nrows();
    let mut vals: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if d[(i, j)].is_finite() {
                vals.push(d[(i, j)]);
            }
        }
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    vals[vals.len() / 2]
}

/// Harmonic interpolation with labeled rows clamped: build Gaussian weights
/// on the union-kNN graph, form the graph Laplacian, and solve
/// `L_UU Z_U = -L_UL Y` for the unlabeled coordinates.
pub fn sle_localize(
    d: &DissimilarityMatrix,
    labels: &[Vec2],
    params: &SleParams,
) -> Result<Vec<Vec2>> {
    let l = labels.len();
    if l != d.n_labeled {
        return Err(Error::dimension(format!(
            "{l} labels but matrix declares {} labeled rows",
            d.n_labeled
        )));
    }
    if l == 0 {
        return Err(Error::validation("SLE requires at least one label"));
    }
    if params.k_graph == 0 {
        return Err(Error::validation("k_graph must be >= 1"));
    }
    let n = d.len();
    let u = n - l;
    if u == 0 {
        return Ok(Vec::new());
    }
    let width = match params.kernel_width {
        Some(w) if w > 0.0 => w,
        Some(w) => return Err(Error::validation(format!("kernel width {w} must be positive"))),
        None => median_finite_offdiag(&d.d),
    };
    // union-kNN adjacency with Gaussian weights
    let mut w = DMatrix::from_element(n, n, 0.0);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i && d.d[(i, j)].is_finite()).collect();
        order.sort_by(|&a, &b| d.d[(i, a)].total_cmp(&d.d[(i, b)]).then(a.cmp(&b)));
        for &j in order.iter().take(params.k_graph) {
            let dij = d.d[(i, j)];
            let wij = (-dij * dij / (2.0 * width * width)).exp();
            w[(i, j)] = wij;
            w[(j, i)] = wij;
        }
    }
    // connectivity check with component sizes
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut size = 0;
        while let Some(x) = stack.pop() {
            size += 1;
            for j in 0..n {
                if w[(x, j)] > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    if sizes.len() > 1 {
        return Err(Error::Disconnected(sizes));
    }
    // Laplacian blocks: unlabeled rows/cols are L..N-1
    let mut a = DMatrix::from_element(u, u, 0.0);
    let mut rhs = DMatrix::from_element(u, 2, 0.0);
    for i in 0..u {
        let gi = l + i;
        let degree: f64 = (0..n).map(|j| w[(gi, j)]).sum();
        a[(i, i)] = degree;
        for j in 0..u {
            if j != i {
                a[(i, j)] = -w[(gi, l + j)];
            } else {
                a[(i, j)] += -w[(gi, gi)];
            }
        }
        for (j, y) in labels.iter().enumerate() {
            rhs[(i, 0)] += w[(gi, j)] * y.x;
            rhs[(i, 1)] += w[(gi, j)] * y.y;
        }
    }
    let lu = a.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("singular L_UU block (isolated unlabeled component)", None))?;
    Ok((0..u).map(|i| Vec2::new(sol[(i, 0)], sol[(i, 1)])).collect())
}
