//! Semi-supervised t-SNE: KL(P||Q) minimization with labeled rows pinned
//! to their ground-truth map coordinates.

use crate::error::{Error, Result};
use crate::features::DissimilarityMatrix;
use crate::geom::Vec2;
use crate::rng::{derive_rng, sample_normal};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StsneParams {
    /// Target perplexity k_t (effective neighbor count).
    pub perplexity: f64,
    /// Iteration count T.
    pub iters: usize,
    /// Learning rate eta.
    pub learning_rate: f64,
    /// Momentum alpha.
    pub momentum: f64,
    pub seed: u64,
    /// Early-exaggeration factor for the first 100 iterations; 1.0 disables
    /// it (the plain algorithm has none).
    #[serde(default = "one")]
    pub exaggeration: f64,
    /// Per-coordinate adaptive gains; off by default for the same reason.
    #[serde(default)]
    pub use_gains: bool,
}

fn one() -> f64 {
    1.0
}

impl Default for StsneParams {
    fn default() -> Self {
        StsneParams {
            perplexity: 30.0,
            iters: 2000,
            learning_rate: 1000.0,
            momentum: 0.6,
            seed: 0,
            exaggeration: 1.0,
            use_gains: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmbeddingState {
    /// N x 2 coordinates, labeled rows first.
    pub z: DMatrix<f64>,
    pub n_labeled: usize,
    /// KL divergence evaluated at the start of each iteration.
    pub kl_trace: Vec<f64>,
    /// True when the final KL exceeded the initial KL and the best-KL
    /// iterate was returned instead of the last one.
    pub reverted_to_best: bool,
}

#[derive(Clone, Debug)]
pub struct Bandwidths {
    pub sigmas: Vec<f64>,
    /// Rows whose distances are all equal; their perplexity is N-1 for any
    /// sigma, so no target can be met and the row is flagged.
    pub degenerate: Vec<bool>,
}

/// Perplexity (2^entropy) of the Gaussian conditional on one row.
pub fn row_perplexity(sq_dists: &[f64], sigma: f64) -> f64 {
    let min_sq = sq_dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut sum = 0.0;
    let mut weighted = 0.0; // sum of p~ * (shifted exponent)
    for &sq in sq_dists {
        let e = (-(sq - min_sq) * inv).exp();
        sum += e;
        weighted += e * (sq - min_sq) * inv;
    }
    // H_nats = ln(sum) + weighted/sum; perplexity = exp(H)
    ((sum.ln()) + weighted / sum).exp()
}

/// Binary-search the per-row kernel widths so each conditional reaches
/// perplexity `k_t` within 1e-4 (or the interval endpoint after 64 steps).
pub fn calibrate_bandwidths(d: &DMatrix<f64>, k_t: f64) -> Result<Bandwidths> {
    let n = d.nrows();
    if !(k_t > 1.0 && k_t < (n - 1) as f64) {
        return Err(Error::validation(format!(
            "perplexity {k_t} outside (1, {})",
            n - 1
        )));
    }
    let mut sigmas = Vec::with_capacity(n);
    let mut degenerate = vec![false; n];
    for i in 0..n {
        let dists: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).collect();
        let max = dists.iter().cloned().fold(0.0, f64::max);
        let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(max.is_finite()) {
            return Err(Error::validation(format!(
                "row {i} contains missing distances; complete the matrix first"
            )));
        }
        if max - min <= 1e-12 * max.max(1e-300) {
            // all-equal row: any sigma yields perplexity N-1
            degenerate[i] = true;
            sigmas.push(if max > 0.0 { max } else { 1.0 });
            continue;
        }
        let sq: Vec<f64> = dists.iter().map(|x| x * x).collect();
        let mut lo = 1e-12 * max;
        let mut hi = max;
        // grow until the bracket contains the target
        let mut grow = 0;
        while row_perplexity(&sq, hi) < k_t && grow < 64 {
            hi *= 2.0;
            grow += 1;
        }
        let mut sigma = 0.5 * (lo + hi);
        for _ in 0..64 {
            sigma = 0.5 * (lo + hi);
            let perp = row_perplexity(&sq, sigma);
            if (perp - k_t).abs() <= 1e-4 {
                break;
            }
            if perp > k_t {
                hi = sigma;
            } else {
                lo = sigma;
            }
        }
        sigmas.push(sigma);
    }
    Ok(Bandwidths { sigmas, degenerate })
}

/// Symmetrized joint probabilities: p_nm = (p_m|n + p_n|m) / (2N), zero
/// diagonal, so the matrix sums to one.
pub fn joint_probabilities(d: &DMatrix<f64>, sigmas: &[f64]) -> Result<DMatrix<f64>> {
    let n = d.nrows();
    if sigmas.len() != n {
        return Err(Error::dimension(format!(
            "{} sigmas for {n} rows",
            sigmas.len()
        )));
    }
    if let Some(s) = sigmas.iter().find(|&&s| s <= 0.0) {
        return Err(Error::validation(format!("nonpositive sigma {s}")));
    }
    let mut cond = DMatrix::from_element(n, n, 0.0);
    for i in 0..n {
        let inv = 1.0 / (2.0 * sigmas[i] * sigmas[i]);
        let min_sq = (0..n)
            .filter(|&j| j != i)
            .map(|j| d[(i, j)] * d[(i, j)])
            .fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let e = (-(d[(i, j)] * d[(i, j)] - min_sq) * inv).exp();
            cond[(i, j)] = e;
            sum += e;
        }
        for j in 0..n {
            cond[(i, j)] /= sum;
        }
    }
    let mut p = DMatrix::from_element(n, n, 0.0);
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[(i, j)] = (cond[(i, j)] + cond[(j, i)]) * scale;
            }
        }
    }
    Ok(p)
}

/// Pairwise t-kernel weights 1/(1 + ||z_n - z_m||^2) and their off-diagonal
/// sum; Q is the kernel matrix divided by the sum.
pub fn t_kernel(z: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = z.nrows();
    let mut w = DMatrix::from_element(n, n, 0.0);
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = z[(i, 0)] - z[(j, 0)];
            let dy = z[(i, 1)] - z[(j, 1)];
            let k = 1.0 / (1.0 + dx * dx + dy * dy);
            w[(i, j)] = k;
            w[(j, i)] = k;
            sum += 2.0 * k;
        }
    }
    (w, sum)
}

/// Normalized t-distribution affinities of the embedding (Q matrix).
pub fn low_dim_affinities(z: &DMatrix<f64>) -> DMatrix<f64> {
    let (w, sum) = t_kernel(z);
    w / sum
}

/// KL(P || Q); pairs with p = 0 contribute nothing, q = 0 against p > 0
/// yields +infinity.
pub fn kl_objective(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let mut kl = 0.0;
    for (pv, qv) in p.iter().zip(q.iter()) {
        if *pv > 0.0 {
            if *qv > 0.0 {
                kl += pv * (pv / qv).ln();
            } else {
                return f64::INFINITY;
            }
        }
    }
    kl
}

/// Gradient of the KL objective with respect to each embedding row:
/// 4 sum_m (p_nm - q_nm)(z_n - z_m) / (1 + ||z_n - z_m||^2).
pub fn gradient(p: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let (w, sum) = t_kernel(z);
    gradient_with_kernel(p, &w, sum, z)
}

fn gradient_with_kernel(
    p: &DMatrix<f64>,
    w: &DMatrix<f64>,
    w_sum: f64,
    z: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = z.nrows();
    let mut grad = DMatrix::from_element(n, 2, 0.0);
    for i in 0..n {
        let mut gx = 0.0;
        let mut gy = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let k = w[(i, j)];
            let coeff = 4.0 * (p[(i, j)] - k / w_sum) * k;
            gx += coeff * (z[(i, 0)] - z[(j, 0)]);
            gy += coeff * (z[(i, 1)] - z[(j, 1)]);
        }
        grad[(i, 0)] = gx;
        grad[(i, 1)] = gy;
    }
    grad
}

/// Initial embedding: labeled rows at their labels, each unlabeled row at
/// its nearest labeled sample's position plus 0.1 m isotropic jitter.
pub fn initialize_embedding(
    d: &DissimilarityMatrix,
    labels: &[Vec2],
    seed: u64,
) -> Result<DMatrix<f64>> {
    let n = d.len();
    let l = labels.len();
    if l == 0 {
        return Err(Error::validation("unsupervised mode unsupported (L = 0)"));
    }
    if l != d.n_labeled || l > n {
        return Err(Error::dimension(format!(
            "{l} labels but matrix declares {} labeled rows of {n}",
            d.n_labeled
        )));
    }
    let mut z = DMatrix::from_element(n, 2, 0.0);
    for (i, y) in labels.iter().enumerate() {
        z[(i, 0)] = y.x;
        z[(i, 1)] = y.y;
    }
    let mut rng = derive_rng(seed, "stsne/init", &[]);
    for i in l..n {
        let mut best = 0;
        for j in 1..l {
            if d.d[(i, j)] < d.d[(i, best)] {
                best = j;
            }
        }
        z[(i, 0)] = labels[best].x + 0.1 * sample_normal(&mut rng);
        z[(i, 1)] = labels[best].y + 0.1 * sample_normal(&mut rng);
    }
    Ok(z)
}

/// Gradient descent with momentum on KL(P||Q), labeled rows re-pinned to
/// their labels after every update.
pub fn run_stsne(
    d: &DissimilarityMatrix,
    labels: &[Vec2],
    params: &StsneParams,
) -> Result<EmbeddingState> {
    let n = d.len();
    if !d.is_finite() {
        return Err(Error::validation(
            "dissimilarity matrix has missing entries; run completion first".to_string(),
        ));
    }
    if params.iters == 0 {
        return Err(Error::validation("iteration count must be >= 1"));
    }
    if params.learning_rate <= 0.0 {
        return Err(Error::validation("learning rate must be positive"));
    }
    if !(0.0..1.0).contains(&params.momentum) {
        return Err(Error::validation("momentum must lie in [0, 1)"));
    }
    let l = labels.len();
    if l == n {
        // fully labeled: pinning fixes every row
        let mut z = DMatrix::from_element(n, 2, 0.0);
        for (i, y) in labels.iter().enumerate() {
            z[(i, 0)] = y.x;
            z[(i, 1)] = y.y;
        }
        return Ok(EmbeddingState {
            z,
            n_labeled: l,
            kl_trace: vec![],
            reverted_to_best: false,
        });
    }
    let bw = calibrate_bandwidths(&d.d, params.perplexity)?;
    let mut p = joint_probabilities(&d.d, &bw.sigmas)?;
    if params.exaggeration != 1.0 {
        p *= params.exaggeration;
    }
    let mut z = initialize_embedding(d, labels, params.seed)?;
    let mut z_prev = z.clone();
    let mut gains = DMatrix::from_element(n, 2, 1.0);
    let mut prev_step = DMatrix::from_element(n, 2, 0.0);
    let mut kl_trace = Vec::with_capacity(params.iters);
    let mut best_kl = f64::INFINITY;
    let mut best_z = z.clone();
    for t in 0..params.iters {
        if params.exaggeration != 1.0 && t == 100 {
            p /= params.exaggeration;
        }
        let (w, w_sum) = t_kernel(&z);
        let q = &w / w_sum;
        let kl = kl_objective(&p, &q);
        kl_trace.push(kl);
        if kl < best_kl {
            best_kl = kl;
            best_z.copy_from(&z);
        }
        let grad = gradient_with_kernel(&p, &w, w_sum, &z);
        let mut next = z.clone();
        for i in 0..n {
            for c in 0..2 {
                if params.use_gains {
                    // descending consistently (gradient opposes the last step)
                    let consistent = grad[(i, c)] * prev_step[(i, c)] < 0.0;
                    gains[(i, c)] = if consistent {
                        gains[(i, c)] + 0.2
                    } else {
                        (gains[(i, c)] * 0.8_f64).max(0.01)
                    };
                }
                let step = -params.learning_rate * gains[(i, c)] * grad[(i, c)]
                    + params.momentum * (z[(i, c)] - z_prev[(i, c)]);
                next[(i, c)] = z[(i, c)] + step;
                prev_step[(i, c)] = step;
            }
        }
        for (i, y) in labels.iter().enumerate() {
            next[(i, 0)] = y.x;
            next[(i, 1)] = y.y;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(
                format!(
                    "non-finite embedding values (learning rate {} likely too large)",
                    params.learning_rate
                ),
                Some(t),
            ));
        }
        z_prev = std::mem::replace(&mut z, next);
    }
    let reverted = match (kl_trace.first(), kl_trace.last()) {
        (Some(first), Some(last)) => last > first,
        _ => false,
    };
    if reverted {
        eprintln!(
            "warning: final KL {:.6} exceeds initial {:.6}; returning best-KL iterate",
            kl_trace.last().unwrap(),
            kl_trace.first().unwrap()
        );
        z = best_z;
    }
    Ok(EmbeddingState {
        z,
        n_labeled: l,
        kl_trace,
        reverted_to_best: reverted,
    })
}

/// Unlabeled rows of an embedding as position estimates.
pub fn unlabeled_estimates(state: &EmbeddingState) -> Vec<Vec2> {
    (state.n_labeled..state.z.nrows())
        .map(|i| Vec2::new(state.z[(i, 0)], state.z[(i, 1)]))
        .collect()
}
