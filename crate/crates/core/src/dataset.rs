//! Dataset generation and on-disk format.
//!
//! A dataset directory holds `positions.csv` (index, x_m, y_m, labeled),
//! one `bs_<id>.csv` per base station with the upper triangle of each
//! covariance (`sample_index,row,col,re,im`, absent samples omitted) and
//! `meta.json` describing the array sizes, subcarrier frequencies and seed.

use crate::channel::{sample_covariance, synth_channel, CsiSample, SmallScale};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::raytrace::trace_paths;
use crate::rng::derive_rng;
use crate::scene::Scene;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplingParams {
    pub num_labeled: usize,
    pub num_unlabeled: usize,
    /// Target spacing between consecutive unlabeled trace points, meters.
    #[serde(default = "default_spacing")]
    pub spacing_m: f64,
}

fn default_spacing() -> f64 {
    2.0
}

#[derive(Clone, Debug)]
pub struct Dataset {
    /// Labeled samples first.
    pub positions: Vec<Vec2>,
    pub n_labeled: usize,
    /// `samples[b][i]` is BS `bs_ids[b]`'s CSI sample for position `i`.
    pub bs_ids: Vec<usize>,
    pub antennas: Vec<usize>,
    pub spacings_wl: Vec<f64>,
    pub samples: Vec<Vec<CsiSample>>,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn labeled_positions(&self) -> &[Vec2] {
        &self.positions[..self.n_labeled]
    }

    pub fn unlabeled_positions(&self) -> &[Vec2] {
        &self.positions[self.n_labeled..]
    }
}

/// Points along the street polylines at (approximately) uniform spacing.
fn street_grid_points(scene: &Scene, spacing: f64) -> Vec<Vec2> {
    let mut pts = Vec::new();
    for poly in &scene.streets {
        for w in poly.windows(2) {
            let len = w[0].distance(w[1]);
            let n = (len / spacing).floor() as usize;
            for i in 0..n {
                let t = (i as f64 + 0.5) * spacing / len;
                pts.push(w[0] + (w[1] - w[0]) * t);
            }
        }
    }
    pts
}

/// Sample UE positions: `num_labeled` uniform on the streets, then
/// `num_unlabeled` trace points at the configured spacing.
pub fn sample_positions(scene: &Scene, params: &SamplingParams, master_seed: u64) -> Result<(Vec<Vec2>, usize)> {
    if params.num_labeled == 0 {
        return Err(Error::validation("num_labeled must be >= 1"));
    }
    if params.num_unlabeled == 0 {
        return Err(Error::validation("num_unlabeled must be >= 1"));
    }
    if scene.streets.is_empty() {
        return Err(Error::validation("scene has no streets to sample UEs on"));
    }
    let grid = street_grid_points(scene, params.spacing_m);
    if grid.len() < params.num_unlabeled {
        return Err(Error::validation(format!(
            "streets yield only {} trace points at spacing {} m, need {}; reduce spacing",
            grid.len(),
            params.spacing_m,
            params.num_unlabeled
        )));
    }
    // Labeled positions: length-weighted uniform draw on the street network.
    let mut rng = derive_rng(master_seed, "simulate/labeled", &[]);
    let edges: Vec<(Vec2, Vec2, f64)> = scene
        .streets
        .iter()
        .flat_map(|poly| poly.windows(2).map(|w| (w[0], w[1], w[0].distance(w[1]))))
        .collect();
    let total_len: f64 = edges.iter().map(|e| e.2).sum();
    let mut positions = Vec::with_capacity(params.num_labeled + params.num_unlabeled);
    for _ in 0..params.num_labeled {
        let mut s = rng.gen_range(0.0..total_len);
        let mut placed = None;
        for (a, b, len) in &edges {
            if s <= *len {
                placed = Some(*a + (*b - *a) * (s / *len));
                break;
            }
            s -= len;
        }
        // cumulative rounding can under-run the total; land on the last vertex
        positions.push(placed.unwrap_or(edges[edges.len() - 1].1));
    }
    // Unlabeled: stride the trace grid down to the requested count.
    let stride = grid.len() as f64 / params.num_unlabeled as f64;
    for i in 0..params.num_unlabeled {
        let ix = ((i as f64 + 0.5) * stride) as usize;
        positions.push(grid[ix.min(grid.len() - 1)]);
    }
    Ok((positions, params.num_labeled))
}

/// Synthesize the CSI samples for every (position, BS) pair.
///
/// Each pair draws from its own RNG stream keyed by (sample index, BS id),
/// so the dataset is independent of generation order.
pub fn generate_dataset(scene: &Scene, params: &SamplingParams, master_seed: u64) -> Result<Dataset> {
    let (positions, n_labeled) = sample_positions(scene, params, master_seed)?;
    let ch = &scene.channel;
    let delta_f = ch.bandwidth_hz / ch.subcarriers as f64;
    let freqs: Vec<f64> = (0..ch.realizations)
        .map(|r| ch.carrier_hz + (r as f64 - (ch.realizations as f64 - 1.0) / 2.0) * delta_f)
        .collect();
    let noise_std = ch.noise_std();
    let mut samples = Vec::with_capacity(scene.bs_list.len());
    for bs in &scene.bs_list {
        let mut per_bs = Vec::with_capacity(positions.len());
        for (i, &pos) in positions.iter().enumerate() {
            let paths = trace_paths(scene, bs, pos, ch.max_bounces)?;
            if paths.is_empty() {
                per_bs.push(CsiSample::absent(bs.id));
                continue;
            }
            let mut rng = derive_rng(master_seed, "simulate/channel", &[i as u64, bs.id as u64]);
            let channels: Vec<_> = freqs
                .iter()
                .map(|&f| {
                    synth_channel(
                        &paths,
                        f,
                        bs.antennas,
                        bs.spacing_wl,
                        noise_std,
                        SmallScale::RandomPhase,
                        &mut rng,
                    )
                })
                .collect();
            let cs = sample_covariance(bs.id, &channels)?;
            if cs.rx_power < ch.detection_floor {
                per_bs.push(CsiSample::absent(bs.id));
            } else {
                per_bs.push(cs);
            }
        }
        samples.push(per_bs);
    }
    Ok(Dataset {
        positions,
        n_labeled,
        bs_ids: scene.bs_list.iter().map(|b| b.id).collect(),
        antennas: scene.bs_list.iter().map(|b| b.antennas).collect(),
        spacings_wl: scene.bs_list.iter().map(|b| b.spacing_wl).collect(),
        samples,
        seed: master_seed,
    })
}

#[derive(Serialize, Deserialize)]
struct MetaBs {
    id: usize,
    antennas: usize,
    spacing_wl: f64,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    n: usize,
    n_labeled: usize,
    bs: Vec<MetaBs>,
    freqs: Vec<f64>,
    seed: u64,
    config_echo: serde_json::Value,
}

fn fmt_float(x: f64) -> String {
    format!("{:.16e}", x)
}

pub fn write_dataset(dir: &Path, ds: &Dataset, scene: &Scene, config_echo: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut pos = String::from("index,x_m,y_m,labeled\n");
    for (i, p) in ds.positions.iter().enumerate() {
        let labeled = if i < ds.n_labeled { 1 } else { 0 };
        pos.push_str(&format!("{},{},{},{}\n", i, p.x, p.y, labeled));
    }
    fs::write(dir.join("positions.csv"), pos)?;
    for (b, per_bs) in ds.samples.iter().enumerate() {
        let mut f = fs::File::create(dir.join(format!("bs_{}.csv", ds.bs_ids[b])))?;
        writeln!(f, "sample_index,row,col,re,im")?;
        for (i, cs) in per_bs.iter().enumerate() {
            if let Some(cov) = &cs.cov {
                let m = cov.nrows();
                for r in 0..m {
                    for c in r..m {
                        writeln!(
                            f,
                            "{},{},{},{},{}",
                            i,
                            r,
                            c,
                            fmt_float(cov[(r, c)].re),
                            fmt_float(cov[(r, c)].im)
                        )?;
                    }
                }
            }
        }
    }
    let ch = &scene.channel;
    let delta_f = ch.bandwidth_hz / ch.subcarriers as f64;
    let freqs: Vec<f64> = (0..ch.realizations)
        .map(|r| ch.carrier_hz + (r as f64 - (ch.realizations as f64 - 1.0) / 2.0) * delta_f)
        .collect();
    let meta = Meta {
        n: ds.len(),
        n_labeled: ds.n_labeled,
        bs: ds
            .bs_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| MetaBs {
                id,
                antennas: ds.antennas[i],
                spacing_wl: ds.spacings_wl[i],
            })
            .collect(),
        freqs,
        seed: ds.seed,
        config_echo,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_positions(path: &Path) -> Result<(Vec<Vec2>, usize)> {
    let text = fs::read_to_string(path)?;
    let mut positions = Vec::new();
    let mut n_labeled = 0;
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::validation(format!(
                "positions.csv line {}: expected 4 columns",
                lineno + 1
            )));
        }
        let x: f64 = cols[1].parse().map_err(|e| Error::validation(format!("positions.csv line {}: {e}", lineno + 1)))?;
        let y: f64 = cols[2].parse().map_err(|e| Error::validation(format!("positions.csv line {}: {e}", lineno + 1)))?;
        if cols[3].trim() == "1" {
            n_labeled += 1;
        }
        positions.push(Vec2::new(x, y));
    }
    Ok((positions, n_labeled))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let (positions, n_labeled) = read_positions(&dir.join("positions.csv"))?;
    if positions.len() != meta.n || n_labeled != meta.n_labeled {
        return Err(Error::validation(
            "meta.json and positions.csv disagree on sample counts".to_string(),
        ));
    }
    let mut samples = Vec::with_capacity(meta.bs.len());
    for bs in &meta.bs {
        let m = bs.antennas;
        let text = fs::read_to_string(dir.join(format!("bs_{}.csv", bs.id)))?;
        let mut covs: Vec<Option<DMatrix<Complex64>>> = vec![None; meta.n];
        for line in text.lines().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let i: usize = cols[0].parse().map_err(|e| Error::validation(format!("bs_{}.csv: {e}", bs.id)))?;
            let r: usize = cols[1].parse().map_err(|e| Error::validation(format!("bs_{}.csv: {e}", bs.id)))?;
            let c: usize = cols[2].parse().map_err(|e| Error::validation(format!("bs_{}.csv: {e}", bs.id)))?;
            let re: f64 = cols[3].parse().map_err(|e| Error::validation(format!("bs_{}.csv: {e}", bs.id)))?;
            let im: f64 = cols[4].parse().map_err(|e| Error::validation(format!("bs_{}.csv: {e}", bs.id)))?;
            let cov = covs[i].get_or_insert_with(|| DMatrix::from_element(m, m, Complex64::new(0.0, 0.0)));
            cov[(r, c)] = Complex64::new(re, im);
            if r != c {
                cov[(c, r)] = Complex64::new(re, -im);
            }
        }
        let per_bs: Vec<CsiSample> = covs
            .into_iter()
            .map(|cov| match cov {
                Some(cov) => {
                    let rx_power = cov.diagonal().iter().map(|c| c.re).sum();
                    CsiSample { bs_id: bs.id, cov: Some(cov), rx_power }
                }
                None => CsiSample::absent(bs.id),
            })
            .collect();
        samples.push(per_bs);
    }
    Ok(Dataset {
        positions,
        n_labeled,
        bs_ids: meta.bs.iter().map(|b| b.id).collect(),
        antennas: meta.bs.iter().map(|b| b.antennas).collect(),
        spacings_wl: meta.bs.iter().map(|b| b.spacing_wl).collect(),
        samples,
        seed: meta.seed,
    })
}
