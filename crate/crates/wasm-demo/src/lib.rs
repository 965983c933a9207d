//! Browser bindings: explore the simulated street grid (ray paths and
//! angular power spectra) and watch the constrained embedding converge.

use chartloc_core::channel::{sample_covariance, synth_channel, SmallScale};
use chartloc_core::dataset::{generate_dataset, SamplingParams};
use chartloc_core::features::angular_power_profile_spaced;
use chartloc_core::geom::Vec2;
use chartloc_core::pipeline::{featurize_dataset, FeatureParams};
use chartloc_core::raytrace::trace_paths;
use chartloc_core::rng::derive_rng;
use chartloc_core::scene::{build_scene, manhattan_reduced, Scene};
use chartloc_core::stsne::{
    calibrate_bandwidths, gradient, initialize_embedding, joint_probabilities, kl_objective,
    low_dim_affinities,
};
use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn err_js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Serialize)]
struct SceneView {
    area: [[f64; 2]; 2],
    walls: Vec<[[f64; 2]; 2]>,
    bs: Vec<[f64; 2]>,
    streets: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct PathView {
    vertices: Vec<[f64; 2]>,
    doa_deg: f64,
    bounces: usize,
    length_m: f64,
    gain: f64,
}

#[derive(Serialize)]
struct SpectrumView {
    angles_deg: Vec<f64>,
    power: Vec<f64>,
    n_paths: usize,
}

/// Interactive view of the reduced street-grid scene.
#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
    streets: Vec<Vec<[f64; 2]>>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsValue> {
        let spec = manhattan_reduced(seed as u64);
        let streets = spec.streets.clone();
        let scene = build_scene(&spec).map_err(err_js)?;
        Ok(Demo { scene, streets })
    }

    /// Scene geometry for drawing: walls, BS positions, street centerlines.
    pub fn scene_json(&self) -> String {
        let view = SceneView {
            area: [
                [self.scene.area.min.x, self.scene.area.min.y],
                [self.scene.area.max.x, self.scene.area.max.y],
            ],
            walls: self
                .scene
                .walls
                .iter()
                .map(|w| [[w.segment.a.x, w.segment.a.y], [w.segment.b.x, w.segment.b.y]])
                .collect(),
            bs: self.scene.bs_list.iter().map(|b| [b.position.x, b.position.y]).collect(),
            streets: self.streets.clone(),
        };
        serde_json::to_string(&view).unwrap()
    }

    /// Specular paths from one BS to a point, as drawable polylines.
    pub fn trace(&self, bs: usize, x: f64, y: f64, max_bounces: usize) -> Result<String, JsValue> {
        let bs = self.scene.bs_list.get(bs).ok_or_else(|| err_js("no such BS"))?;
        let paths = trace_paths(&self.scene, bs, Vec2::new(x, y), max_bounces).map_err(err_js)?;
        let views: Vec<PathView> = paths
            .iter()
            .map(|p| PathView {
                vertices: p.vertices.iter().map(|v| [v.x, v.y]).collect(),
                doa_deg: p.doa.to_degrees(),
                bounces: p.bounce_count,
                length_m: p.total_length,
                gain: p.cum_reflection_gain,
            })
            .collect();
        serde_json::to_string(&views).map_err(err_js)
    }

    /// Bartlett angular power profile of the noiseless covariance at a point.
    pub fn spectrum(&self, bs_idx: usize, x: f64, y: f64, max_bounces: usize) -> Result<String, JsValue> {
        let bs = self.scene.bs_list.get(bs_idx).ok_or_else(|| err_js("no such BS"))?;
        let paths = trace_paths(&self.scene, bs, Vec2::new(x, y), max_bounces).map_err(err_js)?;
        if paths.is_empty() {
            return serde_json::to_string(&SpectrumView { angles_deg: vec![], power: vec![], n_paths: 0 })
                .map_err(err_js);
        }
        let mut rng = derive_rng(0, "wasm/spectrum", &[bs_idx as u64]);
        let chans: Vec<_> = (0..self.scene.channel.realizations)
            .map(|_| {
                synth_channel(
                    &paths,
                    self.scene.channel.carrier_hz,
                    bs.antennas,
                    bs.spacing_wl,
                    0.0,
                    SmallScale::Unit,
                    &mut rng,
                )
            })
            .collect();
        let cs = sample_covariance(bs_idx, &chans).map_err(err_js)?;
        let g = 181;
        let prof = angular_power_profile_spaced(&cs, g, bs.spacing_wl).map_err(err_js)?;
        let view = SpectrumView {
            angles_deg: prof.grid.iter().map(|a| a.to_degrees()).collect(),
            power: prof.power.clone(),
            n_paths: paths.len(),
        };
        serde_json::to_string(&view).map_err(err_js)
    }
}

#[derive(Serialize)]
struct EmbedView {
    points: Vec<[f64; 2]>,
    truth: Vec<[f64; 2]>,
    n_labeled: usize,
    kl: f64,
    iter: usize,
}

/// Stepwise constrained embedding on a small synthesized dataset, for
/// animating convergence in the browser.
#[wasm_bindgen]
pub struct EmbedDemo {
    p: DMatrix<f64>,
    z: DMatrix<f64>,
    z_prev: DMatrix<f64>,
    labels: Vec<Vec2>,
    truth: Vec<Vec2>,
    learning_rate: f64,
    momentum: f64,
    iter: usize,
}

#[wasm_bindgen]
impl EmbedDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, num_labeled: usize, num_unlabeled: usize) -> Result<EmbedDemo, JsValue> {
        let spec = manhattan_reduced(seed as u64);
        let scene = build_scene(&spec).map_err(err_js)?;
        let sampling = SamplingParams {
            num_labeled,
            num_unlabeled,
            spacing_m: 4.0,
        };
        let ds = generate_dataset(&scene, &sampling, seed as u64).map_err(err_js)?;
        let d = featurize_dataset(&ds, &FeatureParams { grid_size: 121, k_graph: 8 }).map_err(err_js)?;
        let labels = ds.positions[..ds.n_labeled].to_vec();
        let truth = ds.positions[ds.n_labeled..].to_vec();
        let bw = calibrate_bandwidths(&d.d, 12.0_f64.min(ds.len() as f64 / 3.0)).map_err(err_js)?;
        let p = joint_probabilities(&d.d, &bw.sigmas).map_err(err_js)?;
        let z = initialize_embedding(&d, &labels, seed as u64).map_err(err_js)?;
        Ok(EmbedDemo {
            z_prev: z.clone(),
            p,
            z,
            labels,
            truth,
            learning_rate: 300.0,
            momentum: 0.6,
            iter: 0,
        })
    }

    /// Advance the optimizer and return the current embedding as JSON.
    pub fn step(&mut self, iters: usize) -> Result<String, JsValue> {
        let l = self.labels.len();
        for _ in 0..iters {
            let g = gradient(&self.p, &self.z);
            let next = DMatrix::from_fn(self.z.nrows(), 2, |i, c| {
                self.z[(i, c)] - self.learning_rate * g[(i, c)]
                    + self.momentum * (self.z[(i, c)] - self.z_prev[(i, c)])
            });
            self.z_prev = std::mem::replace(&mut self.z, next);
            for (i, y) in self.labels.iter().enumerate().take(l) {
                self.z[(i, 0)] = y.x;
                self.z[(i, 1)] = y.y;
            }
            self.iter += 1;
        }
        let kl = kl_objective(&self.p, &low_dim_affinities(&self.z));
        let view = EmbedView {
            points: (0..self.z.nrows()).map(|i| [self.z[(i, 0)], self.z[(i, 1)]]).collect(),
            truth: self.truth.iter().map(|t| [t.x, t.y]).collect(),
            n_labeled: l,
            kl,
            iter: self.iter,
        };
        serde_json::to_string(&view).map_err(err_js)
    }
}
