//! Pipeline stages: simulate -> featurize -> embed/baseline -> evaluate,
//! communicating only through files in the output directory, with a
//! manifest recording config hashes and seeds for staleness detection.

use crate::baselines::{knn_localize, sle_localize, KnnParams, SleParams};
use crate::dataset::{generate_dataset, read_dataset, read_positions, write_dataset, Dataset, SamplingParams};
use crate::error::{Error, Result};
use crate::eval::{build_report, default_thresholds, mean_localization_error, EvalReport};
use crate::features::{
    angular_power_profile_spaced, complete_missing, fuse_global, local_dissimilarity,
    DissimilarityMatrix,
};
use crate::geom::Vec2;
use crate::rng::derive_seed;
use crate::scene::{build_scene, manhattan_default, manhattan_reduced, Scene, SceneSpec};
use crate::stsne::{run_stsne, unlabeled_estimates, EmbeddingState, StsneParams};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureParams {
    /// Angular grid size G of the power profiles.
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    /// Neighbor count of the geodesic-completion graph.
    #[serde(default = "default_k_graph")]
    pub k_graph: usize,
}

fn default_grid() -> usize {
    181
}

fn default_k_graph() -> usize {
    10
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams { grid_size: default_grid(), k_graph: default_k_graph() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Inline scene spec; alternatively `scene_path` or `scene_builtin`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_path: Option<PathBuf>,
    /// "manhattan-default" (8 BSs, 200x200 m) or "manhattan-reduced"
    /// (4 BSs, 130x130 m).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_builtin: Option<String>,
    pub sampling: SamplingParams,
    #[serde(default)]
    pub features: FeatureParams,
    #[serde(default)]
    pub stsne: StsneParams,
    #[serde(default)]
    pub knn: KnnParams,
    #[serde(default)]
    pub sle: SleParams,
    /// St-SNE restarts; the embedding with the lowest final KL wins.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Repetitions per point in parameter sweeps.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_restarts() -> usize {
    1
}

fn default_repetitions() -> usize {
    10
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    /// Resolve whichever of the three scene sources is set.
    pub fn resolve_scene(&self, base_dir: &Path) -> Result<SceneSpec> {
        let mut spec = if let Some(spec) = &self.scene {
            spec.clone()
        } else if let Some(p) = &self.scene_path {
            let full = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
            serde_json::from_str(&fs::read_to_string(&full)?)?
        } else {
            match self.scene_builtin.as_deref() {
                Some("manhattan-default") | None => manhattan_default(self.seed),
                Some("manhattan-reduced") => manhattan_reduced(self.seed),
                Some(other) => {
                    return Err(Error::validation(format!(
                        "unknown builtin scene `{other}` (expected manhattan-default or manhattan-reduced)"
                    )))
                }
            }
        };
        spec.seed = self.seed;
        Ok(spec)
    }

    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_digest(&hasher.finalize())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(path: &Path) -> Result<String> {
    let data = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&data);
    Ok(hex_digest(&hasher.finalize()))
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, ManifestEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub unix_time: u64,
}

impl Manifest {
    pub fn load(out_dir: &Path) -> Result<Manifest> {
        let path = out_dir.join("manifest.json");
        if !path.exists() {
            return Ok(Manifest::default());
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)?;
        fs::write(
            out_dir.join("manifest.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }

    fn record(
        &mut self,
        stage: &str,
        config_hash: &str,
        seed: u64,
        inputs: BTreeMap<String, String>,
        outputs: Vec<String>,
    ) {
        let unix_time = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.stages.insert(
            stage.to_string(),
            ManifestEntry {
                config_hash: config_hash.to_string(),
                seed,
                inputs,
                outputs,
                unix_time,
            },
        );
    }
}

fn check_staleness(manifest: &Manifest, out_dir: &Path, hash: &str, force: bool) -> Result<()> {
    for (stage, entry) in &manifest.stages {
        if entry.config_hash != hash
            && entry.outputs.iter().any(|o| out_dir.join(o).exists())
            && !force
        {
            return Err(Error::StaleArtifacts(stage.clone()));
        }
    }
    Ok(())
}

fn require_artifact(out_dir: &Path, rel: &str, stage: &str, run_first: &str) -> Result<PathBuf> {
    let path = out_dir.join(rel);
    if !path.exists() {
        return Err(Error::MissingPrerequisite {
            stage: stage.to_string(),
            run_first: run_first.to_string(),
        });
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// in-memory pipeline pieces (shared by stages, sweep, compare and tests)
// ---------------------------------------------------------------------------

/// Build the scene and synthesize the dataset in memory.
pub fn simulate_in_memory(config: &PipelineConfig, base_dir: &Path) -> Result<(Scene, Dataset)> {
    let spec = config.resolve_scene(base_dir)?;
    let scene = build_scene(&spec)?;
    let ds = generate_dataset(&scene, &config.sampling, config.seed)?;
    Ok((scene, ds))
}

/// Per-BS profiles -> Hellinger dissimilarities -> quality-weighted fusion
/// -> geodesic completion.
pub fn featurize_dataset(ds: &Dataset, features: &FeatureParams) -> Result<DissimilarityMatrix> {
    let n = ds.len();
    let mut locals = Vec::with_capacity(ds.samples.len());
    let mut qualities = Vec::with_capacity(ds.samples.len());
    for (b, per_bs) in ds.samples.iter().enumerate() {
        let profiles: Vec<Option<crate::features::AngularProfile>> = per_bs
            .iter()
            .map(|cs| {
                if cs.is_present() {
                    angular_power_profile_spaced(cs, features.grid_size, ds.spacings_wl[b]).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        let mut local = DMatrix::from_element(n, n, 0.0);
        for i in 0..n {
            if profiles[i].is_none() {
                continue;
            }
            for j in (i + 1)..n {
                if let (Some(pi), Some(pj)) = (&profiles[i], &profiles[j]) {
                    let v = local_dissimilarity(pi, pj)?;
                    local[(i, j)] = v;
                    local[(j, i)] = v;
                }
            }
        }
        locals.push(local);
        qualities.push(per_bs.iter().map(|cs| cs.rx_power).collect::<Vec<f64>>());
    }
    let fused = fuse_global(&locals, &qualities, ds.n_labeled)?;
    complete_missing(&fused, features.k_graph)
}

/// Run St-SNE `restarts` times with derived seeds; keep the lowest final KL.
pub fn embed_with_restarts(
    d: &DissimilarityMatrix,
    labels: &[Vec2],
    params: &StsneParams,
    restarts: usize,
) -> Result<EmbeddingState> {
    let restarts = restarts.max(1);
    let mut best: Option<EmbeddingState> = None;
    for r in 0..restarts {
        let mut p = params.clone();
        if restarts > 1 {
            p.seed = derive_seed(params.seed, "embed/restart", &[r as u64]);
        }
        let state = run_stsne(d, labels, &p)?;
        let final_kl = state.kl_trace.last().copied().unwrap_or(0.0);
        let better = match &best {
            None => true,
            Some(b) => final_kl < b.kl_trace.last().copied().unwrap_or(0.0),
        };
        if better {
            best = Some(state);
        }
    }
    Ok(best.expect("at least one restart"))
}

// ---------------------------------------------------------------------------
// artifact I/O
// ---------------------------------------------------------------------------

pub fn write_dissimilarity(path: &Path, d: &DissimilarityMatrix) -> Result<()> {
    let n = d.len();
    let mut out = String::new();
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:.16e}", d.d[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_dissimilarity(path: &Path, n_labeled: usize) -> Result<DissimilarityMatrix> {
    let text = fs::read_to_string(path)?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            line.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::validation(format!("dissimilarity.csv: {e}")))
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::dimension("dissimilarity.csv is not square"));
    }
    let d = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    Ok(DissimilarityMatrix { d, n_labeled })
}

fn write_coords(path: &Path, coords: &[(usize, Vec2)]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "index,x_m,y_m")?;
    for (i, p) in coords {
        writeln!(f, "{},{},{}", i, p.x, p.y)?;
    }
    Ok(())
}

pub fn read_coords(path: &Path) -> Result<Vec<Vec2>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            let x: f64 = cols[1].parse().map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
            let y: f64 = cols[2].parse().map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
            Ok(Vec2::new(x, y))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// stages
// ---------------------------------------------------------------------------

pub const STAGES: &[&str] = &["simulate", "featurize", "embed", "baseline", "evaluate"];

pub fn stage_simulate(config: &PipelineConfig, base_dir: &Path, out_dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    let hash = config.config_hash();
    let mut manifest = Manifest::load(out_dir)?;
    check_staleness(&manifest, out_dir, &hash, force)?;
    let (scene, ds) = simulate_in_memory(config, base_dir)?;
    let dataset_dir = out_dir.join("dataset");
    write_dataset(&dataset_dir, &ds, &scene, serde_json::to_value(config)?)?;
    let mut outputs = vec!["dataset/positions.csv".to_string(), "dataset/meta.json".to_string()];
    for id in &ds.bs_ids {
        outputs.push(format!("dataset/bs_{id}.csv"));
    }
    manifest.record("simulate", &hash, config.seed, BTreeMap::new(), outputs.clone());
    manifest.save(out_dir)?;
    Ok(outputs.iter().map(|o| out_dir.join(o)).collect())
}

pub fn stage_featurize(config: &PipelineConfig, out_dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    let hash = config.config_hash();
    let mut manifest = Manifest::load(out_dir)?;
    check_staleness(&manifest, out_dir, &hash, force)?;
    let meta = require_artifact(out_dir, "dataset/meta.json", "featurize", "simulate")?;
    let ds = read_dataset(&out_dir.join("dataset"))?;
    let d = featurize_dataset(&ds, &config.features)?;
    let d_path = out_dir.join("dissimilarity.csv");
    write_dissimilarity(&d_path, &d)?;
    let features_meta = serde_json::json!({
        "grid_size": config.features.grid_size,
        "k_graph": config.features.k_graph,
        "fusion_rule": "hellinger-pap/min-rx-power-weighted-mean/geodesic-completion",
        "n": d.len(),
        "n_labeled": d.n_labeled,
    });
    fs::write(out_dir.join("features_meta.json"), serde_json::to_string_pretty(&features_meta)?)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("dataset/meta.json".to_string(), hash_file(&meta)?);
    manifest.record(
        "featurize",
        &hash,
        config.seed,
        inputs,
        vec!["dissimilarity.csv".to_string(), "features_meta.json".to_string()],
    );
    manifest.save(out_dir)?;
    Ok(vec![d_path, out_dir.join("features_meta.json")])
}

fn load_d_and_positions(out_dir: &Path, stage: &str) -> Result<(DissimilarityMatrix, Vec<Vec2>, usize)> {
    let d_path = require_artifact(out_dir, "dissimilarity.csv", stage, "featurize")?;
    let pos_path = require_artifact(out_dir, "dataset/positions.csv", stage, "simulate")?;
    let (positions, n_labeled) = read_positions(&pos_path)?;
    let d = read_dissimilarity(&d_path, n_labeled)?;
    if d.len() != positions.len() {
        return Err(Error::dimension(format!(
            "dissimilarity.csv has {} rows but positions.csv {}",
            d.len(),
            positions.len()
        )));
    }
    Ok((d, positions, n_labeled))
}

pub fn stage_embed(config: &PipelineConfig, out_dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    let hash = config.config_hash();
    let mut manifest = Manifest::load(out_dir)?;
    check_staleness(&manifest, out_dir, &hash, force)?;
    let (d, positions, n_labeled) = load_d_and_positions(out_dir, "embed")?;
    let labels = positions[..n_labeled].to_vec();
    let mut params = config.stsne.clone();
    params.seed = config.seed;
    let state = embed_with_restarts(&d, &labels, &params, config.restarts)?;
    let coords: Vec<(usize, Vec2)> = (0..state.z.nrows())
        .map(|i| (i, Vec2::new(state.z[(i, 0)], state.z[(i, 1)])))
        .collect();
    let emb_path = out_dir.join("embedding.csv");
    write_coords(&emb_path, &coords)?;
    let mut f = fs::File::create(out_dir.join("kl_trace.csv"))?;
    writeln!(f, "iter,kl")?;
    for (t, kl) in state.kl_trace.iter().enumerate() {
        writeln!(f, "{},{}", t, kl)?;
    }
    let mut inputs = BTreeMap::new();
    inputs.insert("dissimilarity.csv".to_string(), hash_file(&out_dir.join("dissimilarity.csv"))?);
    manifest.record(
        "embed",
        &hash,
        config.seed,
        inputs,
        vec!["embedding.csv".to_string(), "kl_trace.csv".to_string()],
    );
    manifest.save(out_dir)?;
    Ok(vec![emb_path, out_dir.join("kl_trace.csv")])
}

pub fn stage_baseline(config: &PipelineConfig, out_dir: &Path, method: &str, force: bool) -> Result<Vec<PathBuf>> {
    let hash = config.config_hash();
    let mut manifest = Manifest::load(out_dir)?;
    check_staleness(&manifest, out_dir, &hash, force)?;
    let (d, positions, n_labeled) = load_d_and_positions(out_dir, "baseline")?;
    let labels = positions[..n_labeled].to_vec();
    let est = match method {
        "knn" => knn_localize(&d, &labels, config.knn.k)?,
        "sle" => sle_localize(&d, &labels, &config.sle)?,
        other => {
            return Err(Error::validation(format!(
                "unknown baseline `{other}` (expected knn or sle)"
            )))
        }
    };
    let mut coords: Vec<(usize, Vec2)> = labels.iter().cloned().enumerate().collect();
    coords.extend(est.iter().enumerate().map(|(i, p)| (n_labeled + i, *p)));
    let path = out_dir.join(format!("baseline_{method}.csv"));
    write_coords(&path, &coords)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("dissimilarity.csv".to_string(), hash_file(&out_dir.join("dissimilarity.csv"))?);
    manifest.record(
        &format!("baseline_{method}"),
        &hash,
        config.seed,
        inputs,
        vec![format!("baseline_{method}.csv")],
    );
    manifest.save(out_dir)?;
    Ok(vec![path])
}

/// Evaluate whichever estimate files exist against the ground truth.
pub fn stage_evaluate(config: &PipelineConfig, out_dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    let hash = config.config_hash();
    let mut manifest = Manifest::load(out_dir)?;
    check_staleness(&manifest, out_dir, &hash, force)?;
    let pos_path = require_artifact(out_dir, "dataset/positions.csv", "evaluate", "simulate")?;
    let (positions, n_labeled) = read_positions(&pos_path)?;
    let truth = &positions[n_labeled..];
    let candidates = [
        ("stsne", "embedding.csv"),
        ("knn", "baseline_knn.csv"),
        ("sle", "baseline_sle.csv"),
    ];
    let mut reports: Vec<EvalReport> = Vec::new();
    for (method, file) in candidates {
        let path = out_dir.join(file);
        if !path.exists() {
            continue;
        }
        let coords = read_coords(&path)?;
        let est = &coords[n_labeled..];
        reports.push(build_report(method, est, truth, serde_json::to_value(config)?)?);
    }
    if reports.is_empty() {
        return Err(Error::MissingPrerequisite {
            stage: "evaluate".to_string(),
            run_first: "embed (or baseline)".to_string(),
        });
    }
    let mut out = String::from("method,seed,mle_m\n");
    let mut written = Vec::new();
    for r in &reports {
        out.push_str(&format!("{},{},{}\n", r.method, config.seed, r.mle));
        let mut cdf = String::from("threshold_m,fraction\n");
        for (t, fr) in &r.cdf {
            cdf.push_str(&format!("{},{}\n", t, fr));
        }
        let cdf_path = out_dir.join(format!("cdf_{}.csv", r.method));
        fs::write(&cdf_path, cdf)?;
        written.push(cdf_path);
    }
    let report_path = out_dir.join("report.csv");
    fs::write(&report_path, out)?;
    written.push(report_path);
    let mut outputs: Vec<String> = vec!["report.csv".to_string()];
    outputs.extend(reports.iter().map(|r| format!("cdf_{}.csv", r.method)));
    manifest.record("evaluate", &hash, config.seed, BTreeMap::new(), outputs);
    manifest.save(out_dir)?;
    Ok(written)
}

/// One row of a sweep result table.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub mle_mean: f64,
    pub mle_std: f64,
    pub failed: usize,
}

pub const SWEEPABLE: &[&str] = &["perplexity", "learning_rate", "momentum", "iters"];

/// Re-run embed + evaluate for each parameter value, `repetitions` times
/// with derived seeds; diverged runs are counted, not averaged.
pub fn sweep_in_memory(
    d: &DissimilarityMatrix,
    labels: &[Vec2],
    truth: &[Vec2],
    base_params: &StsneParams,
    param_name: &str,
    values: &[f64],
    repetitions: usize,
    master_seed: u64,
) -> Result<Vec<SweepRow>> {
    if !SWEEPABLE.contains(&param_name) {
        return Err(Error::validation(format!(
            "unknown sweep parameter `{param_name}` (valid: {})",
            SWEEPABLE.join(", ")
        )));
    }
    let mut rows = Vec::with_capacity(values.len());
    for (vi, &value) in values.iter().enumerate() {
        let mut mles = Vec::new();
        let mut failed = 0;
        for rep in 0..repetitions {
            let mut params = base_params.clone();
            match param_name {
                "perplexity" => params.perplexity = value,
                "learning_rate" => params.learning_rate = value,
                "momentum" => params.momentum = value,
                "iters" => params.iters = value as usize,
                _ => unreachable!(),
            }
            params.seed = derive_seed(master_seed, "sweep", &[vi as u64, rep as u64]);
            match run_stsne(d, labels, &params) {
                Ok(state) => {
                    let est = unlabeled_estimates(&state);
                    let mle = mean_localization_error(&est, truth)?;
                    if mle.is_finite() {
                        mles.push(mle);
                    } else {
                        failed += 1;
                    }
                }
                Err(Error::Numerical { .. }) => failed += 1,
                Err(e) => return Err(e),
            }
        }
        let (mean, std) = if mles.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let mean = mles.iter().sum::<f64>() / mles.len() as f64;
            let var = mles.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / mles.len() as f64;
            (mean, var.sqrt())
        };
        rows.push(SweepRow { value, mle_mean: mean, mle_std: std, failed });
    }
    Ok(rows)
}

pub fn stage_sweep(
    config: &PipelineConfig,
    out_dir: &Path,
    param_name: &str,
    values: &[f64],
    force: bool,
) -> Result<PathBuf> {
    let hash = config.config_hash();
    let mut manifest = Manifest::load(out_dir)?;
    check_staleness(&manifest, out_dir, &hash, force)?;
    let (d, positions, n_labeled) = load_d_and_positions(out_dir, "sweep")?;
    let labels = positions[..n_labeled].to_vec();
    let truth = &positions[n_labeled..];
    let rows = sweep_in_memory(
        &d,
        &labels,
        truth,
        &config.stsne,
        param_name,
        values,
        config.repetitions,
        config.seed,
    )?;
    let path = out_dir.join(format!("sweep_{param_name}.csv"));
    let mut out = String::from("value,mle_mean,mle_std,failed\n");
    for r in &rows {
        out.push_str(&format!("{},{},{},{}\n", r.value, r.mle_mean, r.mle_std, r.failed));
    }
    fs::write(&path, out)?;
    manifest.record(
        &format!("sweep_{param_name}"),
        &hash,
        config.seed,
        BTreeMap::new(),
        vec![format!("sweep_{param_name}.csv")],
    );
    manifest.save(out_dir)?;
    Ok(path)
}

/// Run every requested method on the identical dataset and D; a per-method
/// failure is recorded without aborting the others.
pub fn compare_in_memory(
    config: &PipelineConfig,
    d: &DissimilarityMatrix,
    labels: &[Vec2],
    truth: &[Vec2],
    methods: &[String],
) -> Result<Vec<(String, std::result::Result<EvalReport, String>)>> {
    let mut out = Vec::new();
    for method in methods {
        let est: std::result::Result<Vec<Vec2>, String> = match method.as_str() {
            "stsne" => {
                let mut params = config.stsne.clone();
                params.seed = config.seed;
                embed_with_restarts(d, labels, &params, config.restarts)
                    .map(|s| unlabeled_estimates(&s))
                    .map_err(|e| e.to_string())
            }
            "knn" => knn_localize(d, labels, config.knn.k).map_err(|e| e.to_string()),
            "sle" => sle_localize(d, labels, &config.sle).map_err(|e| e.to_string()),
            other => Err(format!("unknown method `{other}`")),
        };
        let entry = est.and_then(|est| {
            build_report(method, &est, truth, serde_json::to_value(config).unwrap_or_default())
                .map_err(|e| e.to_string())
        });
        out.push((method.clone(), entry));
    }
    Ok(out)
}

pub fn stage_compare(
    config: &PipelineConfig,
    out_dir: &Path,
    methods: &[String],
    force: bool,
) -> Result<PathBuf> {
    let hash = config.config_hash();
    let mut manifest = Manifest::load(out_dir)?;
    check_staleness(&manifest, out_dir, &hash, force)?;
    let (d, positions, n_labeled) = load_d_and_positions(out_dir, "compare")?;
    let labels = positions[..n_labeled].to_vec();
    let truth = &positions[n_labeled..];
    let results = compare_in_memory(config, &d, &labels, truth, methods)?;
    let mut report = String::from("method,seed,mle_m\n");
    for (method, res) in &results {
        match res {
            Ok(r) => {
                report.push_str(&format!("{},{},{}\n", method, config.seed, r.mle));
                let mut cdf = String::from("threshold_m,fraction\n");
                for (t, fr) in &r.cdf {
                    cdf.push_str(&format!("{},{}\n", t, fr));
                }
                fs::write(out_dir.join(format!("cdf_{method}.csv")), cdf)?;
            }
            Err(msg) => {
                report.push_str(&format!("{},{},failed: {}\n", method, config.seed, msg));
            }
        }
    }
    let path = out_dir.join("report.csv");
    fs::write(&path, report)?;
    manifest.record("compare", &hash, config.seed, BTreeMap::new(), vec!["report.csv".to_string()]);
    manifest.save(out_dir)?;
    Ok(path)
}

/// simulate -> featurize -> embed -> baselines -> evaluate.
pub fn run_all(config: &PipelineConfig, base_dir: &Path, out_dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    stage_simulate(config, base_dir, out_dir, force)?;
    stage_featurize(config, out_dir, force)?;
    stage_embed(config, out_dir, force)?;
    stage_baseline(config, out_dir, "knn", force)?;
    stage_baseline(config, out_dir, "sle", force)?;
    stage_evaluate(config, out_dir, force)
}

/// Threshold grid used by the CDF artifacts.
pub fn cdf_thresholds() -> Vec<f64> {
    default_thresholds()
}
