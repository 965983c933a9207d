//! Scene description: walls, base stations, street polylines for UE sampling.

use crate::error::{Error, Result};
use crate::geom::{Rect, Segment, Vec2};
use crate::rng::derive_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One wall in the scene spec. `eps_r`, when omitted, is drawn from U[3, 7]
/// at build time using the spec seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WallSpec {
    pub a: [f64; 2],
    pub b: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_r: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BsSpec {
    pub id: usize,
    pub position: [f64; 2],
    /// Broadside direction of the ULA (normalized at build time).
    pub array_normal: [f64; 2],
    #[serde(default = "default_antennas")]
    pub antennas: usize,
    #[serde(default = "default_spacing")]
    pub spacing_wl: f64,
}

fn default_antennas() -> usize {
    16
}

fn default_spacing() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "default_subcarriers")]
    pub subcarriers: usize,
    /// Channel vector realizations averaged into one covariance sample.
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// SNR (dB) of a LOS path at the reference distance, fixing noise_std.
    #[serde(default = "default_ref_snr")]
    pub ref_snr_db: f64,
    #[serde(default = "default_ref_dist")]
    pub ref_distance_m: f64,
    #[serde(default = "default_bounces")]
    pub max_bounces: usize,
    /// Samples whose total received power falls below this (linear) floor
    /// are marked absent, like a UE whose pilots a BS never decodes.
    #[serde(default)]
    pub detection_floor: f64,
}

fn default_carrier() -> f64 {
    28e9
}
fn default_bandwidth() -> f64 {
    256e6
}
fn default_subcarriers() -> usize {
    128
}
fn default_realizations() -> usize {
    32
}
fn default_ref_snr() -> f64 {
    20.0
}
fn default_ref_dist() -> f64 {
    100.0
}
fn default_bounces() -> usize {
    2
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            carrier_hz: default_carrier(),
            bandwidth_hz: default_bandwidth(),
            subcarriers: default_subcarriers(),
            realizations: default_realizations(),
            ref_snr_db: default_ref_snr(),
            ref_distance_m: default_ref_dist(),
            max_bounces: default_bounces(),
            detection_floor: 0.0,
        }
    }
}

impl ChannelParams {
    pub fn wavelength(&self) -> f64 {
        crate::channel::SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Noise std per antenna element derived from the reference SNR rule:
    /// a unit-gain LOS path at `ref_distance_m` has amplitude lambda/(4 pi d).
    pub fn noise_std(&self) -> f64 {
        let amp = self.wavelength() / (4.0 * std::f64::consts::PI * self.ref_distance_m);
        amp * 10f64.powf(-self.ref_snr_db / 20.0)
    }
}

/// Structured scene file (JSON on disk).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneSpec {
    pub area: [[f64; 2]; 2],
    pub walls: Vec<WallSpec>,
    pub bs: Vec<BsSpec>,
    /// Street polylines the UE traces follow.
    pub streets: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub segment: Segment,
    pub eps_r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsConfig {
    pub id: usize,
    pub position: Vec2,
    pub array_normal: Vec2,
    pub antennas: usize,
    pub spacing_wl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub area: Rect,
    pub walls: Vec<Wall>,
    pub bs_list: Vec<BsConfig>,
    pub streets: Vec<Vec<Vec2>>,
    pub channel: ChannelParams,
    pub seed: u64,
}

/// Validate a spec and materialize it: permittivities not pinned in the
/// file are drawn from U[3, 7] with the spec seed.
pub fn build_scene(spec: &SceneSpec) -> Result<Scene> {
    let area = Rect {
        min: Vec2::new(spec.area[0][0], spec.area[0][1]),
        max: Vec2::new(spec.area[1][0], spec.area[1][1]),
    };
    if area.min.x >= area.max.x || area.min.y >= area.max.y {
        return Err(Error::validation("area bounding box is empty"));
    }
    let mut eps_rng = derive_rng(spec.seed, "scene/eps_r", &[]);
    let mut walls = Vec::with_capacity(spec.walls.len());
    for (i, w) in spec.walls.iter().enumerate() {
        let segment = Segment::new(Vec2::new(w.a[0], w.a[1]), Vec2::new(w.b[0], w.b[1]));
        if segment.length() <= 0.0 {
            return Err(Error::validation(format!("wall {i} is degenerate (zero length)")));
        }
        let eps_r = match w.eps_r {
            Some(e) => e,
            None => eps_rng.gen_range(3.0..7.0),
        };
        if eps_r < 1.0 {
            return Err(Error::validation(format!(
                "wall {i}: relative permittivity {eps_r} < 1"
            )));
        }
        walls.push(Wall { segment, eps_r });
    }
    let mut bs_list = Vec::with_capacity(spec.bs.len());
    for b in &spec.bs {
        let position = Vec2::new(b.position[0], b.position[1]);
        if !area.contains(position) {
            return Err(Error::validation(format!(
                "BS {} at ({}, {}) lies outside the area",
                b.id, position.x, position.y
            )));
        }
        let normal = Vec2::new(b.array_normal[0], b.array_normal[1]);
        if normal.norm() <= 0.0 {
            return Err(Error::validation(format!("BS {}: zero array normal", b.id)));
        }
        if b.antennas < 2 {
            return Err(Error::validation(format!(
                "BS {}: antenna count {} < 2",
                b.id, b.antennas
            )));
        }
        if b.spacing_wl <= 0.0 {
            return Err(Error::validation(format!("BS {}: nonpositive spacing", b.id)));
        }
        bs_list.push(BsConfig {
            id: b.id,
            position,
            array_normal: normal.normalized(),
            antennas: b.antennas,
            spacing_wl: b.spacing_wl,
        });
    }
    let streets = spec
        .streets
        .iter()
        .map(|poly| poly.iter().map(|p| Vec2::new(p[0], p[1])).collect())
        .collect();
    Ok(Scene {
        area,
        walls,
        bs_list,
        streets,
        channel: spec.channel.clone(),
        seed: spec.seed,
    })
}

fn block_walls(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<WallSpec> {
    vec![
        WallSpec { a: [x0, y0], b: [x1, y0], eps_r: None },
        WallSpec { a: [x1, y0], b: [x1, y1], eps_r: None },
        WallSpec { a: [x1, y1], b: [x0, y1], eps_r: None },
        WallSpec { a: [x0, y1], b: [x0, y0], eps_r: None },
    ]
}

/// Urban grid: 3x3 building blocks in a 200x200 m area, 8 BSs at the street
/// ends with arrays pointed down the corridors.
pub fn manhattan_default(seed: u64) -> SceneSpec {
    // streets of width 12.5 m centered at 6.25, 68.75, 131.25, 193.75
    let lo = [12.5, 75.0, 137.5];
    let hi = [62.5, 125.0, 187.5];
    let mut walls = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            walls.extend(block_walls(lo[i], lo[j], hi[i], hi[j]));
        }
    }
    let centers = [6.25, 68.75, 131.25, 193.75];
    let mut streets = Vec::new();
    for &c in &centers {
        streets.push(vec![[c, 0.0], [c, 200.0]]);
        streets.push(vec![[0.0, c], [200.0, c]]);
    }
    // one BS at each end of the two interior streets per axis, broadside
    // pointed down the street so the whole corridor is in the front half-plane
    let bs = vec![
        BsSpec { id: 0, position: [68.75, 4.4], array_normal: [0.0, 1.0], antennas: 16, spacing_wl: 0.5 },
        BsSpec { id: 1, position: [131.25, 4.4], array_normal: [0.0, 1.0], antennas: 16, spacing_wl: 0.5 },
        BsSpec { id: 2, position: [68.75, 195.6], array_normal: [0.0, -1.0], antennas: 16, spacing_wl: 0.5 },
        BsSpec { id: 3, position: [131.25, 195.6], array_normal: [0.0, -1.0], antennas: 16, spacing_wl: 0.5 },
        BsSpec { id: 4, position: [4.4, 68.75], array_normal: [1.0, 0.0], antennas: 16, spacing_wl: 0.5 },
        BsSpec { id: 5, position: [4.4, 131.25], array_normal: [1.0, 0.0], antennas: 16, spacing_wl: 0.5 },
        BsSpec { id: 6, position: [195.6, 68.75], array_normal: [-1.0, 0.0], antennas: 16, spacing_wl: 0.5 },
        BsSpec { id: 7, position: [195.6, 131.25], array_normal: [-1.0, 0.0], antennas: 16, spacing_wl: 0.5 },
    ];
    SceneSpec {
        area: [[0.0, 0.0], [200.0, 200.0]],
        walls,
        bs,
        streets,
        channel: ChannelParams::default(),
        seed,
    }
}

/// Reduced scenario: 2x2 blocks in a 130x130 m area, 4 BSs.
pub fn manhattan_reduced(seed: u64) -> SceneSpec {
    let lo = [10.0, 70.0];
    let hi = [60.0, 120.0];
    let mut walls = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            walls.extend(block_walls(lo[i], lo[j], hi[i], hi[j]));
        }
    }
    let centers = [5.0, 65.0, 125.0];
    let mut streets = Vec::new();
    for &c in &centers {
        streets.push(vec![[c, 0.0], [c, 130.0]]);
        streets.push(vec![[0.0, c], [130.0, c]]);
    }
    let bs = vec![
        BsSpec { id: 0, position: [65.0, 4.4], array_normal: [0.0, 1.0], antennas: 16, spacing_wl: 0.5 },
        BsSpec { id: 1, position: [125.6, 65.0], array_normal: [-1.0, 0.0], antennas: 16, spacing_wl: 0.5 },
        BsSpec { id: 2, position: [65.0, 125.6], array_normal: [0.0, -1.0], antennas: 16, spacing_wl: 0.5 },
        BsSpec { id: 3, position: [4.4, 65.0], array_normal: [1.0, 0.0], antennas: 16, spacing_wl: 0.5 },
    ];
    SceneSpec {
        area: [[0.0, 0.0], [130.0, 130.0]],
        walls,
        bs,
        streets,
        channel: ChannelParams::default(),
        seed,
    }
}
