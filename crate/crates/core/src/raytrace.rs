//! Image-method multipath tracing over a 2D wall scene.

use crate::error::{Error, Result};
use crate::geom::{Segment, Vec2};
use crate::scene::{BsConfig, Scene};
use serde::{Deserialize, Serialize};

const ENDPOINT_EPS: f64 = 1e-7;

/// One specular propagation path between a BS array and a UE position.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Path {
    /// Direction of arrival at the array, radians from broadside,
    /// positive counterclockwise, in (-pi/2, pi/2).
    pub doa: f64,
    pub total_length: f64,
    /// Product of the Fresnel reflection coefficients along the path.
    pub cum_reflection_gain: f64,
    pub bounce_count: usize,
    /// Geometry of the path, BS end first (for inspection/plotting).
    pub vertices: Vec<Vec2>,
}

/// TE (perpendicular polarization) Fresnel reflection coefficient for a ray
/// hitting a dielectric with relative permittivity `eps_r` at incidence
/// angle `theta_i` from the surface normal. Real-valued for eps_r >= 1.
pub fn fresnel_coefficient(theta_i: f64, eps_r: f64) -> f64 {
    let c = theta_i.cos();
    let s2 = theta_i.sin().powi(2);
    let root = (eps_r - s2).sqrt();
    (c - root) / (c + root)
}

fn leg_visible(scene: &Scene, from: Vec2, to: Vec2) -> bool {
    let leg = Segment::new(from, to);
    for wall in &scene.walls {
        if let Some((t, _)) = leg.intersect_param(&wall.segment) {
            if t > ENDPOINT_EPS && t < 1.0 - ENDPOINT_EPS {
                return false;
            }
        }
    }
    true
}

fn doa_from_broadside(bs: &BsConfig, first_point: Vec2) -> f64 {
    let dir = (first_point - bs.position).normalized();
    bs.array_normal.cross(dir).atan2(bs.array_normal.dot(dir))
}

/// Validate a mirror-image wall sequence against the actual scene and turn
/// it into a `Path`. `images[i]` is the BS position mirrored across the
/// first `i + 1` walls of the sequence.
fn realize_sequence(
    scene: &Scene,
    bs: &BsConfig,
    ue: Vec2,
    seq: &[usize],
    images: &[Vec2],
) -> Option<Path> {
    let k = seq.len();
    // Backtrace reflection points from the UE toward the BS.
    let mut reflection_points = vec![Vec2::new(0.0, 0.0); k];
    let mut target = ue;
    for i in (0..k).rev() {
        let wall = &scene.walls[seq[i]].segment;
        let leg = Segment::new(target, images[i]);
        let (t, u) = leg.intersect_param(wall)?;
        if t <= ENDPOINT_EPS
            || t >= 1.0 - ENDPOINT_EPS
            || u <= ENDPOINT_EPS
            || u >= 1.0 - ENDPOINT_EPS
        {
            return None;
        }
        let p = wall.point_at(u);
        reflection_points[i] = p;
        target = p;
    }
    // Full vertex chain BS -> p_1 -> ... -> p_k -> UE.
    let mut vertices = Vec::with_capacity(k + 2);
    vertices.push(bs.position);
    vertices.extend(reflection_points.iter().copied());
    vertices.push(ue);
    // Occlusion check per leg.
    for w in vertices.windows(2) {
        if !leg_visible(scene, w[0], w[1]) {
            return None;
        }
    }
    let doa = doa_from_broadside(bs, vertices[1]);
    if doa.abs() >= std::f64::consts::FRAC_PI_2 {
        return None;
    }
    let mut total_length = 0.0;
    for w in vertices.windows(2) {
        total_length += w[0].distance(w[1]);
    }
    let mut gain = 1.0;
    for (i, &wi) in seq.iter().enumerate() {
        let wall = &scene.walls[wi];
        let incoming = (reflection_points[i] - vertices[i]).normalized();
        let cos_inc = incoming.dot(wall.segment.normal()).abs().clamp(0.0, 1.0);
        let theta_i = cos_inc.acos();
        gain *= fresnel_coefficient(theta_i, wall.eps_r);
    }
    Some(Path {
        doa,
        total_length,
        cum_reflection_gain: gain,
        bounce_count: k,
        vertices,
    })
}

/// Enumerate the LOS path plus all unobstructed specular reflections of
/// order up to `max_bounces` between `bs` and `ue`.
pub fn trace_paths(scene: &Scene, bs: &BsConfig, ue: Vec2, max_bounces: usize) -> Result<Vec<Path>> {
    if max_bounces > 5 {
        return Err(Error::validation(format!(
            "max_bounces {max_bounces} out of range 0..=5"
        )));
    }
    if ue.distance(bs.position) < 1e-9 {
        return Err(Error::validation(format!(
            "UE coincides with BS {} (undefined DOA)",
            bs.id
        )));
    }
    let mut paths = Vec::new();
    if leg_visible(scene, bs.position, ue) {
        let doa = doa_from_broadside(bs, ue);
        if doa.abs() < std::f64::consts::FRAC_PI_2 {
            paths.push(Path {
                doa,
                total_length: ue.distance(bs.position),
                cum_reflection_gain: 1.0,
                bounce_count: 0,
                vertices: vec![bs.position, ue],
            });
        }
    }
    // Depth-first enumeration of wall sequences without immediate repeats.
    let mut seq: Vec<usize> = Vec::new();
    let mut images: Vec<Vec2> = Vec::new();
    fn recurse(
        scene: &Scene,
        bs: &BsConfig,
        ue: Vec2,
        max_bounces: usize,
        seq: &mut Vec<usize>,
        images: &mut Vec<Vec2>,
        out: &mut Vec<Path>,
    ) {
        if seq.len() == max_bounces {
            return;
        }
        for w in 0..scene.walls.len() {
            if seq.last() == Some(&w) {
                continue;
            }
            let base = *images.last().unwrap_or(&bs.position);
            let img = scene.walls[w].segment.mirror(base);
            seq.push(w);
            images.push(img);
            if let Some(path) = realize_sequence(scene, bs, ue, seq, images) {
                out.push(path);
            }
            recurse(scene, bs, ue, max_bounces, seq, images, out);
            seq.pop();
            images.pop();
        }
    }
    recurse(scene, bs, ue, max_bounces, &mut seq, &mut images, &mut paths);
    // Canonical order, independent of wall labeling.
    paths.sort_by(|a, b| {
        a.bounce_count
            .cmp(&b.bounce_count)
            .then(a.total_length.total_cmp(&b.total_length))
            .then(a.doa.total_cmp(&b.doa))
    });
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_scene, BsSpec, ChannelParams, SceneSpec, WallSpec};
    use approx::assert_relative_eq;

    fn open_scene(walls: Vec<WallSpec>) -> Scene {
        build_scene(&SceneSpec {
            area: [[-100.0, -100.0], [100.0, 100.0]],
            walls,
            bs: vec![BsSpec {
                id: 0,
                position: [0.0, 0.0],
                array_normal: [1.0, 0.0],
                antennas: 4,
                spacing_wl: 0.5,
            }],
            streets: vec![],
            channel: ChannelParams::default(),
            seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn fresnel_normal_incidence() {
        assert_relative_eq!(fresnel_coefficient(0.0, 4.0), -1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn fresnel_no_contrast_is_zero() {
        for theta in [0.0, 0.3, 1.0, 1.5] {
            assert_relative_eq!(fresnel_coefficient(theta, 1.0), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fresnel_grazing_limit() {
        let g = fresnel_coefficient(std::f64::consts::FRAC_PI_2 - 1e-6, 4.0);
        assert!((g + 1.0).abs() < 1e-3, "grazing coefficient {g}");
    }

    #[test]
    fn los_broadside_path() {
        let scene = open_scene(vec![]);
        let bs = scene.bs_list[0].clone();
        let paths = trace_paths(&scene, &bs, Vec2::new(10.0, 0.0), 2).unwrap();
        assert_eq!(paths.len(), 1);
        assert_relative_eq!(paths[0].doa, 0.0);
        assert_relative_eq!(paths[0].total_length, 10.0);
        assert_relative_eq!(paths[0].cum_reflection_gain, 1.0);
        assert_eq!(paths[0].bounce_count, 0);
    }

    #[test]
    fn perpendicular_wall_blocks_los() {
        let scene = open_scene(vec![WallSpec {
            a: [5.0, -3.0],
            b: [5.0, 3.0],
            eps_r: Some(4.0),
        }]);
        let bs = scene.bs_list[0].clone();
        let paths = trace_paths(&scene, &bs, Vec2::new(10.0, 0.0), 0).unwrap();
        assert!(paths.is_empty());
    }

    #[test]
    fn mirror_wall_first_order_path_matches_image_construction() {
        // Wall parallel to the BS-UE axis at offset d = 5.
        let d = 5.0;
        let scene = open_scene(vec![WallSpec {
            a: [-50.0, d],
            b: [50.0, d],
            eps_r: Some(4.0),
        }]);
        let bs = scene.bs_list[0].clone();
        let ue = Vec2::new(20.0, 0.0);
        let paths = trace_paths(&scene, &bs, ue, 1).unwrap();
        assert_eq!(paths.len(), 2);
        let refl = &paths[1];
        assert_eq!(refl.bounce_count, 1);
        // Brute-force oracle: reflect the UE across the wall line y = d.
        let ue_img = Vec2::new(ue.x, 2.0 * d - ue.y);
        let expect_len = bs.position.distance(ue_img);
        let expect_doa = {
            let dir = (ue_img - bs.position).normalized();
            bs.array_normal.cross(dir).atan2(bs.array_normal.dot(dir))
        };
        assert_relative_eq!(refl.total_length, expect_len, epsilon = 1e-9);
        assert_relative_eq!(refl.doa, expect_doa, epsilon = 1e-9);
        // Incidence angle from the wall normal, for the Fresnel oracle.
        let theta_i = ((ue.x - bs.position.x) / 2.0).atan2(d).abs();
        assert_relative_eq!(
            refl.cum_reflection_gain,
            fresnel_coefficient(theta_i, 4.0),
            epsilon = 1e-9
        );
    }

    #[test]
    fn ue_at_bs_is_an_error() {
        let scene = open_scene(vec![]);
        let bs = scene.bs_list[0].clone();
        assert!(trace_paths(&scene, &bs, Vec2::new(0.0, 0.0), 1).is_err());
    }

    #[test]
    fn path_count_monotone_in_bounce_order() {
        let scene = crate::scene::build_scene(&crate::scene::manhattan_reduced(3)).unwrap();
        let bs = scene.bs_list[0].clone();
        let ue = Vec2::new(65.0, 30.0);
        let mut prev = 0;
        for order in 0..=3 {
            let n = trace_paths(&scene, &bs, ue, order).unwrap().len();
            assert!(n >= prev, "path count dropped from {prev} to {n} at order {order}");
            prev = n;
        }
    }

    #[test]
    fn paths_invariant_under_wall_relabeling() {
        let walls = vec![
            WallSpec { a: [-30.0, 8.0], b: [30.0, 8.0], eps_r: Some(4.0) },
            WallSpec { a: [-30.0, -6.0], b: [30.0, -6.0], eps_r: Some(5.5) },
        ];
        let mut reversed = walls.clone();
        reversed.reverse();
        let s1 = open_scene(walls);
        let s2 = open_scene(reversed);
        let bs = s1.bs_list[0].clone();
        let ue = Vec2::new(15.0, 1.0);
        let p1 = trace_paths(&s1, &bs, ue, 2).unwrap();
        let p2 = trace_paths(&s2, &bs, ue, 2).unwrap();
        assert_eq!(p1.len(), p2.len());
        for (a, b) in p1.iter().zip(&p2) {
            assert_relative_eq!(a.total_length, b.total_length, epsilon = 1e-9);
            assert_relative_eq!(a.doa, b.doa, epsilon = 1e-9);
            assert_relative_eq!(a.cum_reflection_gain, b.cum_reflection_gain, epsilon = 1e-9);
        }
    }
}
