//! Multi-antenna OFDM channel synthesis from traced paths.

use crate::error::{Error, Result};
use crate::raytrace::Path;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Debug)]
pub struct ChannelVector {
    pub h: DVector<Complex64>,
    pub subcarrier_freq: f64,
}

/// Per-(path, subcarrier) small-scale factor model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmallScale {
    /// g = 1: fully deterministic channel (tests, oracles).
    Unit,
    /// g = exp(j theta), theta ~ U[0, 2pi): unit-magnitude random phasor.
    RandomPhase,
}

/// CSI sample reported by one BS: frequency-domain covariance, or absent
/// when the BS never decoded the UE's pilots.
#[derive(Clone, Debug)]
pub struct CsiSample {
    pub bs_id: usize,
    pub cov: Option<DMatrix<Complex64>>,
    pub rx_power: f64,
}

impl CsiSample {
    pub fn absent(bs_id: usize) -> Self {
        CsiSample { bs_id, cov: None, rx_power: 0.0 }
    }

    pub fn is_present(&self) -> bool {
        self.cov.is_some()
    }
}

/// ULA steering vector: element m is exp(j 2 pi spacing m sin(phi)).
pub fn steering_vector(phi: f64, m: usize, spacing_wl: f64) -> DVector<Complex64> {
    DVector::from_fn(m, |i, _| {
        Complex64::from_polar(1.0, 2.0 * PI * spacing_wl * i as f64 * phi.sin())
    })
}

/// Synthesize one channel vector: sum over paths of
/// gain * free-space decay * carrier phase * small-scale factor * cosine
/// element pattern, times the steering vector, plus estimation noise.
///
/// An empty path list models deep outage and yields noise only.
pub fn synth_channel<R: Rng>(
    paths: &[Path],
    freq: f64,
    antennas: usize,
    spacing_wl: f64,
    noise_std: f64,
    small_scale: SmallScale,
    rng: &mut R,
) -> ChannelVector {
    let lambda = SPEED_OF_LIGHT / freq;
    let mut h = DVector::from_element(antennas, Complex64::new(0.0, 0.0));
    for path in paths {
        let amplitude = lambda / (4.0 * PI * path.total_length);
        let phase = -2.0 * PI * freq * path.total_length / SPEED_OF_LIGHT;
        let g = match small_scale {
            SmallScale::Unit => Complex64::new(1.0, 0.0),
            SmallScale::RandomPhase => {
                Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI))
            }
        };
        let alpha = Complex64::from_polar(amplitude, phase)
            * path.cum_reflection_gain
            * path.doa.cos()
            * g;
        h += steering_vector(path.doa, antennas, spacing_wl) * alpha;
    }
    if noise_std > 0.0 {
        let per_component = noise_std / 2f64.sqrt();
        for i in 0..antennas {
            let re = crate::rng::sample_normal(rng);
            let im = crate::rng::sample_normal(rng);
            h[i] += Complex64::new(re * per_component, im * per_component);
        }
    }
    ChannelVector { h, subcarrier_freq: freq }
}

/// Frequency-domain covariance: mean of h h^H over the realizations.
pub fn sample_covariance(bs_id: usize, channels: &[ChannelVector]) -> Result<CsiSample> {
    let first = channels
        .first()
        .ok_or_else(|| Error::validation("sample_covariance: empty channel list"))?;
    let m = first.h.len();
    let mut cov = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for ch in channels {
        if ch.h.len() != m {
            return Err(Error::dimension(format!(
                "channel vectors of mixed lengths {} and {}",
                m,
                ch.h.len()
            )));
        }
        cov += &ch.h * ch.h.adjoint();
    }
    cov /= Complex64::new(channels.len() as f64, 0.0);
    let rx_power = cov.diagonal().iter().map(|c| c.re).sum();
    Ok(CsiSample { bs_id, cov: Some(cov), rx_power })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::rng::derive_rng;
    use approx::assert_relative_eq;

    fn los_path(length: f64, doa: f64) -> Path {
        Path {
            doa,
            total_length: length,
            cum_reflection_gain: 1.0,
            bounce_count: 0,
            vertices: vec![Vec2::new(0.0, 0.0), Vec2::new(length, 0.0)],
        }
    }

    #[test]
    fn steering_vector_broadside_all_ones() {
        let s = steering_vector(0.0, 4, 0.5);
        for e in s.iter() {
            assert_relative_eq!(e.re, 1.0);
            assert_relative_eq!(e.im, 0.0);
        }
    }

    #[test]
    fn steering_vector_endfire_alternates() {
        let s = steering_vector(std::f64::consts::FRAC_PI_2, 2, 0.5);
        assert_relative_eq!(s[0].re, 1.0);
        assert_relative_eq!(s[1].re, -1.0, epsilon = 1e-12);
        assert!(s[1].im.abs() < 1e-12);
    }

    #[test]
    fn steering_vector_thirty_degrees_phases() {
        let s = steering_vector(std::f64::consts::FRAC_PI_6, 3, 0.5);
        let expected = [0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI];
        for (e, phi) in s.iter().zip(expected) {
            assert_relative_eq!(e.arg().rem_euclid(2.0 * std::f64::consts::PI), phi, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_path_noiseless_is_rank_one_steering() {
        let mut rng = derive_rng(0, "test", &[]);
        let ch = synth_channel(&[los_path(25.0, 0.3)], 28e9, 8, 0.5, 0.0, SmallScale::Unit, &mut rng);
        let s = steering_vector(0.3, 8, 0.5);
        let scale = ch.h[0] / s[0];
        for i in 0..8 {
            let r = ch.h[i] / s[i];
            assert_relative_eq!(r.re, scale.re, epsilon = 1e-12);
            assert_relative_eq!(r.im, scale.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn no_paths_no_noise_is_zero() {
        let mut rng = derive_rng(0, "test", &[]);
        let ch = synth_channel(&[], 28e9, 4, 0.5, 0.0, SmallScale::Unit, &mut rng);
        assert!(ch.h.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn two_path_sum_matches_direct_evaluation() {
        let p1 = los_path(30.0, 0.2);
        let p2 = Path { cum_reflection_gain: -0.4, ..los_path(45.0, -0.7) };
        let freq = 28e9;
        let mut rng = derive_rng(0, "test", &[]);
        let ch = synth_channel(&[p1.clone(), p2.clone()], freq, 4, 0.5, 0.0, SmallScale::Unit, &mut rng);
        let lambda = SPEED_OF_LIGHT / freq;
        let mut expected = DVector::from_element(4, Complex64::new(0.0, 0.0));
        for p in [&p1, &p2] {
            let alpha = Complex64::from_polar(
                lambda / (4.0 * PI * p.total_length),
                -2.0 * PI * freq * p.total_length / SPEED_OF_LIGHT,
            ) * p.cum_reflection_gain
                * p.doa.cos();
            expected += steering_vector(p.doa, 4, 0.5) * alpha;
        }
        for i in 0..4 {
            assert_relative_eq!(ch.h[i].re, expected[i].re, max_relative = 1e-12);
            assert_relative_eq!(ch.h[i].im, expected[i].im, max_relative = 1e-12);
        }
    }

    #[test]
    fn covariance_of_single_vector_is_outer_product() {
        let h = DVector::from_vec(vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25)]);
        let cs = sample_covariance(0, &[ChannelVector { h: h.clone(), subcarrier_freq: 1e9 }]).unwrap();
        let cov = cs.cov.unwrap();
        let outer = &h * h.adjoint();
        assert_relative_eq!((cov.clone() - outer).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(cs.rx_power, h.norm_squared(), epsilon = 1e-12);
    }

    #[test]
    fn covariance_of_orthonormal_pair_is_half_identity() {
        let e1 = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let e2 = DVector::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
        let cs = sample_covariance(
            0,
            &[
                ChannelVector { h: e1, subcarrier_freq: 1e9 },
                ChannelVector { h: e2, subcarrier_freq: 1e9 },
            ],
        )
        .unwrap();
        let cov = cs.cov.unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 0.5 } else { 0.0 };
                assert_relative_eq!(cov[(i, j)].re, expect);
                assert_relative_eq!(cov[(i, j)].im, 0.0);
            }
        }
    }

    #[test]
    fn mixed_lengths_rejected() {
        let a = ChannelVector { h: DVector::from_element(2, Complex64::new(1.0, 0.0)), subcarrier_freq: 1e9 };
        let b = ChannelVector { h: DVector::from_element(3, Complex64::new(1.0, 0.0)), subcarrier_freq: 1e9 };
        assert!(sample_covariance(0, &[a, b]).is_err());
    }
}
