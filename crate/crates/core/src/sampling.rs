//! Seedable random sources.
//!
//! A [`RandomSource`] is a ChaCha8 stream keyed by `(seed, stream_id)`. The
//! stream id selects one of 2^64 independent keystreams of the same key, so
//! parallel runs use `stream_id = run_index` and stay reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::vecops::norm;

#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    /// A source for a separate consumer (e.g. the adversary) of the same run.
    /// Different `domain` values give unrelated keys.
    pub fn for_domain(seed: u64, stream_id: u64, domain: u64) -> Self {
        Self::new(splitmix64(seed ^ splitmix64(domain)), stream_id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn coin(&mut self) -> bool {
        self.rng.random::<bool>()
    }

    /// Uniform point on the unit sphere `S^{d-1}`: a normalised standard
    /// Gaussian vector, renormalised so that `‖u‖ = 1` to rounding.
    pub fn sample_sphere(&mut self, d: usize) -> Result<Vec<f64>> {
        if d == 0 {
            return Err(Error::param("sphere dimension must be at least 1"));
        }
        let mut u = vec![0.0; d];
        self.fill_sphere(&mut u);
        Ok(u)
    }

    /// Same as [`sample_sphere`](Self::sample_sphere) into a caller buffer.
    pub fn fill_sphere(&mut self, u: &mut [f64]) {
        debug_assert!(!u.is_empty());
        loop {
            for c in u.iter_mut() {
                *c = self.gaussian();
            }
            let n = norm(u);
            if n > 0.0 && n.is_finite() {
                u.iter_mut().for_each(|c| *c /= n);
                // second pass pulls the norm back to 1 within an ulp or two
                let n = norm(u);
                u.iter_mut().for_each(|c| *c /= n);
                return;
            }
        }
    }

    /// Uniform point in the unit ball: `u · U^{1/d}`.
    pub fn sample_ball(&mut self, d: usize) -> Result<Vec<f64>> {
        let mut v = self.sample_sphere(d)?;
        let radial = self.uniform().powf(1.0 / d as f64);
        v.iter_mut().for_each(|c| *c *= radial);
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecops::dot;

    #[test]
    fn zero_dim_rejected() {
        let mut src = RandomSource::new(1, 0);
        assert!(matches!(src.sample_sphere(0), Err(Error::Parameter(_))));
        assert!(matches!(src.sample_ball(0), Err(Error::Parameter(_))));
    }

    #[test]
    fn sphere_has_unit_norm() {
        let mut src = RandomSource::new(3, 9);
        for d in [1, 2, 3, 17, 200] {
            for _ in 0..1000 {
                let u = src.sample_sphere(d).unwrap();
                assert!((norm(&u) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_dim_sphere_is_fair_coin() {
        let mut src = RandomSource::new(5, 0);
        let n = 100_000;
        let mut plus = 0usize;
        for _ in 0..n {
            let u = src.sample_sphere(1).unwrap();
            assert!(u[0] == 1.0 || u[0] == -1.0);
            plus += (u[0] > 0.0) as usize;
        }
        let p = plus as f64 / n as f64;
        assert!((p - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn ball_radius_and_symmetry() {
        let mut src = RandomSource::new(11, 2);
        let n = 1_000_000;
        let mut inside_half = 0usize;
        for _ in 0..n {
            let v = src.sample_ball(2).unwrap();
            assert!(norm(&v) <= 1.0);
            inside_half += (norm(&v) <= 0.5) as usize;
        }
        // area ratio 0.5^2
        let p = inside_half as f64 / n as f64;
        assert!((p - 0.25).abs() < 3.0 * (0.25 * 0.75 / n as f64).sqrt(), "{p}");

        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let v = src.sample_ball(1).unwrap()[0];
            assert!((-1.0..=1.0).contains(&v));
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se);
    }

    #[test]
    fn reproducible_streams() {
        let mut a = RandomSource::new(42, 7);
        let mut b = RandomSource::new(42, 7);
        let mut c = RandomSource::new(42, 8);
        let mut differs = false;
        for _ in 0..10_000 {
            let ua = a.sample_sphere(4).unwrap();
            assert_eq!(ua, b.sample_sphere(4).unwrap());
            differs |= ua != c.sample_sphere(4).unwrap();
        }
        assert!(differs);
    }

    #[test]
    fn distinct_streams_uncorrelated() {
        let n = 200_000;
        let mut a = RandomSource::new(1, 0);
        let mut b = RandomSource::new(1, 1);
        let corr: f64 = (0..n).map(|_| a.gaussian() * b.gaussian()).sum::<f64>() / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn isotropy_identity_d8() {
        let d = 8;
        let y = [1.0, -2.0, 0.5, 0.0, 3.0, 1.0, -1.0, 0.25];
        let target = dot(&y, &y) / d as f64;
        let mut src = RandomSource::new(2024, 0);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        let mut u = vec![0.0; d];
        for _ in 0..n {
            src.fill_sphere(&mut u);
            let v = dot(&u, &y).powi(2);
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - target).abs() < 3.0 * se, "{mean} vs {target}");
    }

    #[test]
    fn covariance_close_to_identity_over_d() {
        let n = 1_000_000;
        for d in [3usize, 6] {
            let mut src = RandomSource::new(77, d as u64);
            let mut cov = vec![0.0; d * d];
            let mut u = vec![0.0; d];
            for _ in 0..n {
                src.fill_sphere(&mut u);
                for i in 0..d {
                    for j in 0..d {
                        cov[i * d + j] += u[i] * u[j];
                    }
                }
            }
            let mut frob = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let target = if i == j { 1.0 / d as f64 } else { 0.0 };
                    frob += (cov[i * d + j] / n as f64 - target).powi(2);
                }
            }
            assert!(frob.sqrt() < 5.0 * (d as f64 / n as f64).sqrt(), "d={d}: {}", frob.sqrt());
        }
    }

    #[test]
    fn first_coordinate_variance() {
        // Var(u_1) = 1/d exactly; Lipschitz concentration only needs <= 2/d.
        let n = 1_000_000;
        for d in [4usize, 16, 64] {
            let mut src = RandomSource::new(9, d as u64);
            let mut u = vec![0.0; d];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                src.fill_sphere(&mut u);
                s += u[0];
                s2 += u[0] * u[0];
            }
            let mean = s / n as f64;
            let var = s2 / n as f64 - mean * mean;
            assert!(var <= 2.0 / d as f64);
            assert!((var * d as f64 - 1.0).abs() < 0.05, "d={d}: {}", var * d as f64);
        }
    }
}
