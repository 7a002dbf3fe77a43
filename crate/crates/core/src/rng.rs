//! Deterministic seeding and chunked Monte Carlo accumulation.
//!
//! One root seed drives a whole run. Every consumer derives its own stream
//! from `(root, tag, index)`; Monte Carlo loops are cut into fixed-size
//! chunks, each chunk owns one stream, and chunk results are merged in chunk
//! order. The number of rayon workers therefore never changes a result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Samples per Monte Carlo chunk.
pub const CHUNK: usize = 1 << 13;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash `(root, tag, index)` into a substream seed.
pub fn derive_seed(root: u64, tag: &str, index: u64) -> u64 {
    // FNV-1a over the tag, then splitmix to decorrelate neighbouring inputs.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(splitmix64(root ^ h).wrapping_add(splitmix64(index)))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs `total` samples in chunks of [`CHUNK`], chunk `c` receiving the
/// stream `derive_seed(root, tag, c)`. Results come back in chunk order.
pub fn par_chunks<T, F>(total: usize, root: u64, tag: &str, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng, usize) -> T + Sync,
{
    let chunks = total.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(total - c * CHUNK);
            let mut rng = stream(derive_seed(root, tag, c as u64));
            f(&mut rng, len)
        })
        .collect()
}

/// Running mean / second central moment, mergeable (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        let w = other.count as f64 / n;
        self.mean += d * w;
        self.m2 += other.m2 + d * d * self.count as f64 * w;
        self.count += other.count;
    }

    /// Pads with `extra` zero observations (samples that contribute nothing).
    pub fn pad_zeros(&mut self, extra: u64) {
        let zeros = Moments {
            count: extra,
            mean: 0.0,
            m2: 0.0,
        };
        self.merge(&zeros);
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Vector-valued running mean and co-moment matrix, mergeable like
/// [`Moments`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoMoments {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Row-major `d × d` sum of centred cross products.
    pub c2: Vec<f64>,
}

impl CoMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            c2: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        let d = self.dim();
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        let before: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, b) in self.mean.iter_mut().zip(&before) {
            *m += b * inv;
        }
        for i in 0..d {
            let after = x[i] - self.mean[i];
            for j in 0..d {
                self.c2[i * d + j] += after * before[j];
            }
        }
    }

    pub fn merge(&mut self, other: &CoMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let d = self.dim();
        let n = (self.count + other.count) as f64;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        let w = other.count as f64 / n;
        let cross = self.count as f64 * w;
        for i in 0..d {
            for j in 0..d {
                self.c2[i * d + j] += other.c2[i * d + j] + delta[i] * delta[j] * cross;
            }
        }
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl * w;
        }
        self.count += other.count;
    }

    pub fn pad_zeros(&mut self, extra: u64) {
        let d = self.dim();
        self.merge(&CoMoments {
            count: extra,
            mean: vec![0.0; d],
            c2: vec![0.0; d * d],
        });
    }

    /// Covariance matrix of the sample mean.
    pub fn mean_covariance(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let scale = if self.count < 2 {
            0.0
        } else {
            1.0 / ((self.count - 1) as f64 * self.count as f64)
        };
        (0..d)
            .map(|i| (0..d).map(|j| self.c2[i * d + j] * scale).collect())
            .collect()
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn comoments_agree_with_scalar_moments_and_two_pass() {
        let mut r = stream(8);
        let data: Vec<[f64; 2]> = (0..1000)
            .map(|_| {
                let a: f64 = r.random();
                [a, 2.0 * a + r.random::<f64>()]
            })
            .collect();
        let mut whole = CoMoments::new(2);
        data.iter().for_each(|x| whole.push(x));
        let mut split = CoMoments::new(2);
        for part in data.chunks(77) {
            let mut c = CoMoments::new(2);
            part.iter().for_each(|x| c.push(x));
            split.merge(&c);
        }
        split.pad_zeros(500);
        whole.pad_zeros(500);
        let m: Moments = data.iter().map(|x| x[1]).chain(std::iter::repeat_n(0.0, 500)).collect();
        let n = 1500.0;
        let (ma, mb) = (whole.mean[0], whole.mean[1]);
        let cov = data.iter().map(|x| (x[0] - ma) * (x[1] - mb)).sum::<f64>() + 500.0 * ma * mb;
        let cov = cov / (n - 1.0) / n;
        for (a, b) in whole.c2.iter().zip(&split.c2) {
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
        assert!((whole.mean_covariance()[0][1] - cov).abs() < 1e-12);
        assert!((whole.mean_covariance()[1][1].sqrt() - m.stderr()).abs() < 1e-12);
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, "gmf", 0);
        assert_ne!(a, derive_seed(1, "gmf", 1));
        assert_ne!(a, derive_seed(1, "tube", 0));
        assert_ne!(a, derive_seed(2, "gmf", 0));
        assert_eq!(a, derive_seed(1, "gmf", 0));
    }

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let whole: Moments = xs.iter().copied().collect();
        let mut parts = Moments::default();
        for c in xs.chunks(77) {
            parts.merge(&c.iter().copied().collect());
        }
        assert!((whole.mean - parts.mean).abs() < 1e-12);
        assert!((whole.variance() - parts.variance()).abs() < 1e-9);
    }

    #[test]
    fn pad_zeros_is_pushing_zeros() {
        let mut a: Moments = [1.0, 2.0, 3.0].into_iter().collect();
        let b: Moments = [1.0, 2.0, 3.0, 0.0, 0.0].into_iter().collect();
        a.pad_zeros(2);
        assert!((a.mean - b.mean).abs() < 1e-15);
        assert!((a.variance() - b.variance()).abs() < 1e-12);
    }

    #[test]
    fn chunks_independent_of_pool_size() {
        let run = || {
            par_chunks(3 * CHUNK + 5, 9, "t", |rng, len| {
                (0..len).map(|_| rng.random::<f64>()).sum::<f64>()
            })
        };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(run);
        let three = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(one, three);
        assert_eq!(one.len(), 4);
    }
}
