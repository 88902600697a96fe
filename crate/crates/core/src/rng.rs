//! Seeded random streams. Every consumer derives its own stream from the run
//! seed and a fixed stream tag, so adding a consumer never perturbs another.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub type Rng = ChaCha8Rng;

pub mod stream {
    pub const TOKENS: u64 = 0x746f6b;
    pub const TEXT_ENCODER: u64 = 0x747874;
    pub const IMAGE_ENCODER: u64 = 0x696d67;
    pub const PROMPT_INIT: u64 = 0x696e69;
    pub const DATA: u64 = 0x646174;
    pub const SHUFFLE: u64 = 0x736866;
    pub const PROBE: u64 = 0x707262;
}

/// SplitMix64 finalizer, used to decorrelate (seed, stream) pairs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    Rng::seed_from_u64(mix(seed ^ mix(stream)))
}

pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    if std == 0.0 {
        return Array2::zeros((rows, cols));
    }
    let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

pub fn gaussian_vector(rng: &mut Rng, len: usize, std: f64) -> Array1<f64> {
    if std == 0.0 {
        return Array1::zeros(len);
    }
    let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
    Array1::from_shape_simple_fn(len, || normal.sample(rng))
}
