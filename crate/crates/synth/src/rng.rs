use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream `stream` of the generator keyed by `seed`.
pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const MASK: u64 = 1;
pub(crate) const TRANSFORM: u64 = 2;
pub(crate) const PLACEMENT: u64 = 3;
pub(crate) const SEAM: u64 = 4;
pub(crate) const NOISE: u64 = 5;
pub(crate) const TEXTURE: u64 = 6;
pub(crate) const SPLIT: u64 = 7;
