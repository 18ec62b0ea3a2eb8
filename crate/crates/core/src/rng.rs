use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words reserved per purpose inside one pulse's stream.
const PURPOSE_STRIDE: u128 = 1 << 40;

/// Counter-based random substreams keyed by `(index, purpose)`.
///
/// Every pulse gets its own ChaCha stream and every purpose (wavelength draw,
/// jitter, dark count, ...) its own window of that stream, so the numbers a
/// pulse sees do not depend on how many pulses were simulated before it or
/// on which thread simulated it.
#[derive(Debug, Clone)]
pub struct Substreams {
    base: ChaCha8Rng,
}

impl Substreams {
    pub fn new(seed: u64) -> Self {
        Substreams {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn stream(&self, index: u64, purpose: u32) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        rng.set_word_pos(purpose as u128 * PURPOSE_STRIDE);
        rng
    }
}
