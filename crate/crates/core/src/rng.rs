//! Seeded, named random streams. Every consumer asks for its own stream so
//! adding a draw in one place never shifts the numbers seen elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

// FNV-1a, only used to turn a stream name into a stream id
fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn stream(seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}
