//! Named, independent seed streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stream `name` under `master`. Stable across platforms and
/// releases; different names give unrelated seeds.
pub fn substream(master: u64, name: &str) -> u64 {
    // FNV-1a over the name, then mixed with the master seed
    let h = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    splitmix64(master ^ splitmix64(h))
}

pub fn substream_rng(master: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream(master, name))
}
