#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidsched::mbfs::{classify, ClassLabel};
use vidsched::trace::{synth_instance, Instance, Shape, SynthParams};
use vidsched::GopPattern;

/// Dyadic shapes that fit in nine frames.
pub const SMALL_PATTERNS: [(usize, usize); 6] = [(2, 1), (4, 1), (4, 3), (8, 1), (8, 3), (8, 7)];

/// A seeded instance with at most nine frames whose structure is SIO or
/// quasi-SIO, plus a link capacity.
pub fn small_instance(seed: u64) -> (Instance, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let capacity = rng.gen_range(1..=3);
    let shape = match rng.gen_range(0..10) {
        0..=5 => {
            let (n, m) = SMALL_PATTERNS[rng.gen_range(0..SMALL_PATTERNS.len())];
            Shape::Pattern {
                pattern: GopPattern::new(n, m).unwrap(),
                frames: rng.gen_range(n.min(5)..=9),
                stripped: rng.gen_bool(0.2),
            }
        }
        6 => Shape::Chain {
            frames: rng.gen_range(2..=9),
            gop_size: rng.gen_range(2..=5),
        },
        _ => Shape::Random {
            frames: rng.gen_range(3..=9),
        },
    };
    let params = SynthParams::small(shape);
    for attempt in 0.. {
        let inst = synth_instance(seed.wrapping_mul(1000).wrapping_add(attempt), &params).unwrap();
        if !matches!(classify(&inst.dag), ClassLabel::Neither { .. }) {
            return (inst, capacity);
        }
    }
    unreachable!()
}

/// A seeded dyadic instance (always quasi-SIO unless stripped).
pub fn small_dyadic(seed: u64) -> (Instance, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd1ad);
    let (n, m) = SMALL_PATTERNS[rng.gen_range(0..SMALL_PATTERNS.len())];
    let frames = n * rng.gen_range(1..=2) + 1;
    let shape = Shape::Pattern {
        pattern: GopPattern::new(n, m).unwrap(),
        frames: frames.min(17),
        stripped: false,
    };
    let capacity = rng.gen_range(1..=4);
    (synth_instance(seed, &SynthParams::small(shape)).unwrap(), capacity)
}
