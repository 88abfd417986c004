//! Deterministic random substreams.
//!
//! Every random draw descends from one root seed. A named operation derives
//! its own seed (`module.operation`), and each path inside it uses the ChaCha
//! stream selector, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Seed for the named substream `name` under `root`.
pub fn substream(root: u64, name: &str) -> u64 {
    splitmix64(root ^ splitmix64(fnv1a(name)))
}

/// Generator for path `index` of the stream seeded by `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Radical inverse in base `b` (Halton coordinate).
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let inv = 1.0 / b as f64;
    while i > 0 {
        f *= inv;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(n);
    let mut k = 2;
    while out.len() < n {
        if out.iter().take_while(|p| *p * *p <= k).all(|p| k % p != 0) {
            out.push(k);
        }
        k += 1;
    }
    out
}

/// `count` quasi-random probe points inside the ball of radius `radius` in
/// `dim` dimensions. Coordinates are shifted Halton values mapped to the cube
/// inscribed in the ball, so the first probe is the origin.
pub fn probe_points(count: usize, dim: usize, radius: f64) -> Vec<Vec<f64>> {
    let primes = first_primes(dim);
    let half_side = radius / (dim as f64).sqrt();
    (0..count as u64)
        .map(|i| {
            (0..dim)
                .map(|k| {
                    let h = (radical_inverse(i, primes[k]) + 0.5).fract();
                    half_side * (2.0 * h - 1.0)
                })
                .collect()
        })
        .collect()
}
