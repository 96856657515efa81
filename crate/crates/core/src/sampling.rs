//! Seeded, partition-stable randomness.
//!
//! Every sample draws from its own generator derived from
//! `(seed, stream, index)`, so a sample's content does not depend on which
//! worker evaluates it or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupModel, Letter};

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn stream_hash(stream: &str) -> u64 {
    stream
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3))
}

/// Generator for sample `index` of the named stream.
pub fn sample_rng(seed: u64, stream: &str, index: u64) -> ChaCha8Rng {
    let key = splitmix(seed ^ splitmix(stream_hash(stream)) ^ splitmix(index.wrapping_add(0x5851_F42D)));
    ChaCha8Rng::seed_from_u64(key)
}

/// Uniform element of `B(1, radius)`.
pub fn random_in_ball<R: Rng + ?Sized>(model: &GroupModel, rng: &mut R, radius: u32) -> Result<GroupElement> {
    match model.ball_size(radius) {
        Some(total) => {
            let mut pick = rng.gen_range(0..total);
            for n in 0..=radius {
                let size = model.sphere_size(n).unwrap_or(0);
                if pick < size {
                    return model
                        .random_element_of_length(rng, n)
                        .ok_or_else(|| Error::Domain(format!("empty sphere of radius {n}")));
                }
                pick -= size;
            }
            Err(Error::Domain("ball sampling fell off the end".into()))
        }
        None => {
            let ball = model.identity_ball(radius)?;
            Ok(ball[rng.gen_range(0..ball.len())].clone())
        }
    }
}

/// Uniform element of `S(1, n)`.
pub fn random_of_length<R: Rng + ?Sized>(model: &GroupModel, rng: &mut R, n: u32) -> Result<GroupElement> {
    model
        .random_element_of_length(rng, n)
        .ok_or_else(|| Error::Domain(format!("no element at distance {n}")))
}

/// A uniformly random neighbour `g·s`.
pub fn random_neighbor<R: Rng + ?Sized>(model: &GroupModel, rng: &mut R, g: &GroupElement) -> Result<GroupElement> {
    let n = model.generators().len();
    if n == 0 {
        return Ok(g.clone());
    }
    let s = rng.gen_range(0..n) as Letter;
    model.multiply(g, &model.generator(s)?)
}

/// An element at distance exactly `k` from `g` reached by a non-backtracking
/// random walk (falls back to a plain walk where needed).
pub fn random_at_distance<R: Rng + ?Sized>(
    model: &GroupModel,
    rng: &mut R,
    g: &GroupElement,
    k: u32,
) -> Result<GroupElement> {
    let offset = random_of_length(model, rng, k)?;
    model.multiply(g, &offset)
}

/// Uniformly random element within distance `k` of `g`.
pub fn random_within<R: Rng + ?Sized>(
    model: &GroupModel,
    rng: &mut R,
    g: &GroupElement,
    k: u32,
) -> Result<GroupElement> {
    let offset = random_in_ball(model, rng, k)?;
    model.multiply(g, &offset)
}
