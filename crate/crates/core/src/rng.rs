//! Deterministic random streams and random test objects.
//!
//! Every consumer draws from its own named substream so results do not
//! depend on the order in which subsystems ask for randomness.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::hilbert::{DensityOperator, Operator, SpaceTag};
use crate::scalar::{lit, Real, C};

pub type Stream = ChaCha8Rng;

/// Independent stream for `(seed, name)`.
pub fn substream(seed: u64, name: &str) -> Stream {
    // FNV-1a over the name, mixed into the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&h.to_le_bytes());
    Stream::from_seed(key)
}

/// Indexed child of a named stream, e.g. one per worker item.
pub fn substream_indexed(seed: u64, name: &str, index: u64) -> Stream {
    let mut s = substream(seed, name);
    s.set_stream(index);
    s
}

fn normal<T: Real>(rng: &mut Stream) -> T {
    let z: f64 = rng.sample(StandardNormal);
    lit(z)
}

/// Complex Gaussian vector with i.i.d. standard normal parts.
pub fn gaussian_vector<T: Real>(rng: &mut Stream, n: usize) -> DVector<C<T>> {
    DVector::from_fn(n, |_, _| C::new(normal(rng), normal(rng)))
}

/// Haar-random unit vector.
pub fn random_state<T: Real>(rng: &mut Stream, n: usize) -> DVector<C<T>> {
    let v = gaussian_vector::<T>(rng, n);
    let norm = v.norm();
    v.map(|z| z / norm)
}

/// Ginibre matrix.
pub fn random_operator<T: Real>(rng: &mut Stream, n: usize, tag: SpaceTag) -> Operator<T> {
    Operator { tag, mat: DMatrix::from_fn(n, n, |_, _| C::new(normal(rng), normal(rng))) }
}

/// GUE-like Hermitian matrix.
pub fn random_hermitian<T: Real>(rng: &mut Stream, n: usize, tag: SpaceTag) -> Operator<T> {
    random_operator(rng, n, tag).hermitian_part()
}

/// Hilbert–Schmidt random density `G G† / tr(G G†)`.
pub fn random_density<T: Real>(rng: &mut Stream, n: usize, tag: SpaceTag) -> DensityOperator<T> {
    let g = random_operator::<T>(rng, n, tag);
    let m = &g.mat * g.mat.adjoint();
    let t = m.trace().re;
    let op = Operator { tag, mat: m.map(|z| z / t) }.hermitian_part();
    DensityOperator::new_unchecked(op)
}
