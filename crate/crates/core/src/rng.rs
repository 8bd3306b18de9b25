//! Seed splitting.
//!
//! Every random draw in the crate descends from a single `u64` seed. A
//! [`SeedTree`] derives independent child seeds by label, so a sub-task's
//! stream depends only on its path from the root and never on scheduling.

use nalgebra::ComplexField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::{CMatrix, CVector, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, label: u64) -> Self {
        Self { seed: splitmix64(self.seed ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d))) }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex_normal<R: Real, G: Rng + ?Sized>(rng: &mut G) -> C<R> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C::new(R::lit(re), R::lit(im))
}

pub fn gaussian_vector<R: Real, G: Rng + ?Sized>(dim: usize, rng: &mut G) -> CVector<R> {
    CVector::from_fn(dim, |_, _| complex_normal(rng))
}

pub fn gaussian_matrix<R: Real, G: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut G) -> CMatrix<R> {
    CMatrix::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Uniform sample on the unit sphere of `C^dim`.
pub fn unit_vector<R: Real, G: Rng + ?Sized>(dim: usize, rng: &mut G) -> CVector<R> {
    loop {
        let v = gaussian_vector::<R, _>(dim, rng);
        let n = v.norm();
        if n > R::lit(1e-12) {
            return v.unscale(n);
        }
    }
}

/// Uniform sample in the closed ball of radius `radius` in `C^dim`
/// (the real ball of dimension `2 dim`).
pub fn in_ball<R: Real, G: Rng + ?Sized>(dim: usize, radius: R, rng: &mut G) -> CVector<R> {
    let dir = unit_vector::<R, _>(dim, rng);
    let u: f64 = rng.random();
    let r = radius * R::lit(u.powf(1.0 / (2.0 * dim as f64)));
    dir.scale(r)
}

/// Unimodular scalar with uniformly distributed phase.
pub fn unimodular<R: Real, G: Rng + ?Sized>(rng: &mut G) -> C<R> {
    let t: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    C::new(R::lit(t.cos()), R::lit(t.sin()))
}

/// Haar-distributed unitary matrix (QR of a complex Gaussian matrix with the
/// phases of `R`'s diagonal removed).
pub fn random_unitary<R: Real, G: Rng + ?Sized>(dim: usize, rng: &mut G) -> CMatrix<R> {
    let g = gaussian_matrix::<R, _>(dim, dim, rng);
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        let d = r[(j, j)];
        let m = d.modulus();
        if m > R::zero() {
            let ph = d.unscale(m);
            let col = q.column(j).map(|z| z * ph);
            q.set_column(j, &col);
        }
    }
    q
}
