//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{ComplexField, Schur, SVD};

use crate::error::{Error, Result};
use crate::scalar::{CMatrix, CVector, Real, C};

const SVD_MAX_ITER: usize = 10_000;
const SCHUR_MAX_ITER: usize = 10_000;
const SIGN_MAX_ITER: usize = 100;

pub fn identity<R: Real>(dim: usize) -> CMatrix<R> {
    CMatrix::identity(dim, dim)
}

/// Singular values in decreasing order.
pub fn singular_values<R: Real>(m: &CMatrix<R>) -> Result<Vec<R>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(vec![]);
    }
    let svd = SVD::try_new(m.clone(), false, false, R::epsilon(), SVD_MAX_ITER)
        .ok_or(Error::NonConvergence { what: "singular value iteration", iterations: SVD_MAX_ITER })?;
    let mut s: Vec<R> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(s)
}

/// Largest singular value.
pub fn spectral_norm<R: Real>(m: &CMatrix<R>) -> Result<R> {
    Ok(singular_values(m)?.first().copied().unwrap_or_else(R::zero))
}

/// Smallest singular value of a square matrix.
pub fn sigma_min<R: Real>(m: &CMatrix<R>) -> Result<R> {
    Ok(singular_values(m)?.last().copied().unwrap_or_else(R::zero))
}

/// Numerical rank: number of singular values above `threshold`.
pub fn rank<R: Real>(m: &CMatrix<R>, threshold: R) -> Result<usize> {
    Ok(singular_values(m)?.into_iter().filter(|s| *s > threshold).count())
}

pub fn inverse<R: Real>(m: &CMatrix<R>) -> Result<CMatrix<R>> {
    m.clone().try_inverse().ok_or(Error::Singular)
}

/// `m^n` by repeated squaring.
pub fn mat_pow<R: Real>(m: &CMatrix<R>, n: u64) -> CMatrix<R> {
    let mut acc = identity::<R>(m.nrows());
    let mut base = m.clone();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    acc
}

fn eig2x2<R: Real>(a: C<R>, b: C<R>, c: C<R>, d: C<R>) -> (C<R>, C<R>) {
    let half = R::lit(0.5);
    let half_tr = (a + d).scale(half);
    let diff = (a - d).scale(half);
    let disc = ComplexField::sqrt(diff * diff + b * c);
    (half_tr + disc, half_tr - disc)
}

/// Eigenvalues (with algebraic multiplicity) from a complex Schur form.
pub fn eigenvalues<R: Real>(m: &CMatrix<R>) -> Result<Vec<C<R>>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(vec![]);
    }
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let upper = (0..n).all(|i| (0..i).all(|j| m[(i, j)].modulus().is_zero()));
    let lower = (0..n).all(|i| (i + 1..n).all(|j| m[(i, j)].modulus().is_zero()));
    if upper || lower {
        return Ok((0..n).map(|i| m[(i, i)]).collect());
    }
    let t = match Schur::try_new(m.clone(), R::epsilon(), SCHUR_MAX_ITER) {
        Some(schur) => schur.unpack().1,
        None => {
            // Exactly structured inputs occasionally stall the shifted QR
            // iteration; a fixed unitary change of basis breaks the symmetry.
            let u = crate::rng::random_unitary::<R, _>(n, &mut crate::rng::rng_from_seed(0x5eed));
            let conj = u.adjoint() * m * &u;
            Schur::try_new(conj, R::epsilon(), SCHUR_MAX_ITER)
                .ok_or(Error::NonConvergence { what: "Schur iteration", iterations: SCHUR_MAX_ITER })?
                .unpack()
                .1
        }
    };
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let scale = t[(i, i)].modulus() + if i + 1 < n { t[(i + 1, i + 1)].modulus() } else { R::zero() };
        let tiny = R::epsilon() * (scale + R::one());
        if i + 1 < n && t[(i + 1, i)].modulus() > tiny {
            let (l1, l2) = eig2x2(t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            out.push(l1);
            out.push(l2);
            i += 2;
        } else {
            out.push(t[(i, i)]);
            i += 1;
        }
    }
    Ok(out)
}

fn det_modulus<R: Real>(m: &CMatrix<R>) -> R {
    m.clone().lu().determinant().modulus()
}

/// Matrix sign function by scaled Newton iteration.
pub fn matrix_sign<R: Real>(m: &CMatrix<R>) -> Result<CMatrix<R>> {
    let n = m.nrows();
    let half = R::lit(0.5);
    let floor = R::lit(100.0) * R::from_usize_lossy(n.max(1)) * R::epsilon();
    let mut s = m.clone();
    let mut prev_diff: Option<R> = None;
    for it in 0..SIGN_MAX_ITER {
        let inv = inverse(&s).map_err(|_| Error::NonConvergence { what: "matrix sign iteration", iterations: it })?;
        let mu = if it < 8 {
            let d = det_modulus(&s);
            if d > R::zero() && d.is_finite() {
                d.powf(-R::one() / R::from_usize_lossy(n))
            } else {
                R::one()
            }
        } else {
            R::one()
        };
        let next = (s.scale(mu) + inv.unscale(mu)).scale(half);
        let diff = (&next - &s).norm();
        let size = next.norm();
        s = next;
        if diff <= floor * size {
            return Ok(s);
        }
        if let Some(p) = prev_diff {
            if diff <= R::epsilon().sqrt() * size && diff >= p {
                return Ok(s);
            }
        }
        prev_diff = Some(diff);
    }
    Err(Error::NonConvergence { what: "matrix sign iteration", iterations: SIGN_MAX_ITER })
}

/// Spectral projection onto the generalized eigenspace of the eigenvalues of
/// `m` inside the open disc of the given radius. The circle must not carry
/// eigenvalues.
pub fn disk_projection<R: Real>(m: &CMatrix<R>, radius: R) -> Result<CMatrix<R>> {
    let n = m.nrows();
    let id = identity::<R>(n);
    let b = m.unscale(radius);
    let denom = inverse(&(&b - &id)).map_err(|_| Error::Degenerate("eigenvalue on the splitting circle".into()))?;
    let cayley = (&b + &id) * denom;
    let sign = matrix_sign(&cayley)?;
    Ok((id - sign).scale(R::lit(0.5)))
}

/// Orthonormal basis of the range of a projection (columns).
pub fn projection_range_basis<R: Real>(p: &CMatrix<R>) -> Result<CMatrix<R>> {
    let n = p.nrows();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let svd = SVD::try_new(p.clone(), true, false, R::epsilon(), SVD_MAX_ITER)
        .ok_or(Error::NonConvergence { what: "singular value iteration", iterations: SVD_MAX_ITER })?;
    let u = svd.u.expect("requested U");
    // Nonzero singular values of a projection are >= 1.
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > R::lit(0.5))
        .collect();
    let mut basis = CMatrix::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &u.column(i));
    }
    Ok(basis)
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn least_squares<R: Real>(a: &CMatrix<R>, b: &CVector<R>) -> Result<CVector<R>> {
    let svd = SVD::try_new(a.clone(), true, true, R::epsilon(), SVD_MAX_ITER)
        .ok_or(Error::NonConvergence { what: "singular value iteration", iterations: SVD_MAX_ITER })?;
    let smax = svd.singular_values.iter().fold(R::zero(), |m, s| m.max(*s));
    let eps = smax * R::from_usize_lossy(a.nrows().max(a.ncols())) * R::epsilon();
    svd.solve(b, eps).map_err(|e| Error::Degenerate(e.to_string()))
}

/// `||(I - P) A P||`, the leakage of `range(P)` under `A`.
pub fn invariance_leakage<R: Real>(a: &CMatrix<R>, p: &CMatrix<R>) -> Result<R> {
    let id = identity::<R>(a.nrows());
    spectral_norm(&((id - p) * a * p))
}
