//! Complex linear operators in the structured forms used throughout the crate.
//!
//! An [`OperatorSpec`] keeps its symbolic description (eigenvalue of a Jordan
//! block, nilpotent part and rotation of a `S ⊕ β` operator, ...) next to a
//! cached dense materialization, so that classifiers and constructive
//! witnesses can use the exact structure while generic code can fall back to
//! matrix arithmetic.

use std::sync::OnceLock;

use nalgebra::ComplexField;
use serde::{Deserialize, Serialize};

use crate::cser;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{cpowi, inner, CMatrix, CVector, Real, C};

/// Tolerances used when validating structured operators.
#[derive(Debug, Clone, Copy)]
pub struct StructureTolerances<R> {
    pub unimodular: R,
    pub unitary: R,
    pub nilpotent: R,
}

impl<R: Real> Default for StructureTolerances<R> {
    fn default() -> Self {
        Self {
            unimodular: R::lit(1e-12).max(R::lit(100.0) * R::epsilon()),
            unitary: R::lit(1e-10).max(R::lit(1000.0) * R::epsilon()),
            nilpotent: R::lit(1e-12).max(R::lit(100.0) * R::epsilon()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", bound = "R: Real")]
pub enum OperatorKind<R: Real> {
    Dense {
        #[serde(with = "cser::matrix")]
        matrix: CMatrix<R>,
    },
    Diagonal {
        #[serde(with = "cser::vec")]
        entries: Vec<C<R>>,
    },
    /// Lower-triangular Jordan block: `eigenvalue` on the diagonal, ones on
    /// the subdiagonal.
    JordanBlock {
        #[serde(with = "cser::scalar")]
        eigenvalue: C<R>,
        size: usize,
    },
    /// `S ⊕ β` on `Y ⊕ N` with `S^index = 0` acting on the leading
    /// coordinates and the unimodular `beta` acting on the last coordinate.
    NilpotentPlusRotation {
        #[serde(with = "cser::matrix")]
        nilpotent: CMatrix<R>,
        index: usize,
        #[serde(with = "cser::scalar")]
        beta: C<R>,
    },
    /// The idempotent `x + y ↦ y` for `X = M ⊕ N`, `N = span(line)` and
    /// `M = {x : <x, complement_normal> = 0}` (orthogonal complement of `N`
    /// when no normal is given).
    ProjectionToLine {
        #[serde(with = "cser::vec")]
        line: Vec<C<R>>,
        #[serde(default, with = "cser::opt_vec", skip_serializing_if = "Option::is_none")]
        complement_normal: Option<Vec<C<R>>>,
    },
    /// Backward shift `(Bx)_i = w_i x_{i+1}` truncated to `C^{len(weights)+1}`.
    WeightedBackwardShift {
        #[serde(with = "cser::vec")]
        weights: Vec<C<R>>,
    },
    Unitary {
        #[serde(with = "cser::matrix")]
        matrix: CMatrix<R>,
    },
    BlockDiag { blocks: Vec<OperatorSpec<R>> },
}

/// On-disk shape: `{"dim": d, "kind": ..., <kind fields>}`.
#[derive(Serialize, Deserialize)]
#[serde(bound = "R: Real")]
struct OperatorDoc<R: Real> {
    dim: usize,
    #[serde(flatten)]
    kind: OperatorKind<R>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "OperatorDoc<R>", into = "OperatorDoc<R>", bound = "R: Real")]
pub struct OperatorSpec<R: Real> {
    kind: OperatorKind<R>,
    dim: usize,
    matrix: CMatrix<R>,
    inverse: OnceLock<Option<CMatrix<R>>>,
}

impl<R: Real> PartialEq for OperatorSpec<R> {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl<R: Real> TryFrom<OperatorDoc<R>> for OperatorSpec<R> {
    type Error = Error;

    fn try_from(doc: OperatorDoc<R>) -> Result<Self> {
        let spec = OperatorSpec::new(doc.kind)?;
        if spec.dim != doc.dim {
            return Err(Error::DimensionMismatch { expected: doc.dim, found: spec.dim });
        }
        Ok(spec)
    }
}

impl<R: Real> From<OperatorSpec<R>> for OperatorDoc<R> {
    fn from(spec: OperatorSpec<R>) -> Self {
        OperatorDoc { dim: spec.dim, kind: spec.kind }
    }
}

fn is_integer_matrix<R: Real>(m: &CMatrix<R>) -> bool {
    m.iter().all(|z| z.im.is_zero() && z.re.fract().is_zero() && z.re.abs() < R::lit(1e6))
}

fn check_unimodular<R: Real>(name: &'static str, z: C<R>, tol: R) -> Result<()> {
    let m = z.modulus();
    if (m - R::one()).abs() > tol {
        return Err(Error::NotUnimodular { name, modulus: m.as_f64() });
    }
    Ok(())
}

fn materialize_kind<R: Real>(kind: &OperatorKind<R>, tol: &StructureTolerances<R>) -> Result<CMatrix<R>> {
    let zero = C::new(R::zero(), R::zero());
    let one = C::new(R::one(), R::zero());
    match kind {
        OperatorKind::Dense { matrix } => {
            if !matrix.is_square() || matrix.nrows() == 0 {
                return Err(Error::InvalidOperator("dense matrix must be square and non-empty".into()));
            }
            Ok(matrix.clone())
        }
        OperatorKind::Diagonal { entries } => {
            if entries.is_empty() {
                return Err(Error::InvalidOperator("diagonal operator needs at least one entry".into()));
            }
            Ok(CMatrix::from_diagonal(&CVector::from_column_slice(entries)))
        }
        OperatorKind::JordanBlock { eigenvalue, size } => {
            if *size == 0 {
                return Err(Error::InvalidOperator("Jordan block of size 0".into()));
            }
            let k = *size;
            Ok(CMatrix::from_fn(k, k, |i, j| {
                if i == j {
                    *eigenvalue
                } else if i == j + 1 {
                    one
                } else {
                    zero
                }
            }))
        }
        OperatorKind::NilpotentPlusRotation { nilpotent, index, beta } => {
            if !nilpotent.is_square() || nilpotent.nrows() == 0 {
                return Err(Error::InvalidOperator("nilpotent part must be square and non-empty".into()));
            }
            if *index == 0 {
                return Err(Error::InvalidOperator("nilpotency index must be positive".into()));
            }
            check_unimodular("beta", *beta, tol.unimodular)?;
            let pow = linalg::mat_pow(nilpotent, *index as u64);
            let nilpotent_ok = if is_integer_matrix(nilpotent) {
                pow.iter().all(|z| z.re.is_zero() && z.im.is_zero())
            } else {
                let s = linalg::spectral_norm(nilpotent)?.max(R::one());
                pow.norm() <= tol.nilpotent * s.powi(*index as i32)
            };
            if !nilpotent_ok {
                return Err(Error::InvalidOperator(format!("S^{index} is not zero")));
            }
            let ys = nilpotent.nrows();
            let mut m = CMatrix::zeros(ys + 1, ys + 1);
            m.view_mut((0, 0), (ys, ys)).copy_from(nilpotent);
            m[(ys, ys)] = *beta;
            Ok(m)
        }
        OperatorKind::ProjectionToLine { line, complement_normal } => {
            if line.len() < 2 {
                return Err(Error::InvalidOperator("projection to a line needs dimension >= 2".into()));
            }
            let nu = CVector::from_column_slice(line);
            if nu.norm().is_zero() {
                return Err(Error::InvalidOperator("line direction is zero".into()));
            }
            let w = match complement_normal {
                Some(w) if w.len() != line.len() => {
                    return Err(Error::DimensionMismatch { expected: line.len(), found: w.len() })
                }
                Some(w) => CVector::from_column_slice(w),
                None => nu.clone(),
            };
            let denom = inner(&nu, &w);
            if denom.modulus() <= R::lit(1e-12) * nu.norm() * w.norm() {
                return Err(Error::InvalidOperator("line lies inside the complement".into()));
            }
            Ok((&nu * w.adjoint()).unscale(R::one()) / denom)
        }
        OperatorKind::WeightedBackwardShift { weights } => {
            let d = weights.len() + 1;
            let mut m = CMatrix::zeros(d, d);
            for (i, w) in weights.iter().enumerate() {
                m[(i, i + 1)] = *w;
            }
            Ok(m)
        }
        OperatorKind::Unitary { matrix } => {
            if !matrix.is_square() || matrix.nrows() == 0 {
                return Err(Error::InvalidOperator("unitary matrix must be square and non-empty".into()));
            }
            let defect = (matrix.adjoint() * matrix - linalg::identity::<R>(matrix.nrows())).norm();
            if defect > tol.unitary {
                return Err(Error::InvalidOperator(format!("matrix is not unitary: ||A*A - I|| = {defect}")));
            }
            Ok(matrix.clone())
        }
        OperatorKind::BlockDiag { blocks } => {
            if blocks.is_empty() {
                return Err(Error::InvalidOperator("block-diagonal operator needs at least one block".into()));
            }
            let d: usize = blocks.iter().map(|b| b.dim).sum();
            let mut m = CMatrix::zeros(d, d);
            let mut off = 0;
            for b in blocks {
                m.view_mut((off, off), (b.dim, b.dim)).copy_from(&b.matrix);
                off += b.dim;
            }
            Ok(m)
        }
    }
}

fn binomial<R: Real>(n: i64, j: usize) -> R {
    let mut coef = R::one();
    for i in 0..j {
        coef = coef * R::from_i64_lossy(n - i as i64) / R::from_usize_lossy(i + 1);
    }
    coef
}

impl<R: Real> OperatorSpec<R> {
    pub fn new(kind: OperatorKind<R>) -> Result<Self> {
        Self::with_tolerances(kind, &StructureTolerances::default())
    }

    pub fn with_tolerances(kind: OperatorKind<R>, tol: &StructureTolerances<R>) -> Result<Self> {
        let matrix = materialize_kind(&kind, tol)?;
        Ok(Self { dim: matrix.nrows(), kind, matrix, inverse: OnceLock::new() })
    }

    pub fn dense(matrix: CMatrix<R>) -> Result<Self> {
        Self::new(OperatorKind::Dense { matrix })
    }

    pub fn diagonal(entries: Vec<C<R>>) -> Result<Self> {
        Self::new(OperatorKind::Diagonal { entries })
    }

    pub fn diagonal_real(entries: &[f64]) -> Result<Self> {
        Self::diagonal(entries.iter().map(|&x| C::new(R::lit(x), R::zero())).collect())
    }

    pub fn jordan(eigenvalue: C<R>, size: usize) -> Result<Self> {
        Self::new(OperatorKind::JordanBlock { eigenvalue, size })
    }

    pub fn nilpotent_plus_rotation(nilpotent: CMatrix<R>, index: usize, beta: C<R>) -> Result<Self> {
        Self::new(OperatorKind::NilpotentPlusRotation { nilpotent, index, beta })
    }

    pub fn projection_to_line(line: Vec<C<R>>, complement_normal: Option<Vec<C<R>>>) -> Result<Self> {
        Self::new(OperatorKind::ProjectionToLine { line, complement_normal })
    }

    pub fn weighted_backward_shift(weights: Vec<C<R>>) -> Result<Self> {
        Self::new(OperatorKind::WeightedBackwardShift { weights })
    }

    pub fn unitary(matrix: CMatrix<R>) -> Result<Self> {
        Self::new(OperatorKind::Unitary { matrix })
    }

    pub fn block_diag(blocks: Vec<OperatorSpec<R>>) -> Result<Self> {
        Self::new(OperatorKind::BlockDiag { blocks })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::diagonal(vec![C::new(R::one(), R::zero()); dim])
    }

    pub fn kind(&self) -> &OperatorKind<R> {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dense matrix of the operator.
    pub fn materialize(&self) -> &CMatrix<R> {
        &self.matrix
    }

    pub fn apply(&self, v: &CVector<R>) -> CVector<R> {
        &self.matrix * v
    }

    fn check_dim(&self, v: &CVector<R>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        Ok(())
    }

    /// Dense inverse, if the operator is invertible.
    pub fn inverse_matrix(&self) -> Result<&CMatrix<R>> {
        self.inverse
            .get_or_init(|| match &self.kind {
                OperatorKind::Unitary { matrix } => Some(matrix.adjoint()),
                _ => {
                    // Reject numerically singular matrices that LU would still invert.
                    let smin = linalg::sigma_min(&self.matrix).ok()?;
                    let smax = linalg::spectral_norm(&self.matrix).ok()?;
                    let floor = R::lit(1000.0) * R::from_usize_lossy(self.dim) * R::epsilon() * smax.max(R::one());
                    if smin <= floor {
                        return None;
                    }
                    linalg::inverse(&self.matrix).ok()
                }
            })
            .as_ref()
            .ok_or(Error::Singular)
    }

    pub fn is_invertible(&self) -> bool {
        self.inverse_matrix().is_ok()
    }

    /// `T^n v` for any integer `n`; negative `n` requires invertibility.
    pub fn apply_power(&self, n: i64, v: &CVector<R>) -> Result<CVector<R>> {
        self.check_dim(v)?;
        if n == 0 {
            return Ok(v.clone());
        }
        match &self.kind {
            OperatorKind::Diagonal { entries } => {
                let mut out = v.clone();
                for (o, d) in out.iter_mut().zip(entries) {
                    *o *= cpowi(*d, n).ok_or(Error::Singular)?;
                }
                Ok(out)
            }
            OperatorKind::JordanBlock { eigenvalue, size } => {
                let k = *size;
                let mut out = CVector::zeros(k);
                // (βI + N)^n = Σ_j C(n, j) β^{n-j} N^j, N the lower shift.
                for j in 0..k {
                    let coef = binomial::<R>(n, j);
                    if coef.is_zero() {
                        continue;
                    }
                    let bp = match cpowi(*eigenvalue, n - j as i64) {
                        Some(b) => b,
                        None => return Err(Error::Singular),
                    };
                    let f = bp.scale(coef);
                    for i in j..k {
                        out[i] += f * v[i - j];
                    }
                }
                if n < 0 && eigenvalue.modulus().is_zero() {
                    return Err(Error::Singular);
                }
                Ok(out)
            }
            OperatorKind::Unitary { matrix } => {
                if n > 0 {
                    Ok(linalg::mat_pow(matrix, n as u64) * v)
                } else {
                    Ok(linalg::mat_pow(&matrix.adjoint(), n.unsigned_abs()) * v)
                }
            }
            OperatorKind::BlockDiag { blocks } => {
                let mut out = CVector::zeros(self.dim);
                let mut off = 0;
                for b in blocks {
                    let part = v.rows(off, b.dim).into_owned();
                    out.rows_mut(off, b.dim).copy_from(&b.apply_power(n, &part)?);
                    off += b.dim;
                }
                Ok(out)
            }
            OperatorKind::NilpotentPlusRotation { nilpotent, index, beta } => {
                if n < 0 {
                    return Err(Error::Singular);
                }
                let ys = nilpotent.nrows();
                let mut out = CVector::zeros(self.dim);
                if (n as usize) < *index {
                    let y = v.rows(0, ys).into_owned();
                    out.rows_mut(0, ys).copy_from(&(linalg::mat_pow(nilpotent, n as u64) * y));
                }
                out[ys] = v[ys] * cpowi(*beta, n).ok_or(Error::Singular)?;
                Ok(out)
            }
            OperatorKind::WeightedBackwardShift { weights } => {
                if n < 0 {
                    return Err(Error::Singular);
                }
                if n as usize > weights.len() {
                    return Ok(CVector::zeros(self.dim));
                }
                let mut out = v.clone();
                for _ in 0..n {
                    out = &self.matrix * out;
                }
                Ok(out)
            }
            OperatorKind::ProjectionToLine { .. } => {
                if n < 0 {
                    return Err(Error::Singular);
                }
                Ok(&self.matrix * v)
            }
            OperatorKind::Dense { matrix } => {
                if n > 0 {
                    Ok(linalg::mat_pow(matrix, n as u64) * v)
                } else {
                    let inv = self.inverse_matrix()?;
                    Ok(linalg::mat_pow(inv, n.unsigned_abs()) * v)
                }
            }
        }
    }

    /// Dense `T^n` (any integer `n`, negative requires invertibility).
    pub fn power_matrix(&self, n: i64) -> Result<CMatrix<R>> {
        if n >= 0 {
            Ok(linalg::mat_pow(&self.matrix, n as u64))
        } else {
            Ok(linalg::mat_pow(self.inverse_matrix()?, n.unsigned_abs()))
        }
    }

    /// The orbit `T^n v` for `n = lo..=hi`, computed by stepping from `T^lo v`.
    pub fn orbit(&self, v: &CVector<R>, lo: i64, hi: i64) -> Result<Vec<CVector<R>>> {
        self.check_dim(v)?;
        if hi < lo {
            return Ok(vec![]);
        }
        let len = (hi - lo + 1) as usize;
        let mut out = Vec::with_capacity(len);
        if lo >= 0 {
            let mut cur = self.apply_power(lo, v)?;
            out.push(cur.clone());
            for _ in 1..len {
                cur = &self.matrix * cur;
                out.push(cur.clone());
            }
            return Ok(out);
        }
        let inv = self.inverse_matrix()?;
        let mut back = Vec::with_capacity((-lo) as usize);
        let mut cur = v.clone();
        for _ in 0..(-lo) {
            cur = inv * cur;
            back.push(cur.clone());
        }
        back.reverse();
        out.extend(back.into_iter().take(len));
        if hi >= 0 {
            let mut cur = v.clone();
            out.push(cur.clone());
            for _ in 0..hi {
                cur = &self.matrix * cur;
                out.push(cur.clone());
            }
        }
        Ok(out)
    }

    /// Spectral norm (largest singular value).
    pub fn operator_norm(&self) -> Result<R> {
        match &self.kind {
            OperatorKind::Diagonal { entries } => Ok(entries.iter().fold(R::zero(), |m, z| m.max(z.modulus()))),
            OperatorKind::Unitary { .. } => Ok(R::one()),
            OperatorKind::BlockDiag { blocks } => {
                blocks.iter().try_fold(R::zero(), |m, b| Ok(m.max(b.operator_norm()?)))
            }
            OperatorKind::NilpotentPlusRotation { nilpotent, .. } => {
                Ok(linalg::spectral_norm(nilpotent)?.max(R::one()))
            }
            _ => linalg::spectral_norm(&self.matrix),
        }
    }

    /// Whether `A* A = I` within `tol` (Frobenius).
    pub fn is_isometry(&self, tol: R) -> bool {
        (self.matrix.adjoint() * &self.matrix - linalg::identity::<R>(self.dim)).norm() <= tol
    }

    /// Same operator conjugated by `u`: `u* A u`.
    pub fn conjugated_by(&self, u: &CMatrix<R>) -> Result<Self> {
        let inv = linalg::inverse(u)?;
        Self::dense(inv * &self.matrix * u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, gaussian_vector, random_unitary, rng_from_seed, unimodular};
    use crate::scalar::c;
    use proptest::prelude::*;

    type Op = OperatorSpec<f64>;

    fn close(a: &CMatrix<f64>, b: &CMatrix<f64>) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn diagonal_materializes() {
        let op = Op::diagonal_real(&[2.0, 0.5]).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(close(op.materialize(), &expected));
    }

    #[test]
    fn jordan_block_is_lower_triangular() {
        let op = Op::jordan(c(0.0, 1.0), 2).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0)]);
        assert!(close(op.materialize(), &expected));
    }

    #[test]
    fn projection_to_line_materializes() {
        let op = Op::projection_to_line(vec![c(0.0, 0.0), c(1.0, 0.0)], None).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(close(op.materialize(), &expected));
        let m = op.materialize();
        assert!(close(&(m * m), m));
    }

    #[test]
    fn oblique_projection_is_idempotent() {
        let op = Op::projection_to_line(vec![c(1.0, 0.0), c(1.0, 0.0)], Some(vec![c(0.0, 0.0), c(1.0, 0.0)])).unwrap();
        let m = op.materialize();
        assert!(close(&(m * m), m));
        // e1 lies in the complement {x : x_2 = 0}.
        let e1 = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(op.apply(&e1).norm() < 1e-15);
    }

    #[test]
    fn block_dimension_mismatch_in_file_is_rejected() {
        let json = r#"{"dim":3,"kind":"diagonal","entries":[[1.0,0.0],[2.0,0.0]]}"#;
        let parsed: std::result::Result<Op, _> = serde_json::from_str(json);
        assert!(parsed.is_err());
    }

    #[test]
    fn non_unimodular_beta_rejected() {
        let s = CMatrix::from_row_slice(1, 1, &[c(0.0, 0.0)]);
        let err = Op::nilpotent_plus_rotation(s, 1, c(1.1, 0.0)).unwrap_err();
        assert!(matches!(err, Error::NotUnimodular { .. }));
    }

    #[test]
    fn non_nilpotent_rejected() {
        let s = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(Op::nilpotent_plus_rotation(s, 2, c(1.0, 0.0)).is_err());
    }

    #[test]
    fn non_unitary_rejected() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(Op::unitary(m).is_err());
    }

    #[test]
    fn identity_power_is_identity() {
        let op = Op::identity(3).unwrap();
        let v = CVector::from_vec(vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 1.0)]);
        assert_eq!(op.apply_power(7, &v).unwrap(), v);
    }

    #[test]
    fn scalar_power() {
        let op = Op::diagonal_real(&[2.0]).unwrap();
        let v = CVector::from_vec(vec![c(1.0, 0.0)]);
        assert_eq!(op.apply_power(3, &v).unwrap()[0], c(8.0, 0.0));
    }

    #[test]
    fn jordan_power_matches_three_multiplications() {
        let op = Op::jordan(c(1.0, 0.0), 2).unwrap();
        let e1 = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let m = op.materialize();
        let oracle = m * (m * (m * &e1));
        let got = op.apply_power(3, &e1).unwrap();
        assert!((&got - &oracle).norm() < 1e-14);
        assert!((got - CVector::from_vec(vec![c(1.0, 0.0), c(3.0, 0.0)])).norm() < 1e-14);
    }

    #[test]
    fn jordan_negative_power_inverts() {
        let op = Op::jordan(c(0.6, 0.8), 4).unwrap();
        let mut rng = rng_from_seed(1);
        let v = gaussian_vector::<f64, _>(4, &mut rng);
        let back = op.apply_power(-5, &op.apply_power(5, &v).unwrap()).unwrap();
        assert!((back - v).norm() < 1e-10);
    }

    #[test]
    fn singular_negative_power_fails() {
        let op = Op::diagonal_real(&[0.0, 2.0]).unwrap();
        let v = CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(op.apply_power(-1, &v).unwrap_err(), Error::Singular);
        let shift = Op::weighted_backward_shift(vec![c(1.0, 0.0)]).unwrap();
        assert_eq!(shift.apply_power(-2, &v).unwrap_err(), Error::Singular);
    }

    #[test]
    fn operator_norms() {
        assert!((Op::diagonal_real(&[2.0, 0.5]).unwrap().operator_norm().unwrap() - 2.0).abs() < 1e-12);
        let mut rng = rng_from_seed(2);
        let u = Op::unitary(random_unitary(4, &mut rng)).unwrap();
        assert!((u.operator_norm().unwrap() - 1.0).abs() < 1e-8);
        // Also through the dense path.
        let ud = Op::dense(u.materialize().clone()).unwrap();
        assert!((ud.operator_norm().unwrap() - 1.0).abs() < 1e-8);
        // [[0,0],[1,0]]: singular values 1 and 0 in closed form.
        let sh = Op::dense(CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])).unwrap();
        assert!((sh.operator_norm().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orbit_matches_apply_power() {
        let mut rng = rng_from_seed(9);
        let u = Op::unitary(random_unitary(3, &mut rng)).unwrap();
        let v = gaussian_vector::<f64, _>(3, &mut rng);
        let orbit = u.orbit(&v, -4, 6).unwrap();
        assert_eq!(orbit.len(), 11);
        for (i, n) in (-4..=6).enumerate() {
            assert!((&orbit[i] - u.apply_power(n, &v).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = rng_from_seed(4);
        let ops = vec![
            Op::dense(gaussian_matrix(3, 3, &mut rng)).unwrap(),
            Op::jordan(unimodular(&mut rng), 3).unwrap(),
            Op::nilpotent_plus_rotation(
                CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.1 + 1e-17, 0.3), c(0.0, 0.0)]),
                2,
                unimodular(&mut rng),
            )
            .unwrap(),
            Op::block_diag(vec![
                Op::diagonal_real(&[0.1, 1.0 / 3.0]).unwrap(),
                Op::unitary(random_unitary(2, &mut rng)).unwrap(),
            ])
            .unwrap(),
        ];
        for op in ops {
            let text = serde_json::to_string(&op).unwrap();
            let back: Op = serde_json::from_str(&text).unwrap();
            assert_eq!(back, op);
            assert_eq!(back.materialize(), op.materialize());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn power_is_additive(seed in 0u64..1000, m in 0i64..=16, n in 0i64..=16, kind in 0usize..4) {
            let mut rng = rng_from_seed(seed);
            let op = match kind {
                0 => Op::dense(gaussian_matrix::<f64, _>(3, 3, &mut rng).scale(0.6)).unwrap(),
                1 => Op::jordan(unimodular(&mut rng), 3).unwrap(),
                2 => Op::unitary(random_unitary(3, &mut rng)).unwrap(),
                _ => Op::diagonal(vec![c(0.9, 0.2), c(1.1, 0.0), c(-0.3, 0.7)]).unwrap(),
            };
            let v = gaussian_vector::<f64, _>(3, &mut rng);
            let a = op.operator_norm().unwrap().max(1.0);
            let lhs = op.apply_power(m + n, &v).unwrap();
            let rhs = op.apply_power(m, &op.apply_power(n, &v).unwrap()).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-9 * v.norm() * a.powi((m + n) as i32));
        }

        #[test]
        fn block_diag_acts_blockwise(seed in 0u64..1000) {
            let mut rng = rng_from_seed(seed);
            let a = Op::dense(gaussian_matrix(2, 2, &mut rng)).unwrap();
            let b = Op::dense(gaussian_matrix(3, 3, &mut rng)).unwrap();
            let va = gaussian_vector::<f64, _>(2, &mut rng);
            let vb = gaussian_vector::<f64, _>(3, &mut rng);
            let bd = Op::block_diag(vec![a.clone(), b.clone()]).unwrap();
            let v = CVector::from_iterator(5, va.iter().chain(vb.iter()).copied());
            let out = bd.apply(&v);
            prop_assert_eq!(out.rows(0, 2).into_owned(), a.apply(&va));
            prop_assert_eq!(out.rows(2, 3).into_owned(), b.apply(&vb));
        }

        #[test]
        fn norm_is_submultiplicative(seed in 0u64..1000) {
            let mut rng = rng_from_seed(seed);
            let a = Op::dense(gaussian_matrix(3, 3, &mut rng)).unwrap();
            let b = Op::dense(gaussian_matrix(3, 3, &mut rng)).unwrap();
            let ab = Op::dense(a.materialize() * b.materialize()).unwrap();
            let lhs = ab.operator_norm().unwrap();
            let rhs = a.operator_norm().unwrap() * b.operator_norm().unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-8));
        }
    }

    #[test]
    fn single_precision_operator_works() {
        let op = OperatorSpec::<f32>::jordan(c(1.0, 0.0), 2).unwrap();
        let e1 = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let out = op.apply_power(3, &e1).unwrap();
        assert!((out[1].re - 3.0).abs() < 1e-6);
    }
}
