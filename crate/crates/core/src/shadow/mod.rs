//! Shadowing and super-shadowing witnesses.
//!
//! A [`Witness`] approximates a pseudotrajectory `(x_n)` by
//! `T^n p + lambda_n T^n q`. The submodules provide the hyperbolic solver,
//! the numerical witness search, the constructive witnesses for structured
//! operators and the lower-bound certificates used to exhibit failures.

mod certificate;
mod hyperbolic;
mod search;
mod structured;

pub use certificate::{divergence_certificate, CertificateOptions, CertificateRung, RungStatus};
pub use hyperbolic::{solve_shadowing_hyperbolic, HyperbolicSolution};
pub use search::{search_super_witness, SearchBudget, SearchMode};
pub use structured::{compact_delta, construct_witness_structured, projection_delta, StructuredMode, StructuredWitness};

use nalgebra::ComplexField;
use serde::{Deserialize, Serialize};

use crate::cser;
use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::OperatorSpec;
use crate::pseudotraj::{Trajectory, Window};
use crate::scalar::{inner, CMatrix, CVector, NormKind, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessMode {
    /// All `lambda_n = 1`.
    Classical,
    Super,
    WeakSuper,
    LimitSuper,
}

/// `residual_profile[i] = ||x_n - T^n p - lambda_n T^n q||` at `n = window.lo + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct Witness<R: Real> {
    pub mode: WitnessMode,
    pub window: Window,
    #[serde(with = "cser::vector")]
    pub q: CVector<R>,
    #[serde(default, with = "cser::opt_vector", skip_serializing_if = "Option::is_none")]
    pub p: Option<CVector<R>>,
    #[serde(with = "cser::vec")]
    pub lambdas: Vec<C<R>>,
    pub sup_residual: R,
    pub residual_profile: Vec<R>,
    pub norm: NormKind,
    /// Indices with `lambda_n = 0` (relaxed reading of the definition).
    pub zero_lambda_indices: Vec<i64>,
    /// Sup residual after replacing every zero `lambda_n` by a nonzero
    /// scalar of size `1e-30` (strict reading).
    pub strict_sup_residual: R,
    /// `sup_n |lambda_n| / max(n, 1)`, reported by limit-mode constructions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_growth: Option<R>,
}

impl<R: Real> Witness<R> {
    /// Builds a witness from its fields, computing the residuals.
    pub fn assemble(
        traj: &Trajectory<R>,
        spec: &OperatorSpec<R>,
        mode: WitnessMode,
        q: CVector<R>,
        p: Option<CVector<R>>,
        lambdas: Vec<C<R>>,
        norm: NormKind,
    ) -> Result<Self> {
        if lambdas.len() != traj.len() {
            return Err(Error::DimensionMismatch { expected: traj.len(), found: lambdas.len() });
        }
        let profile = residuals(traj, spec, &q, p.as_ref(), &lambdas, norm)?;
        let zero: Vec<i64> = traj
            .indices()
            .zip(&lambdas)
            .filter(|(_, l)| l.re.is_zero() && l.im.is_zero())
            .map(|(n, _)| n)
            .collect();
        let strict_sup_residual = if zero.is_empty() {
            sup(&profile)
        } else {
            let tiny = C::new(R::lit(1e-30), R::zero());
            let strict: Vec<C<R>> =
                lambdas.iter().map(|l| if l.re.is_zero() && l.im.is_zero() { tiny } else { *l }).collect();
            sup(&residuals(traj, spec, &q, p.as_ref(), &strict, norm)?)
        };
        Ok(Self {
            mode,
            window: traj.window,
            sup_residual: sup(&profile),
            residual_profile: profile,
            q,
            p,
            lambdas,
            norm,
            zero_lambda_indices: zero,
            strict_sup_residual,
            lambda_growth: None,
        })
    }

    pub fn lambda_at(&self, n: i64) -> C<R> {
        self.lambdas[(n - self.window.lo) as usize]
    }

    pub fn residual_at(&self, n: i64) -> R {
        self.residual_profile[(n - self.window.lo) as usize]
    }

    /// Recomputes the residual profile from the stored fields.
    pub fn recompute(&self, traj: &Trajectory<R>, spec: &OperatorSpec<R>) -> Result<Vec<R>> {
        residuals(traj, spec, &self.q, self.p.as_ref(), &self.lambdas, self.norm)
    }

    /// Largest residual over the last quarter of the window.
    pub fn tail_residual(&self) -> R {
        sup(&self.residual_profile[tail_start(self.residual_profile.len())..])
    }

    /// Largest residual over the first quarter of the window.
    pub fn head_residual(&self) -> R {
        let len = self.residual_profile.len();
        sup(&self.residual_profile[..len - tail_start(len)])
    }

    /// Rescales so that `lambda_0 = 1` when `lambda_0 != 0` (the residuals
    /// are unchanged).
    pub fn normalize_lambda0(&mut self) {
        if !self.window.contains(0) {
            return;
        }
        let l0 = self.lambda_at(0);
        if l0.re.is_zero() && l0.im.is_zero() {
            return;
        }
        self.q = self.q.map(|z| z * l0);
        for l in &mut self.lambdas {
            *l /= l0;
        }
    }
}

pub(crate) fn tail_start(len: usize) -> usize {
    len - (len / 4).max(1)
}

pub(crate) fn sup<R: Real>(v: &[R]) -> R {
    v.iter().copied().fold(R::zero(), |m, x| m.max(x))
}

/// Powers `T^n` for every index of a window (negative indices use `T^{-1}`).
pub(crate) struct PowerTable<R: Real> {
    pub mats: Vec<CMatrix<R>>,
}

impl<R: Real> PowerTable<R> {
    pub fn new(spec: &OperatorSpec<R>, window: &Window) -> Result<Self> {
        let d = spec.dim();
        let a = spec.materialize();
        let mut mats = Vec::with_capacity(window.len());
        let start = spec.power_matrix(window.lo)?;
        mats.push(start);
        for i in 1..window.len() {
            let n = window.lo + i as i64;
            let next = if n <= 0 {
                spec.power_matrix(n)?
            } else if n == 1 {
                a.clone()
            } else {
                a * &mats[i - 1]
            };
            mats.push(next);
        }
        debug_assert!(mats.iter().all(|m| m.nrows() == d));
        Ok(Self { mats })
    }
}

fn residuals<R: Real>(
    traj: &Trajectory<R>,
    spec: &OperatorSpec<R>,
    q: &CVector<R>,
    p: Option<&CVector<R>>,
    lambdas: &[C<R>],
    norm: NormKind,
) -> Result<Vec<R>> {
    if q.len() != spec.dim() || traj.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: q.len().max(traj.dim()) });
    }
    let lo = traj.window.lo;
    let vq = spec.orbit(q, lo, traj.window.hi)?;
    let vp = match p {
        Some(p) => Some(spec.orbit(p, lo, traj.window.hi)?),
        None => None,
    };
    Ok(traj
        .points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut r = x - vq[i].map(|z| z * lambdas[i]);
            if let Some(vp) = &vp {
                r -= &vp[i];
            }
            norm.of(&r)
        })
        .collect())
}

/// Per-index Euclidean-optimal scalars for a fixed `q` (and optional `p`).
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaFit<R> {
    pub lambdas: Vec<C<R>>,
    pub residual_profile: Vec<R>,
    pub sup_residual: R,
    pub zero_indices: Vec<i64>,
}

/// `lambda = <x, v> / <v, v>` and the distance from `x` to the line `C v`
/// (`||x||` when `v` vanishes). The distance comes from the 2x2 minors of
/// `(x, v / ||v||)`, which stay accurate when `x` and `v` have entries of
/// very different sizes (e.g. `2^n` against `1`).
pub fn project_onto_line<R: Real>(x: &CVector<R>, v: &CVector<R>, v_is_zero: bool) -> (C<R>, R) {
    if v_is_zero {
        return (C::new(R::zero(), R::zero()), x.norm());
    }
    let vn = v.norm();
    let lambda = inner(x, v).unscale(vn).unscale(vn);
    let u = v.unscale(vn);
    let mut r2 = R::zero();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            r2 += (x[i] * u[j] - x[j] * u[i]).norm_sqr();
        }
    }
    (lambda, r2.sqrt())
}

/// Per-index cutoffs below which `T^n q` counts as the zero vector. An
/// invertible operator never maps `q != 0` to zero, so only exact zeros
/// count; otherwise the cutoff is `1e-13 ||T^n||_F ||q||`.
pub(crate) fn zero_cutoffs<R: Real>(spec: &OperatorSpec<R>, powers: &[CMatrix<R>], q_norm: R) -> Vec<R> {
    if spec.is_invertible() {
        vec![R::zero(); powers.len()]
    } else {
        powers.iter().map(|m| R::lit(1e-13) * m.norm() * q_norm).collect()
    }
}

pub fn optimal_lambdas<R: Real>(
    traj: &Trajectory<R>,
    spec: &OperatorSpec<R>,
    q: &CVector<R>,
) -> Result<LambdaFit<R>> {
    optimal_lambdas_with(traj, spec, q, None, false)
}

/// [`optimal_lambdas`] for the translate `x_n - T^n p`, optionally
/// renormalizing `lambda_0 = 1` (the residuals do not change).
pub fn optimal_lambdas_with<R: Real>(
    traj: &Trajectory<R>,
    spec: &OperatorSpec<R>,
    q: &CVector<R>,
    p: Option<&CVector<R>>,
    normalize: bool,
) -> Result<LambdaFit<R>> {
    if q.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: q.len() });
    }
    if q.norm().is_zero() {
        return Err(Error::param("q", "must be nonzero"));
    }
    let (lo, hi) = (traj.window.lo, traj.window.hi);
    let vq = spec.orbit(q, lo, hi)?;
    let vp = match p {
        Some(p) => Some(spec.orbit(p, lo, hi)?),
        None => None,
    };
    let cutoffs = if spec.is_invertible() {
        vec![R::zero(); vq.len()]
    } else {
        zero_cutoffs(spec, &PowerTable::new(spec, &traj.window)?.mats, q.norm())
    };
    let mut lambdas = Vec::with_capacity(traj.len());
    let mut profile = Vec::with_capacity(traj.len());
    let mut zero_indices = Vec::new();
    for (i, (n, x)) in traj.iter().enumerate() {
        let target = match &vp {
            Some(vp) => x - &vp[i],
            None => x.clone(),
        };
        let v_zero = vq[i].norm() <= cutoffs[i];
        let (l, r) = project_onto_line(&target, &vq[i], v_zero);
        if l.re.is_zero() && l.im.is_zero() {
            zero_indices.push(n);
        }
        lambdas.push(l);
        profile.push(r);
    }
    if normalize && traj.window.contains(0) {
        let l0 = lambdas[(0 - lo) as usize];
        if !(l0.re.is_zero() && l0.im.is_zero()) {
            for l in &mut lambdas {
                *l /= l0;
            }
        }
    }
    Ok(LambdaFit { sup_residual: sup(&profile), lambdas, residual_profile: profile, zero_indices })
}

/// Witness restricted to an invariant subspace `M = range(P_M)`:
/// `q <- P_M q`, scalars unchanged. The new residuals are at most
/// `||P_M||` times the old ones.
pub fn restrict_witness<R: Real>(
    witness: &Witness<R>,
    p_m: &CMatrix<R>,
    spec: &OperatorSpec<R>,
    traj: &Trajectory<R>,
) -> Result<Witness<R>> {
    let d = spec.dim();
    if p_m.nrows() != d || p_m.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: p_m.nrows() });
    }
    let a = spec.materialize();
    let id = linalg::identity::<R>(d);
    let tol = R::lit(1e-10) * spec.operator_norm()?.max(R::one()) * linalg::spectral_norm(p_m)?.max(R::one());
    let leak_m = linalg::invariance_leakage(a, p_m)?;
    let comp = &id - p_m;
    let leak_n = linalg::invariance_leakage(a, &comp)?;
    if leak_m > tol || leak_n > tol {
        return Err(Error::NotInvariant { leakage: leak_m.max(leak_n).as_f64() });
    }
    for x in &traj.points {
        if (&comp * x).norm() > R::lit(1e-10) * x.norm().max(R::one()) {
            return Err(Error::InvalidTrajectory("trajectory leaves the invariant subspace".into()));
        }
    }
    let q = p_m * &witness.q;
    let p = witness.p.as_ref().map(|p| p_m * p);
    let mut out = Witness::assemble(traj, spec, witness.mode, q, p, witness.lambdas.clone(), witness.norm)?;
    out.lambda_growth = witness.lambda_growth;
    Ok(out)
}

/// `y_{n+1} = A y_n + z_n + beta_n A^{n+1} q` on a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct CorrectorSystem<R: Real> {
    pub window: Window,
    /// `z_n` for `n = lo..hi-1`.
    #[serde(with = "cser::vectors")]
    pub z: Vec<CVector<R>>,
    #[serde(with = "cser::vec")]
    pub beta: Vec<C<R>>,
    /// `y_n` for `n = lo..=hi`.
    #[serde(with = "cser::vectors")]
    pub y: Vec<CVector<R>>,
    #[serde(with = "cser::vector")]
    pub q: CVector<R>,
    /// The factor `M / delta` between residuals and correctors.
    pub scale: R,
    /// Measured `sup ||y_n|| / sup ||z_n||` (infinite when `z` vanishes and
    /// `y` does not, zero when both vanish).
    pub k_measured: R,
}

impl<R: Real> CorrectorSystem<R> {
    /// `||y_{n+1} - A y_n - z_n - beta_n A^{n+1} q||` for `n = lo..hi-1`.
    pub fn recurrence_residuals(&self, spec: &OperatorSpec<R>) -> Result<Vec<R>> {
        let a = spec.materialize();
        let vq = spec.orbit(&self.q, self.window.lo + 1, self.window.hi)?;
        Ok((0..self.z.len())
            .map(|i| (&self.y[i + 1] - a * &self.y[i] - &self.z[i] - vq[i].map(|w| w * self.beta[i])).norm())
            .collect())
    }
}

pub fn witness_to_corrector<R: Real>(
    traj: &Trajectory<R>,
    spec: &OperatorSpec<R>,
    witness: &Witness<R>,
) -> Result<CorrectorSystem<R>> {
    witness_to_corrector_scaled(traj, spec, witness, R::one())
}

/// `y_n = s (x_n - T^n p - lambda_n T^n q)`, `beta_n = s (lambda_n - lambda_{n+1})`,
/// `z_n = s (x_{n+1} - T x_n)`.
pub fn witness_to_corrector_scaled<R: Real>(
    traj: &Trajectory<R>,
    spec: &OperatorSpec<R>,
    witness: &Witness<R>,
    scale: R,
) -> Result<CorrectorSystem<R>> {
    if witness.window != traj.window {
        return Err(Error::param("window", "witness and trajectory windows differ"));
    }
    if !(scale > R::zero()) {
        return Err(Error::param("scale", "must be positive"));
    }
    let (lo, hi) = (traj.window.lo, traj.window.hi);
    let a = spec.materialize();
    let vq = spec.orbit(&witness.q, lo, hi)?;
    let vp = match &witness.p {
        Some(p) => Some(spec.orbit(p, lo, hi)?),
        None => None,
    };
    let y: Vec<CVector<R>> = traj
        .points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut r = x - vq[i].map(|w| w * witness.lambdas[i]);
            if let Some(vp) = &vp {
                r -= &vp[i];
            }
            r.scale(scale)
        })
        .collect();
    let z: Vec<CVector<R>> = traj.points.windows(2).map(|w| (&w[1] - a * &w[0]).scale(scale)).collect();
    let beta: Vec<C<R>> = witness.lambdas.windows(2).map(|l| (l[0] - l[1]).scale(scale)).collect();
    let ysup = y.iter().map(|v| v.norm()).fold(R::zero(), |m, x| m.max(x));
    let zsup = z.iter().map(|v| v.norm()).fold(R::zero(), |m, x| m.max(x));
    let k_measured = if zsup > R::zero() {
        ysup / zsup
    } else if ysup > R::zero() {
        R::max_value().unwrap()
    } else {
        R::zero()
    };
    Ok(CorrectorSystem { window: traj.window, z, beta, y, q: witness.q.clone(), scale, k_measured })
}

/// Inverse conversion: `p = x_0 - y_0 / s`, `lambda_0 = 0` and
/// `lambda_{n+1} = lambda_n - beta_n / s`.
pub fn corrector_to_witness<R: Real>(
    system: &CorrectorSystem<R>,
    traj: &Trajectory<R>,
    spec: &OperatorSpec<R>,
) -> Result<Witness<R>> {
    if system.window != traj.window {
        return Err(Error::param("window", "corrector and trajectory windows differ"));
    }
    let w = traj.window;
    if !w.contains(0) {
        return Err(Error::param("window", "conversion anchors at index 0"));
    }
    let i0 = (0 - w.lo) as usize;
    let s = system.scale;
    let p = traj.at(0) - system.y[i0].unscale(s);
    let mut lambdas = vec![C::new(R::zero(), R::zero()); traj.len()];
    for i in i0..traj.len() - 1 {
        lambdas[i + 1] = lambdas[i] - system.beta[i].unscale(s);
    }
    for i in (0..i0).rev() {
        lambdas[i] = lambdas[i + 1] + system.beta[i].unscale(s);
    }
    Witness::assemble(traj, spec, WitnessMode::WeakSuper, system.q.clone(), Some(p), lambdas, NormKind::L2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudotraj::gen_random;
    use crate::rng::{gaussian_matrix, gaussian_vector, rng_from_seed};
    use crate::scalar::c;
    use proptest::prelude::*;

    type Op = OperatorSpec<f64>;

    #[test]
    fn collinear_and_orthogonal_lambdas() {
        let x: CVector<f64> = CVector::from_vec(vec![c(2.0, 1.0), c(-4.0, -2.0)]);
        let v = CVector::from_vec(vec![c(1.0, 0.0), c(-2.0, 0.0)]);
        let (l, r) = project_onto_line(&x, &v, false);
        assert!((l - c::<f64>(2.0, 1.0)).norm() < 1e-15);
        assert!(r < 1e-15);
        let xo: CVector<f64> = CVector::from_vec(vec![c(0.0, 3.0), c(0.0, 0.0)]);
        let vo = CVector::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]);
        let (l, r) = project_onto_line(&xo, &vo, false);
        assert_eq!(l, c(0.0, 0.0));
        assert!((r - 3.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_grid_oracle() {
        let x: CVector<f64> = CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let v = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let (l, r) = project_onto_line(&x, &v, false);
        assert!((l - c::<f64>(1.0, 0.0)).norm() < 1e-15);
        assert!((r - 1.0).abs() < 1e-15);
        // Grid over [-3, 3]^2 with step 1e-3, then nested refinement of the
        // best cell down to a step of 1e-10.
        let res = |lam: C<f64>| ((x[0] - lam * v[0]).norm_sqr() + (x[1] - lam * v[1]).norm_sqr()).sqrt();
        let mut arg = c(0.0, 0.0);
        let mut best = f64::MAX;
        let (mut centre, mut half, mut step) = (c(0.0, 0.0), 3.0, 1e-3);
        while step >= 1e-10 {
            let k = (half / step).round() as i64;
            for i in -k..=k {
                for j in -k..=k {
                    let lam = centre + c(i as f64 * step, j as f64 * step);
                    let r = res(lam);
                    if r < best {
                        best = r;
                        arg = lam;
                    }
                }
            }
            centre = arg;
            half = 2.0 * step;
            step /= 10.0;
        }
        assert!((best - r).abs() < 1e-9);
        assert!((arg - l).norm() < 1e-9);
    }

    #[test]
    fn exact_orbit_lambdas_vanish_residual() {
        let op = Op::diagonal(vec![c(0.6, 0.8), c(1.2, 0.0)]).unwrap();
        let q = CVector::from_vec(vec![c(1.0, -1.0), c(0.5, 0.0)]);
        let t = Trajectory::orbit(&op, &q.scale(3.0), Window::positive(20)).unwrap();
        let fit = optimal_lambdas_with(&t, &op, &q, None, true).unwrap();
        assert!(fit.sup_residual < 1e-12);
        assert!((fit.lambdas[0] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn zero_q_is_rejected() {
        let op = Op::identity(2).unwrap();
        let t = Trajectory::orbit(&op, &CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]), Window::positive(3)).unwrap();
        assert!(optimal_lambdas(&t, &op, &CVector::zeros(2)).is_err());
    }

    #[test]
    fn nilpotent_direction_gets_zero_lambda() {
        let s = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let op = Op::dense(s).unwrap();
        let x = CVector::from_vec(vec![c(0.3, 0.0), c(0.4, 0.0)]);
        let t = Trajectory::new(Window::positive(3), vec![x.clone(); 4], 1.0, "").unwrap();
        let q = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let fit = optimal_lambdas(&t, &op, &q).unwrap();
        assert_eq!(fit.zero_indices, vec![2, 3]);
        assert!((fit.residual_profile[2] - 0.5).abs() < 1e-15);
        let w = Witness::assemble(&t, &op, WitnessMode::Super, q, None, fit.lambdas, NormKind::L2).unwrap();
        assert_eq!(w.zero_lambda_indices, vec![2, 3]);
        assert!((w.strict_sup_residual - w.sup_residual).abs() < 1e-15);
    }

    #[test]
    fn corrector_examples() {
        let op = Op::diagonal_real(&[2.0, 0.5]).unwrap();
        let x0 = CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let t = Trajectory::orbit(&op, &x0, Window::bilateral(5)).unwrap();
        let ones = vec![c(1.0, 0.0); t.len()];
        let w = Witness::assemble(&t, &op, WitnessMode::Classical, x0, None, ones, NormKind::L2).unwrap();
        let sys = witness_to_corrector(&t, &op, &w).unwrap();
        assert!(sys.y.iter().all(|y| y.norm() < 1e-12));
        assert!(sys.beta.iter().all(|b| b.norm() == 0.0));
    }

    #[test]
    fn restriction_examples() {
        let op = Op::block_diag(vec![Op::diagonal_real(&[2.0]).unwrap(), Op::diagonal_real(&[0.5]).unwrap()]).unwrap();
        let x0 = CVector::from_vec(vec![c(0.01, 0.0), c(0.0, 0.0)]);
        let t = Trajectory::orbit(&op, &x0, Window::positive(4)).unwrap();
        let q = CVector::from_vec(vec![c(0.01, 0.0), c(0.3, 0.0)]);
        let fit = optimal_lambdas(&t, &op, &q).unwrap();
        let w = Witness::assemble(&t, &op, WitnessMode::Super, q, None, fit.lambdas, NormKind::L2).unwrap();
        let id = linalg::identity::<f64>(2);
        let same = restrict_witness(&w, &id, &op, &t).unwrap();
        assert_eq!(same.residual_profile, w.residual_profile);
        let pm = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        let r = restrict_witness(&w, &pm, &op, &t).unwrap();
        for (a, b) in r.residual_profile.iter().zip(&w.residual_profile) {
            assert!(*a <= *b + 1e-15);
        }
        let bad = CMatrix::from_element(2, 2, c(0.5, 0.0));
        assert!(matches!(restrict_witness(&w, &bad, &op, &t), Err(Error::NotInvariant { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn optimal_lambda_beats_any_lambda(seed in 0u64..1_000_000) {
            let mut rng = rng_from_seed(seed);
            let d = 1 + (seed % 4) as usize;
            let x = gaussian_vector::<f64, _>(d, &mut rng);
            let v = gaussian_vector::<f64, _>(d, &mut rng);
            let other = crate::rng::complex_normal::<f64, _>(&mut rng);
            let (l, r) = project_onto_line(&x, &v, false);
            let r_other = (&x - v.map(|z| z * other)).norm();
            prop_assert!(r <= r_other + 1e-12);
            // Closed form sqrt(||x||^2 - |<x,v>|^2/||v||^2).
            let closed = (x.norm_squared() - inner(&x, &v).norm_sqr() / v.norm_squared()).max(0.0).sqrt();
            prop_assert!((r - closed).abs() <= 1e-7 * x.norm().max(1.0));
            let _ = l;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn corrector_round_trip(seed in 0u64..1_000_000) {
            let mut rng = rng_from_seed(seed);
            let op = Op::dense(gaussian_matrix::<f64, _>(3, 3, &mut rng).scale(0.5)).unwrap();
            let x0 = gaussian_vector(3, &mut rng);
            let t = gen_random(&op, &x0, 0.1, Window::positive(12), seed).unwrap();
            let q = gaussian_vector(3, &mut rng);
            let p = gaussian_vector(3, &mut rng);
            let lambdas: Vec<_> = (0..t.len()).map(|_| crate::rng::complex_normal(&mut rng)).collect();
            let w = Witness::assemble(&t, &op, WitnessMode::WeakSuper, q, Some(p), lambdas, NormKind::L2).unwrap();
            let sys = witness_to_corrector_scaled(&t, &op, &w, 2.5).unwrap();
            for r in sys.recurrence_residuals(&op).unwrap() {
                prop_assert!(r <= 1e-9);
            }
            let back = corrector_to_witness(&sys, &t, &op).unwrap();
            for (a, b) in back.residual_profile.iter().zip(&w.residual_profile) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
