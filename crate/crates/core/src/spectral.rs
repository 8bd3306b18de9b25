//! Eigenstructure analysis, hyperbolic splittings and the verdict engine.

use nalgebra::ComplexField;
use serde::{Deserialize, Serialize};

use crate::cser;
use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::{OperatorKind, OperatorSpec};
use crate::rng::{rng_from_seed, unit_vector};
use crate::scalar::{CMatrix, Real, C};

pub const DEFAULT_UNIT_CIRCLE_TOL: f64 = 1e-8;
pub const DEFAULT_HORIZON: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterKind {
    Stable,
    Unimodular,
    Unstable,
}

/// A group of numerically coincident eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct EigenGroup<R: Real> {
    #[serde(with = "cser::scalar")]
    pub value: C<R>,
    pub cluster: ClusterKind,
    pub algebraic: usize,
    pub geometric: usize,
}

impl<R: Real> EigenGroup<R> {
    pub fn is_defective(&self) -> bool {
        self.geometric < self.algebraic
    }
}

/// Projections onto the stable (`E`) and unstable (`F`) subspaces together
/// with measured decay constants:
/// `||A^n P_E v|| <= C gamma^n ||P_E v||` and `||A^-n P_F v|| <= C gamma^n ||P_F v||`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct HyperbolicSplitting<R: Real> {
    #[serde(with = "cser::matrix")]
    pub p_e: CMatrix<R>,
    #[serde(with = "cser::matrix")]
    pub p_f: CMatrix<R>,
    pub c: R,
    pub gamma: R,
    /// `min ||lambda| - 1|` over the spectrum.
    pub margin: R,
    pub horizon: usize,
}

/// Outcome of [`HyperbolicSplitting::verify`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCheck<R> {
    pub complement_error: R,
    pub idempotence_error: R,
    pub commutation_error: R,
    /// Largest observed `||A^n P_E v|| / (C gamma^n ||P_E v||)` (and the
    /// inverse-side analogue); at most one when the constants are honest.
    pub worst_decay_ratio: R,
}

impl<R: Real> SplitCheck<R> {
    pub fn passes(&self, tol: R) -> bool {
        self.complement_error <= tol
            && self.idempotence_error <= tol
            && self.commutation_error <= tol
            && self.worst_decay_ratio <= R::one() + tol
    }
}

impl<R: Real> HyperbolicSplitting<R> {
    /// `C (1 + gamma) / (1 - gamma)` times the larger projection norm, the
    /// constant of the bounded corrector `sup ||y_n|| <= K sup ||z_n||`.
    pub fn k_bound(&self) -> Result<R> {
        let pe = linalg::spectral_norm(&self.p_e)?;
        let pf = linalg::spectral_norm(&self.p_f)?;
        Ok(self.c * (R::one() + self.gamma) / (R::one() - self.gamma) * pe.max(pf))
    }

    pub fn verify(&self, spec: &OperatorSpec<R>, samples: usize, seed: u64) -> Result<SplitCheck<R>> {
        let a = spec.materialize();
        let d = spec.dim();
        let id = linalg::identity::<R>(d);
        let scale = spec.operator_norm()?.max(R::one());
        let complement_error = (&self.p_e + &self.p_f - &id).norm();
        let idempotence_error =
            (&self.p_e * &self.p_e - &self.p_e).norm().max((&self.p_f * &self.p_f - &self.p_f).norm());
        let commutation_error = (a * &self.p_e - &self.p_e * a).norm() / scale;
        let inv = spec.inverse_matrix()?;
        let mut rng = rng_from_seed(seed);
        let mut worst = R::zero();
        for _ in 0..samples {
            let v = unit_vector::<R, _>(d, &mut rng);
            for (p, step) in [(&self.p_e, a), (&self.p_f, inv)] {
                let mut u = p * &v;
                let base = u.norm();
                if base <= R::lit(1e-12) {
                    continue;
                }
                let mut bound = self.c * base;
                for _ in 0..self.horizon {
                    u = p * (step * u);
                    bound *= self.gamma;
                    let ratio = u.norm() / bound;
                    if ratio.is_finite() && ratio > worst {
                        worst = ratio;
                    }
                }
            }
        }
        Ok(SplitCheck { complement_error, idempotence_error, commutation_error, worst_decay_ratio: worst })
    }
}

/// Eigenvalues sorted into stable, unimodular and unstable clusters, with
/// orthonormal bases of the corresponding spectral subspaces.
#[derive(Debug, Clone)]
pub struct EigenSplit<R: Real> {
    pub eigenvalues: Vec<C<R>>,
    pub groups: Vec<EigenGroup<R>>,
    pub stable: Vec<C<R>>,
    pub unimodular: Vec<C<R>>,
    pub unstable: Vec<C<R>>,
    pub stable_basis: CMatrix<R>,
    pub unimodular_basis: CMatrix<R>,
    pub unstable_basis: CMatrix<R>,
    pub invertible: bool,
    pub splitting: Option<HyperbolicSplitting<R>>,
    pub unit_circle_tol: R,
}

impl<R: Real> EigenSplit<R> {
    pub fn has_defective_cluster(&self) -> bool {
        self.groups.iter().any(EigenGroup::is_defective)
    }
}

fn cluster_of<R: Real>(z: &C<R>, tol: R) -> ClusterKind {
    let m = z.modulus();
    if m < R::one() - tol {
        ClusterKind::Stable
    } else if m > R::one() + tol {
        ClusterKind::Unstable
    } else {
        ClusterKind::Unimodular
    }
}

fn group_eigenvalues<R: Real>(a: &CMatrix<R>, eig: &[C<R>], tol: R) -> Result<Vec<EigenGroup<R>>> {
    let d = a.nrows();
    let scale = linalg::spectral_norm(a)?.max(R::one());
    let merge = R::lit(1e-5) * scale;
    let mut groups: Vec<(Vec<C<R>>, C<R>)> = Vec::new();
    for z in eig {
        match groups.iter_mut().find(|(_, c)| (*c - z).modulus() <= merge) {
            Some((members, center)) => {
                members.push(*z);
                let n = R::from_usize_lossy(members.len());
                *center = members.iter().fold(C::new(R::zero(), R::zero()), |s, w| s + w).unscale(n);
            }
            None => groups.push((vec![*z], *z)),
        }
    }
    let id = linalg::identity::<R>(d);
    let rank_thr = R::lit(1e-6) * scale;
    groups
        .into_iter()
        .map(|(members, value)| {
            let shifted = a - id.map(|e| e * value);
            let geometric = d - linalg::rank(&shifted, rank_thr)?;
            Ok(EigenGroup {
                value,
                cluster: cluster_of(&value, tol),
                algebraic: members.len(),
                geometric: geometric.min(members.len()).max(1),
            })
        })
        .collect()
}

fn is_diagonal<R: Real>(a: &CMatrix<R>) -> bool {
    (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)].modulus().is_zero()))
}

/// Projections onto the stable, unimodular and unstable spectral subspaces.
fn cluster_projections<R: Real>(
    spec: &OperatorSpec<R>,
    eig: &[C<R>],
    tol: R,
) -> Result<[CMatrix<R>; 3]> {
    let a = spec.materialize();
    let d = spec.dim();
    let pick = |diag: &dyn Fn(usize) -> ClusterKind| -> [CMatrix<R>; 3] {
        let mut out = [CMatrix::zeros(d, d), CMatrix::zeros(d, d), CMatrix::zeros(d, d)];
        for i in 0..d {
            let slot = match diag(i) {
                ClusterKind::Stable => 0,
                ClusterKind::Unimodular => 1,
                ClusterKind::Unstable => 2,
            };
            out[slot][(i, i)] = C::new(R::one(), R::zero());
        }
        out
    };
    if let OperatorKind::NilpotentPlusRotation { nilpotent, .. } = spec.kind() {
        let ys = nilpotent.nrows();
        return Ok(pick(&|i| if i < ys { ClusterKind::Stable } else { ClusterKind::Unimodular }));
    }
    if is_diagonal(a) {
        return Ok(pick(&|i| cluster_of(&a[(i, i)], tol)));
    }
    let moduli = |k: ClusterKind| -> Vec<R> {
        eig.iter().filter(|z| cluster_of(z, tol) == k).map(|z| z.modulus()).collect()
    };
    let max_of = |v: &[R]| v.iter().copied().fold(None, |m: Option<R>, x| Some(m.map_or(x, |m| m.max(x))));
    let min_of = |v: &[R]| v.iter().copied().fold(None, |m: Option<R>, x| Some(m.map_or(x, |m| m.min(x))));
    let (st, un, us) = (moduli(ClusterKind::Stable), moduli(ClusterKind::Unimodular), moduli(ClusterKind::Unstable));
    let id = linalg::identity::<R>(d);
    let half = R::lit(0.5);
    // Projection onto eigenvalues of modulus <= `inner`, separated from those >= `outer`.
    let below = |inner: Option<R>, outer: Option<R>| -> Result<CMatrix<R>> {
        match (inner, outer) {
            (None, _) => Ok(CMatrix::zeros(d, d)),
            (Some(_), None) => Ok(id.clone()),
            (Some(i), Some(o)) => linalg::disk_projection(a, (i + o) * half),
        }
    };
    let p_stable = below(max_of(&st), min_of(&un).or(min_of(&us)))?;
    let inner_all = max_of(&un).or(max_of(&st));
    let p_low = below(inner_all, min_of(&us))?;
    let p_unimodular = &p_low - &p_stable;
    let p_unstable = &id - p_low;
    Ok([p_stable, p_unimodular, p_unstable])
}

/// Largest `||(A/gamma)^n restricted to range(p)||` over `n <= horizon`,
/// stepping with `step` and re-projecting onto `range(p)` after each step.
fn measure_c<R: Real>(step: &CMatrix<R>, p: &CMatrix<R>, gamma: R, horizon: usize) -> Result<R> {
    let q = linalg::projection_range_basis(p)?;
    if q.ncols() == 0 {
        return Ok(R::one());
    }
    let scaled = step.unscale(gamma);
    let mut m = q;
    let mut c = R::one();
    for _ in 0..horizon {
        m = p * (&scaled * m);
        let n = linalg::spectral_norm(&m)?;
        if !n.is_finite() {
            return Err(Error::NonConvergence { what: "decay constant measurement", iterations: horizon });
        }
        c = c.max(n);
    }
    Ok(c)
}

fn structured_eigenvalues<R: Real>(spec: &OperatorSpec<R>) -> Result<Vec<C<R>>> {
    match spec.kind() {
        OperatorKind::Diagonal { entries } => Ok(entries.clone()),
        OperatorKind::JordanBlock { eigenvalue, size } => Ok(vec![*eigenvalue; *size]),
        OperatorKind::NilpotentPlusRotation { nilpotent, beta, .. } => {
            let mut v = vec![C::new(R::zero(), R::zero()); nilpotent.nrows()];
            v.push(*beta);
            Ok(v)
        }
        OperatorKind::BlockDiag { blocks } => {
            let mut v = Vec::with_capacity(spec.dim());
            for b in blocks {
                v.extend(structured_eigenvalues(b)?);
            }
            Ok(v)
        }
        _ => linalg::eigenvalues(spec.materialize()),
    }
}

pub fn eigen_split<R: Real>(spec: &OperatorSpec<R>, unit_circle_tol: R) -> Result<EigenSplit<R>> {
    eigen_split_with_horizon(spec, unit_circle_tol, DEFAULT_HORIZON)
}

pub fn eigen_split_with_horizon<R: Real>(
    spec: &OperatorSpec<R>,
    unit_circle_tol: R,
    horizon: usize,
) -> Result<EigenSplit<R>> {
    let a = spec.materialize();
    let tol = unit_circle_tol;
    let eigenvalues = structured_eigenvalues(spec)?;
    let groups = group_eigenvalues(a, &eigenvalues, tol)?;
    let split3 = |k: ClusterKind| eigenvalues.iter().copied().filter(|z| cluster_of(z, tol) == k).collect::<Vec<_>>();
    let stable = split3(ClusterKind::Stable);
    let unimodular = split3(ClusterKind::Unimodular);
    let unstable = split3(ClusterKind::Unstable);
    let [p_s, p_u, p_x] = cluster_projections(spec, &eigenvalues, tol)?;
    let invertible = spec.is_invertible();

    let splitting = if unimodular.is_empty() && invertible {
        let mut gamma = stable.iter().map(|z| z.modulus()).fold(R::zero(), |m, x| m.max(x));
        gamma = unstable.iter().map(|z| R::one() / z.modulus()).fold(gamma, |m, x| m.max(x));
        if groups.iter().any(EigenGroup::is_defective) {
            gamma = (gamma + R::one()) * R::lit(0.5);
        }
        // A zero gamma (every eigenvalue collapsed at 0 or infinity) cannot
        // occur for invertible operators, but guard against underflow.
        gamma = gamma.max(R::lit(1e-6));
        let margin = eigenvalues.iter().map(|z| (z.modulus() - R::one()).abs()).fold(R::max_value().unwrap(), |m, x| m.min(x));
        let c_e = measure_c(a, &p_s, gamma, horizon)?;
        let c_f = measure_c(spec.inverse_matrix()?, &p_x, gamma, horizon)?;
        Some(HyperbolicSplitting { p_e: p_s.clone(), p_f: p_x.clone(), c: c_e.max(c_f), gamma, margin, horizon })
    } else {
        None
    };

    Ok(EigenSplit {
        stable_basis: linalg::projection_range_basis(&p_s)?,
        unimodular_basis: linalg::projection_range_basis(&p_u)?,
        unstable_basis: linalg::projection_range_basis(&p_x)?,
        eigenvalues,
        groups,
        stable,
        unimodular,
        unstable,
        invertible,
        splitting,
        unit_circle_tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictTag {
    Shadowing,
    PositiveSuperShadowingNotShadowing,
    PositiveLimitSuperShadowingNotShadowing,
    NoPositiveSuperShadowing,
    TriviallySuperShadowing,
    Indeterminate,
}

impl VerdictTag {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictTag::Shadowing => "Shadowing",
            VerdictTag::PositiveSuperShadowingNotShadowing => "PositiveSuperShadowingNotShadowing",
            VerdictTag::PositiveLimitSuperShadowingNotShadowing => "PositiveLimitSuperShadowingNotShadowing",
            VerdictTag::NoPositiveSuperShadowing => "NoPositiveSuperShadowing",
            VerdictTag::TriviallySuperShadowing => "TriviallySuperShadowing",
            VerdictTag::Indeterminate => "Indeterminate",
        }
    }
}

impl std::fmt::Display for VerdictTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct Verdict<R: Real> {
    pub tag: VerdictTag,
    /// Set together with `PositiveSuperShadowingNotShadowing`: in finite
    /// dimensions a nilpotent part is quasinilpotent, so the limit variant
    /// holds as well.
    pub limit_super_shadowing: bool,
    #[serde(with = "cser::vec")]
    pub eigenvalues: Vec<C<R>>,
    pub groups: Vec<EigenGroup<R>>,
    #[serde(default, with = "cser::opt_scalar", skip_serializing_if = "Option::is_none")]
    pub beta: Option<C<R>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<R>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<R>,
    pub unit_circle_tol: R,
    pub nilpotency_tol: R,
    pub reason: String,
}

/// Options for [`classify_with`].
#[derive(Debug, Clone, Copy)]
pub struct ClassifyOptions<R> {
    pub unit_circle_tol: R,
    /// Relative tolerance of the structural nilpotency check
    /// `||A^dim P_0|| <= tol * max(1, ||A||)^dim`.
    pub nilpotency_tol: R,
    pub isometry_tol: R,
}

impl<R: Real> Default for ClassifyOptions<R> {
    fn default() -> Self {
        Self {
            unit_circle_tol: R::lit(DEFAULT_UNIT_CIRCLE_TOL),
            nilpotency_tol: R::lit(1e-8),
            isometry_tol: R::lit(1e-10).max(R::lit(1000.0) * R::epsilon()),
        }
    }
}

const MODEL_NOTE: &str = "verdict concerns this finite-dimensional model, not an untruncated operator";

pub fn classify<R: Real>(spec: &OperatorSpec<R>, tol: R) -> Verdict<R> {
    classify_with(spec, &ClassifyOptions { unit_circle_tol: tol, ..ClassifyOptions::default() })
}

pub fn classify_with<R: Real>(spec: &OperatorSpec<R>, opts: &ClassifyOptions<R>) -> Verdict<R> {
    let tol = opts.unit_circle_tol;
    let mut verdict = Verdict {
        tag: VerdictTag::Indeterminate,
        limit_super_shadowing: false,
        eigenvalues: vec![],
        groups: vec![],
        beta: None,
        c: None,
        gamma: None,
        unit_circle_tol: tol,
        nilpotency_tol: opts.nilpotency_tol,
        reason: String::new(),
    };
    let split = match eigen_split(spec, tol) {
        Ok(s) => s,
        Err(e) => {
            verdict.reason = format!("eigenstructure unavailable: {e}");
            return verdict;
        }
    };
    verdict.eigenvalues = split.eigenvalues.clone();
    verdict.groups = split.groups.clone();
    let a = spec.materialize();

    if spec.dim() == 1 {
        let lambda = a[(0, 0)];
        if cluster_of(&lambda, tol) == ClusterKind::Unimodular {
            verdict.tag = VerdictTag::TriviallySuperShadowing;
            verdict.beta = Some(lambda);
            verdict.reason = "one-dimensional with unimodular eigenvalue: every pseudotrajectory is a rescaled orbit".into();
        } else {
            verdict.tag = VerdictTag::Shadowing;
            verdict.reason = "one-dimensional with non-unimodular eigenvalue".into();
        }
        return verdict;
    }

    if let Some(s) = &split.splitting {
        verdict.tag = VerdictTag::Shadowing;
        verdict.c = Some(s.c);
        verdict.gamma = Some(s.gamma);
        verdict.reason = format!("hyperbolic: spectrum avoids the unit circle (margin {}); {MODEL_NOTE}", s.margin);
        return verdict;
    }

    let mut failed: Vec<String> = Vec::new();
    if split.unimodular.is_empty() {
        failed.push("no unimodular eigenvalue but operator is singular".into());
    }

    match nilpotent_plus_rotation_evidence(spec, &split, opts) {
        Ok(beta) => {
            verdict.tag = VerdictTag::PositiveSuperShadowingNotShadowing;
            verdict.limit_super_shadowing = true;
            verdict.beta = Some(beta);
            verdict.reason = format!(
                "X = Y + N with the restriction to Y nilpotent and T|N = beta with |beta| = 1; \
                 positive super-shadowing and positive limit super-shadowing without shadowing; {MODEL_NOTE}"
            );
            return verdict;
        }
        Err(why) => failed.push(why),
    }

    if spec.is_isometry(opts.isometry_tol) {
        verdict.tag = VerdictTag::NoPositiveSuperShadowing;
        verdict.reason = format!(
            "surjective isometry in dimension {} > 1: chain recurrent and not supercyclic, hence no positive super-shadowing; {MODEL_NOTE}",
            spec.dim()
        );
        return verdict;
    }
    failed.push("not an isometry".into());
    if split.invertible && !split.unimodular.is_empty() {
        failed.push("invertible with a unimodular eigenvalue in dimension > 1, so bilateral super-shadowing fails, but the positive variant is not decided".into());
    }
    verdict.reason = format!("no rule applies: {}", failed.join("; "));
    verdict
}

/// Checks `sigma(A) = {0} u {beta}` with `beta` simple and unimodular and the
/// zero cluster nilpotent; returns `beta`.
fn nilpotent_plus_rotation_evidence<R: Real>(
    spec: &OperatorSpec<R>,
    split: &EigenSplit<R>,
    opts: &ClassifyOptions<R>,
) -> std::result::Result<C<R>, String> {
    if let OperatorKind::NilpotentPlusRotation { beta, .. } = spec.kind() {
        return Ok(*beta);
    }
    if split.unimodular.len() != 1 {
        return Err(format!("expected exactly one unimodular eigenvalue, found {}", split.unimodular.len()));
    }
    if !split.unstable.is_empty() {
        return Err("eigenvalues outside the closed unit disc".into());
    }
    let beta = split.unimodular[0];
    let a = spec.materialize();
    let d = spec.dim();
    let inner = split.stable.iter().map(|z| z.modulus()).fold(R::zero(), |m, x| m.max(x));
    let p0 = if is_diagonal(a) {
        CMatrix::from_fn(d, d, |i, j| {
            if i == j && cluster_of(&a[(i, i)], opts.unit_circle_tol) == ClusterKind::Stable {
                C::new(R::one(), R::zero())
            } else {
                C::new(R::zero(), R::zero())
            }
        })
    } else {
        linalg::disk_projection(a, (inner + beta.modulus()) * R::lit(0.5)).map_err(|e| e.to_string())?
    };
    let scale = spec.operator_norm().map_err(|e| e.to_string())?.max(R::one());
    let lhs = linalg::spectral_norm(&(linalg::mat_pow(a, d as u64) * &p0)).map_err(|e| e.to_string())?;
    if lhs > opts.nilpotency_tol * scale.powi(d as i32) {
        return Err(format!("restriction to the non-unimodular part is not nilpotent: ||A^{d} P_0|| = {lhs}"));
    }
    Ok(beta)
}
