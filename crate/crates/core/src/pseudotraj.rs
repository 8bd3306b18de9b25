//! Pseudotrajectories: containers, defect measurement, random and adversarial
//! generators, power interleaving/subsampling and chains through zero.

use nalgebra::ComplexField;
use serde::{Deserialize, Serialize};

use crate::cser;
use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::OperatorSpec;
use crate::rng::{in_ball, SeedTree};
use crate::scalar::{cpowi, CMatrix, CVector, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexConvention {
    /// Indices in `Z`.
    Bilateral,
    /// Indices in `N_0`.
    Positive,
}

/// Contiguous index range `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub convention: IndexConvention,
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(convention: IndexConvention, lo: i64, hi: i64) -> Result<Self> {
        if hi < lo {
            return Err(Error::param("window", format!("empty range {lo}..={hi}")));
        }
        if convention == IndexConvention::Positive && lo < 0 {
            return Err(Error::param("window", "positive windows start at a non-negative index"));
        }
        Ok(Self { convention, lo, hi })
    }

    /// `-n..=n`.
    pub fn bilateral(n: u32) -> Self {
        Self { convention: IndexConvention::Bilateral, lo: -(n as i64), hi: n as i64 }
    }

    /// `0..=n`.
    pub fn positive(n: u32) -> Self {
        Self { convention: IndexConvention::Positive, lo: 0, hi: n as i64 }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, n: i64) -> bool {
        (self.lo..=self.hi).contains(&n)
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<i64> {
        self.lo..=self.hi
    }

    /// Distance from `n` to the nearest window edge.
    pub fn gap(&self, n: i64) -> i64 {
        (n - self.lo).min(self.hi - n)
    }
}

/// Finite window of a (pseudo)trajectory. `points[i]` is the point at index
/// `window.lo + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryDoc<R>", bound = "R: Real")]
pub struct Trajectory<R: Real> {
    pub window: Window,
    #[serde(with = "cser::vectors")]
    pub points: Vec<CVector<R>>,
    pub delta_claimed: R,
    pub origin: String,
}

#[derive(Deserialize)]
#[serde(bound = "R: Real")]
struct TrajectoryDoc<R: Real> {
    window: Window,
    #[serde(with = "cser::vectors")]
    points: Vec<CVector<R>>,
    delta_claimed: R,
    #[serde(default)]
    origin: String,
}

impl<R: Real> TryFrom<TrajectoryDoc<R>> for Trajectory<R> {
    type Error = Error;

    fn try_from(d: TrajectoryDoc<R>) -> Result<Self> {
        Trajectory::new(d.window, d.points, d.delta_claimed, d.origin)
    }
}

impl<R: Real> Trajectory<R> {
    pub fn new(window: Window, points: Vec<CVector<R>>, delta_claimed: R, origin: impl Into<String>) -> Result<Self> {
        let window = Window::new(window.convention, window.lo, window.hi)?;
        if points.len() != window.len() {
            return Err(Error::InvalidTrajectory(format!(
                "window {}..={} needs {} points, got {}",
                window.lo,
                window.hi,
                window.len(),
                points.len()
            )));
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidTrajectory("points must share a positive dimension".into()));
        }
        if !(delta_claimed >= R::zero()) {
            return Err(Error::InvalidTrajectory("delta_claimed must be non-negative".into()));
        }
        Ok(Self { window, points, delta_claimed, origin: origin.into() })
    }

    /// Exact orbit `A^n v` over the window.
    pub fn orbit(spec: &OperatorSpec<R>, v: &CVector<R>, window: Window) -> Result<Self> {
        let points = spec.orbit(v, window.lo, window.hi)?;
        Self::new(window, points, R::zero(), "orbit")
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn at(&self, n: i64) -> &CVector<R> {
        &self.points[(n - self.window.lo) as usize]
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<i64> {
        self.window.indices()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &CVector<R>)> {
        self.window.indices().zip(self.points.iter())
    }

    /// Restriction to a sub-window.
    pub fn restrict(&self, lo: i64, hi: i64) -> Result<Self> {
        if lo < self.window.lo || hi > self.window.hi {
            return Err(Error::param("window", format!("{lo}..={hi} is not inside {}..={}", self.window.lo, self.window.hi)));
        }
        let w = Window::new(self.window.convention, lo, hi)?;
        let pts = self.points[(lo - self.window.lo) as usize..=(hi - self.window.lo) as usize].to_vec();
        Self::new(w, pts, self.delta_claimed, self.origin.clone())
    }

    fn check_spec(&self, spec: &OperatorSpec<R>) -> Result<()> {
        if spec.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: spec.dim(), found: self.dim() });
        }
        Ok(())
    }
}

/// Per-step defects `||A x_n - x_{n+1}||`; `profile[i]` belongs to index `lo + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectReport<R> {
    pub window: Window,
    pub max_defect: R,
    pub profile: Vec<R>,
}

impl<R: Real> DefectReport<R> {
    pub fn is_pseudo(&self, delta: R) -> bool {
        self.max_defect <= delta
    }

    /// `(|n|, defect_n)` pairs, for limit checks.
    pub fn tail_profile(&self) -> Vec<(u64, R)> {
        self.profile.iter().enumerate().map(|(i, d)| ((self.window.lo + i as i64).unsigned_abs(), *d)).collect()
    }

    pub fn at(&self, n: i64) -> R {
        self.profile[(n - self.window.lo) as usize]
    }
}

pub fn measure_defect<R: Real>(traj: &Trajectory<R>, spec: &OperatorSpec<R>) -> Result<DefectReport<R>> {
    traj.check_spec(spec)?;
    if traj.len() < 2 {
        return Err(Error::InvalidTrajectory("defect needs a window of length >= 2".into()));
    }
    let a = spec.materialize();
    let profile: Vec<R> = traj.points.windows(2).map(|w| (a * &w[0] - &w[1]).norm()).collect();
    let max_defect = profile.iter().copied().fold(R::zero(), |m, x| m.max(x));
    Ok(DefectReport { window: traj.window, max_defect, profile })
}

const SHRINK_ATTEMPTS: usize = 8;

/// Random `delta`-pseudotrajectory through `x0` at index 0 (or at `window.lo`
/// when the window starts after 0), with perturbations uniform in the
/// `delta`-ball.
pub fn gen_random<R: Real>(
    spec: &OperatorSpec<R>,
    x0: &CVector<R>,
    delta: R,
    window: Window,
    seed: u64,
) -> Result<Trajectory<R>> {
    gen_random_profile(spec, x0, window, seed, |_| delta)
}

/// Like [`gen_random`], with the admissible defect of step `n -> n+1` given
/// by `radius(n)` (e.g. a vanishing drift `1/(|n|+1)`).
pub fn gen_random_profile<R: Real>(
    spec: &OperatorSpec<R>,
    x0: &CVector<R>,
    window: Window,
    seed: u64,
    radius: impl Fn(i64) -> R,
) -> Result<Trajectory<R>> {
    if x0.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: x0.len() });
    }
    let window = Window::new(window.convention, window.lo, window.hi)?;
    let a = spec.materialize();
    let d = spec.dim();
    let anchor = window.lo.max(0).min(window.hi);
    let mut delta_claimed = R::zero();
    for n in window.lo..window.hi {
        let r = radius(n);
        if !(r >= R::zero()) || !r.is_finite() {
            return Err(Error::param("delta", "perturbation radius must be finite and non-negative"));
        }
        delta_claimed = delta_claimed.max(r);
    }
    let tree = SeedTree::new(seed);
    let mut points = vec![CVector::zeros(d); window.len()];
    let pos = |n: i64| (n - window.lo) as usize;
    points[pos(anchor)] = x0.clone();

    let mut fwd = tree.child(1).rng();
    for n in anchor..window.hi {
        let r = radius(n);
        let z = in_ball::<R, _>(d, r, &mut fwd);
        let ax = a * &points[pos(n)];
        let next = shrink_until_within(&z, r, n, |z| {
            let cand = &ax + z;
            let defect = (&ax - &cand).norm();
            (cand, defect)
        })?;
        points[pos(n + 1)] = next;
    }
    if window.lo < anchor {
        let inv = spec.inverse_matrix()?;
        let mut bwd = tree.child(2).rng();
        for n in (window.lo..anchor).rev() {
            let r = radius(n);
            let z = in_ball::<R, _>(d, r, &mut bwd);
            let next = &points[pos(n + 1)];
            let prev = shrink_until_within(&z, r, n, |z| {
                let cand = inv * (next + z);
                let defect = (a * &cand - next).norm();
                (cand, defect)
            })?;
            points[pos(n)] = prev;
        }
    }
    Trajectory::new(window, points, delta_claimed, format!("random(seed={seed})"))
}

/// Applies `step` to `z`, halving `z` (and finally dropping it) while the
/// measured floating-point defect exceeds `bound`.
fn shrink_until_within<R: Real>(
    z: &CVector<R>,
    bound: R,
    index: i64,
    step: impl Fn(&CVector<R>) -> (CVector<R>, R),
) -> Result<CVector<R>> {
    let mut z = z.clone();
    for attempt in 0..=SHRINK_ATTEMPTS {
        if attempt == SHRINK_ATTEMPTS {
            z.fill(C::new(R::zero(), R::zero()));
        }
        let (cand, defect) = step(&z);
        if defect <= bound {
            return Ok(cand);
        }
        z = z.scale(R::lit(0.5));
    }
    Err(Error::PrecisionLoss {
        index,
        detail: "rounding alone exceeds the admissible defect; shorten the window or increase delta".into(),
    })
}

/// Mirrored triangle wave: `psi(0) = 1`, excursions `1, 2, 1`, `1, 2, 3, 2, 1`,
/// ... with `psi(k^2) = k + 1`, `psi(-n) = psi(n)`.
pub fn psi(n: i64) -> i64 {
    let n = n.unsigned_abs() as i64;
    // Excursion k occupies [k(k-1), k(k+1)).
    let mut k = ((n as f64).sqrt() as i64).max(1);
    while k * (k - 1) > n {
        k -= 1;
    }
    while k * (k + 1) <= n {
        k += 1;
    }
    let t = n - k * (k - 1);
    1 + t.min(2 * k - t)
}

/// `omega_n = |n|` (or `n` for the signed walk).
pub fn omega(n: i64, signed: bool) -> i64 {
    if signed {
        n
    } else {
        n.abs()
    }
}

/// `theta_n = sum_{k=1}^{|n|} 1/k`.
pub fn harmonic<R: Real>(n: i64) -> R {
    (1..=n.unsigned_abs()).fold(R::zero(), |s, k| s + R::one() / R::lit(k as f64))
}

/// `sum_{k=1}^{n} k^(-1/2)`.
pub fn root_harmonic<R: Real>(n: i64) -> R {
    (1..=n.unsigned_abs()).fold(R::zero(), |s, k| s + R::one() / R::lit(k as f64).sqrt())
}

/// Table `gamma[i][n]`, `i = 1..=k`, `n = 0..=len`: `gamma_{1,n} = H_n` and
/// `gamma_{i,n+1} = gamma_{i,n} + gamma_{i-1,n}` with `gamma_{i,0} = 0`.
pub fn jordan_harmonic_table<R: Real>(k: usize, len: usize) -> Vec<Vec<R>> {
    let mut g = vec![vec![R::zero(); len + 1]; k + 1];
    for n in 0..len {
        g[1][n + 1] = g[1][n] + R::one() / R::lit((n + 1) as f64);
        for i in 2..=k {
            g[i][n + 1] = g[i][n] + g[i - 1][n];
        }
    }
    g
}

fn generalized_binomial(n: i64, j: usize) -> f64 {
    (0..j).fold(1.0, |c, i| c * (n - i as i64) as f64 / (i + 1) as f64)
}

fn check_unimodular<R: Real>(name: &'static str, z: C<R>) -> Result<()> {
    let tol = R::lit(1e-12).max(R::lit(100.0) * R::epsilon());
    if (z.modulus() - R::one()).abs() > tol {
        return Err(Error::NotUnimodular { name, modulus: z.modulus().as_f64() });
    }
    Ok(())
}

fn check_delta<R: Real>(delta: R) -> Result<()> {
    if !(delta > R::zero()) || !delta.is_finite() {
        return Err(Error::param("delta", "must be positive and finite"));
    }
    Ok(())
}

/// Path `x = x_0, ..., x_n = y` with every link defect `||T x_i - x_{i+1}|| < delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct ChainPath<R: Real> {
    #[serde(with = "cser::vectors")]
    pub points: Vec<CVector<R>>,
    pub delta: R,
    /// Position of the point 0 the chain passes through.
    pub zero_index: usize,
}

impl<R: Real> ChainPath<R> {
    pub fn start(&self) -> &CVector<R> {
        &self.points[0]
    }

    pub fn end(&self) -> &CVector<R> {
        self.points.last().expect("chain is non-empty")
    }

    pub fn link_defects(&self, spec: &OperatorSpec<R>) -> Vec<R> {
        let a = spec.materialize();
        self.points.windows(2).map(|w| (a * &w[0] - &w[1]).norm()).collect()
    }

    /// The chain from `start` to 0.
    pub fn to_zero(&self) -> Vec<CVector<R>> {
        self.points[..=self.zero_index].to_vec()
    }

    /// The chain from 0 to `end`.
    pub fn from_zero(&self) -> Vec<CVector<R>> {
        self.points[self.zero_index..].to_vec()
    }
}

/// Chain from `x` to `y` through 0 for an invertible isometry: the forward
/// leg `x_i = (1 - i/l) T^i x` and the backward leg `y_j = (j/m) T^{j-m} y`.
pub fn chain_through_zero<R: Real>(
    spec: &OperatorSpec<R>,
    x: &CVector<R>,
    y: &CVector<R>,
    delta: R,
) -> Result<ChainPath<R>> {
    check_delta(delta)?;
    let d = spec.dim();
    for v in [x, y] {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: v.len() });
        }
    }
    let tol = R::lit(1e-10).max(R::lit(1000.0) * R::epsilon());
    if !spec.is_isometry(tol) {
        return Err(Error::InvalidOperator("chain through zero needs a unitary operator".into()));
    }
    let steps = |v: &CVector<R>| -> usize {
        let n = v.norm();
        if n.is_zero() {
            0
        } else {
            (n / delta).ceil().to_usize().unwrap_or(usize::MAX - 1) + 1
        }
    };
    let l = steps(x);
    let m = steps(y);
    let mut points = Vec::with_capacity(l + m + 1);
    if l > 0 {
        let fwd = spec.orbit(x, 0, l as i64)?;
        for (i, p) in fwd.into_iter().enumerate().take(l) {
            let s = R::one() - R::from_usize_lossy(i) / R::from_usize_lossy(l);
            points.push(p.scale(s));
        }
    }
    let zero_index = points.len();
    points.push(CVector::zeros(d));
    if m > 0 {
        let bwd = spec.orbit(y, -(m as i64), 0)?;
        for (j, p) in bwd.into_iter().enumerate().skip(1) {
            if j == m {
                points.push(y.clone());
            } else {
                points.push(p.scale(R::from_usize_lossy(j) / R::from_usize_lossy(m)));
            }
        }
    }
    if l == 0 {
        // x = 0 is itself the start.
        points[0] = x.clone();
    }
    Ok(ChainPath { points, delta, zero_index })
}

/// Adversarial pseudotrajectory families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", bound = "R: Real")]
pub enum AdversarialKind<R: Real> {
    /// `(delta beta1^n n, delta beta2^n psi(n))` for `diag(beta1, beta2)`;
    /// `beta2` defaults to `beta1`.
    RotationLinear {
        #[serde(with = "cser::scalar")]
        beta: C<R>,
        #[serde(default, with = "cser::opt_scalar", skip_serializing_if = "Option::is_none")]
        beta2: Option<C<R>>,
        delta: R,
    },
    /// `y_{n+1} = J y_n + delta beta^{n+1} e_1` with `y_0 = 0` for the
    /// lower Jordan block `J` of size `k`.
    JordanImpulse {
        #[serde(with = "cser::scalar")]
        beta: C<R>,
        k: usize,
        delta: R,
    },
    /// `(delta beta^n theta(n), delta beta^n psi(n))`, `theta` harmonic and
    /// `psi` the root-harmonic sum.
    HarmonicPair {
        #[serde(with = "cser::scalar")]
        beta: C<R>,
        delta: R,
    },
    /// `(beta^n gamma_{1,n}, ..., beta^{n-k+1} gamma_{k,n})`.
    JordanHarmonic {
        #[serde(with = "cser::scalar")]
        beta: C<R>,
        k: usize,
    },
    /// `(T^n p, beta^n delta omega_n)` for `S = T ⊕ beta`.
    IsometryWalk {
        t: OperatorSpec<R>,
        #[serde(with = "cser::vector")]
        p: CVector<R>,
        #[serde(with = "cser::scalar")]
        beta: C<R>,
        delta: R,
        #[serde(default)]
        signed: bool,
    },
    /// `(T^n p, theta_n beta^n)` for `S = T ⊕ beta`.
    HarmonicBilateral {
        t: OperatorSpec<R>,
        #[serde(with = "cser::vector")]
        p: CVector<R>,
        #[serde(with = "cser::scalar")]
        beta: C<R>,
    },
    /// `(S^n p, (2 ||P|| + n delta) beta^n nu)` for `S ⊕ beta` with `N = C`
    /// (so `||P|| = 1` and `nu` a unimodular scalar).
    CompactProbe {
        #[serde(with = "cser::matrix")]
        s: CMatrix<R>,
        index: usize,
        #[serde(with = "cser::vector")]
        p: CVector<R>,
        #[serde(with = "cser::scalar")]
        beta: C<R>,
        delta: R,
        #[serde(default = "one_c", with = "cser::scalar")]
        nu: C<R>,
    },
    /// `x_0, ..., x_{l-1}, 0 (zeros times), y_1, ..., y_m, T y_m, ..., T^tail y_m`.
    ChainGlue {
        t: OperatorSpec<R>,
        x_chain: ChainPath<R>,
        zeros: usize,
        y_chain: ChainPath<R>,
        tail: usize,
    },
}

fn one_c<R: Real>() -> C<R> {
    C::new(R::one(), R::zero())
}

/// A generated trajectory together with the operator it is a pseudotrajectory of.
#[derive(Debug, Clone)]
pub struct Adversarial<R: Real> {
    pub trajectory: Trajectory<R>,
    pub operator: OperatorSpec<R>,
}

impl<R: Real> AdversarialKind<R> {
    pub fn name(&self) -> &'static str {
        match self {
            AdversarialKind::RotationLinear { .. } => "rotation-linear",
            AdversarialKind::JordanImpulse { .. } => "jordan-impulse",
            AdversarialKind::HarmonicPair { .. } => "harmonic-pair",
            AdversarialKind::JordanHarmonic { .. } => "jordan-harmonic",
            AdversarialKind::IsometryWalk { .. } => "isometry-walk",
            AdversarialKind::HarmonicBilateral { .. } => "harmonic-bilateral",
            AdversarialKind::CompactProbe { .. } => "compact-probe",
            AdversarialKind::ChainGlue { .. } => "chain-glue",
        }
    }

    /// The operator the family is built for.
    pub fn operator(&self) -> Result<OperatorSpec<R>> {
        match self {
            AdversarialKind::RotationLinear { beta, beta2, .. } => {
                OperatorSpec::diagonal(vec![*beta, beta2.unwrap_or(*beta)])
            }
            AdversarialKind::JordanImpulse { beta, k, .. } | AdversarialKind::JordanHarmonic { beta, k } => {
                OperatorSpec::jordan(*beta, *k)
            }
            AdversarialKind::HarmonicPair { beta, .. } => OperatorSpec::diagonal(vec![*beta, *beta]),
            AdversarialKind::IsometryWalk { t, beta, .. } | AdversarialKind::HarmonicBilateral { t, beta, .. } => {
                OperatorSpec::block_diag(vec![t.clone(), OperatorSpec::diagonal(vec![*beta])?])
            }
            AdversarialKind::CompactProbe { s, index, beta, .. } => {
                OperatorSpec::nilpotent_plus_rotation(s.clone(), *index, *beta)
            }
            AdversarialKind::ChainGlue { t, .. } => Ok(t.clone()),
        }
    }
}

fn require_convention(window: &Window, want: IndexConvention, kind: &str) -> Result<()> {
    if window.convention != want {
        return Err(Error::param("window", format!("{kind} needs a {want:?} window")));
    }
    Ok(())
}

pub fn gen_adversarial<R: Real>(kind: &AdversarialKind<R>, window: Window) -> Result<Adversarial<R>> {
    let window = Window::new(window.convention, window.lo, window.hi)?;
    if window.len() < 2 {
        return Err(Error::param("window", "adversarial patterns need at least two indices"));
    }
    let operator = kind.operator()?;
    let name = kind.name();
    let pow = |b: C<R>, n: i64| cpowi(b, n).expect("unimodular base");
    let (points, delta_claimed): (Vec<CVector<R>>, R) = match kind {
        AdversarialKind::RotationLinear { beta, beta2, delta } => {
            check_unimodular("beta", *beta)?;
            let b2 = beta2.unwrap_or(*beta);
            check_unimodular("beta2", b2)?;
            check_delta(*delta)?;
            let pts = window
                .indices()
                .map(|n| {
                    CVector::from_vec(vec![
                        pow(*beta, n).scale(*delta * R::from_i64_lossy(n)),
                        pow(b2, n).scale(*delta * R::from_i64_lossy(psi(n))),
                    ])
                })
                .collect();
            // Both coordinates move by exactly delta per step.
            (pts, *delta * R::lit(2.0).sqrt())
        }
        AdversarialKind::JordanImpulse { beta, k, delta } => {
            check_unimodular("beta", *beta)?;
            check_delta(*delta)?;
            if *k < 2 {
                return Err(Error::param("k", "Jordan impulse needs k >= 2"));
            }
            let pts = window
                .indices()
                .map(|n| {
                    CVector::from_fn(*k, |i, _| {
                        let j = i + 1;
                        pow(*beta, n - j as i64 + 1).scale(*delta * R::lit(generalized_binomial(n, j)))
                    })
                })
                .collect();
            (pts, *delta)
        }
        AdversarialKind::HarmonicPair { beta, delta } => {
            check_unimodular("beta", *beta)?;
            check_delta(*delta)?;
            require_convention(&window, IndexConvention::Positive, name)?;
            let pts = window
                .indices()
                .map(|n| {
                    let b = pow(*beta, n);
                    CVector::from_vec(vec![b.scale(*delta * harmonic::<R>(n)), b.scale(*delta * root_harmonic::<R>(n))])
                })
                .collect();
            // Step n -> n+1 moves by delta sqrt(1/(n+1)^2 + 1/(n+1)), largest at n = lo.
            let m = R::from_i64_lossy(window.lo + 1);
            (pts, *delta * (R::one() / (m * m) + R::one() / m).sqrt())
        }
        AdversarialKind::JordanHarmonic { beta, k } => {
            check_unimodular("beta", *beta)?;
            require_convention(&window, IndexConvention::Positive, name)?;
            if *k < 2 {
                return Err(Error::param("k", "Jordan harmonic needs k >= 2"));
            }
            let g = jordan_harmonic_table::<R>(*k, window.hi as usize);
            let pts = window
                .indices()
                .map(|n| CVector::from_fn(*k, |i, _| pow(*beta, n - i as i64).scale(g[i + 1][n as usize])))
                .collect();
            (pts, R::one() / R::from_i64_lossy(window.lo + 1))
        }
        AdversarialKind::IsometryWalk { t, p, beta, delta, signed } => {
            check_unimodular("beta", *beta)?;
            check_delta(*delta)?;
            let orbit = t.orbit(p, window.lo, window.hi)?;
            let pts = orbit
                .into_iter()
                .zip(window.indices())
                .map(|(tp, n)| {
                    let last = pow(*beta, n).scale(*delta * R::from_i64_lossy(omega(n, *signed)));
                    CVector::from_iterator(tp.len() + 1, tp.iter().copied().chain(std::iter::once(last)))
                })
                .collect();
            (pts, *delta)
        }
        AdversarialKind::HarmonicBilateral { t, p, beta } => {
            check_unimodular("beta", *beta)?;
            let orbit = t.orbit(p, window.lo, window.hi)?;
            let pts = orbit
                .into_iter()
                .zip(window.indices())
                .map(|(tp, n)| {
                    let last = pow(*beta, n).scale(harmonic::<R>(n));
                    CVector::from_iterator(tp.len() + 1, tp.iter().copied().chain(std::iter::once(last)))
                })
                .collect();
            // Drift 1/(n+1) for n >= 0 and 1/|n| for n < 0; largest next to 0.
            let drift = |n: i64| if n >= 0 { R::one() / R::from_i64_lossy(n + 1) } else { R::one() / R::from_i64_lossy(-n) };
            let sup = (window.lo..window.hi).map(drift).fold(R::zero(), |m, x| m.max(x));
            (pts, sup)
        }
        AdversarialKind::CompactProbe { s, p, beta, delta, nu, .. } => {
            check_unimodular("beta", *beta)?;
            check_unimodular("nu", *nu)?;
            check_delta(*delta)?;
            require_convention(&window, IndexConvention::Positive, name)?;
            if p.len() != s.nrows() {
                return Err(Error::DimensionMismatch { expected: s.nrows(), found: p.len() });
            }
            let two_p = R::lit(2.0);
            let pts = window
                .indices()
                .map(|n| {
                    let sp = linalg::mat_pow(s, n as u64) * p;
                    let last = (pow(*beta, n) * nu).scale(two_p + R::from_i64_lossy(n) * *delta);
                    CVector::from_iterator(sp.len() + 1, sp.iter().copied().chain(std::iter::once(last)))
                })
                .collect();
            (pts, *delta)
        }
        AdversarialKind::ChainGlue { t, x_chain, zeros, y_chain, tail } => {
            require_convention(&window, IndexConvention::Positive, name)?;
            let xs = x_chain.to_zero();
            let ys = y_chain.from_zero();
            let mut pts: Vec<CVector<R>> = xs[..xs.len() - 1].to_vec();
            pts.extend(std::iter::repeat_n(CVector::zeros(t.dim()), *zeros));
            pts.extend(ys[1..].iter().cloned());
            let last = pts.last().cloned().unwrap_or_else(|| CVector::zeros(t.dim()));
            pts.extend(t.orbit(&last, 1, *tail as i64)?);
            let expected = pts.len();
            if window.lo != 0 || window.len() != expected {
                return Err(Error::param(
                    "window",
                    format!("chain glue produces {expected} points; use Positive(0..={})", expected as i64 - 1),
                ));
            }
            (pts, x_chain.delta.max(y_chain.delta))
        }
    };
    let mut trajectory = Trajectory::new(window, points, delta_claimed, name)?;
    // The provable bound can sit an ulp below the rounded defect.
    trajectory.delta_claimed = delta_claimed.max(measure_defect(&trajectory, &operator)?.max_defect);
    Ok(Adversarial { trajectory, operator })
}

/// Turns a pseudotrajectory of `A^k` into one of `A`:
/// `x_0, A x_0, ..., A^{k-1} x_0, x_1, ...`.
pub fn interleave<R: Real>(traj: &Trajectory<R>, spec: &OperatorSpec<R>, k: usize) -> Result<Trajectory<R>> {
    if k == 0 {
        return Err(Error::param("k", "must be positive"));
    }
    traj.check_spec(spec)?;
    let a = spec.materialize();
    let k64 = k as i64;
    let mut points = Vec::with_capacity((traj.len() - 1) * k + 1);
    for (i, x) in traj.points.iter().enumerate() {
        points.push(x.clone());
        if i + 1 < traj.len() {
            let mut cur = x.clone();
            for _ in 1..k {
                cur = a * cur;
                points.push(cur.clone());
            }
        }
    }
    let window = Window::new(traj.window.convention, traj.window.lo * k64, traj.window.hi * k64)?;
    Trajectory::new(window, points, traj.delta_claimed, format!("interleave(k={k}) of {}", traj.origin))
}

/// Turns a pseudotrajectory of `A` into one of `A^k` by keeping `x_{kn}`.
/// The claimed defect is `(sum_{j<k} ||A||^j) delta`.
pub fn subsample<R: Real>(traj: &Trajectory<R>, spec: &OperatorSpec<R>, k: usize) -> Result<Trajectory<R>> {
    if k == 0 {
        return Err(Error::param("k", "must be positive"));
    }
    traj.check_spec(spec)?;
    if traj.len() < k + 1 {
        return Err(Error::param("window", format!("subsampling by {k} needs at least {} points", k + 1)));
    }
    let k64 = k as i64;
    let lo = traj.window.lo.div_euclid(k64) + i64::from(traj.window.lo.rem_euclid(k64) != 0);
    let hi = traj.window.hi.div_euclid(k64);
    let points = (lo..=hi).map(|n| traj.at(n * k64).clone()).collect();
    let norm = spec.operator_norm()?;
    let factor = (0..k).fold(R::zero(), |s, j| s + norm.powi(j as i32));
    let window = Window::new(traj.window.convention, lo, hi)?;
    Trajectory::new(window, points, factor * traj.delta_claimed, format!("subsample(k={k}) of {}", traj.origin))
}
