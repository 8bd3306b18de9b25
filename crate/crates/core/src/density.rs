//! Projective hitting sets and finite-window density estimates.
//!
//! Counts are exact; densities are [`Ratio<u64>`] so the only rounding is
//! the final division when a caller asks for a float.

use num_rational::Ratio;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::OperatorSpec;
use crate::scalar::{CVector, Real};
use crate::shadow::project_onto_line;

pub type Density = Ratio<u64>;

pub fn density_f64(d: &Density) -> f64 {
    d.to_f64().unwrap_or(f64::NAN)
}

/// Window bounds for the estimators. `None` picks the defaults
/// `ud_min = ceil(N / 2)`, `ubd_max = N`, `ubd_min = ceil(ubd_max / 2)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityWindows {
    pub ud_min: Option<u64>,
    pub ubd_min: Option<u64>,
    pub ubd_max: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSetReport {
    /// Sorted subset of `[0, n_end]`.
    pub indices: Vec<u64>,
    pub n_end: u64,
    pub ud_min: u64,
    pub ud_estimate: Density,
    pub ubd_min: u64,
    pub ubd_max: u64,
    pub ubd_estimate: Density,
    /// `(N', max_m |A cap [m, m + N']| / (N' + 1))` for `N' <= ubd_max`.
    pub per_n_profile: Vec<(u64, Density)>,
}

impl IndexSetReport {
    pub fn new(mut indices: Vec<u64>, n_end: u64, windows: DensityWindows) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.last().is_some_and(|&k| k > n_end) {
            return Err(Error::param("indices", "must lie in [0, N]"));
        }
        let ud_min = windows.ud_min.unwrap_or(n_end.div_ceil(2));
        let ubd_max = windows.ubd_max.unwrap_or(n_end);
        let ubd_min = windows.ubd_min.unwrap_or(ubd_max.div_ceil(2));
        let ud_estimate = upper_density_estimate(&indices, n_end, ud_min)?;
        let ubd_estimate = upper_banach_density_bounded(&indices, n_end, ubd_min, ubd_max)?.value;
        let prefix = prefix_counts(&indices, n_end);
        let per_n_profile = (0..=ubd_max).map(|w| (w, Ratio::new(max_window_count(&prefix, n_end, w).0, w + 1))).collect();
        Ok(Self { indices, n_end, ud_min, ud_estimate, ubd_min, ubd_max, ubd_estimate, per_n_profile })
    }

    pub fn contains(&self, n: u64) -> bool {
        self.indices.binary_search(&n).is_ok()
    }
}

/// `prefix[i] = |A cap [0, i)|` for `i <= N + 1`.
fn prefix_counts(indices: &[u64], n_end: u64) -> Vec<u64> {
    let mut prefix = vec![0u64; n_end as usize + 2];
    for &k in indices {
        if k <= n_end {
            prefix[k as usize + 1] += 1;
        }
    }
    for i in 1..prefix.len() {
        prefix[i] += prefix[i - 1];
    }
    prefix
}

/// `(max_m |A cap [m, m + w]|, argmax m)` over `m + w <= N`.
fn max_window_count(prefix: &[u64], n_end: u64, w: u64) -> (u64, u64) {
    let mut best = (0, 0);
    for m in 0..=(n_end - w) {
        let c = prefix[(m + w) as usize + 1] - prefix[m as usize];
        if c > best.0 {
            best = (c, m);
        }
    }
    best
}

/// `max_{N' in [n_min, N]} |A cap [0, N']| / (N' + 1)`, a finite-window
/// proxy for the upper density.
pub fn upper_density_estimate(indices: &[u64], n_end: u64, n_min: u64) -> Result<Density> {
    Ok(upper_density_with_witness(indices, n_end, n_min)?.0)
}

fn upper_density_with_witness(indices: &[u64], n_end: u64, n_min: u64) -> Result<(Density, u64)> {
    if n_min > n_end {
        return Err(Error::param("n_min", "must not exceed N"));
    }
    let prefix = prefix_counts(indices, n_end);
    let mut best = (Ratio::new(prefix[n_min as usize + 1], n_min + 1), n_min);
    for w in n_min + 1..=n_end {
        let r = Ratio::new(prefix[w as usize + 1], w + 1);
        if r > best.0 {
            best = (r, w);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BanachEstimate {
    pub value: Density,
    /// Window length `N'` attaining the minimum and the start `m` of its
    /// densest window.
    pub n_prime: u64,
    pub m: u64,
}

/// `min_{N' in [ceil(N_max/2), N_max]} max_{m + N' <= N} |A cap [m, m + N']| / (N' + 1)`.
pub fn upper_banach_density_estimate(indices: &[u64], n_end: u64, n_window_max: u64) -> Result<Density> {
    Ok(upper_banach_density_bounded(indices, n_end, n_window_max.div_ceil(2), n_window_max)?.value)
}

pub fn upper_banach_density_bounded(indices: &[u64], n_end: u64, n_window_min: u64, n_window_max: u64) -> Result<BanachEstimate> {
    if n_window_max > n_end || n_window_min > n_window_max {
        return Err(Error::param("n_window", "need n_window_min <= n_window_max <= N"));
    }
    let prefix = prefix_counts(indices, n_end);
    let mut best: Option<BanachEstimate> = None;
    for w in n_window_min..=n_window_max {
        let (count, m) = max_window_count(&prefix, n_end, w);
        let value = Ratio::new(count, w + 1);
        if best.is_none_or(|b| value < b.value) {
            best = Some(BanachEstimate { value, n_prime: w, m });
        }
    }
    Ok(best.expect("non-empty range"))
}

/// `A - n = {k - n : k in A, k >= n}`.
pub fn shift_set(indices: &[u64], n: u64) -> Vec<u64> {
    indices.iter().filter(|&&k| k >= n).map(|&k| k - n).collect()
}

/// The open ball `B(y, r)` tested against the lines `C T^n x`, `0 <= n <= N`.
#[derive(Debug, Clone)]
pub struct HittingQuery<'a, R: Real> {
    pub x: CVector<R>,
    pub spec: &'a OperatorSpec<R>,
    pub target: CVector<R>,
    pub radius: R,
    pub horizon: u64,
}

#[derive(Debug, Clone)]
pub struct HittingSet<R> {
    pub report: IndexSetReport,
    /// `dist(y, C T^n x)` for `n = 0..=N`.
    pub distances: Vec<R>,
}

/// Directions of `T^n x` renormalized at every step (the line is all that
/// matters, so the orbit cannot overflow). A zero vector stays zero.
fn projective_orbit<R: Real>(spec: &OperatorSpec<R>, x: &CVector<R>, horizon: u64) -> Vec<CVector<R>> {
    let mut out = Vec::with_capacity(horizon as usize + 1);
    let unit = |v: CVector<R>| {
        let n = v.norm();
        if n > R::zero() {
            v.unscale(n)
        } else {
            v
        }
    };
    let mut v = unit(x.clone());
    for _ in 0..=horizon {
        let next = unit(spec.apply(&v));
        out.push(v);
        v = next;
    }
    out
}

pub fn hitting_set<R: Real>(query: &HittingQuery<R>) -> Result<HittingSet<R>> {
    hitting_set_with(query, DensityWindows::default())
}

/// `n` is a hit iff `dist(y, C T^n x) < r` (boundary excluded); when
/// `T^n x = 0` the line degenerates to `{0}` and the distance is `||y||`.
pub fn hitting_set_with<R: Real>(query: &HittingQuery<R>, windows: DensityWindows) -> Result<HittingSet<R>> {
    let d = query.spec.dim();
    if query.x.len() != d || query.target.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: query.x.len().max(query.target.len()) });
    }
    if !(query.radius > R::zero()) {
        return Err(Error::param("radius", "must be positive"));
    }
    let orbit = projective_orbit(query.spec, &query.x, query.horizon);
    let distances: Vec<R> = orbit
        .par_iter()
        .map(|v| project_onto_line(&query.target, v, v.norm().is_zero()).1)
        .collect();
    let indices = distances.iter().enumerate().filter(|(_, d)| **d < query.radius).map(|(n, _)| n as u64).collect();
    let report = IndexSetReport::new(indices, query.horizon, windows)?;
    Ok(HittingSet { report, distances })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RscTransfer {
    pub k: Option<u64>,
    pub verified: bool,
}

/// Searches the first `k <= search_cap` with
/// `k + (S(y, U) cap [0, n]) subset S(x, U) cap [0, n + search_cap]`.
pub fn rsc_transfer_check<R: Real>(
    x: &CVector<R>,
    y: &CVector<R>,
    target: &CVector<R>,
    radius: R,
    n: u64,
    spec: &OperatorSpec<R>,
    search_cap: u64,
) -> Result<RscTransfer> {
    let sy = hitting_set(&HittingQuery { x: y.clone(), spec, target: target.clone(), radius, horizon: n })?;
    let sx = hitting_set(&HittingQuery { x: x.clone(), spec, target: target.clone(), radius, horizon: n + search_cap })?;
    let ys = &sy.report.indices;
    for k in 0..=search_cap {
        if ys.iter().all(|&j| sx.report.contains(j + k)) {
            return Ok(RscTransfer { k: Some(k), verified: true });
        }
    }
    Ok(RscTransfer { k: None, verified: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CorollaryMode {
    /// `max_{N' in [n_min, N]} card{n <= N'} / (N' + 1) > t`.
    Ud { n_min: u64 },
    /// `min_{N'} max_m card{n in [m, m + N']} / (N' + 1) > t` over
    /// `N' in [window_min, window_max]`.
    Ubd { window_min: u64, window_max: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryRow {
    pub target: usize,
    pub value: Density,
    pub n_prime: u64,
    /// Window start (always 0 in `ud` mode).
    pub m: u64,
    pub pass: bool,
}

/// Evaluates the density inequality for each target ball `(y, r)`.
pub fn corollary_check<R: Real>(
    x: &CVector<R>,
    spec: &OperatorSpec<R>,
    targets: &[(CVector<R>, R)],
    t: f64,
    n_end: u64,
    mode: CorollaryMode,
) -> Result<Vec<CorollaryRow>> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::param("t", "must lie in (0, 1)"));
    }
    targets
        .iter()
        .enumerate()
        .map(|(i, (y, r))| {
            let windows = match mode {
                CorollaryMode::Ud { n_min } => DensityWindows { ud_min: Some(n_min), ubd_min: Some(0), ubd_max: Some(0) },
                CorollaryMode::Ubd { window_min, window_max } => {
                    DensityWindows { ud_min: Some(0), ubd_min: Some(window_min), ubd_max: Some(window_max) }
                }
            };
            let hs = hitting_set_with(&HittingQuery { x: x.clone(), spec, target: y.clone(), radius: *r, horizon: n_end }, windows)?;
            let idx = &hs.report.indices;
            let (value, n_prime, m) = match mode {
                CorollaryMode::Ud { n_min } => {
                    let (v, w) = upper_density_with_witness(idx, n_end, n_min)?;
                    (v, w, 0)
                }
                CorollaryMode::Ubd { window_min, window_max } => {
                    let b = upper_banach_density_bounded(idx, n_end, window_min, window_max)?;
                    (b.value, b.n_prime, b.m)
                }
            };
            Ok(CorollaryRow { target: i, pass: density_f64(&value) > t, value, n_prime, m })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{c, CMatrix};
    use proptest::prelude::*;

    fn e(i: usize, d: usize) -> CVector<f64> {
        CVector::from_fn(d, |j, _| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) })
    }

    fn swap() -> OperatorSpec<f64> {
        OperatorSpec::dense(CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])).unwrap()
    }

    #[test]
    fn collinear_and_orthogonal_hits() {
        let op = OperatorSpec::<f64>::diagonal_real(&[2.0, 0.5]).unwrap();
        let q = |y| HittingQuery { x: e(0, 2), spec: &op, target: y, radius: 0.1, horizon: 50 };
        assert_eq!(hitting_set(&q(e(0, 2))).unwrap().report.indices, (0..=50).collect::<Vec<_>>());
        assert!(hitting_set(&q(e(1, 2))).unwrap().report.indices.is_empty());
        // Large horizons do not overflow.
        let far = HittingQuery { x: CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]), spec: &op, target: e(0, 2), radius: 0.1, horizon: 5000 };
        assert_eq!(hitting_set(&far).unwrap().report.indices, (2..=5000).collect::<Vec<u64>>());
    }

    #[test]
    fn swap_hits_evens() {
        let op = swap();
        let hs = hitting_set(&HittingQuery { x: e(0, 2), spec: &op, target: e(0, 2), radius: 0.1, horizon: 20 }).unwrap();
        assert_eq!(hs.report.indices, (0..=20).step_by(2).collect::<Vec<u64>>());
    }

    #[test]
    fn zero_orbit_uses_norm_of_target() {
        let op = OperatorSpec::<f64>::weighted_backward_shift(vec![c(1.0, 0.0)]).unwrap();
        let y = CVector::from_vec(vec![c(0.05, 0.0), c(0.0, 0.0)]);
        let hs = hitting_set(&HittingQuery { x: e(1, 2), spec: &op, target: y, radius: 0.1, horizon: 4 }).unwrap();
        assert_eq!(hs.report.indices, vec![0, 1, 2, 3, 4]);
        assert!((hs.distances[3] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_radius() {
        let op = swap();
        assert!(hitting_set(&HittingQuery { x: e(0, 2), spec: &op, target: e(0, 2), radius: 0.0, horizon: 3 }).is_err());
    }

    #[test]
    fn density_examples() {
        let all: Vec<u64> = (0..=100).collect();
        assert_eq!(upper_density_estimate(&all, 100, 10).unwrap(), Ratio::from_integer(1));
        assert_eq!(upper_banach_density_estimate(&all, 100, 100).unwrap(), Ratio::from_integer(1));
        let evens: Vec<u64> = (0..=10_000).step_by(2).collect();
        let ud = upper_density_estimate(&evens, 10_000, 100).unwrap();
        // ceil((N'+1)/2)/(N'+1) is largest at N' = 100: 51/101.
        assert_eq!(ud, Ratio::new(51, 101));
        let squares: Vec<u64> = (0..=100u64).map(|k| k * k).filter(|&s| s <= 10_000).collect();
        // floor(sqrt(N')) + 1 squares in [0, N']: the maximum over [100, 10^4]
        // sits at N' = 100, while the ratio at N' = 10^4 is below 0.02.
        let oracle = (100..=10_000u64).map(|w| Ratio::new((w as f64).sqrt().floor() as u64 + 1, w + 1)).max().unwrap();
        assert_eq!(upper_density_estimate(&squares, 10_000, 100).unwrap(), oracle);
        assert_eq!(oracle, Ratio::new(11, 101));
        assert!(upper_density_estimate(&squares, 10_000, 10_000).unwrap() <= Ratio::new(2, 100));
        let threes: Vec<u64> = (0..=29).filter(|k| k % 3 == 0).collect();
        let b = upper_banach_density_bounded(&threes, 29, 29, 29).unwrap();
        assert_eq!(b.value, Ratio::new(1, 3));
    }

    #[test]
    fn dyadic_blocks_banach_density() {
        let n = 1u64 << 14;
        let mut set = Vec::new();
        for k in 1..=14u32 {
            let a = 1u64 << k;
            set.extend((a..a + a / 2).filter(|&i| i <= n));
        }
        // Exhaustive oracle over every admissible (m, N').
        let mut oracle: Option<Ratio<u64>> = None;
        let member: Vec<bool> = (0..=n).map(|i| set.binary_search(&i).is_ok()).collect();
        for w in n.div_ceil(2)..=n {
            let mut best = 0;
            let mut count: u64 = (0..=w).filter(|&i| member[i as usize]).count() as u64;
            best = best.max(count);
            for m in 1..=(n - w) {
                count = count - member[(m - 1) as usize] as u64 + member[(m + w) as usize] as u64;
                best = best.max(count);
            }
            let v = Ratio::new(best, w + 1);
            oracle = Some(oracle.map_or(v, |o: Ratio<u64>| o.min(v)));
        }
        let est = upper_banach_density_estimate(&set, n, n).unwrap();
        assert_eq!(Some(est), oracle);
        assert!(density_f64(&est) >= 0.33);
    }

    #[test]
    fn shift_examples() {
        assert_eq!(shift_set(&[3, 5, 9], 0), vec![3, 5, 9]);
        assert_eq!(shift_set(&[3, 5, 9], 4), vec![1, 5]);
    }

    #[test]
    fn rsc_examples() {
        let op = swap();
        let u = e(0, 2);
        let r = rsc_transfer_check(&e(0, 2), &e(0, 2), &u, 0.1, 10, &op, 5).unwrap();
        assert_eq!(r, RscTransfer { k: Some(0), verified: true });
        let r = rsc_transfer_check(&e(0, 2), &e(1, 2), &u, 0.1, 10, &op, 5).unwrap();
        assert_eq!(r, RscTransfer { k: Some(1), verified: true });
        let diag = OperatorSpec::<f64>::diagonal_real(&[2.0, 0.5]).unwrap();
        let r = rsc_transfer_check(&e(0, 2), &e(1, 2), &u, 0.1, 10, &diag, 5).unwrap();
        assert_eq!(r, RscTransfer { k: Some(0), verified: true });
    }

    #[test]
    fn corollary_examples() {
        let op = swap();
        let rows = corollary_check(&e(0, 2), &op, &[(e(0, 2), 0.1), (e(1, 2), 0.1)], 0.4, 200, CorollaryMode::Ud { n_min: 100 }).unwrap();
        assert!(rows[0].pass && rows[1].pass);
        assert!((density_f64(&rows[0].value) - 0.5).abs() < 0.01);
        let id = OperatorSpec::<f64>::identity(2).unwrap();
        let rows = corollary_check(&e(0, 2), &id, &[(e(0, 2), 0.1), (e(1, 2), 0.1)], 0.9, 50, CorollaryMode::Ubd { window_min: 10, window_max: 20 }).unwrap();
        assert!(rows[0].pass);
        assert!(!rows[1].pass);
    }

    #[test]
    fn report_invariants() {
        let idx = vec![0, 1, 4, 9, 16, 25];
        let r = IndexSetReport::new(idx.clone(), 30, DensityWindows::default()).unwrap();
        assert_eq!(r.ud_estimate, upper_density_estimate(&idx, 30, 15).unwrap());
        assert_eq!(r.per_n_profile.len(), 31);
        assert!(r.ubd_estimate >= Ratio::new(idx.len() as u64, 31));
        assert!(IndexSetReport::new(vec![40], 30, DensityWindows::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn hitting_sets_shift_with_orbit(seed in 0u64..1_000_000) {
            let mut rng = crate::rng::rng_from_seed(seed);
            let u = crate::rng::random_unitary::<f64, _>(2, &mut rng);
            let diag = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.3, 0.0), c(0.0, 0.8)]));
            let op = OperatorSpec::dense(&u * diag * u.adjoint()).unwrap();
            let x = crate::rng::gaussian_vector(2, &mut rng);
            let y = crate::rng::unit_vector(2, &mut rng);
            let m = 1 + seed % 7;
            let n = 40u64;
            let base = hitting_set(&HittingQuery { x: x.clone(), spec: &op, target: y.clone(), radius: 0.5, horizon: n }).unwrap();
            let tm = op.apply_power(m as i64, &x).unwrap();
            let moved = hitting_set(&HittingQuery { x: tm, spec: &op, target: y, radius: 0.5, horizon: n - m }).unwrap();
            // Indices whose distance sits on the boundary are excluded.
            let near: Vec<u64> = base.distances.iter().enumerate().filter(|(_, d)| (**d - 0.5).abs() < 1e-9).map(|(i, _)| i as u64).collect();
            let a: Vec<u64> = shift_set(&base.report.indices, m).into_iter().filter(|k| !near.contains(&(k + m))).collect();
            let b: Vec<u64> = moved.report.indices.into_iter().filter(|k| !near.contains(&(k + m))).collect();
            prop_assert_eq!(a, b);
        }
    }
}
