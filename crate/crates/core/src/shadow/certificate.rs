use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::ComplexField;
use serde::{Deserialize, Serialize};

use super::{project_onto_line, search_super_witness, tail_start, PowerTable, SearchBudget, SearchMode};
use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::OperatorSpec;
use crate::pseudotraj::{Trajectory, Window};
use crate::scalar::{CVector, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateOptions {
    /// Largest dimension handled by branch and bound; above it a
    /// heuristic search curve is reported instead.
    pub dim_cap: usize,
    pub max_cells: usize,
    /// Stop once the lower bound reaches this fraction of the upper bound.
    pub target_ratio: f64,
    /// `LimitSuper` scores only the last quarter of each window.
    pub mode: SearchMode,
    pub search: SearchBudget,
    pub seed: u64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            dim_cap: 3,
            max_cells: 200_000,
            target_ratio: 0.95,
            mode: SearchMode::Super,
            search: SearchBudget::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RungStatus {
    /// Positive lower bound on `inf_{q, lambda} sup_n residual`.
    Certified,
    /// Branch and bound did not separate the minimum from zero.
    Inconclusive,
    /// Dimension above the cap: `upper_bound` is the best value found by
    /// search, an upper bound of the minimum.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct CertificateRung<R: Real> {
    pub window: Window,
    pub status: RungStatus,
    pub lower_bound: Option<R>,
    pub upper_bound: R,
    pub cells: usize,
}

/// For each trajectory of a ladder, bounds
/// `min over q in CP^{d-1} of sup_n dist(x_n, C T^n q)` from below by
/// branch and bound (the scalars being optimal per index, zero included).
/// `q` is parametrized by hyperspherical angles `theta_k in [0, pi/2]` and
/// phases `phi_k in [0, 2 pi)`; on a cell, `||q - q_c||` is bounded by the
/// half-widths weighted by the largest partial derivative norms. Each
/// residual `||x_n|| sin angle(x_n, T^n q)` then moves by at most `||x_n||`
/// times the sine of the angle between `T^n q` and `T^n q_c`, bounded both
/// by `||T^n|| h / ||T^n q_c||` and by
/// `s_1 s_2 h / (||T^n q_c|| min ||T^n q||)` (`s_i` singular values).
/// Each index also subtracts a rounding allowance proportional to the terms
/// of its residual, not to `||x_n||`, so huge orbits keep usable bounds.
pub fn divergence_certificate<R: Real>(
    ladder: &[Trajectory<R>],
    spec: &OperatorSpec<R>,
    opts: &CertificateOptions,
) -> Result<Vec<CertificateRung<R>>> {
    if !(opts.target_ratio > 0.0 && opts.target_ratio <= 1.0) {
        return Err(Error::param("target_ratio", "must lie in (0, 1]"));
    }
    ladder
        .iter()
        .map(|traj| {
            if traj.dim() != spec.dim() {
                return Err(Error::DimensionMismatch { expected: spec.dim(), found: traj.dim() });
            }
            if spec.dim() > opts.dim_cap {
                let w = search_super_witness(traj, spec, opts.mode, opts.search, opts.seed)?;
                let ub = if opts.mode == SearchMode::LimitSuper { w.tail_residual() } else { w.sup_residual };
                return Ok(CertificateRung {
                    window: traj.window,
                    status: RungStatus::Heuristic,
                    lower_bound: None,
                    upper_bound: ub,
                    cells: 0,
                });
            }
            branch_and_bound(traj, spec, opts)
        })
        .collect()
}

struct Cell<R> {
    lo: Vec<R>,
    hi: Vec<R>,
    lower: R,
}

struct Queued<R>(Cell<R>);

impl<R: Real> PartialEq for Queued<R> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<R: Real> Eq for Queued<R> {}
impl<R: Real> PartialOrd for Queued<R> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<R: Real> Ord for Queued<R> {
    // Min-heap on the lower bound.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.lower.partial_cmp(&self.0.lower).unwrap_or(Ordering::Equal)
    }
}

struct Evaluator<'a, R: Real> {
    traj: &'a Trajectory<R>,
    powers: PowerTable<R>,
    /// Per power: `(s_1, s_1 s_2, s_min)`.
    sigmas: Vec<(R, R, R)>,
    point_norms: Vec<R>,
    range: std::ops::Range<usize>,
    d: usize,
}

impl<R: Real> Evaluator<'_, R> {
    fn q_at(&self, params: &[R]) -> CVector<R> {
        let k = self.d - 1;
        let mut q = CVector::<R>::zeros(self.d);
        let mut radius = R::one();
        for j in 0..self.d {
            let amp = if j < k { radius * params[j].cos() } else { radius };
            let phase = if j == 0 { C::new(R::one(), R::zero()) } else { C::new(params[k + j - 1].cos(), params[k + j - 1].sin()) };
            q[j] = phase.scale(amp);
            if j < k {
                radius *= params[j].sin();
            }
        }
        q
    }

    /// Bound on `||q - q_c||` over the cell.
    fn radius(&self, lo: &[R], hi: &[R]) -> R {
        let k = self.d - 1;
        let half = R::lit(0.5);
        let mut h = R::zero();
        let mut sin_prod = R::one();
        for j in 0..k {
            // theta_j derivative has norm prod_{i<j} sin(theta_i).
            h += sin_prod * (hi[j] - lo[j]) * half;
            sin_prod *= hi[j].min(R::frac_pi_2()).sin();
            // phi_j multiplies entry j + 1, of modulus at most prod_{i<=j} sin(theta_i).
            h += sin_prod * (hi[k + j] - lo[k + j]) * half;
        }
        h
    }

    /// `(lower bound on the cell, value at the centre)`.
    fn eval(&self, lo: &[R], hi: &[R]) -> (R, R) {
        let centre: Vec<R> = lo.iter().zip(hi).map(|(a, b)| (*a + *b) * R::lit(0.5)).collect();
        let q = self.q_at(&centre);
        // A small floor on the radius absorbs rounding in `q` and in the powers.
        let h = self.radius(lo, hi) + R::lit(1e-12);
        let orbit: Vec<CVector<R>> = self.range.clone().map(|i| &self.powers.mats[i] * &q).collect();
        let mut lower = R::zero();
        let mut value = R::zero();
        for (i, v) in self.range.clone().zip(&orbit) {
            let vn = v.norm();
            let (_, r) = project_onto_line(&self.traj.points[i], v, vn.is_zero());
            let (s1, wedge, smin) = self.sigmas[i];
            let ratio = if vn > R::zero() {
                let floor = (vn - s1 * h).max(smin);
                let sharp = if floor > R::zero() { wedge * h / (vn * floor) } else { R::one() };
                (s1 * h / vn).min(sharp).min(R::one())
            } else {
                R::one()
            };
            let x = &self.traj.points[i];
            lower = lower.max(r - self.point_norms[i] * ratio - rounding(x, v, vn));
            value = value.max(r);
        }
        (lower, value)
    }
}

fn branch_and_bound<R: Real>(traj: &Trajectory<R>, spec: &OperatorSpec<R>, opts: &CertificateOptions) -> Result<CertificateRung<R>> {
    let d = spec.dim();
    let powers = PowerTable::new(spec, &traj.window)?;
    let sigmas = powers.mats.iter().map(singular_summary).collect::<Result<Vec<_>>>()?;
    let point_norms: Vec<R> = traj.points.iter().map(|x| x.norm()).collect();
    let len = traj.len();
    let range = if opts.mode == SearchMode::LimitSuper { tail_start(len)..len } else { 0..len };
    let ev = Evaluator { traj, powers, sigmas, point_norms, range, d };

    if d == 1 {
        let (_, value) = ev.eval(&[], &[]);
        return Ok(finish(traj.window, value, value, 1));
    }
    let k = d - 1;
    let mut lo0 = vec![R::zero(); 2 * k];
    let mut hi0 = vec![R::frac_pi_2(); k];
    hi0.extend(std::iter::repeat_n(R::two_pi(), k));
    lo0.truncate(2 * k);

    let mut heap = BinaryHeap::new();
    let mut upper = R::max_value().unwrap();
    let mut cells = 0usize;
    let (l, v) = ev.eval(&lo0, &hi0);
    upper = upper.min(v);
    cells += 1;
    heap.push(Queued(Cell { lo: lo0, hi: hi0, lower: l }));
    let target = R::lit(opts.target_ratio);

    let lower = loop {
        let Some(Queued(cell)) = heap.pop() else { break upper };
        if cell.lower >= target * upper || cells >= opts.max_cells {
            break cell.lower;
        }
        // Split the coordinate with the largest weighted width.
        let mut best = (0usize, R::zero());
        for j in 0..2 * k {
            let mut probe_hi = cell.lo.clone();
            probe_hi[j] = cell.hi[j];
            let w = ev.radius(&cell.lo, &probe_hi);
            if w > best.1 {
                best = (j, w);
            }
        }
        let j = best.0;
        let mid = (cell.lo[j] + cell.hi[j]) * R::lit(0.5);
        for (a, b) in [(cell.lo[j], mid), (mid, cell.hi[j])] {
            let mut lo = cell.lo.clone();
            let mut hi = cell.hi.clone();
            lo[j] = a;
            hi[j] = b;
            let (l, v) = ev.eval(&lo, &hi);
            cells += 1;
            upper = upper.min(v);
            heap.push(Queued(Cell { lo, hi, lower: l.max(cell.lower) }));
        }
    };
    Ok(finish(traj.window, lower, upper, cells))
}

/// Allowance for rounding in the residual: a multiple of the 2x2 minor terms
/// `|x_i u_j| + |x_j u_i|` that the projection sums.
fn rounding<R: Real>(x: &CVector<R>, v: &CVector<R>, vn: R) -> R {
    let mut s = R::zero();
    if vn > R::zero() {
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                s += (x[i].modulus() * v[j].modulus() + x[j].modulus() * v[i].modulus()) / vn;
            }
        }
    } else {
        s = x.norm();
    }
    R::lit(1e-12) * s.max(R::one())
}

fn singular_summary<R: Real>(m: &crate::scalar::CMatrix<R>) -> Result<(R, R, R)> {
    let s = linalg::singular_values(m)?;
    let s1 = s[0];
    let s2 = s.get(1).copied().unwrap_or(s1);
    Ok((s1, s1 * s2, *s.last().unwrap()))
}

fn finish<R: Real>(window: Window, lower: R, upper: R, cells: usize) -> CertificateRung<R> {
    if lower > R::zero() {
        CertificateRung { window, status: RungStatus::Certified, lower_bound: Some(lower), upper_bound: upper, cells }
    } else {
        CertificateRung { window, status: RungStatus::Inconclusive, lower_bound: None, upper_bound: upper, cells }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudotraj::{gen_adversarial, AdversarialKind};
    use crate::scalar::c;

    #[test]
    fn parametrization_is_unit_and_lipschitz() {
        let op = OperatorSpec::<f64>::identity(3).unwrap();
        let t = Trajectory::orbit(&op, &CVector::from_vec(vec![c(1.0, 0.0); 3]), Window::positive(1)).unwrap();
        let powers = PowerTable::new(&op, &t.window).unwrap();
        let ev = Evaluator { traj: &t, powers, sigmas: vec![(1.0, 1.0, 1.0); 2], point_norms: vec![1.0; 2], range: 0..2, d: 3 };
        let lo = [0.2, 0.4, 1.0, 2.0];
        let hi = [0.3, 0.7, 1.4, 2.1];
        let centre: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (a + b) / 2.0).collect();
        let qc = ev.q_at(&centre);
        let h = ev.radius(&lo, &hi);
        for i in 0..=4 {
            for j in 0..=4 {
                let p: Vec<f64> = (0..4)
                    .map(|k| {
                        let t = if k % 2 == 0 { i as f64 / 4.0 } else { j as f64 / 4.0 };
                        lo[k] + t * (hi[k] - lo[k])
                    })
                    .collect();
                let q = ev.q_at(&p);
                assert!((q.norm() - 1.0).abs() < 1e-14);
                assert!((&q - &qc).norm() <= h + 1e-14);
            }
        }
    }

    #[test]
    fn exact_orbit_is_inconclusive() {
        let op = OperatorSpec::<f64>::diagonal(vec![c(0.6, 0.8), c(0.0, 1.0)]).unwrap();
        let t = Trajectory::orbit(&op, &CVector::from_vec(vec![c(1.0, 0.0), c(0.5, 0.0)]), Window::bilateral(5)).unwrap();
        let opts = CertificateOptions { max_cells: 2000, ..Default::default() };
        let rung = &divergence_certificate(&[t], &op, &opts).unwrap()[0];
        assert_eq!(rung.status, RungStatus::Inconclusive);
        assert!(rung.upper_bound < 1e-2);
    }

    #[test]
    fn rotation_bound_grows() {
        let kind = AdversarialKind::RotationLinear { beta: c(0.6, 0.8), beta2: Some(c(0.0, 1.0)), delta: 0.01 };
        let ladder: Vec<_> = [10u32, 40]
            .iter()
            .map(|&n| gen_adversarial::<f64>(&kind, Window::bilateral(n)).unwrap())
            .collect();
        let op = ladder[0].operator.clone();
        let trajs: Vec<_> = ladder.into_iter().map(|a| a.trajectory).collect();
        let rungs = divergence_certificate(&trajs, &op, &CertificateOptions::default()).unwrap();
        let a = rungs[0].lower_bound.unwrap();
        let b = rungs[1].lower_bound.unwrap();
        assert!(b > a, "{a} {b}");
        assert!(a <= rungs[0].upper_bound && b <= rungs[1].upper_bound);
    }

    #[test]
    fn lower_bound_below_mesh_minimum() {
        // Independent check: the minimum over a fine mesh of q = (cos t, e^{ip} sin t)
        // can only exceed the true minimum, so it must sit above the certificate.
        let kind = AdversarialKind::JordanImpulse { beta: c(0.6, 0.8), k: 2, delta: 0.01 };
        let adv = gen_adversarial::<f64>(&kind, Window::positive(25)).unwrap();
        let rung = &divergence_certificate(std::slice::from_ref(&adv.trajectory), &adv.operator, &CertificateOptions::default()).unwrap()[0];
        let lb = rung.lower_bound.unwrap();
        let a = adv.operator.materialize();
        let mut mesh_min = f64::MAX;
        for i in 0..=400 {
            for j in 0..400 {
                let (t, p) = (i as f64 / 400.0 * std::f64::consts::FRAC_PI_2, j as f64 / 400.0 * std::f64::consts::TAU);
                let mut v = CVector::from_vec(vec![c(t.cos(), 0.0), c(p.cos() * t.sin(), p.sin() * t.sin())]);
                let mut worst: f64 = 0.0;
                for x in &adv.trajectory.points {
                    let l = v.dotc(x) / c(v.norm_squared(), 0.0);
                    worst = worst.max((x - &v * l).norm());
                    v = a * v;
                }
                mesh_min = mesh_min.min(worst);
            }
        }
        assert!(lb <= mesh_min, "{lb} {mesh_min}");
        assert!(lb >= 0.9 * mesh_min, "{lb} {mesh_min}");
    }
}
