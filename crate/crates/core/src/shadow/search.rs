use std::cmp::Ordering;

use nalgebra::ComplexField;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{optimal_lambdas_with, project_onto_line, tail_start, zero_cutoffs, PowerTable, Witness, WitnessMode};
use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::OperatorSpec;
use crate::pseudotraj::Trajectory;
use crate::rng::{unit_vector, SeedTree};
use crate::scalar::{CMatrix, CVector, NormKind, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    Super,
    WeakSuper,
    /// Scores only the last quarter of the window.
    LimitSuper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub restarts: usize,
    /// Nelder-Mead iterations per restart.
    pub iterations: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { restarts: 32, iterations: 400 }
    }
}

/// Heuristic witness search: multi-start Nelder-Mead over `q` on the sum of
/// squared residuals (the scalars being optimal per index), followed by
/// re-scoring every candidate with the sup residual. In weak mode `p` is
/// fitted by alternating least squares with the scalars.
///
/// Restarts run in parallel with per-restart seeds and are reduced by
/// `(score, q)` so the result does not depend on scheduling.
pub fn search_super_witness<R: Real>(
    traj: &Trajectory<R>,
    spec: &OperatorSpec<R>,
    mode: SearchMode,
    budget: SearchBudget,
    seed: u64,
) -> Result<Witness<R>> {
    if traj.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: traj.dim() });
    }
    if budget.restarts == 0 {
        return Err(Error::param("budget", "at least one restart is required"));
    }
    let problem = Problem::new(traj, spec, mode)?;
    let starts = problem.starts(budget.restarts, seed);
    let results: Vec<(R, CVector<R>, Option<CVector<R>>)> = starts
        .into_par_iter()
        .map(|q0| {
            let q = problem.minimize(&q0, budget.iterations);
            let q = canonical(&q);
            let p = problem.fit_p(&q, 40);
            let score = problem.sup_score(&q, p.as_ref());
            (score, q, p)
        })
        .collect();
    let (_, q, p) = results
        .into_iter()
        .filter(|r| r.0.is_finite())
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then_with(|| lex(&a.1, &b.1)))
        .ok_or(Error::NonConvergence { what: "witness search", iterations: budget.iterations })?;

    let fit = optimal_lambdas_with(traj, spec, &q, p.as_ref(), mode != SearchMode::WeakSuper)?;
    let wmode = match mode {
        SearchMode::Super => WitnessMode::Super,
        SearchMode::WeakSuper => WitnessMode::WeakSuper,
        SearchMode::LimitSuper => WitnessMode::LimitSuper,
    };
    let q = if mode != SearchMode::WeakSuper && traj.window.contains(0) {
        let l0 = optimal_lambdas_with(traj, spec, &q, None, false)?.lambdas[(0 - traj.window.lo) as usize];
        if l0.re.is_zero() && l0.im.is_zero() {
            q
        } else {
            q.map(|z| z * l0)
        }
    } else {
        q
    };
    let mut w = Witness::assemble(traj, spec, wmode, q, p, fit.lambdas, NormKind::L2)?;
    if mode == SearchMode::LimitSuper {
        let growth = w
            .lambdas
            .iter()
            .zip(traj.indices())
            .map(|(l, n)| l.modulus() / R::from_i64_lossy(n.abs().max(1)))
            .fold(R::zero(), |m, x| m.max(x));
        w.lambda_growth = Some(growth);
    }
    Ok(w)
}

struct Problem<'a, R: Real> {
    traj: &'a Trajectory<R>,
    mode: SearchMode,
    powers: PowerTable<R>,
    /// Window positions entering the objective.
    range: std::ops::Range<usize>,
    stacked: Option<CMatrix<R>>,
    invertible: bool,
    spec: &'a OperatorSpec<R>,
}

impl<'a, R: Real> Problem<'a, R> {
    fn new(traj: &'a Trajectory<R>, spec: &'a OperatorSpec<R>, mode: SearchMode) -> Result<Self> {
        let powers = PowerTable::new(spec, &traj.window)?;
        let len = traj.len();
        let range = match mode {
            SearchMode::LimitSuper => tail_start(len)..len,
            _ => 0..len,
        };
        let stacked = if mode == SearchMode::WeakSuper {
            let d = spec.dim();
            let mut m = CMatrix::<R>::zeros(d * len, d);
            for (i, p) in powers.mats.iter().enumerate() {
                m.view_mut((i * d, 0), (d, d)).copy_from(p);
            }
            Some(m)
        } else {
            None
        };
        Ok(Self { traj, mode, powers, range, stacked, invertible: spec.is_invertible(), spec })
    }

    fn starts(&self, count: usize, seed: u64) -> Vec<CVector<R>> {
        let d = self.spec.dim();
        let mut out = Vec::with_capacity(count);
        let w = self.traj.window;
        let mut data_indices = vec![w.lo.max(0).min(w.hi)];
        if self.invertible {
            let r = &self.range;
            for k in 0..4 {
                let i = r.start + (r.end - 1 - r.start) * k / 3;
                data_indices.push(w.lo + i as i64);
            }
        }
        for n in data_indices {
            if out.len() >= count {
                break;
            }
            if let Ok(q) = self.spec.apply_power(-n, self.traj.at(n)) {
                if q.norm() > R::zero() && q.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                    out.push(q.unscale(q.norm()));
                }
            }
        }
        let tree = SeedTree::new(seed);
        let mut i = 0u64;
        while out.len() < count {
            let mut rng = tree.child(i).rng();
            out.push(unit_vector(d, &mut rng));
            i += 1;
        }
        out
    }

    fn orbit_point(&self, i: usize, q: &CVector<R>) -> CVector<R> {
        &self.powers.mats[i] * q
    }

    fn targets(&self, p: Option<&CVector<R>>) -> Vec<CVector<R>> {
        self.traj
            .points
            .iter()
            .enumerate()
            .map(|(i, x)| match p {
                Some(p) => x - self.orbit_point(i, p),
                None => x.clone(),
            })
            .collect()
    }

    /// Per-index optimal residuals over `range`.
    fn residuals(&self, q: &CVector<R>, targets: &[CVector<R>]) -> Vec<(C<R>, R)> {
        let orbit: Vec<CVector<R>> = self.range.clone().map(|i| self.orbit_point(i, q)).collect();
        let cutoffs = zero_cutoffs(self.spec, &self.powers.mats[self.range.clone()], q.norm());
        self.range
            .clone()
            .zip(&orbit)
            .zip(&cutoffs)
            .map(|((i, v), cut)| project_onto_line(&targets[i], v, v.norm() <= *cut))
            .collect()
    }

    fn surrogate(&self, q: &CVector<R>) -> R {
        if q.norm() <= R::zero() {
            return R::max_value().unwrap();
        }
        let p = if self.mode == SearchMode::WeakSuper { self.fit_p(q, 4) } else { None };
        let targets = self.targets(p.as_ref());
        self.residuals(q, &targets).iter().fold(R::zero(), |s, (_, r)| s + *r * *r)
    }

    fn sup_score(&self, q: &CVector<R>, p: Option<&CVector<R>>) -> R {
        let targets = self.targets(p);
        self.residuals(q, &targets).iter().fold(R::zero(), |m, (_, r)| m.max(*r))
    }

    /// Alternates the scalars with a least-squares fit of `p`.
    fn fit_p(&self, q: &CVector<R>, rounds: usize) -> Option<CVector<R>> {
        let stacked = self.stacked.as_ref()?;
        let d = self.spec.dim();
        let len = self.traj.len();
        let mut p = CVector::<R>::zeros(d);
        let mut last = R::max_value().unwrap();
        for _ in 0..rounds {
            let targets = self.targets(Some(&p));
            let fits = self.residuals(q, &targets);
            let obj = fits.iter().fold(R::zero(), |s, (_, r)| s + *r * *r);
            if obj >= last * (R::one() - R::lit(1e-12)) {
                break;
            }
            last = obj;
            let mut rhs = CVector::<R>::zeros(d * len);
            for (i, x) in self.traj.points.iter().enumerate() {
                let l = fits[i].0;
                let v = self.orbit_point(i, q);
                rhs.rows_mut(i * d, d).copy_from(&(x - v.map(|z| z * l)));
            }
            match linalg::least_squares(stacked, &rhs) {
                Ok(next) => p = next,
                Err(_) => break,
            }
        }
        Some(p)
    }

    fn minimize(&self, q0: &CVector<R>, iterations: usize) -> CVector<R> {
        let d = q0.len();
        let x0: Vec<R> = q0.iter().flat_map(|z| [z.re, z.im]).collect();
        let f = |x: &[R]| self.surrogate(&to_complex(x, d));
        let best = nelder_mead(&f, &x0, R::lit(0.25), iterations);
        to_complex(&best, d)
    }
}

fn to_complex<R: Real>(x: &[R], d: usize) -> CVector<R> {
    CVector::from_iterator(d, x.chunks(2).map(|p| C::new(p[0], p[1])))
}

/// Unit vector whose largest entry is real and positive.
fn canonical<R: Real>(q: &CVector<R>) -> CVector<R> {
    let norm = q.norm();
    if norm <= R::zero() {
        return q.clone();
    }
    let big = q.iter().copied().fold(C::new(R::zero(), R::zero()), |m, z| if z.modulus() > m.modulus() { z } else { m });
    let phase = big.unscale(big.modulus());
    q.map(|z| z / phase).unscale(norm)
}

fn lex<R: Real>(a: &CVector<R>, b: &CVector<R>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let o = x.re.partial_cmp(&y.re).unwrap_or(Ordering::Equal).then(x.im.partial_cmp(&y.im).unwrap_or(Ordering::Equal));
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Standard Nelder-Mead with reflection 1, expansion 2, contraction 1/2 and
/// shrink 1/2.
fn nelder_mead<R: Real, F: Fn(&[R]) -> R>(f: &F, x0: &[R], step: R, iterations: usize) -> Vec<R> {
    let n = x0.len();
    let half = R::lit(0.5);
    let two = R::lit(2.0);
    let mut simplex: Vec<(Vec<R>, R)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = f(&x);
        simplex.push((x, v));
    }
    let order = |s: &mut Vec<(Vec<R>, R)>| s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
    for _ in 0..iterations {
        order(&mut simplex);
        let (fb, fw) = (simplex[0].1, simplex[n].1);
        if (fw - fb).abs() <= R::lit(1e-15) * (R::one() + fb.abs()) {
            break;
        }
        let mut centroid = vec![R::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += *xi;
            }
        }
        let nr = R::from_usize_lossy(n);
        centroid.iter_mut().for_each(|c| *c /= nr);
        let along = |t: R| -> Vec<R> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| *c + t * (*c - *w)).collect()
        };
        let xr = along(R::one());
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(two);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < fw {
                let x = along(half);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(-half);
                let v = f(&x);
                (x, v)
            };
            if fc < fw.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&best) {
                        *xi = *bi + half * (*xi - *bi);
                    }
                    *v = f(x);
                }
            }
        }
    }
    order(&mut simplex);
    simplex.swap_remove(0).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudotraj::{gen_adversarial, AdversarialKind, Window};
    use crate::scalar::c;

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2);
        let x = nelder_mead(&f, &[0.0, 0.0], 0.5, 500);
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn exact_orbit_is_recovered() {
        let op = OperatorSpec::<f64>::diagonal(vec![c(0.6, 0.8), c(0.0, 1.0)]).unwrap();
        let x0 = CVector::from_vec(vec![c(1.0, 0.5), c(-0.3, 0.2)]);
        let t = Trajectory::orbit(&op, &x0, Window::positive(30)).unwrap();
        let w = search_super_witness(&t, &op, SearchMode::Super, SearchBudget { restarts: 4, iterations: 200 }, 3).unwrap();
        assert!(w.sup_residual < 1e-9);
        assert!((w.lambdas[0] - c(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn search_is_deterministic() {
        let kind = AdversarialKind::RotationLinear { beta: c(0.6, 0.8), beta2: None, delta: 0.01 };
        let adv = gen_adversarial::<f64>(&kind, Window::bilateral(10)).unwrap();
        let b = SearchBudget { restarts: 6, iterations: 100 };
        let a = search_super_witness(&adv.trajectory, &adv.operator, SearchMode::Super, b, 9).unwrap();
        let again = search_super_witness(&adv.trajectory, &adv.operator, SearchMode::Super, b, 9).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn weak_mode_fits_translate() {
        let op = OperatorSpec::<f64>::diagonal(vec![c(0.6, 0.8), c(0.8, -0.6)]).unwrap();
        let p = CVector::from_vec(vec![c(2.0, 0.0), c(0.0, -1.0)]);
        let q = CVector::from_vec(vec![c(0.0, 1.0), c(1.0, 0.0)]);
        let pts: Vec<_> = (0..=20)
            .map(|n| op.apply_power(n, &p).unwrap() + op.apply_power(n, &q).unwrap().scale(1.0 + n as f64 * 0.1))
            .collect();
        let t = Trajectory::new(Window::positive(20), pts, 0.2, "").unwrap();
        let w = search_super_witness(&t, &op, SearchMode::WeakSuper, SearchBudget { restarts: 6, iterations: 300 }, 1).unwrap();
        assert!(w.sup_residual < 1e-6, "{}", w.sup_residual);
        assert!(w.p.is_some());
    }
}
