use nalgebra::ComplexField;
use serde::{Deserialize, Serialize};

use super::{Witness, WitnessMode};
use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::{OperatorKind, OperatorSpec};
use crate::pseudotraj::{measure_defect, IndexConvention, Trajectory};
use crate::scalar::{cpowi, inner, CVector, NormKind, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructuredMode {
    /// Every residual below `epsilon` once the defect is at most `delta(epsilon)`.
    Super,
    /// Residuals tending to zero along inputs whose defect tends to zero.
    Limit,
}

#[derive(Debug, Clone)]
pub struct StructuredWitness<R: Real> {
    pub witness: Witness<R>,
    pub epsilon: R,
    /// Admissible defect for `epsilon` (super mode).
    pub delta: Option<R>,
    pub defect: R,
}

/// `epsilon / (||P_Y|| sum_{l<m} ||S^l|| + m ||P|| + 1)` for a
/// nilpotent-plus-rotation operator, where `P` and `P_Y` are the coordinate
/// projections (both of norm one).
pub fn compact_delta<R: Real>(spec: &OperatorSpec<R>, epsilon: R) -> Result<R> {
    match spec.kind() {
        OperatorKind::NilpotentPlusRotation { nilpotent, index, .. } => {
            let mut sum = R::zero();
            let mut pow = linalg::identity::<R>(nilpotent.nrows());
            for _ in 0..*index {
                sum += linalg::spectral_norm(&pow)?;
                pow = &pow * nilpotent;
            }
            Ok(epsilon / (sum + R::from_usize_lossy(*index) + R::one()))
        }
        OperatorKind::ProjectionToLine { .. } => projection_delta(spec, epsilon),
        _ => Err(unsupported()),
    }
}

/// `epsilon / (2 ||P||)` with `P = I - T` the projection onto the kernel
/// along the line.
pub fn projection_delta<R: Real>(spec: &OperatorSpec<R>, epsilon: R) -> Result<R> {
    if !matches!(spec.kind(), OperatorKind::ProjectionToLine { .. }) {
        return Err(unsupported());
    }
    let d = spec.dim();
    let p = linalg::identity::<R>(d) - spec.materialize();
    Ok(epsilon / (R::lit(2.0) * linalg::spectral_norm(&p)?))
}

fn unsupported() -> Error {
    Error::param("operator", "constructive witnesses need a nilpotent-plus-rotation or projection-to-line operator")
}

/// Explicit witness for nilpotent-plus-rotation and projection-to-line
/// operators on a positive window starting at 0.
pub fn construct_witness_structured<R: Real>(
    spec: &OperatorSpec<R>,
    traj: &Trajectory<R>,
    epsilon: R,
    mode: StructuredMode,
) -> Result<StructuredWitness<R>> {
    if traj.window.convention != IndexConvention::Positive || traj.window.lo != 0 {
        return Err(Error::param("window", "constructive witnesses use positive windows starting at 0"));
    }
    if traj.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: traj.dim() });
    }
    if !(epsilon > R::zero()) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    let defect = measure_defect(traj, spec)?.max_defect;
    let delta = match mode {
        StructuredMode::Super => {
            let delta = compact_delta(spec, epsilon)?;
            if defect > delta {
                return Err(Error::DefectTooLarge { defect: defect.as_f64(), bound: delta.as_f64() });
            }
            Some(delta)
        }
        StructuredMode::Limit => None,
    };
    // Direction chosen when the line component of x_0 vanishes.
    let fallback = delta.unwrap_or(R::one()) * R::lit(0.5);
    let (q, lambdas, wmode) = match spec.kind() {
        OperatorKind::NilpotentPlusRotation { index, beta, .. } => {
            let ys = spec.dim() - 1;
            let y0 = traj.at(0)[ys];
            let mut q = traj.at(0).clone();
            let zero = C::new(R::zero(), R::zero());
            let lambdas: Vec<C<R>> = match mode {
                StructuredMode::Super => {
                    let qn = if y0 == zero { C::new(fallback, R::zero()) } else { y0 };
                    q[ys] = qn;
                    traj.iter()
                        .map(|(n, p)| {
                            if (n as usize) < *index {
                                C::new(R::one(), R::zero())
                            } else {
                                p[ys] / (cpowi(*beta, n).unwrap() * qn)
                            }
                        })
                        .collect()
                }
                StructuredMode::Limit => {
                    q[ys] = C::new(R::one(), R::zero());
                    traj.iter().map(|(n, p)| p[ys] / cpowi(*beta, n).unwrap()).collect()
                }
            };
            let wmode = if mode == StructuredMode::Super { WitnessMode::Super } else { WitnessMode::LimitSuper };
            (q, lambdas, wmode)
        }
        OperatorKind::ProjectionToLine { line, .. } => {
            let t = spec.materialize();
            let z0 = traj.at(0);
            let y0 = t * z0;
            let x0 = z0 - &y0;
            let unit = {
                let nu = CVector::from_column_slice(line);
                nu.unscale(nu.norm())
            };
            let nu = if y0.norm() > R::zero() && mode == StructuredMode::Super { y0 } else { unit.scale(fallback) };
            let q = &x0 + &nu;
            let nn = nu.norm_squared();
            let lambdas = traj
                .iter()
                .map(|(n, z)| {
                    if n == 0 && mode == StructuredMode::Super {
                        C::new(R::one(), R::zero())
                    } else if n == 0 {
                        // T^0 q = x_0 + nu: best scalar for the line part.
                        let r = &q;
                        inner(z, r).unscale(r.norm_squared())
                    } else {
                        inner(&(t * z), &nu).unscale(nn)
                    }
                })
                .collect();
            let wmode = if mode == StructuredMode::Super { WitnessMode::Super } else { WitnessMode::LimitSuper };
            (q, lambdas, wmode)
        }
        _ => return Err(unsupported()),
    };
    let mut witness = Witness::assemble(traj, spec, wmode, q, None, lambdas, NormKind::L2)?;
    if mode == StructuredMode::Limit {
        let growth = witness
            .lambdas
            .iter()
            .zip(traj.indices())
            .map(|(l, n)| l.modulus() / R::from_i64_lossy(n.max(1)))
            .fold(R::zero(), |m, x| m.max(x));
        witness.lambda_growth = Some(growth);
    }
    Ok(StructuredWitness { witness, epsilon, delta, defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudotraj::{gen_random, gen_random_profile, Window};
    use crate::scalar::{c, CMatrix};

    fn npr(m: usize, beta: C<f64>) -> OperatorSpec<f64> {
        let s = CMatrix::from_fn(m, m, |i, j| if i == j + 1 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        OperatorSpec::nilpotent_plus_rotation(s, m, beta).unwrap()
    }

    #[test]
    fn delta_formula_shift() {
        // S = shift of size 2: ||S^0|| + ||S^1|| = 2, m = 2, so delta = eps / 5.
        let op = npr(2, c(0.6, 0.8));
        assert!((compact_delta(&op, 1.0).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn super_witness_below_epsilon() {
        let op = npr(3, c(0.0, 1.0));
        for seed in 0..20 {
            let eps = 0.05;
            let delta = compact_delta(&op, eps).unwrap();
            let x0 = CVector::from_vec(vec![c(0.1, 0.0), c(0.0, 0.2), c(0.3, 0.0), c(1.0, 1.0)]);
            let t = gen_random(&op, &x0, delta, Window::positive(200), seed).unwrap();
            let w = construct_witness_structured(&op, &t, eps, StructuredMode::Super).unwrap();
            assert!(w.witness.sup_residual < eps);
            assert!(w.witness.strict_sup_residual < eps);
            assert_eq!(w.witness.lambdas[0], c(1.0, 0.0));
        }
    }

    #[test]
    fn zero_line_component_uses_fallback() {
        let op = npr(1, c(1.0, 0.0));
        let x0 = CVector::from_vec(vec![c(0.5, 0.0), c(0.0, 0.0)]);
        let t = Trajectory::orbit(&op, &x0, Window::positive(5)).unwrap();
        let w = construct_witness_structured(&op, &t, 0.1, StructuredMode::Super).unwrap();
        assert!(w.witness.q[1].norm() > 0.0);
        assert_eq!(w.witness.zero_lambda_indices, vec![1, 2, 3, 4, 5]);
        assert!(w.witness.sup_residual < 0.1);
    }

    #[test]
    fn projection_witness() {
        let op = OperatorSpec::<f64>::projection_to_line(
            vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
            Some(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
        )
        .unwrap();
        let eps = 0.01;
        let delta = projection_delta(&op, eps).unwrap();
        let x0 = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.5), c(0.2, 0.0)]);
        let t = gen_random(&op, &x0, delta, Window::positive(100), 2).unwrap();
        let w = construct_witness_structured(&op, &t, eps, StructuredMode::Super).unwrap();
        assert!(w.witness.sup_residual <= eps / 2.0 + 1e-15);
    }

    #[test]
    fn oversized_defect_rejected() {
        let op = npr(2, c(1.0, 0.0));
        let t = gen_random(&op, &CVector::zeros(3), 0.5, Window::positive(10), 0).unwrap();
        let r = construct_witness_structured(&op, &t, 0.01, StructuredMode::Super);
        assert!(matches!(r, Err(Error::DefectTooLarge { .. })));
    }

    #[test]
    fn limit_residual_decays() {
        let op = npr(2, c(0.6, 0.8));
        let t = gen_random_profile(&op, &CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]), Window::positive(400), 5, |n| {
            1.0 / (n.unsigned_abs() as f64 + 1.0)
        })
        .unwrap();
        let w = construct_witness_structured(&op, &t, 1.0, StructuredMode::Limit).unwrap().witness;
        assert!(w.tail_residual() < 0.1 * w.head_residual());
        assert!(w.tail_residual() < 1e-2);
        assert!(w.lambda_growth.unwrap().is_finite());
    }
}
