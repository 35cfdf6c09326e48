//! Closed-form reaction terms `f` (interior) and `g` (boundary) and the
//! surface diffusivity `δ`.
//!
//! Every family carries an exact antiderivative normalized to vanish at 0,
//! which the energy functional relies on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Family {
    Zero,
    /// `a s`
    Linear { a: f64 },
    /// `c s0 tanh(s / s0)`, globally Lipschitz with constant `|c|`.
    BoundedSmooth { c: f64, s0: f64 },
    /// `rho |s|^(q-1) s`
    PowerLaw { rho: f64, q: f64 },
    /// `rho |s|^(q-1) s - a s`
    DampedPower { rho: f64, q: f64, a: f64 },
    /// `a (s - s^3)`
    Bistable { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    InteriorF,
    BoundaryG,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub family: Family,
    pub role: Role,
}

fn power(rho: f64, q: f64, s: f64) -> f64 {
    rho * s.abs().powf(q - 1.0) * s
}

fn power_prime(rho: f64, q: f64, s: f64) -> f64 {
    if q == 1.0 {
        rho
    } else {
        rho * q * s.abs().powf(q - 1.0)
    }
}

fn power_anti(rho: f64, q: f64, s: f64) -> f64 {
    rho * s.abs().powf(q + 1.0) / (q + 1.0)
}

/// `ln cosh z` without overflow.
fn ln_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl FunctionSpec {
    pub fn new(family: Family, role: Role) -> Result<Self> {
        let spec = Self { family, role };
        spec.validate()?;
        Ok(spec)
    }

    pub fn interior(family: Family) -> Result<Self> {
        Self::new(family, Role::InteriorF)
    }

    pub fn boundary(family: Family) -> Result<Self> {
        Self::new(family, Role::BoundaryG)
    }

    pub fn zero(role: Role) -> Self {
        Self {
            family: Family::Zero,
            role,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.family, Family::Zero)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match self.family {
            Family::Zero => true,
            Family::Linear { a } | Family::Bistable { a } => finite(&[a]),
            Family::BoundedSmooth { c, s0 } => {
                if !(s0 > 0.0) {
                    return Err(Error::InvalidFunction(format!("s0 must be positive, got {s0}")));
                }
                finite(&[c, s0])
            }
            Family::PowerLaw { rho, q } | Family::DampedPower { rho, q, .. } => {
                if !(q >= 1.0) {
                    return Err(Error::InvalidFunction(format!("exponent q must be >= 1, got {q}")));
                }
                let a = match self.family {
                    Family::DampedPower { a, .. } => a,
                    _ => 0.0,
                };
                finite(&[rho, q, a])
            }
        };
        if !ok {
            return Err(Error::InvalidFunction("non-finite parameter".into()));
        }
        if self.role == Role::InteriorF
            && !matches!(
                self.family,
                Family::Zero | Family::Linear { .. } | Family::BoundedSmooth { .. }
            )
        {
            return Err(Error::InvalidFunction(
                "the interior reaction f must be globally Lipschitz (zero, linear or bounded_smooth)"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self.family {
            Family::Zero => 0.0,
            Family::Linear { a } => a * s,
            Family::BoundedSmooth { c, s0 } => c * s0 * (s / s0).tanh(),
            Family::PowerLaw { rho, q } => power(rho, q, s),
            Family::DampedPower { rho, q, a } => power(rho, q, s) - a * s,
            Family::Bistable { a } => a * (s - s * s * s),
        }
    }

    pub fn eval_prime(&self, s: f64) -> f64 {
        match self.family {
            Family::Zero => 0.0,
            Family::Linear { a } => a,
            Family::BoundedSmooth { c, s0 } => {
                let t = (s / s0).tanh();
                c * (1.0 - t * t)
            }
            Family::PowerLaw { rho, q } => power_prime(rho, q, s),
            Family::DampedPower { rho, q, a } => power_prime(rho, q, s) - a,
            Family::Bistable { a } => a * (1.0 - 3.0 * s * s),
        }
    }

    /// Antiderivative with value 0 at 0.
    pub fn antiderivative(&self, s: f64) -> f64 {
        match self.family {
            Family::Zero => 0.0,
            Family::Linear { a } => 0.5 * a * s * s,
            Family::BoundedSmooth { c, s0 } => c * s0 * s0 * ln_cosh(s / s0),
            Family::PowerLaw { rho, q } => power_anti(rho, q, s),
            Family::DampedPower { rho, q, a } => power_anti(rho, q, s) - 0.5 * a * s * s,
            Family::Bistable { a } => {
                let s2 = s * s;
                a * (0.5 * s2 - 0.25 * s2 * s2)
            }
        }
    }

    /// Global Lipschitz constant, `None` when the derivative is unbounded.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match self.family {
            Family::Zero => Some(0.0),
            Family::Linear { a } => Some(a.abs()),
            Family::BoundedSmooth { c, .. } => Some(c.abs()),
            Family::PowerLaw { rho, q } if q == 1.0 || rho == 0.0 => Some(rho.abs()),
            Family::DampedPower { rho, q, a } if q == 1.0 => Some((rho - a).abs()),
            Family::DampedPower { rho, a, .. } if rho == 0.0 => Some(a.abs()),
            Family::Bistable { a } if a == 0.0 => Some(0.0),
            _ => None,
        }
    }

    /// A closed-form constant `c >= 0` with `h(ξ) ξ <= c (ξ² + 1)` for all ξ,
    /// or `None` when no finite constant exists. For `g` this is `c_g`, for
    /// `f` the analogous `c̃_f`.
    ///
    /// Where the least such constant has no closed form (bounded_smooth,
    /// bistable, damped_power with negative rho) the value returned is the
    /// one-sided derivative bound `sup h'`, which also satisfies the inequality.
    pub fn sign_condition_constant(&self) -> Option<f64> {
        match self.family {
            Family::Zero => Some(0.0),
            Family::Linear { a } => Some(a.max(0.0)),
            Family::BoundedSmooth { c, .. } => Some(c.max(0.0)),
            Family::Bistable { a } => {
                if a >= 0.0 {
                    Some(a)
                } else {
                    None
                }
            }
            Family::PowerLaw { rho, q } => {
                if rho <= 0.0 {
                    Some(0.0)
                } else if q == 1.0 {
                    Some(rho)
                } else {
                    None
                }
            }
            Family::DampedPower { rho, q, a } => {
                if q == 1.0 {
                    Some((rho - a).max(0.0))
                } else if rho <= 0.0 {
                    Some((-a).max(0.0))
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DiffusivitySpec {
    ZeroSurface,
    Constant { delta0: f64 },
    /// `δ(s) = δ0 + δ1 / (1 + s²)`
    Quasilinear { delta0: f64, delta1: f64 },
}

impl DiffusivitySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DiffusivitySpec::ZeroSurface => Ok(()),
            DiffusivitySpec::Constant { delta0 } => {
                if delta0 > 0.0 && delta0.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidFunction(format!(
                        "surface diffusivity must be positive, got {delta0}"
                    )))
                }
            }
            DiffusivitySpec::Quasilinear { delta0, delta1 } => {
                if delta0 > 0.0 && delta0 + delta1 > 0.0 && delta1.is_finite() && delta0.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidFunction(format!(
                        "quasilinear diffusivity must satisfy delta0 > 0 and delta0 + delta1 > 0 (got {delta0}, {delta1})"
                    )))
                }
            }
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            DiffusivitySpec::ZeroSurface => 0.0,
            DiffusivitySpec::Constant { delta0 } => delta0,
            DiffusivitySpec::Quasilinear { delta0, delta1 } => delta0 + delta1 / (1.0 + s * s),
        }
    }

    /// Nondegeneracy constant δ_* (0 for the reactive case).
    pub fn lower_bound(&self) -> f64 {
        match *self {
            DiffusivitySpec::ZeroSurface => 0.0,
            DiffusivitySpec::Constant { delta0 } => delta0,
            DiffusivitySpec::Quasilinear { delta0, delta1 } => delta0.min(delta0 + delta1),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DiffusivitySpec::ZeroSurface)
    }

    pub fn depends_on_state(&self) -> bool {
        matches!(self, DiffusivitySpec::Quasilinear { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_boundary_families() -> Vec<FunctionSpec> {
        [
            Family::Zero,
            Family::Linear { a: -2.0 },
            Family::BoundedSmooth { c: 3.0, s0: 0.7 },
            Family::PowerLaw { rho: 1.0, q: 2.0 },
            Family::PowerLaw { rho: -0.5, q: 2.5 },
            Family::DampedPower { rho: 1.0, q: 3.0, a: 0.4 },
            Family::Bistable { a: 1.0 },
        ]
        .into_iter()
        .map(|f| FunctionSpec::boundary(f).unwrap())
        .collect()
    }

    #[test]
    fn zero_family() {
        let z = FunctionSpec::zero(Role::BoundaryG);
        assert_eq!(z.eval(3.7), 0.0);
        assert_eq!(z.antiderivative(3.7), 0.0);
    }

    #[test]
    fn power_law_values() {
        let p = FunctionSpec::boundary(Family::PowerLaw { rho: 1.0, q: 2.0 }).unwrap();
        assert_eq!(p.eval(2.0), 4.0);
        assert!((p.antiderivative(2.0) - 8.0 / 3.0).abs() < 1e-14);
        assert_eq!(p.eval(-2.0), -4.0);
        assert_eq!(p.lipschitz_bound(), None);
    }

    #[test]
    fn bounded_smooth_derivative() {
        let b = FunctionSpec::interior(Family::BoundedSmooth { c: 1.0, s0: 1.0 }).unwrap();
        assert_eq!(b.eval_prime(0.0), 1.0);
        for k in -400..=400 {
            assert!(b.eval_prime(k as f64 * 0.05).abs() <= 1.0);
        }
        // large arguments do not overflow the log-cosh
        assert!(b.antiderivative(1e4).is_finite());
    }

    #[test]
    fn lipschitz_bounds() {
        let l = FunctionSpec::interior(Family::Linear { a: -2.0 }).unwrap();
        assert_eq!(l.lipschitz_bound(), Some(2.0));
        let b = FunctionSpec::interior(Family::BoundedSmooth { c: 3.0, s0: 1.0 }).unwrap();
        assert_eq!(b.lipschitz_bound(), Some(3.0));
    }

    #[test]
    fn sign_condition_table() {
        let c = |f| FunctionSpec::boundary(f).unwrap().sign_condition_constant();
        assert_eq!(c(Family::Linear { a: 0.3 }), Some(0.3));
        assert_eq!(c(Family::Linear { a: -3.0 }), Some(0.0));
        assert_eq!(c(Family::PowerLaw { rho: 1.0, q: 2.0 }), None);
        assert_eq!(c(Family::PowerLaw { rho: -1.0, q: 2.0 }), Some(0.0));
        assert_eq!(c(Family::Bistable { a: 1.0 }), Some(1.0));
        assert_eq!(c(Family::DampedPower { rho: -1.0, q: 3.0, a: -0.5 }), Some(0.5));
        assert_eq!(c(Family::Zero), Some(0.0));
    }

    #[test]
    fn sign_condition_holds_on_samples() {
        for spec in all_boundary_families() {
            if let Some(cg) = spec.sign_condition_constant() {
                for k in -500..=500 {
                    let s = k as f64 * 0.02;
                    assert!(spec.eval(s) * s <= cg * (s * s + 1.0) + 1e-12, "{spec:?} at {s}");
                }
            }
        }
        let bi = FunctionSpec::boundary(Family::DampedPower { rho: -1.0, q: 3.0, a: -0.5 }).unwrap();
        let cg = bi.sign_condition_constant().unwrap();
        for k in -500..=500 {
            let s = k as f64 * 0.02;
            assert!(bi.eval(s) * s <= cg * (s * s + 1.0) + 1e-12);
        }
    }

    #[test]
    fn interior_role_restriction() {
        assert!(FunctionSpec::interior(Family::PowerLaw { rho: 1.0, q: 2.0 }).is_err());
        assert!(FunctionSpec::interior(Family::Bistable { a: 1.0 }).is_err());
        assert!(FunctionSpec::interior(Family::DampedPower { rho: 1.0, q: 2.0, a: 1.0 }).is_err());
        assert!(FunctionSpec::boundary(Family::PowerLaw { rho: 1.0, q: 0.5 }).is_err());
        assert!(FunctionSpec::boundary(Family::BoundedSmooth { c: 1.0, s0: 0.0 }).is_err());
    }

    #[test]
    fn diffusivity_validation() {
        assert!(DiffusivitySpec::Constant { delta0: 0.0 }.validate().is_err());
        assert!(DiffusivitySpec::Quasilinear { delta0: 1.0, delta1: -1.0 }.validate().is_err());
        let q = DiffusivitySpec::Quasilinear { delta0: 1.0, delta1: -0.5 };
        q.validate().unwrap();
        assert_eq!(q.lower_bound(), 0.5);
        assert_eq!(q.eval(0.0), 0.5);
        assert!((q.eval(1e6) - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn antiderivative_consistent(s in -10.0f64..10.0) {
            for spec in all_boundary_families() {
                let mut errs = Vec::new();
                for h in [1e-3, 1e-4] {
                    let fd = (spec.antiderivative(s + h) - spec.antiderivative(s)) / h;
                    errs.push((fd - spec.eval(s)).abs());
                }
                // first-order: error shrinks with h (or is already at roundoff)
                let scale = 1.0 + spec.eval(s).abs() + spec.eval_prime(s).abs();
                prop_assert!(errs[1] <= 0.2 * errs[0] + 1e-6 * scale, "{:?} {:?}", spec, errs);
            }
        }

        #[test]
        fn derivative_matches_central_difference(s in -10.0f64..10.0) {
            for spec in all_boundary_families() {
                let h = 1e-5;
                let fd = (spec.eval(s + h) - spec.eval(s - h)) / (2.0 * h);
                let ex = spec.eval_prime(s);
                prop_assert!((fd - ex).abs() <= 1e-6 * (1.0 + ex.abs()), "{:?} at {}: {} vs {}", spec, s, fd, ex);
            }
        }

        #[test]
        fn interior_lipschitz(s in -20.0f64..20.0, t in -20.0f64..20.0) {
            for fam in [Family::Zero, Family::Linear { a: -1.5 }, Family::BoundedSmooth { c: 2.0, s0: 0.3 }] {
                let f = FunctionSpec::interior(fam).unwrap();
                let l = f.lipschitz_bound().unwrap();
                prop_assert!((f.eval(s) - f.eval(t)).abs() <= l * (s - t).abs() + 1e-12);
            }
        }
    }
}
