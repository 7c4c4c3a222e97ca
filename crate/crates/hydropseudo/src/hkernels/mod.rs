//! The classified two-point kernel families `h(ξ, u)` and their evaluation.
//!
//! Every family satisfies the defining functional equation
//!
//! ```text
//! h₁(ξ,w) h₂(ξ,v) + h₂(w,v) h₂(ξ,w) − h₁(v,w) h₂(ξ,v) = ν(ξ,v)
//! ```
//!
//! (subscripts are slot derivatives) with a family-specific right-hand side
//! `ν`. Four families are closed-form; the fifth is defined through
//! quadratures, see [`quadrature`].
//!
//! Two presentations of each kernel are exposed:
//!
//! * the **stored** form `h_jet` — the representative used to build
//!   coefficient matrices (its `u`-slot is the field variable);
//! * the **diagonal-normalized** form `normalized_h_jet` — oriented so that
//!   the expansion `h(w, v) = log(w − v) + Σ aᵢ(w)(w − v)ⁱ` holds near the
//!   diagonal, which is what all series machinery consumes. For the
//!   closed-form families the two differ at most by a sign; for the
//!   quadrature family the normalized form is the pullback of the stored
//!   kernel through the characteristic branch.

pub mod quadrature;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::jets::{Jet, JetError};
use crate::numerics::ode::OdeError;
use crate::numerics::quad::QuadError;

pub use quadrature::{preset, PhiTable, QuadratureSpec};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid kernel configuration: {0}")]
    Config(String),
    #[error("argument outside the admissible domain: {0}")]
    Domain(String),
    #[error("sampling failed: {0}")]
    Sampling(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// The classified kernel families.
#[derive(Clone, Debug, PartialEq)]
pub enum HKernelFamily {
    /// `h = κ(ξ−u) + log|ξ−u|`.
    LogKappa { kappa: f64 },
    /// `h = κ(ξ−u) + log|e^{ξ−u} − 1|`.
    ExpKappa { kappa: f64 },
    /// `h = (ξ+1) log u − log(u−ξ)`.
    ShiftedLog,
    /// `h = c1 + c2(ξ−u) + log(c3(ξ−u))`: the affine-log degenerate branch.
    /// Up to the constant `c1 + log|c3|` this is [`HKernelFamily::LogKappa`]
    /// with `κ = c2`; it is kept separate because its parameters enter the
    /// degeneration tests.
    AffineLogDegenerate { c1: f64, c2: f64, c3: f64 },
    /// Quadrature-defined family.
    Quadrature(QuadratureSpec),
}

/// Admissible argument ranges and the separation guard used when sampling.
#[derive(Clone, Copy, Debug)]
pub struct SamplePlan {
    /// Range of spectral (ξ-type) arguments.
    pub xi: [f64; 2],
    /// Range of field (u-type) arguments.
    pub u: [f64; 2],
    /// Minimum pairwise distance between sampled coordinates.
    pub min_sep: f64,
}

/// Which range a sampled coordinate is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Xi,
    U,
}

/// A kernel family bundled with whatever precomputed state its evaluation
/// needs (the branch tables for the quadrature family).
#[derive(Clone, Debug)]
pub struct Kernel {
    family: HKernelFamily,
    table: Option<PhiTable>,
}

impl Kernel {
    pub fn new(family: HKernelFamily) -> Result<Self, KernelError> {
        let table = match &family {
            HKernelFamily::AffineLogDegenerate { c3, .. } if *c3 == 0.0 => {
                return Err(KernelError::Config("c3 must be nonzero".into()));
            }
            HKernelFamily::Quadrature(spec) => Some(PhiTable::build(spec)?),
            _ => None,
        };
        Ok(Kernel { family, table })
    }

    pub fn family(&self) -> &HKernelFamily {
        &self.family
    }

    pub fn table(&self) -> Option<&PhiTable> {
        self.table.as_ref()
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            HKernelFamily::LogKappa { .. } => "log-kappa",
            HKernelFamily::ExpKappa { .. } => "exp-kappa",
            HKernelFamily::ShiftedLog => "shifted-log",
            HKernelFamily::AffineLogDegenerate { .. } => "affine-log-degenerate",
            HKernelFamily::Quadrature(_) => "quadrature",
        }
    }

    /// Sign relating the stored and diagonal-normalized kernels for the
    /// closed-form families (`normalized = orientation * stored`).
    pub fn orientation(&self) -> f64 {
        match self.family {
            // Stored form has log(u−ξ) with a minus sign on the diagonal log.
            HKernelFamily::ShiftedLog => -1.0,
            _ => 1.0,
        }
    }

    pub fn sample_plan(&self) -> SamplePlan {
        match &self.family {
            HKernelFamily::LogKappa { .. }
            | HKernelFamily::ExpKappa { .. }
            | HKernelFamily::AffineLogDegenerate { .. } => {
                SamplePlan { xi: [-2.0, 2.0], u: [-2.0, 2.0], min_sep: 0.2 }
            }
            HKernelFamily::ShiftedLog => {
                SamplePlan { xi: [0.25, 4.0], u: [0.25, 4.0], min_sep: 0.1875 }
            }
            HKernelFamily::Quadrature(spec) => {
                // Shrink both intervals slightly so dense-table boundary
                // evaluation never depends on the out-of-range slack.
                let shrink = |[lo, hi]: [f64; 2]| {
                    let m = 0.01 * (hi - lo);
                    [lo + m, hi - m]
                };
                SamplePlan {
                    xi: shrink(spec.xi_domain),
                    u: shrink(spec.u_domain),
                    min_sep: 0.05 * (spec.u_domain[1] - spec.u_domain[0]),
                }
            }
        }
    }

    fn guard_stored(&self, xi: f64, u: f64) -> Result<(), KernelError> {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-10;
        match &self.family {
            HKernelFamily::ShiftedLog => {
                if u <= 0.0 {
                    return Err(KernelError::Domain(format!("u = {u} must be positive")));
                }
                if close(xi, u) {
                    return Err(KernelError::Domain(format!("ξ = {xi} coincides with u")));
                }
            }
            HKernelFamily::ExpKappa { .. } => {
                if close(xi, u) {
                    return Err(KernelError::Domain(format!("ξ = {xi} coincides with u")));
                }
                if (xi - u).abs() > 50.0 {
                    return Err(KernelError::Domain("ξ − u too large for e^{ξ−u}".into()));
                }
            }
            HKernelFamily::Quadrature(_) => {} // table evaluation guards itself
            _ => {
                if close(xi, u) {
                    return Err(KernelError::Domain(format!("ξ = {xi} coincides with u")));
                }
            }
        }
        Ok(())
    }

    /// Stored-form kernel value.
    pub fn h_value(&self, xi: f64, u: f64) -> Result<f64, KernelError> {
        self.guard_stored(xi, u)?;
        Ok(match &self.family {
            HKernelFamily::LogKappa { kappa } => {
                let d = xi - u;
                kappa * d + d.abs().ln()
            }
            HKernelFamily::ExpKappa { kappa } => {
                let d = xi - u;
                kappa * d + (d.exp() - 1.0).abs().ln()
            }
            HKernelFamily::ShiftedLog => (xi + 1.0) * u.ln() - (u - xi).abs().ln(),
            HKernelFamily::AffineLogDegenerate { c1, c2, c3 } => {
                let d = xi - u;
                c1 + c3.abs().ln() + c2 * d + d.abs().ln()
            }
            HKernelFamily::Quadrature(_) => {
                let table = self.table.as_ref().expect("built in Kernel::new");
                quadrature::stored_value(table, xi, u)?
            }
        })
    }

    /// Stored-form first partials `(h_ξ, h_u)`.
    pub fn partials(&self, xi: f64, u: f64) -> Result<(f64, f64), KernelError> {
        self.guard_stored(xi, u)?;
        Ok(match &self.family {
            HKernelFamily::LogKappa { kappa } => {
                let r = 1.0 / (xi - u);
                (kappa + r, -kappa - r)
            }
            HKernelFamily::ExpKappa { kappa } => {
                let d = xi - u;
                let e = d.exp() / (d.exp() - 1.0);
                (kappa + e, -kappa - e)
            }
            HKernelFamily::ShiftedLog => {
                let r = 1.0 / (u - xi);
                (u.ln() + r, (xi + 1.0) / u - r)
            }
            HKernelFamily::AffineLogDegenerate { c2, .. } => {
                let r = 1.0 / (xi - u);
                (c2 + r, -c2 - r)
            }
            HKernelFamily::Quadrature(_) => {
                let table = self.table.as_ref().expect("built in Kernel::new");
                quadrature::stored_partials(table, xi, u)?
            }
        })
    }

    /// Stored-form kernel jet at `(ξ, u)` (variable 0 = ξ, variable 1 = u).
    pub fn h_jet(&self, xi: f64, u: f64, order: usize) -> Result<Jet, KernelError> {
        self.guard_stored(xi, u)?;
        let xij = Jet::variable(2, order, 0, xi)?;
        let uj = Jet::variable(2, order, 1, u)?;
        let d = &xij - &uj;
        Ok(match &self.family {
            HKernelFamily::LogKappa { kappa } => &d.scale(*kappa) + &d.ln_abs()?,
            HKernelFamily::ExpKappa { kappa } => {
                let em1 = d.exp().add_scalar(-1.0);
                &d.scale(*kappa) + &em1.ln_abs()?
            }
            HKernelFamily::ShiftedLog => {
                let term1 = xij.add_scalar(1.0).try_mul(&uj.ln_abs()?)?;
                &term1 - &(&uj - &xij).ln_abs()?
            }
            HKernelFamily::AffineLogDegenerate { c1, c2, c3 } => {
                (&d.scale(*c2) + &d.ln_abs()?).add_scalar(c1 + c3.abs().ln())
            }
            HKernelFamily::Quadrature(_) => {
                let table = self.table.as_ref().expect("built in Kernel::new");
                quadrature::stored_h_jet(table, xi, u, order)?
            }
        })
    }

    /// Diagonal-normalized kernel jet at `(x, v)` (variable 0 = x,
    /// variable 1 = v). For the quadrature family the value slot is 0; see
    /// [`quadrature::normalized_h_jet`].
    pub fn normalized_h_jet(&self, x: f64, v: f64, order: usize) -> Result<Jet, KernelError> {
        match &self.family {
            HKernelFamily::Quadrature(_) => {
                let table = self.table.as_ref().expect("built in Kernel::new");
                quadrature::normalized_h_jet(table, x, v, order)
            }
            _ => Ok(self.h_jet(x, v, order)?.scale(self.orientation())),
        }
    }

    /// Diagonal-normalized first partials `(h_x, h_v)`.
    pub fn normalized_partials(&self, x: f64, v: f64) -> Result<(f64, f64), KernelError> {
        match &self.family {
            HKernelFamily::Quadrature(_) => {
                let j = self.normalized_h_jet(x, v, 1)?;
                Ok((j.raw(&[1, 0])?, j.raw(&[0, 1])?))
            }
            _ => {
                let (a, b) = self.partials(x, v)?;
                let s = self.orientation();
                Ok((s * a, s * b))
            }
        }
    }

    /// Right-hand side `ν(ξ, v)` of the functional equation, in the
    /// diagonal-normalized orientation (the equation is quadratic in `h`, so
    /// the orientation sign drops out anyway).
    pub fn nu(&self, xi: f64, v: f64) -> f64 {
        match &self.family {
            HKernelFamily::LogKappa { kappa } => kappa * kappa,
            HKernelFamily::ExpKappa { kappa } => kappa * (kappa + 1.0),
            HKernelFamily::ShiftedLog => xi / v,
            HKernelFamily::AffineLogDegenerate { c2, .. } => c2 * c2,
            HKernelFamily::Quadrature(_) => 0.0,
        }
    }

    /// Whether `ν` vanishes identically (then the weight constraints on the
    /// system construction are vacuous).
    pub fn nu_identically_zero(&self) -> bool {
        match &self.family {
            HKernelFamily::LogKappa { kappa } => *kappa == 0.0,
            HKernelFamily::ExpKappa { kappa } => *kappa == 0.0 || *kappa == -1.0,
            HKernelFamily::ShiftedLog => false,
            HKernelFamily::AffineLogDegenerate { c2, .. } => *c2 == 0.0,
            HKernelFamily::Quadrature(_) => true,
        }
    }

    /// Derivative of the constant series coefficient `a₀(w)` of the
    /// diagonal-normalized kernel; `None` when it is only defined relative to
    /// an anchor (quadrature family).
    pub fn a0_prime(&self, w: f64) -> Option<f64> {
        match &self.family {
            HKernelFamily::LogKappa { .. }
            | HKernelFamily::ExpKappa { .. }
            | HKernelFamily::AffineLogDegenerate { .. } => Some(0.0),
            // a₀(w) = −(w+1) log w for the normalized orientation.
            HKernelFamily::ShiftedLog => Some(-w.ln() - (w + 1.0) / w),
            HKernelFamily::Quadrature(_) => None,
        }
    }

    /// Order-5 jet in `(x, ε)` of `ε · h_v(x, x−ε)` for the normalized
    /// kernel: division by ε is exact, so the coefficient grid carries the
    /// near-diagonal series coefficients `aᵢ` and their x-derivatives with no
    /// extrapolation error.
    pub fn series_g_jet(&self, x0: f64) -> Result<Jet, KernelError> {
        match &self.family {
            HKernelFamily::LogKappa { kappa } => {
                // h_v = −κ − 1/ε at v = x−ε: ε h_v = −κε − 1.
                let e = Jet::variable(2, 5, 1, 0.0)?;
                Ok(e.scale(-kappa).add_scalar(-1.0))
            }
            HKernelFamily::AffineLogDegenerate { c2, .. } => {
                let e = Jet::variable(2, 5, 1, 0.0)?;
                Ok(e.scale(-c2).add_scalar(-1.0))
            }
            HKernelFamily::ExpKappa { kappa } => {
                // ε h_v(x, x−ε) = −κε − ε e^ε/(e^ε − 1); the last factor is
                // e^ε / ((e^ε − 1)/ε) with an exact jet division.
                let e = Jet::variable(2, 6, 1, 0.0)?;
                let em1_over_eps = e.exp().add_scalar(-1.0).divide_by_var(1)?;
                let e5 = e.truncate(5)?;
                let ee = e5.exp().try_mul(&em1_over_eps.recip()?)?;
                Ok(&e5.scale(-kappa) - &ee)
            }
            HKernelFamily::ShiftedLog => {
                // Normalized h_v(x,v) = 1/(v−x) − (x+1)/v at v = x−ε:
                // ε h_v = −1 − ε(x+1)/(x−ε).
                if x0.abs() < 1e-9 {
                    return Err(KernelError::Domain("series expansion point too close to 0".into()));
                }
                let x = Jet::variable(2, 5, 0, x0)?;
                let e = Jet::variable(2, 5, 1, 0.0)?;
                let frac = e
                    .try_mul(&x.add_scalar(1.0))?
                    .try_mul(&(&x - &e).recip()?)?;
                Ok((-&frac).add_scalar(-1.0))
            }
            HKernelFamily::Quadrature(_) => {
                let table = self.table.as_ref().expect("built in Kernel::new");
                quadrature::series_g_jet(table, x0)
            }
        }
    }

    /// Diagonal-normalized kernel value, `None` for the quadrature family
    /// (whose normalized value is anchor-relative; use
    /// [`quadrature::normalized_value_diff`]).
    pub fn normalized_value(&self, x: f64, v: f64) -> Result<Option<f64>, KernelError> {
        match &self.family {
            HKernelFamily::Quadrature(_) => Ok(None),
            _ => Ok(Some(self.orientation() * self.h_value(x, v)?)),
        }
    }
}

/// Deterministic generator for sample points.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in `[0, 1)` built from the top 53 bits of the stream, so the
/// value sequence is reproducible across platforms and crate versions.
pub fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
}

pub fn uniform_in(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    range[0] + (range[1] - range[0]) * unit_f64(rng)
}

/// Draw `n` tuples whose k-th coordinate comes from the range selected by
/// `slots[k]`, with all pairwise coordinate distances at least
/// `plan.min_sep`. Rejection sampling; errors out rather than degrading the
/// guard when the geometry makes the constraint too tight.
pub fn sample_tuples(
    plan: &SamplePlan,
    slots: &[Slot],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, KernelError> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(n);
    let max_tries = 10_000usize.saturating_mul(n.max(1));
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > max_tries {
            return Err(KernelError::Sampling(format!(
                "gave up after {max_tries} tries: separation {} too tight for {:?}/{:?}",
                plan.min_sep, plan.xi, plan.u
            )));
        }
        let tuple: Vec<f64> = slots
            .iter()
            .map(|s| uniform_in(&mut rng, match s {
                Slot::Xi => plan.xi,
                Slot::U => plan.u,
            }))
            .collect();
        let ok = tuple
            .iter()
            .enumerate()
            .all(|(i, a)| tuple[..i].iter().all(|b| (a - b).abs() >= plan.min_sep));
        if ok {
            out.push(tuple);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stored_jets_match_direct_partials() {
        let kernels = [
            Kernel::new(HKernelFamily::LogKappa { kappa: 0.7 }).unwrap(),
            Kernel::new(HKernelFamily::ExpKappa { kappa: -0.4 }).unwrap(),
            Kernel::new(HKernelFamily::ShiftedLog).unwrap(),
            Kernel::new(HKernelFamily::AffineLogDegenerate { c1: 0.3, c2: 1.1, c3: 2.0 })
                .unwrap(),
        ];
        for k in &kernels {
            let plan = k.sample_plan();
            let (xi, u) = (plan.xi[0] + 0.6, plan.u[0] + 1.4);
            let j = k.h_jet(xi, u, 2).unwrap();
            let (hx, hu) = k.partials(xi, u).unwrap();
            assert!((j.value() - k.h_value(xi, u).unwrap()).abs() < 1e-12, "{}", k.name());
            assert!((j.partial(&[1, 0]).unwrap() - hx).abs() < 1e-11, "{}", k.name());
            assert!((j.partial(&[0, 1]).unwrap() - hu).abs() < 1e-11, "{}", k.name());
        }
    }

    #[test]
    fn coincident_arguments_are_rejected() {
        let k = Kernel::new(HKernelFamily::LogKappa { kappa: 1.0 }).unwrap();
        assert!(matches!(k.h_value(1.0, 1.0), Err(KernelError::Domain(_))));
        let k = Kernel::new(HKernelFamily::ShiftedLog).unwrap();
        assert!(matches!(k.h_value(0.5, -1.0), Err(KernelError::Domain(_))));
    }

    #[test]
    fn zero_c3_is_rejected() {
        assert!(matches!(
            Kernel::new(HKernelFamily::AffineLogDegenerate { c1: 0.0, c2: 1.0, c3: 0.0 }),
            Err(KernelError::Config(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_separated() {
        let k = Kernel::new(HKernelFamily::LogKappa { kappa: 0.5 }).unwrap();
        let plan = k.sample_plan();
        let slots = [Slot::Xi, Slot::U, Slot::U, Slot::U];
        let a = sample_tuples(&plan, &slots, 50, 42).unwrap();
        let b = sample_tuples(&plan, &slots, 50, 42).unwrap();
        assert_eq!(a, b);
        for t in &a {
            for i in 0..t.len() {
                for j in 0..i {
                    assert!((t[i] - t[j]).abs() >= plan.min_sep);
                }
            }
        }
        let c = sample_tuples(&plan, &slots, 50, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unit_f64_spans_unit_interval() {
        let mut rng = seeded_rng(7);
        let mut lo = 1.0f64;
        let mut hi = 0.0f64;
        for _ in 0..1000 {
            let v = unit_f64(&mut rng);
            assert!((0.0..1.0).contains(&v));
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!(lo < 0.05 && hi > 0.95);
    }
}
