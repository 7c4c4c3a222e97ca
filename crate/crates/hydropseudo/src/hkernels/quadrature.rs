//! The quadrature-defined kernel family.
//!
//! This family is not closed-form: the kernel is assembled from a cubic
//! `P(x) = k0 + k1 x + k2 x² + k3 x³`, a companion quadratic
//! `Q(x) = -k3 x² + z1 x + z0`, and three auxiliary functions obtained by
//! integration:
//!
//! * a characteristic branch `φ(ξ)` solving `φ' = P(φ) μ`, `μ' = Q(φ) μ²`
//!   (so `μ` plays the role of `M(φ(ξ))` up to the branch normalization);
//! * a weight `M(u) = exp ∫ Q/P` on the field side, normalized to
//!   `M(c) = 1` at a base point `c`;
//! * an additive term `B(u) = ∫ (k3 u + k2 + z1) M(u) du`, `B(c) = 0`.
//!
//! In stored form the kernel's two first partials are closed expressions in
//! these branch functions,
//!
//! ```text
//! h_u(ξ, u)  =  M(u) / ((u - φ(ξ)) μ(ξ))
//! h_ξ(ξ, u)  =  B(u) - P(u) M(u) / (u - φ(ξ))
//! ```
//!
//! and the value itself is recovered by quadrature of `h_u` from the base
//! point plus a `ξ`-only term `W(ξ)` accumulated along the branch
//! (`W' = P(c) M(c) / (φ - c)`). Equality of the mixed partials of the two
//! expressions above is an ODE identity (`B' = (k3 u + k2 + z1) M`), which a
//! property test checks directly on the assembled jets.
//!
//! All admissible arguments keep `u` and `φ(ξ)` in disjoint intervals, so the
//! `u - φ(ξ)` denominators never vanish; [`PhiTable::build`] validates that
//! geometry once and the evaluators only need cheap guards afterwards.

use crate::jets::{graded_alphas, Jet};
use crate::numerics::ode::{integrate_from_anchor, DenseOde, OdeOptions};
use crate::numerics::quad;

use super::KernelError;

/// Defining data of a quadrature-family kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureSpec {
    /// Cubic coefficients `k0..k3` of `P`.
    pub p: [f64; 4],
    /// Constant and linear coefficients `z0, z1` of `Q = -k3 x² + z1 x + z0`.
    pub z: [f64; 2],
    /// Base point `c` of the `u`-side integrals (`M(c) = 1`, `B(c) = 0`).
    pub base_point: f64,
    /// Branch anchor: `φ(xi0) = phi0`, `μ(xi0) = mu0`.
    pub xi0: f64,
    pub phi0: f64,
    pub mu0: f64,
    /// Admissible spectral arguments.
    pub xi_domain: [f64; 2],
    /// Admissible field arguments.
    pub u_domain: [f64; 2],
}

impl QuadratureSpec {
    pub fn p_at(&self, x: f64) -> f64 {
        self.p[0] + x * (self.p[1] + x * (self.p[2] + x * self.p[3]))
    }

    pub fn p_prime_at(&self, x: f64) -> f64 {
        self.p[1] + x * (2.0 * self.p[2] + x * 3.0 * self.p[3])
    }

    pub fn q_at(&self, x: f64) -> f64 {
        -self.p[3] * x * x + self.z[1] * x + self.z[0]
    }

    /// `Q + P'/3`, the affine polynomial steering the leading series
    /// coefficient along the branch.
    pub fn zhat_at(&self, x: f64) -> f64 {
        (self.z[1] + 2.0 * self.p[2] / 3.0) * x + self.z[0] + self.p[1] / 3.0
    }

    /// Integrand factor of `B`: `k3 x + k2 + z1`.
    fn b_factor(&self, x: f64) -> f64 {
        self.p[3] * x + self.p[2] + self.z[1]
    }

    /// Taylor coefficients of `P` at `x0`.
    fn p_taylor(&self, x0: f64) -> [f64; 4] {
        [
            self.p_at(x0),
            self.p_prime_at(x0),
            self.p[2] + 3.0 * self.p[3] * x0,
            self.p[3],
        ]
    }

    /// Taylor coefficients of `Q` at `x0`.
    fn q_taylor(&self, x0: f64) -> [f64; 3] {
        [
            self.q_at(x0),
            -2.0 * self.p[3] * x0 + self.z[1],
            -self.p[3],
        ]
    }
}

/// Named, build-time-validated parameter sets used by tests and the CLI.
pub fn preset(name: &str) -> Option<QuadratureSpec> {
    match name {
        // P has no roots at all; generic affine Q.
        "unit-p" => Some(QuadratureSpec {
            p: [1.0, 0.0, 0.0, 0.0],
            z: [0.3, -0.2],
            base_point: 2.5,
            xi0: 2.5,
            phi0: -1.0,
            mu0: 0.6,
            xi_domain: [1.0, 4.0],
            u_domain: [1.5, 3.5],
        }),
        // P = x² - x; Q chosen so the additive term B vanishes identically.
        "two-roots-half" => Some(QuadratureSpec {
            p: [0.0, -1.0, 1.0, 0.0],
            z: [0.5, -1.0],
            base_point: 2.0,
            xi0: 2.4,
            phi0: 0.5,
            mu0: 1.0,
            xi_domain: [1.5, 3.3],
            u_domain: [1.6, 3.2],
        }),
        // P = x² - x with Q + P'/3 = 0: the branch with vanishing leading
        // series coefficient.
        "two-roots-zhat0" => Some(QuadratureSpec {
            p: [0.0, -1.0, 1.0, 0.0],
            z: [1.0 / 3.0, -2.0 / 3.0],
            base_point: 2.0,
            xi0: 2.4,
            phi0: 0.5,
            mu0: 1.0,
            xi_domain: [1.5, 3.3],
            u_domain: [1.6, 3.2],
        }),
        _ => None,
    }
}

/// Dense tables of the branch functions plus validation metadata.
#[derive(Clone, Debug)]
pub struct PhiTable {
    spec: QuadratureSpec,
    /// State `[φ, μ, W, B∘φ]` over the ξ-domain.
    xi_branch: DenseOde,
    /// State `[log M, B]` over the u-domain.
    u_branch: DenseOde,
    phi_range: [f64; 2],
    /// Max |φ| drift against a re-integration at tighter tolerance.
    pub refinement_drift: f64,
}

const TABLE_OPTS: OdeOptions = OdeOptions {
    rtol: 1e-12,
    atol: 1e-14,
    h_max: 0.005,
    max_steps: 4_000_000,
};

impl PhiTable {
    pub fn build(spec: &QuadratureSpec) -> Result<PhiTable, KernelError> {
        let s = spec.clone();
        let [xlo, xhi] = s.xi_domain;
        let [ulo, uhi] = s.u_domain;
        if !(xlo < xhi) || !(ulo < uhi) {
            return Err(KernelError::Config("domains must be nonempty intervals".into()));
        }
        if !(xlo..=xhi).contains(&s.xi0) {
            return Err(KernelError::Config(format!(
                "branch anchor xi0 = {} outside the xi-domain [{xlo}, {xhi}]",
                s.xi0
            )));
        }
        if !(ulo..=uhi).contains(&s.base_point) {
            return Err(KernelError::Config(format!(
                "base point c = {} outside the u-domain [{ulo}, {uhi}]",
                s.base_point
            )));
        }
        if s.mu0 == 0.0 {
            return Err(KernelError::Config("branch normalization mu0 must be nonzero".into()));
        }
        // P must have no root on the u-interval: M and B integrate Q/P there.
        // Detect roots by sign change on a fine grid, plus a magnitude floor
        // against tangency and near-roots.
        let mut min_p = f64::INFINITY;
        let mut max_p: f64 = 0.0;
        let mut prev_sign = 0.0f64;
        for i in 0..=2048 {
            let u = ulo + (uhi - ulo) * i as f64 / 2048.0;
            let v = s.p_at(u);
            let a = v.abs();
            min_p = min_p.min(a);
            max_p = max_p.max(a);
            let sg = v.signum();
            if v == 0.0 || (prev_sign != 0.0 && sg != prev_sign) {
                return Err(KernelError::Config(format!(
                    "P vanishes on the u-domain near u = {u}; \
                     the weight M is not defined across a root"
                )));
            }
            prev_sign = sg;
        }
        if min_p < 1e-6 * max_p.max(1.0) {
            return Err(KernelError::Config(format!(
                "P vanishes on the u-domain (min |P| = {min_p:e}); \
                 the weight M is not defined across a root"
            )));
        }

        let su = s.clone();
        let u_branch = integrate_from_anchor(
            move |x, y, dy| {
                dy[0] = su.q_at(x) / su.p_at(x);
                dy[1] = su.b_factor(x) * y[0].exp();
            },
            s.base_point,
            ulo,
            uhi,
            &[0.0, 0.0],
            &TABLE_OPTS,
        )?;

        let sx = s.clone();
        let xi_rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
            let (phi, mu) = (y[0], y[1]);
            let pf = sx.p_at(phi);
            dy[0] = pf * mu;
            dy[1] = sx.q_at(phi) * mu * mu;
            // W' = P(c) M(c) / (φ - c) with M(c) = 1. The branch must stay
            // away from c; feeding NaN aborts the integration cleanly if not.
            let gap = phi - sx.base_point;
            dy[2] = if gap.abs() < 1e-9 { f64::NAN } else { sx.p_at(sx.base_point) / gap };
            dy[3] = sx.b_factor(phi) * pf * mu * mu;
        };
        let anchor_state = [s.phi0, s.mu0, 0.0, 0.0];
        let xi_branch =
            integrate_from_anchor(xi_rhs.clone(), s.xi0, xlo, xhi, &anchor_state, &TABLE_OPTS)?;

        // The branch must be strictly monotone so u- and φ-intervals can be
        // kept apart by interval arithmetic alone.
        let mut phi_min = f64::INFINITY;
        let mut phi_max = f64::NEG_INFINITY;
        let mut sign = 0.0f64;
        for i in 0..xi_branch.node_count() {
            let (_, y, f) = xi_branch.node(i);
            phi_min = phi_min.min(y[0]);
            phi_max = phi_max.max(y[0]);
            let sg = f[0].signum();
            if sign == 0.0 {
                sign = sg;
            } else if sg != sign || f[0].abs() < 1e-12 {
                return Err(KernelError::Config(
                    "characteristic branch is not strictly monotone over the xi-domain".into(),
                ));
            }
        }
        let sep = if phi_max < ulo {
            ulo - phi_max
        } else if phi_min > uhi {
            phi_min - uhi
        } else {
            return Err(KernelError::Config(format!(
                "branch range [{phi_min}, {phi_max}] overlaps the u-domain [{ulo}, {uhi}]"
            )));
        };
        if sep < 1e-3 * (uhi - ulo) {
            return Err(KernelError::Config(format!(
                "branch range [{phi_min}, {phi_max}] approaches the u-domain \
                 [{ulo}, {uhi}] within {sep:e}"
            )));
        }

        // Curvature consistency: φ'' from the (P', Q) form must match the
        // (2P'/3 + Zhat)/P form at every node. The two are algebraically
        // equal; the check pins the Zhat bookkeeping.
        for i in 0..xi_branch.node_count() {
            let (_, y, f) = xi_branch.node(i);
            let (phi, mu) = (y[0], y[1]);
            let dphi = f[0];
            let lhs = (s.p_prime_at(phi) + s.q_at(phi)) * mu * dphi;
            let rhs = (2.0 * s.p_prime_at(phi) / 3.0 + s.zhat_at(phi)) / s.p_at(phi)
                * dphi
                * dphi;
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            if (lhs - rhs).abs() > 1e-9 * scale {
                return Err(KernelError::Config(format!(
                    "branch curvature forms disagree at φ = {phi}: {lhs} vs {rhs}"
                )));
            }
        }

        // Refinement drift: integrate again at tighter tolerance and smaller
        // step cap, compare φ at probe points.
        let fine = OdeOptions {
            rtol: TABLE_OPTS.rtol / 16.0,
            atol: TABLE_OPTS.atol / 16.0,
            h_max: TABLE_OPTS.h_max / 2.0,
            max_steps: TABLE_OPTS.max_steps,
        };
        let xi_fine =
            integrate_from_anchor(xi_rhs, s.xi0, xlo, xhi, &anchor_state, &fine)?;
        let mut drift = 0.0f64;
        for i in 0..=32 {
            let xi = xlo + (xhi - xlo) * i as f64 / 32.0;
            let a = xi_branch.eval(xi)?;
            let b = xi_fine.eval(xi)?;
            drift = drift.max((a[0] - b[0]).abs());
        }
        if drift > 1e-9 {
            return Err(KernelError::Config(format!(
                "branch integration is not converged (refinement drift {drift:e})"
            )));
        }

        Ok(PhiTable {
            spec: s,
            xi_branch,
            u_branch,
            phi_range: [phi_min, phi_max],
            refinement_drift: drift,
        })
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    pub fn phi_range(&self) -> [f64; 2] {
        self.phi_range
    }

    /// `[φ, μ, W, B∘φ]` at a spectral argument.
    pub fn phi_state(&self, xi: f64) -> Result<[f64; 4], KernelError> {
        let y = self.xi_branch.eval(xi)?;
        Ok([y[0], y[1], y[2], y[3]])
    }

    /// `[M, B]` at a field argument.
    pub fn mb_state(&self, u: f64) -> Result<[f64; 2], KernelError> {
        let y = self.u_branch.eval(u)?;
        Ok([y[0].exp(), y[1]])
    }
}

/// Stored-form first partials `(h_ξ, h_u)` at `(ξ, u)`.
pub fn stored_partials(table: &PhiTable, xi: f64, u: f64) -> Result<(f64, f64), KernelError> {
    let [phi, mu, _, _] = table.phi_state(xi)?;
    let [m, b] = table.mb_state(u)?;
    let gap = u - phi;
    let h_u = m / (gap * mu);
    let h_xi = b - table.spec.p_at(u) * m / gap;
    Ok((h_xi, h_u))
}

/// Stored-form kernel value at `(ξ, u)`: `W(ξ) + ∫_c^u h_u(ξ, t) dt`.
pub fn stored_value(table: &PhiTable, xi: f64, u: f64) -> Result<f64, KernelError> {
    let [phi, mu, w, _] = table.phi_state(xi)?;
    let (integral, _) = quad::integrate(
        |t| {
            let ell = table.u_branch.eval(t).map(|y| y[0]).unwrap_or(f64::NAN);
            ell.exp() / (t - phi)
        },
        table.spec.base_point,
        u,
        1e-11,
        1e-11,
    )?;
    Ok(w + integral / mu)
}

/// Taylor coefficients (in ξ) of `φ`, `μ`, and `B∘φ` from the branch ODEs,
/// seeded with their values at the expansion point.
fn phi_branch_taylor(
    spec: &QuadratureSpec,
    phi: f64,
    mu: f64,
    bphi: f64,
    order: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut p = vec![phi];
    let mut m = vec![mu];
    let mut bb = vec![bphi];
    for k in 0..order {
        let pj = Jet::from_univariate(&p, k).expect("1-var shapes are valid");
        let mj = Jet::from_univariate(&m, k).expect("1-var shapes are valid");
        let p_of = pj.compose_series(&spec.p_taylor(phi));
        let q_of = pj.compose_series(&spec.q_taylor(phi));
        let lin = pj.scale(spec.p[3]).add_scalar(spec.p[2] + spec.z[1]);
        let dphi = &p_of * &mj;
        let dmu = &(&q_of * &mj) * &mj;
        let dbb = &(&lin * &p_of) * &(&mj * &mj);
        let inv = 1.0 / (k + 1) as f64;
        p.push(dphi.raw(&[k]).expect("coefficient in range") * inv);
        m.push(dmu.raw(&[k]).expect("coefficient in range") * inv);
        bb.push(dbb.raw(&[k]).expect("coefficient in range") * inv);
    }
    (p, m, bb)
}

/// Taylor coefficients (in u) of `log M` and `B` at a point with known values.
fn u_branch_taylor(
    spec: &QuadratureSpec,
    u0: f64,
    ell0: f64,
    b0: f64,
    order: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut ell = vec![ell0];
    let mut b = vec![b0];
    for k in 0..order {
        let x = Jet::variable(1, k, 0, u0).expect("1-var shapes are valid");
        let q_of = x.compose_series(&spec.q_taylor(u0));
        let p_of = x.compose_series(&spec.p_taylor(u0));
        let dell = q_of.try_div(&p_of).expect("P is nonzero on the u-domain");
        let ej = Jet::from_univariate(&ell, k).expect("1-var shapes are valid");
        let lin = x.scale(spec.p[3]).add_scalar(spec.p[2] + spec.z[1]);
        let db = &lin * &ej.exp();
        let inv = 1.0 / (k + 1) as f64;
        ell.push(dell.raw(&[k]).expect("coefficient in range") * inv);
        b.push(db.raw(&[k]).expect("coefficient in range") * inv);
    }
    (ell, b)
}

/// Assemble an order-`n` jet of `h` from order-`n` jets of its two first
/// partials plus the value: the `(i, j)` coefficient with `j >= 1` comes from
/// the `u`-partial, the `(i, 0)` coefficients from the `ξ`-partial.
fn assemble_from_partials(order: usize, value: f64, h_x: &Jet, h_v: &Jet) -> Jet {
    let alphas = graded_alphas(2, order);
    let mut coeffs = vec![0.0; alphas.len()];
    for (pos, a) in alphas.iter().enumerate() {
        let (i, j) = (a[0], a[1]);
        coeffs[pos] = if j >= 1 {
            h_v.raw(&[i, j - 1]).expect("source jet has full order") / j as f64
        } else if i >= 1 {
            h_x.raw(&[i - 1, 0]).expect("source jet has full order") / i as f64
        } else {
            value
        };
    }
    Jet::from_coeffs(2, order, coeffs).expect("assembled shape is valid")
}

/// Stored-form kernel jet at `(ξ, u)` (variable 0 = ξ, variable 1 = u).
pub fn stored_h_jet(
    table: &PhiTable,
    xi: f64,
    u: f64,
    order: usize,
) -> Result<Jet, KernelError> {
    let spec = &table.spec;
    let [phi, mu, _, _] = table.phi_state(xi)?;
    let [m, b] = table.mb_state(u)?;
    let (pc, mc, _) = phi_branch_taylor(spec, phi, mu, 0.0, order);
    let (ellc, bc) = u_branch_taylor(spec, u, m.ln(), b, order);

    let xij = Jet::variable(2, order, 0, xi)?;
    let uj = Jet::variable(2, order, 1, u)?;
    let phij = xij.compose_series(&pc);
    let muj = xij.compose_series(&mc);
    let mj = uj.compose_series(&ellc).exp();
    let bj = uj.compose_series(&bc);
    let gap = &uj - &phij;
    let h_u = mj.try_mul(&gap.try_mul(&muj)?.recip()?)?;
    let p_u = uj.compose_series(&spec.p_taylor(u));
    let h_xi = &bj - &p_u.try_mul(&mj.try_mul(&gap.recip()?)?)?;
    let value = stored_value(table, xi, u)?;
    Ok(assemble_from_partials(order, value, &h_xi, &h_u))
}

/// Diagonal-normalized kernel jet at `(x, v)` — the kernel pulled back to
/// spectral coordinates in both slots, whose expansion about the diagonal has
/// unit logarithmic part. The value slot is 0: in this family the kernel
/// value is only defined up to a function of the expansion anchor, and no
/// identity checked against this jet consumes the value.
pub fn normalized_h_jet(
    table: &PhiTable,
    x: f64,
    v: f64,
    order: usize,
) -> Result<Jet, KernelError> {
    let spec = &table.spec;
    let [phix, mux, _, _] = table.phi_state(x)?;
    let [phiv, muv, _, bphiv] = table.phi_state(v)?;
    if (phiv - phix).abs() < 1e-10 {
        return Err(KernelError::Domain(format!(
            "normalized kernel arguments x = {x}, v = {v} are too close"
        )));
    }
    let (pcx, mcx, _) = phi_branch_taylor(spec, phix, mux, 0.0, order);
    let (pcv, mcv, bcv) = phi_branch_taylor(spec, phiv, muv, bphiv, order);

    let xj = Jet::variable(2, order, 0, x)?;
    let vj = Jet::variable(2, order, 1, v)?;
    let phixj = xj.compose_series(&pcx);
    let muxj = xj.compose_series(&mcx);
    let phivj = vj.compose_series(&pcv);
    let muvj = vj.compose_series(&mcv);
    let bphivj = vj.compose_series(&bcv);
    let p_phiv = phivj.compose_series(&spec.p_taylor(phiv));
    let gap = &phivj - &phixj;

    let h_v = p_phiv
        .try_mul(&muvj.try_mul(&muvj)?)?
        .try_mul(&gap.try_mul(&muxj)?.recip()?)?;
    let h_x = &bphivj - &p_phiv.try_mul(&muvj.try_mul(&gap.recip()?)?)?;
    Ok(assemble_from_partials(order, 0.0, &h_x, &h_v))
}

/// Difference of normalized kernel values `h(x, v1) - h(x, v0)`, obtained by
/// integrating the `v`-partial along the spectral axis. Differences are
/// anchor-independent, unlike the values themselves.
pub fn normalized_value_diff(
    table: &PhiTable,
    x: f64,
    v0: f64,
    v1: f64,
) -> Result<f64, KernelError> {
    let [phix, mux, _, _] = table.phi_state(x)?;
    let spec = table.spec.clone();
    let (integral, _) = quad::integrate(
        |zeta| match table.phi_state(zeta) {
            Ok([phi, mu, _, _]) => spec.p_at(phi) * mu * mu / ((phi - phix) * mux),
            Err(_) => f64::NAN,
        },
        v0,
        v1,
        1e-11,
        1e-11,
    )?;
    Ok(integral)
}

/// Order-5 jet in `(x, ε)` of `ε · h_v(x, x - ε)` for the normalized kernel:
/// the generating object for the near-diagonal series coefficients. The
/// leading `1/ε` of `h_v` is removed exactly by jet division, using the fact
/// that the `ε⁰` slice of `φ(x-ε) - φ(x)` cancels bitwise.
pub fn series_g_jet(table: &PhiTable, x0: f64) -> Result<Jet, KernelError> {
    let spec = &table.spec;
    let [phi, mu, _, _] = table.phi_state(x0)?;
    let (pc, mc, _) = phi_branch_taylor(spec, phi, mu, 0.0, 6);

    let xj = Jet::variable(2, 6, 0, x0)?;
    let ej = Jet::variable(2, 6, 1, 0.0)?;
    let xme = &xj - &ej; // value x0: composition expands in (x - x0) - ε
    let phiv = xme.compose_series(&pc);
    let phix = xj.compose_series(&pc);
    let d = &phiv - &phix;
    let d_tilde = d.divide_by_var(1)?; // (φ(x-ε) - φ(x)) / ε, order 5

    let phiv5 = phiv.truncate(5)?;
    let muv5 = xme.compose_series(&mc).truncate(5)?;
    let mux5 = xj.compose_series(&mc).truncate(5)?;
    let p_phiv = phiv5.compose_series(&spec.p_taylor(phiv5.value()));
    let g = p_phiv
        .try_mul(&muv5.try_mul(&muv5)?)?
        .try_mul(&d_tilde.try_mul(&mux5)?.recip()?)?;
    Ok(g)
}
