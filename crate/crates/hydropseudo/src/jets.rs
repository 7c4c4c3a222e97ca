//! Dense truncated Taylor arithmetic ("jets") in one to three variables.
//!
//! A [`Jet`] stores the normalized Taylor coefficients `∂^α f(x₀) / α!` of a
//! scalar function at an (implicit) expansion point, for every multi-index
//! `α` with `|α| <= order`. Coefficients are kept in graded-lexicographic
//! order, so the jet is just a flat `Vec<f64>` plus its shape. Arithmetic on
//! jets (ring operations, composition with analytic functions) propagates
//! derivatives exactly up to the truncation order; the only rounding is
//! ordinary f64 rounding of the coefficient arithmetic itself.
//!
//! Orders are capped at 6 and variable counts at 3: the deepest consumer
//! needs mixed partials of total order 6 in two variables (the near-diagonal
//! series extraction before one exact division), and nothing needs more than
//! three independent directions.

use once_cell::sync::Lazy;
use thiserror::Error;

/// Largest supported number of independent variables.
pub const MAX_VARS: usize = 3;
/// Largest supported truncation order.
pub const MAX_ORDER: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum JetError {
    #[error("jets support 1..={MAX_VARS} variables, got {0}")]
    VarCount(usize),
    #[error("jet order is capped at {MAX_ORDER}, got {0}")]
    OrderCap(usize),
    #[error("variable index {index} out of range for {num_vars} variables")]
    VarIndex { index: usize, num_vars: usize },
    #[error("operand shapes differ: {0} vars order {1} vs {2} vars order {3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("jet value is a singular point of {0}")]
    SingularValue(&'static str),
    #[error(
        "division by variable {var} leaves residual coefficient {coeff:e} \
         on a monomial free of that variable"
    )]
    NotDivisible { var: usize, coeff: f64 },
    #[error("multi-index {0:?} exceeds jet shape")]
    BadIndex(Vec<usize>),
    #[error("cannot lower order below zero")]
    OrderUnderflow,
}

const SENTINEL: u16 = u16::MAX;

struct IndexTable {
    /// Multi-indices in graded-lex order, padded to three entries.
    alphas: Vec<[u8; 3]>,
    /// Total degree of each entry.
    degs: Vec<u8>,
    /// Packed multi-index -> position, `SENTINEL` when out of range.
    pos: [u16; 343],
    /// Number of entries with degree <= m.
    len_by_order: [usize; MAX_ORDER + 1],
}

fn pack(a: [u8; 3]) -> usize {
    a[0] as usize + 7 * a[1] as usize + 49 * a[2] as usize
}

fn build_table(nv: usize) -> IndexTable {
    let mut alphas: Vec<[u8; 3]> = Vec::new();
    for d in 0..=MAX_ORDER as u8 {
        match nv {
            1 => alphas.push([d, 0, 0]),
            2 => {
                for a0 in (0..=d).rev() {
                    alphas.push([a0, d - a0, 0]);
                }
            }
            3 => {
                for a0 in (0..=d).rev() {
                    for a1 in (0..=(d - a0)).rev() {
                        alphas.push([a0, a1, d - a0 - a1]);
                    }
                }
            }
            _ => unreachable!("variable count validated by callers"),
        }
    }
    let degs: Vec<u8> = alphas.iter().map(|a| a[0] + a[1] + a[2]).collect();
    let mut pos = [SENTINEL; 343];
    for (i, a) in alphas.iter().enumerate() {
        pos[pack(*a)] = i as u16;
    }
    let mut len_by_order = [0usize; MAX_ORDER + 1];
    for m in 0..=MAX_ORDER {
        len_by_order[m] = degs.iter().filter(|&&d| (d as usize) <= m).count();
    }
    IndexTable { alphas, degs, pos, len_by_order }
}

static TABLES: Lazy<[IndexTable; MAX_VARS]> =
    Lazy::new(|| [build_table(1), build_table(2), build_table(3)]);

/// Truncated Taylor expansion of a scalar function.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    num_vars: usize,
    order: usize,
    coeffs: Vec<f64>,
}

fn check_shape(num_vars: usize, order: usize) -> Result<(), JetError> {
    if num_vars == 0 || num_vars > MAX_VARS {
        return Err(JetError::VarCount(num_vars));
    }
    if order > MAX_ORDER {
        return Err(JetError::OrderCap(order));
    }
    Ok(())
}

impl Jet {
    fn table(&self) -> &'static IndexTable {
        &TABLES[self.num_vars - 1]
    }

    fn len_for(num_vars: usize, order: usize) -> usize {
        TABLES[num_vars - 1].len_by_order[order]
    }

    /// Jet of a constant function.
    pub fn constant(num_vars: usize, order: usize, value: f64) -> Result<Self, JetError> {
        check_shape(num_vars, order)?;
        let mut coeffs = vec![0.0; Self::len_for(num_vars, order)];
        coeffs[0] = value;
        Ok(Jet { num_vars, order, coeffs })
    }

    /// Jet of the coordinate function `x_var`, expanded where it takes `value`.
    pub fn variable(
        num_vars: usize,
        order: usize,
        var: usize,
        value: f64,
    ) -> Result<Self, JetError> {
        check_shape(num_vars, order)?;
        if var >= num_vars {
            return Err(JetError::VarIndex { index: var, num_vars });
        }
        let mut jet = Self::constant(num_vars, order, value)?;
        if order >= 1 {
            let mut e = [0u8; 3];
            e[var] = 1;
            let p = jet.table().pos[pack(e)] as usize;
            jet.coeffs[p] = 1.0;
        }
        Ok(jet)
    }

    /// 1-variable jet from raw Taylor coefficients (missing entries are zero,
    /// extra entries beyond `order` are dropped).
    pub fn from_univariate(coeffs: &[f64], order: usize) -> Result<Self, JetError> {
        check_shape(1, order)?;
        let mut c = vec![0.0; order + 1];
        for (k, v) in coeffs.iter().take(order + 1).enumerate() {
            c[k] = *v;
        }
        Ok(Jet { num_vars: 1, order, coeffs: c })
    }

    /// Jet from a full coefficient vector in storage order.
    pub fn from_coeffs(num_vars: usize, order: usize, coeffs: Vec<f64>) -> Result<Self, JetError> {
        check_shape(num_vars, order)?;
        let want = Self::len_for(num_vars, order);
        if coeffs.len() != want {
            return Err(JetError::BadIndex(vec![coeffs.len(), want]));
        }
        Ok(Jet { num_vars, order, coeffs })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Function value (the degree-zero coefficient).
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// All normalized coefficients in graded-lex order.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    fn position(&self, alpha: &[usize]) -> Result<usize, JetError> {
        if alpha.len() != self.num_vars {
            return Err(JetError::BadIndex(alpha.to_vec()));
        }
        let mut a = [0u8; 3];
        let mut total = 0usize;
        for (k, &v) in alpha.iter().enumerate() {
            if v > MAX_ORDER {
                return Err(JetError::BadIndex(alpha.to_vec()));
            }
            a[k] = v as u8;
            total += v;
        }
        if total > self.order {
            return Err(JetError::BadIndex(alpha.to_vec()));
        }
        Ok(self.table().pos[pack(a)] as usize)
    }

    /// Normalized coefficient `∂^α f / α!`.
    pub fn raw(&self, alpha: &[usize]) -> Result<f64, JetError> {
        Ok(self.coeffs[self.position(alpha)?])
    }

    /// Partial derivative `∂^α f` (the raw coefficient times `α!`).
    pub fn partial(&self, alpha: &[usize]) -> Result<f64, JetError> {
        let mut fact = 1.0;
        for &v in alpha {
            for k in 2..=v {
                fact *= k as f64;
            }
        }
        Ok(self.raw(alpha)? * fact)
    }

    fn same_shape(&self, rhs: &Jet) -> Result<(), JetError> {
        if self.num_vars != rhs.num_vars || self.order != rhs.order {
            return Err(JetError::ShapeMismatch(
                self.num_vars,
                self.order,
                rhs.num_vars,
                rhs.order,
            ));
        }
        Ok(())
    }

    pub fn try_add(&self, rhs: &Jet) -> Result<Jet, JetError> {
        self.same_shape(rhs)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Jet { num_vars: self.num_vars, order: self.order, coeffs })
    }

    pub fn try_sub(&self, rhs: &Jet) -> Result<Jet, JetError> {
        self.same_shape(rhs)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Jet { num_vars: self.num_vars, order: self.order, coeffs })
    }

    /// Truncated product.
    pub fn try_mul(&self, rhs: &Jet) -> Result<Jet, JetError> {
        self.same_shape(rhs)?;
        let t = self.table();
        let n = self.coeffs.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let ci = self.coeffs[i];
            if ci == 0.0 {
                continue;
            }
            let di = t.degs[i] as usize;
            let ai = t.alphas[i];
            // Entries are sorted by degree, so the admissible js are a prefix.
            let jmax = t.len_by_order[self.order - di];
            for j in 0..jmax {
                let cj = rhs.coeffs[j];
                if cj == 0.0 {
                    continue;
                }
                let aj = t.alphas[j];
                let packed = (ai[0] + aj[0]) as usize
                    + 7 * (ai[1] + aj[1]) as usize
                    + 49 * (ai[2] + aj[2]) as usize;
                out[t.pos[packed] as usize] += ci * cj;
            }
        }
        Ok(Jet { num_vars: self.num_vars, order: self.order, coeffs: out })
    }

    pub fn try_div(&self, rhs: &Jet) -> Result<Jet, JetError> {
        self.try_mul(&rhs.recip()?)
    }

    pub fn scale(&self, s: f64) -> Jet {
        let coeffs = self.coeffs.iter().map(|c| c * s).collect();
        Jet { num_vars: self.num_vars, order: self.order, coeffs }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    /// Horner evaluation of `Σ series[k] (self - value)^k`.
    ///
    /// `series[k]` must be the k-th Taylor coefficient (derivative over k!) of
    /// the outer function at `self.value()`. Terms beyond the jet order cannot
    /// contribute and are ignored.
    pub fn compose_series(&self, series: &[f64]) -> Jet {
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let n = series.len().min(self.order + 1);
        if n == 0 {
            return Jet {
                num_vars: self.num_vars,
                order: self.order,
                coeffs: vec![0.0; self.coeffs.len()],
            };
        }
        let mut r = Jet::constant(self.num_vars, self.order, series[n - 1])
            .expect("shape was validated when self was built");
        for k in (0..n - 1).rev() {
            r = r.try_mul(&delta).expect("shapes match by construction");
            r.coeffs[0] += series[k];
        }
        r
    }

    /// Exponential of the jet.
    pub fn exp(&self) -> Jet {
        let e0 = self.value().exp();
        let mut series = [0.0; MAX_ORDER + 1];
        let mut fact = 1.0; // k!
        for (k, s) in series.iter_mut().enumerate().take(self.order + 1) {
            *s = e0 / fact;
            fact *= (k + 1) as f64;
        }
        self.compose_series(&series[..=self.order])
    }

    /// `log |f|`; the jet value must be nonzero.
    pub fn ln_abs(&self) -> Result<Jet, JetError> {
        let c0 = self.value();
        if c0 == 0.0 {
            return Err(JetError::SingularValue("ln_abs"));
        }
        let mut series = [0.0; MAX_ORDER + 1];
        series[0] = c0.abs().ln();
        let mut p = 1.0; // c0^k
        for (k, s) in series.iter_mut().enumerate().skip(1).take(self.order) {
            p *= c0;
            *s = if k % 2 == 1 { 1.0 } else { -1.0 } / (k as f64 * p);
        }
        Ok(self.compose_series(&series[..=self.order]))
    }

    /// Multiplicative inverse; the jet value must be nonzero.
    pub fn recip(&self) -> Result<Jet, JetError> {
        let c0 = self.value();
        if c0 == 0.0 {
            return Err(JetError::SingularValue("recip"));
        }
        let mut series = [0.0; MAX_ORDER + 1];
        let mut p = 1.0 / c0;
        for s in series.iter_mut().take(self.order + 1) {
            *s = p;
            p /= -c0;
        }
        Ok(self.compose_series(&series[..=self.order]))
    }

    /// Integer power. Non-negative exponents work for any value (polynomial
    /// route); negative exponents require a nonzero value.
    pub fn powi(&self, n: i32) -> Result<Jet, JetError> {
        if n < 0 {
            return self.recip()?.powi(-n);
        }
        let mut acc = Jet::constant(self.num_vars, self.order, 1.0)
            .expect("shape was validated when self was built");
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.try_mul(&base)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.try_mul(&base)?;
            }
        }
        Ok(acc)
    }

    /// Real power `f^p`; the jet value must be strictly positive.
    pub fn powf(&self, p: f64) -> Result<Jet, JetError> {
        let c0 = self.value();
        if c0 <= 0.0 {
            return Err(JetError::SingularValue("powf"));
        }
        let mut series = [0.0; MAX_ORDER + 1];
        let mut binom = 1.0;
        for (k, s) in series.iter_mut().enumerate().take(self.order + 1) {
            *s = binom * c0.powf(p - k as f64);
            binom *= (p - k as f64) / (k as f64 + 1.0);
        }
        Ok(self.compose_series(&series[..=self.order]))
    }

    pub fn sqrt(&self) -> Result<Jet, JetError> {
        self.powf(0.5)
    }

    /// Jet of `∂f/∂x_var`, one order lower.
    pub fn partial_jet(&self, var: usize) -> Result<Jet, JetError> {
        if var >= self.num_vars {
            return Err(JetError::VarIndex { index: var, num_vars: self.num_vars });
        }
        if self.order == 0 {
            return Err(JetError::OrderUnderflow);
        }
        let order = self.order - 1;
        let t = self.table();
        let n = t.len_by_order[order];
        let mut coeffs = vec![0.0; n];
        for (b, c) in coeffs.iter_mut().enumerate() {
            let mut a = t.alphas[b];
            a[var] += 1;
            let src = t.pos[pack(a)] as usize;
            *c = self.coeffs[src] * a[var] as f64;
        }
        Ok(Jet { num_vars: self.num_vars, order, coeffs })
    }

    /// Exact division by the coordinate `x_var - x_var0` (the jet of `f / t`
    /// when `f` vanishes identically in that variable's absence).
    ///
    /// Every coefficient on a monomial not containing the variable must be
    /// zero up to rounding noise; otherwise the division is rejected.
    pub fn divide_by_var(&self, var: usize) -> Result<Jet, JetError> {
        if var >= self.num_vars {
            return Err(JetError::VarIndex { index: var, num_vars: self.num_vars });
        }
        if self.order == 0 {
            return Err(JetError::OrderUnderflow);
        }
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let tol = 1e-12 * scale;
        let t = self.table();
        let n_in = self.coeffs.len();
        for i in 0..n_in {
            if t.alphas[i][var] == 0 && self.coeffs[i].abs() > tol {
                return Err(JetError::NotDivisible { var, coeff: self.coeffs[i] });
            }
        }
        let order = self.order - 1;
        let n = t.len_by_order[order];
        let mut coeffs = vec![0.0; n];
        for (b, c) in coeffs.iter_mut().enumerate() {
            let mut a = t.alphas[b];
            a[var] += 1;
            *c = self.coeffs[t.pos[pack(a)] as usize];
        }
        Ok(Jet { num_vars: self.num_vars, order, coeffs })
    }

    /// Copy truncated to a lower (or equal) order.
    pub fn truncate(&self, order: usize) -> Result<Jet, JetError> {
        if order > self.order {
            return Err(JetError::OrderCap(order));
        }
        let n = self.table().len_by_order[order];
        Ok(Jet {
            num_vars: self.num_vars,
            order,
            coeffs: self.coeffs[..n].to_vec(),
        })
    }
}

/// Multi-indices of every monomial of the given jet shape, in the same order
/// as [`Jet::coeffs`]. Entries beyond `num_vars` are zero.
pub fn graded_alphas(num_vars: usize, order: usize) -> Vec<[usize; 3]> {
    check_shape(num_vars, order).expect("shape must be valid");
    let t = &TABLES[num_vars - 1];
    t.alphas[..t.len_by_order[order]]
        .iter()
        .map(|a| [a[0] as usize, a[1] as usize, a[2] as usize])
        .collect()
}

macro_rules! panicking_op {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl std::ops::$trait for &Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                self.$checked(rhs).expect("jet operand shapes must match")
            }
        }
    };
}

panicking_op!(Add, add, try_add);
panicking_op!(Sub, sub, try_sub);
panicking_op!(Mul, mul, try_mul);

impl std::ops::Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_sizes() {
        assert_eq!(Jet::len_for(1, 6), 7);
        assert_eq!(Jet::len_for(2, 6), 28);
        assert_eq!(Jet::len_for(3, 6), 84);
        assert_eq!(Jet::len_for(2, 3), 10);
    }

    #[test]
    fn square_of_coordinate() {
        let x = Jet::variable(1, 2, 0, 3.0).unwrap();
        let sq = x.try_mul(&x).unwrap();
        assert_eq!(sq.coeffs(), &[9.0, 6.0, 1.0]);
    }

    #[test]
    fn log_series_at_one() {
        let x = Jet::variable(1, 5, 0, 1.0).unwrap();
        let l = x.ln_abs().unwrap();
        let expect = [0.0, 1.0, -0.5, 1.0 / 3.0, -0.25, 0.2];
        for (c, e) in l.coeffs().iter().zip(expect) {
            assert!((c - e).abs() < 1e-15, "{c} vs {e}");
        }
    }

    #[test]
    fn exp_of_product_mixed_partial() {
        let x = Jet::variable(2, 4, 0, 0.0).unwrap();
        let y = Jet::variable(2, 4, 1, 0.0).unwrap();
        let f = x.try_mul(&y).unwrap().exp();
        // e^{xy} = 1 + xy + x^2 y^2/2 + ...
        assert!((f.partial(&[1, 1]).unwrap() - 1.0).abs() < 1e-15);
        assert!((f.raw(&[2, 2]).unwrap() - 0.5).abs() < 1e-15);
        assert!(f.raw(&[2, 1]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = Jet::constant(2, 3, 1.0).unwrap();
        let b = Jet::constant(2, 4, 1.0).unwrap();
        assert_eq!(
            a.try_add(&b).unwrap_err(),
            JetError::ShapeMismatch(2, 3, 2, 4)
        );
    }

    #[test]
    fn divide_by_var_roundtrip() {
        let x = Jet::variable(2, 4, 0, 2.0).unwrap();
        let eps = Jet::variable(2, 4, 1, 0.0).unwrap();
        let g = &(&x * &x) + &(&eps * &x);
        let f = &g * &eps;
        let back = f.divide_by_var(1).unwrap();
        let g3 = g.truncate(3).unwrap();
        for (a, b) in back.coeffs().iter().zip(g3.coeffs()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn divide_by_var_rejects_remainder() {
        let x = Jet::variable(2, 3, 0, 2.0).unwrap();
        assert!(matches!(
            x.divide_by_var(1),
            Err(JetError::NotDivisible { var: 1, .. })
        ));
    }

    #[test]
    fn recip_matches_powi() {
        let x = Jet::variable(1, 5, 0, 1.7).unwrap();
        let f = x.add_scalar(0.3);
        let a = f.powi(-2).unwrap();
        let r = f.recip().unwrap();
        let b = r.try_mul(&r).unwrap();
        for (u, v) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((u - v).abs() < 1e-13 * v.abs().max(1.0));
        }
    }

    #[test]
    fn exp_ln_roundtrip() {
        let x = Jet::variable(1, 6, 0, 0.8).unwrap();
        let f = &x.exp() * &x; // x e^x, positive at 0.8
        let back = f.ln_abs().unwrap().exp();
        for (u, v) in back.coeffs().iter().zip(f.coeffs()) {
            assert!((u - v).abs() < 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn partial_jet_shifts_coefficients() {
        let x = Jet::variable(2, 3, 0, 1.5).unwrap();
        let y = Jet::variable(2, 3, 1, -0.5).unwrap();
        let f = &(&x * &(&y * &y)) + &x; // x y^2 + x
        let fx = f.partial_jet(0).unwrap(); // y^2 + 1
        assert!((fx.value() - (0.25 + 1.0)).abs() < 1e-15);
        assert!((fx.partial(&[0, 1]).unwrap() - (-1.0)).abs() < 1e-15);
        assert!((fx.partial(&[0, 2]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn powf_matches_integer_power() {
        let x = Jet::variable(1, 4, 0, 2.3).unwrap();
        let a = x.powf(3.0).unwrap();
        let b = x.powi(3).unwrap();
        for (u, v) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((u - v).abs() < 1e-11 * v.abs().max(1.0));
        }
    }
}
