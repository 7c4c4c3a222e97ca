//! Assembly of the coefficient matrices `b_ij(u)`.
//!
//! An N-component system couples constant characteristic speeds `λ_i` in `x`
//! with a state-dependent matrix `b(u)` in `y`:
//!
//! ```text
//! u_it = λ_i u_ix + Σ_j b_ij(u) u_jy
//! ```
//!
//! The matrix is produced by two independent routes that must agree wherever
//! both are defined: the two-slot derivative formulas driven by a kernel
//! (`build_general`) and the printed closed forms of the four worked systems
//! (`build_example`). Keeping both routes alive is deliberate; their
//! agreement is one of the strongest end-to-end checks in the test suite.

use crate::hkernels::{HKernelFamily, Kernel, KernelError};

/// Constant data of an N-component system: the kernel plus the pairwise
/// distinct speeds `λ_i` and nonzero weights `c_i`.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    kernel: Kernel,
    lambda: Vec<f64>,
    c: Vec<f64>,
}

impl SystemSpec {
    pub fn new(kernel: Kernel, lambda: Vec<f64>, c: Vec<f64>) -> Result<Self, KernelError> {
        if lambda.len() != c.len() {
            return Err(KernelError::Config(format!(
                "lambda has {} entries but c has {}",
                lambda.len(),
                c.len()
            )));
        }
        let n = lambda.len();
        if n < 2 {
            return Err(KernelError::Config(format!(
                "need at least 2 components, got {n}"
            )));
        }
        if lambda.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(KernelError::Config(
                "lambda and c entries must be finite".into(),
            ));
        }
        if c.iter().any(|&ci| ci == 0.0) {
            return Err(KernelError::Config("weights c must be nonzero".into()));
        }
        let scale = 1.0 + lambda.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in (i + 1)..n {
                if (lambda[i] - lambda[j]).abs() < 1e-9 * scale {
                    return Err(KernelError::Config(format!(
                        "lambda[{i}] = {} and lambda[{j}] = {} are not distinct",
                        lambda[i], lambda[j]
                    )));
                }
            }
        }
        Ok(SystemSpec { kernel, lambda, c })
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Same kernel and speeds with replacement weights. Used for the sign
    /// convention relating the second worked system to the general route and
    /// by the negative controls.
    pub fn with_c(&self, c: Vec<f64>) -> Result<SystemSpec, KernelError> {
        SystemSpec::new(self.kernel.clone(), self.lambda.clone(), c)
    }

    /// Rejects evaluation points of the wrong arity, with non-finite entries
    /// or with coinciding components (the formulas have first-order poles on
    /// the diagonals, so coincidence is an error, not a limit).
    pub fn check_point(&self, u: &[f64]) -> Result<(), KernelError> {
        if u.len() != self.n() {
            return Err(KernelError::Domain(format!(
                "point has {} components, system has {}",
                u.len(),
                self.n()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::Domain("non-finite component in u".into()));
        }
        for i in 0..u.len() {
            for j in (i + 1)..u.len() {
                let scale = 1.0 + u[i].abs().max(u[j].abs());
                if (u[i] - u[j]).abs() <= 1e-12 * scale {
                    return Err(KernelError::Domain(format!(
                        "u[{i}] = {} and u[{j}] = {} coincide",
                        u[i], u[j]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An N×N coefficient matrix together with the state point it was evaluated
/// at.
#[derive(Debug, Clone)]
pub struct CoeffMatrix {
    n: usize,
    point: Vec<f64>,
    b: Vec<f64>,
}

impl CoeffMatrix {
    fn zeros(n: usize, point: &[f64]) -> CoeffMatrix {
        CoeffMatrix {
            n,
            point: point.to_vec(),
            b: vec![0.0; n * n],
        }
    }

    /// Rebuilds a matrix from serialized rows, e.g. the `b` array a build
    /// report printed; offline round-trip checks start here.
    pub fn from_rows(point: &[f64], rows: &[Vec<f64>]) -> Result<CoeffMatrix, KernelError> {
        let n = rows.len();
        if n != point.len() || rows.iter().any(|r| r.len() != n) {
            return Err(KernelError::Config(format!(
                "matrix shape mismatch: {} rows for an n = {} point",
                n,
                point.len()
            )));
        }
        let mut m = CoeffMatrix::zeros(n, point);
        for (i, row) in rows.iter().enumerate() {
            for (j, value) in row.iter().enumerate() {
                m.set(i, j, *value);
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.b[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.b[i * self.n + j] = value;
    }

    /// Multiplies one entry in place; the negative controls use this to
    /// damage a certified matrix by a known relative amount.
    pub fn scale_entry(&mut self, i: usize, j: usize, factor: f64) {
        self.b[i * self.n + j] *= factor;
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        (0..self.n).map(|j| self.get(i, j)).sum()
    }

    pub fn max_abs_diff(&self, other: &CoeffMatrix) -> f64 {
        assert_eq!(self.n, other.n, "matrix sizes differ");
        self.b
            .iter()
            .zip(other.b.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// General construction from the kernel's two-slot derivatives:
///
/// ```text
/// b_ij = (λ_j − λ_i) c_j ∂₂h(u_i, u_j)              (i ≠ j)
/// b_ii = Σ_{j≠i} (λ_j − λ_i) c_j ∂₁h(u_i, u_j)
/// ```
///
/// The quadrature family is rejected: its printed system (the fourth worked
/// example) is not generated by these two-slot formulas, because the
/// normalized kernel's second slot lives on the preimage of φ, which is
/// disjoint from the state domain by construction.
pub fn build_general(spec: &SystemSpec, u: &[f64]) -> Result<CoeffMatrix, KernelError> {
    if matches!(spec.kernel.family(), HKernelFamily::Quadrature(_)) {
        return Err(KernelError::Config(
            "the quadrature family's system is built by build_example(4), \
             not by the two-slot general formulas"
                .into(),
        ));
    }
    spec.check_point(u)?;
    let n = spec.n();
    let mut m = CoeffMatrix::zeros(n, u);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let (h_xi, h_u) = spec.kernel.partials(u[i], u[j])?;
            let w = (spec.lambda[j] - spec.lambda[i]) * spec.c[j];
            m.set(i, j, w * h_u);
            diag += w * h_xi;
        }
        m.set(i, i, diag);
    }
    Ok(m)
}

/// Printed closed-form matrices of the four worked systems, diagonal
/// conventions included. `which` selects the system; the spec's kernel
/// family must match it.
pub fn build_example(which: u8, spec: &SystemSpec, u: &[f64]) -> Result<CoeffMatrix, KernelError> {
    spec.check_point(u)?;
    match which {
        1 => example1(spec, u),
        2 => example2(spec, u),
        3 => example3(spec, u),
        4 => example4(spec, u),
        _ => Err(KernelError::Config(format!(
            "unknown example index {which}, expected 1..=4"
        ))),
    }
}

/// b_ij = (λ_i − λ_j) c_j / (u_i − u_j), b_ii = −Σ_{j≠i} b_ij.
fn example1(spec: &SystemSpec, u: &[f64]) -> Result<CoeffMatrix, KernelError> {
    match spec.kernel.family() {
        HKernelFamily::LogKappa { kappa } if *kappa == 0.0 => {}
        other => {
            return Err(KernelError::Config(format!(
                "example 1 is the plain logarithmic kernel (log-kappa with kappa = 0), \
                 spec has {other:?}"
            )));
        }
    }
    let n = spec.n();
    let mut m = CoeffMatrix::zeros(n, u);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let entry = (spec.lambda[i] - spec.lambda[j]) * spec.c[j] / (u[i] - u[j]);
            m.set(i, j, entry);
            diag -= entry;
        }
        m.set(i, i, diag);
    }
    Ok(m)
}

/// b_ij = c_j (λ_j − λ_i) (κ + E(u_i − u_j)) with E(s) = e^s/(e^s − 1),
/// b_ii = −Σ_{j≠i} b_ij.
fn example2(spec: &SystemSpec, u: &[f64]) -> Result<CoeffMatrix, KernelError> {
    let kappa = match spec.kernel.family() {
        HKernelFamily::ExpKappa { kappa } => *kappa,
        other => {
            return Err(KernelError::Config(format!(
                "example 2 is the exponential kernel (exp-kappa), spec has {other:?}"
            )));
        }
    };
    let n = spec.n();
    let mut m = CoeffMatrix::zeros(n, u);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let s = u[i] - u[j];
            // Same window as the stored-kernel guard, so the printed and
            // general routes share a domain.
            if s.abs() > 50.0 {
                return Err(KernelError::Domain(format!(
                    "u[{i}] - u[{j}] = {s} exceeds the exponential window"
                )));
            }
            let e = s.exp() / s.exp_m1();
            let entry = spec.c[j] * (spec.lambda[j] - spec.lambda[i]) * (kappa + e);
            m.set(i, j, entry);
            diag -= entry;
        }
        m.set(i, i, diag);
    }
    Ok(m)
}

/// b_ij = c_j (λ_j − λ_i) (u_i − u_j + 1)/(u_i − u_j) · u_i/u_j,
/// b_ii = Σ_{j≠i} c_j (λ_j − λ_i) (1/(u_j − u_i) + log u_j).
fn example3(spec: &SystemSpec, u: &[f64]) -> Result<CoeffMatrix, KernelError> {
    if !matches!(spec.kernel.family(), HKernelFamily::ShiftedLog) {
        return Err(KernelError::Config(format!(
            "example 3 is the shifted-log kernel, spec has {:?}",
            spec.kernel.family()
        )));
    }
    if let Some((k, &bad)) = u.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(KernelError::Domain(format!(
            "example 3 needs positive components, u[{k}] = {bad}"
        )));
    }
    let n = spec.n();
    let mut m = CoeffMatrix::zeros(n, u);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = u[i] - u[j];
            let w = spec.c[j] * (spec.lambda[j] - spec.lambda[i]);
            m.set(i, j, w * ((d + 1.0) / d) * (u[i] / u[j]));
            diag += w * (1.0 / (u[j] - u[i]) + u[j].ln());
        }
        m.set(i, i, diag);
    }
    Ok(m)
}

/// b_ij = (λ_i − λ_j) c_j P(u_i) M(u_j) / (u_i − u_j),
/// b_ii = Σ_{j≠i} (λ_j − λ_i) c_j (P(u_j) M(u_j)/(u_i − u_j) + B(u_j)).
fn example4(spec: &SystemSpec, u: &[f64]) -> Result<CoeffMatrix, KernelError> {
    let qspec = match spec.kernel.family() {
        HKernelFamily::Quadrature(qspec) => qspec,
        other => {
            return Err(KernelError::Config(format!(
                "example 4 is the quadrature family, spec has {other:?}"
            )));
        }
    };
    let table = spec.kernel.table().expect("quadrature kernel has a table");
    for (k, &uk) in u.iter().enumerate() {
        if uk < qspec.u_domain[0] || uk > qspec.u_domain[1] {
            return Err(KernelError::Domain(format!(
                "u[{k}] = {uk} outside the tabulated interval [{}, {}]",
                qspec.u_domain[0], qspec.u_domain[1]
            )));
        }
    }
    let n = spec.n();
    let mut mb = Vec::with_capacity(n);
    for &uk in u {
        mb.push(table.mb_state(uk)?);
    }
    let mut m = CoeffMatrix::zeros(n, u);
    for i in 0..n {
        let p_i = qspec.p_at(u[i]);
        let mut diag = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = u[i] - u[j];
            let [m_j, b_j] = mb[j];
            let p_j = qspec.p_at(u[j]);
            m.set(
                i,
                j,
                (spec.lambda[i] - spec.lambda[j]) * spec.c[j] * p_i * m_j / d,
            );
            diag += (spec.lambda[j] - spec.lambda[i]) * spec.c[j] * (p_j * m_j / d + b_j);
        }
        m.set(i, i, diag);
    }
    Ok(m)
}

/// Whether the weight relations Σc_i = 0, Σλ_ic_i = 0 are required (they are
/// whenever the kernel's ν is not identically zero) and whether they hold.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintReport {
    pub needed: bool,
    pub satisfied: bool,
    pub sum_c: f64,
    pub sum_lambda_c: f64,
}

pub fn check_constraints(spec: &SystemSpec) -> ConstraintReport {
    let sum_c: f64 = spec.c.iter().sum();
    let sum_lambda_c: f64 = spec
        .lambda
        .iter()
        .zip(spec.c.iter())
        .map(|(l, c)| l * c)
        .sum();
    ConstraintReport {
        needed: !spec.kernel.nu_identically_zero(),
        satisfied: sum_c.abs() <= 1e-12 && sum_lambda_c.abs() <= 1e-12,
        sum_c,
        sum_lambda_c,
    }
}

/// Flux densities σ_i(u) = Σ_{j≠i} (λ_j − λ_i) c_j h(u_i, u_j), which put the
/// system in divergence form u_it = λ_i u_ix + ∂_y σ_i. Their gradient
/// reproduces the general matrix: ∂σ_i/∂u_j = b_ij.
pub fn sigma_fluxes(spec: &SystemSpec, u: &[f64]) -> Result<Vec<f64>, KernelError> {
    spec.check_point(u)?;
    let n = spec.n();
    let mut sigma = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            sigma[i] +=
                (spec.lambda[j] - spec.lambda[i]) * spec.c[j] * spec.kernel.h_value(u[i], u[j])?;
        }
    }
    Ok(sigma)
}

/// Recomputes each diagonal entry from the off-diagonal column and the kernel
/// slopes at a fixed probe ξ₀ (midpoint of the kernel's ξ sampling range):
///
/// ```text
/// b_ii = Σ_j (λ_j − λ_i) c_j h_ξ(ξ₀, u_j) − Σ_{j≠i} b_ji · (c_j h_u(ξ₀, u_j)) / (c_i h_u(ξ₀, u_i))
/// ```
///
/// and returns the absolute gaps against the first-slot-derivative diagonal
/// of `build_general`. The reduction is exact precisely when the compatibility
/// identity holds at ξ₀, so a large gap is evidence of a weight-constraint
/// violation, not of a numerical defect.
pub fn diagonal_cross_check(spec: &SystemSpec, u: &[f64]) -> Result<Vec<f64>, KernelError> {
    let m = build_general(spec, u)?;
    let plan = spec.kernel.sample_plan();
    let xi0 = 0.5 * (plan.xi[0] + plan.xi[1]);
    let n = spec.n();
    let mut slope_xi = vec![0.0; n];
    let mut slope_u = vec![0.0; n];
    for j in 0..n {
        let (h_xi, h_u) = spec.kernel.partials(xi0, u[j])?;
        slope_xi[j] = spec.c[j] * h_xi;
        slope_u[j] = spec.c[j] * h_u;
    }
    let mut gaps = vec![0.0; n];
    for i in 0..n {
        if slope_u[i].abs() < 1e-12 {
            return Err(KernelError::Domain(format!(
                "kernel slope vanishes at the probe point for component {i}"
            )));
        }
        let mut alt = 0.0;
        for j in 0..n {
            alt += (spec.lambda[j] - spec.lambda[i]) * slope_xi[j];
            if j != i {
                alt -= m.get(j, i) * slope_u[j] / slope_u[i];
            }
        }
        gaps[i] = (alt - m.get(i, i)).abs();
    }
    Ok(gaps)
}
