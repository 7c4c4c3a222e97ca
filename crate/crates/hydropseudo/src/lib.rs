//! Construction and numerical verification of integrable (2+1)-dimensional
//! hydrodynamic-type systems
//!
//! ```text
//! u_i,t = lambda_i u_i,x + sum_j b_ij(u) u_j,y        i = 1..N
//! ```
//!
//! whose coefficient matrices `b_ij` are generated by two-point kernels
//! `h(xi, u)` admitting a pseudopotential representation. The crate provides:
//!
//! * [`jets`] — dense truncated Taylor ("jet") arithmetic in up to three
//!   variables, the workhorse for all exact partial derivatives;
//! * [`numerics`] — an adaptive Runge–Kutta integrator with dense output,
//!   Gauss–Kronrod quadrature, and finite-difference cross-check stencils;
//! * [`hkernels`] — the classified kernel families (closed forms and the
//!   quadrature-defined family) with jet evaluation and admissible sampling;
//! * [`builder`] — assembly of the coefficient matrices `b_ij`, both from the
//!   general two-formula construction and from the per-family closed forms,
//!   plus the conserved-flux potentials `sigma_i`;
//! * [`verifier`] — residual evaluation for every identity the construction
//!   asserts (functional equation, compatibility identities, near-diagonal
//!   series constraints, classification ODEs), with seeded sampling;
//! * [`sim`] — a doubly periodic method-of-lines simulator used to observe
//!   the conservation laws directly;
//! * [`cli`] — the `hydropseudo` command-line front end.

pub mod builder;
pub mod cli;
pub mod hkernels;
pub mod jets;
pub mod numerics;
pub mod sim;
pub mod verifier;
