//! Shared numerical machinery: adaptive ODE integration with dense output,
//! adaptive Gauss–Kronrod quadrature, and finite-difference cross-check
//! stencils.

pub mod fd;
pub mod ode;
pub mod quad;
