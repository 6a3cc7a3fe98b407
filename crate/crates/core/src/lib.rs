//! Relaxation-structure certificates, boundary-layer steady states and
//! stability diagnostics for linear reaction-hyperbolic systems
//! `U_t + Λ U_x = (K/ε) U` on the quarter plane `x, t ≥ 0`, the standard
//! linear model of axonal transport.

pub mod cli;
pub mod formats;
pub mod ibvp;
pub mod linalg;
pub mod relaxation;
pub mod steady;
pub mod system_model;
