//! Nonsmooth ISS-Lyapunov certification for state-dependent switched systems.
//!
//! Layers, bottom-up: [`kfun`] comparison functions, [`partition`] proper
//! partitions, [`switched`] Filippov-regularized systems and simulation,
//! [`nonsmooth`] piecewise-C¹ candidates with Clarke and Lie derivative
//! intervals, [`certify`] sampled ISS checks, [`compose`] small-gain and
//! cascade composites, [`linmat`] the switched-linear LMI specialization.

pub mod kfun;
pub mod partition;
pub mod switched;
pub mod nonsmooth;
pub mod certify;
pub mod compose;
pub mod linmat;

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

/// C's `%.12e` (12 decimals, signed two-digit exponent); the float format of
/// every CSV and JSON artifact.
pub fn format_e12(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    format!("{mantissa}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}
