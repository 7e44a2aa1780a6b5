//! The two-mode "flower" system on the cones {±(x₂² − x₁²) ≥ 0}, whose
//! piecewise-quadratic V has an empty Lie derivative on the switching lines.

use nalgebra::dmatrix;

use super::{jacobi_eigenvalues, spectral_norm, LinmatError, Result};
use crate::certify::{DecayArgument, ISSCertificate};
use crate::kfun::ComparisonFn;
use crate::nonsmooth::PiecewiseC1Fn;
use crate::partition::{ProperPartition, ScalarField};
use crate::switched::{Mode, SwitchedSystem};
use crate::Matrix;

#[derive(Debug, Clone)]
pub struct FlowerInstance {
    pub system: SwitchedSystem,
    pub certificate: ISSCertificate<PiecewiseC1Fn>,
    pub a: [Matrix; 2],
    pub p: [Matrix; 2],
    /// 2‖B‖/(a₁+a₂): beyond |z| ≥ slope·|u| the surface Lie set is empty.
    pub threshold_slope: f64,
    /// Numerically derived b with |x| ≥ b|u| ⇒ decay at rate ε′|x|².
    pub b: f64,
    pub eps_prime: f64,
    /// λmax(AᵢᵀPᵢ + PᵢAᵢ + εI), i = 1, 2.
    pub decay_lmi: [f64; 2],
    /// Largest entry of Aᵢ − RᵀAⱼR and Pᵢ − RᵀPⱼR for the quarter-turn R.
    pub rotation_residual: f64,
}

/// Number of directions scanned for b, and the safety factor on the scan.
const B_SCAN: usize = 7200;
const B_SAFETY: f64 = 1.01;

pub fn flower_instance(a1: f64, a2: f64, eps: f64, b: &Matrix) -> Result<FlowerInstance> {
    if !(0.0 < eps && eps < a1 && a1 <= a2) || !a2.is_finite() {
        return Err(LinmatError::ParameterOrder { a1, a2, eps });
    }
    if b.nrows() != 2 {
        return Err(LinmatError::DimensionMismatch(format!("B must have 2 rows, got {}", b.nrows())));
    }
    let am = [dmatrix![-eps, a1; -a2, -eps], dmatrix![-eps, a2; -a1, -eps]];
    let pm = [dmatrix![a2, 0.0; 0.0, a1], dmatrix![a1, 0.0; 0.0, a2]];
    let q1 = dmatrix![-1.0, 0.0; 0.0, 1.0];
    let r = dmatrix![0.0, 1.0; -1.0, 0.0];
    let rot = |m: &Matrix| r.transpose() * m * &r;
    let rotation_residual = (&am[0] - rot(&am[1])).amax().max((&pm[0] - rot(&pm[1])).amax());

    let lyap: Vec<Matrix> = (0..2).map(|i| am[i].transpose() * &pm[i] + &pm[i] * &am[i]).collect();
    let mut decay_lmi = [0.0; 2];
    for i in 0..2 {
        let ev = jacobi_eigenvalues(&(&lyap[i] + Matrix::identity(2, 2) * eps));
        decay_lmi[i] = ev[1];
    }
    let worst = decay_lmi[0].max(decay_lmi[1]);
    if worst > 1e-12 {
        return Err(LinmatError::DecayLmiViolated(worst));
    }

    // b = sup over unit x of 2|BᵀPᵢx| / (−xᵀMᵢx − ε′): then |u| ≤ |x|/b gives
    // xᵀMᵢx + 2xᵀPᵢBu ≤ −ε′|x|².
    let eps_prime = eps / 2.0;
    let mut bval: f64 = 0.0;
    for k in 0..B_SCAN {
        let t = std::f64::consts::PI * k as f64 / B_SCAN as f64;
        let x = nalgebra::dvector![t.cos(), t.sin()];
        for i in 0..2 {
            let num = 2.0 * (b.transpose() * &pm[i] * &x).norm();
            let den = -(x.dot(&(&lyap[i] * &x))) - eps_prime;
            bval = bval.max(num / den);
        }
    }
    let bval = bval * B_SAFETY;
    let nb = spectral_norm(b);
    let threshold_slope = 2.0 * nb / (a1 + a2);

    let partition = ProperPartition::split(ScalarField::quadratic(q1)?)?;
    let modes = am.iter().map(|a| Mode::Linear { a: a.clone(), b: b.clone() }).collect();
    let system = SwitchedSystem::new(partition.clone(), modes, b.ncols())?;
    let v = PiecewiseC1Fn::quadratic(partition, pm.to_vec()).map_err(crate::certify::CertifyError::from)?;
    // γ in level units: V > a₂(k|u|)² forces |x| > k|u| through V ≤ a₂|x|².
    let k = bval.max(threshold_slope);
    let pow = |c: f64| ComparisonFn::power(c, 2.0).expect("positive coefficients");
    let gamma = if k > 0.0 { pow(a2 * k * k) } else { ComparisonFn::zero() };
    let certificate = ISSCertificate::new(v, pow(a1), pow(a2), pow(eps_prime), gamma, DecayArgument::StateNorm)?;
    Ok(FlowerInstance {
        system,
        certificate,
        a: am,
        p: pm,
        threshold_slope,
        b: bval,
        eps_prime,
        decay_lmi,
        rotation_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn reference_parameters() {
        let f = flower_instance(1.0, 5.0, 0.1, &Matrix::identity(2, 2)).unwrap();
        assert!(f.decay_lmi.iter().all(|&l| l <= 0.0));
        assert!((f.threshold_slope - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(f.rotation_residual, 0.0);
        // dense scan of the closed form 2|Pᵢx| / (2ε(xᵀPᵢx) − ε′) over unit x,
        // by symmetry mode 1 only: 2√(25c² + s²) / (c² + 0.2s² − 0.05)
        let oracle = (0..=1_000_000)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / 1e6;
                let (c, s) = (t.cos(), t.sin());
                2.0 * (25.0 * c * c + s * s).sqrt() / (c * c + 0.2 * s * s - 0.05)
            })
            .fold(0.0, f64::max);
        assert!((f.b / B_SAFETY - oracle).abs() < 1e-6 * oracle, "b = {}, oracle {oracle}", f.b);
        assert_eq!(f.system.equilibrium_violations(), Vec::<usize>::new());
    }

    #[test]
    fn parameter_order() {
        let i = Matrix::identity(2, 2);
        assert!(matches!(flower_instance(1.0, 0.5, 0.1, &i), Err(LinmatError::ParameterOrder { .. })));
        assert!(matches!(flower_instance(1.0, 5.0, 1.0, &i), Err(LinmatError::ParameterOrder { .. })));
        // decay bound needs 2a₁ ≥ 1
        assert!(matches!(flower_instance(0.3, 5.0, 0.1, &i), Err(LinmatError::DecayLmiViolated(_))));
    }

    #[test]
    fn equal_gains_make_v_smooth() {
        let f = flower_instance(2.0, 2.0, 0.1, &Matrix::identity(2, 2)).unwrap();
        assert_eq!(f.p[0], f.p[1]);
        let z = dvector![1.0, 1.0];
        let hull = f.system.hull_vertices(&z, &dvector![0.0, 0.0], 1e-9).unwrap();
        let c = f.certificate.v.clarke_interval(&hull, 1e-9).unwrap();
        let l = f.certificate.v.lie_interval(&hull, 1e-9).unwrap();
        assert!((c.min() - l.min()).abs() < 1e-12 && (c.max() - l.max()).abs() < 1e-12, "clarke {c:?} lie {l:?}");
    }
}
