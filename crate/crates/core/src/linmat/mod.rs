//! Switched-linear specialization: two-mode plants xᵀQx-partitioned,
//! observer-based output feedback, LMI verification and closed-loop assembly.

mod eigen;
pub mod flower;
pub mod search;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::certify::{CheckReport, ConditionSummary, Witness};
use crate::partition::{Constraint, PartitionError, ProperPartition, Region, ScalarField, Sign};
use crate::switched::{Mode, SwitchedError, SwitchedSystem};
use crate::Matrix;

pub use eigen::{jacobi_eigenvalues, spectral_norm, NORM_TOL};
pub use flower::{flower_instance, FlowerInstance};
pub use search::{search_design, SearchOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinmatError {
    #[error("matrix is not symmetric (residual {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{0} must be positive definite (min eigenvalue {1:e})")]
    NotPositiveDefinite(&'static str, f64),
    #[error("invalid design parameter: {0}")]
    InvalidParameter(String),
    #[error("switching form must be indefinite")]
    DefiniteSwitchingForm,
    #[error("halfspace switching forms have no LMI family here; use a quadratic form")]
    HalfspaceUnsupported,
    #[error("design does not pass the LMI verifiers: {0}")]
    UnverifiedDesign(String),
    #[error("parameters must satisfy 0 < eps < a1 <= a2 (got eps={eps}, a1={a1}, a2={a2})")]
    ParameterOrder { a1: f64, a2: f64, eps: f64 },
    #[error("AᵢᵀPᵢ + PᵢAᵢ + εI is not negative semidefinite (λmax = {0:e})")]
    DecayLmiViolated(f64),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Switched(#[from] SwitchedError),
    #[error(transparent)]
    Certify(#[from] crate::certify::CertifyError),
}

pub type Result<T> = std::result::Result<T, LinmatError>;

pub const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric matrix; construction rejects asymmetry above 1e−12.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(LinmatError::DimensionMismatch(format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        let r = (&m - m.transpose()).amax();
        if r > SYMMETRY_TOL {
            return Err(LinmatError::NotSymmetric(r));
        }
        Ok(Self(m))
    }

    /// (M + Mᵀ)/2 for matrices symmetric up to roundoff by construction.
    fn symmetrized(m: Matrix) -> Self {
        Self((&m + m.transpose()) * 0.5)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        jacobi_eigenvalues(&self.0)
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues().last().expect("nonempty")
    }
}

/// λ_max(M); a negative value certifies M ≺ 0 with that margin.
pub fn lmi_residual(m: &SymMatrix) -> f64 {
    m.lambda_max()
}

/// Same, for a raw matrix that still has to pass the symmetry check.
pub fn lmi_residual_checked(m: &Matrix) -> Result<f64> {
    Ok(lmi_residual(&SymMatrix::new(m.clone())?))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SwitchingForm {
    /// q(x) = ⟨v, x⟩
    Linear { v: crate::Vector },
    /// q(x) = xᵀQx
    Quadratic { q: SymMatrix },
}

/// ẋ = A_i x + Bu on {±q(x) ≥ 0}, y = Cx.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSwitchedPlant {
    pub a1: Matrix,
    pub a2: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub q: SwitchingForm,
}

impl LinearSwitchedPlant {
    pub fn new(a1: Matrix, a2: Matrix, b: Matrix, c: Matrix, q: SwitchingForm) -> Result<Self> {
        let n = a1.nrows();
        let dims_ok = a1.is_square() && a2.shape() == (n, n) && b.nrows() == n && c.ncols() == n;
        if !dims_ok {
            return Err(LinmatError::DimensionMismatch(format!(
                "A1 {:?}, A2 {:?}, B {:?}, C {:?}",
                a1.shape(),
                a2.shape(),
                b.shape(),
                c.shape()
            )));
        }
        match &q {
            SwitchingForm::Linear { v } if v.len() != n => {
                return Err(LinmatError::DimensionMismatch(format!("v has length {}, state dim {n}", v.len())))
            }
            SwitchingForm::Quadratic { q } => {
                if q.n() != n {
                    return Err(LinmatError::DimensionMismatch(format!("Q is {}x{0}, state dim {n}", q.n())));
                }
                let ev = q.eigenvalues();
                if !(ev[0] < 0.0 && ev[n - 1] > 0.0) {
                    return Err(LinmatError::DefiniteSwitchingForm);
                }
            }
            _ => {}
        }
        Ok(Self { a1, a2, b, c, q })
    }

    pub fn n(&self) -> usize {
        self.a1.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    fn quadratic(&self) -> Result<&SymMatrix> {
        match &self.q {
            SwitchingForm::Quadratic { q } => Ok(q),
            SwitchingForm::Linear { .. } => Err(LinmatError::HalfspaceUnsupported),
        }
    }

    pub fn switching_field(&self) -> ScalarField {
        match &self.q {
            SwitchingForm::Linear { v } => ScalarField::linear(v.clone()),
            SwitchingForm::Quadratic { q } => ScalarField::Quadratic { q: q.matrix().clone() },
        }
    }

    /// The open-loop plant ẋ = A_i x + Bu as a switched system.
    pub fn open_loop(&self) -> Result<SwitchedSystem> {
        let p = ProperPartition::split(self.switching_field())?;
        let modes = vec![
            Mode::Linear { a: self.a1.clone(), b: self.b.clone() },
            Mode::Linear { a: self.a2.clone(), b: self.b.clone() },
        ];
        Ok(SwitchedSystem::new(p, modes, self.m())?)
    }
}

pub const DEFAULT_EPS_SHARE: f64 = 0.5;

/// Controller u = Kz, observer gains L_i, and the LMI certificate data.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerDesign {
    pub k: Matrix,
    pub l1: Matrix,
    pub l2: Matrix,
    pub p1: SymMatrix,
    pub p2: SymMatrix,
    pub pe: SymMatrix,
    pub mu1: f64,
    pub mu2: f64,
    pub mu12: f64,
    pub mu21: f64,
    pub mu_q: f64,
    pub a_x: f64,
    pub a_e: f64,
    pub eps_share: f64,
}

impl ControllerDesign {
    /// Checks positivity and sign constraints (not the LMIs themselves).
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("P1", &self.p1), ("P2", &self.p2), ("Pe", &self.pe)] {
            let lmin = p.lambda_min();
            if !(lmin > 0.0) {
                return Err(LinmatError::NotPositiveDefinite(name, lmin));
            }
        }
        if !(self.mu1 >= 0.0 && self.mu2 >= 0.0) {
            return Err(LinmatError::InvalidParameter("mu1 and mu2 must be nonnegative".into()));
        }
        if !(self.a_x > 0.0 && self.a_e > 0.0) {
            return Err(LinmatError::InvalidParameter("a_x and a_e must be positive".into()));
        }
        if !(self.eps_share > 0.0 && self.eps_share < 1.0) {
            return Err(LinmatError::InvalidParameter("eps_share must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn check_dims(&self, plant: &LinearSwitchedPlant) -> Result<()> {
        let (n, m, p) = (plant.n(), plant.m(), plant.p());
        let ok = self.k.shape() == (m, n)
            && self.l1.shape() == (n, p)
            && self.l2.shape() == (n, p)
            && self.p1.n() == n
            && self.p2.n() == n
            && self.pe.n() == n;
        if ok {
            Ok(())
        } else {
            Err(LinmatError::DimensionMismatch(format!(
                "design shapes K {:?}, L1 {:?}, L2 {:?} for plant (n={n}, m={m}, p={p})",
                self.k.shape(),
                self.l1.shape(),
                self.l2.shape()
            )))
        }
    }
}

fn lyap(p: &Matrix, a: &Matrix) -> Matrix {
    p * a + a.transpose() * p
}

/// The four plant LMI matrices, keyed by name, in a fixed order.
pub fn plant_lmi_matrices(plant: &LinearSwitchedPlant, d: &ControllerDesign) -> Result<Vec<(&'static str, SymMatrix)>> {
    d.check_dims(plant)?;
    let q = plant.quadratic()?.matrix();
    let n = plant.n();
    let bk = &plant.b * &d.k;
    let (c1, c2) = (&plant.a1 + &bk, &plant.a2 + &bk);
    let ax = Matrix::identity(n, n) * d.a_x;
    let (p1, p2) = (d.p1.matrix(), d.p2.matrix());
    Ok(vec![
        ("s_procedure_1", SymMatrix::symmetrized(q * d.mu1 + lyap(p1, &c1) + &ax)),
        ("s_procedure_2", SymMatrix::symmetrized(q * -d.mu2 + lyap(p2, &c2) + &ax)),
        ("finsler_12", SymMatrix::symmetrized(q * d.mu12 + lyap(p1, &c2) + &ax)),
        ("finsler_21", SymMatrix::symmetrized(q * d.mu21 + lyap(p2, &c1) + &ax)),
    ])
}

pub fn observer_lmi_matrices(plant: &LinearSwitchedPlant, d: &ControllerDesign) -> Result<Vec<(&'static str, SymMatrix)>> {
    d.check_dims(plant)?;
    let n = plant.n();
    let ae = Matrix::identity(n, n) * d.a_e;
    let pe = d.pe.matrix();
    let m = |a: &Matrix, l: &Matrix| SymMatrix::symmetrized(lyap(pe, &(a - l * &plant.c)) + &ae);
    Ok(vec![("observer_1", m(&plant.a1, &d.l1)), ("observer_2", m(&plant.a2, &d.l2))])
}

fn scalar_condition(margin: f64) -> ConditionSummary {
    let w = Witness { x: vec![], u: vec![], v: 0.0, lo: None, hi: Some(-margin), margin };
    let failing = if margin >= 0.0 { vec![] } else { vec![w.clone()] };
    ConditionSummary {
        checked: 1,
        active: 1,
        failures: failing.len(),
        empty_lie: 0,
        worst_margin: margin,
        worst: Some(w),
        failing,
    }
}

fn lmi_report(mats: Vec<(&'static str, SymMatrix)>, tol: f64, extra: Vec<(&'static str, f64)>) -> CheckReport {
    let mut conditions = BTreeMap::new();
    let mut metrics = BTreeMap::new();
    for (name, m) in mats {
        let lmax = lmi_residual(&m);
        metrics.insert(format!("{name}_lambda_max"), lmax);
        conditions.insert(name.to_string(), scalar_condition(-tol - lmax));
    }
    for (name, margin) in extra {
        conditions.insert(name.to_string(), scalar_condition(margin));
    }
    CheckReport::from_conditions(conditions).with_metrics(metrics)
}

/// Continuity equality plus the four S-procedure/Finsler LMIs, each with
/// λmax ≤ −tol.
pub fn verify_plant_lmis(plant: &LinearSwitchedPlant, d: &ControllerDesign, tol: f64) -> Result<CheckReport> {
    let mats = plant_lmi_matrices(plant, d)?;
    let q = plant.quadratic()?.matrix();
    let eq = (d.p1.matrix() - d.p2.matrix() - q * d.mu_q).amax();
    let mut rep = lmi_report(mats, tol, vec![("continuity", tol - eq)]);
    rep.metrics.insert("continuity_residual".into(), eq);
    Ok(rep)
}

pub fn verify_observer_lmis(plant: &LinearSwitchedPlant, d: &ControllerDesign, tol: f64) -> Result<CheckReport> {
    Ok(lmi_report(observer_lmi_matrices(plant, d)?, tol, vec![]))
}

pub const VERIFY_TOL: f64 = 1e-8;

fn require_verified(plant: &LinearSwitchedPlant, d: &ControllerDesign) -> Result<()> {
    d.validate()?;
    let a = verify_plant_lmis(plant, d, VERIFY_TOL)?;
    let b = verify_observer_lmis(plant, d, VERIFY_TOL)?;
    let failed: Vec<&String> = a.conditions.iter().chain(&b.conditions).filter(|(_, c)| !c.pass()).map(|(k, _)| k).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(LinmatError::UnverifiedDesign(format!("{failed:?} fail at tol {VERIFY_TOL:e}")))
    }
}

/// Scalar gain algebra of the observer-based loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedLoopGains {
    pub lambda_x_min: f64,
    pub lambda_x_max: f64,
    pub lambda_e_min: f64,
    pub lambda_e_max: f64,
    pub norm_b: f64,
    pub norm_k: f64,
    pub norm_da: f64,
    pub gamma_x_slope: f64,
    pub gamma_e_slope: f64,
    pub eta1_slope: f64,
    pub eta2_slope: f64,
    /// η₁∘η₂ slope; equals small_gain_value / ε⁴.
    pub slope_product: f64,
    pub small_gain_value: f64,
    pub pass: bool,
}

pub fn closed_loop_gains(plant: &LinearSwitchedPlant, d: &ControllerDesign) -> Result<ClosedLoopGains> {
    require_verified(plant, d)?;
    let lx_min = d.p1.lambda_min().min(d.p2.lambda_min());
    let lx_max = d.p1.lambda_max().max(d.p2.lambda_max());
    let (le_min, le_max) = (d.pe.lambda_min(), d.pe.lambda_max());
    let nb = spectral_norm(&plant.b);
    let nk = spectral_norm(&d.k);
    let nda = spectral_norm(&(&plant.a1 - &plant.a2));
    let eps = d.eps_share;
    // γ̂ₓ(s) = 2‖B‖‖K‖λ̄ₓ/(ε aₓ)·s, γ̂ₑ(s) = 2‖A₁−A₂‖λ̄ₑ/(ε aₑ)·s
    let gx = 2.0 * nb * nk * lx_max / (eps * d.a_x);
    let ge = 2.0 * nda * le_max / (eps * d.a_e);
    // η₁ = ψ̄ₓ∘γ̂ₑ∘ψ̲ₑ⁻¹ with quadratic ψ's: s ↦ λ̄ₓ(gₑ√(s/λ̲ₑ))²
    let eta1 = lx_max * ge * ge / le_min;
    let eta2 = le_max * gx * gx / lx_min;
    let value = 16.0 * nb.powi(2) * nk.powi(2) * nda.powi(2) * lx_max.powi(3) * le_max.powi(3)
        / (lx_min * le_min * d.a_x.powi(2) * d.a_e.powi(2));
    Ok(ClosedLoopGains {
        lambda_x_min: lx_min,
        lambda_x_max: lx_max,
        lambda_e_min: le_min,
        lambda_e_max: le_max,
        norm_b: nb,
        norm_k: nk,
        norm_da: nda,
        gamma_x_slope: gx,
        gamma_e_slope: ge,
        eta1_slope: eta1,
        eta2_slope: eta2,
        slope_product: eta1 * eta2,
        small_gain_value: value,
        pass: value < 1.0,
    })
}

fn block(tl: &Matrix, tr: &Matrix, bl: &Matrix, br: &Matrix) -> Matrix {
    let n = tl.nrows();
    let mut m = Matrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(tl);
    m.view_mut((0, n), (n, n)).copy_from(tr);
    m.view_mut((n, 0), (n, n)).copy_from(bl);
    m.view_mut((n, n), (n, n)).copy_from(br);
    m
}

/// The closed loop on (x, e), e = x − z: ẋ = A_i x + BK(x − e),
/// ė = (A_i − A_j)x + (A_j − L_j C)e, with i keyed on q(x), j on q(x − e).
pub fn build_closed_loop(plant: &LinearSwitchedPlant, d: &ControllerDesign) -> Result<SwitchedSystem> {
    require_verified(plant, d)?;
    let q = plant.quadratic()?.matrix().clone();
    let n = plant.n();
    let zero = Matrix::zeros(n, n);
    let fx = ScalarField::quadratic(block(&q, &zero, &zero, &zero))?;
    let fz = ScalarField::quadratic(block(&q, &(-&q), &(-&q), &q))?;
    let bk = &plant.b * &d.k;
    let a = [&plant.a1, &plant.a2];
    let l = [&d.l1, &d.l2];
    let sign = |k: usize| if k == 0 { Sign::Ge } else { Sign::Le };
    let mut regions = vec![];
    let mut modes = vec![];
    for i in 0..2 {
        for j in 0..2 {
            regions.push(Region {
                label: format!("x{}z{}", i + 1, j + 1),
                constraints: vec![Constraint { field: 0, sign: sign(i) }, Constraint { field: 1, sign: sign(j) }],
            });
            let m = block(&(a[i] + &bk), &(-&bk), &(a[i] - a[j]), &(a[j] - l[j] * &plant.c));
            modes.push(Mode::Linear { a: m, b: Matrix::zeros(2 * n, 0) });
        }
    }
    let p = ProperPartition::new(2 * n, vec![fx, fz], regions)?;
    Ok(SwitchedSystem::new(p, modes, 0)?)
}

/// The fixture plant: two saddle-like modes switched on the sign of x₁x₂.
pub fn fixture_plant() -> LinearSwitchedPlant {
    use nalgebra::dmatrix;
    LinearSwitchedPlant::new(
        dmatrix![0.0, 1.0; 1.0, -1.0],
        dmatrix![0.0, 1.0; 1.01, -1.0],
        dmatrix![0.0; 1.0],
        dmatrix![1.0, 0.0],
        SwitchingForm::Quadratic { q: SymMatrix::new(dmatrix![0.0, 1.0; 1.0, 0.0]).expect("symmetric") },
    )
    .expect("fixture plant is consistent")
}

/// A committed design for [`fixture_plant`] (rounded to six digits);
/// verified at tol 1e−8.
pub fn fixture_design() -> ControllerDesign {
    use nalgebra::dmatrix;
    let sym = |m: Matrix| SymMatrix::new(m).expect("symmetric");
    ControllerDesign {
        k: dmatrix![-2.0, -1.0],
        l1: dmatrix![3.0; 2.0],
        l2: dmatrix![3.0; 2.01],
        p1: sym(dmatrix![1.685545, 0.440288; 0.440288, 1.314455]),
        p2: sym(dmatrix![1.685545, 0.464298; 0.464298, 1.314455]),
        pe: sym(Matrix::identity(2, 2)),
        mu1: 0.493436,
        mu2: 0.0,
        mu12: 0.496343,
        mu21: 0.55751,
        mu_q: -0.02401,
        a_x: 0.816846,
        a_e: 1.9,
        eps_share: DEFAULT_EPS_SHARE,
    }
}
