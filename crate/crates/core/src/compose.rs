//! Composite Lyapunov functions for two-block interconnections: the
//! max-form small-gain composite and the sum-form cascade composite.

use thiserror::Error;

use crate::certify::{CertifyError, DecayArgument, DissipationCertificate, ISSCertificate, LyapunovCandidate};
use crate::kfun::{
    compose_chain, construct_sigma, integral_transform, log_grid, pointwise_extremum, small_gain_holds, ClassTag,
    ComparisonFn, Extremum, KfunError,
};
use crate::nonsmooth::{GradientHull, NonsmoothError, PiecewiseC1Fn};
use crate::Vector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComposeError {
    #[error(transparent)]
    Kfun(#[from] KfunError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error("{name} must be {expected}, got {got:?}")]
    TagMismatch { name: &'static str, expected: &'static str, got: ClassTag },
    #[error("gain ratio γ₁/ρ₂ = {ratio} at s = {s} exceeds the cap {cap}; V₁ needs reshaping")]
    RatioUnbounded { s: f64, ratio: f64, cap: f64 },
}

pub type Result<T> = std::result::Result<T, ComposeError>;

/// Level-form ISS data of one block: V_i > max{χ_i(V_other), γ_i(|u|)} ⇒
/// max V̄̇_i ≤ −ρ_i(V_i).  For the cascade, `chi` of the driven block is the
/// coupling gain in its dissipation inequality.
#[derive(Debug, Clone)]
pub struct SubsystemCertificate {
    pub v: PiecewiseC1Fn,
    pub alpha_lo: ComparisonFn,
    pub alpha_hi: ComparisonFn,
    pub rho: ComparisonFn,
    pub chi: ComparisonFn,
    pub gamma: ComparisonFn,
}

fn tag(name: &'static str, f: &ComparisonFn, ok: &[ClassTag], allow_zero: bool, expected: &'static str) -> Result<()> {
    if ok.contains(&f.class()) || (allow_zero && f.is_zero()) {
        Ok(())
    } else {
        Err(ComposeError::TagMismatch { name, expected, got: f.class() })
    }
}

impl SubsystemCertificate {
    pub fn new(
        v: PiecewiseC1Fn,
        alpha_lo: ComparisonFn,
        alpha_hi: ComparisonFn,
        rho: ComparisonFn,
        chi: ComparisonFn,
        gamma: ComparisonFn,
    ) -> Result<Self> {
        use ClassTag::*;
        tag("alpha_lo", &alpha_lo, &[Kinf], false, "class K∞")?;
        tag("alpha_hi", &alpha_hi, &[Kinf], false, "class K∞")?;
        tag("rho", &rho, &[Pd, K, Kinf], false, "positive definite")?;
        tag("chi", &chi, &[K, Kinf], true, "class K")?;
        tag("gamma", &gamma, &[K, Kinf], true, "class K")?;
        Ok(Self { v, alpha_lo, alpha_hi, rho, chi, gamma })
    }
}

#[derive(Debug, Clone)]
pub enum CompositeKind {
    /// W = max{σ(V₁(x₁)), V₂(x₂)}
    MaxSmallGain { sigma: ComparisonFn },
    /// W = ℓ(V₂(x₂)) + V₁(x₁), ℓ = ∫₀ ν
    SumCascade { ell: ComparisonFn, nu: ComparisonFn },
}

#[derive(Debug, Clone)]
pub struct CompositeLyapunov {
    pub kind: CompositeKind,
    pub c1: SubsystemCertificate,
    pub c2: SubsystemCertificate,
    /// Level-form decay: implication rate for the max form, dissipation
    /// rate for the cascade.
    pub rho: ComparisonFn,
    pub gamma: ComparisonFn,
    pub notes: Vec<String>,
}

fn max_of(f: ComparisonFn, g: ComparisonFn) -> Result<ComparisonFn> {
    Ok(match (f.is_zero(), g.is_zero()) {
        (true, _) => g,
        (_, true) => f,
        _ => pointwise_extremum(Extremum::Max, &f, &g)?,
    })
}

/// Grid for the small-gain precondition on the σ domain.
fn small_gain_grid(domain_max: f64) -> Vec<f64> {
    log_grid(domain_max * 1e-6, domain_max, 1000)
}

/// Max-form composite from the small-gain condition χ₁∘χ₂ < id.
pub fn small_gain_compose(c1: &SubsystemCertificate, c2: &SubsystemCertificate, domain_max: f64) -> Result<CompositeLyapunov> {
    let sg = small_gain_holds(&c1.chi, &c2.chi, &small_gain_grid(domain_max))?;
    if !sg.pass {
        return Err(KfunError::SmallGainViolated { r: sg.worst_r, margin: sg.worst_margin }.into());
    }
    let sigma = construct_sigma(&c1.chi, &c2.chi, domain_max)?;
    let sigma_inv = sigma.clone().inverse()?;
    let dsigma = sigma.clone().derivative();
    // ρ̂₁(s) = σ′(σ⁻¹(s)) ρ₁(σ⁻¹(s)), γ̂₁ = σ∘γ₁
    let rho1_hat = ComparisonFn::product(compose_chain(&dsigma, &sigma_inv)?, compose_chain(&c1.rho, &sigma_inv)?)?;
    let gamma1_hat = if c1.gamma.is_zero() { ComparisonFn::zero() } else { compose_chain(&sigma, &c1.gamma)? };
    let gamma = max_of(gamma1_hat, c2.gamma.clone())?;
    let rho = pointwise_extremum(Extremum::Min, &rho1_hat, &c2.rho)?;
    let probe = domain_max * 1e-6;
    let floor_slope = dsigma.eval(sigma_inv.eval(probe));
    let notes = vec![format!(
        "derived rho relies on sigma' near 0; sigma'(sigma^-1({probe:.3e})) = {floor_slope:.6e}, below which the spline's linear extension applies"
    )];
    Ok(CompositeLyapunov { kind: CompositeKind::MaxSmallGain { sigma }, c1: c1.clone(), c2: c2.clone(), rho, gamma, notes })
}

/// Positive floor of ν so ℓ is strictly increasing.
pub const NU_FLOOR: f64 = 1e-9;
/// Envelope grid for ν; beyond its ends ν is extended as a constant.
const NU_GRID: (f64, f64, usize) = (1e-8, 1e8, 1601);
/// Grid on which the ratio γ₁/ρ₂ must stay below the cap as s → 0⁺.
const RATIO_GRID: (f64, f64, usize) = (1e-8, 1e-2, 200);

/// Sum-form composite for the cascade ẋ₁ ∈ F₁(x₁,x₂,u), ẋ₂ ∈ F₂(x₂,u), with
/// both blocks in dissipation form: c1 with coupling gain `chi` (γ₁ on V₂),
/// c2 with input gain γ₂.
pub fn cascade_compose(c1: &SubsystemCertificate, c2: &SubsystemCertificate, m_cap: f64) -> Result<CompositeLyapunov> {
    use ClassTag::*;
    tag("c1.rho", &c1.rho, &[Kinf], false, "class K∞")?;
    tag("c2.rho", &c2.rho, &[Kinf], false, "class K∞")?;
    tag("c1.chi", &c1.chi, &[Kinf], true, "class K∞")?;
    let (g1, r2) = (&c1.chi, &c2.rho);
    let ratio = |s: f64| g1.eval(s) / r2.eval(s);
    for s in log_grid(RATIO_GRID.0, RATIO_GRID.1, RATIO_GRID.2) {
        let r = ratio(s);
        if !(r.is_finite() && r <= m_cap) {
            return Err(ComposeError::RatioUnbounded { s, ratio: r, cap: m_cap });
        }
    }
    let grid = log_grid(NU_GRID.0, NU_GRID.1, NU_GRID.2);
    let raw: Vec<f64> = grid.iter().map(|&s| 4.0 * ratio(s)).collect();
    let mut env = Vec::with_capacity(grid.len());
    let mut run = NU_FLOOR;
    for k in 0..grid.len() {
        // look one knot ahead so the interpolant dominates between knots
        let ahead = raw.get(k + 1).copied().unwrap_or(raw[k]);
        run = run.max(raw[k]).max(ahead);
        env.push(run);
    }
    let nu = if env.iter().all(|&e| e == env[0]) {
        ComparisonFn::constant(env[0])?
    } else {
        let mut knots = vec![[0.0, env[0]]];
        knots.extend(grid.iter().zip(&env).map(|(&s, &e)| [s, e]));
        ComparisonFn::piecewise_linear(knots)?
    };
    let ell = integral_transform(&nu)?;

    // γ(s) = ν(θ(s))·γ₂(s) + γ₁ᵘ(s), θ = ρ₂⁻¹∘2γ₂
    let mut terms = vec![];
    if !c2.gamma.is_zero() {
        let theta = compose_chain(&r2.clone().inverse()?, &c2.gamma.clone().scale(2.0)?)?;
        let nu_theta = compose_chain(&nu, &theta)?;
        terms.push(ComparisonFn::product(nu_theta, c2.gamma.clone())?.with_class(c2.gamma.class()));
    }
    if !c1.gamma.is_zero() {
        terms.push(c1.gamma.clone());
    }
    let gamma = ComparisonFn::sum(terms)?;

    // ρ(s) = min{ρ₁(s/2), κ(½ℓ⁻¹(s))}, κ = γ₁, or ¼νρ₂ when decoupled
    let kappa = if g1.is_zero() {
        ComparisonFn::product(nu.clone(), r2.clone())?.scale(0.25)?.with_class(Kinf)
    } else {
        g1.clone()
    };
    let half = ComparisonFn::linear(0.5)?;
    let rho = pointwise_extremum(
        Extremum::Min,
        &compose_chain(&c1.rho, &half)?,
        &compose_chain(&kappa, &ell.clone().inverse()?.scale(0.5)?)?,
    )?;
    let notes = vec![format!("nu extended as a constant outside [{:.0e}, {:.0e}]", NU_GRID.0, NU_GRID.1)];
    Ok(CompositeLyapunov { kind: CompositeKind::SumCascade { ell, nu }, c1: c1.clone(), c2: c2.clone(), rho, gamma, notes })
}

fn split(x: &Vector, n1: usize) -> (Vector, Vector) {
    (x.rows(0, n1).into_owned(), x.rows(n1, x.len() - n1).into_owned())
}

fn lift(g: &Vector, n1: usize, n: usize, first: bool, scale: f64) -> Vector {
    let mut out = Vector::zeros(n);
    let off = if first { 0 } else { n1 };
    out.rows_mut(off, g.len()).copy_from(&(g * scale));
    out
}

impl CompositeLyapunov {
    pub fn dims(&self) -> (usize, usize) {
        (self.c1.v.dim(), self.c2.v.dim())
    }

    fn check(&self, x1: &Vector, x2: &Vector) -> std::result::Result<(), NonsmoothError> {
        let (n1, n2) = self.dims();
        if x1.len() != n1 || x2.len() != n2 {
            return Err(NonsmoothError::DimensionMismatch(format!("expected ({n1}, {n2}), got ({}, {})", x1.len(), x2.len())));
        }
        Ok(())
    }

    pub fn value_blocks(&self, x1: &Vector, x2: &Vector) -> std::result::Result<f64, NonsmoothError> {
        self.check(x1, x2)?;
        let (v1, v2) = (self.c1.v.value(x1)?, self.c2.v.value(x2)?);
        Ok(match &self.kind {
            CompositeKind::MaxSmallGain { sigma } => sigma.eval(v1).max(v2),
            CompositeKind::SumCascade { ell, .. } => ell.eval(v2) + v1,
        })
    }

    /// Clarke gradient hull of W on the product space.
    pub fn composite_gradient_hull(&self, x1: &Vector, x2: &Vector, tol: f64) -> std::result::Result<GradientHull, NonsmoothError> {
        self.check(x1, x2)?;
        let (n1, n2) = self.dims();
        let n = n1 + n2;
        let (v1, v2) = (self.c1.v.value(x1)?, self.c2.v.value(x2)?);
        let h1 = self.c1.v.gradient_hull(x1, tol)?;
        let h2 = self.c2.v.gradient_hull(x2, tol)?;
        let vertices: Vec<Vector> = match &self.kind {
            CompositeKind::MaxSmallGain { sigma } => {
                let u1 = sigma.eval(v1);
                let w = u1.max(v2);
                let ds = sigma.clone().derivative().eval(v1);
                let first: Vec<Vector> = h1.vertices.iter().map(|g| lift(g, n1, n, true, ds)).collect();
                let second: Vec<Vector> = h2.vertices.iter().map(|h| lift(h, n1, n, false, 1.0)).collect();
                let gap = u1 - v2;
                if gap.abs() <= tol * (1.0 + w.abs()) {
                    first.into_iter().chain(second).collect()
                } else if gap > 0.0 {
                    first
                } else {
                    second
                }
            }
            CompositeKind::SumCascade { ell, .. } => {
                let dl = ell.clone().derivative().eval(v2);
                let mut out = Vec::with_capacity(h1.vertices.len() * h2.vertices.len());
                for g in &h1.vertices {
                    for h in &h2.vertices {
                        out.push(lift(g, n1, n, true, 1.0) + lift(h, n1, n, false, dl));
                    }
                }
                out
            }
        };
        let mut x = Vector::zeros(n);
        x.rows_mut(0, n1).copy_from(x1);
        x.rows_mut(n1, n2).copy_from(x2);
        Ok(GradientHull { x, indices: (0..vertices.len()).collect(), vertices })
    }

    /// Block-wise sandwich (lower, upper) at block norms (|x₁|, |x₂|).
    pub fn sandwich_blocks(&self, n1: f64, n2: f64) -> (f64, f64) {
        let (a, b) = (&self.c1, &self.c2);
        match &self.kind {
            CompositeKind::MaxSmallGain { sigma } => (
                sigma.eval(a.alpha_lo.eval(n1)).max(b.alpha_lo.eval(n2)),
                sigma.eval(a.alpha_hi.eval(n1)).max(b.alpha_hi.eval(n2)),
            ),
            CompositeKind::SumCascade { ell, .. } => (
                ell.eval(b.alpha_lo.eval(n2)) + a.alpha_lo.eval(n1),
                ell.eval(b.alpha_hi.eval(n2)) + a.alpha_hi.eval(n1),
            ),
        }
    }

    /// Sandwich bounds in |x|: one block norm is at least |x|/√2, and each is at most |x|.
    fn alpha_bounds(&self) -> Result<(ComparisonFn, ComparisonFn)> {
        let (a, b) = (&self.c1, &self.c2);
        let (first_lo, first_hi, second_lo, second_hi) = match &self.kind {
            CompositeKind::MaxSmallGain { sigma } => (
                compose_chain(sigma, &a.alpha_lo)?,
                compose_chain(sigma, &a.alpha_hi)?,
                b.alpha_lo.clone(),
                b.alpha_hi.clone(),
            ),
            CompositeKind::SumCascade { ell, .. } => (
                a.alpha_lo.clone(),
                a.alpha_hi.clone(),
                compose_chain(ell, &b.alpha_lo)?,
                compose_chain(ell, &b.alpha_hi)?,
            ),
        };
        let lo = compose_chain(
            &pointwise_extremum(Extremum::Min, &first_lo, &second_lo)?,
            &ComparisonFn::linear(std::f64::consts::FRAC_1_SQRT_2)?,
        )?;
        let hi = match &self.kind {
            CompositeKind::MaxSmallGain { .. } => pointwise_extremum(Extremum::Max, &first_hi, &second_hi)?,
            CompositeKind::SumCascade { .. } => ComparisonFn::sum(vec![first_hi, second_hi])?,
        };
        Ok((lo, hi))
    }

    /// Implication-form certificate in level form (ρ applied to W).
    pub fn implication_certificate(&self) -> Result<ISSCertificate<CompositeLyapunov>> {
        match &self.kind {
            CompositeKind::MaxSmallGain { .. } => {
                let (lo, hi) = self.alpha_bounds()?;
                Ok(ISSCertificate::new(self.clone(), lo, hi, self.rho.clone(), self.gamma.clone(), DecayArgument::Level)?)
            }
            CompositeKind::SumCascade { .. } => Ok(self.dissipation_certificate()?.to_implication(DecayArgument::Level)?),
        }
    }

    /// Dissipation form max Ẇ ≤ −ρ(W) + γ(|u|); cascade composites only.
    pub fn dissipation_certificate(&self) -> Result<DissipationCertificate<CompositeLyapunov>> {
        let (lo, hi) = self.alpha_bounds()?;
        match self.kind {
            CompositeKind::SumCascade { .. } => {
                Ok(DissipationCertificate::new(self.clone(), lo, hi, self.rho.clone(), self.gamma.clone())?)
            }
            CompositeKind::MaxSmallGain { .. } => {
                Err(ComposeError::TagMismatch { name: "kind", expected: "a cascade composite", got: self.rho.class() })
            }
        }
    }
}

impl LyapunovCandidate for CompositeLyapunov {
    fn dim(&self) -> usize {
        let (a, b) = self.dims();
        a + b
    }
    fn value(&self, x: &Vector) -> std::result::Result<f64, NonsmoothError> {
        let (x1, x2) = split(x, self.c1.v.dim());
        self.value_blocks(&x1, &x2)
    }
    fn gradient_hull(&self, x: &Vector, tol: f64) -> std::result::Result<GradientHull, NonsmoothError> {
        if x.len() != LyapunovCandidate::dim(self) {
            return Err(NonsmoothError::DimensionMismatch(format!("expected {}, got {}", LyapunovCandidate::dim(self), x.len())));
        }
        let (x1, x2) = split(x, self.c1.v.dim());
        self.composite_gradient_hull(&x1, &x2, tol)
    }
}
