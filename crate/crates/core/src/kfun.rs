//! Comparison functions: class K, K∞ and positive-definite scalar maps.
//!
//! A [`ComparisonFn`] is an immutable expression tree over a handful of leaf
//! forms (linear, power, knot tables) with lazily evaluated combinators. All
//! algebra needed by the composition theorems (inversion, chaining, pointwise
//! extrema, integral transforms, the small-gain σ) is closed over this tree.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KfunError {
    #[error("negative argument {0}")]
    NegativeArgument(f64),
    #[error("value {y} exceeds the supremum of a bounded class-K function")]
    OutOfRange { y: f64 },
    #[error("function tagged {0:?} is not invertible")]
    NotInvertible(ClassTag),
    #[error("class tags {0:?} and {1:?} cannot be combined here")]
    TagMismatch(ClassTag, ClassTag),
    #[error("integrand is not positive at s = {0}")]
    NonPositiveIntegrand(f64),
    #[error("grid is empty")]
    EmptyGrid,
    #[error("grid must be positive and span at least 4 decades (got {0:.2})")]
    GridTooNarrow(f64),
    #[error("small-gain condition violated at r = {r} (margin {margin})")]
    SmallGainViolated { r: f64, margin: f64 },
    #[error("sigma construction failed after {attempts} refinements (worst margin {margin} at r = {r})")]
    ConstructionFailed { attempts: usize, r: f64, margin: f64 },
    #[error("invalid knot table: {0}")]
    InvalidKnots(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, KfunError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    K,
    Kinf,
    Pd,
    NonDecreasing,
}

impl ClassTag {
    fn is_k(self) -> bool {
        matches!(self, ClassTag::K | ClassTag::Kinf)
    }
    fn is_monotone(self) -> bool {
        !matches!(self, ClassTag::Pd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

/// Cumulative integral at the breakpoints of an integrand, built on first use.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntegralTable(OnceLock<Vec<(f64, f64)>>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Form {
    Zero,
    Constant { c: f64 },
    Linear { c: f64 },
    Power { c: f64, p: f64 },
    /// `(s, value)` pairs, first knot at `s = 0`; linear extension past the last knot.
    PiecewiseLinear { knots: Vec<[f64; 2]> },
    /// `(s, value, slope)` triples evaluated as a C¹ cubic Hermite spline.
    MonotoneHermite { knots: Vec<[f64; 3]> },
    Scale { c: f64, f: Arc<ComparisonFn> },
    Sum { terms: Vec<ComparisonFn> },
    Product { left: Arc<ComparisonFn>, right: Arc<ComparisonFn> },
    Max { left: Arc<ComparisonFn>, right: Arc<ComparisonFn> },
    Min { left: Arc<ComparisonFn>, right: Arc<ComparisonFn> },
    Compose { outer: Arc<ComparisonFn>, inner: Arc<ComparisonFn> },
    Inverse { f: Arc<ComparisonFn> },
    Derivative { f: Arc<ComparisonFn> },
    Integral {
        integrand: Arc<ComparisonFn>,
        #[serde(skip)]
        table: IntegralTable,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonFn {
    #[serde(flatten)]
    pub form: Form,
    pub class: ClassTag,
}

const QUAD_TOL: f64 = 1e-10;
const INVERT_RTOL: f64 = 1e-10;

fn check_positive(name: &str, c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(KfunError::InvalidParameter(format!("{name} must be positive, got {c}")))
    }
}

impl ComparisonFn {
    pub fn zero() -> Self {
        Self { form: Form::Zero, class: ClassTag::NonDecreasing }
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(KfunError::InvalidParameter(format!("constant must be nonnegative, got {c}")));
        }
        Ok(Self { form: Form::Constant { c }, class: ClassTag::NonDecreasing })
    }

    pub fn linear(c: f64) -> Result<Self> {
        check_positive("c", c)?;
        Ok(Self { form: Form::Linear { c }, class: ClassTag::Kinf })
    }

    pub fn power(c: f64, p: f64) -> Result<Self> {
        check_positive("c", c)?;
        check_positive("p", p)?;
        Ok(Self { form: Form::Power { c, p }, class: ClassTag::Kinf })
    }

    /// Piecewise-linear knot table. Tagged K∞ when strictly increasing with
    /// value 0 at 0 (the linear extension makes it unbounded), otherwise
    /// NonDecreasing.
    pub fn piecewise_linear(knots: Vec<[f64; 2]>) -> Result<Self> {
        validate_knots(knots.iter().map(|k| (k[0], k[1])))?;
        let strict = knots.windows(2).all(|w| w[1][1] > w[0][1]);
        let class = if strict && knots[0][1] == 0.0 { ClassTag::Kinf } else { ClassTag::NonDecreasing };
        Ok(Self { form: Form::PiecewiseLinear { knots }, class })
    }

    /// Cubic Hermite table with explicit slopes; slopes must be nonnegative
    /// and satisfy the Fritsch–Carlson bound so the spline is monotone.
    pub fn monotone_hermite(knots: Vec<[f64; 3]>) -> Result<Self> {
        validate_knots(knots.iter().map(|k| (k[0], k[1])))?;
        for w in knots.windows(2) {
            let h = w[1][0] - w[0][0];
            let delta = (w[1][1] - w[0][1]) / h;
            let (d0, d1) = (w[0][2], w[1][2]);
            if d0 < 0.0 || d1 < 0.0 {
                return Err(KfunError::InvalidKnots("negative slope".into()));
            }
            if delta == 0.0 {
                if d0 != 0.0 || d1 != 0.0 {
                    return Err(KfunError::InvalidKnots("nonzero slope on flat segment".into()));
                }
            } else {
                let (a, b) = (d0 / delta, d1 / delta);
                if a * a + b * b > 9.0 * (1.0 + 1e-12) {
                    return Err(KfunError::InvalidKnots(format!("slopes violate monotonicity bound at s = {}", w[0][0])));
                }
            }
        }
        let last = knots[knots.len() - 1];
        let strict = knots.windows(2).all(|w| w[1][1] > w[0][1]) && last[2] > 0.0;
        let class = if strict && knots[0][1] == 0.0 { ClassTag::Kinf } else { ClassTag::NonDecreasing };
        Ok(Self { form: Form::MonotoneHermite { knots }, class })
    }

    pub fn scale(self, c: f64) -> Result<Self> {
        check_positive("scale", c)?;
        let class = self.class;
        Ok(Self { form: Form::Scale { c, f: Arc::new(self) }, class })
    }

    pub fn sum(terms: Vec<ComparisonFn>) -> Result<Self> {
        if terms.is_empty() {
            return Ok(Self::zero());
        }
        let tags: Vec<ClassTag> = terms.iter().map(|t| t.class).collect();
        let positive_at_zero = terms.iter().any(|t| t.eval(0.0) > 0.0);
        let class = if tags.iter().all(|t| t.is_monotone()) {
            if positive_at_zero {
                ClassTag::NonDecreasing
            } else if tags.contains(&ClassTag::Kinf) {
                ClassTag::Kinf
            } else if tags.contains(&ClassTag::K) {
                ClassTag::K
            } else {
                ClassTag::NonDecreasing
            }
        } else {
            ClassTag::Pd
        };
        Ok(Self { form: Form::Sum { terms }, class })
    }

    pub fn product(left: ComparisonFn, right: ComparisonFn) -> Result<Self> {
        let class = match (left.class, right.class) {
            (a, b) if a.is_k() && b.is_k() => {
                if a == ClassTag::Kinf && b == ClassTag::Kinf {
                    ClassTag::Kinf
                } else {
                    ClassTag::K
                }
            }
            (a, b) if a.is_monotone() && b.is_monotone() => ClassTag::NonDecreasing,
            // vanishing-at-0 factor times a factor positive on (0, ∞)
            (a, b) if (a == ClassTag::Pd || a.is_k()) && (b == ClassTag::Pd || b.is_k()) => ClassTag::Pd,
            (a, b) => return Err(KfunError::TagMismatch(a, b)),
        };
        Ok(Self { form: Form::Product { left: Arc::new(left), right: Arc::new(right) }, class })
    }

    /// ℓ⁻¹-style functional inverse as a lazy node.
    pub fn inverse(self) -> Result<Self> {
        if !self.class.is_k() {
            return Err(KfunError::NotInvertible(self.class));
        }
        let class = self.class;
        Ok(Self { form: Form::Inverse { f: Arc::new(self) }, class })
    }

    /// The derivative s ↦ f′(s) as a lazy node (tagged PD; callers that know
    /// more may retag).
    pub fn derivative(self) -> Self {
        Self { form: Form::Derivative { f: Arc::new(self) }, class: ClassTag::Pd }
    }

    pub fn with_class(mut self, class: ClassTag) -> Self {
        self.class = class;
        self
    }

    pub fn class(&self) -> ClassTag {
        self.class
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.form, Form::Zero)
    }

    /// Value at `s`; negative arguments are clamped to 0 (use
    /// [`eval_and_derivative`] for the checked variant).
    pub fn eval(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match &self.form {
            Form::Zero => 0.0,
            Form::Constant { c } => *c,
            Form::Linear { c } => c * s,
            Form::Power { c, p } => c * s.powf(*p),
            Form::PiecewiseLinear { knots } => pwl_eval(knots, s).0,
            Form::MonotoneHermite { knots } => hermite_eval(knots, s).0,
            Form::Scale { c, f } => c * f.eval(s),
            Form::Sum { terms } => terms.iter().map(|t| t.eval(s)).sum(),
            Form::Product { left, right } => left.eval(s) * right.eval(s),
            Form::Max { left, right } => left.eval(s).max(right.eval(s)),
            Form::Min { left, right } => left.eval(s).min(right.eval(s)),
            Form::Compose { outer, inner } => outer.eval(inner.eval(s)),
            Form::Inverse { f } => f.invert_unchecked(s, 1.0).unwrap_or(f64::INFINITY),
            Form::Derivative { f } => f.deriv(s),
            Form::Integral { integrand, table } => integral_eval(integrand, table, s),
        }
    }

    /// Right derivative at `s` (one-sided at kinks).
    fn deriv(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match &self.form {
            Form::Zero | Form::Constant { .. } => 0.0,
            Form::Linear { c } => *c,
            Form::Power { c, p } => {
                if s == 0.0 {
                    if *p > 1.0 {
                        0.0
                    } else if *p == 1.0 {
                        *c
                    } else {
                        f64::INFINITY
                    }
                } else {
                    c * p * s.powf(p - 1.0)
                }
            }
            Form::PiecewiseLinear { knots } => pwl_eval(knots, s).1,
            Form::MonotoneHermite { knots } => hermite_eval(knots, s).1,
            Form::Scale { c, f } => c * f.deriv(s),
            Form::Sum { terms } => terms.iter().map(|t| t.deriv(s)).sum(),
            Form::Product { left, right } => left.deriv(s) * right.eval(s) + left.eval(s) * right.deriv(s),
            Form::Max { left, right } => {
                let (a, b) = (left.eval(s), right.eval(s));
                if a > b {
                    left.deriv(s)
                } else if b > a {
                    right.deriv(s)
                } else {
                    left.deriv(s).max(right.deriv(s))
                }
            }
            Form::Min { left, right } => {
                let (a, b) = (left.eval(s), right.eval(s));
                if a < b {
                    left.deriv(s)
                } else if b < a {
                    right.deriv(s)
                } else {
                    left.deriv(s).min(right.deriv(s))
                }
            }
            Form::Compose { outer, inner } => outer.deriv(inner.eval(s)) * inner.deriv(s),
            Form::Inverse { f } => {
                let x = f.invert_unchecked(s, 1.0).unwrap_or(f64::INFINITY);
                1.0 / f.deriv(x)
            }
            Form::Derivative { f } => {
                let h = 1e-6 * s.max(1.0);
                if s >= h {
                    (f.deriv(s + h) - f.deriv(s - h)) / (2.0 * h)
                } else {
                    (f.deriv(s + h) - f.deriv(s)) / h
                }
            }
            Form::Integral { integrand, .. } => integrand.eval(s),
        }
    }

    /// Value and (right) derivative at `s ≥ 0`.
    pub fn eval_and_derivative(&self, s: f64) -> Result<(f64, f64)> {
        if s < 0.0 || s.is_nan() {
            return Err(KfunError::NegativeArgument(s));
        }
        Ok((self.eval(s), self.deriv(s)))
    }

    /// Smallest-effort preimage of `y`: analytic where possible, otherwise
    /// monotone bisection on a doubling bracket starting at `s_hint`.
    pub fn invert(&self, y: f64, s_hint: f64) -> Result<f64> {
        if !self.class.is_k() {
            return Err(KfunError::NotInvertible(self.class));
        }
        if y < 0.0 || y.is_nan() {
            return Err(KfunError::NegativeArgument(y));
        }
        self.invert_unchecked(y, s_hint)
    }

    fn invert_unchecked(&self, y: f64, s_hint: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        match &self.form {
            Form::Linear { c } => return Ok(y / c),
            Form::Power { c, p } => return Ok((y / c).powf(1.0 / p)),
            Form::Scale { c, f } => return f.invert_unchecked(y / c, s_hint),
            Form::Compose { outer, inner } if outer.class.is_k() && inner.class.is_k() => {
                let mid = outer.invert_unchecked(y, s_hint)?;
                return inner.invert_unchecked(mid, s_hint);
            }
            Form::Inverse { f } => return Ok(f.eval(y)),
            _ => {}
        }
        let tol = INVERT_RTOL * y.max(1.0);
        let mut lo = 0.0;
        let mut hi = if s_hint.is_finite() && s_hint > 0.0 { s_hint } else { 1.0 };
        while self.eval(hi) < y {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return Err(KfunError::OutOfRange { y });
            }
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = self.eval(mid);
            if (v - y).abs() <= 0.5 * tol {
                return Ok(mid);
            }
            if v < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Interval collapsed; return whichever end is closer.
        Ok(if (self.eval(lo) - y).abs() <= (self.eval(hi) - y).abs() { lo } else { hi })
    }

    /// Lazy supremum estimate: value at a large argument.
    pub fn unbounded_beyond(&self, bound: f64) -> bool {
        let mut s = 1.0;
        while s < 1e300 {
            if self.eval(s) > bound {
                return true;
            }
            s *= 1e3;
        }
        false
    }
}

fn validate_knots(knots: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let pts: Vec<(f64, f64)> = knots.collect();
    if pts.len() < 2 {
        return Err(KfunError::InvalidKnots("need at least two knots".into()));
    }
    if pts[0].0 != 0.0 {
        return Err(KfunError::InvalidKnots("first knot must sit at s = 0".into()));
    }
    for w in pts.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(KfunError::InvalidKnots(format!("abscissae not strictly increasing at {}", w[1].0)));
        }
        if w[1].1 < w[0].1 {
            return Err(KfunError::InvalidKnots(format!("values decrease at s = {}", w[1].0)));
        }
    }
    if pts.iter().any(|p| !p.0.is_finite() || !p.1.is_finite() || p.1 < 0.0) {
        return Err(KfunError::InvalidKnots("non-finite or negative entry".into()));
    }
    Ok(())
}

/// Index of the segment `[k[i], k[i+1])` containing `s`, clamped to the last segment.
fn segment<T>(knots: &[T], s: f64, abscissa: impl Fn(&T) -> f64) -> usize {
    let n = knots.len();
    let idx = knots.partition_point(|k| abscissa(k) <= s);
    idx.saturating_sub(1).min(n - 2)
}

fn pwl_eval(knots: &[[f64; 2]], s: f64) -> (f64, f64) {
    let i = segment(knots, s, |k| k[0]);
    let (a, b) = (knots[i], knots[i + 1]);
    let slope = (b[1] - a[1]) / (b[0] - a[0]);
    (a[1] + slope * (s - a[0]), slope)
}

fn hermite_eval(knots: &[[f64; 3]], s: f64) -> (f64, f64) {
    let last = knots[knots.len() - 1];
    if s >= last[0] {
        return (last[1] + last[2] * (s - last[0]), last[2]);
    }
    let i = segment(knots, s, |k| k[0]);
    let (a, b) = (knots[i], knots[i + 1]);
    let h = b[0] - a[0];
    let t = (s - a[0]) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * a[1] + h10 * h * a[2] + h01 * b[1] + h11 * h * b[2];
    let d00 = (6.0 * t2 - 6.0 * t) / h;
    let d10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d01 = (-6.0 * t2 + 6.0 * t) / h;
    let d11 = 3.0 * t2 - 2.0 * t;
    let d = d00 * a[1] + d10 * a[2] + d01 * b[1] + d11 * b[2];
    (v, d)
}

// ---------------------------------------------------------------------------
// Quadrature

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    adaptive(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

fn breakpoints(f: &ComparisonFn) -> Vec<f64> {
    match &f.form {
        Form::PiecewiseLinear { knots } => knots.iter().map(|k| k[0]).collect(),
        Form::MonotoneHermite { knots } => knots.iter().map(|k| k[0]).collect(),
        Form::Scale { f, .. } => breakpoints(f),
        _ => vec![0.0],
    }
}

fn integral_eval(integrand: &ComparisonFn, table: &IntegralTable, s: f64) -> f64 {
    let cum = table.0.get_or_init(|| {
        let bps = breakpoints(integrand);
        let f = |r: f64| integrand.eval(r);
        let mut out = vec![(0.0, 0.0)];
        let mut acc = 0.0;
        for w in bps.windows(2) {
            acc += integrate(&f, w[0], w[1], QUAD_TOL / bps.len() as f64);
            out.push((w[1], acc));
        }
        out
    });
    let idx = cum.partition_point(|p| p.0 <= s).saturating_sub(1);
    let (s0, v0) = cum[idx];
    let f = |r: f64| integrand.eval(r);
    v0 + integrate(&f, s0, s, QUAD_TOL)
}

// ---------------------------------------------------------------------------
// Operations

/// `outer ∘ inner` with class tags propagated.
pub fn compose_chain(outer: &ComparisonFn, inner: &ComparisonFn) -> Result<ComparisonFn> {
    use ClassTag::*;
    let class = match (outer.class, inner.class) {
        (Kinf, Kinf) => Kinf,
        (o, i) if o.is_k() && i.is_k() => K,
        (Pd, i) if i.is_k() => Pd,
        (o, Pd) if o.is_k() => Pd,
        (Pd, Pd) => Pd,
        (o, i) if o.is_monotone() && i.is_monotone() => NonDecreasing,
        (o, i) => return Err(KfunError::TagMismatch(o, i)),
    };
    Ok(ComparisonFn {
        form: Form::Compose { outer: Arc::new(outer.clone()), inner: Arc::new(inner.clone()) },
        class,
    })
}

/// Pointwise max or min of two functions of compatible class.
pub fn pointwise_extremum(kind: Extremum, f: &ComparisonFn, g: &ComparisonFn) -> Result<ComparisonFn> {
    use ClassTag::*;
    let class = match (f.class, g.class) {
        (a, b) if a.is_k() && b.is_k() => match kind {
            Extremum::Max if a == Kinf || b == Kinf => Kinf,
            Extremum::Min if a == Kinf && b == Kinf => Kinf,
            _ => K,
        },
        (a, b) if a != NonDecreasing && b != NonDecreasing => Pd,
        (a, b) if a.is_monotone() && b.is_monotone() => NonDecreasing,
        (a, b) => return Err(KfunError::TagMismatch(a, b)),
    };
    let (left, right) = (Arc::new(f.clone()), Arc::new(g.clone()));
    let form = match kind {
        Extremum::Max => Form::Max { left, right },
        Extremum::Min => Form::Min { left, right },
    };
    Ok(ComparisonFn { form, class })
}

/// ℓ(s) = ∫₀ˢ ν(r) dr for a nondecreasing integrand that is positive on (0, ∞).
pub fn integral_transform(nu: &ComparisonFn) -> Result<ComparisonFn> {
    if !nu.class.is_monotone() {
        return Err(KfunError::TagMismatch(nu.class, ClassTag::NonDecreasing));
    }
    // nondecreasing ⇒ checking just above 0 suffices for positivity
    let probe = 1e-12;
    if !(nu.eval(probe) > 0.0) {
        return Err(KfunError::NonPositiveIntegrand(probe));
    }
    Ok(ComparisonFn {
        form: Form::Integral { integrand: Arc::new(nu.clone()), table: IntegralTable::default() },
        class: ClassTag::Kinf,
    })
}

/// Outcome of a grid small-gain test.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallGainResult {
    pub pass: bool,
    pub worst_margin: f64,
    pub worst_r: f64,
}

fn grid_span_ok(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(KfunError::EmptyGrid);
    }
    let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo > 0.0) {
        return Err(KfunError::GridTooNarrow(f64::NAN));
    }
    let decades = (hi / lo).log10();
    if decades < 4.0 - 1e-9 {
        return Err(KfunError::GridTooNarrow(decades));
    }
    Ok(())
}

fn require_k_or_zero(f: &ComparisonFn) -> Result<()> {
    if f.class.is_k() || f.is_zero() {
        Ok(())
    } else {
        Err(KfunError::TagMismatch(f.class, ClassTag::K))
    }
}

/// Checks χ₁(χ₂(r)) < r on every grid point.
pub fn small_gain_holds(chi1: &ComparisonFn, chi2: &ComparisonFn, grid: &[f64]) -> Result<SmallGainResult> {
    require_k_or_zero(chi1)?;
    require_k_or_zero(chi2)?;
    grid_span_ok(grid)?;
    let mut worst = SmallGainResult { pass: true, worst_margin: f64::INFINITY, worst_r: f64::NAN };
    for &r in grid {
        let m = r - chi1.eval(chi2.eval(r));
        if m < worst.worst_margin {
            worst.worst_margin = m;
            worst.worst_r = r;
        }
        if !(m > 0.0) {
            worst.pass = false;
        }
    }
    Ok(worst)
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

pub const SIGMA_KNOTS: usize = 400;
pub const SIGMA_VALIDATION_POINTS: usize = 1000;
const SIGMA_DECADES: f64 = 6.0;
const SIGMA_MAX_REFINE: usize = 20;
const SLOPE_FLOOR: f64 = 1e-9;

/// The validation grid used by [`construct_sigma`].
pub fn sigma_validation_grid(domain_max: f64) -> Vec<f64> {
    log_grid(domain_max * 10f64.powf(-SIGMA_DECADES), domain_max, SIGMA_VALIDATION_POINTS)
}

/// Fritsch–Carlson slopes for monotone data.
fn monotone_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
    let mut d = vec![0.0; n];
    d[0] = delta[0];
    d[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        d[i] = if delta[i - 1] * delta[i] <= 0.0 {
            0.0
        } else {
            // harmonic mean keeps slopes inside the monotone region
            let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
            let (w1, w2) = (2.0 * h1 + h0, h1 + 2.0 * h0);
            (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i])
        };
    }
    for i in 0..n - 1 {
        if delta[i] == 0.0 {
            d[i] = 0.0;
            d[i + 1] = 0.0;
            continue;
        }
        let (a, b) = (d[i] / delta[i], d[i + 1] / delta[i]);
        let r2 = a * a + b * b;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            d[i] = tau * a * delta[i];
            d[i + 1] = tau * b * delta[i];
        }
    }
    d
}

/// Strictly increasing copy of `ys` on the abscissae `xs`: running maximum
/// plus a minimal positive slope.
fn isotonic(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = ys.to_vec();
    for i in 1..out.len() {
        let floor = out[i - 1] + SLOPE_FLOOR * (xs[i] - xs[i - 1]);
        if out[i] < floor {
            out[i] = floor;
        }
    }
    out
}

/// Fits a C¹ K∞ function σ with χ₂(r) < σ(r) and χ₁(σ(r)) < r on
/// `[domain_max·1e-6, domain_max]`, extended linearly beyond.
pub fn construct_sigma(chi1: &ComparisonFn, chi2: &ComparisonFn, domain_max: f64) -> Result<ComparisonFn> {
    check_positive("domain_max", domain_max)?;
    let vgrid = sigma_validation_grid(domain_max);
    let sg = small_gain_holds(chi1, chi2, &vgrid)?;
    if !sg.pass {
        return Err(KfunError::SmallGainViolated { r: sg.worst_r, margin: sg.worst_margin });
    }
    if chi1.is_zero() {
        // Any σ above χ₂ works; keep it exact instead of interpolating.
        let sigma = ComparisonFn::sum(vec![chi2.clone().scale(2.0)?, ComparisonFn::linear(1e-6)?])?;
        return Ok(sigma.with_class(ClassTag::Kinf));
    }
    let kgrid = log_grid(domain_max * 10f64.powf(-SIGMA_DECADES), domain_max, SIGMA_KNOTS);
    let lower: Vec<f64> = kgrid.iter().map(|&r| chi2.eval(r)).collect();
    let upper: Vec<f64> = kgrid.iter().map(|&r| chi1.invert(r, r)).collect::<Result<_>>()?;
    // position of σ inside (lower, upper) on a log scale, per knot
    let mut theta = vec![0.5; kgrid.len()];
    let mut last_fail = (0usize, f64::NAN, f64::NAN);
    for attempt in 0..=SIGMA_MAX_REFINE {
        let cand: Vec<f64> = (0..kgrid.len())
            .map(|i| {
                let (l, u) = (lower[i].max(f64::MIN_POSITIVE), upper[i]);
                (l.ln() * (1.0 - theta[i]) + u.ln() * theta[i]).exp()
            })
            .collect();
        let mut xs = vec![0.0];
        xs.extend_from_slice(&kgrid);
        let mut ys = vec![0.0];
        ys.extend(cand);
        let ys = isotonic(&xs, &ys);
        let ds = monotone_slopes(&xs, &ys);
        let knots: Vec<[f64; 3]> = (0..xs.len()).map(|i| [xs[i], ys[i], ds[i].max(0.0)]).collect();
        let sigma = ComparisonFn::monotone_hermite(knots)?;
        let mut failing: Vec<(f64, bool)> = Vec::new();
        let mut worst = (f64::INFINITY, f64::NAN);
        for &r in &vgrid {
            let s = sigma.eval(r);
            let m_lo = (s - chi2.eval(r)) / r;
            let m_hi = (r - chi1.eval(s)) / r;
            let m = m_lo.min(m_hi);
            if m < worst.0 {
                worst = (m, r);
            }
            if !(m_lo > 0.0) {
                failing.push((r, true));
            } else if !(m_hi > 0.0) {
                failing.push((r, false));
            }
        }
        let slope_ok = sigma.deriv(domain_max) > 0.0 && sigma.deriv(0.0) > 0.0;
        if failing.is_empty() && slope_ok {
            return Ok(sigma.with_class(ClassTag::Kinf));
        }
        last_fail = (attempt, worst.1, worst.0);
        // Move the offending knots (and their neighbours) away from the
        // violated bound, halving the distance each round.
        for (r, too_low) in failing {
            let k = kgrid.partition_point(|&x| x < r);
            for j in k.saturating_sub(2)..(k + 2).min(kgrid.len()) {
                theta[j] = if too_low { 0.5 * (theta[j] + 1.0) } else { 0.5 * theta[j] };
            }
        }
    }
    Err(KfunError::ConstructionFailed { attempts: last_fail.0, r: last_fail.1, margin: last_fail.2 })
}
