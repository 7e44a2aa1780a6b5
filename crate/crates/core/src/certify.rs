//! Sampled verification of ISS-Lyapunov conditions.
//!
//! Every check draws a deterministic sample set from a [`SamplePlan`],
//! evaluates per-sample margins in parallel, and reduces them in sample
//! order, so reports depend only on the plan (not on thread count).

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::kfun::{compose_chain, ClassTag, ComparisonFn, KfunError};
use crate::nonsmooth::{clarke_interval_raw, lie_interval_raw, DerivativeInterval, GradientHull, NonsmoothError, PiecewiseC1Fn};
use crate::partition::{BoxBounds, PartitionError, ProperPartition, ScalarField};
use crate::switched::{InputSignal, SwitchedError, SwitchedSystem, Trajectory};
use crate::Vector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error(transparent)]
    Kfun(#[from] KfunError),
    #[error(transparent)]
    Nonsmooth(#[from] NonsmoothError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Switched(#[from] SwitchedError),
    #[error("{name} must be {expected}, got {got:?}")]
    TagMismatch { name: &'static str, expected: &'static str, got: ClassTag },
    #[error("aligned variant requires the candidate's partition to equal the system's")]
    PartitionMismatch,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid sample plan: {0}")]
    InvalidPlan(String),
}

pub type Result<T> = std::result::Result<T, CertifyError>;

/// Anything with values and a Clarke gradient hull.
pub trait LyapunovCandidate: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> std::result::Result<f64, NonsmoothError>;
    fn gradient_hull(&self, x: &Vector, tol: f64) -> std::result::Result<GradientHull, NonsmoothError>;
}

impl LyapunovCandidate for PiecewiseC1Fn {
    fn dim(&self) -> usize {
        PiecewiseC1Fn::dim(self)
    }
    fn value(&self, x: &Vector) -> std::result::Result<f64, NonsmoothError> {
        PiecewiseC1Fn::value(self, x)
    }
    fn gradient_hull(&self, x: &Vector, tol: f64) -> std::result::Result<GradientHull, NonsmoothError> {
        PiecewiseC1Fn::gradient_hull(self, x, tol)
    }
}

/// Which argument the decay rate ρ takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayArgument {
    /// −ρ(|x|)
    StateNorm,
    /// −ρ(V(x))
    Level,
}

/// Implication-form certificate: α̲(|x|) ≤ V(x) ≤ ᾱ(|x|) and
/// V(x) > γ(|u|) ⇒ max V̄̇(x,u) ≤ −ρ(·).
#[derive(Debug, Clone)]
pub struct ISSCertificate<V = PiecewiseC1Fn> {
    pub v: V,
    pub alpha_lo: ComparisonFn,
    pub alpha_hi: ComparisonFn,
    pub rho: ComparisonFn,
    pub gamma: ComparisonFn,
    pub decay: DecayArgument,
}

fn require(name: &'static str, f: &ComparisonFn, ok: &[ClassTag], expected: &'static str) -> Result<()> {
    if ok.contains(&f.class()) || (expected == "class K" && f.is_zero()) {
        Ok(())
    } else {
        Err(CertifyError::TagMismatch { name, expected, got: f.class() })
    }
}

impl<V: LyapunovCandidate> ISSCertificate<V> {
    pub fn new(
        v: V,
        alpha_lo: ComparisonFn,
        alpha_hi: ComparisonFn,
        rho: ComparisonFn,
        gamma: ComparisonFn,
        decay: DecayArgument,
    ) -> Result<Self> {
        use ClassTag::*;
        require("alpha_lo", &alpha_lo, &[Kinf], "class K∞")?;
        require("alpha_hi", &alpha_hi, &[Kinf], "class K∞")?;
        require("rho", &rho, &[Pd, K, Kinf], "positive definite")?;
        require("gamma", &gamma, &[K, Kinf], "class K")?;
        Ok(Self { v, alpha_lo, alpha_hi, rho, gamma, decay })
    }

    fn rho_at(&self, x: &Vector, vx: f64) -> f64 {
        match self.decay {
            DecayArgument::StateNorm => self.rho.eval(x.norm()),
            DecayArgument::Level => self.rho.eval(vx),
        }
    }
}

/// Dissipation-form certificate: max V̄̇(x,u) ≤ −ρ̂(·) + γ̂(|u|).
#[derive(Debug, Clone)]
pub struct DissipationCertificate<V = PiecewiseC1Fn> {
    pub v: V,
    pub alpha_lo: ComparisonFn,
    pub alpha_hi: ComparisonFn,
    pub rho_hat: ComparisonFn,
    pub gamma_hat: ComparisonFn,
}

impl<V: LyapunovCandidate + Clone> DissipationCertificate<V> {
    pub fn new(v: V, alpha_lo: ComparisonFn, alpha_hi: ComparisonFn, rho_hat: ComparisonFn, gamma_hat: ComparisonFn) -> Result<Self> {
        use ClassTag::*;
        require("alpha_lo", &alpha_lo, &[Kinf], "class K∞")?;
        require("alpha_hi", &alpha_hi, &[Kinf], "class K∞")?;
        require("rho_hat", &rho_hat, &[Kinf], "class K∞")?;
        require("gamma_hat", &gamma_hat, &[K, Kinf], "class K")?;
        Ok(Self { v, alpha_lo, alpha_hi, rho_hat, gamma_hat })
    }

    /// Implication form: ρ = ½ρ̂ and γ = ᾱ∘ρ̂⁻¹∘2γ̂ for the state form
    /// (the ᾱ turns the state-norm threshold into a level threshold), or
    /// γ = ρ̂⁻¹∘2γ̂ for the level form.
    pub fn to_implication(&self, form: DecayArgument) -> Result<ISSCertificate<V>> {
        let rho = self.rho_hat.clone().scale(0.5)?;
        let inv = self.rho_hat.clone().inverse()?;
        let two_gamma = self.gamma_hat.clone().scale(2.0)?;
        let threshold = compose_chain(&inv, &two_gamma)?;
        let gamma = match form {
            DecayArgument::StateNorm => compose_chain(&self.alpha_hi, &threshold)?,
            DecayArgument::Level => threshold,
        };
        ISSCertificate::new(self.v.clone(), self.alpha_lo.clone(), self.alpha_hi.clone(), rho, gamma, form)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub state_box: BoxBounds,
    pub n_state: usize,
    pub input_radius: f64,
    pub n_input: usize,
    /// Region pairs of the system partition whose common boundary is sampled.
    pub surface_pairs: Vec<(usize, usize)>,
    pub n_surface: usize,
    pub seed: u64,
}

impl SamplePlan {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.n_state == 0 || self.n_input == 0 {
            return Err(CertifyError::InvalidPlan("sample counts must be at least 1".into()));
        }
        if !(self.input_radius >= 0.0) {
            return Err(CertifyError::InvalidPlan("input radius must be nonnegative".into()));
        }
        if self.state_box.dim() != dim {
            return Err(CertifyError::InvalidPlan(format!("box has dim {}, system {dim}", self.state_box.dim())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: f64,
    /// Derivative interval endpoints (`None` for Empty or bound checks).
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub checked: usize,
    /// Samples where the implication's premise held (or the bound applied).
    pub active: usize,
    pub failures: usize,
    pub empty_lie: usize,
    /// +∞ when no sample was active.
    pub worst_margin: f64,
    pub worst: Option<Witness>,
    /// First few failing samples in sample order.
    pub failing: Vec<Witness>,
}

const MAX_FAILING: usize = 5;

impl Default for ConditionSummary {
    fn default() -> Self {
        Self { checked: 0, active: 0, failures: 0, empty_lie: 0, worst_margin: f64::INFINITY, worst: None, failing: vec![] }
    }
}

impl ConditionSummary {
    fn absorb(&mut self, o: Outcome) {
        self.checked += 1;
        let Outcome::Active { witness, empty } = o else { return };
        self.active += 1;
        if empty {
            self.empty_lie += 1;
        }
        if !(witness.margin >= 0.0) {
            self.failures += 1;
            if self.failing.len() < MAX_FAILING {
                self.failing.push(witness.clone());
            }
        }
        if witness.margin < self.worst_margin || self.worst.is_none() {
            self.worst_margin = self.worst_margin.min(witness.margin);
            self.worst = Some(witness);
        }
    }

    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub pass: bool,
    pub conditions: BTreeMap<String, ConditionSummary>,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn from_conditions(conditions: BTreeMap<String, ConditionSummary>) -> Self {
        let pass = conditions.values().all(|c| c.pass());
        Self { pass, conditions, metrics: BTreeMap::new(), notes: vec![] }
    }

    pub fn with_metrics(mut self, metrics: BTreeMap<String, f64>) -> Self {
        self.metrics = metrics;
        self
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionSummary> {
        self.conditions.get(name)
    }
}

#[derive(Debug, Clone)]
enum Outcome {
    Vacuous,
    Active { witness: Witness, empty: bool },
}

/// Gradient/hull activation slack at sampled points.
pub const ACTIVE_TOL: f64 = 1e-8;
/// Relative roundoff slack on the sandwich bounds, which are often tight.
pub const BOUND_TOL: f64 = 1e-12;
const ORIGIN_EXCLUSION: f64 = 1e-6;

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let cap = std::env::var("NSISS_THREADS").ok().and_then(|s| s.parse::<usize>().ok()).filter(|&n| n > 0);
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cap {
            b = b.num_threads(n);
        }
        b.build().expect("thread pool")
    })
}

fn unit_ball_direction(rng: &mut ChaCha8Rng, m: usize) -> Vector {
    loop {
        let v = Vector::from_iterator(m, (0..m).map(|_| rng.gen_range(-1.0..=1.0)));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

#[derive(Debug, Clone)]
struct Sample {
    x: Vector,
    u: Vector,
    on_surface: bool,
}

fn draw_samples(partition: &ProperPartition, input_dim: usize, plan: &SamplePlan) -> Result<Vec<Sample>> {
    plan.validate(partition.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let draw_u = |rng: &mut ChaCha8Rng| -> Vector {
        if input_dim == 0 || plan.input_radius == 0.0 {
            return Vector::zeros(input_dim);
        }
        let r = plan.input_radius * rng.gen::<f64>();
        unit_ball_direction(rng, input_dim) * r
    };
    let mut out = Vec::with_capacity(plan.n_state * plan.n_input);
    let mut drawn = 0;
    while drawn < plan.n_state {
        let x = plan.state_box.sample(&mut rng);
        if x.norm() < ORIGIN_EXCLUSION {
            continue;
        }
        drawn += 1;
        for _ in 0..plan.n_input {
            let u = draw_u(&mut rng);
            out.push(Sample { x: x.clone(), u, on_surface: false });
        }
    }
    for (k, &(i, j)) in plan.surface_pairs.iter().enumerate() {
        let seed = plan.seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k as u64 + 1));
        let pts = partition.surface_sample(i, j, plan.n_surface, &plan.state_box, seed)?;
        for x in pts {
            if x.norm() < ORIGIN_EXCLUSION {
                continue;
            }
            for _ in 0..plan.n_input {
                let u = draw_u(&mut rng);
                out.push(Sample { x: x.clone(), u, on_surface: true });
            }
        }
    }
    Ok(out)
}

fn witness(s: &Sample, v: f64, iv: Option<DerivativeInterval>, margin: f64) -> Witness {
    let (lo, hi) = match iv {
        Some(DerivativeInterval::Interval { lo, hi }) => (Some(lo), Some(hi)),
        _ => (None, None),
    };
    Witness { x: s.x.as_slice().to_vec(), u: s.u.as_slice().to_vec(), v, lo, hi, margin }
}

/// Per-sample evaluation of named conditions, reduced in sample order.
fn evaluate<F>(samples: &[Sample], names: &[&str], f: F) -> Result<BTreeMap<String, ConditionSummary>>
where
    F: Fn(&Sample) -> Result<Vec<Option<Outcome>>> + Sync + Send,
{
    let results: Vec<Result<Vec<Option<Outcome>>>> = pool().install(|| samples.par_iter().map(&f).collect());
    let mut summaries: Vec<ConditionSummary> = names.iter().map(|_| ConditionSummary::default()).collect();
    for r in results {
        for (k, o) in r?.into_iter().enumerate() {
            if let Some(o) = o {
                summaries[k].absorb(o);
            }
        }
    }
    Ok(names.iter().map(|s| s.to_string()).zip(summaries).collect())
}

fn bounds_outcome<V: LyapunovCandidate>(c: &ISSCertificate<V>, s: &Sample, v: f64) -> Outcome {
    bound_margin(&c.alpha_lo, &c.alpha_hi, s, v)
}

fn bound_margin(alo: &ComparisonFn, ahi: &ComparisonFn, s: &Sample, v: f64) -> Outcome {
    let nx = s.x.norm();
    let slack = BOUND_TOL * (1.0 + v.abs());
    let m = (v - alo.eval(nx)).min(ahi.eval(nx) - v) + slack;
    Outcome::Active { witness: witness(s, v, None, m), empty: false }
}

fn decrease_outcome(s: &Sample, v: f64, iv: DerivativeInterval, rate: f64) -> Outcome {
    let m = -rate - iv.max();
    Outcome::Active { witness: witness(s, v, Some(iv), m), empty: iv.is_empty() }
}

fn check_dims<V: LyapunovCandidate>(sys: &SwitchedSystem, v: &V) -> Result<()> {
    if sys.dim() != v.dim() {
        return Err(CertifyError::DimensionMismatch(format!("system dim {} vs candidate dim {}", sys.dim(), v.dim())));
    }
    Ok(())
}

/// Sandwich bounds and the Lie-derivative decrease condition at every sample.
pub fn check_main_iss<V: LyapunovCandidate>(sys: &SwitchedSystem, c: &ISSCertificate<V>, plan: &SamplePlan) -> Result<CheckReport> {
    check_dims(sys, &c.v)?;
    let samples = draw_samples(sys.partition(), sys.input_dim(), plan)?;
    let conds = evaluate(&samples, &["bounds", "decrease"], |s| {
        let v = c.v.value(&s.x)?;
        let b = bounds_outcome(c, s, v);
        if !(v > c.gamma.eval(s.u.norm())) {
            return Ok(vec![Some(b), Some(Outcome::Vacuous)]);
        }
        let hull = sys.hull_vertices(&s.x, &s.u, ACTIVE_TOL)?;
        let g = c.v.gradient_hull(&s.x, ACTIVE_TOL)?;
        let iv = lie_interval_raw(&g.vertices, &hull.vertices)?;
        Ok(vec![Some(b), Some(decrease_outcome(s, v, iv, c.rho_at(&s.x, v)))])
    })?;
    Ok(CheckReport::from_conditions(conds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchedVariant {
    /// Candidate partition Y may differ from the system's X.
    General,
    /// Y = X.
    Aligned,
    /// Surface condition via the Clarke interval instead of the Lie interval.
    Clarke,
}

fn same_field(a: &ScalarField, b: &ScalarField) -> bool {
    match (a, b) {
        (ScalarField::Linear { v: x }, ScalarField::Linear { v: y }) => x == y,
        (ScalarField::Quadratic { q: x }, ScalarField::Quadratic { q: y }) => x == y,
        (ScalarField::Callback { f: x, .. }, ScalarField::Callback { f: y, .. }) => std::sync::Arc::ptr_eq(x, y),
        _ => false,
    }
}

/// Structural equality of two partitions (callbacks compared by identity).
pub fn same_partition(a: &ProperPartition, b: &ProperPartition) -> bool {
    a.dim() == b.dim()
        && a.fields().len() == b.fields().len()
        && a.fields().iter().zip(b.fields()).all(|(x, y)| same_field(x, y))
        && a.regions().len() == b.regions().len()
        && a.regions().iter().zip(b.regions()).all(|(x, y)| x.constraints == y.constraints)
}

/// Piecewise conditions: (A) bounds per active piece, (B) smooth decrease at
/// samples off the switching surface, (C) the surface condition via Lie
/// (general/aligned) or Clarke intervals.
pub fn check_switched_iss(
    sys: &SwitchedSystem,
    c: &ISSCertificate<PiecewiseC1Fn>,
    plan: &SamplePlan,
    variant: SwitchedVariant,
) -> Result<CheckReport> {
    check_dims(sys, &c.v)?;
    let aligned = same_partition(sys.partition(), c.v.partition());
    if variant == SwitchedVariant::Aligned && !aligned {
        return Err(CertifyError::PartitionMismatch);
    }
    let samples = draw_samples(sys.partition(), sys.input_dim(), plan)?;
    let xp = sys.partition();
    let yp = c.v.partition();
    let mut conds = evaluate(&samples, &["a_bounds", "b_interior", "c_surface"], |s| {
        let tol = if s.on_surface { ACTIVE_TOL } else { 0.0 };
        let ys = yp.active_indices(&s.x, tol)?.indices;
        // (A): every active piece satisfies the sandwich
        let mut worst_a: Option<Outcome> = None;
        for &j in &ys {
            let vj = c.v.pieces()[j].value(&s.x);
            let o = bounds_outcome(c, s, vj);
            worst_a = Some(pick_worse(worst_a, o));
        }
        let v = c.v.value(&s.x)?;
        let premise = v > c.gamma.eval(s.u.norm());
        let xs = xp.active_indices(&s.x, ACTIVE_TOL)?.indices;
        let rate = c.rho_at(&s.x, v);
        let (b, cc) = if !s.on_surface && xs.len() == 1 {
            // (B) away from ∂X; points on ∂Y∖∂X are covered by continuity
            if !premise {
                (Some(Outcome::Vacuous), None)
            } else {
                let f = sys.field(xs[0], &s.x, &s.u);
                let mut worst: Option<Outcome> = None;
                for &j in &ys {
                    let g = c.v.pieces()[j].gradient(&s.x);
                    let d = g.dot(&f);
                    let iv = DerivativeInterval::Interval { lo: d, hi: d };
                    worst = Some(pick_worse(worst, decrease_outcome(s, v, iv, rate)));
                }
                (worst, None)
            }
        } else if !premise {
            (None, Some(Outcome::Vacuous))
        } else {
            let hull = sys.hull_vertices(&s.x, &s.u, ACTIVE_TOL)?;
            let g = c.v.gradient_hull(&s.x, ACTIVE_TOL)?;
            let iv = match variant {
                SwitchedVariant::Clarke => clarke_interval_raw(&g.vertices, &hull.vertices)?,
                _ => lie_interval_raw(&g.vertices, &hull.vertices)?,
            };
            (None, Some(decrease_outcome(s, v, iv, rate)))
        };
        Ok(vec![worst_a, b, cc])
    })?;
    let mut notes = vec![];
    if variant == SwitchedVariant::General && !aligned {
        notes.push("candidate partition differs from the system partition; interior samples on the candidate's own boundaries rely on continuity".into());
    }
    if let Some(cs) = conds.get_mut("c_surface") {
        if cs.checked == 0 {
            notes.push("no surface samples: surface condition not exercised".into());
        }
    }
    let mut rep = CheckReport::from_conditions(conds);
    rep.notes = notes;
    Ok(rep)
}

fn pick_worse(prev: Option<Outcome>, o: Outcome) -> Outcome {
    match (prev, &o) {
        (Some(Outcome::Active { witness: w, empty }), Outcome::Active { witness: w2, .. }) if w.margin <= w2.margin => {
            Outcome::Active { witness: w, empty }
        }
        (Some(p @ Outcome::Active { .. }), Outcome::Vacuous) => p,
        _ => o,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DissipationForm {
    /// −ρ̂(|x|) + γ̂(|u|)
    State,
    /// −ρ̂(V(x)) + γ̂(|u|)
    Level,
}

/// Unconditional dissipation inequality at every sample, plus the sandwich.
pub fn check_dissipation<V: LyapunovCandidate>(
    sys: &SwitchedSystem,
    c: &DissipationCertificate<V>,
    plan: &SamplePlan,
    form: DissipationForm,
) -> Result<CheckReport> {
    check_dims(sys, &c.v)?;
    let samples = draw_samples(sys.partition(), sys.input_dim(), plan)?;
    let conds = evaluate(&samples, &["bounds", "dissipation"], |s| {
        let v = c.v.value(&s.x)?;
        let b = bound_margin(&c.alpha_lo, &c.alpha_hi, s, v);
        let hull = sys.hull_vertices(&s.x, &s.u, ACTIVE_TOL)?;
        let g = c.v.gradient_hull(&s.x, ACTIVE_TOL)?;
        let iv = lie_interval_raw(&g.vertices, &hull.vertices)?;
        let arg = match form {
            DissipationForm::State => s.x.norm(),
            DissipationForm::Level => v,
        };
        let bound = -c.rho_hat.eval(arg) + c.gamma_hat.eval(s.u.norm());
        let m = bound - iv.max();
        Ok(vec![Some(b), Some(Outcome::Active { witness: witness(s, v, Some(iv), m), empty: iv.is_empty() })])
    })?;
    Ok(CheckReport::from_conditions(conds))
}

/// Monotone non-increase of V along a simulated trajectory while above the
/// γ-sublevel set of the input's running sup-norm.
pub fn trajectory_check<V: LyapunovCandidate>(
    traj: &Trajectory,
    u: &InputSignal,
    c: &ISSCertificate<V>,
    margin_tol: f64,
) -> Result<CheckReport> {
    let values: Vec<f64> = traj.states.iter().map(|x| c.v.value(x)).collect::<std::result::Result<_, _>>()?;
    let mut s = ConditionSummary::default();
    for k in 0..values.len().saturating_sub(1) {
        let level = c.gamma.eval(u.sup_norm_to(traj.times[k]));
        let sample = Sample { x: traj.states[k].clone(), u: u.at(traj.times[k]), on_surface: false };
        if values[k] > level {
            let dv = values[k + 1] - values[k];
            let mut w = witness(&sample, values[k], None, margin_tol - dv);
            w.lo = Some(dv);
            w.hi = Some(dv);
            s.absorb(Outcome::Active { witness: w, empty: false });
        } else {
            s.absorb(Outcome::Vacuous);
        }
    }
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    let terminal = values.last().copied().unwrap_or(0.0) - c.gamma.eval(u.sup_norm_to(t_end));
    let mut rep = CheckReport::from_conditions(BTreeMap::from([("monotone".to_string(), s)]));
    rep.metrics.insert("terminal_sublevel_residual".into(), terminal);
    rep.metrics.insert("final_value".into(), values.last().copied().unwrap_or(0.0));
    if !traj.complete {
        rep.notes.push("trajectory stopped early (state bound exceeded)".into());
        rep.pass = false;
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{Constraint, Region, Sign};
    use crate::switched::Mode;
    use crate::Matrix;
    use nalgebra::dvector;

    fn scalar_system(a: f64) -> (SwitchedSystem, PiecewiseC1Fn) {
        let p = ProperPartition::whole(1);
        let sys = SwitchedSystem::new(p.clone(), vec![Mode::Linear { a: Matrix::from_element(1, 1, a), b: Matrix::identity(1, 1) }], 1)
            .unwrap();
        let v = PiecewiseC1Fn::quadratic(p, vec![Matrix::identity(1, 1)]).unwrap();
        (sys, v)
    }

    fn plan(radius: f64) -> SamplePlan {
        SamplePlan {
            state_box: BoxBounds::symmetric(1, 3.0),
            n_state: 500,
            input_radius: radius,
            n_input: 2,
            surface_pairs: vec![],
            n_surface: 0,
            seed: 4,
        }
    }

    fn sq(c: f64) -> ComparisonFn {
        ComparisonFn::power(c, 2.0).unwrap()
    }

    #[test]
    fn scalar_iss_certificate() {
        // ẋ = −x + u, V = x²: V̇ = −2x² + 2xu ≤ −x² whenever |x| ≥ 2|u|.
        let (sys, v) = scalar_system(-1.0);
        let c = ISSCertificate::new(v, sq(1.0), sq(1.0), sq(1.0), sq(4.0), DecayArgument::StateNorm).unwrap();
        let rep = check_main_iss(&sys, &c, &plan(1.0)).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.conditions["decrease"].active > 0);
        // doubling the claimed decay beyond 2s² fails
        let greedy = ISSCertificate { rho: sq(2.5), ..c.clone() };
        let rep = check_main_iss(&sys, &greedy, &plan(1.0)).unwrap();
        assert!(!rep.pass);
        assert!(!rep.conditions["decrease"].failing.is_empty());
        // GAS specialization
        let rep = check_main_iss(&sys, &c, &plan(0.0)).unwrap();
        assert!(rep.pass);
        assert!(rep.conditions["decrease"].worst_margin > 0.0);
    }

    #[test]
    fn zero_system_fails_dissipation() {
        let (sys, v) = scalar_system(0.0);
        let c = DissipationCertificate::new(v, sq(1.0), sq(1.0), sq(0.1), sq(1.0)).unwrap();
        let rep = check_dissipation(&sys, &c, &plan(0.0), DissipationForm::State).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn dissipation_converts_to_implication() {
        // ẋ = −x + u: V̇ = −2x² + 2xu < −x²/2 + u² away from 0
        let (sys, v) = scalar_system(-1.0);
        let d = DissipationCertificate::new(v, sq(1.0), sq(1.0), sq(0.5), sq(1.0)).unwrap();
        assert!(check_dissipation(&sys, &d, &plan(1.0), DissipationForm::State).unwrap().pass);
        let imp = d.to_implication(DecayArgument::StateNorm).unwrap();
        // γ(s) = ᾱ(ρ̂⁻¹(2s²)) = 4s²
        assert!((imp.gamma.eval(1.5) - 9.0).abs() < 1e-9);
        assert!(check_main_iss(&sys, &imp, &plan(1.0)).unwrap().pass);
    }

    #[test]
    fn tag_validation() {
        let (_, v) = scalar_system(-1.0);
        let pd = sq(1.0).with_class(ClassTag::Pd);
        assert!(matches!(
            ISSCertificate::new(v, pd, sq(1.0), sq(1.0), sq(1.0), DecayArgument::StateNorm),
            Err(CertifyError::TagMismatch { name: "alpha_lo", .. })
        ));
    }

    #[test]
    fn reports_are_deterministic() {
        let (sys, v) = scalar_system(-1.0);
        let c = ISSCertificate::new(v, sq(1.0), sq(1.0), sq(1.0), sq(4.0), DecayArgument::StateNorm).unwrap();
        let a = check_main_iss(&sys, &c, &plan(1.0)).unwrap();
        let b = check_main_iss(&sys, &c, &plan(1.0)).unwrap();
        assert_eq!(a, b);
    }

    /// X: {x ≥ 0} / {x ≤ 0} with ẋ = −x + u and ẋ = −2x + u.
    /// Y refines the right half: V = x² on {x ≤ 1}, V = 3x − 2 on {x ≥ 1}
    /// (continuous at 1 with matching value; a kink in slope is allowed).
    fn refined_example() -> (SwitchedSystem, ISSCertificate) {
        let xfield = ScalarField::linear(dvector![1.0]);
        let xp = ProperPartition::split(xfield).unwrap();
        let m = |a: f64| Mode::Linear { a: Matrix::from_element(1, 1, a), b: Matrix::identity(1, 1) };
        let sys = SwitchedSystem::new(xp, vec![m(-1.0), m(-2.0)], 1).unwrap();
        let shifted = ScalarField::callback(1, |x: &Vector| (1.0 - x[0], dvector![-1.0]));
        let yp = ProperPartition::new(
            1,
            vec![shifted],
            vec![
                Region { label: "inner".into(), constraints: vec![Constraint { field: 0, sign: Sign::Ge }] },
                Region { label: "outer".into(), constraints: vec![Constraint { field: 0, sign: Sign::Le }] },
            ],
        )
        .unwrap();
        let affine = ScalarField::callback(1, |x: &Vector| (3.0 * x[0] - 2.0, dvector![3.0]));
        let v = PiecewiseC1Fn::new(yp, vec![ScalarField::quadratic(Matrix::identity(1, 1)).unwrap(), affine]).unwrap();
        // α̲ = min(s²/2, s) (envelope below both pieces), ᾱ = s² + 3s.
        let alo = crate::kfun::pointwise_extremum(crate::kfun::Extremum::Min, &sq(0.5), &ComparisonFn::linear(1.0).unwrap()).unwrap();
        let ahi = ComparisonFn::sum(vec![sq(1.0), ComparisonFn::linear(3.0).unwrap()]).unwrap();
        let rho = crate::kfun::pointwise_extremum(crate::kfun::Extremum::Min, &sq(1.0), &ComparisonFn::linear(1.0).unwrap()).unwrap();
        let c = ISSCertificate::new(v, alo, ahi, rho, sq(4.0), DecayArgument::StateNorm).unwrap();
        (sys, c)
    }

    #[test]
    fn general_variant_with_refined_candidate() {
        let (sys, c) = refined_example();
        let plan = SamplePlan {
            state_box: BoxBounds::symmetric(1, 4.0),
            n_state: 2000,
            input_radius: 1.0,
            n_input: 2,
            surface_pairs: vec![(0, 1)],
            n_surface: 1,
            seed: 8,
        };
        let rep = check_switched_iss(&sys, &c, &plan, SwitchedVariant::General).unwrap();
        assert!(rep.pass, "{rep:#?}");
        assert!(matches!(check_switched_iss(&sys, &c, &plan, SwitchedVariant::Aligned), Err(CertifyError::PartitionMismatch)));
    }
}
