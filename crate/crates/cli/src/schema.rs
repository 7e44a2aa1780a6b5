//! Scenario files: plain serde records that are converted into core types
//! with full validation. Matrices are row-major nested arrays.

use nsiss_core::certify::SamplePlan;
use nsiss_core::kfun::{ClassTag, ComparisonFn, Form};
use nsiss_core::linmat::{ControllerDesign, LinearSwitchedPlant, SwitchingForm, SymMatrix};
use nsiss_core::nonsmooth::PiecewiseC1Fn;
use nsiss_core::partition::{BoxBounds, Constraint, ProperPartition, Region, ScalarField, Sign};
use nsiss_core::switched::{InputSignal, Mode, SimOptions, SwitchedSystem};
use nsiss_core::{Matrix, Vector};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Check,
    Simulate,
    Compose,
    Lmi,
    Flower,
    ClosedLoop,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Check => "check",
            Kind::Simulate => "simulate",
            Kind::Compose => "compose",
            Kind::Lmi => "lmi",
            Kind::Flower => "flower",
            Kind::ClosedLoop => "closed_loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Kind,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compose: Option<ComposeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flower: Option<FlowerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_loop: Option<ClosedLoopSpec>,
}

impl Scenario {
    pub fn new(kind: Kind, name: &str) -> Self {
        Self {
            kind,
            name: name.into(),
            seed: 0,
            system: None,
            certificate: None,
            plan: None,
            variant: None,
            simulation: None,
            compose: None,
            plant: None,
            design: None,
            flower: None,
            closed_loop: None,
        }
    }
}

pub fn require<'a, T>(v: &'a Option<T>, section: &str, kind: Kind) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| CliError::Schema(format!("kind {:?} requires the {section:?} section", kind.as_str())))
}

fn schema<E: std::fmt::Display>(ctx: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Schema(format!("{ctx}: {e}"))
}

pub fn matrix(rows: &Rows, ctx: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Schema(format!("{ctx}: ragged matrix rows")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Schema(format!("{ctx}: non-finite entry")));
    }
    Ok(Matrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

/// Matrix with an explicit column count, so `n × 0` input matrices survive
/// the empty-row encoding.
fn matrix_cols(rows: &Rows, nrows: usize, ncols: usize, ctx: &str) -> Result<Matrix> {
    if ncols == 0 {
        if rows.len() != nrows && !rows.is_empty() {
            return Err(CliError::Schema(format!("{ctx}: expected {nrows} rows")));
        }
        return Ok(Matrix::zeros(nrows, 0));
    }
    let m = matrix(rows, ctx)?;
    if m.shape() != (nrows, ncols) {
        return Err(CliError::Schema(format!("{ctx}: expected {nrows}×{ncols}, got {}×{}", m.nrows(), m.ncols())));
    }
    Ok(m)
}

pub fn rows(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vector(v: &[f64], n: usize, ctx: &str) -> Result<Vector> {
    if v.len() != n {
        return Err(CliError::Schema(format!("{ctx}: expected length {n}, got {}", v.len())));
    }
    Ok(Vector::from_column_slice(v))
}

/// A comparison function by its form record; only primitive forms are
/// accepted from files, and a stated class must match the derived one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnSpec {
    #[serde(flatten)]
    pub form: Form,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassTag>,
}

impl FnSpec {
    pub fn linear(c: f64) -> Self {
        Self { form: Form::Linear { c }, class: None }
    }

    pub fn power(c: f64, p: f64) -> Self {
        Self { form: Form::Power { c, p }, class: None }
    }

    pub fn zero() -> Self {
        Self { form: Form::Zero, class: None }
    }

    pub fn build(&self, ctx: &str) -> Result<ComparisonFn> {
        let err = schema(ctx);
        let f = match &self.form {
            Form::Zero => ComparisonFn::zero(),
            Form::Constant { c } => ComparisonFn::constant(*c).map_err(&err)?,
            Form::Linear { c } => ComparisonFn::linear(*c).map_err(&err)?,
            Form::Power { c, p } => ComparisonFn::power(*c, *p).map_err(&err)?,
            Form::PiecewiseLinear { knots } => ComparisonFn::piecewise_linear(knots.clone()).map_err(&err)?,
            Form::MonotoneHermite { knots } => ComparisonFn::monotone_hermite(knots.clone()).map_err(&err)?,
            _ => return Err(CliError::Schema(format!("{ctx}: only primitive forms are accepted in scenario files"))),
        };
        match self.class {
            Some(c) if c != f.class() => {
                Err(CliError::Schema(format!("{ctx}: stated class {c:?} does not match derived class {:?}", f.class())))
            }
            _ => Ok(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// q(x) = vᵀx
    Linear { v: Vec<f64> },
    /// q(x) = xᵀQx
    Quadratic { q: Rows },
}

impl FieldSpec {
    pub fn build(&self, dim: usize, ctx: &str) -> Result<ScalarField> {
        match self {
            FieldSpec::Linear { v } => Ok(ScalarField::linear(vector(v, dim, ctx)?)),
            FieldSpec::Quadratic { q } => {
                let m = matrix(q, ctx)?;
                if m.shape() != (dim, dim) {
                    return Err(CliError::Schema(format!("{ctx}: expected {dim}×{dim}")));
                }
                ScalarField::quadratic(m).map_err(schema(ctx))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignSpec {
    Ge,
    Le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub field: usize,
    pub sign: SignSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub label: String,
    pub constraints: Vec<ConstraintSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub fields: Vec<FieldSpec>,
    pub regions: Vec<RegionSpec>,
}

impl PartitionSpec {
    /// Regions {q ≥ 0} and {q ≤ 0}.
    pub fn split(field: FieldSpec) -> Self {
        let region = |label: &str, sign| RegionSpec { label: label.into(), constraints: vec![ConstraintSpec { field: 0, sign }] };
        Self { fields: vec![field], regions: vec![region("1", SignSpec::Ge), region("2", SignSpec::Le)] }
    }

    pub fn build(&self, dim: usize) -> Result<ProperPartition> {
        let fields = self
            .fields
            .iter()
            .enumerate()
            .map(|(k, f)| f.build(dim, &format!("partition.fields[{k}]")))
            .collect::<Result<Vec<_>>>()?;
        let regions = self
            .regions
            .iter()
            .map(|r| Region {
                label: r.label.clone(),
                constraints: r
                    .constraints
                    .iter()
                    .map(|c| Constraint {
                        field: c.field,
                        sign: match c.sign {
                            SignSpec::Ge => Sign::Ge,
                            SignSpec::Le => Sign::Le,
                        },
                    })
                    .collect(),
            })
            .collect();
        ProperPartition::new(dim, fields, regions).map_err(schema("partition"))
    }
}

fn build_partition(p: &Option<PartitionSpec>, dim: usize) -> Result<ProperPartition> {
    match p {
        Some(p) => p.build(dim),
        None => Ok(ProperPartition::whole(dim)),
    }
}

/// ẋ = Ax + Bu (+ offset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub a: Rows,
    #[serde(default)]
    pub b: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub dim: usize,
    pub input_dim: usize,
    /// Omitted: a single region covering the whole space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSpec>,
    pub modes: Vec<ModeSpec>,
}

impl SystemSpec {
    pub fn build(&self) -> Result<SwitchedSystem> {
        let (n, m) = (self.dim, self.input_dim);
        let partition = build_partition(&self.partition, n)?;
        let modes = self
            .modes
            .iter()
            .enumerate()
            .map(|(k, md)| {
                let ctx = format!("system.modes[{k}]");
                let a = matrix_cols(&md.a, n, n, &format!("{ctx}.a"))?;
                let b = matrix_cols(&md.b, n, m, &format!("{ctx}.b"))?;
                Ok(match &md.offset {
                    Some(o) => Mode::Affine { a, offset: vector(o, n, &format!("{ctx}.offset"))?, b },
                    None => Mode::Linear { a, b },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SwitchedSystem::new(partition, modes, m).map_err(schema("system"))
    }
}

/// A piecewise function: one field per region of its partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseSpec {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSpec>,
    pub pieces: Vec<FieldSpec>,
}

impl PiecewiseSpec {
    pub fn build(&self, ctx: &str) -> Result<PiecewiseC1Fn> {
        let partition = build_partition(&self.partition, self.dim)?;
        let pieces = self
            .pieces
            .iter()
            .enumerate()
            .map(|(k, p)| p.build(self.dim, &format!("{ctx}.pieces[{k}]")))
            .collect::<Result<Vec<_>>>()?;
        PiecewiseC1Fn::new(partition, pieces).map_err(schema(ctx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecaySpec {
    StateNorm,
    Level,
}

/// ISS data; for the dissipation variants `rho` and `gamma` are read as the
/// dissipation rate ρ̂ and supply gain γ̂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSpec {
    pub v: PiecewiseSpec,
    pub alpha_lo: FnSpec,
    pub alpha_hi: FnSpec,
    pub rho: FnSpec,
    pub gamma: FnSpec,
    #[serde(default = "default_decay")]
    pub decay: DecaySpec,
}

fn default_decay() -> DecaySpec {
    DecaySpec::StateNorm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Generic implication form with Lie intervals.
    Main,
    General,
    Aligned,
    Clarke,
    DissipationState,
    DissipationLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    /// Symmetric box [−r, r]ⁿ, or explicit bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_hi: Option<Vec<f64>>,
    pub n_state: usize,
    pub input_radius: f64,
    #[serde(default = "one")]
    pub n_input: usize,
    #[serde(default)]
    pub surface_pairs: Vec<[usize; 2]>,
    #[serde(default)]
    pub n_surface: usize,
}

fn one() -> usize {
    1
}

impl PlanSpec {
    pub fn build(&self, dim: usize, seed: u64) -> Result<SamplePlan> {
        let state_box = match (self.box_radius, &self.box_lo, &self.box_hi) {
            (Some(r), None, None) if r > 0.0 => BoxBounds::symmetric(dim, r),
            (None, Some(lo), Some(hi)) => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(CliError::Schema(format!("plan: box bounds must have length {dim}")));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(CliError::Schema("plan: box_lo must be below box_hi".into()));
                }
                BoxBounds { lo: lo.clone(), hi: hi.clone() }
            }
            _ => return Err(CliError::Schema("plan: give either a positive box_radius or box_lo and box_hi".into())),
        };
        Ok(SamplePlan {
            state_box,
            n_state: self.n_state,
            input_radius: self.input_radius,
            n_input: self.n_input,
            surface_pairs: self.surface_pairs.iter().map(|p| (p[0], p[1])).collect(),
            n_surface: self.n_surface,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Zero,
    Constant { value: Vec<f64> },
    Sinusoid { amplitude: Vec<f64>, frequency: Vec<f64>, phase: Vec<f64> },
    PiecewiseConstant { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl InputSpec {
    pub fn build(&self, m: usize) -> Result<InputSignal> {
        let sig = match self {
            InputSpec::Zero => InputSignal::zero(m),
            InputSpec::Constant { value } => InputSignal::Constant { value: vector(value, m, "input.value")? },
            InputSpec::Sinusoid { amplitude, frequency, phase } => {
                if amplitude.len() != m || frequency.len() != m || phase.len() != m {
                    return Err(CliError::Schema(format!("input: sinusoid needs {m} amplitudes, frequencies and phases")));
                }
                InputSignal::Sinusoid { amplitude: amplitude.clone(), frequency: frequency.clone(), phase: phase.clone() }
            }
            InputSpec::PiecewiseConstant { times, values } => {
                if times.len() != values.len() || times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(CliError::Schema("input: piecewise times must start at 0, increase, and match values".into()));
                }
                let values = values.iter().map(|v| vector(v, m, "input.values")).collect::<Result<Vec<_>>>()?;
                InputSignal::PiecewiseConstant { times: times.clone(), values }
            }
        };
        Ok(sig)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOptionsSpec {
    #[serde(default = "d_dt")]
    pub dt_max: f64,
    #[serde(default = "d_event")]
    pub event_tol: f64,
    #[serde(default = "d_bound")]
    pub state_bound: f64,
}

fn d_dt() -> f64 {
    SimOptions::default().dt_max
}
fn d_event() -> f64 {
    SimOptions::default().event_tol
}
fn d_bound() -> f64 {
    SimOptions::default().state_bound
}

impl Default for SimOptionsSpec {
    fn default() -> Self {
        let d = SimOptions::default();
        Self { dt_max: d.dt_max, event_tol: d.event_tol, state_bound: d.state_bound }
    }
}

impl SimOptionsSpec {
    pub fn build(&self) -> SimOptions {
        SimOptions { dt_max: self.dt_max, event_tol: self.event_tol, state_bound: self.state_bound }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub x0: Vec<f64>,
    pub horizon: f64,
    #[serde(default = "zero_input")]
    pub input: InputSpec,
    #[serde(default)]
    pub options: SimOptionsSpec,
    /// Trajectory check against the scenario certificate, if one is given.
    #[serde(default = "d_margin")]
    pub margin_tol: f64,
    /// Reach target |x| ≤ reach_tol reported as `reach_time`.
    #[serde(default = "d_reach")]
    pub reach_tol: f64,
}

fn zero_input() -> InputSpec {
    InputSpec::Zero
}
fn d_margin() -> f64 {
    1e-9
}
fn d_reach() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemSpec {
    pub v: PiecewiseSpec,
    pub alpha_lo: FnSpec,
    pub alpha_hi: FnSpec,
    pub rho: FnSpec,
    pub chi: FnSpec,
    pub gamma: FnSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompositionSpec {
    SmallGain { domain_max: f64 },
    Cascade { m_cap: f64 },
}

/// Two blocks plus an optional testbed on the stacked state (x₁, x₂) that
/// the composite is checked against with the scenario plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeSpec {
    pub composition: CompositionSpec,
    pub first: SubsystemSpec,
    pub second: SubsystemSpec,
    /// Points at which the composite's functions are tabulated in the report.
    #[serde(default = "d_probes")]
    pub probes: Vec<f64>,
}

fn d_probes() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SwitchingSpec {
    Linear { v: Vec<f64> },
    Quadratic { q: Rows },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub a1: Rows,
    pub a2: Rows,
    pub b: Rows,
    pub c: Rows,
    pub q: SwitchingSpec,
}

impl PlantSpec {
    pub fn from_plant(p: &LinearSwitchedPlant) -> Self {
        Self {
            a1: rows(&p.a1),
            a2: rows(&p.a2),
            b: rows(&p.b),
            c: rows(&p.c),
            q: match &p.q {
                SwitchingForm::Linear { v } => SwitchingSpec::Linear { v: v.iter().copied().collect() },
                SwitchingForm::Quadratic { q } => SwitchingSpec::Quadratic { q: rows(q.matrix()) },
            },
        }
    }

    pub fn build(&self) -> Result<LinearSwitchedPlant> {
        let q = match &self.q {
            SwitchingSpec::Linear { v } => SwitchingForm::Linear { v: Vector::from_column_slice(v) },
            SwitchingSpec::Quadratic { q } => {
                SwitchingForm::Quadratic { q: SymMatrix::new(matrix(q, "plant.q")?).map_err(schema("plant.q"))? }
            }
        };
        LinearSwitchedPlant::new(
            matrix(&self.a1, "plant.a1")?,
            matrix(&self.a2, "plant.a2")?,
            matrix(&self.b, "plant.b")?,
            matrix(&self.c, "plant.c")?,
            q,
        )
        .map_err(schema("plant"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub k: Rows,
    pub l1: Rows,
    pub l2: Rows,
    pub p1: Rows,
    pub p2: Rows,
    pub pe: Rows,
    pub mu1: f64,
    pub mu2: f64,
    pub mu12: f64,
    pub mu21: f64,
    pub mu_q: f64,
    pub a_x: f64,
    pub a_e: f64,
    pub eps_share: f64,
}

impl DesignSpec {
    pub fn from_design(d: &ControllerDesign) -> Self {
        Self {
            k: rows(&d.k),
            l1: rows(&d.l1),
            l2: rows(&d.l2),
            p1: rows(d.p1.matrix()),
            p2: rows(d.p2.matrix()),
            pe: rows(d.pe.matrix()),
            mu1: d.mu1,
            mu2: d.mu2,
            mu12: d.mu12,
            mu21: d.mu21,
            mu_q: d.mu_q,
            a_x: d.a_x,
            a_e: d.a_e,
            eps_share: d.eps_share,
        }
    }

    pub fn build(&self) -> Result<ControllerDesign> {
        let sym = |m: &Rows, ctx: &str| SymMatrix::new(matrix(m, ctx)?).map_err(schema(ctx));
        let d = ControllerDesign {
            k: matrix(&self.k, "design.k")?,
            l1: matrix(&self.l1, "design.l1")?,
            l2: matrix(&self.l2, "design.l2")?,
            p1: sym(&self.p1, "design.p1")?,
            p2: sym(&self.p2, "design.p2")?,
            pe: sym(&self.pe, "design.pe")?,
            mu1: self.mu1,
            mu2: self.mu2,
            mu12: self.mu12,
            mu21: self.mu21,
            mu_q: self.mu_q,
            a_x: self.a_x,
            a_e: self.a_e,
            eps_share: self.eps_share,
        };
        d.validate().map_err(schema("design"))?;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowerSpec {
    pub a1: f64,
    pub a2: f64,
    pub eps: f64,
    pub b: Rows,
    /// Surface point at which Clarke and Lie intervals are reported (u = 0).
    #[serde(default = "d_probe")]
    pub probe: Vec<f64>,
}

fn d_probe() -> Vec<f64> {
    vec![1.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedLoopSpec {
    pub n_sims: usize,
    /// Initial (x, e) drawn uniformly from the ball of this radius.
    pub radius: f64,
    pub horizon: f64,
    /// Required bound on |x(T)| + |e(T)|.
    pub terminal_tol: f64,
    #[serde(default)]
    pub options: SimOptionsSpec,
}
