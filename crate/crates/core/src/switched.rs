//! State-dependent switched systems, their Filippov hull, and an
//! event-locating RK4 simulator with codimension-1 sliding.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::partition::{PartitionError, ProperPartition};
use crate::{Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwitchedError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("surface normal is zero")]
    DegenerateNormal,
    #[error("sliding combination needs exactly two hull vertices, got {0}")]
    NotTwoVertices(usize),
    #[error("step size underflow at t = {t} (chattering below event resolution)")]
    StepSizeUnderflow { t: f64 },
    #[error("invalid simulation options: {0}")]
    InvalidOptions(String),
}

pub type Result<T> = std::result::Result<T, SwitchedError>;

pub type ModeFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;

/// One vector field f_i(x, u).
#[derive(Clone)]
pub enum Mode {
    /// Ax + Bu
    Linear { a: Matrix, b: Matrix },
    /// Ax + c + Bu
    Affine { a: Matrix, offset: Vector, b: Matrix },
    Callback { dim: usize, input_dim: usize, f: ModeFn },
}

impl fmt::Debug for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { a, b } => f.debug_struct("Linear").field("a", a).field("b", b).finish(),
            Self::Affine { a, offset, b } => {
                f.debug_struct("Affine").field("a", a).field("offset", &offset.as_slice()).field("b", b).finish()
            }
            Self::Callback { dim, input_dim, .. } => {
                f.debug_struct("Callback").field("dim", dim).field("input_dim", input_dim).finish_non_exhaustive()
            }
        }
    }
}

impl Mode {
    pub fn callback(dim: usize, input_dim: usize, f: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static) -> Self {
        Self::Callback { dim, input_dim, f: Arc::new(f) }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Self::Linear { a, b } | Self::Affine { a, b, .. } => (a.nrows(), b.ncols()),
            Self::Callback { dim, input_dim, .. } => (*dim, *input_dim),
        }
    }

    pub fn eval(&self, x: &Vector, u: &Vector) -> Vector {
        match self {
            Self::Linear { a, b } => a * x + b * u,
            Self::Affine { a, offset, b } => a * x + offset + b * u,
            Self::Callback { f, .. } => f(x, u),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SwitchedSystem {
    partition: ProperPartition,
    modes: Vec<Mode>,
    input_dim: usize,
}

/// Vertices {f_i(x,u) : i active} of the regularized right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct FilippovHull {
    pub x: Vector,
    pub u: Vector,
    pub indices: Vec<usize>,
    pub vertices: Vec<Vector>,
}

impl SwitchedSystem {
    pub fn new(partition: ProperPartition, modes: Vec<Mode>, input_dim: usize) -> Result<Self> {
        if modes.len() != partition.len() {
            return Err(SwitchedError::DimensionMismatch(format!(
                "{} modes for {} regions",
                modes.len(),
                partition.len()
            )));
        }
        for (i, m) in modes.iter().enumerate() {
            let (n, m_in) = m.dims();
            if n != partition.dim() || m_in != input_dim {
                return Err(SwitchedError::DimensionMismatch(format!(
                    "mode {i} has dims ({n}, {m_in}), expected ({}, {input_dim})",
                    partition.dim()
                )));
            }
            if let Mode::Linear { a, b } | Mode::Affine { a, b, .. } = m {
                if !a.is_square() || b.nrows() != n {
                    return Err(SwitchedError::DimensionMismatch(format!("mode {i} matrices inconsistent")));
                }
            }
        }
        Ok(Self { partition, modes, input_dim })
    }

    pub fn partition(&self) -> &ProperPartition {
        &self.partition
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn field(&self, i: usize, x: &Vector, u: &Vector) -> Vector {
        self.modes[i].eval(x, u)
    }

    /// Modes whose region contains the origin but whose field does not vanish
    /// there for u = 0.
    pub fn equilibrium_violations(&self) -> Vec<usize> {
        let zero = Vector::zeros(self.dim());
        let u0 = Vector::zeros(self.input_dim);
        (0..self.modes.len())
            .filter(|&i| self.partition.contains(i, &zero, 0.0) && self.field(i, &zero, &u0).amax() > 0.0)
            .collect()
    }

    pub fn hull_vertices(&self, x: &Vector, u: &Vector, tol: f64) -> Result<FilippovHull> {
        if u.len() != self.input_dim {
            return Err(SwitchedError::DimensionMismatch(format!("input has {} entries, expected {}", u.len(), self.input_dim)));
        }
        let act = self.partition.active_indices(x, tol)?;
        let vertices = act.indices.iter().map(|&i| self.field(i, x, u)).collect();
        Ok(FilippovHull { x: x.clone(), u: u.clone(), indices: act.indices, vertices })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlidingOutcome {
    /// Attractive surface: λ f₁ + (1−λ) f₂ is tangent.
    Sliding(f64),
    Crossing,
    Tangent,
}

/// Filippov's convex combination for a two-vertex hull and surface normal.
pub fn sliding_combination(hull: &FilippovHull, normal: &Vector) -> Result<SlidingOutcome> {
    if hull.vertices.len() != 2 {
        return Err(SwitchedError::NotTwoVertices(hull.vertices.len()));
    }
    sliding_lambda(&hull.vertices[0], &hull.vertices[1], normal)
}

fn sliding_lambda(f1: &Vector, f2: &Vector, normal: &Vector) -> Result<SlidingOutcome> {
    let nn = normal.norm();
    if !(nn > 0.0) {
        return Err(SwitchedError::DegenerateNormal);
    }
    let (a, b) = (normal.dot(f1), normal.dot(f2));
    let scale = nn * f1.norm().max(f2.norm());
    let eps = 1e-14 * scale;
    let (za, zb) = (a.abs() <= eps, b.abs() <= eps);
    if za && zb {
        return Ok(SlidingOutcome::Tangent);
    }
    if (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0) {
        return Ok(SlidingOutcome::Sliding(b / (b - a)));
    }
    Ok(SlidingOutcome::Crossing)
}

pub type InputFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

#[derive(Clone)]
pub enum InputSignal {
    Zero { dim: usize },
    Constant { value: Vector },
    /// uₖ(t) = ampₖ sin(ωₖ t + φₖ)
    Sinusoid { amplitude: Vec<f64>, frequency: Vec<f64>, phase: Vec<f64> },
    /// `values[k]` holds on `[times[k], times[k+1])`; `times[0]` must be 0.
    PiecewiseConstant { times: Vec<f64>, values: Vec<Vector> },
    /// Arbitrary signal with a caller-supplied sup-norm bound.
    Callback { dim: usize, f: InputFn, sup_bound: f64 },
}

impl fmt::Debug for InputSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero { dim } => f.debug_struct("Zero").field("dim", dim).finish(),
            Self::Constant { value } => f.debug_struct("Constant").field("value", &value.as_slice()).finish(),
            Self::Sinusoid { amplitude, frequency, phase } => f
                .debug_struct("Sinusoid")
                .field("amplitude", amplitude)
                .field("frequency", frequency)
                .field("phase", phase)
                .finish(),
            Self::PiecewiseConstant { times, values } => {
                f.debug_struct("PiecewiseConstant").field("times", times).field("values", values).finish()
            }
            Self::Callback { dim, sup_bound, .. } => {
                f.debug_struct("Callback").field("dim", dim).field("sup_bound", sup_bound).finish_non_exhaustive()
            }
        }
    }
}

impl InputSignal {
    pub fn zero(dim: usize) -> Self {
        Self::Zero { dim }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Zero { dim } | Self::Callback { dim, .. } => *dim,
            Self::Constant { value } => value.len(),
            Self::Sinusoid { amplitude, .. } => amplitude.len(),
            Self::PiecewiseConstant { values, .. } => values.first().map_or(0, |v| v.len()),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Sinusoid { amplitude, frequency, phase }
                if amplitude.len() != frequency.len() || amplitude.len() != phase.len() =>
            {
                Err(SwitchedError::DimensionMismatch("sinusoid channel lists differ in length".into()))
            }
            Self::PiecewiseConstant { times, values } => {
                if times.is_empty() || times.len() != values.len() || times[0] != 0.0 {
                    return Err(SwitchedError::InvalidOptions("piecewise-constant input needs times[0] = 0 and one value per time".into()));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(SwitchedError::InvalidOptions("piecewise-constant times must increase".into()));
                }
                if values.iter().any(|v| v.len() != values[0].len()) {
                    return Err(SwitchedError::DimensionMismatch("piecewise-constant values differ in length".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn at(&self, t: f64) -> Vector {
        match self {
            Self::Zero { dim } => Vector::zeros(*dim),
            Self::Constant { value } => value.clone(),
            Self::Sinusoid { amplitude, frequency, phase } => Vector::from_iterator(
                amplitude.len(),
                (0..amplitude.len()).map(|k| amplitude[k] * (frequency[k] * t + phase[k]).sin()),
            ),
            Self::PiecewiseConstant { times, values } => {
                let k = times.partition_point(|&s| s <= t).saturating_sub(1);
                values[k].clone()
            }
            Self::Callback { f, .. } => f(t),
        }
    }

    /// Value at stage time `s` of an integration step starting at `t0`; steps
    /// never straddle a piecewise-constant break, so the step's value is used.
    fn at_in_step(&self, t0: f64, s: f64) -> Vector {
        match self {
            Self::PiecewiseConstant { .. } => self.at(t0),
            _ => self.at(s),
        }
    }

    /// Essential supremum of |u| on [0, t] (an upper bound for callbacks).
    pub fn sup_norm_to(&self, t: f64) -> f64 {
        match self {
            Self::Zero { .. } => 0.0,
            Self::Constant { value } => value.norm(),
            Self::Sinusoid { amplitude, frequency, .. } => {
                // |sin| reaches 1 on any interval of length π
                if amplitude.len() == 1 && frequency[0].abs() * t >= std::f64::consts::PI {
                    return amplitude[0].abs();
                }
                sample_sup(|s| self.at(s).norm(), t)
            }
            Self::PiecewiseConstant { times, values } => {
                let k = times.partition_point(|&s| s <= t).max(1);
                values[..k].iter().map(|v| v.norm()).fold(0.0, f64::max)
            }
            Self::Callback { sup_bound, .. } => *sup_bound,
        }
    }

    /// Switching instants of piecewise-constant inputs in (t0, t1].
    fn next_break(&self, t0: f64) -> Option<f64> {
        match self {
            Self::PiecewiseConstant { times, .. } => times.iter().copied().find(|&s| s > t0 + 1e-15),
            _ => None,
        }
    }
}

fn sample_sup(f: impl Fn(f64) -> f64, t: f64) -> f64 {
    let n = 4096;
    (0..=n).map(|k| f(t * k as f64 / n as f64)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Crossing,
    SlideStart,
    SlideEnd,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Crossing => "crossing",
            Self::SlideStart => "slide_start",
            Self::SlideEnd => "slide_end",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Row index in the trajectory at which the event was recorded.
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub active_sets: Vec<Vec<usize>>,
    pub events: Vec<Event>,
    /// Surface field index per row while sliding, `None` otherwise.
    pub sliding_field: Vec<Option<usize>>,
    pub complete: bool,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory has at least the initial state")
    }

    /// CSV with header `t,x1..xn,active,event`; active indices are 1-based
    /// and `|`-separated.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|k| format!("x{k}")));
        header.push("active".into());
        header.push("event".into());
        writeln!(w, "{}", header.join(","))?;
        let mut ev = self.events.iter().peekable();
        for (r, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            let mut kinds = Vec::new();
            while let Some(e) = ev.peek() {
                if e.row != r {
                    break;
                }
                kinds.push(e.kind.as_str());
                ev.next();
            }
            let act: Vec<String> = self.active_sets[r].iter().map(|i| (i + 1).to_string()).collect();
            let mut cells = vec![crate::format_e12(*t)];
            cells.extend(x.iter().map(|&v| crate::format_e12(v)));
            cells.push(act.join("|"));
            cells.push(kinds.join("|"));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub dt_max: f64,
    pub event_tol: f64,
    pub state_bound: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { dt_max: 1e-2, event_tol: 1e-9, state_bound: 1e6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Smooth(usize),
    /// Sliding on field `k` between regions `i` (where `sign_i·q_k ≥ 0`) and `j`.
    Sliding { i: usize, j: usize, k: usize, sign_i: f64 },
    /// Minimum-norm hull selection at a higher-codimension point.
    MinNorm,
}

fn rk4(f: &dyn Fn(f64, &Vector) -> Vector, t: f64, x: &Vector, h: f64) -> Vector {
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Minimum-norm point of the convex hull of `vs` (Frank–Wolfe with exact
/// line search; hulls here have a handful of vertices).
pub fn min_norm_element(vs: &[Vector]) -> Vector {
    let mut p = vs[0].clone();
    for v in vs {
        if v.norm() < p.norm() {
            p = v.clone();
        }
    }
    for _ in 0..500 {
        let (mut best, mut best_val) = (0, f64::INFINITY);
        for (k, v) in vs.iter().enumerate() {
            let val = v.dot(&p);
            if val < best_val {
                best = k;
                best_val = val;
            }
        }
        let d = &vs[best] - &p;
        let dd = d.norm_squared();
        if dd == 0.0 || p.dot(&p) - best_val <= 1e-15 * (1.0 + p.norm_squared()) {
            break;
        }
        let step = (-p.dot(&d) / dd).clamp(0.0, 1.0);
        p += d * step;
    }
    p
}

struct Simulator<'a> {
    sys: &'a SwitchedSystem,
    u: &'a InputSignal,
    opts: SimOptions,
    traj: Trajectory,
    tiny_steps: usize,
    warned_min_norm: bool,
}

const MAX_TINY_STEPS: usize = 1000;

impl<'a> Simulator<'a> {
    fn record_tol(&self) -> f64 {
        10.0 * self.opts.event_tol
    }

    fn push(&mut self, t: f64, x: Vector, sliding: Option<usize>) -> Result<()> {
        let act = self.sys.partition.active_indices(&x, self.record_tol())?.indices;
        self.traj.times.push(t);
        self.traj.states.push(x);
        self.traj.active_sets.push(act);
        self.traj.sliding_field.push(sliding);
        Ok(())
    }

    fn event(&mut self, t: f64, kind: EventKind) {
        let row = self.traj.times.len() - 1;
        self.traj.events.push(Event { time: t, kind, row });
    }

    fn exit_margin(&self, i: usize, x: &Vector) -> f64 {
        self.sys.partition.region_margin(i, x)
    }

    /// Phase at a point reached by crossing out of `prev`.
    fn classify(&mut self, t: f64, x: &Vector, prev: Option<usize>) -> Result<Phase> {
        let u = self.u.at(t);
        let act = self.sys.partition.active_indices(x, self.record_tol())?.indices;
        match act.len() {
            1 => Ok(Phase::Smooth(act[0])),
            2 => {
                let (i, j) = (act[0], act[1]);
                let shared = self.sys.partition.shared_fields(i, j);
                let Some(&k) = shared.first() else {
                    return Ok(Phase::Smooth(prev.filter(|p| act.contains(p)).unwrap_or(i)));
                };
                let sign_i = self.sys.partition.regions()[i]
                    .constraints
                    .iter()
                    .find(|c| c.field == k)
                    .map_or(1.0, |c| c.sign.factor());
                let (q, n) = self.sys.partition.fields()[k].value_and_gradient(x);
                if n.norm() == 0.0 {
                    return self.min_norm_phase();
                }
                let (fi, fj) = (self.sys.field(i, x, &u), self.sys.field(j, x, &u));
                let scale = n.norm() * fi.norm().max(fj.norm());
                let eps = 1e-14 * scale;
                let (ai, aj) = (sign_i * n.dot(&fi), sign_i * n.dot(&fj));
                // ai < 0: f_i leaves region i; aj > 0: f_j leaves region j.
                if ai < -eps && aj > eps {
                    return Ok(Phase::Sliding { i, j, k, sign_i });
                }
                if ai > eps && aj > eps {
                    return Ok(Phase::Smooth(i));
                }
                if ai < -eps && aj < -eps {
                    return Ok(Phase::Smooth(j));
                }
                if ai > eps && aj < -eps {
                    // repulsive: stay on the side the state is on
                    return Ok(Phase::Smooth(if sign_i * q >= 0.0 { i } else { j }));
                }
                // at least one tangential component: keep the previous mode if possible
                if let Some(p) = prev.filter(|p| act.contains(p)) {
                    let other = if p == i { j } else { i };
                    let a_other = if other == i { ai } else { aj };
                    let enters_other = if other == i { a_other > eps } else { a_other < -eps };
                    return Ok(Phase::Smooth(if enters_other { other } else { p }));
                }
                Ok(Phase::Smooth(if ai >= 0.0 { i } else { j }))
            }
            _ => self.min_norm_phase(),
        }
    }

    fn min_norm_phase(&mut self) -> Result<Phase> {
        if !self.warned_min_norm {
            self.traj.warnings.push(format!(
                "minimum-norm hull selection used at t = {:.6e} (three or more regions active or degenerate normal)",
                self.traj.times.last().copied().unwrap_or(0.0)
            ));
            self.warned_min_norm = true;
        }
        Ok(Phase::MinNorm)
    }

    fn sliding_field(&self, i: usize, j: usize, k: usize, u: &Vector, y: &Vector) -> Vector {
        let (fi, fj) = (self.sys.field(i, y, u), self.sys.field(j, y, u));
        let n = self.sys.partition.fields()[k].gradient(y);
        let (a, b) = (n.dot(&fi), n.dot(&fj));
        let lambda = if a != b { (b / (b - a)).clamp(0.0, 1.0) } else { 0.5 };
        fi * lambda + fj * (1.0 - lambda)
    }

    fn project(&self, k: usize, x: &mut Vector) {
        let field = &self.sys.partition.fields()[k];
        for _ in 0..30 {
            let (q, g) = field.value_and_gradient(x);
            let gg = g.norm_squared();
            if q.abs() <= 1e-3 * self.opts.event_tol || gg == 0.0 {
                break;
            }
            *x -= g * (q / gg);
        }
    }

    fn note_step(&mut self, h: f64, t: f64) -> Result<()> {
        if h < 1e3 * self.opts.event_tol.max(f64::EPSILON * t.abs()) {
            self.tiny_steps += 1;
            if self.tiny_steps > MAX_TINY_STEPS {
                return Err(SwitchedError::StepSizeUnderflow { t });
            }
        } else {
            self.tiny_steps = 0;
        }
        Ok(())
    }

    /// Largest `h* ≤ h` (to event_tol) with `still_in(h*)`, given `!still_in(h)`.
    fn locate(&self, still_in: impl Fn(f64) -> bool, residual: impl Fn(f64) -> f64, h: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, h);
        for _ in 0..200 {
            if hi - lo <= self.opts.event_tol && residual(hi).abs() <= self.opts.event_tol {
                break;
            }
            if hi - lo <= f64::EPSILON * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if still_in(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    fn run(mut self, x0: &Vector, horizon: f64) -> Result<Trajectory> {
        let mut t = 0.0;
        let mut x = x0.clone();
        self.push(t, x.clone(), None)?;
        let mut phase = self.classify(t, &x, None)?;
        if let Phase::Sliding { k, .. } = phase {
            self.project(k, &mut x);
            self.event(t, EventKind::SlideStart);
        }
        let eta = 1e-3 * self.opts.event_tol;
        while t < horizon * (1.0 - 1e-15) {
            if x.norm() > self.opts.state_bound || !x.iter().all(|v| v.is_finite()) {
                self.traj.complete = false;
                return Ok(self.traj);
            }
            let mut h = self.opts.dt_max.min(horizon - t);
            if let Some(tb) = self.u.next_break(t) {
                h = h.min(tb - t);
            }
            match phase {
                Phase::Smooth(i) => {
                    let f = |s: f64, y: &Vector| self.sys.field(i, y, &self.u.at_in_step(t, s));
                    let x1 = rk4(&f, t, &x, h);
                    if self.exit_margin(i, &x1) >= -eta {
                        t += h;
                        x = x1;
                        self.note_step(h, t)?;
                        self.push(t, x.clone(), None)?;
                        continue;
                    }
                    let still_in = |s: f64| self.exit_margin(i, &rk4(&f, t, &x, s)) >= -eta;
                    let residual = |s: f64| self.exit_margin(i, &rk4(&f, t, &x, s));
                    let hs = self.locate(still_in, residual, h);
                    x = rk4(&f, t, &x, hs);
                    t += hs;
                    self.note_step(hs, t)?;
                    self.push(t, x.clone(), None)?;
                    let next = self.classify(t, &x, Some(i))?;
                    match next {
                        Phase::Sliding { k, .. } => {
                            self.project(k, &mut x);
                            *self.traj.states.last_mut().unwrap() = x.clone();
                            *self.traj.sliding_field.last_mut().unwrap() = Some(k);
                            self.event(t, EventKind::SlideStart);
                        }
                        Phase::Smooth(j) if j != i => self.event(t, EventKind::Crossing),
                        _ => {}
                    }
                    phase = next;
                }
                Phase::Sliding { i, j, k, sign_i } => {
                    let f = |s: f64, y: &Vector| self.sliding_field(i, j, k, &self.u.at_in_step(t, s), y);
                    let step = |s: f64| {
                        let mut y = rk4(&f, t, &x, s);
                        self.project(k, &mut y);
                        y
                    };
                    // other constraints of i and j (the surface field itself is held at 0)
                    let cover = |y: &Vector| {
                        let p = &self.sys.partition;
                        [i, j]
                            .iter()
                            .map(|&r| {
                                p.regions()[r]
                                    .constraints
                                    .iter()
                                    .filter(|c| c.field != k)
                                    .map(|c| c.sign.factor() * p.fields()[c.field].value(y))
                                    .fold(f64::INFINITY, f64::min)
                            })
                            .fold(f64::INFINITY, f64::min)
                    };
                    let mut x1 = step(h);
                    let mut hs = h;
                    let mut left_cover = false;
                    if cover(&x1) < -eta {
                        hs = self.locate(|s| cover(&step(s)) >= -eta, |s| cover(&step(s)), h);
                        x1 = step(hs);
                        left_cover = true;
                    }
                    t += hs;
                    x = x1;
                    self.note_step(hs, t)?;
                    self.push(t, x.clone(), Some(k))?;
                    let u = self.u.at(t);
                    let n = self.sys.partition.fields()[k].gradient(&x);
                    let (fi, fj) = (self.sys.field(i, &x, &u), self.sys.field(j, &x, &u));
                    let (ai, aj) = (sign_i * n.dot(&fi), sign_i * n.dot(&fj));
                    if left_cover || !(ai < 0.0 && aj > 0.0) {
                        self.event(t, EventKind::SlideEnd);
                        *self.traj.sliding_field.last_mut().unwrap() = None;
                        phase = if left_cover {
                            self.classify(t, &x, None)?
                        } else if ai >= 0.0 {
                            Phase::Smooth(i)
                        } else {
                            Phase::Smooth(j)
                        };
                        if let Phase::Sliding { k, .. } = phase {
                            self.event(t, EventKind::SlideStart);
                            self.project(k, &mut x);
                        }
                    }
                }
                Phase::MinNorm => {
                    let f = |s: f64, y: &Vector| {
                        let u = self.u.at_in_step(t, s);
                        match self.sys.hull_vertices(y, &u, self.record_tol()) {
                            Ok(hull) => min_norm_element(&hull.vertices),
                            Err(_) => Vector::zeros(y.len()),
                        }
                    };
                    x = rk4(&f, t, &x, h);
                    t += h;
                    self.note_step(h, t)?;
                    self.push(t, x.clone(), None)?;
                    let act = self.sys.partition.active_indices(&x, self.record_tol())?.indices;
                    if act.len() <= 2 {
                        phase = self.classify(t, &x, None)?;
                        if let Phase::Sliding { k, .. } = phase {
                            self.event(t, EventKind::SlideStart);
                            self.project(k, &mut x);
                        }
                    }
                }
            }
        }
        self.traj.complete = true;
        Ok(self.traj)
    }
}

/// Numerical Filippov solution on `[0, horizon]`.
pub fn simulate(sys: &SwitchedSystem, x0: &Vector, u: &InputSignal, horizon: f64, opts: SimOptions) -> Result<Trajectory> {
    if !(horizon > 0.0) || !(opts.dt_max > 0.0) || !(opts.event_tol > 0.0) || !(opts.state_bound > 0.0) {
        return Err(SwitchedError::InvalidOptions(format!("{opts:?}, horizon {horizon}")));
    }
    if x0.len() != sys.dim() {
        return Err(SwitchedError::DimensionMismatch(format!("x0 has {} entries, expected {}", x0.len(), sys.dim())));
    }
    if u.dim() != sys.input_dim() {
        return Err(SwitchedError::DimensionMismatch(format!("input has {} channels, expected {}", u.dim(), sys.input_dim())));
    }
    u.validate()?;
    let sim = Simulator {
        sys,
        u,
        opts,
        traj: Trajectory {
            times: vec![],
            states: vec![],
            active_sets: vec![],
            events: vec![],
            sliding_field: vec![],
            complete: false,
            warnings: vec![],
        },
        tiny_steps: 0,
        warned_min_norm: false,
    };
    sim.run(x0, horizon)
}

/// Regions `[{x ≥ 0}, {x ≤ 0}]` on ℝ with ẋ = −1 and ẋ = +1: the classic
/// sliding example ẋ = −sign(x).
pub fn sign_system() -> SwitchedSystem {
    use crate::partition::ScalarField;
    let p = ProperPartition::split(ScalarField::linear(Vector::from_element(1, 1.0))).expect("valid split");
    let m = |c: f64| Mode::Affine { a: Matrix::zeros(1, 1), offset: Vector::from_element(1, c), b: Matrix::zeros(1, 0) };
    SwitchedSystem::new(p, vec![m(-1.0), m(1.0)], 0).expect("consistent dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::ScalarField;
    use nalgebra::dvector;

    fn flower(a1: f64, a2: f64, eps: f64) -> SwitchedSystem {
        let q = Matrix::from_diagonal(&dvector![-1.0, 1.0]);
        let p = ProperPartition::split(ScalarField::quadratic(q).unwrap()).unwrap();
        let a_1 = Matrix::from_row_slice(2, 2, &[-eps, a1, -a2, -eps]);
        let a_2 = Matrix::from_row_slice(2, 2, &[-eps, a2, -a1, -eps]);
        let b = Matrix::identity(2, 2);
        SwitchedSystem::new(p, vec![Mode::Linear { a: a_1, b: b.clone() }, Mode::Linear { a: a_2, b }], 2).unwrap()
    }

    #[test]
    fn hull_examples() {
        let s = flower(1.0, 5.0, 0.1);
        let h = s.hull_vertices(&dvector![1.0, 1.0], &dvector![0.0, 0.0], 1e-9).unwrap();
        assert_eq!(h.indices, vec![0, 1]);
        assert!((&h.vertices[0] - dvector![0.9, -5.1]).norm() < 1e-12);
        assert!((&h.vertices[1] - dvector![4.9, -1.1]).norm() < 1e-12);
        let h = s.hull_vertices(&dvector![1.0, 0.0], &dvector![0.0, 0.0], 1e-9).unwrap();
        assert_eq!(h.indices, vec![1]);
        let u = dvector![0.3, -0.7];
        let hu = s.hull_vertices(&dvector![1.0, 1.0], &u, 1e-9).unwrap();
        let h0 = s.hull_vertices(&dvector![1.0, 1.0], &dvector![0.0, 0.0], 1e-9).unwrap();
        for (a, b) in hu.vertices.iter().zip(&h0.vertices) {
            assert!((a - b - &u).norm() < 1e-14);
        }
    }

    fn hull2(a: f64, b: f64) -> FilippovHull {
        FilippovHull { x: dvector![0.0], u: dvector![], indices: vec![0, 1], vertices: vec![dvector![a], dvector![b]] }
    }

    #[test]
    fn sliding_examples() {
        let n = dvector![1.0];
        assert_eq!(sliding_combination(&hull2(-1.0, 1.0), &n).unwrap(), SlidingOutcome::Sliding(0.5));
        assert_eq!(sliding_combination(&hull2(1.0, 2.0), &n).unwrap(), SlidingOutcome::Crossing);
        match sliding_combination(&hull2(-2.0, 1.0), &n).unwrap() {
            SlidingOutcome::Sliding(l) => assert!((l - 1.0 / 3.0).abs() < 1e-15),
            o => panic!("{o:?}"),
        }
        assert_eq!(sliding_combination(&hull2(0.0, 0.0), &n).unwrap(), SlidingOutcome::Tangent);
        assert_eq!(sliding_combination(&hull2(-1.0, 1.0), &dvector![0.0]), Err(SwitchedError::DegenerateNormal));
    }

    #[test]
    fn sign_system_reaches_and_slides() {
        let s = sign_system();
        assert_eq!(s.equilibrium_violations(), vec![0, 1]);
        let opts = SimOptions::default();
        let tr = simulate(&s, &dvector![1.0], &InputSignal::zero(0), 2.0, opts).unwrap();
        assert!(tr.complete);
        let start = tr.events.iter().find(|e| e.kind == EventKind::SlideStart).expect("sliding starts");
        assert!((start.time - 1.0).abs() <= 2.0 * opts.event_tol, "reach time {}", start.time);
        for (t, x) in tr.times.iter().zip(&tr.states) {
            if *t >= 1.05 {
                assert!(x[0].abs() <= 1e-6);
            }
        }
        for (x, k) in tr.states.iter().zip(&tr.sliding_field) {
            if k.is_some() {
                assert!(x[0].abs() <= 10.0 * opts.event_tol);
            }
        }
        assert!((tr.times.last().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flower_energy_decays_at_damping_rate() {
        // With u = 0, d/dt xᵀP_i x = −2ε xᵀP_i x on each region and V is
        // continuous, so V(t) = V(0)·e^{−2εt} exactly.
        let s = flower(1.0, 5.0, 0.1);
        let tr = simulate(&s, &dvector![1.0, 1.0], &InputSignal::zero(2), 20.0, SimOptions::default()).unwrap();
        let v = |x: &Vector| {
            let (p1, p2) = (5.0 * x[0] * x[0] + x[1] * x[1], x[0] * x[0] + 5.0 * x[1] * x[1]);
            if x[1] * x[1] >= x[0] * x[0] { p1 } else { p2 }
        };
        for (t, x) in tr.times.iter().zip(&tr.states) {
            let expect = 6.0 * (-0.2 * t).exp();
            assert!((v(x) - expect).abs() <= 1e-7 * expect.max(1e-3), "t = {t}");
        }
        assert!(tr.events.iter().filter(|e| e.kind == EventKind::Crossing).count() > 4);
    }

    #[test]
    fn richardson_on_smooth_mode() {
        let p = ProperPartition::whole(2);
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.3]);
        let s = SwitchedSystem::new(p, vec![Mode::Linear { a: a.clone(), b: Matrix::zeros(2, 0) }], 0).unwrap();
        let x0 = dvector![1.0, 0.0];
        let run = |dt| {
            let tr = simulate(&s, &x0, &InputSignal::zero(0), 1.0, SimOptions { dt_max: dt, ..Default::default() }).unwrap();
            tr.final_state().clone()
        };
        let exact = (a * 1.0).exp() * &x0;
        let (e1, e2) = ((run(0.02) - &exact).norm(), (run(0.01) - &exact).norm());
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn piecewise_constant_input_breaks_are_hit() {
        let p = ProperPartition::whole(1);
        let s = SwitchedSystem::new(p, vec![Mode::Linear { a: Matrix::zeros(1, 1), b: Matrix::identity(1, 1) }], 1).unwrap();
        let u = InputSignal::PiecewiseConstant { times: vec![0.0, 0.333], values: vec![dvector![1.0], dvector![-2.0]] };
        let tr = simulate(&s, &dvector![0.0], &u, 1.0, SimOptions { dt_max: 0.1, ..Default::default() }).unwrap();
        assert!(tr.times.iter().any(|&t| (t - 0.333).abs() < 1e-15));
        assert!((tr.final_state()[0] - (0.333 - 2.0 * 0.667)).abs() < 1e-12);
        assert_eq!(u.sup_norm_to(0.2), 1.0);
        assert_eq!(u.sup_norm_to(0.5), 2.0);
    }

    #[test]
    fn state_bound_stops_early() {
        let p = ProperPartition::whole(1);
        let s = SwitchedSystem::new(p, vec![Mode::Linear { a: Matrix::identity(1, 1), b: Matrix::zeros(1, 0) }], 0).unwrap();
        let tr = simulate(&s, &dvector![1.0], &InputSignal::zero(0), 100.0, SimOptions { state_bound: 10.0, ..Default::default() }).unwrap();
        assert!(!tr.complete);
        assert!(*tr.times.last().unwrap() < 3.0);
    }

    #[test]
    fn csv_header_and_rows() {
        let s = flower(1.0, 5.0, 0.1);
        let tr = simulate(&s, &dvector![1.0, 0.5], &InputSignal::zero(2), 1.0, SimOptions::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,active,event");
        assert_eq!(lines.count(), tr.times.len());
        assert!(text.contains("crossing"));
    }

    #[test]
    fn min_norm_of_segment() {
        let p = min_norm_element(&[dvector![1.0, 1.0], dvector![-1.0, 1.0]]);
        assert!((p - dvector![0.0, 1.0]).norm() < 1e-12);
    }
}
