//! Workflow execution: scenario in, JSON report value (and optionally a
//! trajectory) out.

use nalgebra::DVector;
use nsiss_core::certify::{
    check_dissipation, check_main_iss, check_switched_iss, trajectory_check, CheckReport, DecayArgument,
    DissipationCertificate, DissipationForm, ISSCertificate, SwitchedVariant,
};
use nsiss_core::compose::{cascade_compose, small_gain_compose, CompositeKind, CompositeLyapunov, SubsystemCertificate};
use nsiss_core::linmat::{
    build_closed_loop, closed_loop_gains, flower_instance, verify_observer_lmis, verify_plant_lmis, ClosedLoopGains,
    VERIFY_TOL,
};
use nsiss_core::nonsmooth::DerivativeInterval;
use nsiss_core::switched::{simulate, EventKind, SwitchedSystem, Trajectory};
use nsiss_core::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;

use crate::report::{check_report, num, nums, obj};
use crate::schema::*;
use crate::{CliError, Result};

pub struct RunOutput {
    pub pass: bool,
    pub report: Value,
    pub trajectory: Option<Trajectory>,
}

fn compute<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Compute(e.to_string())
}

pub fn execute(s: &Scenario) -> Result<RunOutput> {
    let (pass, body, trajectory) = match s.kind {
        Kind::Check => run_check(s)?,
        Kind::Simulate => run_simulate(s)?,
        Kind::Compose => run_compose(s)?,
        Kind::Lmi => run_lmi(s)?,
        Kind::Flower => run_flower(s)?,
        Kind::ClosedLoop => run_closed_loop(s)?,
    };
    let report = obj([
        ("name", Value::String(s.name.clone())),
        ("kind", Value::String(s.kind.as_str().into())),
        ("seed", s.seed.into()),
        ("pass", Value::Bool(pass)),
        ("result", body),
    ]);
    Ok(RunOutput { pass, report, trajectory })
}

type Outcome = (bool, Value, Option<Trajectory>);

fn decay(d: DecaySpec) -> DecayArgument {
    match d {
        DecaySpec::StateNorm => DecayArgument::StateNorm,
        DecaySpec::Level => DecayArgument::Level,
    }
}

fn iss_certificate(c: &CertificateSpec) -> Result<ISSCertificate> {
    ISSCertificate::new(
        c.v.build("certificate.v")?,
        c.alpha_lo.build("certificate.alpha_lo")?,
        c.alpha_hi.build("certificate.alpha_hi")?,
        c.rho.build("certificate.rho")?,
        c.gamma.build("certificate.gamma")?,
        decay(c.decay),
    )
    .map_err(|e| CliError::Schema(format!("certificate: {e}")))
}

fn run_check(s: &Scenario) -> Result<Outcome> {
    let sys = require(&s.system, "system", s.kind)?.build()?;
    let cs = require(&s.certificate, "certificate", s.kind)?;
    let plan = require(&s.plan, "plan", s.kind)?.build(sys.dim(), s.seed)?;
    let variant = s.variant.unwrap_or(Variant::Main);
    let rep = match variant {
        Variant::DissipationState | Variant::DissipationLevel => {
            let c = DissipationCertificate::new(
                cs.v.build("certificate.v")?,
                cs.alpha_lo.build("certificate.alpha_lo")?,
                cs.alpha_hi.build("certificate.alpha_hi")?,
                cs.rho.build("certificate.rho")?,
                cs.gamma.build("certificate.gamma")?,
            )
            .map_err(|e| CliError::Schema(format!("certificate: {e}")))?;
            let form = if variant == Variant::DissipationState { DissipationForm::State } else { DissipationForm::Level };
            check_dissipation(&sys, &c, &plan, form).map_err(compute)?
        }
        Variant::Main => check_main_iss(&sys, &iss_certificate(cs)?, &plan).map_err(compute)?,
        v => {
            let sv = match v {
                Variant::General => SwitchedVariant::General,
                Variant::Aligned => SwitchedVariant::Aligned,
                _ => SwitchedVariant::Clarke,
            };
            check_switched_iss(&sys, &iss_certificate(cs)?, &plan, sv).map_err(compute)?
        }
    };
    Ok((rep.pass, obj([("check", check_report(&rep))]), None))
}

fn vec_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Earliest time after which every recorded state satisfies |x| ≤ tol.
fn settle_time(tr: &Trajectory, tol: f64) -> f64 {
    let mut t = f64::INFINITY;
    for (ti, x) in tr.times.iter().zip(&tr.states).rev() {
        if x.norm() <= tol {
            t = *ti;
        } else {
            break;
        }
    }
    t
}

fn trajectory_summary(sys: &SwitchedSystem, tr: &Trajectory, reach_tol: f64) -> Value {
    let count = |k: EventKind| tr.events.iter().filter(|e| e.kind == k).count();
    let sliding_residual = tr
        .states
        .iter()
        .zip(&tr.sliding_field)
        .filter_map(|(x, f)| f.map(|k| sys.partition().fields()[k].value(x).abs()))
        .fold(0.0, f64::max);
    obj([
        ("complete", Value::Bool(tr.complete)),
        ("rows", tr.times.len().into()),
        ("final_time", num(*tr.times.last().unwrap_or(&0.0))),
        ("final_state", nums(&vec_of(tr.final_state()))),
        ("settle_time", num(settle_time(tr, reach_tol))),
        ("reach_tol", num(reach_tol)),
        ("sliding_residual", num(sliding_residual)),
        (
            "events",
            obj([
                ("crossing", count(EventKind::Crossing).into()),
                ("slide_start", count(EventKind::SlideStart).into()),
                ("slide_end", count(EventKind::SlideEnd).into()),
            ]),
        ),
        ("warnings", Value::Array(tr.warnings.iter().cloned().map(Value::String).collect())),
    ])
}

fn run_simulate(s: &Scenario) -> Result<Outcome> {
    let sys = require(&s.system, "system", s.kind)?.build()?;
    let sim = require(&s.simulation, "simulation", s.kind)?;
    if sim.x0.len() != sys.dim() {
        return Err(CliError::Schema(format!("simulation.x0: expected length {}", sys.dim())));
    }
    let u = sim.input.build(sys.input_dim())?;
    let tr = simulate(&sys, &Vector::from_column_slice(&sim.x0), &u, sim.horizon, sim.options.build()).map_err(compute)?;
    let mut pass = tr.complete;
    let mut body = vec![("trajectory", trajectory_summary(&sys, &tr, sim.reach_tol))];
    if let Some(cs) = &s.certificate {
        let rep = trajectory_check(&tr, &u, &iss_certificate(cs)?, sim.margin_tol).map_err(compute)?;
        pass &= rep.pass;
        body.push(("check", check_report(&rep)));
    }
    Ok((pass, Value::Object(body.into_iter().map(|(k, v)| (k.to_string(), v)).collect()), Some(tr)))
}

fn subsystem(c: &SubsystemSpec, name: &str) -> Result<SubsystemCertificate> {
    SubsystemCertificate::new(
        c.v.build(&format!("{name}.v"))?,
        c.alpha_lo.build(&format!("{name}.alpha_lo"))?,
        c.alpha_hi.build(&format!("{name}.alpha_hi"))?,
        c.rho.build(&format!("{name}.rho"))?,
        c.chi.build(&format!("{name}.chi"))?,
        c.gamma.build(&format!("{name}.gamma"))?,
    )
    .map_err(|e| CliError::Schema(format!("{name}: {e}")))
}

fn composite_table(w: &CompositeLyapunov, probes: &[f64]) -> Value {
    let col = |f: &dyn Fn(f64) -> f64| nums(&probes.iter().map(|&s| f(s)).collect::<Vec<_>>());
    let mut m = serde_json::Map::new();
    m.insert("s".into(), nums(probes));
    m.insert("gamma".into(), col(&|s| w.gamma.eval(s)));
    m.insert("rho".into(), col(&|s| w.rho.eval(s)));
    match &w.kind {
        CompositeKind::MaxSmallGain { sigma } => {
            m.insert("sigma".into(), col(&|s| sigma.eval(s)));
        }
        CompositeKind::SumCascade { ell, nu } => {
            m.insert("ell".into(), col(&|s| ell.eval(s)));
            m.insert("nu".into(), col(&|s| nu.eval(s)));
        }
    }
    Value::Object(m)
}

fn run_compose(s: &Scenario) -> Result<Outcome> {
    let cs = require(&s.compose, "compose", s.kind)?;
    let c1 = subsystem(&cs.first, "compose.first")?;
    let c2 = subsystem(&cs.second, "compose.second")?;
    let w = match cs.composition {
        CompositionSpec::SmallGain { domain_max } => small_gain_compose(&c1, &c2, domain_max),
        CompositionSpec::Cascade { m_cap } => cascade_compose(&c1, &c2, m_cap),
    }
    .map_err(compute)?;
    let kind = match w.kind {
        CompositeKind::MaxSmallGain { .. } => "max_small_gain",
        CompositeKind::SumCascade { .. } => "sum_cascade",
    };
    let mut body = serde_json::Map::new();
    body.insert("composite".into(), Value::String(kind.into()));
    body.insert("table".into(), composite_table(&w, &cs.probes));
    body.insert("notes".into(), Value::Array(w.notes.iter().cloned().map(Value::String).collect()));
    let mut pass = true;
    if let Some(sys) = &s.system {
        let sys = sys.build()?;
        let plan = require(&s.plan, "plan", s.kind)?.build(sys.dim(), s.seed)?;
        let rep = match w.kind {
            CompositeKind::MaxSmallGain { .. } => {
                check_main_iss(&sys, &w.implication_certificate().map_err(compute)?, &plan).map_err(compute)?
            }
            CompositeKind::SumCascade { .. } => {
                check_dissipation(&sys, &w.dissipation_certificate().map_err(compute)?, &plan, DissipationForm::Level)
                    .map_err(compute)?
            }
        };
        pass = rep.pass;
        body.insert("check".into(), check_report(&rep));
    }
    Ok((pass, Value::Object(body), None))
}

fn gains_value(g: &ClosedLoopGains) -> Value {
    obj([
        ("lambda_x_min", num(g.lambda_x_min)),
        ("lambda_x_max", num(g.lambda_x_max)),
        ("lambda_e_min", num(g.lambda_e_min)),
        ("lambda_e_max", num(g.lambda_e_max)),
        ("norm_b", num(g.norm_b)),
        ("norm_k", num(g.norm_k)),
        ("norm_da", num(g.norm_da)),
        ("gamma_x_slope", num(g.gamma_x_slope)),
        ("gamma_e_slope", num(g.gamma_e_slope)),
        ("eta1_slope", num(g.eta1_slope)),
        ("eta2_slope", num(g.eta2_slope)),
        ("slope_product", num(g.slope_product)),
        ("small_gain_value", num(g.small_gain_value)),
        ("pass", Value::Bool(g.pass)),
    ])
}

struct LmiOutcome {
    pass: bool,
    body: serde_json::Map<String, Value>,
    plant: nsiss_core::linmat::LinearSwitchedPlant,
    design: nsiss_core::linmat::ControllerDesign,
}

fn lmi_stage(s: &Scenario) -> Result<LmiOutcome> {
    let plant = require(&s.plant, "plant", s.kind)?.build()?;
    let design = require(&s.design, "design", s.kind)?.build()?;
    let pr = verify_plant_lmis(&plant, &design, VERIFY_TOL).map_err(compute)?;
    let or = verify_observer_lmis(&plant, &design, VERIFY_TOL).map_err(compute)?;
    let mut body = serde_json::Map::new();
    body.insert("plant_lmis".into(), check_report(&pr));
    body.insert("observer_lmis".into(), check_report(&or));
    let mut pass = pr.pass && or.pass;
    if pass {
        let g = closed_loop_gains(&plant, &design).map_err(compute)?;
        pass &= g.pass;
        body.insert("gains".into(), gains_value(&g));
    }
    Ok(LmiOutcome { pass, body, plant, design })
}

fn run_lmi(s: &Scenario) -> Result<Outcome> {
    let o = lmi_stage(s)?;
    Ok((o.pass, Value::Object(o.body), None))
}

/// Uniform sample from the ball of radius `r` by cube rejection.
fn ball_point(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vector {
    loop {
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        if x.norm() <= 1.0 {
            return x * r;
        }
    }
}

fn run_closed_loop(s: &Scenario) -> Result<Outcome> {
    let cl = require(&s.closed_loop, "closed_loop", s.kind)?;
    let LmiOutcome { mut pass, mut body, plant, design } = lmi_stage(s)?;
    if !pass {
        body.insert("simulations".into(), Value::Null);
        return Ok((false, Value::Object(body), None));
    }
    let sys = build_closed_loop(&plant, &design).map_err(compute)?;
    let n = plant.n();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let starts: Vec<Vector> = (0..cl.n_sims).map(|_| ball_point(&mut rng, 2 * n, cl.radius)).collect();
    let u = nsiss_core::switched::InputSignal::zero(0);
    let opts = cl.options.build();
    let runs: Vec<Trajectory> = starts
        .par_iter()
        .map(|x0| simulate(&sys, x0, &u, cl.horizon, opts))
        .collect::<std::result::Result<_, _>>()
        .map_err(compute)?;
    let terminal: Vec<f64> = runs
        .iter()
        .map(|tr| {
            let xf = tr.final_state();
            xf.rows(0, n).norm() + xf.rows(n, n).norm()
        })
        .collect();
    let worst = terminal.iter().copied().fold(0.0, f64::max);
    let complete = runs.iter().all(|t| t.complete);
    pass &= complete && worst <= cl.terminal_tol;
    body.insert(
        "simulations".into(),
        obj([
            ("count", cl.n_sims.into()),
            ("all_complete", Value::Bool(complete)),
            ("worst_terminal", num(worst)),
            ("terminal_tol", num(cl.terminal_tol)),
            ("terminal", nums(&terminal)),
            ("pass", Value::Bool(complete && worst <= cl.terminal_tol)),
        ]),
    );
    Ok((pass, Value::Object(body), runs.into_iter().next()))
}

fn interval(iv: DerivativeInterval) -> Value {
    match iv {
        DerivativeInterval::Empty => Value::String("empty".into()),
        DerivativeInterval::Interval { lo, hi } => obj([("lo", num(lo)), ("hi", num(hi))]),
    }
}

fn run_flower(s: &Scenario) -> Result<Outcome> {
    let fs = require(&s.flower, "flower", s.kind)?;
    let b = matrix(&fs.b, "flower.b")?;
    let f = flower_instance(fs.a1, fs.a2, fs.eps, &b).map_err(|e| CliError::Schema(format!("flower: {e}")))?;
    let plan = require(&s.plan, "plan", s.kind)?.build(2, s.seed)?;
    let aligned = check_switched_iss(&f.system, &f.certificate, &plan, SwitchedVariant::Aligned).map_err(compute)?;
    let clarke = check_switched_iss(&f.system, &f.certificate, &plan, SwitchedVariant::Clarke).map_err(compute)?;
    if fs.probe.len() != 2 {
        return Err(CliError::Schema("flower.probe: expected a point in the plane".into()));
    }
    let z = Vector::from_column_slice(&fs.probe);
    let hull = f.system.hull_vertices(&z, &Vector::zeros(b.ncols()), 1e-9).map_err(compute)?;
    let c = f.certificate.v.clarke_interval(&hull, 1e-9).map_err(compute)?;
    let l = f.certificate.v.lie_interval(&hull, 1e-9).map_err(compute)?;
    let note = |r: &CheckReport| if r.pass { "pass" } else { "fail" };
    let body = obj([
        ("threshold_slope", num(f.threshold_slope)),
        ("b", num(f.b)),
        ("eps_prime", num(f.eps_prime)),
        ("decay_lmi", nums(&f.decay_lmi)),
        ("rotation_residual", num(f.rotation_residual)),
        ("aligned", check_report(&aligned)),
        ("clarke", check_report(&clarke)),
        ("probe", obj([("z", nums(&fs.probe)), ("clarke", interval(c)), ("lie", interval(l))])),
        (
            "summary",
            Value::String(format!("aligned (Lie) variant: {}; Clarke variant: {}", note(&aligned), note(&clarke))),
        ),
    ]);
    Ok((aligned.pass, body, None))
}
