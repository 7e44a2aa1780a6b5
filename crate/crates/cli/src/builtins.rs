//! Named scenarios, built as ordinary scenario records so they export to
//! files and reload unchanged.

use nsiss_core::kfun::ComparisonFn;
use nsiss_core::linmat::{fixture_design, fixture_plant, flower_instance};
use nsiss_core::Matrix;

use crate::schema::*;

pub const NAMES: &[&str] = &["flower", "flower-check", "flower-clarke", "sign1d", "cascade-linear", "closed-loop-fixture"];

pub fn builtin(name: &str) -> Option<Scenario> {
    Some(match name {
        "flower" => flower(),
        "flower-check" => flower_check(Variant::Aligned, name),
        "flower-clarke" => flower_check(Variant::Clarke, name),
        "sign1d" => sign1d(),
        "cascade-linear" => cascade_linear(),
        "closed-loop-fixture" => closed_loop_fixture(),
        _ => return None,
    })
}

fn spec_of(f: &ComparisonFn) -> FnSpec {
    FnSpec { form: f.form.clone(), class: Some(f.class()) }
}

fn identity(n: usize) -> Rows {
    rows(&Matrix::identity(n, n))
}

fn flower_plan() -> PlanSpec {
    PlanSpec {
        box_radius: Some(5.0),
        box_lo: None,
        box_hi: None,
        n_state: 10_000,
        input_radius: 1.0,
        n_input: 1,
        surface_pairs: vec![[0, 1]],
        n_surface: 10_000,
    }
}

fn flower() -> Scenario {
    let mut s = Scenario::new(Kind::Flower, "flower");
    s.seed = 2024;
    s.flower = Some(FlowerSpec { a1: 1.0, a2: 5.0, eps: 0.1, b: identity(2), probe: vec![1.0, 1.0] });
    s.plan = Some(flower_plan());
    s
}

/// The flower certificate spelled out as a generic `check` scenario.
fn flower_check(variant: Variant, name: &str) -> Scenario {
    let f = flower_instance(1.0, 5.0, 0.1, &Matrix::identity(2, 2)).expect("fixture parameters are valid");
    let partition = PartitionSpec::split(FieldSpec::Quadratic { q: vec![vec![-1.0, 0.0], vec![0.0, 1.0]] });
    let c = &f.certificate;
    let mut s = Scenario::new(Kind::Check, name);
    s.seed = 2024;
    s.system = Some(SystemSpec {
        dim: 2,
        input_dim: 2,
        partition: Some(partition.clone()),
        modes: f.a.iter().map(|a| ModeSpec { a: rows(a), b: identity(2), offset: None }).collect(),
    });
    s.certificate = Some(CertificateSpec {
        v: PiecewiseSpec {
            dim: 2,
            partition: Some(partition),
            pieces: f.p.iter().map(|p| FieldSpec::Quadratic { q: rows(p) }).collect(),
        },
        alpha_lo: spec_of(&c.alpha_lo),
        alpha_hi: spec_of(&c.alpha_hi),
        rho: spec_of(&c.rho),
        gamma: spec_of(&c.gamma),
        decay: DecaySpec::StateNorm,
    });
    s.plan = Some(flower_plan());
    s.variant = Some(variant);
    s
}

fn sign1d() -> Scenario {
    let mut s = Scenario::new(Kind::Simulate, "sign1d");
    let mode = |c: f64| ModeSpec { a: vec![vec![0.0]], b: vec![], offset: Some(vec![c]) };
    s.system = Some(SystemSpec {
        dim: 1,
        input_dim: 0,
        partition: Some(PartitionSpec::split(FieldSpec::Linear { v: vec![1.0] })),
        modes: vec![mode(-1.0), mode(1.0)],
    });
    s.simulation = Some(SimulationSpec {
        x0: vec![1.0],
        horizon: 2.0,
        input: InputSpec::Zero,
        options: SimOptionsSpec::default(),
        margin_tol: 1e-9,
        reach_tol: 1e-6,
    });
    s
}

fn scalar_block(rho: FnSpec, chi: FnSpec, gamma: FnSpec) -> SubsystemSpec {
    SubsystemSpec {
        v: PiecewiseSpec { dim: 1, partition: None, pieces: vec![FieldSpec::Quadratic { q: vec![vec![1.0]] }] },
        alpha_lo: FnSpec::power(1.0, 2.0),
        alpha_hi: FnSpec::power(1.0, 2.0),
        rho,
        chi,
        gamma,
    }
}

/// ẋ₁ = −x₁ + x₂ + u/√2 driven by ẋ₂ = −x₂ + u, with Vᵢ = xᵢ²:
/// V̇₂ ≤ −V₂ + u² and V̇₁ ≤ −V₁ + 2V₂ + u².
fn cascade_linear() -> Scenario {
    let mut s = Scenario::new(Kind::Compose, "cascade-linear");
    s.seed = 7;
    s.compose = Some(ComposeSpec {
        composition: CompositionSpec::Cascade { m_cap: 1e6 },
        first: scalar_block(FnSpec::linear(1.0), FnSpec::linear(2.0), FnSpec::power(1.0, 2.0)),
        second: scalar_block(FnSpec::linear(1.0), FnSpec::zero(), FnSpec::power(1.0, 2.0)),
        probes: vec![0.1, 1.0, 10.0],
    });
    s.system = Some(SystemSpec {
        dim: 2,
        input_dim: 1,
        partition: None,
        modes: vec![ModeSpec {
            a: vec![vec![-1.0, 1.0], vec![0.0, -1.0]],
            b: vec![vec![std::f64::consts::FRAC_1_SQRT_2], vec![1.0]],
            offset: None,
        }],
    });
    s.plan = Some(PlanSpec {
        box_radius: Some(5.0),
        box_lo: None,
        box_hi: None,
        n_state: 10_000,
        input_radius: 1.0,
        n_input: 1,
        surface_pairs: vec![],
        n_surface: 0,
    });
    s
}

fn closed_loop_fixture() -> Scenario {
    let mut s = Scenario::new(Kind::ClosedLoop, "closed-loop-fixture");
    s.seed = 8;
    s.plant = Some(PlantSpec::from_plant(&fixture_plant()));
    s.design = Some(DesignSpec::from_design(&fixture_design()));
    s.closed_loop = Some(ClosedLoopSpec {
        n_sims: 100,
        radius: 1.0,
        horizon: 20.0,
        terminal_tol: 1e-3,
        options: SimOptionsSpec::default(),
    });
    s
}
