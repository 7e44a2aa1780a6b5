//! End-to-end runs of the composition and closed-loop machinery on small
//! linear systems whose gains are checked by hand in the comments.

use nalgebra::{dmatrix, dvector};
use nsiss_core::certify::{check_dissipation, check_main_iss, DissipationForm, SamplePlan};
use nsiss_core::compose::{cascade_compose, small_gain_compose, SubsystemCertificate};
use nsiss_core::kfun::ComparisonFn;
use nsiss_core::linmat::{build_closed_loop, fixture_design, fixture_plant};
use nsiss_core::nonsmooth::PiecewiseC1Fn;
use nsiss_core::partition::{BoxBounds, ProperPartition};
use nsiss_core::switched::{simulate, InputSignal, Mode, SimOptions, SwitchedSystem};
use nsiss_core::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lin(c: f64) -> ComparisonFn {
    ComparisonFn::linear(c).unwrap()
}

fn sq(c: f64) -> ComparisonFn {
    ComparisonFn::power(c, 2.0).unwrap()
}

fn block(rho: ComparisonFn, chi: ComparisonFn, gamma: ComparisonFn) -> SubsystemCertificate {
    let v = PiecewiseC1Fn::quadratic(ProperPartition::whole(1), vec![Matrix::identity(1, 1)]).unwrap();
    SubsystemCertificate::new(v, sq(1.0), sq(1.0), rho, chi, gamma).unwrap()
}

fn linear_system(a: Matrix, b: Matrix) -> SwitchedSystem {
    let n = a.nrows();
    let m = b.ncols();
    SwitchedSystem::new(ProperPartition::whole(n), vec![Mode::Linear { a, b }], m).unwrap()
}

fn plan(n: usize, seed: u64) -> SamplePlan {
    SamplePlan {
        state_box: BoxBounds::symmetric(2, 5.0),
        n_state: n,
        input_radius: 1.0,
        n_input: 1,
        surface_pairs: vec![],
        n_surface: 0,
        seed,
    }
}

#[test]
fn cascade_testbed_dissipates() {
    // ẋ₁ = −x₁ + x₂ + u/√2, ẋ₂ = −x₂ + u with Vᵢ = xᵢ²:
    // V̇₂ ≤ −V₂ + u², V̇₁ ≤ −V₁ + 2V₂ + u²
    let c2 = block(lin(1.0), ComparisonFn::zero(), sq(1.0));
    let c1 = block(lin(1.0), lin(2.0), sq(1.0));
    let w = cascade_compose(&c1, &c2, 1e6).unwrap();
    // ν = 4·2 = 8, ℓ = 8s, γ = 8s² + s² = 9s², ρ = min{s/2, 2·s/16} = s/8
    for s in [1e-4, 0.3, 1.0, 7.0, 1e3] {
        assert!((w.gamma.eval(s) - 9.0 * s * s).abs() < 1e-8 * (1.0 + 9.0 * s * s));
        assert!((w.rho.eval(s) - s / 8.0).abs() < 1e-8 * (1.0 + s));
    }
    let sys = linear_system(dmatrix![-1.0, 1.0; 0.0, -1.0], dmatrix![std::f64::consts::FRAC_1_SQRT_2; 1.0]);
    let cert = w.dissipation_certificate().unwrap();
    let rep = check_dissipation(&sys, &cert, &plan(10_000, 5), DissipationForm::Level).unwrap();
    assert!(rep.pass, "{:#?}", rep.conditions);
    assert!(rep.conditions["dissipation"].worst_margin > 0.0);
}

#[test]
fn small_gain_testbed_decreases() {
    // ẋ₁ = −x₁ + 0.1x₂ + u, ẋ₂ = −x₂ + 0.1x₁ + u with Vᵢ = xᵢ²:
    // V₁ > max{V₂/4, 16u²} gives V̇₁ ≤ −1.1x₁², V₂ > max{V₁/2, 16u²} gives
    // V̇₂ ≤ −1.2x₂²
    let c1 = block(lin(1.0), lin(0.25), sq(16.0));
    let c2 = block(lin(1.0), lin(0.5), sq(16.0));
    let w = small_gain_compose(&c1, &c2, 100.0).unwrap();
    let cert = w.implication_certificate().unwrap();
    let sys = linear_system(dmatrix![-1.0, 0.1; 0.1, -1.0], dmatrix![1.0; 1.0]);
    let rep = check_main_iss(&sys, &cert, &plan(10_000, 6)).unwrap();
    assert!(rep.pass, "{:#?}", rep.conditions);
    assert!(rep.conditions["decrease"].active > 1000);
}

#[test]
fn small_gain_rejects_strong_coupling() {
    let c1 = block(lin(1.0), lin(2.0), sq(16.0));
    let c2 = block(lin(1.0), lin(0.6), sq(16.0));
    assert!(small_gain_compose(&c1, &c2, 100.0).is_err());
}

#[test]
fn closed_loop_simulations_converge() {
    let plant = fixture_plant();
    let sys = build_closed_loop(&plant, &fixture_design()).unwrap();
    let n = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut x0 = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        while x0.norm() > 1.0 {
            x0 = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        }
        let tr = simulate(&sys, &x0, &InputSignal::zero(0), 20.0, SimOptions::default()).unwrap();
        assert!(tr.complete, "{:?}", tr.warnings);
        let xf = tr.final_state();
        let h = n / 2;
        worst = worst.max(xf.rows(0, h).norm() + xf.rows(h, h).norm());
    }
    assert!(worst <= 1e-3, "worst terminal |x|+|e| = {worst:e}");
}

#[test]
fn sign_system_slides_to_origin() {
    let sys = nsiss_core::switched::sign_system();
    let tr = simulate(&sys, &dvector![1.0], &InputSignal::zero(sys.input_dim()), 2.0, SimOptions::default()).unwrap();
    assert!(tr.complete);
    for (t, x) in tr.times.iter().zip(&tr.states) {
        if *t >= 1.05 {
            assert!(x[0].abs() <= 1e-6, "x({t}) = {}", x[0]);
        }
    }
}
