use std::time::Instant;

use nalgebra::dvector;
use nsiss_core::certify::{check_main_iss, check_switched_iss, SamplePlan, SwitchedVariant};
use nsiss_core::linmat::flower_instance;
use nsiss_core::nonsmooth::lie_interval_raw;
use nsiss_core::partition::BoxBounds;
use nsiss_core::switched::{simulate, InputSignal, SimOptions};
use nsiss_core::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn plan(n: usize) -> SamplePlan {
    SamplePlan {
        state_box: BoxBounds::symmetric(2, 5.0),
        n_state: n,
        input_radius: 1.0,
        n_input: 1,
        surface_pairs: vec![(0, 1)],
        n_surface: n,
        seed: 2024,
    }
}

#[test]
fn aligned_certificate_passes() {
    let f = flower_instance(1.0, 5.0, 0.1, &Matrix::identity(2, 2)).unwrap();
    let t0 = Instant::now();
    let rep = check_switched_iss(&f.system, &f.certificate, &plan(10_000), SwitchedVariant::Aligned).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(rep.pass, "{:#?}", rep.conditions);
    let surf = &rep.conditions["c_surface"];
    assert!(surf.active > 0);
    assert_eq!(surf.empty_lie, surf.active, "every premise-active surface sample has an empty Lie set");
    assert!(rep.conditions["b_interior"].active > 1000);
    assert!(elapsed < 10.0, "took {elapsed}s");
    // the generic (Lie) check agrees
    assert!(check_main_iss(&f.system, &f.certificate, &plan(2000)).unwrap().pass);
}

#[test]
fn clarke_variant_fails_where_lie_is_empty() {
    let f = flower_instance(1.0, 5.0, 0.1, &Matrix::identity(2, 2)).unwrap();
    let z = dvector![1.0, 1.0];
    let hull = f.system.hull_vertices(&z, &dvector![0.0, 0.0], 1e-9).unwrap();
    let c = f.certificate.v.clarke_interval(&hull, 1e-9).unwrap();
    assert!((c.max() - 46.8).abs() < 1e-9 && (c.min() + 49.2).abs() < 1e-9);
    assert!(f.certificate.v.lie_interval(&hull, 1e-9).unwrap().is_empty());
    let rep = check_switched_iss(&f.system, &f.certificate, &plan(2000), SwitchedVariant::Clarke).unwrap();
    assert!(!rep.pass);
    assert!(rep.conditions["c_surface"].failures > 0);
}

#[test]
fn surface_lie_empty_beyond_threshold() {
    let f = flower_instance(1.0, 5.0, 0.1, &Matrix::identity(2, 2)).unwrap();
    let pts = f.system.partition().surface_sample(0, 1, 1000, &BoxBounds::symmetric(2, 5.0), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut beyond = 0;
    for z in pts {
        // adversarial inputs: aligned with the surface normal direction
        let dir = dvector![1.0, -1.0] / 2f64.sqrt() * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let u: Vector = dir * rng.gen_range(0.0..20.0);
        let hull = f.system.hull_vertices(&z, &u, 1e-8).unwrap();
        let g = f.certificate.v.gradient_hull(&z, 1e-8).unwrap();
        let lie = lie_interval_raw(&g.vertices, &hull.vertices).unwrap();
        if z.norm() > f.threshold_slope * u.norm() {
            beyond += 1;
            assert!(lie.is_empty(), "z = {z}, u = {u}: {lie:?}");
        }
    }
    assert!(beyond > 100);
}

#[test]
fn threshold_is_tight() {
    // on the diagonal both modes have normal component −6r, so the input
    // u = 3r(−1, 1) with |z| = |u|/3 makes the Lie set nonempty
    let f = flower_instance(1.0, 5.0, 0.1, &Matrix::identity(2, 2)).unwrap();
    let z: Vector = dvector![1.0, 1.0];
    let u: Vector = dvector![-3.0, 3.0];
    assert!((z.norm() - f.threshold_slope * u.norm()).abs() < 1e-12);
    let hull = f.system.hull_vertices(&z, &u, 1e-9).unwrap();
    assert!(!f.certificate.v.lie_interval(&hull, 1e-9).unwrap().is_empty());
    let hull = f.system.hull_vertices(&z, &(u * 0.99), 1e-9).unwrap();
    assert!(f.certificate.v.lie_interval(&hull, 1e-9).unwrap().is_empty());
}

#[test]
fn unperturbed_trajectories_converge() {
    let f = flower_instance(1.0, 5.0, 0.1, &Matrix::identity(2, 2)).unwrap();
    let tr = simulate(&f.system, &dvector![1.0, 0.3], &InputSignal::zero(2), 100.0, SimOptions::default()).unwrap();
    assert!(tr.complete);
    assert!(tr.final_state().norm() < 1e-3);
}
