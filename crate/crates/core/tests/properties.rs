use nalgebra::DMatrix;
use nsiss_core::kfun::{compose_chain, integral_transform, pointwise_extremum, ComparisonFn, Extremum};
use nsiss_core::linmat::{jacobi_eigenvalues, lmi_residual, spectral_norm, SymMatrix};
use nsiss_core::nonsmooth::{clarke_interval_raw, lie_interval_lp, lie_interval_raw, DerivativeInterval};
use nsiss_core::Vector;
use proptest::prelude::*;

fn vecs(n: usize, k: usize) -> impl Strategy<Value = Vec<Vector>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, n), k).prop_map(|vs| vs.into_iter().map(Vector::from_vec).collect())
}

/// n gradients against n hull vertices in dimension n ∈ {2, 3}.
fn instance() -> impl Strategy<Value = (Vec<Vector>, Vec<Vector>)> {
    (2usize..=3).prop_flat_map(|n| (vecs(n, n), vecs(n, n)))
}

fn kfun() -> impl Strategy<Value = ComparisonFn> {
    prop_oneof![
        (0.1..10.0f64).prop_map(|c| ComparisonFn::linear(c).unwrap()),
        (0.1..10.0f64, 0.5..3.0f64).prop_map(|(c, p)| ComparisonFn::power(c, p).unwrap()),
        prop::collection::vec(0.05..2.0f64, 2..6).prop_map(|slopes| {
            let mut knots = vec![[0.0, 0.0]];
            let (mut s, mut v) = (0.0, 0.0);
            for m in slopes {
                s += 1.0;
                v += m;
                knots.push([s, v]);
            }
            ComparisonFn::piecewise_linear(knots).unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn lie_within_clarke((g, f) in instance()) {
        let lie = lie_interval_raw(&g, &f).unwrap();
        let clarke = clarke_interval_raw(&g, &f).unwrap();
        if let DerivativeInterval::Interval { lo, hi } = lie {
            prop_assert!(lo >= clarke.min() - 1e-9 && hi <= clarke.max() + 1e-9, "lie {lie:?} clarke {clarke:?}");
            prop_assert!(lo <= hi + 1e-12);
        }
    }

    #[test]
    fn enumeration_matches_lp((g, f) in instance()) {
        let a = lie_interval_raw(&g, &f).unwrap();
        let b = lie_interval_lp(&g, &f).unwrap();
        match (a, b) {
            (DerivativeInterval::Empty, DerivativeInterval::Empty) => {}
            (DerivativeInterval::Interval { lo: l1, hi: h1 }, DerivativeInterval::Interval { lo: l2, hi: h2 }) => {
                let scale = 1.0 + l1.abs().max(h1.abs());
                prop_assert!((l1 - l2).abs() <= 1e-6 * scale && (h1 - h2).abs() <= 1e-6 * scale, "{a:?} vs {b:?}");
            }
            // borderline feasibility may differ between the two routes only
            // when the set is (numerically) a single point
            (DerivativeInterval::Interval { lo, hi }, DerivativeInterval::Empty)
            | (DerivativeInterval::Empty, DerivativeInterval::Interval { lo, hi }) => {
                prop_assert!((hi - lo).abs() <= 1e-6 * (1.0 + lo.abs()), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn single_gradient_lie_is_clarke((g, f) in (1usize..=3).prop_flat_map(|n| (vecs(n, 1), vecs(n, 3)))) {
        prop_assert_eq!(lie_interval_raw(&g, &f).unwrap(), clarke_interval_raw(&g, &f).unwrap());
    }

    #[test]
    fn invert_is_right_inverse(f in kfun(), s in 1e-3..50.0f64) {
        let y = f.eval(s);
        let back = f.invert(y, 1.0).unwrap();
        prop_assert!((f.eval(back) - y).abs() <= 1e-9 * (1.0 + y), "s = {s}, back = {back}");
        let inv = f.clone().inverse().unwrap();
        prop_assert!((inv.eval(y) - s).abs() <= 1e-6 * (1.0 + s));
    }

    #[test]
    fn integral_transform_differentiates_back(f in kfun(), s in 0.05..20.0f64) {
        let ell = integral_transform(&f).unwrap();
        let h = 1e-4 * s;
        let fd = (ell.eval(s + h) - ell.eval(s - h)) / (2.0 * h);
        prop_assert!((fd - f.eval(s)).abs() <= 1e-4 * (1.0 + f.eval(s)), "fd {fd} vs {}", f.eval(s));
        prop_assert_eq!(ell.eval(0.0), 0.0);
    }

    #[test]
    fn composition_and_extremum_are_monotone(f in kfun(), g in kfun(), a in 0.0..20.0f64, d in 1e-6..5.0f64) {
        let c = compose_chain(&f, &g).unwrap();
        let lo = pointwise_extremum(Extremum::Min, &f, &g).unwrap();
        let hi = pointwise_extremum(Extremum::Max, &f, &g).unwrap();
        for h in [&c, &lo, &hi] {
            prop_assert!(h.eval(a + d) >= h.eval(a));
        }
        prop_assert!(lo.eval(a) <= hi.eval(a));
        prop_assert!((c.eval(a) - f.eval(g.eval(a))).abs() <= 1e-12 * (1.0 + c.eval(a)));
    }

    #[test]
    fn jacobi_matches_characteristic_roots_2x2(a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64) {
        let m = DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
        let (tr, det) = (a + c, a * c - b * b);
        let disc = ((a - c).powi(2) + 4.0 * b * b).sqrt();
        let roots = [(tr - disc) / 2.0, (tr + disc) / 2.0];
        let ev = jacobi_eigenvalues(&m);
        prop_assert!((ev[0] - roots[0]).abs() < 1e-10 && (ev[1] - roots[1]).abs() < 1e-10, "{ev:?} vs {roots:?}, det {det}");
        prop_assert!((lmi_residual(&SymMatrix::new(m).unwrap()) - roots[1]).abs() < 1e-10);
    }

    #[test]
    fn jacobi_matches_characteristic_roots_3x3(e in prop::collection::vec(-3.0..3.0f64, 6)) {
        let m = DMatrix::from_row_slice(3, 3, &[e[0], e[1], e[2], e[1], e[3], e[4], e[2], e[4], e[5]]);
        // trigonometric solution of the characteristic cubic
        let q = m.trace() / 3.0;
        let p1 = e[1] * e[1] + e[2] * e[2] + e[4] * e[4];
        let p2 = (e[0] - q).powi(2) + (e[3] - q).powi(2) + (e[5] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let roots = if p < 1e-14 {
            [q; 3]
        } else {
            let bm = (&m - DMatrix::identity(3, 3) * q) / p;
            let r = (bm.determinant() / 2.0).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            let hi = q + 2.0 * p * phi.cos();
            let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
            [lo, 3.0 * q - hi - lo, hi]
        };
        let ev = jacobi_eigenvalues(&m);
        for k in 0..3 {
            prop_assert!((ev[k] - roots[k]).abs() < 1e-10, "{ev:?} vs {roots:?}");
        }
    }

    #[test]
    fn spectral_norm_matches_eigenvalues(e in prop::collection::vec(-3.0..3.0f64, 6)) {
        let m = DMatrix::from_row_slice(2, 3, &e);
        let ev = jacobi_eigenvalues(&(m.transpose() * &m));
        let expected = ev[2].max(0.0).sqrt();
        prop_assert!((spectral_norm(&m) - expected).abs() <= 1e-8 * (1.0 + expected), "{} vs {expected}", spectral_norm(&m));
    }
}
