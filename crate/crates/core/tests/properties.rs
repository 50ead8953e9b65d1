mod common;

use std::f64::consts::PI;

use common::norm;
use fbound::energy::{boundary_adjusted_energy, energy, half_space, prox_shrink};
use fbound::homogeneity::{homogeneity_deviation, homogeneous_replacement, rescale};
use fbound::quadrature::{ball_integral, ball_integrals_with, unit_ball_volume, unit_sphere_rule};
use fbound::solver::{discrete_energy, minimize, SolveOptions};
use fbound::{BallFrame, FieldSampler, FnField};
use proptest::prelude::*;

fn objective(w: &[f64], v: &[f64], lambda: f64) -> f64 {
    let d: f64 = w.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
    d / 2.0 + 2.0 * lambda * norm(w)
}

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 3)
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let l = norm(v);
    (l > 1e-3).then(|| v.iter().map(|x| x / l).collect())
}

/// Random smooth Dirichlet data: zero inside `B_1`, a polynomial outside.
fn random_data(h: f64, coef: &[f64]) -> fbound::VectorField {
    let spec = fbound::GridSpec::new(2, 2, h, 1.0).unwrap();
    let (a, b, c, d) = (coef[0], coef[1], coef[2], coef[3]);
    fbound::make_field(&spec, &fbound::BoundaryMask::OutsideUnitBall, |x, o| {
        if norm(x) >= 1.0 {
            o[0] = a * x[0] * x[0] + b * x[1];
            o[1] = c * x[0] * x[1] + d;
        } else {
            o.fill(0.0);
        }
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prox_is_optimal(v in vec3(), lambda in 0.0..2.0f64, d in vec3(), s in 1e-6..1.0f64) {
        let w = prox_shrink(&v, lambda);
        let f = objective(&w, &v, lambda);
        let moved: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + s * b).collect();
        prop_assert!(f <= objective(&moved, &v, lambda) + 1e-12);
        prop_assert!(f <= objective(&vec![0.0; 3], &v, lambda) + 1e-12);
    }

    #[test]
    fn prox_is_nonexpansive(a in vec3(), b in vec3(), lambda in 0.0..2.0f64) {
        let (pa, pb) = (prox_shrink(&a, lambda), prox_shrink(&b, lambda));
        let dp: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        prop_assert!(norm(&dp) <= norm(&d) * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn sphere_rule_integrates_quadratics(n in 2usize..=3, nq in 4usize..40, c in prop::collection::vec(-1.0..1.0f64, 10)) {
        let nq = nq.max(6);
        let (dirs, w) = unit_sphere_rule(n, nq);
        // c0 + linear + diagonal quadratic + one cross term
        let area = if n == 2 { 2.0 * PI } else { 4.0 * PI };
        let diag: f64 = (0..n).map(|k| c[1 + n + k]).sum();
        let exact = area * (c[0] + diag / n as f64);
        let mut got = 0.0;
        for (q, wq) in w.iter().enumerate() {
            let x = &dirs[q * n..(q + 1) * n];
            let mut f = c[0] + c[9] * x[0] * x[1];
            for k in 0..n {
                f += c[1 + k] * x[k] + c[1 + n + k] * x[k] * x[k];
            }
            got += wq * f;
        }
        prop_assert!((got - exact).abs() < 1e-10, "{got} vs {exact}");
    }

    #[test]
    fn ball_rule_integrates_polynomials(
        cx in -0.4..0.4f64, cy in -0.4..0.4f64, r in 0.05..0.5f64,
        c in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let zero = FnField::new(2, 1, |_: &[f64], o: &mut [f64]| o[0] = 0.0);
        let frame = BallFrame::new(&[cx, cy], r);
        // affine plus |x - x0|^2
        let got = ball_integral(&zero, &frame, |x, _, _| {
            let (dx, dy) = (x[0] - cx, x[1] - cy);
            c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * (dx * dx + dy * dy)
        }).unwrap();
        let exact = PI * r * r * (c[0] + c[1] * cx + c[2] * cy) + c[3] * PI * r.powi(4) / 2.0;
        prop_assert!((got - exact).abs() < 1e-8, "{got} vs {exact}");
    }

    #[test]
    fn ball_rule_integrates_affine_3d(
        x0 in prop::collection::vec(-0.3..0.3f64, 3), r in 0.05..0.5f64,
        c in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let zero = FnField::new(3, 1, |_: &[f64], o: &mut [f64]| o[0] = 0.0);
        let frame = BallFrame::new(&x0, r);
        let got = ball_integrals_with(&zero, &frame, r / 6.0, 1, |x, _, _, o| {
            o[0] = c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[2];
        }).unwrap()[0];
        let exact = unit_ball_volume(3) * r.powi(3) * (c[0] + c[1] * x0[0] + c[2] * x0[1] + c[3] * x0[2]);
        prop_assert!((got - exact).abs() < 1e-8, "{got} vs {exact}");
    }

    #[test]
    fn half_space_energy_is_rotation_invariant(nu in vec3(), e in vec3()) {
        let (Some(nu), Some(e)) = (unit(&nu[..2]), unit(&e)) else { return Ok(()) };
        let hs = half_space(&nu, &e).unwrap();
        prop_assert!((boundary_adjusted_energy(&hs).unwrap() - PI / 16.0).abs() < 1e-3);
        prop_assert!(homogeneity_deviation(&hs).unwrap() <= 1e-3);
    }

    #[test]
    fn replacement_matches_the_trace(
        cx in -0.3..0.3f64, cy in -0.3..0.3f64, r in 0.1..0.6f64, theta in 0.0..(2.0 * PI),
        k in 0.5..3.0f64,
    ) {
        let f = FnField::new(2, 1, move |x: &[f64], o: &mut [f64]| o[0] = (k * x[0]).sin() + x[1] * x[1]);
        let c = homogeneous_replacement(&f, &[cx, cy], r).unwrap();
        let w = [theta.cos(), theta.sin()];
        let (mut cv, mut fv) = ([0.0], [0.0]);
        c.eval(&w, &mut cv).unwrap();
        f.eval(&[cx + r * w[0], cy + r * w[1]], &mut fv).unwrap();
        prop_assert!((cv[0] - fv[0] / (r * r)).abs() <= 1e-12 * (1.0 + cv[0].abs()));
        // and it is 2-homogeneous off the sphere
        let s = 0.37;
        c.eval(&[s * w[0], s * w[1]], &mut fv).unwrap();
        prop_assert!((fv[0] - s * s * cv[0]).abs() <= 1e-12 * (1.0 + cv[0].abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rescaling_scales_energy(cx in -0.2..0.2f64, cy in -0.2..0.2f64, r in 0.2..0.6f64, k in 0.5..2.0f64) {
        let f = FnField::new(2, 1, move |x: &[f64], o: &mut [f64]| o[0] = (k * x[0]).cos() * x[1] + x[0] * x[0]);
        let s = rescale(&f, &[cx, cy], r, Some(64)).unwrap();
        let e1 = energy(&s.field, &BallFrame::unit(2)).unwrap().total;
        let er = energy(&f, &BallFrame::new(&[cx, cy], r)).unwrap().total;
        prop_assert!((e1 * r.powi(4) / er - 1.0).abs() < 1e-3, "{} vs {}", e1 * r.powi(4), er);
    }

    #[test]
    fn solver_output_is_optimal_and_odd(
        coef in prop::collection::vec(-1.0..1.0f64, 4),
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let h = 1.0 / 8.0;
        let init = random_data(h, &coef);
        let opts = SolveOptions::default();
        let sol = minimize(&init, &opts).unwrap();
        prop_assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(sol.energy <= discrete_energy(&init) + 1e-12);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let j = discrete_energy(&sol.field);
        for _ in 0..10 {
            let mut w = sol.field.clone();
            let amp = 10f64.powi(-rng.gen_range(1..6));
            for i in w.free_nodes() {
                for v in w.value_mut(i) {
                    *v += amp * rng.gen_range(-1.0..1.0);
                }
            }
            prop_assert!(j <= discrete_energy(&w) + 1e-9 * (1.0 + j));
        }

        let mut neg = init.clone();
        neg.values.iter_mut().for_each(|v| *v = -*v);
        let sneg = minimize(&neg, &opts).unwrap();
        let drift = sneg.field.values.iter().zip(&sol.field.values).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        prop_assert!(drift < 1e-6, "{drift}");
    }
}
