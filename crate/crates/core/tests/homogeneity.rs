mod common;

use std::f64::consts::PI;

use common::{angle_deg, gamma_inside, half_space_grid, norm, planar, solved};
use fbound::energy::{energy, half_space};
use fbound::homogeneity::{
    extract_blowup, fit_half_space, homogeneity_deviation, homogeneous_replacement, phi_rescale, rescale,
};
use fbound::quadrature::{boundary_trace, unit_ball_volume};
use fbound::weiss::WeissParams;
use fbound::{BallFrame, Error, FieldSampler, FnField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn eval<S: FieldSampler + ?Sized>(u: &S, x: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; u.components()];
    u.eval(x, &mut v).unwrap();
    v
}

#[test]
fn rescaling_a_half_space_is_the_identity() {
    let hs = planar(2, 25.0);
    let u = half_space_grid(&hs, 1.0 / 64.0);
    for r in [0.3, 0.6, 1.0] {
        let s = rescale(&u, &[0.0, 0.0], r, Some(64)).unwrap();
        let worst = s
            .field
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut x = [0.0; 2];
                s.field.spec.node_point(i, &mut x);
                (v - eval(&hs, &x)[0]).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "r={r}: {worst}");
    }
}

#[test]
fn rescaling_with_unit_radius_regrids() {
    let f = FnField::new(2, 1, |x: &[f64], o: &mut [f64]| o[0] = (2.0 * x[0]).sin() * x[1]);
    let s = rescale(&f, &[0.0, 0.0], 1.0, Some(64)).unwrap();
    let mut x = [0.0; 2];
    for i in (0..s.field.node_count()).step_by(37) {
        s.field.spec.node_point(i, &mut x);
        assert!((s.field.value(i)[0] - eval(&f, &x)[0]).abs() < 1e-14);
    }
    let c = s.field.spec.linear_index(&[64, 64]);
    assert_eq!(s.field.value(c)[0], 0.0);
}

#[test]
fn rescaling_preserves_scaled_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let f = FnField::new(2, 2, |x: &[f64], o: &mut [f64]| {
        o[0] = x[0] * x[0] + 0.5 * (3.0 * x[1]).cos();
        o[1] = (x[0] - x[1]).max(0.0).powi(2);
    });
    for _ in 0..10 {
        let x0 = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        let r = rng.gen_range(0.1..0.45);
        let s = rescale(&f, &x0, r, Some(128)).unwrap();
        let lhs = energy(&s.field, &BallFrame::unit(2)).unwrap().total * r.powi(4);
        let rhs = energy(&f, &BallFrame::new(&x0, r)).unwrap().total;
        assert!((lhs / rhs - 1.0).abs() < 1e-3, "{lhs} vs {rhs}");
        // value at the origin
        let c = s.field.spec.linear_index(&[128, 128]);
        assert!((s.field.value(c)[0] - eval(&f, &x0)[0] / (r * r)).abs() < 1e-12);
    }
    assert!(rescale(&half_space_grid(&planar(2, 0.0), 1.0 / 32.0), &[0.8, 0.0], 0.3, None).is_err());
}

#[test]
fn replacement_of_a_half_space() {
    let hs = planar(3, 40.0);
    let c = homogeneous_replacement(&hs, &[0.0, 0.0, 0.0], 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!((eval(&c, &x)[0] - eval(&hs, &x)[0]).abs() < 1e-13);
    }
}

#[test]
fn replacement_is_two_homogeneous_and_matches_the_trace() {
    let u = solved(2, 1.0 / 64.0, 30.0);
    let x0 = [0.1, -0.2];
    let r = 0.3;
    let c = homogeneous_replacement(u, &x0, r).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..40 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let base = eval(&c, &x)[0];
        for lambda in [0.3, 0.7] {
            let y = [lambda * x[0], lambda * x[1]];
            assert!((eval(&c, &y)[0] - lambda * lambda * base).abs() <= 1e-14 * base.abs().max(1e-300));
        }
    }
    let tc = boundary_trace(&c, &BallFrame::unit(2), 256).unwrap();
    let view = rescale(u, &x0, r, None).unwrap();
    let tu = boundary_trace(&fbound::sampler::ScaledView::new(u, &x0, r, 1.0 / (r * r)), &BallFrame::unit(2), 256).unwrap();
    // equal up to the rounding of |ω| = 1 at the nodes
    let scale = (0..tu.len()).map(|q| tu.value(q)[0].abs()).fold(0.0, f64::max);
    for q in 0..tc.len() {
        assert!((tc.value(q)[0] - tu.value(q)[0]).abs() <= 1e-14 * scale);
    }
    // the regridded rescaling agrees with the view to interpolation accuracy
    let tv = boundary_trace(&view.field, &BallFrame::unit(2), 256).unwrap();
    for q in 0..tc.len() {
        assert!((tc.value(q)[0] - tv.value(q)[0]).abs() < 1e-3);
    }
}

#[test]
fn phi_examples() {
    let p = WeissParams::new(2, 1.0).unwrap();
    let r = 1e-3;
    assert!((p.phi(r) / (r * r) - (-12e-3f64).exp()).abs() < 1e-15);
    assert!((p.phi(r) / (r * r) - 0.98807).abs() < 1e-5);
    for alpha in [1.0, 0.5, 1.7] {
        let p = WeissParams::new(2, alpha).unwrap();
        for r in [0.1, 0.2] {
            let d = 1e-6;
            let fd = (p.phi(r + d) - p.phi(r - d)) / (2.0 * d);
            let ode = 2.0 * p.phi(r) * (1.0 - p.b * r.powf(alpha)) / r;
            assert!((fd - ode).abs() < 1e-8, "alpha={alpha} r={r}: {fd} vs {ode}");
        }
    }
    let hs = planar(2, 0.0);
    let v = phi_rescale(&hs, &[0.0, 0.0], 0.2, &p).unwrap();
    let x = [0.7, 0.1];
    let expect = 0.04 / p.phi(0.2) * eval(&hs, &x)[0];
    assert!((eval(&v, &x)[0] - expect).abs() < 1e-13);
}

#[test]
fn homogeneity_deviation_examples() {
    let hs = half_space(&[0.6, 0.8], &[1.0]).unwrap();
    assert!(homogeneity_deviation(&hs).unwrap() < 1e-20);
    let g = half_space_grid(&planar(2, 0.0), 1.0 / 64.0);
    assert!(homogeneity_deviation(&g).unwrap() < 1e-6);
    let linear = FnField::new(2, 1, |x: &[f64], o: &mut [f64]| o[0] = x[0]);
    assert!((homogeneity_deviation(&linear).unwrap() - PI / 4.0).abs() < 1e-6);
    let c = 0.7;
    let constant = FnField::new(3, 1, move |_: &[f64], o: &mut [f64]| o[0] = c);
    let expect = 4.0 * c * c * unit_ball_volume(3);
    assert!((homogeneity_deviation(&constant).unwrap() / expect - 1.0).abs() < 1e-6);
    // rotation invariance
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..5 {
        let th: f64 = rng.gen_range(0.0..2.0 * PI);
        let hs = half_space(&[th.cos(), th.sin()], &[th.sin(), -th.cos()]).unwrap();
        let g = fbound::make_field(&fbound::GridSpec::new(2, 2, 1.0 / 64.0, 1.0).unwrap(), &fbound::BoundaryMask::Faces, |x, o| hs.value_at(x, o)).unwrap();
        assert!(homogeneity_deviation(&g).unwrap() < 1e-6);
    }
}

#[test]
fn fit_recovers_half_spaces() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for n in [2usize, 3] {
        for _ in 0..3 {
            let nu: Vec<f64> = {
                let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let l = norm(&v);
                v.iter().map(|a| a / l).collect()
            };
            let th: f64 = rng.gen_range(0.0..2.0 * PI);
            let e = [th.cos(), th.sin()];
            let fit = fit_half_space(&half_space(&nu, &e).unwrap()).unwrap();
            assert!(fit.residual <= 1e-8, "{fit:?}");
            assert!(angle_deg(&fit.nu, &nu) < 1e-3);
            assert!(angle_deg(&fit.e, &e) < 1e-3);
        }
    }
}

/// `∮ (v - a max(cos(θ - φ), 0)^2 / 2)^2` minimized over `a = ±1`, by a
/// plain sweep over `φ` in steps of 0.05°.
fn brute_force_angle<F: Fn(f64) -> f64>(v: F) -> f64 {
    let k = 4096;
    let samples: Vec<(f64, f64)> = (0..k).map(|i| {
        let th = 2.0 * PI * i as f64 / k as f64;
        (th, v(th))
    }).collect();
    let mut best = (f64::INFINITY, 0.0);
    for j in 0..7200 {
        let phi = 2.0 * PI * j as f64 / 7200.0;
        for a in [1.0, -1.0] {
            let r: f64 = samples.iter().map(|(th, val)| (val - a * 0.5 * (th - phi).cos().max(0.0).powi(2)).powi(2)).sum();
            if r < best.0 {
                best = (r, phi);
            }
        }
    }
    best.1
}

#[test]
fn fit_is_stable_under_small_perturbations() {
    let phi0: f64 = 0.4;
    let profile = move |x: &[f64]| {
        let s = (x[0] * phi0.cos() + x[1] * phi0.sin()).max(0.0);
        0.5 * s * s + 0.01 * (x[0] * x[0] * x[1] + 0.5 * x[1].powi(3) - x[0])
    };
    let v = FnField::new(2, 1, move |x: &[f64], o: &mut [f64]| o[0] = profile(x));
    let fit = fit_half_space(&v).unwrap();
    assert!(fit.residual <= 0.02);
    let fitted = fit.nu[1].atan2(fit.nu[0]);
    assert!((fitted - phi0).abs().to_degrees() < 2.0);
    let oracle = brute_force_angle(|th| profile(&[th.cos(), th.sin()]));
    assert!((fitted - oracle).abs().to_degrees() < 0.1, "{fitted} vs {oracle}");
}

#[test]
fn fit_rejects_non_half_spaces() {
    let saddle = FnField::new(2, 2, |x: &[f64], o: &mut [f64]| {
        o[0] = x[0] * x[0] - x[1] * x[1];
        o[1] = 0.0;
    });
    let fit = fit_half_space(&saddle).unwrap();
    // oracle: best single-lobe fit of cos 2θ on the circle
    let k = 2048;
    let best = (0..720)
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / 720.0;
            (0..k)
                .map(|i| {
                    let th = 2.0 * PI * i as f64 / k as f64;
                    let p = 0.5 * (th - phi).cos().max(0.0).powi(2);
                    let v = (2.0 * th).cos();
                    [(v - p).powi(2), (v + p).powi(2)]
                })
                .fold([0.0, 0.0], |a, b| [a[0] + b[0], a[1] + b[1]])
                .iter()
                .fold(f64::INFINITY, |m: f64, &r| m.min(r))
                * 2.0
                * PI
                / k as f64
        })
        .fold(f64::INFINITY, f64::min);
    assert!(fit.residual > 0.5 * best && best > 1.0, "{} vs {best}", fit.residual);
    assert!((fit.residual - best).abs() < 1e-2 * best);
    let zero = FnField::new(2, 1, |_: &[f64], o: &mut [f64]| o[0] = 0.0);
    assert!(matches!(fit_half_space(&zero), Err(Error::DegenerateFit(_))));
}

#[test]
fn blowup_of_the_exact_half_space() {
    let p = WeissParams::new(2, 1.0).unwrap();
    let hs = planar(2, 0.0);
    let radii: Vec<f64> = (0..10).map(|k| 0.004 / 1.25f64.powi(k)).collect();
    let b = extract_blowup(&hs, &[0.0, 0.0], &radii, &p).unwrap();
    // ∮|h| on the unit circle is π/4
    for (d, w) in b.deviations.iter().zip(radii.windows(2)) {
        let expect = ((w[0] * w[0] / p.phi(w[0])) - (w[1] * w[1] / p.phi(w[1]))).abs() * PI / 4.0;
        assert!((d - expect).abs() < 1e-9, "{d} vs {expect}");
        assert!(*d <= 1e-2);
    }
    assert!(b.convergent);
    assert!(b.fit.residual < 1e-8);
    let json: serde_json::Value = serde_json::from_str(&b.to_json()).unwrap();
    for key in ["radii", "deviations", "nu_angles", "e", "residual"] {
        assert!(json.get(key).is_some());
    }
}

#[test]
fn blowup_of_a_minimizer_recovers_the_data() {
    let p = WeissParams::new(2, 1.0).unwrap();
    let u = solved(2, 1.0 / 64.0, 30.0);
    let hs = planar(2, 30.0);
    let pts = gamma_inside(u, 0.5);
    let radii = [0.2, 0.16, 0.128, 0.1024, 0.08192, 0.065536];
    for x0 in common::spread(&pts, 3) {
        let b = extract_blowup(u, &x0, &radii, &p).unwrap();
        assert!(angle_deg(&b.fit.nu, &hs.nu) < 5.0);
        assert!((b.fit.e[0] - 1.0).abs() < 0.05);
    }
    assert!(matches!(extract_blowup(u, &[0.5, 0.0], &radii, &p), Err(Error::NotFreeBoundary(_))));
    assert!(extract_blowup(u, &pts[0], &[0.1, 0.2], &p).is_err());
}
