//! Acceptance criteria at full resolution. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::{gamma, gamma_inside, half_space_data, half_space_grid, norm, planar, solved, spread};
use fbound::energy::{energy, half_space, prox_shrink};
use fbound::freeboundary::{graph_fit, growth_report};
use fbound::homogeneity::{homogeneity_deviation, homogeneous_replacement, rescale};
use fbound::quadrature::ball_integral;
use fbound::solver::{minimize, solve_drift, DriftSpec, SolveOptions};
use fbound::verify::{epiperimetric_sweep, epiperimetric_test, random_frames, rotation_check, weiss_decay_fit};
use fbound::verify::{almost_min_verify, Perturbation};
use fbound::weiss::{beta_half, classify_point, geometric_ladder, weiss_scan, Ladder, WeissParams};
use fbound::{BallFrame, FieldSampler, FnField, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1.0 / 128.0;
const DEG: f64 = 30.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_diff(a: &VectorField, b: &VectorField) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn params() -> WeissParams {
    WeissParams::new(2, 1.0).unwrap()
}

/// Ten free-boundary points of the 30° solve, spread along `Γ ∩ B_{1/2}`.
fn ten_points() -> Vec<Vec<f64>> {
    spread(&gamma_inside(solved(2, H, DEG), 0.5), 10)
}

fn criterion_1() -> Outcome {
    let hs = planar(2, DEG);
    let coarse = max_diff(solved(2, 2.0 * H, DEG), &half_space_grid(&hs, 2.0 * H));
    let u = solved(2, H, DEG);
    let err = max_diff(u, &half_space_grid(&hs, H));
    let e = energy(u, &BallFrame::unit(2)).unwrap().total;
    let rel = (e / (PI / 4.0) - 1.0).abs();
    let drop = coarse / err;
    outcome(
        err <= 5e-4 && rel <= 0.01 && drop >= 3.2,
        format!("max error {err:.2e} (h=1/128), {coarse:.2e} (h=1/64), drop {drop:.2}x; energy {e:.6} vs pi/4, rel {rel:.1e}"),
    )
}

/// Composite Simpson on `[a, b]` with `k` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, k: usize) -> f64 {
    let dx = (b - a) / k as f64;
    let mut s = f(a) + f(b);
    for i in 1..k {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * dx);
    }
    s * dx / 3.0
}

/// `∫_{B_1} 2 max(x_1,0)^2 - 2 ∮ (max(x_1,0)^2/2)^2` in polar / spherical
/// coordinates about the `x_1` axis.
fn beta_oracle(n: usize) -> f64 {
    let k = 2000;
    match n {
        2 => {
            let vol = 2.0 * simpson(|r| r.powi(3), 0.0, 1.0, k) * simpson(|t| t.cos().powi(2), -PI / 2.0, PI / 2.0, k);
            let surf = simpson(|t| t.cos().powi(4) / 4.0, -PI / 2.0, PI / 2.0, k);
            vol - 2.0 * surf
        }
        _ => {
            let cap = |p: i32| 2.0 * PI * simpson(|t| t.cos().powi(p) * t.sin(), 0.0, PI / 2.0, k);
            let vol = 2.0 * simpson(|r| r.powi(4), 0.0, 1.0, k) * cap(2);
            vol - 2.0 * cap(4) / 4.0
        }
    }
}

fn criterion_2() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, exact) in [(2, PI / 16.0), (3, PI / 15.0)] {
        let got = beta_half(n, 48).unwrap();
        let oracle = beta_oracle(n);
        let rel = (got / exact - 1.0).abs().max((got / oracle - 1.0).abs());
        pass &= rel <= 1e-6;
        parts.push(format!("n={n}: {got:.10} (oracle {oracle:.10}, rel {rel:.1e})"));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_3() -> Outcome {
    let u = solved(2, H, DEG);
    let p = params();
    let l = Ladder::default();
    let mut violations = 0;
    let mut close = 0;
    let mut worst: f64 = 0.0;
    let pts = ten_points();
    for x0 in &pts {
        let r = weiss_scan(u, x0, l.t_min, l.t_max, &p, l.ratio, None).unwrap();
        violations += r.violations.len();
        let d = (r.w0_estimate - PI / 16.0).abs();
        worst = worst.max(d);
        close += (d <= 2e-3) as usize;
    }
    outcome(
        violations == 0 && close * 10 >= 9 * pts.len(),
        format!("{violations} monotonicity violations; W0 within 2e-3 of pi/16 at {close}/{} points (worst {worst:.1e})", pts.len()),
    )
}

fn criterion_4() -> Outcome {
    let p = params();
    let l = Ladder::default();
    let mut counts = [0usize; 3];
    let mut total = 0;
    let mut truncated = 0;
    for deg in [0.0, DEG] {
        let u = solved(2, H, deg);
        for q in gamma(u) {
            let x0 = &q.location;
            truncated += x0.iter().any(|c| c.abs() + l.t_max > 1.0) as usize;
            let c = classify_point(u, x0, &p, 1.15, &l).unwrap();
            counts[c.verdict as usize] += 1;
            total += 1;
        }
    }
    let [regular, nonregular, indeterminate] = counts;
    outcome(
        regular * 10 >= 9 * total && nonregular == 0,
        format!("{total} points on the 0 and 30 degree solves: {regular} Regular, {nonregular} NonRegular, {indeterminate} Indeterminate; {truncated} of them on a ladder truncated by the domain"),
    )
}

fn criterion_5() -> Outcome {
    let u = solved(2, H, DEG);
    let radii = geometric_ladder(0.05, 0.4, 1.25).unwrap();
    let (mut smin, mut smax, mut emin, mut emax) = (f64::INFINITY, 0.0f64, f64::INFINITY, 0.0f64);
    for x0 in ten_points() {
        let g = growth_report(u, &x0, &radii).unwrap();
        for (s, e) in g.sup_ratio.iter().zip(&g.energy_ratio) {
            (smin, smax) = (smin.min(*s), smax.max(*s));
            (emin, emax) = (emin.min(*e), emax.max(*e));
        }
    }
    let q = PI / 4.0;
    outcome(
        smin >= 0.3 && smax <= 0.7 && emin >= 0.5 * q && emax <= 1.5 * q,
        format!("sup|u|/r^2 in [{smin:.4}, {smax:.4}]; E/r^4 in [{emin:.4}, {emax:.4}] (pi/4 = {q:.4})"),
    )
}

fn criterion_6() -> Outcome {
    let opts = SolveOptions::default();
    let fam = Perturbation::family(&[0.05]);
    let reports = epiperimetric_sweep(&[1.0, 0.0], &[1.0], &fam, H, &opts).unwrap();
    let live: Vec<_> = reports.iter().filter(|r| !r.degenerate).collect();
    let kmin = live.iter().filter_map(|r| r.kappa_hat).fold(f64::INFINITY, f64::min);
    let improves = reports.iter().all(|r| r.m_v <= r.m_c + 1e-8);
    let exact = epiperimetric_test(&planar(2, 0.0), H, &opts).unwrap();
    let gap = (exact.m_v - exact.m_c).abs();
    let equality = exact.degenerate && gap <= 10.0 * opts.tol * (1.0 + exact.m_c.abs());
    outcome(
        !live.is_empty() && kmin >= 0.02 && improves && equality,
        format!(
            "min kappa_hat {kmin:.3} over {} non-degenerate of {} perturbations ({} degenerate); M(v) <= M(c): {improves}; exact half-space degenerate with |M(v)-M(c)| = {gap:.1e}",
            live.len(),
            reports.len(),
            reports.len() - live.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let init = half_space_data(&planar(2, 0.0), H);
    let drift = DriftSpec::constant(&init.spec, &[0.5, 0.0], 4.0).unwrap();
    let opts = SolveOptions::default();
    let u = solve_drift(&init, &drift, &opts).unwrap().solution.field;
    let centers = gamma_inside(&u, 0.6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // the smallest radius is raised to the 4h resolution floor
    let r_min = 0.03f64.max(4.0 * H);
    let frames = random_frames(&mut rng, &centers, 0.0, r_min, 0.3, 0.95, 30).unwrap();
    let fit = almost_min_verify(&u, &frames, &opts).unwrap();
    let max_ratio = fit.samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    let beta = fit.beta.unwrap_or(f64::NAN);
    outcome(
        max_ratio <= 1.1 && (0.3..=0.7).contains(&beta),
        format!(
            "max ratio {max_ratio:.5}; fitted exponent {beta:.3} over {} frames, r in [{r_min:.4}, 0.3] (predicted {:.2})",
            fit.fitted_frames,
            drift.predicted_exponent(2)
        ),
    )
}

fn criterion_8() -> Outcome {
    let u = solved(2, H, DEG);
    let p = params();
    let ladder = Ladder::default();
    let radii: Vec<f64> = geometric_ladder(ladder.t_min, ladder.t_max, ladder.ratio).unwrap().into_iter().rev().collect();
    let mut ok = 0;
    let mut parts = Vec::new();
    let pts: Vec<Vec<f64>> = ten_points().into_iter().step_by(2).collect();
    for x0 in &pts {
        let d = weiss_decay_fit(u, x0, &p, &ladder).unwrap();
        let r = rotation_check(u, x0, &radii, &p, Some(d.delta)).unwrap();
        let good = d.delta > 0.0 && r.exponent > 0.0 && r.consistent == Some(true);
        ok += good as usize;
        parts.push(format!("{:.2}/{:.2}", r.exponent, d.delta / 2.0));
    }
    outcome(
        ok == pts.len(),
        format!("{ok}/{} points consistent; rotation exponent / (delta/2): {}", pts.len(), parts.join(", ")),
    )
}

fn criterion_9() -> Outcome {
    let u = solved(2, H, DEG);
    let hs = planar(2, DEG);
    let pts = gamma_inside(u, 0.6);
    let base = pts.iter().min_by(|a, b| norm(a).total_cmp(&norm(b))).unwrap();
    let g = graph_fit(base, &hs.nu, &pts, 0.25, H).unwrap();
    let angle = g.angle_to(&hs.nu);
    outcome(
        angle < 3.0 && g.max_abs_g <= 2.0 * H,
        format!("normal error {angle:.3} deg; max |g| = {:.2e} (2h = {:.2e})", g.max_abs_g, 2.0 * H),
    )
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut failures = Vec::new();
    let mut rv = |k: usize, s: f64| -> Vec<f64> { (0..k).map(|_| rng.gen_range(-s..s)).collect() };

    let obj = |w: &[f64], v: &[f64], l: f64| {
        w.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 2.0 + 2.0 * l * norm(w)
    };
    let mut prox_ok = true;
    let mut nonexp_ok = true;
    for _ in 0..1000 {
        let (v, d, b) = (rv(3, 3.0), rv(3, 1.0), rv(3, 3.0));
        let l = rv(1, 1.0)[0].abs() * 2.0;
        let w = prox_shrink(&v, l);
        let moved: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + 1e-3 * b).collect();
        prox_ok &= obj(&w, &v, l) <= obj(&moved, &v, l) + 1e-12;
        let pb = prox_shrink(&b, l);
        let dp: Vec<f64> = w.iter().zip(&pb).map(|(x, y)| x - y).collect();
        let dv: Vec<f64> = v.iter().zip(&b).map(|(x, y)| x - y).collect();
        nonexp_ok &= norm(&dp) <= norm(&dv) * (1.0 + 1e-12);
    }
    if !prox_ok {
        failures.push("prox optimality");
    }
    if !nonexp_ok {
        failures.push("prox nonexpansiveness");
    }

    let zero = FnField::new(2, 1, |_: &[f64], o: &mut [f64]| o[0] = 0.0);
    let mut quad = 0.0f64;
    for _ in 0..10 {
        let (c, x0) = (rv(3, 1.0), rv(2, 0.4));
        let r = 0.05 + rv(1, 0.2)[0].abs();
        let got = ball_integral(&zero, &BallFrame::new(&x0, r), |x, _, _| c[0] + c[1] * x[0] + c[2] * x[1]).unwrap();
        quad = quad.max((got - PI * r * r * (c[0] + c[1] * x0[0] + c[2] * x0[1])).abs());
    }
    if quad > 1e-8 {
        failures.push("quadrature exactness");
    }

    let f = FnField::new(2, 1, |x: &[f64], o: &mut [f64]| o[0] = (1.3 * x[0]).cos() * x[1] + x[0] * x[0]);
    let mut resc: f64 = 0.0;
    let mut trace: f64 = 0.0;
    for _ in 0..3 {
        let x0 = rv(2, 0.2);
        let r = 0.2 + rv(1, 0.2)[0].abs();
        let s = rescale(&f, &x0, r, Some(64)).unwrap();
        let e1 = energy(&s.field, &BallFrame::unit(2)).unwrap().total;
        let er = energy(&f, &BallFrame::new(&x0, r)).unwrap().total;
        resc = resc.max((e1 * r.powi(4) / er - 1.0).abs());
        let c = homogeneous_replacement(&f, &x0, r).unwrap();
        for _ in 0..20 {
            let th = rv(1, PI)[0];
            let (mut cv, mut fv) = ([0.0], [0.0]);
            c.eval(&[th.cos(), th.sin()], &mut cv).unwrap();
            f.eval(&[x0[0] + r * th.cos(), x0[1] + r * th.sin()], &mut fv).unwrap();
            trace = trace.max((cv[0] - fv[0] / (r * r)).abs());
        }
    }
    if resc > 1e-3 {
        failures.push("rescaling energy identity");
    }
    if trace > 1e-12 {
        failures.push("replacement trace identity");
    }

    let dev = homogeneity_deviation(&half_space(&[0.6, 0.8], &[1.0]).unwrap()).unwrap();
    if dev > 1e-3 {
        failures.push("homogeneity deviation");
    }

    // a small solve exercising the whole minimizer path
    let small = minimize(&half_space_data(&planar(2, DEG), 1.0 / 16.0), &SolveOptions::default());
    if small.is_err() {
        failures.push("small solve");
    }

    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && secs <= 60.0,
        format!(
            "prox, quadrature ({quad:.1e}), rescaling ({resc:.1e}), trace ({trace:.1e}), homogeneity ({dev:.1e}) in {secs:.1}s{}",
            if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }
        ),
    )
}

fn main() {
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, run) in criteria {
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("[criterion {k}] {verdict}: {} ({:.1}s)", o.detail, start.elapsed().as_secs_f64());
        failed += !o.pass as usize;
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
