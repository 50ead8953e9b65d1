//! Certification harnesses: almost-minimality gauges, the epiperimetric
//! test, and the Weiss decay and rotation fits.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::boundary_adjusted_energy;
use crate::error::{Error, Result};
use crate::grid::{make_field, norm, BallFrame, BoundaryMask, GridSpec, VectorField};
use crate::homogeneity::{fit_half_space, phi_deviations};
use crate::sampler::{dot, FieldSampler, FnField, HomogeneousExtension};
use crate::solver::{discrete_energy, local_energy, minimize, SolveOptions};
use crate::weiss::{beta_half, orthonormal_completion, weiss_scan, Ladder, WeissParams};

/// One sampled ball of an almost-minimality check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeSample {
    pub x0: Vec<f64>,
    pub r: f64,
    /// `J(u, B_r) / J(v, B_r)` with `v` the local minimizer.
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaugeVerdict {
    /// No frame separates from the competitor beyond solver noise.
    Minimizer,
    Fitted,
    /// Some frames separate, but too few (or all at one radius) to fit.
    Unidentifiable,
}

/// Fit of `ratio ≤ 1 + C r^β` over sampled frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeFit {
    pub samples: Vec<GaugeSample>,
    pub c: Option<f64>,
    pub beta: Option<f64>,
    /// Largest `ratio - 1`.
    pub worst_margin: f64,
    /// Smallest `ratio - 1`; never below `-10 tol` for a sound competitor.
    pub least_margin: f64,
    /// Frames with `ratio - 1 > 10 tol` that entered the fit.
    pub fitted_frames: usize,
    pub verdict: GaugeVerdict,
}

#[derive(Serialize)]
struct GaugeSummary {
    #[serde(rename = "C")]
    c: Option<f64>,
    beta: Option<f64>,
    worst_margin: f64,
    verdict: GaugeVerdict,
}

impl GaugeFit {
    /// `x0...,r,ratio`
    pub fn csv(&self) -> String {
        let n = self.samples.first().map_or(0, |s| s.x0.len());
        let mut cols: Vec<String> = (1..=n).map(|k| format!("x0_{k}")).collect();
        cols.push("r".into());
        cols.push("ratio".into());
        let mut out = cols.join(",");
        out.push('\n');
        for s in &self.samples {
            let mut row: Vec<String> = s.x0.iter().map(|v| v.to_string()).collect();
            row.push(s.r.to_string());
            row.push(s.ratio.to_string());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&GaugeSummary {
            c: self.c,
            beta: self.beta,
            worst_margin: self.worst_margin,
            verdict: self.verdict,
        })
        .expect("serializable")
    }
}

/// `count` frames with log-uniform radii in `[r_min, r_max]`, centred
/// uniformly in `B_spread` around a randomly chosen entry of `centers`,
/// redrawn until the ball fits in `B_bound(0)`.
pub fn random_frames<R: Rng>(
    rng: &mut R,
    centers: &[Vec<f64>],
    spread: f64,
    r_min: f64,
    r_max: f64,
    bound: f64,
    count: usize,
) -> Result<Vec<BallFrame>> {
    if !(0.0 < r_min && r_min <= r_max && r_max < bound) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < r_min <= r_max < bound (got {r_min}, {r_max}, {bound})"
        )));
    }
    if centers.is_empty() {
        return Err(Error::InvalidParameter("no candidate centres".into()));
    }
    let n = centers[0].len();
    let mut frames = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while frames.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(Error::InvalidParameter("cannot place frames inside the bounding ball".into()));
        }
        let r = (r_min.ln() + rng.gen::<f64>() * (r_max.ln() - r_min.ln())).exp();
        let center = &centers[rng.gen_range(0..centers.len())];
        let x: Vec<f64> = loop {
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if norm(&d) <= 1.0 {
                break center.iter().zip(&d).map(|(c, v)| c + spread * v).collect();
            }
        };
        if norm(&x) + r <= bound {
            frames.push(BallFrame::new(&x, r));
        }
    }
    Ok(frames)
}

/// Minimizer of `J_h` in `B_r(x0)` with the values of `u` outside.
pub fn local_competitor(u: &VectorField, frame: &BallFrame, opts: &SolveOptions) -> Result<VectorField> {
    frame.check(u.spec.n, Some(u.spec.half_width), Some(u.spec.h))?;
    let local = u.clone().with_mask(&BoundaryMask::OutsideBall(frame.clone()));
    Ok(minimize(&local, opts)?.field)
}

/// Compares `u` on each frame with the local minimizer sharing its values
/// outside the ball, then fits `log(ratio - 1) = log C + β log r` over the
/// frames that separate from solver noise.
pub fn almost_min_verify(u: &VectorField, frames: &[BallFrame], opts: &SolveOptions) -> Result<GaugeFit> {
    if frames.is_empty() {
        return Err(Error::InvalidParameter("no frames to verify".into()));
    }
    let samples: Vec<GaugeSample> = frames
        .par_iter()
        .map(|f| {
            let v = local_competitor(u, f, opts)?;
            let ju = local_energy(u, f);
            let jv = local_energy(&v, f);
            let ratio = if jv > 0.0 {
                ju / jv
            } else if ju == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
            Ok(GaugeSample {
                x0: f.center.clone(),
                r: f.radius,
                ratio,
            })
        })
        .collect::<Result<_>>()?;
    let noise = 10.0 * opts.tol;
    let margins: Vec<f64> = samples.iter().map(|s| s.ratio - 1.0).collect();
    let worst_margin = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let least_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.ratio - 1.0 > noise && s.ratio.is_finite())
        .map(|s| (s.r.ln(), (s.ratio - 1.0).ln()))
        .collect();
    let (c, beta, verdict) = if pts.is_empty() {
        (None, None, GaugeVerdict::Minimizer)
    } else {
        match log_fit(&pts) {
            Some((lc, b)) => (Some(lc.exp()), Some(b), GaugeVerdict::Fitted),
            None => (None, None, GaugeVerdict::Unidentifiable),
        }
    };
    Ok(GaugeFit {
        fitted_frames: pts.len(),
        samples,
        c,
        beta,
        worst_margin,
        least_margin,
        verdict,
    })
}

/// Least-squares line through `(x, y)`: `(intercept, slope)`.
fn log_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-12 {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

/// Outcome of one epiperimetric comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpiReport {
    /// `sqrt(∮_{∂B_1} |c - h|^2)` for the best half-space `h`.
    pub dist_to_h: f64,
    pub m_c: f64,
    pub m_v: f64,
    /// `(M(c) - M(v)) / (M(c) - β_n/2)`, absent in the degenerate case.
    pub kappa_hat: Option<f64>,
    /// `M(c) ≤ β_n/2 + 1e-6`.
    pub degenerate: bool,
    pub beta_half: f64,
    /// Label of the generator, if any.
    pub label: Option<String>,
}

impl EpiReport {
    pub const CSV_HEADER: &'static str = "dist_to_H,M_c,M_v,kappa_hat";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.dist_to_h,
            self.m_c,
            self.m_v,
            self.kappa_hat.map_or_else(|| "NaN".to_string(), |k| k.to_string())
        )
    }
}

/// Builds the competitor `v` for a 2-homogeneous `c` by minimizing on `B_1`
/// with the trace of `c`, on a grid of spacing `h` over `[-1, 1]^n`.
///
/// `M(v)` is `M(c)` minus the discrete energy gain `J_h(c) - J_h(v)`: both
/// share the trace, so the boundary term cancels and the comparison does not
/// mix quadrature and grid errors.
pub fn epiperimetric_test<S: FieldSampler + ?Sized>(c: &S, h: f64, opts: &SolveOptions) -> Result<EpiReport> {
    let (n, m) = (c.dim(), c.components());
    let spec = GridSpec::new(n, m, h, 1.0)?;
    let mut err = None;
    let init = make_field(&spec, &BoundaryMask::OutsideUnitBall, |x, o| {
        if let Err(e) = c.eval(x, o) {
            err.get_or_insert(e);
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let init = init?;
    let m_c = boundary_adjusted_energy(c)?;
    let sol = minimize(&init, opts)?;
    let gain = (discrete_energy(&init) - sol.energy).max(0.0);
    let m_v = m_c - gain;
    let beta = beta_half(n, 48)?;
    let dist_to_h = match fit_half_space(c) {
        Ok(f) => f.residual.sqrt(),
        Err(Error::DegenerateFit(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let degenerate = m_c <= beta + 1e-6;
    Ok(EpiReport {
        dist_to_h,
        m_c,
        m_v,
        kappa_hat: (!degenerate).then(|| (m_c - m_v) / (m_c - beta)),
        degenerate,
        beta_half: beta,
        label: None,
    })
}

/// Boundary perturbations of a half-space profile on `∂B_1`. `Y_k` is
/// `Re((ω·ν + i ω·τ)^k)`, the trace of a harmonic polynomial of degree `k`
/// (`cos kθ` in the plane), with `τ` the first tangent of `ν`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    /// `g + a Y_k e`.
    Additive { mode: u32, amplitude: f64 },
    /// `ν` tilted toward `τ` by the angle `a Y_k(ω)`.
    NormalWobble { mode: u32, amplitude: f64 },
    /// `e` rotated by `a Y_k(ω)` toward a second unit direction; for scalar
    /// fields, where no rotation exists, `e` is scaled by `1 + a Y_k`.
    DirectionRotation { mode: u32, amplitude: f64 },
}

impl Perturbation {
    pub fn label(&self) -> String {
        match self {
            Perturbation::Additive { mode, amplitude } => format!("additive(k={mode},a={amplitude})"),
            Perturbation::NormalWobble { mode, amplitude } => format!("nu-wobble(k={mode},a={amplitude})"),
            Perturbation::DirectionRotation { mode, amplitude } => format!("e-rotation(k={mode},a={amplitude})"),
        }
    }

    /// The shipped family: modes 1..=3 of every kind at each amplitude.
    pub fn family(amplitudes: &[f64]) -> Vec<Perturbation> {
        let mut out = Vec::new();
        for &amplitude in amplitudes {
            for mode in 1..=3 {
                out.push(Perturbation::Additive { mode, amplitude });
                out.push(Perturbation::NormalWobble { mode, amplitude });
                out.push(Perturbation::DirectionRotation { mode, amplitude });
            }
        }
        out
    }
}

fn mode_value(k: u32, a: f64, b: f64) -> f64 {
    // Re((a + ib)^k)
    let (mut re, mut im) = (1.0, 0.0);
    for _ in 0..k {
        (re, im) = (re * a - im * b, re * b + im * a);
    }
    re
}

/// Profile on `∂B_1` of the perturbed half-space `(ν, e)`; extend it with
/// [`HomogeneousExtension`] to obtain `c`.
pub fn perturbed_profile(
    nu: &[f64],
    e: &[f64],
    pert: Perturbation,
) -> Result<FnField<impl Fn(&[f64], &mut [f64]) + Sync>> {
    let n = nu.len();
    let m = e.len();
    if (norm(nu) - 1.0).abs() > 1e-12 || (norm(e) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("nu and e must be unit vectors".into()));
    }
    let nu = nu.to_vec();
    let e = e.to_vec();
    let tau = orthonormal_completion(&nu)[1].clone();
    let e_perp = if m >= 2 { Some(orthonormal_completion(&e)[1].clone()) } else { None };
    Ok(FnField::new(n, m, move |x: &[f64], out: &mut [f64]| {
        let l = norm(x);
        let w: Vec<f64> = if l > 0.0 { x.iter().map(|v| v / l).collect() } else { x.to_vec() };
        let (a_nu, a_tau) = (dot(&w, &nu), dot(&w, &tau));
        let profile = |dir: &[f64]| {
            let s = dot(&w, dir).max(0.0);
            0.5 * s * s
        };
        match pert {
            Perturbation::Additive { mode, amplitude } => {
                let p = profile(&nu);
                let y = amplitude * mode_value(mode, a_nu, a_tau);
                for c in 0..m {
                    out[c] = (p + y) * e[c];
                }
            }
            Perturbation::NormalWobble { mode, amplitude } => {
                let t = amplitude * mode_value(mode, a_nu, a_tau);
                let dir: Vec<f64> = (0..n).map(|k| t.cos() * nu[k] + t.sin() * tau[k]).collect();
                let p = profile(&dir);
                for c in 0..m {
                    out[c] = p * e[c];
                }
            }
            Perturbation::DirectionRotation { mode, amplitude } => {
                let p = profile(&nu);
                let t = amplitude * mode_value(mode, a_nu, a_tau);
                match &e_perp {
                    Some(ep) => {
                        for c in 0..m {
                            out[c] = p * (t.cos() * e[c] + t.sin() * ep[c]);
                        }
                    }
                    None => {
                        for c in 0..m {
                            out[c] = p * (1.0 + t) * e[c];
                        }
                    }
                }
            }
        }
    }))
}

/// Runs [`epiperimetric_test`] on the homogeneous extension of every
/// perturbation, concurrently.
pub fn epiperimetric_sweep(
    nu: &[f64],
    e: &[f64],
    perturbations: &[Perturbation],
    h: f64,
    opts: &SolveOptions,
) -> Result<Vec<EpiReport>> {
    perturbations
        .par_iter()
        .map(|&p| {
            let c = HomogeneousExtension::new(perturbed_profile(nu, e, p)?);
            let mut r = epiperimetric_test(&c, h, opts)?;
            r.label = Some(p.label());
            Ok(r)
        })
        .collect()
}

/// `W(t) e^{-a t^α} - W0 ≈ C t^δ` at a regular point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c: f64,
    pub delta: f64,
    pub w0: f64,
    /// Samples `(t, W e^{-a t^α} - W0)` that entered the fit.
    pub samples: Vec<(f64, f64)>,
    /// Non-positive `δ`, or no decaying samples at all.
    pub decay_violation: bool,
}

/// Log-log fit of `y - w0 = C t^δ` over the samples with `y > w0`.
pub fn decay_fit_series(t: &[f64], y: &[f64], w0: f64) -> Result<DecayFit> {
    if t.len() != y.len() {
        return Err(Error::InvalidParameter("t and y differ in length".into()));
    }
    let samples: Vec<(f64, f64)> = t.iter().zip(y).map(|(&t, &y)| (t, y - w0)).filter(|s| s.1 > 0.0).collect();
    let pts: Vec<(f64, f64)> = samples.iter().map(|(t, d)| (t.ln(), d.ln())).collect();
    match log_fit(&pts) {
        Some((lc, delta)) => Ok(DecayFit {
            c: lc.exp(),
            delta,
            w0,
            samples,
            decay_violation: delta <= 0.0,
        }),
        None => Ok(DecayFit {
            c: f64::NAN,
            delta: f64::NAN,
            w0,
            samples,
            decay_violation: true,
        }),
    }
}

/// Scans `W` at `x0`, removes the exponential factor `e^{a t^α}` and fits the
/// decay toward the extrapolated `W(0+)`.
pub fn weiss_decay_fit<S: FieldSampler + ?Sized>(
    u: &S,
    x0: &[f64],
    params: &WeissParams,
    ladder: &Ladder,
) -> Result<DecayFit> {
    let report = weiss_scan(u, x0, ladder.t_min, ladder.t_max, params, ladder.ratio, None)?;
    if !report.w0_estimate.is_finite() {
        return Err(Error::DegenerateFit("W(0+) could not be extrapolated".into()));
    }
    let y: Vec<f64> = report
        .t
        .iter()
        .zip(&report.w)
        .map(|(t, w)| w * (-params.a * t.powf(params.alpha)).exp())
        .collect();
    decay_fit_series(&report.t, &y, report.w0_estimate)
}

/// `∮|u^φ_t - u^φ_s|` along a ladder and its power-law fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationFit {
    /// Descending radii.
    pub radii: Vec<f64>,
    pub deviations: Vec<f64>,
    pub c: f64,
    pub exponent: f64,
    /// Deviations never grow as the radius shrinks.
    pub monotone: bool,
    /// `exponent / (δ/2)` when a decay exponent was supplied.
    pub ratio_to_half_delta: Option<f64>,
    /// The ratio lies in `[1/2, 2]`.
    pub consistent: Option<bool>,
}

/// Fits `∮|u^φ_{t_i} - u^φ_{t_{i+1}}| ≈ C t_i^e` over a descending ladder;
/// repeated radii give zero deviations and are skipped. With `delta` from
/// [`weiss_decay_fit`] the exponent is compared with `δ/2`.
pub fn rotation_check<S: FieldSampler + ?Sized>(
    u: &S,
    x0: &[f64],
    radii: &[f64],
    params: &WeissParams,
    delta: Option<f64>,
) -> Result<RotationFit> {
    if radii.len() < 3 || radii.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("rotation ladder must be descending with at least three radii".into()));
    }
    let deviations = phi_deviations(u, x0, radii, params)?;
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(&deviations)
        .filter(|(_, d)| **d > 0.0)
        .map(|(t, d)| (t.ln(), d.ln()))
        .collect();
    let (lc, exponent) = log_fit(&pts).ok_or_else(|| Error::DegenerateFit("fewer than two distinct deviations".into()))?;
    let monotone = deviations
        .iter()
        .zip(radii)
        .filter(|(d, _)| **d > 0.0)
        .map(|(d, _)| *d)
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    let ratio = delta.map(|d| exponent / (0.5 * d));
    Ok(RotationFit {
        radii: radii.to_vec(),
        deviations,
        c: lc.exp(),
        exponent,
        monotone,
        ratio_to_half_delta: ratio,
        consistent: ratio.map(|r| (0.5..=2.0).contains(&r)),
    })
}
