//! The Weiss-type functional
//!
//! ```text
//! W(u, x0, t) = e^{a t^α} / t^{n+2} · [ E(u, B_t(x0)) - 2(1 - b t^α)/t · ∮_{∂B_t(x0)} |u|^2 ]
//! ```
//!
//! with `a = (n+2)/α`, `b = (n+4)/α`, its scan over a geometric ladder of
//! radii, the extrapolated limit `W(0+)`, the half-space reference value and
//! the regular/non-regular classification of free-boundary points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::energy::energy;
use crate::error::{Error, Result};
use crate::grid::{norm, BallFrame};
use crate::quadrature::{boundary_trace, gauss_legendre, trace_resolution};
use crate::sampler::{FieldSampler, HalfSpace};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeissParams {
    pub n: usize,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
}

impl WeissParams {
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} must lie in (0, 2)")));
        }
        if n != 2 && n != 3 {
            return Err(Error::InvalidParameter(format!("n = {n} must be 2 or 3")));
        }
        Ok(WeissParams {
            n,
            alpha,
            a: (n as f64 + 2.0) / alpha,
            b: (n as f64 + 4.0) / alpha,
        })
    }

    /// Radius below which the derivative lower bound is guaranteed: the first
    /// zero of the coefficient inequality in the monotonicity argument,
    /// which reduces to `4s + 2b s^2 (n + 2 - 2b) >= 0` with `s = t^α`.
    pub fn t0(&self) -> f64 {
        let s0 = 2.0 / (self.b * (2.0 * self.b - self.n as f64 - 2.0));
        s0.powf(1.0 / self.alpha)
    }

    /// `φ(r) = e^{-(2b/α) r^α} r^2`.
    pub fn phi(&self, r: f64) -> f64 {
        (-(2.0 * self.b / self.alpha) * r.powf(self.alpha)).exp() * r * r
    }
}

/// One evaluation of `W` with the ingredients it was built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeissSample {
    pub t: f64,
    pub w: f64,
    /// `E(u, B_t(x0))`.
    pub energy: f64,
    /// `∮_{∂B_t(x0)} |u|^2`.
    pub boundary: f64,
    /// `e^{a t^α}/t^{n+2} ∮ |∂_ν u - 2(1 - b t^α)/t u|^2`.
    pub lower_bound: f64,
}

impl WeissSample {
    /// `E/t^{n+2} - 2 ∮|u|^2 / t^{n+3}`, i.e. `M(u_{x0,t})`. It has the same
    /// limit as `W` at `0+` without the `e^{a t^α}` and `b t^α` factors.
    pub fn reduced(&self, n: usize) -> f64 {
        let t = self.t;
        self.energy / t.powi(n as i32 + 2) - 2.0 * self.boundary / t.powi(n as i32 + 3)
    }
}

pub fn weiss_sample<S: FieldSampler + ?Sized>(u: &S, x0: &[f64], t: f64, params: &WeissParams) -> Result<WeissSample> {
    let n = u.dim();
    let frame = BallFrame::new(x0, t);
    frame.check(n, u.half_width(), u.spacing())?;
    let e = energy(u, &frame)?.total;
    let trace = boundary_trace(u, &frame, trace_resolution(u, t))?;
    let ta = t.powf(params.alpha);
    let coef = 2.0 * (1.0 - params.b * ta) / t;
    let boundary = trace.square_integral();
    let defect = trace.integrate(|v, dv| v.iter().zip(dv).map(|(x, d)| (d - 0.5 * coef * x).powi(2)).sum());
    let pref = (params.a * ta).exp() / t.powi(n as i32 + 2);
    Ok(WeissSample {
        t,
        w: pref * (e - coef * boundary),
        energy: e,
        boundary,
        lower_bound: pref * defect,
    })
}

/// `W(u, x0, t)` with `x0`, `t` the centre and radius of `frame`.
pub fn weiss<S: FieldSampler + ?Sized>(u: &S, frame: &BallFrame, params: &WeissParams) -> Result<f64> {
    Ok(weiss_sample(u, &frame.center, frame.radius, params)?.w)
}

/// Geometric ladder from `t_min` to `t_max` with ratio at most `ratio`.
pub fn geometric_ladder(t_min: f64, t_max: f64, ratio: f64) -> Result<Vec<f64>> {
    if !(ratio > 1.0 && ratio <= 2.0) {
        return Err(Error::InvalidParameter(format!("ladder ratio {ratio} outside (1, 2]")));
    }
    if !(t_min > 0.0 && t_max > t_min) {
        return Err(Error::InvalidParameter(format!("ladder range [{t_min}, {t_max}] is empty")));
    }
    let steps = ((t_max / t_min).ln() / ratio.ln() - 1e-9).ceil().max(1.0) as usize;
    Ok((0..=steps)
        .map(|i| t_min * (t_max / t_min).powf(i as f64 / steps as f64))
        .collect())
}

/// Sampled monotonicity scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeissReport {
    pub x0: Vec<f64>,
    pub params: WeissParams,
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    /// `(W_{i+1} - W_i)/(t_{i+1} - t_i)`, one per ladder interval.
    pub slopes: Vec<f64>,
    pub lower_bound: Vec<f64>,
    /// Series extrapolated to `t = 0`; see [`WeissSample::reduced`].
    pub limit_series: Vec<f64>,
    pub tolerance_mono: f64,
    /// Intervals whose slope is below `-tolerance_mono`.
    pub violations: Vec<usize>,
    /// Intervals below `t0` whose slope undercuts the lower bound by more
    /// than `tolerance_mono`.
    pub lower_bound_violations: Vec<usize>,
    pub w0_estimate: f64,
    /// Infinite when the extrapolation failed.
    pub w0_error: f64,
    /// Grid spacing of the scanned field, if discrete.
    #[serde(default)]
    pub spacing: Option<f64>,
}

impl WeissReport {
    /// Report built from raw `(t, W)` data; the limit is fitted on `W`.
    pub fn synthetic(params: WeissParams, t: Vec<f64>, w: Vec<f64>) -> Self {
        let slopes = slopes(&t, &w);
        let mut r = WeissReport {
            x0: vec![0.0; params.n],
            params,
            lower_bound: vec![0.0; t.len()],
            limit_series: w.clone(),
            tolerance_mono: 0.0,
            violations: slopes
                .iter()
                .enumerate()
                .filter(|(_, s)| **s < 0.0)
                .map(|(i, _)| i)
                .collect(),
            lower_bound_violations: vec![],
            slopes,
            t,
            w,
            w0_estimate: f64::NAN,
            w0_error: f64::INFINITY,
            spacing: None,
        };
        if let Ok((w0, err)) = weiss_limit(&r) {
            r.w0_estimate = w0;
            r.w0_error = err;
        }
        r
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("t,W,slope,lower_bound\n");
        for i in 0..self.t.len() {
            let slope = self.slopes.get(i).copied().unwrap_or(f64::NAN);
            s.push_str(&format!("{},{},{},{}\n", self.t[i], self.w[i], slope, self.lower_bound[i]));
        }
        s
    }
}

fn slopes(t: &[f64], w: &[f64]) -> Vec<f64> {
    t.windows(2)
        .zip(w.windows(2))
        .map(|(t, w)| (w[1] - w[0]) / (t[1] - t[0]))
        .collect()
}

/// `5 h (1 + E(u, B_1))`, the allowed negative slope on grid fields.
pub fn default_tolerance_mono<S: FieldSampler + ?Sized>(u: &S) -> f64 {
    let Some(h) = u.spacing() else {
        return 1e-9;
    };
    let e1 = energy(u, &BallFrame::unit(u.dim())).map(|e| e.total).unwrap_or(0.0);
    5.0 * h * (1.0 + e1)
}

/// Scans `W(u, x0, ·)` over the geometric ladder in `[t_min, t_max]`,
/// dropping radii below `4h` or beyond the cube.
pub fn weiss_scan<S: FieldSampler + ?Sized>(
    u: &S,
    x0: &[f64],
    t_min: f64,
    t_max: f64,
    params: &WeissParams,
    ladder_ratio: f64,
    tolerance_mono: Option<f64>,
) -> Result<WeissReport> {
    let n = u.dim();
    let ladder = geometric_ladder(t_min, t_max, ladder_ratio)?;
    let floor = u.spacing().map_or(0.0, |h| 4.0 * h * (1.0 - 1e-12));
    let reach = u
        .half_width()
        .map_or(f64::INFINITY, |l| x0.iter().map(|c| l - c.abs()).fold(f64::INFINITY, f64::min));
    let ladder: Vec<f64> = ladder.into_iter().filter(|&t| t >= floor && t <= reach * (1.0 + 1e-12)).collect();
    if ladder.len() < 4 {
        return Err(Error::Resolution(format!(
            "only {} ladder radii in [{t_min}, {t_max}] are resolvable at x0 = {x0:?}",
            ladder.len()
        )));
    }
    let samples: Vec<WeissSample> = ladder
        .par_iter()
        .map(|&t| weiss_sample(u, x0, t, params))
        .collect::<Result<_>>()?;
    let tol = tolerance_mono.unwrap_or_else(|| default_tolerance_mono(u));
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let w: Vec<f64> = samples.iter().map(|s| s.w).collect();
    let slopes = slopes(&t, &w);
    let lower_bound: Vec<f64> = samples.iter().map(|s| s.lower_bound).collect();
    let t0 = params.t0();
    let violations = (0..slopes.len()).filter(|&i| slopes[i] < -tol).collect();
    let lower_bound_violations = (0..slopes.len())
        .filter(|&i| t[i + 1] < t0 && slopes[i] < lower_bound[i].min(lower_bound[i + 1]) - tol)
        .collect();
    let mut report = WeissReport {
        x0: x0.to_vec(),
        params: *params,
        limit_series: samples.iter().map(|s| s.reduced(n)).collect(),
        t,
        w,
        slopes,
        lower_bound,
        tolerance_mono: tol,
        violations,
        lower_bound_violations,
        w0_estimate: f64::NAN,
        w0_error: f64::INFINITY,
        spacing: u.spacing(),
    };
    if let Ok((w0, err)) = weiss_limit(&report) {
        report.w0_estimate = w0;
        report.w0_error = err;
    }
    Ok(report)
}

/// Least-squares fit `y ≈ w0 + c t^δ` with `δ ∈ (0, δ_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub w0: f64,
    pub c: f64,
    pub delta: f64,
    pub rms: f64,
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    (icpt, slope, rms)
}

/// Variable projection: for fixed δ the problem is linear in `(w0, c)`;
/// δ is located by a grid search refined with golden sections.
pub fn fit_power_law(t: &[f64], y: &[f64], delta_max: f64) -> Result<PowerFit> {
    if t.len() < 3 || t.len() != y.len() {
        return Err(Error::DegenerateFit(format!("{} samples", t.len())));
    }
    if y.iter().chain(t).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite samples".into()));
    }
    let eval = |delta: f64| {
        let x: Vec<f64> = t.iter().map(|v| v.powf(delta)).collect();
        let (w0, c, rms) = linear_fit(&x, y);
        PowerFit { w0, c, delta, rms }
    };
    let grid = 400;
    let mut best = eval(delta_max);
    let mut best_j = grid;
    for j in 1..grid {
        let f = eval(delta_max * j as f64 / grid as f64);
        if f.rms < best.rms {
            best = f;
            best_j = j;
        }
    }
    let step = delta_max / grid as f64;
    let (mut lo, mut hi) = ((best_j as f64 - 1.0) * step, ((best_j as f64 + 1.0) * step).min(delta_max));
    lo = lo.max(step * 1e-3);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    for _ in 0..80 {
        if f1.rms <= f2.rms {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = eval(x2);
        }
    }
    for f in [f1, f2] {
        if f.rms < best.rms {
            best = f;
        }
    }
    Ok(best)
}

/// Least squares over the given columns by modified Gram-Schmidt; returns
/// the coefficients and the residual sum of squares.
fn least_squares(cols: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let p = cols.len();
    let mut q: Vec<Vec<f64>> = cols.to_vec();
    let mut r = vec![vec![0.0; p]; p];
    for j in 0..p {
        for i in 0..j {
            let d: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = d;
            let qi = q[i].clone();
            for (v, w) in q[j].iter_mut().zip(&qi) {
                *v -= d * w;
            }
        }
        let l = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if l <= 1e-12 * scale || l == 0.0 {
            return None;
        }
        r[j][j] = l;
        q[j].iter_mut().for_each(|v| *v /= l);
    }
    let qty: Vec<f64> = q.iter().map(|col| col.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    let mut coef = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| r[i][j] * coef[j]).sum();
        coef[i] = (qty[i] - s) / r[i][i];
    }
    let rss = y
        .iter()
        .enumerate()
        .map(|(k, v)| (v - (0..p).map(|j| coef[j] * cols[j][k]).sum::<f64>()).powi(2))
        .sum();
    Some((coef, rss))
}

/// Model behind a `W(0+)` extrapolation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitFit {
    pub w0: f64,
    /// Coefficient and exponent of the decay `c t^δ`; zero when the
    /// constant model was selected.
    pub c: f64,
    pub delta: f64,
    /// Coefficient of the resolution term `(h/t)^2` on grid fields.
    pub d: f64,
    pub rms: f64,
}

/// Fits `y ≈ w0 + c t^δ (+ d (h/t)^2)` with `δ ∈ [δ_max/10, δ_max]`, and the
/// same without the decay term, keeping whichever has the lower BIC.
///
/// On grid fields the series is polluted at small `t` by interpolation
/// error of relative size `(h/t)^2`; without that term the free fit would
/// mistake it for a decay with vanishing exponent and extrapolate wildly.
pub fn fit_limit(t: &[f64], y: &[f64], delta_max: f64, h: Option<f64>) -> Result<LimitFit> {
    let k = t.len();
    if k < 4 || k != y.len() || y.iter().chain(t).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit(format!("{k} usable samples")));
    }
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let floor = (1e-14 * scale).powi(2) * k as f64;
    let bic = |rss: f64, p: usize| k as f64 * ((rss + floor) / k as f64).ln() + p as f64 * (k as f64).ln();
    let ones = vec![1.0; k];
    let res: Option<Vec<f64>> = h.map(|h| t.iter().map(|v| (h / v).powi(2)).collect());

    let mut base_cols = vec![ones.clone()];
    base_cols.extend(res.clone());
    let (coef, rss) =
        least_squares(&base_cols, y).ok_or_else(|| Error::DegenerateFit("singular constant model".into()))?;
    let mut best = LimitFit {
        w0: coef[0],
        c: 0.0,
        delta: 0.0,
        d: coef.get(1).copied().unwrap_or(0.0),
        rms: (rss / k as f64).sqrt(),
    };
    let mut best_bic = bic(rss, base_cols.len());

    let power = |delta: f64| -> Option<(LimitFit, f64)> {
        let mut cols = vec![ones.clone(), t.iter().map(|v| v.powf(delta)).collect()];
        cols.extend(res.clone());
        let (coef, rss) = least_squares(&cols, y)?;
        Some((
            LimitFit {
                w0: coef[0],
                c: coef[1],
                delta,
                d: coef.get(2).copied().unwrap_or(0.0),
                rms: (rss / k as f64).sqrt(),
            },
            rss,
        ))
    };
    let lo = 0.1 * delta_max;
    let grid = 90;
    let mut cand: Option<(LimitFit, f64)> = None;
    let mut cand_j = 0;
    for j in 0..=grid {
        if let Some(f) = power(lo + (delta_max - lo) * j as f64 / grid as f64) {
            if cand.as_ref().is_none_or(|c| f.1 < c.1) {
                cand = Some(f);
                cand_j = j;
            }
        }
    }
    if let Some(mut c) = cand {
        let step = (delta_max - lo) / grid as f64;
        let (a, b) = (
            (lo + step * (cand_j as f64 - 1.0)).max(lo),
            (lo + step * (cand_j as f64 + 1.0)).min(delta_max),
        );
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (a, b);
        for _ in 0..60 {
            let x1 = b - g * (b - a);
            let x2 = a + g * (b - a);
            let f1 = power(x1).map_or(f64::INFINITY, |f| f.1);
            let f2 = power(x2).map_or(f64::INFINITY, |f| f.1);
            if f1 <= f2 {
                b = x2;
            } else {
                a = x1;
            }
        }
        if let Some(f) = power(0.5 * (a + b)) {
            if f.1 < c.1 {
                c = f;
            }
        }
        let p = 3 + usize::from(h.is_some());
        if bic(c.1, p) < best_bic {
            best_bic = bic(c.1, p);
            best = c.0;
        }
    }
    let _ = best_bic;
    Ok(best)
}

/// Extrapolated `W(0+)` and its error bar `max(rms, |series(t_min) - W0|)`.
pub fn weiss_limit(report: &WeissReport) -> Result<(f64, f64)> {
    if report.t.len() < 4 {
        return Err(Error::Resolution(format!("{} ladder points, need 4", report.t.len())));
    }
    let y = &report.limit_series;
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok((0.0, 0.0));
    }
    let fit = fit_limit(&report.t, y, report.params.alpha, report.spacing)?;
    let err = fit.rms.max((y[0] - fit.w0).abs());
    Ok((fit.w0, err))
}

/// `β_n/2 = M(half-space)` by tensor Gauss quadrature over the half ball
/// `{x·ν > 0}`, evaluated in a frame adapted to `ν`.
pub fn beta_half_oriented(nu: &[f64], e: &[f64], order: usize) -> Result<f64> {
    let hs = HalfSpace::new(nu, e)?;
    let n = nu.len();
    let order = order.max(8);
    let (gx, gw) = gauss_legendre(order);
    let basis = orthonormal_completion(nu);
    let (m, nn) = (e.len(), n);
    let mut v = vec![0.0; m];
    let mut j = vec![0.0; m * nn];
    let mut x = vec![0.0; n];
    let mut density = |dir: &[f64], rho: f64| -> (f64, f64) {
        for k in 0..n {
            x[k] = rho * dir[k];
        }
        hs.sample(&x, &mut v, &mut j).expect("analytic field");
        let d: f64 = j.iter().map(|a| a * a).sum::<f64>() + 2.0 * norm(&v);
        (d, v.iter().map(|a| a * a).sum())
    };
    let (mut vol, mut surf) = (0.0, 0.0);
    match n {
        2 => {
            for (xa, wa) in gx.iter().zip(&gw) {
                let th = 0.5 * PI * xa;
                let wth = 0.5 * PI * wa;
                let dir: Vec<f64> = (0..2).map(|k| th.cos() * basis[0][k] + th.sin() * basis[1][k]).collect();
                surf += wth * density(&dir, 1.0).1;
                for (xr, wr) in gx.iter().zip(&gw) {
                    let rho = 0.5 * (xr + 1.0);
                    vol += wth * 0.5 * wr * rho * density(&dir, rho).0;
                }
            }
        }
        3 => {
            let naz = 2 * order;
            for (xc, wc) in gx.iter().zip(&gw) {
                let c = 0.5 * (xc + 1.0);
                let s = (1.0 - c * c).sqrt();
                let wcos = 0.5 * wc;
                for k in 0..naz {
                    let ph = 2.0 * PI * (k as f64 + 0.5) / naz as f64;
                    let wph = 2.0 * PI / naz as f64;
                    let dir: Vec<f64> = (0..3)
                        .map(|d| c * basis[0][d] + s * ph.cos() * basis[1][d] + s * ph.sin() * basis[2][d])
                        .collect();
                    surf += wcos * wph * density(&dir, 1.0).1;
                    for (xr, wr) in gx.iter().zip(&gw) {
                        let rho = 0.5 * (xr + 1.0);
                        vol += wcos * wph * 0.5 * wr * rho * rho * density(&dir, rho).0;
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(vol - 2.0 * surf)
}

/// `β_n/2` with `ν = e_1`, `e = e_1`.
pub fn beta_half(n: usize, order: usize) -> Result<f64> {
    if n != 2 && n != 3 {
        return Err(Error::InvalidParameter(format!("n = {n} must be 2 or 3")));
    }
    let mut nu = vec![0.0; n];
    nu[0] = 1.0;
    beta_half_oriented(&nu, &[1.0], order)
}

/// Rows of an orthonormal basis whose first vector is `nu`.
pub(crate) fn orthonormal_completion(nu: &[f64]) -> Vec<Vec<f64>> {
    let n = nu.len();
    let mut basis = vec![nu.to_vec()];
    for k in 0..n {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for i in 0..n {
                v[i] -= d * b[i];
            }
        }
        let l = norm(&v);
        if l > 1e-6 {
            basis.push(v.into_iter().map(|x| x / l).collect());
        }
        if basis.len() == n {
            break;
        }
    }
    basis
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Regular,
    NonRegular,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub x0: Vec<f64>,
    #[serde(rename = "W0")]
    pub w0: f64,
    pub err: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Radii used by scans and classifications.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub t_min: f64,
    pub t_max: f64,
    pub ratio: f64,
}

impl Default for Ladder {
    fn default() -> Self {
        Ladder {
            t_min: 0.04,
            t_max: 0.4,
            ratio: 1.25,
        }
    }
}

/// Rejects centres that are not (numerically) free-boundary points:
/// `u(x0)` and `∇u(x0)` must vanish to the resolution of `u`, while `u`
/// must not vanish identically on the sphere of radius `probe`.
pub fn check_free_boundary_point<S: FieldSampler + ?Sized>(u: &S, x0: &[f64], probe: f64) -> Result<()> {
    let (n, m) = (u.dim(), u.components());
    let frame = BallFrame::new(x0, probe);
    frame.check(n, u.half_width(), None)?;
    let trace = boundary_trace(u, &frame, trace_resolution(u, probe).min(512))?;
    let mut umax: f64 = 0.0;
    let mut gmax: f64 = 0.0;
    for q in 0..trace.len() {
        umax = umax.max(norm(trace.value(q)));
        let g2: f64 = trace.radial_derivative(q).iter().map(|a| a * a).sum::<f64>()
            + trace.tangential_derivative(q).iter().map(|a| a * a).sum::<f64>();
        gmax = gmax.max(g2.sqrt());
    }
    if umax == 0.0 {
        return Err(Error::NotFreeBoundary(format!("{x0:?} (u vanishes near it)")));
    }
    let h = u.spacing().unwrap_or(1.0 / 128.0);
    let mut v = vec![0.0; m];
    let mut j = vec![0.0; m * n];
    u.sample(x0, &mut v, &mut j)?;
    let tol_u = 10.0 * h * h * umax / (probe * probe);
    let tol_g = 10.0 * h * gmax / probe;
    if norm(&v) > tol_u || norm(&j) > tol_g {
        return Err(Error::NotFreeBoundary(format!(
            "{x0:?} (|u| = {:.3e}, |grad u| = {:.3e})",
            norm(&v),
            norm(&j)
        )));
    }
    Ok(())
}

/// Scan, extrapolate and compare `W(0+)` with `threshold_factor · β_n/2`.
pub fn classify_point<S: FieldSampler + ?Sized>(
    u: &S,
    x0: &[f64],
    params: &WeissParams,
    threshold_factor: f64,
    ladder: &Ladder,
) -> Result<Classification> {
    let threshold = threshold_factor * beta_half(u.dim(), 48)?;
    let indeterminate = |reason: String| Classification {
        x0: x0.to_vec(),
        w0: f64::NAN,
        err: f64::INFINITY,
        threshold,
        verdict: Verdict::Indeterminate,
        reason: Some(reason),
    };
    // near the edge of the domain the scan runs on a truncated ladder
    let reach = u
        .half_width()
        .map_or(f64::INFINITY, |l| x0.iter().map(|c| l - c.abs()).fold(f64::INFINITY, f64::min));
    match check_free_boundary_point(u, x0, ladder.t_max.min(reach)) {
        Err(Error::Resolution(msg)) | Err(Error::InvalidFrame { reason: msg, .. }) => return Ok(indeterminate(msg)),
        r => r?,
    }
    let report = match weiss_scan(u, x0, ladder.t_min, ladder.t_max, params, ladder.ratio, None) {
        Ok(r) => r,
        Err(Error::Resolution(msg)) | Err(Error::InvalidFrame { reason: msg, .. }) => return Ok(indeterminate(msg)),
        Err(e) => return Err(e),
    };
    Ok(classify_report(&report, threshold))
}

/// Verdict for an existing scan.
pub fn classify_report(report: &WeissReport, threshold: f64) -> Classification {
    let (w0, err) = (report.w0_estimate, report.w0_error);
    let (verdict, reason) = if !w0.is_finite() || !err.is_finite() {
        (Verdict::Indeterminate, Some("extrapolation failed".to_string()))
    } else if w0 + err <= threshold {
        (Verdict::Regular, None)
    } else if w0 - err > threshold {
        (Verdict::NonRegular, None)
    } else {
        (Verdict::Indeterminate, Some("error bar straddles the threshold".to_string()))
    };
    Classification {
        x0: report.x0.clone(),
        w0,
        err,
        threshold,
        verdict,
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryMask, GridSpec, VectorField};

    #[test]
    fn params_and_t0() {
        let p = WeissParams::new(2, 1.0).unwrap();
        assert_eq!((p.a, p.b), (4.0, 6.0));
        assert!((p.t0() - 1.0 / 24.0).abs() < 1e-15);
        assert!(WeissParams::new(2, 2.0).is_err());
        assert!(WeissParams::new(2, 0.0).is_err());
        assert!(WeissParams::new(4, 1.0).is_err());
        let p = WeissParams::new(2, 1.5).unwrap();
        assert!((p.t0() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn closed_form_on_half_space() {
        let p = WeissParams::new(2, 1.0).unwrap();
        let hs = HalfSpace::new(&[1.0, 0.0], &[1.0]).unwrap();
        let w = weiss(&hs, &BallFrame::new(&[0.0, 0.0], 0.1), &p).unwrap();
        let exact = (0.4f64).exp() * (PI / 16.0 + 3.0 * PI * 6.0 / 16.0 * 0.1);
        assert!((w - exact).abs() < 1e-6, "{w} vs {exact}");
        assert!((w - 0.8202).abs() < 5e-3);
    }

    #[test]
    fn zero_field_scan() {
        let spec = GridSpec::new(2, 1, 1.0 / 32.0, 1.0).unwrap();
        let u = VectorField::zeros(&spec, &BoundaryMask::OutsideUnitBall);
        let p = WeissParams::new(2, 1.0).unwrap();
        let r = weiss_scan(&u, &[0.0, 0.0], 0.15, 0.5, &p, 1.25, None).unwrap();
        assert!(r.w.iter().all(|&w| w == 0.0));
        assert!(r.slopes.iter().all(|&s| s == 0.0));
        assert!(r.violations.is_empty());
        assert_eq!((r.w0_estimate, r.w0_error), (0.0, 0.0));
    }

    #[test]
    fn too_few_resolvable_radii() {
        let spec = GridSpec::new(2, 1, 1.0 / 16.0, 1.0).unwrap();
        let u = VectorField::zeros(&spec, &BoundaryMask::OutsideUnitBall);
        let p = WeissParams::new(2, 1.0).unwrap();
        assert!(matches!(
            weiss_scan(&u, &[0.0, 0.0], 0.01, 0.3, &p, 2.0, None),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn synthetic_limits() {
        let p = WeissParams::new(2, 1.0).unwrap();
        let t = geometric_ladder(0.04, 0.4, 1.25).unwrap();
        let w: Vec<f64> = t.iter().map(|t| 0.2 + 0.5 * t).collect();
        let r = WeissReport::synthetic(p, t.clone(), w);
        assert!((r.w0_estimate - 0.2).abs() < 1e-6);
        let r = WeissReport::synthetic(p, t.clone(), vec![0.0; t.len()]);
        assert_eq!(r.w0_estimate, 0.0);
    }

    #[test]
    fn beta_half_values() {
        assert!((beta_half(2, 48).unwrap() / (PI / 16.0) - 1.0).abs() < 1e-12);
        assert!((beta_half(3, 48).unwrap() / (PI / 15.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn guard_rejects_zero_and_positive_points() {
        let spec = GridSpec::new(2, 1, 1.0 / 32.0, 1.0).unwrap();
        let u = VectorField::zeros(&spec, &BoundaryMask::OutsideUnitBall);
        let p = WeissParams::new(2, 1.0).unwrap();
        assert!(matches!(
            classify_point(&u, &[0.0, 0.0], &p, 1.15, &Ladder::default()),
            Err(Error::NotFreeBoundary(_))
        ));
        let hs = HalfSpace::new(&[1.0, 0.0], &[1.0]).unwrap();
        assert!(check_free_boundary_point(&hs, &[0.3, 0.0], 0.2).is_err());
        assert!(check_free_boundary_point(&hs, &[0.0, 0.3], 0.2).is_ok());
    }

    #[test]
    fn analytic_half_space_is_regular() {
        let p = WeissParams::new(2, 1.0).unwrap();
        let hs = HalfSpace::planar(2, 0.3, &[0.6, 0.8]).unwrap();
        let c = classify_point(&hs, &[0.0, 0.0], &p, 1.15, &Ladder::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Regular);
        assert!((c.w0 - PI / 16.0).abs() < 1e-3);
    }
}
