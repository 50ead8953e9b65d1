//! Free-boundary extraction and the geometric diagnostics built on it:
//! growth ratios, the normal map with its Hölder table, and local graph fits.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::energy;
use crate::error::{Error, Result};
use crate::grid::{gradient, norm, BallFrame, VectorField};
use crate::homogeneity::extract_blowup;
use crate::quadrature::{boundary_trace, trace_resolution};
use crate::sampler::{dot, FieldSampler};
use crate::weiss::{orthonormal_completion, Classification, Verdict, WeissParams};

/// A point of `Γ(u)` together with whatever has been measured there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundaryPoint {
    pub location: Vec<f64>,
    /// Grid node the point was detected at.
    pub node: usize,
    pub classification: Option<Classification>,
    pub nu: Option<Vec<f64>>,
    pub e: Option<Vec<f64>>,
    pub c_lower: Option<f64>,
    pub c_upper: Option<f64>,
}

impl FreeBoundaryPoint {
    fn new(location: Vec<f64>, node: usize) -> Self {
        FreeBoundaryPoint {
            location,
            node,
            classification: None,
            nu: None,
            e: None,
            c_lower: None,
            c_upper: None,
        }
    }
}

/// Detection thresholds `(ε_u, ε_g)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub eps_u: f64,
    pub eps_g: f64,
}

impl Thresholds {
    /// `ε_u = c_u h^2 sup|u|`, `ε_g = c_g h sup|∇u|` over the free nodes.
    pub fn scaled(u: &VectorField, c_u: f64, c_g: f64) -> Self {
        let grad = gradient(u);
        let (n, m) = (u.spec.n, u.spec.m);
        let mut umax: f64 = 0.0;
        let mut gmax: f64 = 0.0;
        for idx in u.free_nodes() {
            umax = umax.max(u.magnitude(idx));
            gmax = gmax.max(norm(&grad[idx * m * n..(idx + 1) * m * n]));
        }
        let h = u.spec.h;
        Thresholds {
            eps_u: c_u * h * h * umax,
            eps_g: c_g * h * gmax,
        }
    }

    pub fn default_for(u: &VectorField) -> Self {
        Self::scaled(u, 10.0, 10.0)
    }
}

fn neighbour_offsets(n: usize, strides: [usize; 3]) -> Vec<(isize, [i8; 3])> {
    let mut out = Vec::new();
    for code in 0..3usize.pow(n as u32) {
        let mut d = [0i8; 3];
        let mut c = code;
        let mut off = 0isize;
        for k in 0..n {
            d[k] = (c % 3) as i8 - 1;
            c /= 3;
            off += d[k] as isize * strides[k] as isize;
        }
        if d != [0; 3] {
            out.push((off, d));
        }
    }
    out
}

/// Nodes with `|u| ≤ ε_u`, `|∇u| ≤ ε_g` and a neighbour above `ε_u`.
///
/// Each detection is moved to the zero of the linear model of `sqrt|u|`
/// along the edge to its largest neighbour (exact for a half-space, whose
/// square root is affine on the positive side), and detections closer than
/// `h/4` are merged. Only interior free nodes are considered.
pub fn extract_free_boundary(u: &VectorField, eps_u: f64, eps_g: f64) -> Result<Vec<FreeBoundaryPoint>> {
    if !(eps_u > 0.0 && eps_g > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "thresholds must be positive (eps_u = {eps_u}, eps_g = {eps_g})"
        )));
    }
    let spec = &u.spec;
    let (n, m, h) = (spec.n, spec.m, spec.h);
    let grad = gradient(u);
    let offsets = neighbour_offsets(n, spec.strides());
    let last = spec.cells();

    let found: Vec<FreeBoundaryPoint> = (0..u.node_count())
        .into_par_iter()
        .filter_map(|idx| {
            if u.dirichlet[idx] {
                return None;
            }
            let multi = spec.multi_index(idx);
            if multi[..n].iter().any(|&i| i == 0 || i == last) {
                return None;
            }
            let a = u.magnitude(idx);
            if a > eps_u || norm(&grad[idx * m * n..(idx + 1) * m * n]) > eps_g {
                return None;
            }
            let (_, d, b) = offsets
                .iter()
                .map(|&(off, d)| (off, d, u.magnitude((idx as isize + off) as usize)))
                .max_by(|x, y| x.2.total_cmp(&y.2))?;
            if b <= eps_u {
                return None;
            }
            let (sa, sb) = (a.sqrt(), b.sqrt());
            let tau = (-sa / (sb - sa)).clamp(-4.0, 0.0);
            let mut x = [0.0; 3];
            spec.node_point(idx, &mut x);
            let loc = (0..n).map(|k| x[k] + tau * h * d[k] as f64).collect();
            Some(FreeBoundaryPoint::new(loc, idx))
        })
        .collect();

    Ok(dedupe(found, 0.25 * h))
}

fn dedupe(points: Vec<FreeBoundaryPoint>, radius: f64) -> Vec<FreeBoundaryPoint> {
    let key = |x: &[f64]| -> [i64; 3] {
        let mut k = [0i64; 3];
        for (a, v) in k.iter_mut().zip(x) {
            *a = (v / radius).floor() as i64;
        }
        k
    };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut kept: Vec<FreeBoundaryPoint> = Vec::new();
    for p in points {
        let k = key(&p.location);
        let n = p.location.len();
        let mut clash = false;
        'search: for code in 0..3i64.pow(n as u32) {
            let mut kk = k;
            let mut c = code;
            for a in kk.iter_mut().take(n) {
                *a += c % 3 - 1;
                c /= 3;
            }
            if let Some(list) = buckets.get(&kk) {
                for &j in list {
                    let d: f64 = kept[j].location.iter().zip(&p.location).map(|(a, b)| (a - b).powi(2)).sum();
                    if d.sqrt() < radius {
                        clash = true;
                        break 'search;
                    }
                }
            }
        }
        if !clash {
            buckets.entry(k).or_default().push(kept.len());
            kept.push(p);
        }
    }
    kept
}

/// Growth ratios along a ladder of radii at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub x0: Vec<f64>,
    pub radii: Vec<f64>,
    /// `sup_{B_r} |u| / r^2`.
    pub sup_ratio: Vec<f64>,
    /// `E(u, x0, r) / r^{n+2}`.
    pub energy_ratio: Vec<f64>,
    pub c0: f64,
    pub eps0: f64,
    /// Largest of both ratio families.
    pub c_upper: f64,
}

fn sup_on_ball<S: FieldSampler + ?Sized>(u: &S, x0: &[f64], r: f64) -> Result<f64> {
    let shells = u.spacing().map_or(16, |h| ((r / h).ceil() as usize).max(8));
    let mut best: f64 = 0.0;
    for j in 1..=shells {
        let rho = r * j as f64 / shells as f64;
        let nq = trace_resolution(u, rho).clamp(16, 2048);
        let nq = if u.dim() == 3 { nq.min(128) } else { nq };
        let trace = boundary_trace(u, &BallFrame::new(x0, rho), nq)?;
        for q in 0..trace.len() {
            best = best.max(norm(trace.value(q)));
        }
    }
    let mut v = vec![0.0; u.components()];
    u.eval(x0, &mut v)?;
    Ok(best.max(norm(&v)))
}

pub fn growth_report<S: FieldSampler + ?Sized>(u: &S, x0: &[f64], radii: &[f64]) -> Result<GrowthReport> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("empty radius ladder".into()));
    }
    let n = u.dim();
    let rows: Vec<(f64, f64)> = radii
        .par_iter()
        .map(|&r| {
            let frame = BallFrame::new(x0, r);
            frame.check(n, u.half_width(), u.spacing())?;
            let s = sup_on_ball(u, x0, r)? / (r * r);
            let e = energy(u, &frame)?.total / r.powi(n as i32 + 2);
            Ok((s, e))
        })
        .collect::<Result<_>>()?;
    let sup_ratio: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let energy_ratio: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(GrowthReport {
        x0: x0.to_vec(),
        radii: radii.to_vec(),
        c0: min(&sup_ratio),
        eps0: min(&energy_ratio),
        c_upper: max(&sup_ratio).max(max(&energy_ratio)),
        sup_ratio,
        energy_ratio,
    })
}

/// `(ν, e)` at one point of the normal map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalEntry {
    pub x: Vec<f64>,
    pub nu: Vec<f64>,
    pub e: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderRow {
    pub gamma: f64,
    /// Largest pairwise ratio over all pairs.
    pub max_ratio: f64,
    /// Largest ratio over the closest quarter of the pairs.
    pub max_ratio_near: f64,
    /// Largest ratio over the farthest quarter of the pairs.
    pub max_ratio_far: f64,
    pub bounded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalMap {
    pub entries: Vec<NormalEntry>,
    /// Points left out, with the reason.
    pub excluded: Vec<(Vec<f64>, String)>,
    pub table: Vec<HolderRow>,
    /// Largest `γ` of the table whose ratios stay bounded; `None` without pairs.
    pub gamma: Option<f64>,
    /// Largest `|ν(x1) - ν(x2)| + |e(x1) - e(x2)|` over all pairs.
    pub max_deviation: f64,
}

/// Exponents tried by the Hölder table.
pub const HOLDER_GAMMAS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Blowup normal and direction at every point, plus the pairwise Hölder
/// table. Points classified Indeterminate, and points whose blowup fails,
/// are excluded.
pub fn normal_direction_map<S: FieldSampler + ?Sized>(
    u: &S,
    points: &[FreeBoundaryPoint],
    radii: &[f64],
    params: &WeissParams,
) -> Result<NormalMap> {
    let results: Vec<std::result::Result<NormalEntry, (Vec<f64>, String)>> = points
        .par_iter()
        .map(|p| {
            if let Some(c) = &p.classification {
                if c.verdict == Verdict::Indeterminate {
                    return Err((p.location.clone(), "classified Indeterminate".to_string()));
                }
            }
            match extract_blowup(u, &p.location, radii, params) {
                Ok(b) => Ok(NormalEntry {
                    x: p.location.clone(),
                    nu: b.fit.nu,
                    e: b.fit.e,
                }),
                Err(err) => Err((p.location.clone(), err.to_string())),
            }
        })
        .collect();
    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for r in results {
        match r {
            Ok(e) => entries.push(e),
            Err(x) => excluded.push(x),
        }
    }

    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let (a, b) = (&entries[i], &entries[j]);
            let dx = dist(&a.x, &b.x);
            if dx == 0.0 {
                continue;
            }
            pairs.push((dx, dist(&a.nu, &b.nu) + dist(&a.e, &b.e)));
        }
    }
    let max_deviation = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let (table, gamma) = holder_table(&mut pairs);
    Ok(NormalMap {
        entries,
        excluded,
        table,
        gamma,
        max_deviation,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Rows are bounded when `γ` does not exceed the trimmed log-log slope of
/// deviation against distance; a map without variation is bounded at every `γ`.
fn holder_table(pairs: &mut [(f64, f64)]) -> (Vec<HolderRow>, Option<f64>) {
    if pairs.is_empty() {
        return (Vec::new(), None);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let slope = loglog_slope(pairs, 1e-12).unwrap_or(f64::INFINITY);
    let q = (pairs.len() / 4).max(1);
    let max_over = |set: &[(f64, f64)], g: f64| set.iter().map(|(d, v)| v / d.powf(g)).fold(0.0, f64::max);
    let table: Vec<HolderRow> = HOLDER_GAMMAS
        .iter()
        .map(|&g| HolderRow {
            gamma: g,
            max_ratio: max_over(pairs, g),
            max_ratio_near: max_over(&pairs[..q], g),
            max_ratio_far: max_over(&pairs[pairs.len() - q..], g),
            bounded: g <= slope + 1e-9,
        })
        .collect();
    let gamma = table.iter().filter(|r| r.bounded).map(|r| r.gamma).reduce(f64::max);
    (table, gamma)
}

/// Least-squares slope of `log v` against `log d` over pairs with
/// `v > floor`, after trimming the largest 5% of ratios `v/d`. `None` when
/// fewer than three pairs carry signal.
fn loglog_slope(pairs: &[(f64, f64)], floor: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64, f64)> = pairs
        .iter()
        .filter(|(d, v)| *d > 0.0 && *v > floor)
        .map(|&(d, v)| (d.ln(), v.ln(), v / d))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    pts.sort_by(|a, b| a.2.total_cmp(&b.2));
    let keep = (((pts.len() as f64) * 0.95).ceil() as usize).max(3).min(pts.len());
    let pts = &pts[..keep];
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Local graph `x_n = g(x')` of `Γ` over the tangent plane at a base point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFit {
    pub base: Vec<f64>,
    /// Normal used as the last axis of the frame.
    pub nu: Vec<f64>,
    /// Tangent directions, one per coordinate of `x'`.
    pub tangents: Vec<Vec<f64>>,
    pub offsets: Vec<(Vec<f64>, f64)>,
    /// Smoothed `∇g` at every sample.
    pub grad: Vec<Vec<f64>>,
    /// Normal of the fitted graph at the base point.
    pub fitted_normal: Vec<f64>,
    /// Hölder exponent of `∇g`, in `(0, 1]`.
    pub gamma: f64,
    pub residuals: Vec<f64>,
    pub max_abs_g: f64,
    pub window: f64,
}

impl GraphFit {
    /// Angle in degrees between `fitted_normal` and `reference`.
    pub fn angle_to(&self, reference: &[f64]) -> f64 {
        let c = dot(&self.fitted_normal, reference) / (norm(&self.fitted_normal) * norm(reference));
        c.clamp(-1.0, 1.0).acos().to_degrees()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Solves the small dense system `a x = b` by Gaussian elimination with
/// partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let k = b.len();
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            for c in col..k {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let s: f64 = (row + 1..k).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Weighted local-linear fit of `g` at `at`: returns `(g, ∇g)`.
fn local_linear(xs: &[Vec<f64>], gs: &[f64], at: &[f64], bandwidth: f64) -> Option<(f64, Vec<f64>)> {
    let d = at.len();
    let mut a = vec![vec![0.0; d + 1]; d + 1];
    let mut b = vec![0.0; d + 1];
    let mut basis = vec![0.0; d + 1];
    for (x, &g) in xs.iter().zip(gs) {
        let r = dist(x, at) / bandwidth;
        if r >= 1.0 {
            continue;
        }
        let w = (1.0 - r * r * r).powi(3);
        basis[0] = 1.0;
        for k in 0..d {
            basis[k + 1] = x[k] - at[k];
        }
        for i in 0..=d {
            b[i] += w * basis[i] * g;
            for j in 0..=d {
                a[i][j] += w * basis[i] * basis[j];
            }
        }
    }
    let sol = solve_dense(a, b)?;
    Some((sol[0], sol[1..].to_vec()))
}

/// Fits `Γ` near `base` as a graph over the plane orthogonal to `nu`.
///
/// Points within `window` of `base` are expressed as `(x', g)`; `g` is
/// smoothed by tricube-weighted local-linear regression with bandwidth
/// `window / 2`, and the exponent of `∇g` comes from a pairwise log-log
/// regression with the top 5% of ratios trimmed. `tol` is the height
/// slack of the graph test (typically `h`).
pub fn graph_fit(base: &[f64], nu: &[f64], points: &[Vec<f64>], window: f64, tol: f64) -> Result<GraphFit> {
    let n = base.len();
    if nu.len() != n || (norm(nu) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("nu = {nu:?} is not a unit vector in R^{n}")));
    }
    let basis = orthonormal_completion(nu);
    let tangents: Vec<Vec<f64>> = basis[1..].to_vec();
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut gs: Vec<f64> = Vec::new();
    for p in points {
        let d: Vec<f64> = p.iter().zip(base).map(|(a, b)| a - b).collect();
        if norm(&d) > window {
            continue;
        }
        xs.push(tangents.iter().map(|t| dot(&d, t)).collect());
        gs.push(dot(&d, nu));
    }
    if xs.len() < 5 {
        return Err(Error::Resolution(format!(
            "{} free-boundary points within the window {window}; need at least 5",
            xs.len()
        )));
    }
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let dx = dist(&xs[i], &xs[j]);
            let dg = (gs[i] - gs[j]).abs();
            if dg > dx + 2.0 * tol {
                return Err(Error::ConeViolation(format!(
                    "points at x' = {:?} and {:?} differ in height by {dg:.3e} over {dx:.3e}",
                    xs[i], xs[j]
                )));
            }
        }
    }

    let bandwidth = 0.5 * window;
    let mut grad = Vec::with_capacity(xs.len());
    let mut residuals = Vec::with_capacity(xs.len());
    for (x, &g) in xs.iter().zip(&gs) {
        let (gf, dg) = local_linear(&xs, &gs, x, bandwidth)
            .ok_or_else(|| Error::DegenerateFit("points do not span the tangent plane".into()))?;
        residuals.push(g - gf);
        grad.push(dg);
    }
    let origin = vec![0.0; n - 1];
    let (_, dg0) = local_linear(&xs, &gs, &origin, bandwidth)
        .ok_or_else(|| Error::DegenerateFit("points do not span the tangent plane at the base".into()))?;
    let mut fitted_normal = nu.to_vec();
    for (t, s) in tangents.iter().zip(&dg0) {
        for k in 0..n {
            fitted_normal[k] -= s * t[k];
        }
    }
    let l = norm(&fitted_normal);
    fitted_normal.iter_mut().for_each(|a| *a /= l);

    let gamma = holder_exponent(&xs, &grad);
    let max_abs_g = gs.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    Ok(GraphFit {
        base: base.to_vec(),
        nu: nu.to_vec(),
        tangents,
        offsets: xs.into_iter().zip(gs).collect(),
        grad,
        fitted_normal,
        gamma,
        residuals,
        max_abs_g,
        window,
    })
}

/// Pairwise log-log slope of `|∇g(a) - ∇g(b)|` against `|a - b|`, clamped
/// to `(0, 1]`. A constant gradient counts as Lipschitz.
fn holder_exponent(xs: &[Vec<f64>], grad: &[Vec<f64>]) -> f64 {
    let scale = grad.iter().map(|g| norm(g)).fold(1.0f64, f64::max);
    let mut pairs = Vec::new();
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            pairs.push((dist(&xs[i], &xs[j]), dist(&grad[i], &grad[j])));
        }
    }
    loglog_slope(&pairs, 1e-12 * scale).map_or(1.0, |s| s.clamp(1e-3, 1.0))
}

/// Counts of cone-condition failures around a regular point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    /// Nodes inside the backward cone where `|u| > ε_u`.
    pub positive_behind: usize,
    /// Nodes inside the forward cone, at least `8h` away, where `|u| ≤ ε_u`.
    pub vanishing_ahead: usize,
    pub checked: usize,
}

/// Checks both cones `±(y - x1)·ν > ε|y - x1|` over grid nodes in `B_rho(x1)`.
pub fn cone_check(u: &VectorField, x1: &[f64], nu: &[f64], rho: f64, eps: f64, eps_u: f64) -> ConeReport {
    let spec = &u.spec;
    let n = spec.n;
    let mut report = ConeReport {
        positive_behind: 0,
        vanishing_ahead: 0,
        checked: 0,
    };
    let mut x = [0.0; 3];
    for idx in 0..u.node_count() {
        spec.node_point(idx, &mut x);
        let d: Vec<f64> = (0..n).map(|k| x[k] - x1[k]).collect();
        let r = norm(&d);
        if r > rho || r == 0.0 {
            continue;
        }
        report.checked += 1;
        let s = dot(&d, nu);
        let mag = u.magnitude(idx);
        if s < -eps * r && mag > eps_u {
            report.positive_behind += 1;
        }
        if s > eps * r && r >= 8.0 * spec.h && mag <= eps_u {
            report.vanishing_ahead += 1;
        }
    }
    report
}

/// `x...,class,W0,nu...,e...,c_lower,C_upper`
pub fn gamma_csv(points: &[FreeBoundaryPoint], n: usize, m: usize) -> String {
    let mut cols: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    cols.push("class".into());
    cols.push("W0".into());
    cols.extend((1..=n).map(|k| format!("nu{k}")));
    cols.extend((1..=m).map(|k| format!("e{k}")));
    cols.push("c_lower".into());
    cols.push("C_upper".into());
    let mut out = cols.join(",");
    out.push('\n');
    let num = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |x| x.to_string());
    for p in points {
        let mut row: Vec<String> = p.location.iter().map(|x| x.to_string()).collect();
        let (class, w0) = match &p.classification {
            Some(c) => (format!("{:?}", c.verdict), num(Some(c.w0))),
            None => ("Unclassified".to_string(), num(None)),
        };
        row.push(class);
        row.push(w0);
        for (vec, len) in [(&p.nu, n), (&p.e, m)] {
            match vec {
                Some(v) => row.extend(v.iter().map(|x| x.to_string())),
                None => row.extend(std::iter::repeat_n("NaN".to_string(), len)),
            }
        }
        row.push(num(p.c_lower));
        row.push(num(p.c_upper));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
