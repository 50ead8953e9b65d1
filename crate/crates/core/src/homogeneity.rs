//! Rescalings, homogeneous replacements and blowups.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{norm, BallFrame, BoundaryMask, GridSpec, VectorField};
use crate::quadrature::{ball_integral, boundary_trace, trace_resolution, BoundaryTrace};
use crate::sampler::{FieldSampler, HomogeneousExtension, ScaledView};
use crate::weiss::{check_free_boundary_point, WeissParams};

/// `u_{x0,r}(x) = u(x0 + r x) / r^2` re-gridded on `[-1, 1]^n`.
#[derive(Clone, Debug)]
pub struct RescaledField {
    pub x0: Vec<f64>,
    pub r: f64,
    pub field: VectorField,
}

/// Finest re-gridding resolution (nodes per unit length).
pub const MAX_RESCALE_RESOLUTION: usize = 256;

fn check_cube<S: FieldSampler + ?Sized>(u: &S, x0: &[f64], r: f64) -> Result<()> {
    let frame = BallFrame::new(x0, r);
    frame.check(u.dim(), u.half_width(), u.spacing())?;
    if let Some(l) = u.half_width() {
        if x0.iter().any(|c| c.abs() + r > l * (1.0 + 1e-12)) {
            return Err(Error::InvalidFrame {
                center: x0.to_vec(),
                radius: r,
                reason: "rescaling cube leaves the grid".into(),
            });
        }
    }
    Ok(())
}

/// Re-grids `u_{x0,r}`. `resolution` is the number of cells per unit
/// length; by default the physical resolution `r/h` is kept, clamped to
/// `[8, 256]`.
pub fn rescale<S: FieldSampler + ?Sized>(u: &S, x0: &[f64], r: f64, resolution: Option<usize>) -> Result<RescaledField> {
    check_cube(u, x0, r)?;
    let k = resolution
        .unwrap_or_else(|| u.spacing().map_or(128, |h| (r / h).round() as usize))
        .clamp(8, MAX_RESCALE_RESOLUTION);
    let spec = GridSpec::new(u.dim(), u.components(), 1.0 / k as f64, 1.0)?;
    let view = ScaledView::new(u, x0, r, 1.0 / (r * r));
    let (n, m) = (spec.n, spec.m);
    let mut field = VectorField::zeros(&spec, &BoundaryMask::OutsideUnitBall);
    field
        .values
        .par_chunks_mut(m)
        .enumerate()
        .try_for_each(|(idx, out)| {
            let mut y = [0.0; 3];
            spec.node_point(idx, &mut y);
            // nodes on the cube faces may round a hair outside the source grid
            for v in y[..n].iter_mut() {
                *v = v.clamp(-1.0, 1.0);
            }
            view.eval(&y[..n], out)
        })?;
    Ok(RescaledField {
        x0: x0.to_vec(),
        r,
        field,
    })
}

/// `c_{x0,r}(x) = |x|^2 u_{x0,r}(x/|x|)`.
pub type HomogeneousReplacement<'a, S> = HomogeneousExtension<ScaledView<&'a S>>;

pub fn homogeneous_replacement<'a, S: FieldSampler + ?Sized>(
    u: &'a S,
    x0: &[f64],
    r: f64,
) -> Result<HomogeneousReplacement<'a, S>> {
    BallFrame::new(x0, r).check(u.dim(), u.half_width(), u.spacing())?;
    Ok(HomogeneousExtension::new(ScaledView::new(u, x0, r, 1.0 / (r * r))))
}

/// `u^φ_{x0,r}(x) = u(r x + x0) / φ(r)`.
pub fn phi_rescale<'a, S: FieldSampler + ?Sized>(
    u: &'a S,
    x0: &[f64],
    r: f64,
    params: &WeissParams,
) -> Result<ScaledView<&'a S>> {
    BallFrame::new(x0, r).check(u.dim(), u.half_width(), u.spacing())?;
    Ok(ScaledView::new(u, x0, r, 1.0 / params.phi(r)))
}

/// `∫_{B_1} |x·∇v - 2v|^2`.
pub fn homogeneity_deviation<S: FieldSampler + ?Sized>(v: &S) -> Result<f64> {
    let n = v.dim();
    ball_integral(v, &BallFrame::unit(n), |x, val, jac| {
        let mut acc = 0.0;
        for (c, vc) in val.iter().enumerate() {
            let euler: f64 = (0..n).map(|k| x[k] * jac[c * n + k]).sum();
            acc += (euler - 2.0 * vc).powi(2);
        }
        acc
    })
}

/// Best half-space `max(x·ν, 0)^2/2 e` for `v` on `∂B_1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceFit {
    pub nu: Vec<f64>,
    pub e: Vec<f64>,
    /// `∮_{∂B_1} |v - half-space|^2` at the optimum.
    pub residual: f64,
}

struct SphereData {
    trace: BoundaryTrace,
    v_sq: f64,
}

impl SphereData {
    /// For fixed `ν`, the best unit `e` is `∮ p v` normalized; returns the
    /// residual and that `e`.
    fn residual(&self, nu: &[f64]) -> (f64, Vec<f64>) {
        let (n, m) = (self.trace.n, self.trace.m);
        let mut pv = vec![0.0; m];
        let mut pp = 0.0;
        for q in 0..self.trace.len() {
            let w = self.trace.normal(q);
            let s: f64 = (0..n).map(|k| w[k] * nu[k]).sum::<f64>().max(0.0);
            let p = 0.5 * s * s;
            let wq = self.trace.weights[q];
            pp += wq * p * p;
            for (a, v) in pv.iter_mut().zip(self.trace.value(q)) {
                *a += wq * p * v;
            }
        }
        let l = norm(&pv);
        let e = if l > 0.0 {
            pv.iter().map(|a| a / l).collect()
        } else {
            let mut e = vec![0.0; m];
            e[0] = 1.0;
            e
        };
        ((self.v_sq - 2.0 * l + pp).max(0.0), e)
    }
}

fn golden<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn spherical(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Fits `v` on `∂B_1` by a half-space solution: `e` in closed form for each
/// `ν`, `ν` by a coarse scan refined with golden sections.
pub fn fit_half_space<S: FieldSampler + ?Sized>(v: &S) -> Result<HalfSpaceFit> {
    let n = v.dim();
    let nq = trace_resolution(v, 1.0).clamp(128, 1024);
    let nq = if n == 3 { nq.min(96) } else { nq };
    let trace = boundary_trace(v, &BallFrame::unit(n), nq)?;
    let v_sq = trace.square_integral();
    if v_sq <= 0.0 {
        return Err(Error::DegenerateFit("field vanishes on the unit sphere".into()));
    }
    let data = SphereData { trace, v_sq };
    let nu = if n == 2 {
        let cost = |a: f64| data.residual(&[a.cos(), a.sin()]).0;
        let coarse = 720;
        let step = 2.0 * PI / coarse as f64;
        let best = (0..coarse)
            .map(|i| i as f64 * step)
            .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
            .unwrap();
        let (a, _) = golden(cost, best - step, best + step, 100);
        vec![a.cos(), a.sin()]
    } else {
        let cost = |t: f64, p: f64| data.residual(&spherical(t, p)).0;
        let (nt, np) = (36, 72);
        let (mut bt, mut bp, mut bc) = (0.0, 0.0, f64::INFINITY);
        for i in 0..=nt {
            let t = PI * i as f64 / nt as f64;
            for j in 0..np {
                let p = 2.0 * PI * j as f64 / np as f64;
                let c = cost(t, p);
                if c < bc {
                    (bt, bp, bc) = (t, p, c);
                }
            }
        }
        // Re-centre the search on a pole so the coordinates are regular
        // around the coarse optimum.
        let axis = spherical(bt, bp);
        let basis = crate::weiss::orthonormal_completion(&axis);
        let local = |a: f64, b: f64| -> [f64; 3] {
            let mut d = [0.0; 3];
            let c = (1.0 - a * a - b * b).max(0.0).sqrt();
            for k in 0..3 {
                d[k] = c * basis[0][k] + a * basis[1][k] + b * basis[2][k];
            }
            d
        };
        let (mut a, mut b) = (0.0, 0.0);
        let mut width = 2.0 * PI / np as f64;
        for _ in 0..6 {
            a = golden(|s| data.residual(&local(s, b)).0, a - width, a + width, 60).0;
            b = golden(|s| data.residual(&local(a, s)).0, b - width, b + width, 60).0;
            width *= 0.25;
        }
        let d = local(a, b);
        let l = norm(&d);
        d.iter().map(|x| x / l).collect()
    };
    let (residual, e) = data.residual(&nu);
    Ok(HalfSpaceFit { nu, e, residual })
}

/// Ladder of `φ`-rescalings at a free-boundary point.
#[derive(Clone, Debug)]
pub struct BlowupResult {
    /// Radii in descending order.
    pub radii: Vec<f64>,
    /// `∮_{∂B_1} |u^φ_{r_i} - u^φ_{r_{i+1}}|`.
    pub deviations: Vec<f64>,
    /// `u_{x0,r}` at the smallest radius.
    pub blowup: RescaledField,
    pub fit: HalfSpaceFit,
    /// False when a deviation grows along the ladder beyond tolerance.
    pub convergent: bool,
}

#[derive(Serialize)]
struct BlowupJson<'a> {
    radii: &'a [f64],
    deviations: &'a [f64],
    nu_angles: Vec<f64>,
    e: &'a [f64],
    residual: f64,
    convergent: bool,
}

impl BlowupResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&BlowupJson {
            radii: &self.radii,
            deviations: &self.deviations,
            nu_angles: normal_angles(&self.fit.nu),
            e: &self.fit.e,
            residual: self.fit.residual,
            convergent: self.convergent,
        })
        .expect("serializable")
    }
}

/// Polar angle in 2D; (polar, azimuth) with respect to `x_3` in 3D.
pub fn normal_angles(nu: &[f64]) -> Vec<f64> {
    if nu.len() == 2 {
        vec![nu[1].atan2(nu[0])]
    } else {
        vec![nu[2].clamp(-1.0, 1.0).acos(), nu[1].atan2(nu[0])]
    }
}

/// `∮_{∂B_1} |a - b|`.
pub fn sphere_l1_distance<A: FieldSampler + ?Sized, B: FieldSampler + ?Sized>(a: &A, b: &B, n_quad: usize) -> Result<f64> {
    let frame = BallFrame::unit(a.dim());
    let ta = boundary_trace(a, &frame, n_quad)?;
    let tb = boundary_trace(b, &frame, n_quad)?;
    Ok((0..ta.len())
        .map(|q| {
            let d: f64 = ta.value(q).iter().zip(tb.value(q)).map(|(x, y)| (x - y).powi(2)).sum();
            ta.weights[q] * d.sqrt()
        })
        .sum())
}

/// Deviations `∮|u^φ_{r_i} - u^φ_{r_{i+1}}|` along a descending ladder.
pub fn phi_deviations<S: FieldSampler + ?Sized>(u: &S, x0: &[f64], radii: &[f64], params: &WeissParams) -> Result<Vec<f64>> {
    let nq = u.spacing().map_or(256, |_| trace_resolution(u, radii[0]).clamp(64, 1024));
    let nq = if u.dim() == 3 { nq.min(96) } else { nq };
    radii
        .windows(2)
        .map(|p| {
            if p[0] == p[1] {
                return Ok(0.0);
            }
            let a = phi_rescale(u, x0, p[0], params)?;
            let b = phi_rescale(u, x0, p[1], params)?;
            sphere_l1_distance(&a, &b, nq)
        })
        .collect()
}

pub fn extract_blowup<S: FieldSampler + ?Sized>(
    u: &S,
    x0: &[f64],
    radii: &[f64],
    params: &WeissParams,
) -> Result<BlowupResult> {
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("blowup ladder must be strictly descending with at least two radii".into()));
    }
    check_free_boundary_point(u, x0, radii[0])?;
    let deviations = phi_deviations(u, x0, radii, params)?;
    let convergent = deviations.windows(2).all(|d| d[1] <= 1.1 * d[0] + 1e-6);
    let r_min = *radii.last().unwrap();
    let blowup = rescale(u, x0, r_min, None)?;
    let view = ScaledView::new(u, x0, r_min, 1.0 / (r_min * r_min));
    let fit = fit_half_space(&view)?;
    Ok(BlowupResult {
        radii: radii.to_vec(),
        deviations,
        blowup,
        fit,
        convergent,
    })
}
