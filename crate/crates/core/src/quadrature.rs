//! Sphere and ball quadrature centred on a [`BallFrame`].
//!
//! Balls are integrated in polar (2D) or spherical (3D) coordinates around
//! the frame centre: composite two-point Gauss-Legendre panels in the radius
//! and an angular rule whose density follows the grid spacing. Integrands see
//! the interpolated value and Jacobian of a [`FieldSampler`].

use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::BallFrame;
use crate::sampler::FieldSampler;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(npts: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(npts >= 1);
    let mut nodes = vec![0.0; npts];
    let mut weights = vec![0.0; npts];
    let nf = npts as f64;
    for i in 0..(npts + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=npts {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if npts == 1 { x } else { p1 };
            let pm = if npts == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if npts == 1 {
            x = 0.0;
            dp = 1.0;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[npts - 1 - i] = x;
        weights[i] = w;
        weights[npts - 1 - i] = w;
    }
    (nodes, weights)
}

/// Quadrature on the unit sphere `S^{n-1}`: flat directions (`n` per node)
/// and weights summing to its area.
///
/// 2D: `n_quad` equispaced angles. 3D: `n_quad` equispaced azimuths times
/// `max(n_quad / 2, 2)` Gauss nodes in the polar cosine.
pub fn unit_sphere_rule(n: usize, n_quad: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        2 => {
            let w = 2.0 * PI / n_quad as f64;
            let mut dirs = Vec::with_capacity(2 * n_quad);
            for i in 0..n_quad {
                let th = 2.0 * PI * i as f64 / n_quad as f64;
                dirs.push(th.cos());
                dirs.push(th.sin());
            }
            (dirs, vec![w; n_quad])
        }
        3 => {
            let npolar = (n_quad / 2).max(2);
            let (z, wz) = gauss_legendre(npolar);
            let dphi = 2.0 * PI / n_quad as f64;
            let mut dirs = Vec::with_capacity(3 * n_quad * npolar);
            let mut weights = Vec::with_capacity(n_quad * npolar);
            for (zi, wi) in z.iter().zip(&wz) {
                let s = (1.0 - zi * zi).sqrt();
                for j in 0..n_quad {
                    let ph = (j as f64 + 0.5) * dphi;
                    dirs.extend_from_slice(&[s * ph.cos(), s * ph.sin(), *zi]);
                    weights.push(wi * dphi);
                }
            }
            (dirs, weights)
        }
        _ => panic!("unsupported dimension {n}"),
    }
}

/// Samples of a field on `∂B_r(x0)`.
#[derive(Clone, Debug)]
pub struct BoundaryTrace {
    pub frame: BallFrame,
    pub n: usize,
    pub m: usize,
    /// Outward unit normals, `n` per node.
    pub normals: Vec<f64>,
    /// Values, `m` per node.
    pub values: Vec<f64>,
    /// Radial derivatives, `m` per node.
    pub radial: Vec<f64>,
    /// Tangential part `J (I - nu nu^T)` of the Jacobian, `m * n` per node.
    pub tangential: Vec<f64>,
    pub weights: Vec<f64>,
}

impl BoundaryTrace {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn value(&self, q: usize) -> &[f64] {
        &self.values[q * self.m..(q + 1) * self.m]
    }

    pub fn radial_derivative(&self, q: usize) -> &[f64] {
        &self.radial[q * self.m..(q + 1) * self.m]
    }

    pub fn tangential_derivative(&self, q: usize) -> &[f64] {
        let mn = self.m * self.n;
        &self.tangential[q * mn..(q + 1) * mn]
    }

    pub fn normal(&self, q: usize) -> &[f64] {
        &self.normals[q * self.n..(q + 1) * self.n]
    }

    /// Quadrature-node position.
    pub fn point(&self, q: usize) -> Vec<f64> {
        self.normal(q)
            .iter()
            .zip(&self.frame.center)
            .map(|(w, c)| c + self.frame.radius * w)
            .collect()
    }

    /// `∮ f(value, radial derivative) dS`.
    pub fn integrate<F: Fn(&[f64], &[f64]) -> f64>(&self, f: F) -> f64 {
        (0..self.len())
            .map(|q| self.weights[q] * f(self.value(q), self.radial_derivative(q)))
            .sum()
    }

    /// `∮ |u|^2 dS`.
    pub fn square_integral(&self) -> f64 {
        self.integrate(|v, _| v.iter().map(|x| x * x).sum())
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Trace of `u` on `∂B_r(x0)` with `n_quad >= 16` angular nodes per circle.
pub fn boundary_trace<S: FieldSampler + ?Sized>(
    u: &S,
    frame: &BallFrame,
    n_quad: usize,
) -> Result<BoundaryTrace> {
    let (n, m) = (u.dim(), u.components());
    if n_quad < 16 {
        return Err(Error::InvalidParameter(format!("n_quad = {n_quad} < 16")));
    }
    frame.check(n, u.half_width(), None)?;
    let (dirs, unit_w) = unit_sphere_rule(n, n_quad);
    let count = unit_w.len();
    let r = frame.radius;
    let area_scale = r.powi(n as i32 - 1);

    let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..count)
        .into_par_iter()
        .map(|q| {
            let w = &dirs[q * n..(q + 1) * n];
            let x: Vec<f64> = (0..n).map(|k| frame.center[k] + r * w[k]).collect();
            let mut v = vec![0.0; m];
            let mut j = vec![0.0; m * n];
            u.sample(&x, &mut v, &mut j).map(|_| (v, j))
        })
        .collect::<Result<_>>()?;

    let mut values = Vec::with_capacity(count * m);
    let mut radial = Vec::with_capacity(count * m);
    let mut tangential = Vec::with_capacity(count * m * n);
    for (q, (v, j)) in samples.into_iter().enumerate() {
        let w = &dirs[q * n..(q + 1) * n];
        values.extend_from_slice(&v);
        for c in 0..m {
            let row = &j[c * n..(c + 1) * n];
            let d: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
            radial.push(d);
            for k in 0..n {
                tangential.push(row[k] - d * w[k]);
            }
        }
    }
    Ok(BoundaryTrace {
        frame: frame.clone(),
        n,
        m,
        normals: dirs,
        values,
        radial,
        tangential,
        weights: unit_w.into_iter().map(|w| w * area_scale).collect(),
    })
}

/// Angular resolution used for traces of `u` on a sphere of radius `r`:
/// roughly two nodes per grid cell along a great circle, at least 64.
pub fn trace_resolution<S: FieldSampler + ?Sized>(u: &S, r: f64) -> usize {
    let ds = u.spacing().map(|h| h / 2.0).unwrap_or(r / 64.0);
    let k = ((2.0 * PI * r / ds).ceil() as usize).max(64);
    k.div_ceil(4) * 4
}

/// Default sampling length for ball integrals of `u` over `frame`.
pub fn default_spacing<S: FieldSampler + ?Sized>(u: &S, frame: &BallFrame) -> f64 {
    match (u.spacing(), u.dim()) {
        (Some(h), 2) => h / 2.0,
        (Some(h), _) => h,
        (None, 2) => frame.radius / 128.0,
        (None, _) => frame.radius / 48.0,
    }
}

/// `∫_{B_r(x0)} g(x, u, ∇u) dx` for scalar `g`.
pub fn ball_integral<S, G>(u: &S, frame: &BallFrame, g: G) -> Result<f64>
where
    S: FieldSampler + ?Sized,
    G: Fn(&[f64], &[f64], &[f64]) -> f64 + Sync,
{
    let out = ball_integrals(u, frame, 1, |x, v, j, out| out[0] = g(x, v, j))?;
    Ok(out[0])
}

/// Several integrals over the same ball in one sweep; `g` writes `k` values.
pub fn ball_integrals<S, G>(u: &S, frame: &BallFrame, k: usize, g: G) -> Result<Vec<f64>>
where
    S: FieldSampler + ?Sized,
    G: Fn(&[f64], &[f64], &[f64], &mut [f64]) + Sync,
{
    let ds = default_spacing(u, frame);
    ball_integrals_with(u, frame, ds, k, g)
}

/// As [`ball_integrals`] with an explicit sampling length `ds`.
pub fn ball_integrals_with<S, G>(
    u: &S,
    frame: &BallFrame,
    ds: f64,
    k: usize,
    g: G,
) -> Result<Vec<f64>>
where
    S: FieldSampler + ?Sized,
    G: Fn(&[f64], &[f64], &[f64], &mut [f64]) + Sync,
{
    let (n, m) = (u.dim(), u.components());
    frame.check(n, u.half_width(), u.spacing())?;
    let r = frame.radius;
    let panels = ((r / ds).ceil() as usize).max(4);
    let (gx, gw) = gauss_legendre(2);
    let pw = r / panels as f64;
    let radial: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| {
            let a = p as f64 * pw;
            gx.iter()
                .zip(&gw)
                .map(move |(x, w)| (a + 0.5 * pw * (x + 1.0), 0.5 * pw * w))
                .collect::<Vec<_>>()
        })
        .collect();

    let shells: Vec<Vec<f64>> = radial
        .par_iter()
        .map(|&(rho, wr)| {
            let nq = (((2.0 * PI * rho / ds).ceil() as usize).max(16)).div_ceil(4) * 4;
            let (dirs, wa) = unit_sphere_rule(n, nq);
            let shell_w = wr * rho.powi(n as i32 - 1);
            let mut acc = vec![0.0; k];
            let mut out = vec![0.0; k];
            let mut v = vec![0.0; m];
            let mut j = vec![0.0; m * n];
            let mut x = vec![0.0; n];
            for (q, w) in wa.iter().enumerate() {
                for d in 0..n {
                    x[d] = frame.center[d] + rho * dirs[q * n + d];
                }
                u.sample(&x, &mut v, &mut j)?;
                g(&x, &v, &j, &mut out);
                for (a, o) in acc.iter_mut().zip(&out) {
                    *a += w * o;
                }
            }
            Ok(acc.into_iter().map(|a| a * shell_w).collect())
        })
        .collect::<Result<_>>()?;

    let mut total = vec![0.0; k];
    for s in shells {
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    Ok(total)
}

/// Volume of the unit ball.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("unsupported dimension {n}"),
    }
}

/// Area of the unit sphere.
pub fn unit_sphere_area(n: usize) -> f64 {
    match n {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("unsupported dimension {n}"),
    }
}
