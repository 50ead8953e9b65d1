//! Point evaluation of fields together with their Jacobians.
//!
//! Every integral in the crate is assembled from pointwise samples, so grid
//! fields and analytic fields share one interface. Grid fields are evaluated
//! with tensor-product Catmull-Rom interpolation, which reproduces
//! polynomials of degree two in each variable exactly and is `C^1` across
//! cells.

use crate::error::{Error, Result};
use crate::grid::{norm, VectorField};

/// A field `R^n -> R^m` that can be evaluated with its Jacobian.
///
/// Jacobians are row-major `m x n`: `jac[c * n + k] = d u_c / d x_k`.
pub trait FieldSampler: Sync {
    fn dim(&self) -> usize;
    fn components(&self) -> usize;
    fn sample(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> Result<()>;

    fn eval(&self, x: &[f64], value: &mut [f64]) -> Result<()> {
        let mut jac = vec![0.0; self.components() * self.dim()];
        self.sample(x, value, &mut jac)
    }

    /// Grid spacing when the field is discrete.
    fn spacing(&self) -> Option<f64> {
        None
    }

    /// Half-width `L` of the cube `[-L, L]^n` the field lives on, if bounded.
    fn half_width(&self) -> Option<f64> {
        None
    }
}

impl<S: FieldSampler + ?Sized> FieldSampler for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn components(&self) -> usize {
        (**self).components()
    }
    fn sample(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> Result<()> {
        (**self).sample(x, value, jac)
    }
    fn eval(&self, x: &[f64], value: &mut [f64]) -> Result<()> {
        (**self).eval(x, value)
    }
    fn spacing(&self) -> Option<f64> {
        (**self).spacing()
    }
    fn half_width(&self) -> Option<f64> {
        (**self).half_width()
    }
}

#[inline]
fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

/// One-axis stencil: first node index and weights for four consecutive
/// nodes. Ghost nodes beyond the faces use quadratic extrapolation.
#[inline]
fn axis_stencil(s: f64, cells: usize, inv_h: f64) -> (usize, [f64; 4], [f64; 4]) {
    let i = (s.floor().max(0.0) as usize).min(cells - 1);
    let t = s - i as f64;
    let (w, d) = catmull_rom(t);
    let d = d.map(|v| v * inv_h);
    if i == 0 {
        let fold = |a: [f64; 4]| [a[1] + 3.0 * a[0], a[2] - 3.0 * a[0], a[3] + a[0], 0.0];
        (0, fold(w), fold(d))
    } else if i == cells - 1 {
        let fold = |a: [f64; 4]| [0.0, a[0] + a[3], a[1] - 3.0 * a[3], a[2] + 3.0 * a[3]];
        (cells - 3, fold(w), fold(d))
    } else {
        (i - 1, w, d)
    }
}

impl FieldSampler for VectorField {
    fn dim(&self) -> usize {
        self.spec.n
    }

    fn components(&self) -> usize {
        self.spec.m
    }

    fn sample(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let spec = &self.spec;
        let (n, m) = (spec.n, spec.m);
        if !spec.contains(x) {
            return Err(Error::OutsideDomain { point: x[..n].to_vec() });
        }
        let cells = spec.cells();
        let inv_h = 1.0 / spec.h;
        let strides = spec.strides();
        let mut start = [0usize; 3];
        let mut w = [[0.0; 4]; 3];
        let mut dw = [[0.0; 4]; 3];
        for k in 0..n {
            let s = (x[k] + spec.half_width) * inv_h;
            let (i0, wk, dk) = axis_stencil(s, cells, inv_h);
            start[k] = i0;
            w[k] = wk;
            dw[k] = dk;
        }
        value[..m].fill(0.0);
        jac[..m * n].fill(0.0);
        let vals = &self.values;
        if n == 2 {
            for a in 0..4 {
                let row = (start[0] + a) * strides[0];
                for b in 0..4 {
                    let idx = row + (start[1] + b) * strides[1];
                    let wv = w[0][a] * w[1][b];
                    let g0 = dw[0][a] * w[1][b];
                    let g1 = w[0][a] * dw[1][b];
                    let base = idx * m;
                    for c in 0..m {
                        let u = vals[base + c];
                        value[c] += wv * u;
                        jac[c * 2] += g0 * u;
                        jac[c * 2 + 1] += g1 * u;
                    }
                }
            }
        } else {
            for a in 0..4 {
                let pa = (start[0] + a) * strides[0];
                for b in 0..4 {
                    let pb = pa + (start[1] + b) * strides[1];
                    let wab = w[0][a] * w[1][b];
                    let dab0 = dw[0][a] * w[1][b];
                    let dab1 = w[0][a] * dw[1][b];
                    for cc in 0..4 {
                        let idx = pb + (start[2] + cc) * strides[2];
                        let wv = wab * w[2][cc];
                        let g0 = dab0 * w[2][cc];
                        let g1 = dab1 * w[2][cc];
                        let g2 = wab * dw[2][cc];
                        let base = idx * m;
                        for c in 0..m {
                            let u = vals[base + c];
                            value[c] += wv * u;
                            jac[c * 3] += g0 * u;
                            jac[c * 3 + 1] += g1 * u;
                            jac[c * 3 + 2] += g2 * u;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn spacing(&self) -> Option<f64> {
        Some(self.spec.h)
    }

    fn half_width(&self) -> Option<f64> {
        Some(self.spec.half_width)
    }
}

/// The half-space solution `scale * max(x.nu, 0)^2 / 2 * e`.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSpace {
    pub nu: Vec<f64>,
    pub e: Vec<f64>,
    pub scale: f64,
}

impl HalfSpace {
    /// Both directions must be unit vectors to 1e-12.
    pub fn new(nu: &[f64], e: &[f64]) -> Result<Self> {
        for (name, v) in [("nu", nu), ("e", e)] {
            if v.is_empty() || (norm(v) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v:?} is not a unit vector"
                )));
            }
        }
        if nu.len() != 2 && nu.len() != 3 {
            return Err(Error::InvalidParameter(format!("nu has dimension {}", nu.len())));
        }
        Ok(HalfSpace {
            nu: nu.to_vec(),
            e: e.to_vec(),
            scale: 1.0,
        })
    }

    /// Normal at `angle` (radians) from `e_1` in the `x_1 x_2` plane.
    pub fn planar(n: usize, angle: f64, e: &[f64]) -> Result<Self> {
        let mut nu = vec![0.0; n];
        nu[0] = angle.cos();
        nu[1] = angle.sin();
        HalfSpace::new(&nu, e)
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.scale *= factor;
        self
    }

    /// Value at `x` written into `out`.
    pub fn value_at(&self, x: &[f64], out: &mut [f64]) {
        let s = dot(x, &self.nu).max(0.0);
        let amp = self.scale * 0.5 * s * s;
        for (o, e) in out.iter_mut().zip(&self.e) {
            *o = amp * e;
        }
    }
}

impl FieldSampler for HalfSpace {
    fn dim(&self) -> usize {
        self.nu.len()
    }

    fn components(&self) -> usize {
        self.e.len()
    }

    fn sample(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let n = self.nu.len();
        let s = dot(x, &self.nu).max(0.0);
        for (c, e) in self.e.iter().enumerate() {
            value[c] = self.scale * 0.5 * s * s * e;
            for k in 0..n {
                jac[c * n + k] = self.scale * s * self.nu[k] * e;
            }
        }
        Ok(())
    }
}

/// Wraps a closure `x -> R^m`; Jacobians by central differences.
pub struct FnField<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(n: usize, m: usize, f: F) -> Self {
        FnField { n, m, f }
    }
}

impl<F> FieldSampler for FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }

    fn components(&self) -> usize {
        self.m
    }

    fn eval(&self, x: &[f64], value: &mut [f64]) -> Result<()> {
        (self.f)(x, value);
        Ok(())
    }

    fn sample(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let (n, m) = (self.n, self.m);
        (self.f)(x, value);
        let mut xp = [0.0; 3];
        let mut xm = [0.0; 3];
        let mut vp = vec![0.0; m];
        let mut vm = vec![0.0; m];
        for k in 0..n {
            xp[..n].copy_from_slice(&x[..n]);
            xm[..n].copy_from_slice(&x[..n]);
            let step = 1e-6 * x[k].abs().max(1.0);
            xp[k] += step;
            xm[k] -= step;
            (self.f)(&xp[..n], &mut vp);
            (self.f)(&xm[..n], &mut vm);
            for c in 0..m {
                jac[c * n + k] = (vp[c] - vm[c]) / (xp[k] - xm[k]);
            }
        }
        Ok(())
    }
}

/// `x -> factor * u(center + radius * x)`; covers both the quadratic
/// rescaling (`factor = 1/r^2`) and the almost-homogeneous one
/// (`factor = 1/phi(r)`).
pub struct ScaledView<S> {
    pub inner: S,
    pub center: Vec<f64>,
    pub radius: f64,
    pub factor: f64,
}

impl<S: FieldSampler> ScaledView<S> {
    pub fn new(inner: S, center: &[f64], radius: f64, factor: f64) -> Self {
        ScaledView {
            inner,
            center: center.to_vec(),
            radius,
            factor,
        }
    }
}

impl<S: FieldSampler> FieldSampler for ScaledView<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn components(&self) -> usize {
        self.inner.components()
    }

    fn sample(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let n = self.dim();
        let mut y = [0.0; 3];
        for k in 0..n {
            y[k] = self.center[k] + self.radius * x[k];
        }
        self.inner.sample(&y[..n], value, jac)?;
        let m = self.components();
        for v in value[..m].iter_mut() {
            *v *= self.factor;
        }
        let jf = self.factor * self.radius;
        for v in jac[..m * n].iter_mut() {
            *v *= jf;
        }
        Ok(())
    }

    fn spacing(&self) -> Option<f64> {
        self.inner.spacing().map(|h| h / self.radius)
    }
}

/// Degree-two homogeneous extension `c(x) = |x|^2 g(x/|x|)` of the trace of
/// `g` on the unit sphere.
pub struct HomogeneousExtension<S> {
    pub profile: S,
}

impl<S: FieldSampler> HomogeneousExtension<S> {
    pub fn new(profile: S) -> Self {
        HomogeneousExtension { profile }
    }
}

impl<S: FieldSampler> FieldSampler for HomogeneousExtension<S> {
    fn dim(&self) -> usize {
        self.profile.dim()
    }

    fn components(&self) -> usize {
        self.profile.components()
    }

    fn sample(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let (n, m) = (self.dim(), self.components());
        let rho = norm(&x[..n]);
        if rho == 0.0 {
            value[..m].fill(0.0);
            jac[..m * n].fill(0.0);
            return Ok(());
        }
        let mut omega = [0.0; 3];
        for k in 0..n {
            omega[k] = x[k] / rho;
        }
        self.profile.sample(&omega[..n], value, jac)?;
        // grad c = rho * [2 g (x) omega + grad g (I - omega omega^T)]
        for c in 0..m {
            let row = &mut jac[c * n..(c + 1) * n];
            let radial: f64 = (0..n).map(|k| row[k] * omega[k]).sum();
            for k in 0..n {
                row[k] = rho * (row[k] - radial * omega[k] + 2.0 * value[c] * omega[k]);
            }
            value[c] *= rho * rho;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
