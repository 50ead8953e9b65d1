//! Discrete minimizers, harmonic replacements and drift solutions.
//!
//! The discrete functional on a field with Dirichlet mask is
//!
//! ```text
//! J_h(u) = sum over grid edges pq touching a free node of |u_p - u_q|^2 h^(n-2)
//!        + sum over free nodes p of 2 |u_p| h^n
//! ```
//!
//! which is the edge-wise finite-difference version of `∫ |∇u|^2 + 2|u|`.
//! It is minimized by accelerated proximal gradient (FISTA) with exact vector
//! shrinkage, function-value restarts and a monotone safeguard.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::prox_shrink_in_place;
use crate::error::{Error, Result};
use crate::grid::{gradient, norm, BallFrame, BoundaryMask, VectorField};

const CHUNK: usize = 2048;

/// Step rule for the proximal-gradient iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    /// Fixed step; `None` uses the largest stable step `h^2 / (8n)` of the
    /// normalized functional `J_h / h^n`.
    Fixed(Option<f64>),
    /// Backtracking from four times the stable step.
    Backtracking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Relative energy decrease below which the iteration may stop.
    pub tol: f64,
    /// Max-norm of the gradient mapping (in units of `Δu - u/|u|`) required
    /// together with `tol`.
    pub res_tol: f64,
    pub step: StepRule,
    pub accelerate: bool,
    /// Max-norm change between Picard iterates for drift solves.
    pub picard_tol: f64,
    pub max_picard: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 200_000,
            tol: 1e-12,
            res_tol: 1e-8,
            step: StepRule::Fixed(None),
            accelerate: true,
            picard_tol: 1e-9,
            max_picard: 100,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self, n: usize, h: f64) -> Result<()> {
        if !(self.tol > 0.0) || !(self.res_tol > 0.0) || !(self.picard_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if let StepRule::Fixed(Some(l)) = self.step {
            let stable = stable_step(n, h);
            if !(l > 0.0) || l > stable * (1.0 + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "fixed step {l} outside (0, {stable}]"
                )));
            }
        }
        Ok(())
    }
}

/// Largest step for which the smooth part's gradient is `1/step`-Lipschitz.
pub fn stable_step(n: usize, h: f64) -> f64 {
    h * h / (8.0 * n as f64)
}

/// Result of a converged solve.
#[derive(Clone, Debug)]
pub struct Solution {
    pub field: VectorField,
    pub iterations: usize,
    /// Final `J_h` (including the source term if any).
    pub energy: f64,
    /// `J_h` after every accepted step, starting with the initial guess.
    pub history: Vec<f64>,
    /// Final gradient-mapping residual.
    pub residual: f64,
}

struct Problem<'a> {
    n: usize,
    m: usize,
    h: f64,
    strides: [usize; 3],
    free: Vec<usize>,
    dirichlet: &'a [bool],
    source: Option<&'a [f64]>,
}

impl<'a> Problem<'a> {
    fn new(u: &'a VectorField, source: Option<&'a [f64]>) -> Self {
        Problem {
            n: u.spec.n,
            m: u.spec.m,
            h: u.spec.h,
            strides: u.spec.strides(),
            free: u.free_nodes(),
            dirichlet: &u.dirichlet,
            source,
        }
    }

    #[inline]
    fn laplacian(&self, u: &[f64], p: usize, c: usize) -> f64 {
        let m = self.m;
        let mut s = -2.0 * self.n as f64 * u[p * m + c];
        for k in 0..self.n {
            let st = self.strides[k];
            s += u[(p + st) * m + c] + u[(p - st) * m + c];
        }
        s / (self.h * self.h)
    }

    /// Gradient of the smooth part of `J_h / h^n` at free nodes (compact).
    fn smooth_gradient(&self, u: &[f64], out: &mut [f64]) {
        let m = self.m;
        out.par_chunks_mut(CHUNK * m)
            .zip(self.free.par_chunks(CHUNK))
            .for_each(|(o, nodes)| {
                for (i, &p) in nodes.iter().enumerate() {
                    for c in 0..m {
                        let f = self.source.map_or(0.0, |s| s[p * m + c]);
                        o[i * m + c] = -2.0 * self.laplacian(u, p, c) - 2.0 * f;
                    }
                }
            });
    }

    /// `(smooth part, nonsmooth part)` of `J_h / h^n`.
    fn energy_parts(&self, u: &[f64]) -> (f64, f64) {
        let m = self.m;
        let inv_h2 = 1.0 / (self.h * self.h);
        let partial: Vec<(f64, f64)> = self
            .free
            .par_chunks(CHUNK)
            .map(|nodes| {
                let (mut smooth, mut shrink) = (0.0, 0.0);
                for &p in nodes {
                    let up = &u[p * m..(p + 1) * m];
                    for k in 0..self.n {
                        let st = self.strides[k];
                        let q = p + st;
                        smooth += sq_dist(up, &u[q * m..(q + 1) * m]) * inv_h2;
                        let q = p - st;
                        if self.dirichlet[q] {
                            smooth += sq_dist(up, &u[q * m..(q + 1) * m]) * inv_h2;
                        }
                    }
                    if let Some(s) = self.source {
                        let f = &s[p * m..(p + 1) * m];
                        smooth -= 2.0 * up.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
                    }
                    shrink += 2.0 * norm(up);
                }
                (smooth, shrink)
            })
            .collect();
        partial
            .into_iter()
            .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1))
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let (a, b) = self.energy_parts(u);
        a + b
    }

    /// `(J_h(z) - J_h(x)) / h^n`, summed edge by edge so that the difference
    /// keeps its relative accuracy when the two energies agree to rounding.
    fn energy_delta(&self, x: &[f64], z: &[f64]) -> f64 {
        let m = self.m;
        let inv_h2 = 1.0 / (self.h * self.h);
        let edge = |p: usize, q: usize| -> f64 {
            (0..m)
                .map(|c| {
                    let dz = z[p * m + c] - z[q * m + c];
                    let dx = x[p * m + c] - x[q * m + c];
                    (dz - dx) * (dz + dx)
                })
                .sum::<f64>()
                * inv_h2
        };
        let partial: Vec<f64> = self
            .free
            .par_chunks(CHUNK)
            .map(|nodes| {
                let mut acc = 0.0;
                for &p in nodes {
                    for k in 0..self.n {
                        let st = self.strides[k];
                        acc += edge(p, p + st);
                        if self.dirichlet[p - st] {
                            acc += edge(p, p - st);
                        }
                    }
                    let (zp, xp) = (&z[p * m..(p + 1) * m], &x[p * m..(p + 1) * m]);
                    if let Some(s) = self.source {
                        let f = &s[p * m..(p + 1) * m];
                        acc -= 2.0 * (0..m).map(|c| f[c] * (zp[c] - xp[c])).sum::<f64>();
                    }
                    acc += 2.0 * (norm(zp) - norm(xp));
                }
                acc
            })
            .collect();
        partial.into_iter().sum()
    }

    /// Proximal step from `y` with step `lam`; writes the result into `z`
    /// (Dirichlet entries must already agree) and returns the gradient
    /// mapping residual.
    fn prox_step(&self, y: &[f64], grad: &[f64], lam: f64, z: &mut [f64], scratch: &mut [f64]) -> f64 {
        let m = self.m;
        let res: Vec<f64> = scratch
            .par_chunks_mut(CHUNK * m)
            .zip(self.free.par_chunks(CHUNK))
            .zip(grad.par_chunks(CHUNK * m))
            .map(|((s, nodes), g)| {
                let mut worst: f64 = 0.0;
                for (i, &p) in nodes.iter().enumerate() {
                    let w = &mut s[i * m..(i + 1) * m];
                    for c in 0..m {
                        w[c] = y[p * m + c] - lam * g[i * m + c];
                    }
                    prox_shrink_in_place(w, lam);
                    for c in 0..m {
                        worst = worst.max((y[p * m + c] - w[c]).abs());
                    }
                }
                worst
            })
            .collect();
        for (i, &p) in self.free.iter().enumerate() {
            z[p * m..(p + 1) * m].copy_from_slice(&scratch[i * m..(i + 1) * m]);
        }
        res.into_iter().fold(0.0, f64::max) / (2.0 * lam)
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_finite(u: &VectorField) -> Result<()> {
    let m = u.spec.m;
    if let Some(pos) = u.values.iter().position(|v| !v.is_finite()) {
        let mi = u.spec.multi_index(pos / m);
        return Err(Error::NonFinite {
            node: mi[..u.spec.n].to_vec(),
        });
    }
    Ok(())
}

/// `J_h(u)` with respect to the mask stored in `u`.
pub fn discrete_energy(u: &VectorField) -> f64 {
    let prob = Problem::new(u, None);
    prob.energy(&u.values) * u.spec.h.powi(u.spec.n as i32)
}

/// `J_h` restricted to the nodes strictly inside `frame` (edges touching
/// them), the localized energy compared in almost-minimality checks.
pub fn local_energy(u: &VectorField, frame: &BallFrame) -> f64 {
    let local = u.clone().with_mask(&BoundaryMask::OutsideBall(frame.clone()));
    discrete_energy(&local)
}

/// Minimizes `J_h` with the Dirichlet values of `init`; free values of
/// `init` serve as the starting guess.
pub fn minimize(init: &VectorField, opts: &SolveOptions) -> Result<Solution> {
    minimize_with_source(init, None, opts)
}

/// Minimizes `J_h(u) - 2 h^n sum_p <f_p, u_p>` over free nodes. `source`
/// holds `m` entries per node.
pub fn minimize_with_source(
    init: &VectorField,
    source: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<Solution> {
    let spec = &init.spec;
    opts.validate(spec.n, spec.h)?;
    check_finite(init)?;
    if let Some(s) = source {
        if s.len() != init.values.len() {
            return Err(Error::InvalidParameter(format!(
                "source has {} entries, expected {}",
                s.len(),
                init.values.len()
            )));
        }
    }
    let prob = Problem::new(init, source);
    let scale = spec.h.powi(spec.n as i32);
    let m = spec.m;

    let mut x = init.values.clone();
    let mut fx = prob.energy(&x);
    let mut history = vec![fx * scale];
    if prob.free.is_empty() {
        return Ok(Solution {
            field: init.clone(),
            iterations: 0,
            energy: fx * scale,
            history,
            residual: 0.0,
        });
    }

    let stable = stable_step(spec.n, spec.h);
    let mut lam = match opts.step {
        StepRule::Fixed(Some(l)) => l,
        StepRule::Fixed(None) => stable,
        StepRule::Backtracking => 4.0 * stable,
    };
    let backtrack = opts.step == StepRule::Backtracking;

    let nfree = prob.free.len();
    let mut y = x.clone();
    let mut z = x.clone();
    let mut grad = vec![0.0; nfree * m];
    let mut scratch = vec![0.0; nfree * m];
    let mut t = 1.0f64;

    // One proximal step from `from`, with backtracking if requested;
    // returns the gradient-mapping residual.
    let step = |from: &[f64], lam: &mut f64, grad: &mut [f64], z: &mut [f64], scratch: &mut [f64]| -> f64 {
        prob.smooth_gradient(from, grad);
        if !backtrack {
            return prob.prox_step(from, grad, *lam, z, scratch);
        }
        let s_from = prob.energy_parts(from).0;
        loop {
            let res = prob.prox_step(from, grad, *lam, z, scratch);
            let s_z = prob.energy_parts(z).0;
            let mut lin = 0.0;
            let mut quad = 0.0;
            for (i, &p) in prob.free.iter().enumerate() {
                for c in 0..m {
                    let d = z[p * m + c] - from[p * m + c];
                    lin += grad[i * m + c] * d;
                    quad += d * d;
                }
            }
            if s_z <= s_from + lin + quad / (2.0 * *lam) + 1e-14 * s_from.abs() || *lam <= stable {
                return res;
            }
            *lam *= 0.5;
        }
    };

    for it in 1..=opts.max_iters {
        let mut res = step(&y, &mut lam, &mut grad, &mut z, &mut scratch);
        let mut dz = prob.energy_delta(&x, &z);
        if dz > 0.0 {
            // Momentum overshoot: restart from the current iterate.
            t = 1.0;
            y.copy_from_slice(&x);
            res = step(&x, &mut lam, &mut grad, &mut z, &mut scratch);
            dz = prob.energy_delta(&x, &z);
            if dz > 0.0 {
                // Even the plain step cannot decrease the energy: rounding floor.
                let energy = prob.energy(&x) * scale;
                let mut field = init.clone();
                field.values = x;
                return Ok(Solution {
                    field,
                    iterations: it,
                    energy,
                    history,
                    residual: res,
                });
            }
        }
        let fz = fx + dz;
        let rel = -dz / fx.abs().max(f64::MIN_POSITIVE);
        if opts.accelerate {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            for &p in &prob.free {
                for c in 0..m {
                    let i = p * m + c;
                    y[i] = z[i] + beta * (z[i] - x[i]);
                }
            }
            t = t_next;
        } else {
            y.copy_from_slice(&z);
        }
        std::mem::swap(&mut x, &mut z);
        fx = fz;
        history.push(fx * scale);
        if rel < opts.tol && res < opts.res_tol {
            let energy = prob.energy(&x) * scale;
            let mut field = init.clone();
            field.values = x;
            return Ok(Solution {
                field,
                iterations: it,
                energy,
                history,
                residual: res,
            });
        }
    }
    let mut field = init.clone();
    field.values = x;
    Err(Error::NotConverged {
        iterations: opts.max_iters,
        last_energy: fx * scale,
        history,
        last_iterate: Some(Box::new(field)),
    })
}

/// Replaces the values strictly inside `frame` by the discrete harmonic
/// extension of the surrounding values (5/7-point Laplacian, CG to relative
/// residual `1e-10`).
pub fn harmonic_replacement(u: &VectorField, frame: &BallFrame) -> Result<VectorField> {
    let spec = &u.spec;
    frame.check(spec.n, Some(spec.half_width), Some(spec.h))?;
    let (n, m) = (spec.n, spec.m);
    let strides = spec.strides();
    let mut inside = vec![usize::MAX; spec.node_count()];
    let mut nodes = Vec::new();
    let mut x = [0.0; 3];
    for idx in 0..spec.node_count() {
        spec.node_point(idx, &mut x);
        if frame.distance(&x[..n]) < frame.radius && !spec.on_face(idx) {
            inside[idx] = nodes.len();
            nodes.push(idx);
        }
    }
    let mut out = u.clone();
    let k = nodes.len();
    if k == 0 {
        return Ok(out);
    }
    let diag = 2.0 * n as f64;
    let apply = |v: &[f64], av: &mut [f64]| {
        for (i, &p) in nodes.iter().enumerate() {
            let mut s = diag * v[i];
            for d in 0..n {
                for q in [p + strides[d], p - strides[d]] {
                    if inside[q] != usize::MAX {
                        s -= v[inside[q]];
                    }
                }
            }
            av[i] = s;
        }
    };
    for c in 0..m {
        // Solve for the deviation from the mean boundary value so that
        // constant data is reproduced exactly.
        let mut b = vec![0.0; k];
        let mut outer = vec![0.0; k];
        let (mut sum, mut count) = (0.0, 0.0);
        for (i, &p) in nodes.iter().enumerate() {
            for d in 0..n {
                for q in [p + strides[d], p - strides[d]] {
                    if inside[q] == usize::MAX {
                        b[i] += u.values[q * m + c];
                        outer[i] += 1.0;
                        sum += u.values[q * m + c];
                        count += 1.0;
                    }
                }
            }
        }
        let mean = sum / count;
        for (bi, oi) in b.iter_mut().zip(&outer) {
            *bi -= mean * oi;
        }
        let sol = conjugate_gradient(&apply, &b, 1e-10, 20 * k + 100)?;
        for (i, &p) in nodes.iter().enumerate() {
            out.values[p * m + c] = mean + sol[i];
        }
    }
    Ok(out)
}

fn conjugate_gradient<A: Fn(&[f64], &mut [f64])>(apply: &A, b: &[f64], rel_tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let k = b.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; k];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; k];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let mut history = Vec::new();
    for _ in 0..max_iters {
        let rel = rr.sqrt() / bnorm;
        history.push(rel);
        if rel <= rel_tol {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rr / pap;
        for i in 0..k {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        for i in 0..k {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::CgNotConverged {
        iterations: max_iters,
        residual: rr.sqrt() / bnorm,
        history,
    })
}

/// Velocity field `b` (n components per node) and the integrability
/// exponent `p > n` used for the predicted gauge exponent `1 - n/p`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftSpec {
    pub b: Vec<f64>,
    pub p: f64,
}

impl DriftSpec {
    pub fn constant(spec: &crate::grid::GridSpec, b: &[f64], p: f64) -> Result<Self> {
        if b.len() != spec.n {
            return Err(Error::InvalidParameter(format!(
                "drift has {} components, expected {}",
                b.len(),
                spec.n
            )));
        }
        let d = DriftSpec {
            b: b.repeat(spec.node_count()),
            p,
        };
        d.validate(spec)?;
        Ok(d)
    }

    pub fn validate(&self, spec: &crate::grid::GridSpec) -> Result<()> {
        if !(self.p > spec.n as f64) {
            return Err(Error::InvalidParameter(format!("p = {} must exceed n = {}", self.p, spec.n)));
        }
        if self.b.len() != spec.node_count() * spec.n {
            return Err(Error::InvalidParameter("drift field has the wrong length".into()));
        }
        if let Some(pos) = self.b.iter().position(|v| !v.is_finite()) {
            let mi = spec.multi_index(pos / spec.n);
            return Err(Error::NonFinite {
                node: mi[..spec.n].to_vec(),
            });
        }
        Ok(())
    }

    /// `1 - n/p`.
    pub fn predicted_exponent(&self, n: usize) -> f64 {
        1.0 - n as f64 / self.p
    }
}

#[derive(Clone, Debug)]
pub struct DriftSolution {
    pub solution: Solution,
    pub picard_iterations: usize,
    /// Max-norm change of the last Picard step.
    pub picard_change: f64,
}

/// Picard iteration for `Δu + (b·∇)u = u/|u| χ{|u|>0}`: each step minimizes
/// the functional with the drift term frozen from the previous iterate.
pub fn solve_drift(init: &VectorField, drift: &DriftSpec, opts: &SolveOptions) -> Result<DriftSolution> {
    let spec = &init.spec;
    drift.validate(spec)?;
    let (n, m) = (spec.n, spec.m);
    let mut current = minimize(init, opts)?;
    let initial_norm = current.field.sup_norm().max(init.sup_norm());
    let mut source = vec![0.0; init.values.len()];
    let mut change = f64::INFINITY;
    for k in 1..=opts.max_picard {
        let grad = gradient(&current.field);
        for p in 0..spec.node_count() {
            let b = &drift.b[p * n..(p + 1) * n];
            for c in 0..m {
                let g = &grad[(p * m + c) * n..(p * m + c + 1) * n];
                source[p * m + c] = b.iter().zip(g).map(|(x, y)| x * y).sum();
            }
        }
        let next = minimize_with_source(&current.field, Some(&source), opts)?;
        let nrm = next.field.sup_norm();
        if nrm > 10.0 * initial_norm && nrm > 0.0 {
            return Err(Error::PicardDiverged {
                norm: nrm,
                initial: initial_norm,
            });
        }
        change = next
            .field
            .values
            .iter()
            .zip(&current.field.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        current = next;
        if change < opts.picard_tol {
            return Ok(DriftSolution {
                solution: current,
                picard_iterations: k,
                picard_change: change,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_picard,
        last_energy: current.energy,
        history: vec![change],
        last_iterate: Some(Box::new(current.field)),
    })
}

/// Node-wise `|Δ_h u - u/|u||` on nodes with `|u| > eps_u` whose 3^n
/// neighbourhood is free; zero elsewhere.
pub fn system_residual(u: &VectorField, eps_u: f64) -> Vec<f64> {
    let spec = &u.spec;
    let (n, m) = (spec.n, spec.m);
    let strides = spec.strides();
    let h2 = spec.h * spec.h;
    let np = spec.nodes_per_axis();
    (0..spec.node_count())
        .into_par_iter()
        .map(|p| {
            let mag = u.magnitude(p);
            if mag <= eps_u || u.dirichlet[p] {
                return 0.0;
            }
            let mi = spec.multi_index(p);
            if mi[..n].iter().any(|&i| i == 0 || i + 1 >= np) {
                return 0.0;
            }
            if !neighbourhood_free(u, p, n, &strides) {
                return 0.0;
            }
            let mut acc = 0.0;
            for c in 0..m {
                let mut lap = -2.0 * n as f64 * u.values[p * m + c];
                for d in 0..n {
                    lap += u.values[(p + strides[d]) * m + c] + u.values[(p - strides[d]) * m + c];
                }
                let r = lap / h2 - u.values[p * m + c] / mag;
                acc += r * r;
            }
            acc.sqrt()
        })
        .collect()
}

fn neighbourhood_free(u: &VectorField, p: usize, n: usize, strides: &[usize; 3]) -> bool {
    let offsets: &[isize] = &[-1, 0, 1];
    let s = [strides[0] as isize, strides[1] as isize, strides[2] as isize];
    let p = p as isize;
    if n == 2 {
        for &a in offsets {
            for &b in offsets {
                if u.dirichlet[(p + a * s[0] + b * s[1]) as usize] {
                    return false;
                }
            }
        }
    } else {
        for &a in offsets {
            for &b in offsets {
                for &c in offsets {
                    if u.dirichlet[(p + a * s[0] + b * s[1] + c * s[2]) as usize] {
                        return false;
                    }
                }
            }
        }
    }
    true
}
