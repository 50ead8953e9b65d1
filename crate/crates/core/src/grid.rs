//! Uniform Cartesian grids over the cube `[-L, L]^n` and vector-valued
//! fields sampled on them.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid over `[-L, L]^n` carrying `m` components per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub m: usize,
    pub h: f64,
    #[serde(rename = "L")]
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(n: usize, m: usize, h: f64, half_width: f64) -> Result<Self> {
        let spec = GridSpec {
            n,
            m,
            h,
            half_width,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n == 2 || self.n == 3) {
            return Err(Error::InvalidGrid(format!("dimension n={} not in {{2,3}}", self.n)));
        }
        if self.m == 0 {
            return Err(Error::InvalidGrid("codomain dimension m must be >= 1".into()));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing h={} must be positive", self.h)));
        }
        if !(self.half_width.is_finite() && self.half_width >= 1.0) {
            return Err(Error::InvalidGrid(format!(
                "half-width L={} must be >= 1",
                self.half_width
            )));
        }
        let cells = 2.0 * self.half_width / self.h;
        if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "2L/h = {cells} is not an integer"
            )));
        }
        Ok(())
    }

    /// Number of cells per axis, `2L/h`.
    pub fn cells(&self) -> usize {
        (2.0 * self.half_width / self.h).round() as usize
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.cells() + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(self.n as u32)
    }

    /// Coordinate of node index `i` along any axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.h
    }

    /// Linear-index strides; the last axis varies fastest.
    pub fn strides(&self) -> [usize; 3] {
        let np = self.nodes_per_axis();
        match self.n {
            2 => [np, 1, 0],
            _ => [np * np, np, 1],
        }
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let np = self.nodes_per_axis();
        let mut out = [0usize; 3];
        let mut rest = idx;
        for k in (0..self.n).rev() {
            out[k] = rest % np;
            rest /= np;
        }
        out
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        let np = self.nodes_per_axis();
        multi[..self.n].iter().fold(0, |acc, &i| acc * np + i)
    }

    /// Physical coordinates of node `idx`, written into `out[..n]`.
    pub fn node_point(&self, idx: usize, out: &mut [f64]) {
        let multi = self.multi_index(idx);
        for k in 0..self.n {
            out[k] = self.coord(multi[k]);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let slack = 1e-12 * self.half_width;
        x[..self.n]
            .iter()
            .all(|&c| c.is_finite() && c.abs() <= self.half_width + slack)
    }

    /// Node on a face of the cube.
    pub fn on_face(&self, idx: usize) -> bool {
        let last = self.cells();
        let multi = self.multi_index(idx);
        multi[..self.n].iter().any(|&i| i == 0 || i == last)
    }
}

/// Ball `B_r(x0)`; every analysis quantity is localized on one of these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallFrame {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BallFrame {
    pub fn new(center: &[f64], radius: f64) -> Self {
        BallFrame {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn unit(n: usize) -> Self {
        BallFrame {
            center: vec![0.0; n],
            radius: 1.0,
        }
    }

    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidFrame {
            center: self.center.clone(),
            radius: self.radius,
            reason: reason.into(),
        }
    }

    /// Checks the ball against an optional cube half-width and an optional
    /// grid spacing (resolution floor `r >= 4h`).
    pub fn check(&self, n: usize, half_width: Option<f64>, h: Option<f64>) -> Result<()> {
        if self.center.len() != n {
            return Err(self.invalid(format!("center has {} coordinates, expected {n}", self.center.len())));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(self.invalid("radius must be positive"));
        }
        if let Some(l) = half_width {
            let slack = 1e-12 * l;
            if self.center.iter().any(|&c| c.abs() + self.radius > l + slack) {
                return Err(self.invalid("closed ball leaves the grid cube"));
            }
        }
        if let Some(h) = h {
            if self.radius < 4.0 * h * (1.0 - 1e-12) {
                return Err(Error::Resolution(format!(
                    "radius {} below the floor 4h = {}",
                    self.radius,
                    4.0 * h
                )));
            }
        }
        Ok(())
    }

    /// `|x - x0|`.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.center
            .iter()
            .zip(x)
            .map(|(c, v)| (v - c) * (v - c))
            .sum::<f64>()
            .sqrt()
    }
}

/// Which nodes carry frozen (Dirichlet) values.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryMask {
    /// Nodes with `|x| >= 1` plus the cube faces.
    OutsideUnitBall,
    /// Cube faces only.
    Faces,
    /// Nodes with `|x - x0| >= r` plus the cube faces.
    OutsideBall(BallFrame),
}

impl BoundaryMask {
    fn is_dirichlet(&self, spec: &GridSpec, idx: usize, x: &[f64]) -> bool {
        if spec.on_face(idx) {
            return true;
        }
        match self {
            BoundaryMask::OutsideUnitBall => norm(x) >= 1.0,
            BoundaryMask::Faces => false,
            BoundaryMask::OutsideBall(frame) => frame.distance(x) >= frame.radius,
        }
    }
}

/// Discrete field `u: grid -> R^m`, node-major (the `m` components of a
/// node are contiguous).
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub dirichlet: Vec<bool>,
}

impl VectorField {
    pub fn zeros(spec: &GridSpec, mask: &BoundaryMask) -> Self {
        let count = spec.node_count();
        let mut dirichlet = vec![false; count];
        let mut x = [0.0; 3];
        for (idx, flag) in dirichlet.iter_mut().enumerate() {
            spec.node_point(idx, &mut x);
            *flag = mask.is_dirichlet(spec, idx, &x[..spec.n]);
        }
        VectorField {
            spec: spec.clone(),
            values: vec![0.0; count * spec.m],
            dirichlet,
        }
    }

    #[inline]
    pub fn value(&self, idx: usize) -> &[f64] {
        let m = self.spec.m;
        &self.values[idx * m..(idx + 1) * m]
    }

    #[inline]
    pub fn value_mut(&mut self, idx: usize) -> &mut [f64] {
        let m = self.spec.m;
        &mut self.values[idx * m..(idx + 1) * m]
    }

    /// Euclidean norm of the node value.
    #[inline]
    pub fn magnitude(&self, idx: usize) -> f64 {
        norm(self.value(idx))
    }

    pub fn node_count(&self) -> usize {
        self.dirichlet.len()
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.node_count())
            .map(|i| self.magnitude(i))
            .fold(0.0, f64::max)
    }

    /// Replaces the Dirichlet mask, keeping the values.
    pub fn with_mask(mut self, mask: &BoundaryMask) -> Self {
        let mut x = [0.0; 3];
        for idx in 0..self.node_count() {
            self.spec.node_point(idx, &mut x);
            self.dirichlet[idx] = mask.is_dirichlet(&self.spec, idx, &x[..self.spec.n]);
        }
        self
    }

    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| !self.dirichlet[i]).collect()
    }

    /// Writes the CSV serialization: a first line `n,m,h,L`, then one row
    /// `i1,..,in,u1,..,um` per node in lexicographic order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.spec;
        writeln!(w, "{},{},{},{}", s.n, s.m, s.h, s.half_width)?;
        let mut line = String::new();
        for idx in 0..self.node_count() {
            line.clear();
            let multi = s.multi_index(idx);
            for (k, i) in multi[..s.n].iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&i.to_string());
            }
            for v in self.value(idx) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Parses the CSV serialization; the Dirichlet mask is rebuilt from `mask`.
    pub fn read_csv<R: BufRead>(r: R, mask: &BoundaryMask) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty file".into()))??;
        let parts: Vec<&str> = header.trim().split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!("header `{header}` is not `n,m,h,L`")));
        }
        let parse_err = |what: &str, s: &str| Error::Parse(format!("bad {what} `{s}`"));
        let n: usize = parts[0].parse().map_err(|_| parse_err("n", parts[0]))?;
        let m: usize = parts[1].parse().map_err(|_| parse_err("m", parts[1]))?;
        let h: f64 = parts[2].parse().map_err(|_| parse_err("h", parts[2]))?;
        let l: f64 = parts[3].parse().map_err(|_| parse_err("L", parts[3]))?;
        let spec = GridSpec::new(n, m, h, l).map_err(|e| Error::Parse(e.to_string()))?;
        let mut field = VectorField::zeros(&spec, mask);
        let count = spec.node_count();
        let np = spec.nodes_per_axis();
        let mut seen = 0usize;
        let mut multi = [0usize; 3];
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != n + m {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 2,
                    n + m,
                    cols.len()
                )));
            }
            for k in 0..n {
                multi[k] = cols[k]
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad index `{}`", lineno + 2, cols[k])))?;
                if multi[k] >= np {
                    return Err(Error::Parse(format!("line {}: index out of range", lineno + 2)));
                }
            }
            let idx = spec.linear_index(&multi);
            for c in 0..m {
                let v: f64 = cols[n + c]
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad value `{}`", lineno + 2, cols[n + c])))?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        node: multi[..n].to_vec(),
                    });
                }
                field.value_mut(idx)[c] = v;
            }
            seen += 1;
        }
        if seen != count {
            return Err(Error::Parse(format!("expected {count} node rows, found {seen}")));
        }
        Ok(field)
    }
}

/// Builds a field from a pointwise initializer `x -> R^m`.
pub fn make_field<F>(spec: &GridSpec, mask: &BoundaryMask, mut init: F) -> Result<VectorField>
where
    F: FnMut(&[f64], &mut [f64]),
{
    spec.validate()?;
    let mut field = VectorField::zeros(spec, mask);
    let mut x = [0.0; 3];
    for idx in 0..spec.node_count() {
        spec.node_point(idx, &mut x);
        let out = field.value_mut(idx);
        init(&x[..spec.n], out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                node: spec.multi_index(idx)[..spec.n].to_vec(),
            });
        }
    }
    Ok(field)
}

/// Per-node Jacobian `m x n` (row-major, `du_c/dx_k` at `c*n + k`):
/// second-order central differences inside, second-order one-sided at faces.
pub fn gradient(u: &VectorField) -> Vec<f64> {
    let spec = &u.spec;
    let (n, m, h) = (spec.n, spec.m, spec.h);
    let last = spec.cells();
    let strides = spec.strides();
    let mut out = vec![0.0; u.node_count() * m * n];
    for idx in 0..u.node_count() {
        let multi = spec.multi_index(idx);
        for k in 0..n {
            let s = strides[k];
            let i = multi[k];
            for c in 0..m {
                let d = if i == 0 {
                    (-3.0 * u.values[idx * m + c] + 4.0 * u.values[(idx + s) * m + c]
                        - u.values[(idx + 2 * s) * m + c])
                        / (2.0 * h)
                } else if i == last {
                    (3.0 * u.values[idx * m + c] - 4.0 * u.values[(idx - s) * m + c]
                        + u.values[(idx - 2 * s) * m + c])
                        / (2.0 * h)
                } else {
                    (u.values[(idx + s) * m + c] - u.values[(idx - s) * m + c]) / (2.0 * h)
                };
                out[(idx * m + c) * n + k] = d;
            }
        }
    }
    out
}

/// Multilinear interpolation from the `2^n` enclosing nodes.
pub fn interpolate(u: &VectorField, x: &[f64]) -> Result<Vec<f64>> {
    let spec = &u.spec;
    if x.len() != spec.n || !spec.contains(x) {
        return Err(Error::OutsideDomain { point: x.to_vec() });
    }
    let (n, m) = (spec.n, spec.m);
    let last = spec.cells();
    let strides = spec.strides();
    let mut base = 0usize;
    let mut frac = [0.0; 3];
    for k in 0..n {
        let s = (x[k] + spec.half_width) / spec.h;
        let i = (s.floor().max(0.0) as usize).min(last - 1);
        frac[k] = (s - i as f64).clamp(0.0, 1.0);
        base += i * strides[k];
    }
    let mut out = vec![0.0; m];
    for corner in 0..(1usize << n) {
        let mut w = 1.0;
        let mut idx = base;
        for k in 0..n {
            if corner >> k & 1 == 1 {
                w *= frac[k];
                idx += strides[k];
            } else {
                w *= 1.0 - frac[k];
            }
        }
        if w != 0.0 {
            for c in 0..m {
                out[c] += w * u.values[idx * m + c];
            }
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
