#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use fbound::freeboundary::{extract_free_boundary, FreeBoundaryPoint, Thresholds};
use fbound::solver::{minimize, SolveOptions};
use fbound::{make_field, BoundaryMask, GridSpec, HalfSpace, VectorField};

/// Planar half-space with normal at `deg` degrees from `e_1`, scalar `e = 1`.
pub fn planar(n: usize, deg: f64) -> HalfSpace {
    let mut e = vec![0.0; 1];
    e[0] = 1.0;
    HalfSpace::planar(n, deg.to_radians(), &e).unwrap()
}

/// Zero inside `B_1`, the half-space outside (the Dirichlet data).
pub fn half_space_data(hs: &HalfSpace, h: f64) -> VectorField {
    let spec = GridSpec::new(hs.nu.len(), hs.e.len(), h, 1.0).unwrap();
    make_field(&spec, &BoundaryMask::OutsideUnitBall, |x, o| {
        if norm(x) >= 1.0 {
            hs.value_at(x, o);
        } else {
            o.fill(0.0);
        }
    })
    .unwrap()
}

/// The half-space sampled at every node.
pub fn half_space_grid(hs: &HalfSpace, h: f64) -> VectorField {
    let spec = GridSpec::new(hs.nu.len(), hs.e.len(), h, 1.0).unwrap();
    make_field(&spec, &BoundaryMask::OutsideUnitBall, |x, o| hs.value_at(x, o)).unwrap()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

type Slot = &'static OnceLock<VectorField>;

fn slot(key: (usize, u64, u64)) -> Slot {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64, u64), Slot>>> = OnceLock::new();
    let mut map = CACHE.get_or_init(Default::default).lock().unwrap();
    map.entry(key).or_insert_with(|| Box::leak(Box::default()))
}

/// Minimizer with planar half-space data at `deg` degrees, computed once per
/// test binary.
pub fn solved(n: usize, h: f64, deg: f64) -> &'static VectorField {
    slot((n, h.to_bits(), deg.to_bits())).get_or_init(|| {
        let init = half_space_data(&planar(n, deg), h);
        minimize(&init, &SolveOptions::default()).unwrap().field
    })
}

pub fn gamma(u: &VectorField) -> Vec<FreeBoundaryPoint> {
    let th = Thresholds::default_for(u);
    extract_free_boundary(u, th.eps_u, th.eps_g).unwrap()
}

/// Free-boundary points inside `B_radius`, sorted along the boundary.
pub fn gamma_inside(u: &VectorField, radius: f64) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = gamma(u)
        .into_iter()
        .map(|p| p.location)
        .filter(|x| norm(x) < radius)
        .collect();
    pts.sort_by(|a, b| a[1].partial_cmp(&b[1]).unwrap().then(a[0].partial_cmp(&b[0]).unwrap()));
    pts
}

/// `count` points spread evenly over a sorted list.
pub fn spread<T: Clone>(pts: &[T], count: usize) -> Vec<T> {
    (0..count).map(|i| pts[(2 * i + 1) * pts.len() / (2 * count)].clone()).collect()
}

/// Distance from `x` to the hyperplane `x·ν = 0`.
pub fn plane_distance(x: &[f64], nu: &[f64]) -> f64 {
    x.iter().zip(nu).map(|(a, b)| a * b).sum::<f64>().abs()
}

pub fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let c: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b));
    c.clamp(-1.0, 1.0).acos().to_degrees()
}
