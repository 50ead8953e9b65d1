//! Localized energies, the boundary-adjusted functional `M` and the
//! proximal map of the nonsmooth term.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{norm, BallFrame};
use crate::quadrature::{ball_integrals, boundary_trace, trace_resolution};
use crate::sampler::{FieldSampler, HalfSpace};

/// `E(u, B_r(x0))` split into its two parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub dirichlet: f64,
    pub potential: f64,
    pub total: f64,
    pub frame: BallFrame,
}

impl EnergyBreakdown {
    pub const CSV_HEADER_SUFFIX: &'static str = "r,dirichlet,potential,total";

    /// `x0...,r,dirichlet,potential,total`
    pub fn csv_header(n: usize) -> String {
        let mut cols: Vec<String> = (1..=n).map(|k| format!("x0_{k}")).collect();
        cols.push(Self::CSV_HEADER_SUFFIX.to_string());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols: Vec<String> = self.frame.center.iter().map(|c| c.to_string()).collect();
        for v in [self.frame.radius, self.dirichlet, self.potential, self.total] {
            cols.push(v.to_string());
        }
        cols.join(",")
    }
}

/// `∫_{B_r(x0)} |∇u|^2` and `∫_{B_r(x0)} 2|u|`.
pub fn energy<S: FieldSampler + ?Sized>(u: &S, frame: &BallFrame) -> Result<EnergyBreakdown> {
    let parts = ball_integrals(u, frame, 2, |_, v, j, out| {
        out[0] = j.iter().map(|a| a * a).sum();
        out[1] = 2.0 * norm(v);
    })?;
    let (dirichlet, potential) = (parts[0].max(0.0), parts[1].max(0.0));
    Ok(EnergyBreakdown {
        dirichlet,
        potential,
        total: dirichlet + potential,
        frame: frame.clone(),
    })
}

/// `M(v) = E(v, B_1) - 2 ∮_{∂B_1} |v|^2`.
pub fn boundary_adjusted_energy<S: FieldSampler + ?Sized>(v: &S) -> Result<f64> {
    let frame = BallFrame::unit(v.dim());
    let e = energy(v, &frame)?;
    let trace = boundary_trace(v, &frame, trace_resolution(v, 1.0))?;
    Ok(e.total - 2.0 * trace.square_integral())
}

/// Minimizer of `|w - v|^2 / 2 + 2 lambda |w|`.
pub fn prox_shrink(v: &[f64], lambda: f64) -> Vec<f64> {
    let mut w = v.to_vec();
    prox_shrink_in_place(&mut w, lambda);
    w
}

#[inline]
pub fn prox_shrink_in_place(v: &mut [f64], lambda: f64) {
    let mag = norm(v);
    let thresh = 2.0 * lambda;
    if mag <= thresh {
        v.fill(0.0);
    } else {
        let s = 1.0 - thresh / mag;
        for x in v.iter_mut() {
            *x *= s;
        }
    }
}

/// `max(x.nu, 0)^2 / 2 * e`.
pub fn half_space(nu: &[f64], e: &[f64]) -> Result<HalfSpace> {
    HalfSpace::new(nu, e)
}
