//! Experiment configuration: a sectioned TOML file.
//!
//! ```toml
//! [grid]
//! n = 2
//! m = 1
//! h = 0.0078125
//! half_width = 1.0
//!
//! [problem]
//! generator = "half_space"   # zero | half_space | harmonic
//! angle_deg = 30.0           # or nu = [..]
//! e = [1.0]
//! # boundary_field = "data.csv"  # take boundary values from a field file instead
//!
//! [problem.drift]            # optional
//! b = [0.5, 0.0]
//! p = 4.0
//!
//! [analysis]
//! alpha = 1.0
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Every key except `grid.n`, `grid.m` and `grid.h` has a default.

use std::path::{Path, PathBuf};

use fbound::solver::{SolveOptions, StepRule};
use fbound::weiss::{Ladder, WeissParams};
use fbound::{BoundaryMask, GridSpec, HalfSpace};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridBlock,
    #[serde(default)]
    pub problem: ProblemBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n: usize,
    pub m: usize,
    pub h: f64,
    #[serde(default = "one")]
    pub half_width: f64,
    #[serde(default)]
    pub mask: MaskName,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskName {
    #[default]
    OutsideUnitBall,
    Faces,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Zero,
    #[default]
    HalfSpace,
    /// `scale (x_1^2 - x_2^2) e`
    Harmonic,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    #[serde(default)]
    pub generator: Generator,
    /// Normal of the half-space; overrides `angle_deg`.
    pub nu: Option<Vec<f64>>,
    /// Angle of the normal from `e_1` in the `(x_1, x_2)` plane.
    #[serde(default)]
    pub angle_deg: f64,
    pub e: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub scale: f64,
    pub drift: Option<DriftBlock>,
    /// Field file supplying the boundary values; relative to the config file.
    pub boundary_field: Option<PathBuf>,
}

impl Default for ProblemBlock {
    fn default() -> Self {
        ProblemBlock {
            generator: Generator::default(),
            nu: None,
            angle_deg: 0.0,
            e: None,
            scale: 1.0,
            drift: None,
            boundary_field: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DriftBlock {
    pub b: Vec<f64>,
    pub p: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub tol: f64,
    pub res_tol: f64,
    pub max_iters: usize,
    pub accelerate: bool,
    /// Fixed step; the stable `h^2/(8n)` when absent.
    pub step: Option<f64>,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let d = SolveOptions::default();
        SolverBlock {
            tol: d.tol,
            res_tol: d.res_tol,
            max_iters: d.max_iters,
            accelerate: d.accelerate,
            step: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisBlock {
    pub alpha: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub ladder_ratio: f64,
    pub threshold_factor: f64,
    /// Classify an evenly spread subsample of this many points; 0 means all.
    pub max_points: usize,
    /// Largest tolerated fraction of Indeterminate points.
    pub max_indeterminate: f64,
    /// Detection thresholds `eps_u = c_u h^2 sup|u|`, `eps_g = c_g h sup|grad u|`.
    pub c_u: f64,
    pub c_g: f64,
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        let l = Ladder::default();
        AnalysisBlock {
            alpha: 1.0,
            t_min: l.t_min,
            t_max: l.t_max,
            ladder_ratio: l.ratio,
            threshold_factor: 1.15,
            max_points: 0,
            max_indeterminate: 0.1,
            c_u: 10.0,
            c_g: 10.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyBlock {
    pub frames: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Frames must fit in `B_bound`.
    pub bound: f64,
    /// Frame centres are jittered by up to this distance from Γ.
    pub spread: f64,
    /// Only Γ points inside `B_center_radius` serve as centres.
    pub center_radius: f64,
    /// Epiperimetric sweep amplitudes; empty disables the sweep.
    pub epi_amplitudes: Vec<f64>,
    /// Grid spacing of the sweep; `grid.h` when absent.
    pub epi_h: Option<f64>,
    pub epi_nu: Option<Vec<f64>>,
    pub epi_e: Option<Vec<f64>>,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        VerifyBlock {
            frames: 30,
            r_min: 0.03,
            r_max: 0.3,
            bound: 0.95,
            spread: 0.0,
            center_radius: 0.6,
            epi_amplitudes: Vec::new(),
            epi_h: None,
            epi_nu: None,
            epi_e: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: PathBuf::from("out") }
    }
}

fn one() -> f64 {
    1.0
}

/// 1-based line of `key` inside `[section]`, for error messages.
fn line_of(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
        } else if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&src, &path.display().to_string())?;
        if let (Some(f), Some(dir)) = (&cfg.problem.boundary_field, path.parent()) {
            cfg.problem.boundary_field = Some(dir.join(f));
        }
        Ok(cfg)
    }

    /// Parses and validates; `origin` prefixes the messages.
    pub fn parse(src: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(src).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        cfg.validate().map_err(|(section, key, msg)| {
            let at = line_of(src, section, key).map_or_else(String::new, |l| format!(":{l}"));
            CliError::Config(format!("{origin}{at}: {section}.{key}: {msg}"))
        })?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        let g = &self.grid;
        if !(2..=3).contains(&g.n) {
            return Err(("grid", "n", format!("{} must be 2 or 3", g.n)));
        }
        if g.m == 0 {
            return Err(("grid", "m", "must be at least 1".into()));
        }
        if let Err(e) = GridSpec::new(g.n, g.m, g.h, g.half_width) {
            return Err(("grid", "h", e.to_string()));
        }

        let p = &self.problem;
        if p.generator != Generator::Zero {
            if let Err(e) = self.half_space() {
                let key = if p.nu.is_some() { "nu" } else { "e" };
                return Err(("problem", key, e.to_string()));
            }
        }
        if !p.scale.is_finite() {
            return Err(("problem", "scale", "must be finite".into()));
        }
        if let Some(d) = &p.drift {
            if d.b.len() != g.n {
                return Err(("problem.drift", "b", format!("needs {} components", g.n)));
            }
            if !(d.p > g.n as f64) {
                return Err(("problem.drift", "p", format!("{} must exceed n = {}", d.p, g.n)));
            }
        }

        let s = &self.solver;
        if let Err(e) = self.solve_options().validate(g.n, g.h) {
            let key = if s.step.is_some() { "step" } else { "tol" };
            return Err(("solver", key, e.to_string()));
        }

        let a = &self.analysis;
        if !(a.alpha > 0.0 && a.alpha < 2.0) {
            return Err(("analysis", "alpha", format!("{} must lie in (0, 2)", a.alpha)));
        }
        if !(a.t_min > 0.0 && a.t_min < a.t_max) {
            return Err(("analysis", "t_min", format!("need 0 < t_min < t_max (got {}, {})", a.t_min, a.t_max)));
        }
        if a.t_max > g.half_width {
            return Err(("analysis", "t_max", format!("{} exceeds the grid half-width", a.t_max)));
        }
        if !(a.ladder_ratio > 1.0) {
            return Err(("analysis", "ladder_ratio", "must exceed 1".into()));
        }
        if !(a.threshold_factor > 1.0) {
            return Err(("analysis", "threshold_factor", "must exceed 1".into()));
        }
        if !(0.0..=1.0).contains(&a.max_indeterminate) {
            return Err(("analysis", "max_indeterminate", "must lie in [0, 1]".into()));
        }
        if !(a.c_u > 0.0 && a.c_g > 0.0) {
            return Err(("analysis", "c_u", "detection constants must be positive".into()));
        }

        let v = &self.verify;
        if !(v.r_min > 0.0 && v.r_min <= v.r_max && v.r_max < v.bound && v.bound <= g.half_width) {
            return Err((
                "verify",
                "r_min",
                format!("need 0 < r_min <= r_max < bound <= half_width (got {}, {}, {})", v.r_min, v.r_max, v.bound),
            ));
        }
        if v.epi_amplitudes.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(("verify", "epi_amplitudes", "amplitudes must be positive".into()));
        }
        if let Some(h) = v.epi_h {
            if let Err(e) = GridSpec::new(g.n, g.m, h, 1.0) {
                return Err(("verify", "epi_h", e.to_string()));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec::new(self.grid.n, self.grid.m, self.grid.h, self.grid.half_width).expect("validated")
    }

    pub fn mask(&self) -> BoundaryMask {
        match self.grid.mask {
            MaskName::OutsideUnitBall => BoundaryMask::OutsideUnitBall,
            MaskName::Faces => BoundaryMask::Faces,
        }
    }

    /// The half-space `(ν, e)` named by the problem block.
    pub fn half_space(&self) -> fbound::Result<HalfSpace> {
        let (n, m) = (self.grid.n, self.grid.m);
        let e = self.problem.e.clone().unwrap_or_else(|| {
            let mut e = vec![0.0; m];
            e[0] = 1.0;
            e
        });
        if e.len() != m {
            return Err(fbound::Error::InvalidParameter(format!("e needs {m} components")));
        }
        match &self.problem.nu {
            Some(nu) => HalfSpace::new(nu, &e),
            None => HalfSpace::planar(n, self.problem.angle_deg.to_radians(), &e),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        let s = &self.solver;
        SolveOptions {
            tol: s.tol,
            res_tol: s.res_tol,
            max_iters: s.max_iters,
            accelerate: s.accelerate,
            step: StepRule::Fixed(s.step),
            ..SolveOptions::default()
        }
    }

    pub fn weiss_params(&self) -> WeissParams {
        WeissParams::new(self.grid.n, self.analysis.alpha).expect("validated")
    }

    pub fn ladder(&self) -> Ladder {
        Ladder {
            t_min: self.analysis.t_min,
            t_max: self.analysis.t_max,
            ratio: self.analysis.ladder_ratio,
        }
    }
}
