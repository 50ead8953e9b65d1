use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fbound::energy::energy;
use fbound::freeboundary::{extract_free_boundary, gamma_csv, growth_report, FreeBoundaryPoint, Thresholds};
use fbound::homogeneity::extract_blowup;
use fbound::solver::{minimize, solve_drift, DriftSpec};
use fbound::verify::{almost_min_verify, epiperimetric_sweep, random_frames, EpiReport, Perturbation};
use fbound::weiss::{
    beta_half, check_free_boundary_point, classify_report, geometric_ladder, weiss_scan, Classification, Verdict,
    WeissReport,
};
use fbound::{make_field, BallFrame, Error, VectorField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, Generator};
use crate::{CliError, Common};

fn setup(c: &Common) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let cfg = ExperimentConfig::load(&c.config)?;
    let out = c.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("{}: {e}", out.display())))?;
    Ok((cfg, out))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_field(path: &Path, u: &VectorField) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    u.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn read_field(path: &Path, cfg: &ExperimentConfig) -> Result<VectorField, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    VectorField::read_csv(BufReader::new(file), &cfg.mask())
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Boundary data from the configured generator or field file, zero on the
/// free nodes.
fn boundary_data(cfg: &ExperimentConfig) -> Result<VectorField, CliError> {
    let spec = cfg.spec();
    let p = &cfg.problem;
    if let Some(path) = &p.boundary_field {
        let mut u = read_field(path, cfg)?;
        if u.spec != spec {
            return Err(CliError::Config(format!(
                "{}: grid {:?} does not match the configured grid {:?}",
                path.display(),
                u.spec,
                spec
            )));
        }
        zero_free_nodes(&mut u);
        return Ok(u);
    }
    let hs = match p.generator {
        Generator::Zero => None,
        _ => Some(cfg.half_space()?),
    };
    let mut u = make_field(&spec, &cfg.mask(), |x, o| match (p.generator, &hs) {
        (Generator::HalfSpace, Some(hs)) => {
            hs.value_at(x, o);
            o.iter_mut().for_each(|v| *v *= p.scale);
        }
        (Generator::Harmonic, Some(hs)) => {
            let q = p.scale * (x[0] * x[0] - x[1] * x[1]);
            for (v, e) in o.iter_mut().zip(&hs.e) {
                *v = q * e;
            }
        }
        _ => o.fill(0.0),
    })?;
    zero_free_nodes(&mut u);
    Ok(u)
}

fn zero_free_nodes(u: &mut VectorField) {
    let m = u.spec.m;
    for (i, d) in u.dirichlet.clone().into_iter().enumerate() {
        if !d {
            u.values[i * m..(i + 1) * m].fill(0.0);
        }
    }
}

pub fn solve(c: &Common) -> Result<(), CliError> {
    let (cfg, out) = setup(c)?;
    let init = boundary_data(&cfg)?;
    let opts = cfg.solve_options();
    let result = match &cfg.problem.drift {
        Some(d) => {
            let drift = DriftSpec::constant(&init.spec, &d.b, d.p)?;
            solve_drift(&init, &drift, &opts).map(|s| (s.solution, Some((s.picard_iterations, s.picard_change))))
        }
        None => minimize(&init, &opts).map(|s| (s, None)),
    };
    let mut manifest = json!({
        "command": "solve",
        "seed": c.seed,
        "config": cfg,
        "field": "field.csv",
    });
    let field_path = out.join("field.csv");
    let status = match result {
        Ok((sol, picard)) => {
            write_field(&field_path, &sol.field)?;
            manifest["converged"] = json!(true);
            manifest["iterations"] = json!(sol.iterations);
            manifest["energy"] = json!(sol.energy);
            manifest["residual"] = json!(sol.residual);
            if let Some((k, change)) = picard {
                manifest["picard_iterations"] = json!(k);
                manifest["picard_change"] = json!(change);
            }
            if let Ok(e) = energy(&sol.field, &BallFrame::unit(sol.field.spec.n)) {
                manifest["energy_unit_ball"] = json!(e.total);
            }
            Ok(())
        }
        Err(Error::NotConverged {
            iterations,
            last_energy,
            last_iterate,
            ..
        }) => {
            if let Some(f) = last_iterate {
                write_field(&field_path, &f)?;
            }
            manifest["converged"] = json!(false);
            manifest["iterations"] = json!(iterations);
            manifest["energy"] = json!(last_energy);
            Err(CliError::Numerical(format!(
                "no convergence after {iterations} iterations; last iterate written to {}",
                field_path.display()
            )))
        }
        Err(e) => return Err(e.into()),
    };
    write(&out.join("manifest.json"), &(serde_json::to_string_pretty(&manifest).unwrap() + "\n"))?;
    status
}

/// Γ, empty for a field that vanishes identically (zero thresholds).
fn free_boundary(u: &VectorField, th: &Thresholds) -> Result<Vec<FreeBoundaryPoint>, CliError> {
    if th.eps_u == 0.0 {
        return Ok(Vec::new());
    }
    Ok(extract_free_boundary(u, th.eps_u, th.eps_g)?)
}

struct PointAnalysis {
    point: FreeBoundaryPoint,
    classification: Classification,
    report: Option<WeissReport>,
}

fn indeterminate(x0: &[f64], threshold: f64, reason: String) -> Classification {
    Classification {
        x0: x0.to_vec(),
        w0: f64::NAN,
        err: f64::INFINITY,
        threshold,
        verdict: Verdict::Indeterminate,
        reason: Some(reason),
    }
}

fn analyze_point(u: &VectorField, mut point: FreeBoundaryPoint, cfg: &ExperimentConfig, threshold: f64) -> PointAnalysis {
    let x0 = point.location.clone();
    let params = cfg.weiss_params();
    let l = cfg.ladder();
    let reach = x0.iter().map(|c| u.spec.half_width - c.abs()).fold(f64::INFINITY, f64::min);
    let floor = 4.0 * u.spec.h;
    let radii: Vec<f64> = geometric_ladder(l.t_min, l.t_max, l.ratio)
        .unwrap_or_default()
        .into_iter()
        .filter(|&r| r >= floor * (1.0 - 1e-12) && r <= reach)
        .collect();

    let scanned = check_free_boundary_point(u, &x0, l.t_max.min(reach))
        .and_then(|_| weiss_scan(u, &x0, l.t_min, l.t_max, &params, l.ratio, None));
    let (classification, report) = match scanned {
        Ok(r) => (classify_report(&r, threshold), Some(r)),
        Err(e) => (indeterminate(&x0, threshold, e.to_string()), None),
    };

    if let Ok(g) = growth_report(u, &x0, &radii) {
        point.c_lower = Some(g.c0);
        point.c_upper = Some(g.c_upper);
    }
    if classification.verdict == Verdict::Regular {
        let desc: Vec<f64> = radii.iter().rev().copied().collect();
        if let Ok(b) = extract_blowup(u, &x0, &desc, &params) {
            point.nu = Some(b.fit.nu);
            point.e = Some(b.fit.e);
        }
    }
    point.classification = Some(classification.clone());
    PointAnalysis {
        point,
        classification,
        report,
    }
}

/// `count` entries spread evenly over `items`.
fn subsample<T>(items: Vec<T>, count: usize) -> Vec<T> {
    if count == 0 || count >= items.len() {
        return items;
    }
    let len = items.len();
    let keep: Vec<usize> = (0..count).map(|i| (2 * i + 1) * len / (2 * count)).collect();
    items
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, p)| p)
        .collect()
}

pub fn analyze(c: &Common, field: Option<PathBuf>) -> Result<(), CliError> {
    let (cfg, out) = setup(c)?;
    let u = read_field(&field.unwrap_or_else(|| out.join("field.csv")), &cfg)?;
    let (n, m) = (u.spec.n, u.spec.m);
    let a = &cfg.analysis;
    let th = Thresholds::scaled(&u, a.c_u, a.c_g);
    let all = free_boundary(&u, &th)?;
    let found = all.len();
    let points = subsample(all, a.max_points);
    let threshold = a.threshold_factor * beta_half(n, 48)?;

    let results: Vec<PointAnalysis> = points
        .into_par_iter()
        .map(|p| analyze_point(&u, p, &cfg, threshold))
        .collect();

    let mut weiss_csv = String::from("point,t,W,slope,lower_bound\n");
    for (i, r) in results.iter().enumerate() {
        if let Some(rep) = &r.report {
            for line in rep.csv().lines().skip(1) {
                weiss_csv.push_str(&format!("{i},{line}\n"));
            }
        }
    }
    let pts: Vec<FreeBoundaryPoint> = results.iter().map(|r| r.point.clone()).collect();
    let count = |v: Verdict| results.iter().filter(|r| r.classification.verdict == v).count();
    let (regular, nonregular, indet) = (count(Verdict::Regular), count(Verdict::NonRegular), count(Verdict::Indeterminate));
    let fraction = if results.is_empty() { 0.0 } else { indet as f64 / results.len() as f64 };
    let classifications: Vec<&Classification> = results.iter().map(|r| &r.classification).collect();
    let summary = json!({
        "points_found": found,
        "points_classified": results.len(),
        "threshold": threshold,
        "eps_u": th.eps_u,
        "eps_g": th.eps_g,
        "counts": {"Regular": regular, "NonRegular": nonregular, "Indeterminate": indet},
        "indeterminate_fraction": fraction,
        "points": classifications,
    });

    write(&out.join("gamma.csv"), &gamma_csv(&pts, n, m))?;
    write(&out.join("weiss.csv"), &weiss_csv)?;
    write(&out.join("classification.json"), &(serde_json::to_string_pretty(&summary).unwrap() + "\n"))?;

    if found == 0 {
        eprintln!("notice: the free boundary is empty; reports are empty");
        return Ok(());
    }
    eprintln!(
        "{} of {found} points classified: {regular} Regular, {nonregular} NonRegular, {indet} Indeterminate",
        results.len()
    );
    if fraction > a.max_indeterminate {
        return Err(CliError::Resolution(format!(
            "Indeterminate fraction {fraction:.3} exceeds analysis.max_indeterminate = {}",
            a.max_indeterminate
        )));
    }
    Ok(())
}

pub fn verify(c: &Common, field: Option<PathBuf>) -> Result<(), CliError> {
    let (cfg, out) = setup(c)?;
    let u = read_field(&field.unwrap_or_else(|| out.join("field.csv")), &cfg)?;
    let v = &cfg.verify;
    let opts = cfg.solve_options();

    let th = Thresholds::scaled(&u, cfg.analysis.c_u, cfg.analysis.c_g);
    let centers: Vec<Vec<f64>> = free_boundary(&u, &th)?
        .into_iter()
        .map(|p| p.location)
        .filter(|x| x.iter().map(|a| a * a).sum::<f64>().sqrt() < v.center_radius)
        .collect();
    if centers.is_empty() {
        eprintln!("notice: no free-boundary points inside B_{}; gauge fit skipped", v.center_radius);
    } else {
        let r_min = v.r_min.max(4.0 * u.spec.h);
        if r_min > v.r_min {
            eprintln!("notice: verify.r_min raised to the resolution floor 4h = {r_min}");
        }
        if r_min > v.r_max {
            return Err(CliError::Resolution(format!("verify.r_max = {} is below 4h = {r_min}", v.r_max)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let frames = random_frames(&mut rng, &centers, v.spread, r_min, v.r_max, v.bound, v.frames)?;
        let fit = almost_min_verify(&u, &frames, &opts)?;
        write(&out.join("gauge.csv"), &fit.csv())?;
        write(&out.join("gauge.json"), &(fit.summary_json() + "\n"))?;
        eprintln!("gauge verdict: {:?}", fit.verdict);
    }

    if !v.epi_amplitudes.is_empty() {
        let n = cfg.grid.n;
        let nu = v.epi_nu.clone().unwrap_or_else(|| {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        });
        let e = v.epi_e.clone().unwrap_or_else(|| {
            let mut e = vec![0.0; cfg.grid.m];
            e[0] = 1.0;
            e
        });
        let family = Perturbation::family(&v.epi_amplitudes);
        let reports = epiperimetric_sweep(&nu, &e, &family, v.epi_h.unwrap_or(cfg.grid.h), &opts)?;
        let mut csv = format!("{}\n", EpiReport::CSV_HEADER);
        for r in &reports {
            csv.push_str(&r.csv_row());
            csv.push('\n');
        }
        write(&out.join("epi.csv"), &csv)?;
        write(&out.join("epi.json"), &(serde_json::to_string_pretty(&reports).unwrap() + "\n"))?;
    }
    Ok(())
}

pub fn beta(n: usize, config: Option<PathBuf>) -> Result<(), CliError> {
    let n = match config {
        Some(p) => ExperimentConfig::load(&p)?.grid.n,
        None => n,
    };
    let b = beta_half(n, 48)?;
    let s = serde_json::to_string_pretty(&json!({"n": n, "beta_half": b, "beta": 2.0 * b})).unwrap();
    println!("{s}");
    Ok(())
}
