use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use symmix::density::{invert_and_normalize, DensityConfig, GridSizes};
use symmix::simulation::{run_study, BlockReport, StudyOptions, StudyReport};
use symmix::{fit_curve, sample_dataset, Bandwidth, Exec, FitResult, Scenario, ThetaPoint};

use crate::config::{DensityRunConfig, FitConfig, SimulateConfig, StudyConfig};
use crate::error::{CliError, CliResult};
use crate::io::{dataset_csv, point_tag, read_dataset, read_json, write_json, write_text, x_columns};

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub config: FitConfig,
    pub result: FitResult,
}

/// Contents of each `density_x0_*.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub x0: Vec<f64>,
    pub theta_hat: ThetaPoint,
    pub h1: f64,
    pub h2: f64,
    pub trim_mass: f64,
    pub normalization: f64,
    pub imag_residual: f64,
    pub integral: f64,
    pub symmetry_defect: f64,
    pub peak: f64,
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let sc = Scenario::by_name(&cfg.scenario)?;
    let data = sample_dataset(&sc, cfg.n, cfg.seed)?;
    let name = format!("simulate_{}_n{}_seed{}.csv", sc.name, cfg.n, cfg.seed);
    Ok(vec![
        write_json(out, "simulate_config.json", cfg)?,
        write_text(out, &name, &dataset_csv(&data))?,
    ])
}

fn fit_csv(result: &FitResult, d: usize) -> String {
    let mut out = x_columns(d).join(",");
    out.push_str(",pi_hat,a_hat,b_hat,h,contrast,flags\n");
    for p in &result.points {
        for v in &p.x {
            let _ = write!(out, "{v},");
        }
        match &p.fit {
            Some(f) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    f.theta.pi,
                    f.theta.a,
                    f.theta.b,
                    f.h,
                    f.contrast,
                    f.flags.label()
                );
            }
            None => out.push_str(",,,,,failed\n"),
        }
    }
    out
}

pub fn fit(cfg: &FitConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let input = cfg.input.as_deref().expect("validated");
    let data = read_dataset(input)?;
    let grid = cfg.resolve_grid(&data)?;
    let mut opts = cfg.estimator.fit_options(cfg.seed);
    opts.space = cfg.bounds.resolve(&data, cfg.estimator.strict_theta)?;
    let result = fit_curve(&data, &grid, &opts)?;
    let failed = result.failures();
    let total = result.points.len();
    let report = FitReport {
        config: cfg.clone(),
        result,
    };
    let files = vec![
        write_json(out, "fit_config.json", cfg)?,
        write_json(out, "fit.json", &report)?,
        write_text(out, "fit.csv", &fit_csv(&report.result, data.dim()))?,
    ];
    if failed > 0 {
        return Err(CliError::Partial(format!(
            "{failed} of {total} testing points failed; see fit.json"
        )));
    }
    Ok(files)
}

pub fn density(cfg: &DensityRunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let fit_path = cfg.fit.as_deref().expect("validated");
    let report: FitReport = read_json(fit_path)?;
    let data = read_dataset(cfg.input.as_deref().expect("validated"))?;
    if report.result.n != data.len() {
        return Err(CliError::Validation(format!(
            "{} was fitted on {} observations, dataset has {}",
            fit_path.display(),
            report.result.n,
            data.len()
        )));
    }
    let mut tags: Vec<String> = cfg.x0.iter().map(|x| point_tag(x)).collect();
    tags.sort();
    tags.dedup();
    if tags.len() != cfg.x0.len() {
        return Err(CliError::Validation("duplicate x0 values".into()));
    }
    // Resolve every point before writing anything.
    let mut jobs = Vec::with_capacity(cfg.x0.len());
    for x0 in &cfg.x0 {
        let point = report
            .result
            .point_at(x0, 1e-9)
            .ok_or_else(|| CliError::Validation(format!("no fit at x0 = {x0:?} in {}", fit_path.display())))?;
        let fit = point
            .fit
            .as_ref()
            .ok_or_else(|| CliError::Validation(format!("the fit at x0 = {x0:?} failed")))?;
        jobs.push((x0, point.h_local, fit.theta));
    }
    let mut files = vec![write_json(out, "density_config.json", cfg)?];
    for (x0, h_local, theta) in jobs {
        let h2 = Bandwidth::new(cfg.h2.unwrap_or(h_local))?;
        let sizes = GridSizes {
            n_y: cfg.n_y,
            n_u: cfg.n_u,
        };
        let mut dc = DensityConfig::auto(&data, x0, h2, sizes)?;
        if let Some(h1) = cfg.h1 {
            dc = dc.with_h1(Bandwidth::new(h1)?);
        }
        let f = invert_and_normalize(&data, &theta, &dc, Exec::Parallel)?;
        let mut csv = String::from("y,f_hat\n");
        for (y, v) in f.y.iter().zip(&f.density) {
            let _ = writeln!(csv, "{y},{v}");
        }
        let summary = DensitySummary {
            x0: x0.clone(),
            theta_hat: theta,
            h1: dc.h1.get(),
            h2: dc.h2.get(),
            trim_mass: f.trim_mass,
            normalization: f.normalization,
            imag_residual: f.imag_residual,
            integral: f.integral(),
            symmetry_defect: f.symmetry_defect(),
            peak: f.peak(),
        };
        let tag = point_tag(x0);
        files.push(write_text(out, &format!("density_x0_{tag}.csv"), &csv)?);
        files.push(write_json(out, &format!("density_x0_{tag}.json"), &summary)?);
    }
    Ok(files)
}

/// Runs block by block so that completed blocks survive a later failure.
pub fn study(cfg: &StudyConfig, out: &Path) -> CliResult<(Vec<PathBuf>, f64)> {
    cfg.validate()?;
    let start = Instant::now();
    let scenarios: Vec<Scenario> = cfg
        .scenarios
        .iter()
        .map(|s| Scenario::by_name(s))
        .collect::<Result<_, _>>()?;
    let options = StudyOptions {
        fit: cfg.estimator.fit_options(cfg.seed),
        exec: Exec::Parallel,
    };
    let mut files = vec![write_json(out, "study_config.json", cfg)?];
    let mut blocks: Vec<BlockReport> = Vec::new();
    let mut failure = None;
    'outer: for sc in &scenarios {
        for &n in &cfg.n {
            match run_study(std::slice::from_ref(sc), &[n], cfg.m, cfg.k, cfg.seed, &options) {
                Ok(study) => {
                    for raw in &study.raw {
                        files.push(write_text(out, &raw.file_name(), &raw.to_csv())?);
                    }
                    blocks.extend(study.report.blocks);
                }
                Err(e) => {
                    failure = Some(e);
                    break 'outer;
                }
            }
        }
    }
    let wall = start.elapsed().as_secs_f64();
    let report = StudyReport {
        master_seed: cfg.seed,
        m: cfg.m,
        k: cfg.k,
        blocks,
        wall_time_secs: wall,
    };
    files.push(write_json(out, "study_report.json", &report)?);
    files.push(write_text(out, "study_table.txt", &report.to_table())?);
    match failure {
        Some(e) => Err(e.into()),
        None => Ok((files, wall)),
    }
}
