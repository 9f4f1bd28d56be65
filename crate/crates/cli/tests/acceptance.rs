//! Acceptance gate. Runs every criterion, prints one line each, and exits
//! non-zero if any of them fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symmix::density::{invert_and_normalize, DensityConfig, GridSizes};
use symmix::seed::derive_seed;
use symmix::simulation::{run_study, RawBlock};
use symmix::{
    fit_curve, sample_dataset, true_theta, Bandwidth, BandwidthRule, ContrastConfig, ContrastEvaluator, Dataset,
    Exec, FitOptions, Scenario, StudyOptions, ThetaPoint,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    Dataset::from_xy(&x, &y).unwrap()
}

fn random_theta(rng: &mut ChaCha8Rng) -> ThetaPoint {
    // Keep |1 - 2 pi| >= 0.1 so the transfer function stays away from zero.
    let pi = loop {
        let p: f64 = rng.random_range(0.05..0.95);
        if (1.0 - 2.0 * p).abs() >= 0.1 {
            break p;
        }
    };
    ThetaPoint::new(pi, rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)).unwrap()
}

fn gaussian_kernel(v: f64, h: f64) -> f64 {
    (-0.5 * (v / h) * (v / h)).exp() / ((2.0 * PI).sqrt() * h)
}

fn transfer_direct(t: &ThetaPoint, u: f64) -> Complex64 {
    Complex64::from_polar(t.pi, u * t.a) + Complex64::from_polar(1.0 - t.pi, u * t.b)
}

/// Unfactorized Monte-Carlo contrast: explicit complex `Z_k` and the full
/// ordered double sum over `j != k`.
fn double_loop_contrast(data: &Dataset, x0: f64, h: f64, t: &ThetaPoint, nodes: &[f64]) -> f64 {
    let n = data.len();
    let kappa: Vec<f64> = (0..n).map(|k| gaussian_kernel(data.x(k)[0] - x0, h)).collect();
    let mut total = 0.0;
    for &u in nodes {
        let m_pos = transfer_direct(t, u);
        let m_neg = transfer_direct(t, -u);
        let z: Vec<Complex64> = (0..n)
            .map(|k| {
                let e = Complex64::from_polar(1.0, u * data.y(k));
                (e / m_pos - e.conj() / m_neg) * kappa[k]
            })
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    acc += z[k] * z[j];
                }
            }
        }
        total += acc.re;
    }
    -total / (4.0 * n as f64 * (n as f64 - 1.0) * nodes.len() as f64)
}

fn factorization_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut ok = 0;
    for trial in 0..50 {
        let n = rng.random_range(2..=10);
        let data = random_dataset(&mut rng, n);
        let t = random_theta(&mut rng);
        let n_nodes = rng.random_range(1..=16);
        let nodes: Vec<f64> = (0..n_nodes).map(|_| rng.random_range(-3.0..3.0)).collect();
        let h = rng.random_range(0.2..1.0);
        let cfg = ContrastConfig::new(vec![0.5], Bandwidth::new(h).unwrap(), n_nodes, trial);
        let ev = ContrastEvaluator::with_nodes(cfg, &data, nodes.clone(), Exec::Sequential).unwrap();
        let fast = ev.mc_contrast(&t).unwrap();
        let slow = double_loop_contrast(&data, 0.5, h, &t, &nodes);
        let e = rel_err(fast, slow);
        worst = worst.max(e);
        if e <= 1e-12 {
            ok += 1;
        }
    }
    Outcome {
        pass: ok == 50,
        detail: format!("{ok}/50 triples within 1e-12 relative, worst {worst:.2e}"),
    }
}

fn label_swap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let mut ok = 0;
    for trial in 0..100 {
        let n = rng.random_range(2..=200);
        let data = random_dataset(&mut rng, n);
        let t = random_theta(&mut rng);
        let h = rng.random_range(0.05..1.0);
        let cfg = ContrastConfig::new(vec![rng.random_range(0.0..1.0)], Bandwidth::new(h).unwrap(), n, trial);
        let ev = ContrastEvaluator::new(cfg, &data, Exec::Parallel).unwrap();
        let s = ev.mc_contrast(&t).unwrap();
        let s_swap = ev.mc_contrast(&t.swapped()).unwrap();
        let e = rel_err(s, s_swap);
        worst = worst.max(e);
        if e <= 1e-12 {
            ok += 1;
        }
    }
    Outcome {
        pass: ok == 100,
        detail: format!("{ok}/100 inputs within 1e-12 relative, worst {worst:.2e}"),
    }
}

fn picking_property() -> Outcome {
    let g = Scenario::gaussian();
    let truth = true_theta(&g, 0.5);
    let deltas = [[0.15, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut wins = 0;
    for s in 0..20u64 {
        let data = sample_dataset(&g, 2000, derive_seed(303, s)).unwrap();
        let opts = FitOptions {
            seed: s,
            ..FitOptions::default()
        };
        let init = symmix::estimator::initialize(&data, &[vec![0.5]], &opts).unwrap();
        let h = Bandwidth::new(init.h_local[0]).unwrap();
        let ev = ContrastEvaluator::new(opts.contrast_config(&data, &[0.5], h), &data, Exec::Parallel).unwrap();
        let at_truth = ev.mc_contrast(&truth).unwrap();
        let all_above = deltas.iter().all(|d| {
            let t = ThetaPoint::from_array([truth.pi + d[0], truth.a + d[1], truth.b + d[2]]);
            ev.mc_contrast(&t).unwrap() > at_truth
        });
        if all_above {
            wins += 1;
        }
    }
    Outcome {
        pass: wins >= 18,
        detail: format!("truth below all three perturbations in {wins}/20 seeds (need >= 18)"),
    }
}

/// Mean over replications of the per-replication mean squared error.
fn mse_scale(block: &RawBlock, pick: fn(&ThetaPoint) -> f64) -> f64 {
    let reps: Vec<f64> = block
        .records
        .iter()
        .filter_map(|r| {
            let est = r.estimates.as_ref()?;
            let k = est.len() as f64;
            Some(est.iter().zip(&r.truth).map(|(e, t)| (pick(e) - pick(t)).powi(2)).sum::<f64>() / k)
        })
        .collect();
    reps.iter().sum::<f64>() / reps.len() as f64
}

struct Sweep {
    // (scenario, n) -> (rase_pi, rase_a, rase_b)
    rase: BTreeMap<(String, usize), [f64; 3]>,
    t1200_mse: [f64; 3],
    failed: usize,
}

fn sweep() -> Sweep {
    let opts = StudyOptions::default();
    let study = run_study(&Scenario::all(), &[400, 1200], 20, 20, 404, &opts).unwrap();
    let mut rase = BTreeMap::new();
    let mut failed = 0;
    for b in &study.report.blocks {
        failed += b.failed;
        let get = |m: &Option<symmix::simulation::Metric>| m.map_or(f64::NAN, |m| m.rase);
        rase.insert((b.scenario.clone(), b.n), [get(&b.pi), get(&b.a), get(&b.b)]);
    }
    let t = study.raw.iter().find(|r| r.scenario == "T" && r.n == 1200).unwrap();
    let t1200_mse = [
        mse_scale(t, |p| p.pi),
        mse_scale(t, |p| p.a),
        mse_scale(t, |p| p.b),
    ];
    Sweep { rase, t1200_mse, failed }
}

fn student_table_row(sw: &Sweep) -> Outcome {
    let r = sw.rase[&("T".to_string(), 1200)];
    let ranges = [(0.001, 0.02), (0.03, 0.15), (0.015, 0.08)];
    let pass = r.iter().zip(&ranges).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
    let m = sw.t1200_mse;
    Outcome {
        pass,
        detail: format!(
            "RASE pi/a/b = {:.4}/{:.4}/{:.4}, need [0.001,0.02]/[0.03,0.15]/[0.015,0.08]; \
             mean-squared-error scale {:.4}/{:.4}/{:.4}; failed replications {}",
            r[0], r[1], r[2], m[0], m[1], m[2], sw.failed
        ),
    }
}

fn consistency_trend(sw: &Sweep) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for s in ["G", "T", "L"] {
        let lo = sw.rase[&(s.to_string(), 400)];
        let hi = sw.rase[&(s.to_string(), 1200)];
        let ok = hi[1] < lo[1] && hi[2] < lo[2];
        pass &= ok;
        parts.push(format!(
            "{s}: a {:.3}->{:.3}, b {:.3}->{:.3}",
            lo[1], hi[1], lo[2], hi[2]
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn rate_diagnostic() -> Outcome {
    let g = Scenario::gaussian();
    let sd_at = |n: usize| {
        let est: Vec<f64> = (0..40u64)
            .map(|z| {
                let data = sample_dataset(&g, n, derive_seed(derive_seed(606, n as u64), z)).unwrap();
                let opts = FitOptions {
                    bandwidth: BandwidthRule::Rate { c: 1.5, alpha: 1.0 },
                    seed: z,
                    ..FitOptions::default()
                };
                let r = fit_curve(&data, &[vec![0.5]], &opts).unwrap();
                r.points[0].fit.as_ref().map_or(f64::NAN, |f| f.theta.a)
            })
            .collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        (est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
    };
    let s400 = sd_at(400);
    let s1600 = sd_at(1600);
    let ratio = s400 / s1600;
    Outcome {
        pass: (1.3..=3.5).contains(&ratio),
        detail: format!("sd(a_hat) {s400:.4} at n=400, {s1600:.4} at n=1600, ratio {ratio:.3} (need [1.3, 3.5])"),
    }
}

fn density_contract() -> Outcome {
    let g = Scenario::gaussian();
    let mut pass = true;
    let mut parts = Vec::new();
    for s in 0..5u64 {
        let data = sample_dataset(&g, 2000, derive_seed(707, s)).unwrap();
        let opts = FitOptions {
            seed: s,
            ..FitOptions::default()
        };
        let r = fit_curve(&data, &[vec![0.5]], &opts).unwrap();
        let p = &r.points[0];
        let Some(fit) = p.fit.as_ref() else {
            pass = false;
            parts.push(format!("seed {s}: fit failed"));
            continue;
        };
        let cfg = DensityConfig::auto(&data, &[0.5], Bandwidth::new(p.h_local).unwrap(), GridSizes::default()).unwrap();
        let f = invert_and_normalize(&data, &fit.theta, &cfg, Exec::Parallel).unwrap();
        let integral_ok = (f.integral() - 1.0).abs() <= 1e-6;
        let nonneg = f.density.iter().all(|&v| v >= 0.0);
        let sym = f.symmetry_defect() / f.peak();
        let ok = integral_ok && nonneg && sym < 0.1 && f.trim_mass < 0.05;
        pass &= ok;
        parts.push(format!(
            "seed {s}: int-1 {:.1e} sym/peak {sym:.3} trim {:.3}{}",
            f.integral() - 1.0,
            f.trim_mass,
            if nonneg { "" } else { " NEGATIVE" }
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn run_cli(args: &[&str], threads: usize) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_symmix"))
        .args(args)
        .args(["--threads", &threads.to_string()])
        .env_remove("SYMMIX_OUT_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn replay() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let data = p("first/simulate_G_n800_seed11.csv");
    let fit_json = p("first/fit.json");
    // (command, first-run flags, config echo name)
    let runs: [(&str, Vec<String>, &str); 4] = [
        ("simulate", vec!["--scenario".into(), "G".into(), "--n".into(), "800".into(), "--seed".into(), "11".into()], "simulate_config.json"),
        ("fit", vec!["--input".into(), data.clone(), "--grid".into(), "0.05:0.95:19".into(), "--seed".into(), "5".into()], "fit_config.json"),
        ("density", vec!["--input".into(), data.clone(), "--fit".into(), fit_json, "--x0".into(), "0.5".into(), "--x0".into(), "0.25".into()], "density_config.json"),
        ("study", vec!["--scenario".into(), "all".into(), "--n".into(), "200,400".into(), "--M".into(), "3".into(), "--K".into(), "5".into(), "--seed".into(), "9".into()], "study_config.json"),
    ];
    let mut problems = Vec::new();
    for (cmd, flags, echo) in &runs {
        let first = p(&format!("first_{cmd}"));
        let mut args: Vec<&str> = vec![cmd, "--out-dir", &first];
        args.extend(flags.iter().map(String::as_str));
        if let Err(e) = run_cli(&args, 4) {
            problems.push(e);
            continue;
        }
        // Later commands read the dataset and fit from `first`.
        for (name, bytes) in dir_bytes(Path::new(&first)) {
            fs::create_dir_all(root.join("first")).unwrap();
            fs::write(root.join("first").join(name), bytes).unwrap();
        }
        for threads in [1, 3] {
            let again = p(&format!("again_{cmd}_{threads}"));
            let echo_path = format!("{first}/{echo}");
            if let Err(e) = run_cli(&[cmd, "--out-dir", &again, "--config", &echo_path], threads) {
                problems.push(e);
                continue;
            }
            if dir_bytes(Path::new(&first)) != dir_bytes(Path::new(&again)) {
                problems.push(format!("{cmd} with {threads} thread(s) differs from the first run"));
            }
        }
    }
    Outcome {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            "simulate, fit, density and study replay byte-identically at 1 and 3 threads (first run at 4)".into()
        } else {
            problems.join("; ")
        },
    }
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut record = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "criterion {id} {}: {name}: {} [{secs:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o, secs));
    };
    record(1, "factorized contrast equals double-loop oracle", &mut factorization_oracle);
    record(2, "label-swap exactness", &mut label_swap);
    record(3, "picking property at n=2000", &mut picking_property);
    let t = Instant::now();
    let sw = sweep();
    println!("sweep for criteria 4 and 5: G/T/L at n = 400, 1200 with M = 20 [{:.1}s]", t.elapsed().as_secs_f64());
    record(4, "Student row at n=1200 (M=20, K=20, N=n)", &mut || student_table_row(&sw));
    record(5, "RASE_a and RASE_b decrease from n=400 to n=1200", &mut || consistency_trend(&sw));
    record(6, "sd(a_hat(0.5)) ratio with h = 1.5 n^(-1/3)", &mut rate_diagnostic);
    record(7, "local density contract at n=2000", &mut density_contract);
    record(8, "CLI replay from config echo", &mut replay);
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failing: {failed:?}");
        std::process::exit(1);
    }
}
