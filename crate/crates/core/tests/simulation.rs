use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symmix::simulation::{Noise, RawBlock, ReplicationRecord};
use symmix::{run_study, sample_dataset, sample_labeled, true_theta, Scenario, StudyOptions};

#[test]
fn upper_component_mean_near_origin() {
    let sc = Scenario::gaussian();
    let (data, w) = sample_labeled(&sc, 10_000, 77).unwrap();
    let ys: Vec<f64> = (0..data.len())
        .filter(|&i| w[i] && data.x(i)[0] < 0.01)
        .map(|i| data.y(i))
        .collect();
    let count = ys.len() as f64;
    assert!(count > 10.0, "{count}");
    let mean = ys.iter().sum::<f64>() / count;
    assert!((mean - 4.0).abs() < 3.0 * 0.9 / count.sqrt(), "mean {mean} over {count}");
}

#[test]
fn labels_agree_with_the_dataset() {
    let sc = Scenario::laplace();
    let (data, w) = sample_labeled(&sc, 500, 5).unwrap();
    assert_eq!(data, sample_dataset(&sc, 500, 5).unwrap());
    let share = w.iter().filter(|&&b| b).count() as f64 / 500.0;
    assert!((0.2..0.45).contains(&share), "{share}");
}

#[test]
fn degenerate_scenario_is_exact() {
    let k = |c: f64| -> Arc<dyn Fn(f64) -> f64 + Send + Sync> { Arc::new(move |_| c) };
    let sc = Scenario::custom("zero", k(1.0), k(0.0), k(0.0), Noise::Gaussian(k(0.0))).unwrap();
    let data = sample_dataset(&sc, 50, 1).unwrap();
    assert!(data.responses().iter().all(|&y| y == 0.0));
}

/// Batch means of a statistic over `batches` equal slices.
fn batch_stat(draws: &[f64], batches: usize, stat: fn(&[f64]) -> f64) -> (f64, f64) {
    let size = draws.len() / batches;
    let vals: Vec<f64> = draws.chunks(size).take(batches).map(stat).collect();
    let b = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / b;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1.0);
    (stat(draws), (var / b).sqrt())
}

fn central(xs: &[f64], p: i32) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(p)).sum::<f64>() / n
}

fn kurtosis(xs: &[f64]) -> f64 {
    central(xs, 4) / central(xs, 2).powi(2)
}

fn skewness(xs: &[f64]) -> f64 {
    central(xs, 3) / central(xs, 2).powf(1.5)
}

fn noise_draws(sc: &Scenario, x: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sc.noise.sample(x, &mut rng)).collect()
}

#[test]
fn student_kurtosis_at_origin() {
    // The eighth moment is infinite at df = 8, so the error bar comes from batches.
    let draws = noise_draws(&Scenario::student(), 0.0, 100_000, 4);
    let (k, se) = batch_stat(&draws, 20, kurtosis);
    assert!((k - 4.5).abs() < 3.0 * se, "kurtosis {k:.3}, se {se:.3}");
}

#[test]
fn noise_is_symmetric() {
    for sc in Scenario::all() {
        for x in [0.1, 0.6] {
            let draws = noise_draws(&sc, x, 100_000, 9);
            let (s, se) = batch_stat(&draws, 20, skewness);
            assert!(s.abs() < 4.0 * se, "{} at {x}: skewness {s:.4}, se {se:.4}", sc.name);
        }
    }
}

fn opts() -> StudyOptions {
    StudyOptions::default()
}

/// Metrics recomputed from the CSV dump alone.
fn recompute(csv: &str, col: usize) -> (f64, f64) {
    let mut rows: Vec<(usize, usize, f64)> = Vec::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[3].is_empty() {
            continue;
        }
        let est: f64 = f[3 + col].parse().unwrap();
        let tru: f64 = f[6 + col].parse().unwrap();
        rows.push((f[0].parse().unwrap(), f[1].parse().unwrap(), (est - tru).powi(2)));
    }
    let reps: Vec<usize> = {
        let mut r: Vec<usize> = rows.iter().map(|r| r.0).collect();
        r.dedup();
        r
    };
    let k = rows.iter().map(|r| r.1).max().unwrap() + 1;
    let sq = |z: usize, j: usize| rows.iter().find(|r| r.0 == z && r.1 == j).unwrap().2;
    let m = reps.len() as f64;
    let rase = reps
        .iter()
        .map(|&z| ((0..k).map(|j| sq(z, j)).sum::<f64>() / k as f64).sqrt())
        .sum::<f64>()
        / m;
    let mut s2 = 0.0;
    for j in 0..k {
        let nu = reps.iter().map(|&z| sq(z, j)).sum::<f64>() / m;
        s2 += reps.iter().map(|&z| (sq(z, j) - nu).powi(2)).sum::<f64>() / (m - 1.0);
    }
    (rase, s2 / k as f64)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn report_matches_raw_dump_and_replication_order() {
    let study = run_study(&[Scenario::student()], &[1200], 20, 10, 8, &opts()).unwrap();
    let block = &study.report.blocks[0];
    let raw = &study.raw[0];
    assert_eq!(block.replications, 20);
    assert_eq!(block.used + block.failed, 20);
    let csv = raw.to_csv();
    for (col, metric) in [block.pi, block.a, block.b].into_iter().enumerate() {
        let m = metric.unwrap();
        let (r, s2) = recompute(&csv, col);
        let s = m.sigma2.unwrap();
        assert!(s > 0.0 && s.is_finite());
        assert!(close(m.rase, r) && close(s, s2), "column {col}: {m:?} vs ({r}, {s2})");
    }

    let mut records: Vec<ReplicationRecord> = raw.records.clone();
    records.reverse();
    let shuffled = RawBlock {
        records,
        ..raw.clone()
    };
    let again = shuffled.block_report(20);
    for (x, y) in [(block.pi, again.pi), (block.a, again.a), (block.b, again.b)] {
        let (x, y) = (x.unwrap(), y.unwrap());
        assert!(close(x.rase, y.rase) && close(x.sigma2.unwrap(), y.sigma2.unwrap()));
    }
}

#[test]
fn single_replication_single_point() {
    let sc = Scenario::gaussian();
    let study = run_study(std::slice::from_ref(&sc), &[300], 1, 1, 3, &opts()).unwrap();
    let block = &study.report.blocks[0];
    let rec = &study.raw[0].records[0];
    assert_eq!(rec.x, vec![1.0]);
    assert_eq!(rec.truth[0], true_theta(&sc, 1.0));
    let est = rec.estimates.as_ref().unwrap()[0];
    let a = block.a.unwrap();
    assert!(close(a.rase, (est.a - rec.truth[0].a).abs()));
    assert_eq!(a.sigma2, None);
}

#[test]
fn metrics_are_stable_across_master_seeds() {
    let sc = [Scenario::gaussian()];
    let first = run_study(&sc, &[400], 20, 10, 1, &opts()).unwrap();
    let second = run_study(&sc, &[400], 20, 10, 2, &opts()).unwrap();
    let (b1, b2) = (&first.report.blocks[0], &second.report.blocks[0]);
    assert_ne!(b1.seeds, b2.seeds);
    for (x, y) in [(b1.pi, b2.pi), (b1.a, b2.a), (b1.b, b2.b)] {
        let (x, y) = (x.unwrap().rase, y.unwrap().rase);
        assert!((x - y).abs() <= 0.5 * x.max(y), "{x} vs {y}");
    }
}

#[test]
fn study_is_reproducible() {
    let sc = [Scenario::laplace()];
    let a = run_study(&sc, &[200], 3, 4, 17, &opts()).unwrap();
    let b = run_study(
        &sc,
        &[200],
        3,
        4,
        17,
        &StudyOptions {
            exec: symmix::Exec::Sequential,
            ..opts()
        },
    )
    .unwrap();
    assert_eq!(a.raw, b.raw);
    assert_eq!(a.report.blocks, b.report.blocks);
}

mod metrics {
    use proptest::prelude::*;
    use symmix::simulation::rase;

    proptest! {
        #[test]
        fn rase_is_nonnegative_and_zero_only_at_truth(
            truth in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..5),
            bump in 0usize..20,
            size in 1e-3f64..1.0,
        ) {
            prop_assert_eq!(rase(&truth, &truth).unwrap(), 0.0);
            let mut est = truth.clone();
            let (z, k) = (bump % est.len(), bump % 4);
            est[z][k] += size;
            prop_assert!(rase(&est, &truth).unwrap() > 0.0);
        }
    }
}
