//! Acceptance checks for the core library.
//!
//! Runs as a plain binary (`harness = false`) so each check reports exactly
//! one `PASS`/`FAIL` line. The process exits non-zero if any check fails.

use alif_core::alif::{
    leaf_color, select_query, supervised_depth_linear, DepthMatrix, QueryStrategy, Session, SessionConfig,
    UpdateStrategy,
};
use alif_core::bench::{self, DatasetSource, ExperimentPlan, StrategyPair};
use alif_core::iforest::{Forest, ForestConfig};
use alif_core::metrics::{average_precision, roc_auc, ScoredLabels};
use alif_core::Label;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    // A dense blob plus a sparse wide background, each feature on its own scale.
    let scales: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..10.0)).collect();
    Array2::from_shape_fn((n, m), |(i, j)| {
        let spread = if i % 10 == 0 { 4.0 } else { 1.0 };
        scales[j] * spread * rng.random_range(-1.0..1.0)
    })
}

fn fit(data: &Array2<f64>, n_trees: usize, seed: u64) -> Arc<Forest> {
    Arc::new(
        Forest::fit(
            data.view(),
            &ForestConfig {
                n_trees,
                psi: None,
                seed,
            },
        )
        .expect("forest fits"),
    )
}

fn session(forest: &Arc<Forest>, data: &Arc<Array2<f64>>, update: UpdateStrategy, budget: usize) -> Session {
    Session::new(
        Arc::clone(forest),
        Arc::clone(data),
        SessionConfig {
            query_strategy: QueryStrategy::MostAnomalous,
            update_strategy: update,
            budget,
        },
    )
    .expect("session")
}

fn argsort_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn endpoint_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let h_min = rng.random_range(0.0..20.0);
        let h_max = h_min + rng.random_range(0.0..30.0);
        let c = rng.random_range(h_min..=h_max);
        for (k, want) in [(0.0, h_max), (0.5, c), (1.0, h_min)] {
            let got = supervised_depth_linear(k, c, h_min, h_max);
            let err = (got - want).abs();
            worst = worst.max(err);
            ensure(err <= 1e-12, || {
                format!("k={k} h_min={h_min} c={c} h_max={h_max}: got {got}, want {want}")
            })?;
        }
    }
    Ok(format!("1000 triples, max error {worst:.1e}"))
}

fn color_oracle() -> Outcome {
    let mut checked = 0;
    for total in 1..=50u32 {
        for n_outlier in 0..=total {
            let n_inlier = total - n_outlier;
            let got = leaf_color(n_outlier, n_inlier).map_err(|e| e.to_string())?;
            let want = f64::from(n_outlier) / f64::from(total);
            ensure(got.to_bits() == want.to_bits(), || {
                format!("({n_outlier}, {n_inlier}): got {got:?}, want {want:?}")
            })?;
            checked += 1;
        }
    }
    ensure(leaf_color(0, 0).is_err(), || "empty leaf must have no color".into())?;
    let fig = leaf_color(2, 3).map_err(|e| e.to_string())?;
    ensure(fig == 0.4, || format!("(2, 3) gave {fig}"))?;
    Ok(format!("{checked} pairs exact, (2,3) -> 0.4"))
}

fn cold_start_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut cases = 0;
    for d in 0..5 {
        let n = rng.random_range(150..600);
        let m = rng.random_range(2..7);
        let data = Arc::new(random_data(&mut rng, n, m));
        for seed in 0..5u64 {
            let forest = fit(&data, 100, seed * 7 + d);
            let plain = forest.score_rows(data.view());
            for update in UpdateStrategy::ALL {
                let s = session(&forest, &data, update, 10);
                let alif = s.training_scores();
                ensure(argsort_desc(&plain) == argsort_desc(&alif), || {
                    format!("dataset {d} seed {seed} {update}: rankings differ")
                })?;
                ensure(plain.iter().zip(&alif).all(|(a, b)| a.to_bits() == b.to_bits()), || {
                    format!("dataset {d} seed {seed} {update}: scores differ")
                })?;
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} dataset/seed pairs, identical rankings and scores"))
}

fn locality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let data = Arc::new(random_data(&mut rng, 500, 3));
    let forest = fit(&data, 100, 5);
    // leaves[i][t]: leaf of point i in tree t
    let leaves: Vec<Vec<usize>> = data
        .outer_iter()
        .map(|row| {
            let x = row.to_vec();
            forest.trees().iter().map(|t| t.route(&x).leaf_id).collect()
        })
        .collect();
    let mut events = 0;
    let mut changed_total = 0;
    for update in UpdateStrategy::ALL {
        let mut s = session(&forest, &data, update, 40);
        let mut order: Vec<usize> = (0..500).collect();
        order.shuffle(&mut rng);
        for &target in order.iter().take(40) {
            let label = if rng.random_bool(0.5) { Label::Anomaly } else { Label::Normal };
            let before = s.training_scores();
            s.apply_label(target, label).map_err(|e| e.to_string())?;
            let after = s.training_scores();
            for i in 0..500 {
                let shares_leaf = leaves[i].iter().zip(&leaves[target]).any(|(a, b)| a == b);
                let same = before[i].to_bits() == after[i].to_bits();
                if !same {
                    changed_total += 1;
                }
                ensure(same || shares_leaf, || {
                    format!("{update}: labeling {target} changed point {i}, which shares no leaf with it")
                })?;
            }
            events += 1;
        }
    }
    Ok(format!(
        "{events} labels x 500 points compared, {changed_total} changed scores all co-located"
    ))
}

fn monotone_response() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut events = 0;
    for round in 0..10u64 {
        let data = Arc::new(random_data(&mut rng, 300, 2 + round as usize % 3));
        let forest = fit(&data, 50, round);
        let update = UpdateStrategy::ALL[round as usize % 2];
        let mut s = session(&forest, &data, update, 20);
        let mut order: Vec<usize> = (0..300).collect();
        order.shuffle(&mut rng);
        for &i in order.iter().take(20) {
            let label = if rng.random_bool(0.5) { Label::Anomaly } else { Label::Normal };
            let x = data.row(i).to_vec();
            let before = s.anomaly_score(&x);
            s.apply_label(i, label).map_err(|e| e.to_string())?;
            let after = s.anomaly_score(&x);
            let ok = match label {
                Label::Anomaly => after >= before,
                Label::Normal => after <= before,
            };
            ensure(ok, || {
                format!("{update}: labeling {i} as {label} moved its score {before} -> {after}")
            })?;
            events += 1;
        }
    }
    Ok(format!("{events} label events, direction respected"))
}

/// Brute-force selection on integer-valued rows using exact integer sums.
fn brute_select_integer(strategy: QueryStrategy, rows: &[Vec<i64>], indices: &[usize]) -> usize {
    let n = rows[0].len() as i64;
    // mean ~ sum; variance ~ n·Σx² − (Σx)²
    let key = |r: &Vec<i64>| -> i64 {
        let s: i64 = r.iter().sum();
        match strategy {
            QueryStrategy::MostAnomalous => -s,
            QueryStrategy::MaxUncertainty => n * r.iter().map(|v| v * v).sum::<i64>() - s * s,
        }
    };
    let best = rows.iter().map(key).max().expect("rows");
    (0..rows.len())
        .filter(|&j| key(&rows[j]) == best)
        .map(|j| indices[j])
        .min()
        .expect("winner")
}

/// Brute-force selection on real-valued rows with a two-pass mean/variance.
fn brute_select_real(strategy: QueryStrategy, rows: &[Vec<f64>], indices: &[usize]) -> usize {
    let stat = |r: &Vec<f64>| -> f64 {
        let mut mean = 0.0;
        for (i, v) in r.iter().enumerate() {
            mean += (v - mean) / (i + 1) as f64;
        }
        match strategy {
            QueryStrategy::MostAnomalous => -mean,
            QueryStrategy::MaxUncertainty => r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r.len() as f64,
        }
    };
    let stats: Vec<f64> = rows.iter().map(stat).collect();
    let best = stats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..rows.len())
        .filter(|&j| stats[j] == best)
        .map(|j| indices[j])
        .min()
        .expect("winner")
}

fn query_policy_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut tie_cases = 0;
    for case in 0..1000 {
        let n_rows = rng.random_range(1..=50);
        let n_trees = rng.random_range(1..=20);
        let mut indices: Vec<usize> = (0..n_rows * 3).collect();
        indices.shuffle(&mut rng);
        indices.truncate(n_rows);
        let integer = case % 2 == 0;
        let (values, int_rows) = if integer {
            let mut rows: Vec<Vec<i64>> = (0..n_rows)
                .map(|_| (0..n_trees).map(|_| rng.random_range(0..=12)).collect())
                .collect();
            // Plant ties: copies and permutations of other rows.
            for j in 1..n_rows {
                if rng.random_bool(0.3) {
                    let src = rng.random_range(0..j);
                    let mut copy = rows[src].clone();
                    copy.shuffle(&mut rng);
                    rows[j] = copy;
                }
            }
            let values = Array2::from_shape_fn((n_rows, n_trees), |(j, t)| rows[j][t] as f64);
            (values, Some(rows))
        } else {
            let values = Array2::from_shape_fn((n_rows, n_trees), |_| rng.random_range(0.0..15.0));
            (values, None)
        };
        let h = DepthMatrix::new(indices.clone(), values.clone()).map_err(|e| e.to_string())?;
        for strategy in QueryStrategy::ALL {
            let got = select_query(strategy, &h).map_err(|e| e.to_string())?.index;
            let want = match &int_rows {
                Some(rows) => {
                    let winner = brute_select_integer(strategy, rows, &indices);
                    let key_of = |j: usize| rows[j].iter().sum::<i64>();
                    let w = indices.iter().position(|&i| i == winner).expect("winner row");
                    if strategy == QueryStrategy::MostAnomalous && (0..n_rows).filter(|&j| key_of(j) == key_of(w)).count() > 1 {
                        tie_cases += 1;
                    }
                    winner
                }
                None => {
                    let rows: Vec<Vec<f64>> = values.outer_iter().map(|r| r.to_vec()).collect();
                    brute_select_real(strategy, &rows, &indices)
                }
            };
            ensure(got == want, || format!("case {case} {strategy}: selected {got}, brute force {want}"))?;
        }
    }
    Ok(format!("1000 matrices x 2 policies agree, {tie_cases} with tied minimum means"))
}

fn mean_ap_at(results: &bench::ExperimentResults, iteration: usize) -> f64 {
    let runs = &results.runs;
    runs.iter().map(|r| r.ap[iteration]).sum::<f64>() / runs.len() as f64
}

fn toroid_reproduction() -> Outcome {
    let plan = ExperimentPlan {
        datasets: vec![DatasetSource::Toroid {
            n_normal: 1000,
            n_anomaly: 50,
            seed: 0,
        }],
        strategies: vec![StrategyPair::new(QueryStrategy::MostAnomalous, UpdateStrategy::PiecewiseLinear)],
        n_queries: 25,
        n_repetitions: 10,
        ..ExperimentPlan::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let results = pool.install(|| {
        let (datasets, failed) = bench::load_datasets(&plan, &workspace_root());
        if !failed.is_empty() {
            return Err(format!("{failed:?}"));
        }
        bench::run_experiment(&plan, &datasets).map_err(|e| e.to_string())
    })?;
    let elapsed = start.elapsed();
    let ap0 = mean_ap_at(&results, 0);
    let ap25 = mean_ap_at(&results, 25);
    let detail = format!(
        "mean AP {ap0:.3} -> {ap25:.3} (need >= 0.9 and >= {:.3}), {:.1} s on one thread",
        2.0 * ap0,
        elapsed.as_secs_f64()
    );
    ensure(ap25 >= 0.9 && ap25 >= 2.0 * ap0 && elapsed < Duration::from_secs(60), || detail.clone())?;
    Ok(detail)
}

fn breastw_improvement() -> Outcome {
    let root = workspace_root();
    let csv = root.join("data/breastw.csv");
    ensure(csv.exists(), || {
        format!("{} is missing; run scripts/fetch_breastw.py", csv.display())
    })?;
    let plan = ExperimentPlan {
        datasets: vec![DatasetSource::Manifest {
            name: "breastw".into(),
            manifest: "data/manifest.toml".into(),
            dir: None,
        }],
        strategies: vec![StrategyPair::new(QueryStrategy::MostAnomalous, UpdateStrategy::PiecewiseLinear)],
        n_queries: 25,
        n_repetitions: 10,
        ..ExperimentPlan::default()
    };
    let (datasets, failed) = bench::load_datasets(&plan, &root);
    ensure(failed.is_empty(), || format!("{failed:?}"))?;
    let ds = &datasets[0];
    ensure(ds.n_rows() == 683 && ds.n_features() == 9, || {
        format!("unexpected shape {}x{}", ds.n_rows(), ds.n_features())
    })?;
    let results = bench::run_experiment(&plan, &datasets).map_err(|e| e.to_string())?;
    let curve = &results.curves()[0];
    let baseline = curve.ap_mean[0];
    let mean = curve.grand_mean_ap();
    let detail = format!(
        "baseline AP {baseline:.3}, mean AP over iterations {mean:.3}, final {:.3}",
        curve.final_ap()
    );
    ensure(mean > baseline && mean >= 0.9, || detail.clone())?;
    Ok(detail)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn update_time_per_label(n_x: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Arc::new(random_data(&mut rng, n_x, 4));
    let forest = fit(&data, 100, seed);
    let rounds: Vec<f64> = (0..7)
        .map(|_| {
            let mut s = session(&forest, &data, UpdateStrategy::PiecewiseLinear, 400);
            let mut order: Vec<usize> = (0..n_x).collect();
            order.shuffle(&mut rng);
            let start = Instant::now();
            for (q, &i) in order.iter().take(400).enumerate() {
                let label = if q % 3 == 0 { Label::Anomaly } else { Label::Normal };
                s.apply_label(i, label).expect("label applies");
            }
            start.elapsed().as_secs_f64() / 400.0
        })
        .collect();
    median(rounds)
}

fn query_time(n_pool: usize, n_trees: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Arc::new(random_data(&mut rng, n_pool, 4));
    let forest = fit(&data, n_trees, seed);
    let s = session(&forest, &data, UpdateStrategy::PiecewiseLinear, 1);
    let runs: Vec<f64> = (0..5)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(s.next_query().expect("query"));
            start.elapsed().as_secs_f64()
        })
        .collect();
    median(runs)
}

fn complexity_contracts() -> Outcome {
    let small = update_time_per_label(1_000, 61);
    let large = update_time_per_label(10_000, 62);
    let ratio = small.max(large) / small.min(large);

    let grid = [
        (500, 25),
        (1000, 25),
        (1000, 50),
        (2000, 50),
        (2000, 100),
        (4000, 100),
        (4000, 200),
        (8000, 200),
    ];
    let points: Vec<(f64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(i, &(n, t))| (((n * t) as f64).ln(), query_time(n, t, 70 + i as u64).ln()))
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();

    let detail = format!(
        "update {:.1} us (1k) vs {:.1} us (10k), ratio {ratio:.2}; query log-log slope {slope:.2}",
        small * 1e6,
        large * 1e6
    );
    ensure(ratio < 2.0 && (slope - 1.0).abs() <= 0.2, || detail.clone())?;
    Ok(detail)
}

/// Per-threshold precision/recall steps found by pairwise scans.
fn brute_ap(scores: &[f64], labels: &[Label]) -> f64 {
    let positives = labels.iter().filter(|l| l.is_anomaly()).count();
    let mut thresholds: Vec<f64> = Vec::new();
    for &s in scores {
        if !thresholds.contains(&s) {
            thresholds.push(s);
        }
    }
    thresholds.sort_by(|a, b| b.total_cmp(a));
    let mut ap = 0.0;
    for t in thresholds {
        let mut seen = 0usize;
        let mut tp = 0usize;
        let mut new_tp = 0usize;
        for (s, l) in scores.iter().zip(labels) {
            if *s >= t {
                seen += 1;
                if l.is_anomaly() {
                    tp += 1;
                    if *s == t {
                        new_tp += 1;
                    }
                }
            }
        }
        if new_tp > 0 {
            ap += (new_tp as f64 / positives as f64) * (tp as f64 / seen as f64);
        }
    }
    ap
}

/// Mean precision at each anomaly's own score.
fn brute_ap_per_anomaly(scores: &[f64], labels: &[Label]) -> f64 {
    let anomalies: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| l.is_anomaly())
        .map(|(s, _)| *s)
        .collect();
    let total: f64 = anomalies
        .iter()
        .map(|&t| {
            let seen = scores.iter().filter(|&&s| s >= t).count();
            let tp = anomalies.iter().filter(|&&s| s >= t).count();
            tp as f64 / seen as f64
        })
        .sum();
    total / anomalies.len() as f64
}

fn brute_auc(scores: &[f64], labels: &[Label]) -> f64 {
    let mut twice_u = 0u64;
    let (mut p, mut n) = (0u64, 0u64);
    for (i, li) in labels.iter().enumerate() {
        if li.is_anomaly() {
            p += 1;
        } else {
            n += 1;
        }
        if !li.is_anomaly() {
            continue;
        }
        for (j, lj) in labels.iter().enumerate() {
            if lj.is_anomaly() {
                continue;
            }
            twice_u += match scores[i].partial_cmp(&scores[j]).expect("no NaN") {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice_u as f64 / (2.0 * p as f64 * n as f64)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let mut cases = 0;
    while cases < 10_000 {
        let len = rng.random_range(2..=12);
        let labels: Vec<Label> = (0..len)
            .map(|_| if rng.random_bool(0.4) { Label::Anomaly } else { Label::Normal })
            .collect();
        let n_anom = labels.iter().filter(|l| l.is_anomaly()).count();
        if n_anom == 0 || n_anom == len {
            continue;
        }
        let scores: Vec<f64> = if cases % 2 == 0 {
            (0..len).map(|_| f64::from(rng.random_range(0..5u8)) / 4.0).collect()
        } else {
            (0..len).map(|_| rng.random::<f64>()).collect()
        };
        let sl = ScoredLabels::new(&scores, &labels).map_err(|e| e.to_string())?;
        let ap = average_precision(&sl).map_err(|e| e.to_string())?;
        let auc = roc_auc(&sl).map_err(|e| e.to_string())?;
        let (want_ap, want_auc) = (brute_ap(&scores, &labels), brute_auc(&scores, &labels));
        ensure(ap.to_bits() == want_ap.to_bits(), || {
            format!("AP {ap} vs brute force {want_ap} for {scores:?} {labels:?}")
        })?;
        ensure(auc.to_bits() == want_auc.to_bits(), || {
            format!("AUC {auc} vs brute force {want_auc} for {scores:?} {labels:?}")
        })?;
        // Without ties AP is the mean precision at each anomaly.
        let distinct = scores.iter().enumerate().all(|(i, a)| scores[..i].iter().all(|b| a != b));
        if distinct {
            let alt = brute_ap_per_anomaly(&scores, &labels);
            ensure((ap - alt).abs() <= 1e-12, || format!("AP {ap} vs per-anomaly form {alt}"))?;
        }
        cases += 1;
    }
    Ok(format!("{cases} random cases exact"))
}

fn determinism() -> Outcome {
    let plan = ExperimentPlan {
        datasets: vec![
            DatasetSource::Toroid {
                n_normal: 400,
                n_anomaly: 20,
                seed: 9,
            },
            DatasetSource::Toroid {
                n_normal: 200,
                n_anomaly: 30,
                seed: 10,
            },
        ],
        n_queries: 12,
        n_repetitions: 6,
        n_trees: 60,
        base_seed: 1234,
        timing: false,
        ..ExperimentPlan::default()
    };
    let run = || -> Result<Vec<(String, Vec<u8>)>, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let (datasets, _) = bench::load_datasets(&plan, &workspace_root());
        let results = bench::run_experiment(&plan, &datasets).map_err(|e| e.to_string())?;
        let files = bench::emit_report(&results, dir.path()).map_err(|e| e.to_string())?;
        files
            .iter()
            .map(|p| {
                let name = p.file_name().expect("file").to_string_lossy().into_owned();
                std::fs::read(p).map(|b| (name, b)).map_err(|e| e.to_string())
            })
            .collect()
    };
    let first = run()?;
    let second = run()?;
    ensure(first.len() == second.len(), || "different file sets".into())?;
    for ((name_a, a), (name_b, b)) in first.iter().zip(&second) {
        ensure(name_a == name_b && a == b, || format!("{name_a} differs between runs"))?;
    }
    Ok(format!(
        "{} report files byte-identical ({})",
        first.len(),
        first.iter().map(|f| f.0.as_str()).collect::<Vec<_>>().join(", ")
    ))
}

fn main() {
    let checks: [Check; 11] = [
        ("endpoint exactness", endpoint_exactness),
        ("color oracle", color_oracle),
        ("cold-start equivalence", cold_start_equivalence),
        ("locality", locality),
        ("monotone score response", monotone_response),
        ("query-policy oracle", query_policy_oracle),
        ("toroid reproduction", toroid_reproduction),
        ("breastw improvement", breastw_improvement),
        ("complexity contracts", complexity_contracts),
        ("metric oracles", metric_oracles),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
