use crate::args::{BenchArgs, FitArgs, GenToroidArgs, ScoreArgs, ServeArgs, SimulateArgs};
use alif_core::alif::Checkpoint;
use alif_core::bench::{self, ExperimentPlan, StrategyPair};
use alif_core::dataio::{self, ToroidConfig};
use alif_core::iforest::{Forest, ForestConfig};
use anyhow::{bail, Context, Result};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

/// Returns the given seed, or draws one from entropy and reports it on stderr.
fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

pub fn fit(a: FitArgs) -> Result<()> {
    let ds = dataio::load_csv(&a.data, a.label_col.as_ref())
        .with_context(|| format!("reading {}", a.data.display()))?;
    let config = ForestConfig {
        n_trees: a.trees,
        psi: a.psi,
        seed: seed_or_entropy(a.seed),
    };
    let forest = Forest::fit(ds.features.view(), &config)?;
    forest
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;

    let (lo, hi) = forest
        .trees()
        .iter()
        .map(|t| t.depth_range())
        .fold((u32::MAX, 0), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)));
    println!("trees: {}", forest.n_trees());
    println!("psi: {}", forest.psi());
    println!("c_psi: {}", forest.c_psi());
    println!("seed: {}", config.seed);
    println!("leaf depths: {lo}..={hi}");
    println!("fingerprint: {}", forest.fingerprint());
    Ok(())
}

pub fn score(a: ScoreArgs) -> Result<()> {
    let forest = Arc::new(Forest::load(&a.model).with_context(|| format!("reading {}", a.model.display()))?);
    let ds = dataio::load_csv(&a.data, a.label_col.as_ref())
        .with_context(|| format!("reading {}", a.data.display()))?;
    if ds.n_features() != forest.n_features() {
        bail!(
            "{} has {} feature columns but the model expects {}",
            a.data.display(),
            ds.n_features(),
            forest.n_features()
        );
    }
    let scores: Vec<f64> = match &a.session {
        None => forest.score_rows(ds.features.view()),
        Some(path) => {
            let cp = load_checkpoint(path)?;
            cp.verify_forest(&forest)?;
            let model = cp.overlay(Arc::clone(&forest))?;
            ds.features
                .rows()
                .into_iter()
                .map(|row| model.anomaly_score(&row.to_vec()))
                .collect()
        }
    };

    let mut order: Vec<usize> = (0..scores.len()).collect();
    if a.ranked {
        order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    }
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = BufWriter::new(sink);
    if a.ranked {
        writeln!(w, "rank,index,score")?;
        for (rank, &i) in order.iter().enumerate() {
            writeln!(w, "{},{i},{}", rank + 1, scores[i])?;
        }
    } else {
        writeln!(w, "index,score")?;
        for &i in &order {
            writeln!(w, "{i},{}", scores[i])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint from a checkpoint file, a service `state.json`, or a
/// service session directory.
fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = if path.is_dir() { path.join("state.json") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
    let inner = match value.get("checkpoint") {
        Some(cp) => cp.to_string(),
        None => text,
    };
    Checkpoint::from_json(&inner).with_context(|| format!("parsing {}", file.display()))
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let ds = dataio::load_csv(&a.data, Some(&a.label_col))
        .with_context(|| format!("reading {}", a.data.display()))?;
    if ds.labels.is_none() {
        bail!("{} has no label column {:?}", a.data.display(), a.label_col);
    }
    let mut strategies = Vec::new();
    for q in a.query_strategy.expand() {
        for u in a.update_strategy.expand() {
            strategies.push(StrategyPair::new(q, u));
        }
    }
    let plan = ExperimentPlan {
        datasets: Vec::new(),
        strategies,
        n_queries: a.queries,
        n_repetitions: a.reps,
        n_trees: a.trees,
        psi: a.psi,
        base_seed: seed_or_entropy(a.seed),
        train_fraction: a.train_fraction,
        stratified: !a.no_stratify,
        timing: !a.no_timing,
    };
    let results = bench::run_experiment(&plan, std::slice::from_ref(&ds))?;
    std::fs::write(&a.out, results.runs_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    for c in results.curves() {
        eprintln!(
            "{} {}: AP {:.4} -> {:.4} (mean {:.4})",
            c.dataset,
            c.strategy,
            c.ap_mean[0],
            c.final_ap(),
            c.grand_mean_ap()
        );
    }
    Ok(())
}

fn plan_sets_seed(text: &str) -> bool {
    text.parse::<toml::Table>()
        .map(|t| t.contains_key("base_seed"))
        .unwrap_or(false)
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.plan).with_context(|| format!("reading {}", a.plan.display()))?;
    let mut plan = ExperimentPlan::from_toml(&text).with_context(|| format!("parsing {}", a.plan.display()))?;
    if a.seed.is_some() || !plan_sets_seed(&text) {
        plan.base_seed = seed_or_entropy(a.seed);
    }
    if plan.datasets.is_empty() {
        bail!("{} lists no datasets", a.plan.display());
    }
    let base = a.plan.parent().unwrap_or(Path::new("."));
    let (datasets, failed) = bench::load_datasets(&plan, base);
    for (source, reason) in &failed {
        log::warn!("skipping dataset {}: {reason}", source);
    }
    if datasets.is_empty() {
        bail!("no dataset of {} could be loaded", a.plan.display());
    }
    let mut results = bench::run_experiment(&plan, &datasets)?;
    results.skipped.extend(failed);
    let files = bench::emit_report(&results, &a.out)?;
    for f in files {
        println!("{}", f.display());
    }
    print!("{}", results.summary_table());
    Ok(())
}

pub fn gen_toroid(a: GenToroidArgs) -> Result<()> {
    let geometry = ToroidConfig {
        outer_half_side: a.outer,
        inner_half_side: a.inner,
    };
    let ds = dataio::make_toroid_with(a.n_normal, a.n_anomaly, seed_or_entropy(a.seed), &geometry)?;
    ds.save_csv(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let mut config = alif_service::ServiceConfig::from_env()?;
    if let Some(bind) = a.bind {
        config.bind = bind;
    }
    if let Some(dir) = a.data_dir {
        config.data_dir = dir;
    }
    if let Some(dir) = a.static_dir {
        config.static_dir = Some(dir);
    }
    if let Some(token) = a.token {
        config.auth_token = Some(token).filter(|t| !t.is_empty());
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(alif_service::serve(config))?;
    Ok(())
}
