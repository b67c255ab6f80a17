//! Acceptance suite. Runs every criterion, prints one PASS/FAIL/SKIP line
//! each and exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::time::Instant;

use fsemt::clustering::{wo_expand, wo_reduce, ClusterMap};
use fsemt::dataset::{generate_synthetic, load_csv, minmax_scale_fit_apply, stratified_folds, Dataset, FoldKind};
use fsemt::evaluation::{balanced_error, knn_predict, Evaluator};
use fsemt::experiment::{run_experiment, RunConfig, RunReport};
use fsemt::filtering::{knee_point_mask, FeatureScores, FilterMethod};
use fsemt::multitask::{self, FitnessMode, Formulation, PoolSampling, RunState, TransferMode, TransferTrigger};
use fsemt::relevance::{discretize_column, remove_irrelevant, symmetric_uncertainty, LogBase};
use fsemt::search::{dominates, nd_sort, NormDirection};
use fsemt::LabelColumn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

// 1 -------------------------------------------------------------------------

fn pairwise_fronts(objs: &[(f64, f64)]) -> Vec<usize> {
    let dom = |a: (f64, f64), b: (f64, f64)| a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1);
    let mut front = vec![usize::MAX; objs.len()];
    let mut level = 0;
    loop {
        let current: Vec<usize> = (0..objs.len())
            .filter(|&i| front[i] == usize::MAX)
            .filter(|&i| !(0..objs.len()).any(|j| front[j] == usize::MAX && dom(objs[j], objs[i])))
            .collect();
        if current.is_empty() {
            return front;
        }
        for i in current {
            front[i] = level;
        }
        level += 1;
    }
}

fn criterion_sorting() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for trial in 0..1000 {
        let n = rng.gen_range(1..=200);
        let objs: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                if trial % 3 == 0 {
                    (rng.gen_range(0..8) as f64 / 8.0, rng.gen_range(0..8) as f64 / 8.0)
                } else {
                    (rng.gen(), rng.gen())
                }
            })
            .collect();
        if nd_sort(&objs) != pairwise_fronts(&objs) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(mismatches == 0 && secs < 10.0, format!("{mismatches} mismatches in 1000 instances, {secs:.2}s"))
}

// 2 -------------------------------------------------------------------------

fn knee_oracle(scores: &[f64]) -> Vec<bool> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let y: Vec<f64> = order.iter().map(|&j| scores[j]).collect();
    let keep = if y.iter().all(|&v| v == y[0]) {
        n.div_ceil(2)
    } else {
        // line a*x + b*y + c = 0 through (0, y0) and (n-1, y_last)
        let (x0, y0, x1, y1) = (0.0, y[0], (n - 1) as f64, y[n - 1]);
        let (a, b) = (y1 - y0, x0 - x1);
        let c = x1 * y0 - x0 * y1;
        let norm = (a * a + b * b).sqrt();
        let dist: Vec<f64> = (0..n).map(|i| (a * i as f64 + b * y[i] + c).abs() / norm).collect();
        let best = dist.iter().cloned().fold(f64::MIN, f64::max);
        let slack = 1e-9 * (x1 - x0) * (y1 - y0).abs() / norm;
        dist.iter().position(|&d| best - d <= slack).unwrap() + 1
    };
    let mut mask = vec![false; n];
    for &j in &order[..keep] {
        mask[j] = true;
    }
    mask
}

fn criterion_knee() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for trial in 0..1000 {
        let n = rng.gen_range(2..=500);
        let scores: Vec<f64> = match trial % 5 {
            0 => vec![rng.gen_range(-1.0..1.0); n],
            1 => {
                let (a, b) = (rng.gen_range(0.0..10.0), rng.gen_range(0.001..1.0));
                (0..n).map(|i| a - b * i as f64).collect()
            }
            2 => (0..n).map(|_| rng.gen_range(0..5) as f64).collect(),
            3 => (0..n).map(|_| rng.gen::<f64>().powi(4)).collect(),
            _ => (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        };
        let got = knee_point_mask(&FeatureScores::new(FilterMethod::Relieff, scores.clone()));
        if got.selected != knee_oracle(&scores) {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches} mismatches in 1000 score vectors"))
}

// 3 -------------------------------------------------------------------------

fn criterion_su() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_self = 0.0f64;
    for _ in 0..500 {
        let n = rng.gen_range(2..=300);
        let distinct = rng.gen_range(2..=50);
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..distinct) as f64).collect();
        x[0] = 0.0;
        x[1] = 1.0;
        let b = discretize_column(&x, 10);
        worst_self = worst_self.max((symmetric_uncertainty(&b, &b).unwrap() - 1.0).abs());
    }
    let mut su = Vec::new();
    for _ in 0..100 {
        let x: Vec<f64> = (0..1000).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..1000).map(|_| rng.gen()).collect();
        su.push(symmetric_uncertainty(&discretize_column(&x, 10), &discretize_column(&y, 10)).unwrap());
    }
    let mean = su.iter().sum::<f64>() / su.len() as f64;
    let max = su.iter().cloned().fold(0.0, f64::max);
    verdict(
        worst_self < 1e-12 && mean < 0.02 && max < 0.06,
        format!("max |SU(x,x)-1| = {worst_self:.1e}; independent columns mean {mean:.4}, max {max:.4}"),
    )
}

// 4 -------------------------------------------------------------------------

fn criterion_wo() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k = rng.gen_range(1..=10);
        let n = rng.gen_range(k..=60);
        let mut cluster_of: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
        cluster_of.rotate_left(rng.gen_range(0..n));
        let centers = (0..k).map(|c| cluster_of.iter().position(|&x| x == c).unwrap()).collect();
        let cm = ClusterMap { cluster_of, n_clusters: k, centers };
        let prime: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-3..=1.0)).collect();
        let u: Vec<f64> = (0..k)
            .map(|c| {
                let top = cm.members(c).map(|i| prime[i]).fold(0.0, f64::max);
                rng.gen_range(0.0..=(1.0 / top).min(2.0))
            })
            .collect();
        let back = wo_reduce(&wo_expand(&u, &prime, &cm).unwrap(), &prime, &cm).unwrap();
        for (a, b) in back.iter().zip(&u) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(worst < 1e-9, format!("max round-trip error {worst:.2e} over 10^4 cases"))
}

// 5 / 7 ---------------------------------------------------------------------

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn planted(seed: u64) -> (Dataset, Vec<usize>) {
    generate_synthetic(200, 1000, 10, 3, 2.0, seed).unwrap()
}

fn planted_config(seed: u64) -> RunConfig {
    RunConfig { outer_folds: 2, max_iter: 50, seed, ..RunConfig::default() }
}

/// Held-out balanced accuracy of KNN restricted to the planted features,
/// on the same outer folds the search uses.
fn oracle_accuracy(data: &Dataset, planted: &[usize], config: &RunConfig) -> f64 {
    let outer = stratified_folds(data, config.outer_folds, config.seed, FoldKind::OuterTest).unwrap();
    let mut total = 0.0;
    for f in 0..outer.n_folds {
        let (tr, te) = outer.split(f);
        let (train, test, _) = minmax_scale_fit_apply(&data.subset_rows(&tr), &[&data.subset_rows(&te)]);
        let pred = knn_predict(&train, &test[0], planted, config.knn_k);
        total += 1.0 - balanced_error(test[0].labels(), &pred, data.n_classes());
    }
    total / outer.n_folds as f64
}

struct SeedResult {
    acc: f64,
    selected_share: f64,
    recovered: f64,
    secs: f64,
}

fn evaluate_seed(report: &RunReport, planted: &[usize]) -> SeedResult {
    let n = report.folds.len() as f64;
    let (mut acc, mut share, mut rec) = (0.0, 0.0, 0.0);
    for fold in &report.folds {
        let best = fold
            .solutions
            .iter()
            .fold(None, |b: Option<&fsemt::experiment::SolutionRecord>, s| match b {
                Some(b) if b.test_accuracy >= s.test_accuracy => Some(b),
                _ => Some(s),
            })
            .expect("non-empty front");
        acc += best.test_accuracy;
        share += best.selected.len() as f64 / fold.kept_features.len() as f64;
        rec += best.selected.iter().filter(|j| planted.contains(j)).count() as f64;
    }
    SeedResult { acc: acc / n, selected_share: share / n, recovered: rec / n, secs: report.wall_clock_seconds }
}

fn criterion_planted(runs: &[(RunReport, Vec<usize>)], oracle: f64) -> Outcome {
    let results: Vec<SeedResult> = runs.iter().map(|(r, p)| evaluate_seed(r, p)).collect();
    let acc_ok = results.iter().filter(|r| r.acc >= 0.90).count();
    let share_ok = results.iter().filter(|r| r.selected_share <= 0.05).count();
    let rec_ok = results.iter().filter(|r| r.recovered >= 7.0).count();
    let slowest = results.iter().map(|r| r.secs).fold(0.0, f64::max);
    let detail = results
        .iter()
        .map(|r| format!("acc {:.3} share {:.3} recovered {:.1}", r.acc, r.selected_share, r.recovered))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(
        oracle >= 0.95 && acc_ok >= 4 && share_ok == results.len() && rec_ok >= 3 && slowest <= 180.0,
        format!(
            "oracle {oracle:.3}; accuracy>=0.90 on {acc_ok}/5, share<=5% on {share_ok}/5, \
             recovery>=7 on {rec_ok}/5, slowest {slowest:.1}s [{detail}]"
        ),
    )
}

fn mean_features(runs: &[RunReport]) -> f64 {
    runs.iter().map(|r| r.summary.mean_features).sum::<f64>() / runs.len() as f64
}

fn criterion_ablation(default: &[RunReport]) -> Outcome {
    let variant = |tweak: &dyn Fn(&mut RunConfig)| -> Vec<RunReport> {
        SEEDS
            .iter()
            .map(|&s| {
                let mut c = planted_config(s);
                tweak(&mut c);
                run_experiment(&planted(s).0, &c).unwrap()
            })
            .collect()
    };
    let base = mean_features(default);
    let no_transfer = mean_features(&variant(&|c| c.transfer = TransferMode::Off));
    let clustering_only = mean_features(&variant(&|c| c.formulations = vec![Formulation::Clustering]));
    verdict(
        no_transfer > base && clustering_only > base,
        format!(
            "mean features: default {base:.2}, transfer off {no_transfer:.2}, clustering only {clustering_only:.2}"
        ),
    )
}

// 6 -------------------------------------------------------------------------

fn srbct_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("FSEMT_SRBCT") {
        return Some(PathBuf::from(p));
    }
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    ["SRBCT.csv", "srbct.csv", "SRBCT/SRBCT.csv"].iter().map(|f| root.join(f)).find(|p| p.exists())
}

fn criterion_srbct() -> Outcome {
    let Some(path) = srbct_path() else {
        return Outcome::Skip("SRBCT data not found (set FSEMT_SRBCT); criterion 5 governs".into());
    };
    let data = match load_csv(&path, &LabelColumn::Last) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("cannot load {}: {e}", path.display())),
    };
    let reports: Vec<RunReport> = [0u64, 1, 2]
        .iter()
        .map(|&seed| run_experiment(&data, &RunConfig { seed, ..RunConfig::default() }).unwrap())
        .collect();
    let best = reports.iter().map(|r| r.summary.best_acc).sum::<f64>() / 3.0;
    let feats = mean_features(&reports);
    verdict(best >= 0.95 && feats <= 300.0, format!("best accuracy {:.2}%, mean features {feats:.1}", best * 100.0))
}

// 8 -------------------------------------------------------------------------

fn criterion_determinism() -> Outcome {
    let (data, _) = generate_synthetic(90, 300, 8, 3, 1.5, 8).unwrap();
    let config = RunConfig { outer_folds: 3, max_iter: 20, seed: 8, ..RunConfig::default() };
    let a = run_experiment(&data, &config).unwrap().canonical_json();
    let b = run_experiment(&data, &config).unwrap().canonical_json();
    let mut parallel = run_experiment(&data, &RunConfig { workers: 4, ..config.clone() }).unwrap();
    parallel.config.workers = config.workers;
    let c = parallel.canonical_json();
    verdict(a == b && a == c, format!("repeat identical: {}, 4 workers identical: {}", a == b, a == c))
}

// 9 -------------------------------------------------------------------------

fn check_invariants(tasks: &[multitask::Task]) -> Result<(), String> {
    for t in tasks {
        if t.pop.len() != t.pop_size {
            return Err(format!("task {} population {} != {}", t.id, t.pop.len(), t.pop_size));
        }
        if t.elite.members.len() > t.elite.capacity || t.elite.members.is_empty() {
            return Err(format!("task {} archive size {}", t.id, t.elite.members.len()));
        }
        for ind in t.pop.iter().chain(&t.elite.members) {
            if ind.task_repr.len() != t.dim || ind.task_repr.iter().any(|&x| x < t.bounds.lower || x > t.bounds.upper) {
                return Err(format!("task {} coordinate outside bounds", t.id));
            }
            if ind.full_repr.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(format!("task {} full solution outside [0, 1]", t.id));
            }
        }
    }
    Ok(())
}

fn fuzz_once(rng: &mut ChaCha8Rng, case: u64) -> Result<(), String> {
    let n = rng.gen_range(10..=40);
    let d = rng.gen_range(2..=50);
    let classes = rng.gen_range(2..=3);
    let (raw, _) = generate_synthetic(n, d, rng.gen_range(0..=d.min(5)), classes, 1.5, case).unwrap();
    let (train, _, _) = minmax_scale_fit_apply(&raw, &[]);
    let formulations = match rng.gen_range(0..4) {
        0 => vec![],
        1 => vec![Formulation::Filtering],
        2 => vec![Formulation::Clustering],
        _ => vec![Formulation::Filtering, Formulation::Clustering],
    };
    let config = RunConfig {
        max_iter: rng.gen_range(0..=10),
        n_tasks: rng.gen_range(1..=5),
        theta: rng.gen_range(0.3..0.8),
        rtp: rng.gen(),
        stagnation: rng.gen_range(1..=3),
        knn_k: rng.gen_range(1..=5),
        inner_folds: rng.gen_range(2..=4),
        lambda: rng.gen_range(0.0..0.5),
        formulations,
        transfer: [TransferMode::Specific, TransferMode::SbxStyle, TransferMode::Off][rng.gen_range(0..3)],
        fitness: [FitnessMode::TaskSpecific, FitnessMode::Fit1, FitnessMode::Fit2][rng.gen_range(0..3)],
        norm_dir: if rng.gen() { NormDirection::Inverted } else { NormDirection::Literal },
        trigger: if rng.gen() { TransferTrigger::Global } else { TransferTrigger::PerTask },
        pool_sampling: if rng.gen() { PoolSampling::Concatenated } else { PoolSampling::PerTask },
        mutate_transferred: rng.gen(),
        pop_size: Some(rng.gen_range(2..=12)),
        seed: case,
        ..RunConfig::default()
    };
    let (mask, su) = remove_irrelevant(&train, config.lambda, config.n_bins, LogBase::Natural);
    let kept = train.select_features(&mask.kept_indices);
    let su = su.subset(&mask.kept_indices);
    let plan = stratified_folds(&kept, config.inner_folds, case, FoldKind::InnerFitness).unwrap();
    let evaluator = Evaluator::new(kept, &plan, config.knn_k, config.theta);
    let mut tasks = multitask::build_tasks(evaluator.data(), &su, d, &config, &evaluator, case)
        .map_err(|e| format!("build: {e}"))?;
    check_invariants(&tasks)?;
    let mut state = RunState::new(tasks.len(), case);
    for _ in 0..config.max_iter {
        multitask::step(&mut tasks, &mut state, &evaluator, &config);
        check_invariants(&tasks)?;
    }
    let front = multitask::final_front(&tasks, config.theta);
    let pts: Vec<(f64, f64)> = front.iter().map(|i| (i.obj().error_rate, i.obj().feature_rate)).collect();
    if front.is_empty() || pts.iter().any(|&a| pts.iter().any(|&b| dominates(b, a))) {
        return Err("final front empty or not mutually non-dominated".into());
    }
    Ok(())
}

fn criterion_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let failures: Vec<String> =
        (0..200).filter_map(|case| fuzz_once(&mut rng, case).err().map(|e| format!("case {case}: {e}"))).collect();
    verdict(failures.is_empty(), format!("{} violations in 200 runs {:?}", failures.len(), failures.first()))
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "non-dominated sorting oracle", criterion_sorting()),
        (2, "knee point oracle", criterion_knee()),
        (3, "symmetric uncertainty", criterion_su()),
        (4, "weighted-optimization round trip", criterion_wo()),
    ];

    let mut runs = Vec::new();
    let mut oracle = 0.0;
    for &seed in &SEEDS {
        let (data, planted) = planted(seed);
        let config = planted_config(seed);
        oracle += oracle_accuracy(&data, &planted, &config) / SEEDS.len() as f64;
        runs.push((run_experiment(&data, &config).unwrap(), planted));
    }
    results.push((5, "planted-feature recovery", criterion_planted(&runs, oracle)));
    results.push((6, "SRBCT spot check", criterion_srbct()));
    let defaults: Vec<RunReport> = runs.into_iter().map(|(r, _)| r).collect();
    results.push((7, "ablation directionality", criterion_ablation(&defaults)));
    results.push((8, "determinism", criterion_determinism()));
    results.push((9, "structural invariants under fuzzing", criterion_fuzz()));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, name, outcome) in &results {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {id} ({name}): {tag} - {detail}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
