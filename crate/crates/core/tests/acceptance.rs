//! Acceptance suite for the scoring and training stack. Prints one line per
//! criterion and exits non-zero if any fails.
//!
//! Run with `cargo test -p counterpoint-core --test acceptance`. Set
//! `HARASSMENT_TSV` to a harassment TSV to enable the corpus check.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use counterpoint_core::balance::{adasyn, BalancerConfig};
use counterpoint_core::corpus::{load_harassment_tsv, Label};
use counterpoint_core::eval::{ablation, kde_report, trapezoid, CvConfig, FeatureGroup};
use counterpoint_core::gbdt::{train, train_with_report, TrainParams};
use counterpoint_core::scorers::{FeatureRegistry, SentimentAnalyzer};
use counterpoint_core::synth::trigger_signal;
use counterpoint_core::{clean, FeatureDataset};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data");

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Suite {
    failed: usize,
}

impl Suite {
    fn run(&mut self, name: &str, criterion: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = criterion();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                self.failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {name} ({secs:.2}s): {detail}");
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

fn cleaning_golden() -> Outcome {
    let text = std::fs::read_to_string(format!("{DATA}/cleaning_golden.tsv")).unwrap();
    let start = Instant::now();
    let mut rows = 0;
    let mut mismatches = Vec::new();
    for line in text.lines().skip(1) {
        let (raw, expected) = line.split_once('\t').expect("two columns");
        let (raw, expected) = (unescape(raw), unescape(expected));
        rows += 1;
        let got = clean(&raw);
        if got.as_str() != expected {
            mismatches.push(format!("{raw:?} -> {:?}, want {expected:?}", got.as_str()));
        }
    }
    let elapsed = start.elapsed();
    let spec_examples = [
        (
            "@Jane_Doe You are AMAZING!! https://t.co/xYz",
            "MENTION you are amazing!!",
        ),
        ("", ""),
        ("line1\nline2   end", "line1 line2 end"),
    ];
    for (raw, expected) in spec_examples {
        if clean(raw).as_str() != expected {
            mismatches.push(format!("{raw:?}"));
        }
    }
    verdict(
        rows == 20 && mismatches.is_empty() && elapsed < Duration::from_secs(1),
        format!(
            "{rows} pairs, {} mismatches, {elapsed:?} {mismatches:?}",
            mismatches.len()
        ),
    )
}

fn sentiment_parity() -> Outcome {
    let text = std::fs::read_to_string(format!("{DATA}/sentiment_golden.tsv")).unwrap();
    let analyzer = SentimentAnalyzer::bundled();
    let (mut rows, mut worst_compound, mut worst_prop) = (0, 0.0f64, 0.0f64);
    let mut bad = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let want: Vec<f64> = cols[1..5].iter().map(|c| c.parse().unwrap()).collect();
        let got = analyzer.polarity_scores(cols[0]);
        let dc = (got.compound - want[3]).abs();
        let dp = [got.neg - want[0], got.neu - want[1], got.pos - want[2]]
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()));
        worst_compound = worst_compound.max(dc);
        worst_prop = worst_prop.max(dp);
        if dc > 1e-4 || dp > 1e-3 {
            bad.push(cols[0].to_string());
        }
        rows += 1;
    }
    verdict(
        rows == 50 && bad.is_empty(),
        format!(
            "{rows} sentences, max |d compound| {worst_compound:.2e}, max |d neg/neu/pos| {worst_prop:.2e} {bad:?}"
        ),
    )
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, positive_rate: f64) -> FeatureDataset {
    let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    let reg = Arc::new(FeatureRegistry::new(names).unwrap());
    loop {
        let labels: Vec<Label> = (0..n)
            .map(|_| Label::from_positive(rng.random::<f64>() < positive_rate))
            .collect();
        let pos = labels.iter().filter(|l| l.is_positive()).count();
        if pos == 0 || pos == n {
            continue;
        }
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|l| {
                let shift = if l.is_positive() { 0.3 } else { 0.0 };
                (0..d).map(|_| (rng.random::<f64>() * 0.7 + shift).min(1.0)).collect()
            })
            .collect();
        return FeatureDataset::from_rows(reg, &rows, labels).unwrap();
    }
}

/// All-pairs neighbour oracle: squared distance, then index.
fn brute_neighbors(ds: &FeatureDataset, q: usize, pool: &[usize], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = pool
        .iter()
        .filter(|&&j| j != q)
        .map(|&j| {
            let d: f64 = ds.row(q).iter().zip(ds.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, j)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, j)| j).collect()
}

fn on_segment(p: &[f64], a: &[f64], b: &[f64]) -> bool {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let ap: Vec<f64> = a.iter().zip(p).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    if len2 == 0.0 {
        return ap.iter().all(|v| v.abs() < 1e-12);
    }
    let t = ab.iter().zip(&ap).map(|(u, v)| u * v).sum::<f64>() / len2;
    let off: f64 = ab.iter().zip(&ap).map(|(u, v)| (v - t * u).powi(2)).sum::<f64>().sqrt();
    (-1e-12..=1.0 + 1e-12).contains(&t) && off < 1e-9
}

fn adasyn_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut count_fail, mut segment_fail, mut neighbor_fail, mut checked_neighbors) = (0, 0, 0, 0);
    let mut synthetic_total = 0;
    for trial in 0..100u64 {
        let n = rng.random_range(20..=500);
        let rate = rng.random_range(0.05..0.45);
        let ds = random_dataset(&mut rng, n, 22, rate);
        let cfg = BalancerConfig {
            seed: trial,
            ..Default::default()
        };
        let out = adasyn(&ds, &cfg).unwrap();
        let plan = &out.plan;
        let (m_s, m_l) = (plan.minority_count, plan.majority_count);
        let final_minority = out.dataset.count(plan.minority);
        if final_minority.abs_diff(m_l) > m_s {
            count_fail += 1;
        }
        let minority: Vec<usize> = (0..n).filter(|&i| ds.labels()[i] == plan.minority).collect();
        for (s, syn) in out.synthetics.iter().enumerate() {
            synthetic_total += 1;
            let p = out.dataset.row(n + s);
            let seed = ds.row(syn.seed);
            let pool = brute_neighbors(&ds, syn.seed, &minority, cfg.k);
            let ok = if pool.is_empty() {
                p == seed
            } else {
                pool.iter().any(|&z| on_segment(p, seed, ds.row(z)))
            };
            if !ok {
                segment_fail += 1;
            }
        }
        if n <= 200 {
            checked_neighbors += 1;
            let all: Vec<usize> = (0..n).collect();
            for (slot, &i) in plan.minority_indices.iter().enumerate() {
                if plan.neighbors[slot] != brute_neighbors(&ds, i, &all, cfg.k)
                    || plan.minority_neighbors[slot] != brute_neighbors(&ds, i, &minority, cfg.k)
                {
                    neighbor_fail += 1;
                }
            }
        }
    }
    verdict(
        count_fail == 0 && segment_fail == 0 && neighbor_fail == 0 && checked_neighbors > 0,
        format!(
            "100 datasets, {synthetic_total} synthetics; count violations {count_fail}, \
             off-segment {segment_fail}, neighbour mismatches {neighbor_fail} over {checked_neighbors} datasets with n <= 200"
        ),
    )
}

/// Exhaustive first-split oracle for one boosting round from the prior.
fn oracle_first_split(ds: &FeatureDataset, params: &TrainParams) -> Option<(usize, f64)> {
    let n = ds.len();
    let y: Vec<f64> = ds
        .labels()
        .iter()
        .map(|l| if l.is_positive() { 1.0 } else { 0.0 })
        .collect();
    let p = y.iter().sum::<f64>() / n as f64;
    let g: Vec<f64> = y.iter().map(|yi| p - yi).collect();
    let h = p * (1.0 - p);
    let lambda = params.l2_lambda;
    let score = |gs: f64, hs: f64| gs * gs / (hs + lambda);
    let g_all: f64 = g.iter().sum();
    let parent = score(g_all, h * n as f64);

    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..ds.n_features() {
        let mut values: Vec<f64> = (0..n).map(|i| ds.row(i)[f]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for w in values.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let left: Vec<usize> = (0..n).filter(|&i| ds.row(i)[f] <= t).collect();
            let nl = left.len();
            if nl < params.min_samples_leaf || n - nl < params.min_samples_leaf {
                continue;
            }
            let gl: f64 = left.iter().map(|&i| g[i]).sum();
            let gain = 0.5 * (score(gl, h * nl as f64) + score(g_all - gl, h * (n - nl) as f64) - parent);
            let wins = match best {
                None => true,
                Some((_, _, b)) => gain > b + 1e-10 * b.abs().max(1e-4),
            };
            if wins {
                best = Some((f, t, gain));
            }
        }
    }
    best.filter(|b| b.2 > params.min_gain).map(|(f, t, _)| (f, t))
}

fn gbdt_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut split_fail, mut loss_fail) = (0, 0);
    let mut details = Vec::new();
    for trial in 0..50 {
        let n = rng.random_range(10..=80);
        let d = rng.random_range(1..=5);
        let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
        let reg = Arc::new(FeatureRegistry::new(names).unwrap());
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let levels = rng.random_range(3..=20) as f64;
        while labels.len() < n
            || labels.iter().all(|l: &Label| l.is_positive())
            || labels.iter().all(|l| !l.is_positive())
        {
            if labels.len() >= n {
                rows.clear();
                labels.clear();
            }
            let row: Vec<f64> = (0..d)
                .map(|_| (rng.random::<f64>() * levels).floor() / levels)
                .collect();
            let noisy = rng.random::<f64>() < 0.15;
            labels.push(Label::from_positive((row[0] > 0.5) != noisy));
            rows.push(row);
        }
        let ds = FeatureDataset::from_rows(reg, &rows, labels).unwrap();
        let params = TrainParams {
            num_trees: 1,
            max_leaves: 2,
            min_samples_leaf: rng.random_range(1..=3),
            ..Default::default()
        };
        let model = train(&ds, &params).unwrap();
        let got = model.trees[0].root_split();
        let want = oracle_first_split(&ds, &params);
        let same = match (got, want) {
            (None, None) => true,
            (Some((fa, ta)), Some((fb, tb))) => fa == fb && (ta - tb).abs() < 1e-12,
            _ => false,
        };
        if !same {
            split_fail += 1;
            details.push(format!("trial {trial}: got {got:?}, oracle {want:?}"));
        }

        let params = TrainParams {
            num_trees: 30,
            min_samples_leaf: params.min_samples_leaf,
            ..Default::default()
        };
        let (_, report) = train_with_report(&ds, &params).unwrap();
        if report.losses.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            loss_fail += 1;
            details.push(format!("trial {trial}: loss increased"));
        }
    }
    verdict(
        split_fail == 0 && loss_fail == 0,
        format!("50 datasets; split mismatches {split_fail}, loss increases {loss_fail} {details:?}"),
    )
}

fn classifier_sanity() -> Outcome {
    let start = Instant::now();
    let ds = trigger_signal(2000, 0.254, 0.12, 11).unwrap();
    let cfg = CvConfig {
        k: 10,
        seed: 5,
        ..Default::default()
    };
    let groups = [
        FeatureGroup::All,
        FeatureGroup::Only(counterpoint_core::scorers::Family::Toxicity),
        FeatureGroup::RandomBaseline,
    ];
    let reports = ablation(&ds, &groups, &cfg, &TrainParams::default()).unwrap();
    let elapsed = start.elapsed();
    let mean = |name: &str| reports.iter().find(|r| r.feature_set == name).unwrap().mean;
    let (all, tox, random) = (mean("all"), mean("toxicity"), mean("random"));
    let folds_ok = reports.iter().all(|r| r.fold_aucs.len() == 10);
    verdict(
        all >= 0.95
            && (tox - all).abs() <= 0.02
            && (random - 0.5).abs() <= 0.05
            && folds_ok
            && elapsed < Duration::from_secs(120),
        format!("10-fold mean AUC all {all:.4}, toxicity-only {tox:.4}, random {random:.4}; {elapsed:?}"),
    )
}

fn harassment_corpus() -> Outcome {
    let Ok(path) = std::env::var("HARASSMENT_TSV") else {
        return Outcome::Skip("HARASSMENT_TSV not set; harassment corpus check not run".into());
    };
    match load_harassment_tsv(&path) {
        Ok(corpus) => {
            let balance = corpus.class_balance();
            verdict(
                corpus.len() == 20194 && (balance - 0.254).abs() <= 0.001,
                format!(
                    "{} unique examples, class balance {:.2}%",
                    corpus.len(),
                    balance * 100.0
                ),
            )
        }
        Err(e) => Outcome::Fail(format!("{path}: {e}")),
    }
}

/// Density at `x` from the kernel sum, renormalised by a fine Simpson
/// integral over [0, 1].
fn kde_oracle(scores: &[f64], h: f64, x: f64) -> f64 {
    let raw = |t: f64| scores.iter().map(|s| (-0.5 * ((t - s) / h).powi(2)).exp()).sum::<f64>();
    let m = 20_000;
    let step = 1.0 / m as f64;
    let mut mass = raw(0.0) + raw(1.0);
    for i in 1..m {
        mass += raw(i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    raw(x) / (mass * step / 3.0)
}

fn draw(rng: &mut ChaCha8Rng, n: usize, centre: f64, width: f64) -> Vec<f64> {
    (0..n)
        .map(|_| (centre + width * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0))
        .collect()
}

fn kde() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n0 = rng.random_range(2..400);
        let n1 = rng.random_range(2..400);
        let (c0, c1) = (rng.random::<f64>(), rng.random::<f64>());
        let (w0, w1) = (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
        let a = draw(&mut rng, n0, c0, w0);
        let b = draw(&mut rng, n1, c1, w1);
        let k = kde_report(&a, &b, None).unwrap();
        for c in [&k.not_hateful, &k.hateful] {
            worst = worst.max((trapezoid(&k.grid, &c.density) - 1.0).abs());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let normal = rand_distr::Normal::new(0.0, 0.02).unwrap();
    use rand_distr::Distribution;
    let low: Vec<f64> = (0..300).map(|_| 0.1 + normal.sample(&mut rng)).collect();
    let high: Vec<f64> = (0..300).map(|_| 0.9 + normal.sample(&mut rng)).collect();
    let k = kde_report(&low, &high, None).unwrap();
    let i = 460; // grid point 460/511 ~ 0.9002
    let x = k.grid[i];
    let (hate, not) = (k.hateful.density[i], k.not_hateful.density[i]);
    let ratio = hate / not;
    let oracle_hate = kde_oracle(&high, k.hateful.bandwidth, x);
    let oracle_not = kde_oracle(&low, k.not_hateful.bandwidth, x);
    let rel = (hate - oracle_hate).abs() / oracle_hate;
    verdict(
        worst <= 0.01 && ratio >= 10.0 && oracle_hate / oracle_not >= 10.0 && rel < 1e-3,
        format!(
            "20 sets, max |integral - 1| {worst:.2e}; density ratio at {x:.4} = {ratio:.3e} \
             (oracle {:.3e}), hateful density vs analytic kernel sum rel err {rel:.2e}",
            oracle_hate / oracle_not
        ),
    )
}

fn main() -> ExitCode {
    let mut suite = Suite { failed: 0 };
    suite.run("cleaning golden suite", cleaning_golden);
    suite.run("sentiment parity", sentiment_parity);
    suite.run("ADASYN properties", adasyn_properties);
    suite.run("GBDT oracle equivalence", gbdt_oracle);
    suite.run("classifier sanity", classifier_sanity);
    suite.run("harassment corpus loader", harassment_corpus);
    suite.run("KDE", kde);
    if suite.failed == 0 {
        println!("acceptance: all criteria passed or skipped");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", suite.failed);
        ExitCode::FAILURE
    }
}
