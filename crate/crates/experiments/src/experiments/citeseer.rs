//! Document classification on a citation network: a bag-of-words network
//! trained on a fraction of the papers, with and without rules saying that
//! a paper and the papers it cites share their class.

use std::fmt::Write as _;

use anyhow::Result;
use groundlog_core::ground::{CompileOptions, LossMode, TNormConfig, TNormFamily};
use groundlog_core::tensor::Tensor;
use groundlog_core::train::{train, ObjectiveConfig, OptimizerConfig, TrainConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argmax, markdown_table, predict, predictions_csv, Bundle, Report};
use crate::citeseer::{Citeseer, CLASSES};

#[derive(Clone, Debug)]
pub struct CiteseerConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Weight of each class rule.
    pub lambda: f64,
    pub fractions: Vec<f64>,
    pub folds: usize,
    pub tnorm: TNormFamily,
    /// Grounding guard; the rules range over all ordered pairs of papers.
    pub cap: u128,
}

impl Default for CiteseerConfig {
    fn default() -> Self {
        CiteseerConfig {
            hidden: 200,
            epochs: 100,
            lr: 0.01,
            lambda: 1000.0,
            fractions: vec![0.1, 0.9],
            folds: 10,
            tnorm: TNormFamily::Product,
            cap: 20_000_000,
        }
    }
}

pub fn rule(class: &str) -> String {
    format!("forall x: forall y: ({class}(x) and Cite(x, y)) -> {class}(y)")
}

/// Program and data for one split; the rules are left out when `lambda`
/// is 0.
pub fn bundle(data: &Citeseer, cfg: &CiteseerConfig, train_rows: &[usize], lambda: f64) -> Bundle {
    let words = data.words();
    let mut program = format!(
        "# citation network, class rules over cited papers\n\
         domain Papers from \"papers\"\n\
         model NN = mlp({words}, {}, {}) hidden relu output softmax\n",
        cfg.hidden,
        CLASSES.len()
    );
    for (i, c) in CLASSES.iter().enumerate() {
        writeln!(program, "predicate {c}(Papers) = slice(NN, {i})").unwrap();
    }
    program.push_str("predicate Cite(Papers, Papers) = table \"cites\"\n");
    if lambda > 0.0 {
        for c in CLASSES {
            writeln!(program, "constraint \"{}\" weight {lambda}", rule(c)).unwrap();
        }
    }
    program.push_str("pointwise NN inputs \"train_x\" labels \"train_y\"\n");
    let one_hot = data.one_hot();
    let pick = |t: &Tensor| {
        let w = t.cols();
        let rows: Vec<f64> = train_rows.iter().flat_map(|&i| t.row(i).to_vec()).collect();
        Tensor::matrix(train_rows.len(), w, rows).expect("selected rows")
    };
    Bundle {
        program,
        domains: vec![("papers".into(), data.features.clone(), data.ids.clone())],
        matrices: vec![("train_x".into(), pick(&data.features)), ("train_y".into(), pick(&one_hot))],
        tables: vec![("cites".into(), data.cite_table())],
    }
}

/// Row order of fold `fold`: a seeded shuffle, training rows first.
pub fn split(papers: usize, fraction: f64, fold: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..papers).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(fold as u64));
    rows.shuffle(&mut rng);
    let n = ((papers as f64 * fraction).round() as usize).clamp(1, papers.saturating_sub(1).max(1));
    let test = rows.split_off(n);
    (rows, test)
}

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fraction: f64,
    pub fold: usize,
    pub baseline: f64,
    pub constrained: f64,
}

pub struct CiteseerOutcome {
    pub folds: Vec<FoldResult>,
    /// `(fraction, baseline, constrained)` averaged over folds.
    pub means: Vec<(f64, f64, f64)>,
    pub report: Report,
}

impl CiteseerOutcome {
    pub fn mean(&self, fraction: f64) -> Option<(f64, f64)> {
        self.means
            .iter()
            .find(|m| (m.0 - fraction).abs() < 1e-9)
            .map(|m| (m.1, m.2))
    }
}

fn accuracy(scores: &Tensor, labels: &[usize], rows: &[usize]) -> f64 {
    let ok = rows.iter().filter(|&&i| argmax(scores.row(i)) == labels[i]).count();
    ok as f64 / rows.len().max(1) as f64
}

pub fn run(data: &Citeseer, cfg: &CiteseerConfig, seed: u64) -> Result<CiteseerOutcome> {
    let tc = TrainConfig {
        objective: ObjectiveConfig {
            compile: CompileOptions {
                tnorm: TNormConfig::new(cfg.tnorm),
                cap: cfg.cap,
            },
            loss: LossMode::Log,
        },
        optimizer: OptimizerConfig::adam(cfg.lr),
        epochs: cfg.epochs,
    };
    let mut report = Report::new("citeseer");
    let mut folds = vec![];
    let mut means = vec![];
    for &fraction in &cfg.fractions {
        let pct = (fraction * 100.0).round() as usize;
        let (mut sb, mut sc) = (0.0, 0.0);
        for fold in 0..cfg.folds {
            let (train_rows, test_rows) = split(data.papers(), fraction, fold, seed);
            let mut scores = vec![];
            let mut accs = vec![];
            for (tag, lambda) in [("baseline", 0.0), ("constrained", cfg.lambda)] {
                let b = bundle(data, cfg, &train_rows, lambda);
                let mut kb = b.knowledge_base(seed ^ fold as u64)?;
                let rep = train(&mut kb, &tc)?;
                let out = predict(&kb, "NN", &data.features)?;
                accs.push(accuracy(&out, &data.labels, &test_rows));
                report.add_file(format!("train_{pct}/fold_{fold}/metrics_{tag}.csv"), rep.to_csv());
                scores.push(out);
            }
            log::info!(
                "citeseer {pct}% fold {fold}: baseline {:.4} constrained {:.4}",
                accs[0],
                accs[1]
            );
            let ids: Vec<String> = test_rows.iter().map(|&i| data.ids[i].clone()).collect();
            let cols: Vec<Vec<f64>> = (0..CLASSES.len())
                .map(|c| test_rows.iter().map(|&i| scores[1].row(i)[c]).collect())
                .collect();
            report.add_file(
                format!("train_{pct}/fold_{fold}/predictions.csv"),
                predictions_csv(&ids, &CLASSES, &cols),
            );
            sb += accs[0];
            sc += accs[1];
            folds.push(FoldResult {
                fraction,
                fold,
                baseline: accs[0],
                constrained: accs[1],
            });
        }
        let n = cfg.folds.max(1) as f64;
        means.push((fraction, sb / n, sc / n));
        report.set(format!("train_{pct}_baseline_accuracy"), sb / n);
        report.set(format!("train_{pct}_constrained_accuracy"), sc / n);
        report.set(format!("train_{pct}_improvement"), (sc - sb) / n);
    }
    let mut fold_csv = String::from("fraction,fold,baseline,constrained\n");
    for f in &folds {
        writeln!(fold_csv, "{},{},{},{}", f.fraction, f.fold, f.baseline, f.constrained).unwrap();
    }
    report.add_file("folds.csv", fold_csv);
    let rows: Vec<Vec<String>> = means
        .iter()
        .map(|(f, b, c)| {
            vec![
                format!("{:.0}%", f * 100.0),
                format!("{:.2}", b * 100.0),
                format!("{:.2}", c * 100.0),
                format!("{:+.2}", (c - b) * 100.0),
            ]
        })
        .collect();
    let mut md = format!(
        "# Citeseer\n\n{} papers, {} words, {} citation pairs. {}-fold average test accuracy (%), \
         network {}-{}-{}, rules weighted {} under the {} t-norm, {} epochs.\n\n",
        data.papers(),
        data.words(),
        data.edges.len(),
        cfg.folds,
        data.words(),
        cfg.hidden,
        CLASSES.len(),
        cfg.lambda,
        cfg.tnorm,
        cfg.epochs
    );
    md.push_str(&markdown_table(&["training share", "network", "with rules", "difference"], &rows));
    report.markdown = md;
    Ok(CiteseerOutcome { folds, means, report })
}
