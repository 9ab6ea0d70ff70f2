//! Semi-supervised learning on two concentric circles: a network fitted to
//! a handful of labelled points, with and without a manifold rule that
//! asks close points to share their class.

use std::fmt::Write as _;

use anyhow::Result;
use groundlog_core::tensor::Tensor;
use groundlog_core::ground::{CompileOptions, LossMode, TNormConfig, TNormFamily};
use groundlog_core::train::{train, ObjectiveConfig, OptimizerConfig, TrainConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{binary_accuracy, column, markdown_table, points_tensor, predict, Bundle, Report};

pub const MANIFOLD_RULE: &str = "forall p: forall q: Close(p, q) -> (A(p) <-> A(q))";

#[derive(Clone, Debug)]
pub struct CirclesConfig {
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Standard deviation of the radial jitter.
    pub noise: f64,
    pub points: usize,
    pub supervised: usize,
    pub unsupervised: usize,
    /// Share of ordered point pairs that `Close` should accept; sets σ.
    pub close_fraction: f64,
    pub threshold: f64,
    pub hidden: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub tnorm: TNormFamily,
    pub loss: LossMode,
    /// Number of consecutive seeds averaged by [`run`].
    pub seeds: u64,
}

impl Default for CirclesConfig {
    fn default() -> Self {
        CirclesConfig {
            inner_radius: 1.0,
            outer_radius: 2.0,
            noise: 0.08,
            points: 420,
            supervised: 20,
            unsupervised: 200,
            close_fraction: 0.05,
            threshold: 0.5,
            hidden: 64,
            lambda: 100.0,
            epochs: 3000,
            lr: 0.003,
            tnorm: TNormFamily::Lukasiewicz,
            loss: LossMode::Log,
            seeds: 5,
        }
    }
}

pub struct CirclesData {
    pub supervised: Vec<[f64; 2]>,
    pub labels: Vec<f64>,
    pub unsupervised: Vec<[f64; 2]>,
    pub unsupervised_labels: Vec<f64>,
    pub test: Vec<[f64; 2]>,
    pub test_labels: Vec<f64>,
}

/// Half the points on each circle at evenly spaced angles, radially
/// jittered, inner ones labelled 1; shuffled and split into supervised,
/// unsupervised and test points.
pub fn generate(cfg: &CirclesConfig, rng: &mut ChaCha8Rng) -> CirclesData {
    let jitter = Normal::new(0.0, cfg.noise).expect("finite noise");
    let mut pts: Vec<([f64; 2], f64)> = (0..cfg.points)
        .map(|i| {
            let half = cfg.points / 2;
            let inner = i < half;
            let r = if inner { cfg.inner_radius } else { cfg.outer_radius } + jitter.sample(rng);
            let k = if inner { i } else { i - half };
            let a = std::f64::consts::TAU * k as f64 / if inner { half } else { cfg.points - half } as f64;
            ([r * a.cos(), r * a.sin()], inner as u8 as f64)
        })
        .collect();
    pts.shuffle(rng);
    // The supervised draw is stratified: half from each circle.
    let mut sup = vec![];
    let mut rest = vec![];
    let mut quota = [cfg.supervised - cfg.supervised / 2, cfg.supervised / 2];
    for p in pts {
        let class = p.1 as usize;
        if quota[class] > 0 {
            quota[class] -= 1;
            sup.push(p);
        } else {
            rest.push(p);
        }
    }
    let (unsup, test) = rest.split_at(cfg.unsupervised.min(rest.len()));
    CirclesData {
        supervised: sup.iter().map(|p| p.0).collect(),
        labels: sup.iter().map(|p| p.1).collect(),
        unsupervised: unsup.iter().map(|p| p.0).collect(),
        unsupervised_labels: unsup.iter().map(|p| p.1).collect(),
        test: test.iter().map(|p| p.0).collect(),
        test_labels: test.iter().map(|p| p.1).collect(),
    }
}

/// σ for which `exp(-d²/σ²) >= threshold` holds on the given share of
/// ordered pairs of distinct points.
pub fn close_sigma(points: &[[f64; 2]], fraction: f64, threshold: f64) -> f64 {
    let mut d2 = vec![];
    for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            if i != j {
                d2.push((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2));
            }
        }
    }
    d2.sort_by(f64::total_cmp);
    let k = ((d2.len() as f64 * fraction) as usize).min(d2.len().saturating_sub(1));
    (d2[k] / (1.0 / threshold).ln()).sqrt()
}

pub fn bundle(cfg: &CirclesConfig, data: &CirclesData, sigma: f64, lambda: f64) -> Bundle {
    let mut domain = data.supervised.clone();
    domain.extend(&data.unsupervised);
    let program = format!(
        "# two circles, manifold regularization\n\
         domain Points from \"points\"\n\
         model NN = mlp(2, {h}, 1) hidden tanh output sigmoid\n\
         predicate A(Points) = NN\n\
         # Close(p, q) = [exp(-|p - q|^2 / sigma^2) >= {t}] with sigma = {sigma}\n\
         predicate Close(Points, Points) = table \"close\"\n\
         constraint \"{MANIFOLD_RULE}\" weight {lambda}\n\
         pointwise A inputs \"supervised\" labels \"labels\"\n",
        h = cfg.hidden,
        t = cfg.threshold,
    );
    Bundle {
        program,
        domains: vec![("points".into(), points_tensor(&domain), vec![])],
        matrices: vec![
            ("supervised".into(), points_tensor(&data.supervised)),
            ("labels".into(), column(&data.labels)),
        ],
        tables: vec![("close".into(), close_table(&domain, sigma, cfg.threshold))],
    }
}

/// `Close` over every ordered pair of points, computed once from the data.
pub fn close_table(points: &[[f64; 2]], sigma: f64, threshold: f64) -> Tensor {
    let n = points.len();
    let mut t = Tensor::zeros(&[n, n]);
    for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            if threshold <= (-d2 / (sigma * sigma)).exp() {
                t.data_mut()[i * n + j] = 1.0;
            }
        }
    }
    t
}

pub struct SeedOutcome {
    pub seed: u64,
    pub sigma: f64,
    pub baseline_accuracy: f64,
    pub constrained_accuracy: f64,
    /// Accuracy on the unlabelled training points.
    pub baseline_transductive: f64,
    pub constrained_transductive: f64,
    pub baseline_psi: f64,
    pub constrained_psi: f64,
    pub baseline_metrics: String,
    pub constrained_metrics: String,
    pub predictions: String,
    pub bundle: Bundle,
}

fn train_config(cfg: &CirclesConfig) -> TrainConfig {
    TrainConfig {
        objective: ObjectiveConfig {
            compile: CompileOptions {
                tnorm: TNormConfig::new(cfg.tnorm),
                ..Default::default()
            },
            loss: cfg.loss,
        },
        optimizer: OptimizerConfig::adam(cfg.lr),
        epochs: cfg.epochs,
    }
}

/// Trains the supervised-only baseline (λ = 0) and the constrained model
/// from the same initial weights and scores both on the test points.
pub fn run_seed(cfg: &CirclesConfig, seed: u64) -> Result<SeedOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = generate(cfg, &mut rng);
    let mut domain = data.supervised.clone();
    domain.extend(&data.unsupervised);
    let sigma = close_sigma(&domain, cfg.close_fraction, cfg.threshold);
    let tc = train_config(cfg);
    let test = points_tensor(&data.test);

    let unsup = points_tensor(&data.unsupervised);
    let fit = |lambda: f64| -> Result<(f64, f64, f64, String, Vec<f64>, Bundle)> {
        let b = bundle(cfg, &data, sigma, lambda);
        let mut kb = b.knowledge_base(seed)?;
        let rep = train(&mut kb, &tc)?;
        let scores = predict(&kb, "A", &test)?.data().to_vec();
        let seen = predict(&kb, "A", &unsup)?.data().to_vec();
        let f = kb.constraints()[0].formula.clone();
        let psi = groundlog_core::train::evaluate_formula(&kb, &f, tc.objective.compile)?;
        let transductive = binary_accuracy(&seen, &data.unsupervised_labels);
        Ok((binary_accuracy(&scores, &data.test_labels), transductive, psi, rep.to_csv(), scores, b))
    };
    let (baseline_accuracy, baseline_transductive, baseline_psi, baseline_metrics, base_scores, _) = fit(0.0)?;
    let (constrained_accuracy, constrained_transductive, constrained_psi, constrained_metrics, scores, bundle) =
        fit(cfg.lambda)?;

    let ids: Vec<String> = (0..data.test.len()).map(|i| i.to_string()).collect();
    let mut predictions = String::from("row,x,y,label,baseline,constrained\n");
    for (i, p) in data.test.iter().enumerate() {
        writeln!(
            predictions,
            "{},{},{},{},{},{}",
            ids[i], p[0], p[1], data.test_labels[i], base_scores[i], scores[i]
        )
        .unwrap();
    }
    Ok(SeedOutcome {
        seed,
        sigma,
        baseline_accuracy,
        constrained_accuracy,
        baseline_transductive,
        constrained_transductive,
        baseline_psi,
        constrained_psi,
        baseline_metrics,
        constrained_metrics,
        predictions,
        bundle,
    })
}

pub struct CirclesOutcome {
    pub seeds: Vec<SeedOutcome>,
    pub baseline_accuracy: f64,
    pub constrained_accuracy: f64,
    pub report: Report,
}

/// Runs `cfg.seeds` consecutive seeds starting at `seed` and averages.
pub fn run(cfg: &CirclesConfig, seed: u64) -> Result<CirclesOutcome> {
    let seeds: Vec<SeedOutcome> = (seed..seed + cfg.seeds).map(|s| run_seed(cfg, s)).collect::<Result<_>>()?;
    let n = seeds.len().max(1) as f64;
    let baseline_accuracy = seeds.iter().map(|s| s.baseline_accuracy).sum::<f64>() / n;
    let constrained_accuracy = seeds.iter().map(|s| s.constrained_accuracy).sum::<f64>() / n;

    let mut report = Report::new("circles");
    report.set("baseline_accuracy", baseline_accuracy);
    report.set("constrained_accuracy", constrained_accuracy);
    report.set("improvement", constrained_accuracy - baseline_accuracy);
    for s in &seeds {
        report.set(format!("seed_{}_baseline_accuracy", s.seed), s.baseline_accuracy);
        report.set(format!("seed_{}_constrained_accuracy", s.seed), s.constrained_accuracy);
        report.set(format!("seed_{}_sigma", s.seed), s.sigma);
        report.add_file(format!("seed_{}/metrics_baseline.csv", s.seed), s.baseline_metrics.clone());
        report.add_file(format!("seed_{}/metrics_constrained.csv", s.seed), s.constrained_metrics.clone());
        report.add_file(format!("seed_{}/predictions.csv", s.seed), s.predictions.clone());
        for (name, content) in s.bundle.files() {
            report.add_file(format!("seed_{}/{name}", s.seed), content);
        }
    }
    let rows: Vec<Vec<String>> = seeds
        .iter()
        .map(|s| {
            vec![
                s.seed.to_string(),
                format!("{:.4}", s.sigma),
                format!("{:.3}", s.baseline_accuracy),
                format!("{:.3}", s.constrained_accuracy),
                format!("{:.4}", s.baseline_psi),
                format!("{:.4}", s.constrained_psi),
            ]
        })
        .collect();
    let mut md = format!(
        "# Two circles\n\n{} points, {} supervised, {} unsupervised, {} test. \
         Rule `{MANIFOLD_RULE}` with weight {}, {} t-norm, {} loss, {} epochs of Adam at {}.\n\n",
        cfg.points,
        cfg.supervised,
        cfg.unsupervised,
        cfg.points - cfg.supervised - cfg.unsupervised,
        cfg.lambda,
        cfg.tnorm,
        cfg.loss,
        cfg.epochs,
        cfg.lr
    );
    md.push_str(&markdown_table(
        &["seed", "sigma", "supervised only", "with rule", "rule truth (supervised only)", "rule truth (with rule)"],
        &rows,
    ));
    writeln!(
        md,
        "\nMean test accuracy: supervised only {baseline_accuracy:.3}, with rule {constrained_accuracy:.3}."
    )
    .unwrap();
    report.markdown = md;
    Ok(CirclesOutcome {
        seeds,
        baseline_accuracy,
        constrained_accuracy,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_sigma() {
        let cfg = CirclesConfig::default();
        let d = generate(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(d.supervised.len(), 20);
        assert_eq!(d.unsupervised.len(), 200);
        assert_eq!(d.test.len(), 200);
        let mut pts = d.supervised.clone();
        pts.extend(&d.unsupervised);
        let sigma = close_sigma(&pts, 0.05, 0.5);
        let radius2 = sigma * sigma * 2f64.ln();
        let mut close = 0;
        let mut crossing = 0;
        for p in &pts {
            for q in &pts {
                let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                if d2 <= radius2 {
                    close += 1;
                    let (rp, rq) = (p[0].hypot(p[1]), q[0].hypot(q[1]));
                    crossing += ((rp < 1.5) != (rq < 1.5)) as usize;
                }
            }
        }
        let share = close as f64 / (pts.len() * pts.len()) as f64;
        assert!((0.04..0.07).contains(&share), "{share}");
        assert_eq!(crossing, 0);
    }
}
