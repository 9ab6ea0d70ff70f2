//! Command-line interface: train, check, collective inference, DNF
//! enumeration, gradient checks and the bundled experiments.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use groundlog_core::ground::{CompileOptions, LossMode, TNormConfig, TNormFamily, DEFAULT_CAP};
use groundlog_core::kb::KnowledgeBase;
use groundlog_core::learners::{Binding, GivenRegistry};
use groundlog_core::logic::parse_program;
use groundlog_core::tensor::{read_checkpoint, write_checkpoint};
use groundlog_core::train::{
    check_objective, collective_infer, enumerate_dnf, evaluate_formula, train, CollectiveConfig, ObjectiveConfig,
    OptimizerConfig, OptimizerKind, TrainConfig,
};

use crate::data::CsvData;
use crate::experiments::{self, predict, predictions_csv, ExperimentOptions, NAMES};

// Stdout writes that report failure (a closed pipe) instead of panicking.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        writeln!(std::io::stdout().lock(), $($arg)*)?;
    }};
}

#[derive(Parser, Debug)]
#[command(name = "groundlog", version, about = "Learning and reasoning with first-order constraints over neural predicates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the program's models to its constraints and supervision.
    Train(TrainArgs),
    /// Print the truth degree of every constraint.
    Check(CheckArgs),
    /// Re-estimate predicate truth values so that they satisfy the
    /// constraints while staying close to the model outputs.
    Collective(CollectiveArgs),
    /// Rank every single-variable DNF over some unary predicates.
    EnumerateDnf(DnfArgs),
    /// Compare analytic and finite-difference gradients of the objective.
    Gradcheck(GradcheckArgs),
    /// Run one of the bundled experiments, or `all`.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ProgramArgs {
    /// Program file (.lyr).
    pub program: PathBuf,
    /// Directory holding the CSV data sources; defaults to the program's
    /// directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Parameter checkpoint to load before running.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "product")]
    pub tnorm: TNormFamily,
    /// Grounding guard: largest number of tuples a quantifier nest may
    /// enumerate.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: u128,
    /// Seed for parameter initialisation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ProgramArgs {
    fn compile(&self) -> CompileOptions {
        CompileOptions {
            tnorm: TNormConfig::new(self.tnorm),
            cap: self.cap,
        }
    }

    fn load(&self) -> Result<KnowledgeBase> {
        let src = fs::read_to_string(&self.program)
            .with_context(|| format!("reading {}", self.program.display()))?;
        let program = parse_program(&src).with_context(|| format!("parsing {}", self.program.display()))?;
        let dir = match &self.data {
            Some(d) => d.clone(),
            None => self.program.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        if !dir.as_os_str().is_empty() && !dir.is_dir() {
            bail!("data directory {} does not exist", dir.display());
        }
        let mut kb = KnowledgeBase::from_program(&program, &CsvData::new(dir), &GivenRegistry::builtin(), self.seed)?;
        if let Some(ck) = &self.checkpoint {
            let f = File::open(ck).with_context(|| format!("opening checkpoint {}", ck.display()))?;
            let entries = read_checkpoint(std::io::BufReader::new(f))
                .with_context(|| format!("reading checkpoint {}", ck.display()))?;
            kb.params_mut().load_entries(&entries)?;
        }
        Ok(kb)
    }
}

#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    #[arg(long, default_value = "adam")]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
}

impl OptimArgs {
    fn config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            lr: self.lr,
            ..Default::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value = "log")]
    pub loss: LossMode,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// Ignore every constraint weight (the λ = 0 baseline).
    #[arg(long)]
    pub supervised_only: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
}

#[derive(Args, Debug)]
pub struct CollectiveArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    #[arg(long, default_value = "log")]
    pub loss: LossMode,
    #[arg(long, default_value = "adam")]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub prior_weight: f64,
    /// Comma-separated predicates to re-estimate; defaults to every
    /// predicate bound to a model.
    #[arg(long, value_delimiter = ',')]
    pub predicates: Option<Vec<String>>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DnfArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    /// Comma-separated unary predicates over one domain.
    #[arg(long, value_delimiter = ',', required = true)]
    pub predicates: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub max_vars: usize,
    /// Also write the ranking as CSV to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    #[arg(long, default_value = "log")]
    pub loss: LossMode,
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    /// Probe at most this many entries per parameter tensor.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// circles, rectangles-collective, rectangles-check, sequence-rules,
    /// citeseer or all.
    pub name: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Check(a) => cmd_check(&a),
        Command::Collective(a) => cmd_collective(&a),
        Command::EnumerateDnf(a) => cmd_dnf(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Experiment(a) => cmd_experiment(&a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

/// Row names, falling back to the row index.
fn row_ids(labels: &[String], n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match labels.get(i) {
            Some(l) if !l.is_empty() => l.clone(),
            _ => i.to_string(),
        })
        .collect()
}

/// Scores of every unary learned or tabulated predicate, grouped by
/// domain, as one predictions CSV per domain.
fn predictions(kb: &KnowledgeBase) -> Result<Vec<(String, String)>> {
    let mut out = vec![];
    for (dname, domain) in kb.domains() {
        let rows = domain.constant_rows();
        let n = rows.rows();
        let mut names = vec![];
        let mut cols = vec![];
        for s in kb.symbols().filter(|s| s.is_predicate() && s.inputs.len() == 1 && s.inputs[0] == dname) {
            let col = match &s.binding {
                Binding::Model(_) | Binding::Slice { .. } => predict(kb, &s.name, rows)?.data().to_vec(),
                Binding::Table(t) if t.numel() == n => t.data().to_vec(),
                Binding::Free(id) => kb.params().get(*id).data().iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect(),
                _ => continue,
            };
            if col.len() != n {
                continue;
            }
            names.push(s.name.as_str());
            cols.push(col);
        }
        if names.is_empty() {
            continue;
        }
        let ids = row_ids(domain.labels(), n);
        out.push((format!("predictions_{dname}.csv"), predictions_csv(&ids, &names, &cols)));
    }
    Ok(out)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut kb = a.program.load()?;
    if a.supervised_only {
        for c in kb.constraints_mut() {
            c.weight = 0.0;
        }
    }
    let cfg = TrainConfig {
        objective: ObjectiveConfig {
            compile: a.program.compile(),
            loss: a.loss,
        },
        optimizer: a.optim.config(),
        epochs: a.epochs,
    };
    let report = train(&mut kb, &cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    create_dir(&a.out)?;
    write(&a.out.join("metrics.csv"), &report.to_csv())?;
    let ck = a.out.join("checkpoint.glck");
    let f = File::create(&ck).with_context(|| format!("creating {}", ck.display()))?;
    write_checkpoint(BufWriter::new(f), &kb.params().to_entries())?;
    for (name, csv) in predictions(&kb)? {
        write(&a.out.join(name), &csv)?;
    }
    if let Some(last) = report.last() {
        say!("epoch {} objective {:.6}", last.epoch, last.total);
        for (src, psi) in report.constraints.iter().zip(&last.psi) {
            say!("{psi:.6}\t{src}");
        }
    }
    say!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_check(a: &CheckArgs) -> Result<()> {
    let kb = a.program.load()?;
    let opts = a.program.compile();
    for c in kb.constraints() {
        let psi = evaluate_formula(&kb, &c.formula, opts).with_context(|| format!("evaluating `{}`", c.source))?;
        let tag = if c.test_only { "test" } else { "train" };
        say!("{psi:.6}\t{tag}\t{}", c.source);
    }
    Ok(())
}

fn cmd_collective(a: &CollectiveArgs) -> Result<()> {
    let kb = a.program.load()?;
    let cfg = CollectiveConfig {
        objective: ObjectiveConfig {
            compile: a.program.compile(),
            loss: a.loss,
        },
        optimizer: OptimizerConfig {
            kind: a.optimizer,
            lr: a.lr,
            ..Default::default()
        },
        steps: a.steps,
        prior_weight: a.prior_weight,
        predicates: a.predicates.clone(),
    };
    let res = collective_infer(&kb, &cfg)?;
    create_dir(&a.out)?;
    let mut by_domain: Vec<(String, Vec<usize>)> = vec![];
    for (i, p) in res.predicates.iter().enumerate() {
        let s = kb.symbol(p)?;
        if s.inputs.len() != 1 {
            let mut csv = String::from("index,prior,posterior\n");
            for (k, (pr, po)) in res.priors[i].data().iter().zip(res.posteriors[i].data()).enumerate() {
                writeln!(csv, "{k},{pr},{po}").unwrap();
            }
            write(&a.out.join(format!("collective_{p}.csv")), &csv)?;
            continue;
        }
        match by_domain.iter_mut().find(|(d, _)| *d == s.inputs[0]) {
            Some((_, v)) => v.push(i),
            None => by_domain.push((s.inputs[0].clone(), vec![i])),
        }
    }
    for (dname, idx) in by_domain {
        let domain = kb.domain(&dname)?;
        let n = res.priors[idx[0]].numel();
        let ids = row_ids(domain.labels(), n);
        let names: Vec<&str> = idx.iter().map(|&i| res.predicates[i].as_str()).collect();
        for (tag, vals) in [("prior", &res.priors), ("posterior", &res.posteriors)] {
            let cols: Vec<Vec<f64>> = idx.iter().map(|&i| vals[i].data().to_vec()).collect();
            write(&a.out.join(format!("{tag}_{dname}.csv")), &predictions_csv(&ids, &names, &cols))?;
        }
    }
    let trained: Vec<&str> = kb
        .constraints()
        .iter()
        .filter(|c| !c.test_only)
        .map(|c| c.source.as_str())
        .collect();
    let mut csv = String::from("constraint,psi_before,psi_after\n");
    for ((src, b), af) in trained.iter().zip(&res.psi_before).zip(&res.psi_after) {
        writeln!(csv, "\"{}\",{b},{af}", src.replace('"', "\"\"")).unwrap();
        say!("{b:.6} -> {af:.6}\t{src}");
    }
    write(&a.out.join("constraints.csv"), &csv)?;
    say!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_dnf(a: &DnfArgs) -> Result<()> {
    let kb = a.program.load()?;
    let preds: Vec<&str> = a.predicates.iter().map(String::as_str).collect();
    let ranked = enumerate_dnf(&kb, &preds, a.max_vars, a.program.compile())?;
    let mut csv = String::from("rank,truth,formula\n");
    for (i, c) in ranked.iter().enumerate() {
        say!("{:>3}  {:.6}  {}", i + 1, c.truth, c.formula);
        writeln!(csv, "{},{},\"{}\"", i + 1, c.truth, c.formula).unwrap();
    }
    if let Some(p) = &a.out {
        write(p, &csv)?;
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let mut kb = a.program.load()?;
    let cfg = ObjectiveConfig {
        compile: a.program.compile(),
        loss: a.loss,
    };
    let r = check_objective(&mut kb, &cfg, a.step, a.limit)?;
    say!("checked {} entries, max relative error {:.3e}", r.checked, r.max_rel_error);
    if let Some((p, k)) = r.worst {
        say!(
            "worst: parameter {p} entry {k}, analytic {:.6e} numeric {:.6e}",
            r.worst_analytic, r.worst_numeric
        );
    }
    if r.max_rel_error.is_nan() || r.max_rel_error > a.tolerance {
        bail!("relative error {:.3e} exceeds {:.1e}", r.max_rel_error, a.tolerance);
    }
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let names: Vec<&str> = if a.name == "all" { NAMES.to_vec() } else { vec![a.name.as_str()] };
    let opts = ExperimentOptions {
        seed: a.seed,
        epochs: a.epochs,
    };
    for name in names {
        let report = experiments::run_experiment(name, &opts)?;
        let dir = a.out.join(name);
        report.write_to(&dir).with_context(|| format!("writing {}", dir.display()))?;
        say!("{}", report.markdown);
        say!("wrote {}", dir.display());
    }
    Ok(())
}
