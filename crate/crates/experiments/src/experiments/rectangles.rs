//! Rectangle tasks in the plane: collective classification of three
//! overlapping classes, and model checking of two nested ones.

use std::fmt::Write as _;

use anyhow::Result;
use groundlog_core::ground::{CompileOptions, LossMode, TNormConfig, TNormFamily};
use groundlog_core::kb::KnowledgeBase;
use groundlog_core::train::{
    collective_infer, enumerate_dnf, model_check, train, CollectiveConfig, DnfCandidate, ObjectiveConfig,
    OptimizerConfig, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{binary_accuracy, column, markdown_table, points_tensor, predict, uniform_point, Bundle, Report};

/// An axis-aligned box `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { lo: [x0, y0], hi: [x1, y1] }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| self.lo[i] <= p[i] && p[i] <= self.hi[i])
    }
}

pub const UNIVERSE: Rect = Rect::new(-2.0, 2.0, -2.0, 2.0);
pub const RECT_A: Rect = Rect::new(-2.0, 1.0, -2.0, 2.0);
pub const RECT_B: Rect = Rect::new(-1.0, 2.0, -2.0, 2.0);
pub const RECT_C: Rect = Rect::new(-1.0, 1.0, -2.0, 2.0);

pub const OR_RULE: &str = "forall x: A(x) or B(x)";
pub const AND_RULE: &str = "forall x: (A(x) and B(x)) <-> C(x)";

/// Rejection sample of a point of `universe` that is (or is not) in `r`.
fn sample_region<R: Rng>(rng: &mut R, universe: Rect, r: Rect, inside: bool) -> [f64; 2] {
    loop {
        let p = uniform_point(rng, universe.lo, universe.hi);
        if r.contains(p) == inside {
            return p;
        }
    }
}

fn train_config(epochs: usize, lr: f64, tnorm: TNormFamily) -> TrainConfig {
    TrainConfig {
        objective: ObjectiveConfig {
            compile: CompileOptions {
                tnorm: TNormConfig::new(tnorm),
                ..Default::default()
            },
            loss: LossMode::Log,
        },
        optimizer: OptimizerConfig::adam(lr),
        epochs,
    }
}

fn labels(points: &[[f64; 2]], r: Rect) -> Vec<f64> {
    points.iter().map(|p| r.contains(*p) as u8 as f64).collect()
}

#[derive(Clone, Debug)]
pub struct CollectiveRectangles {
    /// Positive and negative examples per class.
    pub per_class: usize,
    pub test_points: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lambda: f64,
    pub tnorm: TNormFamily,
    pub collective: CollectiveConfig,
}

impl Default for CollectiveRectangles {
    fn default() -> Self {
        CollectiveRectangles {
            per_class: 4,
            test_points: 256,
            hidden: 10,
            epochs: 500,
            lr: 0.01,
            lambda: 5.0,
            tnorm: TNormFamily::Product,
            collective: CollectiveConfig::default(),
        }
    }
}

pub struct CollectiveOutcome {
    pub classes: Vec<String>,
    pub prior_accuracy: Vec<f64>,
    pub posterior_accuracy: Vec<f64>,
    pub psi_before: Vec<f64>,
    pub psi_after: Vec<f64>,
    pub report: Report,
}

pub fn collective_bundle(cfg: &CollectiveRectangles, seed: u64) -> Bundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrices = vec![];
    for (name, r) in [("a", RECT_A), ("b", RECT_B), ("c", RECT_C)] {
        let mut xs = vec![];
        let mut ys = vec![];
        for inside in [true, false] {
            for _ in 0..cfg.per_class {
                xs.push(sample_region(&mut rng, UNIVERSE, r, inside));
                ys.push(inside as u8 as f64);
            }
        }
        matrices.push((format!("x_{name}"), points_tensor(&xs)));
        matrices.push((format!("y_{name}"), column(&ys)));
    }
    let test: Vec<[f64; 2]> = (0..cfg.test_points)
        .map(|_| uniform_point(&mut rng, UNIVERSE.lo, UNIVERSE.hi))
        .collect();
    let mut program = String::from("# three overlapping rectangles, collective classification\ndomain Points from \"test\"\n");
    for m in ["NA", "NB", "NC"] {
        writeln!(program, "model {m} = mlp(2, {}, 1) hidden tanh output sigmoid", cfg.hidden).unwrap();
    }
    program.push_str("predicate A(Points) = NA\npredicate B(Points) = NB\npredicate C(Points) = NC\n");
    writeln!(program, "constraint \"{OR_RULE}\" weight {}", cfg.lambda).unwrap();
    writeln!(program, "constraint \"{AND_RULE}\" weight {}", cfg.lambda).unwrap();
    for (m, d) in [("NA", "a"), ("NB", "b"), ("NC", "c")] {
        writeln!(program, "pointwise {m} inputs \"x_{d}\" labels \"y_{d}\"").unwrap();
    }
    Bundle {
        program,
        domains: vec![("test".into(), points_tensor(&test), vec![])],
        matrices,
        tables: vec![],
    }
}

fn set_constraint_weights(kb: &mut KnowledgeBase, w: f64) {
    for c in kb.constraints_mut() {
        c.weight = w;
    }
}

/// Supervised training of the three networks with the rules switched off,
/// then collective inference on the test points with the rules on.
pub fn run_collective(cfg: &CollectiveRectangles, seed: u64) -> Result<CollectiveOutcome> {
    let bundle = collective_bundle(cfg, seed);
    let mut kb = bundle.knowledge_base(seed)?;
    set_constraint_weights(&mut kb, 0.0);
    let tc = train_config(cfg.epochs, cfg.lr, cfg.tnorm);
    let rep = train(&mut kb, &tc)?;
    set_constraint_weights(&mut kb, cfg.lambda);

    let mut cc = cfg.collective.clone();
    cc.objective.compile.tnorm = TNormConfig::new(cfg.tnorm);
    let res = collective_infer(&kb, &cc)?;

    let test = &bundle.domains[0].1;
    let pts: Vec<[f64; 2]> = (0..test.rows()).map(|i| [test.row(i)[0], test.row(i)[1]]).collect();
    let mut classes = vec![];
    let mut prior_accuracy = vec![];
    let mut posterior_accuracy = vec![];
    let mut predictions = String::from("row,x,y");
    for name in ["A", "B", "C"] {
        write!(predictions, ",{name}_label,{name}_prior,{name}_posterior").unwrap();
    }
    predictions.push('\n');
    let mut cols = vec![];
    for (name, r) in [("A", RECT_A), ("B", RECT_B), ("C", RECT_C)] {
        let truth = labels(&pts, r);
        let prior = res.prior(name).expect("collective predicate").data().to_vec();
        let post = res.posterior(name).expect("collective predicate").data().to_vec();
        classes.push(name.to_string());
        prior_accuracy.push(binary_accuracy(&prior, &truth));
        posterior_accuracy.push(binary_accuracy(&post, &truth));
        cols.push((truth, prior, post));
    }
    for (i, p) in pts.iter().enumerate() {
        write!(predictions, "{i},{},{}", p[0], p[1]).unwrap();
        for (t, a, b) in &cols {
            write!(predictions, ",{},{},{}", t[i], a[i], b[i]).unwrap();
        }
        predictions.push('\n');
    }

    let mut report = Report::new("rectangles-collective");
    for (i, c) in classes.iter().enumerate() {
        report.set(format!("{c}_prior_accuracy"), prior_accuracy[i]);
        report.set(format!("{c}_posterior_accuracy"), posterior_accuracy[i]);
    }
    for (i, rule) in ["or_rule", "and_rule"].iter().enumerate() {
        report.set(format!("{rule}_psi_before"), res.psi_before[i]);
        report.set(format!("{rule}_psi_after"), res.psi_after[i]);
    }
    report.add_file("metrics.csv", rep.to_csv());
    report.add_file("predictions.csv", predictions);
    report.files.extend(bundle.files());
    let rows: Vec<Vec<String>> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            vec![
                c.clone(),
                format!("{:.3}", prior_accuracy[i]),
                format!("{:.3}", posterior_accuracy[i]),
            ]
        })
        .collect();
    let mut md = format!(
        "# Collective classification on rectangles\n\n{} examples per class and sign, {} test points, \
         rules weighted {} under the {} t-norm, {} collective steps.\n\n",
        cfg.per_class, cfg.test_points, cfg.lambda, cfg.tnorm, cc.steps
    );
    md.push_str(&markdown_table(&["class", "classifier", "collective"], &rows));
    md.push('\n');
    let rule_rows = vec![
        vec![
            format!("`{OR_RULE}`"),
            format!("{:.4}", res.psi_before[0]),
            format!("{:.4}", res.psi_after[0]),
        ],
        vec![
            format!("`{AND_RULE}`"),
            format!("{:.4}", res.psi_before[1]),
            format!("{:.4}", res.psi_after[1]),
        ],
    ];
    md.push_str(&markdown_table(&["rule", "truth before", "truth after"], &rule_rows));
    report.markdown = md;

    Ok(CollectiveOutcome {
        classes,
        prior_accuracy,
        posterior_accuracy,
        psi_before: res.psi_before,
        psi_after: res.psi_after,
        report,
    })
}

pub const NESTED_A: Rect = Rect::new(-2.0, 2.0, -2.0, 2.0);
pub const NESTED_B: Rect = Rect::new(-1.0, 1.0, -1.0, 1.0);
pub const NESTED_UNIVERSE: Rect = Rect::new(-3.0, 3.0, -3.0, 3.0);

pub const INCLUSION: &str = "forall x: B(x) -> A(x)";
pub const CONVERSE: &str = "forall x: A(x) -> B(x)";

#[derive(Clone, Debug)]
pub struct NestedRectangles {
    pub train_points: usize,
    pub check_points: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub tnorm: TNormFamily,
}

impl Default for NestedRectangles {
    fn default() -> Self {
        NestedRectangles {
            train_points: 400,
            check_points: 500,
            hidden: 16,
            epochs: 1000,
            lr: 0.02,
            tnorm: TNormFamily::Lukasiewicz,
        }
    }
}

pub struct CheckOutcome {
    pub ranking: Vec<DnfCandidate>,
    /// Truth of the inclusion and of its converse.
    pub inclusion: f64,
    pub converse: f64,
    pub report: Report,
}

/// Minterms (A most significant) of the DNF equivalent to `B -> A`.
pub const INCLUSION_MINTERMS: [usize; 3] = [0, 2, 3];

pub fn nested_bundle(cfg: &NestedRectangles, seed: u64) -> Bundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = NESTED_UNIVERSE;
    let train: Vec<[f64; 2]> = (0..cfg.train_points).map(|_| uniform_point(&mut rng, u.lo, u.hi)).collect();
    let check: Vec<[f64; 2]> = (0..cfg.check_points).map(|_| uniform_point(&mut rng, u.lo, u.hi)).collect();
    let mut program = String::from("# nested rectangles, model checking\ndomain Points from \"points\"\n");
    for m in ["NA", "NB"] {
        writeln!(program, "model {m} = mlp(2, {}, 1) hidden tanh output sigmoid", cfg.hidden).unwrap();
    }
    program.push_str("predicate A(Points) = NA\npredicate B(Points) = NB\n");
    writeln!(program, "constraint \"{INCLUSION}\" test").unwrap();
    writeln!(program, "constraint \"{CONVERSE}\" test").unwrap();
    program.push_str("pointwise NA inputs \"train\" labels \"y_a\"\npointwise NB inputs \"train\" labels \"y_b\"\n");
    Bundle {
        program,
        domains: vec![("points".into(), points_tensor(&check), vec![])],
        matrices: vec![
            ("train".into(), points_tensor(&train)),
            ("y_a".into(), column(&labels(&train, NESTED_A))),
            ("y_b".into(), column(&labels(&train, NESTED_B))),
        ],
        tables: vec![],
    }
}

/// Supervised training of `A` and `B`, then every single-variable DNF over
/// them ranked by truth degree on fresh points.
pub fn run_check(cfg: &NestedRectangles, seed: u64) -> Result<CheckOutcome> {
    let bundle = nested_bundle(cfg, seed);
    let mut kb = bundle.knowledge_base(seed)?;
    let tc = train_config(cfg.epochs, cfg.lr, cfg.tnorm);
    let rep = train(&mut kb, &tc)?;
    let opts = tc.objective.compile;
    let ranking = enumerate_dnf(&kb, &["A", "B"], 1, opts)?;
    let checks = model_check(&kb, opts)?;
    let truth = |src: &str| checks.iter().find(|(s, _)| s == src).map(|(_, v)| *v).unwrap_or(f64::NAN);
    let (inclusion, converse) = (truth(INCLUSION), truth(CONVERSE));

    let pts = &bundle.domains[0].1;
    let a = predict(&kb, "A", pts)?.data().to_vec();
    let b = predict(&kb, "B", pts)?.data().to_vec();
    let rows: Vec<[f64; 2]> = (0..pts.rows()).map(|i| [pts.row(i)[0], pts.row(i)[1]]).collect();

    let mut report = Report::new("rectangles-check");
    report.set("A_accuracy", binary_accuracy(&a, &labels(&rows, NESTED_A)));
    report.set("B_accuracy", binary_accuracy(&b, &labels(&rows, NESTED_B)));
    report.set("inclusion_truth", inclusion);
    report.set("converse_truth", converse);
    report.set("top_truth", ranking[0].truth);
    report.set(
        "top_is_inclusion",
        (ranking[0].minterms == INCLUSION_MINTERMS) as u8 as f64,
    );
    let mut ranking_csv = String::from("rank,formula,truth\n");
    for (i, c) in ranking.iter().enumerate() {
        writeln!(ranking_csv, "{},\"{}\",{}", i + 1, c.formula, c.truth).unwrap();
    }
    let mut predictions = String::from("row,x,y,A,B\n");
    for (i, p) in rows.iter().enumerate() {
        writeln!(predictions, "{i},{},{},{},{}", p[0], p[1], a[i], b[i]).unwrap();
    }
    report.add_file("metrics.csv", rep.to_csv());
    report.add_file("dnf_ranking.csv", ranking_csv);
    report.add_file("predictions.csv", predictions);
    report.files.extend(bundle.files());

    let table: Vec<Vec<String>> = ranking
        .iter()
        .enumerate()
        .map(|(i, c)| vec![(i + 1).to_string(), format!("`{}`", c.formula), format!("{:.4}", c.truth)])
        .collect();
    let mut md = format!(
        "# Model checking on nested rectangles\n\n`{INCLUSION}`: {inclusion:.4}\n\n`{CONVERSE}`: {converse:.4}\n\n\
         Single-variable DNF formulas over A and B, most true first:\n\n"
    );
    md.push_str(&markdown_table(&["rank", "formula", "truth"], &table));
    report.markdown = md;
    Ok(CheckOutcome {
        ranking,
        inclusion,
        converse,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions() {
        assert!(RECT_A.contains([0.0, 0.0]) && RECT_B.contains([0.0, 0.0]) && RECT_C.contains([0.0, 0.0]));
        assert!(RECT_A.contains([-1.5, 1.9]) && !RECT_B.contains([-1.5, 1.9]));
        for p in [[-1.5, 0.0], [1.5, 0.0], [0.5, -1.0], [-1.0, 2.0]] {
            let both = RECT_A.contains(p) && RECT_B.contains(p);
            assert_eq!(both, RECT_C.contains(p));
            assert!(RECT_A.contains(p) || RECT_B.contains(p));
        }
    }

    #[test]
    fn collective_examples_are_balanced_and_labelled() {
        let b = collective_bundle(&CollectiveRectangles::default(), 4);
        for (name, r) in [("a", RECT_A), ("b", RECT_B), ("c", RECT_C)] {
            let x = &b.matrices.iter().find(|(n, _)| *n == format!("x_{name}")).unwrap().1;
            let y = &b.matrices.iter().find(|(n, _)| *n == format!("y_{name}")).unwrap().1;
            assert_eq!(x.rows(), 8);
            for i in 0..8 {
                let p = [x.row(i)[0], x.row(i)[1]];
                assert_eq!(r.contains(p) as u8 as f64, y.row(i)[0]);
            }
            assert_eq!(y.data().iter().sum::<f64>(), 4.0);
        }
        assert_eq!(b.domains[0].1.rows(), 256);
        b.knowledge_base(0).unwrap();
    }
}
