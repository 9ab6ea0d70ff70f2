//! Reproductions of the worked examples: two circles, collective
//! rectangles, nested-rectangle model checking, B/I sequence rules and
//! Citeseer.

pub mod circles;
pub mod citeseer;
pub mod rectangles;
pub mod sequence;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use anyhow::{bail, Result};
use groundlog_core::kb::{DomainData, KnowledgeBase, MemoryData};
use groundlog_core::learners::GivenRegistry;
use groundlog_core::logic::parse_program;
use groundlog_core::tensor::{Graph, Tensor};
use groundlog_core::train::target_output;
use rand::Rng;

use crate::data::{write_domain_csv, write_table_csv};

pub const NAMES: [&str; 5] = [
    "circles",
    "rectangles-collective",
    "rectangles-check",
    "sequence-rules",
    "citeseer",
];

/// Outcome of one experiment: headline numbers, a markdown summary and
/// the files it produced (metrics CSVs, predictions, the program and its
/// data).
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub name: String,
    pub summary: Vec<(String, f64)>,
    pub markdown: String,
    pub files: Vec<(String, String)>,
}

impl Report {
    pub fn new(name: &str) -> Self {
        Report {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn set(&mut self, key: impl Into<String>, value: f64) {
        self.summary.push((key.into(), value));
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn add_file(&mut self, name: impl Into<String>, content: String) {
        self.files.push((name.into(), content));
    }

    /// Writes every file plus `report.md` and `summary.csv` under `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, content) in &self.files {
            let p = dir.join(name);
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, content)?;
        }
        fs::write(dir.join("report.md"), &self.markdown)?;
        fs::write(dir.join("summary.csv"), self.summary_csv())
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in &self.summary {
            writeln!(s, "{k},{v}").unwrap();
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExperimentOptions {
    pub seed: u64,
    /// Overrides the training epochs of every stage when set.
    pub epochs: Option<usize>,
}


pub fn run_experiment(name: &str, opts: &ExperimentOptions) -> Result<Report> {
    match name {
        "circles" => {
            let mut cfg = circles::CirclesConfig::default();
            if let Some(e) = opts.epochs {
                cfg.epochs = e;
            }
            Ok(circles::run(&cfg, opts.seed)?.report)
        }
        "rectangles-collective" => {
            let mut cfg = rectangles::CollectiveRectangles::default();
            if let Some(e) = opts.epochs {
                cfg.epochs = e;
            }
            Ok(rectangles::run_collective(&cfg, opts.seed)?.report)
        }
        "rectangles-check" => {
            let mut cfg = rectangles::NestedRectangles::default();
            if let Some(e) = opts.epochs {
                cfg.epochs = e;
            }
            Ok(rectangles::run_check(&cfg, opts.seed)?.report)
        }
        "sequence-rules" => Ok(sequence::run(&sequence::SequenceConfig::default(), opts.seed)?.report),
        "citeseer" => {
            let mut cfg = citeseer::CiteseerConfig::default();
            if let Some(e) = opts.epochs {
                cfg.epochs = e;
            }
            let dir = crate::citeseer::find_dir()?;
            let data = crate::citeseer::load(&dir)?;
            Ok(citeseer::run(&data, &cfg, opts.seed)?.report)
        }
        _ => bail!("unknown experiment `{name}` (one of {})", NAMES.join(", ")),
    }
}

/// A program together with the in-memory data it refers to.
#[derive(Clone, Debug, Default)]
pub struct Bundle {
    pub program: String,
    pub domains: Vec<(String, Tensor, Vec<String>)>,
    pub matrices: Vec<(String, Tensor)>,
    pub tables: Vec<(String, Tensor)>,
}

impl Bundle {
    pub fn resolver(&self) -> MemoryData {
        let mut m = MemoryData::new();
        for (name, rows, labels) in &self.domains {
            m.domains.insert(
                name.clone(),
                DomainData {
                    rows: rows.clone(),
                    labels: labels.clone(),
                },
            );
        }
        for (name, t) in &self.matrices {
            m = m.with_matrix(name, t.clone());
        }
        for (name, t) in &self.tables {
            m = m.with_table(name, t.clone());
        }
        m
    }

    pub fn knowledge_base(&self, seed: u64) -> Result<KnowledgeBase> {
        let program = parse_program(&self.program)?;
        Ok(KnowledgeBase::from_program(
            &program,
            &self.resolver(),
            &GivenRegistry::builtin(),
            seed,
        )?)
    }

    /// `program.lyr` plus one CSV per data source, loadable with
    /// [`crate::data::CsvData`].
    pub fn files(&self) -> Vec<(String, String)> {
        let mut out = vec![("program.lyr".to_string(), self.program.clone())];
        let csv = |f: &dyn Fn(&mut Vec<u8>) -> io::Result<()>| {
            let mut buf = vec![];
            f(&mut buf).expect("writing to memory");
            String::from_utf8(buf).expect("ascii output")
        };
        for (name, rows, labels) in &self.domains {
            out.push((format!("{name}.csv"), csv(&|b| write_domain_csv(b, rows, labels))));
        }
        for (name, t) in &self.matrices {
            out.push((format!("{name}.csv"), csv(&|b| write_domain_csv(b, t, &[]))));
        }
        for (name, t) in &self.tables {
            out.push((format!("{name}.csv"), csv(&|b| write_table_csv(b, t))));
        }
        out
    }
}

/// Output of a model or symbol on constant rows.
pub fn predict(kb: &KnowledgeBase, target: &str, inputs: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let out = target_output(&mut g, kb, target, inputs)?;
    Ok(g.value(out).clone())
}

/// Fraction of rows whose thresholded score matches a 0/1 label.
pub fn binary_accuracy(scores: &[f64], labels: &[f64]) -> f64 {
    if scores.is_empty() {
        return 1.0;
    }
    let ok = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| (**s >= 0.5) == (**l >= 0.5))
        .count();
    ok as f64 / scores.len() as f64
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Uniform point in an axis-aligned box.
pub fn uniform_point<R: Rng>(rng: &mut R, lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])]
}

pub fn points_tensor(points: &[[f64; 2]]) -> Tensor {
    Tensor::matrix(points.len(), 2, points.iter().flatten().copied().collect()).expect("two columns")
}

pub fn column(values: &[f64]) -> Tensor {
    Tensor::matrix(values.len(), 1, values.to_vec()).expect("one column")
}

/// Predictions CSV: row id, one score per column name, and the name of
/// the largest score.
pub fn predictions_csv(ids: &[String], names: &[&str], scores: &[Vec<f64>]) -> String {
    let mut s = format!("row,{},argmax\n", names.join(","));
    for (i, id) in ids.iter().enumerate() {
        let row: Vec<f64> = scores.iter().map(|c| c[i]).collect();
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(s, "{id},{},{}", cells.join(","), names[argmax(&row)]).unwrap();
    }
    s
}

/// Markdown table from a header and rows of cells.
pub fn markdown_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for r in rows {
        writeln!(s, "| {} |", r.join(" | ")).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_and_argmax() {
        assert_eq!(binary_accuracy(&[0.2, 0.7, 0.5], &[0.0, 0.0, 1.0]), 2.0 / 3.0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5, 0.2]), 1);
    }

    #[test]
    fn bundle_files_reload_through_csv() {
        let b = Bundle {
            program: "domain D from \"pts\"\npredicate T(D, D) = table \"t\"\nconstraint \"forall x: exists y: T(x, y)\"\n"
                .into(),
            domains: vec![("pts".into(), points_tensor(&[[0.0, 1.0], [2.0, 3.0]]), vec![])],
            matrices: vec![],
            tables: vec![("t".into(), Tensor::new(vec![2, 2], vec![0.0, 1.0, 0.5, 0.0]).unwrap())],
        };
        let mem = b.knowledge_base(0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (n, c) in b.files() {
            fs::write(dir.path().join(n), c).unwrap();
        }
        let src = fs::read_to_string(dir.path().join("program.lyr")).unwrap();
        let kb = KnowledgeBase::from_program(
            &parse_program(&src).unwrap(),
            &crate::data::CsvData::new(dir.path()),
            &GivenRegistry::builtin(),
            0,
        )
        .unwrap();
        let opts = Default::default();
        let f = kb.check_formula("forall x: exists y: T(x, y)").unwrap();
        let a = groundlog_core::train::evaluate_formula(&kb, &f, opts).unwrap();
        let b = groundlog_core::train::evaluate_formula(&mem, &f, opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, 0.75);
    }
}
