//! Reader for the Citeseer citation network: `citeseer.content` holds
//! `id<TAB>w_0 ... w_{V-1}<TAB>class` per paper and `citeseer.cites` holds
//! `cited<TAB>citing` per link.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use groundlog_core::tensor::Tensor;
use thiserror::Error;

pub const CLASSES: [&str; 6] = ["Agents", "AI", "DB", "IR", "ML", "HCI"];

/// Published sizes of the dataset.
pub const PAPERS: usize = 3312;
pub const WORDS: usize = 3703;
pub const LINKS: usize = 4732;

pub const DIR_ENV: &str = "CITESEER_DIR";

#[derive(Debug, Error)]
pub enum CiteseerError {
    #[error("no Citeseer data: set {DIR_ENV} or place citeseer.content and citeseer.cites in {0}")]
    Missing(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },
}

#[derive(Clone, Debug)]
pub struct Citeseer {
    pub ids: Vec<String>,
    /// `papers x words` binary bag of words.
    pub features: Tensor,
    /// Index into [`CLASSES`] per paper.
    pub labels: Vec<usize>,
    /// Lines in the links file.
    pub links: usize,
    /// `(citing, cited)` pairs whose endpoints are both papers of the
    /// content file, without duplicates or self-links.
    pub edges: Vec<(usize, usize)>,
}

impl Citeseer {
    pub fn papers(&self) -> usize {
        self.ids.len()
    }

    pub fn words(&self) -> usize {
        self.features.cols()
    }

    /// `Cite(x, y)` as a dense 0/1 table: 1 when `x` cites `y`.
    pub fn cite_table(&self) -> Tensor {
        let n = self.papers();
        let mut t = Tensor::zeros(&[n, n]);
        for &(a, b) in &self.edges {
            t.data_mut()[a * n + b] = 1.0;
        }
        t
    }

    /// One-hot class rows, `papers x 6`.
    pub fn one_hot(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.papers(), CLASSES.len()]);
        for (i, &c) in self.labels.iter().enumerate() {
            t.data_mut()[i * CLASSES.len() + c] = 1.0;
        }
        t
    }
}

/// `$CITESEER_DIR`, else `data/citeseer` under the workspace root, else
/// `data/citeseer` under the working directory, whichever holds the files.
pub fn find_dir() -> Result<PathBuf, CiteseerError> {
    let mut candidates = vec![];
    if let Ok(d) = std::env::var(DIR_ENV) {
        candidates.push(PathBuf::from(d));
    }
    let workspace = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/citeseer");
    candidates.push(workspace.clone());
    candidates.push(PathBuf::from("data/citeseer"));
    candidates
        .into_iter()
        .find(|d| d.join("citeseer.content").is_file() && d.join("citeseer.cites").is_file())
        .ok_or_else(|| CiteseerError::Missing(workspace.display().to_string()))
}

fn read(path: &Path) -> Result<String, CiteseerError> {
    fs::read_to_string(path).map_err(|source| CiteseerError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(dir: &Path) -> Result<Citeseer, CiteseerError> {
    let content_path = dir.join("citeseer.content");
    let content = read(&content_path)?;
    let fmt_err = |path: &Path, line: usize, msg: String| CiteseerError::Format {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut ids = vec![];
    let mut labels = vec![];
    let mut data = vec![];
    let mut width = None;
    for (ln, line) in content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cells.len() < 3 {
            return Err(fmt_err(&content_path, ln + 1, "expected id, words and class".into()));
        }
        let words = &cells[1..cells.len() - 1];
        match width {
            None => width = Some(words.len()),
            Some(w) if w != words.len() => {
                return Err(fmt_err(
                    &content_path,
                    ln + 1,
                    format!("{} word columns, earlier rows have {w}", words.len()),
                ))
            }
            _ => {}
        }
        for w in words {
            data.push(match *w {
                "0" => 0.0,
                "1" => 1.0,
                _ => w
                    .parse::<f64>()
                    .map_err(|_| fmt_err(&content_path, ln + 1, format!("`{w}` is not a number")))?,
            });
        }
        let class = cells[cells.len() - 1];
        let c = CLASSES
            .iter()
            .position(|k| *k == class)
            .ok_or_else(|| fmt_err(&content_path, ln + 1, format!("unknown class `{class}`")))?;
        ids.push(cells[0].to_string());
        labels.push(c);
    }
    let width = width.unwrap_or(0);
    let features = Tensor::matrix(ids.len(), width, data).expect("rows share a width");

    let cites_path = dir.join("citeseer.cites");
    let cites = read(&cites_path)?;
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut links = 0;
    let mut seen = std::collections::BTreeSet::new();
    for (ln, line) in cites.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cells.len() != 2 {
            return Err(fmt_err(&cites_path, ln + 1, "expected two paper ids".into()));
        }
        links += 1;
        if let (Some(&cited), Some(&citing)) = (index.get(cells[0]), index.get(cells[1])) {
            if cited != citing {
                seen.insert((citing, cited));
            }
        }
    }
    Ok(Citeseer {
        ids,
        features,
        labels,
        links,
        edges: seen.into_iter().collect(),
    })
}

/// Writes a dataset in the Citeseer file format.
pub fn write(dir: &Path, ids: &[String], features: &Tensor, labels: &[usize], links: &[(String, String)]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut content = String::new();
    for (i, id) in ids.iter().enumerate() {
        content.push_str(id);
        for v in features.row(i) {
            content.push('\t');
            content.push_str(if *v != 0.0 { "1" } else { "0" });
        }
        content.push('\t');
        content.push_str(CLASSES[labels[i]]);
        content.push('\n');
    }
    fs::write(dir.join("citeseer.content"), content)?;
    let cites: String = links.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
    fs::write(dir.join("citeseer.cites"), cites)
}

/// A dataset in the same shape as Citeseer: each class favours its own
/// block of words, and most links join papers of the same class.
pub fn synthetic(papers: usize, words: usize, links: usize, homophily: f64, seed: u64) -> Citeseer {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = CLASSES.len();
    let block = (words / (2 * k)).max(1);
    let labels: Vec<usize> = (0..papers).map(|_| rng.gen_range(0..k)).collect();
    let mut data = vec![0.0; papers * words];
    for (i, &c) in labels.iter().enumerate() {
        for _ in 0..12 {
            let w = if rng.gen_bool(0.25) {
                c * block + rng.gen_range(0..block)
            } else {
                rng.gen_range(0..words)
            };
            data[i * words + w] = 1.0;
        }
    }
    let mut by_class: Vec<Vec<usize>> = vec![vec![]; k];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut attempts = 0;
    while seen.len() < links && attempts < links * 100 && papers > 1 {
        attempts += 1;
        let a = rng.gen_range(0..papers);
        let pool = &by_class[labels[a]];
        let b = if rng.gen_bool(homophily) && pool.len() > 1 {
            pool[rng.gen_range(0..pool.len())]
        } else {
            rng.gen_range(0..papers)
        };
        if a != b {
            seen.insert((a, b));
        }
    }
    Citeseer {
        ids: (0..papers).map(|i| format!("p{i}")).collect(),
        features: Tensor::matrix(papers, words, data).expect("papers x words"),
        labels,
        links: seen.len(),
        edges: seen.into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_the_published_format() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("citeseer.content"),
            "p1\t0\t1\t1\tAI\nabc\t1\t0\t0\tHCI\n42\t0\t0\t1\tIR\n",
        )
        .unwrap();
        fs::write(dir.path().join("citeseer.cites"), "p1\tabc\n42\tp1\nmissing\tp1\np1\tp1\n").unwrap();
        let d = load(dir.path()).unwrap();
        assert_eq!(d.papers(), 3);
        assert_eq!(d.words(), 3);
        assert_eq!(d.links, 4);
        assert_eq!(d.labels, vec![1, 5, 3]);
        assert_eq!(d.edges, vec![(0, 2), (1, 0)]);
        let t = d.cite_table();
        assert_eq!(t.get(&[1, 0]), Some(1.0));
        assert_eq!(t.data().iter().sum::<f64>(), 2.0);
        assert_eq!(d.one_hot().row(1), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn rejects_unknown_classes_and_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("citeseer.cites"), "").unwrap();
        fs::write(dir.path().join("citeseer.content"), "a\t1\tBio\n").unwrap();
        assert!(load(dir.path()).is_err());
        fs::write(dir.path().join("citeseer.content"), "a\t1\t0\tAI\nb\t1\tAI\n").unwrap();
        assert!(matches!(load(dir.path()), Err(CiteseerError::Format { line: 2, .. })));
    }

    #[test]
    fn round_trips_through_the_writer() {
        let dir = tempfile::tempdir().unwrap();
        let ids: Vec<String> = (0..4).map(|i| format!("d{i}")).collect();
        let x = Tensor::matrix(4, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let links = vec![("d0".to_string(), "d1".to_string()), ("d2".to_string(), "d3".to_string())];
        write(dir.path(), &ids, &x, &[0, 1, 2, 4], &links).unwrap();
        let d = load(dir.path()).unwrap();
        assert_eq!(d.features, x);
        assert_eq!(d.labels, vec![0, 1, 2, 4]);
        assert_eq!(d.edges, vec![(1, 0), (3, 2)]);
    }

    #[test]
    fn synthetic_data_round_trips_and_is_homophilous() {
        let s = synthetic(120, 60, 200, 0.9, 3);
        assert_eq!((s.papers(), s.words(), s.edges.len()), (120, 60, 200));
        let same = s.edges.iter().filter(|(a, b)| s.labels[*a] == s.labels[*b]).count();
        assert!(same as f64 > 0.8 * 200.0, "{same}");
        let dir = tempfile::tempdir().unwrap();
        let links: Vec<(String, String)> = s
            .edges
            .iter()
            .map(|&(citing, cited)| (s.ids[cited].clone(), s.ids[citing].clone()))
            .collect();
        write(dir.path(), &s.ids, &s.features, &s.labels, &links).unwrap();
        let back = load(dir.path()).unwrap();
        assert_eq!(back.features, s.features);
        assert_eq!(back.edges, s.edges);
        assert_eq!(back.links, 200);
    }
}
