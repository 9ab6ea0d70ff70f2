//! CSV ingestion for domains, matrices and truth tables.
//!
//! Domain and matrix files have a header `f0,...,f{r-1}`, optionally
//! preceded by a `label` column naming each row. Table files have one
//! column per argument followed by an optional `value` column; each row
//! names a tuple by row label or, failing that, row index. Tuples not
//! listed are 0.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use groundlog_core::kb::{DataResolver, DomainData};
use groundlog_core::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {msg}")]
    Csv { path: String, msg: String },
    #[error("{path}:{line}: {msg}")]
    Cell { path: String, line: u64, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>, DataError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(f))
}

fn csv_err(path: &Path, e: csv::Error) -> DataError {
    DataError::Csv {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// Rows and optional labels of a domain file.
pub fn load_domain_csv(path: &Path) -> Result<DomainData, DataError> {
    let mut rd = reader(path)?;
    let header = rd.headers().map_err(|e| csv_err(path, e))?.clone();
    let labelled = header.get(0) == Some("label");
    let first = labelled as usize;
    for (i, h) in header.iter().skip(first).enumerate() {
        if h != format!("f{i}") {
            return Err(DataError::Csv {
                path: path.display().to_string(),
                msg: format!("header column {} is `{h}`, expected `f{i}`", i + first),
            });
        }
    }
    let width = header.len() - first;
    let mut data = vec![];
    let mut labels = vec![];
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(DataError::Cell {
                path: path.display().to_string(),
                line,
                msg: format!("ragged row: {} cells, header has {}", rec.len(), header.len()),
            });
        }
        if labelled {
            labels.push(rec[0].to_string());
        }
        for cell in rec.iter().skip(first) {
            data.push(cell.parse::<f64>().map_err(|_| DataError::Cell {
                path: path.display().to_string(),
                line,
                msg: format!("`{cell}` is not a number"),
            })?);
        }
        rows += 1;
    }
    let rows = Tensor::matrix(rows, width, data).expect("row count and width agree");
    Ok(DomainData { rows, labels })
}

/// Writes rows as a domain file, with a `label` column when labels are
/// given.
pub fn write_domain_csv(mut w: impl Write, rows: &Tensor, labels: &[String]) -> io::Result<()> {
    let mut header: Vec<String> = vec![];
    if !labels.is_empty() {
        header.push("label".into());
    }
    header.extend((0..rows.cols()).map(|i| format!("f{i}")));
    writeln!(w, "{}", header.join(","))?;
    for r in 0..rows.rows() {
        let mut cells: Vec<String> = vec![];
        if !labels.is_empty() {
            cells.push(labels[r].clone());
        }
        cells.extend(rows.row(r).iter().map(|v| format!("{v}")));
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Writes the non-zero entries of a table in the format read by
/// [`CsvData`].
pub fn write_table_csv(mut w: impl Write, table: &Tensor) -> io::Result<()> {
    let rank = table.rank();
    let mut header: Vec<String> = (0..rank).map(|i| format!("arg{i}")).collect();
    header.push("value".into());
    writeln!(w, "{}", header.join(","))?;
    let shape = table.shape();
    for (flat, &v) in table.data().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let mut idx = vec![0; rank];
        let mut rest = flat;
        for a in (0..rank).rev() {
            idx[a] = rest % shape[a];
            rest /= shape[a];
        }
        let cells: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        writeln!(w, "{},{v}", cells.join(","))?;
    }
    Ok(())
}

/// Resolves program data sources to CSV files under a directory. A
/// source without an extension gets `.csv`.
#[derive(Clone, Debug)]
pub struct CsvData {
    root: PathBuf,
}

impl CsvData {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CsvData { root: root.into() }
    }

    pub fn path(&self, source: &str) -> PathBuf {
        let p = self.root.join(source);
        if p.extension().is_some() {
            p
        } else {
            p.with_extension("csv")
        }
    }

    fn load_table(&self, source: &str, shape: &[usize], labels: &[&[String]]) -> Result<Tensor, DataError> {
        let path = self.path(source);
        let mut rd = reader(&path)?;
        let header = rd.headers().map_err(|e| csv_err(&path, e))?.clone();
        let rank = shape.len();
        let has_value = header.len() == rank + 1 && header.get(rank) == Some("value");
        if header.len() != rank + has_value as usize {
            return Err(DataError::Csv {
                path: path.display().to_string(),
                msg: format!("expected {rank} argument columns, header has {}", header.len()),
            });
        }
        let index: Vec<HashMap<&str, usize>> = labels
            .iter()
            .map(|ls| ls.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect())
            .collect();
        let mut t = Tensor::zeros(shape);
        for rec in rd.records() {
            let rec = rec.map_err(|e| csv_err(&path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let cell_err = |msg: String| DataError::Cell {
                path: path.display().to_string(),
                line,
                msg,
            };
            if rec.len() != header.len() {
                return Err(cell_err(format!("ragged row: {} cells, header has {}", rec.len(), header.len())));
            }
            let mut flat = 0;
            for a in 0..rank {
                let cell = &rec[a];
                let i = match index[a].get(cell) {
                    Some(&i) => i,
                    None => cell
                        .parse::<usize>()
                        .ok()
                        .filter(|&i| i < shape[a])
                        .ok_or_else(|| cell_err(format!("`{cell}` does not name a row of argument {a}")))?,
                };
                flat = flat * shape[a] + i;
            }
            let v = if has_value {
                rec[rank]
                    .parse::<f64>()
                    .map_err(|_| cell_err(format!("`{}` is not a number", &rec[rank])))?
            } else {
                1.0
            };
            t.data_mut()[flat] = v;
        }
        Ok(t)
    }
}

impl DataResolver for CsvData {
    fn domain(&self, source: &str) -> Result<DomainData, String> {
        load_domain_csv(&self.path(source)).map_err(|e| e.to_string())
    }

    fn matrix(&self, source: &str) -> Result<Tensor, String> {
        load_domain_csv(&self.path(source)).map(|d| d.rows).map_err(|e| e.to_string())
    }

    fn table(&self, source: &str, shape: &[usize], labels: &[&[String]]) -> Result<Tensor, String> {
        self.load_table(source, shape, labels).map_err(|e| e.to_string())
    }
}
