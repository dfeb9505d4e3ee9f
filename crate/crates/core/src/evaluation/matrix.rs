use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gallery::{Gallery, ScaleKey};
use crate::matching::{match_detailed, MatchMethod, MatchParams};

/// All-pairs dissimilarities between query (row) and target (column) scales
/// over one shared roster. Diagonal cells are excluded (`None`); pairs that
/// could not be scored hold `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    labels: Vec<ScaleKey>,
    values: Vec<Option<f64>>,
}

impl DissimilarityMatrix {
    /// `values` is row-major `n × n`; the diagonal must be `None` and every
    /// other cell a non-negative number or `+inf`.
    pub fn new(labels: Vec<ScaleKey>, values: Vec<Option<f64>>) -> Result<Self> {
        let n = labels.len();
        if values.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "{n} labels need {} cells, got {}",
                n * n,
                values.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l) {
                return Err(Error::InvalidInput(format!("label {l} appears twice")));
            }
        }
        for i in 0..n {
            for j in 0..n {
                match values[i * n + j] {
                    None if i != j => {
                        return Err(Error::InvalidInput(format!(
                            "cell ({}, {}) is empty off the diagonal",
                            labels[i], labels[j]
                        )))
                    }
                    Some(_) if i == j => {
                        return Err(Error::InvalidInput(format!("diagonal cell {} must be excluded", labels[i])))
                    }
                    Some(v) if !(v >= 0.0) => {
                        return Err(Error::InvalidInput(format!(
                            "cell ({}, {}) has invalid dissimilarity {v}",
                            labels[i], labels[j]
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { labels, values })
    }

    /// Builds a matrix from a dense function; the diagonal is never evaluated.
    pub fn from_fn(labels: Vec<ScaleKey>, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let n = labels.len();
        let values = (0..n * n).map(|k| (k / n != k % n).then(|| f(k / n, k % n))).collect();
        Self::new(labels, values)
    }

    pub fn labels(&self) -> &[ScaleKey] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.labels.len() + j]
    }

    /// Off-diagonal cells as `(row, column, value)` in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.labels.len();
        self.values.iter().enumerate().filter_map(move |(k, v)| v.map(|v| (k / n, k % n, v)))
    }

    /// Largest finite off-diagonal value, or 0 when there is none.
    pub fn max_finite(&self) -> f64 {
        self.cells().map(|c| c.2).filter(|v| v.is_finite()).fold(0.0, f64::max)
    }

    /// Genuine (same individual) and impostor scores over directed off-diagonal pairs.
    pub fn split_scores(&self) -> (Vec<f64>, Vec<f64>) {
        let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
        for (i, j, v) in self.cells() {
            if self.labels[i].individual_id == self.labels[j].individual_id {
                genuine.push(v);
            } else {
                impostor.push(v);
            }
        }
        (genuine, impostor)
    }

    /// CSV with an `individual:scale` header row and first column. The
    /// diagonal is an empty cell and unscorable pairs are written as `inf`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().map(ToString::to_string));
        w.write_record(&header)?;
        let n = self.labels.len();
        for i in 0..n {
            let mut row = vec![self.labels[i].to_string()];
            row.extend((0..n).map(|j| match self.get(i, j) {
                None => String::new(),
                Some(v) if v.is_infinite() => "inf".to_string(),
                Some(v) => v.to_string(),
            }));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut rows = r.records();
        let header = rows
            .next()
            .ok_or_else(|| Error::InvalidInput("dissimilarity CSV is empty".into()))??;
        let labels = header
            .iter()
            .skip(1)
            .map(ScaleKey::parse)
            .collect::<Result<Vec<_>>>()?;
        let n = labels.len();
        let mut values = Vec::with_capacity(n * n);
        let mut row_count = 0;
        for (i, rec) in rows.enumerate() {
            let rec = rec?;
            if rec.len() != n + 1 {
                return Err(Error::InvalidInput(format!(
                    "row {} has {} cells, expected {}",
                    i + 1,
                    rec.len(),
                    n + 1
                )));
            }
            let row_label = ScaleKey::parse(&rec[0])?;
            if labels.get(i) != Some(&row_label) {
                return Err(Error::InvalidInput(format!(
                    "row {} is labelled {row_label} but column {} is {}",
                    i + 1,
                    i + 1,
                    labels.get(i).map_or("missing".to_string(), ToString::to_string)
                )));
            }
            for cell in rec.iter().skip(1) {
                let cell = cell.trim();
                values.push(if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|_| {
                        Error::InvalidInput(format!("row {row_label}: `{cell}` is not a number"))
                    })?)
                });
            }
            row_count += 1;
        }
        if row_count != n {
            return Err(Error::InvalidInput(format!("{n} columns but {row_count} rows")));
        }
        Self::new(labels, values)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn open_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Scores every source scale (as query) against every target scale of the
/// same key roster; rows follow the source gallery order. Cells are
/// computed in parallel and are independent of the thread count.
pub fn build_dissimilarity_matrix(
    source: &Gallery,
    target: &Gallery,
    method: MatchMethod,
    params: &MatchParams,
) -> Result<DissimilarityMatrix> {
    let labels = source.keys();
    let src: BTreeSet<&ScaleKey> = labels.iter().collect();
    let tgt_keys = target.keys();
    let tgt: BTreeSet<&ScaleKey> = tgt_keys.iter().collect();
    if src != tgt {
        let only_src: Vec<String> = src.difference(&tgt).map(|k| k.to_string()).collect();
        let only_tgt: Vec<String> = tgt.difference(&src).map(|k| k.to_string()).collect();
        return Err(Error::InvalidInput(format!(
            "galleries have different rosters (only in source: [{}]; only in target: [{}])",
            only_src.join(", "),
            only_tgt.join(", ")
        )));
    }
    let targets: HashMap<&ScaleKey, usize> = tgt_keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let n = labels.len();
    let values = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            if i == j {
                return Ok(None);
            }
            let query = &source.records()[i];
            let record = &target.records()[targets[&labels[j]]];
            match match_detailed(&query.mask, record, method, params) {
                Ok(o) => Ok(Some(o.score.dissimilarity)),
                Err(Error::Unmatchable { .. }) => Ok(Some(f64::INFINITY)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    DissimilarityMatrix::new(labels, values)
}
