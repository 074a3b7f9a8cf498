//! Data containers, centering, CSV ingestion and fold bookkeeping.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Predictor/response pair with optional subject labels and ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    #[serde(with = "linalg::matrix_rows")]
    x: DMatrix<f64>,
    #[serde(with = "linalg::matrix_rows")]
    y: DMatrix<f64>,
    subject_ids: Option<Vec<String>>,
    #[serde(with = "linalg::matrix_rows_opt")]
    beta_true: Option<DMatrix<f64>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch {
                what: "dataset rows (X vs Y)",
                expected: x.nrows(),
                found: y.nrows(),
            });
        }
        if x.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 samples, found {}",
                x.nrows()
            )));
        }
        if x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::InvalidInput(
                "X and Y need at least one column each".into(),
            ));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in X or Y".into()));
        }
        Ok(Self {
            x,
            y,
            subject_ids: None,
            beta_true: None,
        })
    }

    pub fn with_subjects(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "subject labels",
                expected: self.n(),
                found: ids.len(),
            });
        }
        self.subject_ids = Some(ids);
        Ok(self)
    }

    pub fn with_beta_true(mut self, beta: DMatrix<f64>) -> Result<Self> {
        if beta.nrows() != self.p() || beta.ncols() != self.q() {
            return Err(Error::DimensionMismatch {
                what: "beta_true rows",
                expected: self.p(),
                found: beta.nrows(),
            });
        }
        self.beta_true = Some(beta);
        Ok(self)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn subject_ids(&self) -> Option<&[String]> {
        self.subject_ids.as_deref()
    }

    pub fn beta_true(&self) -> Option<&DMatrix<f64>> {
        self.beta_true.as_ref()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    /// Restricts the dataset to the given rows, keeping labels and ground truth.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut out = Dataset::new(
            linalg::select_rows(&self.x, rows),
            linalg::select_rows(&self.y, rows),
        )?;
        if let Some(ids) = &self.subject_ids {
            out.subject_ids = Some(rows.iter().map(|&r| ids[r].clone()).collect());
        }
        out.beta_true = self.beta_true.clone();
        Ok(out)
    }
}

/// Column statistics needed to map new predictors into the centered space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centering {
    #[serde(with = "linalg::vector")]
    pub x_mean: DVector<f64>,
    #[serde(with = "linalg::vector")]
    pub y_mean: DVector<f64>,
    #[serde(with = "linalg::vector_opt")]
    pub x_scale: Option<DVector<f64>>,
}

impl Centering {
    /// Applies the stored centering (and scaling) to raw predictors.
    pub fn transform_x(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.x_mean.len() {
            return Err(Error::DimensionMismatch {
                what: "predictor columns",
                expected: self.x_mean.len(),
                found: x.ncols(),
            });
        }
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let s = self.x_scale.as_ref().map_or(1.0, |s| s[j]);
            col.apply(|v| *v = (*v - self.x_mean[j]) / s);
        }
        Ok(out)
    }

    /// Restricts the statistics to a subset of predictor columns.
    pub fn select_x(&self, cols: &[usize]) -> Centering {
        Centering {
            x_mean: DVector::from_iterator(cols.len(), cols.iter().map(|&j| self.x_mean[j])),
            y_mean: self.y_mean.clone(),
            x_scale: self
                .x_scale
                .as_ref()
                .map(|s| DVector::from_iterator(cols.len(), cols.iter().map(|&j| s[j]))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenteredData {
    pub xc: DMatrix<f64>,
    pub yc: DMatrix<f64>,
    pub stats: Centering,
    pub warnings: Vec<String>,
}

impl CenteredData {
    pub fn n(&self) -> usize {
        self.xc.nrows()
    }

    pub fn p(&self) -> usize {
        self.xc.ncols()
    }

    pub fn q(&self) -> usize {
        self.yc.ncols()
    }

    /// Builds a centered view on a subset of predictor columns.
    pub fn select_columns(&self, cols: &[usize]) -> CenteredData {
        CenteredData {
            xc: linalg::select_columns(&self.xc, cols),
            yc: self.yc.clone(),
            stats: self.stats.select_x(cols),
            warnings: Vec::new(),
        }
    }
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    let mut means = DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n));
    // second pass removes the rounding left by the first
    for (j, c) in m.column_iter().enumerate() {
        let mu = means[j];
        means[j] = mu + c.iter().map(|v| v - mu).sum::<f64>() / n;
    }
    means
}

/// Subtracts column means from X and Y and optionally scales X columns to
/// unit sample standard deviation (n - 1 denominator).
pub fn center_columns(data: &Dataset, scale: bool) -> CenteredData {
    let n = data.n();
    let x_mean = column_means(data.x());
    let y_mean = column_means(data.y());
    let mut xc = data.x().clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-x_mean[j]);
    }
    let mut yc = data.y().clone();
    for (j, mut col) in yc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-y_mean[j]);
    }
    let mut warnings = Vec::new();
    let x_scale = scale.then(|| {
        let mut s = DVector::from_element(data.p(), 1.0);
        for (j, mut col) in xc.column_iter_mut().enumerate() {
            let sd = (col.norm_squared() / (n as f64 - 1.0)).sqrt();
            if sd <= 1e-12 * x_mean[j].abs().max(1.0) {
                let msg = format!("predictor column {j} is constant; scale set to 1");
                warn!("{msg}");
                warnings.push(msg);
            } else {
                s[j] = sd;
                col /= sd;
            }
        }
        s
    });
    CenteredData {
        xc,
        yc,
        stats: Centering {
            x_mean,
            y_mean,
            x_scale,
        },
        warnings,
    }
}

/// A numeric matrix read from CSV, with header names when present.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvMatrix {
    pub data: DMatrix<f64>,
    pub names: Option<Vec<String>>,
}

/// Reads a comma-separated numeric matrix.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<CsvMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, has_header)
}

pub fn read_csv<R: std::io::Read>(reader: R, has_header: bool) -> Result<CsvMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names = if has_header {
        let h = rdr.headers().map_err(csv_error)?;
        if h.is_empty() {
            return Err(Error::Empty("CSV file has no header or data".into()));
        }
        Some(h.iter().map(str::to_owned).collect::<Vec<_>>())
    } else {
        None
    };
    let mut values = Vec::new();
    let mut ncols = names.as_ref().map(Vec::len);
    let mut nrows = 0;
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match ncols {
            None => ncols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Parse {
                    line,
                    column: None,
                    message: format!("expected {c} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                column: Some(j + 1),
                message: format!("non-numeric value {field:?}"),
            })?;
            values.push(v);
        }
        nrows += 1;
    }
    if nrows == 0 {
        return Err(Error::Empty("CSV file contains no data rows".into()));
    }
    let ncols = ncols.unwrap_or(0);
    Ok(CsvMatrix {
        data: DMatrix::from_row_slice(nrows, ncols, &values),
        names,
    })
}

fn csv_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            pos,
            expected_len,
            len,
        } => Error::Parse {
            line: pos.as_ref().map_or(0, |p| p.line()),
            column: None,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        _ => Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            column: None,
            message: e.to_string(),
        },
    }
}

/// Writes a matrix with 17 significant digits so that reading it back is exact.
pub fn save_csv(path: impl AsRef<Path>, m: &DMatrix<f64>, names: Option<&[String]>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    write_csv(&mut out, m, names).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_csv<W: Write>(out: &mut W, m: &DMatrix<f64>, names: Option<&[String]>) -> std::io::Result<()> {
    if let Some(names) = names {
        writeln!(out, "{}", names.join(","))?;
    }
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads one opaque label per line (a header line is skipped when requested).
pub fn load_labels(path: impl AsRef<Path>, has_header: bool) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let labels: Vec<String> = text
        .lines()
        .skip(usize::from(has_header))
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect();
    if labels.is_empty() {
        return Err(Error::Empty(format!("{} has no labels", path.display())));
    }
    Ok(labels)
}

/// Assignment of every row to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Groups rows into units: one per row, or one per distinct subject in order
/// of first appearance.
fn units(n: usize, subject_ids: Option<&[String]>) -> Result<Vec<Vec<usize>>> {
    match subject_ids {
        None => Ok((0..n).map(|i| vec![i]).collect()),
        Some(ids) => {
            if ids.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "subject labels",
                    expected: n,
                    found: ids.len(),
                });
            }
            let mut index: HashMap<&str, usize> = HashMap::new();
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for (row, id) in ids.iter().enumerate() {
                let g = *index.entry(id.as_str()).or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[g].push(row);
            }
            Ok(groups)
        }
    }
}

/// Seeded shuffle of units followed by round-robin assignment to folds.
pub fn split_folds(
    n: usize,
    k: usize,
    seed: u64,
    subject_ids: Option<&[String]>,
) -> Result<FoldAssignment> {
    let mut groups = units(n, subject_ids)?;
    if k < 2 || k > groups.len() {
        return Err(Error::InvalidInput(format!(
            "fold count {k} must lie in 2..={} (distinct units)",
            groups.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let mut fold_of = vec![0; n];
    for (pos, group) in groups.iter().enumerate() {
        for &row in group {
            fold_of[row] = pos % k;
        }
    }
    Ok(FoldAssignment { k, seed, fold_of })
}

/// Random train/test partition of rows; with labels, whole subjects move together.
/// Returns `(train, test)` row indices, both sorted.
pub fn split_train_test(
    n: usize,
    test_fraction: f64,
    seed: u64,
    subject_ids: Option<&[String]>,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test fraction {test_fraction} must lie in (0, 1)"
        )));
    }
    let mut groups = units(n, subject_ids)?;
    let n_test = ((groups.len() as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test >= groups.len() {
        return Err(Error::InvalidInput(format!(
            "test fraction {test_fraction} leaves an empty train or test part"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let mut test: Vec<usize> = groups[..n_test].iter().flatten().copied().collect();
    let mut train: Vec<usize> = groups[n_test..].iter().flatten().copied().collect();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}
