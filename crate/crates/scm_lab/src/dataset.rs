//! Tabular samples and their on-disk form.
//!
//! A dataset is a plain matrix over the observed nodes plus optional ground
//! truth and optional standardization. Values persist as CSV with a header
//! row; ground truth goes to a sibling CSV whose columns are prefixed "z."
//! and "u.". Ablation specs persist as JSON.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::ablation::AblationSpec;
use crate::simulate::GroundTruthSample;
use crate::ScmError;

/// N rows of observed values, one column per observed node in graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub values: Array2<f64>,
    pub column_names: Vec<String>,
    pub ground_truth: Option<Vec<GroundTruthSample>>,
    /// Per-column (mean, standard deviation) when `values` is standardized.
    pub standardization: Option<Vec<(f64, f64)>>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, ScmError> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| ScmError::UnknownNode(name.to_owned()))
    }

    pub fn column(&self, name: &str) -> Result<ArrayView1<'_, f64>, ScmError> {
        Ok(self.values.column(self.column_index(name)?))
    }

    /// Writes the value matrix as CSV with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<(), ScmError> {
        let mut w = csv::Writer::from_path(path).map_err(io_err)?;
        w.write_record(&self.column_names).map_err(io_err)?;
        let mut record = Vec::with_capacity(self.n_cols());
        for row in self.values.rows() {
            record.clear();
            record.extend(row.iter().map(|v| format_value(*v)));
            w.write_record(&record).map_err(io_err)?;
        }
        w.flush().map_err(|e| ScmError::Io(e.to_string()))?;
        Ok(())
    }

    /// Writes the hidden and noise channels of the ground truth as CSV with
    /// columns "z.<hidden>" then "u.<observed>".
    pub fn write_ground_truth_csv(
        &self,
        path: &Path,
        hidden_names: &[String],
    ) -> Result<(), ScmError> {
        let gt = self
            .ground_truth
            .as_ref()
            .ok_or_else(|| ScmError::Io("dataset carries no ground truth".to_owned()))?;
        let mut header = Vec::new();
        header.extend(hidden_names.iter().map(|n| format!("z.{n}")));
        header.extend(self.column_names.iter().map(|n| format!("u.{n}")));
        let mut w = csv::Writer::from_path(path).map_err(io_err)?;
        w.write_record(&header).map_err(io_err)?;
        let mut record = Vec::with_capacity(header.len());
        for sample in gt {
            record.clear();
            record.extend(sample.z.iter().map(|v| format_value(*v)));
            record.extend(sample.u.iter().map(|v| format_value(*v)));
            w.write_record(&record).map_err(io_err)?;
        }
        w.flush().map_err(|e| ScmError::Io(e.to_string()))?;
        Ok(())
    }

    /// Reads a value CSV written by [`write_csv`]. Ground truth and
    /// standardization are not recovered from disk.
    pub fn read_csv(path: &Path) -> Result<Self, ScmError> {
        let file = File::open(path).map_err(|e| ScmError::Io(e.to_string()))?;
        let mut r = csv::Reader::from_reader(BufReader::new(file));
        let column_names: Vec<String> = r
            .headers()
            .map_err(io_err)?
            .iter()
            .map(str::to_owned)
            .collect();
        let d = column_names.len();
        let mut flat = Vec::new();
        for record in r.records() {
            let record = record.map_err(io_err)?;
            if record.len() != d {
                return Err(ScmError::Io(format!(
                    "row has {} fields, header has {d}",
                    record.len()
                )));
            }
            for field in record.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| ScmError::Io(format!("bad numeric field {field:?}")))?;
                flat.push(v);
            }
        }
        let n = flat.len() / d.max(1);
        let values =
            Array2::from_shape_vec((n, d), flat).map_err(|e| ScmError::Io(e.to_string()))?;
        Ok(Self {
            values,
            column_names,
            ground_truth: None,
            standardization: None,
        })
    }

    /// Reads a value CSV plus its ground-truth sibling, reattaching full
    /// GroundTruthSamples (x restored from the value matrix).
    pub fn read_with_ground_truth(path: &Path, gt_path: &Path) -> Result<Self, ScmError> {
        let mut ds = Self::read_csv(path)?;
        let file = File::open(gt_path).map_err(|e| ScmError::Io(e.to_string()))?;
        let mut r = csv::Reader::from_reader(BufReader::new(file));
        let header: Vec<String> = r
            .headers()
            .map_err(io_err)?
            .iter()
            .map(str::to_owned)
            .collect();
        let n_hidden = header.iter().take_while(|h| h.starts_with("z.")).count();
        let expected_u: Vec<String> = ds.column_names.iter().map(|n| format!("u.{n}")).collect();
        if header[n_hidden..] != expected_u[..] {
            return Err(ScmError::Io(
                "ground-truth header does not match dataset columns".to_owned(),
            ));
        }
        let mut gt = Vec::with_capacity(ds.n_rows());
        for (i, record) in r.records().enumerate() {
            let record = record.map_err(io_err)?;
            let mut fields = Vec::with_capacity(record.len());
            for field in record.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| ScmError::Io(format!("bad numeric field {field:?}")))?;
                fields.push(v);
            }
            if i >= ds.n_rows() {
                return Err(ScmError::Io("ground truth has more rows than data".into()));
            }
            gt.push(GroundTruthSample {
                x: ds.values.row(i).to_vec(),
                z: fields[..n_hidden].to_vec(),
                u: fields[n_hidden..].to_vec(),
            });
        }
        if gt.len() != ds.n_rows() {
            return Err(ScmError::Io("ground truth has fewer rows than data".into()));
        }
        ds.ground_truth = Some(gt);
        Ok(ds)
    }
}

/// Display for f64 prints the shortest decimal that parses back exactly.
fn format_value(v: f64) -> String {
    format!("{v}")
}

fn io_err(e: csv::Error) -> ScmError {
    ScmError::Io(e.to_string())
}

/// Saves an ablation spec as JSON {kind, S, seed}.
pub fn write_ablation_spec(spec: &AblationSpec, path: &Path) -> Result<(), ScmError> {
    let file = File::create(path).map_err(|e| ScmError::Io(e.to_string()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, spec).map_err(|e| ScmError::Io(e.to_string()))?;
    w.write_all(b"\n")
        .map_err(|e| ScmError::Io(e.to_string()))?;
    Ok(())
}

/// Loads an ablation spec written by [`write_ablation_spec`].
pub fn read_ablation_spec(path: &Path) -> Result<AblationSpec, ScmError> {
    let file = File::open(path).map_err(|e| ScmError::Io(e.to_string()))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| ScmError::Io(e.to_string()))
}

/// Linearly interpolated percentile of a column, p in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    assert!((0.0..=100.0).contains(&p), "percentile out of range");
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Contiguous 80/10/10 row split: train, validation, test.
pub fn split_ranges(
    n: usize,
) -> (
    std::ops::Range<usize>,
    std::ops::Range<usize>,
    std::ops::Range<usize>,
) {
    let train_end = n * 8 / 10;
    let val_end = n * 9 / 10;
    (0..train_end, train_end..val_end, val_end..n)
}
