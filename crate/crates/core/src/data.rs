//! Area-level inputs: direct estimates with their sampling variances, and
//! covariate design matrices.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direct survey estimates `y` with known sampling variances `d`, one per area.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectEstimateSet {
    area_ids: Vec<String>,
    y: Vec<f64>,
    d: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EstimateRow {
    area_id: String,
    y: f64,
    d: f64,
}

impl DirectEstimateSet {
    pub fn new(area_ids: Vec<String>, y: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::shape("direct estimate set needs at least one area"));
        }
        if y.len() != d.len() || y.len() != area_ids.len() {
            return Err(Error::shape(format!(
                "length mismatch: {} ids, {} estimates, {} variances",
                area_ids.len(),
                y.len(),
                d.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("estimate for area {} is not finite", area_ids[i])));
        }
        if let Some(i) = d.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::domain(format!(
                "sampling variance for area {} must be positive and finite, got {}",
                area_ids[i], d[i]
            )));
        }
        Ok(Self { area_ids, y, d })
    }

    /// Builds a set with ids `"1".."m"`.
    pub fn from_values(y: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        let ids = (1..=y.len()).map(|i| i.to_string()).collect();
        Self::new(ids, y, d)
    }

    /// Same areas and variances with replaced estimates.
    pub fn with_estimates(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.area_ids.clone(), y, self.d.clone())
    }

    /// Rescales a thinned component `part` with information fraction `frac`
    /// into a replicate direct estimate: `part / frac` with variance `d / frac`.
    pub fn rescaled(&self, part: &[f64], frac: f64) -> Result<Self> {
        if !(frac > 0.0 && frac <= 1.0) {
            return Err(Error::domain(format!("fraction must lie in (0, 1], got {frac}")));
        }
        if part.len() != self.m() {
            return Err(Error::shape("component length differs from area count"));
        }
        Self::new(
            self.area_ids.clone(),
            part.iter().map(|v| v / frac).collect(),
            self.d.iter().map(|v| v / frac).collect(),
        )
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn area_ids(&self) -> &[String] {
        &self.area_ids
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["area_id", "y", "d"] {
            return Err(Error::shape(format!(
                "expected header area_id,y,d, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut ids, mut y, mut d) = (Vec::new(), Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let row: EstimateRow = row?;
            ids.push(row.area_id);
            y.push(row.y);
            d.push(row.d);
        }
        Self::new(ids, y, d)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(file)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for i in 0..self.m() {
            wtr.serialize(EstimateRow {
                area_id: self.area_ids[i].clone(),
                y: self.y[i],
                d: self.d[i],
            })?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// An `m × p` covariate matrix with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    columns: Vec<String>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>, columns: Vec<String>) -> Result<Self> {
        if columns.len() != x.ncols() {
            return Err(Error::shape(format!(
                "{} column names for {} columns",
                columns.len(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("design matrix has non-finite entries"));
        }
        Ok(Self { x, columns })
    }

    pub fn intercept(m: usize) -> Self {
        Self {
            x: DMatrix::from_element(m, 1, 1.0),
            columns: vec!["intercept".to_string()],
        }
    }

    /// Wraps a bare matrix, naming columns `x1..xp`.
    pub fn from_matrix(x: DMatrix<f64>) -> Self {
        let columns = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self { x, columns }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn row_dot(&self, i: usize, beta: &DVector<f64>) -> f64 {
        self.x.row(i).iter().zip(beta.iter()).map(|(a, b)| a * b).sum()
    }

    /// Reads `area_id,<col>,...` and aligns rows to `area_ids`.
    pub fn read_csv(path: impl AsRef<Path>, area_ids: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("area_id") || headers.len() < 2 {
            return Err(Error::shape("design file header must be area_id followed by columns"));
        }
        let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut rows = std::collections::HashMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().skip(1).map(|v| v.trim().parse::<f64>()).collect();
            let values = parsed.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: line + 2,
                message: e.to_string(),
            })?;
            if values.len() != columns.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line + 2,
                    message: "wrong field count".into(),
                });
            }
            rows.insert(rec[0].to_string(), values);
        }
        let m = area_ids.len();
        let mut x = DMatrix::zeros(m, columns.len());
        for (i, id) in area_ids.iter().enumerate() {
            let values = rows
                .get(id)
                .ok_or_else(|| Error::shape(format!("design file has no row for area {id}")))?;
            for (j, v) in values.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        Self::new(x, columns)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, area_ids: &[String]) -> Result<()> {
        let path = path.as_ref();
        if area_ids.len() != self.m() {
            return Err(Error::shape("area id count differs from design rows"));
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut wtr = csv::Writer::from_writer(file);
        let mut header = vec!["area_id".to_string()];
        header.extend(self.columns.iter().cloned());
        wtr.write_record(&header)?;
        for (i, id) in area_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
