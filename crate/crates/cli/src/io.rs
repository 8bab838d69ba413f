//! File formats: CSV for data and draw samples, versioned JSON for fits,
//! estimates, and run manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use dnr_core::datamodels::{County, LogisticData, ModelError, PollData};
use dnr_core::numkit::{DenseMatrix, DenseVector};
use dnr_core::recombine::{DnrEstimate, SubsetFit};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum IoError {
    Io(std::io::Error),
    Csv(csv::Error),
    Json(serde_json::Error),
    Format(String),
    Model(ModelError),
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoError::Io(e) => write!(f, "io: {e}"),
            IoError::Csv(e) => write!(f, "csv: {e}"),
            IoError::Json(e) => write!(f, "json: {e}"),
            IoError::Format(m) => write!(f, "bad format: {m}"),
            IoError::Model(e) => write!(f, "bad data: {e}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e)
    }
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        IoError::Csv(e)
    }
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Json(e)
    }
}

impl From<ModelError> for IoError {
    fn from(e: ModelError) -> Self {
        IoError::Model(e)
    }
}

/// Reads a logistic dataset from CSV with header `y,x1,...,xp`.
pub fn load_logistic_csv(path: &Path) -> Result<LogisticData, IoError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.get(0) != Some("y") {
        return Err(IoError::Format("first column must be y".into()));
    }
    let p = headers.len() - 1;
    for (j, h) in headers.iter().skip(1).enumerate() {
        let expect = format!("x{}", j + 1);
        if h != expect {
            return Err(IoError::Format(format!(
                "column {} must be {expect}, found {h}",
                j + 2
            )));
        }
    }
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != p + 1 {
            return Err(IoError::Format("ragged row".into()));
        }
        let yi: u8 = record[0]
            .trim()
            .parse()
            .map_err(|_| IoError::Format(format!("bad y value {:?}", &record[0])))?;
        if yi > 1 {
            return Err(IoError::Format(format!("y must be 0 or 1, found {yi}")));
        }
        y.push(yi);
        let row: Result<Vec<f64>, _> = record.iter().skip(1).map(|v| v.trim().parse()).collect();
        rows.push(row.map_err(|_| IoError::Format("bad covariate value".into()))?);
    }
    if rows.is_empty() {
        return Err(IoError::Format("no data rows".into()));
    }
    let x = DenseMatrix::from_rows(&rows).map_err(|e| IoError::Format(e.to_string()))?;
    Ok(LogisticData::new(x, y)?)
}

/// Writes a logistic dataset as CSV with header `y,x1,...,xp`.
pub fn save_logistic_csv(path: &Path, data: &LogisticData) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    let p = data.p();
    let mut header = vec!["y".to_string()];
    for j in 1..=p {
        header.push(format!("x{j}"));
    }
    writer.write_record(&header)?;
    for i in 0..data.n() {
        let mut record = vec![data.y()[i].to_string()];
        for v in data.x().row(i) {
            record.push(fmt_f64(*v));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads poll counts from CSV with header
/// `fips,total_voters,sample_voters,sample_clinton`.
pub fn load_poll_csv(path: &Path) -> Result<PollData, IoError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let expect = ["fips", "total_voters", "sample_voters", "sample_clinton"];
    if headers.iter().ne(expect) {
        return Err(IoError::Format(format!(
            "header must be {}",
            expect.join(",")
        )));
    }
    let mut counties = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |i: usize| -> Result<u64, IoError> {
            record[i]
                .trim()
                .parse()
                .map_err(|_| IoError::Format(format!("bad count {:?}", &record[i])))
        };
        counties.push(County {
            fips: parse(0)? as u32,
            total_voters: parse(1)?,
            sample_voters: parse(2)?,
            sample_clinton: parse(3)?,
        });
    }
    Ok(PollData::new(counties)?)
}

/// Reads a draw sample from CSV with header `t1,...,tp`.
pub fn load_sample_csv(path: &Path) -> Result<Vec<DenseVector>, IoError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let p = headers.len();
    for (j, h) in headers.iter().enumerate() {
        let expect = format!("t{}", j + 1);
        if h != expect {
            return Err(IoError::Format(format!(
                "column {} must be {expect}, found {h}",
                j + 1
            )));
        }
    }
    let mut draws = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != p {
            return Err(IoError::Format("ragged row".into()));
        }
        let row: Result<Vec<f64>, _> = record.iter().map(|v| v.trim().parse()).collect();
        draws.push(DenseVector::from(
            row.map_err(|_| IoError::Format("bad value".into()))?,
        ));
    }
    if draws.is_empty() {
        return Err(IoError::Format("no draws".into()));
    }
    Ok(draws)
}

/// Writes a draw sample as CSV with header `t1,...,tp`.
pub fn save_sample_csv(path: &Path, draws: &[DenseVector]) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    let p = draws.first().map_or(0, |d| d.dim());
    let header: Vec<String> = (1..=p).map(|j| format!("t{j}")).collect();
    writer.write_record(&header)?;
    for d in draws {
        let record: Vec<String> = d.iter().map(|v| fmt_f64(*v)).collect();
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Shortest decimal string that round-trips the exact f64 value.
pub fn fmt_f64(v: f64) -> String {
    let mut buf = ryu_like(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_like(v: f64) -> String {
    // `{}` on f64 is the shortest representation that parses back exactly
    format!("{v}")
}

#[derive(Serialize, Deserialize)]
pub struct FitsFile {
    pub schema_version: u32,
    pub fits: Vec<SubsetFit>,
}

pub fn save_fits(path: &Path, fits: &[SubsetFit]) -> Result<(), IoError> {
    let file = FitsFile {
        schema_version: SCHEMA_VERSION,
        fits: fits.to_vec(),
    };
    write_json(path, &file)
}

/// Accepts either the versioned object or a bare SubsetFit array.
pub fn load_fits(path: &Path) -> Result<Vec<SubsetFit>, IoError> {
    let text = fs::read_to_string(path)?;
    if let Ok(file) = serde_json::from_str::<FitsFile>(&text) {
        return Ok(file.fits);
    }
    Ok(serde_json::from_str::<Vec<SubsetFit>>(&text)?)
}

#[derive(Serialize, Deserialize)]
pub struct EstimatesFile {
    pub schema_version: u32,
    pub estimates: BTreeMap<String, DnrEstimate>,
}

pub fn save_estimates(
    path: &Path,
    estimates: &BTreeMap<String, DnrEstimate>,
) -> Result<(), IoError> {
    let file = EstimatesFile {
        schema_version: SCHEMA_VERSION,
        estimates: estimates.clone(),
    };
    write_json(path, &file)
}

pub fn load_estimates(path: &Path) -> Result<BTreeMap<String, DnrEstimate>, IoError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str::<EstimatesFile>(&text)?.estimates)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
