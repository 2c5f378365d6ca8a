use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rug::Float;
use serde::Serialize;

use super::config::{RunConfig, SCHEMA_VERSION};
use crate::error::Result;

/// Significant digits printed for a value computed at `digits`.
pub fn print_digits(digits: u32, full: bool) -> usize {
    if full {
        digits as usize
    } else {
        digits.min(50) as usize
    }
}

pub fn fmt_float(v: &Float, digits: usize) -> String {
    if v.is_zero() {
        return "0".into();
    }
    v.to_string_radix(10, Some(digits))
}

pub fn fmt_opt(v: Option<&Float>, digits: usize) -> String {
    v.map(|x| fmt_float(x, digits)).unwrap_or_default()
}

/// Shortest round-trip decimal; empty for NaN so missing values stay blank.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:e}")
    }
}

/// CSV with `schema_version` as the first column of every row.
pub struct CsvOut {
    w: csv::Writer<Vec<u8>>,
    path: PathBuf,
}

impl CsvOut {
    pub fn new(path: PathBuf, header: &[&str]) -> Result<Self> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut h = vec!["schema_version"];
        h.extend_from_slice(header);
        w.write_record(&h).map_err(io_err)?;
        Ok(CsvOut { w, path })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        let mut r = vec![SCHEMA_VERSION.to_string()];
        r.extend_from_slice(fields);
        self.w.write_record(&r).map_err(io_err)
    }

    /// Writes the file atomically; returns its path.
    pub fn finish(self) -> Result<PathBuf> {
        let bytes = self.w.into_inner().map_err(|e| io_err(e.into_error()))?;
        write_atomic(&self.path, &bytes)?;
        Ok(self.path)
    }
}

fn io_err(e: impl Into<std::io::Error>) -> crate::error::Error {
    crate::error::Error::Io(e.into())
}

impl From<csv::Error> for crate::error::Error {
    fn from(e: csv::Error) -> Self {
        crate::error::Error::Io(e.into())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| crate::error::Error::Io(e.error))?;
    Ok(())
}

#[derive(Serialize)]
pub struct OutputRecord<'a, T: Serialize> {
    pub schema_version: u32,
    pub config: &'a RunConfig,
    pub timestamp: u64,
    pub digits: u32,
    pub files: Vec<String>,
    pub exit_code: i32,
    pub payload: T,
}

/// `<command>.run.json` next to the CSV: config echo, digits and summary.
pub fn write_record<T: Serialize>(cfg: &RunConfig, digits: u32, files: &[PathBuf], exit_code: i32, payload: T) -> Result<PathBuf> {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let rec = OutputRecord {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        timestamp,
        digits,
        files: files.iter().map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()).collect(),
        exit_code,
        payload,
    };
    let path = Path::new(&cfg.out_dir).join(format!("{}.run.json", cfg.command.as_str()));
    write_atomic(&path, serde_json::to_string_pretty(&rec)?.as_bytes())?;
    Ok(path)
}

pub struct PlotSeries {
    pub col: usize,
    pub title: String,
    /// gnuplot condition selecting rows, e.g. `column(3)==32`.
    pub filter: Option<String>,
}

/// gnuplot script over one CSV; columns are 1-based.
pub fn write_plot(path: &Path, title: &str, xlabel: &str, csv_name: &str, xcol: usize, series: &[PlotSeries]) -> Result<()> {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str(&format!("set title '{title}'\n"));
    s.push_str(&format!("set xlabel '{xlabel}'\n"));
    s.push_str("set grid\n");
    let parts: Vec<String> = series
        .iter()
        .map(|p| {
            let y = match &p.filter {
                Some(f) => format!("(({f}) ? column({}) : 1/0)", p.col),
                None => format!("{}", p.col),
            };
            format!("'{csv_name}' every ::1 using {xcol}:{y} with linespoints title '{}'", p.title)
        })
        .collect();
    s.push_str(&format!("plot {}\n", parts.join(", \\\n     ")));
    write_atomic(path, s.as_bytes())
}
