//! Pool snapshots, JSON summaries and run manifests.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascade::SamplePool;
use crate::error::{Error, Result};

/// Fixed 17-significant-digit formatting used in every CSV output.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_pool_csv(path: &Path, pool: &SamplePool) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record((1..=pool.dim()).map(|i| format!("z{i}")))?;
    for z in pool.samples() {
        w.write_record(z.iter().map(|&x| fmt_f64(x)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pool_csv(path: &Path) -> Result<SamplePool> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::InvalidArgument(format!("pool file not found: {}", path.display())),
        _ => Error::Io(e),
    })?;
    let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
    let dim = r.headers()?.len();
    let mut data = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: rec.len() });
        }
        for field in rec.iter() {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad number {field:?} in {}", path.display())))?;
            data.push(x);
        }
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument(format!("pool file {} is empty", path.display())));
    }
    SamplePool::new(dim, data, 0)
}

/// Write a CSV table with a header and preformatted cells.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Record of one CLI invocation, written next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model_path: PathBuf,
    pub command: String,
    pub seed: Option<u64>,
    pub parameters: serde_json::Map<String, serde_json::Value>,
    pub output_paths: Vec<PathBuf>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(model_path: &Path, command: &str, seed: Option<u64>) -> Self {
        RunManifest {
            model_path: model_path.to_path_buf(),
            command: command.to_string(),
            seed,
            parameters: serde_json::Map::new(),
            output_paths: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters.insert(key.to_string(), serde_json::to_value(value).expect("serializable parameter"));
        self
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
    }
}

/// `<output>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.csv");
        let pool = SamplePool::new(2, vec![0.1, 1.0 / 3.0, 2e-300, 7.5e12], 0).unwrap();
        write_pool_csv(&path, &pool).unwrap();
        let back = read_pool_csv(&path).unwrap();
        assert_eq!(back.as_flat(), pool.as_flat());
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("z1,z2\n"));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new(Path::new("ex1.json"), "simulate", Some(3));
        m.param("k", 10).param("rounds", 2);
        let p = dir.path().join("m.json");
        write_json(&p, &m).unwrap();
        assert_eq!(RunManifest::read(&p).unwrap(), m);
        assert_eq!(manifest_path(Path::new("a/pool.csv")), PathBuf::from("a/pool.csv.manifest.json"));
    }

    #[test]
    fn missing_pool() {
        assert!(matches!(read_pool_csv(Path::new("/nonexistent/pool.csv")), Err(Error::InvalidArgument(_))));
    }
}
