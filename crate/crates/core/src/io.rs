//! CSV persistence, run manifests and chunked streaming of long shot records.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Writes serializable rows with a header line. Floats use shortest
/// round-trip formatting.
pub fn write_rows<T, W, I>(writer: W, rows: I) -> Result<()>
where
    T: Serialize,
    W: Write,
    I: IntoIterator<Item = T>,
{
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Like [`write_rows`] but also emits the header when there are no rows.
pub fn write_rows_with_header<T, W, I>(writer: W, header: &[&str], rows: I) -> Result<()>
where
    T: Serialize,
    W: Write,
    I: IntoIterator<Item = T>,
{
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize, I: IntoIterator<Item = T>>(
    path: &Path,
    header: &[&str],
    rows: I,
) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_rows_with_header(file, header, rows)
}

/// Reads rows, checking the header against `expected` so a wrong file is
/// reported by name rather than by a deserializer message.
pub fn read_csv_file<T: DeserializeOwned>(path: &Path, expected: &[&str]) -> Result<Vec<T>> {
    let source_name = path.display().to_string();
    let schema = |message: String| Error::Schema {
        source_name: source_name.clone(),
        message,
    };
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let missing: Vec<_> = expected
        .iter()
        .filter(|h| !headers.iter().any(|x| x == **h))
        .collect();
    if !missing.is_empty() {
        return Err(schema(format!(
            "missing columns {missing:?}, found {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        out.push(row.map_err(|e| schema(format!("row {}: {e}", i + 2)))?);
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

/// Record of one run: the seed, the hash of the resolved configuration, and
/// the hash of every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub outputs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(command: impl Into<String>, seed: u64, resolved_config: &str) -> Self {
        Self {
            command: command.into(),
            seed,
            config_sha256: sha256_hex(resolved_config.as_bytes()),
            outputs: Vec::new(),
        }
    }

    pub fn add_file(&mut self, dir: &Path, name: &str) -> Result<()> {
        let sha256 = sha256_file(&dir.join(name))?;
        self.outputs.push(ManifestEntry {
            file: name.to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        fs::write(&path, body)?;
        Ok(path)
    }
}

/// Writes rows to `stem_00000.csv`, `stem_00001.csv`, ... with at most
/// `chunk_rows` rows per file, so a run never holds its full record in memory.
pub struct ChunkedCsvWriter<T: Serialize> {
    dir: PathBuf,
    stem: String,
    header: Vec<String>,
    chunk_rows: usize,
    buffer: Vec<T>,
    files: Vec<String>,
    total: usize,
}

impl<T: Serialize> ChunkedCsvWriter<T> {
    pub fn new(dir: &Path, stem: &str, header: &[&str], chunk_rows: usize) -> Self {
        Self {
            dir: dir.to_path_buf(),
            stem: stem.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            chunk_rows: chunk_rows.max(1),
            buffer: Vec::new(),
            files: Vec::new(),
            total: 0,
        }
    }

    pub fn push(&mut self, row: T) -> Result<()> {
        self.buffer.push(row);
        self.total += 1;
        if self.buffer.len() >= self.chunk_rows {
            self.flush_chunk()?;
        }
        Ok(())
    }

    fn flush_chunk(&mut self) -> Result<()> {
        let name = format!("{}_{:05}.csv", self.stem, self.files.len());
        let header: Vec<&str> = self.header.iter().map(String::as_str).collect();
        write_csv_file(&self.dir.join(&name), &header, self.buffer.drain(..))?;
        self.files.push(name);
        Ok(())
    }

    /// Flushes the tail and returns the chunk file names and the row count.
    pub fn finish(mut self) -> Result<(Vec<String>, usize)> {
        if !self.buffer.is_empty() || self.files.is_empty() {
            self.flush_chunk()?;
        }
        Ok((self.files, self.total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        t_s: f64,
        value: f64,
    }

    #[test]
    fn floats_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let rows: Vec<Row> = (0..50)
            .map(|i| Row {
                t_s: i as f64 * 0.1,
                value: (i as f64).sqrt() / 3.0,
            })
            .collect();
        write_csv_file(&path, &["t_s", "value"], &rows).unwrap();
        let back: Vec<Row> = read_csv_file(&path, &["t_s", "value"]).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn schema_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "a,b\n1,2\n").unwrap();
        let err = read_csv_file::<Row>(&path, &["t_s", "value"]).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
        fs::write(&path, "t_s,value\n1,oops\n").unwrap();
        let err = read_csv_file::<Row>(&path, &["t_s", "value"]).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn chunked_writer_splits_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ChunkedCsvWriter::new(dir.path(), "shots", &["t_s", "value"], 4);
        for i in 0..10 {
            w.push(Row {
                t_s: i as f64,
                value: 0.0,
            })
            .unwrap();
        }
        let (files, total) = w.finish().unwrap();
        assert_eq!(total, 10);
        assert_eq!(
            files,
            vec!["shots_00000.csv", "shots_00001.csv", "shots_00002.csv"]
        );
        let last: Vec<Row> = read_csv_file(&dir.path().join(&files[2]), &["t_s"]).unwrap();
        assert_eq!(last.len(), 2);
    }

    #[test]
    fn empty_outputs_keep_their_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        write_csv_file::<Row, _>(&path, &["t_s", "value"], Vec::new()).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "t_s,value\n");
    }

    #[test]
    fn manifest_hashes_are_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
