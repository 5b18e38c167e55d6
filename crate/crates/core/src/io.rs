//! File formats: JSON-lines with a versioned header line, headed CSV, and
//! one-id-per-line text files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const USERS_SCHEMA: &str = "twsample.users";
pub const LABELED_USERS_SCHEMA: &str = "twsample.labeled_users";
pub const TWEETS_SCHEMA: &str = "twsample.tweets";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsonlHeader {
    pub schema: String,
    pub version: u32,
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<'a, T, W, I>(mut w: W, schema: &str, items: I) -> Result<()>
where
    T: Serialize + 'a,
    W: Write,
    I: IntoIterator<Item = &'a T>,
{
    let header = JsonlHeader {
        schema: schema.to_owned(),
        version: SCHEMA_VERSION,
    };
    let io = |e| Error::io("<jsonl writer>", e);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(io)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(r: R, schema: &str) -> Result<Vec<T>> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::EmptyInput(format!("{schema} file has no header line")))?
        .map_err(|e| Error::io("<jsonl reader>", e))?;
    let header: JsonlHeader = serde_json::from_str(&first)?;
    if header.schema != schema || header.version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "expected {schema} v{SCHEMA_VERSION}, found {} v{}",
            header.schema, header.version
        )));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io("<jsonl reader>", e))?;
        if line.is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_jsonl_file<'a, T: Serialize + 'a>(
    path: &Path,
    schema: &str,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    write_jsonl(create(path)?, schema, items)
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<T>> {
    read_jsonl(open(path)?, schema)
}

pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub fn write_csv<'a, T: Serialize + 'a, W: Write>(w: W, rows: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let mut w = csv_writer(w);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_csv_file<'a, T: Serialize + 'a>(path: &Path, rows: impl IntoIterator<Item = &'a T>) -> Result<()> {
    write_csv(create(path)?, rows)
}

pub fn read_csv_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

pub fn write_json_file<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

pub fn write_ids(path: &Path, ids: &[u64]) -> Result<()> {
    let mut w = create(path)?;
    for id in ids {
        writeln!(w, "{id}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_ids(path: &Path) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| Error::Config(format!("{}:{}: not an id: {t:?}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}
