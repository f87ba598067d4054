//! Deterministic JSON and CSV output.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which round-trips
//! every `f64` exactly. JSON keys follow struct declaration order or `BTreeMap`
//! order, so identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct Canonical;

impl serde_json::ser::Formatter for Canonical {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with canonical float formatting and a trailing newline.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Canonical);
    value
        .serialize(&mut ser)
        .expect("report types serialize infallibly");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Something that can be laid out as a CSV table.
pub trait CsvTable {
    fn header(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<CsvCell>>;

    fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(CsvCell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug)]
pub enum CsvCell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl CsvCell {
    fn render(&self) -> String {
        match self {
            CsvCell::Int(i) => i.to_string(),
            CsvCell::Float(x) => format_f64(*x),
            CsvCell::Text(s) => s.clone(),
        }
    }
}

impl From<usize> for CsvCell {
    fn from(v: usize) -> Self {
        CsvCell::Int(v as i64)
    }
}

impl From<f64> for CsvCell {
    fn from(v: f64) -> Self {
        CsvCell::Float(v)
    }
}

impl From<&str> for CsvCell {
    fn from(v: &str) -> Self {
        CsvCell::Text(v.to_string())
    }
}

/// Provenance embedded in every report: what ran, on which inputs, with which
/// resolved parameters, and where the outputs went.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub tool_version: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            ..Default::default()
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.parameters.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }

    pub fn input(mut self, path: impl Into<String>) -> Self {
        self.inputs.push(path.into());
        self
    }

    pub fn output(mut self, path: impl Into<String>) -> Self {
        self.outputs.push(path.into());
        self
    }
}

/// A result together with its manifest.
#[derive(Clone, Debug, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub manifest: &'a RunManifest,
    pub result: &'a T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

/// Renders `result` in the requested format. JSON embeds the manifest; CSV is the
/// bare table (callers write the manifest alongside).
pub fn render<T: Serialize + CsvTable>(
    result: &T,
    manifest: &RunManifest,
    format: Format,
) -> String {
    match format {
        Format::Json => to_canonical_json(&Report { manifest, result }),
        Format::Csv => result.to_csv(),
    }
}

/// Writes a report to `path`. For CSV the manifest goes to `<path>.manifest.json`.
pub fn emit_report<T: Serialize + CsvTable>(
    result: &T,
    manifest: &RunManifest,
    format: Format,
    path: &Path,
) -> Result<()> {
    write_atomic(path, render(result, manifest, format).as_bytes())?;
    if format == Format::Csv {
        let mut side = path.as_os_str().to_owned();
        side.push(".manifest.json");
        write_atomic(Path::new(&side), to_canonical_json(manifest).as_bytes())?;
    }
    Ok(())
}
