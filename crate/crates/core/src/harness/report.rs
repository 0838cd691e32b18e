//! CSV and JSON-lines report output.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of every report.
pub const COLUMNS: [&str; 12] = [
    "use_case", "role", "n_bits", "N", "attrs", "modexp", "modmul", "exp", "bipair", "bits_in", "bits_out", "time_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub use_case: String,
    pub role: String,
    pub n_bits: u64,
    #[serde(rename = "N")]
    pub count: u64,
    pub attrs: u64,
    pub modexp: u64,
    pub modmul: u64,
    pub exp: u64,
    pub bipair: u64,
    pub bits_in: u64,
    pub bits_out: u64,
    pub time_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::Parameter(format!("unknown report format `{other}`"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        })
    }
}

fn io_error(e: impl fmt::Display) -> Error {
    Error::Decode(e.to_string())
}

pub fn emit_report(rows: &[ReportRow], format: Format, out: &mut dyn Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            writer.write_record(COLUMNS).map_err(io_error)?;
            for row in rows {
                writer.serialize(row).map_err(io_error)?;
            }
            writer.flush().map_err(io_error)
        }
        Format::Jsonl => {
            for row in rows {
                serde_json::to_writer(&mut *out, row).map_err(io_error)?;
                out.write_all(b"\n").map_err(io_error)?;
            }
            Ok(())
        }
    }
}

pub fn report_bytes(rows: &[ReportRow], format: Format) -> Vec<u8> {
    let mut buf = Vec::new();
    emit_report(rows, format, &mut buf).expect("writing to memory cannot fail");
    buf
}

pub fn parse_report(input: &mut dyn Read, format: Format) -> Result<Vec<ReportRow>> {
    match format {
        Format::Csv => csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(io_error)).collect(),
        Format::Jsonl => {
            let mut text = String::new();
            input.read_to_string(&mut text).map_err(io_error)?;
            text.lines().filter(|l| !l.is_empty()).map(|l| serde_json::from_str(l).map_err(io_error)).collect()
        }
    }
}
