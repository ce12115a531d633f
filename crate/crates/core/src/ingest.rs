//! Resilient line-by-line ingestion of raw customs CSV exports.
//!
//! Real-world trade exports routinely defeat whole-file CSV readers: a single
//! malformed row aborts the load. This parser instead walks the file one
//! physical line at a time, normalizing every row it can and quarantining the
//! rest with a reason code. Parsing never aborts on a bad line; the only fatal
//! conditions are an unreadable stream and a header that does not carry every
//! mapped column.
//!
//! Conservation invariant: every non-empty data line becomes exactly one
//! [`TradeRecord`] or exactly one [`RejectRecord`].

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csv_util::write_csv_field;
use crate::error::{Error, Result};

/// Calendar period of a transaction. Bulk exports mix monthly (`YYYYMM`) and
/// annual (`YYYY`) rows; annual rows carry no month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Period {
    pub year: i32,
    pub month: Option<u8>,
}

impl Period {
    pub fn monthly(year: i32, month: u8) -> Self {
        Period {
            year,
            month: Some(month),
        }
    }

    pub fn annual(year: i32) -> Self {
        Period { year, month: None }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.month {
            Some(m) => write!(f, "{:04}-{:02}", self.year, m),
            None => write!(f, "{:04}", self.year),
        }
    }
}

/// Declared direction of a transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flow {
    Import,
    Export,
    Other,
}

impl Flow {
    fn parse(raw: &str) -> Flow {
        let t = raw.trim();
        if t.eq_ignore_ascii_case("import") {
            Flow::Import
        } else if t.eq_ignore_ascii_case("export") {
            Flow::Export
        } else {
            Flow::Other
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Flow::Import => "Import",
            Flow::Export => "Export",
            Flow::Other => "Other",
        }
    }
}

/// One normalized customs transaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub record_id: u64,
    pub period: Period,
    pub reporter: String,
    pub partner: String,
    pub flow: Flow,
    pub hs_code: String,
    pub description: String,
    pub primary_value_usd: f64,
    pub net_wgt_kg: f64,
}

/// Why a line was quarantined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    /// Wrong number of fields, including unbalanced quotes.
    FieldCount,
    /// Numeric cell failed to parse, was negative, or was non-finite.
    NumericParse,
    /// A required cell (reporter, value) was empty.
    MissingRequired,
    /// Commodity code was not 2-10 digits after trimming.
    BadHsCode,
    /// Invalid UTF-8 landed in a numeric cell.
    EncodingError,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::FieldCount => "FieldCount",
            RejectReason::NumericParse => "NumericParse",
            RejectReason::MissingRequired => "MissingRequired",
            RejectReason::BadHsCode => "BadHsCode",
            RejectReason::EncodingError => "EncodingError",
        }
    }
}

/// One quarantined input line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRecord {
    pub line_number: u64,
    pub reason: RejectReason,
    pub raw_excerpt: String,
}

/// Maps the eight logical fields onto source column headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub period: String,
    pub reporter: String,
    pub partner: String,
    pub flow: String,
    pub hs_code: String,
    pub description: String,
    pub value: String,
    pub weight: String,
}

impl Default for ColumnMapping {
    /// UN Comtrade bulk export headers.
    fn default() -> Self {
        ColumnMapping {
            period: "period".into(),
            reporter: "reporterDesc".into(),
            partner: "partnerDesc".into(),
            flow: "flowDesc".into(),
            hs_code: "cmdCode".into(),
            description: "cmdDesc".into(),
            value: "primaryValue".into(),
            weight: "netWgt".into(),
        }
    }
}

impl ColumnMapping {
    fn headers(&self) -> [(&'static str, &str); 8] {
        [
            ("period", &self.period),
            ("reporter", &self.reporter),
            ("partner", &self.partner),
            ("flow", &self.flow),
            ("hs_code", &self.hs_code),
            ("description", &self.description),
            ("value", &self.value),
            ("weight", &self.weight),
        ]
    }

    /// Mapped headers must be pairwise distinct.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (logical, header) in self.headers() {
            if header.trim().is_empty() {
                return Err(Error::config(format!("empty header for field '{logical}'")));
            }
            if !seen.insert(header.to_string()) {
                return Err(Error::config(format!(
                    "header '{header}' mapped to more than one logical field"
                )));
            }
        }
        Ok(())
    }
}

/// Raw cell values of one line, keyed by logical field.
#[derive(Debug, Clone)]
pub struct LogicalFields<'a> {
    pub period: &'a str,
    pub reporter: &'a str,
    pub partner: &'a str,
    pub flow: &'a str,
    pub hs_code: &'a str,
    pub description: &'a str,
    pub value: &'a str,
    pub weight: &'a str,
}

/// Everything one parse pass produces.
#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<TradeRecord>,
    pub rejects: Vec<RejectRecord>,
    /// Non-empty data lines seen (header excluded); always equals
    /// `records.len() + rejects.len()`.
    pub data_lines: u64,
}

/// Column indices for the eight logical fields, resolved from the header row.
#[derive(Debug, Clone)]
struct ResolvedColumns {
    period: usize,
    reporter: usize,
    partner: usize,
    flow: usize,
    hs_code: usize,
    description: usize,
    value: usize,
    weight: usize,
    header_width: usize,
}

fn resolve_columns(header_fields: &[String], mapping: &ColumnMapping) -> Result<ResolvedColumns> {
    let find = |name: &str| -> Result<usize> {
        header_fields
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::config(format!("header is missing mapped column '{name}'")))
    };
    Ok(ResolvedColumns {
        period: find(&mapping.period)?,
        reporter: find(&mapping.reporter)?,
        partner: find(&mapping.partner)?,
        flow: find(&mapping.flow)?,
        hs_code: find(&mapping.hs_code)?,
        description: find(&mapping.description)?,
        value: find(&mapping.value)?,
        weight: find(&mapping.weight)?,
        header_width: header_fields.len(),
    })
}

/// Split one physical line into fields, comma-delimited with RFC-4180-style
/// quoting. A line whose quotes do not balance is unsplittable and is
/// rejected wholesale rather than repaired.
fn split_line(line: &str) -> std::result::Result<Vec<String>, ()> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        if in_quotes {
            if c == '"' {
                if chars.peek() == Some(&'"') {
                    cur.push('"');
                    chars.next();
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push(c);
            }
        } else {
            match c {
                '"' if cur.is_empty() => in_quotes = true,
                ',' => fields.push(std::mem::take(&mut cur)),
                _ => cur.push(c),
            }
        }
    }
    if in_quotes {
        return Err(());
    }
    fields.push(cur);
    Ok(fields)
}

fn excerpt(line: &str) -> String {
    line.chars().take(200).collect()
}

/// Strip ASCII commas used as thousands separators, then parse as f64.
fn parse_numeric(raw: &str) -> std::result::Result<f64, ()> {
    let cleaned: String = raw.trim().chars().filter(|c| *c != ',').collect();
    match cleaned.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(()),
    }
}

fn parse_period(raw: &str) -> std::result::Result<Period, ()> {
    let t = raw.trim();
    if !t.chars().all(|c| c.is_ascii_digit()) {
        return Err(());
    }
    match t.len() {
        6 => {
            let year: i32 = t[..4].parse().map_err(|_| ())?;
            let month: u8 = t[4..].parse().map_err(|_| ())?;
            if (1..=12).contains(&month) {
                Ok(Period::monthly(year, month))
            } else {
                Err(())
            }
        }
        4 => Ok(Period::annual(t.parse().map_err(|_| ())?)),
        _ => Err(()),
    }
}

/// Normalize one line's raw cells into a [`TradeRecord`], or say why not.
///
/// Check order is fixed so each defect maps to exactly one reason:
/// encoding damage in a numeric cell, then missing required cells, then
/// numeric and period parses, then the commodity code.
pub fn normalize_record(
    record_id: u64,
    fields: &LogicalFields<'_>,
) -> std::result::Result<TradeRecord, RejectReason> {
    // Lossy UTF-8 decoding marks damage with U+FFFD; tolerable in free text,
    // disqualifying in a numeric cell.
    for numeric in [fields.value, fields.weight, fields.period] {
        if numeric.contains('\u{FFFD}') {
            return Err(RejectReason::EncodingError);
        }
    }

    let reporter = fields.reporter.trim();
    if reporter.is_empty() {
        return Err(RejectReason::MissingRequired);
    }
    if fields.value.trim().is_empty() {
        return Err(RejectReason::MissingRequired);
    }

    let period = parse_period(fields.period).map_err(|_| RejectReason::NumericParse)?;

    let primary_value_usd = parse_numeric(fields.value).map_err(|_| RejectReason::NumericParse)?;
    if primary_value_usd < 0.0 {
        return Err(RejectReason::NumericParse);
    }

    // Missing weight is an explicit data-quality pathway, not a defect:
    // it parses as 0.0 kg and is routed by triage downstream.
    let weight_raw = fields.weight.trim();
    let net_wgt_kg = if weight_raw.is_empty() {
        0.0
    } else {
        let w = parse_numeric(weight_raw).map_err(|_| RejectReason::NumericParse)?;
        if w < 0.0 {
            return Err(RejectReason::NumericParse);
        }
        w
    };

    let hs_code = fields.hs_code.trim();
    if hs_code.len() < 2 || hs_code.len() > 10 || !hs_code.chars().all(|c| c.is_ascii_digit()) {
        return Err(RejectReason::BadHsCode);
    }

    Ok(TradeRecord {
        record_id,
        period,
        reporter: reporter.to_string(),
        partner: fields.partner.trim().to_string(),
        flow: Flow::parse(fields.flow),
        hs_code: hs_code.to_string(),
        description: fields.description.trim().to_string(),
        primary_value_usd,
        net_wgt_kg,
    })
}

/// Parse a whole stream. The first non-empty line is the header; every later
/// non-empty line yields exactly one record or one reject.
pub fn parse_stream<R: BufRead>(mut reader: R, mapping: &ColumnMapping) -> Result<ParseOutcome> {
    mapping.validate()?;

    let mut outcome = ParseOutcome::default();
    let mut columns: Option<ResolvedColumns> = None;
    let mut line_number: u64 = 0;
    let mut buf: Vec<u8> = Vec::new();
    let mut first_line = true;

    loop {
        buf.clear();
        let n = reader.read_line_bytes(&mut buf)?;
        if n == 0 {
            break;
        }
        line_number += 1;

        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        if buf.last() == Some(&b'\r') {
            buf.pop();
        }
        if first_line && buf.starts_with(&[0xEF, 0xBB, 0xBF]) {
            buf.drain(..3);
        }
        first_line = false;

        let line = String::from_utf8_lossy(&buf);
        if line.is_empty() {
            continue;
        }

        if columns.is_none() {
            let header_fields = split_line(&line)
                .map_err(|_| Error::config("header line has unbalanced quotes"))?;
            columns = Some(resolve_columns(&header_fields, mapping)?);
            continue;
        }
        let cols = columns.as_ref().unwrap();
        outcome.data_lines += 1;

        let fields = match split_line(&line) {
            Ok(f) if f.len() == cols.header_width => f,
            _ => {
                outcome.rejects.push(RejectRecord {
                    line_number,
                    reason: RejectReason::FieldCount,
                    raw_excerpt: excerpt(&line),
                });
                continue;
            }
        };

        let logical = LogicalFields {
            period: &fields[cols.period],
            reporter: &fields[cols.reporter],
            partner: &fields[cols.partner],
            flow: &fields[cols.flow],
            hs_code: &fields[cols.hs_code],
            description: &fields[cols.description],
            value: &fields[cols.value],
            weight: &fields[cols.weight],
        };
        let record_id = outcome.records.len() as u64;
        match normalize_record(record_id, &logical) {
            Ok(rec) => outcome.records.push(rec),
            Err(reason) => outcome.rejects.push(RejectRecord {
                line_number,
                reason,
                raw_excerpt: excerpt(&line),
            }),
        }
    }

    if columns.is_none() {
        return Err(Error::config("input has no header line"));
    }
    Ok(outcome)
}

/// `read_line` without UTF-8 validation; raw bytes are decoded lossily later.
trait ReadLineBytes {
    fn read_line_bytes(&mut self, buf: &mut Vec<u8>) -> std::io::Result<usize>;
}

impl<R: BufRead> ReadLineBytes for R {
    fn read_line_bytes(&mut self, buf: &mut Vec<u8>) -> std::io::Result<usize> {
        self.read_until(b'\n', buf)
    }
}

/// Write the quarantine file: line_number, reason, raw_excerpt.
pub fn write_rejects_csv(path: &Path, rejects: &[RejectRecord]) -> Result<()> {
    let mut out = String::from("line_number,reason,raw_excerpt\n");
    for r in rejects {
        out.push_str(&r.line_number.to_string());
        out.push(',');
        out.push_str(r.reason.as_str());
        out.push(',');
        write_csv_field(&mut out, &r.raw_excerpt);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
