use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Observation, ObservationTable, DAY_MINUTES};

/// How the time column is coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeFormat {
    /// Minute of the day, `0 ≤ m < 1440`, possibly fractional.
    #[default]
    Minutes,
    /// Clock time as an integer `HHMM`, e.g. `1330` for 1:30 pm.
    Hhmm,
}

impl std::str::FromStr for TimeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "minutes" | "minute" => Ok(Self::Minutes),
            "hhmm" => Ok(Self::Hhmm),
            other => Err(Error::Domain(format!("unknown time format {other}"))),
        }
    }
}

/// Column-name mapping for activity CSV files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub subject: String,
    pub day: String,
    pub minute: String,
    pub vm: String,
    pub factors: Vec<String>,
    pub time_format: TimeFormat,
    /// Reject files lacking the day or a factor column. When false those
    /// columns are used only if present.
    pub require_all: bool,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            subject: "subject".into(),
            day: "day".into(),
            minute: "minute".into(),
            vm: "vm".into(),
            factors: vec!["group".into(), "falls".into(), "injury".into()],
            time_format: TimeFormat::Minutes,
            require_all: false,
        }
    }
}

/// Rows skipped during ingestion because the response was blank.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub dropped: usize,
    /// 1-based line numbers in the file (the header is line 1).
    pub lines: Vec<u64>,
}

fn parse_time(raw: &str, format: TimeFormat, line: u64, column: &str) -> Result<f64> {
    let bad = || Error::Data(format!("line {line}: cannot parse {column} value \"{raw}\""));
    let minute = match format {
        TimeFormat::Minutes => raw.parse::<f64>().map_err(|_| bad())?,
        TimeFormat::Hhmm => {
            let v: u32 = raw.parse().map_err(|_| bad())?;
            let (h, m) = (v / 100, v % 100);
            if h >= 24 || m >= 60 {
                return Err(Error::Data(format!("line {line}: {v} is not a valid HHMM time")));
            }
            f64::from(h * 60 + m)
        }
    };
    if !(0.0..DAY_MINUTES).contains(&minute) {
        return Err(Error::Data(format!("line {line}: {column} {minute} outside [0, 1440)")));
    }
    Ok(minute)
}

/// Read an activity table from any reader.
pub fn read_table<R: Read>(reader: R, schema: &SchemaConfig) -> Result<(ObservationTable, DropReport)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| find(name).ok_or_else(|| Error::Schema(format!("missing column \"{name}\"")));

    let subject = require(&schema.subject)?;
    let minute = require(&schema.minute)?;
    let vm = require(&schema.vm)?;
    let day = if schema.require_all {
        Some(require(&schema.day)?)
    } else {
        find(&schema.day)
    };
    let mut factor_names = Vec::new();
    let mut factor_cols = Vec::new();
    for name in &schema.factors {
        let col = if schema.require_all {
            Some(require(name)?)
        } else {
            find(name)
        };
        if let Some(col) = col {
            factor_names.push(name.clone());
            factor_cols.push(col);
        }
    }

    let mut observations = Vec::new();
    let mut report = DropReport::default();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let raw_vm = &record[vm];
        if raw_vm.is_empty() {
            report.dropped += 1;
            report.lines.push(line);
            continue;
        }
        let response: f64 = raw_vm
            .parse()
            .map_err(|_| Error::Data(format!("line {line}: cannot parse {} value \"{raw_vm}\"", schema.vm)))?;
        if !response.is_finite() {
            return Err(Error::Data(format!("line {line}: non-finite {} value", schema.vm)));
        }
        let time = parse_time(&record[minute], schema.time_format, line, &schema.minute)?;
        let day = match day {
            Some(col) => Some(record[col].parse::<u32>().map_err(|_| {
                Error::Data(format!(
                    "line {line}: cannot parse {} value \"{}\"",
                    schema.day, &record[col]
                ))
            })?),
            None => None,
        };
        let subject_id = record[subject].to_owned();
        if subject_id.is_empty() {
            return Err(Error::Data(format!("line {line}: empty {}", schema.subject)));
        }
        observations.push(Observation {
            subject_id,
            day,
            time,
            levels: factor_cols.iter().map(|&c| record[c].to_owned()).collect(),
            response,
        });
    }
    if observations.is_empty() {
        return Err(Error::Data("no usable rows".into()));
    }
    let table = ObservationTable::from_observations(observations, &factor_names)?;
    Ok((table, report))
}

pub fn read_csv(path: &Path, schema: &SchemaConfig) -> Result<(ObservationTable, DropReport)> {
    let file = std::fs::File::open(path)?;
    read_table(std::io::BufReader::new(file), schema)
}

fn format_time(minute: f64, format: TimeFormat) -> Result<String> {
    match format {
        TimeFormat::Minutes => Ok(minute.to_string()),
        TimeFormat::Hhmm if minute.fract() == 0.0 => {
            let m = minute as u32;
            Ok(format!("{}", (m / 60) * 100 + m % 60))
        }
        TimeFormat::Hhmm => Err(Error::Data(format!("minute {minute} has no HHMM form"))),
    }
}

/// Write a table using the schema's column names. Floats use shortest
/// round-trip formatting, so reading the output back gives the same table.
pub fn write_table<W: Write>(writer: W, table: &ObservationTable, schema: &SchemaConfig) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let with_day = table.observations().iter().any(|o| o.day.is_some());
    let mut header = vec![schema.subject.as_str()];
    if with_day {
        header.push(&schema.day);
    }
    header.push(&schema.minute);
    header.push(&schema.vm);
    header.extend(table.factor_defs().iter().map(|f| f.name()));
    wtr.write_record(&header)?;

    for o in table.observations() {
        let mut row = vec![o.subject_id.clone()];
        if with_day {
            row.push(o.day.map(|d| d.to_string()).unwrap_or_default());
        }
        row.push(format_time(o.time, schema.time_format)?);
        row.push(o.response.to_string());
        row.extend(o.levels.iter().cloned());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, table: &ObservationTable, schema: &SchemaConfig) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_table(std::io::BufWriter::new(file), table, schema)
}
