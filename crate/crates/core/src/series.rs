//! Fixed-step 15-minute time series and their CSV form.
//!
//! The CSV layout is a `timestamp,value` header followed by one row per
//! slot with ISO-8601 timestamps (`2020-11-01T00:00:00`).

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STEP_MINUTES: u32 = 15;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFrame {
    pub start: NaiveDateTime,
    pub step_minutes: u32,
    pub values: Vec<f64>,
}

impl SeriesFrame {
    pub fn new(start: NaiveDateTime, values: Vec<f64>) -> Result<Self> {
        let frame = SeriesFrame {
            start,
            step_minutes: STEP_MINUTES,
            values,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_minutes != STEP_MINUTES {
            return Err(Error::Validation(format!(
                "series step is {} minutes, expected {STEP_MINUTES}",
                self.step_minutes
            )));
        }
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "series value at slot {k} is not finite"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, slot: usize) -> NaiveDateTime {
        self.start + Duration::minutes(i64::from(self.step_minutes) * slot as i64)
    }

    /// Same start and step, different values.
    pub fn with_values(&self, values: Vec<f64>) -> SeriesFrame {
        SeriesFrame {
            start: self.start,
            step_minutes: self.step_minutes,
            values,
        }
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file).map_err(|e| match e {
            Error::Csv { message, .. } => Error::Csv {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let csv_err = |message: String| Error::Csv {
            path: "<reader>".into(),
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_err(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "value" {
            return Err(csv_err(format!(
                "expected header `timestamp,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }

        let step = Duration::minutes(i64::from(STEP_MINUTES));
        let mut start = None;
        let mut previous: Option<NaiveDateTime> = None;
        let mut values = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| csv_err(e.to_string()))?;
            let ts = parse_timestamp(&record[0])
                .ok_or_else(|| csv_err(format!("row {}: bad timestamp `{}`", row + 1, &record[0])))?;
            let value: f64 = record[1]
                .parse()
                .map_err(|_| csv_err(format!("row {}: bad value `{}`", row + 1, &record[1])))?;
            if let Some(prev) = previous {
                if ts - prev != step {
                    return Err(Error::Validation(format!(
                        "series row {} is not {STEP_MINUTES} minutes after the previous row",
                        row + 1
                    )));
                }
            } else {
                start = Some(ts);
            }
            previous = Some(ts);
            values.push(value);
        }
        let start = start.ok_or_else(|| csv_err("series has no rows".into()))?;
        SeriesFrame::new(start, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(32 * (self.values.len() + 1));
        out.push_str("timestamp,value\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&self.timestamp(k).format(TIMESTAMP_FORMAT).to_string());
            out.push(',');
            // `{}` on f64 prints the shortest representation that parses back exactly.
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .ok()
}
