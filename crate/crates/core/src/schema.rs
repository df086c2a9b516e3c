//! Parsing and validation of the five MIMIC-III-shaped CSV tables.
//!
//! Headers are matched case-insensitively against the canonical column
//! names. Dates use `YYYY-MM-DD HH:MM:SS` with the time part optional.
//! Event rows whose VALUENUM is absent or non-numeric are dropped at
//! ingestion (the tables mix numeric and text results; only numeric
//! indicators are used downstream).

use std::collections::HashSet;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Key,
    Date,
    Number,
    Token,
    Flag,
}

/// Required columns of one table; the file header may contain more.
#[derive(Debug, Clone, Copy)]
pub struct TableSchema {
    pub name: &'static str,
    pub columns: &'static [(&'static str, ColumnKind)],
}

pub const PATIENTS: TableSchema = TableSchema {
    name: "PATIENTS",
    columns: &[
        ("SUBJECT_ID", ColumnKind::Key),
        ("GENDER", ColumnKind::Token),
        ("DOB", ColumnKind::Date),
        ("DOD", ColumnKind::Date),
    ],
};

pub const ADMISSIONS: TableSchema = TableSchema {
    name: "ADMISSIONS",
    columns: &[
        ("SUBJECT_ID", ColumnKind::Key),
        ("HADM_ID", ColumnKind::Key),
        ("ADMITTIME", ColumnKind::Date),
        ("ETHNICITY", ColumnKind::Token),
        ("HOSPITAL_EXPIRE_FLAG", ColumnKind::Flag),
    ],
};

pub const DIAGNOSES_ICD: TableSchema = TableSchema {
    name: "DIAGNOSES_ICD",
    columns: &[
        ("SUBJECT_ID", ColumnKind::Key),
        ("HADM_ID", ColumnKind::Key),
        ("ICD9_CODE", ColumnKind::Token),
    ],
};

pub const CHARTEVENTS: TableSchema = TableSchema {
    name: "CHARTEVENTS",
    columns: &[
        ("SUBJECT_ID", ColumnKind::Key),
        ("HADM_ID", ColumnKind::Key),
        ("ITEMID", ColumnKind::Key),
        ("CHARTTIME", ColumnKind::Date),
        ("VALUENUM", ColumnKind::Number),
    ],
};

pub const LABEVENTS: TableSchema = TableSchema {
    name: "LABEVENTS",
    columns: CHARTEVENTS.columns,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRow {
    pub subject_id: i64,
    pub gender: String,
    pub dob: NaiveDateTime,
    pub dod: Option<NaiveDateTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRow {
    pub subject_id: i64,
    pub hadm_id: i64,
    pub admittime: NaiveDateTime,
    pub ethnicity: String,
    pub hospital_expire_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisRow {
    pub subject_id: i64,
    pub hadm_id: i64,
    pub icd9_code: String,
}

/// One charted or lab measurement. Rows without a numeric value never
/// make it past ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub subject_id: i64,
    pub hadm_id: i64,
    pub itemid: i64,
    pub charttime: NaiveDateTime,
    pub valuenum: f64,
}

/// Maps required column names to their position in the file header.
pub struct HeaderIndex {
    positions: Vec<usize>,
}

impl HeaderIndex {
    pub fn new(schema: &TableSchema, headers: &csv::StringRecord) -> Result<HeaderIndex> {
        let lowered: Vec<String> = headers.iter().map(|h| h.trim().to_lowercase()).collect();
        let mut positions = Vec::with_capacity(schema.columns.len());
        for (name, _) in schema.columns {
            let want = name.to_lowercase();
            match lowered.iter().position(|h| *h == want) {
                Some(p) => positions.push(p),
                None => {
                    return Err(Error::MissingColumn {
                        table: schema.name.to_string(),
                        column: (*name).to_string(),
                    })
                }
            }
        }
        Ok(HeaderIndex { positions })
    }

    fn field<'a>(&self, rec: &'a csv::StringRecord, slot: usize) -> &'a str {
        rec.get(self.positions[slot]).unwrap_or("").trim()
    }
}

/// Parses `YYYY-MM-DD HH:MM:SS`, time part optional.
pub fn parse_datetime(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
        return Some(dt);
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

fn row_err(table: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Row {
        table: table.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_key(table: &str, line: u64, name: &str, raw: &str) -> Result<i64> {
    raw.parse::<i64>()
        .map_err(|_| row_err(table, line, format!("invalid {name}: {raw:?}")))
}

fn parse_required_date(table: &str, line: u64, name: &str, raw: &str) -> Result<NaiveDateTime> {
    if raw.is_empty() {
        return Err(row_err(table, line, format!("missing {name}")));
    }
    parse_datetime(raw).ok_or_else(|| row_err(table, line, format!("malformed {name}: {raw:?}")))
}

fn parse_optional_date(table: &str, line: u64, name: &str, raw: &str) -> Result<Option<NaiveDateTime>> {
    if raw.is_empty() {
        return Ok(None);
    }
    parse_datetime(raw)
        .map(Some)
        .ok_or_else(|| row_err(table, line, format!("malformed {name}: {raw:?}")))
}

/// Typed rows that know how to parse themselves out of a CSV record.
/// Returning `Ok(None)` drops the row (used for events without a value).
pub trait TableRow: Sized {
    fn schema() -> &'static TableSchema;
    fn from_record(idx: &HeaderIndex, rec: &csv::StringRecord, line: u64) -> Result<Option<Self>>;
}

impl TableRow for PatientRow {
    fn schema() -> &'static TableSchema {
        &PATIENTS
    }

    fn from_record(idx: &HeaderIndex, rec: &csv::StringRecord, line: u64) -> Result<Option<Self>> {
        let t = PATIENTS.name;
        Ok(Some(PatientRow {
            subject_id: parse_key(t, line, "SUBJECT_ID", idx.field(rec, 0))?,
            gender: idx.field(rec, 1).to_string(),
            dob: parse_required_date(t, line, "DOB", idx.field(rec, 2))?,
            dod: parse_optional_date(t, line, "DOD", idx.field(rec, 3))?,
        }))
    }
}

impl TableRow for AdmissionRow {
    fn schema() -> &'static TableSchema {
        &ADMISSIONS
    }

    fn from_record(idx: &HeaderIndex, rec: &csv::StringRecord, line: u64) -> Result<Option<Self>> {
        let t = ADMISSIONS.name;
        let flag_raw = idx.field(rec, 4);
        let flag = match flag_raw {
            "0" => false,
            "1" => true,
            other => {
                return Err(row_err(
                    t,
                    line,
                    format!("invalid HOSPITAL_EXPIRE_FLAG: {other:?}"),
                ))
            }
        };
        Ok(Some(AdmissionRow {
            subject_id: parse_key(t, line, "SUBJECT_ID", idx.field(rec, 0))?,
            hadm_id: parse_key(t, line, "HADM_ID", idx.field(rec, 1))?,
            admittime: parse_required_date(t, line, "ADMITTIME", idx.field(rec, 2))?,
            ethnicity: idx.field(rec, 3).to_string(),
            hospital_expire_flag: flag,
        }))
    }
}

impl TableRow for DiagnosisRow {
    fn schema() -> &'static TableSchema {
        &DIAGNOSES_ICD
    }

    fn from_record(idx: &HeaderIndex, rec: &csv::StringRecord, line: u64) -> Result<Option<Self>> {
        let t = DIAGNOSES_ICD.name;
        let code = idx.field(rec, 2);
        if code.is_empty() {
            return Err(row_err(t, line, "empty ICD9_CODE"));
        }
        Ok(Some(DiagnosisRow {
            subject_id: parse_key(t, line, "SUBJECT_ID", idx.field(rec, 0))?,
            hadm_id: parse_key(t, line, "HADM_ID", idx.field(rec, 1))?,
            icd9_code: code.to_string(),
        }))
    }
}

fn event_from_record(
    table: &'static str,
    idx: &HeaderIndex,
    rec: &csv::StringRecord,
    line: u64,
) -> Result<Option<EventRow>> {
    // Non-numeric VALUENUM cells are missing values, not errors.
    let value = match idx.field(rec, 4).parse::<f64>() {
        Ok(v) if v.is_finite() => v,
        _ => return Ok(None),
    };
    Ok(Some(EventRow {
        subject_id: parse_key(table, line, "SUBJECT_ID", idx.field(rec, 0))?,
        hadm_id: parse_key(table, line, "HADM_ID", idx.field(rec, 1))?,
        itemid: parse_key(table, line, "ITEMID", idx.field(rec, 2))?,
        charttime: parse_required_date(table, line, "CHARTTIME", idx.field(rec, 3))?,
        valuenum: value,
    }))
}

impl TableRow for EventRow {
    fn schema() -> &'static TableSchema {
        &CHARTEVENTS
    }

    fn from_record(idx: &HeaderIndex, rec: &csv::StringRecord, line: u64) -> Result<Option<Self>> {
        event_from_record(CHARTEVENTS.name, idx, rec, line)
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Reads a whole table into typed rows, preserving row order.
pub fn read_table<T: TableRow>(path: &Path) -> Result<Vec<T>> {
    let schema = T::schema();
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?
        .clone();
    let idx = HeaderIndex::new(schema, &headers)?;

    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec
            .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
        let line = record_line(&rec);
        if let Some(row) = T::from_record(&idx, &rec, line)? {
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Reads PATIENTS and enforces SUBJECT_ID uniqueness.
pub fn read_patients(path: &Path) -> Result<Vec<PatientRow>> {
    let rows: Vec<PatientRow> = read_table(path)?;
    let mut seen = HashSet::with_capacity(rows.len());
    for r in &rows {
        if !seen.insert(r.subject_id) {
            return Err(Error::Integrity(format!(
                "PATIENTS: duplicate SUBJECT_ID {}",
                r.subject_id
            )));
        }
    }
    Ok(rows)
}

/// Reads ADMISSIONS and enforces HADM_ID uniqueness.
pub fn read_admissions(path: &Path) -> Result<Vec<AdmissionRow>> {
    let rows: Vec<AdmissionRow> = read_table(path)?;
    let mut seen = HashSet::with_capacity(rows.len());
    for r in &rows {
        if !seen.insert(r.hadm_id) {
            return Err(Error::Integrity(format!(
                "ADMISSIONS: duplicate HADM_ID {}",
                r.hadm_id
            )));
        }
    }
    Ok(rows)
}

pub fn read_diagnoses(path: &Path) -> Result<Vec<DiagnosisRow>> {
    read_table(path)
}

/// Stream-filters a large event table down to the target subjects.
///
/// Rows are decoded one at a time; memory use is bounded by the output,
/// not the file. Rows without a numeric VALUENUM are dropped.
pub fn stream_events(path: &Path, keep_subjects: &HashSet<i64>) -> Result<Vec<EventRow>> {
    if keep_subjects.is_empty() {
        return Err(Error::Param("stream_events: empty subject set".into()));
    }
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?
        .clone();
    let idx = HeaderIndex::new(&CHARTEVENTS, &headers)?;

    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        let more = reader
            .read_record(&mut rec)
            .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
        if !more {
            break;
        }
        let line = record_line(&rec);
        // cheap subject check before full decode
        let subject = match idx.field(&rec, 0).parse::<i64>() {
            Ok(s) => s,
            Err(_) => {
                return Err(row_err(
                    CHARTEVENTS.name,
                    line,
                    format!("invalid SUBJECT_ID: {:?}", idx.field(&rec, 0)),
                ))
            }
        };
        if !keep_subjects.contains(&subject) {
            continue;
        }
        if let Some(row) = event_from_record(CHARTEVENTS.name, &idx, &rec, line)? {
            out.push(row);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn header_only_file_gives_empty_list() {
        let f = write_tmp("SUBJECT_ID,GENDER,DOB,DOD\n");
        let rows = read_patients(f.path()).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn patients_fixture_with_blank_dod() {
        let f = write_tmp(
            "SUBJECT_ID,GENDER,DOB,DOD\n\
             1,M,2050-03-04 00:00:00,\n\
             2,F,2061-07-01,2140-01-02 10:30:00\n\
             3,F,2049-12-31 08:00:00,\n",
        );
        let rows = read_patients(f.path()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].dod.is_none());
        assert!(rows[1].dod.is_some());
        assert!(rows[2].dod.is_none());
        // time part optional
        assert_eq!(
            rows[1].dob,
            NaiveDate::from_ymd_opt(2061, 7, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
        );
    }

    #[test]
    fn missing_required_column_is_a_schema_error_naming_it() {
        let f = write_tmp("PATIENT,GENDER,DOB,DOD\n1,M,2050-01-01,\n");
        let err = read_patients(f.path()).unwrap_err();
        match err {
            Error::MissingColumn { column, .. } => assert_eq!(column, "SUBJECT_ID"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn header_match_is_case_insensitive_and_order_free() {
        let f = write_tmp("dob,gender,subject_id,dod\n2050-01-01,M,7,\n");
        let rows = read_patients(f.path()).unwrap();
        assert_eq!(rows[0].subject_id, 7);
    }

    #[test]
    fn malformed_date_reports_line_number() {
        let f = write_tmp("SUBJECT_ID,GENDER,DOB,DOD\n1,M,2050-01-01,\n2,F,not-a-date,\n");
        let err = read_patients(f.path()).unwrap_err();
        match err {
            Error::Row { line, .. } => assert_eq!(line, 3),
            other => panic!("expected Row error, got {other:?}"),
        }
    }

    const EVENTS: &str = "SUBJECT_ID,HADM_ID,ITEMID,CHARTTIME,VALUENUM\n\
        1,10,50,2130-01-01 12:00:00,1.5\n\
        2,20,50,2130-01-02 12:00:00,2.5\n\
        2,20,51,2130-01-02 13:00:00,\n\
        3,30,50,2130-01-03 12:00:00,abnormal\n\
        2,21,50,2130-01-04 12:00:00,4.0\n";

    #[test]
    fn stream_keeps_only_requested_subjects_with_values() {
        let f = write_tmp(EVENTS);
        let keep: HashSet<i64> = [2].into_iter().collect();
        let rows = stream_events(f.path(), &keep).unwrap();
        // blank VALUENUM row excluded; two numeric subject-2 rows remain
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.subject_id == 2));
        assert_eq!(rows[0].valuenum, 2.5);
        assert_eq!(rows[1].valuenum, 4.0);
    }

    #[test]
    fn stream_disjoint_keep_set_is_empty() {
        let f = write_tmp(EVENTS);
        let keep: HashSet<i64> = [99].into_iter().collect();
        assert!(stream_events(f.path(), &keep).unwrap().is_empty());
    }

    #[test]
    fn stream_empty_keep_set_is_a_parameter_error() {
        let f = write_tmp(EVENTS);
        let keep = HashSet::new();
        assert!(matches!(
            stream_events(f.path(), &keep),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn non_numeric_valuenum_is_dropped_not_fatal() {
        let f = write_tmp(EVENTS);
        let rows: Vec<EventRow> = read_table(f.path()).unwrap();
        assert_eq!(rows.len(), 3); // two dropped: blank + "abnormal"
    }

    #[test]
    fn stream_equals_read_then_filter() {
        let f = write_tmp(EVENTS);
        let keep: HashSet<i64> = [1, 2].into_iter().collect();
        let streamed = stream_events(f.path(), &keep).unwrap();
        let loaded: Vec<EventRow> = read_table(f.path()).unwrap();
        let filtered: Vec<EventRow> = loaded
            .into_iter()
            .filter(|r| keep.contains(&r.subject_id))
            .collect();
        assert_eq!(streamed, filtered);
    }

    #[test]
    fn stream_is_additive_over_disjoint_subject_sets() {
        let f = write_tmp(EVENTS);
        let s1: HashSet<i64> = [1].into_iter().collect();
        let s2: HashSet<i64> = [2, 3].into_iter().collect();
        let both: HashSet<i64> = s1.union(&s2).copied().collect();
        let mut split: Vec<EventRow> = stream_events(f.path(), &s1).unwrap();
        split.extend(stream_events(f.path(), &s2).unwrap());
        let mut joint = stream_events(f.path(), &both).unwrap();
        let key = |r: &EventRow| (r.subject_id, r.hadm_id, r.itemid, r.charttime);
        split.sort_by_key(key);
        joint.sort_by_key(key);
        assert_eq!(split, joint);
    }

    #[test]
    fn duplicate_subject_id_rejected() {
        let f = write_tmp("SUBJECT_ID,GENDER,DOB,DOD\n1,M,2050-01-01,\n1,F,2051-01-01,\n");
        assert!(matches!(
            read_patients(f.path()),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn unreadable_file_is_io_error() {
        let err = read_patients(Path::new("/nonexistent/p.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
