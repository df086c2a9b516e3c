//! Cohort selection: adults whose qualifying admission carries one of the
//! three sepsis ICD-9 codes, labeled with that admission's expire flag.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{AdmissionRow, DiagnosisRow, PatientRow};

/// Sepsis, severe sepsis, septic shock (dotless ICD-9 form).
pub const SEPSIS_ICD9: [&str; 3] = ["99591", "99592", "78552"];

/// Raw ages above this are treated as date-shifted de-identification
/// artifacts and mapped to [`SHIFTED_AGE_REPLACEMENT`].
pub const SHIFTED_AGE_CUTOFF: f64 = 120.0;
pub const SHIFTED_AGE_REPLACEMENT: f64 = 90.0;

const DAYS_PER_YEAR: f64 = 365.25;

/// Whether sepsis codes must appear in the latest admission or in any
/// admission. The source methodology states both readings; `Latest` is
/// the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InclusionScope {
    #[default]
    Latest,
    Any,
}

impl std::str::FromStr for InclusionScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "latest" => Ok(InclusionScope::Latest),
            "any" => Ok(InclusionScope::Any),
            other => Err(Error::Config(format!(
                "inclusion_scope must be latest|any, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub subject_id: i64,
    pub age_years: f64,
    pub gender: String,
    pub ethnicity: String,
    pub latest_hadm_id: i64,
    /// true = in-hospital death on the latest admission
    pub label: bool,
}

/// Strips the decimal point so `995.91` and `99591` compare equal.
pub fn normalize_icd9(code: &str) -> String {
    code.trim().replace('.', "").to_uppercase()
}

/// Age in years at `admittime`, falling back to `dod` when the admission
/// date is absent. Raw ages above 120 map to 90.0 (date-shifted records).
pub fn compute_age(
    dob: NaiveDateTime,
    admittime: Option<NaiveDateTime>,
    dod: Option<NaiveDateTime>,
) -> Result<f64> {
    let reference = admittime
        .or(dod)
        .ok_or_else(|| Error::Input("compute_age: neither admittime nor dod present".into()))?;
    if reference < dob {
        return Err(Error::Input(format!(
            "compute_age: reference {reference} earlier than dob {dob}"
        )));
    }
    let days = (reference - dob).num_seconds() as f64 / 86_400.0;
    let age = days / DAYS_PER_YEAR;
    if age > SHIFTED_AGE_CUTOFF {
        Ok(SHIFTED_AGE_REPLACEMENT)
    } else {
        Ok(age)
    }
}

/// Latest admission per subject: max admittime, ties broken by larger
/// hadm_id.
fn latest_admissions(admissions: &[AdmissionRow]) -> HashMap<i64, &AdmissionRow> {
    let mut latest: HashMap<i64, &AdmissionRow> = HashMap::new();
    for adm in admissions {
        latest
            .entry(adm.subject_id)
            .and_modify(|cur| {
                if (adm.admittime, adm.hadm_id) > (cur.admittime, cur.hadm_id) {
                    *cur = adm;
                }
            })
            .or_insert(adm);
    }
    latest
}

/// Applies the inclusion criteria and produces one labeled record per
/// selected patient, ordered by subject id.
pub fn select_cohort(
    patients: &[PatientRow],
    admissions: &[AdmissionRow],
    diagnoses: &[DiagnosisRow],
    scope: InclusionScope,
) -> Result<Vec<CohortRecord>> {
    let latest = latest_admissions(admissions);

    // normalized sepsis codes per admission / per subject
    let mut sepsis_by_hadm: HashSet<i64> = HashSet::new();
    let mut sepsis_by_subject: HashSet<i64> = HashSet::new();
    for d in diagnoses {
        let code = normalize_icd9(&d.icd9_code);
        if SEPSIS_ICD9.contains(&code.as_str()) {
            sepsis_by_hadm.insert(d.hadm_id);
            sepsis_by_subject.insert(d.subject_id);
        }
    }

    let mut by_subject: BTreeMap<i64, &PatientRow> = BTreeMap::new();
    for p in patients {
        by_subject.insert(p.subject_id, p);
    }

    let mut cohort = Vec::new();
    for (&subject_id, patient) in &by_subject {
        let Some(adm) = latest.get(&subject_id) else {
            continue; // no admissions, cannot qualify
        };
        let qualifies = match scope {
            InclusionScope::Latest => sepsis_by_hadm.contains(&adm.hadm_id),
            InclusionScope::Any => sepsis_by_subject.contains(&subject_id),
        };
        if !qualifies {
            continue;
        }
        let age = compute_age(patient.dob, Some(adm.admittime), patient.dod)?;
        if age < 18.0 {
            continue;
        }
        cohort.push(CohortRecord {
            subject_id,
            age_years: age,
            gender: patient.gender.clone(),
            ethnicity: adm.ethnicity.clone(),
            latest_hadm_id: adm.hadm_id,
            label: adm.hospital_expire_flag,
        });
    }
    Ok(cohort)
}

/// Expire flag of the record's latest admission.
pub fn label_mortality(record: &CohortRecord, admissions: &[AdmissionRow]) -> Result<bool> {
    admissions
        .iter()
        .find(|a| a.hadm_id == record.latest_hadm_id)
        .map(|a| a.hospital_expire_flag)
        .ok_or_else(|| {
            Error::Integrity(format!(
                "label_mortality: hadm_id {} not found in admissions",
                record.latest_hadm_id
            ))
        })
}

/// (cohort patients, admissions covered by those patients, deaths).
pub fn cohort_counts(cohort: &[CohortRecord], admissions: &[AdmissionRow]) -> (usize, usize, usize) {
    let subjects: HashSet<i64> = cohort.iter().map(|c| c.subject_id).collect();
    let covered = admissions
        .iter()
        .filter(|a| subjects.contains(&a.subject_id))
        .count();
    let deaths = cohort.iter().filter(|c| c.label).count();
    (cohort.len(), covered, deaths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn dt(y: i32, m: u32, d: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn patient(id: i64, dob: NaiveDateTime) -> PatientRow {
        PatientRow {
            subject_id: id,
            gender: "M".into(),
            dob,
            dod: None,
        }
    }

    fn admission(subject: i64, hadm: i64, time: NaiveDateTime, expired: bool) -> AdmissionRow {
        AdmissionRow {
            subject_id: subject,
            hadm_id: hadm,
            admittime: time,
            ethnicity: "WHITE".into(),
            hospital_expire_flag: expired,
        }
    }

    fn dx(subject: i64, hadm: i64, code: &str) -> DiagnosisRow {
        DiagnosisRow {
            subject_id: subject,
            hadm_id: hadm,
            icd9_code: code.into(),
        }
    }

    #[test]
    fn age_spans_eighteen_years() {
        let age = compute_age(dt(2000, 1, 1), Some(dt(2018, 1, 1)), None).unwrap();
        assert!((age - 18.0).abs() < 0.01, "age = {age}");
    }

    #[test]
    fn age_falls_back_to_dod() {
        let age = compute_age(dt(1950, 6, 1), None, Some(dt(2020, 6, 1))).unwrap();
        assert!((age - 70.0).abs() < 0.01, "age = {age}");
    }

    #[test]
    fn shifted_dob_maps_to_ninety() {
        // raw age ~300 years
        let age = compute_age(dt(1800, 1, 1), Some(dt(2100, 1, 1)), None).unwrap();
        assert_eq!(age, 90.0);
    }

    #[test]
    fn age_needs_some_reference() {
        assert!(compute_age(dt(2000, 1, 1), None, None).is_err());
    }

    #[test]
    fn reference_before_dob_is_an_input_error() {
        assert!(compute_age(dt(2000, 1, 1), Some(dt(1999, 1, 1)), None).is_err());
    }

    #[test]
    fn sepsis_code_in_latest_admission_includes_patient() {
        let patients = vec![patient(1, dt(2050, 1, 1))];
        let admissions = vec![admission(1, 100, dt(2100, 1, 1), false)];
        let diagnoses = vec![dx(1, 100, "99591")];
        let cohort =
            select_cohort(&patients, &admissions, &diagnoses, InclusionScope::Latest).unwrap();
        assert_eq!(cohort.len(), 1);
        assert_eq!(cohort[0].latest_hadm_id, 100);
    }

    #[test]
    fn under_eighteen_excluded_despite_code() {
        // 17.9 years old at admission
        let dob = dt(2082, 2, 1);
        let admit = dt(2100, 1, 1);
        let age = compute_age(dob, Some(admit), None).unwrap();
        assert!(age < 18.0 && age > 17.8, "age = {age}");
        let cohort = select_cohort(
            &[patient(1, dob)],
            &[admission(1, 100, admit, false)],
            &[dx(1, 100, "99592")],
            InclusionScope::Latest,
        )
        .unwrap();
        assert!(cohort.is_empty());
    }

    #[test]
    fn earlier_admission_code_only_counts_under_any_scope() {
        let patients = vec![patient(1, dt(2050, 1, 1))];
        let admissions = vec![
            admission(1, 100, dt(2100, 1, 1), false),
            admission(1, 101, dt(2101, 1, 1), false), // latest, no sepsis code
        ];
        let diagnoses = vec![dx(1, 100, "78552"), dx(1, 101, "4019")];
        let latest =
            select_cohort(&patients, &admissions, &diagnoses, InclusionScope::Latest).unwrap();
        assert!(latest.is_empty());
        let any = select_cohort(&patients, &admissions, &diagnoses, InclusionScope::Any).unwrap();
        assert_eq!(any.len(), 1);
        assert_eq!(any[0].latest_hadm_id, 101);
    }

    #[test]
    fn dotted_and_dotless_codes_select_identical_cohorts() {
        let patients = vec![patient(1, dt(2050, 1, 1)), patient(2, dt(2051, 1, 1))];
        let admissions = vec![
            admission(1, 100, dt(2100, 1, 1), true),
            admission(2, 200, dt(2100, 1, 1), false),
        ];
        let dotted = vec![dx(1, 100, "995.91"), dx(2, 200, "785.52")];
        let dotless = vec![dx(1, 100, "99591"), dx(2, 200, "78552")];
        let a = select_cohort(&patients, &admissions, &dotted, InclusionScope::Latest).unwrap();
        let b = select_cohort(&patients, &admissions, &dotless, InclusionScope::Latest).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn label_comes_from_latest_admission() {
        let patients = vec![patient(1, dt(2050, 1, 1))];
        let admissions = vec![
            admission(1, 100, dt(2100, 1, 1), true), // earlier, died?? (flag 1)
            admission(1, 101, dt(2101, 1, 1), false), // latest, survived
        ];
        let diagnoses = vec![dx(1, 101, "99591")];
        let cohort =
            select_cohort(&patients, &admissions, &diagnoses, InclusionScope::Latest).unwrap();
        assert_eq!(cohort.len(), 1);
        assert!(!cohort[0].label);
        assert!(!label_mortality(&cohort[0], &admissions).unwrap());
    }

    #[test]
    fn admittime_tie_broken_by_larger_hadm_id() {
        let patients = vec![patient(1, dt(2050, 1, 1))];
        let t = dt(2100, 1, 1);
        let admissions = vec![admission(1, 101, t, false), admission(1, 100, t, true)];
        let diagnoses = vec![dx(1, 101, "99591")];
        let cohort =
            select_cohort(&patients, &admissions, &diagnoses, InclusionScope::Latest).unwrap();
        assert_eq!(cohort[0].latest_hadm_id, 101);
        assert!(!cohort[0].label);
    }

    #[test]
    fn dangling_hadm_is_integrity_error() {
        let rec = CohortRecord {
            subject_id: 1,
            age_years: 50.0,
            gender: "M".into(),
            ethnicity: "WHITE".into(),
            latest_hadm_id: 999,
            label: false,
        };
        assert!(matches!(
            label_mortality(&rec, &[]),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn counts_on_empty_and_small_fixtures() {
        assert_eq!(cohort_counts(&[], &[]), (0, 0, 0));

        let patients = vec![
            patient(1, dt(2050, 1, 1)),
            patient(2, dt(2051, 1, 1)),
            patient(3, dt(2052, 1, 1)),
        ];
        let admissions = vec![
            admission(1, 100, dt(2100, 1, 1), false),
            admission(1, 101, dt(2101, 1, 1), true),
            admission(2, 200, dt(2100, 1, 1), false),
            admission(3, 300, dt(2100, 1, 1), false),
            admission(3, 301, dt(2102, 1, 1), true),
        ];
        let diagnoses = vec![dx(1, 101, "99591"), dx(2, 200, "99592"), dx(3, 301, "78552")];
        let cohort =
            select_cohort(&patients, &admissions, &diagnoses, InclusionScope::Latest).unwrap();
        let (n, covered, deaths) = cohort_counts(&cohort, &admissions);
        assert_eq!((n, covered, deaths), (3, 5, 2));
    }

    #[test]
    fn patient_without_diagnoses_is_excluded_not_an_error() {
        let cohort = select_cohort(
            &[patient(1, dt(2050, 1, 1))],
            &[admission(1, 100, dt(2100, 1, 1), false)],
            &[],
            InclusionScope::Latest,
        )
        .unwrap();
        assert!(cohort.is_empty());
    }

    #[test]
    fn adding_qualifying_code_to_latest_admission_is_monotone() {
        let patients = vec![patient(1, dt(2050, 1, 1))];
        let admissions = vec![admission(1, 100, dt(2100, 1, 1), false)];
        let mut diagnoses = vec![dx(1, 100, "4019")];
        let before =
            select_cohort(&patients, &admissions, &diagnoses, InclusionScope::Latest).unwrap();
        assert!(before.is_empty());
        diagnoses.push(dx(1, 100, "995.92"));
        let after =
            select_cohort(&patients, &admissions, &diagnoses, InclusionScope::Latest).unwrap();
        assert_eq!(after.len(), 1);
    }
}
