//! Seeded synthetic dataset generator, schema-compatible with the five
//! ingested tables. Stands in for the credential-restricted clinical
//! source so the whole pipeline is runnable and testable.
//!
//! Informative item values are class-conditional normals with unit
//! variance: deceased patients' means are shifted by `signal_strength`
//! standard deviations (per-feature AUROC is then Phi(shift/sqrt(2))).
//! The `xor` signal kind arranges informative items in pairs whose signs
//! agree only for deceased patients, leaving every marginal
//! distribution class-identical; only nonlinear models can exploit it.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::normalize_icd9;
use crate::error::{Error, Result};
use crate::rng::{self, TAG_SYNTH};
use crate::schema;

const MULTI_ADMISSION_FRACTION: f64 = 0.3;
const EARLIER_SEPSIS_FRACTION: f64 = 0.3;
const SAME_ADMITTIME_TIE_FRACTION: f64 = 0.02;
const INFORMATIVE_ITEM_BASE: i64 = 1001;
const NOISE_ITEM_BASE: i64 = 2001;

const ITEM_NAMES: [&str; 50] = [
    "Lactate",
    "Albumin",
    "pH",
    "Temperature",
    "Hematocrit",
    "Sodium",
    "Potassium",
    "Magnesium",
    "Phosphate",
    "Neutrophils",
    "Creatinine",
    "Bilirubin Total",
    "Anion Gap",
    "Glucose",
    "Chloride",
    "Hemoglobin",
    "Platelet Count",
    "White Blood Cells",
    "Urea Nitrogen",
    "Calcium",
    "Bicarbonate",
    "PT",
    "PTT",
    "INR",
    "Fibrinogen",
    "Alkaline Phosphatase",
    "ALT",
    "AST",
    "Lipase",
    "Amylase",
    "Troponin T",
    "CK-MB",
    "Creatine Kinase",
    "Lactate Dehydrogenase",
    "Ferritin",
    "Transferrin",
    "Iron",
    "TIBC",
    "Folate",
    "Vitamin B12",
    "TSH",
    "Free T4",
    "Cortisol",
    "Ammonia",
    "Osmolality",
    "Uric Acid",
    "Triglycerides",
    "HDL",
    "LDL",
    "Cholesterol Total",
];

const OTHER_ICD9: [&str; 10] = [
    "4019", "4280", "5849", "25000", "51881", "5990", "2724", "53081", "42731", "41401",
];

const ETHNICITIES: [&str; 5] = ["WHITE", "BLACK", "HISPANIC", "ASIAN", "OTHER"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    /// class-conditional mean shift on each informative item
    #[default]
    Linear,
    /// paired sign-agreement signal with class-identical marginals
    Xor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_patients: usize,
    /// fraction of patients whose latest admission carries a sepsis code
    pub sepsis_fraction: f64,
    pub mortality_rate: f64,
    /// standardized mean shift of informative items between classes
    pub signal_strength: f64,
    pub signal_kind: SignalKind,
    pub n_informative_items: usize,
    pub n_noise_items: usize,
    /// probability that a (patient, item) pair has no events at all
    pub missing_rate: f64,
    /// inclusive event-count range per (admission, item)
    pub events_per_patient_item: (u32, u32),
    /// fraction of patients with date-shifted DOBs (raw age > 120)
    pub shifted_dob_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 5000,
            sepsis_fraction: 1.0,
            mortality_rate: 0.3,
            signal_strength: 1.5,
            signal_kind: SignalKind::Linear,
            n_informative_items: 10,
            n_noise_items: 40,
            missing_rate: 0.1,
            events_per_patient_item: (1, 3),
            shifted_dob_fraction: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sepsis_fraction > 0.0 && self.sepsis_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "sepsis_fraction must be in (0,1], got {}",
                self.sepsis_fraction
            )));
        }
        if !(self.mortality_rate > 0.0 && self.mortality_rate < 1.0) {
            return Err(Error::Config(format!(
                "mortality_rate must be in (0,1), got {}",
                self.mortality_rate
            )));
        }
        if self.signal_strength < 0.0 || !self.signal_strength.is_finite() {
            return Err(Error::Config("signal_strength must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config(format!(
                "missing_rate must be in [0,1), got {}",
                self.missing_rate
            )));
        }
        let (lo, hi) = self.events_per_patient_item;
        if lo == 0 || hi < lo {
            return Err(Error::Config(format!(
                "events_per_patient_item must be a positive range, got ({lo},{hi})"
            )));
        }
        if !(0.0..1.0).contains(&self.shifted_dob_fraction) {
            return Err(Error::Config(format!(
                "shifted_dob_fraction must be in [0,1), got {}",
                self.shifted_dob_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub patients: usize,
    pub admissions: usize,
    pub sepsis_patients: usize,
    pub deaths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemTruth {
    pub itemid: i64,
    pub name: String,
    pub informative: bool,
    /// the partner item for xor-paired signal, when applicable
    pub xor_partner: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientOutcome {
    pub subject_id: i64,
    pub died: bool,
    pub sepsis_latest: bool,
}

/// Ground truth for a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dir: PathBuf,
    pub config: SynthConfig,
    pub files: Vec<String>,
    pub counts: ManifestCounts,
    pub items: Vec<ItemTruth>,
    pub outcomes: Vec<PatientOutcome>,
}

pub fn table_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.csv"))
}

struct CsvOut {
    file: std::io::BufWriter<std::fs::File>,
    path: PathBuf,
}

impl CsvOut {
    fn create(dir: &Path, name: &str, header: &str) -> Result<CsvOut> {
        let path = table_path(dir, name);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = CsvOut {
            file: std::io::BufWriter::new(file),
            path,
        };
        out.line(header)?;
        Ok(out)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.file, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn fmt_dt(dt: NaiveDateTime) -> String {
    dt.format("%Y-%m-%d %H:%M:%S").to_string()
}

fn item_name(index: usize) -> String {
    ITEM_NAMES
        .get(index)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("Assay {index}"))
}

fn normal(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + z
}

/// sign convention per (patient, informative item): +1/-1 multiplier for
/// the item's mean under the xor signal.
fn xor_means(
    rng: &mut ChaCha8Rng,
    n_informative: usize,
    died: bool,
    shift: f64,
) -> Vec<f64> {
    let mut means = vec![0.0; n_informative];
    let mut j = 0;
    while j + 1 < n_informative {
        let s: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
        means[j] = s * shift;
        // partners agree for deceased patients, disagree for survivors
        means[j + 1] = if died { s * shift } else { -s * shift };
        j += 2;
    }
    if j < n_informative {
        // odd item count: the unpaired item falls back to the linear shift
        means[j] = if died { shift } else { 0.0 };
    }
    means
}

/// Generates the five tables plus `item_names.csv` and `manifest.json`
/// into `out_dir`. Identical configs produce byte-identical files.
pub fn generate_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let n = cfg.n_patients;
    let n_sepsis = (n as f64 * cfg.sepsis_fraction).ceil() as usize;

    // which patients carry a sepsis code in their latest admission
    let mut order: Vec<usize> = (0..n).collect();
    {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng::stream(cfg.seed, TAG_SYNTH, 1));
    }
    let mut sepsis_latest = vec![false; n];
    for &i in order.iter().take(n_sepsis) {
        sepsis_latest[i] = true;
    }

    let mut patients = CsvOut::create(out_dir, "PATIENTS", "SUBJECT_ID,GENDER,DOB,DOD")?;
    let mut admissions = CsvOut::create(
        out_dir,
        "ADMISSIONS",
        "SUBJECT_ID,HADM_ID,ADMITTIME,ETHNICITY,HOSPITAL_EXPIRE_FLAG",
    )?;
    let mut diagnoses = CsvOut::create(out_dir, "DIAGNOSES_ICD", "SUBJECT_ID,HADM_ID,ICD9_CODE")?;
    let mut chartevents = CsvOut::create(
        out_dir,
        "CHARTEVENTS",
        "SUBJECT_ID,HADM_ID,ITEMID,CHARTTIME,VALUENUM",
    )?;
    let mut labevents = CsvOut::create(
        out_dir,
        "LABEVENTS",
        "SUBJECT_ID,HADM_ID,ITEMID,CHARTTIME,VALUENUM",
    )?;

    let informative_ids: Vec<i64> = (0..cfg.n_informative_items)
        .map(|k| INFORMATIVE_ITEM_BASE + k as i64)
        .collect();
    let noise_ids: Vec<i64> = (0..cfg.n_noise_items)
        .map(|k| NOISE_ITEM_BASE + k as i64)
        .collect();

    let mut items = Vec::with_capacity(informative_ids.len() + noise_ids.len());
    for (k, &id) in informative_ids.iter().enumerate() {
        let xor_partner = if cfg.signal_kind == SignalKind::Xor {
            if k % 2 == 0 && k + 1 < informative_ids.len() {
                Some(informative_ids[k + 1])
            } else if k % 2 == 1 {
                Some(informative_ids[k - 1])
            } else {
                None
            }
        } else {
            None
        };
        items.push(ItemTruth {
            itemid: id,
            name: item_name(k),
            informative: true,
            xor_partner,
        });
    }
    for (k, &id) in noise_ids.iter().enumerate() {
        items.push(ItemTruth {
            itemid: id,
            name: item_name(cfg.n_informative_items + k),
            informative: false,
            xor_partner: None,
        });
    }
    {
        let mut names = CsvOut::create(out_dir, "item_names", "ITEMID,LABEL")?;
        for item in &items {
            let label = if item.name.contains(',') {
                format!("\"{}\"", item.name)
            } else {
                item.name.clone()
            };
            names.line(&format!("{},{}", item.itemid, label))?;
        }
        names.finish()?;
    }

    let era = NaiveDate::from_ymd_opt(2130, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();

    let sepsis_codes = ["995.91", "99591", "995.92", "99592", "785.52", "78552"];

    let mut hadm_counter: i64 = 100_000;
    let mut total_admissions = 0usize;
    let mut deaths = 0usize;
    let mut outcomes = Vec::with_capacity(n);

    for i in 0..n {
        let subject_id = (i + 1) as i64;
        let mut prng = rng::stream(cfg.seed, TAG_SYNTH, 0x1_0000 + i as u64);

        let gender = if prng.random::<f64>() < 0.55 { "M" } else { "F" };
        let ethnicity = ETHNICITIES[prng.random_range(0..ETHNICITIES.len())];
        let died = prng.random::<f64>() < cfg.mortality_rate;

        // admission schedule
        let mut n_adm = 1usize;
        if prng.random::<f64>() < MULTI_ADMISSION_FRACTION {
            while prng.random::<f64>() < 0.5 && n_adm < 8 {
                n_adm += 1;
            }
            n_adm += 1;
        }
        let mut admit = era + Duration::days(prng.random_range(0..3650));
        let mut schedule: Vec<(i64, NaiveDateTime, i64)> = Vec::with_capacity(n_adm); // (hadm, admittime, los_days)
        for a in 0..n_adm {
            hadm_counter += 1;
            let los = prng.random_range(3..30);
            schedule.push((hadm_counter, admit, los));
            if a + 1 < n_adm {
                // occasionally an identical admittime to exercise tie-breaking
                if prng.random::<f64>() < SAME_ADMITTIME_TIE_FRACTION {
                    // same instant, larger hadm_id wins downstream
                } else {
                    admit += Duration::days(los + prng.random_range(30..400));
                }
            }
        }
        total_admissions += n_adm;
        let latest = schedule.last().copied().unwrap();

        // demographics around the latest admission
        let shifted = prng.random::<f64>() < cfg.shifted_dob_fraction;
        let age_years: f64 = 18.0 + prng.random::<f64>() * 72.0;
        let dob = if shifted {
            latest.1 - Duration::days((300.0 * 365.25) as i64)
        } else {
            latest.1 - Duration::days((age_years * 365.25) as i64)
        };
        let dod = if died {
            Some(latest.1 + Duration::days(latest.2))
        } else {
            None
        };
        patients.line(&format!(
            "{},{},{},{}",
            subject_id,
            gender,
            fmt_dt(dob),
            dod.map(fmt_dt).unwrap_or_default()
        ))?;

        for (a, &(hadm, time, _los)) in schedule.iter().enumerate() {
            let is_latest = a == n_adm - 1;
            let flag = if died && is_latest { 1 } else { 0 };
            admissions.line(&format!(
                "{},{},{},{},{}",
                subject_id,
                hadm,
                fmt_dt(time),
                ethnicity,
                flag
            ))?;
        }
        if died {
            deaths += 1;
        }

        // diagnoses: sepsis code placement plus background codes
        if sepsis_latest[i] {
            let code = sepsis_codes[i % sepsis_codes.len()];
            diagnoses.line(&format!("{},{},{}", subject_id, latest.0, code))?;
        } else if n_adm >= 2 && prng.random::<f64>() < EARLIER_SEPSIS_FRACTION {
            // sepsis only in an earlier admission: excluded under the
            // default latest-admission scope, included under `any`
            let code = sepsis_codes[i % sepsis_codes.len()];
            diagnoses.line(&format!("{},{},{}", subject_id, schedule[0].0, code))?;
        }
        for &(hadm, _, _) in &schedule {
            let extra = prng.random_range(1..4);
            for _ in 0..extra {
                let code = OTHER_ICD9[prng.random_range(0..OTHER_ICD9.len())];
                diagnoses.line(&format!("{},{},{}", subject_id, hadm, code))?;
            }
        }

        // per-patient informative means
        let informative_means: Vec<f64> = match cfg.signal_kind {
            SignalKind::Linear => informative_ids
                .iter()
                .map(|_| if died { cfg.signal_strength } else { 0.0 })
                .collect(),
            SignalKind::Xor => xor_means(
                &mut prng,
                cfg.n_informative_items,
                died,
                cfg.signal_strength,
            ),
        };

        // events: mask per (patient, item); every admission of an
        // unmasked item gets at least one event
        for (k, &item) in informative_ids.iter().chain(noise_ids.iter()).enumerate() {
            if prng.random::<f64>() < cfg.missing_rate {
                continue;
            }
            let mean = if k < informative_ids.len() {
                informative_means[k]
            } else {
                0.0
            };
            for &(hadm, time, los) in &schedule {
                let count =
                    prng.random_range(cfg.events_per_patient_item.0..=cfg.events_per_patient_item.1);
                for _ in 0..count {
                    let minutes = prng.random_range(0..los.max(1) * 24 * 60);
                    let charttime = time + Duration::minutes(minutes);
                    let value = normal(&mut prng, mean);
                    let line = format!(
                        "{},{},{},{},{}",
                        subject_id,
                        hadm,
                        item,
                        fmt_dt(charttime),
                        value
                    );
                    if prng.random::<bool>() {
                        chartevents.line(&line)?;
                    } else {
                        labevents.line(&line)?;
                    }
                }
            }
        }

        outcomes.push(PatientOutcome {
            subject_id,
            died,
            sepsis_latest: sepsis_latest[i],
        });
    }

    patients.finish()?;
    admissions.finish()?;
    diagnoses.finish()?;
    chartevents.finish()?;
    labevents.finish()?;

    let manifest = Manifest {
        dir: out_dir.to_path_buf(),
        config: cfg.clone(),
        files: vec![
            "PATIENTS.csv".into(),
            "ADMISSIONS.csv".into(),
            "DIAGNOSES_ICD.csv".into(),
            "CHARTEVENTS.csv".into(),
            "LABEVENTS.csv".into(),
            "item_names.csv".into(),
        ],
        counts: ManifestCounts {
            patients: n,
            admissions: total_admissions,
            sepsis_patients: n_sepsis,
            deaths,
        },
        items,
        outcomes,
    };
    let manifest_path = out_dir.join("manifest.json");
    let json = crate::report::to_json_pretty(&manifest)?;
    std::fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

/// Counts recomputed from the emitted files: table row counts, the
/// latest-admission sepsis rule, and latest-admission expire flags.
pub fn manifest_summary(manifest: &Manifest) -> Result<ManifestCounts> {
    let dir = &manifest.dir;
    let patients = schema::read_patients(&table_path(dir, "PATIENTS"))?;
    let admissions = schema::read_admissions(&table_path(dir, "ADMISSIONS"))?;
    let diagnoses = schema::read_diagnoses(&table_path(dir, "DIAGNOSES_ICD"))?;

    let mut latest: HashMap<i64, (&NaiveDateTime, i64, bool)> = HashMap::new();
    for a in &admissions {
        let entry = (&a.admittime, a.hadm_id, a.hospital_expire_flag);
        latest
            .entry(a.subject_id)
            .and_modify(|cur| {
                if (entry.0, entry.1) > (cur.0, cur.1) {
                    *cur = entry;
                }
            })
            .or_insert(entry);
    }
    let mut sepsis_hadm: std::collections::HashSet<i64> = std::collections::HashSet::new();
    for d in &diagnoses {
        if crate::cohort::SEPSIS_ICD9.contains(&normalize_icd9(&d.icd9_code).as_str()) {
            sepsis_hadm.insert(d.hadm_id);
        }
    }
    let sepsis_patients = latest
        .values()
        .filter(|(_, hadm, _)| sepsis_hadm.contains(hadm))
        .count();
    let deaths = latest.values().filter(|(_, _, died)| *died).count();

    Ok(ManifestCounts {
        patients: patients.len(),
        admissions: admissions.len(),
        sepsis_patients,
        deaths,
    })
}

/// Reads a manifest back from `<dir>/manifest.json`, rebasing `dir`.
pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Integrity(format!("manifest.json: {e}")))?;
    manifest.dir = dir.to_path_buf();
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(dir: &Path, name: &str) -> String {
        std::fs::read_to_string(table_path(dir, name)).unwrap()
    }

    #[test]
    fn zero_patients_give_header_only_tables() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_patients: 0,
            ..SynthConfig::default()
        };
        let manifest = generate_dataset(&cfg, dir.path()).unwrap();
        for name in [
            "PATIENTS",
            "ADMISSIONS",
            "DIAGNOSES_ICD",
            "CHARTEVENTS",
            "LABEVENTS",
        ] {
            let content = read(dir.path(), name);
            assert_eq!(content.lines().count(), 1, "{name} not header-only");
        }
        assert_eq!(manifest.counts.patients, 0);
        assert_eq!(manifest.counts.deaths, 0);
        let summary = manifest_summary(&manifest).unwrap();
        assert_eq!(summary, manifest.counts);
    }

    #[test]
    fn identical_configs_produce_byte_identical_files() {
        let cfg = SynthConfig {
            n_patients: 40,
            n_informative_items: 3,
            n_noise_items: 4,
            seed: 7,
            ..SynthConfig::default()
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        generate_dataset(&cfg, dir_a.path()).unwrap();
        generate_dataset(&cfg, dir_b.path()).unwrap();
        for name in [
            "PATIENTS",
            "ADMISSIONS",
            "DIAGNOSES_ICD",
            "CHARTEVENTS",
            "LABEVENTS",
            "item_names",
        ] {
            assert_eq!(
                read(dir_a.path(), name),
                read(dir_b.path(), name),
                "{name} differs between runs"
            );
        }
    }

    #[test]
    fn death_prevalence_within_three_binomial_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_patients: 2000,
            mortality_rate: 0.3,
            n_informative_items: 1,
            n_noise_items: 1,
            seed: 1,
            ..SynthConfig::default()
        };
        let manifest = generate_dataset(&cfg, dir.path()).unwrap();
        let observed = manifest.counts.deaths as f64 / 2000.0;
        // 3 * sqrt(0.3 * 0.7 / 2000) = 0.030741
        assert!(
            (observed - 0.3).abs() <= 0.03074085229787879,
            "death prevalence {observed}"
        );
    }

    #[test]
    fn manifest_counts_match_file_recount() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_patients: 120,
            sepsis_fraction: 0.6,
            n_informative_items: 2,
            n_noise_items: 3,
            seed: 13,
            ..SynthConfig::default()
        };
        let manifest = generate_dataset(&cfg, dir.path()).unwrap();
        assert_eq!(manifest.counts.sepsis_patients, 72); // ceil(120 * 0.6)
        let summary = manifest_summary(&manifest).unwrap();
        assert_eq!(summary, manifest.counts);
    }

    #[test]
    fn outcomes_match_latest_admission_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_patients: 60,
            n_informative_items: 1,
            n_noise_items: 1,
            seed: 3,
            ..SynthConfig::default()
        };
        let manifest = generate_dataset(&cfg, dir.path()).unwrap();
        let admissions = schema::read_admissions(&table_path(dir.path(), "ADMISSIONS")).unwrap();
        for outcome in &manifest.outcomes {
            let latest = admissions
                .iter()
                .filter(|a| a.subject_id == outcome.subject_id)
                .max_by_key(|a| (a.admittime, a.hadm_id))
                .unwrap();
            assert_eq!(latest.hospital_expire_flag, outcome.died);
        }
    }

    #[test]
    fn unmasked_items_have_events_in_every_admission() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_patients: 30,
            missing_rate: 0.4,
            n_informative_items: 2,
            n_noise_items: 2,
            seed: 5,
            ..SynthConfig::default()
        };
        let manifest = generate_dataset(&cfg, dir.path()).unwrap();
        let mut events =
            schema::read_table::<schema::EventRow>(&table_path(dir.path(), "CHARTEVENTS")).unwrap();
        events.extend(
            schema::read_table::<schema::EventRow>(&table_path(dir.path(), "LABEVENTS")).unwrap(),
        );
        let admissions = schema::read_admissions(&table_path(dir.path(), "ADMISSIONS")).unwrap();

        // if a (patient, item) pair appears at all, it appears in all of
        // that patient's admissions
        use std::collections::HashSet;
        let with_events: HashSet<(i64, i64, i64)> = events
            .iter()
            .map(|e| (e.subject_id, e.itemid, e.hadm_id))
            .collect();
        let pairs: HashSet<(i64, i64)> =
            events.iter().map(|e| (e.subject_id, e.itemid)).collect();
        for &(subject, item) in &pairs {
            for adm in admissions.iter().filter(|a| a.subject_id == subject) {
                assert!(
                    with_events.contains(&(subject, item, adm.hadm_id)),
                    "subject {subject} item {item} missing events in hadm {}",
                    adm.hadm_id
                );
            }
        }
        drop(manifest);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bad = SynthConfig {
            mortality_rate: 0.0,
            ..SynthConfig::default()
        };
        assert!(matches!(
            generate_dataset(&bad, dir.path()),
            Err(Error::Config(_))
        ));
        let bad = SynthConfig {
            events_per_patient_item: (0, 3),
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthConfig {
            missing_rate: 1.0,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_patients: 10,
            n_informative_items: 2,
            n_noise_items: 1,
            signal_kind: SignalKind::Xor,
            seed: 9,
            ..SynthConfig::default()
        };
        let manifest = generate_dataset(&cfg, dir.path()).unwrap();
        let loaded = load_manifest(dir.path()).unwrap();
        assert_eq!(manifest, loaded);
        // xor pairing recorded
        assert_eq!(loaded.items[0].xor_partner, Some(loaded.items[1].itemid));
    }
}
