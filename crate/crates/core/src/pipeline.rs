//! End-to-end orchestration: ingest -> cohort -> aggregate/pivot ->
//! sparse filter -> split -> impute -> encode -> scale -> selection
//! forest -> top-k -> SMOTE -> train -> evaluate -> SHAP -> reports.
//!
//! Every stage error is wrapped with its stage name. All artifacts are
//! assembled in memory and written at the very end; a failed write
//! removes everything written so far, so no partial output directory
//! survives an error. Two runs with the same config and inputs produce
//! byte-identical outputs.

use std::collections::{BTreeMap, HashSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::cohort::{cohort_counts, select_cohort, CohortRecord};
use crate::config::{RunConfig, SelectionOn};
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::eval::{
    auroc, bootstrap_auroc_ci, cohort_table, confusion_and_metrics, cross_validate, roc_points,
    EvalReport, ModelEval, TTestRow,
};
use crate::features::{
    aggregate_and_pivot, apply_preprocess, drop_sparse, encode_categoricals, fit_apply_impute,
    fit_apply_scale, smote_balance, stratified_split, top_k_order, FeatureMatrix,
    PreprocessParams,
};
use crate::learners::{
    forest_importance, model_from_json, model_to_json, predict_scores, train_forest, train_model,
    ModelFamily, TrainedModel,
};
use crate::report::{fmt_f64, to_json_pretty};
use crate::rng::{self, TAG_MODEL, TAG_SELECTION, TAG_SHAP_SAMPLE};
use crate::schema::{
    self, read_admissions, read_diagnoses, read_patients, stream_events, AdmissionRow,
    DiagnosisRow, EventRow, HeaderIndex, PatientRow, CHARTEVENTS,
};
use crate::shap::{ensemble_shap, shap_report, MeanAbsRow, ShapMatrix, SummaryRecord};

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| Error::stage(name, e))
}

pub struct RawTables {
    pub patients: Vec<PatientRow>,
    pub admissions: Vec<AdmissionRow>,
    pub diagnoses: Vec<DiagnosisRow>,
    pub chartevents_path: PathBuf,
    pub labevents_path: PathBuf,
}

fn check_event_file(path: &Path) -> Result<()> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?
        .clone();
    HeaderIndex::new(&CHARTEVENTS, &headers).map(|_| ())
}

/// Reads the three small tables and validates that both event tables
/// exist with conforming headers.
pub fn ingest(data_dir: &Path) -> Result<RawTables> {
    stage("ingest", || {
        let patients = read_patients(&data_dir.join("PATIENTS.csv"))?;
        let admissions = read_admissions(&data_dir.join("ADMISSIONS.csv"))?;
        let diagnoses = read_diagnoses(&data_dir.join("DIAGNOSES_ICD.csv"))?;
        let chartevents_path = data_dir.join("CHARTEVENTS.csv");
        let labevents_path = data_dir.join("LABEVENTS.csv");
        check_event_file(&chartevents_path)?;
        check_event_file(&labevents_path)?;
        Ok(RawTables {
            patients,
            admissions,
            diagnoses,
            chartevents_path,
            labevents_path,
        })
    })
}

pub fn build_cohort(tables: &RawTables, cfg: &RunConfig) -> Result<Vec<CohortRecord>> {
    stage("cohort", || {
        let cohort = select_cohort(
            &tables.patients,
            &tables.admissions,
            &tables.diagnoses,
            cfg.inclusion_scope,
        )?;
        if cohort.is_empty() {
            return Err(Error::Pipeline(
                "no patients matched the inclusion criteria".into(),
            ));
        }
        Ok(cohort)
    })
}

/// Reads an `item_names.csv` (ITEMID,LABEL) if present.
pub fn load_item_names(data_dir: &Path) -> Result<BTreeMap<i64, String>> {
    let path = data_dir.join("item_names.csv");
    let mut names = BTreeMap::new();
    if !path.exists() {
        return Ok(names);
    }
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    for rec in reader.records() {
        let rec = rec
            .map_err(|e| Error::io(&path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
        let id: i64 = rec
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Integrity(format!("{}: bad ITEMID", path.display())))?;
        names.insert(id, rec.get(1).unwrap_or("").trim().to_string());
    }
    Ok(names)
}

/// Streams both event tables down to the cohort, merges them, and
/// builds the pivoted, sparse-filtered feature matrix.
pub fn build_features(
    tables: &RawTables,
    cohort: &[CohortRecord],
    item_names: &BTreeMap<i64, String>,
    cfg: &RunConfig,
) -> Result<FeatureMatrix> {
    stage("features", || {
        let keep: HashSet<i64> = cohort.iter().map(|c| c.subject_id).collect();
        let mut events: Vec<EventRow> = stream_events(&tables.chartevents_path, &keep)?;
        events.extend(stream_events(&tables.labevents_path, &keep)?);
        let matrix = aggregate_and_pivot(&events, cohort, item_names)?;
        drop_sparse(&matrix, cfg.missing_threshold)
    })
}

pub struct SplitResult {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
}

pub fn split_features(matrix: &FeatureMatrix, cfg: &RunConfig) -> Result<SplitResult> {
    stage("split", || {
        let (train, test) = stratified_split(matrix, cfg.split_ratio, cfg.seed)?;
        Ok(SplitResult { train, test })
    })
}

pub struct PreparedData {
    /// scaled, encoded, imputed training rows (pre-selection columns)
    pub train: Matrix,
    pub test: Matrix,
    pub train_labels: Vec<bool>,
    pub test_labels: Vec<bool>,
    pub test_subjects: Vec<i64>,
    pub train_subjects: Vec<i64>,
    pub columns: Vec<String>,
    pub params: PreprocessParams,
    /// imputed, unscaled numeric matrices for the cohort table
    pub imputed_train: Matrix,
    pub imputed_test: Matrix,
    pub imputed_columns: Vec<String>,
}

pub fn preprocess(split: &SplitResult) -> Result<PreparedData> {
    stage("preprocess", || {
        let (imp_train, imp_test, impute_means, dropped_fully_missing) =
            fit_apply_impute(&split.train, &split.test)?;
        let imputed_train = imp_train.to_dense()?;
        let imputed_test = imp_test.to_dense()?;
        let imputed_columns = imp_train.columns.clone();

        let (enc_train, enc_test, vocabulary) = encode_categoricals(&imp_train, &imp_test)?;
        let (scaled_train, scaled_test, scale, dropped_zero_variance) =
            fit_apply_scale(&enc_train, &enc_test)?;
        let params = PreprocessParams {
            impute_means,
            dropped_fully_missing,
            vocabulary,
            scale,
            dropped_zero_variance,
            retained_columns: scaled_train.columns.clone(),
        };
        Ok(PreparedData {
            train: scaled_train.to_dense()?,
            test: scaled_test.to_dense()?,
            train_labels: scaled_train.labels.clone(),
            test_labels: scaled_test.labels.clone(),
            train_subjects: scaled_train.subject_ids.clone(),
            test_subjects: scaled_test.subject_ids.clone(),
            columns: scaled_train.columns.clone(),
            params,
            imputed_train,
            imputed_test,
            imputed_columns,
        })
    })
}

pub struct SelectionResult {
    /// (column, importance) over all pre-selection columns, descending
    pub importances: Vec<(String, f64)>,
    pub selected: Vec<String>,
    pub train: Matrix,
    pub test: Matrix,
}

/// Trains the selection forest (on the SMOTE-balanced training set by
/// default) and keeps the top-k columns.
pub fn select_features(prepared: &PreparedData, cfg: &RunConfig) -> Result<SelectionResult> {
    stage("select", || {
        let (sel_x, sel_y): (Matrix, Vec<bool>) = match cfg.selection_on {
            SelectionOn::Balanced => smote_balance(
                &prepared.train,
                &prepared.train_labels,
                cfg.smote_k,
                rng::derive_seed(cfg.seed, TAG_SELECTION, 1),
            )?,
            SelectionOn::Raw => (prepared.train.clone(), prepared.train_labels.clone()),
        };
        let forest = train_forest(
            &sel_x,
            &sel_y,
            &cfg.train.forest,
            rng::derive_seed(cfg.seed, TAG_SELECTION, 0),
        )?;
        let raw_importance = forest_importance(&forest);

        let k = cfg.top_k_features.min(prepared.columns.len());
        let order = top_k_order(&prepared.columns, &raw_importance, k)?;
        let selected: Vec<String> = order.iter().map(|&c| prepared.columns[c].clone()).collect();

        let full_order = top_k_order(&prepared.columns, &raw_importance, prepared.columns.len())?;
        let importances: Vec<(String, f64)> = full_order
            .iter()
            .map(|&c| (prepared.columns[c].clone(), raw_importance[c]))
            .collect();

        Ok(SelectionResult {
            importances,
            selected,
            train: prepared.train.take_cols(&order),
            test: prepared.test.take_cols(&order),
        })
    })
}

pub struct TrainedModels {
    pub models: Vec<(ModelFamily, TrainedModel)>,
    /// SMOTE-balanced training data the models saw
    pub x_balanced: Matrix,
    pub y_balanced: Vec<bool>,
}

pub fn train_models(
    selection: &SelectionResult,
    train_labels: &[bool],
    cfg: &RunConfig,
) -> Result<TrainedModels> {
    let (x_balanced, y_balanced) = stage("rebalance", || {
        smote_balance(&selection.train, train_labels, cfg.smote_k, cfg.seed)
    })?;
    stage("train", || {
        let mut models = Vec::new();
        for (i, family) in cfg.model_list().into_iter().enumerate() {
            let mut train_cfg = cfg.train.clone();
            train_cfg.seed = rng::derive_seed(cfg.seed, TAG_MODEL, i as u64);
            let model = train_model(family, &x_balanced, &y_balanced, &train_cfg)?;
            models.push((family, model));
        }
        Ok(TrainedModels {
            models,
            x_balanced,
            y_balanced,
        })
    })
}

/// Evaluates every trained model on the held-out test set and builds the
/// cohort comparison table from the imputed (unscaled) matrices.
pub fn evaluate_models(
    trained: &[(ModelFamily, TrainedModel)],
    selection_test: &Matrix,
    test_labels: &[bool],
    train_fm: &FeatureMatrix,
    prepared: &PreparedData,
    cfg: &RunConfig,
) -> Result<EvalReport> {
    stage("evaluate", || {
        let mut models = BTreeMap::new();
        for (i, (family, model)) in trained.iter().enumerate() {
            let scores = predict_scores(model, selection_test)?;
            let preds: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
            let (confusion, deceased) = confusion_and_metrics(test_labels, &preds, true)?;
            let (_, survived) = confusion_and_metrics(test_labels, &preds, false)?;
            let auc = auroc(&scores, test_labels)?;
            let points = roc_points(&scores, test_labels)?;
            let ci = bootstrap_auroc_ci(
                &scores,
                test_labels,
                cfg.bootstrap_b,
                cfg.bootstrap_alpha,
                rng::derive_seed(cfg.seed, TAG_MODEL, 100 + i as u64),
            )?;
            let cv = cross_validate(train_fm, *family, &cfg.train, cfg.smote_k, cfg.cv_folds, cfg.seed)?;
            models.insert(
                family.name().to_string(),
                ModelEval {
                    accuracy: deceased.accuracy,
                    confusion,
                    positive_deceased: deceased,
                    positive_survived: survived,
                    auroc: auc,
                    auroc_ci: (ci.lo, ci.hi),
                    bootstrap_skipped: ci.skipped,
                    cv: Some(cv),
                    roc_points: points,
                    bootstrap_samples: ci.samples,
                },
            );
        }
        let ttest_rows = cohort_table(
            &prepared.imputed_train,
            &prepared.imputed_test,
            &prepared.imputed_columns,
            cfg.ttest_variant,
        )?;
        Ok(EvalReport { models, ttest_rows })
    })
}

pub struct ShapArtifacts {
    pub model: ModelFamily,
    pub shap: ShapMatrix,
    pub mean_abs: Vec<MeanAbsRow>,
    pub summary: Vec<SummaryRecord>,
    pub row_subjects: Vec<i64>,
    pub columns: Vec<String>,
    /// the explained (scaled, selected) feature rows
    pub explained: Matrix,
}

/// SHAP for the primary tree model (rf preferred, else gb) on a seeded
/// subsample of the test set.
pub fn explain_models(
    trained: &[(ModelFamily, TrainedModel)],
    selection: &SelectionResult,
    test_subjects: &[i64],
    cfg: &RunConfig,
) -> Result<Option<ShapArtifacts>> {
    stage("explain", || {
        let target = trained
            .iter()
            .find(|(f, _)| *f == ModelFamily::Rf)
            .or_else(|| trained.iter().find(|(f, _)| *f == ModelFamily::Gb));
        let Some((family, model)) = target else {
            return Ok(None);
        };
        let n_test = selection.test.n_rows();
        let rows: Vec<usize> = if cfg.shap_sample == 0 || cfg.shap_sample >= n_test {
            (0..n_test).collect()
        } else {
            let mut picked: Vec<usize> = rand::seq::index::sample(
                &mut rng::stream(cfg.seed, TAG_SHAP_SAMPLE, 0),
                n_test,
                cfg.shap_sample,
            )
            .into_iter()
            .collect();
            picked.sort_unstable();
            picked
        };
        let explained = selection.test.take_rows(&rows);
        let row_subjects: Vec<i64> = rows.iter().map(|&r| test_subjects[r]).collect();
        let shap = ensemble_shap(model, &explained)?;
        let (mean_abs, summary) = shap_report(&shap, &explained, &selection.selected, cfg.shap_top_n)?;
        Ok(Some(ShapArtifacts {
            model: *family,
            shap,
            mean_abs,
            summary,
            row_subjects,
            columns: selection.selected.clone(),
            explained,
        }))
    })
}

/// Tracks written files so a failed write can remove everything.
struct OutputSet {
    written: Vec<PathBuf>,
}

impl OutputSet {
    fn new() -> OutputSet {
        OutputSet {
            written: Vec::new(),
        }
    }

    fn write(&mut self, path: PathBuf, content: &str) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn cleanup(&self) {
        for path in self.written.iter().rev() {
            let _ = std::fs::remove_file(path);
        }
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn metrics_document(report: &EvalReport, shap_model: Option<ModelFamily>) -> impl serde::Serialize + '_ {
    #[derive(serde::Serialize)]
    struct MetricsDoc<'a> {
        models: &'a BTreeMap<String, ModelEval>,
        #[serde(skip_serializing_if = "Option::is_none")]
        shap_model: Option<&'static str>,
    }
    MetricsDoc {
        models: &report.models,
        shap_model: shap_model.map(|m| m.name()),
    }
}

fn cohort_ttest_csv(rows: &[TTestRow]) -> String {
    let mut out = String::from("feature,train,test,t,p\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.3}({:.3}),{:.3}({:.3}),{:.3},{:.3}\n",
            csv_quote(&r.feature),
            r.train_mean,
            r.train_sd,
            r.test_mean,
            r.test_sd,
            r.t,
            r.p
        ));
    }
    out
}

/// Writes the nine report files and returns their paths:
/// metrics.json, cohort_ttest.csv, importance.csv, roc_points.csv,
/// bootstrap_auc.csv, shap_mean_abs.csv, shap_summary.csv,
/// selected_features.txt, run_config_echo.json.
pub fn emit_reports(
    report: &EvalReport,
    importances: &[(String, f64)],
    selected: &[String],
    shap: Option<&ShapArtifacts>,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut out = OutputSet::new();
    let result = emit_reports_inner(report, importances, selected, shap, cfg, out_dir, &mut out);
    if result.is_err() {
        out.cleanup();
    }
    result.map(|()| out.written)
}

#[allow(clippy::too_many_arguments)]
fn emit_reports_inner(
    report: &EvalReport,
    importances: &[(String, f64)],
    selected: &[String],
    shap: Option<&ShapArtifacts>,
    cfg: &RunConfig,
    out_dir: &Path,
    out: &mut OutputSet,
) -> Result<()> {
    out.write(
        out_dir.join("metrics.json"),
        &to_json_pretty(&metrics_document(report, shap.map(|s| s.model)))?,
    )?;

    out.write(out_dir.join("cohort_ttest.csv"), &cohort_ttest_csv(&report.ttest_rows))?;

    let mut importance_csv = String::from("feature,importance\n");
    for (name, value) in importances {
        importance_csv.push_str(&format!("{},{}\n", csv_quote(name), fmt_f64(*value)));
    }
    out.write(out_dir.join("importance.csv"), &importance_csv)?;

    let mut roc_csv = String::from("model,fpr,tpr\n");
    for (name, eval) in &report.models {
        for (fpr, tpr) in &eval.roc_points {
            roc_csv.push_str(&format!("{name},{},{}\n", fmt_f64(*fpr), fmt_f64(*tpr)));
        }
    }
    out.write(out_dir.join("roc_points.csv"), &roc_csv)?;

    let mut boot_csv = String::from("model,sample_index,auc\n");
    for (name, eval) in &report.models {
        for (i, auc) in eval.bootstrap_samples.iter().enumerate() {
            boot_csv.push_str(&format!("{name},{i},{}\n", fmt_f64(*auc)));
        }
    }
    out.write(out_dir.join("bootstrap_auc.csv"), &boot_csv)?;

    let mut mean_abs_csv = String::from("feature,mean_abs_shap\n");
    if let Some(s) = shap {
        for row in &s.mean_abs {
            mean_abs_csv.push_str(&format!("{},{}\n", csv_quote(&row.feature), fmt_f64(row.mean_abs)));
        }
    }
    out.write(out_dir.join("shap_mean_abs.csv"), &mean_abs_csv)?;

    let mut summary_csv = String::from("subject_id,feature,rank,shap_value,feature_value\n");
    if let Some(s) = shap {
        for rec in &s.summary {
            summary_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                s.row_subjects[rec.row],
                csv_quote(&rec.feature),
                rec.rank,
                fmt_f64(rec.phi),
                fmt_f64(rec.feature_value)
            ));
        }
    }
    out.write(out_dir.join("shap_summary.csv"), &summary_csv)?;

    let mut selected_txt = String::new();
    for name in selected {
        selected_txt.push_str(name);
        selected_txt.push('\n');
    }
    out.write(out_dir.join("selected_features.txt"), &selected_txt)?;

    out.write(out_dir.join("run_config_echo.json"), &to_json_pretty(cfg)?)?;
    Ok(())
}

pub fn cohort_csv(cohort: &[CohortRecord]) -> String {
    let mut out = String::from("SUBJECT_ID,AGE,GENDER,ETHNICITY,LATEST_HADM_ID,LABEL\n");
    for rec in cohort {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            rec.subject_id,
            fmt_f64(rec.age_years),
            csv_quote(&rec.gender),
            csv_quote(&rec.ethnicity),
            rec.latest_hadm_id,
            rec.label as u8
        ));
    }
    out
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SplitAssignment {
    pub train_subjects: Vec<i64>,
    pub test_subjects: Vec<i64>,
}

fn shap_values_csv(shap: &ShapArtifacts) -> String {
    let mut out = String::from("subject_id");
    for c in &shap.columns {
        out.push(',');
        out.push_str(&csv_quote(c));
    }
    out.push_str(",base_value\n");
    for (r, subject) in shap.row_subjects.iter().enumerate() {
        out.push_str(&subject.to_string());
        for c in 0..shap.shap.values.n_cols() {
            out.push(',');
            out.push_str(&fmt_f64(shap.shap.values.get(r, c)));
        }
        out.push(',');
        out.push_str(&fmt_f64(shap.shap.base_value));
        out.push('\n');
    }
    out
}

pub struct PipelineOutput {
    pub cohort_patients: usize,
    pub cohort_admissions: usize,
    pub cohort_deaths: usize,
    pub report: EvalReport,
    pub importances: Vec<(String, f64)>,
    pub selected: Vec<String>,
    pub params: PreprocessParams,
    pub shap_model: Option<ModelFamily>,
    /// the nine report files
    pub report_files: Vec<PathBuf>,
}

/// Runs the whole workflow and writes every artifact into
/// `cfg.out_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let data_dir = cfg.data_dir()?.to_path_buf();
    let out_dir = cfg.out_dir()?.to_path_buf();

    let tables = ingest(&data_dir)?;
    let cohort = build_cohort(&tables, cfg)?;
    let (n_patients, n_admissions, n_deaths) = cohort_counts(&cohort, &tables.admissions);
    let item_names = stage("ingest", || load_item_names(&data_dir))?;
    let features = build_features(&tables, &cohort, &item_names, cfg)?;
    let split = split_features(&features, cfg)?;
    let prepared = preprocess(&split)?;
    let selection = select_features(&prepared, cfg)?;
    let trained = train_models(&selection, &prepared.train_labels, cfg)?;
    let report = evaluate_models(
        &trained.models,
        &selection.test,
        &prepared.test_labels,
        &split.train,
        &prepared,
        cfg,
    )?;
    let shap = explain_models(&trained.models, &selection, &prepared.test_subjects, cfg)?;

    // all computation done; write artifacts
    let mut out = OutputSet::new();
    let write_result = (|| -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        out.write(out_dir.join("cohort.csv"), &cohort_csv(&cohort))?;

        let features_path = out_dir.join("features.csv");
        features.write_csv(&features_path)?;
        out.written.push(features_path);

        let assignment = SplitAssignment {
            train_subjects: prepared.train_subjects.clone(),
            test_subjects: prepared.test_subjects.clone(),
        };
        out.write(out_dir.join("split.json"), &to_json_pretty(&assignment)?)?;
        out.write(
            out_dir.join("preprocess_params.json"),
            &to_json_pretty(&prepared.params)?,
        )?;
        for (family, model) in &trained.models {
            out.write(
                out_dir.join("models").join(format!("{}.json", family.name())),
                &model_to_json(model)?,
            )?;
        }
        if let Some(s) = &shap {
            out.write(out_dir.join("shap_values.csv"), &shap_values_csv(s))?;
        }
        emit_reports(
            &report,
            &selection.importances,
            &selection.selected,
            shap.as_ref(),
            cfg,
            &out_dir,
        )
    })();

    let report_files = match write_result {
        Ok(files) => files,
        Err(e) => {
            out.cleanup();
            return Err(Error::stage("report", e));
        }
    };

    Ok(PipelineOutput {
        cohort_patients: n_patients,
        cohort_admissions: n_admissions,
        cohort_deaths: n_deaths,
        report,
        importances: selection.importances,
        selected: selection.selected,
        params: prepared.params,
        shap_model: shap.as_ref().map(|s| s.model),
        report_files,
    })
}

/// Loads a model JSON written by the train stage.
pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

/// Rebuilds the (train, test) dense matrices for previously fitted
/// params and a stored split assignment, restricted to the selected
/// column names.
pub fn rebuild_selected(
    features: &FeatureMatrix,
    assignment: &SplitAssignment,
    params: &PreprocessParams,
    selected: &[String],
) -> Result<(Matrix, Vec<bool>, Matrix, Vec<bool>)> {
    let index_of = |subjects: &[i64]| -> Result<Vec<usize>> {
        subjects
            .iter()
            .map(|s| {
                features
                    .subject_ids
                    .iter()
                    .position(|x| x == s)
                    .ok_or_else(|| Error::Integrity(format!("split subject {s} not in features")))
            })
            .collect()
    };
    let train_rows = index_of(&assignment.train_subjects)?;
    let test_rows = index_of(&assignment.test_subjects)?;
    let train_fm = features.take_rows(&train_rows);
    let test_fm = features.take_rows(&test_rows);

    let full_train = apply_preprocess(&train_fm, params)?;
    let full_test = apply_preprocess(&test_fm, params)?;
    let col_idx: Vec<usize> = selected
        .iter()
        .map(|name| {
            params
                .retained_columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Integrity(format!("selected column {name} not in params")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        full_train.take_cols(&col_idx),
        train_fm.labels.clone(),
        full_test.take_cols(&col_idx),
        test_fm.labels.clone(),
    ))
}

pub fn read_selected_features(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.to_string()).filter(|l| !l.is_empty()).collect())
}

/// Reads a cohort.csv written by [`cohort_csv`].
pub fn read_cohort_csv(path: &Path) -> Result<Vec<CohortRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec
            .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let parse_err = |what: &str| Error::Integrity(format!("{}: bad {what}", path.display()));
        out.push(CohortRecord {
            subject_id: field(0).parse().map_err(|_| parse_err("SUBJECT_ID"))?,
            age_years: field(1).parse().map_err(|_| parse_err("AGE"))?,
            gender: field(2),
            ethnicity: field(3),
            latest_hadm_id: field(4).parse().map_err(|_| parse_err("LATEST_HADM_ID"))?,
            label: field(5) == "1",
        });
    }
    Ok(out)
}

/// Mean-imputes a feature matrix with previously fitted means, returning
/// the numeric block before encoding/scaling (the cohort-table view).
pub fn apply_impute_only(
    matrix: &FeatureMatrix,
    params: &PreprocessParams,
) -> Result<(Matrix, Vec<String>)> {
    let n = matrix.n_rows();
    let mut out = Matrix::zeros(n, params.impute_means.len());
    let mut columns = Vec::with_capacity(params.impute_means.len());
    for (j, (name, mean)) in params.impute_means.iter().enumerate() {
        let c = matrix
            .column_index(name)
            .ok_or_else(|| Error::Integrity(format!("impute column {name} absent from features")))?;
        for r in 0..n {
            let v = if matrix.observed(r, c) { matrix.value(r, c) } else { *mean };
            out.set(r, j, v);
        }
        columns.push(name.clone());
    }
    Ok((out, columns))
}

pub struct TrainStageOutput {
    pub model_names: Vec<String>,
    pub balanced_rows: usize,
    pub selected: Vec<String>,
}

/// The `train` subcommand: split, preprocess, select, rebalance, train;
/// writes split.json, preprocess_params.json, selected_features.txt,
/// importance.csv and models/<family>.json.
pub fn train_stage(features: &FeatureMatrix, cfg: &RunConfig) -> Result<TrainStageOutput> {
    let split = split_features(features, cfg)?;
    let prepared = preprocess(&split)?;
    let selection = select_features(&prepared, cfg)?;
    let trained = train_models(&selection, &prepared.train_labels, cfg)?;

    let out_dir = cfg.out_dir()?.to_path_buf();
    let mut out = OutputSet::new();
    let result = (|| -> Result<()> {
        std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        let assignment = SplitAssignment {
            train_subjects: prepared.train_subjects.clone(),
            test_subjects: prepared.test_subjects.clone(),
        };
        out.write(out_dir.join("split.json"), &to_json_pretty(&assignment)?)?;
        out.write(
            out_dir.join("preprocess_params.json"),
            &to_json_pretty(&prepared.params)?,
        )?;
        let mut selected_txt = String::new();
        for name in &selection.selected {
            selected_txt.push_str(name);
            selected_txt.push('\n');
        }
        out.write(out_dir.join("selected_features.txt"), &selected_txt)?;
        let mut importance_csv = String::from("feature,importance\n");
        for (name, value) in &selection.importances {
            importance_csv.push_str(&format!("{},{}\n", csv_quote(name), fmt_f64(*value)));
        }
        out.write(out_dir.join("importance.csv"), &importance_csv)?;
        for (family, model) in &trained.models {
            out.write(
                out_dir.join("models").join(format!("{}.json", family.name())),
                &model_to_json(model)?,
            )?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        out.cleanup();
        return Err(Error::stage("report", e));
    }
    Ok(TrainStageOutput {
        model_names: trained.models.iter().map(|(f, _)| f.name().to_string()).collect(),
        balanced_rows: trained.x_balanced.n_rows(),
        selected: selection.selected,
    })
}

struct StoredRun {
    assignment: SplitAssignment,
    params: PreprocessParams,
    selected: Vec<String>,
}

fn load_stored_run(cfg: &RunConfig) -> Result<StoredRun> {
    let out_dir = cfg.out_dir()?;
    Ok(StoredRun {
        assignment: read_split(&out_dir.join("split.json"))?,
        params: read_params(&out_dir.join("preprocess_params.json"))?,
        selected: read_selected_features(&out_dir.join("selected_features.txt"))?,
    })
}

/// The `evaluate` subcommand: rebuilds the stored split and scores the
/// stored models; writes metrics.json, roc_points.csv, bootstrap_auc.csv
/// and cohort_ttest.csv.
pub fn evaluate_stage(features: &FeatureMatrix, cfg: &RunConfig) -> Result<EvalReport> {
    let stored = load_stored_run(cfg)?;
    let out_dir = cfg.out_dir()?.to_path_buf();
    let mut trained = Vec::new();
    for family in cfg.model_list() {
        let path = out_dir.join("models").join(format!("{}.json", family.name()));
        trained.push((family, load_model(&path)?));
    }
    let (_, _, test_x, test_labels) =
        rebuild_selected(features, &stored.assignment, &stored.params, &stored.selected)?;

    let train_rows: Vec<usize> = stored
        .assignment
        .train_subjects
        .iter()
        .map(|s| {
            features
                .subject_ids
                .iter()
                .position(|x| x == s)
                .ok_or_else(|| Error::Integrity(format!("split subject {s} not in features")))
        })
        .collect::<Result<Vec<_>>>()?;
    let test_rows: Vec<usize> = stored
        .assignment
        .test_subjects
        .iter()
        .map(|s| features.subject_ids.iter().position(|x| x == s).unwrap())
        .collect();
    let train_fm = features.take_rows(&train_rows);
    let test_fm = features.take_rows(&test_rows);
    let (imputed_train, imputed_columns) = apply_impute_only(&train_fm, &stored.params)?;
    let (imputed_test, _) = apply_impute_only(&test_fm, &stored.params)?;

    let report = stage("evaluate", || {
        let mut models = BTreeMap::new();
        for (i, (family, model)) in trained.iter().enumerate() {
            let scores = predict_scores(model, &test_x)?;
            let preds: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
            let (confusion, deceased) = confusion_and_metrics(&test_labels, &preds, true)?;
            let (_, survived) = confusion_and_metrics(&test_labels, &preds, false)?;
            let auc = auroc(&scores, &test_labels)?;
            let points = roc_points(&scores, &test_labels)?;
            let ci = bootstrap_auroc_ci(
                &scores,
                &test_labels,
                cfg.bootstrap_b,
                cfg.bootstrap_alpha,
                rng::derive_seed(cfg.seed, TAG_MODEL, 100 + i as u64),
            )?;
            let cv = cross_validate(&train_fm, *family, &cfg.train, cfg.smote_k, cfg.cv_folds, cfg.seed)?;
            models.insert(
                family.name().to_string(),
                ModelEval {
                    accuracy: deceased.accuracy,
                    confusion,
                    positive_deceased: deceased,
                    positive_survived: survived,
                    auroc: auc,
                    auroc_ci: (ci.lo, ci.hi),
                    bootstrap_skipped: ci.skipped,
                    cv: Some(cv),
                    roc_points: points,
                    bootstrap_samples: ci.samples,
                },
            );
        }
        let ttest_rows = cohort_table(&imputed_train, &imputed_test, &imputed_columns, cfg.ttest_variant)?;
        Ok(EvalReport { models, ttest_rows })
    })?;

    let mut out = OutputSet::new();
    let result = (|| -> Result<()> {
        out.write(
            out_dir.join("metrics.json"),
            &to_json_pretty(&metrics_document(&report, None))?,
        )?;
        out.write(out_dir.join("cohort_ttest.csv"), &cohort_ttest_csv(&report.ttest_rows))?;
        let mut roc_csv = String::from("model,fpr,tpr\n");
        for (name, eval) in &report.models {
            for (fpr, tpr) in &eval.roc_points {
                roc_csv.push_str(&format!("{name},{},{}\n", fmt_f64(*fpr), fmt_f64(*tpr)));
            }
        }
        out.write(out_dir.join("roc_points.csv"), &roc_csv)?;
        let mut boot_csv = String::from("model,sample_index,auc\n");
        for (name, eval) in &report.models {
            for (i, auc) in eval.bootstrap_samples.iter().enumerate() {
                boot_csv.push_str(&format!("{name},{i},{}\n", fmt_f64(*auc)));
            }
        }
        out.write(out_dir.join("bootstrap_auc.csv"), &boot_csv)?;
        Ok(())
    })();
    if let Err(e) = result {
        out.cleanup();
        return Err(Error::stage("report", e));
    }
    Ok(report)
}

/// The `explain` subcommand: SHAP for the stored rf (else gb) model on
/// the stored test split.
pub fn explain_stage(features: &FeatureMatrix, cfg: &RunConfig) -> Result<ModelFamily> {
    let stored = load_stored_run(cfg)?;
    let out_dir = cfg.out_dir()?.to_path_buf();
    let mut family_and_model = None;
    for family in [ModelFamily::Rf, ModelFamily::Gb] {
        let path = out_dir.join("models").join(format!("{}.json", family.name()));
        if path.exists() {
            family_and_model = Some((family, load_model(&path)?));
            break;
        }
    }
    let Some((family, model)) = family_and_model else {
        return Err(Error::stage(
            "explain",
            Error::Explain("no stored tree model (rf or gb) to explain".into()),
        ));
    };

    let (_, _, test_x, _) =
        rebuild_selected(features, &stored.assignment, &stored.params, &stored.selected)?;
    let shap = stage("explain", || {
        let n_test = test_x.n_rows();
        let rows: Vec<usize> = if cfg.shap_sample == 0 || cfg.shap_sample >= n_test {
            (0..n_test).collect()
        } else {
            let mut picked: Vec<usize> = rand::seq::index::sample(
                &mut rng::stream(cfg.seed, TAG_SHAP_SAMPLE, 0),
                n_test,
                cfg.shap_sample,
            )
            .into_iter()
            .collect();
            picked.sort_unstable();
            picked
        };
        let explained = test_x.take_rows(&rows);
        let row_subjects: Vec<i64> = rows
            .iter()
            .map(|&r| stored.assignment.test_subjects[r])
            .collect();
        let shap = ensemble_shap(&model, &explained)?;
        let (mean_abs, summary) = shap_report(&shap, &explained, &stored.selected, cfg.shap_top_n)?;
        Ok(ShapArtifacts {
            model: family,
            shap,
            mean_abs,
            summary,
            row_subjects,
            columns: stored.selected.clone(),
            explained,
        })
    })?;

    let mut out = OutputSet::new();
    let result = (|| -> Result<()> {
        out.write(out_dir.join("shap_values.csv"), &shap_values_csv(&shap))?;
        let mut mean_abs_csv = String::from("feature,mean_abs_shap\n");
        for row in &shap.mean_abs {
            mean_abs_csv.push_str(&format!("{},{}\n", csv_quote(&row.feature), fmt_f64(row.mean_abs)));
        }
        out.write(out_dir.join("shap_mean_abs.csv"), &mean_abs_csv)?;
        let mut summary_csv = String::from("subject_id,feature,rank,shap_value,feature_value\n");
        for rec in &shap.summary {
            summary_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                shap.row_subjects[rec.row],
                csv_quote(&rec.feature),
                rec.rank,
                fmt_f64(rec.phi),
                fmt_f64(rec.feature_value)
            ));
        }
        out.write(out_dir.join("shap_summary.csv"), &summary_csv)?;
        Ok(())
    })();
    if let Err(e) = result {
        out.cleanup();
        return Err(Error::stage("report", e));
    }
    Ok(family)
}

/// The `ttest-report` subcommand: only cohort_ttest.csv.
pub fn ttest_stage(features: &FeatureMatrix, cfg: &RunConfig) -> Result<usize> {
    let stored = load_stored_run(cfg)?;
    let out_dir = cfg.out_dir()?.to_path_buf();
    let index_rows = |subjects: &[i64]| -> Result<Vec<usize>> {
        subjects
            .iter()
            .map(|s| {
                features
                    .subject_ids
                    .iter()
                    .position(|x| x == s)
                    .ok_or_else(|| Error::Integrity(format!("split subject {s} not in features")))
            })
            .collect()
    };
    let train_fm = features.take_rows(&index_rows(&stored.assignment.train_subjects)?);
    let test_fm = features.take_rows(&index_rows(&stored.assignment.test_subjects)?);
    let (imputed_train, columns) = apply_impute_only(&train_fm, &stored.params)?;
    let (imputed_test, _) = apply_impute_only(&test_fm, &stored.params)?;
    let rows = cohort_table(&imputed_train, &imputed_test, &columns, cfg.ttest_variant)?;
    pipeline_write_ttest(&out_dir, &rows)?;
    Ok(rows.len())
}

fn pipeline_write_ttest(out_dir: &Path, rows: &[TTestRow]) -> Result<()> {
    let mut out = OutputSet::new();
    if let Err(e) = out.write(out_dir.join("cohort_ttest.csv"), &cohort_ttest_csv(rows)) {
        out.cleanup();
        return Err(e);
    }
    Ok(())
}

pub fn read_split(path: &Path) -> Result<SplitAssignment> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Integrity(format!("split.json: {e}")))
}

pub fn read_params(path: &Path) -> Result<PreprocessParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Integrity(format!("preprocess_params.json: {e}")))
}

pub fn write_string(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(content.as_bytes()).map_err(|e| Error::io(path, e))
}

pub use schema::read_table;
