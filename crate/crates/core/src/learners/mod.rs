//! The five classifier families behind a single scoring interface, plus
//! versioned JSON (de)serialization for trained models.

pub mod boost;
pub mod forest;
pub mod knn;
pub mod linear;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

pub use boost::{log_loss, train_gboost, BoostModel, BoostParams};
pub use forest::{forest_importance, train_forest, ForestModel, ForestParams};
pub use knn::{train_knn, KnnModel, KnnParams};
pub use linear::{
    hinge_objective, logistic_objective, train_logistic, train_svm, LinearKind, LinearModel,
    LinearParams,
};
pub use tree::{train_regression_tree, train_tree, TreeNode, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Rf,
    Gb,
    Lr,
    Svm,
    Knn,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [
        ModelFamily::Rf,
        ModelFamily::Gb,
        ModelFamily::Lr,
        ModelFamily::Svm,
        ModelFamily::Knn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::Rf => "rf",
            ModelFamily::Gb => "gb",
            ModelFamily::Lr => "lr",
            ModelFamily::Svm => "svm",
            ModelFamily::Knn => "knn",
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "rf" => Ok(ModelFamily::Rf),
            "gb" => Ok(ModelFamily::Gb),
            "lr" => Ok(ModelFamily::Lr),
            "svm" => Ok(ModelFamily::Svm),
            "knn" => Ok(ModelFamily::Knn),
            other => Err(Error::Config(format!(
                "unknown model {other:?}; expected rf|gb|lr|svm|knn"
            ))),
        }
    }
}

/// Hyperparameters for every family plus the master seed. The source
/// methodology reports none of these; the values here are conventional
/// defaults and all of them are exposed in the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TrainConfig {
    pub forest: ForestParams,
    pub boost: BoostParams,
    pub logistic: LinearParams,
    pub svm: LinearParams,
    pub knn: KnnParams,
    pub seed: u64,
}

/// A trained classifier; immutable after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TrainedModel {
    Forest(ForestModel),
    Boost(BoostModel),
    Linear(LinearModel),
    Knn(KnnModel),
}

impl TrainedModel {
    pub fn family(&self) -> ModelFamily {
        match self {
            TrainedModel::Forest(_) => ModelFamily::Rf,
            TrainedModel::Boost(_) => ModelFamily::Gb,
            TrainedModel::Linear(m) => match m.kind {
                LinearKind::Logistic => ModelFamily::Lr,
                LinearKind::Svm => ModelFamily::Svm,
            },
            TrainedModel::Knn(_) => ModelFamily::Knn,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Forest(m) => m.n_features,
            TrainedModel::Boost(m) => m.n_features,
            TrainedModel::Linear(m) => m.weights.len(),
            TrainedModel::Knn(m) => m.x.n_cols(),
        }
    }
}

/// Trains one family on (x, y) using its block of the config.
pub fn train_model(
    family: ModelFamily,
    x: &Matrix,
    y: &[bool],
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    Ok(match family {
        ModelFamily::Rf => TrainedModel::Forest(train_forest(x, y, &cfg.forest, cfg.seed)?),
        ModelFamily::Gb => TrainedModel::Boost(train_gboost(x, y, &cfg.boost)?),
        ModelFamily::Lr => TrainedModel::Linear(train_logistic(x, y, &cfg.logistic)?),
        ModelFamily::Svm => TrainedModel::Linear(train_svm(x, y, &cfg.svm)?),
        ModelFamily::Knn => TrainedModel::Knn(train_knn(x, y, &cfg.knn)?),
    })
}

/// Scores in [0,1]; thresholding at 0.5 (margin 0 for the SVM) yields
/// class predictions.
pub fn predict_scores(model: &TrainedModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.n_cols() != model.n_features() {
        return Err(Error::Input(format!(
            "predict: {} columns given, model expects {}",
            x.n_cols(),
            model.n_features()
        )));
    }
    Ok(match model {
        TrainedModel::Forest(m) => m.predict_scores(x),
        TrainedModel::Boost(m) => m.predict_scores(x),
        TrainedModel::Linear(m) => m.predict_scores(x),
        TrainedModel::Knn(m) => m.predict_scores(x),
    })
}

/// Raw margins for margin-based models (SVM ranking / boosting scale).
pub fn raw_margins(model: &TrainedModel, x: &Matrix) -> Option<Vec<f64>> {
    match model {
        TrainedModel::Linear(m) => Some(m.margins(x)),
        TrainedModel::Boost(m) => Some(m.margins(x)),
        _ => None,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    version: u32,
    model: TrainedModel,
}

pub fn model_to_json(model: &TrainedModel) -> Result<String> {
    serde_json::to_string(&ModelDocument {
        version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    })
    .map_err(|e| Error::Pipeline(format!("model serialization: {e}")))
}

pub fn model_from_json(json: &str) -> Result<TrainedModel> {
    let doc: ModelDocument = serde_json::from_str(json)
        .map_err(|e| Error::Integrity(format!("model deserialization: {e}")))?;
    if doc.version != MODEL_FORMAT_VERSION {
        return Err(Error::Integrity(format!(
            "unsupported model format version {}",
            doc.version
        )));
    }
    Ok(doc.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Matrix, Vec<bool>) {
        let x = Matrix::from_rows(&[
            vec![0.0, 1.0],
            vec![0.5, 0.0],
            vec![1.0, 1.5],
            vec![5.0, 4.0],
            vec![5.5, 5.0],
            vec![6.0, 4.5],
        ])
        .unwrap();
        let y = vec![false, false, false, true, true, true];
        (x, y)
    }

    #[test]
    fn all_families_train_and_score_in_unit_interval() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            forest: ForestParams {
                n_trees: 10,
                ..ForestParams::default()
            },
            boost: BoostParams {
                rounds: 20,
                ..BoostParams::default()
            },
            knn: KnnParams { k: 3 },
            seed: 4,
            ..TrainConfig::default()
        };
        for family in ModelFamily::ALL {
            let model = train_model(family, &x, &y, &cfg).unwrap();
            assert_eq!(model.family(), family);
            let scores = predict_scores(&model, &x).unwrap();
            assert!(scores.iter().all(|s| s.is_finite() && (0.0..=1.0).contains(s)));
        }
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            knn: KnnParams { k: 2 },
            ..TrainConfig::default()
        };
        let model = train_model(ModelFamily::Knn, &x, &y, &cfg).unwrap();
        let wrong = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            predict_scores(&model, &wrong),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn scores_are_permutation_equivariant() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            forest: ForestParams {
                n_trees: 8,
                ..ForestParams::default()
            },
            seed: 10,
            ..TrainConfig::default()
        };
        let model = train_model(ModelFamily::Rf, &x, &y, &cfg).unwrap();
        let scores = predict_scores(&model, &x).unwrap();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let shuffled = x.take_rows(&perm);
        let scores_perm = predict_scores(&model, &shuffled).unwrap();
        for (slot, &orig) in perm.iter().enumerate() {
            assert_eq!(scores_perm[slot], scores[orig]);
        }
    }

    #[test]
    fn boosting_zero_rounds_scores_constant() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            boost: BoostParams {
                rounds: 0,
                ..BoostParams::default()
            },
            ..TrainConfig::default()
        };
        let model = train_model(ModelFamily::Gb, &x, &y, &cfg).unwrap();
        let scores = predict_scores(&model, &x).unwrap();
        assert!(scores.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn model_json_round_trip_is_exact() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            forest: ForestParams {
                n_trees: 5,
                ..ForestParams::default()
            },
            boost: BoostParams {
                rounds: 7,
                ..BoostParams::default()
            },
            knn: KnnParams { k: 3 },
            seed: 77,
            ..TrainConfig::default()
        };
        for family in ModelFamily::ALL {
            let model = train_model(family, &x, &y, &cfg).unwrap();
            let json = model_to_json(&model).unwrap();
            let back = model_from_json(&json).unwrap();
            assert_eq!(model, back, "round trip failed for {family}");
        }
    }

    #[test]
    fn forest_scores_hit_the_extremes_on_pure_leaves() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            forest: ForestParams {
                n_trees: 30,
                bootstrap: false,
                mtry: Some(2),
                ..ForestParams::default()
            },
            seed: 3,
            ..TrainConfig::default()
        };
        let model = train_model(ModelFamily::Rf, &x, &y, &cfg).unwrap();
        let scores = predict_scores(&model, &x).unwrap();
        for (s, &label) in scores.iter().zip(y.iter()) {
            assert_eq!(*s, if label { 1.0 } else { 0.0 });
        }
    }
}
