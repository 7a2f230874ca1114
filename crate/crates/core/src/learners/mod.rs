//! Downstream classifiers used to judge a feature subset.

mod data;
mod linear;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use data::{ingest_csv, ColumnKind, Dataset, LabelRule, RawTable, SchemaHints, Standardizer};
pub use linear::{
    fit_logistic, fit_svm, hinge_loss_grad, logistic_loss_grad, LinearModel, LogRegParams, SvmParams,
};

use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("io: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("table has no rows")]
    Empty,
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("missing value in row {row}, column {column:?}")]
    MissingValue { row: usize, column: String },
    #[error("column {0:?} is declared numeric but has non-numeric values")]
    NonNumeric(String),
    #[error("label column {column:?} is not binary: {detail}")]
    NonBinaryLabel { column: String, detail: String },
    #[error("training split has {positives} positive and {negatives} negative rows; need at least 2 of each")]
    InsufficientClass { positives: usize, negatives: usize },
    #[error("train_fraction {0} leaves an empty split")]
    BadSplit(f64),
    #[error("unknown learner {0:?} (expected logreg or linsvm)")]
    UnknownLearner(String),
    #[error("gradient check takes at most 20 rows, got {0}")]
    TooLarge(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerId {
    Logreg,
    Linsvm,
}

impl FromStr for LearnerId {
    type Err = LearnerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logreg" => Ok(LearnerId::Logreg),
            "linsvm" => Ok(LearnerId::Linsvm),
            other => Err(LearnerError::UnknownLearner(other.to_string())),
        }
    }
}

impl fmt::Display for LearnerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerId::Logreg => "logreg",
            LearnerId::Linsvm => "linsvm",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub learner_id: LearnerId,
    /// Held-out accuracy.
    pub accuracy: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Clone, Debug, Default)]
pub struct LearnerParams {
    pub logreg: LogRegParams,
    pub svm: SvmParams,
}

impl LearnerParams {
    pub fn with_l2(l2: f64) -> Self {
        LearnerParams {
            logreg: LogRegParams { l2, ..Default::default() },
            svm: SvmParams { l2, ..Default::default() },
        }
    }
}

/// Seeded shuffle; the first `round(n * train_fraction)` rows train.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), LearnerError> {
    let n_train = (n as f64 * train_fraction).round() as usize;
    if !(0.0..1.0).contains(&train_fraction) || n_train == 0 || n_train >= n {
        return Err(LearnerError::BadSplit(train_fraction));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

fn rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(ndarray::Axis(0), idx)
}

pub fn fit_predict(ds: &Dataset, learner: LearnerId, seed: u64, train_fraction: f64) -> Result<FitReport, LearnerError> {
    fit_predict_with(ds, learner, seed, train_fraction, &LearnerParams::default())
}

pub fn fit_predict_with(
    ds: &Dataset,
    learner: LearnerId,
    seed: u64,
    train_fraction: f64,
    params: &LearnerParams,
) -> Result<FitReport, LearnerError> {
    let (train, test) = train_test_split(ds.n_rows(), train_fraction, seed)?;
    let positives = train.iter().filter(|&&i| ds.labels[i]).count();
    let negatives = train.len() - positives;
    if positives < 2 || negatives < 2 {
        return Err(LearnerError::InsufficientClass { positives, negatives });
    }
    let scaler = Standardizer::fit(&ds.features, &train, &ds.numeric);
    let x = scaler.transform(&ds.features);
    let (x_train, x_test) = (rows(&x, &train), rows(&x, &test));
    let y_train: Vec<bool> = train.iter().map(|&i| ds.labels[i]).collect();
    let y_test: Vec<bool> = test.iter().map(|&i| ds.labels[i]).collect();

    let model = match learner {
        LearnerId::Logreg => fit_logistic(&x_train, &y_train, &params.logreg),
        LearnerId::Linsvm => {
            let mut rng = seed::rng(seed::child_seed(seed, "linsvm", 0));
            fit_svm(&x_train, &y_train, &params.svm, &mut rng)
        }
    };
    let predicted = model.predict(&x_test);
    let correct = predicted.iter().zip(&y_test).filter(|(p, t)| p == t).count();
    Ok(FitReport {
        learner_id: learner,
        accuracy: correct as f64 / y_test.len() as f64,
        seed,
        train_fraction,
        n_train: train.len(),
        n_test: test.len(),
    })
}

/// Relative error `|a - n| / max(|a|, |n|, 1e-6)` between two gradients.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Compares the analytic training-loss gradient against central finite
/// differences (h = 1e-5) at a seeded random parameter vector, returning
/// the largest relative error over all coordinates.
pub fn gradient_check(learner: LearnerId, ds: &Dataset, l2: f64, seed: u64) -> Result<f64, LearnerError> {
    if ds.n_rows() > 20 {
        return Err(LearnerError::TooLarge(ds.n_rows()));
    }
    let mut rng = seed::rng(seed);
    let p: Vec<f64> = (0..=ds.n_features()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let objective = |params: &[f64]| {
        let m = LinearModel::from_slice(params);
        match learner {
            LearnerId::Logreg => logistic_loss_grad(&m, &ds.features, &ds.labels, l2),
            LearnerId::Linsvm => hinge_loss_grad(&m, &ds.features, &ds.labels, l2),
        }
    };
    let (_, analytic) = objective(&p);
    let h = 1e-5;
    let numeric: Vec<f64> = (0..p.len())
        .map(|k| {
            let mut up = p.clone();
            let mut down = p.clone();
            up[k] += h;
            down[k] -= h;
            (objective(&up).0 - objective(&down).0) / (2.0 * h)
        })
        .collect();
    Ok(max_relative_error(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = seed::rng(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let c = if pos { 2.0 } else { -2.0 };
            x[[i, 0]] = c + rng.gen_range(-1.0..1.0);
            x[[i, 1]] = c + rng.gen_range(-1.0..1.0);
            y.push(pos);
        }
        Dataset {
            features: x,
            labels: y,
            column_names: vec!["a".into(), "b".into()],
            numeric: vec![true, true],
            sources: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let (a, b) = train_test_split(10, 0.8, 3).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(b.len(), 2);
        assert!(a.iter().all(|i| !b.contains(i)));
        assert_eq!(train_test_split(10, 0.8, 3).unwrap(), (a, b));
        assert!(matches!(train_test_split(10, 1.0, 3), Err(LearnerError::BadSplit(_))));
    }

    #[test]
    fn single_class_training_split_rejected() {
        let mut ds = blobs(20, 1);
        ds.labels = vec![true; 20];
        assert!(matches!(
            fit_predict(&ds, LearnerId::Logreg, 0, 0.8),
            Err(LearnerError::InsufficientClass { negatives: 0, .. })
        ));
    }

    #[test]
    fn fits_are_deterministic() {
        let ds = blobs(100, 9);
        for l in [LearnerId::Logreg, LearnerId::Linsvm] {
            assert_eq!(fit_predict(&ds, l, 5, 0.8).unwrap(), fit_predict(&ds, l, 5, 0.8).unwrap());
        }
    }

    #[test]
    fn zero_feature_dataset_predicts_by_bias() {
        let ds = blobs(40, 2).select_sources(|_| false);
        let r = fit_predict(&ds, LearnerId::Logreg, 0, 0.8).unwrap();
        assert!((0.0..=1.0).contains(&r.accuracy));
    }

    #[test]
    fn learner_ids_parse() {
        assert_eq!("logreg".parse::<LearnerId>().unwrap(), LearnerId::Logreg);
        assert!(matches!("forest".parse::<LearnerId>(), Err(LearnerError::UnknownLearner(_))));
    }

    #[test]
    fn gradient_check_rejects_large_inputs() {
        assert!(matches!(gradient_check(LearnerId::Logreg, &blobs(21, 0), 1e-3, 0), Err(LearnerError::TooLarge(21))));
    }
}
