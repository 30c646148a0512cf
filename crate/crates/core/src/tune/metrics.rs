//! Classification metrics: confusion matrix, accuracy, per-class
//! precision/recall/F1, and the macro/weighted F1 averages. F41 is the
//! positive class; every 0/0 ratio is defined as 0.

use serde::{Deserialize, Serialize};

use super::TuneError;
use crate::corpus::Label;
use crate::features::SparseVector;
use crate::models::TrainedClassifier;

/// Binary confusion matrix with F41 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "tp")]
    pub true_positives: usize,
    #[serde(rename = "fp")]
    pub false_positives: usize,
    #[serde(rename = "fn")]
    pub false_negatives: usize,
    #[serde(rename = "tn")]
    pub true_negatives: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_positives + self.true_negatives) as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Actual occurrences of the class in the test set.
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(tp: usize, fp: usize, fn_: usize) -> ClassMetrics {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics { precision, recall, f1, support: tp + fn_ }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub f41: ClassMetrics,
    pub f43: ClassMetrics,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<EvalReport, TuneError> {
        if confusion.total() == 0 {
            return Err(TuneError::EmptyTestSet);
        }
        let f41 = class_metrics(
            confusion.true_positives,
            confusion.false_positives,
            confusion.false_negatives,
        );
        // F43 metrics are the same matrix with the roles flipped
        let f43 = class_metrics(
            confusion.true_negatives,
            confusion.false_negatives,
            confusion.false_positives,
        );
        let total = confusion.total() as f64;
        Ok(EvalReport {
            confusion,
            accuracy: confusion.accuracy(),
            macro_f1: (f41.f1 + f43.f1) / 2.0,
            weighted_f1: (f41.support as f64 * f41.f1 + f43.support as f64 * f43.f1) / total,
            f41,
            f43,
        })
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "confusion (positive = F41): tp={} fp={} fn={} tn={}\n",
            self.confusion.true_positives,
            self.confusion.false_positives,
            self.confusion.false_negatives,
            self.confusion.true_negatives,
        ));
        out.push_str(&format!("accuracy     {:.4}\n", self.accuracy));
        out.push_str("class  precision  recall  f1      support\n");
        for (name, m) in [("F41", &self.f41), ("F43", &self.f43)] {
            out.push_str(&format!(
                "{name}    {:<9.4}  {:<6.4}  {:<6.4}  {}\n",
                m.precision, m.recall, m.f1, m.support,
            ));
        }
        out.push_str(&format!("macro f1     {:.4}\n", self.macro_f1));
        out.push_str(&format!("weighted f1  {:.4}\n", self.weighted_f1));
        out
    }
}

pub fn eval_from_predictions(
    predicted: &[Label],
    actual: &[Label],
) -> Result<EvalReport, TuneError> {
    if predicted.len() != actual.len() {
        return Err(TuneError::MismatchedLengths { left: predicted.len(), right: actual.len() });
    }
    let mut confusion = ConfusionMatrix {
        true_positives: 0,
        false_positives: 0,
        false_negatives: 0,
        true_negatives: 0,
    };
    for (p, a) in predicted.iter().zip(actual) {
        let cell = match (p, a) {
            (Label::F41Anxiety, Label::F41Anxiety) => &mut confusion.true_positives,
            (Label::F41Anxiety, Label::F43Adjustment) => &mut confusion.false_positives,
            (Label::F43Adjustment, Label::F41Anxiety) => &mut confusion.false_negatives,
            (Label::F43Adjustment, Label::F43Adjustment) => &mut confusion.true_negatives,
        };
        *cell += 1;
    }
    EvalReport::from_confusion(confusion)
}

pub fn evaluate(
    model: &TrainedClassifier,
    x: &[SparseVector],
    y: &[Label],
) -> Result<EvalReport, TuneError> {
    if x.len() != y.len() {
        return Err(TuneError::MismatchedLengths { left: x.len(), right: y.len() });
    }
    let predicted: Vec<Label> = x.iter().map(|v| model.predict(v)).collect();
    eval_from_predictions(&predicted, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_one() {
        let actual: Vec<Label> = std::iter::repeat_n(Label::F41Anxiety, 44)
            .chain(std::iter::repeat_n(Label::F43Adjustment, 25))
            .collect();
        let report = eval_from_predictions(&actual, &actual).unwrap();
        assert_eq!(report.confusion.true_positives, 44);
        assert_eq!(report.confusion.true_negatives, 25);
        assert_eq!(report.confusion.total(), 69);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.f41.f1, 1.0);
        assert_eq!(report.f43.f1, 1.0);
        assert_eq!(report.macro_f1, 1.0);
        assert_eq!(report.weighted_f1, 1.0);
    }

    #[test]
    fn constant_majority_predictor_on_corpus_ratio() {
        // predicting F41 for everything on the 146/82 class split
        let actual: Vec<Label> = std::iter::repeat_n(Label::F41Anxiety, 146)
            .chain(std::iter::repeat_n(Label::F43Adjustment, 82))
            .collect();
        let predicted = vec![Label::F41Anxiety; 228];
        let report = eval_from_predictions(&predicted, &actual).unwrap();
        assert!((report.accuracy - 146.0 / 228.0).abs() < 1e-12);
        assert!((report.accuracy - 0.640).abs() < 5e-3);
        assert_eq!(report.f41.recall, 1.0);
        // all F43 ratios are 0/0 and therefore defined as zero
        assert_eq!(report.f43.precision, 0.0);
        assert_eq!(report.f43.recall, 0.0);
        assert_eq!(report.f43.f1, 0.0);
        assert_eq!(report.f41.support, 146);
        assert_eq!(report.f43.support, 82);
    }

    #[test]
    fn hand_worked_confusion_matrix() {
        let confusion = ConfusionMatrix {
            true_positives: 40,
            false_positives: 5,
            false_negatives: 4,
            true_negatives: 20,
        };
        let report = EvalReport::from_confusion(confusion).unwrap();
        assert!((report.f41.precision - 0.889).abs() < 5e-4);
        assert!((report.f41.recall - 0.909).abs() < 5e-4);
        assert!((report.f41.f1 - 0.899).abs() < 5e-4);
        assert!((report.accuracy - 60.0 / 69.0).abs() < 1e-12);
        assert_eq!(report.confusion.total(), 69);
    }

    #[test]
    fn weighted_f1_is_support_weighted() {
        let confusion = ConfusionMatrix {
            true_positives: 30,
            false_positives: 10,
            false_negatives: 14,
            true_negatives: 15,
        };
        let report = EvalReport::from_confusion(confusion).unwrap();
        let expected = (44.0 * report.f41.f1 + 25.0 * report.f43.f1) / 69.0;
        assert!((report.weighted_f1 - expected).abs() < 1e-12);
        let macro_expected = (report.f41.f1 + report.f43.f1) / 2.0;
        assert!((report.macro_f1 - macro_expected).abs() < 1e-12);
        // flipping roles: F43 metrics equal F41 metrics of the transposed matrix
        let flipped = ConfusionMatrix {
            true_positives: 15,
            false_positives: 14,
            false_negatives: 10,
            true_negatives: 30,
        };
        let flipped_report = EvalReport::from_confusion(flipped).unwrap();
        assert_eq!(report.f43, flipped_report.f41);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        assert!(matches!(
            eval_from_predictions(&[], &[]),
            Err(TuneError::EmptyTestSet)
        ));
    }

    #[test]
    fn mismatched_lengths_are_an_error() {
        let a = vec![Label::F41Anxiety; 3];
        let b = vec![Label::F41Anxiety; 2];
        assert!(matches!(
            eval_from_predictions(&a, &b),
            Err(TuneError::MismatchedLengths { .. })
        ));
    }

    #[test]
    fn render_text_mentions_all_metrics() {
        let report = EvalReport::from_confusion(ConfusionMatrix {
            true_positives: 40,
            false_positives: 5,
            false_negatives: 4,
            true_negatives: 20,
        })
        .unwrap();
        let text = report.render_text();
        assert!(text.contains("accuracy"));
        assert!(text.contains("F41"));
        assert!(text.contains("F43"));
        assert!(text.contains("weighted f1"));
        assert!(text.contains("tp=40"));
    }
}
