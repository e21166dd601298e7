//! Macro/micro F1 over label-set predictions and Student-t confidence
//! intervals over repeated runs.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::label_space::LabelSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    /// F1 with the convention that an all-zero row scores 0.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

/// (truth, prediction) pairs over a fixed label universe.
#[derive(Debug, Clone, Default)]
pub struct PredictionBatch {
    labels: LabelSet,
    pairs: Vec<(LabelSet, LabelSet)>,
}

impl PredictionBatch {
    pub fn new(labels: LabelSet) -> Self {
        Self {
            labels,
            pairs: Vec::new(),
        }
    }

    pub fn push(&mut self, truth: LabelSet, predicted: LabelSet) -> Result<()> {
        for (what, set) in [("true", &truth), ("predicted", &predicted)] {
            if !set.is_subset_of(&self.labels) {
                return Err(Error::InvalidConfig(format!(
                    "{what} labels {set:?} outside the active labels {:?}",
                    self.labels
                )));
            }
        }
        self.pairs.push((truth, predicted));
        Ok(())
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Per-label confusion counts, in ascending label order.
    pub fn confusion(&self) -> Vec<(usize, Confusion)> {
        self.labels
            .iter()
            .map(|c| {
                let mut conf = Confusion::default();
                for (truth, pred) in &self.pairs {
                    match (truth.contains(c), pred.contains(c)) {
                        (true, true) => conf.tp += 1,
                        (false, true) => conf.fp += 1,
                        (true, false) => conf.fn_ += 1,
                        (false, false) => {}
                    }
                }
                (c, conf)
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Empty("prediction batch"));
        }
        if self.labels.is_empty() {
            return Err(Error::Empty("active label universe"));
        }
        Ok(())
    }
}

impl FromIterator<(LabelSet, LabelSet)> for PredictionBatch {
    /// Universe is the union of all truths and predictions.
    fn from_iter<T: IntoIterator<Item = (LabelSet, LabelSet)>>(iter: T) -> Self {
        let pairs: Vec<(LabelSet, LabelSet)> = iter.into_iter().collect();
        let labels = pairs
            .iter()
            .fold(LabelSet::new(), |acc, (t, p)| acc.union(t).union(p));
        Self { labels, pairs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroF1 {
    pub score: f64,
    /// Labels with no positives and no predictions, scored 0.
    pub absent_labels: usize,
}

pub fn macro_f1_report(batch: &PredictionBatch) -> Result<MacroF1> {
    batch.check()?;
    let confusion = batch.confusion();
    let absent_labels = confusion.iter().filter(|(_, c)| c.is_empty()).count();
    let score = confusion.iter().map(|(_, c)| c.f1()).sum::<f64>() / confusion.len() as f64;
    Ok(MacroF1 { score, absent_labels })
}

/// Unweighted mean of per-label F1.
pub fn macro_f1(batch: &PredictionBatch) -> Result<f64> {
    macro_f1_report(batch).map(|r| r.score)
}

/// F1 of TP/FP/FN pooled over all labels.
pub fn micro_f1(batch: &PredictionBatch) -> Result<f64> {
    batch.check()?;
    let pooled = batch
        .confusion()
        .into_iter()
        .fold(Confusion::default(), |acc, (_, c)| Confusion {
            tp: acc.tp + c.tp,
            fp: acc.fp + c.fp,
            fn_: acc.fn_ + c.fn_,
        });
    Ok(pooled.f1())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub half_width: f64,
}

impl ConfidenceInterval {
    /// Interval bounds clipped to `[0, 1]`, for score reporting.
    pub fn clamped_bounds(&self) -> (f64, f64) {
        (
            (self.mean - self.half_width).clamp(0.0, 1.0),
            (self.mean + self.half_width).clamp(0.0, 1.0),
        )
    }
}

/// Two-sided 95% Student-t interval on the mean.
pub fn confidence_interval(scores: &[f64]) -> Result<ConfidenceInterval> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "confidence interval needs at least 2 runs, got {n}"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let nf = n as f64;
    // Welford; identical scores give exactly zero variance
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &s) in scores.iter().enumerate() {
        let delta = s - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (s - mean);
    }
    let var = m2 / (nf - 1.0);
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975);
    Ok(ConfidenceInterval {
        mean,
        half_width: t * var.sqrt() / nf.sqrt(),
    })
}

/// Per-run scores with their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub macro_f1: Vec<f64>,
    pub micro_f1: Vec<f64>,
}

impl RunSummary {
    pub fn macro_mean(&self) -> f64 {
        mean(&self.macro_f1)
    }

    pub fn micro_mean(&self) -> f64 {
        mean(&self.micro_f1)
    }

    /// `None` with fewer than two runs.
    pub fn macro_ci(&self) -> Option<ConfidenceInterval> {
        confidence_interval(&self.macro_f1).ok()
    }

    pub fn micro_ci(&self) -> Option<ConfidenceInterval> {
        confidence_interval(&self.micro_f1).ok()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// `"52.65 ± 1.23"`, scores in percent; `"52.65 ± n/a"` without an interval.
pub fn format_score(mean: f64, ci: Option<ConfidenceInterval>) -> String {
    match ci {
        Some(ci) => format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * ci.half_width),
        None => format!("{:.2} ± n/a", 100.0 * mean),
    }
}
