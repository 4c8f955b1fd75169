//! Crash-classification metrics and crash-time error distributions.

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("empty validation set")]
    Empty,
    #[error("{truth} ground-truth entries but {predicted} predictions")]
    Length { truth: usize, predicted: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (t, p) in pairs {
            c.add(t, p);
        }
        c
    }
}

/// CE in percent; TPR, PPV and F1 are `None` when their denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub ce: f64,
    pub tpr: Option<f64>,
    pub ppv: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn score(c: &ConfusionCounts) -> Result<Scores, EvalError> {
    let n = c.total();
    if n == 0 {
        return Err(EvalError::Empty);
    }
    Ok(Scores {
        ce: (c.fp + c.fn_) as f64 / n as f64 * 100.0,
        tpr: ratio(c.tp, c.tp + c.fn_),
        ppv: ratio(c.tp, c.tp + c.fp),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
    })
}

/// Ground truth or prediction for one validation sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub positive: bool,
    pub crash_time: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub counts: ConfusionCounts,
    pub scores: Scores,
    /// `|true − predicted|` crash step, one entry per true positive, in input order.
    pub crash_time_errors: Vec<usize>,
}

pub fn evaluate(truth: &[Outcome], predicted: &[Outcome]) -> Result<Evaluation, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::Length {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    let counts = ConfusionCounts::from_pairs(
        truth
            .iter()
            .zip(predicted)
            .map(|(t, p)| (t.positive, p.positive)),
    );
    let scores = score(&counts)?;
    Ok(Evaluation {
        counts,
        scores,
        crash_time_errors: crash_time_errors(truth, predicted),
    })
}

pub fn crash_time_errors(truth: &[Outcome], predicted: &[Outcome]) -> Vec<usize> {
    truth
        .iter()
        .zip(predicted)
        .filter_map(
            |(t, p)| match (t.positive, p.positive, t.crash_time, p.crash_time) {
                (true, true, Some(a), Some(b)) => Some(a.abs_diff(b)),
                _ => None,
            },
        )
        .collect()
}

/// Empirical CDF: one `(error, cumulative %)` point per distinct error value.
pub fn cdf(errors: &[usize]) -> Vec<(usize, f64)> {
    let mut sorted = errors.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (k, &e) in sorted.iter().enumerate() {
        let pct = (k + 1) as f64 / n * 100.0;
        match out.last_mut() {
            Some(last) if last.0 == e => last.1 = pct,
            _ => out.push((e, pct)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn fixtures() {
        let s = score(&ConfusionCounts {
            tp: 10,
            fp: 0,
            tn: 90,
            fn_: 0,
        })
        .unwrap();
        assert_eq!(
            s,
            Scores {
                ce: 0.0,
                tpr: Some(1.0),
                ppv: Some(1.0),
                f1: Some(1.0)
            }
        );
        let s = score(&ConfusionCounts {
            tp: 2,
            fp: 1,
            tn: 6,
            fn_: 1,
        })
        .unwrap();
        assert!((s.ce - 20.0).abs() < 1e-12);
        for v in [s.tpr, s.ppv, s.f1] {
            assert!((v.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(score(&ConfusionCounts::default()), Err(EvalError::Empty));
    }

    #[test]
    fn undefined_rates() {
        let s = score(&ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 5,
            fn_: 0,
        })
        .unwrap();
        assert_eq!(
            s,
            Scores {
                ce: 0.0,
                tpr: None,
                ppv: None,
                f1: None
            }
        );
        let s = score(&ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 5,
            fn_: 3,
        })
        .unwrap();
        assert_eq!((s.tpr, s.ppv, s.f1), (Some(0.0), None, Some(0.0)));
    }

    #[test]
    fn cdf_fixtures() {
        let c = cdf(&[1, 0, 0]);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].0, 0);
        assert!((c[0].1 - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(c[1], (1, 100.0));
        assert!(cdf(&[]).is_empty());
    }

    #[test]
    fn errors_only_on_true_positives() {
        let o = |positive, t: Option<usize>| Outcome {
            positive,
            crash_time: t,
        };
        let truth = [
            o(true, Some(5)),
            o(true, Some(9)),
            o(false, None),
            o(true, Some(3)),
        ];
        let pred = [
            o(true, Some(7)),
            o(false, None),
            o(true, Some(1)),
            o(true, Some(3)),
        ];
        let e = evaluate(&truth, &pred).unwrap();
        assert_eq!(e.crash_time_errors, vec![2, 0]);
        assert_eq!(
            e.counts,
            ConfusionCounts {
                tp: 2,
                fp: 1,
                tn: 0,
                fn_: 1
            }
        );
        assert_eq!(
            evaluate(&truth, &pred[..2]),
            Err(EvalError::Length {
                truth: 4,
                predicted: 2
            })
        );
    }
}
