//! Tracking quality metrics: overlap rate, center error and the
//! one-pass-evaluation success curve.

use serde::{Deserialize, Serialize};
use sht_core::BoundingBox;

/// Thresholds the success curve is sampled at.
pub fn success_thresholds() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Intersection-over-union of two axis-aligned boxes.
pub fn overlap_rate(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Euclidean distance between box centers, in pixels.
pub fn center_error(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

/// Fraction of frames whose overlap reaches each threshold.
pub fn success_curve(overlaps: &[f64]) -> Vec<f64> {
    assert!(!overlaps.is_empty());
    success_thresholds()
        .iter()
        .map(|&tau| overlaps.iter().filter(|&&o| o >= tau).count() as f64 / overlaps.len() as f64)
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

/// Per-sequence evaluation summary written to `metrics.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sequence: String,
    /// Frames processed by the tracker.
    pub frames: usize,
    /// Frames with groundtruth, i.e. frames entering the averages.
    pub evaluated_frames: usize,
    pub average_overlap: f64,
    pub average_center_error: f64,
    pub success_curve: SuccessCurve,
    /// Mean wall-clock tracker step time (first frame excluded).
    pub mean_step_seconds: f64,
}

impl MetricsReport {
    pub fn compute(
        sequence: &str,
        predictions: &[BoundingBox],
        groundtruth: &[BoundingBox],
        mean_step_seconds: f64,
    ) -> Self {
        let n = predictions.len().min(groundtruth.len());
        assert!(n > 0, "nothing to evaluate");
        let overlaps: Vec<f64> = (0..n)
            .map(|i| overlap_rate(&predictions[i], &groundtruth[i]))
            .collect();
        let errors: Vec<f64> = (0..n)
            .map(|i| center_error(&predictions[i], &groundtruth[i]))
            .collect();
        MetricsReport {
            sequence: sequence.to_string(),
            frames: predictions.len(),
            evaluated_frames: n,
            average_overlap: overlaps.iter().sum::<f64>() / n as f64,
            average_center_error: errors.iter().sum::<f64>() / n as f64,
            success_curve: SuccessCurve {
                thresholds: success_thresholds(),
                values: success_curve(&overlaps),
            },
            mean_step_seconds,
        }
    }
}

/// Cross-sequence aggregate written by the `bench` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub sequences: std::collections::BTreeMap<String, MetricsReport>,
    pub average_overlap: f64,
    pub average_center_error: f64,
    pub success_curve: SuccessCurve,
}

impl AggregateReport {
    pub fn from_reports(reports: Vec<MetricsReport>) -> Self {
        assert!(!reports.is_empty());
        let n = reports.len() as f64;
        let average_overlap = reports.iter().map(|r| r.average_overlap).sum::<f64>() / n;
        let average_center_error = reports.iter().map(|r| r.average_center_error).sum::<f64>() / n;
        let thresholds = success_thresholds();
        let values = (0..thresholds.len())
            .map(|i| reports.iter().map(|r| r.success_curve.values[i]).sum::<f64>() / n)
            .collect();
        AggregateReport {
            sequences: reports.into_iter().map(|r| (r.sequence.clone(), r)).collect(),
            average_overlap,
            average_center_error,
            success_curve: SuccessCurve { thresholds, values },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }

    #[test]
    fn overlap_examples() {
        let a = bx(10.0, 20.0, 30.0, 40.0);
        assert_eq!(overlap_rate(&a, &a), 1.0);
        assert_eq!(overlap_rate(&a, &bx(100.0, 200.0, 5.0, 5.0)), 0.0);
        // intersection 2, union 6
        let got = overlap_rate(&bx(0.0, 0.0, 2.0, 2.0), &bx(1.0, 0.0, 2.0, 2.0));
        assert!((got - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn center_error_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(center_error(&a, &a), 0.0);
        let b = bx(3.0, 4.0, 10.0, 10.0);
        assert_eq!(center_error(&a, &b), 5.0);
    }

    #[test]
    fn success_curve_examples() {
        let all_half = vec![0.5; 7];
        let s = success_curve(&all_half);
        assert_eq!(s[0], 1.0);
        for (i, &tau) in success_thresholds().iter().enumerate() {
            assert_eq!(s[i], if tau <= 0.5 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn success_curve_matches_counting_oracle() {
        let overlaps = [0.91, 0.13, 0.55, 0.72, 0.0, 1.0, 0.49, 0.5, 0.3];
        let s = success_curve(&overlaps);
        for (i, &tau) in success_thresholds().iter().enumerate() {
            let count = overlaps.iter().filter(|&&o| o >= tau).count();
            assert_eq!(s[i], count as f64 / overlaps.len() as f64);
        }
        // monotone non-increasing, S(0) = 1, S beyond max overlap = 0
        for w in s.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert_eq!(s[0], 1.0);
    }

    proptest! {
        #[test]
        fn overlap_is_symmetric_and_bounded(
            ax in -50.0f64..50.0, ay in -50.0f64..50.0, aw in 1.0f64..60.0, ah in 1.0f64..60.0,
            bx_ in -50.0f64..50.0, by in -50.0f64..50.0, bw in 1.0f64..60.0, bh in 1.0f64..60.0,
        ) {
            let a = bx(ax, ay, aw, ah);
            let b = bx(bx_, by, bw, bh);
            let ab = overlap_rate(&a, &b);
            let ba = overlap_rate(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((center_error(&a, &b) - center_error(&b, &a)).abs() < 1e-12);
        }
    }
}
