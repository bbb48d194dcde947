//! Tracking accuracy in the 80x60 grid.

pub const DEFAULT_TOLERANCES: [f64; 4] = [1.0, 3.0, 5.0, 10.0];

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    /// `(tolerance px, fraction of scored frames within it)`, ascending.
    pub p_acc: Vec<(f64, f64)>,
    /// Mean Euclidean distance over scored frames; `f64::INFINITY` when no
    /// frame was scored.
    pub euclidean: f64,
    pub frames_scored: usize,
    pub frames_blinked: usize,
}

impl MetricReport {
    /// Fraction within `tolerance`, if that tolerance was evaluated.
    pub fn p(&self, tolerance: f64) -> Option<f64> {
        self.p_acc
            .iter()
            .find(|(t, _)| *t == tolerance)
            .map(|&(_, f)| f)
    }
}

/// Sums distances and hit counts across sessions; blink frames are counted
/// but never scored.
#[derive(Clone, Debug)]
pub struct MetricAccumulator {
    tolerances: Vec<f64>,
    hits: Vec<usize>,
    distance_sum: f64,
    scored: usize,
    blinked: usize,
}

impl MetricAccumulator {
    pub fn new(tolerances: &[f64]) -> Self {
        let mut tolerances = tolerances.to_vec();
        tolerances.sort_by(f64::total_cmp);
        MetricAccumulator {
            hits: vec![0; tolerances.len()],
            tolerances,
            distance_sum: 0.0,
            scored: 0,
            blinked: 0,
        }
    }

    pub fn push(&mut self, pred: [f32; 2], label: [f32; 2], blink: bool) {
        if blink {
            self.blinked += 1;
            return;
        }
        let dx = pred[0] as f64 - label[0] as f64;
        let dy = pred[1] as f64 - label[1] as f64;
        let d = (dx * dx + dy * dy).sqrt();
        self.distance_sum += d;
        self.scored += 1;
        for (h, &tol) in self.hits.iter_mut().zip(&self.tolerances) {
            if d <= tol {
                *h += 1;
            }
        }
    }

    pub fn report(&self) -> MetricReport {
        let frac = |h: usize| {
            if self.scored == 0 {
                0.0
            } else {
                h as f64 / self.scored as f64
            }
        };
        MetricReport {
            p_acc: self
                .tolerances
                .iter()
                .zip(&self.hits)
                .map(|(&t, &h)| (t, frac(h)))
                .collect(),
            euclidean: if self.scored == 0 {
                f64::INFINITY
            } else {
                self.distance_sum / self.scored as f64
            },
            frames_scored: self.scored,
            frames_blinked: self.blinked,
        }
    }
}

/// Metrics of pixel-space predictions against labels, skipping blink frames.
pub fn evaluate(
    predictions: &[[f32; 2]],
    labels: &[[f32; 2]],
    blink: &[bool],
    tolerances: &[f64],
) -> MetricReport {
    assert_eq!(
        predictions.len(),
        labels.len(),
        "prediction/label length mismatch"
    );
    assert_eq!(predictions.len(), blink.len(), "blink flag length mismatch");
    let mut acc = MetricAccumulator::new(tolerances);
    for i in 0..predictions.len() {
        acc.push(predictions[i], labels[i], blink[i]);
    }
    acc.report()
}
