//! Position + velocity regression loss over normalized coordinates.

use log::warn;

use crate::nn::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub l_pos: f64,
    pub l_vel: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.l_pos + self.l_vel
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// `L_pos + L_vel`.
    Combined,
    /// `L_pos` only (spatial MSE).
    PositionOnly,
}

/// Loss of `pred` against `target`, both `T x 2` flattened, plus
/// `dL/d pred`.
///
/// `L_pos` averages the squared error over scored frames and both
/// coordinates. `L_vel` averages the squared difference of first-order
/// temporal differences over consecutive scored pairs. Frames with
/// `mask[t] == false` are left out of both terms.
pub fn loss<T: Scalar>(
    pred: &[T],
    target: &[T],
    kind: LossKind,
    mask: Option<&[bool]>,
) -> (LossTerms, Vec<T>) {
    assert_eq!(
        pred.len(),
        target.len(),
        "prediction/target length mismatch"
    );
    assert_eq!(pred.len() % 2, 0, "coordinates come in pairs");
    let steps = pred.len() / 2;
    if let Some(m) = mask {
        assert_eq!(m.len(), steps, "mask length mismatch");
    }
    let scored = |t: usize| mask.map_or(true, |m| m[t]);
    let mut grad = vec![T::zero(); pred.len()];
    let two = T::one() + T::one();

    let n_pos = (0..steps).filter(|&t| scored(t)).count();
    let mut l_pos = T::zero();
    if n_pos > 0 {
        let denom = T::from_usize(2 * n_pos).expect("count");
        for t in (0..steps).filter(|&t| scored(t)) {
            for c in 0..2 {
                let e = pred[2 * t + c] - target[2 * t + c];
                l_pos += e * e / denom;
                grad[2 * t + c] += two * e / denom;
            }
        }
    }

    let mut l_vel = T::zero();
    if kind == LossKind::Combined {
        if steps < 2 {
            warn!("velocity term needs at least two frames; using 0");
        }
        let pairs: Vec<usize> = (1..steps).filter(|&t| scored(t) && scored(t - 1)).collect();
        if !pairs.is_empty() {
            let denom = T::from_usize(2 * pairs.len()).expect("count");
            for t in pairs {
                for c in 0..2 {
                    let dp = pred[2 * t + c] - pred[2 * (t - 1) + c];
                    let dy = target[2 * t + c] - target[2 * (t - 1) + c];
                    let e = dp - dy;
                    l_vel += e * e / denom;
                    let g = two * e / denom;
                    grad[2 * t + c] += g;
                    grad[2 * (t - 1) + c] -= g;
                }
            }
        }
    }
    let to64 = |v: T| v.to_f64().expect("finite loss");
    (
        LossTerms {
            l_pos: to64(l_pos),
            l_vel: to64(l_vel),
        },
        grad,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let y = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let (l, g) = loss(&y, &y, LossKind::Combined, None);
        assert_eq!(l.total(), 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_offset_only_hits_position() {
        let y = [0.1f64, 0.2, 0.3, 0.4, 0.5, 0.6];
        let p: Vec<f64> = y.iter().map(|v| v + 0.05).collect();
        let (l, _) = loss(&p, &y, LossKind::Combined, None);
        assert!((l.l_pos - 0.0025).abs() < 1e-15);
        assert!(l.l_vel.abs() < 1e-15);
    }

    #[test]
    fn single_frame_has_no_velocity() {
        let (l, _) = loss(&[0.5f64, 0.5], &[0.0, 0.0], LossKind::Combined, None);
        assert_eq!(l.l_vel, 0.0);
        assert_eq!(l.l_pos, 0.25);
    }

    #[test]
    fn masked_frames_do_not_contribute() {
        let y = [0.0f64; 6];
        let mut p = [0.0f64; 6];
        p[2] = 3.0;
        let (l, g) = loss(&p, &y, LossKind::Combined, Some(&[true, false, true]));
        assert_eq!(l.total(), 0.0);
        assert_eq!(g[2], 0.0);
    }
}
