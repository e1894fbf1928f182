//! Diameters, extrema, projections and consensus detection.

use crate::dynamics::AgentState;
use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::model::{AgentMatrix, SecondOrderState};

/// Largest pairwise Euclidean distance between rows.
pub fn diameter(m: &AgentMatrix) -> f64 {
    let n = m.rows();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            best = best.max(m.distance(i, j));
        }
    }
    best
}

/// `(max_i |x_i|, min_i x_i)`; the minimum is only defined in one dimension.
pub fn gamma_extrema(m: &AgentMatrix) -> (f64, Option<f64>) {
    let gamma_max = (0..m.rows())
        .map(|i| m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let gamma_min = (m.cols() == 1).then(|| m.as_slice().iter().copied().fold(f64::INFINITY, f64::min));
    (gamma_max, gamma_min)
}

/// Position and velocity diameters at the recorded time nearest `t`.
pub fn dx_dv(trajectory: &Trajectory<SecondOrderState>, t: f64) -> (f64, f64) {
    let (_, s) = trajectory.state_near(t);
    (diameter(&s.positions), diameter(&s.velocities))
}

/// `y_i = (x_i - base) . direction` for a unit `direction`.
pub fn projected_positions(m: &AgentMatrix, base: &[f64], direction: &[f64]) -> Result<Vec<f64>> {
    if base.len() != m.cols() || direction.len() != m.cols() {
        return Err(Error::ShapeMismatch {
            expected: format!("vectors of length {}", m.cols()),
            actual: format!("base {}, direction {}", base.len(), direction.len()),
        });
    }
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter {
            name: "direction",
            reason: format!("must have unit length, got {norm}"),
        });
    }
    Ok((0..m.rows())
        .map(|i| {
            m.row(i)
                .iter()
                .zip(base)
                .zip(direction)
                .map(|((x, b), w)| (x - b) * w)
                .sum()
        })
        .collect())
}

/// Spread `max - min` of scalar values.
pub fn spread(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Indices of a pair realizing the diameter.
pub fn diameter_pair(m: &AgentMatrix) -> (usize, usize) {
    let n = m.rows();
    let mut best = (0, 0, -1.0);
    for i in 0..n {
        for j in i + 1..n {
            let d = m.distance(i, j);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    (best.0, best.1)
}

/// First recorded time at which the position diameter is at most `eps`.
pub fn detect_consensus<S: AgentState>(trajectory: &Trajectory<S>, eps: f64) -> Option<f64> {
    trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .find(|(_, s)| diameter(s.positions()) <= eps)
        .map(|(&t, _)| t)
}

/// Position diameter at each recorded time.
pub fn diameter_series<S: AgentState>(trajectory: &Trajectory<S>) -> Vec<f64> {
    trajectory.states.iter().map(|s| diameter(s.positions())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::simulate;
    use crate::model::{Condition, FirstOrderState, InteractionKernel, ScalingMode, SystemConfig};
    use crate::schedule::ScheduleMatrix;

    fn rows(v: &[&[f64]]) -> AgentMatrix {
        AgentMatrix::from_rows(&v.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(diameter(&rows(&[&[0.0], &[1.0]])), 1.0);
        assert_eq!(diameter(&rows(&[&[2.0], &[2.0], &[2.0]])), 0.0);
        assert_eq!(diameter(&rows(&[&[0.0, 0.0], &[3.0, 4.0]])), 5.0);
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_extrema(&rows(&[&[-2.0], &[3.0]])), (3.0, Some(-2.0)));
        assert_eq!(gamma_extrema(&rows(&[&[3.0, 4.0], &[0.0, 0.0]])), (5.0, None));
        assert_eq!(gamma_extrema(&rows(&[&[-1.5], &[1.5]])).0, 1.5);
    }

    #[test]
    fn projection_examples() {
        let m = rows(&[&[1.0, 2.0], &[-3.0, 5.0]]);
        assert_eq!(projected_positions(&m, &[0.0, 0.0], &[1.0, 0.0]).unwrap(), vec![1.0, -3.0]);
        let (i, j) = diameter_pair(&m);
        let gap: Vec<f64> = m.row(i).iter().zip(m.row(j)).map(|(a, b)| a - b).collect();
        let d = diameter(&m);
        let w: Vec<f64> = gap.iter().map(|g| g / d).collect();
        let y = projected_positions(&m, m.row(j), &w).unwrap();
        assert!((spread(&y) - d).abs() < 1e-12);
        assert!(projected_positions(&m, &[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(projected_positions(&m, &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn consensus_detection() {
        let cfg = SystemConfig::new(2, 1, ScalingMode::Fixed, Condition::Pe, 1.0, 1.0).unwrap();
        let k = InteractionKernel::constant(1.0).unwrap();
        let on = ScheduleMatrix::constant(2, 1.0).unwrap();
        let off = ScheduleMatrix::constant(2, 0.0).unwrap();

        let same = FirstOrderState::new(rows(&[&[0.4], &[0.4]])).unwrap();
        let traj = simulate(&cfg, &k, &on, &same, 1.0, 0.01).unwrap();
        assert_eq!(detect_consensus(&traj, 1e-9), Some(0.0));

        let apart = FirstOrderState::new(rows(&[&[0.0], &[1.0]])).unwrap();
        let traj = simulate(&cfg, &k, &off, &apart, 3.0, 0.01).unwrap();
        assert_eq!(detect_consensus(&traj, 0.5), None);

        let traj = simulate(&cfg, &k, &on, &apart, 3.0, 1e-3).unwrap();
        let t = detect_consensus(&traj, (-2.0f64).exp()).unwrap();
        assert!((t - 2.0).abs() <= 1e-3 + 1e-9, "{t}");
        assert!(t >= 2.0 - 1e-9);
    }
}
