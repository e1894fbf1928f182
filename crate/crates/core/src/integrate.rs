//! Fixed-step classical RK4 whose step sequence lands exactly on every
//! schedule switch time, so link weights are constant inside each step.

use serde::{Deserialize, Serialize};

use crate::dynamics::{check_shape, AgentState};
use crate::error::{require_positive, Error, Result};
use crate::model::{InteractionKernel, SystemConfig};
use crate::schedule::ScheduleMatrix;

/// Provenance recorded alongside a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub step: f64,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub meta: TrajectoryMeta,
}

impl<S: AgentState> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &S {
        self.states.last().expect("trajectory has at least the initial state")
    }

    /// Index of the recorded time closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            0
        } else if k == self.times.len() {
            k - 1
        } else if (self.times[k] - t) < (t - self.times[k - 1]) {
            k
        } else {
            k - 1
        }
    }

    pub fn state_near(&self, t: f64) -> (f64, &S) {
        let k = self.nearest_index(t);
        (self.times[k], &self.states[k])
    }
}

/// Two step-sequence points closer than this (relative to `max(1, t_end)`)
/// are merged.
const MERGE_TOLERANCE: f64 = 1e-12;

/// Sorted step times: `0`, the uniform grid `k*h`, every schedule switch
/// time, every requested mark in `(0, t_end)`, and `t_end`. Grid points
/// within rounding distance of a switch time or mark are dropped so the
/// exact switch time is kept.
pub fn step_times(matrix: &ScheduleMatrix, t_end: f64, h: f64, marks: &[f64]) -> Vec<f64> {
    let eps = MERGE_TOLERANCE * t_end.max(1.0);
    let mut fixed: Vec<f64> = matrix.switch_times(0.0, t_end);
    fixed.extend(marks.iter().copied().filter(|&m| m > 0.0 && m < t_end));
    fixed.push(0.0);
    fixed.push(t_end);
    fixed.sort_by(f64::total_cmp);
    fixed.dedup_by(|a, b| (*a - *b).abs() <= eps);

    let steps = (t_end / h).floor() as usize;
    let mut all = fixed.clone();
    for k in 1..=steps {
        let t = k as f64 * h;
        if t >= t_end {
            break;
        }
        let idx = fixed.partition_point(|&f| f < t);
        let near_next = idx < fixed.len() && (fixed[idx] - t).abs() <= eps;
        let near_prev = idx > 0 && (t - fixed[idx - 1]).abs() <= eps;
        if !near_next && !near_prev {
            all.push(t);
        }
    }
    all.sort_by(f64::total_cmp);
    all
}

/// Integrates from `initial` over `[0, t_end]` with nominal step `h`.
pub fn simulate<S: AgentState>(
    config: &SystemConfig,
    kernel: &InteractionKernel,
    matrix: &ScheduleMatrix,
    initial: &S,
    t_end: f64,
    h: f64,
) -> Result<Trajectory<S>> {
    simulate_with_marks(config, kernel, matrix, initial, t_end, h, &[])
}

/// [`simulate`], additionally landing exactly on each time in `marks`.
pub fn simulate_with_marks<S: AgentState>(
    config: &SystemConfig,
    kernel: &InteractionKernel,
    matrix: &ScheduleMatrix,
    initial: &S,
    t_end: f64,
    h: f64,
    marks: &[f64],
) -> Result<Trajectory<S>> {
    require_positive("t_end", t_end)?;
    require_positive("h", h)?;
    for block in initial.blocks() {
        check_shape(config, matrix, block)?;
    }
    let n = config.n_agents;
    let dim = config.dim;
    let times = step_times(matrix, t_end, h, marks);

    let mut y = initial.to_flat();
    let len = y.len();
    let mut weights = vec![0.0; n * n];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut tmp = vec![0.0; len];

    let mut states = Vec::with_capacity(times.len());
    states.push(initial.clone());
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let dt = t1 - t0;
        // weights are constant on [t0, t1); sample away from both ends
        matrix.weights_at(0.5 * (t0 + t1), &mut weights);
        let rate = |state: &[f64], out: &mut [f64]| {
            S::rate(kernel, config.scaling, dim, state, &weights, out)
        };

        rate(&y, &mut k1);
        for ((t, y), k) in tmp.iter_mut().zip(&y).zip(&k1) {
            *t = y + 0.5 * dt * k;
        }
        rate(&tmp, &mut k2);
        for ((t, y), k) in tmp.iter_mut().zip(&y).zip(&k2) {
            *t = y + 0.5 * dt * k;
        }
        rate(&tmp, &mut k3);
        for ((t, y), k) in tmp.iter_mut().zip(&y).zip(&k3) {
            *t = y + dt * k;
        }
        rate(&tmp, &mut k4);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t1 });
        }
        states.push(S::from_flat(n, dim, y.clone()));
    }

    Ok(Trajectory {
        times,
        states,
        meta: TrajectoryMeta { step: h, config_hash: None, seed: None },
    })
}
