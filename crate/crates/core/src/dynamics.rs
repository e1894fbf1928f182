//! Right-hand sides of the failure-weighted first- and second-order
//! dynamics.

use crate::error::{Error, Result};
use crate::model::{AgentMatrix, FirstOrderState, InteractionKernel, ScalingMode, SecondOrderState, SystemConfig};
use crate::schedule::ScheduleMatrix;

/// Writes `(lambda_i / N) * sum_j w_ij phi(|x_i - x_j|) (y_j - y_i)` into
/// `out`, where `x` are positions and `y` is the transported quantity
/// (positions for first order, velocities for second order).
///
/// All slices are row-major `N x d`; `weights` is `N x N`.
pub(crate) fn consensus_drift(
    kernel: &InteractionKernel,
    scaling: ScalingMode,
    dim: usize,
    positions: &[f64],
    target: &[f64],
    weights: &[f64],
    out: &mut [f64],
) {
    let n = positions.len() / dim;
    let inv_n = 1.0 / n as f64;
    let mut phi = vec![0.0; n];
    for i in 0..n {
        let xi = &positions[i * dim..(i + 1) * dim];
        let mut denom = 0.0;
        for (j, p) in phi.iter_mut().enumerate() {
            let xj = &positions[j * dim..(j + 1) * dim];
            let r = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            *p = kernel.value(r);
            denom += *p;
        }
        let scale = match scaling {
            ScalingMode::Fixed => inv_n,
            ScalingMode::Normalized => 1.0 / denom,
        };
        let yi = &target[i * dim..(i + 1) * dim];
        let row = &mut out[i * dim..(i + 1) * dim];
        row.fill(0.0);
        for j in 0..n {
            let coeff = weights[i * n + j] * phi[j];
            if coeff == 0.0 {
                continue;
            }
            let yj = &target[j * dim..(j + 1) * dim];
            for c in 0..dim {
                row[c] += coeff * (yj[c] - yi[c]);
            }
        }
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
}

/// A state the integrator can advance: flattened to one vector, with a
/// rate function that takes frozen link weights.
pub trait AgentState: Clone {
    fn positions(&self) -> &AgentMatrix;

    fn to_flat(&self) -> Vec<f64>;

    fn from_flat(n: usize, dim: usize, flat: Vec<f64>) -> Self;

    /// Time derivative of the flattened state under the given weights.
    fn rate(
        kernel: &InteractionKernel,
        scaling: ScalingMode,
        dim: usize,
        state: &[f64],
        weights: &[f64],
        out: &mut [f64],
    );

    /// Every row block of the state as matrices (positions, then velocities
    /// when present).
    fn blocks(&self) -> Vec<&AgentMatrix>;
}

impl AgentState for FirstOrderState {
    fn positions(&self) -> &AgentMatrix {
        &self.positions
    }

    fn to_flat(&self) -> Vec<f64> {
        self.positions.as_slice().to_vec()
    }

    fn from_flat(n: usize, dim: usize, flat: Vec<f64>) -> Self {
        Self { positions: AgentMatrix::from_flat(n, dim, flat).expect("flat state length") }
    }

    fn rate(
        kernel: &InteractionKernel,
        scaling: ScalingMode,
        dim: usize,
        state: &[f64],
        weights: &[f64],
        out: &mut [f64],
    ) {
        consensus_drift(kernel, scaling, dim, state, state, weights, out);
    }

    fn blocks(&self) -> Vec<&AgentMatrix> {
        vec![&self.positions]
    }
}

impl AgentState for SecondOrderState {
    fn positions(&self) -> &AgentMatrix {
        &self.positions
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = self.positions.as_slice().to_vec();
        v.extend_from_slice(self.velocities.as_slice());
        v
    }

    fn from_flat(n: usize, dim: usize, mut flat: Vec<f64>) -> Self {
        let vel = flat.split_off(n * dim);
        Self {
            positions: AgentMatrix::from_flat(n, dim, flat).expect("flat state length"),
            velocities: AgentMatrix::from_flat(n, dim, vel).expect("flat state length"),
        }
    }

    fn rate(
        kernel: &InteractionKernel,
        scaling: ScalingMode,
        dim: usize,
        state: &[f64],
        weights: &[f64],
        out: &mut [f64],
    ) {
        let half = state.len() / 2;
        let (x, v) = state.split_at(half);
        let (dx, dv) = out.split_at_mut(half);
        dx.copy_from_slice(v);
        consensus_drift(kernel, scaling, dim, x, v, weights, dv);
    }

    fn blocks(&self) -> Vec<&AgentMatrix> {
        vec![&self.positions, &self.velocities]
    }
}

pub(crate) fn check_shape(config: &SystemConfig, matrix: &ScheduleMatrix, m: &AgentMatrix) -> Result<()> {
    if m.rows() != config.n_agents || m.cols() != config.dim {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} state", config.n_agents, config.dim),
            actual: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    if matrix.size() != config.n_agents {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0} schedule", config.n_agents),
            actual: format!("{0}x{0}", matrix.size()),
        });
    }
    Ok(())
}

/// `dx_i/dt` for the first-order system at time `t`.
pub fn rhs_first_order(
    config: &SystemConfig,
    kernel: &InteractionKernel,
    matrix: &ScheduleMatrix,
    state: &FirstOrderState,
    t: f64,
) -> Result<AgentMatrix> {
    check_shape(config, matrix, &state.positions)?;
    let n = config.n_agents;
    let mut weights = vec![0.0; n * n];
    matrix.weights_at(t, &mut weights);
    let mut out = AgentMatrix::zeros(n, config.dim);
    FirstOrderState::rate(
        kernel,
        config.scaling,
        config.dim,
        state.positions.as_slice(),
        &weights,
        out.as_mut_slice(),
    );
    Ok(out)
}

/// `(dx_i/dt, dv_i/dt)` for the second-order system at time `t`. The kernel
/// sees position gaps and acts on velocity gaps.
pub fn rhs_second_order(
    config: &SystemConfig,
    kernel: &InteractionKernel,
    matrix: &ScheduleMatrix,
    state: &SecondOrderState,
    t: f64,
) -> Result<(AgentMatrix, AgentMatrix)> {
    check_shape(config, matrix, &state.positions)?;
    check_shape(config, matrix, &state.velocities)?;
    let n = config.n_agents;
    let mut weights = vec![0.0; n * n];
    matrix.weights_at(t, &mut weights);
    let mut dv = AgentMatrix::zeros(n, config.dim);
    consensus_drift(
        kernel,
        config.scaling,
        config.dim,
        state.positions.as_slice(),
        state.velocities.as_slice(),
        &weights,
        dv.as_mut_slice(),
    );
    Ok((state.velocities.clone(), dv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Condition;

    fn two_agent() -> (SystemConfig, InteractionKernel, ScheduleMatrix) {
        (
            SystemConfig::new(2, 1, ScalingMode::Fixed, Condition::Pe, 1.0, 1.0).unwrap(),
            InteractionKernel::constant(1.0).unwrap(),
            ScheduleMatrix::constant(2, 1.0).unwrap(),
        )
    }

    fn col(v: &[f64]) -> AgentMatrix {
        AgentMatrix::from_rows(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn first_order_examples() {
        let (cfg, k, m) = two_agent();
        let s = FirstOrderState::new(col(&[0.0, 1.0])).unwrap();
        let d = rhs_first_order(&cfg, &k, &m, &s, 3.7).unwrap();
        assert_eq!(d.as_slice(), &[0.5, -0.5]);

        let s = FirstOrderState::new(col(&[2.0, 2.0])).unwrap();
        assert_eq!(rhs_first_order(&cfg, &k, &m, &s, 0.0).unwrap().as_slice(), &[0.0, 0.0]);

        let silent = ScheduleMatrix::constant(2, 0.0).unwrap();
        let s = FirstOrderState::new(col(&[0.0, 1.0])).unwrap();
        assert_eq!(rhs_first_order(&cfg, &k, &silent, &s, 0.0).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn second_order_examples() {
        let (cfg, k, m) = two_agent();
        let s = SecondOrderState::new(col(&[0.0, 1.0]), col(&[0.0, 1.0])).unwrap();
        let (dx, dv) = rhs_second_order(&cfg, &k, &m, &s, 0.0).unwrap();
        assert_eq!(dx.as_slice(), &[0.0, 1.0]);
        assert_eq!(dv.as_slice(), &[0.5, -0.5]);

        let s = SecondOrderState::new(col(&[0.0, 1.0]), col(&[3.0, 3.0])).unwrap();
        let (dx, dv) = rhs_second_order(&cfg, &k, &m, &s, 0.0).unwrap();
        assert_eq!(dx.as_slice(), &[3.0, 3.0]);
        assert_eq!(dv.as_slice(), &[0.0, 0.0]);

        let silent = ScheduleMatrix::constant(2, 0.0).unwrap();
        let s = SecondOrderState::new(col(&[0.0, 1.0]), col(&[-1.0, 2.0])).unwrap();
        let (_, dv) = rhs_second_order(&cfg, &k, &silent, &s, 0.0).unwrap();
        assert_eq!(dv.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (cfg, k, m) = two_agent();
        let s = FirstOrderState::new(col(&[0.0, 1.0, 2.0])).unwrap();
        assert!(rhs_first_order(&cfg, &k, &m, &s, 0.0).is_err());
    }

    #[test]
    fn normalized_scaling_uses_self_term() {
        // phi(0) = 1, phi(1) = 1/2: lambda_0 = 2 / 1.5
        let cfg = SystemConfig::new(2, 1, ScalingMode::Normalized, Condition::Pe, 1.0, 1.0).unwrap();
        let k = InteractionKernel::power_law(1.0, 1.0).unwrap();
        let m = ScheduleMatrix::constant(2, 1.0).unwrap();
        let s = FirstOrderState::new(col(&[0.0, 1.0])).unwrap();
        let d = rhs_first_order(&cfg, &k, &m, &s, 0.0).unwrap();
        assert!((d.as_slice()[0] - 0.5 / 1.5).abs() < 1e-15);
    }
}
