//! CSV writers for trajectories, metrics and window-integral diagnostics.

use std::io::{self, Write};

use crate::dynamics::AgentState;
use crate::integrate::Trajectory;
use crate::metrics::{diameter, gamma_extrema};
use crate::schedule::ScheduleMatrix;

/// Columns `t,agent_index,x_1..x_d[,v_1..v_d]`, one row per agent per
/// recorded time; every `every`-th time plus the final one.
pub fn write_trajectory_csv<S: AgentState, W: Write>(
    out: &mut W,
    trajectory: &Trajectory<S>,
    every: usize,
) -> io::Result<()> {
    let first = &trajectory.states[0];
    let dim = first.positions().cols();
    let mut header = String::from("t,agent_index");
    for prefix in ["x", "v"].iter().take(first.blocks().len()) {
        for c in 1..=dim {
            header.push_str(&format!(",{prefix}_{c}"));
        }
    }
    writeln!(out, "{header}")?;
    for k in sampled_indices(trajectory.len(), every) {
        let t = trajectory.times[k];
        let state = &trajectory.states[k];
        let blocks = state.blocks();
        for i in 0..state.positions().rows() {
            write!(out, "{t},{i}")?;
            for b in &blocks {
                for v in b.row(i) {
                    write!(out, ",{v}")?;
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// First order: `t,diameter,gamma_max`. Second order:
/// `t,diameter,D_X,D_V,gamma_max` (here `diameter` equals `D_X`).
pub fn write_metrics_csv<S: AgentState, W: Write>(
    out: &mut W,
    trajectory: &Trajectory<S>,
    every: usize,
) -> io::Result<()> {
    let second = trajectory.states[0].blocks().len() == 2;
    if second {
        writeln!(out, "t,diameter,D_X,D_V,gamma_max")?;
    } else {
        writeln!(out, "t,diameter,gamma_max")?;
    }
    for k in sampled_indices(trajectory.len(), every) {
        let t = trajectory.times[k];
        let blocks = trajectory.states[k].blocks();
        let dx = diameter(blocks[0]);
        let (gmax, _) = gamma_extrema(blocks[0]);
        if second {
            let dv = diameter(blocks[1]);
            writeln!(out, "{t},{dx},{dx},{dv},{gmax}")?;
        } else {
            writeln!(out, "{t},{dx},{gmax}")?;
        }
    }
    Ok(())
}

/// Columns `t,i,j,integral`: window integrals of every off-diagonal link at
/// the given start times.
pub fn write_window_integrals_csv<W: Write>(
    out: &mut W,
    matrix: &ScheduleMatrix,
    window: f64,
    times: &[f64],
) -> io::Result<()> {
    writeln!(out, "t,i,j,integral")?;
    let n = matrix.size();
    for &t in times {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let v = matrix.get(i, j).window_integral(t, window);
                writeln!(out, "{t},{i},{j},{v}")?;
            }
        }
    }
    Ok(())
}

fn sampled_indices(len: usize, every: usize) -> impl Iterator<Item = usize> {
    let every = every.max(1);
    (0..len).filter(move |&k| k % every == 0 || k + 1 == len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::simulate;
    use crate::model::{AgentMatrix, Condition, InteractionKernel, ScalingMode, SecondOrderState, SystemConfig};

    #[test]
    fn second_order_csv_layout() {
        let cfg = SystemConfig::new(2, 2, ScalingMode::Fixed, Condition::Pe, 1.0, 1.0).unwrap();
        let k = InteractionKernel::constant(1.0).unwrap();
        let m = ScheduleMatrix::constant(2, 1.0).unwrap();
        let x = AgentMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let v = AgentMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let s = SecondOrderState::new(x, v).unwrap();
        let traj = simulate(&cfg, &k, &m, &s, 1.0, 0.25).unwrap();

        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,agent_index,x_1,x_2,v_1,v_2");
        // times 0, 0.5, 1.0 with two agents each
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(lines[1].starts_with("0,0,0,0,0,1"));

        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &traj, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,diameter,D_X,D_V,gamma_max\n0,1,1,1,1\n"));
    }

    #[test]
    fn window_integral_rows() {
        let m = ScheduleMatrix::constant(3, 0.5).unwrap();
        let mut buf = Vec::new();
        write_window_integrals_csv(&mut buf, &m, 2.0, &[0.0, 1.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 6);
        assert!(text.contains("\n1,2,1,1\n"));
    }
}
