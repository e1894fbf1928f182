#![allow(dead_code)]

use flockcert::model::{
    AgentMatrix, Condition, FirstOrderState, InteractionKernel, ScalingMode, SecondOrderState, SystemConfig,
};
use flockcert::schedule::{PiecewiseConstantSignal, ScheduleMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, lo: f64, hi: f64) -> AgentMatrix {
    let data = (0..n * d).map(|_| rng.gen_range(lo..hi)).collect();
    AgentMatrix::from_flat(n, d, data).unwrap()
}

/// Random kernel from the three families; tabulated tables may be non-monotone.
pub fn random_kernel(rng: &mut ChaCha8Rng) -> InteractionKernel {
    match rng.gen_range(0..3) {
        0 => InteractionKernel::constant(rng.gen_range(0.2..2.0)).unwrap(),
        1 => InteractionKernel::power_law(rng.gen_range(0.2..2.0), rng.gen_range(0.0..2.5)).unwrap(),
        _ => {
            let k = rng.gen_range(2..6);
            let mut x = 0.0;
            let mut bps = Vec::new();
            for _ in 0..k {
                bps.push(x);
                x += rng.gen_range(0.1..1.0);
            }
            let vals = (0..k).map(|_| rng.gen_range(0.1..2.0)).collect();
            InteractionKernel::tabulated(bps, vals).unwrap()
        }
    }
}

pub fn random_signal(rng: &mut ChaCha8Rng) -> PiecewiseConstantSignal {
    let period = rng.gen_range(0.3..3.0);
    let k = rng.gen_range(1..5);
    let mut cuts: Vec<f64> = (1..k).map(|_| rng.gen_range(0.0..period)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    let mut bps = vec![0.0];
    bps.extend(cuts.into_iter().filter(|&c| c > 1e-6 && c < period - 1e-6));
    let vals = bps.iter().map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..=1.0) }).collect();
    PiecewiseConstantSignal::new(bps, vals, period).unwrap()
}

pub fn random_schedule(rng: &mut ChaCha8Rng, n: usize) -> ScheduleMatrix {
    let mut m = ScheduleMatrix::constant(n, 1.0).unwrap();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m.set(i, j, random_signal(rng)).unwrap();
            }
        }
    }
    m
}

pub fn random_scaling(rng: &mut ChaCha8Rng) -> ScalingMode {
    if rng.gen_bool(0.5) {
        ScalingMode::Fixed
    } else {
        ScalingMode::Normalized
    }
}

pub fn config(n: usize, d: usize, scaling: ScalingMode, condition: Condition, t: f64, mu: f64) -> SystemConfig {
    SystemConfig::new(n, d, scaling, condition, t, mu).unwrap()
}

pub fn first(x: AgentMatrix) -> FirstOrderState {
    FirstOrderState::new(x).unwrap()
}

pub fn second(x: AgentMatrix, v: AgentMatrix) -> SecondOrderState {
    SecondOrderState::new(x, v).unwrap()
}

/// Largest single-step increase of a series.
pub fn max_increase(series: &[f64]) -> f64 {
    series.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}
