//! Communication weights `M_ij(t)`: piecewise-constant periodic signals,
//! exact window integrals, and validators for the persistent-excitation
//! (PE) and integral-scrambling (ISC) conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};

/// Absolute slack, relative to the window length, when comparing a window
/// integral against the required service.
pub const SERVICE_TOLERANCE: f64 = 1e-12;

/// Default validator grid pitch as a fraction of the window length.
pub const DEFAULT_GRID_FRACTION: f64 = 1e-3;

/// A `[0,1]`-valued signal, constant on `[breakpoints[k], breakpoints[k+1])`
/// and on `[breakpoints[last], horizon)`, repeated with period `horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantSignal {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
    // integral over [0, breakpoints[k])
    prefix: Vec<f64>,
    total: f64,
}

impl PiecewiseConstantSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidSignal(format!(
                "need matching non-empty breakpoints/values, got {} and {}",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidSignal(format!(
                "first breakpoint must be 0, got {}",
                breakpoints[0]
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) || breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSignal("breakpoints must be finite and strictly increasing".into()));
        }
        if !(horizon.is_finite() && horizon > *breakpoints.last().unwrap()) {
            return Err(Error::InvalidSignal(format!(
                "horizon {horizon} must exceed the last breakpoint"
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidSignal(format!("value {v} outside [0, 1]")));
        }
        let mut prefix = Vec::with_capacity(breakpoints.len());
        let mut acc = 0.0;
        for k in 0..breakpoints.len() {
            prefix.push(acc);
            let end = breakpoints.get(k + 1).copied().unwrap_or(horizon);
            acc += values[k] * (end - breakpoints[k]);
        }
        Ok(Self { breakpoints, values, horizon, prefix, total: acc })
    }

    /// Constant signal with unit period.
    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![value], 1.0)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Period of the signal.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }

    /// Value of the interval containing `t` (right-open intervals).
    pub fn value_at(&self, t: f64) -> f64 {
        let tau = t.rem_euclid(self.horizon);
        let k = self.breakpoints.partition_point(|&b| b <= tau).max(1) - 1;
        self.values[k]
    }

    /// Integral of the signal over `[0, t]`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let periods = (t / self.horizon).floor();
        let tau = (t - periods * self.horizon).clamp(0.0, self.horizon);
        let k = self.breakpoints.partition_point(|&b| b <= tau).max(1) - 1;
        periods * self.total + self.prefix[k] + self.values[k] * (tau - self.breakpoints[k])
    }

    /// Exact integral over `[t, t + window]`.
    pub fn window_integral(&self, t: f64, window: f64) -> f64 {
        (self.cumulative(t + window) - self.cumulative(t)).clamp(0.0, window)
    }

    /// Times in `(t0, t1)` where the signal value actually changes,
    /// including the wrap from the last interval to the first.
    pub fn switch_times(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if self.is_constant() || t1 <= t0 {
            return out;
        }
        let n = self.values.len();
        // offsets within a period where the value changes
        let offsets: Vec<f64> = (0..n)
            .filter(|&k| {
                let prev = if k == 0 { self.values[n - 1] } else { self.values[k - 1] };
                prev != self.values[k]
            })
            .map(|k| self.breakpoints[k])
            .collect();
        let first_period = (t0 / self.horizon).floor() as i64;
        let last_period = (t1 / self.horizon).ceil() as i64;
        for p in first_period..=last_period {
            let base = p as f64 * self.horizon;
            for &o in &offsets {
                let t = base + o;
                if t > t0 && t < t1 {
                    out.push(t);
                }
            }
        }
        out
    }
}

/// Outcome of a PE check on one signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeReport {
    pub holds: bool,
    pub worst_t: f64,
    pub worst_value: f64,
}

/// Minimizes the window integral over one period.
///
/// The window integral is piecewise linear in `t` with kinks where either
/// window end crosses a breakpoint, so its infimum sits at `t = b` or
/// `t = b - window (mod period)`. The uniform grid is searched as well.
pub fn validate_pe(
    signal: &PiecewiseConstantSignal,
    window: f64,
    service: f64,
    grid_step: f64,
) -> Result<PeReport> {
    require_positive("window", window)?;
    require_positive("grid_step", grid_step)?;
    let period = signal.horizon();
    let mut best = (0.0, signal.window_integral(0.0, window));
    let mut consider = |t: f64| {
        let v = signal.window_integral(t, window);
        if v < best.1 {
            best = (t, v);
        }
    };
    for &b in signal.breakpoints() {
        consider(b);
        consider((b - window).rem_euclid(period));
    }
    let steps = (period / grid_step).ceil() as usize;
    for k in 0..steps {
        consider(k as f64 * grid_step);
    }
    Ok(PeReport {
        holds: best.1 >= service - SERVICE_TOLERANCE * window,
        worst_t: best.0,
        worst_value: best.1,
    })
}

/// `N x N` matrix of link signals with `M_ii == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleMatrix {
    n: usize,
    signals: Vec<PiecewiseConstantSignal>,
}

impl ScheduleMatrix {
    /// All off-diagonal links set to the constant `value`.
    pub fn constant(n: usize, value: f64) -> Result<Self> {
        let off = PiecewiseConstantSignal::constant(value)?;
        let one = PiecewiseConstantSignal::constant(1.0)?;
        let signals = (0..n * n)
            .map(|idx| if idx / n == idx % n { one.clone() } else { off.clone() })
            .collect();
        Ok(Self { n, signals })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &PiecewiseConstantSignal {
        &self.signals[i * self.n + j]
    }

    /// Replaces the off-diagonal link `(i, j)`.
    pub fn set(&mut self, i: usize, j: usize, signal: PiecewiseConstantSignal) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::InvalidSchedule(format!(
                "link ({i}, {j}) out of range for {} agents",
                self.n
            )));
        }
        if i == j {
            return Err(Error::InvalidSchedule(format!(
                "diagonal link ({i}, {i}) is fixed to 1"
            )));
        }
        self.signals[i * self.n + j] = signal;
        Ok(())
    }

    /// Writes `M_ij(t)` row-major into `out` (length `N*N`).
    pub fn weights_at(&self, t: f64, out: &mut [f64]) {
        for (w, s) in out.iter_mut().zip(&self.signals) {
            *w = s.value_at(t);
        }
    }

    /// Sorted, deduplicated switch times of all links in `(t0, t1)`.
    pub fn switch_times(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .signals
            .iter()
            .flat_map(|s| s.switch_times(t0, t1))
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// Relabels agents: entry `(a, b)` of the result is entry
    /// `(perm[a], perm[b])` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let signals = (0..n * n)
            .map(|idx| self.get(perm[idx / n], perm[idx % n]).clone())
            .collect();
        Self { n, signals }
    }

    pub fn from_entries(n: usize, entries: &[ScheduleEntry]) -> Result<Self> {
        let mut m = Self::constant(n, 1.0)?;
        let mut seen = vec![false; n * n];
        for e in entries {
            if e.i < n && e.j < n {
                if seen[e.i * n + e.j] {
                    return Err(Error::InvalidSchedule(format!(
                        "duplicate entry for link ({}, {})",
                        e.i, e.j
                    )));
                }
                seen[e.i * n + e.j] = true;
            }
            let signal =
                PiecewiseConstantSignal::new(e.breakpoints.clone(), e.values.clone(), e.horizon)?;
            m.set(e.i, e.j, signal)?;
        }
        Ok(m)
    }

    /// Every off-diagonal link as a file entry.
    pub fn to_entries(&self) -> Vec<ScheduleEntry> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1));
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    let s = self.get(i, j);
                    out.push(ScheduleEntry {
                        i,
                        j,
                        breakpoints: s.breakpoints.clone(),
                        values: s.values.clone(),
                        horizon: s.horizon,
                    });
                }
            }
        }
        out
    }
}

/// One link in a schedule file (indices are 0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub i: usize,
    pub j: usize,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairWitness {
    pub i: usize,
    pub j: usize,
    /// Agent serving both `i` and `j`, or `None` when no agent does.
    pub hub: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IscReport {
    pub holds: bool,
    pub witnesses: Vec<PairWitness>,
}

/// Checks the ISC condition: every unordered pair `(i, j)` needs one agent
/// `k` (possibly `i` or `j`) with both `M_ik` and `M_jk` satisfying PE.
pub fn validate_isc(
    matrix: &ScheduleMatrix,
    window: f64,
    service: f64,
    grid_step: f64,
) -> Result<IscReport> {
    let n = matrix.size();
    let mut served = vec![true; n * n];
    for i in 0..n {
        for k in 0..n {
            if i != k {
                served[i * n + k] = validate_pe(matrix.get(i, k), window, service, grid_step)?.holds;
            }
        }
    }
    let mut witnesses = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let hub = (0..n).find(|&k| served[i * n + k] && served[j * n + k]);
            witnesses.push(PairWitness { i, j, hub });
        }
    }
    let holds = witnesses.iter().all(|w| w.hub.is_some());
    Ok(IscReport { holds, witnesses })
}

/// True when every off-diagonal link satisfies PE.
pub fn validate_pe_all(
    matrix: &ScheduleMatrix,
    window: f64,
    service: f64,
    grid_step: f64,
) -> Result<Vec<(usize, usize, PeReport)>> {
    let n = matrix.size();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push((i, j, validate_pe(matrix.get(i, j), window, service, grid_step)?));
            }
        }
    }
    Ok(out)
}

/// Period-`window` square wave that is on for `service` time units starting
/// at `duty_phase * window`.
///
/// When `service > window / 2` or the on-block would wrap past the period
/// end, returns the constant `service / window` instead. Both satisfy PE
/// with parameters `(window, service)`.
pub fn gen_square_pe(window: f64, service: f64, duty_phase: f64) -> Result<PiecewiseConstantSignal> {
    require_positive("window", window)?;
    require_positive("service", service)?;
    if service > window {
        return Err(Error::InvalidParameter {
            name: "service",
            reason: format!("{service} exceeds window {window}"),
        });
    }
    if !(0.0..1.0).contains(&duty_phase) {
        return Err(Error::InvalidParameter {
            name: "duty_phase",
            reason: format!("must lie in [0, 1), got {duty_phase}"),
        });
    }
    let start = duty_phase * window;
    let end = start + service;
    if service > 0.5 * window || end > window {
        return PiecewiseConstantSignal::new(vec![0.0], vec![service / window], window);
    }
    let (breakpoints, values) = if start == 0.0 {
        (vec![0.0, end], vec![1.0, 0.0])
    } else if end == window {
        (vec![0.0, start], vec![0.0, 1.0])
    } else {
        (vec![0.0, start, end], vec![0.0, 1.0, 0.0])
    };
    PiecewiseConstantSignal::new(breakpoints, values, window)
}

/// [`gen_square_pe`] with the phase drawn from `seed`.
pub fn gen_square_pe_seeded(window: f64, service: f64, seed: u64) -> Result<PiecewiseConstantSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_square_pe(window, service, rng.gen::<f64>())
}

/// Every off-diagonal link gets its own square PE wave; phases come from
/// `seed` unless `duty_phase` is given.
pub fn gen_pe_matrix(
    n: usize,
    window: f64,
    service: f64,
    duty_phase: Option<f64>,
    seed: u64,
) -> Result<ScheduleMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = ScheduleMatrix::constant(n, 1.0)?;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let phase = duty_phase.unwrap_or_else(|| rng.gen::<f64>());
                m.set(i, j, gen_square_pe(window, service, phase)?)?;
            }
        }
    }
    Ok(m)
}

/// Star topology: links to and from `hub` carry square PE waves with seeded
/// phases, every other off-diagonal link is silent. Satisfies ISC with
/// witness `hub` for every pair.
pub fn gen_isc_star(n: usize, window: f64, service: f64, hub: usize, seed: u64) -> Result<ScheduleMatrix> {
    if hub >= n {
        return Err(Error::InvalidParameter {
            name: "hub",
            reason: format!("hub {hub} out of range for {n} agents"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = ScheduleMatrix::constant(n, 0.0)?;
    for i in (0..n).filter(|&i| i != hub) {
        m.set(i, hub, gen_square_pe(window, service, rng.gen::<f64>())?)?;
        m.set(hub, i, gen_square_pe(window, service, rng.gen::<f64>())?)?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> PiecewiseConstantSignal {
        PiecewiseConstantSignal::new(vec![0.0, 0.5], vec![1.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn window_integral_examples() {
        let one = PiecewiseConstantSignal::constant(1.0).unwrap();
        assert_eq!(one.window_integral(3.0, 2.0), 2.0);
        assert_eq!(square().window_integral(0.0, 1.0), 0.5);
        assert_eq!(square().window_integral(0.25, 1.0), 0.5);
    }

    #[test]
    fn value_at_is_right_open_and_periodic() {
        let s = square();
        assert_eq!(s.value_at(0.0), 1.0);
        assert_eq!(s.value_at(0.5), 0.0);
        assert_eq!(s.value_at(1.25), 1.0);
        assert_eq!(s.value_at(7.75), 0.0);
    }

    #[test]
    fn signal_validation() {
        assert!(PiecewiseConstantSignal::new(vec![0.1], vec![1.0], 1.0).is_err());
        assert!(PiecewiseConstantSignal::new(vec![0.0, 0.0], vec![1.0, 1.0], 1.0).is_err());
        assert!(PiecewiseConstantSignal::new(vec![0.0], vec![1.5], 1.0).is_err());
        assert!(PiecewiseConstantSignal::new(vec![0.0, 1.0], vec![1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn validate_pe_examples() {
        let one = PiecewiseConstantSignal::constant(1.0).unwrap();
        let r = validate_pe(&one, 1.0, 0.9, 1e-3).unwrap();
        assert!(r.holds);
        assert!((r.worst_value - 1.0).abs() < 1e-12);

        let zero = PiecewiseConstantSignal::constant(0.0).unwrap();
        let r = validate_pe(&zero, 1.0, 0.1, 1e-3).unwrap();
        assert!(!r.holds);
        assert_eq!(r.worst_value, 0.0);

        let r = validate_pe(&square(), 1.0, 0.5, 1e-3).unwrap();
        assert!(r.holds);
        assert!((r.worst_value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn validate_pe_finds_gap_between_pulses() {
        // pulses of 0.1 every 2 time units: a window of length 1 can be empty
        let s = PiecewiseConstantSignal::new(vec![0.0, 0.1], vec![1.0, 0.0], 2.0).unwrap();
        let r = validate_pe(&s, 1.0, 0.05, 0.3).unwrap();
        assert!(!r.holds);
        assert_eq!(r.worst_value, 0.0);
    }

    #[test]
    fn isc_examples() {
        let all = ScheduleMatrix::constant(4, 1.0).unwrap();
        assert!(validate_isc(&all, 1.0, 1.0, 1e-3).unwrap().holds);

        let mut star = ScheduleMatrix::constant(3, 1.0).unwrap();
        star.set(0, 1, PiecewiseConstantSignal::constant(0.0).unwrap()).unwrap();
        star.set(1, 0, PiecewiseConstantSignal::constant(0.0).unwrap()).unwrap();
        let r = validate_isc(&star, 1.0, 1.0, 1e-3).unwrap();
        assert!(r.holds);
        let w = r.witnesses.iter().find(|w| (w.i, w.j) == (0, 1)).unwrap();
        assert_eq!(w.hub, Some(2));

        let cut = ScheduleMatrix::constant(2, 0.0).unwrap();
        let r = validate_isc(&cut, 1.0, 0.5, 1e-3).unwrap();
        assert!(!r.holds);
        assert_eq!(r.witnesses, vec![PairWitness { i: 0, j: 1, hub: None }]);
    }

    #[test]
    fn square_generator_examples() {
        let s = gen_square_pe(1.0, 1.0, 0.3).unwrap();
        assert!(s.is_constant());
        assert_eq!(s.values(), &[1.0]);

        let s = gen_square_pe(1.0, 0.25, 0.0).unwrap();
        assert_eq!(s.breakpoints(), &[0.0, 0.25]);
        let r = validate_pe(&s, 1.0, 0.25, 1e-3).unwrap();
        assert!(r.holds);
        assert!((r.worst_value - 0.25).abs() < 1e-12);

        let s = gen_square_pe(2.0, 1.5, 0.0).unwrap();
        assert_eq!(s.values(), &[0.75]);
        assert!(validate_pe(&s, 2.0, 1.5, 2e-3).unwrap().holds);

        assert!(gen_square_pe(1.0, 1.5, 0.0).is_err());
        assert!(gen_square_pe(1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn wrapping_phase_falls_back_to_constant() {
        let s = gen_square_pe(1.0, 0.25, 0.9).unwrap();
        assert_eq!(s.values(), &[0.25]);
    }

    #[test]
    fn star_generator_examples() {
        let m = gen_isc_star(3, 1.0, 1.0, 2, 0).unwrap();
        assert_eq!(m.get(0, 1).values(), &[0.0]);
        assert_eq!(m.get(0, 2).values(), &[1.0]);
        assert_eq!(m.get(2, 1).values(), &[1.0]);
        let r = validate_isc(&m, 1.0, 1.0, 1e-3).unwrap();
        assert!(r.holds);
        assert!(r.witnesses.iter().all(|w| w.hub.is_some()));
        let w = r.witnesses.iter().find(|w| (w.i, w.j) == (0, 1)).unwrap();
        assert_eq!(w.hub, Some(2));

        let m = gen_isc_star(2, 1.0, 1.0, 1, 0).unwrap();
        assert_eq!(m.get(0, 1).values(), &[1.0]);
        assert_eq!(m.get(1, 0).values(), &[1.0]);

        let m = gen_isc_star(5, 1.0, 0.5, 0, 11).unwrap();
        assert!(validate_isc(&m, 1.0, 0.5, 1e-3).unwrap().holds);
        assert!(!validate_pe(m.get(1, 2), 1.0, 0.5, 1e-3).unwrap().holds);
        assert!(gen_isc_star(3, 1.0, 0.5, 3, 0).is_err());
    }

    #[test]
    fn switch_times_skip_constant_links() {
        let m = ScheduleMatrix::constant(3, 0.4).unwrap();
        assert!(m.switch_times(0.0, 10.0).is_empty());
        let s = square();
        assert_eq!(s.switch_times(0.0, 2.0), vec![0.5, 1.0, 1.5]);
    }

    #[test]
    fn entries_round_trip() {
        let m = gen_isc_star(4, 1.0, 0.3, 1, 5).unwrap();
        let back = ScheduleMatrix::from_entries(4, &m.to_entries()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn entries_reject_diagonal_and_duplicates() {
        let e = ScheduleEntry { i: 1, j: 1, breakpoints: vec![0.0], values: vec![1.0], horizon: 1.0 };
        assert!(ScheduleMatrix::from_entries(3, &[e]).is_err());
        let e = ScheduleEntry { i: 0, j: 1, breakpoints: vec![0.0], values: vec![0.5], horizon: 1.0 };
        assert!(ScheduleMatrix::from_entries(3, &[e.clone(), e.clone()]).is_err());
        let far = ScheduleEntry { i: 0, j: 5, ..e };
        assert!(ScheduleMatrix::from_entries(3, &[far]).is_err());
    }
}
