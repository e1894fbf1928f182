//! Domain types: interaction kernels, scalings, system configuration and
//! agent states.
//!
//! Under normalized scaling the weight of agent `i` is
//! `lambda_i = N / sum_j phi(|x_i - x_j|)`, where the sum runs over all `j`
//! including `j = i` (which contributes `phi(0)`).

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};

/// Shape of the influence function `phi`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// `phi(r) = c`.
    Constant { c: f64 },
    /// `phi(r) = c / (1 + r)^beta`.
    PowerLaw { c: f64, beta: f64 },
    /// Linear interpolation through `(breakpoints[k], values[k])`, clamped
    /// to the end values outside the table.
    Tabulated { breakpoints: Vec<f64>, values: Vec<f64> },
}

/// A positive interaction kernel `phi: [0, inf) -> (0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpec", into = "KernelSpec")]
pub struct InteractionKernel {
    family: KernelFamily,
    lipschitz_hint: Option<f64>,
}

impl InteractionKernel {
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(KernelFamily::Constant { c }, None)
    }

    pub fn power_law(c: f64, beta: f64) -> Result<Self> {
        Self::new(KernelFamily::PowerLaw { c, beta }, None)
    }

    pub fn tabulated(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(KernelFamily::Tabulated { breakpoints, values }, None)
    }

    pub fn new(family: KernelFamily, lipschitz_hint: Option<f64>) -> Result<Self> {
        match &family {
            KernelFamily::Constant { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(Error::InvalidKernel(format!("constant c must be > 0, got {c}")));
                }
            }
            KernelFamily::PowerLaw { c, beta } => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(Error::InvalidKernel(format!("power-law c must be > 0, got {c}")));
                }
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(Error::InvalidKernel(format!(
                        "power-law beta must be >= 0, got {beta}"
                    )));
                }
            }
            KernelFamily::Tabulated { breakpoints, values } => {
                if breakpoints.is_empty() || breakpoints.len() != values.len() {
                    return Err(Error::InvalidKernel(format!(
                        "tabulated kernel needs matching non-empty tables, got {} breakpoints and {} values",
                        breakpoints.len(),
                        values.len()
                    )));
                }
                if breakpoints.iter().any(|b| !b.is_finite() || *b < 0.0) {
                    return Err(Error::InvalidKernel(
                        "tabulated breakpoints must be finite and >= 0".into(),
                    ));
                }
                if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidKernel(
                        "tabulated breakpoints must be strictly increasing".into(),
                    ));
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidKernel(
                        "tabulated values must be finite and strictly positive".into(),
                    ));
                }
            }
        }
        if let Some(l) = lipschitz_hint {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::InvalidKernel(format!(
                    "lipschitz_hint must be a nonnegative real, got {l}"
                )));
            }
        }
        Ok(Self { family, lipschitz_hint })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    /// Advisory only; never checked.
    pub fn lipschitz_hint(&self) -> Option<f64> {
        self.lipschitz_hint
    }

    /// Evaluates `phi(r)`, rejecting negative distances.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::InvalidParameter {
                name: "r",
                reason: format!("distance must be >= 0, got {r}"),
            });
        }
        Ok(self.value(r))
    }

    /// `phi(r)` for a distance already known to be nonnegative.
    #[inline]
    pub(crate) fn value(&self, r: f64) -> f64 {
        match &self.family {
            KernelFamily::Constant { c } => *c,
            KernelFamily::PowerLaw { c, beta } => {
                if *beta == 0.0 {
                    *c
                } else if *beta == 1.0 {
                    *c / (1.0 + r)
                } else {
                    *c / (1.0 + r).powf(*beta)
                }
            }
            KernelFamily::Tabulated { breakpoints, values } => {
                interpolate(breakpoints, values, r)
            }
        }
    }

    /// `phi(0)`.
    pub fn at_origin(&self) -> f64 {
        self.value(0.0)
    }

    /// True when `phi` never increases with distance.
    pub fn is_nonincreasing(&self) -> bool {
        match &self.family {
            KernelFamily::Constant { .. } | KernelFamily::PowerLaw { .. } => true,
            KernelFamily::Tabulated { values, .. } => values.windows(2).all(|w| w[1] <= w[0]),
        }
    }

    /// Exact extrema of `phi` over `[0, diameter0]`, plus the scaled bounds
    /// `K_min`, `K_max`.
    pub fn bounds(&self, scaling: ScalingMode, diameter0: f64) -> Result<KernelBounds> {
        if !(diameter0.is_finite() && diameter0 >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "diameter0",
                reason: format!("must be finite and >= 0, got {diameter0}"),
            });
        }
        let (phi_min, phi_max) = match &self.family {
            KernelFamily::Constant { c } => (*c, *c),
            KernelFamily::PowerLaw { .. } => (self.value(diameter0), self.value(0.0)),
            KernelFamily::Tabulated { breakpoints, .. } => {
                let mut lo = self.value(0.0).min(self.value(diameter0));
                let mut hi = self.value(0.0).max(self.value(diameter0));
                for &b in breakpoints.iter().filter(|&&b| b <= diameter0) {
                    let v = self.value(b);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        };
        Ok(KernelBounds::from_extrema(phi_min, phi_max, scaling))
    }
}

fn interpolate(xs: &[f64], ys: &[f64], r: f64) -> f64 {
    let last = xs.len() - 1;
    if r <= xs[0] {
        return ys[0];
    }
    if r >= xs[last] {
        return ys[last];
    }
    // first index with xs[k] > r; 1 <= k <= last
    let k = xs.partition_point(|&x| x <= r);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let (y0, y1) = (ys[k - 1], ys[k]);
    let s = (r - x0) / (x1 - x0);
    y0 + s * (y1 - y0)
}

/// Wire form of a kernel in experiment configs, e.g.
/// `{"family":"powerlaw","c":1.0,"beta":1.0}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    Constant {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz_hint: Option<f64>,
    },
    #[serde(alias = "power_law")]
    PowerLaw {
        c: f64,
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz_hint: Option<f64>,
    },
    Tabulated {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz_hint: Option<f64>,
    },
}

impl TryFrom<KernelSpec> for InteractionKernel {
    type Error = Error;

    fn try_from(spec: KernelSpec) -> Result<Self> {
        match spec {
            KernelSpec::Constant { c, lipschitz_hint } => {
                Self::new(KernelFamily::Constant { c }, lipschitz_hint)
            }
            KernelSpec::PowerLaw { c, beta, lipschitz_hint } => {
                Self::new(KernelFamily::PowerLaw { c, beta }, lipschitz_hint)
            }
            KernelSpec::Tabulated { breakpoints, values, lipschitz_hint } => {
                Self::new(KernelFamily::Tabulated { breakpoints, values }, lipschitz_hint)
            }
        }
    }
}

impl From<InteractionKernel> for KernelSpec {
    fn from(k: InteractionKernel) -> Self {
        let lipschitz_hint = k.lipschitz_hint;
        match k.family {
            KernelFamily::Constant { c } => KernelSpec::Constant { c, lipschitz_hint },
            KernelFamily::PowerLaw { c, beta } => KernelSpec::PowerLaw { c, beta, lipschitz_hint },
            KernelFamily::Tabulated { breakpoints, values } => {
                KernelSpec::Tabulated { breakpoints, values, lipschitz_hint }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingMode {
    /// `lambda_i = 1`.
    Fixed,
    /// `lambda_i = N / sum_j phi_ij`.
    Normalized,
}

/// Which minimum-service condition the communication weights satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Persistent excitation on every link.
    Pe,
    /// Integral scrambling: every pair shares a well-served third agent.
    Isc,
}

impl Condition {
    /// Exponent multiplier in the contraction factor: 1 for PE, 2 for ISC.
    pub fn eta(self) -> u8 {
        match self {
            Condition::Pe => 1,
            Condition::Isc => 2,
        }
    }
}

/// Extrema of `phi` over the initial diameter and the derived `K_min`, `K_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelBounds {
    pub phi_min: f64,
    pub phi_max: f64,
    pub k_min: f64,
    pub k_max: f64,
}

impl KernelBounds {
    pub fn from_extrema(phi_min: f64, phi_max: f64, scaling: ScalingMode) -> Self {
        let (k_min, k_max) = match scaling {
            ScalingMode::Fixed => (phi_min, phi_max),
            ScalingMode::Normalized => (phi_min / phi_max, phi_max / phi_min),
        };
        Self { phi_min, phi_max, k_min, k_max }
    }
}

/// Free-function form of [`InteractionKernel::eval`].
pub fn phi_eval(kernel: &InteractionKernel, r: f64) -> Result<f64> {
    kernel.eval(r)
}

/// Free-function form of [`InteractionKernel::bounds`].
pub fn kernel_bounds(
    kernel: &InteractionKernel,
    scaling: ScalingMode,
    diameter0: f64,
) -> Result<KernelBounds> {
    kernel.bounds(scaling, diameter0)
}

/// Per-agent scaling weights `lambda_i` at the given positions.
pub fn lambda_weights(
    kernel: &InteractionKernel,
    scaling: ScalingMode,
    positions: &AgentMatrix,
) -> Vec<f64> {
    let n = positions.rows();
    match scaling {
        ScalingMode::Fixed => vec![1.0; n],
        ScalingMode::Normalized => (0..n)
            .map(|i| {
                let total: f64 = (0..n)
                    .map(|j| kernel.value(positions.distance(i, j)))
                    .sum();
                n as f64 / total
            })
            .collect(),
    }
}

/// Parameters of an interacting system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystemConfig")]
pub struct SystemConfig {
    pub n_agents: usize,
    pub dim: usize,
    pub scaling: ScalingMode,
    pub condition: Condition,
    /// Window length `T`.
    pub window: f64,
    /// Minimum service `mu` per window.
    pub service: f64,
}

#[derive(Deserialize)]
struct RawSystemConfig {
    n_agents: usize,
    dim: usize,
    scaling: ScalingMode,
    condition: Condition,
    window: f64,
    service: f64,
}

impl TryFrom<RawSystemConfig> for SystemConfig {
    type Error = Error;

    fn try_from(r: RawSystemConfig) -> Result<Self> {
        SystemConfig::new(r.n_agents, r.dim, r.scaling, r.condition, r.window, r.service)
    }
}

impl SystemConfig {
    pub fn new(
        n_agents: usize,
        dim: usize,
        scaling: ScalingMode,
        condition: Condition,
        window: f64,
        service: f64,
    ) -> Result<Self> {
        if n_agents < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 agents, got {n_agents}")));
        }
        if dim < 1 {
            return Err(Error::InvalidConfig("dimension must be >= 1".into()));
        }
        require_positive("window", window)?;
        require_positive("service", service)?;
        if service > window {
            return Err(Error::InvalidConfig(format!(
                "service {service} exceeds window {window}"
            )));
        }
        Ok(Self { n_agents, dim, scaling, condition, window, service })
    }
}

/// Row-major `N x d` matrix of agent coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl AgentMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{cols} = {} entries", rows * cols),
                actual: format!("{} entries", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if cols == 0 {
            return Err(Error::ShapeMismatch {
                expected: "at least one non-empty row".into(),
                actual: format!("{} rows", rows.len()),
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch {
                expected: format!("rows of length {cols}"),
                actual: format!("row of length {}", bad.len()),
            });
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Euclidean distance between rows `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Reorders rows so that row `k` of the result is row `perm[k]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, self.cols);
        for (k, &src) in perm.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(src));
        }
        out
    }

    /// Adds `offset` to every row.
    pub fn translate(&self, offset: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            for (v, o) in out.row_mut(i).iter_mut().zip(offset) {
                *v += o;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Positions only.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderState {
    pub positions: AgentMatrix,
}

/// Positions and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderState {
    pub positions: AgentMatrix,
    pub velocities: AgentMatrix,
}

impl FirstOrderState {
    pub fn new(positions: AgentMatrix) -> Result<Self> {
        if !positions.is_finite() {
            return Err(Error::InvalidConfig("positions must be finite".into()));
        }
        Ok(Self { positions })
    }
}

impl SecondOrderState {
    pub fn new(positions: AgentMatrix, velocities: AgentMatrix) -> Result<Self> {
        if positions.rows() != velocities.rows() || positions.cols() != velocities.cols() {
            return Err(Error::ShapeMismatch {
                expected: format!("velocities {}x{}", positions.rows(), positions.cols()),
                actual: format!("{}x{}", velocities.rows(), velocities.cols()),
            });
        }
        if !positions.is_finite() || !velocities.is_finite() {
            return Err(Error::InvalidConfig("state must be finite".into()));
        }
        Ok(Self { positions, velocities })
    }
}
