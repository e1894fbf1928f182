//! Closed-form guarantees: contraction coefficients, barrier envelopes,
//! the geometric diameter bound, and the velocity-diameter estimate with
//! the flocking criterion built on it.
//!
//! `f` below is the per-window velocity contraction factor written as a
//! function of `y = phi_min`:
//!
//! ```text
//! f(y) = exp(-theta1 * p * T) * mu * y / (theta2 + 2 * mu * y)
//! ```
//!
//! with `p = phi(0)` and `(theta1, theta2)` chosen per condition and
//! scaling (see [`FCaseKind`]). For the PE cases this coincides with
//! `exp(-K_max T) * gamma_tilde`. For the ISC cases the implemented `f` is
//! smaller than `exp(-2 K_max T) * gamma_tilde` (an extra `exp(pT)` factor
//! in `theta2`), which keeps it a valid contraction factor;
//! [`derived_factor`] exposes the larger value for comparison.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::model::{Condition, InteractionKernel, KernelFamily, ScalingMode};
use crate::quadrature::adaptive_simpson;

/// Relative tolerance used for every quadrature in this module.
pub const QUADRATURE_REL_TOL: f64 = 1e-10;

/// Upper integration limit beyond which tail doubling stops.
pub const TAIL_LIMIT: f64 = 1e9;

/// Relative mass below which an extra doubling counts as converged.
pub const TAIL_REL_MASS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionCoefficients {
    pub condition: Condition,
    pub gamma_tilde: f64,
    /// Barrier offset `gamma'` per unit of initial spread.
    pub gamma_prime_per_unit: f64,
    pub eta: u8,
    /// Guaranteed fractional diameter shrinkage per window.
    pub gamma: f64,
}

fn check_rate_params(n: usize, window: f64, service: f64, k_min: f64, k_max: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "n", reason: "must be >= 1".into() });
    }
    require_positive("window", window)?;
    require_positive("service", service)?;
    require_positive("k_min", k_min)?;
    require_positive("k_max", k_max)?;
    if service > window {
        return Err(Error::InvalidParameter {
            name: "service",
            reason: format!("{service} exceeds window {window}"),
        });
    }
    Ok(())
}

/// Barrier gap `gamma_tilde` for the two conditions:
///
/// * PE: `mu K_min / (N (1 + K_max T) + 2 mu K_min)`
/// * ISC: `mu K_min / (2 (N (1 + K_max T) + mu K_min))`
pub fn gamma_tilde(
    condition: Condition,
    n: usize,
    window: f64,
    service: f64,
    k_min: f64,
    k_max: f64,
) -> Result<f64> {
    check_rate_params(n, window, service, k_min, k_max)?;
    let base = n as f64 * (1.0 + k_max * window);
    let served = service * k_min;
    Ok(match condition {
        Condition::Pe => served / (base + 2.0 * served),
        Condition::Isc => served / (2.0 * (base + served)),
    })
}

pub fn contraction_factor(
    condition: Condition,
    n: usize,
    window: f64,
    service: f64,
    k_min: f64,
    k_max: f64,
) -> Result<ContractionCoefficients> {
    let gt = gamma_tilde(condition, n, window, service, k_min, k_max)?;
    let decay = (-k_max * window).exp();
    let eta = condition.eta();
    let gamma_prime_per_unit = match condition {
        Condition::Pe => gt,
        Condition::Isc => decay * gt,
    };
    Ok(ContractionCoefficients {
        condition,
        gamma_tilde: gt,
        gamma_prime_per_unit,
        eta,
        gamma: (-(eta as f64) * k_max * window).exp() * gt,
    })
}

/// `(1 - gamma)^n * diameter0`.
pub fn rate_bound(coefficients: &ContractionCoefficients, diameter0: f64, n: u32) -> f64 {
    (1.0 - coefficients.gamma).powi(n as i32) * diameter0
}

/// Bounds for windows `0..=count`.
pub fn rate_sequence(coefficients: &ContractionCoefficients, diameter0: f64, count: u32) -> Vec<f64> {
    (0..=count).map(|n| rate_bound(coefficients, diameter0, n)).collect()
}

/// Lower barrier `alpha + exp(-K_max tau) (z - alpha)`.
pub fn psi_left(alpha: f64, z: f64, tau: f64, k_max: f64) -> f64 {
    alpha + (-k_max * tau).exp() * (z - alpha)
}

/// Upper barrier `beta - exp(-K_max tau) (beta - z)`.
pub fn psi_right(beta: f64, z: f64, tau: f64, k_max: f64) -> f64 {
    beta - (-k_max * tau).exp() * (beta - z)
}

/// PE-with-full-service pipeline (`mu = T`), i.e. links always on.
pub fn full_service_factor(n: usize, window: f64, k_min: f64, k_max: f64) -> Result<ContractionCoefficients> {
    contraction_factor(Condition::Pe, n, window, window, k_min, k_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FCaseKind {
    PeFixed,
    PeNormalized,
    IscFixed,
    IscNormalized,
}

impl FCaseKind {
    pub fn new(condition: Condition, scaling: ScalingMode) -> Self {
        match (condition, scaling) {
            (Condition::Pe, ScalingMode::Fixed) => FCaseKind::PeFixed,
            (Condition::Pe, ScalingMode::Normalized) => FCaseKind::PeNormalized,
            (Condition::Isc, ScalingMode::Fixed) => FCaseKind::IscFixed,
            (Condition::Isc, ScalingMode::Normalized) => FCaseKind::IscNormalized,
        }
    }

    pub fn condition(self) -> Condition {
        match self {
            FCaseKind::PeFixed | FCaseKind::PeNormalized => Condition::Pe,
            FCaseKind::IscFixed | FCaseKind::IscNormalized => Condition::Isc,
        }
    }

    pub fn scaling(self) -> ScalingMode {
        match self {
            FCaseKind::PeFixed | FCaseKind::IscFixed => ScalingMode::Fixed,
            FCaseKind::PeNormalized | FCaseKind::IscNormalized => ScalingMode::Normalized,
        }
    }
}

/// Parameters of the velocity contraction function `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FCase {
    pub kind: FCaseKind,
    /// `phi(0)`.
    pub p: f64,
    pub n_agents: usize,
    pub window: f64,
    pub service: f64,
}

impl FCase {
    pub fn new(kind: FCaseKind, p: f64, n_agents: usize, window: f64, service: f64) -> Result<Self> {
        require_positive("p", p)?;
        check_rate_params(n_agents, window, service, 1.0, 1.0)?;
        Ok(Self { kind, p, n_agents, window, service })
    }

    pub fn for_kernel(
        kind: FCaseKind,
        kernel: &InteractionKernel,
        n_agents: usize,
        window: f64,
        service: f64,
    ) -> Result<Self> {
        Self::new(kind, kernel.at_origin(), n_agents, window, service)
    }

    /// `(theta1, theta2)` at `y`.
    pub fn thetas(&self, y: f64) -> (f64, f64) {
        let n = self.n_agents as f64;
        let (p, t) = (self.p, self.window);
        match self.kind {
            FCaseKind::PeFixed => (1.0, n * (1.0 + t * p)),
            FCaseKind::PeNormalized => (1.0 / y, n * p + n * t * p * p / y),
            FCaseKind::IscFixed => (2.0, 2.0 * n * (p * t).exp() * (1.0 + t * p)),
            FCaseKind::IscNormalized => {
                (2.0 / y, 2.0 * n * (p * t / y).exp() * (1.0 + t * p / y))
            }
        }
    }
}

fn check_y(y: f64) -> Result<()> {
    if y.is_finite() && y > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "y", reason: format!("must be > 0, got {y}") })
    }
}

/// `f(y) = exp(-theta1 p T) mu y / (theta2 + 2 mu y)`.
pub fn f_eval(case: &FCase, y: f64) -> Result<f64> {
    check_y(y)?;
    Ok(f_value(case, y))
}

fn f_value(case: &FCase, y: f64) -> f64 {
    let (theta1, theta2) = case.thetas(y);
    let num = (-theta1 * case.p * case.window).exp() * case.service * y;
    let v = num / (theta2 + 2.0 * case.service * y);
    if v.is_nan() {
        0.0
    } else {
        v
    }
}

/// `exp(-eta K_max T) * gamma_tilde` with `phi_min = y` and `phi_max = p`.
pub fn derived_factor(case: &FCase, y: f64) -> Result<f64> {
    check_y(y)?;
    let bounds = crate::model::KernelBounds::from_extrema(y, case.p, case.kind.scaling());
    Ok(contraction_factor(
        case.kind.condition(),
        case.n_agents,
        case.window,
        case.service,
        bounds.k_min,
        bounds.k_max,
    )?
    .gamma)
}

/// `(1/T) * integral_a^b f(phi(x)) dx`, signed.
pub fn f_phi_integral(case: &FCase, kernel: &InteractionKernel, a: f64, b: f64) -> f64 {
    adaptive_simpson(|x| f_value(case, kernel.value(x.max(0.0))), a, b, QUADRATURE_REL_TOL)
        / case.window
}

/// Upper bound on `D_V(nT)` from the initial diameters and the diameters
/// at `nT`:
/// `D_V(0) - (1/T) * integral from D_X(0)+T D_V(0) to D_X(nT)+T D_V(nT) of f(phi(x)) dx`.
pub fn dv_bound(
    case: &FCase,
    kernel: &InteractionKernel,
    dx0: f64,
    dv0: f64,
    dxn: f64,
    dvn: f64,
) -> f64 {
    let a = dx0 + case.window * dv0;
    let b = dxn + case.window * dvn;
    dv0 - f_phi_integral(case, kernel, a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailClass {
    Divergent,
    Convergent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlockingVerdict {
    pub guaranteed: bool,
    /// `+inf` when the tail diverges.
    #[serde(with = "extended_f64")]
    pub integral_value: f64,
    pub classification: TailClass,
}

/// Tail behaviour of `f(phi(x))` as `x -> inf`.
pub fn classify_tail(kind: FCaseKind, kernel: &InteractionKernel) -> TailClass {
    match kernel.family() {
        KernelFamily::Constant { .. } => TailClass::Divergent,
        KernelFamily::PowerLaw { beta, .. } => match kind.scaling() {
            // f(y) ~ C y near 0: diverges iff phi is not integrable
            ScalingMode::Fixed if *beta <= 1.0 => TailClass::Divergent,
            // f(y) ~ C exp(-2pT/y) y^2 near 0: only a flat kernel survives
            ScalingMode::Normalized if *beta == 0.0 => TailClass::Divergent,
            _ => TailClass::Convergent,
        },
        KernelFamily::Tabulated { .. } => TailClass::Inconclusive,
    }
}

/// Sufficient flocking test: `D_V(0) < (1/T) * integral_{D_X(0)+T D_V(0)}^inf f(phi(x)) dx`.
pub fn flocking_check(case: &FCase, kernel: &InteractionKernel, dx0: f64, dv0: f64) -> Result<FlockingVerdict> {
    if !kernel.is_nonincreasing() {
        return Err(Error::InvalidKernel("flocking criterion needs a non-increasing kernel".into()));
    }
    let classification = classify_tail(case.kind, kernel);
    if classification == TailClass::Divergent {
        return Ok(FlockingVerdict { guaranteed: true, integral_value: f64::INFINITY, classification });
    }
    let integral_value = tail_integral(case, kernel, dx0 + case.window * dv0);
    Ok(FlockingVerdict { guaranteed: dv0 < integral_value, integral_value, classification })
}

/// `(1/T) * integral_a^U f(phi(x)) dx` with `U` doubled from `2(a + 1)`
/// until a doubling adds negligible mass or `U` passes [`TAIL_LIMIT`].
pub fn tail_integral(case: &FCase, kernel: &InteractionKernel, a: f64) -> f64 {
    let mut upper = 2.0 * (a + 1.0);
    let mut total = f_phi_integral(case, kernel, a, upper);
    while upper <= TAIL_LIMIT {
        let add = f_phi_integral(case, kernel, upper, 2.0 * upper);
        total += add;
        upper *= 2.0;
        if add <= TAIL_REL_MASS * total {
            break;
        }
    }
    total
}

/// Smallest `U >= a` with `(1/T) * integral_a^U f(phi(x)) dx >= dv0`, where
/// `a = dx0 + T dv0`. When it exists, `D_X(t) <= U` for all `t >= 0`.
pub fn flocking_radius(case: &FCase, kernel: &InteractionKernel, dx0: f64, dv0: f64) -> Option<f64> {
    let a = dx0 + case.window * dv0;
    if dv0 <= 0.0 {
        return Some(a);
    }
    let mut lo = a;
    let mut lo_mass = 0.0;
    let mut hi = 2.0 * (a + 1.0);
    loop {
        let mass = lo_mass + f_phi_integral(case, kernel, lo, hi);
        if mass >= dv0 {
            break;
        }
        if hi > TAIL_LIMIT {
            return None;
        }
        lo = hi;
        lo_mass = mass;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let mass = lo_mass + f_phi_integral(case, kernel, lo, mid);
        if mass >= dv0 {
            hi = mid;
        } else {
            lo = mid;
            lo_mass = mass;
        }
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Some(hi)
}

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`.
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float `{other}`"))),
            },
        }
    }
}
