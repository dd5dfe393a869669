//! Comparison functions, entropy functionals and displacement-convexity classes.
//!
//! `s_{K,N}` solves `s'' + K/(N-1) s = 0` with `s(0) = 0`, `s'(0) = 1`, and the
//! distortion coefficient `β^t_{K,N}(r) = (s(tr) / (t s(r)))^{N-1}` (or
//! `exp(K (1 - t²) r² / 6)` when `N = ∞`) is the volume distortion every
//! curvature-dimension inequality is weighted by.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::space::FiniteMetricMeasureSpace;
use crate::transport::ProbabilityVector;

/// Below this curvature magnitude `s_{K,N}` is evaluated by its Taylor series.
const SERIES_K_THRESHOLD: f64 = 1e-12;

/// Upper bound on the dimension parameter, `∞` allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dimension {
    Finite(f64),
    Infinite,
}

impl Dimension {
    pub fn is_infinite(self) -> bool {
        matches!(self, Dimension::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Dimension::Finite(n) => Some(n),
            Dimension::Infinite => None,
        }
    }

    /// The shifted dimension `N + 1` used by the reduced condition.
    pub fn plus_one(self) -> Dimension {
        match self {
            Dimension::Finite(n) => Dimension::Finite(n + 1.0),
            Dimension::Infinite => Dimension::Infinite,
        }
    }

    /// Total order with `∞` on top.
    pub fn le(self, other: Dimension) -> bool {
        match (self, other) {
            (_, Dimension::Infinite) => true,
            (Dimension::Infinite, Dimension::Finite(_)) => false,
            (Dimension::Finite(a), Dimension::Finite(b)) => a <= b,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dimension::Finite(n) => write!(f, "{n}"),
            Dimension::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" | "∞" => Ok(Dimension::Infinite),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("not a dimension: {s:?}")))
                .and_then(|n| {
                    if n.is_infinite() && n > 0.0 {
                        Ok(Dimension::Infinite)
                    } else if n.is_finite() {
                        Ok(Dimension::Finite(n))
                    } else {
                        Err(Error::InvalidInput(format!("not a dimension: {s:?}")))
                    }
                }),
        }
    }
}

impl Serialize for Dimension {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Dimension::Finite(n) => serializer.serialize_f64(*n),
            Dimension::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Dimension {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(n) => Ok(Dimension::Finite(n)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Curvature lower bound `K` and dimension upper bound `N`.
///
/// `N > 1` is required, except for the flat degenerate pair `K = 0, N = 1`
/// where `s(r) = r` and every distortion coefficient is identically 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonParams {
    pub k: f64,
    pub n: Dimension,
}

impl ComparisonParams {
    pub fn new(k: f64, n: Dimension) -> Result<Self> {
        if !k.is_finite() {
            return Err(Error::InvalidInput(format!("K must be finite, got {k}")));
        }
        if let Dimension::Finite(n) = n {
            if !n.is_finite() || n < 1.0 || (n == 1.0 && k != 0.0) {
                return Err(Error::InvalidInput(format!(
                    "N must exceed 1 (N = 1 only with K = 0), got K = {k}, N = {n}"
                )));
            }
        }
        Ok(Self { k, n })
    }

    pub fn finite(k: f64, n: f64) -> Result<Self> {
        Self::new(k, Dimension::Finite(n))
    }

    pub fn infinite(k: f64) -> Result<Self> {
        Self::new(k, Dimension::Infinite)
    }

    /// `K / (N - 1)`, zero for the flat pair `N = 1`.
    fn kappa(&self, n: f64) -> f64 {
        if self.k == 0.0 {
            0.0
        } else {
            self.k / (n - 1.0)
        }
    }
}

/// `π √((N-1)/K)` when `K > 0` and `N < ∞`, otherwise `+∞`.
pub fn domain_limit(params: ComparisonParams) -> f64 {
    match params.n {
        Dimension::Finite(n) if params.k > 0.0 => PI * ((n - 1.0) / params.k).sqrt(),
        _ => f64::INFINITY,
    }
}

/// `s_{K,N}(r)`.
pub fn comparison_s(params: ComparisonParams, r: f64) -> Result<f64> {
    let n = params
        .n
        .finite()
        .ok_or_else(|| Error::Domain("s_{K,N} is undefined for N = ∞".into()))?;
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("s_{{K,N}} needs r >= 0, got {r}")));
    }
    let limit = domain_limit(params);
    if r >= limit {
        return Err(Error::Domain(format!(
            "r = {r} is outside the domain [0, {limit}) of s_{{K,N}} for K = {}, N = {n}",
            params.k
        )));
    }
    Ok(s_unchecked(params.kappa(n), params.k, r))
}

fn s_unchecked(kappa: f64, k: f64, r: f64) -> f64 {
    if k == 0.0 {
        return r;
    }
    let x = kappa * r * r;
    if k.abs() < SERIES_K_THRESHOLD && x.abs() < 1e-2 {
        // r (1 - x/6 + x²/120 - x³/5040)
        return r * (1.0 - x / 6.0 * (1.0 - x / 20.0 * (1.0 - x / 42.0)));
    }
    if kappa > 0.0 {
        let root = kappa.sqrt();
        (r * root).sin() / root
    } else {
        let root = (-kappa).sqrt();
        (r * root).sinh() / root
    }
}

/// `β^t_{K,N}(r)`, continuously extended by 1 at `r = 0`.
pub fn comparison_beta(params: ComparisonParams, t: f64, r: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("β^t needs t in (0, 1), got {t}")));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("β^t needs r >= 0, got {r}")));
    }
    match params.n {
        Dimension::Infinite => Ok((params.k * (1.0 - t * t) * r * r / 6.0).exp()),
        Dimension::Finite(n) => {
            let limit = domain_limit(params);
            if r >= limit {
                return Err(Error::Domain(format!(
                    "r = {r} is outside the domain [0, {limit}) of β for K = {}, N = {n}",
                    params.k
                )));
            }
            if r == 0.0 || params.k == 0.0 {
                return Ok(1.0);
            }
            let kappa = params.kappa(n);
            let ratio = s_unchecked(kappa, params.k, t * r) / (t * s_unchecked(kappa, params.k, r));
            Ok(ratio.powf(n - 1.0))
        }
    }
}

/// `∫₀^r s_{K,N}(τ)^{N-1} dτ`, the volume of a model ball of radius `r`.
pub fn model_volume_integral(params: ComparisonParams, r: f64) -> Result<f64> {
    let n = params
        .n
        .finite()
        .ok_or_else(|| Error::Domain("model volume is undefined for N = ∞".into()))?;
    let limit = domain_limit(params);
    if !(r >= 0.0) || r > limit {
        return Err(Error::Domain(format!(
            "radius {r} is outside [0, {limit}] for K = {}, N = {n}",
            params.k
        )));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    if params.k == 0.0 {
        return Ok(r.powf(n) / n);
    }
    let kappa = params.kappa(n);
    let k = params.k;
    Ok(tanh_sinh(
        |tau| s_unchecked(kappa, k, tau).max(0.0).powf(n - 1.0),
        0.0,
        r,
        1e-13,
    ))
}

/// Double-exponential quadrature on `[a, b]`; tolerant of algebraic endpoint
/// singularities, which appear in `s^{N-1}` for `N < 2` and at the cutoff.
fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = a + half;
    // Contribution of the abscissae ±u(τ) for τ > 0, with 1 - u computed directly.
    let pair = |tau: f64| -> f64 {
        let w = 0.5 * PI * tau.sinh();
        let one_minus_u = 2.0 / ((2.0 * w).exp() + 1.0);
        let weight = 0.5 * PI * tau.cosh() / w.cosh().powi(2);
        if weight == 0.0 || !weight.is_finite() {
            return 0.0;
        }
        let dx = half * one_minus_u;
        weight * (f(a + dx) + f(b - dx))
    };
    let tau_max = 3.5;
    let mut step = 0.5;
    let mut sum = f(mid) * 0.5 * PI;
    let mut tau = step;
    while tau <= tau_max {
        sum += pair(tau);
        tau += step;
    }
    let mut estimate = half * step * sum;
    for _ in 0..12 {
        step *= 0.5;
        let mut tau = step;
        while tau <= tau_max {
            sum += pair(tau);
            tau += 2.0 * step;
        }
        let refined = half * step * sum;
        let converged = (refined - estimate).abs() <= rel_tol * refined.abs();
        estimate = refined;
        if converged {
            break;
        }
    }
    estimate
}

/// The generating function `U` of an entropy functional `U_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexityKind {
    /// `U(r) = N r (1 - r^{-1/N})`.
    RenyiN { n: f64 },
    /// `U(r) = r log r`.
    RelativeEntropy,
    /// Samples `(r, U(r))` on a grid of `r >= 0`, linearly interpolated.
    Tabulated { samples: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityFunctionSpec {
    pub kind: ConvexityKind,
    /// `lim_{r→∞} U(r)/r`; `+∞` for the relative entropy.
    #[serde(with = "extended_real")]
    pub u_prime_infinity: f64,
}

impl ConvexityFunctionSpec {
    pub fn renyi(n: f64) -> Self {
        Self {
            kind: ConvexityKind::RenyiN { n },
            u_prime_infinity: n,
        }
    }

    pub fn relative_entropy() -> Self {
        Self {
            kind: ConvexityKind::RelativeEntropy,
            u_prime_infinity: f64::INFINITY,
        }
    }

    /// Tabulated `U`; samples are sorted by `r`. Without an explicit `U′(∞)`
    /// the last sampled ratio `U(r)/r` is used.
    pub fn tabulated(mut samples: Vec<(f64, f64)>, u_prime_infinity: Option<f64>) -> Self {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let fallback = samples
            .iter()
            .rev()
            .find(|(r, _)| *r > 0.0)
            .map(|(r, u)| u / r)
            .unwrap_or(0.0);
        Self {
            kind: ConvexityKind::Tabulated { samples },
            u_prime_infinity: u_prime_infinity.unwrap_or(fallback),
        }
    }

    /// The default functional for a dimension bound: Rényi for finite `N`,
    /// relative entropy for `N = ∞`.
    pub fn for_dimension(n: Dimension) -> Self {
        match n {
            Dimension::Finite(n) => Self::renyi(n),
            Dimension::Infinite => Self::relative_entropy(),
        }
    }

    /// `U(r)` for `r >= 0`.
    pub fn eval(&self, r: f64) -> f64 {
        match &self.kind {
            ConvexityKind::RenyiN { n } => {
                if r <= 0.0 {
                    0.0
                } else {
                    n * (r - r.powf(1.0 - 1.0 / n))
                }
            }
            ConvexityKind::RelativeEntropy => {
                if r <= 0.0 {
                    0.0
                } else {
                    r * r.ln()
                }
            }
            ConvexityKind::Tabulated { samples } => self.eval_tabulated(samples, r),
        }
    }

    fn eval_tabulated(&self, samples: &[(f64, f64)], r: f64) -> f64 {
        match samples {
            [] => 0.0,
            [(_, u)] => *u,
            _ => {
                let idx = samples.partition_point(|(x, _)| *x <= r);
                if idx == 0 {
                    let (x0, u0) = samples[0];
                    let (x1, u1) = samples[1];
                    return u0 + (u1 - u0) * (r - x0) / (x1 - x0);
                }
                if idx == samples.len() {
                    let (x1, u1) = samples[idx - 1];
                    let slope = if self.u_prime_infinity.is_finite() {
                        self.u_prime_infinity
                    } else {
                        let (x0, u0) = samples[idx - 2];
                        (u1 - u0) / (x1 - x0)
                    };
                    return u1 + slope * (r - x1);
                }
                let (x0, u0) = samples[idx - 1];
                let (x1, u1) = samples[idx];
                u0 + (u1 - u0) * (r - x0) / (x1 - x0)
            }
        }
    }
}

/// JSON encoding of reals that may be `±∞`.
pub(crate) mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

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
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(n) => Ok(n),
            Raw::Text(t) => match t.as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("not a real: {t:?}"))),
            },
        }
    }
}

/// Which of the two convexity requirements a witness triple breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityDefect {
    /// `U(0) != 0`.
    Origin,
    /// `U` itself is not convex.
    U,
    /// The dimensional transform `φ` is not convex.
    Phi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum DcVerdict {
    Member,
    NotMember {
        defect: ConvexityDefect,
        /// The three `r` grid values whose chord test failed.
        witness: [f64; 3],
        /// Amount by which the middle value exceeds the chord.
        excess: f64,
    },
    Inconclusive {
        reason: String,
    },
}

impl DcVerdict {
    pub fn is_member(&self) -> bool {
        matches!(self, DcVerdict::Member)
    }
}

/// Grid test of `U ∈ DC_N` (`1 <= N <= ∞`).
///
/// On `r_i > 0` the transform `φ(s) = s^N U(s^{-N})` is sampled at
/// `s_i = r_i^{-1/N}` where it equals `U(r_i)/r_i`; for `N = ∞` the abscissa is
/// `s_i = -log r_i`. Tabulated functions are tested on their own grid only.
pub fn dc_membership(u: &ConvexityFunctionSpec, n: Dimension) -> DcVerdict {
    if let Dimension::Finite(n) = n {
        if !(n >= 1.0) {
            return DcVerdict::Inconclusive {
                reason: format!("DC_N needs N >= 1, got {n}"),
            };
        }
    }
    let samples: Vec<(f64, f64)> = match &u.kind {
        ConvexityKind::Tabulated { samples } => {
            let positive = samples.iter().filter(|(r, _)| *r > 0.0).count();
            if positive < 3 {
                return DcVerdict::Inconclusive {
                    reason: format!("only {positive} positive grid points"),
                };
            }
            if !samples.iter().any(|(r, _)| *r == 0.0) {
                return DcVerdict::Inconclusive {
                    reason: "tabulation has no sample at r = 0".into(),
                };
            }
            samples.clone()
        }
        _ => analytic_grid().into_iter().map(|r| (r, u.eval(r))).collect(),
    };
    if samples.iter().any(|(r, v)| !r.is_finite() || !v.is_finite() || *r < 0.0) {
        return DcVerdict::Inconclusive {
            reason: "tabulation contains non-finite or negative entries".into(),
        };
    }

    let scale_u = samples.iter().fold(1.0_f64, |m, (_, v)| m.max(v.abs()));
    if let Some(&(_, u0)) = samples.iter().find(|(r, _)| *r == 0.0) {
        if u0.abs() > 1e-9 * scale_u {
            return DcVerdict::NotMember {
                defect: ConvexityDefect::Origin,
                witness: [0.0, 0.0, 0.0],
                excess: u0.abs(),
            };
        }
    }
    if let Some((witness, excess)) = chord_violation(&samples, |&(r, v)| (r, v, r)) {
        return DcVerdict::NotMember {
            defect: ConvexityDefect::U,
            witness,
            excess,
        };
    }

    let mut phi: Vec<(f64, f64, f64)> = samples
        .iter()
        .filter(|(r, _)| *r > 0.0)
        .map(|&(r, v)| {
            let s = match n {
                Dimension::Finite(n) => r.powf(-1.0 / n),
                Dimension::Infinite => -r.ln(),
            };
            (s, v / r, r)
        })
        .collect();
    phi.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((witness, excess)) = chord_violation(&phi, |&t| t) {
        return DcVerdict::NotMember {
            defect: ConvexityDefect::Phi,
            witness,
            excess,
        };
    }
    DcVerdict::Member
}

/// `r = 0` followed by a geometric grid on `[1e-8, 1e8]`.
fn analytic_grid() -> Vec<f64> {
    let count = 321;
    let (lo, hi) = (-8.0_f64, 8.0_f64);
    std::iter::once(0.0)
        .chain((0..count).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64)))
        .collect()
}

/// First consecutive triple whose middle value exceeds the chord by more
/// than `1e-9 · max(1, |f|_∞)`. Points are `(x, f(x), label)` sorted by `x`.
fn chord_violation<T, F>(points: &[T], view: F) -> Option<([f64; 3], f64)>
where
    F: Fn(&T) -> (f64, f64, f64),
{
    let pts: Vec<(f64, f64, f64)> = points.iter().map(view).collect();
    let scale = pts.iter().fold(1.0_f64, |m, p| m.max(p.1.abs()));
    let tol = 1e-9 * scale;
    pts.windows(3).find_map(|w| {
        let (x0, f0, l0) = w[0];
        let (x1, f1, l1) = w[1];
        let (x2, f2, l2) = w[2];
        if x2 <= x0 {
            return None;
        }
        let chord = f0 + (f2 - f0) * (x1 - x0) / (x2 - x0);
        let excess = f1 - chord;
        (excess > tol).then_some(([l0, l1, l2], excess))
    })
}

/// Normalization of the value returned by [`functional_value`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `U_m(μ) = Σ U(ρ) m`.
    #[default]
    Functional,
    /// For Rényi generators, the entropy `S_N(μ) = -Σ ρ^{1-1/N} m`.
    Renyi,
}

/// `U_m(μ) = Σ_x U(μ(x)/m(x)) m(x)`.
///
/// Spaces carry strictly positive masses, so every measure is absolutely
/// continuous and the singular term `U′(∞) μ^s(X)` vanishes (`∞ · 0 = 0`).
pub fn functional_value(
    u: &ConvexityFunctionSpec,
    mu: &ProbabilityVector,
    space: &FiniteMetricMeasureSpace,
    normalization: Normalization,
) -> f64 {
    let masses = space.masses();
    match (&u.kind, normalization) {
        (ConvexityKind::RenyiN { n }, Normalization::Renyi) => -mu
            .masses()
            .iter()
            .zip(masses)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, m)| (p / m).powf(1.0 - 1.0 / n) * m)
            .sum::<f64>(),
        _ => mu
            .masses()
            .iter()
            .zip(masses)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, m)| u.eval(p / m) * m)
            .sum(),
    }
}
