//! Residual evaluators and verdicts for the curvature-dimension family and
//! the comparison theorems it implies.
//!
//! Every record stores `lhs`, `rhs` and `residual = rhs − lhs`, oriented so
//! that the inequality under test reads `lhs ≤ rhs`. A report holds when its
//! worst residual is at least `−tol`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comparison::{
    comparison_beta, dc_membership, domain_limit, extended_real, functional_value, model_volume_integral,
    ComparisonParams, ConvexityFunctionSpec, ConvexityKind, Dimension, Normalization,
};
use crate::error::{Error, Result};
use crate::space::{ball, z_set, FiniteMetricMeasureSpace, GeodesicCatalogue, METRIC_TOL};
use crate::transport::{
    build_plan, interpolate, optimal_coupling, w2, w2_distance, Coupling, PlanPolicy, ProbabilityVector,
};
use crate::SCHEMA_VERSION;

/// Default multiplier of `h · diam` in the verdict tolerance.
pub const DEFAULT_C_TOL: f64 = 4.0;
/// Relative cost jitter of the perturbation re-solve.
const JITTER: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Cd,
    CdStar,
    Mcp,
    BrunnMinkowski,
    BishopGromov,
    BonnetMyers,
    Lichnerowicz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    ViolatedBeyondTolerance,
    Inconclusive,
}

impl Verdict {
    /// CLI exit code: 0 holds, 2 violated, 3 inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Holds => 0,
            Verdict::ViolatedBeyondTolerance => 2,
            Verdict::Inconclusive => 3,
        }
    }
}

/// One evaluated inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub trial: usize,
    /// SHA-256 prefix of the measures or sets the record was computed from.
    pub digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(with = "extended_real")]
    pub lhs: f64,
    #[serde(with = "extended_real")]
    pub rhs: f64,
    #[serde(with = "extended_real")]
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ResidualRecord {
    pub fn new(trial: usize, digest: String, lhs: f64, rhs: f64) -> Self {
        Self {
            trial,
            digest,
            t: None,
            policy: None,
            lhs,
            rhs,
            residual: rhs - lhs,
            note: None,
        }
    }

    fn at(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    fn with_policy(mut self, policy: impl Into<String>) -> Self {
        self.policy = Some(policy.into());
        self
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdReport {
    pub schema_version: u32,
    pub family: Family,
    pub params: ComparisonParams,
    pub tol: f64,
    pub verdict: Verdict,
    #[serde(with = "extended_real")]
    pub worst_residual: f64,
    pub worst_record: Option<usize>,
    pub records: Vec<ResidualRecord>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub details: BTreeMap<String, serde_json::Value>,
}

impl CdReport {
    pub fn from_records(
        family: Family,
        params: ComparisonParams,
        records: Vec<ResidualRecord>,
        tol: f64,
    ) -> Self {
        let worst_record = records
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.residual.total_cmp(&b.1.residual))
            .map(|(i, _)| i);
        let worst_residual = worst_record.map_or(f64::NAN, |i| records[i].residual);
        let verdict = if records.is_empty() || worst_residual.is_nan() {
            Verdict::Inconclusive
        } else if worst_residual >= -tol {
            Verdict::Holds
        } else {
            Verdict::ViolatedBeyondTolerance
        };
        Self {
            schema_version: SCHEMA_VERSION,
            family,
            params,
            tol,
            verdict,
            worst_residual,
            worst_record,
            records,
            warnings: Vec::new(),
            details: BTreeMap::new(),
        }
    }

    fn detail(mut self, key: &str, value: impl Serialize) -> Self {
        self.details
            .insert(key.to_string(), serde_json::to_value(value).expect("detail serializes"));
        self
    }

    fn warn(mut self, message: impl Into<String>) -> Self {
        self.warnings.push(message.into());
        self
    }

    /// Downgrades the verdict to `Inconclusive` with a reason.
    pub fn inconclusive(mut self, reason: impl Into<String>) -> Self {
        self.verdict = Verdict::Inconclusive;
        self.warnings.push(reason.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `c_tol · h · diam`.
pub fn default_tolerance(space: &FiniteMetricMeasureSpace) -> f64 {
    DEFAULT_C_TOL * space.mesh() * space.diameter()
}

fn digest_of(parts: &[&[f64]]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        for v in *part {
            hasher.update(v.to_le_bytes());
        }
    }
    hex::encode(&hasher.finalize()[..8])
}

fn set_digest(sets: &[&[usize]], extra: &[f64]) -> String {
    let as_f: Vec<Vec<f64>> = sets.iter().map(|s| s.iter().map(|&i| i as f64).collect()).collect();
    let mut parts: Vec<&[f64]> = as_f.iter().map(|v| v.as_slice()).collect();
    parts.push(extra);
    digest_of(&parts)
}

/// Which distortion the CD-type inequality uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdVariant {
    /// `β_{K,N}` with any `U ∈ DC_N`.
    Standard,
    /// Reduced condition: `β_{K,N+1}` with the Rényi generator of dimension `N`.
    Reduced,
}

impl CdVariant {
    fn family(self) -> Family {
        match self {
            CdVariant::Standard => Family::Cd,
            CdVariant::Reduced => Family::CdStar,
        }
    }

    fn beta_params(self, params: ComparisonParams) -> ComparisonParams {
        match self {
            CdVariant::Standard => params,
            CdVariant::Reduced => ComparisonParams {
                k: params.k,
                n: params.n.plus_one(),
            },
        }
    }
}

/// `(β / ρ) U(ρ / β)` for the distortion coefficient `β^s(d)`.
fn distorted_term(u: &ConvexityFunctionSpec, beta_params: ComparisonParams, s: f64, d: f64, rho: f64) -> Result<f64> {
    match &u.kind {
        ConvexityKind::RelativeEntropy => {
            let log_beta = match beta_params.n {
                Dimension::Infinite => beta_params.k * (1.0 - s * s) * d * d / 6.0,
                Dimension::Finite(_) => comparison_beta(beta_params, s, d)?.ln(),
            };
            Ok(rho.ln() - log_beta)
        }
        ConvexityKind::RenyiN { n } => {
            let beta = comparison_beta(beta_params, s, d)?;
            Ok(n * (1.0 - (beta / rho).powf(1.0 / n)))
        }
        ConvexityKind::Tabulated { .. } => {
            let beta = comparison_beta(beta_params, s, d)?;
            Ok(beta / rho * u.eval(rho / beta))
        }
    }
}

/// A coupling with its endpoint densities and distances.
#[derive(Debug, Clone)]
struct WeightedPairs {
    /// `(mass, distance, ρ0(source), ρ1(target))`
    entries: Vec<(f64, f64, f64, f64)>,
    max_distance: f64,
}

impl WeightedPairs {
    fn new(space: &FiniteMetricMeasureSpace, coupling: &Coupling, rho0: &[f64], rho1: &[f64]) -> Self {
        let entries: Vec<_> = coupling
            .entries
            .iter()
            .map(|&(i, j, w)| (w, space.d(i, j), rho0[i], rho1[j]))
            .collect();
        let max_distance = entries.iter().fold(0.0_f64, |m, e| m.max(e.1));
        Self { entries, max_distance }
    }

    /// The distorted convex combination bounding `U_m(α(t))`.
    fn rhs(&self, u: &ConvexityFunctionSpec, beta_params: ComparisonParams, t: f64) -> Result<f64> {
        let limit = domain_limit(beta_params);
        if self.max_distance >= limit {
            return Err(Error::Domain(format!(
                "coupled points at distance {} reach the cutoff {limit}",
                self.max_distance
            )));
        }
        let mut head = 0.0;
        let mut tail = 0.0;
        for &(w, d, r0, r1) in &self.entries {
            head += w * distorted_term(u, beta_params, 1.0 - t, d, r0)?;
            tail += w * distorted_term(u, beta_params, t, d, r1)?;
        }
        Ok((1.0 - t) * head + t * tail)
    }
}

/// Plan candidates for one pair of measures, independent of `K`.
#[derive(Debug, Clone)]
struct Candidate {
    label: String,
    pairs: WeightedPairs,
    /// `U_m(α(t))` per configured time.
    lhs: Vec<f64>,
    /// Whether the interpolation tracks a `W₂` geodesic to mesh accuracy.
    geodesic: bool,
}

#[allow(clippy::too_many_arguments)]
fn candidates_for_coupling(
    space: &FiniteMetricMeasureSpace,
    catalogue: &GeodesicCatalogue,
    mu0: &ProbabilityVector,
    mu1: &ProbabilityVector,
    coupling: &Coupling,
    u: &ConvexityFunctionSpec,
    times: &[f64],
    policies: &[PlanPolicy],
    prefix: &str,
) -> Result<Vec<Candidate>> {
    let rho0 = mu0.density(space);
    let rho1 = mu1.density(space);
    let pairs = WeightedPairs::new(space, coupling, &rho0, &rho1);
    let total = coupling.cost.max(0.0).sqrt();
    let slack = space.mesh() + catalogue.eps_geo() + 1e-12;
    let mut out = Vec::new();
    for &policy in policies {
        let plan = build_plan(catalogue, coupling, policy)?;
        let mut lhs = Vec::with_capacity(times.len());
        let mut geodesic = true;
        for &t in times {
            let alpha = interpolate(&plan, t)?;
            lhs.push(functional_value(u, &alpha, space, Normalization::Functional));
            if geodesic {
                let head = w2_distance(space, mu0, &alpha)?;
                let tail = w2_distance(space, &alpha, mu1)?;
                geodesic = (head - t * total).abs() <= slack && (tail - (1.0 - t) * total).abs() <= slack;
            }
        }
        let label = match policy {
            PlanPolicy::MinSlack => "min_slack",
            PlanPolicy::Split => "split",
        };
        out.push(Candidate {
            label: format!("{prefix}{label}"),
            pairs: pairs.clone(),
            lhs,
            geodesic,
        });
    }
    Ok(out)
}

/// `CD(K, N)` residual along one plan policy at one time.
///
/// `lhs = U_m(α(t))`; `rhs` is the `β`-distorted combination of the endpoint
/// densities over the optimal coupling.
#[allow(clippy::too_many_arguments)]
pub fn cd_residual(
    space: &FiniteMetricMeasureSpace,
    catalogue: &GeodesicCatalogue,
    mu0: &ProbabilityVector,
    mu1: &ProbabilityVector,
    params: ComparisonParams,
    t: f64,
    u: &ConvexityFunctionSpec,
    policy: PlanPolicy,
) -> Result<ResidualRecord> {
    residual_with_variant(space, catalogue, mu0, mu1, params, t, u, policy, CdVariant::Standard)
}

/// Reduced `CD*(K, N)` residual: `β_{K,N+1}` with the Rényi generator of
/// dimension `N`.
#[allow(clippy::too_many_arguments)]
pub fn cd_star_residual(
    space: &FiniteMetricMeasureSpace,
    catalogue: &GeodesicCatalogue,
    mu0: &ProbabilityVector,
    mu1: &ProbabilityVector,
    params: ComparisonParams,
    t: f64,
    policy: PlanPolicy,
) -> Result<ResidualRecord> {
    let n = params
        .n
        .finite()
        .ok_or_else(|| Error::Domain("the reduced condition needs finite N".into()))?;
    let u = ConvexityFunctionSpec::renyi(n);
    residual_with_variant(space, catalogue, mu0, mu1, params, t, &u, policy, CdVariant::Reduced)
}

#[allow(clippy::too_many_arguments)]
fn residual_with_variant(
    space: &FiniteMetricMeasureSpace,
    catalogue: &GeodesicCatalogue,
    mu0: &ProbabilityVector,
    mu1: &ProbabilityVector,
    params: ComparisonParams,
    t: f64,
    u: &ConvexityFunctionSpec,
    policy: PlanPolicy,
    variant: CdVariant,
) -> Result<ResidualRecord> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("t must lie in (0, 1), got {t}")));
    }
    let (_, coupling) = w2(space, mu0, mu1)?;
    let candidate =
        candidates_for_coupling(space, catalogue, mu0, mu1, &coupling, u, &[t], &[policy], "")?.remove(0);
    let rhs = candidate.pairs.rhs(u, variant.beta_params(params), t)?;
    let mut record = ResidualRecord::new(0, digest_of(&[mu0.masses(), mu1.masses()]), candidate.lhs[0], rhs)
        .at(t)
        .with_policy(candidate.label);
    if !candidate.geodesic {
        record = record.with_note("interpolation deviates from a W2 geodesic beyond mesh accuracy");
    }
    Ok(record)
}

/// Source of trial measure pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairGenerator {
    /// Normalized restrictions of `m` to random open balls. Radii are raised
    /// to at least `min_cells` mesh steps, since measures resolved by only a
    /// few points alias under vertex snapping. `dirac_source` makes the first
    /// measure a Dirac mass at its center.
    UniformOnBalls {
        min_radius: f64,
        max_radius: f64,
        #[serde(default)]
        dirac_source: bool,
        #[serde(default = "default_min_cells")]
        min_cells: f64,
    },
    /// Sums of Gaussian bumps restricted to a random ball.
    RandomSmooth {
        bumps: usize,
        width: f64,
        support_radius: f64,
    },
    /// Explicit pairs of mass vectors.
    UserSupplied { pairs: Vec<(Vec<f64>, Vec<f64>)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub t_samples: Vec<f64>,
    pub generator: PairGenerator,
    /// Number of generated pairs (ignored for user-supplied pairs).
    pub trials: usize,
    pub eps_geo: f64,
    /// Verdict tolerance; `None` means `c_tol · h · diam`.
    pub tol: Option<f64>,
    pub plan_policies: Vec<PlanPolicy>,
    /// Perturbed re-solves tried when every policy fails.
    pub perturbation_draws: usize,
    pub seed: u64,
    /// Entropy generator; `None` means Rényi for finite `N`, relative entropy otherwise.
    pub functional: Option<ConvexityFunctionSpec>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            t_samples: vec![0.25, 0.5, 0.75],
            generator: PairGenerator::UniformOnBalls {
                min_radius: 0.0,
                max_radius: 0.5,
                dirac_source: false,
                min_cells: DEFAULT_MIN_CELLS,
            },
            trials: 32,
            eps_geo: 0.0,
            tol: None,
            plan_policies: vec![PlanPolicy::MinSlack, PlanPolicy::Split],
            perturbation_draws: 8,
            seed: 0x5eed_c0de,
            functional: None,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_samples.is_empty() {
            return Err(Error::InvalidInput("t_samples must be nonempty".into()));
        }
        if let Some(t) = self.t_samples.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::InvalidInput(format!("t sample {t} is outside (0, 1)")));
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0) {
                return Err(Error::InvalidInput(format!("tol must be positive, got {tol}")));
            }
        }
        if self.plan_policies.is_empty() {
            return Err(Error::InvalidInput("plan_policies must be nonempty".into()));
        }
        Ok(())
    }

    pub fn tolerance(&self, space: &FiniteMetricMeasureSpace) -> f64 {
        self.tol.unwrap_or_else(|| default_tolerance(space))
    }

    fn functional_for(&self, n: Dimension, variant: CdVariant) -> ConvexityFunctionSpec {
        match (variant, n) {
            (CdVariant::Reduced, Dimension::Finite(n)) => ConvexityFunctionSpec::renyi(n),
            _ => self
                .functional
                .clone()
                .unwrap_or_else(|| ConvexityFunctionSpec::for_dimension(n)),
        }
    }
}

fn default_min_cells() -> f64 {
    DEFAULT_MIN_CELLS
}

/// Smallest generated ball radius, in mesh steps.
pub const DEFAULT_MIN_CELLS: f64 = 10.0;

/// Draws the trial pairs of a configuration.
pub fn generate_pairs(
    space: &FiniteMetricMeasureSpace,
    config: &TrialConfig,
) -> Result<Vec<(ProbabilityVector, ProbabilityVector)>> {
    let n = space.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    match &config.generator {
        PairGenerator::UserSupplied { pairs } => pairs
            .iter()
            .map(|(a, b)| {
                let a = ProbabilityVector::new(a.clone())?;
                let b = ProbabilityVector::new(b.clone())?;
                a.check_on(space)?;
                b.check_on(space)?;
                Ok((a, b))
            })
            .collect(),
        PairGenerator::UniformOnBalls {
            min_radius,
            max_radius,
            dirac_source,
            min_cells,
        } => {
            if !(*min_radius >= 0.0 && max_radius >= min_radius && *min_cells >= 0.0) {
                return Err(Error::InvalidInput("ball radii must satisfy 0 <= min <= max".into()));
            }
            let floor = min_cells * space.mesh();
            let (lo, hi) = (min_radius.max(floor), max_radius.max(floor));
            let mut draw = |force_dirac: bool| -> Result<ProbabilityVector> {
                let center = rng.gen_range(0..n);
                let radius = if hi > lo { rng.gen_range(lo..hi) } else { lo };
                if force_dirac || radius <= 0.0 {
                    ProbabilityVector::dirac(n, center)
                } else {
                    ProbabilityVector::restricted(space, &ball(space, center, radius))
                }
            };
            (0..config.trials)
                .map(|_| Ok((draw(*dirac_source)?, draw(false)?)))
                .collect()
        }
        PairGenerator::RandomSmooth {
            bumps,
            width,
            support_radius,
        } => {
            if *bumps == 0 || !(*width > 0.0) || !(*support_radius > 0.0) {
                return Err(Error::InvalidInput("smooth generator needs bumps, width and radius > 0".into()));
            }
            let mut draw = || -> Result<ProbabilityVector> {
                let center = rng.gen_range(0..n);
                let support = ball(space, center, *support_radius);
                let anchors: Vec<(usize, f64)> = (0..*bumps)
                    .map(|_| (support[rng.gen_range(0..support.len())], rng.gen_range(0.5..1.5)))
                    .collect();
                let mut weights = vec![0.0; n];
                for &p in &support {
                    let bump: f64 = anchors
                        .iter()
                        .map(|&(a, amp)| amp * (-(space.d(a, p) / width).powi(2) / 2.0).exp())
                        .sum();
                    weights[p] = space.mass(p) * bump;
                }
                ProbabilityVector::from_weights(&weights)
            };
            (0..config.trials).map(|_| Ok((draw()?, draw()?))).collect()
        }
    }
}

/// A trial prepared once and evaluated for many `K`.
struct PreparedTrial {
    index: usize,
    digest: String,
    mu0: ProbabilityVector,
    mu1: ProbabilityVector,
    candidates: Vec<Candidate>,
    perturbed: OnceLock<Result<Vec<Candidate>>>,
}

/// Outcome of one trial at one `K`.
#[derive(Debug, Clone)]
struct TrialOutcome {
    residual: f64,
    records: Vec<ResidualRecord>,
}

struct Session<'a> {
    space: &'a FiniteMetricMeasureSpace,
    catalogue: &'a GeodesicCatalogue,
    config: &'a TrialConfig,
    variant: CdVariant,
    n: Dimension,
    u: ConvexityFunctionSpec,
    trials: Vec<PreparedTrial>,
    tol: f64,
}

impl<'a> Session<'a> {
    fn new(
        space: &'a FiniteMetricMeasureSpace,
        catalogue: &'a GeodesicCatalogue,
        n: Dimension,
        config: &'a TrialConfig,
        variant: CdVariant,
    ) -> Result<Self> {
        config.validate()?;
        if variant == CdVariant::Reduced && n.is_infinite() {
            return Err(Error::Domain("the reduced condition needs finite N".into()));
        }
        let u = config.functional_for(n, variant);
        let pairs = generate_pairs(space, config)?;
        let trials = pairs
            .into_par_iter()
            .enumerate()
            .map(|(index, (mu0, mu1))| {
                let (_, coupling) = w2(space, &mu0, &mu1)?;
                let candidates = candidates_for_coupling(
                    space,
                    catalogue,
                    &mu0,
                    &mu1,
                    &coupling,
                    &u,
                    &config.t_samples,
                    &config.plan_policies,
                    "",
                )?;
                Ok(PreparedTrial {
                    index,
                    digest: digest_of(&[mu0.masses(), mu1.masses()]),
                    mu0,
                    mu1,
                    candidates,
                    perturbed: OnceLock::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            space,
            catalogue,
            config,
            variant,
            n,
            u,
            trials,
            tol: config.tolerance(space),
        })
    }

    fn perturbed<'t>(&self, trial: &'t PreparedTrial) -> Result<&'t Vec<Candidate>> {
        trial
            .perturbed
            .get_or_init(|| {
                let n = self.space.len();
                let mut out = Vec::new();
                for draw in 0..self.config.perturbation_draws {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        self.config.seed ^ ((trial.index as u64) << 32) ^ (draw as u64 + 1),
                    );
                    let jitter: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let coupling = optimal_coupling(self.space, &trial.mu0, &trial.mu1, |i, j| {
                        let d = self.space.d(i, j);
                        d * d * (1.0 + JITTER * jitter[i * n + j])
                    })?;
                    out.extend(candidates_for_coupling(
                        self.space,
                        self.catalogue,
                        &trial.mu0,
                        &trial.mu1,
                        &coupling,
                        &self.u,
                        &self.config.t_samples,
                        &self.config.plan_policies,
                        &format!("perturbed{draw}:"),
                    )?);
                }
                Ok(out)
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// Best plan's records for one trial; a pair beyond the cutoff rejects.
    fn evaluate(&self, trial: &PreparedTrial, k: f64) -> Result<TrialOutcome> {
        let params = ComparisonParams::new(k, self.n)?;
        let beta_params = self.variant.beta_params(params);
        let score = |c: &Candidate| -> Result<Option<(f64, Vec<ResidualRecord>)>> {
            let mut records = Vec::with_capacity(self.config.t_samples.len());
            let mut worst = f64::INFINITY;
            for (slot, &t) in self.config.t_samples.iter().enumerate() {
                let rhs = match c.pairs.rhs(&self.u, beta_params, t) {
                    Ok(v) => v,
                    Err(Error::Domain(_)) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let mut record = ResidualRecord::new(trial.index, trial.digest.clone(), c.lhs[slot], rhs)
                    .at(t)
                    .with_policy(c.label.clone());
                if !c.geodesic {
                    record = record.with_note("interpolation deviates from a W2 geodesic beyond mesh accuracy");
                }
                worst = worst.min(record.residual);
                records.push(record);
            }
            Ok(Some((worst, records)))
        };
        let pick = |pool: &[Candidate]| -> Result<Option<(f64, Vec<ResidualRecord>)>> {
            let geodesic: Vec<&Candidate> = pool.iter().filter(|c| c.geodesic).collect();
            let usable: Vec<&Candidate> = if geodesic.is_empty() { pool.iter().collect() } else { geodesic };
            let mut best: Option<(f64, Vec<ResidualRecord>)> = None;
            for c in usable {
                if let Some((score, records)) = score(c)? {
                    if best.as_ref().is_none_or(|b| score > b.0) {
                        best = Some((score, records));
                    }
                }
            }
            Ok(best)
        };
        let mut best = pick(&trial.candidates)?;
        let failing = best.as_ref().is_none_or(|b| b.0 < -self.tol);
        if failing && self.config.perturbation_draws > 0 {
            if let Some(alt) = pick(self.perturbed(trial)?)? {
                if best.as_ref().is_none_or(|b| alt.0 > b.0) {
                    best = Some(alt);
                }
            }
        }
        Ok(match best {
            Some((residual, records)) => TrialOutcome { residual, records },
            None => {
                let limit = domain_limit(beta_params);
                let record = ResidualRecord::new(trial.index, trial.digest.clone(), f64::INFINITY, limit)
                    .with_note("coupled points reach the cutoff distance; rejected");
                TrialOutcome {
                    residual: record.residual,
                    records: vec![record],
                }
            }
        })
    }

    fn report(&self, k: f64) -> Result<CdReport> {
        let params = ComparisonParams::new(k, self.n)?;
        let outcomes = self
            .trials
            .par_iter()
            .map(|trial| self.evaluate(trial, k))
            .collect::<Result<Vec<_>>>()?;
        let records = outcomes.into_iter().flat_map(|o| o.records).collect();
        let mut report = CdReport::from_records(self.variant.family(), params, records, self.tol)
            .detail("trials", self.trials.len())
            .detail("t_samples", &self.config.t_samples)
            .detail("seed", self.config.seed)
            .detail("eps_geo", self.catalogue.eps_geo());
        if !dc_membership(&self.u, self.n).is_member() {
            report = report.warn("entropy generator is not verified to lie in DC_N");
        }
        for p in self.catalogue.pruned_pairs() {
            report = report.warn(format!("catalogue pruned for pair ({}, {})", p.from, p.to));
        }
        Ok(report)
    }

    fn accepts(&self, k: f64) -> Result<(bool, f64)> {
        let worst = self
            .trials
            .par_iter()
            .map(|trial| self.evaluate(trial, k).map(|o| o.residual))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        Ok((worst >= -self.tol, worst))
    }
}

/// Runs every configured trial at one `(K, N)`.
pub fn cd_check(
    space: &FiniteMetricMeasureSpace,
    catalogue: &GeodesicCatalogue,
    params: ComparisonParams,
    config: &TrialConfig,
    variant: CdVariant,
) -> Result<CdReport> {
    Session::new(space, catalogue, params.n, config, variant)?.report(params.k)
}

/// One evaluated curvature on the monotonicity grid or bisection path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KProbe {
    pub k: f64,
    pub accepted: bool,
    #[serde(with = "extended_real")]
    pub worst_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxKReport {
    pub schema_version: u32,
    pub n: Dimension,
    pub k_lo: f64,
    pub k_hi: f64,
    pub resolution: f64,
    /// Largest accepted curvature found (`k_hi` if everything is accepted).
    pub k_max: f64,
    pub verdict: Verdict,
    pub grid: Vec<KProbe>,
    pub bisection: Vec<KProbe>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Full report at `k_max`.
    pub report: CdReport,
}

/// Points on the coarse grid used to detect non-monotone acceptance.
const MONOTONICITY_GRID: usize = 9;

/// Largest `K` in `[k_lo, k_hi]` accepted by every trial, found by bisection
/// to resolution `1e-3 · (k_hi − k_lo)` after a coarse monotonicity scan.
pub fn max_k(
    space: &FiniteMetricMeasureSpace,
    catalogue: &GeodesicCatalogue,
    n: Dimension,
    k_range: (f64, f64),
    config: &TrialConfig,
    variant: CdVariant,
) -> Result<MaxKReport> {
    let (k_lo, k_hi) = k_range;
    if !(k_hi > k_lo) || !k_lo.is_finite() || !k_hi.is_finite() {
        return Err(Error::InvalidInput(format!("invalid curvature range [{k_lo}, {k_hi}]")));
    }
    if let Dimension::Finite(v) = n {
        if !(v > 1.0) {
            return Err(Error::InvalidInput(format!("max_k needs N > 1, got {v}")));
        }
    }
    let session = Session::new(space, catalogue, n, config, variant)?;
    let resolution = 1e-3 * (k_hi - k_lo);
    let probe = |k: f64| -> Result<KProbe> {
        let (accepted, worst_residual) = session.accepts(k)?;
        Ok(KProbe {
            k,
            accepted,
            worst_residual,
        })
    };
    let grid: Vec<KProbe> = (0..MONOTONICITY_GRID)
        .map(|i| probe(k_lo + (k_hi - k_lo) * i as f64 / (MONOTONICITY_GRID - 1) as f64))
        .collect::<Result<_>>()?;
    if !grid[0].accepted {
        return Err(Error::NoAcceptedK { k_lo });
    }
    let mut warnings = Vec::new();
    let first_reject = grid.iter().position(|p| !p.accepted);
    let mut verdict = Verdict::Holds;
    if let Some(r) = first_reject {
        if let Some(back) = grid[r..].iter().find(|p| p.accepted) {
            verdict = Verdict::Inconclusive;
            warnings.push(format!(
                "acceptance is not monotone in K: rejected at {} but accepted at {}",
                grid[r].k, back.k
            ));
        }
    }
    let mut bisection = Vec::new();
    let k_max = match first_reject {
        None => k_hi,
        Some(r) => {
            let (mut lo, mut hi) = (grid[r - 1].k, grid[r].k);
            while hi - lo > resolution {
                let mid = 0.5 * (lo + hi);
                let p = probe(mid)?;
                if p.accepted {
                    lo = mid;
                } else {
                    hi = mid;
                }
                bisection.push(p);
            }
            lo
        }
    };
    let report = session.report(k_max)?;
    Ok(MaxKReport {
        schema_version: SCHEMA_VERSION,
        n,
        k_lo,
        k_hi,
        resolution,
        k_max,
        verdict,
        grid,
        bisection,
        warnings,
        report,
    })
}

/// Measure contraction from `x` at time `t`: `lhs` is the pushforward of
/// `t^N β^t(d(x, y)) m(y)` under `e_t ∘ Φ` at the worst point, `rhs` its mass.
///
/// Points at or beyond the cutoff distance are skipped; their total mass is
/// recorded in the note.
pub fn mcp_residual(
    space: &FiniteMetricMeasureSpace,
    catalogue: &GeodesicCatalogue,
    x: usize,
    params: ComparisonParams,
    t: f64,
) -> Result<ResidualRecord> {
    let n = params
        .n
        .finite()
        .ok_or_else(|| Error::Domain("MCP needs finite N".into()))?;
    if x >= space.len() {
        return Err(Error::InvalidInput(format!("point {x} is outside the space")));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("t must lie in (0, 1), got {t}")));
    }
    let limit = domain_limit(params);
    let mut push = vec![0.0; space.len()];
    let mut excluded = 0.0;
    for y in 0..space.len() {
        let d = space.d(x, y);
        if d >= limit {
            excluded += space.mass(y);
            continue;
        }
        let paths = catalogue.paths(x, y);
        if paths.is_empty() {
            return Err(Error::MissingGeodesic { from: x, to: y });
        }
        let weight = t.powf(n) * comparison_beta(params, t, d)? * space.mass(y);
        push[paths[0].eval(t)] += weight;
    }
    let (p, _) = (0..space.len())
        .map(|p| (p, space.mass(p) - push[p]))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty space");
    let mut record = ResidualRecord::new(0, set_digest(&[&[x]], &[t]), push[p], space.mass(p))
        .at(t)
        .with_policy("min_slack");
    record = record.with_note(format!("worst point {p}; excluded mass {excluded}"));
    Ok(record)
}

pub fn mcp_check(
    space: &FiniteMetricMeasureSpace,
    catalogue: &GeodesicCatalogue,
    x: usize,
    params: ComparisonParams,
    t_samples: &[f64],
    tol: f64,
) -> Result<CdReport> {
    let records = t_samples
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            mcp_residual(space, catalogue, x, params, t).map(|mut r| {
                r.trial = i;
                r
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CdReport::from_records(Family::Mcp, params, records, tol).detail("center", x))
}

/// Generalized Brunn-Minkowski inequality for `Z_t(A, B)`.
///
/// Finite `N`: `lhs = (1−t) inf β^{1−t}(d)^{1/N} m(A)^{1/N} + t inf β^t(d)^{1/N} m(B)^{1/N}`,
/// `rhs = m(Z_t)^{1/N}`, infima exact over `A × B`. `N = ∞`:
/// `lhs = (1−t) log m(A) + t log m(B) + (K/2)(1−t) t W₂²`, `rhs = log m(Z_t)`.
pub fn brunn_minkowski_residual(
    space: &FiniteMetricMeasureSpace,
    catalogue: &GeodesicCatalogue,
    a_set: &[usize],
    b_set: &[usize],
    t: f64,
    params: ComparisonParams,
) -> Result<ResidualRecord> {
    if a_set.is_empty() || b_set.is_empty() {
        return Err(Error::EmptySet);
    }
    let z = z_set(space, catalogue, a_set, b_set, t)?;
    let (ma, mb, mz) = (space.mass_of(a_set), space.mass_of(b_set), space.mass_of(&z));
    let digest = set_digest(&[a_set, b_set], &[t]);
    let (lhs, rhs) = match params.n {
        Dimension::Finite(n) => {
            let limit = domain_limit(params);
            let mut inf_head = f64::INFINITY;
            let mut inf_tail = f64::INFINITY;
            for &a in a_set {
                for &b in b_set {
                    let d = space.d(a, b);
                    if d >= limit {
                        return Err(Error::Domain(format!(
                            "points {a} and {b} at distance {d} reach the cutoff {limit}"
                        )));
                    }
                    inf_head = inf_head.min(comparison_beta(params, 1.0 - t, d)?);
                    inf_tail = inf_tail.min(comparison_beta(params, t, d)?);
                }
            }
            let inv = 1.0 / n;
            (
                (1.0 - t) * inf_head.powf(inv) * ma.powf(inv) + t * inf_tail.powf(inv) * mb.powf(inv),
                mz.powf(inv),
            )
        }
        Dimension::Infinite => {
            let w = w2_distance(
                space,
                &ProbabilityVector::restricted(space, a_set)?,
                &ProbabilityVector::restricted(space, b_set)?,
            )?;
            (
                (1.0 - t) * ma.ln() + t * mb.ln() + 0.5 * params.k * (1.0 - t) * t * w * w,
                mz.ln(),
            )
        }
    };
    Ok(ResidualRecord::new(0, digest, lhs, rhs)
        .at(t)
        .with_note(format!("|Z_t| = {} points", z.len())))
}

/// Bishop-Gromov: `lhs = m(B(x,R)) / m(B(x,r))`, `rhs` the model-volume ratio.
pub fn bishop_gromov_residual(
    space: &FiniteMetricMeasureSpace,
    x: usize,
    r: f64,
    big_r: f64,
    params: ComparisonParams,
) -> Result<ResidualRecord> {
    if x >= space.len() {
        return Err(Error::InvalidInput(format!("point {x} is outside the space")));
    }
    let limit = domain_limit(params);
    if !(r > 0.0 && r <= big_r && big_r <= limit) {
        return Err(Error::Domain(format!(
            "radii must satisfy 0 < r <= R <= {limit}, got r = {r}, R = {big_r}"
        )));
    }
    let small = space.mass_of(&ball(space, x, r));
    if !(small > 0.0) {
        return Err(Error::DegenerateBall { x, r });
    }
    let large = space.mass_of(&ball(space, x, big_r));
    let model = if r == big_r {
        1.0
    } else {
        model_volume_integral(params, big_r)? / model_volume_integral(params, r)?
    };
    let measured = if r == big_r { 1.0 } else { large / small };
    Ok(ResidualRecord::new(0, set_digest(&[&[x]], &[r, big_r]), measured, model))
}

/// Bonnet-Myers: `lhs = diam X`, `rhs = π √((N−1)/K)`, together with the
/// largest number of points lying farther than `cutoff − antipode_tol` from a
/// single point (at most one in a space satisfying the bound).
pub fn bonnet_myers_check(
    space: &FiniteMetricMeasureSpace,
    params: ComparisonParams,
    antipode_tol: f64,
    tol: f64,
) -> Result<CdReport> {
    if !(params.k > 0.0) || params.n.is_infinite() {
        return Err(Error::Domain("Bonnet-Myers needs K > 0 and finite N".into()));
    }
    let cutoff = domain_limit(params);
    let diameter = space.diameter();
    let guard = METRIC_TOL * diameter.max(1.0);
    let counts: Vec<usize> = (0..space.len())
        .map(|x| {
            (0..space.len())
                .filter(|&y| space.d(x, y) > cutoff - antipode_tol + guard)
                .count()
        })
        .collect();
    let max_count = counts.iter().copied().max().unwrap_or(0);
    let record = ResidualRecord::new(0, digest_of(&[space.dist_row_major()]), diameter, cutoff);
    let mut report = CdReport::from_records(Family::BonnetMyers, params, vec![record], tol)
        .detail("antipode_tol", antipode_tol)
        .detail("max_antipodes", max_count)
        .detail("antipode_counts", &counts);
    if max_count > 1 {
        report.verdict = Verdict::ViolatedBeyondTolerance;
        report = report.warn(format!("a point has {max_count} points near the cutoff distance"));
    }
    Ok(report)
}

/// Lichnerowicz: `lhs = Σ f² m`, `rhs = (N−1)/(KN) Σ |∇⁻f|² m` with
/// `|∇⁻f|(x) = max_{0 < d(x,y) ≤ radius} max(f(x) − f(y), 0) / d(x, y)`.
///
/// `f` is re-centered to zero `m`-mean; the shift is recorded in the note.
pub fn lichnerowicz_residual(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    params: ComparisonParams,
    neighbour_radius: Option<f64>,
) -> Result<ResidualRecord> {
    if !(params.k > 0.0) {
        return Err(Error::Domain(format!("Lichnerowicz needs K > 0, got {}", params.k)));
    }
    let factor = match params.n {
        Dimension::Finite(n) if n > 1.0 => (n - 1.0) / (params.k * n),
        Dimension::Finite(n) => return Err(Error::Domain(format!("Lichnerowicz needs N > 1, got {n}"))),
        Dimension::Infinite => 1.0 / params.k,
    };
    if f.len() != space.len() {
        return Err(Error::InvalidInput(format!(
            "function has {} values for {} points",
            f.len(),
            space.len()
        )));
    }
    let radius = neighbour_radius.unwrap_or(2.0 * space.mesh()) * (1.0 + METRIC_TOL);
    let shift = f.iter().zip(space.masses()).map(|(v, m)| v * m).sum::<f64>() / space.total_mass();
    let g: Vec<f64> = f.iter().map(|v| v - shift).collect();
    let mut energy = 0.0;
    let mut variance = 0.0;
    for x in 0..space.len() {
        let slope = (0..space.len())
            .filter(|&y| y != x && space.d(x, y) <= radius)
            .map(|y| (g[x] - g[y]).max(0.0) / space.d(x, y))
            .fold(0.0, f64::max);
        energy += slope * slope * space.mass(x);
        variance += g[x] * g[x] * space.mass(x);
    }
    Ok(
        ResidualRecord::new(0, digest_of(&[f]), variance, factor * energy)
            .with_note(format!("mean shift {shift}; neighbour radius {radius}")),
    )
}
