//! Demand scenarios, moment estimates and moment-based ambiguity sets.
//!
//! Sampling uses `ChaCha8Rng` seeded with `seed_from_u64`, drawing values in
//! scenario-major, then site, then period order. ChaCha output is specified
//! independently of platform, so a seed pins every sample bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use resdist_solver::{LpStatus, Model, Relation, VarId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Demand matrix indexed `[j][t]`.
pub type DemandMatrix = Vec<Vec<f64>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario set must contain at least one scenario")]
    NoScenarios,
    #[error("scenario {scenario} has shape {found:?}, expected {expected:?}")]
    Shape { scenario: usize, expected: (usize, usize), found: (usize, usize) },
    #[error("{0} probabilities given for {1} scenarios")]
    ProbabilityCount(usize, usize),
    #[error("probability of scenario {0} is negative or non-finite")]
    BadProbability(usize),
    #[error("probabilities sum to {0}, not 1")]
    ProbabilitySum(f64),
    #[error("demand of scenario {scenario} at (j={site}, t={period}) is negative or non-finite")]
    BadDemand { scenario: usize, site: usize, period: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quantiles must satisfy q025 <= median <= q975, got ({0}, {1}, {2})")]
    QuantileOrder(f64, f64, f64),
    #[error("penalty case `{case}` requires {data}")]
    MissingSideData { case: &'static str, data: &'static str },
    #[error("{what} has {found} entries, expected {expected}")]
    Length { what: String, expected: usize, found: usize },
    #[error("ambiguity set is empty: {bound} cannot be met (scaled shortfall {shortfall:.3e})")]
    EmptyAmbiguitySet { bound: String, shortfall: f64 },
    #[error("feasibility check of the ambiguity set failed: {0:?}")]
    FeasibilityCheck(LpStatus),
}

/// Finite set of demand realizations with probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScenarioSet", deny_unknown_fields)]
pub struct ScenarioSet {
    /// `[w][j][t]`
    demand: Vec<DemandMatrix>,
    probabilities: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenarioSet {
    demand: Vec<DemandMatrix>,
    probabilities: Vec<f64>,
}

impl TryFrom<RawScenarioSet> for ScenarioSet {
    type Error = ScenarioError;

    fn try_from(raw: RawScenarioSet) -> Result<Self, Self::Error> {
        ScenarioSet::new(raw.demand, raw.probabilities)
    }
}

impl ScenarioSet {
    pub fn new(demand: Vec<DemandMatrix>, probabilities: Vec<f64>) -> Result<Self, ScenarioError> {
        if demand.is_empty() {
            return Err(ScenarioError::NoScenarios);
        }
        if probabilities.len() != demand.len() {
            return Err(ScenarioError::ProbabilityCount(probabilities.len(), demand.len()));
        }
        let shape = |m: &DemandMatrix| (m.len(), m.first().map_or(0, Vec::len));
        let expected = shape(&demand[0]);
        for (w, m) in demand.iter().enumerate() {
            let found = (m.len(), m.iter().map(Vec::len).max().unwrap_or(0));
            if found != expected || m.iter().any(|r| r.len() != expected.1) {
                return Err(ScenarioError::Shape { scenario: w, expected, found });
            }
            for (j, row) in m.iter().enumerate() {
                for (t, &d) in row.iter().enumerate() {
                    if !(d.is_finite() && d >= 0.0) {
                        return Err(ScenarioError::BadDemand { scenario: w, site: j, period: t });
                    }
                }
            }
        }
        for (w, &p) in probabilities.iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(ScenarioError::BadProbability(w));
            }
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ScenarioError::ProbabilitySum(total));
        }
        Ok(Self { demand, probabilities })
    }

    /// Scenarios with probability `1/len` each.
    pub fn equiprobable(demand: Vec<DemandMatrix>) -> Result<Self, ScenarioError> {
        let n = demand.len().max(1);
        Self::new(demand, vec![1.0 / n as f64; n])
    }

    pub fn point_mass(demand: DemandMatrix) -> Result<Self, ScenarioError> {
        Self::new(vec![demand], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.demand.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demand.is_empty()
    }

    pub fn num_sites(&self) -> usize {
        self.demand[0].len()
    }

    pub fn num_periods(&self) -> usize {
        self.demand[0].first().map_or(0, Vec::len)
    }

    pub fn demand(&self, w: usize) -> &DemandMatrix {
        &self.demand[w]
    }

    pub fn demands(&self) -> &[DemandMatrix] {
        &self.demand
    }

    pub fn probability(&self, w: usize) -> f64 {
        self.probabilities[w]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Probability-weighted total demand over all sites and periods.
    pub fn expected_total_demand(&self) -> f64 {
        self.demand.iter().zip(&self.probabilities).map(|(m, p)| p * m.iter().flatten().sum::<f64>()).sum()
    }
}

/// Per-coordinate mean, raw second moment and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentEstimate {
    pub mean: DemandMatrix,
    /// `S = mean^2 + std_dev^2`.
    pub second_moment: DemandMatrix,
    pub std_dev: DemandMatrix,
}

impl MomentEstimate {
    pub fn from_mean_std(mean: DemandMatrix, std_dev: DemandMatrix) -> Result<Self, ScenarioError> {
        if mean.len() != std_dev.len() || mean.iter().zip(&std_dev).any(|(a, b)| a.len() != b.len()) {
            return Err(ScenarioError::InvalidArgument("mean and standard deviation matrices differ in shape".into()));
        }
        if std_dev.iter().flatten().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(ScenarioError::InvalidArgument("standard deviations must be finite and >= 0".into()));
        }
        if mean.iter().flatten().any(|m| !m.is_finite()) {
            return Err(ScenarioError::InvalidArgument("means must be finite".into()));
        }
        let second_moment =
            mean.iter().zip(&std_dev).map(|(m, s)| m.iter().zip(s).map(|(m, s)| m * m + s * s).collect()).collect();
        Ok(Self { mean, second_moment, std_dev })
    }

    /// Zero-variance estimate centred on `mean`.
    pub fn point(mean: DemandMatrix) -> Self {
        let zeros = mean.iter().map(|r| vec![0.0; r.len()]).collect();
        Self::from_mean_std(mean, zeros).expect("zero deviations are valid")
    }

    pub fn num_sites(&self) -> usize {
        self.mean.len()
    }

    pub fn num_periods(&self) -> usize {
        self.mean.first().map_or(0, Vec::len)
    }
}

fn check_count(count: usize) -> Result<(), ScenarioError> {
    if count == 0 {
        return Err(ScenarioError::InvalidArgument("scenario count must be at least 1".into()));
    }
    Ok(())
}

/// I.i.d. draws, uniform on `[(1-f)mu, (1+f)mu]` per coordinate.
pub fn sample_uniform_scenarios(
    means: &MomentEstimate,
    half_width_factor: f64,
    count: usize,
    seed: u64,
) -> Result<ScenarioSet, ScenarioError> {
    check_count(count)?;
    if !(0.0..=1.0).contains(&half_width_factor) {
        return Err(ScenarioError::InvalidArgument(format!("half-width factor {half_width_factor} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let demand = (0..count)
        .map(|_| {
            means
                .mean
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&mu| {
                            let lo = (1.0 - half_width_factor) * mu;
                            let hi = (1.0 + half_width_factor) * mu;
                            let u: f64 = rng.random();
                            lo + (hi - lo) * u
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    ScenarioSet::equiprobable(demand)
}

/// I.i.d. normal draws with the given moments, negative values clamped to 0.
pub fn sample_normal_scenarios(
    moments: &MomentEstimate,
    count: usize,
    seed: u64,
) -> Result<ScenarioSet, ScenarioError> {
    check_count(count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let demand = (0..count)
        .map(|_| {
            moments
                .mean
                .iter()
                .zip(&moments.std_dev)
                .map(|(mu_row, sd_row)| {
                    mu_row
                        .iter()
                        .zip(sd_row)
                        .map(|(&mu, &sd)| {
                            let z: f64 = rng.sample(StandardNormal);
                            (mu + sd * z).max(0.0)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    ScenarioSet::equiprobable(demand)
}

/// Mean and standard deviation from the 2.5%, 50% and 97.5% quantiles,
/// treating the outer quantiles as the ends of a 95% normal range.
pub fn moments_from_quantiles(q025: f64, median: f64, q975: f64) -> Result<(f64, f64), ScenarioError> {
    if !(q025 <= median && median <= q975) || !(q025.is_finite() && q975.is_finite()) {
        return Err(ScenarioError::QuantileOrder(q025, median, q975));
    }
    Ok(((q025 + 2.0 * median + q975) / 4.0, (q975 - q025) / 3.92))
}

pub fn empirical_moments(scenarios: &ScenarioSet) -> MomentEstimate {
    let (nj, nt) = (scenarios.num_sites(), scenarios.num_periods());
    let mut mean = vec![vec![0.0; nt]; nj];
    let mut second = vec![vec![0.0; nt]; nj];
    for (m, &p) in scenarios.demands().iter().zip(scenarios.probabilities()) {
        for j in 0..nj {
            for t in 0..nt {
                let d = m[j][t];
                mean[j][t] += p * d;
                second[j][t] += p * d * d;
            }
        }
    }
    let std_dev = mean
        .iter()
        .zip(&second)
        .map(|(m, s)| m.iter().zip(s).map(|(m, s)| (s - m * m).max(0.0).sqrt()).collect())
        .collect();
    MomentEstimate { mean, second_moment: second, std_dev }
}

/// Product `prod xi[j][t]^power` over the listed factors; the empty product
/// is the constant 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentFunction {
    /// `(j, t, power)` triples, zero-based.
    pub factors: Vec<(usize, usize, u32)>,
}

impl MomentFunction {
    pub fn constant() -> Self {
        Self { factors: Vec::new() }
    }

    pub fn power(j: usize, t: usize, power: u32) -> Self {
        Self { factors: vec![(j, t, power)] }
    }

    pub fn eval(&self, xi: &DemandMatrix) -> f64 {
        self.factors.iter().map(|&(j, t, k)| xi[j][t].powi(k as i32)).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundedMoment {
    pub label: String,
    pub function: MomentFunction,
    pub lower: f64,
    pub upper: f64,
}

/// Ambiguity set `{p >= 0 : lower <= sum_k p_k f(xi^k) <= upper}` over a
/// finite support, with per-coordinate first and second moment bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySpec {
    support: Vec<DemandMatrix>,
    mean_slack: DemandMatrix,
    second_moment_lo: DemandMatrix,
    second_moment_hi: DemandMatrix,
    moments: MomentEstimate,
    extra: Vec<BoundedMoment>,
}

impl AmbiguitySpec {
    /// Checks factor ranges, shapes and that at least one distribution on
    /// the support satisfies every bound.
    pub fn new(
        support: Vec<DemandMatrix>,
        mean_slack: DemandMatrix,
        second_moment_lo: DemandMatrix,
        second_moment_hi: DemandMatrix,
        moments: MomentEstimate,
        extra: Vec<BoundedMoment>,
    ) -> Result<Self, ScenarioError> {
        if support.is_empty() {
            return Err(ScenarioError::NoScenarios);
        }
        let (nj, nt) = (moments.num_sites(), moments.num_periods());
        let same_shape = |m: &DemandMatrix| m.len() == nj && m.iter().all(|r| r.len() == nt);
        for (what, m) in [
            ("mean slack", &mean_slack),
            ("second moment lower factor", &second_moment_lo),
            ("second moment upper factor", &second_moment_hi),
            ("second moment", &moments.second_moment),
        ] {
            if !same_shape(m) {
                return Err(ScenarioError::InvalidArgument(format!("{what} does not match the moment shape")));
            }
        }
        if let Some(k) = support.iter().position(|m| !same_shape(m)) {
            return Err(ScenarioError::InvalidArgument(format!("support point {} has the wrong shape", k + 1)));
        }
        for j in 0..nj {
            for t in 0..nt {
                let (lo, hi, eps) = (second_moment_lo[j][t], second_moment_hi[j][t], mean_slack[j][t]);
                if !(0.0..=1.0).contains(&lo) || !(hi >= 1.0 && hi.is_finite()) || !(eps >= 0.0 && eps.is_finite()) {
                    return Err(ScenarioError::InvalidArgument(format!(
                        "ambiguity factors at (j={}, t={}) need 0 <= lo <= 1 <= hi and slack >= 0, got ({eps}, {lo}, {hi})",
                        j + 1,
                        t + 1
                    )));
                }
            }
        }
        for b in &extra {
            if !(b.lower.is_finite() && b.upper.is_finite()) || b.lower > b.upper {
                return Err(ScenarioError::InvalidArgument(format!(
                    "moment `{}` needs finite ordered bounds",
                    b.label
                )));
            }
            if b.function.factors.iter().any(|&(j, t, _)| j >= nj || t >= nt) {
                return Err(ScenarioError::InvalidArgument(format!(
                    "moment `{}` indexes outside the demand shape",
                    b.label
                )));
            }
        }
        let spec = Self { support, mean_slack, second_moment_lo, second_moment_hi, moments, extra };
        spec.check_nonempty()?;
        Ok(spec)
    }

    pub fn support(&self) -> &[DemandMatrix] {
        &self.support
    }

    pub fn num_support(&self) -> usize {
        self.support.len()
    }

    pub fn mean_slack(&self) -> &DemandMatrix {
        &self.mean_slack
    }

    pub fn second_moment_lo(&self) -> &DemandMatrix {
        &self.second_moment_lo
    }

    pub fn second_moment_hi(&self) -> &DemandMatrix {
        &self.second_moment_hi
    }

    pub fn moments(&self) -> &MomentEstimate {
        &self.moments
    }

    pub fn extra(&self) -> &[BoundedMoment] {
        &self.extra
    }

    pub fn mean_bounds(&self, j: usize, t: usize) -> (f64, f64) {
        let mu = self.moments.mean[j][t];
        let eps = self.mean_slack[j][t];
        (mu - eps, mu + eps)
    }

    pub fn second_moment_bounds(&self, j: usize, t: usize) -> (f64, f64) {
        let s = self.moments.second_moment[j][t];
        (s * self.second_moment_lo[j][t], s * self.second_moment_hi[j][t])
    }

    /// All bounded moments: normalization, the means, the second moments,
    /// then any extra functions.
    pub fn moment_system(&self) -> Vec<BoundedMoment> {
        let (nj, nt) = (self.moments.num_sites(), self.moments.num_periods());
        let mut rows = vec![BoundedMoment {
            label: "normalization".into(),
            function: MomentFunction::constant(),
            lower: 1.0,
            upper: 1.0,
        }];
        for j in 0..nj {
            for t in 0..nt {
                let (lower, upper) = self.mean_bounds(j, t);
                rows.push(BoundedMoment {
                    label: format!("mean at (j={}, t={})", j + 1, t + 1),
                    function: MomentFunction::power(j, t, 1),
                    lower,
                    upper,
                });
            }
        }
        for j in 0..nj {
            for t in 0..nt {
                let (lower, upper) = self.second_moment_bounds(j, t);
                rows.push(BoundedMoment {
                    label: format!("second moment at (j={}, t={})", j + 1, t + 1),
                    function: MomentFunction::power(j, t, 2),
                    lower,
                    upper,
                });
            }
        }
        rows.extend(self.extra.iter().cloned());
        rows
    }

    /// Elastic LP: minimize the scaled bound shortfall over the simplex.
    fn check_nonempty(&self) -> Result<(), ScenarioError> {
        let system = self.moment_system();
        let mut model = Model::new();
        let p: Vec<VarId> =
            (0..self.support.len()).map(|k| model.add_continuous(format!("p_{}", k + 1), 0.0, f64::INFINITY)).collect();
        let mut slacks = Vec::with_capacity(2 * system.len());
        // Normalization is kept hard so a shortfall always names a moment bound.
        model.add_constraint("normalization", p.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0);
        for (s, b) in system.iter().enumerate().skip(1) {
            let scale = 1.0_f64.max(b.lower.abs()).max(b.upper.abs());
            let terms: Vec<(VarId, f64)> = p
                .iter()
                .zip(&self.support)
                .map(|(&v, xi)| (v, b.function.eval(xi) / scale))
                .filter(|&(_, a)| a != 0.0)
                .collect();
            let lo = model.add_continuous(format!("short_lo_{s}"), 0.0, f64::INFINITY);
            let hi = model.add_continuous(format!("short_hi_{s}"), 0.0, f64::INFINITY);
            model.set_cost(lo, 1.0);
            model.set_cost(hi, 1.0);
            let mut t_lo = terms.clone();
            t_lo.push((lo, 1.0));
            model.add_constraint(format!("lo_{s}"), t_lo, Relation::Ge, b.lower / scale);
            let mut t_hi = terms;
            t_hi.push((hi, -1.0));
            model.add_constraint(format!("hi_{s}"), t_hi, Relation::Le, b.upper / scale);
            slacks.push((s, lo, hi));
        }
        let sol = resdist_solver::solve_lp(&model);
        if sol.status != LpStatus::Optimal {
            return Err(ScenarioError::FeasibilityCheck(sol.status));
        }
        if sol.objective <= 1e-9 {
            return Ok(());
        }
        let (s, lo, hi) = slacks
            .iter()
            .copied()
            .max_by(|a, b| {
                let va = sol.x[a.1.index()].max(sol.x[a.2.index()]);
                let vb = sol.x[b.1.index()].max(sol.x[b.2.index()]);
                va.total_cmp(&vb)
            })
            .expect("at least the normalization row exists");
        let side = if sol.x[lo.index()] >= sol.x[hi.index()] { "lower" } else { "upper" };
        Err(ScenarioError::EmptyAmbiguitySet {
            bound: format!("{side} bound of {}", system[s].label),
            shortfall: sol.objective,
        })
    }
}

/// Bounds `[mu - f_mu * mu, mu + f_mu * mu]` on the means and
/// `[lo * S, hi * S]` on the second moments, with `support` as the atoms.
pub fn build_ambiguity_bounds(
    moments: &MomentEstimate,
    mean_slack_factor: f64,
    lo_factor: f64,
    hi_factor: f64,
    support: &ScenarioSet,
) -> Result<AmbiguitySpec, ScenarioError> {
    if !(mean_slack_factor >= 0.0 && mean_slack_factor.is_finite()) {
        return Err(ScenarioError::InvalidArgument(format!("mean slack factor {mean_slack_factor} must be >= 0")));
    }
    let shaped = |v: f64| -> DemandMatrix { moments.mean.iter().map(|r| vec![v; r.len()]).collect() };
    let mean_slack = moments.mean.iter().map(|r| r.iter().map(|mu| mean_slack_factor * mu.abs()).collect()).collect();
    AmbiguitySpec::new(
        support.demands().to_vec(),
        mean_slack,
        shaped(lo_factor),
        shaped(hi_factor),
        moments.clone(),
        Vec::new(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyCase {
    /// 100 per unit everywhere.
    Constant,
    /// Median demand plus 10.
    MedianBased,
    /// 0.001 times the elderly population of the site.
    ElderBased,
}

/// Backlog penalty `c^u[j][t]` for one of the three penalty cases.
pub fn penalty_schedule(
    case: PenaltyCase,
    sites: usize,
    periods: usize,
    medians: Option<&[Vec<f64>]>,
    elders: Option<&[f64]>,
) -> Result<DemandMatrix, ScenarioError> {
    match case {
        PenaltyCase::Constant => Ok(vec![vec![100.0; periods]; sites]),
        PenaltyCase::MedianBased => {
            let med = medians.ok_or(ScenarioError::MissingSideData {
                case: "median_based",
                data: "median demand per site and period",
            })?;
            if med.len() != sites || med.iter().any(|r| r.len() != periods) {
                return Err(ScenarioError::Length {
                    what: "median demand".into(),
                    expected: sites * periods,
                    found: med.iter().map(Vec::len).sum(),
                });
            }
            Ok(med.iter().map(|r| r.iter().map(|m| m + 10.0).collect()).collect())
        }
        PenaltyCase::ElderBased => {
            let eld = elders
                .ok_or(ScenarioError::MissingSideData { case: "elder_based", data: "elderly population per site" })?;
            if eld.len() != sites {
                return Err(ScenarioError::Length {
                    what: "elderly population".into(),
                    expected: sites,
                    found: eld.len(),
                });
            }
            Ok(eld.iter().map(|&e| vec![0.001 * e; periods]).collect())
        }
    }
}
