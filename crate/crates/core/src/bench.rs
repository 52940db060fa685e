//! Synthetic scenarios and seeded Monte-Carlo campaigns.
//!
//! Every random stream is a ChaCha8 generator. Campaign seeds are derived
//! from the master seed by keyed stream selection, so a record depends only
//! on `(master seed, scenario, outlier fraction, k, m)` and never on thread
//! scheduling or on which other cells are in the grid.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{canonical_angle, EllipseGeometry, PointSet};
use crate::coupled::{self, inner_of, CoupledGeometry};
use crate::error::{Error, Result};
use crate::mcc::{self, FailureRule, FitConfig};

pub const SCHEMA_VERSION: u32 = 1;
const CLUSTERS: usize = 5;
const CLUSTER_SIDE: f64 = 15.0;

const NOTES: [&str; 4] = [
    "outliers replace normal points: each is its clean ellipse point plus uniform per-coordinate offsets",
    "cluster scenario: 5 cluster centers at the ellipse center plus U(-b,b) offsets, outliers uniform in 15x15 squares",
    "one-sided scenarios: 5 clusters whose centers sit at a uniform polar angle and a radius in [0.25b,0.5b] (inside) or [1.5b,2b] (outside)",
    "coupled scenarios: noise and outlier spread use the outer ellipse's b; association error counts outliers by the ellipse they replaced",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    UniformZeroMean,
    UniformSkewed,
    Cluster,
    OneSidedInside,
    OneSidedOutside,
    CoupledUniform,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::UniformZeroMean,
        Scenario::UniformSkewed,
        Scenario::Cluster,
        Scenario::OneSidedInside,
        Scenario::OneSidedOutside,
        Scenario::CoupledUniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::UniformZeroMean => "uniform_zero_mean",
            Scenario::UniformSkewed => "uniform_skewed",
            Scenario::Cluster => "cluster",
            Scenario::OneSidedInside => "one_sided_inside",
            Scenario::OneSidedOutside => "one_sided_outside",
            Scenario::CoupledUniform => "coupled_uniform",
        }
    }

    pub fn is_coupled(self) -> bool {
        self == Scenario::CoupledUniform
    }

    pub fn default_points(self) -> usize {
        if self.is_coupled() {
            200
        } else {
            100
        }
    }

    fn index(self) -> u64 {
        Self::ALL.iter().position(|s| *s == self).expect("listed") as u64
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|s| s.name()).collect();
            Error::InvalidInput(format!("unknown scenario '{s}' (expected one of: {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n_points: usize,
    pub outlier_fraction: f64,
    pub noise_scale_factor: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, outlier_fraction: f64, seed: u64) -> Self {
        Self { scenario, n_points: scenario.default_points(), outlier_fraction, noise_scale_factor: 0.005, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.outlier_fraction) {
            return Err(Error::InvalidInput(format!(
                "outlier fraction must be in [0, 0.5], got {}",
                self.outlier_fraction
            )));
        }
        if !(self.noise_scale_factor >= 0.0) || !self.noise_scale_factor.is_finite() {
            return Err(Error::InvalidInput("noise scale factor must be finite and >= 0".into()));
        }
        let min = if self.scenario.is_coupled() { 12 } else { 6 };
        if self.n_points < min {
            return Err(Error::InvalidInput(format!("{} needs at least {min} points", self.scenario)));
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        (self.outlier_fraction * self.n_points as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    Single { ellipse: EllipseGeometry },
    Coupled { outer: EllipseGeometry, inner: EllipseGeometry, mu: f64 },
}

impl GroundTruth {
    pub fn outer(&self) -> &EllipseGeometry {
        match self {
            GroundTruth::Single { ellipse } => ellipse,
            GroundTruth::Coupled { outer, .. } => outer,
        }
    }

    /// Parameter vector used for error statistics: `[g, h, a, b, θ]`, plus
    /// `μ` for coupled pairs.
    pub fn params(&self) -> Vec<f64> {
        match self {
            GroundTruth::Single { ellipse } => ellipse.as_array().to_vec(),
            GroundTruth::Coupled { outer, mu, .. } => {
                let mut p = outer.as_array().to_vec();
                p.push(*mu);
                p
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScenario {
    pub config: ScenarioConfig,
    pub points: PointSet,
    pub truth: GroundTruth,
    pub outlier_mask: Vec<bool>,
    /// Source ellipse of each point for coupled scenarios (`true` = inner);
    /// outliers keep the label of the point they replaced.
    pub inner_labels: Option<Vec<bool>>,
}

/// Draws `g, h ~ U[0,20]`, `b ~ U[10,50]`, `a ~ U[b+5,55]`,
/// `θ ~ U[-90°,90°]`.
pub fn draw_ellipse<R: Rng + ?Sized>(rng: &mut R) -> EllipseGeometry {
    let g = rng.random_range(0.0..=20.0);
    let h = rng.random_range(0.0..=20.0);
    let b = rng.random_range(10.0..=50.0);
    let a = rng.random_range(b + 5.0..=55.0);
    let theta = rng.random_range(-90.0f64..=90.0).to_radians();
    EllipseGeometry::new(g, h, a, b, theta)
}

pub fn generate_ellipse(seed: u64) -> EllipseGeometry {
    draw_ellipse(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// Draws the ground truth from `cfg.seed` and generates the data.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<GeneratedScenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let outer = draw_ellipse(&mut rng);
    let truth = if cfg.scenario.is_coupled() {
        let mu = rng.random_range(0.0..1.0);
        GroundTruth::Coupled { outer, inner: inner_of(&outer, mu), mu }
    } else {
        GroundTruth::Single { ellipse: outer }
    };
    generate_for(cfg, truth, &mut rng)
}

/// Generates data for a fixed ground truth; `cfg.seed` is ignored in favor
/// of `rng`.
pub fn generate_for<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    truth: GroundTruth,
    rng: &mut R,
) -> Result<GeneratedScenario> {
    cfg.validate()?;
    let n = cfg.n_points;
    let main = *truth.outer();
    let sources: Vec<(EllipseGeometry, bool)> = match truth {
        GroundTruth::Single { ellipse } => vec![(ellipse, false); n],
        GroundTruth::Coupled { outer, inner, .. } => {
            (0..n).map(|i| if i < n.div_ceil(2) { (outer, false) } else { (inner, true) }).collect()
        }
    };
    let noise =
        Normal::new(0.0, cfg.noise_scale_factor * main.b).map_err(|e| Error::InvalidInput(format!("noise: {e}")))?;
    let mut clean = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    for (e, _) in &sources {
        let p = e.point_at(rng.random_range(0.0..std::f64::consts::TAU));
        clean.push(p);
        points.push([p[0] + noise.sample(rng), p[1] + noise.sample(rng)]);
    }

    let count = cfg.outlier_count();
    let mut outlier_idx = rand::seq::index::sample(rng, n, count).into_vec();
    outlier_idx.sort_unstable();
    let mut mask = vec![false; n];
    let (a, b) = (main.a, main.b);
    match cfg.scenario {
        Scenario::UniformZeroMean | Scenario::CoupledUniform | Scenario::UniformSkewed => {
            let hi = if cfg.scenario == Scenario::UniformSkewed { a } else { b };
            for &i in &outlier_idx {
                let p = clean[i];
                points[i] = [p[0] + rng.random_range(-b..hi), p[1] + rng.random_range(-b..hi)];
            }
        }
        Scenario::Cluster | Scenario::OneSidedInside | Scenario::OneSidedOutside => {
            let centers: Vec<[f64; 2]> = (0..CLUSTERS)
                .map(|_| match cfg.scenario {
                    Scenario::Cluster => [main.g + rng.random_range(-b..b), main.h + rng.random_range(-b..b)],
                    _ => {
                        let (lo, hi) = if cfg.scenario == Scenario::OneSidedInside { (0.25, 0.5) } else { (1.5, 2.0) };
                        let r = rng.random_range(lo * b..hi * b);
                        let phi = rng.random_range(0.0..std::f64::consts::TAU);
                        [main.g + r * phi.cos(), main.h + r * phi.sin()]
                    }
                })
                .collect();
            let half = 0.5 * CLUSTER_SIDE;
            for (j, &i) in outlier_idx.iter().enumerate() {
                let c = centers[j % CLUSTERS];
                points[i] = [c[0] + rng.random_range(-half..half), c[1] + rng.random_range(-half..half)];
            }
        }
    }
    for &i in &outlier_idx {
        mask[i] = true;
    }
    let inner_labels = truth_is_coupled(&truth).then(|| sources.iter().map(|s| s.1).collect());
    Ok(GeneratedScenario { config: *cfg, points: PointSet::new(points)?, truth, outlier_mask: mask, inner_labels })
}

fn truth_is_coupled(t: &GroundTruth) -> bool {
    matches!(t, GroundTruth::Coupled { .. })
}

/// Difference of parameter vectors with the orientation (index 4) wrapped
/// to `(-π/2, π/2]`.
pub fn param_error(est: &[f64], truth: &[f64]) -> Vec<f64> {
    est.iter().zip(truth).enumerate().map(|(i, (e, t))| if i == 4 { canonical_angle(e - t) } else { e - t }).collect()
}

/// `sqrt(mean ‖q̂ - q‖²)` with wrapped orientation.
pub fn nrmse(estimates: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<f64> {
    if estimates.is_empty() || estimates.len() != truths.len() {
        return Err(Error::InvalidInput(format!(
            "nrmse needs equal, non-empty inputs (got {} and {})",
            estimates.len(),
            truths.len()
        )));
    }
    let sq: f64 = estimates.iter().zip(truths).map(|(e, t)| param_error(e, t).iter().map(|d| d * d).sum::<f64>()).sum();
    Ok((sq / estimates.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MccVc,
    /// One uniform-weight cone program (zero center), no reweighting.
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub scenarios: Vec<Scenario>,
    pub outlier_fractions: Vec<f64>,
    pub methods: Vec<Method>,
    pub ellipses: usize,
    pub runs: usize,
    /// Overrides the per-scenario default point count.
    pub n_points: Option<usize>,
    pub noise_scale_factor: f64,
    pub master_seed: u64,
    pub fit: FitConfig,
    pub failure_rule: FailureRule,
    /// Wall-clock timings make reports non-reproducible, so they are opt-in.
    pub record_timing: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![Scenario::UniformZeroMean],
            outlier_fractions: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            methods: vec![Method::MccVc],
            ellipses: 10,
            runs: 20,
            n_points: None,
            noise_scale_factor: 0.005,
            master_seed: 0,
            fit: FitConfig::default(),
            failure_rule: FailureRule::default(),
            record_timing: false,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.outlier_fractions.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidInput("campaign grid is empty".into()));
        }
        if self.ellipses == 0 || self.runs == 0 {
            return Err(Error::InvalidInput("ellipses and runs must be at least 1".into()));
        }
        self.fit.validate()?;
        for &s in &self.scenarios {
            for &f in &self.outlier_fractions {
                self.scenario_config(s, f, 0).validate()?;
            }
        }
        Ok(())
    }

    fn scenario_config(&self, scenario: Scenario, fraction: f64, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            scenario,
            n_points: self.n_points.unwrap_or(scenario.default_points()),
            outlier_fraction: fraction,
            noise_scale_factor: self.noise_scale_factor,
            seed,
        }
    }
}

/// Chains keyed ChaCha streams: each part selects a stream of the generator
/// seeded with the running value.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(master, |s, &p| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        rng.set_stream(p);
        rng.next_u64()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub outlier_fraction: f64,
    pub method: Method,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub truth: Vec<f64>,
    pub estimate: Option<Vec<f64>>,
    pub success: bool,
    pub reason: Option<String>,
    pub iterations: usize,
    pub converged: bool,
    /// Fraction of all points (outliers included, labeled by their source
    /// ellipse) assigned to the wrong ellipse; coupled scenarios only.
    pub association_error: Option<f64>,
    /// Fitted conic (outer one for coupled fits) in input coordinates,
    /// unnormalized.
    pub conic: Option<[f64; 6]>,
    /// Largest certified KKT residual over the fit's cone programs.
    pub max_kkt_residual: f64,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub scenario: Scenario,
    pub outlier_fraction: f64,
    pub method: Method,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Over successful runs only; `None` when every run failed.
    pub nrmse: Option<f64>,
    /// Per-parameter RMSE over successful runs (`g, h, a, b, θ[, μ]`).
    pub rmse: Option<Vec<f64>>,
    pub mean_iterations: f64,
    pub association_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub schema_version: u32,
    /// Interpretations of the scenario definitions that affect the data.
    pub notes: Vec<&'static str>,
    pub config: CampaignConfig,
    pub summaries: Vec<CellSummary>,
    pub records: Vec<RunRecord>,
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(format!("serialize report: {e}")))
    }

    pub fn summary(&self, scenario: Scenario, fraction: f64, method: Method) -> Option<&CellSummary> {
        self.summaries.iter().find(|s| s.scenario == scenario && s.outlier_fraction == fraction && s.method == method)
    }
}

/// Outcome of one fit against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub estimate: Option<Vec<f64>>,
    pub conic: Option<[f64; 6]>,
    pub max_kkt_residual: f64,
    pub failure: Option<String>,
    pub iterations: usize,
    pub converged: bool,
    pub association_error: Option<f64>,
}

/// Fits `data` with `method` and applies `rule` against the ground truth.
pub fn evaluate(data: &GeneratedScenario, method: Method, fit: &FitConfig, rule: &FailureRule) -> Evaluation {
    match data.truth {
        GroundTruth::Single { ellipse } => {
            let report = match method {
                Method::MccVc => mcc::fit_single(&data.points, fit),
                Method::Baseline => mcc::fit_baseline_ls(&data.points, fit.epsilon),
            };
            match report {
                Ok(r) => {
                    let failure = match (&r.failure, &r.geometry) {
                        (Some(f), _) => Some(f.clone()),
                        (None, Some(q)) => rule.assess(q, &ellipse),
                        (None, None) => Some("no geometry".into()),
                    };
                    Evaluation {
                        estimate: r.geometry.map(|q| q.as_array().to_vec()),
                        conic: r.conic.map(|v| v.0),
                        max_kkt_residual: r.max_kkt_residual,
                        failure,
                        iterations: r.iterations,
                        converged: r.converged,
                        association_error: None,
                    }
                }
                Err(e) => Evaluation::error(e.to_string()),
            }
        }
        GroundTruth::Coupled { outer, inner, .. } => {
            let labels = data.inner_labels.as_deref().unwrap_or(&[]);
            let assoc = match coupled::associate(&data.points, fit.epsilon) {
                Ok(a) => a,
                Err(e) => return Evaluation::error(e.to_string()),
            };
            let wrong = assoc.inner().iter().zip(labels).filter(|(a, b)| a != b).count();
            let association_error = Some(wrong as f64 / labels.len().max(1) as f64);
            let fitted = match method {
                Method::MccVc => coupled::fit_coupled_with(&data.points, assoc, fit),
                Method::Baseline => {
                    let cfg = FitConfig { max_iterations: 1, ..*fit };
                    coupled::fit_coupled_with(&data.points, assoc, &cfg)
                }
            };
            let mut ev = match fitted {
                Ok(f) => {
                    let failure = match (&f.report.failure, &f.geometry) {
                        (Some(r), _) => Some(r.clone()),
                        (None, Some(g)) => assess_coupled(rule, g, &outer, &inner),
                        (None, None) => Some("no geometry".into()),
                    };
                    Evaluation {
                        conic: f.conic.map(|c| c.outer().0),
                        max_kkt_residual: f.report.max_kkt_residual,
                        estimate: f.geometry.map(|g| {
                            let mut p = g.outer.as_array().to_vec();
                            p.push(g.mu);
                            p
                        }),
                        failure,
                        iterations: f.report.iterations,
                        converged: f.report.converged,
                        association_error: None,
                    }
                }
                Err(e) => Evaluation::error(e.to_string()),
            };
            ev.association_error = association_error;
            ev
        }
    }
}

fn assess_coupled(
    rule: &FailureRule,
    est: &CoupledGeometry,
    outer: &EllipseGeometry,
    inner: &EllipseGeometry,
) -> Option<String> {
    rule.assess(&est.outer, outer)
        .map(|r| format!("outer: {r}"))
        .or_else(|| rule.assess(&est.inner, inner).map(|r| format!("inner: {r}")))
}

impl Evaluation {
    fn error(reason: String) -> Self {
        Self {
            estimate: None,
            conic: None,
            max_kkt_residual: 0.0,
            failure: Some(reason),
            iterations: 0,
            converged: false,
            association_error: None,
        }
    }
}

/// Ground truth for ellipse `k` of a campaign; shared by every cell so
/// methods and outlier levels are compared on the same shapes.
pub fn campaign_truth(cfg: &CampaignConfig, scenario: Scenario, k: usize) -> GroundTruth {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, &[0, k as u64]));
    let outer = draw_ellipse(&mut rng);
    if scenario.is_coupled() {
        let mu = rng.random_range(0.0..1.0);
        GroundTruth::Coupled { outer, inner: inner_of(&outer, mu), mu }
    } else {
        GroundTruth::Single { ellipse: outer }
    }
}

/// Seed of the data for run `(k, m)` of a cell; independent of the method.
pub fn run_seed(cfg: &CampaignConfig, scenario: Scenario, fraction: f64, k: usize, m: usize) -> u64 {
    let permille = (fraction * 1000.0).round() as u64;
    derive_seed(cfg.master_seed, &[1, scenario.index(), permille, k as u64, m as u64])
}

/// Runs the full grid in parallel. Individual fit failures are recorded,
/// never propagated; only an invalid configuration is an error.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &scenario in &cfg.scenarios {
        for &fraction in &cfg.outlier_fractions {
            for &method in &cfg.methods {
                for k in 0..cfg.ellipses {
                    for m in 0..cfg.runs {
                        jobs.push((scenario, fraction, method, k, m));
                    }
                }
            }
        }
    }
    let records: Vec<RunRecord> = jobs
        .into_par_iter()
        .map(|(scenario, fraction, method, k, m)| run_one(cfg, scenario, fraction, method, k, m))
        .collect::<Result<_>>()?;
    let mut records = records;
    records.sort_by(|a, b| {
        a.scenario
            .cmp(&b.scenario)
            .then(a.outlier_fraction.total_cmp(&b.outlier_fraction))
            .then(a.method.cmp(&b.method))
            .then((a.k, a.m).cmp(&(b.k, b.m)))
    });
    let mut summaries = Vec::new();
    for &scenario in &cfg.scenarios {
        for &fraction in &cfg.outlier_fractions {
            for &method in &cfg.methods {
                let cell: Vec<&RunRecord> = records
                    .iter()
                    .filter(|r| r.scenario == scenario && r.outlier_fraction == fraction && r.method == method)
                    .collect();
                summaries.push(summarize(scenario, fraction, method, &cell));
            }
        }
    }
    Ok(BenchReport { schema_version: SCHEMA_VERSION, notes: NOTES.to_vec(), config: cfg.clone(), summaries, records })
}

fn run_one(
    cfg: &CampaignConfig,
    scenario: Scenario,
    fraction: f64,
    method: Method,
    k: usize,
    m: usize,
) -> Result<RunRecord> {
    let seed = run_seed(cfg, scenario, fraction, k, m);
    let truth = campaign_truth(cfg, scenario, k);
    let sc = cfg.scenario_config(scenario, fraction, seed);
    let data = generate_for(&sc, truth, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let start = Instant::now();
    let ev = evaluate(&data, method, &cfg.fit, &cfg.failure_rule);
    let elapsed = start.elapsed().as_secs_f64();
    Ok(RunRecord {
        scenario,
        outlier_fraction: fraction,
        method,
        k,
        m,
        seed,
        truth: truth.params(),
        estimate: ev.estimate,
        success: ev.failure.is_none(),
        reason: ev.failure,
        iterations: ev.iterations,
        converged: ev.converged,
        association_error: ev.association_error,
        conic: ev.conic,
        max_kkt_residual: ev.max_kkt_residual,
        seconds: cfg.record_timing.then_some(elapsed),
    })
}

fn summarize(scenario: Scenario, fraction: f64, method: Method, cell: &[&RunRecord]) -> CellSummary {
    let ok: Vec<&&RunRecord> = cell.iter().filter(|r| r.success).collect();
    let est: Vec<Vec<f64>> = ok.iter().filter_map(|r| r.estimate.clone()).collect();
    let tru: Vec<Vec<f64>> = ok.iter().filter(|r| r.estimate.is_some()).map(|r| r.truth.clone()).collect();
    let rmse = (!est.is_empty()).then(|| {
        let dim = est[0].len();
        (0..dim)
            .map(|j| {
                let s: f64 = est.iter().zip(&tru).map(|(e, t)| param_error(e, t)[j].powi(2)).sum();
                (s / est.len() as f64).sqrt()
            })
            .collect()
    });
    let assoc: Vec<f64> = cell.iter().filter_map(|r| r.association_error).collect();
    let n = cell.len().max(1) as f64;
    CellSummary {
        scenario,
        outlier_fraction: fraction,
        method,
        runs: cell.len(),
        successes: ok.len(),
        success_rate: ok.len() as f64 / n,
        nrmse: nrmse(&est, &tru).ok(),
        rmse,
        mean_iterations: cell.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
        association_error: (!assoc.is_empty()).then(|| assoc.iter().sum::<f64>() / assoc.len() as f64),
    }
}
