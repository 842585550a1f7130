//! Run configuration, verification checks and reports.
//!
//! Every command maps to a fixed list of checks. Checks are independent and
//! run in parallel; each draws randomness from its own ChaCha stream so the
//! report is identical for a fixed config.

use std::fmt::{self, Write as _};
use std::path::PathBuf;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigenvalue::{
    closed_form_breakdown, lambda_boundary_form, lambda_lattice, operator_probe, LambdaBreakdown,
    OperatorProbe, WaveParameters, DEFAULT_PROBE_STEP,
};
use crate::error::{Error, Result};
use crate::minkowski::{classical_action, interval_sq, Branch, FourVector};
use crate::phase_flow::{integrate_flow, max_relative_error, FlowCoefficients, FlowInitialData};
use crate::phase_functional::compare_phases;
use crate::stationarity::{
    degeneracy_spread, optimal_c, optimal_sigma1, reduced_lambda, stationary_lambda,
    StationarityReport, StationarySearch,
};
use crate::worldline::Worldline;

/// Step counts used to measure the RK4 convergence order.
pub const FLOW_ORDER_STEPS: [usize; 2] = [250, 500];
/// Allowed deviation of the observed RK4 order from 4.
pub const FLOW_ORDER_SLACK: f64 = 0.5;
/// Tolerance of the closed-form identity `stationary_lambda = classical_action`.
pub const IDENTITY_TOL: f64 = 1e-12;
/// `sigma2_0 C` values of the degeneracy grid; all keep `D >= 0.2`.
pub const DEGENERACY_GRID: [f64; 9] = [-0.4, -0.3, -0.2, -0.1, 0.0, 0.5, 1.0, 2.0, 4.0];
/// Interior perturbation amplitude relative to `|b - a|`.
pub const PERTURBATION_SCALE: f64 = 0.3;
/// Starting duration of the stationary search relative to the analytic one.
pub const SEARCH_GUESS_FACTOR: f64 = 0.7;
/// Points in the `lambda` versus `C` sweep.
pub const SWEEP_POINTS: usize = 200;

/// `sigma2_0` given as one value or a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigma2Values {
    One(f64),
    Many(Vec<f64>),
}

impl Sigma2Values {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Sigma2Values::One(v) => vec![*v],
            Sigma2Values::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub flow_tol: f64,
    pub lambda_tol: f64,
    pub stationarity_tol: f64,
    pub degeneracy_tol: f64,
    pub operator_tol: f64,
    pub phase_tol: f64,
    /// Relative standard deviation of `phase_q - phase_c` across perturbations.
    pub phase_spread_tol: f64,
    /// Minimum observed order of the perturbation spread.
    pub independence_order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            flow_tol: 1e-10,
            lambda_tol: 1e-6,
            stationarity_tol: 1e-8,
            degeneracy_tol: 1e-9,
            operator_tol: 1e-4,
            phase_tol: 1e-6,
            phase_spread_tol: 1e-8,
            independence_order: 2.0,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 8] {
        [
            ("flow_tol", self.flow_tol),
            ("lambda_tol", self.lambda_tol),
            ("stationarity_tol", self.stationarity_tol),
            ("degeneracy_tol", self.degeneracy_tol),
            ("operator_tol", self.operator_tol),
            ("phase_tol", self.phase_tol),
            ("phase_spread_tol", self.phase_spread_tol),
            ("independence_order", self.independence_order),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub a: FourVector,
    pub b: FourVector,
    pub m: f64,
    pub hbar_tilde: f64,
    /// Lattice size for the eigenvalue and phase checks.
    #[serde(rename = "N")]
    pub n: usize,
    pub sigma2_0: Sigma2Values,
    pub sigma1_0: Option<FourVector>,
    /// Invariant duration; defaults to `|C*|` of the endpoints.
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub seed: u64,
    pub branch: Branch,
    pub output_dir: PathBuf,
    /// Replace the flow by frozen coefficients in the independence check.
    pub negative_control: bool,
    /// RK4 steps for the flow check.
    pub flow_steps: usize,
    /// Lattice size of the operator oracle.
    pub operator_n: usize,
    pub independence_grids: Vec<usize>,
    pub perturbations: usize,
    pub phase_perturbations: usize,
    /// Random parameter sets in the eigenvalue agreement sweep.
    pub lambda_samples: usize,
    /// Random endpoint pairs in the classical-limit check.
    pub classical_pairs: usize,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        let a = FourVector::new(0.5, 0.2, -0.1, 0.3);
        RunConfig {
            a,
            b: a + FourVector::new(2.0, 1.0, 1.0, 1.0),
            m: 0.5,
            hbar_tilde: 1.0,
            n: 10_000,
            sigma2_0: Sigma2Values::Many(vec![-0.4, 0.0, 0.5, 2.0]),
            sigma1_0: None,
            c: None,
            seed: 2024,
            branch: Branch::Plus,
            output_dir: PathBuf::from("out"),
            negative_control: false,
            flow_steps: 1000,
            operator_n: 16,
            independence_grids: vec![100, 1000, 10_000],
            perturbations: 100,
            phase_perturbations: 20,
            lambda_samples: 50,
            classical_pairs: 5,
            tolerances: Tolerances::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        for (name, tol) in self.tolerances.entries() {
            if !(tol > 0.0) {
                return bad(format!("tolerance {name} must be > 0, got {tol}"));
            }
        }
        if self.n < 2 || self.flow_steps < 2 || self.operator_n < 2 {
            return bad(format!(
                "lattice sizes must be >= 2 (N={}, flow_steps={}, operator_n={})",
                self.n, self.flow_steps, self.operator_n
            ));
        }
        if self.independence_grids.len() < 2 || self.independence_grids.iter().any(|&n| n < 2) {
            return bad("independence_grids needs at least two sizes, each >= 2".into());
        }
        if self.perturbations < 2 || self.phase_perturbations < 2 {
            return bad("at least two perturbations are needed for a spread".into());
        }
        if !(self.m >= 0.0) {
            return bad(format!("m must be >= 0, got {}", self.m));
        }
        if !(self.hbar_tilde > 0.0) {
            return bad(format!("hbar_tilde must be > 0, got {}", self.hbar_tilde));
        }
        if !(self.a.is_finite() && self.b.is_finite()) {
            return bad("endpoints must be finite".into());
        }
        let sigma2 = self.sigma2_0.values();
        if sigma2.is_empty() || sigma2.iter().any(|s| !s.is_finite()) {
            return bad("sigma2_0 must be a finite value or a non-empty list".into());
        }
        if self.sigma1_0.is_some_and(|s| !s.is_finite()) {
            return bad("sigma1_0 must be finite".into());
        }
        if let Some(c) = self.c {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("C must be > 0, got {c}"));
            }
        }
        Ok(())
    }

    /// Duration used for lattice checks: `C` if given, else `|C*|`, else 1.
    pub fn duration(&self) -> f64 {
        self.c
            .or_else(|| optimal_c(&self.a, &self.b, self.m, Branch::Plus).ok())
            .unwrap_or(1.0)
    }

    fn sigma1_for(&self, sigma2_0: f64, duration: f64) -> Result<FourVector> {
        match self.sigma1_0 {
            Some(s) => Ok(s),
            None => optimal_sigma1(sigma2_0, &self.a, &self.b, duration),
        }
    }

    fn rng(&self, check: CheckId) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(check as u64);
        rng
    }

    fn perturbation_amplitude(&self) -> f64 {
        PERTURBATION_SCALE * (self.b - self.a).euclidean_norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "<")]
    Below,
}

impl Comparison {
    fn holds(self, measured: f64, tolerance: f64) -> bool {
        match self {
            Comparison::AtMost => measured <= tolerance,
            Comparison::AtLeast => measured >= tolerance,
            Comparison::Below => measured < tolerance,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
            Comparison::Below => "<",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    /// `None` when the check could not be evaluated.
    pub measured: Option<f64>,
    pub comparison: Comparison,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn evaluate(
        id: CheckId,
        outcome: Result<Measurement>,
        comparison: Comparison,
        tolerance: f64,
    ) -> Check {
        let (measured, detail) = match outcome {
            Ok(m) => (Some(m.value), m.detail),
            Err(e) => (None, Some(e.to_string())),
        };
        let pass = measured.is_some_and(|v| comparison.holds(v, tolerance));
        Check {
            name: id.name().to_string(),
            status: if pass { Status::Pass } else { Status::Fail },
            measured,
            comparison,
            tolerance,
            detail,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let measured = self
            .measured
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.3e}"));
        write!(
            f,
            "{} {}: measured {} {} {:.3e}",
            self.status,
            self.name,
            measured,
            self.comparison.symbol(),
            self.tolerance
        )?;
        if let Some(d) = &self.detail {
            write!(f, " ({d})")?;
        }
        Ok(())
    }
}

struct Measurement {
    value: f64,
    detail: Option<String>,
}

impl Measurement {
    fn new(value: f64) -> Self {
        Measurement {
            value,
            detail: None,
        }
    }

    fn with(value: f64, detail: String) -> Self {
        Measurement {
            value,
            detail: Some(detail),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Flow,
    Lambda,
    Stationary,
    Phase,
    Verify,
}

impl Command {
    pub fn checks(self) -> &'static [CheckId] {
        use CheckId::*;
        match self {
            Command::Flow => &[FlowFidelity, FlowOrder],
            Command::Lambda => &[LambdaAgreement, WorldlineIndependence],
            Command::Stationary => &[Stationary, Sigma2Scan],
            Command::Phase => &[PhaseGap, PhaseIndependence],
            Command::Verify => &CheckId::ALL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::Lambda => "lambda",
            Command::Stationary => "stationary",
            Command::Phase => "phase",
            Command::Verify => "verify",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CheckId {
    FlowFidelity,
    FlowOrder,
    LambdaAgreement,
    LambdaAgreementRandom,
    WorldlineIndependence,
    NegativeControl,
    Stationary,
    Sigma2Scan,
    ClassicalLimit,
    ActionIdentity,
    Degeneracy,
    OperatorFree,
    OperatorSigma,
    OperatorSigmaR,
    OperatorImaginary,
    PhaseGap,
    PhaseIndependence,
}

impl CheckId {
    pub const ALL: [CheckId; 17] = [
        CheckId::FlowFidelity,
        CheckId::FlowOrder,
        CheckId::LambdaAgreement,
        CheckId::LambdaAgreementRandom,
        CheckId::WorldlineIndependence,
        CheckId::NegativeControl,
        CheckId::Stationary,
        CheckId::Sigma2Scan,
        CheckId::ClassicalLimit,
        CheckId::ActionIdentity,
        CheckId::Degeneracy,
        CheckId::OperatorFree,
        CheckId::OperatorSigma,
        CheckId::OperatorSigmaR,
        CheckId::OperatorImaginary,
        CheckId::PhaseGap,
        CheckId::PhaseIndependence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckId::FlowFidelity => "flow_fidelity",
            CheckId::FlowOrder => "flow_order",
            CheckId::LambdaAgreement => "lambda_agreement",
            CheckId::LambdaAgreementRandom => "lambda_agreement_random",
            CheckId::WorldlineIndependence => "worldline_independence",
            CheckId::NegativeControl => "negative_control_frozen",
            CheckId::Stationary => "stationary_point",
            CheckId::Sigma2Scan => "sigma2_scan",
            CheckId::ClassicalLimit => "classical_limit",
            CheckId::ActionIdentity => "action_identity",
            CheckId::Degeneracy => "degeneracy",
            CheckId::OperatorFree => "operator_free",
            CheckId::OperatorSigma => "operator_sigma",
            CheckId::OperatorSigmaR => "operator_sigma_r",
            CheckId::OperatorImaginary => "operator_imaginary",
            CheckId::PhaseGap => "phase_gap",
            CheckId::PhaseIndependence => "phase_trajectory_independence",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            CheckId::FlowFidelity => "RK4 flow against the closed form, max relative error",
            CheckId::FlowOrder => "RK4 convergence order, deviation from 4",
            CheckId::LambdaAgreement => {
                "closed, boundary and lattice eigenvalue agreement for the config"
            }
            CheckId::LambdaAgreementRandom => {
                "eigenvalue agreement over random admissible parameter sets"
            }
            CheckId::WorldlineIndependence => {
                "order of the lattice eigenvalue spread over interior perturbations"
            }
            CheckId::NegativeControl => "frozen coefficients must fail the independence order",
            CheckId::Stationary => "numeric stationary point against the analytic one",
            CheckId::Sigma2Scan => {
                "stationary eigenvalue spread over the configured sigma2_0 values"
            }
            CheckId::ClassicalLimit => "stationary search on random timelike pairs, both branches",
            CheckId::ActionIdentity => "stationary eigenvalue equals the classical action",
            CheckId::Degeneracy => "eigenvalue spread over a nine-value sigma2_0 grid",
            CheckId::OperatorFree => "operator on a constant wave functional equals m^2 C",
            CheckId::OperatorSigma => "finite-difference operator against prediction, phase only",
            CheckId::OperatorSigmaR => {
                "finite-difference operator against prediction, phase and real part"
            }
            CheckId::OperatorImaginary => "imaginary part of the operator against -hbar R",
            CheckId::PhaseGap => "log-parametrized phase against the quadratic phase plus constant",
            CheckId::PhaseIndependence => {
                "relative spread of the phase difference over perturbations"
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: Command,
    pub config: RunConfig,
    pub checks: Vec<Check>,
    pub overall: Status,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.overall == Status::Pass
    }
}

/// A file produced by a command, relative to the output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub file_name: &'static str,
    pub contents: String,
}

/// Runs the checks of `command` in parallel and assembles the report in order.
pub fn run_checks(command: Command, config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let checks: Vec<Check> = command
        .checks()
        .par_iter()
        .map(|&id| run_check(id, config))
        .collect();
    let overall = if checks.iter().all(|c| c.status == Status::Pass) {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(RunReport {
        command,
        config: config.clone(),
        checks,
        overall,
    })
}

/// Report plus the command's data files.
pub fn run_command(command: Command, config: &RunConfig) -> Result<(RunReport, Vec<Artifact>)> {
    let report = run_checks(command, config)?;
    let mut artifacts = vec![Artifact {
        file_name: "run_report.json",
        contents: to_json(&report),
    }];
    // data files are best effort: a failing domain check is already in the report
    match command {
        Command::Flow => artifacts.extend(flow_artifacts(config).unwrap_or_default()),
        Command::Lambda => artifacts.extend(lambda_artifact(config).ok()),
        Command::Stationary => artifacts.extend(stationary_artifacts(config).unwrap_or_default()),
        Command::Phase | Command::Verify => {}
    }
    Ok((report, artifacts))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn run_check(id: CheckId, config: &RunConfig) -> Check {
    let tol = &config.tolerances;
    use Comparison::*;
    match id {
        CheckId::FlowFidelity => Check::evaluate(id, flow_fidelity(config), AtMost, tol.flow_tol),
        CheckId::FlowOrder => Check::evaluate(id, flow_order(config), AtMost, FLOW_ORDER_SLACK),
        CheckId::LambdaAgreement => {
            Check::evaluate(id, lambda_agreement(config), AtMost, tol.lambda_tol)
        }
        CheckId::LambdaAgreementRandom => {
            Check::evaluate(id, lambda_agreement_random(config), AtMost, tol.lambda_tol)
        }
        CheckId::WorldlineIndependence => Check::evaluate(
            id,
            worldline_independence(config, config.negative_control),
            AtLeast,
            tol.independence_order,
        ),
        CheckId::NegativeControl => Check::evaluate(
            id,
            worldline_independence(config, true),
            Below,
            tol.independence_order,
        ),
        CheckId::Stationary => {
            Check::evaluate(id, stationary_point(config), AtMost, tol.stationarity_tol)
        }
        CheckId::Sigma2Scan => Check::evaluate(id, sigma2_scan(config), AtMost, tol.degeneracy_tol),
        CheckId::ClassicalLimit => {
            Check::evaluate(id, classical_limit(config), AtMost, tol.stationarity_tol)
        }
        CheckId::ActionIdentity => {
            Check::evaluate(id, action_identity(config), AtMost, IDENTITY_TOL)
        }
        CheckId::Degeneracy => Check::evaluate(id, degeneracy(config), AtMost, tol.degeneracy_tol),
        CheckId::OperatorFree => Check::evaluate(id, operator_free(config), AtMost, 0.0),
        CheckId::OperatorSigma => Check::evaluate(
            id,
            operator_case(config, false).map(|p| Measurement::new(p.relative_residual())),
            AtMost,
            tol.operator_tol,
        ),
        CheckId::OperatorSigmaR => Check::evaluate(
            id,
            operator_case(config, true).map(|p| Measurement::new(p.relative_residual())),
            AtMost,
            tol.operator_tol,
        ),
        CheckId::OperatorImaginary => {
            Check::evaluate(id, operator_imaginary(config), AtMost, tol.operator_tol)
        }
        CheckId::PhaseGap => Check::evaluate(id, phase_gap(config), AtMost, tol.phase_tol),
        CheckId::PhaseIndependence => {
            Check::evaluate(id, phase_independence(config), AtMost, tol.phase_spread_tol)
        }
    }
}

/// Pairs each `sigma2_0` with its initial data at `duration`.
fn flow_inits(config: &RunConfig, duration: f64) -> Result<Vec<FlowInitialData>> {
    config
        .sigma2_0
        .values()
        .into_iter()
        .map(|s2| Ok(FlowInitialData::new(config.sigma1_for(s2, duration)?, s2)))
        .collect()
}

/// `(sigma2_0, value)` of the largest value, with its detail line.
fn worst(items: impl IntoIterator<Item = Result<(f64, f64)>>) -> Result<Measurement> {
    let mut best: Option<(f64, f64)> = None;
    for item in items {
        let (s2, v) = item?;
        if best.is_none_or(|(_, b)| v > b || v.is_nan()) {
            best = Some((s2, v));
        }
    }
    let (s2, v) = best.ok_or_else(|| Error::InvalidParameter("no sigma2_0 values".into()))?;
    Ok(Measurement::with(v, format!("worst at sigma2_0={s2}")))
}

fn flow_fidelity(config: &RunConfig) -> Result<Measurement> {
    let duration = config.duration();
    worst(flow_inits(config, duration)?.into_iter().map(|init| {
        let flow = integrate_flow(init, duration, config.flow_steps)?;
        Ok((init.sigma2_0, max_relative_error(&flow)?))
    }))
}

/// Worst `|log2(e(N) / e(2N)) - 4|`; entries whose coarse error is at
/// roundoff level (constant flows) carry no order information and are skipped.
fn flow_order(config: &RunConfig) -> Result<Measurement> {
    let duration = config.duration();
    let [coarse, fine] = FLOW_ORDER_STEPS;
    let mut items = Vec::new();
    for init in flow_inits(config, duration)? {
        let e1 = max_relative_error(&integrate_flow(init, duration, coarse)?)?;
        let e2 = max_relative_error(&integrate_flow(init, duration, fine)?)?;
        if e1 > 1e-13 {
            items.push(Ok((init.sigma2_0, ((e1 / e2).log2() - 4.0).abs())));
        }
    }
    if items.is_empty() {
        return Ok(Measurement::with(
            0.0,
            "all flows exact at the coarse grid".into(),
        ));
    }
    worst(items)
}

/// The three eigenvalues for one parameter set on a straight line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaComparison {
    pub closed_form: LambdaBreakdown,
    pub boundary_form: LambdaBreakdown,
    pub lattice: f64,
}

impl LambdaComparison {
    /// Largest pairwise difference relative to the sum of term magnitudes.
    pub fn relative_disagreement(&self) -> f64 {
        let v = [
            self.closed_form.total,
            self.boundary_form.total,
            self.lattice,
        ];
        let spread = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - v.iter().cloned().fold(f64::INFINITY, f64::min);
        spread / self.closed_form.magnitude().max(f64::MIN_POSITIVE)
    }
}

pub fn compare_lambda(
    init: FlowInitialData,
    a: &FourVector,
    b: &FourVector,
    m: f64,
    duration: f64,
    intervals: usize,
) -> Result<LambdaComparison> {
    let closed_form = closed_form_breakdown(&init, a, b, m, duration)?;
    let flow = FlowCoefficients::closed_form(init, duration, intervals)?;
    let boundary_form = lambda_boundary_form(&flow, a, b, m);
    let w = Worldline::straight_line(*a, *b, duration, intervals)?;
    let lattice = lambda_lattice(&w, &flow, m)?;
    Ok(LambdaComparison {
        closed_form,
        boundary_form,
        lattice,
    })
}

fn lambda_agreement(config: &RunConfig) -> Result<Measurement> {
    let duration = config.duration();
    worst(flow_inits(config, duration)?.into_iter().map(|init| {
        let cmp = compare_lambda(init, &config.a, &config.b, config.m, duration, config.n)?;
        Ok((init.sigma2_0, cmp.relative_disagreement()))
    }))
}

fn random_four(rng: &mut ChaCha8Rng, half_width: f64) -> FourVector {
    FourVector(std::array::from_fn(|_| {
        rng.gen_range(-half_width..half_width)
    }))
}

fn lambda_agreement_random(config: &RunConfig) -> Result<Measurement> {
    let mut rng = config.rng(CheckId::LambdaAgreementRandom);
    let sets: Vec<_> = (0..config.lambda_samples)
        .map(|_| {
            let a = random_four(&mut rng, 2.0);
            let b = random_four(&mut rng, 2.0);
            let sigma1 = random_four(&mut rng, 1.0);
            let duration = rng.gen_range(0.5..2.0);
            // keeps D >= 0.2 on [0, C]
            let sigma2 = rng.gen_range(-0.4 / duration..2.0);
            let m = rng.gen_range(0.0..2.0);
            (FlowInitialData::new(sigma1, sigma2), a, b, m, duration)
        })
        .collect();
    let values = sets
        .par_iter()
        .map(|(init, a, b, m, c)| {
            compare_lambda(*init, a, b, *m, *c, config.n).map(|cmp| cmp.relative_disagreement())
        })
        .collect::<Result<Vec<_>>>()?;
    let (k, v) = values.iter().enumerate().fold(
        (0, 0.0f64),
        |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
    );
    Ok(Measurement::with(
        v,
        format!("{} sets, worst is set {k}", values.len()),
    ))
}

/// Spread (max - min) of the lattice eigenvalue over interior perturbations,
/// for each grid size.
pub fn perturbation_spreads(
    config: &RunConfig,
    init: FlowInitialData,
    duration: f64,
    frozen: bool,
) -> Result<Vec<(usize, f64)>> {
    let amplitude = config.perturbation_amplitude();
    config
        .independence_grids
        .iter()
        .map(|&n| {
            let flow = if frozen {
                FlowCoefficients::frozen(init, duration, n)?
            } else {
                FlowCoefficients::closed_form(init, duration, n)?
            };
            let base = Worldline::straight_line(config.a, config.b, duration, n)?;
            let lambdas = (0..config.perturbations as u64)
                .into_par_iter()
                .map(|k| {
                    lambda_lattice(
                        &base.perturb_interior(amplitude, config.seed.wrapping_add(k)),
                        &flow,
                        config.m,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let hi = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok((n, hi - lo))
        })
        .collect()
}

/// Least-squares slope of `-log(spread)` against `log(N)`.
pub fn observed_order(spreads: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = spreads
        .iter()
        .map(|&(n, s)| ((n as f64).ln(), -s.ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Lowest observed order over the configured `sigma2_0` values, or the
/// highest when `frozen` (the control must fail for every value). Frozen
/// coefficients coincide with the flow at `sigma2_0 = 0`, which is skipped.
fn worldline_independence(config: &RunConfig, frozen: bool) -> Result<Measurement> {
    let duration = config.duration();
    let mut out: Option<(f64, f64, f64)> = None;
    for init in flow_inits(config, duration)? {
        if frozen && init.sigma2_0 == 0.0 {
            continue;
        }
        let spreads = perturbation_spreads(config, init, duration, frozen)?;
        let order = observed_order(&spreads);
        let finest = spreads.last().map_or(f64::NAN, |s| s.1);
        let replace = match out {
            None => true,
            Some((_, o, _)) => (frozen && order > o) || (!frozen && order < o) || order.is_nan(),
        };
        if replace {
            out = Some((init.sigma2_0, order, finest));
        }
    }
    let (s2, order, finest) = out.ok_or_else(|| {
        Error::InvalidParameter("the negative control needs a nonzero sigma2_0".into())
    })?;
    Ok(Measurement::with(
        order,
        format!("sigma2_0={s2}, spread at finest N {finest:.3e}"),
    ))
}

fn search(config: &RunConfig) -> Result<(StationarityReport, f64, f64)> {
    let sigma2 = config.sigma2_0.values();
    let exact_c = optimal_c(&config.a, &config.b, config.m, config.branch)?;
    let exact_lambda = stationary_lambda(&config.a, &config.b, config.m, config.branch)?;
    let guess = config
        .c
        .map_or(SEARCH_GUESS_FACTOR * exact_c, |c| config.branch.sign() * c);
    let report = StationarySearch::new(config.a, config.b, config.m)
        .scan(sigma2.clone())
        .run(sigma2[0], guess)?;
    Ok((report, exact_c, exact_lambda))
}

fn stationary_point(config: &RunConfig) -> Result<Measurement> {
    let (report, exact_c, exact_lambda) = search(config)?;
    let err = (report.c_star - exact_c)
        .abs()
        .max((report.lambda_star - exact_lambda).abs());
    Ok(Measurement::with(
        err,
        format!(
            "C*={} lambda*={} in {} iterations",
            report.c_star, report.lambda_star, report.iterations
        ),
    ))
}

fn sigma2_scan(config: &RunConfig) -> Result<Measurement> {
    let (report, _, _) = search(config)?;
    Ok(Measurement::with(
        report.scan_spread(),
        format!("{} admissible values", report.sigma2_scan.len()),
    ))
}

fn random_timelike(rng: &mut ChaCha8Rng) -> (FourVector, FourVector, f64) {
    let a = random_four(rng, 1.0);
    let dt = rng.gen_range(0.5..2.0);
    let v = loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.8..0.8));
        if v.iter().map(|x| x * x).sum::<f64>() < 0.64 {
            break v;
        }
    };
    let b = a + FourVector::new(dt, v[0] * dt, v[1] * dt, v[2] * dt);
    (a, b, rng.gen_range(0.5..2.0))
}

fn classical_pairs(config: &RunConfig) -> Vec<(FourVector, FourVector, f64)> {
    let mut rng = config.rng(CheckId::ClassicalLimit);
    (0..config.classical_pairs)
        .map(|_| random_timelike(&mut rng))
        .collect()
}

/// The search runs at `sigma2_0 = ±0.5` with the sign of the branch, which
/// keeps `D > 1` for every duration of that branch.
fn classical_limit(config: &RunConfig) -> Result<Measurement> {
    let runs: Vec<_> = classical_pairs(config)
        .into_iter()
        .flat_map(|pair| [Branch::Plus, Branch::Minus].map(|br| (pair, br)))
        .collect();
    let errors = runs
        .par_iter()
        .map(|&((a, b, m), branch)| {
            let c = optimal_c(&a, &b, m, branch)?;
            let lambda = stationary_lambda(&a, &b, m, branch)?;
            let report = StationarySearch::new(a, b, m).run(0.5 * branch.sign(), branch.sign())?;
            Ok((report.c_star - c)
                .abs()
                .max((report.lambda_star - lambda).abs()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Measurement::with(
        errors.iter().cloned().fold(0.0, f64::max),
        format!("{} searches", errors.len()),
    ))
}

fn action_identity(config: &RunConfig) -> Result<Measurement> {
    let mut pairs = classical_pairs(config);
    pairs.push((config.a, config.b, config.m));
    let mut worst_err = 0.0f64;
    for (a, b, m) in pairs {
        for branch in [Branch::Plus, Branch::Minus] {
            let err = (stationary_lambda(&a, &b, m, branch)?
                - classical_action(&a, &b, m, branch)?)
            .abs();
            worst_err = worst_err.max(err);
        }
    }
    Ok(Measurement::new(worst_err))
}

fn degeneracy(config: &RunConfig) -> Result<Measurement> {
    let duration = config.duration();
    let grid: Vec<f64> = DEGENERACY_GRID.iter().map(|g| g / duration).collect();
    Ok(Measurement::with(
        degeneracy_spread(&config.a, &config.b, config.m, duration, &grid)?,
        format!("C={duration}"),
    ))
}

fn operator_setup(
    config: &RunConfig,
    with_real_part: bool,
    free: bool,
) -> Result<(WaveParameters, Worldline)> {
    let duration = config.duration();
    let n = config.operator_n;
    let init = if free {
        FlowInitialData::default()
    } else {
        let s2 = config
            .sigma2_0
            .values()
            .into_iter()
            .find(|&s| s != 0.0)
            .unwrap_or(0.0);
        FlowInitialData::new(config.sigma1_for(s2, duration)?, s2)
    };
    let mut params = WaveParameters::phase_only(init, config.m, config.hbar_tilde, duration);
    if with_real_part {
        params = params.with_real_part(FourVector::new(0.05, 0.02, -0.01, 0.03), 0.1);
    }
    let w = Worldline::straight_line(config.a, config.b, duration, n)?
        .perturb_interior(0.1 * config.perturbation_amplitude(), config.seed);
    Ok((params, w))
}

fn operator_case(config: &RunConfig, with_real_part: bool) -> Result<OperatorProbe> {
    let (params, w) = operator_setup(config, with_real_part, false)?;
    operator_probe(&params, &w, DEFAULT_PROBE_STEP)
}

fn operator_free(config: &RunConfig) -> Result<Measurement> {
    let (params, w) = operator_setup(config, false, true)?;
    let probe = operator_probe(&params, &w, DEFAULT_PROBE_STEP)?;
    let exact = Complex64::new(config.m * config.m * params.duration, 0.0);
    Ok(Measurement::new((probe.operator_value - exact).norm()))
}

fn operator_imaginary(config: &RunConfig) -> Result<Measurement> {
    let probe = operator_case(config, true)?;
    let expected = probe.predicted.im;
    let err = (probe.operator_value.im - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
    Ok(Measurement::with(err, format!("-hbar R = {expected}")))
}

fn phase_sigma2(config: &RunConfig) -> Vec<f64> {
    config
        .sigma2_0
        .values()
        .into_iter()
        .filter(|&s| s != 0.0)
        .collect()
}

/// `(gap, raw difference)` per perturbation.
type PhaseSamples = Vec<(f64, f64)>;

/// Phase samples for each nonzero `sigma2_0`.
fn phase_runs(config: &RunConfig) -> Result<Vec<(f64, PhaseSamples)>> {
    let duration = config.duration();
    let sigma2 = phase_sigma2(config);
    if sigma2.is_empty() {
        return Err(Error::DegenerateQ(0.0));
    }
    let base = Worldline::straight_line(config.a, config.b, duration, config.n)?;
    let amplitude = config.perturbation_amplitude();
    sigma2
        .into_iter()
        .map(|s2| {
            let runs = (0..config.phase_perturbations as u64)
                .into_par_iter()
                .map(|k| {
                    let w = base.perturb_interior(amplitude, config.seed.wrapping_add(k));
                    let cmp = compare_phases(&w, s2, &config.a, &config.b, duration)?;
                    Ok((cmp.gap(), cmp.raw_difference()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((s2, runs))
        })
        .collect()
}

fn phase_gap(config: &RunConfig) -> Result<Measurement> {
    worst(
        phase_runs(config)?
            .into_iter()
            .map(|(s2, runs)| Ok((s2, runs.iter().map(|r| r.0).fold(0.0, f64::max)))),
    )
}

fn phase_independence(config: &RunConfig) -> Result<Measurement> {
    worst(phase_runs(config)?.into_iter().map(|(s2, runs)| {
        let k = runs.len() as f64;
        let mean = runs.iter().map(|r| r.1).sum::<f64>() / k;
        let var = runs.iter().map(|r| (r.1 - mean).powi(2)).sum::<f64>() / (k - 1.0);
        Ok((s2, var.sqrt() / (1.0 + mean.abs())))
    }))
}

/// RK4 flow for the first `sigma2_0`, and the error table
/// `sigma2_0,N,max_relative_error` at the order-check and configured step counts.
fn flow_artifacts(config: &RunConfig) -> Result<Vec<Artifact>> {
    let duration = config.duration();
    let inits = flow_inits(config, duration)?;
    let flow = integrate_flow(inits[0], duration, config.flow_steps)?.to_csv();
    let mut steps = FLOW_ORDER_STEPS.to_vec();
    steps.push(config.flow_steps);
    steps.sort_unstable();
    steps.dedup();
    let mut table = String::from("sigma2_0,N,max_relative_error\n");
    for init in &inits {
        for &n in &steps {
            let err = max_relative_error(&integrate_flow(*init, duration, n)?)?;
            let _ = writeln!(table, "{:.16e},{n},{err:.16e}", init.sigma2_0);
        }
    }
    Ok(vec![
        Artifact {
            file_name: "flow.csv",
            contents: flow,
        },
        Artifact {
            file_name: "flow_errors.csv",
            contents: table,
        },
    ])
}

#[derive(Serialize)]
struct SpreadRow {
    #[serde(rename = "N")]
    n: usize,
    spread: f64,
    frozen_spread: f64,
}

#[derive(Serialize)]
struct LambdaArtifact {
    sigma2_0: f64,
    #[serde(rename = "C")]
    duration: f64,
    #[serde(rename = "N")]
    n: usize,
    #[serde(flatten)]
    comparison: LambdaComparison,
    spread_table: Vec<SpreadRow>,
}

fn lambda_artifact(config: &RunConfig) -> Result<Artifact> {
    let duration = config.duration();
    let init = flow_inits(config, duration)?[0];
    let comparison = compare_lambda(init, &config.a, &config.b, config.m, duration, config.n)?;
    let spreads = perturbation_spreads(config, init, duration, false)?;
    let frozen = perturbation_spreads(config, init, duration, true)?;
    let spread_table = spreads
        .iter()
        .zip(&frozen)
        .map(|(&(n, spread), &(_, frozen_spread))| SpreadRow {
            n,
            spread,
            frozen_spread,
        })
        .collect();
    let artifact = LambdaArtifact {
        sigma2_0: init.sigma2_0,
        duration,
        n: config.n,
        comparison,
        spread_table,
    };
    Ok(Artifact {
        file_name: "lambda_breakdown.json",
        contents: to_json(&artifact),
    })
}

/// `C,lambda` samples of the reduced eigenvalue from `0.1 |C*|` to `3 |C*|` on the configured branch.
pub fn sweep_csv(
    a: &FourVector,
    b: &FourVector,
    m: f64,
    branch: Branch,
    c_scale: f64,
) -> Result<String> {
    let mut out = String::from("C,lambda\n");
    for k in 0..SWEEP_POINTS {
        let c = branch.sign() * c_scale * (0.1 + 2.9 * k as f64 / (SWEEP_POINTS - 1) as f64);
        let _ = writeln!(out, "{c:.16e},{:.16e}", reduced_lambda(c, a, b, m)?);
    }
    Ok(out)
}

fn stationary_artifacts(config: &RunConfig) -> Result<Vec<Artifact>> {
    let (report, _, _) = search(config)?;
    let scale = if interval_sq(&config.a, &config.b) > 0.0 && config.m > 0.0 {
        report.c_star.abs()
    } else {
        config.duration()
    };
    Ok(vec![
        Artifact {
            file_name: "stationarity.json",
            contents: to_json(&report),
        },
        Artifact {
            file_name: "sweep_lambda_vs_C.csv",
            contents: sweep_csv(&config.a, &config.b, config.m, config.branch, scale)?,
        },
        Artifact {
            file_name: "sigma2_scan.csv",
            contents: report.scan_csv(),
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            n: 10_000,
            independence_grids: vec![50, 100, 200],
            perturbations: 10,
            phase_perturbations: 5,
            lambda_samples: 5,
            classical_pairs: 2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn default_duration_is_analytic() {
        let c = RunConfig::default();
        assert!((c.duration() - 1.0).abs() < 1e-15);
        assert!((interval_sq(&c.a, &c.b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = RunConfig::default();
        c.tolerances.lambda_tol = 0.0;
        assert!(c.validate().is_err());
        let c = RunConfig {
            n: 1,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            m: -1.0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            sigma2_0: Sigma2Values::Many(vec![]),
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn sigma2_accepts_scalar_or_list() {
        let one: Sigma2Values = serde_json::from_str("0.4").unwrap();
        assert_eq!(one.values(), vec![0.4]);
        let many: Sigma2Values = serde_json::from_str("[0.1, 2]").unwrap();
        assert_eq!(many.values(), vec![0.1, 2.0]);
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = RunConfig {
            c: Some(1.5),
            sigma1_0: Some(FourVector::new(1.0, 0.0, 0.0, 0.0)),
            ..small()
        };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn observed_order_of_exact_power_law() {
        let s: Vec<(usize, f64)> = [100usize, 1000, 10_000]
            .iter()
            .map(|&n| (n, 3.0 / (n as f64).powi(2)))
            .collect();
        assert!((observed_order(&s) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_suite_passes() {
        let report = run_checks(Command::Verify, &small()).unwrap();
        for c in &report.checks {
            assert_eq!(c.status, Status::Pass, "{c}");
        }
        assert!(report.passed());
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = small();
        let a = to_json(&run_checks(Command::Verify, &cfg).unwrap());
        let b = to_json(&run_checks(Command::Verify, &cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn flow_singularity_fails_the_check() {
        let cfg = RunConfig {
            sigma2_0: Sigma2Values::One(-0.5),
            c: Some(1.0),
            ..small()
        };
        let report = run_checks(Command::Flow, &cfg).unwrap();
        assert!(!report.passed());
        let detail = report.checks[0].detail.as_deref().unwrap();
        assert!(detail.contains("singular"), "{detail}");
    }

    #[test]
    fn constant_flow_has_zero_error() {
        let cfg = RunConfig {
            sigma2_0: Sigma2Values::One(0.0),
            ..small()
        };
        let report = run_checks(Command::Flow, &cfg).unwrap();
        assert_eq!(report.checks[0].measured, Some(0.0));
        assert!(report.passed());
    }

    #[test]
    fn negative_control_fails_independence() {
        let cfg = RunConfig {
            negative_control: true,
            ..small()
        };
        let report = run_checks(Command::Lambda, &cfg).unwrap();
        assert!(!report.passed());
        assert_eq!(report.checks[1].status, Status::Fail);
    }

    #[test]
    fn zero_coefficients_give_mass_term() {
        let cfg = RunConfig {
            sigma2_0: Sigma2Values::One(0.0),
            sigma1_0: Some(FourVector::ZERO),
            ..small()
        };
        let init = flow_inits(&cfg, cfg.duration()).unwrap()[0];
        let cmp = compare_lambda(init, &cfg.a, &cfg.b, cfg.m, cfg.duration(), cfg.n).unwrap();
        let mass = cfg.m * cfg.m * cfg.duration();
        assert_eq!(cmp.closed_form.total, mass);
        assert_eq!(cmp.boundary_form.total, mass);
        assert_eq!(cmp.lattice, mass);
    }

    #[test]
    fn null_endpoints_fail_stationary() {
        let a = FourVector::ZERO;
        let cfg = RunConfig {
            a,
            b: FourVector::new(1.0, 1.0, 0.0, 0.0),
            c: Some(1.0),
            ..small()
        };
        let report = run_checks(Command::Stationary, &cfg).unwrap();
        assert!(!report.passed());
        assert!(report.checks[0].detail.as_deref().unwrap().contains("null"));
    }

    #[test]
    fn tightened_tolerances_fail_at_small_n() {
        let mut cfg = RunConfig { n: 100, ..small() };
        cfg.tolerances.lambda_tol *= 1e-3;
        cfg.tolerances.phase_tol *= 1e-3;
        let report = run_checks(Command::Verify, &cfg).unwrap();
        let failed: Vec<_> = report
            .checks
            .iter()
            .filter(|c| c.status == Status::Fail)
            .map(|c| c.name.as_str())
            .collect();
        assert!(failed.contains(&"lambda_agreement"), "{failed:?}");
        assert!(failed.contains(&"phase_gap"), "{failed:?}");
    }

    #[test]
    fn stationary_artifacts_are_written() {
        let (report, files) = run_command(Command::Stationary, &small()).unwrap();
        assert!(report.passed());
        let names: Vec<_> = files.iter().map(|f| f.file_name).collect();
        assert_eq!(
            names,
            [
                "run_report.json",
                "stationarity.json",
                "sweep_lambda_vs_C.csv",
                "sigma2_scan.csv"
            ]
        );
        assert_eq!(files[2].contents.lines().count(), SWEEP_POINTS + 1);
    }
}
