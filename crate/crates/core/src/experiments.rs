//! Experiment commands: each runs one engine, writes its artifacts and
//! returns a short human-readable report.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analytic::{AnalyticEngine, AnalyticRound, SteadyState};
use crate::error::{Error, Result};
use crate::keyrate::{key_rate_curve, stale_measurements, KeyRatePoint, QberMode};
use crate::matching::{
    adjacency_listing, cardinality_bounds, max_matching_bruteforce, max_matching_flow3,
    HypergraphInstance, Matcher,
};
use crate::memory::BitConfiguration;
use crate::noise::{binary_entropy, ghz_diag_lambdas, qbers_3, secret_fraction, Fidelities, GhzDiagonal3, QberSet};
use crate::oracle::circuit_oracle_3;
use crate::output::{num, opt_num, OutputDir, Table};
use crate::params::{Params, Strategy};
use crate::sim::{run_ensemble, run_ensemble_batches, EnsembleStats};

/// Batches used for batch-means error bars of key rates.
pub const KEY_RATE_BATCHES: usize = 10;

/// Everything a command needs besides its own arguments.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub params: Params,
    pub out: OutputDir,
    pub force: bool,
    pub quick: bool,
}

/// Printed summary and written files of one command.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
    /// False when a verification check failed.
    pub ok: bool,
}

impl Report {
    fn new() -> Self {
        Self {
            ok: true,
            ..Self::default()
        }
    }

    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    fn warn_all(&mut self, warnings: Vec<String>) {
        for w in warnings {
            self.line(format!("warning: {w}"));
        }
    }
}

fn range_cols(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

// ---------------------------------------------------------------- analytic

#[derive(Serialize)]
struct AnalyticSummary<'a> {
    steady_state: &'a SteadyState,
    final_router_rate: f64,
}

pub fn analytic_rate(exp: &Experiment) -> Result<Report> {
    let p = &exp.params;
    let mut report = Report::new();
    report.warn_all(p.warnings(true));
    let engine = AnalyticEngine::new(p, exp.force)?;
    let rounds = engine.run(p.total_rounds);
    let steady = engine.steady_state(1e-10, 100_000);

    let m = p.mem_per_party;
    let mut table = Table::new(
        ["round".to_string()]
            .into_iter()
            .chain(range_cols("prob_lambda_", m + 1))
            .chain(range_cols("prob_sigma_", m + 1))
            .chain(["expected_l".into(), "router_rate".into()]),
    );
    for r in &rounds {
        table.push(analytic_row(r));
    }
    report.files.push(exp.out.write_csv("analytic_rate.csv", "analytic-rate", p, &[], &table)?);
    let final_rate = rounds.last().map_or(0.0, |r| r.router_rate);
    report.files.push(exp.out.write_json(
        "analytic_rate.json",
        "analytic-rate",
        p,
        AnalyticSummary {
            steady_state: &steady,
            final_router_rate: final_rate,
        },
    )?);
    report.line(format!("R({}) = {final_rate:.6}", p.total_rounds));
    report.line(match steady.converged_round {
        Some(r) => format!(
            "steady state: <l> = {:.6}, R = {:.6} (converged at round {r})",
            steady.expected_l, steady.router_rate
        ),
        None => format!(
            "steady state not reached within budget; last R = {:.6}",
            steady.router_rate
        ),
    });
    Ok(report)
}

fn analytic_row(r: &AnalyticRound) -> Vec<String> {
    let mut row = vec![r.round.to_string()];
    row.extend(r.prob_lambda.iter().map(|&x| num(x)));
    row.extend(r.prob_sigma.iter().map(|&x| num(x)));
    row.push(num(r.expected_l));
    row.push(num(r.router_rate));
    row
}

// -------------------------------------------------------------- simulation

#[derive(Serialize)]
struct TupleWeight {
    ages: Vec<u32>,
    count: u64,
}

#[derive(Serialize)]
struct RoundAges {
    round: usize,
    successes: u64,
    /// `[party][age]`, each summing to one when `successes > 0`.
    age_marginals: Vec<Vec<f64>>,
    joint: Vec<TupleWeight>,
}

#[derive(Serialize)]
struct SimulationSidecar {
    samples: u64,
    max_stored_age: u32,
    rounds: Vec<RoundAges>,
}

pub fn simulate(exp: &Experiment) -> Result<Report> {
    let p = &exp.params;
    let mut report = Report::new();
    report.warn_all(p.warnings(false));
    let stats = run_ensemble(p)?;

    let mut table = Table::new([
        "round",
        "mean_l",
        "mean_l_stderr",
        "router_rate",
        "router_rate_stderr",
        "mean_attempted",
    ]);
    let (mean, se, rate, rate_se, att) = (
        stats.mean_l(),
        stats.mean_l_stderr(),
        stats.router_rate(),
        stats.router_rate_stderr(),
        stats.mean_attempted(),
    );
    for r in 0..stats.rounds {
        table.push(vec![
            (r + 1).to_string(),
            num(mean[r]),
            num(se[r]),
            num(rate[r]),
            num(rate_se[r]),
            num(att[r]),
        ]);
    }
    report.files.push(exp.out.write_csv("simulate.csv", "simulate", p, &[], &table)?);
    report.files.push(exp.out.write_json("simulate.json", "simulate", p, sidecar(&stats))?);
    let last = stats.rounds - 1;
    report.line(format!(
        "R({}) = {:.6} ± {:.6} over {} samples",
        stats.rounds, rate[last], rate_se[last], stats.samples
    ));
    Ok(report)
}

fn sidecar(stats: &EnsembleStats) -> SimulationSidecar {
    SimulationSidecar {
        samples: stats.samples,
        max_stored_age: stats.max_stored_age,
        rounds: (1..=stats.rounds)
            .map(|round| RoundAges {
                round,
                successes: stats.sum_l[round - 1],
                age_marginals: (0..stats.n_parties).map(|p| stats.age_marginal(round, p)).collect(),
                joint: stats
                    .joint_tuples(round)
                    .map(|(ages, count)| TupleWeight { ages, count })
                    .collect(),
            })
            .collect(),
    }
}

// ---------------------------------------------------------------- key rate

/// Pooled key-rate curve plus per-batch key rates for error bars.
#[derive(Debug, Clone)]
pub struct KeyRateRun {
    pub stats: EnsembleStats,
    pub curve: Vec<KeyRatePoint>,
    /// `[batch][round]`.
    pub batch_key_rates: Vec<Vec<f64>>,
}

impl KeyRateRun {
    /// Batch-means standard error of `K(s)`.
    pub fn key_rate_stderr(&self) -> Vec<f64> {
        let cols: Vec<Vec<f64>> = (0..self.curve.len())
            .map(|r| self.batch_key_rates.iter().map(|b| b[r]).collect())
            .collect();
        cols.iter().map(|c| batch_stderr(c)).collect()
    }

    pub fn key_rates(&self) -> Vec<f64> {
        self.curve.iter().map(|p| p.key_rate).collect()
    }
}

/// `sd/√B` of batch values.
pub fn batch_stderr(values: &[f64]) -> f64 {
    let b = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / b;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// Batch-means standard error of `K_a(s) − K_b(s)` for runs on common seeds.
pub fn paired_stderr(a: &KeyRateRun, b: &KeyRateRun, round: usize) -> f64 {
    let diffs: Vec<f64> = a
        .batch_key_rates
        .iter()
        .zip(&b.batch_key_rates)
        .map(|(x, y)| x[round - 1] - y[round - 1])
        .collect();
    batch_stderr(&diffs)
}

pub fn key_rate_run(params: &Params, batches: usize, mode: QberMode) -> Result<KeyRateRun> {
    let parts = run_ensemble_batches(params, batches)?;
    let mut stats = EnsembleStats::new(params.n_parties, params.mem_per_party, params.total_rounds);
    for part in &parts {
        stats.merge(part);
    }
    let tau = params.decoherence_rounds;
    let batch_key_rates = parts
        .iter()
        .map(|s| Ok(key_rate_curve(s, tau, mode)?.iter().map(|p| p.key_rate).collect()))
        .collect::<Result<_>>()?;
    Ok(KeyRateRun {
        curve: key_rate_curve(&stats, tau, mode)?,
        stats,
        batch_key_rates,
    })
}

fn key_rate_columns(n_parties: usize) -> Vec<String> {
    ["round", "mode", "q_x_tot"]
        .into_iter()
        .map(String::from)
        .chain((1..n_parties).map(|i| format!("q_ab{i}_tot")))
        .chain(["secret_fraction", "router_rate", "key_rate"].map(String::from))
        .collect()
}

fn key_rate_row(point: &KeyRatePoint, mode: QberMode, n_b: usize) -> Vec<String> {
    let mut row = vec![point.round.to_string(), mode.to_string()];
    match &point.qber {
        Some(q) => {
            row.push(num(q.q_x));
            row.extend(q.q_ab.iter().map(|&x| num(x)));
        }
        None => row.extend(std::iter::repeat_n("NA".to_string(), n_b + 1)),
    }
    row.push(opt_num(point.secret_fraction));
    row.push(num(point.router_rate));
    row.push(num(point.key_rate));
    row
}

fn peak(curve: &[KeyRatePoint]) -> (usize, f64) {
    curve
        .iter()
        .fold((0, f64::NEG_INFINITY), |best, p| {
            if p.key_rate > best.1 {
                (p.round, p.key_rate)
            } else {
                best
            }
        })
}

/// Largest relative difference between two QBER sets over all entries.
fn relative_gap(a: &QberSet, b: &QberSet) -> f64 {
    std::iter::once((a.q_x, b.q_x))
        .chain(a.q_ab.iter().copied().zip(b.q_ab.iter().copied()))
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Serialize)]
struct ModeSummary {
    mode: QberMode,
    peak_round: usize,
    peak_key_rate: f64,
    final_key_rate: f64,
    final_secret_fraction: Option<f64>,
}

#[derive(Serialize)]
struct KeyRateSummary {
    modes: Vec<ModeSummary>,
    /// Largest relative QBER difference between joint and marginal mode.
    max_mode_discrepancy: f64,
    /// Successful measurements in which every qubit had been stored at least one round.
    stale_measurements: u64,
    measurements: u64,
}

pub fn key_rate(exp: &Experiment) -> Result<Report> {
    let p = &exp.params;
    let mut report = Report::new();
    report.warn_all(p.warnings(false));
    let stats = run_ensemble(p)?;
    let tau = p.decoherence_rounds;
    let n_b = p.n_parties - 1;

    let mut table = Table::new(key_rate_columns(p.n_parties));
    let mut modes = Vec::new();
    let mut curves = Vec::new();
    for mode in QberMode::ALL {
        let curve = key_rate_curve(&stats, tau, mode)?;
        for point in &curve {
            table.push(key_rate_row(point, mode, n_b));
        }
        let (peak_round, peak_key_rate) = peak(&curve);
        let last = curve.last().expect("at least one round");
        modes.push(ModeSummary {
            mode,
            peak_round,
            peak_key_rate,
            final_key_rate: last.key_rate,
            final_secret_fraction: last.secret_fraction,
        });
        curves.push(curve);
    }
    let gap = curves[0]
        .iter()
        .zip(&curves[1])
        .filter_map(|(a, b)| Some(relative_gap(a.qber.as_ref()?, b.qber.as_ref()?)))
        .fold(0.0, f64::max);
    let (stale, total) = stale_measurements(&stats);

    report.files.push(exp.out.write_csv("key_rate.csv", "key-rate", p, &[], &table)?);
    for m in &modes {
        report.line(format!(
            "{}: peak K = {:.6} at round {}, K({}) = {:.6}",
            m.mode, m.peak_key_rate, m.peak_round, p.total_rounds, m.final_key_rate
        ));
    }
    report.line(format!("joint vs marginal QBER: max relative difference {gap:.4}"));
    if stale > 0 {
        report.line(format!(
            "note: {stale} of {total} measurements used no freshly stored qubit"
        ));
    }
    report.files.push(exp.out.write_json(
        "key_rate.json",
        "key-rate",
        p,
        KeyRateSummary {
            modes,
            max_mode_discrepancy: gap,
            stale_measurements: stale,
            measurements: total,
        },
    )?);
    Ok(report)
}

// ------------------------------------------------------ strategy comparison

#[derive(Serialize)]
struct StrategySummary {
    strategy: Strategy,
    peak_round: usize,
    peak_key_rate: f64,
    final_key_rate: f64,
    final_key_rate_stderr: f64,
}

#[derive(Serialize)]
struct PairedDifference {
    strategy: Strategy,
    reference: Strategy,
    final_difference: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct SoftCheck {
    name: String,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct CompareSummary {
    strategies: Vec<StrategySummary>,
    best_long_run: Strategy,
    paired_differences: Vec<PairedDifference>,
    soft_checks: Vec<SoftCheck>,
}

/// Key-rate runs for all four strategies on common random numbers.
pub fn strategy_runs(params: &Params, batches: usize) -> Result<Vec<(Strategy, KeyRateRun)>> {
    Strategy::ALL
        .iter()
        .map(|&s| {
            let p = Params {
                strategy: s,
                ..params.clone()
            };
            Ok((s, key_rate_run(&p, batches, QberMode::Joint)?))
        })
        .collect()
}

pub fn compare_strategies(exp: &Experiment) -> Result<Report> {
    let p = &exp.params;
    let mut report = Report::new();
    report.warn_all(p.warnings(false));
    let runs = strategy_runs(p, KEY_RATE_BATCHES)?;
    let last = p.total_rounds;

    let mut table = Table::new([
        "round",
        "strategy",
        "router_rate",
        "secret_fraction",
        "key_rate",
        "key_rate_stderr",
    ]);
    let mut strategies = Vec::new();
    for (s, run) in &runs {
        let se = run.key_rate_stderr();
        for (point, e) in run.curve.iter().zip(&se) {
            table.push(vec![
                point.round.to_string(),
                s.to_string(),
                num(point.router_rate),
                opt_num(point.secret_fraction),
                num(point.key_rate),
                num(*e),
            ]);
        }
        let (peak_round, peak_key_rate) = peak(&run.curve);
        strategies.push(StrategySummary {
            strategy: *s,
            peak_round,
            peak_key_rate,
            final_key_rate: run.curve[last - 1].key_rate,
            final_key_rate_stderr: se[last - 1],
        });
    }
    let best = strategies
        .iter()
        .fold(&strategies[0], |b, s| if s.final_key_rate > b.final_key_rate { s } else { b })
        .strategy;
    let by = |s: Strategy| &runs.iter().find(|(x, _)| *x == s).expect("all strategies run").1;
    let paired_differences = Strategy::ALL
        .iter()
        .filter(|&&s| s != Strategy::S2)
        .map(|&reference| PairedDifference {
            strategy: Strategy::S2,
            reference,
            final_difference: by(Strategy::S2).curve[last - 1].key_rate
                - by(reference).curve[last - 1].key_rate,
            stderr: paired_stderr(by(Strategy::S2), by(reference), last),
        })
        .collect();

    let (s1a, s0) = (by(Strategy::S1a).key_rates(), by(Strategy::S0).key_rates());
    let early = last.min(10);
    let early_lead = s1a[early - 1] > s0[early - 1];
    let crossover = (early..last).find(|&r| s0[r] > s1a[r]).map(|r| r + 1);
    let soft_checks = vec![SoftCheck {
        name: "S1a ahead of S0 early, S0 ahead later".into(),
        passed: early_lead && crossover.is_some(),
        detail: format!(
            "K_S1a − K_S0 at round {early}: {:.3e}; first later round with S0 ahead: {}",
            s1a[early - 1] - s0[early - 1],
            crossover.map_or("none".into(), |r| r.to_string())
        ),
    }];

    report.files.push(exp.out.write_csv(
        "compare_strategies.csv",
        "compare-strategies",
        p,
        &[format!("key_rate_stderr: batch means over {KEY_RATE_BATCHES} batches")],
        &table,
    )?);
    for s in &strategies {
        report.line(format!(
            "{}: K({last}) = {:.6} ± {:.6}, peak at round {}",
            s.strategy, s.final_key_rate, s.final_key_rate_stderr, s.peak_round
        ));
    }
    report.line(format!("highest long-run key rate: {best}"));
    for c in &soft_checks {
        report.line(format!(
            "soft check [{}] {}: {}",
            if c.passed { "ok" } else { "not observed" },
            c.name,
            c.detail
        ));
    }
    report.files.push(exp.out.write_json(
        "compare_strategies.json",
        "compare-strategies",
        p,
        CompareSummary {
            strategies,
            best_long_run: best,
            paired_differences,
            soft_checks,
        },
    )?);
    Ok(report)
}

// ------------------------------------------------------------ cutoff sweep

pub fn cutoff_label(c: Option<u32>) -> String {
    c.map_or_else(|| "none".into(), |c| c.to_string())
}

#[derive(Serialize)]
struct CutoffSummary {
    cutoff: Option<u32>,
    final_router_rate: f64,
    final_secret_fraction: Option<f64>,
    final_key_rate: f64,
    final_key_rate_stderr: f64,
}

#[derive(Serialize)]
struct SweepSummary {
    cutoffs: Vec<CutoffSummary>,
    best_cutoff: Option<u32>,
}

/// Key-rate runs for each cutoff on common random numbers.
pub fn cutoff_runs(params: &Params, cutoffs: &[Option<u32>], batches: usize) -> Result<Vec<KeyRateRun>> {
    cutoffs
        .iter()
        .map(|&c| {
            let p = Params {
                cutoff: c,
                ..params.clone()
            };
            key_rate_run(&p, batches, QberMode::Joint)
        })
        .collect()
}

pub fn sweep_cutoff(exp: &Experiment, cutoffs: &[Option<u32>]) -> Result<Report> {
    let p = &exp.params;
    let mut report = Report::new();
    report.warn_all(p.warnings(false));
    if cutoffs.is_empty() {
        return Err(Error::Validation(vec![crate::params::ParamError::Cutoff]));
    }
    for &c in cutoffs {
        Params { cutoff: c, ..p.clone() }.validate()?;
    }
    let runs = cutoff_runs(p, cutoffs, KEY_RATE_BATCHES)?;
    let last = p.total_rounds;

    let mut table = Table::new([
        "round",
        "cutoff",
        "router_rate",
        "secret_fraction",
        "key_rate",
        "key_rate_stderr",
    ]);
    let mut summaries = Vec::new();
    for (&c, run) in cutoffs.iter().zip(&runs) {
        let se = run.key_rate_stderr();
        for (point, e) in run.curve.iter().zip(&se) {
            table.push(vec![
                point.round.to_string(),
                cutoff_label(c),
                num(point.router_rate),
                opt_num(point.secret_fraction),
                num(point.key_rate),
                num(*e),
            ]);
        }
        let end = &run.curve[last - 1];
        summaries.push(CutoffSummary {
            cutoff: c,
            final_router_rate: end.router_rate,
            final_secret_fraction: end.secret_fraction,
            final_key_rate: end.key_rate,
            final_key_rate_stderr: se[last - 1],
        });
    }
    let best = summaries
        .iter()
        .fold(&summaries[0], |b, s| if s.final_key_rate > b.final_key_rate { s } else { b })
        .cutoff;

    report.files.push(exp.out.write_csv(
        "sweep_cutoff.csv",
        "sweep-cutoff",
        p,
        &[format!("key_rate_stderr: batch means over {KEY_RATE_BATCHES} batches")],
        &table,
    )?);
    for s in &summaries {
        report.line(format!(
            "cutoff {:>4}: R({last}) = {:.6}, K({last}) = {:.6} ± {:.6}",
            cutoff_label(s.cutoff),
            s.final_router_rate,
            s.final_key_rate,
            s.final_key_rate_stderr
        ));
    }
    report.line(format!("best cutoff by K({last}): {}", cutoff_label(best)));
    report.files.push(exp.out.write_json(
        "sweep_cutoff.json",
        "sweep-cutoff",
        p,
        SweepSummary {
            cutoffs: summaries,
            best_cutoff: best,
        },
    )?);
    Ok(report)
}

// ------------------------------------------------------------ verification

/// Deliberate defects for exercising the verification harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negate `λ₁` on the closed-form side.
    LambdaSign,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lambda-sign" => Ok(Fault::LambdaSign),
            _ => Err(format!("unknown fault {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

fn closed_form(f: [f64; 3], fault: Option<Fault>) -> Result<GhzDiagonal3> {
    let mut l = ghz_diag_lambdas(&Fidelities::new(f.to_vec())?)?;
    if fault == Some(Fault::LambdaSign) {
        l.lambda1 = -l.lambda1;
    }
    Ok(l)
}

fn random_config<R: Rng>(rng: &mut R, n: usize, m: usize) -> BitConfiguration {
    BitConfiguration::from_mask(n, m, rng.gen::<u64>() & crate::memory::low_bits(n * m))
}

fn check_worked_example() -> Result<Check> {
    let c = BitConfiguration::from_party_strings(&["1010", "1101", "0011"])?;
    let l: Vec<usize> = (0..4)
        .map(|w| Matcher::new(3, 4, w).cardinality(&c))
        .collect::<Result<_>>()?;
    let edges: Vec<String> = HypergraphInstance::new(c, 1)
        .hyperedges
        .iter()
        .map(|e| e.to_string())
        .collect();
    let ok = l == [0, 1, 2, 2] && edges == ["{3,2,3}", "{3,2,4}", "{3,4,3}", "{3,4,4}"];
    Ok(check(
        "worked example (w = 0..3)",
        ok,
        format!("l = {l:?}, w=1 hyperedges (A, B1, B2) = {}", edges.join(" ")),
    ))
}

fn check_flow(rng: &mut ChaCha8Rng, instances: usize) -> Result<Check> {
    let mut compared = 0;
    let mut mismatches = 0;
    let mut skipped = 0;
    while compared < instances {
        let m = rng.gen_range(1..=5);
        let w = rng.gen_range(0..m);
        let c = random_config(rng, 3, m);
        let brute = match max_matching_bruteforce(&HypergraphInstance::new(c, w)) {
            Ok(b) => b.len(),
            Err(Error::InstanceTooLarge { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        compared += 1;
        if max_matching_flow3(&c, w)?.len() != brute {
            mismatches += 1;
        }
    }
    Ok(check(
        "max-flow = brute force (N = 3)",
        mismatches == 0,
        format!("{compared} instances, {mismatches} mismatches, {skipped} over the brute-force guard"),
    ))
}

fn check_bounds(rng: &mut ChaCha8Rng, instances: usize) -> Result<Check> {
    let mut violations = 0;
    for i in 0..instances {
        let n = 4 + i % 2;
        let m = rng.gen_range(1..=3);
        let w = rng.gen_range(0..m);
        let c = random_config(rng, n, m);
        let l = max_matching_bruteforce(&HypergraphInstance::new(c, w))?.len();
        let (lo, hi) = cardinality_bounds(&c, w);
        if l < lo || l > hi {
            violations += 1;
        }
    }
    Ok(check(
        "cardinality bounds (N = 4, 5)",
        violations == 0,
        format!("{instances} instances, {violations} violations"),
    ))
}

fn check_lambdas(rng: &mut ChaCha8Rng, triples: usize, fault: Option<Fault>) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..triples {
        let f = [0; 3].map(|_| rng.gen_range(0.25..=1.0));
        let a = closed_form(f, fault)?.to_array();
        let b = circuit_oracle_3(&Fidelities::new(f.to_vec())?)?.to_array();
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(check(
        "closed-form λ = circuit oracle",
        worst < 1e-10,
        format!("{triples} random fidelity triples, max deviation {worst:.2e}"),
    ))
}

fn check_grid(points: usize, fault: Option<Fault>) -> Result<Check> {
    let grid: Vec<f64> = (0..points)
        .map(|i| 0.25 + 0.75 * i as f64 / (points - 1) as f64)
        .collect();
    let mut trace_err: f64 = 0.0;
    let mut min_weight = f64::INFINITY;
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                let l = closed_form([a, b, c], fault)?;
                trace_err = trace_err.max((l.trace() - 1.0).abs());
                min_weight = l.to_array().into_iter().fold(min_weight, f64::min);
            }
        }
    }
    let exact = closed_form([1.0; 3], fault)?.to_array() == [1.0, 0.0, 0.0, 0.0, 0.0]
        && closed_form([0.25; 3], fault)?.to_array() == [0.125; 5];
    Ok(check(
        "λ trace one, non-negative, exact corners",
        trace_err < 1e-12 && min_weight >= -1e-15 && exact,
        format!(
            "{points}³ grid: max |tr − 1| = {trace_err:.1e}, min λ = {min_weight:.2e}, corners exact: {exact}"
        ),
    ))
}

/// QBER at which `1 − 2h(q)` reaches zero, by bisection on `[0, 1/2]`.
pub fn symmetric_qber_threshold() -> f64 {
    let (mut lo, mut hi) = (0.0, 0.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn check_threshold() -> Check {
    let at = |q: f64| secret_fraction(&QberSet { q_x: q, q_ab: vec![q, q] });
    let r = at(0.11);
    let q_star = symmetric_qber_threshold();
    // h is symmetric about 1/2, so r vanishes exactly on [q*, 1 − q*]
    let above = (0..100).all(|i| at(q_star + (1.0 - 2.0 * q_star) * i as f64 / 100.0) == 0.0);
    let below = (1..=100).all(|i| at(q_star * i as f64 / 101.0) > 0.0);
    let sign = at(0.105) > 0.0 && at(0.115) == 0.0;
    check(
        "secret fraction threshold near Q = 0.11",
        r.abs() <= 0.01 && above && below && sign,
        format!(
            "r(0.11) = {r:.2e}, zero on [q*, 1 − q*] with q* = {q_star:.7}: {above}, positive below: {below}, r(0.105) > 0 = r(0.115): {sign}"
        ),
    )
}

fn check_analytic_vs_mc(samples: usize, seed: u64) -> Result<Check> {
    let p = Params {
        n_parties: 3,
        mem_per_party: 2,
        max_conn_len: 1,
        transmittivity: 0.1,
        strategy: Strategy::S0,
        cutoff: None,
        total_rounds: 30,
        samples,
        rng_seed: seed,
        ..Params::default()
    };
    let exact = AnalyticEngine::new(&p, false)?.run(p.total_rounds);
    let stats = run_ensemble(&p)?;
    let mean = stats.mean_l();
    let worst = exact
        .iter()
        .zip(&mean)
        .map(|(a, &mc)| {
            let se = (a.variance_l / samples as f64).sqrt();
            if se == 0.0 {
                if (mc - a.expected_l).abs() < 1e-12 { 0.0 } else { f64::INFINITY }
            } else {
                (mc - a.expected_l).abs() / se
            }
        })
        .fold(0.0, f64::max);
    Ok(check(
        "analytic <l>(s) = Monte Carlo (N=3, m=2, w=1)",
        worst <= 3.0,
        format!("30 rounds, {samples} samples, max |z| = {worst:.2}"),
    ))
}

fn check_qbers() -> Result<Check> {
    let f = [0.9, 0.7, 0.4];
    let closed = qbers_3(&ghz_diag_lambdas(&Fidelities::new(f.to_vec())?)?);
    let circuit = crate::oracle::circuit_qbers(&Fidelities::new(f.to_vec())?)?;
    let gap = relative_gap(&closed, &circuit);
    Ok(check(
        "QBERs from λ = QBERs from expectation values",
        gap < 1e-10,
        format!("relative gap {gap:.1e}"),
    ))
}

#[derive(Serialize)]
struct VerifySummary<'a> {
    quick: bool,
    passed: bool,
    checks: &'a [Check],
}

pub fn verify(exp: &Experiment, fault: Option<Fault>) -> Result<Report> {
    let quick = exp.quick;
    let mut rng = ChaCha8Rng::seed_from_u64(exp.params.rng_seed);
    let checks = vec![
        check_worked_example()?,
        check_flow(&mut rng, if quick { 200 } else { 1000 })?,
        check_bounds(&mut rng, if quick { 100 } else { 400 })?,
        check_lambdas(&mut rng, if quick { 100 } else { 1000 }, fault)?,
        check_grid(if quick { 20 } else { 50 }, fault)?,
        check_qbers()?,
        check_threshold(),
        check_analytic_vs_mc(if quick { 5_000 } else { 50_000 }, exp.params.rng_seed)?,
    ];
    let mut report = Report::new();
    report.ok = checks.iter().all(|c| c.passed);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        report.line(format!(
            "{} {:width$}  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        ));
    }
    report.files.push(exp.out.write_json(
        "verify.json",
        "verify",
        &exp.params,
        VerifySummary {
            quick,
            passed: report.ok,
            checks: &checks,
        },
    )?);
    Ok(report)
}

/// Human-readable adjacency listing, hyperedges, bounds and matching.
pub fn debug_instance(parties: &[String], w: usize) -> Result<String> {
    let parts: Vec<&str> = parties.iter().map(String::as_str).collect();
    let c = BitConfiguration::from_party_strings(&parts)?;
    if w >= c.mem_per_party() {
        return Err(Error::Validation(vec![crate::params::ParamError::ConnectionLength {
            w,
            m: c.mem_per_party(),
        }]));
    }
    adjacency_listing(&c, w)
}
