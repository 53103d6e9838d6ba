//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line reaches the log. The
//! process fails only when a criterion outside `KNOWN_FAILURES` fails.

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qrouter::analytic::AnalyticEngine;
use qrouter::experiments::{cutoff_runs, strategy_runs, KEY_RATE_BATCHES};
use qrouter::matching::{
    cardinality_bounds, enumerate_hyperedges, max_matching_bruteforce, max_matching_flow3, HypergraphInstance,
    Matcher,
};
use qrouter::noise::{ghz_diag_lambdas, secret_fraction, Fidelities, QberSet};
use qrouter::sim::{run_ensemble, EnsembleStats};
use qrouter::{BitConfiguration, Params, Strategy};

const SEED: u64 = 42;
const SAMPLES: usize = 50_000;
const Z: f64 = 3.0;

/// Criteria that fail as stated; the reasons are printed with the result.
const KNOWN_FAILURES: [u32; 2] = [3, 8];

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
            notes: Vec::new(),
        }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "worked example hyperedges and cardinalities", worked_example),
        (2, "flow solver equals brute force; cardinality bounds", solver_equivalence),
        (3, "analytic and Monte Carlo router rates agree", analytic_vs_monte_carlo),
        (4, "GHZ-diagonal weights match the circuit oracle", lambda_validation),
        (5, "router-rate ordering in w and N", router_rate_ordering),
        (6, "S2 key rate ahead; peak near round 16", strategy_ordering),
        (7, "cutoff optimum in {9,10,11}", cutoff_optimum),
        (8, "secret fraction vanishes from QBER 0.11 on", threshold),
        (9, "byte-identical output across runs and thread counts", determinism),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {id}: {name}: {} [{secs:.1} s]", outcome.detail);
        for note in &outcome.notes {
            println!("     {note}");
        }
        if !outcome.pass {
            if KNOWN_FAILURES.contains(&id) {
                println!("     known failure");
            } else {
                unexpected.push(id);
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

// ------------------------------------------------------------ oracles

/// Hyperedges straight from the definition: one filled slot per party, every
/// B slot within `w` of the A slot.
fn oracle_hyperedges(config: &BitConfiguration, w: usize) -> Vec<Vec<usize>> {
    let (n, m) = (config.n_parties(), config.mem_per_party());
    let mut out = Vec::new();
    let total = m.pow(n as u32);
    for code in 0..total {
        let slots: Vec<usize> = (0..n).map(|p| code / m.pow((n - 1 - p) as u32) % m).collect();
        let filled = slots.iter().enumerate().all(|(p, &s)| config.is_filled(p, s));
        let close = slots[1..].iter().all(|&b| b.abs_diff(slots[0]) <= w);
        if filled && close {
            out.push(slots);
        }
    }
    out
}

/// Maximum matching by exhaustive search over the choice for each A slot.
fn oracle_max_matching(config: &BitConfiguration, w: usize) -> usize {
    fn go(edges: &[Vec<usize>], a_slots: &[usize], used: &mut Vec<(usize, usize)>) -> usize {
        let Some((&a, rest)) = a_slots.split_first() else {
            return 0;
        };
        let mut best = go(edges, rest, used);
        for e in edges.iter().filter(|e| e[0] == a) {
            let clash = e.iter().enumerate().any(|(p, &s)| used.contains(&(p, s)));
            if clash {
                continue;
            }
            let mark = used.len();
            used.extend(e.iter().enumerate().map(|(p, &s)| (p, s)));
            best = best.max(1 + go(edges, rest, used));
            used.truncate(mark);
        }
        best
    }
    let edges = oracle_hyperedges(config, w);
    let a_slots: Vec<usize> = config.filled_slots(0).collect();
    go(&edges, &a_slots, &mut Vec::new())
}

fn random_config(rng: &mut ChaCha8Rng, n: usize, m: usize, fill: f64) -> BitConfiguration {
    let mut c = BitConfiguration::empty(n, m);
    for p in 0..n {
        for s in 0..m {
            c.set(p, s, rng.gen_bool(fill));
        }
    }
    c
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

// ------------------------------------------------------------ 1

fn worked_example() -> Outcome {
    let config = BitConfiguration::from_party_strings(&["1010", "1101", "0011"]).unwrap();
    let expected_l = [(3, 2), (2, 2), (1, 1), (0, 0)];
    let mut failures = Vec::new();
    for (w, l) in expected_l {
        let mut matcher = Matcher::new(3, 4, w);
        let got = matcher.cardinality(&config).unwrap();
        let brute = max_matching_bruteforce(&HypergraphInstance::new(config, w)).unwrap().len();
        let oracle = oracle_max_matching(&config, w);
        if (got, brute, oracle) != (l, l, l) {
            failures.push(format!("w={w}: solver {got}, brute {brute}, oracle {oracle}, expected {l}"));
        }
    }
    // Listed as (B₁, A, B₂) labels.
    let listed = [[2, 3, 3], [2, 3, 4], [4, 3, 3], [4, 3, 4]];
    let expected: BTreeSet<Vec<usize>> = listed.iter().map(|t| vec![t[1], t[0], t[2]]).collect();
    let got: BTreeSet<Vec<usize>> = enumerate_hyperedges(&config, 1).iter().map(|e| e.labels()).collect();
    let oracle: BTreeSet<Vec<usize>> = oracle_hyperedges(&config, 1)
        .into_iter()
        .map(|e| e.iter().map(|s| s + 1).collect())
        .collect();
    if got != expected || oracle != expected {
        failures.push(format!("w=1 hyperedges {got:?}, oracle {oracle:?}"));
    }
    let pass = failures.is_empty();
    let detail = if pass {
        "l = (2,2,1,0) for w = (3,2,1,0); w=1 hyperedges {3,2,3},{3,2,4},{3,4,3},{3,4,4} in (A,B1,B2) order".into()
    } else {
        failures.join("; ")
    };
    Outcome::new(pass, detail)
}

// ------------------------------------------------------------ 2

fn solver_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut mismatches = 0;
    let mut flow_cases = 0;
    let mut library_cases = 0;
    for _ in 0..1000 {
        let m = rng.gen_range(1..=5);
        let fill = rng.gen_range(0.2..0.9);
        let config = random_config(&mut rng, 3, m, fill);
        for w in 0..m {
            let flow = max_matching_flow3(&config, w).unwrap().len();
            let oracle = oracle_max_matching(&config, w);
            flow_cases += 1;
            if flow != oracle {
                mismatches += 1;
            }
            // The library search refuses instances past its subset budget.
            if let Ok(brute) = max_matching_bruteforce(&HypergraphInstance::new(config, w)) {
                library_cases += 1;
                if brute.len() != flow {
                    mismatches += 1;
                }
            }
        }
    }
    let mut bound_cases = 0;
    let mut violations = 0;
    for n in [4, 5] {
        for _ in 0..400 {
            let m = rng.gen_range(1..=3);
            let fill = rng.gen_range(0.2..0.9);
            let config = random_config(&mut rng, n, m, fill);
            for w in 0..m {
                let l = max_matching_bruteforce(&HypergraphInstance::new(config, w)).unwrap().len();
                let edges = oracle_hyperedges(&config, w);
                let covered = |p: usize| {
                    config
                        .filled_slots(p)
                        .filter(|&s| edges.iter().any(|e| e[p] == s))
                        .count()
                };
                let lower = (0..n).map(covered).min().unwrap();
                let upper = (0..n).map(|p| config.filled_count(p)).min().unwrap();
                bound_cases += 1;
                if !(lower <= l && l <= upper) || cardinality_bounds(&config, w) != (lower, upper) {
                    violations += 1;
                }
                if oracle_max_matching(&config, w) != l {
                    violations += 1;
                }
            }
        }
    }
    Outcome::new(
        mismatches == 0 && violations == 0,
        format!(
            "N=3: {mismatches} mismatches in {flow_cases} (instance, w) cases \
             (exhaustive oracle on all, library brute force on {library_cases}); \
             N=4,5 (m<=3): {violations} bound violations in {bound_cases} cases"
        ),
    )
}

// ------------------------------------------------------------ 3

fn analytic_vs_monte_carlo() -> Outcome {
    const PER_ROUND: usize = 30;
    const ROUNDS: usize = 200;
    const WINDOW: std::ops::Range<usize> = 100..200;
    const REL_TOL: f64 = 0.01;
    let mut comparisons = 0usize;
    let mut exceedances = Vec::new();
    let mut max_abs_z: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    let mut worst_case = String::new();
    let mut cases = 0;
    for n in 2..=8usize {
        for m in 1..=9 / n {
            for w in 0..m {
                for eta in [0.1, 0.5] {
                    cases += 1;
                    let params = Params {
                        n_parties: n,
                        mem_per_party: m,
                        max_conn_len: w,
                        transmittivity: eta,
                        strategy: Strategy::S0,
                        total_rounds: ROUNDS,
                        samples: SAMPLES,
                        rng_seed: SEED,
                        ..Params::default()
                    };
                    let stats = run_ensemble(&params).unwrap();
                    let engine = AnalyticEngine::new(&params, false).unwrap();
                    let exact = engine.run(PER_ROUND);
                    let mc = stats.mean_l();
                    for (r, round) in exact.iter().enumerate() {
                        let se = (round.variance_l / SAMPLES as f64).sqrt();
                        let diff = mc[r] - round.expected_l;
                        let z = if se > 0.0 {
                            diff / se
                        } else if diff == 0.0 {
                            0.0
                        } else {
                            f64::INFINITY
                        };
                        comparisons += 1;
                        max_abs_z = max_abs_z.max(z.abs());
                        if z.abs() > Z {
                            exceedances.push(format!("N{n} m{m} w{w} eta{eta} s={} z={z:.2}", r + 1));
                        }
                    }
                    let steady = engine.steady_state(1e-12, 10_000).router_rate;
                    let late = mc[WINDOW].iter().sum::<f64>() / WINDOW.len() as f64 / m as f64;
                    let rel = (late - steady).abs() / steady;
                    if rel > worst_rel {
                        worst_rel = rel;
                        worst_case = format!("N{n} m{m} w{w} eta{eta}");
                    }
                }
            }
        }
    }
    // Family-wise view of the same comparisons: Bonferroni at the two-sided
    // level of a single 3σ test.
    let alpha = 2.0 * normal_upper_tail(Z);
    let bonferroni_z = normal_upper_quantile(alpha / 2.0 / comparisons as f64);
    let steady_ok = worst_rel <= REL_TOL;
    Outcome::new(
        exceedances.is_empty() && steady_ok,
        format!(
            "{cases} cases; per-round |z| > {Z}: {} of {comparisons} (expected {:.1} by chance); \
             steady-state worst rel. error {worst_rel:.2e} ({worst_case}) vs {REL_TOL}",
            exceedances.len(),
            alpha * comparisons as f64,
        ),
    )
    .note(format!("exceedances: {}", exceedances.join(", ")))
    .note(format!(
        "family-wise: max |z| = {max_abs_z:.2} vs Bonferroni bound {bonferroni_z:.2} -> {}",
        if max_abs_z <= bonferroni_z { "consistent" } else { "inconsistent" }
    ))
}

fn normal_upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

fn normal_upper_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_upper_tail(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Complementary error function (Numerical Recipes `erfcc`, rel. error < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

// ------------------------------------------------------------ 4

const DIM: usize = 64;
type Mat = Vec<[f64; DIM]>;

/// Qubit order kA, sA, kB1, sB1, kB2, sB2 with kA as the most significant bit;
/// `k` qubits are kept by the parties, `s` qubits sit in the router.
fn bit(x: usize, q: usize) -> usize {
    x >> (5 - q) & 1
}

fn zeros() -> Mat {
    vec![[0.0; DIM]; DIM]
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let mut c = zeros();
    for i in 0..DIM {
        for k in 0..DIM {
            if a[i][k] != 0.0 {
                for j in 0..DIM {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
    }
    c
}

fn transpose(a: &Mat) -> Mat {
    let mut t = zeros();
    for i in 0..DIM {
        for j in 0..DIM {
            t[j][i] = a[i][j];
        }
    }
    t
}

fn conjugate(u: &Mat, rho: &Mat) -> Mat {
    matmul(&matmul(u, rho), &transpose(u))
}

fn single(q: usize, g: [[f64; 2]; 2]) -> Mat {
    let mut u = zeros();
    for y in 0..DIM {
        for x in 0..DIM {
            if (0..6).all(|j| j == q || bit(x, j) == bit(y, j)) {
                u[y][x] = g[bit(y, q)][bit(x, q)];
            }
        }
    }
    u
}

fn cnot(c: usize, t: usize) -> Mat {
    let mut u = zeros();
    for x in 0..DIM {
        let y = if bit(x, c) == 1 { x ^ 1 << (5 - t) } else { x };
        u[y][x] = 1.0;
    }
    u
}

fn werner(f: f64) -> [[f64; 4]; 4] {
    let p = (4.0 * f - 1.0) / 3.0;
    let mut rho = [[0.0; 4]; 4];
    for (i, row) in rho.iter_mut().enumerate() {
        row[i] = (1.0 - p) / 4.0;
    }
    for i in [0, 3] {
        for j in [0, 3] {
            rho[i][j] += p / 2.0;
        }
    }
    rho
}

fn circuit_lambdas(fa: f64, f1: f64, f2: f64) -> [(f64, f64); 4] {
    let pairs = [werner(fa), werner(f1), werner(f2)];
    let mut rho = zeros();
    for i in 0..DIM {
        for j in 0..DIM {
            rho[i][j] = (0..3)
                .map(|k| {
                    let pi = (i >> (4 - 2 * k)) & 3;
                    let pj = (j >> (4 - 2 * k)) & 3;
                    pairs[k][pi][pj]
                })
                .product();
        }
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let hadamard = [[h, h], [h, -h]];
    let pauli_x = [[0.0, 1.0], [1.0, 0.0]];
    let pauli_z = [[1.0, 0.0], [0.0, -1.0]];
    rho = conjugate(&cnot(1, 3), &rho);
    rho = conjugate(&cnot(1, 5), &rho);
    rho = conjugate(&single(1, hadamard), &rho);

    let mut kept = [[0.0; 8]; 8];
    for outcome in 0..8usize {
        let (ma, mb1, mb2) = (outcome >> 2 & 1, outcome >> 1 & 1, outcome & 1);
        let matches = |x: usize| bit(x, 1) == ma && bit(x, 3) == mb1 && bit(x, 5) == mb2;
        let mut proj = zeros();
        for i in 0..DIM {
            for j in 0..DIM {
                if matches(i) && matches(j) {
                    proj[i][j] = rho[i][j];
                }
            }
        }
        if ma == 1 {
            proj = conjugate(&single(0, pauli_z), &proj);
        }
        if mb1 == 1 {
            proj = conjugate(&single(2, pauli_x), &proj);
        }
        if mb2 == 1 {
            proj = conjugate(&single(4, pauli_x), &proj);
        }
        for i in 0..DIM {
            for j in 0..DIM {
                if [1, 3, 5].iter().all(|&q| bit(i, q) == bit(j, q)) {
                    let ki = bit(i, 0) << 2 | bit(i, 2) << 1 | bit(i, 4);
                    let kj = bit(j, 0) << 2 | bit(j, 2) << 1 | bit(j, 4);
                    kept[ki][kj] += proj[i][j];
                }
            }
        }
    }
    // |GHZ_j^±⟩ = (|0 j⟩ ± |1 j̄⟩)/√2 with j = (B1 B2) as a 2-bit number.
    let mut out = [(0.0, 0.0); 4];
    for (j, slot) in out.iter_mut().enumerate() {
        let (u, v) = (j, 4 | (!j & 3));
        let weight = |sign: f64| 0.5 * (kept[u][u] + kept[v][v] + sign * (kept[u][v] + kept[v][u]));
        *slot = (weight(1.0), weight(-1.0));
    }
    out
}

fn lambda_validation() -> Outcome {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let f: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.25..=1.0));
        let lam = ghz_diag_lambdas(&Fidelities::new(f.to_vec()).unwrap()).unwrap();
        let oracle = circuit_lambdas(f[0], f[1], f[2]);
        let closed = [
            (lam.lambda0_plus, lam.lambda0_minus),
            (lam.lambda1, lam.lambda1),
            (lam.lambda2, lam.lambda2),
            (lam.lambda3, lam.lambda3),
        ];
        for (a, b) in closed.iter().zip(&oracle) {
            worst = worst.max((a.0 - b.0).abs()).max((a.1 - b.1).abs());
        }
    }
    let mut worst_trace: f64 = 0.0;
    let mut min_weight = f64::INFINITY;
    let grid = |i: usize| 0.25 + 0.75 * i as f64 / 49.0;
    for i in 0..50 {
        for j in 0..50 {
            for k in 0..50 {
                let lam = ghz_diag_lambdas(&Fidelities::new(vec![grid(i), grid(j), grid(k)]).unwrap()).unwrap();
                worst_trace = worst_trace.max((lam.trace() - 1.0).abs());
                min_weight = lam.to_array().into_iter().fold(min_weight, f64::min);
            }
        }
    }
    let perfect = ghz_diag_lambdas(&Fidelities::new(vec![1.0; 3]).unwrap()).unwrap().to_array();
    let mixed = ghz_diag_lambdas(&Fidelities::new(vec![0.25; 3]).unwrap()).unwrap().weights();
    let corners = perfect == [1.0, 0.0, 0.0, 0.0, 0.0] && mixed == [0.125; 8];
    let pass = worst <= TOL && worst_trace <= 1e-12 && min_weight >= -1e-12 && corners;
    Outcome::new(
        pass,
        format!(
            "max |closed form - circuit| = {worst:.2e} (tol {TOL:.0e}) on 1000 triples; \
             50^3 grid: max |tr - 1| = {worst_trace:.1e}, min weight = {min_weight:.2e}; \
             corners exact: {corners}"
        ),
    )
}

// ------------------------------------------------------------ 5

fn s0_params(n: usize, m: usize, w: usize, rounds: usize) -> Params {
    Params {
        n_parties: n,
        mem_per_party: m,
        max_conn_len: w,
        transmittivity: 0.1,
        strategy: Strategy::S0,
        total_rounds: rounds,
        samples: SAMPLES,
        rng_seed: SEED,
        ..Params::default()
    }
}

/// Rounds at which `hi − lo < −Z·σ` (or `≤ Z·σ` when `strict`).
fn ordering_violations(hi: &EnsembleStats, lo: &EnsembleStats, strict: bool) -> Vec<usize> {
    let (rh, rl) = (hi.router_rate(), lo.router_rate());
    let (sh, sl) = (hi.router_rate_stderr(), lo.router_rate_stderr());
    (0..rh.len())
        .filter(|&r| {
            let sigma = (sh[r].powi(2) + sl[r].powi(2)).sqrt();
            let diff = rh[r] - rl[r];
            if strict {
                diff <= Z * sigma
            } else {
                diff < -Z * sigma
            }
        })
        .map(|r| r + 1)
        .collect()
}

fn router_rate_ordering() -> Outcome {
    const ROUNDS: usize = 50;
    let mut problems = Vec::new();
    let mut checks = 0;
    for m in 2..=4usize {
        let ws: BTreeSet<usize> = [0, 1, m - 1].into();
        let runs: Vec<(usize, EnsembleStats)> = ws
            .iter()
            .map(|&w| (w, run_ensemble(&s0_params(4, m, w, ROUNDS)).unwrap()))
            .collect();
        for pair in runs.windows(2) {
            let ((w_lo, lo), (w_hi, hi)) = (&pair[0], &pair[1]);
            checks += ROUNDS;
            let bad = ordering_violations(hi, lo, false);
            if !bad.is_empty() {
                problems.push(format!("m={m}: R(w={w_hi}) < R(w={w_lo}) at rounds {bad:?}"));
            }
            if m == 4 {
                let last = ordering_violations(hi, lo, true).contains(&ROUNDS);
                if last {
                    problems.push(format!("m=4: R(w={w_hi}) not separated from R(w={w_lo}) at s={ROUNDS}"));
                }
            }
        }
    }
    for w in 0..3 {
        let three = run_ensemble(&s0_params(3, 3, w, ROUNDS)).unwrap();
        let five = run_ensemble(&s0_params(5, 3, w, ROUNDS)).unwrap();
        checks += ROUNDS;
        let bad = ordering_violations(&three, &five, true);
        if !bad.is_empty() {
            problems.push(format!("m=3 w={w}: R(N=5) not below R(N=3) at rounds {bad:?}"));
        }
    }
    let pass = problems.is_empty();
    let detail = if pass {
        format!("N=4, m=2..4: R(w=m-1) >= R(w=1) >= R(w=0) on all rounds, strict at m=4, s={ROUNDS}; R(N=5) < R(N=3) for m=3, w=0..2 ({checks} round checks)")
    } else {
        problems.join("; ")
    };
    Outcome::new(pass, detail)
}

// ------------------------------------------------------------ 6

fn key_rate_params(rounds: usize) -> Params {
    Params {
        n_parties: 3,
        mem_per_party: 4,
        max_conn_len: 1,
        transmittivity: 0.1,
        decoherence_rounds: 100,
        total_rounds: rounds,
        samples: SAMPLES,
        rng_seed: SEED,
        ..Params::default()
    }
}

fn strategy_ordering() -> Outcome {
    const ROUNDS: usize = 50;
    let runs = strategy_runs(&key_rate_params(ROUNDS), KEY_RATE_BATCHES).unwrap();
    let final_k = |run: &qrouter::experiments::KeyRateRun| run.key_rates()[ROUNDS - 1];
    let (_, s2) = runs.iter().find(|(s, _)| *s == Strategy::S2).unwrap();
    let mut ahead = true;
    let mut parts = Vec::new();
    for (strategy, run) in runs.iter().filter(|(s, _)| *s != Strategy::S2) {
        let diff = final_k(s2) - final_k(run);
        let se = qrouter::experiments::paired_stderr(s2, run, ROUNDS);
        ahead &= diff > 0.0;
        parts.push(format!("{strategy} {:.5} (paired z {:.1})", final_k(run), diff / se));
    }
    let k = s2.key_rates();
    let peak = (1..=ROUNDS).max_by(|&a, &b| k[a - 1].total_cmp(&k[b - 1])).unwrap();
    let peak_ok = (12..=20).contains(&peak);
    Outcome::new(
        ahead && peak_ok,
        format!(
            "K({ROUNDS}): S2 {:.5} vs {}; S2 peak at s={peak} (K={:.5}), target 16 +/- 4",
            final_k(s2),
            parts.join(", "),
            k[peak - 1]
        ),
    )
}

// ------------------------------------------------------------ 7

fn cutoff_optimum() -> Outcome {
    const ROUNDS: usize = 50;
    const TRANSIENT: usize = 20;
    let cutoffs: Vec<u32> = (8..=13).collect();
    let options: Vec<Option<u32>> = cutoffs.iter().map(|&c| Some(c)).collect();
    let runs = cutoff_runs(&key_rate_params(ROUNDS), &options, KEY_RATE_BATCHES).unwrap();
    let finals: Vec<f64> = runs.iter().map(|r| r.key_rates()[ROUNDS - 1]).collect();
    let best = (0..runs.len()).max_by(|&a, &b| finals[a].total_cmp(&finals[b])).unwrap();
    let best_cutoff = cutoffs[best];
    let run = &runs[best];
    let k = run.key_rates();
    let mut dips = Vec::new();
    for s in TRANSIENT + 1..=ROUNDS {
        let steps: Vec<f64> = run.batch_key_rates.iter().map(|b| b[s - 1] - b[s - 2]).collect();
        let se = qrouter::experiments::batch_stderr(&steps);
        let step = k[s - 1] - k[s - 2];
        if step < -Z * se {
            dips.push(format!("s={s} step {step:.2e} se {se:.2e}"));
        }
    }
    let listing: Vec<String> = cutoffs.iter().zip(&finals).map(|(c, k)| format!("{c}:{k:.5}")).collect();
    Outcome::new(
        (9..=11).contains(&best_cutoff) && dips.is_empty(),
        format!(
            "K({ROUNDS}) by cutoff [{}]; argmax {best_cutoff}; non-decreasing after s={TRANSIENT} within {Z} sigma: {}",
            listing.join(" "),
            if dips.is_empty() { "yes".to_string() } else { dips.join(", ") }
        ),
    )
}

// ------------------------------------------------------------ 8

fn threshold() -> Outcome {
    let r = |q: f64| {
        secret_fraction(&QberSet {
            q_x: q,
            q_ab: vec![q, q],
        })
    };
    let oracle = |q: f64| (1.0 - 2.0 * binary_entropy(q)).max(0.0);
    let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    let agree = grid.iter().all(|&q| (r(q) - oracle(q)).abs() <= 1e-15);
    let at = r(0.11);
    let near_zero = at.abs() <= 0.01;
    let positive: Vec<f64> = grid.iter().copied().filter(|&q| q >= 0.11 && r(q) > 0.0).collect();
    let zero_above = positive.is_empty();
    let detail = format!(
        "r(0.11) = {at:.3e} (|r| <= 0.01: {near_zero}); r > 0 at {} grid points with Q >= 0.11{}; library = inline entropy: {agree}",
        positive.len(),
        match (positive.first(), positive.last()) {
            (Some(a), Some(b)) => format!(" (Q = {a}..={b}, first {a} has r = {:.2e})", r(*a)),
            _ => String::new(),
        }
    );
    Outcome::new(near_zero && zero_above && agree, detail).note(
        "1 - 2h(Q) changes sign at Q* = 0.110028, just above 0.11, and is symmetric under Q -> 1 - Q, \
         so it is positive again for Q > 1 - Q*",
    )
}

// ------------------------------------------------------------ 9

fn run_cli(out: &Path, threads: usize, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_qrouter"))
        .args(args)
        .args(["--out", out.to_str().unwrap(), "--threads", &threads.to_string()])
        .args(["--set", "samples=4000", "--set", "total_rounds=30", "--set", "rng_seed=42"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let commands: [&[&str]; 4] = [
        &["simulate"],
        &["key-rate"],
        &["compare-strategies"],
        &["sweep-cutoff", "--cutoffs", "8,10,none"],
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut snapshots = Vec::new();
    for (tag, threads) in [("a", 1), ("b", 4), ("c", 1)] {
        let out = tmp.path().join(tag);
        for args in commands {
            run_cli(&out, threads, args);
        }
        snapshots.push(snapshot(&out));
    }
    let identical = snapshots.windows(2).all(|w| w[0] == w[1]);
    let files = snapshots[0].len();
    let bytes: usize = snapshots[0].iter().map(|(_, b)| b.len()).sum();
    Outcome::new(
        identical && files > 0,
        format!("{files} files ({bytes} bytes) identical across 3 runs with 1, 4 and 1 worker threads"),
    )
}
