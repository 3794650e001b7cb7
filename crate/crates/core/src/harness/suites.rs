use std::collections::{HashSet, VecDeque};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::adequa::{AdequaQueue, ExplorationSchedule};
use crate::baselines::{CounterexampleConfig, Stage};
use crate::birkhoff::{ordered_birkhoff, psi_sample, BvnDecomposition, CostMatrix, Permutation};
use crate::mapping::{empirical_margin, solve_phi, verify_domination, BistochasticMatrix, PhiConfig};
use crate::model::{Action, EnvRng, EnvState, QueuePolicy, QueueView};
use crate::rng::{stream, Stream};

use super::config::Preset;
use super::HarnessError;

pub const SUITES: [&str; 4] = ["birkhoff", "phi", "sync", "counterexample"];

const SUITE_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub cases: u64,
    /// Largest numerical error seen, where the suite measures one.
    pub max_error: f64,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(suite: &str) -> Self {
        Self { suite: suite.to_string(), cases: 0, max_error: 0.0, failures: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok && self.failures.len() < 20 {
            self.failures.push(what());
        }
    }
}

/// Runs the named randomized property suite for `budget` cases.
pub fn property_suite(name: &str, budget: u64) -> Result<SuiteReport, HarnessError> {
    match name {
        "birkhoff" => Ok(birkhoff_suite(budget)),
        "phi" => Ok(phi_suite(budget)),
        "sync" => sync_suite(budget),
        "counterexample" => Ok(counterexample_suite(budget)),
        other => Err(HarnessError::UnknownSuite(other.to_string())),
    }
}

fn random_bistochastic(k: usize, rng: &mut impl Rng) -> BistochasticMatrix {
    let mut m = DMatrix::zeros(k, k);
    let n_terms = rng.gen_range(1..=k + 2);
    let weights: Vec<f64> = (0..n_terms).map(|_| rng.gen::<f64>() + 0.01).collect();
    let total: f64 = weights.iter().sum();
    for w in weights {
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(rng);
        for (i, j) in perm.into_iter().enumerate() {
            m[(i, j)] += w / total;
        }
    }
    BistochasticMatrix::with_tolerance(m, 1e-9).expect("convex combination of permutations")
}

fn birkhoff_suite(budget: u64) -> SuiteReport {
    let mut report = SuiteReport::new("birkhoff");
    let mut rng = stream(SUITE_SEED, Stream::Private(0));
    for case in 0..budget {
        report.cases += 1;
        let k = rng.gen_range(1..=6);
        let p = random_bistochastic(k, &mut rng);
        let cost = CostMatrix::random(k, &mut rng);
        let dec = match ordered_birkhoff(&p, &cost) {
            Ok(d) => d,
            Err(e) => {
                report.check(false, || format!("case {case}: decomposition failed: {e}"));
                continue;
            }
        };
        let err = (dec.reconstruct() - p.matrix()).amax();
        report.max_error = report.max_error.max(err);
        report.check(err <= 1e-6, || format!("case {case}: reconstruction error {err}"));
        report.check(dec.len() <= k * k, || format!("case {case}: {} terms for K = {k}", dec.len()));
        let costs: Vec<f64> = dec.terms().iter().map(|t| cost.cost(&t.permutation)).collect();
        report.check(costs.windows(2).all(|w| w[0] <= w[1] + 1e-9), || format!("case {case}: costs not ordered {costs:?}"));
        let omega: f64 = rng.gen();
        let picked = psi_sample(&dec, omega);
        report.check(dec.terms().iter().any(|t| &t.permutation == picked), || format!("case {case}: psi left the support"));
        let again = ordered_birkhoff(&p, &cost).map(|d: BvnDecomposition| d == dec).unwrap_or(false);
        report.check(again, || format!("case {case}: decomposition is not deterministic"));
    }
    report
}

fn phi_suite(budget: u64) -> SuiteReport {
    let mut report = SuiteReport::new("phi");
    let mut rng = stream(SUITE_SEED, Stream::Private(1));
    let cfg = PhiConfig::default();
    let easy = Preset::EasyFig3.params();
    for case in 0..budget.max(1) {
        report.cases += 1;
        let (lambda, mu) = if case == 0 {
            (easy.lambda().to_vec(), easy.mu().to_vec())
        } else {
            let k = rng.gen_range(1..=6);
            let mut mu: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
            mu.sort_by(|a, b| b.total_cmp(a));
            let mut lambda: Vec<f64> = mu.iter().map(|m| m * rng.gen_range(0.05..0.95)).collect();
            lambda.shuffle(&mut rng);
            mu.shuffle(&mut rng);
            (lambda, mu)
        };
        let delta = empirical_margin(&lambda, &mu);
        let sol = match solve_phi(&lambda, &mu, &cfg, None) {
            Ok(s) => s,
            Err(e) => {
                report.check(false, || format!("case {case}: {e}"));
                continue;
            }
        };
        let violation = sol.matrix.sum_violation();
        report.max_error = report.max_error.max(violation);
        report.check(violation <= 1e-6, || format!("case {case}: line sums off by {violation}"));
        report.check(!sol.fallback, || format!("case {case}: fell back on a positive margin {delta}"));
        let floor = delta / std::f64::consts::E.sqrt() - 1e-6;
        let worst = verify_domination(&sol.matrix, &lambda, &mu).into_iter().fold(f64::INFINITY, f64::min);
        report.check(worst >= floor, || format!("case {case}: margin {worst} below {floor} (lambda {lambda:?}, mu {mu:?})"));
    }
    report
}

/// Drives ADeQuA queues round by round and checks that they agree on every
/// shared draw and never collide while exploiting identical mappings.
fn sync_suite(budget: u64) -> Result<SuiteReport, HarnessError> {
    let mut report = SuiteReport::new("sync");
    let params = Preset::EasyFig3.params();
    let (n, k) = (params.n_queues(), params.n_servers());
    let seed = SUITE_SEED;
    let mut queues: Vec<AdequaQueue> = (0..n)
        .map(|q| {
            AdequaQueue::new(q, n, k, ExplorationSchedule::practical(n, k), PhiConfig::default(), stream(seed, Stream::Shared))
        })
        .collect();
    report.check(queues.iter().all(|q| q.cost() == queues[0].cost()), || "cost matrices differ".into());
    let mut state = EnvState::new(n);
    let mut env = EnvRng::new(seed);
    let mut actions = vec![Action::Idle; n];
    for _ in 0..budget {
        report.cases += 1;
        state.advance(&params, &mut env);
        let t = state.time();
        for (q, policy) in queues.iter_mut().enumerate() {
            actions[q] = policy.decide(&QueueView { queue: q, time: t, buffer: state.buffer(q) });
        }
        let draws = queues[0].last_draws().cloned();
        report.check(queues.iter().all(|q| q.last_draws() == draws.as_ref()), || format!("round {t}: shared draws differ"));
        let outcome = state.serve(&params, &actions, &mut env)?;
        for (q, policy) in queues.iter_mut().enumerate() {
            policy.observe(&QueueView { queue: q, time: t, buffer: state.buffer(q) }, actions[q], outcome.queues[q]);
        }
    }
    Ok(report)
}

fn counterexample_suite(budget: u64) -> SuiteReport {
    let mut report = SuiteReport::new("counterexample");
    let reference = CounterexampleConfig::new(10, 2, 0.8).expect("valid reference");
    let r = reference.regimes();
    report.check(r.unstable && r.no_policy_regret, || format!("reference regimes {r:?}"));
    for n in [4usize, 6, 10, 12] {
        let cfg = CounterexampleConfig { n, d: 1, alpha: 0.7 };
        for t in 1..=budget {
            report.cases += 1;
            let servers: Vec<usize> = (0..n).map(|q| cfg.server(q, t)).collect();
            let distinct: HashSet<usize> = servers.iter().copied().collect();
            match cfg.stage(t) {
                Stage::Paired => {
                    let paired = (0..n / 2).all(|p| servers[2 * p] == servers[2 * p + 1]);
                    report.check(paired && distinct.len() == n / 2, || format!("N = {n}, t = {t}: pairing {servers:?}"));
                }
                Stage::Spread => {
                    let perm = Permutation::new(servers.clone()).is_ok();
                    report.check(perm, || format!("N = {n}, t = {t}: spread is not a permutation {servers:?}"));
                }
            }
        }
        let mut windows: VecDeque<u64> = (1..=budget.min(200)).collect();
        while let Some(k) = windows.pop_front() {
            let start = CounterexampleConfig::window_end(k - 1) + 1;
            let paired = (start..=CounterexampleConfig::window_end(k)).filter(|t| cfg.stage(*t) == Stage::Paired).count() as u64;
            report.check(paired == cfg.paired_rounds(k), || format!("N = {n}, window {k}: {paired} paired rounds"));
        }
    }
    report
}
