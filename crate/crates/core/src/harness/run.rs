use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adequa::AdequaQueue;
use crate::baselines::{centralized_policies, BaselineError, CounterexampleQueue, Exp3Queue, FixedPolicy};
use crate::model::{run_episode, EpisodeSeeds, QueuePolicy, RecordedRound, SystemParams, Trajectory};

use super::config::{ExperimentConfig, PolicySpec};
use super::stats;
use super::svg::{render_chart, ChartSeries};
use super::HarnessError;

/// Builds the per-queue policies of one seed.
pub fn build_policies(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Box<dyn QueuePolicy>>, BaselineError> {
    let seeds = EpisodeSeeds { seed };
    let params = &cfg.params;
    let (n, k) = (params.n_queues(), params.n_servers());
    match cfg.policies.first() {
        Some(PolicySpec::Centralized) => return centralized_policies(params, &cfg.phi, seeds),
        Some(PolicySpec::Counterexample) => {
            let ce = cfg.counterexample().ok_or_else(|| {
                BaselineError::InvalidCounterexample("the counterexample policy needs its preset".into())
            })?;
            return Ok((0..n).map(|q| Box::new(CounterexampleQueue::new(ce, q)) as Box<dyn QueuePolicy>).collect());
        }
        _ => {}
    }
    cfg.policies
        .iter()
        .enumerate()
        .map(|(q, spec)| -> Result<Box<dyn QueuePolicy>, BaselineError> {
            Ok(match spec {
                PolicySpec::Adequa => {
                    Box::new(AdequaQueue::new(q, n, k, cfg.schedule, cfg.phi.clone(), seeds.shared()))
                }
                PolicySpec::Exp3 => Box::new(Exp3Queue::new(k, cfg.exp3, seeds.private(q))),
                PolicySpec::Fixed(p) => Box::new(FixedPolicy::new(p, k, seeds.private(q))?),
                PolicySpec::Centralized | PolicySpec::Counterexample => {
                    return Err(BaselineError::InvalidCounterexample("joint policies cannot be mixed".into()))
                }
            })
        })
        .collect()
}

/// One seed's recorded trajectory and the final estimates of learning queues.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub estimates: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

/// Everything an experiment produced, before it is written out.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub params: SystemParams,
    /// Policy label per queue.
    pub labels: Vec<String>,
    pub horizon: u64,
    pub record_stride: u64,
    pub runs: Vec<SeedRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub t: u64,
    pub policy: String,
    #[serde(rename = "mean_Q")]
    pub mean_q: f64,
    #[serde(rename = "std_Q")]
    pub std_q: f64,
}

/// Statistics of the queue length averaged over queues and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub first_decile: Option<f64>,
    pub middle_decile: Option<f64>,
    pub final_decile: Option<f64>,
    pub final_half_slope: Option<f64>,
}

/// Worst absolute estimation error per seed over the learning queues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorErrors {
    pub mu_max: Vec<f64>,
    pub lambda_max: Vec<f64>,
}

impl EstimatorErrors {
    pub fn worst_mu(&self) -> f64 {
        self.mu_max.iter().copied().fold(0.0, f64::max)
    }

    pub fn worst_lambda(&self) -> f64 {
        self.lambda_max.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub policies: Vec<String>,
    pub horizon: u64,
    pub record_stride: u64,
    pub seeds: Vec<u64>,
    /// Per queue, averaged over recorded rounds and seeds.
    pub time_avg_queue: Vec<f64>,
    /// Per queue, over recorded rounds `t > 0.9 T`, averaged over seeds.
    pub final_decile_queue: Vec<f64>,
    pub mean_queue: SeriesStats,
    /// Per queue, `E[Q(T)]` across seeds.
    pub final_moment_1: Vec<f64>,
    /// Per queue, `E[Q(T)^2]` across seeds.
    pub final_moment_2: Vec<f64>,
    pub estimator_errors: Option<EstimatorErrors>,
}

/// Runs every seed of `cfg`, in parallel, in seed order.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<SeedRun, HarnessError> {
            let policies = build_policies(cfg, seed)?;
            let (trajectory, episode) = run_episode(&cfg.params, policies, cfg.horizon, seed, cfg.record_stride)?;
            let estimates = episode.policies().iter().map(|p| p.estimates()).collect();
            Ok(SeedRun { seed, trajectory, estimates })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentOutput {
        params: cfg.params.clone(),
        labels: cfg.policies.iter().map(|p| p.label().to_string()).collect(),
        horizon: cfg.horizon,
        record_stride: cfg.record_stride.max(1),
        runs,
    })
}

/// Executes `cfg` and, when `out` is given, writes its artifacts there.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunSummary, HarnessError> {
    let output = execute(cfg)?;
    if let Some(dir) = out {
        output.write(dir)?;
    }
    Ok(output.summary())
}

fn distinct_labels(labels: &[String]) -> Vec<&str> {
    let mut seen: Vec<&str> = Vec::new();
    for l in labels {
        if !seen.contains(&l.as_str()) {
            seen.push(l);
        }
    }
    seen
}

impl ExperimentOutput {
    /// Mean over queues and seeds of the queue length at each recorded round.
    pub fn mean_queue_series(&self) -> Vec<(u64, f64)> {
        let Some(first) = self.runs.first() else { return Vec::new() };
        let per_seed: Vec<Vec<(u64, f64)>> = self.runs.iter().map(|r| r.trajectory.mean_queue_series()).collect();
        (0..first.trajectory.rounds.len())
            .map(|i| {
                let values: Vec<f64> = per_seed.iter().map(|s| s[i].1).collect();
                (per_seed[0][i].0, stats::mean(&values).unwrap_or(0.0))
            })
            .collect()
    }

    /// One row per recorded round and policy label.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let Some(first) = self.runs.first() else { return Vec::new() };
        let labels = distinct_labels(&self.labels);
        let mut rows = Vec::with_capacity(first.trajectory.rounds.len() * labels.len());
        for (i, round) in first.trajectory.rounds.iter().enumerate() {
            for label in &labels {
                let members: Vec<usize> = (0..self.labels.len()).filter(|q| self.labels[*q] == *label).collect();
                let per_seed: Vec<f64> = self
                    .runs
                    .iter()
                    .map(|r| {
                        let q = &r.trajectory.rounds[i].queue_len;
                        members.iter().map(|m| q[*m] as f64).sum::<f64>() / members.len() as f64
                    })
                    .collect();
                rows.push(AggregateRow {
                    t: round.t,
                    policy: label.to_string(),
                    mean_q: stats::mean(&per_seed).unwrap_or(0.0),
                    std_q: stats::std_dev(&per_seed),
                });
            }
        }
        rows
    }

    pub fn summary(&self) -> RunSummary {
        let n = self.params.n_queues();
        let seeds = self.runs.len().max(1) as f64;
        let per_queue = |f: &dyn Fn(&Trajectory, usize) -> f64| -> Vec<f64> {
            (0..n).map(|q| self.runs.iter().map(|r| f(&r.trajectory, q)).sum::<f64>() / seeds).collect()
        };
        let horizon = self.horizon;
        let time_avg_queue = per_queue(&|tr, q| {
            let series: Vec<f64> = tr.rounds.iter().map(|r| r.queue_len[q] as f64).collect();
            stats::mean(&series).unwrap_or(0.0)
        });
        let final_decile_queue = per_queue(&|tr, q| {
            let series: Vec<(u64, f64)> = tr.rounds.iter().map(|r| (r.t, r.queue_len[q] as f64)).collect();
            stats::final_decile(&series, horizon).unwrap_or(0.0)
        });
        let last = |tr: &Trajectory, q: usize| tr.rounds.last().map_or(0.0, |r| r.queue_len[q] as f64);
        let final_moment_1 = per_queue(&|tr, q| last(tr, q));
        let final_moment_2 = per_queue(&|tr, q| last(tr, q).powi(2));
        let series = self.mean_queue_series();

        let learning = self.runs.iter().any(|r| r.estimates.iter().any(Option::is_some));
        let estimator_errors = learning.then(|| {
            let worst = |pick: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> f64| -> Vec<f64> {
                self.runs.iter().map(|r| r.estimates.iter().flatten().map(pick).fold(0.0, f64::max)).collect()
            };
            let lambda = self.params.lambda();
            let mu = self.params.mu();
            EstimatorErrors {
                mu_max: worst(&|(_, m)| m.iter().zip(mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)),
                lambda_max: worst(&|(l, _)| l.iter().zip(lambda).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)),
            }
        });

        RunSummary {
            lambda: self.params.lambda().to_vec(),
            mu: self.params.mu().to_vec(),
            policies: self.labels.clone(),
            horizon,
            record_stride: self.record_stride,
            seeds: self.runs.iter().map(|r| r.seed).collect(),
            time_avg_queue,
            final_decile_queue,
            mean_queue: SeriesStats {
                first_decile: stats::first_decile(&series, horizon),
                middle_decile: stats::middle_decile(&series, horizon),
                final_decile: stats::final_decile(&series, horizon),
                final_half_slope: stats::final_half_slope(&series, horizon),
            },
            final_moment_1,
            final_moment_2,
            estimator_errors,
        }
    }

    pub fn trajectory_csv(&self, run: &SeedRun) -> Result<String, HarnessError> {
        let rows = run.trajectory.rounds.iter().flat_map(|r| {
            (0..r.queue_len.len()).map(move |q| TrajectoryRow {
                t: r.t,
                queue: q,
                q_len: r.queue_len[q],
                cleared_cum: r.cleared_cum[q],
                arrived_cum: r.arrived_cum[q],
                explored: r.explored[q],
            })
        });
        to_csv(rows)
    }

    pub fn aggregate_csv(&self) -> Result<String, HarnessError> {
        to_csv(self.aggregate())
    }

    pub fn estimates_csv(&self) -> Result<String, HarnessError> {
        let mut rows = Vec::new();
        for run in &self.runs {
            for (q, est) in run.estimates.iter().enumerate() {
                let Some((lambda_hat, mu_hat)) = est else { continue };
                for (kind, values, truth) in
                    [(EstimateKind::Lambda, lambda_hat, self.params.lambda()), (EstimateKind::Mu, mu_hat, self.params.mu())]
                {
                    for (index, &estimate) in values.iter().enumerate() {
                        rows.push(EstimateRow { seed: run.seed, queue: q, kind, index, estimate, truth: truth[index] });
                    }
                }
            }
        }
        to_csv(rows)
    }

    pub fn chart_svg(&self) -> String {
        let rows = self.aggregate();
        let series: Vec<ChartSeries> = distinct_labels(&self.labels)
            .into_iter()
            .map(|label| ChartSeries {
                label: label.to_string(),
                points: rows.iter().filter(|r| r.policy == label).map(|r| (r.t as f64, r.mean_q)).collect(),
            })
            .collect();
        render_chart("mean queue length", &series)
    }

    /// Writes `trajectory_seed<seed>.csv`, `aggregate.csv`, `estimates.csv`,
    /// `chart.svg` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| HarnessError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let put = |name: String, body: String| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(io(&path))
        };
        for run in &self.runs {
            put(format!("trajectory_seed{}.csv", run.seed), self.trajectory_csv(run)?)?;
        }
        put("aggregate.csv".into(), self.aggregate_csv()?)?;
        put("estimates.csv".into(), self.estimates_csv()?)?;
        put("chart.svg".into(), self.chart_svg())?;
        put("summary.json".into(), serde_json::to_string_pretty(&self.summary())? + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    t: u64,
    queue: usize,
    #[serde(rename = "Q")]
    q_len: u64,
    cleared_cum: u64,
    arrived_cum: u64,
    explored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EstimateKind {
    Lambda,
    Mu,
}

#[derive(Debug, Serialize, Deserialize)]
struct EstimateRow {
    seed: u64,
    queue: usize,
    kind: EstimateKind,
    index: usize,
    estimate: f64,
    truth: f64,
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(0, e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn read_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<(usize, T)>, HarnessError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        rows.push((line, record.deserialize(Some(&headers))?));
    }
    Ok(rows)
}

fn csv_err(line: usize, detail: impl Into<String>) -> HarnessError {
    HarnessError::Csv { line, detail: detail.into() }
}

/// Reads back a trajectory CSV written by [`ExperimentOutput::write`].
pub fn parse_trajectory_csv(text: &str, n_queues: usize, horizon: u64, record_stride: u64) -> Result<Trajectory, HarnessError> {
    let mut rounds: Vec<RecordedRound> = Vec::new();
    for (line, row) in read_csv::<TrajectoryRow>(text)? {
        if row.queue == 0 {
            rounds.push(RecordedRound {
                t: row.t,
                queue_len: Vec::with_capacity(n_queues),
                cleared_cum: Vec::with_capacity(n_queues),
                arrived_cum: Vec::with_capacity(n_queues),
                explored: Vec::with_capacity(n_queues),
            });
        }
        let r = rounds.last_mut().ok_or_else(|| csv_err(line, "row does not start at queue 0"))?;
        if r.t != row.t || r.queue_len.len() != row.queue {
            return Err(csv_err(line, "rows out of order"));
        }
        r.queue_len.push(row.q_len);
        r.cleared_cum.push(row.cleared_cum);
        r.arrived_cum.push(row.arrived_cum);
        r.explored.push(row.explored);
    }
    if let Some(bad) = rounds.iter().position(|r| r.queue_len.len() != n_queues) {
        return Err(csv_err(0, format!("recorded round {bad} lists the wrong number of queues")));
    }
    Ok(Trajectory { n_queues, horizon, record_stride, rounds })
}

/// Reads back `estimates.csv` into per-seed, per-queue estimate vectors.
pub fn parse_estimates_csv(
    text: &str,
    seeds: &[u64],
    n_queues: usize,
    n_servers: usize,
) -> Result<Vec<Vec<Option<(Vec<f64>, Vec<f64>)>>>, HarnessError> {
    let mut out = vec![vec![None; n_queues]; seeds.len()];
    for (line, row) in read_csv::<EstimateRow>(text)? {
        let s = seeds.iter().position(|x| *x == row.seed).ok_or_else(|| csv_err(line, "unknown seed"))?;
        let slot = out[s].get_mut(row.queue).ok_or_else(|| csv_err(line, "queue out of range"))?;
        let (lambda, mu) = slot.get_or_insert_with(|| (vec![0.0; n_queues], vec![0.0; n_servers]));
        let target = match row.kind {
            EstimateKind::Lambda => lambda.get_mut(row.index),
            EstimateKind::Mu => mu.get_mut(row.index),
        };
        *target.ok_or_else(|| csv_err(line, "index out of range"))? = row.estimate;
    }
    Ok(out)
}

/// Rebuilds the output of a run from the CSV files it wrote.
pub fn load_output(dir: &Path, params: &SystemParams, labels: &[String], horizon: u64, record_stride: u64, seeds: &[u64]) -> Result<ExperimentOutput, HarnessError> {
    let read = |name: String| {
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(|source| HarnessError::Io { path, source })
    };
    let estimates = parse_estimates_csv(&read("estimates.csv".into())?, seeds, params.n_queues(), params.n_servers())?;
    let runs = seeds
        .iter()
        .zip(estimates)
        .map(|(&seed, estimates)| {
            let text = read(format!("trajectory_seed{seed}.csv"))?;
            let trajectory = parse_trajectory_csv(&text, params.n_queues(), horizon, record_stride)?;
            Ok(SeedRun { seed, trajectory, estimates })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(ExperimentOutput { params: params.clone(), labels: labels.to_vec(), horizon, record_stride, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Preset;

    fn small(policy: PolicySpec) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_preset(Preset::EasyFig3, policy, 1_050, vec![3, 1, 2]);
        cfg.record_stride = 100;
        cfg
    }

    #[test]
    fn aggregate_has_one_row_per_recorded_round() {
        let out = execute(&small(PolicySpec::Exp3)).unwrap();
        let rows = out.aggregate();
        assert_eq!(rows.len(), 11);
        assert_eq!(rows.last().unwrap().t, 1_050);
        assert_eq!(out.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![3, 1, 2]);
        assert!(out.summary().estimator_errors.is_none());
    }

    #[test]
    fn parallel_runs_match_sequential_ones() {
        let cfg = small(PolicySpec::Adequa);
        let out = execute(&cfg).unwrap();
        for run in &out.runs {
            let (tr, _) =
                run_episode(&cfg.params, build_policies(&cfg, run.seed).unwrap(), cfg.horizon, run.seed, 100).unwrap();
            assert_eq!(tr, run.trajectory);
        }
    }

    #[test]
    fn summary_is_recomputable_from_artifacts() {
        let cfg = small(PolicySpec::Adequa);
        let dir = tempfile::tempdir().unwrap();
        let summary = run_experiment(&cfg, Some(dir.path())).unwrap();
        let labels: Vec<String> = cfg.policies.iter().map(|p| p.label().to_string()).collect();
        let loaded = load_output(dir.path(), &cfg.params, &labels, cfg.horizon, cfg.record_stride, &cfg.seeds).unwrap();
        assert_eq!(loaded.summary(), summary);
        let json: RunSummary =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(json, summary);
        assert_eq!(std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap(), loaded.aggregate_csv().unwrap());
        assert!(summary.estimator_errors.is_some());
    }

    #[test]
    fn mixed_policies_get_separate_series() {
        let mut cfg = small(PolicySpec::Adequa);
        cfg.policies[1] = PolicySpec::Exp3;
        cfg.policies[2] = PolicySpec::Fixed(vec![0.25; 4]);
        let out = execute(&cfg).unwrap();
        let rows = out.aggregate();
        let labels: Vec<&str> = rows.iter().take(3).map(|r| r.policy.as_str()).collect();
        assert_eq!(labels, vec!["adequa", "exp3", "fixed"]);
        assert_eq!(rows.len(), 33);
    }

    #[test]
    fn csv_errors_are_reported() {
        assert!(matches!(parse_trajectory_csv("h\n1,0,2\n", 1, 1, 1), Err(HarnessError::Csv { line: 2, .. })));
        assert!(matches!(parse_trajectory_csv("h\n1,1,2,3,4,0\n", 2, 1, 1), Err(HarnessError::Csv { .. })));
    }
}
