//! Latency statistics, the schedule validity checker, relative-performance
//! normalization and box-plot statistics.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_rational::Ratio;

use crate::engine::SimResult;
use crate::model::{ClusterConfig, Instance, JobId, TaskId, Time};

mod oracle;

pub use oracle::{brute_force_optimal, OracleError, OracleSolution, ORACLE_MAX_MACHINES, ORACLE_MAX_TASKS};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatencySummary {
    pub mean: Ratio<u64>,
    pub p95: Time,
    pub per_job: BTreeMap<JobId, Time>,
}

impl LatencySummary {
    pub fn of(result: &SimResult) -> Self {
        LatencySummary {
            mean: mean_latency(result),
            p95: percentile_latency(result, 95),
            per_job: result.job_latencies.clone(),
        }
    }
}

/// Exact mean of job latencies; zero for an empty result.
pub fn mean_latency(result: &SimResult) -> Ratio<u64> {
    let n = result.job_latencies.len() as u64;
    if n == 0 {
        return Ratio::from_integer(0);
    }
    Ratio::new(result.job_latencies.values().sum(), n)
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Nearest-rank percentile: the `ceil(p/100 * N)`-th smallest job latency.
pub fn percentile_latency(result: &SimResult, percent: u32) -> Time {
    assert!((1..=100).contains(&percent), "percentile must be in (0, 100]");
    let mut values: Vec<Time> = result.job_latencies.values().copied().collect();
    if values.is_empty() {
        return 0;
    }
    values.sort_unstable();
    let n = values.len() as u64;
    let rank = (percent as u64 * n).div_ceil(100).max(1);
    values[rank as usize - 1]
}

/// A broken scheduling, dependency or capacity constraint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScheduleViolation {
    MissingTask { task: TaskId },
    DuplicateTask { task: TaskId },
    UnknownTask { task: TaskId },
    WrongDuration { task: TaskId, start: Time, end: Time, duration: Time },
    Dependency { task: TaskId, pred: TaskId, start: Time, pred_end: Time },
    UnknownEnv { task: TaskId, env: usize },
    FamilyMismatch { task: TaskId, env: usize },
    MachineMismatch { task: TaskId, env: usize },
    BeforeInit { task: TaskId, env: usize, start: Time, init_done: Time },
    AfterRemoval { task: TaskId, env: usize, end: Time, removed: Time },
    Overlap { env: usize, first: TaskId, second: TaskId },
    UnknownMachine { env: usize, machine: usize },
    BadEnvTimes { env: usize },
    Capacity { machine: usize, time: Time, used: u64, capacity: u64 },
    JobLatency { job: JobId, recorded: Option<Time>, actual: Time },
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ScheduleViolation::*;
        match self {
            MissingTask { task } => write!(f, "task {task} never scheduled"),
            DuplicateTask { task } => write!(f, "task {task} scheduled more than once"),
            UnknownTask { task } => write!(f, "task {task} is not in the instance"),
            WrongDuration { task, start, end, duration } => {
                write!(f, "task {task} runs [{start},{end}) but its duration is {duration}")
            }
            Dependency { task, pred, start, pred_end } => write!(
                f,
                "task {task} starts at {start} before predecessor {pred} ends at {pred_end}"
            ),
            UnknownEnv { task, env } => write!(f, "task {task} runs on unknown env {env}"),
            FamilyMismatch { task, env } => write!(f, "task {task} runs on env {env} of another family"),
            MachineMismatch { task, env } => write!(f, "task {task} machine differs from env {env}"),
            BeforeInit { task, env, start, init_done } => write!(
                f,
                "task {task} starts at {start} before env {env} is ready at {init_done}"
            ),
            AfterRemoval { task, env, end, removed } => {
                write!(f, "task {task} ends at {end} after env {env} was removed at {removed}")
            }
            Overlap { env, first, second } => {
                write!(f, "tasks {first} and {second} overlap on env {env}")
            }
            UnknownMachine { env, machine } => write!(f, "env {env} on unknown machine {machine}"),
            BadEnvTimes { env } => write!(f, "env {env} has inconsistent lifecycle times"),
            Capacity { machine, time, used, capacity } => write!(
                f,
                "machine {machine} holds {used} > {capacity} resource units at t={time}"
            ),
            JobLatency { job, recorded, actual } => {
                write!(f, "job {job} latency recorded as {recorded:?}, schedule says {actual}")
            }
        }
    }
}

/// Independent check of a schedule against the model constraints. Empty
/// report iff the schedule is valid.
pub fn validate_schedule(
    instance: &Instance,
    cluster: ClusterConfig,
    result: &SimResult,
) -> Vec<ScheduleViolation> {
    use ScheduleViolation as V;
    let mut out = Vec::new();

    let families: HashMap<_, _> = instance.families.iter().map(|f| (f.id, f)).collect();
    let envs: HashMap<usize, _> = result.envs.iter().map(|e| (e.env, e)).collect();
    let mut records: HashMap<TaskId, &crate::engine::TaskRecord> = HashMap::new();
    for rec in &result.tasks {
        if records.insert(rec.task, rec).is_some() {
            out.push(V::DuplicateTask { task: rec.task });
        }
    }

    let mut known = HashMap::new();
    for (job, _, task) in instance.tasks() {
        known.insert(task.id, (job.id, task));
    }
    for rec in &result.tasks {
        if !known.contains_key(&rec.task) {
            out.push(V::UnknownTask { task: rec.task });
        }
    }

    let mut latency: BTreeMap<JobId, Time> = BTreeMap::new();
    for (job, _, task) in instance.tasks() {
        let Some(rec) = records.get(&task.id) else {
            out.push(V::MissingTask { task: task.id });
            continue;
        };
        let c = latency.entry(job.id).or_insert(0);
        *c = (*c).max(rec.end);
        if let Some(fam) = families.get(&task.family) {
            if rec.end < rec.start || rec.end - rec.start != fam.duration {
                out.push(V::WrongDuration {
                    task: task.id,
                    start: rec.start,
                    end: rec.end,
                    duration: fam.duration,
                });
            }
        }
        for pred in &task.preds {
            if let Some(p) = records.get(pred) {
                if rec.start < p.end {
                    out.push(V::Dependency { task: task.id, pred: *pred, start: rec.start, pred_end: p.end });
                }
            }
        }
        match envs.get(&rec.env) {
            None => out.push(V::UnknownEnv { task: task.id, env: rec.env }),
            Some(env) => {
                if env.family != task.family {
                    out.push(V::FamilyMismatch { task: task.id, env: rec.env });
                }
                if env.machine != rec.machine {
                    out.push(V::MachineMismatch { task: task.id, env: rec.env });
                }
                if rec.start < env.init_done {
                    out.push(V::BeforeInit {
                        task: task.id,
                        env: rec.env,
                        start: rec.start,
                        init_done: env.init_done,
                    });
                }
                if let Some(removed) = env.removed {
                    if rec.end > removed {
                        out.push(V::AfterRemoval { task: task.id, env: rec.env, end: rec.end, removed });
                    }
                }
            }
        }
    }

    // one task at a time per environment
    let mut per_env: BTreeMap<usize, Vec<&crate::engine::TaskRecord>> = BTreeMap::new();
    for rec in &result.tasks {
        per_env.entry(rec.env).or_default().push(rec);
    }
    for (env, mut recs) in per_env {
        recs.sort_by_key(|r| (r.start, r.end, r.task));
        for pair in recs.windows(2) {
            if pair[1].start < pair[0].end {
                out.push(V::Overlap { env, first: pair[0].task, second: pair[1].task });
            }
        }
    }

    // resident sizes at every creation boundary
    let mut per_machine: BTreeMap<usize, Vec<(Time, Option<Time>, u64)>> = BTreeMap::new();
    for env in &result.envs {
        if env.machine >= cluster.machines {
            out.push(V::UnknownMachine { env: env.env, machine: env.machine });
        }
        if env.init_done < env.created || env.removed.is_some_and(|r| r < env.created) {
            out.push(V::BadEnvTimes { env: env.env });
        }
        let size = families.get(&env.family).map_or(0, |f| f.size);
        per_machine.entry(env.machine).or_default().push((env.created, env.removed, size));
    }
    for (machine, lifetimes) in per_machine {
        let mut boundaries: Vec<Time> = lifetimes.iter().map(|l| l.0).collect();
        boundaries.sort_unstable();
        boundaries.dedup();
        for time in boundaries {
            let used: u64 = lifetimes
                .iter()
                .filter(|(created, removed, _)| *created <= time && removed.is_none_or(|r| time < r))
                .map(|l| l.2)
                .sum();
            if used > cluster.capacity {
                out.push(V::Capacity { machine, time, used, capacity: cluster.capacity });
            }
        }
    }

    for (&job, &actual) in &latency {
        let recorded = result.job_latencies.get(&job).copied();
        if recorded != Some(actual) {
            out.push(V::JobLatency { job, recorded, actual });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("group {key} lacks a result for {missing}")]
pub struct IncompleteGroup {
    pub key: String,
    pub missing: String,
}

/// Divides every value by the minimum of its group, so the best variant of
/// each group maps to exactly 1.0. Each group must hold one value per entry
/// of `variants`.
pub fn normalize_relative<K, V>(
    groups: &BTreeMap<K, BTreeMap<V, f64>>,
    variants: &[V],
) -> Result<BTreeMap<K, BTreeMap<V, f64>>, IncompleteGroup>
where
    K: Ord + Clone + fmt::Display,
    V: Ord + Clone + fmt::Display,
{
    let mut out = BTreeMap::new();
    for (key, values) in groups {
        if let Some(missing) = variants.iter().find(|v| !values.contains_key(v)) {
            return Err(IncompleteGroup { key: key.to_string(), missing: missing.to_string() });
        }
        let min = variants.iter().map(|v| values[v]).fold(f64::INFINITY, f64::min);
        let normalized = variants
            .iter()
            .map(|v| {
                let x = values[v];
                (v.clone(), if x == min { 1.0 } else { x / min })
            })
            .collect();
        out.insert(key.clone(), normalized);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

/// Quantile by linear interpolation between closest ranks, `sorted` ascending.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Box-plot statistics; whiskers reach the most extreme data points within
/// 1.5 IQR of the box.
pub fn box_stats(values: &[f64]) -> BoxStats {
    assert!(!values.is_empty(), "box_stats needs at least one value");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = sorted.iter().copied().filter(|&v| v >= lo_fence && v <= hi_fence);
    let whisker_lo = inside.clone().fold(f64::INFINITY, f64::min);
    let whisker_hi = inside.fold(f64::NEG_INFINITY, f64::max);
    let outliers = sorted.iter().copied().filter(|&v| v < lo_fence || v > hi_fence).collect();
    BoxStats { q1, median, q3, whisker_lo, whisker_hi, outliers }
}

/// Median with the same interpolation as the box statistics.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile(&sorted, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{simulate, EnvRecord, TaskRecord};
    use crate::model::{DependencyMode, FamilySpec, JobSpec, OrderingPolicy, RemovalPolicy, TaskSpec, TuplePolicy};

    fn result_with_latencies(latencies: &[Time]) -> SimResult {
        SimResult {
            instance: None,
            policy: "OW".into(),
            machines: 1,
            capacity: 1,
            seed: 0,
            tasks: vec![],
            envs: vec![],
            job_latencies: latencies.iter().enumerate().map(|(i, &c)| (i as JobId + 1, c)).collect(),
            runtime: Default::default(),
        }
    }

    #[test]
    fn means() {
        assert_eq!(mean_latency(&result_with_latencies(&[8])), Ratio::from_integer(8));
        assert_eq!(mean_latency(&result_with_latencies(&[10, 20])), Ratio::from_integer(15));
        assert_eq!(mean_latency(&result_with_latencies(&[110, 120])), Ratio::from_integer(115));
        assert_eq!(mean_latency(&result_with_latencies(&[8, 13])), Ratio::new(21, 2));
    }

    #[test]
    fn nearest_rank_percentiles() {
        let r = result_with_latencies(&(1..=20).rev().collect::<Vec<_>>());
        assert_eq!(percentile_latency(&r, 95), 19);
        assert_eq!(percentile_latency(&r, 100), 20);
        assert_eq!(percentile_latency(&r, 1), 1);
        let one = result_with_latencies(&[42]);
        for p in [1, 50, 95, 100] {
            assert_eq!(percentile_latency(&one, p), 42);
        }
    }

    #[test]
    fn box_statistics() {
        let b = box_stats(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((b.q1, b.median, b.q3), (1.75, 2.5, 3.25));
        let c = box_stats(&[2.0; 7]);
        assert_eq!((c.q1, c.median, c.q3, c.whisker_lo, c.whisker_hi), (2.0, 2.0, 2.0, 2.0, 2.0));
        assert!(c.outliers.is_empty());
        let d = box_stats(&[1.0, 2.0, 3.0, 4.0, 5.0, 100.0]);
        assert_eq!(d.outliers, vec![100.0]);
        assert_eq!(d.whisker_hi, 5.0);
        assert_eq!(d.whisker_lo, 1.0);
    }

    #[test]
    fn normalization() {
        let mut groups = BTreeMap::new();
        groups.insert("a", BTreeMap::from([("x", 10.0), ("y", 12.0), ("z", 15.0)]));
        groups.insert("b", BTreeMap::from([("x", 7.0), ("y", 7.0), ("z", 7.0)]));
        let n = normalize_relative(&groups, &["x", "y", "z"]).unwrap();
        assert_eq!(n["a"].values().copied().collect::<Vec<_>>(), vec![1.0, 1.2, 1.5]);
        assert_eq!(n["b"].values().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 1.0]);
        groups.get_mut("b").unwrap().remove("y");
        let err = normalize_relative(&groups, &["x", "y", "z"]).unwrap_err();
        assert_eq!(err, IncompleteGroup { key: "b".into(), missing: "y".into() });
    }

    fn chain2() -> Instance {
        Instance {
            meta: serde_json::Value::Null,
            families: vec![FamilySpec { id: 1, duration: 5, size: 4, setup: 3 }],
            jobs: vec![JobSpec {
                id: 1,
                tasks: vec![
                    TaskSpec { id: 1, family: 1, preds: vec![] },
                    TaskSpec { id: 2, family: 1, preds: vec![1] },
                ],
            }],
        }
    }

    #[test]
    fn engine_output_is_valid() {
        let inst = chain2();
        let c = ClusterConfig::new(1, 10);
        let fifo = TuplePolicy::new(OrderingPolicy::Fifo, RemovalPolicy::Lru, false, DependencyMode::Start);
        let r = simulate(&inst, c, fifo.into(), 0).unwrap();
        assert_eq!(validate_schedule(&inst, c, &r), vec![]);
    }

    #[test]
    fn dependency_mutant_is_caught() {
        let inst = chain2();
        let c = ClusterConfig::new(1, 10);
        let fifo = TuplePolicy::new(OrderingPolicy::Fifo, RemovalPolicy::Lru, false, DependencyMode::Default);
        let mut r = simulate(&inst, c, fifo.into(), 0).unwrap();
        r.tasks[1].start -= 1;
        r.tasks[1].end -= 1;
        let report = validate_schedule(&inst, c, &r);
        let deps: Vec<_> = report.iter().filter(|v| matches!(v, ScheduleViolation::Dependency { .. })).collect();
        assert_eq!(deps, vec![&ScheduleViolation::Dependency { task: 2, pred: 1, start: 7, pred_end: 8 }]);
    }

    #[test]
    fn capacity_mutant_is_caught() {
        let inst = Instance {
            meta: serde_json::Value::Null,
            families: vec![
                FamilySpec { id: 1, duration: 5, size: 6, setup: 0 },
                FamilySpec { id: 2, duration: 5, size: 6, setup: 0 },
            ],
            jobs: vec![
                JobSpec { id: 1, tasks: vec![TaskSpec { id: 1, family: 1, preds: vec![] }] },
                JobSpec { id: 2, tasks: vec![TaskSpec { id: 2, family: 2, preds: vec![] }] },
            ],
        };
        let c = ClusterConfig::new(1, 10);
        let env = |env, family, created, removed| EnvRecord { env, family, machine: 0, created, init_done: created, removed };
        let task = |task, job, family, env, start| TaskRecord {
            task,
            job,
            family,
            machine: 0,
            env,
            release: 0,
            start,
            end: start + 5,
        };
        let mut r = result_with_latencies(&[5, 8]);
        r.capacity = 10;
        r.tasks = vec![task(1, 1, 1, 0, 0), task(2, 2, 2, 1, 3)];
        // env 0 is never removed, so env 1 overflows the machine at t=3
        r.envs = vec![env(0, 1, 0, None), env(1, 2, 3, None)];
        let report = validate_schedule(&inst, c, &r);
        assert_eq!(report, vec![ScheduleViolation::Capacity { machine: 0, time: 3, used: 12, capacity: 10 }]);

        r.envs[0].removed = Some(5);
        r.envs[1].created = 5;
        r.envs[1].init_done = 5;
        r.tasks[1].start = 5;
        r.tasks[1].end = 10;
        r.job_latencies.insert(2, 10);
        assert_eq!(validate_schedule(&inst, c, &r), vec![]);
    }

    #[test]
    fn structural_mutants_are_caught() {
        let inst = chain2();
        let c = ClusterConfig::new(1, 10);
        let fifo = TuplePolicy::new(OrderingPolicy::Fifo, RemovalPolicy::Lru, false, DependencyMode::Default);
        let good = simulate(&inst, c, fifo.into(), 0).unwrap();

        let mut r = good.clone();
        r.tasks.pop();
        assert!(validate_schedule(&inst, c, &r).contains(&ScheduleViolation::MissingTask { task: 2 }));

        let mut r = good.clone();
        r.tasks[0].start = 2;
        r.tasks[0].end = 7;
        assert!(validate_schedule(&inst, c, &r)
            .iter()
            .any(|v| matches!(v, ScheduleViolation::BeforeInit { task: 1, .. })));

        let mut r = good.clone();
        r.envs[0].removed = Some(9);
        assert!(validate_schedule(&inst, c, &r)
            .iter()
            .any(|v| matches!(v, ScheduleViolation::AfterRemoval { task: 2, .. })));

        let mut r = good.clone();
        r.tasks[1].start = 6;
        r.tasks[1].end = 11;
        let report = validate_schedule(&inst, c, &r);
        assert!(report.iter().any(|v| matches!(v, ScheduleViolation::Overlap { env: 0, .. })));
        assert!(report.iter().any(|v| matches!(v, ScheduleViolation::JobLatency { job: 1, .. })));
    }
}
