//! Exhaustive search for the minimum mean latency of tiny instances.
//!
//! Any schedule can be normalized so that every task start, environment
//! creation and removal happens at time 0, a task end or an environment
//! ready time, with removals only made to fit a creation. The search walks
//! those event times in order and, at each one, branches over every set of
//! creations (with every inclusion-minimal eviction set) and every set of
//! task starts on free environments, including doing nothing. A branch and
//! bound on a critical-path lower bound keeps it finite.
//!
//! Environments that never run a task can be dropped from any schedule, so
//! a family never gets more not-yet-used environments than it has pending
//! tasks. Busy environments do not count against that cap. Repeated states
//! are skipped; the state key includes which environments have been used.

use std::collections::{BTreeMap, HashSet};

use num_rational::Ratio;

use crate::engine::{check_feasible, EnvRecord, SimError, SimResult, TaskRecord};
use crate::model::{ClusterConfig, IndexedInstance, Instance, Time};

pub const ORACLE_MAX_TASKS: usize = 6;
pub const ORACLE_MAX_MACHINES: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {tasks} tasks on {machines} machines")]
    TooLarge { tasks: usize, machines: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Optimal mean latency together with one schedule attaining it.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub mean: Ratio<u64>,
    pub schedule: SimResult,
}

#[derive(Clone, Debug, Hash, PartialEq, Eq)]
struct Env {
    machine: usize,
    family: usize,
    created: Time,
    init_done: Time,
    /// init_done or end of the last started task.
    free_at: Time,
    removed: Option<Time>,
}

#[derive(Clone, Debug)]
struct Partial {
    envs: Vec<Env>,
    /// env, start, end
    started: Vec<Option<(usize, Time, Time)>>,
}

/// (time, live environments as (machine, family, free_at, used), task ends)
type StateKey = (Time, Vec<(usize, usize, Time, bool)>, Vec<Option<Time>>);

struct Search<'a> {
    ix: &'a IndexedInstance,
    cluster: ClusterConfig,
    best: u64,
    best_schedule: Option<Partial>,
    seen: HashSet<StateKey>,
}

impl<'a> Search<'a> {
    fn used(&self, p: &Partial, machine: usize) -> u64 {
        p.envs
            .iter()
            .filter(|e| e.machine == machine && e.removed.is_none())
            .map(|e| self.ix.families[e.family].size)
            .sum()
    }

    fn objective(&self, p: &Partial) -> u64 {
        self.ix
            .jobs
            .iter()
            .map(|(_, members)| members.iter().map(|&t| p.started[t].unwrap().2).max().unwrap())
            .sum()
    }

    /// Sum over jobs of a critical-path bound on their completion.
    fn lower_bound(&self, p: &Partial, t: Time) -> u64 {
        let mut finish = vec![0; self.ix.tasks.len()];
        let mut total = 0;
        for (_, members) in &self.ix.jobs {
            let mut job = 0;
            for &task in members {
                finish[task] = match p.started[task] {
                    Some((_, _, end)) => end,
                    None => {
                        let ready = self.ix.tasks[task].preds.iter().map(|&q| finish[q]).max().unwrap_or(0);
                        ready.max(t) + self.ix.family_of(task).duration
                    }
                };
                job = job.max(finish[task]);
            }
            total += job;
        }
        total
    }

    fn has_run(p: &Partial, env: usize) -> bool {
        p.started.iter().any(|s| s.is_some_and(|s| s.0 == env))
    }

    fn ready(&self, p: &Partial, task: usize, t: Time) -> bool {
        p.started[task].is_none()
            && self.ix.tasks[task].preds.iter().all(|&q| p.started[q].is_some_and(|s| s.2 <= t))
    }

    fn visit(&mut self, p: Partial, t: Time) {
        if p.started.iter().all(Option::is_some) {
            let value = self.objective(&p);
            if value < self.best {
                self.best = value;
                self.best_schedule = Some(p);
            }
            return;
        }
        if self.lower_bound(&p, t) >= self.best {
            return;
        }
        let mut live: Vec<(usize, usize, Time, bool)> = (0..p.envs.len())
            .filter(|&e| p.envs[e].removed.is_none())
            .map(|e| {
                let env = &p.envs[e];
                (env.machine, env.family, env.free_at, Self::has_run(&p, e))
            })
            .collect();
        live.sort_unstable();
        let ends = p.started.iter().map(|s| s.map(|s| s.2)).collect();
        if !self.seen.insert((t, live, ends)) {
            return;
        }
        self.creations(p, t, 0);
    }

    /// Branches over creating environments at `t`, choices in nondecreasing
    /// (family, machine) order.
    fn creations(&mut self, p: Partial, t: Time, from: usize) {
        self.starts(p.clone(), t, 0);
        let m = self.cluster.machines;
        for choice in from..self.ix.families.len() * m {
            let (family, machine) = (choice / m, choice % m);
            let unstarted = (0..self.ix.tasks.len())
                .filter(|&x| self.ix.tasks[x].family == family && p.started[x].is_none())
                .count();
            // an environment that never runs a task can be dropped from any
            // schedule, so unused ones never need to outnumber pending tasks
            let unused = (0..p.envs.len())
                .filter(|&e| {
                    p.envs[e].family == family
                        && p.envs[e].removed.is_none()
                        && !Self::has_run(&p, e)
                })
                .count();
            if unused >= unstarted {
                continue;
            }
            let spec = &self.ix.families[family];
            let free = self.cluster.capacity - self.used(&p, machine);
            // idle, created before t, of another family
            let candidates: Vec<usize> = (0..p.envs.len())
                .filter(|&i| {
                    let e = &p.envs[i];
                    e.machine == machine
                        && e.removed.is_none()
                        && e.family != family
                        && e.created < t
                        && e.free_at <= t
                })
                .collect();
            for victims in minimal_evictions(&candidates, |i| self.ix.families[p.envs[i].family].size, free, spec.size) {
                let mut next = p.clone();
                for v in victims {
                    next.envs[v].removed = Some(t);
                }
                next.envs.push(Env {
                    machine,
                    family,
                    created: t,
                    init_done: t + spec.setup,
                    free_at: t + spec.setup,
                    removed: None,
                });
                self.creations(next, t, choice);
            }
        }
    }

    /// Branches over starting each ready task (from `from` on) on a free
    /// environment of its family, or not starting it.
    fn starts(&mut self, p: Partial, t: Time, from: usize) {
        let Some(task) = (from..self.ix.tasks.len()).find(|&x| self.ready(&p, x, t)) else {
            self.advance(p, t);
            return;
        };
        self.starts(p.clone(), t, task + 1);
        let family = self.ix.tasks[task].family;
        let duration = self.ix.families[family].duration;
        for e in 0..p.envs.len() {
            let env = &p.envs[e];
            if env.family != family || env.removed.is_some() || env.free_at > t {
                continue;
            }
            let mut next = p.clone();
            next.envs[e].free_at = t + duration;
            next.started[task] = Some((e, t, t + duration));
            self.starts(next, t, task + 1);
        }
    }

    fn advance(&mut self, p: Partial, t: Time) {
        if p.started.iter().all(Option::is_some) {
            self.visit(p, t);
            return;
        }
        let next = p.envs.iter().filter(|e| e.removed.is_none() && e.free_at > t).map(|e| e.free_at).min();
        if let Some(next) = next {
            self.visit(p, next);
        }
    }
}

/// Inclusion-minimal subsets of `candidates` whose sizes make `needed` fit.
fn minimal_evictions(candidates: &[usize], size: impl Fn(usize) -> u64, free: u64, needed: u64) -> Vec<Vec<usize>> {
    if free >= needed {
        return vec![vec![]];
    }
    let n = candidates.len();
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        let chosen: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| candidates[i]).collect();
        let total: u64 = chosen.iter().map(|&c| size(c)).sum();
        if free + total < needed {
            continue;
        }
        if chosen.iter().all(|&c| free + total - size(c) < needed) {
            out.push(chosen);
        }
    }
    out
}

/// Feasible starting point: tasks one at a time in job order, each on a fresh
/// environment after evicting everything.
fn serial_schedule(ix: &IndexedInstance) -> Partial {
    let mut p = Partial { envs: Vec::new(), started: vec![None; ix.tasks.len()] };
    let mut now = 0;
    for (_, members) in &ix.jobs {
        for &task in members {
            for e in &mut p.envs {
                e.removed.get_or_insert(now);
            }
            let spec = ix.family_of(task);
            let start = now + spec.setup;
            now = start + spec.duration;
            p.envs.push(Env {
                machine: 0,
                family: ix.tasks[task].family,
                created: start - spec.setup,
                init_done: start,
                free_at: now,
                removed: None,
            });
            p.started[task] = Some((p.envs.len() - 1, start, now));
        }
    }
    p
}

fn to_result(instance: &Instance, ix: &IndexedInstance, cluster: ClusterConfig, p: &Partial) -> SimResult {
    let mut job_latencies = BTreeMap::new();
    let mut tasks = Vec::new();
    for (x, info) in ix.tasks.iter().enumerate() {
        let (env, start, end) = p.started[x].expect("complete schedule");
        let job = ix.jobs[info.job].0;
        tasks.push(TaskRecord {
            task: info.id,
            job,
            family: ix.families[info.family].id,
            machine: p.envs[env].machine,
            env,
            release: info.preds.iter().map(|&q| p.started[q].unwrap().2).max().unwrap_or(0),
            start,
            end,
        });
        let c = job_latencies.entry(job).or_insert(0);
        *c = (*c).max(end);
    }
    tasks.sort_by_key(|r| r.task);
    let envs = p
        .envs
        .iter()
        .enumerate()
        .map(|(i, e)| EnvRecord {
            env: i,
            family: ix.families[e.family].id,
            machine: e.machine,
            created: e.created,
            init_done: e.init_done,
            removed: e.removed,
        })
        .collect();
    SimResult {
        instance: instance.meta.get("id").and_then(|v| v.as_str()).map(str::to_string),
        policy: "optimal".into(),
        machines: cluster.machines,
        capacity: cluster.capacity,
        seed: 0,
        tasks,
        envs,
        job_latencies,
        runtime: Default::default(),
    }
}

/// Minimum achievable mean job latency, by exhaustive search. Limited to
/// [`ORACLE_MAX_TASKS`] tasks and [`ORACLE_MAX_MACHINES`] machines.
pub fn brute_force_optimal(instance: &Instance, cluster: ClusterConfig) -> Result<OracleSolution, OracleError> {
    let tasks = instance.task_count();
    if tasks > ORACLE_MAX_TASKS || cluster.machines > ORACLE_MAX_MACHINES {
        return Err(OracleError::TooLarge { tasks, machines: cluster.machines });
    }
    check_feasible(instance, cluster)?;
    let ix = IndexedInstance::new(instance);
    let serial = serial_schedule(&ix);
    let mut search = Search { ix: &ix, cluster, best: 0, best_schedule: None, seen: HashSet::new() };
    search.best = search.objective(&serial);
    search.best_schedule = Some(serial);
    search.visit(Partial { envs: Vec::new(), started: vec![None; ix.tasks.len()] }, 0);

    let best = search.best_schedule.expect("serial schedule seeds the search");
    Ok(OracleSolution {
        mean: Ratio::new(search.best, ix.jobs.len() as u64),
        schedule: to_result(instance, &ix, cluster, &best),
    })
}
