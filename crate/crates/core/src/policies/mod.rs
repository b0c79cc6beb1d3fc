//! Ordering and removal policies of the framework scheduler, plus the
//! OpenWhisk-style baseline in [`ow`].

use std::cmp::Reverse;

use rand::Rng;

use crate::engine::{ClusterState, Environment, QueuedTask};
use crate::model::{FamilySpec, IndexedInstance, OrderingPolicy, RemovalPolicy, Time};

pub mod ow;

pub use ow::{ow_simulate, OwFamilyRoute};

/// Sorts the queue in place. Every ordering is stable on `seq`.
///
/// The existing-first partition is computed once from the cluster state at
/// `t`, before any placement of the pass.
pub fn order_queue(
    ordering: OrderingPolicy,
    queue: &mut [QueuedTask],
    cluster: &ClusterState,
    ix: &IndexedInstance,
    work: &[Time],
    t: Time,
) {
    match ordering {
        OrderingPolicy::Fifo => queue.sort_by_key(|q| q.seq),
        OrderingPolicy::ExistingFirst => {
            let mut idle: Vec<Option<bool>> = vec![None; ix.families.len()];
            queue.sort_by_cached_key(|q| {
                let f = ix.tasks[q.task].family;
                let has = *idle[f].get_or_insert_with(|| cluster.has_idle_env(f, t));
                (!has, q.seq)
            });
        }
        OrderingPolicy::ShortestJob => queue.sort_by_key(|q| (ix.family_of(q.task).duration, q.seq)),
        OrderingPolicy::SmallestWork => queue.sort_by_key(|q| (work[q.task], q.seq)),
        OrderingPolicy::ReleaseTime => queue.sort_by_key(|q| (q.release, q.seq)),
    }
}

/// Total duration of `task` and everything that depends on it, directly or
/// transitively. On a chain this is the remaining work of the job.
pub fn remaining_work(task: usize, ix: &IndexedInstance) -> Time {
    let mut seen = vec![task];
    let mut stack = vec![task];
    let mut total = 0;
    while let Some(x) = stack.pop() {
        total += ix.family_of(x).duration;
        for &s in &ix.tasks[x].succs {
            if !seen.contains(&s) {
                seen.push(s);
                stack.push(s);
            }
        }
    }
    total
}

pub fn remaining_work_table(ix: &IndexedInstance) -> Vec<Time> {
    let mut work = vec![0; ix.tasks.len()];
    for (_, members) in &ix.jobs {
        let chain = members.iter().all(|&t| ix.tasks[t].succs.len() <= 1 && ix.tasks[t].preds.len() <= 1);
        if chain {
            // suffix sums, walking each job backwards
            for &t in members.iter().rev() {
                let tail: Time = ix.tasks[t].succs.iter().map(|&s| work[s]).sum();
                work[t] = ix.family_of(t).duration + tail;
            }
        } else {
            for &t in members {
                work[t] = remaining_work(t, ix);
            }
        }
    }
    work
}

/// Machine and victims chosen to make room for a new environment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RemovalSelection {
    pub machine: usize,
    /// Environment ids in eviction order.
    pub victims: Vec<usize>,
}

/// Shortest prefix of `candidates` whose sizes, added to `free`, reach `needed`.
fn fitting_prefix(free: u64, candidates: &[&Environment], needed: u64) -> Option<Vec<usize>> {
    let mut have = free;
    let mut victims = Vec::new();
    for env in candidates {
        if have >= needed {
            break;
        }
        have += env.size;
        victims.push(env.id);
    }
    (have >= needed).then_some(victims)
}

fn lru_key(e: &Environment) -> (Time, usize) {
    (e.last_used(), e.id)
}

/// Chooses environments to evict so that `needed` units fit on one machine.
/// Only idle environments are candidates. Returns `None` when no machine can
/// be freed enough.
pub fn select_removals(
    removal: RemovalPolicy,
    cluster: &ClusterState,
    families: &[FamilySpec],
    needed: u64,
    t: Time,
) -> Option<RemovalSelection> {
    let machines = 0..cluster.machines.len();
    match removal {
        RemovalPolicy::Lru => machines.into_iter().find_map(|m| {
            let victims = lru_victims(cluster, m, needed, t)?;
            Some(RemovalSelection { machine: m, victims })
        }),
        RemovalPolicy::MinTime => machines
            .filter_map(|m| {
                let mut cands: Vec<&Environment> = cluster.removable(m, t).collect();
                cands.sort_by_key(|e| (families[e.family].setup, lru_key(e)));
                let victims = fitting_prefix(cluster.free(m), &cands, needed)?;
                let cost: Time = victims.iter().map(|&v| families[cluster.envs[v].family].setup).sum();
                Some((cost, m, victims))
            })
            .min_by_key(|(cost, m, _)| (*cost, *m))
            .map(|(_, machine, victims)| RemovalSelection { machine, victims }),
        RemovalPolicy::MinFamily => machines
            .filter_map(|m| {
                let mut cands: Vec<&Environment> = cluster.removable(m, t).collect();
                cands.sort_by_key(|e| (Reverse(cluster.family_env_count(e.family)), lru_key(e)));
                let victims = fitting_prefix(cluster.free(m), &cands, needed)?;
                let vanished = families_emptied(cluster, &victims);
                Some((vanished, m, victims))
            })
            .min_by_key(|(vanished, m, _)| (*vanished, *m))
            .map(|(_, machine, victims)| RemovalSelection { machine, victims }),
    }
}

/// Least-recently-used idle environments on `machine` that free `needed` units.
pub fn lru_victims(cluster: &ClusterState, machine: usize, needed: u64, t: Time) -> Option<Vec<usize>> {
    let mut cands: Vec<&Environment> = cluster.removable(machine, t).collect();
    cands.sort_by_key(|e| lru_key(e));
    fitting_prefix(cluster.free(machine), &cands, needed)
}

/// Number of families that would have no environment left after evicting `victims`.
fn families_emptied(cluster: &ClusterState, victims: &[usize]) -> usize {
    let mut fams: Vec<usize> = victims.iter().map(|&v| cluster.envs[v].family).collect();
    fams.sort_unstable();
    fams.chunk_by(|a, b| a == b)
        .filter(|run| run.len() == cluster.family_env_count(run[0]))
        .count()
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Uniform draw from the integers in `[1, m)` co-prime with `m`; 1 when `m <= 2`.
pub fn coprime_step<R: Rng + ?Sized>(m: usize, rng: &mut R) -> usize {
    if m <= 2 {
        return 1;
    }
    let candidates: Vec<usize> = (1..m).filter(|&k| gcd(k, m) == 1).collect();
    candidates[rng.gen_range(0..candidates.len())]
}
