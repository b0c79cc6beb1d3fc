//! Event-driven execution of the framework scheduling loop.
//!
//! Assignments fix a task's start and end immediately (each environment runs
//! its queue sequentially with no backfilling), so the only events the loop
//! needs are task completion times.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::{
    validate_instance, ClusterConfig, DependencyMode, FamilyId, FamilySpec, IndexedInstance,
    Instance, InstanceViolation, JobId, PolicyConfig, TaskId, Time, TuplePolicy,
};
use crate::policies;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("instance is malformed: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    InvalidInstance(Vec<InstanceViolation>),
    #[error("family {family} needs {size} resource units but machines only have {capacity}")]
    InfeasibleInstance { family: FamilyId, size: u64, capacity: u64 },
    #[error("cluster needs at least one machine")]
    NoMachines,
    #[error("deadlock at t={time}: {queued} tasks queued and no pending event")]
    Deadlock { time: Time, queued: usize },
    #[error("task {task} of family {task_family} assigned to an environment of family {env_family}")]
    FamilyMismatch { task: TaskId, task_family: FamilyId, env_family: FamilyId },
}

/// One entry of an environment's append-only timeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    /// Dense task index.
    pub task: usize,
    pub release: Time,
    pub start: Time,
    pub end: Time,
}

/// A deployed environment together with every task ever assigned to it.
#[derive(Clone, Debug)]
pub struct Environment {
    /// Creation sequence number.
    pub id: usize,
    /// Dense family index.
    pub family: usize,
    pub machine: usize,
    pub size: u64,
    pub created_at: Time,
    pub init_done: Time,
    pub slots: Vec<Slot>,
    pub removed_at: Option<Time>,
}

impl Environment {
    /// Time at which the last assigned task completes (`init_done` when
    /// nothing has been assigned yet).
    pub fn projected_completion(&self) -> Time {
        self.slots.last().map_or(self.init_done, |s| s.end)
    }

    /// Live, initialized, and with nothing running or pending at `t`. A task
    /// ending exactly at `t` counts as finished.
    pub fn is_idle(&self, t: Time) -> bool {
        self.removed_at.is_none() && self.projected_completion() <= t
    }

    /// LRU timestamp: end of the last task, or creation time if unused.
    pub fn last_used(&self) -> Time {
        self.slots.last().map_or(self.created_at, |s| s.end)
    }

    /// Appends a task; its start is `max(previous end or init_done, release)`.
    pub fn push(&mut self, task: usize, release: Time, duration: Time) -> Slot {
        let start = self.projected_completion().max(release);
        let slot = Slot { task, release, start, end: start + duration };
        self.slots.push(slot);
        slot
    }
}

#[derive(Clone, Debug, Default)]
pub struct Machine {
    /// Resident environments in creation order.
    pub envs: Vec<usize>,
    pub used: u64,
}

/// Machines and environments of a running simulation.
#[derive(Clone, Debug)]
pub struct ClusterState {
    pub capacity: u64,
    pub machines: Vec<Machine>,
    pub envs: Vec<Environment>,
    /// Live environments per dense family, ordered by (machine, id).
    family_envs: Vec<Vec<usize>>,
}

impl ClusterState {
    pub fn new(cluster: ClusterConfig, families: usize) -> Self {
        ClusterState {
            capacity: cluster.capacity,
            machines: vec![Machine::default(); cluster.machines],
            envs: Vec::new(),
            family_envs: vec![Vec::new(); families],
        }
    }

    pub fn free(&self, machine: usize) -> u64 {
        self.capacity - self.machines[machine].used
    }

    /// Live environments of a family, ordered by machine then id.
    pub fn envs_of_family(&self, family: usize) -> &[usize] {
        &self.family_envs[family]
    }

    pub fn family_env_count(&self, family: usize) -> usize {
        self.family_envs[family].len()
    }

    pub fn has_idle_env(&self, family: usize, t: Time) -> bool {
        self.family_envs[family].iter().any(|&e| self.envs[e].is_idle(t))
    }

    /// Environments on `machine` that may be evicted at `t`.
    pub fn removable(&self, machine: usize, t: Time) -> impl Iterator<Item = &Environment> + '_ {
        self.machines[machine].envs.iter().map(|&e| &self.envs[e]).filter(move |e| e.is_idle(t))
    }

    /// First idle environment of the family, scanning machines then ids.
    pub fn find_unused_environment(&self, family: usize, t: Time) -> Option<usize> {
        self.family_envs[family].iter().copied().find(|&e| self.envs[e].is_idle(t))
    }

    /// Busy environment of the family that frees up no later than a new
    /// environment could be ready (`t + setup`).
    pub fn find_environment_to_wait(&self, family: usize, setup: Time, t: Time) -> Option<usize> {
        // family_envs is already in (machine, id) order, so min_by_key keeps the tiebreak.
        self.family_envs[family]
            .iter()
            .copied()
            .min_by_key(|&e| self.envs[e].projected_completion())
            .filter(|&e| self.envs[e].projected_completion() <= t + setup)
    }

    /// Creates an environment on the first machine with enough free capacity.
    pub fn place_new_environment(&mut self, family: usize, size: u64, setup: Time, t: Time) -> Option<usize> {
        let machine = (0..self.machines.len()).find(|&m| self.free(m) >= size)?;
        Some(self.create_environment(machine, family, size, setup, t))
    }

    pub fn create_environment(
        &mut self,
        machine: usize,
        family: usize,
        size: u64,
        setup: Time,
        t: Time,
    ) -> usize {
        assert!(self.free(machine) >= size, "machine {machine} over capacity");
        let id = self.envs.len();
        self.envs.push(Environment {
            id,
            family,
            machine,
            size,
            created_at: t,
            init_done: t + setup,
            slots: Vec::new(),
            removed_at: None,
        });
        self.machines[machine].envs.push(id);
        self.machines[machine].used += size;
        let list = &mut self.family_envs[family];
        let pos = list.partition_point(|&e| (self.envs[e].machine, e) < (machine, id));
        list.insert(pos, id);
        id
    }

    pub fn remove_environment(&mut self, env: usize, t: Time) {
        let e = &mut self.envs[env];
        assert!(e.is_idle(t), "environment {env} is not removable at {t}");
        e.removed_at = Some(t);
        let (machine, family, size) = (e.machine, e.family, e.size);
        self.machines[machine].envs.retain(|&x| x != env);
        self.machines[machine].used -= size;
        self.family_envs[family].retain(|&x| x != env);
    }

    /// Appends a task to an environment's queue.
    pub fn assign_task(
        &mut self,
        env: usize,
        task: usize,
        family: usize,
        release: Time,
        duration: Time,
    ) -> Result<Slot, SimError> {
        let e = &mut self.envs[env];
        if e.family != family {
            return Err(SimError::FamilyMismatch {
                task: task as TaskId,
                task_family: family as FamilyId,
                env_family: e.family as FamilyId,
            });
        }
        debug_assert!(e.removed_at.is_none());
        Ok(e.push(task, release, duration))
    }
}

/// A task waiting for placement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueuedTask {
    pub task: usize,
    pub release: Time,
    /// Enqueue counter, the FIFO tiebreak.
    pub seq: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TaskState {
    Waiting,
    Queued,
    Assigned { end: Time },
}

#[derive(Clone, Copy, Debug, Default)]
struct PassOutcome {
    assigned: usize,
    restarted: bool,
}

/// Completion event: (end, job id, task index, dense task).
type Event = Reverse<(Time, JobId, usize, usize)>;

/// State of one run of a tuple policy.
pub struct Simulation<'a> {
    ix: &'a IndexedInstance,
    policy: TuplePolicy,
    cluster: ClusterState,
    queue: Vec<QueuedTask>,
    next_seq: u64,
    state: Vec<TaskState>,
    assigned: usize,
    events: BinaryHeap<Event>,
    work: Vec<Time>,
    /// Smallest size known not to fit anywhere, even with evictions, at the
    /// current step. Free plus removable capacity only shrinks within a step.
    unplaceable_from: Option<u64>,
}

impl<'a> Simulation<'a> {
    /// Creates the run and enqueues every task without predecessors.
    pub fn new(ix: &'a IndexedInstance, cluster: ClusterConfig, policy: TuplePolicy) -> Self {
        let mut sim = Simulation {
            ix,
            policy,
            cluster: ClusterState::new(cluster, ix.families.len()),
            queue: Vec::new(),
            next_seq: 0,
            state: vec![TaskState::Waiting; ix.tasks.len()],
            assigned: 0,
            events: BinaryHeap::new(),
            work: policies::remaining_work_table(ix),
            unplaceable_from: None,
        };
        for (_, members) in &ix.jobs {
            for &task in members {
                if ix.tasks[task].preds.is_empty() {
                    sim.enqueue(task, 0);
                }
            }
        }
        sim
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.cluster
    }

    pub fn queue(&self) -> &[QueuedTask] {
        &self.queue
    }

    fn enqueue(&mut self, task: usize, release: Time) {
        self.state[task] = TaskState::Queued;
        self.queue.push(QueuedTask { task, release, seq: self.next_seq });
        self.next_seq += 1;
    }

    /// Enqueues every successor of `task` whose predecessors are all
    /// completed by `t` (default mode) or all assigned (start modes). The
    /// release is the latest predecessor end. Returns how many were enqueued.
    pub fn queue_dependent_tasks(&mut self, task: usize, t: Time) -> usize {
        let ix = self.ix;
        let mut added = 0;
        for &succ in &ix.tasks[task].succs {
            if self.state[succ] != TaskState::Waiting {
                continue;
            }
            let mut release = 0;
            let mut ready = true;
            for &p in &ix.tasks[succ].preds {
                match self.state[p] {
                    TaskState::Assigned { end }
                        if self.policy.dependency != DependencyMode::Default || end <= t =>
                    {
                        release = release.max(end)
                    }
                    _ => {
                        ready = false;
                        break;
                    }
                }
            }
            if ready {
                self.enqueue(succ, release);
                added += 1;
            }
        }
        added
    }

    /// One invocation of the scheduling step at time `t`. Completions at `t`
    /// must already have been handled.
    pub fn scheduling_step(&mut self, t: Time) -> Result<(), SimError> {
        self.unplaceable_from = None;
        match self.policy.dependency {
            DependencyMode::Default => {
                self.placement_pass(t, false)?;
            }
            DependencyMode::Start => while self.placement_pass(t, false)?.assigned > 0 {},
            DependencyMode::StartBreak => while self.placement_pass(t, true)?.restarted {},
        }
        Ok(())
    }

    fn placement_pass(&mut self, t: Time, break_on_enqueue: bool) -> Result<PassOutcome, SimError> {
        let mut out = PassOutcome::default();
        if self.queue.is_empty() {
            return Ok(out);
        }
        policies::order_queue(self.policy.ordering, &mut self.queue, &self.cluster, self.ix, &self.work, t);
        let snapshot = self.queue.clone();
        for qt in snapshot {
            let Some(env) = self.find_environment(qt.task, t) else {
                continue;
            };
            self.assign(env, qt)?;
            out.assigned += 1;
            if self.policy.dependency != DependencyMode::Default
                && self.queue_dependent_tasks(qt.task, t) > 0
                && break_on_enqueue
            {
                out.restarted = true;
                break;
            }
        }
        let state = &self.state;
        self.queue.retain(|q| state[q.task] == TaskState::Queued);
        Ok(out)
    }

    /// The four placement fallbacks in order.
    fn find_environment(&mut self, task: usize, t: Time) -> Option<usize> {
        let family = self.ix.tasks[task].family;
        let FamilySpec { size, setup, .. } = self.ix.families[family];
        if let Some(e) = self.cluster.find_unused_environment(family, t) {
            return Some(e);
        }
        if self.policy.wait {
            if let Some(e) = self.cluster.find_environment_to_wait(family, setup, t) {
                return Some(e);
            }
        }
        if self.unplaceable_from.is_some_and(|s| size >= s) {
            return None;
        }
        if let Some(e) = self.cluster.place_new_environment(family, size, setup, t) {
            return Some(e);
        }
        if let Some(e) = self.remove_and_place_environment(family, t) {
            return Some(e);
        }
        self.unplaceable_from = Some(self.unplaceable_from.map_or(size, |s| s.min(size)));
        None
    }

    fn remove_and_place_environment(&mut self, family: usize, t: Time) -> Option<usize> {
        remove_and_place_environment(&mut self.cluster, &self.ix.families, self.policy.removal, family, t)
    }

    fn assign(&mut self, env: usize, qt: QueuedTask) -> Result<(), SimError> {
        let task = &self.ix.tasks[qt.task];
        let duration = self.ix.families[task.family].duration;
        let slot = self.cluster.assign_task(env, qt.task, task.family, qt.release, duration)?;
        self.state[qt.task] = TaskState::Assigned { end: slot.end };
        self.assigned += 1;
        let job_id = self.ix.jobs[task.job].0;
        self.events.push(Reverse((slot.end, job_id, task.index, qt.task)));
        Ok(())
    }

    /// Runs the event loop to completion.
    pub fn run(mut self) -> Result<ClusterState, SimError> {
        let mut t = 0;
        loop {
            self.scheduling_step(t)?;
            if self.assigned == self.ix.tasks.len() {
                return Ok(self.cluster);
            }
            let Some(&Reverse((next, ..))) = self.events.peek() else {
                return Err(SimError::Deadlock { time: t, queued: self.queue.len() });
            };
            t = next;
            while let Some(&Reverse((end, _, _, task))) = self.events.peek() {
                if end != t {
                    break;
                }
                self.events.pop();
                if self.policy.dependency == DependencyMode::Default {
                    self.queue_dependent_tasks(task, t);
                }
            }
        }
    }
}

/// Evicts the victims chosen by the removal policy and creates an environment
/// for `family` in the freed space.
pub fn remove_and_place_environment(
    cluster: &mut ClusterState,
    families: &[FamilySpec],
    removal: crate::model::RemovalPolicy,
    family: usize,
    t: Time,
) -> Option<usize> {
    let FamilySpec { size, setup, .. } = families[family];
    let selection = policies::select_removals(removal, cluster, families, size, t)?;
    for &victim in &selection.victims {
        cluster.remove_environment(victim, t);
    }
    Some(cluster.create_environment(selection.machine, family, size, setup, t))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: TaskId,
    pub job: JobId,
    pub family: FamilyId,
    pub machine: usize,
    pub env: usize,
    pub release: Time,
    pub start: Time,
    pub end: Time,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvRecord {
    pub env: usize,
    pub family: FamilyId,
    pub machine: usize,
    pub created: Time,
    pub init_done: Time,
    pub removed: Option<Time>,
}

/// A complete schedule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimResult {
    #[serde(default)]
    pub instance: Option<String>,
    pub policy: String,
    pub machines: usize,
    pub capacity: u64,
    pub seed: u64,
    /// Sorted by task id.
    pub tasks: Vec<TaskRecord>,
    /// Sorted by env id.
    pub envs: Vec<EnvRecord>,
    pub job_latencies: BTreeMap<JobId, Time>,
    /// Engine wall-clock time; not serialized so outputs stay reproducible.
    #[serde(skip)]
    pub runtime: Duration,
}

impl SimResult {
    pub fn from_cluster(
        instance: &Instance,
        ix: &IndexedInstance,
        cluster: &ClusterState,
        policy: &PolicyConfig,
        config: ClusterConfig,
        seed: u64,
    ) -> Self {
        let mut tasks = Vec::with_capacity(ix.tasks.len());
        let mut envs = Vec::with_capacity(cluster.envs.len());
        let mut job_latencies = BTreeMap::new();
        for env in &cluster.envs {
            let family = ix.families[env.family].id;
            envs.push(EnvRecord {
                env: env.id,
                family,
                machine: env.machine,
                created: env.created_at,
                init_done: env.init_done,
                removed: env.removed_at,
            });
            for slot in &env.slots {
                let task = &ix.tasks[slot.task];
                let job = ix.jobs[task.job].0;
                tasks.push(TaskRecord {
                    task: task.id,
                    job,
                    family,
                    machine: env.machine,
                    env: env.id,
                    release: slot.release,
                    start: slot.start,
                    end: slot.end,
                });
                let c = job_latencies.entry(job).or_insert(0);
                *c = (*c).max(slot.end);
            }
        }
        tasks.sort_by_key(|r| r.task);
        SimResult {
            instance: instance.meta.get("id").and_then(|v| v.as_str()).map(str::to_string),
            policy: policy.to_string(),
            machines: config.machines,
            capacity: config.capacity,
            seed,
            tasks,
            envs,
            job_latencies,
            runtime: Duration::ZERO,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("SimResult serializes")
    }
}

/// Rejects malformed instances and families that fit on no machine.
pub fn check_feasible(instance: &Instance, cluster: ClusterConfig) -> Result<(), SimError> {
    let report = validate_instance(instance);
    if !report.is_empty() {
        return Err(SimError::InvalidInstance(report));
    }
    if cluster.machines == 0 {
        return Err(SimError::NoMachines);
    }
    if let Some(f) = instance.families.iter().find(|f| f.size > cluster.capacity) {
        return Err(SimError::InfeasibleInstance {
            family: f.id,
            size: f.size,
            capacity: cluster.capacity,
        });
    }
    Ok(())
}

/// Schedules `instance` on `cluster` under `policy`. The seed only feeds the
/// baseline's random choices; tuple policies are deterministic without it.
pub fn simulate(
    instance: &Instance,
    cluster: ClusterConfig,
    policy: PolicyConfig,
    seed: u64,
) -> Result<SimResult, SimError> {
    check_feasible(instance, cluster)?;
    let started = Instant::now();
    let ix = IndexedInstance::new(instance);
    let state = match policy {
        PolicyConfig::OpenWhisk => policies::ow::run(&ix, cluster, seed)?,
        PolicyConfig::Tuple(tuple) => Simulation::new(&ix, cluster, tuple).run()?,
    };
    let mut result = SimResult::from_cluster(instance, &ix, &state, &policy, cluster, seed);
    result.runtime = started.elapsed();
    Ok(result)
}
