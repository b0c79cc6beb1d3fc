//! Workload, cluster and policy data model shared by the simulator, the
//! baseline, the generator and the metrics.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Simulation time in integer units.
pub type Time = u64;
/// Family identifier as written in instance files (1-based, dense).
pub type FamilyId = u32;
pub type TaskId = u64;
pub type JobId = u64;

/// A class of identical invocations sharing one environment type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub id: FamilyId,
    /// Execution time of every task of the family.
    pub duration: Time,
    /// Resource units held by an environment from creation until removal.
    pub size: u64,
    /// Time between environment creation and readiness.
    pub setup: Time,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub family: FamilyId,
    #[serde(default)]
    pub preds: Vec<TaskId>,
}

/// A request; the array order of `tasks` is the task index order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub id: JobId,
    pub tasks: Vec<TaskSpec>,
}

/// Immutable workload description. This is also the on-disk instance format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(default)]
    pub meta: serde_json::Value,
    pub families: Vec<FamilySpec>,
    pub jobs: Vec<JobSpec>,
}

impl Instance {
    /// Number of jobs (N).
    pub fn job_count(&self) -> usize {
        self.jobs.len()
    }

    /// Total number of tasks (n).
    pub fn task_count(&self) -> usize {
        self.jobs.iter().map(|j| j.tasks.len()).sum()
    }

    pub fn family(&self, id: FamilyId) -> Option<&FamilySpec> {
        self.families.iter().find(|f| f.id == id)
    }

    pub fn max_family_size(&self) -> u64 {
        self.families.iter().map(|f| f.size).max().unwrap_or(0)
    }

    pub fn tasks(&self) -> impl Iterator<Item = (&JobSpec, usize, &TaskSpec)> {
        self.jobs
            .iter()
            .flat_map(|j| j.tasks.iter().enumerate().map(move |(k, t)| (j, k, t)))
    }
}

/// One structural defect found by [`validate_instance`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InstanceViolation {
    DuplicateFamily { family: FamilyId },
    FamilyIdsNotDense { count: usize },
    ZeroDuration { family: FamilyId },
    ZeroSize { family: FamilyId },
    DuplicateJob { job: JobId },
    EmptyJob { job: JobId },
    DuplicateTask { task: TaskId },
    UnknownFamily { task: TaskId, family: FamilyId },
    UnknownPredecessor { task: TaskId, pred: TaskId },
    CrossJobPredecessor { task: TaskId, pred: TaskId },
    ForwardPrecedence { task: TaskId, pred: TaskId },
    DuplicatePredecessor { task: TaskId, pred: TaskId },
}

impl fmt::Display for InstanceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use InstanceViolation::*;
        match self {
            DuplicateFamily { family } => write!(f, "family {family}: duplicate id"),
            FamilyIdsNotDense { count } => {
                write!(f, "family ids are not exactly 1..={count}")
            }
            ZeroDuration { family } => write!(f, "family {family}: duration must be >= 1"),
            ZeroSize { family } => write!(f, "family {family}: size must be >= 1"),
            DuplicateJob { job } => write!(f, "job {job}: duplicate id"),
            EmptyJob { job } => write!(f, "job {job}: no tasks"),
            DuplicateTask { task } => write!(f, "task {task}: duplicate id"),
            UnknownFamily { task, family } => {
                write!(f, "task {task}: unknown family {family}")
            }
            UnknownPredecessor { task, pred } => {
                write!(f, "task {task}: unknown predecessor {pred}")
            }
            CrossJobPredecessor { task, pred } => {
                write!(f, "task {task}: predecessor {pred} belongs to another job")
            }
            ForwardPrecedence { task, pred } => {
                write!(f, "task {task}: forward precedence on {pred}")
            }
            DuplicatePredecessor { task, pred } => {
                write!(f, "task {task}: predecessor {pred} listed twice")
            }
        }
    }
}

/// Checks the structural invariants of an instance. An empty report means the
/// instance is well formed.
pub fn validate_instance(instance: &Instance) -> Vec<InstanceViolation> {
    let mut out = Vec::new();

    let mut family_ids = HashSet::new();
    for fam in &instance.families {
        if !family_ids.insert(fam.id) {
            out.push(InstanceViolation::DuplicateFamily { family: fam.id });
        }
        if fam.duration == 0 {
            out.push(InstanceViolation::ZeroDuration { family: fam.id });
        }
        if fam.size == 0 {
            out.push(InstanceViolation::ZeroSize { family: fam.id });
        }
    }
    let count = family_ids.len();
    if (1..=count as FamilyId).any(|id| !family_ids.contains(&id)) {
        out.push(InstanceViolation::FamilyIdsNotDense { count });
    }

    // task id -> (job position, index within job)
    let mut location: HashMap<TaskId, (usize, usize)> = HashMap::new();
    let mut job_ids = HashSet::new();
    for (j, job) in instance.jobs.iter().enumerate() {
        if !job_ids.insert(job.id) {
            out.push(InstanceViolation::DuplicateJob { job: job.id });
        }
        if job.tasks.is_empty() {
            out.push(InstanceViolation::EmptyJob { job: job.id });
        }
        for (k, task) in job.tasks.iter().enumerate() {
            if location.insert(task.id, (j, k)).is_some() {
                out.push(InstanceViolation::DuplicateTask { task: task.id });
            }
        }
    }

    for (j, job) in instance.jobs.iter().enumerate() {
        for (k, task) in job.tasks.iter().enumerate() {
            if !family_ids.contains(&task.family) {
                out.push(InstanceViolation::UnknownFamily {
                    task: task.id,
                    family: task.family,
                });
            }
            let mut seen = HashSet::new();
            for &pred in &task.preds {
                if !seen.insert(pred) {
                    out.push(InstanceViolation::DuplicatePredecessor { task: task.id, pred });
                    continue;
                }
                match location.get(&pred) {
                    None => out.push(InstanceViolation::UnknownPredecessor { task: task.id, pred }),
                    Some(&(pj, _)) if pj != j => {
                        out.push(InstanceViolation::CrossJobPredecessor { task: task.id, pred })
                    }
                    Some(&(_, pk)) if pk >= k => {
                        out.push(InstanceViolation::ForwardPrecedence { task: task.id, pred })
                    }
                    Some(_) => {}
                }
            }
        }
    }
    out
}

/// Homogeneous cluster: `machines` machines of `capacity` resource units each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub machines: usize,
    pub capacity: u64,
}

impl ClusterConfig {
    pub fn new(machines: usize, capacity: u64) -> Self {
        ClusterConfig { machines, capacity }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OrderingPolicy {
    Fifo,
    ExistingFirst,
    ShortestJob,
    SmallestWork,
    ReleaseTime,
}

impl OrderingPolicy {
    pub const ALL: [OrderingPolicy; 5] = [
        OrderingPolicy::Fifo,
        OrderingPolicy::ExistingFirst,
        OrderingPolicy::ShortestJob,
        OrderingPolicy::SmallestWork,
        OrderingPolicy::ReleaseTime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OrderingPolicy::Fifo => "FIFO",
            OrderingPolicy::ExistingFirst => "EF",
            OrderingPolicy::ShortestJob => "SJF",
            OrderingPolicy::SmallestWork => "SW",
            OrderingPolicy::ReleaseTime => "RT",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RemovalPolicy {
    Lru,
    MinTime,
    MinFamily,
}

impl RemovalPolicy {
    pub const ALL: [RemovalPolicy; 3] =
        [RemovalPolicy::Lru, RemovalPolicy::MinTime, RemovalPolicy::MinFamily];

    pub fn name(self) -> &'static str {
        match self {
            RemovalPolicy::Lru => "LRU",
            RemovalPolicy::MinTime => "MinTime",
            RemovalPolicy::MinFamily => "MinFamily",
        }
    }
}

/// When successors of a task enter the scheduling queue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DependencyMode {
    /// On predecessor completion.
    Default,
    /// On predecessor assignment; extra placement passes after each step.
    Start,
    /// On predecessor assignment; the placement loop restarts immediately.
    StartBreak,
}

impl DependencyMode {
    pub const ALL: [DependencyMode; 3] =
        [DependencyMode::Default, DependencyMode::Start, DependencyMode::StartBreak];

    pub fn name(self) -> &'static str {
        match self {
            DependencyMode::Default => "def",
            DependencyMode::Start => "start",
            DependencyMode::StartBreak => "stbr",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TuplePolicy {
    pub ordering: OrderingPolicy,
    pub removal: RemovalPolicy,
    pub wait: bool,
    pub dependency: DependencyMode,
}

impl TuplePolicy {
    pub fn new(
        ordering: OrderingPolicy,
        removal: RemovalPolicy,
        wait: bool,
        dependency: DependencyMode,
    ) -> Self {
        TuplePolicy { ordering, removal, wait, dependency }
    }

    /// All 90 combinations, ordering-major.
    pub fn all() -> Vec<TuplePolicy> {
        let mut out = Vec::with_capacity(90);
        for ordering in OrderingPolicy::ALL {
            for removal in RemovalPolicy::ALL {
                for wait in [false, true] {
                    for dependency in DependencyMode::ALL {
                        out.push(TuplePolicy { ordering, removal, wait, dependency });
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for TuplePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.ordering.name(),
            self.removal.name(),
            if self.wait { "wait" } else { "nowait" },
            self.dependency.name()
        )
    }
}

/// Either the OpenWhisk-style baseline or a framework policy tuple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyConfig {
    OpenWhisk,
    Tuple(TuplePolicy),
}

impl PolicyConfig {
    /// Every tuple variant followed by the baseline.
    pub fn all() -> Vec<PolicyConfig> {
        let mut out: Vec<_> = TuplePolicy::all().into_iter().map(PolicyConfig::Tuple).collect();
        out.push(PolicyConfig::OpenWhisk);
        out
    }
}

impl From<TuplePolicy> for PolicyConfig {
    fn from(p: TuplePolicy) -> Self {
        PolicyConfig::Tuple(p)
    }
}

impl fmt::Display for PolicyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyConfig::OpenWhisk => f.write_str("OW"),
            PolicyConfig::Tuple(t) => t.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid policy {input:?}: {reason}")]
pub struct ParsePolicyError {
    pub input: String,
    pub reason: String,
}

impl FromStr for PolicyConfig {
    type Err = ParsePolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| ParsePolicyError { input: s.to_string(), reason: reason.into() };
        let s = s.trim();
        if s == "OW" {
            return Ok(PolicyConfig::OpenWhisk);
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [ordering, removal, wait, dependency] = parts[..] else {
            return Err(err("expected OW or four comma-separated fields"));
        };
        let ordering = OrderingPolicy::ALL
            .into_iter()
            .find(|o| o.name() == ordering)
            .ok_or_else(|| err("ordering must be one of FIFO, EF, SJF, SW, RT"))?;
        let removal = RemovalPolicy::ALL
            .into_iter()
            .find(|r| r.name() == removal)
            .ok_or_else(|| err("removal must be one of LRU, MinTime, MinFamily"))?;
        let wait = match wait {
            "wait" => true,
            "nowait" => false,
            _ => return Err(err("wait field must be wait or nowait")),
        };
        let dependency = DependencyMode::ALL
            .into_iter()
            .find(|d| d.name() == dependency)
            .ok_or_else(|| err("dependency must be one of def, start, stbr"))?;
        Ok(PolicyConfig::Tuple(TuplePolicy { ordering, removal, wait, dependency }))
    }
}

impl Serialize for PolicyConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicyConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dense, index-based view of a validated instance used by the simulators.
#[derive(Clone, Debug)]
pub struct IndexedInstance {
    pub families: Vec<FamilySpec>,
    pub tasks: Vec<IndexedTask>,
    /// Job id and its task indices in index order.
    pub jobs: Vec<(JobId, Vec<usize>)>,
}

#[derive(Clone, Debug)]
pub struct IndexedTask {
    pub id: TaskId,
    pub job: usize,
    /// 0-based position within the job.
    pub index: usize,
    /// Position in `IndexedInstance::families`.
    pub family: usize,
    pub preds: Vec<usize>,
    /// Successors in ascending index order.
    pub succs: Vec<usize>,
}

impl IndexedInstance {
    /// Builds the dense view. The instance must pass [`validate_instance`].
    pub fn new(instance: &Instance) -> Self {
        let mut families = instance.families.clone();
        families.sort_by_key(|f| f.id);
        let family_pos: HashMap<FamilyId, usize> =
            families.iter().enumerate().map(|(i, f)| (f.id, i)).collect();

        let mut tasks = Vec::with_capacity(instance.task_count());
        let mut jobs = Vec::with_capacity(instance.job_count());
        let mut task_pos = HashMap::new();
        for (j, job) in instance.jobs.iter().enumerate() {
            let mut members = Vec::with_capacity(job.tasks.len());
            for (k, task) in job.tasks.iter().enumerate() {
                task_pos.insert(task.id, tasks.len());
                members.push(tasks.len());
                tasks.push(IndexedTask {
                    id: task.id,
                    job: j,
                    index: k,
                    family: family_pos[&task.family],
                    preds: Vec::new(),
                    succs: Vec::new(),
                });
            }
            jobs.push((job.id, members));
        }
        for job in &instance.jobs {
            for task in &job.tasks {
                let me = task_pos[&task.id];
                for pred in &task.preds {
                    let p = task_pos[pred];
                    tasks[me].preds.push(p);
                    tasks[p].succs.push(me);
                }
            }
        }
        for t in &mut tasks {
            t.succs.sort_unstable();
        }
        IndexedInstance { families, tasks, jobs }
    }

    pub fn family_of(&self, task: usize) -> &FamilySpec {
        &self.families[self.tasks[task].family]
    }
}
