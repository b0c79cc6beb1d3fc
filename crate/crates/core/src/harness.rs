//! Grid sweeps: instance generation, parallel simulation of every
//! (instance, cluster, policy) cell, a resumable aggregate CSV and
//! normalized box-plot reports.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::engine::{simulate, SimError};
use crate::metrics::{box_stats, mean_latency, normalize_relative, percentile_latency, ratio_to_f64, IncompleteGroup};
use crate::model::{ClusterConfig, Instance, PolicyConfig, TuplePolicy};
use crate::workload::{dagify_instance, generate_chain_instance, GenParams, Range, WorkloadError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid sweep spec: {0}")]
    InvalidSpec(String),
    #[error("unknown preset {0:?} (known: paper-grid, desk)")]
    UnknownPreset(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    SpecParse { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Incomplete(#[from] IncompleteGroup),
    #[error("row {instance_id} m={m} Q={capacity} {policy}: {source}")]
    Reproduce { instance_id: String, m: usize, capacity: u64, policy: String, source: SimError },
    #[error("no rows to report")]
    Empty,
}

/// Experiment grid. Ranges are written as `"MIN:MAX"` strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub families: Vec<u32>,
    #[serde(with = "range_list")]
    pub setups: Vec<Range>,
    #[serde(with = "range_list")]
    pub chains: Vec<Range>,
    pub machines: Vec<usize>,
    pub capacities: Vec<u64>,
    #[serde(default = "default_instances")]
    pub instances: u64,
    /// Policy strings; `"all"` expands to every variant, `"tuples"` to the
    /// framework variants only.
    #[serde(default = "default_policies")]
    pub policies: Vec<String>,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; `None` uses every core.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default = "default_tasks")]
    pub tasks: u64,
    /// Turn every generated chain instance into an out-tree instance.
    #[serde(default)]
    pub dag: bool,
}

fn default_instances() -> u64 {
    20
}

fn default_policies() -> Vec<String> {
    vec!["all".into()]
}

fn default_tasks() -> u64 {
    1000
}

mod range_list {
    use super::*;

    pub fn serialize<S: Serializer>(ranges: &[Range], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(ranges.iter().map(|r| format!("{}:{}", r.min, r.max)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Range>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| Range::from_str(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

impl SweepSpec {
    /// Named grids: `paper-grid` is the full evaluation space, `desk` a
    /// reduced subset that runs in minutes.
    pub fn preset(name: &str) -> Result<SweepSpec, HarnessError> {
        let r = Range::new;
        match name {
            "paper-grid" => Ok(SweepSpec {
                families: vec![10, 20, 50, 100, 200, 500],
                setups: vec![r(0, 0), r(10, 20), r(100, 200), r(1000, 2000)],
                chains: vec![r(2, 10), r(10, 20), r(50, 100)],
                machines: vec![2, 5, 10, 20, 50],
                capacities: vec![10, 20, 50],
                instances: 20,
                policies: default_policies(),
                base_seed: 0,
                jobs: None,
                tasks: 1000,
                dag: false,
            }),
            "desk" => Ok(SweepSpec {
                families: vec![50, 200],
                setups: vec![r(10, 20), r(100, 200)],
                chains: vec![r(10, 20)],
                machines: vec![10, 20],
                capacities: vec![10],
                instances: 5,
                policies: default_policies(),
                base_seed: 0,
                jobs: None,
                tasks: 1000,
                dag: false,
            }),
            other => Err(HarnessError::UnknownPreset(other.to_string())),
        }
    }

    pub fn from_file(path: &Path) -> Result<SweepSpec, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| HarnessError::SpecParse { path: path.into(), source })
    }

    /// Expanded policy list in a fixed order, duplicates dropped.
    pub fn policy_list(&self) -> Result<Vec<PolicyConfig>, HarnessError> {
        let mut out: Vec<PolicyConfig> = Vec::new();
        for name in &self.policies {
            let expanded = match name.as_str() {
                "all" => PolicyConfig::all(),
                "tuples" => TuplePolicy::all().into_iter().map(PolicyConfig::from).collect(),
                s => vec![s.parse().map_err(|e| HarnessError::InvalidSpec(format!("{e}")))?],
            };
            for p in expanded {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let empty = [
            ("families", self.families.is_empty()),
            ("setups", self.setups.is_empty()),
            ("chains", self.chains.is_empty()),
            ("machines", self.machines.is_empty()),
            ("capacities", self.capacities.is_empty()),
            ("policies", self.policies.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(HarnessError::InvalidSpec(format!("{name} must not be empty")));
        }
        if self.instances == 0 {
            return Err(HarnessError::InvalidSpec("instances must be >= 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(HarnessError::InvalidSpec("jobs must be >= 1".into()));
        }
        if self.machines.contains(&0) || self.capacities.contains(&0) {
            return Err(HarnessError::InvalidSpec("machine counts and capacities must be >= 1".into()));
        }
        self.policy_list()?;
        for cell in self.instance_cells() {
            cell.params.validate()?;
        }
        Ok(())
    }

    pub fn clusters(&self) -> Vec<ClusterConfig> {
        let mut out = Vec::new();
        for &m in &self.machines {
            for &q in &self.capacities {
                out.push(ClusterConfig::new(m, q));
            }
        }
        out
    }

    /// Every instance of the grid, in canonical order.
    pub fn instance_cells(&self) -> Vec<InstanceCell> {
        let mut out = Vec::new();
        for &nf in &self.families {
            for &setup in &self.setups {
                for &chain in &self.chains {
                    for index in 0..self.instances {
                        let seed = instance_seed(self.base_seed, nf, setup, chain, index);
                        let mut params = GenParams::new(nf, setup, chain, seed);
                        params.tasks = self.tasks;
                        out.push(InstanceCell { params, index, dag: self.dag });
                    }
                }
            }
        }
        out
    }

    /// instances × clusters × policies.
    pub fn total_runs(&self) -> Result<u64, HarnessError> {
        let instances = (self.families.len() * self.setups.len() * self.chains.len()) as u64 * self.instances;
        Ok(instances * self.clusters().len() as u64 * self.policy_list()?.len() as u64)
    }
}

/// One generated instance of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceCell {
    pub params: GenParams,
    pub index: u64,
    pub dag: bool,
}

impl InstanceCell {
    pub fn generate(&self) -> Result<Instance, WorkloadError> {
        let chain = generate_chain_instance(&self.params)?;
        if self.dag {
            dagify_instance(&chain, dag_seed(self.params.seed))
        } else {
            Ok(chain)
        }
    }

    pub fn instance_id(&self) -> String {
        self.params.tag(if self.dag { "dag" } else { "chain" })
    }
}

/// FNV-1a over the key bytes followed by a splitmix64 finalizer. Stable
/// across platforms and releases, unlike `std::hash`.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

pub fn instance_seed(base: u64, families: u32, setup: Range, chain: Range, index: u64) -> u64 {
    stable_hash(&[
        &base.to_le_bytes(),
        &families.to_le_bytes(),
        &setup.min.to_le_bytes(),
        &setup.max.to_le_bytes(),
        &chain.min.to_le_bytes(),
        &chain.max.to_le_bytes(),
        &index.to_le_bytes(),
    ])
}

/// Sub-seed for turning a chain instance into an out-tree.
pub fn dag_seed(instance_seed: u64) -> u64 {
    stable_hash(&[&instance_seed.to_le_bytes(), b"dag"])
}

/// Seed of one simulation run. Only the baseline consumes it.
pub fn run_seed(instance_seed: u64, cluster: ClusterConfig, policy: &str) -> u64 {
    stable_hash(&[
        &instance_seed.to_le_bytes(),
        &(cluster.machines as u64).to_le_bytes(),
        &cluster.capacity.to_le_bytes(),
        policy.as_bytes(),
    ])
}

/// One line of the aggregate CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub instance_id: String,
    pub seed: u64,
    pub n_f: u32,
    pub s_min: u64,
    pub s_max: u64,
    pub l_min: u64,
    pub l_max: u64,
    pub m: usize,
    #[serde(rename = "Q")]
    pub capacity: u64,
    pub policy: String,
    pub mean_latency: f64,
    pub p95_latency: u64,
}

impl SweepRow {
    pub fn key(&self) -> RowKey {
        RowKey {
            instance_id: self.instance_id.clone(),
            m: self.m,
            capacity: self.capacity,
            policy: self.policy.clone(),
        }
    }

    pub fn cluster(&self) -> ClusterConfig {
        ClusterConfig::new(self.m, self.capacity)
    }

    fn cell(&self) -> Result<InstanceCell, HarnessError> {
        let dag = if self.instance_id.starts_with("dag_") {
            true
        } else if self.instance_id.starts_with("chain_") {
            false
        } else {
            return Err(HarnessError::InvalidSpec(format!("unrecognised instance id {:?}", self.instance_id)));
        };
        let mut params = GenParams::new(
            self.n_f,
            Range::new(self.s_min, self.s_max),
            Range::new(self.l_min, self.l_max),
            self.seed,
        );
        params.tasks = tasks_from_id(&self.instance_id).unwrap_or(params.tasks);
        Ok(InstanceCell { params, index: 0, dag })
    }
}

// Ids of non-default task counts carry an `_n<tasks>` suffix.
fn tasks_from_id(id: &str) -> Option<u64> {
    id.rsplit_once("_n").and_then(|(_, n)| n.parse().ok())
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey {
    pub instance_id: String,
    pub m: usize,
    pub capacity: u64,
    pub policy: String,
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} m={} Q={} {}", self.instance_id, self.m, self.capacity, self.policy)
    }
}

/// A run that produced no row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellFailure {
    pub key: RowKey,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepOutcome {
    pub total: u64,
    pub executed: u64,
    pub skipped: u64,
    pub failures: Vec<CellFailure>,
}

struct Run<'a> {
    cell: usize,
    cluster: ClusterConfig,
    policy: &'a PolicyConfig,
    policy_name: String,
}

fn run_one(cell: &InstanceCell, instance_id: &str, instance: &Instance, run: &Run<'_>) -> Result<SweepRow, SimError> {
    let seed = run_seed(cell.params.seed, run.cluster, &run.policy_name);
    let result = simulate(instance, run.cluster, *run.policy, seed)?;
    Ok(SweepRow {
        instance_id: instance_id.to_string(),
        seed: cell.params.seed,
        n_f: cell.params.families,
        s_min: cell.params.setup.min,
        s_max: cell.params.setup.max,
        l_min: cell.params.chain.min,
        l_max: cell.params.chain.max,
        m: run.cluster.machines,
        capacity: run.cluster.capacity,
        policy: run.policy_name.clone(),
        mean_latency: ratio_to_f64(mean_latency(&result)),
        p95_latency: percentile_latency(&result, 95),
    })
}

fn cell_id(cell: &InstanceCell, default_tasks: u64) -> String {
    let id = cell.instance_id();
    if cell.params.tasks == default_tasks {
        id
    } else {
        format!("{id}_n{}", cell.params.tasks)
    }
}

pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>, HarnessError> {
    let csv_err = |source| HarnessError::Csv { path: path.into(), source };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

/// Writes rows to `path` atomically (temporary file, then rename).
pub fn write_rows(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("csv.tmp");
    let csv_err = |source| HarnessError::Csv { path: tmp.clone(), source };
    let mut writer = csv::Writer::from_path(&tmp).map_err(csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| HarnessError::Io { path: tmp.clone(), source })?;
    drop(writer);
    fs::rename(&tmp, path).map_err(|source| HarnessError::Io { path: path.into(), source })
}

/// Runs every cell of `spec` missing from the CSV at `out`. New rows are
/// appended as they finish, so an interrupted sweep resumes where it
/// stopped; at the end the file is rewritten in canonical grid order, which
/// makes its bytes independent of the worker count. `jobs` overrides the
/// spec's worker count.
pub fn run_sweep(spec: &SweepSpec, out: &Path, jobs: Option<usize>) -> Result<SweepOutcome, HarnessError> {
    spec.validate()?;
    let policies = spec.policy_list()?;
    let clusters = spec.clusters();
    let cells = spec.instance_cells();
    let ids: Vec<String> = cells.iter().map(|c| cell_id(c, default_tasks())).collect();
    let total = spec.total_runs()?;
    log::info!(
        "sweep: {} instances x {} clusters x {} policies = {total} runs",
        cells.len(),
        clusters.len(),
        policies.len()
    );

    let existing = if out.exists() { read_rows(out)? } else { Vec::new() };
    let present: HashSet<RowKey> = existing.iter().map(SweepRow::key).collect();

    let policy_names: Vec<String> = policies.iter().map(ToString::to_string).collect();
    let mut pending: Vec<Vec<Run>> = (0..cells.len()).map(|_| Vec::new()).collect();
    let mut order: HashMap<RowKey, usize> = HashMap::new();
    for (c, id) in ids.iter().enumerate() {
        for &cluster in &clusters {
            for (policy, name) in policies.iter().zip(&policy_names) {
                let key = RowKey {
                    instance_id: id.clone(),
                    m: cluster.machines,
                    capacity: cluster.capacity,
                    policy: name.clone(),
                };
                if !present.contains(&key) {
                    pending[c].push(Run { cell: c, cluster, policy, policy_name: name.clone() });
                }
                let next = order.len();
                order.entry(key).or_insert(next);
            }
        }
    }
    let todo: u64 = pending.iter().map(|p| p.len() as u64).sum();
    log::info!("sweep: {} rows present, {todo} to run", total - todo);

    let threads = jobs.or(spec.jobs).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::InvalidSpec(format!("thread pool: {e}")))?;

    // a single writer thread appends finished rows to the CSV
    let append_header = !out.exists();
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .map_err(|source| HarnessError::Io { path: out.into(), source })?;
    let (tx, rx) = mpsc::channel::<Result<SweepRow, CellFailure>>();
    let out_path = out.to_path_buf();
    let writer = std::thread::spawn(move || -> Result<Vec<CellFailure>, HarnessError> {
        let csv_err = |source| HarnessError::Csv { path: out_path.clone(), source };
        let mut w = csv::WriterBuilder::new().has_headers(append_header).from_writer(file);
        let mut failures = Vec::new();
        let mut done = 0u64;
        for msg in rx {
            match msg {
                Ok(row) => w.serialize(row).map_err(csv_err)?,
                Err(failure) => {
                    log::error!("{}: {}", failure.key, failure.error);
                    failures.push(failure);
                }
            }
            done += 1;
            if done.is_multiple_of(1000) || done == todo {
                w.flush().map_err(|source| HarnessError::Io { path: out_path.clone(), source })?;
                log::info!("sweep: {done}/{todo}");
            }
        }
        w.flush().map_err(|source| HarnessError::Io { path: out_path.clone(), source })?;
        Ok(failures)
    });

    pool.install(|| {
        pending.par_iter().filter(|runs| !runs.is_empty()).for_each_with(tx, |tx, runs| {
            let c = runs[0].cell;
            let cell = &cells[c];
            let instance = match cell.generate() {
                Ok(i) => i,
                Err(e) => {
                    for run in runs {
                        let key = RowKey {
                            instance_id: ids[c].clone(),
                            m: run.cluster.machines,
                            capacity: run.cluster.capacity,
                            policy: run.policy_name.clone(),
                        };
                        let _ = tx.send(Err(CellFailure { key, error: e.to_string() }));
                    }
                    return;
                }
            };
            runs.par_iter().for_each_with(tx.clone(), |tx, run| {
                let msg = run_one(cell, &ids[c], &instance, run).map_err(|e| CellFailure {
                    key: RowKey {
                        instance_id: ids[c].clone(),
                        m: run.cluster.machines,
                        capacity: run.cluster.capacity,
                        policy: run.policy_name.clone(),
                    },
                    error: e.to_string(),
                });
                let _ = tx.send(msg);
            });
        });
    });
    let mut failures = writer.join().expect("writer thread panicked")?;
    failures.sort_by(|a, b| a.key.cmp(&b.key));

    // canonical order: grid rows first, foreign rows after in key order
    let mut rows = read_rows(out)?;
    rows.sort_by(|a, b| {
        let rank = |r: &SweepRow| order.get(&r.key()).copied().unwrap_or(usize::MAX);
        rank(a).cmp(&rank(b)).then_with(|| a.key().cmp(&b.key()))
    });
    rows.dedup_by(|a, b| a.key() == b.key());
    write_rows(out, &rows)?;

    Ok(SweepOutcome { total, executed: todo - failures.len() as u64, skipped: total - todo, failures })
}

/// Regenerates the instance of a CSV row and simulates it again.
pub fn reproduce_row(row: &SweepRow) -> Result<SweepRow, HarnessError> {
    let cell = row.cell()?;
    let instance = cell.generate()?;
    let policy: PolicyConfig = row.policy.parse().map_err(|e| HarnessError::InvalidSpec(format!("{e}")))?;
    let run = Run { cell: 0, cluster: row.cluster(), policy: &policy, policy_name: row.policy.clone() };
    run_one(&cell, &row.instance_id, &instance, &run).map_err(|source| HarnessError::Reproduce {
        instance_id: row.instance_id.clone(),
        m: row.m,
        capacity: row.capacity,
        policy: row.policy.clone(),
        source,
    })
}

/// Dimension whose values are compared against each other in a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VaryDim {
    Ordering,
    Removal,
    Wait,
    Dependency,
    Policy,
}

impl FromStr for VaryDim {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ordering" => Ok(VaryDim::Ordering),
            "removal" => Ok(VaryDim::Removal),
            "wait" => Ok(VaryDim::Wait),
            "dependency" => Ok(VaryDim::Dependency),
            "policy" => Ok(VaryDim::Policy),
            _ => Err(format!("unknown dimension {s:?} (ordering|removal|wait|dependency|policy)")),
        }
    }
}

impl VaryDim {
    /// Splits a policy into (fixed part, varied value). Baseline rows only
    /// take part when whole policies are compared.
    fn split(self, policy: &PolicyConfig) -> Option<(String, String)> {
        let PolicyConfig::Tuple(t) = policy else {
            return (self == VaryDim::Policy).then(|| (String::new(), policy.to_string()));
        };
        let wait = if t.wait { "wait" } else { "nowait" };
        let mut parts = [t.ordering.name(), t.removal.name(), wait, t.dependency.name()];
        let slot = match self {
            VaryDim::Ordering => 0,
            VaryDim::Removal => 1,
            VaryDim::Wait => 2,
            VaryDim::Dependency => 3,
            VaryDim::Policy => return Some((String::new(), policy.to_string())),
        };
        let value = parts[slot].to_string();
        parts[slot] = "*";
        Some((parts.join(","), value))
    }
}

/// One line of the box-stat CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRow {
    pub group: String,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub n_outliers: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct GroupKey {
    instance_id: String,
    m: usize,
    capacity: u64,
    fixed: String,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} m={} Q={}", self.instance_id, self.m, self.capacity)?;
        if !self.fixed.is_empty() {
            write!(f, " {}", self.fixed)?;
        }
        Ok(())
    }
}

/// Normalized latencies per variant, in policy enumeration order. Every
/// group (instance, cluster and the non-varied policy components) is divided
/// by its best variant.
pub fn normalized_values(rows: &[SweepRow], vary: VaryDim) -> Result<Vec<(String, Vec<f64>)>, HarnessError> {
    let mut groups: BTreeMap<GroupKey, BTreeMap<String, f64>> = BTreeMap::new();
    let mut variants: Vec<(PolicyConfig, String)> = Vec::new();
    for row in rows {
        let policy: PolicyConfig = row.policy.parse().map_err(|e| HarnessError::InvalidSpec(format!("{e}")))?;
        let Some((fixed, value)) = vary.split(&policy) else { continue };
        if !variants.iter().any(|(_, v)| *v == value) {
            variants.push((policy, value.clone()));
        }
        let key = GroupKey { instance_id: row.instance_id.clone(), m: row.m, capacity: row.capacity, fixed };
        groups.entry(key).or_default().insert(value, row.mean_latency);
    }
    if groups.is_empty() {
        return Err(HarnessError::Empty);
    }
    variants.sort_by_key(|v| v.0);
    let names: Vec<String> = variants.into_iter().map(|(_, v)| v).collect();
    let normalized = normalize_relative(&groups, &names)?;
    Ok(names
        .into_iter()
        .map(|name| {
            let values = normalized.values().map(|g| g[&name]).collect();
            (name, values)
        })
        .collect())
}

/// Box statistics of the normalized latencies, one row per variant.
pub fn report(rows: &[SweepRow], vary: VaryDim) -> Result<Vec<BoxRow>, HarnessError> {
    Ok(normalized_values(rows, vary)?
        .into_iter()
        .map(|(group, values)| {
            let b = box_stats(&values);
            BoxRow {
                group,
                q1: b.q1,
                median: b.median,
                q3: b.q3,
                whisker_lo: b.whisker_lo,
                whisker_hi: b.whisker_hi,
                n_outliers: b.outliers.len(),
            }
        })
        .collect())
}

/// Writes the box-stat CSV (header included) to any sink.
pub fn write_report<W: io::Write>(sink: W, rows: &[BoxRow]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(sink);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
