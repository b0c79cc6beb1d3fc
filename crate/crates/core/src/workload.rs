//! Synthetic instance generation (chains and out-trees) and instance files.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    validate_instance, FamilyId, FamilySpec, Instance, InstanceViolation, JobSpec, TaskSpec,
};

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("task {task} breaks the chain structure")]
    NotAChain { task: u64 },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{}: invalid instance: {}", path.display(), violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Validation { path: PathBuf, violations: Vec<InstanceViolation> },
}

/// Inclusive integer range `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Range {
    pub min: u64,
    pub max: u64,
}

impl Range {
    pub const fn new(min: u64, max: u64) -> Self {
        Range { min, max }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(self.min..=self.max)
    }
}

impl std::fmt::Display for Range {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.min, self.max)
    }
}

impl std::str::FromStr for Range {
    type Err = String;

    /// Parses `MIN:MAX`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected MIN:MAX, got {s:?}"))?;
        let parse = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("{x:?}: {e}"));
        let r = Range::new(parse(a)?, parse(b)?);
        if r.min > r.max {
            return Err(format!("{s:?}: min exceeds max"));
        }
        Ok(r)
    }
}

/// Parameters of the chain generator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenParams {
    /// Total number of tasks.
    pub tasks: u64,
    pub families: u32,
    pub setup: Range,
    pub chain: Range,
    pub duration: Range,
    pub size: Range,
    pub seed: u64,
}

impl GenParams {
    /// 1000 tasks with durations and sizes in `[1, 10]`.
    pub fn new(families: u32, setup: Range, chain: Range, seed: u64) -> Self {
        GenParams {
            tasks: 1000,
            families,
            setup,
            chain,
            duration: Range::new(1, 10),
            size: Range::new(1, 10),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidParams(m.to_string()));
        if self.tasks == 0 {
            return bad("task count must be >= 1");
        }
        if self.families == 0 {
            return bad("family count must be >= 1");
        }
        if self.chain.min == 0 || self.chain.min > self.chain.max || self.chain.max > self.tasks {
            return bad("chain range must satisfy 1 <= min <= max <= tasks");
        }
        if self.setup.min > self.setup.max {
            return bad("setup range min exceeds max");
        }
        if self.duration.min == 0 || self.duration.min > self.duration.max {
            return bad("duration range must satisfy 1 <= min <= max");
        }
        if self.size.min == 0 || self.size.min > self.size.max {
            return bad("size range must satisfy 1 <= min <= max");
        }
        Ok(())
    }

    /// File-name stem, e.g. `chain_nf50_s10-20_l10-20_seed7`.
    pub fn tag(&self, kind: &str) -> String {
        format!("{kind}_nf{}_s{}_l{}_seed{}", self.families, self.setup, self.chain, self.seed)
    }
}

/// Draws families, assigns each task a uniform family, then cuts a uniformly
/// shuffled task pool into chains of length `U[chain.min, chain.max]` (the
/// last one takes whatever remains).
pub fn generate_chain_instance(params: &GenParams) -> Result<Instance, WorkloadError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let families: Vec<FamilySpec> = (1..=params.families)
        .map(|id| {
            let setup = params.setup.draw(&mut rng);
            let duration = params.duration.draw(&mut rng);
            let size = params.size.draw(&mut rng);
            FamilySpec { id, duration, size, setup }
        })
        .collect();
    let task_family: Vec<FamilyId> =
        (0..params.tasks).map(|_| rng.gen_range(1..=params.families)).collect();

    let mut pool: Vec<usize> = (0..params.tasks as usize).collect();
    pool.shuffle(&mut rng);

    let mut jobs = Vec::new();
    let mut next_id = 1;
    let mut rest = &pool[..];
    while !rest.is_empty() {
        let len = (params.chain.draw(&mut rng) as usize).min(rest.len());
        let (members, tail) = rest.split_at(len);
        rest = tail;
        let tasks = members
            .iter()
            .enumerate()
            .map(|(k, &orig)| {
                let id = next_id + k as u64;
                TaskSpec { id, family: task_family[orig], preds: if k > 0 { vec![id - 1] } else { vec![] } }
            })
            .collect();
        next_id += len as u64;
        jobs.push(JobSpec { id: jobs.len() as u64 + 1, tasks });
    }

    Ok(Instance {
        meta: serde_json::json!({
            "id": params.tag("chain"),
            "kind": "chain",
            "params": params,
        }),
        families,
        jobs,
    })
}

/// Turns every chain into an out-tree: each task after the first gets a
/// parent drawn uniformly from the tasks before it in the same job.
pub fn dagify_instance(instance: &Instance, seed: u64) -> Result<Instance, WorkloadError> {
    for job in &instance.jobs {
        for (k, task) in job.tasks.iter().enumerate() {
            let chained = match k {
                0 => task.preds.is_empty(),
                _ => task.preds == [job.tasks[k - 1].id],
            };
            if !chained {
                return Err(WorkloadError::NotAChain { task: task.id });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = instance.clone();
    for job in &mut out.jobs {
        let ids: Vec<u64> = job.tasks.iter().map(|t| t.id).collect();
        for (k, task) in job.tasks.iter_mut().enumerate().skip(1) {
            task.preds = vec![ids[rng.gen_range(0..k)]];
        }
    }
    if let Some(meta) = out.meta.as_object_mut() {
        if let Some(id) = meta.get("id").and_then(|v| v.as_str()) {
            let id = id.strip_prefix("chain_").map_or_else(|| format!("dag_{id}"), |rest| format!("dag_{rest}"));
            meta.insert("id".into(), id.into());
        }
        meta.insert("kind".into(), "out-tree".into());
        meta.insert("dag_seed".into(), seed.into());
    }
    Ok(out)
}

/// Canonical text of an instance file.
pub fn instance_to_string(instance: &Instance) -> String {
    let mut s = serde_json::to_string_pretty(instance).expect("instance serializes");
    s.push('\n');
    s
}

pub fn write_instance(instance: &Instance, path: &Path) -> Result<(), WorkloadError> {
    fs::write(path, instance_to_string(instance))
        .map_err(|source| WorkloadError::Io { path: path.to_path_buf(), source })
}

pub fn parse_instance(text: &str, path: &Path) -> Result<Instance, WorkloadError> {
    let instance: Instance = serde_json::from_str(text).map_err(|e| WorkloadError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let violations = validate_instance(&instance);
    if !violations.is_empty() {
        return Err(WorkloadError::Validation { path: path.to_path_buf(), violations });
    }
    Ok(instance)
}

/// Reads and validates an instance file.
pub fn read_instance(path: &Path) -> Result<Instance, WorkloadError> {
    let text = fs::read_to_string(path).map_err(|source| WorkloadError::Io { path: path.to_path_buf(), source })?;
    parse_instance(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(tasks: u64, families: u32, chain: Range, seed: u64) -> GenParams {
        GenParams { tasks, ..GenParams::new(families, Range::new(10, 20), chain, seed) }
    }

    #[test]
    fn one_full_length_job() {
        let inst = generate_chain_instance(&params(5, 3, Range::new(5, 5), 1)).unwrap();
        assert_eq!(inst.job_count(), 1);
        assert_eq!(inst.task_count(), 5);
        assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn job_lengths_partition_tasks() {
        for seed in 0..50 {
            let p = params(1000, 50, Range::new(10, 20), seed);
            let inst = generate_chain_instance(&p).unwrap();
            assert_eq!(inst.task_count(), 1000);
            let (last, rest) = inst.jobs.split_last().unwrap();
            assert!(rest.iter().all(|j| (10..=20).contains(&j.tasks.len())));
            assert!((1..=20).contains(&last.tasks.len()));
            for f in &inst.families {
                assert!((10..=20).contains(&f.setup));
                assert!((1..=10).contains(&f.duration));
                assert!((1..=10).contains(&f.size));
            }
        }
    }

    #[test]
    fn families_are_used_roughly_uniformly() {
        // 1000 tasks over 10 families: expected 100 each. Chi-square with 9
        // degrees of freedom; 27.88 is the 0.999 quantile.
        let mut failures = 0;
        for seed in 0..100 {
            let inst = generate_chain_instance(&params(1000, 10, Range::new(2, 10), seed)).unwrap();
            let mut counts = [0f64; 10];
            for (_, _, t) in inst.tasks() {
                assert!((1..=10).contains(&t.family));
                counts[t.family as usize - 1] += 1.0;
            }
            assert!(counts.iter().all(|&c| c > 0.0));
            let chi2: f64 = counts.iter().map(|c| (c - 100.0).powi(2) / 100.0).sum();
            if chi2 > 27.88 {
                failures += 1;
            }
        }
        assert!(failures <= 2, "{failures} seeds failed the uniformity test");
    }

    #[test]
    fn generation_is_deterministic() {
        let p = params(300, 20, Range::new(2, 10), 9);
        assert_eq!(generate_chain_instance(&p).unwrap(), generate_chain_instance(&p).unwrap());
        let q = GenParams { seed: 10, ..p.clone() };
        assert_ne!(generate_chain_instance(&p).unwrap(), generate_chain_instance(&q).unwrap());
    }

    #[test]
    fn invalid_params() {
        for p in [
            params(10, 0, Range::new(1, 2), 0),
            params(10, 2, Range::new(0, 2), 0),
            params(10, 2, Range::new(3, 2), 0),
            params(10, 2, Range::new(2, 11), 0),
            GenParams { setup: Range::new(5, 4), ..params(10, 2, Range::new(1, 2), 0) },
        ] {
            assert!(matches!(generate_chain_instance(&p), Err(WorkloadError::InvalidParams(_))));
        }
    }

    #[test]
    fn dagify_small_jobs() {
        let one = generate_chain_instance(&params(1, 1, Range::new(1, 1), 0)).unwrap();
        assert_eq!(dagify_instance(&one, 3).unwrap().jobs, one.jobs);

        let two = generate_chain_instance(&params(2, 1, Range::new(2, 2), 0)).unwrap();
        let d = dagify_instance(&two, 3).unwrap();
        assert_eq!(d.jobs[0].tasks[1].preds, vec![d.jobs[0].tasks[0].id]);

        let three = generate_chain_instance(&params(3, 1, Range::new(3, 3), 0)).unwrap();
        let ids: Vec<u64> = three.jobs[0].tasks.iter().map(|t| t.id).collect();
        let mut parents = std::collections::BTreeSet::new();
        for seed in 0..64 {
            let d = dagify_instance(&three, seed).unwrap();
            assert_eq!(d.jobs[0].tasks[1].preds, vec![ids[0]]);
            let p = d.jobs[0].tasks[2].preds[0];
            assert!(p == ids[0] || p == ids[1]);
            parents.insert(p);
        }
        assert_eq!(parents.len(), 2);
    }

    #[test]
    fn dagify_rejects_non_chains() {
        let inst = generate_chain_instance(&params(30, 3, Range::new(5, 5), 0)).unwrap();
        let tree = dagify_instance(&inst, 1).unwrap();
        let broken = tree.jobs.iter().flat_map(|j| &j.tasks).any(|t| t.preds.len() == 1 && t.preds[0] != t.id - 1);
        assert!(broken, "some parent should be rewired");
        assert!(matches!(dagify_instance(&tree, 2), Err(WorkloadError::NotAChain { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        let inst = generate_chain_instance(&params(40, 4, Range::new(2, 10), 5)).unwrap();
        write_instance(&inst, &path).unwrap();
        let back = read_instance(&path).unwrap();
        assert_eq!(back, inst);
        assert_eq!(instance_to_string(&back), fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn read_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(
            &path,
            r#"{"families":[{"id":1,"duration":1,"size":1,"setup":0}],
                "jobs":[{"id":1,"tasks":[{"id":1,"family":2,"preds":[]}]}]}"#,
        )
        .unwrap();
        assert!(matches!(read_instance(&path), Err(WorkloadError::Validation { .. })));

        fs::write(&path, "{\n\"families\": [}\n").unwrap();
        match read_instance(&path) {
            Err(WorkloadError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(read_instance(&dir.path().join("missing.json")), Err(WorkloadError::Io { .. })));
    }
}
