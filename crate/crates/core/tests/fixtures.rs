//! The shipped instance files pin the generator's output; a dependency bump
//! that changes the random stream shows up here first.

use std::fs;
use std::path::PathBuf;

use num_rational::Ratio;

use faas_sched::engine::simulate;
use faas_sched::harness::dag_seed;
use faas_sched::metrics::{mean_latency, validate_schedule};
use faas_sched::model::{ClusterConfig, PolicyConfig};
use faas_sched::workload::{dagify_instance, generate_chain_instance, instance_to_string, read_instance, GenParams, Range};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn params() -> GenParams {
    GenParams::new(50, Range::new(10, 20), Range::new(10, 20), 7)
}

#[test]
fn generator_reproduces_shipped_files() {
    let chain = generate_chain_instance(&params()).unwrap();
    let path = fixture("chain_nf50_s10-20_l10-20_seed7.json");
    assert_eq!(instance_to_string(&chain), fs::read_to_string(&path).unwrap());

    let dag = dagify_instance(&chain, dag_seed(7)).unwrap();
    let path = fixture("dag_nf50_s10-20_l10-20_seed7.json");
    assert_eq!(instance_to_string(&dag), fs::read_to_string(&path).unwrap());
}

#[test]
fn pinned_latencies() {
    let c = ClusterConfig::new(20, 10);
    let ef: PolicyConfig = "EF,LRU,wait,start".parse().unwrap();
    let cases = [
        ("chain_nf50_s10-20_l10-20_seed7.json", PolicyConfig::OpenWhisk, 34506),
        ("chain_nf50_s10-20_l10-20_seed7.json", ef, 19501),
        ("dag_nf50_s10-20_l10-20_seed7.json", PolicyConfig::OpenWhisk, 38389),
        ("dag_nf50_s10-20_l10-20_seed7.json", ef, 15472),
    ];
    for (name, policy, total) in cases {
        let inst = read_instance(&fixture(name)).unwrap();
        let r = simulate(&inst, c, policy, 0).unwrap();
        assert!(validate_schedule(&inst, c, &r).is_empty());
        assert_eq!(mean_latency(&r), Ratio::new(total, 69), "{name} {policy}");
    }
}
