use std::collections::HashSet;

use adaivf::index::{read_snapshot, write_snapshot};
use adaivf::maintenance::{AdaIvfParams, Maintainer, MaintenancePolicy, PolicyKind};
use adaivf::vector::squared_l2;
use adaivf::workload::{generate, load_trace, save_trace, GaussianMixture, InitialSize, Operation, Trace, WorkloadSpec};
use adaivf::{IndexConfig, IvfIndex, VectorDataset, VectorId};
use proptest::prelude::*;

fn small_trace() -> Trace {
    let (data, _) = GaussianMixture {
        n: 6_000,
        dim: 8,
        clusters: 12,
        seed: 3,
        ..Default::default()
    }
    .generate()
    .unwrap();
    let spec = WorkloadSpec {
        s0: InitialSize::Count(2_000),
        su: 200,
        r_id: 1.0,
        csf_u: 0.5,
        r_rw: 0.5,
        total_ops: 20,
        k: 5,
        seed: 17,
        ..Default::default()
    };
    generate(&data, None, &spec).unwrap().trace
}

fn initial_dataset(trace: &Trace) -> VectorDataset<f32> {
    let dim = trace.dim();
    let mut ds = VectorDataset::new(dim);
    for (id, v) in trace.initial_ids.iter().zip(trace.initial_vectors.chunks_exact(dim)) {
        ds.push(*id, v).unwrap();
    }
    ds
}

fn params() -> AdaIvfParams {
    AdaIvfParams {
        tau_s: 100,
        min_size: 50,
        max_size: 200,
        r_c: 4,
        ..Default::default()
    }
}

#[test]
fn every_policy_replays_a_trace_consistently() {
    let trace = small_trace();
    trace.validate().unwrap();
    let dim = trace.dim();
    let kinds = [
        PolicyKind::Frozen,
        PolicyKind::UpdateCentroids,
        PolicyKind::PeriodicRebuild { rebuild_fraction: 0.025 },
        PolicyKind::DeDrift { k1: 2, epoch_batches: 1 },
        PolicyKind::Lire,
        PolicyKind::AdaIvf,
    ];
    for kind in kinds {
        let policy = MaintenancePolicy::new(kind, params());
        let name = policy.name();
        let mut index = IvfIndex::build(
            &initial_dataset(&trace),
            IndexConfig {
                n_c: 20,
                delta_capacity: 150,
                ..Default::default()
            },
        )
        .unwrap();
        let mut maintainer = Maintainer::new(policy.clone()).unwrap();
        maintainer.attach(&mut index);
        let mut live: HashSet<VectorId> = trace.initial_ids.iter().copied().collect();
        for (i, op) in trace.ops.iter().enumerate() {
            match op {
                Operation::Insert { ids, vectors } => {
                    let r = index.insert(ids, vectors).unwrap();
                    live.extend(ids);
                    maintainer.on_update(&mut index, &r).unwrap();
                }
                Operation::Delete { ids } => {
                    let r = index.delete(ids).unwrap();
                    for id in ids {
                        live.remove(id);
                    }
                    maintainer.on_update(&mut index, &r).unwrap();
                }
                Operation::Search { queries, k } => {
                    for q in queries.chunks_exact(dim) {
                        let r = index.search(q, *k, 4).unwrap();
                        assert!(r.hits.len() <= *k);
                        assert!(r.hits.windows(2).all(|w| w[0].1 <= w[1].1), "{name}: unsorted hits");
                        assert!(r.hits.iter().all(|h| live.contains(&h.0)), "{name}: dead id returned");
                        if policy.uses_temperature() {
                            index.update_temperatures(&r.probed, policy.params.temperature()).unwrap();
                        }
                    }
                }
            }
            index.audit().unwrap_or_else(|e| panic!("{name} op {i}: {e}"));
            assert_eq!(index.len(), live.len(), "{name} op {i}");
        }
    }
}

#[test]
fn snapshot_round_trip_keeps_answers() {
    let trace = small_trace();
    let dim = trace.dim();
    let mut index = IvfIndex::build(
        &initial_dataset(&trace),
        IndexConfig {
            n_c: 20,
            delta_capacity: 500,
            ..Default::default()
        },
    )
    .unwrap();
    let mut queries = Vec::new();
    for op in &trace.ops {
        match op {
            Operation::Insert { ids, vectors } => {
                index.insert(ids, vectors).unwrap();
            }
            Operation::Delete { ids } => {
                index.delete(ids).unwrap();
            }
            Operation::Search { queries: q, .. } => queries.extend_from_slice(q),
        }
    }
    assert!(!index.delta().is_empty());
    let mut bytes = Vec::new();
    write_snapshot(&index, &mut bytes).unwrap();
    let restored: IvfIndex<f32> = read_snapshot(bytes.as_slice()).unwrap();
    restored.audit().unwrap();
    assert_eq!(restored.len(), index.len());
    for q in queries.chunks_exact(dim) {
        assert_eq!(index.search(q, 5, 3).unwrap().hits, restored.search(q, 5, 3).unwrap().hits);
    }
}

#[test]
fn trace_file_round_trip() {
    let trace = small_trace();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    save_trace(&trace, &path).unwrap();
    assert_eq!(load_trace(&path).unwrap(), trace);
}

fn brute_force(live: &[(VectorId, Vec<f64>)], q: &[f64], k: usize) -> Vec<f64> {
    let mut d: Vec<f64> = live.iter().map(|(_, v)| squared_l2(q, v)).collect();
    d.sort_by(f64::total_cmp);
    d.truncate(k);
    d
}

#[derive(Debug, Clone)]
enum Step {
    Insert(Vec<Vec<f64>>),
    Delete(Vec<usize>),
    Flush,
}

fn step() -> impl Strategy<Value = Step> {
    let row = prop::collection::vec(-50.0f64..50.0, 4);
    prop_oneof![
        3 => prop::collection::vec(row, 1..12).prop_map(Step::Insert),
        2 => prop::collection::vec(any::<usize>(), 1..8).prop_map(Step::Delete),
        1 => Just(Step::Flush),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn probing_everything_matches_brute_force(
        base in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 20..60),
        steps in prop::collection::vec(step(), 1..25),
        q in prop::collection::vec(-50.0f64..50.0, 4),
        cap in 0usize..20,
    ) {
        let ds = VectorDataset::from_rows(&base).unwrap();
        let mut index = IvfIndex::build(&ds, IndexConfig { n_c: 5, delta_capacity: cap, ..Default::default() }).unwrap();
        let mut live: Vec<(VectorId, Vec<f64>)> = ds.iter().map(|(id, v)| (id, v.to_vec())).collect();
        let mut next = base.len() as u64;
        for s in steps {
            match s {
                Step::Insert(rows) => {
                    let ids: Vec<VectorId> = (0..rows.len() as u64).map(|i| VectorId(next + i)).collect();
                    next += rows.len() as u64;
                    index.insert(&ids, &rows.concat()).unwrap();
                    live.extend(ids.into_iter().zip(rows));
                }
                Step::Delete(picks) => {
                    let mut ids = Vec::new();
                    for p in picks {
                        if live.len() > 1 {
                            ids.push(live.swap_remove(p % live.len()).0);
                        }
                    }
                    if !ids.is_empty() {
                        index.delete(&ids).unwrap();
                    }
                }
                Step::Flush => {
                    index.flush_delta();
                }
            }
            prop_assert!(index.audit().is_ok());
            prop_assert_eq!(index.len(), live.len());
        }
        let k = 5;
        let all = index.partition_count().max(1);
        let got: Vec<f64> = index.search(&q, k, all).unwrap().hits.iter().map(|h| h.1).collect();
        let want = brute_force(&live, &q, k);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0));
        }
    }
}
