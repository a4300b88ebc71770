use super::*;
use crate::vector::DistanceMetric;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dataset(n: usize, dim: usize, seed: u64) -> VectorDataset<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    VectorDataset::from_flat(dim, data).unwrap()
}

fn config(n_c: usize) -> IndexConfig {
    IndexConfig {
        n_c,
        seed: 7,
        ..Default::default()
    }
}

/// Independent top-k: sort every live vector by (distance, id).
fn brute_force(index: &IvfIndex<f32>, q: &[f32], k: usize) -> Vec<(VectorId, f32)> {
    let mut all: Vec<(VectorId, f32)> = index
        .live_vectors()
        .into_iter()
        .map(|(id, v)| (id, index.config().metric.eval(q, v)))
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

#[test]
fn singleton_partitions_have_zero_error() {
    let ds = VectorDataset::from_rows(&[vec![0.0f32, 0.0], vec![5.0, 0.0], vec![0.0, 5.0]]).unwrap();
    let index = IvfIndex::build(&ds, config(3)).unwrap();
    assert_eq!(index.partition_count(), 3);
    assert_eq!(index.stats().eps0, 0.0);
    assert_eq!(index.stats().n0, 3);
}

#[test]
fn build_respects_capacity_and_count() {
    let ds = random_dataset(10_000, 8, 1);
    let index = IvfIndex::build(&ds, config(10)).unwrap();
    assert_eq!(index.partitioned_len(), 10_000);
    let cap = (1000.0f64 * 1.25).ceil() as usize;
    assert!(index.partition_sizes().iter().all(|&s| s <= cap));
    index.audit().unwrap();
}

#[test]
fn build_rejects_too_many_partitions() {
    let ds = random_dataset(5, 2, 1);
    assert!(matches!(
        IvfIndex::build(&ds, config(6)),
        Err(Error::InvalidK { k: 6, n: 5 })
    ));
}

#[test]
fn rebuild_is_deterministic() {
    let ds = random_dataset(2000, 4, 3);
    let a = IvfIndex::build(&ds, config(8)).unwrap();
    let b = IvfIndex::build(&ds, config(8)).unwrap();
    assert_eq!(a.centroids().0, b.centroids().0);
}

#[test]
fn full_probe_matches_brute_force() {
    let ds = random_dataset(3000, 6, 4);
    let index = IvfIndex::build(&ds, config(20)).unwrap();
    let queries = random_dataset(30, 6, 5);
    for (_, q) in queries.iter() {
        let got = index.search(q, 10, index.partition_count()).unwrap();
        assert_eq!(got.hits, brute_force(&index, q, 10));
        assert_eq!(got.probed.len(), 20);
    }
}

#[test]
fn self_query_returns_zero_distance() {
    let ds = random_dataset(500, 4, 6);
    let index = IvfIndex::build(&ds, config(5)).unwrap();
    let v = ds.row(42);
    let got = index.search(v, 1, 5).unwrap();
    assert_eq!(got.hits, vec![(VectorId(42), 0.0)]);
}

#[test]
fn search_argument_errors() {
    let ds = random_dataset(100, 2, 6);
    let index = IvfIndex::build(&ds, config(4)).unwrap();
    assert!(matches!(index.search(&[0.0, 0.0], 0, 1), Err(Error::InvalidK { .. })));
    assert!(matches!(index.search(&[0.0, 0.0], 1, 0), Err(Error::InvalidProbe(0))));
    let empty: IvfIndex<f32> = IvfIndex::empty(2, config(1));
    assert!(matches!(empty.search(&[0.0, 0.0], 1, 1), Err(Error::EmptyIndex)));
}

#[test]
fn delta_only_index_is_searchable() {
    let mut index: IvfIndex<f32> = IvfIndex::empty(
        2,
        IndexConfig {
            delta_capacity: 4,
            ..config(1)
        },
    );
    index.insert(&[VectorId(9)], &[3.0, 4.0]).unwrap();
    assert_eq!(index.partition_count(), 0);
    let got = index.search(&[0.0, 0.0], 5, 1).unwrap();
    assert_eq!(got.hits, vec![(VectorId(9), 25.0)]);
    assert!(got.probed.is_empty());
}

#[test]
fn insert_routes_to_nearest_centroid() {
    let ds = VectorDataset::from_rows(&[
        vec![0.0f32, 0.0],
        vec![0.2, 0.0],
        vec![10.0, 0.0],
        vec![10.2, 0.0],
        vec![0.0, 10.0],
        vec![0.2, 10.0],
    ])
    .unwrap();
    let mut index = IvfIndex::build(&ds, config(3)).unwrap();
    let target = index.partition_of(VectorId(2)).unwrap();
    let before = index.partition(target).unwrap().len();
    let report = index.insert(&[VectorId(100)], &[10.1, 0.1]).unwrap();
    assert_eq!(report.modified, vec![(target, 1)]);
    assert_eq!(index.partition(target).unwrap().len(), before + 1);
    assert_eq!(index.partition_of(VectorId(100)), Some(target));
    index.audit().unwrap();
}

#[test]
fn batch_insert_conserves_count() {
    let ds = random_dataset(1000, 4, 8);
    let mut index = IvfIndex::build(&ds, config(10)).unwrap();
    let extra = random_dataset(100, 4, 9);
    let ids: Vec<VectorId> = (1000..1100).map(VectorId).collect();
    let report = index.insert(&ids, extra.as_flat()).unwrap();
    assert_eq!(report.inserted, 100);
    assert_eq!(index.len(), 1100);
    assert_eq!(index.partitioned_len(), 1100);
    index.audit().unwrap();
}

#[test]
fn duplicate_insert_is_rejected_atomically() {
    let ds = random_dataset(50, 2, 8);
    let mut index = IvfIndex::build(&ds, config(2)).unwrap();
    let err = index.insert(&[VectorId(500), VectorId(3)], &[0.0, 0.0, 1.0, 1.0]);
    assert!(matches!(err, Err(Error::DuplicateId(VectorId(3)))));
    assert!(!index.contains(VectorId(500)));
    let err = index.insert(&[VectorId(501), VectorId(501)], &[0.0, 0.0, 1.0, 1.0]);
    assert!(matches!(err, Err(Error::DuplicateId(VectorId(501)))));
    assert_eq!(index.len(), 50);
}

#[test]
fn delta_capacity_flushes_on_overflow() {
    let ds = random_dataset(200, 2, 10);
    let mut index = IvfIndex::build(
        &ds,
        IndexConfig {
            delta_capacity: 10,
            ..config(4)
        },
    )
    .unwrap();
    let mut flushes = 0;
    for i in 0..11u64 {
        let r = index.insert(&[VectorId(1000 + i)], &[0.5, 0.5]).unwrap();
        if r.flushed > 0 {
            flushes += 1;
        }
    }
    assert_eq!(flushes, 1);
    assert_eq!(index.delta().len(), 1);
    assert_eq!(index.len(), 211);
    index.audit().unwrap();
}

#[test]
fn oversized_batch_bypasses_delta() {
    let ds = random_dataset(200, 2, 10);
    let mut index = IvfIndex::build(
        &ds,
        IndexConfig {
            delta_capacity: 3,
            ..config(4)
        },
    )
    .unwrap();
    index.insert(&[VectorId(900)], &[0.1, 0.1]).unwrap();
    let ids: Vec<VectorId> = (1000..1005).map(VectorId).collect();
    let r = index.insert(&ids, &[0.0; 10]).unwrap();
    assert_eq!(r.flushed, 1);
    assert_eq!(r.buffered, 0);
    assert!(index.delta().is_empty());
    index.audit().unwrap();
}

#[test]
fn deleted_id_disappears_from_results() {
    let ds = random_dataset(400, 3, 11);
    let mut index = IvfIndex::build(&ds, config(4)).unwrap();
    let q = ds.row(17).to_vec();
    index.delete(&[VectorId(17)]).unwrap();
    let got = index.search(&q, 400, 4).unwrap();
    assert!(got.hits.iter().all(|h| h.0 != VectorId(17)));
    assert_eq!(got.hits.len(), 399);
}

#[test]
fn deleting_whole_partition_removes_it() {
    let ds = random_dataset(400, 3, 12);
    let mut index = IvfIndex::build(&ds, config(4)).unwrap();
    let pid = index.partition_ids()[1];
    let members = index.partition(pid).unwrap().ids().to_vec();
    let report = index.delete(&members).unwrap();
    assert_eq!(report.removed, vec![pid]);
    assert_eq!(index.partition_count(), 3);
    assert_eq!(index.centroids().1.len(), 3);
    index.audit().unwrap();
}

#[test]
fn delete_from_delta_touches_no_partition() {
    let ds = random_dataset(100, 2, 13);
    let mut index = IvfIndex::build(
        &ds,
        IndexConfig {
            delta_capacity: 5,
            ..config(2)
        },
    )
    .unwrap();
    index.insert(&[VectorId(500), VectorId(501)], &[0.0; 4]).unwrap();
    let sizes = index.partition_sizes();
    let r = index.delete(&[VectorId(500)]).unwrap();
    assert_eq!(r.deleted_from_delta, 1);
    assert!(r.modified.is_empty());
    assert_eq!(index.delta().len(), 1);
    assert_eq!(index.partition_sizes(), sizes);
    index.audit().unwrap();
}

#[test]
fn unknown_delete_is_rejected_atomically() {
    let ds = random_dataset(100, 2, 14);
    let mut index = IvfIndex::build(&ds, config(2)).unwrap();
    assert!(matches!(
        index.delete(&[VectorId(1), VectorId(999)]),
        Err(Error::NotFound(VectorId(999)))
    ));
    assert!(index.contains(VectorId(1)));
}

#[test]
fn flush_preserves_results() {
    let ds = random_dataset(800, 4, 15);
    let mut index = IvfIndex::build(
        &ds,
        IndexConfig {
            delta_capacity: 50,
            ..config(8)
        },
    )
    .unwrap();
    assert_eq!(index.flush_delta(), UpdateReport::default());
    let extra = random_dataset(5, 4, 16);
    let ids: Vec<VectorId> = (2000..2005).map(VectorId).collect();
    index.insert(&ids, extra.as_flat()).unwrap();
    let queries = random_dataset(20, 4, 17);
    let before: Vec<_> = queries
        .iter()
        .map(|(_, q)| index.search(q, 10, 8).unwrap().hits)
        .collect();
    let partitioned = index.partitioned_len();
    let r = index.flush_delta();
    assert_eq!(r.flushed, 5);
    assert_eq!(index.partitioned_len(), partitioned + 5);
    assert!(index.delta().is_empty());
    for ((_, q), b) in queries.iter().zip(before) {
        assert_eq!(index.search(q, 10, 8).unwrap().hits, b);
    }
}

#[test]
fn frozen_tracking_keeps_centroids() {
    let ds = random_dataset(500, 3, 18);
    let mut index = IvfIndex::build(&ds, config(5)).unwrap();
    index.set_centroid_tracking(false);
    let before = index.centroids().0.to_vec();
    let extra = random_dataset(50, 3, 19);
    let ids: Vec<VectorId> = (600..650).map(VectorId).collect();
    index.insert(&ids, extra.as_flat()).unwrap();
    index.delete(&[VectorId(0), VectorId(1)]).unwrap();
    assert_eq!(index.centroids().0, &before[..]);
    index.audit().unwrap();
}

#[test]
fn reconstruction_error_hand_example() {
    let ds = VectorDataset::from_rows(&[vec![0.0f64], vec![2.0]]).unwrap();
    let index = IvfIndex::build(&ds, config(1)).unwrap();
    assert_eq!(index.compute_reconstruction_error().unwrap(), 1.0);
    assert_eq!(index.stats().eps0, 1.0);
}

#[test]
fn reconstruction_error_matches_full_pass() {
    let ds = random_dataset(2000, 5, 20);
    let mut index = IvfIndex::build(&ds, config(16)).unwrap();
    let extra = random_dataset(300, 5, 21);
    let ids: Vec<VectorId> = (5000..5300).map(VectorId).collect();
    index.insert(&ids, extra.as_flat()).unwrap();
    let mut total = 0.0f64;
    let mut n = 0usize;
    for p in index.partitions() {
        for (_, v) in p.iter() {
            total += v
                .iter()
                .zip(p.centroid())
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>();
            n += 1;
        }
    }
    let oracle = total / n as f64;
    let got = index.compute_reconstruction_error().unwrap();
    assert!((got - oracle).abs() <= 1e-6 * oracle);
    assert!(matches!(
        IvfIndex::<f32>::empty(5, config(1)).compute_reconstruction_error(),
        Err(Error::EmptyIndex)
    ));
}

#[test]
fn rebuild_resets_baselines_and_absorbs_delta() {
    let ds = random_dataset(1000, 4, 22);
    let mut index = IvfIndex::build(
        &ds,
        IndexConfig {
            delta_capacity: 100,
            ..config(10)
        },
    )
    .unwrap();
    let extra = random_dataset(40, 4, 23);
    let ids: Vec<VectorId> = (3000..3040).map(VectorId).collect();
    index.insert(&ids, extra.as_flat()).unwrap();
    index.rebuild(13).unwrap();
    assert!(index.delta().is_empty());
    assert_eq!(index.partition_count(), 13);
    let s = index.stats();
    assert_eq!(s.n0, 1040);
    assert_eq!(s.sigma, s.sigma0);
    assert_eq!(s.eps, s.eps0);
    assert_eq!(index.build_count(), 2);
    index.audit().unwrap();
}

#[test]
fn snapshot_round_trip_is_bit_exact() {
    let ds = random_dataset(600, 3, 24);
    let mut index = IvfIndex::build(
        &ds,
        IndexConfig {
            delta_capacity: 20,
            metric: DistanceMetric::InnerProduct,
            ..config(6)
        },
    )
    .unwrap();
    index.insert(&[VectorId(9000)], &[0.3, 0.2, 0.1]).unwrap();
    let probed = index.search(&[0.1, 0.1, 0.1], 3, 2).unwrap().probed;
    index.update_temperatures(&probed, TemperatureParams::default()).unwrap();
    let mut bytes = Vec::new();
    write_snapshot(&index, &mut bytes).unwrap();
    let back: IvfIndex<f32> = read_snapshot(&bytes[..]).unwrap();
    let mut again = Vec::new();
    write_snapshot(&back, &mut again).unwrap();
    assert_eq!(bytes, again);
    assert_eq!(back.len(), index.len());
    back.audit().unwrap();
    assert!(matches!(read_snapshot::<f64, _>(&bytes[..]), Err(Error::Format(_))));
    assert!(read_snapshot::<f32, _>(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn temperatures_stay_above_floor() {
    let ds = random_dataset(1000, 4, 25);
    let mut index = IvfIndex::build(&ds, config(10)).unwrap();
    let queries = random_dataset(200, 4, 26);
    for (_, q) in queries.iter() {
        let probed = index.search(q, 5, 3).unwrap().probed;
        let before: Vec<f64> = index.partitions().map(|p| p.meta().temperature).collect();
        index.update_temperatures(&probed, TemperatureParams::default()).unwrap();
        for (p, b) in index.partitions().zip(before) {
            let t = p.meta().temperature;
            assert!(t >= 1.0);
            if probed.iter().any(|x| x.0 == p.id()) {
                assert!(t > b);
            } else {
                assert!(t <= b);
            }
        }
    }
}

#[test]
fn batch_cooling_applies_once_per_batch() {
    let ds = random_dataset(1000, 4, 27);
    let mut index = IvfIndex::build(&ds, config(10)).unwrap();
    let params = TemperatureParams { eta: 0.5, nu: 0.1 };
    let everything = index.search(&[0.0; 4], 1, 10).unwrap().probed;
    for _ in 0..20 {
        index.update_temperatures(&everything, params).unwrap();
    }
    let probe = index.search(&[0.9, 0.9, 0.9, 0.9], 1, 1).unwrap().probed;
    let hot = probe[0].0;
    let batch = vec![probe.clone(), probe.clone(), probe];
    let before: HashMap<PartitionId, f64> =
        index.partitions().map(|p| (p.id(), p.meta().temperature)).collect();

    let mut per_batch = index.clone();
    per_batch.update_temperatures_batch(&batch, params, false).unwrap();
    let mut per_query = index.clone();
    per_query.update_temperatures_batch(&batch, params, true).unwrap();
    for p in per_batch.partitions() {
        let b = before[&p.id()];
        let q = per_query.partition(p.id()).unwrap().meta().temperature;
        if p.id() == hot {
            assert!((p.meta().temperature - b * 1.5f64.powi(3)).abs() < 1e-9 * b);
            assert_eq!(p.meta().temperature, q);
        } else {
            assert!((p.meta().temperature - (b * 0.9).max(1.0)).abs() < 1e-12);
            assert!((q - (b * 0.9f64.powi(3)).max(1.0)).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_operations_keep_index_consistent(seed in 0u64..1000, cap in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = random_dataset(120, 3, seed);
        let mut index = IvfIndex::build(&ds, IndexConfig { delta_capacity: cap, ..config(6) }).unwrap();
        let mut live: Vec<VectorId> = ds.ids().to_vec();
        let mut next = 10_000u64;
        for _ in 0..40 {
            if rng.random_bool(0.5) || live.len() < 10 {
                let m = rng.random_range(1..6);
                let ids: Vec<VectorId> = (0..m).map(|i| VectorId(next + i)).collect();
                next += m;
                let data: Vec<f32> = (0..m * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
                index.insert(&ids, &data).unwrap();
                live.extend(ids);
            } else {
                let m = rng.random_range(1..6usize);
                let mut ids = Vec::new();
                for _ in 0..m {
                    let i = rng.random_range(0..live.len());
                    ids.push(live.swap_remove(i));
                }
                index.delete(&ids).unwrap();
            }
            prop_assert_eq!(index.len(), live.len());
            prop_assert!(index.audit().is_ok(), "{:?}", index.audit());
        }
        let q = [0.1f32, -0.2, 0.3];
        let full = index.search(&q, 7, index.partition_count().max(1)).unwrap();
        prop_assert_eq!(full.hits, brute_force(&index, &q, 7));
    }

    #[test]
    fn recall_is_monotone_in_probes(seed in 0u64..200) {
        let ds = random_dataset(600, 4, seed);
        let index = IvfIndex::build(&ds, config(12)).unwrap();
        let q = random_dataset(1, 4, seed + 7);
        let truth: HashSet<VectorId> = brute_force(&index, q.row(0), 10).into_iter().map(|h| h.0).collect();
        let mut last = 0;
        for n_p in 1..=12 {
            let got = index.search(q.row(0), 10, n_p).unwrap();
            let hit = got.hits.iter().filter(|h| truth.contains(&h.0)).count();
            prop_assert!(hit >= last);
            last = hit;
        }
        prop_assert_eq!(last, 10);
    }
}
