mod common;

use blockgibbs::analysis::{
    correlation_at, correlation_surface, detect_outlier_block, indicator_split, multiset_allocation_count, pair_correlation,
    pair_table, pair_table_marginalized, rate_lower_bound, DetectionThresholds, JointAllocationTable, SurfaceLayout,
    SurfaceSpec,
};
use blockgibbs::{BlockSet, Dataset, Error, Model};
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn table(k: usize, probs: &[f64]) -> JointAllocationTable<f64> {
    JointAllocationTable::new(k, probs.to_vec()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn held(labels: &[usize], out: &[usize]) -> Vec<Option<usize>> {
    labels.iter().enumerate().map(|(i, &l)| (!out.contains(&i)).then_some(l)).collect()
}

#[test]
fn correlation_of_reference_tables() {
    assert!(close(pair_correlation(&table(2, &[0.5, 0.0, 0.0, 0.5])).unwrap(), 1.0, 1e-15));
    let (a, b) = ([0.3, 0.7], [0.6, 0.4]);
    let product: Vec<f64> = (0..4).map(|c| a[c / 2] * b[c % 2]).collect();
    assert!(pair_correlation(&table(2, &product)).unwrap().abs() < 1e-15);
    assert!(close(pair_correlation(&table(2, &[0.4, 0.1, 0.1, 0.4])).unwrap(), 0.6, 1e-12));
    assert!(matches!(pair_correlation(&table(2, &[0.7, 0.3, 0.0, 0.0])), Err(Error::DegenerateMarginal)));
    assert!(pair_correlation(&table(3, &[1.0 / 9.0; 9])).is_err());
}

#[test]
fn tables_must_be_distributions() {
    assert!(JointAllocationTable::new(2, vec![0.5, 0.5, 0.1, 0.0]).is_err());
    assert!(JointAllocationTable::new(2, vec![1.1, -0.1, 0.0, 0.0]).is_err());
    assert!(JointAllocationTable::new(2, vec![1.0]).is_err());
}

#[test]
fn indicator_split_reference_values() {
    let t = table(2, &[0.1, 0.2, 0.3, 0.4]);
    let s = indicator_split(&t, 1).unwrap();
    assert_eq!((s.p11, s.p12, s.p21, s.p22), (0.1, 0.2, 0.3, 0.4));
    let u = indicator_split(&table(3, &[1.0 / 9.0; 9]), 1).unwrap();
    for (got, want) in [u.p11, u.p12, u.p21, u.p22].into_iter().zip([1.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 4.0 / 9.0]) {
        assert!(close(got, want, 1e-15));
    }
    assert!(indicator_split(&t, 0).is_err());
    assert!(indicator_split(&t, 2).is_err());
}

#[test]
fn rate_bound_reference_values() {
    let indep: Vec<f64> = (0..9).map(|c| [0.2, 0.5, 0.3][c / 3] * [0.1, 0.6, 0.3][c % 3]).collect();
    assert!(rate_lower_bound(&table(3, &indep)).unwrap().value < 1e-15);
    let b = rate_lower_bound(&table(2, &[0.49, 0.01, 0.01, 0.49])).unwrap();
    assert!(close(b.value, 0.9216, 1e-12));
    assert_eq!(b.k_prime, 1);
    let z = 0.995;
    let t = table(3, &[0.495 / z, 0.0, 0.0025 / z, 0.0, 0.0, 0.0, 0.0025 / z, 0.0, 0.495 / z]);
    let want = pair_correlation(&table(2, &[0.495 / z, 0.0025 / z, 0.0025 / z, 0.495 / z])).unwrap().powi(2);
    for kp in [1, 2] {
        assert!(close(indicator_split(&t, kp).unwrap().correlation().unwrap().powi(2), want, 1e-12));
    }
    assert!(close(rate_lower_bound(&t).unwrap().value, want, 1e-12));
    assert!(matches!(rate_lower_bound(&table(2, &[1.0, 0.0, 0.0, 0.0])), Err(Error::AllSplitsDegenerate)));
}

proptest! {
    #[test]
    fn splits_conserve_mass(raw in prop::collection::vec(0.0f64..1.0, 16), kp in 1usize..4) {
        let z: f64 = raw.iter().sum::<f64>() + 1e-9;
        let t = JointAllocationTable::new(4, raw.iter().map(|x| (x + 1e-9 / 16.0) / z).collect()).unwrap();
        let s = indicator_split(&t, kp).unwrap();
        prop_assert!((s.p11 + s.p12 + s.p21 + s.p22 - 1.0).abs() < 1e-12);
        prop_assert!(s.p12 >= 0.0 && s.p21 >= 0.0);
        if let Ok(b) = rate_lower_bound(&t) {
            prop_assert!((0.0..=1.0).contains(&b.value));
        }
    }

    #[test]
    fn pair_table_matches_block_enumeration(seed in 0u64..500) {
        let mut r = rng(seed);
        let k = r.random_range(2..4);
        let d = r.random_range(1..3);
        let n = r.random_range(4..9);
        let data = random_dataset(&mut r, n, d, 3.0);
        let h = hp(k, d, r.random_range(0.0..0.5), d as f64 + 0.5, 1.0, 1.0);
        let m = Model::new(data.clone(), h.clone()).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let (i, j) = (r.random_range(0..n), r.random_range(0..n));
        prop_assume!(i != j);
        let c = held(&labels, &[i, j]);
        let t = pair_table(&m, &c, i, j).unwrap();
        let lo = i.min(j);
        let hi = i.max(j);
        let oracle = oracle_block_distribution(&rows_of(&data), &c, &[lo, hi], &h);
        for l in 0..k {
            for mm in 0..k {
                let cell = if i < j { l * k + mm } else { mm * k + l };
                prop_assert!((t.get(l, mm) - oracle[cell]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn symmetric_geometry_gives_symmetric_table() {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for off in [-0.7, -0.2, 0.4, 0.9] {
        rows.push(vec![-6.0 + off]);
        labels.push(0);
        rows.push(vec![6.0 - off]);
        labels.push(1);
    }
    rows.push(vec![0.0]);
    rows.push(vec![0.0]);
    labels.extend([0, 0]);
    let m = Model::new(Dataset::new(rows).unwrap(), hp(2, 1, 0.1, 1.0, 1.0, 1.0)).unwrap();
    let t = pair_table(&m, &held(&labels, &[8, 9]), 8, 9).unwrap();
    assert!(close(t.get(0, 0), t.get(1, 1), 1e-12));
    assert!(close(t.get(0, 1), t.get(1, 0), 1e-12));
    assert_eq!(t.conditioning().pair, Some((8, 9)));
}

#[test]
fn k2_table_matches_closed_forms() {
    let mut r = rng(31);
    let d = 2;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, centre) in [(0usize, [-3.0, 0.5]), (1, [4.0, -1.0])] {
        for _ in 0..6 {
            rows.push(vec![centre[0] + r.random_range(-1.0..1.0), centre[1] + r.random_range(-1.0..1.0)]);
            labels.push(k);
        }
    }
    rows.push(vec![0.2, 0.1]);
    rows.push(vec![-0.2, -0.1]);
    labels.extend([1, 0]);
    let h = hp(2, d, 0.0, 2.5, 0.8, 2.0);
    let m = Model::new(Dataset::new(rows.clone()).unwrap(), h.clone()).unwrap();
    let t = pair_table(&m, &held(&labels, &[12, 13]), 12, 13).unwrap();
    let s0 = DMatrix::from_row_slice(d, d, h.s0.matrix().as_slice());
    let mut s_rest = Vec::new();
    let mut means = Vec::new();
    let mut counts = [0.0; 2];
    for k in 0..2 {
        let pts: Vec<DVector<f64>> = (0..12).filter(|&i| labels[i] == k).map(|i| DVector::from_column_slice(&rows[i])).collect();
        counts[k] = pts.len() as f64;
        let mean = pts.iter().fold(DVector::zeros(d), |a, p| a + p) / counts[k];
        let mut sc = s0.clone();
        for p in &pts {
            sc += (p - &mean) * (p - &mean).transpose();
        }
        s_rest.push(sc);
        means.push(mean);
    }
    let yi = DVector::from_column_slice(&rows[12]);
    let yj = DVector::from_column_slice(&rows[13]);
    let oracle = closed_form_pair([&s_rest[0], &s_rest[1]], counts, [&means[0], &means[1]], &yi, &yj, h.nu0, h.beta);
    for c in 0..4 {
        assert!(close(t.probs()[c], oracle[c], 1e-9));
    }
}

#[test]
fn k3_table_matches_conditional_enumeration() {
    let mut r = rng(32);
    let data = random_dataset(&mut r, 7, 2, 2.0);
    let h = hp(3, 2, 0.3, 2.5, 1.0, 1.0);
    let m = Model::new(data.clone(), h.clone()).unwrap();
    let labels = [0, 1, 2, 0, 1, 2, 0];
    let c = held(&labels, &[2, 5]);
    let t = pair_table(&m, &c, 5, 2).unwrap();
    let s = m.state_from_partial(&c).unwrap();
    let block = BlockSet::new(vec![2, 5]).unwrap();
    let logs: Vec<f64> = (0..9).map(|cell| m.log_block_conditional(&s, &block, &[cell / 3, cell % 3]).unwrap()).collect();
    let p = blockgibbs::scalar::normalize_log_weights(&logs);
    for l in 0..3 {
        for mm in 0..3 {
            // rows follow observation 5, the second block member
            assert!(close(t.get(l, mm), p[mm * 3 + l], 1e-9));
        }
    }
}

/// Oracle for a marginalized pair table: full-allocation densities over every block labeling.
fn oracle_marginalized(data: &Dataset<f64>, c: &[Option<usize>], block: &[usize], i: usize, j: usize, h: &blockgibbs::Hyperparameters<f64>) -> Vec<f64> {
    let k = h.k;
    let full = oracle_block_distribution(&rows_of(data), c, block, h);
    let b = block.len();
    let pi = block.iter().position(|&x| x == i).unwrap();
    let pj = block.iter().position(|&x| x == j).unwrap();
    let mut out = vec![0.0; k * k];
    for (cell, p) in full.iter().enumerate() {
        let digit = |pos: usize| (cell / k.pow((b - 1 - pos) as u32)) % k;
        out[digit(pi) * k + digit(pj)] += p;
    }
    out
}

#[test]
fn marginalizing_nothing_is_the_pair_table() {
    let mut r = rng(33);
    let data = random_dataset(&mut r, 8, 2, 3.0);
    let m = Model::new(data, hp(3, 2, 0.2, 2.5, 1.0, 1.0)).unwrap();
    let labels = [0, 1, 2, 0, 1, 2, 0, 1];
    let c = held(&labels, &[1, 6]);
    let a = pair_table(&m, &c, 1, 6).unwrap();
    let b = pair_table_marginalized(&m, &c, &BlockSet::new(vec![1, 6]).unwrap(), 1, 6, true).unwrap();
    for (x, y) in a.probs().iter().zip(b.probs()) {
        assert!(close(*x, *y, 1e-12));
    }
}

#[test]
fn multiset_path_matches_full_enumeration() {
    assert_eq!(multiset_allocation_count(2, 3), 2);
    assert_eq!(multiset_allocation_count(3, 5), 10);
    let mut r = rng(34);
    for (k, b) in [(2usize, 3usize), (3, 5), (2, 6)] {
        let mut rows: Vec<Vec<f64>> = (0..9).map(|_| vec![r.random_range(-4.0..4.0)]).collect();
        let labels: Vec<usize> = (0..9).map(|i| i % k).collect();
        let mut block = vec![9, 10];
        rows.push(vec![0.3]);
        rows.push(vec![-0.1]);
        let mut all = labels.clone();
        all.extend([0, 0]);
        for x in 0..b - 2 {
            rows.push(vec![0.05]);
            block.push(11 + x);
            all.push(0);
        }
        let data = Dataset::new(rows).unwrap();
        let h = hp(k, 1, 0.1, 1.0, 1.0, 1.0);
        let m = Model::new(data.clone(), h.clone()).unwrap();
        let c = held(&all, &block);
        let bs = BlockSet::new(block.clone()).unwrap();
        let fast = pair_table_marginalized(&m, &c, &bs, 9, 10, true).unwrap();
        let slow = pair_table_marginalized(&m, &c, &bs, 9, 10, false).unwrap();
        let oracle = oracle_marginalized(&data, &c, &block, 9, 10, &h);
        for cell in 0..k * k {
            assert!(close(fast.probs()[cell], slow.probs()[cell], 1e-10), "k={k} b={b}");
            assert!(close(slow.probs()[cell], oracle[cell], 1e-9));
        }
    }
}

#[test]
fn distinct_values_are_summed_by_brute_force() {
    let mut r = rng(35);
    let data = random_dataset(&mut r, 10, 1, 3.0);
    let h = hp(3, 1, 0.2, 1.0, 1.0, 1.0);
    let m = Model::new(data.clone(), h.clone()).unwrap();
    let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
    let block = [1, 4, 6, 8];
    let c = held(&labels, &block);
    let t = pair_table_marginalized(&m, &c, &BlockSet::new(block.to_vec()).unwrap(), 6, 1, true).unwrap();
    let oracle = oracle_marginalized(&data, &c, &block, 6, 1, &h);
    for cell in 0..9 {
        assert!(close(t.probs()[cell], oracle[cell], 1e-9));
    }
    // row sums are the marginal of C_6
    let rows = t.row_marginal();
    for l in 0..3 {
        let direct: f64 = (0..3).map(|mm| oracle[l * 3 + mm]).sum();
        assert!(close(rows[l], direct, 1e-9));
    }
    assert_eq!(t.conditioning().marginalized, vec![4, 8]);
}

#[test]
fn marginalization_errors() {
    let mut r = rng(36);
    let data = random_dataset(&mut r, 6, 1, 3.0);
    let m = Model::new(data, hp(2, 1, 0.2, 1.0, 1.0, 1.0)).unwrap();
    let c = held(&[0, 1, 0, 1, 0, 1], &[0, 1, 2]);
    let bs = BlockSet::new(vec![0, 1, 2]).unwrap();
    assert!(pair_table_marginalized(&m, &c, &bs, 0, 4, true).is_err());
    assert!(pair_table_marginalized(&m, &c, &bs, 1, 1, true).is_err());
    let partly = held(&[0, 1, 0, 1, 0, 1], &[0, 1]);
    assert!(pair_table_marginalized(&m, &partly, &bs, 0, 1, true).is_err());
}

fn one_d_hp() -> blockgibbs::Hyperparameters<f64> {
    hp(2, 1, 0.0, 1.0, 1.0, 1.0)
}

#[test]
fn equal_distance_probe_increases_towards_one() {
    let spec = SurfaceSpec::between_means_1d(23, 3000.0, 0.0, 0.0, 0);
    let cors: Vec<f64> = [10.0, 20.0, 40.0, 80.0].iter().map(|&d| correlation_at(&spec, &one_d_hp(), d, d).unwrap()).collect();
    assert!(cors.windows(2).all(|w| w[1] > w[0]), "{cors:?}");
    assert!(cors[3] > 0.99, "{cors:?}");
}

#[test]
fn fixed_near_distance_probe_decays() {
    let spec = SurfaceSpec::between_means_1d(23, 3000.0, 0.0, 0.0, 0);
    let cors: Vec<f64> = [10.0, 40.0, 160.0].iter().map(|&d| correlation_at(&spec, &one_d_hp(), 3.0, d).unwrap()).collect();
    assert!(cors.windows(2).all(|w| w[1] < w[0]), "{cors:?}");
    assert!(cors[2] < 0.05, "{cors:?}");
}

#[test]
fn equidistant_surface_peaks_at_far_corner_with_diagonal_ridge() {
    let spec = SurfaceSpec::between_means_1d(23, 80.0, 0.5, 10.0, 20);
    let s = correlation_surface(&spec, &one_d_hp()).unwrap();
    let n = 20;
    let max = s.values.iter().cloned().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(s.get(n - 1, n - 1), max);
    // along each anti-diagonal the equidistant node is highest once correlation is appreciable;
    // below about 0.05 the maximum sits slightly off the diagonal
    for d in 1..n - 1 {
        let (on, off) = (s.get(d, d), s.get(d - 1, d + 1).max(s.get(d + 1, d - 1)));
        if on > 0.05 {
            assert!(on >= off, "node {d}: {on} vs {off}");
        }
    }
    assert!(s.get(1, 1) < s.get(0, 2));
    for r in 0..n {
        for c in 0..n {
            let (a, b) = (s.get(r, c), s.get(c, r));
            assert!(a.is_nan() && b.is_nan() || close(a, b, 1e-9));
        }
    }
}

#[test]
fn fixed_separation_surface_is_symmetric_and_peaks_on_diagonal() {
    let spec = SurfaceSpec {
        layout: SurfaceLayout::FixedSeparation { separation: 24.0 },
        ..SurfaceSpec::between_means_1d(23, 80.0, 7.0, 17.0, 11)
    };
    let s = correlation_surface(&spec, &one_d_hp()).unwrap();
    for r in 0..11 {
        for c in 0..11 {
            let (a, b) = (s.get(r, c), s.get(c, r));
            assert!(a.is_nan() && b.is_nan() || close(a, b, 1e-9));
        }
    }
    let mid = s.get(5, 5);
    assert!(mid.is_finite() && mid > 0.0);
    assert!(mid >= s.get(5, 4) && mid >= s.get(4, 5));
}

#[test]
fn surface_csv_layout() {
    let spec = SurfaceSpec::between_means_1d(23, 80.0, 1.0, 2.0, 2);
    let s = correlation_surface(&spec, &one_d_hp()).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "x\\y,1,2");
    assert!(lines[1].starts_with("1,"));
    let v: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(v, s.get(1, 1));
}

#[test]
fn surface_rejects_mismatched_geometry() {
    let spec = SurfaceSpec::between_means_1d(23, 80.0, 1.0, 2.0, 2);
    assert!(correlation_surface(&spec, &hp(2, 2, 0.0, 2.0, 1.0, 1.0)).is_err());
    assert!(correlation_surface(&spec, &hp(3, 1, 0.0, 1.0, 1.0, 1.0)).is_err());
}

#[test]
fn rate_bound_json_uses_one_based_pair() {
    let mut r = rng(37);
    let data = random_dataset(&mut r, 6, 1, 3.0);
    let m = Model::new(data, hp(2, 1, 0.2, 1.0, 1.0, 1.0)).unwrap();
    let t = pair_table(&m, &held(&[0, 1, 0, 1, 0, 1], &[0, 3]), 0, 3).unwrap();
    let b = rate_lower_bound(&t).unwrap();
    let v: serde_json::Value = serde_json::from_str(&b.to_json().unwrap()).unwrap();
    assert_eq!(v["pair"], serde_json::json!([1, 4]));
    assert_eq!(v["k_prime"], 1);
    let bound = v["bound"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&bound));
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
    assert_eq!(keys.len(), 3);
}

/// Three congruent clusters in the plane; extra points appended after the clustered ones.
fn planar(extra: &[[f64; 2]]) -> (Model<f64>, Vec<usize>) {
    let mut r = rng(38);
    let offsets: Vec<[f64; 2]> = (0..20).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
    let centres = [[0.0, 0.0], [10.0, 0.0], [5.0, 8.66]];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, c) in centres.iter().enumerate() {
        for o in &offsets {
            // mirror the first two clusters so the midpoint between them is balanced
            let dx = if k == 1 { -o[0] } else { o[0] };
            rows.push(vec![c[0] + dx, c[1] + o[1]]);
            labels.push(k);
        }
    }
    for e in extra {
        rows.push(e.to_vec());
        labels.push(0);
    }
    (Model::new(Dataset::new(rows).unwrap(), hp(3, 2, 0.0, 3.0, 1.0, 1.0)).unwrap(), labels)
}

#[test]
fn clean_clusters_have_no_outlier_block() {
    let (m, labels) = planar(&[]);
    let s = m.state_from_labels(&labels).unwrap();
    assert_eq!(detect_outlier_block(&m, &s, &DetectionThresholds::default()).unwrap(), None);
}

#[test]
fn single_outlier_is_a_singleton_block() {
    let (m, labels) = planar(&[[5.0, 0.0]]);
    let s = m.state_from_labels(&labels).unwrap();
    let b = detect_outlier_block(&m, &s, &DetectionThresholds::default()).unwrap().unwrap();
    assert_eq!(b.indices(), &[60]);
}

#[test]
fn planted_outliers_form_the_block() {
    let (m, labels) = planar(&[[5.0, 0.0], [5.0, 0.0], [5.0, 0.0]]);
    let s = m.state_from_labels(&labels).unwrap();
    let b = detect_outlier_block(&m, &s, &DetectionThresholds::default()).unwrap().unwrap();
    assert_eq!(b.indices(), &[60, 61, 62]);
    let capped = DetectionThresholds { max_block_size: Some(2), ..DetectionThresholds::default() };
    assert_eq!(detect_outlier_block(&m, &s, &capped).unwrap().unwrap().len(), 2);
}
