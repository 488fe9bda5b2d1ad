mod common;

use fcgan_core::autodiff::Tensor;
use fcgan_core::data::{ColumnSpec, Dataset, Encoder, TableSchema, LOAD_CURRENT, STACK_VOLTAGE};
use fcgan_core::metrics::*;
use fcgan_core::networks::{build_critic, critic_score, CriticConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn schema(names: &[&str]) -> TableSchema {
    TableSchema::new(names.iter().map(|n| ColumnSpec::continuous(n, "", -1e9, 1e9)).collect()).unwrap()
}

fn table(names: &[&str], rows: &[Vec<f64>]) -> Dataset {
    Dataset::new(schema(names), rows.concat(), vec![], rows.len()).unwrap()
}

fn feature_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}

fn random_table(d: usize, n: usize, rng: &mut ChaCha8Rng, round: bool) -> Dataset {
    let names = feature_names(d);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mix: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            (0..d)
                .map(|j| {
                    let v: f64 = (0..d).map(|k| mix[j * d + k] * z[k]).sum();
                    if round {
                        (v * 4.0).round() / 4.0
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    table(&refs, &rows)
}

/// Small table with a polarization-style current/voltage pair.
fn bench_like(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let i: f64 = rng.random_range(0.0..20.0);
            let t = 60.0 + rng.random_range(-1.0..1.0);
            let v = 30.0 - 0.4 * i + 0.05 * (t - 60.0) + rng.random_range(-0.1..0.1);
            vec![t, i, v]
        })
        .collect();
    table(&["T", LOAD_CURRENT, STACK_VOLTAGE], &rows)
}

fn shuffled(ds: &Dataset, seed: u64) -> Dataset {
    let mut idx: Vec<usize> = (0..ds.n_rows()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ds.select_rows(&idx)
}

#[test]
fn ks_matches_brute_force_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let d = rng.random_range(1..=6);
        let real = random_table(d, rng.random_range(1..=100), &mut rng, case % 2 == 0);
        let gen = random_table(d, rng.random_range(1..=100), &mut rng, case % 2 == 0);
        let r = ks_score(&real, &gen).unwrap();
        let mut worst: f64 = 1.0;
        for (j, (_, dstat)) in r.per_feature.iter().enumerate() {
            let oracle = common::brute_force_ks(&real.continuous_column(j), &gen.continuous_column(j));
            assert_eq!(*dstat, oracle, "case {case} feature {j}");
            worst = worst.min(1.0 - oracle);
        }
        assert_eq!(r.score, worst);
    }
}

#[test]
fn ks_examples() {
    let r = ks_score(&table(&["x"], &[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]), &table(&["x"], &[vec![1.0], vec![2.0], vec![3.0], vec![5.0]]))
        .unwrap();
    assert_eq!(r.per_feature[0].1, 0.25);
    assert_eq!(r.score, 0.75);
    let disjoint = ks_score(&table(&["a", "b"], &[vec![0.0, 7.0]]), &table(&["a", "b"], &[vec![1.0, 7.0]])).unwrap();
    assert_eq!(disjoint.score, 0.0);
    let empty = Dataset::new(schema(&["x"]), vec![], vec![], 0).unwrap();
    assert_eq!(ks_score(&empty, &table(&["x"], &[vec![1.0]])).unwrap_err(), MetricsError::Empty);
}

#[test]
fn kendall_matches_brute_force_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..200 {
        let d = rng.random_range(3..=6);
        let real = random_table(d, 40, &mut rng, case % 2 == 0);
        let gen = random_table(d, 40, &mut rng, case % 2 == 0);
        let r = kendall_score(&real, &gen).unwrap();
        let oracle = common::brute_force_tau_b(&r.real.upper_triangle(), &r.gen.upper_triangle());
        assert_eq!(r.tau, oracle, "case {case}");
        assert_eq!(r.score, (oracle + 1.0) / 2.0);
    }
}

#[test]
fn kendall_tie_handling_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..500 {
        let n = rng.random_range(2..=15);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..4))).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..4))).collect();
        let oracle = common::brute_force_tau_b(&x, &y);
        match kendall_tau_b(&x, &y) {
            Some(t) => assert_eq!(t.tau, oracle),
            None => assert!(oracle.is_nan()),
        }
    }
}

#[test]
fn kendall_hand_built_matrices() {
    // three features give three correlation entries; swapping one adjacent
    // pair leaves 2 concordant and 1 discordant pairs
    let real = [0.9, 0.5, 0.1];
    let gen = [0.5, 0.9, 0.1];
    let t = kendall_tau_b(&real, &gen).unwrap();
    assert_eq!(t.tau, common::brute_force_tau_b(&real, &gen));
    assert!((t.tau - 1.0 / 3.0).abs() < 1e-15);
    assert!(((t.tau + 1.0) / 2.0 - 2.0 / 3.0).abs() < 1e-15);
    let reversed = kendall_tau_b(&real, &[0.1, 0.5, 0.9]).unwrap();
    assert_eq!((reversed.tau + 1.0) / 2.0, 0.0);
}

#[test]
fn kendall_rejects_constant_column() {
    let real = table(&["a", "b", "c"], &[vec![1.0, 2.0, 0.0], vec![2.0, 1.0, 0.0], vec![3.0, 5.0, 0.0]]);
    assert_eq!(kendall_score(&real, &real).unwrap_err(), MetricsError::ConstantColumn("c".into()));
}

#[test]
fn dim_red_rotated_covariance_is_one_half() {
    let real = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
    // rotating diag(4, 1) by 90 degrees swaps the axes
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let gen = &rot * &real * rot.transpose();
    let r = dim_red_from_covariances(&real, &gen).unwrap();
    assert!((r.score - 0.5).abs() < 1e-9, "{}", r.score);
    assert_eq!(r.components, 2);
    assert_eq!(r.weights, vec![0.8, 0.2]);
}

#[test]
fn dim_red_opposite_correlation_is_one_half() {
    // standardized covariances [[1, ρ], [ρ, 1]] and [[1, −ρ], [−ρ, 1]] have
    // swapped principal axes
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let pair = |rho: f64, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..20_000)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                vec![a, rho * a + (1.0 - rho * rho).sqrt() * b]
            })
            .collect()
    };
    let real = table(&["x", "y"], &pair(0.6, &mut rng));
    let gen = table(&["x", "y"], &pair(-0.6, &mut rng));
    let r = dim_red_score(&real, &gen).unwrap();
    assert!((r.score - 0.5).abs() < 0.02, "{}", r.score);
}

#[test]
fn dim_red_unchanged_by_reflection_along_an_eigenvector() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let real = random_table(4, 500, &mut rng, false);
    let names = feature_names(4);
    let cols: Vec<Vec<f64>> = (0..4).map(|j| real.continuous_column(j)).collect();
    let n = real.n_rows() as f64;
    let mean: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let std: Vec<f64> = cols.iter().zip(&mean).map(|(c, m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()).collect();
    let z = DMatrix::from_fn(real.n_rows(), 4, |i, j| (cols[j][i] - mean[j]) / std[j]);
    let cov = z.transpose() * &z / (n - 1.0);
    let pca = Pca::fit(&cov);
    for k in 0..4 {
        // reflecting through the plane orthogonal to axis k flips that
        // eigenvector and leaves the covariance unchanged
        let v = nalgebra::DVector::from_vec(pca.axes[k].clone());
        let reflect = DMatrix::identity(4, 4) - 2.0 * &v * v.transpose();
        let zr = &z * reflect;
        let rows: Vec<Vec<f64>> = (0..real.n_rows()).map(|i| (0..4).map(|j| zr[(i, j)] * std[j] + mean[j]).collect()).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let gen = table(&refs, &rows);
        let r = dim_red_score(&real, &gen).unwrap();
        assert!((r.score - 1.0).abs() < 1e-9, "axis {k}: {}", r.score);
    }
}

#[test]
fn dim_red_degenerate_inputs() {
    let few = table(&["a", "b"], &[vec![1.0, 2.0], vec![2.0, 1.0]]);
    assert!(matches!(dim_red_score(&few, &few), Err(MetricsError::DegenerateCovariance(_))));
    let flat = table(&["a", "b"], &[vec![1.0, 2.0], vec![2.0, 2.0], vec![3.0, 2.0]]);
    assert!(matches!(dim_red_score(&flat, &flat), Err(MetricsError::DegenerateCovariance(_))));
}

#[test]
fn perfect_scores_on_identical_data() {
    let ds = bench_like(400, 1);
    let ev = evaluate(&ds, &ds).unwrap();
    assert_eq!(ev.report.s_ks, 1.0);
    assert!((ev.report.s_dim - 1.0).abs() < 1e-12);
    assert_eq!(ev.report.s_kendall, 1.0);
    assert_eq!(ev.report.e_v, Some(0.0));
    assert_eq!(ev.report.e_i, Some(0.0));
    ev.report.check_ranges().unwrap();
}

#[test]
fn row_order_does_not_matter() {
    let real = bench_like(300, 2);
    let gen = bench_like(250, 3);
    let a = evaluate(&real, &gen).unwrap().report;
    let b = evaluate(&shuffled(&real, 4), &shuffled(&gen, 5)).unwrap().report;
    assert_eq!(a.s_ks, b.s_ks);
    assert!((a.s_dim - b.s_dim).abs() < 1e-12);
    assert_eq!(a.s_kendall, b.s_kendall);
    assert!((a.e_v.unwrap() - b.e_v.unwrap()).abs() < 1e-12);
    assert!((a.e_i.unwrap() - b.e_i.unwrap()).abs() < 1e-12);
}

#[test]
fn polarization_examples_on_datasets() {
    let names = [LOAD_CURRENT, STACK_VOLTAGE];
    let r = polarization_error(&table(&names, &[vec![0.5, 30.0]]), &table(&names, &[vec![0.5, 29.7]])).unwrap();
    assert!((r.e_v - 1.0).abs() < 1e-12);
    let real = table(&names, &[vec![0.2, 10.0], vec![1.7, 20.0]]);
    let gen = table(&names, &[vec![0.2, 10.0], vec![1.7, 19.6]]);
    let r = polarization_error(&real, &gen).unwrap();
    assert!((r.e_v - 1.0).abs() < 1e-12);
    assert_eq!(r.bins_used, 2);
}

#[test]
fn correlation_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let rows: Vec<Vec<f64>> = (0..2000)
        .map(|_| {
            let x: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            vec![x, -x, x + 1e-3 * e]
        })
        .collect();
    let ds = table(&["x", "neg", "noisy"], &rows);
    let c = correlation_matrix(&ds, &["x".into(), "neg".into(), "noisy".into()]).unwrap();
    assert_eq!(c.get(0, 0), 1.0);
    assert!((c.get(0, 1) + 1.0).abs() < 1e-12);
    assert!(c.get(0, 2) >= 0.999);
    assert_eq!(c.get(1, 2), c.get(2, 1));
    let mut buf = Vec::new();
    c.write_csv_to(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("feature,x,neg,noisy"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn proximity_matches_manual_neighbourhoods() {
    let real = bench_like(120, 6);
    let gen = bench_like(30, 7);
    let enc = Encoder::fit(&real).unwrap();
    let (re, ge) = (enc.encode(&real).unwrap(), enc.encode(&gen).unwrap());
    let crit = build_critic(&CriticConfig::new(enc.width()), 8).unwrap();
    let r = proximity_scores(&crit, &enc, &ge, &re, &["T", LOAD_CURRENT], 5).unwrap();
    let sr = critic_score(&crit, &re).unwrap();
    let sg = critic_score(&crit, &ge).unwrap();
    for i in 0..ge.rows() {
        // oracle: full sort of every real row by distance
        let mut d: Vec<(f64, usize)> = (0..re.rows())
            .map(|j| ((re.get(j, 0) - ge.get(i, 0)).powi(2) + (re.get(j, 1) - ge.get(i, 1)).powi(2), j))
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let nn: Vec<f64> = d[..5].iter().map(|&(_, j)| sr[j]).collect();
        let lo = nn.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = nn.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.scores[i], Some((sg[i] - lo) / (hi - lo)));
    }
    assert_eq!(r.summary.rows, 30);
    assert!(matches!(
        proximity_scores(&crit, &enc, &ge, &re, &["T"], 121),
        Err(MetricsError::Shape(_))
    ));
    assert!(matches!(
        proximity_scores(&crit, &enc, &ge, &re, &["nope"], 5),
        Err(MetricsError::MissingColumn(_))
    ));
}

#[test]
fn proximity_hand_scores() {
    assert_eq!(proximity_score(6.0, &[0.0, 1.0, 2.0, 3.0, 4.0]), Some(1.5));
    assert_eq!(proximity_score(0.0, &[0.0, 1.0, 2.0, 3.0, 4.0]), Some(0.0));
    assert_eq!(proximity_score(4.0, &[0.0, 1.0, 2.0, 3.0, 4.0]), Some(1.0));
}

#[test]
fn triangle_masses_and_levels() {
    let real = bench_like(500, 9);
    let gen = bench_like(400, 10);
    let feats: Vec<String> = ["T", LOAD_CURRENT, STACK_VOLTAGE].iter().map(|s| s.to_string()).collect();
    let t = triangle_export(&real, &gen, &feats, 12).unwrap();
    assert_eq!(t.diagonal.len(), 3);
    assert_eq!(t.pairs.len(), 3);
    for h in &t.diagonal {
        assert!((h.real.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((h.gen.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    for p in &t.pairs {
        assert!(p.real_levels[1] <= p.real_levels[0]);
        assert!(p.gen_levels[1] <= p.gen_levels[0]);
    }
    let dir = tempfile::tempdir().unwrap();
    t.write_csv(dir.path()).unwrap();
    let one_d = std::fs::read_to_string(dir.path().join("triangle_1d.csv")).unwrap();
    assert_eq!(one_d.lines().count(), 1 + 3 * 12);
    let two_d = std::fs::read_to_string(dir.path().join("triangle_2d.csv")).unwrap();
    assert_eq!(two_d.lines().count(), 1 + 3 * 144);
    let levels = std::fs::read_to_string(dir.path().join("triangle_levels.csv")).unwrap();
    assert_eq!(levels.lines().count(), 1 + 3 * 4);
}

#[test]
fn uniform_68_percent_contour_holds_68_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (x, y): (Vec<f64>, Vec<f64>) = (0..100_000).map(|_| (rng.random::<f64>(), rng.random::<f64>())).unzip();
    let edges = shared_edges(&x, &x, 20);
    let cells = histogram_2d(&x, &y, &edges, &edges);
    let t = mass_threshold(&cells, 0.68);
    let enclosed: f64 = cells.iter().filter(|&&c| c >= t).sum();
    assert!((enclosed - 0.68).abs() < 0.02, "{enclosed}");
}

#[test]
fn report_round_trips_through_json() {
    let real = bench_like(200, 18);
    let gen = bench_like(200, 19);
    let mut ev = evaluate(&real, &gen).unwrap();
    let enc = Encoder::fit(&real).unwrap();
    let crit = build_critic(&CriticConfig::new(enc.width()), 1).unwrap();
    let p = proximity_scores(&crit, &enc, &enc.encode(&gen).unwrap(), &enc.encode(&real).unwrap(), &["T"], 20).unwrap();
    ev.attach_proximity(p);
    let json = ev.report.to_json();
    let back: MetricsReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, ev.report);
    assert!(back.proximity.is_some());
    ev.report.check_ranges().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scores_stay_in_range(seed in 0u64..10_000, shift in -3.0f64..3.0, scale in 0.2f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let real = random_table(4, 60, &mut rng, false);
        let base = random_table(4, 60, &mut rng, false);
        let rows: Vec<Vec<f64>> = (0..base.n_rows()).map(|i| base.continuous_row(i).iter().map(|v| v * scale + shift).collect()).collect();
        let names = feature_names(4);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let gen = table(&refs, &rows);
        let ks = ks_score(&real, &gen).unwrap().score;
        let dim = dim_red_score(&real, &gen).unwrap().score;
        let ken = kendall_score(&real, &gen).unwrap().score;
        for s in [ks, dim, ken] {
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}

#[test]
fn encoded_tensor_shapes_are_checked() {
    let real = bench_like(50, 20);
    let enc = Encoder::fit(&real).unwrap();
    let crit = build_critic(&CriticConfig::new(enc.width()), 1).unwrap();
    let bad = Tensor::zeros(&[3, enc.width() + 1]);
    assert!(matches!(
        proximity_scores(&crit, &enc, &bad, &enc.encode(&real).unwrap(), &["T"], 3),
        Err(MetricsError::Shape(_))
    ));
}
