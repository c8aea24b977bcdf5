use lvglasso::simgen::{
    build_precision, edge_probability, generate_graph, generate_model, sample_data, EDGE_VALUE,
    LATENT_MAX, MAX_DEGREE,
};
use lvglasso::SymMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn degrees(p: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut d = vec![0; p];
    for &(i, j) in edges {
        d[i] += 1;
        d[j] += 1;
    }
    d
}

/// Straightforward re-implementation of the degree-capped geometric sweep.
fn reference_edge_count(p: usize, rng: &mut impl Rng) -> usize {
    let pts: Vec<[f64; 2]> = (0..p).map(|_| [rng.random(), rng.random()]).collect();
    let mut deg = vec![0; p];
    let mut count = 0;
    for i in 0..p {
        for j in i + 1..p {
            if deg[i] == 4 || deg[j] == 4 {
                continue;
            }
            let dx = pts[i][0] - pts[j][0];
            let dy = pts[i][1] - pts[j][1];
            let z = (dx * dx + dy * dy).sqrt() * (p as f64).sqrt();
            let prob = 2.0 * (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            if rng.random::<f64>() < prob {
                deg[i] += 1;
                deg[j] += 1;
                count += 1;
            }
        }
    }
    count
}

#[test]
fn edge_count_matches_reference_sweep() {
    let p = 198;
    let seeds = 100;
    let ours: f64 = (0..seeds)
        .map(|s| generate_graph(p, s).unwrap().1.len() as f64)
        .sum::<f64>()
        / seeds as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    let reference: f64 = (0..seeds)
        .map(|_| reference_edge_count(p, &mut rng) as f64)
        .sum::<f64>()
        / seeds as f64;
    assert!(
        (ours - reference).abs() <= 0.25 * reference,
        "mean edges {ours} vs reference {reference}"
    );
}

#[test]
fn coincident_points_edge_probability() {
    assert!((edge_probability(0.0, 2) - 0.79788).abs() < 1e-5);
    assert!(edge_probability(0.3, 50) < edge_probability(0.1, 50));
}

#[test]
fn generated_structure_matches_edges() {
    for seed in 0..20 {
        let m = generate_model(40, 2, seed).unwrap();
        let k = &m.k_true;
        let mut from_matrix = Vec::new();
        for i in 0..40 {
            for j in i + 1..40 {
                let v = k[(i, j)];
                if v != 0.0 {
                    assert_eq!(v, EDGE_VALUE);
                    from_matrix.push((i, j));
                }
            }
        }
        assert_eq!(from_matrix, m.true_edges);
        for latent in 40..42 {
            for obs in 0..40 {
                let v = k[(latent, obs)];
                assert!(v > 0.0 && v < LATENT_MAX);
            }
        }
        assert_eq!(k[(40, 41)], 0.0);
        assert_eq!(m.locations.len(), 40);
        assert!(m
            .locations
            .iter()
            .all(|&(x, y)| (0.0..1.0).contains(&x) && (0.0..1.0).contains(&y)));
    }
}

#[test]
fn paper_scale_model_needs_one_inflation() {
    // At p = 198, h = 2 the unit-diagonal matrix is never positive definite:
    // each latent row has squared norm near 198 · 0.0048 ≈ 0.95.
    for seed in 0..100 {
        let m = generate_model(198, 2, seed).unwrap();
        assert!(m.k_true.is_positive_definite());
        assert!(degrees(198, &m.true_edges).iter().all(|&d| d <= MAX_DEGREE));
        let mut unit = m.k_true.as_matrix().clone();
        unit.fill_diagonal(1.0);
        let unit = SymMatrix::new(unit).unwrap();
        assert_eq!(m.diag_value > 1.0, !unit.is_positive_definite());
        assert_eq!(m.diag_value, 1.5, "seed {seed}");
    }
}

#[test]
fn identity_sample_covariance() {
    let m = build_precision(&[], 5, 0, 0).unwrap();
    let d = sample_data(&m, 100_000, 1).unwrap();
    assert!(d.sigma_o_n.max_abs_diff(&SymMatrix::identity(5)) < 0.05);
    assert_eq!(d.x.nrows(), 100_000);
    assert_eq!(d.n, 100_000);
}

#[test]
fn observed_marginal_covariance() {
    let m = generate_model(4, 1, 9).unwrap();
    let d = sample_data(&m, 1_000_000, 2).unwrap();
    let marginal = m.k_true.inverse().unwrap().principal(&[0, 1, 2, 3]);
    assert!(d.sigma_o_n.max_abs_diff(&marginal) <= 0.02);
}

#[test]
fn regeneration_is_bit_identical() {
    for seed in [0, 17, u64::MAX] {
        let a = generate_model(25, 2, seed).unwrap();
        let b = generate_model(25, 2, seed).unwrap();
        assert_eq!(a, b);
        let da = sample_data(&a, 30, seed ^ 5).unwrap();
        let db = sample_data(&b, 30, seed ^ 5).unwrap();
        let bits = |x: &DMatrix<f64>| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&da.x), bits(&db.x));
    }
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

    #[test]
    fn degree_cap_holds(seed in proptest::prelude::any::<u64>(), p in 2usize..80) {
        let (_, edges) = generate_graph(p, seed).unwrap();
        proptest::prop_assert!(degrees(p, &edges).iter().all(|&d| d <= MAX_DEGREE));
        proptest::prop_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        proptest::prop_assert!(edges.iter().all(|&(i, j)| i < j && j < p));
    }
}
