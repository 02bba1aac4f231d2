mod oracles;
mod support;

use hetgraph::graph::{build_graph, CorrelationGroup, GraphParams};
use hetgraph::nn::{chebyshev_polys, scaled_laplacian, transition_matrix};
use proptest::prelude::*;
use support::*;

fn instance() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<Vec<f64>>, f64, f64)> {
    (2usize..=8).prop_flat_map(|n| {
        (
            prop::collection::vec((41.7f64..42.0, -87.9f64..-87.5), n),
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 11), n),
            2.0f64..25.0,
            0.0f64..1.0,
        )
    })
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("t{i}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_oracle_and_invariants((pts, feats, sigma, eps) in instance()) {
        let n = pts.len();
        let tracts: Vec<_> = pts.iter().enumerate().map(|(i, (la, lo))| tract(&format!("t{i}"), *la, *lo)).collect();
        let table = feature_table(&ids(n), &feats);
        let params = GraphParams { sigma, epsilon: eps, ..Default::default() };
        let g = build_graph(&tracts, &table, &params).unwrap();

        let a_d = oracles::distance_kernel(&pts, sigma, eps);
        let a_h = oracles::homophily(&feats, &layout_groups(), &a_d);
        prop_assert!(max_abs_diff(&g.distance_adjacency, &a_d) <= 1e-12);
        prop_assert!(max_abs_diff(&g.adjacency, &a_h) <= 1e-12);

        for i in 0..n {
            prop_assert_eq!(g.distance_adjacency[[i, i]], 0.0);
            prop_assert_eq!(g.adjacency[[i, i]], 0.0);
            for j in 0..n {
                let (d, h) = (g.distance_adjacency[[i, j]], g.adjacency[[i, j]]);
                prop_assert_eq!(d, g.distance_adjacency[[j, i]]);
                prop_assert!((h - g.adjacency[[j, i]]).abs() <= 1e-15);
                prop_assert!(0.0 <= h && h <= d + 1e-15);
                prop_assert!(d == 0.0 || d >= eps);
            }
        }
    }

    #[test]
    fn row_normalized_rows_sum_to_one((pts, feats, sigma, _eps) in instance()) {
        let n = pts.len();
        let tracts: Vec<_> = pts.iter().enumerate().map(|(i, (la, lo))| tract(&format!("t{i}"), *la, *lo)).collect();
        let params = GraphParams { sigma, epsilon: 0.0, row_normalize: true, ..Default::default() };
        let g = build_graph(&tracts, &feature_table(&ids(n), &feats), &params).unwrap();
        for row in g.adjacency.rows() {
            let s = row.sum();
            prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn threshold_boundary_at_default_sigma() {
    // exp(-1) = 0.368 survives at d = 10 km; exp(-1.21) = 0.298 does not at d = 11 km.
    let tracts = vec![
        tract("a", 41.8, -87.6),
        tract("b", 41.8 + lat_deg(10.0), -87.6),
        tract("c", 41.8 - lat_deg(11.0), -87.6),
    ];
    let feats: Vec<Vec<f64>> = (0..3).map(|i| (0..11).map(|j| ((i + 2) * (j + 1) % 7) as f64).collect()).collect();
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let g = build_graph(&tracts, &feature_table(&names, &feats), &GraphParams::default()).unwrap();
    assert!((g.distance_adjacency[[0, 1]] - (-1.0f64).exp()).abs() < 1e-9);
    assert_eq!(g.distance_adjacency[[0, 2]], 0.0);
    // b and c are 21 km apart.
    assert_eq!(g.distance_adjacency[[1, 2]], 0.0);
}

#[test]
fn group_subset_matches_oracle() {
    let pts = vec![(41.80, -87.60), (41.85, -87.62), (41.83, -87.70), (41.90, -87.65), (41.78, -87.66)];
    let feats: Vec<Vec<f64>> = (0..5).map(|i| (0..11).map(|j| ((i * 7 + j * 3) % 11) as f64 + 0.1 * (i * j) as f64).collect()).collect();
    let tracts: Vec<_> = pts.iter().enumerate().map(|(i, (la, lo))| tract(&format!("t{i}"), *la, *lo)).collect();
    let params = GraphParams { groups: vec![CorrelationGroup::Land], ..Default::default() };
    let g = build_graph(&tracts, &feature_table(&ids(5), &feats), &params).unwrap();
    let a_d = oracles::distance_kernel(&pts, 10.0, 0.3);
    let a_h = oracles::homophily(&feats, &[layout_groups()[1].clone()], &a_d);
    assert!(max_abs_diff(&g.adjacency, &a_h) <= 1e-12);
}

#[test]
fn chebyshev_terms_match_power_basis() {
    let a = from_rows(&[
        vec![0.0, 0.7, 0.0, 0.2],
        vec![0.7, 0.0, 0.5, 0.0],
        vec![0.0, 0.5, 0.0, 0.9],
        vec![0.2, 0.0, 0.9, 0.0],
    ]);
    let l = scaled_laplacian(&a).unwrap();
    let polys = chebyshev_polys(&l, 5);
    for (k, t) in polys.iter().enumerate() {
        let oracle = oracles::chebyshev_by_powers(&to_rows(&l), k);
        assert!(max_abs_diff(t, &oracle) < 1e-12, "T_{k}");
    }
    // Eigenvalues of the scaled Laplacian lie in [-1, 1].
    let ev = hetgraph::nn::largest_eigenvalue(&l);
    assert!(ev <= 1.0 + 1e-12);
}

#[test]
fn transition_powers_match_k_hop_diffusion() {
    let a = from_rows(&[vec![0.0, 1.0, 0.5], vec![1.0, 0.0, 0.0], vec![0.5, 0.0, 0.0]]);
    let w = transition_matrix(&a).unwrap();
    let wr = to_rows(&w);
    assert!(max_abs_diff(&w, &oracles::transition(&to_rows(&a))) < 1e-15);
    let x = [1.0, -2.0, 0.5];
    let mut power = ndarray::Array2::<f64>::eye(3);
    for k in 0..5 {
        let got = power.dot(&ndarray::arr1(&x));
        let want = oracles::k_hop(&wr, &x, k);
        for i in 0..3 {
            assert!((got[i] - want[i]).abs() < 1e-12);
        }
        power = power.dot(&w);
    }
}
