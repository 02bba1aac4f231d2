use hetgraph_demo::{graph_view, huber_view, zinb_view};

#[test]
fn graph_view_is_symmetric_and_sparser_with_larger_epsilon() {
    let loose = graph_view(16, 3, 10.0, 0.1).unwrap();
    let tight = graph_view(16, 3, 10.0, 0.8).unwrap();
    assert_eq!(loose.tract_ids.len(), 16);
    for m in [&loose.distance, &loose.homophily] {
        for i in 0..16 {
            assert_eq!(m[i][i], 0.0);
            for j in 0..16 {
                assert!((m[i][j] - m[j][i]).abs() < 1e-12);
            }
        }
    }
    assert!(tight.nonzero_distance < loose.nonzero_distance);
    assert!(loose.nonzero_homophily <= loose.nonzero_distance);
}

#[test]
fn zinb_view_mass_and_moments() {
    let v = zinb_view(3.0, 0.6, 0.3, 400).unwrap();
    let total: f64 = v.pmf.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    let mean: f64 = v.pmf.iter().enumerate().map(|(y, p)| y as f64 * p).sum();
    assert!((mean - 0.7 * 3.0 * 0.6 / 0.4).abs() < 1e-9);
    assert!((v.mean - mean).abs() < 1e-9);
    assert!(v.q10 <= v.q90);
    assert!(zinb_view(3.0, 1.2, 0.3, 10).is_err());
}

#[test]
fn huber_view_switches_to_linear_past_delta() {
    let c = huber_view(2.0, 6.0, 7);
    assert_eq!(c.r, vec![-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0]);
    assert_eq!(c.huber, vec![10.0, 6.0, 2.0, 0.0, 2.0, 6.0, 10.0]);
    assert_eq!(c.squared[0], 18.0);
}
