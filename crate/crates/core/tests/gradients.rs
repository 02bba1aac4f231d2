mod gradcheck;
mod oracles;

use gradcheck::{LAYER_TOL, MODEL_TOL};

#[test]
fn temporal_gated_conv() {
    let err = gradcheck::temporal_gated_conv();
    assert!(err <= LAYER_TOL, "{err}");
}

#[test]
fn chebyshev_graph_conv() {
    let err = gradcheck::chebyshev_graph_conv();
    assert!(err <= LAYER_TOL, "{err}");
}

#[test]
fn huber_loss_both_branches() {
    let err = gradcheck::huber_loss_both_branches();
    assert!(err <= LAYER_TOL, "{err}");
}

#[test]
fn diffusion_graph_conv() {
    let err = gradcheck::diffusion_graph_conv();
    assert!(err <= LAYER_TOL, "{err}");
}

#[test]
fn tcn_layer() {
    let err = gradcheck::tcn_layer();
    assert!(err <= LAYER_TOL, "{err}");
}

#[test]
fn cross_attention() {
    let err = gradcheck::cross_attention();
    assert!(err <= LAYER_TOL, "{err}");
}

#[test]
fn zinb_negative_log_likelihood() {
    let err = gradcheck::zinb_negative_log_likelihood();
    assert!(err <= LAYER_TOL, "{err}");
}

#[test]
fn stgcn_end_to_end() {
    let err = gradcheck::stgcn_end_to_end();
    assert!(err <= MODEL_TOL, "{err}");
}

#[test]
fn stzinb_end_to_end_with_attention() {
    let err = gradcheck::stzinb_end_to_end_with_attention();
    assert!(err <= MODEL_TOL, "{err}");
}
