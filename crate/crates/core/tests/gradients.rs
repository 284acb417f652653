use ctxspot_core::model::gradcheck::{check_model_gradients, check_point_gradients};

#[test]
fn full_model_matches_central_differences() {
    let r = check_model_gradients(&[2, 3, 4, 5]).unwrap();
    println!("worst relative error {:.3e} at {}", r.worst_rel_err, r.worst_at);
    assert!(r.checked > 100);
    assert!(r.passed, "{r:?}");
}

#[test]
fn tied_locations_are_rejected() {
    // seed 1 leaves every spotting ReLU dead, so both predictions tie
    assert!(check_model_gradients(&[1]).is_err());
}

#[test]
fn point_gradients_match_central_differences() {
    let r = check_point_gradients(10_000, 42).unwrap();
    println!("worst relative error {:.3e} at {}", r.worst_rel_err, r.worst_at);
    assert!(r.passed, "{r:?}");
}
