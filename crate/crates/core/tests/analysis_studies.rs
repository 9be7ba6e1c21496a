use antiplane::analysis::{convergence_study, decay_envelope, decay_envelope_in, solve_crack};
use antiplane::{NewtonOptions, ScalarField};

fn h1_distance(a: &ScalarField, b: &ScalarField) -> f64 {
    // evaluate on the larger domain; both fields vanish outside their own
    let big = if a.domain().radius() >= b.domain().radius() {
        a
    } else {
        b
    };
    ScalarField::from_fn(big.domain().clone(), |m| a.value(m) - b.value(m)).h1_norm()
}

// Supercell errors measured against a finite reference obey the nested
// Galerkin identity |u6 - uR|² = |u4 - uR|² + |u6 - u4|², so the reference
// bias is first order in R / R_ref.
#[test]
fn reference_radius_bias_follows_galerkin_orthogonality() {
    let opts = NewtonOptions::default();
    let four = convergence_study(&[8.0, 16.0], 0.01, 64.0, &opts).unwrap();
    let six = convergence_study(&[8.0, 16.0], 0.01, 96.0, &opts).unwrap();
    assert!(four.errors.iter().all(|e| *e > 0.0));
    assert_eq!(four.ref_radius, 64.0);
    assert_eq!(four.radii, vec![8.0, 16.0]);

    let u4 = solve_crack(64.0, 0.01, &opts).unwrap().final_field;
    let u6 = solve_crack(96.0, 0.01, &opts).unwrap().final_field;
    let gap = h1_distance(&u6, &u4);
    for (i, r) in [8.0, 16.0].into_iter().enumerate() {
        let ur = solve_crack(r, 0.01, &opts).unwrap().final_field;
        assert_eq!(h1_distance(&u4, &ur), four.errors[i]);
        let (e4, e6) = (four.errors[i], six.errors[i]);
        let defect = (e6 * e6 - e4 * e4 - gap * gap).abs();
        assert!(defect <= 1e-2 * e6 * e6, "R {r}: {e4} {e6} {gap}");
    }
}

#[test]
fn decay_report_of_a_solution() {
    let field = solve_crack(32.0, 0.01, &NewtonOptions::default()).unwrap().final_field;
    let rep = decay_envelope(&field, 1.0).unwrap();
    assert_eq!(rep.fit_window, (5.0, 16.0));
    assert!(rep.annuli.windows(2).all(|w| w[0].0 < w[1].0));
    assert!(rep.annuli.iter().all(|a| a.1 >= 0.0));
    // the envelope is linear in the loading, so the slope is loading independent
    let scaled = solve_crack(32.0, 0.001, &NewtonOptions::default()).unwrap().final_field;
    let other = decay_envelope(&scaled, 1.0).unwrap();
    assert!((rep.slope - other.slope).abs() < 0.01);
    // a wider annulus still gives a comparable rate
    let wide = decay_envelope_in(&field, 2.0, (5.0, 16.0)).unwrap();
    assert!((wide.slope - rep.slope).abs() < 0.2, "{} {}", wide.slope, rep.slope);
}
