use mmicl_web::{compute_alpha_star_curve, compute_icl_error_curve, compute_landscape, CONTEXT_LENGTHS};

#[test]
fn landscape_minimum_near_anti_diagonal() {
    let n = 41;
    let grid = compute_landscape(10, n, 2.0).unwrap();
    assert_eq!(grid.len(), n * n);
    let k = (0..grid.len()).min_by(|&a, &b| grid[a].total_cmp(&grid[b])).unwrap();
    let (alpha, beta) = ((k % n) as f64 / 40.0, -1.0 + (k / n) as f64 / 40.0);
    assert!((alpha - 1.0 / 3.0).abs() <= 0.05 && (beta + 1.0 / 3.0).abs() <= 0.05, "{alpha} {beta}");
}

#[test]
fn alpha_star_curve_ends_with_limit() {
    let c = compute_alpha_star_curve(20, 2.0).unwrap();
    assert_eq!(c.len(), 21);
    assert!((c[20] - 1.0 / 3.0).abs() < 1e-12);
    assert!((c[19] - c[20]).abs() < (c[0] - c[20]).abs());
}

#[test]
fn error_curve_decreases_with_context() {
    let e = compute_icl_error_curve(10, 0.3, -0.3, 100, 1).unwrap();
    assert_eq!(e.len(), CONTEXT_LENGTHS.len());
    assert!(e[9] < e[3]);
}

#[test]
fn bad_arguments_are_errors() {
    assert!(compute_landscape(0, 10, 2.0).is_err());
    assert!(compute_landscape(5, 1, 2.0).is_err());
    assert!(compute_alpha_star_curve(0, 2.0).is_err());
    assert!(compute_icl_error_curve(5, 0.1, -0.1, 0, 1).is_err());
    assert!(compute_landscape(5, 10, -1.0).is_err());
}
