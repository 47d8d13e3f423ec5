use proptest::prelude::*;
use ultradian::contour::{isocurves, mean_slope, Field};

fn axis(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn sample(x: &[f64], y: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<Option<f64>> {
    let f = &f;
    y.iter().flat_map(|&b| x.iter().map(move |&a| Some(f(a, b)))).collect()
}

#[test]
fn constant_field_has_no_contours() {
    let x = axis(20, 0.0, 1.0);
    let y = axis(15, 0.0, 3.0);
    let v = sample(&x, &y, |_, _| 2.0);
    let field = Field { x: &x, y: &y, values: &v };
    for level in [1.0, 1.999, 2.001, 3.0] {
        assert!(isocurves(&field, level).is_empty());
    }
}

#[test]
fn level_outside_range_is_empty() {
    let x = axis(10, 0.0, 1.0);
    let v = sample(&x, &x, |a, b| a + b);
    let field = Field { x: &x, y: &x, values: &v };
    assert!(isocurves(&field, -0.5).is_empty());
    assert!(isocurves(&field, 2.5).is_empty());
    assert!(isocurves(&field, f64::NAN).is_empty());
}

#[test]
fn fully_masked_field_is_empty() {
    let x = axis(10, 0.0, 1.0);
    let v = vec![None; 100];
    assert!(isocurves(&Field { x: &x, y: &x, values: &v }, 0.5).is_empty());
}

proptest! {
    #[test]
    fn linear_field_gives_straight_contour(level in 0.05f64..3.95, nx in 3usize..40, ny in 3usize..40) {
        let x = axis(nx, 0.0, 2.0);
        let y = axis(ny, 0.0, 2.0);
        let v = sample(&x, &y, |a, b| a + b);
        let lines = isocurves(&Field { x: &x, y: &y, values: &v }, level);
        prop_assert_eq!(lines.len(), 1);
        let cell = (2.0 / (nx - 1) as f64).min(2.0 / (ny - 1) as f64);
        for &(a, b) in &lines[0] {
            prop_assert!((a + b - level).abs() < cell / 100.0);
        }
        if let Some(s) = mean_slope(&lines[0]) {
            prop_assert!((s + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn masked_cells_contain_no_points(level in 0.2f64..1.8, hole in 2usize..8) {
        let x = axis(10, 0.0, 1.0);
        let mut v = sample(&x, &x, |a, b| a + b);
        for j in hole..hole + 2 {
            for i in 0..10 {
                v[j * 10 + i] = None;
            }
        }
        let (lo, hi) = (x[hole - 1], x[hole + 2]);
        for line in isocurves(&Field { x: &x, y: &x, values: &v }, level) {
            for &(_, b) in &line {
                prop_assert!(b <= lo + 1e-12 || b >= hi - 1e-12, "point at y = {b} inside the masked band");
            }
        }
    }
}
