//! One-dimensional minimization helpers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of `f` on `[a, b]`, stopping once
/// the bracket is narrower than `tol`. Returns `(x_min, f_min)`.
pub fn golden_section<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Bisection on a sign change of `g` in `[a, b]` (requires `g(a) <= 0 <= g(b)`).
pub fn bisect<G: FnMut(f64) -> f64>(mut g: G, mut a: f64, mut b: f64, max_iter: usize) -> f64 {
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if g(m) <= 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
