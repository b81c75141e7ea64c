//! Product integration for `(t − τ)^(−1/2)` weights and plain trapezoid
//! weights on a non-uniform time grid.

/// Weights `w_k` with `Σ w_k g(t_k) = ∫_{t_0}^{t_n} g(τ) (t_n − τ)^(−1/2) dτ`
/// for every `g` that is linear between grid points; `t_n` is the last
/// grid point.
pub fn quad_weights_singular(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    let target = grid[n - 1];
    for k in 0..n - 1 {
        let (a, b) = (grid[k], grid[k + 1]);
        let h = b - a;
        let ra = (target - a).sqrt();
        let rb = (target - b).max(0.0).sqrt();
        // ra − rb without cancellation
        let diff = h / (ra + rb);
        let i0 = 2.0 * diff;
        let i1 = (2.0 / 3.0) * diff * diff * (2.0 * ra + rb);
        w[k + 1] += i1 / h;
        w[k] += i0 - i1 / h;
    }
    w
}

/// Composite trapezoid weights on `grid`.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = 0.5 * (grid[k + 1] - grid[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constants_and_linear_functions() {
        let grid: Vec<f64> = (0..=37).map(|k| (k as f64 / 37.0).powf(1.3) * 2.5).collect();
        let w = quad_weights_singular(&grid);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0 * 2.5f64.sqrt()).abs() < 1e-14);

        let unit: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let w = quad_weights_singular(&unit);
        let m: f64 = w.iter().zip(&unit).map(|(w, t)| w * t).sum();
        assert!((m - 4.0 / 3.0).abs() < 1e-14, "{m}");
    }

    proptest! {
        #[test]
        fn exact_for_piecewise_linear(values in prop::collection::vec(-3.0f64..3.0, 6),
                                      steps in prop::collection::vec(0.01f64..0.5, 5)) {
            let mut grid = vec![0.0];
            for h in &steps {
                grid.push(grid.last().unwrap() + h);
            }
            let t = *grid.last().unwrap();
            let w = quad_weights_singular(&grid);
            let approx: f64 = w.iter().zip(&values).map(|(w, g)| w * g).sum();
            // analytic integral per interval with the substitution u = t − τ
            let mut exact = 0.0;
            for k in 0..5 {
                let (a, b) = (grid[k], grid[k + 1]);
                let slope = (values[k + 1] - values[k]) / (b - a);
                let (ua, ub) = (t - a, t - b);
                let prim = |u: f64| {
                    let g_t = values[k] + slope * (t - a);
                    // g(τ) = g_t − slope·u
                    2.0 * g_t * u.sqrt() - slope * (2.0 / 3.0) * u.powf(1.5)
                };
                exact += prim(ua) - prim(ub);
            }
            let scale = values.iter().map(|v| v.abs()).fold(1.0, f64::max);
            prop_assert!((approx - exact).abs() <= 1e-13 * scale * 10.0);
        }
    }
}
