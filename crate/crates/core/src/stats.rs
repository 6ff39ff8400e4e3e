//! Order-fixed reductions used by the ensemble summaries.

/// Neumaier-compensated sum; result depends only on the input order.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and standard error of the mean (sample SD / √n).
pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(xs.iter().copied()) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Least-squares slope and intercept of `y` on `x`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = compensated_sum(x.iter().copied()) / n as f64;
    let my = compensated_sum(y.iter().copied()) / n as f64;
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn fit_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|t| 3.0 - 0.7 * t).collect();
        let (s, b) = linear_fit(&x, &y).unwrap();
        assert!((s + 0.7).abs() < 1e-12 && (b - 3.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[2.0]).is_none());
    }

    #[test]
    fn mean_se_basic() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
