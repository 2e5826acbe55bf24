use crate::error::{Error, Result};

/// Number of observations in the lower `alpha` tail, `ceil(alpha n)`, guarded
/// against products such as `0.05 * 100 = 5.000000000000001`.
pub fn tail_count(alpha: f64, n: usize) -> usize {
    (((alpha * n as f64) - 1e-9).ceil() as usize).clamp(1, n)
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Lower-tail value at risk and conditional value at risk: `var` is the
/// `ceil(alpha n)`-th smallest observation and `cvar` the mean of the
/// `ceil(alpha n)` smallest.
pub fn empirical_var_cvar(sample: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::Validation("empty sample".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Validation(format!("tail level {alpha} outside (0, 1]")));
    }
    let v = sorted(sample);
    let k = tail_count(alpha, v.len());
    let cvar = v[..k].iter().sum::<f64>() / k as f64;
    Ok((v[k - 1], cvar))
}

/// Upper-tail mean of the `ceil(alpha n)` largest observations.
pub fn upper_tail_mean(sample: &[f64], alpha: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Validation("empty sample".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Validation(format!("tail level {alpha} outside (0, 1]")));
    }
    let mut v = sample.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = tail_count(alpha, v.len());
    Ok(v[..k].iter().sum::<f64>() / k as f64)
}

/// `W + mean(min(X - W, 0)) / alpha`.
pub fn rockafellar_objective(sample: &[f64], alpha: f64, w: f64) -> f64 {
    let s: f64 = sample.iter().map(|x| (x - w).min(0.0)).sum();
    w + s / (alpha * sample.len() as f64)
}

/// Maximum of [`rockafellar_objective`] over `W` and the smallest maximiser.
/// The objective is concave and piecewise linear with breakpoints at the
/// sample points, so the search runs over the sorted sample with prefix sums.
pub fn rockafellar_max(sample: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::Validation("empty sample".into()));
    }
    let v = sorted(sample);
    let an = alpha * v.len() as f64;
    let mut prefix = 0.0;
    let mut best = (f64::NEG_INFINITY, v[0]);
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    for (j, &x) in v.iter().enumerate() {
        let value = x + (prefix - j as f64 * x) / an;
        if value > best.0 + 1e-12 * scale {
            best = (value, x);
        }
        prefix += x;
    }
    Ok(best)
}

/// Nearest-rank percentile: the `ceil(p n)`-th smallest value.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = tail_count(p, n);
    sorted[k - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hundred_point_example() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let (var, cvar) = empirical_var_cvar(&s, 0.05).unwrap();
        assert_eq!(var, 5.0);
        assert_eq!(cvar, 3.0);
        let (value, arg) = rockafellar_max(&s, 0.05).unwrap();
        assert!((value - 3.0).abs() < 1e-12);
        assert_eq!(arg, 5.0);
    }

    #[test]
    fn degenerate_cases() {
        assert_eq!(empirical_var_cvar(&[7.0; 9], 0.05).unwrap(), (7.0, 7.0));
        let s = [1.0, 2.0, 6.0];
        assert_eq!(empirical_var_cvar(&s, 1.0).unwrap().1, 3.0);
        assert!(empirical_var_cvar(&[], 0.05).is_err());
        assert_eq!(upper_tail_mean(&[1.0, 5.0, 3.0, 9.0], 0.5).unwrap(), 7.0);
    }

    proptest! {
        #[test]
        fn cvar_var_mean_ordering(sample in proptest::collection::vec(-1e3f64..1e3, 1..300), alpha in 0.01f64..1.0) {
            let (var, cvar) = empirical_var_cvar(&sample, alpha).unwrap();
            let mean = sample.iter().sum::<f64>() / sample.len() as f64;
            prop_assert!(cvar <= var + 1e-9);
            prop_assert!(cvar <= mean + 1e-9);
        }

        #[test]
        fn rockafellar_consistency(sample in proptest::collection::vec(-1e3f64..1e3, 20..400)) {
            // alpha n is an integer here, where the discrete identity is exact
            let alpha = 5.0 / sample.len() as f64;
            let (var, cvar) = empirical_var_cvar(&sample, alpha).unwrap();
            let (value, arg) = rockafellar_max(&sample, alpha).unwrap();
            prop_assert!((value - cvar).abs() <= 1e-9 * cvar.abs().max(1.0));
            prop_assert_eq!(arg, var);
        }
    }
}
