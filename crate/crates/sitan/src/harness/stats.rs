//! Summary statistics with Student-t confidence intervals.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Half-width of the 95% confidence interval of the mean; zero for
    /// fewer than two samples.
    pub ci95: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

/// Two-sided 95% critical value of Student's t with `df` degrees of freedom.
pub fn t_critical(df: usize) -> f64 {
    let t = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    t.inverse_cdf(0.975)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

pub fn summarize(xs: &[f64]) -> Option<Summary> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ci95 = if n < 2 {
        0.0
    } else {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        t_critical(n - 1) * (var / n as f64).sqrt()
    };
    Some(Summary {
        count: n,
        mean,
        ci95,
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        median: median(xs).expect("non-empty"),
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_interval() {
        // mean 3, s = sqrt(2.5), t(4) = 2.776445
        let s = summarize(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert!((s.ci95 - 2.776445 * (2.5f64 / 5.0).sqrt()).abs() < 1e-5);
        assert_eq!((s.min, s.max, s.median), (1.0, 5.0, 3.0));
    }

    #[test]
    fn t_table_values() {
        assert!((t_critical(1) - 12.7062).abs() < 1e-3);
        assert!((t_critical(9) - 2.2622).abs() < 1e-3);
        assert!((t_critical(29) - 2.0452).abs() < 1e-3);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(summarize(&[]), None);
        assert_eq!(summarize(&[7.0]).unwrap().ci95, 0.0);
        assert_eq!(median(&[4.0, 1.0]), Some(2.5));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [4.0, 10.0, 50.0].iter().map(|x: &f64| (*x, 3.0 * x.powf(1.5))).collect();
        assert!((loglog_slope(&pts).unwrap() - 1.5).abs() < 1e-9);
        assert_eq!(loglog_slope(&[(1.0, 1.0)]), None);
    }
}
