//! Welch two-sample t-test and summary statistics.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample standard deviation (0 for fewer than two values).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Welch statistic and Welch–Satterthwaite degrees of freedom.
pub fn welch_statistic(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::Degenerate("t-test needs at least two values per group".into()));
    }
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let vx = std_dev(xs).powi(2) / nx;
    let vy = std_dev(ys).powi(2) / ny;
    let se2 = vx + vy;
    if !(se2 > 0.0) {
        return Err(Error::Degenerate("both groups have zero variance".into()));
    }
    let t = (mean(xs) - mean(ys)) / se2.sqrt();
    let df = se2 * se2 / (vx * vx / (nx - 1.0) + vy * vy / (ny - 1.0));
    Ok((t, df))
}

/// One-sided p-value for the hypothesis `mean(xs) < mean(ys)`.
pub fn welch_t_test(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let (t, df) = welch_statistic(xs, ys)?;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(dist.cdf(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_groups_give_half() {
        let xs = [1.0, 2.0, 4.0];
        assert_eq!(welch_t_test(&xs, &xs).unwrap(), 0.5);
    }

    #[test]
    fn separated_means() {
        let xs = [0.0, 0.0, 0.0];
        let ys = [1.0, 1.0 + 1e-6, 1.0 - 1e-6];
        assert!(welch_t_test(&xs, &ys).unwrap() < 1e-3);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(welch_t_test(&[1.0], &[2.0, 3.0]).is_err());
        assert!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).is_err());
    }

    #[test]
    fn sd_of_constant_is_zero() {
        assert_eq!(std_dev(&[3.0, 3.0, 3.0]), 0.0);
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
    }
}
