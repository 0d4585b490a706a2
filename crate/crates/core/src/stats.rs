//! Least-squares fits and training-curve summaries.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::train::TrainHistory;

/// Ordinary least-squares line `y = slope x + intercept` with its
/// coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    /// `1 - SS_res / SS_tot`; 0 when the responses are constant.
    pub r2: f64,
}

pub fn linear_regression_r2(xs: &[f64], ys: &[f64]) -> Result<Regression> {
    if xs.len() != ys.len() {
        return Err(invalid("xs and ys differ in length"));
    }
    if xs.len() < 2 {
        return Err(invalid("regression needs at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("regression needs at least two distinct x values"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 0.0 } else { 1.0 - ss_res / ss_tot };
    Ok(Regression {
        slope,
        intercept,
        r2,
    })
}

/// Fit of `log(err)` against `log(p)`; the slope is the polynomial exponent.
pub fn log_log_fit(ps: &[f64], errs: &[f64]) -> Result<Regression> {
    let lx: Vec<f64> = ps.iter().map(|&p| libm::log(p)).collect();
    let ly: Vec<f64> = errs.iter().map(|&e| libm::log(e)).collect();
    linear_regression_r2(&lx, &ly)
}

/// Fit of `err` against `log(p)` (logarithmic growth).
pub fn semilog_fit(ps: &[f64], errs: &[f64]) -> Result<Regression> {
    let lx: Vec<f64> = ps.iter().map(|&p| libm::log(p)).collect();
    linear_regression_r2(&lx, errs)
}

/// Relative rise of the final test error over its minimum that counts as overfitting.
pub const OVERFIT_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSummary {
    pub epochs: usize,
    pub final_train: f64,
    pub min_train: f64,
    pub final_test: Option<f64>,
    pub min_test: Option<f64>,
    pub min_test_epoch: Option<usize>,
    /// `final_test - min_test > 0.1 * min_test`.
    pub overfit: bool,
}

pub fn convergence_summary(history: &TrainHistory) -> Result<ConvergenceSummary> {
    let Some(&final_train) = history.train_error.last() else {
        return Err(invalid("empty training history"));
    };
    let min_train = history
        .train_error
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let best = history
        .test_error
        .iter()
        .copied()
        .fold(None::<(usize, f64)>, |best, (e, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((e, v)),
        });
    let final_test = history.final_test_error();
    let overfit = match (final_test, best) {
        (Some(f), Some((_, m))) => f - m > OVERFIT_TOLERANCE * m,
        _ => false,
    };
    Ok(ConvergenceSummary {
        epochs: history.epochs(),
        final_train,
        min_train,
        final_test,
        min_test: best.map(|b| b.1),
        min_test_epoch: best.map(|b| b.0),
        overfit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hand_regression() {
        let r = linear_regression_r2(&[1.0, 2.0, 3.0], &[2.0, 3.0, 5.0]).unwrap();
        assert!((r.slope - 1.5).abs() < 1e-14);
        assert!((r.intercept - 1.0 / 3.0).abs() < 1e-14);
        assert!((r.r2 - 27.0 / 28.0).abs() < 1e-14);
    }

    #[test]
    fn collinear_and_constant() {
        let r = linear_regression_r2(&[0.0, 1.0, 2.0, 5.0], &[1.0, 3.0, 5.0, 11.0]).unwrap();
        assert!((r.r2 - 1.0).abs() < 1e-14);
        assert!((r.slope - 2.0).abs() < 1e-14);
        let c = linear_regression_r2(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).unwrap();
        assert_eq!(c.slope, 0.0);
        assert_eq!(c.r2, 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(linear_regression_r2(&[1.0], &[1.0]).is_err());
        assert!(linear_regression_r2(&[2.0, 2.0], &[1.0, 3.0]).is_err());
        assert!(linear_regression_r2(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn log_log_recovers_exponent() {
        let ps = [2.0, 4.0, 8.0, 16.0];
        let errs: Vec<f64> = ps.iter().map(|p: &f64| 0.01 * p.powf(1.5)).collect();
        let r = log_log_fit(&ps, &errs).unwrap();
        assert!((r.slope - 1.5).abs() < 1e-12);
    }

    #[test]
    fn overfit_flag() {
        let mono = TrainHistory {
            train_error: vec![0.5, 0.3, 0.2, 0.1],
            test_error: vec![(2, 0.4), (4, 0.2)],
        };
        assert!(!convergence_summary(&mono).unwrap().overfit);
        let v = TrainHistory {
            train_error: vec![0.5, 0.3, 0.2, 0.1, 0.05],
            test_error: vec![(1, 0.5), (2, 0.2), (3, 0.3), (5, 0.4)],
        };
        let s = convergence_summary(&v).unwrap();
        assert!(s.overfit);
        assert_eq!(s.min_test_epoch, Some(2));
        assert!(convergence_summary(&TrainHistory::default()).is_err());
    }
}
