use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stoch::stream_rng;

/// Least-squares line `log y = slope log h + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub points: usize,
}

/// Ordinary least squares of `log(value)` on `log(h)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::Data(format!(
            "a slope needs two points, got {}",
            points.len()
        )));
    }
    if let Some(&(h, y)) = points.iter().find(|(h, y)| !(*h > 0.0 && *y > 0.0)) {
        return Err(Error::Data(format!(
            "log-log fit needs positive data, got ({h}, {y})"
        )));
    }
    let m = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (h, y)| (a + h.ln(), b + y.ln()));
    let (mx, my) = (sx / m, sy / m);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (h, y) in points {
        let dx = h.ln() - mx;
        sxx += dx * dx;
        sxy += dx * (y.ln() - my);
    }
    if sxx == 0.0 {
        return Err(Error::Data(
            "log-log fit needs at least two distinct h".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = points
        .iter()
        .map(|(h, y)| (y.ln() - intercept - slope * h.ln()).powi(2))
        .sum();
    Ok(SlopeFit {
        slope,
        intercept,
        residual: (ss / m).sqrt(),
        points: points.len(),
    })
}

/// Calls `visit` with `draws` pseudo-experiments, each built by picking one
/// stored value independently at random from every column.
pub fn swap_resample(
    columns: &[Vec<f64>],
    draws: usize,
    seed: u64,
    mut visit: impl FnMut(&[f64]) -> Result<()>,
) -> Result<()> {
    if let Some(c) = columns.iter().position(Vec::is_empty) {
        return Err(Error::Data(format!("column {c} is empty")));
    }
    let mut rng = stream_rng(seed, 0);
    let mut row = vec![0.0; columns.len()];
    for _ in 0..draws {
        for (x, col) in row.iter_mut().zip(columns) {
            *x = col[rng.random_range(0..col.len())];
        }
        visit(&row)?;
    }
    Ok(())
}

/// Slopes of `draws` swap-resampled experiments (`columns[c]` holds the
/// errors at `hs[c]`).
pub fn swap_histogram(
    hs: &[f64],
    columns: &[Vec<f64>],
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if hs.len() != columns.len() {
        return Err(Error::Dimension(format!(
            "{} h values but {} columns",
            hs.len(),
            columns.len()
        )));
    }
    if let Some(c) = columns.iter().position(Vec::is_empty) {
        return Err(Error::Data(format!("column {c} (h = {}) is empty", hs[c])));
    }
    let mut points: Vec<(f64, f64)> = hs.iter().map(|&h| (h, 0.0)).collect();
    let mut slopes = Vec::with_capacity(draws);
    swap_resample(columns, draws, seed, |row| {
        for (p, &e) in points.iter_mut().zip(row) {
            p.1 = e;
        }
        slopes.push(loglog_slope(&points)?.slope);
        Ok(())
    })?;
    Ok(slopes)
}

/// Equal-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 || values.is_empty() {
        return Err(Error::Data(
            "histogram needs values and at least one bin".into(),
        ));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Data("histogram of non-finite values".into()));
    }
    if hi == lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|b| lo + b as f64 * width).collect();
    let mut counts = vec![0; bins];
    for &x in values {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let fit = loglog_slope(&[(1.0, 1.0), (0.5, 0.5), (0.25, 0.25)]).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-14);
        assert!(fit.intercept.abs() < 1e-14 && fit.residual < 1e-14);
        let fit = loglog_slope(&[(1.0, 3.0), (0.5, 3.0)]).unwrap();
        assert!(fit.slope.abs() < 1e-15);
        let fit = loglog_slope(&[
            (0.1, 2.0 * 0.1f64.sqrt()),
            (0.01, 0.2),
            (0.3, 2.0 * 0.3f64.sqrt()),
        ])
        .unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!((fit.intercept - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bad_fits() {
        assert!(loglog_slope(&[(1.0, 1.0)]).is_err());
        assert!(loglog_slope(&[(1.0, 1.0), (0.5, 0.0)]).is_err());
        assert!(loglog_slope(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn identical_rows_give_a_degenerate_histogram() {
        let hs = [0.5, 0.25, 0.125];
        let row = [0.4, 0.3, 0.2];
        let columns: Vec<Vec<f64>> = row.iter().map(|&e| vec![e; 5]).collect();
        let want = loglog_slope(&[(0.5, 0.4), (0.25, 0.3), (0.125, 0.2)])
            .unwrap()
            .slope;
        let slopes = swap_histogram(&hs, &columns, 100, 1).unwrap();
        assert!(slopes.iter().all(|&s| s == want));
        assert!(swap_histogram(&hs, &[vec![1.0], vec![], vec![1.0]], 1, 1).is_err());
    }

    #[test]
    fn histogram_counts_everything() {
        let h = histogram(&[0.0, 0.1, 0.5, 1.0, 1.0], 4).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 5);
        assert_eq!(h.counts, vec![2, 0, 1, 2]);
        assert_eq!(h.edges.len(), 5);
    }
}
