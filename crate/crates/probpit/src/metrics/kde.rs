//! Gaussian kernel density estimation with Silverman bandwidth.

use crate::error::{Error, Result};

/// A density curve sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeCurve {
    /// Trapezoidal integral over the grid; 1 by construction.
    pub fn integral(&self) -> f64 {
        trapz(&self.grid, &self.density)
    }

    /// Linear interpolation of the density at `x` (0 outside the grid).
    pub fn density_at(&self, x: f64) -> f64 {
        let n = self.grid.len();
        if x < self.grid[0] || x > self.grid[n - 1] {
            return 0.0;
        }
        let step = self.grid[1] - self.grid[0];
        let idx = (((x - self.grid[0]) / step) as usize).min(n - 2);
        let frac = (x - self.grid[idx]) / step;
        self.density[idx] * (1.0 - frac) + self.density[idx + 1] * frac
    }
}

fn trapz(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
        .sum()
}

/// Interpolated quantile (linear between order statistics) of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

/// Gaussian KDE over `grid_points` uniform grid points spanning
/// `[min - 3h, max + 3h]`, with bandwidth
/// `h = 1.06 * min(std, IQR/1.349) * n^(-1/5)` (Silverman). The curve is
/// normalized so its trapezoidal integral is exactly one; the raw kernel
/// sum loses the Gaussian tail mass the 3h margin clips.
pub fn kde(samples: &[f64], grid_points: usize) -> Result<KdeCurve> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Data(format!("kde needs at least 2 samples, got {n}")));
    }
    if grid_points < 2 {
        return Err(Error::InvalidArgument("kde needs at least 2 grid points".into()));
    }
    if !samples.iter().all(|s| s.is_finite()) {
        return Err(Error::Data("kde input contains non-finite samples".into()));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (nf - 1.0);
    let std = var.sqrt();
    if std <= 0.0 {
        return Err(Error::Data("kde input has zero variance".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    // IQR can collapse to zero on clumped data even when the variance is
    // positive; fall back to the standard deviation there.
    let spread = if iqr > 0.0 { std.min(iqr / 1.349) } else { std };
    let bandwidth = 1.06 * spread * nf.powf(-0.2);

    let lo = sorted[0] - 3.0 * bandwidth;
    let hi = sorted[n - 1] + 3.0 * bandwidth;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|i| lo + step * i as f64).collect();

    let norm = 1.0 / (nf * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&xi| {
                    let u = (x - xi) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();

    let integral = trapz(&grid, &density);
    if !(integral > 0.0) {
        return Err(Error::Numeric("kde produced a degenerate density".into()));
    }
    for d in density.iter_mut() {
        *d /= integral;
    }
    Ok(KdeCurve { grid, density, bandwidth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn symmetric_input_gives_symmetric_curve() {
        let curve = kde(&[-1.0, 1.0], 401).unwrap();
        let m = curve.grid.len();
        for i in 0..m {
            let a = curve.density[i];
            let b = curve.density[m - 1 - i];
            assert!((a - b).abs() < 1e-12, "asymmetry at {i}");
        }
    }

    #[test]
    fn integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<f64> =
            (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let curve = kde(&samples, 257).unwrap();
        assert!((curve.integral() - 1.0).abs() < 1e-3);
        assert!(curve.density.iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn standard_normal_density_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(12345);
        let samples: Vec<f64> =
            (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let curve = kde(&samples, 513).unwrap();
        let d0 = curve.density_at(0.0);
        assert!((d0 - 0.3989).abs() < 0.05, "density at 0 was {d0}");
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(matches!(kde(&[1.0], 64), Err(Error::Data(_))));
        assert!(matches!(kde(&[2.0, 2.0, 2.0], 64), Err(Error::Data(_))));
        assert!(matches!(kde(&[0.0, f64::NAN], 64), Err(Error::Data(_))));
    }

    #[test]
    fn clumped_data_falls_back_to_std() {
        // IQR is zero here but the variance is not
        let samples = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let curve = kde(&samples, 129).unwrap();
        assert!(curve.bandwidth > 0.0);
        assert!((curve.integral() - 1.0).abs() < 1e-3);
    }
}
