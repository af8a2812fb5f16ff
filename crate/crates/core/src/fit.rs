//! Least-squares helpers shared by the rate estimators.

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Geometric decay `r_n ≈ C σ^n` fitted on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricFit {
    /// Fitted rate σ.
    pub rate: f64,
    /// Least-squares prefactor `exp(intercept)`.
    pub prefactor: f64,
    /// Smallest C with `r_n ≤ C σ^n` on every fitted point.
    pub envelope: f64,
    pub points: usize,
}

/// Fits `values[k] ≈ C σ^{steps[k]}` over the points with `values > floor`.
pub fn geometric_fit(steps: &[f64], values: &[f64], floor: f64) -> Option<GeometricFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = steps
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > floor && v.is_finite())
        .map(|(s, v)| (*s, v.ln()))
        .unzip();
    let (slope, intercept) = linear_fit(&x, &y)?;
    let rate = slope.exp();
    let envelope = x
        .iter()
        .zip(&y)
        .map(|(s, ly)| (ly - slope * s).exp())
        .fold(0.0, f64::max);
    Some(GeometricFit {
        rate,
        prefactor: intercept.exp(),
        envelope,
        points: x.len(),
    })
}

pub(crate) fn mean_and_std_err(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_geometric_sequence() {
        let steps: Vec<f64> = (1..=20).map(f64::from).collect();
        let vals: Vec<f64> = steps.iter().map(|n| 3.0 * 0.7f64.powf(*n)).collect();
        let fit = geometric_fit(&steps, &vals, 1e-13).unwrap();
        assert!((fit.rate - 0.7).abs() < 1e-12);
        assert!((fit.prefactor - 3.0).abs() < 1e-10);
        assert!((fit.envelope - 3.0).abs() < 1e-10);
    }

    #[test]
    fn floor_excludes_points() {
        let fit = geometric_fit(&[1.0, 2.0, 3.0], &[1.0, 0.5, 0.0], 1e-13).unwrap();
        assert_eq!(fit.points, 2);
        assert!(geometric_fit(&[1.0], &[1.0], 0.0).is_none());
    }

    #[test]
    fn std_err_of_constant_is_zero() {
        assert_eq!(mean_and_std_err(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}
