use crate::error::{Error, Result};
use crate::matcore::{solve_linear, Mat};

/// Savitzky–Golay smoothing.
///
/// Each output sample is the value at that sample of the least-squares
/// polynomial of degree `poly_order` over the centred window. Near the ends
/// the window is truncated to the available samples (no padding) and the
/// degree is lowered to at most one less than the number of points.
pub fn savgol_filter(series: &[f64], window: usize, poly_order: usize) -> Result<Vec<f64>> {
    if window.is_multiple_of(2) {
        return Err(Error::invalid(
            "filter window",
            format!("{window} is not odd"),
        ));
    }
    if window <= poly_order {
        return Err(Error::invalid(
            "filter window",
            format!("{window} must exceed the polynomial order {poly_order}"),
        ));
    }
    if series.len() < window {
        return Err(Error::invalid(
            "filter input",
            format!("{} samples, window needs {window}", series.len()),
        ));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("filter input", "non-finite sample"));
    }
    let half = window / 2;
    let n = series.len();
    let interior = weights(half, half, poly_order, half)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let left = i.min(half);
        let right = (n - 1 - i).min(half);
        let lo = i - left;
        let w = if left == half && right == half {
            std::borrow::Cow::Borrowed(&interior)
        } else {
            std::borrow::Cow::Owned(weights(left, right, poly_order, half)?)
        };
        out.push(
            w.iter()
                .zip(&series[lo..=i + right])
                .map(|(a, b)| a * b)
                .sum(),
        );
    }
    Ok(out)
}

/// Weights that evaluate the local least-squares fit at the centre sample,
/// for a window reaching `left` samples back and `right` forward.
fn weights(left: usize, right: usize, poly_order: usize, half: usize) -> Result<Vec<f64>> {
    let points = left + right + 1;
    let degree = poly_order.min(points - 1);
    let scale = half.max(1) as f64;
    let abscissa: Vec<f64> = (0..points)
        .map(|j| (j as f64 - left as f64) / scale)
        .collect();
    let cols = degree + 1;
    let mut gram = Mat::zeros(cols, cols);
    for s in &abscissa {
        let mut pw = vec![1.0; 2 * cols - 1];
        for k in 1..pw.len() {
            pw[k] = pw[k - 1] * s;
        }
        for r in 0..cols {
            for c in 0..cols {
                gram[(r, c)] += pw[r + c];
            }
        }
    }
    let mut e0 = Mat::zeros(cols, 1);
    e0[(0, 0)] = 1.0;
    let g = solve_linear(&gram, &e0)?;
    Ok(abscissa
        .iter()
        .map(|s| {
            let mut acc = 0.0;
            let mut p = 1.0;
            for r in 0..cols {
                acc += g[(r, 0)] * p;
                p *= s;
            }
            acc
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_is_unchanged() {
        let s = vec![2.5; 40];
        let f = savgol_filter(&s, 11, 2).unwrap();
        assert!(f.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn quadratic_is_reproduced() {
        let s: Vec<f64> = (0..600)
            .map(|i| {
                let t = i as f64;
                0.3 - 0.01 * t + 2e-5 * t * t
            })
            .collect();
        let f = savgol_filter(&s, 501, 2).unwrap();
        for (a, b) in f.iter().zip(&s) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn minimal_window_interpolates() {
        let s = vec![1.0, -3.0, 4.0, 0.5, 9.0, -2.0];
        let f = savgol_filter(&s, 3, 2).unwrap();
        for (a, b) in f.iter().zip(&s) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_is_reduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let clean: Vec<f64> = (0..800).map(|i| (i as f64 * 0.01).sin()).collect();
        let noisy: Vec<f64> = clean
            .iter()
            .map(|c| c + 0.1 * (rng.random::<f64>() - 0.5))
            .collect();
        let f = savgol_filter(&noisy, 51, 2).unwrap();
        let rms = |a: &[f64]| {
            (a.iter()
                .zip(&clean)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                / a.len() as f64)
                .sqrt()
        };
        assert!(rms(&f) < rms(&noisy));
    }

    #[test]
    fn preconditions() {
        let s = vec![0.0; 10];
        assert!(savgol_filter(&s, 4, 2).is_err());
        assert!(savgol_filter(&s, 3, 3).is_err());
        assert!(savgol_filter(&s, 11, 2).is_err());
    }
}
