//! Statistics for experiment comparisons.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Sample mean and unbiased variance.
fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch unequal-variance two-sample t-test; returns `(t, two_sided_p)` with
/// Welch-Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(
            "welch test needs at least two samples per group".into(),
        ));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        if ma == mb {
            // identical constant samples: no evidence of difference
            return Ok((0.0, 1.0));
        }
        return Err(Error::Degenerate(
            "both samples have zero variance with different means".into(),
        ));
    }
    let sa = va / a.len() as f64;
    let sb = vb / b.len() as f64;
    let se = (sa + sb).sqrt();
    let t = (ma - mb) / se;
    let dof = (sa + sb) * (sa + sb)
        / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Degenerate(format!("t-distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p.clamp(0.0, 1.0)))
}

/// Mean and standard deviation (unbiased) of a sample.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.len() < 2 {
        return (xs.first().copied().unwrap_or(f64::NAN), 0.0);
    }
    let (m, v) = mean_var(xs);
    (m, v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_samples_give_t_zero_p_one() {
        let a = [0.3, 0.3, 0.3];
        let (t, p) = welch_t_test(&a, &a).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn separated_normals_give_tiny_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let normal = |rng: &mut ChaCha8Rng| {
            // Box-Muller
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let a: Vec<f64> = (0..100).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = (0..100).map(|_| normal(&mut rng) + 1.0).collect();
        let (t, p) = welch_t_test(&a, &b).unwrap();
        assert!(t < 0.0);
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn swapping_negates_t_preserves_p() {
        let a = [0.1, 0.5, 0.4, 0.8];
        let b = [0.2, 0.9, 0.7, 1.1];
        let (t1, p1) = welch_t_test(&a, &b).unwrap();
        let (t2, p2) = welch_t_test(&b, &a).unwrap();
        assert!((t1 + t2).abs() < 1e-12);
        assert!((p1 - p2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_error() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0, f64::NAN], &[2.0, 2.0]).is_err());
    }

    #[test]
    fn matches_textbook_example() {
        // classic Welch example data
        let a = [27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4];
        let b = [27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 30.5, 24.3];
        let (t, p) = welch_t_test(&a, &b).unwrap();
        assert!((t - (-2.84720)).abs() < 1e-4, "t = {t}");
        assert!((p - 0.0081856).abs() < 1e-5, "p = {p}");
    }
}
