//! Empirical CDFs and the one-sample Kolmogorov-Smirnov test used to check
//! sampled lifetimes against their analytic distribution.

use ess_proto::Fault;

/// Right-continuous empirical CDF: one `(x, F(x))` step per distinct sample
/// value, with F rising from 1/n to 1.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>, Fault> {
    if samples.is_empty() {
        return Err(Fault::protocol("empirical CDF needs at least one sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN lifetimes"));
    let n = sorted.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, x) in sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == *x => last.1 = f,
            _ => points.push((*x, f)),
        }
    }
    Ok(points)
}

/// One-sample KS statistic `sup |F_emp - F|` against an analytic CDF.
pub fn ks_statistic(samples: &[f64], cdf: &dyn Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN lifetimes"));
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        let below = f - i as f64 / n;
        let above = (i + 1) as f64 / n - f;
        sup = sup.max(below).max(above);
    }
    sup
}

/// Asymptotic critical value for the one-sample KS test at level `alpha`:
/// `sqrt(-ln(alpha/2)/2) / sqrt(n)`. At alpha = 0.01 the coefficient is
/// about 1.628.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    assert!(n > 0 && alpha > 0.0 && alpha < 1.0);
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// True when the sample is consistent with `cdf` at significance `alpha`.
pub fn ks_passes(samples: &[f64], cdf: &dyn Fn(f64) -> f64, alpha: f64) -> bool {
    ks_statistic(samples, cdf) < ks_critical(samples.len(), alpha)
}

/// Writes `t_seconds,cdf` rows for external plotting.
pub fn write_cdf_csv(points: &[(f64, f64)], mut w: impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "t_seconds,cdf")?;
    for (t, f) in points {
        writeln!(w, "{t},{f}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_lifetimes, LifetimeModel};

    #[test]
    fn ecdf_of_three_points() {
        let points = empirical_cdf(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(points, vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
    }

    #[test]
    fn ecdf_single_sample_steps_to_one() {
        let points = empirical_cdf(&[5.5]).unwrap();
        assert_eq!(points, vec![(5.5, 1.0)]);
        assert!(empirical_cdf(&[]).is_err());
    }

    #[test]
    fn ecdf_collapses_duplicates() {
        let points = empirical_cdf(&[2.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(points, vec![(1.0, 0.25), (2.0, 1.0)]);
    }

    #[test]
    fn critical_value_at_one_percent() {
        // n = 10^4 at the 1% level.
        let crit = ks_critical(10_000, 0.01);
        assert!((crit - 0.016276).abs() < 1e-5, "crit {crit}");
    }

    #[test]
    fn exponential_samples_within_dkw_band() {
        let model = LifetimeModel::Exponential { mean_ttf_s: 120.0 };
        let samples = sample_lifetimes(&model, 11, 10_000).unwrap();
        let cdf = model.cdf().unwrap();
        // Sup distance below 0.02 for 10^4 draws.
        let d = ks_statistic(&samples, cdf.as_ref());
        assert!(d < 0.02, "sup distance {d}");
    }

    #[test]
    fn ks_test_accepts_matching_distribution() {
        let model = LifetimeModel::Weibull {
            shape: 1.6,
            scale_s: 400.0,
        };
        let samples = sample_lifetimes(&model, 5, 10_000).unwrap();
        assert!(ks_passes(&samples, model.cdf().unwrap().as_ref(), 0.01));
    }

    #[test]
    fn ks_test_rejects_wrong_distribution() {
        let sampled = LifetimeModel::Exponential { mean_ttf_s: 100.0 };
        let wrong = LifetimeModel::Exponential { mean_ttf_s: 200.0 };
        let samples = sample_lifetimes(&sampled, 5, 10_000).unwrap();
        assert!(!ks_passes(&samples, wrong.cdf().unwrap().as_ref(), 0.01));
    }

    #[test]
    fn weibull_shape_one_equals_exponential() {
        // Weibull(shape=1, scale=s) is Exponential(mean=s): samples from one
        // pass the KS test against the other's analytic CDF.
        let weibull = LifetimeModel::Weibull {
            shape: 1.0,
            scale_s: 250.0,
        };
        let exponential = LifetimeModel::Exponential { mean_ttf_s: 250.0 };
        let samples = sample_lifetimes(&weibull, 9, 10_000).unwrap();
        assert!(ks_passes(
            &samples,
            exponential.cdf().unwrap().as_ref(),
            0.01
        ));
    }

    #[test]
    fn cdf_csv_shape() {
        let mut out = Vec::new();
        write_cdf_csv(&[(1.0, 0.5), (2.0, 1.0)], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "t_seconds,cdf\n1,0.5\n2,1\n");
    }
}
