use crate::error::{Error, Result};

/// Pearson correlation: covariance over the product of standard deviations.
///
/// `Degenerate` errors report node 0 or 1 for the first or second argument.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Consistency(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    for (node, ss) in [(0, sxx), (1, syy)] {
        if !(ss > 0.0) {
            return Err(Error::Degenerate {
                node,
                msg: "constant series has no correlation".into(),
            });
        }
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// A series centered and scaled to unit Euclidean norm, so that the Pearson
/// correlation of two such series is their dot product.
#[derive(Debug, Clone)]
pub struct Standardized(Vec<f64>);

impl Standardized {
    pub fn new(x: &[f64]) -> Option<Self> {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
        if !(ss > 0.0) {
            return None;
        }
        let norm = ss.sqrt();
        Some(Standardized(x.iter().map(|v| (v - m) / norm).collect()))
    }

    pub fn correlation(&self, other: &Standardized) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .clamp(-1.0, 1.0)
    }
}

/// Mutual information of a bivariate normal with correlation `rho`: −½ ln(1 − ρ²).
pub fn gaussian_mi(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Singularity(format!(
            "Gaussian mutual information diverges at |rho| = {}",
            rho.abs()
        )));
    }
    Ok(-0.5 * (-rho * rho).ln_1p())
}

/// Extra-normal information: total minus linear (Gaussian) information.
/// Not clamped, so finite-sample estimates may come out negative.
pub fn extra_normal(mi_data: f64, mi_linear: f64) -> f64 {
    mi_data - mi_linear
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap(), -1.0);
        // cov = 4/4, var_x = var_y = 5/4  =>  r = 0.8
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate { node: 0, .. })
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[5.0; 3]),
            Err(Error::Degenerate { node: 1, .. })
        ));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::Consistency(_))));
    }

    #[test]
    fn gaussian_mi_values() {
        assert_eq!(gaussian_mi(0.0).unwrap(), 0.0);
        let expected = -0.5 * 0.75f64.ln();
        assert!((gaussian_mi(0.5).unwrap() - expected).abs() <= 1e-15);
        assert!((gaussian_mi(0.5).unwrap() - 0.14384).abs() < 5e-6);
        assert_eq!(gaussian_mi(-0.5).unwrap(), gaussian_mi(0.5).unwrap());
        assert!(matches!(gaussian_mi(1.0), Err(Error::Singularity(_))));
        assert!(matches!(gaussian_mi(-1.5), Err(Error::Singularity(_))));
        assert!(gaussian_mi(f64::NAN).is_err());
    }

    #[test]
    fn extra_normal_arithmetic() {
        assert_eq!(extra_normal(0.3, 0.3), 0.0);
        assert!((extra_normal(0.73, 0.45) - 0.28).abs() < 1e-12);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (5usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn pearson_affine_and_sign((x, y) in pair(), a in 0.1f64..10.0, b in -50.0f64..50.0) {
            let Ok(r) = pearson(&x, &y) else { return Ok(()) };
            let xa: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((pearson(&xa, &y).unwrap() - r).abs() < 1e-12);
            prop_assert!((pearson(&y, &x).unwrap() - r).abs() < 1e-15);
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            prop_assert_eq!(pearson(&x, &neg).unwrap(), -r);
            let (sx, sy) = (Standardized::new(&x).unwrap(), Standardized::new(&y).unwrap());
            prop_assert!((sx.correlation(&sy) - r).abs() < 1e-12);
        }

        #[test]
        fn gaussian_mi_even_monotone(a in 0.0f64..0.999, b in 0.0f64..0.999) {
            prop_assert_eq!(gaussian_mi(a).unwrap(), gaussian_mi(-a).unwrap());
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if lo < hi {
                prop_assert!(gaussian_mi(lo).unwrap() < gaussian_mi(hi).unwrap());
            }
            prop_assert!(gaussian_mi(a).unwrap() >= 0.0);
        }
    }
}
