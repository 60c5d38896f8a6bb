//! Synthetic grids with known dependence structure, plus the confounds
//! (seasonal variance, trends, quadratic coupling) used to probe the test.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{NodeMeta, TimeSeriesGrid};
use crate::rng::{derive_stream, stream_rng};

/// Default ratio between the largest and smallest seasonal scale factor.
pub const DEFAULT_VARIANCE_RATIO: f64 = 3.0;
/// Default total trend rise, in noise standard deviations over the record.
pub const DEFAULT_TREND_SIGMAS: f64 = 2.0;

fn normals(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed);
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Independent draws from a bivariate normal with unit variances and
/// correlation `rho`.
pub fn gen_gaussian_pair(rho: f64, len: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Parameter(format!("|rho| must be below 1, got {rho}")));
    }
    let mut rng = stream_rng(seed);
    let c = (1.0 - rho * rho).sqrt();
    let mut x = Vec::with_capacity(len);
    let mut y = Vec::with_capacity(len);
    for _ in 0..len {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        x.push(a);
        y.push(rho * a + c * b);
    }
    Ok((x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovProfile {
    Identity,
    /// exp(−d / length_scale) with d the mesh distance between nodes.
    SpatialDecay(f64),
}

/// Square-ish mesh of `n` distinct coordinates.
pub fn mesh_nodes(n: usize) -> Vec<NodeMeta> {
    let side = ((n as f64).sqrt().ceil() as usize).max(1);
    let lat_step = (170.0 / side as f64).min(2.5);
    let lon_step = (360.0 / side as f64).min(2.5);
    (0..n)
        .map(|k| {
            let (row, col) = (k / side, k % side);
            NodeMeta::new(85.0 - row as f64 * lat_step, col as f64 * lon_step, k)
        })
        .collect()
}

fn mesh_position(k: usize, n: usize) -> (f64, f64) {
    let side = ((n as f64).sqrt().ceil() as usize).max(1);
    ((k / side) as f64, (k % side) as f64)
}

/// Gaussian grid with the given spatial covariance and AR(1) dynamics of
/// coefficient `ar`; every node has unit marginal variance.
pub fn gen_gaussian_grid(
    cov: CovProfile,
    n: usize,
    len: usize,
    ar: f64,
    seed: u64,
) -> Result<TimeSeriesGrid> {
    if !(ar.abs() < 1.0) {
        return Err(Error::Parameter(format!("|ar| must be below 1, got {ar}")));
    }
    let chol = match cov {
        CovProfile::Identity => None,
        CovProfile::SpatialDecay(scale) => {
            if !(scale > 0.0) {
                return Err(Error::Parameter(format!("length scale must be positive, got {scale}")));
            }
            let sigma = DMatrix::from_fn(n, n, |i, j| {
                let (a, b) = (mesh_position(i, n), mesh_position(j, n));
                let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                (-d / scale).exp()
            });
            let l = sigma
                .cholesky()
                .ok_or_else(|| Error::Parameter("covariance is not positive definite".into()))?;
            Some(l.l())
        }
    };
    // innovations, time-major: z[t * n + i]
    let z = normals(len * n, seed);
    let innovation = |t: usize| -> Vec<f64> {
        let zt = &z[t * n..(t + 1) * n];
        match &chol {
            None => zt.to_vec(),
            Some(l) => (0..n)
                .map(|i| (0..=i).map(|j| l[(i, j)] * zt[j]).sum())
                .collect(),
        }
    };
    let scale = (1.0 - ar * ar).sqrt();
    let mut values = vec![0.0; n * len];
    let mut state = innovation(0);
    for t in 0..len {
        if t > 0 {
            let e = innovation(t);
            for (s, e) in state.iter_mut().zip(e) {
                *s = ar * *s + scale * e;
            }
        }
        for (i, &s) in state.iter().enumerate() {
            values[i * len + t] = s;
        }
    }
    TimeSeriesGrid::from_node_major(values, len, mesh_nodes(n), 1, 12, "synthetic-gaussian")
}

/// Scale factors rising smoothly from 1 to `ratio` and back over one period,
/// peaking at phase 0.
pub fn seasonal_profile(period: usize, ratio: f64) -> Vec<f64> {
    (0..period)
        .map(|p| {
            let c = (2.0 * std::f64::consts::PI * p as f64 / period as f64).cos();
            1.0 + (ratio - 1.0) * (1.0 + c) / 2.0
        })
        .collect()
}

/// Multiplies sample t by `profile[(t + phase_offset) mod period]`.
pub fn apply_seasonal_variance(series: &[f64], profile: &[f64], phase_offset: usize) -> Result<Vec<f64>> {
    if profile.is_empty() || profile.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
        return Err(Error::Parameter("seasonal profile must be strictly positive".into()));
    }
    let period = profile.len();
    Ok(series
        .iter()
        .enumerate()
        .map(|(t, v)| v * profile[(t + phase_offset) % period])
        .collect())
}

/// Adds `slope · t`.
pub fn apply_trend(series: &[f64], slope: f64) -> Vec<f64> {
    series
        .iter()
        .enumerate()
        .map(|(t, v)| v + slope * t as f64)
        .collect()
}

/// y = standardized(x²) + noise_scale·ε with ε standard normal.
pub fn quadratic_couple(x: &[f64], noise_scale: f64, seed: u64) -> Result<Vec<f64>> {
    if !(noise_scale >= 0.0) {
        return Err(Error::Parameter(format!("noise scale must be >= 0, got {noise_scale}")));
    }
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let n = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / n;
    let sd = (sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let eps = normals(x.len(), seed);
    Ok(sq
        .iter()
        .zip(eps)
        .map(|(v, e)| (v - mean) / sd + noise_scale * e)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    GaussianIid,
    GaussianAr1,
    QuadraticCoupled,
    SeasonalVariance,
    Trended,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<f64>,
}

/// Full description of a synthetic grid, as accepted by `extranormal synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    #[serde(rename = "T")]
    pub len: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub params: SynthParams,
    pub seed: u64,
    #[serde(default = "default_period")]
    pub period: usize,
}

fn default_period() -> usize {
    12
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if let Some(ar) = p.ar {
            if !(ar.abs() < 1.0) {
                return Err(Error::Parameter(format!("|ar| must be below 1, got {ar}")));
            }
        }
        if let Some(l) = p.length_scale {
            if !(l > 0.0) {
                return Err(Error::Parameter("length_scale must be positive".into()));
            }
        }
        if let Some(r) = p.ratio {
            if !(r > 0.0) {
                return Err(Error::Parameter("ratio must be positive".into()));
            }
        }
        if let Some(s) = p.noise_scale {
            if !(s >= 0.0) {
                return Err(Error::Parameter("noise_scale must be >= 0".into()));
            }
        }
        if self.period == 0 {
            return Err(Error::Parameter("period must be positive".into()));
        }
        if self.kind == SynthKind::QuadraticCoupled && !self.n.is_multiple_of(2) {
            return Err(Error::Parameter("quadratic_coupled needs an even node count".into()));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<TimeSeriesGrid> {
        self.validate()?;
        let (n, len, p) = (self.n, self.len, &self.params);
        let node_seed = |i: usize| derive_stream(self.seed, i as u64);
        let series: Vec<Vec<f64>> = match self.kind {
            SynthKind::GaussianIid => (0..n).map(|i| normals(len, node_seed(i))).collect(),
            SynthKind::GaussianAr1 => {
                let cov = p.length_scale.map_or(CovProfile::Identity, CovProfile::SpatialDecay);
                let g = gen_gaussian_grid(cov, n, len, p.ar.unwrap_or(0.5), self.seed)?;
                g.iter_series().map(<[f64]>::to_vec).collect()
            }
            SynthKind::QuadraticCoupled => {
                let noise = p.noise_scale.unwrap_or(0.2);
                let mut out = Vec::with_capacity(n);
                for k in 0..n / 2 {
                    let x = normals(len, node_seed(2 * k));
                    let y = quadratic_couple(&x, noise, node_seed(2 * k + 1))?;
                    out.push(x);
                    out.push(y);
                }
                out
            }
            SynthKind::SeasonalVariance => {
                let profile = seasonal_profile(self.period, p.ratio.unwrap_or(DEFAULT_VARIANCE_RATIO));
                (0..n)
                    .map(|i| {
                        let offset = (i % 2) * (self.period / 2);
                        apply_seasonal_variance(&normals(len, node_seed(i)), &profile, offset)
                    })
                    .collect::<Result<_>>()?
            }
            SynthKind::Trended => {
                let slope = p.sigmas.unwrap_or(DEFAULT_TREND_SIGMAS) / (len.max(2) - 1) as f64;
                (0..n)
                    .map(|i| apply_trend(&normals(len, node_seed(i)), slope))
                    .collect()
            }
        };
        let label = format!("synthetic-{}", serde_json::to_value(self.kind)?.as_str().unwrap_or(""));
        TimeSeriesGrid::from_series(series, mesh_nodes(n), 1, self.period, label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::pearson;
    use crate::preprocess::{detrend_linear, normalize_seasonal_variance, phase_std, remove_annual_cycle};

    #[test]
    fn pair_correlation_converges() {
        let (x, y) = gen_gaussian_pair(0.5, 100_000, 3).unwrap();
        assert!((pearson(&x, &y).unwrap() - 0.5).abs() < 0.01);
        let (x, y) = gen_gaussian_pair(0.999999, 720, 4).unwrap();
        assert!(pearson(&x, &y).unwrap() > 0.99);
        assert!(gen_gaussian_pair(1.0, 10, 0).is_err());
        assert_eq!(gen_gaussian_pair(0.3, 50, 8).unwrap(), gen_gaussian_pair(0.3, 50, 8).unwrap());
    }

    #[test]
    fn identity_grid_is_uncorrelated() {
        let g = gen_gaussian_grid(CovProfile::Identity, 10, 720, 0.0, 1).unwrap();
        let bound = 4.0 / (720f64).sqrt();
        for i in 0..10 {
            for j in i + 1..10 {
                assert!(pearson(g.series(i), g.series(j)).unwrap().abs() < bound);
            }
        }
    }

    #[test]
    fn tiny_length_scale_behaves_like_identity() {
        let a = gen_gaussian_grid(CovProfile::SpatialDecay(1e-3), 9, 200, 0.0, 7).unwrap();
        let b = gen_gaussian_grid(CovProfile::Identity, 9, 200, 0.0, 7).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ar_coefficient_shows_in_lag_one() {
        let lag1 = |s: &[f64]| pearson(&s[..s.len() - 1], &s[1..]).unwrap();
        let g = gen_gaussian_grid(CovProfile::SpatialDecay(2.0), 4, 5000, 0.9, 2).unwrap();
        let w = gen_gaussian_grid(CovProfile::SpatialDecay(2.0), 4, 5000, 0.0, 2).unwrap();
        for i in 0..4 {
            assert!((lag1(g.series(i)) - 0.9).abs() < 0.05);
            assert!(lag1(w.series(i)).abs() < 0.05);
        }
        assert!(gen_gaussian_grid(CovProfile::Identity, 4, 50, 1.0, 2).is_err());
    }

    #[test]
    fn seasonal_variance_definitions() {
        let x: Vec<f64> = (0..24).map(|t| t as f64 - 11.5).collect();
        assert_eq!(apply_seasonal_variance(&x, &[1.0; 12], 3).unwrap(), x);
        let mut profile = vec![1.0; 12];
        profile[0] = 2.0;
        let y = apply_seasonal_variance(&x, &profile, 0).unwrap();
        for t in 0..24 {
            let expect = if t % 12 == 0 { 2.0 * x[t] } else { x[t] };
            assert_eq!(y[t], expect);
        }
        assert!(apply_seasonal_variance(&x, &[1.0, 0.0], 0).is_err());
        let p = seasonal_profile(12, 3.0);
        assert!((p[0] - 3.0).abs() < 1e-15 && (p[6] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn seasonal_variance_then_normalization_restores_unit_std() {
        let spec = SynthSpec {
            kind: SynthKind::SeasonalVariance,
            len: 240,
            n: 2,
            params: SynthParams::default(),
            seed: 5,
            period: 12,
        };
        let g = remove_annual_cycle(&spec.generate().unwrap()).unwrap();
        let n = normalize_seasonal_variance(&g).unwrap();
        for s in n.iter_series() {
            for std in phase_std(&n, s) {
                assert!((std - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trend_round_trip() {
        let x: Vec<f64> = normals(100, 1);
        assert_eq!(apply_trend(&x, 0.0), x);
        let nodes = mesh_nodes(2);
        let base = TimeSeriesGrid::from_series(vec![x.clone(), x.iter().map(|v| -v).collect()], nodes.clone(), 1, 12, "")
            .unwrap();
        let base = detrend_linear(&base).unwrap();
        let trended = TimeSeriesGrid::from_series(
            base.iter_series().map(|s| apply_trend(s, 0.37)).collect(),
            nodes,
            1,
            12,
            "",
        )
        .unwrap();
        let back = detrend_linear(&trended).unwrap();
        for (a, b) in back.values().iter().zip(base.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_coupling_hides_from_correlation() {
        let x = normals(720, 17);
        let y = quadratic_couple(&x, 0.0, 1).unwrap();
        assert!(pearson(&x, &y).unwrap().abs() < 0.15);
        assert!(quadratic_couple(&x, -1.0, 1).is_err());
        // symmetric input gives exactly zero sample correlation
        let sym: Vec<f64> = x.iter().chain(x.iter().map(|v| -v).collect::<Vec<_>>().iter()).cloned().collect();
        let ys = quadratic_couple(&sym, 0.0, 1).unwrap();
        assert!(pearson(&sym, &ys).unwrap().abs() < 1e-12);
    }

    #[test]
    fn spec_json_round_trip_and_determinism() {
        let text = r#"{"kind":"gaussian_ar1","T":48,"N":6,"params":{"ar":0.5,"length_scale":2.0},"seed":3}"#;
        let spec: SynthSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.period, 12);
        assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
        let bad = r#"{"kind":"gaussian_ar1","T":48,"N":6,"params":{"ar":1.5},"seed":3}"#;
        let spec: SynthSpec = serde_json::from_str(bad).unwrap();
        assert!(matches!(spec.generate(), Err(Error::Parameter(_))));
        for kind in ["gaussian_iid", "quadratic_coupled", "seasonal_variance", "trended"] {
            let text = format!(r#"{{"kind":"{kind}","T":48,"N":4,"seed":1}}"#);
            let spec: SynthSpec = serde_json::from_str(&text).unwrap();
            let g = spec.generate().unwrap();
            assert_eq!((g.len(), g.n_nodes()), (48, 4));
        }
    }
}
