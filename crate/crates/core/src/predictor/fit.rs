use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{featurize, keys, OpenMLPerfRecord};
use crate::par;
use crate::scenario::ScenarioKind;

/// Groups with at least this many distinct model sizes get a regression.
pub const MIN_REGRESSION_SIZES: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FitError {
    #[error("no usable data: need at least one featurizable Tokens/s record")]
    NoUsableData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub params_b: f64,
    pub bytes_per_param: f64,
    pub throughput: f64,
    pub ttft_p99_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Regression,
    NearestNeighbor,
}

/// `ln(throughput) = intercept + log_params_coef * ln(params_b) + bytes_coef * bytes_per_param`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLinear {
    pub intercept: f64,
    pub log_params_coef: f64,
    pub bytes_coef: f64,
}

impl LogLinear {
    pub fn eval(&self, params_b: f64, bytes_per_param: f64) -> f64 {
        (self.intercept + self.log_params_coef * params_b.ln() + self.bytes_coef * bytes_per_param)
            .exp()
    }
}

/// Fitted model of one (accelerator, scenario) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFit {
    pub accelerator_key: String,
    pub scenario: ScenarioKind,
    pub points: Vec<TrainingPoint>,
    pub regression: Option<LogLinear>,
    pub params_range: (f64, f64),
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Ordinary least squares on log throughput. The data-type column is dropped
/// when the group has a single data type, since it is then unidentifiable.
pub fn fit_log_linear(points: &[TrainingPoint]) -> Option<LogLinear> {
    let with_bytes = distinct(points.iter().map(|p| p.bytes_per_param)) > 1;
    let cols = if with_bytes { 3 } else { 2 };
    let x = DMatrix::from_fn(points.len(), cols, |i, j| match j {
        0 => 1.0,
        1 => points[i].params_b.ln(),
        _ => points[i].bytes_per_param,
    });
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.throughput.ln()));
    let beta = x.svd(true, true).solve(&y, 1e-12).ok()?;
    let fit = LogLinear {
        intercept: beta[0],
        log_params_coef: beta[1],
        bytes_coef: if with_bytes { beta[2] } else { 0.0 },
    };
    [fit.intercept, fit.log_params_coef, fit.bytes_coef]
        .iter()
        .all(|c| c.is_finite())
        .then_some(fit)
}

impl GroupFit {
    fn new(accelerator_key: String, scenario: ScenarioKind, points: Vec<TrainingPoint>) -> Self {
        let lo = points
            .iter()
            .map(|p| p.params_b)
            .fold(f64::INFINITY, f64::min);
        let hi = points
            .iter()
            .map(|p| p.params_b)
            .fold(f64::NEG_INFINITY, f64::max);
        let regression = (distinct(points.iter().map(|p| p.params_b)) >= MIN_REGRESSION_SIZES)
            .then(|| fit_log_linear(&points))
            .flatten();
        Self {
            accelerator_key,
            scenario,
            points,
            regression,
            params_range: (lo, hi),
        }
    }

    pub fn method(&self) -> Method {
        if self.regression.is_some() {
            Method::Regression
        } else {
            Method::NearestNeighbor
        }
    }

    pub fn support(&self) -> usize {
        self.points.len()
    }

    /// Per-accelerator throughput estimate in tokens/s.
    pub fn estimate(&self, params_b: f64, bytes_per_param: f64) -> f64 {
        match &self.regression {
            Some(law) => law.eval(params_b, bytes_per_param),
            None => self.nearest_neighbor(params_b, bytes_per_param),
        }
    }

    /// Inverse-distance weighting in `(ln params_b, bytes_per_param)`; an
    /// exact match returns the mean of the matching points.
    fn nearest_neighbor(&self, params_b: f64, bytes_per_param: f64) -> f64 {
        let q = params_b.ln();
        let dists: Vec<f64> = self
            .points
            .iter()
            .map(|p| (p.params_b.ln() - q).hypot(p.bytes_per_param - bytes_per_param))
            .collect();
        let exact: Vec<f64> = self
            .points
            .iter()
            .zip(&dists)
            .filter(|(_, d)| **d < 1e-12)
            .map(|(p, _)| p.throughput)
            .collect();
        if !exact.is_empty() {
            return exact.iter().sum::<f64>() / exact.len() as f64;
        }
        let (num, den) = self
            .points
            .iter()
            .zip(&dists)
            .fold((0.0, 0.0), |(n, d), (p, dist)| {
                (n + p.throughput / dist, d + 1.0 / dist)
            });
        num / den
    }

    pub fn is_extrapolation(&self, params_b: f64) -> bool {
        params_b < self.params_range.0 || params_b > self.params_range.1
    }

    /// Mean observed p99 TTFT of the group, if any record carries one.
    pub fn ttft_p99_ms(&self) -> Option<f64> {
        let xs: Vec<f64> = self.points.iter().filter_map(|p| p.ttft_p99_ms).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Fitted state: one model per (accelerator, scenario). Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    groups: Vec<GroupFit>,
    pub used_records: usize,
    pub skipped_records: usize,
}

/// A labelled training point, ready for grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledPoint {
    pub accelerator_key: String,
    pub scenario: ScenarioKind,
    pub point: TrainingPoint,
}

fn usable(record: &OpenMLPerfRecord) -> Option<LabelledPoint> {
    let f = featurize(record).ok()?;
    let throughput = f
        .per_accel_throughput
        .filter(|t| *t > 0.0 && t.is_finite())?;
    (f.params_b > 0.0).then(|| LabelledPoint {
        accelerator_key: f.accelerator_key,
        scenario: f.scenario,
        point: TrainingPoint {
            params_b: f.params_b,
            bytes_per_param: f.bytes_per_param,
            throughput,
            ttft_p99_ms: record.get_f64(keys::TTFT_P99_MS),
        },
    })
}

impl Predictor {
    /// Fits over every record that featurizes with a Tokens/s result; the rest
    /// are counted in `skipped_records`.
    pub fn fit(records: &[OpenMLPerfRecord]) -> Result<Self, FitError> {
        let labelled: Vec<Option<LabelledPoint>> = par::map(records, usable);
        let skipped = labelled.iter().filter(|l| l.is_none()).count();
        let mut p = Self::fit_points(labelled.into_iter().flatten().collect())?;
        p.skipped_records = skipped;
        Ok(p)
    }

    pub fn fit_points(points: Vec<LabelledPoint>) -> Result<Self, FitError> {
        if points.is_empty() {
            return Err(FitError::NoUsableData);
        }
        let used = points.len();
        let mut grouped: BTreeMap<(String, ScenarioKind), Vec<TrainingPoint>> = BTreeMap::new();
        for lp in points {
            grouped
                .entry((lp.accelerator_key, lp.scenario))
                .or_default()
                .push(lp.point);
        }
        let entries: Vec<((String, ScenarioKind), Vec<TrainingPoint>)> =
            grouped.into_iter().collect();
        let groups = par::map(&entries, |((key, scenario), pts)| {
            GroupFit::new(key.clone(), *scenario, pts.clone())
        });
        Ok(Self {
            groups,
            used_records: used,
            skipped_records: 0,
        })
    }

    pub fn groups(&self) -> &[GroupFit] {
        &self.groups
    }

    pub fn group(&self, accelerator_key: &str, scenario: ScenarioKind) -> Option<&GroupFit> {
        self.groups
            .iter()
            .find(|g| g.accelerator_key == accelerator_key && g.scenario == scenario)
    }

    /// Accelerators with a fitted group for `scenario`, sorted.
    pub fn accelerators(&self, scenario: ScenarioKind) -> Vec<String> {
        self.groups
            .iter()
            .filter(|g| g.scenario == scenario)
            .map(|g| g.accelerator_key.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law_points(sizes: &[f64], bpp: f64) -> Vec<TrainingPoint> {
        sizes
            .iter()
            .map(|&p| TrainingPoint {
                params_b: p,
                bytes_per_param: bpp,
                throughput: 1000.0 / p,
                ttft_p99_ms: None,
            })
            .collect()
    }

    #[test]
    fn recovers_inverse_law() {
        let law = fit_log_linear(&law_points(&[1.0, 2.0, 4.0, 8.0, 16.0], 2.0)).unwrap();
        assert!((law.log_params_coef + 1.0).abs() < 1e-9);
        assert!((law.eval(5.0, 2.0) - 200.0).abs() < 1e-6);
    }

    #[test]
    fn recovers_bytes_term() {
        // throughput = 1000 / p * exp(-0.5 * bpp)
        let mut pts = Vec::new();
        for &bpp in &[1.0, 2.0, 4.0] {
            for &p in &[1.0, 3.0, 9.0] {
                pts.push(TrainingPoint {
                    params_b: p,
                    bytes_per_param: bpp,
                    throughput: 1000.0 / p * (-0.5 * bpp).exp(),
                    ttft_p99_ms: None,
                });
            }
        }
        let law = fit_log_linear(&pts).unwrap();
        assert!((law.bytes_coef + 0.5).abs() < 1e-9);
        assert!((law.log_params_coef + 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_sizes_fall_back_to_neighbors() {
        let g = GroupFit::new(
            "A".into(),
            ScenarioKind::Offline,
            law_points(&[1.0, 4.0], 2.0),
        );
        assert_eq!(g.method(), Method::NearestNeighbor);
        assert_eq!(g.estimate(4.0, 2.0), 250.0);
        // equidistant in log space -> plain mean
        let mid = g.estimate(2.0, 2.0);
        assert!((mid - (1000.0 + 250.0) / 2.0).abs() < 1e-9);
        assert!(g.is_extrapolation(8.0));
        assert!(!g.is_extrapolation(2.0));
    }

    #[test]
    fn empty_fit_errors() {
        assert_eq!(Predictor::fit(&[]), Err(FitError::NoUsableData));
    }
}
