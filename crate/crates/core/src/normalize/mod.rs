//! Incremental per-feature statistics and feature scaling.

mod moments;
mod sketch;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use moments::Moments;
pub use sketch::QuantileSketch;

use crate::features::{Feature, FeatureSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum NormalizationMode {
    #[default]
    #[serde(rename = "off")]
    Off,
    #[serde(rename = "minmax")]
    MinMax,
    #[serde(rename = "minmax-no-outliers", alias = "minmax_no_outliers")]
    MinMaxNoOutliers,
    #[serde(rename = "zscore")]
    ZScore,
}

impl NormalizationMode {
    pub const ALL: [NormalizationMode; 4] =
        [NormalizationMode::Off, NormalizationMode::MinMax, NormalizationMode::MinMaxNoOutliers, NormalizationMode::ZScore];

    pub fn as_str(self) -> &'static str {
        match self {
            NormalizationMode::Off => "off",
            NormalizationMode::MinMax => "minmax",
            NormalizationMode::MinMaxNoOutliers => "minmax-no-outliers",
            NormalizationMode::ZScore => "zscore",
        }
    }
}

impl fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormalizationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "off" | "none" => Ok(NormalizationMode::Off),
            "minmax" => Ok(NormalizationMode::MinMax),
            "minmax-no-outliers" => Ok(NormalizationMode::MinMaxNoOutliers),
            "zscore" | "z-score" => Ok(NormalizationMode::ZScore),
            other => Err(format!("unknown normalization mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub moments: Moments,
    pub min: f64,
    pub max: f64,
    pub sketch: QuantileSketch,
}

impl Default for FeatureStats {
    fn default() -> Self {
        Self { moments: Moments::default(), min: f64::INFINITY, max: f64::NEG_INFINITY, sketch: QuantileSketch::default() }
    }
}

impl FeatureStats {
    pub fn n(&self) -> u64 {
        self.moments.weight as u64
    }

    pub fn update(&mut self, v: f64) {
        if !v.is_finite() {
            return;
        }
        self.moments.add(v, 1.0);
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self.sketch.add(v);
    }

    pub fn merge(&mut self, other: &FeatureStats) {
        self.moments.merge(&other.moments);
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.sketch.merge(&other.sketch);
    }

    pub fn summary(&self) -> Option<FeatureSummary> {
        (self.n() > 0).then(|| FeatureSummary {
            n: self.n(),
            min: self.min,
            max: self.max,
            mean: self.moments.mean,
            std: self.moments.std_dev(),
            q25: self.sketch.quantile(0.25).unwrap_or(self.min),
            q75: self.sketch.quantile(0.75).unwrap_or(self.max),
        })
    }
}

/// Running statistics for every feature of a layout, in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    features: Vec<FeatureStats>,
}

impl RunningStats {
    pub fn new(len: usize) -> Self {
        Self { features: vec![FeatureStats::default(); len] }
    }

    pub fn from_features(features: Vec<FeatureStats>) -> Self {
        Self { features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Number of vectors seen (the count of the first feature).
    pub fn n(&self) -> u64 {
        self.features.first().map_or(0, FeatureStats::n)
    }

    pub fn feature(&self, i: usize) -> &FeatureStats {
        &self.features[i]
    }

    pub fn update(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.features.len());
        for (s, &v) in self.features.iter_mut().zip(values) {
            s.update(v);
        }
    }

    pub fn merge(&mut self, other: &RunningStats) {
        debug_assert_eq!(self.features.len(), other.features.len());
        for (a, b) in self.features.iter_mut().zip(&other.features) {
            a.merge(b);
        }
    }

    pub fn snapshot(&self) -> NormalizationSnapshot {
        NormalizationSnapshot { features: self.features.iter().map(FeatureStats::summary).collect() }
    }
}

/// Summary values used for scaling one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    #[serde(default)]
    pub n: u64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub q25: f64,
    pub q75: f64,
}

impl FeatureSummary {
    pub fn scale(&self, v: f64, mode: NormalizationMode) -> f64 {
        let unit = |lo: f64, hi: f64| {
            if hi > lo {
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        };
        match mode {
            NormalizationMode::Off => v,
            NormalizationMode::MinMax => unit(self.min, self.max),
            NormalizationMode::MinMaxNoOutliers => {
                let iqr = self.q75 - self.q25;
                let lo = (self.q25 - 1.5 * iqr).max(self.min);
                let hi = (self.q75 + 1.5 * iqr).min(self.max);
                unit(lo, hi)
            }
            NormalizationMode::ZScore => {
                if self.std > 0.0 && self.std.is_finite() {
                    (v - self.mean) / self.std
                } else {
                    0.0
                }
            }
        }
    }
}

/// Immutable per-feature summaries published at a barrier; `None` marks a
/// feature with no observations yet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSnapshot {
    pub features: Vec<Option<FeatureSummary>>,
}

impl NormalizationSnapshot {
    pub fn empty(len: usize) -> Self {
        Self { features: vec![None; len] }
    }

    pub fn is_ready(&self) -> bool {
        !self.features.is_empty() && self.features.iter().all(Option::is_some)
    }

    /// Scales `values` in place. Returns `false` if some feature had no
    /// statistics and was passed through unchanged.
    pub fn apply(&self, values: &mut [f64], mode: NormalizationMode) -> bool {
        if mode == NormalizationMode::Off {
            return true;
        }
        let mut complete = true;
        for (i, v) in values.iter_mut().enumerate() {
            match self.features.get(i).copied().flatten() {
                Some(s) if s.n > 0 || s.max >= s.min => *v = s.scale(*v, mode),
                _ => complete = false,
            }
        }
        complete
    }
}

/// Scales a feature vector; features without statistics pass through and a
/// warning is logged.
pub fn normalize(values: &mut [f64], snapshot: &NormalizationSnapshot, mode: NormalizationMode) {
    if !snapshot.apply(values, mode) {
        log::warn!("normalization statistics missing for some features; passing values through");
    }
}

#[derive(Debug, Error)]
pub enum StatsFileError {
    #[error("stats file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("stats file key `{0}` is neither a feature index nor a feature name")]
    Key(String),
    #[error("stats for feature `{0}` are not finite or have max < min")]
    Value(String),
}

/// Parses a stats file: a JSON object mapping feature index (or name) to
/// `{min, max, mean, std, q25, q75}`. Features absent from the file, or not in
/// `layout`, are ignored.
pub fn parse_stats_file(text: &str, layout: &FeatureSet) -> Result<NormalizationSnapshot, StatsFileError> {
    let raw: BTreeMap<String, FeatureSummary> = serde_json::from_str(text)?;
    let mut snap = NormalizationSnapshot::empty(layout.len());
    for (key, mut summary) in raw {
        let feature = match key.parse::<usize>() {
            Ok(i) => Feature::ALL.get(i).copied(),
            Err(_) => key.parse::<Feature>().ok(),
        }
        .ok_or_else(|| StatsFileError::Key(key.clone()))?;
        let vals = [summary.min, summary.max, summary.mean, summary.std, summary.q25, summary.q75];
        if vals.iter().any(|v| !v.is_finite()) || summary.max < summary.min {
            return Err(StatsFileError::Value(key));
        }
        summary.n = summary.n.max(1);
        if let Some(pos) = layout.position(feature) {
            snap.features[pos] = Some(summary);
        }
    }
    Ok(snap)
}

/// Inverse of [`parse_stats_file`], keyed by canonical feature index.
pub fn write_stats_file(snapshot: &NormalizationSnapshot, layout: &FeatureSet) -> String {
    let map: BTreeMap<usize, FeatureSummary> = layout
        .features()
        .iter()
        .zip(&snapshot.features)
        .filter_map(|(f, s)| s.map(|s| (f.index(), s)))
        .collect();
    serde_json::to_string_pretty(&map).expect("summaries serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats_of(xs: &[f64]) -> FeatureStats {
        let mut s = FeatureStats::default();
        xs.iter().for_each(|&x| s.update(x));
        s
    }

    fn summary(min: f64, max: f64, mean: f64, std: f64) -> FeatureSummary {
        FeatureSummary { n: 10, min, max, mean, std, q25: min, q75: max }
    }

    #[test]
    fn single_value() {
        let s = stats_of(&[2.5]);
        assert_eq!((s.n(), s.min, s.max, s.moments.mean, s.moments.m2), (1, 2.5, 2.5, 2.5, 0.0));
    }

    #[test]
    fn merge_identity_and_concatenation() {
        let a = stats_of(&[1.0, 2.0]);
        let mut x = a.clone();
        x.merge(&FeatureStats::default());
        assert_eq!(x.summary(), a.summary());

        let mut ab = a.clone();
        ab.merge(&stats_of(&[3.0]));
        let all = stats_of(&[1.0, 2.0, 3.0]);
        assert_eq!((ab.n(), ab.min, ab.max), (3, 1.0, 3.0));
        assert!((ab.moments.mean - all.moments.mean).abs() < 1e-12);
        assert!((ab.moments.m2 - all.moments.m2).abs() < 1e-12);
    }

    #[test]
    fn scaling_examples() {
        let s = summary(2.0, 6.0, 4.0, 1.0);
        assert_eq!(s.scale(2.0, NormalizationMode::MinMax), 0.0);
        assert_eq!(s.scale(6.0, NormalizationMode::MinMax), 1.0);
        assert_eq!(s.scale(100.0, NormalizationMode::MinMax), 1.0);
        assert_eq!(summary(-4.0, 4.0, 0.0, 2.0).scale(4.0, NormalizationMode::ZScore), 2.0);
        assert_eq!(s.scale(5.0, NormalizationMode::Off), 5.0);
        let c = summary(3.0, 3.0, 3.0, 0.0);
        for m in [NormalizationMode::MinMax, NormalizationMode::MinMaxNoOutliers, NormalizationMode::ZScore] {
            assert_eq!(c.scale(3.0, m), 0.0);
        }
    }

    #[test]
    fn outlier_fence_narrows_range() {
        let mut xs: Vec<f64> = (0..1000).map(|i| (i % 100) as f64).collect();
        xs.push(10_000.0);
        let s = stats_of(&xs).summary().unwrap();
        let plain = s.scale(99.0, NormalizationMode::MinMax);
        let fenced = s.scale(99.0, NormalizationMode::MinMaxNoOutliers);
        assert!(plain < 0.02);
        assert!(fenced > 0.6, "{fenced}");
        assert_eq!(s.scale(10_000.0, NormalizationMode::MinMaxNoOutliers), 1.0);
    }

    #[test]
    fn zscore_of_seen_sample_is_standard() {
        let xs: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 1000) as f64 * 0.37 + 5.0).collect();
        let s = stats_of(&xs).summary().unwrap();
        let zs: Vec<f64> = xs.iter().map(|&x| s.scale(x, NormalizationMode::ZScore)).collect();
        let mut m = Moments::default();
        zs.iter().for_each(|&z| m.add(z, 1.0));
        assert!(m.mean.abs() < 1e-6);
        assert!((m.variance() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn missing_stats_pass_through() {
        let snap = NormalizationSnapshot::empty(2);
        let mut v = [5.0, 7.0];
        assert!(!snap.apply(&mut v, NormalizationMode::MinMax));
        assert_eq!(v, [5.0, 7.0]);
    }

    #[test]
    fn stats_file_round_trip() {
        let layout = FeatureSet::default();
        let text = r#"{"0": {"min": 0, "max": 10, "mean": 5, "std": 1, "q25": 2, "q75": 8}, "hashtag_count": {"min": 0, "max": 4, "mean": 1, "std": 1, "q25": 0, "q75": 2}}"#;
        let snap = parse_stats_file(text, &layout).unwrap();
        assert_eq!(snap.features[0].unwrap().max, 10.0);
        let pos = layout.position("hashtag_count".parse().unwrap()).unwrap();
        assert_eq!(snap.features[pos].unwrap().max, 4.0);
        let again = parse_stats_file(&write_stats_file(&snap, &layout), &layout).unwrap();
        assert_eq!(again, snap);
        assert!(matches!(parse_stats_file(r#"{"99": {"min":0,"max":1,"mean":0,"std":0,"q25":0,"q75":1}}"#, &layout), Err(StatsFileError::Key(_))));
        assert!(parse_stats_file("[]", &layout).is_err());
    }

    proptest! {
        #[test]
        fn minmax_is_bounded(xs in proptest::collection::vec(-1e6f64..1e6, 1..100), v in -1e7f64..1e7) {
            let s = stats_of(&xs).summary().unwrap();
            for m in [NormalizationMode::MinMax, NormalizationMode::MinMaxNoOutliers] {
                let y = s.scale(v, m);
                prop_assert!((0.0..=1.0).contains(&y));
            }
        }

        #[test]
        fn merge_is_associative(xs in proptest::collection::vec(-1e3f64..1e3, 3..200), a in 0usize..1000, b in 0usize..1000) {
            let (i, j) = { let (i, j) = (a % xs.len(), b % xs.len()); (i.min(j), i.max(j)) };
            let (p, q, r) = (stats_of(&xs[..i]), stats_of(&xs[i..j]), stats_of(&xs[j..]));
            let mut left = p.clone(); left.merge(&q); left.merge(&r);
            let mut qr = q.clone(); qr.merge(&r);
            let mut right = p.clone(); right.merge(&qr);
            prop_assert_eq!(left.n(), right.n());
            prop_assert_eq!((left.min, left.max), (right.min, right.max));
            prop_assert!((left.moments.mean - right.moments.mean).abs() < 1e-9);
            prop_assert!((left.moments.m2 - right.moments.m2).abs() < 1e-9 * (1.0 + left.moments.m2));
        }
    }
}
