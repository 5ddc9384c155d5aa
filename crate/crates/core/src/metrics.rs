//! Attack-detection error rates over score files.
//!
//! At threshold `t` a sample is rejected as an attack when `score >= t`.
//! APCER is the share of attacks accepted (`score < t`), BPCER the share of
//! bona fide samples rejected. Operating points are evaluated at `-inf`, every
//! distinct score, and `+inf`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Label, MorphMethod};
use crate::scorer::ScoreFile;

/// APCER targets of the reporting grid.
pub const APCER_TARGETS: [f64; 4] = [0.001, 0.01, 0.1, 0.2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("score set needs at least one attack and one bona fide sample")]
    SingleClassFile,
    #[error("APCER target {0} outside (0, 1)")]
    Target(f64),
}

/// Sorted scores of both classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSets {
    bona: Vec<f64>,
    attack: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub apcer: f64,
    pub bpcer: f64,
}

/// Operating points in increasing threshold order, with the integer counts
/// they were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<OperatingPoint>,
    /// Attacks accepted at each point.
    accepted_attacks: Vec<u64>,
    /// Bona fide samples rejected at each point.
    rejected_bona: Vec<u64>,
    n_attack: u64,
    n_bona: u64,
}

impl ScoreSets {
    pub fn new(mut bona: Vec<f64>, mut attack: Vec<f64>) -> Result<Self, MetricsError> {
        if bona.is_empty() || attack.is_empty() {
            return Err(MetricsError::SingleClassFile);
        }
        bona.sort_by(f64::total_cmp);
        attack.sort_by(f64::total_cmp);
        Ok(Self { bona, attack })
    }

    pub fn from_file(file: &ScoreFile) -> Result<Self, MetricsError> {
        Self::new(file.bona_scores(), file.attack_scores())
    }

    pub fn bona(&self) -> &[f64] {
        &self.bona
    }

    pub fn attack(&self) -> &[f64] {
        &self.attack
    }

    pub fn rates(&self, threshold: f64) -> (f64, f64) {
        let accepted = self.attack.partition_point(|&s| s < threshold);
        let rejected = self.bona.len() - self.bona.partition_point(|&s| s < threshold);
        (accepted as f64 / self.attack.len() as f64, rejected as f64 / self.bona.len() as f64)
    }

    pub fn roc(&self) -> RocCurve {
        let (na, nb) = (self.attack.len(), self.bona.len());
        let mut thresholds = Vec::with_capacity(na + nb + 2);
        thresholds.push(f64::NEG_INFINITY);
        let (mut i, mut j) = (0, 0);
        while i < na || j < nb {
            let next = match (self.attack.get(i), self.bona.get(j)) {
                (Some(&a), Some(&b)) => a.min(b),
                (Some(&a), None) => a,
                (None, Some(&b)) => b,
                (None, None) => unreachable!(),
            };
            thresholds.push(next);
            while i < na && self.attack[i] == next {
                i += 1;
            }
            while j < nb && self.bona[j] == next {
                j += 1;
            }
        }
        thresholds.push(f64::INFINITY);

        let mut curve = RocCurve {
            points: Vec::with_capacity(thresholds.len()),
            accepted_attacks: Vec::with_capacity(thresholds.len()),
            rejected_bona: Vec::with_capacity(thresholds.len()),
            n_attack: na as u64,
            n_bona: nb as u64,
        };
        let (mut ia, mut ib) = (0usize, 0usize);
        for &t in &thresholds {
            while ia < na && self.attack[ia] < t {
                ia += 1;
            }
            while ib < nb && self.bona[ib] < t {
                ib += 1;
            }
            let rejected = (nb - ib) as u64;
            curve.accepted_attacks.push(ia as u64);
            curve.rejected_bona.push(rejected);
            curve.points.push(OperatingPoint {
                threshold: t,
                apcer: ia as f64 / na as f64,
                bpcer: rejected as f64 / nb as f64,
            });
        }
        curve
    }
}

impl RocCurve {
    /// Crossing of APCER and BPCER, linearly interpolated between the two
    /// straddling operating points; an exact tie is returned as is.
    pub fn eer(&self) -> f64 {
        let (na, nb) = (self.n_attack as i128, self.n_bona as i128);
        // Sign of apcer - bpcer in exact integer arithmetic.
        let diff = |k: usize| self.accepted_attacks[k] as i128 * nb - self.rejected_bona[k] as i128 * na;
        for k in 0..self.points.len() {
            let d = diff(k);
            if d == 0 {
                return self.points[k].apcer;
            }
            if d > 0 {
                let (p, q) = (self.points[k - 1], self.points[k]);
                let (dp, dq) = (p.apcer - p.bpcer, q.apcer - q.bpcer);
                let s = -dp / (dq - dp);
                return p.apcer + s * (q.apcer - p.apcer);
            }
        }
        unreachable!("the +inf point has apcer 1 and bpcer 0")
    }

    /// Trapezoid area under `1 - bpcer` against `apcer`, computed on counts.
    pub fn auc(&self) -> f64 {
        let nb = self.n_bona as u128;
        let mut twice_area: u128 = 0;
        for k in 1..self.points.len() {
            let da = (self.accepted_attacks[k] - self.accepted_attacks[k - 1]) as u128;
            let h = (nb - self.rejected_bona[k - 1] as u128) + (nb - self.rejected_bona[k] as u128);
            twice_area += da * h;
        }
        twice_area as f64 / (2 * self.n_attack as u128 * nb) as f64
    }

    /// Lowest BPCER over operating points with APCER at most `target`.
    pub fn bpcer_at_apcer(&self, target: f64) -> f64 {
        self.points.iter().filter(|p| p.apcer <= target).map(|p| p.bpcer).fold(1.0, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,apcer,bpcer\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.apcer, p.bpcer));
        }
        out
    }
}

pub fn compute_rates(file: &ScoreFile, threshold: f64) -> Result<(f64, f64), MetricsError> {
    Ok(ScoreSets::from_file(file)?.rates(threshold))
}

pub fn roc(file: &ScoreFile) -> Result<RocCurve, MetricsError> {
    Ok(ScoreSets::from_file(file)?.roc())
}

pub fn eer(file: &ScoreFile) -> Result<f64, MetricsError> {
    Ok(roc(file)?.eer())
}

pub fn auc(file: &ScoreFile) -> Result<f64, MetricsError> {
    Ok(roc(file)?.auc())
}

pub fn bpcer_at_apcer(file: &ScoreFile, target: f64) -> Result<f64, MetricsError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(MetricsError::Target(target));
    }
    Ok(roc(file)?.bpcer_at_apcer(target))
}

/// BPCER percentages at the four reporting APCER targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpcerGrid {
    #[serde(rename = "0.10%")]
    pub at_0_1: f64,
    #[serde(rename = "1.00%")]
    pub at_1: f64,
    #[serde(rename = "10.00%")]
    pub at_10: f64,
    #[serde(rename = "20.00%")]
    pub at_20: f64,
}

impl BpcerGrid {
    pub fn from_array(v: [f64; 4]) -> Self {
        Self { at_0_1: v[0], at_1: v[1], at_10: v[2], at_20: v[3] }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.at_0_1, self.at_1, self.at_10, self.at_20]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub auc_percent: f64,
    pub eer_percent: f64,
    pub bpcer_at_apcer: BpcerGrid,
}

impl MetricBundle {
    pub fn from_sets(sets: &ScoreSets) -> Self {
        let curve = sets.roc();
        Self {
            auc_percent: 100.0 * curve.auc(),
            eer_percent: 100.0 * curve.eer(),
            bpcer_at_apcer: BpcerGrid::from_array(APCER_TARGETS.map(|t| 100.0 * curve.bpcer_at_apcer(t))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub detector: String,
    #[serde(flatten)]
    pub overall: MetricBundle,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_method: BTreeMap<MorphMethod, MetricBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Overall metrics and, when `group_by_method`, one bundle per attack method
/// present, each scored against the full bona fide set.
pub fn evaluate(file: &ScoreFile, dataset: &str, detector: &str, group_by_method: bool) -> Result<EvalReport, MetricsError> {
    let overall = MetricBundle::from_sets(&ScoreSets::from_file(file)?);
    let mut per_method = BTreeMap::new();
    if group_by_method {
        let bona = file.bona_scores();
        for m in MorphMethod::ATTACKS {
            let attack: Vec<f64> =
                file.records.iter().filter(|r| r.label == Label::Attack && r.morph_method == m).map(|r| r.score).collect();
            if attack.is_empty() {
                continue;
            }
            per_method.insert(m, MetricBundle::from_sets(&ScoreSets::new(bona.clone(), attack)?));
        }
    }
    Ok(EvalReport {
        dataset: dataset.to_string(),
        detector: detector.to_string(),
        overall,
        per_method,
        seed: None,
        config_hash: None,
    })
}
