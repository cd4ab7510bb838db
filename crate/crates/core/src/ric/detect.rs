//! Anomaly detectors over the twin's per-UE history.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::twin::{Observation, TwinState, UeKey, UeTwin};
use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnomalyKind {
    ConnectivityDrop,
    KpiOutlier,
    TwinDivergence,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 3] = [
        AnomalyKind::ConnectivityDrop,
        AnomalyKind::KpiOutlier,
        AnomalyKind::TwinDivergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnomalyKind::ConnectivityDrop => "ConnectivityDrop",
            AnomalyKind::KpiOutlier => "KpiOutlier",
            AnomalyKind::TwinDivergence => "TwinDivergence",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The samples that triggered a detection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub from: SimTime,
    pub to: SimTime,
    pub dl_mbps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anomaly {
    pub ue: UeKey,
    pub kind: AnomalyKind,
    pub detected_at: SimTime,
    pub score: f64,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Consecutive samples a condition must hold before it is reported.
    pub consecutive: usize,
    pub z_threshold: f64,
    /// Samples of history the z-score is computed against.
    pub z_history: usize,
    /// Fewer prior samples than this gives no z-score.
    pub z_min_history: usize,
    /// Relative floor on the standard deviation, times max(|mean|, 1).
    pub sigma_floor: f64,
    pub divergence_threshold: f64,
    /// Denominator floor for the divergence ratio, in Mbps.
    pub divergence_floor_mbps: f64,
    /// One report per (UE, kind) within this window.
    pub suppression_us: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            consecutive: 3,
            z_threshold: 3.0,
            z_history: 50,
            z_min_history: 5,
            sigma_floor: 1e-3,
            divergence_threshold: 0.2,
            divergence_floor_mbps: 1.0,
            suppression_us: 1_000_000,
        }
    }
}

/// z-score of `x` against `prior` (population statistics).
pub fn z_score(x: f64, prior: &[f64], cfg: &DetectorConfig) -> Option<f64> {
    if prior.len() < cfg.z_min_history.max(1) {
        return None;
    }
    let n = prior.len() as f64;
    let mean = prior.iter().sum::<f64>() / n;
    let var = prior.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sigma = var.sqrt().max(cfg.sigma_floor * mean.abs().max(1.0));
    Some((x - mean) / sigma)
}

/// Relative gap between measured and predicted DL.
pub fn divergence(o: &Observation, cfg: &DetectorConfig) -> Option<f64> {
    o.predicted_dl
        .map(|p| (o.dl_mbps - p).abs() / p.max(cfg.divergence_floor_mbps))
}

/// A pluggable per-UE test over the twin history. Returns a score when the
/// condition holds on the latest sample.
pub trait Detector {
    fn kind(&self) -> AnomalyKind;
    fn evaluate(&self, ue: &UeTwin, cfg: &DetectorConfig) -> Option<f64>;
}

/// Indices of the last `n` samples, or `None` if there are fewer.
fn tail(ue: &UeTwin, n: usize) -> Option<std::ops::Range<usize>> {
    let len = ue.history.len();
    (n > 0 && len >= n).then(|| len - n..len)
}

pub struct ConnectivityDrop;

impl Detector for ConnectivityDrop {
    fn kind(&self) -> AnomalyKind {
        AnomalyKind::ConnectivityDrop
    }

    fn evaluate(&self, ue: &UeTwin, cfg: &DetectorConfig) -> Option<f64> {
        if !ue.expected_active {
            return None;
        }
        let run = ue.history.iter().rev().take_while(|o| !o.connected).count();
        (run >= cfg.consecutive).then_some(run as f64)
    }
}

pub struct KpiOutlier;

impl Detector for KpiOutlier {
    fn kind(&self) -> AnomalyKind {
        AnomalyKind::KpiOutlier
    }

    fn evaluate(&self, ue: &UeTwin, cfg: &DetectorConfig) -> Option<f64> {
        let dl: Vec<f64> = ue.history.iter().map(|o| o.dl_mbps).collect();
        let mut score = f64::INFINITY;
        for i in tail(ue, cfg.consecutive)? {
            let prior = &dl[i.saturating_sub(cfg.z_history)..i];
            let z = z_score(dl[i], prior, cfg)?.abs();
            if z <= cfg.z_threshold {
                return None;
            }
            score = score.min(z);
        }
        Some(score)
    }
}

pub struct TwinDivergence;

impl Detector for TwinDivergence {
    fn kind(&self) -> AnomalyKind {
        AnomalyKind::TwinDivergence
    }

    fn evaluate(&self, ue: &UeTwin, cfg: &DetectorConfig) -> Option<f64> {
        let mut score = f64::INFINITY;
        for i in tail(ue, cfg.consecutive)? {
            let r = divergence(&ue.history[i], cfg)?;
            if r <= cfg.divergence_threshold {
                return None;
            }
            score = score.min(r);
        }
        Some(score)
    }
}

pub fn standard_detectors() -> Vec<Box<dyn Detector + Send>> {
    vec![
        Box::new(ConnectivityDrop),
        Box::new(KpiOutlier),
        Box::new(TwinDivergence),
    ]
}

/// Runs the detectors after each twin update and applies duplicate
/// suppression.
pub struct AnomalyEngine {
    pub cfg: DetectorConfig,
    detectors: Vec<Box<dyn Detector + Send>>,
    last_emit: BTreeMap<(UeKey, AnomalyKind), SimTime>,
    last_seen: BTreeMap<UeKey, SimTime>,
}

impl AnomalyEngine {
    pub fn new(cfg: DetectorConfig) -> Self {
        Self::with_detectors(cfg, standard_detectors())
    }

    pub fn with_detectors(cfg: DetectorConfig, detectors: Vec<Box<dyn Detector + Send>>) -> Self {
        AnomalyEngine {
            cfg,
            detectors,
            last_emit: BTreeMap::new(),
            last_seen: BTreeMap::new(),
        }
    }

    /// Evaluate every UE that has a sample newer than the last call.
    pub fn detect_anomalies(&mut self, twin: &TwinState) -> Vec<Anomaly> {
        let mut out = Vec::new();
        for ue in twin.ues() {
            let Some(latest) = ue.latest() else { continue };
            if self.last_seen.get(&ue.key) == Some(&latest.at) {
                continue;
            }
            self.last_seen.insert(ue.key, latest.at);
            for d in &self.detectors {
                let Some(score) = d.evaluate(ue, &self.cfg) else {
                    continue;
                };
                let k = (ue.key, d.kind());
                if let Some(prev) = self.last_emit.get(&k) {
                    if (latest.at - *prev) < self.cfg.suppression_us {
                        continue;
                    }
                }
                self.last_emit.insert(k, latest.at);
                let n = self.cfg.consecutive.min(ue.history.len());
                let span: Vec<&Observation> = ue.history.iter().skip(ue.history.len() - n).collect();
                out.push(Anomaly {
                    ue: ue.key,
                    kind: d.kind(),
                    detected_at: latest.at,
                    score,
                    evidence: Evidence {
                        from: span.first().map_or(latest.at, |o| o.at),
                        to: latest.at,
                        dl_mbps: span.iter().map(|o| o.dl_mbps).collect(),
                    },
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core5g::SliceId;
    use crate::e2::{KpiEntry, Metric, Scope};
    use crate::radio::{RadioCalibration, SliceShare, TddConfig};
    use crate::ran::CellConfig;
    use crate::ric::twin::TwinConfig;
    use crate::sim::EntityId;

    const DU: crate::core5g::NodeId = EntityId(1);

    fn twin() -> TwinState {
        let mut t = TwinState::new(TwinConfig::default(), 100_000);
        t.configure_cell(
            DU,
            CellConfig::new(40.0, TddConfig::DL_CENTRIC, RadioCalibration::default()),
            vec![SliceShare {
                slice_id: SliceId(1),
                share: 1.0,
            }],
        );
        t
    }

    fn push(t: &mut TwinState, i: u64, connected: bool, dl: f64) {
        let scope = Scope::Ue {
            ue: 1,
            slice: SliceId(1),
        };
        let entries = [
            KpiEntry::new(Metric::Connected, scope, if connected { 1.0 } else { 0.0 }),
            KpiEntry::new(Metric::UlThroughput, scope, 0.0),
            KpiEntry::new(Metric::DlThroughput, scope, dl),
        ];
        t.ingest(DU, SimTime::from_millis(100 * i), &entries);
    }

    fn run(samples: &[(bool, f64)]) -> Vec<Anomaly> {
        let mut t = twin();
        let mut eng = AnomalyEngine::new(DetectorConfig::default());
        let mut all = Vec::new();
        for (i, &(c, dl)) in samples.iter().enumerate() {
            push(&mut t, i as u64 + 1, c, dl);
            all.extend(eng.detect_anomalies(&t));
        }
        all
    }

    #[test]
    fn steady_stream_is_quiet() {
        assert!(run(&vec![(true, 10.0); 100]).is_empty());
    }

    #[test]
    fn three_disconnected_samples_raise_one_drop() {
        let mut s = vec![(true, 10.0); 20];
        s.extend(vec![(false, 0.0); 5]);
        let a = run(&s);
        let drops: Vec<&Anomaly> = a
            .iter()
            .filter(|x| x.kind == AnomalyKind::ConnectivityDrop)
            .collect();
        assert_eq!(drops.len(), 1);
        assert_eq!(drops[0].detected_at, SimTime::from_millis(2300));
        assert_eq!(drops[0].score, 3.0);
        assert_eq!(drops[0].evidence.from, SimTime::from_millis(2100));
    }

    #[test]
    fn two_disconnected_samples_are_not_enough() {
        let mut s = vec![(true, 10.0); 20];
        s.extend(vec![(false, 0.0); 2]);
        s.extend(vec![(true, 10.0); 5]);
        assert!(run(&s)
            .iter()
            .all(|x| x.kind != AnomalyKind::ConnectivityDrop));
    }

    #[test]
    fn halved_rate_is_an_outlier_and_a_divergence() {
        let mut s = vec![(true, 10.0); 30];
        s.extend(vec![(true, 5.0); 5]);
        let a = run(&s);
        let kinds: Vec<AnomalyKind> = a.iter().map(|x| x.kind).collect();
        assert!(kinds.contains(&AnomalyKind::KpiOutlier));
        assert!(kinds.contains(&AnomalyKind::TwinDivergence));
        for x in &a {
            assert_eq!(x.detected_at, SimTime::from_millis(3300));
            assert!(x.evidence.from <= x.detected_at && x.detected_at <= x.evidence.to);
        }
    }

    #[test]
    fn suppression_is_per_kind_and_one_second() {
        let mut s = vec![(true, 10.0); 20];
        s.extend(vec![(false, 0.0); 30]);
        let drops: Vec<SimTime> = run(&s)
            .into_iter()
            .filter(|x| x.kind == AnomalyKind::ConnectivityDrop)
            .map(|x| x.detected_at)
            .collect();
        // First at sample 23, then every 10 samples (1 s) while it persists.
        assert_eq!(
            drops,
            vec![
                SimTime::from_millis(2300),
                SimTime::from_millis(3300),
                SimTime::from_millis(4300)
            ]
        );
    }

    #[test]
    fn z_score_floor_and_history() {
        let cfg = DetectorConfig::default();
        assert_eq!(z_score(1.0, &[1.0; 4], &cfg), None);
        let z = z_score(11.0, &[10.0; 10], &cfg).unwrap();
        assert!((z - 100.0).abs() < 1e-9);
    }
}
