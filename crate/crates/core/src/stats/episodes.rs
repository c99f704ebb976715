use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::{Result, StatsError};
use crate::session::{EpisodeRecord, HandoverType, Otp, Quality, SessionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt(), n: values.len() })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// One participant's episode summary. Each percentage triple is taken over
/// the episodes where that attribute is known, and is `None` if none are.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantStats {
    pub participant_id: String,
    pub episodes: usize,
    pub otp_pct: Option<[f64; 3]>,
    pub type_pct: Option<[f64; 3]>,
    pub quality_pct: Option<[f64; 3]>,
    pub mean_duration: f64,
    pub mean_pause_work: f64,
    pub mean_pause_storage: f64,
}

const OTP_COLS: [&str; 3] = ["otp_left", "otp_middle", "otp_right"];
const TYPE_COLS: [&str; 3] = ["type_r2h", "type_h2r", "type_bidirectional"];
const QUALITY_COLS: [&str; 3] = ["quality_good", "quality_bad", "quality_neutral"];
const TIMING_COLS: [&str; 4] = ["episodes", "duration_s", "pause_work_s", "pause_storage_s"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeStatsTable {
    pub participants: Vec<ParticipantStats>,
}

fn percentages<T: Copy + PartialEq>(values: impl Iterator<Item = Option<T>>, classes: [T; 3]) -> Option<[f64; 3]> {
    let mut counts = [0usize; 3];
    for v in values.flatten() {
        if let Some(i) = classes.iter().position(|c| *c == v) {
            counts[i] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    (total > 0).then(|| counts.map(|c| 100.0 * c as f64 / total as f64))
}

fn mean_of(eps: &[&EpisodeRecord], f: impl Fn(&EpisodeRecord) -> f64) -> f64 {
    eps.iter().map(|e| f(e)).sum::<f64>() / eps.len() as f64
}

fn known_type(e: &EpisodeRecord) -> Option<HandoverType> {
    (e.handover_type != HandoverType::Unknown).then_some(e.handover_type)
}

fn known_quality(e: &EpisodeRecord) -> Option<Quality> {
    (e.quality != Quality::Unknown).then_some(e.quality)
}

/// Per-participant episode percentages and timing means. Sessions sharing a
/// participant id are pooled.
pub fn episode_stats(sessions: &[SessionRecord]) -> Result<EpisodeStatsTable> {
    let mut by_participant: BTreeMap<&str, Vec<&EpisodeRecord>> = BTreeMap::new();
    for s in sessions {
        if !s.episodes.is_empty() {
            by_participant.entry(s.participant_id.as_str()).or_default().extend(&s.episodes);
        }
    }
    if by_participant.is_empty() {
        return Err(StatsError::NoEpisodes);
    }
    let participants = by_participant
        .into_iter()
        .map(|(id, eps)| ParticipantStats {
            participant_id: id.to_string(),
            episodes: eps.len(),
            otp_pct: percentages(eps.iter().map(|e| e.otp()), [Otp::Left, Otp::Middle, Otp::Right]),
            type_pct: percentages(eps.iter().map(|e| known_type(e)), [HandoverType::R2H, HandoverType::H2R, HandoverType::Bidirectional]),
            quality_pct: percentages(eps.iter().map(|e| known_quality(e)), [Quality::Good, Quality::Bad, Quality::Neutral]),
            mean_duration: mean_of(&eps, |e| e.duration),
            mean_pause_work: mean_of(&eps, |e| e.pause_work),
            mean_pause_storage: mean_of(&eps, |e| e.pause_storage),
        })
        .collect();
    Ok(EpisodeStatsTable { participants })
}

impl ParticipantStats {
    fn row(&self) -> Vec<Option<f64>> {
        let triple = |t: Option<[f64; 3]>| -> Vec<Option<f64>> { (0..3).map(|i| t.map(|v| v[i])).collect() };
        let mut row = triple(self.otp_pct);
        row.extend(triple(self.type_pct));
        row.extend(triple(self.quality_pct));
        row.extend([Some(self.episodes as f64), Some(self.mean_duration), Some(self.mean_pause_work), Some(self.mean_pause_storage)]);
        row
    }
}

impl EpisodeStatsTable {
    pub fn columns() -> Vec<&'static str> {
        OTP_COLS.iter().chain(&TYPE_COLS).chain(&QUALITY_COLS).chain(&TIMING_COLS).copied().collect()
    }

    /// Mean ± population std across participants, per column, over the
    /// participants where the column is defined.
    pub fn aggregate(&self) -> Vec<(&'static str, Option<MeanStd>)> {
        let rows: Vec<Vec<Option<f64>>> = self.participants.iter().map(ParticipantStats::row).collect();
        Self::columns()
            .into_iter()
            .enumerate()
            .map(|(c, name)| {
                let values: Vec<f64> = rows.iter().filter_map(|r| r[c]).collect();
                (name, MeanStd::of(&values))
            })
            .collect()
    }

    pub fn aggregate_of(&self, column: &str) -> Option<MeanStd> {
        self.aggregate().into_iter().find(|(c, _)| *c == column).and_then(|(_, m)| m)
    }

    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let mut out = format!("participant,{}\n", Self::columns().join(","));
        for p in &self.participants {
            let cells: Vec<String> = p.row().into_iter().map(cell).collect();
            let _ = writeln!(out, "{},{}", p.participant_id, cells.join(","));
        }
        for (label, pick) in [("mean", 0), ("std", 1)] {
            let cells: Vec<String> = self
                .aggregate()
                .into_iter()
                .map(|(_, m)| cell(m.map(|m| if pick == 0 { m.mean } else { m.std })))
                .collect();
            let _ = writeln!(out, "{label},{}", cells.join(","));
        }
        out
    }

    /// Aligned plain-text table, one row per quantity, `mean ± std`.
    pub fn to_text(&self) -> String {
        let mut out = format!("Handover episodes ({} participants, mean ± std)\n", self.participants.len());
        for (name, m) in self.aggregate() {
            let value = m.map(|m| m.to_string()).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(out, "  {name:<20} {value:>18}");
        }
        out
    }
}
