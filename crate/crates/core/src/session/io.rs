use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    segment_episodes, ArmState, BaseState, HandoverType, KeypointFrame, Otp, Quality, Result, RobotStatusFrame,
    RowAnnotation, SessionError, SessionRecord, FEATURES_PER_FRAME, NUM_KEYPOINTS,
};

const CHANNEL_NAMES: [&str; 4] = ["x", "y", "z", "c"];

fn keypoint_column(index: usize) -> String {
    format!("kp{:02}_{}", index / 4, CHANNEL_NAMES[index % 4])
}

fn canonical_columns() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..FEATURES_PER_FRAME).map(keypoint_column));
    for c in ["base_state", "arm_state", "otp_goal", "episode_id", "handover_type", "quality", "participant_id"] {
        cols.push(c.to_string());
    }
    cols
}

const REQUIRED_STATUS_ROLES: [&str; 4] = ["base_state", "arm_state", "otp_goal", "episode_id"];
const OPTIONAL_ROLES: [&str; 3] = ["handover_type", "quality", "participant_id"];

/// Maps external column names (and optionally cell values) onto canonical roles.
///
/// ```toml
/// [columns]
/// timestamp = "t"
/// nose_x = "kp00_x"
///
/// [values.base_state]
/// "0" = "at_storage"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    /// External name -> canonical role.
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
    /// Role -> (external token -> canonical token).
    #[serde(default)]
    pub values: BTreeMap<String, BTreeMap<String, String>>,
}

impl ColumnMap {
    /// Identity mapping for files already in the canonical schema.
    pub fn canonical() -> Self {
        let columns = canonical_columns().into_iter().map(|c| (c.clone(), c)).collect();
        Self { columns, values: BTreeMap::new() }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SessionError::ColumnMap(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    fn role_to_external(&self) -> Result<HashMap<&str, &str>> {
        let mut out = HashMap::new();
        for (ext, role) in &self.columns {
            if out.insert(role.as_str(), ext.as_str()).is_some() {
                return Err(SessionError::ColumnMap(format!("role `{role}` mapped twice")));
            }
        }
        Ok(out)
    }

    fn translate<'a>(&'a self, role: &str, value: &'a str) -> &'a str {
        self.values
            .get(role)
            .and_then(|m| m.get(value.trim()))
            .map(String::as_str)
            .unwrap_or(value)
    }
}

/// Reads a session CSV through `column_map`, validates it and segments episodes.
pub fn load_session(path: impl AsRef<Path>, column_map: &ColumnMap) -> Result<SessionRecord> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let roles = column_map.role_to_external()?;

    let locate = |role: &str| -> Result<usize> {
        let ext = roles.get(role).ok_or_else(|| SessionError::MissingColumn(role.to_string()))?;
        position.get(ext).copied().ok_or_else(|| SessionError::MissingColumn(format!("{role} (column `{ext}`)")))
    };
    let t_col = locate("t")?;
    let kp_cols = (0..FEATURES_PER_FRAME).map(|i| locate(&keypoint_column(i))).collect::<Result<Vec<_>>>()?;
    let status_cols = REQUIRED_STATUS_ROLES.iter().map(|r| locate(r)).collect::<Result<Vec<_>>>()?;
    let optional: HashMap<&str, usize> =
        OPTIONAL_ROLES.iter().filter_map(|r| locate(r).ok().map(|i| (*r, i))).collect();

    let mut frames = Vec::new();
    let mut robot = Vec::new();
    let mut annotations = Vec::new();
    let mut participant = None;
    let mut values = vec![0.0; FEATURES_PER_FRAME];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |col: usize, role: &str| -> Result<&str> {
            record
                .get(col)
                .map(|v| column_map.translate(role, v))
                .ok_or_else(|| SessionError::SchemaError(format!("row {row} has {} cells", record.len())))
        };
        let bad = |role: &str, value: &str| SessionError::BadCell { row, column: role.to_string(), value: value.to_string() };
        fn parse<T: std::str::FromStr>(v: &str) -> Option<T> {
            v.trim().parse().ok()
        }

        let t_raw = cell(t_col, "t")?;
        let t: f64 = parse(t_raw).ok_or_else(|| bad("t", t_raw))?;
        for (i, &col) in kp_cols.iter().enumerate() {
            let role = keypoint_column(i);
            let raw = cell(col, &role)?;
            values[i] = parse(raw).filter(|v: &f64| v.is_finite()).ok_or_else(|| bad(&role, raw))?;
        }
        let base_raw = cell(status_cols[0], "base_state")?;
        let base_state: BaseState = parse(base_raw).ok_or_else(|| bad("base_state", base_raw))?;
        let arm_raw = cell(status_cols[1], "arm_state")?;
        let arm_state: ArmState = parse(arm_raw).ok_or_else(|| bad("arm_state", arm_raw))?;
        let otp_raw = cell(status_cols[2], "otp_goal")?;
        let otp_goal = match otp_raw.trim() {
            "" | "none" => None,
            v => Some(parse::<Otp>(v).ok_or_else(|| bad("otp_goal", otp_raw))?),
        };
        let ep_raw = cell(status_cols[3], "episode_id")?;
        let episode_id: i64 = parse(ep_raw).ok_or_else(|| bad("episode_id", ep_raw))?;
        let handover_type = match optional.get("handover_type") {
            Some(&c) => {
                let raw = cell(c, "handover_type")?;
                parse(raw).ok_or_else(|| bad("handover_type", raw))?
            }
            None => HandoverType::Unknown,
        };
        let quality = match optional.get("quality") {
            Some(&c) => {
                let raw = cell(c, "quality")?;
                parse(raw).ok_or_else(|| bad("quality", raw))?
            }
            None => Quality::Unknown,
        };
        if participant.is_none() {
            if let Some(&c) = optional.get("participant_id") {
                let id = cell(c, "participant_id")?.trim();
                if !id.is_empty() {
                    participant = Some(id.to_string());
                }
            }
        }

        frames.push(KeypointFrame::from_features(t, &values)?);
        robot.push(RobotStatusFrame { t, base_state, arm_state, otp_goal });
        annotations.push(RowAnnotation { episode_id, handover_type, quality });
    }
    debug_assert!(frames.iter().all(|f| f.kp.len() == NUM_KEYPOINTS));

    let participant = participant
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_default();
    segment_episodes(&SessionRecord::new(participant, frames, robot, annotations)?)
}

pub fn load_session_canonical(path: impl AsRef<Path>) -> Result<SessionRecord> {
    load_session(path, &ColumnMap::canonical())
}

/// Writes the canonical session CSV. Floats use the shortest representation
/// that parses back to the same bits.
pub fn save_session(path: impl AsRef<Path>, session: &SessionRecord) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(canonical_columns())?;
    let mut row: Vec<String> = Vec::with_capacity(FEATURES_PER_FRAME + 7);
    for ((f, r), a) in session.frames().iter().zip(session.robot()).zip(session.annotations()) {
        row.clear();
        row.push(f.t.to_string());
        row.extend(f.features().iter().map(|v| v.to_string()));
        row.push(r.base_state.to_string());
        row.push(r.arm_state.to_string());
        row.push(r.otp_goal.map(|o| o.to_string()).unwrap_or_else(|| "none".into()));
        row.push(a.episode_id.to_string());
        row.push(a.handover_type.to_string());
        row.push(a.quality.to_string());
        row.push(session.participant_id.clone());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
