use std::path::Path;

use super::{FeatureWindow, LabeledWindow, OtpLabel, TimingLabel, WINDOW, WINDOW_CELLS};
use crate::session::FEATURES_PER_FRAME;

/// Integer class of a label, as fed to a network head.
pub trait ClassLabel {
    fn class_index(&self) -> usize;
}

impl ClassLabel for TimingLabel {
    fn class_index(&self) -> usize {
        self.value as usize
    }
}

impl ClassLabel for OtpLabel {
    fn class_index(&self) -> usize {
        self.0.index()
    }
}

impl ClassLabel for usize {
    fn class_index(&self) -> usize {
        *self
    }
}

fn header() -> Vec<String> {
    let ch = ["x", "y", "z", "c"];
    let mut cols: Vec<String> = (0..WINDOW_CELLS)
        .map(|i| {
            let (row, cell) = (i / FEATURES_PER_FRAME, i % FEATURES_PER_FRAME);
            format!("r{row}_kp{:02}_{}", cell / 4, ch[cell % 4])
        })
        .collect();
    cols.push("label".into());
    cols
}

/// 501-column CSV: the window cells row-major, oldest row first, then the class index.
pub fn write_training_set<L: ClassLabel>(path: impl AsRef<Path>, samples: &[LabeledWindow<L>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header())?;
    let mut row = Vec::with_capacity(WINDOW_CELLS + 1);
    for s in samples {
        row.clear();
        row.extend(s.window.values().iter().map(|v| v.to_string()));
        row.push(s.label.class_index().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_training_set(path: impl AsRef<Path>) -> csv::Result<Vec<LabeledWindow<usize>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| {
            csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("row {i}: {what}")))
        };
        if rec.len() != WINDOW_CELLS + 1 {
            return Err(bad(&format!("{} columns", rec.len())));
        }
        let values = rec
            .iter()
            .take(WINDOW_CELLS)
            .map(|v| v.parse::<f64>().map_err(|_| bad(v)))
            .collect::<csv::Result<Vec<_>>>()?;
        let label = rec[WINDOW_CELLS].parse::<usize>().map_err(|_| bad(&rec[WINDOW_CELLS]))?;
        let mut window = FeatureWindow::from_values(values).map_err(|e| bad(&e.to_string()))?;
        window.step = i;
        out.push(LabeledWindow { window, label });
    }
    debug_assert!(out.iter().all(|s| s.window.values().len() == WINDOW * FEATURES_PER_FRAME));
    Ok(out)
}
