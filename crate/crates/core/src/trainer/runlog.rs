use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

pub const RUNLOG_VERSION_LINE: &str = "# semisdf runlog v1";

/// One epoch of one phase. Empty cells mean "not computed this epoch".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLogRow {
    pub epoch: usize,
    pub phase: String,
    pub lr: Option<f64>,
    pub train_loss: Option<f64>,
    pub val_loss_teacher: Option<f64>,
    pub val_loss_student: Option<f64>,
    pub mean_w_pseudo: Option<f64>,
    pub min_w_pseudo: Option<f64>,
    pub max_w_pseudo: Option<f64>,
    pub m_base: Option<f64>,
    pub gamma: Option<f64>,
    pub m_effective: Option<f64>,
    pub reset_flag: Option<u8>,
    pub chamfer_x100: Option<f64>,
    pub iou_pct: Option<f64>,
    pub fscore_pct: Option<f64>,
    pub nc: Option<f64>,
}

impl RunLogRow {
    pub fn new(phase: &str, epoch: usize) -> Self {
        Self {
            epoch,
            phase: phase.to_owned(),
            ..Default::default()
        }
    }

    pub fn set_metrics(&mut self, m: &MetricsReport) {
        self.chamfer_x100 = Some(m.chamfer_x100);
        self.iou_pct = Some(m.iou_pct);
        self.fscore_pct = Some(m.fscore_pct);
        self.nc = Some(m.normal_consistency);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub rows: Vec<RunLogRow>,
}

impl RunLog {
    pub fn push(&mut self, row: RunLogRow) {
        self.rows.push(row);
    }

    pub fn phase<'a>(&'a self, phase: &'a str) -> impl Iterator<Item = &'a RunLogRow> {
        self.rows.iter().filter(move |r| r.phase == phase)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.serialize(RunLogRow::default())?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::Config(e.to_string()))?;
        let body = if self.rows.is_empty() {
            // header only
            body.lines().next().unwrap_or_default().to_owned() + "\n"
        } else {
            body
        };
        Ok(format!("{RUNLOG_VERSION_LINE}\n{body}"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        if text.lines().next() != Some(RUNLOG_VERSION_LINE) {
            return Err(Error::Config("run log lacks the version line".into()));
        }
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<std::result::Result<Vec<RunLogRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?).map_err(|e| match e {
            Error::Config(reason) => Error::Format {
                path: path.to_owned(),
                reason,
            },
            other => other,
        })
    }
}
