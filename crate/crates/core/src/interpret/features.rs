//! Feature matrices for external embedding tools.

use std::fmt;
use std::str::FromStr;

use crate::bin::{decode, Writer};
use crate::data::EpochSet;
use crate::error::{invalid, MsnnError, Result};
use crate::model::MsnnModel;
use crate::par;

pub const FEATURE_MAGIC: &[u8; 4] = b"FEAT";
pub const FEATURE_VERSION: u16 = 1;

/// Which representation to export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureStage {
    /// Time-averaged output of spatial block `k` (1-based), `F_k` columns.
    Sst(usize),
    /// Pooled concatenation fed to the classifier, `ΣF_k` columns.
    GapConcat,
}

impl fmt::Display for FeatureStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureStage::Sst(k) => write!(f, "f{k}_sst"),
            FeatureStage::GapConcat => f.write_str("gap_concat"),
        }
    }
}

impl FromStr for FeatureStage {
    type Err = MsnnError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "gap_concat" || s == "gap" {
            return Ok(FeatureStage::GapConcat);
        }
        let k = s
            .strip_prefix('f')
            .and_then(|r| r.strip_suffix("_sst"))
            .or_else(|| s.strip_prefix("sst"))
            .and_then(|d| d.parse::<usize>().ok());
        match k {
            Some(k) if k >= 1 => Ok(FeatureStage::Sst(k)),
            _ => invalid(format!("unknown feature stage {s:?} (expected gap_concat or f<k>_sst)")),
        }
    }
}

/// Row-per-sample feature matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub stage: FeatureStage,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl FeatureMatrix {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for j in 0..self.dim() {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for (row, label) in self.rows.iter().zip(&self.labels) {
            out.push_str(&label.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Little-endian framed binary: stage name, row and column counts,
    /// `u32` labels, then row-major `f64` values.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(FEATURE_MAGIC, FEATURE_VERSION);
        w.short_str(&self.stage.to_string())?;
        w.u32(self.rows.len() as u32);
        w.u32(self.dim() as u32);
        for &l in &self.labels {
            w.u32(l as u32);
        }
        for r in &self.rows {
            w.f64s(r);
        }
        Ok(w.finish())
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        decode(buf, FEATURE_MAGIC, FEATURE_VERSION, |r| {
            let stage: FeatureStage = r.short_str()?.parse()?;
            let n = r.u32()? as usize;
            let d = r.u32()? as usize;
            let labels = (0..n).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let rows = (0..n).map(|_| r.f64s(d)).collect::<Result<Vec<_>>>()?;
            r.expect_end()?;
            Ok(FeatureMatrix { stage, rows, labels })
        })
    }
}

/// Eval-mode features of every epoch in `data` at `stage`.
pub fn export_features(model: &MsnnModel, data: &EpochSet, stage: FeatureStage) -> Result<FeatureMatrix> {
    let n = model.spatial.len();
    if let FeatureStage::Sst(k) = stage {
        if k == 0 || k > n {
            return invalid(format!("feature stage {stage} out of range: the model has {n} branches"));
        }
    }
    let rows = par::map(&data.epochs, |x| -> Result<Vec<f64>> {
        let inter = model.forward_one(x)?;
        Ok(match stage {
            FeatureStage::GapConcat => inter.gap,
            FeatureStage::Sst(k) => crate::layers::gap_forward(&inter.sst[k - 1])?,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix { stage, rows, labels: data.labels.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names() {
        assert_eq!("gap_concat".parse::<FeatureStage>().unwrap(), FeatureStage::GapConcat);
        assert_eq!("f2_sst".parse::<FeatureStage>().unwrap(), FeatureStage::Sst(2));
        assert_eq!("sst3".parse::<FeatureStage>().unwrap(), FeatureStage::Sst(3));
        assert!("f0_sst".parse::<FeatureStage>().is_err());
        assert!("logits".parse::<FeatureStage>().is_err());
        assert_eq!(FeatureStage::Sst(1).to_string().parse::<FeatureStage>().unwrap(), FeatureStage::Sst(1));
    }

    #[test]
    fn binary_round_trip_and_csv() {
        let m = FeatureMatrix {
            stage: FeatureStage::Sst(1),
            rows: vec![vec![0.5, -1.0], vec![2.0, 0.25]],
            labels: vec![0, 1],
        };
        assert_eq!(FeatureMatrix::from_bytes(&m.to_bytes().unwrap()).unwrap(), m);
        assert_eq!(m.to_csv(), "label,f0,f1\n0,0.5,-1\n1,2,0.25\n");
    }
}
