//! Versioned binary checkpoint.
//!
//! ```text
//! "MSNN" | version u16
//! config: u32 byte length | UTF-8 key = value lines
//! params: u32 count | per array: u16 name length | name | u8 ndim | u32 dims… | f64 LE data
//! crc32 (over everything above)
//! ```

use std::path::Path;

use super::{MsnnConfig, MsnnModel};
use crate::bin::{decode, utf8, Reader, Writer};
use crate::error::{MsnnError, Result};
use crate::kv::KvDoc;

pub const MAGIC: &[u8; 4] = b"MSNN";
pub const VERSION: u16 = 1;

fn config_text(model: &MsnnModel) -> String {
    let mut doc = model.config.to_kv("");
    doc.set("bn_calibrated", model.is_calibrated());
    doc.render()
}

/// Serialises a model to bytes.
pub fn write_checkpoint(model: &MsnnModel) -> Result<Vec<u8>> {
    let mut w = Writer::new(MAGIC, VERSION);
    let text = config_text(model);
    w.u32(text.len() as u32);
    w.bytes(text.as_bytes());
    let params = model.params();
    w.u32(params.len() as u32);
    for p in params {
        w.short_str(&p.name)?;
        w.u8(p.shape.len() as u8);
        for d in &p.shape {
            w.u32(*d as u32);
        }
        w.f64s(&p.data);
    }
    Ok(w.finish())
}

/// Config-only file: header and config block with no parameter section.
pub fn write_config_only(model: &MsnnModel) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    let text = config_text(model);
    w.u32(text.len() as u32);
    w.bytes(text.as_bytes());
    w.finish()
}

fn parse(r: &mut Reader<'_>) -> Result<MsnnModel> {
    let n = r.u32()? as usize;
    let doc = KvDoc::parse(&utf8(r.bytes(n)?)?)?;
    let config = MsnnConfig::from_kv(&doc, "")?;
    let calibrated: bool = doc.parse_value("bn_calibrated")?.unwrap_or(false);
    if r.remaining_body() == 0 {
        return Err(MsnnError::MissingParameters);
    }
    let mut model = MsnnModel::build(config)?;
    let count = r.u32()? as usize;
    let mut seen = vec![false; model.params().len()];
    for _ in 0..count {
        let name = r.short_str()?;
        let ndim = r.u8()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data = r.f64s(len)?;
        let mut slots = model.params_mut();
        let Some(i) = slots.iter().position(|p| p.name == name) else {
            return Err(MsnnError::Format(format!("unknown parameter {name:?}")));
        };
        if slots[i].shape != shape {
            return Err(MsnnError::Format(format!(
                "parameter {name:?} has shape {shape:?}, config implies {:?}",
                slots[i].shape
            )));
        }
        slots[i].data = data;
        seen[i] = true;
    }
    r.expect_end()?;
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(MsnnError::Format(format!("parameter {:?} missing", model.params()[i].name)));
    }
    model.set_calibrated(calibrated);
    Ok(model)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<MsnnModel> {
    decode(bytes, MAGIC, VERSION, parse)
}

pub fn save(model: &MsnnModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_checkpoint(model)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<MsnnModel> {
    read_checkpoint(&std::fs::read(path)?)
}
