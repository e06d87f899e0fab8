//! Binary epoch (`EPCH`) and continuous-record (`CREC`) files.
//!
//! ```text
//! EPCH | u16 version | u32 n_trials | u32 n_c | u32 n_T | f64 fs | u16 n_o | u8 paradigm
//!      | n_c × (u16 len, UTF-8 name) | n_trials × u16 label | f64 LE payload, trial-major | crc32
//!
//! CREC | u16 version | u32 n_c | u64 n_samples | f64 fs | n_c × (u16 len, UTF-8 name)
//!      | u32 n_annotations | (u64 onset, u64 offset, u16 label)… | f64 LE payload, channel-major | crc32
//! ```

use std::path::Path;

use super::{Annotation, ContinuousRecord, EpochSet, Paradigm};
use crate::bin::{decode, Writer};
use crate::error::{MsnnError, Result};
use crate::tensor::Tensor;

pub const EPOCH_MAGIC: &[u8; 4] = b"EPCH";
pub const EPOCH_VERSION: u16 = 1;
pub const RECORD_MAGIC: &[u8; 4] = b"CREC";
pub const RECORD_VERSION: u16 = 1;

fn count<T: TryFrom<usize>>(v: usize, what: &str) -> Result<T> {
    T::try_from(v).map_err(|_| MsnnError::Format(format!("{what} = {v} does not fit the header field")))
}

pub fn epochs_to_bytes(set: &EpochSet) -> Result<Vec<u8>> {
    set.validate()?;
    let mut w = Writer::new(EPOCH_MAGIC, EPOCH_VERSION);
    w.u32(count(set.len(), "n_trials")?);
    w.u32(count(set.n_channels(), "n_channels")?);
    w.u32(count(set.n_times(), "n_times")?);
    w.f64(set.fs);
    w.u16(count(set.n_classes, "n_classes")?);
    w.u8(set.paradigm.tag());
    for name in &set.channel_names {
        w.short_str(name)?;
    }
    for &l in &set.labels {
        w.u16(count(l, "label")?);
    }
    for e in &set.epochs {
        w.f64s(e.data());
    }
    Ok(w.finish())
}

pub fn epochs_from_bytes(bytes: &[u8]) -> Result<EpochSet> {
    decode(bytes, EPOCH_MAGIC, EPOCH_VERSION, |r| {
        let n_trials = r.u32()? as usize;
        let n_c = r.u32()? as usize;
        let n_t = r.u32()? as usize;
        let fs = r.f64()?;
        let n_classes = r.u16()? as usize;
        let paradigm = Paradigm::from_tag(r.u8()?)?;
        let names = (0..n_c).map(|_| r.short_str()).collect::<Result<Vec<_>>>()?;
        let labels = (0..n_trials).map(|_| r.u16().map(usize::from)).collect::<Result<Vec<_>>>()?;
        let epochs = (0..n_trials)
            .map(|_| Tensor::from_vec([n_c, n_t, 1], r.f64s(n_c * n_t)?))
            .collect::<Result<Vec<_>>>()?;
        r.expect_end()?;
        Ok((epochs, labels, fs, names, n_classes, paradigm))
    })
    .and_then(|(epochs, labels, fs, names, n_classes, paradigm)| {
        EpochSet::new(epochs, labels, fs, names, n_classes, paradigm)
    })
}

pub fn write_epochs(path: impl AsRef<Path>, set: &EpochSet) -> Result<()> {
    std::fs::write(path, epochs_to_bytes(set)?)?;
    Ok(())
}

pub fn read_epochs(path: impl AsRef<Path>) -> Result<EpochSet> {
    epochs_from_bytes(&std::fs::read(path)?)
}

pub fn record_to_bytes(rec: &ContinuousRecord) -> Result<Vec<u8>> {
    let mut w = Writer::new(RECORD_MAGIC, RECORD_VERSION);
    w.u32(count(rec.n_channels(), "n_channels")?);
    w.u64(rec.n_samples() as u64);
    w.f64(rec.fs());
    for name in rec.channel_names() {
        w.short_str(name)?;
    }
    w.u32(count(rec.annotations().len(), "n_annotations")?);
    for a in rec.annotations() {
        w.u64(a.onset as u64);
        w.u64(a.offset as u64);
        w.u16(count(a.label, "label")?);
    }
    for row in rec.samples() {
        w.f64s(row);
    }
    Ok(w.finish())
}

pub fn record_from_bytes(bytes: &[u8]) -> Result<ContinuousRecord> {
    decode(bytes, RECORD_MAGIC, RECORD_VERSION, |r| {
        let n_c = r.u32()? as usize;
        let n = usize::try_from(r.u64()?).map_err(|_| MsnnError::Format("sample count overflows".into()))?;
        let fs = r.f64()?;
        let names = (0..n_c).map(|_| r.short_str()).collect::<Result<Vec<_>>>()?;
        let n_ann = r.u32()? as usize;
        let anns = (0..n_ann)
            .map(|_| {
                Ok(Annotation { onset: r.u64()? as usize, offset: r.u64()? as usize, label: r.u16()? as usize })
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = (0..n_c).map(|_| r.f64s(n)).collect::<Result<Vec<_>>>()?;
        r.expect_end()?;
        Ok((rows, fs, names, anns))
    })
    .and_then(|(rows, fs, names, anns)| ContinuousRecord::new(rows, fs, names, anns))
}

pub fn write_record(path: impl AsRef<Path>, rec: &ContinuousRecord) -> Result<()> {
    std::fs::write(path, record_to_bytes(rec)?)?;
    Ok(())
}

pub fn read_record(path: impl AsRef<Path>) -> Result<ContinuousRecord> {
    record_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_bandpower, synth_seizure_record, BandpowerParams, SeizureParams};

    fn sample() -> EpochSet {
        synth_bandpower(&BandpowerParams::two_class(6, 8, 40, 64.0, 1)).unwrap().0
    }

    #[test]
    fn epoch_round_trip() {
        let s = sample();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.epch");
        write_epochs(&p, &s).unwrap();
        let back = read_epochs(&p).unwrap();
        assert_eq!(back, s);
        for (a, b) in s.epochs.iter().zip(&back.epochs) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn epoch_errors() {
        let bytes = epochs_to_bytes(&sample()).unwrap();
        let mut foreign = bytes.clone();
        foreign[..4].copy_from_slice(b"RIFF");
        let err = epochs_from_bytes(&foreign).unwrap_err();
        assert!(matches!(err, MsnnError::BadMagic { .. }));
        assert!(err.to_string().contains("bad magic"));
        assert!(matches!(epochs_from_bytes(&bytes[..100]), Err(MsnnError::Truncated(_))));
        let mut bad = bytes.clone();
        let i = bytes.len() - 50;
        bad[i] ^= 0x10;
        assert!(matches!(epochs_from_bytes(&bad), Err(MsnnError::Checksum { .. })));
    }

    #[test]
    fn label_out_of_range_on_read() {
        let mut s = sample();
        s.n_classes = 3;
        s.labels[0] = 2;
        let mut bytes = epochs_to_bytes(&s).unwrap();
        // rewrite n_o = 2 in the header and fix the CRC
        bytes[26] = 2;
        let n = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        let err = epochs_from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, MsnnError::InvalidArgument(_)), "{err}");
        assert!(err.to_string().contains("label 2 out of range"));
    }

    #[test]
    fn record_round_trip() {
        let r = synth_seizure_record(&SeizureParams::new(120.0, 2, 10.0, 2, 32.0, 3)).unwrap();
        let back = record_from_bytes(&record_to_bytes(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(matches!(record_from_bytes(&epochs_to_bytes(&sample()).unwrap()), Err(MsnnError::BadMagic { .. })));
    }
}
