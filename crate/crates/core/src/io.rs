//! File output: CSV tables, a lossless binary state format and atomic writes.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::det::MeanFieldTrajectory;
use crate::error::{Error, Result};
use crate::model::SystemState;
use crate::stoch::Trajectory;

/// Writes `path` through `fill` into a temporary file in the same directory
/// and renames it into place, so readers never see a partial file. On error
/// the temporary is removed and `path` is untouched.
pub fn atomic_write<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serializes `rows` as CSV with a header from the field names.
pub fn write_rows<T: Serialize>(out: &mut dyn Write, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(input: impl Read) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// `t,k,V` for every recorded snapshot.
pub fn write_trajectory_csv(out: &mut dyn Write, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "k", "V"])?;
    for idx in 0..traj.len() {
        let t = traj.times[idx].to_string();
        for (k, v) in traj.voltage(idx).iter().enumerate() {
            w.write_record([t.as_str(), &k.to_string(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,k,i,from,to` for every accepted jump.
pub fn write_events_csv(out: &mut dyn Write, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "k", "i", "from", "to"])?;
    for e in &traj.events {
        w.serialize((e.t, e.k, e.i, e.from, e.to))?;
    }
    w.flush()?;
    Ok(())
}

/// `t,k,U` followed by one `S_i_j` column per channel type and
/// configuration when the occupancy was kept.
pub fn write_mean_field_csv(out: &mut dyn Write, mf: &MeanFieldTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_s = !mf.is_empty() && mf.occupancy(0).is_some();
    let (types, configs) = (mf.types(), mf.configs());
    let mut header = vec!["t".to_string(), "k".into(), "U".into()];
    if with_s {
        for i in 0..types {
            for j in 0..configs {
                header.push(format!("S_{i}_{j}"));
            }
        }
    }
    w.write_record(&header)?;
    let stride = types * configs;
    for idx in 0..mf.len() {
        let t = mf.times[idx].to_string();
        let s = mf.occupancy(idx);
        for (k, u) in mf.voltage(idx).iter().enumerate() {
            let mut row = vec![t.clone(), k.to_string(), u.to_string()];
            if let Some(s) = s {
                row.extend(s[k * stride..(k + 1) * stride].iter().map(f64::to_string));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

const MAGIC: &[u8; 8] = b"PDMPSNAP";
const VERSION: u32 = 1;

/// Little-endian binary form of a state: magic, version, `t`, sizes, the
/// voltage bits and the occupied configurations.
pub fn encode_state(state: &SystemState) -> Vec<u8> {
    let occupied = state.occupancy();
    let mut out = Vec::with_capacity(40 + 8 * state.n() + 4 * occupied.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&state.t.to_bits().to_le_bytes());
    for size in [state.n(), state.types(), state.configs()] {
        out.extend_from_slice(&(size as u64).to_le_bytes());
    }
    for v in &state.v {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    for &j in occupied {
        out.extend_from_slice(&(j as u32).to_le_bytes());
    }
    out
}

pub fn decode_state(bytes: &[u8]) -> Result<SystemState> {
    let bad = |what: &str| Error::Data(format!("bad state file: {what}"));
    let mut pos = 0usize;
    let mut take = |len: usize| -> Result<&[u8]> {
        let chunk = bytes.get(pos..pos + len).ok_or_else(|| bad("truncated"))?;
        pos += len;
        Ok(chunk)
    };
    if take(8)? != MAGIC {
        return Err(bad("magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(&format!("version {version}")));
    }
    let mut word =
        || -> Result<u64> { Ok(u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"))) };
    let t = f64::from_bits(word()?);
    let (n, types, configs) = (word()? as usize, word()? as usize, word()? as usize);
    let cells = n.checked_mul(types).ok_or_else(|| bad("sizes"))?;
    let v = (0..n)
        .map(|_| word().map(f64::from_bits))
        .collect::<Result<Vec<_>>>()?;
    let occupied = (0..cells)
        .map(|_| Ok(u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize))
        .collect::<Result<Vec<_>>>()?;
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    SystemState::new(t, v, types, configs, occupied)
}
