//! Binary checkpoint format for [`ParamVector`]:
//! `u32 LE` id length, id bytes (UTF-8), `u64 LE` value count, values as `f64 LE`.

use std::io::{Read, Write};

use super::ParamVector;
use crate::{Error, Result};

pub fn write_params<W: Write>(mut writer: W, params: &ParamVector) -> Result<()> {
    let id = params.spec_id().as_bytes();
    let id_len = u32::try_from(id.len()).map_err(|_| Error::Contract("spec id too long".into()))?;
    writer.write_all(&id_len.to_le_bytes())?;
    writer.write_all(id)?;
    writer.write_all(&(params.len() as u64).to_le_bytes())?;
    for v in params.values() {
        writer.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_params<R: Read>(mut reader: R) -> Result<ParamVector> {
    let mut u32_buf = [0u8; 4];
    reader.read_exact(&mut u32_buf)?;
    let id_len = u32::from_le_bytes(u32_buf) as usize;
    let mut id = vec![0u8; id_len];
    reader.read_exact(&mut id)?;
    let id = String::from_utf8(id).map_err(|e| Error::Parse(format!("spec id: {e}")))?;
    let mut u64_buf = [0u8; 8];
    reader.read_exact(&mut u64_buf)?;
    let count = u64::from_le_bytes(u64_buf) as usize;
    let mut values = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        reader.read_exact(&mut u64_buf)?;
        values.push(f64::from_le_bytes(u64_buf));
    }
    Ok(ParamVector::new(id, values))
}
