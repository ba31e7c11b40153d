//! Checkpoints: one line of JSON header, then the flat parameter vector as
//! little-endian `f64` bytes (per layer, row-major weights then biases).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ReluNet, SymmetrizationMode};
use crate::error::{Error, Result};
use crate::group::GroupDescriptor;

pub const CHECKPOINT_FORMAT: &str = "relu-net-f64le-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub widths: Vec<usize>,
    pub weight_bound: Option<f64>,
    #[serde(default)]
    pub mode: Option<SymmetrizationMode>,
    #[serde(default)]
    pub group: Option<GroupDescriptor>,
    pub num_params: usize,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    net: &ReluNet,
    mode: Option<SymmetrizationMode>,
    group: Option<&GroupDescriptor>,
) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.to_string(),
        widths: net.widths().to_vec(),
        weight_bound: net.weight_bound(),
        mode,
        group: group.cloned(),
        num_params: net.num_params(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<(ReluNet, CheckpointHeader)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::invalid(format!("unknown checkpoint format `{}`", header.format)));
    }
    let net = ReluNet::zeros(&header.widths, header.weight_bound)?;
    if net.num_params() != header.num_params {
        return Err(Error::invalid("parameter count does not match widths"));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * header.num_params {
        return Err(Error::invalid(format!(
            "expected {} parameter bytes, found {}",
            8 * header.num_params,
            bytes.len()
        )));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let net = net.with_params(params)?;
    Ok((net, header))
}
