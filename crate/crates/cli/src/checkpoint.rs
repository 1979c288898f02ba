//! Checkpoint file format. A checkpoint is a self-describing little-endian
//! binary: magic, format version, the network configuration as dotted-key
//! text, then the named parameter arrays and batch-norm running statistics.
//! Floats are stored as raw f32 bit patterns, so a save/load round trip is
//! bit-exact.
//!
//! Layout:
//!   magic   b"SKCK"
//!   version u32
//!   config  u32 byte length + UTF-8 text (`network.*` keys, one per line)
//!   params  u32 count, then per array:
//!             name  u32 byte length + UTF-8
//!             dims  u32 rank + u32 per dim
//!             data  u32 element count + f32 bits per element
//!   state   same encoding as params

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use skelex_core::network::{ModelState, StateEntry};
use skelex_core::{Model, NetworkConfig};

use crate::config;
use crate::error::CliError;

const MAGIC: &[u8; 4] = b"SKCK";
const VERSION: u32 = 1;

pub fn save(path: &Path, model: &mut Model<f32>) -> Result<(), CliError> {
    let state = model.state();
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_all(&mut w, &model.config, &state).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_all<W: Write>(w: &mut W, cfg: &NetworkConfig, state: &ModelState<f32>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let header = config::network_toml(cfg);
    write_bytes(w, header.as_bytes())?;
    write_entries(w, &state.params)?;
    write_entries(w, &state.state)
}

fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(bytes.len() as u32)?;
    w.write_all(bytes)
}

fn write_entries<W: Write>(w: &mut W, entries: &[StateEntry<f32>]) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(entries.len() as u32)?;
    for e in entries {
        write_bytes(w, e.name.as_bytes())?;
        w.write_u32::<LittleEndian>(e.dims.len() as u32)?;
        for &d in &e.dims {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        w.write_u32::<LittleEndian>(e.values.len() as u32)?;
        for &v in &e.values {
            w.write_u32::<LittleEndian>(v.to_bits())?;
        }
    }
    Ok(())
}

/// Read a checkpoint into its configuration and state snapshot. The caller
/// builds the model from the configuration and loads the snapshot into it.
pub fn load(path: &Path) -> Result<(NetworkConfig, ModelState<f32>), CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = BufReader::new(file);
    read_all(&mut r).map_err(|e| match e {
        ReadError::Io(io) => CliError::io(path, io),
        ReadError::Format(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        ReadError::Config(err) => err,
    })
}

/// Rebuild a ready-to-run model from a checkpoint.
pub fn load_model(path: &Path) -> Result<Model<f32>, CliError> {
    let (cfg, state) = load(path)?;
    let mut model = Model::build(cfg).map_err(CliError::from)?;
    model.load_state(&state).map_err(CliError::from)?;
    Ok(model)
}

enum ReadError {
    Io(std::io::Error),
    Format(String),
    Config(CliError),
}

impl From<std::io::Error> for ReadError {
    fn from(e: std::io::Error) -> Self {
        ReadError::Io(e)
    }
}

fn read_all<R: Read>(r: &mut R) -> Result<(NetworkConfig, ModelState<f32>), ReadError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ReadError::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(ReadError::Format(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let header = String::from_utf8(read_bytes(r)?)
        .map_err(|_| ReadError::Format("config header is not UTF-8".into()))?;
    let cfg = config::network_from_toml(&header).map_err(ReadError::Config)?;
    let params = read_entries(r)?;
    let state = read_entries(r)?;
    Ok((cfg, ModelState { params, state }))
}

fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>, ReadError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 30 {
        return Err(ReadError::Format(format!("implausible length field {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_entries<R: Read>(r: &mut R) -> Result<Vec<StateEntry<f32>>, ReadError> {
    let count = r.read_u32::<LittleEndian>()? as usize;
    if count > 1 << 20 {
        return Err(ReadError::Format(format!("implausible array count {count}")));
    }
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name = String::from_utf8(read_bytes(r)?)
            .map_err(|_| ReadError::Format("array name is not UTF-8".into()))?;
        let rank = r.read_u32::<LittleEndian>()? as usize;
        if rank > 8 {
            return Err(ReadError::Format(format!("array `{name}`: implausible rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.read_u32::<LittleEndian>()? as usize);
        }
        let len = r.read_u32::<LittleEndian>()? as usize;
        if len != dims.iter().product::<usize>() {
            return Err(ReadError::Format(format!(
                "array `{name}`: {len} values for dims {dims:?}"
            )));
        }
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(f32::from_bits(r.read_u32::<LittleEndian>()?));
        }
        entries.push(StateEntry { name, dims, values });
    }
    Ok(entries)
}
