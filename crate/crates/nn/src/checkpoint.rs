//! Parameter checkpoints: one data file of concatenated PIDT records plus a
//! text index.
//!
//! Index layout: a `config_hash\t<hex>` line, then one `name\toffset\tfile`
//! line per parameter in visit order. Offsets are byte positions in `file`,
//! which is resolved relative to the index.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use pidd_core::container::{decode, encode, StoredTensor, TensorData};
use pidd_core::{Error, Real, Result};

use crate::param::ParamVisitor;

const HASH_KEY: &str = "config_hash";

/// Index path paired with a data file.
pub fn index_path(data: &Path) -> PathBuf {
    data.with_extension("index")
}

/// Writes every parameter (buffers included) reached by `visit`.
pub fn save_checkpoint<T: Real>(
    data: &Path,
    config_hash: &str,
    mut visit: impl FnMut(&mut ParamVisitor<'_, T>),
) -> Result<()> {
    let file = data
        .file_name()
        .and_then(|f| f.to_str())
        .ok_or_else(|| Error::invalid(format!("bad checkpoint path {}", data.display())))?
        .to_string();
    let mut bytes = Vec::new();
    let mut index = format!("{HASH_KEY}\t{config_hash}\n");
    visit(&mut |name, p| {
        index.push_str(&format!("{name}\t{}\t{file}\n", bytes.len()));
        bytes.extend(encode(&StoredTensor::from(&p.value)));
    });
    if let Some(dir) = data.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(data, bytes).map_err(|e| Error::io(data, e))?;
    let idx = index_path(data);
    fs::write(&idx, index).map_err(|e| Error::io(&idx, e))
}

/// The config hash recorded in a checkpoint index.
pub fn checkpoint_hash(data: &Path) -> Result<String> {
    Ok(read_index(data)?.0)
}

type Index = (String, Vec<(String, usize, String)>);

fn read_index(data: &Path) -> Result<Index> {
    let idx = index_path(data);
    let text = fs::read_to_string(&idx).map_err(|e| Error::io(&idx, e))?;
    let mut lines = text.lines();
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix(HASH_KEY))
        .and_then(|l| l.strip_prefix('\t'))
        .ok_or_else(|| Error::Layout(format!("{} lacks a {HASH_KEY} line", idx.display())))?
        .to_string();
    let mut entries = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        let offset = cols.get(1).and_then(|o| o.parse().ok());
        match (cols.len(), offset) {
            (3, Some(off)) => entries.push((cols[0].to_string(), off, cols[2].to_string())),
            _ => return Err(Error::Layout(format!("{} line {}: malformed entry", idx.display(), n + 2))),
        }
    }
    Ok((hash, entries))
}

fn to_real<T: Real>(data: TensorData) -> Option<Vec<T>> {
    match data {
        TensorData::F32(v) => Some(v.into_iter().map(|x| T::of(x as f64)).collect()),
        TensorData::F64(v) => Some(v.into_iter().map(T::of).collect()),
        _ => None,
    }
}

/// Restores every parameter reached by `visit`. The recorded hash must equal
/// `config_hash` and every parameter must be present with identical dims;
/// records may be stored at either precision.
pub fn load_checkpoint<T: Real>(
    data: &Path,
    config_hash: &str,
    mut visit: impl FnMut(&mut ParamVisitor<'_, T>),
) -> Result<()> {
    let (hash, entries) = read_index(data)?;
    if hash != config_hash {
        return Err(Error::Layout(format!(
            "checkpoint config hash {hash} does not match model hash {config_hash}"
        )));
    }
    let dir = data.parent().unwrap_or(Path::new(""));
    let mut files: HashMap<String, Vec<u8>> = HashMap::new();
    let mut records = HashMap::new();
    for (name, offset, file) in entries {
        if !files.contains_key(&file) {
            let p = dir.join(&file);
            files.insert(file.clone(), fs::read(&p).map_err(|e| Error::io(&p, e))?);
        }
        let (t, _) = decode(&files[&file], offset)?;
        records.insert(name, t);
    }
    let mut failure = None;
    visit(&mut |name, p| {
        if failure.is_some() {
            return;
        }
        let Some(t) = records.remove(name) else {
            failure = Some(Error::Layout(format!("checkpoint has no parameter {name}")));
            return;
        };
        if t.dims != p.value.dims() {
            failure = Some(Error::Layout(format!(
                "parameter {name}: checkpoint dims {:?}, model dims {:?}",
                t.dims,
                p.value.dims()
            )));
            return;
        }
        match to_real::<T>(t.data) {
            Some(v) => p.value.data_mut().copy_from_slice(&v),
            None => failure = Some(Error::Layout(format!("parameter {name} is not real-valued"))),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(name) = records.keys().min() {
        return Err(Error::Layout(format!("checkpoint parameter {name} has no counterpart in the model")));
    }
    Ok(())
}
