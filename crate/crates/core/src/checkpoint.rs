//! Safetensors persistence of named `f32` tensors plus a string metadata map.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use noisesim_autodiff::{ParamStore, Tensor};
use safetensors::tensor::{Dtype, SafeTensors, TensorView};

use crate::error::{Error, IoContext, Result};

pub(crate) type Tensors = BTreeMap<String, Tensor<f32>>;

/// Writes via a temporary file and a rename, so readers never observe a
/// partial file.
pub(crate) fn write_tensors(path: &Path, tensors: &Tensors, metadata: HashMap<String, String>) -> Result<()> {
    let bytes: Vec<(String, Vec<u8>, Vec<usize>)> = tensors
        .iter()
        .map(|(k, t)| {
            let b = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            (k.clone(), b, t.shape().to_vec())
        })
        .collect();
    let views: Vec<(String, TensorView<'_>)> = bytes
        .iter()
        .map(|(k, b, s)| {
            TensorView::new(Dtype::F32, s.clone(), b)
                .map(|v| (k.clone(), v))
                .map_err(|e| Error::Corrupt(format!("tensor `{k}`: {e}")))
        })
        .collect::<Result<_>>()?;
    let data = safetensors::serialize(views, &Some(metadata)).map_err(|e| Error::Corrupt(e.to_string()))?;
    let tmp = path.with_extension("partial");
    fs::write(&tmp, data).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

pub(crate) fn read_tensors(path: &Path) -> Result<(Tensors, HashMap<String, String>)> {
    let bytes = fs::read(path).at(path)?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
    let (_, meta) = SafeTensors::read_metadata(&bytes).map_err(|e| Error::Corrupt(e.to_string()))?;
    let mut out = BTreeMap::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F32 {
            return Err(Error::Corrupt(format!("tensor `{name}` is {:?}, expected F32", view.dtype())));
        }
        let data = view
            .data()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.insert(name, Tensor::new(view.shape(), data)?);
    }
    Ok((out, meta.metadata().clone().unwrap_or_default()))
}

pub(crate) fn store_into(prefix: &str, store: &ParamStore<f32>, out: &mut Tensors) {
    for (name, t) in store.iter() {
        out.insert(format!("{prefix}{name}"), t.clone());
    }
}

/// Tensors under `prefix`, in the order they appear in the file's sorted
/// key space, as a new store.
pub(crate) fn store_from(prefix: &str, tensors: &Tensors) -> ParamStore<f32> {
    let mut store = ParamStore::new();
    for (k, t) in tensors {
        if let Some(name) = k.strip_prefix(prefix) {
            store.add(name, t.clone());
        }
    }
    store
}

pub(crate) fn write_param_file(path: &Path, store: &ParamStore<f32>) -> Result<()> {
    let mut t = Tensors::new();
    store_into("", store, &mut t);
    write_tensors(path, &t, HashMap::new())
}

pub(crate) fn read_param_file(path: &Path) -> Result<ParamStore<f32>> {
    Ok(store_from("", &read_tensors(path)?.0))
}
