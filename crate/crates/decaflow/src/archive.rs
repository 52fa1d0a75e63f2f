//! Binary model archive.
//!
//! Layout: the magic bytes `DCFA`, a little-endian u32 format version, a
//! little-endian u64 manifest length, the manifest as JSON, then the flow
//! parameters as little-endian f64 (generative first, deconfounding after it
//! when present). The manifest embeds a hash of the canonical graph JSON so
//! a load against the wrong graph fails loudly instead of producing a model
//! that silently mixes masks and weights.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use causal_graph::CausalGraph;
use flow_core::LayerSpec;
use serde::{Deserialize, Serialize};

use crate::model::{DeCaFlowModel, FlowArch};
use crate::ArchiveError;

const MAGIC: [u8; 4] = *b"DCFA";
const VERSION: u32 = 1;

/// 64-bit FNV-1a over a byte string.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArchEntry {
    spec: LayerSpec,
    widths: Vec<usize>,
    layers: usize,
    param_count: usize,
}

impl ArchEntry {
    fn from_arch(arch: &FlowArch, param_count: usize) -> Self {
        Self {
            spec: arch.spec,
            widths: arch.widths.clone(),
            layers: arch.layers,
            param_count,
        }
    }

    fn to_arch(&self) -> FlowArch {
        FlowArch {
            spec: self.spec,
            widths: self.widths.clone(),
            layers: self.layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    observed: Vec<String>,
    hidden: Vec<String>,
    edges: Vec<(String, String)>,
    graph_hash: String,
    latent_dims: BTreeMap<String, usize>,
    generative: ArchEntry,
    deconfounding: Option<ArchEntry>,
    standardization: Vec<(f64, f64)>,
}

pub fn save_model(model: &DeCaFlowModel, path: &Path) -> Result<(), ArchiveError> {
    let graph = model.graph();
    let manifest = Manifest {
        observed: graph.observed_nodes().to_vec(),
        hidden: graph.hidden_nodes().to_vec(),
        edges: graph.edges().to_vec(),
        graph_hash: format!("{:016x}", fnv1a64(graph.to_json_string().as_bytes())),
        latent_dims: model.latent_dims().clone(),
        generative: ArchEntry::from_arch(model.generative_arch(), model.generative().param_count()),
        deconfounding: model
            .deconfounding()
            .map(|flow| ArchEntry::from_arch(model.deconfounding_arch(), flow.param_count())),
        standardization: model.standardization().to_vec(),
    };
    let manifest_json = serde_json::to_vec(&manifest)?;

    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(manifest_json.len() as u64).to_le_bytes())?;
    out.write_all(&manifest_json)?;
    for value in model.export_params() {
        out.write_all(&value.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<DeCaFlowModel, ArchiveError> {
    let mut input = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(ArchiveError::Format(format!(
            "bad magic bytes {magic:?}, expected {MAGIC:?}"
        )));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(ArchiveError::Format(format!(
            "unsupported archive version {version}"
        )));
    }
    let mut long = [0u8; 8];
    input.read_exact(&mut long)?;
    let manifest_len = u64::from_le_bytes(long) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    input.read_exact(&mut manifest_bytes)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;

    let graph = CausalGraph::new(
        manifest.observed.clone(),
        manifest.hidden.clone(),
        manifest.edges.clone(),
    )
    .map_err(|e| ArchiveError::Integrity(format!("manifest graph does not validate: {e}")))?;
    let hash = format!("{:016x}", fnv1a64(graph.to_json_string().as_bytes()));
    if hash != manifest.graph_hash {
        return Err(ArchiveError::Integrity(format!(
            "graph hash mismatch: manifest says {}, rebuilt graph hashes to {hash}",
            manifest.graph_hash
        )));
    }

    let mut model = DeCaFlowModel::new(
        graph,
        manifest.latent_dims.clone(),
        manifest.generative.to_arch(),
        manifest
            .deconfounding
            .as_ref()
            .map(|e| e.to_arch())
            .unwrap_or_default(),
        0,
    )?;
    if model.generative().param_count() != manifest.generative.param_count {
        return Err(ArchiveError::Integrity(format!(
            "generative flow has {} parameters, manifest says {}",
            model.generative().param_count(),
            manifest.generative.param_count
        )));
    }
    match (&manifest.deconfounding, model.deconfounding()) {
        (None, None) => {}
        (Some(entry), Some(flow)) => {
            if flow.param_count() != entry.param_count {
                return Err(ArchiveError::Integrity(format!(
                    "deconfounding flow has {} parameters, manifest says {}",
                    flow.param_count(),
                    entry.param_count
                )));
            }
        }
        (entry, flow) => {
            return Err(ArchiveError::Integrity(format!(
                "deconfounding entry mismatch: manifest {}, model {}",
                if entry.is_some() { "present" } else { "absent" },
                if flow.is_some() { "present" } else { "absent" },
            )));
        }
    }

    let mut params = vec![0.0f64; model.param_count()];
    for slot in params.iter_mut() {
        input.read_exact(&mut long)?;
        *slot = f64::from_le_bytes(long);
    }
    let mut probe = [0u8; 1];
    match input.read(&mut probe)? {
        0 => {}
        _ => {
            return Err(ArchiveError::Format(
                "trailing bytes after the parameter block".into(),
            ))
        }
    }
    model.import_params(&params)?;
    model.set_standardization(manifest.standardization)?;
    Ok(model)
}
