//! On-disk dataset layout shared by the generator and the store loader:
//!
//! ```text
//! <dir>/manifest.json               catalog, regions, field schema, file map
//! <dir>/collections/<slug>.ndjson   one document per line, sorted by node id
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datamodel::{
    validate_document, DataError, DeviceDocument, ExtraFieldSchema, Region, ServiceCatalog,
    ServiceDescriptor, ValidationError,
};

pub const MANIFEST_FORMAT: &str = "iotase-dataset/1";

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed json in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("unsupported manifest format `{0}`")]
    Format(String),
    #[error("catalog: {0}")]
    Catalog(#[from] DataError),
    #[error("{path}:{line}: invalid document: {errors:?}")]
    Document { path: PathBuf, line: usize, errors: Vec<ValidationError> },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestService {
    pub service_id: String,
    pub name: String,
    pub description: String,
    pub file: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub regions: Vec<Region>,
    pub field_schema: ExtraFieldSchema,
    pub services: Vec<ManifestService>,
}

impl DatasetManifest {
    pub fn document_count(&self) -> usize {
        self.services.iter().map(|s| s.count).sum()
    }
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub catalog: ServiceCatalog,
    pub regions: Vec<Region>,
    pub field_schema: ExtraFieldSchema,
    pub documents: Vec<DeviceDocument>,
}

/// File-system-safe stem for a service name: `"children's party service"` → `"children_s_party_service"`.
pub fn slug_for(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

/// Writes a dataset deterministically: same inputs, byte-identical files.
pub fn save_dataset(
    dir: &Path,
    catalog: &ServiceCatalog,
    regions: &[Region],
    field_schema: &ExtraFieldSchema,
    documents: &[DeviceDocument],
) -> Result<DatasetManifest, PersistError> {
    let coll_dir = dir.join("collections");
    fs::create_dir_all(&coll_dir).map_err(io_err(&coll_dir))?;

    let mut by_service: BTreeMap<&str, Vec<&DeviceDocument>> = BTreeMap::new();
    for d in documents {
        by_service.entry(d.service_name.as_str()).or_default().push(d);
    }

    let mut used = HashSet::new();
    let mut services = Vec::with_capacity(catalog.len());
    for svc in catalog.iter() {
        let mut stem = slug_for(&svc.name);
        let mut n = 1;
        while !used.insert(stem.clone()) {
            n += 1;
            stem = format!("{}_{n}", slug_for(&svc.name));
        }
        let file = format!("{stem}.ndjson");
        let path = coll_dir.join(&file);
        let mut docs = by_service.remove(svc.name.as_str()).unwrap_or_default();
        docs.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        for d in &docs {
            serde_json::to_writer(&mut w, d).map_err(|source| PersistError::Json { path: path.clone(), source })?;
            w.write_all(b"\n").map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        services.push(ManifestService {
            service_id: svc.service_id.clone(),
            name: svc.name.clone(),
            description: svc.description.clone(),
            file,
            count: docs.len(),
        });
    }

    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.into(),
        regions: regions.to_vec(),
        field_schema: field_schema.clone(),
        services,
    };
    let path = dir.join("manifest.json");
    let body = serde_json::to_vec_pretty(&manifest).map_err(|source| PersistError::Json { path: path.clone(), source })?;
    fs::write(&path, body).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, PersistError> {
    let path = dir.join("manifest.json");
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|source| PersistError::Json { path: path.clone(), source })?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(PersistError::Format(manifest.format));
    }
    Ok(manifest)
}

/// Loads and validates every document against the manifest's catalog and schema.
pub fn load_dataset(dir: &Path) -> Result<LoadedDataset, PersistError> {
    let manifest = read_manifest(dir)?;
    let catalog = ServiceCatalog::new(
        manifest
            .services
            .iter()
            .map(|s| ServiceDescriptor::new(s.service_id.clone(), &s.name, s.description.clone()))
            .collect::<Result<Vec<_>, _>>()?,
    )?;
    let mut documents = Vec::with_capacity(manifest.document_count());
    for svc in &manifest.services {
        let path = dir.join("collections").join(&svc.file);
        let reader = BufReader::new(File::open(&path).map_err(io_err(&path))?);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: serde_json::Map<String, serde_json::Value> =
                serde_json::from_str(&line).map_err(|source| PersistError::Json { path: path.clone(), source })?;
            let doc = validate_document(&raw, &catalog, &manifest.field_schema)
                .map_err(|errors| PersistError::Document { path: path.clone(), line: i + 1, errors })?;
            documents.push(doc);
        }
    }
    Ok(LoadedDataset { catalog, regions: manifest.regions, field_schema: manifest.field_schema, documents })
}
