//! Synthetic stand-in for a scraped city dataset: a service catalog with
//! template-composed descriptions, and devices spread over a region with
//! per-service counts set by largest-remainder apportionment.

mod scenario;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use scenario::{
    scenario_dataset, scenario_origin, Scenario, CLINIC_QUERY, DOG_PARK_QUERY, GAS_QUERY, PARKING_QUERY, SCENARIO_ORIGIN,
};

use crate::datamodel::{
    canonical_service_name, DataError, DeviceDocument, ExtraFieldSchema, FieldValue, GeoPoint, Region, ServiceCatalog,
    ServiceDescriptor, Timestamp,
};
use crate::docstore::{save_dataset, DatasetManifest, PersistError};
use crate::ingest::OccupancyCurve;

pub const DEFAULT_SERVICES: usize = 500;
pub const DEFAULT_DEVICES: usize = 37_033;

const SERVICES_TSV: &str = include_str!("../../data/services.tsv");
const CATEGORIES_TSV: &str = include_str!("../../data/categories.tsv");

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("infeasible spec: {0}")]
    Infeasible(String),
    #[error("duplicate service names: {0:?}")]
    Duplicates(Vec<String>),
    #[error("line {line}: {detail}")]
    Format { line: usize, detail: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Catalog(#[from] DataError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceEntry {
    pub category: String,
    pub name: String,
    pub keywords: String,
}

/// The bundled service list in file order.
pub fn bundled_services() -> Vec<ServiceEntry> {
    SERVICES_TSV
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let mut cols = l.split('\t');
            ServiceEntry {
                category: cols.next().unwrap_or_default().to_string(),
                name: cols.next().unwrap_or_default().to_string(),
                keywords: cols.next().unwrap_or_default().to_string(),
            }
        })
        .collect()
}

fn category_phrases() -> HashMap<&'static str, &'static str> {
    CATEGORIES_TSV
        .lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once('\t'))
        .collect()
}

fn article(word: &str) -> &'static str {
    match word.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn capitalized(s: &str) -> String {
    let mut cs = s.chars();
    cs.next().map(|c| c.to_uppercase().chain(cs).collect()).unwrap_or_default()
}

/// Description for a bundled entry: what it is, its category, and what it
/// offers when keywords are known.
pub fn describe(entry: &ServiceEntry) -> String {
    let phrases = category_phrases();
    let role = phrases.get(entry.category.as_str()).copied().unwrap_or("a local business");
    let a = article(&entry.name);
    let mut s = format!("{} {} is {role}.", capitalized(a), entry.name);
    if entry.keywords.is_empty() {
        s.push_str(&format!(" People look for {a} {} near them when they need one.", entry.name));
    } else {
        s.push_str(&format!(" It offers {}.", entry.keywords));
    }
    s
}

/// The first `n` bundled services with composed descriptions. Beyond the
/// bundled list, numbered generic services are appended.
pub fn bundled_catalog(n: usize) -> Result<ServiceCatalog, DatasetError> {
    let mut entries = bundled_services();
    entries.truncate(n);
    for i in entries.len()..n {
        entries.push(ServiceEntry { category: "professional".into(), name: format!("local service {}", i + 1), keywords: String::new() });
    }
    let services = entries
        .iter()
        .enumerate()
        .map(|(i, e)| ServiceDescriptor::new(format!("svc-{:03}", i + 1), &e.name, describe(e)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ServiceCatalog::new(services)?)
}

#[derive(Serialize, Deserialize)]
struct DescriptionRecord {
    name: String,
    description: String,
}

/// Reads one `{"name", "description"}` JSON object per line. Names are
/// canonicalized; ids follow line order.
pub fn load_descriptions(path: &Path) -> Result<ServiceCatalog, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let r: DescriptionRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::Format { line: i + 1, detail: e.to_string() })?;
        records.push(r);
    }
    let mut seen = HashSet::new();
    let mut dups: Vec<String> = records
        .iter()
        .map(|r| canonical_service_name(&r.name))
        .filter(|n| !seen.insert(n.clone()))
        .collect();
    if !dups.is_empty() {
        dups.sort();
        dups.dedup();
        return Err(DatasetError::Duplicates(dups));
    }
    let services = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| ServiceDescriptor::new(format!("svc-{:03}", i + 1), &r.name, r.description))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ServiceCatalog::new(services)?)
}

pub fn write_descriptions(path: &Path, catalog: &ServiceCatalog) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for s in catalog.iter() {
        let line = serde_json::to_string(&DescriptionRecord { name: s.name.clone(), description: s.description.clone() })
            .expect("record serializes");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Splits `total` into integer parts proportional to `weights` by the
/// largest-remainder method. Ties go to the lower index.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if sum <= 0.0 {
        return largest_remainder(total, &vec![1.0; weights.len()]);
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let left = total - parts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(left) {
        parts[i] += 1;
    }
    parts
}

/// Per-service device counts: one each, the rest apportioned by weight.
pub fn apportion(n_devices: usize, weights: &[f64]) -> Result<Vec<usize>, DatasetError> {
    if n_devices < weights.len() {
        return Err(DatasetError::Infeasible(format!("{n_devices} devices cannot cover {} services", weights.len())));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(DatasetError::Infeasible("weights must be finite and non-negative".into()));
    }
    Ok(largest_remainder(n_devices - weights.len(), weights).into_iter().map(|c| c + 1).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogSpec {
    pub n_services: usize,
    pub n_devices: usize,
    pub region: Region,
    /// Device-count weight per service in catalog order; absent means a
    /// seeded heavy-tailed profile.
    pub weights: Option<Vec<f64>>,
    pub seed: u64,
    pub occupancy_missing: f64,
    pub rating_missing: f64,
    pub generated_at: Timestamp,
}

impl Default for CatalogSpec {
    fn default() -> Self {
        Self {
            n_services: DEFAULT_SERVICES,
            n_devices: DEFAULT_DEVICES,
            region: Region::toronto(),
            weights: None,
            seed: 7,
            occupancy_missing: 0.10,
            rating_missing: 0.05,
            generated_at: Utc.with_ymd_and_hms(2024, 10, 1, 14, 0, 0).unwrap(),
        }
    }
}

impl CatalogSpec {
    pub fn new(n_services: usize, n_devices: usize, seed: u64) -> Self {
        Self { n_services, n_devices, seed, ..Self::default() }
    }

    /// Weight of rank r (1-based) is r^-0.8 over a seeded shuffle of services.
    fn default_weights(&self) -> Vec<f64> {
        let mut ranks: Vec<usize> = (1..=self.n_services).collect();
        ranks.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed));
        ranks.into_iter().map(|r| (r as f64).powf(-0.8)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub catalog: ServiceCatalog,
    pub regions: Vec<Region>,
    pub field_schema: ExtraFieldSchema,
    pub documents: Vec<DeviceDocument>,
}

impl GeneratedDataset {
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest, DatasetError> {
        Ok(save_dataset(dir, &self.catalog, &self.regions, &self.field_schema, &self.documents)?)
    }

    pub fn counts(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for d in &self.documents {
            *m.entry(d.service_name.as_str()).or_insert(0) += 1;
        }
        m
    }
}

const NEIGHBOURHOODS: &[&str] = &[
    "Annex", "Leslieville", "Yorkville", "Riverdale", "Parkdale", "Liberty Village", "Danforth", "Junction",
    "Kensington", "Cabbagetown", "Roncesvalles", "Bloor West", "Little Italy", "Harbourfront", "Midtown", "Davisville",
    "Leaside", "Rosedale", "Forest Hill", "Summerhill", "Corktown", "Trinity Bellwoods", "Ossington", "Wychwood",
    "Beaches", "Swansea", "Willowdale", "Don Mills", "Agincourt", "Humber Bay",
];

const STREETS: &[&str] = &[
    "Queen St W", "King St E", "Yonge St", "Bloor St W", "Dundas St W", "College St", "Spadina Ave", "Bathurst St",
    "Danforth Ave", "St Clair Ave W", "Eglinton Ave E", "Dufferin St", "Ossington Ave", "Gerrard St E", "Parliament St",
    "Avenue Rd", "Mount Pleasant Rd", "Lawrence Ave W", "Sheppard Ave E", "Kingston Rd", "Lake Shore Blvd W",
    "Roncesvalles Ave", "Jarvis St", "Church St", "Broadview Ave",
];

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut cs = w.chars();
            cs.next().map(|c| c.to_uppercase().chain(cs).collect::<String>()).unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Real-time fields a freshly generated device of this service carries.
fn initial_extras<R: Rng>(service: &str, schema: &ExtraFieldSchema, rng: &mut R) -> BTreeMap<String, FieldValue> {
    let mut extra = BTreeMap::new();
    let Some(allowed) = schema.services.get(service) else { return extra };
    for key in allowed {
        let v = match key.as_str() {
            "parking_available" => FieldValue::Bool(rng.gen_bool(0.6)),
            "gas_price" => FieldValue::Float((rng.gen_range(1.35..1.75) * 1000.0_f64).round() / 1000.0),
            "lineup_count" => FieldValue::Int(rng.gen_range(0..20)),
            _ => continue,
        };
        extra.insert(key.clone(), v);
    }
    extra
}

/// Builds the catalog and devices. A pure function of the spec.
pub fn generate(spec: &CatalogSpec) -> Result<GeneratedDataset, DatasetError> {
    if spec.n_services == 0 {
        return Err(DatasetError::Infeasible("at least one service is required".into()));
    }
    generate_for(spec, bundled_catalog(spec.n_services)?)
}

/// Like [`generate`] over a caller-supplied catalog; `spec.n_services` is
/// ignored in favour of the catalog size.
pub fn generate_for(spec: &CatalogSpec, catalog: ServiceCatalog) -> Result<GeneratedDataset, DatasetError> {
    let spec = &CatalogSpec { n_services: catalog.len(), ..spec.clone() };
    if spec.n_services == 0 {
        return Err(DatasetError::Infeasible("at least one service is required".into()));
    }
    if spec.n_devices < spec.n_services {
        return Err(DatasetError::Infeasible(format!("{} devices cannot cover {} services", spec.n_devices, spec.n_services)));
    }
    for (name, p) in [("occupancy_missing", spec.occupancy_missing), ("rating_missing", spec.rating_missing)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(DatasetError::Infeasible(format!("{name} must be in [0, 1]")));
        }
    }
    let weights = match &spec.weights {
        Some(w) if w.len() != spec.n_services => {
            return Err(DatasetError::Infeasible(format!("{} weights for {} services", w.len(), spec.n_services)))
        }
        Some(w) => w.clone(),
        None => spec.default_weights(),
    };
    let counts = apportion(spec.n_devices, &weights)?;
    let schema = ExtraFieldSchema::default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let curve = OccupancyCurve::default();
    let rating = Normal::new(4.1, 0.55).expect("valid normal");
    let (lo, hi) = (spec.region.bounds.min(), spec.region.bounds.max());

    let mut documents = Vec::with_capacity(spec.n_devices);
    for (svc, &count) in catalog.iter().zip(&counts) {
        let label = title_case(&svc.name);
        let mut used: HashMap<String, usize> = HashMap::new();
        for j in 0..count {
            let hood = NEIGHBOURHOODS[rng.gen_range(0..NEIGHBOURHOODS.len())];
            let base = format!("{hood} {label}");
            let n = used.entry(base.clone()).or_insert(0);
            *n += 1;
            let display_name = if *n == 1 { base } else { format!("{base} #{n}") };
            let address = format!("{} {}, Toronto, ON", rng.gen_range(1..2500), STREETS[rng.gen_range(0..STREETS.len())]);
            let lat = rng.gen_range(lo.lat()..=hi.lat());
            let lon = rng.gen_range(lo.lon()..=hi.lon());
            let rate = (!rng.gen_bool(spec.rating_missing))
                .then(|| (rating.sample(&mut rng) as f64).clamp(1.0, 5.0))
                .map(|r| (r * 10.0).round() / 10.0);
            let occupancy = (!rng.gen_bool(spec.occupancy_missing)).then(|| curve.sample(&mut rng, spec.generated_at));
            documents.push(DeviceDocument {
                node_id: format!("{}-{:05}", svc.service_id, j + 1),
                service_name: svc.name.clone(),
                display_name,
                address,
                location: GeoPoint::new(lat, lon).expect("inside region bounds"),
                rate,
                occupancy_factor: occupancy,
                extra: initial_extras(&svc.name, &schema, &mut rng),
                updated_at: spec.generated_at,
            });
        }
    }
    Ok(GeneratedDataset { catalog, regions: vec![spec.region.clone()], field_schema: schema, documents })
}
