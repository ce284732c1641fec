use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::DeviceDocument;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    /// Documents whose missing rate was replaced with the service mean.
    pub rates_imputed: usize,
    /// Documents left without an occupancy factor (read downstream as uncrowded).
    pub occupancy_absent: usize,
    /// Services where no document had a rate, so nothing could be imputed.
    pub services_without_rates: Vec<String>,
    /// Imputed value per service, rounded to one decimal.
    pub imputed_means: BTreeMap<String, f64>,
}

/// Fills missing ratings with the per-service mean (one decimal) and leaves
/// missing occupancy factors absent.
pub fn clean_dataset(raw: Vec<DeviceDocument>) -> (Vec<DeviceDocument>, CleaningReport) {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut services: BTreeMap<String, bool> = BTreeMap::new();
    for d in &raw {
        let missing = services.entry(d.service_name.clone()).or_insert(false);
        match d.rate {
            Some(r) => {
                let e = sums.entry(d.service_name.clone()).or_insert((0.0, 0));
                e.0 += r;
                e.1 += 1;
            }
            None => *missing = true,
        }
    }

    let mut report = CleaningReport::default();
    for (service, has_missing) in &services {
        match sums.get(service) {
            Some(&(sum, n)) if *has_missing => {
                let mean = (sum / n as f64 * 10.0).round() / 10.0;
                report.imputed_means.insert(service.clone(), mean);
            }
            None => report.services_without_rates.push(service.clone()),
            _ => {}
        }
    }

    let cleaned = raw
        .into_iter()
        .map(|mut d| {
            if d.rate.is_none() {
                if let Some(&mean) = report.imputed_means.get(&d.service_name) {
                    d.rate = Some(mean);
                    report.rates_imputed += 1;
                }
            }
            if d.occupancy_factor.is_none() {
                report.occupancy_absent += 1;
            }
            d
        })
        .collect();
    (cleaned, report)
}
