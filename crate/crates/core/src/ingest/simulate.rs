use std::collections::BTreeMap;

use chrono::{Duration, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datamodel::{DeviceDocument, FieldValue, Timestamp, UidiMessage};

/// Daily occupancy shape: `base + amplitude * sin(2π(h - 9)/24) + noise`, clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyCurve {
    pub base: f64,
    pub amplitude: f64,
    pub noise_sd: f64,
}

impl Default for OccupancyCurve {
    fn default() -> Self {
        Self { base: 0.45, amplitude: 0.35, noise_sd: 0.08 }
    }
}

impl OccupancyCurve {
    pub fn sample<R: Rng>(&self, rng: &mut R, at: Timestamp) -> f64 {
        let hour = at.hour() as f64 + at.minute() as f64 / 60.0;
        let mean = self.base + self.amplitude * (std::f64::consts::TAU * (hour - 9.0) / 24.0).sin();
        let noise = Normal::new(0.0, self.noise_sd.max(0.0))
            .map(|n| n.sample(rng))
            .unwrap_or(0.0);
        let v = (mean + noise).clamp(0.0, 1.0);
        // Two decimals, as a sensor would report it.
        (v * 100.0).round() / 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub start: Timestamp,
    pub tick_seconds: i64,
    /// A node emits on ticks that are multiples of its service's cadence.
    pub default_every: u32,
    pub every: BTreeMap<String, u32>,
    pub occupancy: OccupancyCurve,
    /// Probability that a parking sensor reports a free spot.
    pub parking_free_p: f64,
    pub max_lineup: i64,
}

impl Schedule {
    pub fn starting_at(start: Timestamp) -> Self {
        Self {
            start,
            tick_seconds: 60,
            default_every: 1,
            every: BTreeMap::new(),
            occupancy: OccupancyCurve::default(),
            parking_free_p: 0.6,
            max_lineup: 20,
        }
    }

    fn cadence(&self, service: &str) -> u32 {
        self.every.get(service).copied().unwrap_or(self.default_every).max(1)
    }
}

#[derive(Debug, Clone)]
struct SimNode {
    node_id: String,
    service: String,
    gas_price: Option<f64>,
    has_parking: bool,
    has_lineup: bool,
}

/// Seeded message feed over a fixed node set. Nodes are visited in node_id
/// order, so one seed always yields the same bytes.
#[derive(Debug, Clone)]
pub struct StreamSimulator {
    schedule: Schedule,
    nodes: Vec<SimNode>,
    rng: ChaCha8Rng,
    tick: u64,
}

impl StreamSimulator {
    pub fn new<'a, I>(documents: I, schedule: Schedule, seed: u64) -> Self
    where
        I: IntoIterator<Item = &'a DeviceDocument>,
    {
        let mut nodes: Vec<SimNode> = documents
            .into_iter()
            .map(|d| SimNode {
                node_id: d.node_id.clone(),
                service: d.service_name.clone(),
                gas_price: d.extra.get("gas_price").and_then(FieldValue::as_f64),
                has_parking: d.extra.contains_key("parking_available"),
                has_lineup: d.extra.contains_key("lineup_count"),
            })
            .collect();
        nodes.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        Self { schedule, nodes, rng: ChaCha8Rng::seed_from_u64(seed), tick: 0 }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn now(&self) -> Timestamp {
        self.schedule.start + Duration::seconds(self.schedule.tick_seconds * self.tick as i64)
    }

    pub fn next_tick(&mut self) -> Vec<UidiMessage> {
        self.tick += 1;
        let at = self.now();
        let mut out = Vec::new();
        for node in &mut self.nodes {
            if self.tick % self.schedule.cadence(&node.service) as u64 != 0 {
                continue;
            }
            let mut msg = UidiMessage::input(node.node_id.clone(), at)
                .with("occupancy_factor", self.schedule.occupancy.sample(&mut self.rng, at));
            if node.has_parking {
                msg = msg.with("parking_available", self.rng.gen_bool(self.schedule.parking_free_p));
            }
            if let Some(price) = node.gas_price.as_mut() {
                let step: f64 = self.rng.gen_range(-0.03..=0.03);
                *price = ((*price + step).clamp(1.0, 2.5) * 1000.0).round() / 1000.0;
                msg = msg.with("gas_price", *price);
            }
            if node.has_lineup {
                msg = msg.with("lineup_count", Value::from(self.rng.gen_range(0..=self.schedule.max_lineup)));
            }
            out.push(msg);
        }
        out
    }
}

impl Iterator for StreamSimulator {
    type Item = Vec<UidiMessage>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_tick())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::GeoPoint;
    use chrono::{TimeZone, Utc};

    fn start() -> Timestamp {
        Utc.with_ymd_and_hms(2024, 10, 1, 8, 0, 0).unwrap()
    }

    fn docs(n: usize) -> Vec<DeviceDocument> {
        (0..n)
            .map(|i| DeviceDocument {
                node_id: format!("n{i:02}"),
                service_name: "gym".into(),
                display_name: format!("Gym {i}"),
                address: String::new(),
                location: GeoPoint::new(43.7, -79.4).unwrap(),
                rate: Some(4.0),
                occupancy_factor: Some(0.5),
                extra: Default::default(),
                updated_at: start(),
            })
            .collect()
    }

    fn encode(msgs: &[UidiMessage]) -> String {
        msgs.iter().map(|m| serde_json::to_string(m).unwrap() + "\n").collect()
    }

    #[test]
    fn ten_nodes_one_tick_is_reproducible() {
        let d = docs(10);
        let a = StreamSimulator::new(&d, Schedule::starting_at(start()), 0).next_tick();
        let b = StreamSimulator::new(&d, Schedule::starting_at(start()), 0).next_tick();
        assert_eq!(a.len(), 10);
        assert_eq!(encode(&a), encode(&b));
    }

    #[test]
    fn no_nodes_no_messages() {
        let mut sim = StreamSimulator::new(&[], Schedule::starting_at(start()), 0);
        assert!(sim.by_ref().take(5).all(|t| t.is_empty()));
    }

    #[test]
    fn occupancy_stays_in_range() {
        let curve = OccupancyCurve { base: 0.5, amplitude: 0.6, noise_sd: 0.3 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let violations = (0..100_000)
            .map(|i| curve.sample(&mut rng, start() + Duration::minutes(i)))
            .filter(|v| !(0.0..=1.0).contains(v))
            .count();
        assert_eq!(violations, 0);
    }

    #[test]
    fn cadence_skips_ticks() {
        let d = docs(3);
        let mut sched = Schedule::starting_at(start());
        sched.every.insert("gym".into(), 3);
        let counts: Vec<usize> = StreamSimulator::new(&d, sched, 4).take(6).map(|t| t.len()).collect();
        assert_eq!(counts, vec![0, 0, 3, 0, 0, 3]);
    }
}
