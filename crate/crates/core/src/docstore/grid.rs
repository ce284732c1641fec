//! Uniform latitude/longitude bucket grid with exact nearest-k search.
//!
//! Candidates are gathered ring by ring around the origin cell and re-ranked
//! by exact haversine distance. A ring search stops once a proven lower bound
//! on the distance of every unvisited point exceeds the current k-th best.
//! When the next ring would touch more cells than there are occupied buckets
//! (sparse data, far-away origins) the search switches to scanning the
//! occupied buckets in order of their own lower bounds.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::FRAC_PI_2;

use crate::datamodel::{haversine_m, GeoPoint, EARTH_RADIUS_M};

type Cell = (i32, i32);

/// Relative slack applied to lower bounds so rounding never prunes a true neighbour.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub(crate) struct GeoGrid {
    rows: i32,
    cols: i32,
    lat_step: f64,
    lon_step: f64,
    cells: HashMap<Cell, Vec<(String, GeoPoint)>>,
    len: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    distance_m: f64,
    node_id: String,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance_m
            .total_cmp(&other.distance_m)
            .then_with(|| self.node_id.cmp(&other.node_id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded max-heap holding the best `limit` candidates seen so far.
struct TopK {
    limit: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopK {
    fn offer(&mut self, c: Candidate) {
        if self.heap.len() < self.limit {
            self.heap.push(c);
        } else if let Some(worst) = self.heap.peek() {
            if c < *worst {
                self.heap.pop();
                self.heap.push(c);
            }
        }
    }

    fn full(&self) -> bool {
        self.heap.len() >= self.limit
    }

    fn worst_distance(&self) -> f64 {
        self.heap.peek().map_or(f64::INFINITY, |c| c.distance_m)
    }
}

impl GeoGrid {
    pub(crate) fn new(cell_degrees: f64) -> Self {
        let cell = cell_degrees.clamp(1e-4, 90.0);
        let rows = (180.0 / cell).round().max(1.0) as i32;
        let cols = (360.0 / cell).round().max(1.0) as i32;
        Self {
            rows,
            cols,
            lat_step: 180.0 / rows as f64,
            lon_step: 360.0 / cols as f64,
            cells: HashMap::new(),
            len: 0,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    fn cell_of(&self, p: &GeoPoint) -> Cell {
        let row = (((p.lat() + 90.0) / self.lat_step).floor() as i32).clamp(0, self.rows - 1);
        let col = (((p.lon() + 180.0) / self.lon_step).floor() as i32).rem_euclid(self.cols);
        (row, col)
    }

    pub(crate) fn insert(&mut self, node_id: &str, p: GeoPoint) {
        let cell = self.cell_of(&p);
        self.cells.entry(cell).or_default().push((node_id.to_string(), p));
        self.len += 1;
    }

    pub(crate) fn remove(&mut self, node_id: &str, p: &GeoPoint) -> bool {
        let cell = self.cell_of(p);
        let Some(bucket) = self.cells.get_mut(&cell) else {
            return false;
        };
        let Some(pos) = bucket.iter().position(|(id, _)| id == node_id) else {
            return false;
        };
        bucket.swap_remove(pos);
        if bucket.is_empty() {
            self.cells.remove(&cell);
        }
        self.len -= 1;
        true
    }

    pub(crate) fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.cells.values().flatten().map(|(id, _)| id.as_str())
    }

    /// Exact `limit` nearest points passing `accept`, ascending by (distance, node_id).
    pub(crate) fn nearest<F>(&self, origin: &GeoPoint, limit: usize, mut accept: F) -> Vec<(String, f64)>
    where
        F: FnMut(&str) -> bool,
    {
        if limit == 0 || self.len == 0 {
            return Vec::new();
        }
        let mut best = TopK { limit, heap: BinaryHeap::with_capacity(limit + 1) };
        let (r0, c0) = self.cell_of(origin);
        let mut seen = 0usize;
        let mut visit = |bucket: &Vec<(String, GeoPoint)>, best: &mut TopK| {
            for (id, p) in bucket {
                if accept(id) {
                    best.offer(Candidate { distance_m: haversine_m(*origin, *p), node_id: id.clone() });
                }
            }
            bucket.len()
        };

        let occupied = self.cells.len();
        let mut ring = 0i32;
        let mut finished = false;
        loop {
            let cells_in_ring = if ring == 0 { 1 } else { 8 * ring as usize };
            if ring > 0 && (cells_in_ring > occupied || 2 * ring + 1 >= self.cols) {
                break;
            }
            for cell in self.ring_cells(r0, c0, ring) {
                if let Some(bucket) = self.cells.get(&cell) {
                    seen += visit(bucket, &mut best);
                }
            }
            if seen == self.len {
                finished = true;
                break;
            }
            if best.full() && self.outside_block_bound(origin, r0, c0, ring) > best.worst_distance() {
                finished = true;
                break;
            }
            ring += 1;
        }

        if !finished {
            // Sparse fallback over occupied buckets outside the visited block.
            let visited = ring - 1;
            let mut pending: Vec<(f64, Cell)> = self
                .cells
                .keys()
                .filter(|&&(r, c)| {
                    visited < 0 || (r - r0).abs() > visited || self.col_distance(c, c0) > visited
                })
                .map(|&cell| (self.cell_bound(origin, cell), cell))
                .collect();
            pending.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (bound, cell) in pending {
                if best.full() && bound > best.worst_distance() {
                    break;
                }
                visit(&self.cells[&cell], &mut best);
            }
        }

        let mut out = best.heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.node_id, c.distance_m)).collect()
    }

    fn col_distance(&self, a: i32, b: i32) -> i32 {
        let d = (a - b).rem_euclid(self.cols);
        d.min(self.cols - d)
    }

    fn ring_cells(&self, r0: i32, c0: i32, ring: i32) -> Vec<Cell> {
        let wrap = |c: i32| c.rem_euclid(self.cols);
        if ring == 0 {
            return vec![(r0, wrap(c0))];
        }
        let mut out = Vec::with_capacity(8 * ring as usize);
        for dr in -ring..=ring {
            let r = r0 + dr;
            if r < 0 || r >= self.rows {
                continue;
            }
            if dr.abs() == ring {
                for dc in -ring..=ring {
                    out.push((r, wrap(c0 + dc)));
                }
            } else {
                out.push((r, wrap(c0 - ring)));
                out.push((r, wrap(c0 + ring)));
            }
        }
        out
    }

    /// Lower bound on the distance from `origin` to any point outside the
    /// (2·ring+1)² block of cells centred on the origin cell.
    fn outside_block_bound(&self, origin: &GeoPoint, r0: i32, c0: i32, ring: i32) -> f64 {
        let lat = origin.lat();
        let below = if r0 - ring <= 0 {
            f64::INFINITY
        } else {
            lat - (-90.0 + (r0 - ring) as f64 * self.lat_step)
        };
        let above = if r0 + ring >= self.rows - 1 {
            f64::INFINITY
        } else {
            (-90.0 + (r0 + ring + 1) as f64 * self.lat_step) - lat
        };
        let lat_bound = meridian_bound(below.min(above));

        let lon_bound = if 2 * ring + 1 >= self.cols {
            f64::INFINITY
        } else {
            // Unwrapped longitude of the origin inside its own column.
            let base = -180.0 + c0 as f64 * self.lon_step;
            let offset = origin.lon() + 180.0 - (origin.lon() + 180.0).div_euclid(self.lon_step) * self.lon_step;
            let unwrapped = base + offset;
            let west = unwrapped - (-180.0 + (c0 - ring) as f64 * self.lon_step);
            let east = (-180.0 + (c0 + ring + 1) as f64 * self.lon_step) - unwrapped;
            parallel_bound(lat, west.min(east))
        };
        lat_bound.min(lon_bound) * (1.0 - BOUND_SLACK)
    }

    fn cell_bound(&self, origin: &GeoPoint, (r, c): Cell) -> f64 {
        let lat_lo = -90.0 + r as f64 * self.lat_step;
        let lat_hi = lat_lo + self.lat_step;
        let lat = origin.lat();
        let lat_gap = if lat < lat_lo {
            lat_lo - lat
        } else if lat > lat_hi {
            lat - lat_hi
        } else {
            0.0
        };
        let lon_lo = -180.0 + c as f64 * self.lon_step;
        let lon_hi = lon_lo + self.lon_step;
        let lon = origin.lon();
        let lon_gap = if (lon_lo..=lon_hi).contains(&lon) {
            0.0
        } else {
            angular_gap(lon, lon_lo).min(angular_gap(lon, lon_hi))
        };
        meridian_bound(lat_gap).max(parallel_bound(lat, lon_gap)) * (1.0 - BOUND_SLACK)
    }
}

/// Shortest angular difference between two longitudes, degrees in [0, 180].
fn angular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Any two points whose latitudes differ by `gap_deg` are at least this far apart.
fn meridian_bound(gap_deg: f64) -> f64 {
    if gap_deg.is_infinite() {
        return f64::INFINITY;
    }
    EARTH_RADIUS_M * gap_deg.max(0.0).to_radians()
}

/// Any point whose longitude differs from the origin's by at least `gap_deg`
/// lies at least the distance from the origin to the meridian great circle at
/// that offset: asin(cos φ · sin Δλ), with Δλ capped at 90°.
fn parallel_bound(origin_lat: f64, gap_deg: f64) -> f64 {
    if gap_deg.is_infinite() {
        return f64::INFINITY;
    }
    let dl = gap_deg.max(0.0).to_radians().min(FRAC_PI_2);
    let s = (origin_lat.to_radians().cos().abs() * dl.sin()).min(1.0);
    EARTH_RADIUS_M * s.asin()
}
