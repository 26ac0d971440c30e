//! Network scenarios, interference patterns and per-pattern link efficiencies.

use std::collections::HashMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thermal noise floor used when a scenario does not specify one.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;
/// Pathloss distances below this are clamped.
pub const MIN_DISTANCE_M: f64 = 10.0;
/// Largest station count for which every subset may be enumerated.
pub const MAX_FULL_STATIONS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationClass {
    Macro,
    Pico,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: usize,
    pub class: StationClass,
    pub position: Point,
    /// Flat transmit PSD over the whole band.
    pub tx_psd_dbm_per_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub id: usize,
    pub position: Point,
    #[serde(default = "default_noise")]
    pub noise_psd_dbm_per_hz: f64,
}

fn default_noise() -> f64 {
    THERMAL_NOISE_DBM_PER_HZ
}

/// Transmit PSD of a station radiating `power_dbm` flat over `bandwidth_hz`.
pub fn psd_from_power(power_dbm: f64, bandwidth_hz: f64) -> f64 {
    power_dbm - 10.0 * bandwidth_hz.log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Distance-dependent pathloss in dB (urban macro / urban micro models,
/// distance in kilometres).
pub fn pathloss_db(class: StationClass, distance_m: f64) -> f64 {
    let r_km = distance_m.max(MIN_DISTANCE_M) / 1000.0;
    match class {
        StationClass::Macro => 128.1 + 37.6 * r_km.log10(),
        StationClass::Pico => 140.7 + 36.7 * r_km.log10(),
    }
}

/// Immutable network description. Stations are ordered macros first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioFile", into = "ScenarioFile")]
pub struct Scenario {
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub stations: Vec<Station>,
    pub groups: Vec<Group>,
    pub total_bandwidth_hz: f64,
    pub mean_packet_bits: f64,
    pub sinr_cap_db: Option<f64>,
    /// Linear power gain, indexed `[station][group]`.
    pub link_gain: Vec<Vec<f64>>,
}

/// On-disk form of [`Scenario`]; gains are recomputed from pathloss when absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioFile {
    area_width_m: f64,
    area_height_m: f64,
    stations: Vec<Station>,
    groups: Vec<Group>,
    total_bandwidth_hz: f64,
    mean_packet_bits: f64,
    #[serde(default)]
    sinr_cap_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    link_gain: Option<Vec<Vec<f64>>>,
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = Error;

    fn try_from(f: ScenarioFile) -> Result<Self> {
        Scenario::new(
            f.area_width_m,
            f.area_height_m,
            f.stations,
            f.groups,
            f.total_bandwidth_hz,
            f.mean_packet_bits,
            f.sinr_cap_db,
            f.link_gain,
        )
    }
}

impl From<Scenario> for ScenarioFile {
    fn from(s: Scenario) -> Self {
        ScenarioFile {
            area_width_m: s.area_width_m,
            area_height_m: s.area_height_m,
            stations: s.stations,
            groups: s.groups,
            total_bandwidth_hz: s.total_bandwidth_hz,
            mean_packet_bits: s.mean_packet_bits,
            sinr_cap_db: s.sinr_cap_db,
            link_gain: Some(s.link_gain),
        }
    }
}

impl Scenario {
    /// Builds and validates a scenario. Missing gains are derived from the
    /// pathloss models.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        area_width_m: f64,
        area_height_m: f64,
        stations: Vec<Station>,
        groups: Vec<Group>,
        total_bandwidth_hz: f64,
        mean_packet_bits: f64,
        sinr_cap_db: Option<f64>,
        link_gain: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if !(total_bandwidth_hz > 0.0) || !(mean_packet_bits > 0.0) {
            return Err(Error::Invalid("bandwidth and packet length must be positive".into()));
        }
        if stations.len() > 63 {
            return Err(Error::Invalid("at most 63 stations are supported".into()));
        }
        let mut seen_pico = false;
        for (i, s) in stations.iter().enumerate() {
            if s.id != i {
                return Err(Error::Invalid(format!("station {i} has id {}", s.id)));
            }
            match s.class {
                StationClass::Pico => seen_pico = true,
                StationClass::Macro if seen_pico => {
                    return Err(Error::Invalid("macro stations must precede pico stations".into()))
                }
                StationClass::Macro => {}
            }
        }
        for (j, g) in groups.iter().enumerate() {
            if g.id != j {
                return Err(Error::Invalid(format!("group {j} has id {}", g.id)));
            }
        }
        let link_gain = match link_gain {
            Some(g) => g,
            None => stations
                .iter()
                .map(|s| {
                    groups
                        .iter()
                        .map(|g| db_to_linear(-pathloss_db(s.class, s.position.distance(&g.position))))
                        .collect()
                })
                .collect(),
        };
        if link_gain.len() != stations.len() || link_gain.iter().any(|r| r.len() != groups.len()) {
            return Err(Error::Invalid("link gain matrix has wrong shape".into()));
        }
        if link_gain.iter().flatten().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::Invalid("link gains must be positive and finite".into()));
        }
        Ok(Scenario {
            area_width_m,
            area_height_m,
            stations,
            groups,
            total_bandwidth_hz,
            mean_packet_bits,
            sinr_cap_db,
            link_gain,
        })
    }

    pub fn num_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_macros(&self) -> usize {
        self.stations.iter().filter(|s| s.class == StationClass::Macro).count()
    }

    pub fn num_picos(&self) -> usize {
        self.num_stations() - self.num_macros()
    }

    /// Station ids of all picos, in order.
    pub fn picos(&self) -> std::ops::Range<usize> {
        self.num_macros()..self.num_stations()
    }

    pub fn is_pico(&self, station: usize) -> bool {
        self.stations[station].class == StationClass::Pico
    }

    /// Pattern containing every station.
    pub fn all_stations(&self) -> Pattern {
        Pattern::from_members(0..self.num_stations())
    }

    fn tx_linear(&self, i: usize) -> f64 {
        db_to_linear(self.stations[i].tx_psd_dbm_per_hz)
    }

    fn noise_linear(&self, j: usize) -> f64 {
        db_to_linear(self.groups[j].noise_psd_dbm_per_hz)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Hexagonal-grid scenario generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HexConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub cols: usize,
    pub rows: usize,
    pub macro_positions: Vec<Point>,
    pub pico_count: usize,
    pub seed: u64,
    pub macro_power_dbm: f64,
    pub pico_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub packet_bits: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub sinr_cap_db: Option<f64>,
}

impl Default for HexConfig {
    fn default() -> Self {
        Self::desk(4, 1)
    }
}

impl HexConfig {
    /// Desk-scale profile: 12 hexagons of roughly the large profile's cell
    /// size, two macros.
    pub fn desk(pico_count: usize, seed: u64) -> Self {
        Self {
            width_m: 330.0,
            height_m: 360.0,
            cols: 3,
            rows: 4,
            macro_positions: vec![Point::new(60.0, 180.0), Point::new(270.0, 180.0)],
            pico_count,
            seed,
            macro_power_dbm: 46.0,
            pico_power_dbm: 30.0,
            bandwidth_hz: 10e6,
            packet_bits: 0.5e6,
            noise_psd_dbm_per_hz: THERMAL_NOISE_DBM_PER_HZ,
            sinr_cap_db: Some(30.0),
        }
    }

    /// 500 m x 1000 m area with 66 hexagons, two macros and ten picos.
    pub fn large(seed: u64) -> Self {
        Self {
            width_m: 500.0,
            height_m: 1000.0,
            cols: 6,
            rows: 11,
            macro_positions: vec![Point::new(125.0, 500.0), Point::new(375.0, 500.0)],
            pico_count: 10,
            seed,
            ..Self::desk(10, seed)
        }
    }
}

/// Hexagon circumradius fitting `cols x rows` pointy-top hexagons (odd rows
/// shifted right by half a hexagon) into the area.
fn hex_size(cfg: &HexConfig) -> f64 {
    let sqrt3 = 3f64.sqrt();
    let by_width = cfg.width_m / (sqrt3 * (cfg.cols as f64 + 0.5));
    let by_height = cfg.height_m / (1.5 * cfg.rows as f64 + 0.5);
    by_width.min(by_height)
}

fn hex_center(a: f64, col: usize, row: usize) -> Point {
    let sqrt3 = 3f64.sqrt();
    let shift = if row % 2 == 1 { 0.5 } else { 0.0 };
    Point::new(sqrt3 * a * (col as f64 + 0.5 + shift), a * (1.0 + 1.5 * row as f64))
}

/// Distinct hexagon vertices, sorted by (y, x).
fn hex_vertices(a: f64, centers: &[Point]) -> Vec<Point> {
    let mut keyed: Vec<((i64, i64), Point)> = Vec::new();
    for c in centers {
        for k in 0..6 {
            let theta = (30.0 + 60.0 * k as f64).to_radians();
            let p = Point::new(c.x + a * theta.cos(), c.y + a * theta.sin());
            let key = ((p.y * 1e3).round() as i64, (p.x * 1e3).round() as i64);
            keyed.push((key, p));
        }
    }
    keyed.sort_by_key(|(k, _)| *k);
    keyed.dedup_by_key(|(k, _)| *k);
    keyed.into_iter().map(|(_, p)| p).collect()
}

/// Builds a scenario on a hexagonal grid: one user group per hexagon centre,
/// macros snapped to the nearest vertex, picos drawn uniformly without
/// replacement from the remaining vertices.
pub fn build_hex_scenario(cfg: &HexConfig) -> Result<Scenario> {
    if cfg.cols == 0 || cfg.rows == 0 || !(cfg.width_m > 0.0) || !(cfg.height_m > 0.0) {
        return Err(Error::Invalid("grid dimensions must be positive".into()));
    }
    for p in &cfg.macro_positions {
        if p.x < 0.0 || p.y < 0.0 || p.x > cfg.width_m || p.y > cfg.height_m {
            return Err(Error::Invalid(format!("macro position ({}, {}) outside area", p.x, p.y)));
        }
    }
    let a = hex_size(cfg);
    let mut centers = Vec::with_capacity(cfg.cols * cfg.rows);
    for row in 0..cfg.rows {
        for col in 0..cfg.cols {
            centers.push(hex_center(a, col, row));
        }
    }
    let mut vertices = hex_vertices(a, &centers);

    let mut macro_points = Vec::new();
    for p in &cfg.macro_positions {
        if vertices.is_empty() {
            return Err(Error::Invalid("not enough vertices for macros".into()));
        }
        let (idx, _) = vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.distance(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        macro_points.push(vertices.remove(idx));
    }
    if cfg.pico_count > vertices.len() {
        return Err(Error::Invalid(format!(
            "{} picos requested but only {} free vertices",
            cfg.pico_count,
            vertices.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chosen = rand::seq::index::sample(&mut rng, vertices.len(), cfg.pico_count).into_vec();
    chosen.sort_unstable();

    let macro_psd = psd_from_power(cfg.macro_power_dbm, cfg.bandwidth_hz);
    let pico_psd = psd_from_power(cfg.pico_power_dbm, cfg.bandwidth_hz);
    let mut stations = Vec::new();
    for p in macro_points {
        stations.push(Station {
            id: stations.len(),
            class: StationClass::Macro,
            position: p,
            tx_psd_dbm_per_hz: macro_psd,
        });
    }
    for idx in chosen {
        stations.push(Station {
            id: stations.len(),
            class: StationClass::Pico,
            position: vertices[idx],
            tx_psd_dbm_per_hz: pico_psd,
        });
    }
    let groups = centers
        .into_iter()
        .enumerate()
        .map(|(id, position)| Group {
            id,
            position,
            noise_psd_dbm_per_hz: cfg.noise_psd_dbm_per_hz,
        })
        .collect();
    Scenario::new(
        cfg.width_m,
        cfg.height_m,
        stations,
        groups,
        cfg.bandwidth_hz,
        cfg.packet_bits,
        cfg.sinr_cap_db,
        None,
    )
}

/// A subset of stations sharing a slice of spectrum; bit `i` is station `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Pattern(pub u64);

impl Pattern {
    pub const EMPTY: Pattern = Pattern(0);

    pub fn singleton(i: usize) -> Self {
        Pattern(1 << i)
    }

    pub fn from_members(members: impl IntoIterator<Item = usize>) -> Self {
        Pattern(members.into_iter().fold(0, |acc, i| acc | (1u64 << i)))
    }

    pub fn contains(&self, i: usize) -> bool {
        i < 64 && self.0 & (1 << i) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn with(&self, i: usize) -> Self {
        Pattern(self.0 | (1 << i))
    }

    pub fn without(&self, i: usize) -> Self {
        Pattern(self.0 & !(1 << i))
    }

    pub fn intersects(&self, other: Pattern) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset(&self, other: Pattern) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn members(&self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..64).filter(move |i| bits & (1 << i) != 0)
    }

    /// Hex key as used in allocation files, e.g. `0x5`.
    pub fn to_hex(&self) -> String {
        format!("{:#x}", self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let digits = s.trim_start_matches("0x").trim_start_matches("0X");
        u64::from_str_radix(digits, 16)
            .map(Pattern)
            .map_err(|e| Error::Invalid(format!("bad pattern key {s:?}: {e}")))
    }
}

impl From<Pattern> for String {
    fn from(p: Pattern) -> String {
        p.to_hex()
    }
}

impl TryFrom<String> for Pattern {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Pattern::from_hex(&s)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:x}", self.0)
    }
}

/// Rule used to select which patterns are offered to the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternPolicy {
    Full,
    MaxCardinality { max: usize },
    DistancePruned { radius_m: f64 },
}

impl fmt::Display for PatternPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternPolicy::Full => write!(f, "full"),
            PatternPolicy::MaxCardinality { max } => write!(f, "max-card:{max}"),
            PatternPolicy::DistancePruned { radius_m } => write!(f, "distance:{radius_m}"),
        }
    }
}

impl std::str::FromStr for PatternPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("unknown pattern policy {s:?}"));
        if s == "full" {
            return Ok(PatternPolicy::Full);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "max-card" => Ok(PatternPolicy::MaxCardinality {
                max: arg.parse().map_err(|_| bad())?,
            }),
            "distance" => Ok(PatternPolicy::DistancePruned {
                radius_m: arg.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Ordered, duplicate-free collection of patterns.
#[derive(Debug, Clone)]
pub struct PatternSet {
    patterns: Vec<Pattern>,
    policy: PatternPolicy,
    index: HashMap<Pattern, usize>,
}

impl PatternSet {
    pub fn new(mut patterns: Vec<Pattern>, policy: PatternPolicy) -> Self {
        patterns.sort_unstable();
        patterns.dedup();
        let index = patterns.iter().enumerate().map(|(k, p)| (*p, k)).collect();
        Self {
            patterns,
            policy,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn policy(&self) -> PatternPolicy {
        self.policy
    }

    pub fn index_of(&self, p: Pattern) -> Option<usize> {
        self.index.get(&p).copied()
    }

    pub fn contains(&self, p: Pattern) -> bool {
        self.index.contains_key(&p)
    }

    /// Indices of the patterns that avoid every station in `removed`.
    pub fn indices_avoiding(&self, removed: Pattern) -> Vec<usize> {
        (0..self.patterns.len())
            .filter(|&k| !self.patterns[k].intersects(removed))
            .collect()
    }
}

fn combinations(n: usize, k: usize, out: &mut Vec<Pattern>) {
    fn rec(start: usize, n: usize, left: usize, acc: u64, out: &mut Vec<Pattern>) {
        if left == 0 {
            out.push(Pattern(acc));
            return;
        }
        for i in start..=n - left {
            rec(i + 1, n, left - 1, acc | (1 << i), out);
        }
    }
    if k <= n {
        rec(0, n, k, 0, out);
    }
}

pub fn enumerate_patterns(scenario: &Scenario, policy: PatternPolicy) -> Result<PatternSet> {
    let n = scenario.num_stations();
    let mut patterns = Vec::new();
    match policy {
        PatternPolicy::Full => {
            if n > MAX_FULL_STATIONS {
                return Err(Error::Refused(format!(
                    "full pattern enumeration over {n} stations exceeds the {MAX_FULL_STATIONS}-station limit"
                )));
            }
            patterns.extend((0..1u64 << n).map(Pattern));
        }
        PatternPolicy::MaxCardinality { max } => {
            for size in 0..=max.min(n) {
                combinations(n, size, &mut patterns);
            }
            patterns.push(scenario.all_stations());
        }
        PatternPolicy::DistancePruned { radius_m } => {
            let covers: Vec<Vec<bool>> = scenario
                .stations
                .iter()
                .map(|s| {
                    scenario
                        .groups
                        .iter()
                        .map(|g| s.position.distance(&g.position) <= radius_m)
                        .collect()
                })
                .collect();
            let compatible =
                |a: usize, b: usize| covers[a].iter().zip(&covers[b]).any(|(x, y)| *x && *y);
            // Grow patterns one station at a time, keeping only pairwise-compatible sets.
            let mut frontier = vec![Pattern::EMPTY];
            patterns.push(Pattern::EMPTY);
            while let Some(p) = frontier.pop() {
                let top = p.members().last().map_or(0, |t| t + 1);
                for i in top..n {
                    if p.members().all(|m| compatible(m, i)) {
                        let q = p.with(i);
                        patterns.push(q);
                        frontier.push(q);
                    }
                }
            }
        }
    }
    for i in 0..n {
        patterns.push(Pattern::singleton(i));
    }
    patterns.push(Pattern::EMPTY);
    Ok(PatternSet::new(patterns, policy))
}

fn capped(scenario: &Scenario, sinr: f64) -> f64 {
    match scenario.sinr_cap_db {
        Some(cap) => sinr.min(db_to_linear(cap)),
        None => sinr,
    }
}

/// Service rate per unit of bandwidth (packets/second) of link `i -> j`
/// when exactly the stations of `pattern` transmit.
pub fn spectral_efficiency(scenario: &Scenario, i: usize, j: usize, pattern: Pattern) -> f64 {
    if !pattern.contains(i) {
        return 0.0;
    }
    let signal = scenario.tx_linear(i) * scenario.link_gain[i][j];
    let interference: f64 = pattern
        .members()
        .filter(|&other| other != i)
        .map(|other| scenario.tx_linear(other) * scenario.link_gain[other][j])
        .sum();
    let sinr = capped(scenario, signal / (interference + scenario.noise_linear(j)));
    scenario.total_bandwidth_hz / scenario.mean_packet_bits * (1.0 + sinr).log2()
}

/// Dense table of efficiencies for every (station, group, pattern).
#[derive(Debug, Clone)]
pub struct EfficiencyTable {
    n: usize,
    k: usize,
    patterns: PatternSet,
    values: Vec<f64>,
}

impl EfficiencyTable {
    pub fn num_stations(&self) -> usize {
        self.n
    }

    pub fn num_groups(&self) -> usize {
        self.k
    }

    pub fn patterns(&self) -> &PatternSet {
        &self.patterns
    }

    /// Efficiency of `station -> group` under the pattern at `pattern_idx`.
    #[inline]
    pub fn value(&self, station: usize, group: usize, pattern_idx: usize) -> f64 {
        self.values[(pattern_idx * self.n + station) * self.k + group]
    }

    pub fn value_for(&self, station: usize, group: usize, pattern: Pattern) -> Option<f64> {
        self.patterns.index_of(pattern).map(|a| self.value(station, group, a))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn build_efficiency_table(scenario: &Scenario, patterns: &PatternSet) -> EfficiencyTable {
    let (n, k) = (scenario.num_stations(), scenario.num_groups());
    let mut values = vec![0.0; patterns.len() * n * k];
    for (a, &pattern) in patterns.patterns().iter().enumerate() {
        for i in pattern.members() {
            for j in 0..k {
                values[(a * n + i) * k + j] = spectral_efficiency(scenario, i, j, pattern);
            }
        }
    }
    EfficiencyTable {
        n,
        k,
        patterns: patterns.clone(),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::two_station;
    use approx::assert_relative_eq;

    #[test]
    fn pathloss_reference_points() {
        assert_relative_eq!(pathloss_db(StationClass::Macro, 1000.0), 128.1, epsilon = 1e-12);
        assert_relative_eq!(pathloss_db(StationClass::Pico, 1000.0), 140.7, epsilon = 1e-12);
        assert_relative_eq!(pathloss_db(StationClass::Macro, 100.0), 90.5, epsilon = 1e-12);
        assert_eq!(pathloss_db(StationClass::Macro, 1.0), pathloss_db(StationClass::Macro, 10.0));
    }

    #[test]
    fn capped_single_station_efficiency() {
        let s = two_station(THERMAL_NOISE_DBM_PER_HZ, [[1e-9], [1e-9]]);
        let v = spectral_efficiency(&s, 0, 0, Pattern::singleton(0));
        let expected = 20.0 * 1001f64.log2();
        assert_relative_eq!(v, expected, max_relative = 1e-12);
        assert!((v - 199.3445).abs() < 1e-4);
    }

    #[test]
    fn symmetric_interference_gives_unit_sinr() {
        let s = two_station(-400.0, [[1e-9], [1e-9]]);
        let v = spectral_efficiency(&s, 0, 0, Pattern::from_members([0, 1]));
        assert_relative_eq!(v, 20.0, max_relative = 1e-12);
    }

    #[test]
    fn station_outside_pattern_has_zero_efficiency() {
        let s = two_station(THERMAL_NOISE_DBM_PER_HZ, [[1e-9], [1e-9]]);
        assert_eq!(spectral_efficiency(&s, 0, 0, Pattern::singleton(1)), 0.0);
        assert_eq!(spectral_efficiency(&s, 0, 0, Pattern::EMPTY), 0.0);
    }

    #[test]
    fn two_station_full_patterns() {
        let s = two_station(THERMAL_NOISE_DBM_PER_HZ, [[1e-9], [1e-12]]);
        let set = enumerate_patterns(&s, PatternPolicy::Full).unwrap();
        let expected: Vec<Pattern> = vec![Pattern(0), Pattern(1), Pattern(2), Pattern(3)];
        assert_eq!(set.patterns(), expected.as_slice());
        let table = build_efficiency_table(&s, &set);
        assert_eq!(table.len(), 8);
        let zeros = (0..4)
            .flat_map(|a| (0..2).map(move |i| (a, i)))
            .filter(|&(a, i)| table.value(i, 0, a) == 0.0)
            .count();
        assert_eq!(zeros, 4);
        let alone = table.value_for(0, 0, Pattern(1)).unwrap();
        let shared = table.value_for(0, 0, Pattern(3)).unwrap();
        assert!(alone >= shared);
        assert!((0..2).all(|i| table.value(i, 0, 0) == 0.0));
    }

    #[test]
    fn pattern_counts_by_policy() {
        let cfg = HexConfig::desk(3, 7);
        let s = build_hex_scenario(&cfg).unwrap();
        assert_eq!(s.num_stations(), 5);
        let mc = enumerate_patterns(&s, PatternPolicy::MaxCardinality { max: 1 }).unwrap();
        assert_eq!(mc.len(), 7);
        assert!(mc.contains(s.all_stations()));
        let mut big = HexConfig::large(42);
        big.pico_count = 10;
        let s12 = build_hex_scenario(&big).unwrap();
        assert_eq!(enumerate_patterns(&s12, PatternPolicy::Full).unwrap().len(), 4096);
    }

    #[test]
    fn distance_pruning_keeps_singletons() {
        let s = build_hex_scenario(&HexConfig::desk(4, 3)).unwrap();
        let tiny = enumerate_patterns(&s, PatternPolicy::DistancePruned { radius_m: 1.0 }).unwrap();
        assert_eq!(tiny.len(), 1 + s.num_stations());
        let wide = enumerate_patterns(&s, PatternPolicy::DistancePruned { radius_m: 1e6 }).unwrap();
        assert_eq!(wide.len(), 1 << s.num_stations());
    }

    #[test]
    fn full_enumeration_refused_for_large_networks() {
        let mut cfg = HexConfig::large(1);
        cfg.cols = 8;
        cfg.pico_count = 30;
        let s = build_hex_scenario(&cfg).unwrap();
        assert!(matches!(enumerate_patterns(&s, PatternPolicy::Full), Err(Error::Refused(_))));
    }

    #[test]
    fn large_profile_dimensions_and_determinism() {
        let a = build_hex_scenario(&HexConfig::large(42)).unwrap();
        assert_eq!(a.num_stations(), 12);
        assert_eq!(a.num_groups(), 66);
        assert_eq!(a.num_macros(), 2);
        let b = build_hex_scenario(&HexConfig::large(42)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = build_hex_scenario(&HexConfig::large(43)).unwrap();
        assert_ne!(a.stations, c.stations);
    }

    #[test]
    fn no_picos_gives_macro_only_network() {
        let s = build_hex_scenario(&HexConfig::desk(0, 5)).unwrap();
        assert_eq!(s.num_stations(), 2);
        assert_eq!(s.num_picos(), 0);
    }

    #[test]
    fn too_many_picos_rejected() {
        let cfg = HexConfig::desk(500, 5);
        assert!(matches!(build_hex_scenario(&cfg), Err(Error::Invalid(_))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = build_hex_scenario(&HexConfig::desk(3, 2)).unwrap();
        let text = s.to_json().unwrap();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn json_round_trip_recomputes_missing_gains() {
        let s = build_hex_scenario(&HexConfig::desk(2, 9)).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("link_gain");
        let back: Scenario = serde_json::from_value(v).unwrap();
        for (a, b) in s.link_gain.iter().flatten().zip(back.link_gain.iter().flatten()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_macro_after_pico() {
        let mut s = build_hex_scenario(&HexConfig::desk(1, 2)).unwrap();
        s.stations[2].class = StationClass::Macro;
        s.stations[1].class = StationClass::Pico;
        let text = serde_json::to_string(&s).unwrap();
        assert!(Scenario::from_json(&text).is_err());
    }
}
