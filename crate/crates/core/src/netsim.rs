//! Discrete-event simulation of optical sensor nodes that harvest ambient
//! light, sleep fully powered off, and wake their neighbours with LED flashes.
//!
//! Each node carries a design 1 wake-up receiver, a harvesting cell behind a
//! front-end, an LED and an MCU with a fixed validate/measure/transmit/
//! flash-forward cycle. All energy flows go through an [`EnergyLedger`] whose
//! balance is exact up to float rounding.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::circuit::{standby_current, step_frontend, Design1Netlist, Design1Sim, HarvestFrontEnd};
use crate::devices::SolarCellModel;
use crate::error::{domain, Error, Result};
use crate::experiments::Bench;
use crate::optics::{ambient_at, irradiance, AmbientProfile, LinkGeometry, OpticalSource};

/// Area of the harvesting cell [mm²].
pub const HARVEST_CELL_AREA: f64 = 250.0;
/// Series cells in the harvesting string.
pub const HARVEST_CELL_SERIES: f64 = 3.0;
/// Longest harvesting sub-step between events [s].
pub const MAX_HARVEST_STEP: f64 = 1.0;

/// Stages of an MCU duty cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Validate,
    Measure,
    Transmit,
    FlashForward,
}

impl Phase {
    fn next(self) -> Option<Phase> {
        match self {
            Phase::Validate => Some(Phase::Measure),
            Phase::Measure => Some(Phase::Transmit),
            Phase::Transmit => Some(Phase::FlashForward),
            Phase::FlashForward => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Phase::Validate => "validate",
            Phase::Measure => "measure",
            Phase::Transmit => "transmit",
            Phase::FlashForward => "flash_forward",
        }
    }
}

/// Power state of a node. While `Active` the MCU holds its own supply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeState {
    PowerOff,
    /// Powered through the wake-up switch while validating the flash.
    Waking,
    Active(Phase),
}

/// MCU consumption model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McuProfile {
    /// Supply current while awake [A].
    pub active_current: f64,
    pub supply_voltage: f64,
    /// Phase durations [s].
    pub validate: f64,
    pub measure: f64,
    pub transmit: f64,
    pub flash_forward: f64,
}

impl Default for McuProfile {
    fn default() -> Self {
        Self {
            active_current: 1.2e-3,
            supply_voltage: 2.8,
            validate: 10e-3,
            measure: 50e-3,
            transmit: 100e-3,
            flash_forward: 50e-3,
        }
    }
}

impl McuProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.active_current > 0.0 && self.supply_voltage > 0.0) {
            return Err(domain("active_current and supply_voltage must be > 0"));
        }
        for (name, d) in [
            ("validate", self.validate),
            ("measure", self.measure),
            ("transmit", self.transmit),
            ("flash_forward", self.flash_forward),
        ] {
            if !(d > 0.0) {
                return Err(domain(format!("phase duration {name} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn duration(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Validate => self.validate,
            Phase::Measure => self.measure,
            Phase::Transmit => self.transmit,
            Phase::FlashForward => self.flash_forward,
        }
    }

    pub fn phase_energy(&self, phase: Phase) -> f64 {
        self.active_current * self.supply_voltage * self.duration(phase)
    }

    /// Energy of a full wake cycle [J]. A node whose store holds less than
    /// this browns out on wake and ignores the flash.
    pub fn cycle_energy(&self) -> f64 {
        [
            Phase::Validate,
            Phase::Measure,
            Phase::Transmit,
            Phase::FlashForward,
        ]
        .iter()
        .map(|&p| self.phase_energy(p))
        .sum()
    }
}

/// Energy bookkeeping for one node [J].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub initial: f64,
    pub harvested: f64,
    pub consumed_standby: f64,
    pub consumed_active: f64,
    /// Harvest discarded because the store was full.
    pub clamp_loss: f64,
    /// Demand that could not be met from an empty store.
    pub shortfall: f64,
    pub stored: f64,
    pub capacity: f64,
}

impl EnergyLedger {
    pub fn new(initial: f64, capacity: f64) -> Self {
        let initial = initial.clamp(0.0, capacity);
        Self {
            initial,
            harvested: 0.0,
            consumed_standby: 0.0,
            consumed_active: 0.0,
            clamp_loss: 0.0,
            shortfall: 0.0,
            stored: initial,
            capacity,
        }
    }

    pub fn credit(&mut self, e: f64) {
        self.harvested += e;
        self.stored += e;
        if self.stored > self.capacity {
            self.clamp_loss += self.stored - self.capacity;
            self.stored = self.capacity;
        }
    }

    fn debit(&mut self, e: f64, active: bool) -> bool {
        let take = e.min(self.stored);
        self.stored -= take;
        if active {
            self.consumed_active += take;
        } else {
            self.consumed_standby += take;
        }
        self.shortfall += e - take;
        take == e
    }

    /// Draw standby energy; false if the store ran dry.
    pub fn debit_standby(&mut self, e: f64) -> bool {
        self.debit(e, false)
    }

    /// Draw active energy; false if the store ran dry.
    pub fn debit_active(&mut self, e: f64) -> bool {
        self.debit(e, true)
    }

    /// `initial + harvested - consumed - clamp_loss - stored`; zero up to rounding.
    pub fn balance_error(&self) -> f64 {
        self.initial + self.harvested
            - self.consumed_standby
            - self.consumed_active
            - self.clamp_loss
            - self.stored
    }
}

/// One sensor node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub position: [f64; 3],
    /// LED axis.
    pub orientation: [f64; 3],
    /// Normal of the wake-up cell.
    pub detector_normal: [f64; 3],
    pub wakeup_circuit: Design1Netlist,
    pub harvest: HarvestFrontEnd,
    pub harvest_cell: SolarCellModel,
    pub led: OpticalSource,
    pub mcu_profile: McuProfile,
    pub state: NodeState,
    pub ledger: EnergyLedger,
}

/// Harvesting string: three cells of 250 mm² in series.
pub fn harvest_cell() -> SolarCellModel {
    let mut cell = SolarCellModel::default().with_area(HARVEST_CELL_AREA);
    cell.voc_a *= HARVEST_CELL_SERIES;
    cell.voc_b *= HARVEST_CELL_SERIES;
    cell.series_resistance.r_min *= HARVEST_CELL_SERIES;
    cell.series_resistance.r_span *= HARVEST_CELL_SERIES;
    cell
}

impl NodeRecord {
    /// Node at `position` with bench parameters and a store charged to `storage_voltage`.
    pub fn new(
        id: usize,
        position: [f64; 3],
        orientation: [f64; 3],
        bench: &Bench,
        storage_voltage: f64,
    ) -> Self {
        let harvest = HarvestFrontEnd::pmic(storage_voltage);
        let capacity = 0.5 * harvest.storage_capacitance * harvest.storage_max_voltage.powi(2);
        let ledger = EnergyLedger::new(harvest.stored_energy(), capacity);
        let mut led = bench.source.clone();
        led.position = position;
        led.orientation = orientation;
        Self {
            id,
            position,
            orientation,
            detector_normal: orientation.map(|c| -c),
            wakeup_circuit: bench.calibration.design1.clone(),
            harvest,
            harvest_cell: harvest_cell(),
            led,
            mcu_profile: McuProfile::default(),
            state: NodeState::PowerOff,
            ledger,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.wakeup_circuit.validate()?;
        self.harvest.validate()?;
        self.harvest_cell.validate()?;
        self.led.validate()?;
        self.mcu_profile.validate()?;
        if !(self.ledger.stored >= 0.0 && self.ledger.capacity > 0.0) {
            return Err(domain("stored energy must be >= 0 and capacity > 0"));
        }
        Ok(())
    }
}

/// Advance one node's harvesting and standby draw by `dt` at `lux`.
///
/// Returns false if the standby draw emptied the store.
pub fn harvest_step(node: &mut NodeRecord, lux: f64, dt: f64) -> bool {
    let i_standby = standby_current(&node.wakeup_circuit, lux);
    harvest_step_with(node, lux, dt, i_standby)
}

fn harvest_step_with(node: &mut NodeRecord, lux: f64, dt: f64, i_standby: f64) -> bool {
    let (_, power) = step_frontend(&mut node.harvest, &node.harvest_cell, lux, dt);
    node.ledger.credit(power * dt);
    let ok = if node.state == NodeState::PowerOff {
        node.ledger
            .debit_standby(i_standby * node.mcu_profile.supply_voltage * dt)
    } else {
        true
    };
    node.harvest.set_stored_energy(node.ledger.stored);
    ok
}

/// Node placement in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub position: [f64; 3],
    #[serde(default = "default_orientation")]
    pub orientation: [f64; 3],
    /// Defaults to facing against `orientation`, so nodes in a line relay forward.
    #[serde(default)]
    pub detector_normal: Option<[f64; 3]>,
    /// Initial store voltage [V].
    #[serde(default)]
    pub storage_voltage: Option<f64>,
}

fn default_orientation() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

/// A flash emitted by `node` at `time` without being woken first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledFlash {
    pub time: f64,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub nodes: Vec<NodeSpec>,
    pub ambient: AmbientProfile,
    pub flashes: Vec<ScheduledFlash>,
    pub horizon: f64,
    pub seed: u64,
    #[serde(default)]
    pub mcu: McuProfile,
    /// Initial store voltage for nodes that do not set one [V].
    #[serde(default = "default_storage_voltage")]
    pub storage_voltage: f64,
    /// Relative standard deviation of each emitted flash's power.
    #[serde(default)]
    pub amplitude_jitter: f64,
    /// Decide detections from a per-ambient threshold table instead of a
    /// transient run for every pair.
    #[serde(default)]
    pub detection_cache: bool,
}

fn default_storage_voltage() -> f64 {
    3.0
}

impl Scenario {
    /// `n` nodes on the x axis, `spacing` apart, node 0 flashing at t = 1 s.
    pub fn chain(n: usize, spacing: f64, lux: f64) -> Self {
        Self {
            nodes: (0..n)
                .map(|k| NodeSpec {
                    position: [k as f64 * spacing, 0.0, 0.0],
                    orientation: default_orientation(),
                    detector_normal: None,
                    storage_voltage: None,
                })
                .collect(),
            ambient: AmbientProfile::constant(lux),
            flashes: vec![ScheduledFlash { time: 1.0, node: 0 }],
            horizon: 1.0 + n as f64,
            seed: 0,
            mcu: McuProfile::default(),
            storage_voltage: default_storage_voltage(),
            amplitude_jitter: 0.0,
            detection_cache: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(domain("scenario needs at least one node"));
        }
        if !(self.horizon > 0.0) {
            return Err(domain("horizon must be > 0"));
        }
        if !(self.amplitude_jitter >= 0.0 && self.storage_voltage >= 0.0) {
            return Err(domain("amplitude_jitter and storage_voltage must be >= 0"));
        }
        self.ambient.validate()?;
        self.mcu.validate()?;
        for (i, a) in self.nodes.iter().enumerate() {
            for b in &self.nodes[i + 1..] {
                if a.position == b.position {
                    return Err(domain(format!(
                        "node positions must be distinct ({:?})",
                        a.position
                    )));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for f in &self.flashes {
            if f.node >= self.nodes.len() {
                return Err(domain(format!("flash references unknown node {}", f.node)));
            }
            if !(f.time >= 0.0) {
                return Err(domain("flash times must be >= 0"));
            }
            if !seen.insert((f.time.to_bits(), f.node)) {
                return Err(domain(format!(
                    "duplicate flash for node {} at {} s",
                    f.node, f.time
                )));
            }
        }
        Ok(())
    }

    pub fn build_nodes(&self, bench: &Bench) -> Result<Vec<NodeRecord>> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(id, spec)| {
                let v = spec.storage_voltage.unwrap_or(self.storage_voltage);
                let mut node = NodeRecord::new(id, spec.position, spec.orientation, bench, v);
                if let Some(n) = spec.detector_normal {
                    node.detector_normal = n;
                }
                node.mcu_profile = self.mcu;
                node.validate()?;
                Ok(node)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    FlashEmitted,
    WakeDetected,
    PhaseComplete(Phase),
    AmbientChange,
    StorageDepleted,
}

impl EventKind {
    /// Tie-break rank at equal time and node.
    pub fn rank(self) -> u8 {
        match self {
            EventKind::FlashEmitted => 0,
            EventKind::WakeDetected => 1,
            EventKind::PhaseComplete(p) => 2 + p as u8,
            EventKind::AmbientChange => 6,
            EventKind::StorageDepleted => 7,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::FlashEmitted => f.write_str("flash_emitted"),
            EventKind::WakeDetected => f.write_str("wake_detected"),
            EventKind::PhaseComplete(p) => write!(f, "phase_complete:{}", p.name()),
            EventKind::AmbientChange => f.write_str("ambient_change"),
            EventKind::StorageDepleted => f.write_str("storage_depleted"),
        }
    }
}

/// Queued or logged event. `node` is `None` for scenario-wide events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    pub node: Option<usize>,
    pub kind: EventKind,
    pub detail: String,
}

impl SimEvent {
    fn key(&self) -> (f64, usize, u8) {
        (self.time, self.node.unwrap_or(usize::MAX), self.kind.rank())
    }
}

/// Min-heap wrapper ordered by (time, node, kind rank, emitting node).
#[derive(Debug)]
struct Queued {
    event: SimEvent,
    wave: usize,
    /// Node whose flash caused a wake event; `usize::MAX` otherwise.
    source: usize,
}

impl Queued {
    fn key(&self) -> (f64, usize, u8, usize) {
        let (t, n, r) = self.event.key();
        (t, n, r, self.source)
    }

    fn cmp_key(&self, other: &Self) -> Ordering {
        let (ta, na, ra, sa) = self.key();
        let (tb, nb, rb, sb) = other.key();
        ta.total_cmp(&tb)
            .then(na.cmp(&nb))
            .then(ra.cmp(&rb))
            .then(sa.cmp(&sb))
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cmp_key(self)
    }
}

/// Complete record of a scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub horizon: f64,
    pub events: Vec<SimEvent>,
    pub nodes: Vec<NodeRecord>,
}

pub const EVENT_HEADER: &str = "time,node,event,detail";
pub const LEDGER_HEADER: &str =
    "node,initial,harvested,consumed_standby,consumed_active,clamp_loss,shortfall,stored,capacity";

impl SimTrace {
    pub fn events_csv(&self) -> String {
        let mut out = String::from(EVENT_HEADER);
        out.push('\n');
        for e in &self.events {
            let node = e.node.map(|n| n.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", e.time, node, e.kind, e.detail));
        }
        out
    }

    pub fn ledger_csv(&self) -> String {
        let mut out = String::from(LEDGER_HEADER);
        out.push('\n');
        for n in &self.nodes {
            let l = &n.ledger;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                n.id,
                l.initial,
                l.harvested,
                l.consumed_standby,
                l.consumed_active,
                l.clamp_loss,
                l.shortfall,
                l.stored,
                l.capacity
            ));
        }
        out
    }

    /// Times at which each node was woken by a neighbour and passed validation.
    pub fn wake_times(&self, node: usize) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| {
                e.node == Some(node)
                    && e.kind == EventKind::PhaseComplete(Phase::Validate)
                    && e.detail.starts_with("accepted")
            })
            .map(|e| e.time)
            .collect()
    }
}

/// Detection decision for one receiver.
struct Receiver {
    sim: Design1Sim,
    thresholds: HashMap<u64, f64>,
    standby: HashMap<u64, f64>,
}

impl Receiver {
    fn new(netlist: &Design1Netlist) -> Result<Self> {
        Ok(Self {
            sim: Design1Sim::new(netlist.clone())?,
            thresholds: HashMap::new(),
            standby: HashMap::new(),
        })
    }

    /// Latency from flash onset to connection, if the flash wakes the node.
    fn detect(&mut self, ambient: f64, flash_lux: f64, pulse: f64, cached: bool) -> Option<f64> {
        if cached {
            let sim = &self.sim;
            let thr = *self
                .thresholds
                .entry(ambient.to_bits())
                .or_insert_with(|| sim.flash_threshold(ambient, pulse));
            if flash_lux < thr {
                return None;
            }
            let t = self
                .sim
                .detects_flash(ambient, flash_lux, pulse)
                .detected_at;
            return Some(t.unwrap_or(0.0).max(self.sim.tau_sc));
        }
        self.sim
            .detects_flash(ambient, flash_lux, pulse)
            .detected_at
            .map(|t| t.max(self.sim.tau_sc))
    }

    fn standby(&mut self, netlist: &Design1Netlist, lux: f64) -> f64 {
        *self
            .standby
            .entry(lux.to_bits())
            .or_insert_with(|| standby_current(netlist, lux))
    }
}

struct Engine<'a> {
    scenario: &'a Scenario,
    efficacy: f64,
    nodes: Vec<NodeRecord>,
    receivers: Vec<Receiver>,
    waves_seen: Vec<BTreeSet<usize>>,
    current_wave: Vec<Option<usize>>,
    depleted: Vec<bool>,
    queue: BinaryHeap<Queued>,
    events: Vec<SimEvent>,
    rng: ChaCha8Rng,
    now: f64,
}

impl Engine<'_> {
    fn push(
        &mut self,
        time: f64,
        node: Option<usize>,
        kind: EventKind,
        wave: usize,
        source: usize,
        detail: String,
    ) {
        if time <= self.scenario.horizon {
            self.queue.push(Queued {
                event: SimEvent {
                    time,
                    node,
                    kind,
                    detail,
                },
                wave,
                source,
            });
        }
    }

    fn log(&mut self, time: f64, node: Option<usize>, kind: EventKind, detail: String) {
        self.events.push(SimEvent {
            time,
            node,
            kind,
            detail,
        });
    }

    /// Harvest and standby for every node from `self.now` to `t`.
    fn integrate_to(&mut self, t: f64) {
        let span = t - self.now;
        if span <= 0.0 {
            return;
        }
        let steps = (span / MAX_HARVEST_STEP).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for k in 0..steps {
            let t0 = self.now + k as f64 * dt;
            let lux = ambient_at(&self.scenario.ambient, t0 + 0.5 * dt);
            for i in 0..self.nodes.len() {
                let i_sb = self.receivers[i].standby(&self.nodes[i].wakeup_circuit, lux);
                let ok = harvest_step_with(&mut self.nodes[i], lux, dt, i_sb);
                if !ok && !self.depleted[i] {
                    self.depleted[i] = true;
                    self.log(
                        t0 + dt,
                        Some(i),
                        EventKind::StorageDepleted,
                        "standby".into(),
                    );
                }
                if self.depleted[i]
                    && self.nodes[i].ledger.stored >= self.nodes[i].mcu_profile.cycle_energy()
                {
                    self.depleted[i] = false;
                }
            }
        }
        self.now = t;
    }

    /// Enter `phase` at time `t`, charging its energy up front.
    fn start_phase(&mut self, i: usize, phase: Phase, t: f64, wave: usize) -> Result<()> {
        let e = self.nodes[i].mcu_profile.phase_energy(phase);
        if !self.nodes[i].ledger.debit_active(e) {
            self.nodes[i].state = NodeState::PowerOff;
            self.current_wave[i] = None;
            self.depleted[i] = true;
            self.log(
                t,
                Some(i),
                EventKind::StorageDepleted,
                format!("brownout:{}", phase.name()),
            );
            return Ok(());
        }
        let stored = self.nodes[i].ledger.stored;
        self.nodes[i].harvest.set_stored_energy(stored);
        self.nodes[i].state = match phase {
            Phase::Validate => NodeState::Waking,
            p => NodeState::Active(p),
        };
        self.current_wave[i] = Some(wave);
        if phase == Phase::FlashForward {
            self.emit_flash(i, t, wave)?;
        }
        let done = t + self.nodes[i].mcu_profile.duration(phase);
        self.push(
            done,
            Some(i),
            EventKind::PhaseComplete(phase),
            wave,
            usize::MAX,
            String::new(),
        );
        Ok(())
    }

    /// Light every other node with a flash from `src`.
    fn emit_flash(&mut self, src: usize, t: f64, wave: usize) -> Result<()> {
        let jitter = self.scenario.amplitude_jitter;
        let gain = if jitter > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            (1.0 + jitter * z).max(0.0)
        } else {
            1.0
        };
        self.log(
            t,
            Some(src),
            EventKind::FlashEmitted,
            format!("wave={wave}"),
        );
        let mut led = self.nodes[src].led.clone();
        led.optical_power *= gain;
        let pulse = led.pulse.duration;
        let ambient = ambient_at(&self.scenario.ambient, t);
        for j in 0..self.nodes.len() {
            if j == src || self.nodes[j].state != NodeState::PowerOff {
                continue;
            }
            let geom = LinkGeometry::between(
                led.position,
                led.orientation,
                self.nodes[j].position,
                self.nodes[j].detector_normal,
            )?;
            let e = if gain > 0.0 {
                irradiance(&led, &geom)?
            } else {
                0.0
            };
            if e <= 0.0 {
                continue;
            }
            let flash_lux = e * self.efficacy;
            let cached = self.scenario.detection_cache;
            if let Some(latency) = self.receivers[j].detect(ambient, flash_lux, pulse, cached) {
                self.push(
                    t + latency,
                    Some(j),
                    EventKind::WakeDetected,
                    wave,
                    src,
                    format!("from={src};latency={latency}"),
                );
            }
        }
        Ok(())
    }

    fn handle(&mut self, q: Queued) -> Result<()> {
        let Queued { event, wave, .. } = q;
        let t = event.time;
        match (event.kind, event.node) {
            (EventKind::AmbientChange, _) => {
                let lux = ambient_at(&self.scenario.ambient, t);
                self.log(t, None, EventKind::AmbientChange, format!("lux={lux}"));
            }
            (EventKind::FlashEmitted, Some(i)) => {
                // scheduled initiation: the node runs only its flash-forward phase
                if self.nodes[i].state != NodeState::PowerOff {
                    self.log(t, Some(i), EventKind::FlashEmitted, "skipped:busy".into());
                    return Ok(());
                }
                self.waves_seen[i].insert(wave);
                self.start_phase(i, Phase::FlashForward, t, wave)?;
            }
            (EventKind::WakeDetected, Some(i)) => {
                let detail = event.detail;
                if self.nodes[i].state != NodeState::PowerOff {
                    self.log(
                        t,
                        Some(i),
                        EventKind::WakeDetected,
                        format!("{detail};ignored:busy"),
                    );
                } else if self.nodes[i].ledger.stored < self.nodes[i].mcu_profile.cycle_energy() {
                    self.log(
                        t,
                        Some(i),
                        EventKind::WakeDetected,
                        format!("{detail};missed:brownout"),
                    );
                } else {
                    self.log(t, Some(i), EventKind::WakeDetected, detail);
                    self.start_phase(i, Phase::Validate, t, wave)?;
                }
            }
            (EventKind::PhaseComplete(phase), Some(i)) => {
                if self.current_wave[i] != Some(wave)
                    || self.nodes[i].state
                        != (if phase == Phase::Validate {
                            NodeState::Waking
                        } else {
                            NodeState::Active(phase)
                        })
                {
                    return Ok(());
                }
                let detail = if phase == Phase::Validate {
                    if self.waves_seen[i].insert(wave) {
                        "accepted".to_string()
                    } else {
                        "duplicate".to_string()
                    }
                } else {
                    String::new()
                };
                let duplicate = detail == "duplicate";
                self.log(t, Some(i), EventKind::PhaseComplete(phase), detail);
                match phase.next() {
                    Some(next) if !duplicate => self.start_phase(i, next, t, wave)?,
                    _ => {
                        self.nodes[i].state = NodeState::PowerOff;
                        self.current_wave[i] = None;
                    }
                }
            }
            (kind, None) => {
                return Err(Error::Simulation(format!("event {kind} without a node")));
            }
            (EventKind::StorageDepleted, Some(_)) => {}
        }
        Ok(())
    }
}

/// Run a scenario to its horizon.
pub fn run_scenario(bench: &Bench, scenario: &Scenario) -> Result<SimTrace> {
    scenario.validate()?;
    let nodes = scenario.build_nodes(bench)?;
    let receivers = nodes
        .iter()
        .map(|n| Receiver::new(&n.wakeup_circuit))
        .collect::<Result<Vec<_>>>()?;
    let n = nodes.len();
    let mut eng = Engine {
        scenario,
        efficacy: bench.calibration.flash_efficacy,
        nodes,
        receivers,
        waves_seen: vec![BTreeSet::new(); n],
        current_wave: vec![None; n],
        depleted: vec![false; n],
        queue: BinaryHeap::new(),
        events: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(scenario.seed),
        now: 0.0,
    };
    for seg in &scenario.ambient.segments {
        eng.push(
            seg.start.max(0.0),
            None,
            EventKind::AmbientChange,
            usize::MAX,
            usize::MAX,
            String::new(),
        );
    }
    for (wave, f) in scenario.flashes.iter().enumerate() {
        eng.push(
            f.time,
            Some(f.node),
            EventKind::FlashEmitted,
            wave,
            usize::MAX,
            String::new(),
        );
    }
    let mut last: Option<(f64, usize, u8, usize)> = None;
    while let Some(q) = eng.queue.pop() {
        let key = q.key();
        if last == Some(key) {
            return Err(Error::Simulation(format!(
                "duplicate event key at t = {} s, node {:?}, {}",
                q.event.time, q.event.node, q.event.kind
            )));
        }
        last = Some(key);
        eng.integrate_to(q.event.time);
        eng.handle(q)?;
    }
    eng.integrate_to(scenario.horizon);
    Ok(SimTrace {
        horizon: scenario.horizon,
        events: eng.events,
        nodes: eng.nodes,
    })
}

/// Per-node aggregate of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeSummary {
    pub node: usize,
    /// Wakes that passed validation.
    pub wakes: usize,
    /// Detected flashes lost to an empty store.
    pub missed_wakes: usize,
    pub flashes: usize,
    pub depletions: usize,
    pub ledger: EnergyLedger,
}

pub const SUMMARY_HEADER: &str = "node,wakes,missed_wakes,flashes,depletions,harvested,consumed_standby,consumed_active,clamp_loss,stored";

pub fn lifetime_report(trace: &SimTrace) -> Vec<NodeSummary> {
    trace
        .nodes
        .iter()
        .map(|n| {
            let mine = || trace.events.iter().filter(move |e| e.node == Some(n.id));
            NodeSummary {
                node: n.id,
                wakes: trace.wake_times(n.id).len(),
                missed_wakes: mine()
                    .filter(|e| {
                        e.kind == EventKind::WakeDetected && e.detail.ends_with("missed:brownout")
                    })
                    .count(),
                flashes: mine()
                    .filter(|e| {
                        e.kind == EventKind::FlashEmitted && !e.detail.starts_with("skipped")
                    })
                    .count(),
                depletions: mine()
                    .filter(|e| e.kind == EventKind::StorageDepleted)
                    .count(),
                ledger: n.ledger,
            }
        })
        .collect()
}

pub fn lifetime_csv(report: &[NodeSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in report {
        let l = &s.ledger;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.node,
            s.wakes,
            s.missed_wakes,
            s.flashes,
            s.depletions,
            l.harvested,
            l.consumed_standby,
            l.consumed_active,
            l.clamp_loss,
            l.stored
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pair(distance: f64, lux: f64) -> Scenario {
        let mut s = Scenario::chain(2, distance, lux);
        s.horizon = 2.0;
        s
    }

    #[test]
    fn ledger_clamps_and_tracks_loss() {
        let mut l = EnergyLedger::new(1.0, 1.0);
        l.credit(0.25);
        assert_eq!(l.stored, 1.0);
        assert_eq!(l.clamp_loss, 0.25);
        assert!(!l.debit_active(1.5));
        assert_eq!(l.stored, 0.0);
        assert_eq!(l.shortfall, 0.5);
        assert!(l.balance_error().abs() < 1e-15);
    }

    #[test]
    fn full_store_in_bright_light_only_loses() {
        let bench = Bench::default();
        let mut node = NodeRecord::new(0, [0.0; 3], [1.0, 0.0, 0.0], &bench, 4.2);
        let before = node.ledger.stored;
        node.state = NodeState::Active(Phase::Measure);
        harvest_step(&mut node, 1600.0, 10.0);
        assert_eq!(node.ledger.stored, before);
        assert!(node.ledger.clamp_loss > 0.0);
    }

    #[test]
    fn dark_hour_standby() {
        let bench = Bench::default();
        let mut node = NodeRecord::new(0, [0.0; 3], [1.0, 0.0, 0.0], &bench, 3.0);
        harvest_step(&mut node, 0.0, 3600.0);
        let expected = standby_current(&node.wakeup_circuit, 0.0) * 2.8 * 3600.0;
        assert_relative_eq!(node.ledger.consumed_standby, expected, max_relative = 1e-12);
        // 248 pW for an hour
        assert_relative_eq!(node.ledger.consumed_standby, 0.892e-6, max_relative = 0.3);
        assert_eq!(node.ledger.harvested, 0.0);
    }

    #[test]
    fn cycle_energy_default() {
        // 1.2 mA × 2.8 V × 210 ms
        assert_relative_eq!(
            McuProfile::default().cycle_energy(),
            1.2e-3 * 2.8 * 0.21,
            max_relative = 1e-12
        );
    }

    #[test]
    fn pair_wakes_near_not_far() {
        let bench = Bench::default();
        let near = run_scenario(&bench, &pair(0.10, 400.0)).unwrap();
        assert_eq!(lifetime_report(&near)[1].wakes, 1);
        let far = run_scenario(&bench, &pair(0.50, 400.0)).unwrap();
        assert_eq!(lifetime_report(&far)[1].wakes, 0);
    }

    #[test]
    fn wake_follows_flash_by_at_least_response_time() {
        let bench = Bench::default();
        let trace = run_scenario(&bench, &pair(0.10, 400.0)).unwrap();
        let flash = trace
            .events
            .iter()
            .find(|e| e.kind == EventKind::FlashEmitted)
            .unwrap();
        let wake = trace
            .events
            .iter()
            .find(|e| e.kind == EventKind::WakeDetected)
            .unwrap();
        let tau = Design1Sim::new(bench.calibration.design1.clone())
            .unwrap()
            .tau_sc;
        assert!(wake.time - flash.time >= tau);
    }

    #[test]
    fn empty_store_misses_the_flash() {
        let bench = Bench::default();
        let mut s = pair(0.10, 400.0);
        s.nodes[1].storage_voltage = Some(0.0);
        let trace = run_scenario(&bench, &s).unwrap();
        let rep = lifetime_report(&trace);
        assert_eq!(rep[1].wakes, 0);
        assert_eq!(rep[1].missed_wakes, 1);
    }

    #[test]
    fn queue_orders_by_time_node_rank() {
        let mk = |time, node, kind| Queued {
            event: SimEvent {
                time,
                node,
                kind,
                detail: String::new(),
            },
            wave: 0,
            source: usize::MAX,
        };
        let mut h = BinaryHeap::new();
        h.push(mk(1.0, Some(2), EventKind::FlashEmitted));
        h.push(mk(1.0, Some(1), EventKind::StorageDepleted));
        h.push(mk(1.0, Some(1), EventKind::WakeDetected));
        h.push(mk(0.5, None, EventKind::AmbientChange));
        let order: Vec<_> = std::iter::from_fn(|| h.pop())
            .map(|q| (q.event.time, q.event.node, q.event.kind))
            .collect();
        assert_eq!(
            order,
            vec![
                (0.5, None, EventKind::AmbientChange),
                (1.0, Some(1), EventKind::WakeDetected),
                (1.0, Some(1), EventKind::StorageDepleted),
                (1.0, Some(2), EventKind::FlashEmitted),
            ]
        );
    }

    #[test]
    fn rejects_coincident_nodes() {
        let mut s = pair(0.1, 0.0);
        s.nodes[1].position = s.nodes[0].position;
        assert!(run_scenario(&Bench::default(), &s).is_err());
    }
}
