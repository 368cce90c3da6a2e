//! Per-unit grid model: buses, branches, generators and loads.
//!
//! A [`Network`] is built by [`parse_matpower`] (or deserialized from the
//! canonical JSON dump) and is treated as immutable afterwards; loading
//! changes produce a new value through [`scale_loading`].

mod canonical;
mod matpower;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use canonical::{from_canonical_json, to_canonical_json, CANONICAL_SCHEMA_VERSION};
pub use matpower::parse_matpower;

/// External bus number as written in the case file.
pub type BusId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Voltage magnitude target in pu (generator setpoint for PV/slack buses).
    pub v_set: f64,
    /// Reference angle in radians (meaningful on the slack bus).
    pub theta_set: f64,
    pub shunt_g: f64,
    pub shunt_b: f64,
    pub base_kv: f64,
    /// Operating point stored in the case file, used for warm starts.
    pub vm: f64,
    /// Radians.
    pub va: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b_charging: f64,
    /// Off-nominal turns ratio, 1.0 for lines.
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    pub in_service: bool,
}

/// Aggregate generation at one bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: BusId,
    pub p_set: f64,
    /// Reactive output from the case file; only used as an initial guess.
    pub q_init: f64,
    pub v_set: f64,
    /// Parsed for completeness; no solver enforces reactive limits.
    pub q_min: f64,
    pub q_max: f64,
    pub in_service: bool,
}

/// Constant-power demand. Negative values represent fixed injections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: BusId,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    /// Cumulative loading factor applied since parsing.
    pub alpha: f64,
}

/// Which injections a loading factor multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// Load P and Q together with scheduled generator P.
    #[default]
    LoadsAndGeneration,
    /// Load P and Q only; the slack alone picks up the added demand.
    LoadsOnly,
}

impl Network {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branch(&self) -> usize {
        self.branches.len()
    }

    /// External id to internal (0-based) index.
    pub fn bus_lookup(&self) -> HashMap<BusId, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    pub fn total_load(&self) -> (f64, f64) {
        self.loads
            .iter()
            .fold((0.0, 0.0), |(p, q), l| (p + l.p, q + l.q))
    }
}

/// [`scale_loading_with`] using [`ScalingMode::LoadsAndGeneration`].
pub fn scale_loading(net: &Network, alpha: f64) -> Result<Network> {
    scale_loading_with(net, alpha, ScalingMode::default())
}

pub fn scale_loading_with(net: &Network, alpha: f64, mode: ScalingMode) -> Result<Network> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let mut out = net.clone();
    for load in &mut out.loads {
        load.p *= alpha;
        load.q *= alpha;
    }
    if mode == ScalingMode::LoadsAndGeneration {
        for gen in &mut out.generators {
            gen.p_set *= alpha;
        }
    }
    out.alpha = net.alpha * alpha;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticCode {
    EmptyNetwork,
    DuplicateBusId,
    NoSlack,
    MultipleSlack,
    DanglingBranch,
    ZeroImpedanceBranch,
    NonPositiveTap,
    NonPositiveVoltageSetpoint,
    NonFiniteValue,
    UnknownGeneratorBus,
    GeneratorAtPqBus,
    DuplicateGenerator,
    UnknownLoadBus,
    Disconnected,
    NonPositiveBase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    /// Bus id or branch position the diagnostic refers to, if any.
    pub subject: Option<String>,
    pub message: String,
}

impl Diagnostic {
    fn new(
        code: DiagnosticCode,
        subject: impl Into<Option<String>>,
        message: impl Into<String>,
    ) -> Self {
        Self {
            code,
            subject: subject.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.subject {
            Some(s) => write!(f, "{:?} ({s}): {}", self.code, self.message),
            None => write!(f, "{:?}: {}", self.code, self.message),
        }
    }
}

/// Structural checks. An empty list means the network is solvable input.
pub fn validate(net: &Network) -> Vec<Diagnostic> {
    use DiagnosticCode::*;
    let mut diags = Vec::new();

    if net.buses.is_empty() {
        diags.push(Diagnostic::new(EmptyNetwork, None, "network has no buses"));
        return diags;
    }
    if !(net.base_mva.is_finite() && net.base_mva > 0.0) {
        diags.push(Diagnostic::new(
            NonPositiveBase,
            None,
            format!("baseMVA = {}", net.base_mva),
        ));
    }

    let mut index = HashMap::with_capacity(net.buses.len());
    for (i, bus) in net.buses.iter().enumerate() {
        if index.insert(bus.id, i).is_some() {
            diags.push(Diagnostic::new(
                DuplicateBusId,
                format!("bus {}", bus.id),
                "bus id appears more than once",
            ));
        }
        let vals = [
            bus.v_set,
            bus.theta_set,
            bus.shunt_g,
            bus.shunt_b,
            bus.vm,
            bus.va,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            diags.push(Diagnostic::new(
                NonFiniteValue,
                format!("bus {}", bus.id),
                "non-finite bus data",
            ));
        }
        if bus.kind != BusKind::Pq && !(bus.v_set > 0.0) {
            diags.push(Diagnostic::new(
                NonPositiveVoltageSetpoint,
                format!("bus {}", bus.id),
                format!("voltage setpoint {} must be > 0", bus.v_set),
            ));
        }
    }

    let slacks: Vec<_> = net
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .collect();
    match slacks.len() {
        0 => diags.push(Diagnostic::new(NoSlack, None, "no slack bus")),
        1 => {}
        n => diags.push(Diagnostic::new(
            MultipleSlack,
            format!("bus {}", slacks[1].id),
            format!("{n} slack buses; exactly one is supported"),
        )),
    }

    for (k, br) in net.branches.iter().enumerate() {
        let subject = format!("branch {} ({}-{})", k + 1, br.from_bus, br.to_bus);
        if !index.contains_key(&br.from_bus) || !index.contains_key(&br.to_bus) {
            diags.push(Diagnostic::new(
                DanglingBranch,
                subject.clone(),
                "endpoint refers to an unknown bus",
            ));
        }
        if [br.r, br.x, br.b_charging, br.tap, br.shift]
            .iter()
            .any(|v| !v.is_finite())
        {
            diags.push(Diagnostic::new(
                NonFiniteValue,
                subject.clone(),
                "non-finite branch data",
            ));
        }
        if br.r == 0.0 && br.x == 0.0 {
            diags.push(Diagnostic::new(
                ZeroImpedanceBranch,
                subject.clone(),
                "r = x = 0",
            ));
        }
        if !(br.tap > 0.0) {
            diags.push(Diagnostic::new(
                NonPositiveTap,
                subject,
                format!("tap {} must be > 0", br.tap),
            ));
        }
    }

    let mut seen_gen = HashMap::new();
    for gen in &net.generators {
        let subject = format!("bus {}", gen.bus);
        match index.get(&gen.bus) {
            None => diags.push(Diagnostic::new(
                UnknownGeneratorBus,
                subject.clone(),
                "generator at unknown bus",
            )),
            Some(&i) if net.buses[i].kind == BusKind::Pq => diags.push(Diagnostic::new(
                GeneratorAtPqBus,
                subject.clone(),
                "generator attached to a PQ bus",
            )),
            _ => {}
        }
        if seen_gen.insert(gen.bus, ()).is_some() {
            diags.push(Diagnostic::new(
                DuplicateGenerator,
                subject.clone(),
                "more than one generator record",
            ));
        }
        if ![gen.p_set, gen.q_init, gen.v_set]
            .iter()
            .all(|v| v.is_finite())
        {
            diags.push(Diagnostic::new(
                NonFiniteValue,
                subject,
                "non-finite generator data",
            ));
        }
    }

    for load in &net.loads {
        let subject = format!("bus {}", load.bus);
        if !index.contains_key(&load.bus) {
            diags.push(Diagnostic::new(
                UnknownLoadBus,
                subject.clone(),
                "load at unknown bus",
            ));
        }
        if !(load.p.is_finite() && load.q.is_finite()) {
            diags.push(Diagnostic::new(
                NonFiniteValue,
                subject,
                "non-finite load data",
            ));
        }
    }

    if slacks.len() == 1 && !diags.iter().any(|d| d.code == DanglingBranch) {
        let slack = index[&slacks[0].id];
        let mut dsu = DisjointSet::new(net.buses.len());
        for br in net.branches.iter().filter(|b| b.in_service) {
            dsu.union(index[&br.from_bus], index[&br.to_bus]);
        }
        let root = dsu.find(slack);
        let stranded: Vec<_> = (0..net.buses.len())
            .filter(|&i| dsu.find(i) != root)
            .collect();
        if !stranded.is_empty() {
            diags.push(Diagnostic::new(
                Disconnected,
                format!("bus {}", net.buses[stranded[0]].id),
                format!(
                    "{} bus(es) not connected to the slack island",
                    stranded.len()
                ),
            ));
        }
    }

    diags
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Slack at bus 1, PQ load at bus 2, one line.
    pub(crate) fn two_bus(p_load: f64, q_load: f64) -> Network {
        Network {
            name: "two_bus".into(),
            base_mva: 100.0,
            buses: vec![
                Bus {
                    id: 1,
                    kind: BusKind::Slack,
                    v_set: 1.0,
                    theta_set: 0.0,
                    shunt_g: 0.0,
                    shunt_b: 0.0,
                    base_kv: 0.0,
                    vm: 1.0,
                    va: 0.0,
                },
                Bus {
                    id: 2,
                    kind: BusKind::Pq,
                    v_set: 1.0,
                    theta_set: 0.0,
                    shunt_g: 0.0,
                    shunt_b: 0.0,
                    base_kv: 0.0,
                    vm: 1.0,
                    va: 0.0,
                },
            ],
            branches: vec![Branch {
                from_bus: 1,
                to_bus: 2,
                r: 0.01,
                x: 0.1,
                b_charging: 0.0,
                tap: 1.0,
                shift: 0.0,
                in_service: true,
            }],
            generators: vec![Generator {
                bus: 1,
                p_set: 0.0,
                q_init: 0.0,
                v_set: 1.0,
                q_min: 0.0,
                q_max: 0.0,
                in_service: true,
            }],
            loads: vec![Load {
                bus: 2,
                p: p_load,
                q: q_load,
            }],
            alpha: 1.0,
        }
    }

    #[test]
    fn well_formed_two_bus_has_no_diagnostics() {
        assert!(validate(&two_bus(0.5, 0.1)).is_empty());
    }

    #[test]
    fn two_slacks_flagged() {
        let mut net = two_bus(0.5, 0.1);
        net.buses[1].kind = BusKind::Slack;
        let codes: Vec<_> = validate(&net).into_iter().map(|d| d.code).collect();
        assert_eq!(codes, vec![DiagnosticCode::MultipleSlack]);
    }

    #[test]
    fn dangling_branch_flagged() {
        let mut net = two_bus(0.5, 0.1);
        net.branches[0].to_bus = 99;
        let codes: Vec<_> = validate(&net).into_iter().map(|d| d.code).collect();
        assert_eq!(codes, vec![DiagnosticCode::DanglingBranch]);
    }

    #[test]
    fn island_flagged() {
        let mut net = two_bus(0.5, 0.1);
        net.branches[0].in_service = false;
        let codes: Vec<_> = validate(&net).into_iter().map(|d| d.code).collect();
        assert_eq!(codes, vec![DiagnosticCode::Disconnected]);
    }

    #[test]
    fn zero_impedance_flagged() {
        let mut net = two_bus(0.5, 0.1);
        net.branches[0].r = 0.0;
        net.branches[0].x = 0.0;
        assert!(validate(&net)
            .iter()
            .any(|d| d.code == DiagnosticCode::ZeroImpedanceBranch));
    }

    #[test]
    fn scale_identity_and_linearity() {
        let net = two_bus(0.5, 0.2);
        assert_eq!(scale_loading(&net, 1.0).unwrap(), net);
        let doubled = scale_loading(&net, 2.0).unwrap();
        assert_eq!(doubled.loads[0].p, 1.0);
        assert_eq!(doubled.loads[0].q, 0.4);
        assert_eq!(doubled.alpha, 2.0);
    }

    #[test]
    fn scale_modes_differ_only_in_generation() {
        let mut net = two_bus(0.5, 0.2);
        net.generators[0].p_set = 0.3;
        let both = scale_loading_with(&net, 2.0, ScalingMode::LoadsAndGeneration).unwrap();
        let loads = scale_loading_with(&net, 2.0, ScalingMode::LoadsOnly).unwrap();
        assert_eq!(both.loads, loads.loads);
        assert_eq!(both.generators[0].p_set, 0.6);
        assert_eq!(loads.generators[0].p_set, 0.3);
        assert_eq!(both.generators[0].v_set, net.generators[0].v_set);
    }

    #[test]
    fn bad_alpha_rejected() {
        let net = two_bus(0.5, 0.2);
        for a in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                scale_loading(&net, a),
                Err(Error::InvalidAlpha(_))
            ));
        }
    }
}
