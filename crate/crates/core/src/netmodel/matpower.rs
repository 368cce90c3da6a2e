use std::collections::BTreeMap;

use super::{validate, Branch, Bus, BusId, BusKind, Generator, Load, Network};
use crate::error::{Error, Result};

// MATPOWER column positions (0-based).
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const PD: usize = 2;
const QD: usize = 3;
const GS: usize = 4;
const BS: usize = 5;
const VM: usize = 7;
const VA: usize = 8;
const BASE_KV: usize = 9;
const BUS_COLS: usize = 10;

const GEN_BUS: usize = 0;
const PG: usize = 1;
const QG: usize = 2;
const QMAX: usize = 3;
const QMIN: usize = 4;
const VG: usize = 5;
const GEN_STATUS: usize = 7;
const GEN_COLS: usize = 8;

const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_R: usize = 2;
const BR_X: usize = 3;
const BR_B: usize = 4;
const TAP: usize = 8;
const SHIFT: usize = 9;
const BR_STATUS: usize = 10;
const BRANCH_COLS: usize = 11;

/// Parses a MATPOWER version-2 case file.
///
/// Only the `baseMVA`, `bus`, `gen` and `branch` assignments are read; other
/// tables (costs, areas, bus names) are skipped. Out-of-service generators
/// and branches are dropped, isolated buses (type 4) are removed, and
/// generators sharing a bus are summed. An in-service generator at a PQ bus
/// is folded into that bus's load as a fixed negative demand; a PV bus with
/// no in-service generator becomes PQ.
pub fn parse_matpower(text: &str) -> Result<Network> {
    let doc = Document::scan(text)?;
    let base_mva = doc.scalar("baseMVA")?;
    if !(base_mva.is_finite() && base_mva > 0.0) {
        return Err(Error::MalformedCase(format!(
            "baseMVA must be positive, got {base_mva}"
        )));
    }
    let bus_rows = doc.matrix("bus", BUS_COLS)?;
    let gen_rows = doc.matrix("gen", GEN_COLS)?;
    let branch_rows = doc.matrix("branch", BRANCH_COLS)?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut isolated = std::collections::HashSet::new();
    let mut demand: BTreeMap<BusId, (f64, f64)> = BTreeMap::new();
    for (k, row) in bus_rows.iter().enumerate() {
        let id = bus_id(row[BUS_I], "bus", k)?;
        let kind = match row[BUS_TYPE] as i64 {
            3 => BusKind::Slack,
            2 => BusKind::Pv,
            1 => BusKind::Pq,
            4 => {
                isolated.insert(id);
                continue;
            }
            t => {
                return Err(Error::MalformedCase(format!(
                    "bus row {}: unknown bus type {t}",
                    k + 1
                )))
            }
        };
        if row[PD] != 0.0 || row[QD] != 0.0 {
            let entry = demand.entry(id).or_default();
            entry.0 += row[PD] / base_mva;
            entry.1 += row[QD] / base_mva;
        }
        buses.push(Bus {
            id,
            kind,
            v_set: row[VM],
            theta_set: row[VA].to_radians(),
            shunt_g: row[GS] / base_mva,
            shunt_b: row[BS] / base_mva,
            base_kv: row[BASE_KV],
            vm: row[VM],
            va: row[VA].to_radians(),
        });
    }

    let kind_of: BTreeMap<BusId, BusKind> = buses.iter().map(|b| (b.id, b.kind)).collect();

    // consolidate in-service units per bus, keeping first-seen order
    let mut gen_order: Vec<BusId> = Vec::new();
    let mut gens: BTreeMap<BusId, Generator> = BTreeMap::new();
    for (k, row) in gen_rows.iter().enumerate() {
        if row[GEN_STATUS] <= 0.0 {
            continue;
        }
        let bus = bus_id(row[GEN_BUS], "gen", k)?;
        if isolated.contains(&bus) {
            continue;
        }
        let (p, q) = (row[PG] / base_mva, row[QG] / base_mva);
        match gens.get_mut(&bus) {
            Some(g) => {
                g.p_set += p;
                g.q_init += q;
                g.q_min += row[QMIN] / base_mva;
                g.q_max += row[QMAX] / base_mva;
            }
            None => {
                gen_order.push(bus);
                gens.insert(
                    bus,
                    Generator {
                        bus,
                        p_set: p,
                        q_init: q,
                        v_set: row[VG],
                        q_min: row[QMIN] / base_mva,
                        q_max: row[QMAX] / base_mva,
                        in_service: true,
                    },
                );
            }
        }
    }

    let mut generators = Vec::with_capacity(gens.len());
    for bus in gen_order {
        let gen = gens.remove(&bus).expect("recorded above");
        match kind_of.get(&bus) {
            Some(BusKind::Pq) => {
                let entry = demand.entry(bus).or_default();
                entry.0 -= gen.p_set;
                entry.1 -= gen.q_init;
            }
            _ => generators.push(gen),
        }
    }

    for bus in buses.iter_mut() {
        match (bus.kind, gens_at(&generators, bus.id)) {
            (BusKind::Pv, None) => bus.kind = BusKind::Pq,
            (BusKind::Pv | BusKind::Slack, Some(g)) => bus.v_set = g.v_set,
            _ => {}
        }
    }

    let loads = demand
        .into_iter()
        .map(|(bus, (p, q))| Load { bus, p, q })
        .collect();

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (k, row) in branch_rows.iter().enumerate() {
        if row[BR_STATUS] <= 0.0 {
            continue;
        }
        let from_bus = bus_id(row[F_BUS], "branch", k)?;
        let to_bus = bus_id(row[T_BUS], "branch", k)?;
        if isolated.contains(&from_bus) || isolated.contains(&to_bus) {
            continue;
        }
        branches.push(Branch {
            from_bus,
            to_bus,
            r: row[BR_R],
            x: row[BR_X],
            b_charging: row[BR_B],
            tap: if row[TAP] == 0.0 { 1.0 } else { row[TAP] },
            shift: row[SHIFT].to_radians(),
            in_service: true,
        });
    }

    let net = Network {
        name: doc.name.unwrap_or_else(|| "case".to_string()),
        base_mva,
        buses,
        branches,
        generators,
        loads,
        alpha: 1.0,
    };
    let diags = validate(&net);
    if diags.is_empty() {
        Ok(net)
    } else {
        Err(Error::InvalidTopology(diags))
    }
}

fn gens_at(gens: &[Generator], bus: BusId) -> Option<&Generator> {
    gens.iter().find(|g| g.bus == bus)
}

fn bus_id(v: f64, table: &str, row: usize) -> Result<BusId> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 {
        Ok(v as BusId)
    } else {
        Err(Error::MalformedCase(format!(
            "{table} row {}: bad bus number {v}",
            row + 1
        )))
    }
}

enum Value {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Other,
}

struct Document {
    name: Option<String>,
    values: BTreeMap<String, Value>,
}

impl Document {
    fn scan(text: &str) -> Result<Self> {
        let clean = strip_comments(text);
        let mut name = None;
        let mut values = BTreeMap::new();

        let mut rest = clean.as_str();
        if let Some(pos) = rest.find("function") {
            let header = rest[pos + "function".len()..].lines().next().unwrap_or("");
            if let Some(eq) = header.find('=') {
                let n = header[eq + 1..].trim().trim_end_matches(';').trim();
                if !n.is_empty() {
                    name = Some(n.to_string());
                }
            }
        }

        while let Some(pos) = rest.find("mpc.") {
            rest = &rest[pos + 4..];
            let ident_len = rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(rest.len());
            let ident = rest[..ident_len].to_string();
            let after = rest[ident_len..].trim_start();
            let Some(after) = after.strip_prefix('=') else {
                rest = &rest[ident_len..];
                continue;
            };
            let after = after.trim_start();
            let (value, consumed) = match after.chars().next() {
                Some('[') => {
                    let end = after.find(']').ok_or_else(|| {
                        Error::MalformedCase(format!("unterminated matrix for mpc.{ident}"))
                    })?;
                    (Value::Matrix(parse_rows(&after[1..end], &ident)?), end + 1)
                }
                Some('{') => {
                    let end = after.find('}').ok_or_else(|| {
                        Error::MalformedCase(format!("unterminated cell array for mpc.{ident}"))
                    })?;
                    (Value::Other, end + 1)
                }
                _ => {
                    let end = after.find([';', '\n']).unwrap_or(after.len());
                    let raw = after[..end].trim();
                    let v = raw
                        .parse::<f64>()
                        .map(Value::Scalar)
                        .unwrap_or(Value::Other);
                    (v, end)
                }
            };
            values.insert(ident, value);
            rest = &after[consumed..];
        }
        Ok(Self { name, values })
    }

    fn scalar(&self, key: &str) -> Result<f64> {
        match self.values.get(key) {
            Some(Value::Scalar(v)) => Ok(*v),
            Some(_) => Err(Error::MalformedCase(format!("mpc.{key} is not a number"))),
            None => Err(Error::MalformedCase(format!("missing mpc.{key}"))),
        }
    }

    fn matrix(&self, key: &str, min_cols: usize) -> Result<&[Vec<f64>]> {
        match self.values.get(key) {
            Some(Value::Matrix(rows)) => {
                if let Some((k, row)) = rows.iter().enumerate().find(|(_, r)| r.len() < min_cols) {
                    return Err(Error::MalformedCase(format!(
                        "mpc.{key} row {} has {} columns, need at least {min_cols}",
                        k + 1,
                        row.len()
                    )));
                }
                Ok(rows)
            }
            Some(_) => Err(Error::MalformedCase(format!("mpc.{key} is not a matrix"))),
            None => Err(Error::MalformedCase(format!("missing mpc.{key} table"))),
        }
    }
}

/// Drops `%` comments outside single-quoted strings and `...` continuations.
fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_str = false;
        let mut cut = line.len();
        for (i, c) in line.char_indices() {
            match c {
                '\'' => in_str = !in_str,
                '%' if !in_str => {
                    cut = i;
                    break;
                }
                _ => {}
            }
        }
        let kept = &line[..cut];
        match kept.find("...") {
            Some(p) => out.push_str(&kept[..p]),
            None => {
                out.push_str(kept);
                out.push('\n');
            }
        }
    }
    out
}

fn parse_rows(body: &str, ident: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for raw in body.split([';', '\n']) {
        let fields: Vec<&str> = raw
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        let row = fields
            .iter()
            .map(|f| parse_number(f))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| {
                Error::MalformedCase(format!(
                    "non-numeric entry in mpc.{ident}: `{}`",
                    raw.trim()
                ))
            })?;
        rows.push(row);
    }
    Ok(rows)
}

fn parse_number(s: &str) -> Option<f64> {
    match s {
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        "NaN" | "nan" => Some(f64::NAN),
        _ => s.parse().ok(),
    }
}
