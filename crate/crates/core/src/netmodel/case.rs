//! Case-file readers: the canonical JSON schema and a MATPOWER `.m` subset.

use std::collections::HashMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Branch, Bus, BusKind, Generator, PowerNetwork};

pub const CASE_FORMAT_VERSION: u32 = 1;

/// On-disk JSON case. Quantities are per-unit on `base_mva`; generator and
/// branch endpoints refer to bus `id`s; costs are $/h over per-unit power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFile {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<GeneratorRecord>,
    pub branches: Vec<BranchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    #[serde(default)]
    pub cost_c2: f64,
    #[serde(default)]
    pub cost_c1: f64,
    #[serde(default)]
    pub cost_c0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b_charge: f64,
    #[serde(default = "one")]
    pub tap: f64,
    #[serde(default)]
    pub s_max: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

fn default_version() -> u32 {
    CASE_FORMAT_VERSION
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl CaseFile {
    pub fn from_network(net: &PowerNetwork) -> Self {
        let id = |i: usize| net.buses()[i].id;
        CaseFile {
            format_version: CASE_FORMAT_VERSION,
            base_mva: net.base_mva(),
            buses: net.buses().to_vec(),
            generators: net
                .generators()
                .iter()
                .map(|g| GeneratorRecord {
                    bus: id(g.bus),
                    p_min: g.p_min,
                    p_max: g.p_max,
                    q_min: g.q_min,
                    q_max: g.q_max,
                    cost_c2: g.cost_c2,
                    cost_c1: g.cost_c1,
                    cost_c0: g.cost_c0,
                })
                .collect(),
            branches: net
                .branches()
                .iter()
                .map(|b| BranchRecord {
                    from: id(b.from),
                    to: id(b.to),
                    r: b.r,
                    x: b.x,
                    b_charge: b.b_charge,
                    tap: b.tap,
                    s_max: b.s_max,
                    in_service: b.in_service,
                })
                .collect(),
        }
    }

    pub fn into_network(self) -> Result<PowerNetwork> {
        if self.format_version != CASE_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported case format_version {} (expected {CASE_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let index: HashMap<usize, usize> =
            self.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
        let lookup = |id: usize, what: &str| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::Validation(format!("{what} references unknown bus id {id}")))
        };
        let generators = self
            .generators
            .iter()
            .map(|g| {
                Ok(Generator {
                    bus: lookup(g.bus, "generator")?,
                    p_min: g.p_min,
                    p_max: g.p_max,
                    q_min: g.q_min,
                    q_max: g.q_max,
                    cost_c2: g.cost_c2,
                    cost_c1: g.cost_c1,
                    cost_c0: g.cost_c0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let branches = self
            .branches
            .iter()
            .map(|b| {
                Ok(Branch {
                    from: lookup(b.from, "branch")?,
                    to: lookup(b.to, "branch")?,
                    r: b.r,
                    x: b.x,
                    b_charge: b.b_charge,
                    tap: b.tap,
                    s_max: b.s_max,
                    in_service: b.in_service,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PowerNetwork::new(self.base_mva, self.buses, generators, branches)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn parse_json_case(text: &str) -> Result<PowerNetwork> {
    let case: CaseFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    case.into_network()
}

/// Parses either format; text whose first non-blank character is `{` is JSON.
pub fn parse_case(text: &str) -> Result<PowerNetwork> {
    if text.trim_start().starts_with('{') {
        parse_json_case(text)
    } else {
        parse_matpower(text)
    }
}

struct Row {
    line: usize,
    values: Vec<f64>,
}

impl Row {
    fn need(&self, n: usize, table: &str) -> Result<()> {
        if self.values.len() < n {
            return Err(Error::Parse {
                line: self.line,
                msg: format!("{table} row has {} columns, expected at least {n}", self.values.len()),
            });
        }
        Ok(())
    }
}

#[derive(Default)]
struct Tables {
    base_mva: Option<f64>,
    bus: Option<Vec<Row>>,
    gen: Option<Vec<Row>>,
    branch: Option<Vec<Row>>,
    gencost: Option<Vec<Row>>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn parse_row(text: &str, line: usize) -> Result<Option<Row>> {
    let mut values = Vec::new();
    for tok in text.split(|c: char| c.is_whitespace() || c == ',') {
        if tok.is_empty() {
            continue;
        }
        let v = match tok {
            "Inf" | "inf" => f64::INFINITY,
            "-Inf" | "-inf" => f64::NEG_INFINITY,
            _ => tok.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid number `{tok}`"),
            })?,
        };
        values.push(v);
    }
    Ok((!values.is_empty()).then_some(Row { line, values }))
}

fn scan(text: &str) -> Result<Tables> {
    let mut tables = Tables::default();
    // (table name, rows so far) while inside `[ ... ]`
    let mut open: Option<(String, Vec<Row>)> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let mut rest = strip_comment(raw).trim();
        if open.is_none() {
            let Some(field) = rest.strip_prefix("mpc.") else {
                continue;
            };
            let Some((name, value)) = field.split_once('=') else {
                continue;
            };
            let name = name.trim().to_string();
            let value = value.trim();
            if let Some(after) = value.strip_prefix('[') {
                open = Some((name, Vec::new()));
                rest = after;
            } else {
                if name == "baseMVA" {
                    let v = value.trim_end_matches(';').trim();
                    tables.base_mva = Some(v.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("invalid baseMVA `{v}`"),
                    })?);
                } else if name != "version" {
                    warn!("line {line}: ignoring MATPOWER field `{name}`");
                }
                continue;
            }
        }
        let (name, rows) = open.as_mut().expect("inside a table");
        let (body, closed) = match rest.find(']') {
            Some(p) => (&rest[..p], true),
            None => (rest, false),
        };
        for seg in body.split(';') {
            if let Some(row) = parse_row(seg, line)? {
                rows.push(row);
            }
        }
        if closed {
            let (name, rows) = (std::mem::take(name), std::mem::take(rows));
            open = None;
            match name.as_str() {
                "bus" => tables.bus = Some(rows),
                "gen" => tables.gen = Some(rows),
                "branch" => tables.branch = Some(rows),
                "gencost" => tables.gencost = Some(rows),
                other => warn!("line {line}: ignoring MATPOWER table `{other}`"),
            }
        }
    }
    if let Some((name, _)) = open {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: format!("unterminated table `{name}`"),
        });
    }
    Ok(tables)
}

fn missing(what: &str) -> Error {
    Error::Parse {
        line: 0,
        msg: format!("missing `mpc.{what}`"),
    }
}

/// Reads the `baseMVA`, `bus`, `gen`, `branch` and `gencost` fields of a
/// MATPOWER case, converting to per-unit. Other fields are ignored with a
/// warning; out-of-service generators are dropped.
pub fn parse_matpower(text: &str) -> Result<PowerNetwork> {
    let t = scan(text)?;
    let base = t.base_mva.ok_or_else(|| missing("baseMVA"))?;
    let bus_rows = t.bus.ok_or_else(|| missing("bus"))?;
    let gen_rows = t.gen.ok_or_else(|| missing("gen"))?;
    let branch_rows = t.branch.ok_or_else(|| missing("branch"))?;
    let cost_rows = t.gencost.ok_or_else(|| missing("gencost"))?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut index = HashMap::new();
    for row in &bus_rows {
        row.need(13, "bus")?;
        let v = &row.values;
        let kind = match v[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            other => {
                return Err(Error::Parse {
                    line: row.line,
                    msg: format!("unsupported bus type {other}"),
                })
            }
        };
        let id = v[0] as usize;
        if index.insert(id, buses.len()).is_some() {
            return Err(Error::Parse {
                line: row.line,
                msg: format!("duplicate bus id {id}"),
            });
        }
        buses.push(Bus {
            id,
            kind,
            p_d: v[2] / base,
            q_d: v[3] / base,
            v_min: v[12],
            v_max: v[11],
            shunt_gs: v[4] / base,
            shunt_bs: v[5] / base,
        });
    }
    let bus_of = |id: f64, line: usize| {
        index.get(&(id as usize)).copied().ok_or_else(|| Error::Parse {
            line,
            msg: format!("unknown bus id {id}"),
        })
    };

    if cost_rows.len() < gen_rows.len() {
        return Err(Error::Parse {
            line: cost_rows.last().map_or(0, |r| r.line),
            msg: format!("{} gencost rows for {} generators", cost_rows.len(), gen_rows.len()),
        });
    }
    if cost_rows.len() > gen_rows.len() {
        warn!("ignoring reactive-power gencost rows");
    }
    let mut generators = Vec::new();
    for (row, cost) in gen_rows.iter().zip(&cost_rows) {
        row.need(10, "gen")?;
        cost.need(4, "gencost")?;
        let v = &row.values;
        if v[7] <= 0.0 {
            continue;
        }
        if cost.values[0] as i64 != 2 {
            return Err(Error::Parse {
                line: cost.line,
                msg: "only polynomial (model 2) generator costs are supported".into(),
            });
        }
        let n = cost.values[3] as usize;
        cost.need(4 + n, "gencost")?;
        if n > 3 {
            return Err(Error::Parse {
                line: cost.line,
                msg: format!("polynomial cost of degree {} is not quadratic", n - 1),
            });
        }
        // highest order first; pad to [c2, c1, c0]
        let mut c = [0.0; 3];
        c[3 - n..].copy_from_slice(&cost.values[4..4 + n]);
        generators.push(Generator {
            bus: bus_of(v[0], row.line)?,
            p_min: v[9] / base,
            p_max: v[8] / base,
            q_min: v[4] / base,
            q_max: v[3] / base,
            cost_c2: c[0] * base * base,
            cost_c1: c[1] * base,
            cost_c0: c[2],
        });
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in &branch_rows {
        row.need(11, "branch")?;
        let v = &row.values;
        if v[9] != 0.0 {
            warn!("line {}: ignoring phase-shift angle {}", row.line, v[9]);
        }
        branches.push(Branch {
            from: bus_of(v[0], row.line)?,
            to: bus_of(v[1], row.line)?,
            r: v[2],
            x: v[3],
            b_charge: v[4],
            tap: if v[8] == 0.0 { 1.0 } else { v[8] },
            s_max: v[5] / base,
            in_service: v[10] > 0.0,
        });
    }
    PowerNetwork::new(base, buses, generators, branches)
}

/// Reads the `area` column of a MATPOWER bus table as `(bus id, area)` pairs.
pub fn matpower_bus_areas(text: &str) -> Result<Vec<(usize, usize)>> {
    let rows = scan(text)?.bus.ok_or_else(|| missing("bus"))?;
    rows.iter()
        .map(|row| {
            row.need(7, "bus")?;
            Ok((row.values[0] as usize, row.values[6] as usize))
        })
        .collect()
}
