//! MATPOWER-subset case files.
//!
//! Only `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and `mpc.branch` are read. Any
//! other statement, including other matrices such as `mpc.gencost`, is
//! skipped. `%` starts a comment that runs to the end of the line. Inside a
//! matrix, rows end at `;` or a newline and values are separated by
//! whitespace or commas.
//!
//! Columns used (1-based, as in MATPOWER):
//!
//! | block    | columns                                        |
//! |----------|------------------------------------------------|
//! | `bus`    | 1 `bus_i`, 2 `type` (3 = slack), 3 `Pd` (MW)    |
//! | `gen`    | 1 `bus`, 2 `Pg` (MW), 8 `status` (optional)     |
//! | `branch` | 1 `fbus`, 2 `tbus`, 4 `x` (p.u.), 11 `status` (optional) |
//!
//! Out-of-service generators and branches (status 0) are dropped.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    /// Real power demand at nominal load, per-unit.
    pub base_load_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    /// Series reactance, per-unit.
    pub reactance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u32,
    /// Real power dispatch, per-unit.
    pub dispatch_p: f64,
}

/// Validated grid description. Build with [`parse_case`] or [`CaseData::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseData {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    slack_bus: u32,
    base_mva: f64,
}

impl CaseData {
    /// Checks every invariant: unique bus ids, branch and generator endpoints
    /// exist, reactances positive, one slack bus carrying a generator, and a
    /// connected branch graph.
    pub fn new(
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        slack_bus: u32,
        base_mva: f64,
    ) -> Result<Self> {
        if !(base_mva > 0.0) {
            return Err(Error::InvalidParameter(format!("baseMVA {base_mva}")));
        }
        let mut ids = BTreeSet::new();
        for bus in &buses {
            if !ids.insert(bus.id) {
                return Err(Error::DuplicateBus(bus.id));
            }
            if !bus.base_load_p.is_finite() {
                return Err(Error::NonFinite(format!("load of bus {}", bus.id)));
            }
        }
        if !ids.contains(&slack_bus) {
            return Err(Error::NoSlack);
        }
        for (k, br) in branches.iter().enumerate() {
            for bus in [br.from, br.to] {
                if !ids.contains(&bus) {
                    return Err(Error::DanglingBranch { branch: k + 1, bus });
                }
            }
            if !(br.reactance > 0.0) || !br.reactance.is_finite() {
                return Err(Error::NonPositiveReactance {
                    branch: k + 1,
                    reactance: br.reactance,
                });
            }
        }
        for (k, g) in generators.iter().enumerate() {
            if !ids.contains(&g.bus) {
                return Err(Error::DanglingGenerator {
                    generator: k + 1,
                    bus: g.bus,
                });
            }
        }
        if !generators.iter().any(|g| g.bus == slack_bus) {
            return Err(Error::SlackWithoutGenerator(slack_bus));
        }
        let case = Self {
            buses,
            branches,
            generators,
            slack_bus,
            base_mva,
        };
        case.check_connected()?;
        Ok(case)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.buses.len();
        let mut neighbours = vec![Vec::new(); n];
        for br in &self.branches {
            let (a, b) = (self.index_of(br.from).unwrap(), self.index_of(br.to).unwrap());
            neighbours[a].push(b);
            neighbours[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.slack_index()];
        seen[stack[0]] = true;
        while let Some(i) = stack.pop() {
            for &j in &neighbours[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Disconnected(self.buses[i].id)),
            None => Ok(()),
        }
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn slack_bus(&self) -> u32 {
        self.slack_bus
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_ids(&self) -> Vec<u32> {
        self.buses.iter().map(|b| b.id).collect()
    }

    /// Position of a bus id in the bus list; all per-bus vectors use this order.
    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_index(&self) -> usize {
        self.index_of(self.slack_bus).expect("validated slack")
    }

    /// Generator dispatch summed per bus, in bus order.
    pub fn dispatch_by_bus(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.buses.len()];
        for g in &self.generators {
            out[self.index_of(g.bus).unwrap()] += g.dispatch_p;
        }
        out
    }

    pub fn base_loads(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.base_load_p).collect()
    }

    /// Writes the case back in the same grammar [`parse_case`] reads.
    ///
    /// MW columns are chosen so that dividing by `baseMVA` on the way back in
    /// reproduces the stored per-unit value bit for bit. That is always
    /// possible for parsed cases; a hand-built per-unit value that no MW
    /// value maps onto comes back within one ulp.
    pub fn to_matpower(&self) -> String {
        let base = self.base_mva;
        let mut out = String::new();
        out.push_str("function mpc = case\n");
        out.push_str("mpc.version = '2';\n");
        let _ = writeln!(out, "mpc.baseMVA = {};", FloatRepr(base));
        out.push_str("%\tbus_i\ttype\tPd\n");
        out.push_str("mpc.bus = [\n");
        for bus in &self.buses {
            let kind = if bus.id == self.slack_bus { 3 } else { 1 };
            let pd = mw_for(bus.base_load_p, base);
            let _ = writeln!(out, "\t{}\t{}\t{};", bus.id, kind, FloatRepr(pd));
        }
        out.push_str("];\n");
        out.push_str("%\tbus\tPg\n");
        out.push_str("mpc.gen = [\n");
        for g in &self.generators {
            let pg = mw_for(g.dispatch_p, base);
            let _ = writeln!(out, "\t{}\t{};", g.bus, FloatRepr(pg));
        }
        out.push_str("];\n");
        out.push_str("%\tfbus\ttbus\tr\tx\n");
        out.push_str("mpc.branch = [\n");
        for br in &self.branches {
            let _ = writeln!(out, "\t{}\t{}\t0\t{};", br.from, br.to, FloatRepr(br.reactance));
        }
        out.push_str("];\n");
        out
    }
}

struct FloatRepr(f64);

impl core::fmt::Display for FloatRepr {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        // `{:?}` is the shortest string that parses back to the same bits.
        write!(f, "{:?}", self.0)
    }
}

fn mw_for(pu: f64, base: f64) -> f64 {
    let mut mw = pu * base;
    let mut down = mw;
    for _ in 0..64 {
        if mw / base == pu {
            return mw;
        }
        if down / base == pu {
            return down;
        }
        mw = mw.next_up();
        down = down.next_down();
    }
    pu * base
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Block {
    Bus,
    Gen,
    Branch,
    Skip,
}

struct Row {
    line: usize,
    values: Vec<(f64, usize)>,
}

/// Parses MATPOWER-subset text into a validated [`CaseData`].
pub fn parse_case(text: &str) -> Result<CaseData> {
    let mut base_mva: Option<f64> = None;
    let mut blocks: BTreeMap<&'static str, Vec<Row>> = BTreeMap::new();
    let mut open: Option<(Block, usize)> = None;
    let mut current: Vec<(f64, usize)> = Vec::new();
    let mut current_line = 0;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let content = raw.split('%').next().unwrap_or("");
        let mut rest: &str = content;
        let mut offset = 0usize;

        if open.is_none() {
            let trimmed = rest.trim();
            if trimmed.is_empty() {
                continue;
            }
            let Some((lhs, rhs)) = trimmed.split_once('=') else {
                continue;
            };
            let name = lhs.trim();
            let rhs_trim = rhs.trim_start();
            if let Some(after) = rhs_trim.strip_prefix('[') {
                let block = match name {
                    "mpc.bus" => Block::Bus,
                    "mpc.gen" => Block::Gen,
                    "mpc.branch" => Block::Branch,
                    _ => Block::Skip,
                };
                open = Some((block, line_no));
                offset = raw.len() - raw.trim_start().len() + (trimmed.len() - after.len());
                rest = after;
                current.clear();
                current_line = line_no;
            } else {
                if name == "mpc.baseMVA" {
                    let value = rhs.trim().trim_end_matches(';').trim();
                    let col = raw.find(value).unwrap_or(0) + 1;
                    base_mva = Some(parse_number(value, line_no, col)?);
                }
                continue;
            }
        }

        let (block, _) = open.expect("inside a matrix");
        let col = offset;
        let mut token_start: Option<usize> = None;
        let bytes = rest.as_bytes();
        let mut closed = false;
        let mut i = 0;
        while i <= bytes.len() {
            let ch = if i < bytes.len() { bytes[i] } else { b'\n' };
            let is_sep = matches!(ch, b' ' | b'\t' | b',' | b';' | b']' | b'\n' | b'\r');
            if is_sep {
                if let Some(start) = token_start.take() {
                    let tok = &rest[start..i];
                    if block != Block::Skip {
                        let column = col + start + 1;
                        current.push((parse_number(tok, line_no, column)?, column));
                    }
                }
                if ch == b';' || ch == b'\n' || ch == b']' {
                    if !current.is_empty() {
                        blocks.entry(block_key(block)).or_default().push(Row {
                            line: current_line,
                            values: core::mem::take(&mut current),
                        });
                    }
                    current_line = line_no;
                }
                if ch == b']' {
                    closed = true;
                    break;
                }
            } else if token_start.is_none() {
                token_start = Some(i);
                if current.is_empty() {
                    current_line = line_no;
                }
            }
            i += 1;
        }
        if closed {
            open = None;
        }
    }
    if let Some((_, line)) = open {
        return Err(Error::Syntax {
            line,
            column: 1,
            message: "matrix is never closed with ']'".into(),
        });
    }

    let base_mva = base_mva.ok_or(Error::Syntax {
        line: 0,
        column: 0,
        message: "missing mpc.baseMVA".into(),
    })?;

    let mut buses = Vec::new();
    let mut slack: Option<u32> = None;
    for row in blocks.get("bus").map(Vec::as_slice).unwrap_or(&[]) {
        need_columns(row, 3, "bus")?;
        let id = as_id(row, 0)?;
        if row.values[1].0 == 3.0 {
            if let Some(first) = slack {
                return Err(Error::MultipleSlack { first, second: id });
            }
            slack = Some(id);
        }
        buses.push(Bus {
            id,
            base_load_p: row.values[2].0 / base_mva,
        });
    }
    let mut generators = Vec::new();
    for row in blocks.get("gen").map(Vec::as_slice).unwrap_or(&[]) {
        need_columns(row, 2, "gen")?;
        if row.values.len() >= 8 && row.values[7].0 <= 0.0 {
            continue;
        }
        generators.push(Generator {
            bus: as_id(row, 0)?,
            dispatch_p: row.values[1].0 / base_mva,
        });
    }
    let mut branches = Vec::new();
    for row in blocks.get("branch").map(Vec::as_slice).unwrap_or(&[]) {
        need_columns(row, 4, "branch")?;
        if row.values.len() >= 11 && row.values[10].0 <= 0.0 {
            continue;
        }
        branches.push(Branch {
            from: as_id(row, 0)?,
            to: as_id(row, 1)?,
            reactance: row.values[3].0,
        });
    }
    let slack = slack.ok_or(Error::NoSlack)?;
    CaseData::new(buses, branches, generators, slack, base_mva)
}

fn block_key(block: Block) -> &'static str {
    match block {
        Block::Bus => "bus",
        Block::Gen => "gen",
        Block::Branch => "branch",
        Block::Skip => "skip",
    }
}

fn parse_number(tok: &str, line: usize, column: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Syntax {
        line,
        column,
        message: format!("expected a number, found '{tok}'"),
    })
}

fn need_columns(row: &Row, n: usize, block: &str) -> Result<()> {
    if row.values.len() < n {
        return Err(Error::Syntax {
            line: row.line,
            column: row.values.last().map_or(1, |v| v.1),
            message: format!("{block} row needs at least {n} columns, found {}", row.values.len()),
        });
    }
    Ok(())
}

fn as_id(row: &Row, idx: usize) -> Result<u32> {
    let (v, column) = row.values[idx];
    if v < 0.0 || math::floor(v) != v || v > u32::MAX as f64 {
        return Err(Error::Syntax {
            line: row.line,
            column,
            message: format!("expected a bus number, found {v}"),
        });
    }
    Ok(v as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    const TWO_BUS: &str = "\
function mpc = two_bus
% minimal case
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0   0 0 0 1 1 0;
  2 1 100 0 0 0 1 1 0;
];
mpc.gen = [
  1 0 0 0 0 1 100 1;
];
mpc.branch = [
  1 2 0 0.1 0 0 0 0 0 0 1;
];
mpc.gencost = [
  2 0 0 3 0.01 40 0;
];
";

    #[test]
    fn two_bus_fixture() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.bus_count(), 2);
        assert_eq!(case.branches().len(), 1);
        assert_eq!(case.slack_bus(), 1);
        assert_eq!(case.buses()[1].base_load_p, 1.0);
        assert_eq!(case.branches()[0].reactance, 0.1);
    }

    #[test]
    fn dangling_branch_names_the_bus() {
        let text = TWO_BUS.replace("1 2 0 0.1", "1 999 0 0.1");
        let err = parse_case(&text).unwrap_err();
        assert_eq!(err, Error::DanglingBranch { branch: 1, bus: 999 });
        assert!(err.to_string().contains("999"));
    }

    #[test]
    fn duplicate_bus_rejected() {
        let text = TWO_BUS.replace("2 1 100", "1 1 100");
        assert_eq!(parse_case(&text).unwrap_err(), Error::DuplicateBus(1));
    }

    #[test]
    fn missing_slack_rejected() {
        let text = TWO_BUS.replace("1 3 0", "1 2 0");
        assert_eq!(parse_case(&text).unwrap_err(), Error::NoSlack);
    }

    #[test]
    fn disconnected_rejected() {
        let text = TWO_BUS.replace(
            "  2 1 100 0 0 0 1 1 0;\n",
            "  2 1 100 0 0 0 1 1 0;\n  3 1 5 0 0 0 1 1 0;\n",
        );
        assert_eq!(parse_case(&text).unwrap_err(), Error::Disconnected(3));
    }

    #[test]
    fn syntax_error_reports_position() {
        let text = TWO_BUS.replace("2 1 100 0", "2 1 1o0 0");
        match parse_case(&text).unwrap_err() {
            Error::Syntax { line, column, .. } => {
                assert_eq!(line, 7);
                assert_eq!(column, 7);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_service_branch_dropped() {
        let text = TWO_BUS.replace(
            "  1 2 0 0.1 0 0 0 0 0 0 1;\n",
            "  1 2 0 0.1 0 0 0 0 0 0 1;\n  1 2 0 0.2 0 0 0 0 0 0 0;\n",
        );
        assert_eq!(parse_case(&text).unwrap().branches().len(), 1);
    }

    #[test]
    fn serialize_round_trip() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(parse_case(&case.to_matpower()).unwrap(), case);
    }
}
