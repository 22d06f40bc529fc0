//! Key-value inputs file: scalar bindings, array placements, initial
//! contents, per-instruction extra latencies, and scripted call effects.
//!
//! Line oriented, `#` comments:
//!
//! ```text
//! entry pnd_example            # optional; default is the first function
//! repeat 2                     # invoke the entry function twice
//! bind n = 256                 # scalar parameter binding
//! place a = 0x1000 len 256 esz 4   # array parameter placement
//! place g = 0x8000             # global placement (len/esz from its decl)
//! fill b = 2                   # every element of b starts as 2
//! init a = 1 2 3               # leading elements of a (applied after fill)
//! delay 4 = 30                 # static instr 4: +30 cycles before issue
//! calleffect helper x[i] = 7   # each call to helper writes x[i] = 7
//! ```
//!
//! Unplaced globals are laid out automatically after all explicit
//! placements, in declaration order, 64-byte aligned. Array parameters must
//! be placed explicitly (their length is not known from the program text).

use crate::mir::{parse_affine, AffineExpr, ParamKind, Program};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum InputsError {
    #[error("inputs line {0}: {1}")]
    Line(u32, String),
    #[error("placement for {0:?} needs len and esz (array parameter)")]
    ParamNeedsShape(String),
    #[error("{0:?} is not an array parameter or global of the entry function")]
    UnknownArray(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub base: u64,
    pub len: Option<u64>,
    pub esz: Option<u32>,
}

/// Resolved layout of one array in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayLayout {
    pub base: u64,
    pub len: u64,
    pub esz: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallEffect {
    pub array: String,
    pub index: AffineExpr,
    pub value: AffineExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoweringInputs {
    pub entry: Option<String>,
    pub binds: BTreeMap<String, i64>,
    pub placements: BTreeMap<String, Placement>,
    pub fills: BTreeMap<String, i64>,
    pub inits: BTreeMap<String, Vec<i64>>,
    /// Extra issue latency per static instruction id.
    pub delays: BTreeMap<u32, u64>,
    /// Scripted writes per callee name, executed in order at each call.
    pub call_effects: BTreeMap<String, Vec<CallEffect>>,
    /// Run the entry function this many times back to back (registers and
    /// memory persist), re-instantiating the same static instructions.
    /// Zero means one invocation.
    pub repeat: u64,
}

pub fn parse_inputs(text: &str) -> Result<LoweringInputs, InputsError> {
    let mut out = LoweringInputs::default();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno as u32 + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| InputsError::Line(lineno, msg.to_string());
        let (key, rest) = line.split_once(char::is_whitespace).ok_or_else(|| {
            err("expected a directive (entry, bind, place, fill, init, delay, calleffect)")
        })?;
        let rest = rest.trim();
        match key {
            "entry" => out.entry = Some(rest.to_string()),
            "repeat" => {
                out.repeat = parse_u64(rest, lineno)?;
            }
            "bind" => {
                let (name, v) = split_eq(rest).ok_or_else(|| err("expected: bind NAME = INT"))?;
                out.binds.insert(name.to_string(), parse_int(v, lineno)?);
            }
            "place" => {
                let (name, spec) =
                    split_eq(rest).ok_or_else(|| err("expected: place NAME = ADDR [len N esz N]"))?;
                let mut words = spec.split_whitespace();
                let base = parse_u64(
                    words.next().ok_or_else(|| err("missing base address"))?,
                    lineno,
                )?;
                let mut len = None;
                let mut esz = None;
                while let Some(w) = words.next() {
                    let v = words.next().ok_or_else(|| err("missing value after len/esz"))?;
                    match w {
                        "len" => len = Some(parse_u64(v, lineno)?),
                        "esz" => esz = Some(parse_u64(v, lineno)? as u32),
                        _ => return Err(err("expected len or esz")),
                    }
                }
                out.placements
                    .insert(name.to_string(), Placement { base, len, esz });
            }
            "fill" => {
                let (name, v) = split_eq(rest).ok_or_else(|| err("expected: fill NAME = INT"))?;
                out.fills.insert(name.to_string(), parse_int(v, lineno)?);
            }
            "init" => {
                let (name, vals) =
                    split_eq(rest).ok_or_else(|| err("expected: init NAME = INT..."))?;
                let parsed: Result<Vec<i64>, _> =
                    vals.split_whitespace().map(|v| parse_int(v, lineno)).collect();
                out.inits.insert(name.to_string(), parsed?);
            }
            "delay" => {
                let (id, v) = split_eq(rest).ok_or_else(|| err("expected: delay ID = CYCLES"))?;
                out.delays
                    .insert(parse_u64(id, lineno)? as u32, parse_u64(v, lineno)?);
            }
            "calleffect" => {
                // calleffect CALLEE ARRAY[affine] = affine
                let (callee, rest) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| err("expected: calleffect CALLEE ARRAY[idx] = VALUE"))?;
                let (lhs, value) = split_eq(rest.trim())
                    .ok_or_else(|| err("expected: calleffect CALLEE ARRAY[idx] = VALUE"))?;
                let lhs = lhs.trim();
                let open = lhs.find('[').ok_or_else(|| err("expected ARRAY[idx]"))?;
                if !lhs.ends_with(']') {
                    return Err(err("expected ARRAY[idx]"));
                }
                let array = lhs[..open].trim().to_string();
                let index = parse_affine(&lhs[open + 1..lhs.len() - 1])
                    .map_err(|e| InputsError::Line(lineno, e.to_string()))?;
                let value =
                    parse_affine(value).map_err(|e| InputsError::Line(lineno, e.to_string()))?;
                out.call_effects
                    .entry(callee.to_string())
                    .or_default()
                    .push(CallEffect {
                        array,
                        index,
                        value,
                    });
            }
            other => return Err(err(&format!("unknown directive {other:?}"))),
        }
    }
    Ok(out)
}

fn split_eq(s: &str) -> Option<(&str, &str)> {
    let (a, b) = s.split_once('=')?;
    Some((a.trim(), b.trim()))
}

fn parse_int(s: &str, lineno: u32) -> Result<i64, InputsError> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = parse_u64(body, lineno)? as i64;
    Ok(if neg { -v } else { v })
}

fn parse_u64(s: &str, lineno: u32) -> Result<u64, InputsError> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    r.map_err(|_| InputsError::Line(lineno, format!("bad integer {s:?}")))
}

impl LoweringInputs {
    /// Resolve layouts for every base the entry function can touch.
    /// Globals without an explicit placement are packed automatically after
    /// the highest placed address.
    pub fn layouts(
        &self,
        program: &Program,
        entry: &crate::mir::Function,
    ) -> Result<BTreeMap<String, ArrayLayout>, super::LowerError> {
        let mut layouts = BTreeMap::new();
        for g in &program.globals {
            if let Some(p) = self.placements.get(&g.name) {
                layouts.insert(
                    g.name.clone(),
                    ArrayLayout {
                        base: p.base,
                        len: p.len.unwrap_or(g.len),
                        esz: p.esz.unwrap_or(g.esz),
                    },
                );
            }
        }
        for p in &entry.params {
            if p.kind != ParamKind::Array {
                continue;
            }
            let placement = self
                .placements
                .get(&p.name)
                .ok_or_else(|| super::LowerError::UnplacedParam(p.name.clone()))?;
            let (Some(len), Some(esz)) = (placement.len, placement.esz) else {
                return Err(InputsError::ParamNeedsShape(p.name.clone()).into());
            };
            layouts.insert(
                p.name.clone(),
                ArrayLayout {
                    base: placement.base,
                    len,
                    esz,
                },
            );
        }
        let mut cursor: u64 = 0x1000;
        for layout in layouts.values() {
            cursor = cursor.max(layout.base + layout.len * layout.esz as u64);
        }
        for g in &program.globals {
            if layouts.contains_key(&g.name) {
                continue;
            }
            let base = align_up(cursor, 64);
            cursor = base + g.len * g.esz as u64;
            layouts.insert(
                g.name.clone(),
                ArrayLayout {
                    base,
                    len: g.len,
                    esz: g.esz,
                },
            );
        }
        Ok(layouts)
    }

    /// Build the initial machine state: fills first, then leading inits.
    /// Registers start at zero.
    pub fn initial_state(
        &self,
        program: &Program,
    ) -> Result<super::MachineState, super::LowerError> {
        let entry = match &self.entry {
            Some(name) => program
                .function(name)
                .ok_or_else(|| super::LowerError::NoSuchFunction(name.clone()))?,
            None => program
                .functions
                .first()
                .ok_or_else(|| super::LowerError::NoSuchFunction("<first>".to_string()))?,
        };
        let layouts = self.layouts(program, entry)?;
        for name in self.fills.keys().chain(self.inits.keys()) {
            if !layouts.contains_key(name) {
                return Err(InputsError::UnknownArray(name.clone()).into());
            }
        }
        let mut state = super::MachineState::default();
        for (name, fill) in &self.fills {
            let layout = &layouts[name];
            for i in 0..layout.len {
                state.write_mem(layout.base + i * layout.esz as u64, layout.esz, *fill);
            }
        }
        for (name, vals) in &self.inits {
            let layout = &layouts[name];
            for (i, v) in vals.iter().enumerate().take(layout.len as usize) {
                state.write_mem(layout.base + i as u64 * layout.esz as u64, layout.esz, *v);
            }
        }
        Ok(state)
    }
}

fn align_up(v: u64, align: u64) -> u64 {
    v.div_ceil(align) * align
}
