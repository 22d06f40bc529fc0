//! Experiment harness: scenario files, labelled-vs-unlabelled comparison
//! runs, and CSV/JSON reports.
//!
//! A scenario file (`.scn`) couples a program with its lowering inputs and
//! the configurations to run:
//!
//! ```text
//! program listing1.mir
//! inputs listing1.inputs
//! configs small large xlarge
//! ```
//!
//! Paths are relative to the scenario file. A `configs` entry is a preset
//! name or a path to a JSON `CpuConfig`. The scenario's name is its file
//! stem.
//!
//! For each configuration, [`run_comparison`] labels the program, lowers it
//! once, simulates the same trace twice — labels enabled and disabled —
//! from the same initial state, and checks both final states against the
//! in-order reference. A state mismatch marks the row `FAILED`; it is never
//! acceptable.

use crate::analysis::label_pass;
use crate::lower::{lower, parse_inputs, run_inorder, LowerError, LoweringInputs};
use crate::mir::{parse_program, validate, ParseError, Program};
use crate::sim::{CpuConfig, RunMetrics, Simulator};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {err}")]
    Io {
        path: PathBuf,
        #[source]
        err: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Scn {
        path: PathBuf,
        line: u32,
        msg: String,
    },
    #[error("{path}: {err}")]
    ProgramParse {
        path: PathBuf,
        #[source]
        err: ParseError,
    },
    #[error("{path}: invalid program: {msgs}")]
    ProgramInvalid { path: PathBuf, msgs: String },
    #[error("{path}: {msg}")]
    InputsParse { path: PathBuf, msg: String },
    #[error("unknown configuration {0:?}")]
    UnknownConfig(String),
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error("scenario {0:?} not found (looked for {1})")]
    ScenarioNotFound(String, String),
    #[error("no rows to summarize: every row failed or none were produced")]
    AllRowsFailed,
}

/// A loaded, validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub program_path: PathBuf,
    pub inputs_path: PathBuf,
    pub program: Program,
    pub inputs: LoweringInputs,
    /// (label, config) pairs in file order.
    pub configs: Vec<(String, CpuConfig)>,
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|err| HarnessError::Io {
        path: path.to_path_buf(),
        err,
    })
}

/// Load a `.scn` file and everything it references.
pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = read(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut program_path = None;
    let mut inputs_path = None;
    let mut configs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let scn_err = |msg: &str| HarnessError::Scn {
            path: path.to_path_buf(),
            line: lineno as u32 + 1,
            msg: msg.to_string(),
        };
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| scn_err("expected: program|inputs|configs ..."))?;
        let rest = rest.trim();
        match key {
            "program" => program_path = Some(dir.join(rest)),
            "inputs" => inputs_path = Some(dir.join(rest)),
            "configs" => {
                for word in rest.split_whitespace() {
                    if let Some(cfg) = CpuConfig::preset(word) {
                        configs.push((word.to_string(), cfg));
                    } else {
                        let cfg_path = dir.join(word);
                        let text = read(&cfg_path)?;
                        let cfg: CpuConfig = serde_json::from_str(&text).map_err(|e| {
                            HarnessError::InputsParse {
                                path: cfg_path.clone(),
                                msg: e.to_string(),
                            }
                        })?;
                        let label = cfg_path
                            .file_stem()
                            .map(|s| s.to_string_lossy().into_owned())
                            .unwrap_or_else(|| word.to_string());
                        configs.push((label, cfg));
                    }
                }
            }
            other => return Err(scn_err(&format!("unknown key {other:?}"))),
        }
    }
    let program_path = program_path.ok_or_else(|| HarnessError::Scn {
        path: path.to_path_buf(),
        line: 0,
        msg: "missing program line".to_string(),
    })?;
    let inputs_path = inputs_path.ok_or_else(|| HarnessError::Scn {
        path: path.to_path_buf(),
        line: 0,
        msg: "missing inputs line".to_string(),
    })?;
    if configs.is_empty() {
        configs.push(("small".to_string(), CpuConfig::small()));
    }
    let program = load_program(&program_path)?;
    let inputs_text = read(&inputs_path)?;
    let inputs = parse_inputs(&inputs_text).map_err(|e| HarnessError::InputsParse {
        path: inputs_path.clone(),
        msg: e.to_string(),
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Scenario {
        name,
        program_path,
        inputs_path,
        program,
        inputs,
        configs,
    })
}

/// Parse and validate a program file.
pub fn load_program(path: &Path) -> Result<Program, HarnessError> {
    let text = read(path)?;
    let program = parse_program(&text).map_err(|err| HarnessError::ProgramParse {
        path: path.to_path_buf(),
        err,
    })?;
    let diags = validate(&program);
    if !diags.is_empty() {
        return Err(HarnessError::ProgramInvalid {
            path: path.to_path_buf(),
            msgs: diags
                .iter()
                .map(|d| d.message.clone())
                .collect::<Vec<_>>()
                .join("; "),
        });
    }
    Ok(program)
}

/// Resolve a scenario argument: an existing path is used as-is, otherwise
/// `<name>.scn` is looked up in `$MDSIM_SCENARIO_DIR`, then in `scenarios/`
/// under the current directory.
pub fn resolve_scenario(arg: &str) -> Result<PathBuf, HarnessError> {
    let direct = PathBuf::from(arg);
    if direct.exists() {
        return Ok(direct);
    }
    let mut tried = vec![direct.display().to_string()];
    let file = format!("{arg}.scn");
    if let Ok(dir) = std::env::var("MDSIM_SCENARIO_DIR") {
        let p = Path::new(&dir).join(&file);
        if p.exists() {
            return Ok(p);
        }
        tried.push(p.display().to_string());
    }
    let p = Path::new("scenarios").join(&file);
    if p.exists() {
        return Ok(p);
    }
    tried.push(p.display().to_string());
    Err(HarnessError::ScenarioNotFound(arg.to_string(), tried.join(", ")))
}

/// One labelled-vs-unlabelled comparison under one configuration. The full
/// configuration is echoed so a row is reproducible from the report alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub config: String,
    /// Both runs matched the in-order reference. A false here is a
    /// correctness bug in the model, never acceptable.
    pub state_ok: bool,
    pub committed_insts: u64,
    pub labelled_loads: u64,
    pub lookups_unlabelled: u64,
    pub lookups_labelled: u64,
    pub bypassed_lookups: u64,
    pub lpki_unlabelled: f64,
    pub lpki_labelled: f64,
    pub lookup_reduction_pct: f64,
    pub cycles_unlabelled: u64,
    pub cycles_labelled: u64,
    pub cpi_unlabelled: f64,
    pub cpi_labelled: f64,
    pub cpi_change_pct: f64,
    pub violations_unlabelled: u64,
    pub violations_labelled: u64,
    pub collisions_unlabelled: u64,
    pub collisions_labelled: u64,
    pub false_deps_unlabelled: u64,
    pub false_deps_labelled: u64,
    pub forwardings_unlabelled: u64,
    pub forwardings_labelled: u64,
    pub cfg: CpuConfig,
}

/// Label, lower once, simulate twice per configuration, and verify both
/// final states against the in-order reference.
pub fn run_comparison(scenario: &Scenario) -> Result<Vec<ComparisonRow>, HarnessError> {
    let (labelled_program, report) = label_pass(&scenario.program);
    let trace = lower(&labelled_program, &scenario.inputs)?;
    let init = scenario.inputs.initial_state(&labelled_program)?;
    let oracle = run_inorder(&trace, &init);
    let mut rows = Vec::new();
    for (label, cfg) in &scenario.configs {
        let unlabelled = Simulator::new(cfg.clone()).run(&trace, &init, false);
        let labelled = Simulator::new(cfg.clone()).run(&trace, &init, true);
        let state_ok = unlabelled.state == oracle && labelled.state == oracle;
        rows.push(build_row(
            &scenario.name,
            label,
            cfg,
            state_ok,
            report.labelled_count() as u64,
            &unlabelled.metrics,
            &labelled.metrics,
        ));
    }
    Ok(rows)
}

fn build_row(
    scenario: &str,
    config: &str,
    cfg: &CpuConfig,
    state_ok: bool,
    labelled_loads: u64,
    unlab: &RunMetrics,
    lab: &RunMetrics,
) -> ComparisonRow {
    let reduction = if unlab.mdp_lookups > 0 {
        100.0 * (1.0 - lab.mdp_lookups as f64 / unlab.mdp_lookups as f64)
    } else {
        0.0
    };
    let cpi_change = if unlab.cpi > 0.0 {
        100.0 * (lab.cpi / unlab.cpi - 1.0)
    } else {
        0.0
    };
    ComparisonRow {
        scenario: scenario.to_string(),
        config: config.to_string(),
        state_ok,
        committed_insts: unlab.committed_insts,
        labelled_loads,
        lookups_unlabelled: unlab.mdp_lookups,
        lookups_labelled: lab.mdp_lookups,
        bypassed_lookups: lab.bypassed_lookups,
        lpki_unlabelled: unlab.lpki,
        lpki_labelled: lab.lpki,
        lookup_reduction_pct: reduction,
        cycles_unlabelled: unlab.cycles,
        cycles_labelled: lab.cycles,
        cpi_unlabelled: unlab.cpi,
        cpi_labelled: lab.cpi,
        cpi_change_pct: cpi_change,
        violations_unlabelled: unlab.violations,
        violations_labelled: lab.violations,
        collisions_unlabelled: unlab.index_collisions,
        collisions_labelled: lab.index_collisions,
        false_deps_unlabelled: unlab.false_dependencies,
        false_deps_labelled: lab.false_dependencies,
        forwardings_unlabelled: unlab.forwardings,
        forwardings_labelled: lab.forwardings,
        cfg: cfg.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSummary {
    pub config: String,
    pub rows: usize,
    pub mean_lookup_reduction_pct: f64,
    pub max_lookup_reduction_pct: f64,
    /// Geometric mean of cpi_labelled / cpi_unlabelled; below 1.0 means the
    /// labelled runs are faster.
    pub geomean_cpi_ratio: f64,
    pub geomean_cpi_change_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub per_config: Vec<ConfigSummary>,
}

/// Aggregate non-failed rows per configuration.
pub fn summarize(rows: &[ComparisonRow]) -> Result<SummaryReport, HarnessError> {
    let mut configs: Vec<String> = Vec::new();
    for row in rows.iter().filter(|r| r.state_ok) {
        if !configs.contains(&row.config) {
            configs.push(row.config.clone());
        }
    }
    if configs.is_empty() {
        return Err(HarnessError::AllRowsFailed);
    }
    let mut per_config = Vec::new();
    for config in configs {
        let group: Vec<&ComparisonRow> = rows
            .iter()
            .filter(|r| r.state_ok && r.config == config)
            .collect();
        let n = group.len() as f64;
        let mean = group.iter().map(|r| r.lookup_reduction_pct).sum::<f64>() / n;
        let max = group
            .iter()
            .map(|r| r.lookup_reduction_pct)
            .fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = group
            .iter()
            .map(|r| {
                if r.cpi_unlabelled > 0.0 && r.cpi_labelled > 0.0 {
                    (r.cpi_labelled / r.cpi_unlabelled).ln()
                } else {
                    0.0
                }
            })
            .sum();
        let geomean = (log_sum / n).exp();
        per_config.push(ConfigSummary {
            config,
            rows: group.len(),
            mean_lookup_reduction_pct: mean,
            max_lookup_reduction_pct: max,
            geomean_cpi_ratio: geomean,
            geomean_cpi_change_pct: 100.0 * (geomean - 1.0),
        });
    }
    Ok(SummaryReport { per_config })
}

pub const ROWS_CSV_HEADER: &str = "scenario,config,state,committed_insts,labelled_loads,\
lookups_unlabelled,lookups_labelled,bypassed_lookups,lpki_unlabelled,lpki_labelled,\
lookup_reduction_pct,cycles_unlabelled,cycles_labelled,cpi_unlabelled,cpi_labelled,\
cpi_change_pct,violations_unlabelled,violations_labelled,collisions_unlabelled,\
collisions_labelled,false_deps_unlabelled,false_deps_labelled,forwardings_unlabelled,\
forwardings_labelled,cfg_width,cfg_iq,cfg_rob,cfg_lq,cfg_sq,cfg_ssit,cfg_lfst,\
cfg_clear_period,cfg_load_latency,cfg_alu_latency,cfg_forward_latency,\
cfg_squash_penalty,cfg_store_store_ordering";

/// Render rows as CSV (see `ROWS_CSV_HEADER` for the schema; it is stable).
pub fn rows_to_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{ROWS_CSV_HEADER}").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.4},{:.4},{:.3},{},{},{:.4},{:.4},{:.3},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.config,
            if r.state_ok { "ok" } else { "FAILED" },
            r.committed_insts,
            r.labelled_loads,
            r.lookups_unlabelled,
            r.lookups_labelled,
            r.bypassed_lookups,
            r.lpki_unlabelled,
            r.lpki_labelled,
            r.lookup_reduction_pct,
            r.cycles_unlabelled,
            r.cycles_labelled,
            r.cpi_unlabelled,
            r.cpi_labelled,
            r.cpi_change_pct,
            r.violations_unlabelled,
            r.violations_labelled,
            r.collisions_unlabelled,
            r.collisions_labelled,
            r.false_deps_unlabelled,
            r.false_deps_labelled,
            r.forwardings_unlabelled,
            r.forwardings_labelled,
            r.cfg.width,
            r.cfg.iq_entries,
            r.cfg.rob_entries,
            r.cfg.lq_entries,
            r.cfg.sq_entries,
            r.cfg.predictor.ssit_entries,
            r.cfg.predictor.lfst_entries,
            r.cfg.predictor.clear_period,
            r.cfg.load_latency,
            r.cfg.alu_latency,
            r.cfg.forward_latency,
            r.cfg.squash_penalty,
            r.cfg.store_store_ordering,
        )
        .unwrap();
    }
    out
}

pub const SUMMARY_CSV_HEADER: &str = "config,rows,mean_lookup_reduction_pct,\
max_lookup_reduction_pct,geomean_cpi_ratio,geomean_cpi_change_pct";

pub fn summary_to_csv(report: &SummaryReport) -> String {
    let mut out = String::new();
    writeln!(out, "{SUMMARY_CSV_HEADER}").unwrap();
    for c in &report.per_config {
        writeln!(
            out,
            "{},{},{:.3},{:.3},{:.6},{:.4}",
            c.config,
            c.rows,
            c.mean_lookup_reduction_pct,
            c.max_lookup_reduction_pct,
            c.geomean_cpi_ratio,
            c.geomean_cpi_change_pct,
        )
        .unwrap();
    }
    out
}
