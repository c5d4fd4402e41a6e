//! Parameter sweeps over synthetic instances, scored against ground truth.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evalkit::{baseline_dt, baseline_nt, rw_select, score, EvalResult, RWR_RESTART};
use crate::hetgraph::{EntityId, HeteroGraph};
use crate::synthbench::{generate, SynthInstance, SynthSpec};
use crate::transfer::{acret_transfer, dependency_stage, entity_stage, MuMode, TransferConfig};

pub const CSV_HEADER_COMMENT: &str = "# graft-sweep v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Source size; the true target has half as many entities.
    Size,
    DynFactor,
    Maturity,
    /// Fixed `μ` values on a single instance per seed.
    Mu,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "size" => Ok(Axis::Size),
            "dynfactor" => Ok(Axis::DynFactor),
            "maturity" => Ok(Axis::Maturity),
            "mu" => Ok(Axis::Mu),
            _ => Err(Error::InvalidArgument(format!(
                "unknown sweep axis {s:?}; expected size, dynfactor, maturity or mu"
            ))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Size => "size",
            Axis::DynFactor => "dynfactor",
            Axis::Maturity => "maturity",
            Axis::Mu => "mu",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Nt,
    Dt,
    RwDcm,
    Acret,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Nt, Method::Dt, Method::RwDcm, Method::Acret];
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nt" => Ok(Method::Nt),
            "dt" => Ok(Method::Dt),
            "rw-dcm" => Ok(Method::RwDcm),
            "acret" => Ok(Method::Acret),
            _ => Err(Error::InvalidArgument(format!(
                "unknown method {s:?}; expected nt, dt, rw-dcm or acret"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Nt => "nt",
            Method::Dt => "dt",
            Method::RwDcm => "rw-dcm",
            Method::Acret => "acret",
        })
    }
}

/// Runs one method on a generated instance.
pub fn run_method(method: Method, inst: &SynthInstance, config: &TransferConfig) -> Result<HeteroGraph> {
    match method {
        Method::Nt => Ok(baseline_nt(&inst.partial)),
        Method::Dt => baseline_dt(&inst.source, &inst.partial),
        Method::RwDcm => crate::evalkit::baseline_rw_dcm(&inst.source, &inst.partial, config),
        Method::Acret => acret_transfer(&inst.source, &inst.partial, config).map(|(g, _)| g),
    }
}

#[derive(Clone, Debug)]
pub struct SweepPlan {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Settings for the variables that are not swept.
    pub base: SynthSpec,
    pub config: TransferConfig,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("method list is empty".into()));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidArgument("sweep range is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("seed list is empty".into()));
        }
        self.config.validate()?;
        for &v in &self.values {
            if self.axis == Axis::Mu {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!("mu must lie in [0,1], got {v}")));
                }
            } else {
                self.spec_at(v, 0)?.validate()?;
            }
        }
        Ok(())
    }

    fn spec_at(&self, value: f64, seed: u64) -> Result<SynthSpec> {
        let mut spec = SynthSpec { seed, ..self.base.clone() };
        match self.axis {
            Axis::Size => {
                if value.fract() != 0.0 || value < 2.0 {
                    return Err(Error::InvalidArgument(format!("size must be an integer >= 2, got {value}")));
                }
                spec.n_source = value as usize;
                spec.n_target = spec.n_source / 2;
            }
            Axis::DynFactor => spec.dynamic_factor = value,
            Axis::Maturity => spec.maturity = value,
            Axis::Mu => {}
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_var: String,
    pub value: f64,
    pub method: String,
    pub seed: u64,
    pub entity_f1: Option<f64>,
    pub edge_f1: Option<f64>,
    pub combined_f1: Option<f64>,
    /// `ok`, or the error message.
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

struct Cell {
    value_idx: usize,
    method: Method,
    seed: u64,
    outcome: std::result::Result<EvalResult, String>,
}

fn cell(value_idx: usize, method: Method, seed: u64, outcome: std::result::Result<EvalResult, String>) -> Cell {
    if let Err(e) = &outcome {
        warn!("value #{value_idx} {method} seed {seed}: {e}");
    }
    Cell { value_idx, method, seed, outcome }
}

fn scored(inst: &SynthInstance, g: Result<HeteroGraph>) -> std::result::Result<EvalResult, String> {
    g.map(|g| score(&g, &inst.truth)).map_err(|e| e.to_string())
}

fn grid_cells(plan: &SweepPlan, value_idx: usize, seed: u64) -> Vec<Cell> {
    let config = TransferConfig { seed, ..plan.config.clone() };
    let inst = match plan.spec_at(plan.values[value_idx], seed).and_then(|s| generate(&s)) {
        Ok(inst) => inst,
        Err(e) => {
            return plan
                .methods
                .iter()
                .map(|&m| cell(value_idx, m, seed, Err(format!("generation: {e}"))))
                .collect()
        }
    };
    plan.methods
        .iter()
        .map(|&m| cell(value_idx, m, seed, scored(&inst, run_method(m, &inst, &config))))
        .collect()
}

/// One instance per seed; the entity selection of each method is computed
/// once and reused across the `μ` grid.
fn mu_cells(plan: &SweepPlan, seed: u64) -> Vec<Cell> {
    let config = TransferConfig { seed, ..plan.config.clone() };
    let inst = match generate(&SynthSpec { seed, ..plan.base.clone() }) {
        Ok(inst) => inst,
        Err(e) => {
            let msg = format!("generation: {e}");
            return (0..plan.values.len())
                .flat_map(|v| plan.methods.iter().map(move |&m| (v, m)))
                .map(|(v, m)| cell(v, m, seed, Err(msg.clone())))
                .collect();
        }
    };
    let mut out = Vec::new();
    for &method in &plan.methods {
        let selection: Option<Result<BTreeMap<EntityId, f64>>> = match method {
            Method::Nt | Method::Dt => None,
            Method::RwDcm => Some(rw_select(&inst.source, &inst.partial, RWR_RESTART, config.z_entity)),
            Method::Acret => Some(entity_stage(&inst.source, &inst.partial, &config).map(|s| s.selected)),
        };
        let fixed = selection.is_none().then(|| scored(&inst, run_method(method, &inst, &config)));
        for (v, &mu) in plan.values.iter().enumerate() {
            let outcome = match (&selection, &fixed) {
                (Some(Ok(sel)), _) => scored(
                    &inst,
                    dependency_stage(&inst.source, &inst.partial, sel, MuMode::Fixed(mu), &config).map(|d| d.graph),
                ),
                (Some(Err(e)), _) => Err(e.to_string()),
                (None, Some(Ok(r))) => Ok(r.clone()),
                (None, Some(Err(e))) => Err(e.clone()),
                (None, None) => unreachable!(),
            };
            out.push(cell(v, method, seed, outcome));
        }
    }
    out
}

/// Runs every grid point × method × seed. Failures are recorded in the
/// row status rather than aborting the sweep.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut cells: Vec<Cell> = pool.install(|| match plan.axis {
        Axis::Mu => plan.seeds.par_iter().flat_map_iter(|&s| mu_cells(plan, s)).collect(),
        _ => (0..plan.values.len())
            .flat_map(|v| plan.seeds.iter().map(move |&s| (v, s)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .flat_map_iter(|(v, s)| grid_cells(plan, v, s))
            .collect(),
    });
    let method_pos = |m: Method| plan.methods.iter().position(|&x| x == m).unwrap_or(usize::MAX);
    cells.sort_by_key(|c| (c.value_idx, method_pos(c.method), c.seed));
    let rows: Vec<SweepRow> = cells
        .into_iter()
        .map(|c| {
            let (e, d, comb, status) = match c.outcome {
                Ok(r) => (Some(r.entity_f1), Some(r.edge_f1), Some(r.combined_f1), "ok".to_string()),
                Err(e) => (None, None, None, format!("error: {e}")),
            };
            SweepRow {
                sweep_var: plan.axis.to_string(),
                value: plan.values[c.value_idx],
                method: c.method.to_string(),
                seed: c.seed,
                entity_f1: e,
                edge_f1: d,
                combined_f1: comb,
                status,
            }
        })
        .collect();
    info!(
        "{} sweep: {} rows, {} failed",
        plan.axis,
        rows.len(),
        rows.iter().filter(|r| !r.is_ok()).count()
    );
    Ok(rows)
}

/// Writes the versioned header comment followed by the rows.
pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER_COMMENT}").map_err(|e| Error::io("sweep csv", e))?;
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "sweep_var", "value", "method", "seed", "entity_f1", "edge_f1", "combined_f1", "status",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("sweep csv", e))?;
    Ok(())
}

/// Mean combined F1 per (value, method) over successful rows.
pub fn mean_combined(rows: &[SweepRow]) -> Vec<(f64, String, f64)> {
    let mut acc: Vec<(f64, String, f64, usize)> = Vec::new();
    for r in rows {
        let Some(c) = r.combined_f1 else { continue };
        match acc.iter_mut().find(|(v, m, _, _)| *v == r.value && *m == r.method) {
            Some(slot) => {
                slot.2 += c;
                slot.3 += 1;
            }
            None => acc.push((r.value, r.method.clone(), c, 1)),
        }
    }
    acc.into_iter().map(|(v, m, s, k)| (v, m, s / k as f64)).collect()
}
