//! JSON run reports.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use sddmfac::chain::LevelSummary;
use sddmfac::factor::RefineInfo;
use sddmfac::{FactorChain, FactorOperator};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    CheckFailed,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::CheckFailed => 1,
            Status::Error => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainStats {
    pub p: f64,
    pub d: usize,
    pub d_plan: usize,
    pub c: f64,
    pub kappa_used: f64,
    pub eps_total: f64,
    pub eps_sum: f64,
    pub error_bound: f64,
    pub nnz_per_level: Vec<usize>,
    pub eps_schedule: Vec<f64>,
    /// `1 - ρ(X_i)` per level.
    pub lambdas: Vec<f64>,
    pub degrees: Vec<usize>,
    pub levels: Vec<LevelSummary>,
}

impl ChainStats {
    pub fn of(c: &FactorChain) -> Self {
        ChainStats {
            p: c.p,
            d: c.d(),
            d_plan: c.d_plan,
            c: c.c,
            kappa_used: c.kappa_used,
            eps_total: c.eps_total,
            eps_sum: c.eps_sum(),
            error_bound: c.error_bound(),
            nnz_per_level: c.nnz_per_level(),
            eps_schedule: c.eps_schedule.clone(),
            lambdas: c.lambdas.clone(),
            degrees: c.degrees(),
            levels: c.summary(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementStats {
    pub degree: usize,
    pub eps: f64,
    #[serde(flatten)]
    pub info: RefineInfo,
}

impl RefinementStats {
    pub fn of(op: &FactorOperator) -> Option<Self> {
        let r = match op {
            FactorOperator::Chain(_) => return None,
            FactorOperator::Refined(r) => r,
            FactorOperator::EdgeBased(e) => &e.inverse,
        };
        Some(RefinementStats {
            degree: r.poly.t,
            eps: 2.0 * r.poly.eps,
            info: r.info,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub details: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: String,
    pub status: Status,
    pub exit_code: i32,
    pub config: Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub timings_ms: BTreeMap<String, f64>,
    pub kappa_used: Option<f64>,
    pub chain: Option<ChainStats>,
    pub refinement: Option<RefinementStats>,
    pub gaussians_consumed: Option<u64>,
    pub outputs: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub error: Option<String>,
}

impl RunReport {
    pub fn new(command: &str, config: Value, seed: Option<u64>, threads: usize) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            status: Status::Ok,
            exit_code: 0,
            config,
            seed,
            threads,
            timings_ms: BTreeMap::new(),
            kappa_used: None,
            chain: None,
            refinement: None,
            gaussians_consumed: None,
            outputs: BTreeMap::new(),
            checks: Vec::new(),
            error: None,
        }
    }

    /// Runs `f` and records its wall time under `name`.
    pub fn timed<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings_ms
            .insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }

    pub fn output(&mut self, key: &str, value: impl Serialize) {
        self.outputs.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    pub fn check(&mut self, name: &str, passed: bool, details: impl Serialize) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            details: serde_json::to_value(details).unwrap_or(Value::Null),
        });
    }

    pub fn describe_operator(&mut self, op: &FactorOperator) {
        let chain = op.chain();
        self.kappa_used = Some(chain.kappa_used);
        self.chain = Some(ChainStats::of(chain));
        self.refinement = RefinementStats::of(op);
    }

    /// Sets the status from the checks, or to `Error` with a message.
    pub fn finish(&mut self, error: Option<String>) {
        self.status = match (&error, self.checks.iter().all(|c| c.passed)) {
            (Some(_), _) => Status::Error,
            (None, true) => Status::Ok,
            (None, false) => Status::CheckFailed,
        };
        self.exit_code = self.status.exit_code();
        self.error = error;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn write(&self, path: Option<&Path>) -> std::io::Result<()> {
        match path {
            Some(p) => std::fs::write(p, self.to_json() + "\n"),
            None => {
                println!("{}", self.to_json());
                Ok(())
            }
        }
    }
}
