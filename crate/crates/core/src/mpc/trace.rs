use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MpcError;
use crate::plant::State;
use crate::stl::{self, robustness, SampledSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Optimal,
    Infeasible,
    NodeLimit,
}

impl fmt::Display for StepStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepStatus::Optimal => "optimal",
            StepStatus::Infeasible => "infeasible",
            StepStatus::NodeLimit => "node_limit",
        })
    }
}

impl FromStr for StepStatus {
    type Err = MpcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(StepStatus::Optimal),
            "infeasible" => Ok(StepStatus::Infeasible),
            "node_limit" => Ok(StepStatus::NodeLimit),
            other => Err(MpcError::Trace(format!("unknown status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub t: f64,
    pub x: State,
    pub u: f64,
    pub w: f64,
    pub y: f64,
    pub status: StepStatus,
    pub objective: f64,
    pub binaries: usize,
    pub nodes: usize,
    /// Wall time of the MIQP solve; not persisted.
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTrace {
    pub h: f64,
    pub specs: Vec<String>,
    pub rows: Vec<TraceRow>,
    pub abort: Option<String>,
}

/// Running and off bands of the heat pump input.
const OFF_BAND: (f64, f64) = (0.001, 0.01);
const RUN_BAND: (f64, f64) = (21.2, 26.5);

/// Whether `u` lies in the off band or the running band, within `tol`.
pub fn input_admissible(u: f64, tol: f64) -> bool {
    (u > OFF_BAND.0 - tol && u < OFF_BAND.1 + tol) || (u >= RUN_BAND.0 - tol && u <= RUN_BAND.1 + tol)
}

const HEADER: &str = "t,x1,x2,x3,x4,x5,x6,u,w,y,status,objective,binaries,bb_nodes";

impl ClosedLoopTrace {
    pub fn new(h: f64, specs: Vec<String>) -> Self {
        Self {
            h,
            specs,
            rows: Vec::new(),
            abort: None,
        }
    }

    pub fn outputs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn inputs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.u).collect()
    }

    pub fn all_optimal(&self) -> bool {
        self.abort.is_none() && self.rows.iter().all(|r| r.status == StepStatus::Optimal)
    }

    pub fn signal(&self) -> SampledSignal {
        SampledSignal::new(self.h)
            .expect("trace period is positive")
            .with_channel("y", self.outputs())
            .and_then(|s| s.with_channel("u", self.inputs()))
            .expect("channels have equal length")
    }

    /// Robustness of each spec on the realized trace, with `end` at the
    /// last recorded sample.
    pub fn robustness(&self) -> Result<Vec<f64>, MpcError> {
        self.robustness_until(self.rows.len().saturating_sub(1))
    }

    /// Robustness of each spec over samples `0..=k`, with `end` at `k`.
    pub fn robustness_until(&self, k: usize) -> Result<Vec<f64>, MpcError> {
        let n = (k + 1).min(self.rows.len());
        let prefix = SampledSignal::new(self.h)?
            .with_channel("y", self.outputs()[..n].to_vec())?
            .with_channel("u", self.inputs()[..n].to_vec())?;
        let end = (n.saturating_sub(1)) as f64 * self.h;
        self.specs
            .iter()
            .map(|s| {
                let f = stl::parse(s)?.resolve_end(end);
                Ok(robustness(&f, &prefix, 0)?)
            })
            .collect()
    }

    /// CSV with one row per step plus the running robustness of each spec.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HEADER);
        for j in 0..self.specs.len() {
            out.push_str(&format!(",rho_{}", j + 1));
        }
        out.push('\n');
        for (k, r) in self.rows.iter().enumerate() {
            let rho = self.robustness_until(k).unwrap_or_else(|_| vec![f64::NAN; self.specs.len()]);
            out.push_str(&format!("{}", r.t));
            for v in &r.x {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(
                ",{},{},{},{},{},{},{}",
                r.u, r.w, r.y, r.status, r.objective, r.binaries, r.nodes
            ));
            for v in rho {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Reads a trace written by [`Self::to_csv`]; spec texts are not stored
    /// in the file and must be supplied.
    pub fn from_csv(text: &str, h: f64, specs: Vec<String>) -> Result<Self, MpcError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| MpcError::Trace("empty trace file".into()))?;
        if !header.starts_with(HEADER) {
            return Err(MpcError::Trace(format!("unexpected header `{header}`")));
        }
        let mut trace = Self::new(h, specs);
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() < 14 {
                return Err(MpcError::Trace(format!("row {k} has {} fields", cells.len())));
            }
            let num = |i: usize| -> Result<f64, MpcError> {
                cells[i]
                    .parse()
                    .map_err(|_| MpcError::Trace(format!("row {k}, field {i}: `{}`", cells[i])))
            };
            let int = |i: usize| -> Result<usize, MpcError> {
                cells[i]
                    .parse()
                    .map_err(|_| MpcError::Trace(format!("row {k}, field {i}: `{}`", cells[i])))
            };
            let mut x = [0.0; 6];
            for (i, v) in x.iter_mut().enumerate() {
                *v = num(1 + i)?;
            }
            trace.rows.push(TraceRow {
                k,
                t: num(0)?,
                x,
                u: num(7)?,
                w: num(8)?,
                y: num(9)?,
                status: cells[10].parse()?,
                objective: num(11)?,
                binaries: int(12)?,
                nodes: int(13)?,
                solve_seconds: 0.0,
            });
        }
        Ok(trace)
    }

    /// Summary over the trace; output extremes are taken from `window_start`
    /// seconds on.
    pub fn summary(&self, window_start: f64) -> Result<RunSummary, MpcError> {
        let after: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.t >= window_start - 1e-9)
            .map(|r| r.y)
            .collect();
        let robustness = self.robustness()?;
        Ok(RunSummary {
            steps: self.rows.len(),
            statuses: self.rows.iter().map(|r| r.status).collect(),
            infeasible_steps: self
                .rows
                .iter()
                .filter(|r| r.status != StepStatus::Optimal)
                .map(|r| r.k)
                .collect(),
            window_start,
            min_y_after: after.iter().cloned().fold(f64::INFINITY, f64::min),
            max_y_after: after.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            satisfied: robustness.iter().all(|r| *r >= -1e-6),
            robustness,
            inputs_admissible: self.rows.iter().all(|r| input_admissible(r.u, 1e-7)),
            total_nodes: self.rows.iter().map(|r| r.nodes).sum(),
            abort: self.abort.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub statuses: Vec<StepStatus>,
    pub infeasible_steps: Vec<usize>,
    pub window_start: f64,
    pub min_y_after: f64,
    pub max_y_after: f64,
    pub robustness: Vec<f64>,
    pub satisfied: bool,
    pub inputs_admissible: bool,
    pub total_nodes: usize,
    pub abort: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, y: f64, u: f64) -> TraceRow {
        TraceRow {
            k,
            t: k as f64 * 60.0,
            x: [1.0, 2.0, 3.0, 4.0, y, 6.0],
            u,
            w: 10.0,
            y,
            status: StepStatus::Optimal,
            objective: 1.5,
            binaries: 4,
            nodes: 3,
            solve_seconds: 0.0,
        }
    }

    #[test]
    fn csv_round_trip() {
        let specs = vec![stl::SUPPLY_SPEC.to_string(), stl::INPUT_SPEC.to_string()];
        let mut t = ClosedLoopTrace::new(60.0, specs.clone());
        t.rows = (0..9).map(|k| row(k, 38.0 + k as f64 * 0.1, 22.0)).collect();
        t.rows[3].status = StepStatus::Infeasible;
        t.rows[3].objective = f64::INFINITY;
        let csv = t.to_csv();
        let back = ClosedLoopTrace::from_csv(&csv, 60.0, specs).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv(), csv);
    }

    #[test]
    fn admissible_bands() {
        assert!(input_admissible(0.005, 0.0));
        assert!(input_admissible(21.2, 0.0));
        assert!(!input_admissible(0.0, 1e-7));
        assert!(!input_admissible(10.0, 1e-7));
        assert!(!input_admissible(26.6, 1e-7));
    }

    #[test]
    fn running_robustness_before_the_supply_window_is_vacuous() {
        let mut t = ClosedLoopTrace::new(60.0, vec![stl::SUPPLY_SPEC.to_string()]);
        t.rows = (0..4).map(|k| row(k, 15.0, 0.005)).collect();
        assert_eq!(t.robustness().unwrap(), vec![f64::INFINITY]);
    }
}
