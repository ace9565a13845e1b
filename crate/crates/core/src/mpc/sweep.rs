use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_closed_loop, ControllerConfig, MpcError, RunOptions};
use crate::plant::PlantDynamics;
use crate::predictor::LinearPredictor;
use crate::stl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// Uniform initial temperatures, °C (rows).
    pub initial_temps: Vec<f64>,
    /// Start times of the supply window, s (columns).
    pub start_times: Vec<f64>,
    /// Index of the spec whose outer window start is swept.
    pub spec_index: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            initial_temps: (1..=7).map(|i| f64::from(i) * 5.0).collect(),
            start_times: (4..=9).map(|i| f64::from(i) * 60.0).collect(),
            spec_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityTable {
    pub initial_temps: Vec<f64>,
    pub start_times: Vec<f64>,
    pub cells: Vec<Vec<u8>>,
    /// Reason for each zero cell.
    pub notes: Vec<Vec<Option<String>>>,
}

impl FeasibilityTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("initial\\start");
        for s in &self.start_times {
            out.push_str(&format!(",{s}"));
        }
        out.push('\n');
        for (temp, row) in self.initial_temps.iter().zip(&self.cells) {
            out.push_str(&format!("{temp}"));
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, MpcError> {
        let bad = |m: String| MpcError::Trace(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty table".into()))?;
        let start_times = header
            .split(',')
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad start time `{s}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let mut initial_temps = Vec::new();
        let mut cells = Vec::new();
        for line in lines {
            let mut it = line.split(',');
            let t = it.next().unwrap_or("");
            initial_temps.push(t.parse::<f64>().map_err(|_| bad(format!("bad initial `{t}`")))?);
            let row = it
                .map(|c| match c {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(bad(format!("cell `{other}` is not 0/1"))),
                })
                .collect::<Result<Vec<u8>, _>>()?;
            if row.len() != start_times.len() {
                return Err(bad(format!("row `{t}` has {} cells", row.len())));
            }
            cells.push(row);
        }
        let notes = cells.iter().map(|r| vec![None; r.len()]).collect();
        Ok(Self {
            initial_temps,
            start_times,
            cells,
            notes,
        })
    }

    /// Cells where `self` and `other` agree.
    pub fn agreement(&self, other: &FeasibilityTable) -> usize {
        self.cells
            .iter()
            .flatten()
            .zip(other.cells.iter().flatten())
            .filter(|(a, b)| a == b)
            .count()
    }
}

/// Feasibility never decreases towards warmer starts or later windows.
pub fn is_monotone(table: &FeasibilityTable) -> bool {
    let c = &table.cells;
    for i in 0..c.len() {
        for j in 0..c[i].len() {
            if i + 1 < c.len() && c[i + 1][j] < c[i][j] {
                return false;
            }
            if j + 1 < c[i].len() && c[i][j + 1] < c[i][j] {
                return false;
            }
        }
    }
    true
}

/// Runs one closed loop per grid cell in parallel. A cell is 1 when every
/// step produced an optimal plan and the realized trace satisfies every spec.
pub fn feasibility_sweep<P: PlantDynamics + ?Sized>(
    plant: &P,
    cfg: &ControllerConfig,
    predictor: &LinearPredictor,
    grid: &SweepGrid,
) -> Result<FeasibilityTable, MpcError> {
    cfg.validate()?;
    let base = cfg
        .specs
        .get(grid.spec_index)
        .ok_or_else(|| MpcError::Config(format!("no spec at index {}", grid.spec_index)))?;
    let base = stl::parse(base)?;
    let cells: Vec<(usize, usize)> = (0..grid.initial_temps.len())
        .flat_map(|i| (0..grid.start_times.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<(u8, Option<String>)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut cell_cfg = cfg.clone();
            cell_cfg.specs[grid.spec_index] = base.with_outer_start(grid.start_times[j]).to_string();
            let x0 = [grid.initial_temps[i]; 6];
            let opts = RunOptions {
                stop_on_infeasible: true,
            };
            match run_closed_loop(plant, &cell_cfg, predictor, &x0, opts) {
                Err(e) => (0, Some(e.to_string())),
                Ok(trace) => {
                    if let Some(reason) = &trace.abort {
                        return (0, Some(reason.clone()));
                    }
                    match trace.robustness() {
                        Ok(r) if r.iter().all(|v| *v >= -1e-6) => (1, None),
                        Ok(r) => (0, Some(format!("realized trace violates a spec: {r:?}"))),
                        Err(e) => (0, Some(e.to_string())),
                    }
                }
            }
        })
        .collect();
    let cols = grid.start_times.len();
    let mut table = FeasibilityTable {
        initial_temps: grid.initial_temps.clone(),
        start_times: grid.start_times.clone(),
        cells: vec![vec![0; cols]; grid.initial_temps.len()],
        notes: vec![vec![None; cols]; grid.initial_temps.len()],
    };
    for (&(i, j), (c, note)) in cells.iter().zip(results) {
        table.cells[i][j] = c;
        table.notes[i][j] = note;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_csv_round_trip_and_monotonicity() {
        let t = FeasibilityTable {
            initial_temps: vec![5.0, 10.0],
            start_times: vec![240.0, 300.0, 360.0],
            cells: vec![vec![0, 0, 1], vec![0, 1, 1]],
            notes: vec![vec![None; 3]; 2],
        };
        let back = FeasibilityTable::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert!(is_monotone(&t));
        let mut bad = t.clone();
        bad.cells[1][2] = 0;
        assert!(!is_monotone(&bad));
        assert_eq!(t.agreement(&bad), 5);
    }

    #[test]
    fn default_grid_shape() {
        let g = SweepGrid::default();
        assert_eq!(g.initial_temps, vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0]);
        assert_eq!(g.start_times, vec![240.0, 300.0, 360.0, 420.0, 480.0, 540.0]);
    }
}
