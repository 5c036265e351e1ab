use std::fmt::Write as _;
use std::path::Path;

use super::TimeGrid;
use crate::error::{Error, Result};

/// `a_k(i, x_j)` on a journey × time step × location grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AttendanceTable {
    journey_labels: Vec<String>,
    grid: TimeGrid,
    locations: Vec<f64>,
    // Row-major over (k, i, j).
    values: Vec<f64>,
}

impl AttendanceTable {
    pub fn new(
        journey_labels: Vec<String>,
        grid: TimeGrid,
        locations: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        grid.validate()?;
        let expected = journey_labels.len() * grid.n_steps * locations.len();
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{}x{} table",
                values.len(),
                journey_labels.len(),
                grid.n_steps,
                locations.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::Domain(format!(
                "attendance value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            journey_labels,
            grid,
            locations,
            values,
        })
    }

    pub fn journey_labels(&self) -> &[String] {
        &self.journey_labels
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_journeys(&self) -> usize {
        self.journey_labels.len()
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[(k * self.grid.n_steps + i) * self.locations.len() + j]
    }

    /// `(a_1, ..., a_K)` at one cell.
    pub fn cell(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.n_journeys()).map(|k| self.get(k, i, j)).collect()
    }

    /// `Σ_{i,j} a_k(i, x_j)` for each journey.
    pub fn journey_totals(&self) -> Vec<f64> {
        let block = self.grid.n_steps * self.locations.len();
        self.values
            .chunks(block.max(1))
            .map(|c| c.iter().sum())
            .take(self.n_journeys())
            .collect()
    }

    /// Table restricted to the first `j` locations.
    pub fn truncated(&self, j: usize) -> Self {
        let j = j.min(self.n_locations());
        let mut values = Vec::with_capacity(self.n_journeys() * self.n_steps() * j);
        for k in 0..self.n_journeys() {
            for i in 0..self.n_steps() {
                for jj in 0..j {
                    values.push(self.get(k, i, jj));
                }
            }
        }
        Self {
            journey_labels: self.journey_labels.clone(),
            grid: self.grid,
            locations: self.locations[..j].to_vec(),
            values,
        }
    }

    /// CSV with header `journey,time_step,location,value`, rows ordered by
    /// journey, then time step, then location.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("journey,time_step,location,value\n");
        for (k, label) in self.journey_labels.iter().enumerate() {
            for i in 0..self.grid.n_steps {
                for (j, x) in self.locations.iter().enumerate() {
                    let _ = writeln!(s, "{label},{i},{x:.16e},{:.16e}", self.get(k, i, j));
                }
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the CSV layout of [`to_csv`](Self::to_csv). The grid is not
    /// stored in the file and must be supplied.
    pub fn from_csv(text: &str, grid: TimeGrid, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "journey,time_step,location,value" => {}
            _ => {
                return Err(err(
                    1,
                    "expected header journey,time_step,location,value".into(),
                ))
            }
        }
        let mut labels: Vec<String> = Vec::new();
        let mut locations: Vec<f64> = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in lines {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(err(
                    line_no,
                    format!("expected 4 fields, found {}", f.len()),
                ));
            }
            let i: usize = f[1]
                .trim()
                .parse()
                .map_err(|e| err(line_no, format!("time_step: {e}")))?;
            let x: f64 = f[2]
                .trim()
                .parse()
                .map_err(|e| err(line_no, format!("location: {e}")))?;
            let v: f64 = f[3]
                .trim()
                .parse()
                .map_err(|e| err(line_no, format!("value: {e}")))?;
            if i >= grid.n_steps {
                return Err(err(
                    line_no,
                    format!("time_step {i} outside the {}-step grid", grid.n_steps),
                ));
            }
            let k = match labels.iter().position(|l| l == f[0]) {
                Some(k) => k,
                None => {
                    labels.push(f[0].to_string());
                    labels.len() - 1
                }
            };
            let j = match locations.iter().position(|l| *l == x) {
                Some(j) => j,
                None => {
                    locations.push(x);
                    locations.len() - 1
                }
            };
            rows.push((line_no, k, i, j, v));
        }
        let (k_n, i_n, j_n) = (labels.len(), grid.n_steps, locations.len());
        let mut values = vec![f64::NAN; k_n * i_n * j_n];
        for (line_no, k, i, j, v) in rows {
            let slot = &mut values[(k * i_n + i) * j_n + j];
            if !slot.is_nan() {
                return Err(err(line_no, "duplicate cell".into()));
            }
            *slot = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(err(0, "table is missing cells".into()));
        }
        Self::new(labels, grid, locations, values)
    }

    pub fn read_csv(path: &Path, grid: TimeGrid) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text, grid, path)
    }
}
