//! Checkpoint files: a versioned JSON document holding the grid, the
//! physical parameters, the formulation, the step counter and time, the raw
//! state arrays and the diagnostic accumulators. Floats round-trip exactly,
//! so a restart continues bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Formulation, SolverError, SolverState, StepView};
use crate::diagnostics::{Accumulators, DiagnosticsRecord};
use crate::fields::{Grid, GridSpec, RealField};
use crate::model::PhysParams;

pub const CHECKPOINT_FORMAT: &str = "korteweg-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub grid: GridSpec,
    pub params: PhysParams,
    pub formulation: Formulation,
    pub step: usize,
    pub dt: f64,
    pub t: f64,
    /// Component arrays: `[ρ, u…]` or `[q, v…]`.
    pub components: Vec<Vec<f64>>,
    pub accumulators: Accumulators,
    pub initial: DiagnosticsRecord,
}

impl Checkpoint {
    pub(crate) fn capture(view: &StepView<'_>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            grid: view.state.grid().spec(),
            params: *view.params,
            formulation: view.state.formulation(),
            step: view.step,
            dt: view.cfg.dt,
            t: view.t,
            components: view
                .state
                .components()
                .into_iter()
                .map(RealField::into_values)
                .collect(),
            accumulators: *view.accumulators,
            initial: view.initial.clone(),
        }
    }

    pub fn restore(&self) -> Result<(SolverState, PhysParams), SolverError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(SolverError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let grid = Grid::from_spec(self.grid)?;
        if self.components.len() != grid.dim() + 1 {
            return Err(SolverError::Checkpoint(format!(
                "expected {} components, found {}",
                grid.dim() + 1,
                self.components.len()
            )));
        }
        let fields = self
            .components
            .iter()
            .map(|c| RealField::new(&grid, c.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        self.params.validate()?;
        Ok((SolverState::from_components(self.formulation, fields), self.params))
    }

    pub fn save(&self, path: &Path) -> Result<(), SolverError> {
        let file = File::create(path).map_err(|e| SolverError::Checkpoint(e.to_string()))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self).map_err(|e| SolverError::Checkpoint(e.to_string()))?;
        w.flush().map_err(|e| SolverError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SolverError> {
        let file = File::open(path).map_err(|e| SolverError::Checkpoint(e.to_string()))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| SolverError::Checkpoint(e.to_string()))
    }
}
