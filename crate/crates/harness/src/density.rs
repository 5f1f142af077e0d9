//! Policy density exports for visualization: a grid of the action density at
//! one state plus staged sample clouds showing each squash stage.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use flowsafe_core::agents::SquashKind;
use flowsafe_core::env::Obs;

use crate::checkpoint::Checkpoint;
use crate::HarnessError;

#[derive(Clone, Debug, Serialize)]
pub struct StageCloud {
    pub name: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityExport {
    pub state: [f64; 5],
    pub variant: String,
    pub grid: usize,
    /// Grid window: the final region's bounding box padded by 5% per side.
    pub low: [f64; 2],
    pub high: [f64; 2],
    /// Row-major `grid x grid` cell-center densities; rows scan y upward.
    pub density: Vec<Vec<f64>>,
    /// Midpoint-rule mass over the window; close to 1 when the grid resolves
    /// the support.
    pub integral: f64,
    /// Per-stage sample clouds: the base Gaussian draw, then the output of
    /// each squash applied in order.
    pub stages: Vec<StageCloud>,
}

pub fn export_density(
    checkpoint: &Path,
    state: Obs<f64>,
    grid: usize,
    samples: usize,
    seed: u64,
) -> Result<DensityExport, HarnessError> {
    if grid < 2 {
        return Err(HarnessError::InvalidArg("grid must be at least 2".into()));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let layout = ck.config.layout.to_core();
    let rule = ck.config.battery.to_core();
    if !layout.position_ok(&[state[0], state[1]]) {
        return Err(HarnessError::InvalidArg(
            "state position is inside the obstacle or outside the arena".into(),
        ));
    }
    if !(0.0..=rule.capacity).contains(&state[2]) {
        return Err(HarnessError::InvalidArg(format!(
            "battery {} outside [0, {}]",
            state[2], rule.capacity
        )));
    }

    let policy = ck.agent.policy();
    let chain = policy.chain(&state);
    let (blo, bhi) = chain
        .final_region()
        .expect("policy chains are never empty")
        .bounding_box();
    let pad = [(bhi[0] - blo[0]) * 0.05, (bhi[1] - blo[1]) * 0.05];
    let low = [blo[0] - pad[0], blo[1] - pad[1]];
    let high = [bhi[0] + pad[0], bhi[1] + pad[1]];

    let dx = (high[0] - low[0]) / grid as f64;
    let dy = (high[1] - low[1]) / grid as f64;
    let mut density = Vec::with_capacity(grid);
    let mut mass = 0.0;
    for iy in 0..grid {
        let y = low[1] + (iy as f64 + 0.5) * dy;
        let mut row = Vec::with_capacity(grid);
        for ix in 0..grid {
            let x = low[0] + (ix as f64 + 0.5) * dx;
            let p = policy.density(&state, &[x, y]);
            mass += p;
            row.push(p);
        }
        density.push(row);
    }

    let stage_names: Vec<&str> = match policy.kind() {
        SquashKind::UnitBox => vec!["base", "step_box"],
        SquashKind::Constrained => vec!["base", "battery_ball", "obstacle_box"],
    };
    let mut stages: Vec<StageCloud> = stage_names
        .iter()
        .map(|n| StageCloud {
            name: (*n).to_string(),
            points: Vec::with_capacity(samples),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let (action, _) = policy.sample_action(&state, &mut rng);
        // Recover the staged path through the public face: pull the sample
        // back to the base point, then replay the squashes with a trace.
        let u = chain
            .inverse(&action)
            .map_err(|e| HarnessError::Checkpoint(format!("sampled action left the support: {e}")))?;
        let trace = chain
            .forward_trace(&u)
            .expect("preimage of a sample is finite");
        for (stage, point) in stages.iter_mut().zip(&trace.points) {
            stage.points.push([point[0], point[1]]);
        }
    }

    Ok(DensityExport {
        state,
        variant: format!("{:?}", ck.agent.variant()),
        grid,
        low,
        high,
        density,
        integral: mass * dx * dy,
        stages,
    })
}

pub fn write_density(export: &DensityExport, out: &Path) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io { path: out.to_path_buf(), source };
    let file = File::create(out).map_err(io)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, export)
        .map_err(|e| HarnessError::Metrics(format!("{}: write failed: {e}", out.display())))?;
    w.flush().map_err(io)
}
