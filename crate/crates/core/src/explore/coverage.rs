use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ExplorationBuffer;
use crate::error::{Error, Result};
use crate::sim::Model;

/// Cells per axis of the occupancy grid.
pub const GRID_CELLS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterPoint {
    pub vx: f64,
    pub rot: f64,
    pub y: f64,
    pub upright: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub visited: usize,
    pub occupied_cells: usize,
    pub upright_fraction: f64,
    pub contact_fraction: f64,
    /// Transitions ending with any body point on the ground.
    pub ground_fraction: f64,
    /// Bounds used for (vx, rot, y).
    pub bounds: [(f64, f64); 3],
    #[serde(skip)]
    pub points: Vec<ScatterPoint>,
}

impl CoverageReport {
    pub fn write_scatter(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "vx,rot,y,upright")?;
        for p in &self.points {
            writeln!(out, "{:?},{:?},{:?},{}", p.vx, p.rot, p.y, u8::from(p.upright))?;
        }
        Ok(())
    }
}

fn cell(v: f64, (lo, hi): (f64, f64)) -> usize {
    if hi <= lo {
        return 0;
    }
    let f = ((v - lo) / (hi - lo) * GRID_CELLS as f64).floor();
    f.clamp(0.0, (GRID_CELLS - 1) as f64) as usize
}

/// Occupancy of the visited successor states over (root x-velocity, root
/// rotation, root height), on a fixed grid bounded by the buffer's ranges.
///
/// Agents lacking an axis (no rotation or no height) collapse it to one
/// cell. `contact_fraction` counts transitions ending with the foot on the
/// ground.
pub fn coverage_report(model: &Model, buffer: &ExplorationBuffer) -> Result<CoverageReport> {
    if buffer.num_transitions() == 0 {
        return Err(Error::config("coverage needs a nonempty buffer"));
    }
    let layout = &model.spec().layout;
    let ranges = &buffer.meta.ranges;
    let axes = [
        layout.root_vel.first().copied(),
        layout.root_rot.or(layout.upright_angle),
        layout.root_height,
    ];
    let bounds = axes.map(|a| a.map_or((0.0, 0.0), |i| (ranges.min[i], ranges.max[i])));
    let value = |s: &[f64], k: usize| axes[k].map_or(0.0, |i| s[i]);

    let mut occupied = HashSet::new();
    let mut points = Vec::with_capacity(buffer.num_transitions());
    let mut upright = 0usize;
    let mut contact = 0usize;
    let mut ground = 0usize;
    for tr in buffer.transitions() {
        let s = &tr.next;
        let p = ScatterPoint {
            vx: value(s, 0),
            rot: value(s, 1),
            y: value(s, 2),
            upright: !model.is_fallen(s),
        };
        occupied.insert((cell(p.vx, bounds[0]), cell(p.rot, bounds[1]), cell(p.y, bounds[2])));
        upright += usize::from(p.upright);
        contact += usize::from(model.foot_in_contact(s));
        ground += usize::from(model.lowest_point(s).is_some_and(|h| h <= 0.0));
        points.push(p);
    }
    let n = points.len() as f64;
    Ok(CoverageReport {
        visited: points.len(),
        occupied_cells: occupied.len(),
        upright_fraction: upright as f64 / n,
        contact_fraction: contact as f64 / n,
        ground_fraction: ground as f64 / n,
        bounds,
        points,
    })
}
