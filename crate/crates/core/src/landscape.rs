//! Random orthogonal 2D slices through an objective, for plotting
//! optimization landscapes around an optimum.

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::error::{Error, Result};
use crate::nn::GaussianPolicy;
use crate::optimize::{evaluate_trajectory, sampled_episode_return, DecisionVector, Decoder};
use crate::rng::{self, Rng};
use crate::sim::{Objective, StateRanges};

const DIRECTION_STREAM: u64 = 0x51;
const CELL_STREAM: u64 = 0x52;

/// Smallest angle accepted between the two raw draws.
const MIN_ANGLE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceConfig {
    /// Cells per axis; odd so the center lies on a cell.
    pub resolution: usize,
    /// Half-width of each axis in direction units.
    pub extent: f64,
    /// Episodes averaged per cell for stochastic policy slices.
    pub episodes_per_point: usize,
    /// Value recorded for cells whose evaluation diverged.
    pub floor: f64,
    pub seed: u64,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig { resolution: 41, extent: 1.0, episodes_per_point: 10, floor: -1e4, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub center: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub config: SliceConfig,
}

impl SliceSpec {
    /// Axis coordinates: `resolution` evenly spaced values in `[-extent, extent]`.
    pub fn axis(&self) -> Vec<f64> {
        let n = self.config.resolution;
        if n == 1 {
            return vec![0.0];
        }
        let e = self.config.extent;
        (0..n).map(|k| -e + 2.0 * e * k as f64 / (n - 1) as f64).collect()
    }

    pub fn point(&self, alpha: f64, beta: f64) -> Vec<f64> {
        self.center.iter().zip(&self.d1).zip(&self.d2).map(|((c, a), b)| c + alpha * a + beta * b).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    n
}

/// Gram-Schmidt on a pair of draws. `None` when they are (nearly) parallel.
fn orthonormal_pair(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    if normalize(&mut a) == 0.0 || normalize(&mut b) == 0.0 {
        return None;
    }
    let c = dot(&a, &b).clamp(-1.0, 1.0);
    if c.abs().acos().min(std::f64::consts::PI - c.abs().acos()) < MIN_ANGLE {
        return None;
    }
    for (y, x) in b.iter_mut().zip(&a) {
        *y -= c * x;
    }
    normalize(&mut b);
    // A second pass removes what rounding left of the projection.
    let c2 = dot(&a, &b);
    for (y, x) in b.iter_mut().zip(&a) {
        *y -= c2 * x;
    }
    normalize(&mut b);
    Some((a, b))
}

/// Two standard-normal directions orthonormalized by Gram-Schmidt.
/// Nearly parallel draws are redrawn.
pub fn make_slice_spec(center: Vec<f64>, config: SliceConfig) -> Result<SliceSpec> {
    if center.len() < 2 {
        return Err(Error::config("a 2D slice needs at least two parameters"));
    }
    if config.resolution == 0 || !(config.extent > 0.0) {
        return Err(Error::config("slice needs a positive resolution and extent"));
    }
    let mut rng = rng::stream(config.seed, &[DIRECTION_STREAM]);
    let draw = |rng: &mut Rng| -> Vec<f64> { (0..center.len()).map(|_| StandardNormal.sample(rng)).collect() };
    loop {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        if let Some((d1, d2)) = orthonormal_pair(a, b) {
            return Ok(SliceSpec { center, d1, d2, config });
        }
    }
}

/// One evaluated cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: f64,
    pub diverged: bool,
}

/// Returns over the slice. `cells[i][j]` sits at `(axis[i], axis[j])`,
/// `i` along `d1` and `j` along `d2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceGrid {
    pub axis: Vec<f64>,
    pub cells: Vec<Vec<Cell>>,
}

impl SliceGrid {
    pub fn center_index(&self) -> usize {
        self.axis.len() / 2
    }

    pub fn center(&self) -> Cell {
        let c = self.center_index();
        self.cells[c][c]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,beta,mean_return,diverged_mask\n");
        for (i, row) in self.cells.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                s.push_str(&format!("{:?},{:?},{:?},{}\n", self.axis[i], self.axis[j], c.value, u8::from(c.diverged)));
            }
        }
        s
    }

    /// Writes the CSV plus a sidecar describing the slice.
    pub fn save(&self, path: &Path, spec: &SliceSpec, meta: serde_json::Value) -> Result<()> {
        fs::write(path, self.to_csv())?;
        let side = serde_json::json!({
            "resolution": spec.config.resolution,
            "extent": spec.config.extent,
            "episodes_per_point": spec.config.episodes_per_point,
            "seed": spec.config.seed,
            "dim": spec.center.len(),
            "center_return": self.center().value,
            "info": meta,
        });
        fs::write(artifact::meta_path(path), serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(())
    }
}

/// Evaluates `f(params, cell_seed)` over the grid, cells in parallel.
/// `f` returns `None` for a diverged evaluation, recorded as the floor.
pub fn evaluate_slice<F>(spec: &SliceSpec, f: F) -> Result<SliceGrid>
where
    F: Fn(&[f64], u64) -> Result<Option<f64>> + Sync,
{
    let axis = spec.axis();
    let n = axis.len();
    let flat: Vec<Cell> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let seed = rng::derive_seed(spec.config.seed, &[CELL_STREAM, i as u64, j as u64]);
            Ok(match f(&spec.point(axis[i], axis[j]), seed)? {
                Some(value) => Cell { value, diverged: false },
                None => Cell { value: spec.config.floor, diverged: true },
            })
        })
        .collect::<Result<_>>()?;
    let cells = flat.chunks(n).map(|r| r.to_vec()).collect();
    Ok(SliceGrid { axis, cells })
}

/// Deterministic open-loop trajectory objective.
pub fn trajectory_objective<'a>(
    dec: &'a Decoder<'a>,
    task: &'a dyn Objective,
    floor: f64,
) -> impl Fn(&[f64], u64) -> Result<Option<f64>> + Sync + 'a {
    move |p, _| {
        let e = evaluate_trajectory(dec, task, &DecisionVector(p.to_vec()), floor)?;
        Ok((!e.diverged).then_some(e.ret))
    }
}

/// Mean return of `episodes` sampled episodes of a policy whose flat
/// parameters are the slice point. Diverged episodes mark the cell.
pub fn policy_objective<'a>(
    dec: &'a Decoder<'a>,
    task: &'a dyn Objective,
    ranges: &'a StateRanges,
    template: &'a GaussianPolicy,
    episodes: usize,
) -> impl Fn(&[f64], u64) -> Result<Option<f64>> + Sync + 'a {
    move |p, seed| {
        let mut policy = template.clone();
        policy.set_params(p);
        let mut rng = rng::stream(seed, &[]);
        let mut total = 0.0;
        for _ in 0..episodes.max(1) {
            match sampled_episode_return(dec, task, ranges, &policy, &mut rng)? {
                Some(r) => total += r,
                None => return Ok(None),
            }
        }
        Ok(Some(total / episodes.max(1) as f64))
    }
}

/// Width in cells of the contiguous near-optimal run through the center,
/// along `d1` (center column) and `d2` (center row).
///
/// A cell qualifies when its return is at least `c - (1 - fraction) |c|`
/// for center return `c`, i.e. `fraction * c` for positive centers and
/// within `(1 - fraction) |c|` below negative ones. Diverged cells never
/// qualify.
pub fn basin_width(grid: &SliceGrid, fraction: f64) -> (usize, usize) {
    let n = grid.axis.len();
    let c = grid.center_index();
    let center = grid.center().value;
    let threshold = center - (1.0 - fraction) * center.abs();
    let ok = |cell: &Cell| !cell.diverged && cell.value >= threshold;
    let run = |at: &dyn Fn(usize) -> Cell| -> usize {
        if !ok(&at(c)) {
            return 0;
        }
        let mut lo = c;
        while lo > 0 && ok(&at(lo - 1)) {
            lo -= 1;
        }
        let mut hi = c;
        while hi + 1 < n && ok(&at(hi + 1)) {
            hi += 1;
        }
        hi - lo + 1
    };
    (run(&|i| grid.cells[i][c]), run(&|j| grid.cells[c][j]))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::optimize::ActionSpace;
    use crate::sim::{EnvId, Model, TaskId, TaskSpec};

    fn grid_of(values: Vec<Vec<f64>>) -> SliceGrid {
        let n = values.len();
        SliceGrid {
            axis: (0..n).map(|k| k as f64).collect(),
            cells: values.into_iter().map(|r| r.into_iter().map(|value| Cell { value, diverged: false }).collect()).collect(),
        }
    }

    #[test]
    fn directions_are_orthonormal_and_seeded() {
        for seed in 0..20 {
            let cfg = SliceConfig { seed, ..SliceConfig::default() };
            let s = make_slice_spec(vec![0.3; 80], cfg.clone()).unwrap();
            assert!((dot(&s.d1, &s.d1) - 1.0).abs() < 1e-10);
            assert!((dot(&s.d2, &s.d2) - 1.0).abs() < 1e-10);
            assert!(dot(&s.d1, &s.d2).abs() < 1e-10);
            assert_eq!(make_slice_spec(vec![0.3; 80], cfg).unwrap(), s);
        }
        assert!(make_slice_spec(vec![1.0], SliceConfig::default()).is_err());
    }

    #[test]
    fn parallel_draws_are_rejected() {
        assert!(orthonormal_pair(vec![1.0, 2.0], vec![2.0, 4.0]).is_none());
        assert!(orthonormal_pair(vec![1.0, 2.0], vec![-1.0, -2.0]).is_none());
        assert!(orthonormal_pair(vec![0.0, 0.0], vec![1.0, 0.0]).is_none());
        let (a, b) = orthonormal_pair(vec![1.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(a, vec![1.0, 0.0]);
        assert!(dot(&a, &b).abs() < 1e-15);
    }

    #[test]
    fn axis_is_centered() {
        let s = make_slice_spec(vec![0.0; 3], SliceConfig::default()).unwrap();
        let axis = s.axis();
        assert_eq!(axis.len(), 41);
        assert_eq!((axis[0], axis[20], axis[40]), (-1.0, 0.0, 1.0));
    }

    #[test]
    fn basin_width_examples() {
        assert_eq!(basin_width(&grid_of(vec![vec![-3.0; 5]; 5]), 0.9), (5, 5));
        let mut peak = vec![vec![0.0; 5]; 5];
        peak[2][2] = 10.0;
        assert_eq!(basin_width(&grid_of(peak), 0.9), (1, 1));
        let mut neg = vec![vec![-100.0; 5]; 5];
        neg[2] = vec![-100.0, -10.5, -10.0, -10.9, -12.0];
        neg[1][2] = -10.8;
        // Threshold -11: row run covers columns 1..=3, column run rows 1..=2.
        assert_eq!(basin_width(&grid_of(neg), 0.9), (2, 3));
    }

    #[test]
    fn diverged_cells_break_the_basin() {
        let mut g = grid_of(vec![vec![1.0; 5]; 5]);
        g.cells[2][3].diverged = true;
        assert_eq!(basin_width(&g, 0.5), (5, 3));
    }

    fn hopper_slice(seed: u64) -> (SliceSpec, SliceGrid, f64) {
        let m = Model::new(EnvId::PlanarHopper);
        let task = TaskSpec::new(TaskId::Balance, EnvId::PlanarHopper);
        let dec = Decoder::new(&m, ActionSpace::Torque, None).unwrap();
        let center: Vec<f64> = (0..20).map(|k| 0.05 * (k as f64).sin()).collect();
        let cfg = SliceConfig { resolution: 5, extent: 0.5, seed, ..SliceConfig::default() };
        let spec = make_slice_spec(center.clone(), cfg).unwrap();
        let grid = evaluate_slice(&spec, trajectory_objective(&dec, &task, -1e4)).unwrap();
        let direct = evaluate_trajectory(&dec, &task, &DecisionVector(center), -1e4).unwrap().ret;
        (spec, grid, direct)
    }

    #[test]
    fn center_cell_and_mirror_symmetry() {
        let (spec, grid, direct) = hopper_slice(3);
        assert_eq!(grid.center().value.to_bits(), direct.to_bits());

        let m = Model::new(EnvId::PlanarHopper);
        let task = TaskSpec::new(TaskId::Balance, EnvId::PlanarHopper);
        let dec = Decoder::new(&m, ActionSpace::Torque, None).unwrap();
        let mut flipped = spec.clone();
        flipped.d1.iter_mut().for_each(|v| *v = -*v);
        let g2 = evaluate_slice(&flipped, trajectory_objective(&dec, &task, -1e4)).unwrap();
        let n = grid.axis.len();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(g2.cells[i][j], grid.cells[n - 1 - i][j]);
            }
        }
        assert_eq!(hopper_slice(3).1, grid);
    }

    #[test]
    fn csv_layout() {
        let g = grid_of(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let csv = g.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "alpha,beta,mean_return,diverged_mask");
        assert_eq!(lines[2], "0.0,1.0,2.0,0");
        assert_eq!(lines.len(), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn orthonormal_for_any_seed(seed in any::<u64>(), dim in 2usize..50) {
            let s = make_slice_spec(vec![0.0; dim], SliceConfig { seed, ..SliceConfig::default() }).unwrap();
            prop_assert!((dot(&s.d1, &s.d1) - 1.0).abs() < 1e-10);
            prop_assert!((dot(&s.d2, &s.d2) - 1.0).abs() < 1e-10);
            prop_assert!(dot(&s.d1, &s.d2).abs() < 1e-10);
        }
    }
}
