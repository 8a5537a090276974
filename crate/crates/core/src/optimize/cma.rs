use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_trajectory, horizon_steps, DecisionVector, Decoder, RecordRow, RunRecord};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::sim::Objective;

const SAMPLE_STREAM: u64 = 0xC4A;

/// Strategy constants derived from dimension and population size.
#[derive(Clone, Debug, PartialEq)]
pub struct CmaParams {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mueff: f64,
    pub cc: f64,
    pub cs: f64,
    pub c1: f64,
    pub cmu: f64,
    pub damps: f64,
    pub chi_n: f64,
}

impl CmaParams {
    pub fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
        let cs = (mueff + 2.0) / (nf + mueff + 5.0);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
        let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
        let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        CmaParams { lambda, mu, weights, mueff, cc, cs, c1, cmu, damps, chi_n }
    }
}

/// Covariance matrix adaptation evolution strategy (minimizing), with
/// weighted rank-mu and rank-one updates and cumulative step-size control.
///
/// Samples are drawn through the Cholesky factor `C = L L^T`; the
/// conjugate evolution path uses `L^-1`, which has the same distribution
/// under the null hypothesis as the symmetric inverse square root.
#[derive(Clone, Debug)]
pub struct Cma {
    pub params: CmaParams,
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    pc: DVector<f64>,
    ps: DVector<f64>,
    pub generation: usize,
}

impl Cma {
    pub fn new(mean: Vec<f64>, sigma: f64, lambda: usize) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::config("CMA-ES needs at least one dimension"));
        }
        if lambda < 4 {
            return Err(Error::config(format!("population must be at least 4, got {lambda}")));
        }
        if !(sigma > 0.0) {
            return Err(Error::config("initial step size must be positive"));
        }
        Ok(Cma {
            params: CmaParams::new(n, lambda),
            mean: DVector::from_vec(mean),
            sigma,
            cov: DMatrix::identity(n, n),
            chol: DMatrix::identity(n, n),
            pc: DVector::zeros(n),
            ps: DVector::zeros(n),
            generation: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn ask(&self, rng: &mut Rng) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..self.params.lambda)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
                (&self.mean + (&self.chol * z) * self.sigma).as_slice().to_vec()
            })
            .collect()
    }

    /// Updates the distribution from samples and their costs (lower is better).
    pub fn tell(&mut self, samples: &[Vec<f64>], costs: &[f64]) -> Result<()> {
        let p = &self.params;
        let n = self.dim();
        if samples.len() != p.lambda || costs.len() != p.lambda {
            return Err(Error::usage(format!("tell needs {} samples and costs", p.lambda)));
        }
        let mut order: Vec<usize> = (0..p.lambda).collect();
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));

        let ys: Vec<DVector<f64>> = order[..p.mu]
            .iter()
            .map(|&k| (DVector::from_column_slice(&samples[k]) - &self.mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in p.weights.iter().zip(&ys) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean.axpy(self.sigma, &y_w, 1.0);

        let l = self.chol.clone();
        let inv_y = l
            .solve_lower_triangular(&y_w)
            .ok_or_else(|| Error::Training("CMA-ES Cholesky factor is singular".into()))?;
        self.ps = &self.ps * (1.0 - p.cs) + inv_y * (p.cs * (2.0 - p.cs) * p.mueff).sqrt();
        let g = (self.generation + 1) as f64;
        let ps_norm = self.ps.norm();
        let hsig = ps_norm / (1.0 - (1.0 - p.cs).powf(2.0 * g)).sqrt() / p.chi_n < 1.4 + 2.0 / (n as f64 + 1.0);
        let hs = if hsig { 1.0 } else { 0.0 };
        self.pc = &self.pc * (1.0 - p.cc) + &y_w * (hs * (p.cc * (2.0 - p.cc) * p.mueff).sqrt());

        let decay = 1.0 - p.c1 - p.cmu + (1.0 - hs) * p.c1 * p.cc * (2.0 - p.cc);
        let mut cov = &self.cov * decay;
        cov.ger(p.c1, &self.pc, &self.pc, 1.0);
        for (w, y) in p.weights.iter().zip(&ys) {
            cov.ger(p.cmu * w, y, y, 1.0);
        }
        cov = (&cov + cov.transpose()) * 0.5;
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Training(format!("CMA-ES covariance lost positive definiteness at generation {g}")))?;
        self.chol = chol.l();
        self.cov = cov;
        self.sigma *= ((p.cs / p.damps) * (ps_norm / p.chi_n - 1.0)).exp();
        self.generation += 1;
        Ok(())
    }

    /// Minimizes `f` for `iterations` generations and returns the best sample.
    pub fn minimize(
        &mut self,
        iterations: usize,
        seed: u64,
        f: impl Fn(&[f64]) -> f64 + Sync,
    ) -> Result<(Vec<f64>, f64)> {
        let mut best = (self.mean.as_slice().to_vec(), f64::INFINITY);
        for it in 0..iterations {
            let xs = self.ask(&mut rng::stream(seed, &[SAMPLE_STREAM, it as u64]));
            let fs: Vec<f64> = xs.par_iter().map(|x| f(x)).collect();
            for (x, v) in xs.iter().zip(&fs) {
                if *v < best.1 {
                    best = (x.clone(), *v);
                }
            }
            self.tell(&xs, &fs)?;
        }
        Ok(best)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmaConfig {
    pub population: usize,
    pub iterations: usize,
    pub horizon_seconds: f64,
    /// Initial step size as a fraction of each decision dim's range.
    pub sigma_fraction: f64,
    /// Return assigned to a rollout whose simulation diverged.
    pub divergence_return: f64,
    pub seed: u64,
}

impl Default for CmaConfig {
    fn default() -> Self {
        CmaConfig {
            population: 16,
            iterations: 100,
            horizon_seconds: 4.0,
            sigma_fraction: 0.3,
            divergence_return: -1e4,
            seed: 0,
        }
    }
}

impl CmaConfig {
    /// Population 32, 200 iterations.
    pub fn paper() -> Self {
        CmaConfig { population: 32, iterations: 200, ..Self::default() }
    }

    pub fn horizon(&self) -> usize {
        horizon_steps(self.horizon_seconds)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmaOutcome {
    pub best: DecisionVector,
    pub best_return: f64,
    /// Best-ever return after each iteration.
    pub best_history: Vec<f64>,
    pub record: RunRecord,
}

/// Optimizes a `T`-slot open-loop plan from the task's initial state.
/// The search runs in normalized coordinates, starting from the
/// zero-motion plan with step size `sigma_fraction` of each dim's range.
pub fn cma_es_offline(dec: &Decoder, task: &dyn Objective, cfg: &CmaConfig) -> Result<CmaOutcome> {
    let t = cfg.horizon();
    if t == 0 {
        return Err(Error::config("CMA-ES horizon must be at least one action period"));
    }
    let s0 = task.initial_state(dec.model);
    let mean = DecisionVector::rest(dec, &s0, t);
    // Normalized coordinates span [-1, 1].
    let mut cma = Cma::new(mean.0.clone(), 2.0 * cfg.sigma_fraction, cfg.population)?;
    let mut record = RunRecord::new(dec.model.id(), "cma_es", dec.space, cfg.seed);
    let mut best = (mean, f64::NEG_INFINITY);
    let mut best_history = Vec::with_capacity(cfg.iterations);
    let mut env_steps = 0usize;
    for it in 0..cfg.iterations {
        let xs = cma.ask(&mut rng::stream(cfg.seed, &[SAMPLE_STREAM, it as u64]));
        let evals: Vec<_> = xs
            .par_iter()
            .map(|x| evaluate_trajectory(dec, task, &DecisionVector(x.clone()), cfg.divergence_return))
            .collect::<Result<_>>()?;
        let diverged = evals.iter().filter(|e| e.diverged).count();
        if diverged > 0 {
            log::warn!("CMA-ES iteration {it}: {diverged} rollouts diverged");
        }
        env_steps += evals.iter().map(|e| e.steps).sum::<usize>();
        let returns: Vec<f64> = evals.iter().map(|e| e.ret).collect();
        for (x, r) in xs.iter().zip(&returns) {
            if *r > best.1 {
                best = (DecisionVector(x.clone()), *r);
            }
        }
        best_history.push(best.1);
        record.push(RecordRow::from_returns(it, env_steps, &returns));
        let costs: Vec<f64> = returns.iter().map(|r| -r).collect();
        cma.tell(&xs, &costs)?;
    }
    Ok(CmaOutcome { best: best.0, best_return: best.1, best_history, record })
}
