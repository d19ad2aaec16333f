use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamGrads, Parameterized};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    pub rel_tol: f64,
    /// Absolute error below which a coordinate always passes.
    pub abs_floor: f64,
    /// Coordinates checked per block (0 = all), chosen with `seed`.
    pub max_per_block: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-6,
            rel_tol: 1e-4,
            abs_floor: 1e-6,
            max_per_block: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub checked: usize,
    /// Largest relative error among coordinates above the absolute floor.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
    pub config: GradCheckConfig,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.failures == 0)
    }
}

/// Compares the analytic gradient returned by `loss_fn` with central finite
/// differences, block by block.
pub fn gradient_check<P, F>(model: &mut P, loss_fn: F, cfg: GradCheckConfig) -> GradCheckReport
where
    P: Parameterized,
    F: Fn(&P) -> (f64, ParamGrads),
{
    let (_, analytic) = loss_fn(model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names: Vec<(String, usize)> = model.param_blocks().iter().map(|(n, b)| (n.clone(), b.len())).collect();
    let mut blocks = Vec::with_capacity(names.len());
    for (k, (name, len)) in names.into_iter().enumerate() {
        let idx: Vec<usize> = if cfg.max_per_block == 0 || cfg.max_per_block >= len {
            (0..len).collect()
        } else {
            let mut v = sample(&mut rng, len, cfg.max_per_block).into_vec();
            v.sort_unstable();
            v
        };
        let mut be = BlockError {
            name,
            checked: idx.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            failures: 0,
        };
        for i in idx {
            let orig = model.param_blocks()[k].1[i];
            model.param_blocks_mut()[k][i] = orig + cfg.step;
            let (lp, _) = loss_fn(model);
            model.param_blocks_mut()[k][i] = orig - cfg.step;
            let (lm, _) = loss_fn(model);
            model.param_blocks_mut()[k][i] = orig;
            let numeric = (lp - lm) / (2.0 * cfg.step);
            let a = analytic.0[k][i];
            let abs = (a - numeric).abs();
            be.max_abs_error = be.max_abs_error.max(abs);
            if abs > cfg.abs_floor || !abs.is_finite() {
                let rel = abs / a.abs().max(numeric.abs()).max(1e-300);
                be.max_rel_error = be.max_rel_error.max(rel);
                if !(rel <= cfg.rel_tol) {
                    be.failures += 1;
                }
            }
        }
        blocks.push(be);
    }
    GradCheckReport { blocks, config: cfg }
}
