use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GroupValues, IdentificationResult, Method, Problem};
use crate::error::{CalibError, Result};
use crate::kinematics::{KinematicErrorVector, PARAMS};

const TOURNAMENT_SIZE: usize = 3;
const BLEND_ALPHA: f64 = 0.5;

/// Real-coded genetic algorithm over the error vector. Fitness is the mean
/// squared training residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    pub mutation_sigma: GroupValues,
    /// Mutation spread in the last generation, as a fraction of `mutation_sigma`.
    pub final_mutation_scale: f64,
    /// Genes are confined to `[-bound, bound]`.
    pub search_bounds: GroupValues,
    pub elitism: usize,
    pub seed: u64,
    /// Individuals placed in the initial population before random fill.
    #[serde(skip)]
    pub seed_individuals: Vec<KinematicErrorVector>,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 200,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation_sigma: GroupValues::new(0.2, 0.001),
            final_mutation_scale: 0.05,
            search_bounds: GroupValues::new(2.0, 0.01),
            elitism: 2,
            seed: 0,
            seed_individuals: Vec::new(),
        }
    }
}

impl GaConfig {
    fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(CalibError::InvalidArgument("GA population must be >= 2".into()));
        }
        for (name, rate) in [("crossover_rate", self.crossover_rate), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(CalibError::InvalidArgument(format!("GA {name} must lie in [0, 1]")));
            }
        }
        self.mutation_sigma.validate_nonneg("GA mutation_sigma")?;
        self.search_bounds.validate_nonneg("GA search_bounds")?;
        if !(self.final_mutation_scale >= 0.0) {
            return Err(CalibError::InvalidArgument("GA final_mutation_scale must be >= 0".into()));
        }
        if self.elitism > self.population {
            return Err(CalibError::InvalidArgument("GA elitism exceeds population".into()));
        }
        Ok(())
    }
}

type Genome = [f64; PARAMS];

fn clamp(genome: &mut Genome, bounds: &Genome) {
    for (g, b) in genome.iter_mut().zip(bounds) {
        *g = g.clamp(-b, *b);
    }
}

fn tournament(rng: &mut ChaCha8Rng, fitness: &[f64]) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..TOURNAMENT_SIZE {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] < fitness[best] {
            best = c;
        }
    }
    best
}

/// BLX-α: each child gene uniform on the parents' interval widened by α
/// of its length on both sides.
fn blend(rng: &mut ChaCha8Rng, a: &Genome, b: &Genome) -> Genome {
    std::array::from_fn(|k| {
        let (lo, hi) = (a[k].min(b[k]), a[k].max(b[k]));
        let span = hi - lo;
        let (lo, hi) = (lo - BLEND_ALPHA * span, hi + BLEND_ALPHA * span);
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    })
}

/// Genetic search; the incumbent starts at the prior mean (zero error) and
/// is replaced whenever an evaluated individual beats it.
pub fn ga_identify(problem: &Problem<'_>, cfg: &GaConfig) -> Result<IdentificationResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bounds = cfg.search_bounds.expand();
    let sigma = cfg.mutation_sigma.expand();

    let mut population: Vec<Genome> = cfg.seed_individuals.iter().take(cfg.population).map(|x| {
        let mut g = x.to_flat();
        clamp(&mut g, &bounds);
        g
    }).collect();
    while population.len() < cfg.population {
        population.push(std::array::from_fn(|k| if bounds[k] > 0.0 { rng.random_range(-bounds[k]..bounds[k]) } else { 0.0 }));
    }

    let mut incumbent = KinematicErrorVector::zeros();
    let mut incumbent_fit = problem.mse(&incumbent);
    let mut history = vec![incumbent_fit.sqrt()];

    for generation in 0..cfg.generations {
        let fitness: Vec<f64> = population.par_iter().map(|g| problem.mse(&KinematicErrorVector::from_flat(g))).collect();
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
        if fitness[order[0]] < incumbent_fit {
            incumbent_fit = fitness[order[0]];
            incumbent = KinematicErrorVector::from_flat(&population[order[0]]);
        }
        history.push(incumbent_fit.sqrt());

        let progress = if cfg.generations > 1 { generation as f64 / (cfg.generations - 1) as f64 } else { 0.0 };
        let scale = 1.0 + (cfg.final_mutation_scale - 1.0) * progress;
        let mut next: Vec<Genome> = order.iter().take(cfg.elitism).map(|&i| population[i]).collect();
        while next.len() < cfg.population {
            let a = population[tournament(&mut rng, &fitness)];
            let b = population[tournament(&mut rng, &fitness)];
            let mut child = if rng.random::<f64>() < cfg.crossover_rate { blend(&mut rng, &a, &b) } else { a };
            for (k, gene) in child.iter_mut().enumerate() {
                if rng.random::<f64>() < cfg.mutation_rate {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *gene += sigma[k] * scale * z;
                }
            }
            clamp(&mut child, &bounds);
            next.push(child);
        }
        population = next;
    }
    Ok(IdentificationResult { method: Method::Ga, x_hat: Some(incumbent), residual_predictor: None, history, iterations: cfg.generations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blend_stays_near_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = [0.0; PARAMS];
        let b = [1.0; PARAMS];
        for _ in 0..100 {
            assert!(blend(&mut rng, &a, &b).iter().all(|g| (-0.5..=1.5).contains(g)));
        }
    }

    #[test]
    fn clamp_respects_bounds() {
        let mut g = [5.0; PARAMS];
        g[20] = -5.0;
        clamp(&mut g, &GroupValues::new(2.0, 0.01).expand());
        assert_eq!(g[0], 2.0);
        assert_eq!(g[20], -0.01);
    }
}
