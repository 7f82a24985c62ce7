//! The evolutionary operators: elitism, fitness-weighted crossover, and
//! adaptive Gaussian mutation.
//!
//! All operators are pure functions over [`ParameterVector`]s and fitness
//! values, so the orchestrator can apply them in any order (or in parallel)
//! without hidden state. Fitness values fed to crossover and mutation must
//! be *shifted* non-negative values (see [`shift_fitness`]): the weighting
//! `α = f1 / (f1 + f2 + ε)` and the scaling clamp both assume `f ≥ 0`,
//! while raw mean rewards may be negative.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParameterVector;
use crate::seeds;

/// Fitness of one population member for one evaluation round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    /// Mean total reward over the evaluation episodes.
    pub raw: f64,
    /// `raw − min(raw over the generation)`; non-negative, computed by the
    /// orchestrator after the whole generation is evaluated.
    pub shifted: f64,
    /// Episodes averaged into `raw`.
    pub episodes: usize,
    /// Environment steps consumed by this evaluation.
    pub env_steps: u64,
}

/// How the mutation scaling factor maps to the Gaussian noise width.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    /// Scaling factor is the standard deviation (default).
    #[default]
    Std,
    /// Scaling factor is the variance; std = sqrt(scaling).
    Var,
}

impl std::fmt::Display for SigmaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SigmaMode::Std => write!(f, "std"),
            SigmaMode::Var => write!(f, "var"),
        }
    }
}

impl std::str::FromStr for SigmaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std" => Ok(SigmaMode::Std),
            "var" => Ok(SigmaMode::Var),
            other => Err(Error::config(format!("unknown sigma mode '{other}' (std|var)"))),
        }
    }
}

/// Population-level knobs of the evolutionary loop. Defaults are the
/// best-found search values: mutation probability 0.3, 3 elites, population 8.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvoConfig {
    /// Probability that an offspring is mutated rather than fine-tuned.
    pub mutation_prob: f64,
    /// Number of top members carried over unchanged each generation.
    pub elite_count: usize,
    /// Total population size after every completed generation.
    pub population_size: usize,
    /// Numerical guard for the fitness-weighted formulas.
    pub eps: f64,
    /// Clamp bounds on the mutation scaling factor.
    pub scaling_clamp: (f64, f64),
    /// Interpretation of the scaling factor (std or variance).
    pub sigma_mode: SigmaMode,
}

impl Default for EvoConfig {
    fn default() -> Self {
        EvoConfig {
            mutation_prob: 0.3,
            elite_count: 3,
            population_size: 8,
            eps: 1e-8,
            scaling_clamp: (0.01, 0.1),
            sigma_mode: SigmaMode::Std,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(Error::config("mutation_prob must lie in [0, 1]"));
        }
        if self.elite_count == 0 || self.elite_count >= self.population_size {
            return Err(Error::config("need 1 <= elite_count < population_size"));
        }
        let (lo, hi) = self.scaling_clamp;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::config("scaling clamp bounds must be ordered and positive"));
        }
        if self.eps <= 0.0 {
            return Err(Error::config("eps must be positive"));
        }
        Ok(())
    }
}

/// Generation-wide shift making all fitness values non-negative while
/// preserving ordering and differences: `shifted = raw − min(raw)`.
pub fn shift_fitness(raw: &[f64]) -> Vec<f64> {
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return raw.to_vec(); // empty input (or non-finite, caught upstream)
    }
    raw.iter().map(|f| f - min).collect()
}

/// Indices of the `elite_count` highest-fitness members, in descending
/// fitness order with ties broken by lower index. Returns all indices when
/// the population is smaller than `elite_count` (the 2-clone bootstrap).
pub fn select_elites(fitness: &[f64], elite_count: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..fitness.len()).collect();
    // Stable sort keeps lower indices first among equal fitness values.
    indices.sort_by(|&a, &b| {
        fitness[b].partial_cmp(&fitness[a]).unwrap_or(std::cmp::Ordering::Equal)
    });
    indices.truncate(elite_count.min(fitness.len()));
    indices
}

/// Fitness-weighted interpolation coefficient `α = f1 / (f1 + f2 + ε)`.
/// Inputs must already be shifted (non-negative).
pub fn crossover_alpha(f1: f64, f2: f64, eps: f64) -> Result<f64> {
    if f1 < 0.0 || f2 < 0.0 {
        return Err(Error::contract(format!(
            "crossover_alpha needs shifted fitness, got ({f1}, {f2})"
        )));
    }
    Ok(f1 / (f1 + f2 + eps))
}

/// Convex blend `c = α·p1 + (1−α)·p2`, coordinate-wise.
pub fn crossover(p1: &ParameterVector, p2: &ParameterVector, alpha: f64) -> Result<ParameterVector> {
    if !p1.same_layout(p2) {
        return Err(Error::contract("crossover parents have different layouts"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::contract(format!("alpha {alpha} outside [0, 1]")));
    }
    let values = p1
        .values
        .iter()
        .zip(&p2.values)
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect();
    Ok(ParameterVector { values, layout: p1.layout.clone() })
}

/// Adaptive scaling factor `clamp(|f1 − f2| / max(f1 + f2, ε), lo, hi)`.
/// Inputs must already be shifted (non-negative).
pub fn mutation_scaling(f1: f64, f2: f64, eps: f64, clamp: (f64, f64)) -> Result<f64> {
    if f1 < 0.0 || f2 < 0.0 {
        return Err(Error::contract(format!(
            "mutation_scaling needs shifted fitness, got ({f1}, {f2})"
        )));
    }
    let ratio = (f1 - f2).abs() / (f1 + f2).max(eps);
    Ok(ratio.clamp(clamp.0, clamp.1))
}

/// Adds i.i.d. Gaussian noise to every coordinate. Under [`SigmaMode::Std`]
/// the noise standard deviation equals `scaling`; under [`SigmaMode::Var`]
/// it is `sqrt(scaling)`. Deterministic given the seed.
pub fn mutate(
    child: &ParameterVector,
    scaling: f64,
    mode: SigmaMode,
    seed: u64,
) -> Result<ParameterVector> {
    if !(scaling > 0.0 && scaling.is_finite()) {
        return Err(Error::contract(format!("mutation scaling {scaling} must be positive")));
    }
    let sigma = match mode {
        SigmaMode::Std => scaling,
        SigmaMode::Var => scaling.sqrt(),
    };
    let mut rng = seeds::rng(seed, &[seeds::STREAM_MUTATE]);
    let values = child
        .values
        .iter()
        .map(|v| {
            let z: f64 = rng.sample(StandardNormal);
            v + sigma * z
        })
        .collect();
    Ok(ParameterVector { values, layout: child.layout.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use crate::nn::{self, NetworkSpec};

    fn random_params(seed: u64) -> ParameterVector {
        let spec = NetworkSpec::new(3, vec![8, 6], 4).unwrap();
        nn::init_params(&spec, &mut seeds::rng(seed, &[seeds::STREAM_INIT]))
    }

    // ---------------------------------------------------------------
    // Config and shifting
    // ---------------------------------------------------------------

    #[test]
    fn config_defaults_are_the_search_optima() {
        let config = EvoConfig::default();
        assert_eq!(config.mutation_prob, 0.3);
        assert_eq!(config.elite_count, 3);
        assert_eq!(config.population_size, 8);
        assert_eq!(config.scaling_clamp, (0.01, 0.1));
        assert_eq!(config.sigma_mode, SigmaMode::Std);
        config.validate().unwrap();
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let bad = |f: fn(&mut EvoConfig)| {
            let mut c = EvoConfig::default();
            f(&mut c);
            assert!(c.validate().is_err(), "{c:?} should be invalid");
        };
        bad(|c| c.mutation_prob = -0.1);
        bad(|c| c.mutation_prob = 1.5);
        bad(|c| c.elite_count = 0);
        bad(|c| c.elite_count = c.population_size);
        bad(|c| c.scaling_clamp = (0.2, 0.1));
        bad(|c| c.scaling_clamp = (0.0, 0.1));
        bad(|c| c.eps = 0.0);
    }

    #[test]
    fn shifting_makes_fitness_nonnegative_and_preserves_differences() {
        let shifted = shift_fitness(&[-21.0, -18.5, -20.0]);
        assert_eq!(shifted, vec![0.0, 2.5, 1.0]);
        assert_eq!(shift_fitness(&[]), Vec::<f64>::new());
    }

    // ---------------------------------------------------------------
    // Elitism
    // ---------------------------------------------------------------

    #[test]
    fn elites_are_sorted_descending() {
        assert_eq!(select_elites(&[5.0, 3.0, 8.0, 1.0], 2), vec![2, 0]);
    }

    #[test]
    fn elite_ties_break_by_lower_index() {
        assert_eq!(select_elites(&[1.0, 1.0, 1.0, 1.0], 3), vec![0, 1, 2]);
    }

    #[test]
    fn small_populations_return_everyone() {
        assert_eq!(select_elites(&[2.0, 7.0], 3), vec![1, 0]);
    }

    // ---------------------------------------------------------------
    // Crossover
    // ---------------------------------------------------------------

    #[test]
    fn alpha_formula_examples() {
        assert_relative_eq!(crossover_alpha(1.0, 1.0, 1e-8).unwrap(), 0.5, epsilon = 1e-8);
        assert_relative_eq!(crossover_alpha(3.0, 1.0, 1e-8).unwrap(), 0.75, epsilon = 1e-8);
        assert_eq!(crossover_alpha(0.0, 0.0, 1e-8).unwrap(), 0.0);
        assert!(crossover_alpha(-1.0, 1.0, 1e-8).is_err());
        assert!(crossover_alpha(1.0, -1.0, 1e-8).is_err());
    }

    #[test]
    fn crossover_endpoints_and_midpoint() {
        let p1 = random_params(1);
        let p2 = random_params(2);
        assert_eq!(crossover(&p1, &p2, 1.0).unwrap(), p1);
        assert_eq!(crossover(&p1, &p2, 0.0).unwrap(), p2);

        let mid = crossover(&p1, &p2, 0.5).unwrap();
        for ((m, a), b) in mid.values.iter().zip(&p1.values).zip(&p2.values) {
            assert_relative_eq!(*m, 0.5 * a + 0.5 * b, epsilon = 1e-15);
        }
    }

    #[test]
    fn crossover_rejects_mismatched_layouts_and_bad_alpha() {
        let p1 = random_params(1);
        let spec = NetworkSpec::new(3, vec![8], 4).unwrap();
        let other = nn::init_params(&spec, &mut seeds::rng(9, &[seeds::STREAM_INIT]));
        assert!(crossover(&p1, &other, 0.5).is_err());
        let p2 = random_params(2);
        assert!(crossover(&p1, &p2, 1.5).is_err());
        assert!(crossover(&p1, &p2, -0.1).is_err());
    }

    // ---------------------------------------------------------------
    // Mutation
    // ---------------------------------------------------------------

    #[test]
    fn scaling_formula_examples() {
        let clamp = (0.01, 0.1);
        // Equal fitness → ratio 0 → lower clamp.
        assert_eq!(mutation_scaling(2.0, 2.0, 1e-8, clamp).unwrap(), 0.01);
        // |3 − 1| / 4 = 0.5 → upper clamp.
        assert_eq!(mutation_scaling(3.0, 1.0, 1e-8, clamp).unwrap(), 0.1);
        // |1.05 − 0.95| / 2 = 0.05, interior.
        assert_relative_eq!(
            mutation_scaling(1.05, 0.95, 1e-8, clamp).unwrap(),
            0.05,
            epsilon = 1e-15
        );
        // Both zero → 0/ε = 0 → lower clamp (no division by zero).
        assert_eq!(mutation_scaling(0.0, 0.0, 1e-8, clamp).unwrap(), 0.01);
        assert!(mutation_scaling(-0.5, 1.0, 1e-8, clamp).is_err());
    }

    #[test]
    fn mutation_is_deterministic_in_the_seed() {
        let child = random_params(3);
        let a = mutate(&child, 0.05, SigmaMode::Std, 11).unwrap();
        let b = mutate(&child, 0.05, SigmaMode::Std, 11).unwrap();
        assert_eq!(a, b);
        let c = mutate(&child, 0.05, SigmaMode::Std, 12).unwrap();
        assert_ne!(a, c);
        assert!(mutate(&child, 0.0, SigmaMode::Std, 1).is_err());
    }

    fn noise_std(child: &ParameterVector, mutated: &ParameterVector) -> f64 {
        let n = child.len() as f64;
        let sq: f64 = child
            .values
            .iter()
            .zip(&mutated.values)
            .map(|(a, b)| (b - a) * (b - a))
            .sum();
        (sq / n).sqrt()
    }

    #[test]
    fn noise_magnitude_matches_the_scaling_factor() {
        // 10,000 coordinates give a std estimator tight enough for a
        // [0.008, 0.012] window at σ = 0.01 (≈ 3σ of the estimator).
        let spec = NetworkSpec::new(99, vec![99], 99).unwrap();
        let child = ParameterVector::zeros(&spec);
        assert!(child.len() >= 10_000);

        let low = mutate(&child, 0.01, SigmaMode::Std, 4).unwrap();
        let std_low = noise_std(&child, &low);
        assert!((0.008..=0.012).contains(&std_low), "std {std_low}");

        let high = mutate(&child, 0.1, SigmaMode::Std, 4).unwrap();
        let std_high = noise_std(&child, &high);
        let ratio = std_high / std_low;
        assert!((9.0..=11.0).contains(&ratio), "clamp-to-clamp std ratio {ratio}");
    }

    #[test]
    fn variance_mode_takes_the_square_root() {
        let spec = NetworkSpec::new(99, vec![99], 99).unwrap();
        let child = ParameterVector::zeros(&spec);
        let mutated = mutate(&child, 0.04, SigmaMode::Var, 4).unwrap();
        let std = noise_std(&child, &mutated);
        assert!((std - 0.2).abs() < 0.01, "std {std} should be near sqrt(0.04)");
    }

    // ---------------------------------------------------------------
    // Properties
    // ---------------------------------------------------------------

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn alpha_stays_in_unit_interval_and_orders_by_fitness(
            f1 in 0.0f64..1e6,
            f2 in 0.0f64..1e6,
        ) {
            let alpha = crossover_alpha(f1, f2, 1e-8).unwrap();
            prop_assert!((0.0..1.0).contains(&alpha));
            if f1 > f2 {
                prop_assert!(alpha > 0.5 - 1e-12);
            }
        }

        #[test]
        fn crossover_is_coordinate_wise_convex(
            seed1 in 0u64..1000,
            seed2 in 0u64..1000,
            alpha in 0.0f64..=1.0,
        ) {
            let p1 = random_params(seed1);
            let p2 = random_params(seed2);
            let child = crossover(&p1, &p2, alpha).unwrap();
            for ((c, a), b) in child.values.iter().zip(&p1.values).zip(&p2.values) {
                let lo = a.min(*b) - 1e-12;
                let hi = a.max(*b) + 1e-12;
                prop_assert!(*c >= lo && *c <= hi, "{c} outside [{lo}, {hi}]");
            }
        }

        #[test]
        fn scaling_stays_in_clamp_and_hits_lower_bound_iff_ratio_small(
            f1 in 0.0f64..100.0,
            f2 in 0.0f64..100.0,
        ) {
            let clamp = (0.01, 0.1);
            let scaling = mutation_scaling(f1, f2, 1e-8, clamp).unwrap();
            prop_assert!((clamp.0..=clamp.1).contains(&scaling));
            let ratio = (f1 - f2).abs() / (f1 + f2).max(1e-8);
            prop_assert_eq!(scaling == clamp.0, ratio <= clamp.0);
        }

        #[test]
        fn elites_contain_the_argmax(
            fitness in prop::collection::vec(-100.0f64..100.0, 1..20),
            elite_count in 1usize..6,
        ) {
            let elites = select_elites(&fitness, elite_count);
            prop_assert_eq!(elites.len(), elite_count.min(fitness.len()));
            let argmax = fitness
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            prop_assert!(elites.contains(&argmax) || fitness[elites[0]] == fitness[argmax]);
            for pair in elites.windows(2) {
                prop_assert!(fitness[pair[0]] >= fitness[pair[1]]);
            }
        }

        #[test]
        fn shifted_fitness_is_nonnegative_and_order_preserving(
            raw in prop::collection::vec(-1e6f64..1e6, 1..20),
        ) {
            let shifted = shift_fitness(&raw);
            prop_assert!(shifted.iter().all(|f| *f >= 0.0));
            prop_assert!(shifted.contains(&0.0));
            for i in 0..raw.len() {
                for j in 0..raw.len() {
                    prop_assert_eq!(raw[i] < raw[j], shifted[i] < shifted[j]);
                }
            }
        }
    }
}
