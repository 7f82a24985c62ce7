//! The three evolutionary operators in isolation, on hand-built parents:
//! fitness shifting and elite selection, fitness-weighted crossover, and
//! adaptive Gaussian mutation whose spread tracks how far apart the
//! parents' fitness is.
//!
//! Run with: `cargo run --example evolution_operators`

use epo::evo::{self, EvoConfig, SigmaMode};
use epo::nn::{self, NetworkSpec};
use epo::seeds;

fn main() -> epo::Result<()> {
    let config = EvoConfig::default();

    // Fitness shifting makes every value positive so the crossover weights
    // behave even when raw scores are negative.
    let raw = vec![3.0, -1.0, 5.0, 0.5];
    let shifted = evo::shift_fitness(&raw);
    println!("raw fitness     {raw:?}");
    println!("shifted fitness {shifted:?}");
    let elites = evo::select_elites(&shifted, 2);
    println!("top-2 elites by shifted fitness: members {elites:?}");
    println!();

    // Crossover interpolates whole parameter vectors; the mixing weight is
    // the first parent's share of the combined fitness.
    let spec = NetworkSpec::new(2, vec![3], 2)?;
    let parent_a = nn::init_params(&spec, &mut seeds::rng(11, &[seeds::STREAM_INIT]));
    let parent_b = nn::init_params(&spec, &mut seeds::rng(12, &[seeds::STREAM_INIT]));
    let (fit_a, fit_b) = (3.0, 1.0);
    let alpha = evo::crossover_alpha(fit_a, fit_b, config.eps)?;
    let child = evo::crossover(&parent_a, &parent_b, alpha)?;
    println!(
        "parent fitness {fit_a} vs {fit_b} -> alpha = {alpha:.6} ({:.0}% parent A)",
        alpha * 100.0
    );
    println!(
        "first weights: a={:+.4} b={:+.4} child={:+.4} (expect {alpha:.4}*a + {:.4}*b)",
        parent_a.values[0],
        parent_b.values[0],
        child.values[0],
        1.0 - alpha,
    );
    println!();

    // Mutation strength adapts to the fitness gap, clamped into a sane
    // band: similar parents get gentle noise, dissimilar parents get more.
    for (fa, fb) in [(3.0, 1.0), (2.0, 2.0), (10.0, 0.1)] {
        let sigma = evo::mutation_scaling(fa, fb, config.eps, config.scaling_clamp)?;
        println!("fitness ({fa:>4}, {fb:>4}) -> mutation sigma {sigma:.4}");
    }
    let sigma = evo::mutation_scaling(fit_a, fit_b, config.eps, config.scaling_clamp)?;
    let mutant = evo::mutate(&child, sigma, SigmaMode::Std, 99)?;
    let displacement: f64 = child
        .values
        .iter()
        .zip(&mutant.values)
        .map(|(c, m)| (m - c).powi(2))
        .sum::<f64>()
        .sqrt();
    println!(
        "mutated {} parameters with sigma {sigma:.4}; displacement norm {displacement:.4}",
        mutant.values.len(),
    );
    Ok(())
}
