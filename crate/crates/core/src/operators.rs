//! Genetic operators: real-coded SBX and polynomial mutation applied to the
//! numeric genes, categorical resampling of init schemes, a length mutation,
//! binary tournament selection and elitist environmental selection.
//!
//! Integer genes (neurons, embedding dim) are recombined and mutated as reals,
//! then rounded half-up and clamped back into range.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::genome::{BlockGene, Genome, GenomeRanges, InitScheme};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorConfig {
    pub sbx_probability: f64,
    pub pm_probability: f64,
    /// Shared by SBX and PM.
    pub distribution_index: f64,
    pub elitism_rate: f64,
    pub length_mutation_probability: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            sbx_probability: 0.9,
            pm_probability: 0.2,
            distribution_index: 1.0,
            elitism_rate: 0.2,
            length_mutation_probability: 0.2,
        }
    }
}

impl OperatorConfig {
    /// Every operator disabled; offspring are copies of their parents.
    pub fn disabled() -> Self {
        OperatorConfig {
            sbx_probability: 0.0,
            pm_probability: 0.0,
            length_mutation_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probabilities = [
            ("sbx_probability", self.sbx_probability),
            ("pm_probability", self.pm_probability),
            ("elitism_rate", self.elitism_rate),
            ("length_mutation_probability", self.length_mutation_probability),
        ];
        for (name, p) in probabilities {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if !(self.distribution_index >= 0.0 && self.distribution_index.is_finite()) {
            return Err(Error::Config(format!(
                "distribution_index = {} must be finite and non-negative",
                self.distribution_index
            )));
        }
        Ok(())
    }

    /// `floor(elitism_rate * pop_size)`, at least one.
    pub fn elite_count(&self, pop_size: usize) -> usize {
        // The epsilon absorbs products such as 0.29 * 100 = 28.999999999999996.
        let n = (self.elitism_rate * pop_size as f64 + 1e-9).floor() as usize;
        n.max(1).min(pop_size)
    }
}

/// A genome with its fitness (validation NDCG@K), once evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredIndividual {
    pub genome: Genome,
    pub fitness: Option<f64>,
}

impl ScoredIndividual {
    pub fn unevaluated(genome: Genome) -> Self {
        ScoredIndividual { genome, fitness: None }
    }

    pub fn scored(genome: Genome, fitness: f64) -> Self {
        ScoredIndividual {
            genome,
            fitness: Some(fitness),
        }
    }

    fn fitness_or_err(&self) -> Result<f64> {
        self.fitness
            .ok_or_else(|| Error::State(format!("individual {} has not been evaluated", self.genome.id)))
    }
}

/// Uniform draw from the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn check_unit(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("u = {u} must lie strictly inside (0, 1)")))
    }
}

/// Simulated binary crossover of two reals for a given uniform draw `u`.
///
/// The children are symmetric around the parents' midpoint.
pub fn sbx_real(x1: f64, x2: f64, eta: f64, u: f64) -> Result<(f64, f64)> {
    check_unit(u)?;
    if x1 == x2 {
        return Ok((x1, x2));
    }
    let exponent = 1.0 / (eta + 1.0);
    let beta = if u <= 0.5 {
        (2.0 * u).powf(exponent)
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(exponent)
    };
    let c1 = 0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2);
    let c2 = 0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2);
    Ok((c1, c2))
}

/// Polynomial mutation of `x` within `[lo, hi]` for a given uniform draw `u`.
pub fn pm_real(x: f64, lo: f64, hi: f64, eta: f64, u: f64) -> Result<f64> {
    check_unit(u)?;
    if lo >= hi || lo.is_nan() || hi.is_nan() || x.is_nan() || x < lo || x > hi {
        return Err(Error::Argument(format!(
            "polynomial mutation needs lo <= x <= hi with lo < hi, got x = {x}, [{lo}, {hi}]"
        )));
    }
    let span = hi - lo;
    let power = eta + 1.0;
    let delta_q = if u < 0.5 {
        let delta1 = (x - lo) / span;
        let val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - delta1).powf(power);
        val.powf(1.0 / power) - 1.0
    } else {
        let delta2 = (hi - x) / span;
        let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - delta2).powf(power);
        1.0 - val.powf(1.0 / power)
    };
    Ok((x + delta_q * span).clamp(lo, hi))
}

/// Round half-up and clamp into `[lo, hi]`.
pub fn round_clamp(x: f64, lo: usize, hi: usize) -> usize {
    let r = (x + 0.5).floor();
    if r <= lo as f64 {
        lo
    } else if r >= hi as f64 {
        hi
    } else {
        r as usize
    }
}

/// SBX on an integer gene.
pub fn sbx_integer(a: usize, b: usize, bounds: (usize, usize), eta: f64, u: f64) -> Result<(usize, usize)> {
    let (c1, c2) = sbx_real(a as f64, b as f64, eta, u)?;
    Ok((round_clamp(c1, bounds.0, bounds.1), round_clamp(c2, bounds.0, bounds.1)))
}

/// PM on an integer gene; a collapsed range leaves the value at its bound.
pub fn pm_integer(x: usize, bounds: (usize, usize), eta: f64, u: f64) -> Result<usize> {
    if bounds.0 == bounds.1 {
        return Ok(bounds.0);
    }
    let x = x.clamp(bounds.0, bounds.1);
    let m = pm_real(x as f64, bounds.0 as f64, bounds.1 as f64, eta, u)?;
    Ok(round_clamp(m, bounds.0, bounds.1))
}

fn pm_dropout(x: f64, bounds: (f64, f64), eta: f64, u: f64) -> Result<f64> {
    if bounds.0 == bounds.1 {
        return Ok(bounds.0);
    }
    pm_real(x.clamp(bounds.0, bounds.1), bounds.0, bounds.1, eta, u)
}

/// Recombines one aligned block pair with explicit uniform draws for the
/// neuron and dropout genes. Init tags are exchanged.
pub fn recombine_blocks(
    a: &BlockGene,
    b: &BlockGene,
    ranges: &GenomeRanges,
    eta: f64,
    u_neurons: f64,
    u_dropout: f64,
) -> Result<(BlockGene, BlockGene)> {
    let (n1, n2) = sbx_integer(a.neurons, b.neurons, ranges.neurons, eta, u_neurons)?;
    let (d1, d2) = sbx_real(a.dropout_rate, b.dropout_rate, eta, u_dropout)?;
    let (lo, hi) = ranges.dropout;
    Ok((
        BlockGene {
            neurons: n1,
            dropout_rate: d1.clamp(lo, hi),
            init: b.init,
        },
        BlockGene {
            neurons: n2,
            dropout_rate: d2.clamp(lo, hi),
            init: a.init,
        },
    ))
}

/// Head-aligned crossover. The embedding gene, each aligned block pair and the
/// prediction gene are recombined independently with probability
/// `sbx_probability`; blocks past the shorter parent are inherited unchanged,
/// so children keep their parents' lengths. Children carry id 0.
pub fn crossover<R: Rng + ?Sized>(
    p1: &Genome,
    p2: &Genome,
    cfg: &OperatorConfig,
    ranges: &GenomeRanges,
    rng: &mut R,
) -> Result<(Genome, Genome)> {
    let eta = cfg.distribution_index;
    let mut c1 = p1.clone().with_id(0);
    let mut c2 = p2.clone().with_id(0);

    if rng.random_bool(cfg.sbx_probability) {
        let (e1, e2) = sbx_integer(
            p1.embedding.embedding_dim,
            p2.embedding.embedding_dim,
            ranges.embedding_dim,
            eta,
            open_unit(rng),
        )?;
        c1.embedding.embedding_dim = e1;
        c2.embedding.embedding_dim = e2;
    }

    let aligned = p1.blocks.len().min(p2.blocks.len());
    for i in 0..aligned {
        if rng.random_bool(cfg.sbx_probability) {
            let (u_n, u_d) = (open_unit(rng), open_unit(rng));
            let (b1, b2) = recombine_blocks(&p1.blocks[i], &p2.blocks[i], ranges, eta, u_n, u_d)?;
            c1.blocks[i] = b1;
            c2.blocks[i] = b2;
        }
    }

    if rng.random_bool(cfg.sbx_probability) {
        c1.prediction.init = p2.prediction.init;
        c2.prediction.init = p1.prediction.init;
    }
    Ok((c1, c2))
}

/// Two-step mutation: polynomial mutation of every numeric gene (and uniform
/// resampling of init tags), each with probability `pm_probability`; then,
/// with probability `length_mutation_probability`, insertion of a fresh random
/// block or removal of an existing one at a uniform position. A length change
/// that would leave the length bounds is rejected.
pub fn mutate<R: Rng + ?Sized>(
    genome: &Genome,
    cfg: &OperatorConfig,
    ranges: &GenomeRanges,
    rng: &mut R,
) -> Result<Genome> {
    let eta = cfg.distribution_index;
    let p = cfg.pm_probability;
    let mut out = genome.clone();

    if rng.random_bool(p) {
        out.embedding.embedding_dim =
            pm_integer(out.embedding.embedding_dim, ranges.embedding_dim, eta, open_unit(rng))?;
    }
    for block in &mut out.blocks {
        if rng.random_bool(p) {
            block.neurons = pm_integer(block.neurons, ranges.neurons, eta, open_unit(rng))?;
        }
        if rng.random_bool(p) {
            block.dropout_rate = pm_dropout(block.dropout_rate, ranges.dropout, eta, open_unit(rng))?;
        }
        if rng.random_bool(p) {
            block.init = InitScheme::random(rng);
        }
    }
    if rng.random_bool(p) {
        out.prediction.init = InitScheme::random(rng);
    }

    if rng.random_bool(cfg.length_mutation_probability) {
        let grow = rng.random_bool(0.5);
        if grow {
            if out.len() < ranges.length.1 {
                let at = rng.random_range(0..=out.blocks.len());
                let fresh = ranges.random_block(rng);
                out.blocks.insert(at, fresh);
            }
        } else if out.len() > ranges.length.0 && !out.blocks.is_empty() {
            let at = rng.random_range(0..out.blocks.len());
            out.blocks.remove(at);
        }
    }
    Ok(out)
}

/// Index of the winner of a binary tournament between two distinct,
/// uniformly drawn members. Ties are broken uniformly at random.
pub fn tournament_index<R: Rng + ?Sized>(pop: &[ScoredIndividual], rng: &mut R) -> Result<usize> {
    if pop.is_empty() {
        return Err(Error::State("tournament over an empty population".into()));
    }
    for ind in pop {
        ind.fitness_or_err()?;
    }
    if pop.len() == 1 {
        return Ok(0);
    }
    let a = rng.random_range(0..pop.len());
    let mut b = rng.random_range(0..pop.len() - 1);
    if b >= a {
        b += 1;
    }
    let (fa, fb) = (pop[a].fitness_or_err()?, pop[b].fitness_or_err()?);
    Ok(if fa > fb {
        a
    } else if fb > fa {
        b
    } else if rng.random_bool(0.5) {
        a
    } else {
        b
    })
}

pub fn tournament_select<R: Rng + ?Sized>(pop: &[ScoredIndividual], rng: &mut R) -> Result<ScoredIndividual> {
    tournament_index(pop, rng).map(|i| pop[i].clone())
}

/// Builds the next population from `parents ∪ offspring`: the top
/// [`OperatorConfig::elite_count`] individuals are kept verbatim, remaining
/// slots are filled by binary tournaments over the non-elite remainder.
pub fn environmental_select<R: Rng + ?Sized>(
    parents: &[ScoredIndividual],
    offspring: &[ScoredIndividual],
    pop_size: usize,
    cfg: &OperatorConfig,
    rng: &mut R,
) -> Result<Vec<ScoredIndividual>> {
    if pop_size == 0 {
        return Err(Error::Argument("population size must be at least 1".into()));
    }
    let mut union: Vec<ScoredIndividual> = parents.iter().chain(offspring).cloned().collect();
    if union.is_empty() {
        return Err(Error::State("environmental selection over an empty union".into()));
    }
    for ind in &union {
        ind.fitness_or_err()?;
    }
    // Shuffle then stable-sort so equal-fitness ties are ordered at random.
    union.shuffle(rng);
    union.sort_by(|a, b| b.fitness.unwrap().total_cmp(&a.fitness.unwrap()));

    let elites = cfg.elite_count(pop_size).min(union.len());
    let rest = union.split_off(elites);
    let mut next = union;
    let pool: &[ScoredIndividual] = if rest.is_empty() { &next } else { &rest };
    let mut fill = Vec::with_capacity(pop_size - next.len());
    while next.len() + fill.len() < pop_size {
        let winner = tournament_index(pool, rng)?;
        fill.push(pool[winner].clone());
    }
    next.extend(fill);
    Ok(next)
}
