//! Generational loop.
//!
//! Each generation evaluates the current population (cache misses only),
//! breeds as many offspring as there are parents through tournament-paired
//! crossover and mutation, evaluates them, and selects the next population
//! from the union. Every random stream is derived from the master seed, the
//! generation index or the genome structure, so a run is a pure function of
//! (config, dataset, seed) regardless of evaluation width or interruptions.

mod checkpoint;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;

pub use checkpoint::{checkpoint, resume_state};

use crate::evaldata::{evaluate_model, evaluate_sweep, EvalResult, InteractionDataset, Split};
use crate::genome::{random_genome, validate, Genome, GenomeRanges};
use crate::network::{decode, fit_proxy, Network, TrainConfig};
use crate::operators::{crossover, environmental_select, mutate, tournament_index, OperatorConfig, ScoredIndividual};
use crate::seed::{derive_seed, rng_for, STREAM_FITNESS, STREAM_GENERATION, STREAM_INIT_POPULATION};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub operators: OperatorConfig,
    pub ranges: GenomeRanges,
    pub train: TrainConfig,
    /// Cutoff for the fitness metric (validation NDCG@K).
    pub top_k: usize,
    /// Epoch budget for training the winning genome after the search.
    pub final_epochs: usize,
    pub seed: u64,
    /// Written after every generation when set.
    pub checkpoint_dir: Option<PathBuf>,
    /// Concurrent fitness evaluations.
    pub jobs: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 16,
            max_generations: 20,
            operators: OperatorConfig::default(),
            ranges: GenomeRanges::default(),
            train: TrainConfig::default(),
            top_k: 10,
            final_epochs: 20,
            seed: 0,
            checkpoint_dir: None,
            jobs: 1,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config(format!(
                "population_size = {} must be at least 2",
                self.population_size
            )));
        }
        if self.max_generations < 1 {
            return Err(Error::Config("max_generations must be at least 1".into()));
        }
        if self.top_k < 1 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if self.jobs < 1 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.operators.validate()?;
        self.ranges.validate()?;
        self.train.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

/// `generation,best_ndcg,mean_ndcg` table.
pub fn write_history_csv<W: Write>(history: &[GenerationStats], mut out: W) -> std::io::Result<()> {
    writeln!(out, "generation,best_ndcg,mean_ndcg")?;
    for h in history {
        writeln!(out, "{},{},{}", h.generation, h.best, h.mean)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheEntry {
    pub fitness: f64,
    /// Training hit a numeric failure; fitness was forced to 0.
    pub failed: bool,
}

/// Fitness values keyed by [`Genome::structural_hash`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitnessCache {
    pub entries: BTreeMap<u64, CacheEntry>,
}

impl FitnessCache {
    pub fn get(&self, genome: &Genome) -> Option<CacheEntry> {
        self.entries.get(&genome.structural_hash()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub generation: usize,
    pub population: Vec<ScoredIndividual>,
    pub cache: FitnessCache,
    /// One entry per completed generation: stats of the population it started from.
    pub history: Vec<GenerationStats>,
    pub next_id: u64,
}

/// Seed of the training stream for a genome: depends on structure only, so
/// identical genomes always receive identical fitness.
pub fn fitness_seed(master: u64, genome: &Genome) -> u64 {
    derive_seed(master, STREAM_FITNESS, genome.structural_hash())
}

/// Fitness of one genome: validation NDCG@K after proxy training a fresh decode.
pub fn evaluate_genome(
    genome: &Genome,
    ds: &InteractionDataset,
    train: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<f64> {
    use rand::SeedableRng;
    let mut rng = crate::seed::Rng::seed_from_u64(seed);
    let mut net = decode(genome, ds.num_users, ds.num_items, &mut rng)?;
    fit_proxy(&mut net, ds, train, &mut rng)?;
    let result = evaluate_model(&net, ds, Split::Validation, k)?;
    if !result.ndcg.is_finite() {
        return Err(Error::Numeric("non-finite NDCG".into()));
    }
    Ok(result.ndcg)
}

/// Outcome of [`evaluate_population`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluationReport {
    /// Genomes that were actually trained (cache misses), in order.
    pub trained: Vec<Genome>,
    pub failures: usize,
}

/// Fills in the fitness of every unevaluated individual. Cache hits skip
/// training; each distinct missing structure is trained once. Every genome
/// is checked against `cfg.ranges` before training.
pub fn evaluate_population(
    pop: &mut [ScoredIndividual],
    ds: &InteractionDataset,
    cfg: &EvolutionConfig,
    cache: &mut FitnessCache,
) -> Result<EvaluationReport> {
    let mut misses: Vec<(u64, Genome)> = Vec::new();
    for ind in pop.iter() {
        let violations = validate(&ind.genome, &cfg.ranges);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::State(format!(
                "genome {} is invalid: {}",
                ind.genome.id,
                list.join(", ")
            )));
        }
        let h = ind.genome.structural_hash();
        if ind.fitness.is_none() && !cache.entries.contains_key(&h) && !misses.iter().any(|(m, _)| *m == h) {
            misses.push((h, ind.genome.clone()));
        }
    }

    let run = |(_, g): &(u64, Genome)| evaluate_genome(g, ds, &cfg.train, cfg.top_k, fitness_seed(cfg.seed, g));
    let results: Vec<Result<f64>> = if cfg.jobs > 1 && misses.len() > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} evaluation threads: {e}", cfg.jobs)))?;
        pool.install(|| misses.par_iter().map(run).collect())
    } else {
        misses.iter().map(run).collect()
    };

    let mut report = EvaluationReport::default();
    for ((h, genome), result) in misses.into_iter().zip(results) {
        let entry = match result {
            Ok(f) => CacheEntry {
                fitness: f,
                failed: false,
            },
            Err(Error::Numeric(_)) => {
                report.failures += 1;
                CacheEntry {
                    fitness: 0.0,
                    failed: true,
                }
            }
            Err(other) => return Err(other),
        };
        cache.entries.insert(h, entry);
        report.trained.push(genome);
    }
    for ind in pop.iter_mut() {
        if ind.fitness.is_none() {
            ind.fitness = Some(cache.get(&ind.genome).expect("every miss was just evaluated").fitness);
        }
    }
    Ok(report)
}

fn stats(generation: usize, pop: &[ScoredIndividual]) -> GenerationStats {
    let fits: Vec<f64> = pop.iter().map(|s| s.fitness.expect("evaluated")).collect();
    GenerationStats {
        generation,
        best: fits.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean: fits.iter().sum::<f64>() / fits.len() as f64,
    }
}

/// First individual with the highest fitness.
pub fn best_of(pop: &[ScoredIndividual]) -> Option<&ScoredIndividual> {
    pop.iter().fold(None, |best: Option<&ScoredIndividual>, s| match best {
        Some(b) if b.fitness >= s.fitness => Some(b),
        _ => Some(s),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionOutcome {
    pub best: ScoredIndividual,
    pub history: Vec<GenerationStats>,
    pub final_population: Vec<ScoredIndividual>,
}

/// A run in progress.
pub struct Evolution<'a> {
    cfg: EvolutionConfig,
    ds: &'a InteractionDataset,
    state: EvolutionState,
    trained: Vec<Genome>,
}

impl<'a> Evolution<'a> {
    /// Draws the initial population (ids 0..population_size) and writes a
    /// generation-0 checkpoint when a checkpoint directory is configured.
    pub fn new(cfg: EvolutionConfig, ds: &'a InteractionDataset) -> Result<Self> {
        cfg.validate()?;
        if ds.num_users == 0 || ds.num_train_interactions() == 0 {
            return Err(Error::Data("dataset has no training interactions".into()));
        }
        let mut rng = rng_for(cfg.seed, STREAM_INIT_POPULATION, 0);
        let population = (0..cfg.population_size)
            .map(|i| random_genome(&cfg.ranges, &mut rng).map(|g| ScoredIndividual::unevaluated(g.with_id(i as u64))))
            .collect::<Result<Vec<_>>>()?;
        let state = EvolutionState {
            generation: 0,
            population,
            cache: FitnessCache::default(),
            history: Vec::new(),
            next_id: cfg.population_size as u64,
        };
        let evo = Evolution {
            cfg,
            ds,
            state,
            trained: Vec::new(),
        };
        evo.save_checkpoint()?;
        Ok(evo)
    }

    /// Continues from the checkpoint in `cfg.checkpoint_dir`.
    pub fn resume(cfg: EvolutionConfig, ds: &'a InteractionDataset) -> Result<Self> {
        cfg.validate()?;
        let dir = cfg
            .checkpoint_dir
            .clone()
            .ok_or_else(|| Error::Config("resume needs a checkpoint directory".into()))?;
        let state = resume_state(&dir, &cfg)?;
        Ok(Evolution {
            cfg,
            ds,
            state,
            trained: Vec::new(),
        })
    }

    pub fn state(&self) -> &EvolutionState {
        &self.state
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.cfg
    }

    /// Every genome trained by this process so far.
    pub fn trained_genomes(&self) -> &[Genome] {
        &self.trained
    }

    pub fn is_finished(&self) -> bool {
        self.state.generation >= self.cfg.max_generations
    }

    fn save_checkpoint(&self) -> Result<()> {
        match &self.cfg.checkpoint_dir {
            Some(dir) => checkpoint(&self.state, &self.cfg, dir),
            None => Ok(()),
        }
    }

    fn evaluate(&mut self, pop: &mut [ScoredIndividual]) -> Result<()> {
        let report = evaluate_population(pop, self.ds, &self.cfg, &mut self.state.cache)?;
        self.trained.extend(report.trained);
        Ok(())
    }

    /// Runs one generation.
    pub fn step(&mut self) -> Result<()> {
        let t = self.state.generation;
        let mut parents = std::mem::take(&mut self.state.population);
        self.evaluate(&mut parents)?;
        self.state.history.push(stats(t, &parents));

        let cfg = &self.cfg;
        let mut rng = rng_for(cfg.seed, STREAM_GENERATION, t as u64);
        let mut offspring = Vec::with_capacity(cfg.population_size);
        while offspring.len() < cfg.population_size {
            let a = tournament_index(&parents, &mut rng)?;
            let b = tournament_index(&parents, &mut rng)?;
            let (c1, c2) = crossover(
                &parents[a].genome,
                &parents[b].genome,
                &cfg.operators,
                &cfg.ranges,
                &mut rng,
            )?;
            for child in [c1, c2] {
                if offspring.len() == cfg.population_size {
                    break;
                }
                let child = mutate(&child, &cfg.operators, &cfg.ranges, &mut rng)?.with_id(self.state.next_id);
                self.state.next_id += 1;
                offspring.push(ScoredIndividual::unevaluated(child));
            }
        }
        self.evaluate(&mut offspring)?;

        let cfg = &self.cfg;
        self.state.population =
            environmental_select(&parents, &offspring, cfg.population_size, &cfg.operators, &mut rng)?;
        self.state.generation += 1;
        self.save_checkpoint()
    }

    /// Steps until `generation` generations are complete (capped at the configured maximum).
    pub fn run_until(&mut self, generation: usize) -> Result<()> {
        while self.state.generation < generation.min(self.cfg.max_generations) {
            self.step()?;
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<EvolutionOutcome> {
        self.run_until(self.cfg.max_generations)?;
        self.outcome()
    }

    /// Best individual of the current population plus the history so far.
    pub fn outcome(&mut self) -> Result<EvolutionOutcome> {
        let mut pop = std::mem::take(&mut self.state.population);
        let evaluated = self.evaluate(&mut pop);
        self.state.population = pop;
        evaluated?;
        let best = best_of(&self.state.population)
            .expect("population is non-empty")
            .clone();
        Ok(EvolutionOutcome {
            best,
            history: self.state.history.clone(),
            final_population: self.state.population.clone(),
        })
    }
}

/// Runs the full search and returns the best individual of the final population.
pub fn evolve(cfg: EvolutionConfig, ds: &InteractionDataset) -> Result<EvolutionOutcome> {
    Evolution::new(cfg, ds)?.run()
}

/// Trains a fresh decode of `genome` for `epochs` epochs and reports
/// HR@K / NDCG@K on the test split for K = 1..=k_max.
pub fn final_train(
    genome: &Genome,
    ds: &InteractionDataset,
    train: &TrainConfig,
    epochs: usize,
    seed: u64,
    k_max: usize,
) -> Result<(Network, Vec<EvalResult>)> {
    use rand::SeedableRng;
    let mut rng = crate::seed::Rng::seed_from_u64(seed);
    let mut net = decode(genome, ds.num_users, ds.num_items, &mut rng)?;
    let cfg = TrainConfig {
        proxy_epochs: epochs,
        ..train.clone()
    };
    fit_proxy(&mut net, ds, &cfg, &mut rng)?;
    let sweep = evaluate_sweep(&net, ds, Split::Test, k_max)?;
    Ok((net, sweep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{BlockGene, InitScheme};
    use crate::synthetic::{planted_dataset, PlantedConfig};

    fn small_cfg(seed: u64) -> EvolutionConfig {
        EvolutionConfig {
            population_size: 4,
            max_generations: 2,
            ranges: GenomeRanges {
                length: (3, 5),
                neurons: (8, 24),
                dropout: (0.0, 0.5),
                embedding_dim: (4, 8),
            },
            train: TrainConfig {
                proxy_epochs: 1,
                batch_size: 64,
                ..TrainConfig::default()
            },
            seed,
            ..EvolutionConfig::default()
        }
    }

    fn toy() -> InteractionDataset {
        planted_dataset(
            &PlantedConfig {
                num_users: 30,
                num_items: 40,
                min_per_user: 4,
                max_per_user: 8,
                ..PlantedConfig::default()
            },
            20,
        )
        .unwrap()
    }

    fn genome(neurons: usize) -> Genome {
        Genome::new(
            4,
            vec![BlockGene {
                neurons,
                dropout_rate: 0.1,
                init: InitScheme::Xu,
            }],
            InitScheme::Kn,
        )
    }

    #[test]
    fn config_defaults_follow_parameter_table() {
        let c = EvolutionConfig::default();
        assert_eq!((c.population_size, c.max_generations, c.top_k), (16, 20, 10));
        assert!(c.validate().is_ok());
        assert!(EvolutionConfig {
            population_size: 1,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(EvolutionConfig {
            max_generations: 0,
            ..c
        }
        .validate()
        .is_err());
    }

    #[test]
    fn cache_hits_skip_training() {
        let ds = toy();
        let cfg = small_cfg(1);
        let mut cache = FitnessCache::default();
        let mut pop = vec![
            ScoredIndividual::unevaluated(genome(8).with_id(1)),
            ScoredIndividual::unevaluated(genome(8).with_id(2)),
            ScoredIndividual::unevaluated(genome(12).with_id(3)),
        ];
        let report = evaluate_population(&mut pop, &ds, &cfg, &mut cache).unwrap();
        assert_eq!(report.trained.len(), 2);
        assert_eq!(pop[0].fitness, pop[1].fitness);
        for ind in &mut pop {
            ind.fitness = None;
        }
        let again = evaluate_population(&mut pop, &ds, &cfg, &mut cache).unwrap();
        assert!(again.trained.is_empty());
        assert!(pop.iter().all(|s| (0.0..=1.0).contains(&s.fitness.unwrap())));
    }

    #[test]
    fn invalid_genomes_are_refused() {
        let ds = toy();
        let cfg = small_cfg(1);
        let mut pop = vec![ScoredIndividual::unevaluated(genome(300))];
        let err = evaluate_population(&mut pop, &ds, &cfg, &mut FitnessCache::default()).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn evaluation_width_does_not_change_fitness() {
        let ds = toy();
        let serial = evolve(small_cfg(3), &ds).unwrap();
        let parallel = evolve(
            EvolutionConfig {
                jobs: 3,
                ..small_cfg(3)
            },
            &ds,
        )
        .unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn history_and_population_invariants() {
        let ds = toy();
        let mut evo = Evolution::new(
            EvolutionConfig {
                max_generations: 3,
                ..small_cfg(5)
            },
            &ds,
        )
        .unwrap();
        while !evo.is_finished() {
            evo.step().unwrap();
            assert_eq!(evo.state().population.len(), 4);
            assert_eq!(evo.state().history.len(), evo.state().generation);
        }
        let out = evo.outcome().unwrap();
        for w in out.history.windows(2) {
            assert!(w[1].best >= w[0].best);
        }
        assert!(out.best.fitness.unwrap() >= out.history.last().unwrap().best);
    }

    #[test]
    fn disabled_operators_return_best_initial() {
        let ds = toy();
        let cfg = EvolutionConfig {
            max_generations: 1,
            operators: OperatorConfig::disabled(),
            ..small_cfg(8)
        };
        let out = evolve(cfg, &ds).unwrap();
        assert_eq!(out.best.fitness.unwrap(), out.history[0].best);
    }

    #[test]
    fn final_train_with_proxy_budget_matches_direct_run() {
        use rand::SeedableRng;
        let ds = toy();
        let cfg = small_cfg(0);
        let g = genome(16);
        let (_, sweep) = final_train(&g, &ds, &cfg.train, cfg.train.proxy_epochs, 99, 10).unwrap();
        let mut rng = crate::seed::Rng::seed_from_u64(99);
        let mut net = decode(&g, ds.num_users, ds.num_items, &mut rng).unwrap();
        fit_proxy(&mut net, &ds, &cfg.train, &mut rng).unwrap();
        let direct = evaluate_model(&net, &ds, Split::Test, 10).unwrap();
        assert_eq!(sweep.len(), 10);
        assert_eq!(sweep[9], direct);
    }
}
