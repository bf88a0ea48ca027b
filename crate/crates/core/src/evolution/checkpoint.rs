//! Checkpoint directory layout:
//!
//! ```text
//! state.txt           manifest: generation, id counter, seed, one line per individual
//! genomes/NNNN.json   genome record of individual NNNN
//! fitness_cache.csv   hash,fitness,failed
//! history.csv         generation,best_ndcg,mean_ndcg
//! ```
//!
//! Writing the same state twice produces byte-identical files.

use std::fs;
use std::path::Path;

use super::{write_history_csv, CacheEntry, EvolutionConfig, EvolutionState, FitnessCache, GenerationStats};
use crate::genome;
use crate::operators::ScoredIndividual;
use crate::{Error, Result};

const MAGIC: &str = "evocf-checkpoint 1";
const STATE: &str = "state.txt";
const GENOMES: &str = "genomes";
const CACHE: &str = "fitness_cache.csv";
const HISTORY: &str = "history.csv";

fn genome_file(index: usize) -> String {
    format!("{GENOMES}/{index:04}.json")
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

pub fn checkpoint(state: &EvolutionState, cfg: &EvolutionConfig, dir: &Path) -> Result<()> {
    let genomes_dir = dir.join(GENOMES);
    fs::create_dir_all(&genomes_dir).map_err(|e| Error::io(&genomes_dir, e))?;
    for entry in fs::read_dir(&genomes_dir).map_err(|e| Error::io(&genomes_dir, e))? {
        let path = entry.map_err(|e| Error::io(&genomes_dir, e))?.path();
        fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
    }

    for (i, ind) in state.population.iter().enumerate() {
        let mut record = genome::serialize(&ind.genome);
        record.push('\n');
        write(dir, &genome_file(i), record.as_bytes())?;
    }

    let mut cache = String::from("hash,fitness,failed\n");
    for (h, e) in &state.cache.entries {
        cache.push_str(&format!("{h:016x},{},{}\n", e.fitness, e.failed as u8));
    }
    write(dir, CACHE, cache.as_bytes())?;

    let mut history = Vec::new();
    write_history_csv(&state.history, &mut history).expect("writing to memory");
    write(dir, HISTORY, &history)?;

    // The manifest goes last: a directory with a manifest is complete.
    let mut manifest = format!(
        "{MAGIC}\ngeneration = {}\nnext_id = {}\nseed = {}\npopulation_size = {}\n",
        state.generation,
        state.next_id,
        cfg.seed,
        state.population.len()
    );
    for (i, ind) in state.population.iter().enumerate() {
        let fitness = ind.fitness.map_or_else(|| "-".to_string(), |f| f.to_string());
        manifest.push_str(&format!(
            "individual {i} {} {fitness} {}\n",
            ind.genome.id,
            genome_file(i)
        ));
    }
    write(dir, STATE, manifest.as_bytes())
}

fn corrupt(dir: &Path, part: &str, why: impl std::fmt::Display) -> Error {
    Error::Checkpoint {
        dir: dir.to_path_buf(),
        missing: vec![format!("{part} (unreadable: {why})")],
    }
}

fn key_value<'a>(line: Option<&'a str>, key: &str) -> Option<&'a str> {
    let (k, v) = line?.split_once('=')?;
    (k.trim() == key).then(|| v.trim())
}

/// Reads a checkpoint and checks it against `cfg` (seed, population size).
pub fn resume_state(dir: &Path, cfg: &EvolutionConfig) -> Result<EvolutionState> {
    let mut missing = Vec::new();
    for part in [STATE, CACHE, HISTORY] {
        if !dir.join(part).is_file() {
            missing.push(part.to_string());
        }
    }
    if !missing.is_empty() {
        return Err(Error::Checkpoint {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    let read = |part: &str| fs::read_to_string(dir.join(part)).map_err(|e| corrupt(dir, part, e));

    let manifest = read(STATE)?;
    let mut lines = manifest.lines();
    if lines.next() != Some(MAGIC) {
        return Err(corrupt(dir, STATE, "bad header"));
    }
    let mut number = |key: &str| -> Result<u64> {
        key_value(lines.next(), key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| corrupt(dir, STATE, format!("expected {key}")))
    };
    let generation = number("generation")? as usize;
    let next_id = number("next_id")?;
    let seed = number("seed")?;
    let pop_size = number("population_size")? as usize;
    if seed != cfg.seed || pop_size != cfg.population_size {
        return Err(Error::Config(format!(
            "checkpoint was written with seed {seed} and population {pop_size}, config has seed {} and population {}",
            cfg.seed, cfg.population_size
        )));
    }

    let mut population = Vec::with_capacity(pop_size);
    let mut missing = Vec::new();
    for (i, line) in lines.enumerate() {
        let toks: Vec<&str> = line.split(' ').collect();
        let ["individual", index, id, fitness, file] = toks[..] else {
            return Err(corrupt(dir, STATE, format!("bad individual line {line:?}")));
        };
        if index.parse::<usize>().ok() != Some(i) {
            return Err(corrupt(dir, STATE, format!("individual {index} out of order")));
        }
        let id: u64 = id.parse().map_err(|_| corrupt(dir, STATE, format!("bad id {id:?}")))?;
        let fitness = match fitness {
            "-" => None,
            f => Some(
                f.parse::<f64>()
                    .map_err(|_| corrupt(dir, STATE, format!("bad fitness {f:?}")))?,
            ),
        };
        match fs::read_to_string(dir.join(file)) {
            Ok(text) => {
                let g = genome::deserialize(&text).map_err(|e| corrupt(dir, file, e))?;
                population.push(ScoredIndividual {
                    genome: g.with_id(id),
                    fitness,
                });
            }
            Err(_) => missing.push(file.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Checkpoint {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    if population.len() != pop_size {
        return Err(corrupt(
            dir,
            STATE,
            format!("lists {} individuals, expected {pop_size}", population.len()),
        ));
    }

    let mut cache = FitnessCache::default();
    for line in read(CACHE)?.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let parsed = match fields[..] {
            [h, f, failed] => u64::from_str_radix(h, 16)
                .ok()
                .zip(f.parse::<f64>().ok())
                .zip(match failed {
                    "0" => Some(false),
                    "1" => Some(true),
                    _ => None,
                }),
            _ => None,
        };
        let ((h, fitness), failed) = parsed.ok_or_else(|| corrupt(dir, CACHE, format!("bad row {line:?}")))?;
        cache.entries.insert(h, CacheEntry { fitness, failed });
    }

    let mut history = Vec::new();
    for line in read(HISTORY)?.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let row = match fields[..] {
            [g, b, m] => match (g.parse(), b.parse(), m.parse()) {
                (Ok(generation), Ok(best), Ok(mean)) => Some(GenerationStats { generation, best, mean }),
                _ => None,
            },
            _ => None,
        };
        history.push(row.ok_or_else(|| corrupt(dir, HISTORY, format!("bad row {line:?}")))?);
    }
    if history.len() != generation {
        return Err(corrupt(
            dir,
            HISTORY,
            format!("{} rows for generation {generation}", history.len()),
        ));
    }

    Ok(EvolutionState {
        generation,
        population,
        cache,
        history,
        next_id,
    })
}
