//! evocf: evolve feed-forward collaborative-filtering networks.
//!
//! ```text
//! evocf prepare --input FILE --format movielens_dat|tsv_triples --out DIR
//! evocf evolve  --data DIR [--config FILE] --out RUNDIR [--resume]
//! evocf report  --run RUNDIR --data DIR [--k-max 10]
//! evocf synth   --out FILE
//! ```
//!
//! Exit status: 0 success, 1 usage/config, 2 data/parse, 3 numeric, 4 state.

mod manifest;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use evocf::config::{apply_kv, to_kv_string};
use evocf::evaldata::store::{load_prepared, save_prepared, PrepareSummary};
use evocf::evaldata::{
    leave_one_out_split, load_interactions, write_sweep_csv, InteractionFormat, DEFAULT_EVAL_NEGATIVES,
};
use evocf::evolution::{final_train, write_history_csv, Evolution, EvolutionConfig};
use evocf::genome;
use evocf::network::save_model;
use evocf::seed::{derive_seed, rng_for, STREAM_FINAL_TRAIN, STREAM_SPLIT};
use evocf::synthetic::{planted_interactions, write_movielens_dat, PlantedConfig};
use evocf::{Error, Result};

use manifest::{dataset_fingerprint, file_sha256, Artifact, DatasetRef, RunManifest, RunStatus, Seeds, Timings};

const CHECKPOINT_DIR: &str = "checkpoint";
const BEST_GENOME_FILE: &str = "best_genome.json";
const HISTORY_FILE: &str = "history.csv";

#[derive(Parser, Debug)]
#[command(
    name = "evocf",
    version,
    about = "Evolve feed-forward collaborative-filtering networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reindex an interaction log, split it leave-one-out and sample evaluation negatives.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: InteractionFormat,
        #[arg(long, default_value_t = DEFAULT_EVAL_NEGATIVES)]
        negatives: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the genetic search over network genomes.
    Evolve {
        #[arg(long)]
        data: PathBuf,
        /// `key = value` file; missing keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config file's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the run directory's latest checkpoint.
        #[arg(long)]
        resume: bool,
        /// Worker threads for fitness evaluation. Does not change results.
        #[arg(long)]
        jobs: Option<usize>,
        /// Stop after this many completed generations, leaving a resumable run.
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Final-train the best genome of a run and print HR@K / NDCG@K on the test split.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also save the trained network.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write a planted low-rank interaction log in `user::item::rating::timestamp` form.
    Synth {
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 100)]
        items: usize,
        #[arg(long, default_value_t = 4)]
        rank: usize,
        #[arg(long, default_value_t = 8)]
        min_per_user: usize,
        #[arg(long, default_value_t = 24)]
        max_per_user: usize,
        #[arg(long, default_value_t = 3.0)]
        sharpness: f64,
        #[arg(long, default_value_t = 0.5)]
        popularity: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_text(path: &Path, text: &[u8]) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_prepare(input: &Path, format: InteractionFormat, negatives: usize, seed: u64, out: &Path) -> Result<()> {
    let loaded = load_interactions(input, format)?;
    let mut rng = rng_for(seed, STREAM_SPLIT, 0);
    let ds = leave_one_out_split(
        &loaded.interactions,
        loaded.num_users(),
        loaded.num_items(),
        negatives,
        &mut rng,
    )?;
    let violations = ds.integrity_violations();
    if !violations.is_empty() {
        return Err(Error::Data(format!(
            "split failed its integrity check: {}",
            violations.join("; ")
        )));
    }
    let summary = PrepareSummary {
        source: input.display().to_string(),
        format: format.to_string(),
        seed,
        negatives,
        interactions: loaded.interactions.len(),
        loaded_users: loaded.num_users(),
        num_items: loaded.num_items(),
        retained_users: ds.num_users,
        dropped_users: ds.dropped_users,
    };
    save_prepared(out, &loaded, &ds, &summary)?;
    println!(
        "prepared {} interactions: {} users kept, {} dropped (fewer than 3 interactions), {} items",
        summary.interactions, summary.retained_users, summary.dropped_users, summary.num_items
    );
    Ok(())
}

fn resolve_config(config: Option<&Path>, seed: Option<u64>, jobs: Option<usize>) -> Result<EvolutionConfig> {
    let text = match config {
        Some(path) => fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
        None => String::new(),
    };
    let mut cfg = apply_kv(&EvolutionConfig::default(), &text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Config snapshot with the thread count normalised, for comparing runs.
fn comparable_snapshot(cfg: &EvolutionConfig) -> String {
    to_kv_string(&EvolutionConfig { jobs: 1, ..cfg.clone() })
}

fn is_nonempty_dir(path: &Path) -> bool {
    fs::read_dir(path).map(|mut d| d.next().is_some()).unwrap_or(false)
}

fn artifact(run: &Path, name: &str) -> Result<Artifact> {
    Ok(Artifact {
        path: name.to_string(),
        sha256: file_sha256(&run.join(name))?,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_evolve(
    data: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    resume: bool,
    jobs: Option<usize>,
    stop_after: Option<usize>,
) -> Result<()> {
    let mut cfg = resolve_config(config, seed, jobs)?;
    let fingerprint = dataset_fingerprint(data)?;

    let previous = if resume {
        let m = RunManifest::read(out)?;
        if m.status == RunStatus::Complete {
            return Err(Error::State(format!("run in {} is already complete", out.display())));
        }
        let snapshot = apply_kv(&EvolutionConfig::default(), &m.config)?;
        // Without an explicit config the run continues with its own snapshot.
        if config.is_none() {
            cfg = EvolutionConfig {
                seed: seed.unwrap_or(snapshot.seed),
                jobs: jobs.unwrap_or(snapshot.jobs),
                ..snapshot.clone()
            };
        }
        if comparable_snapshot(&snapshot) != comparable_snapshot(&cfg) {
            return Err(Error::Config("configuration differs from the run being resumed".into()));
        }
        if m.dataset.fingerprint != fingerprint {
            return Err(Error::Config(format!(
                "{} is not the dataset this run was started on",
                data.display()
            )));
        }
        Some(m)
    } else {
        if is_nonempty_dir(out) {
            return Err(Error::Argument(format!(
                "{} is not empty; pass --resume to continue a run or choose a new directory",
                out.display()
            )));
        }
        None
    };

    let ds = load_prepared(data)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.checkpoint_dir = Some(out.join(CHECKPOINT_DIR));

    let mut manifest = RunManifest {
        tool: "evocf".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        status: RunStatus::Running,
        config: to_kv_string(&cfg),
        dataset: DatasetRef {
            dir: data.display().to_string(),
            fingerprint,
        },
        seeds: Seeds {
            master: cfg.seed,
            derivation: "splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index); streams: 1 initial population, 2 generation t, 3 fitness by structural hash, 4 final training by structural hash, 5 data split".into(),
            final_train: None,
        },
        artifacts: BTreeMap::new(),
        timings: Timings {
            evolve_seconds: previous.as_ref().map_or(0.0, |m| m.timings.evolve_seconds),
            generations_completed: 0,
        },
    };
    manifest.write(out)?;

    let started = Instant::now();
    let mut evo = if resume {
        Evolution::resume(cfg.clone(), &ds)?
    } else {
        Evolution::new(cfg.clone(), &ds)?
    };
    let total = cfg.max_generations;
    eprintln!(
        "evolving: population {}, {} generations, starting at generation {}",
        cfg.population_size,
        total,
        evo.state().generation
    );
    while !evo.is_finished() {
        if stop_after.is_some_and(|n| evo.state().generation >= n) {
            break;
        }
        evo.step()?;
        let last = evo.state().history.last().expect("a step records history");
        eprintln!(
            "generation {:>3}/{total}: best {:.4} mean {:.4} ({} genomes cached)",
            last.generation + 1,
            last.best,
            last.mean,
            evo.state().cache.len()
        );
    }
    manifest.timings.evolve_seconds += started.elapsed().as_secs_f64();
    manifest.timings.generations_completed = evo.state().generation;

    if !evo.is_finished() {
        manifest.status = RunStatus::Interrupted;
        manifest.write(out)?;
        eprintln!(
            "stopped after generation {}; continue with --resume",
            evo.state().generation
        );
        return Ok(());
    }

    let outcome = evo.outcome()?;
    let best = &outcome.best;
    let mut record = genome::serialize(&best.genome);
    record.push('\n');
    write_text(&out.join(BEST_GENOME_FILE), record.as_bytes())?;
    let mut history = Vec::new();
    write_history_csv(&outcome.history, &mut history).expect("writing to memory");
    write_text(&out.join(HISTORY_FILE), &history)?;

    manifest.status = RunStatus::Complete;
    manifest.seeds.final_train = Some(derive_seed(cfg.seed, STREAM_FINAL_TRAIN, best.genome.structural_hash()));
    for name in [BEST_GENOME_FILE, HISTORY_FILE] {
        manifest.artifacts.insert(name.to_string(), artifact(out, name)?);
    }
    manifest.artifacts.insert(
        CHECKPOINT_DIR.to_string(),
        Artifact {
            path: format!("{CHECKPOINT_DIR}/"),
            sha256: file_sha256(&out.join(CHECKPOINT_DIR).join("state.txt"))?,
        },
    );
    manifest.write(out)?;

    println!(
        "best genome {} (validation NDCG@{} {:.4}): {}",
        best.genome.id,
        cfg.top_k,
        best.fitness.unwrap_or(0.0),
        record.trim_end()
    );
    Ok(())
}

fn cmd_report(run: &Path, data: &Path, k_max: usize, out: Option<&Path>, model: Option<&Path>) -> Result<()> {
    if k_max == 0 {
        return Err(Error::Argument("--k-max must be at least 1".into()));
    }
    let m = RunManifest::read(run)?;
    let genome_path = run.join(BEST_GENOME_FILE);
    if m.status != RunStatus::Complete || !genome_path.is_file() {
        return Err(Error::State(format!(
            "{} has no best genome; finish the run first",
            run.display()
        )));
    }
    let cfg = apply_kv(&EvolutionConfig::default(), &m.config)?;
    cfg.validate()?;
    if dataset_fingerprint(data)? != m.dataset.fingerprint {
        return Err(Error::Config(format!(
            "{} is not the dataset this run was evolved on",
            data.display()
        )));
    }
    let ds = load_prepared(data)?;
    let text = fs::read_to_string(&genome_path).map_err(|e| Error::io(&genome_path, e))?;
    let best = genome::deserialize(&text)?;

    let seed = derive_seed(cfg.seed, STREAM_FINAL_TRAIN, best.structural_hash());
    eprintln!("final training for {} epochs (seed {seed})", cfg.final_epochs);
    let (net, sweep) = final_train(&best, &ds, &cfg.train, cfg.final_epochs, seed, k_max)?;
    for pair in sweep.windows(2) {
        if pair[1].hr < pair[0].hr || pair[1].ndcg < pair[0].ndcg {
            return Err(Error::Numeric(format!(
                "metrics decrease between K = {} and K = {}",
                pair[0].k, pair[1].k
            )));
        }
    }

    let mut table = Vec::new();
    write_sweep_csv(&sweep, &mut table).expect("writing to memory");
    match out {
        Some(path) => write_text(path, &table)?,
        None => std::io::stdout()
            .write_all(&table)
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    if let Some(path) = model {
        save_model(&net, path)?;
    }
    Ok(())
}

fn cmd_synth(cfg: &PlantedConfig, out: &Path) -> Result<()> {
    let log = planted_interactions(cfg);
    let mut buf = Vec::new();
    write_movielens_dat(&log, &mut buf).expect("writing to memory");
    write_text(out, &buf)?;
    eprintln!("wrote {} interactions for {} users", log.len(), cfg.num_users);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare {
            input,
            format,
            negatives,
            seed,
            out,
        } => cmd_prepare(&input, format, negatives, seed, &out),
        Command::Evolve {
            data,
            config,
            seed,
            out,
            resume,
            jobs,
            stop_after,
        } => cmd_evolve(&data, config.as_deref(), seed, &out, resume, jobs, stop_after),
        Command::Report {
            run,
            data,
            k_max,
            out,
            model,
        } => cmd_report(&run, &data, k_max, out.as_deref(), model.as_deref()),
        Command::Synth {
            users,
            items,
            rank,
            min_per_user,
            max_per_user,
            sharpness,
            popularity,
            seed,
            out,
        } => {
            if users == 0 || items == 0 || min_per_user > max_per_user {
                return Err(Error::Argument(
                    "need users, items > 0 and min-per-user <= max-per-user".into(),
                ));
            }
            let cfg = PlantedConfig {
                num_users: users,
                num_items: items,
                rank,
                min_per_user,
                max_per_user,
                sharpness,
                popularity,
                seed,
            };
            cmd_synth(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
