//! Planted low-rank interaction logs.
//!
//! Users and items get Gaussian latent factors; each user interacts with a
//! random number of items drawn without replacement with probability
//! proportional to `exp(sharpness * <u, v> / sqrt(rank) + popularity * b_i)`
//! (Gumbel top-k). Timestamps follow a random per-user order, so held-out
//! items come from the same preference distribution as training items.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::evaldata::{leave_one_out_split, Interaction, InteractionDataset};
use crate::seed::{rng_for, Rng as SeedRng};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub rank: usize,
    pub min_per_user: usize,
    pub max_per_user: usize,
    /// Scale of the latent-factor affinity.
    pub sharpness: f64,
    /// Scale of the per-item popularity bias.
    pub popularity: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            num_users: 200,
            num_items: 100,
            rank: 4,
            min_per_user: 8,
            max_per_user: 24,
            sharpness: 3.0,
            popularity: 0.5,
            seed: 0,
        }
    }
}

fn gaussian_rows(rows: usize, cols: usize, rng: &mut SeedRng) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

pub fn planted_interactions(cfg: &PlantedConfig) -> Vec<Interaction> {
    let mut rng = rng_for(cfg.seed, 0x5EED, 0);
    let users = gaussian_rows(cfg.num_users, cfg.rank, &mut rng);
    let items = gaussian_rows(cfg.num_items, cfg.rank, &mut rng);
    let bias: Vec<f64> = (0..cfg.num_items).map(|_| StandardNormal.sample(&mut rng)).collect();
    let scale = cfg.sharpness / (cfg.rank.max(1) as f64).sqrt();
    let max = cfg.max_per_user.min(cfg.num_items);
    let min = cfg.min_per_user.min(max);

    let mut out = Vec::new();
    for (u, uf) in users.iter().enumerate() {
        let count = rng.random_range(min..=max);
        let mut keyed: Vec<(f64, usize)> = items
            .iter()
            .enumerate()
            .map(|(i, vf)| {
                let affinity: f64 = uf.iter().zip(vf).map(|(a, b)| a * b).sum();
                let g: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                (scale * affinity + cfg.popularity * bias[i] - (-g.ln()).ln(), i)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut chosen: Vec<usize> = keyed.into_iter().take(count).map(|(_, i)| i).collect();
        chosen.shuffle(&mut rng);
        for (t, item) in chosen.into_iter().enumerate() {
            out.push(Interaction {
                user: u,
                item,
                timestamp: Some(1_000_000 + t as i64),
            });
        }
    }
    out
}

/// Planted log split leave-one-out with `negatives` evaluation negatives.
pub fn planted_dataset(cfg: &PlantedConfig, negatives: usize) -> Result<InteractionDataset> {
    let log = planted_interactions(cfg);
    let mut rng = rng_for(cfg.seed, 0x5EED, 1);
    leave_one_out_split(&log, cfg.num_users, cfg.num_items, negatives, &mut rng)
}

/// Writes `user::item::rating::timestamp` lines with 1-based ids and rating 5.
pub fn write_movielens_dat<W: Write>(log: &[Interaction], mut out: W) -> std::io::Result<()> {
    for it in log {
        writeln!(
            out,
            "{}::{}::5::{}",
            it.user + 1,
            it.item + 1,
            it.timestamp.unwrap_or(0)
        )?;
    }
    Ok(())
}
