use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Gradients, Network};
use crate::evaldata::InteractionDataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub proxy_epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            proxy_epochs: 2,
            batch_size: 256,
            negatives_per_positive: 4,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate = {} must be positive and finite",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::Config("negatives_per_positive must be positive".into()));
        }
        Ok(())
    }
}

/// One labelled (user, item) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub user: usize,
    pub item: usize,
    pub label: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Adam update of `params` starting at `offset` within this moment buffer.
    fn step(&mut self, offset: usize, params: &mut [f64], grads: &[f64], lr_t: f64) {
        let m = &mut self.m[offset..offset + params.len()];
        let v = &mut self.v[offset..offset + params.len()];
        for k in 0..params.len() {
            let g = grads[k];
            m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
            v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
            params[k] -= lr_t * m[k] / (v[k].sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Debug, Clone)]
struct AdamState {
    step: i32,
    users: Moments,
    items: Moments,
    layers: Vec<(Moments, Moments)>,
}

/// Optimizer state for one network. Embedding rows are updated only when
/// they appear in a batch (lazy Adam on the tables, dense Adam elsewhere).
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    adam: Option<AdamState>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, net: &Network) -> Result<Self> {
        cfg.validate()?;
        let adam = (cfg.optimizer == OptimizerKind::Adam).then(|| AdamState {
            step: 0,
            users: Moments::new(net.user_table.len()),
            items: Moments::new(net.item_table.len()),
            layers: net
                .layers
                .iter()
                .map(|l| (Moments::new(l.weights.len()), Moments::new(l.bias.len())))
                .collect(),
        });
        Ok(Trainer { cfg, adam })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// One optimizer step on `batch`; returns the batch's mean BCE before the update.
    pub fn train_step<R: Rng + ?Sized>(&mut self, net: &mut Network, batch: &[Sample], rng: &mut R) -> Result<f64> {
        if let Some(s) = batch.iter().find(|s| s.label != 0.0 && s.label != 1.0) {
            return Err(Error::Argument(format!("label {} is not binary", s.label)));
        }
        let (loss, grads) = net.loss_and_gradients(batch, true, rng)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss} during training")));
        }
        self.apply(net, &grads);
        Ok(loss)
    }

    fn apply(&mut self, net: &mut Network, grads: &Gradients) {
        let lr = self.cfg.learning_rate;
        let d = net.embedding_dim();
        match &mut self.adam {
            None => {
                for (&row, g) in &grads.user_rows {
                    sgd(net.user_table.row_mut(row), g, lr);
                }
                for (&row, g) in &grads.item_rows {
                    sgd(net.item_table.row_mut(row), g, lr);
                }
                for (layer, (dw, db)) in net.layers.iter_mut().zip(&grads.layers) {
                    sgd(layer.weights.data_mut(), dw, lr);
                    sgd(layer.bias.data_mut(), db, lr);
                }
            }
            Some(state) => {
                state.step += 1;
                let t = state.step;
                let lr_t = lr * (1.0 - BETA2.powi(t)).sqrt() / (1.0 - BETA1.powi(t));
                for (&row, g) in &grads.user_rows {
                    state.users.step(row * d, net.user_table.row_mut(row), g, lr_t);
                }
                for (&row, g) in &grads.item_rows {
                    state.items.step(row * d, net.item_table.row_mut(row), g, lr_t);
                }
                for ((layer, (dw, db)), (mw, mb)) in net.layers.iter_mut().zip(&grads.layers).zip(&mut state.layers) {
                    mw.step(0, layer.weights.data_mut(), dw, lr_t);
                    mb.step(0, layer.bias.data_mut(), db, lr_t);
                }
            }
        }
    }
}

fn sgd(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

/// Uniform draw among items the user has no training interaction with.
pub(crate) fn sample_negative<R: Rng + ?Sized>(ds: &InteractionDataset, user: usize, rng: &mut R) -> usize {
    loop {
        let j = rng.random_range(0..ds.num_items);
        if !ds.is_train(user, j) {
            return j;
        }
    }
}

/// Trains `net` for `cfg.proxy_epochs` epochs over the training split, pairing
/// each positive with freshly sampled negatives every epoch. Returns the mean
/// loss of each epoch (empty when no epochs run).
pub fn fit_proxy<R: Rng + ?Sized>(
    net: &mut Network,
    ds: &InteractionDataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut trainer = Trainer::new(cfg.clone(), net)?;
    if net.num_users() != ds.num_users || net.num_items() != ds.num_items {
        return Err(Error::Argument(format!(
            "network sized for {}x{} but dataset has {}x{}",
            net.num_users(),
            net.num_items(),
            ds.num_users,
            ds.num_items
        )));
    }
    let positives: Vec<(usize, usize)> = ds
        .train
        .iter()
        .enumerate()
        .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
        .collect();
    if positives.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if let Some(u) = (0..ds.num_users).find(|&u| ds.train[u].len() >= ds.num_items) {
        return Err(Error::Data(format!(
            "user {u} has no unobserved item to sample as a negative"
        )));
    }

    let k = cfg.negatives_per_positive;
    let mut losses = Vec::with_capacity(cfg.proxy_epochs);
    let mut samples = Vec::with_capacity(positives.len() * (k + 1));
    for _ in 0..cfg.proxy_epochs {
        samples.clear();
        for &(user, item) in &positives {
            samples.push(Sample { user, item, label: 1.0 });
            for _ in 0..k {
                let neg = sample_negative(ds, user, rng);
                samples.push(Sample {
                    user,
                    item: neg,
                    label: 0.0,
                });
            }
        }
        samples.shuffle(rng);
        let mut total = 0.0;
        for batch in samples.chunks(cfg.batch_size) {
            total += trainer.train_step(net, batch, rng)? * batch.len() as f64;
        }
        losses.push(total / samples.len() as f64);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{BlockGene, Genome, InitScheme};
    use crate::network::decode;
    use crate::seed::Rng as SeedRng;
    use rand::SeedableRng;

    fn rng(seed: u64) -> SeedRng {
        SeedRng::seed_from_u64(seed)
    }

    fn toy_dataset() -> InteractionDataset {
        // 4 users x 4 items; users 0,1 like items {0,1}, users 2,3 like {2,3}.
        InteractionDataset::from_parts(
            4,
            4,
            vec![vec![0, 1], vec![0, 1], vec![2, 3], vec![2, 3]],
            vec![2, 3, 0, 1],
            vec![3, 2, 1, 0],
            vec![vec![]; 4],
        )
        .unwrap()
    }

    fn toy_genome() -> Genome {
        Genome::new(
            8,
            vec![
                BlockGene {
                    neurons: 16,
                    dropout_rate: 0.0,
                    init: InitScheme::Kn,
                },
                BlockGene {
                    neurons: 16,
                    dropout_rate: 0.0,
                    init: InitScheme::Ku,
                },
            ],
            InitScheme::Xn,
        )
    }

    #[test]
    fn zero_epochs_leaves_parameters() {
        let ds = toy_dataset();
        let mut net = decode(&toy_genome(), 4, 4, &mut rng(0)).unwrap();
        let before = net.parameters();
        let cfg = TrainConfig {
            proxy_epochs: 0,
            ..TrainConfig::default()
        };
        assert!(fit_proxy(&mut net, &ds, &cfg, &mut rng(1)).unwrap().is_empty());
        assert_eq!(net.parameters(), before);
    }

    #[test]
    fn toy_loss_decreases_between_epochs() {
        let ds = toy_dataset();
        let mut net = decode(&toy_genome(), 4, 4, &mut rng(0)).unwrap();
        let cfg = TrainConfig {
            proxy_epochs: 2,
            batch_size: 4,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let losses = fit_proxy(&mut net, &ds, &cfg, &mut rng(1)).unwrap();
        assert_eq!(losses.len(), 2);
        assert!(losses[1] < losses[0], "{losses:?}");
    }

    #[test]
    fn same_seed_same_trajectory() {
        let ds = toy_dataset();
        let cfg = TrainConfig {
            proxy_epochs: 3,
            batch_size: 3,
            ..TrainConfig::default()
        };
        let run = || {
            let mut r = rng(77);
            let mut net = decode(&toy_genome(), 4, 4, &mut r).unwrap();
            let losses = fit_proxy(&mut net, &ds, &cfg, &mut r).unwrap();
            (net.parameters(), losses)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(la, lb);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn perfect_scores_have_vanishing_loss() {
        let mut net = decode(&toy_genome(), 4, 4, &mut rng(0)).unwrap();
        let mut p = vec![0.0; net.parameter_count()];
        let n = p.len();
        p[n - 1] = 40.0; // prediction bias
        net.set_parameters(&p).unwrap();
        let pos = [Sample {
            user: 0,
            item: 0,
            label: 1.0,
        }];
        assert!(net.loss(&pos, false, &mut rng(0)).unwrap() < 1e-15);
        p[n - 1] = -40.0;
        net.set_parameters(&p).unwrap();
        let neg = [Sample {
            user: 0,
            item: 0,
            label: 0.0,
        }];
        assert!(net.loss(&neg, false, &mut rng(0)).unwrap() < 1e-15);
    }

    #[test]
    fn uniform_half_scores_cost_ln_two() {
        let mut net = decode(&toy_genome(), 4, 4, &mut rng(0)).unwrap();
        net.set_parameters(&vec![0.0; net.parameter_count()]).unwrap();
        let batch = [
            Sample {
                user: 0,
                item: 1,
                label: 1.0,
            },
            Sample {
                user: 3,
                item: 2,
                label: 0.0,
            },
        ];
        let mut trainer = Trainer::new(TrainConfig::default(), &net).unwrap();
        let loss = trainer.train_step(&mut net, &batch, &mut rng(0)).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn exploding_configuration_is_a_numeric_error() {
        let mut net = decode(&toy_genome(), 4, 4, &mut rng(0)).unwrap();
        let p = vec![1e200; net.parameter_count()];
        net.set_parameters(&p).unwrap();
        let batch = [Sample {
            user: 0,
            item: 1,
            label: 0.0,
        }];
        let mut trainer = Trainer::new(TrainConfig::default(), &net).unwrap();
        assert!(matches!(
            trainer.train_step(&mut net, &batch, &mut rng(0)),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut net = decode(&toy_genome(), 4, 4, &mut rng(0)).unwrap();
        let cfg = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let batch = [Sample {
            user: 0,
            item: 1,
            label: 1.0,
        }];
        let before = net.loss(&batch, false, &mut rng(0)).unwrap();
        let mut trainer = Trainer::new(cfg, &net).unwrap();
        for _ in 0..20 {
            trainer.train_step(&mut net, &batch, &mut rng(0)).unwrap();
        }
        assert!(net.loss(&batch, false, &mut rng(0)).unwrap() < before);
    }

    #[test]
    fn bad_labels_and_configs_rejected() {
        let mut net = decode(&toy_genome(), 4, 4, &mut rng(0)).unwrap();
        let mut trainer = Trainer::new(TrainConfig::default(), &net).unwrap();
        let batch = [Sample {
            user: 0,
            item: 1,
            label: 0.5,
        }];
        assert!(trainer.train_step(&mut net, &batch, &mut rng(0)).is_err());
        assert!(trainer.train_step(&mut net, &[], &mut rng(0)).is_err());
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(Trainer::new(cfg, &net), Err(Error::Config(_))));
    }
}
