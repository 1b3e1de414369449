//! Continuous-parameter samplers: one conditional Gaussian per operator,
//! filtered by a learned accept/reject classifier.

pub mod mlp;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::{action_groundings, AbstractDemo};
use crate::envs::{Demonstration, Environment, State};
use crate::learner::Datasets;
use crate::symbolic::{GroundOperator, Object, Operator};
use mlp::{train_with_holdout, Mlp, Standardizer, TrainConfig};

pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("operator {op} has {count} positive examples, at least 2 are needed")]
    InsufficientData { op: String, count: usize },
    #[error("unknown controller {0}")]
    UnknownController(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub hidden: usize,
    pub generator_epochs: usize,
    pub discriminator_epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty on the generator's parameters.
    pub weight_decay: f64,
    pub rejection_limit: usize,
    /// Share of examples held out to pick the training epoch; 0 trains on all.
    pub holdout_fraction: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            generator_epochs: 2_000,
            discriminator_epochs: 1_000,
            learning_rate: 1e-2,
            weight_decay: 0.1,
            rejection_limit: 100,
            holdout_fraction: 0.2,
        }
    }
}

impl SamplerConfig {
    fn train(&self, epochs: usize, weight_decay: f64) -> TrainConfig {
        TrainConfig {
            epochs,
            learning_rate: self.learning_rate,
            weight_decay,
        }
    }
}

/// Concatenated features of `objects` in `x`; objects missing from the state
/// contribute nothing.
pub fn input_vector(x: &State, objects: &[Object]) -> Vec<f64> {
    objects
        .iter()
        .flat_map(|o| x.get(o).into_iter().flatten().copied())
        .collect()
}

fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Maps inputs to a diagonal Gaussian over θ, in standardized coordinates.
/// `mean` outputs the mean; `variance` outputs one pre-activation per
/// dimension, mapped to a variance by `elu(z) + 1` plus a floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub mean: Mlp,
    pub variance: Mlp,
    pub input_norm: Standardizer,
    pub output_norm: Standardizer,
}

fn variance_of(z: f64) -> f64 {
    elu(z) + 1.0 + VARIANCE_FLOOR
}

impl Generator {
    /// Mean and variance in θ units.
    pub fn predict(&self, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let x = self.input_norm.apply(input);
        let mean = self.output_norm.invert(&self.mean.forward(&x));
        let var = self
            .variance
            .forward(&x)
            .iter()
            .zip(&self.output_norm.std)
            .map(|(z, s)| variance_of(*z) * s * s)
            .collect();
        (mean, var)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub net: Mlp,
    pub input_norm: Standardizer,
}

impl Discriminator {
    pub fn probability(&self, input: &[f64], theta: &[f64]) -> f64 {
        let joint: Vec<f64> = input.iter().chain(theta).copied().collect();
        sigmoid(self.net.forward(&self.input_norm.apply(&joint))[0])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum SamplerKind {
    /// The controller takes no continuous parameters.
    Trivial,
    /// Too little data to train: independent Gaussians with unit variance.
    Fallback { mean: Vec<f64> },
    /// A trained generator; without a discriminator every draw is accepted.
    Learned {
        generator: Generator,
        discriminator: Option<Discriminator>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerModel {
    pub operator: String,
    pub input_dim: usize,
    pub theta_dim: usize,
    pub rejection_limit: usize,
    pub kind: SamplerKind,
}

impl SamplerModel {
    /// Draws θ for the objects bound to the operator's parameters. Draws are
    /// rejected while the discriminator says less than one half, up to the
    /// rejection limit, after which the last draw is returned.
    pub fn sample(&self, x: &State, objects: &[Object], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let input = input_vector(x, objects);
        match &self.kind {
            SamplerKind::Trivial => Vec::new(),
            SamplerKind::Fallback { mean } => mean.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect(),
            SamplerKind::Learned {
                generator,
                discriminator,
            } => {
                let (mean, var) = generator.predict(&input);
                let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                    mean.iter()
                        .zip(&var)
                        .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                };
                let Some(disc) = discriminator else {
                    return draw(rng);
                };
                let mut theta = draw(rng);
                for _ in 1..self.rejection_limit.max(1) {
                    if disc.probability(&input, &theta) >= 0.5 {
                        break;
                    }
                    theta = draw(rng);
                }
                theta
            }
        }
    }
}

/// Training data for one operator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SamplerTrainSet {
    pub positives: Vec<(Vec<f64>, Vec<f64>)>,
    pub negatives: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Positives are the operator's own transitions. Negatives are transitions of
/// the same controller outside its dataset, bound through the first grounding
/// that agrees with the action and whose preconditions hold; transitions with
/// no such grounding are skipped.
pub fn build_train_set(
    op: &Arc<Operator>,
    data: &[crate::learner::Assignment],
    demos: &[Demonstration],
    abstract_demos: &[AbstractDemo],
) -> SamplerTrainSet {
    let mut set = SamplerTrainSet::default();
    let own: BTreeSet<(usize, usize)> = data.iter().map(|a| (a.demo, a.index)).collect();
    for a in data {
        let x = &demos[a.demo].states[a.index];
        let u = &demos[a.demo].actions[a.index];
        set.positives.push((input_vector(x, &a.objects), u.theta.clone()));
    }
    for (d, demo) in abstract_demos.iter().enumerate() {
        for t in &demo.transitions {
            if t.action.controller != op.controller.name || own.contains(&(d, t.index)) {
                continue;
            }
            let bound = action_groundings(op, &t.action, &demo.objects)
                .into_iter()
                .find(|g| g.is_applicable(&t.s_prev));
            if let Some(g) = bound {
                let x = &demos[d].states[t.index];
                set.negatives
                    .push((input_vector(x, &g.objects), t.action.theta.clone()));
            }
        }
    }
    set
}

fn fit_generator(
    set: &SamplerTrainSet,
    input_dim: usize,
    theta_dim: usize,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Generator {
    let inputs: Vec<Vec<f64>> = set.positives.iter().map(|(x, _)| x.clone()).collect();
    let thetas: Vec<Vec<f64>> = set.positives.iter().map(|(_, t)| t.clone()).collect();
    let input_norm = Standardizer::fit(&inputs, input_dim);
    let output_norm = Standardizer::fit(&thetas, theta_dim);
    let xs: Vec<Vec<f64>> = inputs.iter().map(|x| input_norm.apply(x)).collect();
    let ys: Vec<Vec<f64>> = thetas.iter().map(|t| output_norm.apply(t)).collect();
    let (train, holdout) = split_holdout(xs.len(), cfg.holdout_fraction, rng);
    let train_cfg = cfg.train(cfg.generator_epochs, cfg.weight_decay);

    // The mean by least squares first, then the variance of its residuals by
    // maximum likelihood.
    let mut mean = Mlp::with_skip(&[input_dim, cfg.hidden, cfg.hidden, theta_dim], rng);
    let sq = |i: usize, out: &[f64]| -> f64 { out.iter().zip(&ys[i]).map(|(o, y)| 0.5 * (o - y).powi(2)).sum() };
    let sq_grad = |i: usize, out: &[f64]| -> Vec<f64> { out.iter().zip(&ys[i]).map(|(o, y)| o - y).collect() };
    train_with_holdout(&mut mean, &xs, &train, &holdout, train_cfg, sq_grad, sq);

    let residuals: Vec<Vec<f64>> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| mean.forward(x).iter().zip(y).map(|(m, y)| y - m).collect())
        .collect();
    let mut variance = Mlp::new(&[input_dim, cfg.hidden, cfg.hidden, theta_dim], rng);
    let nll = |i: usize, out: &[f64]| -> f64 {
        out.iter()
            .zip(&residuals[i])
            .map(|(z, r)| {
                let var = variance_of(*z);
                0.5 * (var.ln() + r * r / var)
            })
            .sum()
    };
    let nll_grad = |i: usize, out: &[f64]| -> Vec<f64> {
        out.iter()
            .zip(&residuals[i])
            .map(|(z, r)| {
                let var = variance_of(*z);
                let dvar = 0.5 * (1.0 / var - r * r / (var * var));
                dvar * if *z > 0.0 { 1.0 } else { z.exp() }
            })
            .collect()
    };
    train_with_holdout(&mut variance, &xs, &train, &holdout, train_cfg, nll_grad, nll);
    Generator {
        mean,
        variance,
        input_norm,
        output_norm,
    }
}

/// Shuffled train and holdout index sets. Small sets are not split.
fn split_holdout(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let k = (n as f64 * fraction).floor() as usize;
    if k == 0 || n - k < 2 {
        return (idx, Vec::new());
    }
    idx.shuffle(rng);
    let holdout = idx.split_off(n - k);
    (idx, holdout)
}

fn fit_discriminator(set: &SamplerTrainSet, dim: usize, cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> Discriminator {
    let labelled: Vec<(Vec<f64>, f64)> = set
        .positives
        .iter()
        .map(|p| (p, 1.0))
        .chain(set.negatives.iter().map(|n| (n, 0.0)))
        .map(|((x, t), y)| (x.iter().chain(t).copied().collect(), y))
        .collect();
    let joint: Vec<Vec<f64>> = labelled.iter().map(|(v, _)| v.clone()).collect();
    let input_norm = Standardizer::fit(&joint, dim);
    let xs: Vec<Vec<f64>> = joint.iter().map(|v| input_norm.apply(v)).collect();
    let mut net = Mlp::new(&[dim, cfg.hidden, cfg.hidden, 1], rng);
    let (train, holdout) = split_holdout(xs.len(), cfg.holdout_fraction, rng);
    // Binary cross-entropy on the logit.
    let bce = |i: usize, out: &[f64]| -> f64 {
        let z = out[0];
        z.max(0.0) - z * labelled[i].1 + (-z.abs()).exp().ln_1p()
    };
    train_with_holdout(
        &mut net,
        &xs,
        &train,
        &holdout,
        cfg.train(cfg.discriminator_epochs, 0.0),
        |i, out| vec![sigmoid(out[0]) - labelled[i].1],
        bce,
    );
    Discriminator { net, input_norm }
}

/// Fits one operator's sampler. Fewer than two positives is an error.
pub fn fit_sampler(
    op: &Operator,
    theta_dim: usize,
    set: &SamplerTrainSet,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SamplerModel, SamplerError> {
    let input_dim = set.positives.first().map_or(0, |(x, _)| x.len());
    let model = |kind| SamplerModel {
        operator: op.name.clone(),
        input_dim,
        theta_dim,
        rejection_limit: cfg.rejection_limit,
        kind,
    };
    if theta_dim == 0 {
        return Ok(model(SamplerKind::Trivial));
    }
    if set.positives.len() < 2 {
        return Err(SamplerError::InsufficientData {
            op: op.name.clone(),
            count: set.positives.len(),
        });
    }
    let generator = fit_generator(set, input_dim, theta_dim, cfg, rng);
    let discriminator = (!set.negatives.is_empty()).then(|| fit_discriminator(set, input_dim + theta_dim, cfg, rng));
    Ok(model(SamplerKind::Learned {
        generator,
        discriminator,
    }))
}

fn fallback(op: &Operator, theta_dim: usize, set: &SamplerTrainSet, cfg: &SamplerConfig) -> SamplerModel {
    let mean = set
        .positives
        .first()
        .map_or_else(|| vec![0.0; theta_dim], |(_, t)| t.clone());
    SamplerModel {
        operator: op.name.clone(),
        input_dim: set.positives.first().map_or(0, |(x, _)| x.len()),
        theta_dim,
        rejection_limit: cfg.rejection_limit,
        kind: SamplerKind::Fallback { mean },
    }
}

/// Fits a sampler per operator. Operators are trained in parallel, each from
/// its own random stream, so the result does not depend on thread count.
pub fn fit_samplers(
    env: &dyn Environment,
    ops: &[Arc<Operator>],
    datasets: &Datasets,
    demos: &[Demonstration],
    abstract_demos: &[AbstractDemo],
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<LearnedSamplers, SamplerError> {
    let jobs: Vec<(usize, &Arc<Operator>, &Vec<_>, usize)> = ops
        .iter()
        .zip(datasets)
        .enumerate()
        .map(|(k, (op, data))| {
            let dim = env
                .controller(&op.controller.name)
                .ok_or_else(|| SamplerError::UnknownController(op.controller.name.to_string()))?
                .theta_dim;
            Ok((k, op, data, dim))
        })
        .collect::<Result<_, SamplerError>>()?;
    let models: Vec<SamplerModel> = jobs
        .into_par_iter()
        .map(|(k, op, data, theta_dim)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let set = build_train_set(op, data, demos, abstract_demos);
            fit_sampler(op, theta_dim, &set, cfg, &mut rng).unwrap_or_else(|e| {
                log::warn!("{e}; using a unit Gaussian");
                fallback(op, theta_dim, &set, cfg)
            })
        })
        .collect();
    Ok(LearnedSamplers {
        models: models.into_iter().map(|m| (m.operator.clone(), m)).collect(),
    })
}

/// Source of continuous parameters for a ground operator in a state.
pub trait ParamSampler: Send + Sync {
    fn sample(&self, ground: &GroundOperator, x: &State, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearnedSamplers {
    pub models: BTreeMap<String, SamplerModel>,
}

impl ParamSampler for LearnedSamplers {
    /// Operators without a model get an empty θ, which the environment rejects.
    fn sample(&self, ground: &GroundOperator, x: &State, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.models
            .get(ground.name())
            .map(|m| m.sample(x, &ground.objects, rng))
            .unwrap_or_default()
    }
}

/// Hand-written samplers: a uniform choice among the environment's own
/// parameter candidates for the controller.
pub struct OracleSamplers {
    pub env: Arc<dyn Environment>,
}

impl ParamSampler for OracleSamplers {
    fn sample(&self, ground: &GroundOperator, x: &State, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let name = &ground.op.controller.name;
        let candidates = self.env.oracle_thetas(x, name, &ground.controller_args);
        if candidates.is_empty() {
            let dim = self.env.controller(name).map_or(0, |c| c.theta_dim);
            return vec![0.0; dim];
        }
        candidates[rng.random_range(0..candidates.len())].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{ControllerRef, Variable};

    fn op(name: &str) -> Operator {
        let v = Variable::new("?x0", "bot");
        Operator {
            name: name.into(),
            params: vec![v.clone()],
            preconditions: Default::default(),
            add_effects: Default::default(),
            delete_effects: Default::default(),
            quantified_deletes: Default::default(),
            controller: ControllerRef {
                name: "Move".into(),
                args: vec![v],
            },
        }
    }

    fn constant_set(theta: f64, n: usize) -> SamplerTrainSet {
        SamplerTrainSet {
            positives: (0..n).map(|i| (vec![i as f64, 1.0], vec![theta])).collect(),
            negatives: Vec::new(),
        }
    }

    #[test]
    fn zero_dimensional_controller_is_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = fit_sampler(
            &op("A"),
            0,
            &SamplerTrainSet::default(),
            &SamplerConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(m.kind, SamplerKind::Trivial);
        assert!(m.sample(&State::new(), &[], &mut rng).is_empty());
    }

    #[test]
    fn constant_theta_mean_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = SamplerConfig {
            generator_epochs: 300,
            ..Default::default()
        };
        let m = fit_sampler(&op("A"), 1, &constant_set(0.7, 10), &cfg, &mut rng).unwrap();
        let SamplerKind::Learned {
            generator,
            discriminator,
        } = &m.kind
        else {
            panic!("expected a learned sampler");
        };
        assert!(discriminator.is_none());
        for i in 0..10 {
            let (mean, var) = generator.predict(&[i as f64, 1.0]);
            assert!((mean[0] - 0.7).abs() < 1e-2, "mean {}", mean[0]);
            assert!(var[0] > 0.0);
        }
    }

    #[test]
    fn too_few_positives_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = fit_sampler(&op("A"), 1, &constant_set(0.5, 1), &SamplerConfig::default(), &mut rng).unwrap_err();
        assert!(matches!(err, SamplerError::InsufficientData { count: 1, .. }));
    }

    #[test]
    fn discriminator_separates_good_and_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let set = SamplerTrainSet {
            positives: (0..20).map(|i| (vec![i as f64 / 10.0], vec![1.0])).collect(),
            negatives: (0..20).map(|i| (vec![i as f64 / 10.0], vec![-1.0])).collect(),
        };
        let m = fit_sampler(&op("A"), 1, &set, &SamplerConfig::default(), &mut rng).unwrap();
        let SamplerKind::Learned {
            discriminator: Some(d), ..
        } = &m.kind
        else {
            panic!("expected a discriminator");
        };
        assert!(d.probability(&[0.5], &[1.0]) > 0.9);
        assert!(d.probability(&[0.5], &[-1.0]) < 0.1);
    }

    #[test]
    fn tight_gaussian_stays_within_three_sigma() {
        let generator = Generator {
            // Zero mean offset, variance near the floor.
            mean: Mlp {
                sizes: vec![0, 1],
                skip: false,
                params: vec![0.0],
            },
            variance: Mlp {
                sizes: vec![0, 1],
                skip: false,
                params: vec![-20.0],
            },
            input_norm: Standardizer {
                mean: vec![],
                std: vec![],
            },
            output_norm: Standardizer {
                mean: vec![4.0],
                std: vec![1.0],
            },
        };
        let (mu, var) = generator.predict(&[]);
        let model = SamplerModel {
            operator: "A".into(),
            input_dim: 0,
            theta_dim: 1,
            rejection_limit: 100,
            kind: SamplerKind::Learned {
                generator,
                discriminator: None,
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sigma = var[0].sqrt();
        let inside = (0..1000)
            .filter(|_| (model.sample(&State::new(), &[], &mut rng)[0] - mu[0]).abs() <= 3.0 * sigma)
            .count();
        assert!(inside >= 990, "{inside}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = SamplerTrainSet {
            positives: (0..6).map(|i| (vec![], vec![i as f64 * 0.5])).collect(),
            negatives: (0..6).map(|_| (vec![], vec![-3.0])).collect(),
        };
        let cfg = SamplerConfig {
            generator_epochs: 50,
            discriminator_epochs: 50,
            ..Default::default()
        };
        let m = fit_sampler(&op("A"), 1, &set, &cfg, &mut rng).unwrap();
        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..5).map(|_| m.sample(&State::new(), &[], &mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }
}
