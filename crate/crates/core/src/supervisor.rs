//! The supervisory policy: an oracle label during training, and a softmax
//! classifier over options that replaces it at evaluation.

use rand::Rng;

use crate::env::{BallType, Observation};
use crate::error::{Error, Result};
use crate::nn::{argmax, backward, forward, init_topology, softmax, softmax_xent, NetworkParams};
use crate::optim::{adam_step, clip_global_norm, OptimConfig};
use crate::agent::batch_tensor;

pub type OptionIndex = usize;

/// Fixed subtask mapping: white-ball subtask is option 0, grey is option 1.
pub fn oracle_option(ball_type: BallType) -> OptionIndex {
    match ball_type {
        BallType::White => 0,
        BallType::Grey => 1,
    }
}

pub const DEFAULT_HIDDEN: usize = 32;
pub const DEFAULT_LABEL_CAPACITY: usize = 1_000;

/// Classifier with the same conv trunk as the Q-network, one 32-unit hidden
/// layer, and an option-count softmax output. Carries its own ring buffer of
/// oracle-labeled observations.
pub struct Supervisor {
    pub params: NetworkParams,
    pub optim: OptimConfig,
    pub batch_size: usize,
    labeled: Vec<(Observation, OptionIndex)>,
    label_capacity: usize,
    cursor: usize,
}

impl Supervisor {
    pub fn new(options: usize, seed: u64, optim: OptimConfig, batch_size: usize) -> Result<Supervisor> {
        if options < 2 {
            return Err(Error::InvalidConfig(
                "supervisor needs at least 2 options".into(),
            ));
        }
        Ok(Supervisor {
            params: init_topology(1, DEFAULT_HIDDEN, options, seed)?,
            optim,
            batch_size,
            labeled: Vec::new(),
            label_capacity: DEFAULT_LABEL_CAPACITY,
            cursor: 0,
        })
    }

    pub fn options(&self) -> usize {
        self.params.out_units()
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled.len()
    }

    /// Store an oracle-labeled observation (FIFO ring).
    pub fn record(&mut self, observation: Observation, label: OptionIndex) {
        if self.labeled.len() < self.label_capacity {
            self.labeled.push((observation, label));
        } else {
            self.labeled[self.cursor] = (observation, label);
            self.cursor = (self.cursor + 1) % self.label_capacity;
        }
    }

    /// Probability distribution over options for one observation.
    pub fn classify(&self, observation: &Observation) -> Result<Vec<f64>> {
        let batch = batch_tensor(std::iter::once(observation));
        let (out, _) = forward(&self.params, &batch)?;
        Ok(softmax(&out[0].data))
    }

    /// Evaluation-time routing: argmax of the classifier, ties to option 0.
    pub fn route(&self, observation: &Observation) -> Result<OptionIndex> {
        Ok(argmax(&self.classify(observation)?))
    }

    /// [`Supervisor::route`] over a whole batch in one forward pass.
    pub fn route_batch(&self, observations: &[&Observation]) -> Result<Vec<OptionIndex>> {
        let batch = batch_tensor(observations.iter().copied());
        let (out, _) = forward(&self.params, &batch)?;
        Ok(out[0].data.chunks(self.options()).map(argmax).collect())
    }

    /// One cross-entropy step on an explicit labeled batch. Returns the loss.
    pub fn train_on_batch(
        &mut self,
        observations: &[&Observation],
        labels: &[usize],
    ) -> Result<f64> {
        if observations.is_empty() || observations.len() != labels.len() {
            return Err(Error::InvalidConfig(format!(
                "labeled batch of {} observations, {} labels",
                observations.len(),
                labels.len()
            )));
        }
        let batch = batch_tensor(observations.iter().copied());
        let (out, cache) = forward(&self.params, &batch)?;
        let (loss, grad) = softmax_xent(&out[0], labels)?;
        let mut grads = backward(&self.params, &cache, 0, &grad)?;
        clip_global_norm(&mut grads, self.optim.max_grad_norm);
        adam_step(&mut self.params, &grads, &self.optim)?;
        Ok(loss)
    }

    /// One step on a uniform sample from the labeled ring buffer.
    pub fn train_step<R: Rng>(&mut self, rng: &mut R) -> Result<f64> {
        let n = self.batch_size.min(self.labeled.len());
        if n == 0 {
            return Err(Error::BufferUnderfilled { have: 0, need: 1 });
        }
        let picks: Vec<usize> = (0..n).map(|_| rng.gen_range(0..self.labeled.len())).collect();
        let observations: Vec<Observation> = picks
            .iter()
            .map(|&i| self.labeled[i].0.clone())
            .collect();
        let labels: Vec<usize> = picks.iter().map(|&i| self.labeled[i].1).collect();
        let refs: Vec<&Observation> = observations.iter().collect();
        self.train_on_batch(&refs, &labels)
    }

    /// Fraction of labeled pairs the current classifier routes correctly.
    pub fn accuracy_on<'a, I: Iterator<Item = (&'a Observation, OptionIndex)>>(
        &self,
        pairs: I,
    ) -> Result<f64> {
        let (observations, labels): (Vec<&Observation>, Vec<OptionIndex>) = pairs.unzip();
        if observations.is_empty() {
            return Err(Error::InvalidConfig("no samples for accuracy".into()));
        }
        let mut correct = 0usize;
        for (obs, lab) in observations.chunks(256).zip(labels.chunks(256)) {
            let routed = self.route_batch(obs)?;
            correct += routed.iter().zip(lab).filter(|(r, l)| r == l).count();
        }
        Ok(correct as f64 / observations.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CatchEnv, TransferMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oracle_mapping_is_fixed() {
        assert_eq!(oracle_option(BallType::White), 0);
        assert_eq!(oracle_option(BallType::Grey), 1);
        let labels: Vec<usize> = (0..4).map(|i| oracle_option(BallType::for_episode(i))).collect();
        assert_eq!(labels, vec![0, 1, 0, 1]);
    }

    #[test]
    fn zeroed_network_classifies_uniformly() {
        let mut s = Supervisor::new(2, 0, OptimConfig::default(), 8).unwrap();
        for t in s.params.tensor_refs_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let env = CatchEnv::reset_at(TransferMode::Negative, BallType::White, 3, 5);
        let dist = s.classify(env.observation()).unwrap();
        assert_eq!(dist, vec![0.5, 0.5]);
    }

    #[test]
    fn distribution_sums_to_one() {
        let s = Supervisor::new(2, 5, OptimConfig::default(), 8).unwrap();
        let env = CatchEnv::reset_at(TransferMode::Negative, BallType::Grey, 7, 2);
        let dist = s.classify(env.observation()).unwrap();
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(dist.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn route_is_argmax_with_low_tie_break() {
        assert_eq!(argmax(&[0.9, 0.1]), 0);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.8]), 1);
    }

    fn fast_optim() -> OptimConfig {
        OptimConfig {
            learning_rate: 1e-2,
            ..OptimConfig::default()
        }
    }

    #[test]
    fn loss_decreases_on_separable_batch() {
        let mut s = Supervisor::new(2, 3, fast_optim(), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut observations = Vec::new();
        let mut labels = Vec::new();
        for ep in 0..8u64 {
            let mut env = CatchEnv::reset(TransferMode::Negative, ep, &mut rng);
            for _ in 0..3 {
                env.step(crate::env::Action::NoOp).unwrap();
            }
            observations.push(env.observation().clone());
            labels.push(oracle_option(env.state.ball_type));
        }
        let refs: Vec<&Observation> = observations.iter().collect();
        let first = s.train_on_batch(&refs, &labels).unwrap();
        let mut last = first;
        for _ in 0..99 {
            last = s.train_on_batch(&refs, &labels).unwrap();
        }
        assert!(last < first, "loss {first} -> {last}");
        assert!(last < 0.05);
    }

    #[test]
    fn single_class_batch_saturates_toward_label() {
        let mut s = Supervisor::new(2, 7, fast_optim(), 4).unwrap();
        let env = CatchEnv::reset_at(TransferMode::Negative, BallType::White, 3, 5);
        let obs = env.observation().clone();
        let refs = vec![&obs; 4];
        let labels = vec![0usize; 4];
        let mut prev = s.classify(&obs).unwrap()[0];
        for _ in 0..50 {
            s.train_on_batch(&refs, &labels).unwrap();
        }
        let now = s.classify(&obs).unwrap()[0];
        assert!(now > prev);
        assert!(now > 0.99, "P(option 0) = {now}");
        prev = now;
        for _ in 0..50 {
            s.train_on_batch(&refs, &labels).unwrap();
        }
        assert!(s.classify(&obs).unwrap()[0] >= prev - 1e-9);
    }

    #[test]
    fn labeled_ring_evicts_fifo() {
        let mut s = Supervisor::new(2, 0, OptimConfig::default(), 8).unwrap();
        let env = CatchEnv::reset_at(TransferMode::Negative, BallType::White, 3, 5);
        let obs = env.observation().clone();
        for i in 0..DEFAULT_LABEL_CAPACITY + 5 {
            s.record(obs.clone(), i % 2);
        }
        assert_eq!(s.labeled_count(), DEFAULT_LABEL_CAPACITY);
    }
}
