//! Ring-buffer experience replay, uniform or proportional-prioritized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f32>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f32>,
    /// Episode ended by death or finish; truncation is not terminal.
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayMode {
    Uniform,
    Prioritized,
}

/// Observations as stored. Pixel stacks are quantized to 8 bits, which keeps
/// a 100k-slot buffer in a few GB instead of tens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum StoredObs {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl StoredObs {
    fn encode(v: Vec<f32>, quantize: bool) -> Self {
        if quantize {
            StoredObs::U8(v.iter().map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8).collect())
        } else {
            StoredObs::F32(v)
        }
    }

    fn decode(&self) -> Vec<f32> {
        match self {
            StoredObs::F32(v) => v.clone(),
            StoredObs::U8(v) => v.iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Slot {
    obs: StoredObs,
    action: usize,
    reward: f64,
    next_obs: StoredObs,
    terminal: bool,
}

/// Complete binary tree over `capacity` leaves holding sums and minima.
/// Parents are recomputed from their children on every write, so no
/// floating-point drift accumulates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumTree {
    leaves: usize,
    sum: Vec<f64>,
    min: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two();
        Self {
            leaves,
            sum: vec![0.0; 2 * leaves],
            min: vec![f64::INFINITY; 2 * leaves],
        }
    }

    pub fn set(&mut self, i: usize, v: f64) {
        let mut n = i + self.leaves;
        self.sum[n] = v;
        self.min[n] = v;
        while n > 1 {
            n /= 2;
            self.sum[n] = self.sum[2 * n] + self.sum[2 * n + 1];
            self.min[n] = self.min[2 * n].min(self.min[2 * n + 1]);
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.sum[i + self.leaves]
    }

    pub fn total(&self) -> f64 {
        self.sum[1]
    }

    pub fn min(&self) -> f64 {
        self.min[1]
    }

    /// Leaf whose cumulative range contains `u` in `[0, total)`.
    pub fn find(&self, mut u: f64) -> usize {
        let mut n = 1;
        while n < self.leaves {
            let left = self.sum[2 * n];
            if u < left || self.sum[2 * n + 1] == 0.0 {
                n *= 2;
            } else {
                u -= left;
                n = 2 * n + 1;
            }
        }
        n - self.leaves
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub mode: ReplayMode,
    pub alpha: f64,
    pub beta: f64,
    pub priority_eps: f64,
    /// Store observations as 8-bit values; set by the trainer for pixel mode.
    #[serde(skip)]
    pub quantize: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 100_000,
            mode: ReplayMode::Uniform,
            alpha: 0.6,
            beta: 0.4,
            priority_eps: 0.01,
            quantize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub transitions: Vec<Transition>,
    pub indices: Vec<usize>,
    /// Slot write counters at sampling time, for stale-index detection.
    pub generations: Vec<u64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    config: ReplayConfig,
    quantize: bool,
    slots: Vec<Slot>,
    generations: Vec<u64>,
    next: usize,
    tree: Option<SumTree>,
    max_priority: f64,
    stale_skips: u64,
}

impl ReplayBuffer {
    pub fn new(config: ReplayConfig) -> Result<Self> {
        if config.capacity == 0 {
            return Err(Error::InvalidParams("replay capacity must be positive".into()));
        }
        if config.alpha < 0.0 || !(0.0..=1.0).contains(&config.beta) || !(config.priority_eps > 0.0) {
            return Err(Error::InvalidParams("replay needs alpha >= 0, beta in [0,1], priority_eps > 0".into()));
        }
        let tree = (config.mode == ReplayMode::Prioritized).then(|| SumTree::new(config.capacity));
        Ok(Self {
            quantize: config.quantize,
            config,
            slots: Vec::new(),
            generations: Vec::new(),
            next: 0,
            tree,
            max_priority: 1.0,
            stale_skips: 0,
        })
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.config.capacity
    }

    pub fn stale_skips(&self) -> u64 {
        self.stale_skips
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.config.beta = beta.clamp(0.0, 1.0);
    }

    /// Stored priority of slot `i` (already raised to alpha); 1 in uniform mode.
    pub fn priority(&self, i: usize) -> f64 {
        self.tree.as_ref().map_or(1.0, |t| t.get(i))
    }

    /// Transition in slot `i` (decoded).
    pub fn get(&self, i: usize) -> Transition {
        let s = &self.slots[i];
        Transition {
            obs: s.obs.decode(),
            action: s.action,
            reward: s.reward,
            next_obs: s.next_obs.decode(),
            terminal: s.terminal,
        }
    }

    /// Appends, overwriting the oldest slot at capacity. Returns the slot used.
    pub fn push(&mut self, t: Transition) -> Result<usize> {
        if !t.reward.is_finite() {
            return Err(Error::Divergence("non-finite reward".into()));
        }
        if let Some(first) = self.slots.first() {
            let len = match &first.obs {
                StoredObs::F32(v) => v.len(),
                StoredObs::U8(v) => v.len(),
            };
            if t.obs.len() != len || t.next_obs.len() != len {
                return Err(Error::ShapeMismatch {
                    expected: vec![len],
                    got: vec![t.obs.len(), t.next_obs.len()],
                });
            }
        }
        let q = self.quantize;
        let slot = Slot {
            obs: StoredObs::encode(t.obs, q),
            action: t.action,
            reward: t.reward,
            next_obs: StoredObs::encode(t.next_obs, q),
            terminal: t.terminal,
        };
        let i = self.next;
        if i == self.slots.len() {
            self.slots.push(slot);
            self.generations.push(0);
        } else {
            self.slots[i] = slot;
            self.generations[i] += 1;
        }
        self.next = (self.next + 1) % self.config.capacity;
        if let Some(tree) = &mut self.tree {
            tree.set(i, self.max_priority);
        }
        Ok(i)
    }

    /// Samples `batch` slots with replacement.
    pub fn sample(&self, batch: usize, rng: &mut SplitMix64) -> Result<SampledBatch> {
        if batch == 0 || self.slots.len() < batch {
            return Err(Error::UnderfullBuffer {
                size: self.slots.len(),
                requested: batch,
            });
        }
        let n = self.slots.len();
        let (indices, weights) = match &self.tree {
            None => ((0..batch).map(|_| rng.index(n)).collect(), vec![1.0; batch]),
            Some(tree) => {
                let total = tree.total();
                let idx: Vec<usize> = (0..batch)
                    .map(|_| tree.find(rng.next_f64() * total).min(n - 1))
                    .collect();
                let beta = self.config.beta;
                // max_j w_j comes from the smallest priority.
                let w_max = (n as f64 * tree.min() / total).powf(-beta);
                let w = idx
                    .iter()
                    .map(|&i| (n as f64 * tree.get(i) / total).powf(-beta) / w_max)
                    .collect();
                (idx, w)
            }
        };
        Ok(SampledBatch {
            transitions: indices.iter().map(|&i| self.get(i)).collect(),
            generations: indices.iter().map(|&i| self.generations[i]).collect(),
            indices,
            weights,
        })
    }

    /// Stores `p = (|delta| + eps_p)^alpha` per slot. Slots rewritten since
    /// sampling are skipped and counted.
    pub fn update_priorities(&mut self, indices: &[usize], generations: &[u64], deltas: &[f64]) -> Result<()> {
        let Some(tree) = &mut self.tree else {
            return Ok(());
        };
        for ((&i, &g), &d) in indices.iter().zip(generations).zip(deltas) {
            if i >= self.slots.len() || self.generations[i] != g {
                self.stale_skips += 1;
                continue;
            }
            if !d.is_finite() {
                return Err(Error::Divergence("non-finite TD error".into()));
            }
            let p = (d.abs() + self.config.priority_eps).powf(self.config.alpha);
            tree.set(i, p);
            self.max_priority = self.max_priority.max(p);
        }
        Ok(())
    }

    /// Overwrites raw stored priorities (already exponentiated); test fixture hook.
    pub fn set_priorities(&mut self, priorities: &[f64]) {
        if let Some(tree) = &mut self.tree {
            for (i, &p) in priorities.iter().enumerate() {
                tree.set(i, p);
            }
            self.max_priority = priorities.iter().copied().fold(f64::MIN, f64::max);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: f32) -> Transition {
        Transition {
            obs: vec![v],
            action: 0,
            reward: v as f64,
            next_obs: vec![v + 1.0],
            terminal: false,
        }
    }

    fn buffer(capacity: usize, mode: ReplayMode) -> ReplayBuffer {
        ReplayBuffer::new(ReplayConfig {
            capacity,
            mode,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn fifo_eviction() {
        let mut b = buffer(3, ReplayMode::Uniform);
        for v in 1..=4 {
            b.push(t(v as f32)).unwrap();
        }
        let mut held: Vec<f64> = (0..3).map(|i| b.get(i).reward).collect();
        held.sort_by(f64::total_cmp);
        assert_eq!(held, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn new_entry_gets_max_priority() {
        let mut b = buffer(8, ReplayMode::Prioritized);
        for v in 0..3 {
            b.push(t(v as f32)).unwrap();
        }
        b.set_priorities(&[1.0, 2.0, 3.0]);
        let i = b.push(t(9.0)).unwrap();
        assert_eq!(b.priority(i), 3.0);
    }

    #[test]
    fn priority_update_hand_values() {
        let mut b = ReplayBuffer::new(ReplayConfig {
            capacity: 4,
            mode: ReplayMode::Prioritized,
            alpha: 0.6,
            priority_eps: 0.01,
            ..Default::default()
        })
        .unwrap();
        b.push(t(0.0)).unwrap();
        b.push(t(1.0)).unwrap();
        b.update_priorities(&[0, 1], &[0, 0], &[0.0, -0.5]).unwrap();
        assert!((b.priority(0) - 0.0631).abs() < 1e-4);
        assert!((b.priority(1) - 0.668).abs() < 1e-3);
    }

    #[test]
    fn zero_alpha_gives_unit_priorities() {
        let mut b = ReplayBuffer::new(ReplayConfig {
            capacity: 4,
            mode: ReplayMode::Prioritized,
            alpha: 0.0,
            ..Default::default()
        })
        .unwrap();
        for v in 0..3 {
            b.push(t(v as f32)).unwrap();
        }
        b.update_priorities(&[0, 1, 2], &[0, 0, 0], &[5.0, -0.1, 0.0]).unwrap();
        assert!((0..3).all(|i| b.priority(i) == 1.0));
    }

    #[test]
    fn zero_beta_gives_unit_weights() {
        let mut b = ReplayBuffer::new(ReplayConfig {
            capacity: 4,
            mode: ReplayMode::Prioritized,
            beta: 0.0,
            ..Default::default()
        })
        .unwrap();
        for v in 0..4 {
            b.push(t(v as f32)).unwrap();
        }
        b.set_priorities(&[1.0, 5.0, 0.2, 3.0]);
        let mut rng = SplitMix64::new(1);
        for _ in 0..16 {
            let s = b.sample(4, &mut rng).unwrap();
            assert!(s.weights.iter().all(|&w| w == 1.0));
        }
    }

    #[test]
    fn weights_hand_values() {
        let mut b = ReplayBuffer::new(ReplayConfig {
            capacity: 2,
            mode: ReplayMode::Prioritized,
            beta: 1.0,
            ..Default::default()
        })
        .unwrap();
        b.push(t(0.0)).unwrap();
        b.push(t(1.0)).unwrap();
        b.set_priorities(&[1.0, 3.0]);
        // P = (1/4, 3/4); w = (2P)^-1 = (2, 2/3); normalized by max -> (1, 1/3).
        let mut rng = SplitMix64::new(3);
        for _ in 0..100 {
            let s = b.sample(2, &mut rng).unwrap();
            for (&i, &w) in s.indices.iter().zip(&s.weights) {
                let expected = if i == 0 { 1.0 } else { 1.0 / 3.0 };
                assert!((w - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stale_indices_are_skipped() {
        let mut b = buffer(2, ReplayMode::Prioritized);
        b.push(t(0.0)).unwrap();
        b.push(t(1.0)).unwrap();
        let s = b.sample(2, &mut SplitMix64::new(0)).unwrap();
        b.push(t(2.0)).unwrap();
        b.push(t(3.0)).unwrap();
        b.update_priorities(&s.indices, &s.generations, &[1.0, 1.0]).unwrap();
        assert_eq!(b.stale_skips(), 2);
    }

    #[test]
    fn underfull_sample_errors() {
        let mut b = buffer(8, ReplayMode::Uniform);
        b.push(t(0.0)).unwrap();
        assert!(matches!(
            b.sample(2, &mut SplitMix64::new(0)),
            Err(Error::UnderfullBuffer { size: 1, requested: 2 })
        ));
    }

    #[test]
    fn quantized_round_trip() {
        let mut b = ReplayBuffer::new(ReplayConfig {
            capacity: 2,
            quantize: true,
            ..Default::default()
        })
        .unwrap();
        b.push(Transition {
            obs: vec![0.0, 0.5, 1.0],
            action: 1,
            reward: 0.0,
            next_obs: vec![0.2, 0.3, 0.4],
            terminal: true,
        })
        .unwrap();
        let got = b.get(0);
        for (a, e) in got.obs.iter().chain(&got.next_obs).zip([0.0, 0.5, 1.0, 0.2, 0.3, 0.4]) {
            assert!((a - e).abs() <= 0.5 / 255.0 + 1e-7);
        }
    }

    #[test]
    fn sum_tree_find_boundaries() {
        let mut tr = SumTree::new(3);
        tr.set(0, 1.0);
        tr.set(1, 0.0);
        tr.set(2, 2.0);
        assert_eq!(tr.total(), 3.0);
        assert_eq!(tr.min(), 0.0);
        assert_eq!(tr.find(0.0), 0);
        assert_eq!(tr.find(0.999), 0);
        assert_eq!(tr.find(1.0), 2);
        assert_eq!(tr.find(2.999), 2);
    }
}
