//! Seeded perturbation of a reference plan, standing in for sample diversity.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::plan::{Command, Plan};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub drop_prob: f64,
    pub swap_prob: f64,
    pub insert_prob: f64,
}

impl NoiseModel {
    pub fn zero() -> Self {
        NoiseModel::default()
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in
            [("drop_prob", self.drop_prob), ("swap_prob", self.swap_prob), ("insert_prob", self.insert_prob)]
        {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        Ok(())
    }
}

/// Perturbs `seed_plan` once.
///
/// First pass, per seed position: insert a random distractor before it with
/// `insert_prob` (if the pool is non-empty), then drop it with `drop_prob`.
/// Second pass, left to right over the result: swap each adjacent pair with
/// `swap_prob`; a swapped pair is skipped as a unit.
pub fn perturb<R: Rng>(
    seed_plan: &[Command],
    noise: &NoiseModel,
    distractors: &[Command],
    rng: &mut R,
) -> Vec<Command> {
    let mut out = Vec::with_capacity(seed_plan.len() + 2);
    for command in seed_plan {
        if rng.random_bool(noise.insert_prob) {
            if let Some(d) = distractors.choose(rng) {
                out.push(d.clone());
            }
        }
        if !rng.random_bool(noise.drop_prob) {
            out.push(command.clone());
        }
    }
    let mut i = 0;
    while i + 1 < out.len() {
        if rng.random_bool(noise.swap_prob) {
            out.swap(i, i + 1);
            i += 2;
        } else {
            i += 1;
        }
    }
    out
}

/// Draws `num_samples` independent perturbations of `seed_plan`. Sample `k`
/// depends only on `(seed, k)`.
pub fn synthesize_noisy_plans(
    seed_plan: &Plan,
    noise: &NoiseModel,
    distractors: &[Command],
    num_samples: usize,
    seed: u64,
) -> Vec<Plan> {
    (0..num_samples)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "noisy-sample", k as u64));
            Plan::generated(perturb(&seed_plan.commands, noise, distractors, &mut rng), k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed_plan(n: usize) -> Plan {
        Plan::goal((0..n).map(|i| format!("find(o{i})").parse().unwrap()).collect())
    }

    fn sorted(cmds: &[Command]) -> Vec<String> {
        let mut v: Vec<String> = cmds.iter().map(|c| c.to_string()).collect();
        v.sort();
        v
    }

    #[test]
    fn zero_noise_is_identity() {
        let plan = seed_plan(8);
        let samples = synthesize_noisy_plans(&plan, &NoiseModel::zero(), &[], 20, 3);
        assert_eq!(samples.len(), 20);
        assert!(samples.iter().all(|s| s.commands == plan.commands));
    }

    #[test]
    fn full_drop_annihilates() {
        let noise = NoiseModel { drop_prob: 1.0, ..NoiseModel::zero() };
        let samples = synthesize_noisy_plans(&seed_plan(8), &noise, &[], 20, 3);
        assert!(samples.iter().all(Plan::is_empty));
    }

    #[test]
    fn seeded_determinism() {
        let noise = NoiseModel { drop_prob: 0.3, swap_prob: 0.3, insert_prob: 0.3 };
        let pool = vec!["open(x)".parse().unwrap()];
        let a = synthesize_noisy_plans(&seed_plan(8), &noise, &pool, 10, 99);
        let b = synthesize_noisy_plans(&seed_plan(8), &noise, &pool, 10, 99);
        assert_eq!(a, b);
        let c = synthesize_noisy_plans(&seed_plan(8), &noise, &pool, 10, 100);
        assert_ne!(a, c);
    }

    #[test]
    fn swap_only_preserves_multiset() {
        let noise = NoiseModel { swap_prob: 0.5, ..NoiseModel::zero() };
        let plan = seed_plan(8);
        for sample in synthesize_noisy_plans(&plan, &noise, &[], 200, 5) {
            assert_eq!(sorted(&sample.commands), sorted(&plan.commands));
            // every command moves by at most one position
            for (i, c) in sample.commands.iter().enumerate() {
                let j = plan.commands.iter().position(|s| s == c).unwrap();
                assert!(i.abs_diff(j) <= 1);
            }
        }
    }

    #[test]
    fn mean_length_under_drop_matches_binomial() {
        // 10^4 seeds x 20 samples of an 8-command plan with drop 0.2:
        // mean length is 8 * 0.8 = 6.4, per-sample sd sqrt(8 * 0.2 * 0.8) ~ 1.13,
        // so the standard error of the mean is ~0.0025; allow 4 standard errors.
        let noise = NoiseModel { drop_prob: 0.2, ..NoiseModel::zero() };
        let plan = seed_plan(8);
        let mut total = 0usize;
        let mut count = 0usize;
        for seed in 0..10_000u64 {
            for s in synthesize_noisy_plans(&plan, &noise, &[], 20, seed) {
                total += s.len();
                count += 1;
            }
        }
        let mean = total as f64 / count as f64;
        let se = (8.0f64 * 0.2 * 0.8).sqrt() / (count as f64).sqrt();
        assert!((mean - 6.4).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn insertions_come_from_pool() {
        let noise = NoiseModel { insert_prob: 1.0, ..NoiseModel::zero() };
        let pool: Vec<Command> = vec!["open(x)".parse().unwrap()];
        let s = &synthesize_noisy_plans(&seed_plan(3), &noise, &pool, 1, 0)[0];
        assert_eq!(s.len(), 6);
        assert_eq!(s.commands.iter().filter(|c| c.canonical_form() == "open(x)").count(), 3);
        // empty pool: nothing to insert
        assert_eq!(synthesize_noisy_plans(&seed_plan(3), &noise, &[], 1, 0)[0].len(), 3);
    }

    #[test]
    fn probabilities_are_validated() {
        assert!(NoiseModel { drop_prob: 1.5, ..NoiseModel::zero() }.validate().is_err());
        assert!(NoiseModel { swap_prob: -0.1, ..NoiseModel::zero() }.validate().is_err());
        assert!(NoiseModel { drop_prob: 0.2, swap_prob: 0.1, insert_prob: 0.0 }.validate().is_ok());
    }
}
