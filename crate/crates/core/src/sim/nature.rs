use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::beacon::stream;
use super::config::NatureConfig;
use crate::error::{Error, Result};

/// Nature's proposal for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub x0: usize,
    pub x1: usize,
    pub p0: f64,
    pub p1: f64,
}

/// Seeded nature model. Draws for round `t` depend only on `(seed, t)`.
#[derive(Debug, Clone)]
pub struct Nature {
    config: NatureConfig,
    n_users: usize,
    rho: f64,
    seed: u64,
    /// Per-pair means (symmetric), for the kinds that use them.
    means: Vec<f64>,
    users: Vec<usize>,
    resources: Vec<usize>,
}

impl Nature {
    pub fn new(config: &NatureConfig, n_users: usize, rho: f64, seed: u64) -> Self {
        let mut means = Vec::new();
        let spread = match config {
            NatureConfig::SymmetricRandom { spread, .. }
            | NatureConfig::ExanteSymmetric { spread, .. }
            | NatureConfig::Filtering { spread, .. } => Some(*spread),
            _ => None,
        };
        if let Some(spread) = spread {
            let mut rng = stream(seed, "nature-means", 0);
            means = vec![0.0; n_users * n_users];
            for a in 0..n_users {
                for b in (a + 1)..n_users {
                    let m = if spread > 0.0 { rng.gen_range(-spread..=spread) } else { 0.0 };
                    means[a * n_users + b] = m;
                    means[b * n_users + a] = m;
                }
            }
        }
        let (users, resources) = match config {
            NatureConfig::Filtering { resources, .. } => {
                let users = (0..n_users).filter(|u| !resources.contains(u)).collect();
                (users, resources.clone())
            }
            _ => ((0..n_users).collect(), Vec::new()),
        };
        Self {
            config: config.clone(),
            n_users,
            rho,
            seed,
            means,
            users,
            resources,
        }
    }

    /// Per-pair mean payoff, where defined.
    pub fn mean(&self, a: usize, b: usize) -> f64 {
        self.means.get(a * self.n_users + b).copied().unwrap_or(0.0)
    }

    pub fn is_resource(&self, user: usize) -> bool {
        self.resources.contains(&user)
    }

    fn uniform_pair(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        let a = rng.gen_range(0..self.n_users);
        let mut b = rng.gen_range(0..self.n_users - 1);
        if b >= a {
            b += 1;
        }
        (a, b)
    }

    fn noisy(&self, rng: &mut ChaCha8Rng, mean: f64, noise: f64) -> f64 {
        let e = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
        (mean + e).clamp(-self.rho, self.rho)
    }

    pub fn draw(&self, t: u64) -> Draw {
        let mut rng = stream(self.seed, "nature", t);
        match &self.config {
            NatureConfig::FavorGame { benefit } => {
                let (x0, x1) = self.uniform_pair(&mut rng);
                let (giver_cost, benefit_payoff) = favor_payoff_draw(&mut rng, self.rho, *benefit);
                let (p0, p1) = if rng.gen_bool(0.5) {
                    (giver_cost, benefit_payoff)
                } else {
                    (benefit_payoff, giver_cost)
                };
                Draw { x0, x1, p0, p1 }
            }
            NatureConfig::SymmetricRandom { noise, .. } => {
                let (x0, x1) = self.uniform_pair(&mut rng);
                let p = self.noisy(&mut rng, self.mean(x0, x1), *noise);
                Draw { x0, x1, p0: p, p1: p }
            }
            NatureConfig::ExanteSymmetric { noise, .. } => {
                let (x0, x1) = self.uniform_pair(&mut rng);
                let m = self.mean(x0, x1);
                let p0 = self.noisy(&mut rng, m, *noise);
                let p1 = self.noisy(&mut rng, m, *noise);
                Draw { x0, x1, p0, p1 }
            }
            NatureConfig::Filtering { noise, .. } => {
                let x0 = self.users[rng.gen_range(0..self.users.len())];
                let x1 = self.resources[rng.gen_range(0..self.resources.len())];
                let p0 = self.noisy(&mut rng, self.mean(x0, x1), *noise);
                Draw { x0, x1, p0, p1: 0.0 }
            }
            NatureConfig::AdversarialPm1 => {
                let (x0, x1) = self.uniform_pair(&mut rng);
                let p = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                Draw { x0, x1, p0: p, p1: p }
            }
            NatureConfig::Scripted { rounds } => {
                let r = rounds[(t % rounds.len() as u64) as usize];
                Draw {
                    x0: r.x0,
                    x1: r.x1,
                    p0: r.p0,
                    p1: r.p1,
                }
            }
        }
    }
}

/// `(giver, receiver)` payoffs of one favor: the giver pays 1, the receiver
/// gets `rho` with probability `(1 + benefit) / rho`.
pub fn favor_payoff_draw<R: Rng>(rng: &mut R, rho: f64, benefit: f64) -> (f64, f64) {
    let pr = (1.0 + benefit) / rho;
    let receiver = if rng.gen::<f64>() < pr { rho } else { 0.0 };
    (-1.0, receiver)
}

/// Checked variant of [`favor_payoff_draw`].
pub fn favor_payoff<R: Rng>(rng: &mut R, rho: f64, benefit: f64) -> Result<(f64, f64)> {
    if !(benefit >= 0.0 && rho > 1.0 + benefit) {
        return Err(Error::InvalidParameter(format!(
            "favor game needs rho > 1 + benefit (rho {rho}, benefit {benefit})"
        )));
    }
    Ok(favor_payoff_draw(rng, rho, benefit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::MeanStderr;

    #[test]
    fn favor_receiver_mean() {
        let mut rng = stream(1, "test", 0);
        let draws: Vec<f64> = (0..100_000).map(|_| favor_payoff(&mut rng, 4.0, 0.2).unwrap().1).collect();
        let m = MeanStderr::of(&draws);
        assert!(m.within_sigmas(1.2, 3.0), "{m:?}");
        let hits = draws.iter().filter(|&&v| v == 4.0).count() as f64 / draws.len() as f64;
        assert!((hits - 0.3).abs() < 0.01);
        assert!(favor_payoff(&mut rng, 1.1, 0.2).is_err());
    }

    #[test]
    fn favor_game_draws_giver_symmetrically() {
        let nat = Nature::new(&NatureConfig::FavorGame { benefit: 0.2 }, 4, 4.0, 3);
        let n = 20_000;
        let first_gives = (0..n).filter(|&t| nat.draw(t).p0 == -1.0).count() as f64 / n as f64;
        assert!((first_gives - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
        for t in 0..100 {
            let d = nat.draw(t);
            assert_ne!(d.x0, d.x1);
            assert_eq!(d, nat.draw(t));
        }
    }

    #[test]
    fn filtering_pairs_users_with_resources() {
        let cfg = NatureConfig::Filtering {
            resources: vec![3],
            spread: 0.5,
            noise: 0.1,
        };
        let nat = Nature::new(&cfg, 4, 1.0, 0);
        for t in 0..50 {
            let d = nat.draw(t);
            assert_eq!(d.x1, 3);
            assert_ne!(d.x0, 3);
            assert_eq!(d.p1, 0.0);
        }
    }

    #[test]
    fn exante_kind_has_equal_conditional_means() {
        let cfg = NatureConfig::ExanteSymmetric { spread: 1.0, noise: 1.0 };
        let nat = Nature::new(&cfg, 3, 2.0, 11);
        let diffs: Vec<f64> = (0..100_000).map(|t| {
            let d = nat.draw(t);
            d.p0 - d.p1
        }).collect();
        assert!(MeanStderr::of(&diffs).within_sigmas(0.0, 3.0));
    }
}
