use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// β, α = 1 − β and ᾱ = ∏ α tables for steps `1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::invalid("every beta must lie in (0, 1)"));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(NoiseSchedule {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(format!(
                "step {t} outside 1..={}",
                self.steps()
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }
}

/// β rising linearly from `beta_1` to `beta_t` over `steps` steps.
pub fn linear_schedule(steps: usize, beta_1: f64, beta_t: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::invalid("schedule needs at least one step"));
    }
    if !(0.0 < beta_1 && beta_1 <= beta_t && beta_t < 1.0) {
        return Err(Error::invalid(format!(
            "need 0 < beta_1 <= beta_T < 1, got {beta_1}, {beta_t}"
        )));
    }
    let betas = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_1
            } else {
                beta_1 + (beta_t - beta_1) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    NoiseSchedule::from_betas(betas)
}

/// Forward noising: `√ᾱ_t · x0 + √(1 − ᾱ_t) · eps`.
pub fn q_sample(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    if x0.len() != eps.len() {
        return Err(Error::ShapeMismatch(format!(
            "x0 has {} values, eps {}",
            x0.len(),
            eps.len()
        )));
    }
    let (s, n) = (sched.alpha_bar(t).sqrt(), (1.0 - sched.alpha_bar(t)).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| s * x + n * e).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::standard_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_step() {
        let s = linear_schedule(1, 1e-4, 0.02).unwrap();
        assert_eq!(s.alpha_bar(1), 1.0 - 1e-4);
    }

    #[test]
    fn default_schedule_shape() {
        let s = linear_schedule(100, 1e-4, 0.02).unwrap();
        // direct product, independent of the scan in from_betas
        let mut prod = 1.0;
        for t in 1..=100 {
            let beta = 1e-4 + (0.02 - 1e-4) * (t - 1) as f64 / 99.0;
            prod *= 1.0 - beta;
            assert!((s.alpha_bar(t) - prod).abs() < 1e-14);
            if t > 1 {
                assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            }
        }
        assert!(s.alpha_bar(100) > 0.0 && s.alpha_bar(100) < 0.5);
        assert!((s.beta(100) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn invalid_endpoints() {
        assert!(linear_schedule(100, 0.02, 1e-4).is_err());
        assert!(linear_schedule(0, 1e-4, 0.02).is_err());
        assert!(linear_schedule(10, 0.0, 0.02).is_err());
        assert!(linear_schedule(10, 1e-4, 1.0).is_err());
    }

    #[test]
    fn q_sample_edges() {
        let s = linear_schedule(100, 1e-4, 0.02).unwrap();
        let x0 = [1.0, -2.0, 0.5];
        let out = q_sample(&x0, 37, &[0.0; 3], &s).unwrap();
        for (o, x) in out.iter().zip(&x0) {
            assert_eq!(*o, s.alpha_bar(37).sqrt() * x);
        }
        let eps = [0.3, -0.1, 2.0];
        let out = q_sample(&[0.0; 3], 100, &eps, &s).unwrap();
        for (o, e) in out.iter().zip(&eps) {
            assert_eq!(*o, (1.0 - s.alpha_bar(100)).sqrt() * e);
        }
        assert!(q_sample(&x0, 0, &eps, &s).is_err());
        assert!(q_sample(&x0, 101, &eps, &s).is_err());
        assert!(q_sample(&x0, 5, &eps[..2], &s).is_err());
    }

    #[test]
    fn q_sample_monte_carlo() {
        let s = linear_schedule(100, 1e-4, 0.02).unwrap();
        let x0 = [1.5];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        for t in [1, 50, 100] {
            let draws: Vec<f64> = (0..n)
                .map(|_| q_sample(&x0, t, &standard_normal(&mut rng, 1), &s).unwrap()[0])
                .collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let want_var = 1.0 - s.alpha_bar(t);
            let se = (want_var / n as f64).sqrt();
            assert!((mean - s.alpha_bar(t).sqrt() * 1.5).abs() < 3.0 * se, "t={t} mean {mean}");
            assert!((var / want_var - 1.0).abs() < 0.05, "t={t} var {var} vs {want_var}");
        }
    }
}
