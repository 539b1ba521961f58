//! One-dimensional harmonic chain under Langevin dynamics.
//!
//! Reduced units: unit masses, unit spring constants, k_B = 1. The chain has
//! free ends and starts at its rest configuration. Integration uses the
//! BAOAB splitting (half kick, half drift, exact Ornstein-Uhlenbeck
//! velocity update, half drift, half kick); with zero friction it reduces
//! to velocity Verlet.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct HarmonicChain {
    positions: Vec<f64>,
    velocities: Vec<f64>,
    forces: Vec<f64>,
    dt: f64,
    /// exp(-friction * dt)
    decay: f64,
    /// sqrt((1 - decay^2) * T)
    noise: f64,
    rng: ChaCha8Rng,
}

impl HarmonicChain {
    /// Chain of `particles` at rest with Maxwell-Boltzmann velocities at
    /// `temperature`.
    pub fn new(particles: usize, temperature: f64, friction: f64, dt: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = temperature.sqrt();
        let velocities = (0..particles)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            })
            .collect();
        let decay = (-friction * dt).exp();
        Self {
            positions: vec![0.0; particles],
            velocities,
            forces: vec![0.0; particles],
            dt,
            decay,
            noise: ((1.0 - decay * decay) * temperature).sqrt(),
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn kinetic(&self) -> f64 {
        0.5 * self.velocities.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn potential(&self) -> f64 {
        0.5 * self
            .positions
            .windows(2)
            .map(|w| (w[1] - w[0]).powi(2))
            .sum::<f64>()
    }

    fn update_forces(&mut self) {
        let x = &self.positions;
        let n = x.len();
        for i in 0..n {
            let mut f = 0.0;
            if i > 0 {
                f -= x[i] - x[i - 1];
            }
            if i + 1 < n {
                f += x[i + 1] - x[i];
            }
            self.forces[i] = f;
        }
    }

    pub fn step(&mut self) {
        let half = 0.5 * self.dt;
        for ((x, v), f) in self
            .positions
            .iter_mut()
            .zip(self.velocities.iter_mut())
            .zip(&self.forces)
        {
            *v += half * f;
            *x += half * *v;
        }
        if self.noise > 0.0 || self.decay != 1.0 {
            for (x, v) in self.positions.iter_mut().zip(self.velocities.iter_mut()) {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *v = self.decay * *v + self.noise * z;
                *x += half * *v;
            }
        } else {
            for (x, v) in self.positions.iter_mut().zip(&self.velocities) {
                *x += half * v;
            }
        }
        self.update_forces();
        for (v, f) in self.velocities.iter_mut().zip(&self.forces) {
            *v += half * f;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_rest_with_thermal_velocities() {
        let c = HarmonicChain::new(2000, 4.0, 1.0, 0.02, 1);
        assert_eq!(c.potential(), 0.0);
        let per_dof = c.kinetic() / c.len() as f64;
        assert!((per_dof - 2.0).abs() < 0.2, "{per_dof}");
    }

    #[test]
    fn two_body_oscillation_period() {
        // relative coordinate oscillates with omega = sqrt(2)
        let mut c = HarmonicChain::new(2, 0.0, 0.0, 0.001, 0);
        c.positions = vec![-0.5, 0.5];
        c.update_forces();
        let period = 2.0 * std::f64::consts::PI / 2f64.sqrt();
        let steps = (period / 0.001).round() as usize;
        for _ in 0..steps {
            c.step();
        }
        let sep = c.positions[1] - c.positions[0];
        assert!((sep - 1.0).abs() < 1e-3, "{sep}");
    }

    #[test]
    fn seeded_runs_match() {
        let mut a = HarmonicChain::new(50, 300.0, 0.1, 0.02, 9);
        let mut b = HarmonicChain::new(50, 300.0, 0.1, 0.02, 9);
        for _ in 0..100 {
            a.step();
            b.step();
        }
        assert_eq!(a.positions(), b.positions());
    }
}
