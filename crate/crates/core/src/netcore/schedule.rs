/// Piecewise-constant step decay: `base_lr · decay_factor^⌊i / decay_every⌋`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            decay_factor: 0.1,
            decay_every: 1000,
        }
    }
}

impl LrSchedule {
    pub fn new(base_lr: f64, decay_factor: f64, decay_every: usize) -> Self {
        assert!(base_lr > 0.0, "base learning rate must be positive");
        assert!(
            decay_factor > 0.0 && decay_factor <= 1.0,
            "decay factor must lie in (0, 1]"
        );
        assert!(decay_every > 0, "decay interval must be positive");
        Self {
            base_lr,
            decay_factor,
            decay_every,
        }
    }

    pub fn constant(lr: f64) -> Self {
        Self::new(lr, 1.0, usize::MAX)
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        let k = (iteration / self.decay_every) as i32;
        self.base_lr * self.decay_factor.powi(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_decay_boundaries() {
        let s = LrSchedule::new(1e-3, 0.1, 1000);
        assert_eq!(s.lr_at(0), 1e-3);
        assert_eq!(s.lr_at(999), 1e-3);
        assert!((s.lr_at(1000) - 1e-4).abs() < 1e-18);
        assert!((s.lr_at(4999) - 1e-7).abs() < 1e-20);
    }

    #[test]
    fn unit_factor_is_constant() {
        let s = LrSchedule::new(1e-3, 1.0, 1000);
        for i in [0, 1, 999, 1000, 10_000, 1_000_000] {
            assert_eq!(s.lr_at(i), 1e-3);
        }
        assert_eq!(LrSchedule::constant(0.5).lr_at(usize::MAX - 1), 0.5);
    }

    #[test]
    fn always_positive() {
        let s = LrSchedule::new(1e-3, 0.1, 1);
        assert!(s.lr_at(300) > 0.0);
    }
}
