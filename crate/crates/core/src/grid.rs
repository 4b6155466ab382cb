use crate::error::{Error, Result};

/// Uniform time grid `0, dt, ..., n_steps * dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Grid(format!("dt must be positive and finite, got {dt}")));
        }
        if !(t_max >= dt) || !t_max.is_finite() {
            return Err(Error::Grid(format!("t_max must be finite and >= dt, got {t_max}")));
        }
        let ratio = t_max / dt;
        let n_steps = ratio.round();
        // tolerate rounding in user-supplied decimals such as 20 / 1e-3
        let n_steps = if (ratio - n_steps).abs() <= 1e-9 * ratio.max(1.0) {
            n_steps as usize
        } else {
            ratio.floor() as usize
        };
        Ok(TimeGrid { dt, n_steps })
    }

    /// A grid that ends exactly at `horizon`; `dt` must divide it.
    pub fn spanning(dt: f64, horizon: f64) -> Result<Self> {
        let g = Self::new(dt, horizon)?;
        if (g.t_end() - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::Grid(format!(
                "dt = {dt} does not divide the horizon T = {horizon}"
            )));
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.n_steps)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.t(k))
    }

    /// Same spacing, fewer steps.
    pub fn truncated(&self, n_steps: usize) -> Self {
        TimeGrid {
            dt: self.dt,
            n_steps: n_steps.min(self.n_steps),
        }
    }

    pub fn same_spacing(&self, other: &TimeGrid) -> bool {
        (self.dt - other.dt).abs() <= 1e-15 * self.dt.max(other.dt)
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.carry);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts_steps_from_decimal_inputs() {
        let g = TimeGrid::new(1e-3, 20.0).unwrap();
        assert_eq!(g.n_steps, 20_000);
        assert_eq!(g.len(), 20_001);
        assert!((g.t_end() - 20.0).abs() < 1e-12);
        assert!(TimeGrid::spanning(0.3, 1.0).is_err());
        assert!(TimeGrid::new(0.0, 1.0).is_err());
        assert!(TimeGrid::new(0.5, 0.1).is_err());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }
}
