//! Trust-region calibration: a rolling buffer of recent parameter gradients
//! whose spread sets the sampling width.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIGMA_FLOOR: f64 = 1e-12;
pub const WIDTH_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// L2 norm of the per-coordinate population standard deviation.
    #[default]
    Raw,
    /// The same norm divided by the L2 norm of the per-coordinate mean.
    MeanNormalized,
}

/// Unfloored spread of a set of equal-length gradients.
pub fn gradient_spread<'a, I>(grads: I, mode: SigmaMode) -> f64
where
    I: IntoIterator<Item = &'a [f64]>,
    I::IntoIter: Clone,
{
    let it = grads.into_iter();
    let n = it.clone().count();
    let dim = it.clone().next().map_or(0, <[f64]>::len);
    if n == 0 || dim == 0 {
        return 0.0;
    }
    let mut mean = vec![0.0; dim];
    for g in it.clone() {
        mean.iter_mut().zip(g).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for g in it {
        for ((q, v), m) in var.iter_mut().zip(g).zip(&mean) {
            *q += (v - m) * (v - m);
        }
    }
    let spread = var.iter().map(|q| q / n as f64).sum::<f64>().sqrt();
    match mode {
        SigmaMode::Raw => spread,
        SigmaMode::MeanNormalized => spread / mean.iter().map(|m| m * m).sum::<f64>().sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrustRegion {
    r0: f64,
    capacity: usize,
    mode: SigmaMode,
    width_floor: f64,
    width_cap: f64,
    sigma: f64,
    buffer: VecDeque<Vec<f64>>,
}

impl TrustRegion {
    pub fn new(r0: f64, capacity: usize, mode: SigmaMode, width_floor: f64, width_cap: f64) -> Result<Self> {
        if !(r0 >= 0.0 && r0.is_finite()) {
            return Err(Error::Config(format!("r0 must be finite and non-negative, got {r0}")));
        }
        if capacity == 0 {
            return Err(Error::Config("gradient buffer needs room for at least one entry".into()));
        }
        if !(width_floor > 0.0 && width_cap >= width_floor && width_cap.is_finite()) {
            return Err(Error::Config(format!(
                "width clamps must satisfy 0 < floor <= cap, got [{width_floor}, {width_cap}]"
            )));
        }
        Ok(Self {
            r0,
            capacity,
            mode,
            width_floor,
            width_cap,
            sigma: 1.0,
            buffer: VecDeque::with_capacity(capacity),
        })
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn buffer(&self) -> &VecDeque<Vec<f64>> {
        &self.buffer
    }

    pub fn clamps(&self) -> (f64, f64) {
        (self.width_floor, self.width_cap)
    }

    /// Sampling width `r0/σ`, clamped; exactly zero when `r0 = 0`.
    pub fn effective_width(&self) -> f64 {
        if self.r0 == 0.0 {
            return 0.0;
        }
        (self.r0 / self.sigma).clamp(self.width_floor, self.width_cap)
    }

    /// Pushes `g`, evicting the oldest entry when full, and recomputes σ.
    pub fn calibrate(&mut self, g: &[f64]) -> Result<f64> {
        if let Some(first) = self.buffer.front() {
            if first.len() != g.len() {
                return Err(Error::Dimension {
                    what: "buffered gradient",
                    expected: first.len(),
                    got: g.len(),
                });
            }
        }
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(g.to_vec());
        let s = gradient_spread(self.buffer.iter().map(Vec::as_slice), self.mode);
        self.sigma = if s.is_nan() { SIGMA_FLOOR } else { s.max(SIGMA_FLOOR) };
        Ok(self.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(r0: f64, cap: usize) -> TrustRegion {
        TrustRegion::new(r0, cap, SigmaMode::Raw, WIDTH_FLOOR, 1.0).unwrap()
    }

    #[test]
    fn sigma_of_opposite_unit_vectors_is_one() {
        let mut tr = region(1e-4, 10);
        tr.calibrate(&[1.0, 0.0]).unwrap();
        assert_eq!(tr.calibrate(&[-1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn oldest_gradient_is_evicted_first() {
        let mut tr = region(1e-4, 5);
        for i in 0..6 {
            tr.calibrate(&[i as f64]).unwrap();
        }
        let kept: Vec<f64> = tr.buffer().iter().map(|g| g[0]).collect();
        assert_eq!(kept, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn zero_variance_floors_sigma_and_caps_width() {
        let mut tr = region(1e-4, 10);
        tr.calibrate(&[0.5, 0.5]).unwrap();
        tr.calibrate(&[0.5, 0.5]).unwrap();
        assert_eq!(tr.sigma(), SIGMA_FLOOR);
        assert_eq!(tr.effective_width(), 1.0);
    }

    #[test]
    fn zero_r0_means_zero_width() {
        let mut tr = region(0.0, 3);
        assert_eq!(tr.effective_width(), 0.0);
        tr.calibrate(&[1.0]).unwrap();
        assert_eq!(tr.effective_width(), 0.0);
    }

    #[test]
    fn initial_width_is_r0() {
        assert_eq!(region(1e-4, 10).effective_width(), 1e-4);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut tr = region(1e-4, 3);
        tr.calibrate(&[1.0, 2.0]).unwrap();
        assert!(tr.calibrate(&[1.0]).is_err());
        assert_eq!(tr.buffer().len(), 1);
    }

    #[test]
    fn mean_normalized_divides_by_mean_norm() {
        let g = [vec![1.0, 0.0], vec![3.0, 0.0]];
        let raw = gradient_spread(g.iter().map(Vec::as_slice), SigmaMode::Raw);
        let rel = gradient_spread(g.iter().map(Vec::as_slice), SigmaMode::MeanNormalized);
        assert_eq!(raw, 1.0);
        assert_eq!(rel, 0.5);
    }

    #[test]
    fn bad_settings_are_rejected() {
        assert!(TrustRegion::new(-1.0, 10, SigmaMode::Raw, WIDTH_FLOOR, 1.0).is_err());
        assert!(TrustRegion::new(1e-4, 0, SigmaMode::Raw, WIDTH_FLOOR, 1.0).is_err());
        assert!(TrustRegion::new(1e-4, 5, SigmaMode::Raw, 2.0, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn buffer_holds_last_min_t_t0(t0 in 1usize..8, t in 0usize..20) {
            let mut tr = region(1e-4, t0);
            for i in 0..t {
                tr.calibrate(&[i as f64, -(i as f64)]).unwrap();
            }
            let expect: Vec<f64> = (t.saturating_sub(t0)..t).map(|i| i as f64).collect();
            let got: Vec<f64> = tr.buffer().iter().map(|g| g[0]).collect();
            proptest::prop_assert_eq!(got, expect);
            let w = tr.effective_width();
            proptest::prop_assert!((WIDTH_FLOOR..=1.0).contains(&w));
            proptest::prop_assert!(tr.sigma() >= SIGMA_FLOOR);
        }
    }
}
