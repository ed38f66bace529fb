//! Prescribed-time scaling function and the cascade of observer stages.
//!
//! Each stage `k` owns a window `[t_{n-k}, t_{n-k} + T_k)` during which its
//! feedback gain carries the time-varying term `β·h/(t_end - t)`. Windows run
//! in inverted order: stage `n` starts at `t0`, stage `1` ends at
//! `t* = t0 + Σ T_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EXPONENT: f64 = 2.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingWindow {
    pub start: f64,
    pub duration: f64,
    pub exponent: f64,
}

impl ScalingWindow {
    pub fn new(start: f64, duration: f64, exponent: f64) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::Invalid(format!("window duration must be > 0, got {duration}")));
        }
        if !(exponent > 2.0) || !exponent.is_finite() {
            return Err(Error::Invalid(format!("scaling exponent h must be > 2, got {exponent}")));
        }
        if !start.is_finite() {
            return Err(Error::Invalid(format!("window start {start} is not finite")));
        }
        Ok(Self {
            start,
            duration,
            exponent,
        })
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end()
    }

    /// `ς(t) = (T/(t0+T-t))^h` on the window, `1` elsewhere.
    pub fn varsigma(&self, t: f64) -> f64 {
        if self.contains(t) {
            (self.duration / (self.end() - t)).powf(self.exponent)
        } else {
            1.0
        }
    }

    /// `ς` with the distance to the window end clamped below by `guard`,
    /// consistent with [`ScalingWindow::rate_ratio`].
    pub fn varsigma_clamped(&self, t: f64, guard: f64) -> f64 {
        if self.contains(t) {
            (self.duration / (self.end() - t).max(guard)).powf(self.exponent)
        } else {
            1.0
        }
    }

    /// `ς̇/ς = h/(t0+T-t)` on the window (denominator clamped at `guard`), `0`
    /// elsewhere.
    pub fn rate_ratio(&self, t: f64, guard: f64) -> f64 {
        if self.contains(t) {
            self.exponent / (self.end() - t).max(guard)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSchedule {
    t0: f64,
    stage_durations: Vec<f64>,
    exponent: f64,
}

impl CascadeSchedule {
    /// `stage_durations[k-1]` is `T_obs^k`, the window length of stage `k`.
    pub fn new(t0: f64, stage_durations: Vec<f64>, exponent: f64) -> Result<Self> {
        if stage_durations.is_empty() {
            return Err(Error::Invalid("cascade needs at least one stage".into()));
        }
        if !t0.is_finite() {
            return Err(Error::Invalid(format!("t0 = {t0} is not finite")));
        }
        for (k, &d) in stage_durations.iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Invalid(format!(
                    "stage {} duration must be > 0, got {}",
                    k + 1,
                    d
                )));
            }
        }
        if !(exponent > 2.0) || !exponent.is_finite() {
            return Err(Error::Invalid(format!("scaling exponent h must be > 2, got {exponent}")));
        }
        Ok(Self {
            t0,
            stage_durations,
            exponent,
        })
    }

    /// `n` equal windows splitting `total` seconds.
    pub fn uniform(t0: f64, order: usize, total: f64, exponent: f64) -> Result<Self> {
        Self::new(t0, vec![total / order as f64; order], exponent)
    }

    pub fn order(&self) -> usize {
        self.stage_durations.len()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn stage_durations(&self) -> &[f64] {
        &self.stage_durations
    }

    /// `T_obs = Σ T_obs^k`.
    pub fn total(&self) -> f64 {
        self.stage_durations.iter().sum()
    }

    /// `t* = t0 + T_obs`, the end of stage 1's window.
    pub fn settle_time(&self) -> f64 {
        self.stage_start(1) + self.stage_durations[0]
    }

    /// `t_{n-k} = t0 + Σ_{j=k+1..n} T_obs^j`. `k` is 1-based.
    pub fn stage_start(&self, k: usize) -> f64 {
        assert!(k >= 1 && k <= self.order(), "stage {k} out of range");
        // Summed from stage n downwards so every boundary is computed the same
        // way regardless of which stage asks for it.
        let mut t = self.t0;
        for j in ((k + 1)..=self.order()).rev() {
            t += self.stage_durations[j - 1];
        }
        t
    }

    pub fn window(&self, k: usize) -> ScalingWindow {
        ScalingWindow {
            start: self.stage_start(k),
            duration: self.stage_durations[k - 1],
            exponent: self.exponent,
        }
    }

    /// Window end of stage `k`. For `k > 1` this equals `stage_start(k - 1)`
    /// bit-for-bit.
    pub fn stage_end(&self, k: usize) -> f64 {
        if k > 1 {
            self.stage_start(k - 1)
        } else {
            self.settle_time()
        }
    }

    /// Stage boundaries `t0 = t_0 < t_1 < … < t_n = t*`, ascending.
    pub fn boundaries(&self) -> Vec<f64> {
        let n = self.order();
        let mut out: Vec<f64> = (1..=n).rev().map(|k| self.stage_start(k)).collect();
        out.push(self.settle_time());
        out
    }

    /// The stage whose window contains `t`, if any.
    pub fn active_stage(&self, t: f64) -> Option<usize> {
        (1..=self.order()).find(|&k| t >= self.stage_start(k) && t < self.stage_end(k))
    }

    /// The ratio part `ς̇/ς` of stage `k`'s gain at time `t`.
    pub fn stage_gain(&self, k: usize, t: f64, guard: f64) -> f64 {
        let start = self.stage_start(k);
        let end = self.stage_end(k);
        if t >= start && t < end {
            self.exponent / (end - t).max(guard)
        } else {
            0.0
        }
    }

    /// Clamped `ς` of stage `k`, matching [`CascadeSchedule::stage_gain`].
    pub fn stage_varsigma(&self, k: usize, t: f64, guard: f64) -> f64 {
        let start = self.stage_start(k);
        let end = self.stage_end(k);
        if t >= start && t < end {
            ((end - start) / (end - t).max(guard)).powf(self.exponent)
        } else {
            1.0
        }
    }
}
