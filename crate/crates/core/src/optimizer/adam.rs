use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.learning_rate > 0.0) || !unit(self.beta1) || !unit(self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `w` in place.
pub fn adam_step(state: &mut AdamState, w: &mut [f64], g: &[f64], cfg: &AdamConfig) -> Result<()> {
    if state.m.len() != g.len() || state.v.len() != g.len() {
        return Err(Error::length("adam moments", state.m.len(), g.len()));
    }
    if w.len() != g.len() {
        return Err(Error::length("adam parameters", w.len(), g.len()));
    }
    if let Some(i) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("gradient[{i}] = {}", g[i])));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..g.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        w[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// `avg ← decay·avg + (1 − decay)·w`
pub fn polyak_update(avg: &mut [f64], w: &[f64], decay: f64) -> Result<()> {
    if avg.len() != w.len() {
        return Err(Error::length("polyak_update", avg.len(), w.len()));
    }
    if !(0.0..=1.0).contains(&decay) {
        return Err(Error::invalid(format!("Polyak decay {decay} outside [0, 1]")));
    }
    for (a, &x) in avg.iter_mut().zip(w) {
        *a = decay * *a + (1.0 - decay) * x;
    }
    Ok(())
}
