use super::AdapterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reset {
    /// Subtract the threshold after a spike.
    #[default]
    Soft,
    /// Set the membrane to zero after a spike.
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    /// Membrane decay per step, in `(0, 1]`.
    pub leak: f64,
    pub threshold: f64,
    /// Width `a` of the surrogate window around the threshold.
    pub surrogate_width: f64,
    pub reset: Reset,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams {
            leak: 0.5,
            threshold: 1.0,
            surrogate_width: 1.0,
            reset: Reset::Soft,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<(), AdapterError> {
        if !(self.leak > 0.0 && self.leak <= 1.0) {
            return Err(AdapterError::InvalidParams(format!(
                "leak {} outside (0, 1]",
                self.leak
            )));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(AdapterError::InvalidParams(format!(
                "threshold {} must be positive",
                self.threshold
            )));
        }
        if !(self.surrogate_width > 0.0 && self.surrogate_width.is_finite()) {
            return Err(AdapterError::InvalidParams(format!(
                "surrogate width {} must be positive",
                self.surrogate_width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifState {
    pub membrane: Vec<f64>,
    /// Spikes of the last step, each 0.0 or 1.0.
    pub spikes: Vec<f64>,
}

impl LifState {
    pub fn zeros(n: usize) -> Self {
        LifState {
            membrane: vec![0.0; n],
            spikes: vec![0.0; n],
        }
    }
}

/// One integrate, fire and reset step. Returns the new state and its spikes.
pub fn lif_step(
    state: &LifState,
    input: &[f64],
    p: &LifParams,
) -> Result<(LifState, Vec<f64>), AdapterError> {
    if input.len() != state.membrane.len() {
        return Err(AdapterError::DimensionMismatch(format!(
            "{} input currents for {} neurons",
            input.len(),
            state.membrane.len()
        )));
    }
    let mut membrane = Vec::with_capacity(input.len());
    let mut spikes = Vec::with_capacity(input.len());
    for (&u, &x) in state.membrane.iter().zip(input) {
        let v = p.leak * u + x;
        if !v.is_finite() {
            return Err(AdapterError::NonFiniteState { timestep: 0 });
        }
        let s = if v >= p.threshold { 1.0 } else { 0.0 };
        membrane.push(match p.reset {
            Reset::Soft => v - p.threshold * s,
            Reset::Hard => v * (1.0 - s),
        });
        spikes.push(s);
    }
    Ok((
        LifState {
            membrane,
            spikes: spikes.clone(),
        },
        spikes,
    ))
}
