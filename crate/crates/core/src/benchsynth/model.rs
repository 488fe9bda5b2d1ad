use serde::{Deserialize, Serialize};

/// Empirical cell polarization law
/// `V = E₀ − A·ln((i + i_ε)/i₀) − R·i − m·exp(n·i)`, with `i` in A/cm².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolarizationParams {
    /// Open-circuit voltage, V.
    pub e0: f64,
    /// Tafel slope, V.
    pub tafel: f64,
    /// Exchange current density, A/cm².
    pub i0: f64,
    /// Area-specific ohmic resistance, Ω·cm².
    pub resistance: f64,
    /// Mass-transport coefficient, V.
    pub m: f64,
    /// Mass-transport exponent, cm²/A.
    pub n: f64,
    /// Keeps the logarithm finite at zero current, A/cm².
    pub i_eps: f64,
}

impl Default for PolarizationParams {
    fn default() -> Self {
        Self { e0: 1.0, tafel: 0.03, i0: 1e-4, resistance: 0.25, m: 2e-5, n: 8.0, i_eps: 1e-6 }
    }
}

impl PolarizationParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("e0", self.e0),
            ("tafel", self.tafel),
            ("i0", self.i0),
            ("resistance", self.resistance),
            ("n", self.n),
            ("i_eps", self.i_eps),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(format!("polarization parameter {name} = {v} must be positive"));
        }
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(format!("polarization parameter m = {} must be non-negative", self.m));
        }
        Ok(())
    }
}

/// Cell voltage at current density `i`, clamped to `[0, 1]` V.
pub fn polarization_model(i: f64, p: &PolarizationParams) -> f64 {
    let v = p.e0 - p.tafel * ((i + p.i_eps) / p.i0).ln() - p.resistance * i - p.m * (p.n * i).exp();
    v.clamp(0.0, 1.0)
}
