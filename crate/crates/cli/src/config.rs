//! JSON run configuration: schema-validated, unknown keys rejected.

use serde::Deserialize;

use crlab_core::formula::Formula;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeConfig,
    pub rho: FormulaSpec,
    pub scenario: ScenarioConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(rename = "N")]
    pub n: u32,
}

/// Either `{"formula": "..."}` or `{"const": x}`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormulaSpec {
    #[serde(default)]
    pub formula: Option<String>,
    #[serde(default, rename = "const")]
    pub constant: Option<f64>,
}

impl FormulaSpec {
    pub fn build(&self) -> Result<Formula, String> {
        match (&self.formula, self.constant) {
            (Some(src), None) => Formula::parse(src).map_err(|e| e.to_string()),
            (None, Some(value)) => Ok(Formula::constant(value)),
            (Some(_), Some(_)) => Err("field specifies both 'formula' and 'const'".to_owned()),
            (None, None) => Err("field needs either 'formula' or 'const'".to_owned()),
        }
    }
}

/// Scenario block. The `kind` selects the scenario; the remaining fields
/// are scenario parameters, validated per kind (a field that a scenario
/// does not use is rejected).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: String,
    #[serde(default)]
    pub rho_hat: Option<FormulaSpec>,
    #[serde(default)]
    pub w: Option<FormulaSpec>,
    /// Right-translation element `[i, j, k]` for certify-ce.
    #[serde(default)]
    pub phi: Option<[i64; 3]>,
    #[serde(default, rename = "Ns")]
    pub ns: Option<Vec<u32>>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub zero_tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub descending: Option<bool>,
}

impl ScenarioConfig {
    /// Rejects parameters that the selected scenario does not consume.
    pub fn check_fields(&self) -> Result<(), String> {
        let allowed: &[&str] = match self.kind.as_str() {
            "spectral" => &["tol", "max_iter"],
            "yamabe" => &["tol", "zero_tol", "max_iter"],
            "solve" => &["rho_hat", "tol", "max_iter", "descending"],
            "manufacture" => &["w", "tol", "max_iter"],
            "trichotomy" => &["tol", "zero_tol", "max_iter"],
            "necessary" => &["w", "tol"],
            "certify-ce" => &["w", "phi", "tol", "zero_tol"],
            "convergence" => &["Ns"],
            other => return Err(format!("unknown scenario kind '{other}'")),
        };
        let reject = |name: &str, present: bool| {
            if present && !allowed.contains(&name) {
                Err(format!(
                    "scenario '{}' does not take the field '{}'",
                    self.kind, name
                ))
            } else {
                Ok(())
            }
        };
        reject("rho_hat", self.rho_hat.is_some())?;
        reject("w", self.w.is_some())?;
        reject("phi", self.phi.is_some())?;
        reject("Ns", self.ns.is_some())?;
        reject("tol", self.tol.is_some())?;
        reject("zero_tol", self.zero_tol.is_some())?;
        reject("max_iter", self.max_iter.is_some())?;
        reject("descending", self.descending.is_some())?;
        Ok(())
    }
}
