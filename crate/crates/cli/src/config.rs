//! Run configuration: a TOML (or JSON) tree with one block per concern.
//!
//! ```toml
//! [kernel]
//! family = "C"          # A | B | C
//! epsilon = 0.5         # C only; B takes `delta`
//! base = "gaussian"     # or "exp-mixture" with `atoms = [{ weight = .., rate = .. }]`
//! gap = "exp-gap"       # or "rational-gap"
//! d_star = 0.5
//! l = 0.5
//!
//! [nonlinearity]
//! family = "I"          # I: alpha | II: alpha_star | III: alpha_tilde, alpha_star
//! alpha = 0.5
//!
//! [grid]
//! x_max = 40.0
//! n_panels = 400
//! rule = "gauss-legendre"   # or "trapezoid"
//! points = 4
//!
//! [solver]
//! tol = 1e-10
//! max_iter = 10000
//!
//! [nemytsky]            # optional; required by `solve-nemytsky`
//! g0 = "g1"             # or "g2" with eps_fraction
//! g1 = "g3"             # or "g4" with l_profile = { kind = "constant", value = 0.5 }
//! xi = 0.25
//!
//! [certificates]
//! probe_trials = 5
//! seed = 0
//! ```
//!
//! Every block and field is optional; omitted values take the catalog
//! defaults. Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use hammerstein::kernels::{ConditionOptions, MixtureAtom, DEFAULT_POSITIVITY_FLOOR};
use hammerstein::nemytsky::{Coefficient, G0Form, G1Form, LProfile, NemytskySpec};
use hammerstein::{
    build_grid, BaseKernel, GapForm, HalfLineGrid, KernelFamily, KernelSpec, Modulation, NonlinearitySpec,
    Rule,
};
use serde::{Deserialize, Serialize};

/// A configuration problem, located by its dotted key path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamilyName {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseName {
    Gaussian,
    ExpMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub family: KernelFamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub base: BaseName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<MixtureAtom>>,
    pub gap: GapForm,
    pub d_star: f64,
    pub l: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            family: KernelFamilyName::C,
            delta: None,
            epsilon: None,
            base: BaseName::Gaussian,
            atoms: None,
            gap: GapForm::Exponential,
            d_star: 0.5,
            l: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NonlinearityFamilyName {
    I,
    II,
    III,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinearityConfig {
    pub family: NonlinearityFamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_tilde: Option<f64>,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        NonlinearityConfig { family: NonlinearityFamilyName::I, alpha: None, alpha_star: None, alpha_tilde: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleName {
    GaussLegendre,
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub x_max: f64,
    pub n_panels: usize,
    pub rule: RuleName,
    /// Gauss-Legendre points per panel.
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { x_max: 40.0, n_panels: 400, rule: RuleName::GaussLegendre, points: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-10, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditionsConfig {
    /// Nodes per axis of the kernel probe lattice.
    pub probe_count: usize,
    pub positivity_floor: f64,
    /// Lattice sizes for the nonlinearity checks.
    pub n_u: usize,
    pub n_sigma: usize,
    pub tol: f64,
}

impl Default for ConditionsConfig {
    fn default() -> Self {
        ConditionsConfig {
            probe_count: 64,
            positivity_floor: DEFAULT_POSITIVITY_FLOOR,
            n_u: 200,
            n_sigma: 200,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum G0Name {
    #[serde(rename = "g1")]
    G1,
    #[serde(rename = "g2")]
    G2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum G1Name {
    #[serde(rename = "g3")]
    G3,
    #[serde(rename = "g4")]
    G4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NemytskyConfig {
    pub g0: G0Name,
    pub g1: G1Name,
    pub xi: f64,
    /// g2 only: `eps* = eps_fraction * bound`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_fraction: Option<f64>,
    /// g4 only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_profile: Option<LProfile>,
    /// Defaults to `solver.tol`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// `u` lattice size for the a1-a3 checks.
    pub n_u: usize,
}

impl Default for NemytskyConfig {
    fn default() -> Self {
        NemytskyConfig {
            g0: G0Name::G1,
            g1: G1Name::G3,
            xi: 0.25,
            eps_fraction: None,
            l_profile: None,
            tol: None,
            n_u: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificatesConfig {
    pub lemma2: bool,
    pub lemma3: bool,
    pub jensen: bool,
    pub asymptote: bool,
    pub uniqueness: bool,
    pub probe_trials: usize,
    /// Bump height as a fraction of `eta`.
    pub probe_scale: f64,
    /// Also compare against a solve on twice as many panels.
    pub probe_refine: bool,
    pub seed: u64,
}

impl Default for CertificatesConfig {
    fn default() -> Self {
        CertificatesConfig {
            lemma2: true,
            lemma3: true,
            jensen: true,
            asymptote: true,
            uniqueness: true,
            probe_trials: 5,
            probe_scale: 0.1,
            probe_refine: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub kernel: KernelConfig,
    pub nonlinearity: NonlinearityConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub conditions: ConditionsConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nemytsky: Option<NemytskyConfig>,
    pub certificates: CertificatesConfig,
}

/// Everything a run needs, validated and built.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub kernel: KernelSpec,
    pub g: NonlinearitySpec,
    pub grid: HalfLineGrid,
    pub tol: f64,
    pub max_iter: usize,
    pub conditions: ConditionOptions,
    pub nemytsky: Option<NemytskySpec>,
    pub nemytsky_tol: f64,
}

fn open_unit(path: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(ConfigError::new(path, format!("must lie in (0, 1), got {v}")))
    }
}

fn positive(path: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(path, format!("must be positive and finite, got {v}")))
    }
}

fn unused<T>(path: &str, v: &Option<T>, why: &str) -> Result<(), ConfigError> {
    match v {
        Some(_) => Err(ConfigError::new(path, format!("not used {why}"))),
        None => Ok(()),
    }
}

impl RunConfig {
    /// Range-checks every parameter and builds the library objects.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let k = &self.kernel;
        let family = match k.family {
            KernelFamilyName::A => {
                unused("kernel.delta", &k.delta, "by family A")?;
                unused("kernel.epsilon", &k.epsilon, "by family A")?;
                KernelFamily::A
            }
            KernelFamilyName::B => {
                unused("kernel.epsilon", &k.epsilon, "by family B")?;
                KernelFamily::B { delta: open_unit("kernel.delta", k.delta.unwrap_or(0.5))? }
            }
            KernelFamilyName::C => {
                unused("kernel.delta", &k.delta, "by family C")?;
                KernelFamily::C { epsilon: open_unit("kernel.epsilon", k.epsilon.unwrap_or(0.5))? }
            }
        };
        let base = match k.base {
            BaseName::Gaussian => {
                unused("kernel.atoms", &k.atoms, "by the gaussian base")?;
                BaseKernel::Gaussian
            }
            BaseName::ExpMixture => {
                let atoms = k
                    .atoms
                    .clone()
                    .ok_or_else(|| ConfigError::new("kernel.atoms", "required by the exp-mixture base"))?;
                BaseKernel::exp_mixture(atoms).map_err(|e| ConfigError::new("kernel.atoms", e.to_string()))?
            }
        };
        if !(k.d_star > 0.0 && k.d_star <= 1.0) {
            return Err(ConfigError::new("kernel.d_star", format!("must lie in (0, 1], got {}", k.d_star)));
        }
        open_unit("kernel.l", k.l)?;
        let modulation = Modulation::new(k.gap, k.d_star, k.l).map_err(|e| ConfigError::new("kernel", e.to_string()))?;
        let kernel =
            KernelSpec::new(family, base, modulation).map_err(|e| ConfigError::new("kernel", e.to_string()))?;

        let n = &self.nonlinearity;
        let g = match n.family {
            NonlinearityFamilyName::I => {
                unused("nonlinearity.alpha_star", &n.alpha_star, "by family I")?;
                unused("nonlinearity.alpha_tilde", &n.alpha_tilde, "by family I")?;
                NonlinearitySpec::power(open_unit("nonlinearity.alpha", n.alpha.unwrap_or(0.5))?)
            }
            NonlinearityFamilyName::II => {
                unused("nonlinearity.alpha", &n.alpha, "by family II")?;
                unused("nonlinearity.alpha_tilde", &n.alpha_tilde, "by family II")?;
                NonlinearitySpec::power_plus_linear(open_unit(
                    "nonlinearity.alpha_star",
                    n.alpha_star.unwrap_or(0.5),
                )?)
            }
            NonlinearityFamilyName::III => {
                unused("nonlinearity.alpha", &n.alpha, "by family III")?;
                let at = open_unit("nonlinearity.alpha_tilde", n.alpha_tilde.unwrap_or(0.25))?;
                let ast = open_unit("nonlinearity.alpha_star", n.alpha_star.unwrap_or(0.75))?;
                if at >= ast {
                    return Err(ConfigError::new(
                        "nonlinearity.alpha_tilde",
                        format!("must be below alpha_star ({ast}), got {at}"),
                    ));
                }
                NonlinearitySpec::two_power(at, ast)
            }
        }
        .map_err(|e| ConfigError::new("nonlinearity", e.to_string()))?;

        let gr = &self.grid;
        positive("grid.x_max", gr.x_max)?;
        if gr.n_panels == 0 {
            return Err(ConfigError::new("grid.n_panels", "must be at least 1"));
        }
        let rule = match gr.rule {
            RuleName::Trapezoid => Rule::Trapezoid,
            RuleName::GaussLegendre => {
                if !(1..=128).contains(&gr.points) {
                    return Err(ConfigError::new("grid.points", format!("must lie in 1..=128, got {}", gr.points)));
                }
                Rule::GaussLegendre(gr.points)
            }
        };
        let grid = build_grid(gr.x_max, gr.n_panels, rule).map_err(|e| ConfigError::new("grid", e.to_string()))?;

        let s = &self.solver;
        positive("solver.tol", s.tol)?;
        if s.max_iter == 0 {
            return Err(ConfigError::new("solver.max_iter", "must be at least 1"));
        }

        let c = &self.conditions;
        if c.probe_count < 2 {
            return Err(ConfigError::new("conditions.probe_count", "must be at least 2"));
        }
        if !(c.positivity_floor >= 0.0 && c.positivity_floor < 1.0) {
            return Err(ConfigError::new("conditions.positivity_floor", "must lie in [0, 1)"));
        }
        if c.n_u < 3 {
            return Err(ConfigError::new("conditions.n_u", "must be at least 3"));
        }
        if c.n_sigma < 3 {
            return Err(ConfigError::new("conditions.n_sigma", "must be at least 3"));
        }
        positive("conditions.tol", c.tol)?;

        let (nemytsky, nemytsky_tol) = match &self.nemytsky {
            None => (None, s.tol),
            Some(nc) => {
                if !(nc.xi > 0.0 && nc.xi < 0.5 * g.eta) {
                    return Err(ConfigError::new("nemytsky.xi", format!("must lie in (0, eta/2), got {}", nc.xi)));
                }
                let g0 = match nc.g0 {
                    G0Name::G1 => {
                        unused("nemytsky.eps_fraction", &nc.eps_fraction, "by g1")?;
                        G0Form::Rational
                    }
                    G0Name::G2 => {
                        let c = nc.eps_fraction.unwrap_or(0.5);
                        if !(0.0..=1.0).contains(&c) {
                            return Err(ConfigError::new("nemytsky.eps_fraction", format!("must lie in [0, 1], got {c}")));
                        }
                        G0Form::RationalQuadratic { coefficient: Coefficient::FractionOfBound(c) }
                    }
                };
                let g1 = match nc.g1 {
                    G1Name::G3 => {
                        unused("nemytsky.l_profile", &nc.l_profile, "by g3")?;
                        G1Form::Envelope
                    }
                    G1Name::G4 => G1Form::Scaled {
                        profile: nc.l_profile.clone().unwrap_or(LProfile::Constant { value: 1.0 }),
                    },
                };
                if nc.n_u < 2 {
                    return Err(ConfigError::new("nemytsky.n_u", "must be at least 2"));
                }
                let tol = positive("nemytsky.tol", nc.tol.unwrap_or(s.tol))?;
                let spec = NemytskySpec::new(g0, g1, nc.xi, g, kernel.clone())
                    .map_err(|e| ConfigError::new("nemytsky", e.to_string()))?;
                (Some(spec), tol)
            }
        };

        let ce = &self.certificates;
        if ce.uniqueness && ce.probe_trials == 0 {
            return Err(ConfigError::new("certificates.probe_trials", "must be at least 1"));
        }
        if !(ce.probe_scale >= 0.0 && ce.probe_scale <= 1.0) {
            return Err(ConfigError::new("certificates.probe_scale", "must lie in [0, 1]"));
        }

        Ok(Resolved {
            kernel,
            g,
            grid,
            tol: s.tol,
            max_iter: s.max_iter,
            conditions: ConditionOptions { probe_count: c.probe_count, tol: c.tol, positivity_floor: c.positivity_floor },
            nemytsky,
            nemytsky_tol,
        })
    }
}

/// Parses a configuration. JSON is accepted for `.json` files; a report
/// file is accepted too, in which case its `config` echo is used.
pub fn parse_config(text: &str, json: bool) -> Result<RunConfig, ConfigError> {
    if json {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ConfigError::new("", format!("invalid JSON: {e}")))?;
        if let Some(echo) = value.get_mut("config").filter(|_| text.contains("\"tool\"")) {
            value = echo.take();
        }
        serde_path_to_error::deserialize(value).map_err(|e| located(e.path().to_string(), e.into_inner()))
    } else {
        let value: toml::Value =
            toml::from_str(text).map_err(|e| ConfigError::new("", format!("invalid TOML: {e}")))?;
        serde_path_to_error::deserialize(value).map_err(|e| located(e.path().to_string(), e.into_inner()))
    }
}

fn located(path: String, e: impl fmt::Display) -> ConfigError {
    let path = if path == "." { String::new() } else { path };
    ConfigError::new(path, e.to_string())
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    parse_config(&text, json)
}

/// TOML rendering of a configuration.
pub fn to_toml(config: &RunConfig) -> String {
    toml::to_string(config).expect("configuration serializes")
}
