use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expr::{parse, Space};
use crate::genphase::{GeneratingPhase, Pairing};
use crate::numeric::{geometric, linspace};
use crate::opsymb::FamilyConfig;
use crate::oscint::{HalfLineFn, NormalOperatorSpec, SchwartzFn};
use crate::sgphase::{BaseSamples, Margins, SgGrid};
use crate::symbolcls::SymbolFn;
use crate::symplecto::SymplectoMap;

/// Component expressions of a symplectomorphism, written in the
/// `y*`/`e*` source variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub x: Vec<String>,
    pub xi: Vec<String>,
    #[serde(default = "direct")]
    pub pairing: Pairing,
}

fn direct() -> Pairing {
    Pairing::Direct
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSpec {
    pub expr: String,
    pub order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

/// A test function: a catalog name (`h0`..`h4`, or the half-line functions
/// `exp` and `half-gaussian`) or an inline Schwartz expression in `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TestFunction {
    Named(String),
    Inline { name: String, expr: String },
}

pub enum Resolved {
    Schwartz(SchwartzFn),
    HalfLine(HalfLineFn),
}

impl TestFunction {
    pub fn name(&self) -> &str {
        match self {
            TestFunction::Named(n) => n,
            TestFunction::Inline { name, .. } => name,
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        match self {
            TestFunction::Named(n) if n.starts_with('h') && n[1..].parse::<u32>().is_ok() => Ok(Resolved::Schwartz(SchwartzFn::by_name(n)?)),
            TestFunction::Named(n) => Ok(Resolved::HalfLine(HalfLineFn::by_name(n)?)),
            TestFunction::Inline { name, expr } => Ok(Resolved::Schwartz(SchwartzFn::parse(name, expr)?)),
        }
    }
}

/// Explicit `(k, K)` for `verify-sg`; calibrated values are used when absent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgConstants {
    pub k: f64,
    #[serde(rename = "K")]
    pub big_k: f64,
}

/// Check groups in dependency order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckGroup {
    Symplecto,
    Phase,
    Calibrate,
    VerifySg,
    Apply,
    Opsymb,
}

impl CheckGroup {
    /// What `all` expands to. `verify-sg` is left out because calibration
    /// already certifies uniformity at the constants it finds.
    pub const ALL: [CheckGroup; 5] = [CheckGroup::Symplecto, CheckGroup::Phase, CheckGroup::Calibrate, CheckGroup::Apply, CheckGroup::Opsymb];

    pub fn parse(name: &str) -> Result<Vec<CheckGroup>> {
        Ok(match name {
            "all" => Self::ALL.to_vec(),
            "symplecto" => vec![CheckGroup::Symplecto],
            "phase" => vec![CheckGroup::Phase],
            "calibrate" => vec![CheckGroup::Calibrate],
            "verify-sg" => vec![CheckGroup::VerifySg],
            "apply" => vec![CheckGroup::Apply],
            "opsymb" => vec![CheckGroup::Opsymb],
            other => return Err(Error::Validation(format!("unknown check group `{other}`"))),
        })
    }

    /// Selected groups plus their cheap prerequisites, sorted.
    pub fn closure(selected: &[CheckGroup]) -> Vec<CheckGroup> {
        let mut out: Vec<CheckGroup> = selected.to_vec();
        if selected.iter().any(|g| *g != CheckGroup::Symplecto) {
            out.extend([CheckGroup::Symplecto, CheckGroup::Phase]);
        }
        out.sort();
        out.dedup();
        out
    }
}

/// A verification scenario, stored as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub psi: String,
    pub half_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<MapSpec>,
    pub amplitude: AmplitudeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure_amplitude: Option<AmplitudeSpec>,
    pub base_point: BasePoint,
    pub functions: Vec<TestFunction>,
    #[serde(default = "standard")]
    pub grid: String,
    #[serde(default = "standard_margins")]
    pub margins: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sg_constants: Option<SgConstants>,
    #[serde(default = "all_checks")]
    pub checks: Vec<String>,
    pub seed: u64,
    /// Checks this scenario is built to fail; empty for positive scenarios.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expected_failures: Vec<String>,
}

fn standard() -> String {
    "standard".into()
}

fn standard_margins() -> String {
    "default".into()
}

fn all_checks() -> Vec<String> {
    vec!["all".into()]
}

/// Parsed and validated objects of a scenario.
pub struct Prepared {
    pub space: Space,
    pub psi: GeneratingPhase,
    pub chi: Option<(SymplectoMap, Pairing)>,
    pub operator: NormalOperatorSpec,
    pub structure: Option<NormalOperatorSpec>,
    pub functions: Vec<(String, Resolved)>,
}

impl Scenario {
    pub fn from_json(src: &str) -> Result<Scenario> {
        let s: Scenario = serde_json::from_str(src)?;
        s.prepare()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Reads a scenario file, or a catalog scenario when `path` names one
    /// and no such file exists.
    pub fn load(path: &str) -> Result<Scenario> {
        match std::fs::read_to_string(path) {
            Ok(src) => Scenario::from_json(&src),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => catalog_scenario(path).map_err(|_| Error::Io(format!("{path}: {e}"))),
            Err(e) => Err(e.into()),
        }
    }

    pub fn groups(&self) -> Result<Vec<CheckGroup>> {
        let mut out = Vec::new();
        for c in &self.checks {
            out.extend(CheckGroup::parse(c)?);
        }
        Ok(out)
    }

    pub fn prepare(&self) -> Result<Prepared> {
        if self.n < 2 {
            return Err(Error::Validation(format!("dimension must be at least 2, got {}", self.n)));
        }
        let space = Space::new(self.n);
        let nt = self.n - 1;
        if self.base_point.x.len() != nt || self.base_point.xi.len() != nt {
            return Err(Error::Validation(format!("base point needs {nt} tangential coordinates")));
        }
        GridPreset::named(&self.grid)?;
        margins_preset(&self.margins)?;
        self.groups()?;
        let psi = GeneratingPhase::parse(space, &self.psi, self.half_width)?;
        let chi = match &self.chi {
            Some(m) => {
                if m.x.len() != self.n || m.xi.len() != self.n {
                    return Err(Error::Validation(format!("map needs {} components in x and in xi", self.n)));
                }
                let xs: Vec<&str> = m.x.iter().map(String::as_str).collect();
                let xis: Vec<&str> = m.xi.iter().map(String::as_str).collect();
                Some((SymplectoMap::parse(space, &xs, &xis, self.half_width)?, m.pairing))
            }
            None => None,
        };
        let op = |a: &AmplitudeSpec| -> Result<NormalOperatorSpec> {
            let amp = SymbolFn::new(space, parse(&space, &a.expr)?, a.order);
            NormalOperatorSpec::new(psi.clone(), amp, &self.base_point.x, &self.base_point.xi)
        };
        let operator = op(&self.amplitude)?;
        let structure = self.structure_amplitude.as_ref().map(op).transpose()?;
        if self.functions.is_empty() {
            return Err(Error::Validation("at least one test function is required".into()));
        }
        let functions = self.functions.iter().map(|f| Ok((f.name().to_string(), f.resolve()?))).collect::<Result<_>>()?;
        Ok(Prepared { space, psi, chi, operator, structure, functions })
    }
}

/// Sample grids behind a `--grid` preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPreset {
    pub name: String,
    pub sg: SgGrid,
    pub base: BaseSamples,
    /// Random phase-space samples for the map checks.
    pub samples: usize,
    /// Points per tangential axis for the phase checks.
    pub tangential: usize,
    /// Normal grid for Schwartz inputs.
    pub apply_grid: Vec<f64>,
    /// Normal grid for half-line inputs.
    pub half_line_grid: Vec<f64>,
    pub family: FamilyConfig,
}

impl GridPreset {
    pub const NAMES: [&'static str; 3] = ["coarse", "standard", "fine"];

    pub fn named(name: &str) -> Result<GridPreset> {
        let standard = GridPreset {
            name: name.to_string(),
            sg: SgGrid::standard(),
            base: BaseSamples::default(),
            samples: 200,
            tangential: 21,
            apply_grid: linspace(-3.0, 3.0, 61),
            half_line_grid: linspace(0.1, 3.0, 30),
            family: FamilyConfig::default(),
        };
        match name {
            "standard" => Ok(standard),
            "coarse" => Ok(GridPreset {
                sg: SgGrid { t: SgGrid::ladder(0.25, 50.0, 10), tau: SgGrid::ladder(0.25, 50.0, 10) },
                base: BaseSamples { x_count: 3, rungs: geometric(1.0, 2.0, 256.0) },
                samples: 50,
                tangential: 11,
                apply_grid: linspace(-3.0, 3.0, 21),
                half_line_grid: linspace(0.1, 3.0, 10),
                family: FamilyConfig { t_grid: linspace(-9.0, 9.0, 31), ..FamilyConfig::default() },
                ..standard
            }),
            "fine" => Ok(GridPreset {
                sg: SgGrid::standard().refined(2),
                samples: 1000,
                tangential: 41,
                apply_grid: linspace(-3.0, 3.0, 121),
                half_line_grid: linspace(0.1, 3.0, 59),
                ..standard
            }),
            other => Err(Error::Validation(format!("unknown grid preset `{other}` (expected one of {:?})", Self::NAMES))),
        }
    }

    /// SHA-256 of the canonical JSON of every grid in the preset.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("grid preset serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

pub const MARGIN_PRESETS: [&str; 3] = ["default", "loose", "strict"];

pub fn margins_preset(name: &str) -> Result<Margins> {
    match name {
        "default" => Ok(Margins::default()),
        "loose" => Ok(Margins { lower: 1e-3, upper: 1e6, ratio: 4.0 }),
        "strict" => Ok(Margins { lower: 1.5e-2, upper: 1e3, ratio: 2.5 }),
        other => Err(Error::Validation(format!("unknown margin preset `{other}` (expected one of {MARGIN_PRESETS:?})"))),
    }
}

pub const CATALOG: [&str; 7] = ["identity", "dilation", "quadratic-collar", "boundary-shear", "bad-boundary-shift", "bad-transmission", "bad-symplectic"];

const IDENTITY_PSI: &str = "x1*k1 + xn*kn";
const DILATION_PSI: &str = "x1*k1 + xn*kn*exp(sin(x1)/2)";
const DILATION_X: [&str; 2] = ["y1", "yn*exp(-sin(y1)/2)"];
const DILATION_XI: [&str; 2] = ["e1 + yn*en*cos(y1)/2", "en*exp(sin(y1)/2)"];
const STRUCTURE_AMPLITUDE: &str = "(1 + kn^2)/(1 + k1^2 + kn^2)";

fn scenario(name: &str, psi: &str, half_width: f64, chi: Option<MapSpec>, expected_failures: &[&str]) -> Scenario {
    let positive = expected_failures.is_empty();
    Scenario {
        name: name.into(),
        n: 2,
        psi: psi.into(),
        half_width,
        chi,
        amplitude: AmplitudeSpec { expr: "1".into(), order: 0.0 },
        structure_amplitude: positive.then(|| AmplitudeSpec { expr: STRUCTURE_AMPLITUDE.into(), order: 0.0 }),
        base_point: BasePoint { x: vec![0.4], xi: vec![1.0] },
        functions: (0..5).map(|j| TestFunction::Named(format!("h{j}"))).chain([TestFunction::Named("exp".into())]).collect(),
        grid: standard(),
        margins: standard_margins(),
        sg_constants: None,
        checks: all_checks(),
        seed: 7,
        expected_failures: expected_failures.iter().map(|s| s.to_string()).collect(),
    }
}

fn map(x: &[&str], xi: &[&str], pairing: Pairing) -> Option<MapSpec> {
    Some(MapSpec { x: x.iter().map(|s| s.to_string()).collect(), xi: xi.iter().map(|s| s.to_string()).collect(), pairing })
}

/// The built-in scenario called `name`.
pub fn catalog_scenario(name: &str) -> Result<Scenario> {
    let quad_xn = "2*yn/(1 + sqrt(1 + 0.8*cos(y1)*yn))";
    Ok(match name {
        "identity" => scenario(name, IDENTITY_PSI, 1.0, map(&["y1", "yn"], &["e1", "en"], Pairing::Direct), &[]),
        "dilation" => scenario(name, DILATION_PSI, 1.0, map(&DILATION_X, &DILATION_XI, Pairing::Direct), &[]),
        "quadratic-collar" => scenario(
            name,
            "x1*k1 + xn*kn*(1 + xn*0.2*cos(x1))",
            0.5,
            map(
                &["y1", quad_xn],
                &[&format!("e1 - ({quad_xn})^2*en*0.2*sin(y1)"), &format!("en*(1 + 0.4*cos(y1)*{quad_xn})")],
                Pairing::Direct,
            ),
            &[],
        ),
        "boundary-shear" => scenario(
            name,
            "(x1 + 0.3*tanh(x1))*k1 + xn*kn",
            1.0,
            map(&["y1 + 0.3*tanh(y1)", "yn"], &["e1/(1 + 0.3*(1 - tanh(y1)^2))", "en"], Pairing::Inverse),
            &[],
        ),
        "bad-boundary-shift" => {
            scenario(name, IDENTITY_PSI, 1.0, map(&["y1", "yn + 0.1"], &["e1", "en"], Pairing::Direct), &["symplecto.boundary"])
        }
        "bad-transmission" => scenario(name, "x1*k1 + xn*kn + 0.1*xn*norm(k1, kn)", 1.0, None, &["genphase.transmission"]),
        "bad-symplectic" => scenario(
            name,
            DILATION_PSI,
            1.0,
            map(&DILATION_X, &[DILATION_XI[0], "en*exp(sin(y1))"], Pairing::Direct),
            &["symplecto.symplectic"],
        ),
        other => return Err(Error::UnknownScenario(other.to_string())),
    })
}
