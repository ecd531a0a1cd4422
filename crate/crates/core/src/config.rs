//! Parameter sets: defaults, validation, the two-column CSV parameter file and
//! the JSON parameter document used by the service and the CLI.
//!
//! Keys are shared by every surface:
//!
//! | key | meaning |
//! |---|---|
//! | `format_version` | always `interadapt-spec/1` |
//! | `pi1`, `p1c`, `p1t`, `p2c` | population proportion and outcome probabilities |
//! | `stages`, `k_star` | `K` and the last stage enrolling subpopulation 2 |
//! | `n1_per_stage`, `n2_per_stage` | adaptive design stage sizes |
//! | `n_sc_per_stage`, `n_ss_per_stage` | standard design stage sizes |
//! | `alpha`, `a_c`, `delta` | error rate, H0C share, boundary exponent |
//! | `f_ad1`, `f_ad2`, `f_sc`, `f_ss` | futility constants |
//! | `enrollment_rate` | combined participants per year |
//! | `effect_min`, `effect_max`, `grid_points` | subpopulation 2 effect grid |
//! | `iterations`, `seed` | performance simulation |
//! | `calibration_paths`, `calibration_seed` | boundary calibration |
//! | `time_limit_secs` | wall-clock limit, `0` for none |

use serde::{Deserialize, Serialize};

use crate::boundary::Calibration;
use crate::error::{Error, Result};
use crate::model::{DesignSpec, PopulationParams};

pub const FORMAT_VERSION: &str = "interadapt-spec/1";

/// Evenly spaced subpopulation 2 treatment effects `p2t - p2c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl EffectGrid {
    pub fn effects(&self) -> Result<Vec<f64>> {
        if self.points == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::invalid(
                "effect_min",
                format!("range [{}, {}] is empty", self.min, self.max),
            ));
        }
        if self.points == 1 {
            return Ok(vec![self.min]);
        }
        let step = (self.max - self.min) / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.max
                } else {
                    self.min + step * i as f64
                }
            })
            .collect())
    }

    /// The grid with its range cut to effects that keep `p2t = p2c + effect`
    /// inside `[0, 1]`.
    pub fn clamped_for(&self, p2c: f64) -> Self {
        let (lo, hi) = (-p2c, 1.0 - p2c);
        Self {
            min: self.min.clamp(lo, hi),
            max: self.max.clamp(lo, hi),
            points: self.points,
        }
    }

    /// Grid with a single point.
    pub fn single(effect: f64) -> Self {
        Self {
            min: effect,
            max: effect,
            points: 1,
        }
    }
}

impl Default for EffectGrid {
    fn default() -> Self {
        Self {
            min: -0.2,
            max: 0.2,
            points: 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Simulated trials per design and grid point.
    pub iterations: usize,
    pub seed: u64,
    pub calibration_paths: usize,
    pub calibration_seed: u64,
    /// `None` means no limit.
    pub time_limit_secs: Option<f64>,
}

impl McConfig {
    pub const DEFAULT_SEED: u64 = 20_140_417;

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::ZeroIterations);
        }
        if self.calibration_paths == 0 {
            return Err(Error::invalid("calibration_paths", "must be positive"));
        }
        if let Some(t) = self.time_limit_secs {
            if !(t > 0.0) {
                return Err(Error::invalid("time_limit_secs", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn calibration(&self) -> Calibration {
        Calibration {
            paths: self.calibration_paths,
            seed: self.calibration_seed,
            ..Calibration::default()
        }
    }
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            seed: Self::DEFAULT_SEED,
            calibration_paths: Calibration::DEFAULT_PATHS,
            calibration_seed: Calibration::DEFAULT_SEED,
            time_limit_secs: None,
        }
    }
}

/// Every input of a planning run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Parameters {
    pub population: PopulationParams,
    pub design: DesignSpec,
    pub grid: EffectGrid,
    pub mc: McConfig,
}

impl Parameters {
    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        self.design.validate()?;
        self.mc.validate()?;
        for effect in self.grid.effects()? {
            let p2t = self.population.p2c + effect;
            if !(0.0..=1.0).contains(&p2t) {
                return Err(Error::invalid(
                    "effect_min",
                    format!("effect {effect} puts p2t = {p2t} outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }

    /// Overwrites every field the document sets.
    pub fn apply(&mut self, doc: &ParameterDocument) {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        let p = &mut self.population;
        set!(p.pi1, doc.pi1);
        set!(p.p1c, doc.p1c);
        set!(p.p1t, doc.p1t);
        set!(p.p2c, doc.p2c);
        let d = &mut self.design;
        set!(d.stages, doc.stages);
        set!(d.k_star, doc.k_star);
        set!(d.n1_per_stage, doc.n1_per_stage);
        set!(d.n2_per_stage, doc.n2_per_stage);
        set!(d.n_sc, doc.n_sc_per_stage);
        set!(d.n_ss, doc.n_ss_per_stage);
        set!(d.alpha, doc.alpha);
        set!(d.a_c, doc.a_c);
        set!(d.delta, doc.delta);
        set!(d.f_ad1, doc.f_ad1);
        set!(d.f_ad2, doc.f_ad2);
        set!(d.f_sc, doc.f_sc);
        set!(d.f_ss, doc.f_ss);
        set!(d.enrollment_rate, doc.enrollment_rate);
        let g = &mut self.grid;
        set!(g.min, doc.effect_min);
        set!(g.max, doc.effect_max);
        set!(g.points, doc.grid_points);
        let m = &mut self.mc;
        set!(m.iterations, doc.iterations);
        set!(m.seed, doc.seed);
        set!(m.calibration_paths, doc.calibration_paths);
        set!(m.calibration_seed, doc.calibration_seed);
        if let Some(t) = doc.time_limit_secs {
            m.time_limit_secs = (t != 0.0).then_some(t);
        }
    }

    pub fn to_document(&self) -> ParameterDocument {
        let (p, d, g, m) = (&self.population, &self.design, &self.grid, &self.mc);
        ParameterDocument {
            format_version: Some(FORMAT_VERSION.to_string()),
            pi1: Some(p.pi1),
            p1c: Some(p.p1c),
            p1t: Some(p.p1t),
            p2c: Some(p.p2c),
            stages: Some(d.stages),
            k_star: Some(d.k_star),
            n1_per_stage: Some(d.n1_per_stage),
            n2_per_stage: Some(d.n2_per_stage),
            n_sc_per_stage: Some(d.n_sc),
            n_ss_per_stage: Some(d.n_ss),
            alpha: Some(d.alpha),
            a_c: Some(d.a_c),
            delta: Some(d.delta),
            f_ad1: Some(d.f_ad1),
            f_ad2: Some(d.f_ad2),
            f_sc: Some(d.f_sc),
            f_ss: Some(d.f_ss),
            enrollment_rate: Some(d.enrollment_rate),
            effect_min: Some(g.min),
            effect_max: Some(g.max),
            grid_points: Some(g.points),
            iterations: Some(m.iterations),
            seed: Some(m.seed),
            calibration_paths: Some(m.calibration_paths),
            calibration_seed: Some(m.calibration_seed),
            time_limit_secs: Some(m.time_limit_secs.unwrap_or(0.0)),
            fresh_seed: None,
        }
    }
}

/// Partial parameter set keyed like the parameter file. Missing fields keep
/// their current (usually default) values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format_version: Option<String>,
    pub pi1: Option<f64>,
    pub p1c: Option<f64>,
    pub p1t: Option<f64>,
    pub p2c: Option<f64>,
    pub stages: Option<usize>,
    pub k_star: Option<usize>,
    pub n1_per_stage: Option<f64>,
    pub n2_per_stage: Option<f64>,
    pub n_sc_per_stage: Option<f64>,
    pub n_ss_per_stage: Option<f64>,
    pub alpha: Option<f64>,
    pub a_c: Option<f64>,
    pub delta: Option<f64>,
    pub f_ad1: Option<f64>,
    pub f_ad2: Option<f64>,
    pub f_sc: Option<f64>,
    pub f_ss: Option<f64>,
    pub enrollment_rate: Option<f64>,
    pub effect_min: Option<f64>,
    pub effect_max: Option<f64>,
    pub grid_points: Option<usize>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub calibration_paths: Option<usize>,
    pub calibration_seed: Option<u64>,
    /// `0` means no limit.
    pub time_limit_secs: Option<f64>,
    /// Ask the service to pick new random seeds instead of the defaults.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fresh_seed: Option<bool>,
}

impl ParameterDocument {
    /// Keys written to and read from parameter files, in file order.
    pub const KEYS: [&'static str; 27] = [
        "format_version",
        "pi1",
        "p1c",
        "p1t",
        "p2c",
        "stages",
        "k_star",
        "n1_per_stage",
        "n2_per_stage",
        "n_sc_per_stage",
        "n_ss_per_stage",
        "alpha",
        "a_c",
        "delta",
        "f_ad1",
        "f_ad2",
        "f_sc",
        "f_ss",
        "enrollment_rate",
        "effect_min",
        "effect_max",
        "grid_points",
        "iterations",
        "seed",
        "calibration_paths",
        "calibration_seed",
        "time_limit_secs",
    ];

    /// Sets `key` from its text form. Returns `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<bool> {
        fn num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Option<T>> {
            raw.trim()
                .parse()
                .map(Some)
                .map_err(|_| Error::invalid(key, format!("cannot parse {raw:?}")))
        }
        let raw = raw.trim();
        match key {
            "format_version" => {
                if raw != FORMAT_VERSION {
                    return Err(Error::invalid(
                        key,
                        format!("unsupported version {raw:?}, expected {FORMAT_VERSION}"),
                    ));
                }
                self.format_version = Some(raw.to_string());
            }
            "pi1" => self.pi1 = num(key, raw)?,
            "p1c" => self.p1c = num(key, raw)?,
            "p1t" => self.p1t = num(key, raw)?,
            "p2c" => self.p2c = num(key, raw)?,
            "stages" => self.stages = num(key, raw)?,
            "k_star" => self.k_star = num(key, raw)?,
            "n1_per_stage" => self.n1_per_stage = num(key, raw)?,
            "n2_per_stage" => self.n2_per_stage = num(key, raw)?,
            "n_sc_per_stage" => self.n_sc_per_stage = num(key, raw)?,
            "n_ss_per_stage" => self.n_ss_per_stage = num(key, raw)?,
            "alpha" => self.alpha = num(key, raw)?,
            "a_c" => self.a_c = num(key, raw)?,
            "delta" => self.delta = num(key, raw)?,
            "f_ad1" => self.f_ad1 = num(key, raw)?,
            "f_ad2" => self.f_ad2 = num(key, raw)?,
            "f_sc" => self.f_sc = num(key, raw)?,
            "f_ss" => self.f_ss = num(key, raw)?,
            "enrollment_rate" => self.enrollment_rate = num(key, raw)?,
            "effect_min" => self.effect_min = num(key, raw)?,
            "effect_max" => self.effect_max = num(key, raw)?,
            "grid_points" => self.grid_points = num(key, raw)?,
            "iterations" => self.iterations = num(key, raw)?,
            "seed" => self.seed = num(key, raw)?,
            "calibration_paths" => self.calibration_paths = num(key, raw)?,
            "calibration_seed" => self.calibration_seed = num(key, raw)?,
            "time_limit_secs" => {
                self.time_limit_secs = if raw.eq_ignore_ascii_case("none") || raw.is_empty() {
                    Some(0.0)
                } else {
                    num(key, raw)?
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Applies the document on top of the defaults and validates the result.
    pub fn resolve(&self) -> Result<Parameters> {
        let mut params = Parameters::default();
        params.apply(self);
        params.validate()?;
        Ok(params)
    }
}

/// Two-column `parameter,value` CSV covering every input.
pub fn save_parameters(params: &Parameters) -> String {
    let doc = params.to_document();
    let value = text_values(&doc);
    let mut out = String::from("parameter,value\n");
    for key in ParameterDocument::KEYS {
        out.push_str(key);
        out.push(',');
        out.push_str(&value(key));
        out.push('\n');
    }
    out
}

fn text_values(doc: &ParameterDocument) -> impl Fn(&str) -> String + '_ {
    move |key| {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let u = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let s = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        match key {
            "format_version" => doc.format_version.clone().unwrap_or_default(),
            "pi1" => f(doc.pi1),
            "p1c" => f(doc.p1c),
            "p1t" => f(doc.p1t),
            "p2c" => f(doc.p2c),
            "stages" => u(doc.stages),
            "k_star" => u(doc.k_star),
            "n1_per_stage" => f(doc.n1_per_stage),
            "n2_per_stage" => f(doc.n2_per_stage),
            "n_sc_per_stage" => f(doc.n_sc_per_stage),
            "n_ss_per_stage" => f(doc.n_ss_per_stage),
            "alpha" => f(doc.alpha),
            "a_c" => f(doc.a_c),
            "delta" => f(doc.delta),
            "f_ad1" => f(doc.f_ad1),
            "f_ad2" => f(doc.f_ad2),
            "f_sc" => f(doc.f_sc),
            "f_ss" => f(doc.f_ss),
            "enrollment_rate" => f(doc.enrollment_rate),
            "effect_min" => f(doc.effect_min),
            "effect_max" => f(doc.effect_max),
            "grid_points" => u(doc.grid_points),
            "iterations" => u(doc.iterations),
            "seed" => s(doc.seed),
            "calibration_paths" => u(doc.calibration_paths),
            "calibration_seed" => s(doc.calibration_seed),
            "time_limit_secs" => f(doc.time_limit_secs),
            _ => String::new(),
        }
    }
}

/// Parses a parameter file into a document, collecting warnings for keys this
/// version does not know.
pub fn parse_parameter_document(text: &str) -> Result<(ParameterDocument, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut doc = ParameterDocument::default();
    let mut warnings = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let line = index + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let (key, value) = (&record[0], &record[1]);
        if line == 1 && key == "parameter" && value == "value" {
            continue;
        }
        if !doc.set(key, value)? {
            warnings.push(format!("line {line}: unknown parameter `{key}` ignored"));
        }
    }
    Ok((doc, warnings))
}

/// Loads a parameter file. Missing keys take their defaults.
pub fn load_parameters(text: &str) -> Result<(Parameters, Vec<String>)> {
    let (doc, warnings) = parse_parameter_document(text)?;
    Ok((doc.resolve()?, warnings))
}
