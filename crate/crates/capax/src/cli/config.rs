//! Flat sectioned key=value run configuration.
//!
//! Format: `[section]` headers, `key = value` lines, `#` comments. Values on
//! capacity-like keys accept the suffixes `GW`, `MW`, `kW`; per-capacity
//! costs accept `per_GW`, `per_MW`, `per_kW`. Everything is normalized to
//! MW / euro-per-MW once, here. Unknown sections or keys are rejected.

use crate::params::{LinearReserve, MarketParams, ReserveModel, SubsidyScheme};
use crate::planner::PlannerConfig;
use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

/// Configuration failure: parse problem, unknown/missing key, bad unit.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Numerical controls with defaults chosen by refinement studies.
#[derive(Debug, Clone, Copy)]
pub struct Numerics {
    pub n_grid_1d: usize,
    pub nk_2d: usize,
    pub ny_2d: usize,
    /// Top edge of the 2D rectangle; defaults to
    /// `max(y_start, (gamma - a k0)/b)`.
    pub y_top: Option<f64>,
    /// Display-simulation step (years).
    pub dt: f64,
    /// Display-simulation horizon (years).
    pub t_end: f64,
    pub quad_horizon: f64,
    pub quad_dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub scan_points: usize,
    pub golden_tol: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            n_grid_1d: 4000,
            nk_2d: 201,
            ny_2d: 201,
            y_top: None,
            dt: 0.01,
            t_end: 50.0,
            quad_horizon: 140.0,
            quad_dt: 0.005,
            newton_tol: 1e-8,
            newton_max_iter: 40,
            scan_points: 64,
            golden_tol: 100.0,
        }
    }
}

/// Fully parsed run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub market: MarketParams,
    pub scheme: SubsidyScheme,
    pub reserve: ReserveModel,
    /// Initial reserve level for 2D simulations (linear reserve only).
    pub y_start: Option<f64>,
    pub planner: PlannerConfig,
    pub numerics: Numerics,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Planner config assembled from the planner and numerics blocks.
    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            quad_horizon: self.numerics.quad_horizon,
            quad_dt: self.numerics.quad_dt,
            n_grid: self.numerics.n_grid_1d,
            scan_points: self.numerics.scan_points,
            golden_tol: self.numerics.golden_tol,
            ..self.planner
        }
    }

    /// Rectangle top for 2D solves: configured override or the invariance
    /// rule `max(y_start, (gamma - a k0)/b)`.
    pub fn y_top(&self) -> Option<f64> {
        if self.numerics.y_top.is_some() {
            return self.numerics.y_top;
        }
        match (&self.reserve, self.y_start) {
            (ReserveModel::Linear(lin), Some(y_start)) => {
                Some(y_start.max(lin.y_null(self.planner.k0)))
            }
            _ => None,
        }
    }
}

/// How a raw value may be suffixed.
#[derive(Clone, Copy, PartialEq)]
enum UnitClass {
    /// MW-canonical: accepts GW/MW/kW.
    Capacity,
    /// euro-per-MW-canonical: accepts per_GW/per_MW/per_kW.
    PerCapacity,
    /// Bare number only.
    None,
}

fn parse_value(raw: &str, class: UnitClass, key: &str) -> Result<f64, ConfigError> {
    let mut parts = raw.split_whitespace();
    let number = parts
        .next()
        .ok_or_else(|| ConfigError(format!("empty value for `{key}`")))?;
    let value: f64 = number
        .parse()
        .map_err(|_| ConfigError(format!("`{key}`: cannot parse number `{number}`")))?;
    let suffix = parts.next();
    if parts.next().is_some() {
        return Err(ConfigError(format!("`{key}`: trailing tokens in `{raw}`")));
    }
    let factor = match (class, suffix) {
        (_, None) => 1.0,
        (UnitClass::Capacity, Some("GW")) => 1e3,
        (UnitClass::Capacity, Some("MW")) => 1.0,
        (UnitClass::Capacity, Some("kW")) => 1e-3,
        (UnitClass::PerCapacity, Some("per_GW")) => 1e-3,
        (UnitClass::PerCapacity, Some("per_MW")) => 1.0,
        (UnitClass::PerCapacity, Some("per_kW")) => 1e3,
        (_, Some(other)) => {
            return Err(ConfigError(format!(
                "`{key}`: unit `{other}` not allowed here"
            )))
        }
    };
    Ok(value * factor)
}

struct Section {
    name: String,
    entries: HashMap<String, String>,
}

impl Section {
    fn take(&mut self, key: &str, class: UnitClass) -> Result<f64, ConfigError> {
        let raw = self.entries.remove(key).ok_or_else(|| {
            ConfigError(format!("missing key `{key}` in section [{}]", self.name))
        })?;
        parse_value(&raw, class, key)
    }

    fn take_optional(&mut self, key: &str, class: UnitClass) -> Result<Option<f64>, ConfigError> {
        match self.entries.remove(key) {
            Some(raw) => Ok(Some(parse_value(&raw, class, key)?)),
            None => Ok(None),
        }
    }

    fn take_string(&mut self, key: &str) -> Result<String, ConfigError> {
        self.entries.remove(key).ok_or_else(|| {
            ConfigError(format!("missing key `{key}` in section [{}]", self.name))
        })
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(key) = self.entries.keys().next() {
            return Err(ConfigError(format!(
                "unknown key `{key}` in section [{}]",
                self.name
            )));
        }
        Ok(())
    }
}

fn split_sections(text: &str) -> Result<HashMap<String, Section>, ConfigError> {
    let mut sections: HashMap<String, Section> = HashMap::new();
    let mut current: Option<String> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if sections.contains_key(&name) {
                return Err(ConfigError(format!("duplicate section [{name}]")));
            }
            sections.insert(
                name.clone(),
                Section {
                    name: name.clone(),
                    entries: HashMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let section = current
            .as_ref()
            .ok_or_else(|| ConfigError(format!("line {}: key outside any section", lineno + 1)))?;
        let entries = &mut sections.get_mut(section).unwrap().entries;
        let key = key.trim().to_string();
        if entries.contains_key(&key) {
            return Err(ConfigError(format!("duplicate key `{key}` in [{section}]")));
        }
        entries.insert(key, value.trim().to_string());
    }
    Ok(sections)
}

/// Parses and validates a full run configuration.
pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let mut sections = split_sections(text)?;
    let known = ["market", "subsidy", "reserve", "planner", "numerics", "output"];
    for name in sections.keys() {
        if !known.contains(&name.as_str()) {
            return Err(ConfigError(format!("unknown section [{name}]")));
        }
    }

    let mut market = sections
        .remove("market")
        .ok_or_else(|| ConfigError("missing section [market]".into()))?;
    let params = MarketParams {
        r: market.take("r", UnitClass::None)?,
        delta: market.take("delta", UnitClass::None)?,
        lambda: market.take("lambda", UnitClass::None)?,
        eps: market.take("eps", UnitClass::Capacity)?,
        h: market.take("h", UnitClass::None)?,
        p: market.take("p", UnitClass::None)?,
        alpha: market.take("alpha", UnitClass::PerCapacity)?,
        c: market.take("c", UnitClass::None)?,
    };
    market.finish()?;
    params
        .validate()
        .map_err(|e| ConfigError(e.to_string()))?;

    let mut subsidy = sections
        .remove("subsidy")
        .ok_or_else(|| ConfigError("missing section [subsidy]".into()))?;
    let scheme = match subsidy.take_string("variant")?.as_str() {
        "constant" => SubsidyScheme::Constant {
            alpha_sub: subsidy.take("alpha_sub", UnitClass::PerCapacity)?,
            c_sub: subsidy.take("c_sub", UnitClass::None)?,
        },
        "affine" => SubsidyScheme::AffineInPrice {
            c1_sub: subsidy.take("c1_sub", UnitClass::None)?,
            c2_sub: subsidy.take("c2_sub", UnitClass::None)?,
            alpha_sub: subsidy.take("alpha_sub", UnitClass::PerCapacity)?,
        },
        other => {
            return Err(ConfigError(format!(
                "subsidy variant must be `constant` or `affine`, got `{other}`"
            )))
        }
    };
    subsidy.finish()?;
    scheme
        .validate(&params)
        .map_err(|e| ConfigError(e.to_string()))?;

    let mut reserve_sec = sections
        .remove("reserve")
        .ok_or_else(|| ConfigError("missing section [reserve]".into()))?;
    let (reserve, y_start) = match reserve_sec.take_string("variant")?.as_str() {
        "fixed" => (
            ReserveModel::Fixed {
                y0: reserve_sec.take("y0", UnitClass::Capacity)?,
            },
            None,
        ),
        "linear" => {
            let lin = LinearReserve {
                a: reserve_sec.take("a", UnitClass::None)?,
                b: reserve_sec.take("b", UnitClass::None)?,
                gamma: reserve_sec.take("gamma", UnitClass::Capacity)?,
            };
            let y_start = reserve_sec.take("y_start", UnitClass::Capacity)?;
            (ReserveModel::Linear(lin), Some(y_start))
        }
        other => {
            return Err(ConfigError(format!(
                "reserve variant must be `fixed` or `linear`, got `{other}`"
            )))
        }
    };
    reserve_sec.finish()?;
    reserve
        .validate()
        .map_err(|e| ConfigError(e.to_string()))?;

    let mut planner_sec = sections
        .remove("planner")
        .ok_or_else(|| ConfigError("missing section [planner]".into()))?;
    let planner = PlannerConfig {
        mu: planner_sec.take("mu", UnitClass::None)?,
        k_bar: planner_sec.take("k_bar", UnitClass::Capacity)?,
        k0: planner_sec.take("k0", UnitClass::Capacity)?,
        ..PlannerConfig::default()
    };
    planner_sec.finish()?;
    planner
        .validate()
        .map_err(|e| ConfigError(e.to_string()))?;

    let mut numerics = Numerics::default();
    if let Some(mut sec) = sections.remove("numerics") {
        if let Some(v) = sec.take_optional("n_grid_1d", UnitClass::None)? {
            numerics.n_grid_1d = v as usize;
        }
        if let Some(v) = sec.take_optional("nk_2d", UnitClass::None)? {
            numerics.nk_2d = v as usize;
        }
        if let Some(v) = sec.take_optional("ny_2d", UnitClass::None)? {
            numerics.ny_2d = v as usize;
        }
        numerics.y_top = sec.take_optional("y_top", UnitClass::Capacity)?;
        if let Some(v) = sec.take_optional("dt", UnitClass::None)? {
            numerics.dt = v;
        }
        if let Some(v) = sec.take_optional("t_end", UnitClass::None)? {
            numerics.t_end = v;
        }
        if let Some(v) = sec.take_optional("quad_horizon", UnitClass::None)? {
            numerics.quad_horizon = v;
        }
        if let Some(v) = sec.take_optional("quad_dt", UnitClass::None)? {
            numerics.quad_dt = v;
        }
        if let Some(v) = sec.take_optional("newton_tol", UnitClass::None)? {
            numerics.newton_tol = v;
        }
        if let Some(v) = sec.take_optional("newton_max_iter", UnitClass::None)? {
            numerics.newton_max_iter = v as usize;
        }
        if let Some(v) = sec.take_optional("scan_points", UnitClass::None)? {
            numerics.scan_points = v as usize;
        }
        if let Some(v) = sec.take_optional("golden_tol", UnitClass::None)? {
            numerics.golden_tol = v;
        }
        sec.finish()?;
    }

    let output_dir = match sections.remove("output") {
        Some(mut sec) => {
            let dir = sec.take_string("dir")?;
            sec.finish()?;
            PathBuf::from(dir)
        }
        None => PathBuf::from("out"),
    };

    Ok(RunConfig {
        market: params,
        scheme,
        reserve,
        y_start,
        planner,
        numerics,
        output_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
[market]
r = 0.1
delta = 0.06931471805599453
lambda = 5
eps = 0.1 MW
h = 3000
p = 6.5e6
alpha = 1400 per_kW
c = 15

[subsidy]
variant = constant
alpha_sub = 0
c_sub = 44.4666666667

[reserve]
variant = fixed
y0 = 70 GW

[planner]
mu = 1000
k_bar = 60 GW
k0 = 30 GW
";

    #[test]
    fn parses_reference_config_with_units() {
        let cfg = parse(BASE).unwrap();
        assert_eq!(cfg.market.alpha, 1.4e6); // 1400 euro/kW -> 1.4e6 euro/MW
        assert_eq!(cfg.planner.k_bar, 60_000.0);
        assert!(matches!(cfg.reserve, ReserveModel::Fixed { y0 } if y0 == 70_000.0));
        assert_eq!(cfg.numerics.n_grid_1d, 4000);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn rejects_unknown_key() {
        let text = BASE.replace("c_sub = 44.4666666667", "c_sub = 1\nc_subb = 2");
        let err = parse(&text).unwrap_err();
        assert!(err.0.contains("c_subb"), "{err}");
    }

    #[test]
    fn rejects_missing_key() {
        let text = BASE.replace("p = 6.5e6\n", "");
        let err = parse(&text).unwrap_err();
        assert!(err.0.contains('p'), "{err}");
    }

    #[test]
    fn rejects_unit_on_dimensionless_key() {
        let text = BASE.replace("h = 3000", "h = 3000 GW");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn linear_reserve_and_rectangle_rule() {
        let text = BASE.replace(
            "variant = fixed\ny0 = 70 GW",
            "variant = linear\na = 0.6666666666666666\nb = 1\ngamma = 130 GW\ny_start = 100 GW",
        );
        let cfg = parse(&text).unwrap();
        // y_top rule: max(y_start, (gamma - a k0)/b) = 110 GW.
        let y_top = cfg.y_top().unwrap();
        assert!((y_top - 110_000.0).abs() < 1e-6, "{y_top}");
    }

    #[test]
    fn affine_variant_parses() {
        let text = BASE.replace(
            "variant = constant\nalpha_sub = 0\nc_sub = 44.4666666667",
            "variant = affine\nc1_sub = 5.7e6\nc2_sub = 0\nalpha_sub = 0",
        );
        let cfg = parse(&text).unwrap();
        assert!(matches!(cfg.scheme, SubsidyScheme::AffineInPrice { .. }));
    }
}
