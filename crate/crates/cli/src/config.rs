//! `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;

use naghdi_core::forms::MaterialParams;
use naghdi_core::Vec3;

/// Keys accepted in config files, with their defaults.
pub const KEYS: &[(&str, &str)] = &[
    ("E", "1"),
    ("mu", "0.3"),
    ("h", "0.01"),
    ("dt", "0.01"),
    ("t_end", "10"),
    ("sample_stride", "10"),
    ("a0", "1"),
    ("region", "all"),
    ("eps", "0.05"),
    ("taper", "0"),
    ("field", "radial"),
    ("lambda0", "auto"),
    ("frame", "default"),
    ("bump_center", "auto"),
    ("bump_radius", "0.45"),
    ("p", "0.5"),
    ("fit_start", "auto"),
    ("T", "4"),
    ("probes", "4"),
    ("tol", "1e-10"),
    ("max_iters", "500"),
    ("seed", "0"),
];

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Effective configuration: defaults, then the config file, then flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected `key = value`, found `{line}`", i + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| usage(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(usage(format!("unknown config key `{key}`")));
        }
        if value.is_empty() {
            return Err(usage(format!("empty value for `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        &self.values[key]
    }

    /// Canonical text (sorted `key=value` lines), the input of the config hash.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn f64(&self, key: &str) -> anyhow::Result<f64> {
        let v = self.raw(key);
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| usage(format!("`{key}` must be a number, got `{v}`")))
    }

    pub fn positive(&self, key: &str) -> anyhow::Result<f64> {
        let x = self.f64(key)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(usage(format!("`{key}` must be positive, got {x}")))
        }
    }

    pub fn usize(&self, key: &str) -> anyhow::Result<usize> {
        let v = self.raw(key);
        v.parse().map_err(|_| usage(format!("`{key}` must be a non-negative integer, got `{v}`")))
    }

    pub fn u64(&self, key: &str) -> anyhow::Result<u64> {
        let v = self.raw(key);
        v.parse().map_err(|_| usage(format!("`{key}` must be a non-negative integer, got `{v}`")))
    }

    /// `None` for `auto`.
    pub fn auto_f64(&self, key: &str) -> anyhow::Result<Option<f64>> {
        if self.raw(key) == "auto" {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    pub fn auto_point(&self, key: &str) -> anyhow::Result<Option<Vec3>> {
        match self.raw(key) {
            "auto" => Ok(None),
            s => parse_point(s).map(Some),
        }
    }

    pub fn material(&self) -> anyhow::Result<MaterialParams> {
        MaterialParams::new(self.f64("E")?, self.f64("mu")?, self.f64("h")?).map_err(|e| usage(e.to_string()))
    }
}

pub fn parse_point(s: &str) -> anyhow::Result<Vec3> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("expected a point `x,y,z`, got `{s}`")))?;
    match parts[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        [x, y] => Ok(Vec3::new(x, y, 0.0)),
        _ => Err(usage(format!("expected a point `x,y,z`, got `{s}`"))),
    }
}

/// Damping region selector.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionSpec {
    All,
    None,
    Field(Vec3),
    Balls(usize),
}

impl RegionSpec {
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        match s {
            "all" => return Ok(RegionSpec::All),
            "none" => return Ok(RegionSpec::None),
            _ => {}
        }
        if let Some(p) = s.strip_prefix("field:") {
            return Ok(RegionSpec::Field(parse_point(p)?));
        }
        if let Some(n) = s.strip_prefix("balls:") {
            return match n.parse::<usize>() {
                Ok(n) if n > 0 => Ok(RegionSpec::Balls(n)),
                _ => Err(usage(format!("`balls:N` needs a positive count, got `{n}`"))),
            };
        }
        Err(usage(format!("unknown region `{s}` (all, none, field:x,y,z, balls:N)")))
    }
}

/// Candidate escape field for `escape-check`.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Radial(Option<Vec3>),
    Rotation(Option<Vec3>),
    Shear(Option<Vec3>),
}

impl FieldSpec {
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        let (kind, at) = match s.split_once(':') {
            Some((k, p)) => (k, Some(parse_point(p)?)),
            None => (s, None),
        };
        match kind {
            "radial" => Ok(FieldSpec::Radial(at)),
            "rotation" => Ok(FieldSpec::Rotation(at)),
            "shear" => Ok(FieldSpec::Shear(at)),
            _ => Err(usage(format!("unknown field `{s}` (radial, rotation, shear, optionally `:x,y,z`)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_with_comments() {
        let c = RunConfig::parse("# run\nmu = 0.25\n\nh=0.1 # thin\n").unwrap();
        assert_eq!(c.f64("mu").unwrap(), 0.25);
        assert_eq!(c.f64("h").unwrap(), 0.1);
        assert_eq!(c.raw("region"), "all");
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(RunConfig::parse("nu = 0.3").is_err());
        assert!(RunConfig::parse("mu 0.3").is_err());
        assert!(RunConfig::parse("mu =").is_err());
        let c = RunConfig::parse("mu = 0.7").unwrap();
        assert!(c.material().is_err());
    }

    #[test]
    fn canonical_is_order_independent() {
        let a = RunConfig::parse("mu=0.2\nh=0.1").unwrap();
        let b = RunConfig::parse("h = 0.1\nmu = 0.2").unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }

    #[test]
    fn region_specs() {
        assert_eq!(RegionSpec::parse("all").unwrap(), RegionSpec::All);
        assert_eq!(RegionSpec::parse("none").unwrap(), RegionSpec::None);
        assert_eq!(RegionSpec::parse("field:0.5,0.5,0").unwrap(), RegionSpec::Field(Vec3::new(0.5, 0.5, 0.0)));
        assert_eq!(RegionSpec::parse("balls:4").unwrap(), RegionSpec::Balls(4));
        assert!(RegionSpec::parse("balls:0").is_err());
        assert!(RegionSpec::parse("half").is_err());
    }

    #[test]
    fn field_specs() {
        assert_eq!(FieldSpec::parse("radial").unwrap(), FieldSpec::Radial(None));
        assert_eq!(FieldSpec::parse("rotation:1,2").unwrap(), FieldSpec::Rotation(Some(Vec3::new(1.0, 2.0, 0.0))));
        assert!(FieldSpec::parse("spiral").is_err());
    }
}
