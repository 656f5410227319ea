//! Flat key/value parameters from an INI file, overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use stochnls::experiments::AnalyticProfile;
use stochnls::{InitialProfile, Regime, SchemeConfig, SpectralCovariance};

use crate::error::CliError;

const COMMAND_SECTIONS: [&str; 5] = ["simulate", "converge", "residual", "depend", "noise-check"];

#[derive(Debug, Default)]
pub struct Params {
    given: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Params {
    /// Reads the section-less keys and the `[command]` section of `path`.
    /// Keys in the command section override section-less ones.
    pub fn from_ini(path: &Path, command: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_file(path).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
        let mut given = BTreeMap::new();
        for (section, props) in ini.iter() {
            match section {
                None => {}
                Some(s) if s == command => continue,
                Some(s) if COMMAND_SECTIONS.contains(&s) => continue,
                Some(s) => return Err(CliError::config("config", format!("unknown section [{s}]"))),
            }
            for (k, v) in props.iter() {
                given.insert(normalize(k), v.trim().to_string());
            }
        }
        if let Some(props) = ini.section(Some(command)) {
            for (k, v) in props.iter() {
                given.insert(normalize(k), v.trim().to_string());
            }
        }
        Ok(Self {
            given,
            resolved: BTreeMap::new(),
        })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.given.insert(key.to_string(), value.into());
    }

    pub fn set_opt(&mut self, key: &str, value: Option<&String>) {
        if let Some(v) = value {
            self.set(key, v.clone());
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.given.contains_key(key)
    }

    /// Every key consulted so far with its effective value.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    /// Fails on keys that no consulted getter used.
    pub fn reject_unknown(&self) -> Result<(), CliError> {
        match self.given.keys().find(|k| !self.resolved.contains_key(*k)) {
            Some(k) => Err(CliError::config(k, "unknown field for this command")),
            None => Ok(()),
        }
    }

    fn raw(&mut self, key: &str, default: &str) -> String {
        let v = self.given.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.resolved.insert(key.to_string(), v.clone());
        v
    }

    pub fn get<T: FromStr>(&mut self, key: &str, default: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key, default);
        v.parse()
            .map_err(|e| CliError::config(key, format!("cannot parse {v:?}: {e}")))
    }

    pub fn get_string(&mut self, key: &str, default: &str) -> String {
        self.raw(key, default)
    }

    pub fn get_bool(&mut self, key: &str, default: bool) -> Result<bool, CliError> {
        let v = self.raw(key, if default { "true" } else { "false" });
        match v.to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "on" => Ok(true),
            "0" | "false" | "no" | "off" => Ok(false),
            _ => Err(CliError::config(key, format!("expected a boolean, got {v:?}"))),
        }
    }

    pub fn get_list<T: FromStr>(&mut self, key: &str, default: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key, default);
        parse_list(&v).map_err(|e| CliError::config(key, e))
    }

    /// Shared scheme settings on a grid with `n_interior` interior nodes.
    pub fn scheme_config(&mut self, n_interior: usize, modes_default: &str) -> Result<SchemeConfig, CliError> {
        let lambda: f64 = self.get("lambda", "-1")?;
        let regime = Regime::from_lambda(lambda).ok_or_else(|| CliError::config("lambda", "must be 1 or -1"))?;
        let cfg = SchemeConfig {
            n_interior,
            dt: self.get("dt", "1e-4")?,
            t_final: self.get("t", "0.5")?,
            regime,
            covariance: self.covariance(modes_default)?,
            seed: self.get("seed", "0")?,
            fp_tol: self.get("fp_tol", "1e-12")?,
            fp_max_iter: self.get("fp_max_iter", "100")?,
            fp_damping: self.get("fp_damping", "1")?,
            blowup_threshold: self.get("blowup_threshold", "1e6")?,
            report_every: self.get("report_every", "10")?,
        };
        cfg.validate().map_err(|e| CliError::config(e.field, e.message))?;
        Ok(cfg)
    }

    /// `eigenvalues` (explicit list) or `modes` with `decay`.
    pub fn covariance(&mut self, modes_default: &str) -> Result<SpectralCovariance, CliError> {
        if self.has("eigenvalues") {
            if self.has("modes") || self.has("decay") {
                return Err(CliError::config("eigenvalues", "give either eigenvalues or modes/decay, not both"));
            }
            let q: Vec<f64> = self.get_list("eigenvalues", "")?;
            return SpectralCovariance::from_eigenvalues(q).map_err(|e| CliError::config("eigenvalues", e.to_string()));
        }
        let modes: usize = self.get("modes", modes_default)?;
        let decay: f64 = self.get("decay", "12")?;
        if modes == 0 {
            return Ok(SpectralCovariance::none());
        }
        SpectralCovariance::power_law(modes, decay).map_err(|e| CliError::config("decay", e.to_string()))
    }

    pub fn initial(&mut self, key: &str, default: &str) -> Result<InitialProfile, CliError> {
        let v = self.raw(key, default);
        parse_initial(&v).map_err(|e| CliError::config(key, e))
    }

    pub fn analytic(&mut self, key: &str, default: &str) -> Result<AnalyticProfile, CliError> {
        let v = self.raw(key, default);
        parse_analytic(&v).map_err(|e| CliError::config(key, e))
    }
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

pub fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("cannot parse list item {s:?}: {e}")))
        .collect()
}

fn numbers(parts: &[&str], want: usize, usage: &str) -> Result<Vec<f64>, String> {
    if parts.len() != want {
        return Err(format!("expected {usage}"));
    }
    parts
        .iter()
        .map(|s| s.parse::<f64>().map_err(|e| format!("{s:?}: {e} (expected {usage})")))
        .collect()
}

/// `sine:MODE:AMPLITUDE` or `sech:AMPLITUDE:CENTER:WIDTH`.
pub fn parse_initial(v: &str) -> Result<InitialProfile, String> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    match parts[0] {
        "sine" => {
            let x = numbers(&parts[1..], 2, "sine:MODE:AMPLITUDE")?;
            if x[0] < 1.0 || x[0].fract() != 0.0 {
                return Err("sine mode must be a positive integer".into());
            }
            Ok(InitialProfile::Sine {
                mode: x[0] as u32,
                amplitude: x[1],
            })
        }
        "sech" => {
            let x = numbers(&parts[1..], 3, "sech:AMPLITUDE:CENTER:WIDTH")?;
            if !(x[2] > 0.0) {
                return Err("sech width must be positive".into());
            }
            Ok(InitialProfile::Sech {
                amplitude: x[0],
                center: x[1],
                width: x[2],
            })
        }
        other => Err(format!("unknown profile {other:?}; use sine:MODE:AMPLITUDE or sech:AMPLITUDE:CENTER:WIDTH")),
    }
}

/// `sine:MODE:AMPLITUDE` or `affine:SLOPE:OFFSET`.
pub fn parse_analytic(v: &str) -> Result<AnalyticProfile, String> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    match parts[0] {
        "sine" => match parse_initial(v)? {
            InitialProfile::Sine { mode, amplitude } => Ok(AnalyticProfile::Sine { mode, amplitude }),
            InitialProfile::Sech { .. } => unreachable!(),
        },
        "affine" => {
            let x = numbers(&parts[1..], 2, "affine:SLOPE:OFFSET")?;
            Ok(AnalyticProfile::Affine {
                slope: x[0],
                offset: x[1],
            })
        }
        other => Err(format!("unknown profile {other:?}; use sine:MODE:AMPLITUDE or affine:SLOPE:OFFSET")),
    }
}
