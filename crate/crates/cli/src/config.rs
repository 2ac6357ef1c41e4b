//! Flat key-value configuration with optional `[section]` grouping lines.
//!
//! Values are kept as raw strings and parsed on demand; numbers accept
//! scientific notation and simple fractions ("8/3"), complex values accept
//! "a+bi" forms, and lists are bracketed: `kappa_list = [2, 8/3, 4, 6, 8]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use sle_lqg_core::{LabError, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut entries = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(LabError::Config(format!(
                        "line {}: unterminated section header",
                        ln + 1
                    )));
                }
                continue; // sections are grouping sugar; keys are global
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(LabError::Config(format!(
                    "line {}: expected key = value, got '{line}'",
                    ln + 1
                )));
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Config { entries })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        let cfg = Self::parse(&text)?;
        if cfg.entries.is_empty() {
            return Err(LabError::Config(format!(
                "config {} holds no key = value entries",
                path.display()
            )));
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.trim().into(), value.trim().into());
    }

    pub fn get_raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(s) => parse_number(s)
                .ok_or_else(|| LabError::Config(format!("key {key}: bad number '{s}'"))),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        let v = self.get_f64(key, default as f64)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(LabError::Config(format!("key {key}: expected an integer")));
        }
        Ok(v as u64)
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.get_u64(key, default as u64)? as usize)
    }

    pub fn get_complex(&self, key: &str, default: Complex64) -> Result<Complex64> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(s) => parse_complex(s)
                .ok_or_else(|| LabError::Config(format!("key {key}: bad complex '{s}'"))),
        }
    }

    pub fn get_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.entries.get(key) {
            None => Ok(default.to_vec()),
            Some(s) => parse_list(s)
                .ok_or_else(|| LabError::Config(format!("key {key}: bad list '{s}'"))),
        }
    }

    /// Canonical one-line-per-key rendering used for the manifest hash.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Number with fraction support: "1.5e-3", "8/3", "-2".
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num.trim().parse().ok()?;
        let d: f64 = den.trim().parse().ok()?;
        if d == 0.0 {
            return None;
        }
        return Some(n / d);
    }
    s.parse().ok()
}

/// Complex literal: "1+1i", "2i", "-0.5-2i", "3".
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s = s.trim().replace(' ', "");
    if !s.ends_with('i') {
        return Some(Complex64::new(parse_number(&s)?, 0.0));
    }
    let body = &s[..s.len() - 1];
    // Split at the last +/- that is not an exponent sign or leading sign.
    let bytes = body.as_bytes();
    let mut split = None;
    for i in (1..bytes.len()).rev() {
        let c = bytes[i] as char;
        if (c == '+' || c == '-') && !matches!(bytes[i - 1] as char, 'e' | 'E') {
            split = Some(i);
            break;
        }
    }
    match split {
        Some(i) => {
            let re: f64 = parse_number(&body[..i])?;
            let im_str = &body[i..];
            let im = match im_str {
                "+" => 1.0,
                "-" => -1.0,
                _ => parse_number(im_str)?,
            };
            Some(Complex64::new(re, im))
        }
        None => {
            let im = match body {
                "" => 1.0,
                "-" => -1.0,
                _ => parse_number(body)?,
            };
            Some(Complex64::new(0.0, im))
        }
    }
}

pub fn parse_list(s: &str) -> Option<Vec<f64>> {
    let s = s.trim();
    let inner = s.strip_prefix('[')?.strip_suffix(']')?;
    if inner.trim().is_empty() {
        return Some(Vec::new());
    }
    inner.split(',').map(parse_number).collect()
}
