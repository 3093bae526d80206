//! Versioned plain-text model files shared by every trained component.
//!
//! ```text
//! grouprank-model 1
//! type quality
//! # free-form comment lines
//! epsilon 1e-1
//! weights[3]
//! 1.5e0
//! -2e-3
//! 0e0
//! ```
//!
//! Scalars are `key value`; arrays are `key[n]` followed by `n` lines with one
//! value each. Reals use shortest round-trip exponent notation, so a write/read
//! cycle is exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &str = "grouprank-model";
pub const VERSION: u32 = 1;

pub struct ModelWriter {
    out: String,
}

impl ModelWriter {
    pub fn new(type_tag: &str) -> Self {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(out, "type {type_tag}");
        Self { out }
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        for line in text.lines() {
            let _ = writeln!(self.out, "# {line}");
        }
        self
    }

    pub fn real(&mut self, key: &str, value: f64) -> &mut Self {
        let _ = writeln!(self.out, "{key} {value:e}");
        self
    }

    pub fn int(&mut self, key: &str, value: u64) -> &mut Self {
        let _ = writeln!(self.out, "{key} {value}");
        self
    }

    pub fn text(&mut self, key: &str, value: &str) -> &mut Self {
        let _ = writeln!(self.out, "{key} {value}");
        self
    }

    pub fn reals(&mut self, key: &str, values: &[f64]) -> &mut Self {
        let _ = writeln!(self.out, "{key}[{}]", values.len());
        for v in values {
            let _ = writeln!(self.out, "{v:e}");
        }
        self
    }

    pub fn finish(&self) -> String {
        self.out.clone()
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug)]
pub struct ModelReader {
    type_tag: String,
    scalars: HashMap<String, String>,
    arrays: HashMap<String, Vec<f64>>,
}

impl ModelReader {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::ModelFormat("empty file".into()))?;
        let version = header
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::ModelFormat(format!("bad header `{header}`")))?;
        if version != VERSION.to_string() {
            return Err(Error::ModelFormat(format!(
                "unsupported version `{version}`"
            )));
        }
        let type_tag = lines
            .next()
            .and_then(|l| l.strip_prefix("type "))
            .ok_or_else(|| Error::ModelFormat("missing type line".into()))?
            .trim()
            .to_string();

        let mut scalars = HashMap::new();
        let mut arrays = HashMap::new();
        while let Some(line) = lines.next() {
            if let Some((key, rest)) = line.split_once('[') {
                let n: usize = rest
                    .strip_suffix(']')
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| Error::ModelFormat(format!("bad array header `{line}`")))?;
                let mut values = Vec::with_capacity(n);
                for _ in 0..n {
                    let v = lines
                        .next()
                        .ok_or_else(|| Error::ModelFormat(format!("array `{key}` truncated")))?;
                    values.push(parse_real(v)?);
                }
                arrays.insert(key.to_string(), values);
            } else {
                let (key, value) = line
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| Error::ModelFormat(format!("bad line `{line}`")))?;
                scalars.insert(key.to_string(), value.trim().to_string());
            }
        }
        Ok(Self {
            type_tag,
            scalars,
            arrays,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn type_tag(&self) -> &str {
        &self.type_tag
    }

    pub fn expect_type(&self, tag: &str) -> Result<()> {
        if self.type_tag != tag {
            return Err(Error::ModelFormat(format!(
                "expected model type `{tag}`, found `{}`",
                self.type_tag
            )));
        }
        Ok(())
    }

    pub fn text(&self, key: &str) -> Result<&str> {
        self.scalars
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::ModelFormat(format!("missing key `{key}`")))
    }

    pub fn real(&self, key: &str) -> Result<f64> {
        parse_real(self.text(key)?)
    }

    pub fn int(&self, key: &str) -> Result<u64> {
        let v = self.text(key)?;
        v.parse()
            .map_err(|_| Error::ModelFormat(format!("`{key}`: bad integer `{v}`")))
    }

    pub fn reals(&self, key: &str) -> Result<&[f64]> {
        self.arrays
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::ModelFormat(format!("missing array `{key}`")))
    }

    pub fn reals_exact(&self, key: &str, len: usize) -> Result<&[f64]> {
        let v = self.reals(key)?;
        if v.len() != len {
            return Err(Error::ModelFormat(format!(
                "array `{key}` has {} values, expected {len}",
                v.len()
            )));
        }
        Ok(v)
    }
}

fn parse_real(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::ModelFormat(format!("bad number `{s}`")))?;
    if !v.is_finite() {
        return Err(Error::ModelFormat(format!("non-finite value `{s}`")));
    }
    Ok(v)
}
