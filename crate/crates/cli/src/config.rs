//! Flat `section.key = value` configuration with a fixed schema.
//!
//! Every key has a default (possibly empty) and a value kind; unknown keys
//! and malformed values are rejected when the configuration is loaded, so
//! no command starts work on a bad file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy)]
enum Kind {
    UInt,
    Float,
    Bool,
    Text,
    Choice(&'static [&'static str]),
}

struct KeyDef {
    key: &'static str,
    kind: Kind,
    default: &'static str,
}

const fn k(key: &'static str, kind: Kind, default: &'static str) -> KeyDef {
    KeyDef { key, kind, default }
}

use Kind::*;

const SCHEMA: &[KeyDef] = &[
    k("run.seed", UInt, "0"),
    k("run.output", Text, ""),
    k("run.checkpoint", Text, ""),
    k("run.bit_depth", Choice(&["8", "16"]), "16"),
    k("data.train", Text, ""),
    k("data.val", Text, ""),
    k("data.unsup", Text, ""),
    k("data.refs", Text, ""),
    k("data.input", Text, ""),
    k("data.reference", Text, ""),
    k("data.noise", Text, "gaussian:25"),
    k("data.observations_only", Bool, "false"),
    k("data.synthetic", UInt, "0"),
    k("data.size", UInt, "64"),
    k("data.channels", UInt, "1"),
    k("data.format", Choice(&["pfm", "png"]), "pfm"),
    k("op.kind", Choice(&["identity", "downsample", "bayer"]), "identity"),
    k("op.scale", UInt, "2"),
    k("op.sigma", Float, "1.0"),
    k("op.pattern", Choice(&["rggb", "grbg", "gbrg", "bggr"]), "rggb"),
    k("op.init", Choice(&["auto", "identity", "bicubic", "adjoint"]), "auto"),
    k("flow.scheme", Choice(&["expl", "explicit", "impl", "semi-implicit", "en", "euler-newton"]), "expl"),
    k("flow.steps", UInt, "10"),
    k("flow.stop_time", Float, "0.1"),
    k("flow.t_max", Float, "1000"),
    k("flow.cg_iters", UInt, "10"),
    k("flow.cg_tol", Float, "1e-10"),
    k("term.kind", Choice(&["l2", "frechet", "divergence"]), "l2"),
    k("term.prox", Choice(&["auto", "true", "false"]), "auto"),
    k("term.scale", Float, "1.0"),
    k("term.knots", UInt, "31"),
    k("term.half", UInt, "15"),
    k("term.q", Float, "2.0"),
    k("tdv.features", UInt, "8"),
    k("tdv.blocks", UInt, "1"),
    k("train.lr", Float, "4e-4"),
    k("train.beta1", Float, "0.5"),
    k("train.beta2", Float, "0.9"),
    k("train.eps", Float, "1e-8"),
    k("train.batch", UInt, "4"),
    k("train.iterations", UInt, "500"),
    k("train.loss", Text, "l1"),
    k("train.crop", UInt, "48"),
    k("train.eval_interval", UInt, "50"),
    k("train.decay_every", UInt, "0"),
    k("train.decay_factor", Float, "4"),
    k("train.augment", Bool, "true"),
    k("train.check_invariants", Bool, "true"),
    k("train.wall_clock", Bool, "false"),
    k("train.checkpoint_every", UInt, "0"),
    k("train.init", Text, ""),
    k("train.resume", Text, ""),
    k("val.count", UInt, "4"),
    k("val.crop", UInt, "0"),
    k("val.noise", Text, ""),
    k("val.branch", Choice(&["auto", "sup", "unsup"]), "auto"),
    k("shared.alpha", Float, "0.8"),
    k("shared.lr", Float, "1e-4"),
    k("shared.batch", UInt, "2"),
    k("shared.crop", UInt, "40"),
    k("shared.features", Choice(&["id", "dct", "ae"]), "dct"),
    k("shared.ae", Text, ""),
    k("shared.patch", UInt, "6"),
    k("shared.stride", UInt, "3"),
    k("shared.p", Float, "1"),
    k("shared.beta", Float, "1"),
    k("shared.iters", UInt, "50"),
    k("shared.refs", UInt, "0"),
    k("shared.term", Choice(&["same", "l2", "frechet", "divergence"]), "same"),
    k("reconstruct.frames", Bool, "false"),
    k("reconstruct.branch", Choice(&["sup", "unsup"]), "sup"),
    k("eval.y_channel", Bool, "false"),
    k("eval.border", UInt, "0"),
    k("consistency.steps", Text, "5,10,20,40,80"),
    k("consistency.reference", UInt, "320"),
    k("consistency.schemes", Text, "expl,en"),
    k("consistency.term", Choice(&["checkpoint", "l2", "frechet", "divergence"]), "checkpoint"),
    k("consistency.branch", Choice(&["sup", "unsup"]), "sup"),
    k("consistency.images", UInt, "1"),
    k("ae.patch", UInt, "6"),
    k("ae.stride", UInt, "1"),
    k("ae.dim", UInt, "16"),
    k("ae.max_patches", UInt, "20000"),
];

/// Validated configuration: every schema key resolved to a string value.
#[derive(Debug, Clone)]
pub struct Config {
    command: String,
    values: BTreeMap<&'static str, String>,
    base_dir: PathBuf,
}

fn def(key: &str) -> Result<&'static KeyDef, CliError> {
    SCHEMA
        .iter()
        .find(|d| d.key == key)
        .ok_or_else(|| CliError::Config(format!("unknown key '{key}'")))
}

fn check(d: &KeyDef, value: &str) -> Result<(), CliError> {
    let bad = |what: &str| Err(CliError::Config(format!("{} = '{value}': expected {what}", d.key)));
    match d.kind {
        UInt => value.parse::<u64>().map(|_| ()).or_else(|_| bad("a non-negative integer")),
        Float => match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(()),
            _ => bad("a finite number"),
        },
        Bool => match value {
            "true" | "false" => Ok(()),
            _ => bad("true or false"),
        },
        Text => Ok(()),
        Choice(options) if options.contains(&value) => Ok(()),
        Choice(options) => bad(&format!("one of {}", options.join(", "))),
    }
}

impl Config {
    /// Parses `text`, then applies `overrides` in order. Relative paths are
    /// resolved against `base_dir` (the config file's directory).
    pub fn parse(command: &str, text: &str, overrides: &[(String, String)], base_dir: &Path) -> Result<Self, CliError> {
        let mut values: BTreeMap<&'static str, String> =
            SCHEMA.iter().map(|d| (d.key, d.default.to_string())).collect();
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let d = def(key).map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
            if let Some(prev) = seen.insert(d.key, n + 1) {
                return Err(CliError::Config(format!("line {}: '{key}' already set on line {prev}", n + 1)));
            }
            check(d, value)?;
            values.insert(d.key, value.to_string());
        }
        for (key, value) in overrides {
            let d = def(key)?;
            check(d, value)?;
            values.insert(d.key, value.clone());
        }
        Ok(Self { command: command.to_string(), values, base_dir: base_dir.to_path_buf() })
    }

    pub fn load(command: &str, path: &Path, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(command, &text, overrides, &base)
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).unwrap_or_else(|| panic!("key '{key}' missing from the schema"))
    }

    pub fn str(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.raw(key).parse().expect("validated integer")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.u64(key) as usize
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.raw(key).parse().expect("validated number")
    }

    pub fn bool(&self, key: &str) -> bool {
        self.raw(key) == "true"
    }

    /// Optional path; empty means unset.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| self.base_dir.join(v))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.path(key)
            .ok_or_else(|| CliError::Config(format!("'{key}' is required for {}", self.command)))
    }

    /// Comma separated list of parsed items.
    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        self.raw(key)
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse '{s}'"))))
            .collect()
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    /// Canonical text: the command followed by every resolved key.
    pub fn canonical(&self) -> String {
        let mut s = format!("command = {}\n", self.command);
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// SHA-256 of [`Config::canonical`] without `run.output`, hex encoded:
    /// the same computation hashes alike wherever its results are written.
    pub fn hash(&self) -> String {
        let text: String = self.canonical().lines().filter(|l| !l.starts_with("run.output ")).map(|l| format!("{l}\n")).collect();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
