//! Flat `key = value` config files and the small grammars embedded in them.
//!
//! Example:
//!
//! ```text
//! # estimation study
//! loss = exponential(beta=0.5)
//! lambda = 0.05
//! mu = 0
//! sigma = 1
//! m_list = 100,1000,10000
//! ```
//!
//! Loss grammar: `exponential(beta=0.5)`, `polynomial(p=2)`,
//! `piecewise(pos=2, neg=0.5)` — family name, parenthesized `key=value`
//! pairs, decimal literals.
//!
//! Portfolio block: `d`, `mu` (comma-separated decimals), `sigma`
//! (row-major `d*d` decimals or `diag(...)`), `box` (per-coordinate
//! `lo:hi` pairs), master `seed`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::loss::LossFunction;
use crate::models::{Box2, PortfolioModel};

/// A parsed config file: every key maps to its raw value and source line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, (usize, String)>,
}

fn cfg_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

impl Config {
    /// Parses `key = value` lines. Blank lines and `#` comments are
    /// ignored; duplicate keys are rejected.
    pub fn parse_str(text: &str) -> Result<Config> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(line_no, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(cfg_err(line_no, "empty key"));
            }
            if !key
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_')
            {
                return Err(cfg_err(line_no, format!("invalid key `{key}`")));
            }
            if entries
                .insert(key.to_string(), (line_no, value.to_string()))
                .is_some()
            {
                return Err(cfg_err(line_no, format!("duplicate key `{key}`")));
            }
        }
        Ok(Config { entries })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::parse_str(&text)
    }

    fn raw(&self, key: &str) -> Result<(usize, &str)> {
        self.entries
            .get(key)
            .map(|(line, v)| (*line, v.as_str()))
            .ok_or_else(|| cfg_err(0, format!("missing required key `{key}`")))
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let (line, v) = self.raw(key)?;
        v.parse::<f64>()
            .map_err(|_| cfg_err(line, format!("`{key}`: not a number: `{v}`")))
    }

    pub fn get_f64_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.has(key) {
            self.get_f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let (line, v) = self.raw(key)?;
        v.parse::<usize>()
            .map_err(|_| cfg_err(line, format!("`{key}`: not a positive integer: `{v}`")))
    }

    pub fn get_usize_or(&self, key: &str, default: usize) -> Result<usize> {
        if self.has(key) {
            self.get_usize(key)
        } else {
            Ok(default)
        }
    }

    pub fn get_u64_or(&self, key: &str, default: u64) -> Result<u64> {
        if !self.has(key) {
            return Ok(default);
        }
        let (line, v) = self.raw(key)?;
        v.parse::<u64>()
            .map_err(|_| cfg_err(line, format!("`{key}`: not an integer: `{v}`")))
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        Ok(self.raw(key)?.1)
    }

    /// Comma-separated decimal list.
    pub fn get_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let (line, v) = self.raw(key)?;
        v.split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| cfg_err(line, format!("`{key}`: not a number: `{tok}`")))
            })
            .collect()
    }

    /// Comma-separated positive-integer list.
    pub fn get_usize_list(&self, key: &str) -> Result<Vec<usize>> {
        let (line, v) = self.raw(key)?;
        v.split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|_| cfg_err(line, format!("`{key}`: not an integer: `{tok}`")))
            })
            .collect()
    }

    /// The `loss = family(key=value, ...)` grammar.
    pub fn get_loss(&self, key: &str) -> Result<LossFunction> {
        let (line, v) = self.raw(key)?;
        parse_loss(v).map_err(|msg| cfg_err(line, format!("`{key}`: {msg}")))
    }

    /// Portfolio block from `d`, `mu`, `sigma`, `box`.
    pub fn get_portfolio(&self) -> Result<PortfolioModel> {
        let d = self.get_usize("d")?;
        if d == 0 {
            let (line, _) = self.raw("d")?;
            return Err(cfg_err(line, "`d` must be >= 1"));
        }
        let mu = self.get_f64_list("mu")?;
        if mu.len() != d {
            let (line, _) = self.raw("mu")?;
            return Err(cfg_err(line, format!("`mu`: expected {d} entries, got {}", mu.len())));
        }
        let (sline, sraw) = self.raw("sigma")?;
        let sigma = parse_sigma(sraw, d).map_err(|msg| cfg_err(sline, format!("`sigma`: {msg}")))?;
        let (bline, braw) = self.raw("box")?;
        let theta_box = parse_box(braw, d).map_err(|msg| cfg_err(bline, format!("`box`: {msg}")))?;
        PortfolioModel::new(mu, sigma, theta_box)
            .map_err(|e| cfg_err(sline, format!("invalid portfolio model: {e}")))
    }
}

/// Parses the loss grammar: `exponential(beta=0.5)` / `polynomial(p=2)` /
/// `piecewise(pos=2, neg=0.5)`.
pub fn parse_loss(text: &str) -> std::result::Result<LossFunction, String> {
    let text = text.trim();
    let open = text
        .find('(')
        .ok_or_else(|| format!("expected `family(...)`, got `{text}`"))?;
    if !text.ends_with(')') {
        return Err(format!("missing closing `)` in `{text}`"));
    }
    let family = text[..open].trim();
    let args_text = &text[open + 1..text.len() - 1];
    let mut args: BTreeMap<&str, f64> = BTreeMap::new();
    for pair in args_text.split(',') {
        let pair = pair.trim();
        if pair.is_empty() {
            continue;
        }
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| format!("expected `key=value`, got `{pair}`"))?;
        let value = v
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("not a decimal literal: `{}`", v.trim()))?;
        if args.insert(k.trim(), value).is_some() {
            return Err(format!("duplicate argument `{}`", k.trim()));
        }
    }
    let take = |args: &mut BTreeMap<&str, f64>, name: &str| -> std::result::Result<f64, String> {
        args.remove(name)
            .ok_or_else(|| format!("{family} requires `{name}=`"))
    };
    let loss = match family {
        "exponential" => {
            let beta = take(&mut args, "beta")?;
            LossFunction::exponential(beta).map_err(|e| e.to_string())?
        }
        "polynomial" => {
            let p = take(&mut args, "p")?;
            LossFunction::polynomial(p).map_err(|e| e.to_string())?
        }
        "piecewise" => {
            let pos = take(&mut args, "pos")?;
            let neg = take(&mut args, "neg")?;
            LossFunction::piecewise(pos, neg).map_err(|e| e.to_string())?
        }
        other => return Err(format!("unknown loss family `{other}`")),
    };
    if let Some(k) = args.keys().next() {
        return Err(format!("unexpected argument `{k}` for `{family}`"));
    }
    Ok(loss)
}

/// Parses a covariance spec: `diag(v1, v2, ...)` or row-major `d*d`
/// comma-separated decimals.
pub fn parse_sigma(text: &str, d: usize) -> std::result::Result<Vec<Vec<f64>>, String> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix("diag") {
        let rest = rest.trim();
        let inner = rest
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| format!("malformed `diag(...)`: `{text}`"))?;
        let diag: Vec<f64> = inner
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("not a number: `{}`", tok.trim()))
            })
            .collect::<std::result::Result<_, _>>()?;
        if diag.len() != d {
            return Err(format!("expected {d} diagonal entries, got {}", diag.len()));
        }
        let mut m = vec![vec![0.0; d]; d];
        for (i, v) in diag.into_iter().enumerate() {
            m[i][i] = v;
        }
        return Ok(m);
    }
    let flat: Vec<f64> = text
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| format!("not a number: `{}`", tok.trim()))
        })
        .collect::<std::result::Result<_, _>>()?;
    if flat.len() != d * d {
        return Err(format!("expected {} row-major entries, got {}", d * d, flat.len()));
    }
    Ok(flat.chunks(d).map(|row| row.to_vec()).collect())
}

/// Parses per-coordinate bounds: `lo:hi` pairs, comma-separated.
pub fn parse_box(text: &str, d: usize) -> std::result::Result<Box2, String> {
    let pairs: Vec<(f64, f64)> = text
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            let (lo, hi) = tok
                .split_once(':')
                .ok_or_else(|| format!("expected `lo:hi`, got `{tok}`"))?;
            let lo = lo
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("not a number: `{}`", lo.trim()))?;
            let hi = hi
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("not a number: `{}`", hi.trim()))?;
            Ok::<_, String>((lo, hi))
        })
        .collect::<std::result::Result<_, _>>()?;
    if pairs.len() != d {
        return Err(format!("expected {d} bounds, got {}", pairs.len()));
    }
    let (lo, hi): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Box2::new(lo, hi).map_err(|e| e.to_string())
}
