//! `--config` files: one `key = value` per line, `#` starts a comment.
//! Keys are the long flag names without the leading dashes.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const KNOWN_KEYS: &[&str] = &[
    // gen-data
    "n",
    "out",
    "noise-a",
    "noise-b",
    "size",
    "channels",
    // train / sweep-T
    "data",
    "out-model",
    "log",
    "iters",
    "batch",
    "patch",
    "stride",
    "T",
    "loss",
    "lr",
    "beta1",
    "beta2",
    "adam-eps",
    "charbonnier-eps",
    "holdout",
    "checkpoint-every",
    "base-channels",
    "depth",
    "time-embed-dim",
    "T-list",
    // denoise
    "model",
    "in",
    "sampler",
    "trace-dir",
    // eval
    "pairs",
    "suffix",
    "reference",
    // simulate
    "trials",
    "bias",
    "sigma",
    "kappa",
    // shared
    "seed",
];

#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("config line {}: expected key = value", lineno + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::Usage(format!("config line {}: unknown key `{key}`", lineno + 1)));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::Usage(format!("config line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "unlisted config key {key}");
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key `{key}`: invalid value `{v}`: {e}"))),
        }
    }

    /// Flag value if given, else the config value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn pick_or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    /// Seed from the flag, the config file, then `INTERDIFF_SEED`, then 0.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        if let Some(s) = self.pick(flag, "seed")? {
            return Ok(s);
        }
        match std::env::var("INTERDIFF_SEED") {
            Ok(v) => v.trim().parse().map_err(|e| CliError::Usage(format!("INTERDIFF_SEED: invalid value `{v}`: {e}"))),
            Err(_) => Ok(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blanks() {
        let c = Config::parse("# header\n\niters = 5 # trailing\nloss=l2\n").unwrap();
        assert_eq!(c.get::<usize>("iters").unwrap(), Some(5));
        assert_eq!(c.get::<String>("loss").unwrap().as_deref(), Some("l2"));
        assert_eq!(c.get::<usize>("batch").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(matches!(Config::parse("colour = red"), Err(CliError::Usage(_))));
        assert!(matches!(Config::parse("iters = 1\niters = 2"), Err(CliError::Usage(_))));
        assert!(matches!(Config::parse("iters"), Err(CliError::Usage(_))));
        let c = Config::parse("iters = many").unwrap();
        assert!(matches!(c.get::<usize>("iters"), Err(CliError::Usage(_))));
    }

    #[test]
    fn flag_wins_over_file() {
        let c = Config::parse("iters = 5").unwrap();
        assert_eq!(c.pick(Some(7usize), "iters").unwrap(), Some(7));
        assert_eq!(c.pick(None::<usize>, "iters").unwrap(), Some(5));
        assert_eq!(c.pick_or(None::<usize>, "batch", 8).unwrap(), 8);
    }

    #[test]
    fn seed_precedence() {
        let c = Config::parse("seed = 3").unwrap();
        assert_eq!(c.seed(Some(9)).unwrap(), 9);
        assert_eq!(c.seed(None).unwrap(), 3);
    }
}
