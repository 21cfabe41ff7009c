//! key=value configuration files and flag resolution.
//!
//! A config file supplies defaults for long flag names; values given on the
//! command line win. Lines are `key = value`, `#` starts a comment, keys
//! are case-insensitive and `_` equals `-`. Later duplicates override
//! earlier ones. Keys that no resolved flag consumed produce a warning on
//! stderr, not an error, so one file can serve several subcommands.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use prach_core::{Error, Result};

#[derive(Debug, Default)]
pub struct Overrides {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('_', "-")
}

pub fn load_config(path: &Path) -> Result<Overrides> {
    let text = std::fs::read_to_string(path)?;
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: "expected key = value".into(),
            });
        };
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: "empty key".into(),
            });
        }
        values.insert(key, value.trim().to_string());
    }
    Ok(Overrides {
        values,
        used: RefCell::new(BTreeSet::new()),
    })
}

impl Overrides {
    pub fn empty() -> Self {
        Self::default()
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let k = normalize_key(key);
        let v = self.values.get(&k).map(String::as_str);
        if v.is_some() {
            self.used.borrow_mut().insert(k);
        }
        v
    }

    /// Config value for `key` parsed as `T`, or None when absent.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s.parse::<T>().map(Some).map_err(|e| {
                Error::Config(format!("config key '{}': cannot parse '{}': {}", key, s, e))
            }),
        }
    }

    /// Keys never consumed by `get`, for a post-run warning.
    pub fn unused_keys(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.values
            .keys()
            .filter(|k| !used.contains(*k))
            .cloned()
            .collect()
    }
}

/// Flag value if given, else config value, else the default.
pub fn resolve<T>(flag: Option<T>, cfg: &Overrides, key: &str, default: T) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    match flag {
        Some(v) => {
            cfg.raw(key); // mark consumed so a shadowed key does not warn
            Ok(v)
        }
        None => Ok(cfg.get(key)?.unwrap_or(default)),
    }
}

/// Like `resolve` but without a default; errors when neither source has it.
pub fn resolve_required<T>(flag: Option<T>, cfg: &Overrides, key: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    match flag {
        Some(v) => {
            cfg.raw(key);
            Ok(v)
        }
        None => cfg
            .get(key)?
            .ok_or_else(|| Error::Config(format!("missing required option --{}", key))),
    }
}

/// Seed precedence: --seed flag, config `seed`, PRACH_SEED environment
/// variable, then 0.
pub fn resolve_seed(flag: Option<u64>, cfg: &Overrides) -> Result<u64> {
    if let Some(s) = flag {
        cfg.raw("seed");
        return Ok(s);
    }
    if let Some(s) = cfg.get::<u64>("seed")? {
        return Ok(s);
    }
    match std::env::var("PRACH_SEED") {
        Ok(s) => s
            .parse::<u64>()
            .map_err(|_| Error::Config(format!("PRACH_SEED is not an integer: '{}'", s))),
        Err(_) => Ok(0),
    }
}

/// Comma-separated f64 list ("-20,-15,-10").
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{}' in list '{}'", t, s)))
        })
        .collect()
}

/// Comma-separated usize list ("1,2,8").
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad integer '{}' in list '{}'", t, s)))
        })
        .collect()
}

/// Comma-separated list parsed through FromStr (channels, receivers).
pub fn parse_list<T>(s: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|e| Error::Config(format!("bad value '{}' in list '{}': {}", t, s, e)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_whitespace_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# run settings\nsnr = -20,-10\nnum_rx=2\nNUM-RX = 4\n\ntrials = 100\n",
        )
        .unwrap();
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.get::<String>("snr").unwrap().unwrap(), "-20,-10");
        // later duplicate wins, underscore and case fold together
        assert_eq!(cfg.get::<usize>("num-rx").unwrap().unwrap(), 4);
        assert_eq!(resolve(Some(9usize), &cfg, "trials", 1).unwrap(), 9);
        assert_eq!(resolve(None, &cfg, "trials", 1).unwrap(), 100);
        assert_eq!(resolve(None::<usize>, &cfg, "absent", 7).unwrap(), 7);
        assert!(cfg.unused_keys().is_empty());
    }

    #[test]
    fn reports_line_of_malformed_entry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "a = 1\nnonsense\n").unwrap();
        match load_config(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn typed_getter_reports_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cfg");
        std::fs::write(&path, "trials = many\n").unwrap();
        let cfg = load_config(&path).unwrap();
        match cfg.get::<usize>("trials") {
            Err(Error::Config(msg)) => assert!(msg.contains("trials"), "{}", msg),
            other => panic!("expected config error, got {:?}", other),
        }
    }

    #[test]
    fn unused_keys_are_tracked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.cfg");
        std::fs::write(&path, "alpha = 1\nbeta = 2\n").unwrap();
        let cfg = load_config(&path).unwrap();
        let _ = cfg.get::<f64>("alpha").unwrap();
        assert_eq!(cfg.unused_keys(), vec!["beta".to_string()]);
    }

    #[test]
    fn seed_falls_back_to_environment() {
        let cfg = Overrides::empty();
        std::env::set_var("PRACH_SEED", "314");
        assert_eq!(resolve_seed(None, &cfg).unwrap(), 314);
        assert_eq!(resolve_seed(Some(7), &cfg).unwrap(), 7);
        std::env::set_var("PRACH_SEED", "xyz");
        assert!(resolve_seed(None, &cfg).is_err());
        std::env::remove_var("PRACH_SEED");
        assert_eq!(resolve_seed(None, &cfg).unwrap(), 0);
    }

    #[test]
    fn list_parsers() {
        assert_eq!(parse_f64_list("-20, -15").unwrap(), vec![-20.0, -15.0]);
        assert_eq!(parse_usize_list("1,2,8").unwrap(), vec![1, 2, 8]);
        assert!(parse_f64_list("1,x").is_err());
        let ch: Vec<prach_core::channel::ChannelModel> = parse_list("awgn,tdlc300").unwrap();
        assert_eq!(ch.len(), 2);
        assert!(parse_list::<prach_core::channel::ChannelModel>("rayleigh").is_err());
    }
}
