//! Plain-text `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are skipped. Keys are matched
//! case-insensitively with `-` and `_` treated alike, so `n_grid`, `n-grid`
//! and `N_GRID` name the same setting. Command-line flags take precedence.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("`{key}` set twice"),
                });
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Config> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize(key)).map(String::as_str)
    }

    /// Parsed value of `key`, or `None` when it is absent.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::InvalidParams(format!("config `{key}` = `{v}`: {e}")))
            })
            .transpose()
    }

    /// Comma-separated list under `key`.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| parse_list(v).map_err(|e| Error::InvalidParams(format!("config `{key}`: {e}"))))
            .transpose()
    }

    /// `flag` if given, otherwise the configured value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

/// Parses `a,b,c`. Whitespace around items is ignored.
pub fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|e| format!("`{x}`: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_normalizes() {
        let c = Config::parse("# run\nn = 256\n\nN_GRID = 64, 256 ,1024\nscheme=session\n").unwrap();
        assert_eq!(c.get::<usize>("n").unwrap(), Some(256));
        assert_eq!(c.get_list::<usize>("n-grid").unwrap(), Some(vec![64, 256, 1024]));
        assert_eq!(c.raw("Scheme"), Some("session"));
        assert_eq!(c.get::<u32>("q").unwrap(), None);
    }

    #[test]
    fn flag_wins() {
        let c = Config::parse("q = 3").unwrap();
        assert_eq!(c.pick(Some(1u32), "q").unwrap(), Some(1));
        assert_eq!(c.pick(None::<u32>, "q").unwrap(), Some(3));
    }

    #[test]
    fn errors_carry_line() {
        assert!(matches!(Config::parse("a = 1\nbogus"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(Config::parse("a = 1\nA = 2"), Err(Error::Parse { line: 2, .. })));
        assert!(Config::parse("q = x").unwrap().get::<u32>("q").is_err());
    }
}
