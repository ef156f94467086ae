//! Config files.
//!
//! One `key = value` per line. `#` starts a comment; blank lines are
//! ignored. `[name]` opens a section; keys before the first section apply
//! to every subcommand. Sections are named after subcommands, and
//! experiments may also use `[experiment.fig3]` and so on, which takes
//! precedence over `[experiment]`. Dashes and underscores in keys are
//! interchangeable.
//!
//! ```text
//! seed = 7
//!
//! [adapt]
//! n_per_arm = 20000
//!
//! [experiment.fig8]
//! budget_seconds = 30
//! ```
//!
//! Values given as flags (or `--set key=value`) override the file, which
//! overrides built-in defaults.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    /// Section name → key → (value, line number). The unnamed section is `""`.
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, (String, usize)>> = BTreeMap::new();
        let mut current = String::new();
        sections.insert(current.clone(), BTreeMap::new());
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::usage(format!("config line {lineno}: unclosed section header")))?
                    .trim();
                if name.is_empty() {
                    return Err(CliError::usage(format!("config line {lineno}: empty section name")));
                }
                current = name.to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {lineno}: expected `key = value`")))?;
            let key = normalize(key);
            if key.is_empty() {
                return Err(CliError::usage(format!("config line {lineno}: missing key")));
            }
            let section = sections.get_mut(&current).unwrap();
            if section.contains_key(&key) {
                return Err(CliError::usage(format!(
                    "config line {lineno}: `{key}` set twice in section [{current}]"
                )));
            }
            section.insert(key, (value.trim().to_string(), lineno));
        }
        Ok(ConfigFile { sections })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn lookup<'a>(&'a self, scopes: &'a [String], key: &str) -> Option<(&'a str, usize, &'a str)> {
        scopes.iter().find_map(|s| {
            self.sections
                .get(s)
                .and_then(|sec| sec.get(key))
                .map(|(v, line)| (v.as_str(), *line, s.as_str()))
        })
    }
}

/// Resolves settings for one subcommand: flag, then config, then default.
#[derive(Debug)]
pub struct Settings {
    file: ConfigFile,
    /// Most specific first, ending with the unnamed section.
    scopes: Vec<String>,
    /// `--set key=value` pairs; rank with flags.
    overrides: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl Settings {
    /// `scope` is e.g. `"adapt"` or `"experiment.fig3"`.
    pub fn new(file: Option<ConfigFile>, scope: &str) -> Self {
        let mut scopes = Vec::new();
        let mut name = scope.to_string();
        loop {
            scopes.push(name.clone());
            match name.rfind('.') {
                Some(p) => name.truncate(p),
                None => break,
            }
        }
        scopes.push(String::new());
        Settings {
            file: file.unwrap_or_default(),
            scopes,
            overrides: BTreeMap::new(),
            used: RefCell::new(BTreeSet::new()),
        }
    }

    /// Adds `key=value` overrides.
    pub fn with_overrides(mut self, pairs: &[String]) -> CliResult<Self> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("--set expects key=value, got `{p}`")))?;
            self.overrides.insert(normalize(k), v.trim().to_string());
        }
        Ok(self)
    }

    pub fn get<T>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.get_opt(flag, key)?.unwrap_or(default))
    }

    pub fn get_opt<T>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let key = normalize(key);
        self.used.borrow_mut().insert(key.clone());
        if flag.is_some() {
            return Ok(flag);
        }
        if let Some(raw) = self.overrides.get(&key) {
            return raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| CliError::usage(format!("--set {key}: {e}")));
        }
        match self.file.lookup(&self.scopes, &key) {
            None => Ok(None),
            Some((raw, line, section)) => raw.parse::<T>().map(Some).map_err(|e| {
                CliError::usage(format!("config [{section}] line {line}: bad value for `{key}`: {e}"))
            }),
        }
    }

    /// Rejects keys in the most specific section that nothing asked for.
    /// Outer sections are shared (`[experiment]` serves every figure) and
    /// may hold keys another subcommand uses.
    pub fn finish(&self) -> CliResult<()> {
        let used = self.used.borrow();
        if let Some(key) = self.overrides.keys().find(|k| !used.contains(*k)) {
            return Err(CliError::usage(format!("--set: unknown key `{key}`")));
        }
        for scope in self.scopes.iter().take(1).filter(|s| !s.is_empty()) {
            if let Some(sec) = self.file.sections.get(scope) {
                for (key, (_, line)) in sec {
                    if !used.contains(key) {
                        return Err(CliError::usage(format!(
                            "config [{scope}] line {line}: unknown key `{key}`"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "seed = 7  # shared\n\n[adapt]\nn-per-arm = 300\n[experiment]\nbudget_seconds = 5\n[experiment.fig3]\nbudget_seconds = 12.5\n";

    #[test]
    fn precedence_flag_config_default() {
        let s = Settings::new(Some(ConfigFile::parse(TEXT).unwrap()), "adapt");
        assert_eq!(s.get(Some(99u64), "n_per_arm", 200).unwrap(), 99);
        assert_eq!(s.get(None::<u64>, "n_per_arm", 200).unwrap(), 300);
        assert_eq!(s.get(None::<u64>, "burnin", 500).unwrap(), 500);
        assert_eq!(s.get(None::<u64>, "seed", 0).unwrap(), 7);
        s.finish().unwrap();
    }

    #[test]
    fn nested_sections_fall_back_outward() {
        let file = ConfigFile::parse(TEXT).unwrap();
        let s = Settings::new(Some(file.clone()), "experiment.fig3");
        assert_eq!(s.get(None::<f64>, "budget-seconds", 1.0).unwrap(), 12.5);
        let s = Settings::new(Some(file), "experiment.fig8");
        assert_eq!(s.get(None::<f64>, "budget_seconds", 1.0).unwrap(), 5.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = ConfigFile::parse("a = 1\nnonsense\n").unwrap_err();
        assert!(e.to_string().contains("line 2"));
        let e = ConfigFile::parse("[x]\na = 1\na = 2\n").unwrap_err();
        assert!(e.to_string().contains("set twice"));
        let s = Settings::new(Some(ConfigFile::parse("[adapt]\nseed = x\n").unwrap()), "adapt");
        let e = s.get(None::<u64>, "seed", 0).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn overrides_beat_config() {
        let s = Settings::new(Some(ConfigFile::parse(TEXT).unwrap()), "adapt")
            .with_overrides(&["n-per-arm=42".to_string()])
            .unwrap();
        assert_eq!(s.get(None::<u64>, "n_per_arm", 200).unwrap(), 42);
        assert_eq!(s.get(Some(7u64), "n_per_arm", 200).unwrap(), 7);
        let s = Settings::new(None, "adapt").with_overrides(&["bogus=1".to_string()]).unwrap();
        assert!(s.finish().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let s = Settings::new(Some(ConfigFile::parse("[adapt]\nsed = 3\n").unwrap()), "adapt");
        let _ = s.get(None::<u64>, "seed", 0);
        assert!(s.finish().unwrap_err().to_string().contains("sed"));
    }
}
