//! Minimal long-flag argument parser: `--flag value` pairs after the verb.

use std::collections::BTreeMap;

#[derive(Debug)]
pub struct Args {
    flags: BTreeMap<String, String>,
    consumed: std::cell::RefCell<Vec<String>>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: unknown verb or flag, missing or unparsable value.
    Usage(String),
    /// Everything else: missing files, bad formats, dimension errors.
    Data(String),
}

impl From<vfi_core::Error> for CliError {
    fn from(e: vfi_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl Args {
    pub fn parse(raw: &[String]) -> CliResult<Args> {
        let mut flags = BTreeMap::new();
        let mut i = 0;
        while i < raw.len() {
            let arg = &raw[i];
            let Some(name) = arg.strip_prefix("--") else {
                return Err(CliError::Usage(format!(
                    "unexpected positional argument `{arg}` (flags are --name value)"
                )));
            };
            let Some(value) = raw.get(i + 1) else {
                return Err(CliError::Usage(format!("flag --{name} is missing its value")));
            };
            if flags.insert(name.to_string(), value.clone()).is_some() {
                return Err(CliError::Usage(format!("flag --{name} given twice")));
            }
            i += 2;
        }
        Ok(Args {
            flags,
            consumed: std::cell::RefCell::new(Vec::new()),
        })
    }

    pub fn opt(&self, name: &str) -> Option<String> {
        self.consumed.borrow_mut().push(name.to_string());
        self.flags.get(name).cloned()
    }

    pub fn required(&self, name: &str) -> CliResult<String> {
        self.opt(name)
            .ok_or_else(|| CliError::Usage(format!("missing required flag --{name}")))
    }

    pub fn parse_opt<T: std::str::FromStr>(&self, name: &str) -> CliResult<Option<T>> {
        match self.opt(name) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                CliError::Usage(format!("flag --{name}: cannot parse `{v}`"))
            }),
        }
    }

    pub fn parse_or<T: std::str::FromStr>(&self, name: &str, default: T) -> CliResult<T> {
        Ok(self.parse_opt(name)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn parse_list<T: std::str::FromStr>(&self, name: &str) -> CliResult<Option<Vec<T>>> {
        match self.opt(name) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim().parse::<T>().map_err(|_| {
                        CliError::Usage(format!("flag --{name}: bad list entry `{p}`"))
                    })
                })
                .collect::<CliResult<Vec<T>>>()
                .map(Some),
        }
    }

    /// Errors on flags that no command consumed.
    pub fn reject_unknown(&self) -> CliResult<()> {
        let seen = self.consumed.borrow();
        let unknown: Vec<String> = self
            .flags
            .keys()
            .filter(|k| !seen.contains(k))
            .map(|k| format!("--{k}"))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "unknown flags: {}",
                unknown.join(", ")
            )))
        }
    }
}
