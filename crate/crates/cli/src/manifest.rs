//! Run manifests: every command records its exact invocation and inputs
//! next to its outputs, so a run can be reproduced from the manifest alone.

use crate::args::CliResult;
use std::fmt::Write as _;
use std::path::Path;

pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        let mut m = Manifest {
            entries: Vec::new(),
        };
        m.push("command", command);
        m.push("argv", shell_join(argv));
        m
    }

    pub fn push(&mut self, key: &str, value: impl AsRef<str>) {
        self.entries.push((key.to_string(), value.as_ref().to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> CliResult<()> {
        std::fs::write(path.as_ref(), self.to_text()).map_err(|e| {
            crate::args::CliError::Data(format!(
                "cannot write manifest {}: {e}",
                path.as_ref().display()
            ))
        })
    }
}

/// Join argv with quoting that survives a round trip through a shell for
/// the characters we actually emit (paths, numbers, flags).
fn shell_join(argv: &[String]) -> String {
    argv.iter()
        .map(|a| {
            if a.chars().all(|c| c.is_ascii_alphanumeric() || "-_./=:,".contains(c)) {
                a.clone()
            } else {
                format!("'{}'", a.replace('\'', "'\\''"))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}
