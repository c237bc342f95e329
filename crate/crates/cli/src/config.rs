//! Config files (`key = value` per line) and report output.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use calderon::report::{summarize, write_jsonl, ReportRecord};

/// Default output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "CALDERON_OUT_DIR";

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// `(key, value)` pairs of a config file; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("config line {}: expected key = value", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError(format!("config line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Splices config entries in front of the user's flags so that flags override them.
///
/// The key `command` names the subcommand when none is given on the command line;
/// boolean keys accept `true` / `false`.
pub fn merge_config(args: Vec<OsString>, subcommands: &[&str]) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let entries = parse_config(&text)?;
    let sub_pos = args
        .iter()
        .position(|a| subcommands.contains(&a.to_string_lossy().as_ref()));
    let mut command = None;
    let mut flags: Vec<OsString> = Vec::new();
    for (k, v) in entries {
        match (k.as_str(), v.as_str()) {
            ("command", c) => command = Some(c.to_string()),
            ("config", _) => return Err(ConfigError("config files cannot include other config files".into())),
            (_, "true") => flags.push(format!("--{k}").into()),
            (_, "false") => {}
            _ => {
                flags.push(format!("--{k}").into());
                flags.push(v.into());
            }
        }
    }
    let mut out: Vec<OsString> = Vec::with_capacity(args.len() + flags.len() + 1);
    match sub_pos {
        Some(i) => {
            out.extend_from_slice(&args[..=i]);
            out.extend(flags);
            out.extend_from_slice(&args[i + 1..]);
        }
        None => {
            let c = command.ok_or_else(|| ConfigError("no subcommand on the command line or in the config".into()))?;
            if !subcommands.contains(&c.as_str()) {
                return Err(ConfigError(format!("unknown command `{c}` in config")));
            }
            out.push(args[0].clone());
            out.push(c.into());
            out.extend(flags);
            out.extend_from_slice(&args[1..]);
        }
    }
    Ok(out)
}

/// Writes `<command>.jsonl` and `<command>.summary.csv` into `dir`, or JSON lines to
/// stdout and the CSV summary to stderr when `dir` is `None`.
pub fn emit(command: &str, records: &[ReportRecord], dir: Option<&Path>) -> io::Result<()> {
    let summary = summary_csv(records)?;
    match dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut f = io::BufWriter::new(fs::File::create(dir.join(format!("{command}.jsonl")))?);
            write_jsonl(&mut f, records).map_err(io::Error::other)?;
            f.flush()?;
            fs::write(dir.join(format!("{command}.summary.csv")), summary)?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_jsonl(&mut lock, records).map_err(io::Error::other)?;
            lock.flush()?;
            io::stderr().write_all(&summary)?;
        }
    }
    Ok(())
}

fn summary_csv(records: &[ReportRecord]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in summarize(records) {
        w.serialize(row).map_err(io::Error::other)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let c = parse_config("# c\nseed = 3\n\nquick=true # x\n").unwrap();
        assert_eq!(c, vec![("seed".into(), "3".into()), ("quick".into(), "true".into())]);
        assert!(parse_config("nonsense").is_err());
    }

    #[test]
    fn flags_follow_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        fs::write(&path, "command = gap\nJ = 5\nquick = true\n").unwrap();
        let args: Vec<OsString> = ["calderon", "--config", path.to_str().unwrap(), "--J", "6"]
            .iter()
            .map(OsString::from)
            .collect();
        let merged = merge_config(args, &["gap", "norm"]).unwrap();
        let s: Vec<String> = merged.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(s[1], "gap");
        let first = s.iter().position(|a| a == "5").unwrap();
        let second = s.iter().position(|a| a == "6").unwrap();
        assert!(first < second);
        assert!(s.contains(&"--quick".to_string()));
    }
}
