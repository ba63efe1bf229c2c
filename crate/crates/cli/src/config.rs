//! `key=value` config files merged underneath command-line flags.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parsed `key=value` lines. Blank lines and `#` comments are ignored.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value", i + 1);
        };
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn flag_present(args: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    let with_eq = format!("--{key}=");
    args.iter().any(|a| *a == long || a.starts_with(&with_eq))
}

/// Finds `--config <path>` (or `--config=<path>`), removes it, and appends
/// every config entry whose flag is not already on the command line.
/// `key=true` becomes a bare `--key`; `key=false` is dropped.
pub fn expand_config_args(args: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().context("--config needs a path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text =
        fs::read_to_string(Path::new(&path)).with_context(|| format!("reading config {path}"))?;
    let entries = parse_config(&text)?;
    let mut extra = Vec::new();
    for (k, v) in entries {
        if flag_present(&rest, &k) {
            continue;
        }
        match v.as_str() {
            "true" => extra.push(format!("--{k}")),
            "false" => {}
            _ => extra.push(format!("--{k}={v}")),
        }
    }
    rest.extend(extra);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn parses_key_values() {
        let c = parse_config("# recipe\nf = poly:-1,0,1\n\nlambda=0.5\n--json=true\n").unwrap();
        assert_eq!(
            c,
            vec![
                ("f".into(), "poly:-1,0,1".into()),
                ("lambda".into(), "0.5".into()),
                ("json".into(), "true".into())
            ]
        );
        assert!(parse_config("oops").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = std::env::temp_dir().join(format!("nc-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("run.cfg");
        std::fs::write(&p, "lambda=0.5\nf=poly:-1,0,1\njson=true\nwindow=-3:3\n").unwrap();
        let args = s(&[
            "nc",
            "orbit",
            "--config",
            p.to_str().unwrap(),
            "--lambda",
            "2",
            "--x0",
            "2",
        ]);
        let out = expand_config_args(args).unwrap();
        assert_eq!(
            out,
            s(&[
                "nc",
                "orbit",
                "--lambda",
                "2",
                "--x0",
                "2",
                "--f=poly:-1,0,1",
                "--json",
                "--window=-3:3"
            ])
        );
    }

    #[test]
    fn no_config_is_identity() {
        let args = s(&["nc", "classify", "--f", "poly:1,1"]);
        assert_eq!(expand_config_args(args.clone()).unwrap(), args);
    }
}
