//! `--args-file PATH` splices flags from a file, one per line, into argv.
//! A line is `--flag`, `--flag value` or `--flag=value`; blank lines and
//! lines starting with `#` are skipped.

use std::ffi::OsString;

pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut out = Vec::with_capacity(argv.len());
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        let path = if arg == "--args-file" {
            it.next().ok_or("--args-file needs a path")?
        } else if let Some(p) = arg.to_str().and_then(|s| s.strip_prefix("--args-file=")) {
            OsString::from(p)
        } else {
            out.push(arg);
            continue;
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("cannot read args file {}: {e}", path.to_string_lossy()))?;
        out.extend(parse(&text).into_iter().map(OsString::from));
    }
    Ok(out)
}

fn parse(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once(char::is_whitespace) {
            Some((flag, value)) => {
                out.push(flag.to_string());
                out.push(value.trim().to_string());
            }
            None => out.push(line.to_string()),
        }
    }
    out
}
