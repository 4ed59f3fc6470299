use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Lines go straight to stdout, or are collected and written to a file in
/// one piece at the end.
pub enum Output {
    Stdout,
    File { path: PathBuf, buf: String },
}

impl Output {
    pub fn new(path: Option<&Path>) -> Self {
        match path {
            Some(p) => Output::File {
                path: p.to_path_buf(),
                buf: String::new(),
            },
            None => Output::Stdout,
        }
    }

    pub fn line(&mut self, s: &str) -> Result<()> {
        match self {
            Output::Stdout => {
                let mut out = std::io::stdout().lock();
                writeln!(out, "{s}")?;
                out.flush()?;
            }
            Output::File { buf, .. } => {
                buf.push_str(s);
                buf.push('\n');
            }
        }
        Ok(())
    }

    pub fn text(&mut self, s: &str) -> Result<()> {
        for l in s.lines() {
            self.line(l)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        if let Output::File { path, buf } = self {
            agemm::autotune::write_atomic(&path, buf.as_bytes())
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

/// Left-aligned first column, right-aligned numbers.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let fmt_row = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&width).enumerate() {
            if i == 0 {
                s.push_str(&format!("{cell:<w$}"));
            } else {
                s.push_str(&format!("  {cell:>w$}"));
            }
        }
        s.trim_end().to_string()
    };
    let mut out = fmt_row(headers.to_vec());
    out.push('\n');
    let rule: usize = width.iter().sum::<usize>() + 2 * (width.len().saturating_sub(1));
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for r in rows {
        out.push_str(&fmt_row(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
