//! Output-directory plumbing: run manifests with content hashes, the
//! one-command-at-a-time lock file, and the optional SVG histograms.

use crate::CmdError;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, CmdError> {
    let bytes = fs::read(path)
        .map_err(|e| CmdError::new(1, format!("hashing {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Key/value manifest accumulated while a command runs and written last.
/// Input and output artifacts are recorded as content hashes, so two runs
/// on identical inputs produce identical hash lines.
pub struct Manifest {
    command: &'static str,
    lines: Vec<(String, String)>,
    started: Instant,
}

impl Manifest {
    pub fn new(command: &'static str) -> Manifest {
        Manifest {
            command,
            lines: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<(), CmdError> {
        let hash = hash_file(path)?;
        self.lines.push((format!("input.{name}"), hash));
        Ok(())
    }

    /// Writes `bytes` to `path` and records its hash in one step.
    pub fn write_output(&mut self, name: &str, path: &Path, bytes: &[u8]) -> Result<(), CmdError> {
        fs::write(path, bytes)
            .map_err(|e| CmdError::new(1, format!("writing {}: {e}", path.display())))?;
        self.lines
            .push((format!("output.{name}"), sha256_hex(bytes)));
        Ok(())
    }

    pub fn finish(mut self, out_dir: &Path) -> Result<(), CmdError> {
        let elapsed = self.started.elapsed().as_secs_f64();
        self.lines
            .push(("timing.total_seconds".to_string(), format!("{elapsed:.3}")));
        let mut text = String::new();
        writeln!(text, "command,{}", self.command).unwrap();
        writeln!(text, "tool_version,{}", env!("CARGO_PKG_VERSION")).unwrap();
        for (k, v) in &self.lines {
            writeln!(text, "{k},{v}").unwrap();
        }
        let path = out_dir.join(format!("{}.manifest.txt", self.command));
        fs::write(&path, text)
            .map_err(|e| CmdError::new(1, format!("writing {}: {e}", path.display())))
    }
}

/// Exclusive-create lock; dropped (removed) when the command finishes.
pub struct OutDirLock {
    path: PathBuf,
}

impl OutDirLock {
    pub fn acquire(out_dir: &Path) -> Result<OutDirLock, CmdError> {
        fs::create_dir_all(out_dir)
            .map_err(|e| CmdError::new(1, format!("creating {}: {e}", out_dir.display())))?;
        let path = out_dir.join(".hypersep.lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutDirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CmdError::new(
                1,
                format!(
                    "output directory is locked by another run ({}); remove the file if stale",
                    path.display()
                ),
            )),
            Err(e) => Err(CmdError::new(1, format!("locking {}: {e}", path.display()))),
        }
    }
}

impl Drop for OutDirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Static bar-chart rendering of one or two histogram series sharing the
/// same bin edges. Kept deliberately plain: axes, bars, a handful of tick
/// labels.
pub fn histogram_svg(edges: &[f64], series: &[(&str, &[u64])]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const ML: f64 = 50.0;
    const MR: f64 = 15.0;
    const MT: f64 = 30.0;
    const MB: f64 = 45.0;
    let plot_w = W - ML - MR;
    let plot_h = H - MT - MB;
    let n_bins = edges.len().saturating_sub(1);
    let max_count = series
        .iter()
        .flat_map(|(_, c)| c.iter().copied())
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let colors = ["#4878a8", "#c44e52"];

    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    )
    .unwrap();
    writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>").unwrap();
    for (si, (label, counts)) in series.iter().enumerate() {
        let denom = series.len() as f64;
        for (b, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let bin_w = plot_w / n_bins as f64;
            let bar_w = bin_w / denom;
            let x = ML + b as f64 * bin_w + si as f64 * bar_w;
            let h = plot_h * c as f64 / max_count;
            writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                x,
                MT + plot_h - h,
                bar_w,
                h,
                colors[si % colors.len()]
            )
            .unwrap();
        }
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{}\">{}</text>",
            ML + 8.0 + 110.0 * si as f64,
            MT - 10.0,
            colors[si % colors.len()],
            label
        )
        .unwrap();
    }
    // axes
    writeln!(
        s,
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{:.2}\" stroke=\"black\"/>",
        MT + plot_h
    )
    .unwrap();
    writeln!(
        s,
        "<line x1=\"{ML}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        MT + plot_h,
        ML + plot_w,
        MT + plot_h
    )
    .unwrap();
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let x = ML + plot_w * frac;
        let v = edges[0] + (edges[n_bins] - edges[0]) * frac;
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.2}</text>",
            x,
            MT + plot_h + 18.0,
            v
        )
        .unwrap();
        let y = MT + plot_h * (1.0 - frac);
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.0}</text>",
            ML - 6.0,
            y + 4.0,
            max_count * frac
        )
        .unwrap();
    }
    writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">decision error probability</text>",
        ML + plot_w / 2.0,
        H - 10.0
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}
