//! Output files. Everything written through [`Outputs`] is deleted again
//! unless the command finishes and calls [`Outputs::commit`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        self.written.push(path.clone());
        let mut f = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        f.write_all(bytes).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes rows of a serializable record type with a header.
    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
        self.write(name, &bytes)
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        self.write(name, text.as_bytes())
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

/// File-name fragment for a model, e.g. `lntacarr_1_1_1`.
pub fn slug(name: &str) -> String {
    let mut s: String = name
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    while s.contains("__") {
        s = s.replace("__", "_");
    }
    s.trim_matches('_').to_string()
}

/// Bar chart of autocorrelations with the +/- band as dashed lines.
pub fn correlogram_svg(title: &str, values: &[f64], band: f64) -> String {
    let (w, h, pad) = (640.0, 320.0, 40.0);
    let plot_w = w - 2.0 * pad;
    let plot_h = h - 2.0 * pad;
    let top = values.iter().map(|v| v.abs()).fold(band, f64::max).max(1e-12) * 1.1;
    let y = |v: f64| pad + plot_h / 2.0 - v / top * plot_h / 2.0;
    let step = plot_w / values.len().max(1) as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    s += &format!("<text x=\"{pad}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n");
    s += &format!(
        "<line x1=\"{pad}\" y1=\"{0:.2}\" x2=\"{1}\" y2=\"{0:.2}\" stroke=\"black\"/>\n",
        y(0.0),
        w - pad
    );
    for b in [band, -band] {
        s += &format!(
            "<line x1=\"{pad}\" y1=\"{0:.2}\" x2=\"{1}\" y2=\"{0:.2}\" stroke=\"steelblue\" stroke-dasharray=\"4 3\"/>\n",
            y(b),
            w - pad
        );
    }
    for (i, v) in values.iter().enumerate() {
        let x = pad + (i as f64 + 0.25) * step;
        let (y0, y1) = (y(0.0), y(*v));
        s += &format!(
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"gray\"/>\n",
            y0.min(y1),
            step * 0.5,
            (y1 - y0).abs()
        );
    }
    s += "</svg>\n";
    s
}
