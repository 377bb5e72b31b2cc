//! Optional configuration file. Sections mirror the flag groups; a flag
//! given on the command line overrides the file.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Deserialize;

use crate::args::{DataArgs, DiagnosticsArgs, EstimationArgs, ForecastArgs, ModelArgs, SimulationArgs};
use crate::usage;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub data: DataArgs,
    pub model: ModelArgs,
    pub estimation: EstimationArgs,
    pub simulation: SimulationArgs,
    pub forecast: ForecastArgs,
    pub diagnostics: DiagnosticsArgs,
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "toml" => toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display()))),
        "json" => serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display()))),
        _ => Err(usage(format!("config {} must end in .toml or .json", path.display()))),
    }
}

macro_rules! fill {
    ($dst:ident, $src:ident; $($opt:ident),*; $($flag:ident),*) => {
        $( if $dst.$opt.is_none() { $dst.$opt = $src.$opt.clone(); } )*
        $( $dst.$flag |= $src.$flag; )*
    };
}

impl DataArgs {
    pub fn merge(&mut self, f: &DataArgs) {
        fill!(self, f; input, date_col, open_col, high_col, low_col, close_col, from, to, scale, split_date; zero_floor);
    }
}

impl ModelArgs {
    pub fn merge(&mut self, f: &ModelArgs) {
        fill!(self, f; model, p, q, l, delay, threshold; positivity_only);
    }
}

impl EstimationArgs {
    pub fn merge(&mut self, f: &EstimationArgs) {
        fill!(self, f; n_start, max_iter; no_std_errors);
    }
}

impl SimulationArgs {
    pub fn merge(&mut self, f: &SimulationArgs) {
        fill!(self, f; params, t_len, reps, burn_in, split, stop_after; full_scale, resume);
    }
}

impl ForecastArgs {
    pub fn merge(&mut self, f: &ForecastArgs) {
        fill!(self, f; window, horizon, refit_every, warm_starts, baseline, loss; no_refit);
    }
}

impl DiagnosticsArgs {
    pub fn merge(&mut self, f: &DiagnosticsArgs) {
        fill!(self, f; lags, ks_mode, bootstrap, acf_lags, lambda, fit_report, law, errors_a, errors_b, loss; svg);
    }
}
