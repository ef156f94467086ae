//! End-to-end figure pipelines: generate data, adapt the batch size, run
//! samplers and write one CSV and one SVG per panel.

pub mod fig3;
pub mod fig56;
pub mod fig8;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mbgibbs::AdaptationResult;

use crate::error::{CliResult, Context};
use crate::plot::{LinePlot, Series};

/// Which batch sizes get a sampling curve after adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurveSizes {
    /// Every grid size.
    #[default]
    Grid,
    /// Only the selected size and the full sweep.
    Selected,
}

impl FromStr for CurveSizes {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "grid" => Ok(CurveSizes::Grid),
            "selected" => Ok(CurveSizes::Selected),
            other => Err(format!("unknown curve set `{other}` (grid|selected)")),
        }
    }
}

impl CurveSizes {
    pub fn pick(self, adaptation: &AdaptationResult, n: usize) -> Vec<usize> {
        match self {
            CurveSizes::Grid => adaptation.per_arm.iter().map(|a| a.batch_size).collect(),
            CurveSizes::Selected => {
                let mut v = vec![adaptation.m_star, n];
                v.dedup();
                v
            }
        }
    }
}

/// Evenly spaced time checkpoints over a budget, consumed as a run
/// crosses them.
#[derive(Debug, Clone)]
pub(crate) struct Checkpoints {
    step: f64,
    next: f64,
}

impl Checkpoints {
    pub(crate) fn new(budget: f64, count: usize) -> Self {
        let step = budget / count.max(1) as f64;
        Checkpoints { step, next: step }
    }

    /// True when `seconds` has reached the next checkpoint; skips any
    /// checkpoints passed in the same cycle.
    pub(crate) fn reached(&mut self, seconds: f64) -> bool {
        if seconds < self.next {
            return false;
        }
        while self.next <= seconds {
            self.next += self.step;
        }
        true
    }
}

pub(crate) fn write_text(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> CliResult<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).stage(format!("writing {}", path.display()))?;
    written.push(path);
    Ok(())
}

pub(crate) fn save_plot(dir: &Path, name: &str, plot: &LinePlot, written: &mut Vec<PathBuf>) -> CliResult<()> {
    let path = dir.join(name);
    plot.save(&path)?;
    written.push(path);
    Ok(())
}

/// Per-arm CSV with the `m_star` footer, plus warnings as comments at the
/// end so the table itself stays rectangular.
pub(crate) fn adaptation_csv(adaptation: &AdaptationResult) -> String {
    let mut buf = Vec::new();
    adaptation.write_csv(&mut buf).expect("writing to memory");
    let mut s = String::from_utf8(buf).expect("csv is ASCII");
    for w in &adaptation.warnings {
        let _ = writeln!(s, "# warning: {w}");
    }
    s
}

pub(crate) fn objective_plot(adaptation: &AdaptationResult, title: &str) -> LinePlot {
    let pts: Vec<(f64, f64)> = adaptation
        .per_arm
        .iter()
        .filter(|a| a.objective.is_finite())
        .map(|a| (a.batch_size as f64, a.objective))
        .collect();
    let star: Vec<(f64, f64)> = pts
        .iter()
        .copied()
        .filter(|p| p.0 == adaptation.m_star as f64)
        .collect();
    LinePlot {
        title: title.to_string(),
        x_label: "batch size m".into(),
        y_label: "f(m) = (m w_z + w_theta) tau_int".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series::line("f(m)", pts).with_markers(),
            Series::line(format!("m* = {}", adaptation.m_star), star).with_markers(),
        ],
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoints_fire_once_per_crossing() {
        let mut c = Checkpoints::new(1.0, 4);
        assert!(!c.reached(0.1));
        assert!(c.reached(0.25));
        assert!(!c.reached(0.3));
        // jumps over two checkpoints, fires once
        assert!(c.reached(0.8));
        assert!(!c.reached(0.9));
        assert!(c.reached(1.0));
    }
}
