//! Params file: JSON with keys in a fixed order and every real number written
//! with 17 significant digits, so values round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{FitDiagnostics, LabelModelParams, LfParameters};
use crate::error::{Error, Result};

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    num_labels: usize,
    priors: Vec<f64>,
    lfs: Vec<LfParameters>,
    diagnostics: FitDiagnostics,
}

impl LabelModelParams {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{{");
        let _ = writeln!(out, "  \"num_labels\": {},", self.num_labels());
        let priors: Vec<String> = self.priors.iter().map(|&p| real(p)).collect();
        let _ = writeln!(out, "  \"priors\": [{}],", priors.join(", "));
        let _ = writeln!(out, "  \"lfs\": [");
        for (i, lf) in self.lfs.iter().enumerate() {
            let sep = if i + 1 == self.lfs.len() { "" } else { "," };
            let _ = writeln!(
                out,
                "    {{\"id\": {}, \"propensity\": {}, \"accuracy\": {}}}{sep}",
                serde_json::to_string(&lf.id).expect("strings serialize"),
                real(lf.propensity),
                real(lf.accuracy),
            );
        }
        let _ = writeln!(out, "  ],");
        let d = &self.diagnostics;
        let _ = writeln!(
            out,
            "  \"diagnostics\": {{\"iterations\": {}, \"objective\": {}, \"converged\": {}}}",
            d.iterations,
            real(d.objective),
            d.converged
        );
        out.push_str("}\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let f: ParamsFile =
            serde_json::from_str(text).map_err(|e| Error::json("label model params", e))?;
        if f.priors.len() != f.num_labels {
            return Err(Error::Misaligned {
                expected: f.num_labels,
                actual: f.priors.len(),
            });
        }
        Ok(LabelModelParams {
            priors: f.priors,
            lfs: f.lfs,
            diagnostics: f.diagnostics,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
