//! CSV/JSON artifact writers with pinned formatting: every float goes through
//! one 17-significant-digit formatter and the writers never reorder or quote,
//! so a rerun with the same inputs reproduces the files byte for byte.

use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array1;
use serde::Serialize;

use robpulse::{ControlProblem, ControlVector, SweepReport, TraceRow};

use crate::problem_file::ProblemFile;

/// Shortest representation that round-trips any f64 exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Streaming trace.csv writer: one row per optimizer iteration, flushed as it
/// lands so a long run can be watched (or salvaged) mid-flight.
pub struct TraceSink {
    writer: csv::Writer<File>,
    error: Option<anyhow::Error>,
}

impl TraceSink {
    pub fn create(path: &Path) -> Result<TraceSink> {
        let file = File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(["iter", "stage", "f_nom", "j_rbst", "step_norm", "lambda", "gamma"])?;
        writer.flush()?;
        Ok(TraceSink { writer, error: None })
    }

    /// Append one row. Errors are latched and surfaced by [`finish`](Self::finish)
    /// because the caller sits inside an observer callback that cannot fail.
    pub fn record(&mut self, row: &TraceRow) {
        if self.error.is_some() {
            return;
        }
        let opt = |x: Option<f64>| x.map(fmt_float).unwrap_or_default();
        let result = self
            .writer
            .write_record([
                row.iter.to_string(),
                row.stage.to_string(),
                fmt_float(row.f_nom),
                fmt_float(row.j_rbst),
                fmt_float(row.step_norm),
                opt(row.lambda),
                opt(row.gamma),
            ])
            .and_then(|_| self.writer.flush().map_err(csv::Error::from));
        if let Err(e) = result {
            self.error = Some(e.into());
        }
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.writer.flush()?;
        Ok(())
    }
}

/// Write labeled control sets, one row per (pulse, control) amplitude.
pub fn write_controls(path: &Path, sets: &[(&str, &ControlVector)]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(["label", "pulse", "control", "amplitude"])?;
    for (label, v) in sets {
        let controls = v.num_controls();
        let pulses = v.len() / controls;
        for t in 0..pulses {
            for j in 0..controls {
                writer.write_record([
                    label.to_string(),
                    t.to_string(),
                    j.to_string(),
                    fmt_float(v.amplitude(t, j)),
                ])?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Read control sets back, grouped by label in order of first appearance.
/// Every label must supply exactly one amplitude per (pulse, control) slot of
/// `problem`.
pub fn read_controls(path: &Path, problem: &ControlProblem) -> Result<Vec<(String, ControlVector)>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let expect = ["label", "pulse", "control", "amplitude"];
    if headers.iter().collect::<Vec<_>>() != expect {
        bail!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            expect.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        );
    }
    let pulses = problem.pulses();
    let controls = problem.num_controls();
    let mut order: Vec<String> = Vec::new();
    let mut sets: Vec<(Vec<f64>, Vec<bool>)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let context = || format!("{} row {}", path.display(), line + 2);
        if record.len() != 4 {
            bail!("{}: expected 4 fields, found {}", context(), record.len());
        }
        let label = record[0].to_string();
        let t: usize = record[1].parse().with_context(context)?;
        let j: usize = record[2].parse().with_context(context)?;
        let amp: f64 = record[3].parse().with_context(context)?;
        if t >= pulses || j >= controls {
            bail!(
                "{}: slot (pulse {t}, control {j}) outside the {pulses}×{controls} problem grid",
                context()
            );
        }
        let idx = match order.iter().position(|l| l == &label) {
            Some(i) => i,
            None => {
                order.push(label.clone());
                sets.push((vec![0.0; pulses * controls], vec![false; pulses * controls]));
                order.len() - 1
            }
        };
        let slot = t * controls + j;
        if sets[idx].1[slot] {
            bail!("{}: duplicate slot (pulse {t}, control {j}) for label \"{label}\"", context());
        }
        sets[idx].0[slot] = amp;
        sets[idx].1[slot] = true;
    }
    if order.is_empty() {
        bail!("{}: no control rows", path.display());
    }
    let mut out = Vec::with_capacity(order.len());
    for (label, (amps, seen)) in order.into_iter().zip(sets) {
        if let Some(slot) = seen.iter().position(|&s| !s) {
            bail!(
                "label \"{label}\" is missing slot (pulse {}, control {})",
                slot / controls,
                slot % controls
            );
        }
        let v = ControlVector::new(problem, Array1::from(amps))
            .with_context(|| format!("label \"{label}\""))?;
        out.push((label, v));
    }
    Ok(out)
}

/// Write sweep results for any number of labeled control sets. An empty slice
/// still produces the header so downstream plotting never sees a missing file.
pub fn write_sweep(path: &Path, reports: &[SweepReport]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(["magnitude", "n_samples", "fid_mean", "fid_min", "fid_max", "label"])?;
    for report in reports {
        for row in &report.rows {
            writer.write_record([
                fmt_float(row.magnitude),
                row.n_samples.to_string(),
                fmt_float(row.fid_mean),
                fmt_float(row.fid_min),
                fmt_float(row.fid_max),
                report.label.clone(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Everything summary.json records about a finished run.
#[derive(Serialize)]
pub struct RunSummary<'a> {
    pub version: &'a str,
    pub seed: u64,
    pub f_nom: f64,
    pub j_rbst: f64,
    /// First iteration of the robustness stage, if the threshold was reached.
    pub switch_iter: Option<usize>,
    pub iterations: usize,
    pub stop: &'a str,
    pub warnings: &'a [String],
    /// The problem file as run, seed overrides applied.
    pub config: &'a ProblemFile,
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use robpulse::pauli;
    use robpulse::ControlProblem;

    fn problem(pulses: usize) -> ControlProblem {
        ControlProblem::new(
            pauli::sigma_z(),
            vec![pauli::sigma_x(), pauli::sigma_y()],
            pauli::identity2(),
            1.0,
            pulses,
            pulses,
        )
        .unwrap()
    }

    #[test]
    fn controls_round_trip_bit_exact() {
        let p = problem(3);
        let a = ControlVector::new(
            &p,
            Array1::from(vec![0.1, -2.0 / 3.0, 1e-17, 3.5, f64::MIN_POSITIVE, 2.9]),
        )
        .unwrap();
        let b = ControlVector::constant(&p, 1.25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("controls.csv");
        write_controls(&path, &[("initial", &a), ("robust", &b)]).unwrap();
        let back = read_controls(&path, &p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "initial");
        assert_eq!(back[1].0, "robust");
        assert_eq!(back[0].1.as_array(), a.as_array());
        assert_eq!(back[1].1.as_array(), b.as_array());
    }

    #[test]
    fn incomplete_label_is_rejected() {
        let p = problem(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("controls.csv");
        std::fs::write(
            &path,
            "label,pulse,control,amplitude\nx,0,0,1.0\nx,0,1,1.0\n",
        )
        .unwrap();
        let err = read_controls(&path, &p).unwrap_err().to_string();
        assert!(err.contains("missing slot"), "got: {err}");
    }

    #[test]
    fn out_of_grid_slot_is_rejected() {
        let p = problem(2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("controls.csv");
        std::fs::write(&path, "label,pulse,control,amplitude\nx,5,0,1.0\n").unwrap();
        let err = read_controls(&path, &p).unwrap_err().to_string();
        assert!(err.contains("outside"), "got: {err}");
    }

    #[test]
    fn float_format_is_17_digits_and_lossless() {
        for &x in &[0.1, 1.0 / 3.0, 6.02214076e23, -1e-300, 0.0] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "via {s}");
        }
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
    }
}
