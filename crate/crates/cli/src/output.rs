//! CSV time series and checkpoint files.
//!
//! Columns:
//! - `timeseries.csv`: `step,norm_constant,norm_squared,effective_dimension,entropy,temperature,total_energy,tracked_weight`
//!   (`temperature` is empty where it is undefined)
//! - `densities.csv`: `step,v1,…,vV`
//! - `counting.csv`: `step,n,v1,…,vV`, one row per step and tracked `n`

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use manywalk::checkpoint::format_f64;
use manywalk::{write_checkpoint, GmpState, Sink, StepReport, TimeSeriesRecord};

pub const TIMESERIES: &str = "timeseries.csv";
pub const DENSITIES: &str = "densities.csv";
pub const COUNTING: &str = "counting.csv";
pub const CHECKPOINT: &str = "checkpoint.jsonl";
pub const FINAL_STATE: &str = "final_state.jsonl";
pub const META: &str = "meta.json";

pub const TIMESERIES_HEADER: &str =
    "step,norm_constant,norm_squared,effective_dimension,entropy,temperature,total_energy,tracked_weight";

fn vertex_columns(vertex_count: usize) -> String {
    (1..=vertex_count).map(|v| format!(",v{v}")).collect()
}

pub fn timeseries_row(r: &TimeSeriesRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.step,
        format_f64(r.norm_constant),
        format_f64(r.norm_squared),
        r.effective_dimension,
        format_f64(r.entropy),
        r.temperature.map(format_f64).unwrap_or_default(),
        format_f64(r.total_energy),
        format_f64(r.tracked_weight)
    )
}

fn values(xs: &[f64]) -> String {
    xs.iter().map(|&x| format!(",{}", format_f64(x))).collect()
}

/// Writes `state` to `dir/name` through a temporary file and a rename, so a
/// crash never leaves a half-written snapshot behind.
pub fn write_snapshot(dir: &Path, name: &str, side: usize, state: &GmpState) -> io::Result<()> {
    let tmp = dir.join(format!("{name}.tmp"));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_checkpoint(&mut w, side, state).map_err(|e| match e {
            manywalk::CheckpointError::Io(e) => e,
            other => io::Error::new(io::ErrorKind::InvalidData, other.to_string()),
        })?;
        w.flush()?;
    }
    fs::rename(tmp, dir.join(name))
}

/// Keeps the header and every complete row whose step is below `step`.
pub fn truncate_rows(path: &Path, step: u64) -> io::Result<()> {
    let text = fs::read_to_string(path)?;
    let mut kept = String::with_capacity(text.len());
    let mut lines = text.split_inclusive('\n');
    if let Some(header) = lines.next() {
        if !header.ends_with('\n') {
            return fs::write(path, "");
        }
        kept.push_str(header);
    }
    for line in lines {
        if !line.ends_with('\n') {
            break;
        }
        let row_step = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
        match row_step {
            Some(s) if s < step => kept.push_str(line),
            _ => break,
        }
    }
    fs::write(path, kept)
}

/// Streams records into the three CSV files and writes periodic checkpoints.
pub struct CsvSink {
    dir: PathBuf,
    side: usize,
    timeseries: BufWriter<File>,
    densities: BufWriter<File>,
    counting: BufWriter<File>,
    checkpoint_every: u64,
    last_step: u64,
    halt_after: Option<u64>,
}

/// Error kind that marks a deliberate stop rather than a real failure.
pub const HALT_KIND: io::ErrorKind = io::ErrorKind::Interrupted;

impl CsvSink {
    /// Creates fresh files with headers.
    pub fn create(
        dir: &Path,
        side: usize,
        checkpoint_every: u64,
        last_step: u64,
    ) -> io::Result<CsvSink> {
        fs::create_dir_all(dir)?;
        let vc = side * side;
        let cols = vertex_columns(vc);
        let header = |name: &str, head: String| -> io::Result<BufWriter<File>> {
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            writeln!(w, "{head}")?;
            Ok(w)
        };
        Ok(CsvSink {
            dir: dir.to_path_buf(),
            side,
            timeseries: header(TIMESERIES, TIMESERIES_HEADER.to_string())?,
            densities: header(DENSITIES, format!("step{cols}"))?,
            counting: header(COUNTING, format!("step,n{cols}"))?,
            checkpoint_every,
            last_step,
            halt_after: None,
        })
    }

    /// Reopens existing files, dropping rows at or after `from_step`.
    pub fn reopen(
        dir: &Path,
        side: usize,
        checkpoint_every: u64,
        last_step: u64,
        from_step: u64,
    ) -> io::Result<CsvSink> {
        let open = |name: &str| -> io::Result<BufWriter<File>> {
            let path = dir.join(name);
            truncate_rows(&path, from_step)?;
            Ok(BufWriter::new(OpenOptions::new().append(true).open(path)?))
        };
        Ok(CsvSink {
            dir: dir.to_path_buf(),
            side,
            timeseries: open(TIMESERIES)?,
            densities: open(DENSITIES)?,
            counting: open(COUNTING)?,
            checkpoint_every,
            last_step,
            halt_after: None,
        })
    }

    /// Stops the run with [`HALT_KIND`] once `step` has been reached, as if
    /// the process had been killed there.
    pub fn halt_after(mut self, step: Option<u64>) -> CsvSink {
        self.halt_after = step;
        self
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.timeseries.flush()?;
        self.densities.flush()?;
        self.counting.flush()
    }

    fn checkpoint_due(&self, step: u64) -> bool {
        step == self.last_step || (self.checkpoint_every > 0 && step.is_multiple_of(self.checkpoint_every))
    }
}

impl Sink for CsvSink {
    fn record(&mut self, r: &TimeSeriesRecord) -> io::Result<()> {
        writeln!(self.timeseries, "{}", timeseries_row(r))?;
        writeln!(self.densities, "{}{}", r.step, values(&r.densities))?;
        for (n, probs) in &r.counting {
            writeln!(self.counting, "{},{}{}", r.step, n, values(probs))?;
        }
        Ok(())
    }

    fn after_step(&mut self, state: &GmpState, _report: &StepReport) -> io::Result<()> {
        if self.checkpoint_due(state.step()) {
            // rows must reach disk before the checkpoint that would skip them on resume
            self.flush()?;
            write_snapshot(&self.dir, CHECKPOINT, self.side, state)?;
        }
        if self.halt_after == Some(state.step()) {
            self.flush()?;
            return Err(io::Error::new(
                HALT_KIND,
                format!("halted after step {}", state.step()),
            ));
        }
        Ok(())
    }
}
