//! Command-line front end: `synth`, `detect`, `sweep` and `bench`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
//! Outputs are rendered in memory and only written once the command has
//! succeeded, so a failed run never leaves a partial file behind.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::datasets::{
    gen_synthetic, load_csv, write_csv, Dataset, LabelColumn, SynthKind, SynthParams, SynthSpec,
};
use crate::detector::{fit_scores, DetectorConfig, DetectorId, DEFAULT_VARIANCE_THRESHOLD};
use crate::error::{invalid, Error, ErrorClass};
use crate::kde::BandwidthRule;
use crate::metrics::{
    default_grid, long_format, sweep, time_detectors, write_csv_rows, write_json_rows,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "pkde",
    version,
    about = "PCA + kernel density outlier detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as CSV.
    Synth(SynthArgs),
    /// Score and label every row of a dataset.
    Detect(DetectArgs),
    /// F1 over a contamination grid for several detectors.
    Sweep(SweepArgs),
    /// Timing table, one row per dataset and one column per detector.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stat {
    Mean,
    Median,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// gaussian, gaussian-cov, dual-density or gaussian-planted.
    #[arg(long, value_parser = parse_kind)]
    pub kind: SynthKind,
    /// Total number of points, outliers included.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub outliers: usize,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pair correlation for gaussian-cov [default: 0.8].
    #[arg(long)]
    pub rho: Option<f64>,
    /// Cluster offset from the origin for dual-density [default: 4].
    #[arg(long)]
    pub separation: Option<f64>,
    /// Variance of the second dual-density cluster [default: 0.25].
    #[arg(long)]
    pub variance_ratio: Option<f64>,
    /// Sphere radius of planted outliers [default: 10].
    #[arg(long)]
    pub distance: Option<f64>,
    /// Half-width of the outlier box for non-planted kinds [default: 8].
    #[arg(long)]
    pub box_width: Option<f64>,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    #[arg(long, default_value_t = DEFAULT_VARIANCE_THRESHOLD)]
    pub variance_threshold: f64,
    /// Fixed number of principal components; overrides the threshold.
    #[arg(long)]
    pub fixed_dim: Option<usize>,
    /// `scott` or `scott-squared`.
    #[arg(long, default_value = "scott", value_parser = parse_rule)]
    pub bandwidth_rule: BandwidthRule,
    /// Neighbor count for knn-dist and lof.
    #[arg(short, long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Dataset CSV.
    #[arg(short, long)]
    pub input: PathBuf,
    /// The input has no header row.
    #[arg(long)]
    pub no_header: bool,
    /// `auto` (a column named "label"), `last`, `none`, or a column name.
    #[arg(long, default_value = "auto")]
    pub label_column: String,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// pkde, mahalanobis, knn-dist or lof.
    #[arg(long, default_value = "pkde")]
    pub detector: String,
    #[arg(long, default_value_t = 0.05)]
    pub contamination: f64,
    #[command(flatten)]
    pub detector_args: DetectorArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated detector ids.
    #[arg(long, default_value = "pkde,mahalanobis,knn-dist,lof")]
    pub detectors: String,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "0.01:0.30:0.01")]
    pub grid: String,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[command(flatten)]
    pub detector_args: DetectorArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write `(contamination, detector, f1)` rows here.
    #[arg(long)]
    pub long_output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset CSV; repeat for several datasets.
    #[arg(short, long, required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub no_header: bool,
    #[arg(long, default_value = "auto")]
    pub label_column: String,
    #[arg(long, default_value = "pkde,mahalanobis,knn-dist,lof")]
    pub detectors: String,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.05)]
    pub contamination: f64,
    #[arg(long, value_enum, default_value_t = Stat::Mean)]
    pub stat: Stat,
    #[command(flatten)]
    pub detector_args: DetectorArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

fn parse_kind(s: &str) -> Result<SynthKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_rule(s: &str) -> Result<BandwidthRule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failure tagged with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            msg: msg.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Usage => EXIT_USAGE,
            ErrorClass::Data => EXIT_DATA,
            ErrorClass::Numerical => EXIT_NUMERICAL,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

/// Validation that happens before any file is read counts as a usage error.
fn usage_check(r: crate::Result<()>) -> Result<(), Failure> {
    r.map_err(|e| Failure::usage(e.to_string()))
}

/// Rendered output waiting to be written.
struct Pending {
    path: Option<PathBuf>,
    bytes: Vec<u8>,
}

/// Runs the CLI with process stdio. Returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(rendered.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(rendered.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    }
    .and_then(|pending| {
        for p in pending {
            emit(p, stdout)?;
        }
        Ok(())
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "pkde: {}", f.msg);
            f.code
        }
    }
}

fn emit(p: Pending, stdout: &mut dyn Write) -> Result<(), Failure> {
    let io_fail = |path: &Path, e: std::io::Error| Failure {
        code: EXIT_DATA,
        msg: format!("{}: {e}", path.display()),
    };
    match p.path {
        None => stdout
            .write_all(&p.bytes)
            .map_err(|e| io_fail(Path::new("<stdout>"), e)),
        Some(path) => {
            let dir = path
                .parent()
                .filter(|d| !d.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            let name = path
                .file_name()
                .map_or_else(|| "output".into(), |n| n.to_string_lossy().into_owned());
            let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
            std::fs::write(&tmp, &p.bytes).map_err(|e| io_fail(&path, e))?;
            std::fs::rename(&tmp, &path).map_err(|e| {
                let _ = std::fs::remove_file(&tmp);
                io_fail(&path, e)
            })
        }
    }
}

fn detector_config(a: &DetectorArgs, contamination: f64) -> DetectorConfig {
    DetectorConfig {
        contamination,
        variance_threshold: a.variance_threshold,
        fixed_dim: a.fixed_dim,
        bandwidth_rule: a.bandwidth_rule,
        neighbors: a.k,
    }
}

fn parse_detectors(list: &str) -> Result<Vec<DetectorId>, Failure> {
    let ids = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<DetectorId>()
                .map_err(|e| Failure::usage(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if ids.is_empty() {
        return Err(Failure::usage("no detectors given"));
    }
    Ok(ids)
}

/// Parses `start:stop:step` or `a,b,c`.
pub fn parse_grid(s: &str) -> crate::Result<Vec<f64>> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| invalid(format!("`{t}` is not a number in grid `{s}`")))
    };
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(invalid(format!("grid `{s}` must be start:stop:step")));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(invalid(format!(
                "grid `{s}` needs step > 0 and stop >= start"
            )));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // snap to 12 decimals so 0.01 * 3 prints as 0.03
        Ok((0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect())
    } else {
        s.split(',').map(num).collect()
    }
}

fn input_dataset(path: &Path, no_header: bool, label_column: &str) -> Result<Dataset, Failure> {
    let label: LabelColumn = label_column
        .parse()
        .map_err(|e: Error| Failure::usage(e.to_string()))?;
    if no_header && matches!(label, LabelColumn::Named(_)) {
        return Err(Failure::usage("a named label column needs a header row"));
    }
    Ok(load_csv(path, !no_header, &label)?)
}

fn render<T: Serialize>(rows: &[T], format: Format) -> crate::Result<Vec<u8>> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv_rows(rows, &mut buf)?,
        Format::Json => write_json_rows(rows, &mut buf)?,
    }
    Ok(buf)
}

fn synth(a: SynthArgs) -> Result<Vec<Pending>, Failure> {
    if a.outliers > a.n {
        return Err(Failure::usage(format!(
            "--outliers ({}) exceeds --n ({})",
            a.outliers, a.n
        )));
    }
    let defaults = SynthParams::default();
    let spec = SynthSpec {
        kind: a.kind,
        n_normal: a.n - a.outliers,
        n_outlier: a.outliers,
        dim: a.dim,
        seed: a.seed,
        params: SynthParams {
            rho: a.rho.unwrap_or(defaults.rho),
            separation: a.separation.unwrap_or(defaults.separation),
            variance_ratio: a.variance_ratio.unwrap_or(defaults.variance_ratio),
            outlier_distance: a.distance.unwrap_or(defaults.outlier_distance),
            box_half_width: a.box_width.unwrap_or(defaults.box_half_width),
        },
    };
    usage_check(spec.validate())?;
    let ds = gen_synthetic(&spec)?;
    let mut bytes = Vec::new();
    write_csv(&ds, &mut bytes)?;
    Ok(vec![Pending {
        path: a.output,
        bytes,
    }])
}

#[derive(Serialize)]
struct PointRow {
    index: usize,
    score: f64,
    label: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<u8>,
}

fn detect_cmd(a: DetectArgs) -> Result<Vec<Pending>, Failure> {
    let id: DetectorId = a
        .detector
        .parse()
        .map_err(|e: Error| Failure::usage(e.to_string()))?;
    let cfg = detector_config(&a.detector_args, a.contamination);
    usage_check(cfg.validate())?;
    let ds = input_dataset(&a.input.input, a.input.no_header, &a.input.label_column)?;
    let res = fit_scores(id, &ds.x, &cfg)?.label(cfg.contamination)?;
    let rows: Vec<PointRow> = (0..ds.n())
        .map(|i| PointRow {
            index: i,
            score: res.scores[i],
            label: res.labels[i],
            truth: ds.labels.as_ref().map(|t| t[i]),
        })
        .collect();
    Ok(vec![Pending {
        path: a.output,
        bytes: render(&rows, a.format)?,
    }])
}

fn sweep_cmd(a: SweepArgs) -> Result<Vec<Pending>, Failure> {
    let ids = parse_detectors(&a.detectors)?;
    let grid = if a.grid == "default" {
        default_grid()
    } else {
        parse_grid(&a.grid).map_err(|e| Failure::usage(e.to_string()))?
    };
    let cfg = detector_config(&a.detector_args, grid.first().copied().unwrap_or(0.05));
    usage_check(cfg.validate())?;
    for &c in &grid {
        usage_check(crate::detector::validate_contamination(c))?;
    }
    if a.repeats == 0 {
        return Err(Failure::usage("--repeats must be at least 1"));
    }
    let ds = input_dataset(&a.input.input, a.input.no_header, &a.input.label_column)?;
    let reports = sweep(&ids, &ds, &grid, a.repeats, &cfg)?;
    let mut out = vec![Pending {
        path: a.output,
        bytes: render(&reports, a.format)?,
    }];
    if let Some(path) = a.long_output {
        out.push(Pending {
            path: Some(path),
            bytes: render(&long_format(&reports), Format::Csv)?,
        });
    }
    Ok(out)
}

fn bench_cmd(a: BenchArgs) -> Result<Vec<Pending>, Failure> {
    let ids = parse_detectors(&a.detectors)?;
    let cfg = detector_config(&a.detector_args, a.contamination);
    usage_check(cfg.validate())?;
    if a.repeats == 0 {
        return Err(Failure::usage("--repeats must be at least 1"));
    }
    let mut table: Vec<(String, Vec<f64>)> = Vec::new();
    for path in &a.input {
        let ds = input_dataset(path, a.no_header, &a.label_column)?;
        let summary = time_detectors(&ids, &ds, a.repeats, &cfg)?;
        let row = summary
            .iter()
            .map(|s| match a.stat {
                Stat::Mean => s.mean_total_time,
                Stat::Median => s.median_total_time,
            })
            .collect();
        table.push((ds.name.clone(), row));
    }

    let bytes = match a.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let header: Vec<&str> = std::iter::once("dataset")
                .chain(ids.iter().map(|id| id.as_str()))
                .collect();
            let write = |w: &mut csv::Writer<Vec<u8>>, rec: Vec<String>| {
                w.write_record(rec).map_err(|e| Failure {
                    code: EXIT_DATA,
                    msg: e.to_string(),
                })
            };
            write(&mut w, header.iter().map(|s| s.to_string()).collect())?;
            for (name, times) in &table {
                let rec = std::iter::once(name.clone())
                    .chain(times.iter().map(|t| t.to_string()))
                    .collect();
                write(&mut w, rec)?;
            }
            w.into_inner().map_err(|e| Failure {
                code: EXIT_DATA,
                msg: e.to_string(),
            })?
        }
        Format::Json => {
            let rows: Vec<serde_json::Map<String, serde_json::Value>> = table
                .iter()
                .map(|(name, times)| {
                    let mut m = serde_json::Map::new();
                    m.insert("dataset".into(), name.clone().into());
                    for (id, t) in ids.iter().zip(times) {
                        m.insert(id.to_string(), (*t).into());
                    }
                    m
                })
                .collect();
            let mut buf = Vec::new();
            write_json_rows(&rows, &mut buf)?;
            buf
        }
    };
    Ok(vec![Pending {
        path: a.output,
        bytes,
    }])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0.01:0.30:0.01").unwrap();
        assert_eq!(g.len(), 30);
        assert_eq!(g, default_grid());
        assert_eq!(parse_grid("0.05,0.1").unwrap(), vec![0.05, 0.1]);
        assert!(parse_grid("0.1:0.05:0.01").is_err());
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn bad_flags_exit_one() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(
            run_with(["pkde", "frobnicate"], &mut out, &mut err),
            EXIT_USAGE
        );
        assert_eq!(
            run_with(
                ["pkde", "detect", "-i", "x.csv", "--contamination", "0.9"],
                &mut out,
                &mut err
            ),
            EXIT_USAGE
        );
        assert_eq!(
            run_with(
                ["pkde", "detect", "-i", "x.csv", "--detector", "bogus"],
                &mut out,
                &mut err
            ),
            EXIT_USAGE
        );
    }

    #[test]
    fn help_exits_zero() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(run_with(["pkde", "--help"], &mut out, &mut err), EXIT_OK);
        assert!(String::from_utf8(out).unwrap().contains("synth"));
    }
}
