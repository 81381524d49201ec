//! The six commands. Each takes a validated [`RunConfig`] and paths, writes
//! its outputs and returns a JSON summary for stdout.

use std::path::{Path, PathBuf};

use phasefac::benchmark::{run_sweep, BenchmarkRecord, SweepConfig, SweepPoint, SweepResult};
use phasefac::connectivity::{band_bins, best_pair, default_regions, region_group, scalp_map, Region};
use phasefac::factor::{multi_init_fit, Algorithm, FactorModel};
use phasefac::synth::{electrode_positions, render_scene, SourceScene};
use phasefac::tensorize::tensorize;
use phasefac::RMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{check_band, RunConfig};
use crate::error::{CliError, CliResult};
use crate::files::{head_model, ModelFile, Recording, SceneRecord, TensorFile};
use crate::svg::{heatmap, line_chart, Series};

pub const RECORDING_FILE: &str = "recording.phf";
pub const SCENE_FILE: &str = "scene.toml";
pub const CONN_CSV: &str = "connectivity.csv";
pub const REGIONS_CSV: &str = "regions.csv";
pub const CONN_SVG: &str = "connectivity.svg";
pub const REGIONS_SVG: &str = "regions.svg";
pub const RECORDS_CSV: &str = "records.csv";
pub const SUMMARY_JSON: &str = "summary.json";

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Generates one recording and its scene record into `out_dir`.
pub fn gen(cfg: &RunConfig, out_dir: &Path) -> CliResult<Value> {
    create_dir(out_dir)?;
    let head = head_model(&cfg.head)?;
    let scene = SourceScene::generate(&cfg.scene, &head, cfg.gen.has_coupling, cfg.gen.pr, cfg.seed)?;
    let rendered = render_scene(&scene, &head, cfg.gen.duration_s, cfg.scene.fs)?;
    let recording = Recording { data: rendered.data, fs: cfg.scene.fs };
    let hash = cfg.hash();
    let rec_path = out_dir.join(RECORDING_FILE);
    recording.to_container(&hash).write(&rec_path)?;
    let record = SceneRecord::new(&hash, &cfg.head, &head, scene, cfg.gen.duration_s, cfg.scene.fs);
    let scene_path = out_dir.join(SCENE_FILE);
    write_text(&scene_path, &record.to_toml())?;
    Ok(json!({
        "recording": path_str(&rec_path),
        "scene": path_str(&scene_path),
        "channels": recording.data.nrows(),
        "samples": recording.data.ncols(),
        "fs": recording.fs,
        "has_coupling": record.scene.has_coupling,
        "truth": record.truth,
    }))
}

/// Turns a recording into a tensor file.
pub fn tensorize_cmd(cfg: &RunConfig, input: &Path, out: &Path) -> CliResult<Value> {
    let rec = Recording::read(input)?;
    let tensor = tensorize(&rec.data, rec.fs, &cfg.tensorize)?;
    let freqs = cfg.tensorize.frequencies(rec.fs)?;
    let d = tensor.dims();
    TensorFile { tensor, frequencies_hz: freqs, fs: rec.fs }.to_container(&cfg.hash()).write(out)?;
    Ok(json!({ "tensor": path_str(out), "shape": [d.channels, d.freqs, d.trials] }))
}

/// Multi-start fit of a tensor file. The selected run maximizes the best
/// component coupling in the configured band.
pub fn fit(cfg: &RunConfig, input: &Path, algo: Algorithm, rank: usize, out: &Path) -> CliResult<Value> {
    let tf = TensorFile::read(input)?;
    let bins = band_bins(&tf.frequencies_hz, (cfg.conn.band_hz[0], cfg.conn.band_hz[1]))?;
    let score = |m: &FactorModel| best_pair(m, &bins).ok().flatten().map_or(0.0, |b| b.2);
    let res = multi_init_fit(&tf.tensor, rank, algo, &cfg.multi_init(), score)?;
    let summary = json!({
        "algo": algo,
        "rank": rank,
        "explained_variance": res.report.explained_variance,
        "iterations": res.report.iterations,
        "converged": res.report.converged,
        "final_loss": res.report.losses.last().copied(),
        "selected_run": res.selected_run,
        "coupling": score(&res.model),
        "run_couplings": res.couplings,
    });
    let file = ModelFile { model: res.model, frequencies_hz: tf.frequencies_hz, summary: summary.clone() };
    file.to_container(&cfg.hash()).write(out)?;
    Ok(summary)
}

/// Band connectivity map of the most strongly coupled component pair,
/// full and grouped by scalp region.
pub fn conn(input: &Path, band: [f64; 2], out_dir: &Path) -> CliResult<Value> {
    let mf = ModelFile::read(input)?;
    check_band(band, &mf.frequencies_hz)?;
    let bins = band_bins(&mf.frequencies_hz, (band[0], band[1]))?;
    if bins.is_empty() {
        return Err(CliError::Validation(format!("band {}:{} Hz contains no frequency bins", band[0], band[1])));
    }
    let m = mf.model.spatial().nrows();
    let (matrix, pair, coupling) = match best_pair(&mf.model, &bins)? {
        Some((i, j, c)) => (scalp_map(&mf.model, i, j, &bins, (band[0], band[1]))?.matrix, Some((i, j)), c),
        None => (RMatrix::zeros(m, m), None, 0.0),
    };
    let labels = default_regions(&electrode_positions(m));
    let grouped = region_group(&matrix, &labels, Region::ALL.len())?;
    let names: Vec<String> = Region::ALL.iter().map(|r| r.name().to_string()).collect();

    create_dir(out_dir)?;
    write_matrix_csv(&out_dir.join(CONN_CSV), &matrix, None)?;
    write_matrix_csv(&out_dir.join(REGIONS_CSV), &grouped, Some(&names))?;
    let title = format!("phase coupling map, {}-{} Hz", band[0], band[1]);
    write_text(&out_dir.join(CONN_SVG), &heatmap(&matrix, &title, None))?;
    write_text(&out_dir.join(REGIONS_SVG), &heatmap(&grouped, &format!("{title}, by region"), Some(&names)))?;
    Ok(json!({
        "band_hz": band,
        "bins": bins,
        "pair": pair,
        "coupling": coupling,
        "regions": names,
        "out": path_str(out_dir),
    }))
}

/// Writes a dense matrix as CSV with every value in shortest round-trip
/// form. With `names`, a header row and a leading name column are added.
pub fn write_matrix_csv(path: &Path, m: &RMatrix, names: Option<&[String]>) -> CliResult<()> {
    let io = |e: csv::Error| CliError::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    if let Some(names) = names {
        let header: Vec<&str> = std::iter::once("").chain(names.iter().map(String::as_str)).collect();
        w.write_record(&header).map_err(io)?;
    }
    for i in 0..m.nrows() {
        let values = (0..m.ncols()).map(|j| m[(i, j)].to_string());
        match names {
            Some(names) => w.write_record(std::iter::once(names[i].clone()).chain(values)),
            None => w.write_record(values),
        }
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: &Path) -> CliResult<(RMatrix, Option<Vec<String>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Format {
            path: path.to_path_buf(),
            offset: e.position().map_or(0, |p| p.byte()),
            message: e.to_string(),
        })?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    let named = rows.first().is_some_and(|r| r.first().is_some_and(String::is_empty));
    let names = named.then(|| rows.remove(0)[1..].to_vec());
    let skip = usize::from(named);
    let n = rows.len();
    let cols = rows.first().map_or(0, |r| r.len() - skip);
    let mut m = RMatrix::zeros(n, cols);
    for (i, r) in rows.iter().enumerate() {
        if r.len() - skip != cols {
            return Err(CliError::Format { path: path.to_path_buf(), offset: 0, message: format!("row {i} is ragged") });
        }
        for (j, v) in r[skip..].iter().enumerate() {
            m[(i, j)] = v.parse().map_err(|_| CliError::Format {
                path: path.to_path_buf(),
                offset: 0,
                message: format!("row {i}, column {j}: '{v}' is not a number"),
            })?;
        }
    }
    Ok((m, names))
}

/// The persisted sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSummary {
    pub config_hash: String,
    pub sweep: SweepConfig,
    pub failed_datasets: Vec<(f64, usize)>,
    pub points: Vec<SweepPoint>,
}

const RECORD_COLUMNS: [&str; 15] = [
    "dataset",
    "pr",
    "has_coupling",
    "algo",
    "rank",
    "seed",
    "ev",
    "best_coupling",
    "pair_i",
    "pair_j",
    "predicted_octant_i",
    "predicted_octant_j",
    "true_octant_i",
    "true_octant_j",
    "loc",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_records_csv(path: &Path, records: &[BenchmarkRecord]) -> CliResult<()> {
    let io = |e: csv::Error| CliError::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(RECORD_COLUMNS).map_err(io)?;
    for r in records {
        w.write_record([
            r.dataset.to_string(),
            r.pr.to_string(),
            r.has_coupling.to_string(),
            r.algo.to_string(),
            r.rank.to_string(),
            r.seed.to_string(),
            r.ev.to_string(),
            r.best_coupling.to_string(),
            opt(r.pair.map(|p| p.0)),
            opt(r.pair.map(|p| p.1)),
            opt(r.predicted_octants.map(|o| o[0])),
            opt(r.predicted_octants.map(|o| o[1])),
            opt(r.true_octants.map(|o| o[0])),
            opt(r.true_octants.map(|o| o[1])),
            opt(r.loc),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Runs the benchmark sweep and writes records, summary and plots.
pub fn bench(cfg: &RunConfig, out_dir: &Path) -> CliResult<Value> {
    let sweep = cfg.sweep_config();
    let result: SweepResult = run_sweep(&sweep)?;
    create_dir(out_dir)?;
    write_records_csv(&out_dir.join(RECORDS_CSV), &result.records)?;
    let summary = SweepSummary {
        config_hash: cfg.hash(),
        sweep,
        failed_datasets: result.failed_datasets,
        points: result.points,
    };
    let summary_path = out_dir.join(SUMMARY_JSON);
    write_text(&summary_path, &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
    let plots = write_sweep_plots(&summary, out_dir)?;
    Ok(json!({
        "records": result.records.len(),
        "failed_datasets": summary.failed_datasets.len(),
        "summary": path_str(&summary_path),
        "plots": plots.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
    }))
}

/// Name of the plot for one algorithm, rank and metric.
pub fn plot_name(algo: Algorithm, rank: usize, metric: &str) -> String {
    format!("{algo}_r{rank}_{metric}.svg")
}

/// EV, CONN and LOC against PR, one chart each per algorithm and rank.
pub fn write_sweep_plots(summary: &SweepSummary, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    create_dir(out_dir)?;
    let mut combos: Vec<(Algorithm, usize)> = Vec::new();
    for p in &summary.points {
        if !combos.contains(&(p.algo, p.rank)) {
            combos.push((p.algo, p.rank));
        }
    }
    type Metric = (&'static str, &'static str, fn(&SweepPoint) -> f64, (f64, f64), Option<(f64, &'static str)>);
    let metrics: [Metric; 3] = [
        ("ev", "EV", |p| p.mean_ev, (0.0, 1.0), None),
        ("conn", "CONN", |p| p.conn, (-2.0, 1.0), Some((-0.5, "chance"))),
        ("loc", "LOC", |p| p.loc, (-1.0, 1.0), Some((-0.75, "uniform guessing"))),
    ];
    let mut written = Vec::new();
    for (algo, rank) in combos {
        let mut curve: Vec<&SweepPoint> = summary.points.iter().filter(|p| p.algo == algo && p.rank == rank).collect();
        curve.sort_by(|a, b| a.pr.total_cmp(&b.pr));
        for (key, label, value, range, reference) in metrics {
            let points: Vec<(f64, f64)> = curve.iter().map(|p| (p.pr, value(p))).collect();
            let lo = points.iter().map(|p| p.1).fold(range.0, f64::min);
            let hi = points.iter().map(|p| p.1).fold(range.1, f64::max);
            let svg = line_chart(
                &format!("{label} vs PR, {algo}, R = {rank}"),
                "PR",
                label,
                &[Series { label: &format!("{algo} R={rank}"), points: &points }],
                (lo, hi),
                reference,
            );
            let path = out_dir.join(plot_name(algo, rank, key));
            write_text(&path, &svg)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Re-renders figures: a sweep summary (`.json`) gives the EV/CONN/LOC
/// charts, a matrix CSV gives a heatmap.
pub fn plot(input: &Path, out_dir: &Path) -> CliResult<Value> {
    let is_json = input.extension().is_some_and(|e| e == "json");
    if is_json {
        let text = std::fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
        let summary: SweepSummary = serde_json::from_str(&text).map_err(|e| CliError::Format {
            path: input.to_path_buf(),
            offset: json_error_offset(&text, &e),
            message: e.to_string(),
        })?;
        let plots = write_sweep_plots(&summary, out_dir)?;
        Ok(json!({ "plots": plots.iter().map(|p| path_str(p)).collect::<Vec<_>>() }))
    } else {
        let (m, names) = read_matrix_csv(input)?;
        create_dir(out_dir)?;
        let stem = input.file_stem().map_or("matrix".into(), |s| s.to_string_lossy().into_owned());
        let path = out_dir.join(format!("{stem}.svg"));
        write_text(&path, &heatmap(&m, &stem, names.as_deref()))?;
        Ok(json!({ "plots": [path_str(&path)] }))
    }
}

fn json_error_offset(text: &str, e: &serde_json::Error) -> u64 {
    let before: usize = text.split_inclusive('\n').take(e.line().saturating_sub(1)).map(str::len).sum();
    (before + e.column().saturating_sub(1)) as u64
}
