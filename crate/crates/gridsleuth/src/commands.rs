//! Implementations of the `simulate`, `identify`, `monitor`, `replay` and
//! `validate` subcommands. Each returns a report; `main` maps it to an exit
//! code.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use sha2::{Digest, Sha256};

use gridsleuth_core::events::{
    calibrate_threshold, localize, residual, resolution_floor, verify_holdout, Classification, DetectorState,
    EventError, LocalizeSettings,
};
use gridsleuth_core::feeder::{apply_line_close, apply_line_trip, assemble_ybus, FeederModel};
use gridsleuth_core::ident::{identify, max_relative_element_error, IdentSettings};
use gridsleuth_core::loads::{DemandStream, HouseholdModel};
use gridsleuth_core::numerics::ComplexMatrix;
use gridsleuth_core::simulator::{
    balanced_slack, window, FixedSlack, PhasorSnapshot, PowerFlowSettings, ScenarioEvent, ScenarioRunner,
};

use crate::config::{Gamma, Scenario};
use crate::formats::json::{
    matrix_from_json, matrix_to_json, ErrorReport, EventDoc, FailureDoc, ManifestDoc, ModelDoc, SummaryDoc, YbusDoc,
};
use crate::formats::replay::{self, StreamFile, FLAG_NOISELESS, VERSION};
use crate::formats::stream_csv::{read_stream_csv, write_stream_csv};

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_EVENTS: i32 = 2;
pub const EXIT_UNLOCALIZED: i32 = 3;

pub const STREAM_CSV: &str = "stream.csv";
pub const STREAM_BIN: &str = "stream.gsph";
pub const YBUS_JSON: &str = "ybus.json";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const MODEL_JSON: &str = "model.json";
pub const GRID_CSV: &str = "y22_error_grid.csv";
pub const ERROR_JSON: &str = "error_report.json";
pub const ALARM_CSV: &str = "alarms.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// `bus.phase` label of every node in index order.
pub fn node_labels(f: &FeederModel) -> Vec<String> {
    f.node_phases().iter().map(|n| format!("{}.{}", n.bus_id, n.phase)).collect()
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, doc: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    write(path, text)
}

/// Runs the power-flow scenario of `sc` with explicit seeds and events.
pub fn simulate_snapshots(
    sc: &Scenario,
    household_seed: u64,
    noise_seed: u64,
    events: Vec<ScenarioEvent>,
    slots: u64,
) -> Result<Vec<PhasorSnapshot>> {
    let f = &sc.feeder;
    let demand = DemandStream::new(f, &sc.allocation, &HouseholdModel::residential(household_seed), sc.config.power_factor)
        .context("building household demand")?;
    let runner = ScenarioRunner::new(
        f.clone(),
        demand,
        FixedSlack(balanced_slack(f.base_voltage)),
        sc.noise_model(noise_seed),
        events,
        slots,
        PowerFlowSettings::default(),
    )?;
    let mut out = Vec::with_capacity(slots as usize);
    for s in runner {
        out.push(s.context("simulation failed")?);
    }
    Ok(out)
}

/// The scenario's own stream (configured seeds and events).
pub fn scenario_stream(sc: &Scenario) -> Result<StreamFile> {
    let snaps = simulate_snapshots(sc, sc.household_seed(), sc.noise_seed(), sc.events.clone(), sc.config.slots)?;
    let noiseless = sc.noise_model(0).is_noiseless();
    Ok(StreamFile {
        config_hash: sc.hash,
        flags: if noiseless { FLAG_NOISELESS } else { 0 },
        labels: node_labels(&sc.feeder),
        snapshots: snaps,
    })
}

#[derive(Debug)]
pub struct SimulateReport {
    pub files: Vec<PathBuf>,
    pub slots: usize,
}

pub fn cmd_simulate(sc: &Scenario, out: &Path) -> Result<SimulateReport> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stream = scenario_stream(sc)?;
    info!("simulated {} slots over {} nodes", stream.snapshots.len(), stream.dim());
    let bin = replay::encode(&stream)?;
    write(&out.join(STREAM_BIN), &bin)?;
    write(&out.join(STREAM_CSV), write_stream_csv(&stream))?;
    let y = assemble_ybus(&sc.feeder)?;
    write_json(
        &out.join(YBUS_JSON),
        &YbusDoc { config_hash: sc.hash_hex(), labels: stream.labels.clone(), y: matrix_to_json(&y.y) },
    )?;
    let files = vec![STREAM_BIN.to_string(), STREAM_CSV.to_string(), YBUS_JSON.to_string()];
    write_json(
        &out.join(MANIFEST_JSON),
        &ManifestDoc {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            format_version: VERSION,
            config_hash: sc.hash_hex(),
            seed: sc.config.seed,
            household_seed: sc.household_seed(),
            noise_seed: sc.noise_seed(),
            slots: sc.config.slots,
            nodes: stream.dim(),
            feeder_sha256: sc.feeder_sha256.clone(),
            allocation_sha256: sc.allocation_sha256.clone(),
            files: files.clone(),
        },
    )?;
    let mut paths: Vec<PathBuf> = files.iter().map(|f| out.join(f)).collect();
    paths.push(out.join(MANIFEST_JSON));
    Ok(SimulateReport { files: paths, slots: stream.snapshots.len() })
}

/// Reads a binary replay file, or a CSV stream when the magic is absent.
pub fn read_stream(path: &Path) -> Result<StreamFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(&replay::MAGIC) {
        replay::decode(&bytes).with_context(|| format!("parsing {}", path.display()))
    } else {
        let text = String::from_utf8(bytes).with_context(|| format!("{} is neither a replay file nor text", path.display()))?;
        read_stream_csv(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn read_ybus(path: &Path) -> Result<YbusDoc> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Clone, Debug)]
pub struct IdentifyOptions {
    pub tau: f64,
    pub first_slot: Option<u64>,
    /// `None` or `Some(0)`: use every slot from `first_slot` on.
    pub samples: Option<usize>,
}

#[derive(Debug)]
pub struct IdentifyReport {
    pub model: ModelDoc,
    pub errors: Option<ErrorReport>,
}

fn grid_csv(hash: &str, labels: &[String], idx: &[usize], err: &ComplexMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config_hash={hash}");
    let _ = writeln!(out, "# |Y22_true - Y22_est| in siemens over the independent nodes");
    out.push_str("node_phase");
    for &j in idx {
        let _ = write!(out, ",{}", labels[j]);
    }
    out.push('\n');
    for (a, &i) in idx.iter().enumerate() {
        out.push_str(&labels[i]);
        for b in 0..idx.len() {
            let _ = write!(out, ",{:e}", err[(a, b)].norm());
        }
        out.push('\n');
    }
    out
}

pub fn cmd_identify(
    stream: &StreamFile,
    opts: &IdentifyOptions,
    truth: Option<&YbusDoc>,
    out: &Path,
) -> Result<IdentifyReport> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let first = opts.first_slot.unwrap_or_else(|| stream.snapshots.first().map_or(1, |s| s.slot));
    let available = stream.snapshots.iter().filter(|s| s.slot >= first).count();
    let k = match opts.samples {
        None | Some(0) => available,
        Some(k) => k,
    };
    let w = window(&stream.snapshots, first, k)?;
    let settings = IdentSettings { tau: opts.tau, ..IdentSettings::default() };
    let model = identify(&w.v, &w.i, &settings)?;
    let hash = stream.hash_hex();
    info!("rank {} of {} from {} samples", model.partition.rank, stream.dim(), k);
    let doc = ModelDoc::new(&model, hash.clone(), opts.tau, first, k, stream.labels.clone());
    write_json(&out.join(MODEL_JSON), &doc)?;

    let errors = match truth {
        None => None,
        Some(t) => {
            if t.labels != stream.labels {
                bail!("ground-truth node labels do not match the stream");
            }
            let y = matrix_from_json(&t.y).map_err(anyhow::Error::msg)?;
            let p = &model.partition;
            let y22_true = y.submatrix(&p.ind_rows, &p.ind_rows);
            let err = &model.y22 - &y22_true;
            let mut ratio: f64 = 0.0;
            for r in 0..err.rows() {
                for c in 0..err.cols() {
                    let m = y22_true[(r, c)].norm();
                    if m > 0.0 {
                        ratio = ratio.max(err[(r, c)].norm() / m);
                    }
                }
            }
            let rel = gridsleuth_core::ident::relative_element_errors(&model.y22, &y22_true);
            let within = rel.as_slice().iter().filter(|z| z.re <= 0.015).count();
            let dep = !p.dep_rows.is_empty();
            write(&out.join(GRID_CSV), grid_csv(&hash, &stream.labels, &p.ind_rows, &err))?;
            let report = ErrorReport {
                config_hash: hash.clone(),
                max_relative_error_y11: dep
                    .then(|| max_relative_element_error(&model.y11, &y.submatrix(&p.dep_rows, &p.dep_rows))),
                max_relative_error_y22: max_relative_element_error(&model.y22, &y22_true),
                max_relative_error_y12: dep
                    .then(|| max_relative_element_error(&model.y12, &y.submatrix(&p.dep_rows, &p.ind_rows))),
                max_grid_ratio_y22: ratio,
                y22_entries: rel.rows() * rel.cols(),
                y22_entries_within_1_5_percent: within,
                grid_file: GRID_CSV.into(),
            };
            write_json(&out.join(ERROR_JSON), &report)?;
            Some(report)
        }
    };
    Ok(IdentifyReport { model: doc, errors })
}

#[derive(Debug)]
pub struct MonitorReport {
    pub summary: SummaryDoc,
    pub exit_code: i32,
}

/// `γ` as configured, or calibrated on an event-free companion run.
pub fn resolve_gamma(sc: &Scenario) -> Result<(f64, String)> {
    let d = &sc.config.detect;
    match d.gamma {
        Gamma::Fixed(g) => Ok((g, "fixed".into())),
        Gamma::Auto => {
            let (hs, ns) = sc.calibration_seeds();
            let snaps = simulate_snapshots(sc, hs, ns, Vec::new(), d.calibration_slots)?;
            let y0 = assemble_ybus(&sc.feeder)?;
            let norms = snaps.iter().map(|s| residual(&y0.y, s).map(|r| r.1)).collect::<Result<Vec<_>, _>>()?;
            let floor = resolution_floor(sc.feeder.base_power, sc.feeder.base_voltage, d.floor_pu);
            let g = calibrate_threshold(&norms, d.alpha, d.safety, floor)?;
            info!("calibrated γ = {g:e} A on {} event-free slots", norms.len());
            Ok((g, format!("auto(alpha={}, slots={})", d.alpha, d.calibration_slots)))
        }
    }
}

fn update_feeder(f: &FeederModel, class: Classification, lines: &[String]) -> FeederModel {
    if !matches!(class, Classification::LineTrip | Classification::LineClose | Classification::SwitchPair) {
        return f.clone();
    }
    let mut g = f.clone();
    for id in lines {
        let next = match g.line(id) {
            Some(l) if l.in_service => apply_line_trip(&g, id),
            Some(_) => apply_line_close(&g, id),
            None => continue,
        };
        if let Ok(n) = next {
            g = n;
        }
    }
    g
}

pub fn cmd_monitor(sc: &Scenario, stream: Option<StreamFile>, out: &Path) -> Result<MonitorReport> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stream = match stream {
        Some(s) => s,
        None => scenario_stream(sc)?,
    };
    let labels = node_labels(&sc.feeder);
    if stream.labels != labels {
        bail!("stream node labels do not match the configured feeder");
    }
    if stream.config_hash != sc.hash {
        warn!("stream was produced by config {} but monitoring with {}", stream.hash_hex(), sc.hash_hex());
    }
    let hash = sc.hash_hex();
    let stream_hash = hex::encode(Sha256::digest(replay::encode(&stream)?));
    let (gamma, gamma_source) = resolve_gamma(sc)?;
    let lc = &sc.config.localize;
    let settings = LocalizeSettings { epsilon: lc.epsilon, ..LocalizeSettings::default() };

    let mut det = DetectorState::new(assemble_ybus(&sc.feeder)?, gamma, sc.config.detect.history)?;
    let mut believed = sc.feeder.clone();
    let mut log = String::new();
    let _ = writeln!(log, "# config_hash={hash}");
    log.push_str("slot,residual_norm,gamma,alarmed\n");
    let mut alarms = Vec::new();
    let mut events = Vec::new();
    let mut failures = Vec::new();
    let mut unconfirmed = Vec::new();
    // an alarm is explained by a scheduled event after the last resolved change
    let scheduled: BTreeSet<u64> = sc.events.iter().map(|e| e.slot).collect();
    let mut resolved_through = 0u64;
    let mut false_alarms = 0usize;
    let snaps = &stream.snapshots;
    for s in snaps {
        let alarm = det.detect(s)?;
        let norm = det.history().last().map_or(0.0, |h| h.norm);
        let _ = writeln!(log, "{},{:e},{:e},{}", s.slot, norm, gamma, u8::from(alarm.is_some()));
        let Some(a) = alarm else { continue };
        alarms.push(a.slot);
        if scheduled.range(resolved_through + 1..=a.slot).next().is_none() {
            false_alarms += 1;
        }
        info!("alarm at slot {} (‖e‖ = {:e})", a.slot, a.norm);
        let first = a.slot.saturating_add_signed(lc.guard).max(1);
        let attempt = (|| -> Result<_, EventError> {
            let w = window(snaps, first, lc.k).map_err(|e| EventError::Infeasible {
                slot: a.slot,
                advice: format!("{e}; record more slots after the alarm"),
            })?;
            let rec = localize(det.y0(), &w, a.slot, Some(&believed), &settings)?;
            let y1 = &det.y0().y + &rec.delta;
            let hold: Vec<PhasorSnapshot> = snaps
                .iter()
                .filter(|h| h.slot >= first + lc.k as u64)
                .take(lc.holdout)
                .cloned()
                .collect();
            if hold.len() < lc.holdout {
                warn!("only {} of {} held-out slots available after slot {}", hold.len(), lc.holdout, a.slot);
            }
            verify_holdout(&y1, &hold, gamma, a.slot)?;
            Ok((rec, y1))
        })();
        match attempt {
            Ok((rec, _)) if rec.changed_blocks.is_empty() => {
                info!("slot {}: no admittance change recovered; alarm not confirmed", a.slot);
                unconfirmed.push(a.slot);
                det.rearm();
            }
            Ok((rec, y1)) => {
                info!("slot {}: {} {:?}", a.slot, rec.classification.as_str(), rec.lines);
                let name = format!("event_{:06}.json", a.slot);
                write_json(&out.join(&name), &EventDoc::new(&rec, hash.clone(), first, labels.clone()))?;
                believed = update_feeder(&believed, rec.classification, &rec.lines);
                det.rebase(y1)?;
                resolved_through = a.slot;
                events.push(name);
            }
            Err(e) => {
                warn!("{e}");
                let advice = match &e {
                    EventError::Infeasible { advice, .. } | EventError::Rejected { advice, .. } => advice.clone(),
                    other => other.to_string(),
                };
                failures.push(FailureDoc { t: a.slot, advice });
                // keep watching the unchanged model; a persistent change alarms again
                det.rearm();
            }
        }
    }
    write(&out.join(ALARM_CSV), log)?;
    let exit_code = if !failures.is_empty() {
        EXIT_UNLOCALIZED
    } else if !alarms.is_empty() {
        EXIT_EVENTS
    } else {
        EXIT_CLEAN
    };
    let summary = SummaryDoc {
        config_hash: hash,
        stream_hash,
        slots: snaps.len(),
        gamma,
        gamma_source,
        alarms,
        false_alarms,
        unconfirmed_alarms: unconfirmed,
        events,
        localization_failures: failures,
        exit_code,
    };
    write_json(&out.join(SUMMARY_JSON), &summary)?;
    Ok(MonitorReport { summary, exit_code })
}

/// Header and range summary of a stream; optionally converts it to CSV.
pub fn cmd_replay(stream: &StreamFile, csv_out: Option<&Path>) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "config_hash {}", stream.hash_hex());
    let _ = writeln!(s, "nodes {}", stream.dim());
    let _ = writeln!(s, "records {}", stream.snapshots.len());
    if let (Some(a), Some(b)) = (stream.snapshots.first(), stream.snapshots.last()) {
        let _ = writeln!(s, "slots {}..={}", a.slot, b.slot);
    }
    let _ = writeln!(s, "noiseless {}", stream.flags & FLAG_NOISELESS != 0);
    if let Some(p) = csv_out {
        write(p, write_stream_csv(stream))?;
        let _ = writeln!(s, "wrote {}", p.display());
    }
    Ok(s)
}

/// Checks a resolved scenario and summarizes it without running anything.
pub fn cmd_validate(sc: &Scenario) -> Result<String> {
    let f = &sc.feeder;
    let y = assemble_ybus(f)?;
    if !y.y.is_symmetric(1e-10 * y.y.max_abs().max(1.0)) {
        bail!("assembled admittance is not symmetric");
    }
    let mut s = String::new();
    let _ = writeln!(s, "config_hash {}", sc.hash_hex());
    let _ = writeln!(s, "buses {} lines {} shunts {} nodes {}", f.buses.len(), f.lines.len(), f.shunts.len(), f.node_count());
    let _ = writeln!(s, "radial {}", f.is_radial());
    let _ = writeln!(s, "households {}", sc.allocation.total_households());
    let _ = writeln!(s, "slots {} events {}", sc.config.slots, sc.events.len());
    Ok(s)
}
