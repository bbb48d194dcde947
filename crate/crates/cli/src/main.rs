//! `spikeye` command-line front end.
//!
//! Every key of the run configuration is also a flag (`--window-ms 150` or
//! `--window_ms 150`). Values are resolved as defaults, then `--config FILE`,
//! then flags.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Arg, ArgAction, ArgMatches, Command};
use log::info;

use spikeye::config::RunConfig;
use spikeye::cost::cost_report;
use spikeye::dataset::Session;
use spikeye::events::{load_events, write_events, Event};
use spikeye::labels::{load_label_rows, write_label_rows, LabelTrack};
use spikeye::model::ModelParams;
use spikeye::stream::StreamEngine;
use spikeye::synth::{generate, session_config};
use spikeye::train::{
    center_baseline, evaluate_sessions, train, train_from, write_history, MetricAccumulator,
    MetricReport, DEFAULT_TOLERANCES,
};

const CONFIG_FILE: &str = "config.txt";
const EVENTS_FILE: &str = "events.csv";
const LABELS_FILE: &str = "labels.csv";

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<spikeye::Error> for Failure {
    fn from(e: spikeye::Error) -> Self {
        match e {
            spikeye::Error::UnknownKey { .. } | spikeye::Error::ConfigValue { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Data(other.into()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn with_config_flags(cmd: Command) -> Command {
    let mut cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("key = value configuration file (flags override it)"),
    );
    for (key, default) in RunConfig::default().entries() {
        let long = flag_name(key);
        let mut arg = Arg::new(key)
            .long(long.clone())
            .value_name("VALUE")
            .help(format!("config key `{key}` (default {default})"))
            .help_heading("Configuration");
        if long != key {
            arg = arg.alias(key);
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .value_parser(clap::value_parser!(PathBuf))
        .help(help)
}

fn cli() -> Command {
    Command::new("spikeye")
        .about("Event-camera pupil tracking with a spiking network")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("verbose")
                .long("verbose")
                .short('v')
                .action(ArgAction::SetTrue)
                .global(true)
                .help("log progress to stderr"),
        )
        .subcommand(with_config_flags(
            Command::new("synth")
                .about("Generate synthetic sessions (events.csv + labels.csv per session)")
                .arg(path_arg("out", "output directory").required(true))
                .arg(
                    Arg::new("sessions")
                        .long("sessions")
                        .value_name("K")
                        .value_parser(clap::value_parser!(usize))
                        .default_value("1")
                        .help("number of sessions"),
                ),
        ))
        .subcommand(with_config_flags(
            Command::new("train")
                .about("Train a model; writes history.csv, best.sgz and the resolved config")
                .arg(path_arg("data", "directory of sessions").required(true))
                .arg(path_arg("out", "output directory").required(true))
                .arg(path_arg("val", "directory of validation sessions"))
                .arg(
                    Arg::new("val-sessions")
                        .long("val-sessions")
                        .value_name("K")
                        .value_parser(clap::value_parser!(usize))
                        .default_value("1")
                        .help("without --val, hold out the last K sessions of --data"),
                )
                .arg(path_arg("init", "start from these weights")),
        ))
        .subcommand(with_config_flags(
            Command::new("eval")
                .about("Print P1/P3/P5/P10 and Euclidean distance")
                .arg(path_arg("weights", "weight file"))
                .arg(path_arg("data", "directory of sessions (with --weights)"))
                .arg(path_arg("predictions", "prediction CSV from `stream`"))
                .arg(path_arg("labels", "label CSV (with --predictions)"))
                .arg(
                    Arg::new("baseline")
                        .long("baseline")
                        .action(ArgAction::SetTrue)
                        .help("also report the always-predict-center baseline"),
                ),
        ))
        .subcommand(with_config_flags(
            Command::new("stream")
                .about("Run the 1 kHz stream engine over an event file")
                .arg(path_arg("weights", "weight file").required(true))
                .arg(path_arg("events", "event CSV").required(true))
                .arg(path_arg("labels", "label CSV; adds ground truth columns"))
                .arg(path_arg("out", "prediction CSV (default stdout)"))
                .arg(
                    Arg::new("ticks")
                        .long("ticks")
                        .value_name("N")
                        .value_parser(clap::value_parser!(usize))
                        .help("number of 1 ms ticks (default: cover labels or events)"),
                ),
        ))
        .subcommand(with_config_flags(
            Command::new("cost")
                .about("Parameter, operation, energy and latency report")
                .arg(path_arg(
                    "weights",
                    "weight file (architecture and activity source)",
                ))
                .arg(path_arg("events", "event CSV used to measure activity"))
                .arg(
                    Arg::new("ticks")
                        .long("ticks")
                        .value_name("N")
                        .value_parser(clap::value_parser!(usize))
                        .help("ticks of activity measurement (default: whole event file)"),
                )
                .arg(
                    Arg::new("csv")
                        .long("csv")
                        .action(ArgAction::SetTrue)
                        .help("machine-readable output"),
                ),
        ))
}

fn resolve_config(m: &ArgMatches) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {path}"))
            .map_err(|e| Failure::Usage(format!("{e:#}")))?;
        cfg.apply_text(&text)?;
    }
    for key in RunConfig::keys() {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn write_config(dir: &Path, cfg: &RunConfig) -> CliResult<()> {
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, cfg.render()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn create_file(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_track(path: &Path, scale: f64) -> CliResult<LabelTrack> {
    let rows = load_label_rows(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(
        LabelTrack::from_rows(&rows, scale)
            .with_context(|| format!("labels {}", path.display()))?,
    )
}

/// Loads one session from a directory holding `events.csv` and `labels.csv`.
fn load_session(dir: &Path, cfg: &RunConfig) -> CliResult<Session> {
    let events = load_events(dir.join(EVENTS_FILE))
        .with_context(|| format!("reading {}", dir.join(EVENTS_FILE).display()))?;
    let labels = load_track(&dir.join(LABELS_FILE), cfg.label_scale)?;
    let name = dir.file_name().map_or_else(
        || dir.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    Ok(Session::from_raw(name, &events, &labels)?)
}

/// A session directory, or a directory whose subdirectories are sessions
/// (loaded in name order).
fn load_sessions(dir: &Path, cfg: &RunConfig) -> CliResult<Vec<Session>> {
    if dir.join(EVENTS_FILE).is_file() {
        return Ok(vec![load_session(dir, cfg)?]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(EVENTS_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Failure::Data(anyhow!(
            "{} holds no session (expected {EVENTS_FILE} and {LABELS_FILE})",
            dir.display()
        )));
    }
    dirs.iter().map(|d| load_session(d, cfg)).collect()
}

fn cmd_synth(m: &ArgMatches) -> CliResult<()> {
    let cfg = resolve_config(m)?;
    let out = m.get_one::<PathBuf>("out").expect("required");
    let count = *m.get_one::<usize>("sessions").expect("default");
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_config(out, &cfg)?;
    for i in 0..count {
        let s = generate(&session_config(&cfg.scene, i))?;
        let dir = out.join(format!("session-{i:03}"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut w = create_file(&dir.join(EVENTS_FILE))?;
        write_events(&mut w, &s.events).context("writing events")?;
        w.flush().context("writing events")?;
        let mut w = create_file(&dir.join(LABELS_FILE))?;
        write_label_rows(&mut w, &s.labels).context("writing labels")?;
        w.flush().context("writing labels")?;
        println!(
            "{}: {} events, {} label rows",
            dir.display(),
            s.events.len(),
            s.labels.len()
        );
    }
    Ok(())
}

fn cmd_train(m: &ArgMatches) -> CliResult<()> {
    let cfg = resolve_config(m)?;
    let data = m.get_one::<PathBuf>("data").expect("required");
    let out = m.get_one::<PathBuf>("out").expect("required");
    let mut sessions = load_sessions(data, &cfg)?;
    let val = match m.get_one::<PathBuf>("val") {
        Some(dir) => load_sessions(dir, &cfg)?,
        None => {
            let k = *m.get_one::<usize>("val-sessions").expect("default");
            if k >= sessions.len() {
                return Err(Failure::Usage(format!(
                    "--val-sessions {k} leaves no training data out of {} sessions",
                    sessions.len()
                )));
            }
            sessions.split_off(sessions.len() - k)
        }
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_config(out, &cfg)?;
    info!(
        "{} training and {} validation sessions",
        sessions.len(),
        val.len()
    );
    let outcome = match m.get_one::<PathBuf>("init") {
        Some(path) => train_from(
            ModelParams::load_checked(path, &cfg.model)?,
            &sessions,
            &val,
            &cfg.train,
        )?,
        None => train(&sessions, &val, &cfg.train, &cfg.model)?,
    };
    let mut w = create_file(&out.join("history.csv"))?;
    write_history(&mut w, &outcome.history).context("writing history")?;
    w.flush().context("writing history")?;
    outcome.best.save(out.join("best.sgz"))?;
    let best = &outcome.history[outcome.best_epoch];
    println!(
        "best epoch {}: val euclidean {:.3}, P10 {:.3}",
        outcome.best_epoch,
        best.val.euclidean,
        best.val.p(10.0).unwrap_or(0.0)
    );
    Ok(())
}

fn print_report(label: &str, r: &MetricReport) {
    let p = |t: f64| r.p(t).unwrap_or(0.0);
    println!(
        "{label},{:.3},{:.3},{:.3},{:.3},{:.3},{},{}",
        p(1.0),
        p(3.0),
        p(5.0),
        p(10.0),
        r.euclidean,
        r.frames_scored,
        r.frames_blinked
    );
}

/// Reads `t_ms,x_pred,y_pred[,...]` rows; extra columns are ignored.
fn read_predictions(path: &Path) -> CliResult<Vec<(i64, [f32; 2])>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("t_ms") {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || {
            Failure::Data(anyhow!(
                "{}:{}: malformed row `{line}`",
                path.display(),
                i + 1
            ))
        };
        if f.len() < 3 {
            return Err(bad());
        }
        let t: i64 = f[0].parse().map_err(|_| bad())?;
        let x: f32 = f[1].parse().map_err(|_| bad())?;
        let y: f32 = f[2].parse().map_err(|_| bad())?;
        out.push((t, [x, y]));
    }
    Ok(out)
}

fn cmd_eval(m: &ArgMatches) -> CliResult<()> {
    let cfg = resolve_config(m)?;
    println!("set,p1,p3,p5,p10,euclidean,frames_scored,frames_blinked");
    match (
        m.get_one::<PathBuf>("weights"),
        m.get_one::<PathBuf>("data"),
        m.get_one::<PathBuf>("predictions"),
        m.get_one::<PathBuf>("labels"),
    ) {
        (Some(weights), Some(data), None, None) => {
            let params = ModelParams::load(weights)?;
            let sessions = load_sessions(data, &cfg)?;
            print_report("model", &evaluate_sessions(&params, &sessions)?);
            if m.get_flag("baseline") {
                print_report("center", &center_baseline(&sessions));
            }
        }
        (None, None, Some(preds), Some(labels)) => {
            let track = spikeye::labels::interpolate_labels(
                &load_track(labels, cfg.label_scale)?,
                spikeye::dataset::LABEL_RATE_HZ,
            )?;
            let origin_ms = (track.start_us / 1000) as i64;
            let mut acc = MetricAccumulator::new(&DEFAULT_TOLERANCES);
            let mut center = MetricAccumulator::new(&DEFAULT_TOLERANCES);
            for (t, p) in read_predictions(preds)? {
                let k = t - origin_ms;
                if k < 0 || k as usize >= track.len() {
                    continue;
                }
                let s = &track.samples[k as usize];
                let label = [s.x as f32, s.y as f32];
                acc.push(p, label, s.blink);
                center.push([40.0, 30.0], label, s.blink);
            }
            print_report("predictions", &acc.report());
            if m.get_flag("baseline") {
                print_report("center", &center.report());
            }
        }
        _ => {
            return Err(Failure::Usage(
                "eval needs either --weights with --data, or --predictions with --labels".into(),
            ))
        }
    }
    Ok(())
}

fn default_span(events: &[Event]) -> (u64, usize) {
    match (events.first(), events.last()) {
        (Some(a), Some(b)) => {
            let origin = a.t / 1000 * 1000;
            (origin, ((b.t - origin) / 1000 + 1) as usize)
        }
        _ => (0, 0),
    }
}

fn cmd_stream(m: &ArgMatches) -> CliResult<()> {
    let cfg = resolve_config(m)?;
    let params = ModelParams::load(m.get_one::<PathBuf>("weights").expect("required"))?;
    let events_path = m.get_one::<PathBuf>("events").expect("required");
    let events =
        load_events(events_path).with_context(|| format!("reading {}", events_path.display()))?;
    let labels = match m.get_one::<PathBuf>("labels") {
        Some(p) => Some(spikeye::labels::interpolate_labels(
            &load_track(p, cfg.label_scale)?,
            spikeye::dataset::LABEL_RATE_HZ,
        )?),
        None => None,
    };
    let (origin_us, span) = match &labels {
        Some(l) => (l.start_us, l.len()),
        None => default_span(&events),
    };
    let ticks = m.get_one::<usize>("ticks").copied().unwrap_or(span);
    let mut engine = StreamEngine::with_origin(params, origin_us);
    let preds = engine.run(&events, ticks)?;
    if engine.stale_events() > 0 {
        log::warn!(
            "{} events before the stream origin were dropped",
            engine.stale_events()
        );
    }
    let mut out: Box<dyn Write> = match m.get_one::<PathBuf>("out") {
        Some(p) => Box::new(create_file(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    let origin_ms = origin_us / 1000;
    let io = |e: std::io::Error| Failure::Data(anyhow!("writing predictions: {e}"));
    match &labels {
        Some(_) => writeln!(out, "t_ms,x_pred,y_pred,x_gt,y_gt,dist").map_err(io)?,
        None => writeln!(out, "t_ms,x_pred,y_pred").map_err(io)?,
    }
    for (k, p) in preds.iter().enumerate() {
        let t = origin_ms + k as u64;
        match labels.as_ref().and_then(|l| l.samples.get(k)) {
            Some(s) => {
                let d = ((p[0] as f64 - s.x).powi(2) + (p[1] as f64 - s.y).powi(2)).sqrt();
                writeln!(
                    out,
                    "{t},{:.3},{:.3},{:.3},{:.3},{d:.3}",
                    p[0], p[1], s.x, s.y
                )
            }
            None if labels.is_some() => writeln!(out, "{t},{:.3},{:.3},,,", p[0], p[1]),
            None => writeln!(out, "{t},{:.3},{:.3}", p[0], p[1]),
        }
        .map_err(io)?;
    }
    out.flush().map_err(io)?;
    Ok(())
}

fn cmd_cost(m: &ArgMatches) -> CliResult<()> {
    let cfg = resolve_config(m)?;
    let params = match m.get_one::<PathBuf>("weights") {
        Some(p) => Some(ModelParams::load(p)?),
        None => None,
    };
    let model = params
        .as_ref()
        .map_or(cfg.model.clone(), |p| p.config.clone());
    let stats = match m.get_one::<PathBuf>("events") {
        Some(path) => {
            let params = match params {
                Some(p) => p,
                None => ModelParams::build(&model)?.0,
            };
            let events =
                load_events(path).with_context(|| format!("reading {}", path.display()))?;
            let (origin, span) = default_span(&events);
            let ticks = m.get_one::<usize>("ticks").copied().unwrap_or(span);
            let mut engine = StreamEngine::with_origin(params, origin);
            engine.run(&events, ticks)?;
            Some(engine.snapshot_activity()?)
        }
        None => None,
    };
    let report = cost_report(&model, stats.as_ref(), &cfg.energy, cfg.frequency_hz)?;
    if m.get_flag("csv") {
        print!("{}", report.render_csv());
    } else {
        print!("{}", report.render_table());
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            if e.kind() == ErrorKind::UnknownArgument {
                eprintln!("valid configuration keys: {}", RunConfig::keys().join(", "));
            }
            return ExitCode::from(code);
        }
    };
    let level = if matches.get_flag("verbose") {
        "info"
    } else {
        "warn"
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let result = match name {
        "synth" => cmd_synth(sub),
        "train" => cmd_train(sub),
        "eval" => cmd_eval(sub),
        "stream" => cmd_stream(sub),
        "cost" => cmd_cost(sub),
        _ => unreachable!("clap rejects unknown subcommands"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
