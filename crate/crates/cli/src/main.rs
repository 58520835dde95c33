//! `gazeboard` command-line front end.
//!
//! Every command opens the store, runs one pipeline step for one session
//! and prints its result as text or JSON (`--format json`). Failures print
//! a single `error: ...` line and exit with 2 (configuration), 3 (data) or
//! 4 (numeric).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gazeboard::features::{write_dataset, ProfileParam, ProfileScope};
use gazeboard::heatmap::{grid_string, normalize_for_display, write_pgm};
use gazeboard::ingest::ActivityId;
use gazeboard::ml::{render_table, ModelKind, Protocol, SplitUnit};
use gazeboard::pipeline;
use gazeboard::stats::{AnovaResult, Factor};
use gazeboard::store::Store;
use gazeboard::synth::{generate_session, write_session_dir, META_FILE, TRUTH_FILE};
use gazeboard::{Config, Error, ErrorClass, Exec, Result};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "gazeboard", version, about = "Eye-tracking analytics pipeline")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, default_value = "gazeboard-store")]
    store: PathBuf,
    /// Session name inside the store.
    #[arg(long, global = true, default_value = "default")]
    session: String,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Execution mode, overriding the configuration.
    #[arg(long, global = true, value_enum)]
    exec: Option<ExecArg>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExecArg {
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic session (gaze exports, metadata, ground truth).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        learners: Option<usize>,
    },
    /// Load a metadata file and gaze exports into the store.
    Ingest {
        /// Directory holding the metadata file and one export per learner.
        #[arg(long, conflicts_with = "meta")]
        dir: Option<PathBuf>,
        #[arg(long, requires = "exports")]
        meta: Option<PathBuf>,
        exports: Vec<PathBuf>,
    },
    /// Tag samples with activities and assemble gaze events.
    Tag,
    /// Compute per-activity and whole-session attention profiles.
    Features,
    /// One-way ANOVA of a profile parameter across a learner factor.
    Anova {
        #[arg(long, required_unless_present = "all")]
        param: Option<String>,
        #[arg(long, required_unless_present = "all")]
        factor: Option<String>,
        #[arg(long, default_value = "session")]
        scope: String,
        /// Every parameter, factor and scope.
        #[arg(long, conflicts_with_all = ["param", "factor"])]
        all: bool,
    },
    /// Build smoothed fixation heatmaps.
    Heatmap {
        #[arg(long)]
        activity: Option<String>,
        /// Also write `.grid` and `.pgm` files here.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Build the windowed feature dataset.
    Dataset {
        /// Also write the dataset as tab-separated text.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Train classifiers on the stored dataset.
    Train {
        #[arg(long, default_value = "all")]
        model: String,
    },
    /// Cross-validate classifiers on the stored dataset.
    Evaluate {
        #[arg(long, default_value = "all")]
        model: String,
        #[arg(long)]
        protocol: Option<String>,
        #[arg(long)]
        unit: Option<String>,
    },
    /// Serve the HTTP API over the store.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

struct Output {
    text: String,
    json: Value,
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn parse<T: std::str::FromStr<Err = String>>(what: &str, s: &str) -> Result<T> {
    s.parse().map_err(|e: String| Error::Config(format!("{what}: {e}")))
}

fn models(arg: &str) -> Result<Vec<ModelKind>> {
    if arg == "all" {
        Ok(vec![ModelKind::Rf, ModelKind::Mlp])
    } else {
        Ok(vec![parse("model", arg)?])
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    if let Some(e) = cli.exec {
        cfg.exec = match e {
            ExecArg::Parallel => Exec::Parallel,
            ExecArg::Sequential => Exec::Sequential,
        };
    }
    Ok(cfg)
}

fn export_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if path.is_file() && name.ends_with(".tsv") && name != META_FILE && name != TRUTH_FILE {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn anova_line(a: &AnovaResult) -> String {
    let t = &a.test;
    format!(
        "{} by {} ({}): F({}, {}) = {:.4}, p = {:.4e}, {} at alpha {}",
        a.parameter,
        a.factor.as_str(),
        a.scope,
        t.df1,
        t.df2,
        t.f,
        t.p_value,
        if a.significant { "significant" } else { "not significant" },
        a.alpha
    )
}

fn run(cli: &Cli) -> Result<Output> {
    let cfg = load_config(cli)?;
    if let Command::Synth { out, learners } = &cli.command {
        let mut synth = cfg.synth.clone();
        if let Some(n) = learners {
            synth.learners = *n;
        }
        let session = generate_session(&synth, cfg.exec)?;
        write_session_dir(&session, out)?;
        let samples: usize = session.streams.iter().map(|(_, f)| f.len()).sum();
        return Ok(Output {
            text: format!(
                "wrote {} learners, {samples} samples, {} truth windows to {}",
                session.streams.len(),
                session.truth.len(),
                out.display()
            ),
            json: json!({ "out": out, "learners": session.streams.len(), "samples": samples, "truth_windows": session.truth.len() }),
        });
    }
    let store = Store::open(&cli.store)?;
    let session = cli.session.as_str();
    match &cli.command {
        Command::Synth { .. } => unreachable!("handled above"),
        Command::Ingest { dir, meta, exports } => {
            let (meta, exports) = match (dir, meta) {
                (Some(d), _) => (d.join(META_FILE), export_files(d)?),
                (None, Some(m)) => (m.clone(), exports.clone()),
                (None, None) => return Err(config_error("ingest needs --dir or --meta with export files")),
            };
            let s = pipeline::ingest(&store, session, &meta, &exports, &cfg)?;
            Ok(Output {
                text: format!(
                    "ingested {} files, {} samples ({} malformed rows); {} learners, excluded: {}",
                    s.files,
                    s.samples,
                    s.malformed_rows,
                    s.learners,
                    if s.excluded.is_empty() { "none".into() } else { s.excluded.join(", ") }
                ),
                json: serde_json::to_value(&s)?,
            })
        }
        Command::Tag => {
            let recs = pipeline::tag(&store, session, &cfg)?;
            let mut text = String::new();
            let mut rows = Vec::new();
            for r in &recs {
                let _ = writeln!(
                    text,
                    "{}: {} samples, {} untagged, {} events, {} spanning",
                    r.participant_id,
                    r.samples,
                    r.untagged_samples,
                    r.events.len(),
                    r.report.spanning.len()
                );
                rows.push(json!({
                    "participant_id": r.participant_id,
                    "samples": r.samples,
                    "untagged_samples": r.untagged_samples,
                    "events": r.events.len(),
                    "spanning": r.report.spanning.len(),
                    "zero_duration": r.report.zero_duration.len(),
                }));
            }
            Ok(Output { text: text.trim_end().into(), json: json!({ "learners": rows }) })
        }
        Command::Features => {
            let profiles = pipeline::features(&store, session)?;
            let mut text = format!(
                "{:<8} {:<12} {:>10} {:>10} {:>10} {:>10}\n",
                "learner", "scope", "sacc/min", "fix/min", "sacc ms", "fix ms"
            );
            for p in &profiles {
                let _ = writeln!(
                    text,
                    "{:<8} {:<12} {:>10.2} {:>10.2} {:>10.2} {:>10.2}",
                    p.participant_id,
                    p.scope.label(),
                    p.avg_saccade_rate,
                    p.avg_fixation_rate,
                    p.avg_saccade_time,
                    p.avg_fixation_time
                );
            }
            Ok(Output { text: text.trim_end().into(), json: serde_json::to_value(&profiles)? })
        }
        Command::Anova { param, factor, scope, all } => {
            if !*all {
                let param: ProfileParam = parse("param", param.as_deref().unwrap_or_default())?;
                let factor: Factor = parse("factor", factor.as_deref().unwrap_or_default())?;
                let scope: ProfileScope = parse("scope", scope)?;
                let a = pipeline::anova(&store, session, param, factor, &scope, &cfg)?;
                return Ok(Output { text: anova_line(&a), json: serde_json::to_value(&a)? });
            }
            let mut scopes: Vec<ProfileScope> = pipeline::load_profiles(&store, session)?.into_iter().map(|p| p.scope).collect();
            scopes.sort();
            scopes.dedup();
            let (mut text, mut results, mut skipped) = (String::new(), Vec::new(), Vec::new());
            for scope in &scopes {
                for param in ProfileParam::ALL {
                    for factor in Factor::ALL {
                        match pipeline::anova(&store, session, param, factor, scope, &cfg) {
                            Ok(a) => {
                                let _ = writeln!(text, "{}", anova_line(&a));
                                results.push(a);
                            }
                            Err(Error::Domain(msg)) => {
                                let name = pipeline::anova_name(param, factor, scope);
                                let _ = writeln!(text, "{name}: skipped ({msg})");
                                skipped.push(json!({ "name": name, "reason": msg }));
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
            Ok(Output { text: text.trim_end().into(), json: json!({ "results": results, "skipped": skipped }) })
        }
        Command::Heatmap { activity, export } => {
            let activity: Option<ActivityId> = activity.as_deref().map(|a| parse("activity", a)).transpose()?;
            let grids = pipeline::heatmaps(&store, session, activity.as_ref(), &cfg)?;
            let name = activity.as_ref().map_or("all", ActivityId::as_str);
            if let Some(dir) = export {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                for g in &grids {
                    let base = dir.join(format!("{}.{name}", g.participant_id));
                    let grid_path = base.with_extension(format!("{name}.grid"));
                    std::fs::write(&grid_path, grid_string(g)).map_err(|e| Error::io(&grid_path, e))?;
                    let pgm_path = base.with_extension(format!("{name}.pgm"));
                    let mut bytes = Vec::new();
                    write_pgm(&normalize_for_display(g), &mut bytes).map_err(|e| Error::io(&pgm_path, e))?;
                    std::fs::write(&pgm_path, bytes).map_err(|e| Error::io(&pgm_path, e))?;
                }
            }
            let mut text = String::new();
            let mut rows = Vec::new();
            for g in &grids {
                let peak = (g.total_mass > 0.0).then(|| { let (c, r) = g.argmax(); json!([c, r]) });
                let _ = writeln!(
                    text,
                    "{} [{name}]: {}x{} cells, mass {:.1}, {} clipped, peak {}",
                    g.participant_id,
                    g.width_cells,
                    g.height_cells,
                    g.total_mass,
                    g.clipped,
                    peak.as_ref().map_or("-".into(), |p| p.to_string())
                );
                rows.push(json!({
                    "participant_id": g.participant_id,
                    "activity": name,
                    "total_mass": g.total_mass,
                    "clipped": g.clipped,
                    "peak": peak,
                }));
            }
            Ok(Output { text: text.trim_end().into(), json: json!({ "grids": rows }) })
        }
        Command::Dataset { export } => {
            let ds = pipeline::dataset(&store, session, &cfg)?;
            if let Some(path) = export {
                let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
                write_dataset(&ds.samples, std::io::BufWriter::new(file))?;
            }
            let r = &ds.report;
            Ok(Output {
                text: format!(
                    "{} windows from {} learners ({} skipped); before balancing: {} reading, {} video watching; after: {} reading, {} video watching",
                    ds.samples.len(),
                    r.learners_used,
                    r.skipped.len(),
                    r.before_balancing.reading,
                    r.before_balancing.video_watching,
                    r.after_balancing.reading,
                    r.after_balancing.video_watching
                ),
                json: json!({ "samples": ds.samples.len(), "report": r }),
            })
        }
        Command::Train { model } => {
            let mut text = String::new();
            let mut rows = Vec::new();
            for kind in models(model)? {
                let m = pipeline::train_model(&store, session, kind, &cfg)?;
                let _ = writeln!(text, "trained {} on {} samples (seed {})", kind.display_name(), m.trained_on, m.seed);
                rows.push(json!({ "model": kind.as_str(), "trained_on": m.trained_on, "seed": m.seed }));
            }
            Ok(Output { text: text.trim_end().into(), json: json!({ "models": rows }) })
        }
        Command::Evaluate { model, protocol, unit } => {
            let protocol: Protocol = match protocol {
                Some(p) => parse("protocol", p)?,
                None => cfg.evaluate.protocol,
            };
            let unit: SplitUnit = match unit {
                Some(u) => parse("unit", u)?,
                None => cfg.evaluate.unit,
            };
            let reports = models(model)?
                .into_iter()
                .map(|kind| pipeline::evaluate_model(&store, session, kind, protocol, unit, &cfg))
                .collect::<Result<Vec<_>>>()?;
            let summary: Vec<Value> = reports
                .iter()
                .map(|r| json!({ "model": r.model, "protocol": r.protocol, "unit": r.unit, "rounds": r.rounds, "n_samples": r.n_samples, "confusion": r.confusion, "metrics": r.metrics }))
                .collect();
            Ok(Output { text: render_table(&reports).trim_end().into(), json: json!({ "reports": summary }) })
        }
        Command::Serve { bind } => {
            let bind = bind.clone().unwrap_or_else(|| cfg.service.bind.clone());
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io(&cli.store, e))?;
            eprintln!("serving {} on http://{bind}/api/v1", cli.store.display());
            runtime
                .block_on(gazeboard_service::serve(store, &bind, &cfg.service.allowed_origin))
                .map_err(|e| Error::io(&cli.store, e))?;
            Ok(Output { text: String::new(), json: Value::Null })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            match cli.format {
                Format::Text if !out.text.is_empty() => println!("{}", out.text),
                Format::Text => {}
                Format::Json => println!("{}", serde_json::to_string_pretty(&out.json).unwrap_or_default()),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}
