use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use mpf_core::config::RunConfig;
use mpf_core::dataset_io::{load_ground_truth, GroundTruth, GroundTruthMode};
use mpf_core::descriptors::TemplateDatabase;
use mpf_core::evaluation::{read_decisions, score_decisions, sweep_pr, write_decisions, SyntheticWorld};
use mpf_core::fusion::dump_debug_matrices;
use mpf_core::pipeline::{build_database, DescriptorExtractor, Traverse};
use mpf_core::sequence::{Localizer, LocalizerConfig, MatchDecision};
use mpf_core::{Error, Result};

const DECISIONS_FILE: &str = "decisions.csv";
const PR_CURVE_FILE: &str = "pr_curve.csv";
const SUMMARY_FILE: &str = "summary.json";

/// Multi-channel sequence place recognition.
#[derive(Debug, Parser)]
#[command(name = "mpf", version)]
struct Cli {
    /// Log per-frame diagnostics (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a template database from the reference traverse.
    BuildDb {
        #[arg(long)]
        config: PathBuf,
        /// Database directory to create.
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize the query traverse against a template database.
    Localize {
        #[arg(long)]
        config: PathBuf,
        /// Database directory written by build-db.
        #[arg(long)]
        db: PathBuf,
        /// Output directory for decisions.csv.
        #[arg(long)]
        out: PathBuf,
        /// Also dump emission and score matrices for every query frame.
        #[arg(long)]
        dump_matrices: bool,
    },
    /// Score a decision log against ground truth.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Decision log written by localize.
        #[arg(long)]
        decisions: PathBuf,
        /// Ground-truth CSV; overrides the config.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Reference coordinates CSV for metric ground truth.
        #[arg(long)]
        ground_truth_reference: Option<PathBuf>,
        /// `frame-offset` or `metric`; overrides the config.
        #[arg(long)]
        mode: Option<GroundTruthMode>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic world and compare fused and single-channel runs.
    SynthBench {
        /// Synthetic world description; the built-in fusion benchmark if absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the world seed and the run config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Localizer settings (a run config); defaults if absent.
        #[arg(long)]
        run_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildDb { config, out } => build_db(&RunConfig::load(config)?, &out),
        Command::Localize {
            config,
            db,
            out,
            dump_matrices,
        } => localize(&RunConfig::load(config)?, &db, &out, dump_matrices),
        Command::Evaluate {
            config,
            decisions,
            ground_truth,
            ground_truth_reference,
            mode,
            tolerance,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            cfg.ground_truth = ground_truth.or(cfg.ground_truth);
            cfg.ground_truth_reference = ground_truth_reference.or(cfg.ground_truth_reference);
            cfg.ground_truth_mode = mode.unwrap_or(cfg.ground_truth_mode);
            cfg.tolerance = tolerance.unwrap_or(cfg.tolerance);
            cfg.validate()?;
            evaluate(&cfg, &decisions, &out)
        }
        Command::SynthBench {
            config,
            seed,
            run_config,
            out,
        } => {
            let mut world = match config {
                Some(p) => SyntheticWorld::from_toml(&read_text(&p)?)?,
                None => SyntheticWorld::fusion_benchmark(0),
            };
            let cfg = match run_config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(seed) = seed.or(cfg.seed) {
                world.seed = seed;
            }
            synth_bench(&world, &cfg, &out)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{key} is not set")))
}

fn open_traverse(cfg: &RunConfig, frames: Option<&Path>, tensors: Option<&Path>) -> Result<Traverse> {
    let specs = cfg.channel_specs()?;
    let layer = specs.iter().find_map(|s| s.layer(&cfg.cnn_layer));
    let traverse = Traverse::open(frames, tensors, cfg.stride, layer)?;
    traverse.check_channels(&specs)?;
    Ok(traverse)
}

fn build_db(cfg: &RunConfig, out: &Path) -> Result<()> {
    if cfg.reference_frames.is_none() && cfg.reference_tensors.is_none() {
        return Err(Error::Config("reference_frames or reference_tensors must be set".into()));
    }
    let traverse = open_traverse(
        cfg,
        cfg.reference_frames.as_deref(),
        cfg.reference_tensors.as_deref(),
    )?;
    let db = build_database(&traverse, &cfg.channel_specs()?, &cfg.extraction_settings())?;
    db.save(out)?;
    println!(
        "built database: {} templates, channels {}",
        db.len(),
        db.channel_names().join(",")
    );
    Ok(())
}

fn localize(cfg: &RunConfig, db_dir: &Path, out: &Path, dump_matrices: bool) -> Result<()> {
    if cfg.query_frames.is_none() && cfg.query_tensors.is_none() {
        return Err(Error::Config("query_frames or query_tensors must be set".into()));
    }
    let db = TemplateDatabase::load(db_dir)?;
    let names: Vec<String> = db.channel_names().into_iter().map(String::from).collect();
    let specs = names
        .iter()
        .map(|n| n.parse())
        .collect::<Result<Vec<mpf_core::pipeline::ChannelSpec>>>()?;
    let configured = cfg.channel_specs()?;
    if let Some(missing) = specs.iter().find(|s| !configured.contains(s)) {
        return Err(Error::Channel {
            channel: missing.to_string(),
            reason: "present in the database but not in the config channel list".into(),
        });
    }
    let loc_cfg = cfg.localizer_config(&names);
    let query = open_traverse(cfg, cfg.query_frames.as_deref(), cfg.query_tensors.as_deref())?;
    query.check_channels(&specs)?;

    fs::create_dir_all(out)?;
    let mut extractor = DescriptorExtractor::new(specs, cfg.extraction_settings());
    let mut localizer = Localizer::new(&db, loc_cfg)?;
    let mut decisions = Vec::with_capacity(query.len());
    for &id in query.ids() {
        let descriptors = extractor.extract(&query, id)?;
        let trace = localizer.push_traced(id, &descriptors)?;
        if dump_matrices {
            dump_debug_matrices(out.join("matrices").join(id.to_string()), &trace.emission, &trace.viterbi)?;
        }
        log_decision(&names, &trace.decision);
        decisions.push(trace.decision);
    }
    let file = BufWriter::new(File::create(out.join(DECISIONS_FILE))?);
    write_decisions(file, &names, &decisions)?;
    let accepted = decisions.iter().filter(|d| d.accepted).count();
    println!(
        "localized {} query frames, {accepted} accepted; wrote {}",
        decisions.len(),
        out.join(DECISIONS_FILE).display()
    );
    Ok(())
}

fn log_decision(names: &[String], d: &MatchDecision) {
    let bests: Vec<String> = d.channel_bests.iter().map(usize::to_string).collect();
    log::info!(
        "frame {},bests {},excluded {},seq_start {},seq_len {},quality {},accepted {}",
        d.query_id,
        bests.join("/"),
        d.excluded_channel.map_or("-", |c| names[c].as_str()),
        d.seq_start,
        d.seq_len,
        d.quality,
        d.accepted
    );
}

fn load_configured_ground_truth(cfg: &RunConfig) -> Result<GroundTruth> {
    let path = required(&cfg.ground_truth, "ground_truth")?;
    load_ground_truth(
        path,
        cfg.ground_truth_reference.as_deref(),
        cfg.ground_truth_mode,
        cfg.tolerance,
    )
}

/// Writes the PR curve and summary for one decision set; returns the summary.
fn write_evaluation(
    decisions: &[MatchDecision],
    gt: &GroundTruth,
    accept_threshold: f64,
    out: &Path,
) -> Result<serde_json::Value> {
    fs::create_dir_all(out)?;
    let curve = sweep_pr(decisions, gt)?;
    curve.write_csv(out.join(PR_CURVE_FILE))?;
    let at = score_decisions(decisions, gt, accept_threshold)?;
    let s = curve.summary();
    let summary = json!({
        "decisions": decisions.len(),
        "max_f1": s.max_f1,
        "max_f1_threshold": s.max_f1_threshold,
        "recall_at_100_precision": s.recall_at_full_precision,
        "curve_points": s.points,
        "accept_threshold": accept_threshold,
        "at_accept_threshold": {
            "precision": at.precision(),
            "recall": at.recall(),
            "f1": at.f1(),
            "counts": at,
        },
    });
    fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn evaluate(cfg: &RunConfig, decisions_path: &Path, out: &Path) -> Result<()> {
    let gt = load_configured_ground_truth(cfg)?;
    let (_, decisions) = read_decisions(File::open(decisions_path).map_err(|e| {
        Error::InvalidInput(format!("{}: {e}", decisions_path.display()))
    })?)?;
    let summary = write_evaluation(&decisions, &gt, cfg.accept_threshold, out)?;
    println!(
        "max F1 {:.4}, recall at 100% precision {:.4}; wrote {}",
        summary["max_f1"].as_f64().unwrap_or(f64::NAN),
        summary["recall_at_100_precision"].as_f64().unwrap_or(f64::NAN),
        out.join(SUMMARY_FILE).display()
    );
    Ok(())
}

fn synth_bench(world: &SyntheticWorld, cfg: &RunConfig, out: &Path) -> Result<()> {
    world.validate()?;
    let run = world.generate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("world.toml"), world.to_toml()?)?;
    run.ground_truth.write_frame_offset_csv(out.join("ground_truth.csv"))?;

    let names: Vec<String> = run.database.channel_names().into_iter().map(String::from).collect();
    let mut configurations: Vec<(String, Vec<String>)> = vec![("mpf".into(), names.clone())];
    if names.len() > 1 {
        configurations.extend(names.iter().map(|n| (n.clone(), vec![n.clone()])));
    }
    let mut results = Vec::new();
    for (label, channels) in &configurations {
        let loc_cfg = LocalizerConfig {
            o_thresh: vec![cfg.o_thresh],
            ..cfg.localizer_config(channels)
        };
        let decisions = run.localize(channels, &loc_cfg)?;
        let dir = out.join(label);
        fs::create_dir_all(&dir)?;
        write_decisions(BufWriter::new(File::create(dir.join(DECISIONS_FILE))?), channels, &decisions)?;
        let mut summary = write_evaluation(&decisions, &run.ground_truth, cfg.accept_threshold, &dir)?;
        summary["configuration"] = json!(label);
        summary["channels"] = json!(channels);
        println!(
            "{label:>12}: max F1 {:.4}, recall at 100% precision {:.4}",
            summary["max_f1"].as_f64().unwrap_or(f64::NAN),
            summary["recall_at_100_precision"].as_f64().unwrap_or(f64::NAN)
        );
        results.push(summary);
    }
    let summary = json!({ "seed": world.seed, "templates": world.templates, "configurations": results });
    fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}
