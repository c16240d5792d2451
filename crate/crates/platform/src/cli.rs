//! The `gpa` operator CLI: serve, simulate, assess, report.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use parking_lot::Mutex;

use gpa_core::assessment::{assess_cell, AssessConfig, AssessContext, AssessmentMethod, Condition, MatrixCell, Subject};
use gpa_core::engine::Assets;
use gpa_core::llm::{write_fixture, ChatRecord, LlmClient};
use gpa_core::metrics::{build_report, parse_ground_truth, ThresholdRule};
use gpa_core::perception::ChannelBundle;
use gpa_core::personas::TraitId;
use gpa_core::simulation::{
    directional_summary, run_simulated_session, DirectionalCase, SimulatedPlayerSpec,
};

use crate::archive::{rebuild_index, ArchiveError, ResultKey, SessionArchive};
use crate::config::{BackendChoice, BackendFactory, ConfigError, PlatformConfig};
use crate::server::{serve, AppState};

pub const EXIT_OK: i32 = 0;
/// Configuration, gateway or I/O failure, or every unit of work failed.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
/// Some units of work failed and others succeeded.
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gpa", version, about = "Trust-game personality assessment: server and batch tools")]
pub struct Cli {
    /// TOML file with models, temperatures, rounds, limits and data paths.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API for the player client.
    Serve(ServeArgs),
    /// Play complete sessions with LLM-driven stand-in players.
    Simulate(SimulateArgs),
    /// Run assessment cells over archived sessions.
    Assess(AssessArgs),
    /// Score archived assessments against ground truth.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "live")]
    pub backend: BackendChoice,
    /// Fixture files for the replay backend.
    #[arg(long)]
    pub fixtures: Vec<PathBuf>,
    /// Write every model call of this run to a fixture file.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub archive_dir: Option<PathBuf>,
    /// Seed for session ids and agent orders; random when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    pub players: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub agent_model: Option<String>,
    #[arg(long)]
    pub assessor_model: Option<String>,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Directory for the session archives.
    #[arg(long)]
    pub out: PathBuf,
    /// Players simulated in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Skip the post-game assessment cells.
    #[arg(long)]
    pub no_assess: bool,
}

fn parse_method(s: &str) -> Result<AssessmentMethod, String> {
    s.parse()
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse()
}

fn parse_bundle(s: &str) -> Result<ChannelBundle, String> {
    s.parse::<ChannelBundle>().map_err(|e| e.to_string())
}

fn parse_rule(s: &str) -> Result<ThresholdRule, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    #[arg(long, required = true)]
    pub archive: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "da,qa")]
    pub methods: Vec<AssessmentMethod>,
    #[arg(long, value_delimiter = ',', value_parser = parse_condition, default_value = "all")]
    pub conditions: Vec<Condition>,
    #[arg(long, value_delimiter = ',', value_parser = parse_bundle, default_value = "tbpe")]
    pub bundles: Vec<ChannelBundle>,
    #[arg(long)]
    pub assessor_model: Option<String>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Glob patterns selecting archive files.
    #[arg(long, required = true)]
    pub archives: Vec<String>,
    /// CSV with `player_id` plus five scores (O,C,E,A,N) or 44 item answers.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `median` (split on the truth median) or `midpoint` (fixed at 3).
    #[arg(long, value_parser = parse_rule, default_value = "median")]
    pub threshold: ThresholdRule,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let cfg = match PlatformConfig::load_or_default(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let result = match cli.command {
        Command::Serve(a) => cmd_serve(cfg, a),
        Command::Simulate(a) => cmd_simulate(cfg, a),
        Command::Assess(a) => cmd_assess(cfg, a),
        Command::Report(a) => cmd_report(cfg, a),
    };
    result.unwrap_or_else(fail)
}

fn fail(e: ConfigError) -> i32 {
    eprintln!("error: {e}");
    match e {
        ConfigError::Usage(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn archive_err(e: ArchiveError) -> ConfigError {
    ConfigError::Archive(e.to_string())
}

fn io_fail(path: &Path) -> impl FnOnce(std::io::Error) -> ConfigError + '_ {
    move |source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn outcome_code(ok: usize, failed: usize) -> i32 {
    match (ok, failed) {
        (_, 0) => EXIT_OK,
        (0, _) => EXIT_FAILURE,
        _ => EXIT_PARTIAL,
    }
}

fn cmd_serve(mut cfg: PlatformConfig, a: ServeArgs) -> Result<i32, ConfigError> {
    if let Some(bind) = a.bind {
        cfg.server.bind = bind;
    }
    if a.archive_dir.is_some() {
        cfg.server.archive_dir = a.archive_dir;
    }
    let seed = a.seed.unwrap_or_else(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0)
    });
    let factory = BackendFactory::new(a.backend.backend, &cfg.live, &a.backend.fixtures, &[], seed)?;
    let assets = cfg.assets()?;
    let bind = cfg.server.bind.clone();
    let state = Arc::new(AppState::new(cfg, assets, factory, seed));
    let rt = tokio::runtime::Runtime::new().map_err(io_fail(Path::new("tokio runtime")))?;
    rt.block_on(serve(state, &bind)).map_err(io_fail(Path::new(&bind)))?;
    Ok(EXIT_OK)
}

/// What one batch of assessment cells did to an archive.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct AssessOutcome {
    pub ran: usize,
    pub skipped: usize,
    pub failed: Vec<(MatrixCell, String)>,
}

/// Runs every requested cell not already stored for this model and
/// appends the calls and results to the archive.
#[allow(clippy::too_many_arguments)]
pub fn assess_archive(
    archive: &mut SessionArchive,
    path: &Path,
    client: &LlmClient,
    cfg: &AssessConfig,
    assets: &Assets,
    methods: &[AssessmentMethod],
    conditions: &[Condition],
    bundles: &[ChannelBundle],
) -> Result<AssessOutcome, ArchiveError> {
    let existing = archive.result_keys();
    let records = archive.records();
    let ctx = AssessContext {
        catalog: &assets.catalog,
        rules: &assets.texts.rules,
        knowledge: assets.knowledge.as_str(),
        bank: &assets.bank,
    };
    let subject = Subject {
        player_id: &archive.header.player_id,
        session_id: &archive.header.session_id,
        consent: archive.snapshot.game.consent,
        records: &records,
        allow_partial: false,
    };
    let work = client.fork();
    let mut out = AssessOutcome::default();
    let mut results = Vec::new();
    for &method in methods {
        for &condition in conditions {
            for &bundle in bundles {
                let cell = MatrixCell {
                    method,
                    condition,
                    bundle,
                };
                let key = ResultKey {
                    method,
                    condition,
                    bundle,
                    model_id: cfg.model.clone(),
                };
                if existing.contains(&key) {
                    out.skipped += 1;
                    continue;
                }
                match assess_cell(&work, cfg, &ctx, &subject, &cell) {
                    Ok(r) => {
                        out.ran += 1;
                        results.push(r);
                    }
                    Err(e) => out.failed.push((cell, e.to_string())),
                }
            }
        }
    }
    archive.append_assessments(path, work.take_records(), results)?;
    Ok(out)
}

fn seed_for(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn write_records(path: &Path, records: &[ChatRecord]) -> Result<(), ConfigError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_fail(dir))?;
    }
    let file = fs::File::create(path).map_err(io_fail(path))?;
    write_fixture(std::io::BufWriter::new(file), records).map_err(io_fail(path))
}

struct PlayerRun {
    archive: SessionArchive,
    assess: Option<AssessOutcome>,
}

fn cmd_simulate(mut cfg: PlatformConfig, a: SimulateArgs) -> Result<i32, ConfigError> {
    if a.players == 0 {
        return Err(ConfigError::Usage("--players must be at least 1".into()));
    }
    if let Some(m) = &a.agent_model {
        cfg.engine.cognition.agent_model = m.clone();
        cfg.engine.perception.model = m.clone();
    }
    if let Some(m) = &a.assessor_model {
        cfg.assess.model = m.clone();
    }
    let factory = BackendFactory::new(a.backend.backend, &cfg.live, &a.backend.fixtures, &[], a.seed)?;
    let assets = Arc::new(cfg.assets()?);
    fs::create_dir_all(&a.out).map_err(io_fail(&a.out))?;

    let slots: Vec<Mutex<Option<Result<PlayerRun, String>>>> = (0..a.players).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let run_one = |i: usize| -> Result<PlayerRun, String> {
        let clock = factory.clock(i as u64 * 86_400_000);
        let client = LlmClient::new(factory.gateway(clock.clone()));
        let target = TraitId::ALL[i % TraitId::ALL.len()];
        let spec = SimulatedPlayerSpec::high_in(&assets, target, a.seed.wrapping_mul(1000).wrapping_add(i as u64));
        let rt = run_simulated_session(
            a.seed,
            i,
            spec.clone(),
            cfg.simulation.clone(),
            cfg.engine.clone(),
            assets.clone(),
            client.clone(),
            clock,
        )
        .map_err(|e| e.to_string())?;
        let mut archive = SessionArchive::from_runtime(&rt, Some(spec));
        let path = a.out.join(SessionArchive::file_name(&archive.header.session_id));
        archive.write(&path).map_err(|e| e.to_string())?;
        let assess = if a.no_assess {
            None
        } else {
            let sa = &cfg.simulate_assess;
            Some(
                assess_archive(&mut archive, &path, &client, &cfg.assess, &assets, &sa.methods, &sa.conditions, &sa.bundles)
                    .map_err(|e| e.to_string())?,
            )
        };
        Ok(PlayerRun { archive, assess })
    };
    std::thread::scope(|s| {
        for _ in 0..a.jobs.clamp(1, a.players) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= a.players {
                    break;
                }
                *slots[i].lock() = Some(run_one(i));
            });
        }
    });

    let mut ok = 0;
    let mut failed = 0;
    let mut recorded = Vec::new();
    let mut cases = Vec::new();
    for (i, slot) in slots.into_iter().enumerate() {
        match slot.into_inner().expect("every player ran") {
            Ok(run) => {
                recorded.extend(run.archive.chat_records());
                let cell_failures = run.assess.as_ref().map_or(0, |o| o.failed.len());
                println!(
                    "{}: completed, {} assessment result(s){}",
                    run.archive.header.session_id,
                    run.archive.assessments.len(),
                    if cell_failures > 0 { format!(", {cell_failures} cell(s) failed") } else { String::new() }
                );
                if let Some(o) = &run.assess {
                    for (cell, e) in &o.failed {
                        eprintln!("  {} {} {}: {e}", cell.method, cell.condition, cell.bundle);
                    }
                }
                if let Some(target) = run.archive.header.simulated.as_ref().and_then(|s| s.target) {
                    for r in run.archive.assessments.iter().filter(|r| r.condition == Condition::All) {
                        cases.push(DirectionalCase {
                            player_id: r.player_id.clone(),
                            method: r.method.code().to_string(),
                            target,
                            score: r.scores.get(target),
                        });
                    }
                }
                if cell_failures == 0 {
                    ok += 1;
                } else {
                    failed += 1;
                }
            }
            Err(e) => {
                eprintln!("player {i}: {e}");
                failed += 1;
            }
        }
    }
    if let Some(path) = &a.backend.record {
        write_records(path, &recorded)?;
    }
    rebuild_index(&a.out).map_err(archive_err)?;
    if !cases.is_empty() {
        let s = directional_summary(&cases);
        println!(
            "target trait above midpoint: {}/{} ({:.1}%)",
            s.hits,
            s.total,
            s.rate * 100.0
        );
    }
    Ok(outcome_code(ok, failed))
}

fn cmd_assess(mut cfg: PlatformConfig, a: AssessArgs) -> Result<i32, ConfigError> {
    if let Some(m) = &a.assessor_model {
        cfg.assess.model = m.clone();
    }
    let assets = cfg.assets()?;
    let mut archives = Vec::new();
    for path in &a.archive {
        archives.push((path.clone(), SessionArchive::read(path).map_err(archive_err)?));
    }
    let mut recorded = Vec::new();
    let (mut ok, mut failed) = (0, 0);
    let mut dirs = BTreeSet::new();
    for (path, mut archive) in archives {
        let before = archive.chats.len();
        let factory = BackendFactory::new(
            a.backend.backend,
            &cfg.live,
            &a.backend.fixtures,
            &archive.chat_records(),
            seed_for(&archive.header.session_id),
        )?;
        let client = LlmClient::new(factory.gateway(factory.clock(0)));
        let outcome = assess_archive(
            &mut archive,
            &path,
            &client,
            &cfg.assess,
            &assets,
            &a.methods,
            &a.conditions,
            &a.bundles,
        )
        .map_err(archive_err)?;
        recorded.extend(archive.chats[before..].iter().map(|(_, r)| r.clone()));
        println!(
            "{}: {} ran, {} already present, {} failed",
            archive.header.session_id,
            outcome.ran,
            outcome.skipped,
            outcome.failed.len()
        );
        for (cell, e) in &outcome.failed {
            eprintln!("  {} {} {}: {e}", cell.method, cell.condition, cell.bundle);
        }
        ok += outcome.ran + outcome.skipped;
        failed += outcome.failed.len();
        if let Some(dir) = path.parent() {
            dirs.insert(dir.to_path_buf());
        }
    }
    if let Some(path) = &a.backend.record {
        write_records(path, &recorded)?;
    }
    for dir in dirs {
        let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
        rebuild_index(&dir).map_err(archive_err)?;
    }
    Ok(outcome_code(ok, failed))
}

fn cmd_report(cfg: PlatformConfig, a: ReportArgs) -> Result<i32, ConfigError> {
    let mut files = BTreeSet::new();
    for pattern in &a.archives {
        let paths = glob::glob(pattern).map_err(|e| ConfigError::Usage(format!("bad pattern {pattern:?}: {e}")))?;
        for p in paths.flatten() {
            if p.file_name().is_some_and(|n| n != crate::archive::INDEX_FILE) {
                files.insert(p);
            }
        }
    }
    if files.is_empty() {
        return Err(ConfigError::Usage("no archives match --archives".into()));
    }
    let assets = cfg.assets()?;
    let truth_text = fs::read_to_string(&a.truth).map_err(io_fail(&a.truth))?;
    let truths = parse_ground_truth(&truth_text, &assets.bank).map_err(|e| ConfigError::Invalid {
        path: a.truth.clone(),
        message: e.to_string(),
    })?;
    let mut results = Vec::new();
    for f in &files {
        results.extend(SessionArchive::read(f).map_err(archive_err)?.assessments);
    }
    let known: BTreeSet<&str> = truths.iter().map(|t| t.player_id.as_str()).collect();
    let missing: BTreeSet<&str> = results
        .iter()
        .map(|r| r.player_id.as_str())
        .filter(|p| !known.contains(p))
        .collect();
    if !missing.is_empty() {
        for p in &missing {
            eprintln!("missing ground truth for player {p}");
        }
        return Ok(EXIT_FAILURE);
    }
    let report = build_report(&results, &truths, a.threshold, None::<(&str, &BTreeMap<String, String>)>)
        .map_err(|e| ConfigError::Usage(e.to_string()))?;
    fs::create_dir_all(&a.out).map_err(io_fail(&a.out))?;
    let write = |name: &str, text: String| {
        let p = a.out.join(name);
        fs::write(&p, text).map_err(io_fail(&p))
    };
    write("report.json", report.to_json())?;
    write("report.csv", report.to_csv())?;
    let text = report.to_text();
    write("report.txt", text.clone())?;
    print!("{text}");
    Ok(EXIT_OK)
}
