//! The `handover` command: simulate, ingest, build training sets, train,
//! cross-validate, run the closed loop, analyse, plus two developer checks.
//!
//! Exit status is 0 on success, 1 for bad usage or invalid input, 2 when an
//! output cannot be written.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::classifier::{cross_validate_with, prepare_training_set, session_samples, train_on_sessions, ClassifierKind, FoldMode};
use crate::features::{write_training_set, MirrorMap};
use crate::nn::{gradient_check, TrainConfig};
use crate::policy::{write_event_log, ApDurations, ClassifierSet, HandoverPolicy, TriggerConfig};
use crate::session::{load_session, save_session, validate_ap_model, ColumnMap, SessionRecord};
use crate::sim::{
    generate_session, run_closed_loop, score_policy, GestureModel, ModelSource, ParticipantScript, PolicyScore, ScriptGenerator,
};
use crate::stats::{bayes_ab_poisson, episode_stats, one_way_anova, wilcoxon_signed_rank, PoissonPrior, DEFAULT_DRAWS};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, missing inputs or invalid data.
    Invalid(String),
    /// Outputs could not be written.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "handover", version, about = "Learned handover timing and location: simulate, train, evaluate, analyse")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Session directory (input, or output of `simulate`).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Directory of `<kind>.json` model files.
    #[arg(long, global = true)]
    pub models: Option<PathBuf>,
    #[arg(long, global = true)]
    pub reports: Option<PathBuf>,
    /// Required by every stochastic command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// ep_start, otp_start, otp_complete or otp_type.
    #[arg(long, global = true)]
    pub kind: Option<ClassifierKind>,
    /// Fold mode: by_episode (default) or by_participant.
    #[arg(long, global = true)]
    pub mode: Option<FoldMode>,
    /// TOML mapping canonical column names to the names used in the input files.
    #[arg(long = "column-map", global = true)]
    pub column_map: Option<PathBuf>,
    /// TOML file with defaults for any of the above except the seed, plus `[train]`,
    /// `[trigger]`, `[durations]` and `[simulation]` tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate teleoperated demonstration sessions.
    Simulate {
        #[arg(long, default_value_t = 5)]
        sessions: usize,
        #[arg(long)]
        participants: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Fraction of clearly cued episodes before the location rule drifts.
        #[arg(long)]
        drift: Option<f64>,
        #[arg(long)]
        adversarial: bool,
        /// Participant script files; replaces random scripts.
        #[arg(long = "script")]
        scripts: Vec<PathBuf>,
    },
    /// Convert session logs to the canonical schema and list their episodes.
    Ingest,
    /// Write the balanced or augmented training set of one classifier.
    Trainset,
    /// Train one classifier (`--kind`) or all four.
    Train,
    /// Five-fold cross-validation of one classifier.
    Cv,
    /// Run the policy against simulated participants and score it.
    Closedloop {
        #[arg(long, default_value_t = 5)]
        sessions: usize,
        #[arg(long)]
        episodes: Option<usize>,
        /// Use ground-truth classifiers instead of `--models`.
        #[arg(long)]
        oracle: bool,
        #[arg(long = "script")]
        scripts: Vec<PathBuf>,
    },
    /// Episode statistics, optionally compared against a baseline condition.
    Analyze {
        /// Sessions of the condition to compare against.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Check analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        nets: usize,
    },
    /// How many episodes fit the fixed action-primitive model.
    Apcheck,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    models: Option<PathBuf>,
    reports: Option<PathBuf>,
    kind: Option<ClassifierKind>,
    mode: Option<FoldMode>,
    column_map: Option<PathBuf>,
    train: Option<TrainConfig>,
    trigger: Option<TriggerConfig>,
    durations: Option<ApDurations>,
    simulation: Option<ScriptGenerator>,
}

/// Flags over config file over built-in defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub reports: Option<PathBuf>,
    pub seed: Option<u64>,
    pub kind: Option<ClassifierKind>,
    pub mode: FoldMode,
    pub column_map: Option<PathBuf>,
    pub train: TrainConfig,
    pub trigger: TriggerConfig,
    pub durations: ApDurations,
    pub simulation: ScriptGenerator,
}

impl RunConfig {
    pub fn resolve(flags: &GlobalArgs) -> Result<Self> {
        let file = match &flags.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
                toml::from_str::<FileConfig>(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let seed = flags.seed;
        let mut train = file.train.unwrap_or_default();
        if let Some(s) = seed {
            train.seed = s;
        }
        Ok(Self {
            data: flags.data.clone().or(file.data),
            models: flags.models.clone().or(file.models),
            reports: flags.reports.clone().or(file.reports),
            seed,
            kind: flags.kind.or(file.kind),
            mode: flags.mode.or(file.mode).unwrap_or(FoldMode::ByEpisode),
            column_map: flags.column_map.clone().or(file.column_map),
            train,
            trigger: file.trigger.unwrap_or_default(),
            durations: file.durations.unwrap_or_default(),
            simulation: file.simulation.unwrap_or_default(),
        })
    }

    fn seed(&self, what: &str) -> Result<u64> {
        self.seed.ok_or_else(|| invalid(format!("{what} is stochastic and needs --seed")))
    }

    fn dir<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value.as_deref().ok_or_else(|| invalid(format!("--{flag} is required")))
    }

    fn kind(&self) -> Result<ClassifierKind> {
        self.kind.ok_or_else(|| invalid("--kind is required"))
    }

    fn column_map(&self) -> Result<ColumnMap> {
        match &self.column_map {
            Some(p) => ColumnMap::load(p).map_err(invalid),
            None => Ok(ColumnMap::canonical()),
        }
    }

    fn sessions(&self) -> Result<Vec<SessionRecord>> {
        let dir = self.dir(&self.data, "data")?;
        let map = self.column_map()?;
        let files = session_files(dir)?;
        if files.is_empty() {
            return Err(invalid(format!("no session CSV files in {}", dir.display())));
        }
        files.iter().map(|f| load_session(f, &map).map_err(|e| invalid(format!("{}: {e}", f.display())))).collect()
    }
}

/// `*.csv` directly inside `dir`, sorted by name.
fn session_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| internal(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| internal(format!("{}: {e}", path.display())))
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns its one-line summary.
pub fn execute(cli: &Cli) -> Result<String> {
    let cfg = RunConfig::resolve(&cli.global)?;
    match &cli.command {
        Command::Simulate { sessions, participants, episodes, drift, adversarial, scripts } => {
            let mut generator = cfg.simulation.clone();
            if let Some(e) = episodes {
                generator.episodes = *e;
            }
            if drift.is_some() {
                generator.drift_after = *drift;
            }
            generator.adversarial |= adversarial;
            simulate(&cfg, &generator, *sessions, participants.unwrap_or(*sessions), scripts)
        }
        Command::Ingest => ingest(&cfg),
        Command::Trainset => trainset(&cfg),
        Command::Train => train(&cfg),
        Command::Cv => cv(&cfg),
        Command::Closedloop { sessions, episodes, oracle, scripts } => {
            let mut generator = cfg.simulation.clone();
            if let Some(e) = episodes {
                generator.episodes = *e;
            }
            closedloop(&cfg, &generator, *sessions, *oracle, scripts)
        }
        Command::Analyze { baseline } => analyze(&cfg, baseline.as_deref()),
        Command::Gradcheck { nets } => gradcheck(&cfg, *nets),
        Command::Apcheck => apcheck(&cfg),
    }
}

fn load_scripts(paths: &[PathBuf]) -> Result<Vec<ParticipantScript>> {
    paths.iter().map(|p| ParticipantScript::load(p).map_err(invalid)).collect()
}

fn simulate(cfg: &RunConfig, generator: &ScriptGenerator, sessions: usize, participants: usize, scripts: &[PathBuf]) -> Result<String> {
    let seed = cfg.seed("simulate")?;
    let out = cfg.dir(&cfg.data, "data")?;
    let scripts = if scripts.is_empty() {
        let participants = participants.max(1);
        (0..sessions)
            .map(|i| generator.generate(&format!("p{:02}", i % participants + 1), seed.wrapping_mul(1_000_003).wrapping_add(i as u64)))
            .collect()
    } else {
        load_scripts(scripts)?
    };
    for sub in ["truth", "scripts"] {
        create_dir(&out.join(sub))?;
    }
    let gestures = GestureModel::default();
    let (mut episodes, mut frames) = (0, 0);
    for (i, script) in scripts.iter().enumerate() {
        let (session, truth) = generate_session(script, &gestures, seed ^ (i as u64).wrapping_mul(0x9e37_79b9)).map_err(invalid)?;
        let name = format!("session_{i:03}");
        save_session(out.join(format!("{name}.csv")), &session).map_err(internal)?;
        truth.write_csv(out.join("truth").join(format!("{name}.csv"))).map_err(internal)?;
        write_file(&out.join("scripts").join(format!("{name}.toml")), &script.to_toml())?;
        episodes += session.episodes.len();
        frames += session.len();
    }
    Ok(format!("simulated {} sessions, {episodes} episodes, {frames} frames -> {}", scripts.len(), out.display()))
}

fn ingest(cfg: &RunConfig) -> Result<String> {
    let sessions = cfg.sessions()?;
    let out = cfg.dir(&cfg.reports, "reports")?;
    let canonical = out.join("sessions");
    create_dir(&canonical)?;
    let mut table = String::from("file,participant_id,episode_id,start_t,end_t,duration,otp,handover_type,quality,pause_work,pause_storage\n");
    let files = session_files(cfg.dir(&cfg.data, "data")?)?;
    for (file, s) in files.iter().zip(&sessions) {
        let name = file.file_name().expect("file path");
        save_session(canonical.join(name), s).map_err(internal)?;
        for e in &s.episodes {
            let _ = writeln!(
                table,
                "{},{},{},{},{},{},{},{},{},{},{}",
                name.to_string_lossy(),
                e.participant_id,
                e.episode_id,
                e.start_t(),
                e.end_t(),
                e.duration,
                e.otp().map(|o| o.to_string()).unwrap_or_default(),
                e.handover_type,
                e.quality,
                e.pause_work,
                e.pause_storage
            );
        }
    }
    write_file(&out.join("episodes.csv"), &table)?;
    let n: usize = sessions.iter().map(|s| s.episodes.len()).sum();
    Ok(format!("ingested {} sessions, {n} episodes -> {}", sessions.len(), out.display()))
}

fn pooled(kind: ClassifierKind, sessions: &[SessionRecord]) -> Result<Vec<crate::classifier::Sample>> {
    let mut pool = Vec::new();
    for (i, s) in sessions.iter().enumerate() {
        pool.extend(session_samples(kind, s, i).map_err(invalid)?);
    }
    Ok(pool)
}

fn trainset(cfg: &RunConfig) -> Result<String> {
    let seed = cfg.seed("trainset")?;
    let kind = cfg.kind()?;
    let sessions = cfg.sessions()?;
    let out = cfg.dir(&cfg.reports, "reports")?;
    create_dir(out)?;
    let (set, summary) = prepare_training_set(kind, pooled(kind, &sessions)?, &MirrorMap::default(), seed).map_err(invalid)?;
    let path = out.join(format!("trainset_{kind}.csv"));
    write_training_set(&path, &set).map_err(internal)?;
    let mut counts = BTreeMap::new();
    for s in &set {
        *counts.entry(s.label).or_insert(0usize) += 1;
    }
    let mut line = format!("{kind}: {} windows, per class {counts:?}", set.len());
    if let Some(a) = summary {
        let _ = write!(line, ", {} synthetic left, {} mirrored right", a.synthetic_left, a.mirrored_right);
    }
    Ok(format!("{line} -> {}", path.display()))
}

fn train(cfg: &RunConfig) -> Result<String> {
    cfg.seed("train")?;
    let sessions = cfg.sessions()?;
    let out = cfg.dir(&cfg.models, "models")?;
    create_dir(out)?;
    let kinds: Vec<ClassifierKind> = match cfg.kind {
        Some(k) => vec![k],
        None => ClassifierKind::ALL.to_vec(),
    };
    let mut parts = Vec::new();
    for kind in kinds {
        let model = train_on_sessions(kind, &sessions, &cfg.train, &MirrorMap::default()).map_err(invalid)?;
        model.save(out.join(format!("{kind}.json"))).map_err(internal)?;
        let fit = model.fit.as_ref().expect("freshly trained");
        parts.push(format!("{kind} {} epochs (best {})", fit.epochs_run, fit.best_epoch));
    }
    Ok(format!("trained {} -> {}", parts.join(", "), out.display()))
}

fn cv(cfg: &RunConfig) -> Result<String> {
    cfg.seed("cv")?;
    let kind = cfg.kind()?;
    let sessions = cfg.sessions()?;
    let out = cfg.dir(&cfg.reports, "reports")?;
    create_dir(out)?;
    let run = cross_validate_with(kind, &sessions, cfg.mode, &cfg.train, &MirrorMap::default()).map_err(invalid)?;
    let r = &run.report;
    write_file(&out.join(format!("cv_{kind}_{}.csv", cfg.mode)), &r.to_csv())?;
    let folds: Vec<String> = r.per_fold_accuracy.iter().map(|a| format!("{:.1}", a * 100.0)).collect();
    Ok(format!("{kind} {}: folds [{}] mean {:.1}%", cfg.mode, folds.join(" "), r.mean_accuracy * 100.0))
}

fn closedloop(cfg: &RunConfig, generator: &ScriptGenerator, sessions: usize, oracle: bool, scripts: &[PathBuf]) -> Result<String> {
    let seed = cfg.seed("closedloop")?;
    let out = cfg.dir(&cfg.reports, "reports")?.join("closedloop");
    create_dir(&out)?;
    let mut models = if oracle {
        None
    } else {
        let dir = cfg.dir(&cfg.models, "models")?;
        Some(ClassifierSet::load(dir).map_err(invalid)?)
    };
    let scripts = if scripts.is_empty() {
        (0..sessions).map(|i| generator.generate(&format!("c{:02}", i + 1), seed.wrapping_add(i as u64))).collect()
    } else {
        load_scripts(scripts)?
    };
    let gestures = GestureModel::default();
    let mut table = String::from("session,intents,matched,misses,false_triggers,otp_accuracy,motion_primitive_errors,deadlocks,ep_start_median_latency\n");
    let mut scores: Vec<PolicyScore> = Vec::new();
    for (i, script) in scripts.iter().enumerate() {
        let policy = HandoverPolicy::new(cfg.trigger, cfg.durations).map_err(invalid)?;
        let source = match models.as_mut() {
            Some(m) => ModelSource::Learned(m),
            None => ModelSource::Oracle,
        };
        let run = run_closed_loop(policy, source, script, &gestures, seed ^ (i as u64).wrapping_mul(0x9e37_79b9)).map_err(invalid)?;
        let name = format!("session_{i:03}");
        let mut log = Vec::new();
        write_event_log(&mut log, &run.events).map_err(internal)?;
        write_file(&out.join(format!("{name}_events.csv")), &String::from_utf8_lossy(&log))?;
        run.truth.write_csv(out.join(format!("{name}_truth.csv"))).map_err(internal)?;
        let s = score_policy(&run.events, &run.truth).map_err(invalid)?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            table,
            "{name},{},{},{},{},{},{},{},{}",
            s.intents,
            s.matched,
            s.misses,
            s.false_triggers,
            opt(s.otp_accuracy),
            s.motion_primitive_errors,
            s.deadlocks,
            opt(s.latency_of(crate::features::TimingKind::EpStart).map(|l| l.median))
        );
        scores.push(s);
    }
    write_file(&out.join("scores.csv"), &table)?;
    let sum = |f: fn(&PolicyScore) -> usize| scores.iter().map(f).sum::<usize>();
    Ok(format!(
        "closed loop over {} sessions: {} of {} intents matched, {} false triggers, {} deadlocks -> {}",
        scores.len(),
        sum(|s| s.matched),
        sum(|s| s.intents),
        sum(|s| s.false_triggers),
        sum(|s| s.deadlocks),
        out.display()
    ))
}

fn analyze(cfg: &RunConfig, baseline: Option<&Path>) -> Result<String> {
    let sessions = cfg.sessions()?;
    let out = cfg.dir(&cfg.reports, "reports")?;
    create_dir(out)?;
    let table = episode_stats(&sessions).map_err(invalid)?;
    write_file(&out.join("episode_stats.csv"), &table.to_csv())?;
    write_file(&out.join("episode_stats.txt"), &table.to_text())?;
    let n: usize = sessions.iter().map(|s| s.episodes.len()).sum();
    let mut line = format!("{} participants, {n} episodes", table.participants.len());
    if let Some(dir) = baseline {
        let seed = cfg.seed("analyze --baseline")?;
        let base = RunConfig { data: Some(dir.to_path_buf()), ..cfg.clone() }.sessions()?;
        let text = compare(&sessions, &base, seed)?;
        write_file(&out.join("comparison.txt"), &text)?;
        let _ = write!(line, "; compared with {} baseline sessions", base.len());
    }
    Ok(format!("{line} -> {}", out.display()))
}

/// Episode counts (Poisson A/B), durations (ANOVA) and per-participant mean
/// durations paired by participant id (Wilcoxon).
fn compare(a: &[SessionRecord], b: &[SessionRecord], seed: u64) -> Result<String> {
    let counts = |s: &[SessionRecord]| s.iter().map(|x| x.episodes.len() as u64).collect::<Vec<_>>();
    let durations = |s: &[SessionRecord]| s.iter().flat_map(|x| x.episodes.iter().map(|e| e.duration)).collect::<Vec<_>>();
    let mut out = String::new();
    let ab = bayes_ab_poisson(&counts(a), &counts(b), PoissonPrior::default(), 0.9, DEFAULT_DRAWS, seed).map_err(invalid)?;
    let _ = writeln!(out, "episodes per session: {ab}");
    match one_way_anova(&[durations(a), durations(b)]) {
        Ok(r) => writeln!(out, "episode duration: {r}"),
        Err(e) => writeln!(out, "episode duration: not computed ({e})"),
    }
    .expect("string write");
    let means = |s: &[SessionRecord]| {
        let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for x in s {
            for e in &x.episodes {
                by.entry(x.participant_id.clone()).or_default().push(e.duration);
            }
        }
        by.into_iter().map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64)).collect::<BTreeMap<_, _>>()
    };
    let (ma, mb) = (means(a), means(b));
    let pairs: Vec<(f64, f64)> = ma.iter().filter_map(|(k, v)| mb.get(k).map(|w| (*v, *w))).collect();
    match wilcoxon_signed_rank(&pairs) {
        Ok(r) => writeln!(out, "paired mean duration: {r}"),
        Err(e) => writeln!(out, "paired mean duration: not computed ({e})"),
    }
    .expect("string write");
    Ok(out)
}

fn gradcheck(cfg: &RunConfig, nets: usize) -> Result<String> {
    let seed = cfg.seed("gradcheck")?;
    let r = gradient_check(seed, nets).map_err(invalid)?;
    let line = format!(
        "max relative gradient error {:.3e} over {} nets, {} parameters ({} skipped at kinks)",
        r.max_relative_error, r.configurations, r.parameters_checked, r.skipped_kinks
    );
    if r.passes(GRADCHECK_TOLERANCE) {
        Ok(line)
    } else {
        Err(invalid(format!("{line} exceeds {GRADCHECK_TOLERANCE:e}")))
    }
}

fn apcheck(cfg: &RunConfig) -> Result<String> {
    let sessions = cfg.sessions()?;
    let r = validate_ap_model(&sessions);
    if let Some(dir) = &cfg.reports {
        create_dir(dir)?;
        write_file(&dir.join("ap_coverage.json"), &serde_json::to_string_pretty(&r).map_err(internal)?)?;
    }
    let pct = r.coverage_fraction.map(|f| format!("{:.1}%", f * 100.0)).unwrap_or_else(|| "n/a".into());
    Ok(format!(
        "AP coverage {pct}: {} of {} episodes conform ({} non-default OTP, {} paused in reach, {} paused in tuck)",
        r.conforming, r.total_episodes, r.non_default_otp, r.paused_during_reach, r.paused_during_tuck
    ))
}
