use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use storyreason::gspo::{
    batch_loss, gspo_run, GspoConfig, PromptObjective, SegmentCandidates, Selection, TrainExample,
};
use storyreason::harness::{
    cached_bundle, cached_story, evaluate, load_dataset, predict_all, predictions_from_jsonl,
    predictions_to_jsonl, prepare, Cache, Config, Dataset, DatasetRecord, Endpoint, RunManifest,
    Services, Split,
};
use storyreason::oracles::{
    ChatClient, ChatService, GradientHintProvider, LossOracle, MockFixtures,
};
use storyreason::parallel::map_bounded;
use storyreason::perception::{CaptionService, LoadedImage, PerceptionBundle, SegmentationService};
use storyreason::prompt::{builtin_prompt, LabelSet, PromptFile, SocialPrompt};
use storyreason::story::FUSION_PROMPT_VERSION;

use crate::http::HttpService;
use crate::serve;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SERVICE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "storyreason", version, about = "Social relation reasoning over image stories")]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for cached bundles and stories.
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// `pipa`, `pisc` or a path to a label-set JSON file.
    #[arg(long, global = true)]
    pub label_set: Option<String>,
    /// Use mock services from this fixture directory for every unset endpoint.
    #[arg(long, global = true)]
    pub mock: Option<PathBuf>,
    /// Write a run manifest to this path.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment, classify and caption images; emit perception bundles.
    Perceive {
        #[arg(required = true)]
        images: Vec<PathBuf>,
        /// Output directory (one `<stem>.bundle.json` per image); stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fuse perception bundles into social stories.
    Narrate {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict relations for a dataset.
    Reason {
        dataset: PathBuf,
        /// Prompt file; the built-in prompt of the label set if omitted.
        #[arg(long)]
        prompt: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
        /// Predictions JSONL; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search the candidate pools for a lower-loss prompt.
    Optimize(OptimizeArgs),
    /// Score predictions against a dataset.
    Evaluate {
        predictions: PathBuf,
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
        /// Write the JSON report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve every mock endpoint from a fixture directory.
    MockServe {
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
    },
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    pub dataset: PathBuf,
    /// Candidate pool file.
    #[arg(long)]
    pub pools: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub probe: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adopt the best replacement even when it is worse than the incumbent.
    #[arg(long)]
    pub no_guard: bool,
    #[arg(long, value_enum, default_value_t = HintArg::Probe)]
    pub hints: HintArg,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    pub split: SplitArg,
    /// Output directory for `result.json` and `trace.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

impl SplitArg {
    fn select(self, dataset: &Dataset) -> Vec<&DatasetRecord> {
        let want = match self {
            SplitArg::All => return dataset.records.iter().collect(),
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        };
        dataset.split(want)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HintArg {
    Probe,
    Remote,
}

/// Misuse of flags detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Exit code for an error chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<storyreason::Error>() {
            return if e.is_service_error() { EXIT_SERVICE } else { EXIT_DATA };
        }
        if cause.downcast_ref::<storyreason::TransportError>().is_some() {
            return EXIT_SERVICE;
        }
    }
    EXIT_DATA
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    config.apply_env(|k| std::env::var(k).ok());
    if let Some(d) = &cli.cache_dir {
        config.cache_dir = Some(d.clone());
    }
    if let Some(p) = cli.parallelism {
        config.parallelism = p.max(1);
    }
    if let Some(l) = &cli.label_set {
        config.label_set = l.clone();
    }
    if let Some(dir) = &cli.mock {
        config = config.with_mock_defaults(dir);
    }
    config.segment.parallelism = config.parallelism;
    config.gspo.parallelism = config.parallelism;
    Ok(config)
}

/// Builds service handles from configured endpoints.
struct Backends<'a> {
    config: &'a Config,
    mocks: Mutex<HashMap<PathBuf, MockFixtures>>,
}

impl<'a> Backends<'a> {
    fn new(config: &'a Config) -> Self {
        Self { config, mocks: Mutex::new(HashMap::new()) }
    }

    fn endpoint(&self, name: &str, value: &Option<String>) -> anyhow::Result<Endpoint> {
        let raw = value.as_deref().ok_or_else(|| {
            anyhow!(UsageError(format!(
                "no {name} endpoint configured (set it in --config, the environment, or pass --mock <dir>)"
            )))
        })?;
        Ok(Endpoint::parse(raw)?)
    }

    fn fixtures(&self, dir: &Path) -> anyhow::Result<MockFixtures> {
        let mut mocks = self.mocks.lock().expect("fixture lock");
        if let Some(f) = mocks.get(dir) {
            return Ok(f.clone());
        }
        let f = MockFixtures::load(dir).with_context(|| format!("loading fixtures from {}", dir.display()))?;
        mocks.insert(dir.to_path_buf(), f.clone());
        Ok(f)
    }

    fn http(&self, url: String) -> HttpService {
        HttpService::new(url, Duration::from_secs(self.config.timeout_secs), self.config.api_token.clone())
    }

    fn segmenter(&self) -> anyhow::Result<Arc<dyn SegmentationService>> {
        Ok(match self.endpoint("segmentation", &self.config.endpoints.segmentation)? {
            Endpoint::Mock(d) => Arc::new(self.fixtures(&d)?.segmentation()),
            Endpoint::Http(u) => Arc::new(self.http(u)),
        })
    }

    fn captioner(&self) -> anyhow::Result<Arc<dyn CaptionService>> {
        Ok(match self.endpoint("caption", &self.config.endpoints.caption)? {
            Endpoint::Mock(d) => Arc::new(self.fixtures(&d)?.caption()),
            Endpoint::Http(u) => Arc::new(self.http(u)),
        })
    }

    fn chat(&self) -> anyhow::Result<ChatClient> {
        let service: Arc<dyn ChatService> = match self.endpoint("chat", &self.config.endpoints.chat)? {
            Endpoint::Mock(d) => Arc::new(self.fixtures(&d)?.chat_service()),
            Endpoint::Http(u) => Arc::new(self.http(u)),
        };
        let backoff = if self.config.endpoints.chat.as_deref().is_some_and(|e| e.starts_with("mock:")) {
            Duration::ZERO
        } else {
            Duration::from_millis(200)
        };
        Ok(ChatClient::new(service, self.config.models.chat.clone()).with_retries(self.config.max_retries, backoff))
    }

    fn loss(&self) -> anyhow::Result<LossOracle> {
        Ok(match self.endpoint("loss", &self.config.endpoints.loss)? {
            Endpoint::Mock(d) => LossOracle::mock(self.fixtures(&d)?.loss_rule),
            Endpoint::Http(u) => {
                let mut o = LossOracle::remote(Arc::new(self.http(u)), self.config.models.loss.clone());
                o.max_retries = self.config.max_retries;
                o
            }
        })
    }

    fn hints(&self, kind: HintArg, probe_size: usize) -> anyhow::Result<GradientHintProvider> {
        Ok(match kind {
            HintArg::Probe => GradientHintProvider::ProbeSurrogate { probe_size },
            HintArg::Remote => match self.endpoint("gradient", &self.config.endpoints.gradient)? {
                Endpoint::Mock(d) => GradientHintProvider::remote(Arc::new(self.fixtures(&d)?.gradient())),
                Endpoint::Http(u) => GradientHintProvider::remote(Arc::new(self.http(u))),
            },
        })
    }

    fn perception_model_id(&self) -> String {
        match self.config.endpoints.segmentation.as_deref() {
            Some(e) if e.starts_with("mock:") => format!("mock:{}", self.config.models.perception),
            _ => self.config.models.perception.clone(),
        }
    }

    fn services(&self) -> anyhow::Result<Services> {
        Ok(Services {
            segmenter: self.segmenter()?,
            captioner: self.captioner()?,
            perception_model_id: self.perception_model_id(),
            chat: self.chat()?,
            segment_params: self.config.segment.clone(),
            story_retries: self.config.story_retries,
            context_limit: self.config.context_limit,
        })
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn resolve_prompt(path: Option<&Path>, labels: &LabelSet) -> anyhow::Result<SocialPrompt> {
    match path {
        Some(p) => Ok(PromptFile::load(p).with_context(|| format!("loading prompt {}", p.display()))?),
        None => builtin_prompt(&labels.name).map_err(|e| {
            anyhow!(UsageError(format!("{e}; pass --prompt for custom label sets")))
        }),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into())
}

fn cache_for(config: &Config) -> Cache {
    config.cache_dir.as_ref().map(Cache::new).unwrap_or_default()
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(&cli)?;
    let cache = cache_for(&config);
    let mut manifest = RunManifest::start(command_name(&cli.command), &config);
    let backends = Backends::new(&config);

    match &cli.command {
        Command::Perceive { images, out } => {
            let services = backends.services()?;
            let mut stdout = String::new();
            for path in images {
                let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
                let image = LoadedImage::decode(bytes)?;
                let bundle = cached_bundle(&image, &services, &cache)
                    .with_context(|| format!("perceiving {}", path.display()))?;
                match out {
                    Some(dir) => write_or_print(Some(&dir.join(format!("{}.bundle.json", stem(path)))), &pretty(&bundle))?,
                    None => stdout.push_str(&(serde_json::to_string(&bundle)? + "\n")),
                }
            }
            write_or_print(None, &stdout)?;
        }
        Command::Narrate { bundles, out } => {
            let services = backends.services()?;
            manifest.prompt_versions.insert("fusion".into(), FUSION_PROMPT_VERSION.into());
            let mut stdout = String::new();
            for path in bundles {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let bundle: PerceptionBundle = serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))?;
                bundle.validate()?;
                let story = cached_story(&bundle, &services, &cache)?;
                let name = stem(path);
                let name = name.strip_suffix(".bundle").unwrap_or(&name);
                match out {
                    Some(dir) => write_or_print(Some(&dir.join(format!("{name}.story.json"))), &pretty(&story))?,
                    None => stdout.push_str(&(serde_json::to_string(&story)? + "\n")),
                }
            }
            write_or_print(None, &stdout)?;
        }
        Command::Reason { dataset, prompt, split, out } => {
            let labels = LabelSet::resolve(&config.label_set)?;
            let prompt = resolve_prompt(prompt.as_deref(), &labels)?;
            manifest.prompt_versions.insert("reasoning".into(), prompt.version_id());
            manifest.prompt_versions.insert("fusion".into(), FUSION_PROMPT_VERSION.into());
            let data = load_dataset(dataset, &labels)?;
            let records = split.select(&data);
            if records.is_empty() {
                bail!(storyreason::Error::Dataset(format!("no records in split {split:?}")));
            }
            let services = backends.services()?;
            let predictions = predict_all(&records, &services, &prompt, &labels, &cache, config.parallelism);
            let failed = predictions.iter().filter(|p| p.failure.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} of {} records failed", predictions.len());
            }
            write_or_print(out.as_deref(), &predictions_to_jsonl(&predictions))?;
        }
        Command::Optimize(args) => optimize(args, &config, &backends, &cache, &mut manifest)?,
        Command::Evaluate { predictions, dataset, split, out } => {
            let labels = LabelSet::resolve(&config.label_set)?;
            let data = load_dataset(dataset, &labels)?;
            let text = std::fs::read_to_string(predictions)
                .with_context(|| format!("reading {}", predictions.display()))?;
            let preds = predictions_from_jsonl(&text)?;
            let report = evaluate(&split.select(&data), &preds)?;
            eprintln!("accuracy {:.4} ({}/{})", report.accuracy, report.correct, report.total);
            let json = pretty(&report);
            if let Some(p) = out {
                write_or_print(Some(p), &json)?;
            }
            print!("{json}");
        }
        Command::MockServe { fixtures, addr } => {
            let fx = MockFixtures::load(fixtures)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr.as_str()).await?;
                eprintln!("mock services listening on http://{}", listener.local_addr()?);
                serve::serve(listener, &fx).await
            })?;
        }
    }

    if let Some(path) = &cli.manifest {
        manifest.finish(cache.hits(), cache.misses());
        write_or_print(Some(path), &pretty(&manifest))?;
    }
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Perceive { .. } => "perceive",
        Command::Narrate { .. } => "narrate",
        Command::Reason { .. } => "reason",
        Command::Optimize(_) => "optimize",
        Command::Evaluate { .. } => "evaluate",
        Command::MockServe { .. } => "mock-serve",
    }
}

#[derive(Serialize)]
struct OptimizeResult {
    /// Segment kind to chosen candidate id.
    selection: BTreeMap<String, String>,
    indices: Vec<usize>,
    initial_full_loss: f64,
    final_full_loss: f64,
    config: GspoConfig,
    seed: u64,
    examples: usize,
    skipped_records: Vec<String>,
    iterations: usize,
    overflow_penalties: usize,
    prompt: PromptFile,
}

fn optimize(
    args: &OptimizeArgs,
    config: &Config,
    backends: &Backends,
    cache: &Cache,
    manifest: &mut RunManifest,
) -> anyhow::Result<()> {
    let labels = LabelSet::resolve(&config.label_set)?;
    let pools = SegmentCandidates::load(&args.pools)
        .with_context(|| format!("loading pools {}", args.pools.display()))?;
    let data = load_dataset(&args.dataset, &labels)?;
    let records = args.split.select(&data);
    if records.is_empty() {
        bail!(storyreason::Error::Dataset(format!("no records in split {:?}", args.split)));
    }

    let mut cfg: GspoConfig = config.gspo.clone();
    cfg.k = args.k.unwrap_or(cfg.k);
    cfg.n = args.n.unwrap_or(cfg.n);
    cfg.batch_size = args.batch.unwrap_or(cfg.batch_size);
    cfg.probe_size = args.probe.unwrap_or(cfg.probe_size);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.incumbent_guard = !args.no_guard;
    cfg.validate().map_err(|e| anyhow!(UsageError(e.to_string())))?;
    manifest.seeds.push(cfg.seed);
    manifest.prompt_versions.insert("fusion".into(), FUSION_PROMPT_VERSION.into());

    let services = backends.services()?;
    let prepared = map_bounded(&records, config.parallelism, |r| prepare(r, &services, cache));
    let mut examples: Vec<TrainExample> = Vec::new();
    let mut skipped = Vec::new();
    for (r, p) in records.iter().zip(prepared) {
        match p {
            Ok(p) => examples.push(p.train_example(&r.gold_label)),
            Err(f) => {
                log::warn!("skipping {}: {}", r.record_id, f.message());
                skipped.push(r.record_id.clone());
            }
        }
    }
    if examples.is_empty() {
        bail!(storyreason::Error::Dataset("no usable training examples".into()));
    }

    let oracle = backends.loss()?;
    let hints = backends.hints(args.hints, cfg.probe_size)?;
    let objective = PromptObjective::new(pools.clone(), examples, oracle, config.context_limit)?;
    let initial = Selection::first(pools.pools.len());
    let all: Vec<usize> = (0..objective.examples.len()).collect();
    let initial_loss = batch_loss(&objective, &initial, &all)?;

    std::fs::create_dir_all(&args.out)?;
    let trace_path = args.out.join("trace.jsonl");
    let outcome = match gspo_run(&cfg, initial, &objective, &hints) {
        Ok(o) => o,
        Err(e) => {
            e.trace.write_jsonl(&trace_path)?;
            return Err(anyhow::Error::new(e).context("optimization aborted; partial trace written"));
        }
    };
    outcome.trace.write_jsonl(&trace_path)?;

    let final_loss = batch_loss(&objective, &outcome.selection, &all)?;
    let prompt = pools.prompt_for(&outcome.selection)?;
    manifest.prompt_versions.insert("optimized".into(), prompt.version_id());
    let result = OptimizeResult {
        selection: pools
            .describe(&outcome.selection)
            .into_iter()
            .map(|(k, id)| (k.to_string(), id))
            .collect(),
        indices: outcome.selection.indices.clone(),
        initial_full_loss: initial_loss,
        final_full_loss: final_loss,
        seed: cfg.seed,
        config: cfg.clone(),
        examples: objective.examples.len(),
        skipped_records: skipped,
        iterations: outcome.trace.records.len(),
        overflow_penalties: objective.overflow_count(),
        prompt: PromptFile {
            version: prompt.version_id(),
            segments: prompt.segments().into_iter().cloned().collect(),
        },
    };
    write_or_print(Some(&args.out.join("result.json")), &pretty(&result))?;
    eprintln!("train loss {initial_loss:.4} -> {final_loss:.4} ({})", prompt.version_id());
    Ok(())
}
