use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use phpvul::classify::{classify_remote, classify_rule, Prediction};
use phpvul::config::PipelineConfig;
use phpvul::dataset::{self, Label, Ratios, Sample, Split};
use phpvul::dedup::dedup;
use phpvul::eval::{Confusion, Report};
use phpvul::pipeline::{
    extract_project, project_dirs, project_hosts, scan_project, Classifier, PipelineOptions,
};
use phpvul::sinks::{SinkKind, SinkRules};
use phpvul::synth::{synthesize_with, RawSample};

/// Extract, preprocess, synthesize and evaluate snippet-level PHP
/// vulnerability samples (CWE-79, CWE-89).
#[derive(Parser)]
#[command(name = "phpvul", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// 79 or 89 (also `CWE-79`).
    #[arg(long, global = true)]
    cwe: Option<SinkKind>,
    /// Keep literals and variable names as they are.
    #[arg(long, global = true)]
    no_normalize: bool,
    /// Sink rules file overriding the built-in rules.
    #[arg(long, global = true)]
    rules: Option<PathBuf>,
    /// Also append diagnostics to this file.
    #[arg(long, global = true)]
    log: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Slice every sink candidate of a project into samples.
    Extract {
        dir: PathBuf,
        /// Treat each subdirectory of DIR as its own project.
        #[arg(long)]
        projects_root: bool,
        /// `id<TAB>label` file.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        no_dedup: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Insert labeled samples into host code from a project.
    Synth {
        #[arg(long, required = true)]
        raw: Vec<PathBuf>,
        #[arg(long)]
        hosts: PathBuf,
        #[arg(long)]
        projects_root: bool,
        /// Rounds per (sample, host) pair.
        #[arg(short = 'T', long)]
        rounds: Option<usize>,
        #[arg(long)]
        select_simple: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Split samples into PREFIX.{train,val,test}.jsonl.
    Split {
        #[arg(long, value_enum)]
        mode: SplitMode,
        #[arg(long)]
        input: PathBuf,
        /// Synthetic samples; required for provenance checks in project mode.
        #[arg(long)]
        synthetic: Option<PathBuf>,
        /// `train,val,test`.
        #[arg(long)]
        ratios: Option<Ratios>,
        #[arg(short, long)]
        output: String,
    },
    /// Drop near-duplicate samples.
    Dedup {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Per-CWE dataset statistics.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compare predictions with ground-truth labels.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Extract and classify every candidate of a project.
    Scan {
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "rule")]
        classifier: ClassifierKind,
        /// Service base URL; overrides the configuration.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Predict labels for a sample file.
    Classify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "rule")]
        classifier: ClassifierKind,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitMode {
    Random,
    Project,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierKind {
    Rule,
    Remote,
}

/// Failure classes, mapped to exit codes 1 and 2.
enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

trait InputErr<T> {
    fn input(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> InputErr<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }
}

struct Log(Option<File>);

impl Log {
    fn line(&mut self, msg: impl AsRef<str>) {
        let msg = msg.as_ref();
        eprintln!("{msg}");
        if let Some(f) = &mut self.0 {
            let _ = writeln!(f, "{msg}");
        }
    }
}

struct Ctx {
    cfg: PipelineConfig,
    rules: SinkRules,
    log: Log,
}

impl Ctx {
    fn options(&self) -> PipelineOptions {
        PipelineOptions {
            cwe: self.cfg.cwe,
            rules: self.rules.clone(),
            normalize: self.cfg.normalize.clone(),
        }
    }

    fn classifier(
        &self,
        kind: ClassifierKind,
        endpoint: Option<String>,
    ) -> Result<Classifier, Failure> {
        Ok(match kind {
            ClassifierKind::Rule => Classifier::Rule,
            ClassifierKind::Remote => {
                let mut ep = self.cfg.endpoint.clone();
                if let Some(url) = endpoint {
                    let mut e = ep.unwrap_or_else(|| phpvul::classify::EndpointConfig::new(&url));
                    e.base_url = url;
                    e.validate().map_err(|m| Failure::Input(anyhow!(m)))?;
                    ep = Some(e);
                }
                Classifier::Remote(ep.ok_or_else(|| {
                    Failure::Input(anyhow!(
                        "remote classifier needs --endpoint, endpoint.url or {}",
                        phpvul::config::ENDPOINT_ENV
                    ))
                })?)
            }
        })
    }
}

fn load(path: &Path) -> Result<Vec<Sample>, Failure> {
    dataset::load(path).input()
}

fn persist(samples: &[Sample], path: &Path) -> Result<(), Failure> {
    dataset::persist(samples, path).input()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).context("serializing report")?;
    fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .input()
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = cli.global;
    let mut cfg = PipelineConfig::from_env();
    if let Some(path) = &g.config {
        cfg = PipelineConfig::load(path, cfg).input()?;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(cwe) = g.cwe {
        cfg.cwe = cwe;
    }
    if g.no_normalize {
        cfg.normalize.enabled = false;
    }
    if let Some(r) = g.rules {
        cfg.rules = Some(r);
    }
    match &cli.command {
        Command::Synth {
            rounds,
            select_simple,
            ..
        } => {
            if let Some(t) = rounds {
                cfg.synth.rounds = *t;
            }
            cfg.synth.select_simple |= select_simple;
        }
        Command::Split {
            ratios: Some(r), ..
        } => cfg.ratios = *r,
        Command::Dedup {
            threshold: Some(t), ..
        } => cfg.dedup.threshold = *t,
        _ => {}
    }
    cfg.synth.seed = cfg.seed;
    cfg.validate().input()?;

    let log_file = match &g.log {
        Some(p) => Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .with_context(|| format!("opening log {}", p.display()))
                .input()?,
        ),
        None => None,
    };
    let rules = match &cfg.rules {
        Some(p) => SinkRules::load(p).input()?,
        None => SinkRules::default(),
    };
    let mut ctx = Ctx {
        cfg,
        rules,
        log: Log(log_file),
    };
    ctx.log.line(format!(
        "# resolved configuration\n{}",
        ctx.cfg.to_string().trim_end()
    ));

    match cli.command {
        Command::Extract {
            dir,
            projects_root,
            labels,
            no_dedup,
            output,
        } => {
            let labels = match labels {
                Some(p) => {
                    let text = fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))
                        .input()?;
                    Some(dataset::parse_labels(&text).map_err(|(line, m)| {
                        Failure::Input(anyhow!("{}:{line}: {m}", p.display()))
                    })?)
                }
                None => None,
            };
            let opts = ctx.options();
            let mut samples = Vec::new();
            for (project, root) in project_dirs(&dir, projects_root).input()? {
                let ex = extract_project(&root, &project, &opts).input()?;
                ctx.log.line(format!(
                    "{project}: {} file(s), {} sample(s), {} discarded, {} skipped",
                    ex.files,
                    ex.samples.len(),
                    ex.discarded,
                    ex.skipped.len()
                ));
                for s in &ex.skipped {
                    ctx.log.line(format!("  skipped {}: {}", s.file, s.reason));
                }
                samples.extend(ex.samples);
            }
            if !no_dedup {
                let before = samples.len();
                samples = dedup(&samples, &ctx.cfg.dedup);
                ctx.log
                    .line(format!("dedup removed {}", before - samples.len()));
            }
            if let Some(labels) = labels {
                let unmatched = dataset::apply_labels(&mut samples, &labels);
                if !unmatched.is_empty() {
                    ctx.log
                        .line(format!("{} label(s) matched no sample", unmatched.len()));
                }
            }
            persist(&samples, &output)?;
            ctx.log.line(format!(
                "wrote {} sample(s) to {}",
                samples.len(),
                output.display()
            ));
        }

        Command::Synth {
            raw,
            hosts,
            projects_root,
            output,
            ..
        } => {
            let mut raws = Vec::new();
            let mut unlabeled = 0;
            for p in &raw {
                for s in load(p)? {
                    match RawSample::from_sample(&s) {
                        Some(r) => raws.push(r),
                        None => unlabeled += 1,
                    }
                }
            }
            if unlabeled > 0 {
                ctx.log
                    .line(format!("ignored {unlabeled} unlabeled raw sample(s)"));
            }
            let mut units = Vec::new();
            for (project, root) in project_dirs(&hosts, projects_root).input()? {
                let (h, skipped) = project_hosts(&root, &project).input()?;
                for s in skipped {
                    ctx.log
                        .line(format!("  skipped host {}: {}", s.file, s.reason));
                }
                units.extend(h);
            }
            let (samples, report) = synthesize_with(
                &raws,
                &units,
                &ctx.cfg.synth,
                &ctx.cfg.normalize,
                &ctx.rules,
            );
            ctx.log.line(format!(
                "{} raw sample(s) x {} host(s) x {} round(s)\n{}",
                raws.len(),
                units.len(),
                ctx.cfg.synth.rounds,
                report.to_string().trim_end()
            ));
            persist(&samples, &output)?;
            ctx.log.line(format!(
                "wrote {} sample(s) to {}",
                samples.len(),
                output.display()
            ));
        }

        Command::Split {
            mode,
            input,
            synthetic,
            output,
            ..
        } => {
            let real = load(&input)?;
            let syn = match &synthetic {
                Some(p) => load(p)?,
                None => Vec::new(),
            };
            let samples = match mode {
                SplitMode::Random => {
                    let all: Vec<Sample> = real.into_iter().chain(syn).collect();
                    dataset::split_random(&all, &ctx.cfg.ratios, ctx.cfg.seed).input()?
                }
                SplitMode::Project => {
                    let out =
                        dataset::split_project_disjoint(&real, &syn, &ctx.cfg.ratios, ctx.cfg.seed)
                            .input()?;
                    for w in &out.warnings {
                        ctx.log.line(format!("warning: {w}"));
                    }
                    for (reason, n) in out.drop_counts() {
                        ctx.log
                            .line(format!("dropped {n} synthetic sample(s): {reason}"));
                    }
                    out.samples
                }
            };
            for split in Split::ALL {
                let part: Vec<Sample> = samples
                    .iter()
                    .filter(|s| s.split == Some(split))
                    .cloned()
                    .collect();
                let path = PathBuf::from(format!("{output}.{split}.jsonl"));
                persist(&part, &path)?;
                ctx.log.line(format!(
                    "{split}: {} sample(s) -> {}",
                    part.len(),
                    path.display()
                ));
            }
        }

        Command::Dedup { input, output, .. } => {
            let samples = load(&input)?;
            let kept = dedup(&samples, &ctx.cfg.dedup);
            ctx.log
                .line(format!("kept {} of {}", kept.len(), samples.len()));
            persist(&kept, &output)?;
        }

        Command::Stats { input, json } => {
            let st = dataset::stats(&load(&input)?);
            print!("{st}");
            if let Some(p) = json {
                write_json(&p, &st)?;
            }
        }

        Command::Eval { preds, truth, json } => {
            let truth = load(&truth)?;
            let preds = load_predictions(&preds).input()?;
            let mut c = Confusion::default();
            for s in &truth {
                let t = s.label.ok_or_else(|| {
                    Failure::Input(anyhow!("truth sample `{}` has no label", s.id))
                })?;
                let p = preds
                    .get(&s.id)
                    .ok_or_else(|| Failure::Input(anyhow!("no prediction for `{}`", s.id)))?;
                c.add(*p, t);
            }
            if preds.len() > truth.len() {
                ctx.log.line(format!(
                    "{} prediction(s) have no ground truth",
                    preds.len() - truth.len()
                ));
            }
            let report = Report::new(c);
            print!("{report}");
            if let Some(p) = json {
                write_json(&p, &report)?;
            }
        }

        Command::Scan {
            dir,
            classifier,
            endpoint,
            json,
        } => {
            let classifier = ctx.classifier(classifier, endpoint)?;
            let report = scan_project(&dir, &ctx.options(), &classifier).input()?;
            print!("{report}");
            if let Some(p) = json {
                write_json(&p, &report)?;
            }
        }

        Command::Classify {
            input,
            classifier,
            endpoint,
            output,
        } => {
            let samples = load(&input)?;
            let preds: Vec<Prediction> = match ctx.classifier(classifier, endpoint)? {
                Classifier::Rule => classify_rule(&samples, &ctx.rules),
                Classifier::Remote(cfg) => classify_remote(&samples, &cfg).input()?,
            };
            let mut text = String::new();
            for p in &preds {
                text.push_str(&serde_json::to_string(p).context("serializing prediction")?);
                text.push('\n');
            }
            fs::write(&output, text)
                .with_context(|| format!("writing {}", output.display()))
                .input()?;
            ctx.log.line(format!(
                "wrote {} prediction(s) to {}",
                preds.len(),
                output.display()
            ));
        }
    }
    Ok(())
}

/// Predictions by sample id. Each line needs `sample_id` (or `id`) and
/// `label`, so both prediction files and labeled sample files work.
fn load_predictions(path: &Path) -> anyhow::Result<BTreeMap<String, Label>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}:{}", path.display(), i + 1);
        let v: Value = serde_json::from_str(line).with_context(at)?;
        let id = v
            .get("sample_id")
            .or_else(|| v.get("id"))
            .and_then(Value::as_str)
            .ok_or_else(|| anyhow!("{}: missing `sample_id`", at()))?;
        let label: Label = v
            .get("label")
            .and_then(Value::as_str)
            .ok_or_else(|| anyhow!("{}: missing `label`", at()))?
            .parse()
            .map_err(|e: String| anyhow!("{}: {e}", at()))?;
        if out.insert(id.to_string(), label).is_some() {
            bail!("{}: duplicate prediction for `{id}`", at());
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}
