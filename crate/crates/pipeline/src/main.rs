use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use aqg_core::{ground, Aqg, KnowledgeBase, LinkingResults};
use aqg_neural::{generate, ModelParams};
use aqg_pipeline::{
    ablate, read_jsonl, run_e2e, synth_generate, write_jsonl, AblationVariant, DatasetRecord, ExperimentConfig,
    Mode, SynthSpec,
};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "aqg", about = "Question answering over a triple store via abstract query graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic KB and train/dev/test splits.
    Synth {
        /// JSON synthetic spec; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a generator on `<data>/train.jsonl`, selecting by `<data>/dev.jsonl`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        verbose: bool,
    },
    /// Generate the AQG of one question record.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        /// JSON file holding one dataset record.
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Ground an AQG against the KB and print the candidate queries.
    Ground {
        #[arg(long)]
        aqg: PathBuf,
        #[arg(long)]
        linking: PathBuf,
        #[arg(long)]
        kb: PathBuf,
    },
    /// Evaluate on a test set; writes metrics.json and trace.jsonl.
    Eval {
        /// Required unless the config selects `st` or `oracle_aqg` mode.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate the ablation matrix on a synthetic data directory.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated subset of full,no-attention,no-skip,no-graph-encoder,no-kb-constraint.
        #[arg(long, default_value = "full,no-attention,no-skip,no-graph-encoder,no-kb-constraint")]
        variants: String,
        /// Comma-separated subset of dfs,bfs,random.
        #[arg(long, default_value = "dfs")]
        traversals: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn config(path: Option<&Path>) -> Result<ExperimentConfig> {
    path.map_or_else(|| Ok(ExperimentConfig::default()), read_json)
}

fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::load_tsv(path).with_context(|| format!("loading {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Synth { spec, seed, out } => {
            let spec: SynthSpec = spec.as_deref().map_or_else(|| Ok(SynthSpec::default()), read_json)?;
            let data = synth_generate(&spec, seed)?;
            fs::create_dir_all(&out)?;
            let kb_path = out.join("kb.tsv");
            let file = fs::File::create(&kb_path).with_context(|| format!("writing {}", kb_path.display()))?;
            data.kb.write_tsv(std::io::BufWriter::new(file))?;
            write_jsonl(&out.join("train.jsonl"), &data.train)?;
            write_jsonl(&out.join("dev.jsonl"), &data.dev)?;
            write_jsonl(&out.join("test.jsonl"), &data.test)?;
            eprintln!(
                "{} triples, {} train / {} dev / {} test questions in {}",
                data.kb.len(),
                data.train.len(),
                data.dev.len(),
                data.test.len(),
                out.display()
            );
        }
        Cmd::Train {
            data,
            config: cfg,
            out,
            verbose,
        } => {
            let mut cfg = config(cfg.as_deref())?;
            cfg.train.verbose |= verbose;
            let train = read_jsonl(&data.join("train.jsonl"))?;
            let dev_path = data.join("dev.jsonl");
            let dev = if dev_path.exists() { read_jsonl(&dev_path)? } else { Vec::new() };
            let (p, report) = cfg.train_model(&train, &dev)?;
            p.save(&out)?;
            eprintln!("best epoch {} of {}", report.best_epoch, report.epochs.len());
        }
        Cmd::Generate {
            checkpoint,
            kb,
            record,
            config: cfg,
        } => {
            let cfg = config(cfg.as_deref())?;
            let p = ModelParams::load(&checkpoint)?;
            let kb = load_kb(&kb)?;
            let rec: DatasetRecord = read_json(&record)?;
            let g = generate(&p, &rec.tokens()?, &rec.linking, &kb, &cfg.run.generate);
            println!("{}", serde_json::to_string_pretty(&g)?);
        }
        Cmd::Ground { aqg, linking, kb } => {
            let g: Aqg = read_json(&aqg)?;
            let r: LinkingResults = read_json(&linking)?;
            let kb = load_kb(&kb)?;
            println!("{}", serde_json::to_string_pretty(&ground(&g, &r, &kb).queries)?);
        }
        Cmd::Eval {
            checkpoint,
            kb,
            test,
            config: cfg,
            out,
        } => {
            let cfg = config(cfg.as_deref())?;
            let p = match checkpoint {
                Some(path) => Some(ModelParams::load(&path)?),
                None if cfg.run.mode == Mode::Aqg => bail!("--checkpoint is required in aqg mode"),
                None => None,
            };
            let kb = load_kb(&kb)?;
            let test = read_jsonl(&test)?;
            let run = run_e2e(p.as_ref(), &kb, &test, &cfg.run)?;
            fs::create_dir_all(&out)?;
            write_json(&out.join("metrics.json"), &run.report)?;
            write_jsonl(&out.join("trace.jsonl"), &run.trace)?;
            println!("{}", serde_json::to_string_pretty(&run.report)?);
        }
        Cmd::Ablate {
            data,
            config: cfg,
            variants,
            traversals,
            out,
        } => {
            let cfg = config(cfg.as_deref())?;
            let variants = variants
                .split(',')
                .map(|v| AblationVariant::parse(v.trim()).with_context(|| format!("unknown variant {v:?}")))
                .collect::<Result<Vec<_>>>()?;
            let traversals: Vec<String> = traversals.split(',').map(|t| t.trim().to_string()).collect();
            let kb = load_kb(&data.join("kb.tsv"))?;
            let train = read_jsonl(&data.join("train.jsonl"))?;
            let dev = read_jsonl(&data.join("dev.jsonl"))?;
            let test = read_jsonl(&data.join("test.jsonl"))?;
            let rows = ablate(&kb, &train, &dev, &test, &cfg, &variants, &traversals)?;
            let levels: Vec<usize> = {
                let mut l: Vec<usize> = test.iter().map(|r| r.level()).collect();
                l.sort_unstable();
                l.dedup();
                l
            };
            print!("{:<18} {:<9} {:>7} {:>7}", "variant", "traversal", "aqg", "f1");
            for l in &levels {
                print!(" {:>7}", format!("L{l}"));
            }
            println!();
            for row in &rows {
                print!(
                    "{:<18} {:<9} {:>7.3} {:>7.3}",
                    row.variant.name(),
                    row.traversal,
                    row.report.aqg_accuracy,
                    row.report.f1
                );
                for l in &levels {
                    let acc = row.report.levels.iter().find(|m| m.level == *l).map_or(0.0, |m| m.aqg_accuracy);
                    print!(" {acc:>7.3}");
                }
                println!();
            }
            if let Some(out) = out {
                write_json(&out, &rows)?;
            }
        }
    }
    Ok(())
}
