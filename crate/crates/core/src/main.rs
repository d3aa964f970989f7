use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use metaembed::corpus::{split_seeded, synthetic_clustered, Dataset, FileFormat, SyntheticSpec};
use metaembed::evalkit::{audit_params, evaluate, EvalSplit, ParamAudit};
use metaembed::trainer::{
    entity_embeddings, load_checkpoint, save_checkpoint, train_coarse_with, train_fine_with, Checkpoint, Hooks,
    NoObserver, StageMarker, TrainConfig, TrainLog,
};

const CONFIG_ENV: &str = "METAEMBED_CONFIG";

#[derive(Parser)]
#[command(name = "metaembed", version, about = "Coarse-to-fine meta-embeddings for graph recommenders")]
struct Cli {
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset directory from interaction files or a synthetic generator.
    Prepare(PrepareArgs),
    /// Train the coarse codebook and assignment.
    TrainCoarse(TrainArgs),
    /// Train the fine codebook on top of a coarse checkpoint.
    TrainFine(TrainArgs),
    /// Rank all items per user and report NDCG/Recall.
    Evaluate(EvaluateArgs),
    /// Count stored parameters of a checkpoint or of a hypothetical shape.
    AuditParams(AuditArgs),
    /// Dump checkpoint arrays as plain text.
    Export(ExportArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Single interaction file, split 80/10/10 per user.
    #[arg(long, conflicts_with_all = ["train", "synthetic"])]
    input: Option<PathBuf>,
    #[arg(long, conflicts_with = "synthetic")]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    valid: Option<PathBuf>,
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    /// pair | adjacency
    #[arg(long, default_value = "pair")]
    format: String,
    /// `users=U items=I blocks=B density=p seed=s` (space or comma separated).
    #[arg(long, num_args = 1..)]
    synthetic: Option<Vec<String>>,
    /// Seed of the per-user split used with --input.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by `prepare`.
    #[arg(long)]
    data: PathBuf,
    /// Coarse checkpoint (train-fine only).
    #[arg(long)]
    coarse: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Flat `key = value` config file; falls back to $METAEMBED_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the small desk-scale preset instead of the full defaults.
    #[arg(long)]
    desk: bool,
    /// Overrides, e.g. `--set d=64 --set lr_coarse=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Epoch CSV log (epoch,loss,val_ndcg20). Defaults to `<out>.log.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    cutoffs: Vec<usize>,
    /// test | valid
    #[arg(long, default_value = "test")]
    split: String,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, conflicts_with = "shape", required_unless_present = "shape")]
    checkpoint: Option<PathBuf>,
    /// `entities=N t_c=2 m_c=300 d=128 m_r=100 t_r=5 fine_density=0.5`
    #[arg(long, num_args = 1..)]
    shape: Option<Vec<String>>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory for `header.txt` and one text file per array.
    #[arg(long)]
    out: PathBuf,
}

fn key_values(tokens: &[String]) -> Result<Vec<(String, String)>> {
    tokens
        .iter()
        .flat_map(|t| t.split(','))
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (k, v) = t.split_once('=').with_context(|| format!("expected key=value, got '{t}'"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn cmd_prepare(a: PrepareArgs) -> Result<()> {
    let format: FileFormat = a.format.parse()?;
    let ds = if let Some(tokens) = &a.synthetic {
        let mut spec = SyntheticSpec::default();
        for (k, v) in key_values(tokens)? {
            match k.as_str() {
                "users" => spec.users = v.parse()?,
                "items" => spec.items = v.parse()?,
                "blocks" => spec.blocks = v.parse()?,
                "density" => spec.density = v.parse()?,
                "seed" => spec.seed = v.parse()?,
                other => bail!("unknown synthetic key '{other}'"),
            }
        }
        synthetic_clustered(&spec)?
    } else if let Some(input) = &a.input {
        let loaded = metaembed::corpus::load_interactions(input, format)?;
        let set = split_seeded(loaded.set.num_users, loaded.set.num_items, loaded.set.train, a.seed)?;
        Dataset { set, ..loaded }
    } else if let Some(train) = &a.train {
        metaembed::corpus::load_splits(train, a.valid.as_deref(), a.test.as_deref(), format)?
    } else {
        bail!("one of --input, --train or --synthetic is required");
    };
    ds.save_dir(&a.out)?;
    info!("{}", metaembed::corpus::dataset_stats(&ds.set));
    println!("wrote {}", a.out.display());
    Ok(())
}

/// Defaults (or `base`), then the config file, then `--set` flags.
fn effective_config(a: &TrainArgs, base: Option<TrainConfig>) -> Result<TrainConfig> {
    let mut cfg = base.unwrap_or_else(|| if a.desk { TrainConfig::desk() } else { TrainConfig::default() });
    let file = a.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    if let Some(path) = file {
        cfg.apply_file(&path).with_context(|| format!("reading config {}", path.display()))?;
    }
    for (k, v) in key_values(&a.overrides)? {
        cfg.set(&k, &v)?;
    }
    cfg.validate()?;
    if cfg.threads > 0 {
        // Fails only if the pool was already built, in which case the old size stays.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    info!("effective config:\n{}", cfg.to_text().trim_end());
    Ok(cfg)
}

fn write_log(a: &TrainArgs, log: &TrainLog) -> Result<()> {
    let path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log.csv"));
    fs::write(&path, log.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_train_coarse(a: TrainArgs) -> Result<()> {
    let ds = Dataset::load_dir(&a.data)?;
    let cfg = effective_config(&a, None)?;
    let rescue = with_suffix(&a.out, ".diverged");
    let hooks = Hooks {
        observer: &mut NoObserver,
        emergency_checkpoint: Some(&rescue),
    };
    let out = train_coarse_with(&ds.set, &cfg, hooks)?;
    let ck = Checkpoint {
        config: cfg,
        stage: StageMarker::Coarse,
        num_users: ds.set.num_users,
        num_items: ds.set.num_items,
        coarse: out.state,
        fine: None,
        epoch: out.epochs,
        best_metric: out.best_metric,
    };
    save_checkpoint(&a.out, &ck)?;
    write_log(&a, &out.log)?;
    println!("coarse: {} epochs, best val ndcg@20 {:.6}", out.epochs, out.best_metric);
    Ok(())
}

fn cmd_train_fine(a: TrainArgs) -> Result<()> {
    let ds = Dataset::load_dir(&a.data)?;
    let coarse_path = a.coarse.clone().context("train-fine needs --coarse <checkpoint>")?;
    let coarse = load_checkpoint(&coarse_path)?;
    check_data(&coarse, &ds)?;
    let cfg = effective_config(&a, Some(coarse.config.clone()))?;
    coarse.check_compatible(&cfg)?;
    let rescue = with_suffix(&a.out, ".diverged");
    let hooks = Hooks {
        observer: &mut NoObserver,
        emergency_checkpoint: Some(&rescue),
    };
    let out = train_fine_with(&ds.set, &coarse.coarse, &cfg, hooks)?;
    let ck = Checkpoint {
        config: cfg,
        stage: StageMarker::Fine,
        num_users: ds.set.num_users,
        num_items: ds.set.num_items,
        coarse: coarse.coarse,
        fine: Some(out.state),
        epoch: out.epochs,
        best_metric: out.best_metric,
    };
    save_checkpoint(&a.out, &ck)?;
    write_log(&a, &out.log)?;
    println!("fine: {} epochs, best val ndcg@20 {:.6}", out.epochs, out.best_metric);
    Ok(())
}

fn check_data(ck: &Checkpoint, ds: &Dataset) -> Result<()> {
    if ck.num_users != ds.set.num_users || ck.num_items != ds.set.num_items {
        bail!(
            "checkpoint covers {} users / {} items but the dataset has {} / {}",
            ck.num_users,
            ck.num_items,
            ds.set.num_users,
            ds.set.num_items
        );
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let ds = Dataset::load_dir(&a.data)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    check_data(&ck, &ds)?;
    let split = match a.split.as_str() {
        "test" => EvalSplit::Test,
        "valid" | "validation" => EvalSplit::Validation,
        other => bail!("unknown split '{other}' (test|valid)"),
    };
    let h = entity_embeddings(&ds.set, &ck.coarse, ck.fine.as_ref(), ck.config.num_layers)?;
    let table = evaluate(&h, &ds.set, split, &a.cutoffs)?;
    match &a.out {
        Some(p) => fs::write(p, table.to_csv()).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{}", table.to_csv()),
    }
    Ok(())
}

fn cmd_audit(a: AuditArgs) -> Result<()> {
    let audit = if let Some(path) = &a.checkpoint {
        let ck = load_checkpoint(path)?;
        audit_params(&ck.coarse, ck.fine.as_ref())
    } else {
        let mut n = None;
        let (mut t_c, mut m_c, mut d) = (2usize, 300usize, 128usize);
        let (mut m_r, mut t_r, mut frac) = (None::<usize>, 5usize, 0.5f64);
        for (k, v) in key_values(a.shape.as_deref().unwrap_or_default())? {
            match k.as_str() {
                "entities" => n = Some(v.parse()?),
                "t_c" => t_c = v.parse()?,
                "m_c" => m_c = v.parse()?,
                "d" => d = v.parse()?,
                "m_r" => m_r = Some(v.parse()?),
                "t_r" => t_r = v.parse()?,
                "fine_density" => frac = v.parse()?,
                other => bail!("unknown shape key '{other}'"),
            }
        }
        let n = n.context("--shape needs entities=N")?;
        ParamAudit::from_shape(n, t_c, m_c, d, m_r.map(|m| (m, t_r, frac)))
    };
    print!("{audit}");
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let write = |name: &str, body: String| -> Result<()> {
        let p = a.out.join(name);
        fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
    };
    let dense = |m: &metaembed::numerics::DenseMatrix| -> String {
        let mut s = String::new();
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    };
    let sparse = |m: &metaembed::graphkit::SparseMatrix| -> String {
        let mut s = format!("# {} {}\n", m.rows(), m.cols());
        for (r, c, v) in m.triplets() {
            s.push_str(&format!("{r} {c} {v:?}\n"));
        }
        s
    };
    let mut header = format!(
        "stage = {:?}\nnum_users = {}\nnum_items = {}\nepoch = {}\nbest_metric = {:?}\n",
        ck.stage, ck.num_users, ck.num_items, ck.epoch, ck.best_metric
    );
    header.push_str(&ck.config.to_text());
    write("header.txt", header)?;
    write("e_meta_c.txt", dense(&ck.coarse.e_meta_c))?;
    write("s_c.txt", sparse(&ck.coarse.s_c))?;
    if let Some(fs) = &ck.fine {
        write("e_meta_r.txt", dense(&fs.e_meta_r))?;
        write("s_r.txt", sparse(&fs.s_r))?;
    }
    println!("exported to {}", a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::TrainCoarse(a) => cmd_train_coarse(a),
        Command::TrainFine(a) => cmd_train_fine(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::AuditParams(a) => cmd_audit(a),
        Command::Export(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
