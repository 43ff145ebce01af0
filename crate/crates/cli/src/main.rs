use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use statenet::harness::{
    evaluate, export_filter_grid, format_misclassified, predict, report_file_name, report_misclassified, train,
    write_report, EvalSplit, EvaluationReport, TrainingConfig, TrainingHistory, HISTORY_FILE, LAST_CHECKPOINT,
};
use statenet::imgpipe::{Split, CLASS_NAMES};
use statenet::modelzoo::load_checkpoint;
use statenet::tensor::set_deterministic;
use statenet::{Error, Result};

#[derive(Parser)]
#[command(
    name = "statenet",
    version,
    about = "Cooking-object-state classifier: train, evaluate and inspect tuned VGG-16 models"
)]
struct Cli {
    /// Force deterministic kernels (same as STATENET_DETERMINISTIC=1).
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a `<data>/<class>/*.ppm` tree.
    Train {
        /// `key = value` config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Weight manifest whose matching layers initialise the network.
        #[arg(long)]
        base_weights: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Config override, repeatable: `--set epochs=10`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint and write `report_<split>.tsv` beside it.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset root, or the external directory when `--split dir`.
        #[arg(long)]
        data: PathBuf,
        /// train, val, test or dir.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Classify one P6 image.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Write history.csv and history.svg for a run directory.
    ExportHistory {
        #[arg(long)]
        run: PathBuf,
    },
    /// Render a convolution layer's kernels as a P5 grid.
    Filters {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        layer: String,
        /// Defaults to `filters_<layer>.pgm` next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List misclassified samples from a saved evaluation report.
    Misclassified {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 20)]
        limit: usize,
        /// Report to read; defaults to the first of test, val, dir, train present.
        #[arg(long)]
        split: Option<String>,
    },
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn beside(file: &Path, name: &str) -> PathBuf {
    file.parent().unwrap_or(Path::new(".")).join(name)
}

fn print_report(r: &EvaluationReport) {
    println!(
        "split {}: {} / {} correct, accuracy {:.4}",
        r.split,
        r.correct(),
        r.total(),
        r.accuracy()
    );
    println!("confusion (rows true, columns predicted):");
    println!(
        "{:>13} {}",
        "",
        CLASS_NAMES.map(|c| format!("{:>7}", &c[..c.len().min(7)])).join("")
    );
    for (i, row) in r.confusion.iter().enumerate() {
        let cells: String = row.iter().map(|c| format!("{c:>7}")).collect();
        let acc = r.per_class_accuracy()[i].map_or("-".to_string(), |a| format!("{a:.3}"));
        println!("{:>13} {cells}   {acc}", CLASS_NAMES[i]);
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.deterministic {
        set_deterministic(true);
    }
    match cli.command {
        Command::Train {
            config,
            data,
            base_weights,
            out,
            overrides,
        } => {
            let mut cfg = match &config {
                Some(p) => TrainingConfig::parse(&read(p)?)?,
                None => TrainingConfig::default(),
            };
            cfg.apply_overrides(&overrides)?;
            if cli.deterministic {
                cfg.deterministic = true;
            }
            let outcome = train(&cfg, &data, base_weights.as_deref(), &out, &mut |r| {
                eprintln!(
                    "epoch {:>3}  train loss {:.4} acc {:.4}  val loss {:.4} acc {:.4}",
                    r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
                );
            })?;
            println!(
                "trained {} epochs; best epoch {} (val acc {:.4}); {} layers loaded, {} frozen; run dir {}",
                outcome.history.records.len(),
                outcome.best_epoch,
                outcome.history.records[outcome.best_epoch - 1].val_acc,
                outcome.load_report.loaded.len(),
                outcome.frozen_layers.len(),
                outcome.run_dir.display()
            );
        }
        Command::Eval {
            checkpoint,
            data,
            split,
        } => {
            let which = match split.as_str() {
                "dir" => EvalSplit::Dir(data.clone()),
                s => EvalSplit::Named(s.parse::<Split>()?),
            };
            let report = evaluate(&checkpoint, &data, &which)?;
            let path = write_report(checkpoint.parent().unwrap_or(Path::new(".")), &report)?;
            print_report(&report);
            println!("report written to {}", path.display());
        }
        Command::Predict { checkpoint, image } => {
            let p = predict(&checkpoint, &image)?;
            println!("{}", p.class_name);
            for (name, prob) in CLASS_NAMES.iter().zip(p.probabilities) {
                println!("{name}\t{prob:.6}");
            }
        }
        Command::ExportHistory { run } => {
            let history = TrainingHistory {
                records: load_checkpoint(&run.join(LAST_CHECKPOINT))?.history,
            };
            let svg = history.to_svg()?;
            write(&run.join(HISTORY_FILE), history.to_csv())?;
            write(&run.join("history.svg"), svg)?;
            println!(
                "wrote {} and {}",
                run.join(HISTORY_FILE).display(),
                run.join("history.svg").display()
            );
        }
        Command::Filters { checkpoint, layer, out } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let arch = ckpt.model.build()?;
            let pgm = export_filter_grid(&arch, &ckpt.params, &layer)?;
            let out = out.unwrap_or_else(|| beside(&checkpoint, &format!("filters_{layer}.pgm")));
            write(&out, pgm)?;
            println!("wrote {}", out.display());
        }
        Command::Misclassified { run, limit, split } => {
            let candidates: Vec<String> = match split {
                Some(s) => vec![s],
                None => ["test", "val", "dir", "train"].map(String::from).to_vec(),
            };
            let path = candidates
                .iter()
                .map(|s| run.join(report_file_name(s)))
                .find(|p| p.is_file())
                .ok_or_else(|| {
                    Error::Data(format!(
                        "no evaluation report in {}; run `statenet eval` first",
                        run.display()
                    ))
                })?;
            let report = EvaluationReport::decode(&read(&path)?)?;
            print!("{}", format_misclassified(&report_misclassified(&report, limit)));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("statenet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
