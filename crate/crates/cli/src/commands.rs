use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fairadapt_core::eval::{
    format_bias_table, format_comparison_table, format_matrix_table, records_to_reports,
    reports_to_records, CellRecord,
};
use fairadapt_core::tfidf::{default_stopwords, load_stopwords};
use fairadapt_core::tuning::{coarse_grid, default_grid};
use fairadapt_core::{
    compare_bias, encode_dataset, generate_synthetic, grid_search, run_zero_shot,
    split_by_category, top_words, write_embeddings, BiasComparison, BiasReport, Category, Dataset,
    HashEncoderConfig, SynthSpec, TuneSpec, ZeroShot,
};
use serde::Serialize;

use crate::args::{self, Correctness, DebiasArgs, EmbeddingArgs, Format, TrainArgs};
use crate::{Cli, Command};

/// A command-line mistake detected after parsing; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Fills every defaulted-from-seed option so the resolved config stands alone.
fn resolve(cli: &mut Cli) {
    let seed = cli.seed;
    match &mut cli.command {
        Command::Encode { hash_seed, .. } => {
            hash_seed.get_or_insert(seed);
        }
        Command::Train {
            embedding, debias, ..
        }
        | Command::Eval {
            embedding, debias, ..
        }
        | Command::BiasReport {
            embedding, debias, ..
        } => {
            embedding.resolve(seed);
            debias.resolve(seed);
        }
        Command::Tune {
            embedding,
            pair_seed,
            ..
        } => {
            embedding.resolve(seed);
            pair_seed.get_or_insert(seed);
        }
        Command::Synth { .. } | Command::Tfidf { .. } => {}
    }
}

#[derive(Serialize)]
struct Resolved<'a> {
    invocation: Vec<String>,
    #[serde(flatten)]
    cli: &'a Cli,
}

fn resolved_json(cli: &Cli) -> String {
    let r = Resolved {
        invocation: std::env::args().collect(),
        cli,
    };
    let mut s = serde_json::to_string_pretty(&r).expect("config serializes");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Run directory for report commands; `None` writes to standard output only.
fn run_dir(cli: &Cli) -> Result<Option<PathBuf>> {
    match &cli.output {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_file(&dir.join("config.resolved"), &resolved_json(cli))?;
            Ok(Some(dir.clone()))
        }
        None => Ok(None),
    }
}

/// Output file for single-artifact commands, with its config written beside it.
fn output_file(cli: &Cli, what: &str) -> Result<PathBuf> {
    let path = cli
        .output
        .clone()
        .ok_or_else(|| usage(format!("{what} needs an output path (-o <file>)")))?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut side = path.clone().into_os_string();
    side.push(".config.resolved");
    write_file(Path::new(&side), &resolved_json(cli))?;
    Ok(path)
}

fn print(s: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(s.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item).expect("record serializes"));
        s.push('\n');
    }
    s
}

fn parse_category(s: &str) -> Result<Category> {
    Ok(s.parse::<Category>()?)
}

pub fn run(mut cli: Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    resolve(&mut cli);
    match &cli.command {
        Command::Synth {
            queries_per_cat,
            vocab,
            bias,
        } => {
            let spec = SynthSpec {
                queries_per_category: *queries_per_cat,
                vocab_size: *vocab,
                bias_strength: *bias,
                seed: cli.seed,
            };
            spec.validate()?;
            let path = output_file(&cli, "synth")?;
            let d = generate_synthetic(&spec)?;
            d.write(&path)?;
            log::info!("wrote {} examples to {}", d.len(), path.display());
            Ok(())
        }
        Command::Encode {
            dataset,
            hash_dim,
            hash_seed,
            no_normalize,
        } => {
            let cfg = HashEncoderConfig {
                dim: *hash_dim,
                seed: hash_seed.unwrap_or(cli.seed),
                normalize: !no_normalize,
            };
            cfg.validate()?;
            let path = output_file(&cli, "encode")?;
            let d = args::load(dataset)?;
            write_embeddings(&encode_dataset(&d, &cfg)?, &path)?;
            Ok(())
        }
        Command::Train {
            dataset,
            category,
            embedding,
            train,
            debias,
        } => {
            let path = output_file(&cli, "train")?;
            cmd_train(
                &cli,
                dataset,
                category.as_deref(),
                embedding,
                train,
                debias,
                &path,
            )
        }
        Command::Eval {
            dataset,
            embedding,
            train,
            debias,
            bias_correctness,
        } => {
            let dir = run_dir(&cli)?;
            let d = args::load(dataset)?;
            let z = zero_shot(&cli, &d, embedding, train, debias, *bias_correctness)?;
            let text = format!(
                "{}\n{}",
                format_matrix_table(&z.matrix),
                format_bias_table(&z.bias)
            );
            let records = jsonl(&reports_to_records(&z.matrix, &z.bias));
            if let Some(dir) = dir {
                write_file(&dir.join("matrix.txt"), &format_matrix_table(&z.matrix))?;
                write_file(&dir.join("bias.txt"), &format_bias_table(&z.bias))?;
                write_file(&dir.join("cells.jsonl"), &records)?;
            }
            print(match cli.format {
                Format::Text => &text,
                Format::Records => &records,
            })
        }
        Command::BiasReport {
            before,
            after,
            dataset,
            embedding,
            train,
            debias,
            bias_correctness,
        } => {
            let dir = run_dir(&cli)?;
            let (b, a) = match (before, after, dataset) {
                (Some(before), Some(after), _) => (read_cells(before)?, read_cells(after)?),
                (_, _, Some(dataset)) => {
                    if debias.config().is_none() {
                        return Err(usage("bias-report on a dataset needs a non-zero --alpha-*"));
                    }
                    let d = args::load(dataset)?;
                    let plain = DebiasArgs {
                        alpha_mf: 0.0,
                        alpha_mn: 0.0,
                        alpha_fn: 0.0,
                        ..debias.clone()
                    };
                    let zb = zero_shot(&cli, &d, embedding, train, &plain, *bias_correctness)?;
                    let za = zero_shot(&cli, &d, embedding, train, debias, *bias_correctness)?;
                    if let Some(dir) = &dir {
                        write_file(
                            &dir.join("cells_before.jsonl"),
                            &jsonl(&reports_to_records(&zb.matrix, &zb.bias)),
                        )?;
                        write_file(
                            &dir.join("cells_after.jsonl"),
                            &jsonl(&reports_to_records(&za.matrix, &za.bias)),
                        )?;
                    }
                    (zb.bias, za.bias)
                }
                _ => return Err(usage("pass --before and --after, or --dataset")),
            };
            let cmp = compare_bias(&b, &a)?;
            let text = comparison_text(&b, &a, &cmp);
            let records = jsonl(&cmp.rows);
            if let Some(dir) = dir {
                write_file(&dir.join("comparison.txt"), &text)?;
                write_file(&dir.join("comparison.jsonl"), &records)?;
            }
            print(match cli.format {
                Format::Text => &text,
                Format::Records => &records,
            })
        }
        Command::Tfidf {
            dataset,
            k,
            stopwords,
            include_queries,
        } => {
            let dir = run_dir(&cli)?;
            let d = args::load(dataset)?;
            let stop = match stopwords {
                Some(p) => load_stopwords(p)?,
                None => default_stopwords(),
            };
            let table = top_words(&d, *k, &stop, *include_queries)?;
            #[derive(Serialize)]
            struct Row<'a> {
                category: Category,
                rank: usize,
                word: &'a str,
                score: f64,
            }
            let rows: Vec<Row> = table
                .rows
                .iter()
                .flat_map(|(c, words)| {
                    words.iter().enumerate().map(|(i, (w, s))| Row {
                        category: *c,
                        rank: i + 1,
                        word: w,
                        score: *s,
                    })
                })
                .collect();
            let text = table.to_text();
            let records = jsonl(&rows);
            if let Some(dir) = dir {
                write_file(&dir.join("tfidf.txt"), &text)?;
                write_file(&dir.join("tfidf.jsonl"), &records)?;
            }
            print(match cli.format {
                Format::Text => &text,
                Format::Records => &records,
            })
        }
        Command::Tune {
            dataset,
            train_category,
            max_drop,
            coarse,
            grid,
            pair_seed,
            embedding,
            train,
            bias_correctness,
        } => {
            let dir = run_dir(&cli)?;
            let spec = TuneSpec {
                grid: match (grid, coarse) {
                    (Some(g), _) => g.clone(),
                    (None, true) => coarse_grid(),
                    (None, false) => default_grid(),
                },
                max_accuracy_drop: *max_drop,
                train_category: parse_category(train_category)?,
                seed: pair_seed.unwrap_or(cli.seed),
                bias_correctness: (*bias_correctness).into(),
            };
            spec.validate()?;
            let d = args::load(dataset)?;
            let store = embedding.load(&d)?;
            let r = grid_search(&d, &store, &train.config(cli.seed), &spec, cli.jobs)?;
            let trace = jsonl(&r.trace);
            let result = format!("{}\n", serde_json::to_string(&TuneSummary::from(&r))?);
            if let Some(dir) = dir {
                write_file(&dir.join("trace.jsonl"), &trace)?;
                write_file(&dir.join("result.json"), &result)?;
            }
            print(&match cli.format {
                Format::Text => tune_text(&r),
                Format::Records => result,
            })
        }
    }
}

fn cmd_train(
    cli: &Cli,
    dataset: &Path,
    category: Option<&str>,
    embedding: &EmbeddingArgs,
    train: &TrainArgs,
    debias: &DebiasArgs,
    path: &Path,
) -> Result<()> {
    let d = args::load(dataset)?;
    let d = match category {
        Some(c) => split_by_category(&d)
            .remove(&parse_category(c)?)
            .expect("all categories"),
        None => d,
    };
    let store = embedding.load(&d)?;
    let report = fairadapt_core::train_adapter_with_history(
        &d,
        &store,
        &train.config(cli.seed),
        debias.config().as_ref(),
    )?;
    report.weights.write(path)?;
    #[derive(Serialize)]
    struct Epoch {
        epoch: usize,
        loss: f64,
    }
    let epochs: Vec<Epoch> = report
        .epoch_loss
        .iter()
        .enumerate()
        .map(|(i, &loss)| Epoch { epoch: i + 1, loss })
        .collect();
    print(&match cli.format {
        Format::Text => epochs
            .iter()
            .map(|e| format!("epoch {:>3}  loss {:.6}\n", e.epoch, e.loss))
            .collect(),
        Format::Records => jsonl(&epochs),
    })
}

fn zero_shot(
    cli: &Cli,
    d: &Dataset,
    embedding: &EmbeddingArgs,
    train: &TrainArgs,
    debias: &DebiasArgs,
    mode: Correctness,
) -> Result<ZeroShot> {
    let store = embedding.load(d)?;
    Ok(run_zero_shot(
        d,
        &store,
        &train.config(cli.seed),
        debias.config().as_ref(),
        mode.into(),
        cli.jobs,
    )?)
}

fn read_cells(path: &Path) -> Result<BiasReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let records = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<CellRecord>(l).map_err(|e| fairadapt_core::Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(records_to_reports(&records)?)
}

fn comparison_text(before: &BiasReport, after: &BiasReport, cmp: &BiasComparison) -> String {
    format!(
        "Before\n{}\nAfter\n{}\n{}",
        format_bias_table(before),
        format_bias_table(after),
        format_comparison_table(cmp)
    )
}

#[derive(Serialize)]
struct TuneSummary {
    train_category: Category,
    alpha_mf: f64,
    alpha_mn: f64,
    alpha_fn: f64,
    feasible: bool,
    baseline_avg_star: f64,
    debiased_avg_star: f64,
    baseline_bias_gap: f64,
    debiased_bias_gap: f64,
    grid_points: usize,
}

impl From<&fairadapt_core::TuneResult> for TuneSummary {
    fn from(r: &fairadapt_core::TuneResult) -> Self {
        TuneSummary {
            train_category: r.train_category,
            alpha_mf: r.chosen[0],
            alpha_mn: r.chosen[1],
            alpha_fn: r.chosen[2],
            feasible: r.feasible,
            baseline_avg_star: r.baseline_avg_star,
            debiased_avg_star: r.debiased_avg_star,
            baseline_bias_gap: r.baseline_bias_gap,
            debiased_bias_gap: r.debiased_bias_gap,
            grid_points: r.trace.len(),
        }
    }
}

fn tune_text(r: &fairadapt_core::TuneResult) -> String {
    let mut s = format!("Train category: {}\n", r.train_category.label());
    s.push_str(&format!(
        "{:>8} {:>8} {:>8} {:>10} {:>10} {:>9}\n",
        "alpha_mf", "alpha_mn", "alpha_fn", "Average*", "|M-F|", "feasible"
    ));
    for p in &r.trace {
        s.push_str(&format!(
            "{:>8.2} {:>8.2} {:>8.2} {:>10.4} {:>10.4} {:>9}\n",
            p.alpha_mf,
            p.alpha_mn,
            p.alpha_fn,
            p.avg_star,
            p.avg_bias_gap,
            if p.feasible { "yes" } else { "no" }
        ));
    }
    s.push_str(&format!(
        "chosen ({:.2}, {:.2}, {:.2}){}\nAverage* {:.4} -> {:.4}\n|M-F|    {:.4} -> {:.4}\n",
        r.chosen[0],
        r.chosen[1],
        r.chosen[2],
        if r.feasible {
            ""
        } else {
            " [no feasible point; closest shown]"
        },
        r.baseline_avg_star,
        r.debiased_avg_star,
        r.baseline_bias_gap,
        r.debiased_bias_gap
    ));
    s
}
