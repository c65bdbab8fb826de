use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use mokd::eval::{evaluate_with, query_similarity_export, similarity_export, EvalOptions};
use mokd::hsic::{select_bandwidth, BandwidthGrid, BandwidthSelection, DependenceTarget, DEFAULT_COEFFICIENTS};
use mokd::tasks::{load_embeddings, save_embeddings, save_embeddings_csv, synth_dataset, task_rng, SynthParams};

use crate::config::{parse_list, EvalSettings};
use crate::{CliError, EvalArgs, HsicArgs, LabelSource, SynthArgs, TableFormat};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let params = SynthParams {
        n_classes: args.classes,
        per_class: args.per_class,
        dim: args.dim,
        separation: args.separation,
        noise: args.noise,
    };
    let dataset = synth_dataset(&params, &mut task_rng(args.seed, 0))?;
    let saved =
        if is_csv(&args.out) { save_embeddings_csv(&dataset, &args.out) } else { save_embeddings(&dataset, &args.out) };
    saved.map_err(|e| io_err(&args.out, e))?;
    writeln!(
        out,
        "wrote {} classes x {} rows, dim {} to {}",
        args.classes,
        args.per_class,
        args.dim,
        args.out.display()
    )
    .map_err(|e| CliError::Io(e.to_string()))
}

fn load(path: &Path) -> Result<mokd::tasks::EmbeddingDataset, CliError> {
    load_embeddings(path).map_err(|e| match e {
        mokd::Error::Io(_) | mokd::Error::Format(_) => io_err(path, e),
        other => other.into(),
    })
}

pub fn write_table(sel: &BandwidthSelection, format: TableFormat, out: &mut dyn Write) -> std::io::Result<()> {
    match format {
        TableFormat::Csv => {
            writeln!(out, "coefficient,sigma,hsic,variance,power_ratio,selected")?;
            for (i, row) in sel.table.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    row.coefficient,
                    row.sigma,
                    row.value,
                    row.variance,
                    row.power_ratio,
                    u8::from(i == sel.index)
                )?;
            }
        }
        TableFormat::Table => {
            writeln!(
                out,
                "{:>12} {:>13} {:>13} {:>13} {:>13}",
                "coefficient", "sigma", "hsic", "variance", "power_ratio"
            )?;
            for (i, row) in sel.table.iter().enumerate() {
                writeln!(
                    out,
                    "{:>12} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e}{}",
                    row.coefficient,
                    row.sigma,
                    row.value,
                    row.variance,
                    row.power_ratio,
                    if i == sel.index { "  *" } else { "" }
                )?;
            }
            writeln!(
                out,
                "selected: coefficient {} sigma {:.6e} (median base {:.6e})",
                sel.coefficient, sel.sigma, sel.base_sigma
            )?;
        }
    }
    Ok(())
}

pub fn hsic(args: &HsicArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let coefficients = match (&args.coeff, &args.grid) {
        (Some(c), _) => vec![*c],
        (None, Some(list)) => parse_list("--grid", list)?,
        (None, None) => DEFAULT_COEFFICIENTS.to_vec(),
    };
    let grid = BandwidthGrid::new(coefficients, args.epsilon)?;
    let dataset = load(&args.embeddings)?;
    let (z, labels) = dataset.flatten()?;
    let target = match args.labels_from {
        LabelSource::File => DependenceTarget::Labels(&labels),
        LabelSource::Embedded => DependenceTarget::Embeddings(&z),
    };
    let selection = select_bandwidth(&z, target, args.kernel, &grid)?;
    write_table(&selection, args.format, out).map_err(|e| CliError::Io(e.to_string()))
}

/// Defaults, then the config file, then explicit flags.
pub fn eval_settings(args: &EvalArgs) -> Result<EvalSettings, CliError> {
    let mut s = EvalSettings::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        s.apply_file(&text)?;
    }
    if let Some(v) = args.episodes {
        s.episodes = v;
    }
    if let Some(v) = args.seed {
        s.seed = v;
    }
    if let Some(v) = args.loss {
        s.loss = v;
    }
    if let Some(v) = args.gamma {
        s.gamma = v;
    }
    if let Some(v) = args.lr {
        s.learning_rate = v;
    }
    if let Some(v) = args.steps {
        s.steps = v;
    }
    if let Some(v) = args.weight_decay {
        s.weight_decay = v;
    }
    if let Some(v) = args.kernel {
        s.kernel_family = v;
    }
    if let Some(v) = args.share_zz {
        s.share_zz_coefficient = v;
    }
    if let Some(v) = args.epsilon {
        s.epsilon = v;
    }
    if args.no_normalize {
        s.normalize_features = false;
    }
    if let Some(v) = args.n_max {
        s.n_max = v;
    }
    if args.ways.is_some() || args.shots.is_some() || args.queries.is_some() {
        s.ways = args.ways;
        s.shots = args.shots;
        s.queries = args.queries;
    }
    Ok(s)
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let settings = eval_settings(args)?;
    let adapt = settings.adapt_config()?;
    let sampler = settings.sampler_config()?;
    if args.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let dataset = load(&args.embeddings)?;
    if let Some(dir) = &args.dump_heatmaps {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }

    let dump_error: Mutex<Option<CliError>> = Mutex::new(None);
    let report = evaluate_with(
        &dataset,
        &sampler,
        &adapt,
        settings.episodes,
        settings.seed,
        EvalOptions { jobs: args.jobs },
        &|i, task, result| {
            if args.verbose {
                eprintln!(
                    "episode {i}: ways {} support {} accuracy {:.4} final_loss {:.6}",
                    task.n_ways(),
                    task.support.rows(),
                    result.query_accuracy,
                    result.final_loss()
                );
            }
            if let Some(dir) = &args.dump_heatmaps {
                let ext = args.heatmap_format.to_string();
                let support = dir.join(format!("support_{i:04}.{ext}"));
                let query = dir.join(format!("query_{i:04}.{ext}"));
                let written = similarity_export(result, &support, args.heatmap_format)
                    .and_then(|_| query_similarity_export(result, &query, args.heatmap_format));
                if let Err(e) = written {
                    dump_error.lock().unwrap().get_or_insert(io_err(dir, e));
                }
            }
        },
    )?;
    if let Some(e) = dump_error.into_inner().unwrap() {
        return Err(e);
    }

    let n = report.per_episode.len() as f64;
    let mean_ways = report.per_episode.iter().map(|e| e.ways as f64).sum::<f64>() / n;
    let mean_support = report.per_episode.iter().map(|e| e.support_size as f64).sum::<f64>() / n;
    let mean_loss = report.per_episode.iter().map(|e| e.final_loss).sum::<f64>() / n;
    let write = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "dataset        {}", dataset.name())?;
        writeln!(out, "loss           {}", adapt.loss)?;
        writeln!(out, "episodes       {}", report.episodes)?;
        writeln!(out, "mean_accuracy  {:.6}", report.mean_accuracy)?;
        writeln!(out, "ci95           {:.6}", report.ci95)?;
        writeln!(out, "mean_ways      {mean_ways:.2}")?;
        writeln!(out, "mean_support   {mean_support:.2}")?;
        writeln!(out, "mean_loss      {mean_loss:.6}")
    };
    write(out).map_err(|e| CliError::Io(e.to_string()))
}
