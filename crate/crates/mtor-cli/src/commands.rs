//! Implementations of the four subcommands.

use std::path::Path;
use std::time::Instant;

use serde_json::json;

use mtor::baselines::{train_stl_deep, train_stl_shallow};
use mtor::data::{load_csv, synthesize, write_csv, DataError, IngestSpec, SynthSpec};
use mtor::dataset::MultiTaskDataset;
use mtor::deep::{train_dmtor, DeepError, DmtorArchitecture, SgdConfig};
use mtor::eval::{accuracy, kfold_select_lambda, mae, EvalError, EvalReport, TaskMetrics};
use mtor::optimizer::{train_rmtor, AlternatingConfig, FistaConfig, OptimError};

use crate::manifest::{fingerprint_file, RunManifest};
use crate::model_file::{
    load_model, write_json, CvFile, ModelFile, ModelPayload, ReportFile, TruthFile, SCHEMA_VERSION,
};
use crate::{CliError, CsvArgs, CvArgs, EvalArgs, GenerateArgs, ModelKind, TrainArgs};

fn data_error(err: DataError) -> CliError {
    match err {
        DataError::InvalidSpec(msg) => CliError::Usage(msg),
        other => CliError::Data(other.to_string()),
    }
}

fn optim_error(err: OptimError) -> CliError {
    match err {
        OptimError::Config(msg) => CliError::Usage(msg),
        OptimError::NonFinite { .. } => CliError::Numerical(err.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn deep_error(err: DeepError) -> CliError {
    match err {
        DeepError::Config(msg) | DeepError::InvalidArchitecture(msg) => CliError::Usage(msg),
        DeepError::NonFinite { .. } => CliError::Numerical(err.to_string()),
        DeepError::Optim(inner) => optim_error(inner),
        other => CliError::Data(other.to_string()),
    }
}

fn eval_error(err: EvalError) -> CliError {
    match err {
        EvalError::BadFraction(_)
        | EvalError::BadFoldCount(_)
        | EvalError::EmptyGrid
        | EvalError::NonPositiveLambda(_) => CliError::Usage(err.to_string()),
        EvalError::Optim(inner) => optim_error(inner),
        other => CliError::Data(other.to_string()),
    }
}

fn ingest_spec(path: &Path, csv: &CsvArgs) -> Result<IngestSpec, CliError> {
    if !csv.delimiter.is_ascii() {
        return Err(CliError::Usage(format!(
            "delimiter must be a single ASCII character, got `{}`",
            csv.delimiter
        )));
    }
    Ok(IngestSpec {
        path: path.to_path_buf(),
        label_column: csv.label_column.clone(),
        task_column: csv.task_column.clone(),
        feature_columns: csv.feature_columns.clone(),
        add_bias_feature: csv.bias,
        delimiter: csv.delimiter as u8,
        num_classes_override: csv.classes,
    })
}

fn load_dataset(path: &Path, csv: &CsvArgs) -> Result<MultiTaskDataset, CliError> {
    let loaded = load_csv(&ingest_spec(path, csv)?).map_err(data_error)?;
    for warning in &loaded.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(loaded.dataset)
}

pub fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    if args.classes < 2 {
        return Err(CliError::Usage(format!(
            "--classes must be at least 2, got {}",
            args.classes
        )));
    }
    if args.tasks == 0 {
        return Err(CliError::Usage("--tasks must be positive".into()));
    }
    let per_task_n = match args.n.len() {
        1 => vec![args.n[0]; args.tasks],
        len if len == args.tasks => args.n.clone(),
        len => {
            return Err(CliError::Usage(format!(
                "--n needs 1 or {} values, got {len}",
                args.tasks
            )))
        }
    };
    let spec = SynthSpec {
        num_tasks: args.tasks,
        per_task_n,
        num_features: args.features,
        num_classes: args.classes,
        task_relatedness: args.rho,
        noise_sd: args.noise,
        sparsity: args.sparsity,
        seed: args.seed,
    };
    let output = synthesize(&spec).map_err(data_error)?;
    write_csv(&output.dataset, &args.out, b',').map_err(data_error)?;
    let truth_path = args
        .truth
        .clone()
        .unwrap_or_else(|| args.out.with_extension("truth.json"));
    let manifest = if args.no_manifest {
        None
    } else {
        let fingerprint = fingerprint_file(&args.out)
            .map_err(|e| CliError::Data(format!("cannot hash {}: {e}", args.out.display())))?;
        Some(RunManifest::new(
            serde_json::to_value(&spec).expect("spec serializes"),
            args.seed,
            fingerprint,
            start.elapsed().as_secs_f64(),
        ))
    };
    write_json(
        &truth_path,
        &TruthFile {
            schema_version: SCHEMA_VERSION,
            spec,
            true_weights: output.true_weights,
            true_thresholds: output.true_thresholds,
            manifest,
        },
    )?;
    println!(
        "wrote {} rows to {} (ground truth: {})",
        output.dataset.total_instances(),
        args.out.display(),
        truth_path.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let start = Instant::now();
    match (args.model, args.setting) {
        (ModelKind::Rmtor | ModelKind::Dmtor, crate::SettingArg::Mtl) => {}
        (ModelKind::Rmtor | ModelKind::Dmtor, _) => {
            return Err(CliError::Usage(
                "--setting global/individual only applies to stl models; \
                 rmtor and dmtor always train jointly (--setting mtl)"
                    .into(),
            ));
        }
        (ModelKind::StlShallow | ModelKind::StlDeep, crate::SettingArg::Mtl) => {
            return Err(CliError::Usage(
                "--model stl-* needs --setting global or --setting individual".into(),
            ));
        }
        _ => {}
    }
    if args.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let data = load_dataset(&args.data, &args.csv)?;
    let variant = args.variant.into();
    let fista_cfg = FistaConfig {
        max_iterations: args.max_iterations,
        tolerance: args.fista_tolerance,
        initial_gamma: args.initial_gamma,
        backtrack_factor: args.backtrack_factor,
    };
    let alt_cfg = AlternatingConfig {
        outer_max: args.outer_max,
        outer_tolerance: args.outer_tolerance,
        threshold_steps: args.threshold_steps,
        threshold_lr: args.threshold_lr,
        min_gap: args.min_gap,
    };
    let sgd_cfg = SgdConfig {
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: args.seed,
    };
    let payload = match args.model {
        ModelKind::Rmtor => {
            let model = train_rmtor(&data, variant, args.lambda, &fista_cfg, &alt_cfg)
                .map_err(optim_error)?;
            println!(
                "trained rmtor: {} outer iterations, final objective {:.6}",
                model.training_log.len().saturating_sub(1),
                model.final_objective().unwrap_or(f64::NAN)
            );
            ModelPayload::Rmtor(model)
        }
        ModelKind::Dmtor => {
            let arch = DmtorArchitecture::new(
                args.shared_widths.clone(),
                args.task_widths.clone(),
                data.num_tasks(),
                data.num_features(),
                data.num_classes(),
            )
            .map_err(deep_error)?;
            let arch = if args.no_bias_layers {
                arch.without_bias()
            } else {
                arch
            };
            let model = train_dmtor(&data, variant, &arch, &sgd_cfg).map_err(deep_error)?;
            println!(
                "trained dmtor: {} epochs, final epoch loss {:.6}",
                model.epoch_loss.len(),
                model.epoch_loss.last().copied().unwrap_or(f64::NAN)
            );
            ModelPayload::Dmtor(model)
        }
        ModelKind::StlShallow => {
            let setting = args.setting.stl_setting().expect("checked above");
            let set = train_stl_shallow(
                &data,
                setting,
                variant,
                args.lambda,
                &fista_cfg,
                &alt_cfg,
                args.threads,
            )
            .map_err(optim_error)?;
            println!("trained {} shallow single-task model(s)", set.models.len());
            ModelPayload::StlShallow(set)
        }
        ModelKind::StlDeep => {
            let setting = args.setting.stl_setting().expect("checked above");
            let arch = DmtorArchitecture::new(
                args.shared_widths.clone(),
                args.task_widths.clone(),
                data.num_tasks(),
                data.num_features(),
                data.num_classes(),
            )
            .map_err(deep_error)?;
            let set = train_stl_deep(&data, setting, variant, &arch, &sgd_cfg, args.threads)
                .map_err(deep_error)?;
            println!("trained {} deep single-task model(s)", set.models.len());
            ModelPayload::StlDeep(set)
        }
    };
    let manifest = if args.no_manifest {
        None
    } else {
        let fingerprint = fingerprint_file(&args.data)
            .map_err(|e| CliError::Data(format!("cannot hash {}: {e}", args.data.display())))?;
        Some(RunManifest::new(
            json!({
                "model": format!("{:?}", args.model),
                "variant": format!("{:?}", args.variant),
                "setting": format!("{:?}", args.setting),
                "lambda": args.lambda,
                "fista": fista_cfg,
                "alternating": alt_cfg,
                "sgd": sgd_cfg,
                "shared_widths": args.shared_widths,
                "task_widths": args.task_widths,
                "threads": args.threads,
            }),
            args.seed,
            fingerprint,
            start.elapsed().as_secs_f64(),
        ))
    };
    write_json(
        &args.out,
        &ModelFile {
            schema_version: SCHEMA_VERSION,
            model: payload,
            manifest,
        },
    )?;
    println!("model written to {}", args.out.display());
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let model_file = load_model(&args.model)?;
    let data = load_dataset(&args.data, &args.csv)?;
    let expected = model_file.model.num_features();
    if expected != data.num_features() {
        return Err(CliError::Data(format!(
            "feature dimension mismatch: model expects G={expected}, dataset has G={}",
            data.num_features()
        )));
    }
    let mut rows = Vec::with_capacity(data.num_tasks());
    for task in data.tasks() {
        let mut predicted = Vec::with_capacity(task.num_instances());
        for j in 0..task.num_instances() {
            predicted.push(model_file.model.predict(task.id(), task.instance(j))?);
        }
        rows.push(TaskMetrics {
            task_id: task.id().to_string(),
            n_instances: task.num_instances(),
            accuracy: accuracy(task.labels(), &predicted).map_err(eval_error)?,
            mae: mae(task.labels(), &predicted).map_err(eval_error)?,
        });
    }
    let report = EvalReport::from_task_metrics(rows);
    print_report_table(&report, model_file.model.type_name());
    let manifest = if args.no_manifest {
        None
    } else {
        let fingerprint = fingerprint_file(&args.data)
            .map_err(|e| CliError::Data(format!("cannot hash {}: {e}", args.data.display())))?;
        Some(RunManifest::new(
            json!({
                "model_file": args.model.display().to_string(),
                "model_type": model_file.model.type_name(),
            }),
            0,
            fingerprint,
            start.elapsed().as_secs_f64(),
        ))
    };
    write_json(
        &args.out,
        &ReportFile {
            schema_version: SCHEMA_VERSION,
            report,
            manifest,
        },
    )?;
    println!("report written to {}", args.out.display());
    Ok(())
}

fn print_report_table(report: &EvalReport, model_type: &str) {
    println!("model: {model_type}");
    println!("{:<16} {:>8} {:>10} {:>10}", "task", "n", "accuracy", "mae");
    for row in &report.per_task {
        println!(
            "{:<16} {:>8} {:>10.4} {:>10.4}",
            row.task_id, row.n_instances, row.accuracy, row.mae
        );
    }
    println!(
        "{:<16} {:>8} {:>10.4} {:>10.4}",
        "overall", report.overall.n_instances, report.overall.accuracy, report.overall.mae
    );
}

pub fn cv(args: CvArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let data = load_dataset(&args.data, &args.csv)?;
    let fista_cfg = FistaConfig {
        max_iterations: args.max_iterations,
        ..FistaConfig::default()
    };
    let alt_cfg = AlternatingConfig {
        outer_max: args.outer_max,
        ..AlternatingConfig::default()
    };
    let selection = kfold_select_lambda(
        &data,
        args.variant.into(),
        &args.grid,
        args.k,
        &fista_cfg,
        &alt_cfg,
        args.seed,
    )
    .map_err(eval_error)?;
    println!("{:>12} {:>16}", "lambda", "mean accuracy");
    for row in &selection.scores {
        println!("{:>12} {:>16.4}", row.lambda, row.mean_accuracy);
    }
    println!("selected lambda: {}", selection.best_lambda);
    let manifest = if args.no_manifest {
        None
    } else {
        let fingerprint = fingerprint_file(&args.data)
            .map_err(|e| CliError::Data(format!("cannot hash {}: {e}", args.data.display())))?;
        Some(RunManifest::new(
            json!({
                "grid": args.grid,
                "k": args.k,
                "variant": format!("{:?}", args.variant),
            }),
            args.seed,
            fingerprint,
            start.elapsed().as_secs_f64(),
        ))
    };
    write_json(
        &args.out,
        &CvFile {
            schema_version: SCHEMA_VERSION,
            selection,
            manifest,
        },
    )?;
    println!("cv report written to {}", args.out.display());
    Ok(())
}
