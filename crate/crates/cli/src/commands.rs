use std::fs;
use std::path::Path;

use log::{info, warn};
use sgnn_core::lab::{battery_csv, run_battery, BatteryConfig};
use sgnn_core::linqs::{import_linqs, RandomSplit};
use sgnn_core::params_io::{load_params, save_params};
use sgnn_core::{
    argmax_rows, f1_micro, full_forward, load_dataset, prepare_inputs, write_dataset, Dataset, Error,
    SamplerKind, TrainConfig, TrainOutcome, Trainer,
};

use crate::config::RunConfig;
use crate::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let dir = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| CliError::Usage("no dataset given (use --dataset DIR or 'dataset = DIR')".into()))?;
    let ds = load_dataset(dir)?;
    info!(
        "{}: {} nodes, {} edges, {} features, {} classes, {}/{}/{} train/val/test",
        dir.display(),
        ds.graph.num_nodes(),
        ds.graph.num_edges(),
        ds.features.dim(),
        ds.labels.num_classes(),
        ds.split.train().len(),
        ds.split.val().len(),
        ds.split.test().len()
    );
    Ok(ds)
}

fn train_once(ds: &Dataset, config: TrainConfig, out: &Path) -> Result<TrainOutcome, CliError> {
    create_dir(out)?;
    info!("training {} for {} epochs, seed {}", config.sampler.name(), config.epochs, config.seed);
    let outcome = Trainer::new(ds, config)?.run(|r| {
        info!(
            "epoch {:>4}  loss {:.4}  val {:.4}  test {:.4}  {:.2}s (sampling {:.2}s)",
            r.epoch, r.train_loss, r.val_f1, r.test_f1, r.epoch_sec, r.sampling_sec
        )
    })?;
    outcome.log.write(out.join("metrics.csv"))?;
    save_params(out.join("params.txt"), &outcome.best_params)?;
    save_params(out.join("params_final.txt"), &outcome.final_params)?;
    write_file(&out.join("summary.csv"), &summary_csv(&outcome))?;
    Ok(outcome)
}

fn summary_csv(o: &TrainOutcome) -> String {
    format!(
        "best_epoch,best_val_f1,test_f1,final_test_f1\n{},{:.6},{:.6},{:.6}\n",
        o.best_epoch, o.best_val_f1, o.test_f1, o.final_test_f1
    )
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = dataset(cfg)?;
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join("config.txt"), &cfg.training_config_text())?;
    let outcome = train_once(&ds, cfg.train.clone(), &cfg.out)?;
    print!("{}", summary_csv(&outcome));
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg
        .params
        .as_ref()
        .ok_or_else(|| CliError::Usage("no parameter file given (use --params PATH)".into()))?;
    let ds = dataset(cfg)?;
    let params = load_params(path)?;
    let (adj, x) = prepare_inputs(&ds, &cfg.train);
    if params.input_dim() != x.cols() || params.output_dim() != ds.labels.num_classes() {
        return Err(Error::Shape(format!(
            "{} maps {} features to {} classes but the dataset has {} features and {} classes",
            path.display(),
            params.input_dim(),
            params.output_dim(),
            x.cols(),
            ds.labels.num_classes()
        ))
        .into());
    }
    let nodes = ds.split.get(cfg.split);
    if nodes.is_empty() {
        return Err(Error::Empty("evaluation split").into());
    }
    let fwd = full_forward(&adj, &x, &params)?;
    let f1 = f1_micro(&argmax_rows(fwd.logits()), &ds.labels, nodes)?;
    println!("split,nodes,f1_micro");
    println!("{},{},{f1:.6}", split_name(cfg.split), nodes.len());
    Ok(())
}

fn split_name(s: sgnn_core::SplitKind) -> &'static str {
    match s {
        sgnn_core::SplitKind::Train => "train",
        sgnn_core::SplitKind::Val => "val",
        sgnn_core::SplitKind::Test => "test",
    }
}

pub fn lab(cfg: &RunConfig) -> Result<(), CliError> {
    let battery = BatteryConfig {
        seed: cfg.train.seed,
        instances: cfg.lab_instances,
        trials: cfg.lab_trials,
        inject_bias: cfg.inject_bias,
    };
    info!(
        "lab battery: seed {}, {} instances, {} trials{}",
        battery.seed,
        battery.instances,
        battery.trials,
        if battery.inject_bias { ", biased estimator injected" } else { "" }
    );
    let rows = run_battery(&battery)?;
    create_dir(&cfg.out)?;
    let path = cfg.out.join("lab.csv");
    write_file(&path, &battery_csv(&rows))?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        warn!(
            "FAIL {} instance {}: {} = {:e} (threshold {:e})",
            r.check, r.instance, r.metric, r.value, r.threshold
        );
    }
    println!("{} checks, {} failed, report at {}", rows.len(), failed.len(), path.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Oracle(format!("{} of {} lab checks failed", failed.len(), rows.len())))
    }
}

pub fn ablate_init(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.train.sampler != SamplerKind::Layerwise {
        return Err(CliError::Usage(format!(
            "ablate-init needs the layerwise sampler, not {}",
            cfg.train.sampler.name()
        )));
    }
    let ds = dataset(cfg)?;
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join("config.txt"), &cfg.training_config_text())?;
    let mut table = String::from("run,hw_init,best_epoch,best_val_f1,test_f1,final_test_f1\n");
    for (name, init) in [("optimistic", cfg.train.hw_init), ("pessimistic", cfg.pessimistic_init)] {
        let config = TrainConfig {
            hw_init: init,
            ..cfg.train.clone()
        };
        let o = train_once(&ds, config, &cfg.out.join(name))?;
        table.push_str(&format!(
            "{name},{init},{},{:.6},{:.6},{:.6}\n",
            o.best_epoch, o.best_val_f1, o.test_f1, o.final_test_f1
        ));
    }
    write_file(&cfg.out.join("ablation.csv"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn prepare(content: &Path, cites: &Path, out: &Path, split: RandomSplit) -> Result<(), CliError> {
    let imp = import_linqs(content, cites, split)?;
    if imp.dropped_citations > 0 {
        warn!("dropped {} citations that name unknown papers", imp.dropped_citations);
    }
    write_dataset(out, &imp.dataset)?;
    let mut classes = String::from("label,class\n");
    for (k, c) in imp.classes.iter().enumerate() {
        classes.push_str(&format!("{k},{c}\n"));
    }
    write_file(&out.join("classes.csv"), &classes)?;
    let ds = &imp.dataset;
    println!(
        "wrote {}: {} nodes, {} edges, {} features, {} classes",
        out.display(),
        ds.graph.num_nodes(),
        ds.graph.num_edges(),
        ds.features.dim(),
        ds.labels.num_classes()
    );
    Ok(())
}
