use std::fs;
use std::path::{Path, PathBuf};

use cnl::checkpoint;
use cnl::gradsim::{write_report_csv, GradSimReport, SimGroupAssignment};
use cnl::harness::{
    analyze_at, prepare_seed, run_arm, ExperimentConfig, GroupForgetting, HoldoutIndices, Method, RunRecord, SeedSetup,
};
use cnl::models::evaluate_correctness;
use cnl::optim::write_diagnostics_csv;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;
use crate::output::{csv_with, seed_dir, write_json, write_text};

#[derive(Serialize)]
struct SplitSummary<'a> {
    seed: u64,
    config: &'a ExperimentConfig,
    reference_accuracy: f64,
    pretrain_loss: &'a [f64],
    lr: f64,
    mastered_indices: &'a [usize],
    injection_indices: &'a [usize],
    #[serde(skip_serializing_if = "Option::is_none")]
    holdout: Option<&'a HoldoutIndices>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    seed: u64,
    arm: &'a str,
    optimizer: &'a str,
    lr: f64,
    config: &'a ExperimentConfig,
    record: &'a RunRecord,
}

/// The fields `curves` needs from a run summary.
#[derive(Deserialize)]
struct RunHeader {
    arm: String,
    optimizer: String,
}

#[derive(Serialize)]
struct AnalysisSummary<'a> {
    seed: u64,
    config: &'a ExperimentConfig,
    checkpoint: Option<String>,
    report: &'a GradSimReport,
    groups: Option<&'a SimGroupAssignment>,
    group_forgetting: Option<&'a GroupForgetting>,
}

fn prepare(config: &ExperimentConfig, seed: u64) -> Result<SeedSetup, Failure> {
    prepare_seed(config, seed).map_err(|e| Failure::from_lib(&format!("seed {seed}"), e))
}

/// Counts per sub-task, then the total.
fn split_table(setup: &SeedSetup) -> String {
    let tasks = setup.task_ids.iter().copied().max().map_or(1, |m| m + 1);
    let mut mastered = vec![0usize; tasks];
    let mut injection = vec![0usize; tasks];
    for &i in &setup.split.mastered_indices {
        mastered[setup.task_ids[i]] += 1;
    }
    for &i in &setup.split.injection_indices {
        injection[setup.task_ids[i]] += 1;
    }
    let mut out = String::from("task,mastered,injection,total\n");
    for t in 0..tasks {
        out.push_str(&format!("{t},{},{},{}\n", mastered[t], injection[t], mastered[t] + injection[t]));
    }
    let (m, i) = (setup.split.mastered_indices.len(), setup.split.injection_indices.len());
    out.push_str(&format!("all,{m},{i},{}\n", m + i));
    out
}

fn write_split(config: &ExperimentConfig, setup: &SeedSetup, dir: &Path) -> Result<(), Failure> {
    let accuracy = evaluate_correctness(&setup.reference, &setup.dataset, &config.arch)
        .map_err(|e| Failure::from_lib(&format!("seed {}", setup.seed), e))?
        .accuracy();
    write_text(&dir.join("split.csv"), &split_table(setup))?;
    write_json(
        &dir.join("split.json"),
        &SplitSummary {
            seed: setup.seed,
            config,
            reference_accuracy: accuracy,
            pretrain_loss: &setup.pretrain_trace,
            lr: setup.lr,
            mastered_indices: &setup.split.mastered_indices,
            injection_indices: &setup.split.injection_indices,
            holdout: setup.holdout.as_ref(),
        },
    )
}

pub fn split(config: &ExperimentConfig) -> Result<(), Failure> {
    for &seed in &config.seeds {
        let setup = prepare(config, seed)?;
        let dir = seed_dir(&config.output_dir, seed);
        write_split(config, &setup, &dir)?;
        println!(
            "seed {seed}: mastered {}, injection {}",
            setup.split.mastered_indices.len(),
            setup.split.injection_indices.len()
        );
    }
    Ok(())
}

fn save_checkpoint(path: &Path, params: &cnl::ParamVector, config: &ExperimentConfig) -> Result<(), Failure> {
    write_text(path, &checkpoint::to_json(params, Some(&config.arch)))
}

pub fn train(config: &ExperimentConfig) -> Result<(), Failure> {
    for &seed in &config.seeds {
        let setup = prepare(config, seed)?;
        let dir = seed_dir(&config.output_dir, seed);
        write_split(config, &setup, &dir)?;
        save_checkpoint(&dir.join("start.json"), &setup.reference, config)?;
        for &method in &config.methods {
            let arm = method.name();
            let (params, mut record) =
                run_arm(config, &setup, method).map_err(|e| Failure::from_lib(&format!("seed {seed}, arm {arm}"), e))?;
            let steps_file = format!("{arm}.steps.csv");
            record.diagnostics_path = Some(steps_file.clone());
            write_text(&dir.join(format!("{arm}.csv")), &csv_with(|w| record.write_csv(w)))?;
            write_text(&dir.join(&steps_file), &csv_with(|w| write_diagnostics_csv(w, &record.steps)))?;
            write_json(
                &dir.join(format!("{arm}.json")),
                &RunSummary {
                    seed,
                    arm,
                    optimizer: config.optimizer.kind.name(),
                    lr: setup.lr,
                    config,
                    record: &record,
                },
            )?;
            save_checkpoint(&dir.join(format!("{arm}-end.json")), &params, config)?;
            let f = record.final_counts;
            println!(
                "seed {seed} {arm}: learned {}/{}, forgot {}/{}",
                f.learned, f.injection_size, f.forgot, f.mastered_size
            );
        }
    }
    Ok(())
}

pub fn analyze(config: &ExperimentConfig, checkpoint_path: Option<&Path>) -> Result<(), Failure> {
    let loaded = match checkpoint_path {
        None => None,
        Some(path) => {
            if !path.is_file() {
                return Err(Failure::Io(format!("checkpoint not found: {}", path.display())));
            }
            let ckpt = checkpoint::load(path).map_err(|e| Failure::from_lib(&path.display().to_string(), e))?;
            if ckpt.params.manifest() != &config.arch.manifest() {
                return Err(Failure::Config(format!(
                    "checkpoint {} does not match architecture {}",
                    path.display(),
                    config.arch.describe()
                )));
            }
            Some(ckpt.params)
        }
    };
    for &seed in &config.seeds {
        let setup = prepare(config, seed)?;
        let params = loaded.as_ref().unwrap_or(&setup.reference);
        let outcome = analyze_at(config, &setup, params).map_err(|e| Failure::from_lib(&format!("seed {seed}"), e))?;
        let dir = seed_dir(&config.output_dir, seed);

        write_text(
            &dir.join("similarity.csv"),
            &csv_with(|w| write_report_csv(w, std::slice::from_ref(&outcome.report))),
        )?;
        let mut groups = format!("{}\n", GroupForgetting::CSV_HEADER);
        if let Some(g) = &outcome.group_forgetting {
            for row in g.csv_rows() {
                groups.push_str(&row);
                groups.push('\n');
            }
        }
        write_text(&dir.join("groups.csv"), &groups)?;

        let sources: &[usize] = match &setup.holdout {
            Some(h) => &h.mastered_train,
            None => &setup.split.mastered_indices,
        };
        let mut per_sample = String::from("index,similarity\n");
        for (idx, s) in sources.iter().zip(&outcome.per_sample) {
            per_sample.push_str(&format!("{idx},{s}\n"));
        }
        write_text(&dir.join("per_sample.csv"), &per_sample)?;

        write_json(
            &dir.join("analysis.json"),
            &AnalysisSummary {
                seed,
                config,
                checkpoint: checkpoint_path.map(|p| p.display().to_string()),
                report: &outcome.report,
                groups: outcome.groups.as_ref(),
                group_forgetting: outcome.group_forgetting.as_ref(),
            },
        )?;
        let r = &outcome.report;
        println!(
            "seed {seed}: collaborative {:.4}, conflicting {:.4}, total {}",
            r.prop_collab, r.prop_conflict, r.total
        );
    }
    Ok(())
}

/// Directories holding run summaries: `root` itself, or its `seed-*` children.
fn run_dirs(root: &Path) -> Result<Vec<PathBuf>, Failure> {
    if !root.is_dir() {
        return Err(Failure::Io(format!("run directory not found: {}", root.display())));
    }
    if !summaries(root)?.is_empty() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Failure::io(root, e))? {
        let path = entry.map_err(|e| Failure::io(root, e))?.path();
        let is_seed = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("seed-"));
        if is_seed && path.is_dir() && !summaries(&path)?.is_empty() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Failure::Io(format!("no run records under {}", root.display())));
    }
    Ok(dirs)
}

/// Arm summaries in `dir`, in method order.
fn summaries(dir: &Path) -> Result<Vec<(String, PathBuf)>, Failure> {
    let mut found = Vec::new();
    for method in [Method::Ft, Method::Cnl, Method::Rp] {
        let arm = method.name();
        let json = dir.join(format!("{arm}.json"));
        if json.is_file() && dir.join(format!("{arm}.csv")).is_file() {
            found.push((arm.to_string(), json));
        }
    }
    Ok(found)
}

/// Long-format rows `arm,optimizer,epoch,metric,value`. Values are copied
/// from the run CSV text unchanged.
fn curve_rows(dir: &Path) -> Result<String, Failure> {
    let mut out = String::from("arm,optimizer,epoch,metric,value\n");
    for (arm, json) in summaries(dir)? {
        let text = fs::read_to_string(&json).map_err(|e| Failure::io(&json, e))?;
        let header: RunHeader = serde_json::from_str(&text).map_err(|e| Failure::io(&json, e))?;
        if header.arm != arm {
            return Err(Failure::io(&json, format!("summary names arm {:?}", header.arm)));
        }
        let csv_path = dir.join(format!("{arm}.csv"));
        let csv = fs::read_to_string(&csv_path).map_err(|e| Failure::io(&csv_path, e))?;
        let mut lines = csv.lines();
        let columns: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
        if columns.first() != Some(&"epoch") {
            return Err(Failure::io(&csv_path, "missing epoch column"));
        }
        for line in lines.filter(|l| !l.is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns.len() {
                return Err(Failure::io(&csv_path, format!("malformed row {line:?}")));
            }
            for (metric, value) in columns.iter().zip(&fields).skip(1) {
                out.push_str(&format!("{arm},{},{},{metric},{value}\n", header.optimizer, fields[0]));
            }
        }
    }
    Ok(out)
}

pub fn curves(run_dir: &Path, out: Option<&Path>) -> Result<(), Failure> {
    for dir in run_dirs(run_dir)? {
        let rows = curve_rows(&dir)?;
        let target = match out {
            None => dir.join("curves.csv"),
            Some(root) => {
                let name = if dir == run_dir {
                    dir.file_name().map(PathBuf::from).unwrap_or_default()
                } else {
                    dir.strip_prefix(run_dir).map(Path::to_path_buf).unwrap_or_default()
                };
                root.join(name).join("curves.csv")
            }
        };
        write_text(&target, &rows)?;
        println!("{}", target.display());
    }
    Ok(())
}
