//! Subcommand implementations: experiment orchestration (`run`, `grid`),
//! flatness probing of saved checkpoints (`probe`), the analytical cost table
//! (`flops`), and feature-file validation (`validate-data`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zofc_core::continual::{
    make_synthetic_stream, old_tasks_loss, run_stream, stacked_params, Checkpoint, ComponentOpt,
    ContinualState, Dataset, EvalMatrix, MethodVariant, ModelSnapshot, Task, TaskStream,
};
use zofc_core::metrics::{sam_flatness, FlatnessProbe, FlatnessSample, MetricsReport};
use zofc_core::model::{FrozenBackbone, HeadFamily};
use zofc_core::numerics::Vector;
use zofc_core::oracles::{flops_estimate, CostReport, FlopsModel, Regime};

use crate::config::{resolve_output_path, ExperimentConfig, FeatureStreamSpec, StreamSource};
use crate::error::{CliError, CliResult};
use crate::features::{load_features, FeatureFile};
use crate::report::{Meta, PerturbationDigest, RunReport, RunStats, REPORT_SCHEMA_VERSION};

/// The method-variant grid: the reference hybrid, its component swaps, and
/// the prototype baselines.
pub fn grid_variants() -> Vec<(&'static str, MethodVariant)> {
    let v = |adapter, head_family, head| MethodVariant {
        adapter,
        head_family,
        head,
    };
    vec![
        (
            "prototype",
            v(
                ComponentOpt::None,
                HeadFamily::Prototype,
                ComponentOpt::None,
            ),
        ),
        (
            "fo-head",
            v(ComponentOpt::None, HeadFamily::Cosine, ComponentOpt::Fo),
        ),
        (
            "fo-adapter-fo-head",
            v(ComponentOpt::Fo, HeadFamily::Cosine, ComponentOpt::Fo),
        ),
        (
            "zofc",
            v(ComponentOpt::Zo, HeadFamily::Cosine, ComponentOpt::Fo),
        ),
        (
            "zo-adapter-zo-head",
            v(ComponentOpt::Zo, HeadFamily::Cosine, ComponentOpt::Zo),
        ),
        (
            "fo-adapter-zo-head",
            v(ComponentOpt::Fo, HeadFamily::Cosine, ComponentOpt::Zo),
        ),
        (
            "zo-adapter-prototype",
            v(ComponentOpt::Zo, HeadFamily::Prototype, ComponentOpt::None),
        ),
    ]
}

pub fn variant_by_name(name: &str) -> CliResult<MethodVariant> {
    grid_variants()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| v)
        .ok_or_else(|| {
            let names: Vec<&str> = grid_variants().iter().map(|(n, _)| *n).collect();
            CliError::config(format!(
                "unknown variant '{name}' (expected one of: {})",
                names.join(", ")
            ))
        })
}

/// Cost regime corresponding to a method variant: a ZO adapter with an FO
/// head pays probe forwards plus the head backward; with no trainable head it
/// pays probe forwards only; an all-ZO model is the pure-ZO regime; anything
/// driven by FO gradients is billed as FO.
pub fn regime_for(variant: &MethodVariant) -> Regime {
    match (variant.adapter, variant.head) {
        (ComponentOpt::Zo, ComponentOpt::Fo) => Regime::ZofcEarly,
        (ComponentOpt::Zo, ComponentOpt::Zo) => Regime::Zo,
        (ComponentOpt::Zo, ComponentOpt::None) => Regime::ZofcLate,
        _ => Regime::Fo,
    }
}

/// Split a validated feature file into a class-incremental stream: classes
/// sorted ascending, chunked into tasks, each class split train/test in file
/// order by `train_fraction`.
pub fn stream_from_features(file: &FeatureFile, spec: &FeatureStreamSpec) -> CliResult<TaskStream> {
    let mut per_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &label) in file.labels.iter().enumerate() {
        per_class.entry(label).or_default().push(i);
    }
    if per_class.is_empty() {
        return Err(CliError::data("feature file contains no examples"));
    }
    for (&class, idx) in &per_class {
        if idx.len() < 2 {
            return Err(CliError::data(format!(
                "class {class} has {} example(s); need at least 2 for a train/test split",
                idx.len()
            )));
        }
    }
    let classes: Vec<u32> = per_class.keys().copied().collect();
    if !classes.len().is_multiple_of(spec.classes_per_task) {
        return Err(CliError::data(format!(
            "{} classes present cannot be split into tasks of {} classes",
            classes.len(),
            spec.classes_per_task
        )));
    }
    let mut tasks = Vec::new();
    for chunk in classes.chunks(spec.classes_per_task) {
        let mut train = Dataset {
            features: Vec::new(),
            labels: Vec::new(),
        };
        let mut test = Dataset {
            features: Vec::new(),
            labels: Vec::new(),
        };
        for &class in chunk {
            let idx = &per_class[&class];
            let n = idx.len();
            let n_train = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n - 1);
            for (k, &i) in idx.iter().enumerate() {
                let split = if k < n_train { &mut train } else { &mut test };
                split
                    .features
                    .push(Vector::from_vec(file.features[i].clone()));
                split.labels.push(class);
            }
        }
        tasks.push(Task {
            classes: chunk.to_vec(),
            train,
            test,
        });
    }
    let stream = TaskStream {
        input_dim: file.dim as usize,
        tasks,
    };
    stream
        .validate()
        .map_err(|e| CliError::data(e.to_string()))?;
    Ok(stream)
}

/// Materialize the task stream a config describes.
pub fn build_stream(config: &ExperimentConfig) -> CliResult<TaskStream> {
    match &config.stream {
        StreamSource::Synthetic(spec) => {
            make_synthetic_stream(spec).map_err(|e| CliError::config(e.to_string()))
        }
        StreamSource::Features(spec) => {
            let file = load_features(&spec.path)?;
            stream_from_features(&file, spec)
        }
    }
}

/// Saved run state for later probing: the stream it ran on plus the
/// task-boundary checkpoint. Self-contained, so `probe` needs no config.
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunArtifact {
    pub version: u32,
    pub stream: TaskStream,
    pub checkpoint: Checkpoint,
}

impl RunArtifact {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io_data(path, e))?;
        let artifact: RunArtifact = serde_json::from_str(&text)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if artifact.version != ARTIFACT_VERSION {
            return Err(CliError::data(format!(
                "unsupported checkpoint artifact version {} (expected {ARTIFACT_VERSION})",
                artifact.version
            )));
        }
        artifact
            .checkpoint
            .validate()
            .map_err(|e| CliError::data(e.to_string()))?;
        Ok(artifact)
    }
}

fn write_output(path: &Path, contents: &str) -> CliResult<()> {
    let resolved = resolve_output_path(path);
    if let Some(parent) = resolved.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io_config(parent, e))?;
        }
    }
    std::fs::write(&resolved, contents).map_err(|e| CliError::io_config(&resolved, e))
}

/// Flatness of the old-task loss surface after each task, at each probe
/// radius. Skipped entirely for prototype heads (no differentiable surface)
/// and for the first task (no old tasks yet).
fn flatness_series(
    backbone: &FrozenBackbone,
    stream: &TaskStream,
    snapshots: &[ModelSnapshot],
    rhos: &[f64],
    probe: &FlatnessProbe,
) -> CliResult<Vec<FlatnessSample>> {
    let mut samples = Vec::new();
    for (t, snap) in snapshots.iter().enumerate().skip(1) {
        if snap.head.family() == HeadFamily::Prototype {
            return Ok(Vec::new());
        }
        let theta = stacked_params(&snap.adapter, &snap.head);
        let mut loss =
            |point: &[f64]| old_tasks_loss(backbone, &snap.adapter, &snap.head, stream, t, point);
        for &rho in rhos {
            let phi = sam_flatness(&mut loss, &theta, rho, probe)?;
            samples.push(FlatnessSample {
                task_index: t,
                rho,
                probe: *probe,
                phi,
            });
        }
    }
    Ok(samples)
}

fn per_task_metrics(matrix: &EvalMatrix) -> CliResult<Vec<MetricsReport>> {
    let mut out = Vec::with_capacity(matrix.num_tasks());
    let mut leading = EvalMatrix::new();
    for i in 0..matrix.num_tasks() {
        leading.push_row(matrix.row(i)?.to_vec())?;
        out.push(MetricsReport::from_matrix(&leading)?);
    }
    Ok(out)
}

/// Execute one experiment end to end and write the configured outputs.
pub fn cmd_run(config: &ExperimentConfig) -> CliResult<RunReport> {
    config.validate()?;
    let stream = build_stream(config)?;
    let backbone = FrozenBackbone::identity(stream.input_dim);
    let mut state = ContinualState::new(backbone, config.adapter_rank, config.variant, config.seed)
        .map_err(|e| CliError::config(e.to_string()))?;
    let result = run_stream(
        &mut state,
        &stream,
        &config.budget,
        &config.spsa,
        &config.schedules,
    )?;

    let per_task = per_task_metrics(&result.matrix)?;
    let flatness = flatness_series(
        &state.backbone,
        &stream,
        &result.snapshots,
        &config.probe.rhos,
        &config.probe.probe,
    )?;
    let cost = flops_estimate(
        &FlopsModel::reference(config.spsa.queries as u64),
        regime_for(&config.variant),
    )?;
    let stats = RunStats {
        tasks: stream.num_tasks(),
        adapter_zo_steps: state.adapter_zo_step,
        head_zo_steps: state.head_zo_step,
        first_zo_loss: result.zo_losses.first().copied(),
        last_zo_loss: result.zo_losses.last().copied(),
    };
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        matrix: result.matrix,
        per_task_metrics: per_task,
        flatness,
        cost,
        perturbations: PerturbationDigest::from_records(config.seed, &result.records),
        stats,
        meta: Meta::capture(),
    };

    if let Some(path) = &config.output.report {
        write_output(path, &report.to_json()?)?;
    }
    if let Some(path) = &config.output.checkpoint {
        let artifact = RunArtifact {
            version: ARTIFACT_VERSION,
            stream,
            checkpoint: Checkpoint::new(state, result.snapshots),
        };
        let mut text = serde_json::to_string(&artifact)
            .map_err(|e| CliError::Numeric(format!("checkpoint serialization: {e}")))?;
        text.push('\n');
        write_output(path, &text)?;
    }
    Ok(report)
}

fn probe_label(probe: &FlatnessProbe) -> &'static str {
    match probe {
        FlatnessProbe::Ascent { .. } => "ascent",
        FlatnessProbe::RandomAverage { .. } => "random_average",
    }
}

/// Probe a saved run at the given radii, under both probe laws. Returns CSV
/// with columns (task, rho, probe, phi).
pub fn cmd_probe(artifact_path: &Path, rhos: &[f64]) -> CliResult<String> {
    if rhos.is_empty() {
        return Err(CliError::config("at least one probe radius is required"));
    }
    for &rho in rhos {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(CliError::config(format!(
                "probe rho must be positive and finite, got {rho}"
            )));
        }
    }
    let artifact = RunArtifact::load(artifact_path)?;
    let state = &artifact.checkpoint.state;
    if state.head.family() == HeadFamily::Prototype {
        return Err(CliError::config(
            "prototype heads have no differentiable loss surface to probe",
        ));
    }
    let probes = [
        FlatnessProbe::Ascent { fd_step: 1e-5 },
        FlatnessProbe::RandomAverage {
            directions: 8,
            seed: 0,
        },
    ];
    let mut csv = String::from("task,rho,probe,phi\n");
    for (t, snap) in artifact.checkpoint.snapshots.iter().enumerate().skip(1) {
        let theta = stacked_params(&snap.adapter, &snap.head);
        let mut loss = |point: &[f64]| {
            old_tasks_loss(
                &state.backbone,
                &snap.adapter,
                &snap.head,
                &artifact.stream,
                t,
                point,
            )
        };
        for &rho in rhos {
            for probe in &probes {
                let phi = sam_flatness(&mut loss, &theta, rho, probe)?;
                writeln!(csv, "{t},{rho},{},{phi}", probe_label(probe))
                    .expect("string writes cannot fail");
            }
        }
    }
    Ok(csv)
}

/// Analytical per-batch cost table for one regime.
pub fn cmd_flops(model: &FlopsModel, regime: Regime) -> CliResult<CostReport> {
    flops_estimate(model, regime).map_err(|e| CliError::config(e.to_string()))
}

/// Run the whole variant grid off one base config, writing one report per
/// variant into `out_dir`. Returns (variant name, report path) pairs.
pub fn cmd_grid(config: &ExperimentConfig, out_dir: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    config.validate()?;
    let mut written = Vec::new();
    for (name, variant) in grid_variants() {
        let mut cfg = config.clone();
        cfg.variant = variant;
        let path = out_dir.join(format!("report-{name}.json"));
        cfg.output.report = Some(path.clone());
        cfg.output.checkpoint = None;
        cmd_run(&cfg)?;
        written.push((name.to_string(), resolve_output_path(&path)));
    }
    Ok(written)
}

/// Validate a feature file and describe its contents.
pub fn cmd_validate_data(path: &Path) -> CliResult<String> {
    let file = load_features(path)?;
    let classes: std::collections::BTreeSet<u32> = file.labels.iter().copied().collect();
    Ok(format!(
        "ok: {} examples, dim {}, label width {}, {} distinct classes",
        file.len(),
        file.dim,
        file.label_width,
        classes.len()
    ))
}
