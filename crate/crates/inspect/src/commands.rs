//! Subcommand bodies: read inputs, run the stages, write the artifacts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scaffold_core::deviation::colorize;
use scaffold_core::graphdiff::GraphDiff;
use scaffold_core::registration::{apply_transform, RigidTransform};
use scaffold_core::structure::{colorize_elements, GraphWarning, ScaffoldGraph, StructureResult};
use scaffold_core::synth::{apply_defects, generate_scaffold, Defect, DefectLog, DefectSpec, PointLabel, ScaffoldSpec};
use scaffold_core::PointCloud;

use crate::config::PipelineConfig;
use crate::io::{load_cloud, save_cloud, CloudFormat, SaveFormat};
use crate::pipeline::{self, alert_reasons, GraphSummary, PipelineError, Stage, StageContext};
use crate::report::{timestamp, AlertInfo, DeviationSummary, GraphPair, InspectionReport, RegistrationSummary, ScanInfo};

/// Collects the names of the files a command writes.
#[derive(Debug)]
pub struct Output {
    dir: PathBuf,
    format: SaveFormat,
    pub written: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path, config: &PipelineConfig) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir)
            .map_err(|e| PipelineError::new(Stage::Export, format!("cannot create {}: {e}", dir.display())))?;
        Ok(Output {
            dir: dir.to_owned(),
            format: config.run.cloud_format,
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_owned());
        self.dir.join(name)
    }

    pub fn cloud(&mut self, stem: &str, cloud: &PointCloud) -> Result<(), PipelineError> {
        let ext = if self.format == SaveFormat::Xyz { "xyz" } else { "ply" };
        let path = self.path(&format!("{stem}.{ext}"));
        save_cloud(cloud, &path, self.format).stage(Stage::Export)
    }

    /// Always PLY: colors are the point of these files.
    pub fn colored(&mut self, stem: &str, cloud: &PointCloud) -> Result<(), PipelineError> {
        let format = if self.format == SaveFormat::PlyAscii {
            SaveFormat::PlyAscii
        } else {
            SaveFormat::PlyBinary
        };
        let path = self.path(&format!("{stem}.ply"));
        save_cloud(cloud, &path, format).stage(Stage::Export)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let path = self.path(name);
        write_json(&path, value)
    }

    /// Single-line JSON, for the large per-point sidecars.
    pub fn json_compact<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let path = self.path(name);
        let err = |e: &dyn std::fmt::Display| PipelineError::new(Stage::Export, format!("{}: {e}", path.display()));
        let file = fs::File::create(&path).map_err(|e| err(&e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, value).map_err(|e| err(&e))?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| err(&e))
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), PipelineError> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| PipelineError::new(Stage::Export, format!("{}: {e}", path.display())))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::new(Stage::Export, format!("{}: {e}", path.display()));
    let file = fs::File::create(path).map_err(|e| err(&e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| err(&e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| err(&e))
}

pub fn load(path: &Path, format: CloudFormat) -> Result<PointCloud, PipelineError> {
    load_cloud(path, format).stage(Stage::Load)
}

fn file_id(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cloud".to_owned())
}

/// The graph file: nodes, edges and the warnings raised while building it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    #[serde(flatten)]
    pub graph: ScaffoldGraph,
    pub warnings: Vec<GraphWarning>,
}

fn graph_file(s: &StructureResult) -> GraphFile {
    GraphFile {
        graph: s.graph.clone(),
        warnings: s.warnings.clone(),
    }
}

fn orientation_name(o: scaffold_core::structure::Orientation) -> &'static str {
    use scaffold_core::structure::Orientation::*;
    match o {
        HorizontalX => "horizontal_x",
        HorizontalY => "horizontal_y",
        Vertical => "vertical",
        Diagonal => "diagonal",
    }
}

/// Tab-separated edge list with endpoint coordinates.
pub fn edge_list(graph: &ScaffoldGraph) -> String {
    let mut out = String::from("edge\ta\tb\torientation\tlength\tax\tay\taz\tbx\tby\tbz\n");
    for e in &graph.edges {
        let (a, b) = (graph.node(e.a).unwrap(), graph.node(e.b).unwrap());
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            e.id,
            e.a,
            e.b,
            orientation_name(e.orientation),
            e.length,
            a.x,
            a.y,
            a.z,
            b.x,
            b.y,
            b.z
        ));
    }
    out
}

/// Every reference edge with its status, then the added current edges.
pub fn annotated_edge_list(diff: &GraphDiff) -> String {
    let mut out = String::from("status\treference_edge\tcurrent_edge\ta\tb\torientation\tlength\tmax_displacement\n");
    let mut rows: Vec<(usize, String)> = Vec::new();
    for (status, pairs) in [("matched", &diff.matched_edges), ("deviated", &diff.deviated_edges)] {
        for p in pairs.iter() {
            let e = &p.reference;
            rows.push((
                e.id,
                format!(
                    "{status}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    e.id,
                    p.current.id,
                    e.a,
                    e.b,
                    orientation_name(e.orientation),
                    e.length,
                    p.max_displacement
                ),
            ));
        }
    }
    for e in &diff.missing_edges {
        rows.push((
            e.id,
            format!("missing\t{}\t-\t{}\t{}\t{}\t{}\t-\n", e.id, e.a, e.b, orientation_name(e.orientation), e.length),
        ));
    }
    rows.sort_by_key(|(id, _)| *id);
    for (_, row) in rows {
        out.push_str(&row);
    }
    for e in &diff.added_edges {
        out.push_str(&format!(
            "added\t-\t{}\t{}\t{}\t{}\t{}\t-\n",
            e.id,
            e.a,
            e.b,
            orientation_name(e.orientation),
            e.length
        ));
    }
    out
}

pub fn cmd_preprocess(input: &Path, format: CloudFormat, config: &PipelineConfig, out: &mut Output) -> Result<(), PipelineError> {
    let cloud = load(input, format)?;
    let (clean, summary) = pipeline::preprocess(&cloud, config)?;
    log::info!("{}: {} -> {} points", input.display(), cloud.len(), clean.len());
    out.cloud(&format!("{}.clean", file_stem(input)), &clean)?;
    out.json("preprocess.json", &summary)
}

fn maybe_preprocess(cloud: PointCloud, run: bool, config: &PipelineConfig) -> Result<PointCloud, PipelineError> {
    if run {
        Ok(pipeline::preprocess(&cloud, config)?.0)
    } else {
        Ok(cloud)
    }
}

pub fn cmd_register(
    reference: &Path,
    current: &Path,
    preprocess: bool,
    config: &PipelineConfig,
    out: &mut Output,
) -> Result<(), PipelineError> {
    let r = maybe_preprocess(load(reference, CloudFormat::Auto)?, preprocess, config)?;
    let c = maybe_preprocess(load(current, CloudFormat::Auto)?, preprocess, config)?;
    let reg = pipeline::register(&r, &c, config)?;
    out.cloud("aligned", &reg.aligned)?;
    #[derive(Serialize)]
    struct RegistrationFile<'a> {
        summary: RegistrationSummary,
        error_history: &'a [f64],
    }
    out.json(
        "registration.json",
        &RegistrationFile {
            summary: RegistrationSummary::of(&reg.result, config.icp.initial),
            error_history: &reg.result.error_history,
        },
    )
}

pub fn cmd_deviate(
    reference: &Path,
    current: &Path,
    align: bool,
    config: &PipelineConfig,
    out: &mut Output,
) -> Result<(), PipelineError> {
    let r = load(reference, CloudFormat::Auto)?;
    let mut c = load(current, CloudFormat::Auto)?;
    if align {
        c = pipeline::register(&r, &c, config)?.aligned;
    }
    let d = pipeline::deviate(&r, &c, config, None)?;
    let palette = &config.palette.deviation;
    out.colored("deviation", &colorize(&c, &d.report.labels, palette).stage(Stage::Export)?)?;
    out.colored("change_map", &colorize(&c, &d.change.labels, palette).stage(Stage::Export)?)?;
    out.json("deviation.json", &DeviationSummary::of(&d))
}

pub fn cmd_graph(input: &Path, preprocess: bool, config: &PipelineConfig, out: &mut Output) -> Result<(), PipelineError> {
    let cloud = maybe_preprocess(load(input, CloudFormat::Auto)?, preprocess, config)?;
    let s = pipeline::graph(&cloud, config)?;
    log::info!("{} joints, {} braces", s.graph.nodes.len(), s.graph.edges.len());
    out.json("graph.json", &graph_file(&s))?;
    out.text("edges.tsv", &edge_list(&s.graph))?;
    out.colored(
        "elements",
        &colorize_elements(&cloud, &s.elements, &config.palette.elements).stage(Stage::Export)?,
    )?;
    out.json("graph_summary.json", &GraphSummary::of(&s))
}

pub fn cmd_inspect(
    reference: &Path,
    current: &Path,
    preprocessed: bool,
    config: &PipelineConfig,
    out: &mut Output,
) -> Result<InspectionReport, PipelineError> {
    let started_at = timestamp();
    let r = load(reference, CloudFormat::Auto)?;
    let c = load(current, CloudFormat::Auto)?;
    let run = pipeline::inspect(&r, &c, config, preprocessed)?;

    let palette = &config.palette.deviation;
    let aligned = &run.registration.aligned;
    out.colored("deviation", &colorize(aligned, &run.deviation.report.labels, palette).stage(Stage::Export)?)?;
    out.colored("change_map", &colorize(aligned, &run.deviation.change.labels, palette).stage(Stage::Export)?)?;
    out.colored(
        "current_elements",
        &colorize_elements(aligned, &run.current_structure.elements, &config.palette.elements).stage(Stage::Export)?,
    )?;
    out.json("reference_graph.json", &graph_file(&run.reference_structure))?;
    out.json("current_graph.json", &graph_file(&run.current_structure))?;
    out.json("diff.json", &run.diff)?;
    out.text(
        "diff_edges.tsv",
        &annotated_edge_list(&run.diff),
    )?;

    let deviation = DeviationSummary::of(&run.deviation);
    let reasons = alert_reasons(&run.diff, deviation.exceeding_fraction, config.deviation.alarm_level);
    let mut outputs = out.written.clone();
    outputs.push("report.json".to_owned());
    let report = InspectionReport {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        started_at,
        finished_at: timestamp(),
        reference: ScanInfo {
            id: file_id(reference),
            points: r.len(),
            preprocess: run.reference_preprocess.clone(),
            points_used: run.reference.len(),
        },
        current: ScanInfo {
            id: file_id(current),
            points: c.len(),
            preprocess: run.current_preprocess.clone(),
            points_used: run.current.len(),
        },
        registration: RegistrationSummary::of(&run.registration.result, config.icp.initial),
        deviation,
        graphs: GraphPair {
            reference: GraphSummary::of(&run.reference_structure),
            current: GraphSummary::of(&run.current_structure),
        },
        diff: run.diff.summary,
        missing_edges: run.diff.missing_edges.iter().map(|e| e.id).collect(),
        deviated_edges: run.diff.deviated_edges.iter().map(|p| p.reference.id).collect(),
        added_edges: run.diff.added_edges.iter().map(|e| e.id).collect(),
        alert: AlertInfo {
            raised: !reasons.is_empty(),
            reasons,
            alarm_level: config.deviation.alarm_level,
        },
        outputs,
    };
    out.json("report.json", &report)?;
    Ok(report)
}

/// A rigid motion given as axis, angle and translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Motion {
    pub axis: [f64; 3],
    pub angle_deg: f64,
    pub translation: [f64; 3],
}

impl Motion {
    pub fn transform(&self) -> Result<RigidTransform, String> {
        let axis = nalgebra::Vector3::from(self.axis);
        if !(axis.norm() > 0.0) && self.angle_deg != 0.0 {
            return Err("motion axis must be non-zero".to_owned());
        }
        let axis = if axis.norm() > 0.0 { axis } else { nalgebra::Vector3::z() };
        Ok(RigidTransform::from_axis_angle(
            axis,
            self.angle_deg.to_radians(),
            nalgebra::Vector3::from(self.translation),
        ))
    }
}

/// Input of `synth`: the lattice, and optionally a campaign scan with
/// defects, its own noise seed and a rigid motion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthFile {
    pub scaffold: ScaffoldSpec,
    pub defects: Vec<Defect>,
    /// Noise seed of the campaign scan; defaults to the lattice seed + 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub current_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub current_motion: Option<Motion>,
    /// Write a campaign scan even without defects.
    pub current: bool,
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    spec: &'a ScaffoldSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    motion: Option<&'a Motion>,
    graph: &'a ScaffoldGraph,
    #[serde(skip_serializing_if = "Option::is_none")]
    defects: Option<&'a DefectLog>,
    labels: &'a [PointLabel],
}

pub fn load_synth_file(path: &Path) -> Result<SynthFile, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::new(Stage::Synth, format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| PipelineError::new(Stage::Synth, format!("{}: {e}", path.display())))
}

pub fn cmd_synth(file: &SynthFile, seed: Option<u64>, out: &mut Output) -> Result<(), PipelineError> {
    let mut spec = file.scaffold.clone();
    if let Some(s) = seed {
        spec.seed = s;
    }
    let reference = generate_scaffold(&spec).stage(Stage::Synth)?;
    out.cloud("reference", &reference.cloud)?;
    out.json_compact(
        "reference.json",
        &Sidecar {
            spec: &reference.spec,
            motion: None,
            graph: &reference.graph,
            defects: None,
            labels: &reference.labels,
        },
    )?;
    log::info!("reference: {} points", reference.cloud.len());
    if !(file.current || !file.defects.is_empty() || file.current_motion.is_some() || file.current_seed.is_some()) {
        return Ok(());
    }
    let current_spec = ScaffoldSpec {
        seed: file.current_seed.unwrap_or(spec.seed.wrapping_add(1)),
        ..spec
    };
    let scene = generate_scaffold(&current_spec).stage(Stage::Synth)?;
    let (mut scene, log) = apply_defects(
        &scene,
        &DefectSpec {
            defects: file.defects.clone(),
        },
    )
    .stage(Stage::Synth)?;
    if let Some(m) = &file.current_motion {
        let t = m.transform().map_err(|e| PipelineError::new(Stage::Synth, e))?;
        scene.cloud = apply_transform(&scene.cloud, &t);
    }
    out.cloud("current", &scene.cloud)?;
    out.json_compact(
        "current.json",
        &Sidecar {
            spec: &scene.spec,
            motion: file.current_motion.as_ref(),
            graph: &scene.graph,
            defects: Some(&log),
            labels: &scene.labels,
        },
    )?;
    log::info!("current: {} points, {} defect(s)", scene.cloud.len(), log.records.len());
    Ok(())
}
