//! The `airway` command line.
//!
//! Every subcommand reads and writes MetaImage volumes. Reports are JSON
//! objects appended one per line, each carrying `schema_version`. On
//! failure a single `error: CATEGORY: message` line goes to stderr, files
//! created by the failed run are removed, and the exit code is 1.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{parse_phantom_spec, RunConfig};
use crate::error::{Error, Result};
use crate::fusion::{count_breakages, embed_fuse, FusionMode, FusionReport};
use crate::geodesic::{gdt_feature, GdtOptions, GeodesicOptions, Metric, DEFAULT_TRUNCATION};
use crate::io::{read_mask, read_volume, write_mask, write_values, write_volume, ElementType};
use crate::loss::{
    bs_loss, dice_loss, parse_losses, sensitivity_experiment_with, total_loss, BasePrediction,
    SegmentationLoss, SensitivityOptions, DEFAULT_EPSILON,
};
use crate::metrics::{evaluate, EvalOptions, EvalResult, DEFAULT_BRANCH_THRESHOLD};
use crate::phantom::{generate, inject_breakages, render, PhantomSpec, RenderParams, VesselParams};
use crate::skeleton::skeletonize;
use crate::volume::{normalize_hu, BinaryMask, ScalarVolume};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "airway", version, about = "Airway tree reconstruction toolkit")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic tree: label, centerline and HU volumes.
    Phantom(PhantomArgs),
    /// Window a HU volume to [0, 255].
    Normalize(NormalizeArgs),
    /// Thin a binary mask to a centerline.
    Skeletonize(SkeletonizeArgs),
    /// Compute the geodesic distance feature from a CT and a stage-1 prediction.
    Gdt(GdtArgs),
    /// Fuse a fine-tune prediction with a geodesic-branch prediction.
    Fuse(FuseArgs),
    /// Evaluate a prediction against a label.
    Metrics(MetricsArgs),
    /// Measure how strongly each loss reacts to injected breakages.
    Sensitivity(SensitivityArgs),
    /// Run gdt, fuse and metrics end to end from a config file.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct PhantomArgs {
    /// `key = value` phantom description; the standard tree when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Lay a bright vessel against one branch.
    #[arg(long)]
    vessel: bool,
}

#[derive(Args, Debug)]
struct NormalizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = -1000.0, allow_negative_numbers = true)]
    lo: f64,
    #[arg(long, default_value_t = 600.0, allow_negative_numbers = true)]
    hi: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SkeletonizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GdtArgs {
    /// CT volume in HU.
    #[arg(long)]
    ct: PathBuf,
    /// Stage-1 probability map.
    #[arg(long)]
    stage1: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TRUNCATION)]
    th: f64,
    #[arg(long, default_value_t = Metric::GrayvalueSum)]
    metric: Metric,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = -1000.0, allow_negative_numbers = true)]
    lo: f64,
    #[arg(long, default_value_t = 600.0, allow_negative_numbers = true)]
    hi: f64,
    /// Multiply image-metric edge weights by the physical step length.
    #[arg(long)]
    scale_by_step: bool,
    /// Output directory for geodesic.mhd, gdt.mhd, centerline.mhd and ct_norm.mhd.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FuseArgs {
    #[arg(long)]
    pf: PathBuf,
    #[arg(long)]
    pg: PathBuf,
    #[arg(long, default_value_t = FusionMode::G2F)]
    mode: FusionMode,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
    /// Report file; one JSON record is appended.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    label: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BRANCH_THRESHOLD)]
    tb: f64,
    /// Mask of voxels to leave out of every metric.
    #[arg(long)]
    exclude: Option<PathBuf>,
    /// Record file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SensitivityArgs {
    /// Connected label mask; the standard phantom when omitted.
    #[arg(long)]
    label: Option<PathBuf>,
    /// Centerline for the BS loss; the label's skeleton when omitted.
    #[arg(long)]
    centerline: Option<PathBuf>,
    #[arg(long, default_value = "bs,dice,ce")]
    losses: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    gap_width: usize,
    /// Unbroken prediction: `label` or `dilated:N`.
    #[arg(long, default_value = "dilated:1")]
    base: String,
    /// Record file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
}

/// Files and directories created by the current run, removed on failure.
#[derive(Default)]
struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Outputs {
    fn dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut d = Some(dir);
        while let Some(p) = d {
            if p.as_os_str().is_empty() || p.exists() {
                break;
            }
            missing.push(p.to_path_buf());
            d = p.parent();
        }
        fs::create_dir_all(dir)?;
        self.dirs.extend(missing.into_iter().rev());
        Ok(())
    }

    fn parent_of(&mut self, path: &Path) -> Result<()> {
        match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => self.dir(p),
            _ => Ok(()),
        }
    }

    fn note_new(&mut self, paths: &[PathBuf]) -> Vec<PathBuf> {
        paths.iter().filter(|p| !p.exists()).cloned().collect()
    }

    fn write(&mut self, path: &Path, f: impl FnOnce(&Path) -> Result<Vec<PathBuf>>) -> Result<()> {
        self.parent_of(path)?;
        let candidates = [path.to_path_buf(), path.with_extension("raw")];
        let fresh = self.note_new(&candidates);
        let result = f(path);
        self.files.extend(fresh.into_iter().filter(|p| p.exists()));
        result.map(|_| ())
    }

    fn volume(&mut self, vol: &ScalarVolume, path: &Path, ty: ElementType) -> Result<()> {
        self.write(path, |p| write_volume(vol, p, ty))
    }

    fn mask(&mut self, mask: &BinaryMask, path: &Path) -> Result<()> {
        self.write(path, |p| write_mask(mask, p))
    }

    fn values(&mut self, grid: &crate::Grid, data: &[f64], path: &Path) -> Result<()> {
        self.write(path, |p| write_values(grid, data, p, ElementType::Double))
    }

    fn record(&mut self, path: Option<&Path>, kind: &str, body: Value) -> Result<()> {
        let mut record = json!({ "schema_version": SCHEMA_VERSION, "kind": kind });
        if let (Value::Object(r), Value::Object(b)) = (&mut record, body) {
            r.extend(b);
        }
        let line = serde_json::to_string(&record)?;
        match path {
            None => println!("{line}"),
            Some(path) => {
                self.parent_of(path)?;
                if !path.exists() {
                    self.files.push(path.to_path_buf());
                }
                let mut f = OpenOptions::new().create(true).append(true).open(path)?;
                writeln!(f, "{line}")?;
            }
        }
        Ok(())
    }

    fn rollback(self) {
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

/// Run the CLI with the process arguments and return the exit code.
pub fn main() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error: USAGE: {first}");
            return 2;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();

    let mut outputs = Outputs::default();
    match run(cli.command, &mut outputs) {
        Ok(()) => 0,
        Err(e) => {
            outputs.rollback();
            eprintln!("error: {}: {}", e.category(), e);
            1
        }
    }
}

fn run(command: Command, out: &mut Outputs) -> Result<()> {
    match command {
        Command::Phantom(a) => phantom(a, out),
        Command::Normalize(a) => {
            let v = normalize_hu(&read_volume(&a.input)?, a.lo, a.hi)?;
            out.volume(&v, &a.out, ElementType::UChar)
        }
        Command::Skeletonize(a) => out.mask(&skeletonize(&read_mask(&a.input)?), &a.out),
        Command::Gdt(a) => gdt(a, out),
        Command::Fuse(a) => {
            let pf = read_volume(&a.pf)?;
            let pg = read_volume(&a.pg)?;
            let report = embed_fuse(&pf, &pg, a.threshold, a.mode)?;
            out.mask(&report.fused, &a.out)?;
            if let Some(path) = &a.report {
                out.record(Some(path), "fusion", fusion_json(&report))?;
            }
            Ok(())
        }
        Command::Metrics(a) => {
            let pred = read_mask(&a.pred)?;
            let label = read_mask(&a.label)?;
            let exclude = a.exclude.as_deref().map(read_mask).transpose()?;
            let r = evaluate(
                &pred,
                &label,
                &EvalOptions {
                    branch_threshold: a.tb,
                    exclude,
                },
            )?;
            out.record(a.out.as_deref(), "evaluation", eval_json(&r, None))
        }
        Command::Sensitivity(a) => sensitivity(a, out),
        Command::Pipeline(a) => pipeline(&a.config, out),
    }
}

fn round_hu(v: &ScalarVolume) -> Result<ScalarVolume> {
    ScalarVolume::new(v.grid(), v.data().iter().map(|x| x.round()).collect())
}

fn render_params(noise_sigma: f64, vessel: bool, seed: u64) -> RenderParams {
    RenderParams {
        noise_sigma,
        vessel: vessel.then(VesselParams::default),
        seed,
        ..RenderParams::default()
    }
}

fn phantom(a: PhantomArgs, out: &mut Outputs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => parse_phantom_spec(&fs::read_to_string(p)?)?,
        None => PhantomSpec::standard(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let ph = generate(&spec)?;
    let hu = round_hu(&render(
        &ph,
        &render_params(a.noise_sigma, a.vessel, spec.seed),
    )?)?;
    out.dir(&a.out)?;
    out.mask(&ph.label, &a.out.join("label.mhd"))?;
    out.mask(&ph.centerline_gt, &a.out.join("centerline.mhd"))?;
    out.volume(&hu, &a.out.join("hu.mhd"), ElementType::Short)
}

fn gdt(a: GdtArgs, out: &mut Outputs) -> Result<()> {
    let ct = read_volume(&a.ct)?;
    let stage1 = read_volume(&a.stage1)?;
    let options = GdtOptions {
        hu_window: (a.lo, a.hi),
        threshold: a.threshold,
        th: a.th,
        geodesic: GeodesicOptions {
            metric: a.metric,
            scale_by_step: a.scale_by_step,
        },
    };
    let f = gdt_feature(&ct, &stage1, &options)?;
    out.dir(&a.out)?;
    write_gdt(&f, &a.out, out)
}

fn write_gdt(f: &crate::geodesic::GdtFeature, dir: &Path, out: &mut Outputs) -> Result<()> {
    let grid = f.normalized_ct.grid();
    out.volume(
        &f.normalized_ct,
        &dir.join("ct_norm.mhd"),
        ElementType::UChar,
    )?;
    out.mask(&f.centerline, &dir.join("centerline.mhd"))?;
    out.values(&grid, f.field.distances(), &dir.join("geodesic.mhd"))?;
    out.volume(
        f.truncated.values(),
        &dir.join("gdt.mhd"),
        ElementType::Double,
    )
}

fn fusion_json(r: &FusionReport) -> Value {
    json!({
        "mode": r.mode.name(),
        "missing_centerline": r.missing_centerline.len(),
        "embedded_voxels": r.embedded_voxels,
        "components_before": r.components_before,
        "components_after": r.components_after,
        "breakages_before": r.components_before.saturating_sub(1),
        "breakages_after": r.components_after.saturating_sub(1),
    })
}

fn eval_json(r: &EvalResult, input: Option<&str>) -> Value {
    let mut v = serde_json::to_value(r).expect("plain data");
    if let (Some(name), Value::Object(m)) = (input, &mut v) {
        m.insert("input".into(), json!(name));
    }
    v
}

fn parse_base(s: &str) -> Result<BasePrediction> {
    match s {
        "label" => Ok(BasePrediction::Label),
        "dilated" => Ok(BasePrediction::Dilated(1)),
        _ => s
            .strip_prefix("dilated:")
            .and_then(|n| n.parse().ok())
            .map(BasePrediction::Dilated)
            .ok_or_else(|| Error::InvalidArgument(format!("bad base prediction {s:?}"))),
    }
}

fn sensitivity(a: SensitivityArgs, out: &mut Outputs) -> Result<()> {
    let losses = parse_losses(&a.losses)?;
    let base = parse_base(&a.base)?;
    let (label, centerline) = match &a.label {
        Some(p) => {
            let label = read_mask(p)?;
            let centerline = match &a.centerline {
                Some(c) => read_mask(c)?,
                None => skeletonize(&label),
            };
            (label, centerline)
        }
        None => {
            let ph = generate(&PhantomSpec::standard())?;
            (ph.label, ph.centerline_gt)
        }
    };
    let refs: Vec<&dyn SegmentationLoss> = losses.iter().map(|l| l as _).collect();
    let options = SensitivityOptions {
        base,
        gap_width: a.gap_width,
    };
    let curves = sensitivity_experiment_with(&label, &centerline, &refs, a.k, a.seed, &options)?;
    out.record(
        a.out.as_deref(),
        "sensitivity",
        json!({
            "seed": a.seed,
            "k_max": a.k,
            "gap_width": a.gap_width,
            "base": a.base,
            "curves": curves,
        }),
    )
}

struct PipelineInputs {
    ct: ScalarVolume,
    stage1: ScalarVolume,
    pf: ScalarVolume,
    pg: Option<ScalarVolume>,
    label: BinaryMask,
}

fn pipeline_inputs(c: &RunConfig, out: &mut Outputs) -> Result<PipelineInputs> {
    let given = [&c.ct, &c.stage1, &c.pf, &c.label];
    if given.iter().any(|p| p.is_some()) {
        let [Some(ct), Some(stage1), Some(pf), Some(label)] = given else {
            return Err(Error::Config {
                line: 0,
                message: "give all of ct, stage1, pf and label, or none to synthesise a phantom"
                    .into(),
            });
        };
        return Ok(PipelineInputs {
            ct: read_volume(ct)?,
            stage1: read_volume(stage1)?,
            pf: read_volume(pf)?,
            pg: c.pg.as_deref().map(read_volume).transpose()?,
            label: read_mask(label)?,
        });
    }
    if c.pg.is_some() {
        return Err(Error::Config {
            line: 0,
            message: "pg requires explicit ct, stage1, pf and label".into(),
        });
    }
    let mut spec = c.phantom.clone();
    spec.seed = c.seed;
    let ph = generate(&spec)?;
    let ct = round_hu(&render(
        &ph,
        &render_params(c.noise_sigma, c.vessel, c.seed),
    )?)?;
    let (broken, _) = inject_breakages(&ph.label, c.breakages, c.gap_width, c.seed)?;
    out.volume(&ct, &c.out_dir.join("ct.mhd"), ElementType::Short)?;
    out.mask(&ph.label, &c.out_dir.join("label.mhd"))?;
    out.mask(&broken, &c.out_dir.join("pf.mhd"))?;
    Ok(PipelineInputs {
        ct,
        stage1: ScalarVolume::from_mask(&ph.label),
        pf: ScalarVolume::from_mask(&broken),
        pg: None,
        label: ph.label,
    })
}

/// gdt, fuse and metrics in sequence. Without a `pg` input the
/// geodesic-branch prediction is the truncated feature scaled to `[0, 1]`.
fn pipeline(config: &Path, out: &mut Outputs) -> Result<()> {
    let c = RunConfig::load(config)?;
    out.dir(&c.out_dir)?;
    let inputs = pipeline_inputs(&c, out)?;

    let options = GdtOptions {
        hu_window: (c.hu_lo, c.hu_hi),
        threshold: c.threshold,
        th: c.th,
        geodesic: c.metric.into(),
    };
    let feature = gdt_feature(&inputs.ct, &inputs.stage1, &options)?;
    write_gdt(&feature, &c.out_dir, out)?;
    let pg = match inputs.pg {
        Some(pg) => pg,
        None => {
            let v = feature.truncated.values();
            let pg = ScalarVolume::new(v.grid(), v.data().iter().map(|x| x / c.th).collect())?;
            out.volume(&pg, &c.out_dir.join("pg.mhd"), ElementType::Double)?;
            pg
        }
    };

    let report = embed_fuse(&inputs.pf, &pg, c.threshold, c.mode)?;
    out.mask(&report.fused, &c.out_dir.join("fused.mhd"))?;
    let records = c.out_dir.join("report.jsonl");
    out.record(Some(&records), "fusion", fusion_json(&report))?;

    let eval_options = EvalOptions {
        branch_threshold: c.tb,
        exclude: None,
    };
    let centerline = skeletonize(&inputs.label);
    let pf_mask = crate::volume::binarize(&inputs.pf, c.threshold)?;
    for (name, pred) in [("pf", &pf_mask), ("fused", &report.fused)] {
        let r = evaluate(pred, &inputs.label, &eval_options)?;
        let p = ScalarVolume::from_mask(pred);
        let dice = dice_loss(&p, &inputs.label)?;
        let bs = bs_loss(&p, &centerline, DEFAULT_EPSILON)?;
        let total = total_loss(&dice, &bs, c.w_t)?;
        let mut v = eval_json(&r, Some(name));
        if let Value::Object(m) = &mut v {
            m.insert("breakages".into(), json!(count_breakages(pred)));
            m.insert("dice_loss".into(), json!(dice.value));
            m.insert("bs_loss".into(), json!(bs.value));
            m.insert("total_loss".into(), json!(total.value));
            m.insert("w_t".into(), json!(c.w_t));
        }
        out.record(Some(&records), "evaluation", v)?;
    }
    Ok(())
}
