use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use super::{
    display, manifest_path_for, AugstatsArgs, EvalArgs, FuseArgs, GateArg, PlanArgs, RecalibCommand, RunManifest,
    SoupArgs, SoupCommand, UsageError,
};
use crate::config::RunConfig;
use crate::degrade::{category_stats, Category};
use crate::eval::{evaluate_scenes, DirSource};
use crate::fuse::{fuse_scene, ProbMap};
use crate::recalib::check::gradient_suite;
use crate::recalib::{param_count, GateSource};
use crate::rng::{stage, Rng};
use crate::sampler::{build_plan, plan_stats, SceneManifest};
use crate::soup::{compat_check, soup, TensorArchive};

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn read_manifest(path: &Path) -> anyhow::Result<SceneManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    SceneManifest::parse(&text).with_context(|| format!("parsing manifest {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn plan(args: PlanArgs, argv: &[String]) -> anyhow::Result<i32> {
    let cfg = load_config(args.config.as_ref())?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    if args.iters == 0 {
        return Err(UsageError("--iters must be at least 1".into()).into());
    }
    let manifest = read_manifest(&args.manifest)?;
    let plan = build_plan(&manifest, args.iters, seed)
        .with_context(|| format!("manifest {}", args.manifest.display()))?;
    write_file(&args.out, plan.to_tsv().as_bytes())?;

    let settings = vec![
        ("seed".to_string(), seed.to_string()),
        ("iters".to_string(), args.iters.to_string()),
    ];
    let mut run = RunManifest::new("plan", argv, Some(seed), settings);
    run.inputs = vec![display(&args.manifest)];
    run.outputs = vec![display(&args.out)];
    run.write(&manifest_path_for(&args.out))?;

    let stats = plan_stats(&plan);
    println!("{} iterations over {} scenes", stats.total, stats.per_scene.len());
    for (scene, n) in &stats.per_scene {
        println!("  {scene}\t{n}");
    }
    Ok(0)
}

pub fn fuse(args: FuseArgs, argv: &[String]) -> anyhow::Result<i32> {
    let dir = &args.scene;
    if !dir.is_dir() {
        bail!("scene directory {} does not exist", dir.display());
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "pmap"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .pmap files in {}", dir.display());
    }
    let frames = paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            ProbMap::from_bytes(&bytes).with_context(|| format!("decoding {}", p.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let fused = fuse_scene(&frames).with_context(|| format!("fusing {}", dir.display()))?;
    let mut bytes = Vec::new();
    fused.write_to(&mut bytes)?;
    write_file(&args.out, &bytes)?;

    let mut run = RunManifest::new("fuse", argv, None, Vec::new());
    run.inputs = paths.iter().map(|p| display(p)).collect();
    run.outputs = vec![display(&args.out)];
    run.write(&manifest_path_for(&args.out))?;

    let (dev, negative) = fused.simplex_deviation();
    println!(
        "fused {} frames ({} classes, {}x{}); max |sum - 1| = {dev:.3e}{}",
        frames.len(),
        fused.classes,
        fused.height,
        fused.width,
        if negative { "; negative entries present" } else { "" }
    );
    Ok(0)
}

pub fn eval(args: EvalArgs, argv: &[String]) -> anyhow::Result<i32> {
    let manifest = read_manifest(&args.manifest)?;
    if !args.pred.is_dir() {
        bail!("prediction directory {} does not exist", args.pred.display());
    }
    let label_root = args
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let source = DirSource {
        pred_dir: args.pred.clone(),
        label_root,
    };
    let report = evaluate_scenes(&manifest, &source)?;
    write_file(&args.report, (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;

    let mut run = RunManifest::new("eval", argv, None, Vec::new());
    run.inputs = vec![display(&args.manifest), display(&args.pred)];
    run.outputs = vec![display(&args.report)];
    run.write(&manifest_path_for(&args.report))?;

    let m = &report.metrics;
    println!(
        "{} scenes, {} frames: mIoU {:.4}  mAcc {:.4}  aAcc {:.4}",
        report.scenes, report.frames, m.miou, m.macc, m.aacc
    );
    Ok(0)
}

fn load_archives(paths: &[PathBuf]) -> anyhow::Result<Vec<TensorArchive>> {
    paths
        .iter()
        .map(|p| TensorArchive::load(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

pub fn soup_archives(args: SoupArgs, argv: &[String]) -> anyhow::Result<i32> {
    if let Some(SoupCommand::Check { inputs }) = args.check {
        let archives = load_archives(&inputs)?;
        let report = compat_check(&archives);
        for (i, p) in inputs.iter().enumerate() {
            println!("#{i}: {}", p.display());
        }
        println!("{report}");
        return Ok(if report.is_ok() { 0 } else { 1 });
    }
    let Some(out) = args.out else {
        return Err(UsageError("soup needs --out FILE (or the `check` subcommand)".into()).into());
    };
    if args.inputs.len() < 2 {
        return Err(UsageError("soup needs at least two input archives".into()).into());
    }
    let archives = load_archives(&args.inputs)?;
    let averaged = soup(&archives)?;
    averaged.save(&out)?;

    let mut run = RunManifest::new("soup", argv, None, Vec::new());
    run.inputs = args.inputs.iter().map(|p| display(p)).collect();
    run.outputs = vec![display(&out)];
    run.write(&manifest_path_for(&out))?;

    println!("averaged {} tensors over {} archives into {}", averaged.len(), archives.len(), out.display());
    Ok(0)
}


pub fn recalib(cmd: RecalibCommand) -> anyhow::Result<i32> {
    match cmd {
        RecalibCommand::Check(a) => {
            if a.trials == 0 || a.size == 0 {
                return Err(UsageError("--trials and --size must be at least 1".into()).into());
            }
            let gate = match a.gate {
                GateArg::Bottleneck => GateSource::Bottleneck,
                GateArg::Input => GateSource::Input,
            };
            let r = gradient_suite(a.channels, a.size, a.trials, a.step, a.seed, gate)?;
            let pass = r.max_rel < a.tol;
            println!(
                "{} trials, C={} {}x{}: max relative error {:.3e} (max abs {:.3e}, worst {}) {}",
                r.trials,
                a.channels,
                a.size,
                a.size,
                r.max_rel,
                r.max_abs,
                r.worst,
                if pass { "PASS" } else { "FAIL" }
            );
            Ok(if pass { 0 } else { 1 })
        }
        RecalibCommand::Params { dims } => {
            let n = param_count(&dims)?;
            println!("{n}");
            Ok(0)
        }
    }
}

pub fn augstats(args: AugstatsArgs) -> anyhow::Result<i32> {
    let mut cfg = load_config(args.config.as_ref())?;
    if let Some(p) = args.apply_prob {
        cfg.degrade.apply_prob = p;
    }
    cfg.degrade.validate()?;
    if args.n == 0 {
        return Err(UsageError("--n must be at least 1".into()).into());
    }
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let mut rng = Rng::for_stage(seed, stage::AUGSTATS);
    let stats = category_stats(&mut rng, &cfg.degrade, args.n);
    if args.json {
        let freq: serde_json::Map<String, serde_json::Value> = Category::ALL
            .iter()
            .map(|&c| (c.to_string(), stats.frequency(c).into()))
            .collect();
        let out = serde_json::json!({
            "draws": stats.draws,
            "applied": stats.applied,
            "applied_fraction": stats.applied_fraction(),
            "frequencies": freq,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!(
            "draws {}  applied {} ({:.4})",
            stats.draws,
            stats.applied,
            stats.applied_fraction()
        );
        println!("category  expected  observed");
        for c in Category::ALL {
            println!("{:<8}  {:>8.4}  {:>8.4}", c.as_str(), cfg.degrade.weight(c), stats.frequency(c));
        }
    }
    Ok(0)
}
