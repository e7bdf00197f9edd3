use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

use super::{display, DegradeArgs, RunManifest, THREADS_ENV};
use crate::config::RunConfig;
use crate::degrade::{degrade_with_rng, DegradeRecord};
use crate::pixels::Image;
use crate::rng::{stage, Rng};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const RUN_FILE: &str = "run.json";

/// One input image: `scene_id` is its directory relative to the input
/// root (`/`-separated, empty at the top level), `frame_id` its file stem.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Item {
    pub scene_id: String,
    pub frame_id: String,
    pub path: PathBuf,
}

#[derive(Serialize)]
struct RecordLine<'a> {
    scene_id: &'a str,
    frame_id: &'a str,
    #[serde(flatten)]
    record: &'a DegradeRecord,
}

pub fn collect_items(root: &Path) -> anyhow::Result<Vec<Item>> {
    let mut items = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.with_context(|| format!("walking {}", root.display()))?;
        let path = entry.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !entry.file_type().is_file() || !is_png {
            continue;
        }
        let rel = path.strip_prefix(root).expect("walk stays under root");
        let scene_id = rel
            .parent()
            .map(|p| {
                p.components()
                    .map(|c| c.as_os_str().to_str())
                    .collect::<Option<Vec<_>>>()
                    .map(|v| v.join("/"))
            })
            .unwrap_or(Some(String::new()))
            .with_context(|| format!("{} is not valid UTF-8", path.display()))?;
        let frame_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .with_context(|| format!("{} is not valid UTF-8", path.display()))?
            .to_string();
        items.push(Item {
            scene_id,
            frame_id,
            path: path.to_path_buf(),
        });
    }
    items.sort();
    for pair in items.windows(2) {
        if pair[0].scene_id == pair[1].scene_id && pair[0].frame_id == pair[1].frame_id {
            bail!(
                "{} and {} map to the same frame id",
                pair[0].path.display(),
                pair[1].path.display()
            );
        }
    }
    Ok(items)
}

/// Worker count: the request (or all cores), capped by `STORMKIT_THREADS`.
pub fn worker_count(requested: Option<usize>) -> anyhow::Result<usize> {
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut n = requested.unwrap_or(default);
    if n == 0 {
        bail!("--workers must be at least 1");
    }
    if let Ok(cap) = std::env::var(THREADS_ENV) {
        let cap: usize = cap
            .trim()
            .parse()
            .ok()
            .filter(|&c| c > 0)
            .with_context(|| format!("{THREADS_ENV}={cap} is not a positive integer"))?;
        n = n.min(cap);
    }
    Ok(n)
}

fn output_path(out: &Path, item: &Item) -> PathBuf {
    let mut p = out.to_path_buf();
    if !item.scene_id.is_empty() {
        p.push(&item.scene_id);
    }
    p.push(format!("{}.png", item.frame_id));
    p
}

pub fn run(args: DegradeArgs, argv: &[String]) -> anyhow::Result<i32> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = args.apply_prob {
        cfg.degrade.apply_prob = p;
    }
    if let Some(c) = args.category {
        cfg.degrade.force_category(c.into());
    }
    if let Some(s) = args.severity {
        cfg.degrade.force_severity(s.into());
    }
    cfg.degrade.validate()?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let workers = worker_count(args.workers.or(cfg.workers))?;

    if !args.input.is_dir() {
        bail!("input directory {} does not exist", args.input.display());
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let input = args.input.canonicalize()?;
    let out = args.out.canonicalize()?;
    if out.starts_with(&input) {
        bail!("output directory {} lies inside the input directory", args.out.display());
    }

    let items = collect_items(&input)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let records: Vec<DegradeRecord> = pool.install(|| {
        items
            .par_iter()
            .map(|item| -> anyhow::Result<DegradeRecord> {
                let img = Image::read_png(&item.path)?;
                let mut rng = Rng::for_item(seed, &item.scene_id, &item.frame_id, stage::DEGRADE);
                let (degraded, record) = degrade_with_rng(&img, &mut rng, &cfg.degrade);
                let dest = output_path(&args.out, item);
                if let Some(parent) = dest.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                degraded.write_png(&dest)?;
                Ok(record)
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;

    let log_path = args.out.join(RECORDS_FILE);
    let mut log = std::io::BufWriter::new(
        std::fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    let mut applied = 0;
    for (item, record) in items.iter().zip(&records) {
        applied += usize::from(record.applied);
        let line = RecordLine {
            scene_id: &item.scene_id,
            frame_id: &item.frame_id,
            record,
        };
        serde_json::to_writer(&mut log, &line)?;
        log.write_all(b"\n")?;
    }
    log.flush()?;

    let mut settings = vec![("seed".to_string(), seed.to_string())];
    settings.extend(cfg.degrade_entries());
    let mut manifest = RunManifest::new("degrade", argv, Some(seed), settings);
    manifest.inputs = items.iter().map(|i| display(&i.path)).collect();
    manifest.outputs = vec![display(&args.out)];
    manifest.write(&args.out.join(RUN_FILE))?;

    println!(
        "degraded {applied} of {} images into {} (workers: {workers})",
        items.len(),
        args.out.display()
    );
    Ok(0)
}
