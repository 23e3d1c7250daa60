use std::path::Path;

use omnict_core::eval::{read_samples, render_table, score_all, stratified_report, CompositeWeights};
use omnict_core::json::{read_json, write_stable};
use omnict_core::lm::checkpoint;
use omnict_core::lm::data::{prepare_records, read_records, write_demo, demo_config};
use omnict_core::lm::gradcheck::{grad_check, small_config, small_instance, COORDS_PER_TENSOR, DEFAULT_EPS, TOLERANCE};
use omnict_core::lm::{train as run_training, TrainConfig, Trainable};
use omnict_core::pipeline::{init_projection, tokenize as run_tokenize, FrontEnd, OrganRequest};
use omnict_core::volume::{
    load_nifti, load_raw, resample_mask_nearest, resample_trilinear, window_and_normalize, OrganMask,
};
use omnict_core::{omct, Error, Modality, PipelineConfig, Result, Tensor};
use serde_json::json;

use crate::manifest::{self, ensure_dir};
use crate::InputFormat;

pub fn preprocess(
    input: &Path,
    format: InputFormat,
    mask: Option<&Path>,
    out: &Path,
    window: (f32, f32),
    size: [usize; 3],
) -> Result<()> {
    let (volume, mask, meta) = match format {
        InputFormat::Nifti => {
            let (v, meta) = load_nifti(input)?;
            let m = match mask {
                Some(p) => {
                    let (mv, _) = load_nifti(p)?;
                    let m = OrganMask::from_tensor(mv.tensor())?;
                    if m.dims() != v.dims() {
                        return Err(Error::Validation(format!(
                            "mask dims {:?} differ from volume dims {:?}",
                            m.dims(),
                            v.dims()
                        )));
                    }
                    Some(m)
                }
                None => None,
            };
            (v, m, meta)
        }
        InputFormat::Raw => {
            let (v, m) = load_raw(input, mask)?;
            let meta = v.meta.clone();
            (v, m, meta)
        }
    };
    let input_dims = volume.dims();
    let windowed = window_and_normalize(&volume, window.0, window.1)?;
    let resampled = resample_trilinear(&windowed, size)?;
    let mask = mask.map(|m| resample_mask_nearest(&m, size)).transpose()?;

    ensure_dir(out)?;
    omct::write(resampled.tensor(), out.join("volume.omct"))?;
    if let Some(m) = &mask {
        omct::write(&m.to_tensor(), out.join("mask.omct"))?;
    }
    manifest::write(
        out,
        "preprocess",
        json!({
            "input": input,
            "mask": mask.is_some(),
            "source": meta,
            "window": [window.0, window.1],
            "input_shape": input_dims,
            "output_shape": size,
        }),
    )
}

pub struct TokenizeArgs<'a> {
    pub volume: &'a Path,
    pub mask: Option<(&'a Path, u8)>,
    pub modality: Modality,
    pub config: Option<&'a Path>,
    pub checkpoint: Option<&'a Path>,
    pub out: &'a Path,
    pub seed: Option<u64>,
}

fn load_config(path: Option<&Path>, seed: Option<u64>, default: impl FnOnce() -> PipelineConfig) -> Result<PipelineConfig> {
    let mut config = match path {
        Some(p) => read_json(p)?,
        None => default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

pub fn tokenize(a: TokenizeArgs<'_>) -> Result<()> {
    let (front, projection) = match a.checkpoint {
        Some(dir) => {
            // a checkpoint fixes every random quantity; the seed is not consulted
            let (front, model, _) = checkpoint::load(dir)?;
            (front, model.mhp.to_params())
        }
        None => {
            let config = load_config(a.config, a.seed, PipelineConfig::default)?;
            let projection = init_projection(&config)?;
            (FrontEnd::new(config)?, projection)
        }
    };
    let (volume, mask) = load_raw(a.volume, a.mask.map(|(p, _)| p))?;
    let request = mask.as_ref().zip(a.mask).map(|(m, (_, organ))| OrganRequest { mask: m, organ });
    let t = run_tokenize(&front, &projection, volume.tensor(), a.modality, request)?;

    ensure_dir(a.out)?;
    omct::write(&t.tokens, a.out.join("tokens.omct"))?;
    if let Some(tm) = &t.token_mask {
        let flags = tm.flags().iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
        omct::write(&Tensor::from_vec(&tm.dims(), flags)?, a.out.join("token_mask.omct"))?;
    }
    manifest::write(
        a.out,
        "tokenize",
        json!({
            "volume": a.volume,
            "modality": a.modality.as_str(),
            "organ": a.mask.map(|(_, o)| o),
            "config": front.config,
            "shapes": t.shapes,
            "organ_tokens": t.organ_tokens,
            "empty_organ": t.empty_organ,
        }),
    )
}

pub fn gradcheck(config: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let config = load_config(config, seed, || small_config(0))?;
    let (_, model, batch) = small_instance(&config)?;
    let report = grad_check(&model, &batch, DEFAULT_EPS, COORDS_PER_TENSOR, config.seed)?;
    for p in &report.params {
        println!("{:<18} {:>8} {:>4}/{:<6} {:.3e}", p.name, p.group, p.checked, p.size, p.max_rel_err);
    }
    println!("max relative error {:.3e} (tolerance {TOLERANCE:.0e})", report.max_rel_err);
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_stable(&report, dir.join("gradcheck.json"))?;
        manifest::write(dir, "gradcheck", json!({ "config": config, "passed": report.passed(TOLERANCE) }))?;
    }
    if !report.passed(TOLERANCE) {
        return Err(Error::NumericalCheck(format!(
            "max relative gradient error {:.3e} exceeds {TOLERANCE:.0e}",
            report.max_rel_err
        )));
    }
    Ok(())
}

pub struct TrainArgs<'a> {
    pub stage: u8,
    pub data: &'a Path,
    pub out: &'a Path,
    pub steps: usize,
    pub batch_size: usize,
    pub init: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub freeze_text_embed: bool,
    pub lr_adapter: Option<f64>,
    pub lr_llm: Option<f64>,
}

pub fn train(a: TrainArgs<'_>) -> Result<()> {
    let (front, mut model, seed) = match a.init {
        Some(dir) => {
            let (front, model, m) = checkpoint::load(dir)?;
            (front, model, a.seed.unwrap_or(m.seed))
        }
        None => {
            let config = load_config(a.config, a.seed, PipelineConfig::default)?;
            let model = Trainable::init(&config)?;
            let seed = config.seed;
            (FrontEnd::new(config)?, model, seed)
        }
    };
    let mut cfg = TrainConfig::for_stage(a.stage, a.steps, seed)?;
    cfg.batch_size = a.batch_size;
    cfg.freeze_text_embed = a.freeze_text_embed;
    if let Some(lr) = a.lr_adapter {
        cfg.lr_adapter = lr;
    }
    if let Some(lr) = a.lr_llm {
        cfg.lr_llm = lr;
    }
    cfg.validate()?;

    let records = read_records(a.data)?;
    let base = a.data.parent().unwrap_or(Path::new("."));
    let samples = prepare_records(&front, &records, base)?;
    let outcome = run_training(&mut model, &samples, &cfg)?;
    println!(
        "stage {} trained {} steps on {} samples, final loss {:.6}",
        cfg.stage,
        outcome.steps,
        samples.len(),
        outcome.final_loss
    );
    let args: Vec<String> = std::env::args().skip(1).collect();
    let run = json!({
        "command": "train",
        "args": args,
        "version": env!("CARGO_PKG_VERSION"),
        "data": a.data,
        "init": a.init,
        "train": cfg,
        "final_loss": outcome.final_loss,
    });
    checkpoint::save(a.out, &front, &model, cfg.stage, outcome.steps, run, Some(&outcome.loss_curve))?;
    Ok(())
}

pub fn evaluate(pred: &Path, out: &Path, weights: Option<&Path>) -> Result<()> {
    let w: CompositeWeights = match weights {
        Some(p) => read_json(p)?,
        None => CompositeWeights::default(),
    };
    w.validate()?;
    let samples = read_samples(pred)?;
    let report = stratified_report(&score_all(&samples, &w), &w)?;
    let table = render_table(&report);
    print!("{table}");
    ensure_dir(out)?;
    write_stable(&report, out.join("report.json"))?;
    std::fs::write(out.join("report.txt"), &table).map_err(|e| Error::io(out.join("report.txt"), e))?;
    manifest::write(out, "evaluate", json!({ "pred": pred, "samples": samples.len(), "weights": w }))
}

pub fn demo_data(out: &Path, seed: u64) -> Result<()> {
    let data = write_demo(out, seed)?;
    write_stable(&demo_config(seed), out.join("config.json"))?;
    println!("{}", data.display());
    manifest::write(out, "demo-data", json!({ "seed": seed, "data": "data.jsonl", "config": "config.json" }))
}
