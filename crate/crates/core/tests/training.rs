use std::fs;

use omnict_core::lm::checkpoint;
use omnict_core::lm::data::{prepare_records, read_records, write_demo};
use omnict_core::lm::gradcheck::{small_config, small_instance};
use omnict_core::lm::{train, Group, TrainConfig, Trainable};
use omnict_core::{Error, ErrorClass};

fn group_slices(model: &Trainable, group: Group) -> Vec<Vec<f64>> {
    model
        .specs()
        .iter()
        .zip(model.slices())
        .filter(|(s, _)| s.group == group)
        .map(|(_, v)| v.to_vec())
        .collect()
}

#[test]
fn stage_one_moves_only_the_projection() {
    let config = small_config(4);
    let (_, mut model, batch) = small_instance(&config).unwrap();
    let init = model.clone();
    let cfg = TrainConfig::for_stage(1, 12, 4).unwrap();
    train(&mut model, &batch, &cfg).unwrap();
    for g in [Group::Text, Group::Llm] {
        assert_eq!(group_slices(&model, g), group_slices(&init, g), "{}", g.as_str());
    }
    assert_ne!(group_slices(&model, Group::Adapter), group_slices(&init, Group::Adapter));
}

#[test]
fn frozen_text_table_stays_put_in_stage_two() {
    let config = small_config(5);
    let (_, mut model, batch) = small_instance(&config).unwrap();
    let init = model.clone();
    let mut cfg = TrainConfig::for_stage(2, 6, 5).unwrap();
    cfg.freeze_text_embed = true;
    train(&mut model, &batch, &cfg).unwrap();
    assert_eq!(model.text, init.text);
    assert_ne!(group_slices(&model, Group::Llm), group_slices(&init, Group::Llm));
}

#[test]
fn training_is_deterministic_and_checkpoints_restore_it() {
    let config = small_config(6);
    let (front, model, batch) = small_instance(&config).unwrap();
    let cfg = TrainConfig::for_stage(2, 8, 6).unwrap();
    let (mut a, mut b) = (model.clone(), model);
    let ra = train(&mut a, &batch, &cfg).unwrap();
    let rb = train(&mut b, &batch, &cfg).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a, b);

    let dir = tempfile::tempdir().unwrap();
    checkpoint::save(dir.path(), &front, &a, 2, 8, serde_json::Value::Null, Some(&ra.loss_curve)).unwrap();
    let (front2, restored, manifest) = checkpoint::load(dir.path()).unwrap();
    assert_eq!(manifest.step, 8);
    assert_eq!(front2.config, front.config);
    // checkpoints hold f32, so the restored loss agrees to f32 precision
    let refs: Vec<_> = batch.iter().collect();
    let (la, lr) = (a.batch_loss(&refs).unwrap(), restored.batch_loss(&refs).unwrap());
    assert!((la - lr).abs() < 1e-4 * la.max(1.0), "{la} vs {lr}");
}

#[test]
fn demo_files_feed_the_trainer() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_demo(dir.path(), 1).unwrap();
    let records = read_records(&data).unwrap();
    assert_eq!(records.len(), 8);
    let config = omnict_core::lm::data::demo_config(1);
    let front = omnict_core::pipeline::FrontEnd::new(config.clone()).unwrap();
    let samples = prepare_records(&front, &records, dir.path()).unwrap();
    let mut model = Trainable::init(&config).unwrap();
    let out = train(&mut model, &samples, &TrainConfig::for_stage(2, 3, 1).unwrap()).unwrap();
    assert_eq!(out.loss_curve.len(), 3);
    assert!(out.loss_curve.iter().all(|l| l.is_finite()));
}

#[test]
fn bad_record_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_demo(dir.path(), 1).unwrap();
    let mut text = fs::read_to_string(&data).unwrap();
    text.push_str("{\"volume_path\": 3}\n");
    fs::write(&data, text).unwrap();
    let err = read_records(&data).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Validation);
    assert!(matches!(err, Error::Format(_)));
    assert!(err.to_string().contains(":9"), "{err}");
}

#[test]
fn stage_must_be_one_or_two() {
    assert!(TrainConfig::for_stage(3, 10, 0).is_err());
    let mut cfg = TrainConfig::for_stage(1, 10, 0).unwrap();
    cfg.steps = 0;
    assert!(cfg.validate().is_err());
}
