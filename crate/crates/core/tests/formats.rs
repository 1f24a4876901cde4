mod common;

use std::path::Path;

use common::{random_samples, rng};
use hood::dataio::{
    read_checkpoint, read_dataset, write_checkpoint, write_dataset, write_stream_frame, write_stream_header, Dataset,
    DatasetKind, FrameStreamReader, SampleLabel,
};
use hood::dsp::{DspConfig, RdiPipeline};
use hood::model::{images_to_tensor, train, Category, HoodModel, ModelConfig, TrainConfig};
use hood::radar::{preset_scene, simulate_recording, FrameCube, PresetName, RadarConfig};
use hood::HoodError;

fn label() -> SampleLabel {
    SampleLabel { category: Some(Category::Static), ood: false, scene_id: 7, frame_index: 0 }
}

#[test]
fn paired_dataset_from_the_pipeline_round_trips() {
    let (radar, dsp) = (RadarConfig::default(), DspConfig::default());
    let mut scene = preset_scene(PresetName::IdStatic, 5);
    scene.duration = 10.5;
    let pairs = RdiPipeline::process_all(&radar, &dsp, simulate_recording(&radar, &scene).unwrap()).unwrap();
    let ds = Dataset::from_pairs(&pairs[..3], label()).unwrap();
    assert_eq!(ds.len(), 3);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.hds");
    write_dataset(&path, &ds).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back, ds);
    let bits = |d: &Dataset| d.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&ds));
    assert_eq!(std::fs::read(&path).unwrap(), ds.to_bytes().unwrap());
}

#[test]
fn each_corruption_has_its_own_error() {
    let ds = Dataset::new(DatasetKind::PairedRdi, vec![2, 4, 4], vec![label(); 2], vec![0.5; 64]).unwrap();
    let bytes = ds.to_bytes().unwrap();
    let p = Path::new("d.hds");

    let mut flipped = bytes.clone();
    let mid = bytes.len() - 40;
    flipped[mid] ^= 1;
    assert!(matches!(Dataset::from_bytes(&flipped, p), Err(HoodError::Checksum { .. })));

    let mut magic = bytes.clone();
    magic[1] ^= 0xff;
    assert!(matches!(Dataset::from_bytes(&magic, p), Err(HoodError::BadMagic { .. })));

    for cut in [4, 12, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(Dataset::from_bytes(&bytes[..cut], p), Err(HoodError::Truncated { .. })), "cut at {cut}");
    }
}

#[test]
fn empty_dataset_is_a_valid_file() {
    let ds = Dataset::new(DatasetKind::PairedRdi, vec![2, 64, 64], vec![], vec![]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.hds");
    write_dataset(&path, &ds).unwrap();
    let back = read_dataset(&path).unwrap();
    assert!(back.is_empty());
    assert_eq!(back.sample_dims, vec![2, 64, 64]);
}

#[test]
fn trained_model_reloads_with_identical_outputs() {
    let mut r = rng(11);
    let data = random_samples(8, 6, 6, &mut r);
    let mut model = HoodModel::<f32>::new(ModelConfig { latent_dim: 4, input_hw: 8 }, 11).unwrap();
    let cfg = TrainConfig { epochs: 3, batch_size: 4, ..TrainConfig::default() };
    let report = train(&mut model, &data, &cfg, None, |_| {}).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let id = write_checkpoint(&path, &model, Some(&report.optimizer)).unwrap();
    let back = read_checkpoint::<f32>(&path).unwrap();
    assert_eq!(back.id, id);
    assert!(back.model.named_state() == model.named_state());
    assert_eq!(back.require_optimizer().unwrap(), &report.optimizer);

    let macros: Vec<_> = data.iter().map(|s| &s.macro_rdi).collect();
    let micros: Vec<_> = data.iter().map(|s| &s.micro_rdi).collect();
    let xm = images_to_tensor::<f32>(&macros, 8).unwrap();
    let xu = images_to_tensor::<f32>(&micros, 8).unwrap();
    let a = model.reconstruct(&xm, &xu).unwrap();
    let b = back.model.reconstruct(&xm, &xu).unwrap();
    for (x, y) in
        [(&a.macro_s, &b.macro_s), (&a.macro_vs, &b.macro_vs), (&a.micro_s, &b.micro_s), (&a.micro_vs, &b.micro_vs)]
    {
        let bits = |t: &hood::nn::Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(x), bits(y));
    }
}

#[test]
fn inference_only_checkpoint_refuses_to_resume() {
    let model = HoodModel::<f32>::new(ModelConfig { latent_dim: 4, input_hw: 8 }, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    write_checkpoint(&path, &model, None).unwrap();
    let ck = read_checkpoint::<f32>(&path).unwrap();
    let err = ck.require_optimizer().unwrap_err();
    assert!(matches!(err, HoodError::MissingOptimizerState));
    assert!(err.to_string().contains("resume"));
}

#[test]
fn live_stream_framing() {
    let radar = RadarConfig::default();
    let mut scene = preset_scene(PresetName::OodFan, 3);
    scene.duration = 0.25;
    let frames: Vec<FrameCube> = simulate_recording(&radar, &scene).unwrap().collect::<Result<_, _>>().unwrap();
    let mut buf = Vec::new();
    write_stream_header(&mut buf, &radar).unwrap();
    frames.iter().for_each(|f| write_stream_frame(&mut buf, f).unwrap());

    let back: Vec<FrameCube> =
        FrameStreamReader::new(buf.as_slice(), &radar, Path::new("-")).unwrap().collect::<Result<_, _>>().unwrap();
    assert_eq!(back, frames);

    let other = RadarConfig { n_chirps: 32, ..radar.clone() };
    assert!(matches!(FrameStreamReader::new(buf.as_slice(), &other, Path::new("-")), Err(HoodError::Shape(_))));
    assert!(matches!(FrameStreamReader::new(&buf[..10], &radar, Path::new("-")), Err(HoodError::Truncated { .. })));
}
