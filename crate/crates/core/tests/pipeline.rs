use canids_core::dataset::{gen_synthetic, split, SyntheticSpec};
use canids_core::metrics::{all_classes, macro_average};
use canids_core::modelfile::{load_model, save_model};
use canids_core::nncore::allocate_layers;
use canids_core::rtdetect::{run_stream, StreamEvent};
use canids_core::trainer::{evaluate, train, TrainConfig};

#[test]
fn generate_train_save_and_stream() {
    let spec = SyntheticSpec::car_hacking_like(200);
    let ds = gen_synthetic(&spec, 5).unwrap();
    let (train_set, test_set) = split(&ds, 0.8, 5);
    let arch = allocate_layers(3, ds.num_classes(), 9).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        num_batches: 50,
        seed: 5,
        ..TrainConfig::default()
    };
    let (model, report) = train(&arch, &train_set, &cfg).unwrap();
    assert!(report.epochs.last().unwrap().loss < report.epochs[0].loss);

    let eval = evaluate(&model, &test_set).unwrap();
    let avg = macro_average(&all_classes(&eval.confusion));
    assert!(eval.confusion.accuracy().unwrap() > 0.95);
    assert!(avg.dr.unwrap() > 0.95);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(
        evaluate(&loaded, &test_set).unwrap().predictions,
        eval.predictions
    );

    // Frames of the DoS class stream back as DoS.
    let log: String = spec
        .frames(9)
        .unwrap()
        .iter()
        .filter(|(_, label)| label.0 == 1)
        .take(50)
        .map(|(f, _)| format!("({:.6}) can0 {f}\n", f.timestamp))
        .collect();
    let mut names = Vec::new();
    let stats = run_stream(&loaded, log.as_bytes(), |e| {
        if let StreamEvent::Detection(d) = e {
            names.push(d.class_name);
        }
    })
    .unwrap();
    assert_eq!(stats.classify.count, 50);
    assert!(names.iter().all(|n| n == "DoS"));
}
