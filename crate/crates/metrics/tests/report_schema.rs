use integscan_imaging::Mask;
use integscan_metrics::report::SCHEMA;
use integscan_metrics::{EvalAccumulator, Modality, Report, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample_report() -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut acc = EvalAccumulator::new(0.5, 0.005).unwrap();
    for i in 0..12 {
        let task = Task::ALL[i % 4];
        let modality = Modality::ALL[(i / 4) % 4];
        let gt = Mask::from_fn(16, 16, |y, x| (4..9).contains(&y) && (3..7 + i % 3).contains(&x)).unwrap();
        let probs: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..1.0)).collect();
        acc.add_forged(task, modality, &probs, &gt).unwrap();
        acc.add_pristine(task, modality, &vec![0.1; 256]);
    }
    acc.finish().unwrap()
}

#[test]
fn report_validates_against_schema() {
    let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let report = sample_report();
    let value: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    let errors: Vec<String> = validator.iter_errors(&value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    assert_eq!(report.per_task.len(), 4);
    assert_eq!(report.overall.n_images, 24);

    // The schema actually constrains: unknown keys and out-of-range scores fail.
    let mut bad = value.clone();
    bad["overall"]["pixel"]["f1"] = 1.5.into();
    assert!(!validator.is_valid(&bad));
    let mut bad = value.clone();
    bad["per_task"]["splice"] = value["overall"].clone();
    assert!(!validator.is_valid(&bad));
    let mut bad = value;
    bad["extra"] = 1.into();
    assert!(!validator.is_valid(&bad));
}

#[test]
fn report_json_round_trips_and_is_stable() {
    let a = sample_report();
    let s = a.to_json().unwrap();
    assert_eq!(Report::from_json(&s).unwrap(), a);
    assert_eq!(sample_report().to_json().unwrap(), s);
}
