use blockpred::dataset::{build_meta_dataset, GenerationConfig, LabelSpec, MetaDataset};
use blockpred::evaluation::{
    adaptation_sweep, build_cdf, extract_onset_events, measure_prediction_times, model_probabilities,
    naive_probabilities, oracle_probabilities, EvalConfig, InitKind, Initialization, OnsetEvent, PredictionTimeRecord,
};
use blockpred::nn::{init_params, ModelDims, ModelParams};
use blockpred::scenario::ScenarioDistribution;
use blockpred::training::AdaptConfig;
use blockpred::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GAMMA0: f64 = -20.0;

fn random_trace(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    let mut blocked = false;
    (0..len)
        .map(|_| {
            if rng.random_bool(if blocked { 0.2 } else { 0.02 }) {
                blocked = !blocked;
            }
            if blocked {
                rng.random_range(1e-4..0.01)
            } else {
                rng.random_range(0.011..3.0)
            }
        })
        .collect()
}

fn brute_force_events(row: &[f32], clean: usize) -> Vec<usize> {
    let blocked = |t: usize| row[t] <= 0.01;
    (clean.max(1)..row.len())
        .filter(|&t| blocked(t) && (t - clean.max(1)..t).all(|s| !blocked(s)))
        .collect()
}

#[test]
fn event_extraction_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut total = 0;
    for trial in 0..100 {
        let row = random_trace(&mut rng, 2000);
        let clean = [1, 10, 25, 50][trial % 4];
        let fast: Vec<usize> = extract_onset_events(&row, 0, GAMMA0, clean).iter().map(|e| e.onset).collect();
        assert_eq!(fast, brute_force_events(&row, clean), "trial {trial}");
        total += fast.len();
    }
    assert!(total > 100);
}

#[test]
fn prediction_times_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let row = random_trace(&mut rng, 1000);
        let probs: Vec<f64> = (0..1000).map(|_| rng.random::<f64>().powi(6)).collect();
        let (xi, tau, horizon) = (rng.random_range(0..10), rng.random_range(1..30), rng.random_range(0..30));
        let events = extract_onset_events(&row, 0, GAMMA0, 50);
        for rec in measure_prediction_times(&probs, &events, xi, tau, horizon, 0.5) {
            let t0 = rec.event.onset;
            let start = t0 - xi - tau;
            let mut expected = None;
            for t in start..=(t0 + horizon).min(999) {
                if probs[t] > 0.5 {
                    expected = Some(t - start);
                    break;
                }
            }
            assert_eq!(rec.relative_time, expected);
        }
    }
}

fn small_dataset(labels: LabelSpec, seed: u64) -> MetaDataset {
    build_meta_dataset(&GenerationConfig {
        scenario: ScenarioDistribution {
            devices: 5,
            ..Default::default()
        },
        tasks: 3,
        slots: 3000,
        labels,
        seed,
    })
    .unwrap()
}

#[test]
fn naive_fires_tau_slots_late_and_labels_fire_on_time() {
    for tau in [1, 5, 25] {
        let ds = small_dataset(LabelSpec::any(0, tau), 3);
        let mut events = 0;
        for task in &ds.tasks {
            for k in 0..task.devices() {
                let evs = extract_onset_events(task.trace.snr_row(k), k, task.gamma0_db(), 50);
                events += evs.len();
                let naive = measure_prediction_times(&naive_probabilities(&task.observations(k)), &evs, 0, tau, 25, 0.5);
                assert!(naive.iter().all(|r| r.relative_time == Some(tau)));
                let oracle = measure_prediction_times(&oracle_probabilities(&task.labels[k]), &evs, 0, tau, 25, 0.5);
                assert!(oracle.iter().all(|r| r.relative_time == Some(0)));
            }
        }
        assert!(events > 0);
    }
}

fn tiny_inits(devices: usize) -> Vec<Initialization<f32>> {
    let dims = ModelDims::uniform(2 * devices, 6);
    vec![
        Initialization::model(InitKind::Maml, init_params(dims, 1).unwrap()),
        Initialization::model(InitKind::Random, init_params(dims, 2).unwrap()),
        Initialization::naive(),
    ]
}

fn eval_cfg() -> EvalConfig {
    EvalConfig {
        t_test: vec![0, 200, 600],
        ..Default::default()
    }
}

#[test]
fn sweep_shape_and_controlled_comparison() {
    let ds = small_dataset(LabelSpec::any(0, 25), 4);
    let inits = tiny_inits(5);
    let report = adaptation_sweep(&inits, &ds.tasks, &AdaptConfig::default(), &eval_cfg()).unwrap();
    assert_eq!(report.summaries.len(), 3 * 3);
    assert!(!report.events.is_empty());
    assert_eq!(report.records.len(), report.events.len() * 9);
    for s in &report.summaries {
        assert_eq!(s.cdf.events, report.events.len());
        assert!(s.cdf.fractions.windows(2).all(|w| w[0] <= w[1]));
        let cap = 1.0 - s.cdf.censored as f64 / s.cdf.events as f64;
        assert!(s.cdf.fractions.last().map_or(true, |&f| (f - cap).abs() < 1e-12));
    }
    for kind in [InitKind::Maml, InitKind::Random, InitKind::Naive] {
        for t in [0, 200, 600] {
            let ids: Vec<usize> = report
                .records
                .iter()
                .filter(|r| r.init == kind && r.t_test == t)
                .map(|r| r.event_id)
                .collect();
            assert_eq!(ids, (0..report.events.len()).collect::<Vec<_>>());
        }
    }
    assert_eq!(report.median(InitKind::Naive, 0), Some(25.0));
}

#[test]
fn zero_length_adaptation_evaluates_the_raw_init() {
    let ds = small_dataset(LabelSpec::any(0, 25), 5);
    let inits = tiny_inits(5);
    let cfg = eval_cfg();
    let report = adaptation_sweep(&inits, &ds.tasks, &AdaptConfig::default(), &cfg).unwrap();
    let theta = inits[0].params.as_ref().unwrap();
    let mut expected = Vec::new();
    for task in &ds.tasks {
        let suffix = task.slice(600, task.slots()).unwrap();
        for k in 0..5 {
            let evs = extract_onset_events(suffix.trace.snr_row(k), k, GAMMA0, 50);
            let probs = model_probabilities(theta, &suffix.observations(k)).unwrap();
            expected.extend(measure_prediction_times(&probs, &evs, 0, 25, 25, 0.5).iter().map(|r| r.relative_time));
        }
    }
    let got: Vec<Option<usize>> = report
        .records
        .iter()
        .filter(|r| r.init == InitKind::Maml && r.t_test == 0)
        .map(|r| r.relative_time)
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn slots_between_adaptation_and_evaluation_are_never_read() {
    let ds = small_dataset(LabelSpec::any(0, 25), 6);
    let inits = tiny_inits(5);
    let cfg = EvalConfig {
        t_test: vec![300],
        adapt_slots: 800,
        ..Default::default()
    };
    let clean = adaptation_sweep(&inits, &ds.tasks, &AdaptConfig::default(), &cfg).unwrap();
    let mut poisoned = ds.tasks.clone();
    for task in &mut poisoned {
        let slots = task.slots();
        for k in 0..task.devices() {
            task.trace.snr[k * slots + 300..k * slots + 800].iter_mut().for_each(|g| *g = f32::NAN);
        }
    }
    let dirty = adaptation_sweep(&inits, &poisoned, &AdaptConfig::default(), &cfg).unwrap();
    assert_eq!(clean, dirty);
}

#[test]
fn overlapping_adaptation_is_rejected() {
    let ds = small_dataset(LabelSpec::any(0, 25), 7);
    let cfg = EvalConfig {
        t_test: vec![100, 900],
        adapt_slots: 500,
        ..Default::default()
    };
    let err = adaptation_sweep(&tiny_inits(5), &ds.tasks, &AdaptConfig::default(), &cfg).unwrap_err();
    assert!(matches!(err, Error::Overlap { adapt: 900, eval_start: 500 }));
}

#[test]
fn sweep_is_deterministic_and_leaves_inits_alone() {
    let ds = small_dataset(LabelSpec::any(0, 25), 8);
    let inits = tiny_inits(5);
    let before: Vec<ModelParams<f32>> = inits.iter().filter_map(|i| i.params.clone()).collect();
    let a = adaptation_sweep(&inits, &ds.tasks, &AdaptConfig::default(), &eval_cfg()).unwrap();
    let b = adaptation_sweep(&inits, &ds.tasks, &AdaptConfig::default(), &eval_cfg()).unwrap();
    assert_eq!(a.records_csv(), b.records_csv());
    assert_eq!(a.summary_csv(), b.summary_csv());
    let after: Vec<ModelParams<f32>> = inits.iter().filter_map(|i| i.params.clone()).collect();
    assert_eq!(before, after);
    let lines = a.records_csv().lines().count();
    assert_eq!(lines, 1 + a.records.len());
}

proptest! {
    #[test]
    fn cdf_matches_counting(times in prop::collection::vec(prop::option::weighted(0.7, 0usize..60), 1..200)) {
        let records: Vec<PredictionTimeRecord> = times
            .iter()
            .map(|&t| PredictionTimeRecord {
                event: OnsetEvent { device: 0, onset: 100, clean_history: 100 },
                fire: t.map(|t| t + 75),
                relative_time: t,
            })
            .collect();
        let cdf = build_cdf(&records).unwrap();
        for t in 0..70 {
            let count = times.iter().filter(|x| matches!(x, Some(v) if *v <= t)).count();
            prop_assert_eq!(cdf.at(t), count as f64 / times.len() as f64);
        }
        prop_assert_eq!(cdf.censored, times.iter().filter(|x| x.is_none()).count());
    }
}
