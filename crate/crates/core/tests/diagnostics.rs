mod common;

use asymseg::autodiff::{Architecture, TinyNet};
use asymseg::data::{Split, TaskSpec};
use asymseg::diagnostics::{
    collect_logits, default_edges, export_histograms, logit_shift, read_histograms, LogitSample,
};
use asymseg::metrics::per_class_accuracy;
use rand::Rng;

fn net_and_images() -> (TinyNet<f64>, Vec<asymseg::data::Sample>) {
    let net = TinyNet::<f64>::init(Architecture::default_for(1, 2), &mut common::rng(12)).unwrap();
    let task = TaskSpec { height: 32, width: 32, target_ratio: [40.0, 80.0], ..TaskSpec::default() };
    let images = (0..4).map(|i| task.sample(i).unwrap()).collect();
    (net, images)
}

#[test]
fn crossing_rate_is_one_minus_class_accuracy() {
    let (net, images) = net_and_images();
    let train = collect_logits(&net, &images[..2], Split::Train, 500, 3).unwrap();
    let test = collect_logits(&net, &images[2..], Split::Test, 500, 3).unwrap();
    let report = logit_shift(&train, &test, &default_edges()).unwrap();
    for (samples, pick) in [(&train, 0), (&test, 1)] {
        let pred: Vec<usize> = samples
            .iter()
            .map(|s| if s.logits[1] > s.logits[0] { 1 } else { 0 })
            .collect();
        let truth: Vec<usize> = samples.iter().map(|s| s.class).collect();
        let acc = per_class_accuracy(&pred, &truth, 2);
        for c in 0..2 {
            let cs = report.class(c).unwrap();
            let stats = if pick == 0 { &cs.train } else { &cs.test };
            let wrong = pred.iter().zip(&truth).filter(|(p, t)| **t == c && p != t).count();
            assert_eq!((stats.crossing_rate * stats.count as f64).round() as usize, wrong);
            assert!((stats.crossing_rate - (1.0 - acc[c].unwrap())).abs() <= 2.0 * f64::EPSILON);
        }
    }
}

#[test]
fn delta_z_ignores_common_logit_shifts() {
    let mut rng = common::rng(4);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, split| {
        (0..200)
            .map(|_| LogitSample {
                logits: vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)],
                class: rng.random_range(0..2),
                split,
            })
            .collect::<Vec<_>>()
    };
    let train = draw(&mut rng, Split::Train);
    let test = draw(&mut rng, Split::Test);
    let base = logit_shift(&train, &test, &default_edges()).unwrap();
    let shift = |v: &[LogitSample], rng: &mut rand_chacha::ChaCha8Rng| {
        v.iter()
            .map(|s| {
                let c = rng.random_range(-100.0..100.0);
                LogitSample { logits: s.logits.iter().map(|z| z + c).collect(), ..s.clone() }
            })
            .collect::<Vec<_>>()
    };
    let moved = logit_shift(&shift(&train, &mut rng), &shift(&test, &mut rng), &default_edges()).unwrap();
    for c in 0..2 {
        let (a, b) = (base.class(c).unwrap(), moved.class(c).unwrap());
        assert!((a.delta_z - b.delta_z).abs() < 1e-12);
    }
}

#[test]
fn sampling_is_seeded_and_capped() {
    let (net, images) = net_and_images();
    let a = collect_logits(&net, &images, Split::Test, 50, 9).unwrap();
    let b = collect_logits(&net, &images, Split::Test, 50, 9).unwrap();
    assert_eq!(a, b);
    for c in 0..2 {
        assert_eq!(a.iter().filter(|s| s.class == c).count(), 50);
    }
    assert!(collect_logits(&net, &images, Split::Test, 0, 9).unwrap().is_empty());
}

#[test]
fn histogram_file_round_trips_and_conserves_counts() {
    let (net, images) = net_and_images();
    let train = collect_logits(&net, &images[..2], Split::Train, 300, 1).unwrap();
    let test = collect_logits(&net, &images[2..], Split::Test, 300, 1).unwrap();
    let report = logit_shift(&train, &test, &default_edges()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hist.csv");
    export_histograms(&report, &path).unwrap();
    let (edges, rows) = read_histograms(&path).unwrap();
    assert_eq!(edges, report.edges);
    for cs in &report.classes {
        for (split, stats) in [(Split::Train, &cs.train), (Split::Test, &cs.test)] {
            let counts: Vec<u64> = rows
                .iter()
                .filter(|r| r.class == cs.class && r.split == split)
                .map(|r| r.count)
                .collect();
            assert_eq!(counts, stats.histogram.counts);
            assert_eq!(counts.iter().sum::<u64>() as usize, stats.count);
        }
    }
}
