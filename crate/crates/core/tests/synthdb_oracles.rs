//! Oracles tying the synthetic generator, the degradation model and the
//! quality assessor together.

use fpvuln::imgcore::{estimate_orientation_field, orientation_diff, preprocess, segment_foreground};
use fpvuln::minutiae::{extract_minutiae, match_minutiae, MinutiaTemplate};
use fpvuln::quality::assess_quality;
use fpvuln::synthdb::degrade::{degrade_to_fake, degrade_with_severity, Cooperation};
use fpvuln::synthdb::{CorpusSpec, GeneratorParams, MasterPrint, Realness, SensorProfile};

const DIM: usize = 256;

fn master(seed: u64) -> MasterPrint {
    MasterPrint::generate(&GeneratorParams::random(seed, DIM, DIM), DIM, DIM).unwrap()
}

fn raw(img: &fpvuln::FingerprintImage) -> f64 {
    assess_quality(img).unwrap().0.raw
}

#[test]
fn quality_thresholds_match_calibration() {
    let (mut pristine_ok, mut degraded_ok) = (0, 0);
    for seed in 0..100 {
        let m = master(seed);
        let base = m.base();
        if assess_quality(&base).unwrap().1.get() <= 2 {
            pristine_ok += 1;
        }
        if assess_quality(&degrade_with_severity(&base, 1.0, seed))
            .unwrap()
            .1
            .get()
            >= 4
        {
            degraded_ok += 1;
        }
    }
    assert!(pristine_ok >= 95, "pristine in levels 1-2: {pristine_ok}/100");
    assert!(degraded_ok >= 95, "degraded in levels 4-5: {degraded_ok}/100");
}

#[test]
fn quality_non_increasing_under_degradation() {
    for seed in 0..30 {
        let base = master(seed).impression(seed);
        let scores: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&s| raw(&degrade_with_severity(&base, s, seed + 7)))
            .collect();
        let violations: Vec<f64> = scores.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
        assert!(
            violations.is_empty() || (violations.len() == 1 && violations[0] < 0.02),
            "seed {seed}: {scores:?}"
        );
    }
}

#[test]
fn generated_prints_cover_frame_and_follow_field() {
    for seed in 0..20 {
        let params = GeneratorParams::random(seed, DIM, DIM);
        let img = MasterPrint::generate(&params, DIM, DIM).unwrap().base();
        let mask = segment_foreground(&img, 16).unwrap();
        assert!(
            mask.foreground_fraction() >= 0.6,
            "seed {seed}: {}",
            mask.foreground_fraction()
        );
        let field = estimate_orientation_field(&img, 16).unwrap();
        let (mut err, mut n) = (0.0, 0);
        for by in 1..field.rows - 1 {
            for bx in 1..field.cols - 1 {
                let (x, y) = ((bx * 16 + 8) as f64, (by * 16 + 8) as f64);
                err += orientation_diff(field.angle(bx, by), params.orientation_at(x, y));
                n += 1;
            }
        }
        assert!(err / (n as f64) < 0.15, "seed {seed}: mean error {}", err / n as f64);
    }
}

#[test]
fn texture_noise_lowers_quality() {
    for seed in 0..5 {
        let mut clean = GeneratorParams::random(seed, DIM, DIM);
        clean.noise_level = 0.0;
        let mut noisy = clean.clone();
        noisy.noise_level = 0.8;
        let a = raw(&MasterPrint::generate(&clean, DIM, DIM).unwrap().base());
        let b = raw(&MasterPrint::generate(&noisy, DIM, DIM).unwrap().base());
        assert!(a > b, "seed {seed}: {a} vs {b}");
    }
}

#[test]
fn impressions_match_better_than_impostors() {
    let fingers = 8;
    let templates: Vec<Vec<MinutiaTemplate>> = (0..fingers)
        .map(|f| {
            let m = master(100 + f);
            (0..4)
                .map(|s| {
                    let pre = preprocess(&m.impression(1000 * f + s)).unwrap();
                    extract_minutiae(&pre.image, &pre.mask)
                })
                .collect()
        })
        .collect();
    let mut impostor = Vec::new();
    for f in 0..templates.len() {
        for g in f + 1..templates.len() {
            for a in &templates[f] {
                for b in &templates[g] {
                    impostor.push(match_minutiae(a, b));
                }
            }
        }
    }
    impostor.sort_by(f64::total_cmp);
    let median = impostor[impostor.len() / 2];
    for (f, ts) in templates.iter().enumerate() {
        for i in 0..4 {
            for j in i + 1..4 {
                let s = match_minutiae(&ts[i], &ts[j]);
                assert!(s > median, "finger {f} pair ({i},{j}): {s} vs impostor median {median}");
            }
        }
    }
}

#[test]
fn heavier_penalty_lowers_quality() {
    for seed in 0..10 {
        let img = master(seed).impression(seed);
        let light = raw(&degrade_to_fake(&img, 0.2, Cooperation::Cooperative, seed));
        let heavy = raw(&degrade_to_fake(&img, 1.0, Cooperation::Cooperative, seed));
        assert!(heavy < light, "seed {seed}: {heavy} vs {light}");
    }
}

#[test]
fn noncooperative_fakes_are_not_better() {
    let mut ok = 0;
    for seed in 0..50 {
        let img = master(seed % 10).impression(seed);
        let coop = raw(&degrade_to_fake(&img, 0.3, Cooperation::Cooperative, seed));
        let noncoop = raw(&degrade_to_fake(&img, 0.3, Cooperation::NonCooperative, seed));
        if noncoop <= coop {
            ok += 1;
        }
    }
    assert!(ok >= 45, "non-cooperative <= cooperative in {ok}/50");
}

#[test]
fn fake_quality_orders_by_profile() {
    let spec = CorpusSpec {
        subjects: 3,
        fingers_per_subject: 2,
        samples_per_finger: 2,
        seed: 5,
        ..CorpusSpec::default()
    };
    let captures = spec.captures().unwrap();
    let means: Vec<f64> = SensorProfile::defaults()
        .iter()
        .map(|p| {
            let fakes: Vec<f64> = captures
                .iter()
                .filter(|c| c.key.profile == p.kind && c.key.realness == Realness::Fake)
                .map(|c| raw(&c.image))
                .collect();
            fakes.iter().sum::<f64>() / fakes.len() as f64
        })
        .collect();
    assert!(
        means[0] > means[1] && means[1] > means[2],
        "optical/capacitive/thermal: {means:?}"
    );
    let real: Vec<f64> = captures
        .iter()
        .filter(|c| c.key.realness == Realness::Real)
        .map(|c| raw(&c.image))
        .collect();
    let real_mean = real.iter().sum::<f64>() / real.len() as f64;
    assert!(real_mean > means[0], "real {real_mean} vs optical fakes {}", means[0]);
}
