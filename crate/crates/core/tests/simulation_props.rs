use gridstrength::corpus::{fig3_network, random_corpus_with_gscr};
use gridstrength::dynamics::{damping_ratio, DEFAULT_BRACKET};
use gridstrength::simulation::simulate_many;
use gridstrength::{
    attach_gfm, build_smib_model, compute_cgscr, direct_full_model, estimate_damping, reduce_spec,
    simulate, Channel, Disturbance, DisturbanceKind, GfmAttachment, GflDeviceParams,
    StateSpaceModel,
};

fn fig3_model(gamma: f64) -> StateSpaceModel {
    let red = reduce_spec(&fig3_network()).unwrap();
    let aug = attach_gfm(&red, &GfmAttachment::uniform(gamma, 0.16).unwrap()).unwrap();
    direct_full_model(&GflDeviceParams::calibrated(), &aug).unwrap()
}

fn kick(farm: &str) -> Disturbance {
    Disturbance {
        kind: DisturbanceKind::StateImpulse,
        farm: farm.into(),
        channel: Channel::PllAngle,
        magnitude: 0.02,
        t_apply: 0.0,
        allow_large: false,
    }
}

fn dominant(model: &StateSpaceModel) -> gridstrength::dynamics::Complex64 {
    *model
        .eigenvalues().unwrap()
        .iter()
        .filter(|l| l.im > 0.0)
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .unwrap()
}

#[test]
fn superposition() {
    let m = fig3_model(0.05);
    let a = Disturbance::default_step("WF1");
    let b = kick("WF3");
    let ra = simulate(&m, &a, 1.0, 1e-3).unwrap();
    let rb = simulate(&m, &b, 1.0, 1e-3).unwrap();
    let rab = simulate_many(&m, &[a, b], 1.0, 1e-3).unwrap();
    for f in 0..4 {
        for k in 0..rab.time.len() {
            let sum = ra.traces[f][k] + rb.traces[f][k];
            assert!((rab.traces[f][k] - sum).abs() < 1e-10);
        }
    }
}

#[test]
fn halving_dt_keeps_samples() {
    let m = fig3_model(0.128);
    let d = Disturbance::default_step("WF1");
    let coarse = simulate(&m, &d, 3.0, 1e-3).unwrap();
    let fine = simulate(&m, &d, 3.0, 5e-4).unwrap();
    assert_eq!(fine.time.len(), 2 * coarse.time.len() - 1);
    for f in 0..4 {
        let scale = coarse.traces[f].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for k in 0..coarse.time.len() {
            let diff = (coarse.traces[f][k] - fine.traces[f][2 * k]).abs();
            assert!(diff <= 1e-9 * scale, "farm {f} sample {k}: {diff}");
        }
    }
}

#[test]
fn smib_envelope_follows_rightmost_eigenvalue() {
    let m = build_smib_model(&GflDeviceParams::calibrated(), 2.0).unwrap().model;
    let r = simulate(&m, &Disturbance::default_step("device"), 3.0, 1e-3).unwrap();
    let est = estimate_damping(&r).remove(0).unwrap();
    let rate = -m.spectral_abscissa().unwrap();
    assert!((est.sigma - rate).abs() < 0.1 * rate, "{} vs {rate}", est.sigma);
}

#[test]
fn growth_sign_matches_eigenvalues_over_corpus() {
    let dev = GflDeviceParams::calibrated();
    let cg = compute_cgscr(&dev, DEFAULT_BRACKET).unwrap().cgscr;
    let mut corpus = vec![fig3_network()];
    corpus.extend(random_corpus_with_gscr(17, 20, 0.9, 3.0));
    for spec in corpus {
        let red = reduce_spec(&spec).unwrap();
        let model = direct_full_model(&dev, &red).unwrap();
        let max_re = model.spectral_abscissa().unwrap();
        if (gridstrength::gscr(&red).unwrap() - cg).abs() < 0.05 {
            continue;
        }
        // Distinct kicks at every farm so no mode is left unexcited.
        let kicks: Vec<Disturbance> = model
            .farm_ids
            .iter()
            .enumerate()
            .map(|(i, f)| Disturbance { magnitude: 0.01 + 0.013 * i as f64, ..kick(f) })
            .collect();
        let r = simulate_many(&model, &kicks, 3.0, 1e-3).unwrap();
        let quarter = r.time.len() / 4;
        let peak = |a: usize, b: usize| {
            r.traces.iter().flat_map(|y| &y[a..b]).fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let grows = r.truncated || peak(3 * quarter, r.time.len()) > peak(quarter, 2 * quarter);
        assert_eq!(grows, max_re > 0.0, "max Re {max_re}");
    }
}

#[test]
fn fig3_damping_improves_with_gamma() {
    let unstable = simulate(&fig3_model(0.0), &Disturbance::default_step("WF1"), 3.0, 1e-3).unwrap();
    let est = estimate_damping(&unstable).remove(0).unwrap();
    assert!(est.growing);

    let sized = simulate(&fig3_model(0.128), &Disturbance::default_step("WF1"), 3.0, 1e-3).unwrap();
    let y = sized.trace("WF1").unwrap();
    let last = *y.last().unwrap();
    let dev = |s: &[f64]| s.iter().fold(0.0f64, |a, v| a.max((v - last).abs()));
    assert!(dev(&y[y.len() - 200..]) < 0.05 * dev(y));
    assert!(estimate_damping(&sized).remove(0).unwrap().zeta > 0.0);

    let mut prev = f64::NEG_INFINITY;
    for gamma in [0.02, 0.05, 0.10, 0.128] {
        let model = fig3_model(gamma);
        let r = simulate(&model, &Disturbance::default_step("WF1"), 3.0, 1e-3).unwrap();
        let zeta = estimate_damping(&r).remove(0).unwrap().zeta;
        let expected = damping_ratio(dominant(&model));
        assert!((zeta - expected).abs() <= 0.1 * expected.abs(), "{zeta} vs {expected}");
        assert!(zeta > prev);
        prev = zeta;
    }
}
