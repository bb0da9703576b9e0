use super::*;
use crate::models::checkpoint::Checkpoint;
use crate::nn::Tensor;
use crate::report::ReportIndex;
use crate::synth::{generate_scenario, synthetic_domain, DomainSpec, Scenario, ScenarioSpec};

fn scenario(rows: usize, cols: usize, seed: u64) -> Scenario {
    let spec = ScenarioSpec {
        seed,
        domain: DomainSpec { rows, cols },
        ..ScenarioSpec::default()
    };
    generate_scenario(&spec, &synthetic_domain(rows, cols).unwrap()).unwrap()
}

fn config(variant: Variant, epochs: usize) -> ModelConfig {
    ModelConfig {
        epochs,
        ..ModelConfig::for_variant(variant, 7)
    }
}

fn history(sc: &Scenario, k: u32) -> Vec<Report<f64>> {
    sc.reports[..(k - 1) as usize].to_vec()
}

fn bits(g: &GaussianField<f64>) -> Vec<u64> {
    g.mu.as_slice()
        .iter()
        .chain(g.sigma.as_slice())
        .map(|v| v.to_bits())
        .collect()
}

#[test]
fn members_variant_is_not_trainable() {
    let sc = scenario(10, 8, 1);
    let err = train_model(&config(Variant::Members, 1), &history(&sc, 4), &sc.domain);
    assert!(matches!(err, Err(Error::InvalidArgument(_))));
}

#[test]
fn empty_history_is_rejected() {
    let sc = scenario(10, 8, 1);
    assert!(train_model::<f64>(&config(Variant::Cnn, 1), &[], &sc.domain).is_err());
}

#[test]
fn zero_epochs_leaves_initialization() {
    let sc = scenario(10, 8, 1);
    let h = history(&sc, 5);
    let m = train_model(&config(Variant::CnnAll, 0), &h, &sc.domain).unwrap();
    assert_eq!(m.summary.steps, 0);
    assert_eq!(m.summary.initial_loss, m.summary.final_loss);

    // the same seed yields the same freshly initialized kernels
    let Network::Cnn(net) = &m.network else { panic!("expected a CNN") };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fresh = CnnNet::<f64>::new(25, 32, net.norm.clone(), net.head, &mut rng).unwrap();
    assert_eq!(net.conv1.weight.value, fresh.conv1.weight.value);
    assert_eq!(net.conv2.weight.value, fresh.conv2.weight.value);
}

#[test]
fn cnn_all_training_reduces_loss() {
    let sc = scenario(16, 14, 3);
    let m = train_model(&config(Variant::CnnAll, 100), &history(&sc, 8), &sc.domain).unwrap();
    assert_eq!(m.summary.n_reports, 2 * (2 * 7 - 1));
    assert!(
        m.summary.final_loss < m.summary.initial_loss,
        "{:?}",
        m.summary
    );
}

#[test]
fn fcn_training_reduces_loss() {
    let sc = scenario(16, 14, 3);
    let m = train_model(&config(Variant::Fcn, 100), &history(&sc, 8), &sc.domain).unwrap();
    assert!(m.summary.final_loss < m.summary.initial_loss, "{:?}", m.summary);
}

#[test]
fn variants_differ_only_in_input_channels() {
    let sc = scenario(10, 8, 2);
    let h = history(&sc, 5);
    let widths: Vec<usize> = [Variant::Cnn, Variant::CnnDyn, Variant::CnnAug, Variant::CnnAll]
        .iter()
        .map(|&v| match train_model(&config(v, 0), &h, &sc.domain).unwrap().network {
            Network::Cnn(n) => n.n_inputs(),
            Network::Fcn(_) => unreachable!(),
        })
        .collect();
    assert_eq!(widths, vec![20, 25, 20, 25]);

    // shared member-channel kernels start identical; the extra ones are new
    let a = train_model(&config(Variant::Cnn, 0), &h, &sc.domain).unwrap();
    let b = train_model(&config(Variant::CnnDyn, 0), &h, &sc.domain).unwrap();
    let (Network::Cnn(a), Network::Cnn(b)) = (a.network, b.network) else { unreachable!() };
    assert_eq!(a.conv1.kh, b.conv1.kh);
    assert_eq!(a.conv2.weight.value.shape(), b.conv2.weight.value.shape());
}

#[test]
fn training_is_reproducible() {
    let sc = scenario(10, 8, 4);
    let h = history(&sc, 6);
    let target = sc.reports[5].forecast_only();
    let track: Vec<LatLon> = sc.reports[..6].iter().map(|r| r.tc_center).collect();
    for v in [Variant::CnnAll, Variant::Fcn] {
        let a = train_model(&config(v, 15), &h, &sc.domain).unwrap();
        let b = train_model(&config(v, 15), &h, &sc.domain).unwrap();
        assert_eq!(
            bits(&a.predict(&target, &track, &sc.domain).unwrap()),
            bits(&b.predict(&target, &track, &sc.domain).unwrap())
        );
    }
}

#[test]
fn per_report_batches_train_too() {
    let sc = scenario(10, 8, 4);
    let cfg = ModelConfig {
        batch_reports: 1,
        ..config(Variant::Cnn, 20)
    };
    let m = train_model(&cfg, &history(&sc, 6), &sc.domain).unwrap();
    assert_eq!(m.summary.steps, 20 * 5);
    assert!(m.summary.final_loss < m.summary.initial_loss);
}

#[test]
fn fcn_is_cellwise() {
    let sc = scenario(10, 8, 5);
    let m = train_model(&config(Variant::Fcn, 5), &history(&sc, 5), &sc.domain).unwrap();
    let Network::Fcn(net) = &m.network else { panic!("expected an FCN") };
    let track: Vec<LatLon> = sc.reports[..5].iter().map(|r| r.tc_center).collect();
    let stack = assemble_stack(&sc.reports[4], &sc.domain, &track, 100.0).unwrap();
    let cells: Vec<usize> = (0..sc.domain.n_cells()).collect();
    let mut shuffled = cells.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let (a, b) = net.evaluate(&net.input_tensor(&stack, &cells).unwrap()).unwrap();
    let (pa, pb) = net.evaluate(&net.input_tensor(&stack, &shuffled).unwrap()).unwrap();
    for (j, &i) in shuffled.iter().enumerate() {
        assert_eq!(pa[j].to_bits(), a[i].to_bits());
        assert_eq!(pb[j].to_bits(), b[i].to_bits());
    }
}

#[test]
fn fcn_geo_dyn_flag_widens_inputs() {
    assert_eq!(fcn_input_width(false), 2);
    assert_eq!(fcn_input_width(true), 7);
    let sc = scenario(10, 8, 5);
    let cfg = ModelConfig {
        use_geo_dyn: true,
        ..config(Variant::Fcn, 3)
    };
    let m = train_model(&cfg, &history(&sc, 5), &sc.domain).unwrap();
    let Network::Fcn(net) = &m.network else { panic!("expected an FCN") };
    assert_eq!(net.dense1.n_in, 7);
}

#[test]
fn rolling_run_covers_targets() {
    let sc = scenario(10, 8, 6);
    let configs = [config(Variant::Members, 0), config(Variant::Cnn, 3)];
    let targets: Vec<u32> = (6..=11).collect();
    let out = rolling_origin_run(&configs, &sc.reports, &sc.domain, &targets).unwrap();
    assert_eq!(out.predictions.len(), 12);
    for &k in &targets {
        assert!(out.get(Variant::Members, k).unwrap().summary.is_none());
        assert!(out.get(Variant::Cnn, k).unwrap().summary.is_some());
    }
}

#[test]
fn members_needs_no_history() {
    let sc = scenario(10, 8, 6);
    let configs = [config(Variant::Members, 0), config(Variant::Cnn, 3)];
    let out = rolling_origin_run(&configs, &sc.reports, &sc.domain, &[1]).unwrap();
    assert_eq!(out.predictions.len(), 1);
    assert_eq!(out.predictions[0].variant, Variant::Members);
    assert_eq!(out.skipped.len(), 1);
    assert_eq!(out.skipped[0].0, Variant::Cnn);
}

#[test]
fn rolling_predictions_ignore_the_future() {
    let sc = scenario(10, 8, 8);
    let k = 7u32;
    let configs = [config(Variant::CnnAll, 5), config(Variant::Fcn, 5)];
    let base = rolling_origin_run(&configs, &sc.reports, &sc.domain, &[k]).unwrap();
    let mut mutated = sc.reports.clone();
    for r in mutated.iter_mut().skip((k - 1) as usize) {
        if let Some(obs) = r.observation.as_mut() {
            *obs = obs.map(|v| v * 3.0 + 1.0);
        }
        if r.index > ReportIndex::integer(k) {
            for m in &mut r.members {
                *m = m.map(|v| v + 50.0);
            }
            r.tc_center = LatLon::new(r.tc_center.lat + 1.0, r.tc_center.lon);
        }
    }
    let again = rolling_origin_run(&configs, &mutated, &sc.domain, &[k]).unwrap();
    for (a, b) in base.predictions.iter().zip(&again.predictions) {
        assert_eq!(bits(&a.forecast), bits(&b.forecast));
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let sc = scenario(10, 8, 9);
    let h = history(&sc, 5);
    let target = sc.reports[4].forecast_only();
    let track: Vec<LatLon> = sc.reports[..5].iter().map(|r| r.tc_center).collect();
    for v in [Variant::CnnDyn, Variant::Fcn] {
        let m = train_model(&config(v, 4), &h, &sc.domain).unwrap();
        let text = Checkpoint::from_model(&m).to_json().unwrap();
        let back: TrainedModel<f64> = Checkpoint::from_json(&text).unwrap().into_model().unwrap();
        assert_eq!(
            bits(&m.predict(&target, &track, &sc.domain).unwrap()),
            bits(&back.predict(&target, &track, &sc.domain).unwrap())
        );
        assert_eq!(Checkpoint::from_model(&back).to_json().unwrap(), text);
    }

    let h32: Vec<Report<f32>> = h.iter().map(Report::cast).collect();
    let m32 = train_model(&config(Variant::Cnn, 3), &h32, &sc.domain).unwrap();
    let cp = Checkpoint::from_model(&m32);
    assert_eq!(cp.scalar, "f32");
    let back: TrainedModel<f32> = Checkpoint::from_json(&cp.to_json().unwrap())
        .unwrap()
        .into_model()
        .unwrap();
    let (Network::Cnn(a), Network::Cnn(b)) = (&m32.network, &back.network) else { unreachable!() };
    assert_eq!(a.conv1.weight.value, b.conv1.weight.value);
    assert_eq!(a.conv2.bias.value, b.conv2.bias.value);
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let sc = scenario(10, 8, 9);
    let m = train_model(&config(Variant::Cnn, 0), &history(&sc, 4), &sc.domain).unwrap();
    let mut cp = Checkpoint::from_model(&m);
    cp.layers[1].weight.shape = vec![3, 32, 1, 1];
    assert!(cp.into_model::<f64>().is_err());
    let mut cp = Checkpoint::from_model(&m);
    cp.version = 99;
    assert!(cp.into_model::<f64>().is_err());
}

#[test]
fn divergence_is_reported() {
    let sc = scenario(10, 8, 9);
    let mut h = history(&sc, 4);
    h[0].members[0] = h[0].members[0].map(|_| f64::MAX);
    let err = train_model(&config(Variant::Cnn, 3), &h, &sc.domain).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
}

#[test]
fn track_is_deduplicated_by_index() {
    let sc = scenario(10, 8, 9);
    let cfg = config(Variant::CnnAug, 0);
    let reports = training_reports(&cfg, &history(&sc, 4)).unwrap();
    // 1, 1n, 1.5, 1.5n, 2, 2n, ...
    let t = track_through(&reports, 3);
    assert_eq!(t, vec![sc.reports[0].tc_center, reports[2].tc_center]);
    assert_eq!(track_through(&reports, reports.len() - 1).len(), 5);
}

#[test]
fn input_tensor_shape() {
    let sc = scenario(10, 8, 9);
    let m = train_model(&config(Variant::CnnAug, 0), &history(&sc, 4), &sc.domain).unwrap();
    let Network::Cnn(net) = &m.network else { unreachable!() };
    let track = [sc.reports[0].tc_center];
    let stack = assemble_stack(&sc.reports[0], &sc.domain, &track, 100.0).unwrap();
    let x: Tensor<f64> = net.input_tensor(&stack).unwrap();
    assert_eq!(x.shape(), &[20, 10, 8]);
}

#[test]
fn single_precision_tracks_double() {
    let sc = scenario(12, 10, 5);
    let h = history(&sc, 6);
    let h32: Vec<Report<f32>> = h.iter().map(Report::cast).collect();
    let target = sc.reports[5].forecast_only();
    let track = track_through(&sc.reports, 5);
    let m64 = train_model(&config(Variant::CnnAll, 100), &h, &sc.domain).unwrap();
    let m32 = train_model(&config(Variant::CnnAll, 100), &h32, &sc.domain).unwrap();
    let p64 = m64.predict(&target, &track, &sc.domain).unwrap();
    let p32 = m32.predict(&target.cast(), &track, &sc.domain).unwrap();
    let worst = p64
        .mu
        .as_slice()
        .iter()
        .zip(p32.mu.as_slice())
        .map(|(a, &b)| (a - f64::from(b)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.01, "max |mu64 - mu32| = {worst} mm");
}
