use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn gaussian(mu: Vec<f64>, sigma: Vec<f64>, rows: usize, cols: usize) -> GaussianField<f64> {
    GaussianField::new(
        Field::from_vec(rows, cols, mu).unwrap(),
        Field::from_vec(rows, cols, sigma).unwrap(),
    )
    .unwrap()
}

fn island(rows: usize, cols: usize) -> GridDomain {
    // land everywhere except the first column
    let alt = (0..rows * cols)
        .map(|i| if i % cols == 0 { -9999.0 } else { (i % 7) as f64 * 150.0 })
        .collect();
    GridDomain::new(rows, cols, 22.0, 120.0, 0.05, alt).unwrap()
}

#[test]
fn exceedance_reference_points() {
    let g = gaussian(
        vec![200.0, 200.0 + 1.6448536269514722 * 30.0, 150.0],
        vec![10.0, 30.0, 1e-9],
        1,
        3,
    );
    let p = exceedance_probability(&g, 200.0);
    assert_eq!(p.as_slice()[0], 0.5);
    assert!((p.as_slice()[1] - 0.95).abs() < 1e-12);
    assert_eq!(p.as_slice()[2], 0.0);
}

#[test]
fn exceedance_map_filters_land_and_sorts() {
    let d = island(3, 4);
    let probs = Field::from_fn(3, 4, |r, c| 0.3 + 0.05 * (r * 4 + c) as f64);
    let map = exceedance_map(&probs, &d, 0.5).unwrap();
    let mut want: Vec<(usize, usize, f64)> = (0..12)
        .filter(|i| i % 4 != 0)
        .map(|i| (i / 4, i % 4, probs.as_slice()[i]))
        .filter(|t| t.2 > 0.5)
        .collect();
    want.sort_by(|a, b| b.2.total_cmp(&a.2));
    let got: Vec<(usize, usize, f64)> = map.iter().map(|c| (c.row, c.col, c.p)).collect();
    assert_eq!(got, want);

    assert!(exceedance_map(&Field::filled(3, 4, 0.5), &d, 0.5).unwrap().is_empty());
    assert_eq!(exceedance_map(&Field::filled(3, 4, 0.9), &d, 0.5).unwrap().len(), 9);
}

#[test]
fn exceedance_map_matches_filter_oracle_on_random_fields() {
    let d = island(6, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let probs = Field::from_fn(6, 5, |_, _| rng.random::<f64>());
        let map = exceedance_map(&probs, &d, 0.5).unwrap();
        let expected = (0..30).filter(|&i| d.is_land(i) && probs.as_slice()[i] > 0.5).count();
        assert_eq!(map.len(), expected);
        assert!(map.windows(2).all(|w| w[0].p >= w[1].p));
        assert!(map.iter().all(|c| d.is_land(d.flat(c.row, c.col)) && c.p > 0.5));
    }
}

#[test]
fn box_summary_matches_sort_oracle() {
    assert_eq!(box_summary(&[]).unwrap(), None);
    let one = box_summary(&[0.25]).unwrap().unwrap();
    assert_eq!(
        [one.lower_whisker, one.q1, one.median, one.q3, one.upper_whisker],
        [0.25; 5]
    );

    // 1..=9 plus an outlier at 40: quartiles by linear interpolation
    let mut v: Vec<f64> = (1..=9).map(f64::from).collect();
    v.push(40.0);
    let b = box_summary(&v).unwrap().unwrap();
    assert_eq!(b.n, 10);
    assert_eq!(b.q1, 3.25);
    assert_eq!(b.median, 5.5);
    assert_eq!(b.q3, 7.75);
    assert_eq!(b.lower_whisker, 1.0);
    assert_eq!(b.upper_whisker, 9.0);
}

fn skill_fixture(model_equals_reference: bool) -> Vec<SkillRow> {
    let d = island(4, 5);
    let obs = Field::from_fn(4, 5, |r, c| [5.0, 50.0, 150.0, 250.0][r] + c as f64);
    let reference = gaussian(vec![100.0; 20], vec![40.0; 20], 4, 5);
    let model = if model_equals_reference {
        reference.clone()
    } else {
        gaussian(obs.as_slice().to_vec(), vec![10.0; 20], 4, 5)
    };
    skill_rows(ReportIndex::integer(7), &model, &reference, &obs, &d).unwrap()
}

#[test]
fn skill_rows_cover_land_with_categories() {
    let rows = skill_fixture(false);
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.col != 0 && r.report_index == ReportIndex::integer(7)));
    assert_eq!(rows.iter().filter(|r| r.category == RainCategory::BeyondHeavy).count(), 4);
    assert!(rows.iter().all(|r| r.crpss.unwrap() > 0.0));
}

#[test]
fn identical_model_has_zero_skill_everywhere() {
    let strata = crpss_by_stratum(&skill_fixture(true)).unwrap();
    assert_eq!(strata.len(), 8);
    for s in strata.iter().filter_map(|s| s.summary) {
        assert_eq!(
            [s.lower_whisker, s.q1, s.median, s.q3, s.upper_whisker],
            [0.0; 5]
        );
    }
    let n: usize = strata.iter().filter_map(|s| s.summary.map(|b| b.n)).sum();
    assert_eq!(n, 16);
}

#[test]
fn empty_strata_are_reported_not_errors() {
    let rows: Vec<SkillRow> = skill_fixture(false)
        .into_iter()
        .filter(|r| r.category == RainCategory::Heavy)
        .collect();
    let strata = crpss_by_stratum(&rows).unwrap();
    assert!(strata
        .iter()
        .filter(|s| s.category != RainCategory::Heavy)
        .all(|s| s.summary.is_none()));
    assert!(crpss_by_stratum(&[]).is_err());
}

#[test]
fn reliability_single_bin_and_perfect_forecasts() {
    let p = vec![0.42; 10];
    let y = vec![300.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let rb = reliability_diagram(&p, &y, 200.0, 10).unwrap();
    assert_eq!(rb.total(), 10);
    assert_eq!(rb.bins.iter().filter(|b| b.count > 0).count(), 1);
    assert_eq!(rb.bins[4].count, 10);
    assert_eq!(rb.bins[4].observed_frequency, Some(0.1));

    let p = vec![0.0, 1.0, 0.0, 1.0];
    let y = vec![3.0, 250.0, 199.0, 201.0];
    let rb = reliability_diagram(&p, &y, 200.0, 10).unwrap();
    assert_eq!(rb.bins[0].mean_probability, Some(0.0));
    assert_eq!(rb.bins[0].observed_frequency, Some(0.0));
    assert_eq!(rb.bins[9].mean_probability, Some(1.0));
    assert_eq!(rb.bins[9].observed_frequency, Some(1.0));
    assert_eq!(rb.mean_abs_calibration_error(), Some(0.0));
}

#[test]
fn calibrated_events_stay_within_binomial_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 20_000;
    let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = p
        .iter()
        .map(|&pi| if rng.random::<f64>() < pi { 250.0 } else { 10.0 })
        .collect();
    let rb = reliability_diagram(&p, &y, 200.0, 10).unwrap();
    assert_eq!(rb.total(), n);
    for b in &rb.bins {
        let gap = (b.observed_frequency.unwrap() - b.mean_probability.unwrap()).abs();
        assert!(gap <= 3.0 / (b.count as f64).sqrt(), "{b:?}");
    }
}

#[test]
fn reliability_rejects_bad_input() {
    assert!(reliability_diagram(&[0.5], &[1.0, 2.0], 200.0, 10).is_err());
    assert!(reliability_diagram(&[1.5], &[1.0], 200.0, 10).is_err());
    assert!(reliability_diagram(&[0.5], &[1.0], 200.0, 0).is_err());
    let empty = reliability_diagram::<f64>(&[], &[], 200.0, 10).unwrap();
    assert_eq!(empty.mean_abs_calibration_error(), None);
}

proptest! {
    #[test]
    fn exceedance_monotone(mu in -100.0..400.0f64, sigma in 0.1..200.0f64, t in 0.0..300.0f64, d in 0.01..50.0f64) {
        let g = |m: f64| gaussian(vec![m], vec![sigma], 1, 1);
        let p = |m: f64, t: f64| exceedance_probability(&g(m), t).as_slice()[0];
        prop_assert!(p(mu, t + d) <= p(mu, t));
        prop_assert!(p(mu + d, t) >= p(mu, t));
    }

    #[test]
    fn reliability_partitions_cells(ps in proptest::collection::vec(0.0..=1.0f64, 0..200)) {
        let ys: Vec<f64> = ps.iter().map(|p| p * 400.0).collect();
        let rb = reliability_diagram(&ps, &ys, 200.0, 10).unwrap();
        prop_assert_eq!(rb.total(), ps.len());
        for b in &rb.bins {
            if let Some(f) = b.observed_frequency {
                prop_assert!((0.0..=1.0).contains(&f));
            }
        }
    }

    #[test]
    fn quartiles_ordered(v in proptest::collection::vec(-5.0..5.0f64, 1..60)) {
        let b = box_summary(&v).unwrap().unwrap();
        prop_assert!(b.lower_whisker <= b.q1 && b.q1 <= b.median);
        prop_assert!(b.median <= b.q3 && b.q3 <= b.upper_whisker);
    }
}
