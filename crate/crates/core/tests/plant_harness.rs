use mbtlearn_core::harness::{AbstractAlphabet, Harness, Sul};
use mbtlearn_core::plant::{reversing, Plant, PlantConfig};
use mbtlearn_core::seed;
use proptest::prelude::*;
use rand::Rng;

fn harness(cached: bool) -> Harness {
    Harness::new(PlantConfig::default(), AbstractAlphabet::default(), cached).unwrap()
}

fn accels() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..=1.5, 1..60)
}

proptest! {
    #[test]
    fn plant_is_deterministic_and_sampled_mid_period(acc in accels()) {
        let cfg = PlantConfig::default();
        let mut a = Plant::new(cfg).unwrap();
        let mut b = Plant::new(cfg).unwrap();
        let ts = u64::from(cfg.sample_period_ms);
        for (k, &u) in acc.iter().enumerate() {
            let ra = a.step_control(u, 1).unwrap();
            let rb = b.step_control(u, 1).unwrap();
            prop_assert_eq!(ra, rb);
            prop_assert_eq!(ra.t_ms, (k as u64 + 1) * ts - ts / 2);
            // The leader only integrates bounded accelerations.
            prop_assert!(ra.v_l.abs() <= cfg.accel_max * ra.t_ms as f64 / 1000.0 + 1e-9);
        }
    }

    #[test]
    fn long_hold_matches_single_periods(u in -1.5f64..=1.5, n in 1u32..12) {
        let cfg = PlantConfig::default();
        let mut a = Plant::new(cfg).unwrap();
        let mut b = Plant::new(cfg).unwrap();
        let ra = a.step_control(u, n).unwrap();
        let mut rb = None;
        for _ in 0..n {
            rb = Some(b.step_control(u, 1).unwrap());
        }
        prop_assert_eq!(Some(ra), rb);
        prop_assert_eq!(a.state(), b.state());
    }

    #[test]
    fn outputs_are_prefix_closed_and_latched(w in prop::collection::vec(0usize..6, 1..20), v in prop::collection::vec(0usize..6, 0..10)) {
        let mut h = harness(false);
        let alpha = AbstractAlphabet::default();
        let ow = h.execute_abstract(&w).unwrap();
        let wv: Vec<usize> = w.iter().chain(&v).copied().collect();
        let owv = h.execute_abstract(&wv).unwrap();
        prop_assert_eq!(owv.len(), wv.len());
        prop_assert_eq!(&owv[..w.len()], ow.as_slice());
        if let Some(j) = owv.iter().position(|&o| alpha.is_violation(o)) {
            prop_assert!(owv[j..].iter().all(|&o| o == owv[j]));
        }
    }
}

#[test]
fn rest_is_an_equilibrium() {
    let cfg = PlantConfig::default();
    let mut p = Plant::new(cfg).unwrap();
    for _ in 0..200 {
        let r = p.step_control(0.0, 1).unwrap();
        assert_eq!((r.v_l, r.v_f, r.d), (0.0, 0.0, cfg.initial_distance));
    }
}

#[test]
fn traced_run_agrees_with_abstract_run() {
    let alpha = AbstractAlphabet::default();
    let mut h = harness(false);
    let mut rng = seed::rng(11);
    for n in 0..300 {
        let len = rng.gen_range(1..=20);
        let w: Vec<usize> = (0..len).map(|_| rng.gen_range(0..6)).collect();
        let t = h.execute_traced(&w, n).unwrap();
        assert_eq!(t.outputs, h.execute_abstract(&w).unwrap());
        let steps: u32 = w.iter().map(|&i| alpha.conc(i).steps).sum();
        assert_eq!(t.records.len(), steps as usize);
        assert_eq!(*t.block_ends.last().unwrap(), t.records.len());
        // Before the first violation each output abstracts the block's last record.
        for (j, &end) in t.block_ends.iter().enumerate() {
            if alpha.is_violation(t.outputs[j]) {
                break;
            }
            let r = &t.records[end - 1];
            assert!(!reversing(r.v_l));
            assert_eq!(t.outputs[j], alpha.classify_distance(r.d));
            assert_eq!(r.acc, alpha.conc(w[j]).acc);
        }
    }
}

#[test]
fn cache_is_transparent_and_saves_prefix_runs() {
    let mut cached = harness(true);
    let mut plain = harness(false);
    let mut rng = seed::rng(12);
    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut expected_runs = 0;
    for _ in 0..2000 {
        let len = rng.gen_range(1..=8);
        let w: Vec<usize> = (0..len).map(|_| rng.gen_range(0..3)).collect();
        if !seen.iter().any(|s| s.starts_with(&w)) {
            expected_runs += 1;
        }
        seen.push(w.clone());
        let a = cached.query(&w).unwrap();
        assert_eq!(a.outputs, plain.execute_abstract(&w).unwrap());
    }
    assert_eq!(cached.executions(), expected_runs);
    assert_eq!(plain.executions(), 2000);
    assert!(cached.executions() < 2000);
}
