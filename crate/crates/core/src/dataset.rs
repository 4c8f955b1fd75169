//! Fixed-length sequence pairs for the recurrent model.
//!
//! Each executed test becomes one pair: inputs `(acc, delta')` and targets
//! `(v_l, v_f, d)` per sampling period. Short traces are extended by
//! simulating the plant further with zero leader acceleration. Traces in which
//! the leader starts reversing are cut just before that sample and shifted
//! right, with the reset state filling the head.

use alloc::format;
use alloc::vec::Vec;

use crate::harness::ConcreteTrace;
use crate::kv::{KvError, KvMap};
use crate::plant::{Plant, PlantConfig, PlantError, PlantState, SampleRecord};

pub const INPUT_DIMS: [&str; 2] = ["acc", "dprime"];
pub const OUTPUT_DIMS: [&str; 3] = ["v_l", "v_f", "d"];
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("trace has {len} usable samples, more than the sequence length {max}")]
    TooLong { len: usize, max: usize },
    #[error("sequence length must be positive")]
    ZeroLength,
    #[error("empty training set")]
    Empty,
    #[error("pair {index} has {len} steps, expected {expected}")]
    Shape {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Kv(#[from] KvError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSequencePair {
    pub x: Vec<[f64; 2]>,
    pub t: Vec<[f64; 3]>,
    pub label_crash: bool,
    pub crash_time: Option<usize>,
    /// Steps prepended because the trace was cut at a reversing sample.
    pub head_pad: usize,
    /// Steps appended by continued simulation.
    pub tail_pad: usize,
}

impl RawSequencePair {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Flat row-major copies of inputs and targets.
    pub fn flat(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.x.iter().flatten().copied().collect(),
            self.t.iter().flatten().copied().collect(),
        )
    }
}

/// Index of the first step whose gap is below `threshold`.
pub fn first_crash(d: impl IntoIterator<Item = f64>, threshold: f64) -> Option<usize> {
    d.into_iter().position(|d| d < threshold)
}

/// Builds the pair for one trace.
pub fn build_pair(
    trace: &ConcreteTrace,
    len: usize,
    cfg: &PlantConfig,
) -> Result<RawSequencePair, DatasetError> {
    if len == 0 {
        return Err(DatasetError::ZeroLength);
    }
    let reverse_at = trace
        .records
        .iter()
        .position(|r| crate::plant::reversing(r.v_l));
    let mut records: Vec<SampleRecord> = Vec::with_capacity(len);
    let mut head_pad = 0;
    let mut tail_pad = 0;
    match reverse_at {
        Some(k) => {
            if k > len {
                return Err(DatasetError::TooLong { len: k, max: len });
            }
            head_pad = len - k;
            let rest = PlantState::reset(cfg);
            let pad = SampleRecord {
                t_ms: 0,
                acc: 0.0,
                delta: 0.0,
                v_l: rest.v_l,
                v_f: rest.v_f,
                d: rest.d,
            };
            records.extend(core::iter::repeat(pad).take(head_pad));
            records.extend_from_slice(&trace.records[..k]);
        }
        None => {
            if trace.records.len() > len {
                return Err(DatasetError::TooLong {
                    len: trace.records.len(),
                    max: len,
                });
            }
            records.extend_from_slice(&trace.records);
            tail_pad = len - records.len();
            if tail_pad > 0 {
                let resume = cfg.with_curve_seed(trace.curve_seed);
                let mut plant = Plant::resume(resume, trace.final_state)?;
                for _ in 0..tail_pad {
                    records.push(plant.step_control(0.0, 1)?);
                }
            }
        }
    }
    let mut x = Vec::with_capacity(len);
    let mut prev_delta = records[0].delta;
    for r in &records {
        x.push([r.acc, r.delta - prev_delta]);
        prev_delta = r.delta;
    }
    let t: Vec<[f64; 3]> = records.iter().map(|r| [r.v_l, r.v_f, r.d]).collect();
    let crash_time = first_crash(t.iter().map(|v| v[2]), cfg.truck_length);
    Ok(RawSequencePair {
        x,
        t,
        label_crash: crash_time.is_some(),
        crash_time,
        head_pad,
        tail_pad,
    })
}

/// Builds one pair per trace, failing on the first trace that does not fit.
pub fn build_pairs(
    traces: &[ConcreteTrace],
    len: usize,
    cfg: &PlantConfig,
) -> Result<Vec<RawSequencePair>, DatasetError> {
    traces.iter().map(|t| build_pair(t, len, cfg)).collect()
}

/// Per-dimension affine scaling fitted on training pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub in_mean: [f64; 2],
    pub in_std: [f64; 2],
    pub out_mean: [f64; 3],
    pub out_std: [f64; 3],
}

fn moments<const D: usize>(rows: impl Iterator<Item = [f64; D]> + Clone) -> ([f64; D], [f64; D]) {
    let mut n = 0usize;
    let mut sum = [0.0; D];
    for r in rows.clone() {
        n += 1;
        for k in 0..D {
            sum[k] += r[k];
        }
    }
    let mean = sum.map(|s| s / n as f64);
    let mut sq = [0.0; D];
    for r in rows {
        for k in 0..D {
            let e = r[k] - mean[k];
            sq[k] += e * e;
        }
    }
    let std = sq.map(|s| libm::sqrt(s / n as f64).max(STD_FLOOR));
    (mean, std)
}

impl NormalizationStats {
    pub fn fit(pairs: &[RawSequencePair]) -> Result<Self, DatasetError> {
        if pairs.iter().all(|p| p.is_empty()) {
            return Err(DatasetError::Empty);
        }
        let (in_mean, in_std) = moments(pairs.iter().flat_map(|p| p.x.iter().copied()));
        let (out_mean, out_std) = moments(pairs.iter().flat_map(|p| p.t.iter().copied()));
        Ok(Self {
            in_mean,
            in_std,
            out_mean,
            out_std,
        })
    }

    pub fn apply_input(&self, x: [f64; 2]) -> [f64; 2] {
        core::array::from_fn(|k| (x[k] - self.in_mean[k]) / self.in_std[k])
    }

    pub fn apply_output(&self, t: [f64; 3]) -> [f64; 3] {
        core::array::from_fn(|k| (t[k] - self.out_mean[k]) / self.out_std[k])
    }

    pub fn invert_output(&self, y: [f64; 3]) -> [f64; 3] {
        core::array::from_fn(|k| y[k] * self.out_std[k] + self.out_mean[k])
    }

    /// Normalized copy; labels and padding counts are kept.
    pub fn apply(&self, pair: &RawSequencePair) -> RawSequencePair {
        RawSequencePair {
            x: pair.x.iter().map(|&x| self.apply_input(x)).collect(),
            t: pair.t.iter().map(|&t| self.apply_output(t)).collect(),
            ..pair.clone()
        }
    }

    pub fn apply_all(&self, pairs: &[RawSequencePair]) -> Vec<RawSequencePair> {
        pairs.iter().map(|p| self.apply(p)).collect()
    }

    /// Physical-unit outputs from flat normalized network outputs.
    pub fn invert(&self, y: &[f64]) -> Vec<[f64; 3]> {
        y.chunks_exact(3)
            .map(|c| self.invert_output([c[0], c[1], c[2]]))
            .collect()
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        for (k, name) in INPUT_DIMS.iter().enumerate() {
            kv.insert(&format!("mean.{name}"), format!("{:?}", self.in_mean[k]));
            kv.insert(&format!("std.{name}"), format!("{:?}", self.in_std[k]));
        }
        for (k, name) in OUTPUT_DIMS.iter().enumerate() {
            kv.insert(&format!("mean.{name}"), format!("{:?}", self.out_mean[k]));
            kv.insert(&format!("std.{name}"), format!("{:?}", self.out_std[k]));
        }
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self, DatasetError> {
        let get = |kind: &str, name: &str| kv.parse_value::<f64>(&format!("{kind}.{name}"));
        let mut s = Self {
            in_mean: [0.0; 2],
            in_std: [1.0; 2],
            out_mean: [0.0; 3],
            out_std: [1.0; 3],
        };
        for (k, name) in INPUT_DIMS.iter().enumerate() {
            s.in_mean[k] = get("mean", name)?;
            s.in_std[k] = get("std", name)?;
        }
        for (k, name) in OUTPUT_DIMS.iter().enumerate() {
            s.out_mean[k] = get("mean", name)?;
            s.out_std[k] = get("std", name)?;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{AbstractAlphabet, Harness};
    use alloc::vec;
    use proptest::prelude::*;

    fn trace(names: &[&str]) -> (ConcreteTrace, PlantConfig) {
        let a = AbstractAlphabet::default();
        let cfg = PlantConfig::default();
        let mut h = Harness::new(cfg, a.clone(), false).unwrap();
        (
            h.execute_traced(&a.encode(names).unwrap(), 11).unwrap(),
            cfg,
        )
    }

    #[test]
    fn exact_length_is_unchanged() {
        let (tr, cfg) = trace(&["fast-acc", "wait", "const"]);
        let p = build_pair(&tr, 12, &cfg).unwrap();
        assert_eq!((p.head_pad, p.tail_pad), (0, 0));
        let t: Vec<[f64; 3]> = tr.records.iter().map(|r| [r.v_l, r.v_f, r.d]).collect();
        assert_eq!(p.t, t);
        assert_eq!(p.x[0][1], 0.0);
        assert_eq!(p.x[5][0], 0.0);
        assert_eq!(p.x[1][0], 1.5);
    }

    #[test]
    fn tail_pad_continues_the_simulation() {
        let (tr, cfg) = trace(&["wait"]);
        let p = build_pair(&tr, 13, &cfg).unwrap();
        assert_eq!(p.tail_pad, 5);
        for k in 8..13 {
            assert_eq!(p.x[k][0], 0.0);
            assert_eq!(p.t[k], [0.0, 0.0, cfg.initial_distance]);
        }
        // the padded part equals a longer execution of the same plant
        let (short, _) = trace(&["fast-acc", "brake"]);
        let (long, _) = trace(&["fast-acc", "brake", "const", "const"]);
        let a = build_pair(&short, 9, &cfg).unwrap();
        let b = build_pair(&long, 9, &cfg).unwrap();
        assert_eq!((a.tail_pad, b.tail_pad), (5, 1));
        assert_eq!(a.t, b.t);
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn reversing_trace_is_head_padded() {
        let (tr, cfg) = trace(&["slow-acc", "hard-brake", "wait"]);
        let k = tr
            .records
            .iter()
            .position(|r| crate::plant::reversing(r.v_l))
            .unwrap();
        assert!(k < tr.records.len());
        let p = build_pair(&tr, 20, &cfg).unwrap();
        assert_eq!(p.head_pad, 20 - k);
        assert_eq!(p.tail_pad, 0);
        assert_eq!(p.t[0], [0.0, 0.0, cfg.initial_distance]);
        assert_eq!(
            p.t[20 - k],
            [tr.records[0].v_l, tr.records[0].v_f, tr.records[0].d]
        );
        assert!(p.t.iter().all(|t| t[0] >= 0.0));
        assert_eq!(p.len(), 20);
    }

    #[test]
    fn too_long_is_an_error() {
        let (tr, cfg) = trace(&["wait", "wait"]);
        assert_eq!(
            build_pair(&tr, 15, &cfg),
            Err(DatasetError::TooLong { len: 16, max: 15 })
        );
        assert_eq!(build_pair(&tr, 0, &cfg), Err(DatasetError::ZeroLength));
    }

    #[test]
    fn crash_label_from_ground_truth() {
        let mut names = vec!["fast-acc"; 6];
        names.extend(["hard-brake"; 6]);
        names.push("wait");
        let (tr, cfg) = trace(&names);
        let p = build_pair(&tr, 40, &cfg).unwrap();
        let truth = tr.records.iter().position(|r| r.d < cfg.truck_length);
        assert!(p.label_crash);
        assert_eq!(p.crash_time, truth);
        let (calm, _) = trace(&["const"]);
        let q = build_pair(&calm, 10, &cfg).unwrap();
        assert_eq!((q.label_crash, q.crash_time), (false, None));
    }

    #[test]
    fn constant_dimension_is_floored() {
        let pair = RawSequencePair {
            x: vec![[1.0, 0.0], [3.0, 0.0]],
            t: vec![[2.0, 2.0, 1.0], [2.0, 4.0, 1.0]],
            label_crash: false,
            crash_time: None,
            head_pad: 0,
            tail_pad: 0,
        };
        let s = NormalizationStats::fit(core::slice::from_ref(&pair)).unwrap();
        assert_eq!(s.in_std[1], STD_FLOOR);
        assert_eq!(s.in_std[0], 1.0);
        let n = s.apply(&pair);
        assert_eq!(n.x, [[-1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(n.t[0][0], 0.0);
        assert_eq!(NormalizationStats::fit(&[]), Err(DatasetError::Empty));
    }

    #[test]
    fn stats_kv_round_trip() {
        let s = NormalizationStats {
            in_mean: [0.1, -3e-9],
            in_std: [1.0 / 3.0, 1e-8],
            out_mean: [2.5, 7.0, 1e10],
            out_std: [0.7, 1.1, 123.456],
        };
        let kv = KvMap::parse(&s.to_kv().render()).unwrap();
        assert_eq!(NormalizationStats::from_kv(&kv).unwrap(), s);
    }

    fn arb_pairs() -> impl Strategy<Value = Vec<RawSequencePair>> {
        let step = (
            prop::array::uniform2(-50.0..50.0f64),
            prop::array::uniform3(-50.0..50.0f64),
        );
        prop::collection::vec(prop::collection::vec(step, 4), 1..12).prop_map(|ps| {
            ps.into_iter()
                .map(|steps| RawSequencePair {
                    x: steps.iter().map(|s| s.0).collect(),
                    t: steps.iter().map(|s| s.1).collect(),
                    label_crash: false,
                    crash_time: None,
                    head_pad: 0,
                    tail_pad: 0,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn normalization_properties(pairs in arb_pairs(), rot in 0usize..12) {
            let s = NormalizationStats::fit(&pairs).unwrap();
            let n = s.apply_all(&pairs);
            let steps = (pairs.len() * 4) as f64;
            for k in 0..2 {
                let mean: f64 = n.iter().flat_map(|p| p.x.iter()).map(|x| x[k]).sum::<f64>() / steps;
                prop_assert!(mean.abs() < 1e-9);
            }
            for k in 0..3 {
                let mean: f64 = n.iter().flat_map(|p| p.t.iter()).map(|t| t[k]).sum::<f64>() / steps;
                prop_assert!(mean.abs() < 1e-9);
            }
            for (p, q) in pairs.iter().zip(&n) {
                for (t, y) in p.t.iter().zip(&q.t) {
                    let back = s.invert_output(*y);
                    for k in 0..3 {
                        prop_assert!((back[k] - t[k]).abs() < 1e-10);
                    }
                }
            }
            let mut shuffled = pairs.clone();
            let r = rot % shuffled.len();
            shuffled.rotate_left(r);
            shuffled.reverse();
            let s2 = NormalizationStats::fit(&shuffled).unwrap();
            for k in 0..3 {
                prop_assert!((s.out_mean[k] - s2.out_mean[k]).abs() < 1e-12);
                prop_assert!((s.out_std[k] - s2.out_std[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn dprime_sums_back_to_delta(names in prop::collection::vec(0usize..6, 1..8), seed in any::<u64>()) {
            let a = AbstractAlphabet::default();
            let cfg = PlantConfig::default();
            let mut h = Harness::new(cfg, a, false).unwrap();
            let tr = h.execute_traced(&names, seed).unwrap();
            let p = build_pair(&tr, 64, &cfg).unwrap();
            prop_assert_eq!(p.len(), 64);
            prop_assert_eq!(p.label_crash, p.crash_time.is_some());
            if p.head_pad == 0 {
                let mut acc = tr.records[0].delta;
                for (k, r) in tr.records.iter().enumerate() {
                    if k > 0 {
                        acc += p.x[k][1];
                    }
                    prop_assert!((acc - r.delta).abs() < 1e-12);
                }
            }
        }
    }
}
