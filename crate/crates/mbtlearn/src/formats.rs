//! Text and CSV artifacts.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! every numeric file reads back bit-exactly and reruns are byte-identical.
//! Parsers return a plain message; callers attach the file path.

use std::fmt::Write as _;

use mbtlearn_core::dataset::RawSequencePair;
use mbtlearn_core::eval::Scores;
use mbtlearn_core::harness::{AbstractAlphabet, ConcreteTrace};
use mbtlearn_core::kv::KvMap;
use mbtlearn_core::learner::LearnLog;
use mbtlearn_core::mealy::MealyMachine;
use mbtlearn_core::rnn::{Mode, RnnParams, TENSOR_NAMES};

pub type ParseResult<T> = std::result::Result<T, String>;

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| String::from("NA"))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> ParseResult<T> {
    s.trim().parse().map_err(|_| format!("bad {what} `{s}`"))
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn csv_records(text: &str, header: &[&str]) -> ParseResult<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let found: Vec<String> = r
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(String::from)
        .collect();
    if found != header {
        return Err(format!(
            "expected columns {}, found {}",
            header.join(","),
            found.join(",")
        ));
    }
    r.records()
        .map(|rec| rec.map_err(|e| e.to_string()))
        .collect()
}

// ---- Mealy machines ----

/// `mealy |Q| |I| |O| q0`, one `q i next output` line per transition, then
/// the symbol names on `inputs` and `outputs` lines.
pub fn render_mealy(m: &MealyMachine) -> String {
    let mut s = format!(
        "mealy {} {} {} {}\n",
        m.num_states(),
        m.num_inputs(),
        m.num_outputs(),
        m.initial()
    );
    for q in 0..m.num_states() {
        for i in 0..m.num_inputs() {
            writeln!(s, "{q} {i} {} {}", m.next(q, i), m.output(q, i)).unwrap();
        }
    }
    writeln!(s, "inputs {}", m.inputs().join(" ")).unwrap();
    writeln!(s, "outputs {}", m.outputs().join(" ")).unwrap();
    s
}

pub fn parse_mealy(text: &str) -> ParseResult<MealyMachine> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (_, header) = lines.next().ok_or("empty machine file")?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 5 || h[0] != "mealy" {
        return Err(String::from(
            "header must be `mealy <states> <inputs> <outputs> <initial>`",
        ));
    }
    let n: usize = parse_num(h[1], "state count")?;
    let k: usize = parse_num(h[2], "input count")?;
    let no: usize = parse_num(h[3], "output count")?;
    let initial: usize = parse_num(h[4], "initial state")?;
    let mut next = vec![usize::MAX; n * k];
    let mut out = vec![usize::MAX; n * k];
    let mut inputs: Vec<String> = (0..k).map(|i| format!("i{i}")).collect();
    let mut outputs: Vec<String> = (0..no).map(|o| format!("o{o}")).collect();
    for (ln, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        let at = |msg: &str| format!("line {}: {msg}", ln + 1);
        match f[0] {
            "inputs" | "outputs" => {
                let names: Vec<String> = f[1..].iter().map(|s| s.to_string()).collect();
                let (target, count) = if f[0] == "inputs" {
                    (&mut inputs, k)
                } else {
                    (&mut outputs, no)
                };
                if names.len() != count {
                    return Err(at(&format!("expected {count} names")));
                }
                *target = names;
            }
            _ => {
                if f.len() != 4 {
                    return Err(at("expected `state input next output`"));
                }
                let v: Vec<usize> = f
                    .iter()
                    .map(|x| parse_num(x, "index"))
                    .collect::<ParseResult<_>>()
                    .map_err(|e| at(&e))?;
                if v[0] >= n || v[1] >= k {
                    return Err(at("transition out of range"));
                }
                let t = v[0] * k + v[1];
                if next[t] != usize::MAX {
                    return Err(at("duplicate transition"));
                }
                next[t] = v[2];
                out[t] = v[3];
            }
        }
    }
    if let Some(t) = next.iter().position(|&q| q == usize::MAX) {
        return Err(format!(
            "missing transition for state {} input {}",
            t / k.max(1),
            t % k.max(1)
        ));
    }
    MealyMachine::new(inputs, outputs, initial, next, out).map_err(|e| e.to_string())
}

// ---- Test suites ----

/// One test per line, symbol names separated by spaces. Metadata goes in
/// leading `# key = value` comment lines.
pub fn render_suite(meta: &KvMap, tests: &[Vec<usize>], inputs: &[String]) -> String {
    let mut s = String::new();
    for line in meta.render().lines() {
        writeln!(s, "# {line}").unwrap();
    }
    for t in tests {
        let names: Vec<&str> = t.iter().map(|&i| inputs[i].as_str()).collect();
        writeln!(s, "{}", names.join(" ")).unwrap();
    }
    s
}

pub fn parse_suite(text: &str, inputs: &[String]) -> ParseResult<(KvMap, Vec<Vec<usize>>)> {
    let mut meta = String::new();
    let mut tests = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(c) = line.strip_prefix('#') {
            if c.contains('=') {
                meta.push_str(c);
                meta.push('\n');
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let test = line
            .split_whitespace()
            .map(|n| {
                inputs
                    .iter()
                    .position(|i| i == n)
                    .ok_or_else(|| format!("line {}: unknown symbol `{n}`", ln + 1))
            })
            .collect::<ParseResult<Vec<usize>>>()?;
        tests.push(test);
    }
    let meta = KvMap::parse(&meta).map_err(|e| format!("suite header: {e}"))?;
    Ok((meta, tests))
}

// ---- Traces ----

pub const TRACE_COLUMNS: [&str; 9] = [
    "test_id",
    "t_ms",
    "acc",
    "delta",
    "v_l",
    "v_f",
    "d",
    "abstract_in",
    "abstract_out",
];

/// One row per sampling period; `abstract_out` is filled on the sample that
/// was abstracted for each input.
pub fn render_traces(traces: &[ConcreteTrace], alphabet: &AbstractAlphabet) -> String {
    let mut rows = Vec::new();
    for (id, tr) in traces.iter().enumerate() {
        let symbols = tr.record_inputs();
        for (k, r) in tr.records.iter().enumerate() {
            let out = tr
                .block_ends
                .iter()
                .position(|&e| e == k + 1)
                .map(|b| alphabet.outputs()[tr.outputs[b]].clone())
                .unwrap_or_default();
            rows.push(vec![
                id.to_string(),
                r.t_ms.to_string(),
                num(r.acc),
                num(r.delta),
                num(r.v_l),
                num(r.v_f),
                num(r.d),
                alphabet.inputs()[symbols[k]].clone(),
                out,
            ]);
        }
    }
    csv_text(&TRACE_COLUMNS, rows)
}

// ---- Datasets ----

pub const DATASET_COLUMNS: [&str; 9] = [
    "pair_id",
    "step",
    "acc",
    "dprime",
    "v_l",
    "v_f",
    "d",
    "label_crash",
    "crash_time",
];

pub fn render_dataset(pairs: &[RawSequencePair]) -> String {
    let mut rows = Vec::new();
    for (id, p) in pairs.iter().enumerate() {
        let label = if p.label_crash { "1" } else { "0" };
        let ct = p.crash_time.map(|c| c.to_string()).unwrap_or_default();
        for (k, (x, t)) in p.x.iter().zip(&p.t).enumerate() {
            rows.push(vec![
                id.to_string(),
                k.to_string(),
                num(x[0]),
                num(x[1]),
                num(t[0]),
                num(t[1]),
                num(t[2]),
                label.to_string(),
                ct.clone(),
            ]);
        }
    }
    csv_text(&DATASET_COLUMNS, rows)
}

/// Pairs in file order. Padding counts are not stored and read back as zero.
pub fn parse_dataset(text: &str) -> ParseResult<Vec<RawSequencePair>> {
    let mut pairs: Vec<RawSequencePair> = Vec::new();
    for (n, rec) in csv_records(text, &DATASET_COLUMNS)?.iter().enumerate() {
        let at = |e: String| format!("row {}: {e}", n + 2);
        let id: usize = parse_num(&rec[0], "pair_id").map_err(at)?;
        let step: usize = parse_num(&rec[1], "step").map_err(at)?;
        let f = |k: usize| parse_num::<f64>(&rec[k], DATASET_COLUMNS[k]).map_err(at);
        let label = match &rec[7] {
            "0" => false,
            "1" => true,
            other => return Err(at(format!("bad label_crash `{other}`"))),
        };
        let crash_time = if rec[8].is_empty() {
            None
        } else {
            Some(parse_num(&rec[8], "crash_time").map_err(at)?)
        };
        if id == pairs.len() {
            pairs.push(RawSequencePair {
                x: vec![],
                t: vec![],
                label_crash: label,
                crash_time,
                head_pad: 0,
                tail_pad: 0,
            });
        } else if id + 1 != pairs.len() {
            return Err(at(format!("pair_id {id} out of order")));
        }
        let p = pairs.last_mut().expect("pushed above");
        if step != p.x.len() || p.label_crash != label || p.crash_time != crash_time {
            return Err(at(String::from("inconsistent step or label within a pair")));
        }
        p.x.push([f(2)?, f(3)?]);
        p.t.push([f(4)?, f(5)?, f(6)?]);
    }
    if let Some(first) = pairs.first() {
        if let Some((i, p)) = pairs
            .iter()
            .enumerate()
            .find(|(_, p)| p.len() != first.len())
        {
            return Err(format!(
                "pair {i} has {} steps, pair 0 has {}",
                p.len(),
                first.len()
            ));
        }
    }
    Ok(pairs)
}

// ---- Network weights ----

/// Header `rnn-weights <mode> <d_x> <d_h> <d_y>`, then per tensor a line
/// `<name> <rows> <cols>` followed by one line of values per row.
pub fn render_weights(p: &RnnParams) -> String {
    let mut s = format!("rnn-weights {} {} {} {}\n", p.mode, p.d_x, p.d_h, p.d_y);
    for ((name, rows, cols), t) in p.shapes().iter().zip(p.tensors()) {
        writeln!(s, "{name} {rows} {cols}").unwrap();
        for r in 0..*rows {
            let vals: Vec<String> = t[r * cols..(r + 1) * cols]
                .iter()
                .map(|&v| num(v))
                .collect();
            writeln!(s, "{}", vals.join(" ")).unwrap();
        }
    }
    s
}

pub fn parse_weights(text: &str) -> ParseResult<RnnParams> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let h: Vec<&str> = lines
        .next()
        .ok_or("empty weight file")?
        .split_whitespace()
        .collect();
    if h.len() != 5 || h[0] != "rnn-weights" {
        return Err(String::from(
            "header must be `rnn-weights <mode> <d_x> <d_h> <d_y>`",
        ));
    }
    let mode: Mode = h[1]
        .parse()
        .map_err(|e: mbtlearn_core::rnn::RnnError| e.to_string())?;
    let mut p = RnnParams::zeros(
        mode,
        parse_num(h[2], "d_x")?,
        parse_num(h[3], "d_h")?,
        parse_num(h[4], "d_y")?,
    );
    let shapes = p.shapes();
    for (k, t) in p.tensors_mut().into_iter().enumerate() {
        let (name, rows, cols) = shapes[k];
        let th: Vec<&str> = lines
            .next()
            .ok_or_else(|| format!("missing tensor {name}"))?
            .split_whitespace()
            .collect();
        if th != [name, &rows.to_string(), &cols.to_string()] {
            return Err(format!(
                "expected `{name} {rows} {cols}`, found `{}`",
                th.join(" ")
            ));
        }
        t.clear();
        for r in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| format!("{name}: missing row {r}"))?;
            let vals = line
                .split_whitespace()
                .map(|v| parse_num::<f64>(v, name))
                .collect::<ParseResult<Vec<f64>>>()?;
            if vals.len() != cols {
                return Err(format!("{name} row {r}: expected {cols} values"));
            }
            t.extend(vals);
        }
    }
    debug_assert_eq!(TENSOR_NAMES.len(), shapes.len());
    Ok(p)
}

// ---- Tables ----

pub fn render_losses(losses: &[f64]) -> String {
    csv_text(
        &["epoch", "loss"],
        losses
            .iter()
            .enumerate()
            .map(|(e, &l)| vec![(e + 1).to_string(), num(l)]),
    )
}

pub fn render_learn_log(log: &LearnLog) -> String {
    csv_text(
        &["round", "states", "total_tests", "collisions"],
        log.rounds.iter().map(|r| {
            vec![
                r.round.to_string(),
                r.states.to_string(),
                r.total_tests.to_string(),
                r.collisions.to_string(),
            ]
        }),
    )
}

pub const RESULT_COLUMNS: [&str; 7] = ["strategy", "n_train", "seed", "ce", "tpr", "ppv", "f1"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub strategy: String,
    pub n_train: usize,
    pub seed: u64,
    pub scores: Scores,
}

pub fn render_results(rows: &[ResultRow]) -> String {
    csv_text(
        &RESULT_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.strategy.clone(),
                r.n_train.to_string(),
                r.seed.to_string(),
                num(r.scores.ce),
                opt_num(r.scores.tpr),
                opt_num(r.scores.ppv),
                opt_num(r.scores.f1),
            ]
        }),
    )
}

pub fn parse_results(text: &str) -> ParseResult<Vec<ResultRow>> {
    let opt = |s: &str, what: &str| -> ParseResult<Option<f64>> {
        if s == "NA" {
            Ok(None)
        } else {
            parse_num(s, what).map(Some)
        }
    };
    csv_records(text, &RESULT_COLUMNS)?
        .iter()
        .map(|r| {
            Ok(ResultRow {
                strategy: r[0].to_string(),
                n_train: parse_num(&r[1], "n_train")?,
                seed: parse_num(&r[2], "seed")?,
                scores: Scores {
                    ce: parse_num(&r[3], "ce")?,
                    tpr: opt(&r[4], "tpr")?,
                    ppv: opt(&r[5], "ppv")?,
                    f1: opt(&r[6], "f1")?,
                },
            })
        })
        .collect()
}

pub const CDF_COLUMNS: [&str; 4] = ["strategy", "n_train", "error", "cum_pct"];

pub fn render_cdf(rows: &[(String, usize, Vec<(usize, f64)>)]) -> String {
    let mut out = Vec::new();
    for (strategy, n, points) in rows {
        for (e, p) in points {
            out.push(vec![
                strategy.clone(),
                n.to_string(),
                e.to_string(),
                num(*p),
            ]);
        }
    }
    csv_text(&CDF_COLUMNS, out)
}
