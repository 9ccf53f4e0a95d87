//! Video traces, playback timing and seeded synthetic instances.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dag::{pattern_builder, strip_backward_edges, DagBuilder, DependencyDag, Frame, FrameId, FrameKind, GopPattern};
use crate::error::{Error, Result};
use crate::units::{rational_serde, Quality, Rational};

/// One row of a trace file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub display_index: usize,
    pub kind: FrameKind,
    pub size_bits: u64,
    pub quality: Quality,
}

/// Maps display indices to deadline slots:
/// `floor((initial_delay + index / fps) / slot_duration)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoTiming {
    #[serde(with = "rational_serde")]
    pub fps: Rational,
    #[serde(with = "rational_serde")]
    pub slot_duration_s: Rational,
    #[serde(with = "rational_serde")]
    pub initial_delay_s: Rational,
}

impl VideoTiming {
    pub fn new(fps: Rational, slot_duration_s: Rational, initial_delay_s: Rational) -> Result<Self> {
        let zero = Ratio::from_integer(0);
        if fps <= zero || slot_duration_s <= zero || initial_delay_s < zero {
            return Err(Error::InvalidParameters(
                "fps and slot duration must be positive, delay non-negative".into(),
            ));
        }
        Ok(VideoTiming {
            fps,
            slot_duration_s,
            initial_delay_s,
        })
    }

    /// 30 fps, 1 ms slots.
    pub fn standard(initial_delay_s: Rational) -> Self {
        VideoTiming {
            fps: Ratio::from_integer(30),
            slot_duration_s: Ratio::new(1, 1000),
            initial_delay_s,
        }
    }

    pub fn deadline(&self, display_index: usize) -> u64 {
        let seconds = self.initial_delay_s + Ratio::new(display_index as i64, 1) / self.fps;
        (seconds / self.slot_duration_s).floor().to_integer() as u64
    }

    pub fn with_delay(self, initial_delay_s: Rational) -> Result<Self> {
        VideoTiming::new(self.fps, self.slot_duration_s, initial_delay_s)
    }
}

/// A scheduling problem: the dag with per-frame attributes, plus how it was made.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<GopPattern>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<VideoTiming>,
    #[serde(flatten)]
    pub dag: DependencyDag,
}

impl Instance {
    /// Recomputes deadlines for another initial playback delay.
    pub fn with_delay(&self, initial_delay_s: Rational) -> Result<Instance> {
        let timing = self
            .timing
            .ok_or_else(|| Error::InvalidParameters("instance has no video timing to re-derive deadlines".into()))?
            .with_delay(initial_delay_s)?;
        let dag = self
            .dag
            .map_frames(|f| (f.size_bits, timing.deadline(f.id), f.quality))?;
        Ok(Instance {
            pattern: self.pattern,
            timing: Some(timing),
            dag,
        })
    }

    pub fn records(&self) -> Vec<TraceRecord> {
        self.dag
            .frames()
            .iter()
            .map(|f| TraceRecord {
                display_index: f.id,
                kind: f.kind,
                size_bits: f.size_bits,
                quality: f.quality,
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Instance> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Instance::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instances serialize")
    }
}

/// How to turn trace rows into an instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceConfig {
    pub pattern: GopPattern,
    pub timing: VideoTiming,
    /// Expected number of rows, if known.
    pub frame_count: Option<usize>,
}

pub fn read_trace(reader: impl Read) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Trace {
        line: 1,
        reason: e.to_string(),
    })?;
    let expected = ["display_index", "kind", "size_bits", "quality"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Trace {
            line: 1,
            reason: format!("expected header {}", expected.join(",")),
        });
    }
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<TraceRecord>().enumerate() {
        let line = i + 2;
        let record = row.map_err(|e| Error::Trace {
            line,
            reason: e.to_string(),
        })?;
        if record.display_index != i {
            return Err(Error::Trace {
                line,
                reason: format!("display index {} out of sequence, expected {i}", record.display_index),
            });
        }
        if record.size_bits == 0 {
            return Err(Error::Trace {
                line,
                reason: "size_bits must be positive".into(),
            });
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Trace {
            line: 1,
            reason: "trace has no frames".into(),
        });
    }
    Ok(records)
}

pub fn write_trace(writer: impl Write, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Builds frames and pattern edges from trace rows.
pub fn instance_from_records(records: &[TraceRecord], config: &TraceConfig) -> Result<Instance> {
    if let Some(n) = config.frame_count {
        if n != records.len() {
            return Err(Error::InvalidParameters(format!(
                "trace has {} frames, expected {n}",
                records.len()
            )));
        }
    }
    for r in records {
        let expected = config.pattern.kind_at(r.display_index);
        if r.kind != expected {
            return Err(Error::Trace {
                line: r.display_index + 2,
                reason: format!(
                    "frame {} is {} but {} expects {expected}",
                    r.display_index, r.kind, config.pattern
                ),
            });
        }
    }
    let dag = pattern_builder(config.pattern, records.len()).build_with(|id, _| {
        let r = &records[id];
        (r.size_bits, config.timing.deadline(id), r.quality)
    })?;
    Ok(Instance {
        pattern: Some(config.pattern),
        timing: Some(config.timing),
        dag,
    })
}

pub fn load_trace(path: impl AsRef<Path>, config: &TraceConfig) -> Result<Instance> {
    let records = read_trace(File::open(path)?)?;
    instance_from_records(&records, config)
}

pub fn save_trace(path: impl AsRef<Path>, records: &[TraceRecord]) -> Result<()> {
    write_trace(File::create(path)?, records)
}

/// Dependency structure of a synthetic instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    /// `frames` frames following the pattern, optionally without backward edges.
    Pattern { pattern: GopPattern, frames: usize, stripped: bool },
    /// I-frames every `gop_size` frames, P-frames chained in between.
    Chain { frames: usize, gop_size: usize },
    /// Random I/P/B kinds and references; may fall outside the solvable classes.
    Random { frames: usize },
}

/// How deadlines are assigned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeadlineModel {
    /// First deadline drawn from `0..=first_max`, then increments from `1..=step_max`.
    Slots { first_max: u64, step_max: u64 },
    Video(VideoTiming),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthParams {
    pub shape: Shape,
    pub deadlines: DeadlineModel,
    /// Inclusive size range in bits per kind, indexed I, P, B.
    pub sizes: [(u64, u64); 3],
    /// Inclusive quality range in micro-units per kind, indexed I, P, B.
    pub qualities: [(u64, u64); 3],
}

impl SynthParams {
    /// Small instances for exhaustive cross-checks.
    pub fn small(shape: Shape) -> Self {
        SynthParams {
            shape,
            deadlines: DeadlineModel::Slots { first_max: 2, step_max: 2 },
            sizes: [(1, 6), (1, 4), (1, 3)],
            qualities: [(1_000_000, 9_000_000), (500_000, 5_000_000), (100_000, 3_000_000)],
        }
    }

    /// Trace-like sizes (bits) and PSNR-like qualities at 30 fps.
    pub fn video(pattern: GopPattern, frames: usize, timing: VideoTiming) -> Self {
        SynthParams {
            shape: Shape::Pattern {
                pattern,
                frames,
                stripped: false,
            },
            deadlines: DeadlineModel::Video(timing),
            sizes: [(60_000, 120_000), (15_000, 45_000), (3_000, 15_000)],
            qualities: [(36_000_000, 42_000_000), (34_000_000, 40_000_000), (32_000_000, 38_000_000)],
        }
    }
}

fn kind_index(kind: FrameKind) -> usize {
    match kind {
        FrameKind::I => 0,
        FrameKind::P => 1,
        FrameKind::B => 2,
    }
}

fn random_structure(rng: &mut ChaCha8Rng, frames: usize) -> DagBuilder {
    let mut kinds = vec![FrameKind::I];
    for _ in 1..frames {
        let roll = rng.gen_range(0..100);
        kinds.push(match roll {
            0..=14 => FrameKind::I,
            15..=49 => FrameKind::P,
            _ => FrameKind::B,
        });
    }
    let gop_start: Vec<FrameId> = kinds
        .iter()
        .enumerate()
        .scan(0, |start, (i, &k)| {
            if k == FrameKind::I {
                *start = i;
            }
            Some(*start)
        })
        .collect();
    let mut builder = DagBuilder::new(kinds.clone());
    for v in 1..frames {
        let start = gop_start[v];
        match kinds[v] {
            FrameKind::I => {}
            FrameKind::P => {
                let anchors: Vec<_> = (start..v).filter(|&u| kinds[u] != FrameKind::B).collect();
                builder.add_edge(*anchors.choose(rng).unwrap(), v);
            }
            FrameKind::B => {
                builder.add_edge(rng.gen_range(start..v), v);
                let next_i = (v + 1..frames).find(|&u| kinds[u] == FrameKind::I);
                let end = next_i.unwrap_or(frames);
                let mut later: Vec<_> = (v + 1..end).filter(|&u| kinds[u] != FrameKind::B).collect();
                later.extend(next_i);
                if !later.is_empty() && rng.gen_bool(0.7) {
                    builder.add_edge(*later.choose(rng).unwrap(), v);
                }
            }
        }
    }
    builder
}

/// Deterministic random instance for `seed`.
pub fn synth_instance(seed: u64, params: &SynthParams) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (lo, hi) in params.sizes {
        if lo == 0 || lo > hi {
            return Err(Error::InvalidParameters(format!("bad size range {lo}..={hi}")));
        }
    }
    for (lo, hi) in params.qualities {
        if lo > hi {
            return Err(Error::InvalidParameters(format!("bad quality range {lo}..={hi}")));
        }
    }
    let (builder, pattern, strip) = match params.shape {
        Shape::Pattern {
            pattern,
            frames,
            stripped,
        } => (pattern_builder(pattern, frames), Some(pattern), stripped),
        Shape::Chain { frames, gop_size } => {
            if gop_size == 0 {
                return Err(Error::InvalidParameters("GOP size must be positive".into()));
            }
            let kinds = (0..frames)
                .map(|i| if i % gop_size == 0 { FrameKind::I } else { FrameKind::P })
                .collect();
            let mut b = DagBuilder::new(kinds);
            for v in (1..frames).filter(|v| v % gop_size != 0) {
                b.add_edge(v - 1, v);
            }
            (b, None, false)
        }
        Shape::Random { frames } => (random_structure(&mut rng, frames), None, false),
    };
    let timing = match params.deadlines {
        DeadlineModel::Video(t) => Some(t),
        DeadlineModel::Slots { .. } => None,
    };
    let mut next_deadline = match params.deadlines {
        DeadlineModel::Slots { first_max, .. } => rng.gen_range(0..=first_max),
        DeadlineModel::Video(_) => 0,
    };
    let dag = builder.build_with(|id, kind| {
        let k = kind_index(kind);
        let size = rng.gen_range(params.sizes[k].0..=params.sizes[k].1);
        let quality = Quality::from_micros(rng.gen_range(params.qualities[k].0..=params.qualities[k].1));
        let deadline = match params.deadlines {
            DeadlineModel::Video(t) => t.deadline(id),
            DeadlineModel::Slots { step_max, .. } => {
                let d = next_deadline;
                next_deadline += rng.gen_range(1..=step_max.max(1));
                d
            }
        };
        (size, deadline, quality)
    })?;
    let dag = if strip { strip_backward_edges(&dag) } else { dag };
    Ok(Instance { pattern, timing, dag })
}

/// Frames with fresh attributes from `f(frame)`; kinds and edges unchanged.
pub fn reattribute(instance: &Instance, f: impl FnMut(&Frame) -> (u64, u64, Quality)) -> Result<Instance> {
    Ok(Instance {
        pattern: instance.pattern,
        timing: instance.timing,
        dag: instance.dag.map_frames(f)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbfs::{classify, ClassLabel};
    use crate::units::parse_rational;

    fn timing(delay: &str) -> VideoTiming {
        VideoTiming::standard(parse_rational(delay).unwrap())
    }

    #[test]
    fn deadline_formula_is_exact() {
        let t = timing("1");
        assert_eq!(t.deadline(0), 1000);
        assert_eq!(t.deadline(30), 2000);
        assert_eq!(t.deadline(1), 1033);
        assert_eq!(timing("0.1").deadline(0), 100);
    }

    fn trace_text(rows: &[(usize, &str, u64, &str)]) -> String {
        let mut s = String::from("display_index,kind,size_bits,quality\n");
        for (i, k, size, q) in rows {
            s.push_str(&format!("{i},{k},{size},{q}\n"));
        }
        s
    }

    fn config(frames: Option<usize>) -> TraceConfig {
        TraceConfig {
            pattern: GopPattern::new(4, 1).unwrap(),
            timing: timing("1"),
            frame_count: frames,
        }
    }

    #[test]
    fn parses_and_builds() {
        let text = trace_text(&[(0, "I", 800, "40.5"), (1, "B", 100, "35"), (2, "P", 300, "37.25"), (3, "B", 90, "34")]);
        let records = read_trace(text.as_bytes()).unwrap();
        let inst = instance_from_records(&records, &config(Some(4))).unwrap();
        assert_eq!(inst.dag.frame(2).deadline, 1066);
        assert_eq!(inst.dag.parents(1), &[0, 2]);
        assert_eq!(inst.dag.frame(0).quality, Quality::from_micros(40_500_000));
        assert!(instance_from_records(&records, &config(Some(5))).is_err());
    }

    #[test]
    fn rejects_bad_traces() {
        assert!(read_trace("".as_bytes()).is_err());
        assert!(read_trace("display_index,kind,size_bits,quality\n".as_bytes()).is_err());
        assert!(read_trace("index,kind,size,quality\n0,I,1,1\n".as_bytes()).is_err());
        let malformed = trace_text(&[(0, "I", 800, "x")]);
        assert!(matches!(read_trace(malformed.as_bytes()), Err(Error::Trace { line: 2, .. })));
        let gap = trace_text(&[(0, "I", 800, "1"), (2, "B", 100, "1")]);
        assert!(read_trace(gap.as_bytes()).is_err());
        let wrong_kind = trace_text(&[(0, "I", 800, "1"), (1, "P", 100, "1")]);
        let records = read_trace(wrong_kind.as_bytes()).unwrap();
        assert!(instance_from_records(&records, &config(None)).is_err());
    }

    #[test]
    fn coarse_slots_produce_ties() {
        let text = trace_text(&[(0, "I", 800, "1"), (1, "B", 100, "1"), (2, "P", 100, "1")]);
        let records = read_trace(text.as_bytes()).unwrap();
        let mut cfg = config(None);
        cfg.timing.slot_duration_s = Ratio::from_integer(1);
        assert!(matches!(
            instance_from_records(&records, &cfg),
            Err(Error::DeadlineOrder { .. })
        ));
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let params = SynthParams::video(GopPattern::new(16, 15).unwrap(), 40, timing("1"));
        let inst = synth_instance(3, &params).unwrap();
        save_trace(&path, &inst.records()).unwrap();
        let cfg = TraceConfig {
            pattern: GopPattern::new(16, 15).unwrap(),
            timing: timing("1"),
            frame_count: Some(40),
        };
        let loaded = load_trace(&path, &cfg).unwrap();
        assert_eq!(loaded, inst);
    }

    #[test]
    fn instance_json_round_trip() {
        let params = SynthParams::video(GopPattern::new(8, 3).unwrap(), 17, timing("0.1"));
        let inst = synth_instance(1, &params).unwrap();
        let text = inst.to_json();
        assert!(text.contains("\"pattern\": \"G8B3\""));
        assert!(text.contains("\"fps\": 30"));
        assert_eq!(Instance::from_json(&text).unwrap(), inst);
        let later = inst.with_delay(parse_rational("5").unwrap()).unwrap();
        assert_eq!(later.dag.frame(0).deadline, 5000);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let params = SynthParams::small(Shape::Random { frames: 9 });
        assert_eq!(synth_instance(0, &params).unwrap(), synth_instance(0, &params).unwrap());
        assert_ne!(synth_instance(0, &params).unwrap(), synth_instance(1, &params).unwrap());
    }

    #[test]
    fn synthesized_shapes_classify() {
        let g4b1 = SynthParams::small(Shape::Pattern {
            pattern: GopPattern::new(4, 1).unwrap(),
            frames: 8,
            stripped: false,
        });
        let inst = synth_instance(5, &g4b1).unwrap();
        assert_eq!(inst.dag.len(), 8);
        assert_eq!(classify(&inst.dag), ClassLabel::QuasiSio);
        let chain = SynthParams::small(Shape::Chain { frames: 9, gop_size: 4 });
        assert_eq!(classify(&synth_instance(5, &chain).unwrap().dag), ClassLabel::Sio);
        for seed in 0..200 {
            let inst = synth_instance(seed, &SynthParams::small(Shape::Random { frames: 9 })).unwrap();
            assert!(inst.dag.horizon() <= 2 + 8 * 2);
        }
    }

    #[test]
    fn invalid_params() {
        let mut p = SynthParams::small(Shape::Random { frames: 4 });
        p.sizes[0] = (0, 3);
        assert!(synth_instance(0, &p).is_err());
    }
}
