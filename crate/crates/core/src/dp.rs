//! Optimal scheduling by dynamic programming over the universal sequence.
//!
//! Both solvers share one backward-induction engine. A model lists, for every
//! `(rank, slot, state)`, the moves available there in tie-break priority
//! order; the engine keeps value rows only for the GOP block being solved
//! (every move stays inside its block or lands on the next block's first rank)
//! and an action byte per state for reconstruction.

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::dag::{DependencyDag, FrameId, FrameKind};
use crate::error::{Error, Result};
use crate::sim::{simulate, SimulationResult};
use crate::units::{slots_for, Quality};
use crate::universal::{universal, TransmissionSequence, UniversalKind, UniversalSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Bits delivered per timeslot.
    pub capacity: u64,
}

impl LinkConfig {
    pub fn new(capacity: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameters("capacity must be positive".into()));
        }
        Ok(LinkConfig { capacity })
    }

    pub fn slots(&self, size_bits: u64) -> u64 {
        slots_for(size_bits, self.capacity)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStatus {
    Successful,
    TransmittedUnsuccessful,
    Dropped,
}

/// An optimal schedule and its replay.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DpSolution {
    pub reward: Quality,
    /// `(frame, start slot)` in transmission order.
    pub schedule: Vec<(FrameId, u64)>,
    pub simulation: SimulationResult,
    /// Number of `(rank, slot, state)` cells evaluated.
    pub evaluations: u64,
}

impl DpSolution {
    pub fn sequence(&self) -> &TransmissionSequence {
        self.simulation.sequence()
    }

    pub fn status(&self) -> &[FrameStatus] {
        &self.simulation.status
    }
}

impl Serialize for DpSolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(2))?;
        m.serialize_entry("reward", &self.reward)?;
        m.serialize_entry("schedule", &ScheduleView(&self.simulation))?;
        m.end()
    }
}

struct ScheduleView<'a>(&'a SimulationResult);

impl Serialize for ScheduleView<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Entry {
            frame: FrameId,
            start: u64,
            end: u64,
            status: FrameStatus,
        }
        let sim = self.0;
        s.collect_seq(sim.sequence().order().iter().map(|&f| Entry {
            frame: f,
            start: sim.start[f].unwrap(),
            end: sim.finish[f].unwrap(),
            status: sim.status[f],
        }))
    }
}

const WAIT: u8 = 0;
const TRANSMIT: u8 = 1;
const DROP: u8 = 2;
const PASS: u8 = 3;
const INSERT: u8 = 4;

#[derive(Clone, Copy, Debug)]
struct Move {
    action: u8,
    gain: u64,
    rank: usize,
    dt: u64,
    state: usize,
    sent: Option<FrameId>,
}

impl Move {
    fn wait(rank: usize, state: usize) -> Self {
        Move {
            action: WAIT,
            gain: 0,
            rank,
            dt: 1,
            state,
            sent: None,
        }
    }

    fn jump(action: u8, rank: usize, state: usize) -> Self {
        Move {
            action,
            gain: 0,
            rank,
            dt: 0,
            state,
            sent: None,
        }
    }
}

/// Per-rank data of the order a model walks.
#[derive(Clone, Debug)]
struct Slot {
    frame: FrameId,
    delta: u64,
    deadline: u64,
    quality: u64,
    skip: usize,
    block_end: usize,
}

impl Slot {
    fn transmit(&self, t: u64, rank: usize, state: usize) -> (bool, Move) {
        let ok = t + self.delta <= self.deadline;
        let mv = Move {
            action: TRANSMIT,
            gain: if ok { self.quality } else { 0 },
            rank,
            dt: self.delta,
            state,
            sent: Some(self.frame),
        };
        (ok, mv)
    }
}

type Moves = ([Option<Move>; 5], usize);

fn push(moves: &mut Moves, mv: Move) {
    moves.0[moves.1] = Some(mv);
    moves.1 += 1;
}

trait Model {
    fn slots(&self) -> &[Slot];
    fn states(&self) -> usize;
    fn moves(&self, rank: usize, t: u64, state: usize) -> Moves;
}

struct Sio {
    slots: Vec<Slot>,
}

impl Model for Sio {
    fn slots(&self) -> &[Slot] {
        &self.slots
    }

    fn states(&self) -> usize {
        1
    }

    fn moves(&self, rank: usize, t: u64, _: usize) -> Moves {
        let slot = &self.slots[rank];
        let mut moves: Moves = ([None; 5], 0);
        let (ok, tx) = slot.transmit(t, rank + 1, 0);
        let drop = Move::jump(DROP, slot.skip, 0);
        if ok {
            push(&mut moves, tx);
            push(&mut moves, drop);
        } else {
            push(&mut moves, drop);
            push(&mut moves, tx);
        }
        push(&mut moves, Move::wait(rank, 0));
        moves
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    IFrame,
    /// Depends on its own GOP's I-frame only.
    Own,
    /// Depends on the next GOP's I-frame as well.
    Shared,
    /// Shared, with no shared frame above it in the tree: the next I-frame may
    /// be sent right before it.
    Critical,
}

/// Quasi-SIO model over the stripped pre-order. The state packs the status
/// bits of the two most recent I-frames (`s`, bit 0 = most recent) and
/// whether the current GOP's successor I-frame was already sent early (`e`).
struct Quasi {
    slots: Vec<Slot>,
    roles: Vec<Role>,
    /// For each rank, the rank of the next GOP's I-frame (as a slot).
    next_iframe: Vec<Option<usize>>,
}

const EARLY: usize = 4;

impl Model for Quasi {
    fn slots(&self) -> &[Slot] {
        &self.slots
    }

    fn states(&self) -> usize {
        8
    }

    fn moves(&self, rank: usize, t: u64, state: usize) -> Moves {
        let slot = &self.slots[rank];
        let s = state & 3;
        let early = state & EARLY != 0;
        let mut moves: Moves = ([None; 5], 0);
        let role = self.roles[rank];

        if role == Role::IFrame {
            if early {
                push(&mut moves, Move::jump(PASS, rank + 1, s));
                return moves;
            }
            let (ok, tx) = slot.transmit(t, rank + 1, (2 * s + 1) % 4);
            let drop = Move::jump(DROP, slot.skip, (2 * s) % 4);
            if ok {
                push(&mut moves, tx);
                push(&mut moves, drop);
            } else {
                push(&mut moves, drop);
                push(&mut moves, tx);
            }
            push(&mut moves, Move::wait(rank, state));
            return moves;
        }

        let (recent, older) = (s & 1 != 0, s & 2 != 0);
        let enabled = match role {
            Role::Own => (!early && recent) || (early && older),
            _ => early && recent && older,
        };
        let drop = Move::jump(DROP, slot.skip, state);
        let insert = (role == Role::Critical && !early).then(|| {
            let next = &self.slots[self.next_iframe[rank].expect("shared frames have a next I-frame")];
            let ok = t + next.delta <= next.deadline;
            let mv = Move {
                action: INSERT,
                gain: if ok { next.quality } else { 0 },
                rank,
                dt: next.delta,
                state: ((2 * s + 1) % 4) | EARLY,
                sent: Some(next.frame),
            };
            (ok, mv)
        });
        let tx = enabled.then(|| slot.transmit(t, rank + 1, state));

        for (ok, mv) in [tx, insert].into_iter().flatten() {
            if ok {
                push(&mut moves, mv);
            }
        }
        push(&mut moves, drop);
        for (ok, mv) in [tx, insert].into_iter().flatten() {
            if !ok {
                push(&mut moves, mv);
            }
        }
        push(&mut moves, Move::wait(rank, state));
        moves
    }
}

struct Solved {
    reward: u64,
    schedule: Vec<(FrameId, u64)>,
    evaluations: u64,
}

fn run(model: &impl Model, horizon: u64) -> Solved {
    let slots = model.slots();
    let n = slots.len();
    let states = model.states();
    let width = (horizon as usize + 1) * states;
    let mut rows: Vec<Option<Vec<u64>>> = vec![None; n + 1];
    rows[n] = Some(vec![0; width]);
    let mut actions = vec![WAIT; n * width];
    let mut evaluations = 0u64;

    for rank in (0..n).rev() {
        let end = slots[rank].block_end;
        if rank + 1 == end {
            // a new block: rows beyond its end are never read again
            for row in rows.iter_mut().skip(end + 1) {
                *row = None;
            }
        }
        let mut cur = vec![0u64; width];
        for t in (0..=horizon).rev() {
            for state in 0..states {
                evaluations += 1;
                let (moves, count) = model.moves(rank, t, state);
                let mut best = (0u64, WAIT);
                let mut first = true;
                for mv in moves[..count].iter().flatten() {
                    let to = t + mv.dt;
                    let future = if to > horizon {
                        0
                    } else if mv.rank == rank {
                        cur[to as usize * states + mv.state]
                    } else {
                        rows[mv.rank].as_ref().expect("rank inside the window")[to as usize * states + mv.state]
                    };
                    let value = mv.gain + future;
                    if first || value > best.0 {
                        best = (value, mv.action);
                        first = false;
                    }
                }
                let idx = t as usize * states + state;
                cur[idx] = best.0;
                actions[rank * width + idx] = best.1;
            }
        }
        rows[rank] = Some(cur);
    }

    let reward = if n == 0 { 0 } else { rows[0].as_ref().unwrap()[0] };
    let mut schedule = Vec::new();
    let (mut rank, mut t, mut state) = (0usize, 0u64, 0usize);
    while rank < n && t <= horizon {
        let code = actions[rank * width + t as usize * states + state];
        let (moves, count) = model.moves(rank, t, state);
        let mv = moves[..count]
            .iter()
            .flatten()
            .find(|m| m.action == code)
            .copied()
            .expect("stored action is available");
        if let Some(frame) = mv.sent {
            schedule.push((frame, t));
        }
        rank = mv.rank;
        t += mv.dt;
        state = mv.state;
    }
    Solved {
        reward,
        schedule,
        evaluations,
    }
}

fn slots_for_order(
    order: &[FrameId],
    skip: impl Fn(usize) -> usize,
    block_end: &[usize],
    dag: &DependencyDag,
    link: &LinkConfig,
) -> Vec<Slot> {
    order
        .iter()
        .enumerate()
        .map(|(rank, &f)| {
            let frame = dag.frame(f);
            Slot {
                frame: f,
                delta: link.slots(frame.size_bits),
                deadline: frame.deadline,
                quality: frame.quality.micros(),
                skip: skip(rank),
                block_end: block_end[rank],
            }
        })
        .collect()
}

/// For each rank of a GOP-blocked order, the rank just past its block.
fn block_ends(order: &[FrameId], dag: &DependencyDag) -> Vec<usize> {
    let mut ends = vec![order.len(); order.len()];
    let mut end = order.len();
    for rank in (0..order.len()).rev() {
        ends[rank] = end;
        if dag.frame(order[rank]).kind == FrameKind::I {
            end = rank;
        }
    }
    ends
}

fn finish(solved: Solved, dag: &DependencyDag, link: &LinkConfig) -> Result<DpSolution> {
    let (order, starts): (Vec<_>, Vec<_>) = solved.schedule.iter().copied().unzip();
    let seq = TransmissionSequence::new(order)?;
    let simulation = simulate(&seq, dag, link, Some(&starts))?;
    let reward = Quality::from_micros(solved.reward);
    debug_assert_eq!(simulation.reward, reward, "replay disagrees with the dynamic program");
    Ok(DpSolution {
        reward,
        schedule: solved.schedule,
        simulation,
        evaluations: solved.evaluations,
    })
}

fn check_input(universal: &UniversalSequence, dag: &DependencyDag) -> Result<()> {
    if dag.is_empty() {
        return Err(Error::InvalidParameters("cannot schedule an empty sequence".into()));
    }
    if universal.len() != dag.len() {
        return Err(Error::InvalidParameters(format!(
            "universal sequence has {} frames, dag has {}",
            universal.len(),
            dag.len()
        )));
    }
    Ok(())
}

/// Optimal schedule for an SIO dag.
pub fn solve_sio(universal: &UniversalSequence, dag: &DependencyDag, link: &LinkConfig) -> Result<DpSolution> {
    check_input(universal, dag)?;
    if universal.kind() != UniversalKind::Sio {
        return Err(Error::WrongClass {
            expected: "sio",
            actual: "quasi_sio",
        });
    }
    let order = universal.order();
    let ends = block_ends(order, dag);
    let model = Sio {
        slots: slots_for_order(order, |r| universal.next_irrelevant(r), &ends, dag, link),
    };
    finish(run(&model, dag.horizon()), dag, link)
}

/// Optimal schedule for a quasi-SIO dag. SIO universal sequences are accepted
/// as the degenerate case with no shared frames.
pub fn solve_quasi_sio(
    universal: &UniversalSequence,
    dag: &DependencyDag,
    link: &LinkConfig,
) -> Result<DpSolution> {
    check_input(universal, dag)?;
    let order = universal.base_order();
    let partition = universal.partition();
    let critical = universal.critical();
    let ends = block_ends(order, dag);
    let slots = slots_for_order(order, |r| universal.base_skip(r), &ends, dag, link);
    let mut rank_of = vec![0; dag.len()];
    for (r, &f) in order.iter().enumerate() {
        rank_of[f] = r;
    }
    let mut roles = Vec::with_capacity(order.len());
    let mut next_iframe = Vec::with_capacity(order.len());
    for &f in order {
        let g = partition.gop_of(f);
        let role = if dag.frame(f).kind == FrameKind::I {
            Role::IFrame
        } else if critical.is_critical(g, f) {
            Role::Critical
        } else if partition.is_shared(f) {
            Role::Shared
        } else {
            Role::Own
        };
        roles.push(role);
        next_iframe.push(partition.next_iframe(g).map(|i| rank_of[i]));
    }
    let model = Quasi {
        slots,
        roles,
        next_iframe,
    };
    finish(run(&model, dag.horizon()), dag, link)
}

/// Classifies `dag` and dispatches to the matching solver.
pub fn solve(dag: &DependencyDag, link: &LinkConfig) -> Result<DpSolution> {
    let u = universal(dag)?;
    solve_with(&u, dag, link)
}

/// Dispatches on the kind of a precomputed universal sequence.
pub fn solve_with(universal: &UniversalSequence, dag: &DependencyDag, link: &LinkConfig) -> Result<DpSolution> {
    match universal.kind() {
        UniversalKind::Sio => solve_sio(universal, dag, link),
        UniversalKind::QuasiSio => solve_quasi_sio(universal, dag, link),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{build_dyadic, pattern_builder, strip_backward_edges, DagBuilder, GopPattern};
    use crate::universal::{check_canonical, sio_universal};

    fn chain(deadlines: &[u64], qualities: &[u64]) -> DependencyDag {
        let kinds = (0..deadlines.len())
            .map(|i| if i == 0 { FrameKind::I } else { FrameKind::P })
            .collect();
        let mut b = DagBuilder::new(kinds);
        for v in 1..deadlines.len() {
            b.add_edge(v - 1, v);
        }
        b.build_with(|id, _| (1, deadlines[id], Quality::from_units(qualities[id])))
            .unwrap()
    }

    fn link(c: u64) -> LinkConfig {
        LinkConfig::new(c).unwrap()
    }

    #[test]
    fn chain_examples() {
        let dag = chain(&[1, 2], &[5, 3]);
        let sol = solve(&dag, &link(1)).unwrap();
        assert_eq!(sol.reward, Quality::from_units(8));
        assert_eq!(sol.schedule, vec![(0, 0), (1, 1)]);

        let dag = chain(&[0, 2], &[5, 3]);
        let sol = solve(&dag, &link(1)).unwrap();
        assert_eq!(sol.reward, Quality::from_units(3));
        assert_eq!(sol.status(), &[FrameStatus::TransmittedUnsuccessful, FrameStatus::Successful]);
    }

    #[test]
    fn lossless_regime_earns_everything() {
        let dag = build_dyadic(16, 3, 2)
            .unwrap()
            .map_frames(|f| (100, 10 * f.id as u64 + 10, Quality::from_units(1)))
            .unwrap();
        let sol = solve(&dag, &link(1000)).unwrap();
        assert_eq!(sol.reward, dag.total_quality());
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let dag = chain(&[1, 2], &[1, 1]);
        let u = universal(&dag).unwrap();
        let other = chain(&[1, 2, 3], &[1, 1, 1]);
        assert!(solve_sio(&u, &other, &link(1)).is_err());
        assert!(LinkConfig::new(0).is_err());
    }

    #[test]
    fn dispatch_by_class() {
        let quasi = build_dyadic(16, 3, 2).unwrap();
        let stripped = strip_backward_edges(&quasi);
        assert_eq!(universal(&stripped).unwrap().kind(), UniversalKind::Sio);
        assert_eq!(universal(&quasi).unwrap().kind(), UniversalKind::QuasiSio);
        assert!(solve_sio(&universal(&quasi).unwrap(), &quasi, &link(1)).is_err());
        let mut b = DagBuilder::new(vec![FrameKind::I, FrameKind::P, FrameKind::P, FrameKind::P]);
        b.add_edge(0, 1);
        b.add_edge(0, 2);
        b.add_edge(1, 3);
        assert!(matches!(
            solve(&b.build().unwrap(), &link(1)),
            Err(Error::UnsupportedStructure(_))
        ));
    }

    #[test]
    fn quasi_solver_on_sio_matches_sio_solver() {
        let dag = DagBuilder::new(vec![FrameKind::I; 5])
            .build_with(|id, _| (3 + id as u64 % 2, 2 * id as u64 + 2, Quality::from_units(id as u64 + 1)))
            .unwrap();
        let u = sio_universal(&dag).unwrap();
        for c in 1..5 {
            let a = solve_sio(&u, &dag, &link(c)).unwrap();
            let b = solve_quasi_sio(&u, &dag, &link(c)).unwrap();
            assert_eq!(a.reward, b.reward);
        }
    }

    #[test]
    fn oversized_next_iframe_is_dropped() {
        let dag = build_dyadic(4, 1, 2)
            .unwrap()
            .map_frames(|f| {
                let size = if f.id == 4 { 50 } else { 1 };
                (size, f.id as u64 + 2, Quality::from_units(1))
            })
            .unwrap();
        let sol = solve(&dag, &link(1)).unwrap();
        let sent = sol.sequence().selected();
        assert!(!sent.contains(&4));
        for f in [3, 5, 6, 7] {
            assert!(!sent.contains(&f));
        }
        assert_eq!(sol.reward, Quality::from_units(3));
    }

    #[test]
    fn early_insertion_beats_hoisted_order() {
        // 0:I 1:P<-0 2:B<-{1,4} 3:P<-1 4:I, two slots each
        let mut b = DagBuilder::new(vec![FrameKind::I, FrameKind::P, FrameKind::B, FrameKind::P, FrameKind::I]);
        b.add_edge(0, 1);
        b.add_edge(1, 2);
        b.add_edge(4, 2);
        b.add_edge(1, 3);
        let deadlines = [2, 4, 5, 6, 8];
        let dag = b.build_with(|id, _| (2, deadlines[id], Quality::from_units(1))).unwrap();
        let sol = solve(&dag, &link(1)).unwrap();
        assert_eq!(sol.reward, Quality::from_units(4));
        assert_eq!(sol.sequence().order(), &[0, 1, 3, 4]);
    }

    #[test]
    fn evaluation_count_is_linear() {
        let dag = pattern_builder(GopPattern::new(16, 15).unwrap(), 33)
            .build_with(|id, _| (1, 3 * id as u64 + 1, Quality::from_units(1)))
            .unwrap();
        let sol = solve(&dag, &link(1)).unwrap();
        assert_eq!(sol.evaluations, 8 * 33 * (dag.horizon() + 1));
    }

    #[test]
    fn schedules_are_canonical_and_replay_exactly() {
        let dag = build_dyadic(8, 3, 2)
            .unwrap()
            .map_frames(|f| (3 + (f.id as u64 * 7) % 5, 2 * f.id as u64 + 3, Quality::from_units(1 + f.id as u64 % 3)))
            .unwrap();
        for c in 1..6 {
            let sol = solve(&dag, &link(c)).unwrap();
            assert_eq!(sol.simulation.reward, sol.reward);
            assert!(check_canonical(sol.sequence(), &dag).dependency.is_none());
        }
    }
}
