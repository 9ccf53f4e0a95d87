//! Capacity/delay sweeps over all schedulers and their comparison.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{run_baseline, Algorithm};
use crate::dag::DependencyDag;
use crate::dp::{solve_with, LinkConfig};
use crate::error::{Error, Result};
use crate::sim::{lossless_capacity, min_capacity};
use crate::trace::Instance;
use crate::units::{format_rational, Quality, Rational};
use crate::universal::{universal, UniversalSequence};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    #[serde(serialize_with = "ser_rational")]
    pub delay: Rational,
    pub capacity: u64,
    pub reward: Quality,
    /// Reward divided by the frame count, six decimals.
    pub avg_quality: String,
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(&format_rational(r))
}

/// `k`-th point is `ceil(max * k / points)`, duplicates removed.
pub fn capacity_grid(max: u64, points: usize) -> Vec<u64> {
    let mut grid: Vec<u64> = (1..=points as u64)
        .map(|k| (max as u128 * k as u128).div_ceil(points as u128) as u64)
        .filter(|&c| c > 0)
        .collect();
    grid.dedup();
    grid
}

/// Parses `a:b:step` into `a, a+step, ..., <= b`.
pub fn parse_capacity_range(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidParameters(format!("capacity range {spec:?} is not a:b:step"));
    let parts: Vec<u64> = spec
        .split(':')
        .map(|p| p.trim().parse::<u64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if start == 0 || step == 0 || end < start {
        return Err(bad());
    }
    Ok((start..=end).step_by(step as usize).collect())
}

/// Reward of one algorithm at one capacity. `universal` is required for the
/// optimal scheduler and reused by DOEDF.
pub fn reward_of(
    algorithm: Algorithm,
    dag: &DependencyDag,
    universal: Option<&UniversalSequence>,
    capacity: u64,
) -> Result<Quality> {
    let link = LinkConfig::new(capacity)?;
    match algorithm {
        Algorithm::Optimal => {
            let u = universal.ok_or_else(|| Error::InvalidParameters("optimal needs a universal sequence".into()))?;
            Ok(solve_with(u, dag, &link)?.reward)
        }
        other => Ok(run_baseline(other, dag, &link, universal)?.reward),
    }
}

/// Smallest capacity at which `algorithm` delivers every frame.
pub fn algorithm_lossless_capacity(
    algorithm: Algorithm,
    dag: &DependencyDag,
    universal: Option<&UniversalSequence>,
) -> Result<Option<u64>> {
    if algorithm == Algorithm::Optimal {
        return lossless_capacity(dag);
    }
    let total = dag.total_quality();
    let max_size = dag.frames().iter().map(|f| f.size_bits).max().unwrap_or(1);
    min_capacity(max_size, |c| Ok(reward_of(algorithm, dag, universal, c)? == total))
}

/// Largest per-algorithm lossless capacity.
pub fn sweep_endpoint(dag: &DependencyDag, universal: Option<&UniversalSequence>, algorithms: &[Algorithm]) -> Result<u64> {
    let mut end = 1;
    for &a in algorithms {
        let c = algorithm_lossless_capacity(a, dag, universal)?
            .ok_or_else(|| Error::InvalidParameters(format!("{a} never becomes lossless on this instance")))?;
        end = end.max(c);
    }
    Ok(end)
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub delays: Vec<Rational>,
    /// Fixed grid; when `None` each delay gets `grid_points` up to its endpoint.
    pub capacities: Option<Vec<u64>>,
    pub grid_points: usize,
    pub algorithms: Vec<Algorithm>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            delays: Vec::new(),
            capacities: None,
            grid_points: 20,
            algorithms: Algorithm::ALL.to_vec(),
        }
    }
}

/// Rows ordered by delay, then capacity, then algorithm as listed. An empty
/// delay list uses the instance's own deadlines (reported as delay 0 unless
/// the instance has timing).
pub fn sweep(instance: &Instance, config: &SweepConfig) -> Result<Vec<SweepRow>> {
    let delays: Vec<(Rational, DependencyDag)> = if config.delays.is_empty() {
        let delay = instance.timing.map_or(Rational::from_integer(0), |t| t.initial_delay_s);
        vec![(delay, instance.dag.clone())]
    } else {
        config
            .delays
            .iter()
            .map(|&d| Ok((d, instance.with_delay(d)?.dag)))
            .collect::<Result<_>>()?
    };
    let needs_universal = config.algorithms.contains(&Algorithm::Optimal);

    let mut cells = Vec::new();
    let mut prepared = Vec::new();
    for (i, (delay, dag)) in delays.iter().enumerate() {
        let u = match universal(dag) {
            Ok(u) => Some(u),
            Err(e) if needs_universal => return Err(e),
            Err(_) => None,
        };
        let grid = match &config.capacities {
            Some(c) => c.clone(),
            None => capacity_grid(sweep_endpoint(dag, u.as_ref(), &config.algorithms)?, config.grid_points),
        };
        log::info!("delay {}: {} capacities", format_rational(delay), grid.len());
        for &c in &grid {
            for &a in &config.algorithms {
                cells.push((i, c, a));
            }
        }
        prepared.push(u);
    }

    cells
        .into_par_iter()
        .map(|(i, capacity, algorithm)| {
            let (delay, dag) = &delays[i];
            let reward = reward_of(algorithm, dag, prepared[i].as_ref(), capacity)?;
            Ok(SweepRow {
                algorithm,
                delay: *delay,
                capacity,
                reward,
                avg_quality: reward.mean_string(dag.len()),
            })
        })
        .collect()
}

pub fn write_sweep_csv(mut out: impl Write, rows: &[SweepRow]) -> Result<()> {
    writeln!(out, "algo,delay,capacity,avg_quality")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.algorithm,
            format_rational(&r.delay),
            r.capacity,
            r.avg_quality
        )?;
    }
    Ok(())
}

/// A baseline beating the optimal scheduler (should never happen).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DominanceBreach {
    pub algorithm: Algorithm,
    pub delay: String,
    pub capacity: u64,
    pub optimal: Quality,
    pub reward: Quality,
}

/// A capacity increase that lowered an algorithm's reward.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RewardDrop {
    pub algorithm: Algorithm,
    pub delay: String,
    pub from_capacity: u64,
    pub to_capacity: u64,
    pub from_reward: Quality,
    pub to_reward: Quality,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Comparison {
    pub cells: usize,
    /// Per baseline, the number of cells where it matches the optimum.
    pub ties_with_optimal: BTreeMap<String, usize>,
    pub dominance_breaches: Vec<DominanceBreach>,
    pub non_monotone: Vec<RewardDrop>,
}

pub fn compare(rows: &[SweepRow]) -> Comparison {
    let mut by_cell: BTreeMap<(Rational, u64), BTreeMap<Algorithm, Quality>> = BTreeMap::new();
    for r in rows {
        by_cell.entry((r.delay, r.capacity)).or_default().insert(r.algorithm, r.reward);
    }
    let mut ties = BTreeMap::new();
    let mut breaches = Vec::new();
    for ((delay, capacity), rewards) in &by_cell {
        let Some(&optimal) = rewards.get(&Algorithm::Optimal) else {
            continue;
        };
        for (&algorithm, &reward) in rewards.iter().filter(|(a, _)| **a != Algorithm::Optimal) {
            let count = ties.entry(algorithm.name().to_string()).or_insert(0);
            if reward == optimal {
                *count += 1;
            }
            if reward > optimal {
                breaches.push(DominanceBreach {
                    algorithm,
                    delay: format_rational(delay),
                    capacity: *capacity,
                    optimal,
                    reward,
                });
            }
        }
    }
    let mut series: BTreeMap<(Algorithm, Rational), Vec<(u64, Quality)>> = BTreeMap::new();
    for r in rows {
        series.entry((r.algorithm, r.delay)).or_default().push((r.capacity, r.reward));
    }
    let mut drops = Vec::new();
    for ((algorithm, delay), mut points) in series {
        points.sort_unstable();
        for w in points.windows(2) {
            if w[1].1 < w[0].1 {
                drops.push(RewardDrop {
                    algorithm,
                    delay: format_rational(&delay),
                    from_capacity: w[0].0,
                    to_capacity: w[1].0,
                    from_reward: w[0].1,
                    to_reward: w[1].1,
                });
            }
        }
    }
    Comparison {
        cells: by_cell.len(),
        ties_with_optimal: ties,
        dominance_breaches: breaches,
        non_monotone: drops,
    }
}
