//! Dyadic level crossings, passage times against the scale
//! `tₙ = 2^(n+5) / b(2^(n−4))`, and blowup time and probability estimates.

use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use crate::error::{Error, Result};
use crate::integrator::{Status, Trajectory};
use crate::lattice::LatticeDomain;
use crate::model::{osgood_time, ModelSpec, OsgoodTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `inf` over the sites in the window `[a, 1 − a]`.
    InfOverWindow,
    SupOverDomain,
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::InfOverWindow => "inf_over_window",
            Statistic::SupOverDomain => "sup_over_domain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingSpec {
    pub statistic: Statistic,
    /// `a` of the window `[a, 1 − a]`, `0 < a < ½`.
    pub window_a: f64,
    /// Lowest level `n` that may be reported.
    pub min_level: i32,
}

impl Default for CrossingSpec {
    fn default() -> Self {
        CrossingSpec {
            statistic: Statistic::InfOverWindow,
            window_a: 1.0 / 3.0,
            min_level: 0,
        }
    }
}

impl CrossingSpec {
    pub fn sup_over_domain() -> Self {
        CrossingSpec {
            statistic: Statistic::SupOverDomain,
            ..Default::default()
        }
    }
}

/// One crossing. `Up` at level `n`: the statistic first reached `2^(n+1)`.
/// `Down` at level `n`: after the `Up` at `n`, it first fell below `2^(n−4)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub n: i32,
    pub direction: Direction,
    pub t: f64,
    /// Site attaining the statistic when the crossing was seen.
    pub site: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingLog {
    /// Sorted by `t`.
    pub records: Vec<CrossingRecord>,
    pub statistic: Statistic,
    pub window: (f64, f64),
}

impl CrossingLog {
    pub fn up_time(&self, n: i32) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.n == n && r.direction == Direction::Up)
            .map(|r| r.t)
    }

    /// `t(Up n) − t(Up n−1)`: time to climb from `2ⁿ` to `2^(n+1)`.
    pub fn passage_time(&self, n: i32) -> Option<f64> {
        Some(self.up_time(n)? - self.up_time(n - 1)?)
    }
}

const MAX_LEVEL: i32 = 1100;

/// Online crossing detector fed with successive field snapshots.
#[derive(Debug, Clone)]
pub struct CrossingTracker {
    spec: CrossingSpec,
    sites: std::ops::Range<usize>,
    window: (f64, f64),
    next_up: Option<i32>,
    armed: Vec<i32>,
    records: Vec<CrossingRecord>,
}

impl CrossingTracker {
    pub fn new(spec: CrossingSpec, domain: &LatticeDomain) -> Result<Self> {
        let (sites, window) = match spec.statistic {
            Statistic::InfOverWindow => {
                let a = spec.window_a;
                if !(a > 0.0 && a < 0.5) {
                    return Err(Error::contract(format!("window parameter a = {a} not in (0, 1/2)")));
                }
                let (x0, x1) = domain.extent();
                if a < x0 || 1.0 - a > x1 {
                    return Err(Error::contract(format!(
                        "window [{a}, {}] is not inside the domain [{x0}, {x1}]",
                        1.0 - a
                    )));
                }
                let r = domain.sites_in(a, 1.0 - a);
                if r.is_empty() {
                    return Err(Error::contract("window contains no lattice sites"));
                }
                (r, (a, 1.0 - a))
            }
            Statistic::SupOverDomain => (0..domain.n_sites(), domain.extent()),
        };
        Ok(CrossingTracker {
            spec,
            sites,
            window,
            next_up: None,
            armed: Vec::new(),
            records: Vec::new(),
        })
    }

    fn statistic(&self, values: &[f64]) -> (f64, usize) {
        let vals = values[self.sites.clone()].iter().enumerate();
        let (i, v) = match self.spec.statistic {
            Statistic::InfOverWindow => {
                vals.fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc })
            }
            Statistic::SupOverDomain => vals.fold((0, f64::NEG_INFINITY), |acc, (i, &v)| {
                if v > acc.1 || v.is_nan() {
                    (i, v)
                } else {
                    acc
                }
            }),
        };
        (v, self.sites.start + i)
    }

    /// Feed a snapshot; returns the crossings it produced. The first call only
    /// sets the starting level: levels already met then are not reported.
    pub fn observe(&mut self, t: f64, values: &[f64]) -> Vec<CrossingRecord> {
        let (v, site) = self.statistic(values);
        let mut new = Vec::new();
        let next = match self.next_up {
            Some(n) => n,
            None => {
                let start = if v > 0.0 && v.is_finite() {
                    (v.log2().floor() as i32).clamp(self.spec.min_level, MAX_LEVEL)
                } else if v.is_finite() {
                    self.spec.min_level
                } else {
                    MAX_LEVEL
                };
                self.next_up = Some(start);
                return new;
            }
        };
        let mut n = next;
        while n < MAX_LEVEL && (v >= 2f64.powi(n + 1) || v.is_infinite() && v > 0.0) {
            new.push(CrossingRecord {
                n,
                direction: Direction::Up,
                t,
                site,
            });
            self.armed.push(n);
            n += 1;
        }
        self.next_up = Some(n);
        let mut k = 0;
        while k < self.armed.len() {
            let lvl = self.armed[k];
            if v < 2f64.powi(lvl - 4) {
                new.push(CrossingRecord {
                    n: lvl,
                    direction: Direction::Down,
                    t,
                    site,
                });
                self.armed.swap_remove(k);
            } else {
                k += 1;
            }
        }
        self.records.extend_from_slice(&new);
        new
    }

    pub fn records(&self) -> &[CrossingRecord] {
        &self.records
    }

    pub fn finish(self) -> CrossingLog {
        CrossingLog {
            records: self.records,
            statistic: self.spec.statistic,
            window: self.window,
        }
    }
}

/// Crossings from the recorded snapshots of a trajectory.
pub fn detect_crossings(traj: &Trajectory, spec: &CrossingSpec) -> Result<CrossingLog> {
    let mut tracker = CrossingTracker::new(spec.clone(), &traj.domain)?;
    for r in &traj.records {
        tracker.observe(r.t, &r.values);
    }
    Ok(tracker.finish())
}

/// `tₙ = 2^(n+5) / b(2^(n−4))`.
pub fn theoretical_tn(model: &ModelSpec, n: i32) -> Result<f64> {
    let bx = model.b(2f64.powi(n - 4));
    if !(bx > 0.0) {
        return Err(Error::domain(format!("b(2^{}) = {bx} is not positive", n - 4)));
    }
    Ok(2f64.powi(n + 5) / bx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassageRow {
    pub n: i32,
    pub count: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub t_n: f64,
    /// `median / tₙ`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassageStats {
    pub rows: Vec<PassageRow>,
    /// Least-squares slope of `log₂ median` against `n`.
    pub slope: Option<f64>,
    /// Slope of `log₂(2ⁿ / b(2ⁿ))` over the same levels.
    pub theory_slope: Option<f64>,
}

pub(crate) fn ls_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let m = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (sxx, sxy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| {
        (a + (x - mx).powi(2), b + (x - mx) * (y - my))
    });
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Per-level passage-time quantiles across replicas. Levels without data are
/// omitted.
pub fn passage_time_stats(logs: &[CrossingLog], model: &ModelSpec) -> Result<PassageStats> {
    let mut levels: Vec<i32> = logs
        .iter()
        .flat_map(|l| l.records.iter().filter(|r| r.direction == Direction::Up).map(|r| r.n))
        .collect();
    levels.sort_unstable();
    levels.dedup();
    let samples = levels
        .iter()
        .map(|&n| (n, logs.iter().filter_map(|l| l.passage_time(n)).collect()))
        .collect();
    passage_stats_from_samples(samples, model)
}

/// As [`passage_time_stats`] from per-level samples `(n, times)`; non-finite
/// times are dropped.
pub fn passage_stats_from_samples(samples: Vec<(i32, Vec<f64>)>, model: &ModelSpec) -> Result<PassageStats> {
    let mut rows = Vec::new();
    for (n, times) in samples {
        let times: Vec<f64> = times.into_iter().filter(|t| t.is_finite()).collect();
        if times.is_empty() {
            continue;
        }
        let mut data = Data::new(times);
        let median = data.median();
        let t_n = theoretical_tn(model, n)?;
        rows.push(PassageRow {
            n,
            count: data.len(),
            median,
            q25: data.lower_quartile(),
            q75: data.upper_quartile(),
            t_n,
            ratio: median / t_n,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.median > 0.0)
        .map(|r| (r.n as f64, r.median.log2()))
        .collect();
    let theory: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            let x = 2f64.powi(r.n);
            (r.n as f64, (x / model.b(x)).log2())
        })
        .collect();
    Ok(PassageStats {
        slope: ls_slope(&pts),
        theory_slope: ls_slope(&theory),
        rows,
    })
}

/// `(τ_cap, τ_cap + ∫_cap^∞ dx/b(x))` for a trajectory that hit the cap.
pub fn blowup_time_estimate(traj: &Trajectory, model: &ModelSpec, field_cap: f64) -> Result<(f64, f64)> {
    let tau_cap = match traj.status() {
        Status::BlownUp { t, overflow: false, .. } => t,
        Status::BlownUp { overflow: true, .. } => {
            return Err(Error::Invalid("trajectory overflowed before reaching the cap".into()))
        }
        _ => return Err(Error::contract("trajectory did not blow up")),
    };
    match osgood_time(model, field_cap)? {
        OsgoodTime::Finite(tail) => Ok((tau_cap, tau_cap + tail)),
        OsgoodTime::Infinite => Err(Error::Invalid(format!(
            "drift '{}' has a divergent Osgood integral; reaching the cap is a numerical artifact",
            model.drift.describe()
        ))),
    }
}

/// 95% two-sided normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_replicas: usize,
    pub blown_up: usize,
}

impl ProbabilityEstimate {
    pub fn overlaps(&self, other: &ProbabilityEstimate) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Fraction of replicas blown up by time `horizon`, with a Wilson 95% interval.
pub fn blowup_probability(statuses: &[Status], horizon: f64) -> Result<ProbabilityEstimate> {
    if statuses.is_empty() {
        return Err(Error::contract("need at least one replica"));
    }
    let k = statuses
        .iter()
        .filter(|s| matches!(s.blowup_time(), Some(t) if t <= horizon))
        .count();
    let n = statuses.len();
    let (mut lo, mut hi) = wilson_interval(k, n, Z95);
    if k == 0 {
        lo = 0.0;
    }
    if k == n {
        hi = 1.0;
    }
    Ok(ProbabilityEstimate {
        p_hat: k as f64 / n as f64,
        lo,
        hi,
        n_replicas: n,
        blown_up: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{FieldState, Record};
    use crate::lattice::Boundary;
    use crate::model::{catalog_models, osgood_sum, ScalarFn, Verdict};

    fn traj(values: &[f64], domain: LatticeDomain) -> Trajectory {
        Trajectory {
            domain,
            records: values
                .iter()
                .enumerate()
                .map(|(k, &v)| Record {
                    t: k as f64,
                    step: k as u64,
                    values: vec![v; domain.n_sites()],
                })
                .collect(),
            events: vec![],
            crossings: CrossingLog {
                records: vec![],
                statistic: Statistic::SupOverDomain,
                window: (0.0, 1.0),
            },
            final_state: FieldState::new(vec![0.0; domain.n_sites()]),
        }
    }

    fn unit() -> LatticeDomain {
        LatticeDomain::interval(0.0, 1.0, 0.125, Boundary::Periodic).unwrap()
    }

    #[test]
    fn monotone_path_crosses_each_level_once() {
        let path: Vec<f64> = (0..=100).map(|k| 2f64.powf(k as f64 / 10.0)).collect();
        let log = detect_crossings(&traj(&path, unit()), &CrossingSpec::default()).unwrap();
        let ns: Vec<i32> = log.records.iter().map(|r| r.n).collect();
        assert_eq!(ns, (0..10).collect::<Vec<_>>());
        assert!(log.records.iter().all(|r| r.direction == Direction::Up));
        assert!(log.records.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn constant_path_and_down_crossings() {
        let log = detect_crossings(&traj(&[1.5; 20], unit()), &CrossingSpec::default()).unwrap();
        assert!(log.records.is_empty());
        // starting below 1, reaching 1.5 = crossing 2^0, which is level n = −1
        let spec = CrossingSpec {
            min_level: -4,
            ..Default::default()
        };
        let log = detect_crossings(&traj(&[0.5, 1.5, 1.5], unit()), &spec).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!((log.records[0].n, log.records[0].direction), (-1, Direction::Up));

        let log = detect_crossings(&traj(&[1.0, 9.0, 0.2, 0.01], unit()), &CrossingSpec::default()).unwrap();
        let downs: Vec<(i32, f64)> = log
            .records
            .iter()
            .filter(|r| r.direction == Direction::Down)
            .map(|r| (r.n, r.t))
            .collect();
        // Up at 0, 1, 2; 0.2 < 2^(2−4) = 0.25 drops level 2; 0.01 drops 0 and 1
        assert_eq!(downs.len(), 3);
        assert!(downs.contains(&(2, 2.0)));
        assert!(downs.contains(&(1, 3.0)) && downs.contains(&(0, 3.0)));
    }

    #[test]
    fn window_validation() {
        let spec = CrossingSpec {
            window_a: 0.6,
            ..Default::default()
        };
        assert!(detect_crossings(&traj(&[1.0], unit()), &spec).is_err());
        let off = LatticeDomain::interval(2.0, 3.0, 0.125, Boundary::Dirichlet).unwrap();
        assert!(detect_crossings(&traj(&[1.0], off), &CrossingSpec::default()).is_err());
    }

    #[test]
    fn theoretical_tn_values() {
        let m = ModelSpec::new("q", ScalarFn::power(1.0, 2.0), ScalarFn::Zero);
        assert_eq!(theoretical_tn(&m, 4).unwrap(), 512.0);
        assert_eq!(theoretical_tn(&m, 12).unwrap(), 2.0);
        let zero = ModelSpec::new("z", ScalarFn::Zero, ScalarFn::Zero);
        assert!(matches!(theoretical_tn(&zero, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn tn_summability_matches_osgood_verdict() {
        for m in catalog_models() {
            let terms: Vec<f64> = (4..=64).map(|n| theoretical_tn(&m, n).unwrap()).collect();
            let class = crate::model::classify_series(&terms, 4);
            let verdict = osgood_sum(&m, 60).unwrap().verdict();
            assert_eq!(class.verdict, verdict, "{}", m.name);
            assert_ne!(verdict, Verdict::Inconclusive);
        }
    }

    #[test]
    fn passage_stats_deterministic_and_empty() {
        let m = ModelSpec::new("q", ScalarFn::power(1.0, 2.0), ScalarFn::Zero);
        let path: Vec<f64> = (0..=100).map(|k| 2f64.powf(k as f64 / 10.0)).collect();
        let log = detect_crossings(&traj(&path, unit()), &CrossingSpec::default()).unwrap();
        let stats = passage_time_stats(std::slice::from_ref(&log), &m).unwrap();
        for r in &stats.rows {
            assert_eq!(r.median, log.passage_time(r.n).unwrap());
            assert_eq!(r.q25, r.median);
            assert_eq!(r.count, 1);
        }
        assert_eq!(stats.rows.len(), 9);
        assert!((stats.theory_slope.unwrap() + 1.0).abs() < 1e-12);
        assert!(passage_time_stats(&[], &m).unwrap().rows.is_empty());
    }

    #[test]
    fn wilson_bounds() {
        let none = vec![Status::Finished; 100];
        let p = blowup_probability(&none, 1.0).unwrap();
        assert_eq!(p.p_hat, 0.0);
        assert_eq!(p.lo, 0.0);
        assert!((p.hi - Z95 * Z95 / (100.0 + Z95 * Z95)).abs() < 1e-15);
        assert!((p.hi - 0.036).abs() < 0.002);
        let all = vec![
            Status::BlownUp {
                t: 0.5,
                site: 0,
                overflow: false
            };
            10
        ];
        let p = blowup_probability(&all, 1.0).unwrap();
        assert_eq!((p.p_hat, p.hi), (1.0, 1.0));
        assert_eq!(blowup_probability(&all, 0.4).unwrap().p_hat, 0.0);
        assert!(blowup_probability(&[], 1.0).is_err());
    }
}
