//! Leave-subset-out model pools repeated over independent runs.
//!
//! In run `r` the series are split into `K` subsets; model `k` of that run
//! trains on every series outside subset `k` and forecasts exactly those
//! series. Each series therefore collects `R·(K−1)` forecasts, which are
//! combined componentwise.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, MonthlySeries, SeriesCollection, YearMonth};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::derive_seed;
use crate::trainer::{self, TrainConfig, TrainedModel};

/// Componentwise combination of contributor forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
    /// Mean after dropping the smallest and largest value; plain mean for
    /// fewer than three contributors.
    TrimmedMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// K: models per run.
    pub pool_size: usize,
    /// R: independent runs.
    pub runs: usize,
    /// Settings shared by every member; its seed is replaced per member.
    pub base: TrainConfig,
    pub master_seed: u64,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    pub aggregation: Aggregation,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            pool_size: 4,
            runs: 3,
            base: TrainConfig::default(),
            master_seed: 0,
            threads: None,
            aggregation: Aggregation::Mean,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size < 2 {
            return Err(Error::InvalidConfig(format!("pool size K must be at least 2, got {}", self.pool_size)));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("number of runs R must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("thread count must be at least 1".into()));
        }
        self.base.validate()
    }

    /// Contributors per series.
    pub fn contributors_per_series(&self) -> usize {
        self.runs * (self.pool_size - 1)
    }
}

/// Seed of the series partition drawn in run `run` (1-based).
pub fn partition_seed(master: u64, run: usize) -> u64 {
    derive_seed(master, &[run as u64])
}

/// Trainer seed of model `pool` in run `run` (both 1-based).
pub fn member_seed(master: u64, run: usize, pool: usize) -> u64 {
    derive_seed(master, &[run as u64, pool as u64])
}

/// Disjoint subsets covering a set of series ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub subsets: Vec<Vec<String>>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Index of the subset holding `id`.
    pub fn subset_of(&self, id: &str) -> Option<usize> {
        self.subsets.iter().position(|s| s.iter().any(|x| x == id))
    }
}

/// Random split into `k` subsets whose sizes differ by at most one. Within a
/// subset, ids keep their input order.
pub fn partition_series(ids: &[String], k: usize, seed: u64) -> Result<Partition> {
    if k == 0 || ids.len() < k {
        return Err(Error::InvalidConfig(format!(
            "cannot split {} series into {k} non-empty subsets",
            ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots = vec![Vec::new(); k];
    for (rank, &i) in order.iter().enumerate() {
        slots[rank % k].push(i);
    }
    let subsets = slots
        .into_iter()
        .map(|mut s| {
            s.sort_unstable();
            s.into_iter().map(|i| ids[i].clone()).collect()
        })
        .collect();
    Ok(Partition { subsets })
}

/// Componentwise combination of equally long forecasts.
pub fn aggregate<T: Real>(contributors: &[Vec<T>], how: Aggregation) -> Result<Vec<T>> {
    let first = contributors.first().ok_or_else(|| Error::Empty("no contributing forecasts".into()))?;
    if contributors.iter().any(|c| c.len() != first.len()) {
        return Err(Error::DimensionMismatch("contributing forecasts differ in length".into()));
    }
    let n = contributors.len();
    let mut column = Vec::with_capacity(n);
    let out = (0..first.len())
        .map(|h| {
            column.clear();
            column.extend(contributors.iter().map(|c| c[h]));
            match how {
                Aggregation::Mean => mean(&column),
                Aggregation::Median => {
                    column.sort_by(|a, b| a.partial_cmp(b).expect("finite forecasts"));
                    if n % 2 == 1 {
                        column[n / 2]
                    } else {
                        (column[n / 2 - 1] + column[n / 2]) / T::lit(2.0)
                    }
                }
                Aggregation::TrimmedMean if n >= 3 => {
                    column.sort_by(|a, b| a.partial_cmp(b).expect("finite forecasts"));
                    mean(&column[1..n - 1])
                }
                Aggregation::TrimmedMean => mean(&column),
            }
        })
        .collect();
    Ok(out)
}

fn mean<T: Real>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::from_count(xs.len())
}

/// One member's forecast for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution<T> {
    pub run: usize,
    pub pool: usize,
    pub forecast: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesForecast<T> {
    pub id: String,
    pub contributors: Vec<Contribution<T>>,
    pub aggregate: Vec<T>,
}

/// Per-series contributions and their combination, in collection order.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet<T> {
    pub series: Vec<SeriesForecast<T>>,
}

impl<T: Real> ForecastSet<T> {
    pub fn get(&self, id: &str) -> Option<&SeriesForecast<T>> {
        self.series.iter().find(|s| s.id == id)
    }

    /// Aggregates as monthly series starting at `start`.
    pub fn to_series(&self, start: YearMonth) -> Result<Vec<MonthlySeries<T>>> {
        self.series
            .iter()
            .map(|s| MonthlySeries::new(s.id.clone(), start, s.aggregate.clone()))
            .collect()
    }

    /// Writes aggregates as `id,year,month,forecast` rows.
    pub fn write_csv<W: Write>(&self, start: YearMonth, writer: W) -> Result<()> {
        dataset::write_csv(&self.to_series(start)?, "forecast", writer)
    }

    /// Writes every contribution as `id,year,month,forecast,run,pool` rows,
    /// grouped by series and then in (run, pool) order.
    pub fn write_members_csv<W: Write>(&self, start: YearMonth, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "year", "month", "forecast", "run", "pool"])?;
        for s in &self.series {
            for c in &s.contributors {
                for (h, v) in c.forecast.iter().enumerate() {
                    let at = start.offset(h as i64);
                    w.write_record([
                        s.id.clone(),
                        at.year.to_string(),
                        at.month.to_string(),
                        v.as_f64().to_string(),
                        c.run.to_string(),
                        c.pool.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn aggregates(&self) -> BTreeMap<String, Vec<T>> {
        self.series.iter().map(|s| (s.id.clone(), s.aggregate.clone())).collect()
    }
}

/// A trained pool member and the series it did not see.
#[derive(Debug, Clone, PartialEq)]
pub struct Member<T> {
    pub run: usize,
    pub pool: usize,
    pub seed: u64,
    pub held_out: Vec<String>,
    pub model: TrainedModel<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutcome<T> {
    pub forecasts: ForecastSet<T>,
    pub partitions: Vec<Partition>,
    /// Members in (run, pool) order.
    pub members: Vec<Member<T>>,
}

struct Job<T> {
    run: usize,
    pool: usize,
    seed: u64,
    held_out: Vec<String>,
    training: SeriesCollection<T>,
}

/// Trains all `R·K` members, concurrently when more than one thread is
/// available. The output depends only on the inputs and `master_seed`.
pub fn run_ensemble<T: Real>(collection: &SeriesCollection<T>, cfg: &EnsembleConfig) -> Result<EnsembleOutcome<T>> {
    cfg.validate()?;
    let ids = collection.ids();
    let partitions = (1..=cfg.runs)
        .map(|r| partition_series(&ids, cfg.pool_size, partition_seed(cfg.master_seed, r)))
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::with_capacity(cfg.runs * cfg.pool_size);
    for (r, partition) in partitions.iter().enumerate() {
        for (k, held_out) in partition.subsets.iter().enumerate() {
            let excluded: HashSet<&str> = held_out.iter().map(String::as_str).collect();
            let keep: HashSet<String> = ids.iter().filter(|id| !excluded.contains(id.as_str())).cloned().collect();
            jobs.push(Job {
                run: r + 1,
                pool: k + 1,
                seed: member_seed(cfg.master_seed, r + 1, k + 1),
                held_out: held_out.clone(),
                training: collection.subset(&keep)?,
            });
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let trained: Vec<Result<TrainedModel<T>>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let member_cfg = TrainConfig {
                    seed: job.seed,
                    ..cfg.base.clone()
                };
                trainer::train(&job.training, &member_cfg).map_err(|e| Error::Member {
                    run: job.run,
                    pool: job.pool,
                    source: Box::new(e),
                })
            })
            .collect()
    });

    let window = cfg.base.snapshot_window;
    let mut contributions: BTreeMap<&str, Vec<Contribution<T>>> = BTreeMap::new();
    let mut members = Vec::with_capacity(jobs.len());
    for (job, model) in jobs.into_iter().zip(trained) {
        let model = model?;
        for s in &job.training.series {
            let forecast = trainer::snapshot_average(&model.snapshots[&s.id], window)?;
            let id = ids.iter().find(|id| **id == s.id).expect("training series come from the collection");
            contributions.entry(id.as_str()).or_default().push(Contribution {
                run: job.run,
                pool: job.pool,
                forecast,
            });
        }
        members.push(Member {
            run: job.run,
            pool: job.pool,
            seed: job.seed,
            held_out: job.held_out,
            model,
        });
    }

    let series = ids
        .iter()
        .map(|id| {
            let contributors = contributions.remove(id.as_str()).unwrap_or_default();
            let forecasts: Vec<Vec<T>> = contributors.iter().map(|c| c.forecast.clone()).collect();
            let aggregate = aggregate(&forecasts, cfg.aggregation)?;
            Ok(SeriesForecast {
                id: id.clone(),
                contributors,
                aggregate,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EnsembleOutcome {
        forecasts: ForecastSet { series },
        partitions,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthesize;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("C{i:02}")).collect()
    }

    fn assert_disjoint_cover(p: &Partition, ids: &[String]) {
        let mut seen = HashSet::new();
        for s in &p.subsets {
            for id in s {
                assert!(seen.insert(id.clone()), "{id} appears twice");
            }
        }
        assert_eq!(seen, ids.iter().cloned().collect());
    }

    #[test]
    fn balanced_partition_of_35_into_4() {
        let ids = ids(35);
        let p = partition_series(&ids, 4, 9).unwrap();
        let mut sizes: Vec<usize> = p.subsets.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![8, 9, 9, 9]);
        assert_disjoint_cover(&p, &ids);
        assert_eq!(p, partition_series(&ids, 4, 9).unwrap());
        assert_ne!(p, partition_series(&ids, 4, 10).unwrap());
    }

    #[test]
    fn forced_singletons_and_too_few_series() {
        let ids = ids(4);
        let p = partition_series(&ids, 4, 1).unwrap();
        assert!(p.subsets.iter().all(|s| s.len() == 1));
        assert_disjoint_cover(&p, &ids);
        assert!(partition_series(&ids[..3], 4, 1).is_err());
    }

    #[test]
    fn aggregation_examples() {
        let c = vec![vec![100.0; 12], vec![200.0; 12], vec![300.0; 12]];
        assert_eq!(aggregate(&c, Aggregation::Mean).unwrap(), vec![200.0; 12]);
        assert_eq!(aggregate(&c[..1], Aggregation::Mean).unwrap(), vec![100.0; 12]);
        let mut reversed = c.clone();
        reversed.reverse();
        assert_eq!(aggregate(&reversed, Aggregation::Mean).unwrap(), vec![200.0; 12]);
        let skewed = vec![vec![1.0], vec![2.0], vec![3.0], vec![100.0]];
        assert_eq!(aggregate(&skewed, Aggregation::Median).unwrap(), vec![2.5]);
        assert_eq!(aggregate(&skewed, Aggregation::TrimmedMean).unwrap(), vec![2.5]);
        assert!(aggregate::<f64>(&[], Aggregation::Mean).is_err());
        assert!(aggregate(&[vec![1.0], vec![1.0, 2.0]], Aggregation::Mean).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EnsembleConfig { pool_size: 1, ..EnsembleConfig::default() }.validate().is_err());
        assert!(EnsembleConfig { runs: 0, ..EnsembleConfig::default() }.validate().is_err());
        assert!(EnsembleConfig::default().validate().is_ok());
        assert_eq!(EnsembleConfig::default().contributors_per_series(), 9);
    }

    #[test]
    fn member_seeds_are_distinct() {
        let mut seen = HashSet::new();
        for r in 1..=5 {
            seen.insert(partition_seed(3, r));
            for k in 1..=6 {
                assert!(seen.insert(member_seed(3, r, k)));
            }
        }
    }

    fn tiny(pool_size: usize, runs: usize, threads: usize) -> EnsembleConfig {
        EnsembleConfig {
            pool_size,
            runs,
            base: TrainConfig {
                epochs: 2,
                snapshot_window: 1,
                state_size: 3,
                ..TrainConfig::default()
            },
            master_seed: 17,
            threads: Some(threads),
            aggregation: Aggregation::Mean,
        }
    }

    #[test]
    fn topology_of_a_small_ensemble() {
        let c = synthesize(6, 3, 2).unwrap();
        let out = run_ensemble(&c, &tiny(3, 2, 1)).unwrap();
        assert_eq!(out.members.len(), 6);
        for s in &out.forecasts.series {
            assert_eq!(s.contributors.len(), 4);
            let tags: HashSet<(usize, usize)> = s.contributors.iter().map(|c| (c.run, c.pool)).collect();
            assert_eq!(tags.len(), 4);
            for c in &s.contributors {
                let member = &out.members[(c.run - 1) * 3 + (c.pool - 1)];
                assert!(!member.held_out.contains(&s.id));
                assert!(!member.model.ets.contains_key(member.held_out[0].as_str()));
            }
            let forecasts: Vec<Vec<f64>> = s.contributors.iter().map(|c| c.forecast.clone()).collect();
            assert_eq!(s.aggregate, aggregate(&forecasts, Aggregation::Mean).unwrap());
        }
    }

    #[test]
    fn csv_outputs_list_aggregates_and_members() {
        let c = synthesize(4, 3, 5).unwrap();
        let out = run_ensemble(&c, &tiny(2, 2, 1)).unwrap();
        let start = YearMonth::new(2015, 1).unwrap();
        let mut buf = Vec::new();
        out.forecasts.write_csv(start, &mut buf).unwrap();
        let back = dataset::read_csv::<f64, _>(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 4);
        for s in &back.series {
            assert_eq!(s.start, start);
            assert_eq!(s.values, out.forecasts.get(&s.id).unwrap().aggregate);
        }
        let mut buf = Vec::new();
        out.forecasts.write_members_csv(start, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,year,month,forecast,run,pool\n"));
        assert_eq!(text.lines().count(), 1 + 4 * 2 * 12);
    }

    #[test]
    fn two_pools_one_run_gives_one_contributor() {
        let c = synthesize(4, 3, 5).unwrap();
        let out = run_ensemble(&c, &tiny(2, 1, 1)).unwrap();
        for s in &out.forecasts.series {
            assert_eq!(s.contributors.len(), 1);
            assert_eq!(s.aggregate, s.contributors[0].forecast);
        }
    }

    #[test]
    fn output_does_not_depend_on_thread_count() {
        let c = synthesize(5, 3, 8).unwrap();
        let a = run_ensemble(&c, &tiny(2, 2, 1)).unwrap();
        let b = run_ensemble(&c, &tiny(2, 2, 3)).unwrap();
        assert_eq!(a, b);
    }
}
