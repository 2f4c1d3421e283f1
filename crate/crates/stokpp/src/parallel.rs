//! Thread-pool execution of independent paths.
//!
//! Work is handed out in chunks; each chunk is collected in stream order
//! and folded before the next one starts, so results do not depend on the
//! number of workers or on completion order.

use rayon::prelude::*;
use stokpp_core::ensemble::{self, Aggregator, EnsembleSummary, ExperimentConfig, WCovTable};

use crate::error::{Error, Result};

pub struct Runner {
    pool: rayon::ThreadPool,
}

impl Runner {
    /// `None` uses every available core.
    pub fn new(jobs: Option<usize>) -> Result<Self> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(j) = jobs {
            builder = builder.num_threads(j.max(1));
        }
        let pool = builder.build().map_err(|e| Error::Pool(e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn serial() -> Self {
        Self::new(Some(1)).expect("single-thread pool")
    }

    pub fn jobs(&self) -> usize {
        self.pool.current_num_threads()
    }

    fn chunk(&self) -> usize {
        2 * self.jobs()
    }

    /// `f(0), …, f(n−1)` evaluated on the pool, returned in index order.
    pub fn map_streams<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync,
    {
        self.pool
            .install(|| (0..n as u64).into_par_iter().map(&f).collect())
    }

    pub fn run_experiment(&self, config: &ExperimentConfig) -> Result<EnsembleSummary> {
        let mut agg = Aggregator::new(config)?;
        let ids: Vec<u64> = (0..config.paths as u64).collect();
        for chunk in ids.chunks(self.chunk()) {
            let records = self.pool.install(|| {
                chunk
                    .par_iter()
                    .map(|&id| ensemble::run_path(config, id))
                    .collect::<Vec<_>>()
            });
            for r in records {
                agg.absorb(r?)?;
            }
        }
        if let (ensemble::Route::Normalized, Some(spec)) = (config.route, config.control) {
            let c = self.map_streams(spec.paths, |k| ensemble::control_run(config, k as usize));
            agg.set_control(c.into_iter().collect::<std::result::Result<Vec<_>, _>>()?);
        }
        Ok(agg.finish()?)
    }

    /// Parallel counterpart of [`ensemble::estimate_w_covariance`]; also
    /// returns the first-pass summary.
    pub fn estimate_w_covariance(
        &self,
        config: &ExperimentConfig,
        lags: &[f64],
        tail_window: (f64, f64),
    ) -> Result<(EnsembleSummary, WCovTable)> {
        let summary = self.run_experiment(config)?;
        let track = &summary.tracks[0];
        let moments = self.pool.install(|| {
            summary
                .survivors
                .par_iter()
                .map(|&id| ensemble::w_path_moments(config, id, track, lags, tail_window))
                .collect::<std::result::Result<Vec<_>, _>>()
        })?;
        let table = ensemble::combine_w_moments(config, lags, &moments)?;
        Ok((summary, table))
    }
}
