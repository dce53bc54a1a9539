//! Experiment drivers. Each writes its CSV outputs under `io.out_dir` and
//! returns the one-line summary printed on stdout.

use std::fs::File;
use std::path::PathBuf;

use anyhow::Context;

use pco::concentration::{calibrated_moments, tail_check, CalibrationSettings};
use pco::io::{self, CsvTable, Metadata};
use pco::penalty::{default_moments, MomentsEntry, MomentsTable};
use pco::regression::{self, RegressionMc, RegressionSample, QUADRATURE_FACTOR};
use pco::risk::{rate_fit, rate_len, stabilized_oracle_ratios, McSettings, TAIL_LEVELS};
use pco::rng::{experiment, mix_seed, stream_rng};
use pco::selection::pco_estimate;
use pco::sequence::{len_for_top_level, observe, top_level_for_len};
use pco::{argmin_overall, NoiseMoments, NoiseSpec, PcoError, PenaltySpec};

use crate::config::{Command, ConfigError, ExperimentConfig};

/// Shared state of one run: the config, its metadata line and output directory.
pub struct Run {
    pub config: ExperimentConfig,
    meta: Metadata,
    out_dir: PathBuf,
}

impl Run {
    pub fn new(config: ExperimentConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let meta = Metadata::new()
            .with("config_hash", config.hash())
            .with("seed", config.seed);
        let out_dir = config.io.out_dir.clone();
        Ok(Self { config, meta, out_dir })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write(&self, name: &str, table: &CsvTable) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.path(name);
        io::write_table_file(&path, table, &self.meta).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn moments_table(&self) -> anyhow::Result<Option<MomentsTable>> {
        match &self.config.penalty.moments_file {
            Some(p) => Ok(Some(
                io::read_moments_file(p).with_context(|| format!("reading moments file {}", p.display()))?,
            )),
            None => Ok(None),
        }
    }

    fn moments(&self, p: f64) -> anyhow::Result<NoiseMoments> {
        let noise = self.config.noise_kind()?;
        default_moments(p, &noise, self.moments_table()?.as_ref())
            .context("run `pco calibrate` and pass the table with --moments-file")
    }

    fn penalty_spec(&self, n: usize) -> anyhow::Result<PenaltySpec> {
        let p = self.config.penalty.p;
        let mut spec = PenaltySpec::new(p, n, self.moments(p)?, self.moments(2.0)?)?;
        self.apply_overrides(&mut spec);
        Ok(spec)
    }

    fn apply_overrides(&self, spec: &mut PenaltySpec) {
        let c = &self.config.penalty;
        if let Some(v) = c.k_i {
            spec.constants.k_i = v;
        }
        if let Some(v) = c.k_s {
            spec.constants.k_s = v;
        }
        if let Some(v) = c.a {
            spec.constants.a = v;
        }
    }

    pub fn execute(&self) -> anyhow::Result<String> {
        match self.config.command {
            Command::Simulate => self.simulate(),
            Command::Estimate => self.estimate(),
            Command::Rates => self.rates(),
            Command::Concentration => self.concentration(),
            Command::Regress => self.regress(),
            Command::Calibrate => self.calibrate(),
        }
    }

    fn simulate(&self) -> anyhow::Result<String> {
        let c = &self.config;
        let eps = c.noise.epsilon;
        let top = match c.signal.top_level {
            Some(j) => j,
            None => top_level_for_len(rate_len(c.signal.radius, eps)).expect("power of two"),
        };
        let n = len_for_top_level(top);
        let ball = c.ball()?;
        let gen_seed = c.signal.seed.unwrap_or(c.seed);
        let theta = c.signal_kind()?.generate(&ball, top + TAIL_LEVELS, gen_seed)?;
        let obs = observe(&theta, eps, &NoiseSpec::new(c.noise_kind()?, c.seed), n)?;
        self.write("signal.csv", &io::signal_table(theta.values(), "theta"))?;
        let obs_meta = self.meta.clone().with("epsilon", obs.epsilon());
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.path("observations.csv");
        io::write_table_file(&path, &io::signal_table(obs.y(), "y"), &obs_meta)?;
        Ok(format!(
            "simulate: kind={} N={n} J={top} epsilon={eps} signal_len={} -> {}",
            c.signal.kind,
            theta.len(),
            path.display()
        ))
    }

    fn estimate(&self) -> anyhow::Result<String> {
        let c = &self.config;
        let input = c
            .io
            .observations
            .as_ref()
            .ok_or_else(|| ConfigError("io.observations: estimate needs an observation file".into()))?;
        let obs = io::read_observations(File::open(input).with_context(|| format!("opening {}", input.display()))?)
            .with_context(|| format!("reading {}", input.display()))?;
        let spec = self.penalty_spec(obs.len())?;
        let w = c.weights()?;
        let strategies = c.strategies()?;

        let mut crit = CsvTable::new(&["strategy", "crit", "cardinality", "cut_level"]);
        for s in &strategies {
            let r = argmin_overall(&obs, &spec, &w, std::slice::from_ref(s))?;
            let cut = r.cut_level.map(|l| l.to_string()).unwrap_or_default();
            crit.push([s.name(), r.crit_value.to_string(), r.cardinality().to_string(), cut]);
        }
        let best = argmin_overall(&obs, &spec, &w, &strategies)?;
        let est = pco_estimate(&obs, &best)?;
        self.write("crit.csv", &crit)?;
        self.write("model.csv", &io::model_table(&best.model))?;
        self.write("estimate.csv", &io::signal_table(est.values(), "theta"))?;
        Ok(format!(
            "estimate: N={} strategy={} crit={} cardinality={} -> {}",
            obs.len(),
            best.strategy,
            best.crit_value,
            best.cardinality(),
            self.out_dir.display()
        ))
    }

    fn rates(&self) -> anyhow::Result<String> {
        let c = &self.config;
        let p = c.penalty.p;
        let ball = c.ball()?;
        let settings = McSettings {
            noise: c.noise_kind()?,
            strategies: c.strategies()?,
            replicates: c.sweep.replicates,
            seed: c.seed,
        };
        let spec = self.penalty_spec(2)?;
        let fit = rate_fit(&ball, p, &c.sweep.epsilons, &spec, c.signal_kind()?, &settings)?;
        let stable = stabilized_oracle_ratios(&fit, p);
        let mut t = CsvTable::new(&[
            "epsilon",
            "N",
            "mc_risk",
            "stderr",
            "oracle_risk",
            "oracle_ratio",
            "stabilized_ratio",
            "mean_cardinality",
        ]);
        for ((r, n), s) in fit.reports.iter().zip(&fit.ns).zip(&stable) {
            t.push([
                r.epsilon.to_string(),
                n.to_string(),
                r.mc_risk.to_string(),
                r.mc_stderr.to_string(),
                r.oracle_risk.to_string(),
                r.oracle_ratio.to_string(),
                s.to_string(),
                r.mean_cardinality.to_string(),
            ]);
        }
        self.write("rates.csv", &t)?;
        let mut summary = CsvTable::new(&["key", "value"]);
        summary.push(["slope".to_string(), fit.slope.to_string()]);
        summary.push(["intercept".to_string(), fit.intercept.to_string()]);
        summary.push(["theory_exponent".to_string(), fit.theory.to_string()]);
        summary.push(["log_exponent".to_string(), fit.log_exponent.to_string()]);
        summary.push(["regime".to_string(), fit.regime.name().to_string()]);
        self.write("rates_summary.csv", &summary)?;
        Ok(format!(
            "rates: regime={} slope={:.4} theory={:.4} log_exponent={:.4} points={}",
            fit.regime.name(),
            fit.slope,
            fit.theory,
            fit.log_exponent,
            fit.epsilons.len()
        ))
    }

    fn concentration(&self) -> anyhow::Result<String> {
        let c = &self.config;
        let p = c.penalty.p;
        let noise = c.noise_kind()?;
        let moments = self.moments(p)?;
        let mut t = CsvTable::new(&["D", "x", "exceedance", "bound", "pass"]);
        let mut all = true;
        for &d in &c.concentration.block_sizes {
            let rep = tail_check(
                &noise,
                p,
                d,
                &moments,
                &c.concentration.x,
                c.concentration.replicates,
                mix_seed(c.seed, d as u64),
            )?;
            all &= rep.pass;
            for (i, x) in rep.x_grid.iter().enumerate() {
                t.push([
                    d.to_string(),
                    x.to_string(),
                    rep.empirical_exceedance[i].to_string(),
                    rep.bound[i].to_string(),
                    rep.passes_at(i).to_string(),
                ]);
            }
        }
        let path = self.write("concentration.csv", &t)?;
        Ok(format!(
            "concentration: distribution={} p={p} kappa={} all_pass={all} -> {}",
            noise.label(),
            moments.kappa_p,
            path.display()
        ))
    }

    fn regress(&self) -> anyhow::Result<String> {
        let c = &self.config;
        let r = &c.regression;
        let p = c.penalty.p;
        let basis = c.basis()?;
        let noise = c.noise_kind()?;
        let strategies = c.strategies()?;
        let sample = match &r.input {
            Some(path) => {
                let x = io::read_responses(File::open(path).with_context(|| format!("opening {}", path.display()))?)
                    .with_context(|| format!("reading {}", path.display()))?;
                RegressionSample::new(x, r.sigma)?
            }
            None => {
                let mut rng = stream_rng(c.seed, experiment::REGRESSION, 0);
                RegressionSample::simulate(&c.function()?, r.n, r.sigma, noise, &mut rng)?
            }
        };
        let n = sample.n();
        let top = r.top_level.unwrap_or(n.trailing_zeros() as i32 - 1);
        let nn = len_for_top_level(top);
        let mut spec = regression::regression_spec(p, nn, self.moments(p)?, self.moments(2.0)?)?;
        self.apply_overrides(&mut spec);
        let (est, sel) = regression::pco_regress(&sample, basis, top, &spec, &strategies)?;
        let grid = QUADRATURE_FACTOR * nn;
        let f_hat = regression::reconstruct(&est, basis, grid)?;
        let mut t = CsvTable::new(&["t", "fhat"]);
        for (g, v) in f_hat.iter().enumerate() {
            t.push([(g as f64 / grid as f64).to_string(), v.to_string()]);
        }
        self.write("fhat.csv", &t)?;
        self.write("coefficients.csv", &io::signal_table(est.values(), "theta"))?;

        let mut risk = CsvTable::new(&["key", "value"]);
        risk.push(["n".to_string(), n.to_string()]);
        risk.push(["top_level".to_string(), top.to_string()]);
        risk.push(["epsilon".to_string(), sample.epsilon().to_string()]);
        risk.push(["strategy".to_string(), sel.strategy.name()]);
        risk.push(["cardinality".to_string(), sel.cardinality().to_string()]);
        let mut summary = format!(
            "regress: n={n} J={top} strategy={} cardinality={}",
            sel.strategy,
            sel.cardinality()
        );
        if r.input.is_none() {
            let f = c.function()?;
            let single = regression::lp_function_risk(&f_hat, &f, p)?;
            let mc = RegressionMc {
                function: f,
                n,
                sigma: r.sigma,
                noise,
                basis,
                top: Some(top),
                strategies,
                replicates: c.sweep.replicates,
                seed: c.seed,
            };
            let (mean, se) = regression::mc_function_risk(&mc, &spec)?;
            risk.push(["lp_risk".to_string(), single.lp_pow.to_string()]);
            risk.push(["besov_surrogate".to_string(), single.besov_surrogate.to_string()]);
            risk.push(["mc_risk".to_string(), mean.to_string()]);
            risk.push(["mc_stderr".to_string(), se.to_string()]);
            risk.push(["replicates".to_string(), c.sweep.replicates.to_string()]);
            summary.push_str(&format!(" function={} mc_risk={mean:.6e} stderr={se:.2e}", f.name()));
        }
        self.write("regress_risk.csv", &risk)?;
        Ok(summary)
    }

    fn calibrate(&self) -> anyhow::Result<String> {
        let c = &self.config;
        let noise = c.noise_kind()?;
        let settings = CalibrationSettings {
            d_grid: c.calibrate.block_sizes.clone(),
            x_grid: c.calibrate.x.clone(),
            replicates: c.calibrate.replicates,
            confidence: c.calibrate.confidence,
            seed: c.seed,
            ..CalibrationSettings::default()
        };
        let mut table = self.moments_table()?.unwrap_or_default();
        let mut ps = vec![c.penalty.p];
        if c.penalty.p != 2.0 {
            ps.push(2.0);
        }
        let mut parts = Vec::new();
        for p in ps {
            let m = calibrated_moments(&noise, p, &settings)?;
            parts.push(format!("p={p} c1={} c2={} kappa={}", m.c1, m.c2, m.kappa_p));
            table.insert(MomentsEntry {
                distribution: noise.label(),
                moments: m,
                calibration_date: c.calibrate.date.clone(),
            });
        }
        let path = self.write("moments.csv", &io::moments_table(&table))?;
        Ok(format!(
            "calibrate: distribution={} {} -> {}",
            noise.label(),
            parts.join(" "),
            path.display()
        ))
    }
}

/// Exit status for a failed run: 2 for configuration problems, 3 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<PcoError>() {
        Some(PcoError::Config(_) | PcoError::Uncalibrated { .. } | PcoError::Unsupported(_)) => 2,
        _ => 3,
    }
}
