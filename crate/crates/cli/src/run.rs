//! Dispatch a config to the library and collect a [`ResultRecord`].

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use nardf::finite::{rd_curve_with, SolverOptions};
use nardf::gauss::{
    design_schedule, matching_check, riccati_for_power, riccati_infinite, simulate, RealizationTrace,
    RiccatiOptions, SimulationOptions,
};
use nardf::model::{DistortionSpec, FiniteMarkovSource, StateSpaceModel};
use nardf::nats_to_bits;
use nardf::waterfill::allocate;
use serde_json::{json, Value};

use crate::config::{
    ExperimentConfig, Experiment, FiniteRdfExperiment, GaussRealizeExperiment, Reference, SGrid,
    SimulateExperiment, WaterfillExperiment,
};
use crate::record::{Cell, ResultRecord, Table};

/// Everything a run produces.
pub struct RunOutput {
    pub record: ResultRecord,
    pub trace: Option<RealizationTrace>,
}

/// Runtime settings that do not affect results.
#[derive(Clone, Copy, Debug)]
pub struct RunEnv {
    pub threads: usize,
    pub want_trace: bool,
}

impl Default for RunEnv {
    fn default() -> Self {
        RunEnv {
            threads: 1,
            want_trace: false,
        }
    }
}

pub fn run(config: &ExperimentConfig, env: RunEnv) -> Result<RunOutput> {
    let mut record = ResultRecord::new(config.experiment.name(), &config.hash());
    let mut trace = None;
    match &config.experiment {
        Experiment::Waterfill(w) => run_waterfill(w, &mut record)?,
        Experiment::FiniteRdf(f) => run_finite(f, config.tol, &mut record)?,
        Experiment::GaussRealize(g) => run_gauss(g, config.tol, &mut record)?,
        Experiment::Simulate(s) => trace = run_simulate(s, config, env, &mut record)?,
    }
    Ok(RunOutput { record, trace })
}

fn inline_value(r: &Reference) -> &Value {
    match r {
        Reference::Inline(v) => v,
        Reference::Path(p) => panic!("unresolved reference {p}; configs must come from load_config"),
    }
}

fn model_of(r: &Reference) -> Result<StateSpaceModel> {
    Ok(StateSpaceModel::from_json_value(inline_value(r).clone())?)
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    json!((0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn run_waterfill(w: &WaterfillExperiment, record: &mut ResultRecord) -> Result<()> {
    let grid = w.distortion.values();
    let mut table = Table::new(["distortion", "water_level", "rate_nats", "rate_bits"]);
    let mut last = None;
    for d in &grid {
        let a = allocate(&w.eigenvalues, *d).with_context(|| format!("water-filling at D = {d}"))?;
        let r = a.rate();
        table.push(vec![Cell::from(*d), Cell::from(a.water_level()), Cell::from(r), Cell::from(nats_to_bits(r))]);
        last = Some(a);
    }
    let a = last.expect("nonempty grid");
    if grid.len() == 1 {
        record.scalar("distortion", grid[0]);
        record.scalar("water_level", a.water_level());
        record.scalar("rate_nats", a.rate());
        record.scalar("rate_bits", nats_to_bits(a.rate()));
        record.details = Some(json!({ "eigenvalues": a.eigenvalues(), "deltas": a.deltas() }));
    } else {
        record.scalar("points", grid.len() as f64);
    }
    record.table = Some(table);
    Ok(())
}

fn run_finite(f: &FiniteRdfExperiment, tol: f64, record: &mut ResultRecord) -> Result<()> {
    let source: FiniteMarkovSource = serde_json::from_value(inline_value(&f.source).clone())?;
    let rho: DistortionSpec = serde_json::from_value(
        inline_value(f.distortion.as_ref().context("distortion unresolved")?).clone(),
    )?;
    let SGrid::List(grid) = &f.s_grid else {
        anyhow::bail!("s-grid unresolved; configs must come from load_config");
    };
    let opts = SolverOptions {
        tol,
        max_iter: f.max_iter,
        damping: f.damping,
    };
    let curve = rd_curve_with(&source, &rho, grid, &opts, f.kernel).context("tracing the rate-distortion curve")?;
    let mut table = Table::new([
        "s",
        "rate_nats",
        "distortion",
        "iterations",
        "converged",
        "rate_bits",
        "final_change",
        "parametric_rate_nats",
    ]);
    for sol in &curve {
        let r = &sol.report;
        table.push(vec![
            Cell::from(r.s),
            Cell::from(r.rate),
            Cell::from(r.distortion),
            Cell::from(r.iterations),
            Cell::from(usize::from(r.converged)),
            Cell::from(nats_to_bits(r.rate)),
            Cell::from(r.final_change),
            Cell::from(r.parametric_rate),
        ]);
    }
    record.scalar("points", curve.len() as f64);
    record.scalar("horizon", source.horizon() as f64);
    record.scalar(
        "unconverged_points",
        curve.iter().filter(|s| !s.report.converged).count() as f64,
    );
    record.table = Some(table);
    Ok(())
}

fn run_gauss(g: &GaussRealizeExperiment, tol: f64, record: &mut ResultRecord) -> Result<()> {
    let model = model_of(&g.model)?;
    let ropts = RiccatiOptions {
        tol: tol.max(1e-14),
        max_iter: g.max_iter,
    };
    if !g.steady_state {
        let d = g.distortion_level.context("finite-horizon design needs distortion_level")?;
        let sched = design_schedule(&model, d, g.channel_noise, g.horizon, g.decoder)
            .context("designing the finite-horizon schedule")?;
        let mut table = Table::new(["t", "trace_t", "power", "rate_nats", "rate_bits"]);
        let mut worst: f64 = 0.0;
        for (t, st) in sched.iter().enumerate() {
            let alloc = st.gains.allocation().expect("designed gains carry an allocation");
            let tr = st.distortion_identity();
            worst = worst.max((tr - d).abs());
            table.push(vec![
                Cell::from(t),
                Cell::from(tr),
                Cell::from(st.gains.channel().power),
                Cell::from(alloc.rate()),
                Cell::from(nats_to_bits(alloc.rate())),
            ]);
        }
        record.scalar("distortion", d);
        record.scalar("channel_noise", g.channel_noise);
        record.scalar("horizon", g.horizon as f64);
        record.scalar("max_distortion_identity_error", worst);
        let last = sched.last().expect("horizon >= 1");
        record.details = Some(json!({ "final_sigma": matrix_json(&last.filter.next_sigma) }));
        record.table = Some(table);
        return Ok(());
    }
    let ss = match (g.distortion_level, g.power) {
        (Some(d), _) => riccati_infinite(&model, d, g.channel_noise, &ropts, g.decoder),
        (None, Some(p)) => riccati_for_power(&model, p, g.channel_noise, &ropts, g.decoder),
        (None, None) => anyhow::bail!("distortion_level or power required"),
    }
    .context("solving the stationary realization")?;
    let m = matching_check(&ss);
    let capacity = if m.dim == 1 { m.scalar_capacity } else { m.capacity_sum };
    record.scalar("distortion", ss.distortion);
    record.scalar("channel_noise", ss.q);
    record.scalar("power", ss.power);
    record.scalar("rate_nats", ss.rate);
    record.scalar("rate_bits", nats_to_bits(ss.rate));
    record.scalar("capacity_nats", capacity);
    record.scalar("capacity_bits", nats_to_bits(capacity));
    record.scalar("match_residual", m.match_residual);
    record.scalar("riccati_residual", ss.residual);
    record.scalar("riccati_iterations", ss.iterations as f64);
    record.scalar("distortion_identity", ss.gains.distortion_identity());
    record.details = Some(json!({
        "sigma_inf": matrix_json(&ss.sigma),
        "lambda_inf": matrix_json(&ss.lambda),
        "eigenvalues": ss.eigenvalues(),
        "deltas": ss.deltas(),
        "water_level": ss.alloc.water_level(),
        "encoder": ss.gains.encoder(),
        "decoder": ss.gains.decoder(),
        "component_capacities_nats": m.component_capacities,
        "scalar_capacity_nats": m.scalar_capacity,
        "scalar_gap_nats": m.scalar_gap,
    }));
    Ok(())
}

fn run_simulate(
    s: &SimulateExperiment,
    config: &ExperimentConfig,
    env: RunEnv,
    record: &mut ResultRecord,
) -> Result<Option<RealizationTrace>> {
    let model = model_of(&s.model)?;
    let opts = SimulationOptions {
        design: s.design,
        distortion: s.distortion_level,
        q: s.channel_noise,
        horizon: s.horizon,
        trials: s.trials,
        seed: config.seed,
        threads: env.threads.max(1),
        decoder: s.decoder,
        record_trace: env.want_trace,
        riccati: RiccatiOptions {
            tol: config.tol.max(1e-14),
            max_iter: s.max_iter,
        },
    };
    let result = simulate(&model, &opts).context("running the simulation")?;
    let mut table = Table::new(["trial", "distortion"]);
    for t in &result.trials {
        table.push(vec![Cell::from(t.trial), Cell::from(t.distortion)]);
    }
    table.push(vec![Cell::from("mean"), Cell::from(result.mean_distortion)]);
    record.scalar("target_distortion", result.target_distortion);
    record.scalar("mean_distortion", result.mean_distortion);
    record.scalar("std_error", result.std_error);
    record.scalar("symbols", result.symbols as f64);
    record.scalar("whiteness_bound", result.whiteness_bound);
    for (i, v) in result.decoded_lag1.iter().enumerate() {
        record.scalar(&format!("decoded_lag1_{i}"), *v);
    }
    record.table = Some(table);
    Ok(result.trace)
}

/// CSV of a realization trace. Vector signals of length one keep their
/// plain names; longer ones expand to `name_0, name_1, ...`.
pub fn trace_csv(trace: &RealizationTrace) -> String {
    type Get = fn(&nardf::gauss::TraceStep) -> &Vec<f64>;
    let fields: [(&str, Get); 7] = [
        ("x", |s| &s.x),
        ("y", |s| &s.y),
        ("k", |s| &s.k),
        ("gamma", |s| &s.gamma),
        ("a", |s| &s.a),
        ("b", |s| &s.b),
        ("ytilde", |s| &s.y_tilde),
    ];
    let mut columns = vec!["t".to_string()];
    if let Some(first) = trace.steps.first() {
        for (name, get) in &fields {
            let n = get(first).len();
            if n == 1 {
                columns.push(name.to_string());
            } else {
                columns.extend((0..n).map(|i| format!("{name}_{i}")));
            }
        }
    } else {
        columns.extend(fields.iter().map(|(n, _)| n.to_string()));
    }
    let mut table = Table::new(columns);
    for step in &trace.steps {
        let mut row = vec![Cell::from(step.t)];
        for (_, get) in &fields {
            row.extend(get(step).iter().map(|v| Cell::from(*v)));
        }
        table.push(row);
    }
    table.to_csv()
}
