//! One pipeline per subcommand.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use mixedgibbs_core::bounds::{assemble_tv_bound, optimize_rate, rho_a, RateReport, TvBound};
use mixedgibbs_core::coupling::{
    drift_probes, estimate_contraction, estimate_drift, geometric_decay_rate, wasserstein_curve, ProbeKind,
};
use mixedgibbs_core::diagnostics::{batch_means_se, mean, stationarity_z};
use mixedgibbs_core::forge::{generate, scale_sequence, write_sidecar};
use mixedgibbs_core::kernel::trajectory::{run_chain, write_trajectory_csv, BinaryTrajectoryWriter, TrajectoryRecord};
use mixedgibbs_core::model::{check_assumptions, drift_center, read_csv_path, write_csv_path, ChainState, DerivedDesign, Hyperparameters, Model};
use mixedgibbs_core::rng::{mix, stream};
use mixedgibbs_core::study::{run_study, write_rows_csv, StudyRow};
use serde::Serialize;

use crate::args::Start;
use crate::config::*;
use crate::svg::{Chart, Series};
use crate::{Failure, Output};

fn load_model(data: &Path, hyper: Hyperparameters) -> Result<Model, Failure> {
    if !data.exists() {
        return Err(Failure::MissingInput(data.display().to_string()));
    }
    let d = read_csv_path(data).map_err(|e| match e {
        mixedgibbs_core::Error::Io(io) => Failure::from_io(io, data),
        other => other.into(),
    })?;
    Ok(Model::new(d, hyper)?)
}

fn start_state(model: &Model, start: Start) -> ChainState {
    match start {
        Start::Zero => model.zero_state(),
        Start::Center => drift_center(&model.design),
    }
}

fn csv_writer(out: &Output, name: &str) -> Result<csv::Writer<BufWriter<File>>, Failure> {
    let p = out.path(name);
    let f = File::create(&p).map_err(|e| Failure::from_io(e, &p))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn csv_err(e: csv::Error) -> Failure {
    Failure::Other {
        kind: "csv",
        message: e.to_string(),
    }
}

pub fn gen(r: &GenRun, out: &Output) -> Result<(), Failure> {
    match &r.q_list {
        None => {
            let d = generate(&r.gen)?;
            write_csv_path(&d, out.path("data.csv"))?;
            write_sidecar(&r.gen, &d, out.path("data.json"))?;
        }
        Some(list) => {
            for m in scale_sequence(&r.gen, list)? {
                write_csv_path(&m.data, out.path(&format!("data_q{}.csv", m.q)))?;
                write_sidecar(&m.config, &m.data, out.path(&format!("data_q{}.json", m.q)))?;
            }
        }
    }
    Ok(())
}

pub fn check(r: &CheckRun, out: &Output) -> Result<(), Failure> {
    let model = load_model(&r.data, Hyperparameters::default())?;
    let design = DerivedDesign::build(&model.data);
    let report = check_assumptions(&design, r.delta, &r.thresholds)?;
    #[derive(Serialize)]
    struct Report<'a> {
        q: usize,
        p: usize,
        n: usize,
        r_bar: f64,
        all_pass: bool,
        report: &'a mixedgibbs_core::AssumptionReport,
    }
    out.write_json(
        "assumptions.json",
        &Report {
            q: design.q,
            p: design.p,
            n: design.n,
            r_bar: design.r_bar,
            all_pass: report.pass_flags.all(),
            report: &report,
        },
    )
}

#[derive(Serialize)]
struct Moment {
    mean: f64,
    /// Absent for traces too short to batch.
    batch_se: Option<f64>,
}

fn moment(x: &[f64]) -> Moment {
    Moment {
        mean: mean(x),
        batch_se: (x.len() >= 4).then(|| batch_means_se(x)),
    }
}

pub fn sample(r: &SampleRun, out: &Output) -> Result<(), Failure> {
    let model = load_model(&r.data, r.hyper)?;
    let start = start_state(&model, r.start);
    let mut rng = stream(r.seed, 0);
    let mut records: Vec<TrajectoryRecord> = Vec::with_capacity(r.iters);
    let mut bin = if r.binary {
        let p = out.path("trajectory.bin");
        let f = File::create(&p).map_err(|e| Failure::from_io(e, &p))?;
        Some(BinaryTrajectoryWriter::new(BufWriter::new(f), model.p(), model.data.group_sizes())?)
    } else {
        None
    };
    let last = run_chain(&model, &start, r.iters, &mut rng, |n, s| {
        records.push(TrajectoryRecord {
            iter: n,
            eta0: s.state.eta0,
            lambda: s.precisions.lambda,
            tau: s.precisions.tau,
            v: model.drift_v(&s.state),
        });
        if let Some(w) = bin.as_mut() {
            w.push(&s.state)?;
        }
        Ok(())
    })?;
    if let Some(w) = bin {
        w.finish()?;
    }
    let p = out.path("trajectory.csv");
    write_trajectory_csv(&records, BufWriter::new(File::create(&p).map_err(|e| Failure::from_io(e, &p))?))?;

    let col = |f: fn(&TrajectoryRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let (eta0, lam, tau, v) = (col(|r| r.eta0), col(|r| r.lambda), col(|r| r.tau), col(|r| r.v));
    #[derive(Serialize)]
    struct Summary {
        iters: usize,
        eta0: Moment,
        lambda: Moment,
        tau: Moment,
        v: Moment,
        /// Geweke z of the second half of the V trace.
        stationarity_z: f64,
        final_state: ChainState,
    }
    let half = &v[v.len() / 2..];
    out.write_json(
        "summary.json",
        &Summary {
            iters: r.iters,
            eta0: moment(&eta0),
            lambda: moment(&lam),
            tau: moment(&tau),
            v: moment(&v),
            stationarity_z: stationarity_z(half),
            final_state: last,
        },
    )?;
    let pts = |y: &[f64]| y.iter().enumerate().map(|(k, &v)| ((k + 1) as f64, v)).collect();
    out.write_svg(
        "trajectory.svg",
        &Chart {
            title: "Gibbs trajectory",
            x_label: "iteration",
            y_label: "value",
            log_y: false,
            series: vec![Series { name: "V", points: pts(&v) }, Series { name: "eta0", points: pts(&eta0) }],
        },
    )
}

pub fn drift(r: &DriftRun, out: &Output) -> Result<(), Failure> {
    let model = load_model(&r.data, r.hyper)?;
    let probes = drift_probes(&model, r.probes, mix(r.seed, 1));
    let states: Vec<ChainState> = probes.iter().map(|(_, s)| s.clone()).collect();
    let est = estimate_drift(&model, &states, r.reps, mix(r.seed, 2))?;

    let mut w = csv_writer(out, "drift_probes.csv")?;
    w.write_record(["kind", "v", "mean_next_v", "sd_next_v", "upper"]).map_err(csv_err)?;
    for ((kind, _), rec) in probes.iter().zip(&est.probes) {
        let k = match kind {
            ProbeKind::All => "all",
            ProbeKind::RandomEffects => "random_effects",
            ProbeKind::Regression => "regression",
        };
        w.write_record([k.to_string(), rec.v.to_string(), rec.mean_next_v.to_string(), rec.sd_next_v.to_string(), rec.upper.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;

    #[derive(Serialize)]
    struct Report {
        q: usize,
        zeta_hat: f64,
        l_hat: f64,
        probe_count: usize,
        fit_residual_max: f64,
    }
    out.write_json(
        "drift.json",
        &Report {
            q: model.q(),
            zeta_hat: est.zeta_hat,
            l_hat: est.l_hat,
            probe_count: est.probe_count,
            fit_residual_max: est.fit_residual_max,
        },
    )?;
    let mut obs: Vec<(f64, f64)> = est.probes.iter().map(|p| (p.v, p.upper)).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let line = obs.iter().map(|&(v, _)| (v, est.zeta_hat * v + est.l_hat)).collect();
    out.write_svg(
        "drift.svg",
        &Chart {
            title: "Drift envelope",
            x_label: "V(eta)",
            y_label: "E[V(next)] upper CI",
            log_y: false,
            series: vec![Series { name: "probes", points: obs }, Series { name: "zeta V + L", points: line }],
        },
    )
}

pub fn contract(r: &ContractRun, out: &Output) -> Result<(), Failure> {
    let model = load_model(&r.data, r.hyper)?;
    let est = estimate_contraction(&model, &r.coupling)?;
    let mut w = csv_writer(out, "pairs.csv")?;
    w.write_record(["inside", "v_sum", "distance", "mean_displacement", "mean_ratio"]).map_err(csv_err)?;
    for p in &est.pairs {
        w.write_record([p.inside.to_string(), p.v_sum.to_string(), p.distance.to_string(), p.mean_displacement.to_string(), p.mean_ratio.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Report {
        q: usize,
        gamma_in: Option<f64>,
        gamma_out: Option<f64>,
        n_in: usize,
        n_out: usize,
        ci_halfwidth_in: Option<f64>,
        ci_halfwidth_out: Option<f64>,
        xi: f64,
        pool_stationarity_z: f64,
    }
    out.write_json(
        "contraction.json",
        &Report {
            q: model.q(),
            gamma_in: est.gamma_in,
            gamma_out: est.gamma_out,
            n_in: est.n_in,
            n_out: est.n_out,
            ci_halfwidth_in: est.ci_halfwidth_in,
            ci_halfwidth_out: est.ci_halfwidth_out,
            xi: est.xi,
            pool_stationarity_z: est.pool_stationarity_z,
        },
    )?;
    let region = |inside: bool| {
        let mut v: Vec<(f64, f64)> = est.pairs.iter().filter(|p| p.inside == inside).map(|p| (p.v_sum.log10(), p.mean_ratio)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    out.write_svg(
        "contraction.svg",
        &Chart {
            title: "Chord ratios under shared noise",
            x_label: "log10(V + V')",
            y_label: "mean ratio",
            log_y: false,
            series: vec![Series { name: "inside", points: region(true) }, Series { name: "outside", points: region(false) }],
        },
    )
}

pub fn wcurve(r: &WcurveRun, out: &Output) -> Result<(), Failure> {
    let model = load_model(&r.data, r.hyper)?;
    let start = start_state(&model, r.start);
    let curve = wasserstein_curve(&model, &start, r.n_max, r.reps, r.burn_in, r.seed)?;
    let mut w = csv_writer(out, "wcurve.csv")?;
    for p in &curve.points {
        w.serialize(p).map_err(csv_err)?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Report {
        decay_rate: f64,
        partner_stationarity_z: f64,
        partner_stationary: bool,
    }
    out.write_json(
        "wcurve.json",
        &Report {
            decay_rate: geometric_decay_rate(&curve.points),
            partner_stationarity_z: curve.partner_stationarity_z,
            partner_stationary: curve.partner_stationarity_z.abs() < 3.0,
        },
    )?;
    let pts = |f: fn(&mixedgibbs_core::coupling::CurvePoint) -> f64| curve.points.iter().map(|p| (p.n as f64, f(p))).collect();
    out.write_svg(
        "wcurve.svg",
        &Chart {
            title: "Coupled-chain Wasserstein bound",
            x_label: "n",
            y_label: "w_hat",
            log_y: true,
            series: vec![
                Series { name: "w_hat", points: pts(|p| p.w_hat) },
                Series { name: "ci_hi", points: pts(|p| p.ci_hi) },
            ],
        },
    )
}

pub fn rate(r: &RateRun, out: &Output) -> Result<(), Failure> {
    let inputs = r.inputs()?;
    let report = optimize_rate(&inputs)?;
    let tv: Option<TvBound> = match (r.tv, report.a3_holds) {
        (Some(tv), true) => Some(assemble_tv_bound(&report, tv.scale, tv.v_eta, tv.l0, tv.n, tv.q)?),
        _ => None,
    };
    #[derive(Serialize)]
    struct Report<'a> {
        rate: &'a RateReport,
        tv: Option<TvBound>,
    }
    out.write_json("rate.json", &Report { rate: &report, tv })?;
    if report.a3_holds {
        let k = 200;
        let pts = (1..k)
            .map(|i| report.a_lo + (report.a_hi - report.a_lo) * i as f64 / k as f64)
            .map(|a| (a, rho_a(&inputs, a)))
            .collect();
        out.write_svg(
            "rate.svg",
            &Chart {
                title: "rho_a over the admissible interval",
                x_label: "a",
                y_label: "rho_a",
                log_y: false,
                series: vec![Series { name: "rho_a", points: pts }],
            },
        )?;
        Ok(())
    } else {
        Err(Failure::Numerical {
            kind: "a3_failure",
            message: format!("admissible interval is empty: lo = {} ≥ hi = {}", report.a_lo, report.a_hi),
        })
    }
}

pub fn scale(r: &mixedgibbs_core::study::StudyConfig, out: &Output) -> Result<(), Failure> {
    let members = run_study(r)?;
    let rows: Vec<StudyRow> = members.iter().map(|m| m.row.clone()).collect();
    let p = out.path("scale.csv");
    write_rows_csv(&rows, BufWriter::new(File::create(&p).map_err(|e| Failure::from_io(e, &p))?))?;

    #[derive(Serialize)]
    struct Member<'a> {
        row: &'a StudyRow,
        drift_fit_residual_max: f64,
        n_in: usize,
        n_out: usize,
        xi: f64,
        pool_stationarity_z: f64,
        partner_stationarity_z: f64,
        rate: Option<&'a RateReport>,
        rate_error: Option<&'a str>,
    }
    #[derive(Serialize)]
    struct Report<'a> {
        members: Vec<Member<'a>>,
    }
    let report = Report {
        members: members
            .iter()
            .map(|m| Member {
                row: &m.row,
                drift_fit_residual_max: m.drift.fit_residual_max,
                n_in: m.contraction.n_in,
                n_out: m.contraction.n_out,
                xi: m.contraction.xi,
                pool_stationarity_z: m.contraction.pool_stationarity_z,
                partner_stationarity_z: m.curve.partner_stationarity_z,
                rate: m.rate.as_ref(),
                rate_error: m.rate_error.as_deref(),
            })
            .collect(),
    };
    out.write_json("scale.json", &report)?;
    let series = |name, f: fn(&StudyRow) -> Option<f64>| Series {
        name,
        points: rows.iter().filter_map(|r| f(r).map(|v| (r.q as f64, v))).collect(),
    };
    out.write_svg(
        "scale.svg",
        &Chart {
            title: "Scaling study",
            x_label: "q",
            y_label: "estimate",
            log_y: true,
            series: vec![
                series("rho", |r| r.rho),
                series("gamma_in", |r| r.gamma_in),
                series("wdecay", |r| Some(r.wdecay)),
                series("zeta_hat", |r| Some(r.zeta_hat)),
            ],
        },
    )
}
