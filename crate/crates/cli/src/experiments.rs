use std::f64::consts::PI;

use nfbeam::output::{fmt_sig, write_csv, CsvRecord};
use nfbeam::procedures::{random_user, scenario_rng, TrainingRecord};
use nfbeam::*;
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, Kind};
use crate::{CliError, Report};

type Res<T> = Result<T, CliError>;

pub(crate) fn run(cfg: &ExperimentConfig) -> Res<Report> {
    let array = ArrayConfig64::new(cfg.n, cfg.wavelength, cfg.spacing)?;
    match cfg.kind {
        Kind::Beamspace => beamspace(cfg, &array),
        Kind::Widths => widths(cfg, &array),
        Kind::Gaussian => gaussian(cfg, &array),
        Kind::Psp => psp(cfg, &array),
        Kind::Train => train(cfg, &array),
        Kind::Track => tracking(cfg, &array),
        Kind::Estimate => estimate(cfg, &array),
    }
}

fn csv_of<R: CsvRecord>(rows: &[R]) -> Res<Vec<u8>> {
    let mut out = Vec::new();
    write_csv(&mut out, rows)?;
    Ok(out)
}

fn map(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("metrics are built as objects"),
    }
}

fn seed_of(cfg: &ExperimentConfig) -> u64 {
    cfg.seed.expect("stochastic kinds are validated to carry a seed")
}

fn grid(cfg: &ExperimentConfig) -> Res<BeamspaceGrid64> {
    Ok(BeamspaceGrid64::uniform(cfg.angles, cfg.surrogates, cfg.s_max)?)
}

fn focus(cfg: &ExperimentConfig, array: &ArrayConfig64) -> Res<(f64, f64)> {
    let loc = SourceLocation64::new(cfg.range, cfg.theta)?;
    Ok(array.surrogate_coords(&loc))
}

fn beamspace(cfg: &ExperimentConfig, array: &ArrayConfig64) -> Res<Report> {
    let grid = grid(cfg)?;
    let loc = SourceLocation64::new(cfg.range, cfg.theta)?;
    let x = array.steering_exact(&loc);
    let bmap = beamspace_fast(&x, &grid, array)?;
    let mut csv = Vec::new();
    bmap.write_csv(&mut csv)?;

    let (row, col) = bmap.argmax();
    let expected = grid.num_angles() as f64 / cfg.n as f64;
    let parseval = (0..grid.num_surrogates())
        .map(|l| (bmap.row_energy(l) / expected - 1.0).abs())
        .fold(0.0, f64::max);
    let (ut, us) = array.surrogate_coords(&loc);
    Ok(Report {
        csv,
        metrics: map(json!({
            "user_theta": ut,
            "user_s_hat": us,
            "peak_row": row,
            "peak_col": col,
            "peak_theta": grid.angle(col),
            "peak_s_hat": grid.surrogate(row),
            "peak_gain": bmap.gain(row, col),
            "parseval_max_rel_error": parseval,
        })),
        thresholds: map(json!({ "parseval_max_rel_error": 1e-9 })),
        pass: parseval <= 1e-9,
    })
}

fn widths(cfg: &ExperimentConfig, array: &ArrayConfig64) -> Res<Report> {
    let centre = focus(cfg, array)?;
    let pred = predict_high_mainlobe_widths(array);
    let mut rows = Vec::new();
    for (axis, target) in [(Axis::Angle, pred.angle), (Axis::Surrogate, pred.surrogate)] {
        let cut = cross_section(array, centre, axis, 2.0 * target, target / 400.0)?;
        rows.push(nfbeam::mainlobe::WidthRecord { n: cfg.n, axis, predicted: target, measured: width_3db(&cut)? });
    }
    let worst = rows.iter().map(|r| r.rel_dev().abs()).fold(0.0, f64::max);
    Ok(Report {
        csv: csv_of(&rows)?,
        metrics: map(json!({
            "predicted_angle_width": pred.angle,
            "predicted_surrogate_width": pred.surrogate,
            "measured_angle_width": rows[0].measured,
            "measured_surrogate_width": rows[1].measured,
            "rel_dev_angle": rows[0].rel_dev(),
            "rel_dev_surrogate": rows[1].rel_dev(),
            "laws_validated_for_spacing": pred.validated,
        })),
        thresholds: map(json!({ "max_abs_rel_dev": 0.15 })),
        pass: worst <= 0.15,
    })
}

struct FitRow {
    angle: f64,
    surrogate: f64,
    power: f64,
    fitted: f64,
}

impl CsvRecord for FitRow {
    fn header() -> &'static [&'static str] {
        &["theta_hat", "s_hat", "power", "fitted"]
    }

    fn fields(&self) -> Vec<String> {
        vec![fmt_sig(self.angle), fmt_sig(self.surrogate), fmt_sig(self.power), fmt_sig(self.fitted)]
    }
}

fn gaussian(cfg: &ExperimentConfig, array: &ArrayConfig64) -> Res<Report> {
    let centre = focus(cfg, array)?;
    let samples = sample_high_mainlobe(array, centre, cfg.threshold, 121)?;
    let fit = gaussian_fit(&samples, centre)?;
    let rows: Vec<FitRow> = samples
        .iter()
        .map(|s| FitRow {
            angle: s.angle,
            surrogate: s.surrogate,
            power: s.power,
            fitted: fit.power_at(s.angle, s.surrogate) / fit.peak,
        })
        .collect();
    Ok(Report {
        csv: csv_of(&rows)?,
        metrics: map(json!({
            "samples": samples.len(),
            "sigma_angle": fit.sigma_angle,
            "sigma_surrogate": fit.sigma_surrogate,
            "fit_angle_width_3db": fit.angle_width_3db(),
            "fit_surrogate_width_3db": fit.surrogate_width_3db(),
            "mean_abs_deviation": fit.mean_abs_deviation,
        })),
        thresholds: map(json!({ "mean_abs_deviation": 0.01 })),
        pass: fit.mean_abs_deviation <= 0.01,
    })
}

fn psp(cfg: &ExperimentConfig, array: &ArrayConfig64) -> Res<Report> {
    let nf = cfg.n as f64;
    let res = 1.0 / (8.0 * nf);
    let mut rows = Vec::new();
    let mut ok = true;
    for &k in &cfg.ds_list {
        let ds = k / (nf * nf);
        let pred = psp_predict(array, ds)?;
        let meas = low_mainlobe_measure(array, ds, res)?;
        ok &= (meas.width - pred.width).abs() <= 1.0 / nf + res
            && (meas.average_gain / pred.average_gain - 1.0).abs() <= 0.05;
        rows.push(nfbeam::mainlobe::PspRecord {
            n: cfg.n,
            ds,
            w_pred: pred.width,
            w_meas: meas.width,
            g_pred: pred.average_gain,
            g_meas: meas.average_gain,
        });
    }
    // least-squares slope of measured width against ds
    let slope = if rows.len() >= 2 {
        let m = rows.len() as f64;
        let mx = rows.iter().map(|r| r.ds).sum::<f64>() / m;
        let my = rows.iter().map(|r| r.w_meas).sum::<f64>() / m;
        let sxy: f64 = rows.iter().map(|r| (r.ds - mx) * (r.w_meas - my)).sum();
        let sxx: f64 = rows.iter().map(|r| (r.ds - mx).powi(2)).sum();
        Some(sxy / sxx / (2.0 * nf / array.angle_scale()))
    } else {
        None
    };
    if let Some(s) = slope {
        ok &= (s - 1.0).abs() <= 0.10;
    }
    Ok(Report {
        csv: csv_of(&rows)?,
        metrics: map(json!({
            "points": rows.len(),
            "width_slope_over_2n": slope,
            "max_width_error": rows.iter().map(|r| (r.w_meas - r.w_pred).abs()).fold(0.0, f64::max),
            "max_gain_rel_error": rows.iter().map(|r| (r.g_meas / r.g_pred - 1.0).abs()).fold(0.0, f64::max),
        })),
        thresholds: map(json!({
            "width_error": 1.0 / nf + res,
            "gain_rel_error": 0.05,
            "slope_rel_error": 0.10,
        })),
        pass: ok,
    })
}

fn train(cfg: &ExperimentConfig, array: &ArrayConfig64) -> Res<Report> {
    let seed = seed_of(cfg);
    let book = polar_codebook(array, cfg.angles, cfg.surrogates)?;
    let plan = HierarchicalPlan::new(array, cfg.k1, cfg.s)?;
    let per_user: Vec<Res<[TrainingRecord; 3]>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let s = seed.wrapping_add(t);
            let loc = random_user(array, &mut scenario_rng(s))?;
            let h = array.steering_exact(&loc);
            let record = |method: &str, res: TrainingResult<f64>| TrainingRecord {
                seed: s,
                user_theta: loc.angle(),
                user_r: loc.range(),
                method: method.into(),
                pilots: res.pilots,
                rho: res.rho,
            };
            Ok([
                record("exhaustive", train_exhaustive(&h, array, &book, &mut MeasurementModel::new(cfg.snr_db, s))?),
                record("hierarchical", train_hierarchical(&h, &plan, &mut MeasurementModel::new(cfg.snr_db, s))?),
                record("hierarchical+refine", train_and_refine(&h, &plan, &mut MeasurementModel::new(cfg.snr_db, s))?),
            ])
        })
        .collect();
    let mut rows = Vec::with_capacity(3 * cfg.trials);
    for r in per_user {
        rows.extend(r?);
    }
    let stats = |method: &str| {
        let rhos: Vec<f64> = rows.iter().filter(|r| r.method == method).map(|r| r.rho).collect();
        let mean = rhos.iter().sum::<f64>() / rhos.len().max(1) as f64;
        let good = rhos.iter().filter(|r| **r >= 0.95).count() as f64 / rhos.len().max(1) as f64;
        (mean, good)
    };
    let (ex_mean, ex_good) = stats("exhaustive");
    let (hi_mean, hi_good) = stats("hierarchical");
    let (re_mean, re_good) = stats("hierarchical+refine");
    Ok(Report {
        csv: csv_of(&rows)?,
        metrics: map(json!({
            "users": cfg.trials,
            "pilots_exhaustive": book.len(),
            "pilots_hier": plan.pilots(),
            "mean_rho_exhaustive": ex_mean,
            "mean_rho_hier": hi_mean,
            "mean_rho_refined": re_mean,
            "frac_rho_ge_0_95_exhaustive": ex_good,
            "frac_rho_ge_0_95_hier": hi_good,
            "frac_rho_ge_0_95_refined": re_good,
        })),
        thresholds: map(json!({ "frac_rho_ge_0_95_refined": 0.9 })),
        pass: re_good >= 0.9,
    })
}

fn tracking(cfg: &ExperimentConfig, array: &ArrayConfig64) -> Res<Report> {
    let per_slot = cfg.speed * 2.0 / cfg.n as f64;
    let trajectory = (0..cfg.slots)
        .map(|t| SourceLocation64::new(cfg.range, cfg.theta + per_slot * t as f64))
        .collect::<nfbeam::Result<Vec<_>>>()?;
    let policy = TrackingPolicy::new(array, cfg.gamma)?;
    let mut mm = MeasurementModel::new(cfg.snr_db, seed_of(cfg));
    let rep = track(&trajectory, array, &mut mm, &policy)?;
    let retrains: Vec<usize> = rep.slots.iter().filter(|s| s.retrained).map(|s| s.slot).collect();
    let mean_gap = (retrains.len() >= 2)
        .then(|| (retrains[retrains.len() - 1] - retrains[0]) as f64 / (retrains.len() - 1) as f64);
    let mean_rho = rep.mean_rho();
    Ok(Report {
        csv: csv_of(&rep.slots)?,
        metrics: map(json!({
            "slots": rep.slots.len(),
            "retrainings": rep.retrainings(),
            "mean_retrain_gap": mean_gap,
            "mean_rho": mean_rho,
            "min_rho": rep.slots.iter().map(|s| s.rho).fold(f64::INFINITY, f64::min),
            "alignment_pilots": rep.alignment_pilots,
            "retrain_pilots": rep.retrain_pilots,
        })),
        thresholds: map(json!({ "mean_rho": 0.8 })),
        pass: mean_rho >= 0.8,
    })
}

fn estimate(cfg: &ExperimentConfig, array: &ArrayConfig64) -> Res<Report> {
    let seed = seed_of(cfg);
    let grid = grid(cfg)?;
    if cfg.paths == 0 || cfg.paths > grid.len() {
        return Err(CliError::config(Some("paths"), format!("paths must be in 1..={}", grid.len())));
    }
    let rows: Vec<Res<EstimationRecord>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let s = seed.wrapping_add(t);
            let mut rng = scenario_rng(s);
            let mut cells: Vec<(usize, usize)> = Vec::with_capacity(cfg.paths);
            while cells.len() < cfg.paths {
                let cell = (rng.random_range(0..grid.num_surrogates()), rng.random_range(0..grid.num_angles()));
                if !cells.contains(&cell) {
                    cells.push(cell);
                }
            }
            let paths: Vec<PathSpec<f64>> = cells
                .iter()
                .map(|&(l, k)| {
                    let g = C64::from_polar(rng.random_range(0.5..1.0), rng.random_range(0.0..2.0 * PI));
                    PathSpec::at_coordinate(g, grid.angle(k), grid.surrogate(l))
                })
                .collect();
            let ch = build_channel(array, &paths, ChannelModel::Fresnel)?;
            let y = MeasurementModel::new(cfg.snr_db, s).observe(ch.vector());
            let rep = omp_estimate(&y, &grid, array, StopRule::Paths(cfg.paths))?;
            let mut got = rep.supports.clone();
            got.sort();
            cells.sort();
            Ok(EstimationRecord {
                seed: s,
                snr_db: cfg.snr_db,
                paths: cfg.paths,
                nmse_db: nmse(ch.vector(), &rep.estimate)?,
                support_exact: got == cells,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Res<Vec<_>>>()?;
    let m = rows.len().max(1) as f64;
    let success = rows.iter().filter(|r| r.support_exact && r.nmse_db <= -20.0).count() as f64 / m;
    Ok(Report {
        csv: csv_of(&rows)?,
        metrics: map(json!({
            "trials": rows.len(),
            "support_exact_rate": rows.iter().filter(|r| r.support_exact).count() as f64 / m,
            "mean_nmse_db": rows.iter().map(|r| r.nmse_db).sum::<f64>() / m,
            "worst_nmse_db": rows.iter().map(|r| r.nmse_db).fold(f64::NEG_INFINITY, f64::max),
            "success_rate": success,
        })),
        thresholds: map(json!({ "success_rate": 0.95, "success_nmse_db": -20.0 })),
        pass: success >= 0.95,
    })
}
