//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines are always shown.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nfbeam::beamspace::default_surrogate_max;
use nfbeam::estimation::NMSE_FLOOR_DB;
use nfbeam::mainlobe::LowMainlobeMeasurement;
use nfbeam::output::write_csv;
use nfbeam::procedures::{default_stencil_step, random_user, scenario_rng, TrainingRecord, DEFAULT_REFINE_ROUNDS};
use nfbeam::*;
use rand::Rng;
use rayon::prelude::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn cfg(n: usize) -> ArrayConfig64 {
    ArrayConfig64::half_wavelength(n, 0.01).unwrap()
}

fn random_unit(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = scenario_rng(seed);
    let v: Vec<C64> = (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let s = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / s).collect()
}

fn within_budget(start: Instant, budget: Duration) -> (bool, f64) {
    let t = start.elapsed();
    (t < budget, t.as_secs_f64())
}

fn c1_angle_width() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for n in [64, 256, 512] {
        let c = cfg(n);
        let target = 2.0 / n as f64;
        let cut = cross_section(&c, (0.3, 1e-4), Axis::Angle, 2.0 * target, target / 400.0).unwrap();
        let w = width_3db(&cut).unwrap();
        let dev = (w / target - 1.0).abs();
        worst = worst.max(dev);
        parts.push(format!("N={n} w*N/2={:.4}", w / target));
    }
    let (fast, secs) = within_budget(start, Duration::from_secs(10));
    verdict(worst <= 0.15 && fast, format!("{} worst dev {:.1}% (<=15%), {secs:.2}s", parts.join(" "), worst * 100.0))
}

fn c2_surrogate_width() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for n in [64, 256, 512] {
        let c = cfg(n);
        let target = 7.0 / (n * n) as f64;
        let cut = cross_section(&c, (0.3, 1e-4), Axis::Surrogate, 2.0 * target, target / 400.0).unwrap();
        let w = width_3db(&cut).unwrap();
        let dev = (w / target - 1.0).abs();
        worst = worst.max(dev);
        parts.push(format!("N={n} w*N^2/7={:.4}", w / target));
    }
    let (fast, secs) = within_budget(start, Duration::from_secs(30));
    verdict(worst <= 0.15 && fast, format!("{} worst dev {:.1}% (<=15%), {secs:.2}s", parts.join(" "), worst * 100.0))
}

fn c3_gaussian() -> Verdict {
    let start = Instant::now();
    let c = cfg(512);
    let centre = (0.2, c.surrogate_of(&SourceLocation64::new(50.0, 0.2).unwrap()));
    let samples = sample_high_mainlobe(&c, centre, 0.5, 121).unwrap();
    let fit = gaussian_fit(&samples, centre).unwrap();
    // independent check of the reported deviation
    let mean: f64 = samples
        .iter()
        .map(|s| (fit.power_at(s.angle, s.surrogate) / fit.peak - s.power).abs())
        .sum::<f64>()
        / samples.len() as f64;
    let (fast, secs) = within_budget(start, Duration::from_secs(30));
    let consistent = (mean - fit.mean_abs_deviation).abs() < 1e-3;
    verdict(
        fit.mean_abs_deviation <= 0.01 && consistent && fast,
        format!(
            "{} samples, mean |dev| {:.4} (<=0.01), recomputed {:.4}, {secs:.2}s",
            samples.len(),
            fit.mean_abs_deviation,
            mean
        ),
    )
}

fn c4_psp() -> Verdict {
    let start = Instant::now();
    let n = 512usize;
    let nf = n as f64;
    let c = cfg(n);
    let res = 1.0 / (8.0 * nf);
    let mut ok = true;
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let mut parts = Vec::new();
    for k in [50.0, 100.0, 200.0] {
        let ds = k / (nf * nf);
        let pred = psp_predict(&c, ds).unwrap();
        let LowMainlobeMeasurement { width, average_gain, .. } = low_mainlobe_measure(&c, ds, res).unwrap();
        let w_err = (width - pred.width).abs();
        let g_err = (average_gain / pred.average_gain - 1.0).abs();
        ok &= w_err <= 1.0 / nf + res && g_err <= 0.05;
        xs.push(ds);
        ws.push(width);
        parts.push(format!("ds={k}/N^2 dW*N={:+.2} dG={:.1}%", (width - pred.width) * nf, g_err * 100.0));
    }
    let mx = xs.iter().sum::<f64>() / 3.0;
    let my = ws.iter().sum::<f64>() / 3.0;
    let sxy: f64 = xs.iter().zip(&ws).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let slope_dev = (slope / (2.0 * nf) - 1.0).abs();
    let (fast, secs) = within_budget(start, Duration::from_secs(60));
    verdict(
        ok && slope_dev <= 0.10 && fast,
        format!("{}; slope/2N={:.4} (+/-10%), {secs:.2}s", parts.join(", "), slope / (2.0 * nf)),
    )
}

fn c5_parseval() -> Verdict {
    let mut worst: f64 = 0.0;
    for n in [64usize, 256] {
        let c = cfg(n);
        for a in [n, 2 * n] {
            let grid = BeamspaceGrid64::uniform(a, 11, default_surrogate_max(&c)).unwrap();
            for seed in 0..5 {
                let x = random_unit(n, 100 + seed);
                let fast = beamspace_fast(&x, &grid, &c).unwrap();
                let direct = beamspace_direct(&x, &grid, &c).unwrap();
                let want = a as f64 / n as f64;
                for row in 0..11 {
                    for map in [&fast, &direct] {
                        worst = worst.max((map.row_energy(row) / want - 1.0).abs());
                    }
                }
            }
        }
    }
    verdict(worst <= 1e-9, format!("max relative row-energy error {worst:.2e} (<=1e-9)"))
}

fn c6_translation() -> Verdict {
    let n = 128;
    let c = cfg(n);
    let a = 2 * n;
    let grid = BeamspaceGrid64::uniform(a, 11, default_surrogate_max(&c)).unwrap();
    let (k0, l0, dk, dl) = (70usize, 3usize, 37usize, 4usize);
    let x1 = frft_basis(&c, grid.angle(k0), grid.surrogate(l0)).unwrap();
    let x2 = frft_basis(&c, grid.angle(k0 + dk), grid.surrogate(l0 + dl)).unwrap();
    let m1 = beamspace_fast(&x1, &grid, &c).unwrap();
    let m2 = beamspace_fast(&x2, &grid, &c).unwrap();
    let mut worst: f64 = 0.0;
    for row in dl..11 {
        for col in 0..a {
            let src = (col + a - dk) % a;
            worst = worst.max((m2.gain(row, col) - m1.gain(row - dl, src)).abs());
        }
    }
    verdict(worst <= 1e-9, format!("shift ({dk} cols, {dl} rows): max gain deviation {worst:.2e} (<=1e-9)"))
}

fn c7_far_field() -> Verdict {
    let mut worst: f64 = 0.0;
    for n in [64usize, 200] {
        let c = cfg(n);
        for a in [n, 2 * n, 3 * n + 1] {
            let grid = BeamspaceGrid64::uniform(a, 11, default_surrogate_max(&c)).unwrap();
            let x = random_unit(n, 7);
            let map = beamspace_fast(&x, &grid, &c).unwrap();
            // plain zero-padded DFT of the alternating-sign input, re-phased for the
            // centred element indexing
            let centre = (n as f64 - 1.0) / 2.0;
            for k in 0..a {
                let mut dft = C64::new(0.0, 0.0);
                for (m, xm) in x.iter().enumerate() {
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    dft += xm * sign * C64::from_polar(1.0, -2.0 * PI * (m * k) as f64 / a as f64);
                }
                let phase = C64::from_polar(1.0, -PI * centre + 2.0 * PI * centre * k as f64 / a as f64);
                let want = dft * phase / (n as f64).sqrt();
                worst = worst.max((map.coefficient(0, k) - want).norm());
            }
        }
    }
    verdict(worst <= 1e-9, format!("max |row0 - DFT| {worst:.2e} (<=1e-9)"))
}

fn timed<F: FnMut()>(mut f: F, reps: usize) -> f64 {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn c8_fast() -> Verdict {
    let mut worst: f64 = 0.0;
    for n in [64usize, 512] {
        let c = cfg(n);
        let grid = BeamspaceGrid64::uniform(2 * n, 11, default_surrogate_max(&c)).unwrap();
        let x = random_unit(n, 11);
        let f = beamspace_fast(&x, &grid, &c).unwrap();
        let d = beamspace_direct(&x, &grid, &c).unwrap();
        let scale = d.coefficients().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in f.coefficients().iter().zip(d.coefficients()) {
            worst = worst.max((a - b).norm() / scale);
        }
    }
    let c = cfg(1024);
    let grid = BeamspaceGrid64::uniform(2048, 11, default_surrogate_max(&c)).unwrap();
    let x = random_unit(1024, 12);
    let t_fast = timed(
        || {
            beamspace_fast(&x, &grid, &c).unwrap();
        },
        5,
    );
    let t_direct = timed(
        || {
            beamspace_direct(&x, &grid, &c).unwrap();
        },
        2,
    );
    let ratio = t_fast / t_direct;
    verdict(
        worst <= 1e-6 && ratio <= 0.2,
        format!("max rel diff {worst:.2e} (<=1e-6); N=1024 fast/direct time {ratio:.4} (<=0.2)"),
    )
}

fn c9_training() -> Verdict {
    let start = Instant::now();
    let c = cfg(512);
    let book = polar_codebook(&c, 512, 11).unwrap();
    let plan = HierarchicalPlan::default_for(&c).unwrap();

    let probe_user = random_user(&c, &mut scenario_rng(1)).unwrap();
    let h = c.steering_exact(&probe_user);
    let mut mm = MeasurementModel::new(10.0, 1);
    let ex = train_exhaustive(&h, &c, &book, &mut mm).unwrap();
    let exhaustive_ok = book.len() == 5632 && ex.pilots == 5632 && mm.draws() == 5632;
    let mut mm = MeasurementModel::new(10.0, 1);
    let hi = train_hierarchical(&h, &plan, &mut mm).unwrap();
    let hier_ok = plan.pilots() == 15 && hi.pilots == 15 && mm.draws() == 15;

    let users = 500u64;
    let rhos: Vec<f64> = (0..users)
        .into_par_iter()
        .map(|u| {
            let seed = 9000 + u;
            let loc = random_user(&c, &mut scenario_rng(seed)).unwrap();
            let h = c.steering_exact(&loc);
            let mut mm = MeasurementModel::new(10.0, seed);
            train_and_refine(&h, &plan, &mut mm).unwrap().rho
        })
        .collect();
    let hits = rhos.iter().filter(|r| **r >= 0.95).count();
    let frac = hits as f64 / users as f64;
    let (fast, secs) = within_budget(start, Duration::from_secs(300));
    verdict(
        exhaustive_ok && hier_ok && frac >= 0.9 && fast,
        format!(
            "pilots exhaustive={} hierarchical={}; rho>=0.95 for {hits}/{users} users ({:.1}%, need >=90%), {secs:.1}s",
            ex.pilots,
            hi.pilots,
            frac * 100.0
        ),
    )
}

fn c10_refinement() -> Verdict {
    let n = 512usize;
    let nf = n as f64;
    let c = cfg(n);
    let (cell_a, cell_s) = (2.0 / nf, 7.0 / (nf * nf));
    let results: Vec<(f64, f64, f64)> = (0..200u64)
        .into_par_iter()
        .map(|u| {
            let mut rng = scenario_rng(500 + u);
            let r = (rng.random_range(10f64.ln()..100f64.ln())).exp();
            let theta = rng.random_range(-0.8..0.8);
            let loc = SourceLocation64::new(r, theta).unwrap();
            let (ta, ts) = c.surrogate_coords(&loc);
            let h = c.steering_fresnel(&loc);
            let start = ((ta / cell_a).round() * cell_a, (ts / cell_s).round() * cell_s);
            let mut mm = MeasurementModel::noiseless(u);
            let out =
                refine_search(&h, &c, start, default_stencil_step(&c), DEFAULT_REFINE_ROUNDS, &mut mm).unwrap();
            let (ea, es) = out.estimate;
            let r_hat = c.range_of(ea, es).unwrap();
            ((ea - ta).abs() / cell_a, (es - ts).abs() / cell_s, (r_hat / r - 1.0).abs())
        })
        .collect();
    let wa = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let ws = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let wr = results.iter().map(|r| r.2).fold(0.0, f64::max);
    verdict(
        wa <= 0.1 && ws <= 0.1 && wr <= 0.05,
        format!(
            "200 users r in [10,100] m: worst angle err {wa:.4} cell, surrogate err {ws:.4} cell (<=0.1), range err {:.2}% (<=5%)",
            wr * 100.0
        ),
    )
}

fn random_gain<R: Rng>(rng: &mut R) -> C64 {
    C64::from_polar(rng.random_range(0.5..1.0), rng.random_range(0.0..2.0 * PI))
}

fn c11_sparse() -> Verdict {
    let start = Instant::now();
    let n = 256usize;
    let c = cfg(n);
    let grid = BeamspaceGrid64::uniform(512, 11, default_surrogate_max(&c)).unwrap();

    let trials: Vec<(bool, f64)> = (0..200u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = scenario_rng(t);
            let mut cells: Vec<(usize, usize)> = Vec::new();
            while cells.len() < 3 {
                let cell = (rng.random_range(0..11), rng.random_range(0..512));
                if !cells.contains(&cell) {
                    cells.push(cell);
                }
            }
            let paths: Vec<PathSpec<f64>> = cells
                .iter()
                .map(|&(l, k)| PathSpec::at_coordinate(random_gain(&mut rng), grid.angle(k), grid.surrogate(l)))
                .collect();
            let ch = build_channel(&c, &paths, ChannelModel::Fresnel).unwrap();
            let y = MeasurementModel::new(20.0, t).observe(ch.vector());
            let rep = omp_estimate(&y, &grid, &c, StopRule::Paths(3)).unwrap();
            let mut got = rep.supports.clone();
            got.sort();
            cells.sort();
            (got == cells, nmse(ch.vector(), &rep.estimate).unwrap())
        })
        .collect();
    let ok = trials.iter().filter(|(s, e)| *s && *e <= -20.0).count();
    let frac = ok as f64 / trials.len() as f64;
    let worst_nmse = trials.iter().map(|t| t.1).fold(NMSE_FLOOR_DB, f64::max);

    // Single-path recovery at several grid positions. Trial t uses the same
    // raw noise at every position, modulated by the path's own unit-modulus
    // basis vector; white circular noise is invariant under that modulation,
    // so the rates compare positions with common random numbers.
    let snr_db = -12.0;
    let positions = [(0usize, 0usize), (2, 100), (5, 256), (10, 511)];
    let rates: Vec<f64> = positions
        .iter()
        .map(|&(l, k)| {
            let hits: usize = (0..500u64)
                .into_par_iter()
                .map(|t| {
                    let mut rng = scenario_rng(10_000 + t);
                    let g = random_gain(&mut rng);
                    let ones = vec![C64::new(1.0 / (n as f64).sqrt(), 0.0); n];
                    let z = MeasurementModel::new(snr_db, 10_000 + t).observe(&ones);
                    let b = frft_basis(&c, grid.angle(k), grid.surrogate(l)).unwrap();
                    let y: Vec<C64> = z.iter().zip(b.iter()).map(|(zm, bm)| g * zm * bm * (n as f64).sqrt()).collect();
                    let rep = omp_estimate(&y, &grid, &c, StopRule::Paths(1)).unwrap();
                    usize::from(rep.supports[0] == (l, k))
                })
                .sum();
            hits as f64 / 500.0
        })
        .collect();
    let spread = rates.iter().cloned().fold(f64::MIN, f64::max) - rates.iter().cloned().fold(f64::MAX, f64::min);
    let (fast, secs) = within_budget(start, Duration::from_secs(300));
    let rate_txt: Vec<String> = rates.iter().map(|r| format!("{:.1}%", r * 100.0)).collect();
    verdict(
        frac >= 0.95 && spread <= 0.02 && fast,
        format!(
            "L=3: {ok}/200 exact & NMSE<=-20 dB ({:.1}%, need >=95%, worst NMSE {worst_nmse:.1} dB); \
             L=1 at {snr_db} dB success {} spread {:.1}% (<=2%), {secs:.1}s",
            frac * 100.0,
            rate_txt.join("/"),
            spread * 100.0
        ),
    )
}

fn training_csv(threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let c = cfg(512);
    pool.install(|| {
        let plan = HierarchicalPlan::default_for(&c).unwrap();
        let rows: Vec<TrainingRecord> = (0..24u64)
            .into_par_iter()
            .map(|seed| {
                let loc = random_user(&c, &mut scenario_rng(seed)).unwrap();
                let h = c.steering_exact(&loc);
                let res = train_and_refine(&h, &plan, &mut MeasurementModel::new(10.0, seed)).unwrap();
                TrainingRecord {
                    seed,
                    user_theta: loc.angle(),
                    user_r: loc.range(),
                    method: "hierarchical+refine".into(),
                    pilots: res.pilots,
                    rho: res.rho,
                }
            })
            .collect();
        let mut out = Vec::new();
        write_csv(&mut out, &rows).unwrap();
        out
    })
}

fn c12_determinism() -> Verdict {
    let a = training_csv(1);
    let b = training_csv(4);
    let c2 = training_csv(4);
    verdict(
        a == b && b == c2 && !a.is_empty(),
        format!("training CSV ({} bytes) identical across reruns and thread counts 1/4", a.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 12] = [
        ("angle beamwidth law", c1_angle_width),
        ("distance beamwidth law", c2_surrogate_width),
        ("Gaussian approximation", c3_gaussian),
        ("PSP low-mainlobe laws", c4_psp),
        ("Parseval row energy", c5_parseval),
        ("translation invariance", c6_translation),
        ("far-field subset", c7_far_field),
        ("fast transform", c8_fast),
        ("training overhead", c9_training),
        ("refinement accuracy", c10_refinement),
        ("sparse estimation", c11_sparse),
        ("determinism", c12_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        println!("{} {:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
