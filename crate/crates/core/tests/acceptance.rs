//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so the
//! lines are always printed; exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use korteweg::diagnostics::{
    degiorgi_recursion, level_set_report, saturating_sequence, DiagnosticsRecord,
    LevelSetExponents, LP_GAIN_EXPONENTS,
};
use korteweg::fields::{
    dealias_real, div, hessian, inverse_transform, transform, Grid, RealField, SpectralField,
};
use korteweg::lifespan::{
    branch_values, lifespan_lower_bound, Branch, LifespanConstants, LifespanInputs,
};
use korteweg::lp_besov::{
    block_range, bony_decompose, chi, decompose, heat_block_decay_check, phi, BumpPair,
};
use korteweg::model::{div_k_form_a, Capillarity, PhysParams};
use korteweg::presets::{Preset, PresetName};
use korteweg::solver::{
    calibrate_c1, picard_solve, run, Formulation, NoObserver, PicardConfig, PicardOutcome,
    RunOutput, SolverConfig, SolverError, SolverState,
};
use korteweg::verify::{broadband_field, formulation_gap, random_density};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn simulate(
    dim: usize,
    n: usize,
    params: PhysParams,
    preset: Preset,
    cfg: SolverConfig,
) -> Result<RunOutput, SolverError> {
    let grid = Grid::periodic(dim, n)?;
    let data = preset.build(&grid, &params)?;
    let init = SolverState::from_primitive(data, cfg.formulation, &params)?;
    run(init, &params, &cfg, &mut NoObserver)
}

// 1: form A with κ(ρ) = κ/ρ against κ div(ρ∇∇ln ρ) assembled here.
fn korteweg_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kappa = 0.01;
    let mut worst: f64 = 0.0;
    for (dim, n) in [(1, 256), (2, 128)] {
        let grid = Grid::periodic(dim, n).unwrap();
        for _ in 0..20 {
            let rho = random_density(&grid, 0.5, &mut rng);
            let a = div_k_form_a(&rho, &Capillarity::quantum(kappa)).unwrap();
            let h = hessian(&rho.map(f64::ln));
            let (mut num, mut den) = (0.0, 0.0);
            for (i, row) in h.iter().enumerate() {
                let flux: Vec<RealField> = row.iter().map(|hij| dealias_real(&rho.mul(hij))).collect();
                let b = div(&flux).unwrap().scale(kappa);
                num += a[i].sub(&b).l2_norm().powi(2);
                den += b.l2_norm().powi(2);
            }
            worst = worst.max((num / den).sqrt());
        }
    }
    outcome(worst < 1e-8, format!("max relative L2 discrepancy {worst:.3e} (< 1e-8)"))
}

// 2
fn formulation_equivalence() -> Outcome {
    match formulation_gap() {
        Ok(gap) => outcome(gap < 1e-5, format!("sup density gap {gap:.3e} (< 1e-5)")),
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

fn small_data_runs() -> Vec<(String, usize, PhysParams, Result<RunOutput, SolverError>)> {
    let quantum = PhysParams::default();
    let strong = PhysParams {
        kappa: 0.02,
        ..PhysParams::default()
    };
    let cases = [
        ("smooth_bump 0.05", 1, 128, quantum, Preset::new(PresetName::SmoothBump, 0.05)),
        ("smooth_bump 0.1 kappa>mu^2", 1, 128, strong, Preset::new(PresetName::SmoothBump, 0.1)),
        (
            "random_bandlimited seed 3",
            1,
            128,
            quantum,
            Preset {
                seed: 3,
                ..Preset::new(PresetName::RandomBandlimited, 0.1)
            },
        ),
        ("manufactured 0.1", 1, 128, quantum, Preset::new(PresetName::Manufactured, 0.1)),
        ("smooth_bump 0.05 2d", 2, 32, quantum, Preset::new(PresetName::SmoothBump, 0.05)),
    ];
    cases
        .into_iter()
        .map(|(name, dim, n, params, preset)| {
            let cfg = SolverConfig {
                dt: 1e-3,
                t_end: 1.0,
                formulation: Formulation::Effective,
                diag_stride: 10,
                ..SolverConfig::default()
            };
            (name.to_string(), dim, params, simulate(dim, n, params, preset, cfg))
        })
        .collect()
}

// 3
fn energy_inequalities(runs: &[(String, usize, PhysParams, Result<RunOutput, SolverError>)]) -> Outcome {
    let tol = 1e-4;
    let mut worst = [f64::NEG_INFINITY; 2];
    let mut failures = Vec::new();
    for (name, _, _, out) in runs {
        let Ok(out) = out else {
            failures.push(format!("{name}: run failed"));
            continue;
        };
        if !out.completed() {
            failures.push(format!("{name}: aborted"));
            continue;
        }
        let r0 = &out.records[0];
        for r in &out.records {
            let lhs = [
                r.energy + r.dissip_u,
                r.bd_entropy + r.dissip_v + r.dissip_density,
            ];
            for (i, (l, base)) in lhs.iter().zip([r0.energy, r0.bd_entropy]).enumerate() {
                worst[i] = worst[i].max((l - base) / base);
                if *l > base * (1.0 + tol) {
                    failures.push(format!("{name}: functional {i} at t = {}", r.t));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "5 runs; max relative excess E {:.2e}, E1 {:.2e} (<= 1e-4){}",
            worst[0],
            worst[1],
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    )
}

// 4
fn mass_conservation() -> Outcome {
    let cfg = SolverConfig {
        dt: 1e-4,
        t_end: 1.0,
        formulation: Formulation::Primitive,
        diag_stride: 100,
        ..SolverConfig::default()
    };
    match simulate(1, 256, PhysParams::default(), Preset::new(PresetName::SmoothBump, 0.1), cfg) {
        Ok(out) if out.completed() => {
            let m0 = out.records[0].mass;
            let drift = out
                .records
                .iter()
                .map(|r| ((r.mass - m0) / m0).abs())
                .fold(0.0, f64::max);
            outcome(drift < 1e-10, format!("max relative mass drift {drift:.3e} (< 1e-10)"))
        }
        Ok(out) => outcome(false, format!("aborted: {:?}", out.abort)),
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

/// Right side of the gain bound, written out from the closed form.
fn gain_rhs(p: f64, n: f64, a: f64, m0: f64, s: f64, t: f64) -> f64 {
    let c1 = (a * a / 2.0 * (2.0 * n * n * p * p / (p - 2.0) + 2.0 * p * p * (p - 4.0))).powf(1.0 / p);
    let c2 = a * a / 2.0 * (n * n * (p - 4.0) / (p - 2.0) + 1.0) / p;
    2f64.powf(1.0 / p)
        * (m0 + s.powf(4.0 / (p * (p - 2.0))) * c1 * t.powf(1.0 / p))
        * (c2 * s.powf(4.0 / (p - 2.0)) * t).exp()
}

// 5
fn lp_gain(runs: &[(String, usize, PhysParams, Result<RunOutput, SolverError>)]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut checked = 0;
    for (name, dim, params, out) in runs {
        let Ok(out) = out else { continue };
        if params.gamma != 1.0 {
            continue;
        }
        let recs: &[DiagnosticsRecord] = &out.records;
        for (i, &p) in LP_GAIN_EXPONENTS.iter().enumerate() {
            for r in recs {
                let rhs = gain_rhs(p, *dim as f64, params.a, recs[0].lp_gain[i], r.sqrt_rho_v_sup, r.t);
                let ratio = r.lp_gain[i] / rhs;
                worst = worst.max(ratio);
                checked += 1;
                if r.lp_gain[i] > rhs * (1.0 + 1e-3) {
                    failures.push(format!("{name} p={p} t={}", r.t));
                }
            }
        }
    }
    outcome(
        failures.is_empty() && checked > 0,
        format!("{checked} checks; max lhs/rhs {worst:.4}{}", if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }),
    )
}

/// `‖Δ_l f‖_{L²}` computed directly from the Fourier coefficients.
fn block_l2(fh: &SpectralField, l: i32) -> f64 {
    let g = fh.grid();
    let scale = 2f64.powi(-l);
    let sum: f64 = fh
        .coeffs()
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let k = g.k_norm(idx);
            if k == 0.0 {
                0.0
            } else {
                (phi(k * scale) * c.norm()).powi(2)
            }
        })
        .sum();
    (sum * g.volume()).sqrt() / g.len() as f64
}

// 6
fn heat_decay() -> Outcome {
    let mu = 0.1;
    let times = [0.01, 0.1, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    let mut failures = Vec::new();
    for (dim, n) in [(1, 256), (2, 64)] {
        let grid = Grid::periodic(dim, n).unwrap();
        let u0 = broadband_field(&grid, &mut rng);
        let u0h = transform(&u0);
        let (lo, hi) = block_range(&grid);
        let report = heat_block_decay_check(&u0, mu, &[0.0, 0.01, 0.1, 1.0], 2.0, &BumpPair::default()).unwrap();
        for l in lo..=hi {
            let n0 = block_l2(&u0h, l);
            if n0 == 0.0 {
                continue;
            }
            for &t in &times {
                let nt = block_l2(&u0h.heat(mu, t), l);
                let ratio = nt / n0;
                let s = 4f64.powi(l) * mu * t;
                let lower = (-(8.0f64 / 3.0).powi(2) * s).exp();
                let upper = (-(0.75f64).powi(2) * s).exp();
                checked += 1;
                if !(ratio >= lower * (1.0 - 1e-12) && ratio <= upper * (1.0 + 1e-12)) {
                    failures.push(format!("{dim}d l={l} t={t}"));
                }
                let lib = report.entries.iter().find(|e| e.l == l && e.t == t);
                if let Some(e) = lib {
                    if (e.ratio - ratio).abs() > 1e-10 * ratio.max(1e-300) && ratio > 1e-200 {
                        failures.push(format!("{dim}d l={l} t={t} library ratio {} vs {ratio}", e.ratio));
                    }
                }
            }
        }
    }
    outcome(failures.is_empty(), format!("{checked} block/time pairs within annulus bounds{}", if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }))
}

// 7
fn littlewood_paley() -> Outcome {
    let bumps = BumpPair::default();
    let mut partition: f64 = 0.0;
    for i in 0..=200_000 {
        let r = i as f64 * 5e-3;
        let mut s = chi(r);
        let mut l = 0;
        while 0.75 * 2f64.powi(l) <= r.max(1.0) * 2.0 {
            s += phi(r * 2f64.powi(-l));
            l += 1;
        }
        partition = partition.max((s - 1.0).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut recon, mut bern, mut bony): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (dim, n) in [(1, 256), (2, 64)] {
        let grid = Grid::periodic(dim, n).unwrap();
        let f = broadband_field(&grid, &mut rng).map(|x| x + 0.25);
        let d = decompose(&f, &bumps);
        let mut sum = RealField::constant(&grid, d.mean[0]);
        for l in d.levels() {
            let block = &d.block(l).unwrap()[0];
            sum = sum.add(block);
            let norm = block.l2_norm();
            if norm > 0.0 {
                let bh = transform(block);
                let grad = (0..dim)
                    .map(|a| inverse_transform(&bh.derivative(a)).l2_norm().powi(2))
                    .sum::<f64>()
                    .sqrt();
                bern = bern.max(grad / norm / (8.0 / 3.0 * 2f64.powi(l)));
            }
        }
        recon = recon.max(sum.sub(&f).max_abs() / f.max_abs());
        for _ in 0..3 {
            let u = dealias_real(&broadband_field(&grid, &mut rng));
            let v = dealias_real(&broadband_field(&grid, &mut rng));
            let parts = bony_decompose(&u, &v, &bumps).unwrap();
            let uv = u.mul(&v);
            let t = parts.t_uv.add(&parts.t_vu).add(&parts.remainder).map(|x| x + parts.mean_product);
            bony = bony.max(t.sub(&uv).max_abs() / uv.max_abs());
        }
    }
    let pass = partition < 1e-12 && recon < 1e-10 && bern <= 1.0 + 1e-12 && bony < 1e-8;
    outcome(
        pass,
        format!(
            "partition {partition:.1e}, reconstruction {recon:.1e}, Bernstein ratio/(8/3 2^l) {bern:.4}, Bony {bony:.1e}"
        ),
    )
}

// 8
fn degiorgi() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut closed: f64 = 0.0;
    for _ in 0..50 {
        let c: f64 = rng.gen_range(0.5..2.0);
        let b: f64 = rng.gen_range(1.0..3.0);
        let eps: f64 = rng.gen_range(0.2..1.0);
        let y0: f64 = rng.gen_range(0.01..0.2);
        let rep = degiorgi_recursion(c, b, eps, y0, 6).unwrap();
        let seq = saturating_sequence(c, b, eps, y0, 6);
        for (n, (bound, y)) in rep.bounds.iter().zip(&seq).enumerate() {
            // closed form of the saturating sequence, evaluated here
            let g = (1.0 + eps).powi(n as i32);
            let exact = c.powf((g - 1.0) / eps) * b.powf((g - 1.0) / (eps * eps) - n as f64 / eps) * y0.powf(g);
            if exact.is_normal() {
                closed = closed.max((bound / exact - 1.0).abs()).max((y / exact - 1.0).abs());
            }
        }
    }
    let mut mismatches = 0;
    for _ in 0..100 {
        let c: f64 = rng.gen_range(0.5..4.0);
        let b: f64 = rng.gen_range(1.1..4.0);
        let eps: f64 = rng.gen_range(0.2..1.5);
        let theta = c.powf(-1.0 / eps) * b.powf(-1.0 / (eps * eps));
        let factor = if rng.gen_bool(0.5) { rng.gen_range(0.2..0.9) } else { rng.gen_range(1.1..5.0) };
        let y0 = theta * factor;
        let rep = degiorgi_recursion(c, b, eps, y0, 4).unwrap();
        // long-run behaviour of the saturating sequence in logs
        let mut w = y0.ln();
        for j in 0..300 {
            w = c.ln() + j as f64 * b.ln() + (1.0 + eps) * w;
        }
        if rep.vanishes != (w < y0.ln()) {
            mismatches += 1;
        }
    }
    outcome(
        closed < 1e-12 && mismatches == 0,
        format!("closed form max rel err {closed:.1e} (< 1e-12); verdict mismatches {mismatches}/100"),
    )
}

// 9
fn lifespan_formula() -> Outcome {
    let unit = LifespanInputs::unit(1, 1.5);
    let rep = lifespan_lower_bound(&unit).unwrap();
    // 1/(32(1+√2)²) = 5.36165e-3; the commonly quoted 5.3613e-3 is a
    // rounding of the same expression and sits 6.6e-5 away from it
    let derived = 1.0 / (32.0 * (1.0 + 2f64.sqrt()).powi(2));
    let rel = (rep.t - derived).abs() / derived;
    let quoted = (rep.t - 5.3613e-3).abs() / 5.3613e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    for _ in 0..1000 {
        let base = LifespanInputs {
            norm_q0_crit: rng.gen_range(0.0..3.0),
            norm_v0_crit: rng.gen_range(0.0..3.0),
            norm_q0_sur: rng.gen_range(0.0..3.0),
            norm_v0_sur: rng.gen_range(0.0..3.0),
            constants: LifespanConstants {
                c_big: rng.gen_range(0.5..2.0),
                c1: rng.gen_range(0.5..2.0),
                c_small: rng.gen_range(0.5..2.0),
                mu: rng.gen_range(0.05..2.0),
                eps: rng.gen_range(0.05..1.0),
                eps_prime: rng.gen_range(0.1..1.0),
            },
            dim: 2,
            p: 3.0,
        };
        let t0 = lifespan_lower_bound(&base).unwrap().t;
        let f = 1.0 + rng.gen_range(0.0..0.5);
        let mut up = Vec::new();
        let mut down = Vec::new();
        let mut b = base;
        b.norm_q0_crit *= f;
        down.push(b);
        let mut b = base;
        b.norm_v0_crit *= f;
        down.push(b);
        let mut b = base;
        b.norm_q0_sur *= f;
        down.push(b);
        let mut b = base;
        b.norm_v0_sur *= f;
        down.push(b);
        let mut b = base;
        b.constants.c_big *= f;
        down.push(b);
        let mut b = base;
        b.constants.c_small *= f;
        up.push(b);
        let mut b = base;
        b.constants.mu *= f;
        up.push(b);
        let mut b = base;
        b.constants.eps *= f;
        up.push(b);
        for b in down {
            if lifespan_lower_bound(&b).unwrap().t > t0 * (1.0 + 1e-14) {
                violations += 1;
            }
        }
        for b in up {
            if lifespan_lower_bound(&b).unwrap().t < t0 * (1.0 - 1e-14) {
                violations += 1;
            }
        }
    }
    let b = branch_values(&unit);
    outcome(
        rel < 1e-6 && rep.active == Branch::A0 && violations == 0,
        format!(
            "T = {:.6e} (rel {rel:.1e} vs 1/(32(1+sqrt2)^2), {quoted:.1e} vs quoted 5.3613e-3), branches ({:.4e}, {:.4e}, {}, {:.4e}), active {}, monotonicity violations {violations}/8000",
            rep.t,
            b[0],
            b[1],
            b[2],
            b[3],
            rep.active.name()
        ),
    )
}

fn mode_data(grid: &Grid, amp: f64, phase: f64) -> (RealField, Vec<RealField>) {
    (
        RealField::from_fn(grid, |x, _| amp * (x + phase).cos()),
        vec![RealField::from_fn(grid, |x, _| amp * (2.0 * x - phase).sin())],
    )
}

// 10
fn picard() -> Outcome {
    let grid = Grid::periodic(1, 32).unwrap();
    let params = PhysParams::default();
    let pcfg = PicardConfig {
        max_iters: 40,
        tol: 1e-13,
        p: 2.0,
        n_time: 32,
        dealias: true,
    };
    let constants = LifespanConstants {
        mu: params.mu,
        eps: 0.5,
        eps_prime: 0.25,
        ..LifespanConstants::default()
    };
    let family: Vec<_> = [0.0, 0.7, 1.9].iter().map(|&ph| mode_data(&grid, 1e-3, ph)).collect();
    let cal = match calibrate_c1(&family, &params, &pcfg, constants, 4.0, 12) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("calibration failed: {e}")),
    };
    let (q0, v0) = mode_data(&grid, 1e-3, 0.3);
    let inputs = korteweg::solver::picard::lifespan_inputs(&q0, &v0, pcfg.p, LifespanConstants { c1: cal.c1, ..constants }).unwrap();
    let t = lifespan_lower_bound(&inputs).unwrap().t;
    let small = picard_solve(&q0, &v0, &params, t, &pcfg).unwrap();
    let run = small.longest_contracting_run();

    let (q1, v1) = mode_data(&grid, 1.0, 0.3);
    let large = picard_solve(&q1, &v1, &params, 20.0, &pcfg).unwrap();
    let diverged = matches!(large.outcome, PicardOutcome::NonContraction { .. });
    outcome(
        run >= 5 && diverged,
        format!(
            "C1 = {:.4}, T = {t:.4e}; small data: {} ratios < 1 in a row, ratios {:?}; large data at T = 20: {:?}",
            cal.c1,
            run,
            small.ratios.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>(),
            large.outcome
        ),
    )
}

// 11
fn vacuum_monitoring() -> Outcome {
    let params = PhysParams::default();
    let cfg = SolverConfig {
        dt: 1e-4,
        t_end: 0.2,
        formulation: Formulation::Effective,
        diag_stride: 100,
        keep_samples: true,
        ..SolverConfig::default()
    };
    let preset = Preset {
        name: PresetName::NearVacuum,
        delta: 0.05,
        ..Preset::default()
    };
    let out = match simulate(1, 256, params, preset, cfg.clone()) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let status = match &out.abort {
        None => {
            let m = out.records.iter().map(|r| r.min_rho).fold(f64::INFINITY, f64::min);
            if m > cfg.vacuum_floor {
                format!("completed, min rho {m:.4e}")
            } else {
                return outcome(false, format!("completed below the floor: {m}"));
            }
        }
        Some(SolverError::VacuumBreach { t, min_rho }) => format!("VacuumBreach at t = {t}, min rho {min_rho:e}"),
        Some(e) => return outcome(false, format!("unexpected abort: {e}")),
    };
    let alpha = 0.5;
    let ex = LevelSetExponents::half(4.0, 1).unwrap();
    let ks = [1.0, 1.5, 2.0, 3.0, 4.0, 4.4, 5.0];
    let mut exact = true;
    let mut mus = Vec::new();
    for &k in &ks {
        let rep = level_set_report(&out.samples, alpha, k, &ex).unwrap();
        for (s, m) in out.samples.iter().zip(&rep.measure_series) {
            let cell = 2.0 * PI / 256.0;
            let brute = s.rho.values().iter().filter(|&&r| 1.0 / r.powf(alpha) >= k).count() as f64 * cell;
            if brute != *m {
                exact = false;
            }
        }
        mus.push(rep.mu_k);
    }
    let monotone = mus.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        exact && monotone,
        format!(
            "{status}; level-set measures exact: {exact}; mu(k) nonincreasing: {monotone} {:?}",
            mus.iter().map(|m| format!("{m:.3e}")).collect::<Vec<_>>()
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |i: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {i:2} {name}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    };
    report(1, "Korteweg tensor identity", &mut korteweg_identity);
    report(2, "formulation equivalence", &mut formulation_equivalence);
    let start = Instant::now();
    let runs = small_data_runs();
    println!("     (small-data runs to t = 1 took {:.1}s)", start.elapsed().as_secs_f64());
    report(3, "energy and BD-entropy inequalities", &mut || energy_inequalities(&runs));
    report(4, "mass conservation", &mut mass_conservation);
    report(5, "L^p gain bound", &mut || lp_gain(&runs));
    report(6, "heat-semigroup block decay", &mut heat_decay);
    report(7, "Littlewood-Paley suite", &mut littlewood_paley);
    report(8, "De Giorgi recursion", &mut degiorgi);
    report(9, "lifespan formula", &mut lifespan_formula);
    report(10, "Picard iteration", &mut picard);
    report(11, "vacuum monitoring", &mut vacuum_monitoring);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
