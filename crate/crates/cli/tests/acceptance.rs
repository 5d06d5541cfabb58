//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion; exits nonzero if any fails.
//!
//! `ACCEPTANCE_ONLY=1,7` restricts the run to the listed criteria.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use serde_json::Value;
use vlc_ee_cli::config::{ExperimentConfig, LayoutSpec, SweepConfig, SweepVariable};
use vlc_ee_cli::convergence::{run_convergence_study, ConvergenceRecord, ConvergenceResults};
use vlc_ee_cli::single::{DUMP_JSON, REPORT_JSON};
use vlc_ee_cli::sweep::run_power_sweep;
use vlc_ee_cli::RunContext;
use vlc_secure_ee::convex::program::ConstraintClass;
use vlc_secure_ee::convex::subproblem::{
    build_subproblem, solve_subproblem, Expansion, SubproblemSpec, SubproblemStatus,
};
use vlc_secure_ee::design::{dinkelbach_solve, zero_forcing_init};
use vlc_secure_ee::geometry::generate_realization;
use vlc_secure_ee::power::dc_power;
use vlc_secure_ee::secrecy::{effective_gains, secrecy_rate};
use vlc_secure_ee::{ChannelState, InitMode, Precoder, SolveReport, SolveStatus, SolverOptions, SystemConfig};

const SEED: u64 = 20_240_601;
const REALIZATIONS: usize = 200;
/// Low optical power leaves many realizations unable to meet the secrecy
/// threshold; drawing more keeps at least `REALIZATIONS` per sweep point.
const SWEEP_REALIZATIONS: usize = 400;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

// ---------------------------------------------------------------- criterion 1

/// Independent evaluation of the efficiency for two LEDs and two users.
struct TwoByTwo {
    /// `h[n][k]`
    h: [[f64; 2]; 2],
    a: [f64; 2],
    b: [f64; 2],
    budget: [f64; 2],
    p_dc: f64,
    xi: f64,
    lambda: f64,
}

impl TwoByTwo {
    fn new(ch: &ChannelState, cfg: &SystemConfig) -> Self {
        let pc = cfg.power_constants();
        let c = ch.amplitude_budget();
        Self {
            h: [[ch.h[(0, 0)], ch.h[(0, 1)]], [ch.h[(1, 0)], ch.h[(1, 1)]]],
            a: [ch.a[0], ch.a[1]],
            b: [ch.b[0], ch.b[1]],
            budget: [c[0], c[1]],
            p_dc: cfg.n_leds() as f64 * pc.led_forward_voltage * ch.i_dc[0] + pc.dc_circuitry,
            xi: pc.xi,
            lambda: cfg.secrecy.threshold,
        }
    }

    /// Efficiency of `w = [w00, w01, w10, w11]` (row-major, LED by user), or
    /// `None` outside the feasible set.
    fn ee(&self, w: &[f64; 4]) -> Option<f64> {
        for n in 0..2 {
            if w[2 * n].abs() + w[2 * n + 1].abs() > self.budget[n] * (1.0 + 1e-12) {
                return None;
            }
        }
        // g[k][i] = h_k^T w_i
        let g = |k: usize, i: usize| self.h[0][k] * w[i] + self.h[1][k] * w[2 + i];
        let half_log2 = |x: f64| 0.5 * x.log2();
        let mut sum = 0.0;
        for k in 0..2 {
            let i = 1 - k;
            let (gkk, gki, gik) = (g(k, k), g(k, i), g(i, k));
            let r = half_log2((1.0 + self.a[k] * (gkk * gkk + gki * gki)) / (1.0 + self.b[k] * gki * gki))
                - half_log2(1.0 + self.b[i] * gik * gik);
            if r < self.lambda {
                return None;
            }
            sum += r;
        }
        Some(sum / (self.p_dc + self.xi * w.iter().map(|v| v * v).sum::<f64>()))
    }

    /// Best point of the `step` lattice inside the amplitude box. Flipping the
    /// sign of a column leaves every rate unchanged, so the first row is
    /// restricted to non-negative entries.
    fn coarse_grid(&self, step: f64) -> Option<(f64, [f64; 4])> {
        let row = |c: f64, nonneg: bool| {
            let m = (c / step + 1e-9).floor() as i64;
            let lo = if nonneg { 0 } else { -m };
            let mut pts = Vec::new();
            for i in lo..=m {
                let rest = m - i.abs();
                let jlo = if nonneg { 0 } else { -rest };
                for j in jlo..=rest {
                    pts.push((i as f64 * step, j as f64 * step));
                }
            }
            pts
        };
        let (r0, r1) = (row(self.budget[0], true), row(self.budget[1], false));
        let mut best: Option<(f64, [f64; 4])> = None;
        for &(p, q) in &r0 {
            for &(s, t) in &r1 {
                let w = [p, q, s, t];
                if let Some(v) = self.ee(&w) {
                    if best.is_none_or(|(b, _)| v > b) {
                        best = Some((v, w));
                    }
                }
            }
        }
        best
    }

    /// Local lattice search with spacing `step` in a +-5 step window,
    /// re-centred until the best point is the centre.
    fn refine(&self, mut best: (f64, [f64; 4]), step: f64) -> (f64, [f64; 4]) {
        loop {
            let centre = best.1;
            for idx in 0..11usize.pow(4) {
                let mut w = centre;
                let mut r = idx;
                for v in w.iter_mut() {
                    *v += ((r % 11) as f64 - 5.0) * step;
                    r /= 11;
                }
                if let Some(v) = self.ee(&w) {
                    if v > best.0 {
                        best = (v, w);
                    }
                }
            }
            if best.1 == centre {
                return best;
            }
        }
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let cfg = SystemConfig::with_layout(1, 2, 2);
    let pc = cfg.power_constants();
    let opts = SolverOptions::default();
    let (mut lower_ok, mut upper_ok, mut local_ok, mut checked, mut skipped) = (true, true, true, 0, 0);
    let (mut worst_lattice, mut worst_polish) = (f64::NEG_INFINITY, 0.0f64);
    let (mut worst_low, mut worst_up) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut notes = Vec::new();
    let mut index = 0;
    while checked < 20 {
        let ch = generate_realization(&cfg, SEED, index).unwrap();
        index += 1;
        let oracle = TwoByTwo::new(&ch, &cfg);
        assert!((oracle.p_dc - dc_power(&ch.i_dc, &pc)).abs() < 1e-12);
        let Some(coarse) = oracle.coarse_grid(0.01) else {
            let r = dinkelbach_solve(&ch, &pc, &cfg.thresholds(), &opts).unwrap();
            if r.status == SolveStatus::Converged {
                notes.push(format!("realization {}: solver feasible where the 0.01 grid is not", index - 1));
            }
            skipped += 1;
            continue;
        };
        checked += 1;
        let fine = oracle.refine(coarse, 0.002);
        let r = dinkelbach_solve(&ch, &pc, &cfg.thresholds(), &opts).unwrap();
        if r.status != SolveStatus::Converged {
            lower_ok = false;
            notes.push(format!("realization {}: solver status {:?}", index - 1, r.status));
            continue;
        }
        let w = r.w_star.matrix();
        let ours = oracle.ee(&[w[(0, 0)], w[(0, 1)], w[(1, 0)], w[(1, 1)]]);
        let ours = ours.unwrap_or_else(|| {
            upper_ok = false;
            notes.push(format!("realization {}: solver point infeasible for the oracle", index - 1));
            r.ee_final
        });
        assert!((ours - r.ee_final).abs() <= 1e-12 * ours);
        let low = ours / coarse.0 - 1.0;
        let mut refined = fine;
        for step in REFINE_STEPS {
            refined = oracle.refine(refined, step);
        }
        let up = ours / refined.0 - 1.0;
        worst_lattice = worst_lattice.max(ours / fine.0 - 1.0);
        // no lattice neighbour of the solver point does better
        let polished = oracle.refine((ours, [w[(0, 0)], w[(0, 1)], w[(1, 0)], w[(1, 1)]]), 1e-5);
        worst_polish = worst_polish.max(polished.0 / ours - 1.0);
        local_ok &= polished.0 <= ours * (1.0 + 1e-6);
        worst_low = worst_low.min(low);
        worst_up = worst_up.max(up);
        lower_ok &= low >= -0.02;
        upper_ok &= up <= UPPER_TOL;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = lower_ok && upper_ok && local_ok && secs < 600.0 && notes.is_empty();
    verdict(
        pass,
        format!(
            "20 scenarios ({skipped} grid-infeasible skipped); worst solver/grid(0.01) - 1 = {worst_low:.3e} (>= -2e-2); \
             worst solver/refined grid - 1 = {worst_up:.3e} (<= {UPPER_TOL:e}; 0.002 lattice alone {worst_lattice:.1e}); \
             best lattice gain next to the solver point {worst_polish:.1e} (<= 1e-6); {secs:.0} s{}{}",
            if notes.is_empty() { "" } else { "; " },
            notes.join("; ")
        ),
    )
}

/// Allowed relative excess of the solver over the refined lattice optimum.
const UPPER_TOL: f64 = 1e-4;
/// Lattice spacings applied after the 0.002 pass, each re-centred on the
/// previous best.
const REFINE_STEPS: [f64; 4] = [4e-4, 8e-5, 1.6e-5, 3.2e-6];

// ------------------------------------------------------------- criteria 2-5, 8

fn study_config() -> ExperimentConfig {
    ExperimentConfig { realizations: REALIZATIONS, seed: SEED, ..ExperimentConfig::default() }
}

fn group<'a>(res: &'a ConvergenceResults, layout: &str, init: InitMode) -> Vec<&'a ConvergenceRecord> {
    res.records.iter().filter(|r| r.layout == layout && r.init == init).collect()
}

fn converged<'a>(records: &[&'a ConvergenceRecord]) -> Vec<&'a SolveReport> {
    records.iter().filter_map(|r| r.converged()).collect()
}

fn criterion_2(res: &ConvergenceResults) -> Verdict {
    let runs = group(res, "4x3", InitMode::ZeroForcing);
    let ok = converged(&runs);
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for (i, r) in ok.iter().enumerate() {
        let increasing = r.mu_trace.windows(2).all(|p| p[1] > p[0]);
        worst = worst.max(r.dinkelbach_residual.abs());
        if !increasing || r.dinkelbach_residual.abs() > 1e-4 {
            bad.push(i);
        }
    }
    verdict(
        bad.is_empty(),
        format!(
            "{} of {} runs converged; mu traces strictly increasing and |N - mu D| <= 1e-4 in all but {} (worst residual {worst:.2e})",
            ok.len(),
            runs.len(),
            bad.len()
        ),
    )
}

fn criterion_3(res: &ConvergenceResults) -> Verdict {
    let runs = group(res, "4x3", InitMode::ZeroForcing);
    let mut worst = f64::NEG_INFINITY;
    let mut steps = 0;
    for r in runs.iter().filter_map(|r| r.report.as_ref()) {
        for trace in &r.cccp_objective_traces {
            for p in trace.windows(2) {
                worst = worst.max(p[0] - p[1]);
                steps += 1;
            }
        }
    }
    verdict(
        worst <= 5e-8,
        format!("{steps} CCCP steps over {} runs; largest decrease {worst:.2e} (<= 5e-8)", runs.len()),
    )
}

fn criterion_4(res: &ConvergenceResults) -> Verdict {
    let runs = group(res, "4x3", InitMode::ZeroForcing);
    let ok = converged(&runs);
    let amp = ok.iter().map(|r| r.amplitude_residual).fold(f64::NEG_INFINITY, f64::max);
    let sec = ok.iter().flat_map(|r| r.per_user_secrecy.iter().copied()).fold(f64::INFINITY, f64::min);
    verdict(
        amp <= 1e-8 && sec >= 0.5 - 1e-6,
        format!(
            "{} converged runs; max row excess {amp:.2e} (<= 1e-8); min secrecy rate {sec:.9} (>= 0.5 - 1e-6)",
            ok.len()
        ),
    )
}

fn criterion_5(res: &ConvergenceResults, secs: f64) -> Verdict {
    let mut pass = secs < 3600.0;
    let mut parts = Vec::new();
    for layout in ["4x3", "6x4", "9x6"] {
        let row = |init| res.summary.iter().find(|s| s.layout == layout && s.init == init).unwrap();
        let (zf, rnd) = (row(InitMode::ZeroForcing), row(InitMode::RandomFeasible));
        let (z, r) = (zf.mean_iterations_to_band, rnd.mean_iterations_to_band);
        let (faster, in_range, ratio) = (z < r, (3.0..=40.0).contains(&z), r >= 2.0 * z);
        pass &= faster && in_range && ratio;
        // where the zero-forcing start sits relative to its own final efficiency
        let start: Vec<f64> = group(res, layout, InitMode::ZeroForcing)
            .iter()
            .filter_map(|r| r.converged())
            .map(|r| r.ee_trace[0] / r.ee_final)
            .collect();
        let start = start.iter().sum::<f64>() / start.len() as f64;
        parts.push(format!(
            "{layout}: ZF {z:.2} vs random {r:.2} (ZF < random {faster}, ZF in [3, 40] {in_range}, \
             random >= 2 ZF {ratio}; ZF starts at {:.1}% of its final EE; {}/{} and {}/{} converged)",
            100.0 * start,
            zf.converged,
            zf.realizations,
            rnd.converged,
            rnd.realizations,
        ));
    }
    parts.push(format!("{secs:.0} s (< 3600)"));
    verdict(pass, parts.join("; "))
}

fn criterion_8(res: &ConvergenceResults) -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;

    // tightness of every linearized constraint at its expansion point
    let mut worst_tight = 0.0f64;
    for (rows, cols, users) in [(2, 2, 3), (2, 3, 4), (3, 3, 6)] {
        let cfg = SystemConfig::with_layout(rows, cols, users);
        let pc = cfg.power_constants();
        let lambda = cfg.thresholds();
        for i in 0..20 {
            let ch = generate_realization(&cfg, SEED, i).unwrap();
            let w = zero_forcing_init(&ch).unwrap();
            let spec =
                SubproblemSpec { mu: 0.7, expansion: Expansion::tight(&w, &ch), ch: &ch, pc: &pc, lambda: &lambda };
            let sub = build_subproblem(&spec);
            let x = sub.pack(&sub.tight_point());
            for c in &sub.program.constraints {
                if matches!(c.class, ConstraintClass::LinearizedSignal | ConstraintClass::LinearizedLog) {
                    worst_tight = worst_tight.max(c.f.value(&x).abs());
                }
            }
        }
    }
    pass &= worst_tight <= 1e-12;
    notes.push(format!("linearization residual at expansion {worst_tight:.1e}"));

    // single user: scalar search along the channel direction
    let mut worst_k1 = 0.0f64;
    let cfg = SystemConfig::with_layout(2, 2, 1);
    let pc = cfg.power_constants();
    let p_dc = dc_power(&generate_realization(&cfg, SEED, 0).unwrap().i_dc, &pc);
    for i in 0..20 {
        let ch = generate_realization(&cfg, SEED, i).unwrap();
        let h: Vec<f64> = ch.channel(0);
        let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        let budget = ch.amplitude_budget();
        let hmax = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let w0 = Precoder::new(nalgebra::DMatrix::from_fn(4, 1, |n, _| 0.3 * budget[n] * h[n] / hmax));
        let c0: f64 = h.iter().zip(w0.matrix().iter()).map(|(a, b)| a * b).sum();
        let mu = 1.0;
        let spec = SubproblemSpec { mu, expansion: Expansion::tight(&w0, &ch), ch: &ch, pc: &pc, lambda: &[0.0] };
        let sol = solve_subproblem(&spec);
        let g = |s: f64| {
            let lin = ch.a[0] * (2.0 * c0 * s * hn - c0 * c0);
            if lin <= 0.0 {
                return f64::NEG_INFINITY;
            }
            0.5 * (1.0 + lin).log2() - mu * (p_dc + pc.xi * s * s)
        };
        let s_max = (0..4).map(|n| budget[n] * hn / h[n].abs()).fold(f64::INFINITY, f64::min);
        let s_min = c0 / (2.0 * hn) * (1.0 + 1e-12);
        let (s_star, g_star) = golden_max(g, s_min, s_max);
        if sol.status != SubproblemStatus::Optimal || s_star >= 0.99 * s_max {
            pass = false;
            notes.push(format!(
                "single-user case {i}: status {:?}, oracle at the boundary {}",
                sol.status,
                s_star >= 0.99 * s_max
            ));
            continue;
        }
        worst_k1 = worst_k1.max((sol.objective - g_star).abs() / g_star.abs());
    }
    pass &= worst_k1 <= 1e-4;
    notes.push(format!("single-user relative objective error {worst_k1:.1e} (<= 1e-4)"));

    // duality gap over every subproblem solved in the convergence study
    let reports: Vec<&SolveReport> = res.records.iter().filter_map(|r| r.report.as_ref()).collect();
    let solves: usize = reports.iter().map(|r| r.subproblems.solves).sum();
    let not_optimal: usize = reports.iter().map(|r| r.subproblems.not_optimal).sum();
    let gap = reports.iter().map(|r| r.subproblems.max_duality_gap).fold(0.0, f64::max);
    let kkt = reports.iter().map(|r| r.subproblems.max_kkt_residual).fold(0.0, f64::max);
    pass &= gap <= 1e-6;
    notes.push(format!(
        "{solves} subproblem solves, {not_optimal} not Optimal; max duality gap {gap:.1e} (<= 1e-6), max scaled KKT residual {kkt:.1e}"
    ));
    verdict(pass, notes.join("; "))
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-13 {
        if fa < fb {
            (lo, a, fa) = (a, b, fb);
            b = lo + g * (hi - lo);
            fb = f(b);
        } else {
            (hi, b, fb) = (b, a, fa);
            a = hi - g * (hi - lo);
            fa = f(a);
        }
    }
    let s = 0.5 * (lo + hi);
    (s, f(s))
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6(dir: &Path) -> Verdict {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        realizations: SWEEP_REALIZATIONS,
        seed: SEED,
        sweep: Some(SweepConfig { variable: SweepVariable::OpticalPowerDbm, ..SweepConfig::default() }),
        ..ExperimentConfig::default()
    };
    let res = run_power_sweep(&cfg, &RunContext::new(dir.to_path_buf(), Some(workers()))).unwrap();
    let mut pass = res.peaks.len() == 3 && res.peaks.iter().all(|p| p.interior);
    pass &= res.peaks.windows(2).all(|p| p[1].argmax >= p[0].argmax);
    let positive = res.records.iter().filter_map(|r| r.converged()).all(|r| r.ee_final > 0.0);
    pass &= positive;
    let min_n = res.rows.iter().map(|r| r.n_converged).min().unwrap_or(0);
    pass &= min_n >= REALIZATIONS;
    let peaks: Vec<String> = res
        .peaks
        .iter()
        .map(|p| format!("{} W -> {} dBm{}", p.curve, p.argmax, if p.interior { "" } else { " (edge)" }))
        .collect();
    verdict(
        pass,
        format!(
            "peaks {}; all converged EE > 0: {positive}; fewest converged realizations per point {min_n} of {SWEEP_REALIZATIONS} (>= {REALIZATIONS}); {:.0} s",
            peaks.join(", "),
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Verdict {
    let cfg = SystemConfig::with_layout(2, 2, 3);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let ch = generate_realization(&cfg, SEED, i).unwrap();
        let w = zero_forcing_init(&ch).unwrap();
        let g = effective_gains(&w, &ch);
        for k in 0..3 {
            let closed = 0.5 * (1.0 + ch.a[k] * g[(k, k)].powi(2)).log2();
            worst = worst.max((secrecy_rate(&w, &ch, k) - closed).abs() / closed);
        }
    }
    verdict(worst <= 1e-10, format!("1000 scenarios; worst relative error {worst:.2e} (<= 1e-10)"))
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9(dir: &Path) -> Verdict {
    let bin = env!("CARGO_BIN_EXE_vlc-ee");
    let mut docs = Vec::new();
    for run in ["a", "b"] {
        let out = Command::new(bin)
            .args(["single", "--seed", "7", "--dump-subproblem", "--out", run])
            .current_dir(dir)
            .env_remove(vlc_ee_cli::output::OUT_DIR_ENV)
            .output()
            .unwrap();
        if !out.status.success() {
            return verdict(false, format!("single exited with {:?}", out.status.code()));
        }
        let text = std::fs::read_to_string(dir.join(run).join(REPORT_JSON)).unwrap();
        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["report"].as_object_mut().unwrap().remove("wall_time");
        let dump = std::fs::read(dir.join(run).join(DUMP_JSON)).unwrap();
        docs.push((v, dump));
    }
    let same_report = docs[0].0 == docs[1].0;
    let same_dump = docs[0].1 == docs[1].1;
    verdict(
        same_report && same_dump,
        format!("report identical without wall_time: {same_report}; subproblem dump byte-identical: {same_dump}"),
    )
}

fn main() {
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |c: u32| only.as_ref().is_none_or(|o| o.contains(&c));
    let dir = tempfile::tempdir().unwrap();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |id, name, v: Verdict| {
        println!("criterion {id} ({name}): {} : {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };

    if wanted(1) {
        record(1, "oracle equivalence", criterion_1());
    }
    if [2, 3, 4, 5, 8].iter().any(|&c| wanted(c)) {
        let start = Instant::now();
        let mut cfg = study_config();
        if !wanted(5) {
            cfg.convergence.layouts = vec![LayoutSpec { rows: 2, cols: 2, users: 3 }];
            cfg.convergence.inits = vec![InitMode::ZeroForcing];
        }
        let res = run_convergence_study(&cfg, &RunContext::new(dir.path().join("converge"), Some(workers()))).unwrap();
        let secs = start.elapsed().as_secs_f64();
        if wanted(2) {
            record(2, "Dinkelbach monotonicity", criterion_2(&res));
        }
        if wanted(3) {
            record(3, "CCCP ascent", criterion_3(&res));
        }
        if wanted(4) {
            record(4, "feasibility", criterion_4(&res));
        }
        if wanted(5) {
            record(5, "initialization study", criterion_5(&res, secs));
        }
        if wanted(8) {
            record(8, "subproblem solver suite", criterion_8(&res));
        }
    }
    if wanted(6) {
        record(6, "power-sweep shape", criterion_6(&dir.path().join("sweep")));
    }
    if wanted(7) {
        record(7, "zero-forcing closed form", criterion_7());
    }
    if wanted(9) {
        record(9, "determinism", criterion_9(dir.path()));
    }

    results.sort_by_key(|r| r.0);
    println!();
    for (id, name, v) in &results {
        println!("{} criterion {id}: {name}", if v.pass { "PASS" } else { "FAIL" });
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
