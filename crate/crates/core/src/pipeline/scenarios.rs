use num_complex::Complex64;
use serde_json::json;

use super::config::{Scenario, ScenarioConfig};
use super::output::Table;
use super::{PipelineError, Run, StageResult};
use crate::blc::{self, BlcSpec, FitCoefficients, KSolution, RefitReport, SkRow};
use crate::diode::{large_signal_extract, DiodeTopology, LargeSignalPoint};
use crate::netalg::{mag_db, watts_to_dbm, FrequencyGrid, ScatteringMatrix};
use crate::row;
use crate::steady::{
    classify_mode, hot_s_column, integrate_to_steady, knee_power, multitone_study, power_sweep,
    CircuitNetlist, ExcitationSpec, ModeThresholds, MultitoneRow, OperatingMode, SolverConfig,
    SteadyError, SweepRow,
};
use crate::synth::design::{design_matching_networks, DesignConfig};
use crate::synth::msnc::{branch_netlist, msnc_netlist};
use crate::synth::StubTopology;
use crate::util::par_map;

/// Lower edge of the k range used for the polynomial refit.
const FIT_K_MIN: f64 = 0.05;

pub(super) fn run(scenario: Scenario, run: &mut Run) -> Result<(), PipelineError> {
    match scenario {
        Scenario::Fig4 => fig4(run),
        Scenario::Fig7 => fig7(run),
        Scenario::Fig9Impedances => fig9(run),
        Scenario::Fig10Sparams => fig10(run),
        Scenario::Fig13Efficiency => fig13(run),
        Scenario::Fig14Multitone => fig14(run),
        Scenario::Fig15Phase => fig15(run),
        Scenario::DesignFlow => design_flow(run),
    }
}

fn blc_spec(cfg: &ScenarioConfig) -> BlcSpec {
    BlcSpec {
        z0: cfg.components.z0,
        freq_design: cfg.components.f_design,
        z_source: cfg.components.z0,
    }
}

fn solver(cfg: &ScenarioConfig) -> SolverConfig {
    SolverConfig {
        jobs: cfg.jobs,
        ..cfg.solver.clone()
    }
}

pub(crate) fn mode_label(m: OperatingMode) -> &'static str {
    match m {
        OperatingMode::Rx => "rx",
        OperatingMode::PowerSaving => "power-saving",
        OperatingMode::Transition => "transition",
        OperatingMode::Tx => "tx",
    }
}

fn fmt_list(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    s.join(", ")
}

// ---------------------------------------------------------------- coupler

fn solve_k_stage(run: &mut Run, prefix: &str) -> Result<Vec<SkRow>, PipelineError> {
    run.stage("solve-k", |r| {
        let spec = blc_spec(r.cfg);
        let ks = r.cfg.k_grid.values();
        let rows = blc::s_params_vs_k(&ks, &spec)?;
        let mut z = Table::new(&[
            "k", "z_ae_re", "z_ae_im", "z_ao_re", "z_ao_im", "fit_z_ae_re", "fit_z_ae_im", "fit_z_ao_re",
            "fit_z_ao_im", "residual",
        ]);
        let mut s = Table::new(&["k", "s11_db", "s21_db", "s31_db", "s41_db"]);
        for row in &rows {
            let k = row.solution;
            let (fe, fo) = blc::evaluate_fit(k.k);
            z.push(row![k.k, k.z_ae.re, k.z_ae.im, k.z_ao.re, k.z_ao.im, fe.re, fe.im, fo.re, fo.im, k.residual]);
            s.push(row![k.k, row.s11_db, row.s21_db, row.s31_db, row.s41_db]);
        }
        r.table(&format!("{prefix}_impedances"), &z)?;
        r.table(&format!("{prefix}_sparams"), &s)?;

        let anchor = blc::solve_za_for_k(1.0, &spec)?;
        let ok = [anchor.z_ae, anchor.z_ao]
            .iter()
            .all(|z| (z.re - 50.0).abs() <= 1.0 && z.im.abs() <= 2.0);
        r.check(
            "matched-anchor",
            ok,
            format!("k = 1: Z_Ae = {:.4}, Z_Ao = {:.4} ohm", anchor.z_ae, anchor.z_ao),
        );
        r.diag("k1_solution", anchor);

        let max_s11 = rows.iter().map(|x| x.s11_db).fold(f64::NEG_INFINITY, f64::max);
        let last = rows.iter().find(|x| (x.solution.k - 1.0).abs() < 1e-9);
        let first = rows.first();
        let (ok, detail) = match (last, first) {
            (Some(l), Some(f)) => {
                let ok = max_s11 < -10.0
                    && (l.s21_db + 3.0).abs() <= 0.3
                    && (l.s31_db + 3.0).abs() <= 0.3
                    && f.s41_db >= -0.5;
                (
                    ok,
                    format!(
                        "max S11 {max_s11:.2} dB; k = 1: S21 {:.3} dB, S31 {:.3} dB; k = {}: S41 {:.3} dB",
                        l.s21_db, l.s31_db, f.solution.k, f.s41_db
                    ),
                )
            }
            _ => (false, "k grid must end at 1".to_string()),
        };
        r.check("s-vs-k", ok, detail);
        Ok(rows)
    })
}

fn refit_stage(run: &mut Run, prefix: &str, rows: &[SkRow]) -> Result<RefitReport, PipelineError> {
    run.stage("refit", |r| {
        let sols: Vec<KSolution> = rows
            .iter()
            .map(|x| x.solution)
            .filter(|s| s.k >= FIT_K_MIN - 1e-12)
            .collect();
        let rep = blc::refit(&sols)?;
        let published = FitCoefficients::published();
        let names = [
            "real_k2", "real_k1", "real_k0", "imag_k3", "imag_k2", "imag_k1", "imag_k0",
        ];
        let pubs: Vec<f64> = published
            .real_poly
            .iter()
            .chain(&published.imag_poly)
            .copied()
            .collect();
        let fits: Vec<f64> = rep
            .coefficients
            .real_poly
            .iter()
            .chain(&rep.coefficients.imag_poly)
            .copied()
            .collect();
        let mut t = Table::new(&["coefficient", "published", "refit", "relative_error"]);
        for i in 0..names.len() {
            t.push(row![
                names[i],
                pubs[i],
                fits[i],
                rep.relative_coefficient_error[i]
            ]);
        }
        r.table(&format!("{prefix}_fit"), &t)?;
        let e = &rep.relative_coefficient_error;
        let ok = e[..3].iter().all(|x| *x <= 0.15)
            && e[3..].iter().all(|x| *x <= 0.20)
            && rep.max_deviation_ohm <= 5.0;
        r.check(
            "curve-fit",
            ok,
            format!(
                "relative coefficient errors [{}], max deviation from published fit {:.3} ohm",
                fmt_list(e),
                rep.max_deviation_ohm
            ),
        );
        // Same refit over the whole unit interval, including the k = 0
        // limit where both impedances vanish; logged for comparison.
        let spec = blc_spec(r.cfg);
        let zero = Complex64::new(0.0, 0.0);
        let (_, amp) = blc::forward(&spec, zero, zero)?;
        let mut unit = vec![KSolution {
            k: 0.0,
            z_ae: zero,
            z_ao: zero,
            a1: amp.a1,
            a2: amp.a2,
            a3: amp.a3,
            a4: amp.a4,
            residual: 0.0,
        }];
        for k in blc::k_grid(0.01, 1.0, 0.01) {
            unit.push(blc::solve_za_for_k(k, &spec)?);
        }
        let full = blc::refit(&unit)?;
        r.diag("refit_unit_interval", &full.coefficients);
        Ok(rep)
    })
}

// ---------------------------------------------------------------- diode

fn diode_stage(run: &mut Run, prefix: &str) -> Result<(), PipelineError> {
    run.stage("diode-extract", |r| {
        let cfg = r.cfg;
        let f0 = cfg.frequency.f0_hz;
        let params = cfg.components.diode;
        let drives = cfg.diode_drive_dbm.values();
        let sc = SolverConfig { jobs: 1, ..cfg.solver.clone() };
        let z0 = cfg.components.z0;
        // Surface over frequency and drive: the series impedance next to the
        // admittance of the four-diode shunt bank.
        let freqs = FrequencyGrid {
            start_hz: cfg.frequency.start_hz,
            stop_hz: cfg.frequency.stop_hz,
            points: cfg.frequency.points,
        }
        .values();
        let grid: Vec<(f64, f64)> = freqs
            .iter()
            .flat_map(|&f| drives.iter().map(move |&p| (f, p)))
            .collect();
        let surface: Vec<(LargeSignalPoint, LargeSignalPoint)> = par_map(&grid, cfg.jobs, |&(f, p)| {
            let s = large_signal_extract(p, f, z0, DiodeTopology::Series, &params, &sc)?;
            let b = large_signal_extract(p, f, z0, DiodeTopology::AntiparallelPair, &params, &sc)?;
            Ok::<_, SteadyError>((s, b))
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
        let mut t = Table::new(&["freq_hz", "drive_dbm", "re_zd", "im_zd", "re_yd4", "im_yd4", "zd_mag"]);
        for (s, b) in &surface {
            let y4 = b.y_bank();
            t.push(row![s.freq, s.drive_dbm, s.z_d.re, s.z_d.im, y4.re, y4.im, s.z_d.norm()]);
        }
        r.table(&format!("{prefix}_diode"), &t)?;

        let pts: Vec<LargeSignalPoint> = par_map(&drives, cfg.jobs, |&p| {
            large_signal_extract(p, f0, z0, DiodeTopology::Series, &params, &sc)
        })
        .into_iter()
        .collect::<Result<_, _>>()?;

        // Limits: small-signal agreement, monotone compression, near short
        // at high drive.
        let small = large_signal_extract(-60.0, f0, z0, DiodeTopology::Series, &params, &sc)?;
        let analytic = params.small_signal_impedance(0.0, f0);
        let rel = (small.z_d - analytic).norm() / analytic.norm();
        let mags: Vec<f64> = pts.iter().map(|p| p.z_d.norm()).collect();
        let monotone = mags.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
        let high = *mags.last().unwrap_or(&f64::INFINITY);
        let limit = 10.0 * params.r_s;
        r.check(
            "diode-limits",
            rel < 0.01 && monotone && high < limit,
            format!(
                "small-signal deviation {:.3e}; |Z_D| monotone: {monotone}; |Z_D| at {} dBm = {high:.2} ohm (limit {limit})",
                rel,
                drives.last().copied().unwrap_or(f64::NAN)
            ),
        );
        r.diag("diode_small_signal_ohm", json!({ "extracted": small.z_d, "analytic": analytic }));
        Ok(())
    })
}

// ---------------------------------------------------------------- full circuit

fn netlist_stage(run: &mut Run, topo: &StubTopology) -> Result<CircuitNetlist, PipelineError> {
    run.stage("netlist", |r| {
        let c = r.cfg;
        let net = msnc_netlist(
            topo,
            &c.substrate,
            &c.components,
            c.frequency.f0_hz,
            c.solver.samples_per_period,
        )?;
        let errs = net.validate();
        if !errs.is_empty() {
            return Err(errs.join("; ").into());
        }
        Ok(net)
    })
}

fn sweep_stage(
    run: &mut Run,
    prefix: &str,
    net: &CircuitNetlist,
) -> Result<Vec<SweepRow>, PipelineError> {
    run.stage("power-sweep", |r| {
        let c = r.cfg;
        let rows = power_sweep(
            net,
            c.frequency.f0_hz,
            &c.power_dbm.values(),
            c.components.z0,
            &solver(c),
        )?;
        let mut t = Table::new(&[
            "p_in_dbm",
            "mode",
            "p_dc_w",
            "eta",
            "s11_db",
            "s21_db",
            "energy_imbalance",
            "drift",
            "converged",
        ]);
        for x in &rows {
            let m = mode_label(classify_mode(x.p_in_dbm, &c.thresholds));
            t.push(row![
                x.p_in_dbm,
                m,
                x.p_dc_w,
                x.eta,
                x.s11_db,
                x.s21_db,
                x.energy_imbalance,
                x.drift,
                x.converged
            ]);
        }
        r.table(&format!("{prefix}_sweep"), &t)?;
        Ok(rows)
    })
}

/// Index of the unique strict local minimum of `v` whose position
/// satisfies `inside`, provided it is also the global minimum.
pub(crate) fn unique_interior_minimum(v: &[f64], inside: impl Fn(usize) -> bool) -> Option<usize> {
    let minima: Vec<usize> = (1..v.len().saturating_sub(1))
        .filter(|&i| inside(i) && v[i] < v[i - 1] && v[i] < v[i + 1])
        .collect();
    let global = (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b]))?;
    match minima.as_slice() {
        [i] if *i == global => Some(*i),
        _ => None,
    }
}

fn modes_stage(run: &mut Run, prefix: &str, rows: &[SweepRow]) -> Result<(), PipelineError> {
    run.stage("modes", |r| {
        let th: ModeThresholds = r.cfg.thresholds;
        let mut t = Table::new(&[
            "mode",
            "p_from_dbm",
            "p_to_dbm",
            "points",
            "min_s21_db",
            "max_s21_db",
            "max_efficiency",
        ]);
        for m in [
            OperatingMode::Rx,
            OperatingMode::PowerSaving,
            OperatingMode::Transition,
            OperatingMode::Tx,
        ] {
            let sel: Vec<&SweepRow> = rows
                .iter()
                .filter(|x| classify_mode(x.p_in_dbm, &th) == m)
                .collect();
            if sel.is_empty() {
                continue;
            }
            let s21: Vec<f64> = sel.iter().map(|x| x.s21_db).collect();
            t.push(row![
                mode_label(m),
                sel[0].p_in_dbm,
                sel[sel.len() - 1].p_in_dbm,
                sel.len(),
                s21.iter().copied().fold(f64::INFINITY, f64::min),
                s21.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                sel.iter().map(|x| x.eta).fold(f64::NEG_INFINITY, f64::max)
            ]);
        }
        r.table(&format!("{prefix}_modes"), &t)?;

        let worst = rows.iter().map(|x| x.energy_imbalance).fold(0.0, f64::max);
        let all_conv = rows.iter().all(|x| x.converged);
        r.check(
            "energy-balance",
            all_conv && worst < 0.01,
            format!("all converged: {all_conv}; worst relative imbalance {worst:.3e}"),
        );

        if let Some(best) = rows.iter().max_by(|a, b| a.eta.total_cmp(&b.eta)) {
            let ok = (-20.0..=0.0).contains(&best.p_in_dbm) && (0.50..=0.85).contains(&best.eta);
            r.check(
                "efficiency-envelope",
                ok,
                format!("peak efficiency {:.4} at {} dBm", best.eta, best.p_in_dbm),
            );
            r.diag(
                "efficiency_peak",
                json!({ "p_in_dbm": best.p_in_dbm, "efficiency": best.eta }),
            );
        }

        let s21: Vec<f64> = rows.iter().map(|x| x.s21_db).collect();
        let null = unique_interior_minimum(&s21, |i| {
            classify_mode(rows[i].p_in_dbm, &th) == OperatingMode::PowerSaving
        });
        let at = |p: f64| {
            rows.iter()
                .find(|x| (x.p_in_dbm - p).abs() < 1e-9)
                .map(|x| x.s21_db)
        };
        let (lo, hi) = (at(-40.0), at(10.0));
        let edges_ok = lo.is_some_and(|v| v > -1.0) && hi.is_some_and(|v| v > -1.0);
        let null_at = null.map(|i| rows[i].p_in_dbm);
        r.check(
            "transmission-null",
            null.is_some() && edges_ok,
            format!(
                "null at {} dBm ({} dB); S21 at -40 dBm {:?} dB, at +10 dBm {:?} dB",
                null_at.map_or("none".into(), |p| p.to_string()),
                null.map_or(f64::NAN, |i| rows[i].s21_db),
                lo,
                hi
            ),
        );
        r.diag("s21_null_dbm", null_at);
        Ok(())
    })
}

fn fig4(run: &mut Run) -> Result<(), PipelineError> {
    let rows = solve_k_stage(run, "fig4")?;
    refit_stage(run, "fig4", &rows)?;
    Ok(())
}

fn fig7(run: &mut Run) -> Result<(), PipelineError> {
    diode_stage(run, "fig7")
}

/// Branch input impedance at `freq` for coupler input `drive_dbm`; the
/// coupler hands each branch half the power.
fn branch_impedance(
    cfg: &ScenarioConfig,
    freq: f64,
    drive_dbm: f64,
    sc: &SolverConfig,
) -> StageResult<Complex64> {
    let net = branch_netlist(
        &cfg.topology,
        &cfg.substrate,
        &cfg.components,
        freq,
        sc.samples_per_period,
    )?;
    let exc = ExcitationSpec {
        z_source: cfg.components.z0,
        ..ExcitationSpec::single(freq, drive_dbm - 10.0 * 2f64.log10())
    };
    let res = integrate_to_steady(&net, &exc, sc)?;
    let ph = res.port_phasor("1", freq).ok_or("missing port phasor")?;
    Ok(ph.v / ph.i)
}

fn fig9(run: &mut Run) -> Result<(), PipelineError> {
    run.stage("targets", |r| {
        let c = r.cfg;
        let spec = blc_spec(c);
        let mut t = Table::new(&[
            "drive_dbm",
            "mode",
            "k",
            "z_ae_re",
            "z_ae_im",
            "z_ao_re",
            "z_ao_im",
        ]);
        for &p in &c.drives_dbm {
            let m = classify_mode(p, &c.thresholds);
            let k = if m == OperatingMode::PowerSaving {
                c.design.k_high
            } else {
                c.design.k_low
            };
            let s = blc::solve_za_for_k(k, &spec)?;
            t.push(row![
                p,
                mode_label(m),
                k,
                s.z_ae.re,
                s.z_ae.im,
                s.z_ao.re,
                s.z_ao.im
            ]);
        }
        r.table("fig9_targets", &t)
    })?;
    run.stage("branch-impedance", |r| {
        let c = r.cfg;
        let freqs = c.frequency.values();
        let jobs: Vec<(f64, f64)> = c
            .drives_dbm
            .iter()
            .flat_map(|&p| freqs.iter().map(move |&f| (p, f)))
            .collect();
        let sc = SolverConfig {
            jobs: 1,
            ..c.solver.clone()
        };
        let zs: Vec<Complex64> = par_map(&jobs, c.jobs, |&(p, f)| branch_impedance(c, f, p, &sc))
            .into_iter()
            .collect::<StageResult<_>>()?;
        // Both mode impedances equal the branch impedance: the rectifier
        // capacitor grounds the symmetry-plane node at RF.
        let mut t = Table::new(&[
            "drive_dbm",
            "mode",
            "freq_hz",
            "z_ae_re",
            "z_ae_im",
            "z_ao_re",
            "z_ao_im",
            "gamma_mag",
        ]);
        let z0 = c.components.z0;
        for (&(p, f), z) in jobs.iter().zip(&zs) {
            let g = ((z - z0) / (z + z0)).norm();
            let m = mode_label(classify_mode(p, &c.thresholds));
            t.push(row![p, m, f, z.re, z.im, z.re, z.im, g]);
        }
        r.table("fig9_impedances", &t)
    })
}

fn drive_tag(p: f64) -> String {
    let s = format!("{}", p.abs()).replace('.', "p");
    if p < 0.0 {
        format!("m{s}dbm")
    } else {
        format!("{s}dbm")
    }
}

fn fig10(run: &mut Run) -> Result<(), PipelineError> {
    run.stage("hot-sparams", |r| {
        let c = r.cfg;
        let freqs = c.frequency.values();
        let jobs: Vec<(f64, f64)> = c
            .drives_dbm
            .iter()
            .flat_map(|&p| freqs.iter().map(move |&f| (p, f)))
            .collect();
        let sc = SolverConfig {
            jobs: 1,
            ..c.solver.clone()
        };
        let mats: Vec<ScatteringMatrix> =
            par_map(&jobs, c.jobs, |&(p, f)| -> StageResult<ScatteringMatrix> {
                let net = msnc_netlist(
                    &c.topology,
                    &c.substrate,
                    &c.components,
                    f,
                    sc.samples_per_period,
                )?;
                let mut cols = Vec::new();
                for port in ["1", "2"] {
                    let exc = ExcitationSpec {
                        z_source: c.components.z0,
                        port: port.into(),
                        ..ExcitationSpec::single(f, p)
                    };
                    let res = integrate_to_steady(&net, &exc, &sc)?;
                    cols.push(hot_s_column(&net, &res, port, f)?);
                }
                Ok(ScatteringMatrix::two_port(
                    [[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]],
                    c.components.z0,
                    f,
                ))
            })
            .into_iter()
            .collect::<StageResult<_>>()?;

        let mut t = Table::new(&[
            "drive_dbm",
            "mode",
            "freq_hz",
            "s11_db",
            "s21_db",
            "s12_db",
            "s22_db",
        ]);
        for (&(p, f), s) in jobs.iter().zip(&mats) {
            let m = mode_label(classify_mode(p, &c.thresholds));
            t.push(row![
                p,
                m,
                f,
                mag_db(s.s(1, 1)),
                mag_db(s.s(2, 1)),
                mag_db(s.s(1, 2)),
                mag_db(s.s(2, 2))
            ]);
        }
        r.table("fig10_sparams", &t)?;
        let n = freqs.len();
        for (i, &p) in c.drives_dbm.iter().enumerate() {
            r.out.touchstone(
                &format!("fig10_{}.s2p", drive_tag(p)),
                &mats[i * n..(i + 1) * n],
            )?;
        }
        Ok(())
    })
}

fn fig13(run: &mut Run) -> Result<(), PipelineError> {
    let topo = run.cfg.topology;
    let net = netlist_stage(run, &topo)?;
    let rows = sweep_stage(run, "fig13", &net)?;
    modes_stage(run, "fig13", &rows)
}

fn multitone_solver(cfg: &ScenarioConfig) -> SolverConfig {
    SolverConfig {
        samples_per_period: cfg.multitone.samples_per_period,
        ..solver(cfg)
    }
}

fn multitone_netlist(run: &mut Run) -> Result<CircuitNetlist, PipelineError> {
    run.stage("netlist", |r| {
        let c = r.cfg;
        let net = msnc_netlist(
            &c.topology,
            &c.substrate,
            &c.components,
            c.frequency.f0_hz,
            c.multitone.samples_per_period,
        )?;
        Ok(net)
    })
}

fn fig14(run: &mut Run) -> Result<(), PipelineError> {
    let net = multitone_netlist(run)?;
    let rows: Vec<MultitoneRow> = run.stage("multitone", |r| {
        let c = r.cfg;
        let sc = multitone_solver(c);
        let mut all = Vec::new();
        for &n in &c.multitone.tone_counts {
            all.extend(multitone_study(
                &net,
                n,
                &c.multitone.p_grid_w,
                &[0.0],
                c.frequency.f0_hz,
                c.multitone.spacing_hz,
                &sc,
            )?);
        }
        let mut t = Table::new(&["n_tones", "p_in_total_w", "p_dc_w", "efficiency"]);
        for x in &all {
            t.push(row![
                x.n_tones,
                x.p_in_total_w,
                x.p_dc_w,
                x.p_dc_w / x.p_in_total_w
            ]);
        }
        r.table("fig14_multitone", &t)?;
        Ok(all)
    })?;
    run.stage("knees", |r| {
        let c = r.cfg;
        let mut t = Table::new(&["n_tones", "knee_w", "knee_dbm"]);
        let mut knees = Vec::new();
        for &n in &c.multitone.tone_counts {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|x| x.n_tones == n)
                .map(|x| (x.p_in_total_w, x.p_dc_w))
                .collect();
            let k = knee_power(&pts).ok_or("too few points for a knee")?;
            t.push(row![n, k, watts_to_dbm(k)]);
            knees.push((n, k));
        }
        r.table("fig14_knees", &t)?;
        let get = |n: usize| knees.iter().find(|x| x.0 == n).map(|x| x.1);
        let (k1, k3, k5) = (get(1), get(3), get(5));
        let detail = format!("knees (W): 1 tone {k1:?}, 3 tones {k3:?}, 5 tones {k5:?}");
        match (k1, k3, k5) {
            (Some(a), Some(b), Some(cc)) => {
                r.check("multitone-knee-order", cc < b && b < a, detail)
            }
            _ => r.check(
                "multitone-knee-order",
                false,
                format!("needs tone counts 1, 3 and 5; {detail}"),
            ),
        }
        r.diag("knee_w", json!({ "1": k1, "3": k3, "5": k5 }));
        r.diag("knee_reference_w", json!({ "3": 130e-6, "5": 60e-6 }));
        Ok(())
    })
}

fn fig15(run: &mut Run) -> Result<(), PipelineError> {
    let net = multitone_netlist(run)?;
    run.stage("phase-mismatch", |r| {
        let c = r.cfg;
        let m = &c.multitone;
        let rows = multitone_study(
            &net,
            m.phase_tones,
            &[m.phase_power_w],
            &m.phase_offsets_deg,
            c.frequency.f0_hz,
            m.spacing_hz,
            &multitone_solver(c),
        )?;
        let mean = rows.iter().map(|x| x.p_dc_w).sum::<f64>() / rows.len() as f64;
        let mut t = Table::new(&[
            "phase_step_deg",
            "n_tones",
            "p_in_total_w",
            "p_dc_w",
            "relative_deviation",
        ]);
        for x in &rows {
            t.push(row![
                x.phase_step_deg,
                x.n_tones,
                x.p_in_total_w,
                x.p_dc_w,
                x.p_dc_w / mean - 1.0
            ]);
        }
        r.table("fig15_phase", &t)?;
        let max = rows
            .iter()
            .map(|x| x.p_dc_w)
            .fold(f64::NEG_INFINITY, f64::max);
        let min = rows.iter().map(|x| x.p_dc_w).fold(f64::INFINITY, f64::min);
        let spread = (max - min) / mean;
        r.check(
            "phase-insensitivity",
            spread < 0.05,
            format!("P_DC spread {:.3}% of mean {mean:.4e} W", 100.0 * spread),
        );
        r.diag("phase_spread", spread);
        Ok(())
    })
}

/// Synthesis configuration of a scenario: the configured layout and the
/// published one seed the search.
pub fn design_config(cfg: &ScenarioConfig) -> DesignConfig {
    DesignConfig {
        freq: cfg.frequency.f0_hz,
        objective: cfg.design.clone(),
        thresholds: cfg.thresholds,
        ga: crate::synth::GaConfig {
            seed: cfg.seed,
            jobs: cfg.jobs,
            ..cfg.ga.clone()
        },
        seeds: vec![cfg.topology, StubTopology::published_seed()],
        components: cfg.components.clone(),
        substrate: cfg.substrate.clone(),
        solver: cfg.solver.clone(),
    }
}

fn design_flow(run: &mut Run) -> Result<(), PipelineError> {
    let rows = solve_k_stage(run, "design_k")?;
    refit_stage(run, "design_k", &rows)?;
    diode_stage(run, "design")?;
    let topo = run.stage("synthesis", |r| {
        let dc = design_config(r.cfg);
        let rep = design_matching_networks(&dc)?;
        r.out.json("design_report.json", &rep)?;
        let mut h = Table::new(&["trial", "best_cost", "mean_cost", "generation", "diversity"]);
        for g in &rep.history {
            h.push(row![
                g.trial,
                g.best_cost,
                g.mean_cost,
                g.generation,
                g.diversity
            ]);
        }
        r.table("design_history", &h)?;
        let mut d = Table::new(&[
            "drive_dbm",
            "mode",
            "k_target",
            "gamma_target",
            "z_branch_re",
            "z_branch_im",
            "gamma_mag",
            "s11_db",
            "s21_db",
            "p_dc_w",
            "efficiency",
        ]);
        for e in &rep.drives {
            d.push(row![
                e.drive_dbm,
                mode_label(e.mode),
                e.k_target,
                e.gamma_target,
                e.z_branch.re,
                e.z_branch.im,
                e.gamma_mag,
                e.s11_db,
                e.s21_db,
                e.p_dc_w,
                e.efficiency
            ]);
        }
        r.table("design_drives", &d)?;
        let at = rep
            .drives
            .iter()
            .find(|e| (e.drive_dbm + 10.0).abs() < 1e-9)
            .map(|e| e.s11_db);
        let ok = at.map_or(rep.goal_met, |s| s <= dc.objective.s11_goal_db);
        r.check(
            "ga-goal",
            ok && rep.evaluations <= dc.ga.max_trials,
            format!(
                "S11 at -10 dBm {:?} dB after {} evaluations; best cost {:.4e}",
                at, rep.evaluations, rep.best_cost
            ),
        );
        r.diag("design_best_cost", rep.best_cost);
        Ok(rep.topology)
    })?;
    let net = netlist_stage(run, &topo)?;
    let sweep = sweep_stage(run, "design", &net)?;
    modes_stage(run, "design", &sweep)
}
