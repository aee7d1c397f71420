use std::collections::BTreeMap;

use gaugecraft::detect::{
    naive_rate_gap, rate_table, resonant_transitions, write_rate_csv, DetectorSpec, MATCHING_TOL,
};
use gaugecraft::dynamics::{evolve, prepare_initial, td_gauge_equivalence, uniform_grid, Trajectory};
use gaugecraft::gaugecheck::{
    ambiguity_row, converged_equivalence, gauge_unitary, write_ambiguity_csv, AmbiguityRow,
    EquivalenceReport,
};
use gaugecraft::hamiltonians::{build_time_dependent, GaugeParam, HamiltonianBundle, Longitudinal, TdGauge, Truncation};
use gaugecraft::matter::TimeProfile;
use gaugecraft::modes::{
    build_from_grid, chi_from_qnm, completeness_residual, solve_dielectric_1d, FrequencyGrid, ModeSet, PolaritonGrid,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::scenario::{single_mode_tls_parameters, Resolved};
use crate::CommandName;

pub fn dispatch(command: CommandName, cfg: &RunConfig) -> Result<u8, CliError> {
    match command {
        CommandName::Spectrum => spectrum(cfg),
        CommandName::GaugeCheck => gauge_check(cfg),
        CommandName::Detect => detect(cfg),
        CommandName::Evolve => evolve_cmd(cfg),
        CommandName::Modes => modes(cfg),
    }
}

fn core(context: &str) -> impl Fn(gaugecraft::Error) -> CliError + '_ {
    move |e| CliError::core(context, e)
}

fn write(cfg: &RunConfig, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = cfg.out_dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| CliError::output(&path, e))
}

fn write_with(
    cfg: &RunConfig,
    name: &str,
    f: impl FnOnce(&mut Vec<u8>) -> gaugecraft::Result<()>,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::output(&cfg.out_dir.join(name), to_io(e)))?;
    write(cfg, name, &buf)
}

fn to_io(e: gaugecraft::Error) -> std::io::Error {
    match e {
        gaugecraft::Error::Io(io) => io,
        other => std::io::Error::other(other.to_string()),
    }
}

fn write_metadata(cfg: &RunConfig, command: &str, mut extra: Value) -> Result<(), CliError> {
    let obj = extra.as_object_mut().expect("metadata is an object");
    obj.insert("command".into(), json!(command));
    obj.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
    obj.insert("config_hash".into(), json!(cfg.hash));
    obj.insert("seed".into(), json!(cfg.scenario().seed));
    obj.insert("effective_config".into(), cfg.document.clone());
    let mut text = serde_json::to_string_pretty(&extra).expect("JSON values serialize");
    text.push('\n');
    write(cfg, "metadata.json", text.as_bytes())
}

fn bundle_meta(b: &HamiltonianBundle) -> Value {
    for w in &b.warnings {
        log::warn!("{w}");
    }
    json!({
        "builder": b.builder,
        "gauge_theta": b.theta,
        "truncation": b.truncation,
        "fock_cutoffs": b.space().fock_cutoffs(),
        "dim": b.space().dim(),
        "coupling_strength": b.couplings.strength(),
        "couplings_commute": b.couplings.commuting(),
        "tls_couplings": b.couplings.eta.as_ref().map(|eta| eta.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>()),
        "warnings": b.warnings,
    })
}

fn scaled(cutoffs: &[usize], factor: usize) -> Vec<usize> {
    cutoffs.iter().map(|c| c * factor).collect()
}

/// Absolute spectral tolerance: the configured one times the largest mode frequency.
fn spectral_tol(r: &Resolved) -> Result<f64, CliError> {
    let ms = r.modeset()?;
    let scale = (0..ms.m()).map(|mu| ms.chi_diag(mu)).fold(0.0, f64::max);
    Ok(r.scenario.tolerances.spectral * if scale > 0.0 { scale } else { 1.0 })
}

fn spectrum(cfg: &RunConfig) -> Result<u8, CliError> {
    let r = &cfg.resolved;
    let cutoffs = r.cutoffs()?;
    let b = r.build(r.scenario.gauge_theta, &cutoffs)?;
    let s = b.spectrum().map_err(core("spectrum"))?;
    let mut csv = String::from("index,energy\n");
    for (n, e) in s.values.iter().enumerate() {
        csv.push_str(&format!("{n},{e:.15e}\n"));
    }
    write(cfg, "eigenvalues.csv", csv.as_bytes())?;
    write_metadata(cfg, "spectrum", json!({ "hamiltonian": bundle_meta(&b), "eigen_residual": s.residual(&b.h) }))?;
    println!("spectrum: {} levels, E0 = {:.12}", s.len(), s.values[0]);
    Ok(0)
}

fn gauge_check(cfg: &RunConfig) -> Result<u8, CliError> {
    let r = &cfg.resolved;
    let sc = &r.scenario;
    let gc = &sc.gauge_check;
    let cutoffs = r.cutoffs()?;
    let tol = spectral_tol(r)?;

    let tls = r.emitter()?.is_tls() && r.modeset()?.m() == 1 && sc.beyond_dipole.is_none();
    let rows: Vec<AmbiguityRow> = if tls {
        let (chi, omega0) = single_mode_tls_parameters(r)?;
        gc.eta_grid
            .par_iter()
            .map(|&eta| ambiguity_row(chi, omega0, eta, cutoffs[0], tol).map_err(core("gauge_check.eta_grid")))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };

    let build = |factor: usize| -> gaugecraft::Result<(HamiltonianBundle, HamiltonianBundle)> {
        let c = scaled(&cutoffs, factor);
        let lift = |e: CliError| match e {
            CliError::Core { source, .. } => source,
            other => gaugecraft::Error::invalid(other.to_string()),
        };
        let a = r.build(GaugeParam::COULOMB, &c).map_err(lift)?;
        let b = r.build_as(GaugeParam::MULTIPOLAR, &c, Truncation::Correct).map_err(lift)?;
        Ok((a, b))
    };
    let (a, b) = build(1).map_err(core("gauge_check"))?;
    let k = gc.k.min(a.space().dim());
    let report = converged_equivalence(build, 1, k, gc.low_fraction, tol).map_err(core("gauge_check"))?;
    let w = gauge_unitary(a.space(), &a.couplings, a.theta, b.theta).map_err(core("gauge_check"))?;
    let unitary_defect = w.unitary_deviation();
    let la = a.lowest(k).map_err(core("gauge_check"))?;
    let lb = b.lowest(k).map_err(core("gauge_check"))?;
    let mut eq = String::from("level,E_coulomb,E_multipolar,abs_diff\n");
    for n in 0..k {
        eq.push_str(&format!("{n},{:.15e},{:.15e},{:e}\n", la[n], lb[n], report.diffs[n]));
    }
    write(cfg, "equivalence.csv", eq.as_bytes())?;
    write_with(cfg, "gauge_report.csv", |buf| write_ambiguity_csv(&rows, buf))?;

    let scan_converged = rows.iter().all(|row| row.converged);
    let scan_ok = rows.iter().all(|row| row.correct_gap < tol);
    let converged = report.converged && scan_converged;
    let naive = sc.truncation == Truncation::Naive;
    let unitary_ok = unitary_defect < sc.tolerances.unitarity;
    let mut summary = summary_line(&report, &rows, tol, naive, converged, scan_ok && unitary_ok);
    if !unitary_ok {
        summary.push_str(&format!("; gauge unitary defect {unitary_defect:e}"));
    }
    write(cfg, "summary.txt", format!("{summary}\n").as_bytes())?;
    write_metadata(
        cfg,
        "gauge-check",
        json!({
            "hamiltonian": bundle_meta(&a),
            "report": report,
            "absolute_tolerance": tol,
            "gauge_unitary_defect": unitary_defect,
            "verdict": summary.split(':').next(),
        }),
    )?;
    println!("{summary}");
    if !converged {
        return Err(CliError::core(
            "gauge-check",
            gaugecraft::Error::NonConvergence(format!(
                "levels moved by tol/10 or more on doubling the cutoffs; largest residual {:e}",
                report.max_abs_diff
            )),
        ));
    }
    Ok(0)
}

fn summary_line(
    report: &EquivalenceReport,
    rows: &[AmbiguityRow],
    tol: f64,
    naive: bool,
    converged: bool,
    scan_ok: bool,
) -> String {
    let worst_scan = rows.iter().map(|r| r.correct_gap).fold(0.0, f64::max);
    let pass = report.within_tolerance && converged && scan_ok;
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut line = format!(
        "{verdict}: max |E_C - E_mp| = {:e} over {} levels at cutoffs {:?} (tol {:e})",
        report.max_abs_diff, report.k, report.cutoffs, tol
    );
    if naive {
        line.push_str(&format!("; naive truncation gap {:e}", report.max_abs_diff));
    }
    if !rows.is_empty() {
        line.push_str(&format!("; scan correct gap <= {worst_scan:e}"));
    }
    if !converged {
        line.push_str(&format!("; not converged, largest residual {:e}", report.max_abs_diff));
    }
    line
}

fn detect(cfg: &RunConfig) -> Result<u8, CliError> {
    let r = &cfg.resolved;
    let section = r.detector()?;
    let cutoffs = r.cutoffs()?;
    let ms = r.modeset()?;
    let c = r.build_as(GaugeParam::COULOMB, &cutoffs, Truncation::Correct)?;
    let m = r.build_as(GaugeParam::MULTIPOLAR, &cutoffs, Truncation::Correct)?;
    let base: DetectorSpec = section.spec(1.0)?;
    let transitions = match &section.transitions {
        Some(t) => t.clone(),
        None => {
            let search = c.space().dim().min(40);
            resonant_transitions(&c, ms, &base, section.count, search, 1e-6).map_err(core("detector"))?
        }
    };
    if transitions.is_empty() {
        return Err(CliError::config("detector.transitions", "no transitions to evaluate"));
    }
    let sc = c.spectrum().map_err(core("detect"))?;
    for &(i, j) in &transitions {
        if i >= sc.len() || j >= sc.len() {
            return Err(CliError::config("detector.transitions", format!("({i}, {j}) outside {} levels", sc.len())));
        }
        if let Some(w) = section.omega_d {
            let omega = sc.values[j] - sc.values[i];
            if (omega - w).abs() > MATCHING_TOL {
                return Err(CliError::config(
                    "detector.omega_d",
                    format!("{w} does not match transition ({i}, {j}) at {omega} within {MATCHING_TOL:e}"),
                ));
            }
        }
    }
    let rows = rate_table(&c, &m, ms, &base, &transitions).map_err(core("detect"))?;
    write_with(cfg, "rates.csv", |buf| write_rate_csv(&rows, buf))?;

    let mut naive = String::from("i,j,R_truncated,R_naive,rel_gap\n");
    for row in &rows {
        let det = base.tuned(row.omega_ij).map_err(core("detector"))?;
        let (rc, rn, gap) = naive_rate_gap(&c, ms, &det, row.i, row.j).map_err(core("detect"))?;
        naive.push_str(&format!("{},{},{rc:.15e},{rn:.15e},{gap:e}\n", row.i, row.j));
    }
    write(cfg, "naive_rates.csv", naive.as_bytes())?;
    write_metadata(
        cfg,
        "detect",
        json!({
            "coulomb": bundle_meta(&c),
            "multipolar": bundle_meta(&m),
            "transitions": transitions,
        }),
    )?;
    let worst = rows.iter().map(|r| r.rel_diff).fold(0.0, f64::max);
    println!("detect: {} transitions, max relative rate difference {worst:e}", rows.len());
    Ok(0)
}

fn evolve_cmd(cfg: &RunConfig) -> Result<u8, CliError> {
    let r = &cfg.resolved;
    let sc = &r.scenario;
    let ev = sc.evolve.as_ref().ok_or_else(|| CliError::missing("evolve"))?;
    if sc.beyond_dipole.is_some() {
        return Err(CliError::config("beyond_dipole", "evolve supports dipole scenarios only"));
    }
    if !matches!(sc.longitudinal, Longitudinal::Off) {
        return Err(CliError::config("longitudinal", "evolve does not support longitudinal modes"));
    }
    if sc.truncation == Truncation::Naive {
        return Err(CliError::config("truncation", "evolve uses the correct truncation only"));
    }
    if !(ev.t_end > 0.0) || ev.n_times == 0 {
        return Err(CliError::config("evolve", "t_end must be positive and n_times at least 1"));
    }
    let ms = r.modeset()?;
    let em = r.emitter()?;
    let cutoffs = r.cutoffs()?;
    let profile = sc.time_profile.clone().unwrap_or(TimeProfile::Constant { value: 1.0 });
    let times = uniform_grid(0.0, ev.t_end, ev.n_times);

    let (traj, deviation): (Trajectory, Option<(Vec<f64>, f64)>) = if ev.compare_gauges {
        let eq = td_gauge_equivalence(ms, em, &cutoffs, &profile, &times, ev.step, ev.initial, None)
            .map_err(core("evolve"))?;
        let traj = match ev.gauge {
            TdGauge::Coulomb => eq.coulomb,
            TdGauge::Multipolar => eq.multipolar,
        };
        (traj, Some((eq.deviations, eq.max_deviation)))
    } else {
        let h = build_time_dependent(ms, em, &cutoffs, ev.gauge, profile.clone()).map_err(core("evolve"))?;
        let hc;
        let psi0 = match ev.gauge {
            TdGauge::Coulomb => prepare_initial(&h, ev.initial, 0.0),
            TdGauge::Multipolar => {
                hc = build_time_dependent(ms, em, &cutoffs, TdGauge::Coulomb, profile.clone())
                    .map_err(core("evolve"))?;
                prepare_initial(&hc, ev.initial, 0.0).map(|psi| h.apply_gauge_unitary(0.0, &psi))
            }
        }
        .map_err(core("evolve.initial"))?;
        let obs = h.observables().map_err(core("evolve"))?;
        (evolve(&h, &psi0, &times, ev.step, &obs).map_err(core("evolve"))?, None)
    };

    write_with(cfg, "trajectory.csv", |buf| traj.write_csv(buf))?;
    if let Some((devs, _)) = &deviation {
        let mut csv = String::from("t,deviation\n");
        for (t, d) in times.iter().zip(devs) {
            csv.push_str(&format!("{t:.15e},{d:e}\n"));
        }
        write(cfg, "td_deviation.csv", csv.as_bytes())?;
    }
    if ev.dump_states {
        write_with(cfg, "states.csv", |buf| traj.write_states_csv(buf))?;
    }
    let norm_error = traj.max_norm_error();
    write_metadata(
        cfg,
        "evolve",
        json!({
            "gauge": ev.gauge,
            "profile": profile,
            "fock_cutoffs": cutoffs,
            "steps": traj.steps,
            "max_norm_error": norm_error,
            "max_gauge_deviation": deviation.as_ref().map(|d| d.1),
        }),
    )?;
    match deviation {
        Some((_, max)) => println!("evolve: {} steps, norm error {norm_error:e}, gauge deviation {max:e}", traj.steps),
        None => println!("evolve: {} steps, norm error {norm_error:e}", traj.steps),
    }
    Ok(0)
}

fn modes(cfg: &RunConfig) -> Result<u8, CliError> {
    let r = &cfg.resolved;
    let mut meta = BTreeMap::new();
    let mut wrote = false;
    if let Some(section) = r.scenario.modes.as_ref() {
        if let Some(g) = &section.grid {
            let grid = PolaritonGrid::new(g.nodes.clone(), g.projections.clone()).map_err(core("modes.grid"))?;
            let ms = build_from_grid(&grid, g.profile_points.clone()).map_err(core("modes.grid"))?;
            write_modeset(cfg, "grid_modeset", &ms)?;
            let residuals: Vec<f64> = (1..=grid.m())
                .into_par_iter()
                .map(|m| {
                    let lead = grid.leading(m);
                    let ms = build_from_grid(&lead, BTreeMap::new())?;
                    completeness_residual(&ms, &lead)
                })
                .collect::<gaugecraft::Result<_>>()
                .map_err(core("modes.grid"))?;
            let mut csv = String::from("kept_modes,residual\n");
            for (m, res) in residuals.iter().enumerate() {
                csv.push_str(&format!("{},{res:e}\n", m + 1));
            }
            write(cfg, "completeness.csv", csv.as_bytes())?;
            meta.insert("grid_orthonormality_residual", json!(grid.orthonormality_residual()));
            wrote = true;
        }
        if let Some(q) = &section.qnm {
            let freq = FrequencyGrid::lorentzian_panels(&q.qnm, q.window_gammas, q.points_per_panel)
                .map_err(core("modes.qnm"))?;
            let out = chi_from_qnm(&q.qnm, &freq).map_err(core("modes.qnm"))?;
            write_modeset(cfg, "qnm_modeset", &out.modes)?;
            let mut csv = String::from("mu,omega,gamma,quality,chi_mumu,rel_deviation\n");
            for (mu, dev) in out.deviations.iter().enumerate() {
                csv.push_str(&format!(
                    "{mu},{:.15e},{:.15e},{:.15e},{:.15e},{dev:e}\n",
                    q.qnm.omega[mu],
                    q.qnm.gamma[mu],
                    q.qnm.quality(mu),
                    out.modes.chi_diag(mu)
                ));
            }
            write(cfg, "qnm_deviation.csv", csv.as_bytes())?;
            meta.insert("qnm_frequency_nodes", json!(freq.nodes.len()));
            wrote = true;
        }
        if let Some(d) = &section.dielectric {
            let nm = solve_dielectric_1d(&d.dielectric, d.n_modes).map_err(core("modes.dielectric"))?;
            let mut csv = String::from("mode,omega\n");
            for (n, w) in nm.omegas.iter().enumerate() {
                csv.push_str(&format!("{n},{w:.15e}\n"));
            }
            write(cfg, "normal_modes.csv", csv.as_bytes())?;
            meta.insert("normal_mode_orthonormality_residual", json!(nm.orthonormality_residual()));
            wrote = true;
        }
    }
    if let Some(ms) = &r.modeset {
        write_modeset(cfg, "modeset", ms)?;
        meta.insert("off_diagonal_max", json!(ms.off_diagonal_max()));
        wrote = true;
    }
    if !wrote {
        return Err(CliError::missing("modes"));
    }
    write_metadata(cfg, "modes", json!(meta))?;
    println!("modes: wrote {}", cfg.out_dir.display());
    Ok(0)
}

/// `<stem>.json` plus the χ matrix as `<stem>_chi.csv`.
fn write_modeset(cfg: &RunConfig, stem: &str, ms: &ModeSet) -> Result<(), CliError> {
    let mut text = ms.to_json().map_err(core(stem))?;
    text.push('\n');
    write(cfg, &format!("{stem}.json"), text.as_bytes())?;
    let mut csv = String::from("row,col,re,im\n");
    for i in 0..ms.m() {
        for j in 0..ms.m() {
            let c = ms.chi()[(i, j)];
            csv.push_str(&format!("{i},{j},{:.15e},{:.15e}\n", c.re, c.im));
        }
    }
    write(cfg, &format!("{stem}_chi.csv"), csv.as_bytes())
}
