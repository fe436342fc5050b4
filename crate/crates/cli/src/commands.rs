//! The analyses behind each subcommand.

use modalpf::dynamics::{default_integrator, default_stride, integrate_strided, Integrator};
use modalpf::normalform::{compute_normal_form_with, NormalFormOptions};
use modalpf::participation::PairSummed;
use modalpf::poly::Polynomial;
use modalpf::resonance::{self, ResonanceEntry};
use modalpf::sampling::SampleStream;
use modalpf::{
    classic_pf, eigendecompose, empirical_mode_in_state, mode_in_state_mc, mode_in_state_nonlinear,
    regime, state_in_mode_closed, state_in_mode_mc, to_modal, verify_conjugacy, Complex64,
    EigenSystem, Error, Kind, Method, NonlinearBasis, NormalFormTransform, ParticipationMatrix,
    PolynomialVectorField, Theorem,
};

use crate::config::{Command, MethodChoice, RunConfig};
use crate::error::{CliError, EXIT_ANALYSIS, EXIT_OK};
use crate::report::{fmt_complex, Cell, Grid, Report, Table};
use crate::system::SystemSpec;

/// A rendered-ready report and the exit status it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub exit_code: i32,
}

pub fn run(command: Command, spec: &SystemSpec, cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let mut report = Report::new(command.name(), &spec.name);
    report.meta("dimension", spec.dimension);
    let es = eigendecompose(&spec.state_matrix()?, cfg.tol("distinct"))?;
    let mut exit_code = EXIT_OK;
    match command {
        Command::Eig => eig(&es, &mut report),
        Command::Pf => pf(spec, &es, cfg, &mut report)?,
        Command::PfMc => pf_mc(&es, cfg, &mut report)?,
        Command::PfSim => pf_sim(&es, cfg, &mut report)?,
        Command::Resonance => resonance_report(&es, cfg, &mut report)?,
        Command::Normalform => normal_form_report(spec, &es, cfg, &mut report)?,
        Command::Simulate => simulate(spec, &es, cfg, &mut report)?,
        Command::Verify => {
            if !verify(spec, &es, cfg, &mut report)? {
                exit_code = EXIT_ANALYSIS;
            }
        }
        Command::Empirical => empirical(spec, &es, cfg, &mut report)?,
    }
    Ok(Outcome { report, exit_code })
}

fn eigenvalue_table(es: &EigenSystem) -> Table {
    let mut t = Table::new("eigenvalues", &["mode", "real", "imag", "conjugate_of"]);
    for (i, l) in es.eigenvalues().iter().enumerate() {
        let partner = es
            .conjugate_partner(i)
            .map_or(Cell::Empty, |p| (p + 1).into());
        t.push(vec![(i + 1).into(), l.re.into(), l.im.into(), partner]);
    }
    t
}

fn eig(es: &EigenSystem, report: &mut Report) {
    report.meta("biorthogonality_error", es.biorthogonality_error());
    report.meta("reconstruction_error", es.reconstruction_error());
    report.tables.push(eigenvalue_table(es));
    let n = es.dim();
    let mut right = Table::new("right_eigenvectors", &["state", "mode", "real", "imag"]);
    let mut left = Table::new("left_eigenvectors", &["mode", "state", "real", "imag"]);
    for i in 0..n {
        for k in 0..n {
            let r = es.r(k, i);
            right.push(vec![
                (k + 1).into(),
                (i + 1).into(),
                r.re.into(),
                r.im.into(),
            ]);
            let l = es.l(i, k);
            left.push(vec![
                (i + 1).into(),
                (k + 1).into(),
                l.re.into(),
                l.im.into(),
            ]);
        }
    }
    report.tables.push(right);
    report.tables.push(left);
}

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::ModeInState => "mode_in_state",
        Kind::StateInMode => "state_in_mode",
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::ClassicFormula => "classic",
        Method::ClosedFormSymmetric => "closed_form",
        Method::MonteCarlo => "monte_carlo",
    }
}

fn group_label(g: &[usize]) -> String {
    g.iter()
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join("+")
}

/// Long table with the fixed participation columns, plus a grid view.
fn participation_table(
    name: &str,
    pm: &ParticipationMatrix,
    es: &EigenSystem,
    pair_sum: bool,
) -> Table {
    let n = pm.dim();
    let labels: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    if pair_sum {
        let PairSummed {
            groups,
            values,
            stderr,
        } = pm.pair_summed(es);
        let mut t = Table::new(
            name,
            &["state", "mode", "value", "stderr", "kind", "method"],
        );
        for k in 0..n {
            for (g, members) in groups.iter().enumerate() {
                t.push(vec![
                    (k + 1).into(),
                    group_label(members).into(),
                    values[(k, g)].into(),
                    stderr.as_ref().map(|s| s[(k, g)]).into(),
                    kind_name(pm.kind()).into(),
                    method_name(pm.method()).into(),
                ]);
            }
        }
        t.grid = Some(Grid {
            corner: "state\\mode".into(),
            row_labels: labels,
            col_labels: groups.iter().map(|g| group_label(g)).collect(),
            cells: (0..n)
                .map(|k| {
                    (0..groups.len())
                        .map(|g| crate::report::fmt_num(values[(k, g)]))
                        .collect()
                })
                .collect(),
        });
        return t;
    }
    let mut t = Table::new(
        name,
        &[
            "state",
            "mode",
            "real",
            "imag",
            "stderr_real",
            "stderr_imag",
            "kind",
            "method",
        ],
    );
    for k in 0..n {
        for i in 0..n {
            let v = pm.get(k, i);
            let (se_re, se_im) = pm.mc().map_or((None, None), |mc| {
                (Some(mc.stderr_re[(k, i)]), Some(mc.stderr_im[(k, i)]))
            });
            t.push(vec![
                (k + 1).into(),
                (i + 1).into(),
                v.re.into(),
                v.im.into(),
                se_re.into(),
                se_im.into(),
                kind_name(pm.kind()).into(),
                method_name(pm.method()).into(),
            ]);
        }
    }
    t.grid = Some(Grid {
        corner: "state\\mode".into(),
        row_labels: labels,
        col_labels: (1..=n).map(|i| i.to_string()).collect(),
        cells: (0..n)
            .map(|k| {
                (0..n)
                    .map(|i| {
                        let v = pm.get(k, i);
                        fmt_complex(v.re, v.im)
                    })
                    .collect()
            })
            .collect(),
    });
    t
}

fn mc_meta(report: &mut Report, pm: &ParticipationMatrix, cfg: &RunConfig) {
    report.meta("seed", cfg.seed.to_string());
    if let Some(mc) = pm.mc() {
        report.meta("evaluations", mc.evaluations);
        report.meta("groups", mc.groups);
        report.meta("clipped_groups", mc.clipped.iter().sum::<usize>());
    }
    report.meta("antithetic", cfg.antithetic);
}

fn normal_form(
    spec: &SystemSpec,
    es: &EigenSystem,
    cfg: &RunConfig,
) -> Result<(PolynomialVectorField, NormalFormTransform), CliError> {
    let f = spec.field()?;
    let opts = NormalFormOptions {
        truncation_order: cfg.order,
        divisor_tol: cfg.tol("divisor"),
        resonance_tol: cfg.tol("resonance"),
        ..NormalFormOptions::default()
    };
    let nf = compute_normal_form_with(&to_modal(&f, es)?, &opts)?;
    Ok((f, nf))
}

fn basis_name(b: NonlinearBasis) -> String {
    match b {
        NonlinearBasis::NonResonant { max_order } => format!("nonresonant to order {max_order}"),
        NonlinearBasis::Hyperbolic => "hyperbolic equilibrium".into(),
    }
}

fn pf(
    spec: &SystemSpec,
    es: &EigenSystem,
    cfg: &RunConfig,
    report: &mut Report,
) -> Result<(), CliError> {
    let pm = if spec.is_linear() {
        classic_pf(es)
    } else {
        let (f, nf) = normal_form(spec, es, cfg)?;
        let pm = mode_in_state_nonlinear(&f, es, &nf)?;
        if let Some(b) = pm.basis() {
            report.meta("nonlinear_basis", basis_name(b));
        }
        pm
    };
    report.tables.push(eigenvalue_table(es));
    report
        .tables
        .push(participation_table("participation", &pm, es, cfg.pair_sum));
    Ok(())
}

fn pf_mc(es: &EigenSystem, cfg: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let icm = cfg.model(es.dim())?;
    let stream = SampleStream::new(cfg.seed, cfg.samples, cfg.antithetic);
    let pm = mode_in_state_mc(es, &icm, &stream)?;
    mc_meta(report, &pm, cfg);
    report
        .tables
        .push(participation_table("participation", &pm, es, cfg.pair_sum));
    report.tables.push(participation_table(
        "classic",
        &classic_pf(es),
        es,
        cfg.pair_sum,
    ));
    Ok(())
}

fn pf_sim(es: &EigenSystem, cfg: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let closed = state_in_mode_closed(es)?;
    let icm = cfg.model(es.dim())?;
    let stream = SampleStream::new(cfg.seed, cfg.samples, cfg.antithetic);
    let mc = state_in_mode_mc(es, &icm, &stream)?;
    mc_meta(report, &mc, cfg);
    report.tables.push(participation_table(
        "state_in_mode",
        &closed,
        es,
        cfg.pair_sum,
    ));
    report.tables.push(participation_table(
        "state_in_mode_mc",
        &mc,
        es,
        cfg.pair_sum,
    ));
    Ok(())
}

fn theorem_name(t: Theorem) -> &'static str {
    match t {
        Theorem::Poincare => "poincare",
        Theorem::PoincareSiegel => "poincare_siegel",
        Theorem::PoincareDulac => "poincare_dulac",
        Theorem::HartmanGrobman => "hartman_grobman",
        Theorem::None => "none",
    }
}

fn resonance_table(name: &str, entries: &[ResonanceEntry], lambdas: &[Complex64]) -> Table {
    let mut t = Table::new(
        name,
        &[
            "order",
            "mode",
            "lambda_real",
            "lambda_imag",
            "m",
            "residual",
        ],
    );
    for e in entries {
        let l = lambdas[e.mode];
        t.push(vec![
            e.order.into(),
            (e.mode + 1).into(),
            l.re.into(),
            l.im.into(),
            Cell::Ints(e.m.exponents().to_vec()),
            e.residual.into(),
        ]);
    }
    t
}

fn resonance_report(
    es: &EigenSystem,
    cfg: &RunConfig,
    report: &mut Report,
) -> Result<(), CliError> {
    let l = es.eigenvalues();
    let tol = cfg
        .tol("resonance")
        .unwrap_or_else(|| resonance::default_tol(l));
    let r = regime(l, cfg.max_order, tol, 1.0)?;
    report.meta("max_order", cfg.max_order);
    report.meta("tol", tol);
    report.meta("resonant", r.resonance.is_resonant());
    report.meta("complete", r.resonance.complete);
    report.meta("hyperbolic", r.hyperbolic);
    report.meta("poincare_domain", r.poincare_domain);
    report.meta("theorem", theorem_name(r.applicable_theorem));
    report.meta("normal_form", theorem_name(r.normal_form));
    report.meta("siegel_nu", r.siegel.nu);
    report.meta("siegel_c", r.siegel.c);
    report.tables.push(eigenvalue_table(es));
    report
        .tables
        .push(resonance_table("resonances", &r.resonance.entries, l));
    report
        .tables
        .push(resonance_table("near_resonances", &r.resonance.near, l));
    let mut s = Table::new("siegel", &["order", "min_divisor_weighted"]);
    for (o, v) in &r.siegel.per_order {
        s.push(vec![(*o).into(), (*v).into()]);
    }
    report.tables.push(s);
    for e in &r.resonance.near {
        report.warnings.push(format!(
            "near-resonance at mode {} m={} (residual {:e}) gives a small divisor",
            e.mode + 1,
            e.m,
            e.residual
        ));
    }
    Ok(())
}

fn coefficient_rows(t: &mut Table, map: &str, comps: &[Polynomial], skip_linear: bool) {
    for (s, p) in comps.iter().enumerate() {
        for (m, c) in p.terms() {
            if skip_linear && m.order() < 2 {
                continue;
            }
            t.push(vec![
                map.into(),
                (s + 1).into(),
                Cell::Ints(m.exponents().to_vec()),
                c.re.into(),
                c.im.into(),
            ]);
        }
    }
}

fn normal_form_report(
    spec: &SystemSpec,
    es: &EigenSystem,
    cfg: &RunConfig,
    report: &mut Report,
) -> Result<(), CliError> {
    let (_, nf) = normal_form(spec, es, cfg)?;
    report.meta("truncation_order", nf.truncation_order);
    report.meta("linearizing", nf.is_linearizing());
    report.meta("residual", nf.residual);
    report.meta("small_divisor_floor", nf.small_divisor_floor);
    report.meta("divisor_tol", nf.divisor_tol);
    report.meta(
        "small_divisor_terms",
        nf.retained.iter().filter(|r| !r.resonant).count(),
    );
    report.tables.push(eigenvalue_table(es));
    let columns = ["map", "component", "exponents", "real", "imag"];
    let mut state = Table::new("state_coordinates", &columns);
    coefficient_rows(
        &mut state,
        "phi",
        &nf.phi_in_state(es)?.higher_order(),
        false,
    );
    coefficient_rows(&mut state, "w", &nf.w_in_state(es)?, true);
    let mut modal = Table::new("modal_coordinates", &columns);
    coefficient_rows(&mut modal, "phi", &nf.phi.higher_order(), false);
    coefficient_rows(&mut modal, "w", nf.w.components(), true);
    report.tables.push(state);
    report.tables.push(modal);
    for r in nf.retained.iter().filter(|r| !r.resonant) {
        report.warnings.push(format!(
            "component {} m={} kept in w: divisor {:e} below {:e}",
            r.component + 1,
            r.m,
            r.divisor,
            nf.divisor_tol
        ));
    }
    Ok(())
}

fn initial_state(spec: &SystemSpec, cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let x0 = cfg
        .x0
        .clone()
        .ok_or_else(|| CliError::Config("--x0: required for this command".into()))?;
    if x0.len() != spec.dimension {
        return Err(CliError::DimensionMismatch {
            field: "--x0".into(),
            expected: spec.dimension,
            got: x0.len(),
        });
    }
    Ok(x0)
}

fn integrator(es: &EigenSystem, cfg: &RunConfig) -> Integrator {
    let rk45 = || Integrator::Rk45 {
        rtol: cfg.tol("rtol").unwrap_or(modalpf::dynamics::DEFAULT_RTOL),
        atol: cfg.tol("atol").unwrap_or(modalpf::dynamics::DEFAULT_ATOL),
    };
    match cfg.method {
        MethodChoice::Rk4 => Integrator::Rk4,
        MethodChoice::Rk45 => rk45(),
        MethodChoice::Auto => match default_integrator(es.eigenvalues()) {
            Integrator::Rk4 => Integrator::Rk4,
            Integrator::Rk45 { .. } => rk45(),
        },
    }
}

fn simulate(
    spec: &SystemSpec,
    es: &EigenSystem,
    cfg: &RunConfig,
    report: &mut Report,
) -> Result<(), CliError> {
    let x0 = initial_state(spec, cfg)?;
    let method = integrator(es, cfg);
    let stride = default_stride(es.eigenvalues(), cfg.t_end);
    let traj = integrate_strided(&spec.field()?, &x0, cfg.t_end, cfg.dt, method, stride)?;
    report.meta(
        "method",
        match method {
            Integrator::Rk4 => "rk4",
            Integrator::Rk45 { .. } => "rk45",
        },
    );
    report.meta("stored_points", traj.len());
    report.meta("stride", stride);
    report.meta("dt_min", traj.dt_stats.0);
    report.meta("dt_max", traj.dt_stats.1);
    let mut t = Table::new("trajectory", &["t", "component", "value"]);
    for (time, x) in traj.times.iter().zip(&traj.states) {
        for (k, v) in x.iter().enumerate() {
            t.push(vec![(*time).into(), (k + 1).into(), (*v).into()]);
        }
    }
    report.tables.push(t);
    Ok(())
}

fn verify(
    spec: &SystemSpec,
    es: &EigenSystem,
    cfg: &RunConfig,
    report: &mut Report,
) -> Result<bool, CliError> {
    let x0 = initial_state(spec, cfg)?;
    let (f, nf) = normal_form(spec, es, cfg)?;
    let tol = cfg.tol("conjugacy").unwrap_or(1e-6);
    let check = verify_conjugacy(&f, es, &nf, &x0, cfg.t_end, tol)?;
    report.meta("tol", tol);
    report.meta("max_residual", check.max_residual);
    report.meta("pass", check.pass);
    let mut t = Table::new("residual", &["t", "residual"]);
    for (time, r) in check.times.iter().zip(&check.residuals) {
        t.push(vec![(*time).into(), (*r).into()]);
    }
    report.tables.push(t);
    if !check.pass {
        let err = CliError::ConjugacyFailed {
            residual: check.max_residual,
            tol,
        };
        report.warnings.push(format!("{}: {err}", err.code()));
    }
    Ok(check.pass)
}

fn empirical(
    spec: &SystemSpec,
    es: &EigenSystem,
    cfg: &RunConfig,
    report: &mut Report,
) -> Result<(), CliError> {
    let (f, nf) = normal_form(spec, es, cfg)?;
    let icm = cfg.model(es.dim())?;
    let stream = SampleStream::new(cfg.seed, cfg.samples, cfg.antithetic);
    let classic = classic_pf(es);
    match mode_in_state_nonlinear(&f, es, &nf) {
        Ok(pm) => report.meta(
            "nonlinear_basis",
            basis_name(pm.basis().expect("nonlinear factors carry a basis")),
        ),
        Err(Error::RegimeNotEstablished) => {
            report.meta("nonlinear_basis", "not established");
            report.warnings.push(
                "neither nonresonance nor hyperbolicity holds; the classic values are not asserted"
                    .into(),
            );
        }
        Err(e) => return Err(e.into()),
    }
    report.meta("seed", cfg.seed.to_string());
    report.meta("antithetic", cfg.antithetic);
    let n = es.dim();
    let mut values = Table::new(
        "empirical",
        &["epsilon", "state", "mode", "value", "stderr"],
    );
    let mut summary = Table::new(
        "convergence",
        &["epsilon", "max_deviation", "max_stderr", "evaluations"],
    );
    let mut max_imag: f64 = 0.0;
    for &eps in &cfg.epsilons {
        let est = empirical_mode_in_state(&f, es, &nf, &icm, eps, &stream)?;
        let (se, _) = est.stderr();
        for k in 0..n {
            for i in 0..n {
                let v = est.values()[(k, i)];
                max_imag = max_imag.max(v.im.abs());
                values.push(vec![
                    eps.into(),
                    (k + 1).into(),
                    (i + 1).into(),
                    v.re.into(),
                    se[(k, i)].into(),
                ]);
            }
        }
        summary.push(vec![
            eps.into(),
            est.deviation(&classic).max().into(),
            se.max().into(),
            est.samples().into(),
        ]);
    }
    if max_imag > 1e-9 {
        report.warnings.push(format!(
            "estimates have imaginary parts up to {max_imag:e}; only real parts are listed"
        ));
    }
    report.tables.push(values);
    report.tables.push(summary);
    report
        .tables
        .push(participation_table("classic", &classic, es, false));
    Ok(())
}
