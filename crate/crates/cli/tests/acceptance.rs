//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use modalpf::{
    classic_pf, compute_normal_form, detect_resonances, eigendecompose, empirical_mode_in_state,
    integrate, mode_in_state_mc, state_in_mode_closed, state_in_mode_mc, to_modal,
    verify_conjugacy, Complex64, EigenSystem, Error, InitialConditionModel, Integrator, MultiIndex,
    ParticipationMatrix, PolynomialVectorField, SampleStream, StateMatrix,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn decompose(rows: &[Vec<f64>]) -> EigenSystem {
    eigendecompose(&StateMatrix::from_rows(rows).unwrap(), None).unwrap()
}

/// Random matrix with entries in `[-1, 1)`, `None` when the spectrum is
/// not numerically distinct.
fn random_system(rng: &mut ChaCha8Rng, n: usize) -> Option<EigenSystem> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    match eigendecompose(&StateMatrix::from_rows(&rows).unwrap(), None) {
        Ok(es) => Some(es),
        Err(Error::RepeatedEigenvalues { .. } | Error::NumericalFailure(_)) => None,
        Err(e) => panic!("unexpected {e:?}"),
    }
}

fn within_mc_band(
    est: &ParticipationMatrix,
    reference: &ParticipationMatrix,
) -> std::result::Result<f64, String> {
    let mc = est.mc().expect("Monte-Carlo estimate");
    let n = est.dim();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        for i in 0..n {
            let d = est.get(k, i) - reference.get(k, i);
            let band_re = (5.0 * mc.stderr_re[(k, i)]).max(1e-2);
            let band_im = (5.0 * mc.stderr_im[(k, i)]).max(1e-2);
            worst = worst.max(d.re.abs() / band_re).max(d.im.abs() / band_im);
            if d.re.abs() > band_re || d.im.abs() > band_im {
                return Err(format!(
                    "entry ({}, {}): estimate {} vs {} (band {band_re:.2e}/{band_im:.2e})",
                    k + 1,
                    i + 1,
                    est.get(k, i),
                    reference.get(k, i)
                ));
            }
        }
    }
    Ok(worst)
}

fn classic_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut accepted, mut rejected) = (0, 0);
    while accepted < 200 {
        let n = rng.random_range(2..=6);
        let Some(es) = random_system(&mut rng, n) else {
            rejected += 1;
            continue;
        };
        accepted += 1;
        for s in classic_pf(&es).row_sums() {
            ensure!(
                (s - c(1.0)).norm() <= 1e-9,
                "mode-in-state row sum {s} (n = {n})"
            );
        }
        let pi = state_in_mode_closed(&es).map_err(|e| e.to_string())?;
        for s in pi.column_sums() {
            ensure!(
                (s - c(1.0)).norm() <= 1e-9,
                "state-in-mode column sum {s} (n = {n})"
            );
        }
    }
    Ok(format!("{accepted} systems, {rejected} resampled"))
}

fn definition_matches_formula() -> Check {
    let mut systems = vec![decompose(&[vec![1.0, 1.0], vec![-2.0, -2.0]])];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    while systems.len() < 3 {
        if let Some(es) = random_system(&mut rng, 4) {
            systems.push(es);
        }
    }
    let stream = SampleStream::new(7, 1_000_000, true);
    let mut worst: f64 = 0.0;
    for es in &systems {
        let icm = InitialConditionModel::uniform_sphere(es.dim(), 1.0).unwrap();
        let est = mode_in_state_mc(es, &icm, &stream).map_err(|e| e.to_string())?;
        worst = worst.max(within_mc_band(&est, &classic_pf(es))?);
    }
    Ok(format!("3 systems, worst |error| / band = {worst:.3}"))
}

fn state_in_mode_oracle() -> Check {
    let es = decompose(&[vec![1.0, 1.0], vec![-2.0, -2.0]]);
    let pi = state_in_mode_closed(&es).map_err(|e| e.to_string())?;
    let oracle = [[0.8, 0.5], [0.2, 0.5]];
    for k in 0..2 {
        for i in 0..2 {
            ensure!(
                (pi.get(k, i) - c(oracle[k][i])).norm() <= 1e-12,
                "closed form ({}, {}) = {}",
                k + 1,
                i + 1,
                pi.get(k, i)
            );
        }
    }
    let mut systems = vec![es];
    // The closed form holds for distinct real eigenvalues.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    while systems.len() < 3 {
        if let Some(es) =
            random_system(&mut rng, 4).filter(|es| es.eigenvalues().iter().all(|l| l.im == 0.0))
        {
            systems.push(es);
        }
    }
    let stream = SampleStream::new(8, 1_000_000, true);
    let mut worst: f64 = 0.0;
    for es in &systems {
        let icm = InitialConditionModel::uniform_sphere(es.dim(), 1.0).unwrap();
        let est = state_in_mode_mc(es, &icm, &stream).map_err(|e| e.to_string())?;
        let closed = state_in_mode_closed(es).map_err(|e| e.to_string())?;
        worst = worst.max(within_mc_band(&est, &closed)?);
    }
    Ok(format!(
        "oracle exact, 3 systems, worst |error| / band = {worst:.3}"
    ))
}

fn brute_force(l: &[Complex64], max_order: u32, tol: f64) -> BTreeSet<(u32, usize, Vec<u32>)> {
    let n = l.len();
    let mut out = BTreeSet::new();
    let mut e = vec![0u32; n];
    loop {
        let order: u32 = e.iter().sum();
        if order >= 2 && order <= max_order {
            let dot: Complex64 = e.iter().zip(l).map(|(&p, &v)| v * p as f64).sum();
            for (s, &ls) in l.iter().enumerate() {
                if (dot - ls).norm() <= tol {
                    out.insert((order, s, e.clone()));
                }
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return out;
            }
            e[k] += 1;
            if e[k] <= max_order {
                break;
            }
            e[k] = 0;
            k += 1;
        }
    }
}

fn resonances(
    l: &[Complex64],
    max_order: u32,
) -> std::result::Result<Vec<(u32, usize, Vec<u32>)>, String> {
    let report = detect_resonances(l, max_order, 1e-9).map_err(|e| e.to_string())?;
    let found: Vec<_> = report
        .entries
        .iter()
        .map(|e| (e.order, e.mode, e.m.exponents().to_vec()))
        .collect();
    let oracle = brute_force(l, max_order, 1e-9);
    let as_set: BTreeSet<_> = found.iter().cloned().collect();
    if as_set != oracle || as_set.len() != found.len() {
        return Err(format!(
            "{l:?}: detector {found:?} vs brute force {oracle:?}"
        ));
    }
    Ok(found)
}

fn resonance_examples() -> Check {
    let found = resonances(&[c(2.0), c(1.0)], 10)?;
    ensure!(found == vec![(2, 0, vec![0, 2])], "λ = (2, 1): {found:?}");
    let found = resonances(&[c(3.0), c(2.0)], 10)?;
    ensure!(found.is_empty(), "λ = (3, 2): {found:?}");
    let found = resonances(&[c(1.0), c(-1.0)], 3)?;
    ensure!(
        found == vec![(3, 0, vec![2, 1]), (3, 1, vec![1, 2])],
        "λ = (1, -1): {found:?}"
    );
    let order3: Vec<_> = resonances(&[c(1.0), c(-1.0)], 10)?
        .into_iter()
        .filter(|r| r.0 == 3)
        .collect();
    ensure!(
        order3.len() == 2,
        "λ = (1, -1) order 3 at max order 10: {order3:?}"
    );
    for l in [
        vec![c(1.0), c(2.0), c(3.0)],
        vec![
            Complex64::new(-1.0, 2.0),
            Complex64::new(-1.0, -2.0),
            c(-3.0),
        ],
        vec![c(-1.0), c(-2.0), c(-5.0), c(-7.0)],
    ] {
        resonances(&l, 6)?;
    }
    Ok("three examples plus three brute-force spectra agree".into())
}

fn saddle() -> (PolynomialVectorField, EigenSystem) {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
    let f = PolynomialVectorField::from_real(&a, &[(1, vec![2, 0], 1.0)]).unwrap();
    (
        f,
        eigendecompose(&StateMatrix::new(a).unwrap(), None).unwrap(),
    )
}

fn worked_normal_form() -> Check {
    let (f, es) = saddle();
    let modal = to_modal(&f, &es).map_err(|e| e.to_string())?;
    let nf = compute_normal_form(&modal, 4, None).map_err(|e| e.to_string())?;
    ensure!(
        nf.is_linearizing(),
        "w has {} terms",
        nf.w.components().iter().map(|p| p.len()).sum::<usize>()
    );
    let phi = nf.phi_in_state(&es).map_err(|e| e.to_string())?;
    let coeff = phi.components()[1].coeff(&MultiIndex::new(vec![2, 0]));
    ensure!(
        (coeff - c(1.0 / 3.0)).norm() <= 1e-12,
        "coefficient {coeff}"
    );
    let extra: usize = phi.higher_order().iter().map(|p| p.len()).sum();
    ensure!(extra == 1, "{extra} nonlinear terms in the normalizing map");
    let check =
        verify_conjugacy(&f, &es, &nf, &[0.3, 0.1], 2.0, 1e-6).map_err(|e| e.to_string())?;
    ensure!(
        check.pass && check.max_residual <= 1e-6,
        "conjugacy residual {:.3e}",
        check.max_residual
    );
    Ok(format!(
        "coefficient {:.15}, conjugacy residual {:.2e}",
        coeff.re, check.max_residual
    ))
}

fn nonlinear_ladder() -> Check {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 3.0]);
    let f = PolynomialVectorField::from_real(
        &a,
        &[
            (0, vec![2, 0], 0.25),
            (0, vec![1, 1], -0.2),
            (1, vec![0, 2], 0.15),
            (1, vec![1, 1], 0.1),
        ],
    )
    .unwrap();
    let es = eigendecompose(&StateMatrix::new(a).unwrap(), None).unwrap();
    let nf = compute_normal_form(&to_modal(&f, &es).map_err(|e| e.to_string())?, 4, None)
        .map_err(|e| e.to_string())?;
    let classic = classic_pf(&es);
    let icm = InitialConditionModel::uniform_sphere(2, 1.0).unwrap();
    let stream = SampleStream::new(11, 100_000, true);
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut ladder = Vec::new();
    for eps in [0.2, 0.1, 0.05, 0.025] {
        let est =
            empirical_mode_in_state(&f, &es, &nf, &icm, eps, &stream).map_err(|e| e.to_string())?;
        let dev = est.deviation(&classic);
        let se = est.stderr().0.clone();
        if let Some((pd, ps)) = &prev {
            for j in 0..dev.len() {
                ensure!(
                    dev[j] <= pd[j] + ps[j] + se[j],
                    "ε = {eps}: deviation {} after {}",
                    dev[j],
                    pd[j]
                );
            }
        }
        ladder.push(format!("{:.1e}", dev.max()));
        prev = Some((dev, se));
    }
    let last = prev.unwrap().0.max();
    ensure!(last <= 1e-2, "final deviation {last:.3e}");
    Ok(format!("max deviation per ε: {}", ladder.join(", ")))
}

fn integrator_order() -> Check {
    let decay = PolynomialVectorField::from_real(&DMatrix::from_element(1, 1, -1.0), &[]).unwrap();
    let exact = (-1f64).exp();
    let mut errors = Vec::new();
    for dt in [0.1, 0.05, 0.025, 0.0125] {
        let traj =
            integrate(&decay, &[1.0], 1.0, dt, Integrator::Rk4).map_err(|e| e.to_string())?;
        ensure!(
            (traj.final_time() - 1.0).abs() <= 1e-12,
            "final time {}",
            traj.final_time()
        );
        errors.push((traj.final_state()[0] - exact).abs());
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    for r in &ratios {
        ensure!((12.0..=20.0).contains(r), "error ratios {ratios:?}");
    }
    let (f, _) = saddle();
    let (y0, z0) = (0.3, 0.1);
    let traj = integrate(&f, &[y0, z0], 1.0, 1e-3, Integrator::Rk4).map_err(|e| e.to_string())?;
    let e = std::f64::consts::E;
    let z1 = (z0 + y0 * y0 / 3.0) * e - (y0 * y0 / 3.0) / (e * e);
    let err = (traj.final_state()[1] - z1).abs();
    ensure!(err <= 1e-7, "z(1) error {err:.3e}");
    Ok(format!(
        "ratios {}, z(1) error {err:.1e}",
        ratios
            .iter()
            .map(|r| format!("{r:.2}"))
            .collect::<Vec<_>>()
            .join("/")
    ))
}

fn cli_determinism() -> Check {
    let systems = Path::new(env!("CARGO_MANIFEST_DIR")).join("systems");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases: [(&str, &str); 4] = [
        ("pf-mc", "coupled.toml"),
        ("pf-sim", "coupled.toml"),
        ("pf-mc", "oscillator.toml"),
        ("empirical", "triangular.toml"),
    ];
    for (cmd, file) in cases {
        for format in ["csv", "json"] {
            let mut runs = Vec::new();
            for run in 0..2 {
                let out = dir.path().join(format!("{cmd}-{file}-{run}.{format}"));
                let status = Command::new(env!("CARGO_BIN_EXE_modalpf"))
                    .arg(cmd)
                    .arg("--system")
                    .arg(systems.join(file))
                    .args([
                        "--samples",
                        "20000",
                        "--seed",
                        "5",
                        "--workers",
                        "3",
                        "--format",
                        format,
                        "--output",
                    ])
                    .arg(&out)
                    .status()
                    .map_err(|e| e.to_string())?;
                ensure!(status.success(), "{cmd} on {file} exited with {status}");
                runs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
            }
            ensure!(
                runs[0] == runs[1],
                "{cmd} {format} output differs between runs on {file}"
            );
        }
    }
    Ok("pf-mc, pf-sim, empirical: byte-identical CSV and JSON".into())
}

fn scale_invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut tested = 0;
    let mut worst: f64 = 0.0;
    while tested < 20 {
        let n = rng.random_range(2..=6);
        let Some(es) = random_system(&mut rng, n) else {
            continue;
        };
        let d: Vec<f64> = (0..n)
            .map(|_| 10f64.powf(rng.random_range(-1.0..1.0)))
            .collect();
        let a = es.matrix().as_matrix();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| d[i] * a[(i, j)] / d[j]).collect())
            .collect();
        let scaled = decompose(&rows);
        let diff = classic_pf(&es).max_abs_diff(&classic_pf(&scaled));
        ensure!(
            diff <= 1e-9,
            "classic factors moved by {diff:.3e} under D = {d:?}"
        );
        worst = worst.max(diff);
        tested += 1;
    }
    let base = state_in_mode_closed(&decompose(&[vec![1.0, 1.0], vec![-2.0, -2.0]]))
        .map_err(|e| e.to_string())?;
    let scaled = state_in_mode_closed(&decompose(&[vec![1.0, 0.5], vec![-4.0, -2.0]]))
        .map_err(|e| e.to_string())?;
    let moved = (scaled.get(0, 0) - c(16.0 / 17.0)).norm() <= 1e-12
        && (base.get(0, 0) - c(0.8)).norm() <= 1e-12;
    ensure!(
        moved,
        "state-in-mode under diag(1, 2): {} vs {}",
        scaled.get(0, 0),
        base.get(0, 0)
    );
    Ok(format!(
        "20 scalings, worst change {worst:.1e}; state-in-mode (1,1) moves 4/5 -> 16/17"
    ))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 9] = [
        (
            "classic formula invariants",
            Duration::from_secs(5),
            classic_invariants,
        ),
        (
            "Monte-Carlo definition matches formula",
            Duration::from_secs(30),
            definition_matches_formula,
        ),
        (
            "state-in-mode closed form",
            Duration::from_secs(30),
            state_in_mode_oracle,
        ),
        (
            "resonance examples",
            Duration::from_secs(1),
            resonance_examples,
        ),
        (
            "worked normal form",
            Duration::from_secs(1),
            worked_normal_form,
        ),
        (
            "nonlinear participation ladder",
            Duration::from_secs(120),
            nonlinear_ladder,
        ),
        ("integrator order", Duration::from_secs(5), integrator_order),
        ("determinism", Duration::from_secs(120), cli_determinism),
        ("scale invariance", Duration::from_secs(5), scale_invariance),
    ];
    let mut failed = 0;
    for (id, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(_) if took > *budget => Err(format!("took {took:.2?}, budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("criterion {} PASS  {name} ({took:.2?}): {detail}", id + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL  {name} ({took:.2?}): {why}", id + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
