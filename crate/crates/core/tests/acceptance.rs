//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test --test acceptance`.

mod common;

use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use statlin::biaffine::{matrix_lie_dim, psi_rank};
use statlin::field::{PolyMatrixMap, PolyVectorField};
use statlin::lift::{lift_control, lift_drift, StatePoint};
use statlin::poly::Polynomial;
use statlin::rank::{random_point, random_state, Verdict};
use statlin::rational::{from_i64, ratio};
use statlin::simulate::{
    empirical_accessibility, genericity_experiment, integrate_statlin, lyapunov_closed_form,
    CompiledSystem, ControlSignal, GenericityOptions, IntegrateOptions, MonteCarloOptions,
    ProbeOptions,
};
use statlin::{
    check_condition_1, check_condition_2, check_rank_at_state, lifted_bracket, BracketMode,
    CheckOptions, ControlAffineSystem, LiftedField, QMatrix,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Lifted field evaluated from first principles: `f(m)` and the
/// covariance part `J P + P J^T + g g^T` with `J` by central differences.
struct OracleField {
    f: PolyVectorField,
    g: Option<PolyMatrixMap>,
}

impl OracleField {
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let n = self.f.dim();
        let (m, p) = unpack(n, x);
        let v = self.f.eval_f64(&m).unwrap();
        let h = 1e-2;
        let mut j = DMatrix::zeros(n, n);
        for c in 0..n {
            let (mut a, mut b) = (m.clone(), m.clone());
            a[c] += h;
            b[c] -= h;
            let (fa, fb) = (self.f.eval_f64(&a).unwrap(), self.f.eval_f64(&b).unwrap());
            for r in 0..n {
                j[(r, c)] = (fa[r] - fb[r]) / (2.0 * h);
            }
        }
        let mut q = &j * &p + &p * j.transpose();
        if let Some(g) = &self.g {
            let gm = g.eval_f64(&m);
            q += &gm * gm.transpose();
        }
        pack(&v, &q)
    }

    fn directional(&self, x: &[f64], dir: &[f64]) -> Vec<f64> {
        let h = 1e-2;
        let a: Vec<f64> = x.iter().zip(dir).map(|(x, d)| x + h * d).collect();
        let b: Vec<f64> = x.iter().zip(dir).map(|(x, d)| x - h * d).collect();
        self.eval(&a)
            .iter()
            .zip(self.eval(&b))
            .map(|(p, q)| (p - q) / (2.0 * h))
            .collect()
    }
}

/// `[F1, F2] = dF2 . F1 - dF1 . F2` by finite differences.
fn fd_bracket(a: &OracleField, b: &OracleField, x: &[f64]) -> Vec<f64> {
    let fa = a.eval(x);
    let fb = b.eval(x);
    b.directional(x, &fa)
        .iter()
        .zip(a.directional(x, &fb))
        .map(|(p, q)| p - q)
        .collect()
}

fn eval_symbolic(f: &LiftedField, x: &[f64]) -> Vec<f64> {
    let (m, p) = unpack(f.n(), x);
    let (v, q) = f.eval_f64(&m, &p);
    pack(v.as_slice(), &q)
}

fn random_state_f64(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let m: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let p = &l * l.transpose() + DMatrix::identity(n, n) * 0.2;
    pack(&m, &p)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut comparisons = 0;
    for k in 0..50 {
        let n = 1 + k % 3;
        let m_u = 1 + k % 2;
        let sys = random_system(&mut rng, n, m_u, 2, Some(1));
        let lifted = sys.lifted_fields().unwrap();
        let oracles: Vec<OracleField> = sys
            .fields()
            .into_iter()
            .enumerate()
            .map(|(i, f)| OracleField {
                f,
                g: (i == 0).then(|| sys.diffusion().clone()),
            })
            .collect();
        let x = random_state_f64(&mut rng, n);
        for (i, j) in [(0, 1), (1, 0), (1, m_u)] {
            let sym = eval_symbolic(&lifted_bracket(&lifted[i], &lifted[j]).unwrap(), &x);
            let fd = fd_bracket(&oracles[i], &oracles[j], &x);
            let diff: Vec<f64> = sym.iter().zip(&fd).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&diff) / norm(&sym).max(1.0));
            comparisons += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-5 && secs < 10.0,
        format!("{comparisons} brackets on 50 systems, max rel err {worst:.2e}, {secs:.2} s"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut bad = Vec::new();
    for n in 1..=4usize {
        let big_n = n + n * (n + 1) / 2;
        let id = QMatrix::identity(n);
        let at_zero = psi_rank(&vec![from_i64(0); n], &id).unwrap();
        if at_zero != n * (n + 1) / 2 {
            bad.push(format!("n={n} m=0 rank {at_zero}"));
        }
        for _ in 0..20 {
            let m = random_nonzero_point(&mut rng, n);
            let r = psi_rank(&m, &id).unwrap();
            if r != big_n - 1 {
                bad.push(format!("n={n} rank {r}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bad.is_empty() && secs < 5.0,
        format!("n = 1..4, 20 points each, {} mismatches {bad:?}, {secs:.2} s", bad.len()),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut violations = 0;
    let mut min_gap = [usize::MAX; 2];
    for k in 0..20 {
        let n = 2 + k % 2;
        let m_u = 1 + (k / 2) % 2;
        let sys = random_biaffine(&mut rng, n, m_u, n).to_system();
        let points: Vec<_> = (0..10).map(|_| random_point(&mut rng, n)).collect();
        let opts = CheckOptions {
            seed: k as u64,
            ..CheckOptions::default()
        };
        for (c, report) in [
            check_condition_1(&sys, &points, &opts).unwrap(),
            check_condition_2(&sys, &points, &opts).unwrap(),
        ]
        .iter()
        .enumerate()
        {
            for p in &report.points {
                min_gap[c] = min_gap[c].min(report.target.saturating_sub(p.rank));
                if p.rank >= report.target || p.verdict != Verdict::Fail {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!(
            "20 systems x 10 points, n in {{2,3}}, {violations} violations, smallest N - rank: cond1 {}, cond2 {}",
            min_gap[0], min_gap[1]
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut details = Vec::new();
    let mut ok = true;
    let mut systems = 0;
    while systems < 3 {
        let b = random_biaffine(&mut rng, 2, 2, 2);
        let b = statlin::biaffine::BiaffineSystem::new(b.matrices().to_vec(), QMatrix::identity(2)).unwrap();
        if matrix_lie_dim(&b.matrices()[1..]).unwrap().0 != 4 {
            continue;
        }
        systems += 1;
        let states: Vec<StatePoint> = (0..100).map(|_| random_state(&mut rng, 2)).collect();
        let opts = CheckOptions {
            seed: systems as u64,
            ..CheckOptions::default()
        };
        let r = check_rank_at_state(&b.to_system(), &states, &opts, BracketMode::ZeroTimeIdeal).unwrap();
        let passes = r.points.iter().filter(|p| p.verdict == Verdict::Pass).count();
        ok &= passes >= 95;
        details.push(passes.to_string());
    }
    outcome(ok, format!("passes per 100 samples on 3 systems: {}", details.join(", ")))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut agree, mut total, mut rank_agree) = (0, 0, 0);
    let mut verdicts = [0usize; 3];
    for k in 0..30 {
        let sys = match k % 3 {
            0 => random_biaffine(&mut rng, 2, 1, 1).to_system().without_noise(),
            1 => random_system(&mut rng, 2, 1, 2, None),
            _ => random_system(&mut rng, 1 + k % 2, 1, 2, None),
        };
        let n = sys.n();
        let m = random_point(&mut rng, n);
        let opts = CheckOptions {
            seed: 1000 + k as u64,
            ..CheckOptions::default()
        };
        let at_identity = check_rank_at_state(&sys, &[StatePoint::at_identity(m.clone())], &opts, BracketMode::FullLie)
            .unwrap();
        let base = &at_identity.points[0];
        verdicts[base.verdict as usize] += 1;
        for _ in 0..10 {
            let x = StatePoint::new(m.clone(), random_state(&mut rng, n).p).unwrap();
            let r = check_rank_at_state(&sys, &[x], &opts, BracketMode::FullLie).unwrap();
            total += 1;
            agree += usize::from(r.points[0].verdict == base.verdict);
            rank_agree += usize::from(r.points[0].rank == base.rank);
        }
    }
    outcome(
        agree == total,
        format!(
            "{agree}/{total} verdicts agree ({rank_agree} ranks); base verdicts pass/fail/inconclusive = {}/{}/{}",
            verdicts[0], verdicts[1], verdicts[2]
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut mismatches = 0;
    let mut instances = 0;
    while instances < 50 {
        let n = 1 + instances % 3;
        let d = 1 + rng.random_range(0..n);
        let b = random_biaffine(&mut rng, n, 1 + instances % 2, d);
        let ggt = b.g().mul(&b.g().transpose()).unwrap();
        let f0 = PolyVectorField::linear(&b.matrices()[0]).unwrap();
        let g = PolyMatrixMap::constant(b.g(), n);
        let drift = lift_drift(&f0, &g).unwrap();
        for ai in &b.matrices()[1..] {
            if instances == 50 {
                break;
            }
            instances += 1;
            let fi = lift_control(&PolyVectorField::linear(ai).unwrap());
            let br = lifted_bracket(&drift, &fi).unwrap();
            let expected = ai.mul(&ggt).unwrap().add(&ggt.mul(&ai.transpose()).unwrap()).unwrap();
            let constant = br.b.upper().iter().all(|p| p.degree() == 0 || p.is_zero());
            let value = br.b.eval(&vec![from_i64(0); n]).unwrap();
            if !constant || value != expected {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("B-part of [F0, Fi] equals +(Ai ggT + ggT AiT) exactly on {instances} instances, {mismatches} mismatches"),
    )
}

fn smooth_system(rng: &mut ChaCha8Rng) -> ControlAffineSystem {
    let n = 2;
    let x = |i| Polynomial::var(n, i);
    let mut f0 = Vec::new();
    for i in 0..n {
        let small = random_poly(rng, n, 2, 0.8, 4, 16);
        f0.push(&small - &x(i));
    }
    let f0 = PolyVectorField::new(f0).unwrap();
    let f1 = PolyVectorField::new((0..n).map(|_| random_poly(rng, n, 1, 0.8, 4, 4)).collect()).unwrap();
    let g = random_diffusion(rng, n, n, 1);
    ControlAffineSystem::new(f0, vec![f1], g).unwrap()
}

fn random_control(rng: &mut ChaCha8Rng, pieces: usize, horizon: f64) -> ControlSignal {
    let values = (0..pieces).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
    ControlSignal::new(horizon / pieces as f64, 1, values).unwrap()
}

fn endpoint_diff(
    a: (&DVector<f64>, &DMatrix<f64>),
    b: (&DVector<f64>, &DMatrix<f64>),
) -> (f64, f64) {
    let va = pack(a.0.as_slice(), a.1);
    let vb = pack(b.0.as_slice(), b.1);
    let d: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x - y).collect();
    (norm(&d), norm(&vb))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let opts = IntegrateOptions::default();
    let mut worst: f64 = 0.0;
    let mut factors = Vec::new();
    let mut systems = 0;
    let mut rejected = 0;
    while systems < 20 {
        let sys = CompiledSystem::new(&smooth_system(&mut rng));
        let m0 = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        let p0 = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let u = random_control(&mut rng, 10, 1.0);
        let fine = u.resampled(1e-3).unwrap();
        let rk = integrate_statlin(&sys, &fine, &m0, &p0, &opts).unwrap();
        let cf = lyapunov_closed_form(&sys, &fine, &m0, &p0, &opts).unwrap();
        if !rk.completed() || cf.diagnostic.is_some() {
            rejected += 1;
            continue;
        }
        systems += 1;
        let (d, s) = endpoint_diff(
            (rk.final_mean(), rk.final_covariance()),
            (cf.final_mean(), cf.final_covariance()),
        );
        worst = worst.max(d / s);
        if systems <= 5 {
            let reference = lyapunov_closed_form(&sys, &u.refined(4000), &m0, &p0, &opts).unwrap();
            let r = (reference.final_mean(), reference.final_covariance());
            let e1 = integrate_statlin(&sys, &u, &m0, &p0, &opts).unwrap();
            let e2 = integrate_statlin(&sys, &u.refined(2), &m0, &p0, &opts).unwrap();
            let (a, _) = endpoint_diff((e1.final_mean(), e1.final_covariance()), r);
            let (b, _) = endpoint_diff((e2.final_mean(), e2.final_covariance()), r);
            factors.push(a / b);
        }
    }
    let factors_ok = factors.iter().all(|f| (8.0..=32.0).contains(f));
    let shown: Vec<String> = factors.iter().map(|f| format!("{f:.1}")).collect();
    outcome(
        worst <= 1e-5 && factors_ok,
        format!(
            "max rel endpoint diff {worst:.2e} on 20 systems ({rejected} rejected for blow-up); RK4 halving factors [{}]",
            shown.join(", ")
        ),
    )
}

fn ou_system() -> ControlAffineSystem {
    let f0 = PolyVectorField::new(vec![Polynomial::var(1, 0).scale(&from_i64(-1))]).unwrap();
    let g = PolyMatrixMap::constant(&QMatrix::from_rows(vec![vec![ratio(1, 2)]]).unwrap(), 1);
    ControlAffineSystem::new(f0, vec![], g).unwrap()
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let sys = CompiledSystem::new(&ou_system());
    let u = ControlSignal::zero(0, 2.0, 1e-3).unwrap();
    let p0 = DMatrix::from_element(1, 1, 1.0);
    let e = (-2.0f64).exp();
    let (m_exact, p_exact) = (e, e * e + 0.25 * (1.0 - e * e) / 2.0);
    let opts = IntegrateOptions::default();
    let rk = integrate_statlin(&sys, &u, &[1.0], &p0, &opts).unwrap();
    let cf = lyapunov_closed_form(&sys, &u, &[1.0], &p0, &opts).unwrap();
    let err_rk = (rk.final_mean()[0] - m_exact).abs().max((rk.final_covariance()[(0, 0)] - p_exact).abs());
    let err_cf = (cf.final_mean()[0] - m_exact).abs().max((cf.final_covariance()[(0, 0)] - p_exact).abs());
    let mc = statlin::euler_maruyama(
        &sys,
        &u,
        &[1.0],
        &p0,
        &MonteCarloOptions {
            paths: 10_000,
            seed: 8,
            record_every: 2000,
            ..MonteCarloOptions::default()
        },
    )
    .unwrap();
    let last = mc.times.len() - 1;
    let z_mean = (mc.mean[last][0] - m_exact) / mc.mean_se[last][0];
    let z_cov = (mc.covariance[last][(0, 0)] - p_exact) / mc.covariance_se[last][(0, 0)];
    let secs = start.elapsed().as_secs_f64();
    outcome(
        err_rk <= 1e-6 && err_cf <= 1e-6 && z_mean.abs() <= 4.0 && z_cov.abs() <= 4.0 && secs < 30.0,
        format!(
            "rk4 err {err_rk:.1e}, closed form err {err_cf:.1e}, MC z-scores mean {z_mean:.2} cov {z_cov:.2}, {secs:.2} s"
        ),
    )
}

fn criterion_9() -> Outcome {
    let two = 2;
    let x1 = Polynomial::var(two, 1);
    let f0 = PolyVectorField::new(vec![x1, Polynomial::zero(two)]).unwrap();
    let f1 = PolyVectorField::constant(&[from_i64(0), from_i64(1)]);
    let g = PolyMatrixMap::constant(&QMatrix::identity(two).scale(&ratio(1, 10)), two);
    let linear = CompiledSystem::new(&ControlAffineSystem::new(f0, vec![f1], g).unwrap());
    let u = ControlSignal::new(0.1, 1, (0..10).map(|k| vec![0.3 * (k as f64).sin()]).collect())
        .unwrap()
        .resampled(0.01)
        .unwrap();
    let probe = empirical_accessibility(&linear, &u, &[0.0, 0.0], &DMatrix::identity(2, 2), &ProbeOptions::default())
        .unwrap();

    let x = Polynomial::var(1, 0);
    let f0 = PolyVectorField::new(vec![&x * &x]).unwrap();
    let f1 = PolyVectorField::constant(&[from_i64(1)]);
    let g = PolyMatrixMap::constant(&QMatrix::from_rows(vec![vec![ratio(1, 10)]]).unwrap(), 1);
    let quad = CompiledSystem::new(&ControlAffineSystem::new(f0, vec![f1], g).unwrap());
    let u1 = ControlSignal::new(0.05, 1, (0..10).map(|k| vec![0.5 + 0.2 * (k as f64).cos()]).collect())
        .unwrap()
        .resampled(0.005)
        .unwrap();
    let probe1 =
        empirical_accessibility(&quad, &u1, &[0.0], &DMatrix::from_element(1, 1, 0.1), &ProbeOptions::default())
            .unwrap();
    outcome(
        !probe.inconclusive && probe.rank <= 2 && !probe1.inconclusive && probe1.rank == 2,
        format!(
            "double integrator rank {} (n = 2, N = 5), x^2 system rank {} (N = 2)",
            probe.rank, probe1.rank
        ),
    )
}

fn criterion_10() -> Outcome {
    let seed = statlin::biaffine::BiaffineSystem::new(
        vec![
            QMatrix::from_rows(vec![vec![from_i64(0), from_i64(1)], vec![from_i64(-1), from_i64(0)]]).unwrap(),
            QMatrix::from_rows(vec![vec![from_i64(1), from_i64(1)], vec![from_i64(0), from_i64(0)]]).unwrap(),
        ],
        QMatrix::identity(2),
    )
    .unwrap()
    .to_system();
    let base = GenericityOptions {
        epsilon: ratio(1, 10),
        trials: 200,
        seed: 10,
        ..GenericityOptions::default()
    };
    let quad = genericity_experiment(&seed, &GenericityOptions { degree: 2, ..base.clone() }).unwrap();
    let lin = genericity_experiment(&seed, &GenericityOptions { degree: 1, ..base }).unwrap();
    outcome(
        quad.fraction >= 0.99 && lin.fraction == 0.0,
        format!(
            "degree 2: {}/{} pass, degree 1: {}/{} pass",
            quad.passes, quad.trials, lin.passes, lin.trials
        ),
    )
}

const CLI_SPEC: &str = r#"{
  "schema": 1, "n": 1, "m_u": 1, "d": 1,
  "drift": [[{"exponents": [2], "coeff": "1"}]],
  "controls": [[[{"exponents": [0], "coeff": "1"}]]],
  "g": [["1/10"]],
  "points": [["1"], ["-1/2"]],
  "simulation": {"horizon": 0.5, "dt": 0.01, "m0": [0.0], "p0": [[0.1]], "paths": 400}
}"#;

const CLI_BIAFFINE: &str = r#"{
  "schema": 1, "n": 2, "m_u": 2, "d": 2,
  "matrices": [[["0","1"],["-1","0"]], [["1","1"],["0","0"]], [["0","0"],["1","0"]]],
  "g": [["1","0"],["0","1"]],
  "points": [["1","0"]]
}"#;

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let bia = dir.path().join("biaffine.json");
    std::fs::write(&spec, CLI_SPEC).unwrap();
    std::fs::write(&bia, CLI_BIAFFINE).unwrap();
    let s = spec.to_str().unwrap();
    let b = bia.to_str().unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["check", s, "--json"],
        vec!["check", b, "--condition", "state", "--json"],
        vec!["biaffine", b, "--samples", "20", "--seed", "3"],
        vec!["simulate", s, "--method", "mc", "--seed", "5"],
        vec!["simulate", s, "--method", "rk4"],
        vec!["genericity", b, "--trials", "10", "--seed", "2"],
    ];
    let exe = env!("CARGO_BIN_EXE_statlin");
    let mut identical = 0;
    for args in &runs {
        let out: Vec<Vec<u8>> = (0..2)
            .map(|_| Command::new(exe).args(args).env("STATLIN_SEED", "11").output().unwrap().stdout)
            .collect();
        if out[0] == out[1] && !out[0].is_empty() && serde_json::from_slice::<serde_json::Value>(&out[0]).is_ok() {
            identical += 1;
        }
    }
    outcome(
        identical == runs.len(),
        format!("{identical}/{} commands produced byte-identical JSON on repeat", runs.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("bracket oracle", criterion_1),
        ("biaffine psi ranks", criterion_2),
        ("biaffine ceiling", criterion_3),
        ("biaffine positive case", criterion_4),
        ("covariance invariance without noise", criterion_5),
        ("biaffine B-part closed form", criterion_6),
        ("dynamics cross-check", criterion_7),
        ("OU closed form and Monte Carlo", criterion_8),
        ("linear non-accessibility probe", criterion_9),
        ("genericity echo", criterion_10),
        ("CLI determinism", criterion_11),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2} {:<38} {}  {}",
            k + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
