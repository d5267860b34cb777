//! Bracket saturation and the pointwise rank conditions.
//!
//! [`saturate`] grows a family of right-normed brackets `[x1, [x2, .. [xk, s]]]`
//! breadth first. A candidate is kept only when its tangent values, stacked
//! over every query and probe point, are independent of those already kept;
//! only kept elements are bracketed further. A level that keeps nothing
//! means the family is closed (at the probe resolution) and pointwise ranks
//! are final; running into the depth cap instead leaves them inconclusive.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{lie_bracket, PolyVectorField};
use crate::linalg::{numerical_rank, to_f64_vec, EchelonBasis, QMatrix};
use crate::lift::{eval_lifted, lifted_bracket, upper_pairs, vectorize, LiftedField, StatePoint};
use crate::rational::{format_rational, random_fine_rational, random_rational, Rational};
use crate::system::ControlAffineSystem;

pub const DEFAULT_TOL: f64 = 1e-8;

/// Default bracket depth cap `2N + 1`.
pub fn default_depth_cap(lifted_dim: usize) -> usize {
    2 * lifted_dim + 1
}

/// Which family of brackets to generate from `[f0, f1, .., f_mu]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketMode {
    /// `Lie(f0, .., f_mu)`.
    FullLie,
    /// Control-affine zero-time ideal `lie{ad^s f0 . f_i : s >= 0, i >= 1}`.
    ZeroTimeIdeal,
    /// `Lie(f1, .., f_mu)`.
    ControlOnly,
}

impl BracketMode {
    /// (seed generators, generators applied on the left).
    fn split(self, count: usize) -> (Vec<usize>, Vec<usize>) {
        let all: Vec<usize> = (0..count).collect();
        let controls: Vec<usize> = (1..count).collect();
        match self {
            BracketMode::FullLie => (all.clone(), all),
            BracketMode::ZeroTimeIdeal => (controls, all),
            BracketMode::ControlOnly => (controls.clone(), controls),
        }
    }
}

impl fmt::Display for BracketMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BracketMode::FullLie => "full_lie",
            BracketMode::ZeroTimeIdeal => "zero_time_ideal",
            BracketMode::ControlOnly => "control_only",
        })
    }
}

/// Bracket expression that produced a basis element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    Generator(usize),
    Bracket(Box<Provenance>, Box<Provenance>),
}

impl Provenance {
    pub fn depth(&self) -> usize {
        match self {
            Provenance::Generator(_) => 1,
            Provenance::Bracket(a, b) => a.depth() + b.depth(),
        }
    }

    /// `[f0,[f0,f1]]`-style rendering with the given generator prefix.
    pub fn render(&self, prefix: &str) -> String {
        match self {
            Provenance::Generator(i) => format!("{prefix}{i}"),
            Provenance::Bracket(a, b) => format!("[{},{}]", a.render(prefix), b.render(prefix)),
        }
    }

    /// True when the expression only uses generators accepted by `mode`.
    pub fn respects(&self, mode: BracketMode) -> bool {
        fn leaves(p: &Provenance, out: &mut Vec<usize>) {
            match p {
                Provenance::Generator(i) => out.push(*i),
                Provenance::Bracket(a, b) => {
                    leaves(a, out);
                    leaves(b, out);
                }
            }
        }
        let mut l = Vec::new();
        leaves(self, &mut l);
        match mode {
            BracketMode::FullLie => true,
            BracketMode::ControlOnly => l.iter().all(|&i| i > 0),
            BracketMode::ZeroTimeIdeal => l.iter().any(|&i| i > 0),
        }
    }
}

/// Fields closed under a bracket operation.
pub trait Bracket: Clone {
    fn bracket(&self, other: &Self) -> Result<Self>;
    fn is_zero(&self) -> bool;
}

impl Bracket for PolyVectorField {
    fn bracket(&self, other: &Self) -> Result<Self> {
        lie_bracket(self, other)
    }
    fn is_zero(&self) -> bool {
        PolyVectorField::is_zero(self)
    }
}

impl Bracket for LiftedField {
    fn bracket(&self, other: &Self) -> Result<Self> {
        lifted_bracket(self, other)
    }
    fn is_zero(&self) -> bool {
        LiftedField::is_zero(self)
    }
}

#[derive(Clone, Debug)]
pub struct BasisElement<T> {
    pub field: T,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
pub struct BracketBasis<T> {
    pub mode: BracketMode,
    pub depth_cap: usize,
    pub elements: Vec<BasisElement<T>>,
    /// Deepest bracket level that was generated.
    pub depth_used: usize,
    /// A full level produced nothing new.
    pub closed: bool,
}

/// Saturated basis with exact ranks at each query point.
#[derive(Clone, Debug)]
pub struct Saturation<T> {
    pub basis: BracketBasis<T>,
    pub ranks: Vec<usize>,
    /// Tangent values of the basis at each query point.
    pub tangents: Vec<Vec<Vec<Rational>>>,
}

/// Breadth-first bracket saturation.
///
/// `eval(field, points)` returns one vectorized tangent per point. Stops as
/// soon as every query point reaches `target`, the family closes, or
/// `depth_cap` is hit.
pub fn saturate<T, P, E>(
    generators: &[T],
    mode: BracketMode,
    depth_cap: usize,
    queries: &[P],
    probes: &[P],
    target: usize,
    eval: E,
) -> Result<Saturation<T>>
where
    T: Bracket,
    P: Clone,
    E: Fn(&T, &[P]) -> Result<Vec<Vec<Rational>>>,
{
    if depth_cap == 0 {
        return Err(Error::Invalid("depth cap must be at least 1".into()));
    }
    let points: Vec<P> = queries.iter().chain(probes).cloned().collect();
    let (seeds, left) = mode.split(generators.len());

    let mut state = SatState {
        stacked: None,
        per_query: vec![EchelonBasis::new(target); queries.len()],
        tangents: vec![Vec::new(); queries.len()],
        elements: Vec::new(),
        target,
    };

    let mut frontier: Vec<usize> = Vec::new();
    for &i in &seeds {
        let g = &generators[i];
        if g.is_zero() {
            continue;
        }
        if state.offer(g.clone(), Provenance::Generator(i), &points, &eval)? {
            frontier.push(state.elements.len() - 1);
        }
    }

    let mut depth = 1;
    let mut closed = false;
    loop {
        if state.all_reached() {
            break;
        }
        if frontier.is_empty() {
            closed = true;
            break;
        }
        if depth >= depth_cap {
            break;
        }
        depth += 1;
        let mut next = Vec::new();
        for &e in &frontier {
            for &x in &left {
                let inner = state.elements[e].field.clone();
                let candidate = generators[x].bracket(&inner)?;
                if candidate.is_zero() {
                    continue;
                }
                let prov = Provenance::Bracket(
                    Box::new(Provenance::Generator(x)),
                    Box::new(state.elements[e].provenance.clone()),
                );
                if state.offer(candidate, prov, &points, &eval)? {
                    next.push(state.elements.len() - 1);
                }
                if state.all_reached() {
                    break;
                }
            }
            if state.all_reached() {
                break;
            }
        }
        frontier = next;
    }

    let ranks = state.per_query.iter().map(EchelonBasis::rank).collect();
    Ok(Saturation {
        basis: BracketBasis {
            mode,
            depth_cap,
            elements: state.elements,
            depth_used: depth,
            closed,
        },
        ranks,
        tangents: state.tangents,
    })
}

struct SatState<T> {
    stacked: Option<EchelonBasis>,
    per_query: Vec<EchelonBasis>,
    tangents: Vec<Vec<Vec<Rational>>>,
    elements: Vec<BasisElement<T>>,
    target: usize,
}

impl<T: Clone> SatState<T> {
    fn all_reached(&self) -> bool {
        !self.per_query.is_empty() && self.per_query.iter().all(|b| b.rank() >= self.target)
    }

    fn offer<P, E>(&mut self, field: T, provenance: Provenance, points: &[P], eval: &E) -> Result<bool>
    where
        E: Fn(&T, &[P]) -> Result<Vec<Vec<Rational>>>,
    {
        let vals = eval(&field, points)?;
        if vals.iter().any(|v| v.len() != self.target) {
            return Err(Error::Dimension("tangent length differs from target".into()));
        }
        let flat: Vec<Rational> = vals.iter().flatten().cloned().collect();
        let stacked = self
            .stacked
            .get_or_insert_with(|| EchelonBasis::new(flat.len()));
        if !stacked.insert(&flat) {
            return Ok(false);
        }
        for (k, basis) in self.per_query.iter_mut().enumerate() {
            basis.insert(&vals[k]);
            self.tangents[k].push(vals[k].clone());
        }
        self.elements.push(BasisElement { field, provenance });
        Ok(true)
    }
}

/// `(f(m), Df(m) + Df(m)^T)` at each point, vectorized.
pub fn flat_tangents(f: &PolyVectorField, points: &[Vec<Rational>]) -> Result<Vec<Vec<Rational>>> {
    let n = f.dim();
    let jac = f.jacobian();
    points
        .iter()
        .map(|m| {
            let mut out = f.eval(m)?;
            let d = jac.eval(m)?;
            out.extend(upper_pairs(n).map(|(i, j)| &d[(i, j)] + &d[(j, i)]));
            Ok(out)
        })
        .collect()
}

/// Lifted tangents at each state, vectorized.
pub fn lifted_tangents(f: &LiftedField, states: &[StatePoint]) -> Result<Vec<Vec<Rational>>> {
    states
        .iter()
        .map(|x| eval_lifted(f, x).map(|t| vectorize(&t)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    Cond1,
    Cond2,
    Hormander,
    LiftedAtState,
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionId::Cond1 => "cond1",
            ConditionId::Cond2 => "cond2",
            ConditionId::Hormander => "hormander",
            ConditionId::LiftedAtState => "lifted_at_state",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    InconclusiveAtCap,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::InconclusiveAtCap => "inconclusive-at-cap",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointResult {
    pub label: String,
    pub m: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<String>>>,
    /// Exact rank over the rationals.
    pub rank: usize,
    /// Rank of the float-converted family by SVD thresholding.
    pub svd_rank: usize,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankReport {
    pub condition: ConditionId,
    pub mode: BracketMode,
    pub n: usize,
    pub target: usize,
    pub depth_cap: usize,
    pub depth_used: usize,
    pub closed: bool,
    pub tol: f64,
    pub points: Vec<PointResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generic: Option<PointResult>,
    pub basis: Vec<String>,
    pub verdict: Verdict,
}

impl RankReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn max_rank(&self) -> usize {
        self.points.iter().map(|p| p.rank).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOptions {
    /// Defaults to `2N + 1`.
    pub depth_cap: Option<usize>,
    pub tol: f64,
    /// Random probe points added to the retention test.
    pub extra_probes: usize,
    pub seed: u64,
    /// Also report the rank at a random fine-grained rational point.
    pub generic: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            depth_cap: None,
            tol: DEFAULT_TOL,
            extra_probes: 2,
            seed: 0,
            generic: false,
        }
    }
}

fn overall(points: &[PointResult]) -> Verdict {
    if points.iter().any(|p| p.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if points.iter().all(|p| p.verdict == Verdict::Pass) {
        Verdict::Pass
    } else {
        Verdict::InconclusiveAtCap
    }
}

fn verdict_for(rank: usize, target: usize, closed: bool) -> Verdict {
    if rank >= target {
        Verdict::Pass
    } else if closed {
        Verdict::Fail
    } else {
        Verdict::InconclusiveAtCap
    }
}

pub fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<Rational> {
    (0..n).map(|_| random_rational(rng, 24, 8)).collect()
}

/// `L L^T + I/4` with small random rational `L`.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> QMatrix {
    let l = QMatrix::from_fn(n, n, |_, _| random_rational(rng, 12, 6));
    let llt = l.mul(&l.transpose()).expect("square");
    llt.add(&QMatrix::identity(n).scale(&crate::rational::ratio(1, 4)))
        .expect("square")
}

pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> StatePoint {
    StatePoint::at_identity(random_point(rng, n)).with_p(random_pd(rng, n))
}

fn fine_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<Rational> {
    (0..n).map(|_| random_fine_rational(rng)).collect()
}

fn fine_state(rng: &mut ChaCha8Rng, n: usize) -> StatePoint {
    let l = QMatrix::from_fn(n, n, |_, _| random_fine_rational(rng));
    let p = l
        .mul(&l.transpose())
        .and_then(|x| x.add(&QMatrix::identity(n).scale(&crate::rational::ratio(1, 8))))
        .expect("square");
    StatePoint::at_identity(fine_point(rng, n)).with_p(p)
}

impl StatePoint {
    fn with_p(mut self, p: QMatrix) -> Self {
        self.p = p;
        self
    }
}

fn fmt_vec(v: &[Rational]) -> Vec<String> {
    v.iter().map(format_rational).collect()
}

/// (label, m, optional P) for one query point.
type Label = (String, Vec<String>, Option<Vec<Vec<String>>>);

struct Rendered {
    points: Vec<PointResult>,
    generic: Option<PointResult>,
}

fn render_results(
    labels: Vec<Label>,
    sat_ranks: &[usize],
    tangents: &[Vec<Vec<Rational>>],
    target: usize,
    closed: bool,
    tol: f64,
    has_generic: bool,
) -> Result<Rendered> {
    let mut results = Vec::with_capacity(labels.len());
    for (k, (label, m, p)) in labels.into_iter().enumerate() {
        let floats: Vec<Vec<f64>> = tangents[k].iter().map(|v| to_f64_vec(v)).collect();
        let svd_rank = numerical_rank(&floats, tol)?;
        results.push(PointResult {
            label,
            m,
            p,
            rank: sat_ranks[k],
            svd_rank,
            verdict: verdict_for(sat_ranks[k], target, closed),
        });
    }
    let generic = if has_generic { results.pop() } else { None };
    Ok(Rendered {
        points: results,
        generic,
    })
}

fn check_flat(
    sys: &ControlAffineSystem,
    points: &[Vec<Rational>],
    opts: &CheckOptions,
    mode: BracketMode,
    condition: ConditionId,
) -> Result<RankReport> {
    let n = sys.n();
    let big_n = sys.lifted_dim();
    if let Some(bad) = points.iter().find(|m| m.len() != n) {
        return Err(Error::Dimension(format!(
            "point of length {} for a system of dimension {n}",
            bad.len()
        )));
    }
    let depth_cap = opts.depth_cap.unwrap_or_else(|| default_depth_cap(big_n));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut queries: Vec<Vec<Rational>> = points.to_vec();
    let mut labels: Vec<Label> = points
        .iter()
        .map(|m| ("point".to_string(), fmt_vec(m), None))
        .collect();
    if opts.generic {
        let g = fine_point(&mut rng, n);
        labels.push(("generic".into(), fmt_vec(&g), None));
        queries.push(g);
    }
    let probes: Vec<Vec<Rational>> = (0..opts.extra_probes).map(|_| random_point(&mut rng, n)).collect();
    let gens = sys.fields();
    let sat = saturate(&gens, mode, depth_cap, &queries, &probes, big_n, flat_tangents)?;
    let rendered = render_results(
        labels,
        &sat.ranks,
        &sat.tangents,
        big_n,
        sat.basis.closed,
        opts.tol,
        opts.generic,
    )?;
    Ok(RankReport {
        condition,
        mode,
        n,
        target: big_n,
        depth_cap,
        depth_used: sat.basis.depth_used,
        closed: sat.basis.closed,
        tol: opts.tol,
        verdict: overall(&rendered.points),
        points: rendered.points,
        generic: rendered.generic,
        basis: sat
            .basis
            .elements
            .iter()
            .map(|e| e.provenance.render("f"))
            .collect(),
    })
}

/// Rank of `{(f(m), Df(m) + Df(m)^T) : f in Lie(f0, .., f_mu)}` against `N`.
pub fn check_condition_1(
    sys: &ControlAffineSystem,
    points: &[Vec<Rational>],
    opts: &CheckOptions,
) -> Result<RankReport> {
    check_flat(sys, points, opts, BracketMode::FullLie, ConditionId::Cond1)
}

/// As [`check_condition_1`] over the zero-time ideal.
pub fn check_condition_2(
    sys: &ControlAffineSystem,
    points: &[Vec<Rational>],
    opts: &CheckOptions,
) -> Result<RankReport> {
    check_flat(sys, points, opts, BracketMode::ZeroTimeIdeal, ConditionId::Cond2)
}

/// Controllability test over `Lie(f1, .., f_mu)`; passing everywhere means
/// the lifted system is controllable in free and fixed time.
pub fn check_hormander_lifted(
    sys: &ControlAffineSystem,
    points: &[Vec<Rational>],
    opts: &CheckOptions,
) -> Result<RankReport> {
    check_flat(sys, points, opts, BracketMode::ControlOnly, ConditionId::Hormander)
}

/// Saturates the lifted family `{F_{f0,g}, F_{f1}, ..}` itself and reports
/// its rank at each state.
pub fn check_rank_at_state(
    sys: &ControlAffineSystem,
    states: &[StatePoint],
    opts: &CheckOptions,
    mode: BracketMode,
) -> Result<RankReport> {
    let n = sys.n();
    let big_n = sys.lifted_dim();
    for x in states {
        if x.n() != n {
            return Err(Error::Dimension("state dimension".into()));
        }
        x.require_pd()?;
    }
    let depth_cap = opts.depth_cap.unwrap_or_else(|| default_depth_cap(big_n));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut queries: Vec<StatePoint> = states.to_vec();
    let mut labels: Vec<Label> = states
        .iter()
        .map(|x| ("state".to_string(), fmt_vec(&x.m), Some(fmt_matrix(&x.p))))
        .collect();
    if opts.generic {
        let g = fine_state(&mut rng, n);
        labels.push(("generic".into(), fmt_vec(&g.m), Some(fmt_matrix(&g.p))));
        queries.push(g);
    }
    let probes: Vec<StatePoint> = (0..opts.extra_probes).map(|_| random_state(&mut rng, n)).collect();
    let gens = sys.lifted_fields()?;
    let sat = saturate(&gens, mode, depth_cap, &queries, &probes, big_n, lifted_tangents)?;
    let rendered = render_results(
        labels,
        &sat.ranks,
        &sat.tangents,
        big_n,
        sat.basis.closed,
        opts.tol,
        opts.generic,
    )?;
    Ok(RankReport {
        condition: ConditionId::LiftedAtState,
        mode,
        n,
        target: big_n,
        depth_cap,
        depth_used: sat.basis.depth_used,
        closed: sat.basis.closed,
        tol: opts.tol,
        verdict: overall(&rendered.points),
        points: rendered.points,
        generic: rendered.generic,
        basis: sat
            .basis
            .elements
            .iter()
            .map(|e| e.provenance.render("F"))
            .collect(),
    })
}

pub fn fmt_matrix(p: &QMatrix) -> Vec<Vec<String>> {
    p.to_rows().iter().map(|r| fmt_vec(r)).collect()
}
