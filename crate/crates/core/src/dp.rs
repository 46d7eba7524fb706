//! Distortion-perception oracles on discrete 1-D models.
//!
//! All Wasserstein quantities here are the *squared* transport cost
//! (`W2_sq`); the perception axis of a curve is its square root.

use std::cmp::Ordering;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::audio::RandomStream;
use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;

fn total_mass(p: impl Iterator<Item = f64>) -> f64 {
    // Neumaier summation keeps large grids inside the mass tolerance.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in p {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

fn check_mass(probs: impl Iterator<Item = f64> + Clone, values: impl Iterator<Item = f64>) -> Result<()> {
    if let Some(i) = values.into_iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if probs.clone().any(|p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::Distribution("probabilities must be positive and finite".into()));
    }
    let total = total_mass(probs);
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::Distribution(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Atom>", into = "Vec<Atom>")]
pub struct DiscreteDistribution {
    atoms: Vec<Atom>,
}

impl TryFrom<Vec<Atom>> for DiscreteDistribution {
    type Error = Error;

    fn try_from(atoms: Vec<Atom>) -> Result<Self> {
        Self::new(atoms)
    }
}

impl From<DiscreteDistribution> for Vec<Atom> {
    fn from(d: DiscreteDistribution) -> Self {
        d.atoms
    }
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("distribution"));
        }
        check_mass(atoms.iter().map(|a| a.prob), atoms.iter().map(|a| a.value))?;
        Ok(Self { atoms })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(value, prob)| Atom { value, prob }).collect())
    }

    /// Equal-probability atoms at the given values.
    pub fn uniform(values: &[f64]) -> Result<Self> {
        let w = 1.0 / values.len().max(1) as f64;
        Self::new(values.iter().map(|&value| Atom { value, prob: w }).collect())
    }

    pub fn point(value: f64) -> Result<Self> {
        Self::uniform(&[value])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.value * a.prob).sum()
    }

    /// Atom indices ordered by value, ties by original index.
    pub fn sorted_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.atoms.len()).collect();
        idx.sort_by(|&a, &b| self.atoms[a].value.total_cmp(&self.atoms[b].value).then(a.cmp(&b)));
        idx
    }

    /// Left-continuous inverse CDF at `u` in (0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        let idx = self.sorted_indices();
        let mut cum = 0.0;
        for &i in &idx {
            cum += self.atoms[i].prob;
            if u <= cum {
                return self.atoms[i].value;
            }
        }
        self.atoms[*idx.last().expect("non-empty")].value
    }

    /// `n` equal-probability atoms at the mid-rank quantiles `(k + 0.5) / n`.
    pub fn resample_equal(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        let idx = self.sorted_indices();
        let mut values = Vec::with_capacity(n);
        let (mut pos, mut cum) = (0, self.atoms[idx[0]].prob);
        for k in 0..n {
            let u = (k as f64 + 0.5) / n as f64;
            while u > cum && pos + 1 < idx.len() {
                pos += 1;
                cum += self.atoms[idx[pos]].prob;
            }
            values.push(self.atoms[idx[pos]].value);
        }
        Self::uniform(&values)
    }

    /// All values multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| Atom { value: a.value * c, prob: a.prob }).collect(),
        }
    }
}

pub const DEFAULT_EQUAL_ATOMS: usize = 512;

/// One piece of a transport plan between atom `src` of the source and atom
/// `dst` of the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingEdge {
    pub src: usize,
    pub dst: usize,
    pub mass: f64,
}

/// The monotone (north-west corner) coupling on value-sorted atoms. It is
/// the optimal plan for squared cost in 1-D and splits mass wherever the
/// cumulative distributions interleave.
pub fn monotone_coupling(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Vec<CouplingEdge> {
    let (pi, qi) = (p.sorted_indices(), q.sorted_indices());
    let mut edges = Vec::with_capacity(pi.len() + qi.len());
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (p.atoms[pi[0]].prob, q.atoms[qi[0]].prob);
    loop {
        let m = ra.min(rb);
        edges.push(CouplingEdge { src: pi[i], dst: qi[j], mass: m });
        let (adv_a, adv_b) = match ra.partial_cmp(&rb) {
            Some(Ordering::Less) => (true, false),
            Some(Ordering::Greater) => (false, true),
            _ => (true, true),
        };
        ra -= m;
        rb -= m;
        if adv_a {
            i += 1;
            if i == pi.len() {
                break;
            }
            ra = p.atoms[pi[i]].prob;
        }
        if adv_b {
            j += 1;
            if j == qi.len() {
                break;
            }
            rb = q.atoms[qi[j]].prob;
        }
    }
    edges
}

fn plan_cost(p: &DiscreteDistribution, q: &DiscreteDistribution, plan: &[CouplingEdge]) -> f64 {
    plan.iter()
        .map(|e| {
            let d = p.atoms[e.src].value - q.atoms[e.dst].value;
            e.mass * d * d
        })
        .sum()
}

/// Minimal expected squared transport cost between two 1-D distributions.
pub fn wasserstein2_sq_1d(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    plan_cost(p, q, &monotone_coupling(p, q))
}

pub const BRUTE_FORCE_MAX_ATOMS: usize = 8;

/// Exact minimum squared cost over all pairings of equal-probability atoms.
/// An independent oracle for [`wasserstein2_sq_1d`].
pub fn brute_force_coupling(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    let n = p.len();
    if n > BRUTE_FORCE_MAX_ATOMS || q.len() > BRUTE_FORCE_MAX_ATOMS {
        return Err(Error::param("atoms", format!("at most {BRUTE_FORCE_MAX_ATOMS} atoms per side")));
    }
    if q.len() != n {
        return Err(Error::param("atoms", format!("unequal atom counts {n} and {}", q.len())));
    }
    let w = 1.0 / n as f64;
    if p.atoms.iter().chain(&q.atoms).any(|a| (a.prob - w).abs() > MASS_TOL) {
        return Err(Error::param("atoms", "probabilities must all equal 1/n"));
    }
    let best = (0..n)
        .permutations(n)
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| {
                    let d = p.atoms[i].value - q.atoms[j].value;
                    w * d * d
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}

/// Largest gap between the quantile functions of `p` and `q`, evaluated on
/// every piece of the merged cumulative grid.
pub fn max_quantile_deviation(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    monotone_coupling(p, q)
        .iter()
        .filter(|e| e.mass > MASS_TOL)
        .map(|e| (p.atoms[e.src].value - q.atoms[e.dst].value).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAtom {
    pub s: f64,
    pub y: f64,
    pub prob: f64,
}

/// A finite joint law of clean value `s` and observation `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointAtoms", into = "JointAtoms")]
pub struct DiscreteJointModel {
    atoms: Vec<JointAtom>,
}

#[derive(Serialize, Deserialize)]
struct JointAtoms {
    atoms: Vec<JointAtom>,
}

impl TryFrom<JointAtoms> for DiscreteJointModel {
    type Error = Error;

    fn try_from(a: JointAtoms) -> Result<Self> {
        Self::new(a.atoms)
    }
}

impl From<DiscreteJointModel> for JointAtoms {
    fn from(m: DiscreteJointModel) -> Self {
        JointAtoms { atoms: m.atoms }
    }
}

impl DiscreteJointModel {
    pub fn new(atoms: Vec<JointAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("joint model"));
        }
        check_mass(
            atoms.iter().map(|a| a.prob),
            atoms.iter().flat_map(|a| [a.s, a.y]),
        )?;
        Ok(Self { atoms })
    }

    /// Normalizes non-negative weights; zero-weight atoms are dropped.
    pub fn from_weights(triples: impl IntoIterator<Item = (f64, f64, f64)>) -> Result<Self> {
        let raw: Vec<(f64, f64, f64)> = triples.into_iter().filter(|t| t.2 > 0.0).collect();
        let total = total_mass(raw.iter().map(|t| t.2));
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Distribution("weights must have positive finite sum".into()));
        }
        Self::new(raw.into_iter().map(|(s, y, w)| JointAtom { s, y, prob: w / total }).collect())
    }

    pub fn atoms(&self) -> &[JointAtom] {
        &self.atoms
    }

    /// `s = y` with the given marginal.
    pub fn deterministic(p_s: &DiscreteDistribution) -> Self {
        Self {
            atoms: p_s.atoms.iter().map(|a| JointAtom { s: a.value, y: a.value, prob: a.prob }).collect(),
        }
    }

    /// `s` uniform on {0, 1}, `y` independent of `s` (uniform on {0, 1}).
    pub fn uninformative_binary() -> Self {
        Self {
            atoms: [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
                .iter()
                .map(|&(s, y)| JointAtom { s, y, prob: 0.25 })
                .collect(),
        }
    }

    /// `s ~ N(0, sigma_s^2)` and `n ~ N(0, sigma_n^2)` each discretized to
    /// `grid` points on `[-half_width, half_width]`, with `y = s + n` landing
    /// on the doubled grid.
    pub fn gaussian_grid(grid: usize, half_width: f64, sigma_s: f64, sigma_n: f64) -> Result<Self> {
        if grid < 2 || !(half_width > 0.0) || !(sigma_s > 0.0) || !(sigma_n > 0.0) {
            return Err(Error::param("gaussian_grid", "need grid >= 2 and positive widths"));
        }
        let step = 2.0 * half_width / (grid - 1) as f64;
        let x = |k: usize| -half_width + k as f64 * step;
        let weights = |sigma: f64| -> Vec<f64> {
            let w: Vec<f64> = (0..grid).map(|k| (-0.5 * (x(k) / sigma).powi(2)).exp()).collect();
            let t: f64 = w.iter().sum();
            w.into_iter().map(|v| v / t).collect()
        };
        let (ws, wn) = (weights(sigma_s), weights(sigma_n));
        let y = |k: usize| -2.0 * half_width + k as f64 * step;
        Self::from_weights((0..grid).flat_map(|i| {
            let (ws, wn) = (&ws, &wn);
            (0..grid).map(move |j| (x(i), y(i + j), ws[i] * wn[j]))
        }))
    }

    /// Random model on `n_s` clean and `n_y` observed values.
    pub fn random(stream: &mut RandomStream, n_s: usize, n_y: usize) -> Result<Self> {
        let s: Vec<f64> = (0..n_s).map(|_| stream.uniform_range(-2.0, 2.0)).collect();
        let y: Vec<f64> = (0..n_y).map(|_| stream.uniform_range(-2.0, 2.0)).collect();
        let mut triples = Vec::with_capacity(n_s * n_y);
        for &sv in &s {
            for &yv in &y {
                triples.push((sv, yv, stream.uniform() + 1e-3));
            }
        }
        Self::from_weights(triples)
    }

    /// All `s` and `y` values multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| JointAtom { s: a.s * c, y: a.y * c, prob: a.prob }).collect(),
        }
    }

    pub fn marginal_s(&self) -> DiscreteDistribution {
        DiscreteDistribution {
            atoms: self.atoms.iter().map(|a| Atom { value: a.s, prob: a.prob }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorGroup {
    pub y: f64,
    pub p_y: f64,
    pub s_star: f64,
    /// Indices into the model atoms sharing this `y`.
    #[serde(skip)]
    pub members: Vec<usize>,
}

/// Posterior means per distinct `y` (sorted), with the induced law of `s*`
/// whose atom `g` belongs to group `g`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorMean {
    pub groups: Vec<PosteriorGroup>,
    pub p_s_star: DiscreteDistribution,
}

impl PosteriorMean {
    pub fn s_star(&self, y: f64) -> Option<f64> {
        self.groups
            .binary_search_by(|g| g.y.total_cmp(&y))
            .ok()
            .map(|g| self.groups[g].s_star)
    }
}

pub fn posterior_mean(model: &DiscreteJointModel) -> PosteriorMean {
    let mut idx: Vec<usize> = (0..model.atoms.len()).collect();
    // Signed zeros compare equal as observations.
    let key = |i: usize| model.atoms[i].y + 0.0;
    idx.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let mut groups: Vec<PosteriorGroup> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if g.y.to_bits() == key(i).to_bits() => g.members.push(i),
            _ => groups.push(PosteriorGroup { y: key(i), p_y: 0.0, s_star: 0.0, members: vec![i] }),
        }
    }
    for g in &mut groups {
        g.p_y = g.members.iter().map(|&i| model.atoms[i].prob).sum();
        g.s_star = g.members.iter().map(|&i| model.atoms[i].s * model.atoms[i].prob).sum::<f64>() / g.p_y;
    }
    let p_s_star = DiscreteDistribution {
        atoms: groups.iter().map(|g| Atom { value: g.s_star, prob: g.p_y }).collect(),
    };
    PosteriorMean { groups, p_s_star }
}

/// `E[(s - E[s|y])^2]`.
pub fn mmse_distortion(model: &DiscreteJointModel) -> f64 {
    let pm = posterior_mean(model);
    pm.groups
        .iter()
        .flat_map(|g| g.members.iter().map(move |&i| (i, g.s_star)))
        .map(|(i, s_star)| {
            let a = model.atoms[i];
            a.prob * (a.s - s_star).powi(2)
        })
        .sum()
}

fn cumulative(probs: impl Iterator<Item = f64>) -> Vec<f64> {
    probs
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

fn draw(cum: &[f64], u: f64) -> usize {
    let target = u * cum.last().copied().unwrap_or(1.0);
    cum.partition_point(|&c| c <= target).min(cum.len() - 1)
}

/// Monte Carlo `E[(s - s~)^2]` where `(s, y)` comes from the model and `s~`
/// is an independent draw from `p(s | y)`.
pub fn posterior_sampling_mse(model: &DiscreteJointModel, n_samples: usize, stream: &mut RandomStream) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be at least 1"));
    }
    let pm = posterior_mean(model);
    let mut group_of = vec![0; model.atoms.len()];
    for (g, grp) in pm.groups.iter().enumerate() {
        for &i in &grp.members {
            group_of[i] = g;
        }
    }
    let joint_cum = cumulative(model.atoms.iter().map(|a| a.prob));
    let group_cum: Vec<Vec<f64>> = pm
        .groups
        .iter()
        .map(|g| cumulative(g.members.iter().map(|&i| model.atoms[i].prob)))
        .collect();
    let mut acc = 0.0;
    for _ in 0..n_samples {
        let i = draw(&joint_cum, stream.uniform());
        let g = group_of[i];
        let k = draw(&group_cum[g], stream.uniform());
        let s_tilde = model.atoms[pm.groups[g].members[k]].s;
        acc += (model.atoms[i].s - s_tilde).powi(2);
    }
    Ok(acc / n_samples as f64)
}

/// The transported estimator: the posterior mean moved onto `p_s` by the
/// monotone plan. Where the plan splits an atom the estimator is randomized,
/// always independently of `s` given `y`.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub posterior: PosteriorMean,
    pub p_s: DiscreteDistribution,
    pub edges: Vec<CouplingEdge>,
}

impl TransportPlan {
    pub fn new(model: &DiscreteJointModel) -> Self {
        let posterior = posterior_mean(model);
        let p_s = model.marginal_s();
        let edges = monotone_coupling(&posterior.p_s_star, &p_s);
        Self { posterior, p_s, edges }
    }

    fn estimate(&self, e: &CouplingEdge, t: f64) -> f64 {
        (1.0 - t) * self.posterior.groups[e.src].s_star + t * self.p_s.atoms[e.dst].value
    }

    /// Law of `(1 - t) s* + t T(s*)`.
    pub fn interpolated_law(&self, t: f64) -> DiscreteDistribution {
        DiscreteDistribution {
            atoms: self
                .edges
                .iter()
                .map(|e| Atom { value: self.estimate(e, t), prob: e.mass })
                .collect(),
        }
    }

    /// `E[(s - s~_t)^2]`, summed over the joint atoms and the plan.
    pub fn distortion(&self, model: &DiscreteJointModel, t: f64) -> f64 {
        let mut acc = 0.0;
        for e in &self.edges {
            let g = &self.posterior.groups[e.src];
            let v = self.estimate(e, t);
            let w = e.mass / g.p_y;
            for &i in &g.members {
                let a = model.atoms[i];
                acc += a.prob * w * (a.s - v).powi(2);
            }
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct D0Report {
    #[serde(rename = "D0_direct")]
    pub d0_direct: f64,
    #[serde(rename = "D_star")]
    pub d_star: f64,
    #[serde(rename = "W2_sq")]
    pub w2_sq: f64,
    pub residual: f64,
    pub max_quantile_deviation: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Checks `D(0) = D* + W2_sq(p_s*, p_s)`. `D0_direct` is the distortion the
/// transported estimator actually achieves, summed over the model.
pub fn verify_d0_identity(model: &DiscreteJointModel, tol: f64) -> D0Report {
    let plan = TransportPlan::new(model);
    let d_star = mmse_distortion(model);
    let w2_sq = wasserstein2_sq_1d(&plan.posterior.p_s_star, &plan.p_s);
    let d0_direct = plan.distortion(model, 1.0);
    let residual = (d0_direct - (d_star + w2_sq)).abs();
    let max_quantile_deviation = max_quantile_deviation(&plan.interpolated_law(1.0), &plan.p_s);
    D0Report {
        d0_direct,
        d_star,
        w2_sq,
        residual,
        max_quantile_deviation,
        tol,
        passed: residual <= tol && max_quantile_deviation <= tol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpCurvePoint {
    pub t: f64,
    /// W2 distance (not squared) to `p_s`.
    pub perception: f64,
    pub distortion: f64,
}

pub fn dp_curve(model: &DiscreteJointModel, t_grid: &[f64]) -> Result<Vec<DpCurvePoint>> {
    if let Some(&t) = t_grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::param("t", format!("{t} outside [0, 1]")));
    }
    let plan = TransportPlan::new(model);
    Ok(t_grid
        .iter()
        .map(|&t| DpCurvePoint {
            t,
            perception: wasserstein2_sq_1d(&plan.interpolated_law(t), &plan.p_s).max(0.0).sqrt(),
            distortion: plan.distortion(model, t),
        })
        .collect())
}

/// `n` evenly spaced points on [0, 1].
pub fn uniform_t_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveShape {
    pub distortion_nondecreasing: bool,
    pub perception_nonincreasing: bool,
    /// Smallest change in slope dD/dP along increasing perception.
    pub min_slope_change: f64,
    pub convex: bool,
}

/// Shape checks for a curve sampled on increasing `t`, at tolerance `tol`.
pub fn curve_shape(points: &[DpCurvePoint], tol: f64) -> CurveShape {
    let distortion_nondecreasing = points.windows(2).all(|w| w[1].distortion >= w[0].distortion - tol);
    let perception_nonincreasing = points.windows(2).all(|w| w[1].perception <= w[0].perception + tol);
    // Collapse runs of (numerically) equal perception before taking slopes.
    let mut pts: Vec<(f64, f64)> = points.iter().rev().map(|p| (p.perception, p.distortion)).collect();
    pts.dedup_by(|b, a| (b.0 - a.0).abs() <= 1e-12);
    let slopes: Vec<f64> = pts.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let min_slope_change = slopes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    CurveShape {
        distortion_nondecreasing,
        perception_nonincreasing,
        min_slope_change,
        convex: !(min_slope_change < -tol),
    }
}

pub fn curve_csv(points: &[DpCurvePoint]) -> String {
    let mut out = String::from("t,perception,distortion\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.t, p.perception, p.distortion));
    }
    out
}
