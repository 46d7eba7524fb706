//! Two-stage enhancement at desk scale: a Wiener oracle stands in for the
//! regression model, and a per-bin monotone transport of magnitudes stands
//! in for the generative corrector. Also hosts the Lipschitz certificate for
//! spectrally normalized layer stacks and the residual-correlation
//! diagnostic.
//!
//! Precision contract: the residual connection is exact only for regressed
//! grids at interchange precision (every component representable as `f32`).
//! Grids read from disk and [`oracle_regression`] outputs always are; see
//! [`to_interchange_precision`] for anything else.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::{derive_stream, RandomStream};
use crate::dsp::percentile_sorted;
use crate::error::{Error, Result};
use crate::sfi::{SfiParams, SpectrogramFrameGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu { slope: f64 },
}

impl Activation {
    fn validate(self) -> Result<()> {
        match self {
            Activation::LeakyRelu { slope } if !(0.0..=1.0).contains(&slope) => {
                Err(Error::param("slope", format!("{slope} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Lipschitz constant of the activation itself.
    pub fn lipschitz(self) -> f64 {
        1.0
    }

    fn apply(self, x: &mut DVector<f64>) {
        if let Activation::LeakyRelu { slope } = self {
            x.iter_mut().filter(|v| **v < 0.0).for_each(|v| *v *= slope);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub activation: Activation,
    /// Spectral-norm estimate from power iteration run to convergence.
    pub norm_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayerStack {
    layers: Vec<Layer>,
}

const POWER_SEED: u64 = 0x5eed;
const REFINE_MAX_ITERS: usize = 20_000;

fn start_vector(cols: usize, layer: usize) -> DVector<f64> {
    let mut st = derive_stream(POWER_SEED, format!("spectral-norm/layer{layer}"));
    let v = DVector::from_fn(cols, |_, _| st.normal());
    let n = v.norm();
    v / n
}

/// One power-iteration step on `W^T W`; returns the new unit vector, or
/// `None` once the iterate vanishes.
fn power_step(w: &DMatrix<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
    let next = w.transpose() * (w * v);
    let n = next.norm();
    (n > 0.0 && n.is_finite()).then(|| next / n)
}

/// `||W v||` after `iters` steps from the fixed start, plus the final vector.
fn power_iteration(w: &DMatrix<f64>, layer: usize, iters: usize) -> (f64, DVector<f64>) {
    let mut v = start_vector(w.ncols(), layer);
    for _ in 0..iters {
        match power_step(w, &v) {
            Some(n) => v = n,
            None => return (0.0, v),
        }
    }
    ((w * &v).norm(), v)
}

/// Continues power iteration until the estimate stops growing. Every
/// iterate is a lower bound, so the best one is kept.
fn refine_norm(w: &DMatrix<f64>, mut v: DVector<f64>) -> f64 {
    let mut best = (w * &v).norm();
    let mut stalled = 0;
    for _ in 0..REFINE_MAX_ITERS {
        let Some(n) = power_step(w, &v) else { break };
        v = n;
        let est = (w * &v).norm();
        if est > best * (1.0 + 1e-15) {
            best = est;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 8 {
                break;
            }
        }
    }
    best
}

impl LinearLayerStack {
    pub fn new(layers: impl IntoIterator<Item = (DMatrix<f64>, Activation)>) -> Result<Self> {
        let mut out = Vec::new();
        for (l, (w, act)) in layers.into_iter().enumerate() {
            act.validate()?;
            if w.nrows() == 0 || w.ncols() == 0 {
                return Err(Error::Shape(format!("layer {l} is empty")));
            }
            if let Some(i) = w.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(i));
            }
            if let Some(prev) = out.last().map(|p: &Layer| p.weights.nrows()) {
                if prev != w.ncols() {
                    return Err(Error::Shape(format!("layer {l} expects {} inputs, previous layer gives {prev}", w.ncols())));
                }
            }
            let v = start_vector(w.ncols(), l);
            let norm_bound = refine_norm(&w, v);
            out.push(Layer { weights: w, activation: act, norm_bound });
        }
        if out.is_empty() {
            return Err(Error::Empty("layer stack"));
        }
        Ok(Self { layers: out })
    }

    /// Gaussian weights with the given widths (`widths[0]` is the input).
    pub fn random(stream: &mut RandomStream, widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::param("widths", "need an input and at least one layer"));
        }
        let mats: Vec<_> = widths
            .windows(2)
            .map(|w| (DMatrix::from_fn(w[1], w[0], |_, _| stream.normal()), activation))
            .collect();
        Self::new(mats)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    /// Layer outputs for input `x`, one per layer.
    pub fn forward_all(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut h = x.clone();
        self.layers
            .iter()
            .map(|l| {
                h = &l.weights * &h;
                l.activation.apply(&mut h);
                h.clone()
            })
            .collect()
    }

    /// Product of per-layer norm bounds and activation constants.
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers.iter().map(|l| l.norm_bound * l.activation.lipschitz()).product()
    }
}

/// Divides every layer by its `iters`-step power-iteration estimate, then
/// records the refined norm of the result. Estimates within a few ulps of 1
/// leave the layer untouched so already-normalized weights stay bit-identical.
pub fn spectral_normalize(stack: &LinearLayerStack, iters: usize) -> Result<LinearLayerStack> {
    if iters == 0 {
        return Err(Error::param("iters", "must be at least 1"));
    }
    let mut layers = Vec::with_capacity(stack.layers.len());
    for (l, layer) in stack.layers.iter().enumerate() {
        let (est, v) = power_iteration(&layer.weights, l, iters);
        if est == 0.0 {
            return Err(Error::param("weights", format!("layer {l} is a zero matrix")));
        }
        let weights = if (est - 1.0).abs() <= 4.0 * f64::EPSILON {
            layer.weights.clone()
        } else {
            &layer.weights / est
        };
        let norm_bound = refine_norm(&weights, v);
        layers.push(Layer { weights, activation: layer.activation, norm_bound });
    }
    Ok(LinearLayerStack { layers })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// `||D_l(a) - D_l(b)||` for each layer depth `l`.
    pub lhs: Vec<f64>,
    pub rhs: f64,
    pub slack: Vec<f64>,
    pub lipschitz: f64,
}

impl LipschitzReport {
    pub fn min_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Empirical check of `||D_l(a) - D_l(b)|| <= L ||a - b||` at every depth.
pub fn lipschitz_check(stack: &LinearLayerStack, a: &[f64], b: &[f64]) -> Result<LipschitzReport> {
    let width = stack.input_width();
    if a.len() != width || b.len() != width {
        return Err(Error::Shape(format!("inputs of length {} and {} for width {width}", a.len(), b.len())));
    }
    let (va, vb) = (DVector::from_column_slice(a), DVector::from_column_slice(b));
    let lipschitz = stack.lipschitz_bound();
    let rhs = lipschitz * (&va - &vb).norm();
    let lhs: Vec<f64> = stack
        .forward_all(&va)
        .iter()
        .zip(stack.forward_all(&vb))
        .map(|(x, y)| (x - y).norm())
        .collect();
    let slack = lhs.iter().map(|l| rhs - l).collect();
    Ok(LipschitzReport { lhs, rhs, slack, lipschitz })
}

/// Wiener-gain oracle: `H = Ps / (Ps + Pn)` with `Ps = max(|X|^2 - Pn, 0)`,
/// phase preserved. Output components are rounded to interchange precision.
pub fn oracle_regression(noisy: &SpectrogramFrameGrid, noise_psd: &[f64]) -> Result<SpectrogramFrameGrid> {
    if noise_psd.len() != noisy.n_bins() {
        return Err(Error::Shape(format!("{} PSD values for {} bins", noise_psd.len(), noisy.n_bins())));
    }
    if let Some(i) = noise_psd.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::param("noise_psd", format!("entry {i} is negative or non-finite")));
    }
    let mut out = noisy.clone();
    let bins = noisy.n_bins();
    for (i, x) in out.data_mut().iter_mut().enumerate() {
        let pn = noise_psd[i % bins];
        let px = x.norm_sqr();
        let ps = (px - pn).max(0.0);
        let h = if ps + pn == 0.0 { 1.0 } else { ps / (ps + pn) };
        *x = round_f32(*x * h);
    }
    Ok(out)
}

fn round_f32(c: Complex64) -> Complex64 {
    Complex64::new(c.re as f32 as f64, c.im as f32 as f64)
}

/// Rounds every component to the nearest `f32`, as the grid file format does.
pub fn to_interchange_precision(grid: &SpectrogramFrameGrid) -> SpectrogramFrameGrid {
    let mut out = grid.clone();
    out.data_mut().iter_mut().for_each(|c| *c = round_f32(*c));
    out
}

pub const DEFAULT_QUANTILES: usize = 256;

/// Per-bin quantile tables of clean magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportCorrector {
    params: SfiParams,
    resolution: usize,
    samples: u64,
    /// `n_bins * resolution` values, bin-major; table `k` holds the levels
    /// `i / (resolution - 1)`.
    tables: Vec<f64>,
}

impl TransportCorrector {
    pub fn params(&self) -> SfiParams {
        self.params
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Frames per bin the tables were built from.
    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn table(&self, bin: usize) -> &[f64] {
        &self.tables[bin * self.resolution..(bin + 1) * self.resolution]
    }

    /// Reference quantile at level `u` in [0, 1], linear between levels.
    pub fn quantile(&self, bin: usize, u: f64) -> f64 {
        percentile_sorted(self.table(bin), u)
    }

    /// Largest gap between adjacent levels in `bin`.
    pub fn max_spacing(&self, bin: usize) -> f64 {
        self.table(bin).windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Associative accumulator of per-bin magnitude samples.
#[derive(Debug, Clone, Default)]
pub struct CorrectorBuilder {
    params: Option<SfiParams>,
    per_bin: Vec<Vec<f64>>,
}

impl CorrectorBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure_params(&mut self, params: SfiParams) -> Result<()> {
        match self.params {
            None => {
                self.params = Some(params);
                self.per_bin = vec![Vec::new(); params.n_bins];
                Ok(())
            }
            Some(p) if p == params => Ok(()),
            Some(p) => Err(Error::RateMismatch(p.fs, params.fs)),
        }
    }

    pub fn add(&mut self, grid: &SpectrogramFrameGrid) -> Result<()> {
        self.ensure_params(grid.params())?;
        for (k, bin) in self.per_bin.iter_mut().enumerate() {
            bin.extend(grid.bin_magnitudes(k));
        }
        Ok(())
    }

    pub fn merge(mut self, other: CorrectorBuilder) -> Result<Self> {
        let Some(p) = other.params else { return Ok(self) };
        self.ensure_params(p)?;
        for (mine, theirs) in self.per_bin.iter_mut().zip(other.per_bin) {
            mine.extend(theirs);
        }
        Ok(self)
    }

    pub fn finish(self, resolution: usize) -> Result<TransportCorrector> {
        if resolution < 2 {
            return Err(Error::param("resolution", "need at least 2 quantile levels"));
        }
        let params = self.params.ok_or(Error::Empty("clean grid set"))?;
        let samples = self.per_bin.first().map_or(0, |b| b.len()) as u64;
        if samples == 0 {
            return Err(Error::Empty("clean grid set"));
        }
        let mut tables = Vec::with_capacity(params.n_bins * resolution);
        for mut bin in self.per_bin {
            bin.sort_by(f64::total_cmp);
            tables.extend((0..resolution).map(|i| percentile_sorted(&bin, i as f64 / (resolution - 1) as f64)));
        }
        Ok(TransportCorrector { params, resolution, samples, tables })
    }
}

pub fn fit_corrector(clean: &[SpectrogramFrameGrid]) -> Result<TransportCorrector> {
    fit_corrector_with(clean, DEFAULT_QUANTILES)
}

pub fn fit_corrector_with(clean: &[SpectrogramFrameGrid], resolution: usize) -> Result<TransportCorrector> {
    let mut b = CorrectorBuilder::new();
    for g in clean {
        b.add(g)?;
    }
    b.finish(resolution)
}

/// Output of [`transport_correct`].
#[derive(Debug, Clone, PartialEq)]
pub struct Corrected {
    pub final_grid: SpectrogramFrameGrid,
    pub correction: SpectrogramFrameGrid,
}

/// Stable ranks (value, then index) of `values`.
fn ranks(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut r = vec![0; values.len()];
    for (rank, i) in idx.into_iter().enumerate() {
        r[i] = rank;
    }
    r
}

fn exponent(x: f64) -> i32 {
    // floor(log2 |x|) for normal x; exact via the bit pattern.
    ((x.abs().to_bits() >> 52) as i32) - 1023
}

/// Splits `target` into `regressed + correction` so that both the sum and
/// the difference are exact. Returns `None` when `regressed` carries too
/// many significant bits for the required dynamic range.
fn exact_residual(regressed: f64, target: f64) -> Option<(f64, f64)> {
    if regressed == 0.0 {
        return Some((target, target));
    }
    let m = regressed.abs().max(target.abs()).max((target - regressed).abs());
    // One bit of headroom above the largest magnitude involved.
    let q = 2f64.powi((exponent(m) + 1 - 52).max(-1074));
    if (regressed / q).fract() != 0.0 {
        return None;
    }
    let fin = (target / q).round() * q;
    let corr = fin - regressed;
    (fin - corr == regressed && regressed + corr == fin).then_some((fin, corr))
}

/// Replaces each frame's magnitude, per bin, with the reference quantile at
/// its mid-rank `(r + 0.5) / frames`. Phase passes through (zero-magnitude
/// cells take phase 0). The residual connection `final = regressed +
/// correction` is exact and checked for every component.
pub fn transport_correct(regressed: &SpectrogramFrameGrid, corrector: &TransportCorrector) -> Result<Corrected> {
    if regressed.params() != corrector.params {
        return Err(Error::Shape(format!(
            "grid at {} Hz does not match corrector at {} Hz",
            regressed.params().fs,
            corrector.params.fs
        )));
    }
    let (frames, bins) = (regressed.n_frames(), regressed.n_bins());
    let mut final_grid = regressed.clone();
    let mut correction = regressed.clone();
    for k in 0..bins {
        let mags = regressed.bin_magnitudes(k);
        for (f, rank) in ranks(&mags).into_iter().enumerate() {
            let target = corrector.quantile(k, (rank as f64 + 0.5) / frames as f64);
            let r = regressed.get(f, k);
            let want = if mags[f] > 0.0 { (r / mags[f]) * target } else { Complex64::new(target, 0.0) };
            let idx = f * bins + k;
            let (re, cre) = exact_residual(r.re, want.re).ok_or(Error::ResidualIdentity(idx))?;
            let (im, cim) = exact_residual(r.im, want.im).ok_or(Error::ResidualIdentity(idx))?;
            final_grid.set(f, k, Complex64::new(re, im));
            correction.set(f, k, Complex64::new(cre, cim));
        }
    }
    Ok(Corrected { final_grid, correction })
}

/// Kolmogorov-Smirnov distance between two samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Pearson correlation of the magnitude residuals `|clean| - |regressed|`
/// and `|final| - |regressed|`.
pub fn residual_correlation(
    clean: &SpectrogramFrameGrid,
    regressed: &SpectrogramFrameGrid,
    final_grid: &SpectrogramFrameGrid,
) -> Result<f64> {
    if !clean.same_shape(regressed) || !clean.same_shape(final_grid) {
        return Err(Error::Shape("residual correlation needs equal grid shapes".into()));
    }
    let res = |g: &SpectrogramFrameGrid| -> Vec<f64> {
        g.data().iter().zip(regressed.data()).map(|(a, b)| a.norm() - b.norm()).collect()
    };
    pearson(&res(clean), &res(final_grid))
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("clean-regression residual"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("final-regression residual"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlations computed per utterance, then averaged.
pub fn mean_residual_correlation<'a>(
    triples: impl IntoIterator<Item = (&'a SpectrogramFrameGrid, &'a SpectrogramFrameGrid, &'a SpectrogramFrameGrid)>,
) -> Result<f64> {
    let rs = triples
        .into_iter()
        .map(|(c, r, f)| residual_correlation(c, r, f))
        .collect::<Result<Vec<_>>>()?;
    if rs.is_empty() {
        return Err(Error::Empty("utterance list"));
    }
    Ok(rs.iter().sum::<f64>() / rs.len() as f64)
}

/// Reported residual correlation of the reference system; kept for
/// comparison only.
pub const REFERENCE_RESIDUAL_CORRELATION: f64 = 0.78;

pub const CORRECTOR_MAGIC: &[u8; 4] = b"TSQC";

#[derive(Debug, Serialize, Deserialize)]
struct CorrectorHeader {
    fs: u32,
    win_len: usize,
    hop_len: usize,
    n_bins: usize,
    resolution: usize,
    samples: u64,
}

/// Magic, `u32` header length, JSON header, then `n_bins * resolution`
/// little-endian `f64` table values.
pub fn encode_corrector(c: &TransportCorrector) -> Vec<u8> {
    let header = serde_json::to_vec(&CorrectorHeader {
        fs: c.params.fs,
        win_len: c.params.win_len,
        hop_len: c.params.hop_len,
        n_bins: c.params.n_bins,
        resolution: c.resolution,
        samples: c.samples,
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(8 + header.len() + c.tables.len() * 8);
    out.extend_from_slice(CORRECTOR_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in &c.tables {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_corrector(bytes: &[u8]) -> Result<TransportCorrector> {
    let bad = |m: &str| Error::Format(format!("corrector file: {m}"));
    if bytes.len() < 8 || &bytes[..4] != CORRECTOR_MAGIC {
        return Err(bad("missing magic"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
    let h: CorrectorHeader = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    let params = SfiParams::for_rate(h.fs)?;
    if (params.win_len, params.hop_len, params.n_bins) != (h.win_len, h.hop_len, h.n_bins) || h.resolution < 2 {
        return Err(bad("inconsistent header"));
    }
    let data = &bytes[8 + hlen..];
    if data.len() != h.n_bins * h.resolution * 8 {
        return Err(bad("table size disagrees with header"));
    }
    let tables: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if tables.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite table value"));
    }
    if tables.chunks(h.resolution).any(|t| t.windows(2).any(|w| w[1] < w[0])) {
        return Err(bad("table is not non-decreasing"));
    }
    Ok(TransportCorrector { params, resolution: h.resolution, samples: h.samples, tables })
}

pub fn write_corrector(c: &TransportCorrector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_corrector(c)).map_err(|e| Error::io(path, e))
}

pub fn read_corrector(path: impl AsRef<Path>) -> Result<TransportCorrector> {
    let path = path.as_ref();
    decode_corrector(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
