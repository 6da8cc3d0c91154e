//! Homeostatic sparse Hebbian learning.
//!
//! Inputs are encoded by matching pursuit whose atom choice is modulated by
//! a per-atom cumulative distribution of past coefficients (the homeostasis
//! function `z_i`), and atoms are adapted by a Hebbian rule driven by the
//! reconstruction residual.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, normalize};

/// Residual norm under which encoding stops early.
pub const RESIDUAL_EPS: f64 = 1e-9;

/// Number of quantization bins of the homeostasis CDFs.
pub const HOMEOSTASIS_BINS: usize = 128;

/// `M` unit-norm atoms of dimension `N`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atom_count: usize,
    input_dim: usize,
    atoms: Vec<f64>,
}

impl Dictionary {
    /// Builds a dictionary from flat row-major data, normalizing each row.
    pub fn from_flat(atom_count: usize, input_dim: usize, mut atoms: Vec<f64>) -> Result<Self> {
        if atom_count == 0 || input_dim == 0 {
            return Err(Error::arg("dictionary needs at least one atom and one dimension"));
        }
        check_dim(atom_count * input_dim, atoms.len())?;
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("dictionary entries must be finite"));
        }
        for row in atoms.chunks_exact_mut(input_dim) {
            if normalize(row) < 1e-300 {
                return Err(Error::arg("dictionary atoms must be non-zero"));
            }
        }
        Ok(Self {
            atom_count,
            input_dim,
            atoms,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::arg("all atoms must share one dimension"));
        }
        Self::from_flat(rows.len(), n, rows.concat())
    }

    /// Wraps data that is already unit-norm (loaded from a model file).
    pub(crate) fn from_flat_unchecked(atom_count: usize, input_dim: usize, atoms: Vec<f64>) -> Self {
        debug_assert_eq!(atoms.len(), atom_count * input_dim);
        Self {
            atom_count,
            input_dim,
            atoms,
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atom_count
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    #[inline]
    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// `⟨x, φ_i⟩` for every atom.
    pub fn correlations(&self, x: &[f64]) -> Vec<f64> {
        self.atoms.chunks_exact(self.input_dim).map(|a| dot(a, x)).collect()
    }

    /// `Φᵀa`.
    pub fn reconstruct(&self, code: &SparseCode) -> Vec<f64> {
        let mut out = vec![0.0; self.input_dim];
        for &(i, a) in code.entries() {
            for (o, p) in out.iter_mut().zip(self.atom(i)) {
                *o += a * p;
            }
        }
        out
    }

    pub fn residual(&self, code: &SparseCode, input: &[f64]) -> Vec<f64> {
        let rec = self.reconstruct(code);
        input.iter().zip(&rec).map(|(x, r)| x - r).collect()
    }

    /// Row-major `M×M` Gram matrix `ΦΦᵀ`.
    pub fn gram(&self) -> Vec<f64> {
        let m = self.atom_count;
        let mut g = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let v = dot(self.atom(i), self.atom(j));
                g[i * m + j] = v;
                g[j * m + i] = v;
            }
        }
        g
    }
}

/// Sparse activity vector: unique atom indices with their coefficients, in
/// order of first selection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    entries: Vec<(usize, f64)>,
}

impl SparseCode {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a code, merging duplicate indices by summation.
    pub fn from_entries(entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut code = Self::empty();
        for (i, a) in entries {
            code.add(i, a);
        }
        code
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn coefficient(&self, atom: usize) -> f64 {
        self.entries.iter().find(|e| e.0 == atom).map_or(0.0, |e| e.1)
    }

    fn add(&mut self, atom: usize, a: f64) {
        match self.entries.iter_mut().find(|e| e.0 == atom) {
            Some(e) => e.1 += a,
            None => self.entries.push((atom, a)),
        }
    }
}

/// Per-atom empirical CDF of coefficient magnitudes on `B` bins spanning
/// `[0, c_max]`; bin `b` sits at `b · c_max / (B - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomeostasisState {
    atom_count: usize,
    bins: usize,
    c_max: f64,
    eta_h: f64,
    cdf: Vec<f64>,
}

impl HomeostasisState {
    /// Starts every atom at the uniform CDF, so `z_i(c) = c / c_max` and the
    /// first encodings behave like plain matching pursuit.
    pub fn new(atom_count: usize, eta_h: f64) -> Result<Self> {
        Self::with_bins(atom_count, HOMEOSTASIS_BINS, eta_h)
    }

    pub fn with_bins(atom_count: usize, bins: usize, eta_h: f64) -> Result<Self> {
        if !(eta_h > 0.0 && eta_h < 1.0) {
            return Err(Error::arg("eta_h must lie in (0, 1)"));
        }
        if bins < 2 {
            return Err(Error::arg("homeostasis needs at least two bins"));
        }
        let row: Vec<f64> = (0..bins).map(|b| b as f64 / (bins - 1) as f64).collect();
        Ok(Self {
            atom_count,
            bins,
            c_max: 0.0,
            eta_h,
            cdf: row.repeat(atom_count),
        })
    }

    pub(crate) fn from_parts(atom_count: usize, bins: usize, c_max: f64, eta_h: f64, cdf: Vec<f64>) -> Result<Self> {
        check_dim(atom_count * bins, cdf.len())?;
        if bins < 2 || !(eta_h > 0.0 && eta_h < 1.0) || !c_max.is_finite() || c_max < 0.0 {
            return Err(Error::Format("invalid homeostasis parameters".into()));
        }
        Ok(Self {
            atom_count,
            bins,
            c_max,
            eta_h,
            cdf,
        })
    }

    pub fn atom_count(&self) -> usize {
        self.atom_count
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    pub fn eta_h(&self) -> f64 {
        self.eta_h
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn atom_cdf(&self, i: usize) -> &[f64] {
        &self.cdf[i * self.bins..(i + 1) * self.bins]
    }

    /// `z_i(c)`: the CDF of atom `i` at magnitude `c`, linearly interpolated.
    /// Before any statistics exist (`c_max = 0`) every atom scores 1.
    pub fn z(&self, i: usize, c: f64) -> f64 {
        if self.c_max <= 0.0 {
            return 1.0;
        }
        interp_cdf(self.atom_cdf(i), c / self.c_max)
    }

    fn set_c_max(&mut self, new_max: f64) {
        if new_max <= self.c_max {
            return;
        }
        if self.c_max > 0.0 {
            let ratio = new_max / self.c_max;
            let b = self.bins;
            for row in self.cdf.chunks_exact_mut(b) {
                let old = row.to_vec();
                for (k, v) in row.iter_mut().enumerate() {
                    // old CDF evaluated at the new grid point
                    *v = interp_cdf(&old, k as f64 / (b - 1) as f64 * ratio);
                }
            }
        }
        self.c_max = new_max;
    }
}

/// Evaluates a CDF sampled on `[0, 1]` at fraction `t` (clamped).
fn interp_cdf(row: &[f64], t: f64) -> f64 {
    let b = row.len();
    if t >= 1.0 {
        return row[b - 1];
    }
    let p = t.max(0.0) * (b - 1) as f64;
    let k = p.floor() as usize;
    let frac = p - k as f64;
    row[k] + frac * (row[(k + 1).min(b - 1)] - row[k])
}

fn check_input(dict: &Dictionary, homeo: &HomeostasisState, input: &[f64], n0: usize) -> Result<()> {
    check_dim(dict.input_dim, input.len())?;
    check_dim(dict.atom_count, homeo.atom_count)?;
    if n0 == 0 {
        return Err(Error::arg("n0 must be at least 1"));
    }
    Ok(())
}

/// Correlations this small relative to the largest one, or to the residual
/// norm, are rounding noise.
const NEGLIGIBLE_CORR: f64 = 1e-9;

/// Picks the next atom from current correlations. Without homeostasis this is
/// `argmax |c_i|`; with it, `argmax z_i(|c_i|)` with ties going to the larger
/// `|c_i|`. Ties after that go to the lowest index. Atoms with negligible
/// correlation are never selected.

fn select_atom(corr: &[f64], homeo: &HomeostasisState, use_homeostasis: bool) -> Option<usize> {
    // correlations at rounding level would otherwise win under a flat CDF
    let floor = corr.iter().fold(0.0f64, |m, c| m.max(c.abs())) * NEGLIGIBLE_CORR;
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, &c) in corr.iter().enumerate() {
        let mag = c.abs();
        if mag == 0.0 || mag <= floor {
            continue;
        }
        let score = if use_homeostasis { homeo.z(i, mag) } else { mag };
        let better = match best {
            None => true,
            Some((_, bs, bm)) => score > bs || (score == bs && mag > bm),
        };
        if better {
            best = Some((i, score, mag));
        }
    }
    best.map(|b| b.0)
}

/// Step-by-step record of one matching-pursuit run.
#[derive(Debug, Clone, Default)]
pub struct MpTrace {
    pub selections: Vec<usize>,
    /// Residual norm before the first step and after each step.
    pub residual_norms: Vec<f64>,
    /// `|⟨r(t+1), φ_{i*}⟩|` right after each step.
    pub post_step_overlap: Vec<f64>,
}

/// Matching pursuit with optional homeostatic atom selection.
pub fn encode_mp(
    dict: &Dictionary,
    homeo: &HomeostasisState,
    input: &[f64],
    n0: usize,
    use_homeostasis: bool,
) -> Result<SparseCode> {
    encode_mp_traced(dict, homeo, input, n0, use_homeostasis).map(|(c, _)| c)
}

/// [`encode_mp`] that also returns the selection trace.
pub fn encode_mp_traced(
    dict: &Dictionary,
    homeo: &HomeostasisState,
    input: &[f64],
    n0: usize,
    use_homeostasis: bool,
) -> Result<(SparseCode, MpTrace)> {
    check_input(dict, homeo, input, n0)?;
    let mut residual = input.to_vec();
    let mut code = SparseCode::empty();
    let mut trace = MpTrace {
        residual_norms: vec![norm(&residual)],
        ..MpTrace::default()
    };
    for _ in 0..n0 {
        let rn = norm(&residual);
        if rn < RESIDUAL_EPS {
            break;
        }
        let corr = dict.correlations(&residual);
        let Some(i) = select_atom(&corr, homeo, use_homeostasis) else {
            break;
        };
        let c = corr[i];
        if c.abs() <= NEGLIGIBLE_CORR * rn {
            break;
        }
        code.add(i, c);
        for (r, p) in residual.iter_mut().zip(dict.atom(i)) {
            *r -= c * p;
        }
        trace.selections.push(i);
        trace.residual_norms.push(norm(&residual));
        trace.post_step_overlap.push(dot(&residual, dict.atom(i)).abs());
    }
    Ok((code, trace))
}

/// Matching pursuit driven by a precomputed Gram matrix: correlations are
/// updated as `c ← c − ĉ·G[i*]` instead of being recomputed from the residual.
/// Selects the same atoms as [`encode_mp`] up to floating-point rounding.
pub fn encode_mp_with_gram(
    dict: &Dictionary,
    gram: &[f64],
    homeo: &HomeostasisState,
    input: &[f64],
    n0: usize,
    use_homeostasis: bool,
) -> Result<SparseCode> {
    check_input(dict, homeo, input, n0)?;
    let m = dict.atom_count;
    check_dim(m * m, gram.len())?;
    let mut corr = dict.correlations(input);
    let r2_start = dot(input, input);
    let mut r2 = r2_start;
    let mut code = SparseCode::empty();
    for _ in 0..n0 {
        // the recurrence loses precision once most energy is explained
        if r2 < 1e-6 * r2_start {
            let r = dict.residual(&code, input);
            r2 = dot(&r, &r);
        }
        let rn = r2.max(0.0).sqrt();
        if rn < RESIDUAL_EPS {
            break;
        }
        let Some(i) = select_atom(&corr, homeo, use_homeostasis) else {
            break;
        };
        let c = corr[i];
        if c.abs() <= NEGLIGIBLE_CORR * rn {
            break;
        }
        code.add(i, c);
        let row = &gram[i * m..(i + 1) * m];
        r2 -= c * c * (2.0 - row[i]);
        for (cj, g) in corr.iter_mut().zip(row) {
            *cj -= c * g;
        }
    }
    Ok(code)
}

/// `‖input − Φᵀa‖² / (2σ_n²) + λ·nnz`.
pub fn cost(dict: &Dictionary, code: &SparseCode, input: &[f64], lambda_bits: f64, sigma_n: f64) -> Result<f64> {
    check_dim(dict.input_dim, input.len())?;
    if !(sigma_n > 0.0) {
        return Err(Error::arg("sigma_n must be positive"));
    }
    let r = dict.residual(code, input);
    Ok(dot(&r, &r) / (2.0 * sigma_n * sigma_n) + lambda_bits * code.nnz() as f64)
}

/// Hebbian step `φ_i ← φ_i + η·a_i·(input − Φᵀa)` on active atoms, each
/// renormalized to unit length afterwards. The residual uses the atoms as
/// they were before the step.
pub fn hebbian_update(dict: &mut Dictionary, code: &SparseCode, input: &[f64], eta: f64) -> Result<()> {
    check_dim(dict.input_dim, input.len())?;
    if code.is_empty() {
        return Ok(());
    }
    let residual = dict.residual(code, input);
    let n = dict.input_dim;
    for &(i, a) in code.entries() {
        let row = &mut dict.atoms[i * n..(i + 1) * n];
        for (p, r) in row.iter_mut().zip(&residual) {
            *p += eta * a * r;
        }
        normalize(row);
    }
    Ok(())
}

/// Blends each atom's CDF toward the indicator `𝟙[|a_i| ≤ v_b]` of its new
/// coefficient magnitude (zero for inactive atoms) at rate `η_h`. `c_max`
/// follows the running maximum of observed correlation and coefficient
/// magnitudes; existing CDFs are resampled when it grows.
pub fn homeostasis_update(homeo: &mut HomeostasisState, code: &SparseCode, all_correlations: &[f64]) -> Result<()> {
    check_dim(homeo.atom_count, all_correlations.len())?;
    let observed = all_correlations
        .iter()
        .chain(code.entries().iter().map(|e| &e.1))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    homeo.set_c_max(observed);
    if homeo.c_max <= 0.0 {
        return Ok(());
    }
    let mut sample = vec![0.0; homeo.atom_count];
    for &(i, a) in code.entries() {
        if i >= homeo.atom_count {
            return Err(Error::OutOfBounds(format!("atom index {i}")));
        }
        sample[i] = a.abs();
    }
    let b = homeo.bins;
    let step = homeo.c_max / (b - 1) as f64;
    let eta = homeo.eta_h;
    for (row, s) in homeo.cdf.chunks_exact_mut(b).zip(sample) {
        for (k, v) in row.iter_mut().enumerate() {
            let indicator = if s <= k as f64 * step { 1.0 } else { 0.0 };
            *v = (1.0 - eta) * *v + eta * indicator;
        }
        row[b - 1] = 1.0;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseLearnConfig {
    /// Maximum number of active atoms per code.
    pub n0: usize,
    /// Hebbian learning rate.
    pub eta: f64,
    /// Homeostatic learning rate.
    pub eta_h: f64,
    /// Sparsity weight of the reported cost.
    pub lambda_bits: f64,
    /// Noise scale of the reported cost.
    pub sigma_n: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Select atoms through `z_i` while learning.
    pub homeostasis: bool,
}

impl Default for SparseLearnConfig {
    fn default() -> Self {
        Self {
            n0: 10,
            eta: 0.05,
            eta_h: 0.01,
            lambda_bits: 1.0,
            sigma_n: 1.0,
            epochs: 20,
            seed: 0,
            homeostasis: true,
        }
    }
}

impl SparseLearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 {
            return Err(Error::arg("n0 must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::arg("eta must lie in (0, 1)"));
        }
        if !(self.eta_h > 0.0 && self.eta_h < 1.0) {
            return Err(Error::arg("eta_h must lie in (0, 1)"));
        }
        if self.epochs == 0 {
            return Err(Error::arg("epochs must be at least 1"));
        }
        if !(self.sigma_n > 0.0) {
            return Err(Error::arg("sigma_n must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean cost of the codes computed during each epoch.
    pub epoch_mean_cost: Vec<f64>,
    /// How often each atom was the first one selected, over all epochs.
    pub first_selection_counts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LearnedDictionary {
    pub dictionary: Dictionary,
    pub homeostasis: HomeostasisState,
    pub log: TrainingLog,
}

/// Alternates encoding and Hebbian/homeostatic updates over shuffled samples.
/// Atoms start as distinct randomly chosen non-zero samples.
pub fn learn_dictionary<S: AsRef<[f64]>>(samples: &[S], m_atoms: usize, cfg: &SparseLearnConfig) -> Result<LearnedDictionary> {
    cfg.validate()?;
    if m_atoms == 0 {
        return Err(Error::arg("need at least one atom"));
    }
    if samples.len() < m_atoms {
        return Err(Error::arg(format!(
            "{} training samples for {m_atoms} atoms; need at least as many samples as atoms",
            samples.len()
        )));
    }
    let dim = samples[0].as_ref().len();
    if dim == 0 || samples.iter().any(|s| s.as_ref().len() != dim) {
        return Err(Error::arg("training samples must share one non-zero dimension"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let init: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| samples[i].as_ref())
        .filter(|s| norm(s) > 1e-12)
        .take(m_atoms)
        .map(<[f64]>::to_vec)
        .collect();
    if init.len() < m_atoms {
        return Err(Error::arg("not enough non-zero samples to initialize the atoms"));
    }
    let mut dict = Dictionary::from_rows(&init)?;
    let mut homeo = HomeostasisState::new(m_atoms, cfg.eta_h)?;
    let mut log = TrainingLog {
        epoch_mean_cost: Vec::with_capacity(cfg.epochs),
        first_selection_counts: vec![0; m_atoms],
    };

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let x = samples[i].as_ref();
            let corr = dict.correlations(x);
            let (code, trace) = encode_mp_traced(&dict, &homeo, x, cfg.n0, cfg.homeostasis)?;
            if let Some(&first) = trace.selections.first() {
                log.first_selection_counts[first] += 1;
            }
            total += cost(&dict, &code, x, cfg.lambda_bits, cfg.sigma_n)?;
            hebbian_update(&mut dict, &code, x, cfg.eta)?;
            homeostasis_update(&mut homeo, &code, &corr)?;
        }
        log.epoch_mean_cost.push(total / samples.len() as f64);
    }
    Ok(LearnedDictionary {
        dictionary: dict,
        homeostasis: homeo,
        log,
    })
}

/// `1 − Σ‖x − Φᵀa‖² / Σ‖x‖²`, clamped to `[0, 1]`.
pub fn reconstruction_rate<S: AsRef<[f64]>>(dict: &Dictionary, codes: &[SparseCode], inputs: &[S]) -> Result<f64> {
    check_dim(inputs.len(), codes.len())?;
    let mut err = 0.0;
    let mut energy = 0.0;
    for (code, x) in codes.iter().zip(inputs) {
        let x = x.as_ref();
        check_dim(dict.input_dim, x.len())?;
        let r = dict.residual(code, x);
        err += dot(&r, &r);
        energy += dot(x, x);
    }
    if energy <= 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - err / energy).clamp(0.0, 1.0))
}

/// Shannon entropy (nats) of a usage histogram.
pub fn usage_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}
