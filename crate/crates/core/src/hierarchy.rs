//! The S1 → C1 → S2 → C2 stack.
//!
//! Each S layer is a sparse dictionary whose atoms have been placed on a
//! Kohonen grid; its code is drawn onto that grid as an activity map. Each C
//! layer max-pools the map in non-overlapping windows. The flattened C2 map,
//! L2-normalized, is the landmark descriptor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::normalize;
use crate::preprocessing::Patch;
use crate::sparse_layer::{
    encode_mp_with_gram, learn_dictionary, reconstruction_rate, Dictionary, HomeostasisState, SparseCode,
    SparseLearnConfig, TrainingLog,
};
use crate::topology::{assign_atoms, project_code, train_som, SomConfig, SomGrid};

/// Non-negative activities laid out on a grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ActivityMap {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, values.len())?;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::arg("activities must be finite and non-negative"));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.values[r * self.cols + c]
    }
}

/// Non-overlapping `pool`×`pool` max pooling with stride `pool`. Maps whose
/// sides are not multiples of `pool` are zero-padded on the right and bottom,
/// so output sides are `ceil(side / pool)`.
pub fn max_pool(map: &ActivityMap, pool: usize) -> Result<ActivityMap> {
    if pool == 0 {
        return Err(Error::arg("pool size must be at least 1"));
    }
    let rows = map.rows.div_ceil(pool);
    let cols = map.cols.div_ceil(pool);
    let mut out = ActivityMap::zeros(rows, cols);
    for r in 0..map.rows {
        for c in 0..map.cols {
            let cell = out.get_mut(r / pool, c / pool);
            *cell = cell.max(map.get(r, c));
        }
    }
    Ok(out)
}

/// Output length of a network: `ceil(grid_side / pool)²`. The atom count
/// does not enter; it is kept in the signature to mirror the configuration
/// naming.
pub fn descriptor_length(_atoms_side: usize, grid_side: usize, pool: usize) -> usize {
    let s = grid_side.div_ceil(pool.max(1));
    s * s
}

/// Fixed-length landmark descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub values: Vec<f64>,
    pub config_tag: String,
}

impl Descriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_blank(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Layer sizes of one HSD configuration: `atoms_side²` atoms per sparse
/// layer, each laid out on a `grid_side`×`grid_side` map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub atoms_side: usize,
    pub grid_side: usize,
    pub pool: usize,
}

impl NetworkShape {
    pub fn balanced(side: usize) -> Self {
        Self {
            atoms_side: side,
            grid_side: side,
            pool: 2,
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atoms_side * self.atoms_side
    }

    /// Side of the C1 (and C2) map.
    pub fn pooled_side(&self) -> usize {
        self.grid_side.div_ceil(self.pool)
    }

    pub fn descriptor_len(&self) -> usize {
        descriptor_length(self.atoms_side, self.grid_side, self.pool)
    }

    /// `HSD-<atoms>` when balanced, `HSD-<atoms>/<grid>` otherwise.
    pub fn tag(&self) -> String {
        self.to_string()
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms_side == 0 || self.pool == 0 {
            return Err(Error::arg("atom side and pool must be at least 1"));
        }
        if self.grid_side < self.atoms_side {
            return Err(Error::arg(format!(
                "a {0}x{0} grid cannot hold {1} atoms",
                self.grid_side,
                self.atom_count()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for NetworkShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms_side == self.grid_side {
            write!(f, "HSD-{}", self.atoms_side)
        } else {
            write!(f, "HSD-{}/{}", self.atoms_side, self.grid_side)
        }
    }
}

impl FromStr for NetworkShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::arg(format!(
                "unknown HSD config tag '{s}'; expected HSD-<atoms> or HSD-<atoms>/<grid> (e.g. HSD-15, HSD-15/30)"
            ))
        };
        let body = s.trim().strip_prefix("HSD-").ok_or_else(bad)?;
        let (atoms, grid) = match body.split_once('/') {
            Some((a, g)) => (a, g),
            None => (body, body),
        };
        let atoms_side: usize = atoms.parse().map_err(|_| bad())?;
        let grid_side: usize = grid.parse().map_err(|_| bad())?;
        let shape = Self {
            atoms_side,
            grid_side,
            pool: 2,
        };
        shape.validate()?;
        Ok(shape)
    }
}

/// A trained sparse layer with its grid placement. The Gram matrix of the
/// dictionary is cached for fast encoding.
#[derive(Debug, Clone)]
pub struct TopoLayer {
    dictionary: Dictionary,
    homeostasis: HomeostasisState,
    grid: SomGrid,
    gram: Vec<f64>,
}

impl TopoLayer {
    pub fn new(dictionary: Dictionary, homeostasis: HomeostasisState, grid: SomGrid) -> Result<Self> {
        check_dim(dictionary.atom_count(), homeostasis.atom_count())?;
        check_dim(dictionary.input_dim(), grid.dim())?;
        check_dim(dictionary.atom_count(), grid.assignment().len())?;
        let gram = dictionary.gram();
        Ok(Self {
            dictionary,
            homeostasis,
            grid,
            gram,
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn homeostasis(&self) -> &HomeostasisState {
        &self.homeostasis
    }

    pub fn grid(&self) -> &SomGrid {
        &self.grid
    }

    pub fn input_dim(&self) -> usize {
        self.dictionary.input_dim()
    }

    pub fn encode(&self, input: &[f64], n0: usize, use_homeostasis: bool) -> Result<SparseCode> {
        encode_mp_with_gram(&self.dictionary, &self.gram, &self.homeostasis, input, n0, use_homeostasis)
    }

    pub fn activity(&self, input: &[f64], n0: usize, use_homeostasis: bool) -> Result<ActivityMap> {
        project_code(&self.grid, &self.encode(input, n0, use_homeostasis)?)
    }

    /// Rounds every stored value through `f32`, the precision of the model
    /// file, so an in-memory layer and its reloaded copy encode identically.
    pub fn quantized(&self) -> Result<Self> {
        let q = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect::<Vec<_>>();
        let d = &self.dictionary;
        let h = &self.homeostasis;
        let dictionary = Dictionary::from_flat_unchecked(d.atom_count(), d.input_dim(), q(d.atoms()));
        let homeostasis = HomeostasisState::from_parts(
            h.atom_count(),
            h.bins(),
            h.c_max() as f32 as f64,
            h.eta_h() as f32 as f64,
            q(h.cdf()),
        )?;
        let g = &self.grid;
        let grid = SomGrid::from_weights(g.rows(), g.cols(), g.dim(), q(g.weights()))?
            .with_assignment(g.assignment().to_vec())?;
        Self::new(dictionary, homeostasis, grid)
    }
}

/// Two topological sparse layers with pooling in between and after.
#[derive(Debug, Clone)]
pub struct HsdNetwork {
    pub shape: NetworkShape,
    pub n0_s1: usize,
    pub n0_s2: usize,
    /// Encode through the homeostasis functions learned during training.
    pub use_homeostasis: bool,
    s1: TopoLayer,
    s2: TopoLayer,
}

impl HsdNetwork {
    pub fn new(shape: NetworkShape, n0_s1: usize, n0_s2: usize, s1: TopoLayer, s2: TopoLayer) -> Result<Self> {
        shape.validate()?;
        if n0_s1 == 0 || n0_s2 == 0 {
            return Err(Error::arg("sparsity budgets must be at least 1"));
        }
        for layer in [&s1, &s2] {
            check_dim(shape.atom_count(), layer.dictionary.atom_count())?;
            check_dim(shape.grid_side, layer.grid.rows())?;
            check_dim(shape.grid_side, layer.grid.cols())?;
        }
        let c1 = shape.pooled_side();
        check_dim(c1 * c1, s2.input_dim())?;
        Ok(Self {
            shape,
            n0_s1,
            n0_s2,
            use_homeostasis: true,
            s1,
            s2,
        })
    }

    pub fn s1(&self) -> &TopoLayer {
        &self.s1
    }

    pub fn s2(&self) -> &TopoLayer {
        &self.s2
    }

    pub fn tag(&self) -> String {
        self.shape.tag()
    }

    pub fn input_dim(&self) -> usize {
        self.s1.input_dim()
    }

    pub fn descriptor_len(&self) -> usize {
        self.shape.descriptor_len()
    }

    /// Unpooled S1 activity map of a patch.
    pub fn s1_activity(&self, patch: &Patch) -> Result<ActivityMap> {
        check_dim(self.input_dim(), patch.dim())?;
        self.s1.activity(&patch.normalized(), self.n0_s1, self.use_homeostasis)
    }

    /// Flattened C1 map, L2-normalized: the S2 input.
    pub fn c1_vector(&self, patch: &Patch) -> Result<Vec<f64>> {
        let s1 = self.s1_activity(patch)?;
        let mut v = max_pool(&s1, self.shape.pool)?.into_values();
        normalize(&mut v);
        Ok(v)
    }

    fn descriptor_from_c1(&self, c1: &[f64]) -> Result<Descriptor> {
        let s2 = self.s2.activity(c1, self.n0_s2, self.use_homeostasis)?;
        let mut values = max_pool(&s2, self.shape.pool)?.into_values();
        normalize(&mut values);
        Ok(Descriptor {
            values,
            config_tag: self.tag(),
        })
    }

    /// S1 → C1 → S2 → C2 → L2 normalization.
    pub fn encode_landmark(&self, patch: &Patch) -> Result<Descriptor> {
        let c1 = self.c1_vector(patch)?;
        self.descriptor_from_c1(&c1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub shape: NetworkShape,
    /// S1 learning settings; `n0` is the S1 sparsity budget.
    pub s1: SparseLearnConfig,
    /// S2 learning settings; `n0` is the S2 sparsity budget.
    pub s2: SparseLearnConfig,
    pub som: SomConfig,
}

impl TrainConfig {
    pub fn new(shape: NetworkShape) -> Self {
        Self {
            shape,
            s1: SparseLearnConfig { n0: 10, ..Default::default() },
            s2: SparseLearnConfig { n0: 5, seed: 1, ..Default::default() },
            som: SomConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub config_tag: String,
    pub s1_log: TrainingLog,
    pub s2_log: TrainingLog,
    pub s1_reconstruction_rate: f64,
    pub s2_reconstruction_rate: f64,
}

fn build_layer<S: AsRef<[f64]>>(
    inputs: &[S],
    shape: &NetworkShape,
    learn: &SparseLearnConfig,
    som: &SomConfig,
) -> Result<(TopoLayer, TrainingLog)> {
    let learned = learn_dictionary(inputs, shape.atom_count(), learn)?;
    let atoms: Vec<&[f64]> = (0..learned.dictionary.atom_count())
        .map(|i| learned.dictionary.atom(i))
        .collect();
    let grid = train_som(&atoms, shape.grid_side, shape.grid_side, som)?;
    let grid = assign_atoms(&grid, &learned.dictionary)?;
    let layer = TopoLayer::new(learned.dictionary, learned.homeostasis, grid)?.quantized()?;
    Ok((layer, learned.log))
}

/// Learns S1 on the patches, then S2 on their C1 maps.
pub fn train_network(patches: &[Patch], cfg: &TrainConfig) -> Result<(HsdNetwork, TrainingReport)> {
    let shape = cfg.shape;
    shape.validate()?;
    if patches.is_empty() {
        return Err(Error::arg("no training patches"));
    }
    if patches.len() < shape.atom_count() {
        return Err(Error::arg(format!(
            "{} training patches for {} atoms; need at least as many patches as atoms",
            patches.len(),
            shape.atom_count()
        )));
    }
    let inputs: Vec<Vec<f64>> = patches.iter().map(Patch::normalized).collect();

    let (s1, s1_log) = build_layer(&inputs, &shape, &cfg.s1, &cfg.som)?;
    let s1_codes = inputs
        .iter()
        .map(|x| s1.encode(x, cfg.s1.n0, true))
        .collect::<Result<Vec<_>>>()?;
    let s1_rate = reconstruction_rate(s1.dictionary(), &s1_codes, &inputs)?;

    let c1_inputs = s1_codes
        .iter()
        .map(|code| {
            let mut v = max_pool(&project_code(s1.grid(), code)?, shape.pool)?.into_values();
            normalize(&mut v);
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let som2 = SomConfig {
        seed: cfg.som.seed.wrapping_add(1),
        ..cfg.som
    };
    let (s2, s2_log) = build_layer(&c1_inputs, &shape, &cfg.s2, &som2)?;
    let s2_codes = c1_inputs
        .iter()
        .map(|x| s2.encode(x, cfg.s2.n0, true))
        .collect::<Result<Vec<_>>>()?;
    let s2_rate = reconstruction_rate(s2.dictionary(), &s2_codes, &c1_inputs)?;

    let net = HsdNetwork::new(shape, cfg.s1.n0, cfg.s2.n0, s1, s2)?;
    let report = TrainingReport {
        config_tag: shape.tag(),
        s1_log,
        s2_log,
        s1_reconstruction_rate: s1_rate,
        s2_reconstruction_rate: s2_rate,
    };
    Ok((net, report))
}
