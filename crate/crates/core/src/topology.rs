//! Kohonen map used to lay dictionary atoms out on a 2-D grid so that
//! neighbouring cells hold similar atoms.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hierarchy::ActivityMap;
use crate::linalg::sq_dist;
use crate::sparse_layer::{Dictionary, SparseCode};

/// Gaussian neighbourhood values below this are skipped; their contribution
/// is under f64 resolution.
const NEIGHBOURHOOD_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SomConfig {
    pub alpha0: f64,
    /// Initial neighbourhood radius in grid units.
    pub sigma0: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SomConfig {
    fn default() -> Self {
        Self {
            alpha0: 0.5,
            sigma0: 4.0,
            iterations: 5000,
            seed: 0,
        }
    }
}

impl SomConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(Error::arg("alpha0 must lie in (0, 1]"));
        }
        if !(self.sigma0 >= 0.5) {
            return Err(Error::arg("sigma0 must be at least 0.5"));
        }
        if self.iterations == 0 {
            return Err(Error::arg("iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Grid of weight vectors plus the atom → cell assignment once atoms have
/// been placed.
#[derive(Debug, Clone, PartialEq)]
pub struct SomGrid {
    rows: usize,
    cols: usize,
    dim: usize,
    weights: Vec<f64>,
    assignment: Vec<(usize, usize)>,
}

impl SomGrid {
    pub fn from_weights(rows: usize, cols: usize, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(Error::arg("grid dimensions must be non-zero"));
        }
        check_dim(rows * cols * dim, weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::arg("grid weights must be finite"));
        }
        Ok(Self {
            rows,
            cols,
            dim,
            weights,
            assignment: Vec::new(),
        })
    }

    pub(crate) fn with_assignment(mut self, assignment: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = vec![false; self.rows * self.cols];
        for &(r, c) in &assignment {
            if r >= self.rows || c >= self.cols || std::mem::replace(&mut seen[r * self.cols + c], true) {
                return Err(Error::Format("invalid atom assignment".into()));
            }
        }
        self.assignment = assignment;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> &[f64] {
        let k = (row * self.cols + col) * self.dim;
        &self.weights[k..k + self.dim]
    }

    /// Atom → `(row, col)`; empty until [`assign_atoms`] has run.
    pub fn assignment(&self) -> &[(usize, usize)] {
        &self.assignment
    }

    /// Inverse of the assignment: which atom sits in each cell, row-major.
    pub fn occupancy(&self) -> Vec<Option<usize>> {
        let mut occ = vec![None; self.cell_count()];
        for (atom, &(r, c)) in self.assignment.iter().enumerate() {
            occ[r * self.cols + c] = Some(atom);
        }
        occ
    }
}

/// Best matching cell, ties resolved to the lexicographically smallest
/// `(row, col)`.
pub fn som_winner(grid: &SomGrid, x: &[f64]) -> Result<(usize, usize)> {
    check_dim(grid.dim, x.len())?;
    let mut best = (0, f64::INFINITY);
    for (k, w) in grid.weights.chunks_exact(grid.dim).enumerate() {
        let d = sq_dist(w, x);
        if d < best.1 {
            best = (k, d);
        }
    }
    Ok((best.0 / grid.cols, best.0 % grid.cols))
}

/// Gaussian neighbourhood `exp(-d² / 2σ²)` of the Euclidean grid distance.
pub fn neighbourhood(a: (usize, usize), b: (usize, usize), sigma: f64) -> f64 {
    let dr = a.0 as f64 - b.0 as f64;
    let dc = a.1 as f64 - b.1 as f64;
    (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp()
}

/// `w_i ← w_i + α·h(d(i, winner); σ)·(x − w_i)` for every cell.
pub fn som_update(grid: &mut SomGrid, x: &[f64], winner: (usize, usize), alpha: f64, sigma: f64) -> Result<()> {
    check_dim(grid.dim, x.len())?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg("alpha must lie in (0, 1]"));
    }
    if !(sigma > 0.0) {
        return Err(Error::arg("sigma must be positive"));
    }
    let (cols, dim) = (grid.cols, grid.dim);
    for (k, w) in grid.weights.chunks_exact_mut(dim).enumerate() {
        let h = neighbourhood((k / cols, k % cols), winner, sigma);
        if h < NEIGHBOURHOOD_FLOOR {
            continue;
        }
        let rate = alpha * h;
        for (wi, xi) in w.iter_mut().zip(x) {
            *wi += rate * (xi - *wi);
        }
    }
    Ok(())
}

/// Trains a `rows`×`cols` map on `samples`, drawn in reshuffled passes, with
/// linearly decaying `α(t) = α0(1 − t/T)` and `σ(t) = max(0.5, σ0(1 − t/T))`.
pub fn train_som<S: AsRef<[f64]>>(samples: &[S], rows: usize, cols: usize, cfg: &SomConfig) -> Result<SomGrid> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::arg("SOM needs at least one sample"));
    }
    let dim = samples[0].as_ref().len();
    if dim == 0 || samples.iter().any(|s| s.as_ref().len() != dim) {
        return Err(Error::arg("SOM samples must share one non-zero dimension"));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::arg("grid dimensions must be non-zero"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = Vec::with_capacity(rows * cols * dim);
    for _ in 0..rows * cols {
        weights.extend_from_slice(samples[rng.gen_range(0..samples.len())].as_ref());
    }
    let mut grid = SomGrid::from_weights(rows, cols, dim, weights)?;

    let t_max = cfg.iterations as f64;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = order.len();
    for t in 0..cfg.iterations {
        if cursor == order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let x = samples[order[cursor]].as_ref();
        cursor += 1;
        let decay = 1.0 - t as f64 / t_max;
        let alpha = cfg.alpha0 * decay;
        let sigma = (cfg.sigma0 * decay).max(0.5);
        let winner = som_winner(&grid, x)?;
        som_update(&mut grid, x, winner, alpha, sigma)?;
    }
    Ok(grid)
}

/// Places every atom in its own cell by greedily committing the globally
/// smallest remaining atom–cell distance.
pub fn assign_atoms(grid: &SomGrid, dict: &Dictionary) -> Result<SomGrid> {
    check_dim(grid.dim, dict.input_dim())?;
    let m = dict.atom_count();
    let cells = grid.cell_count();
    if m > cells {
        return Err(Error::arg(format!("{m} atoms do not fit on a {}x{} grid", grid.rows, grid.cols)));
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(m * cells);
    for a in 0..m {
        let atom = dict.atom(a);
        for (c, w) in grid.weights.chunks_exact(grid.dim).enumerate() {
            pairs.push((sq_dist(atom, w), a, c));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut atom_cell: Vec<Option<usize>> = vec![None; m];
    let mut taken = vec![false; cells];
    let mut placed = 0;
    for (_, a, c) in pairs {
        if atom_cell[a].is_none() && !taken[c] {
            atom_cell[a] = Some(c);
            taken[c] = true;
            placed += 1;
            if placed == m {
                break;
            }
        }
    }
    let assignment = atom_cell
        .into_iter()
        .map(|c| {
            let c = c.expect("every atom placed");
            (c / grid.cols, c % grid.cols)
        })
        .collect();
    let mut out = grid.clone();
    out.assignment = assignment;
    Ok(out)
}

/// Sum of squared atom–cell distances of the current assignment.
pub fn assignment_cost(grid: &SomGrid, dict: &Dictionary) -> f64 {
    grid.assignment
        .iter()
        .enumerate()
        .map(|(a, &(r, c))| sq_dist(dict.atom(a), grid.weight(r, c)))
        .sum()
}

/// Writes `|a_i|` at the cell of each active atom (summing on collisions).
pub fn project_code(grid: &SomGrid, code: &SparseCode) -> Result<ActivityMap> {
    let mut map = ActivityMap::zeros(grid.rows, grid.cols);
    for &(atom, a) in code.entries() {
        let &(r, c) = grid
            .assignment
            .get(atom)
            .ok_or_else(|| Error::OutOfBounds(format!("atom {atom} has no grid cell")))?;
        *map.get_mut(r, c) += a.abs();
    }
    Ok(map)
}

/// Mean atom distance over 4-adjacent occupied cell pairs, and over
/// `random_pairs` random pairs of distinct occupied cells.
pub fn topographic_distances(grid: &SomGrid, dict: &Dictionary, random_pairs: usize, seed: u64) -> (f64, f64) {
    let occ = grid.occupancy();
    let cols = grid.cols;
    let dist = |a: usize, b: usize| sq_dist(dict.atom(a), dict.atom(b)).sqrt();
    let mut adj = Vec::new();
    for r in 0..grid.rows {
        for c in 0..cols {
            let Some(a) = occ[r * cols + c] else { continue };
            if c + 1 < cols {
                if let Some(b) = occ[r * cols + c + 1] {
                    adj.push(dist(a, b));
                }
            }
            if r + 1 < grid.rows {
                if let Some(b) = occ[(r + 1) * cols + c] {
                    adj.push(dist(a, b));
                }
            }
        }
    }
    let atoms: Vec<usize> = occ.iter().flatten().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = Vec::with_capacity(random_pairs);
    if atoms.len() >= 2 {
        while random.len() < random_pairs {
            let a = atoms[rng.gen_range(0..atoms.len())];
            let b = atoms[rng.gen_range(0..atoms.len())];
            if a != b {
                random.push(dist(a, b));
            }
        }
    }
    (crate::linalg::mean(&adj), crate::linalg::mean(&random))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, w: &[&[f64]]) -> SomGrid {
        let dim = w[0].len();
        SomGrid::from_weights(rows, cols, dim, w.concat()).unwrap()
    }

    #[test]
    fn winner_exact_and_nearest() {
        let g = grid(2, 1, &[&[0.0, 0.0], &[1.0, 1.0]]);
        assert_eq!(som_winner(&g, &[0.0, 0.0]).unwrap(), (0, 0));
        assert_eq!(som_winner(&g, &[0.9, 0.9]).unwrap(), (1, 0));
        assert!(som_winner(&g, &[0.9]).is_err());
    }

    #[test]
    fn winner_tie_is_lexicographic() {
        let g = grid(1, 3, &[&[1.0], &[-1.0], &[1.0]]);
        assert_eq!(som_winner(&g, &[0.0]).unwrap(), (0, 0));
        assert_eq!(som_winner(&g, &[1.0]).unwrap(), (0, 0));
    }

    #[test]
    fn winner_moves_by_alpha() {
        let mut g = grid(1, 2, &[&[0.0, 0.0], &[5.0, 5.0]]);
        som_update(&mut g, &[1.0, 2.0], (0, 0), 0.25, 0.5).unwrap();
        assert_eq!(g.weight(0, 0), &[0.25, 0.5]);
    }

    #[test]
    fn far_cells_do_not_move() {
        let mut g = SomGrid::from_weights(1, 40, 1, vec![0.0; 40]).unwrap();
        som_update(&mut g, &[1.0], (0, 0), 1.0, 1.0).unwrap();
        assert!(g.weight(0, 39)[0].abs() < 1e-9);
    }

    #[test]
    fn update_validates_rates() {
        let mut g = grid(1, 1, &[&[0.0]]);
        assert!(som_update(&mut g, &[1.0], (0, 0), 0.0, 1.0).is_err());
        assert!(som_update(&mut g, &[1.0], (0, 0), 0.5, 0.0).is_err());
    }

    #[test]
    fn train_rejects_bad_config() {
        let cfg = SomConfig { iterations: 0, ..Default::default() };
        assert!(train_som(&[vec![1.0]], 2, 2, &cfg).is_err());
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(train_som(&empty, 2, 2, &SomConfig::default()).is_err());
    }

    #[test]
    fn identical_samples_attract_all_weights() {
        let v = vec![0.3, -0.2, 0.9];
        let samples = vec![v.clone(); 5];
        let g = train_som(&samples, 3, 3, &SomConfig { iterations: 200, ..Default::default() }).unwrap();
        for w in g.weights().chunks(3) {
            for (a, b) in w.iter().zip(&v) {
                assert!((a - b).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn assign_perfect_match_and_errors() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8], vec![-0.6, 0.8]];
        let dict = Dictionary::from_rows(&rows).unwrap();
        let g = SomGrid::from_weights(2, 2, 2, rows.concat()).unwrap();
        let placed = assign_atoms(&g, &dict).unwrap();
        assert!(assignment_cost(&placed, &dict) < 1e-9);
        assert_eq!(placed.assignment(), &[(0, 0), (0, 1), (1, 0), (1, 1)]);
        let small = SomGrid::from_weights(1, 3, 2, vec![0.0; 6]).unwrap();
        assert!(assign_atoms(&small, &dict).is_err());
    }

    #[test]
    fn projection_examples() {
        let dict = Dictionary::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let g = SomGrid::from_weights(2, 2, 2, vec![0.0, 1.0, 1.0, 0.0, 0.5, 0.5, 0.2, 0.1]).unwrap();
        let g = assign_atoms(&g, &dict).unwrap();
        assert!(project_code(&g, &SparseCode::empty()).unwrap().values().iter().all(|&v| v == 0.0));
        let m = project_code(&g, &SparseCode::from_entries([(0, -0.5)])).unwrap();
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.values().iter().filter(|&&v| v != 0.0).count(), 1);
        let m = project_code(&g, &SparseCode::from_entries([(0, 0.5), (1, 0.25)])).unwrap();
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.get(0, 0), 0.25);
    }
}
