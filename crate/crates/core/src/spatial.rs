//! Moran eigenvector spatial basis functions.
//!
//! For a binary adjacency matrix `A` and base covariates `X`, the Moran
//! operator `G = (I − P_X) A (I − P_X)` has eigenvectors orthogonal to the
//! column space of `X`; those with the largest positive eigenvalues describe
//! positively autocorrelated patterns and serve as basis columns.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::check_full_rank;

/// Symmetric 0/1 adjacency with zero diagonal, rows aligned to `area_ids`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    matrix: DMatrix<f64>,
    area_ids: Vec<String>,
}

impl AdjacencyMatrix {
    pub fn new(matrix: DMatrix<f64>, area_ids: Vec<String>) -> Result<Self> {
        let m = matrix.nrows();
        if matrix.ncols() != m || area_ids.len() != m {
            return Err(Error::shape("adjacency must be square and aligned with area ids"));
        }
        for i in 0..m {
            if matrix[(i, i)] != 0.0 {
                return Err(Error::domain(format!("self-loop at area {}", area_ids[i])));
            }
            for j in 0..m {
                let v = matrix[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::domain("adjacency entries must be 0 or 1"));
                }
                if v != matrix[(j, i)] {
                    return Err(Error::domain(format!(
                        "adjacency is asymmetric between {} and {}",
                        area_ids[i], area_ids[j]
                    )));
                }
            }
        }
        Ok(Self { matrix, area_ids })
    }

    /// Builds from an edge list over `area_ids`.
    pub fn from_edges(area_ids: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let m = area_ids.len();
        let mut a = DMatrix::zeros(m, m);
        for &(i, j) in edges {
            if i >= m || j >= m {
                return Err(Error::shape("edge endpoint out of range"));
            }
            if i == j {
                return Err(Error::domain(format!("self-loop at area {}", area_ids[i])));
            }
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        Self::new(a, area_ids)
    }

    /// Rook-contiguity lattice with areas numbered row-major `1..=rows·cols`.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let ids = (1..=rows * cols).map(|i| i.to_string()).collect();
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
            }
        }
        Self::from_edges(ids, &edges).expect("lattice edges are valid")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn area_ids(&self) -> &[String] {
        &self.area_ids
    }

    pub fn m(&self) -> usize {
        self.area_ids.len()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let m = self.m();
        (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .filter(|&(i, j)| self.matrix[(i, j)] != 0.0)
            .collect()
    }

    /// Writes the edge list format read by [`load_adjacency`].
    pub fn write_edges(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::from("# area_id area_id\n");
        for (i, j) in self.edges() {
            text.push_str(&format!("{} {}\n", self.area_ids[i], self.area_ids[j]));
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Parses a whitespace-separated edge list (`#` starts a comment). Each edge
/// may appear once in either orientation; a line that repeats an edge in the
/// other orientation is accepted.
pub fn parse_adjacency(text: &str, area_ids: &[String], path: &Path) -> Result<AdjacencyMatrix> {
    let index: HashMap<&str, usize> = area_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let m = area_ids.len();
    let mut a = DMatrix::zeros(m, m);
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(err(line, format!("expected two area ids, found {}", fields.len())));
        }
        let i = *index
            .get(fields[0])
            .ok_or_else(|| err(line, format!("unknown area id {}", fields[0])))?;
        let j = *index
            .get(fields[1])
            .ok_or_else(|| err(line, format!("unknown area id {}", fields[1])))?;
        if i == j {
            return Err(err(line, format!("self-loop on area {}", fields[0])));
        }
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    AdjacencyMatrix::new(a, area_ids.to_vec())
}

pub fn load_adjacency(path: impl AsRef<Path>, area_ids: &[String]) -> Result<AdjacencyMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_adjacency(&text, area_ids, path)
}

/// Reads an edge list whose area set is the ids it mentions, in order of
/// first appearance. Isolated areas cannot be expressed this way; use
/// [`load_adjacency`] with an explicit id list for those.
pub fn load_adjacency_ids(path: impl AsRef<Path>) -> Result<AdjacencyMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for raw in text.lines() {
        for tok in raw.split('#').next().unwrap_or("").split_whitespace() {
            if seen.insert(tok.to_string()) {
                ids.push(tok.to_string());
            }
        }
    }
    parse_adjacency(&text, &ids, path)
}

/// `(I − P_X) A (I − P_X)` with `P_X = X (XᵀX)⁻¹ Xᵀ`.
pub fn moran_operator(a: &AdjacencyMatrix, x: &DesignMatrix) -> Result<DMatrix<f64>> {
    let m = a.m();
    if x.m() != m {
        return Err(Error::shape("design rows differ from adjacency size"));
    }
    let mut residual = DMatrix::<f64>::identity(m, m);
    if x.p() > 0 {
        check_full_rank(x.matrix())?;
        let q = x.matrix().clone().qr().q();
        residual -= &q * q.transpose();
    }
    let g = &residual * a.matrix() * &residual;
    Ok((&g + g.transpose()) * 0.5)
}

/// Relative threshold for counting an eigenvalue as positive.
pub const POSITIVE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct MoranBasis {
    /// All eigenvalues of `G`, descending.
    pub spectrum: Vec<f64>,
    /// Retained eigenvalues, descending and positive.
    pub eigenvalues: Vec<f64>,
    /// `m × p` retained eigenvectors.
    pub eigenvectors: DMatrix<f64>,
    /// Count of positive eigenvalues available.
    pub positive_count: usize,
    /// Covariates projected out of the operator, when known.
    pub base_x: Option<DesignMatrix>,
}

impl MoranBasis {
    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The first `p` columns of this basis.
    pub fn truncate(&self, p: usize) -> Result<MoranBasis> {
        if p > self.p() {
            return Err(Error::InsufficientSpectrum { requested: p, available: self.p() });
        }
        Ok(MoranBasis {
            spectrum: self.spectrum.clone(),
            eigenvalues: self.eigenvalues[..p].to_vec(),
            eigenvectors: self.eigenvectors.columns(0, p).into_owned(),
            positive_count: self.positive_count,
            base_x: self.base_x.clone(),
        })
    }
}

fn orient(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

fn lexicographic(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match y.total_cmp(x) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Eigenvectors of `G` for its `p` largest positive eigenvalues.
///
/// Each eigenvector is oriented so its largest-magnitude entry is positive.
/// Eigenvalues within a relative gap of 1e-10 are ordered by their
/// eigenvectors, compared lexicographically in descending order.
pub fn moran_basis(g: &DMatrix<f64>, p: usize) -> Result<MoranBasis> {
    let m = g.nrows();
    if g.ncols() != m {
        return Err(Error::shape("Moran operator must be square"));
    }
    if p == 0 {
        return Err(Error::domain("basis size must be at least 1"));
    }
    let full = moran_spectrum(g)?;
    full.truncate(p)
}

/// The full positive-eigenvalue basis of `G`.
pub fn moran_spectrum(g: &DMatrix<f64>) -> Result<MoranBasis> {
    let m = g.nrows();
    let sym = (g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut pairs: Vec<(f64, DVector<f64>)> = (0..m)
        .map(|k| {
            let mut v = eig.eigenvectors.column(k).into_owned();
            orient(&mut v);
            (eig.eigenvalues[k], v)
        })
        .collect();
    let scale = pairs.iter().map(|(l, _)| l.abs()).fold(0.0, f64::max);
    pairs.sort_by(|(la, va), (lb, vb)| {
        if (la - lb).abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            lexicographic(va, vb)
        } else {
            lb.total_cmp(la)
        }
    });
    let threshold = POSITIVE_TOL * scale;
    let positive_count = pairs.iter().filter(|(l, _)| *l > threshold && scale > 0.0).count();
    let spectrum = pairs.iter().map(|(l, _)| *l).collect();
    let mut eigenvectors = DMatrix::zeros(m, positive_count);
    for (k, (_, v)) in pairs.iter().take(positive_count).enumerate() {
        eigenvectors.set_column(k, v);
    }
    Ok(MoranBasis {
        spectrum,
        eigenvalues: pairs.iter().take(positive_count).map(|(l, _)| *l).collect(),
        eigenvectors,
        positive_count,
        base_x: None,
    })
}

/// [`moran_basis`] for the operator built from `a` and `x`, recording `x`.
pub fn moran_basis_for(a: &AdjacencyMatrix, x: &DesignMatrix, p: usize) -> Result<MoranBasis> {
    let mut basis = moran_basis(&moran_operator(a, x)?, p)?;
    basis.base_x = Some(x.clone());
    Ok(basis)
}

/// `[X | basis]` with basis columns named `mb_1..mb_p`.
pub fn augment_design(x: &DesignMatrix, basis: &MoranBasis) -> Result<DesignMatrix> {
    if basis.eigenvectors.nrows() != x.m() {
        return Err(Error::shape(format!(
            "basis has {} rows, design has {}",
            basis.eigenvectors.nrows(),
            x.m()
        )));
    }
    let (m, p0, p) = (x.m(), x.p(), basis.p());
    let mut out = DMatrix::zeros(m, p0 + p);
    out.columns_mut(0, p0).copy_from(x.matrix());
    out.columns_mut(p0, p).copy_from(&basis.eigenvectors);
    let mut names = x.columns().to_vec();
    names.extend((1..=p).map(|k| format!("mb_{k}")));
    DesignMatrix::new(out, names)
}

/// Candidate designs `[1 | G_p]` for every `p` in `p_grid` (0 allowed).
pub fn candidate_designs(a: &AdjacencyMatrix, p_grid: &[usize]) -> Result<Vec<DesignMatrix>> {
    let base = DesignMatrix::intercept(a.m());
    let g = moran_operator(a, &base)?;
    let full = moran_spectrum(&g)?;
    p_grid
        .iter()
        .map(|&p| augment_design(&base, &full.truncate(p)?))
        .collect()
}
