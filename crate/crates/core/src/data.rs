//! Observations, normalization matrices and the normalized moment matrix Ψ.
//!
//! Indices are 0-based throughout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, Mat};

/// Columns whose second moment falls below this are rejected.
pub const DEGENERATE_MOMENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: Mat,
    z: Mat,
    zbar: Option<Mat>,
    const_instr_idx: usize,
    exo_idx: Vec<usize>,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
    pub zbar_names: Vec<String>,
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn is_ones(col: &[f64]) -> bool {
    col.iter().all(|v| (v - 1.0).abs() <= 1e-12)
}

impl Dataset {
    /// Builds and validates a dataset. Without a declared constant index the
    /// first all-ones instrument column is used.
    pub fn new(y: Vec<f64>, x: Mat, z: Mat, const_instr_idx: Option<usize>, exo_idx: Vec<usize>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidDataset(format!("need n >= 2, got {n}")));
        }
        if x.cols == 0 || z.cols == 0 {
            return Err(Error::InvalidDataset("need K >= 1 and L >= 1".into()));
        }
        if x.rows != n || z.rows != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} rows, x has {}, z has {}",
                x.rows, z.rows
            )));
        }
        if y.iter().chain(&x.data).chain(&z.data).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite observation".into()));
        }
        let c = match const_instr_idx {
            Some(c) => {
                if c >= z.cols {
                    return Err(Error::InvalidDataset(format!("constant index {c} out of range")));
                }
                if !is_ones(&z.col(c)) {
                    return Err(Error::InvalidDataset(format!("instrument {c} is not identically 1")));
                }
                c
            }
            None => (0..z.cols)
                .find(|&l| is_ones(&z.col(l)))
                .ok_or_else(|| Error::InvalidDataset("no all-ones instrument column".into()))?,
        };
        for k in 0..x.cols {
            if mean_sq(&x.col(k)) < DEGENERATE_MOMENT {
                return Err(Error::DegenerateColumn(k));
            }
        }
        for l in 0..z.cols {
            if mean_sq(&z.col(l)) < DEGENERATE_MOMENT {
                return Err(Error::DegenerateColumn(l));
            }
        }
        let mut exo = exo_idx;
        exo.sort_unstable();
        exo.dedup();
        for &k in &exo {
            if k >= x.cols {
                return Err(Error::InvalidDataset(format!("exogenous index {k} out of range")));
            }
            let xk = x.col(k);
            if !(0..z.cols).any(|l| z.col(l) == xk) {
                return Err(Error::InvalidDataset(format!("exogenous regressor {k} is not an instrument column")));
            }
        }
        let (kx, lz) = (x.cols, z.cols);
        Ok(Dataset {
            y,
            x,
            z,
            zbar: None,
            const_instr_idx: c,
            exo_idx: exo,
            x_names: names("x", kx),
            z_names: names("z", lz),
            zbar_names: Vec::new(),
        })
    }

    pub fn with_zbar(mut self, zbar: Mat) -> Result<Self> {
        if zbar.rows != self.n() || zbar.cols == 0 {
            return Err(Error::DimensionMismatch(format!("zbar is {}x{}, n = {}", zbar.rows, zbar.cols, self.n())));
        }
        for l in 0..zbar.cols {
            if mean_sq(&zbar.col(l)) < DEGENERATE_MOMENT {
                return Err(Error::DegenerateColumn(l));
            }
        }
        self.zbar_names = names("zbar", zbar.cols);
        self.zbar = Some(zbar);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn k(&self) -> usize {
        self.x.cols
    }
    pub fn l(&self) -> usize {
        self.z.cols
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn x(&self) -> &Mat {
        &self.x
    }
    pub fn z(&self) -> &Mat {
        &self.z
    }
    pub fn zbar(&self) -> Option<&Mat> {
        self.zbar.as_ref()
    }
    pub fn const_instr_idx(&self) -> usize {
        self.const_instr_idx
    }
    pub fn exo_idx(&self) -> &[usize] {
        &self.exo_idx
    }

    /// Residuals `y - X beta`.
    pub fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        let xb = self.x.mul_vec(beta);
        self.y.iter().zip(xb).map(|(y, f)| y - f).collect()
    }

    /// Dataset whose instruments are its own regressors, for the
    /// all-exogenous (square-root Lasso) case. Needs a constant regressor.
    pub fn mirrored(&self) -> Result<Self> {
        let mut ds = Dataset::new(self.y.clone(), self.x.clone(), self.x.clone(), None, (0..self.k()).collect())?;
        ds.x_names = self.x_names.clone();
        ds.z_names = self.x_names.clone();
        Ok(ds)
    }

    /// Same observations with a new outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch("outcome length".into()));
        }
        let mut ds = self.clone();
        ds.y = y;
        Ok(ds)
    }
}

pub fn mean_sq(v: &[f64]) -> f64 {
    let sq: Vec<f64> = v.iter().map(|a| a * a).collect();
    pairwise_sum(&sq) / v.len() as f64
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum XNorm {
    #[default]
    Rms,
    MaxAbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    Rms,
    MaxAbs,
    /// `(x•z)_l^{-1}` on the listed rows, `z_{l*}^{-1}` elsewhere.
    Mixed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagScale {
    pub entries: Vec<f64>,
    pub mode: ScaleMode,
}

impl DiagScale {
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn compute_dx(ds: &Dataset, mode: XNorm) -> Result<DiagScale> {
    let mut entries = Vec::with_capacity(ds.k());
    for k in 0..ds.k() {
        let col = ds.x.col(k);
        let m2 = mean_sq(&col);
        if m2 < DEGENERATE_MOMENT {
            return Err(Error::DegenerateColumn(k));
        }
        entries.push(match mode {
            XNorm::Rms => 1.0 / m2.sqrt(),
            XNorm::MaxAbs => 1.0 / max_abs(&col),
        });
    }
    let mode = match mode {
        XNorm::Rms => ScaleMode::Rms,
        XNorm::MaxAbs => ScaleMode::MaxAbs,
    };
    Ok(DiagScale { entries, mode })
}

/// `(x•z)_l = max_k E_n[(X_k Z_l)^2 / E_n[X_k^2]]^{1/2}`, over all regressors.
pub fn x_dot_z(ds: &Dataset, l: usize) -> f64 {
    let zl = ds.z.col(l);
    let mut best: f64 = 0.0;
    for k in 0..ds.k() {
        let xk = ds.x.col(k);
        let m2 = mean_sq(&xk);
        let prod: Vec<f64> = xk.iter().zip(&zl).map(|(a, b)| a * b).collect();
        best = best.max(mean_sq(&prod) / m2);
    }
    best.sqrt()
}

pub fn compute_dz(ds: &Dataset, cone_set: &[usize]) -> Result<DiagScale> {
    if !cone_set.contains(&ds.const_instr_idx) {
        return Err(Error::ConstantMissing);
    }
    if let Some(&l) = cone_set.iter().find(|&&l| l >= ds.l()) {
        return Err(Error::DimensionMismatch(format!("instrument index {l} out of range")));
    }
    let mut entries = Vec::with_capacity(ds.l());
    for l in 0..ds.l() {
        let zl = ds.z.col(l);
        if mean_sq(&zl) < DEGENERATE_MOMENT {
            return Err(Error::DegenerateColumn(l));
        }
        let v = if cone_set.contains(&l) { x_dot_z(ds, l) } else { max_abs(&zl) };
        entries.push(1.0 / v);
    }
    let mut set = cone_set.to_vec();
    set.sort_unstable();
    set.dedup();
    Ok(DiagScale { entries, mode: ScaleMode::Mixed(set) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiMatrix {
    /// L×K.
    pub values: Mat,
    pub dx: DiagScale,
    pub dz: DiagScale,
}

impl PsiMatrix {
    pub fn from_values(values: Mat) -> Self {
        let dx = DiagScale { entries: vec![1.0; values.cols], mode: ScaleMode::Rms };
        let dz = DiagScale { entries: vec![1.0; values.rows], mode: ScaleMode::MaxAbs };
        PsiMatrix { values, dx, dz }
    }
    pub fn rows(&self) -> usize {
        self.values.rows
    }
    pub fn cols(&self) -> usize {
        self.values.cols
    }
}

/// `(1/n) D_Z Zᵀ X D_X` for an arbitrary instrument matrix.
pub fn psi_from(z: &Mat, x: &Mat, dz: &DiagScale, dx: &DiagScale) -> Result<PsiMatrix> {
    if dx.len() != x.cols || dz.len() != z.cols || z.rows != x.rows {
        return Err(Error::DimensionMismatch(format!(
            "z {}x{}, x {}x{}, dz {}, dx {}",
            z.rows,
            z.cols,
            x.rows,
            x.cols,
            dz.len(),
            dx.len()
        )));
    }
    let n = x.rows as f64;
    let zt = z.transpose();
    let xt = x.transpose();
    let mut values = Mat::zeros(z.cols, x.cols);
    let mut buf = vec![0.0; x.rows];
    for l in 0..z.cols {
        for k in 0..x.cols {
            for (b, (a, c)) in buf.iter_mut().zip(zt.row(l).iter().zip(xt.row(k))) {
                *b = a * c;
            }
            values[(l, k)] = dz.entries[l] * dx.entries[k] * pairwise_sum(&buf) / n;
        }
    }
    Ok(PsiMatrix { values, dx: dx.clone(), dz: dz.clone() })
}

pub fn compute_psi(ds: &Dataset, dx: &DiagScale, dz: &DiagScale) -> Result<PsiMatrix> {
    psi_from(&ds.z, &ds.x, dz, dx)
}

/// `Q̂_l(β) = (1/n) Σ z_li² (y_i − x_iᵀβ)²`.
pub fn qhat(ds: &Dataset, beta: &[f64], l: usize) -> Result<f64> {
    if beta.len() != ds.k() || l >= ds.l() {
        return Err(Error::DimensionMismatch(format!("beta {} vs K {}, l {l} vs L {}", beta.len(), ds.k(), ds.l())));
    }
    let u = ds.residuals(beta);
    let w: Vec<f64> = u.iter().enumerate().map(|(i, r)| ds.z[(i, l)] * r).collect();
    Ok(mean_sq(&w))
}

/// CSV column roles, by header name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ColumnRoles {
    pub outcome: String,
    pub regressors: Vec<String>,
    pub instruments: Vec<String>,
    #[serde(default)]
    pub zbar: Vec<String>,
    #[serde(default)]
    pub constant: Option<String>,
    #[serde(default)]
    pub exogenous: Vec<String>,
}

impl ColumnRoles {
    /// Outcome, regressors and zbar must be disjoint; instruments may repeat
    /// regressor columns (that is how exogenous regressors are declared) but
    /// not the outcome or zbar columns.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for c in std::iter::once(&self.outcome).chain(&self.regressors).chain(&self.zbar) {
            if !seen.insert(c.as_str()) {
                return Err(Error::Parse(format!("column '{c}' assigned to more than one role")));
            }
        }
        let mut inst = std::collections::HashSet::new();
        for c in &self.instruments {
            if !inst.insert(c.as_str()) {
                return Err(Error::Parse(format!("instrument column '{c}' listed twice")));
            }
            if *c == self.outcome || self.zbar.contains(c) {
                return Err(Error::Parse(format!("column '{c}' is both an instrument and outcome/zbar")));
            }
        }
        for e in &self.exogenous {
            if !self.regressors.contains(e) || !self.instruments.contains(e) {
                return Err(Error::Parse(format!("exogenous column '{e}' must be both a regressor and an instrument")));
            }
        }
        if let Some(c) = &self.constant {
            if !self.instruments.contains(c) {
                return Err(Error::Parse(format!("constant column '{c}' is not an instrument")));
            }
        }
        if self.regressors.is_empty() || self.instruments.is_empty() {
            return Err(Error::Parse("need at least one regressor and one instrument".into()));
        }
        Ok(())
    }
}

fn parse_cell(s: &str, line: u64, col: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse(format!("line {line}, column '{col}': '{s}' is not a number")))
}

pub fn read_csv(path: &Path, roles: &ColumnRoles) -> Result<Dataset> {
    roles.validate()?;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("column '{name}' not found in header")))
    };
    let iy = find(&roles.outcome)?;
    let ix: Vec<usize> = roles.regressors.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let iz: Vec<usize> = roles.instruments.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let izb: Vec<usize> = roles.zbar.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let mut y = Vec::new();
    let (mut xd, mut zd, mut zbd) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Parse(format!("line {line}: expected {} fields, got {}", header.len(), rec.len())));
        }
        let cell = |j: usize| parse_cell(&rec[j], line, &header[j]);
        y.push(cell(iy)?);
        for &j in &ix {
            xd.push(cell(j)?);
        }
        for &j in &iz {
            zd.push(cell(j)?);
        }
        for &j in &izb {
            zbd.push(cell(j)?);
        }
    }
    let n = y.len();
    let x = Mat { rows: n, cols: ix.len(), data: xd };
    let z = Mat { rows: n, cols: iz.len(), data: zd };
    let cidx = roles.constant.as_ref().map(|c| roles.instruments.iter().position(|i| i == c).unwrap());
    let exo = roles.exogenous.iter().map(|e| roles.regressors.iter().position(|r| r == e).unwrap()).collect();
    let mut ds = Dataset::new(y, x, z, cidx, exo)?;
    if !izb.is_empty() {
        ds = ds.with_zbar(Mat { rows: n, cols: izb.len(), data: zbd })?;
    }
    ds.x_names = roles.regressors.clone();
    ds.z_names = roles.instruments.clone();
    ds.zbar_names = roles.zbar.clone();
    Ok(ds)
}

/// Writes every column once and returns the roles that read the file back.
/// An instrument that duplicates a regressor by name, or that is the copy of
/// an exogenous regressor, is stored under the regressor's column.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<ColumnRoles> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let z_role: Vec<String> = (0..ds.l())
        .map(|l| {
            let zl = ds.z.col(l);
            ds.exo_idx
                .iter()
                .find(|&&k| ds.x.col(k) == zl)
                .map_or_else(|| ds.z_names[l].clone(), |&k| ds.x_names[k].clone())
        })
        .collect();
    let z_extra: Vec<usize> = (0..ds.l()).filter(|&l| !ds.x_names.contains(&z_role[l])).collect();
    let mut header = vec!["y".to_string()];
    header.extend(ds.x_names.iter().cloned());
    header.extend(z_extra.iter().map(|&l| ds.z_names[l].clone()));
    header.extend(ds.zbar_names.iter().cloned());
    wtr.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for i in 0..ds.n() {
        let mut rec = vec![ds.y[i].to_string()];
        rec.extend(ds.x.row(i).iter().map(|v| v.to_string()));
        rec.extend(z_extra.iter().map(|&l| ds.z[(i, l)].to_string()));
        if let Some(zb) = &ds.zbar {
            rec.extend(zb.row(i).iter().map(|v| v.to_string()));
        }
        wtr.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(ColumnRoles {
        outcome: "y".into(),
        regressors: ds.x_names.clone(),
        instruments: z_role.clone(),
        zbar: ds.zbar_names.clone(),
        constant: Some(z_role[ds.const_instr_idx].clone()),
        exogenous: ds.exo_idx.iter().map(|&k| ds.x_names[k].clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(x: Vec<Vec<f64>>, z: Vec<Vec<f64>>) -> Dataset {
        let n = x.len();
        Dataset::new(vec![1.0; n], Mat::from_rows(&x), Mat::from_rows(&z), None, vec![]).unwrap()
    }

    #[test]
    fn dx_examples() {
        let d = ds(vec![vec![1.0, 3.0], vec![1.0, 4.0]], vec![vec![1.0], vec![1.0]]);
        let rms = compute_dx(&d, XNorm::Rms).unwrap();
        assert_eq!(rms.entries[0], 1.0);
        assert!((rms.entries[1] - 1.0 / 12.5f64.sqrt()).abs() < 1e-15);
        let d = ds(vec![vec![3.0], vec![-4.0]], vec![vec![1.0], vec![1.0]]);
        assert_eq!(compute_dx(&d, XNorm::MaxAbs).unwrap().entries[0], 0.25);
    }

    #[test]
    fn dz_examples() {
        let d = ds(vec![vec![1.0], vec![1.0]], vec![vec![1.0, 2.0], vec![1.0, -2.0]]);
        let dz = compute_dz(&d, &[0]).unwrap();
        assert_eq!(dz.entries, vec![1.0, 0.5]);
        assert_eq!(compute_dz(&d, &[1]), Err(Error::ConstantMissing));
    }

    #[test]
    fn zero_column_rejected() {
        let r = Dataset::new(
            vec![1.0, 2.0],
            Mat::from_rows(&[vec![0.0], vec![0.0]]),
            Mat::from_rows(&[vec![1.0], vec![1.0]]),
            None,
            vec![],
        );
        assert_eq!(r, Err(Error::DegenerateColumn(0)));
    }

    #[test]
    fn constant_psi_and_qhat() {
        let d = ds(vec![vec![1.0]; 3], vec![vec![1.0]; 3]);
        let dx = compute_dx(&d, XNorm::Rms).unwrap();
        let dz = compute_dz(&d, &[0]).unwrap();
        assert_eq!(compute_psi(&d, &dx, &dz).unwrap().values.data, vec![1.0]);
        assert_eq!(qhat(&d, &[1.0], 0).unwrap(), 0.0);
        assert_eq!(qhat(&d, &[0.0], 0).unwrap(), 1.0);
    }
}
