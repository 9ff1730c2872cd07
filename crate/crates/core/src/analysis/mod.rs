//! Exploratory analysis: PCA projections, Pearson correlation against the
//! label, and the hard-to-detect region where faulty runs overlap benign ones.
//!
//! Pearson against a 0/1 label is the point-biserial correlation.

mod report;

use serde::{Deserialize, Serialize};

use crate::dataset::feature_class;

pub use report::{
    scatter_svg, write_class_summary_csv, write_components_csv, write_projection_csv,
    write_ranking_csv,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalysisError {
    #[error("PCA needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("requested {k} components but there are only {features} features")]
    TooManyComponents { k: usize, features: usize },
    #[error("matrix contains non-finite values")]
    NonFinite,
    #[error("rows have different widths")]
    Ragged,
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 values")]
    TooShort,
    #[error("correlation undefined for constant input")]
    Constant,
    #[error("no benign points to bound")]
    NoBenign,
    #[error("requested top {k} of {available} ranked features")]
    TooManyFeatures { k: usize, available: usize },
}

/// Principal components of a centered data matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub center: Vec<f64>,
    /// `k` unit-norm directions, largest-magnitude entry positive.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the kept components, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// All covariance eigenvalues, non-increasing.
    pub spectrum: Vec<f64>,
    /// True where a kept component's eigenvalue is numerically zero.
    pub degenerate: Vec<bool>,
}

impl PcaModel {
    pub fn project_row(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|v| v.iter().zip(row).zip(&self.center).map(|((a, x), c)| a * (x - c)).sum())
            .collect()
    }

    pub fn project(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.project_row(r)).collect()
    }

    /// Inverse of [`project_row`](Self::project_row) on the span of the components.
    pub fn reconstruct(&self, point: &[f64]) -> Vec<f64> {
        let mut out = self.center.clone();
        for (z, v) in point.iter().zip(&self.components) {
            for (o, a) in out.iter_mut().zip(v) {
                *o += z * a;
            }
        }
        out
    }

    /// Share of total variance carried by each kept component.
    pub fn explained_ratio(&self) -> Vec<f64> {
        let total: f64 = self.spectrum.iter().map(|l| l.max(0.0)).sum();
        self.eigenvalues
            .iter()
            .map(|l| if total > 0.0 { l.max(0.0) / total } else { 0.0 })
            .collect()
    }
}

/// Top-`k` eigenpairs of the sample covariance (divisor `n - 1`).
pub fn pca_fit(rows: &[Vec<f64>], k: usize) -> Result<PcaModel, AnalysisError> {
    let n = rows.len();
    if n < 2 {
        return Err(AnalysisError::TooFewRows(n));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(AnalysisError::Ragged);
    }
    if k > d {
        return Err(AnalysisError::TooManyComponents { k, features: d });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let center: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let x = nalgebra::DMatrix::from_fn(n, d, |i, j| rows[i][j] - center[j]);
    let cov = (x.transpose() * &x) / (n as f64 - 1.0);
    let eig = nalgebra::SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let scale = spectrum.first().map_or(0.0, |l| l.abs()).max(1.0);

    let mut components = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (j, a)| if a.abs() > v[best].abs() { j } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for a in &mut v {
            *a *= sign / norm;
        }
        components.push(v);
    }
    let eigenvalues: Vec<f64> = spectrum[..k].to_vec();
    let degenerate = eigenvalues.iter().map(|l| l.abs() <= 1e-12 * scale).collect();
    Ok(PcaModel {
        center,
        components,
        eigenvalues,
        spectrum,
        degenerate,
    })
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooShort);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::Constant);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub feature: String,
    pub class: String,
    pub r: f64,
}

/// Five-number summary of |r| within one counter class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: String,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// Sorted by |r| descending, ties by feature name.
    pub ranking: Vec<FeatureCorrelation>,
    /// Features whose r is undefined (constant over the rows used).
    pub undefined: Vec<String>,
    pub classes: Vec<ClassSummary>,
}

impl CorrelationReport {
    pub fn r(&self, feature: &str) -> Option<f64> {
        self.ranking.iter().find(|f| f.feature == feature).map(|f| f.r)
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn class_of(feature: &str) -> String {
    feature_class(feature).map_or_else(|| "other".to_string(), |c| c.name().to_string())
}

/// Correlates every column of `rows` with `labels`.
pub fn correlation_report(feature_names: &[String], rows: &[Vec<f64>], labels: &[u8]) -> CorrelationReport {
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let mut ranking = Vec::new();
    let mut undefined = Vec::new();
    for (j, name) in feature_names.iter().enumerate() {
        let x: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        match pearson_r(&x, &y) {
            Ok(r) => ranking.push(FeatureCorrelation {
                feature: name.clone(),
                class: class_of(name),
                r,
            }),
            Err(_) => undefined.push(name.clone()),
        }
    }
    ranking.sort_by(|a, b| b.r.abs().total_cmp(&a.r.abs()).then_with(|| a.feature.cmp(&b.feature)));

    let mut names: Vec<String> = ranking.iter().map(|f| f.class.clone()).collect();
    names.sort();
    names.dedup();
    let classes = names
        .into_iter()
        .map(|class| {
            let mut v: Vec<f64> = ranking.iter().filter(|f| f.class == class).map(|f| f.r.abs()).collect();
            v.sort_by(f64::total_cmp);
            ClassSummary {
                count: v.len(),
                min: v[0],
                q1: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q3: quantile(&v, 0.75),
                max: v[v.len() - 1],
                class,
            }
        })
        .collect();
    CorrelationReport {
        ranking,
        undefined,
        classes,
    }
}

/// The `k` most correlated features, in ranking order.
pub fn select_top_k(report: &CorrelationReport, k: usize) -> Result<Vec<String>, AnalysisError> {
    if k > report.ranking.len() {
        return Err(AnalysisError::TooManyFeatures {
            k,
            available: report.ranking.len(),
        });
    }
    Ok(report.ranking[..k].iter().map(|f| f.feature.clone()).collect())
}

/// Axis-aligned box `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn of(points: impl IntoIterator<Item = [f64; 2]>) -> Option<Self> {
        points.into_iter().fold(None, |acc, [x, y]| {
            Some(match acc {
                None => BoundingBox { x_min: x, x_max: x, y_min: y, y_max: y },
                Some(b) => BoundingBox {
                    x_min: b.x_min.min(x),
                    x_max: b.x_max.max(x),
                    y_min: b.y_min.min(y),
                    y_max: b.y_max.max(y),
                },
            })
        })
    }

    pub fn diagonal(&self) -> f64 {
        (self.x_max - self.x_min).hypot(self.y_max - self.y_min)
    }

    pub fn expand(&self, by: f64) -> Self {
        BoundingBox {
            x_min: self.x_min - by,
            x_max: self.x_max + by,
            y_min: self.y_min - by,
            y_max: self.y_max + by,
        }
    }

    pub fn contains(&self, [x, y]: [f64; 2]) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardRegionReport {
    /// Margin as a fraction of the benign box diagonal.
    pub margin: f64,
    pub benign_box: BoundingBox,
    pub region: BoundingBox,
    /// Indices (into the input points) of faulty points inside the region.
    pub faulty_inside: Vec<usize>,
    pub faulty_total: usize,
    /// `faulty_inside / faulty_total`, 0 when there are no faulty points.
    pub overlap_fraction: f64,
}

/// The benign bounding box grown by `margin * diagonal` on every side.
pub fn hard_region(points: &[[f64; 2]], labels: &[u8], margin: f64) -> Result<HardRegionReport, AnalysisError> {
    if points.len() != labels.len() {
        return Err(AnalysisError::LengthMismatch(points.len(), labels.len()));
    }
    let benign_box = BoundingBox::of(points.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(p, _)| *p))
        .ok_or(AnalysisError::NoBenign)?;
    let region = benign_box.expand(margin * benign_box.diagonal());
    let faulty: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == 1).collect();
    let faulty_inside: Vec<usize> = faulty.iter().copied().filter(|&i| region.contains(points[i])).collect();
    let overlap_fraction = if faulty.is_empty() {
        0.0
    } else {
        faulty_inside.len() as f64 / faulty.len() as f64
    };
    Ok(HardRegionReport {
        margin,
        benign_box,
        region,
        faulty_inside,
        faulty_total: faulty.len(),
        overlap_fraction,
    })
}

/// Mean distance to the class centroid, per label; a dispersion measure for
/// comparing how spread benign and faulty points are.
pub fn class_dispersion(points: &[[f64; 2]], labels: &[u8]) -> [Option<f64>; 2] {
    let mut out = [None, None];
    for (label, slot) in out.iter_mut().enumerate() {
        let pts: Vec<[f64; 2]> = points
            .iter()
            .zip(labels)
            .filter(|(_, &l)| usize::from(l) == label)
            .map(|(p, _)| *p)
            .collect();
        if pts.is_empty() {
            continue;
        }
        let n = pts.len() as f64;
        let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
        let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
        *slot = Some(pts.iter().map(|p| (p[0] - cx).hypot(p[1] - cy)).sum::<f64>() / n);
    }
    out
}
