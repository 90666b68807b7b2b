//! Spectral cubes, sensor response functions and the linear spectral
//! degradation `Y = Φ X` that maps a hyperspectral pixel to a multispectral one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A `width × height × channels` raster stored band-major
/// (band slowest, then row, then column).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    width: usize,
    height: usize,
    channels: usize,
    wavelengths_nm: Option<Vec<f32>>,
    data: Vec<f32>,
}

impl SpectralCube {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::shape(format!(
                "cube extents must be positive, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "{width}x{height}x{channels} cube needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::shape(format!("non-finite value at flat index {i}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            wavelengths_nm: None,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::new(width, height, channels, vec![0.0; width * height * channels])
            .expect("positive extents")
    }

    pub fn with_wavelengths(mut self, wavelengths_nm: Option<Vec<f32>>) -> Result<Self> {
        if let Some(wl) = &wavelengths_nm {
            check_wavelengths(wl, self.channels)?;
        }
        self.wavelengths_nm = wavelengths_nm;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn wavelengths_nm(&self) -> Option<&[f32]> {
        self.wavelengths_nm.as_deref()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[(band * self.height + row) * self.width + col]
    }

    pub fn spectrum(&self, row: usize, col: usize) -> Vec<f32> {
        (0..self.channels).map(|b| self.get(b, row, col)).collect()
    }

    /// Views the cube as a `[C, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.channels, self.height, self.width],
            self.data.clone(),
        )
        .expect("cube extents are positive")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.dims3()?;
        Self::new(w, h, c, t.data().to_vec())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = f(*v);
        }
        out
    }
}

pub(crate) fn check_wavelengths(wl: &[f32], channels: usize) -> Result<()> {
    if wl.len() != channels {
        return Err(Error::format(
            "wavelengths",
            format!("{} wavelengths for {channels} channels", wl.len()),
        ));
    }
    if wl.iter().any(|v| !v.is_finite()) {
        return Err(Error::format("wavelengths", "non-finite wavelength"));
    }
    if let Some(i) = wl.windows(2).position(|p| p[1] <= p[0]) {
        return Err(Error::format(
            "wavelengths",
            format!("not strictly ascending at index {}", i + 1),
        ));
    }
    Ok(())
}

/// Sampled spectral response curves of a multispectral sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Srf {
    sample_wavelengths_nm: Vec<f32>,
    /// `num_samples × num_bands`, row-major.
    responses: Vec<f32>,
    num_bands: usize,
}

impl Srf {
    pub fn new(sample_wavelengths_nm: Vec<f32>, responses: Vec<f32>, num_bands: usize) -> Result<Self> {
        let n = sample_wavelengths_nm.len();
        if n == 0 || num_bands == 0 {
            return Err(Error::DegenerateSrf("no samples or no bands".into()));
        }
        if responses.len() != n * num_bands {
            return Err(Error::shape(format!(
                "{n} samples x {num_bands} bands needs {} responses, got {}",
                n * num_bands,
                responses.len()
            )));
        }
        if let Some(i) = sample_wavelengths_nm.windows(2).position(|p| p[1] <= p[0]) {
            return Err(Error::DegenerateSrf(format!(
                "sample wavelengths not strictly ascending at sample {}",
                i + 1
            )));
        }
        if let Some(i) = responses.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::DegenerateSrf(format!(
                "response at sample {}, band {} is negative or non-finite",
                i / num_bands,
                i % num_bands
            )));
        }
        for b in 0..num_bands {
            if !(0..n).any(|s| responses[s * num_bands + b] > 0.0) {
                return Err(Error::DegenerateSrf(format!("band {b} never responds")));
            }
        }
        Ok(Self {
            sample_wavelengths_nm,
            responses,
            num_bands,
        })
    }

    pub fn num_bands(&self) -> usize {
        self.num_bands
    }

    pub fn num_samples(&self) -> usize {
        self.sample_wavelengths_nm.len()
    }

    pub fn sample_wavelengths_nm(&self) -> &[f32] {
        &self.sample_wavelengths_nm
    }

    pub fn response_at_sample(&self, sample: usize, band: usize) -> f32 {
        self.responses[sample * self.num_bands + band]
    }

    /// Linearly interpolated response of `band` at `wavelength`; zero outside
    /// the sampled range.
    pub fn response(&self, band: usize, wavelength: f32) -> f32 {
        let wl = &self.sample_wavelengths_nm;
        let last = wl.len() - 1;
        if wavelength < wl[0] || wavelength > wl[last] {
            return 0.0;
        }
        // first sample strictly greater than `wavelength`
        let hi = wl.partition_point(|&s| s <= wavelength);
        if hi == 0 {
            return self.response_at_sample(0, band);
        }
        if hi > last {
            return self.response_at_sample(last, band);
        }
        let lo = hi - 1;
        let t = (wavelength - wl[lo]) / (wl[hi] - wl[lo]);
        let a = self.response_at_sample(lo, band);
        let b = self.response_at_sample(hi, band);
        a + t * (b - a)
    }
}

/// The `c × C` matrix Φ with nonnegative, unit-sum rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationOperator {
    ms_bands: usize,
    hs_bands: usize,
    /// Row-major `ms_bands × hs_bands`.
    matrix: Vec<f32>,
    hs_wavelengths_nm: Vec<f32>,
}

impl DegradationOperator {
    /// Builds Φ from SRF responses interpolated at the HS band centers, then
    /// normalizes every row to sum to one.
    pub fn from_srf(srf: &Srf, hs_wavelengths_nm: &[f32]) -> Result<Self> {
        check_wavelengths(hs_wavelengths_nm, hs_wavelengths_nm.len())?;
        if hs_wavelengths_nm.is_empty() {
            return Err(Error::shape("no HS wavelengths"));
        }
        let (c, big_c) = (srf.num_bands(), hs_wavelengths_nm.len());
        let mut matrix = vec![0.0f32; c * big_c];
        for i in 0..c {
            for (j, &wl) in hs_wavelengths_nm.iter().enumerate() {
                matrix[i * big_c + j] = srf.response(i, wl);
            }
        }
        Self::from_weights(c, big_c, matrix, hs_wavelengths_nm.to_vec())
    }

    /// Normalizes arbitrary nonnegative weights into a row-stochastic Φ.
    pub fn from_weights(
        ms_bands: usize,
        hs_bands: usize,
        mut weights: Vec<f32>,
        hs_wavelengths_nm: Vec<f32>,
    ) -> Result<Self> {
        if weights.len() != ms_bands * hs_bands || hs_wavelengths_nm.len() != hs_bands {
            return Err(Error::shape(format!(
                "{ms_bands}x{hs_bands} operator got {} weights and {} wavelengths",
                weights.len(),
                hs_wavelengths_nm.len()
            )));
        }
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::shape("operator weights must be finite and nonnegative"));
        }
        for (band, row) in weights.chunks_mut(hs_bands).enumerate() {
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            if s <= 0.0 {
                return Err(Error::DegenerateBand { band });
            }
            for v in row {
                *v = (*v as f64 / s) as f32;
            }
        }
        Ok(Self {
            ms_bands,
            hs_bands,
            matrix: weights,
            hs_wavelengths_nm,
        })
    }

    /// `n × n` identity, with band indices as nominal wavelengths.
    pub fn identity(n: usize) -> Self {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        Self::from_weights(n, n, m, (0..n).map(|i| i as f32).collect()).expect("identity")
    }

    pub fn ms_bands(&self) -> usize {
        self.ms_bands
    }

    pub fn hs_bands(&self) -> usize {
        self.hs_bands
    }

    pub fn hs_wavelengths_nm(&self) -> &[f32] {
        &self.hs_wavelengths_nm
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn at(&self, ms: usize, hs: usize) -> f32 {
        self.matrix[ms * self.hs_bands + hs]
    }

    /// Per pixel `y = Φ x`.
    pub fn apply(&self, x: &SpectralCube) -> Result<SpectralCube> {
        if x.channels() != self.hs_bands {
            return Err(Error::shape(format!(
                "degradation expects {} HS bands, cube has {}",
                self.hs_bands,
                x.channels()
            )));
        }
        let out = mix_planes(&self.matrix, self.ms_bands, self.hs_bands, x.data(), x.pixels(), false);
        SpectralCube::new(x.width(), x.height(), self.ms_bands, out)
    }

    /// Per pixel `x = Φᵀ y`.
    pub fn adjoint(&self, y: &SpectralCube) -> Result<SpectralCube> {
        if y.channels() != self.ms_bands {
            return Err(Error::shape(format!(
                "adjoint expects {} MS bands, cube has {}",
                self.ms_bands,
                y.channels()
            )));
        }
        let out = mix_planes(&self.matrix, self.ms_bands, self.hs_bands, y.data(), y.pixels(), true);
        SpectralCube::new(y.width(), y.height(), self.hs_bands, out)?
            .with_wavelengths(Some(self.hs_wavelengths_nm.clone()))
    }
}

impl DegradationOperator {
    /// The `C × c` right pseudo-inverse `Φᵀ(ΦΦᵀ)⁻¹`, row-major.
    pub fn pseudo_inverse(&self) -> Result<Vec<f64>> {
        let (c, big_c) = (self.ms_bands, self.hs_bands);
        let phi = |i: usize, j: usize| self.at(i, j) as f64;
        // Gauss-Jordan on [ΦΦᵀ | I] with partial pivoting
        let mut a = vec![0.0f64; c * 2 * c];
        for i in 0..c {
            for k in 0..c {
                a[i * 2 * c + k] = (0..big_c).map(|j| phi(i, j) * phi(k, j)).sum();
            }
            a[i * 2 * c + c + i] = 1.0;
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for col in 0..c {
            let pivot = (col..c)
                .max_by(|&p, &q| a[p * 2 * c + col].abs().total_cmp(&a[q * 2 * c + col].abs()))
                .expect("non-empty range");
            if a[pivot * 2 * c + col].abs() <= 1e-12 * scale {
                return Err(Error::DegenerateSrf("ΦΦᵀ is singular; MS bands are linearly dependent".into()));
            }
            for k in 0..2 * c {
                a.swap(col * 2 * c + k, pivot * 2 * c + k);
            }
            let p = a[col * 2 * c + col];
            for k in 0..2 * c {
                a[col * 2 * c + k] /= p;
            }
            for r in 0..c {
                if r != col {
                    let f = a[r * 2 * c + col];
                    for k in 0..2 * c {
                        a[r * 2 * c + k] -= f * a[col * 2 * c + k];
                    }
                }
            }
        }
        let mut out = vec![0.0f64; big_c * c];
        for j in 0..big_c {
            for k in 0..c {
                out[j * c + k] = (0..c).map(|i| phi(i, j) * a[i * 2 * c + c + k]).sum();
            }
        }
        Ok(out)
    }

    /// Per pixel minimum-norm solution `x = Φᵀ(ΦΦᵀ)⁻¹ y`.
    pub fn min_norm_solution(&self, y: &SpectralCube) -> Result<SpectralCube> {
        if y.channels() != self.ms_bands {
            return Err(Error::shape(format!(
                "expected {} MS bands, cube has {}",
                self.ms_bands,
                y.channels()
            )));
        }
        let pinv: Vec<f32> = self.pseudo_inverse()?.into_iter().map(|v| v as f32).collect();
        let out = mix_planes(&pinv, self.hs_bands, self.ms_bands, y.data(), y.pixels(), false);
        SpectralCube::new(y.width(), y.height(), self.hs_bands, out)?
            .with_wavelengths(Some(self.hs_wavelengths_nm.clone()))
    }
}

/// Applies a `rows × cols` matrix (or its transpose) to every pixel of planar data.
pub(crate) fn mix_planes(
    m: &[f32],
    rows: usize,
    cols: usize,
    src: &[f32],
    plane: usize,
    transpose: bool,
) -> Vec<f32> {
    let (out_bands, in_bands) = if transpose { (cols, rows) } else { (rows, cols) };
    let mut out = vec![0.0f32; out_bands * plane];
    for o in 0..out_bands {
        let dst = &mut out[o * plane..(o + 1) * plane];
        for i in 0..in_bands {
            let w = if transpose { m[i * cols + o] } else { m[o * cols + i] };
            if w == 0.0 {
                continue;
            }
            for (d, s) in dst.iter_mut().zip(&src[i * plane..(i + 1) * plane]) {
                *d += w * s;
            }
        }
    }
    out
}

/// Stacks the `c` bands with their `c − 1` adjacent differences
/// `y[i+1] − y[i]`, giving `2c − 1` channels.
pub fn spectral_gradient_cube(y: &SpectralCube) -> Result<SpectralCube> {
    let c = y.channels();
    if c < 2 {
        return Err(Error::InsufficientBands(c));
    }
    let n = y.pixels();
    let mut data = Vec::with_capacity((2 * c - 1) * n);
    data.extend_from_slice(y.data());
    for i in 0..c - 1 {
        data.extend(y.band(i + 1).iter().zip(y.band(i)).map(|(b, a)| b - a));
    }
    SpectralCube::new(y.width(), y.height(), 2 * c - 1, data)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandGroup {
    pub hs_band_indices: Vec<usize>,
    /// MS bands whose response covers every member of the group.
    pub coverage_signature: Vec<usize>,
}

/// A partition of the HS bands by which MS bands cover them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandGrouping {
    pub groups: Vec<BandGroup>,
}

pub const DEFAULT_COVERAGE_TAU: f32 = 0.01;

impl BandGrouping {
    /// One group holding every band.
    pub fn single(hs_bands: usize) -> Self {
        Self {
            groups: vec![BandGroup {
                hs_band_indices: (0..hs_bands).collect(),
                coverage_signature: Vec::new(),
            }],
        }
    }

    pub fn hs_bands(&self) -> usize {
        self.groups.iter().map(|g| g.hs_band_indices.len()).sum()
    }

    /// Checks that the groups partition `0..hs_bands`.
    pub fn validate(&self, hs_bands: usize) -> Result<()> {
        let mut seen = vec![false; hs_bands];
        for g in &self.groups {
            if g.hs_band_indices.is_empty() {
                return Err(Error::shape("empty band group"));
            }
            for &b in &g.hs_band_indices {
                if b >= hs_bands || seen[b] {
                    return Err(Error::shape(format!(
                        "band {b} is out of range or in two groups"
                    )));
                }
                seen[b] = true;
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return Err(Error::shape(format!("band {b} belongs to no group")));
        }
        Ok(())
    }

    /// Band order after concatenating the groups, i.e. `order[k]` is the HS
    /// band produced at concatenated position `k`.
    pub fn concat_order(&self) -> Vec<usize> {
        self.groups
            .iter()
            .flat_map(|g| g.hs_band_indices.iter().copied())
            .collect()
    }
}

/// Groups HS bands by the set of MS bands whose (row-relative) response at
/// the band reaches `tau` of that MS band's peak.
///
/// Bands no MS band covers take the signature of the nearest covered band in
/// wavelength, preferring the shorter wavelength on ties.
pub fn group_bands(phi: &DegradationOperator, tau: f32) -> Result<BandGrouping> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("coverage threshold must be in (0, 1), got {tau}")));
    }
    let (c, big_c) = (phi.ms_bands(), phi.hs_bands());
    let peaks: Vec<f32> = (0..c)
        .map(|i| (0..big_c).map(|j| phi.at(i, j)).fold(0.0, f32::max))
        .collect();
    let mut signatures: Vec<Vec<usize>> = (0..big_c)
        .map(|j| {
            (0..c)
                .filter(|&i| phi.at(i, j) > 0.0 && phi.at(i, j) >= tau * peaks[i])
                .collect()
        })
        .collect();

    let covered: Vec<usize> = (0..big_c).filter(|&j| !signatures[j].is_empty()).collect();
    if covered.is_empty() {
        return Err(Error::DegenerateSrf("no HS band is covered by any MS band".into()));
    }
    let wl = phi.hs_wavelengths_nm();
    for j in 0..big_c {
        if !signatures[j].is_empty() {
            continue;
        }
        let mut best = covered[0];
        for &k in &covered[1..] {
            let (dk, db) = ((wl[k] - wl[j]).abs(), (wl[best] - wl[j]).abs());
            if dk < db || (dk == db && wl[k] < wl[best]) {
                best = k;
            }
        }
        signatures[j] = signatures[best].clone();
    }

    let mut groups: Vec<BandGroup> = Vec::new();
    for (j, sig) in signatures.into_iter().enumerate() {
        match groups.iter_mut().find(|g| g.coverage_signature == sig) {
            Some(g) => g.hs_band_indices.push(j),
            None => groups.push(BandGroup {
                hs_band_indices: vec![j],
                coverage_signature: sig,
            }),
        }
    }
    Ok(BandGrouping { groups })
}
