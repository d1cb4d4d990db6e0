//! SLIC superpixel segmentation of candidate patches and the kernelized
//! HSV histogram matching built on it.

use crate::error::{Error, Result};
use crate::image::ColorPatch;

/// Patch side used for segmentation; candidate regions are resampled to
/// this resolution before SLIC runs.
pub const SEGMENT_SIDE: usize = 64;

const SLIC_ITERATIONS: usize = 10;
// SLIC distances weigh color on a 0..100 scale (the range compactness
// values are conventionally tuned for); channels here live in [0, 1].
const COLOR_SCALE: f64 = 100.0;

/// Histogram bin centers, shared by all three channels.
pub const BIN_CENTERS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// A superpixel partition of a patch with per-superpixel mean HSV values.
#[derive(Debug, Clone)]
pub struct Segmentation {
    width: usize,
    labels: Vec<usize>,
    /// Mean (h, s, v) per superpixel, each in `[0, 1]`.
    means: Vec<[f64; 3]>,
}

impl Segmentation {
    pub fn count(&self) -> usize {
        self.means.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> usize {
        self.labels[y * self.width + x]
    }

    pub fn means(&self) -> &[[f64; 3]] {
        &self.means
    }

    /// Test constructor from explicit per-superpixel means.
    pub fn from_means(means: Vec<[f64; 3]>) -> Self {
        Self { width: 0, labels: Vec::new(), means }
    }
}

struct Cluster {
    x: f64,
    y: f64,
    r: f64,
    g: f64,
    b: f64,
}

/// SLIC k-means over (color, position): `n_h` seeds on a regular grid,
/// ten assignment/update rounds with a `2S x 2S` search window, then a
/// connectivity pass that merges orphaned fragments into an adjacent
/// superpixel. The returned count can fall below `n_h` when clusters die.
pub fn slic(patch: &ColorPatch, n_h: usize, compactness: f64) -> Result<Segmentation> {
    let side = patch.side();
    let n_px = side * side;
    if n_h == 0 || n_h > n_px {
        return Err(Error::InvalidConfig(format!("n_h must lie in 1..={n_px}, got {n_h}")));
    }
    if !(compactness > 0.0) {
        return Err(Error::InvalidConfig("compactness must be > 0".into()));
    }

    let mut clusters = seed_clusters(patch, n_h);
    let interval = (n_px as f64 / n_h as f64).sqrt();
    let search = (2.0 * interval).ceil() as i64;
    // squared color distance is scaled against squared spatial distance by
    // (compactness / interval)^2, the usual SLIC weighting
    let spatial_w = (compactness / interval).powi(2);

    let mut labels = vec![usize::MAX; n_px];
    for _ in 0..SLIC_ITERATIONS {
        let mut dist = vec![f64::INFINITY; n_px];
        for (ci, c) in clusters.iter().enumerate() {
            let x0 = ((c.x as i64) - search).max(0) as usize;
            let x1 = (((c.x as i64) + search) as usize).min(side - 1);
            let y0 = ((c.y as i64) - search).max(0) as usize;
            let y1 = (((c.y as i64) + search) as usize).min(side - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * side + x;
                    let (r, g, b) = patch.pixel(x, y);
                    let dc = ((r - c.r).powi(2) + (g - c.g).powi(2) + (b - c.b).powi(2))
                        * COLOR_SCALE
                        * COLOR_SCALE;
                    let ds = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                    let d = dc + ds * spatial_w;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = ci;
                    }
                }
            }
        }
        // pixels outside every search window attach to the nearest seed
        for y in 0..side {
            for x in 0..side {
                let i = y * side + x;
                if labels[i] == usize::MAX {
                    let mut best = (f64::INFINITY, 0usize);
                    for (ci, c) in clusters.iter().enumerate() {
                        let ds = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                        if ds < best.0 {
                            best = (ds, ci);
                        }
                    }
                    labels[i] = best.1;
                }
            }
        }
        // recompute cluster means
        let mut acc = vec![[0.0f64; 6]; clusters.len()];
        for y in 0..side {
            for x in 0..side {
                let i = y * side + x;
                let (r, g, b) = patch.pixel(x, y);
                let a = &mut acc[labels[i]];
                a[0] += x as f64;
                a[1] += y as f64;
                a[2] += r;
                a[3] += g;
                a[4] += b;
                a[5] += 1.0;
            }
        }
        for (c, a) in clusters.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                c.x = a[0] / a[5];
                c.y = a[1] / a[5];
                c.r = a[2] / a[5];
                c.g = a[3] / a[5];
                c.b = a[4] / a[5];
            }
        }
    }

    let labels = enforce_connectivity(&labels, side, side);
    let count = labels.iter().max().map_or(0, |&m| m + 1);

    // per-superpixel HSV means
    let hsv = patch.to_hsv();
    let mut sums = vec![[0.0f64; 4]; count];
    for y in 0..side {
        for x in 0..side {
            let (h, s, v) = hsv.pixel(x, y);
            let a = &mut sums[labels[y * side + x]];
            a[0] += h;
            a[1] += s;
            a[2] += v;
            a[3] += 1.0;
        }
    }
    let means = sums
        .iter()
        .map(|a| [a[0] / a[3], a[1] / a[3], a[2] / a[3]])
        .collect();
    Ok(Segmentation { width: side, labels, means })
}

/// Seeds laid out row by row: `floor(sqrt(n))` rows, the remainder spread
/// over the rows so exactly `n` seeds come out; each seed shifts to the
/// lowest-gradient pixel in its 3x3 neighborhood.
fn seed_clusters(patch: &ColorPatch, n: usize) -> Vec<Cluster> {
    let side = patch.side();
    let rows = (n as f64).sqrt().floor().max(1.0) as usize;
    let base = n / rows;
    let extra = n % rows;
    let mut clusters = Vec::with_capacity(n);
    for row in 0..rows {
        let cols = base + usize::from(row < extra);
        let cy = ((row as f64 + 0.5) * side as f64 / rows as f64) as usize;
        for col in 0..cols {
            let cx = ((col as f64 + 0.5) * side as f64 / cols as f64) as usize;
            let (x, y) = lowest_gradient_neighbor(patch, cx.min(side - 1), cy.min(side - 1));
            let (r, g, b) = patch.pixel(x, y);
            clusters.push(Cluster { x: x as f64, y: y as f64, r, g, b });
        }
    }
    clusters
}

fn gradient_at(patch: &ColorPatch, x: usize, y: usize) -> f64 {
    let side = patch.side();
    let xm = x.saturating_sub(1);
    let xp = (x + 1).min(side - 1);
    let ym = y.saturating_sub(1);
    let yp = (y + 1).min(side - 1);
    let d = |a: (f64, f64, f64), b: (f64, f64, f64)| {
        (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2) + (a.2 - b.2).powi(2)
    };
    d(patch.pixel(xp, y), patch.pixel(xm, y)) + d(patch.pixel(x, yp), patch.pixel(x, ym))
}

fn lowest_gradient_neighbor(patch: &ColorPatch, x: usize, y: usize) -> (usize, usize) {
    let side = patch.side();
    let mut best = (gradient_at(patch, x, y), (x, y));
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            if nx < 0 || ny < 0 || nx >= side as i64 || ny >= side as i64 {
                continue;
            }
            let g = gradient_at(patch, nx as usize, ny as usize);
            if g < best.0 {
                best = (g, (nx as usize, ny as usize));
            }
        }
    }
    best.1
}

/// Relabels 4-connected fragments: the largest fragment of each cluster
/// keeps the identity (so at most one superpixel per cluster survives),
/// every other fragment is absorbed by the nearest surviving region in
/// fragment-adjacency hops; final labels are compacted in raster order.
fn enforce_connectivity(labels: &[usize], width: usize, height: usize) -> Vec<usize> {
    let mut component = vec![usize::MAX; labels.len()];
    let mut fragments: Vec<(usize, usize, usize)> = Vec::new(); // (cluster, size, first pixel)
    for start in 0..labels.len() {
        if component[start] != usize::MAX {
            continue;
        }
        let cluster = labels[start];
        let id = fragments.len();
        let mut stack = vec![start];
        component[start] = id;
        let mut size = 0usize;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % width, i / width);
            let push = |nx: i64, ny: i64, component: &mut [usize], stack: &mut Vec<usize>| {
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    return;
                }
                let ni = ny as usize * width + nx as usize;
                if component[ni] == usize::MAX && labels[ni] == cluster {
                    component[ni] = id;
                    stack.push(ni);
                }
            };
            push(x as i64 - 1, y as i64, &mut component, &mut stack);
            push(x as i64 + 1, y as i64, &mut component, &mut stack);
            push(x as i64, y as i64 - 1, &mut component, &mut stack);
            push(x as i64, y as i64 + 1, &mut component, &mut stack);
        }
        fragments.push((cluster, size, start));
    }
    let n_frag = fragments.len();

    // fragment adjacency from horizontal/vertical pixel boundaries
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n_frag];
    for y in 0..height {
        for x in 0..width {
            let a = component[y * width + x];
            if x + 1 < width {
                let b = component[y * width + x + 1];
                if a != b {
                    adjacency[a].push(b);
                    adjacency[b].push(a);
                }
            }
            if y + 1 < height {
                let b = component[(y + 1) * width + x];
                if a != b {
                    adjacency[a].push(b);
                    adjacency[b].push(a);
                }
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }

    // the biggest (first on ties) fragment of each cluster survives
    let n_clusters = labels.iter().max().map_or(0, |&m| m + 1);
    let mut canonical: Vec<Option<usize>> = vec![None; n_clusters];
    for (id, &(cluster, size, _)) in fragments.iter().enumerate() {
        match canonical[cluster] {
            Some(best) if fragments[best].1 >= size => {}
            _ => canonical[cluster] = Some(id),
        }
    }

    // breadth-first absorption: orphans take the root of the closest
    // surviving fragment (deterministic: sorted adjacency, FIFO order)
    let mut root = vec![usize::MAX; n_frag];
    let mut queue = std::collections::VecDeque::new();
    for id in 0..n_frag {
        if canonical[fragments[id].0] == Some(id) {
            root[id] = id;
            queue.push_back(id);
        }
    }
    while let Some(f) = queue.pop_front() {
        for &g in &adjacency[f] {
            if root[g] == usize::MAX {
                root[g] = root[f];
                queue.push_back(g);
            }
        }
    }

    // compact surviving roots in raster order of first appearance
    let mut final_of = vec![usize::MAX; n_frag];
    let mut next = 0usize;
    let mut out = vec![0usize; labels.len()];
    for i in 0..labels.len() {
        let r = root[component[i]];
        debug_assert_ne!(r, usize::MAX, "fragment unreachable from any surviving region");
        if final_of[r] == usize::MAX {
            final_of[r] = next;
            next += 1;
        }
        out[i] = final_of[r];
    }
    out
}

/// Concatenated 15-bin HSV descriptor; every bin is strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct HsvHistogram {
    pub bins: [f64; 15],
}

/// Soft-assignment histogram: each superpixel's channel mean contributes
/// `exp(-k_o (mean - center)^2)` to every bin of that channel.
pub fn histogram(seg: &Segmentation, k_o: f64) -> HsvHistogram {
    assert!(k_o > 0.0);
    let mut bins = [0.0f64; 15];
    for mean in seg.means() {
        for (o, &m) in mean.iter().enumerate() {
            for (j, &c) in BIN_CENTERS.iter().enumerate() {
                bins[o * 5 + j] += (-k_o * (m - c) * (m - c)).exp();
            }
        }
    }
    HsvHistogram { bins }
}

/// Slowly adapting histogram template.
#[derive(Debug, Clone)]
pub struct HistTemplate {
    pub bins: [f64; 15],
}

impl HistTemplate {
    pub fn new(bins: [f64; 15]) -> Result<Self> {
        if bins.iter().any(|&b| !b.is_finite() || b < 0.0) {
            return Err(Error::InvalidConfig("template bins must be finite and >= 0".into()));
        }
        if bins.iter().all(|&b| b == 0.0) {
            return Err(Error::ZeroVector("histogram template".into()));
        }
        Ok(Self { bins })
    }

    pub fn from_histogram(h: &HsvHistogram) -> Self {
        Self { bins: h.bins }
    }
}

/// Cosine similarity between a histogram and the template.
pub fn similarity(h: &HsvHistogram, t: &HistTemplate) -> Result<f64> {
    let nh = h.bins.iter().map(|b| b * b).sum::<f64>().sqrt();
    let nt = t.bins.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nh == 0.0 || nt == 0.0 {
        return Err(Error::ZeroVector("cosine similarity".into()));
    }
    let dot: f64 = h.bins.iter().zip(&t.bins).map(|(a, b)| a * b).sum();
    Ok(dot / (nh * nt))
}

/// Maps a similarity to an error, strictly decreasing: `1 / (k_h + L_h)`.
pub fn hist_error(similarity: f64, k_h: f64) -> f64 {
    debug_assert!(k_h > 0.0);
    1.0 / (k_h + similarity)
}

/// Exponentially forgetting template update `t <- gamma t + (1 - gamma) best`.
pub fn update_template(t: &HistTemplate, best: &HsvHistogram, gamma: f64) -> HistTemplate {
    debug_assert!((0.0..=1.0).contains(&gamma));
    let mut bins = [0.0f64; 15];
    for i in 0..15 {
        bins[i] = gamma * t.bins[i] + (1.0 - gamma) * best.bins[i];
    }
    HistTemplate { bins }
}
