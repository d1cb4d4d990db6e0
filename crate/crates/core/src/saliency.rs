//! Top-down saliency: weighted feature combination, center-prior
//! penalization, binarization, connected-region extraction, candidate
//! generation and the ridge weight update.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::features::{FeatureStack, MAP_SIDE, STACK_SIZE};
use crate::image::ScalarMap;
use crate::particle::AffineState;

/// Per-map combination weights, ordered like the feature stack.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyWeights(pub [f64; STACK_SIZE]);

impl SaliencyWeights {
    pub fn zeros() -> Self {
        Self([0.0; STACK_SIZE])
    }
}

/// Weighted per-pixel sum of the stack's maps.
pub fn combine(stack: &FeatureStack, weights: &SaliencyWeights) -> ScalarMap {
    let mut out = ScalarMap::zeros(MAP_SIDE, MAP_SIDE);
    for (map, &w) in stack.maps().iter().zip(&weights.0) {
        if w == 0.0 {
            continue;
        }
        for (o, &v) in out.data_mut().iter_mut().zip(map.data()) {
            *o += w * v;
        }
    }
    out
}

/// Multiplies the raw map by a center prior around `p_c` (map coordinates).
///
/// The factor is `exp(-delta_s * dist / max_dist)`: 1 at the previous target
/// center and decaying with distance, which suppresses far-away false
/// positives while leaving a floor of `exp(-delta_s)` so a target that
/// jumped across the frame still survives binarization. The
/// distance-*growing* variant `delta_s * dist / max_dist` is kept behind
/// `printed_form` for comparison runs.
pub fn center_penalty(raw: &ScalarMap, p_c: (f64, f64), delta_s: f64, printed_form: bool) -> ScalarMap {
    let (w, h) = (raw.width(), raw.height());
    let mut max_dist: f64 = 0.0;
    for &(cx, cy) in &[(0.0, 0.0), (w as f64 - 1.0, 0.0), (0.0, h as f64 - 1.0), (w as f64 - 1.0, h as f64 - 1.0)]
    {
        max_dist = max_dist.max(((cx - p_c.0).powi(2) + (cy - p_c.1).powi(2)).sqrt());
    }
    if max_dist <= 0.0 {
        return raw.clone();
    }
    ScalarMap::from_fn(w, h, |x, y| {
        let d = ((x as f64 - p_c.0).powi(2) + (y as f64 - p_c.1).powi(2)).sqrt();
        let factor = if printed_form {
            delta_s * d / max_dist
        } else {
            (-delta_s * d / max_dist).exp()
        };
        factor * raw.get(x, y)
    })
}

/// Min-max normalizes the map and thresholds at `delta_b` (values >= the
/// threshold become true). Constant maps yield all-false.
pub fn binarize(map: &ScalarMap, delta_b: f64) -> Vec<bool> {
    let (lo, hi) = map.min_max();
    let span = hi - lo;
    if span <= f64::EPSILON * lo.abs().max(hi.abs()).max(1.0) {
        return vec![false; map.data().len()];
    }
    map.data().iter().map(|&v| (v - lo) / span >= delta_b).collect()
}

/// A connected foreground region on the binary saliency map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectedRegion {
    /// 1-based label, assigned in raster order of each region's first pixel.
    pub label: usize,
    pub area: usize,
    /// Pixel centroid rounded to the nearest pixel, map coordinates.
    pub center: (usize, usize),
}

/// 8-connected components of the true pixels with area >= `sigma_s`,
/// in deterministic raster order (two-pass run relabeling).
pub fn connected_regions(mask: &[bool], width: usize, height: usize, sigma_s: usize) -> Vec<ConnectedRegion> {
    assert_eq!(mask.len(), width * height);
    assert!(sigma_s >= 1);
    let mut labels = vec![0usize; mask.len()];
    let mut parent: Vec<usize> = vec![0]; // parent[0] unused (background)

    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    fn union(parent: &mut Vec<usize>, a: usize, b: usize) {
        let (ra, rb) = (find(parent, a), find(parent, b));
        // keep the smaller root so labels stay raster-ordered
        if ra < rb {
            parent[rb] = ra;
        } else {
            parent[ra] = rb;
        }
    }

    // first pass: provisional labels, unions across the 8-neighborhood
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !mask[i] {
                continue;
            }
            let mut neighbor = 0usize;
            let mut consider = |nx: i64, ny: i64, parent: &mut Vec<usize>, labels: &[usize]| {
                if nx < 0 || ny < 0 || nx >= width as i64 {
                    return;
                }
                let l = labels[ny as usize * width + nx as usize];
                if l != 0 {
                    if neighbor == 0 {
                        neighbor = l;
                    } else if find(parent, neighbor) != find(parent, l) {
                        union(parent, neighbor, l);
                    }
                }
            };
            consider(x as i64 - 1, y as i64, &mut parent, &labels);
            if y > 0 {
                consider(x as i64 - 1, y as i64 - 1, &mut parent, &labels);
                consider(x as i64, y as i64 - 1, &mut parent, &labels);
                consider(x as i64 + 1, y as i64 - 1, &mut parent, &labels);
            }
            if neighbor == 0 {
                let fresh = parent.len();
                parent.push(fresh);
                labels[i] = fresh;
            } else {
                labels[i] = find(&mut parent, neighbor);
            }
        }
    }

    // second pass: resolve roots, accumulate area and centroid per root
    struct Acc {
        area: usize,
        sx: f64,
        sy: f64,
        first: usize,
    }
    let mut accs: Vec<Option<Acc>> = (0..parent.len()).map(|_| None).collect();
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if labels[i] == 0 {
                continue;
            }
            let root = find(&mut parent, labels[i]);
            let acc = accs[root].get_or_insert(Acc { area: 0, sx: 0.0, sy: 0.0, first: i });
            acc.area += 1;
            acc.sx += x as f64;
            acc.sy += y as f64;
        }
    }

    let mut regions: Vec<(usize, ConnectedRegion)> = accs
        .into_iter()
        .flatten()
        .filter(|a| a.area >= sigma_s)
        .map(|a| {
            let cx = (a.sx / a.area as f64).round() as usize;
            let cy = (a.sy / a.area as f64).round() as usize;
            (a.first, ConnectedRegion { label: 0, area: a.area, center: (cx, cy) })
        })
        .collect();
    regions.sort_by_key(|(first, _)| *first);
    regions
        .into_iter()
        .enumerate()
        .map(|(k, (_, mut r))| {
            r.label = k + 1;
            r
        })
        .collect()
}

/// Lifts region centers from map coordinates back to frame coordinates and
/// re-centers the previous state's box on each of them.
pub fn generate_candidates(
    centers: &[(usize, usize)],
    last_state: &AffineState,
    frame_w: usize,
    frame_h: usize,
) -> Vec<AffineState> {
    let sx = frame_w as f64 / MAP_SIDE as f64;
    let sy = frame_h as f64 / MAP_SIDE as f64;
    centers
        .iter()
        .map(|&(cx, cy)| AffineState {
            d1: cx as f64 * sx,
            d2: cy as f64 * sy,
            ..*last_state
        })
        .collect()
}

/// Binary groundtruth mask on the working map: true for pixels whose frame
/// position lies inside the state's warped rectangle.
#[derive(Debug, Clone)]
pub struct GroundtruthMap {
    pub mask: Vec<bool>,
}

impl GroundtruthMap {
    pub fn from_state(state: &AffineState, frame_w: usize, frame_h: usize) -> Self {
        let sx = frame_w as f64 / MAP_SIDE as f64;
        let sy = frame_h as f64 / MAP_SIDE as f64;
        let mut mask = vec![false; MAP_SIDE * MAP_SIDE];
        if state.to_patch(state.d1, state.d2).is_ok() {
            for y in 0..MAP_SIDE {
                for x in 0..MAP_SIDE {
                    let fx = x as f64 * sx;
                    let fy = y as f64 * sy;
                    if let Ok((u, v)) = state.to_patch(fx, fy) {
                        if (-0.5..=0.5).contains(&u) && (-0.5..=0.5).contains(&v) {
                            mask[y * MAP_SIDE + x] = true;
                        }
                    }
                }
            }
        }
        Self { mask }
    }
}

/// Ridge solution of the weight update: `w = (F'F + lambda I)^-1 F' x` with
/// the 19 vectorized maps as columns of `F`.
pub fn update_weights(stack: &FeatureStack, gt: &GroundtruthMap, lambda_s: f64) -> SaliencyWeights {
    assert!(lambda_s > 0.0);
    let maps = stack.maps();
    let n = STACK_SIZE;
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let dot: f64 = maps[i]
                .data()
                .iter()
                .zip(maps[j].data())
                .map(|(a, b)| a * b)
                .sum();
            gram[(i, j)] = dot;
            gram[(j, i)] = dot;
        }
        gram[(i, i)] += lambda_s;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    for i in 0..n {
        rhs[i] = maps[i]
            .data()
            .iter()
            .zip(&gt.mask)
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .sum();
    }
    let sol = Cholesky::new(gram)
        .expect("ridge Gram matrix is positive definite")
        .solve(&rhs);
    let mut w = [0.0; STACK_SIZE];
    for i in 0..n {
        w[i] = sol[i];
    }
    SaliencyWeights(w)
}

/// Relevance degree of a single weight: `-w(w - 2)` up to 1, then
/// exponential falloff; continuous at `w = 1` where it attains its maximum.
pub fn relevance(w: f64) -> f64 {
    if w <= 1.0 {
        -w * (w - 2.0)
    } else {
        (-(w - 1.0)).exp()
    }
}
