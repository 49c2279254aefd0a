//! Synthetic hierarchical scenes: a grid of rectangular regions, one per
//! child class, whose pixel features are the class descriptor plus noise.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng;

/// Scale of the per-parent descriptor components.
const PARENT_SCALE: f64 = 1.0;
/// Scale of the child offsets around their parent.
const CHILD_SCALE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub parents: usize,
    pub children_per_parent: usize,
    pub height: usize,
    pub width: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Descriptor (and pixel feature) dimension.
    pub descriptor_dim: usize,
    /// Box-blur radius applied to the clean feature field before noise, so
    /// pixels next to a region border mix both classes. 0 disables it.
    #[serde(default)]
    pub boundary_blend: usize,
}

impl SceneConfig {
    pub fn new(parents: usize, children_per_parent: usize, height: usize, width: usize, noise_sigma: f64, seed: u64) -> Self {
        Self { parents, children_per_parent, height, width, noise_sigma, seed, descriptor_dim: 16, boundary_blend: 0 }
    }

    pub fn with_blend(mut self, radius: usize) -> Self {
        self.boundary_blend = radius;
        self
    }

    pub fn classes(&self) -> usize {
        self.parents * self.children_per_parent
    }
}

/// Child class -> parent, with display names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub parent_of: Vec<usize>,
    pub class_names: Vec<String>,
    pub parent_names: Vec<String>,
}

impl Hierarchy {
    pub fn classes(&self) -> usize {
        self.parent_of.len()
    }

    pub fn children(&self, parent: usize) -> Vec<usize> {
        (0..self.classes()).filter(|&c| self.parent_of[c] == parent).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub height: usize,
    pub width: usize,
    pub d_in: usize,
    /// `height * width * d_in`, row-major by pixel.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub hierarchy: Hierarchy,
    /// Class descriptors, `C x d_in`.
    pub class_descriptors: Mat,
    /// Parent descriptors, the mean of their children's rows.
    pub parent_descriptors: Mat,
    pub seed: u64,
}

impl SyntheticScene {
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn classes(&self) -> usize {
        self.hierarchy.classes()
    }

    pub fn feature(&self, p: usize) -> &[f64] {
        &self.features[p * self.d_in..(p + 1) * self.d_in]
    }

    /// Pixels within `radius` (Chebyshev) of a pixel with a different label.
    pub fn boundary_mask(&self, radius: usize) -> Vec<bool> {
        let (h, w) = (self.height, self.width);
        let r = radius as isize;
        let mut out = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                let l = self.labels[y * w + x];
                'scan: for dy in -r..=r {
                    for dx in -r..=r {
                        let (yy, xx) = (y as isize + dy, x as isize + dx);
                        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                            continue;
                        }
                        if self.labels[yy as usize * w + xx as usize] != l {
                            out[y * w + x] = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Splits `total` into `parts` sizes of at least 2 with seeded jitter.
fn jittered_split(total: usize, parts: usize, r: &mut rng::Rng) -> Vec<usize> {
    let weights: Vec<f64> = (0..parts).map(|_| r.random_range(0.7..1.3)).collect();
    let sum: f64 = weights.iter().sum();
    let spare = total - 2 * parts;
    let mut sizes: Vec<usize> = weights.iter().map(|w| 2 + (w / sum * spare as f64).floor() as usize).collect();
    let mut left = total - sizes.iter().sum::<usize>();
    let mut i = 0;
    while left > 0 {
        sizes[i % parts] += 1;
        left -= 1;
        i += 1;
    }
    sizes
}

fn gauss(r: &mut rng::Rng) -> f64 {
    StandardNormal.sample(r)
}

fn box_blur(field: &[f64], h: usize, w: usize, d: usize, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let mut out = vec![0.0; field.len()];
    for y in 0..h {
        for x in 0..w {
            let dst = &mut out[(y * w + x) * d..(y * w + x + 1) * d];
            let mut count = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    let src = (yy as usize * w + xx as usize) * d;
                    for (o, v) in dst.iter_mut().zip(&field[src..src + d]) {
                        *o += v;
                    }
                    count += 1.0;
                }
            }
            dst.iter_mut().for_each(|v| *v /= count);
        }
    }
    out
}

pub fn generate_scene(cfg: &SceneConfig) -> Result<SyntheticScene> {
    if cfg.parents == 0 || cfg.children_per_parent == 0 || cfg.descriptor_dim == 0 {
        return Err(Error::Usage("scene counts must all be >= 1".into()));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(Error::Usage(format!("noise sigma must be >= 0, got {}", cfg.noise_sigma)));
    }
    let c = cfg.classes();
    let rows = (c as f64).sqrt().ceil() as usize;
    let cols = c.div_ceil(rows);
    if cfg.height < 2 * rows || cfg.width < 2 * cols {
        return Err(Error::Usage(format!(
            "a {}x{} grid cannot hold {c} regions of at least 2x2 pixels",
            cfg.height, cfg.width
        )));
    }
    let d = cfg.descriptor_dim;
    let mut r = rng::seeded(cfg.seed);

    let mut parent_desc = Mat::zeros(cfg.parents, d);
    let mut class_desc = Mat::zeros(c, d);
    let mut parent_of = Vec::with_capacity(c);
    for p in 0..cfg.parents {
        let base: Vec<f64> = (0..d).map(|_| PARENT_SCALE * gauss(&mut r)).collect();
        let offsets: Vec<Vec<f64>> = (0..cfg.children_per_parent)
            .map(|_| (0..d).map(|_| CHILD_SCALE * gauss(&mut r)).collect())
            .collect();
        // centre the offsets so the parent is the mean of its children
        let k = cfg.children_per_parent as f64;
        for j in 0..d {
            let mean: f64 = offsets.iter().map(|o| o[j]).sum::<f64>() / k;
            parent_desc[(p, j)] = base[j];
            for (ci, o) in offsets.iter().enumerate() {
                class_desc[(p * cfg.children_per_parent + ci, j)] = base[j] + o[j] - mean;
            }
        }
        for _ in 0..cfg.children_per_parent {
            parent_of.push(p);
        }
    }

    // region layout: `rows` bands, each split into columns
    let mut order: Vec<usize> = (0..c).collect();
    order.shuffle(&mut r);
    let band_heights = jittered_split(cfg.height, rows, &mut r);
    let mut labels = vec![0usize; cfg.height * cfg.width];
    let mut next = 0;
    let mut y0 = 0;
    for (band, &bh) in band_heights.iter().enumerate() {
        let in_band = if band + 1 == rows { c - next } else { cols.min(c - next) };
        let in_band = in_band.max(1);
        let widths = jittered_split(cfg.width, in_band, &mut r);
        let mut x0 = 0;
        for &bw in &widths {
            // bands beyond the class count reuse classes at random
            let class = if next < c { order[next] } else { r.random_range(0..c) };
            next += 1;
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    labels[y * cfg.width + x] = class;
                }
            }
            x0 += bw;
        }
        y0 += bh;
    }

    let n = cfg.height * cfg.width;
    let mut clean = Vec::with_capacity(n * d);
    for &l in &labels {
        clean.extend_from_slice(class_desc.row(l));
    }
    if cfg.boundary_blend > 0 {
        clean = box_blur(&clean, cfg.height, cfg.width, d, cfg.boundary_blend);
    }
    let features = if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Usage(e.to_string()))?;
        clean.into_iter().map(|v| v + noise.sample(&mut r)).collect()
    } else {
        clean
    };

    let class_names = (0..c).map(|i| format!("p{}c{}", parent_of[i], i % cfg.children_per_parent)).collect();
    let parent_names = (0..cfg.parents).map(|p| format!("p{p}")).collect();
    Ok(SyntheticScene {
        height: cfg.height,
        width: cfg.width,
        d_in: d,
        features,
        labels,
        hierarchy: Hierarchy { parent_of, class_names, parent_names },
        class_descriptors: class_desc,
        parent_descriptors: parent_desc,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_classes_share_features() {
        let s = generate_scene(&SceneConfig::new(2, 3, 32, 32, 0.0, 1)).unwrap();
        for p in 0..s.pixels() {
            assert_eq!(s.feature(p), s.class_descriptors.row(s.labels[p]));
        }
    }

    #[test]
    fn deterministic_and_covering() {
        let cfg = SceneConfig::new(3, 3, 32, 40, 0.3, 7);
        let a = generate_scene(&cfg).unwrap();
        let b = generate_scene(&cfg).unwrap();
        assert_eq!(a, b);
        let mut seen = vec![0usize; a.classes()];
        for &l in &a.labels {
            seen[l] += 1;
        }
        assert!(seen.iter().all(|&n| n >= 4), "{seen:?}");
        assert!(a.features.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn parents_are_child_means() {
        let s = generate_scene(&SceneConfig::new(3, 4, 32, 32, 0.0, 3)).unwrap();
        for p in 0..3 {
            let kids = s.hierarchy.children(p);
            assert_eq!(kids.len(), 4);
            for j in 0..s.d_in {
                let m: f64 = kids.iter().map(|&c| s.class_descriptors[(c, j)]).sum::<f64>() / 4.0;
                assert!((m - s.parent_descriptors[(p, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_grid_rejected() {
        assert!(matches!(generate_scene(&SceneConfig::new(3, 3, 5, 64, 0.0, 0)), Err(Error::Usage(_))));
        assert!(generate_scene(&SceneConfig::new(0, 3, 32, 32, 0.0, 0)).is_err());
    }

    #[test]
    fn blending_mixes_only_near_borders() {
        let cfg = SceneConfig::new(2, 2, 24, 24, 0.0, 5).with_blend(1);
        let s = generate_scene(&cfg).unwrap();
        let border = s.boundary_mask(1);
        for (p, &edge) in border.iter().enumerate() {
            let own = s.class_descriptors.row(s.labels[p]);
            let same = s.feature(p).iter().zip(own).all(|(a, b)| (a - b).abs() < 1e-12);
            assert_eq!(same, !edge, "pixel {p}");
        }
    }
}
