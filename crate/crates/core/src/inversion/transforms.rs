use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One label-preserving edit of a `grid x grid` image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Transform {
    Identity,
    /// Mirror columns.
    FlipHorizontal,
    /// Move content by `(rows, cols)` pixels; vacated pixels are zero.
    Shift { rows: i8, cols: i8 },
    /// Take the `(grid-1) x (grid-1)` window at `(top, left)` and resize it
    /// back to `grid x grid` bilinearly (corner-aligned).
    CropResize { top: u8, left: u8 },
}

/// Output pixel `i` is `Σ w · x[src]` over `taps[i]`.
type Stencil = Vec<Vec<(usize, f64)>>;

impl Transform {
    fn stencil(self, g: usize) -> Result<Stencil> {
        let idx = |r: usize, c: usize| r * g + c;
        let mut taps: Stencil = vec![Vec::new(); g * g];
        match self {
            Transform::Identity => {
                for (i, t) in taps.iter_mut().enumerate() {
                    t.push((i, 1.0));
                }
            }
            Transform::FlipHorizontal => {
                for r in 0..g {
                    for c in 0..g {
                        taps[idx(r, c)].push((idx(r, g - 1 - c), 1.0));
                    }
                }
            }
            Transform::Shift { rows, cols } => {
                let (dr, dc) = (rows as isize, cols as isize);
                if dr.unsigned_abs() >= g || dc.unsigned_abs() >= g {
                    return Err(Error::dim("transform", format!("shift ({rows}, {cols}) on a {g}x{g} grid")));
                }
                for r in 0..g as isize {
                    for c in 0..g as isize {
                        let (sr, sc) = (r - dr, c - dc);
                        if sr >= 0 && sc >= 0 && sr < g as isize && sc < g as isize {
                            taps[idx(r as usize, c as usize)].push((idx(sr as usize, sc as usize), 1.0));
                        }
                    }
                }
            }
            Transform::CropResize { top, left } => {
                if g < 3 || top > 1 || left > 1 {
                    return Err(Error::dim("transform", format!("crop at ({top}, {left}) on a {g}x{g} grid")));
                }
                let (top, left) = (top as usize, left as usize);
                // corner-aligned map from g output samples onto g-1 crop samples
                let scale = (g - 2) as f64 / (g - 1) as f64;
                let axis = |o: usize| -> [(usize, f64); 2] {
                    let p = o as f64 * scale;
                    let lo = (p.floor() as usize).min(g - 3);
                    let f = p - lo as f64;
                    [(lo, 1.0 - f), (lo + 1, f)]
                };
                for r in 0..g {
                    for c in 0..g {
                        for (sr, wr) in axis(r) {
                            for (sc, wc) in axis(c) {
                                let w = wr * wc;
                                if w != 0.0 {
                                    taps[idx(r, c)].push((idx(top + sr, left + sc), w));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(taps)
    }

    fn check(g: usize, v: &[f64]) -> Result<()> {
        if v.len() != g * g {
            return Err(Error::dim("transform", format!("vector of length {} for a {g}x{g} grid", v.len())));
        }
        Ok(())
    }

    pub fn apply(self, g: usize, x: &[f64]) -> Result<Vec<f64>> {
        Self::check(g, x)?;
        if self == Transform::Identity {
            return Ok(x.to_vec());
        }
        Ok(self
            .stencil(g)?
            .iter()
            .map(|taps| taps.iter().map(|&(s, w)| w * x[s]).sum())
            .collect())
    }

    /// Adjoint map: pulls a gradient at the transformed image back to the
    /// original pixels.
    pub fn apply_transpose(self, g: usize, v: &[f64]) -> Result<Vec<f64>> {
        Self::check(g, v)?;
        if self == Transform::Identity {
            return Ok(v.to_vec());
        }
        let mut out = vec![0.0; g * g];
        for (o, taps) in self.stencil(g)?.iter().enumerate() {
            for &(s, w) in taps {
                out[s] += w * v[o];
            }
        }
        Ok(out)
    }
}

/// A composition applied left to right.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Composite(pub Vec<Transform>);

impl Composite {
    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|t| *t == Transform::Identity)
    }

    pub fn apply(&self, g: usize, x: &[f64]) -> Result<Vec<f64>> {
        let mut v = x.to_vec();
        for t in &self.0 {
            v = t.apply(g, &v)?;
        }
        Ok(v)
    }

    pub fn apply_transpose(&self, g: usize, x: &[f64]) -> Result<Vec<f64>> {
        let mut v = x.to_vec();
        for t in self.0.iter().rev() {
            v = t.apply_transpose(g, &v)?;
        }
        Ok(v)
    }
}

/// Random transformation family on a square grid. Each draw composes an
/// optional horizontal flip, an integer shift in `[-max_shift, max_shift]²`
/// and an optional crop-and-resize.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformSet {
    pub flip_prob: f64,
    pub max_shift: u8,
    pub crop_prob: f64,
}

impl Default for TransformSet {
    fn default() -> Self {
        TransformSet {
            flip_prob: 0.5,
            max_shift: 1,
            crop_prob: 0.25,
        }
    }
}

impl TransformSet {
    /// The family containing only the identity.
    pub fn identity() -> Self {
        TransformSet {
            flip_prob: 0.0,
            max_shift: 0,
            crop_prob: 0.0,
        }
    }

    pub fn validate(&self, grid: usize) -> Result<()> {
        let probs = (0.0..=1.0).contains(&self.flip_prob) && (0.0..=1.0).contains(&self.crop_prob);
        if !probs {
            return Err(Error::Config("transform probabilities must lie in [0, 1]".into()));
        }
        if self.max_shift as usize >= grid || (self.crop_prob > 0.0 && grid < 3) {
            return Err(Error::Config(format!("transform set incompatible with a {grid}x{grid} grid")));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, r: &mut R) -> Composite {
        let mut parts = Vec::with_capacity(3);
        if self.flip_prob > 0.0 && r.random::<f64>() < self.flip_prob {
            parts.push(Transform::FlipHorizontal);
        }
        if self.max_shift > 0 {
            let m = self.max_shift as i8;
            let rows = r.random_range(-m..=m);
            let cols = r.random_range(-m..=m);
            if rows != 0 || cols != 0 {
                parts.push(Transform::Shift { rows, cols });
            }
        }
        if self.crop_prob > 0.0 && r.random::<f64>() < self.crop_prob {
            parts.push(Transform::CropResize {
                top: r.random_range(0..=1),
                left: r.random_range(0..=1),
            });
        }
        Composite(parts)
    }
}

/// Side length of a square grid holding `d` pixels.
pub fn grid_side(d: usize) -> Result<usize> {
    let g = (d as f64).sqrt().round() as usize;
    if g * g != d {
        return Err(Error::dim("transform", format!("ambient dimension {d} is not a square grid")));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::dot;

    fn all(g: usize) -> Vec<Transform> {
        vec![
            Transform::Identity,
            Transform::FlipHorizontal,
            Transform::Shift { rows: 1, cols: -1 },
            Transform::Shift { rows: 0, cols: 1 },
            Transform::CropResize { top: 1, left: 0 },
            Transform::CropResize { top: 0, left: 1 },
        ]
        .into_iter()
        .filter(|_| g >= 3)
        .collect()
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = 5;
        let u: Vec<f64> = (0..25).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let v: Vec<f64> = (0..25).map(|i| ((i * 3) % 13) as f64 * 0.5).collect();
        for t in all(g) {
            let lhs = dot(&t.apply(g, &u).unwrap(), &v);
            let rhs = dot(&u, &t.apply_transpose(g, &v).unwrap());
            assert!((lhs - rhs).abs() < 1e-12, "{t:?}");
        }
    }

    #[test]
    fn flip_and_shift_by_hand() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        assert_eq!(Transform::FlipHorizontal.apply(3, &x).unwrap(), vec![3.0, 2.0, 1.0, 6.0, 5.0, 4.0, 9.0, 8.0, 7.0]);
        assert_eq!(
            Transform::Shift { rows: 1, cols: 0 }.apply(3, &x).unwrap(),
            vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        );
    }

    #[test]
    fn crop_resize_keeps_constant_images_and_corners() {
        let g = 4;
        let ones = vec![1.0; 16];
        let out = Transform::CropResize { top: 0, left: 0 }.apply(g, &ones).unwrap();
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let x: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let out = Transform::CropResize { top: 1, left: 1 }.apply(g, &x).unwrap();
        assert_eq!(out[0], x[5]);
        assert!((out[15] - x[15]).abs() < 1e-12);
    }

    #[test]
    fn identity_set_samples_identity() {
        let mut r = crate::rng::stream(0, "t");
        for _ in 0..10 {
            assert!(TransformSet::identity().sample(&mut r).is_identity());
        }
    }
}
