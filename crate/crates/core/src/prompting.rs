//! Positive/negative point prompts for an external 2D segmenter, built from
//! per-frame instance detections.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel coordinates `[x, y]`.
pub type PixelPoint = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDetection {
    #[serde(default)]
    pub frame: i64,
    pub obj_id: i64,
    pub center: PixelPoint,
    /// Implicitly closed.
    pub polygon: Vec<PixelPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub frame: i64,
    pub obj_id: i64,
    #[serde(rename = "positive")]
    pub positives: Vec<PixelPoint>,
    #[serde(rename = "negative")]
    pub negatives: Vec<PixelPoint>,
}

pub const DEFAULT_GRID: u32 = 3;
pub const DEFAULT_RADIUS: u32 = 1;
pub const MAX_NEGATIVES: usize = 5;

fn orient(a: PixelPoint, b: PixelPoint, c: PixelPoint) -> f64 {
    robust::orient2d(
        robust::Coord { x: a[0], y: a[1] },
        robust::Coord { x: b[0], y: b[1] },
        robust::Coord { x: c[0], y: c[1] },
    )
}

fn on_segment(p: PixelPoint, a: PixelPoint, b: PixelPoint) -> bool {
    orient(a, b, p) == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Even-odd rule with points on an edge counted as inside.
pub fn point_in_polygon(p: PixelPoint, poly: &[PixelPoint]) -> Result<bool> {
    if poly.len() < 3 {
        return Err(Error::invalid(format!(
            "polygon needs at least 3 vertices, got {}",
            poly.len()
        )));
    }
    if !p.iter().chain(poly.iter().flatten()).all(|v| v.is_finite()) {
        return Err(Error::invalid("polygon test on non-finite coordinates"));
    }
    let mut inside = false;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        if on_segment(p, a, b) {
            return Ok(true);
        }
        // Half-open rule on y so shared vertices are counted once.
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let side = orient(a, b, p);
            let crosses_right = if b[1] > a[1] { side > 0.0 } else { side < 0.0 };
            if crosses_right {
                inside = !inside;
            }
        }
    }
    Ok(inside)
}

fn validate(d: &InstanceDetection) -> Result<()> {
    if !d.center.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid(format!(
            "frame {} object {}: non-finite center",
            d.frame, d.obj_id
        )));
    }
    if d.polygon.len() < 3 {
        return Err(Error::invalid(format!(
            "frame {} object {}: polygon has {} vertices",
            d.frame,
            d.obj_id,
            d.polygon.len()
        )));
    }
    Ok(())
}

/// One prompt set per detection, ordered by `(frame, obj_id)`.
///
/// Positives are the center followed by the axis offsets `(k·grid, 0)` and
/// then `(0, k·grid)` for `k = -radius..=radius`, `k != 0`, kept when inside
/// the polygon. Negatives are the centers of the nearest other detections of
/// the same frame, at most five, ordered by distance then `obj_id`.
pub fn generate_pnp_prompts(
    detections: &[InstanceDetection],
    grid: u32,
    radius: u32,
) -> Result<Vec<PromptSet>> {
    if detections.is_empty() {
        return Err(Error::invalid("no detections"));
    }
    if grid == 0 {
        return Err(Error::invalid("prompt grid must be positive"));
    }
    let mut frames: BTreeMap<i64, BTreeMap<i64, &InstanceDetection>> = BTreeMap::new();
    for d in detections {
        validate(d)?;
        if frames.entry(d.frame).or_default().insert(d.obj_id, d).is_some() {
            return Err(Error::invalid(format!(
                "frame {}: duplicate obj_id {}",
                d.frame, d.obj_id
            )));
        }
    }

    let r = i64::from(radius);
    let step = f64::from(grid);
    let offsets: Vec<PixelPoint> = (-r..=r)
        .filter(|&k| k != 0)
        .map(|k| [k as f64 * step, 0.0])
        .chain((-r..=r).filter(|&k| k != 0).map(|k| [0.0, k as f64 * step]))
        .collect();

    let mut out = Vec::with_capacity(detections.len());
    for dets in frames.values() {
        let dets: Vec<&InstanceDetection> = dets.values().copied().collect();
        for d in &dets {
            let [cx, cy] = d.center;
            let mut positives = vec![d.center];
            for [dx, dy] in &offsets {
                let p = [cx + dx, cy + dy];
                if point_in_polygon(p, &d.polygon)? {
                    positives.push(p);
                }
            }
            let mut others: Vec<(f64, i64, PixelPoint)> = dets
                .iter()
                .filter(|o| o.obj_id != d.obj_id)
                .map(|o| {
                    let dist2 = (o.center[0] - cx).powi(2) + (o.center[1] - cy).powi(2);
                    (dist2, o.obj_id, o.center)
                })
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let negatives = others.into_iter().take(MAX_NEGATIVES).map(|o| o.2).collect();
            out.push(PromptSet {
                frame: d.frame,
                obj_id: d.obj_id,
                positives,
                negatives,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn square(cx: f64, cy: f64, half: f64) -> Vec<PixelPoint> {
        vec![
            [cx - half, cy - half],
            [cx + half, cy - half],
            [cx + half, cy + half],
            [cx - half, cy + half],
        ]
    }

    fn det(obj_id: i64, center: PixelPoint, polygon: Vec<PixelPoint>) -> InstanceDetection {
        InstanceDetection {
            frame: 0,
            obj_id,
            center,
            polygon,
        }
    }

    /// Winding number about `p`; points on an edge are reported separately.
    fn winding_number(p: PixelPoint, poly: &[PixelPoint]) -> i32 {
        let mut wn = 0;
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]);
            if a[1] <= p[1] {
                if b[1] > p[1] && cross > 0.0 {
                    wn += 1;
                }
            } else if b[1] <= p[1] && cross < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    #[test]
    fn unit_square() {
        let sq = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(point_in_polygon([0.5, 0.5], &sq).unwrap());
        assert!(!point_in_polygon([2.0, 2.0], &sq).unwrap());
        assert!(point_in_polygon([1.0, 0.3], &sq).unwrap());
        assert!(point_in_polygon([0.0, 0.0], &sq).unwrap());
        assert!(!point_in_polygon([1.0, 1.5], &sq).unwrap());
        assert!(point_in_polygon([0.5, 0.5], &sq[..2]).is_err());
    }

    #[test]
    fn concave_l_matches_winding_number() {
        let l = vec![
            [0.0, 0.0],
            [4.0, 0.0],
            [4.0, 1.0],
            [1.0, 1.0],
            [1.0, 4.0],
            [0.0, 4.0],
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = [rng.gen_range(-0.5..4.5), rng.gen_range(-0.5..4.5)];
            assert_eq!(point_in_polygon(p, &l).unwrap(), winding_number(p, &l) != 0, "{p:?}");
        }
        assert!(!point_in_polygon([2.0, 2.0], &l).unwrap());
        assert!(point_in_polygon([0.5, 3.0], &l).unwrap());
    }

    #[test]
    fn even_odd_on_self_intersecting_star() {
        // Pentagram: the central pentagon has winding number 2, so it is outside.
        let star: Vec<PixelPoint> = (0..5)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 + (i * 2) as f64 * 2.0 * std::f64::consts::PI / 5.0;
                [a.cos(), a.sin()]
            })
            .collect();
        assert_eq!(winding_number([0.0, 0.0], &star).abs(), 2);
        assert!(!point_in_polygon([0.0, 0.0], &star).unwrap());
        assert!(point_in_polygon([0.0, 0.8], &star).unwrap());
    }

    #[test]
    fn single_detection_square() {
        let d = det(4, [10.0, 10.0], square(10.0, 10.0, 4.0));
        let out = generate_pnp_prompts(&[d.clone()], 3, 1).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].negatives.is_empty());
        assert_eq!(
            out[0].positives,
            vec![[10.0, 10.0], [7.0, 10.0], [13.0, 10.0], [10.0, 7.0], [10.0, 13.0]]
        );
        // A tight polygon keeps only the center, and an edge point is kept.
        let tight = generate_pnp_prompts(&[det(1, [0.0, 0.0], square(0.0, 0.0, 2.0))], 3, 1).unwrap();
        assert_eq!(tight[0].positives, vec![[0.0, 0.0]]);
        let edge = generate_pnp_prompts(&[det(1, [0.0, 0.0], square(0.0, 0.0, 3.0))], 3, 1).unwrap();
        assert_eq!(edge[0].positives.len(), 5);
    }

    #[test]
    fn center_kept_outside_polygon() {
        let d = det(0, [50.0, 50.0], square(0.0, 0.0, 1.0));
        let out = generate_pnp_prompts(&[d], 3, 2).unwrap();
        assert_eq!(out[0].positives, vec![[50.0, 50.0]]);
    }

    #[test]
    fn six_in_a_row() {
        let dets: Vec<_> = (0..6)
            .map(|i| det(i, [10.0 * i as f64, 0.0], square(10.0 * i as f64, 0.0, 2.0)))
            .collect();
        let out = generate_pnp_prompts(&dets, 3, 1).unwrap();
        for (i, set) in out.iter().enumerate() {
            let mut expected: Vec<PixelPoint> = dets
                .iter()
                .filter(|d| d.obj_id != i as i64)
                .map(|d| d.center)
                .collect();
            let mut got = set.negatives.clone();
            expected.sort_by(|a, b| a[0].total_cmp(&b[0]));
            got.sort_by(|a, b| a[0].total_cmp(&b[0]));
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn frames_are_independent() {
        let mut dets = vec![
            det(0, [0.0, 0.0], square(0.0, 0.0, 2.0)),
            det(1, [10.0, 0.0], square(10.0, 0.0, 2.0)),
        ];
        dets.push(InstanceDetection {
            frame: 3,
            ..det(0, [5.0, 5.0], square(5.0, 5.0, 2.0))
        });
        let out = generate_pnp_prompts(&dets, 3, 1).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].negatives, vec![[10.0, 0.0]]);
        assert_eq!((out[2].frame, out[2].negatives.len()), (3, 0));
    }

    #[test]
    fn errors() {
        assert!(generate_pnp_prompts(&[], 3, 1).is_err());
        let d = det(0, [0.0, 0.0], square(0.0, 0.0, 2.0));
        assert!(generate_pnp_prompts(&[d.clone(), d.clone()], 3, 1).is_err());
        assert!(generate_pnp_prompts(&[d.clone()], 0, 1).is_err());
        let nan = det(1, [f64::NAN, 0.0], square(0.0, 0.0, 2.0));
        assert!(generate_pnp_prompts(&[nan], 3, 1).is_err());
        let line = det(2, [0.0, 0.0], vec![[0.0, 0.0], [1.0, 1.0]]);
        assert!(generate_pnp_prompts(&[line], 3, 1).is_err());
    }

    #[test]
    fn json_field_names() {
        let set = PromptSet {
            frame: 2,
            obj_id: 7,
            positives: vec![[1.0, 2.0]],
            negatives: vec![],
        };
        let v = serde_json::to_value(&set).unwrap();
        assert_eq!(v["positive"][0][1], 2.0);
        assert!(v["negative"].as_array().unwrap().is_empty());
        let d: InstanceDetection = serde_json::from_str(
            r#"{"frame": 1, "obj_id": 3, "center": [4, 5], "polygon": [[0,0],[9,0],[9,9]]}"#,
        )
        .unwrap();
        assert_eq!(d.center, [4.0, 5.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn order_independent_and_positives_inside(
            seed in any::<u64>(),
            n in 1usize..10,
            grid in 1u32..6,
            radius in 0u32..4,
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut dets: Vec<InstanceDetection> = (0..n)
                .map(|i| {
                    let c = [30.0 * i as f64 + rng.gen_range(0.0..5.0), rng.gen_range(0.0..100.0)];
                    let poly = (0..7)
                        .map(|k| {
                            let a = k as f64 * std::f64::consts::TAU / 7.0;
                            let r = rng.gen_range(2.0..12.0);
                            [c[0] + r * a.cos(), c[1] + r * a.sin()]
                        })
                        .collect();
                    det(i as i64 * 3, c, poly)
                })
                .collect();
            let a = generate_pnp_prompts(&dets, grid, radius).unwrap();
            for (set, d) in a.iter().zip(&dets) {
                for p in &set.positives[1..] {
                    prop_assert!(point_in_polygon(*p, &d.polygon).unwrap());
                }
                prop_assert_eq!(set.negatives.len(), (n - 1).min(MAX_NEGATIVES));
            }
            dets.reverse();
            prop_assert_eq!(generate_pnp_prompts(&dets, grid, radius).unwrap(), a);
        }
    }
}
