use super::MinutiaTemplate;
use crate::imgcore::{angle_diff, wrap_2pi};

/// Tolerances of the local-structure matcher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Neighbours per local descriptor.
    pub k: usize,
    pub distance_tolerance: f64,
    pub angle_tolerance: f64,
    /// Local similarity a minutia pair needs to serve as an alignment anchor.
    pub min_local_similarity: f64,
    /// Number of best local matches tried as alignment anchors.
    pub anchors: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            k: 4,
            distance_tolerance: 8.0,
            angle_tolerance: 0.3,
            min_local_similarity: 0.1,
            anchors: 10,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Neighbour {
    distance: f64,
    /// Neighbour direction relative to the centre minutia direction.
    relative_direction: f64,
    /// Bearing of the neighbour relative to the centre minutia direction.
    relative_bearing: f64,
}

/// Template with its rotation/translation-invariant local descriptors.
#[derive(Debug, Clone)]
pub struct PreparedTemplate {
    template: MinutiaTemplate,
    descriptors: Vec<Vec<Neighbour>>,
    /// Canonical ordering key so that matching is symmetric bit for bit.
    order_key: (usize, Vec<u64>),
}

impl PreparedTemplate {
    pub fn new(template: MinutiaTemplate, k: usize) -> Self {
        let ms = &template.minutiae;
        let descriptors = ms
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut others: Vec<(f64, usize)> = ms
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(j, o)| ((o.x - c.x).hypot(o.y - c.y), j))
                    .collect();
                others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                others
                    .into_iter()
                    .take(k)
                    .map(|(distance, j)| {
                        let o = &ms[j];
                        Neighbour {
                            distance,
                            relative_direction: wrap_2pi(o.theta - c.theta),
                            relative_bearing: wrap_2pi((o.y - c.y).atan2(o.x - c.x) - c.theta),
                        }
                    })
                    .collect()
            })
            .collect();
        let mut bytes = Vec::with_capacity(ms.len() * 4);
        for m in ms {
            bytes.extend([m.x.to_bits(), m.y.to_bits(), m.theta.to_bits(), m.quality.to_bits()]);
        }
        Self {
            order_key: (ms.len(), bytes),
            template,
            descriptors,
        }
    }

    pub fn template(&self) -> &MinutiaTemplate {
        &self.template
    }
}

/// Rounds similarities so that rounding noise from rigid transforms cannot
/// reorder otherwise equal candidates.
fn quantize(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

fn local_similarity(a: &[Neighbour], b: &[Neighbour], cfg: &MatchConfig) -> f64 {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (p, na) in a.iter().enumerate() {
        for (q, nb) in b.iter().enumerate() {
            let dd = (na.distance - nb.distance).abs();
            let dr = angle_diff(na.relative_direction, nb.relative_direction);
            let db = angle_diff(na.relative_bearing, nb.relative_bearing);
            if dd <= cfg.distance_tolerance && dr <= cfg.angle_tolerance && db <= cfg.angle_tolerance {
                let s = 1.0 - (dd / cfg.distance_tolerance + dr / cfg.angle_tolerance + db / cfg.angle_tolerance) / 3.0;
                pairs.push((quantize(s), p, q));
            }
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_a, mut used_b) = (0u64, 0u64);
    let mut total = 0.0;
    for (s, p, q) in pairs {
        if used_a & (1 << p) == 0 && used_b & (1 << q) == 0 {
            used_a |= 1 << p;
            used_b |= 1 << q;
            total += s;
        }
    }
    quantize(total / cfg.k as f64)
}

pub fn match_minutiae(a: &MinutiaTemplate, b: &MinutiaTemplate) -> f64 {
    let cfg = MatchConfig::default();
    match_minutiae_with(
        &PreparedTemplate::new(a.clone(), cfg.k),
        &PreparedTemplate::new(b.clone(), cfg.k),
        &cfg,
    )
}

/// Similarity in `[0, 1]`: paired minutiae over the larger template size.
pub fn match_minutiae_with(a: &PreparedTemplate, b: &PreparedTemplate, cfg: &MatchConfig) -> f64 {
    let (na, nb) = (a.template.len(), b.template.len());
    if na == 0 || nb == 0 {
        return 0.0;
    }
    // Canonical argument order makes the result independent of call order.
    let (a, b) = if a.order_key <= b.order_key { (a, b) } else { (b, a) };
    assert!(cfg.k <= 64, "descriptor neighbour count is limited to 64");

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, da) in a.descriptors.iter().enumerate() {
        for (j, db) in b.descriptors.iter().enumerate() {
            let s = local_similarity(da, db, cfg);
            if s >= cfg.min_local_similarity && s > 0.0 {
                candidates.push((s, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));

    let best = candidates
        .iter()
        .take(cfg.anchors)
        .map(|&(_, i, j)| paired_after_alignment(&a.template, &b.template, i, j, cfg))
        .max()
        .unwrap_or(0);
    best as f64 / na.max(nb) as f64
}

/// Aligns `a` onto `b` so that minutia `i` coincides with minutia `j`, then
/// pairs minutiae greedily (closest first) within the tolerances.
fn paired_after_alignment(a: &MinutiaTemplate, b: &MinutiaTemplate, i: usize, j: usize, cfg: &MatchConfig) -> usize {
    let (ai, bj) = (&a.minutiae[i], &b.minutiae[j]);
    let rotation = wrap_2pi(bj.theta - ai.theta);
    let (sin, cos) = rotation.sin_cos();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (p, m) in a.minutiae.iter().enumerate() {
        let (dx, dy) = (m.x - ai.x, m.y - ai.y);
        let x = bj.x + cos * dx - sin * dy;
        let y = bj.y + sin * dx + cos * dy;
        let theta = m.theta + rotation;
        for (q, n) in b.minutiae.iter().enumerate() {
            let d = (n.x - x).hypot(n.y - y);
            if d <= cfg.distance_tolerance && angle_diff(n.theta, theta) <= cfg.angle_tolerance {
                pairs.push((quantize(d), p, q));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut paired = 0;
    for (_, p, q) in pairs {
        if !used_a[p] && !used_b[q] {
            used_a[p] = true;
            used_b[q] = true;
            paired += 1;
        }
    }
    paired
}

#[cfg(test)]
mod tests {
    use super::super::{random_template, rigid_transform};
    use super::*;

    #[test]
    fn self_match_is_one() {
        for seed in 0..10 {
            let t = random_template(seed, 20, 250.0, 10.0);
            assert_eq!(match_minutiae(&t, &t), 1.0);
        }
    }

    #[test]
    fn empty_template_scores_zero() {
        let t = random_template(1, 20, 250.0, 10.0);
        let e = MinutiaTemplate::empty((250, 250));
        assert_eq!(match_minutiae(&t, &e), 0.0);
        assert_eq!(match_minutiae(&e, &t), 0.0);
        assert_eq!(match_minutiae(&e, &e), 0.0);
    }

    #[test]
    fn rigid_transform_invariance_example() {
        let t = random_template(42, 20, 250.0, 10.0);
        let moved = rigid_transform(&t, 37f64.to_radians(), 40.0, -25.0);
        assert!((match_minutiae(&t, &moved) - match_minutiae(&t, &t)).abs() < 1e-6);
    }

    #[test]
    fn unrelated_templates_score_low() {
        let a = random_template(5, 30, 250.0, 10.0);
        let b = random_template(6, 30, 250.0, 10.0);
        assert!(match_minutiae(&a, &b) < 0.3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn symmetric_bounded_invariant(
                sa in any::<u64>(), sb in any::<u64>(),
                na in 0usize..25, nb in 0usize..25,
                rot in -7.0f64..7.0, dx in -100.0f64..100.0, dy in -100.0f64..100.0,
            ) {
                let a = random_template(sa, na, 250.0, 6.0);
                let b = random_template(sb, nb, 250.0, 6.0);
                let ab = match_minutiae(&a, &b);
                prop_assert_eq!(ab.to_bits(), match_minutiae(&b, &a).to_bits());
                prop_assert!((0.0..=1.0).contains(&ab));
                let moved = rigid_transform(&a, rot, dx, dy);
                prop_assert!((match_minutiae(&a, &moved) - match_minutiae(&a, &a)).abs() < 1e-6);
            }
        }
    }
}
