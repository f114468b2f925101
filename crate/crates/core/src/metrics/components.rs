use serde::{Deserialize, Serialize};

use super::Mask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[default]
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Keeps the smaller index as root, so a root is its component's first
    /// pixel in raster order.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Root (first raster pixel) of every foreground pixel's component.
fn label(m: &Mask, conn: Connectivity) -> Vec<Option<usize>> {
    let (h, w) = (m.height(), m.width());
    let mut ds = DisjointSet {
        parent: (0..h * w).collect(),
    };
    for y in 0..h {
        for x in 0..w {
            if !m.get(y, x) {
                continue;
            }
            let i = y * w + x;
            if x > 0 && m.get(y, x - 1) {
                ds.union(i, i - 1);
            }
            if y > 0 {
                if m.get(y - 1, x) {
                    ds.union(i, i - w);
                }
                if conn == Connectivity::Eight {
                    if x > 0 && m.get(y - 1, x - 1) {
                        ds.union(i, i - w - 1);
                    }
                    if x + 1 < w && m.get(y - 1, x + 1) {
                        ds.union(i, i - w + 1);
                    }
                }
            }
        }
    }
    (0..h * w)
        .map(|i| m.data()[i].then(|| ds.find(i)))
        .collect()
}

pub fn component_count(m: &Mask, conn: Connectivity) -> usize {
    label(m, conn)
        .iter()
        .enumerate()
        .filter(|(i, r)| **r == Some(*i))
        .count()
}

/// Keeps only the largest connected component. Equal sizes go to the
/// component that starts first in raster order.
pub fn largest_component(m: &Mask, conn: Connectivity) -> Mask {
    let roots = label(m, conn);
    let mut size = vec![0usize; roots.len()];
    for r in roots.iter().flatten() {
        size[*r] += 1;
    }
    let mut best: Option<usize> = None;
    for (r, &s) in size.iter().enumerate() {
        if s > 0 && best.is_none_or(|b| s > size[b]) {
            best = Some(r);
        }
    }
    let data = roots.iter().map(|r| r.is_some() && *r == best).collect();
    Mask::new(m.height(), m.width(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(rows: &[&str]) -> Mask {
        let data = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        Mask::new(rows.len(), rows[0].len(), data).unwrap()
    }

    #[test]
    fn keeps_five_over_three() {
        let m = parse(&["##..#", "##..#", "#...#"]);
        assert_eq!(
            largest_component(&m, Connectivity::Four),
            parse(&["##...", "##...", "#...."])
        );
        let single = parse(&[".##.", ".#.."]);
        assert_eq!(largest_component(&single, Connectivity::Four), single);
        assert!(largest_component(&Mask::empty(3, 3), Connectivity::Four).is_empty());
    }

    #[test]
    fn diagonal_touch_depends_on_connectivity() {
        let m = parse(&["#.", ".#"]);
        assert_eq!(component_count(&m, Connectivity::Four), 2);
        assert_eq!(component_count(&m, Connectivity::Eight), 1);
        // tie of two single pixels goes to the first in raster order
        assert_eq!(largest_component(&m, Connectivity::Four), parse(&["#.", ".."]));
    }

    #[test]
    fn u_shape_merges_late() {
        let m = parse(&["#.#", "#.#", "###", "...", "##."]);
        assert_eq!(component_count(&m, Connectivity::Four), 2);
        assert_eq!(largest_component(&m, Connectivity::Four).count(), 7);
    }
}
