use crate::error::{Error, Result};

/// Fixed cyclic topology: node `i` links to `i±1` and `i±2` (mod K).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingGraph {
    neighbors: Vec<Vec<usize>>,
}

pub fn ring_adjacency(k: usize) -> Result<RingGraph> {
    if k < 3 {
        return Err(Error::invalid(format!("ring_adjacency: K must be at least 3, got {k}")));
    }
    let neighbors = (0..k)
        .map(|i| {
            let mut list = Vec::with_capacity(4);
            for off in [k - 2, k - 1, 1, 2] {
                let j = (i + off) % k;
                if j != i && !list.contains(&j) {
                    list.push(j);
                }
            }
            list
        })
        .collect();
    Ok(RingGraph { neighbors })
}

impl RingGraph {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_nodes() {
        let g = ring_adjacency(8).unwrap();
        assert_eq!(g.neighbors(0), &[6, 7, 1, 2]);
    }

    #[test]
    fn sixty_nodes_wraps() {
        let g = ring_adjacency(60).unwrap();
        assert_eq!(g.neighbors(59), &[57, 58, 0, 1]);
    }

    #[test]
    fn four_nodes_dedupes() {
        let g = ring_adjacency(4).unwrap();
        assert_eq!(g.neighbors(0), &[2, 3, 1]);
        let g3 = ring_adjacency(3).unwrap();
        assert_eq!(g3.neighbors(0), &[1, 2]);
        assert!(ring_adjacency(2).is_err());
    }

    #[test]
    fn symmetric_and_bounded() {
        for k in 3..40 {
            let g = ring_adjacency(k).unwrap();
            for i in 0..k {
                let n = g.neighbors(i);
                assert!((2..=4).contains(&n.len()));
                for &j in n {
                    assert!(g.neighbors(j).contains(&i), "K={k}: {i}->{j}");
                }
            }
        }
    }
}
