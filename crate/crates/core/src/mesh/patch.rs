use std::collections::BTreeSet;

use super::MeshHierarchy;

/// The m-layer patch ω^m(T) of a coarse element and the fine degrees of
/// freedom of its corrector problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub coarse_element: usize,
    pub layers: usize,
    /// Coarse elements of ω^m(T), sorted.
    pub element_set: Vec<usize>,
    /// Fine nodes with free corrector values: everything in the closed
    /// patch except nodes on ∂ω^m(T)∖Γ. Sorted.
    pub fine_dofs: Vec<usize>,
    /// Coarse nodes whose hat meets the patch in positive area. Sorted.
    pub constraint_nodes: Vec<usize>,
}

impl Patch {
    pub fn new(mesh: &MeshHierarchy, t: usize, layers: usize) -> Self {
        assert!(layers >= 1, "patches need at least one layer");
        let element_set = element_layers(mesh, t, layers);
        let constraint_nodes: BTreeSet<usize> = element_set
            .iter()
            .flat_map(|&k| mesh.coarse.elements[k])
            .collect();

        let mut nodes = BTreeSet::new();
        for &k in &element_set {
            nodes.extend(mesh.fine_nodes_of_coarse(k));
        }
        for [p, q] in interior_boundary_edges(mesh, &element_set) {
            for v in mesh.fine_nodes_on_coarse_edge(p, q) {
                nodes.remove(&v);
            }
        }
        Self {
            coarse_element: t,
            layers,
            element_set,
            fine_dofs: nodes.into_iter().collect(),
            constraint_nodes: constraint_nodes.into_iter().collect(),
        }
    }

    /// Fine elements of the patch, sorted.
    pub fn fine_elements(&self, mesh: &MeshHierarchy) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .element_set
            .iter()
            .flat_map(|&k| mesh.children(k))
            .collect();
        out.sort_unstable();
        out
    }
}

/// ω^m(T) by m rounds of vertex-neighbour expansion.
pub(crate) fn element_layers(mesh: &MeshHierarchy, t: usize, layers: usize) -> Vec<usize> {
    let coarse = &mesh.coarse;
    let n = coarse.n;
    let mut set = BTreeSet::from([t]);
    for _ in 0..layers {
        let verts: BTreeSet<usize> = set.iter().flat_map(|&k| coarse.elements[k]).collect();
        let mut next = set.clone();
        for v in verts {
            let (vx, vy) = coarse.node_coords(v);
            for j in vy.saturating_sub(1)..(vy + 1).min(n) {
                for i in vx.saturating_sub(1)..(vx + 1).min(n) {
                    for tt in 0..2 {
                        let k = coarse.element_id(i, j, tt);
                        if coarse.elements[k].contains(&v) {
                            next.insert(k);
                        }
                    }
                }
            }
        }
        if next.len() == set.len() {
            break;
        }
        set = next;
    }
    set.into_iter().collect()
}

/// Coarse edges on the boundary of an element set that do not lie on Γ.
fn interior_boundary_edges(mesh: &MeshHierarchy, elements: &[usize]) -> Vec<[usize; 2]> {
    let coarse = &mesh.coarse;
    let mut count = std::collections::BTreeMap::new();
    for &k in elements {
        let [a, b, c] = coarse.elements[k];
        for (p, q) in [(a, b), (b, c), (c, a)] {
            *count.entry((p.min(q), p.max(q))).or_insert(0usize) += 1;
        }
    }
    count
        .into_iter()
        .filter(|&(_, c)| c == 1)
        .map(|((p, q), _)| [p, q])
        .filter(|&[p, q]| coarse.node_sides(p) & coarse.node_sides(q) == 0)
        .collect()
}
