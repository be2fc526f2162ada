//! Reaction network model.
//!
//! A network is a list of species, a list of reactions between complexes and
//! the deduplicated set of complexes those reactions touch. Species order is
//! the coordinate system for every vector in the crate.

use std::collections::HashMap;
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use petgraph::unionfind::UnionFind;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("a network needs at least one species")]
    NoSpecies,
    #[error("duplicate species `{0}`")]
    DuplicateSpecies(String),
    #[error("reaction {index}: complex has {found} entries, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("reaction {index}: source equals product")]
    SourceEqualsProduct { index: usize },
    #[error("reaction {index}: rate constant {rate} is not a finite nonnegative number")]
    InvalidRate { index: usize, rate: f64 },
}

/// A nonnegative integer combination of species.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Complex(Vec<u32>);

impl Complex {
    pub fn new(counts: Vec<u32>) -> Self {
        Complex(counts)
    }

    /// The empty complex in dimension `d`.
    pub fn zero(d: usize) -> Self {
        Complex(vec![0; d])
    }

    pub fn unit(d: usize, species: usize) -> Self {
        let mut counts = vec![0; d];
        counts[species] = 1;
        Complex(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `‖z‖₁`, the molecularity of the complex.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_higher_order(&self) -> bool {
        self.order() >= 2
    }

    /// `c^z = Π c_i^{z_i}` with `0⁰ = 1`.
    pub fn monomial(&self, c: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(c)
            .filter(|(&z, _)| z > 0)
            .map(|(&z, &ci)| ci.powi(z as i32))
            .product()
    }

    /// Renders the complex as a `+`-separated sum, `0` for the empty complex.
    pub fn display_with<'a, S: AsRef<str>>(&'a self, species: &'a [S]) -> ComplexDisplay<'a, S> {
        ComplexDisplay {
            complex: self,
            species,
        }
    }

    pub(crate) fn permuted(&self, perm: &[usize]) -> Self {
        let mut counts = vec![0; self.0.len()];
        for (old, &new) in perm.iter().enumerate() {
            counts[new] = self.0[old];
        }
        Complex(counts)
    }
}

pub struct ComplexDisplay<'a, S> {
    complex: &'a Complex,
    species: &'a [S],
}

impl<S: AsRef<str>> fmt::Display for ComplexDisplay<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (count, name) in self.complex.0.iter().zip(self.species) {
            if *count == 0 {
                continue;
            }
            if !first {
                f.write_str("+")?;
            }
            first = false;
            if *count > 1 {
                write!(f, "{count}")?;
            }
            f.write_str(name.as_ref())?;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub source: Complex,
    pub product: Complex,
    pub rate: f64,
}

impl Reaction {
    pub fn new(source: Complex, product: Complex, rate: f64) -> Self {
        Reaction {
            source,
            product,
            rate,
        }
    }

    /// `ζ = y′ − y`.
    pub fn reaction_vector(&self) -> Vec<i64> {
        self.product
            .counts()
            .iter()
            .zip(self.source.counts())
            .map(|(&p, &s)| i64::from(p) - i64::from(s))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<String>,
    reactions: Vec<Reaction>,
    complexes: Vec<Complex>,
    // (source complex index, product complex index) per reaction
    edges: Vec<(usize, usize)>,
}

impl ReactionNetwork {
    /// Builds a network, deduplicating complexes in order of first
    /// appearance (source before product, reactions in order).
    pub fn new(species: Vec<String>, reactions: Vec<Reaction>) -> Result<Self, NetworkError> {
        if species.is_empty() {
            return Err(NetworkError::NoSpecies);
        }
        for (i, name) in species.iter().enumerate() {
            if species[..i].contains(name) {
                return Err(NetworkError::DuplicateSpecies(name.clone()));
            }
        }
        let d = species.len();
        let mut lookup: HashMap<Complex, usize> = HashMap::new();
        let mut complexes = Vec::new();
        let mut edges = Vec::with_capacity(reactions.len());
        for (index, r) in reactions.iter().enumerate() {
            for z in [&r.source, &r.product] {
                if z.dim() != d {
                    return Err(NetworkError::DimensionMismatch {
                        index,
                        expected: d,
                        found: z.dim(),
                    });
                }
            }
            if r.source == r.product {
                return Err(NetworkError::SourceEqualsProduct { index });
            }
            if !r.rate.is_finite() || r.rate < 0.0 {
                return Err(NetworkError::InvalidRate {
                    index,
                    rate: r.rate,
                });
            }
            let mut intern = |z: &Complex| {
                *lookup.entry(z.clone()).or_insert_with(|| {
                    complexes.push(z.clone());
                    complexes.len() - 1
                })
            };
            let s = intern(&r.source);
            let p = intern(&r.product);
            edges.push((s, p));
        }
        Ok(ReactionNetwork {
            species,
            reactions,
            complexes,
            edges,
        })
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn dim(&self) -> usize {
        self.species.len()
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn complexes(&self) -> &[Complex] {
        &self.complexes
    }

    /// Source and product complex indices of every reaction.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn complex_index(&self, z: &Complex) -> Option<usize> {
        self.complexes.iter().position(|c| c == z)
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    pub fn format_complex(&self, z: &Complex) -> String {
        z.display_with(&self.species).to_string()
    }

    pub fn reaction_vector(&self, k: usize) -> Vec<i64> {
        self.reactions[k].reaction_vector()
    }

    /// Connected components of the undirected reaction graph, each sorted,
    /// ordered by their smallest complex index.
    pub fn linkage_classes(&self) -> Vec<Vec<usize>> {
        let n = self.complexes.len();
        let mut uf = UnionFind::<usize>::new(n);
        for &(s, p) in &self.edges {
            uf.union(s, p);
        }
        let mut classes: Vec<Vec<usize>> = Vec::new();
        let mut root_to_class: HashMap<usize, usize> = HashMap::new();
        for i in 0..n {
            let root = uf.find(i);
            let class = *root_to_class.entry(root).or_insert_with(|| {
                classes.push(Vec::new());
                classes.len() - 1
            });
            classes[class].push(i);
        }
        classes
    }

    /// True iff every linkage class is strongly connected, i.e. every
    /// reaction's endpoints share a strongly connected component.
    pub fn is_weakly_reversible(&self) -> bool {
        let n = self.complexes.len();
        let mut graph = DiGraph::<(), ()>::with_capacity(n, self.edges.len());
        let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
        for &(s, p) in &self.edges {
            graph.add_edge(nodes[s], nodes[p], ());
        }
        let mut component = vec![0usize; n];
        for (id, scc) in tarjan_scc(&graph).into_iter().enumerate() {
            for node in scc {
                component[node.index()] = id;
            }
        }
        self.edges.iter().all(|&(s, p)| component[s] == component[p])
    }

    /// Maximum molecularity over all complexes.
    pub fn order(&self) -> u32 {
        self.complexes.iter().map(Complex::order).max().unwrap_or(0)
    }

    /// `‖y‖₁ ≤ 2` for every complex.
    pub fn is_binary(&self) -> bool {
        self.order() <= 2
    }

    /// Relabels species so that old species `i` becomes new species `perm[i]`.
    pub fn permute_species(&self, perm: &[usize]) -> ReactionNetwork {
        assert_eq!(perm.len(), self.dim(), "permutation length");
        let mut species = vec![String::new(); self.dim()];
        for (old, &new) in perm.iter().enumerate() {
            species[new] = self.species[old].clone();
        }
        let reactions = self
            .reactions
            .iter()
            .map(|r| Reaction::new(r.source.permuted(perm), r.product.permuted(perm), r.rate))
            .collect();
        ReactionNetwork::new(species, reactions).expect("permutation preserves validity")
    }
}
