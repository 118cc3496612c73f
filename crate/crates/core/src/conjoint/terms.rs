//! Fixed and random term lists for the three model structures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    /// Main effects; random consumer and consumer-by-main-effect terms.
    #[default]
    Struct1,
    /// Main effects and two-factor interactions; consumer by every fixed term.
    Struct2,
    /// Full factorial on both sides, followed by automatic reduction.
    Struct3,
}

/// A factor interaction, stored as ascending indices into
/// [`ModelSpec::factors`]. The empty term is the intercept on the fixed side
/// and the plain consumer effect on the random side.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Term(pub Vec<usize>);

impl Term {
    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// True when every factor of `self` is also in `other`.
    pub fn is_contained_in(&self, other: &Term) -> bool {
        self.0.iter().all(|f| other.0.contains(f))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub structure: Structure,
    /// Selected factor names in selection order.
    pub factors: Vec<String>,
    /// Fixed terms without the intercept, which is always present.
    pub fixed: Vec<Term>,
    /// Random terms; each one is crossed with the consumer.
    pub random: Vec<Term>,
}

impl ModelSpec {
    pub fn term_name(&self, t: &Term) -> String {
        if t.0.is_empty() {
            return "(Intercept)".to_owned();
        }
        t.0.iter().map(|&i| self.factors[i].as_str()).collect::<Vec<_>>().join(":")
    }

    pub fn random_name(&self, t: &Term) -> String {
        if t.0.is_empty() {
            "Consumer".to_owned()
        } else {
            format!("{}:Consumer", self.term_name(t))
        }
    }

    pub fn fixed_names(&self) -> Vec<String> {
        self.fixed.iter().map(|t| self.term_name(t)).collect()
    }

    pub fn random_names(&self) -> Vec<String> {
        self.random.iter().map(|t| self.random_name(t)).collect()
    }

    /// Position of a fixed term given by name. Factor order inside the name
    /// does not matter.
    pub fn find_fixed(&self, name: &str) -> Option<usize> {
        let t = self.parse_term(name)?;
        self.fixed.iter().position(|f| *f == t)
    }

    pub fn find_random(&self, name: &str) -> Option<usize> {
        self.random_names().iter().position(|n| n == name)
    }

    fn parse_term(&self, name: &str) -> Option<Term> {
        let mut idx = name
            .split(':')
            .map(|p| self.factors.iter().position(|f| f == p.trim()))
            .collect::<Option<Vec<_>>>()?;
        idx.sort_unstable();
        idx.dedup();
        Some(Term(idx))
    }
}

/// Subsets of `0..n` of the given size in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Enumerate the terms of a model structure. Main effects come first in
/// selection order, then interactions by increasing order, each order in
/// lexicographic order of the selection positions.
pub fn build_terms(factors: &[String], structure: Structure) -> Result<ModelSpec> {
    if factors.is_empty() {
        return Err(Error::InvalidInput("no factors selected".into()));
    }
    for (i, f) in factors.iter().enumerate() {
        if factors[..i].contains(f) {
            return Err(Error::InvalidInput(format!("factor '{f}' selected twice")));
        }
    }
    let n = factors.len();
    let max_order = match structure {
        Structure::Struct1 => 1,
        Structure::Struct2 => 2.min(n),
        Structure::Struct3 => n,
    };
    let fixed: Vec<Term> = (1..=max_order).flat_map(|k| combinations(n, k)).map(Term).collect();
    let mut random = vec![Term(Vec::new())];
    random.extend(fixed.iter().cloned());
    Ok(ModelSpec {
        structure,
        factors: factors.to_vec(),
        fixed,
        random,
    })
}
