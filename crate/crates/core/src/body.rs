//! Promise bodies: finite sets of labelled terms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// A single labelled term, optionally restricted to a finite value domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Term {
    Label(String),
    Valued { label: String, domain: Vec<String> },
}

impl Term {
    pub fn label(&self) -> &str {
        match self {
            Term::Label(l) => l,
            Term::Valued { label, .. } => label,
        }
    }
}

/// The content of a promise.
///
/// Labels are unique within a body. Comparison between bodies is purely by
/// label; value domains ride along for the simulator and for documentation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Body {
    terms: BTreeMap<String, Option<BTreeSet<String>>>,
}

impl Body {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a body from plain labels. Duplicates collapse.
    pub fn of<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let terms = labels.into_iter().map(|l| (l.into(), None)).collect();
        Self { terms }
    }

    /// Builds a body from terms, rejecting duplicate labels.
    pub fn from_terms<I>(terms: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = Term>,
    {
        let mut body = Self::new();
        for term in terms {
            let (label, domain) = match term {
                Term::Label(l) => (l, None),
                Term::Valued { label, domain } => (label, Some(domain.into_iter().collect())),
            };
            if body.terms.insert(label.clone(), domain).is_some() {
                return Err(label);
            }
        }
        Ok(body)
    }

    pub fn with_domain<I, S>(mut self, label: &str, domain: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.terms
            .insert(label.to_string(), Some(domain.into_iter().map(Into::into).collect()));
        self
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> + '_ {
        self.terms.keys().map(String::as_str)
    }

    pub fn domain(&self, label: &str) -> Option<&BTreeSet<String>> {
        self.terms.get(label).and_then(Option::as_ref)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.terms.contains_key(label)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Label intersection. Domains are taken from `self`.
    pub fn intersect(&self, other: &Body) -> Body {
        let terms = self
            .terms
            .iter()
            .filter(|(l, _)| other.terms.contains_key(*l))
            .map(|(l, d)| (l.clone(), d.clone()))
            .collect();
        Body { terms }
    }

    pub fn intersects(&self, other: &Body) -> bool {
        self.terms.keys().any(|l| other.terms.contains_key(l))
    }

    pub fn union(&self, other: &Body) -> Body {
        let mut terms = self.terms.clone();
        for (l, d) in &other.terms {
            terms.entry(l.clone()).or_insert_with(|| d.clone());
        }
        Body { terms }
    }

    /// Removes every label in `other`.
    pub fn minus(&self, other: &Body) -> Body {
        let terms = self
            .terms
            .iter()
            .filter(|(l, _)| !other.terms.contains_key(*l))
            .map(|(l, d)| (l.clone(), d.clone()))
            .collect();
        Body { terms }
    }

    pub fn is_subset(&self, other: &Body) -> bool {
        self.terms.keys().all(|l| other.terms.contains_key(l))
    }

    pub fn same_labels(&self, other: &Body) -> bool {
        self.terms.len() == other.terms.len() && self.is_subset(other)
    }

    pub fn to_terms(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|(label, domain)| match domain {
                None => Term::Label(label.clone()),
                Some(d) => Term::Valued {
                    label: label.clone(),
                    domain: d.iter().cloned().collect(),
                },
            })
            .collect()
    }
}

impl fmt::Display for Body {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, l) in self.terms.keys().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for Body {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_terms().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Body {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let terms = Vec::<Term>::deserialize(d)?;
        Body::from_terms(terms)
            .map_err(|dup| serde::de::Error::custom(format!("duplicate label `{dup}` in body")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intersection_is_by_label() {
        let a = Body::of(["a", "b"]);
        let b = Body::of(["b", "c"]);
        assert_eq!(a.intersect(&b), Body::of(["b"]));
        assert!(!Body::of(["a"]).intersects(&Body::of(["b"])));
    }

    #[test]
    fn duplicate_labels_rejected() {
        let err = Body::from_terms([Term::Label("x".into()), Term::Label("x".into())]);
        assert_eq!(err, Err("x".to_string()));
    }

    #[test]
    fn yaml_forms() {
        let body: Body = serde_yaml::from_str("[a, {label: r, domain: [x, y]}]").unwrap();
        assert!(body.contains("a"));
        assert_eq!(body.domain("r").unwrap().len(), 2);
        let back: Body = serde_yaml::from_str(&serde_yaml::to_string(&body).unwrap()).unwrap();
        assert_eq!(back, body);
    }
}
