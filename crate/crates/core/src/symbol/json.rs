use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Caps, ClassicalSymbol, Monomial};
use crate::error::Error;

/// One term of the JSON symbol schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDoc {
    pub k: [i32; 2],
    pub alpha: [u32; 2],
    pub m: u32,
    pub re: f64,
    pub im: f64,
}

/// JSON form of a [`ClassicalSymbol`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolDoc {
    pub caps: Caps,
    #[serde(default)]
    pub real_on_real: bool,
    pub terms: Vec<TermDoc>,
}

impl TryFrom<SymbolDoc> for ClassicalSymbol {
    type Error = Error;

    fn try_from(doc: SymbolDoc) -> Result<Self, Error> {
        let s = ClassicalSymbol::from_terms(
            doc.caps,
            doc.terms
                .iter()
                .map(|t| (Monomial::new(t.k, t.alpha, t.m), Complex64::new(t.re, t.im))),
        )?;
        if doc.real_on_real {
            s.into_real_on_real()
        } else {
            Ok(s)
        }
    }
}

impl From<ClassicalSymbol> for SymbolDoc {
    fn from(s: ClassicalSymbol) -> Self {
        SymbolDoc {
            caps: s.caps(),
            real_on_real: s.is_real_on_real(),
            terms: s
                .terms()
                .map(|(m, c)| TermDoc { k: m.k, alpha: m.alpha, m: m.m, re: c.re, im: c.im })
                .collect(),
        }
    }
}

impl Serialize for ClassicalSymbol {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SymbolDoc::from(self.clone()).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ClassicalSymbol {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = SymbolDoc::deserialize(deserializer)?;
        ClassicalSymbol::try_from(doc).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = r#"{"caps":{"k_max":3,"n_xi":2,"m_eps":1},"real_on_real":true,
            "terms":[{"k":[1,0],"alpha":[0,0],"m":1,"re":0.5,"im":0.0},
                     {"k":[-1,0],"alpha":[0,0],"m":1,"re":0.5,"im":0.0},
                     {"k":[0,0],"alpha":[1,1],"m":0,"re":2.0,"im":0.0}]}"#;
        let s: ClassicalSymbol = serde_json::from_str(text).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.is_real_on_real());
        let back: ClassicalSymbol = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_false_reality_claim_and_cap_violations() {
        let text = r#"{"caps":{"k_max":3,"n_xi":2,"m_eps":1},"real_on_real":true,
            "terms":[{"k":[1,0],"alpha":[0,0],"m":0,"re":1.0,"im":0.0}]}"#;
        assert!(serde_json::from_str::<ClassicalSymbol>(text).is_err());
        let text = r#"{"caps":{"k_max":0,"n_xi":2,"m_eps":1},"real_on_real":false,
            "terms":[{"k":[1,0],"alpha":[0,0],"m":0,"re":1.0,"im":0.0}]}"#;
        assert!(serde_json::from_str::<ClassicalSymbol>(text).is_err());
    }
}
