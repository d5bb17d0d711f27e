//! Deterministic covariate expansion: numeric powers and monomials,
//! categorical dummies, and second-order interactions with dummies.
//!
//! Column order: base numerics, powers, numeric x numeric monomials,
//! categorical dummies, dummy x numeric-term interactions, dummy x dummy
//! interactions; an intercept is prepended. Names encode provenance
//! ("age^2", "age:visits", "age:married=1").

use super::config::{CatNumericInteractions, ExpandSpec};
use super::ingest::IngestedData;
use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use std::collections::HashSet;

fn product(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn power(a: &[f64], d: usize) -> Vec<f64> {
    a.iter().map(|x| x.powi(d as i32)).collect()
}

/// Exponent vectors over k variables with total degree in 2..=degree and at
/// least two nonzero entries, in (degree, lexicographic) order.
fn cross_monomials(k: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for d in 2..=degree {
        let mut stack = vec![(Vec::<usize>::new(), d)];
        while let Some((prefix, rem)) = stack.pop() {
            if prefix.len() == k {
                if rem == 0 && prefix.iter().filter(|&&e| e > 0).count() >= 2 {
                    out.push(prefix);
                }
                continue;
            }
            // descending exponent keeps lexicographic order under the
            // stack's LIFO reversal
            for e in 0..=rem {
                let mut next = prefix.clone();
                next.push(e);
                stack.push((next, rem - e));
            }
        }
    }
    out
}

fn monomial_name(vars: &[&str], expo: &[usize]) -> String {
    expo.iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(i, &e)| if e == 1 { vars[i].to_string() } else { format!("{}^{e}", vars[i]) })
        .collect::<Vec<_>>()
        .join(":")
}

/// Expand ingested covariates into a design matrix (with intercept) under
/// the given rule. Duplicate generated names are an error.
pub fn expand_covariates(data: &IngestedData, spec: &ExpandSpec) -> Result<DesignMatrix> {
    if !(1..=3).contains(&spec.degree) {
        return Err(Error::InvalidArgument(format!(
            "expansion degree must be in 1..=3, got {}",
            spec.degree
        )));
    }
    let n = data.n();
    let mut names: Vec<String> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let numeric_names: Vec<&str> = data.numeric.iter().map(|(n, _)| n.as_str()).collect();

    // 1. base numerics
    for (name, vals) in &data.numeric {
        names.push(name.clone());
        cols.push(vals.clone());
    }
    // 2. powers
    for d in 2..=spec.degree {
        for (name, vals) in &data.numeric {
            names.push(format!("{name}^{d}"));
            cols.push(power(vals, d));
        }
    }
    // 3. numeric x numeric monomials
    let mut pairwise_cross: Vec<(String, Vec<f64>)> = Vec::new();
    if spec.numeric_cross && data.numeric.len() >= 2 {
        for expo in cross_monomials(data.numeric.len(), spec.degree) {
            let mut vals = vec![1.0; n];
            for (i, &e) in expo.iter().enumerate() {
                if e > 0 {
                    for (v, x) in vals.iter_mut().zip(power(&data.numeric[i].1, e)) {
                        *v *= x;
                    }
                }
            }
            let name = monomial_name(&numeric_names, &expo);
            if expo.iter().all(|&e| e <= 1) {
                pairwise_cross.push((name.clone(), vals.clone()));
            }
            names.push(name);
            cols.push(vals);
        }
    }
    // 4. categorical dummies
    for d in &data.dummies {
        names.push(d.name.clone());
        cols.push(d.values.clone());
    }
    // 5. dummy x numeric-term interactions
    let num_terms: Vec<(String, &Vec<f64>)> = match spec.categorical_numeric {
        CatNumericInteractions::None => vec![],
        CatNumericInteractions::Linear => {
            data.numeric.iter().map(|(n, v)| (n.clone(), v)).collect()
        }
        CatNumericInteractions::Cross => data
            .numeric
            .iter()
            .map(|(n, v)| (n.clone(), v))
            .chain(pairwise_cross.iter().map(|(n, v)| (n.clone(), v)))
            .collect(),
    };
    for d in &data.dummies {
        for (tname, tvals) in &num_terms {
            names.push(format!("{tname}:{}", d.name));
            cols.push(product(tvals, &d.values));
        }
    }
    // 6. dummy x dummy across variables
    if spec.categorical_pairs {
        let k = data.dummies.len();
        for i in 0..k {
            for j in (i + 1)..k {
                if data.dummies[i].parent != data.dummies[j].parent {
                    names.push(format!("{}:{}", data.dummies[i].name, data.dummies[j].name));
                    cols.push(product(&data.dummies[i].values, &data.dummies[j].values));
                }
            }
        }
    }

    let mut seen = HashSet::new();
    for name in &names {
        if !seen.insert(name.as_str()) {
            return Err(Error::Data(format!("duplicate generated column name {name:?}")));
        }
    }

    // intercept in front
    let mut all_names = Vec::with_capacity(names.len() + 1);
    all_names.push("(intercept)".to_string());
    all_names.extend(names);
    let mut all_cols = Vec::with_capacity(cols.len() + 1);
    all_cols.push(vec![1.0; n]);
    all_cols.extend(cols);
    DesignMatrix::from_columns(all_cols, all_names, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::ingest::DummyColumn;

    fn base(numeric: Vec<(&str, Vec<f64>)>, dummies: Vec<(&str, &str, Vec<f64>)>) -> IngestedData {
        let n = numeric
            .first()
            .map(|(_, v)| v.len())
            .or_else(|| dummies.first().map(|(_, _, v)| v.len()))
            .unwrap();
        IngestedData {
            numeric: numeric.into_iter().map(|(a, b)| (a.to_string(), b)).collect(),
            dummies: dummies
                .into_iter()
                .map(|(name, parent, values)| DummyColumn {
                    name: name.to_string(),
                    parent: parent.to_string(),
                    values,
                })
                .collect(),
            treat: vec![false; n],
            y: vec![0.0; n],
            n_dropped: 0,
        }
    }

    #[test]
    fn identity_expansion_at_degree_one() {
        let d = base(vec![("a", vec![1.0, 2.0, 3.0]), ("b", vec![4.0, 5.0, 6.0])], vec![]);
        let x = expand_covariates(&d, &ExpandSpec::default()).unwrap();
        assert_eq!(x.p(), 3); // intercept + a + b
        assert_eq!(x.names(), &["(intercept)", "a", "b"]);
    }

    #[test]
    fn two_numerics_degree_three_counts() {
        // 2 base + 2 squares + 2 cubes + 1 cross + 2 power-products = 9
        let d = base(vec![("a", vec![1.0, 2.0, 3.0]), ("b", vec![4.0, 5.0, 6.0])], vec![]);
        let spec = ExpandSpec { degree: 3, numeric_cross: true, ..ExpandSpec::default() };
        let x = expand_covariates(&d, &spec).unwrap();
        assert_eq!(x.p(), 10); // + intercept
        assert_eq!(
            x.names(),
            &[
                "(intercept)",
                "a",
                "b",
                "a^2",
                "b^2",
                "a^3",
                "b^3",
                "a:b",
                "a^2:b",
                "a:b^2"
            ]
        );
        // spot-check a value: row 1 of a^2:b = 2^2 * 5
        assert_eq!(x.value(1, 8), 20.0);
    }

    #[test]
    fn case_study_schema_gives_eighty_terms() {
        // 2 numerics, two 3-level categoricals (2 dummies each), 5 binaries:
        // 1 intercept + 9 numeric monomials + 9 dummies + 27 dummy-numeric
        // products + 34 dummy pairs = 80 columns
        let num = vec![("age", vec![1.0, 2.0, 3.0, 4.0]), ("visits", vec![0.0, 1.0, 2.0, 3.0])];
        let mut dums: Vec<(&str, &str, Vec<f64>)> = vec![
            ("edu=hs", "edu", vec![1.0, 0.0, 0.0, 0.0]),
            ("edu=more", "edu", vec![0.0, 1.0, 0.0, 0.0]),
            ("order=two", "order", vec![0.0, 0.0, 1.0, 0.0]),
            ("order=more", "order", vec![0.0, 0.0, 0.0, 1.0]),
        ];
        for b in ["white", "hispanic", "married", "foreign", "alcohol"] {
            dums.push((
                Box::leak(format!("{b}=1").into_boxed_str()),
                Box::leak(b.to_string().into_boxed_str()),
                vec![0.0, 1.0, 0.0, 1.0],
            ));
        }
        let d = base(num, dums);
        let spec = ExpandSpec {
            degree: 3,
            numeric_cross: true,
            categorical_pairs: true,
            categorical_numeric: CatNumericInteractions::Cross,
        };
        let x = expand_covariates(&d, &spec).unwrap();
        assert_eq!(x.p(), 80, "expected the 80-term case-study expansion");
    }

    #[test]
    fn duplicate_names_rejected() {
        let d = base(vec![("a", vec![1.0, 2.0]), ("a", vec![3.0, 4.0])], vec![]);
        assert!(expand_covariates(&d, &ExpandSpec::default()).is_err());
    }

    #[test]
    fn cross_monomials_enumeration() {
        let m = cross_monomials(2, 3);
        assert_eq!(m, vec![vec![1, 1], vec![2, 1], vec![1, 2]]);
        assert_eq!(cross_monomials(3, 2), vec![vec![1, 1, 0], vec![1, 0, 1], vec![0, 1, 1]]);
    }
}
