//! Average performance ratio across tasks.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Mean over tasks of `candidate / reference`, as a percentage. Tasks whose
/// reference is 0 are skipped with a warning.
pub fn compute_apr(candidate: &BTreeMap<String, f64>, reference: &BTreeMap<String, f64>) -> Result<f64> {
    if candidate.len() != reference.len() || candidate.keys().any(|k| !reference.contains_key(k)) {
        let c: Vec<&String> = candidate.keys().collect();
        let r: Vec<&String> = reference.keys().collect();
        return Err(Error::TaskMismatch(format!(
            "candidate tasks {c:?} vs reference tasks {r:?}"
        )));
    }
    let mut ratios = Vec::new();
    for (task, &c) in candidate {
        let r = reference[task];
        if r == 0.0 {
            log::warn!("skipping task `{task}`: reference score is 0");
            continue;
        }
        ratios.push(c / r);
    }
    if ratios.is_empty() {
        return Err(Error::InvalidArgument("no task with a nonzero reference score".into()));
    }
    Ok(100.0 * ratios.iter().sum::<f64>() / ratios.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn zero_reference_skipped() {
        let c = map(&[("a", 5.0), ("b", 3.0)]);
        let r = map(&[("a", 0.0), ("b", 2.0)]);
        assert_eq!(compute_apr(&c, &r).unwrap(), 150.0);
        assert!(compute_apr(&map(&[("a", 1.0)]), &map(&[("a", 0.0)])).is_err());
    }

    #[test]
    fn mismatched_tasks() {
        let err = compute_apr(&map(&[("a", 1.0)]), &map(&[("b", 1.0)]));
        assert!(matches!(err, Err(Error::TaskMismatch(_))));
    }
}
