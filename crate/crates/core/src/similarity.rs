//! Tally-based similarity: feature binarization, set partition, and the
//! classical and weighted Tversky indices.
//!
//! A subject comparand and an archetype comparand are each reduced to a
//! vector of strictly binary feature-exhibition flags. The three mutually
//! exclusive subsets (common, subject-only, archetype-only) are recast as
//! binary vectors so that per-feature importance weights can be applied to
//! the classical tally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered real-valued features with unique names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub names: Vec<String>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if values.is_empty() || values.len() != names.len() {
            return Err(Error::SpecMismatch(format!(
                "feature vector needs matching nonempty values/names, got {}/{}",
                values.len(),
                names.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::SpecMismatch(format!("duplicate feature name `{n}`")));
            }
        }
        Ok(Self { values, names })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One named feature's tolerance interval and weight, as serialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureTolerance {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub weight: f64,
}

/// Per-feature open tolerance intervals `(l, u)` and weights `w >= 1`.
///
/// Serialized as `{"features":[{"name","lower","upper","weight"},...]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub weights: Vec<f64>,
    pub names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ToleranceSpecDoc {
    features: Vec<FeatureTolerance>,
}

impl ToleranceSpec {
    /// Validates the interval and weight contracts at construction time.
    ///
    /// Weights in `(0, 1)` are rejected outright rather than renormalized;
    /// callers must rescale explicitly.
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        weights: Vec<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        let m = names.len();
        if m == 0 || lower.len() != m || upper.len() != m || weights.len() != m {
            return Err(Error::SpecMismatch(format!(
                "tolerance spec lists must share a nonzero length, got l={} u={} w={} names={}",
                lower.len(),
                upper.len(),
                weights.len(),
                m
            )));
        }
        for i in 0..m {
            if !(lower[i] < upper[i]) {
                return Err(Error::InvalidInput(format!(
                    "feature `{}`: lower {} must be < upper {}",
                    names[i], lower[i], upper[i]
                )));
            }
            if !(weights[i] >= 1.0) {
                return Err(Error::InvalidWeights(format!(
                    "feature `{}`: weight {} < 1; rescale weights so the minimum is 1",
                    names[i], weights[i]
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            weights,
            names,
        })
    }

    /// Uniform-weight spec from intervals alone.
    pub fn with_unit_weights(
        lower: Vec<f64>,
        upper: Vec<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        let w = vec![1.0; names.len()];
        Self::new(lower, upper, w, names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn to_json(&self) -> String {
        let doc = ToleranceSpecDoc {
            features: (0..self.len())
                .map(|i| FeatureTolerance {
                    name: self.names[i].clone(),
                    lower: self.lower[i],
                    upper: self.upper[i],
                    weight: self.weights[i],
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("tolerance spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ToleranceSpecDoc =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("tolerance spec: {e}")))?;
        let mut lower = Vec::with_capacity(doc.features.len());
        let mut upper = Vec::with_capacity(doc.features.len());
        let mut weights = Vec::with_capacity(doc.features.len());
        let mut names = Vec::with_capacity(doc.features.len());
        for f in doc.features {
            lower.push(f.lower);
            upper.push(f.upper);
            weights.push(f.weight);
            names.push(f.name);
        }
        Self::new(lower, upper, weights, names)
    }
}

/// Strictly binary feature-exhibition flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryFeatureVector {
    pub bits: Vec<u8>,
    pub names: Vec<String>,
}

impl BinaryFeatureVector {
    pub fn new(bits: Vec<u8>, names: Vec<String>) -> Result<Self> {
        if bits.len() != names.len() {
            return Err(Error::SpecMismatch(format!(
                "bits/names length mismatch: {}/{}",
                bits.len(),
                names.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput("bits must be 0 or 1".into()));
        }
        Ok(Self { bits, names })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of set bits.
    pub fn count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

/// How to tally a feature exhibited by neither comparand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AbsentPolicy {
    /// Both-absent counts as agreement: the index lands in the common vector.
    #[default]
    CountAsCommon,
    /// Both-absent indices are removed from the universe entirely.
    DropFromUniverse,
}

/// The three mutually exclusive set vectors over the retained universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetPartition {
    pub common: BinaryFeatureVector,
    pub subject_only: BinaryFeatureVector,
    pub archetype_only: BinaryFeatureVector,
}

impl SetPartition {
    /// Size of the retained feature universe.
    pub fn universe_len(&self) -> usize {
        self.common.len()
    }

    pub fn names(&self) -> &[String] {
        &self.common.names
    }
}

/// Relative importance of the two set complements in the classical index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TverskyParams {
    pub alpha: f64,
    pub beta: f64,
}

impl TverskyParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !(beta >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "alpha and beta must be nonnegative, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// alpha = beta = 1: the Jaccard index.
    pub fn jaccard() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    /// alpha = beta = 1/2: the Dice coefficient.
    pub fn dice() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
        }
    }
}

/// Binarizes each feature against its open tolerance interval.
///
/// `bit = 1` iff `l < x < u`; boundary values and NaN map to 0. NaN marks a
/// feature that could not be computed, which is treated as not exhibited
/// within tolerance. Infinite values are rejected.
pub fn binarize(x: &FeatureVector, spec: &ToleranceSpec) -> Result<BinaryFeatureVector> {
    if x.names != spec.names {
        return Err(Error::SpecMismatch(
            "feature vector and tolerance spec universes differ".into(),
        ));
    }
    let mut bits = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let v = x.values[i];
        if v.is_infinite() {
            return Err(Error::InvalidInput(format!(
                "feature `{}` is infinite",
                x.names[i]
            )));
        }
        // NaN comparisons are false, so a NaN feature falls through to 0.
        let b = (spec.lower[i] < v && v < spec.upper[i]) as u8;
        bits.push(b);
    }
    BinaryFeatureVector::new(bits, x.names.clone())
}

/// Splits two binary vectors into the common / subject-only / archetype-only
/// partition over a shared universe.
///
/// Under [`AbsentPolicy::DropFromUniverse`], indices where neither comparand
/// exhibits the feature are removed from all three output vectors.
pub fn partition(
    subject: &BinaryFeatureVector,
    archetype: &BinaryFeatureVector,
    absent_policy: AbsentPolicy,
) -> Result<SetPartition> {
    if subject.names != archetype.names {
        return Err(Error::SpecMismatch(
            "subject and archetype feature universes differ".into(),
        ));
    }
    let mut names = Vec::new();
    let mut common = Vec::new();
    let mut subj = Vec::new();
    let mut arch = Vec::new();
    for i in 0..subject.len() {
        let (s, a) = (subject.bits[i], archetype.bits[i]);
        if s == 0 && a == 0 && absent_policy == AbsentPolicy::DropFromUniverse {
            continue;
        }
        names.push(subject.names[i].clone());
        match (s, a) {
            (1, 1) => {
                common.push(1);
                subj.push(0);
                arch.push(0);
            }
            (1, 0) => {
                common.push(0);
                subj.push(1);
                arch.push(0);
            }
            (0, 1) => {
                common.push(0);
                subj.push(0);
                arch.push(1);
            }
            _ => {
                // both absent, tallied as agreement
                common.push(1);
                subj.push(0);
                arch.push(0);
            }
        }
    }
    Ok(SetPartition {
        common: BinaryFeatureVector::new(common, names.clone())?,
        subject_only: BinaryFeatureVector::new(subj, names.clone())?,
        archetype_only: BinaryFeatureVector::new(arch, names)?,
    })
}

/// Classical Tversky index `|S∩A| / (|S∩A| + α|S\A| + β|A\S|)`.
pub fn tversky_index(p: &SetPartition, params: &TverskyParams) -> Result<f64> {
    let c = p.common.count() as f64;
    let s = p.subject_only.count() as f64;
    let a = p.archetype_only.count() as f64;
    let denom = c + params.alpha * s + params.beta * a;
    if denom == 0.0 {
        return Err(Error::DegenerateComparison(
            "all three set cardinalities are zero".into(),
        ));
    }
    Ok(c / denom)
}

/// Weighted Similarity Index: the Tversky tally with per-feature weights
/// applied to the binary set vectors.
///
/// 0 means as practically dissimilar as can be, 1 as practically similar as
/// can be. With uniform weights this equals the alpha = beta = 1 Tversky
/// index.
pub fn weighted_similarity_index(p: &SetPartition, weights: &[f64]) -> Result<f64> {
    let m = p.universe_len();
    if weights.len() != m {
        return Err(Error::SpecMismatch(format!(
            "weight vector length {} does not match retained universe {}",
            weights.len(),
            m
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 1.0)) {
        return Err(Error::InvalidWeights(format!(
            "all weights must be >= 1, found {w}"
        )));
    }
    let dot = |bits: &BinaryFeatureVector| -> f64 {
        bits.bits
            .iter()
            .zip(weights)
            .map(|(&b, &w)| b as f64 * w)
            .sum()
    };
    let c = dot(&p.common);
    let s = dot(&p.subject_only);
    let a = dot(&p.archetype_only);
    let denom = c + s + a;
    if denom == 0.0 {
        return Err(Error::DegenerateComparison(
            "weighted denominator is zero: empty retained universe".into(),
        ));
    }
    Ok(c / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    fn bfv(bits: &[u8]) -> BinaryFeatureVector {
        BinaryFeatureVector::new(bits.to_vec(), names(bits.len())).unwrap()
    }

    #[test]
    fn binarize_interior_point() {
        let x = FeatureVector::new(vec![0.5], names(1)).unwrap();
        let spec = ToleranceSpec::with_unit_weights(vec![0.0], vec![1.0], names(1)).unwrap();
        assert_eq!(binarize(&x, &spec).unwrap().bits, vec![1]);
    }

    #[test]
    fn binarize_open_boundary_excluded() {
        let x = FeatureVector::new(vec![1.0], names(1)).unwrap();
        let spec = ToleranceSpec::with_unit_weights(vec![0.0], vec![1.0], names(1)).unwrap();
        assert_eq!(binarize(&x, &spec).unwrap().bits, vec![0]);
    }

    #[test]
    fn binarize_componentwise() {
        let x = FeatureVector::new(vec![0.3, 2.0, -1.0], names(3)).unwrap();
        let spec = ToleranceSpec::with_unit_weights(vec![0.0; 3], vec![1.0; 3], names(3)).unwrap();
        assert_eq!(binarize(&x, &spec).unwrap().bits, vec![1, 0, 0]);
    }

    #[test]
    fn binarize_nan_maps_to_zero() {
        let x = FeatureVector::new(vec![f64::NAN, 0.5], names(2)).unwrap();
        let spec = ToleranceSpec::with_unit_weights(vec![0.0; 2], vec![1.0; 2], names(2)).unwrap();
        assert_eq!(binarize(&x, &spec).unwrap().bits, vec![0, 1]);
    }

    #[test]
    fn binarize_infinite_rejected() {
        let x = FeatureVector::new(vec![f64::INFINITY], names(1)).unwrap();
        let spec = ToleranceSpec::with_unit_weights(vec![0.0], vec![1.0], names(1)).unwrap();
        assert!(matches!(
            binarize(&x, &spec),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn binarize_mismatched_names_rejected() {
        let x = FeatureVector::new(vec![0.5], vec!["a".into()]).unwrap();
        let spec = ToleranceSpec::with_unit_weights(vec![0.0], vec![1.0], vec!["b".into()]).unwrap();
        assert!(matches!(binarize(&x, &spec), Err(Error::SpecMismatch(_))));
    }

    #[test]
    fn binarize_idempotent_on_bits() {
        // Bits re-binarized against (0.5, 1.5) reproduce themselves.
        let bits = bfv(&[1, 0, 1, 0]);
        let as_values: Vec<f64> = bits.bits.iter().map(|&b| b as f64).collect();
        let x = FeatureVector::new(as_values, bits.names.clone()).unwrap();
        let spec =
            ToleranceSpec::with_unit_weights(vec![0.5; 4], vec![1.5; 4], bits.names.clone())
                .unwrap();
        assert_eq!(binarize(&x, &spec).unwrap(), bits);
    }

    #[test]
    fn partition_case_table() {
        let p = partition(&bfv(&[1, 0, 1]), &bfv(&[1, 1, 0]), AbsentPolicy::CountAsCommon)
            .unwrap();
        assert_eq!(p.common.bits, vec![1, 0, 0]);
        assert_eq!(p.subject_only.bits, vec![0, 0, 1]);
        assert_eq!(p.archetype_only.bits, vec![0, 1, 0]);
    }

    #[test]
    fn partition_count_as_common_policy() {
        let p = partition(&bfv(&[0, 0]), &bfv(&[0, 0]), AbsentPolicy::CountAsCommon).unwrap();
        assert_eq!(p.common.bits, vec![1, 1]);
    }

    #[test]
    fn partition_drop_policy_shrinks_universe() {
        let p = partition(&bfv(&[0, 1]), &bfv(&[0, 1]), AbsentPolicy::DropFromUniverse).unwrap();
        assert_eq!(p.universe_len(), 1);
        assert_eq!(p.names(), &["f1".to_string()]);
        assert_eq!(p.common.bits, vec![1]);
    }

    #[test]
    fn partition_sums_to_ones_under_count_as_common() {
        let s = bfv(&[1, 0, 1, 0, 1]);
        let a = bfv(&[0, 0, 1, 1, 1]);
        let p = partition(&s, &a, AbsentPolicy::CountAsCommon).unwrap();
        for i in 0..5 {
            let total = p.common.bits[i] + p.subject_only.bits[i] + p.archetype_only.bits[i];
            assert_eq!(total, 1);
        }
    }

    #[test]
    fn tversky_identical_comparands() {
        let p = partition(&bfv(&[1, 1, 0]), &bfv(&[1, 1, 0]), AbsentPolicy::CountAsCommon)
            .unwrap();
        for (a, b) in [(1.0, 1.0), (0.5, 0.5), (2.0, 0.25)] {
            let t = tversky_index(&p, &TverskyParams::new(a, b).unwrap()).unwrap();
            assert_eq!(t, 1.0);
        }
    }

    #[test]
    fn tversky_direct_arithmetic() {
        // |S∩A|=1, |S\A|=1, |A\S|=0 with alpha=beta=1 gives 1/2.
        let p = partition(&bfv(&[1, 1]), &bfv(&[1, 0]), AbsentPolicy::CountAsCommon).unwrap();
        let t = tversky_index(&p, &TverskyParams::jaccard()).unwrap();
        assert_eq!(t, 0.5);
    }

    #[test]
    fn tversky_degenerate_errors() {
        let p = partition(&bfv(&[0, 0]), &bfv(&[0, 0]), AbsentPolicy::DropFromUniverse).unwrap();
        assert!(matches!(
            tversky_index(&p, &TverskyParams::jaccard()),
            Err(Error::DegenerateComparison(_))
        ));
    }

    #[test]
    fn dice_matches_enumeration_oracle() {
        // Brute force over all bit patterns of length <= 8.
        for m in 1..=8usize {
            for s_pat in 0..(1u32 << m) {
                for a_pat in 0..(1u32 << m) {
                    let s_bits: Vec<u8> = (0..m).map(|i| ((s_pat >> i) & 1) as u8).collect();
                    let a_bits: Vec<u8> = (0..m).map(|i| ((a_pat >> i) & 1) as u8).collect();
                    let s = BinaryFeatureVector::new(s_bits.clone(), names(m)).unwrap();
                    let a = BinaryFeatureVector::new(a_bits.clone(), names(m)).unwrap();
                    let p = partition(&s, &a, AbsentPolicy::CountAsCommon).unwrap();

                    // Set-enumeration oracle, counting both-absent as common.
                    let mut c = 0u32;
                    let mut so = 0u32;
                    let mut ao = 0u32;
                    for i in 0..m {
                        match (s_bits[i], a_bits[i]) {
                            (1, 0) => so += 1,
                            (0, 1) => ao += 1,
                            _ => c += 1,
                        }
                    }
                    let dice = tversky_index(&p, &TverskyParams::dice()).unwrap();
                    let oracle = 2.0 * c as f64 / (2.0 * c as f64 + so as f64 + ao as f64);
                    assert_eq!(dice, oracle, "m={m} s={s_pat:b} a={a_pat:b}");
                }
            }
        }
    }

    #[test]
    fn wsi_table_values() {
        // Three-feature partitions with uniform weights.
        let mk = |c: &[u8], s: &[u8], a: &[u8]| SetPartition {
            common: bfv(c),
            subject_only: bfv(s),
            archetype_only: bfv(a),
        };
        let w = [1.0, 1.0, 1.0];
        let missing_one = mk(&[0, 1, 1], &[1, 0, 0], &[0, 0, 0]);
        assert_eq!(weighted_similarity_index(&missing_one, &w).unwrap(), 2.0 / 3.0);
        let missing_both = mk(&[0, 0, 1], &[1, 1, 0], &[0, 0, 0]);
        assert_eq!(weighted_similarity_index(&missing_both, &w).unwrap(), 1.0 / 3.0);
        let weighted = mk(&[0, 1, 1], &[1, 0, 0], &[0, 0, 0]);
        assert_eq!(
            weighted_similarity_index(&weighted, &[2.0, 1.0, 1.0]).unwrap(),
            0.5
        );
    }

    #[test]
    fn wsi_rejects_small_weights() {
        let p = partition(&bfv(&[1]), &bfv(&[1]), AbsentPolicy::CountAsCommon).unwrap();
        assert!(matches!(
            weighted_similarity_index(&p, &[0.5]),
            Err(Error::InvalidWeights(_))
        ));
    }

    #[test]
    fn tolerance_spec_json_round_trip() {
        let spec = ToleranceSpec::new(
            vec![0.0, -1.0],
            vec![1.0, 1.0],
            vec![2.0, 1.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let json = spec.to_json();
        assert!(json.contains("\"features\""));
        let back = ToleranceSpec::from_json(&json).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn tolerance_spec_rejects_subunit_weights() {
        let err = ToleranceSpec::new(
            vec![0.0],
            vec![1.0],
            vec![0.25],
            vec!["a".into()],
        );
        assert!(matches!(err, Err(Error::InvalidWeights(_))));
    }

    #[test]
    fn tolerance_spec_rejects_inverted_interval() {
        let err = ToleranceSpec::with_unit_weights(vec![1.0], vec![1.0], vec!["a".into()]);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn bits_strategy(m: usize) -> impl Strategy<Value = Vec<u8>> {
            proptest::collection::vec(0u8..=1, m)
        }

        proptest! {
            #[test]
            fn wsi_in_unit_interval(
                s in bits_strategy(6),
                a in bits_strategy(6),
                w in proptest::collection::vec(1.0f64..50.0, 6),
            ) {
                let s = BinaryFeatureVector::new(s, names(6)).unwrap();
                let a = BinaryFeatureVector::new(a, names(6)).unwrap();
                let p = partition(&s, &a, AbsentPolicy::CountAsCommon).unwrap();
                let wsi = weighted_similarity_index(&p, &w).unwrap();
                prop_assert!((0.0..=1.0).contains(&wsi));
            }

            #[test]
            fn uniform_wsi_equals_jaccard_tversky(
                s in bits_strategy(8),
                a in bits_strategy(8),
            ) {
                let s = BinaryFeatureVector::new(s, names(8)).unwrap();
                let a = BinaryFeatureVector::new(a, names(8)).unwrap();
                let p = partition(&s, &a, AbsentPolicy::CountAsCommon).unwrap();
                let wsi = weighted_similarity_index(&p, &[1.0; 8]).unwrap();
                let tv = tversky_index(&p, &TverskyParams::jaccard()).unwrap();
                prop_assert_eq!(wsi, tv);
            }

            #[test]
            fn wsi_scale_invariant(
                s in bits_strategy(5),
                a in bits_strategy(5),
                w in proptest::collection::vec(1.0f64..10.0, 5),
                k in 1.0f64..100.0,
            ) {
                let s = BinaryFeatureVector::new(s, names(5)).unwrap();
                let a = BinaryFeatureVector::new(a, names(5)).unwrap();
                let p = partition(&s, &a, AbsentPolicy::CountAsCommon).unwrap();
                let base = weighted_similarity_index(&p, &w).unwrap();
                let scaled: Vec<f64> = w.iter().map(|x| x * k).collect();
                let scaled_wsi = weighted_similarity_index(&p, &scaled).unwrap();
                prop_assert!((base - scaled_wsi).abs() < 1e-12);
            }

            #[test]
            fn swap_symmetry(
                s in bits_strategy(7),
                a in bits_strategy(7),
                alpha in 0.0f64..4.0,
            ) {
                let s = BinaryFeatureVector::new(s, names(7)).unwrap();
                let a = BinaryFeatureVector::new(a, names(7)).unwrap();
                let p = partition(&s, &a, AbsentPolicy::CountAsCommon).unwrap();
                let q = partition(&a, &s, AbsentPolicy::CountAsCommon).unwrap();
                prop_assert_eq!(&p.subject_only, &q.archetype_only);
                prop_assert_eq!(&p.archetype_only, &q.subject_only);
                let params = TverskyParams::new(alpha, alpha).unwrap();
                let t1 = tversky_index(&p, &params).unwrap();
                let t2 = tversky_index(&q, &params).unwrap();
                prop_assert!((t1 - t2).abs() < 1e-15);
            }

            #[test]
            fn partition_disjoint_and_complete(
                s in bits_strategy(9),
                a in bits_strategy(9),
            ) {
                let s = BinaryFeatureVector::new(s, names(9)).unwrap();
                let a = BinaryFeatureVector::new(a, names(9)).unwrap();
                let p = partition(&s, &a, AbsentPolicy::CountAsCommon).unwrap();
                for i in 0..9 {
                    let sum = p.common.bits[i] + p.subject_only.bits[i] + p.archetype_only.bits[i];
                    prop_assert_eq!(sum, 1);
                }
            }
        }
    }
}
