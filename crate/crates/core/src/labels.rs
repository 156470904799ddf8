//! Meta information per tile: OSM tag counting into 14 classes, the 18-bit
//! meta label, and amenity (POI) count vectors.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const NUM_META_CLASSES: usize = 14;
pub const NUM_LABELS: usize = 18;

/// The 14 counted classes, in their fixed order.
pub const META_CLASS_NAMES: [&str; NUM_META_CLASSES] = [
    "buildings",
    "highway",
    "peak",
    "water",
    "river",
    "railway",
    "rail_station",
    "park",
    "playground",
    "road",
    "airport",
    "trail",
    "farmland",
    "grassland",
];

pub const BUILDINGS: usize = 0;
pub const ROAD: usize = 9;

/// The 18 label bits, in their fixed order.
pub const LABEL_NAMES: [&str; NUM_LABELS] = [
    "building_less",
    "building_some",
    "building_more",
    "highway",
    "peak",
    "water",
    "river",
    "railway",
    "rail_station",
    "park",
    "playground",
    "road_less",
    "road_some",
    "road_more",
    "airport",
    "trail",
    "farmland",
    "grassland",
];

pub const BUILDING_LESS: usize = 0;
pub const ROAD_LESS: usize = 11;

/// Label bit of each two-state class, indexed by meta class.
const PRESENCE_BIT: [Option<usize>; NUM_META_CLASSES] = [
    None,
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(10),
    None,
    Some(14),
    Some(15),
    Some(16),
    Some(17),
];

/// Meta classes whose label is a single presence bit.
pub fn presence_classes() -> impl Iterator<Item = (usize, usize)> {
    PRESENCE_BIT
        .iter()
        .enumerate()
        .filter_map(|(c, b)| b.map(|b| (c, b)))
}

pub fn presence_bit(meta_class: usize) -> Option<usize> {
    PRESENCE_BIT.get(meta_class).copied().flatten()
}

/// Per-tile counts of the 14 meta classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetaCounts(pub [u32; NUM_META_CLASSES]);

impl MetaCounts {
    pub fn get(&self, class: usize) -> u32 {
        self.0[class]
    }

    pub fn as_features(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }
}

/// 18 binary labels packed into the low bits of a `u32`; bit `i` is
/// `LABEL_NAMES[i]`.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct MetaLabel(pub u32);

impl MetaLabel {
    pub const MASK: u32 = (1 << NUM_LABELS) - 1;

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.len() != NUM_LABELS || bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput(format!(
                "meta label needs {NUM_LABELS} bits in {{0,1}}"
            )));
        }
        Ok(Self(
            bits.iter()
                .enumerate()
                .fold(0, |acc, (i, &b)| acc | (b as u32) << i),
        ))
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn bits(&self) -> [u8; NUM_LABELS] {
        core::array::from_fn(|i| self.bit(i) as u8)
    }

    pub fn as_features(&self) -> Vec<f64> {
        self.bits().iter().map(|&b| b as f64).collect()
    }

    /// Exactly one building and one road bucket set.
    pub fn is_well_formed(&self) -> bool {
        let b = (self.0 & 0b111).count_ones();
        let r = (self.0 >> ROAD_LESS & 0b111).count_ones();
        self.0 & !Self::MASK == 0 && b == 1 && r == 1
    }
}

/// Three-way bucket: `[0, low)`, `[low, high]`, `(high, inf)`.
fn bucket(count: u32, low: u32, high: u32) -> usize {
    if count < low {
        0
    } else if count <= high {
        1
    } else {
        2
    }
}

pub fn binarize_meta(counts: &MetaCounts) -> MetaLabel {
    let mut bits = 0u32;
    bits |= 1 << (BUILDING_LESS + bucket(counts.0[BUILDINGS], 3, 60));
    bits |= 1 << (ROAD_LESS + bucket(counts.0[ROAD], 15, 30));
    for (class, bit) in presence_classes() {
        if counts.0[class] > 0 {
            bits |= 1 << bit;
        }
    }
    MetaLabel(bits)
}

/// Tags of one OSM element.
pub type Tags = BTreeMap<String, String>;

/// One `key=value`, `key=*` or `key!=value` test against an element's tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TagPredicate {
    Equals { key: String, value: String },
    HasKey { key: String },
    NotEquals { key: String, value: String },
}

impl TagPredicate {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("tag predicate {text:?}"));
        if let Some((k, v)) = text.split_once("!=") {
            if k.is_empty() || v.is_empty() {
                return Err(bad());
            }
            return Ok(Self::NotEquals {
                key: k.to_string(),
                value: v.to_string(),
            });
        }
        let (k, v) = text.split_once('=').ok_or_else(bad)?;
        match (k.is_empty(), v) {
            (true, _) | (_, "") => Err(bad()),
            (false, "*") => Ok(Self::HasKey { key: k.to_string() }),
            (false, v) => Ok(Self::Equals {
                key: k.to_string(),
                value: v.to_string(),
            }),
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            Self::Equals { key, value } => format!("{key}={value}"),
            Self::HasKey { key } => format!("{key}=*"),
            Self::NotEquals { key, value } => format!("{key}!={value}"),
        }
    }

    fn holds(&self, tags: &Tags) -> bool {
        match self {
            Self::Equals { key, value } => tags.get(key) == Some(value),
            Self::HasKey { key } => tags.contains_key(key),
            Self::NotEquals { key, value } => tags.get(key) != Some(value),
        }
    }
}

/// Per-class tag predicates. An element belongs to a class when at least one
/// positive predicate (`=`) holds and every exclusion (`!=`) holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTable {
    rules: Vec<Vec<TagPredicate>>,
}

impl RuleTable {
    pub fn new(rules: Vec<Vec<TagPredicate>>) -> Result<Self> {
        if rules.len() != NUM_META_CLASSES {
            return Err(Error::Shape(format!(
                "rule table has {} classes, expected {NUM_META_CLASSES}",
                rules.len()
            )));
        }
        Ok(Self { rules })
    }

    /// Builds a table from `class name -> predicate strings`.
    pub fn from_named<'a, I, P>(named: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, P)>,
        P: IntoIterator<Item = &'a str>,
    {
        let mut rules: Vec<Option<Vec<TagPredicate>>> = alloc::vec![None; NUM_META_CLASSES];
        for (name, preds) in named {
            let idx = META_CLASS_NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown meta class {name:?}")))?;
            rules[idx] = Some(
                preds
                    .into_iter()
                    .map(TagPredicate::parse)
                    .collect::<Result<_>>()?,
            );
        }
        let rules = rules
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.ok_or_else(|| {
                    Error::InvalidInput(format!("no rule for class {}", META_CLASS_NAMES[i]))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rules })
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &[TagPredicate])> {
        META_CLASS_NAMES
            .iter()
            .copied()
            .zip(self.rules.iter().map(Vec::as_slice))
    }

    pub fn matches(&self, class: usize, tags: &Tags) -> bool {
        let preds = &self.rules[class];
        let mut positive = false;
        for p in preds {
            match p {
                TagPredicate::NotEquals { .. } => {
                    if !p.holds(tags) {
                        return false;
                    }
                }
                _ => positive |= p.holds(tags),
            }
        }
        positive
    }
}

impl Default for RuleTable {
    fn default() -> Self {
        const MAJOR: [&str; 4] = ["motorway", "trunk", "motorway_link", "trunk_link"];
        const PATHS: [&str; 3] = ["path", "track", "footway"];
        let mut road = alloc::vec!["highway=*".to_string()];
        road.extend(MAJOR.iter().chain(&PATHS).map(|v| format!("highway!={v}")));
        let major: Vec<String> = MAJOR.iter().map(|v| format!("highway={v}")).collect();
        let paths: Vec<String> = PATHS.iter().map(|v| format!("highway={v}")).collect();
        let table: [(&str, Vec<String>); NUM_META_CLASSES] = [
            ("buildings", alloc::vec!["building=*".into()]),
            ("highway", major),
            ("peak", alloc::vec!["natural=peak".into()]),
            ("water", alloc::vec!["natural=water".into()]),
            (
                "river",
                alloc::vec![
                    "waterway=river".into(),
                    "waterway=stream".into(),
                    "waterway=canal".into()
                ],
            ),
            ("railway", alloc::vec!["railway=rail".into()]),
            ("rail_station", alloc::vec!["railway=station".into()]),
            ("park", alloc::vec!["leisure=park".into()]),
            ("playground", alloc::vec!["leisure=playground".into()]),
            ("road", road),
            ("airport", alloc::vec!["aeroway=aerodrome".into()]),
            ("trail", paths),
            ("farmland", alloc::vec!["landuse=farmland".into()]),
            (
                "grassland",
                alloc::vec![
                    "landuse=grass".into(),
                    "landuse=grassland".into(),
                    "landuse=meadow".into()
                ],
            ),
        ];
        Self::from_named(
            table
                .iter()
                .map(|(n, p)| (*n, p.iter().map(String::as_str))),
        )
        .expect("default rules parse")
    }
}

/// Counts elements per class; one element may count toward several classes.
pub fn count_meta<'a, I>(elements: I, rules: &RuleTable) -> MetaCounts
where
    I: IntoIterator<Item = &'a Tags>,
{
    let mut counts = MetaCounts::default();
    for tags in elements {
        for (c, slot) in counts.0.iter_mut().enumerate() {
            if rules.matches(c, tags) {
                *slot += 1;
            }
        }
    }
    counts
}

pub const AMENITY_KEY: &str = "amenity";

/// Sorted, de-duplicated amenity names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoiVocabulary {
    names: Vec<String>,
}

impl PoiVocabulary {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        Self {
            names: set.into_iter().collect(),
        }
    }

    /// Union of every amenity value in the given documents.
    pub fn build<'a, D, I>(docs: D) -> Self
    where
        D: IntoIterator<Item = I>,
        I: IntoIterator<Item = &'a Tags>,
    {
        Self::from_names(
            docs.into_iter()
                .flat_map(|els| els.into_iter().filter_map(|t| t.get(AMENITY_KEY).cloned())),
        )
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoiVector(pub Vec<u32>);

impl PoiVector {
    pub fn as_features(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }
}

/// Amenity counts aligned to `vocab`; names outside it are ignored.
pub fn poi_vector<'a, I>(elements: I, vocab: &PoiVocabulary) -> PoiVector
where
    I: IntoIterator<Item = &'a Tags>,
{
    let mut counts = alloc::vec![0u32; vocab.len()];
    for tags in elements {
        if let Some(i) = tags.get(AMENITY_KEY).and_then(|a| vocab.index_of(a)) {
            counts[i] += 1;
        }
    }
    PoiVector(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tags(pairs: &[(&str, &str)]) -> Tags {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn counts_with(pairs: &[(usize, u32)]) -> MetaCounts {
        let mut c = MetaCounts::default();
        for &(i, v) in pairs {
            c.0[i] = v;
        }
        c
    }

    fn label_of(names: &[&str]) -> MetaLabel {
        MetaLabel(
            names
                .iter()
                .map(|n| 1 << LABEL_NAMES.iter().position(|l| l == n).unwrap())
                .sum(),
        )
    }

    #[test]
    fn binarize_all_zero() {
        assert_eq!(
            binarize_meta(&MetaCounts::default()),
            label_of(&["building_less", "road_less"])
        );
    }

    #[test]
    fn binarize_middle_bounds_are_closed() {
        let c = counts_with(&[(BUILDINGS, 3), (ROAD, 15)]);
        assert_eq!(binarize_meta(&c), label_of(&["building_some", "road_some"]));
        let c = counts_with(&[(BUILDINGS, 60), (ROAD, 30)]);
        assert_eq!(binarize_meta(&c), label_of(&["building_some", "road_some"]));
        let c = counts_with(&[(BUILDINGS, 2), (ROAD, 14)]);
        assert_eq!(binarize_meta(&c), label_of(&["building_less", "road_less"]));
    }

    #[test]
    fn binarize_upper_buckets() {
        let c = counts_with(&[(BUILDINGS, 61), (ROAD, 31), (7, 5)]);
        assert_eq!(
            binarize_meta(&c),
            label_of(&["building_more", "road_more", "park"])
        );
    }

    #[test]
    fn default_rules_examples() {
        let rules = RuleTable::default();
        assert_eq!(
            count_meta(core::iter::empty(), &rules),
            MetaCounts::default()
        );
        let park = [tags(&[("leisure", "park")])];
        assert_eq!(count_meta(&park, &rules), counts_with(&[(7, 1)]));
        let houses: Vec<_> = (0..3).map(|_| tags(&[("building", "yes")])).collect();
        assert_eq!(count_meta(&houses, &rules), counts_with(&[(BUILDINGS, 3)]));
    }

    #[test]
    fn default_rules_split_highway_values() {
        let rules = RuleTable::default();
        let els = [
            tags(&[("highway", "motorway")]),
            tags(&[("highway", "residential")]),
            tags(&[("highway", "footway")]),
            tags(&[("highway", "trunk_link")]),
            tags(&[("highway", "primary"), ("building", "yes")]),
        ];
        let c = count_meta(&els, &rules);
        assert_eq!((c.0[1], c.0[ROAD], c.0[11], c.0[BUILDINGS]), (2, 2, 1, 1));
    }

    #[test]
    fn predicates_parse_and_print() {
        for text in ["a=b", "a=*", "a!=b"] {
            assert_eq!(TagPredicate::parse(text).unwrap().to_text(), text);
        }
        for bad in ["", "a", "=b", "a=", "!=b"] {
            assert!(TagPredicate::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn rule_table_requires_every_class() {
        assert!(RuleTable::from_named([("park", ["leisure=park"])]).is_err());
        assert!(RuleTable::from_named([("castle", ["historic=castle"])]).is_err());
    }

    #[test]
    fn vocabulary_is_sorted_union() {
        assert!(PoiVocabulary::build(Vec::<Vec<&Tags>>::new()).is_empty());
        let d1 = [
            tags(&[("amenity", "restaurant")]),
            tags(&[("amenity", "cafe")]),
        ];
        let d2 = [tags(&[("amenity", "cafe")]), tags(&[("shop", "bakery")])];
        let v = PoiVocabulary::build([&d1[..], &d2[..]]);
        assert_eq!(v.names(), ["cafe", "restaurant"]);
    }

    #[test]
    fn poi_vector_examples() {
        let vocab = PoiVocabulary::from_names(["restaurant"]);
        assert_eq!(
            poi_vector(core::iter::empty(), &vocab),
            PoiVector(alloc::vec![0])
        );
        let two = [
            tags(&[("amenity", "restaurant")]),
            tags(&[("amenity", "restaurant")]),
        ];
        assert_eq!(poi_vector(&two, &vocab), PoiVector(alloc::vec![2]));
        let other = [tags(&[("amenity", "bank")])];
        assert_eq!(poi_vector(&other, &vocab), PoiVector(alloc::vec![0]));
    }

    proptest! {
        #[test]
        fn binarize_is_well_formed(counts in proptest::array::uniform14(0u32..200)) {
            let label = binarize_meta(&MetaCounts(counts));
            prop_assert!(label.is_well_formed());
            for (class, bit) in presence_classes() {
                prop_assert_eq!(label.bit(bit), counts[class] > 0);
            }
        }

        #[test]
        fn building_bucket_is_monotone(a in 0u32..200, b in 0u32..200) {
            let (lo, hi) = (a.min(b), a.max(b));
            let bucket_of = |n| {
                let l = binarize_meta(&counts_with(&[(BUILDINGS, n)]));
                (0..3).find(|&i| l.bit(BUILDING_LESS + i)).unwrap()
            };
            prop_assert!(bucket_of(lo) <= bucket_of(hi));
        }

        #[test]
        fn label_bits_round_trip(raw in 0u32..(1 << NUM_LABELS)) {
            let l = MetaLabel(raw);
            prop_assert_eq!(MetaLabel::from_bits(&l.bits()).unwrap(), l);
        }
    }
}
