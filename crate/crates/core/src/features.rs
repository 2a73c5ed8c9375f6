//! Flow features and the suspect process list.
//!
//! A flow vector has one bit per (source category, sink category) pair of
//! the taxonomy table, 17 x 19 = 323 bits. Grouping by category instead of
//! by concrete method pair keeps the vector dense enough to learn from.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arff::{Attribute, Dataset, Value};
use crate::catalog::{SinkCategory, SourceCategory, SourceSinkCatalog, SINK_CATEGORIES, SOURCE_CATEGORIES};
use crate::ir::declaring_class;
use crate::taint::TaintFlow;

const ROWS: usize = SOURCE_CATEGORIES.len();
const COLS: usize = SINK_CATEGORIES.len();

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("flow endpoint `{0}` is not classified by the catalog")]
    UnclassifiedEndpoint(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FlowFeatureVector {
    pub app_name: String,
    bits: [[bool; COLS]; ROWS],
}

impl FlowFeatureVector {
    pub fn empty(app_name: impl Into<String>) -> Self {
        Self {
            app_name: app_name.into(),
            bits: [[false; COLS]; ROWS],
        }
    }

    pub fn get(&self, source: SourceCategory, sink: SinkCategory) -> bool {
        self.bits[source.index()][sink.index()]
    }

    pub fn set(&mut self, source: SourceCategory, sink: SinkCategory) {
        self.bits[source.index()][sink.index()] = true;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().flatten().filter(|b| **b).count()
    }

    /// Set pairs in row-major order.
    pub fn pairs(&self) -> Vec<(SourceCategory, SinkCategory)> {
        SourceCategory::all()
            .flat_map(|s| SinkCategory::all().map(move |k| (s, k)))
            .filter(|(s, k)| self.get(*s, *k))
            .collect()
    }

    /// All 323 bits, row-major, as 0/1.
    pub fn to_bits(&self) -> Vec<u8> {
        self.bits.iter().flatten().map(|b| u8::from(*b)).collect()
    }
}

/// Serialized as the app name plus the list of set category pairs.
#[derive(Serialize, Deserialize)]
struct FeatureJson {
    app: String,
    pairs: Vec<(SourceCategory, SinkCategory)>,
}

impl Serialize for FlowFeatureVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FeatureJson {
            app: self.app_name.clone(),
            pairs: self.pairs(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FlowFeatureVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = FeatureJson::deserialize(d)?;
        let mut v = FlowFeatureVector::empty(j.app);
        for (s, k) in j.pairs {
            v.set(s, k);
        }
        Ok(v)
    }
}

pub fn build_flow_features(
    app_name: &str,
    flows: &[TaintFlow],
    catalog: &SourceSinkCatalog,
) -> Result<FlowFeatureVector, FeatureError> {
    let mut v = FlowFeatureVector::empty(app_name);
    for f in flows {
        let source = catalog
            .classify(&f.source_method)
            .source
            .ok_or_else(|| FeatureError::UnclassifiedEndpoint(f.source_method.clone()))?;
        let sink = catalog
            .classify(&f.sink_method)
            .sink
            .ok_or_else(|| FeatureError::UnclassifiedEndpoint(f.sink_method.clone()))?;
        v.set(source, sink);
    }
    Ok(v)
}

/// Attribute name for one bit, e.g. `UNIQUE_IDENTIFIER->SMS_MMS#10`. The sink
/// row number disambiguates the duplicated sink names.
pub fn bit_attribute_name(source: SourceCategory, sink: SinkCategory) -> String {
    format!("{}->{}#{}", source.name(), sink.name(), sink.index() + 1)
}

/// One ARFF row per app: the app name followed by the 323 bits.
pub fn features_dataset(vectors: &[FlowFeatureVector]) -> Dataset {
    let apps: Vec<String> = vectors
        .iter()
        .map(|v| v.app_name.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut attributes = vec![Attribute::new("App", apps.clone())];
    for s in SourceCategory::all() {
        for k in SinkCategory::all() {
            attributes.push(Attribute::new(bit_attribute_name(s, k), ["0", "1"]));
        }
    }
    let rows = vectors
        .iter()
        .map(|v| {
            let app = apps.iter().position(|a| *a == v.app_name).unwrap();
            std::iter::once(Value::Nominal(app))
                .chain(v.to_bits().into_iter().map(|b| Value::Nominal(b as usize)))
                .collect()
        })
        .collect();
    Dataset {
        relation: "FlowFeatures".into(),
        attributes,
        rows,
    }
}

/// Classes implicated in flows, plus processes that are always monitored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SuspectList(pub Vec<String>);

impl SuspectList {
    pub fn contains(&self, process: &str) -> bool {
        self.0.iter().any(|p| p == process)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// Sorted, deduplicated declaring classes of every method on every flow path,
/// together with `system_processes`.
pub fn extract_suspects<S: AsRef<str>>(flows: &[TaintFlow], system_processes: &[S]) -> SuspectList {
    let set: BTreeSet<String> = flows
        .iter()
        .flat_map(|f| f.path.iter().map(|m| declaring_class(m).to_string()))
        .chain(system_processes.iter().map(|p| p.as_ref().to_string()))
        .collect();
    SuspectList(set.into_iter().collect())
}
