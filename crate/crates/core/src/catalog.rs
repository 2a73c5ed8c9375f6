//! Source/sink catalog keyed by API signature.
//!
//! The category taxonomy reproduces the SuSI table as printed, including its
//! misspelled `LOCATTON_INFORMATION` sink and the duplicated
//! `PHONE_CONNECTION` and `SYNCHRONIZATION_DATA` sink rows. Validation is keyed
//! on those raw names; [`SinkCategory::normalized_name`] gives the corrected
//! spelling for display.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Source categories, in table order.
pub const SOURCE_CATEGORIES: [&str; 17] = [
    "LOCATION_INFORMATION",
    "NETWORK_INFORMATION",
    "FILE_INFORMATION",
    "BLUETOOTH_INFORMATION",
    "EMAIL",
    "UNIQUE_IDENTIFIER",
    "ACCOUNT_INFORMATION",
    "SYNCHRONIZATION_DATA",
    "SMS_MMS",
    "SYSTEM_SETTING",
    "CONTACT_INFORMATION",
    "CALENDAR_INFORMATION",
    "IMAGE",
    "BROWSER_INFORMATION",
    "NFC",
    "DATABASE_INFORMATION",
    "NO_CATEGORY",
];

/// Sink categories, in table order. Rows 1/2 and 8/16 repeat a name.
pub const SINK_CATEGORIES: [&str; 19] = [
    "PHONE_CONNECTION",
    "PHONE_CONNECTION",
    "EMAIL",
    "BLUETOOTH",
    "AUDIO",
    "LOCATTON_INFORMATION",
    "PHONE_STATE",
    "SYNCHRONIZATION_DATA",
    "NETWORK",
    "SMS_MMS",
    "FILE",
    "LOG",
    "CONTACT_INFORMATION",
    "CALENDAR_INFORMATION",
    "SYSTEM_SETTING",
    "SYNCHRONIZATION_DATA",
    "NFC",
    "BROWSER_INFORMATION",
    "NO_CATEGORY",
];

/// A source category, stored as its row in [`SOURCE_CATEGORIES`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceCategory(u8);

/// A sink category, stored as its row in [`SINK_CATEGORIES`].
///
/// Duplicated names resolve to their first row, so rows 2 and 16 are never
/// produced by [`SinkCategory::from_raw`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SinkCategory(u8);

impl SourceCategory {
    pub fn from_raw(name: &str) -> Option<Self> {
        SOURCE_CATEGORIES
            .iter()
            .position(|c| *c == name)
            .map(|i| Self(i as u8))
    }

    pub fn from_index(index: usize) -> Option<Self> {
        (index < SOURCE_CATEGORIES.len()).then_some(Self(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        SOURCE_CATEGORIES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..SOURCE_CATEGORIES.len()).map(|i| Self(i as u8))
    }
}

impl SinkCategory {
    pub fn from_raw(name: &str) -> Option<Self> {
        SINK_CATEGORIES
            .iter()
            .position(|c| *c == name)
            .map(|i| Self(i as u8))
    }

    pub fn from_index(index: usize) -> Option<Self> {
        (index < SINK_CATEGORIES.len()).then_some(Self(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The name exactly as it appears in the taxonomy table.
    pub fn name(self) -> &'static str {
        SINK_CATEGORIES[self.index()]
    }

    /// The table name with its known misspelling corrected.
    pub fn normalized_name(self) -> &'static str {
        match self.name() {
            "LOCATTON_INFORMATION" => "LOCATION_INFORMATION",
            other => other,
        }
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..SINK_CATEGORIES.len()).map(|i| Self(i as u8))
    }
}

impl fmt::Display for SourceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for SinkCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

macro_rules! category_serde {
    ($ty:ident, $what:literal) => {
        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.name())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let name = String::deserialize(d)?;
                $ty::from_raw(&name).ok_or_else(|| {
                    serde::de::Error::custom(format!("unknown {} category `{}`", $what, name))
                })
            }
        }
    };
}

category_serde!(SourceCategory, "source");
category_serde!(SinkCategory, "sink");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Source,
    Sink,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Source => "SOURCE",
            Role::Sink => "SINK",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatalogEntry {
    Source {
        api_signature: String,
        category: SourceCategory,
    },
    Sink {
        api_signature: String,
        category: SinkCategory,
    },
}

impl CatalogEntry {
    pub fn api_signature(&self) -> &str {
        match self {
            CatalogEntry::Source { api_signature, .. } | CatalogEntry::Sink { api_signature, .. } => {
                api_signature
            }
        }
    }

    pub fn role(&self) -> Role {
        match self {
            CatalogEntry::Source { .. } => Role::Source,
            CatalogEntry::Sink { .. } => Role::Sink,
        }
    }

    pub fn category_name(&self) -> &'static str {
        match self {
            CatalogEntry::Source { category, .. } => category.name(),
            CatalogEntry::Sink { category, .. } => category.name(),
        }
    }
}

/// Result of looking a signature up in the catalog.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Classification {
    pub source: Option<SourceCategory>,
    pub sink: Option<SinkCategory>,
}

impl Classification {
    pub fn is_source(&self) -> bool {
        self.source.is_some()
    }

    pub fn is_sink(&self) -> bool {
        self.sink.is_some()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("line {line}: unknown {role} category `{name}`")]
    UnknownCategory { line: usize, role: Role, name: String },
    #[error("line {line}: duplicate {role} entry for `{signature}`")]
    DuplicateEntry {
        line: usize,
        signature: String,
        role: Role,
    },
    #[error("line {0}: expected `signature<TAB>SOURCE|SINK<TAB>CATEGORY`")]
    MalformedLine(usize),
    #[error("reading catalog: {0}")]
    Io(String),
}

/// Mapping from API signature to its source and/or sink category.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceSinkCatalog {
    sources: BTreeMap<String, SourceCategory>,
    sinks: BTreeMap<String, SinkCategory>,
}

const DEFAULT_CATALOG: &str = include_str!("../data/default_catalog.tsv");

impl SourceSinkCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// The bundled catalog, covering every taxonomy category at least once.
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| CatalogError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    /// Parses the TSV catalog format. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut catalog = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            let [signature, role, category] = fields[..] else {
                return Err(CatalogError::MalformedLine(line_no));
            };
            if signature.is_empty() {
                return Err(CatalogError::MalformedLine(line_no));
            }
            let role = match role {
                "SOURCE" => Role::Source,
                "SINK" => Role::Sink,
                _ => return Err(CatalogError::MalformedLine(line_no)),
            };
            let entry = match role {
                Role::Source => CatalogEntry::Source {
                    api_signature: signature.to_owned(),
                    category: SourceCategory::from_raw(category).ok_or_else(|| {
                        CatalogError::UnknownCategory {
                            line: line_no,
                            role,
                            name: category.to_owned(),
                        }
                    })?,
                },
                Role::Sink => CatalogEntry::Sink {
                    api_signature: signature.to_owned(),
                    category: SinkCategory::from_raw(category).ok_or_else(|| {
                        CatalogError::UnknownCategory {
                            line: line_no,
                            role,
                            name: category.to_owned(),
                        }
                    })?,
                },
            };
            if !catalog.insert(entry) {
                return Err(CatalogError::DuplicateEntry {
                    line: line_no,
                    signature: signature.to_owned(),
                    role,
                });
            }
        }
        Ok(catalog)
    }

    /// Adds an entry; returns `false` if the signature already has that role.
    pub fn insert(&mut self, entry: CatalogEntry) -> bool {
        match entry {
            CatalogEntry::Source {
                api_signature,
                category,
            } => {
                if self.sources.contains_key(&api_signature) {
                    return false;
                }
                self.sources.insert(api_signature, category);
            }
            CatalogEntry::Sink {
                api_signature,
                category,
            } => {
                if self.sinks.contains_key(&api_signature) {
                    return false;
                }
                self.sinks.insert(api_signature, category);
            }
        }
        true
    }

    pub fn classify(&self, api_signature: &str) -> Classification {
        Classification {
            source: self.sources.get(api_signature).copied(),
            sink: self.sinks.get(api_signature).copied(),
        }
    }

    pub fn len(&self) -> usize {
        self.sources.len() + self.sinks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries ordered by signature, sources before sinks for the same signature.
    pub fn entries(&self) -> Vec<CatalogEntry> {
        let mut out: Vec<CatalogEntry> = self
            .sources
            .iter()
            .map(|(s, c)| CatalogEntry::Source {
                api_signature: s.clone(),
                category: *c,
            })
            .chain(self.sinks.iter().map(|(s, c)| CatalogEntry::Sink {
                api_signature: s.clone(),
                category: *c,
            }))
            .collect();
        out.sort_by(|a, b| {
            a.api_signature()
                .cmp(b.api_signature())
                .then(a.role().cmp(&b.role()))
        });
        out
    }

    /// Writes the catalog back out in the TSV format [`parse`](Self::parse) reads.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for e in self.entries() {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                e.api_signature(),
                e.role(),
                e.category_name()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn taxonomy_sizes() {
        assert_eq!(SOURCE_CATEGORIES.len(), 17);
        assert_eq!(SINK_CATEGORIES.len(), 19);
        // Two names are printed twice in the sink column.
        let distinct: BTreeSet<_> = SINK_CATEGORIES.iter().collect();
        assert_eq!(distinct.len(), 17);
        assert_eq!(SourceCategory::from_raw("UNIQUE_IDENTIFIER").unwrap().index(), 5);
        assert_eq!(SinkCategory::from_raw("SMS_MMS").unwrap().index(), 9);
    }

    #[test]
    fn raw_names_are_authoritative() {
        assert!(SinkCategory::from_raw("LOCATTON_INFORMATION").is_some());
        assert!(SinkCategory::from_raw("LOCATION_INFORMATION").is_none());
        let c = SinkCategory::from_raw("LOCATTON_INFORMATION").unwrap();
        assert_eq!(c.normalized_name(), "LOCATION_INFORMATION");
        assert_eq!(SinkCategory::from_raw("PHONE_CONNECTION").unwrap().index(), 0);
        assert_eq!(SinkCategory::from_raw("SYNCHRONIZATION_DATA").unwrap().index(), 7);
    }

    #[test]
    fn empty_file_is_empty_catalog() {
        assert!(SourceSinkCatalog::parse("").unwrap().is_empty());
        assert!(SourceSinkCatalog::parse("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn single_source_line() {
        let cat = SourceSinkCatalog::parse(
            "android.telephony.TelephonyManager.getDeviceId\tSOURCE\tUNIQUE_IDENTIFIER\n",
        )
        .unwrap();
        assert_eq!(cat.len(), 1);
        let c = cat.classify("android.telephony.TelephonyManager.getDeviceId");
        assert_eq!(c.source.unwrap().name(), "UNIQUE_IDENTIFIER");
        assert!(c.sink.is_none());
    }

    #[test]
    fn unknown_category() {
        let err = SourceSinkCatalog::parse("a.b.c\tSOURCE\tPHONE_BOOK\n").unwrap_err();
        assert!(matches!(err, CatalogError::UnknownCategory { ref name, .. } if name == "PHONE_BOOK"));
    }

    #[test]
    fn duplicate_and_malformed() {
        let err = SourceSinkCatalog::parse("a.b\tSINK\tLOG\na.b\tSINK\tFILE\n").unwrap_err();
        assert_eq!(
            err,
            CatalogError::DuplicateEntry {
                line: 2,
                signature: "a.b".into(),
                role: Role::Sink
            }
        );
        assert_eq!(
            SourceSinkCatalog::parse("# hdr\na.b SINK LOG\n").unwrap_err(),
            CatalogError::MalformedLine(2)
        );
        assert_eq!(
            SourceSinkCatalog::parse("a.b\tBOTH\tLOG\n").unwrap_err(),
            CatalogError::MalformedLine(1)
        );
    }

    #[test]
    fn unlisted_signature_has_no_role() {
        let cat = SourceSinkCatalog::bundled();
        assert_eq!(cat.classify("java.lang.Math.abs"), Classification::default());
    }

    #[test]
    fn bundled_catalog_covers_taxonomy() {
        let cat = SourceSinkCatalog::bundled();
        let sms = cat.classify("android.telephony.SmsManager.sendTextMessage");
        assert_eq!(sms.sink.unwrap().name(), "SMS_MMS");

        let entries = cat.entries();
        let sources: BTreeSet<&str> = entries
            .iter()
            .filter(|e| e.role() == Role::Source)
            .map(|e| e.category_name())
            .collect();
        let sinks: BTreeSet<&str> = entries
            .iter()
            .filter(|e| e.role() == Role::Sink)
            .map(|e| e.category_name())
            .collect();
        assert_eq!(sources.len(), 17);
        assert_eq!(sinks.len(), 17);
    }

    #[test]
    fn dual_role_signature() {
        let cat = SourceSinkCatalog::parse(
            "x.Store.swap\tSOURCE\tDATABASE_INFORMATION\nx.Store.swap\tSINK\tFILE\n",
        )
        .unwrap();
        let c = cat.classify("x.Store.swap");
        assert!(c.is_source() && c.is_sink());
        assert_eq!(c.source.unwrap().name(), "DATABASE_INFORMATION");
        assert_eq!(c.sink.unwrap().name(), "FILE");
    }

    #[test]
    fn emit_then_load_is_identity() {
        let cat = SourceSinkCatalog::bundled();
        assert_eq!(SourceSinkCatalog::parse(&cat.emit()).unwrap(), cat);
    }
}
