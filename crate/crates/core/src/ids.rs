//! Newtype identifiers shared across the crate.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_type!(
    /// Identifier of a tree node (composites and leaves). For leaves it
    /// equals the leaf id.
    NodeId
);
id_type!(
    /// Identifier of a leaf within one workflow.
    LeafId
);
id_type!(
    /// Identifier of a function definition referenced by leaves.
    FunctionId
);
id_type!(
    /// Addressable identifier returned by the data store.
    DataId
);

impl From<&LeafId> for NodeId {
    fn from(l: &LeafId) -> Self {
        NodeId(l.0.clone())
    }
}

impl From<&NodeId> for LeafId {
    fn from(n: &NodeId) -> Self {
        LeafId(n.0.clone())
    }
}
