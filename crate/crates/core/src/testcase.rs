use serde::{Deserialize, Serialize};

use crate::values::{encode_params, ParamTuple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Recorded,
    Mutated,
}

/// How pass/fail is decided for an input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    /// Passes iff the buggy function raises no uncaught exception.
    Exception,
    /// Only the surrounding unit test's assertions can tell.
    Assertion,
}

/// One concrete input to the buggy function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCase {
    pub id: String,
    pub params: ParamTuple,
    pub provenance: Provenance,
    pub oracle: OracleKind,
    /// Enclosing unit test for recorded cases.
    pub test_id: Option<String>,
}

impl TestCase {
    pub fn recorded(
        id: impl Into<String>,
        test_id: impl Into<String>,
        params: ParamTuple,
        oracle: OracleKind,
    ) -> Self {
        TestCase {
            id: id.into(),
            params,
            provenance: Provenance::Recorded,
            oracle,
            test_id: Some(test_id.into()),
        }
    }

    pub fn mutated(id: impl Into<String>, params: ParamTuple) -> Self {
        TestCase {
            id: id.into(),
            params,
            provenance: Provenance::Mutated,
            oracle: OracleKind::Exception,
            test_id: None,
        }
    }

    /// Identity key: the lossless encoding of the parameters.
    pub fn key(&self) -> String {
        encode_params(&self.params)
    }
}
