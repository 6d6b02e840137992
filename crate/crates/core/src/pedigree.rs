//! Family structure, relationship matrices and per-family ACE covariances.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a child is related to the rest of its nuclear family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChildType {
    /// Monozygotic twin (or higher-order identical multiple).
    Mz,
    /// Dizygotic twin.
    Dz,
    Adopted,
    /// Biological, non-twin sibling.
    BioSib,
}

/// Family-level summary of the children it contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FamilyType {
    Mz,
    Dz,
    Adopted,
    BioSib,
    Mixed,
}

impl From<ChildType> for FamilyType {
    fn from(c: ChildType) -> Self {
        match c {
            ChildType::Mz => FamilyType::Mz,
            ChildType::Dz => FamilyType::Dz,
            ChildType::Adopted => FamilyType::Adopted,
            ChildType::BioSib => FamilyType::BioSib,
        }
    }
}

impl fmt::Display for ChildType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChildType::Mz => "MZ",
            ChildType::Dz => "DZ",
            ChildType::Adopted => "ADOPTED",
            ChildType::BioSib => "BIO_SIB",
        })
    }
}

impl FromStr for ChildType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MZ" => Ok(ChildType::Mz),
            "DZ" => Ok(ChildType::Dz),
            "ADOPTED" => Ok(ChildType::Adopted),
            "BIO_SIB" | "BIOSIB" | "SIB" => Ok(ChildType::BioSib),
            other => Err(Error::Structural(format!("unknown child type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Parent,
    Child(ChildType),
}

impl Role {
    pub fn is_parent(self) -> bool {
        matches!(self, Role::Parent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub id: String,
    pub role: Role,
}

/// One pedigree: an ordered list of members with their roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PedigreeSpec {
    family_id: String,
    members: Vec<Member>,
}

impl PedigreeSpec {
    pub fn new(family_id: impl Into<String>, members: Vec<Member>) -> Result<Self> {
        let family_id = family_id.into();
        if members.is_empty() {
            return Err(Error::Structural(format!("family {family_id} has no members")));
        }
        let parents = members.iter().filter(|m| m.role.is_parent()).count();
        if parents > 2 {
            return Err(Error::Structural(format!(
                "family {family_id} has {parents} parents (at most 2 allowed)"
            )));
        }
        let mut seen = HashSet::new();
        for m in &members {
            if !seen.insert(m.id.as_str()) {
                return Err(Error::Structural(format!(
                    "family {family_id} repeats member id {}",
                    m.id
                )));
            }
        }
        Ok(Self { family_id, members })
    }

    /// Two parents followed by two children of the given type.
    pub fn nuclear(family_id: impl Into<String>, child_type: ChildType) -> Self {
        let family_id = family_id.into();
        let members = vec![
            Member { id: format!("{family_id}_p1"), role: Role::Parent },
            Member { id: format!("{family_id}_p2"), role: Role::Parent },
            Member { id: format!("{family_id}_c1"), role: Role::Child(child_type) },
            Member { id: format!("{family_id}_c2"), role: Role::Child(child_type) },
        ];
        Self::new(family_id, members).expect("nuclear family layout is valid")
    }

    pub fn family_id(&self) -> &str {
        &self.family_id
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Common child type, `Mixed` when children differ, `None` when childless.
    pub fn child_type(&self) -> Option<FamilyType> {
        let mut kinds = self.members.iter().filter_map(|m| match m.role {
            Role::Child(c) => Some(c),
            Role::Parent => None,
        });
        let first = kinds.next()?;
        if kinds.all(|c| c == first) {
            Some(first.into())
        } else {
            Some(FamilyType::Mixed)
        }
    }
}

/// Twice-kinship coefficients within one family.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipMatrix(DMatrix<f64>);

impl RelationshipMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Build the relationship matrix from pairwise role rules.
///
/// Diagonal 1; parent–parent 0; parent–child 1/2 unless the child is
/// adopted; siblings 1 when both are MZ, 0 when either is adopted and 1/2
/// otherwise.
pub fn build_kinship(pedigree: &PedigreeSpec) -> Result<RelationshipMatrix> {
    let members = pedigree.members();
    let mz = members
        .iter()
        .filter(|m| m.role == Role::Child(ChildType::Mz))
        .count();
    if mz == 1 {
        return Err(Error::Structural(format!(
            "family {} has a single MZ child; MZ children come in sets of two or more",
            pedigree.family_id()
        )));
    }
    let n = members.len();
    let phi = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 1.0;
        }
        match (members[i].role, members[j].role) {
            (Role::Parent, Role::Parent) => 0.0,
            (Role::Parent, Role::Child(c)) | (Role::Child(c), Role::Parent) => {
                if c == ChildType::Adopted {
                    0.0
                } else {
                    0.5
                }
            }
            (Role::Child(a), Role::Child(b)) => match (a, b) {
                (ChildType::Adopted, _) | (_, ChildType::Adopted) => 0.0,
                (ChildType::Mz, ChildType::Mz) => 1.0,
                _ => 0.5,
            },
        }
    });
    Ok(RelationshipMatrix(phi))
}

/// The three ACE variance components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AceVarianceComponents {
    pub sigma_a2: f64,
    pub sigma_c2: f64,
    pub sigma_e2: f64,
}

impl AceVarianceComponents {
    pub fn new(sigma_a2: f64, sigma_c2: f64, sigma_e2: f64) -> Result<Self> {
        let vc = Self { sigma_a2, sigma_c2, sigma_e2 };
        vc.validate()?;
        Ok(vc)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.sigma_a2.is_finite() && self.sigma_c2.is_finite() && self.sigma_e2.is_finite();
        if !finite || self.sigma_a2 < 0.0 || self.sigma_c2 < 0.0 || self.sigma_e2 <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "variance components must satisfy a2 >= 0, c2 >= 0, e2 > 0; got ({}, {}, {})",
                self.sigma_a2, self.sigma_c2, self.sigma_e2
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.sigma_a2 + self.sigma_c2 + self.sigma_e2
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            sigma_a2: self.sigma_a2 * factor,
            sigma_c2: self.sigma_c2 * factor,
            sigma_e2: self.sigma_e2 * factor,
        }
    }
}

impl Default for AceVarianceComponents {
    fn default() -> Self {
        Self { sigma_a2: 4.0, sigma_c2: 1.0, sigma_e2: 1.0 }
    }
}

/// `V = a2·Φ + c2·11ᵀ + e2·I`.
pub fn ace_covariance(phi: &RelationshipMatrix, vc: &AceVarianceComponents) -> Result<DMatrix<f64>> {
    let phi = phi.as_matrix();
    if !phi.is_square() {
        return Err(Error::Structural(format!(
            "relationship matrix is {}x{}, expected square",
            phi.nrows(),
            phi.ncols()
        )));
    }
    Ok(ace_covariance_unchecked(phi, vc))
}

pub(crate) fn ace_covariance_unchecked(phi: &DMatrix<f64>, vc: &AceVarianceComponents) -> DMatrix<f64> {
    let n = phi.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let e = if i == j { vc.sigma_e2 } else { 0.0 };
        vc.sigma_a2 * phi[(i, j)] + vc.sigma_c2 + e
    })
}
