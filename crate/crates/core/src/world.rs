//! Environment knowledge base: rooms, named locations, objects and persons.
//!
//! A [`WorldModel`] is immutable once loaded. Rooms double as navigation
//! points, so every room is also registered as a location inside itself,
//! and the distinguished `initial location` is always present.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Name of the location the robot starts from and returns "back" to.
pub const INITIAL_LOCATION: &str = "initial location";

const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("reference error: {0}")]
    Reference(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    #[default]
    Unspecified,
}

impl Gender {
    pub fn is_unspecified(&self) -> bool {
        matches!(self, Gender::Unspecified)
    }

    /// Object pronoun used in commands ("follow her").
    pub fn pronoun(&self) -> &'static str {
        match self {
            Gender::Female => "her",
            Gender::Male => "him",
            Gender::Unspecified => "them",
        }
    }

    pub fn possessive(&self) -> &'static str {
        match self {
            Gender::Female => "her",
            Gender::Male => "his",
            Gender::Unspecified => "their",
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unspecified => "unspecified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gesture {
    PointingLeft,
    PointingRight,
    RaisingHand,
}

impl Gesture {
    /// Phrase used inside a natural-language command.
    pub fn surface_phrase(&self) -> &'static str {
        match self {
            Gesture::PointingLeft => "pointing to the left",
            Gesture::PointingRight => "pointing to the right",
            Gesture::RaisingHand => "raising their hand",
        }
    }

    /// Descriptor passed as the argument of a person search.
    pub fn plan_argument(&self) -> &'static str {
        match self {
            Gesture::PointingLeft => "point to the left",
            Gesture::PointingRight => "point to the right",
            Gesture::RaisingHand => "raising hand",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonProfile {
    pub name: String,
    pub gender: Gender,
    pub gesture: Option<Gesture>,
    pub location: String,
}

/// Result of grounding a surface string against the world.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ResolvedEntity {
    Object(String),
    Location(String),
    Person(String),
    Unresolved,
}

impl ResolvedEntity {
    pub fn is_resolved(&self) -> bool {
        !matches!(self, ResolvedEntity::Unresolved)
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            ResolvedEntity::Object(n) | ResolvedEntity::Location(n) | ResolvedEntity::Person(n) => {
                Some(n)
            }
            ResolvedEntity::Unresolved => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EntityKind {
    Object,
    Location,
    Person,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldModel {
    rooms: BTreeSet<String>,
    locations: BTreeMap<String, String>,
    objects: BTreeMap<String, String>,
    persons: BTreeMap<String, PersonProfile>,
    synonyms: BTreeMap<String, String>,
    // lowercased key -> canonical name
    index: HashMap<String, (EntityKind, String)>,
}

/// Collapse whitespace and lowercase; the key used for every lookup.
pub fn normalize(surface: &str) -> String {
    surface
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl WorldModel {
    pub fn rooms(&self) -> &BTreeSet<String> {
        &self.rooms
    }

    /// Location name to containing room.
    pub fn locations(&self) -> &BTreeMap<String, String> {
        &self.locations
    }

    /// Object name to the location where it is placed.
    pub fn objects(&self) -> &BTreeMap<String, String> {
        &self.objects
    }

    pub fn persons(&self) -> &BTreeMap<String, PersonProfile> {
        &self.persons
    }

    pub fn synonyms(&self) -> &BTreeMap<String, String> {
        &self.synonyms
    }

    pub fn person(&self, name: &str) -> Option<&PersonProfile> {
        self.persons.get(name)
    }

    pub fn room_of(&self, location: &str) -> Option<&str> {
        self.locations.get(location).map(String::as_str)
    }

    pub fn is_room(&self, name: &str) -> bool {
        self.rooms.contains(name)
    }

    /// Grounds a surface string. Case-insensitive, synonyms resolve in one
    /// step, anything else is [`ResolvedEntity::Unresolved`].
    pub fn resolve(&self, surface: &str) -> ResolvedEntity {
        let key = normalize(surface);
        match self.index.get(&key) {
            Some((EntityKind::Object, name)) => ResolvedEntity::Object(name.clone()),
            Some((EntityKind::Location, name)) => ResolvedEntity::Location(name.clone()),
            Some((EntityKind::Person, name)) => ResolvedEntity::Person(name.clone()),
            None => ResolvedEntity::Unresolved,
        }
    }

    /// Whether two plan arguments denote the same thing: same resolved
    /// entity, or identical normalized text when neither resolves.
    pub fn same_referent(&self, a: &str, b: &str) -> bool {
        match (self.resolve(a), self.resolve(b)) {
            (ResolvedEntity::Unresolved, ResolvedEntity::Unresolved) => normalize(a) == normalize(b),
            (x, y) => x == y,
        }
    }

    /// Canonical form of an argument for comparisons.
    pub fn canonical_argument(&self, surface: &str) -> String {
        match self.resolve(surface) {
            ResolvedEntity::Unresolved => normalize(surface),
            e => e.name().unwrap_or_default().to_string(),
        }
    }

    /// Stable digest of the canonical serialization.
    pub fn digest(&self) -> String {
        let text = self.to_toml_string();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_document(&self) -> WorldDocument {
        WorldDocument {
            schema: SCHEMA_VERSION,
            rooms: self.rooms.iter().cloned().collect(),
            locations: self.locations.clone(),
            objects: self.objects.clone(),
            persons: self
                .persons
                .values()
                .map(|p| {
                    (
                        p.name.clone(),
                        PersonEntry {
                            gender: p.gender,
                            gesture: p.gesture,
                            location: p.location.clone(),
                        },
                    )
                })
                .collect(),
            synonyms: self.synonyms.clone(),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_document()).expect("world document serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, WorldError> {
        let doc: WorldDocument =
            toml::from_str(text).map_err(|e| WorldError::Schema(e.message().to_string()))?;
        load_world(doc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The shipped benchmark household.
    pub fn benchmark() -> Self {
        Self::from_toml_str(crate::data::BENCHMARK_WORLD).expect("benchmark world is valid")
    }
}

impl fmt::Display for WorldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} rooms, {} locations, {} objects, {} persons",
            self.rooms.len(),
            self.locations.len(),
            self.objects.len(),
            self.persons.len()
        )
    }
}

/// On-disk form of a world description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldDocument {
    pub schema: u32,
    #[serde(default)]
    pub rooms: Vec<String>,
    #[serde(default)]
    pub locations: BTreeMap<String, String>,
    #[serde(default)]
    pub objects: BTreeMap<String, String>,
    #[serde(default)]
    pub persons: BTreeMap<String, PersonEntry>,
    #[serde(default)]
    pub synonyms: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonEntry {
    #[serde(default, skip_serializing_if = "Gender::is_unspecified")]
    pub gender: Gender,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gesture: Option<Gesture>,
    pub location: String,
}

fn check_name(kind: &str, name: &str) -> Result<(), WorldError> {
    if name.trim().is_empty() || normalize(name) != name.to_lowercase() {
        return Err(WorldError::Schema(format!(
            "{kind} name {name:?} must be non-empty with single inner spaces"
        )));
    }
    Ok(())
}

/// Builds a validated [`WorldModel`] from its document form.
pub fn load_world(doc: WorldDocument) -> Result<WorldModel, WorldError> {
    if doc.schema != SCHEMA_VERSION {
        return Err(WorldError::Schema(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            doc.schema
        )));
    }
    let mut rooms = BTreeSet::new();
    for room in &doc.rooms {
        check_name("room", room)?;
        if !rooms.insert(room.clone()) {
            return Err(WorldError::Schema(format!("room {room:?} listed twice")));
        }
    }

    let mut locations = doc.locations.clone();
    for (loc, room) in &locations {
        check_name("location", loc)?;
        if !rooms.contains(room) {
            return Err(WorldError::Reference(format!(
                "location {loc:?} is in unknown room {room:?}"
            )));
        }
        if rooms.contains(loc) && loc != room {
            return Err(WorldError::Reference(format!(
                "room {loc:?} cannot be placed inside room {room:?}"
            )));
        }
    }
    for room in &rooms {
        locations.entry(room.clone()).or_insert_with(|| room.clone());
    }
    if !locations.contains_key(INITIAL_LOCATION) {
        let first = doc.rooms.first().ok_or_else(|| {
            WorldError::Reference(format!("no room available to hold {INITIAL_LOCATION:?}"))
        })?;
        locations.insert(INITIAL_LOCATION.to_string(), first.clone());
    }

    for (obj, loc) in &doc.objects {
        check_name("object", obj)?;
        if !locations.contains_key(loc) {
            return Err(WorldError::Reference(format!(
                "object {obj:?} is at unknown location {loc:?}"
            )));
        }
    }

    let mut persons = BTreeMap::new();
    for (name, entry) in &doc.persons {
        check_name("person", name)?;
        if !locations.contains_key(&entry.location) {
            return Err(WorldError::Reference(format!(
                "person {name:?} is at unknown location {:?}",
                entry.location
            )));
        }
        persons.insert(
            name.clone(),
            PersonProfile {
                name: name.clone(),
                gender: entry.gender,
                gesture: entry.gesture,
                location: entry.location.clone(),
            },
        );
    }

    let mut index: HashMap<String, (EntityKind, String)> = HashMap::new();
    let canonical = locations
        .keys()
        .map(|n| (EntityKind::Location, n))
        .chain(doc.objects.keys().map(|n| (EntityKind::Object, n)))
        .chain(persons.keys().map(|n| (EntityKind::Person, n)));
    for (kind, name) in canonical {
        if let Some((_, other)) = index.insert(normalize(name), (kind, name.clone())) {
            return Err(WorldError::Schema(format!(
                "names {other:?} and {name:?} collide case-insensitively"
            )));
        }
    }

    let mut synonyms = BTreeMap::new();
    for (surface, target) in &doc.synonyms {
        check_name("synonym", surface)?;
        let key = normalize(surface);
        if index.contains_key(&key) {
            return Err(WorldError::Schema(format!(
                "synonym {surface:?} shadows a canonical name"
            )));
        }
        if !index.values().any(|(_, n)| n == target) {
            return Err(WorldError::Reference(format!(
                "synonym {surface:?} points to unknown name {target:?}"
            )));
        }
        synonyms.insert(surface.clone(), target.clone());
    }
    for (surface, target) in &synonyms {
        let entry = index
            .values()
            .find(|(_, n)| n == target)
            .cloned()
            .expect("target checked above");
        if index.insert(normalize(surface), entry).is_some() {
            return Err(WorldError::Schema(format!("synonym {surface:?} listed twice")));
        }
    }

    Ok(WorldModel {
        rooms,
        locations,
        objects: doc.objects,
        persons,
        synonyms,
        index,
    })
}
