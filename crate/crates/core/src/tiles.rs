//! Tiles, tile sets and the two shipped 30-tile universes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a tile inside its [`TileSet`]. Ids are dense `0..len`.
pub type TileId = usize;

/// Smallest tile set that still allows a full five-slot board.
pub const MIN_TILES: usize = 6;
/// Tile membership is tracked in `u64` masks by the counting code.
pub const MAX_TILES: usize = 64;

const GENERIC_JSON: &str = include_str!("../../../tilesets/generic.json");
const ANIMALS_JSON: &str = include_str!("../../../tilesets/animals.json");

#[cfg(test)]
const GENERIC_COLORS: [&str; 5] = ["red", "blue", "green", "yellow", "white"];
#[cfg(test)]
const GENERIC_TYPES: [&str; 7] = ["A", "B", "C", "D", "E", "F", "G"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TileSetError {
    #[error("malformed tile-set document: {0}")]
    Malformed(String),
    #[error("tile set has {0} tiles, expected between {MIN_TILES} and {MAX_TILES}")]
    Size(usize),
    #[error("duplicate tile id {0}")]
    DuplicateId(TileId),
    #[error("tile ids must be dense 0..{len}, found id {id}")]
    SparseId { id: TileId, len: usize },
    #[error("tile {id} ({name}) is missing property \"{property}\"")]
    MissingProperty { id: TileId, name: String, property: String },
    #[error("tile {id} ({name}) has property \"{property}\" which is not in the schema")]
    UnknownProperty { id: TileId, name: String, property: String },
    #[error("tile {id} ({name}) has unknown value \"{value}\" for property \"{property}\"")]
    UnknownValue { id: TileId, name: String, property: String, value: String },
    #[error("schema property \"{0}\" declares no values")]
    EmptyProperty(String),
    #[error("duplicate tile name \"{0}\"")]
    DuplicateName(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub id: TileId,
    pub name: String,
    pub properties: BTreeMap<String, String>,
}

impl Tile {
    pub fn value(&self, property: &str) -> Option<&str> {
        self.properties.get(property).map(String::as_str)
    }

    /// True when the tile carries `property` set to `value`.
    pub fn has(&self, property: &str, value: &str) -> bool {
        self.value(property) == Some(value)
    }
}

/// Allowed values per property, in declaration order.
pub type Schema = BTreeMap<String, Vec<String>>;

/// An immutable, validated collection of tiles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TileSetDoc")]
pub struct TileSet {
    name: String,
    schema: Schema,
    tiles: Vec<Tile>,
}

#[derive(Deserialize)]
struct TileSetDoc {
    name: String,
    schema: Schema,
    tiles: Vec<Tile>,
}

impl TryFrom<TileSetDoc> for TileSet {
    type Error = TileSetError;

    fn try_from(doc: TileSetDoc) -> Result<Self, TileSetError> {
        Self::new(doc.name, doc.schema, doc.tiles)
    }
}

impl TileSet {
    /// Builds a tile set, checking every invariant. Tiles may be given in any
    /// order; they are stored sorted by id.
    pub fn new(name: impl Into<String>, schema: Schema, mut tiles: Vec<Tile>) -> Result<Self, TileSetError> {
        if !(MIN_TILES..=MAX_TILES).contains(&tiles.len()) {
            return Err(TileSetError::Size(tiles.len()));
        }
        if let Some((prop, _)) = schema.iter().find(|(_, values)| values.is_empty()) {
            return Err(TileSetError::EmptyProperty(prop.clone()));
        }
        let mut seen = BTreeSet::new();
        for tile in &tiles {
            if !seen.insert(tile.id) {
                return Err(TileSetError::DuplicateId(tile.id));
            }
            if tile.id >= tiles.len() {
                return Err(TileSetError::SparseId { id: tile.id, len: tiles.len() });
            }
        }
        let mut names = BTreeSet::new();
        for tile in &tiles {
            if !names.insert(tile.name.as_str()) {
                return Err(TileSetError::DuplicateName(tile.name.clone()));
            }
            for (property, values) in &schema {
                match tile.properties.get(property) {
                    None => {
                        return Err(TileSetError::MissingProperty {
                            id: tile.id,
                            name: tile.name.clone(),
                            property: property.clone(),
                        })
                    }
                    Some(value) if !values.contains(value) => {
                        return Err(TileSetError::UnknownValue {
                            id: tile.id,
                            name: tile.name.clone(),
                            property: property.clone(),
                            value: value.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
            if let Some(extra) = tile.properties.keys().find(|p| !schema.contains_key(*p)) {
                return Err(TileSetError::UnknownProperty {
                    id: tile.id,
                    name: tile.name.clone(),
                    property: extra.clone(),
                });
            }
        }
        tiles.sort_by_key(|t| t.id);
        Ok(Self { name: name.into(), schema, tiles })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn get(&self, id: TileId) -> Option<&Tile> {
        self.tiles.get(id)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tile> {
        self.tiles.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    /// Whether `property` is declared and `value` is one of its values.
    pub fn knows(&self, property: &str, value: &str) -> bool {
        self.schema.get(property).is_some_and(|vs| vs.iter().any(|v| v == value))
    }

    /// Number of tiles with `property == value`.
    pub fn histogram(&self, property: &str) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for tile in &self.tiles {
            if let Some(v) = tile.value(property) {
                *counts.entry(v.to_string()).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Parses and validates a tile-set JSON document.
    pub fn from_json(document: &str) -> Result<Self, TileSetError> {
        let doc: TileSetDoc = serde_json::from_str(document).map_err(|e| TileSetError::Malformed(e.to_string()))?;
        Self::try_from(doc)
    }

    /// Normalized document: pretty JSON, keys sorted, tiles ordered by id,
    /// trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("tile set serializes");
        out.push('\n');
        out
    }
}

/// Parses a tile-set document. See [`TileSet::from_json`].
pub fn load_tileset(document: &str) -> Result<TileSet, TileSetError> {
    TileSet::from_json(document)
}

#[cfg(test)]
fn generic_schema() -> Schema {
    let mut schema = Schema::new();
    schema.insert("group".into(), ["1", "2", "3"].map(String::from).to_vec());
    schema.insert("color".into(), GENERIC_COLORS.map(String::from).to_vec());
    schema.insert("type".into(), GENERIC_TYPES.map(String::from).to_vec());
    schema
}

/// The (group, color, type) triple shared by both canonical sets.
#[cfg(test)]
fn generic_properties(id: TileId) -> BTreeMap<String, String> {
    let group = (id % 3 + 1).to_string();
    let color = GENERIC_COLORS[id % 5].to_string();
    let type_index = if id < 10 { id / 5 } else { 2 + (id - 10) / 4 };
    let ty = GENERIC_TYPES[type_index].to_string();
    BTreeMap::from([("group".to_string(), group), ("color".to_string(), color), ("type".to_string(), ty)])
}

/// Builds the 30-tile generic set from its defining formulas.
#[cfg(test)]
pub(crate) fn build_generic_set() -> TileSet {
    let tiles = (0..30)
        .map(|id| {
            let properties = generic_properties(id);
            let name = format!("{} {}{}", properties["color"], properties["type"], properties["group"]);
            Tile { id, name, properties }
        })
        .collect();
    TileSet::new("generic", generic_schema(), tiles).expect("generic set is valid")
}

#[cfg(test)]
pub(crate) fn build_animal_set(names: &[&str]) -> TileSet {
    let tiles = names
        .iter()
        .enumerate()
        .map(|(id, name)| Tile { id, name: name.to_string(), properties: generic_properties(id) })
        .collect();
    TileSet::new("animals", generic_schema(), tiles).expect("animal set is valid")
}

/// The canonical generic set: 30 tiles over group (3 values), color (5) and
/// type (7).
pub fn canonical_generic_set() -> TileSet {
    TileSet::from_json(GENERIC_JSON).expect("shipped generic.json is valid")
}

/// Thirty named animals for the dinner-party game, sharing the generic schema.
pub fn animal_dinner_set() -> TileSet {
    TileSet::from_json(ANIMALS_JSON).expect("shipped animals.json is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const ANIMALS: [&str; 30] = [
        "Fox", "Hen", "Owl", "Bear", "Rabbit", "Deer", "Mouse", "Cat", "Dog", "Goat", "Sheep", "Cow", "Pig", "Horse",
        "Duck", "Goose", "Frog", "Badger", "Hedgehog", "Squirrel", "Wolf", "Otter", "Beaver", "Raccoon", "Moose",
        "Lynx", "Crow", "Turtle", "Lizard", "Donkey",
    ];

    #[test]
    fn shipped_generic_file_matches_formula() {
        assert_eq!(canonical_generic_set(), build_generic_set());
        assert_eq!(build_generic_set().to_json(), GENERIC_JSON);
    }

    #[test]
    fn shipped_animal_file_matches_formula() {
        let built = build_animal_set(&ANIMALS);
        assert_eq!(animal_dinner_set(), built);
        assert_eq!(built.to_json(), ANIMALS_JSON);
    }

    #[test]
    fn tile_zero() {
        let set = canonical_generic_set();
        let t = set.get(0).unwrap();
        assert!(t.has("group", "1") && t.has("color", "red") && t.has("type", "A"));
    }

    #[test]
    fn histograms() {
        let set = canonical_generic_set();
        let counts = |p: &str| set.histogram(p).into_values().collect::<Vec<_>>();
        assert_eq!(counts("group"), vec![10, 10, 10]);
        assert_eq!(counts("color"), vec![6; 5]);
        let types = set.histogram("type");
        let by_type: Vec<usize> = GENERIC_TYPES.iter().map(|t| types[*t]).collect();
        assert_eq!(by_type, vec![5, 5, 4, 4, 4, 4, 4]);
        assert_eq!(set.histogram("color")["red"], 6);
        assert_eq!(types["A"], 5);
    }

    #[test]
    fn schema_value_counts() {
        let set = canonical_generic_set();
        assert_eq!(set.schema()["group"].len(), 3);
        assert_eq!(set.schema()["color"].len(), 5);
        assert_eq!(set.schema()["type"].len(), 7);
    }

    #[test]
    fn animal_set_shape() {
        let animals = animal_dinner_set();
        assert_eq!(animals.len(), 30);
        let names: BTreeSet<_> = animals.tiles().iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names.len(), 30);
        assert_eq!(animals.schema(), canonical_generic_set().schema());
        for tile in animals.tiles() {
            assert!(tile.name.chars().all(|c| c.is_ascii_alphabetic()), "{}", tile.name);
            assert!(ANIMALS.contains(&tile.name.as_str()));
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for doc in [GENERIC_JSON, ANIMALS_JSON] {
            assert_eq!(load_tileset(doc).unwrap().to_json(), doc);
        }
    }

    #[test]
    fn duplicate_id_is_named() {
        let mut doc: serde_json::Value = serde_json::from_str(GENERIC_JSON).unwrap();
        doc["tiles"][8]["id"] = 7.into();
        let err = load_tileset(&doc.to_string()).unwrap_err();
        assert_eq!(err, TileSetError::DuplicateId(7));
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn missing_property_is_named() {
        let mut doc: serde_json::Value = serde_json::from_str(GENERIC_JSON).unwrap();
        doc["tiles"][3]["properties"].as_object_mut().unwrap().remove("color");
        let err = load_tileset(&doc.to_string()).unwrap_err();
        assert!(matches!(err, TileSetError::MissingProperty { id: 3, .. }));
        assert!(err.to_string().contains("\"color\""));
    }

    #[test]
    fn unknown_value_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(GENERIC_JSON).unwrap();
        doc["tiles"][2]["properties"]["color"] = "purple".into();
        let err = load_tileset(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("purple"));
    }

    #[test]
    fn size_limits() {
        let small: Vec<Tile> = build_generic_set().tiles()[..5].to_vec();
        assert_eq!(TileSet::new("s", generic_schema(), small), Err(TileSetError::Size(5)));
        let six: Vec<Tile> = build_generic_set().tiles()[..6].to_vec();
        assert!(TileSet::new("s", generic_schema(), six).is_ok());
    }
}
