//! Rule concepts, per-tile verdicts and the rule genome operators.
//!
//! A rule is evaluated against a five-slot [`Arrangement`] and produces one
//! [`Verdict`] per occupied slot. Composite rules merge their children slot by
//! slot, taking the strongest verdict (`Reject > Accept > Ignore`).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::tiles::{Schema, Tile, TileId, TileSet};

/// Number of board positions.
pub const SLOTS: usize = 5;
/// Largest meaningful `CountLimit` bound; five or more can never be exceeded.
pub const MAX_COUNT_LIMIT: u8 = 4;
/// Maximum number of children in a composite.
pub const MAX_CHILDREN: usize = 5;
/// A composite of leaves. Composites never nest.
pub const MAX_DEPTH: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("rule refers to unknown property \"{0}\"")]
    UnknownProperty(String),
    #[error("rule refers to unknown value \"{value}\" of property \"{property}\"")]
    UnknownValue { property: String, value: String },
    #[error("invalid rule: {0}")]
    Invalid(String),
    #[error("invalid arrangement: {0}")]
    Arrangement(String),
}

/// Outcome of a rule for a single tile. The derived order is the merge
/// precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Ignore,
    Accept,
    Reject,
}

/// A `property == value` test against a tile.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Condition {
    pub property: String,
    pub value: String,
}

impl Condition {
    pub fn new(property: impl Into<String>, value: impl Into<String>) -> Self {
        Self { property: property.into(), value: value.into() }
    }

    pub fn matches(&self, tile: &Tile) -> bool {
        tile.has(&self.property, &self.value)
    }

    fn check(&self, tiles: &TileSet) -> Result<(), RuleError> {
        check_property(&self.property, tiles.schema())?;
        if !tiles.knows(&self.property, &self.value) {
            return Err(RuleError::UnknownValue { property: self.property.clone(), value: self.value.clone() });
        }
        Ok(())
    }
}

fn check_property(property: &str, schema: &Schema) -> Result<(), RuleError> {
    if schema.contains_key(property) {
        Ok(())
    } else {
        Err(RuleError::UnknownProperty(property.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RuleDoc", into = "RuleDoc")]
pub enum RuleNode {
    /// Reject tiles matching the condition.
    ExcludeWhere(Condition),
    /// Accept tiles matching the condition, reject all others.
    ExclusiveWhere(Condition),
    /// Every tile must share the first placed tile's value of the property.
    MatchProperty(String),
    /// Tiles matching `first` may not sit next to tiles matching `second`.
    NotAdjacent {
        first: Condition,
        second: Condition,
    },
    /// At most `number` tiles may match the condition.
    CountLimit {
        number: u8,
        condition: Condition,
    },
    Composite(Vec<RuleNode>),
}

/// Five optional tile ids, slot 0 leftmost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arrangement {
    slots: [Option<TileId>; SLOTS],
}

impl Arrangement {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates that no tile repeats and every id exists in `tiles`.
    pub fn new(slots: [Option<TileId>; SLOTS], tiles: &TileSet) -> Result<Self, RuleError> {
        for (i, id) in slots.iter().enumerate() {
            let Some(id) = id else { continue };
            if tiles.get(*id).is_none() {
                return Err(RuleError::Arrangement(format!("unknown tile id {id} in slot {i}")));
            }
            if slots[..i].contains(&Some(*id)) {
                return Err(RuleError::Arrangement(format!("tile {id} appears twice")));
            }
        }
        Ok(Self { slots })
    }

    /// Fills slots 0..5 with the given tiles in order.
    pub fn full(ids: [TileId; SLOTS], tiles: &TileSet) -> Result<Self, RuleError> {
        Self::new(ids.map(Some), tiles)
    }

    pub(crate) fn from_raw(slots: [Option<TileId>; SLOTS]) -> Self {
        Self { slots }
    }

    pub fn slots(&self) -> &[Option<TileId>; SLOTS] {
        &self.slots
    }

    pub fn get(&self, slot: usize) -> Option<TileId> {
        self.slots.get(slot).copied().flatten()
    }

    pub fn contains(&self, id: TileId) -> bool {
        self.slots.contains(&Some(id))
    }

    pub fn is_full(&self) -> bool {
        self.slots.iter().all(Option::is_some)
    }

    pub fn occupied(&self) -> impl Iterator<Item = (usize, TileId)> + '_ {
        self.slots.iter().enumerate().filter_map(|(i, id)| id.map(|id| (i, id)))
    }

    pub(crate) fn set(&mut self, slot: usize, id: Option<TileId>) {
        self.slots[slot] = id;
    }
}

type SlotVerdicts = [Option<Verdict>; SLOTS];

fn merge(into: &mut SlotVerdicts, other: &SlotVerdicts) {
    for (a, b) in into.iter_mut().zip(other) {
        if let (Some(a), Some(b)) = (a.as_mut(), b) {
            *a = (*a).max(*b);
        }
    }
}

impl RuleNode {
    pub fn empty() -> Self {
        RuleNode::Composite(Vec::new())
    }

    pub fn exclude_where(property: &str, value: &str) -> Self {
        RuleNode::ExcludeWhere(Condition::new(property, value))
    }

    pub fn exclusive_where(property: &str, value: &str) -> Self {
        RuleNode::ExclusiveWhere(Condition::new(property, value))
    }

    pub fn match_property(property: &str) -> Self {
        RuleNode::MatchProperty(property.to_string())
    }

    pub fn not_adjacent(property: &str, value: &str, property2: &str, value2: &str) -> Self {
        RuleNode::NotAdjacent { first: Condition::new(property, value), second: Condition::new(property2, value2) }
    }

    pub fn count_limit(number: u8, property: &str, value: &str) -> Self {
        RuleNode::CountLimit { number, condition: Condition::new(property, value) }
    }

    pub fn concept(&self) -> Concept {
        match self {
            RuleNode::ExcludeWhere(_) => Concept::ExcludeWhere,
            RuleNode::ExclusiveWhere(_) => Concept::ExclusiveWhere,
            RuleNode::MatchProperty(_) => Concept::MatchProperty,
            RuleNode::NotAdjacent { .. } => Concept::NotAdjacent,
            RuleNode::CountLimit { .. } => Concept::CountLimit,
            RuleNode::Composite(_) => Concept::Composite,
        }
    }

    /// Leaves in evaluation order. A leaf yields itself.
    pub fn leaves(&self) -> Vec<&RuleNode> {
        match self {
            RuleNode::Composite(children) => children.iter().flat_map(RuleNode::leaves).collect(),
            leaf => vec![leaf],
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            RuleNode::Composite(children) => 1 + children.iter().map(RuleNode::depth).max().unwrap_or(1),
            _ => 1,
        }
    }

    /// True when the rule contains an order-sensitive (adjacency) leaf.
    pub fn has_adjacency(&self) -> bool {
        self.leaves().iter().any(|leaf| matches!(leaf, RuleNode::NotAdjacent { .. }))
    }

    /// Checks that every property and value exists in the tile set.
    pub fn check_binding(&self, tiles: &TileSet) -> Result<(), RuleError> {
        match self {
            RuleNode::ExcludeWhere(c) | RuleNode::ExclusiveWhere(c) => c.check(tiles),
            RuleNode::CountLimit { condition, .. } => condition.check(tiles),
            RuleNode::MatchProperty(p) => check_property(p, tiles.schema()),
            RuleNode::NotAdjacent { first, second } => first.check(tiles).and_then(|_| second.check(tiles)),
            RuleNode::Composite(children) => children.iter().try_for_each(|c| c.check_binding(tiles)),
        }
    }

    /// Structural invariants: limit range, composite width and depth.
    pub fn check_shape(&self) -> Result<(), RuleError> {
        if self.depth() > MAX_DEPTH {
            return Err(RuleError::Invalid(format!("composite nesting deeper than {MAX_DEPTH}")));
        }
        for node in std::iter::once(self).chain(self.leaves()) {
            match node {
                RuleNode::CountLimit { number, .. } if !(1..=MAX_COUNT_LIMIT).contains(number) => {
                    return Err(RuleError::Invalid(format!("count limit {number} outside 1..={MAX_COUNT_LIMIT}")))
                }
                RuleNode::Composite(children) if children.len() > MAX_CHILDREN => {
                    return Err(RuleError::Invalid(format!(
                        "composite has {} children, at most {MAX_CHILDREN} allowed",
                        children.len()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Shape and binding together.
    pub fn validate(&self, tiles: &TileSet) -> Result<(), RuleError> {
        self.check_shape()?;
        self.check_binding(tiles)
    }

    /// One verdict per occupied slot, in slot order.
    pub fn evaluate(&self, tiles: &TileSet, arrangement: &Arrangement) -> Result<Vec<(usize, Verdict)>, RuleError> {
        self.check_binding(tiles)?;
        let verdicts = self.slot_verdicts(tiles, arrangement);
        Ok(verdicts.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).collect())
    }

    /// Evaluation without the binding check. Unbound conditions simply never
    /// match.
    pub(crate) fn slot_verdicts(&self, tiles: &TileSet, arrangement: &Arrangement) -> SlotVerdicts {
        let tile_at = |slot: usize| arrangement.get(slot).and_then(|id| tiles.get(id));
        let mut out: SlotVerdicts = arrangement.slots.map(|s| s.map(|_| Verdict::Ignore));
        match self {
            RuleNode::ExcludeWhere(c) => {
                for (slot, id) in arrangement.occupied() {
                    if c.matches(&tiles.tiles()[id]) {
                        out[slot] = Some(Verdict::Reject);
                    }
                }
            }
            RuleNode::ExclusiveWhere(c) => {
                for (slot, id) in arrangement.occupied() {
                    let verdict = if c.matches(&tiles.tiles()[id]) { Verdict::Accept } else { Verdict::Reject };
                    out[slot] = Some(verdict);
                }
            }
            RuleNode::MatchProperty(property) => {
                let reference = arrangement.occupied().next().and_then(|(_, id)| tiles.tiles()[id].value(property));
                for (slot, id) in arrangement.occupied() {
                    let same = tiles.tiles()[id].value(property) == reference;
                    out[slot] = Some(if same { Verdict::Accept } else { Verdict::Reject });
                }
            }
            RuleNode::NotAdjacent { first, second } => {
                for slot in 0..SLOTS - 1 {
                    let (Some(left), Some(right)) = (tile_at(slot), tile_at(slot + 1)) else {
                        continue;
                    };
                    let offends = (first.matches(left) && second.matches(right))
                        || (second.matches(left) && first.matches(right));
                    if offends {
                        out[slot + 1] = Some(Verdict::Reject);
                    }
                }
            }
            RuleNode::CountLimit { number, condition } => {
                let mut seen = 0u8;
                for (slot, id) in arrangement.occupied() {
                    if condition.matches(&tiles.tiles()[id]) {
                        seen += 1;
                        if seen > *number {
                            out[slot] = Some(Verdict::Reject);
                        }
                    }
                }
            }
            RuleNode::Composite(children) => {
                for child in children {
                    merge(&mut out, &child.slot_verdicts(tiles, arrangement));
                }
            }
        }
        out
    }

    /// True when no occupied slot is rejected.
    pub fn accepts(&self, tiles: &TileSet, arrangement: &Arrangement) -> Result<bool, RuleError> {
        self.check_binding(tiles)?;
        Ok(!self.slot_verdicts(tiles, arrangement).contains(&Some(Verdict::Reject)))
    }

    /// Whether some ordering of the five tiles on the board is free of
    /// rejections.
    pub fn is_valid_set(&self, tiles: &TileSet, five: [TileId; SLOTS]) -> Result<bool, RuleError> {
        self.check_binding(tiles)?;
        Arrangement::full(five, tiles)?;
        Ok(self.is_valid_set_unchecked(tiles, five, self.has_adjacency()))
    }

    pub(crate) fn is_valid_set_unchecked(&self, tiles: &TileSet, five: [TileId; SLOTS], ordered: bool) -> bool {
        let clean = |rule: &RuleNode, ids: [TileId; SLOTS]| {
            !rule.slot_verdicts(tiles, &Arrangement::from_raw(ids.map(Some))).contains(&Some(Verdict::Reject))
        };
        if !ordered {
            return clean(self, five);
        }
        // On a full board only adjacency leaves depend on the order.
        let (adjacent, free): (Vec<&RuleNode>, Vec<&RuleNode>) =
            self.leaves().into_iter().partition(|l| matches!(l, RuleNode::NotAdjacent { .. }));
        if !free.iter().all(|leaf| clean(leaf, five)) {
            return false;
        }
        permutations().iter().any(|p| {
            let ids = p.map(|i| five[i]);
            adjacent.iter().all(|leaf| clean(leaf, ids))
        })
    }

    /// English sentence for the rule; composites join children with " and ".
    pub fn render(&self) -> String {
        self.to_string()
    }
}

/// All 120 orderings of the five slots, lexicographic.
pub fn permutations() -> &'static [[usize; SLOTS]] {
    static PERMS: OnceLock<Vec<[usize; SLOTS]>> = OnceLock::new();
    PERMS.get_or_init(|| {
        fn extend(prefix: &mut Vec<usize>, out: &mut Vec<[usize; SLOTS]>) {
            if prefix.len() == SLOTS {
                out.push(prefix.clone().try_into().unwrap());
                return;
            }
            for i in 0..SLOTS {
                if !prefix.contains(&i) {
                    prefix.push(i);
                    extend(prefix, out);
                    prefix.pop();
                }
            }
        }
        let mut out = Vec::with_capacity(120);
        extend(&mut Vec::new(), &mut out);
        out
    })
}

impl fmt::Display for RuleNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleNode::ExcludeWhere(c) => write!(f, "Exclude any where {} is equal to {}", c.property, c.value),
            RuleNode::ExclusiveWhere(c) => {
                write!(f, "Exclusively for any where {} is equal to {}", c.property, c.value)
            }
            RuleNode::MatchProperty(p) => write!(f, "Only the ones where the value of {p} match"),
            RuleNode::NotAdjacent { first, second } => write!(
                f,
                "Those with {} set to {} cannot be adjacent to those with {} set to {}",
                first.property, first.value, second.property, second.value
            ),
            RuleNode::CountLimit { number, condition } => {
                write!(f, "There can only be {number} with {} set to {}", condition.property, condition.value)
            }
            RuleNode::Composite(children) if children.is_empty() => f.write_str("Any tiles are allowed"),
            RuleNode::Composite(children) => {
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" and ")?;
                    }
                    write!(f, "{child}")?;
                }
                Ok(())
            }
        }
    }
}

/// Free-function form of [`RuleNode::render`].
pub fn render_rule(rule: &RuleNode) -> String {
    rule.render()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Concept {
    ExcludeWhere,
    ExclusiveWhere,
    MatchProperty,
    NotAdjacent,
    CountLimit,
    Composite,
}

impl Concept {
    /// The five leaf concepts the generator draws from, in draw order.
    pub const LEAVES: [Concept; 5] = [
        Concept::ExcludeWhere,
        Concept::ExclusiveWhere,
        Concept::MatchProperty,
        Concept::NotAdjacent,
        Concept::CountLimit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Concept::ExcludeWhere => "exclude_where",
            Concept::ExclusiveWhere => "exclusive_where",
            Concept::MatchProperty => "match_property",
            Concept::NotAdjacent => "not_adjacent",
            Concept::CountLimit => "count_limit",
            Concept::Composite => "composite",
        }
    }
}

// ---- generation and mutation ----

fn pick<'a, T, R: Rng + ?Sized>(items: &'a [T], rng: &mut R) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn random_property<R: Rng + ?Sized>(schema: &Schema, rng: &mut R) -> String {
    let index = rng.random_range(0..schema.len());
    schema.keys().nth(index).expect("index in range").clone()
}

/// Value of `property` on a uniformly drawn sample tile.
fn sample_value<R: Rng + ?Sized>(property: &str, sample: &[Tile], rng: &mut R) -> String {
    pick(sample, rng).value(property).unwrap_or_default().to_string()
}

fn random_condition<R: Rng + ?Sized>(schema: &Schema, sample: &[Tile], rng: &mut R) -> Condition {
    let tile = pick(sample, rng);
    let property = random_property(schema, rng);
    let value = tile.value(&property).unwrap_or_default().to_string();
    Condition { property, value }
}

/// Draws a leaf rule: uniform concept, parameters taken from a uniformly
/// chosen sample tile.
///
/// Panics if `sample` or `schema` is empty.
pub fn random_rule<R: Rng + ?Sized>(schema: &Schema, sample: &[Tile], rng: &mut R) -> RuleNode {
    assert!(!sample.is_empty(), "random_rule needs at least one sample tile");
    assert!(!schema.is_empty(), "random_rule needs a non-empty schema");
    match pick(&Concept::LEAVES, rng) {
        Concept::ExcludeWhere => RuleNode::ExcludeWhere(random_condition(schema, sample, rng)),
        Concept::ExclusiveWhere => RuleNode::ExclusiveWhere(random_condition(schema, sample, rng)),
        Concept::MatchProperty => RuleNode::MatchProperty(random_property(schema, rng)),
        Concept::NotAdjacent => {
            let first = random_condition(schema, sample, rng);
            let second = random_condition(schema, sample, rng);
            RuleNode::NotAdjacent { first, second }
        }
        Concept::CountLimit => {
            let number = rng.random_range(1..=MAX_COUNT_LIMIT);
            RuleNode::CountLimit { number, condition: random_condition(schema, sample, rng) }
        }
        Concept::Composite => unreachable!("composite is not a leaf concept"),
    }
}

fn mutate_condition<R: Rng + ?Sized>(
    c: &Condition,
    change_property: bool,
    schema: &Schema,
    sample: &[Tile],
    rng: &mut R,
) -> Condition {
    let property = if change_property { random_property(schema, rng) } else { c.property.clone() };
    let value = sample_value(&property, sample, rng);
    Condition { property, value }
}

fn mutate_leaf<R: Rng + ?Sized>(rule: &RuleNode, schema: &Schema, sample: &[Tile], rng: &mut R) -> RuleNode {
    match rule {
        RuleNode::ExcludeWhere(c) | RuleNode::ExclusiveWhere(c) => {
            let c = mutate_condition(c, rng.random_bool(0.5), schema, sample, rng);
            if matches!(rule, RuleNode::ExcludeWhere(_)) {
                RuleNode::ExcludeWhere(c)
            } else {
                RuleNode::ExclusiveWhere(c)
            }
        }
        RuleNode::MatchProperty(_) => RuleNode::MatchProperty(random_property(schema, rng)),
        RuleNode::NotAdjacent { first, second } => {
            let (mut first, mut second) = (first.clone(), second.clone());
            match rng.random_range(0..4) {
                0 => first = mutate_condition(&first, true, schema, sample, rng),
                1 => first = mutate_condition(&first, false, schema, sample, rng),
                2 => second = mutate_condition(&second, true, schema, sample, rng),
                _ => second = mutate_condition(&second, false, schema, sample, rng),
            }
            RuleNode::NotAdjacent { first, second }
        }
        RuleNode::CountLimit { number, condition } => match rng.random_range(0..3) {
            0 => RuleNode::CountLimit { number: rng.random_range(1..=MAX_COUNT_LIMIT), condition: condition.clone() },
            n => RuleNode::CountLimit {
                number: *number,
                condition: mutate_condition(condition, n == 1, schema, sample, rng),
            },
        },
        RuleNode::Composite(_) => unreachable!("composites are mutated structurally"),
    }
}

/// Re-draws of a leaf parameter before accepting an unchanged result.
const LEAF_MUTATION_ATTEMPTS: usize = 8;

/// Returns a mutated copy of `rule`.
///
/// Leaves get one parameter re-sampled. Composites pick uniformly among
/// mutating a child, replacing a child, appending a child (below
/// [`MAX_CHILDREN`]) and removing a child (above one); infeasible picks are
/// drawn again.
pub fn mutate<R: Rng + ?Sized>(rule: &RuleNode, schema: &Schema, sample: &[Tile], rng: &mut R) -> RuleNode {
    let RuleNode::Composite(children) = rule else {
        let mut mutated = mutate_leaf(rule, schema, sample, rng);
        for _ in 1..LEAF_MUTATION_ATTEMPTS {
            if mutated != *rule {
                break;
            }
            mutated = mutate_leaf(rule, schema, sample, rng);
        }
        return mutated;
    };
    let mut children = children.clone();
    loop {
        match rng.random_range(0..4) {
            0 if !children.is_empty() => {
                let i = rng.random_range(0..children.len());
                children[i] = mutate(&children[i], schema, sample, rng);
            }
            1 if !children.is_empty() => {
                let i = rng.random_range(0..children.len());
                children[i] = random_rule(schema, sample, rng);
            }
            2 if children.len() < MAX_CHILDREN => children.push(random_rule(schema, sample, rng)),
            3 if children.len() > 1 => {
                let i = rng.random_range(0..children.len());
                children.remove(i);
            }
            _ => continue,
        }
        return RuleNode::Composite(children);
    }
}

// ---- JSON form ----

#[derive(Serialize, Deserialize)]
struct RuleDoc {
    concept: String,
    #[serde(default)]
    params: BTreeMap<String, Value>,
    #[serde(default)]
    children: Vec<RuleDoc>,
}

impl From<RuleNode> for RuleDoc {
    fn from(rule: RuleNode) -> Self {
        let concept = rule.concept().as_str().to_string();
        let mut params = BTreeMap::new();
        let mut put = |k: &str, v: &str| {
            params.insert(k.to_string(), Value::String(v.to_string()));
        };
        let mut children = Vec::new();
        match rule {
            RuleNode::ExcludeWhere(c) | RuleNode::ExclusiveWhere(c) => {
                put("property", &c.property);
                put("value", &c.value);
            }
            RuleNode::MatchProperty(p) => put("property", &p),
            RuleNode::NotAdjacent { first, second } => {
                put("property", &first.property);
                put("value", &first.value);
                put("property2", &second.property);
                put("value2", &second.value);
            }
            RuleNode::CountLimit { number, condition } => {
                put("property", &condition.property);
                put("value", &condition.value);
                params.insert("number".into(), Value::from(number));
            }
            RuleNode::Composite(nodes) => children = nodes.into_iter().map(RuleDoc::from).collect(),
        }
        RuleDoc { concept, params, children }
    }
}

impl TryFrom<RuleDoc> for RuleNode {
    type Error = RuleError;

    fn try_from(doc: RuleDoc) -> Result<Self, RuleError> {
        let text = |key: &str| -> Result<String, RuleError> {
            doc.params
                .get(key)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| RuleError::Invalid(format!("{} needs string param \"{key}\"", doc.concept)))
        };
        let condition = |p: &str, v: &str| -> Result<Condition, RuleError> { Ok(Condition::new(text(p)?, text(v)?)) };
        let rule = match doc.concept.as_str() {
            "exclude_where" => RuleNode::ExcludeWhere(condition("property", "value")?),
            "exclusive_where" => RuleNode::ExclusiveWhere(condition("property", "value")?),
            "match_property" => RuleNode::MatchProperty(text("property")?),
            "not_adjacent" => RuleNode::NotAdjacent {
                first: condition("property", "value")?,
                second: condition("property2", "value2")?,
            },
            "count_limit" => {
                let number = doc
                    .params
                    .get("number")
                    .and_then(Value::as_u64)
                    .and_then(|n| u8::try_from(n).ok())
                    .ok_or_else(|| RuleError::Invalid("count_limit needs integer param \"number\"".into()))?;
                RuleNode::CountLimit { number, condition: condition("property", "value")? }
            }
            "composite" => {
                RuleNode::Composite(doc.children.into_iter().map(RuleNode::try_from).collect::<Result<_, _>>()?)
            }
            other => return Err(RuleError::Invalid(format!("unknown concept \"{other}\""))),
        };
        rule.check_shape()?;
        Ok(rule)
    }
}

impl RuleNode {
    /// Pretty JSON document with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("rule serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, RuleError> {
        serde_json::from_str(text).map_err(|e| RuleError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiles::canonical_generic_set;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set() -> TileSet {
        canonical_generic_set()
    }

    /// First `n` tiles of the generic set whose group is `group`.
    fn of_group(group: &str, n: usize) -> Vec<TileId> {
        set().tiles().iter().filter(|t| t.has("group", group)).map(|t| t.id).take(n).collect()
    }

    fn board(ids: &[TileId]) -> Arrangement {
        let mut slots = [None; SLOTS];
        for (slot, id) in ids.iter().enumerate() {
            slots[slot] = Some(*id);
        }
        Arrangement::new(slots, &set()).unwrap()
    }

    #[test]
    fn exclude_where_two_tiles() {
        let out = RuleNode::exclude_where("color", "red").evaluate(&set(), &board(&[0, 1])).unwrap();
        assert_eq!(out, vec![(0, Verdict::Reject), (1, Verdict::Ignore)]);
    }

    #[test]
    fn composite_reject_wins() {
        let rule =
            RuleNode::Composite(vec![RuleNode::exclusive_where("group", "1"), RuleNode::exclude_where("group", "1")]);
        let out = rule.evaluate(&set(), &board(&[0])).unwrap();
        assert_eq!(out, vec![(0, Verdict::Reject)]);
    }

    #[test]
    fn not_adjacent_rejects_higher_index_of_each_pair() {
        let g1 = of_group("1", 2);
        let g2 = of_group("2", 1);
        let rule = RuleNode::not_adjacent("group", "1", "group", "2");
        let out = rule.evaluate(&set(), &board(&[g1[0], g2[0], g1[1]])).unwrap();
        assert_eq!(out, vec![(0, Verdict::Ignore), (1, Verdict::Reject), (2, Verdict::Reject)]);
    }

    #[test]
    fn empty_slots_get_no_verdict() {
        let arrangement = Arrangement::new([None, Some(3), None, Some(4), None], &set()).unwrap();
        let out = RuleNode::match_property("group").evaluate(&set(), &arrangement).unwrap();
        assert_eq!(out.iter().map(|(s, _)| *s).collect::<Vec<_>>(), vec![1, 3]);
        // reference is slot 1 (group 1); tile 4 is group 2
        assert_eq!(out[1].1, Verdict::Reject);
    }

    #[test]
    fn count_limit_rejects_excess_in_slot_order() {
        let type_a: Vec<TileId> = (0..5).collect();
        let out = RuleNode::count_limit(3, "type", "A").evaluate(&set(), &board(&type_a)).unwrap();
        let verdicts: Vec<Verdict> = out.into_iter().map(|(_, v)| v).collect();
        use Verdict::*;
        assert_eq!(verdicts, vec![Ignore, Ignore, Ignore, Reject, Reject]);
    }

    #[test]
    fn empty_composite_ignores_everything() {
        let out = RuleNode::empty().evaluate(&set(), &board(&[5, 6, 7])).unwrap();
        assert!(out.iter().all(|(_, v)| *v == Verdict::Ignore));
        assert!(RuleNode::empty().is_valid_set(&set(), [0, 1, 2, 3, 4]).unwrap());
    }

    #[test]
    fn unbound_rule_errors() {
        let err = RuleNode::exclude_where("size", "big").evaluate(&set(), &board(&[0])).unwrap_err();
        assert_eq!(err, RuleError::UnknownProperty("size".into()));
        let err = RuleNode::exclude_where("color", "purple").evaluate(&set(), &board(&[0])).unwrap_err();
        assert!(matches!(err, RuleError::UnknownValue { .. }));
    }

    #[test]
    fn arrangement_rejects_duplicates_and_unknown_ids() {
        assert!(Arrangement::new([Some(1), Some(1), None, None, None], &set()).is_err());
        assert!(Arrangement::new([Some(30), None, None, None, None], &set()).is_err());
    }

    #[test]
    fn match_property_sets() {
        let rule = RuleNode::match_property("group");
        let g1 = of_group("1", 5);
        assert!(rule.is_valid_set(&set(), g1.clone().try_into().unwrap()).unwrap());
        let mut mixed = of_group("1", 4);
        mixed.push(of_group("2", 1)[0]);
        assert!(!rule.is_valid_set(&set(), mixed.try_into().unwrap()).unwrap());
    }

    #[test]
    fn not_adjacent_set_validity_needs_a_separator() {
        let rule = RuleNode::not_adjacent("group", "1", "group", "2");
        let mut ids = of_group("1", 2);
        ids.extend(of_group("2", 3));
        assert!(!rule.is_valid_set(&set(), ids.clone().try_into().unwrap()).unwrap());
        ids[4] = of_group("3", 1)[0];
        assert!(rule.is_valid_set(&set(), ids.try_into().unwrap()).unwrap());
    }

    #[test]
    fn render_matches_phrasing() {
        assert_eq!(RuleNode::count_limit(3, "type", "A").render(), "There can only be 3 with type set to A");
        assert_eq!(RuleNode::exclusive_where("group", "1").render(), "Exclusively for any where group is equal to 1");
        assert_eq!(
            RuleNode::not_adjacent("group", "3", "type", "E").render(),
            "Those with group set to 3 cannot be adjacent to those with type set to E"
        );
        assert_eq!(RuleNode::exclude_where("color", "red").render(), "Exclude any where color is equal to red");
        assert_eq!(RuleNode::match_property("color").render(), "Only the ones where the value of color match");
        let both =
            RuleNode::Composite(vec![RuleNode::count_limit(3, "type", "A"), RuleNode::count_limit(3, "color", "red")]);
        assert_eq!(
            render_rule(&both),
            "There can only be 3 with type set to A and There can only be 3 with color set to red"
        );
    }

    #[test]
    fn json_shape() {
        let rule = RuleNode::Composite(vec![RuleNode::count_limit(2, "color", "red")]);
        let value: Value = serde_json::to_value(&rule).unwrap();
        assert_eq!(value["concept"], "composite");
        assert_eq!(value["children"][0]["concept"], "count_limit");
        assert_eq!(value["children"][0]["params"]["number"], 2);
        assert_eq!(RuleNode::from_json(&rule.to_json()).unwrap(), rule);
    }

    #[test]
    fn json_rejects_bad_shapes() {
        let bad_number = r#"{"concept":"count_limit","params":{"number":5,"property":"type","value":"A"}}"#;
        assert!(RuleNode::from_json(bad_number).is_err());
        let nested = r#"{"concept":"composite","children":[{"concept":"composite","children":[]}]}"#;
        assert!(RuleNode::from_json(nested).is_err());
        assert!(RuleNode::from_json(r#"{"concept":"teleport"}"#).is_err());
        let wide = RuleNode::Composite(vec![RuleNode::match_property("type"); 6]);
        assert!(RuleNode::from_json(&serde_json::to_string(&RuleDoc::from(wide)).unwrap()).is_err());
    }

    #[test]
    fn random_rule_golden() {
        let tiles = set();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let drawn: Vec<String> =
            (0..4).map(|_| random_rule(tiles.schema(), tiles.tiles(), &mut rng).render()).collect();
        assert_eq!(drawn, golden_random_rules());
    }

    fn golden_random_rules() -> Vec<String> {
        vec![
            "Exclude any where color is equal to white".to_string(),
            "Exclude any where type is equal to B".to_string(),
            "Exclude any where color is equal to blue".to_string(),
            "Those with group set to 1 cannot be adjacent to those with color set to green".to_string(),
        ]
    }

    #[test]
    fn random_rule_samples_only_from_sample() {
        let tiles = set();
        let reds: Vec<Tile> = tiles.tiles().iter().filter(|t| t.has("color", "red")).cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let rule = random_rule(tiles.schema(), &reds, &mut rng);
            for leaf in rule.leaves() {
                let conditions: Vec<&Condition> = match leaf {
                    RuleNode::ExcludeWhere(c) | RuleNode::ExclusiveWhere(c) => vec![c],
                    RuleNode::CountLimit { condition, .. } => vec![condition],
                    RuleNode::NotAdjacent { first, second } => vec![first, second],
                    _ => vec![],
                };
                for c in conditions {
                    if c.property == "color" {
                        assert_eq!(c.value, "red");
                    }
                }
            }
        }
    }

    #[test]
    fn concept_frequencies_are_uniform() {
        let tiles = set();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let mut counts = BTreeMap::new();
        for _ in 0..draws {
            *counts.entry(random_rule(tiles.schema(), tiles.tiles(), &mut rng).concept().as_str()).or_insert(0) += 1;
        }
        let mean = draws as f64 / 5.0;
        let sigma = (draws as f64 * 0.2 * 0.8).sqrt();
        assert_eq!(counts.len(), 5);
        for (concept, n) in counts {
            assert!((n as f64 - mean).abs() <= 3.0 * sigma, "{concept}: {n}");
        }
    }

    #[test]
    fn leaf_mutation_keeps_concept_and_changes_something() {
        let tiles = set();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let original = RuleNode::exclude_where("color", "red");
        for _ in 0..200 {
            let mutated = mutate(&original, tiles.schema(), tiles.tiles(), &mut rng);
            assert_eq!(mutated.concept(), Concept::ExcludeWhere);
            assert_ne!(mutated, original);
        }
        assert_eq!(original, RuleNode::exclude_where("color", "red"));
    }

    #[test]
    fn composite_width_stays_in_bounds() {
        let tiles = set();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let full = RuleNode::Composite(vec![RuleNode::match_property("type"); 5]);
        let single = RuleNode::Composite(vec![RuleNode::match_property("type")]);
        for _ in 0..500 {
            let RuleNode::Composite(c) = mutate(&full, tiles.schema(), tiles.tiles(), &mut rng) else { panic!() };
            assert!(c.len() <= 5);
            let RuleNode::Composite(c) = mutate(&single, tiles.schema(), tiles.tiles(), &mut rng) else { panic!() };
            assert!(!c.is_empty());
        }
    }

    #[test]
    fn permutations_are_distinct() {
        let perms = permutations();
        assert_eq!(perms.len(), 120);
        let unique: std::collections::BTreeSet<_> = perms.iter().collect();
        assert_eq!(unique.len(), 120);
    }
}
