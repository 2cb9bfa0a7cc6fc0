use std::fmt;

use serde::{Deserialize, Serialize};

use super::EncodingError;
use crate::corpus::EntityClass;

pub type TagId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tag {
    Outside,
    Begin(EntityClass),
    Inside(EntityClass),
}

impl Tag {
    pub fn class(self) -> Option<EntityClass> {
        match self {
            Tag::Outside => None,
            Tag::Begin(c) | Tag::Inside(c) => Some(c),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(c) => write!(f, "B-{c}"),
            Tag::Inside(c) => write!(f, "I-{c}"),
        }
    }
}

impl std::str::FromStr for Tag {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EncodingError::UnknownTag(s.to_string());
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let (prefix, class) = s.split_once('-').ok_or_else(bad)?;
        let class: EntityClass = class.parse().map_err(|_| bad())?;
        match prefix {
            "B" => Ok(Tag::Begin(class)),
            "I" => Ok(Tag::Inside(class)),
            _ => Err(bad()),
        }
    }
}

/// Closed tag vocabulary: `O`, then `B-X`, `I-X` for each class in
/// lexicographic class order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<EntityClass>", into = "Vec<EntityClass>")]
pub struct TagSet {
    classes: Vec<EntityClass>,
    tags: Vec<Tag>,
}

impl TryFrom<Vec<EntityClass>> for TagSet {
    type Error = EncodingError;

    fn try_from(classes: Vec<EntityClass>) -> Result<Self, Self::Error> {
        Ok(TagSet::new(classes))
    }
}

impl From<TagSet> for Vec<EntityClass> {
    fn from(t: TagSet) -> Self {
        t.classes
    }
}

impl Default for TagSet {
    fn default() -> Self {
        TagSet::full()
    }
}

impl TagSet {
    pub fn new(mut classes: Vec<EntityClass>) -> Self {
        classes.sort_by_key(|c| c.name());
        classes.dedup();
        let mut tags = Vec::with_capacity(2 * classes.len() + 1);
        tags.push(Tag::Outside);
        for &c in &classes {
            tags.push(Tag::Begin(c));
            tags.push(Tag::Inside(c));
        }
        TagSet { classes, tags }
    }

    /// All 24 classes, 49 tags.
    pub fn full() -> Self {
        TagSet::new(EntityClass::ALL.to_vec())
    }

    pub fn classes(&self) -> &[EntityClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tag(&self, id: TagId) -> Tag {
        self.tags[id]
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn outside(&self) -> TagId {
        0
    }

    pub fn id(&self, tag: Tag) -> Option<TagId> {
        let pos = |c: EntityClass| self.classes.binary_search_by_key(&c.name(), |x| x.name()).ok();
        match tag {
            Tag::Outside => Some(0),
            Tag::Begin(c) => pos(c).map(|i| 1 + 2 * i),
            Tag::Inside(c) => pos(c).map(|i| 2 + 2 * i),
        }
    }

    pub fn id_of(&self, name: &str) -> Result<TagId, EncodingError> {
        let tag: Tag = name.parse()?;
        self.id(tag)
            .ok_or_else(|| EncodingError::UnknownTag(name.to_string()))
    }

    pub fn name(&self, id: TagId) -> String {
        self.tags[id].to_string()
    }

    /// Index of the virtual start state in a transition mask.
    pub fn start_state(&self) -> usize {
        self.len()
    }

    /// Index of the virtual end state in a transition mask.
    pub fn end_state(&self) -> usize {
        self.len() + 1
    }

    /// One tag name per line, in canonical order.
    pub fn vocabulary_file(&self) -> String {
        self.tags.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn from_vocabulary_file(contents: &str) -> Result<Self, EncodingError> {
        let tags: Vec<Tag> = contents
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse())
            .collect::<Result<_, _>>()?;
        let classes: Vec<EntityClass> = tags
            .iter()
            .filter_map(|t| match t {
                Tag::Begin(c) => Some(*c),
                _ => None,
            })
            .collect();
        let set = TagSet::new(classes);
        if set.tags != tags {
            return Err(EncodingError::NonCanonicalVocabulary);
        }
        Ok(set)
    }
}

/// Allowed tag bigrams over the tags plus virtual START and END states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionMask {
    size: usize,
    allowed: Vec<bool>,
}

impl TransitionMask {
    pub fn num_tags(&self) -> usize {
        self.size - 2
    }

    pub fn start(&self) -> usize {
        self.size - 2
    }

    pub fn end(&self) -> usize {
        self.size - 1
    }

    pub fn allowed(&self, from: usize, to: usize) -> bool {
        self.allowed[from * self.size + to]
    }

    /// Mask permitting every transition among real tags and from START / to END.
    pub fn permissive(num_tags: usize) -> Self {
        let size = num_tags + 2;
        let mut allowed = vec![false; size * size];
        for from in 0..=num_tags {
            for to in 0..num_tags {
                allowed[from * size + to] = true;
            }
        }
        for from in 0..num_tags {
            allowed[from * size + size - 1] = true;
        }
        TransitionMask { size, allowed }
    }
}

/// IOB2 transition constraints: `I-Y` may only follow `B-Y` or `I-Y`, never
/// START. Every tag may precede END; START may not go directly to END and
/// nothing enters START or leaves END.
pub fn build_transition_constraints(tag_set: &TagSet) -> TransitionMask {
    let n = tag_set.len();
    let size = n + 2;
    let mut allowed = vec![false; size * size];
    for to in 0..n {
        let to_tag = tag_set.tag(to);
        for from in 0..=n {
            let ok = match to_tag {
                Tag::Inside(y) => {
                    from < n
                        && matches!(tag_set.tag(from), Tag::Begin(c) | Tag::Inside(c) if c == y)
                }
                _ => true,
            };
            allowed[from * size + to] = ok;
        }
    }
    for from in 0..n {
        allowed[from * size + n + 1] = true;
    }
    TransitionMask { size, allowed }
}
