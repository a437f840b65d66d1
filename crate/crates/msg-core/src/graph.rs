//! Place+object graph model.
//!
//! A scene is represented by place nodes (one per image, identified by their
//! position in the scene's image list), object nodes (one per physical object,
//! merged across views), undirected place-place edges between images taken at
//! the same location, and place-object edges linking each image to the objects
//! visible in it. Object-object edges are not modeled.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of an image in the ordered image list of a scene. Place ids of a
/// graph are exactly `0..num_places`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlaceId(pub u32);

/// Identity of a physical object, stable across views. Within one graph the
/// id is unique; the object's column in the adjacency is its ordinal position
/// in the `objects` list, not the id value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl PlaceId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ObjectId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PlaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

/// An object node: a single identity for all cross-view appearances of one
/// physical object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: ObjectId,
    #[serde(default)]
    pub label: Option<String>,
}

/// A single invariant violation found while checking raw graph data.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("pp self-edge at place {0}")]
    PpSelfEdge(PlaceId),
    #[error("pp edge ({0}, {1}) not stored canonically (expected smaller index first)")]
    PpNotCanonical(PlaceId, PlaceId),
    #[error("pp edge ({0}, {1}) references a place outside 0..{2}")]
    PpPlaceOutOfRange(PlaceId, PlaceId, usize),
    #[error("po edge ({0}, {1}) references a place outside 0..{2}")]
    PoPlaceOutOfRange(PlaceId, ObjectId, usize),
    #[error("po edge ({0}, {1}) references an unknown object id")]
    PoUnknownObject(PlaceId, ObjectId),
    #[error("duplicate object id {0}")]
    DuplicateObjectId(ObjectId),
    #[error("duplicate pp edge ({0}, {1})")]
    DuplicatePpEdge(PlaceId, PlaceId),
    #[error("duplicate po edge ({0}, {1})")]
    DuplicatePoEdge(PlaceId, ObjectId),
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid graph: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("adjacency place block must be square, got {rows}x{cols}")]
    NonSquarePlaceBlock { rows: usize, cols: usize },
    #[error("asymmetric place adjacency at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("self-edge on place adjacency diagonal at {0}")]
    SelfEdge(usize),
    #[error("adjacency entry at ({0}, {1}) is {2}, expected 0 or 1")]
    NonBinaryEntry(usize, usize, u8),
    #[error("place block has {place_rows} rows but place-object block has {po_rows}")]
    BlockRowMismatch { place_rows: usize, po_rows: usize },
    #[error("{given} labels given for {objects} objects")]
    LabelCountMismatch { given: usize, objects: usize },
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Raw, unvalidated graph data. This is the JSON wire form; [`MSGraph`]
/// construction and deserialization go through [`validate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawGraph {
    pub num_places: usize,
    pub objects: Vec<ObjectNode>,
    pub pp_edges: Vec<(PlaceId, PlaceId)>,
    pub po_edges: Vec<(PlaceId, ObjectId)>,
}

/// Checks every graph invariant on raw data and reports all violations found.
pub fn validate(raw: &RawGraph) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for object in &raw.objects {
        if !seen_ids.insert(object.id) {
            violations.push(Violation::DuplicateObjectId(object.id));
        }
    }
    let mut seen_pp = BTreeSet::new();
    for &(i, j) in &raw.pp_edges {
        if i == j {
            violations.push(Violation::PpSelfEdge(i));
            continue;
        }
        if i > j {
            violations.push(Violation::PpNotCanonical(i, j));
            continue;
        }
        if i.index() >= raw.num_places || j.index() >= raw.num_places {
            violations.push(Violation::PpPlaceOutOfRange(i, j, raw.num_places));
            continue;
        }
        if !seen_pp.insert((i, j)) {
            violations.push(Violation::DuplicatePpEdge(i, j));
        }
    }
    let mut seen_po = BTreeSet::new();
    for &(place, object) in &raw.po_edges {
        if place.index() >= raw.num_places {
            violations.push(Violation::PoPlaceOutOfRange(place, object, raw.num_places));
            continue;
        }
        if !seen_ids.contains(&object) {
            violations.push(Violation::PoUnknownObject(place, object));
            continue;
        }
        if !seen_po.insert((place, object)) {
            violations.push(Violation::DuplicatePoEdge(place, object));
        }
    }
    violations
}

/// The place+object graph of one scene. Immutable after construction; every
/// instance satisfies the model invariants (edges reference existing nodes,
/// no pp self-edges, pp edges canonical with the smaller index first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct MSGraph {
    num_places: usize,
    objects: Vec<ObjectNode>,
    pp_edges: BTreeSet<(PlaceId, PlaceId)>,
    po_edges: BTreeSet<(PlaceId, ObjectId)>,
}

impl TryFrom<RawGraph> for MSGraph {
    type Error = GraphError;

    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        let violations = validate(&raw);
        if !violations.is_empty() {
            return Err(GraphError::Invalid(violations));
        }
        Ok(MSGraph {
            num_places: raw.num_places,
            objects: raw.objects,
            pp_edges: raw.pp_edges.into_iter().collect(),
            po_edges: raw.po_edges.into_iter().collect(),
        })
    }
}

impl From<MSGraph> for RawGraph {
    fn from(graph: MSGraph) -> Self {
        RawGraph {
            num_places: graph.num_places,
            objects: graph.objects,
            pp_edges: graph.pp_edges.into_iter().collect(),
            po_edges: graph.po_edges.into_iter().collect(),
        }
    }
}

impl MSGraph {
    /// Builds a graph from parts, normalizing pp edge order to canonical
    /// (smaller index first) before validation.
    pub fn new(
        num_places: usize,
        objects: Vec<ObjectNode>,
        pp_edges: impl IntoIterator<Item = (PlaceId, PlaceId)>,
        po_edges: impl IntoIterator<Item = (PlaceId, ObjectId)>,
    ) -> Result<Self, GraphError> {
        let pp_edges = pp_edges
            .into_iter()
            .map(|(i, j)| if i <= j { (i, j) } else { (j, i) })
            .collect::<BTreeSet<_>>();
        let raw = RawGraph {
            num_places,
            objects,
            pp_edges: pp_edges.into_iter().collect(),
            po_edges: po_edges.into_iter().collect::<BTreeSet<_>>().into_iter().collect(),
        };
        MSGraph::try_from(raw)
    }

    pub fn empty(num_places: usize) -> Self {
        MSGraph {
            num_places,
            objects: Vec::new(),
            pp_edges: BTreeSet::new(),
            po_edges: BTreeSet::new(),
        }
    }

    pub fn num_places(&self) -> usize {
        self.num_places
    }

    pub fn objects(&self) -> &[ObjectNode] {
        &self.objects
    }

    pub fn pp_edges(&self) -> &BTreeSet<(PlaceId, PlaceId)> {
        &self.pp_edges
    }

    pub fn po_edges(&self) -> &BTreeSet<(PlaceId, ObjectId)> {
        &self.po_edges
    }

    pub fn has_pp_edge(&self, a: PlaceId, b: PlaceId) -> bool {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.pp_edges.contains(&key)
    }

    /// Ordinal column of each object id in the adjacency place-object block.
    pub fn object_ordinals(&self) -> BTreeMap<ObjectId, usize> {
        self.objects
            .iter()
            .enumerate()
            .map(|(ordinal, node)| (node.id, ordinal))
            .collect()
    }

    /// Re-checks the invariants. Always empty for a constructed graph; kept
    /// for property tests and debugging.
    pub fn check(&self) -> Vec<Violation> {
        validate(&RawGraph::from(self.clone()))
    }
}

/// Binary adjacency views of a graph: the symmetric place-place block and the
/// place-object block. The object-object block is identically zero and the
/// object-place block is the transpose of the place-object block, so neither
/// is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyBlocks {
    /// `|P| x |P|`, symmetric, zero diagonal.
    pub app: DMatrix<u8>,
    /// `|P| x |O|`; column k corresponds to the object at ordinal k.
    pub apo: DMatrix<u8>,
}

/// Builds the adjacency blocks of a graph.
pub fn to_adjacency(graph: &MSGraph) -> AdjacencyBlocks {
    let num_places = graph.num_places();
    let ordinals = graph.object_ordinals();
    let mut app = DMatrix::zeros(num_places, num_places);
    for &(i, j) in graph.pp_edges() {
        app[(i.index(), j.index())] = 1;
        app[(j.index(), i.index())] = 1;
    }
    let mut apo = DMatrix::zeros(num_places, graph.objects().len());
    for &(place, object) in graph.po_edges() {
        apo[(place.index(), ordinals[&object])] = 1;
    }
    AdjacencyBlocks { app, apo }
}

/// Rebuilds a graph from adjacency blocks. Object ids are assigned by column
/// ordinal; `labels`, when given, must have one entry per column.
pub fn from_adjacency(
    blocks: &AdjacencyBlocks,
    labels: Option<&[Option<String>]>,
) -> Result<MSGraph, GraphError> {
    let app = &blocks.app;
    let apo = &blocks.apo;
    if app.nrows() != app.ncols() {
        return Err(GraphError::NonSquarePlaceBlock {
            rows: app.nrows(),
            cols: app.ncols(),
        });
    }
    if app.nrows() != apo.nrows() {
        return Err(GraphError::BlockRowMismatch {
            place_rows: app.nrows(),
            po_rows: apo.nrows(),
        });
    }
    for (index, &value) in app.iter().enumerate() {
        if value > 1 {
            return Err(GraphError::NonBinaryEntry(
                index % app.nrows(),
                index / app.nrows(),
                value,
            ));
        }
    }
    for (index, &value) in apo.iter().enumerate() {
        if value > 1 {
            return Err(GraphError::NonBinaryEntry(
                index % apo.nrows(),
                index / apo.nrows(),
                value,
            ));
        }
    }
    let num_places = app.nrows();
    for i in 0..num_places {
        if app[(i, i)] != 0 {
            return Err(GraphError::SelfEdge(i));
        }
        for j in (i + 1)..num_places {
            if app[(i, j)] != app[(j, i)] {
                return Err(GraphError::Asymmetric(i, j));
            }
        }
    }
    let num_objects = apo.ncols();
    if let Some(labels) = labels {
        if labels.len() != num_objects {
            return Err(GraphError::LabelCountMismatch {
                given: labels.len(),
                objects: num_objects,
            });
        }
    }
    let objects = (0..num_objects)
        .map(|k| ObjectNode {
            id: ObjectId(k as u32),
            label: labels.and_then(|l| l[k].clone()),
        })
        .collect();
    let mut pp_edges = Vec::new();
    for i in 0..num_places {
        for j in (i + 1)..num_places {
            if app[(i, j)] == 1 {
                pp_edges.push((PlaceId(i as u32), PlaceId(j as u32)));
            }
        }
    }
    let mut po_edges = Vec::new();
    for i in 0..num_places {
        for k in 0..num_objects {
            if apo[(i, k)] == 1 {
                po_edges.push((PlaceId(i as u32), ObjectId(k as u32)));
            }
        }
    }
    MSGraph::new(num_places, objects, pp_edges, po_edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn place(i: u32) -> PlaceId {
        PlaceId(i)
    }

    fn object(k: u32) -> ObjectId {
        ObjectId(k)
    }

    fn nodes(n: u32) -> Vec<ObjectNode> {
        (0..n).map(|k| ObjectNode { id: object(k), label: None }).collect()
    }

    #[test]
    fn adjacency_of_edgeless_graph_is_zero() {
        let graph = MSGraph::new(3, vec![], [], []).unwrap();
        let blocks = to_adjacency(&graph);
        assert_eq!(blocks.app, DMatrix::zeros(3, 3));
        assert_eq!(blocks.apo.shape(), (3, 0));
    }

    #[test]
    fn pp_edge_is_mirrored_in_adjacency() {
        let graph = MSGraph::new(3, vec![], [(place(0), place(1))], []).unwrap();
        let blocks = to_adjacency(&graph);
        assert_eq!(blocks.app[(0, 1)], 1);
        assert_eq!(blocks.app[(1, 0)], 1);
        assert_eq!(blocks.app.iter().map(|&v| v as usize).sum::<usize>(), 2);
    }

    #[test]
    fn po_edge_sets_single_entry() {
        let graph = MSGraph::new(3, nodes(1), [], [(place(2), object(0))]).unwrap();
        let blocks = to_adjacency(&graph);
        assert_eq!(blocks.apo.column(0).iter().copied().collect::<Vec<_>>(), vec![0, 0, 1]);
    }

    #[test]
    fn adjacency_round_trip() {
        let graph = MSGraph::new(
            4,
            vec![
                ObjectNode { id: object(0), label: Some("chair".into()) },
                ObjectNode { id: object(1), label: None },
            ],
            [(place(0), place(1)), (place(1), place(3))],
            [(place(0), object(0)), (place(2), object(1))],
        )
        .unwrap();
        let labels: Vec<_> = graph.objects().iter().map(|o| o.label.clone()).collect();
        let rebuilt = from_adjacency(&to_adjacency(&graph), Some(&labels)).unwrap();
        assert_eq!(rebuilt, graph);
    }

    #[test]
    fn from_adjacency_rejects_self_edge() {
        let mut app = DMatrix::zeros(2, 2);
        app[(0, 0)] = 1;
        let blocks = AdjacencyBlocks { app, apo: DMatrix::zeros(2, 0) };
        let err = from_adjacency(&blocks, None).unwrap_err();
        assert!(err.to_string().contains("self-edge"), "{err}");
    }

    #[test]
    fn from_adjacency_rejects_asymmetry() {
        let mut app = DMatrix::zeros(2, 2);
        app[(0, 1)] = 1;
        let blocks = AdjacencyBlocks { app, apo: DMatrix::zeros(2, 0) };
        let err = from_adjacency(&blocks, None).unwrap_err();
        assert!(err.to_string().contains("asymmetric"), "{err}");
    }

    #[test]
    fn validate_flags_unknown_object_and_duplicate_id() {
        let raw = RawGraph {
            num_places: 2,
            objects: vec![
                ObjectNode { id: object(0), label: None },
                ObjectNode { id: object(0), label: None },
            ],
            pp_edges: vec![],
            po_edges: vec![(place(0), object(5))],
        };
        let violations = validate(&raw);
        assert_eq!(violations.len(), 2);
        assert!(violations.contains(&Violation::DuplicateObjectId(object(0))));
        assert!(violations.contains(&Violation::PoUnknownObject(place(0), object(5))));
    }

    #[test]
    fn valid_graph_has_no_violations() {
        let graph = MSGraph::new(2, nodes(1), [(place(0), place(1))], [(place(0), object(0))]).unwrap();
        assert!(graph.check().is_empty());
    }

    #[test]
    fn json_round_trip_and_rejection() {
        let graph = MSGraph::new(2, nodes(1), [(place(0), place(1))], [(place(1), object(0))]).unwrap();
        let text = serde_json::to_string(&graph).unwrap();
        let parsed: MSGraph = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, graph);

        let bad = r#"{"num_places": 2, "objects": [], "pp_edges": [[0, 0]], "po_edges": []}"#;
        let err = serde_json::from_str::<MSGraph>(bad).unwrap_err();
        assert!(err.to_string().contains("self-edge"), "{err}");
    }

    #[test]
    fn new_normalizes_pp_edge_order() {
        let graph = MSGraph::new(3, vec![], [(place(2), place(0))], []).unwrap();
        assert!(graph.has_pp_edge(place(0), place(2)));
        assert_eq!(graph.pp_edges().iter().next(), Some(&(place(0), place(2))));
    }
}
