//! Canonical JSON documents.
//!
//! Object keys are sorted (serde_json's default map is ordered), arrays
//! follow `(layer, position)` or sequence order, and floats use the shortest
//! round-trip representation. The same inputs always produce the same bytes,
//! whether rendered by the CLI or the server.

use serde_json::{json, Value};

use crate::diff::{compare_influence, MergedGraph, TaggedEdge, TaggedQueryResult};
use crate::error::{FlowError, Result};
use crate::graph::{AttentionGraph, Edge, HeadSet, Node};
use crate::influence::{display_influence, InfluenceTable};
use crate::query::QueryResult;
use crate::scalar::Weight;
use crate::store::AttentionExport;

/// Serializes a document as one line with a trailing newline.
pub fn to_canonical(doc: &Value) -> String {
    let mut s = serde_json::to_string(doc).expect("json values always serialize");
    s.push('\n');
    s
}

fn node(n: Node) -> Value {
    json!([n.layer, n.position])
}

fn edge(e: &Edge, heads: &HeadSet) -> Value {
    json!({"layer": e.layer, "from": e.from, "to": e.to, "heads": heads})
}

fn tagged_edge(e: &Edge, t: &TaggedEdge) -> Value {
    let heads: Vec<Value> = t
        .heads
        .iter()
        .map(|(h, p)| json!({"head": h, "provenance": p}))
        .collect();
    json!({"layer": e.layer, "from": e.from, "to": e.to, "provenance": t.provenance, "heads": heads})
}

fn config<T: Weight>(graph: &AttentionGraph<T>) -> Value {
    json!({
        "tau": graph.tau().to_decimal_f64(),
        "root": node(graph.root()),
        "head_filter": graph.head_filter().map(|f| f.to_string()),
    })
}

fn sequence_fields<T: Weight>(graph: &AttentionGraph<T>) -> serde_json::Map<String, Value> {
    let seq = graph.sequence();
    let mut m = serde_json::Map::new();
    m.insert("tokens".into(), json!(seq.tokens()));
    m.insert("cls_index".into(), json!(seq.cls_index()));
    m.insert("sep_indices".into(), json!(seq.sep_indices()));
    m.insert("segment_ids".into(), json!(seq.segment_ids()));
    m.insert("num_layers".into(), json!(graph.num_layers()));
    m.insert("num_heads".into(), json!(graph.num_heads()));
    m
}

fn glyph_data<T: Weight>(graph: &AttentionGraph<T>) -> Result<(Value, Value)> {
    let mut summaries = Vec::new();
    let mut profiles = Vec::new();
    for &n in graph.nodes() {
        if n.layer >= 1 {
            summaries.push(json!({"node": node(n), "counts": graph.head_summary(n)?}));
        }
        if n.layer < graph.root().layer {
            let peaks: Vec<Value> = graph
                .incoming_profile(n)?
                .into_iter()
                .map(|(a, h)| json!([a, h]))
                .collect();
            profiles.push(json!({"node": node(n), "peaks": peaks}));
        }
    }
    Ok((Value::Array(summaries), Value::Array(profiles)))
}

fn influence_layers(table: &InfluenceTable<f64>) -> Result<Value> {
    let mut layers = Vec::new();
    for l in 0..table.top_layer() {
        let scores = table.scores(l)?;
        let display: Vec<u8> = scores.iter().map(display_influence).collect();
        layers.push(json!({
            "layer": l,
            "counts": table.counts(l)?,
            "scores": scores,
            "display": display,
        }));
    }
    Ok(json!({"alpha": table.alpha(), "layers": layers}))
}

/// Full single-model graph view: nodes, edges, head glyph counts, incoming
/// sparkline peaks, and influence for every layer.
pub fn graph_document<T: Weight>(
    export: &AttentionExport<T>,
    graph: &AttentionGraph<T>,
    alpha: f64,
) -> Result<Value> {
    let table = crate::influence::compute_influence(export, graph, alpha)?;
    let (summaries, profiles) = glyph_data(graph)?;
    let mut doc = sequence_fields(graph);
    doc.insert("model_id".into(), json!(graph.model_id()));
    doc.insert("predicted_label".into(), json!(export.predicted_label()));
    doc.insert("config".into(), config(graph));
    doc.insert(
        "nodes".into(),
        Value::Array(graph.nodes().iter().map(|&n| node(n)).collect()),
    );
    doc.insert(
        "edges".into(),
        Value::Array(graph.edges().iter().map(|(e, h)| edge(e, h)).collect()),
    );
    doc.insert("head_summary".into(), summaries);
    doc.insert("incoming_profile".into(), profiles);
    doc.insert("influence".into(), influence_layers(&table)?);
    Ok(Value::Object(doc))
}

/// Merged two-model view with provenance on every node, edge and head.
pub fn merged_document<T: Weight>(
    export_a: &AttentionExport<T>,
    export_b: &AttentionExport<T>,
    merged: &MergedGraph<T>,
    alpha: f64,
) -> Result<Value> {
    let (ga, gb) = (merged.graph_a(), merged.graph_b());
    let table_a = crate::influence::compute_influence(export_a, ga, alpha)?;
    let table_b = crate::influence::compute_influence(export_b, gb, alpha)?;

    let mut models = serde_json::Map::new();
    for (key, export, graph) in [("a", export_a, ga), ("b", export_b, gb)] {
        let (summaries, profiles) = glyph_data(graph)?;
        models.insert(
            key.into(),
            json!({
                "model_id": graph.model_id(),
                "predicted_label": export.predicted_label(),
                "head_summary": summaries,
                "incoming_profile": profiles,
            }),
        );
    }

    let head_provenance = merged
        .nodes()
        .keys()
        .filter(|n| n.layer >= 1)
        .map(|&n| {
            let heads: Vec<Value> = merged
                .head_provenance(n)?
                .iter()
                .map(|(h, p)| json!({"head": h, "provenance": p}))
                .collect();
            Ok(json!({"node": node(n), "heads": heads}))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut layers = Vec::new();
    for l in 0..table_a.top_layer() {
        layers.push(json!({
            "layer": l,
            "a": layer_influence(&table_a, l)?,
            "b": layer_influence(&table_b, l)?,
            "comparison": comparison_entries(&table_a, &table_b, l)?,
        }));
    }

    let mut doc = sequence_fields(ga);
    doc.insert("config".into(), config(ga));
    doc.insert("models".into(), Value::Object(models));
    doc.insert(
        "nodes".into(),
        Value::Array(
            merged
                .nodes()
                .iter()
                .map(|(&n, p)| json!({"node": node(n), "provenance": p}))
                .collect(),
        ),
    );
    doc.insert(
        "edges".into(),
        Value::Array(merged.edges().iter().map(|(e, t)| tagged_edge(e, t)).collect()),
    );
    doc.insert("head_provenance".into(), Value::Array(head_provenance));
    doc.insert("influence".into(), json!({"alpha": alpha, "layers": layers}));
    Ok(Value::Object(doc))
}

fn layer_influence(table: &InfluenceTable<f64>, layer: usize) -> Result<Value> {
    let scores = table.scores(layer)?;
    let display: Vec<u8> = scores.iter().map(display_influence).collect();
    Ok(json!({"counts": table.counts(layer)?, "scores": scores, "display": display}))
}

fn comparison_entries(
    table_a: &InfluenceTable<f64>,
    table_b: &InfluenceTable<f64>,
    layer: usize,
) -> Result<Value> {
    Ok(Value::Array(
        compare_influence(table_a, table_b, layer)?
            .into_iter()
            .map(|c| {
                json!({
                    "display_a": c.display_a,
                    "display_b": c.display_b,
                    "shared_circles": c.shared_circles,
                    "extra_circles": c.extra_circles,
                    "extra_owner": c.extra_owner,
                })
            })
            .collect(),
    ))
}

/// Per-token influence at one layer for one model.
pub fn influence_document<T: Weight>(
    graph: &AttentionGraph<T>,
    table: &InfluenceTable<f64>,
    layer: usize,
) -> Result<Value> {
    let counts = table.counts(layer)?;
    let scores = table.scores(layer)?;
    let tokens: Vec<Value> = table
        .sequence()
        .tokens()
        .iter()
        .enumerate()
        .map(|(w, tok)| {
            json!({
                "position": w,
                "token": tok,
                "count": counts[w],
                "score": scores[w],
                "display": display_influence(&scores[w]),
            })
        })
        .collect();
    Ok(json!({
        "model_id": graph.model_id(),
        "layer": layer,
        "alpha": table.alpha(),
        "config": config(graph),
        "tokens": tokens,
    }))
}

/// Per-token circle comparison at one layer for a two-model session.
pub fn comparison_document<T: Weight>(
    merged: &MergedGraph<T>,
    table_a: &InfluenceTable<f64>,
    table_b: &InfluenceTable<f64>,
    layer: usize,
) -> Result<Value> {
    let (ca, sa) = (table_a.counts(layer)?, table_a.scores(layer)?);
    let (cb, sb) = (table_b.counts(layer)?, table_b.scores(layer)?);
    let comparisons = compare_influence(table_a, table_b, layer)?;
    let tokens: Vec<Value> = table_a
        .sequence()
        .tokens()
        .iter()
        .enumerate()
        .map(|(w, tok)| {
            let c = &comparisons[w];
            json!({
                "position": w,
                "token": tok,
                "a": {"count": ca[w], "score": sa[w], "display": c.display_a},
                "b": {"count": cb[w], "score": sb[w], "display": c.display_b},
                "shared_circles": c.shared_circles,
                "extra_circles": c.extra_circles,
                "extra_owner": c.extra_owner,
            })
        })
        .collect();
    Ok(json!({
        "model_ids": {"a": merged.graph_a().model_id(), "b": merged.graph_b().model_id()},
        "layer": layer,
        "alpha": table_a.alpha(),
        "config": config(merged.graph_a()),
        "tokens": tokens,
    }))
}

pub fn query_document(result: &QueryResult) -> Value {
    json!({
        "nodes": result.nodes.iter().map(|&n| node(n)).collect::<Vec<_>>(),
        "edges": result.edges.iter().map(|(e, h)| edge(e, h)).collect::<Vec<_>>(),
    })
}

pub fn tagged_query_document(result: &TaggedQueryResult) -> Value {
    json!({
        "nodes": result
            .nodes
            .iter()
            .map(|(&n, p)| json!({"node": node(n), "provenance": p}))
            .collect::<Vec<_>>(),
        "edges": result.edges.iter().map(|(e, t)| tagged_edge(e, t)).collect::<Vec<_>>(),
    })
}

/// Summary of a successfully validated export.
pub fn validation_document<T: Weight>(export: &AttentionExport<T>) -> Value {
    let seq = export.sequence();
    json!({
        "valid": true,
        "model_id": export.model_id(),
        "num_layers": export.num_layers(),
        "num_heads": export.num_heads(),
        "seq_len": export.seq_len(),
        "tokens": seq.tokens(),
        "cls_index": seq.cls_index(),
        "sep_indices": seq.sep_indices(),
        "segment_ids": seq.segment_ids(),
        "predicted_label": export.predicted_label(),
        "task": export.task(),
    })
}

/// Machine-readable error body.
pub fn error_document(err: &FlowError) -> Value {
    let mut body = serde_json::Map::new();
    body.insert("code".into(), json!(err.code()));
    body.insert("message".into(), json!(err.to_string()));
    match err {
        FlowError::NodeNotInGraph(n) | FlowError::RootOutOfRange(n) => {
            body.insert("node".into(), node(*n));
        }
        FlowError::HeadNotPresent { node: n, head } => {
            body.insert("node".into(), node(*n));
            body.insert("head".into(), json!(head));
        }
        FlowError::NonStochasticRow {
            matrix, head, row, ..
        } => {
            body.insert("location".into(), json!({"matrix": matrix, "head": head, "row": row}));
        }
        _ => {}
    }
    json!({"error": Value::Object(body)})
}
