//! Layer export as GraphML or CSV edge lists, plus the chord table.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, BytesText, Event};
use quick_xml::{Reader, Writer};

use crate::error::ExportError;
use crate::metrics::{ChordRow, Usernames};
use crate::model::{Layer, LayerKind, UserEdge, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExportFormat {
    GraphMl,
    Csv,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::GraphMl => "graphml",
            ExportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "graphml" => Ok(ExportFormat::GraphMl),
            "csv" => Ok(ExportFormat::Csv),
            _ => Err(ExportError::UnknownFormat(s.to_string())),
        }
    }
}

pub fn write_layer<W: Write>(
    layer: &Layer,
    names: &Usernames,
    format: ExportFormat,
    out: W,
) -> Result<(), ExportError> {
    match format {
        ExportFormat::GraphMl => write_graphml(layer, names, out),
        ExportFormat::Csv => write_edge_csv(layer, out),
    }
}

fn xml_err(e: impl std::fmt::Display) -> ExportError {
    ExportError::Xml(e.to_string())
}

fn data<W: Write>(w: &mut Writer<W>, key: &str, value: &str) -> Result<(), ExportError> {
    w.write_event(Event::Start(BytesStart::new("data").with_attributes([("key", key)]))).map_err(xml_err)?;
    w.write_event(Event::Text(BytesText::new(value))).map_err(xml_err)?;
    w.write_event(Event::End(BytesEnd::new("data"))).map_err(xml_err)
}

pub fn write_graphml<W: Write>(layer: &Layer, names: &Usernames, out: W) -> Result<(), ExportError> {
    let mut w = Writer::new_with_indent(out, b' ', 2);
    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None))).map_err(xml_err)?;
    w.write_event(Event::Start(
        BytesStart::new("graphml").with_attributes([("xmlns", "http://graphml.graphdrawing.org/xmlns")]),
    ))
    .map_err(xml_err)?;
    for (id, target, name, ty) in [
        ("username", "node", "username", "string"),
        ("weight", "edge", "weight", "long"),
        ("min_delta_t", "edge", "min_delta_t", "long"),
    ] {
        w.write_event(Event::Empty(BytesStart::new("key").with_attributes([
            ("id", id),
            ("for", target),
            ("attr.name", name),
            ("attr.type", ty),
        ])))
        .map_err(xml_err)?;
    }
    w.write_event(Event::Start(
        BytesStart::new("graph").with_attributes([("id", layer.kind().abbrev()), ("edgedefault", "undirected")]),
    ))
    .map_err(xml_err)?;
    for node in layer.nodes() {
        w.write_event(Event::Start(BytesStart::new("node").with_attributes([("id", &**node)]))).map_err(xml_err)?;
        data(&mut w, "username", names.get(node))?;
        w.write_event(Event::End(BytesEnd::new("node"))).map_err(xml_err)?;
    }
    for (i, e) in layer.edges().iter().enumerate() {
        let id = format!("e{i}");
        w.write_event(Event::Start(BytesStart::new("edge").with_attributes([
            ("id", id.as_str()),
            ("source", &*e.user_a),
            ("target", &*e.user_b),
        ])))
        .map_err(xml_err)?;
        data(&mut w, "weight", &e.weight.to_string())?;
        data(&mut w, "min_delta_t", &e.min_delta_t.to_string())?;
        w.write_event(Event::End(BytesEnd::new("edge"))).map_err(xml_err)?;
    }
    w.write_event(Event::End(BytesEnd::new("graph"))).map_err(xml_err)?;
    w.write_event(Event::End(BytesEnd::new("graphml"))).map_err(xml_err)?;
    w.into_inner().write_all(b"\n")?;
    Ok(())
}

/// A layer read back from GraphML. Edges carry no evidence.
#[derive(Debug, Clone)]
pub struct ImportedGraph {
    pub layer: Layer,
    pub usernames: BTreeMap<UserId, String>,
}

fn attr(e: &BytesStart, name: &str) -> Result<Option<String>, ExportError> {
    for a in e.attributes() {
        let a = a.map_err(xml_err)?;
        if a.key.as_ref() == name.as_bytes() {
            return Ok(Some(a.unescape_value().map_err(xml_err)?.into_owned()));
        }
    }
    Ok(None)
}

fn required(e: &BytesStart, name: &str) -> Result<String, ExportError> {
    attr(e, name)?.ok_or_else(|| {
        ExportError::Malformed(format!("<{}> without {name}", String::from_utf8_lossy(e.name().as_ref())))
    })
}

#[derive(Default)]
struct PendingEdge {
    source: String,
    target: String,
    weight: Option<u64>,
    min_delta_t: Option<u64>,
}

pub fn read_graphml<R: BufRead>(input: R) -> Result<ImportedGraph, ExportError> {
    let mut reader = Reader::from_reader(input);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut kind: Option<LayerKind> = None;
    let mut usernames = BTreeMap::new();
    let mut edges = Vec::new();
    let mut node: Option<String> = None;
    let mut edge: Option<PendingEdge> = None;
    let mut key: Option<String> = None;
    loop {
        let ev = reader.read_event_into(&mut buf).map_err(xml_err)?;
        match ev {
            Event::Eof => break,
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(ev, Event::Empty(_));
                match e.name().as_ref() {
                    b"graph" => {
                        let id = required(e, "id")?;
                        kind = Some(id.parse().map_err(ExportError::Model)?);
                    }
                    b"node" => {
                        let id = required(e, "id")?;
                        if !empty {
                            node = Some(id);
                        }
                    }
                    b"edge" => {
                        let pe = PendingEdge {
                            source: required(e, "source")?,
                            target: required(e, "target")?,
                            ..Default::default()
                        };
                        if empty {
                            edges.push(pe);
                        } else {
                            edge = Some(pe);
                        }
                    }
                    b"data" => key = Some(required(e, "key")?),
                    _ => {}
                }
            }
            Event::Text(t) => {
                let text = t.unescape().map_err(xml_err)?.into_owned();
                let number = || text.parse::<u64>().map_err(|_| ExportError::Malformed(format!("bad number {text:?}")));
                match (key.as_deref(), &node, &mut edge) {
                    (Some("username"), Some(n), _) => {
                        usernames.insert(UserId::from(n.as_str()), text.clone());
                    }
                    (Some("weight"), _, Some(pe)) => pe.weight = Some(number()?),
                    (Some("min_delta_t"), _, Some(pe)) => pe.min_delta_t = Some(number()?),
                    _ => {}
                }
            }
            Event::End(e) => match e.name().as_ref() {
                b"data" => key = None,
                b"node" => node = None,
                b"edge" => edges.extend(edge.take()),
                _ => {}
            },
            _ => {}
        }
        buf.clear();
    }
    let kind = kind.ok_or_else(|| ExportError::Malformed("no <graph> element".into()))?;
    let edges = edges
        .into_iter()
        .map(|pe| {
            let w = pe.weight.ok_or_else(|| ExportError::Malformed("edge without weight".into()))?;
            UserEdge::without_evidence(pe.source.into(), pe.target.into(), w, pe.min_delta_t.unwrap_or(0))
                .map_err(ExportError::Model)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ImportedGraph { layer: Layer::from_edges(kind, edges)?, usernames })
}

pub fn write_edge_csv<W: Write>(layer: &Layer, out: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_a", "user_b", "weight", "min_delta_t"])?;
    for e in layer.edges() {
        w.write_record([&*e.user_a, &*e.user_b, &e.weight.to_string(), &e.min_delta_t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_edge_csv<R: std::io::Read>(kind: LayerKind, input: R) -> Result<Layer, ExportError> {
    let mut r = csv::Reader::from_reader(input);
    let mut edges = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(ExportError::Malformed(format!("expected 4 columns, got {}", rec.len())));
        }
        let num =
            |i: usize| rec[i].parse::<u64>().map_err(|_| ExportError::Malformed(format!("bad number {:?}", &rec[i])));
        edges.push(UserEdge::without_evidence(rec[0].into(), rec[1].into(), num(2)?, num(3)?)?);
    }
    Ok(Layer::from_edges(kind, edges)?)
}

pub fn write_chord_csv<W: Write>(rows: &[ChordRow], out: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["source_layer", "target_layer", "node_overlap", "edge_overlap"])?;
    for r in rows {
        w.write_record([
            r.source_layer.as_str(),
            r.target_layer.as_str(),
            &r.node_overlap.to_string(),
            &r.edge_overlap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer() -> Layer {
        let e = |a: &str, b: &str, w, t| UserEdge::without_evidence(a.into(), b.into(), w, t).unwrap();
        Layer::from_edges(LayerKind::MusicId, vec![e("u1", "u2", 3, 40), e("u2", "u<3>", 1, 0)]).unwrap()
    }

    #[test]
    fn graphml_round_trip() {
        let mut names = Usernames::default();
        names.insert("u1".into(), "anna & co".into());
        let mut buf = Vec::new();
        write_graphml(&layer(), &names, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("anna &amp; co"));
        let back = read_graphml(&buf[..]).unwrap();
        assert_eq!(back.layer.kind(), LayerKind::MusicId);
        assert_eq!(back.layer.edges(), layer().edges());
        assert_eq!(back.usernames[&UserId::from("u1")], "anna & co");
        assert_eq!(back.usernames[&UserId::from("u<3>")], "u<3>");
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_edge_csv(&layer(), &mut buf).unwrap();
        assert!(buf.starts_with(b"user_a,user_b,weight,min_delta_t\n"));
        let back = read_edge_csv(LayerKind::MusicId, &buf[..]).unwrap();
        assert_eq!(back.edges(), layer().edges());
    }

    #[test]
    fn unknown_format() {
        assert!(matches!("gexf".parse::<ExportFormat>(), Err(ExportError::UnknownFormat(_))));
        assert_eq!("GraphML".parse::<ExportFormat>().unwrap(), ExportFormat::GraphMl);
    }

    #[test]
    fn malformed_graphml() {
        assert!(read_graphml(&b"<graphml></graphml>"[..]).is_err());
        let bad = br#"<graphml><graph id="MI"><edge source="a" target="a"><data key="weight">1</data></edge></graph></graphml>"#;
        assert!(matches!(read_graphml(&bad[..]), Err(ExportError::Model(_))));
    }

    #[test]
    fn chord_header() {
        let rows =
            vec![ChordRow { source_layer: "HS".into(), target_layer: "VD".into(), node_overlap: 2, edge_overlap: 1 }];
        let mut buf = Vec::new();
        write_chord_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "source_layer,target_layer,node_overlap,edge_overlap\nHS,VD,2,1\n");
    }
}
