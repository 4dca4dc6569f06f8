//! Structural checks on exported documents. Not a schema validator: it
//! covers the invariants the exporter promises.

use std::collections::BTreeSet;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StructureReport {
    pub ok: bool,
    pub problems: Vec<String>,
    pub entities: Vec<String>,
    pub events: Vec<String>,
}

fn named<'a>(doc: &'a roxmltree::Document, tag: &str) -> Vec<roxmltree::Node<'a, 'a>> {
    doc.descendants().filter(|n| n.has_tag_name(tag)).collect()
}

pub fn verify_structure(xml: &str) -> StructureReport {
    let mut problems = Vec::new();
    let doc = match roxmltree::Document::parse(xml) {
        Ok(doc) => doc,
        Err(e) => {
            return StructureReport {
                ok: false,
                problems: vec![format!("not well-formed: {e}")],
                entities: Vec::new(),
                events: Vec::new(),
            }
        }
    };
    let root = doc.root_element();
    if !root.has_tag_name("OpenSCENARIO") {
        problems.push(format!("root element is {}", root.tag_name().name()));
    }
    for tag in ["FileHeader", "RoadNetwork", "Entities", "Storyboard"] {
        let count = root.children().filter(|n| n.has_tag_name(tag)).count();
        if count != 1 {
            problems.push(format!("expected one {tag}, found {count}"));
        }
    }
    if let Some(storyboard) = root.children().find(|n| n.has_tag_name("Storyboard")) {
        for tag in ["Init", "StopTrigger"] {
            if !storyboard.children().any(|n| n.has_tag_name(tag)) {
                problems.push(format!("Storyboard lacks {tag}"));
            }
        }
    }

    let mut unique = |tag: &str, what: &str| {
        let mut seen = BTreeSet::new();
        let mut names = Vec::new();
        for node in named(&doc, tag) {
            let name = node.attribute("name").unwrap_or_default().to_string();
            if !seen.insert(name.clone()) {
                problems.push(format!("duplicate {what} '{name}'"));
            }
            names.push(name);
        }
        names
    };
    let entities = unique("ScenarioObject", "entity");
    let events = unique("Event", "event");

    for node in doc.descendants().filter(|n| n.is_element()) {
        if let Some(r) = node.attribute("entityRef") {
            if !entities.iter().any(|e| e == r) {
                problems.push(format!(
                    "{} references unknown entity '{r}'",
                    node.tag_name().name()
                ));
            }
        }
        if let Some(r) = node.attribute("storyboardElementRef") {
            if node.attribute("storyboardElementType") == Some("event")
                && !events.iter().any(|e| e == r)
            {
                problems.push(format!("condition references unknown event '{r}'"));
            }
        }
    }
    StructureReport {
        ok: problems.is_empty(),
        problems,
        entities,
        events,
    }
}
