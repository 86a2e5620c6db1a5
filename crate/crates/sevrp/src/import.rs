//! Importer for the public benchmark instances (VRP-REP style XML).
//!
//! The files describe a depot (`type="0"`), customers (`type="1"`) and
//! charging stations (`type="2"`) with Cartesian coordinates, one charging
//! curve per station technology, and a vehicle profile carrying the
//! consumption rate and battery capacity. Only the XML subset those files use
//! is parsed here: elements, attributes and text, no namespaces or CDATA.
//!
//! The import can override the battery capacity; the charging curves are then
//! rescaled on both axes by the capacity ratio, which keeps every charging
//! power (kW) identical while stretching the curve to the new capacity.

use std::collections::BTreeMap;

use crate::charging::ChargingFunction;
use crate::instance::{Instance, Node, NodeKind, PolicyParams};
use crate::{Error, Result};

/// Knobs applied while mapping a benchmark file onto an [`Instance`].
#[derive(Debug, Clone)]
pub struct ImportOptions {
    /// Replace the file's battery capacity (kWh); curves are rescaled.
    pub q_max: Option<f64>,
    /// Replace the file's speed factor (length units per time unit).
    pub speed: Option<f64>,
    /// Detour threshold as a fraction of the battery capacity.
    pub q_threshold_frac: f64,
    /// Post-detour target as a fraction of the battery capacity.
    pub q_goal_frac: f64,
}

impl Default for ImportOptions {
    fn default() -> Self {
        ImportOptions {
            q_max: Some(24.0),
            speed: None,
            q_threshold_frac: 0.3,
            q_goal_frac: 0.8,
        }
    }
}

/// Parses benchmark XML text into a validated instance.
pub fn parse_benchmark(text: &str, options: &ImportOptions) -> Result<Instance> {
    let root = parse_xml(text)?;
    if root.name != "instance" {
        return Err(Error::Parse(format!(
            "expected <instance> root, got <{}>",
            root.name
        )));
    }

    let network = root
        .child("network")
        .ok_or_else(|| Error::Parse("missing <network>".to_string()))?;
    let nodes_el = network
        .child("nodes")
        .ok_or_else(|| Error::Parse("missing <network><nodes>".to_string()))?;

    let mut nodes = Vec::new();
    for el in nodes_el.children.iter().filter(|e| e.name == "node") {
        let id: usize = el
            .attr("id")
            .ok_or_else(|| Error::Parse("<node> without id".to_string()))?
            .parse()
            .map_err(|_| Error::Parse("non-integer node id".to_string()))?;
        let kind = match el.attr("type") {
            Some("0") => NodeKind::Depot,
            Some("1") => NodeKind::Customer,
            Some("2") => NodeKind::Station,
            other => {
                return Err(Error::Parse(format!("node {id}: unknown type {other:?}")));
            }
        };
        let x = el
            .child_f64("cx")
            .ok_or_else(|| Error::Parse(format!("node {id}: missing <cx>")))?;
        let y = el
            .child_f64("cy")
            .ok_or_else(|| Error::Parse(format!("node {id}: missing <cy>")))?;
        let technology = el
            .child("custom")
            .and_then(|c| c.child_text("cs_type"))
            .or_else(|| el.child_text("cs_type"))
            .map(str::to_string);
        if kind == NodeKind::Station && technology.is_none() {
            return Err(Error::Parse(format!("station node {id} has no cs_type")));
        }
        nodes.push(Node {
            id,
            kind,
            x,
            y,
            technology,
        });
    }
    nodes.sort_by_key(|nd| nd.id);
    for (idx, nd) in nodes.iter().enumerate() {
        if nd.id != idx {
            return Err(Error::Parse(format!(
                "node ids must be contiguous from 0, found gap at id {}",
                nd.id
            )));
        }
    }

    let profile = root
        .child("fleet")
        .and_then(|f| f.child("vehicle_profile"))
        .ok_or_else(|| Error::Parse("missing <fleet><vehicle_profile>".to_string()))?;
    let custom = profile
        .child("custom")
        .ok_or_else(|| Error::Parse("missing <vehicle_profile><custom>".to_string()))?;

    let native_capacity = custom
        .child_f64("battery_capacity")
        .ok_or_else(|| Error::Parse("missing <battery_capacity>".to_string()))?;
    let consumption_rate = custom
        .child_f64("consumption_rate")
        .ok_or_else(|| Error::Parse("missing <consumption_rate>".to_string()))?;
    let speed = options
        .speed
        .or_else(|| profile.child_f64("speed_factor"))
        .unwrap_or(1.0);

    let q_max = options.q_max.unwrap_or(native_capacity);
    let scale = q_max / native_capacity;

    let functions_el = custom
        .child("charging_functions")
        .ok_or_else(|| Error::Parse("missing <charging_functions>".to_string()))?;
    let mut curves = BTreeMap::new();
    for func in functions_el
        .children
        .iter()
        .filter(|e| e.name == "function")
    {
        let tech = func
            .attr("cs_type")
            .ok_or_else(|| Error::Parse("<function> without cs_type".to_string()))?
            .to_string();
        let mut bp = Vec::new();
        for b in func.children.iter().filter(|e| e.name == "breakpoint") {
            let t = b
                .child_f64("charging_time")
                .ok_or_else(|| Error::Parse(format!("{tech}: breakpoint missing charging_time")))?;
            let q = b
                .child_f64("battery_level")
                .ok_or_else(|| Error::Parse(format!("{tech}: breakpoint missing battery_level")))?;
            bp.push((t * scale, q * scale));
        }
        bp.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        curves.insert(tech, ChargingFunction { breakpoints: bp });
    }

    let params = PolicyParams {
        q_max,
        q_threshold: options.q_threshold_frac * q_max,
        q_goal: options.q_goal_frac * q_max,
        consumption_rate,
        speed,
        ..PolicyParams::default()
    };

    Instance::new(nodes, curves, params)
}

// ---------------------------------------------------------------------------
// Minimal XML reader
// ---------------------------------------------------------------------------

#[derive(Debug, Default)]
struct XmlElement {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<XmlElement>,
    text: String,
}

impl XmlElement {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    fn child(&self, name: &str) -> Option<&XmlElement> {
        self.children.iter().find(|c| c.name == name)
    }

    fn child_text(&self, name: &str) -> Option<&str> {
        self.child(name).map(|c| c.text.trim())
    }

    fn child_f64(&self, name: &str) -> Option<f64> {
        self.child_text(name).and_then(|t| t.parse().ok())
    }
}

/// Parses a single-rooted XML document. Supports elements, attributes
/// (single- or double-quoted), text content, comments and declarations.
fn parse_xml(text: &str) -> Result<XmlElement> {
    let bytes = text.as_bytes();
    let mut pos = 0usize;
    let mut stack: Vec<XmlElement> = Vec::new();
    let mut root: Option<XmlElement> = None;

    while pos < bytes.len() {
        match bytes[pos] {
            b'<' => {
                if text[pos..].starts_with("<!--") {
                    pos = text[pos..]
                        .find("-->")
                        .map(|e| pos + e + 3)
                        .ok_or_else(|| Error::Parse("unterminated comment".to_string()))?;
                } else if text[pos..].starts_with("<?") || text[pos..].starts_with("<!") {
                    pos = text[pos..]
                        .find('>')
                        .map(|e| pos + e + 1)
                        .ok_or_else(|| Error::Parse("unterminated declaration".to_string()))?;
                } else if text[pos..].starts_with("</") {
                    let end = text[pos..]
                        .find('>')
                        .map(|e| pos + e)
                        .ok_or_else(|| Error::Parse("unterminated close tag".to_string()))?;
                    let name = text[pos + 2..end].trim();
                    let el = stack
                        .pop()
                        .ok_or_else(|| Error::Parse(format!("stray </{name}>")))?;
                    if el.name != name {
                        return Err(Error::Parse(format!(
                            "mismatched tags: <{}> closed by </{name}>",
                            el.name
                        )));
                    }
                    match stack.last_mut() {
                        Some(parent) => parent.children.push(el),
                        None => root = Some(el),
                    }
                    pos = end + 1;
                } else {
                    let end = text[pos..]
                        .find('>')
                        .map(|e| pos + e)
                        .ok_or_else(|| Error::Parse("unterminated open tag".to_string()))?;
                    let self_closing = bytes[end - 1] == b'/';
                    let inner = &text[pos + 1..if self_closing { end - 1 } else { end }];
                    let el = parse_tag(inner)?;
                    if self_closing {
                        match stack.last_mut() {
                            Some(parent) => parent.children.push(el),
                            None => root = Some(el),
                        }
                    } else {
                        stack.push(el);
                    }
                    pos = end + 1;
                }
            }
            _ => {
                let next = text[pos..]
                    .find('<')
                    .map(|e| pos + e)
                    .unwrap_or(bytes.len());
                if let Some(top) = stack.last_mut() {
                    top.text.push_str(&text[pos..next]);
                }
                pos = next;
            }
        }
    }

    if !stack.is_empty() {
        return Err(Error::Parse(format!(
            "unclosed element <{}>",
            stack.last().unwrap().name
        )));
    }
    root.ok_or_else(|| Error::Parse("empty document".to_string()))
}

fn parse_tag(inner: &str) -> Result<XmlElement> {
    let inner = inner.trim();
    let name_end = inner.find(char::is_whitespace).unwrap_or(inner.len());
    let mut el = XmlElement {
        name: inner[..name_end].to_string(),
        ..Default::default()
    };
    let mut rest = inner[name_end..].trim_start();
    while !rest.is_empty() {
        let eq = rest
            .find('=')
            .ok_or_else(|| Error::Parse(format!("malformed attribute in <{}>", el.name)))?;
        let key = rest[..eq].trim().to_string();
        rest = rest[eq + 1..].trim_start();
        let quote = rest
            .chars()
            .next()
            .filter(|&c| c == '"' || c == '\'')
            .ok_or_else(|| Error::Parse(format!("unquoted attribute {key}")))?;
        let close = rest[1..]
            .find(quote)
            .map(|e| e + 1)
            .ok_or_else(|| Error::Parse(format!("unterminated attribute {key}")))?;
        el.attrs.push((key, rest[1..close].to_string()));
        rest = rest[close + 1..].trim_start();
    }
    Ok(el)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<instance>
  <info><name>sample</name></info>
  <network>
    <nodes>
      <node id="0" type="0"><cx>50.0</cx><cy>40.0</cy></node>
      <node id="1" type="1"><cx>10.0</cx><cy>20.0</cy></node>
      <node id="2" type="1"><cx>60.0</cx><cy>70.0</cy></node>
      <node id="3" type="2">
        <cx>30.0</cx><cy>30.0</cy>
        <custom><cs_type>fast</cs_type></custom>
      </node>
    </nodes>
    <euclidean/>
    <decimals>14</decimals>
  </network>
  <fleet>
    <vehicle_profile type="0">
      <departure_node>0</departure_node>
      <arrival_node>0</arrival_node>
      <speed_factor>1.0</speed_factor>
      <custom>
        <consumption_rate>0.125</consumption_rate>
        <battery_capacity>16.0</battery_capacity>
        <charging_functions>
          <function cs_type="fast">
            <breakpoint><battery_level>0.0</battery_level><charging_time>0.0</charging_time></breakpoint>
            <breakpoint><battery_level>13.6</battery_level><charging_time>0.31</charging_time></breakpoint>
            <breakpoint><battery_level>15.2</battery_level><charging_time>0.39</charging_time></breakpoint>
            <breakpoint><battery_level>16.0</battery_level><charging_time>0.48</charging_time></breakpoint>
          </function>
        </charging_functions>
      </custom>
    </vehicle_profile>
  </fleet>
  <requests>
    <request id="1" node="1"/>
    <request id="2" node="2"/>
  </requests>
</instance>
"#;

    #[test]
    fn imports_nodes_and_curves() {
        let inst = parse_benchmark(SAMPLE, &ImportOptions::default()).unwrap();
        assert_eq!(inst.customers, vec![1, 2]);
        assert_eq!(inst.stations, vec![3]);
        assert_eq!(inst.nodes[0].kind, NodeKind::Depot);
        assert_eq!(inst.nodes[3].technology.as_deref(), Some("fast"));
        assert_eq!(inst.params.consumption_rate, 0.125);
        assert_eq!(inst.params.speed, 1.0);
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn capacity_override_rescales_curves_preserving_power() {
        let inst = parse_benchmark(SAMPLE, &ImportOptions::default()).unwrap();
        assert_eq!(inst.params.q_max, 24.0);
        assert!((inst.params.q_threshold - 7.2).abs() < 1e-12);
        assert!((inst.params.q_goal - 19.2).abs() < 1e-12);
        let cf = &inst.charging_functions["fast"];
        // 1.5x on both axes: the kW of each segment is unchanged
        assert!((cf.q_max() - 24.0).abs() < 1e-12);
        assert!((cf.full_time() - 0.72).abs() < 1e-12);
        let native_rate = 13.6 / 0.31;
        let (c1, a1) = cf.breakpoints[1];
        assert!((a1 / c1 - native_rate).abs() < 1e-9);
    }

    #[test]
    fn native_capacity_kept_when_not_overridden() {
        let opts = ImportOptions {
            q_max: None,
            ..ImportOptions::default()
        };
        let inst = parse_benchmark(SAMPLE, &opts).unwrap();
        assert_eq!(inst.params.q_max, 16.0);
        assert_eq!(inst.charging_functions["fast"].q_max(), 16.0);
    }

    #[test]
    fn xml_reader_handles_comments_and_self_closing() {
        let doc = r#"<a x="1"><!-- note --><b/><c>text</c></a>"#;
        let root = parse_xml(doc).unwrap();
        assert_eq!(root.name, "a");
        assert_eq!(root.attr("x"), Some("1"));
        assert_eq!(root.children.len(), 2);
        assert_eq!(root.child_text("c"), Some("text"));
    }

    #[test]
    fn rejects_mismatched_tags() {
        assert!(parse_xml("<a><b></a></b>").is_err());
        assert!(parse_xml("<a>").is_err());
    }
}
