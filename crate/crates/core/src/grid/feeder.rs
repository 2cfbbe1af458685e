//! Radial feeder topology and its text file format.
//!
//! One node per line: `node parent v_nom_V r_ohm x_ohm ratio kind [hood home]`.
//! The impedance and ratio describe the branch that feeds the node from its
//! parent; the impedance is referred to the node's own voltage level and
//! `ratio` is the parent-side over node-side rated voltage. The slack row
//! uses `-` as parent. An optional `s_base_va <VA>` line sets the
//! per-unit power base. `#` starts a comment.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_FEEDER: &str = include_str!("../../data/feeder_default.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Slack,
    Primary,
    /// Secondary side of a neighborhood service transformer.
    Service,
    Secondary,
    House,
    Ev,
    /// The EV point served by the co-simulated charger.
    Charger,
}

impl NodeKind {
    pub fn is_end_node(self) -> bool {
        matches!(self, NodeKind::House | NodeKind::Ev | NodeKind::Charger)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Slack => "slack",
            NodeKind::Primary => "primary",
            NodeKind::Service => "service",
            NodeKind::Secondary => "secondary",
            NodeKind::House => "house",
            NodeKind::Ev => "ev",
            NodeKind::Charger => "charger",
        }
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "slack" => NodeKind::Slack,
            "primary" => NodeKind::Primary,
            "service" => NodeKind::Service,
            "secondary" => NodeKind::Secondary,
            "house" => NodeKind::House,
            "ev" => NodeKind::Ev,
            "charger" => NodeKind::Charger,
            other => return Err(format!("unknown node kind `{other}`")),
        })
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A node together with the branch that feeds it.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub parent: Option<String>,
    pub v_nom: f64,
    pub z_ohm: Complex64,
    pub ratio: f64,
    pub kind: NodeKind,
    pub neighborhood: Option<String>,
    pub home: Option<u32>,
}

impl Node {
    pub fn new(id: &str, parent: Option<&str>, v_nom: f64, z_ohm: Complex64, kind: NodeKind) -> Self {
        Self {
            id: id.to_string(),
            parent: parent.map(str::to_string),
            v_nom,
            z_ohm,
            ratio: 1.0,
            kind,
            neighborhood: None,
            home: None,
        }
    }
}

/// A validated radial network. Node 0 is the slack and every node comes
/// after its parent.
#[derive(Debug, Clone)]
pub struct FeederModel {
    nodes: Vec<Node>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Branch impedance in per unit of the node's own base.
    z_pu: Vec<Complex64>,
    /// Off-nominal ratio of the feeding branch (1 for nominal).
    tap: Vec<f64>,
    index: HashMap<String, usize>,
    s_base: f64,
}

impl FeederModel {
    /// Validates the node list and orders it root first.
    pub fn new(nodes: Vec<Node>, s_base: f64) -> Result<Self> {
        if !(s_base > 0.0 && s_base.is_finite()) {
            return Err(Error::Topology(format!("s_base must be positive, got {s_base}")));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::Topology(format!("node `{}` defined twice (non-radial)", n.id)));
            }
            if !(n.v_nom > 0.0 && n.v_nom.is_finite()) {
                return Err(Error::Topology(format!("node `{}`: nominal voltage must be positive", n.id)));
            }
            if !(n.z_ohm.re >= 0.0 && n.z_ohm.im >= 0.0 && n.z_ohm.is_finite()) {
                return Err(Error::Topology(format!("node `{}`: impedance must have R, X >= 0", n.id)));
            }
            if !(n.ratio > 0.0 && n.ratio.is_finite()) {
                return Err(Error::Topology(format!("node `{}`: ratio must be positive", n.id)));
            }
        }
        let slacks: Vec<usize> =
            nodes.iter().enumerate().filter(|(_, n)| n.kind == NodeKind::Slack).map(|(i, _)| i).collect();
        let root = match slacks.as_slice() {
            [r] => *r,
            [] => return Err(Error::Topology("no slack node".into())),
            _ => return Err(Error::Topology(format!("{} slack nodes, expected one", slacks.len()))),
        };
        if nodes[root].parent.is_some() {
            return Err(Error::Topology(format!("slack `{}` must not have a parent", nodes[root].id)));
        }
        let mut parent_of = vec![None; nodes.len()];
        let mut kids = vec![Vec::new(); nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            if i == root {
                continue;
            }
            let p = n.parent.as_ref().ok_or_else(|| Error::Topology(format!("node `{}` has no parent", n.id)))?;
            let &pi = index.get(p).ok_or_else(|| Error::Topology(format!("node `{}`: unknown parent `{p}`", n.id)))?;
            parent_of[i] = Some(pi);
            kids[pi].push(i);
        }
        // Breadth-first from the slack; anything unreached sits on a cycle.
        let mut order = Vec::with_capacity(nodes.len());
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let i = order[head];
            head += 1;
            order.extend(kids[i].iter().copied());
        }
        if order.len() != nodes.len() {
            let stray = (0..nodes.len()).find(|i| !order.contains(i)).unwrap_or(0);
            return Err(Error::Topology(format!("node `{}` has no path to the slack (cycle)", nodes[stray].id)));
        }
        let mut new_pos = vec![0; nodes.len()];
        for (pos, &old) in order.iter().enumerate() {
            new_pos[old] = pos;
        }
        let mut slots: Vec<Option<Node>> = nodes.into_iter().map(Some).collect();
        let nodes: Vec<Node> = order.iter().map(|&old| slots[old].take().expect("visited once")).collect();
        let parent: Vec<Option<usize>> = order.iter().map(|&old| parent_of[old].map(|p| new_pos[p])).collect();
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let mut z_pu = vec![Complex64::new(0.0, 0.0); nodes.len()];
        let mut tap = vec![1.0; nodes.len()];
        for i in 1..nodes.len() {
            let n = &nodes[i];
            let p = parent[i].expect("non-root");
            z_pu[i] = n.z_ohm * s_base / (n.v_nom * n.v_nom);
            tap[i] = n.ratio * n.v_nom / nodes[p].v_nom;
        }
        Ok(Self { nodes, parent, children, z_pu, tap, index, s_base })
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut s_base = 1e6;
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse { path: source.to_string(), line: line_no, reason };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f[0] == "s_base_va" {
                if f.len() != 2 {
                    return Err(err("expected `s_base_va <VA>`".into()));
                }
                s_base = f[1].parse().map_err(|_| err(format!("bad s_base_va `{}`", f[1])))?;
                continue;
            }
            if f.len() != 7 && f.len() != 9 {
                return Err(err(format!("expected 7 or 9 columns, found {}", f.len())));
            }
            let num =
                |s: &str, what: &str| -> Result<f64> { s.parse::<f64>().map_err(|_| err(format!("bad {what} `{s}`"))) };
            let kind: NodeKind = f[6].parse().map_err(err)?;
            let opt = |s: &str| (s != "-").then(|| s.to_string());
            let home = match f.get(8) {
                Some(&"-") | None => None,
                Some(s) => Some(s.parse::<u32>().map_err(|_| err(format!("bad home `{s}`")))?),
            };
            nodes.push(Node {
                id: f[0].to_string(),
                parent: opt(f[1]),
                v_nom: num(f[2], "v_nom")?,
                z_ohm: Complex64::new(num(f[3], "r_ohm")?, num(f[4], "x_ohm")?),
                ratio: num(f[5], "ratio")?,
                kind,
                neighborhood: f.get(7).and_then(|s| opt(s)),
                home,
            });
        }
        Self::new(nodes, s_base)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn s_base(&self) -> f64 {
        self.s_base
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn z_pu(&self, i: usize) -> Complex64 {
        self.z_pu[i]
    }

    pub fn tap(&self, i: usize) -> f64 {
        self.tap[i]
    }

    /// Node indices from `i` up to and including the slack.
    pub fn path_to_slack(&self, i: usize) -> Vec<usize> {
        let mut path = vec![i];
        let mut cur = i;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn end_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].kind.is_end_node())
    }

    pub fn transformer_count(&self) -> usize {
        self.count(NodeKind::Service)
    }

    /// The active charger node, if the model marks one.
    pub fn charger(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind == NodeKind::Charger)
    }

    /// Writes the model back in the file format, root first.
    pub fn to_text(&self) -> String {
        let mut out = format!("s_base_va {}\n", self.s_base);
        for n in &self.nodes {
            out.push_str(&format!(
                "{} {} {} {} {} {} {} {} {}\n",
                n.id,
                n.parent.as_deref().unwrap_or("-"),
                n.v_nom,
                n.z_ohm.re,
                n.z_ohm.im,
                n.ratio,
                n.kind,
                n.neighborhood.as_deref().unwrap_or("-"),
                n.home.map_or("-".to_string(), |h| h.to_string()),
            ));
        }
        out
    }
}

/// The shipped default feeder.
pub fn build_default_feeder() -> FeederModel {
    FeederModel::parse(DEFAULT_FEEDER, "feeder_default.txt").expect("shipped feeder is valid")
}
