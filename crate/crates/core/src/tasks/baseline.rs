use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Axis, diagonal and knight-move offsets.
pub const OFFSETS_16: [(i64, i64); 16] = [
    (1, 0),
    (2, 1),
    (1, 1),
    (1, 2),
    (0, 1),
    (-1, 2),
    (-1, 1),
    (-2, 1),
    (-1, 0),
    (-2, -1),
    (-1, -1),
    (-1, -2),
    (0, -1),
    (1, -2),
    (1, -1),
    (2, -1),
];

/// `A²(l₁ + l₂) / (l₁ l₂)`.
pub fn baseline_transition_cost(angle: f64, l1: f64, l2: f64) -> f64 {
    angle * angle * (l1 + l2) / (l1 * l2)
}

/// Unsigned angle in `[0, π]` between two direction vectors.
pub fn turn_angle(a: (i64, i64), b: (i64, i64)) -> f64 {
    let cross = (a.0 * b.1 - a.1 * b.0) as f64;
    let dot = (a.0 * b.0 + a.1 * b.1) as f64;
    cross.atan2(dot).abs()
}

fn length(d: (i64, i64)) -> f64 {
    ((d.0 * d.0 + d.1 * d.1) as f64).sqrt()
}

/// Cost of a polyline through grid nodes: the sum of transition costs at
/// every interior vertex.
pub fn polyline_cost(nodes: &[(i64, i64)]) -> Result<f64> {
    let mut cost = 0.0;
    for w in nodes.windows(3) {
        let a = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        let b = (w[2].0 - w[1].0, w[2].1 - w[1].1);
        if a == (0, 0) || b == (0, 0) {
            return Err(invalid("polyline has a repeated vertex"));
        }
        cost += baseline_transition_cost(turn_angle(a, b), length(a), length(b));
    }
    Ok(cost)
}

/// Edge elements between integer grid nodes of a `width × height` node grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedEdgeGraph {
    pub width: usize,
    pub height: usize,
}

/// A path end: a node, optionally with the offset index of its terminal edge element.
///
/// At the start the direction is that of the first element leaving the node;
/// at the goal it is that of the last element arriving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub node: (i64, i64),
    pub direction: Option<usize>,
}

impl Endpoint {
    pub fn free(x: i64, y: i64) -> Self {
        Self {
            node: (x, y),
            direction: None,
        }
    }

    pub fn directed(x: i64, y: i64, offset: (i64, i64)) -> Result<Self> {
        let d = OFFSETS_16
            .iter()
            .position(|&o| o == offset)
            .ok_or_else(|| invalid(format!("{offset:?} is not one of the 16 offsets")))?;
        Ok(Self {
            node: (x, y),
            direction: Some(d),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl DirectedEdgeGraph {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("graph must have at least one node"));
        }
        Ok(Self { width, height })
    }

    pub fn contains(&self, p: (i64, i64)) -> bool {
        p.0 >= 0 && p.1 >= 0 && (p.0 as usize) < self.width && (p.1 as usize) < self.height
    }

    fn node_index(&self, p: (i64, i64)) -> usize {
        p.1 as usize * self.width + p.0 as usize
    }

    fn node_at(&self, i: usize) -> (i64, i64) {
        ((i % self.width) as i64, (i / self.width) as i64)
    }

    /// States are `(node, incoming offset)`, indexed `node·16 + offset`.
    pub fn num_states(&self) -> usize {
        self.width * self.height * 16
    }
}

/// Dijkstra over `(node, incoming offset)` states.
///
/// Returns the node sequence and its total transition cost. Equal costs are
/// settled in increasing state index.
pub fn baseline_optimal_path(
    graph: &DirectedEdgeGraph,
    start: Endpoint,
    goal: Endpoint,
) -> Result<(Vec<(i64, i64)>, f64)> {
    if start.node == goal.node {
        return Err(invalid("start and goal must differ"));
    }
    if !graph.contains(start.node) || !graph.contains(goal.node) {
        return Err(invalid("endpoint outside the graph"));
    }
    for d in [start.direction, goal.direction].into_iter().flatten() {
        if d >= 16 {
            return Err(invalid("direction index must be below 16"));
        }
    }
    let n = graph.num_states();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    for (d, &o) in OFFSETS_16.iter().enumerate() {
        if start.direction.is_some_and(|s| s != d) {
            continue;
        }
        let p = (start.node.0 + o.0, start.node.1 + o.1);
        if graph.contains(p) {
            let s = graph.node_index(p) * 16 + d;
            dist[s] = 0.0;
            heap.push(Reverse(Key(0.0, s)));
        }
    }
    let goal_node = graph.node_index(goal.node);
    while let Some(Reverse(Key(c, s))) = heap.pop() {
        if c > dist[s] {
            continue;
        }
        let (node, d_in) = (s / 16, s % 16);
        if node == goal_node && goal.direction.is_none_or(|g| g == d_in) {
            let mut states = vec![s];
            while prev[*states.last().unwrap()] != usize::MAX {
                states.push(prev[*states.last().unwrap()]);
            }
            states.reverse();
            let mut path = vec![start.node];
            path.extend(states.iter().map(|&t| graph.node_at(t / 16)));
            return Ok((path, c));
        }
        let p = graph.node_at(node);
        let a = OFFSETS_16[d_in];
        for (e, &o) in OFFSETS_16.iter().enumerate() {
            let q = (p.0 + o.0, p.1 + o.1);
            if !graph.contains(q) {
                continue;
            }
            let t = graph.node_index(q) * 16 + e;
            let nc = c + baseline_transition_cost(turn_angle(a, o), length(a), length(o));
            if nc < dist[t] {
                dist[t] = nc;
                prev[t] = s;
                heap.push(Reverse(Key(nc, t)));
            }
        }
    }
    Err(Error::NoPath)
}

/// 4-connected staircase from `(0, 0)` to `(dx, dy)` (`dx ≥ dy ≥ 0`) hugging
/// the straight segment: a vertical unit step whenever the line crosses the
/// next integer height.
pub fn staircase_polyline(dx: i64, dy: i64) -> Result<Vec<(i64, i64)>> {
    if dx <= 0 || dy < 0 || dy > dx {
        return Err(invalid("staircase needs dx > 0 and 0 ≤ dy ≤ dx"));
    }
    let mut nodes = vec![(0, 0)];
    let (mut x, mut y) = (0, 0);
    while x < dx {
        x += 1;
        nodes.push((x, y));
        // rise once the line height at x reaches the next level
        while (y + 1) * dx <= dy * x {
            y += 1;
            nodes.push((x, y));
        }
    }
    // merge collinear runs so turns are counted only at corners
    let mut merged = vec![nodes[0]];
    for i in 1..nodes.len() {
        let keep = i + 1 == nodes.len() || {
            let a = (nodes[i].0 - nodes[i - 1].0, nodes[i].1 - nodes[i - 1].1);
            let b = (nodes[i + 1].0 - nodes[i].0, nodes[i + 1].1 - nodes[i].1);
            a != b
        };
        if keep {
            merged.push(nodes[i]);
        }
    }
    Ok(merged)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Line,
    LineQuarterSlope,
    QuarterCircle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub path: Vec<(i64, i64)>,
    pub cost: f64,
    /// Staircase competitor for the line scenarios.
    pub staircase_cost: Option<f64>,
}

/// Runs one of the fixed analysis scenarios.
///
/// `line`: (0,0) to (40,0); `line-quarter-slope`: (0,0) to (40,10); both with
/// free end directions. `quarter-circle`: radius 10 around (2,2) from (12,2)
/// to (2,12), terminal elements tangent to the circle.
pub fn run_scenario(scenario: Scenario) -> Result<ScenarioReport> {
    let (graph, start, goal, stairs) = match scenario {
        Scenario::Line => (
            DirectedEdgeGraph::new(41, 3)?,
            Endpoint::free(0, 1),
            Endpoint::free(40, 1),
            Some((40, 0)),
        ),
        Scenario::LineQuarterSlope => (
            DirectedEdgeGraph::new(41, 11)?,
            Endpoint::free(0, 0),
            Endpoint::free(40, 10),
            Some((40, 10)),
        ),
        Scenario::QuarterCircle => (
            DirectedEdgeGraph::new(15, 15)?,
            Endpoint::directed(12, 2, (0, 1))?,
            Endpoint::directed(2, 12, (-1, 0))?,
            None,
        ),
    };
    let (path, cost) = baseline_optimal_path(&graph, start, goal)?;
    let staircase_cost = match stairs {
        Some((dx, dy)) => Some(polyline_cost(&staircase_polyline(dx, dy)?)?),
        None => None,
    };
    Ok(ScenarioReport {
        scenario,
        path,
        cost,
        staircase_cost,
    })
}
