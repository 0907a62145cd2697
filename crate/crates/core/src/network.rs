//! Radial network data model, case-file parsing and admittance construction.
//!
//! All quantities are stored in per-unit on the case base. External bus
//! numbers are relabeled to contiguous ids `0..=n` with the slack bus at 0;
//! the original numbers are kept in [`RadialNetwork::external_ids`].

use std::collections::{BTreeSet, HashMap, VecDeque};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("meshed topology: cycle closed by branch {from}-{to}")]
    MeshedTopology { from: i64, to: i64 },
    #[error("disconnected graph: {unreached} node(s) not reachable from the slack bus")]
    DisconnectedGraph { unreached: usize },
    #[error("no slack bus")]
    NoSlackBus,
    #[error("multiple slack buses: {0:?}")]
    MultipleSlackBuses(Vec<i64>),
    #[error("malformed field: {0}")]
    MalformedField(String),
}

/// A branch oriented child -> parent (towards the slack bus).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub child: usize,
    pub parent: usize,
    pub r: f64,
    pub x: f64,
}

impl Branch {
    pub fn z_sq(&self) -> f64 {
        self.r * self.r + self.x * self.x
    }

    pub fn admittance(&self) -> Complex64 {
        Complex64::new(self.r, self.x).inv()
    }
}

/// Rooted tree of buses and branches. Node 0 is the slack bus; every other
/// node `i` owns exactly one branch, stored at `branches[i - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialNetwork {
    base_mva: f64,
    base_kv: f64,
    external_ids: Vec<i64>,
    branches: Vec<Branch>,
    children: Vec<Vec<usize>>,
    /// Breadth-first order from the root; parents always precede children.
    order: Vec<usize>,
}

/// Undirected branch as read from a file, in external bus numbers.
#[derive(Debug, Clone, Copy)]
pub struct RawBranch {
    pub from: i64,
    pub to: i64,
    pub r: f64,
    pub x: f64,
}

impl RadialNetwork {
    /// Builds a network from external bus ids and undirected branches,
    /// orienting every branch towards `slack`.
    pub fn from_raw(
        base_mva: f64,
        base_kv: f64,
        slack: i64,
        buses: &[i64],
        raw: &[RawBranch],
    ) -> Result<Self, NetworkError> {
        if !(base_mva.is_finite() && base_mva > 0.0) {
            return Err(NetworkError::MalformedField(format!("base_mva = {base_mva}")));
        }
        if !(base_kv.is_finite() && base_kv > 0.0) {
            return Err(NetworkError::MalformedField(format!("base_kv = {base_kv}")));
        }
        let mut index: HashMap<i64, usize> = HashMap::with_capacity(buses.len());
        let mut external_ids = Vec::with_capacity(buses.len());
        if !buses.contains(&slack) {
            return Err(NetworkError::NoSlackBus);
        }
        index.insert(slack, 0);
        external_ids.push(slack);
        for &b in buses {
            if b == slack {
                continue;
            }
            if index.insert(b, external_ids.len()).is_some() {
                return Err(NetworkError::MalformedField(format!("duplicate node id {b}")));
            }
            external_ids.push(b);
        }
        if buses.iter().filter(|&&b| b == slack).count() > 1 {
            return Err(NetworkError::MalformedField(format!("duplicate node id {slack}")));
        }
        let n_nodes = external_ids.len();

        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_nodes];
        for (k, br) in raw.iter().enumerate() {
            let a = *index
                .get(&br.from)
                .ok_or_else(|| NetworkError::MalformedField(format!("branch references unknown bus {}", br.from)))?;
            let b = *index
                .get(&br.to)
                .ok_or_else(|| NetworkError::MalformedField(format!("branch references unknown bus {}", br.to)))?;
            if a == b {
                return Err(NetworkError::MalformedField(format!("self-loop at bus {}", br.from)));
            }
            if !(br.r.is_finite() && br.x.is_finite()) || br.r < 0.0 || br.x < 0.0 {
                return Err(NetworkError::MalformedField(format!(
                    "branch {}-{}: r = {}, x = {} (need finite, non-negative)",
                    br.from, br.to, br.r, br.x
                )));
            }
            if br.r * br.r + br.x * br.x <= 0.0 {
                return Err(NetworkError::MalformedField(format!(
                    "branch {}-{} has zero impedance",
                    br.from, br.to
                )));
            }
            adj[a].push((b, k));
            adj[b].push((a, k));
        }

        // BFS from the slack; a visited neighbour reached through a new
        // branch closes a cycle.
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n_nodes];
        let mut seen = vec![false; n_nodes];
        let mut used = vec![false; raw.len()];
        let mut order = Vec::with_capacity(n_nodes);
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(w, k) in &adj[u] {
                if used[k] {
                    continue;
                }
                used[k] = true;
                if seen[w] {
                    return Err(NetworkError::MeshedTopology { from: raw[k].from, to: raw[k].to });
                }
                seen[w] = true;
                parent[w] = Some((u, k));
                queue.push_back(w);
            }
        }
        if order.len() != n_nodes {
            return Err(NetworkError::DisconnectedGraph { unreached: n_nodes - order.len() });
        }
        // A connected graph whose BFS used every branch without closing a
        // cycle has exactly n_nodes - 1 branches.
        debug_assert_eq!(raw.len(), n_nodes - 1);

        let mut branches = Vec::with_capacity(n_nodes - 1);
        let mut children = vec![Vec::new(); n_nodes];
        for i in 1..n_nodes {
            let (p, k) = parent[i].expect("non-root node has a parent after BFS");
            branches.push(Branch { child: i, parent: p, r: raw[k].r, x: raw[k].x });
            children[p].push(i);
        }
        Ok(Self { base_mva, base_kv, external_ids, branches, children, order })
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn base_kv(&self) -> f64 {
        self.base_kv
    }

    /// Number of nodes including the slack, `n + 1`.
    pub fn node_count(&self) -> usize {
        self.external_ids.len()
    }

    /// Number of non-slack nodes `n` (equals the number of branches).
    pub fn n(&self) -> usize {
        self.branches.len()
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Branch owned by non-slack node `i`.
    pub fn branch(&self, i: usize) -> &Branch {
        &self.branches[i - 1]
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        (i > 0).then(|| self.branches[i - 1].parent)
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// Root-first breadth-first order.
    pub fn bfs_order(&self) -> &[usize] {
        &self.order
    }

    pub fn external_ids(&self) -> &[i64] {
        &self.external_ids
    }

    pub fn external_id(&self, node: usize) -> i64 {
        self.external_ids[node]
    }

    pub fn internal_id(&self, external: i64) -> Option<usize> {
        self.external_ids.iter().position(|&e| e == external)
    }

    pub fn depth(&self, mut i: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.parent(i) {
            i = p;
            d += 1;
        }
        d
    }

    /// Nodes on the path from `i` up to the root, starting with `i`.
    pub fn path_to_root(&self, mut i: usize) -> Vec<usize> {
        let mut path = vec![i];
        while let Some(p) = self.parent(i) {
            path.push(p);
            i = p;
        }
        path
    }

    /// Descendants of every node, excluding the node itself.
    pub fn downstream_sets(&self) -> Vec<BTreeSet<usize>> {
        let mut sets = vec![BTreeSet::new(); self.node_count()];
        for &i in self.order.iter().rev() {
            let mut acc = BTreeSet::new();
            for &c in &self.children[i] {
                acc.insert(c);
                acc.extend(sets[c].iter().copied());
            }
            sets[i] = acc;
        }
        sets
    }

    /// `true` iff `j` is a strict descendant of `i`.
    pub fn is_descendant(&self, j: usize, i: usize) -> bool {
        let mut k = j;
        while let Some(p) = self.parent(k) {
            if p == i {
                return true;
            }
            k = p;
        }
        false
    }

    /// Interior nodes of the unique tree path between `i` and `j`.
    pub fn path_interior(&self, i: usize, j: usize) -> BTreeSet<usize> {
        let up_i = self.path_to_root(i);
        let up_j = self.path_to_root(j);
        let on_j: BTreeSet<usize> = up_j.iter().copied().collect();
        let lca = *up_i.iter().find(|k| on_j.contains(k)).expect("tree paths share the root");
        let mut interior = BTreeSet::new();
        for &k in up_i.iter().take_while(|&&k| k != lca) {
            interior.insert(k);
        }
        for &k in up_j.iter().take_while(|&&k| k != lca) {
            interior.insert(k);
        }
        interior.insert(lca);
        interior.remove(&i);
        interior.remove(&j);
        interior
    }

    pub fn build_admittance(&self) -> AdmittanceMatrix {
        let m = self.node_count();
        let mut y = DMatrix::<Complex64>::zeros(m, m);
        for br in &self.branches {
            let yb = br.admittance();
            let (i, j) = (br.child, br.parent);
            y[(i, j)] -= yb;
            y[(j, i)] -= yb;
        }
        for i in 0..m {
            let off: Vec<Complex64> = (0..m).filter(|&k| k != i).map(|k| y[(i, k)]).collect();
            y[(i, i)] = -compensated_sum(&off);
        }
        AdmittanceMatrix { y }
    }
}

/// Neumaier summation of the real and imaginary parts.
fn compensated_sum(values: &[Complex64]) -> Complex64 {
    let part = |f: fn(&Complex64) -> f64| {
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for v in values.iter().map(f) {
            let t = s + v;
            c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
            s = t;
        }
        s + c
    };
    Complex64::new(part(|z| z.re), part(|z| z.im))
}

/// Nodal admittance matrix of a shunt-free network (a complex Laplacian).
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub y: DMatrix<Complex64>,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn max_row_sum(&self) -> f64 {
        self.y
            .row_iter()
            .map(|r| compensated_sum(&r.iter().copied().collect::<Vec<_>>()).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.y[(i, j)] - self.y[(j, i)]).norm());
            }
        }
        worst
    }

    /// Rows/columns of `rows` x `cols`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<Complex64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.y[(rows[a], cols[b])])
    }
}

/// Random feeder-like tree: node `i` hangs off `i - 1` with probability
/// `chain_prob`, otherwise off a uniformly chosen earlier node.
pub fn random_radial(n: usize, seed: u64, r_range: (f64, f64), x_range: (f64, f64), chain_prob: f64) -> RadialNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let buses: Vec<i64> = (0..=n as i64).collect();
    let raw: Vec<RawBranch> = (1..=n)
        .map(|i| {
            let parent = if i == 1 || rng.random_bool(chain_prob) { i - 1 } else { rng.random_range(0..i) };
            RawBranch {
                from: i as i64,
                to: parent as i64,
                r: rng.random_range(r_range.0..=r_range.1),
                x: rng.random_range(x_range.0..=x_range.1),
            }
        })
        .collect();
    RadialNetwork::from_raw(1.0, 1.0, 0, &buses, &raw).expect("generated tree is valid")
}

// ---------------------------------------------------------------------------
// Native JSON format

#[derive(Debug, Serialize, Deserialize)]
struct NativeDoc {
    base_mva: f64,
    base_kv: f64,
    slack: i64,
    nodes: Vec<i64>,
    edges: Vec<NativeEdge>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NativeEdge {
    from: i64,
    to: i64,
    r: f64,
    x: f64,
}

pub fn parse_native_network(text: &str) -> Result<RadialNetwork, NetworkError> {
    let doc: NativeDoc =
        serde_json::from_str(text).map_err(|e| NetworkError::MalformedField(e.to_string()))?;
    let raw: Vec<RawBranch> =
        doc.edges.iter().map(|e| RawBranch { from: e.from, to: e.to, r: e.r, x: e.x }).collect();
    RadialNetwork::from_raw(doc.base_mva, doc.base_kv, doc.slack, &doc.nodes, &raw)
}

/// Edges are written child -> parent in internal node order.
pub fn serialize_native_network(net: &RadialNetwork) -> String {
    let doc = NativeDoc {
        base_mva: net.base_mva,
        base_kv: net.base_kv,
        slack: net.external_ids[0],
        nodes: net.external_ids.clone(),
        edges: net
            .branches
            .iter()
            .map(|b| NativeEdge {
                from: net.external_ids[b.child],
                to: net.external_ids[b.parent],
                r: b.r,
                x: b.x,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("native document serializes")
}

// ---------------------------------------------------------------------------
// Matpower subset

const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const BUS_GS: usize = 4;
const BUS_BS: usize = 5;
const BUS_BASE_KV: usize = 9;
const BR_F: usize = 0;
const BR_T: usize = 1;
const BR_R: usize = 2;
const BR_X: usize = 3;
const BR_B: usize = 4;
const BR_TAP: usize = 8;
const BR_SHIFT: usize = 9;
const BR_STATUS: usize = 10;
const REF_BUS: i64 = 3;

/// Parses the `baseMVA`, `bus` and `branch` blocks of a Matpower case file.
///
/// Distribution cases that list r, x in ohms and convert them with the
/// `/ (Vbase^2 / Sbase)` statement are converted to per-unit the same way.
/// Shunts, line charging and off-nominal taps are rejected.
pub fn parse_matpower_case(text: &str) -> Result<RadialNetwork, NetworkError> {
    let text = strip_comments(text);
    let base_mva = scalar_field(&text, "baseMVA")?;
    let bus = matrix_field(&text, "bus")?;
    let branch = matrix_field(&text, "branch")?;
    if bus.is_empty() {
        return Err(NetworkError::MalformedField("empty bus matrix".into()));
    }

    let mut ids = Vec::with_capacity(bus.len());
    let mut slacks = Vec::new();
    for (k, row) in bus.iter().enumerate() {
        if row.len() < 4 {
            return Err(NetworkError::MalformedField(format!("bus row {} has {} columns", k + 1, row.len())));
        }
        let id = as_int(row[BUS_I], "bus id")?;
        if as_int(row[BUS_TYPE], "bus type")? == REF_BUS {
            slacks.push(id);
        }
        for (col, name) in [(BUS_GS, "Gs"), (BUS_BS, "Bs")] {
            if row.get(col).is_some_and(|&v| v != 0.0) {
                return Err(NetworkError::MalformedField(format!("bus {id}: nonzero shunt {name}")));
            }
        }
        ids.push(id);
    }
    let slack = match slacks.as_slice() {
        [] => return Err(NetworkError::NoSlackBus),
        [s] => *s,
        _ => return Err(NetworkError::MultipleSlackBuses(slacks)),
    };
    let base_kv = bus[0].get(BUS_BASE_KV).copied().filter(|v| *v > 0.0).unwrap_or(1.0);

    let z_scale = if ohm_conversion_present(&text) {
        let vbase = base_kv * 1e3;
        let sbase = base_mva * 1e6;
        1.0 / (vbase * vbase / sbase)
    } else {
        1.0
    };

    let mut raw = Vec::with_capacity(branch.len());
    for (k, row) in branch.iter().enumerate() {
        if row.len() < 4 {
            return Err(NetworkError::MalformedField(format!(
                "branch row {} has {} columns",
                k + 1,
                row.len()
            )));
        }
        let status = row.get(BR_STATUS).copied().unwrap_or(1.0);
        if status == 0.0 {
            continue;
        }
        let from = as_int(row[BR_F], "branch from")?;
        let to = as_int(row[BR_T], "branch to")?;
        if row.get(BR_B).is_some_and(|&b| b != 0.0) {
            return Err(NetworkError::MalformedField(format!("branch {from}-{to}: nonzero line charging")));
        }
        let tap = row.get(BR_TAP).copied().unwrap_or(0.0);
        if tap != 0.0 && tap != 1.0 {
            return Err(NetworkError::MalformedField(format!("branch {from}-{to}: tap ratio {tap}")));
        }
        if row.get(BR_SHIFT).is_some_and(|&s| s != 0.0) {
            return Err(NetworkError::MalformedField(format!("branch {from}-{to}: phase shift")));
        }
        raw.push(RawBranch { from, to, r: row[BR_R] * z_scale, x: row[BR_X] * z_scale });
    }
    RadialNetwork::from_raw(base_mva, base_kv, slack, &ids, &raw)
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| match l.find('%') {
            Some(pos) => &l[..pos],
            None => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn ohm_conversion_present(text: &str) -> bool {
    text.lines().any(|l| {
        let l: String = l.chars().filter(|c| !c.is_whitespace()).collect();
        l.starts_with("mpc.branch(:,[BR_RBR_X])=") && l.contains("/(Vbase^2/Sbase)")
    })
}

fn scalar_field(text: &str, name: &str) -> Result<f64, NetworkError> {
    let key = format!("mpc.{name}");
    for line in text.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix(&key) {
            if let Some(rhs) = rest.trim_start().strip_prefix('=') {
                let v = rhs.trim().trim_end_matches(';').trim();
                return v
                    .parse::<f64>()
                    .map_err(|_| NetworkError::MalformedField(format!("{name} = {v:?}")));
            }
        }
    }
    Err(NetworkError::MalformedField(format!("missing {name}")))
}

fn matrix_field(text: &str, name: &str) -> Result<Vec<Vec<f64>>, NetworkError> {
    let key = format!("mpc.{name}");
    let start = text
        .lines()
        .scan(0usize, |off, l| {
            let here = *off;
            *off += l.len() + 1;
            Some((here, l))
        })
        .find(|(_, l)| {
            l.trim()
                .strip_prefix(&key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|(off, _)| off)
        .ok_or_else(|| NetworkError::MalformedField(format!("missing {name} matrix")))?;
    let body = &text[start..];
    let open = body
        .find('[')
        .ok_or_else(|| NetworkError::MalformedField(format!("{name}: missing '['")))?;
    let close = body
        .find(']')
        .ok_or_else(|| NetworkError::MalformedField(format!("{name}: missing ']'")))?;
    if close < open {
        return Err(NetworkError::MalformedField(format!("{name}: unbalanced brackets")));
    }
    let mut rows = Vec::new();
    for chunk in body[open + 1..close].split([';', '\n']) {
        let cells: Vec<&str> = chunk.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if cells.is_empty() {
            continue;
        }
        let row = cells
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| NetworkError::MalformedField(format!("{name}: bad number {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn as_int(v: f64, what: &str) -> Result<i64, NetworkError> {
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(NetworkError::MalformedField(format!("{what} = {v} is not an integer")));
    }
    Ok(v as i64)
}
