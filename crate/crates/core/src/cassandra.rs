//! Reading and writing POMDPs in the Cassandra text format, extended with a
//! `priorities:` line.
//!
//! Transition probabilities come from `T:` blocks and observation
//! probabilities from `O:` blocks; the signal-emitting kernel is their
//! product. Kernels that do not factor that way are written with joint
//! `TO: <a> : <q> : <q'> : <o> <p>` entries instead.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::model::{self, Mdp, Violation};
use crate::{Pomdp, PomdpBuilder};

/// 1-based position in the input text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceLocation {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("{location}: syntax error: {message}")]
    Syntax { location: SourceLocation, message: String },
    #[error("{location}: unknown {kind} `{name}`")]
    UnknownName {
        location: SourceLocation,
        kind: &'static str,
        name: String,
    },
    #[error("{location}: expected {expected} values, found {found}")]
    Dimension {
        location: SourceLocation,
        expected: usize,
        found: usize,
    },
    #[error("invalid model: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

const KEYWORDS: &[&str] = &[
    "discount",
    "values",
    "states",
    "actions",
    "observations",
    "start",
    "start include",
    "start exclude",
    "T",
    "O",
    "TO",
    "R",
    "priorities",
];

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    loc: SourceLocation,
}

#[derive(Debug)]
struct Statement<'a> {
    keyword: &'a str,
    loc: SourceLocation,
    /// Header fields after the keyword, split on ':'.
    segments: Vec<Vec<Token<'a>>>,
    /// Tokens of the following lines that carry no ':'.
    data: Vec<Token<'a>>,
}

fn syntax(loc: SourceLocation, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        location: loc,
        message: message.into(),
    }
}

/// Splits a line into whitespace tokens, with ':' as its own token.
fn tokenize_line(line: &str, line_no: usize) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b':' {
            out.push(Token {
                text: &line[i..i + 1],
                loc: SourceLocation {
                    line: line_no,
                    column: i + 1,
                },
            });
            i += 1;
        } else {
            let start = i;
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b':' {
                i += 1;
            }
            out.push(Token {
                text: &line[start..i],
                loc: SourceLocation {
                    line: line_no,
                    column: start + 1,
                },
            });
        }
    }
    out
}

fn statements(text: &str) -> Result<Vec<Statement<'_>>, ParseError> {
    let mut out: Vec<Statement> = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        };
        let tokens = tokenize_line(line, line_no);
        let Some(first) = tokens.first() else { continue };
        match tokens.iter().position(|t| t.text == ":") {
            None => match out.last_mut() {
                Some(st) => st.data.extend(tokens),
                None => return Err(syntax(first.loc, "data outside of any statement")),
            },
            Some(colon) => {
                let keyword = tokens[..colon].iter().map(|t| t.text).collect::<Vec<_>>().join(" ");
                let Some(&kw) = KEYWORDS.iter().find(|k| **k == keyword) else {
                    return Err(syntax(first.loc, format!("unknown keyword `{keyword}`")));
                };
                let mut segments = vec![Vec::new()];
                for t in &tokens[colon + 1..] {
                    if t.text == ":" {
                        segments.push(Vec::new());
                    } else {
                        segments.last_mut().unwrap().push(*t);
                    }
                }
                out.push(Statement {
                    keyword: kw,
                    loc: first.loc,
                    segments,
                    data: Vec::new(),
                });
            }
        }
    }
    Ok(out)
}

impl<'a> Statement<'a> {
    /// All tokens after the keyword, ignoring ':' structure.
    fn all_tokens(&self) -> Vec<Token<'a>> {
        self.segments
            .iter()
            .flatten()
            .chain(self.data.iter())
            .copied()
            .collect()
    }

    /// Leading name fields (one per segment) and the trailing data tokens.
    fn fields(&self) -> Result<(Vec<Token<'a>>, Vec<Token<'a>>), ParseError> {
        let mut names = Vec::new();
        let last = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.is_empty() {
                return Err(syntax(self.loc, format!("empty field in `{}` statement", self.keyword)));
            }
            if i < last && seg.len() != 1 {
                return Err(syntax(seg[1].loc, "expected a single name"));
            }
            names.push(seg[0]);
        }
        let mut data: Vec<Token> = self.segments[last][1..].to_vec();
        data.extend(self.data.iter().copied());
        Ok((names, data))
    }
}

/// The single bare word of a data block such as `identity`.
fn keyword<'a>(data: &[Token<'a>]) -> Option<&'a str> {
    match data {
        [only] => Some(only.text),
        _ => None,
    }
}

fn number(t: &Token) -> Result<f64, ParseError> {
    t.text
        .parse::<f64>()
        .map_err(|_| syntax(t.loc, format!("expected a number, found `{}`", t.text)))
}

fn numbers(tokens: &[Token], expected: usize, loc: SourceLocation) -> Result<Vec<f64>, ParseError> {
    if tokens.len() != expected {
        let loc = tokens.get(expected).map_or(loc, |t| t.loc);
        return Err(ParseError::Dimension {
            location: loc,
            expected,
            found: tokens.len(),
        });
    }
    tokens.iter().map(number).collect()
}

/// Declared names of one kind. A single numeric token is a count.
fn declare(st: &Statement) -> Result<Vec<String>, ParseError> {
    let tokens = st.all_tokens();
    if tokens.is_empty() {
        return Err(syntax(st.loc, format!("`{}` declares nothing", st.keyword)));
    }
    if tokens.len() == 1 {
        if let Ok(n) = tokens[0].text.parse::<usize>() {
            return Ok((0..n).map(|i| i.to_string()).collect());
        }
    }
    Ok(tokens.iter().map(|t| t.text.to_string()).collect())
}

fn resolve(kind: &'static str, names: &[String], t: &Token) -> Result<Vec<usize>, ParseError> {
    if t.text == "*" {
        return Ok((0..names.len()).collect());
    }
    if let Some(i) = names.iter().position(|n| n == t.text) {
        return Ok(vec![i]);
    }
    match t.text.parse::<usize>() {
        Ok(i) if i < names.len() => Ok(vec![i]),
        _ => Err(ParseError::UnknownName {
            location: t.loc,
            kind,
            name: t.text.to_string(),
        }),
    }
}

fn resolve_one(kind: &'static str, names: &[String], t: &Token) -> Result<usize, ParseError> {
    if t.text == "*" {
        return Err(syntax(t.loc, "wildcard not allowed here"));
    }
    Ok(resolve(kind, names, t)?[0])
}

/// Dense `rows x cols` block per action, as in `T` (q, q') and `O` (q', o).
struct Table {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Table {
    fn new(actions: usize, rows: usize, cols: usize) -> Self {
        Table {
            rows,
            cols,
            values: vec![0.0; actions * rows * cols],
        }
    }

    fn get(&self, a: usize, r: usize, c: usize) -> f64 {
        self.values[(a * self.rows + r) * self.cols + c]
    }

    fn set(&mut self, a: usize, r: usize, c: usize, p: f64) {
        self.values[(a * self.rows + r) * self.cols + c] = p;
    }

    /// Applies one `T:`/`O:` statement: matrix, row or single entry.
    fn apply(
        &mut self,
        st: &Statement,
        action_names: &[String],
        row_names: (&'static str, &[String]),
        col_names: (&'static str, &[String]),
    ) -> Result<(), ParseError> {
        let (fields, data) = st.fields()?;
        let actions = resolve("action", action_names, &fields[0])?;
        let (rows, cols) = (self.rows, self.cols);
        match fields.len() {
            1 => {
                let matrix: Vec<f64> = match keyword(&data) {
                    Some("identity") => {
                        if rows != cols {
                            return Err(ParseError::Dimension {
                                location: data[0].loc,
                                expected: rows,
                                found: cols,
                            });
                        }
                        (0..rows * cols)
                            .map(|i| if i / cols == i % cols { 1.0 } else { 0.0 })
                            .collect()
                    }
                    Some("uniform") => vec![1.0 / cols as f64; rows * cols],
                    _ => numbers(&data, rows * cols, st.loc)?,
                };
                for &a in &actions {
                    for r in 0..rows {
                        for c in 0..cols {
                            self.set(a, r, c, matrix[r * cols + c]);
                        }
                    }
                }
            }
            2 => {
                let sources = resolve(row_names.0, row_names.1, &fields[1])?;
                let row: Vec<f64> = match keyword(&data) {
                    Some("uniform") => vec![1.0 / cols as f64; cols],
                    _ => numbers(&data, cols, st.loc)?,
                };
                for &a in &actions {
                    for &r in &sources {
                        for (c, &p) in row.iter().enumerate() {
                            self.set(a, r, c, p);
                        }
                    }
                }
            }
            3 => {
                let sources = resolve(row_names.0, row_names.1, &fields[1])?;
                let targets = resolve(col_names.0, col_names.1, &fields[2])?;
                let p = numbers(&data, 1, st.loc)?[0];
                for &a in &actions {
                    for &r in &sources {
                        for &c in &targets {
                            self.set(a, r, c, p);
                        }
                    }
                }
            }
            _ => return Err(syntax(st.loc, format!("too many fields in `{}` statement", st.keyword))),
        }
        Ok(())
    }
}

/// Parses without structural validation; use [`model::validate`] or
/// [`parse_pomdp`] to check the result.
pub fn parse_pomdp_unchecked(text: &str) -> Result<Pomdp, ParseError> {
    let stmts = statements(text)?;
    let end = SourceLocation {
        line: text.split('\n').count().max(1),
        column: 1,
    };

    let mut states: Option<Vec<String>> = None;
    let mut actions: Option<Vec<String>> = None;
    let mut signals: Option<Vec<String>> = None;
    for st in &stmts {
        let slot = match st.keyword {
            "states" => &mut states,
            "actions" => &mut actions,
            "observations" => &mut signals,
            _ => continue,
        };
        if slot.is_some() {
            return Err(syntax(st.loc, format!("`{}` declared twice", st.keyword)));
        }
        *slot = Some(declare(st)?);
    }
    let states = states.ok_or_else(|| syntax(end, "missing `states` declaration"))?;
    let actions = actions.ok_or_else(|| syntax(end, "missing `actions` declaration"))?;
    let signals = signals.ok_or_else(|| syntax(end, "missing `observations` declaration"))?;
    let (n, m, k) = (states.len(), actions.len(), signals.len());

    let mut t = Table::new(m, n, n);
    let mut o = Table::new(m, n, k);
    let mut joint: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
    let (mut factored, mut joint_seen) = (false, false);
    let mut initial: Option<Vec<f64>> = None;
    let mut priorities: Option<Vec<u32>> = None;

    for st in &stmts {
        match st.keyword {
            "states" | "actions" | "observations" | "discount" | "values" | "R" => {}
            "T" | "O" if joint_seen => return Err(syntax(st.loc, "cannot mix `T:`/`O:` with `TO:`")),
            "T" => {
                factored = true;
                t.apply(st, &actions, ("state", &states), ("state", &states))?;
            }
            "O" => {
                factored = true;
                o.apply(st, &actions, ("state", &states), ("observation", &signals))?;
            }
            "TO" => {
                if factored {
                    return Err(syntax(st.loc, "cannot mix `T:`/`O:` with `TO:`"));
                }
                joint_seen = true;
                let (fields, data) = st.fields()?;
                if fields.len() != 4 {
                    return Err(syntax(st.loc, "`TO:` needs action, state, next state and observation"));
                }
                let p = numbers(&data, 1, st.loc)?[0];
                for a in resolve("action", &actions, &fields[0])? {
                    for q in resolve("state", &states, &fields[1])? {
                        for q2 in resolve("state", &states, &fields[2])? {
                            for s in resolve("observation", &signals, &fields[3])? {
                                joint.insert((q, a, q2, s), p);
                            }
                        }
                    }
                }
            }
            "start" => {
                let tokens = st.all_tokens();
                if let [only] = tokens.as_slice() {
                    if only.text.parse::<f64>().is_err() {
                        return Err(syntax(
                            only.loc,
                            "`start: <state>` is not supported; use `start include:`",
                        ));
                    }
                }
                initial = Some(numbers(&tokens, n, st.loc)?);
            }
            "start include" => {
                let tokens = st.all_tokens();
                if tokens.is_empty() {
                    return Err(syntax(st.loc, "`start include:` lists no states"));
                }
                let mut dist = vec![0.0; n];
                let mut members = Vec::new();
                for tok in &tokens {
                    let q = resolve_one("state", &states, tok)?;
                    if !members.contains(&q) {
                        members.push(q);
                    }
                }
                for &q in &members {
                    dist[q] = 1.0 / members.len() as f64;
                }
                initial = Some(dist);
            }
            "start exclude" => return Err(syntax(st.loc, "`start exclude:` is not supported")),
            "priorities" => {
                let tokens = st.all_tokens();
                if tokens.len() != n {
                    return Err(ParseError::Dimension {
                        location: st.loc,
                        expected: n,
                        found: tokens.len(),
                    });
                }
                let values = tokens
                    .iter()
                    .map(|t| {
                        t.text
                            .parse::<u32>()
                            .map_err(|_| syntax(t.loc, format!("expected a priority, found `{}`", t.text)))
                    })
                    .collect::<Result<_, _>>()?;
                priorities = Some(values);
            }
            other => unreachable!("keyword {other}"),
        }
    }

    let mut b = PomdpBuilder::new(states, actions, signals);
    if joint_seen {
        for (&(q, a, q2, s), &p) in &joint {
            if p != 0.0 {
                b.transition(q, a, s, q2, p);
            }
        }
    } else {
        for q in 0..n {
            for a in 0..m {
                for q2 in 0..n {
                    let tp = t.get(a, q, q2);
                    if tp == 0.0 {
                        continue;
                    }
                    for s in 0..k {
                        let p = tp * o.get(a, q2, s);
                        if p != 0.0 {
                            b.transition(q, a, s, q2, p);
                        }
                    }
                }
            }
        }
    }
    b.initial_distribution(initial.unwrap_or_else(|| vec![1.0 / n.max(1) as f64; n]));
    b.priorities(priorities.unwrap_or_else(|| vec![0; n]));
    Ok(b.build())
}

/// Parses and validates.
pub fn parse_pomdp(text: &str) -> Result<Pomdp, ParseError> {
    let pomdp = parse_pomdp_unchecked(text)?;
    let violations = model::validate(&pomdp);
    if violations.is_empty() {
        Ok(pomdp)
    } else {
        Err(ParseError::Invalid(violations))
    }
}

const FACTOR_TOLERANCE: f64 = 1e-12;

fn name_list(names: &[String]) -> String {
    let numbered = names.iter().enumerate().all(|(i, n)| *n == i.to_string());
    if numbered {
        names.len().to_string()
    } else {
        names.join(" ")
    }
}

/// Observation rows `O(a, q', ·)` when the kernel factors as `T · O`.
fn factor(pomdp: &Pomdp) -> Option<Vec<Vec<f64>>> {
    let (n, m, k) = (pomdp.num_states(), pomdp.num_actions(), pomdp.num_signals());
    let mut obs: Vec<Option<Vec<f64>>> = vec![None; m * n];
    for q in 0..n {
        for a in 0..m {
            let mut rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for t in pomdp.row(q, a) {
                rows.entry(t.next).or_insert_with(|| vec![0.0; k])[t.signal] += t.prob;
            }
            for (q2, row) in rows {
                let total: f64 = row.iter().sum();
                let normalized: Vec<f64> = row.iter().map(|p| p / total).collect();
                match &obs[a * n + q2] {
                    None => obs[a * n + q2] = Some(normalized),
                    Some(known) => {
                        let same = known
                            .iter()
                            .zip(&normalized)
                            .all(|(x, y)| (*x > 0.0) == (*y > 0.0) && (x - y).abs() <= FACTOR_TOLERANCE);
                        if !same {
                            return None;
                        }
                    }
                }
            }
        }
    }
    Some(obs.into_iter().map(Option::unwrap_or_default).collect())
}

/// Writes a POMDP so that [`parse_pomdp`] reads it back with the same names,
/// supports and priorities, and probabilities within round-off.
pub fn serialize_pomdp(pomdp: &Pomdp) -> String {
    let (n, m) = (pomdp.num_states(), pomdp.num_actions());
    let mut out = String::new();
    let _ = writeln!(out, "states: {}", name_list(pomdp.state_names()));
    let _ = writeln!(out, "actions: {}", name_list(pomdp.action_names()));
    let _ = writeln!(out, "observations: {}", name_list(pomdp.signal_names()));
    let start: Vec<String> = pomdp.initial_distribution().iter().map(|p| p.to_string()).collect();
    let _ = writeln!(out, "start: {}", start.join(" "));
    let prio: Vec<String> = pomdp.priorities().iter().map(|p| p.to_string()).collect();
    let _ = writeln!(out, "priorities: {}", prio.join(" "));
    match factor(pomdp) {
        Some(obs) => {
            for q in 0..n {
                for a in 0..m {
                    let mut totals: BTreeMap<usize, f64> = BTreeMap::new();
                    for t in pomdp.row(q, a) {
                        *totals.entry(t.next).or_default() += t.prob;
                    }
                    for (q2, p) in totals {
                        let _ = writeln!(
                            out,
                            "T: {} : {} : {} {}",
                            pomdp.action_name(a),
                            pomdp.state_name(q),
                            pomdp.state_name(q2),
                            p
                        );
                    }
                }
            }
            for a in 0..m {
                for q2 in 0..n {
                    for (s, &p) in obs[a * n + q2].iter().enumerate() {
                        if p > 0.0 {
                            let _ = writeln!(
                                out,
                                "O: {} : {} : {} {}",
                                pomdp.action_name(a),
                                pomdp.state_name(q2),
                                pomdp.signal_name(s),
                                p
                            );
                        }
                    }
                }
            }
        }
        None => {
            for q in 0..n {
                for a in 0..m {
                    for t in pomdp.row(q, a) {
                        let _ = writeln!(
                            out,
                            "TO: {} : {} : {} : {} {}",
                            pomdp.action_name(a),
                            pomdp.state_name(q),
                            pomdp.state_name(t.next),
                            pomdp.signal_name(t.signal),
                            t.prob
                        );
                    }
                }
            }
        }
    }
    out
}

/// Writes an MDP as a Cassandra file with a single observation.
pub fn serialize_mdp(mdp: &Mdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "states: {}", name_list(&mdp.state_names));
    let _ = writeln!(out, "actions: {}", name_list(&mdp.action_names));
    let _ = writeln!(out, "observations: none");
    let start: Vec<&str> = (0..mdp.state_count())
        .map(|q| if q == mdp.initial_state { "1" } else { "0" })
        .collect();
    let _ = writeln!(out, "start: {}", start.join(" "));
    if let Some(prio) = &mdp.priorities {
        let prio: Vec<String> = prio.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(out, "priorities: {}", prio.join(" "));
    }
    for q in 0..mdp.state_count() {
        for a in 0..mdp.action_count() {
            for &(q2, p) in mdp.row(q, a) {
                let _ = writeln!(
                    out,
                    "T: {} : {} : {} {}",
                    mdp.action_names[a], mdp.state_names[q], mdp.state_names[q2], p
                );
            }
        }
    }
    let _ = writeln!(out, "O: * : * : none 1");
    out
}
