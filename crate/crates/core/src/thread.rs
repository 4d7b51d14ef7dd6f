//! Raw conversation threads: parsing, validation, and reply-tree queries.
//!
//! A thread is a tree of comments rooted at the post. Construction validates
//! the tree shape (single root, no dangling parents, no cycles) and records
//! soft anomalies such as timestamp inversions as warnings instead of
//! rejecting real-world data.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Abusive,
    NonAbusive,
}

impl Label {
    /// Binary target: abusive is the positive class.
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Abusive => 1.0,
            Label::NonAbusive => 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommentNode {
    pub id: String,
    pub parent_id: Option<String>,
    pub text: Option<String>,
    pub score: i64,
    pub created_at: i64,
    pub label: Option<Label>,
    pub context_sensitive: Option<bool>,
}

/// A validated reply tree. Immutable after construction; index lookups and
/// child orderings are precomputed.
#[derive(Debug, Clone)]
pub struct ConversationThread {
    pub thread_id: String,
    comments: Vec<CommentNode>,
    index: HashMap<String, usize>,
    children: Vec<Vec<usize>>,
    root: usize,
}

#[derive(Debug, Deserialize)]
struct RawThread {
    thread_id: String,
    comments: Vec<CommentNode>,
}

#[derive(Debug, Serialize)]
struct ThreadOut<'a> {
    thread_id: &'a str,
    comments: &'a [CommentNode],
}

const THREAD_KEYS: &[&str] = &["thread_id", "comments"];
const COMMENT_KEYS: &[&str] = &[
    "id",
    "parent_id",
    "text",
    "score",
    "created_at",
    "label",
    "context_sensitive",
];

/// Parse one thread from JSON bytes and validate every tree invariant.
pub fn parse_thread(raw: &[u8]) -> Result<(ConversationThread, Vec<Warning>)> {
    let value: serde_json::Value = serde_json::from_slice(raw).map_err(|e| {
        let offset = byte_offset(raw, e.line(), e.column());
        Error::Parse {
            offset,
            message: e.to_string(),
        }
    })?;

    let mut warnings = Vec::new();
    collect_unknown_field_warnings(&value, &mut warnings);

    let raw_thread: RawThread = serde_json::from_value(value).map_err(|e| Error::Parse {
        offset: 0,
        message: e.to_string(),
    })?;

    let thread = ConversationThread::new(raw_thread.thread_id, raw_thread.comments, &mut warnings)?;
    Ok((thread, warnings))
}

fn byte_offset(raw: &[u8], line: usize, column: usize) -> usize {
    // serde_json reports 1-based line and column
    let mut offset = 0usize;
    let mut current_line = 1usize;
    for (i, &b) in raw.iter().enumerate() {
        if current_line == line {
            offset = i;
            break;
        }
        if b == b'\n' {
            current_line += 1;
            offset = i + 1;
        }
    }
    offset + column.saturating_sub(1)
}

fn collect_unknown_field_warnings(value: &serde_json::Value, warnings: &mut Vec<Warning>) {
    let Some(obj) = value.as_object() else {
        return;
    };
    for key in obj.keys() {
        if !THREAD_KEYS.contains(&key.as_str()) {
            warnings.push(Warning::new(format!("ignoring unknown thread field {:?}", key)));
        }
    }
    if let Some(comments) = obj.get("comments").and_then(|c| c.as_array()) {
        for comment in comments {
            if let Some(cobj) = comment.as_object() {
                for key in cobj.keys() {
                    if !COMMENT_KEYS.contains(&key.as_str()) {
                        warnings.push(Warning::new(format!(
                            "ignoring unknown comment field {:?}",
                            key
                        )));
                    }
                }
            }
        }
    }
}

impl ConversationThread {
    /// Validate and index a list of comments as a reply tree.
    pub fn new(
        thread_id: String,
        comments: Vec<CommentNode>,
        warnings: &mut Vec<Warning>,
    ) -> Result<Self> {
        if comments.is_empty() {
            return Err(Error::Structure(format!("thread {} has no comments", thread_id)));
        }
        let mut index = HashMap::with_capacity(comments.len());
        for (i, c) in comments.iter().enumerate() {
            if c.id.is_empty() {
                return Err(Error::Structure(format!(
                    "thread {} has a comment with an empty id",
                    thread_id
                )));
            }
            if index.insert(c.id.clone(), i).is_some() {
                return Err(Error::Structure(format!(
                    "duplicate comment id {:?} in thread {}",
                    c.id, thread_id
                )));
            }
            if c.context_sensitive.is_some() && c.label.is_none() {
                return Err(Error::Structure(format!(
                    "comment {:?} has context_sensitive without a label",
                    c.id
                )));
            }
        }

        let mut roots = Vec::new();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); comments.len()];
        for (i, c) in comments.iter().enumerate() {
            match &c.parent_id {
                None => roots.push(i),
                Some(pid) => {
                    let &p = index.get(pid).ok_or_else(|| {
                        Error::Structure(format!(
                            "comment {:?} replies to missing comment {:?}",
                            c.id, pid
                        ))
                    })?;
                    children[p].push(i);
                    if comments[i].created_at < comments[p].created_at {
                        warnings.push(Warning::new(format!(
                            "comment {:?} predates its parent {:?}",
                            c.id, pid
                        )));
                    }
                }
            }
        }
        if roots.len() != 1 {
            return Err(Error::Structure(format!(
                "thread {} has {} roots, expected exactly 1",
                thread_id,
                roots.len()
            )));
        }
        let root = roots[0];

        // Reachability from the root. With a single root and all parents
        // resolved, any unreachable node sits on a parent cycle.
        let mut seen = vec![false; comments.len()];
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            if seen[i] {
                continue;
            }
            seen[i] = true;
            stack.extend(children[i].iter().copied());
        }
        if let Some(unreachable) = seen.iter().position(|&s| !s) {
            let member = find_cycle_member(&comments, &index, unreachable);
            return Err(Error::Structure(format!(
                "reply cycle involving comment {:?} in thread {}",
                comments[member].id, thread_id
            )));
        }

        // Deterministic sibling order: (created_at, id) ascending.
        for ch in children.iter_mut() {
            ch.sort_by(|&a, &b| {
                (comments[a].created_at, comments[a].id.as_str())
                    .cmp(&(comments[b].created_at, comments[b].id.as_str()))
            });
        }

        Ok(ConversationThread {
            thread_id,
            comments,
            index,
            children,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    pub fn root(&self) -> &CommentNode {
        &self.comments[self.root]
    }

    pub fn comments(&self) -> &[CommentNode] {
        &self.comments
    }

    pub fn comment(&self, id: &str) -> Result<&CommentNode> {
        self.idx(id).map(|i| &self.comments[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    fn idx(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::Lookup(id.to_string()))
    }

    /// Children of `id`, ordered by (created_at, id) ascending.
    pub fn children_of(&self, id: &str) -> Result<Vec<&str>> {
        let i = self.idx(id)?;
        Ok(self.children[i]
            .iter()
            .map(|&c| self.comments[c].id.as_str())
            .collect())
    }

    /// The reply path from the root post down to `id` (root first, `id` last).
    pub fn path_to_root(&self, id: &str) -> Result<Vec<&str>> {
        let mut i = self.idx(id)?;
        let mut path = vec![self.comments[i].id.as_str()];
        while let Some(pid) = &self.comments[i].parent_id {
            i = self.index[pid];
            path.push(self.comments[i].id.as_str());
        }
        path.reverse();
        Ok(path)
    }

    /// Canonical JSON serialization (round-trips through `parse_thread`).
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ThreadOut {
            thread_id: &self.thread_id,
            comments: &self.comments,
        })
        .expect("thread serialization cannot fail")
    }
}

fn find_cycle_member(
    comments: &[CommentNode],
    index: &HashMap<String, usize>,
    start: usize,
) -> usize {
    // Walk parent links from an unreachable node until a node repeats.
    let mut seen = HashMap::new();
    let mut i = start;
    loop {
        if seen.contains_key(&i) {
            return i;
        }
        seen.insert(i, ());
        match &comments[i].parent_id {
            Some(pid) => i = index[pid],
            None => return start,
        }
    }
}

/// Read a JSONL corpus: one thread object per line. Blank lines are skipped.
pub fn read_thread_corpus(path: &Path) -> Result<(Vec<ConversationThread>, Vec<Warning>)> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut threads = Vec::new();
    let mut warnings = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (thread, mut w) = parse_thread(line.as_bytes()).map_err(|e| match e {
            Error::Parse { offset, message } => Error::Parse {
                offset,
                message: format!("line {}: {}", lineno + 1, message),
            },
            other => other,
        })?;
        for warn in w.iter_mut() {
            warn.message = format!("{} (line {})", warn.message, lineno + 1);
        }
        warnings.append(&mut w);
        threads.push(thread);
    }
    Ok((threads, warnings))
}

pub fn write_thread_corpus(path: &Path, threads: &[ConversationThread]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for t in threads {
        writeln!(file, "{}", t.to_json())?;
    }
    Ok(())
}
