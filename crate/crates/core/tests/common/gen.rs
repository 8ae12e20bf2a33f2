//! Random straight-line-plus-control PHP programs with a single `echo` sink,
//! together with a brute-force model of what a backward slice keeps.
//!
//! Every statement carries a unique call name (`f3(..)`, `c7(..)`), so the
//! statement set of a slice can be read back from its text.

use std::collections::BTreeSet;
use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARS: [&str; 12] = ["a", "b", "c", "d", "e", "g", "h", "m", "n", "p", "q", "t"];

#[derive(Debug, Clone)]
pub enum Stmt {
    /// `$def = fN($uses..);`, `$def .= fN(..);` or `$def = $_GET['k'];`
    Simple {
        id: usize,
        def: String,
        compound: bool,
        uses: Vec<String>,
        source: bool,
    },
    If {
        id: usize,
        uses: Vec<String>,
        then: Vec<Stmt>,
        els: Vec<Stmt>,
    },
    While {
        id: usize,
        uses: Vec<String>,
        body: Vec<Stmt>,
    },
    /// `echo $taint . $other;`
    Sink { taint: String, other: String },
}

#[derive(Debug, Clone)]
pub struct GenProgram {
    pub stmts: Vec<Stmt>,
    pub taint: String,
}

struct Gen {
    rng: ChaCha8Rng,
    next: usize,
    budget: usize,
}

impl Gen {
    fn var(&mut self) -> String {
        VARS[self.rng.random_range(0..VARS.len())].to_string()
    }

    fn uses(&mut self) -> Vec<String> {
        let n = [0, 1, 1, 1, 2][self.rng.random_range(0..5)];
        (0..n).map(|_| self.var()).collect()
    }

    fn block(&mut self, depth: usize, want: usize) -> Vec<Stmt> {
        let mut out = Vec::new();
        for _ in 0..want {
            if self.budget == 0 {
                break;
            }
            self.budget -= 1;
            self.next += 1;
            let id = self.next;
            let roll = self.rng.random_range(0..10);
            let stmt = if depth < 3 && roll < 2 {
                let uses = self.uses();
                let n_then = self.rng.random_range(1..4);
                let then = self.block(depth + 1, n_then);
                let n_else = self.rng.random_range(0..3);
                let els = self.block(depth + 1, n_else);
                Stmt::If {
                    id,
                    uses,
                    then,
                    els,
                }
            } else if depth < 3 && roll < 3 {
                let uses = self.uses();
                let n = self.rng.random_range(1..4);
                let body = self.block(depth + 1, n);
                Stmt::While { id, uses, body }
            } else {
                let source = roll == 9;
                Stmt::Simple {
                    id,
                    def: self.var(),
                    compound: !source && self.rng.random_bool(0.2),
                    uses: if source { Vec::new() } else { self.uses() },
                    source,
                }
            };
            out.push(stmt);
        }
        out
    }
}

/// A program of at most `max_stmts` statements (sink included).
pub fn random_program(seed: u64, max_stmts: usize) -> GenProgram {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        next: 0,
        budget: max_stmts - 1,
    };
    let want = g.rng.random_range(3..max_stmts);
    let mut stmts = g.block(0, want);
    let taint = g.var();
    let other = loop {
        let v = g.var();
        if v != taint {
            break v;
        }
    };
    let sink = Stmt::Sink {
        taint: taint.clone(),
        other,
    };
    // Drop the sink somewhere, possibly inside a control statement.
    insert_sink(&mut stmts, sink, &mut g.rng);
    GenProgram { stmts, taint }
}

fn insert_sink(stmts: &mut Vec<Stmt>, sink: Stmt, rng: &mut ChaCha8Rng) {
    let pos = rng.random_range(0..=stmts.len());
    if pos < stmts.len() && rng.random_bool(0.4) {
        match &mut stmts[pos] {
            Stmt::If { then, .. } => return insert_sink(then, sink, rng),
            Stmt::While { body, .. } => return insert_sink(body, sink, rng),
            _ => {}
        }
    }
    stmts.insert(pos, sink);
}

fn args(uses: &[String]) -> String {
    uses.iter()
        .map(|u| format!("${u}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn emit_block(stmts: &[Stmt], indent: usize, out: &mut String) {
    let pad = "    ".repeat(indent);
    for s in stmts {
        match s {
            Stmt::Simple {
                id,
                def,
                compound,
                uses,
                source,
            } => {
                if *source {
                    writeln!(out, "{pad}${def} = $_GET['k{id}'];").unwrap();
                } else {
                    let op = if *compound { ".=" } else { "=" };
                    writeln!(out, "{pad}${def} {op} f{id}({});", args(uses)).unwrap();
                }
            }
            Stmt::If {
                id,
                uses,
                then,
                els,
            } => {
                writeln!(out, "{pad}if (c{id}({})) {{", args(uses)).unwrap();
                emit_block(then, indent + 1, out);
                if els.is_empty() {
                    writeln!(out, "{pad}}}").unwrap();
                } else {
                    writeln!(out, "{pad}}} else {{").unwrap();
                    emit_block(els, indent + 1, out);
                    writeln!(out, "{pad}}}").unwrap();
                }
            }
            Stmt::While { id, uses, body } => {
                writeln!(out, "{pad}while (c{id}({})) {{", args(uses)).unwrap();
                emit_block(body, indent + 1, out);
                writeln!(out, "{pad}}}").unwrap();
            }
            Stmt::Sink { taint, other } => writeln!(out, "{pad}echo ${taint} . ${other};").unwrap(),
        }
    }
}

impl GenProgram {
    pub fn source(&self) -> String {
        let mut out = String::from("<?php\n");
        emit_block(&self.stmts, 0, &mut out);
        out
    }

    pub fn size(&self) -> usize {
        fn count(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Stmt::If { then, els, .. } => 1 + count(then) + count(els),
                    Stmt::While { body, .. } => 1 + count(body),
                    _ => 1,
                })
                .sum()
        }
        count(&self.stmts)
    }

    /// Names (`fN`, `kN`, `cN`) of the statements a slice must keep, by
    /// naive iteration to a fixed point. The sink itself is implied.
    pub fn oracle_slice(&self) -> BTreeSet<String> {
        struct Flat {
            name: String,
            defs: Vec<String>,
            uses: Vec<String>,
            controls: Vec<usize>,
            is_sink: bool,
        }
        fn flatten(stmts: &[Stmt], controls: &mut Vec<usize>, out: &mut Vec<Flat>) {
            for s in stmts {
                let idx = out.len();
                match s {
                    Stmt::Simple {
                        id,
                        def,
                        compound,
                        uses,
                        source,
                    } => {
                        let mut u = uses.clone();
                        if *compound {
                            u.push(def.clone());
                        }
                        let name = if *source {
                            format!("k{id}")
                        } else {
                            format!("f{id}")
                        };
                        out.push(Flat {
                            name,
                            defs: vec![def.clone()],
                            uses: u,
                            controls: controls.clone(),
                            is_sink: false,
                        });
                    }
                    Stmt::Sink { taint, .. } => out.push(Flat {
                        name: "sink".into(),
                        defs: vec![],
                        uses: vec![taint.clone()],
                        controls: controls.clone(),
                        is_sink: true,
                    }),
                    Stmt::If {
                        id,
                        uses,
                        then,
                        els,
                    } => {
                        out.push(Flat {
                            name: format!("c{id}"),
                            defs: vec![],
                            uses: uses.clone(),
                            controls: controls.clone(),
                            is_sink: false,
                        });
                        controls.push(idx);
                        flatten(then, controls, out);
                        flatten(els, controls, out);
                        controls.pop();
                    }
                    Stmt::While { id, uses, body } => {
                        out.push(Flat {
                            name: format!("c{id}"),
                            defs: vec![],
                            uses: uses.clone(),
                            controls: controls.clone(),
                            is_sink: false,
                        });
                        controls.push(idx);
                        flatten(body, controls, out);
                        controls.pop();
                    }
                }
            }
        }
        let mut flat = Vec::new();
        flatten(&self.stmts, &mut Vec::new(), &mut flat);

        let mut kept = vec![false; flat.len()];
        let sink = flat.iter().position(|f| f.is_sink).expect("one sink");
        kept[sink] = true;
        loop {
            let relevant: BTreeSet<&str> = flat
                .iter()
                .zip(&kept)
                .filter(|(_, k)| **k)
                .flat_map(|(f, _)| f.uses.iter().map(String::as_str))
                .collect();
            let mut next = kept.clone();
            for (i, f) in flat.iter().enumerate() {
                if f.defs.iter().any(|d| relevant.contains(d.as_str())) {
                    next[i] = true;
                }
            }
            for i in 0..flat.len() {
                if next[i] {
                    for &c in &flat[i].controls {
                        next[c] = true;
                    }
                }
            }
            if next == kept {
                break;
            }
            kept = next;
        }
        flat.iter()
            .zip(&kept)
            .filter(|(f, k)| **k && !f.is_sink)
            .map(|(f, _)| f.name.clone())
            .collect()
    }
}

/// Statement names occurring in sliced code.
pub fn names_in(code: &str) -> BTreeSet<String> {
    let bytes = code.as_bytes();
    let mut out = BTreeSet::new();
    for i in 0..bytes.len() {
        let c = bytes[i];
        let word_start = i == 0
            || !(bytes[i - 1].is_ascii_alphanumeric()
                || bytes[i - 1] == b'_'
                || bytes[i - 1] == b'$');
        if word_start && matches!(c, b'f' | b'c' | b'k') {
            let digits: String = code[i + 1..]
                .chars()
                .take_while(char::is_ascii_digit)
                .collect();
            if !digits.is_empty() {
                out.insert(format!("{}{digits}", c as char));
            }
        }
    }
    out
}
