//! Loads the program corpus.
#![allow(dead_code)]

use std::ops::Range;
use std::path::PathBuf;

use chad::lang::{parse, Program, Term, Ty};

pub struct Entry {
    pub name: String,
    pub program: Program,
    /// Range random reals are drawn from, from a `; domain: a..b` header.
    pub domain: Range<f64>,
}

impl Entry {
    pub fn higher_order(&self) -> bool {
        let mut found = false;
        self.program.body.walk(&mut |t| found |= matches!(t, Term::Lam { .. }));
        found
    }

    pub fn has_arrays(&self) -> bool {
        self.program.body.mentions_array() || self.program.ctx.tys().iter().any(has_array)
    }
}

fn has_array(ty: &Ty) -> bool {
    match ty {
        Ty::Array(_) => true,
        Ty::Prod(a, b) | Ty::Sum(a, b) | Ty::Arrow(a, b) => has_array(a) || has_array(b),
        _ => false,
    }
}

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn corpus() -> Vec<Entry> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "chad"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let src = std::fs::read_to_string(&path).unwrap();
            let program = parse(&src).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let domain = src
                .lines()
                .find_map(|l| l.strip_prefix("; domain:"))
                .map(|d| {
                    let (a, b) = d.trim().split_once("..").expect("domain is `a..b`");
                    a.parse().unwrap()..b.parse().unwrap()
                })
                .unwrap_or(0.5..1.5);
            Entry { name: path.file_stem().unwrap().to_string_lossy().into_owned(), program, domain }
        })
        .collect()
}
