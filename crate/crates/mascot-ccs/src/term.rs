use std::fmt;

use crate::CcsError;

/// A process term over atomic task labels.
///
/// Concrete syntax accepted by [`Term::parse`]:
///
/// ```text
/// term   := seq ('|' seq)*
/// seq    := factor ('.' factor)*
/// factor := IDENT | '0' | '(' term ')' | '@' IDENT '(' term ')'
/// ```
///
/// `.` is prefix/sequencing and binds tighter than `|`. `0` is the terminated
/// process. `@name(body)` introduces a recursion; inside the body the bare
/// identifier `name` refers back to the recursion rather than to an atom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    /// Terminated process; offers no tasks.
    Idle,
    /// A single atomic task.
    Atom(String),
    /// Run the first term to completion, then the second.
    Seq(Box<Term>, Box<Term>),
    /// Interleaved parallel composition.
    Par(Vec<Term>),
    /// Named recursion binder.
    Rec(String, Box<Term>),
    /// Reference to an enclosing recursion binder.
    Var(String),
}

impl Term {
    pub fn atom(label: &str) -> Term {
        Term::Atom(label.to_string())
    }

    /// Builds `a.b.c...` from a list of labels.
    pub fn chain<I: IntoIterator<Item = S>, S: AsRef<str>>(labels: I) -> Term {
        let mut items: Vec<Term> = labels.into_iter().map(|l| Term::atom(l.as_ref())).collect();
        if items.is_empty() {
            return Term::Idle;
        }
        let mut term = items.pop().unwrap();
        while let Some(prev) = items.pop() {
            term = Term::Seq(Box::new(prev), Box::new(term));
        }
        term
    }

    pub fn parse(input: &str) -> Result<Term, CcsError> {
        Parser::new(input).parse()
    }

    /// All atom labels occurring in the term, including under recursion.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels(&self, out: &mut Vec<String>) {
        match self {
            Term::Idle | Term::Var(_) => {}
            Term::Atom(a) => {
                if !out.contains(a) {
                    out.push(a.clone());
                }
            }
            Term::Seq(p, q) => {
                p.collect_labels(out);
                q.collect_labels(out);
            }
            Term::Par(ts) => {
                for t in ts {
                    t.collect_labels(out);
                }
            }
            Term::Rec(_, b) => b.collect_labels(out),
        }
    }

    pub fn is_recursive(&self) -> bool {
        match self {
            Term::Idle | Term::Atom(_) => false,
            Term::Var(_) | Term::Rec(_, _) => true,
            Term::Seq(p, q) => p.is_recursive() || q.is_recursive(),
            Term::Par(ts) => ts.iter().any(Term::is_recursive),
        }
    }

    /// Every recursion body must begin with an atom before reaching the
    /// recursion variable again; otherwise unrolling makes no progress.
    pub fn check_guarded(&self) -> Result<(), CcsError> {
        match self {
            Term::Idle | Term::Atom(_) | Term::Var(_) => Ok(()),
            Term::Seq(p, q) => {
                p.check_guarded()?;
                q.check_guarded()
            }
            Term::Par(ts) => ts.iter().try_for_each(Term::check_guarded),
            Term::Rec(name, body) => {
                if !body.begins_with_atom() {
                    return Err(CcsError::UnguardedRecursion(name.clone()));
                }
                body.check_guarded()
            }
        }
    }

    fn begins_with_atom(&self) -> bool {
        match self {
            Term::Atom(_) => true,
            Term::Idle | Term::Var(_) => false,
            Term::Seq(p, q) => {
                if matches!(**p, Term::Idle) {
                    q.begins_with_atom()
                } else {
                    p.begins_with_atom()
                }
            }
            Term::Par(ts) => !ts.is_empty() && ts.iter().all(Term::begins_with_atom),
            Term::Rec(_, b) => b.begins_with_atom(),
        }
    }

    /// Expands each recursion binder `depth` times; deeper references become
    /// [`Term::Idle`]. The result is recursion-free.
    pub fn unroll(&self, depth: usize) -> Term {
        match self {
            Term::Idle => Term::Idle,
            Term::Atom(a) => Term::Atom(a.clone()),
            Term::Var(_) => Term::Idle,
            Term::Seq(p, q) => Term::Seq(Box::new(p.unroll(depth)), Box::new(q.unroll(depth))),
            Term::Par(ts) => Term::Par(ts.iter().map(|t| t.unroll(depth)).collect()),
            Term::Rec(name, body) => {
                if depth == 0 {
                    Term::Idle
                } else {
                    body.substitute(name, self).unroll(depth - 1)
                }
            }
        }
    }

    fn substitute(&self, name: &str, with: &Term) -> Term {
        match self {
            Term::Idle => Term::Idle,
            Term::Atom(a) => Term::Atom(a.clone()),
            Term::Var(n) if n == name => with.clone(),
            Term::Var(n) => Term::Var(n.clone()),
            Term::Seq(p, q) => Term::Seq(
                Box::new(p.substitute(name, with)),
                Box::new(q.substitute(name, with)),
            ),
            Term::Par(ts) => Term::Par(ts.iter().map(|t| t.substitute(name, with)).collect()),
            // An inner binder with the same name shadows the outer one.
            Term::Rec(n, _) if n == name => self.clone(),
            Term::Rec(n, b) => Term::Rec(n.clone(), Box::new(b.substitute(name, with))),
        }
    }

    pub(crate) fn is_terminated(&self) -> bool {
        match self {
            Term::Idle | Term::Var(_) => true,
            Term::Atom(_) => false,
            Term::Seq(p, q) => p.is_terminated() && q.is_terminated(),
            Term::Par(ts) => ts.iter().all(Term::is_terminated),
            Term::Rec(_, _) => false,
        }
    }

    /// One small step: every (label, successor) pair the term can take.
    /// Callers unroll recursion first; a bare `Rec`/`Var` offers no steps.
    pub(crate) fn steps(&self) -> Vec<(String, Term)> {
        match self {
            Term::Idle | Term::Var(_) | Term::Rec(_, _) => Vec::new(),
            Term::Atom(a) => vec![(a.clone(), Term::Idle)],
            Term::Seq(p, q) => {
                if p.is_terminated() {
                    q.steps()
                } else {
                    p.steps()
                        .into_iter()
                        .map(|(l, p2)| (l, Term::Seq(Box::new(p2), q.clone())))
                        .collect()
                }
            }
            Term::Par(ts) => {
                let mut out = Vec::new();
                for (i, t) in ts.iter().enumerate() {
                    for (l, t2) in t.steps() {
                        let mut branch = ts.clone();
                        branch[i] = t2;
                        out.push((l, Term::Par(branch)));
                    }
                }
                out
            }
        }
    }

    /// Flattens the term into parallel sequential components (lists of
    /// labels), unrolling recursion first when a depth is given. Errors if a
    /// component nests further parallelism.
    pub fn components(&self, depth: Option<usize>) -> Result<Vec<Vec<String>>, CcsError> {
        self.check_guarded()?;
        let flat = if self.is_recursive() {
            let d = depth.ok_or(CcsError::UnboundedTerm)?;
            self.unroll(d)
        } else {
            self.clone()
        };
        let branches = match flat {
            Term::Par(ts) => ts,
            other => vec![other],
        };
        let mut comps = Vec::new();
        for b in branches {
            let mut chain = Vec::new();
            b.flatten_chain(&mut chain)?;
            if !chain.is_empty() {
                comps.push(chain);
            }
        }
        Ok(comps)
    }

    fn flatten_chain(&self, out: &mut Vec<String>) -> Result<(), CcsError> {
        match self {
            Term::Idle | Term::Var(_) => Ok(()),
            Term::Atom(a) => {
                out.push(a.clone());
                Ok(())
            }
            Term::Seq(p, q) => {
                p.flatten_chain(out)?;
                q.flatten_chain(out)
            }
            Term::Par(_) | Term::Rec(_, _) => Err(CcsError::NotSequentialComponents),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Idle => write!(f, "0"),
            Term::Atom(a) | Term::Var(a) => write!(f, "{a}"),
            Term::Seq(p, q) => {
                let lhs = if matches!(**p, Term::Par(_)) {
                    format!("({p})")
                } else {
                    p.to_string()
                };
                let rhs = if matches!(**q, Term::Par(_)) {
                    format!("({q})")
                } else {
                    q.to_string()
                };
                write!(f, "{lhs}.{rhs}")
            }
            Term::Par(ts) => {
                let parts: Vec<String> = ts.iter().map(Term::to_string).collect();
                write!(f, "{}", parts.join("|"))
            }
            Term::Rec(n, b) => write!(f, "@{n}({b})"),
        }
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    binders: Vec<String>,
}

impl<'a> Parser<'a> {
    fn new(input: &'a str) -> Self {
        Parser {
            bytes: input.as_bytes(),
            pos: 0,
            binders: Vec::new(),
        }
    }

    fn parse(mut self) -> Result<Term, CcsError> {
        let t = self.parse_par()?;
        self.skip_ws();
        if self.pos != self.bytes.len() {
            return Err(self.err("trailing input"));
        }
        Ok(t)
    }

    fn parse_par(&mut self) -> Result<Term, CcsError> {
        let mut branches = vec![self.parse_seq()?];
        loop {
            self.skip_ws();
            if self.eat(b'|') {
                branches.push(self.parse_seq()?);
            } else {
                break;
            }
        }
        if branches.len() == 1 {
            Ok(branches.pop().unwrap())
        } else {
            Ok(Term::Par(branches))
        }
    }

    fn parse_seq(&mut self) -> Result<Term, CcsError> {
        let mut factors = vec![self.parse_factor()?];
        loop {
            self.skip_ws();
            if self.eat(b'.') {
                factors.push(self.parse_factor()?);
            } else {
                break;
            }
        }
        let mut term = factors.pop().unwrap();
        while let Some(prev) = factors.pop() {
            term = Term::Seq(Box::new(prev), Box::new(term));
        }
        Ok(term)
    }

    fn parse_factor(&mut self) -> Result<Term, CcsError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let t = self.parse_par()?;
                self.skip_ws();
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(t)
            }
            Some(b'@') => {
                self.pos += 1;
                let name = self.ident()?;
                self.skip_ws();
                if !self.eat(b'(') {
                    return Err(self.err("expected `(` after recursion name"));
                }
                self.binders.push(name.clone());
                let body = self.parse_par()?;
                self.binders.pop();
                self.skip_ws();
                if !self.eat(b')') {
                    return Err(self.err("expected `)` closing recursion body"));
                }
                Ok(Term::Rec(name, Box::new(body)))
            }
            Some(b'0') => {
                self.pos += 1;
                Ok(Term::Idle)
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let name = self.ident()?;
                if self.binders.contains(&name) {
                    Ok(Term::Var(name))
                } else {
                    Ok(Term::Atom(name))
                }
            }
            _ => Err(self.err("expected an atom, `0`, `(` or `@`")),
        }
    }

    fn ident(&mut self) -> Result<String, CcsError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(self.err("expected identifier"));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err(&self, msg: &str) -> CcsError {
        CcsError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_two_component_system() {
        let t = Term::parse("a.b.c|x.y.z").unwrap();
        assert_eq!(t.to_string(), "a.b.c|x.y.z");
        assert_eq!(t.labels(), vec!["a", "b", "c", "x", "y", "z"]);
    }

    #[test]
    fn parses_recursion_and_distinguishes_vars_from_atoms() {
        let t = Term::parse("@loop(a.loop)").unwrap();
        assert_eq!(
            t,
            Term::Rec(
                "loop".into(),
                Box::new(Term::Seq(
                    Box::new(Term::atom("a")),
                    Box::new(Term::Var("loop".into()))
                ))
            )
        );
        assert!(t.is_recursive());
        t.check_guarded().unwrap();
    }

    #[test]
    fn rejects_unguarded_recursion() {
        let t = Term::parse("@x(x|a)").unwrap();
        assert!(matches!(
            t.check_guarded(),
            Err(CcsError::UnguardedRecursion(_))
        ));
    }

    #[test]
    fn rejects_trailing_garbage() {
        assert!(matches!(Term::parse("a.b)"), Err(CcsError::Parse { .. })));
        assert!(matches!(Term::parse(""), Err(CcsError::Parse { .. })));
    }

    #[test]
    fn unroll_bounds_recursion() {
        let t = Term::parse("@loop(a.loop)").unwrap();
        let flat = t.unroll(3);
        assert!(!flat.is_recursive());
        assert_eq!(flat.components(None).unwrap(), vec![vec!["a", "a", "a"]]);
    }

    #[test]
    fn components_reject_nested_parallelism() {
        let t = Term::parse("(a|b).c").unwrap();
        assert!(matches!(
            t.components(None),
            Err(CcsError::NotSequentialComponents)
        ));
    }
}
