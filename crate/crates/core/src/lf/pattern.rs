//! The restricted regular-expression dialect used by regex labeling
//! functions: literals, bracket and perl classes (`\d`, `\w`, `\s`), `.`,
//! `*`, `+`, `?`, `{m,n}`, alternation, groups and the `^`/`$` anchors.
//! Perl classes are ASCII-only. Patterns are compiled to the `regex` crate,
//! which matches in linear time.

use std::fmt;

use regex::Regex;
use regex_syntax::ast::{
    parse::Parser, Assertion, AssertionKind, Ast, ClassPerlKind, ClassSet, ClassSetItem,
    GroupKind, Span,
};

use crate::error::{Error, Result};

#[derive(Clone)]
pub struct Pattern {
    source: String,
    partial: Regex,
    full: Regex,
}

impl Pattern {
    pub fn new(source: &str) -> Result<Self> {
        let translated = translate(source)?;
        let compile = |p: &str| {
            Regex::new(p).map_err(|e| Error::Pattern {
                offset: 0,
                message: e.to_string(),
            })
        };
        Ok(Pattern {
            source: source.to_string(),
            partial: compile(&translated)?,
            full: compile(&format!("^(?:{translated})$"))?,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn is_match(&self, text: &str, full_match: bool) -> bool {
        if full_match {
            self.full.is_match(text)
        } else {
            self.partial.is_match(text)
        }
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Eq for Pattern {}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Pattern").field(&self.source).finish()
    }
}

fn reject(span: &Span, what: &str) -> Error {
    Error::Pattern {
        offset: span.start.offset,
        message: format!("{what} is not supported"),
    }
}

/// Validates `source` against the dialect and rewrites perl classes to
/// their ASCII bracket forms.
fn translate(source: &str) -> Result<String> {
    let ast = Parser::new().parse(source).map_err(|e| Error::Pattern {
        offset: e.span().start.offset,
        message: e.kind().to_string(),
    })?;
    let mut edits = Vec::new();
    check(&ast, &mut edits)?;
    let mut out = source.to_string();
    edits.sort_by_key(|e| std::cmp::Reverse(e.0));
    for (start, end, text) in edits {
        out.replace_range(start..end, &text);
    }
    Ok(out)
}

const DIGIT: &str = "0-9";
const WORD: &str = "0-9A-Za-z_";
const SPACE: &str = "\\t\\n\\x0B\\x0C\\r ";

fn perl_set(kind: &ClassPerlKind) -> &'static str {
    match kind {
        ClassPerlKind::Digit => DIGIT,
        ClassPerlKind::Word => WORD,
        ClassPerlKind::Space => SPACE,
    }
}

type Edit = (usize, usize, String);

fn check(ast: &Ast, edits: &mut Vec<Edit>) -> Result<()> {
    match ast {
        Ast::Empty(_) | Ast::Literal(_) | Ast::Dot(_) => Ok(()),
        Ast::Flags(f) => Err(reject(&f.span, "inline flags")),
        Ast::ClassUnicode(c) => Err(reject(&c.span, "unicode class")),
        Ast::Assertion(a) => check_assertion(a),
        Ast::ClassPerl(c) => {
            let neg = if c.negated { "^" } else { "" };
            edits.push((
                c.span.start.offset,
                c.span.end.offset,
                format!("[{neg}{}]", perl_set(&c.kind)),
            ));
            Ok(())
        }
        Ast::ClassBracketed(c) => check_set(&c.kind, edits),
        Ast::Repetition(r) => {
            if !r.greedy {
                return Err(reject(&r.op.span, "lazy repetition"));
            }
            check(&r.ast, edits)
        }
        Ast::Group(g) => {
            if let GroupKind::NonCapturing(flags) = &g.kind {
                if !flags.items.is_empty() {
                    return Err(reject(&flags.span, "group flags"));
                }
            }
            check(&g.ast, edits)
        }
        Ast::Alternation(a) => a.asts.iter().try_for_each(|a| check(a, edits)),
        Ast::Concat(c) => c.asts.iter().try_for_each(|a| check(a, edits)),
    }
}

fn check_assertion(a: &Assertion) -> Result<()> {
    match a.kind {
        AssertionKind::StartLine | AssertionKind::EndLine => Ok(()),
        _ => Err(reject(&a.span, "assertion")),
    }
}

fn check_set(set: &ClassSet, edits: &mut Vec<Edit>) -> Result<()> {
    match set {
        ClassSet::BinaryOp(op) => Err(reject(&op.span, "class set operation")),
        ClassSet::Item(item) => check_item(item, edits),
    }
}

fn check_item(item: &ClassSetItem, edits: &mut Vec<Edit>) -> Result<()> {
    match item {
        ClassSetItem::Empty(_)
        | ClassSetItem::Literal(_)
        | ClassSetItem::Range(_)
        | ClassSetItem::Ascii(_) => Ok(()),
        ClassSetItem::Unicode(c) => Err(reject(&c.span, "unicode class")),
        ClassSetItem::Perl(c) => {
            if c.negated {
                return Err(reject(&c.span, "negated perl class inside brackets"));
            }
            edits.push((c.span.start.offset, c.span.end.offset, perl_set(&c.kind).to_string()));
            Ok(())
        }
        ClassSetItem::Bracketed(c) => Err(reject(&c.span, "nested class")),
        ClassSetItem::Union(u) => u.items.iter().try_for_each(|i| check_item(i, edits)),
    }
}
