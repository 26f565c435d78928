use serde::{Deserialize, Serialize};

use super::RelationStatement;
use crate::error::{Error, Result};

pub const CLS: &str = "[CLS]";
pub const E1: &str = "[E1]";
pub const E1_END: &str = "[/E1]";
pub const E2: &str = "[E2]";
pub const E2_END: &str = "[/E2]";
pub const SUBJECT_MARK: &str = "@";
pub const OBJECT_MARK: &str = "&";
pub const TYPE_MARK: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarkerScheme {
    /// `[E1] head [/E1] ... [E2] tail [/E2]`
    EntityMarkers,
    /// `@ * type words * head @ ... & * type words * tail &`
    TypeMarkers,
}

/// Encoder-ready token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormattedInput {
    pub tokens: Vec<String>,
    /// Index of the first marker token of the head entity.
    pub head_marker_pos: usize,
    /// Index of the first marker token of the tail entity.
    pub tail_marker_pos: usize,
    pub scheme: MarkerScheme,
    /// `true` for every token that was inserted (classification token, markers, type words).
    pub inserted: Vec<bool>,
}

impl FormattedInput {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The original sentence: every token that was not inserted by the formatter.
    pub fn original_tokens(&self) -> Vec<&str> {
        self.tokens
            .iter()
            .zip(&self.inserted)
            .filter(|(_, &ins)| !ins)
            .map(|(t, _)| t.as_str())
            .collect()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Entity-type label to marker words: lowercase, underscores become spaces.
pub fn type_phrase(entity_type: &str) -> Vec<String> {
    entity_type
        .to_lowercase()
        .replace('_', " ")
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

struct Builder {
    tokens: Vec<String>,
    inserted: Vec<bool>,
}

impl Builder {
    fn mark(&mut self, t: &str) -> usize {
        self.tokens.push(t.to_owned());
        self.inserted.push(true);
        self.tokens.len() - 1
    }

    fn word(&mut self, t: &str) {
        self.tokens.push(t.to_owned());
        self.inserted.push(false);
    }
}

/// Shared walk: `open(entity)` runs before the entity's first token and
/// returns the marker position, `close(entity)` after its last token.
fn wrap(
    stmt: &RelationStatement,
    scheme: MarkerScheme,
    open: impl Fn(&mut Builder, bool) -> usize,
    close: impl Fn(&mut Builder, bool),
) -> FormattedInput {
    let mut b = Builder {
        tokens: Vec::with_capacity(stmt.tokens().len() + 12),
        inserted: Vec::with_capacity(stmt.tokens().len() + 12),
    };
    b.mark(CLS);
    let (head, tail) = (stmt.head(), stmt.tail());
    let (mut head_pos, mut tail_pos) = (0, 0);
    for (i, tok) in stmt.tokens().iter().enumerate() {
        // closers before openers so adjacent spans nest without a gap
        if i == head.end {
            close(&mut b, true);
        }
        if i == tail.end {
            close(&mut b, false);
        }
        if i == head.start {
            head_pos = open(&mut b, true);
        }
        if i == tail.start {
            tail_pos = open(&mut b, false);
        }
        b.word(tok);
    }
    let n = stmt.tokens().len();
    if head.end == n {
        close(&mut b, true);
    }
    if tail.end == n {
        close(&mut b, false);
    }
    FormattedInput {
        tokens: b.tokens,
        head_marker_pos: head_pos,
        tail_marker_pos: tail_pos,
        scheme,
        inserted: b.inserted,
    }
}

pub fn format_entity_markers(stmt: &RelationStatement) -> FormattedInput {
    wrap(
        stmt,
        MarkerScheme::EntityMarkers,
        |b, is_head| b.mark(if is_head { E1 } else { E2 }),
        |b, is_head| {
            b.mark(if is_head { E1_END } else { E2_END });
        },
    )
}

pub fn format_type_markers(stmt: &RelationStatement) -> Result<FormattedInput> {
    let (Some(head_type), Some(tail_type)) = (stmt.head_type(), stmt.tail_type()) else {
        return Err(Error::MissingEntityType);
    };
    let head_words = type_phrase(head_type);
    let tail_words = type_phrase(tail_type);
    Ok(wrap(
        stmt,
        MarkerScheme::TypeMarkers,
        |b, is_head| {
            let (mark, words) = if is_head {
                (SUBJECT_MARK, &head_words)
            } else {
                (OBJECT_MARK, &tail_words)
            };
            let pos = b.mark(mark);
            b.mark(TYPE_MARK);
            for w in words {
                b.mark(w);
            }
            b.mark(TYPE_MARK);
            pos
        },
        |b, is_head| {
            b.mark(if is_head { SUBJECT_MARK } else { OBJECT_MARK });
        },
    ))
}

pub fn format_input(stmt: &RelationStatement, scheme: MarkerScheme) -> Result<FormattedInput> {
    match scheme {
        MarkerScheme::EntityMarkers => Ok(format_entity_markers(stmt)),
        MarkerScheme::TypeMarkers => format_type_markers(stmt),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lebron() -> RelationStatement {
        RelationStatement::from_text(
            "Lebron James currently plays for LA Lakers team.",
            0..2,
            5..7,
            Some("per:employee_of"),
        )
        .unwrap()
    }

    #[test]
    fn entity_markers_wrap_both_entities() {
        let f = format_entity_markers(&lebron());
        assert_eq!(
            f.text(),
            "[CLS] [E1] Lebron James [/E1] currently plays for [E2] LA Lakers [/E2] team."
        );
        assert_eq!(f.tokens[f.head_marker_pos], "[E1]");
        assert_eq!(f.tokens[f.tail_marker_pos], "[E2]");
    }

    #[test]
    fn type_markers_match_the_displayed_layout() {
        let s = RelationStatement::from_text(
            "Lebron James plays for LA Lakers team.",
            0..2,
            4..6,
            None,
        )
        .unwrap()
        .with_types("PERSON", "ORGANIZATION");
        let f = format_type_markers(&s).unwrap();
        assert_eq!(
            f.text(),
            "[CLS] @ * person * Lebron James @ plays for & * organization * LA Lakers & team."
        );
        assert_eq!(f.tokens[f.head_marker_pos], "@");
        assert_eq!(f.tokens[f.tail_marker_pos], "&");
    }

    #[test]
    fn type_label_becomes_lowercase_phrase() {
        assert_eq!(type_phrase("STATE_OR_PROVINCE"), ["state", "or", "province"]);
        assert_eq!(type_phrase("PERSON"), ["person"]);
        assert_eq!(type_phrase("Misc-Type"), ["misc-type"]);
    }

    #[test]
    fn untyped_statement_cannot_use_type_markers() {
        assert!(matches!(
            format_type_markers(&lebron()),
            Err(Error::MissingEntityType)
        ));
    }

    #[test]
    fn adjacent_entities_nest_without_gap() {
        let s = RelationStatement::from_text("a b c", 0..1, 1..2, None).unwrap();
        let f = format_entity_markers(&s);
        assert_eq!(f.text(), "[CLS] [E1] a [/E1] [E2] b [/E2] c");
        let s = RelationStatement::from_text("a b c", 1..2, 0..1, None).unwrap();
        assert_eq!(
            format_entity_markers(&s).text(),
            "[CLS] [E2] a [/E2] [E1] b [/E1] c"
        );
    }

    #[test]
    fn marker_order_follows_span_order_on_every_placement() {
        // all ordered, non-overlapping single- and two-token spans in a 5-token sentence
        let text = "t0 t1 t2 t3 t4";
        for hs in 0..5 {
            for he in hs + 1..=5 {
                for ts in 0..5 {
                    for te in ts + 1..=5 {
                        if hs < te && ts < he {
                            continue;
                        }
                        let s = RelationStatement::from_text(text, hs..he, ts..te, None).unwrap();
                        let f = format_entity_markers(&s);
                        let e1 = f.tokens.iter().position(|t| t == E1).unwrap();
                        let e2 = f.tokens.iter().position(|t| t == E2).unwrap();
                        assert_eq!(e1 < e2, hs < ts, "{:?}", f.text());
                        assert_eq!(f.tokens[e1 + 1], format!("t{hs}"));
                        assert_eq!(f.tokens[e2 + 1], format!("t{ts}"));
                        let e1_end = f.tokens.iter().position(|t| t == E1_END).unwrap();
                        assert_eq!(e1_end - e1 - 1, he - hs);
                    }
                }
            }
        }
    }

    fn arb_statement() -> impl Strategy<Value = RelationStatement> {
        (3usize..12)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec("[a-z]{1,5}", n),
                    prop::sample::subsequence((0..=n).collect::<Vec<_>>(), 4),
                    any::<bool>(),
                    prop::sample::select(vec!["PERSON", "STATE_OR_PROVINCE", "ORG"]),
                )
            })
            .prop_map(|(tokens, cuts, swap, ty)| {
                // four sorted distinct cut points give two disjoint non-empty spans
                let (first, second) = (cuts[0]..cuts[1], cuts[2]..cuts[3]);
                let (head, tail) = if swap { (second, first) } else { (first, second) };
                RelationStatement::new(tokens, head, tail, Some(ty.into()), Some("LOC".into()), None)
                    .unwrap()
            })
    }

    proptest! {
        #[test]
        fn non_inserted_tokens_round_trip(stmt in arb_statement()) {
            for scheme in [MarkerScheme::EntityMarkers, MarkerScheme::TypeMarkers] {
                let f = format_input(&stmt, scheme).unwrap();
                prop_assert_eq!(&f.tokens[0], CLS);
                prop_assert_eq!(f.original_tokens(), stmt.tokens().iter().map(String::as_str).collect::<Vec<_>>());
                prop_assert!(f.inserted[f.head_marker_pos]);
                prop_assert!(f.inserted[f.tail_marker_pos]);
                // entity words appear verbatim and contiguously
                for ent in [stmt.head_tokens(), stmt.tail_tokens()] {
                    prop_assert!(f.tokens.windows(ent.len()).any(|w| w == ent));
                }
            }
        }
    }
}
