//! Frontend for the simulation DSL: lexer, parser, AST and canonical printer.
//!
//! A spec file declares clouds, exactly one simulator, simulation nodes,
//! platforms, edge devices and (symbolic) IoT devices. Declaration order is
//! free; `//` comments run to end of line; whitespace is insignificant.

mod ast;
mod lexer;
mod parser;
mod printer;

pub use ast::*;
pub use lexer::{tokenize, LexError, Tok, Token};
pub use parser::{parse, ParseError};
pub use printer::print;

/// Line/column position in source text, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, serde::Serialize, serde::Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}
