//! Recursive-descent parser for the SELECT subset.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::SyntaxError;

const RESERVED: &[&str] = &[
    "ALL",
    "AND",
    "AS",
    "ASC",
    "BETWEEN",
    "BY",
    "CASE",
    "CAST",
    "CROSS",
    "DESC",
    "DISTINCT",
    "ELSE",
    "END",
    "EXCEPT",
    "EXISTS",
    "FALSE",
    "FROM",
    "FULL",
    "GROUP",
    "HAVING",
    "IN",
    "INNER",
    "INTERSECT",
    "IS",
    "JOIN",
    "LEFT",
    "LIKE",
    "LIMIT",
    "NOT",
    "NULL",
    "NULLS",
    "OFFSET",
    "ON",
    "OR",
    "ORDER",
    "OUTER",
    "OVER",
    "RIGHT",
    "SELECT",
    "THEN",
    "TRUE",
    "UNION",
    "USING",
    "WHEN",
    "WHERE",
    "WITH",
];

fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

pub(crate) fn parse(src: &str) -> Result<Script, SyntaxError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0 };
    let mut statements = Vec::new();
    loop {
        while p.eat(&Tok::Semi) {}
        if p.peek() == &Tok::Eof {
            break;
        }
        statements.push(p.statement()?);
        if !p.eat(&Tok::Semi) && p.peek() != &Tok::Eof {
            return Err(p.unexpected("`;` or end of input"));
        }
    }
    if statements.is_empty() {
        return Err(SyntaxError::new(0, "empty input"));
    }
    Ok(Script { statements })
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    /// End offset of the most recently consumed token.
    fn last_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.toks[self.pos - 1].span.end
        }
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<(), SyntaxError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Word { text, .. } => format!("`{text}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Op(o) => format!("`{o}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Eof => "end of input".into(),
        }
    }

    fn unexpected(&self, expected: &str) -> SyntaxError {
        SyntaxError::new(
            self.span().start,
            format!("expected {expected}, found {}", Self::describe(self.peek())),
        )
    }

    fn is_kw(&self, kw: &str) -> bool {
        self.is_kw_at(0, kw)
    }

    fn is_kw_at(&self, n: usize, kw: &str) -> bool {
        matches!(self.peek_at(n), Tok::Word { text, quoted: false } if text.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self) -> Result<Ident, SyntaxError> {
        match self.peek().clone() {
            Tok::Word { text, quoted } if quoted || !is_reserved(&text) => {
                let span = self.advance().span;
                Ok(Ident {
                    value: if quoted { text } else { text.to_ascii_lowercase() },
                    quoted,
                    span,
                })
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    /// A plain identifier that is not a reserved word.
    fn at_ident(&self) -> bool {
        matches!(self.peek(), Tok::Word { text, quoted } if *quoted || !is_reserved(text))
    }

    fn statement(&mut self) -> Result<Statement, SyntaxError> {
        let start = self.span();
        if self.is_kw("SELECT") || self.peek() == &Tok::LParen {
            return Ok(Statement::Query(Box::new(self.query()?)));
        }
        if self.is_kw("WITH") {
            let with_start = self.pos;
            self.advance();
            self.eat_kw("RECURSIVE");
            self.with_body()?;
            // `WITH ... DELETE` and friends are mutations behind a CTE.
            if let Tok::Word { text, quoted: false } = self.peek().clone() {
                if !text.eq_ignore_ascii_case("SELECT") {
                    return Ok(self.other(text, start));
                }
            }
            self.pos = with_start;
            return Ok(Statement::Query(Box::new(self.query()?)));
        }
        match self.peek().clone() {
            Tok::Word { text, quoted: false } => Ok(self.other(text, start)),
            _ => Err(self.unexpected("statement")),
        }
    }

    /// Skips a non-query statement up to the next `;`.
    fn other(&mut self, verb: String, start: Span) -> Statement {
        while !matches!(self.peek(), Tok::Semi | Tok::Eof) {
            self.advance();
        }
        Statement::Other {
            verb: verb.to_ascii_uppercase(),
            span: Span::new(start.start, self.last_end()),
        }
    }

    fn with_body(&mut self) -> Result<Vec<Cte>, SyntaxError> {
        let mut ctes = Vec::new();
        loop {
            let name = self.ident()?;
            let mut columns = Vec::new();
            if self.eat(&Tok::LParen) {
                columns = self.ident_list()?;
                self.expect(&Tok::RParen, "`)`")?;
            }
            self.expect_kw("AS")?;
            self.expect(&Tok::LParen, "`(`")?;
            let query = Box::new(self.query()?);
            self.expect(&Tok::RParen, "`)`")?;
            ctes.push(Cte { name, columns, query });
            if !self.eat(&Tok::Comma) {
                return Ok(ctes);
            }
        }
    }

    fn ident_list(&mut self) -> Result<Vec<Ident>, SyntaxError> {
        let mut out = vec![self.ident()?];
        while self.eat(&Tok::Comma) {
            out.push(self.ident()?);
        }
        Ok(out)
    }

    fn query(&mut self) -> Result<Query, SyntaxError> {
        let start = self.span().start;
        let with = if self.eat_kw("WITH") {
            let recursive = self.eat_kw("RECURSIVE");
            Some(With {
                recursive,
                ctes: self.with_body()?,
            })
        } else {
            None
        };
        let body = self.set_expr()?;
        let mut order_by = Vec::new();
        if self.eat_kw("ORDER") {
            self.expect_kw("BY")?;
            loop {
                order_by.push(self.order_item()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        let mut limit = None;
        let mut offset = None;
        if self.eat_kw("LIMIT") {
            let (value, span) = self.unsigned()?;
            limit = Some(Limit { value, span });
        }
        if self.eat_kw("OFFSET") {
            offset = Some(self.unsigned()?.0);
        }
        Ok(Query {
            with,
            body,
            order_by,
            limit,
            offset,
            span: Span::new(start, self.last_end()),
        })
    }

    fn unsigned(&mut self) -> Result<(u64, Span), SyntaxError> {
        if let Tok::Number(n) = self.peek().clone() {
            if let Ok(v) = n.parse::<u64>() {
                let span = self.advance().span;
                return Ok((v, span));
            }
        }
        Err(self.unexpected("non-negative integer"))
    }

    fn order_item(&mut self) -> Result<OrderByItem, SyntaxError> {
        let expr = self.expr()?;
        let asc = if self.eat_kw("ASC") {
            Some(true)
        } else if self.eat_kw("DESC") {
            Some(false)
        } else {
            None
        };
        let nulls_first = if self.eat_kw("NULLS") {
            if self.eat_kw("FIRST") {
                Some(true)
            } else if self.eat_kw("LAST") {
                Some(false)
            } else {
                return Err(self.unexpected("`FIRST` or `LAST`"));
            }
        } else {
            None
        };
        Ok(OrderByItem { expr, asc, nulls_first })
    }

    fn set_expr(&mut self) -> Result<SetExpr, SyntaxError> {
        let mut left = self.set_operand()?;
        loop {
            let op = if self.eat_kw("UNION") {
                SetOperator::Union
            } else if self.eat_kw("INTERSECT") {
                SetOperator::Intersect
            } else if self.eat_kw("EXCEPT") {
                SetOperator::Except
            } else {
                return Ok(left);
            };
            let all = self.eat_kw("ALL");
            let right = self.set_operand()?;
            left = SetExpr::SetOperation {
                op,
                all,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
    }

    fn set_operand(&mut self) -> Result<SetExpr, SyntaxError> {
        if self.eat(&Tok::LParen) {
            let q = self.query()?;
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(SetExpr::Query(Box::new(q)));
        }
        Ok(SetExpr::Select(Box::new(self.select()?)))
    }

    fn select(&mut self) -> Result<Select, SyntaxError> {
        self.expect_kw("SELECT")?;
        let distinct = if self.eat_kw("DISTINCT") {
            true
        } else {
            self.eat_kw("ALL");
            false
        };
        let mut projection = vec![self.select_item()?];
        while self.eat(&Tok::Comma) {
            projection.push(self.select_item()?);
        }
        let mut from = Vec::new();
        if self.eat_kw("FROM") {
            from.push(self.table_with_joins()?);
            while self.eat(&Tok::Comma) {
                from.push(self.table_with_joins()?);
            }
        }
        let selection = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            group_by.push(self.expr()?);
            while self.eat(&Tok::Comma) {
                group_by.push(self.expr()?);
            }
        }
        let having = if self.eat_kw("HAVING") {
            Some(self.expr()?)
        } else {
            None
        };
        Ok(Select {
            distinct,
            projection,
            from,
            selection,
            group_by,
            having,
        })
    }

    fn select_item(&mut self) -> Result<SelectItem, SyntaxError> {
        if self.eat(&Tok::Op("*")) {
            return Ok(SelectItem::Wildcard);
        }
        if self.at_ident() && self.peek_at(1) == &Tok::Dot && self.peek_at(2) == &Tok::Op("*") {
            let q = self.ident()?;
            self.advance();
            self.advance();
            return Ok(SelectItem::QualifiedWildcard(q));
        }
        let expr = self.expr()?;
        let alias = self.alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn alias(&mut self) -> Result<Option<Ident>, SyntaxError> {
        if self.eat_kw("AS") {
            return Ok(Some(self.ident()?));
        }
        if self.at_ident() {
            return Ok(Some(self.ident()?));
        }
        Ok(None)
    }

    fn table_with_joins(&mut self) -> Result<TableWithJoins, SyntaxError> {
        let relation = self.table_factor()?;
        let mut joins = Vec::new();
        loop {
            let kind = if self.eat_kw("JOIN") {
                JoinKind::Inner
            } else if self.is_kw("INNER") {
                self.advance();
                self.expect_kw("JOIN")?;
                JoinKind::Inner
            } else if self.is_kw("CROSS") {
                self.advance();
                self.expect_kw("JOIN")?;
                JoinKind::Cross
            } else if self.is_kw("LEFT") || self.is_kw("RIGHT") || self.is_kw("FULL") {
                let kind = if self.eat_kw("LEFT") {
                    JoinKind::Left
                } else if self.eat_kw("RIGHT") {
                    JoinKind::Right
                } else {
                    self.advance();
                    JoinKind::Full
                };
                self.eat_kw("OUTER");
                self.expect_kw("JOIN")?;
                kind
            } else {
                break;
            };
            let relation = self.table_factor()?;
            let constraint = if kind == JoinKind::Cross {
                JoinConstraint::None
            } else if self.eat_kw("ON") {
                JoinConstraint::On(self.expr()?)
            } else if self.eat_kw("USING") {
                self.expect(&Tok::LParen, "`(`")?;
                let cols = self.ident_list()?;
                self.expect(&Tok::RParen, "`)`")?;
                JoinConstraint::Using(cols)
            } else {
                JoinConstraint::None
            };
            joins.push(Join {
                kind,
                relation,
                constraint,
            });
        }
        Ok(TableWithJoins { relation, joins })
    }

    fn table_factor(&mut self) -> Result<TableFactor, SyntaxError> {
        if self.eat(&Tok::LParen) {
            if !(self.is_kw("SELECT") || self.is_kw("WITH")) {
                return Err(self.unexpected("subquery"));
            }
            let subquery = Box::new(self.query()?);
            self.expect(&Tok::RParen, "`)`")?;
            let alias = self.alias()?;
            return Ok(TableFactor::Derived { subquery, alias });
        }
        let name = self.ident()?;
        if self.peek() == &Tok::Dot {
            return Err(self.unexpected("table alias or clause"));
        }
        let alias = self.alias()?;
        Ok(TableFactor::Table { name, alias })
    }

    pub(crate) fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.expr_bp(0)
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        Some(match self.peek() {
            Tok::Op("=") => BinaryOp::Eq,
            Tok::Op("<>") | Tok::Op("!=") => BinaryOp::NotEq,
            Tok::Op("<") => BinaryOp::Lt,
            Tok::Op("<=") => BinaryOp::LtEq,
            Tok::Op(">") => BinaryOp::Gt,
            Tok::Op(">=") => BinaryOp::GtEq,
            Tok::Op("||") => BinaryOp::Concat,
            Tok::Op("+") => BinaryOp::Plus,
            Tok::Op("-") => BinaryOp::Minus,
            Tok::Op("*") => BinaryOp::Multiply,
            Tok::Op("/") => BinaryOp::Divide,
            Tok::Op("%") => BinaryOp::Modulo,
            _ if self.is_kw("AND") => BinaryOp::And,
            _ if self.is_kw("OR") => BinaryOp::Or,
            _ => return None,
        })
    }

    fn expr_bp(&mut self, min: u8) -> Result<Expr, SyntaxError> {
        let mut left = self.prefix()?;
        loop {
            if let Some(op) = self.binary_op() {
                let p = op.precedence();
                if p < min {
                    break;
                }
                self.advance();
                let right = self.expr_bp(p + 1)?;
                left = Expr::Binary {
                    left: Box::new(left),
                    op,
                    right: Box::new(right),
                };
                continue;
            }
            // Postfix predicates all bind at comparison strength.
            const PRED: u8 = 4;
            if PRED < min {
                break;
            }
            let negated = self.is_kw("NOT")
                && (self.is_kw_at(1, "IN") || self.is_kw_at(1, "BETWEEN") || self.is_kw_at(1, "LIKE"));
            if negated {
                self.advance();
            }
            if self.eat_kw("IN") {
                self.expect(&Tok::LParen, "`(`")?;
                if self.is_kw("SELECT") || self.is_kw("WITH") {
                    let subquery = Box::new(self.query()?);
                    self.expect(&Tok::RParen, "`)`")?;
                    left = Expr::InSubquery {
                        expr: Box::new(left),
                        subquery,
                        negated,
                    };
                } else {
                    let mut list = vec![self.expr()?];
                    while self.eat(&Tok::Comma) {
                        list.push(self.expr()?);
                    }
                    self.expect(&Tok::RParen, "`)`")?;
                    left = Expr::InList {
                        expr: Box::new(left),
                        list,
                        negated,
                    };
                }
            } else if self.eat_kw("BETWEEN") {
                let low = self.expr_bp(PRED + 1)?;
                self.expect_kw("AND")?;
                let high = self.expr_bp(PRED + 1)?;
                left = Expr::Between {
                    expr: Box::new(left),
                    low: Box::new(low),
                    high: Box::new(high),
                    negated,
                };
            } else if self.eat_kw("LIKE") {
                let pattern = self.expr_bp(PRED + 1)?;
                left = Expr::Like {
                    expr: Box::new(left),
                    pattern: Box::new(pattern),
                    negated,
                };
            } else if self.eat_kw("IS") {
                let negated = self.eat_kw("NOT");
                self.expect_kw("NULL")?;
                left = Expr::IsNull {
                    expr: Box::new(left),
                    negated,
                };
            } else {
                break;
            }
        }
        Ok(left)
    }

    fn prefix(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat_kw("NOT") {
            if self.eat_kw("EXISTS") {
                return self.exists(true);
            }
            let expr = self.expr_bp(3)?;
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                expr: Box::new(expr),
            });
        }
        for (sym, op) in [("-", UnaryOp::Minus), ("+", UnaryOp::Plus)] {
            if self.eat(&Tok::Op(sym)) {
                let expr = self.expr_bp(8)?;
                return Ok(Expr::Unary {
                    op,
                    expr: Box::new(expr),
                });
            }
        }
        self.primary()
    }

    fn exists(&mut self, negated: bool) -> Result<Expr, SyntaxError> {
        self.expect(&Tok::LParen, "`(`")?;
        let subquery = Box::new(self.query()?);
        self.expect(&Tok::RParen, "`)`")?;
        Ok(Expr::Exists { subquery, negated })
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.advance();
                Ok(Expr::Literal(Literal::Number(n)))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Literal(Literal::String(s)))
            }
            Tok::LParen => {
                self.advance();
                let e = if self.is_kw("SELECT") || self.is_kw("WITH") {
                    Expr::Subquery(Box::new(self.query()?))
                } else {
                    self.expr()?
                };
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Word { quoted: false, .. } if self.eat_kw("NULL") => Ok(Expr::Literal(Literal::Null)),
            Tok::Word { quoted: false, .. } if self.eat_kw("TRUE") => Ok(Expr::Literal(Literal::Bool(true))),
            Tok::Word { quoted: false, .. } if self.eat_kw("FALSE") => Ok(Expr::Literal(Literal::Bool(false))),
            Tok::Word { quoted: false, .. } if self.eat_kw("EXISTS") => self.exists(false),
            Tok::Word { quoted: false, .. } if self.eat_kw("CASE") => self.case(),
            Tok::Word { quoted: false, .. } if self.eat_kw("CAST") => {
                self.expect(&Tok::LParen, "`(`")?;
                let expr = Box::new(self.expr()?);
                self.expect_kw("AS")?;
                let data_type = self.data_type()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(Expr::Cast { expr, data_type })
            }
            Tok::Word { quoted: false, .. } if self.at_ident() && self.peek_at(1) == &Tok::LParen => self.function(),
            Tok::Word { .. } if self.at_ident() => {
                let first = self.ident()?;
                if self.eat(&Tok::Dot) {
                    let name = self.ident()?;
                    Ok(Expr::Column {
                        qualifier: Some(first),
                        name,
                    })
                } else {
                    Ok(Expr::Column {
                        qualifier: None,
                        name: first,
                    })
                }
            }
            _ => Err(self.unexpected("expression")),
        }
    }

    fn function(&mut self) -> Result<Expr, SyntaxError> {
        let name = self.ident()?;
        self.expect(&Tok::LParen, "`(`")?;
        let args = if self.eat(&Tok::Op("*")) {
            FunctionArgs::Star
        } else if self.peek() == &Tok::RParen {
            FunctionArgs::List {
                distinct: false,
                args: Vec::new(),
            }
        } else {
            let distinct = self.eat_kw("DISTINCT");
            let mut args = vec![self.expr()?];
            while self.eat(&Tok::Comma) {
                args.push(self.expr()?);
            }
            FunctionArgs::List { distinct, args }
        };
        self.expect(&Tok::RParen, "`)`")?;
        if self.is_kw("OVER") || self.is_kw("FILTER") {
            return Err(SyntaxError::new(
                self.span().start,
                "window functions are not supported",
            ));
        }
        Ok(Expr::Function { name, args })
    }

    fn case(&mut self) -> Result<Expr, SyntaxError> {
        let operand = if self.is_kw("WHEN") {
            None
        } else {
            Some(Box::new(self.expr()?))
        };
        let mut whens = Vec::new();
        while self.eat_kw("WHEN") {
            let w = self.expr()?;
            self.expect_kw("THEN")?;
            whens.push((w, self.expr()?));
        }
        if whens.is_empty() {
            return Err(self.unexpected("`WHEN`"));
        }
        let else_result = if self.eat_kw("ELSE") {
            Some(Box::new(self.expr()?))
        } else {
            None
        };
        self.expect_kw("END")?;
        Ok(Expr::Case {
            operand,
            whens,
            else_result,
        })
    }

    fn data_type(&mut self) -> Result<String, SyntaxError> {
        let mut words = Vec::new();
        while let Tok::Word { text, quoted: false } = self.peek().clone() {
            if is_reserved(&text) {
                break;
            }
            self.advance();
            words.push(text.to_ascii_uppercase());
        }
        if words.is_empty() {
            return Err(self.unexpected("type name"));
        }
        let mut ty = words.join(" ");
        if self.eat(&Tok::LParen) {
            let mut args = vec![self.unsigned()?.0.to_string()];
            while self.eat(&Tok::Comma) {
                args.push(self.unsigned()?.0.to_string());
            }
            self.expect(&Tok::RParen, "`)`")?;
            ty = format!("{ty}({})", args.join(", "));
        }
        Ok(ty)
    }
}
