use super::ast::*;
use super::lexer::{tokenize, LexError, Tok, Token};
use super::Span;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("{span}: expected {} but found {found}", expected.join(" or "))]
    Syntax {
        span: Span,
        expected: Vec<String>,
        found: String,
    },
    #[error("spec contains no Simulator block")]
    MissingSimulator,
    #[error("{span}: duplicate Simulator block (exactly one is allowed)")]
    DuplicateSimulator { span: Span },
}

impl ParseError {
    pub fn span(&self) -> Option<Span> {
        match self {
            ParseError::Lex(e) => Some(match e {
                LexError::UnexpectedChar { span, .. }
                | LexError::UnterminatedString { span }
                | LexError::BadEscape { span, .. }
                | LexError::IntOverflow { span } => *span,
            }),
            ParseError::Syntax { span, .. } => Some(*span),
            ParseError::MissingSimulator => None,
            ParseError::DuplicateSimulator { span } => Some(*span),
        }
    }
}

/// Parse DSL source into a [`SpecAst`].
pub fn parse(source: &str) -> Result<SpecAst, ParseError> {
    let tokens = tokenize(source)?;
    Parser::new(tokens).spec()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    style_notes: Vec<StyleNote>,
}

impl Parser {
    fn new(tokens: Vec<Token>) -> Self {
        Parser {
            tokens,
            pos: 0,
            style_notes: Vec::new(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eof_span(&self) -> Span {
        self.tokens
            .last()
            .map(|t| t.span)
            .unwrap_or(Span { line: 1, col: 1 })
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Percent => "`%`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
        }
    }

    fn err<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        let (span, found) = match self.peek() {
            Some(t) => (t.span, Self::describe(&t.tok)),
            None => (self.eof_span(), "end of input".into()),
        };
        Err(ParseError::Syntax {
            span,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        })
    }

    fn expect_tok(&mut self, want: Tok, what: &str) -> Result<Span, ParseError> {
        match self.peek() {
            Some(t) if t.tok == want => Ok(self.bump().unwrap().span),
            _ => self.err(&[what]),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<Span, ParseError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Word(w),
                span,
                ..
            }) if w == kw => {
                let span = *span;
                self.bump();
                Ok(span)
            }
            _ => self.err(&[&format!("`{kw}`")]),
        }
    }

    fn expect_field(&mut self, kw: &str) -> Result<Span, ParseError> {
        let span = self.expect_keyword(kw)?;
        self.expect_tok(Tok::Colon, "`:`")?;
        Ok(span)
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Word(w), .. }) if w == kw)
    }

    fn expect_int(&mut self, what: &str) -> Result<(u64, Span), ParseError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Int(n),
                span,
                ..
            }) => {
                let (n, span) = (*n, *span);
                self.bump();
                Ok((n, span))
            }
            _ => self.err(&[what]),
        }
    }

    /// An identifier is an alphanumeric run. Runs that start with a digit lex
    /// as `Int` (optionally followed by an adjacent `Word`); they are legal
    /// IDs but get a style note.
    fn expect_id(&mut self) -> Result<(String, Span), ParseError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Word(w),
                span,
                ..
            }) => {
                let (id, span) = (w.clone(), *span);
                self.bump();
                Ok((id, span))
            }
            Some(Token {
                tok: Tok::Int(n),
                span,
                ..
            }) => {
                let (n, span) = (*n, *span);
                self.bump();
                let mut id = n.to_string();
                if let Some(Token {
                    tok: Tok::Word(w),
                    adjacent: true,
                    ..
                }) = self.peek()
                {
                    id.push_str(w);
                    self.bump();
                }
                self.style_notes.push(StyleNote {
                    span,
                    message: format!("identifier `{id}` begins with a digit"),
                });
                Ok((id, span))
            }
            _ => self.err(&["identifier"]),
        }
    }

    /// Dotted-quad IP; the four integer groups and dots must be adjacent.
    fn expect_ip(&mut self) -> Result<(String, Span), ParseError> {
        let (a, span) = self.expect_int("IP address")?;
        let mut parts = vec![a];
        for _ in 0..3 {
            match self.peek() {
                Some(Token {
                    tok: Tok::Dot,
                    adjacent: true,
                    ..
                }) => {
                    self.bump();
                }
                _ => return self.err(&["`.` of an IP address"]),
            }
            match self.peek() {
                Some(Token {
                    tok: Tok::Int(n),
                    adjacent: true,
                    ..
                }) => {
                    parts.push(*n);
                    self.bump();
                }
                _ => return self.err(&["octet of an IP address"]),
            }
        }
        Ok((
            format!("{}.{}.{}.{}", parts[0], parts[1], parts[2], parts[3]),
            span,
        ))
    }

    /// Topics and usernames: the figures write them bare (`pubTopic:pub`),
    /// the grammar calls them strings; accept both.
    fn expect_text(&mut self, what: &str) -> Result<(String, Span), ParseError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Str(s),
                span,
                ..
            }) => {
                let (s, span) = (s.clone(), *span);
                self.bump();
                Ok((s, span))
            }
            Some(Token {
                tok: Tok::Word(_) | Tok::Int(_),
                ..
            }) => self.expect_id(),
            _ => self.err(&[what]),
        }
    }

    fn expect_duration(&mut self, units: &[TimeUnit]) -> Result<Duration, ParseError> {
        let (magnitude, _) = self.expect_int("duration magnitude")?;
        let names: Vec<String> = units.iter().map(|u| format!("`{}`", u.as_str())).collect();
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        match self.peek() {
            Some(Token {
                tok: Tok::Word(w), ..
            }) => {
                let unit = match w.as_str() {
                    "ms" => TimeUnit::Ms,
                    "s" => TimeUnit::S,
                    "m" => TimeUnit::M,
                    "h" => TimeUnit::H,
                    _ => return self.err(&name_refs),
                };
                if !units.contains(&unit) {
                    return self.err(&name_refs);
                }
                self.bump();
                Ok(Duration { magnitude, unit })
            }
            _ => self.err(&name_refs),
        }
    }

    /// `{ ID[count] (, ID[count])* }`
    fn expect_counted_refs(&mut self) -> Result<Vec<CountedRef>, ParseError> {
        self.expect_tok(Tok::LBrace, "`{`")?;
        let mut refs = Vec::new();
        loop {
            let (id, span) = self.expect_id()?;
            self.expect_tok(Tok::LBracket, "`[`")?;
            let (count, count_span) = self.expect_int("instance count")?;
            if count == 0 {
                return Err(ParseError::Syntax {
                    span: count_span,
                    expected: vec!["a count of at least 1".into()],
                    found: "`0`".into(),
                });
            }
            self.expect_tok(Tok::RBracket, "`]`")?;
            refs.push(CountedRef { id, count, span });
            match self.peek() {
                Some(Token {
                    tok: Tok::Comma, ..
                }) => {
                    self.bump();
                }
                Some(Token {
                    tok: Tok::RBrace, ..
                }) => {
                    self.bump();
                    break;
                }
                _ => return self.err(&["`,`", "`}`"]),
            }
        }
        Ok(refs)
    }

    fn spec(mut self) -> Result<SpecAst, ParseError> {
        let mut clouds = Vec::new();
        let mut simulator: Option<SimulatorDecl> = None;
        let mut sim_nodes = Vec::new();
        let mut platforms = Vec::new();
        let mut edge_devices = Vec::new();
        let mut devices = Vec::new();

        while let Some(t) = self.peek() {
            let kw = match &t.tok {
                Tok::Word(w) => w.clone(),
                _ => {
                    return self.err(&[
                        "`Cloud`",
                        "`Simulator`",
                        "`SimulationNode`",
                        "`Platform`",
                        "`EdgeDevice`",
                        "`Device`",
                    ])
                }
            };
            match kw.as_str() {
                "Cloud" => clouds.push(self.cloud()?),
                "Simulator" => {
                    let decl = self.simulator()?;
                    if simulator.is_some() {
                        return Err(ParseError::DuplicateSimulator { span: decl.span });
                    }
                    simulator = Some(decl);
                }
                "SimulationNode" => sim_nodes.push(self.sim_node()?),
                "Platform" => platforms.push(self.platform()?),
                "EdgeDevice" => edge_devices.push(self.edge_device()?),
                "Device" => devices.push(self.device()?),
                _ => {
                    return self.err(&[
                        "`Cloud`",
                        "`Simulator`",
                        "`SimulationNode`",
                        "`Platform`",
                        "`EdgeDevice`",
                        "`Device`",
                    ])
                }
            }
        }

        let simulator = simulator.ok_or(ParseError::MissingSimulator)?;
        Ok(SpecAst {
            clouds,
            simulator,
            sim_nodes,
            platforms,
            edge_devices,
            devices,
            style_notes: self.style_notes,
        })
    }

    fn cloud(&mut self) -> Result<CloudDecl, ParseError> {
        self.expect_field("Cloud")?;
        let (id, span) = self.expect_id()?;
        self.expect_tok(Tok::LBrace, "`{`")?;
        self.expect_field("IP")?;
        let (ip, _) = self.expect_ip()?;

        let endpoint = if self.at_keyword("port") {
            self.expect_field("port")?;
            let (port, port_span) = self.expect_int("port number")?;
            if port == 0 || port > 65535 {
                return Err(ParseError::Syntax {
                    span: port_span,
                    expected: vec!["a port in [1, 65535]".into()],
                    found: format!("`{port}`"),
                });
            }
            CloudEndpoint::Port(port as u16)
        } else if self.at_keyword("pubTopic") {
            self.expect_field("pubTopic")?;
            let (pub_topic, pub_span) = self.expect_text("publish topic")?;
            if pub_topic.is_empty() {
                return Err(ParseError::Syntax {
                    span: pub_span,
                    expected: vec!["a non-empty publish topic".into()],
                    found: "empty string".into(),
                });
            }
            // the grammar writes `, subTopic:`; the figures omit the comma
            if matches!(self.peek(), Some(Token { tok: Tok::Comma, .. })) {
                self.bump();
            }
            let sub_topic = if self.at_keyword("subTopic") {
                self.expect_field("subTopic")?;
                Some(self.expect_text("subscribe topic")?.0)
            } else {
                None
            };
            CloudEndpoint::Topics {
                pub_topic,
                sub_topic,
            }
        } else {
            return self.err(&["`port:`", "`pubTopic:`"]);
        };

        let record_dst = if self.at_keyword("Methods") {
            self.expect_field("Methods")?;
            self.expect_tok(Tok::LBrace, "`{`")?;
            self.expect_keyword("Record")?;
            self.expect_tok(Tok::LParen, "`(`")?;
            let (dst, _) = self.expect_ip()?;
            self.expect_tok(Tok::RParen, "`)`")?;
            self.expect_tok(Tok::RBrace, "`}`")?;
            Some(dst)
        } else {
            None
        };

        self.expect_tok(Tok::RBrace, "`}`")?;
        Ok(CloudDecl {
            id,
            span,
            ip,
            endpoint,
            record_dst,
        })
    }

    fn simulator(&mut self) -> Result<SimulatorDecl, ParseError> {
        let span = self.expect_field("Simulator")?;
        self.expect_tok(Tok::LBrace, "`{`")?;
        self.expect_field("duration")?;
        let duration = self.expect_duration(&[TimeUnit::Ms, TimeUnit::S, TimeUnit::M, TimeUnit::H])?;
        self.expect_field("step")?;
        let step = self.expect_duration(&[TimeUnit::Ms, TimeUnit::S, TimeUnit::M, TimeUnit::H])?;
        self.expect_field("simulationNodes")?;
        let node_refs = self.expect_counted_refs()?;
        self.expect_tok(Tok::RBrace, "`}`")?;
        Ok(SimulatorDecl {
            span,
            duration,
            step,
            node_refs,
        })
    }

    fn sim_node(&mut self) -> Result<SimNodeDecl, ParseError> {
        self.expect_field("SimulationNode")?;
        let (id, span) = self.expect_id()?;
        self.expect_tok(Tok::LBrace, "`{`")?;
        self.expect_field("platform")?;
        let (platform_ref, platform_ref_span) = self.expect_id()?;
        self.expect_field("offsetRange")?;
        let (offset_range_pct, _) = self.expect_int("offset range percentage")?;
        self.expect_tok(Tok::Percent, "`%`")?;
        self.expect_field("EdgeDevices")?;
        let edge_refs = self.expect_counted_refs()?;
        self.expect_tok(Tok::RBrace, "`}`")?;
        Ok(SimNodeDecl {
            id,
            span,
            platform_ref,
            platform_ref_span,
            offset_range_pct,
            edge_refs,
        })
    }

    fn platform(&mut self) -> Result<PlatformDecl, ParseError> {
        self.expect_field("Platform")?;
        let (id, span) = self.expect_id()?;
        self.expect_tok(Tok::LBrace, "`{`")?;
        self.expect_field("type")?;
        let kind = match self.peek() {
            Some(Token {
                tok: Tok::Word(w), ..
            }) => match w.as_str() {
                "Native" => PlatformKind::Native,
                "Docker" => PlatformKind::Docker,
                "VM" => PlatformKind::Vm,
                _ => return self.err(&["`Native`", "`Docker`", "`VM`"]),
            },
            _ => return self.err(&["`Native`", "`Docker`", "`VM`"]),
        };
        self.bump();

        let mut ip = None;
        let mut username = None;
        let mut cpu = None;
        let mut memory_gib = None;

        if self.at_keyword("IP") {
            self.expect_field("IP")?;
            ip = Some(self.expect_ip()?.0);
        }
        // the grammar spells it `userName`, the worked examples `username`
        if self.at_keyword("username") || self.at_keyword("userName") {
            let kw = if self.at_keyword("username") {
                "username"
            } else {
                "userName"
            };
            self.expect_field(kw)?;
            username = Some(self.expect_text("username")?.0);
        }
        if self.at_keyword("CPU") {
            self.expect_field("CPU")?;
            cpu = Some(self.expect_int("CPU core count")?.0);
        }
        if self.at_keyword("memory") {
            self.expect_field("memory")?;
            let (mem, _) = self.expect_int("memory size")?;
            match self.peek() {
                Some(Token {
                    tok: Tok::Word(w),
                    adjacent: true,
                    ..
                }) if w == "G" => {
                    self.bump();
                }
                _ => return self.err(&["`G`"]),
            }
            memory_gib = Some(mem);
        }
        self.expect_tok(Tok::RBrace, "`}`")?;
        Ok(PlatformDecl {
            id,
            span,
            kind,
            ip,
            username,
            cpu,
            memory_gib,
        })
    }

    fn edge_device(&mut self) -> Result<EdgeDeviceDecl, ParseError> {
        self.expect_field("EdgeDevice")?;
        let (id, span) = self.expect_id()?;
        self.expect_tok(Tok::LBrace, "`{`")?;
        self.expect_field("protocol")?;
        let protocol = match self.peek() {
            Some(Token {
                tok: Tok::Word(w), ..
            }) => match w.as_str() {
                "UDP" => Protocol::Udp,
                "TCP" => Protocol::Tcp,
                "MQTT" => Protocol::Mqtt,
                _ => return self.err(&["`UDP`", "`TCP`", "`MQTT`"]),
            },
            _ => return self.err(&["`UDP`", "`TCP`", "`MQTT`"]),
        };
        self.bump();

        self.expect_field("speed")?;
        let speed = match self.peek() {
            Some(Token {
                tok: Tok::Word(w), ..
            }) if w == "MAX" => {
                self.bump();
                Speed::Max
            }
            Some(Token {
                tok: Tok::Int(n),
                span: speed_span,
                ..
            }) => {
                let (n, speed_span) = (*n, *speed_span);
                if n == 0 {
                    return Err(ParseError::Syntax {
                        span: speed_span,
                        expected: vec!["a speed of at least 1".into()],
                        found: "`0`".into(),
                    });
                }
                self.bump();
                Speed::Packets(n)
            }
            _ => return self.err(&["integer speed", "`MAX`"]),
        };

        self.expect_field("cloud")?;
        let (cloud_ref, cloud_ref_span) = self.expect_id()?;
        self.expect_field("devices")?;
        let device_refs = self.expect_counted_refs()?;

        let workload = if self.at_keyword("workload") {
            self.expect_field("workload")?;
            Some(self.expect_duration(&[TimeUnit::Ms, TimeUnit::S, TimeUnit::M])?)
        } else {
            None
        };

        self.expect_tok(Tok::RBrace, "`}`")?;
        Ok(EdgeDeviceDecl {
            id,
            span,
            protocol,
            speed,
            cloud_ref,
            cloud_ref_span,
            device_refs,
            workload,
        })
    }

    fn device(&mut self) -> Result<DeviceDecl, ParseError> {
        self.expect_field("Device")?;
        let (id, span) = self.expect_id()?;
        self.expect_tok(Tok::LBrace, "`{`")?;
        self.expect_field("period")?;
        let (period, period_span) = self.expect_int("period")?;
        if period == 0 {
            return Err(ParseError::Syntax {
                span: period_span,
                expected: vec!["a period of at least 1".into()],
                found: "`0`".into(),
            });
        }
        self.expect_field("payload")?;
        let payload = match self.peek() {
            Some(Token {
                tok: Tok::Str(s), ..
            }) => {
                let s = s.clone();
                self.bump();
                PayloadSpec::Literal(s)
            }
            Some(Token {
                tok: Tok::Int(n),
                span: mag_span,
                ..
            }) => {
                let (magnitude, mag_span) = (*n, *mag_span);
                if magnitude == 0 {
                    return Err(ParseError::Syntax {
                        span: mag_span,
                        expected: vec!["a payload size of at least 1".into()],
                        found: "`0`".into(),
                    });
                }
                self.bump();
                let unit = match self.peek() {
                    Some(Token {
                        tok: Tok::Word(w), ..
                    }) => match w.as_str() {
                        "b" => PayloadUnit::B,
                        "kb" => PayloadUnit::Kb,
                        "mb" => PayloadUnit::Mb,
                        _ => return self.err(&["`b`", "`kb`", "`mb`"]),
                    },
                    _ => return self.err(&["`b`", "`kb`", "`mb`"]),
                };
                self.bump();
                PayloadSpec::Size { magnitude, unit }
            }
            _ => return self.err(&["payload size", "string literal"]),
        };
        self.expect_tok(Tok::RBrace, "`}`")?;
        Ok(DeviceDecl {
            id,
            span,
            period,
            payload,
        })
    }
}
