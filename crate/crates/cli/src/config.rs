//! Flat key=value experiment configuration and the tiny rule-expression
//! language for deriving n from d and k from n.
//!
//! The format is deliberately diff-friendly: one `key = value` per line,
//! list values comma-separated, `#` comments ignored. Every effective value
//! is echoed into output headers so a result file pins its own provenance.

use std::collections::BTreeMap;
use std::path::PathBuf;

use robust_phase::oracle::KappaEstimator;

#[derive(Debug, Clone, PartialEq)]
pub enum CorruptionSpec {
    None,
    Uniform {
        lo: f64,
        hi: f64,
    },
    Constant {
        value: f64,
    },
    /// Adaptive adversary: zero out the k largest responses.
    Signflip,
}

impl CorruptionSpec {
    pub fn parse(text: &str) -> Result<Self, String> {
        let parts: Vec<&str> = text.split(':').collect();
        match parts.as_slice() {
            ["none"] => Ok(CorruptionSpec::None),
            ["uniform", lo, hi] => {
                let lo: f64 = lo.parse().map_err(|e| format!("bad uniform lo: {e}"))?;
                let hi: f64 = hi.parse().map_err(|e| format!("bad uniform hi: {e}"))?;
                if hi < lo {
                    return Err("uniform corruption needs lo <= hi".into());
                }
                Ok(CorruptionSpec::Uniform { lo, hi })
            }
            ["constant", v] => Ok(CorruptionSpec::Constant {
                value: v.parse().map_err(|e| format!("bad constant: {e}"))?,
            }),
            ["signflip"] => Ok(CorruptionSpec::Signflip),
            _ => Err(format!(
                "unknown corruption {text:?}; expected none, uniform:LO:HI, constant:C, signflip"
            )),
        }
    }

    pub fn echo(&self) -> String {
        match self {
            CorruptionSpec::None => "none".into(),
            CorruptionSpec::Uniform { lo, hi } => format!("uniform:{lo}:{hi}"),
            CorruptionSpec::Constant { value } => format!("constant:{value}"),
            CorruptionSpec::Signflip => "signflip".into(),
        }
    }
}

/// One k-rule: a display label plus an expression over {n, d}.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub label: String,
    pub k_expr: String,
}

impl Regime {
    fn registered(label: &str) -> Option<Regime> {
        let expr = match label {
            "sqrt_n" => "sqrt(n)",
            "n_2_3" => "n^(2/3)",
            "const_0.25" => "0.25*n",
            _ => return None,
        };
        Some(Regime {
            label: label.to_string(),
            k_expr: expr.to_string(),
        })
    }

    pub fn parse(text: &str) -> Result<Regime, String> {
        if let Some(regime) = Regime::registered(text) {
            return Ok(regime);
        }
        match text.split_once(':') {
            Some((label, expr)) if !label.is_empty() && !expr.is_empty() => Ok(Regime {
                label: label.to_string(),
                k_expr: expr.to_string(),
            }),
            _ => Err(format!(
                "unknown regime {text:?}; use sqrt_n, n_2_3, const_0.25, or label:expression"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub dims: Vec<usize>,
    pub n_rule: String,
    pub explicit_n: Option<usize>,
    pub regimes: Vec<Regime>,
    pub explicit_k: Option<usize>,
    pub corruption: CorruptionSpec,
    pub seeds: Vec<u64>,
    pub beta: Option<f64>,
    pub step_scale_c: Option<f64>,
    pub oracle_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub kappa_estimator: Option<KappaEstimator>,
    pub max_outer_iters: Option<usize>,
    pub parallelism: Option<usize>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub eta_bar: Option<f64>,
    pub eta_sq_mean: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_steps: usize,
    pub grid_dims: usize,
    pub checks: Option<Vec<String>>,
    pub check_seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dims: vec![],
            n_rule: "10*d*ln(d)".into(),
            explicit_n: None,
            regimes: vec![],
            explicit_k: None,
            corruption: CorruptionSpec::None,
            seeds: (1..=5).collect(),
            beta: None,
            step_scale_c: None,
            oracle_iters: None,
            grad_tol: None,
            kappa_estimator: None,
            max_outer_iters: None,
            parallelism: None,
            out: None,
            data: None,
            truth: None,
            eta_bar: None,
            eta_sq_mean: 0.0,
            grid_min: -2.0,
            grid_max: 2.0,
            grid_steps: 81,
            grid_dims: 2,
            checks: None,
            check_seed: 2024,
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|e| format!("{key}: bad entry {tok:?}: {e}"))
        })
        .collect()
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, String> {
        let mut cfg = Config::default();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            if seen.insert(key.to_string(), true).is_some() {
                return Err(format!("line {}: duplicate key {key:?}", lineno + 1));
            }
            cfg.apply(key, value)?;
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "d" => self.dims = parse_list(value, key)?,
            "n_rule" => self.n_rule = value.to_string(),
            "n" => self.explicit_n = Some(value.parse().map_err(|e| format!("n: {e}"))?),
            "regimes" => {
                self.regimes = value
                    .split(',')
                    .map(|tok| Regime::parse(tok.trim()))
                    .collect::<Result<_, _>>()?
            }
            "k" => self.explicit_k = Some(value.parse().map_err(|e| format!("k: {e}"))?),
            "corruption" => self.corruption = CorruptionSpec::parse(value)?,
            "seeds" => self.seeds = parse_list(value, key)?,
            "beta" => self.beta = Some(value.parse().map_err(|e| format!("beta: {e}"))?),
            "step_scale_c" => {
                self.step_scale_c = Some(value.parse().map_err(|e| format!("step_scale_c: {e}"))?)
            }
            "oracle_iters" => {
                self.oracle_iters = Some(value.parse().map_err(|e| format!("oracle_iters: {e}"))?)
            }
            "grad_tol" => {
                self.grad_tol = Some(value.parse().map_err(|e| format!("grad_tol: {e}"))?)
            }
            "kappa_estimator" => {
                self.kappa_estimator = Some(match value {
                    "moments" => KappaEstimator::Moments,
                    "trace" => KappaEstimator::Trace,
                    other => return Err(format!("kappa_estimator: unknown value {other:?}")),
                })
            }
            "max_outer_iters" => {
                self.max_outer_iters =
                    Some(value.parse().map_err(|e| format!("max_outer_iters: {e}"))?)
            }
            "parallelism" => {
                self.parallelism = Some(value.parse().map_err(|e| format!("parallelism: {e}"))?)
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "data" => self.data = Some(PathBuf::from(value)),
            "truth" => self.truth = Some(PathBuf::from(value)),
            "eta_bar" => self.eta_bar = Some(value.parse().map_err(|e| format!("eta_bar: {e}"))?),
            "eta_sq_mean" => {
                self.eta_sq_mean = value.parse().map_err(|e| format!("eta_sq_mean: {e}"))?
            }
            "grid_min" => self.grid_min = value.parse().map_err(|e| format!("grid_min: {e}"))?,
            "grid_max" => self.grid_max = value.parse().map_err(|e| format!("grid_max: {e}"))?,
            "grid_steps" => {
                self.grid_steps = value.parse().map_err(|e| format!("grid_steps: {e}"))?
            }
            "grid_dims" => self.grid_dims = value.parse().map_err(|e| format!("grid_dims: {e}"))?,
            "checks" => self.checks = Some(parse_list(value, key)?),
            "check_seed" => {
                self.check_seed = value.parse().map_err(|e| format!("check_seed: {e}"))?
            }
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Sample count for dimension d: the explicit n if set, otherwise the
    /// ceiled n-rule.
    pub fn sample_count(&self, d: usize) -> Result<usize, String> {
        if let Some(n) = self.explicit_n {
            return Ok(n);
        }
        let vars = [("d", d as f64)];
        let n = eval_expr(&self.n_rule, &vars)?;
        if !n.is_finite() || n < 1.0 {
            return Err(format!("n_rule {:?} gave {n} at d = {d}", self.n_rule));
        }
        Ok(n.ceil() as usize)
    }

    /// Corruption count for a regime at the given (n, d), ceiled.
    pub fn corruption_count(&self, regime: &Regime, n: usize, d: usize) -> Result<usize, String> {
        let vars = [("n", n as f64), ("d", d as f64)];
        let k = eval_expr(&regime.k_expr, &vars)?;
        if !k.is_finite() || k < 0.0 {
            return Err(format!("k-rule {:?} gave {k} at n = {n}", regime.k_expr));
        }
        Ok(k.ceil() as usize)
    }

    /// Normalized key=value lines for output headers, in sorted key order.
    pub fn echo_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("corruption={}", self.corruption.echo()),
            format!(
                "d={}",
                self.dims
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            format!("n_rule={}", self.n_rule),
            format!(
                "regimes={}",
                self.regimes
                    .iter()
                    .map(|r| format!("{}:{}", r.label, r.k_expr))
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            format!(
                "seeds={}",
                self.seeds
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
        ];
        if let Some(n) = self.explicit_n {
            lines.push(format!("n={n}"));
        }
        if let Some(k) = self.explicit_k {
            lines.push(format!("k={k}"));
        }
        if let Some(beta) = self.beta {
            lines.push(format!("beta={beta}"));
        }
        if let Some(c) = self.step_scale_c {
            lines.push(format!("step_scale_c={c}"));
        }
        if let Some(t) = self.oracle_iters {
            lines.push(format!("oracle_iters={t}"));
        }
        if let Some(tol) = self.grad_tol {
            lines.push(format!("grad_tol={tol}"));
        }
        if let Some(est) = self.kappa_estimator {
            lines.push(format!(
                "kappa_estimator={}",
                match est {
                    KappaEstimator::Moments => "moments",
                    KappaEstimator::Trace => "trace",
                }
            ));
        }
        if let Some(cap) = self.max_outer_iters {
            lines.push(format!("max_outer_iters={cap}"));
        }
        lines.sort();
        lines
    }
}

// ---------------------------------------------------------------------------
// Expression language over {n, d}: operators + - * / ^, functions sqrt, ln,
// ceil, parentheses, float literals. Enough to write the three registered
// regimes and the sample-size rule without hard-coding them.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                tokens.push(Token::Plus);
                i += 1;
            }
            '-' => {
                tokens.push(Token::Minus);
                i += 1;
            }
            '*' => {
                tokens.push(Token::Star);
                i += 1;
            }
            '/' => {
                tokens.push(Token::Slash);
                i += 1;
            }
            '^' => {
                tokens.push(Token::Caret);
                i += 1;
            }
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                tokens.push(Token::Number(
                    text.parse()
                        .map_err(|e| format!("bad number {text:?}: {e}"))?,
                ));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(format!("unexpected character {other:?}")),
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    vars: &'a [(&'a str, f64)],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn expr(&mut self) -> Result<f64, String> {
        let mut value = self.term()?;
        while let Some(tok) = self.peek() {
            match tok {
                Token::Plus => {
                    self.next();
                    value += self.term()?;
                }
                Token::Minus => {
                    self.next();
                    value -= self.term()?;
                }
                _ => break,
            }
        }
        Ok(value)
    }

    fn term(&mut self) -> Result<f64, String> {
        let mut value = self.unary()?;
        while let Some(tok) = self.peek() {
            match tok {
                Token::Star => {
                    self.next();
                    value *= self.unary()?;
                }
                Token::Slash => {
                    self.next();
                    value /= self.unary()?;
                }
                _ => break,
            }
        }
        Ok(value)
    }

    fn unary(&mut self) -> Result<f64, String> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.next();
            return Ok(-self.unary()?);
        }
        self.power()
    }

    fn power(&mut self) -> Result<f64, String> {
        let base = self.primary()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.next();
            let exponent = self.unary()?; // right-associative
            return Ok(base.powf(exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<f64, String> {
        match self.next() {
            Some(Token::Number(v)) => Ok(v),
            Some(Token::LParen) => {
                let value = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(value),
                    _ => Err("missing closing parenthesis".into()),
                }
            }
            Some(Token::Ident(name)) => {
                if matches!(self.peek(), Some(Token::LParen)) {
                    self.next();
                    let arg = self.expr()?;
                    match self.next() {
                        Some(Token::RParen) => {}
                        _ => return Err(format!("missing closing parenthesis after {name}")),
                    }
                    match name.as_str() {
                        "sqrt" => Ok(arg.sqrt()),
                        "ln" => Ok(arg.ln()),
                        "ceil" => Ok(arg.ceil()),
                        other => Err(format!("unknown function {other:?}")),
                    }
                } else {
                    self.vars
                        .iter()
                        .find(|(var, _)| *var == name)
                        .map(|&(_, v)| v)
                        .ok_or_else(|| format!("unknown variable {name:?}"))
                }
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }
}

/// Evaluates a rule expression with the given variable bindings.
pub fn eval_expr(src: &str, vars: &[(&str, f64)]) -> Result<f64, String> {
    let tokens = tokenize(src)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        vars,
    };
    let value = parser.expr()?;
    if parser.pos != tokens.len() {
        return Err(format!("trailing tokens in expression {src:?}"));
    }
    Ok(value)
}
