//! The boilerplate program: a small, restricted language for the membership
//! statement, its compiler to R1CS, and witness construction.
//!
//! Grammar:
//!
//! ```text
//! program   := "def" "main" "(" param ("," param)* ")" "{" stmt* "}"
//! param     := ("public" | "private") type IDENT
//! type      := "point" | "scalar" | "field"
//! stmt      := type IDENT "=" expr ";" | call ";"
//! expr      := IDENT | call
//! call      := IDENT "(" [expr ("," expr)*] ")"
//! ```
//!
//! `//` starts a line comment. Public parameters are allocated first, in
//! declaration order, followed by private ones. A point occupies two field
//! elements, `x` then `y`.

use std::collections::HashMap;
use std::fmt;

use ark_bn254::Fr;
use ark_ff::Zero;
use num_bigint::BigUint;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::babyjubjub::{self, Point};
use crate::credential::ClientCredential;
use crate::edwards::biguint_to_field;
use crate::gadgets::{self, PointVar};
use crate::r1cs::{CircuitBuilder, ConstraintSystem, Digest32, Num, SynthesisError, WitnessVector};

/// Canonical source of the membership program.
pub const MEMBERSHIP_SOURCE: &str = include_str!("../boilerplate/membership.xpr");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Public,
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueType {
    Point,
    Scalar,
    Field,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::Point => "point",
            ValueType::Scalar => "scalar",
            ValueType::Field => "field",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parameter {
    pub name: String,
    pub visibility: Visibility,
    pub ty: ValueType,
}

impl Parameter {
    pub fn new(name: &str, visibility: Visibility, ty: ValueType) -> Self {
        Self {
            name: name.to_string(),
            visibility,
            ty,
        }
    }
}

/// `(pk, public, point), (R, private, point), (S, private, scalar), (M, private, field)`.
pub fn membership_schema() -> Vec<Parameter> {
    use ValueType::*;
    use Visibility::*;
    vec![
        Parameter::new("pk", Public, Point),
        Parameter::new("R", Private, Point),
        Parameter::new("S", Private, Scalar),
        Parameter::new("M", Private, Field),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoilerplateProgram {
    pub source_text: String,
    pub program_digest: Digest32,
    pub parameter_schema: Vec<Parameter>,
}

impl BoilerplateProgram {
    pub fn new(source_text: impl Into<String>, parameter_schema: Vec<Parameter>) -> Self {
        let source_text = source_text.into();
        Self {
            program_digest: program_digest(&source_text),
            source_text,
            parameter_schema,
        }
    }

    pub fn membership() -> Self {
        Self::new(MEMBERSHIP_SOURCE, membership_schema())
    }
}

pub fn program_digest(source: &str) -> Digest32 {
    Sha256::digest(source.as_bytes()).into()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircuitError {
    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("parameter list does not match the schema: {0}")]
    SchemaMismatch(String),
    #[error("input {0}: {1}")]
    Input(String, String),
    #[error("credential signature does not verify")]
    InvalidCredential,
    #[error("constraint system was not compiled from the membership program")]
    CircuitMismatch,
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Point(Point),
    Scalar(BigUint),
    Field(Fr),
}

impl Value {
    fn ty(&self) -> ValueType {
        match self {
            Value::Point(_) => ValueType::Point,
            Value::Scalar(_) => ValueType::Scalar,
            Value::Field(_) => ValueType::Field,
        }
    }

    fn placeholder(ty: ValueType) -> Self {
        match ty {
            ValueType::Point => Value::Point(Point::generator()),
            ValueType::Scalar => Value::Scalar(BigUint::from(1u32)),
            ValueType::Field => Value::Field(Fr::zero()),
        }
    }
}

pub type Inputs = HashMap<String, Value>;

/// Compiles a program into its constraint system. The structure never
/// depends on input values, so placeholders are synthesized.
pub fn compile(program: &BoilerplateProgram) -> Result<ConstraintSystem, CircuitError> {
    let parsed = parse(&program.source_text)?;
    check_schema(&parsed, &program.parameter_schema)?;
    let inputs = parsed
        .params
        .iter()
        .map(|p| (p.name.clone(), Value::placeholder(p.ty)))
        .collect();
    Ok(synthesize_parsed(&parsed, &inputs)?.0)
}

/// Runs the program on concrete inputs. The witness satisfies the system iff
/// the inputs satisfy the program's assertions.
pub fn synthesize(
    program: &BoilerplateProgram,
    inputs: &Inputs,
) -> Result<(ConstraintSystem, WitnessVector), CircuitError> {
    let parsed = parse(&program.source_text)?;
    check_schema(&parsed, &program.parameter_schema)?;
    synthesize_parsed(&parsed, inputs)
}

pub fn membership_inputs(credential: &ClientCredential) -> Inputs {
    let mut inputs = Inputs::new();
    inputs.insert("pk".into(), Value::Point(credential.idp_credential_pk));
    inputs.insert("R".into(), Value::Point(credential.signature.r));
    inputs.insert("S".into(), Value::Scalar(credential.signature.s.clone()));
    inputs.insert("M".into(), Value::Field(credential.client_id));
    inputs
}

/// Public slice of the membership witness: the encoding of `pk`.
pub fn membership_public_inputs(pk: &Point) -> Vec<Fr> {
    vec![pk.x, pk.y]
}

/// Builds the witness for the membership program, refusing credentials that
/// fail the native signature check.
pub fn build_witness(
    cs: &ConstraintSystem,
    pk: &Point,
    credential: &ClientCredential,
) -> Result<WitnessVector, CircuitError> {
    if credential.idp_credential_pk != *pk || !credential.is_valid() {
        return Err(CircuitError::InvalidCredential);
    }
    let (synthesized, witness) =
        synthesize(&BoilerplateProgram::membership(), &membership_inputs(credential))?;
    if synthesized != *cs {
        return Err(CircuitError::CircuitMismatch);
    }
    Ok(witness)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

impl Pos {
    fn error(self, message: impl Into<String>) -> CircuitError {
        CircuitError::Parse {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Punct(char),
    Eof,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, Pos)>, CircuitError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let (mut line, mut column) = (1, 1);
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, column };
        if c == '\n' {
            chars.next();
            line += 1;
            column = 1;
        } else if c.is_whitespace() {
            chars.next();
            column += 1;
        } else if c == '/' {
            chars.next();
            if chars.peek() != Some(&'/') {
                return Err(pos.error("unexpected '/'"));
            }
            while chars.peek().is_some_and(|&c| c != '\n') {
                chars.next();
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut ident = String::new();
            while let Some(&c) = chars.peek() {
                if !(c.is_ascii_alphanumeric() || c == '_') {
                    break;
                }
                ident.push(c);
                chars.next();
                column += 1;
            }
            out.push((Tok::Ident(ident), pos));
        } else if "(){},;=".contains(c) {
            chars.next();
            column += 1;
            out.push((Tok::Punct(c), pos));
        } else {
            return Err(pos.error(format!("unexpected character {c:?}")));
        }
    }
    out.push((Tok::Eof, Pos { line, column }));
    Ok(out)
}

#[derive(Debug, Clone)]
struct Program {
    params: Vec<Parameter>,
    body: Vec<Stmt>,
}

#[derive(Debug, Clone)]
enum Stmt {
    Let {
        ty: ValueType,
        name: String,
        expr: Expr,
        pos: Pos,
    },
    Call(Call),
}

#[derive(Debug, Clone)]
enum Expr {
    Var(String, Pos),
    Call(Call),
}

#[derive(Debug, Clone)]
struct Call {
    name: String,
    args: Vec<Expr>,
    pos: Pos,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &(Tok, Pos) {
        &self.toks[self.i]
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn punct(&mut self, c: char) -> Result<Pos, CircuitError> {
        match self.next() {
            (Tok::Punct(p), pos) if p == c => Ok(pos),
            (_, pos) => Err(pos.error(format!("expected '{c}'"))),
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), CircuitError> {
        match self.next() {
            (Tok::Ident(s), pos) => Ok((s, pos)),
            (_, pos) => Err(pos.error("expected identifier")),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), CircuitError> {
        match self.ident()? {
            (s, _) if s == kw => Ok(()),
            (_, pos) => Err(pos.error(format!("expected '{kw}'"))),
        }
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek().0 == Tok::Punct(c)
    }

    fn program(&mut self) -> Result<Program, CircuitError> {
        self.keyword("def")?;
        self.keyword("main")?;
        self.punct('(')?;
        let mut params = vec![self.param()?];
        while self.is_punct(',') {
            self.next();
            params.push(self.param()?);
        }
        self.punct(')')?;
        self.punct('{')?;
        let mut body = Vec::new();
        while !self.is_punct('}') {
            body.push(self.stmt()?);
        }
        self.punct('}')?;
        match self.peek() {
            (Tok::Eof, _) => Ok(Program { params, body }),
            (_, pos) => Err(pos.error("unexpected input after program")),
        }
    }

    fn param(&mut self) -> Result<Parameter, CircuitError> {
        let (vis, pos) = self.ident()?;
        let visibility = match vis.as_str() {
            "public" => Visibility::Public,
            "private" => Visibility::Private,
            _ => return Err(pos.error("expected 'public' or 'private'")),
        };
        let ty = self.ty()?;
        let (name, _) = self.ident()?;
        Ok(Parameter { name, visibility, ty })
    }

    fn ty(&mut self) -> Result<ValueType, CircuitError> {
        let (s, pos) = self.ident()?;
        parse_type(&s).ok_or_else(|| pos.error(format!("unknown type '{s}'")))
    }

    fn stmt(&mut self) -> Result<Stmt, CircuitError> {
        let (first, pos) = self.ident()?;
        let stmt = if let Some(ty) = parse_type(&first) {
            let (name, _) = self.ident()?;
            self.punct('=')?;
            let expr = self.expr()?;
            Stmt::Let { ty, name, expr, pos }
        } else {
            Stmt::Call(self.call(first, pos)?)
        };
        self.punct(';')?;
        Ok(stmt)
    }

    fn expr(&mut self) -> Result<Expr, CircuitError> {
        let (name, pos) = self.ident()?;
        if self.is_punct('(') {
            Ok(Expr::Call(self.call(name, pos)?))
        } else {
            Ok(Expr::Var(name, pos))
        }
    }

    fn call(&mut self, name: String, pos: Pos) -> Result<Call, CircuitError> {
        self.punct('(')?;
        let mut args = Vec::new();
        if !self.is_punct(')') {
            args.push(self.expr()?);
            while self.is_punct(',') {
                self.next();
                args.push(self.expr()?);
            }
        }
        self.punct(')')?;
        Ok(Call { name, args, pos })
    }
}

fn parse_type(s: &str) -> Option<ValueType> {
    match s {
        "point" => Some(ValueType::Point),
        "scalar" => Some(ValueType::Scalar),
        "field" => Some(ValueType::Field),
        _ => None,
    }
}

fn parse(src: &str) -> Result<Program, CircuitError> {
    Parser {
        toks: tokenize(src)?,
        i: 0,
    }
    .program()
}

fn check_schema(program: &Program, schema: &[Parameter]) -> Result<(), CircuitError> {
    if program.params.len() != schema.len() {
        return Err(CircuitError::SchemaMismatch(format!(
            "{} parameters declared, schema has {}",
            program.params.len(),
            schema.len()
        )));
    }
    for (declared, expected) in program.params.iter().zip(schema) {
        if declared != expected {
            return Err(CircuitError::SchemaMismatch(format!(
                "parameter '{}' declared as {:?} {}, schema expects '{}' {:?} {}",
                declared.name,
                declared.visibility,
                declared.ty,
                expected.name,
                expected.visibility,
                expected.ty
            )));
        }
    }
    Ok(())
}

#[derive(Clone)]
enum Val {
    Point(PointVar),
    /// Scalars are range-checked below the subgroup order when allocated.
    Scalar(Num, Vec<Num>),
    Field(Num),
}

impl Val {
    fn ty(&self) -> ValueType {
        match self {
            Val::Point(_) => ValueType::Point,
            Val::Scalar(..) => ValueType::Scalar,
            Val::Field(_) => ValueType::Field,
        }
    }
}

fn synthesize_parsed(
    program: &Program,
    inputs: &Inputs,
) -> Result<(ConstraintSystem, WitnessVector), CircuitError> {
    let mut cs = CircuitBuilder::new();
    let mut env: HashMap<String, Val> = HashMap::new();
    let publics = program.params.iter().filter(|p| p.visibility == Visibility::Public);
    let privates = program.params.iter().filter(|p| p.visibility == Visibility::Private);
    for param in publics.chain(privates) {
        let value = inputs
            .get(&param.name)
            .ok_or_else(|| CircuitError::Input(param.name.clone(), "missing".into()))?;
        if value.ty() != param.ty {
            return Err(CircuitError::Input(
                param.name.clone(),
                format!("expected {}, got {}", param.ty, value.ty()),
            ));
        }
        let public = param.visibility == Visibility::Public;
        let alloc = |cs: &mut CircuitBuilder, v: Fr| -> Result<Num, CircuitError> {
            Ok(if public { cs.alloc_public(v)? } else { cs.alloc(v) })
        };
        let val = match value {
            Value::Point(p) => Val::Point(PointVar {
                x: alloc(&mut cs, p.x)?,
                y: alloc(&mut cs, p.y)?,
            }),
            Value::Scalar(s) => {
                let num = alloc(&mut cs, biguint_to_field(s))?;
                let bound = babyjubjub::subgroup_order() - 1u32;
                let bits = gadgets::to_bits_le_bounded(&mut cs, &num, &bound);
                Val::Scalar(num, bits)
            }
            Value::Field(f) => Val::Field(alloc(&mut cs, *f)?),
        };
        if env.insert(param.name.clone(), val).is_some() {
            return Err(CircuitError::SchemaMismatch(format!("duplicate parameter '{}'", param.name)));
        }
    }

    for stmt in &program.body {
        match stmt {
            Stmt::Let { ty, name, expr, pos } => {
                let val = eval(&mut cs, &env, expr)?
                    .ok_or_else(|| pos.error("expression has no value"))?;
                if val.ty() != *ty {
                    return Err(pos.error(format!("'{name}' declared {ty}, expression is {}", val.ty())));
                }
                if env.contains_key(name) {
                    return Err(pos.error(format!("'{name}' is already defined")));
                }
                env.insert(name.clone(), val);
            }
            Stmt::Call(call) => {
                apply(&mut cs, &env, call)?;
            }
        }
    }
    Ok(cs.finish())
}

fn eval(
    cs: &mut CircuitBuilder,
    env: &HashMap<String, Val>,
    expr: &Expr,
) -> Result<Option<Val>, CircuitError> {
    match expr {
        Expr::Var(name, pos) => env
            .get(name)
            .cloned()
            .map(Some)
            .ok_or_else(|| pos.error(format!("undefined name '{name}'"))),
        Expr::Call(call) => apply(cs, env, call),
    }
}

fn apply(
    cs: &mut CircuitBuilder,
    env: &HashMap<String, Val>,
    call: &Call,
) -> Result<Option<Val>, CircuitError> {
    let mut args = Vec::with_capacity(call.args.len());
    for a in &call.args {
        let pos = match a {
            Expr::Var(_, p) => *p,
            Expr::Call(c) => c.pos,
        };
        args.push(eval(cs, env, a)?.ok_or_else(|| pos.error("argument has no value"))?);
    }
    let pos = call.pos;
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(pos.error(format!("'{}' takes {n} arguments, got {}", call.name, args.len())))
        }
    };
    let type_error = |i: usize, expected: &str| {
        pos.error(format!(
            "argument {} of '{}' must be {expected}, got {}",
            i + 1,
            call.name,
            args[i].ty()
        ))
    };
    match call.name.as_str() {
        "hash" => {
            if args.is_empty() {
                return Err(pos.error("'hash' needs at least one argument"));
            }
            let mut lanes = Vec::new();
            for a in &args {
                match a {
                    Val::Point(p) => lanes.extend([p.x.clone(), p.y.clone()]),
                    Val::Scalar(n, _) | Val::Field(n) => lanes.push(n.clone()),
                }
            }
            Ok(Some(Val::Field(gadgets::poseidon_hash(cs, &lanes))))
        }
        "mul_base" => {
            arity(1)?;
            if matches!(args[0], Val::Point(_)) {
                return Err(type_error(0, "a scalar or field"));
            }
            let bits = scalar_bits(cs, &args[0]);
            Ok(Some(Val::Point(gadgets::mul_generator(cs, &bits))))
        }
        "mul" => {
            arity(2)?;
            let Val::Point(base) = &args[1] else {
                return Err(type_error(1, "a point"));
            };
            if matches!(args[0], Val::Point(_)) {
                return Err(type_error(0, "a scalar or field"));
            }
            let bits = scalar_bits(cs, &args[0]);
            Ok(Some(Val::Point(gadgets::mul_point(cs, &bits, base))))
        }
        "add" => {
            arity(2)?;
            match (&args[0], &args[1]) {
                (Val::Point(p), Val::Point(q)) => Ok(Some(Val::Point(gadgets::add_points(cs, p, q)))),
                (Val::Point(_), _) => Err(type_error(1, "a point")),
                _ => Err(type_error(0, "a point")),
            }
        }
        "assert_on_curve" => {
            arity(1)?;
            let Val::Point(p) = &args[0] else {
                return Err(type_error(0, "a point"));
            };
            gadgets::enforce_on_curve(cs, p);
            Ok(None)
        }
        "assert_prime_order" => {
            arity(1)?;
            let Val::Point(p) = &args[0] else {
                return Err(type_error(0, "a point"));
            };
            gadgets::enforce_prime_order(cs, p);
            Ok(None)
        }
        "assert_eq" => {
            arity(2)?;
            match (&args[0], &args[1]) {
                (Val::Point(p), Val::Point(q)) => {
                    cs.enforce_equal(&p.x, &q.x);
                    cs.enforce_equal(&p.y, &q.y);
                }
                (Val::Field(a), Val::Field(b)) | (Val::Scalar(a, _), Val::Scalar(b, _)) => {
                    cs.enforce_equal(a, b);
                }
                _ => return Err(pos.error("'assert_eq' needs two values of the same type")),
            }
            Ok(None)
        }
        "assert_product" => {
            arity(3)?;
            let mut nums = Vec::new();
            for (i, a) in args.iter().enumerate() {
                match a {
                    Val::Field(n) => nums.push(n),
                    _ => return Err(type_error(i, "a field")),
                }
            }
            cs.enforce(nums[0], nums[1], nums[2]);
            Ok(None)
        }
        other => Err(pos.error(format!("unknown function '{other}'"))),
    }
}

/// Scalars carry their range-checked bits; field values are decomposed
/// canonically below the field modulus.
fn scalar_bits(cs: &mut CircuitBuilder, v: &Val) -> Vec<Num> {
    match v {
        Val::Scalar(_, bits) => bits.clone(),
        Val::Field(n) => gadgets::to_bits_le_bounded(cs, n, &gadgets::field_max()),
        Val::Point(_) => unreachable!("callers reject points"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::babyjubjub::BabyJubjub;
    use crate::eddsa::SigningKeyPair;
    use crate::r1cs::{Constraint, LinearCombination};
    use ark_ff::One;

    fn credential(seed: u8, client_id: u64) -> ClientCredential {
        let kp = SigningKeyPair::<BabyJubjub>::generate(&[seed; 32]).unwrap();
        let client_id = Fr::from(client_id);
        ClientCredential {
            client_id,
            signature: kp.sign(&client_id),
            idp_credential_pk: kp.pk,
        }
    }

    #[test]
    fn sidecar_digest_matches_source() {
        let sidecar = include_str!("../boilerplate/membership.xpr.sha256");
        let expected = sidecar.split_whitespace().next().unwrap();
        assert_eq!(hex::encode(program_digest(MEMBERSHIP_SOURCE)), expected);
    }

    #[test]
    fn product_program_is_one_constraint() {
        let program = BoilerplateProgram::new(
            "def main(private field a, private field b, public field c) { assert_product(a, b, c); }",
            vec![
                Parameter::new("a", Visibility::Private, ValueType::Field),
                Parameter::new("b", Visibility::Private, ValueType::Field),
                Parameter::new("c", Visibility::Public, ValueType::Field),
            ],
        );
        let cs = compile(&program).unwrap();
        // Public c is variable 1, then a and b.
        let expected = ConstraintSystem {
            num_public: 1,
            num_variables: 4,
            constraints: vec![Constraint {
                a: LinearCombination(vec![(2, Fr::one())]),
                b: LinearCombination(vec![(3, Fr::one())]),
                c: LinearCombination(vec![(1, Fr::one())]),
            }],
        };
        assert_eq!(cs, expected);
    }

    #[test]
    fn membership_compiles_deterministically() {
        let a = compile(&BoilerplateProgram::membership()).unwrap();
        let b = compile(&BoilerplateProgram::membership()).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.num_public, 2);
        assert!(a.num_constraints() > 1000);
    }

    #[test]
    fn honest_witness_satisfies_and_public_slice_is_pk() {
        let cs = compile(&BoilerplateProgram::membership()).unwrap();
        let cred = credential(1, 12345);
        let w = build_witness(&cs, &cred.idp_credential_pk, &cred).unwrap();
        assert!(cs.evaluate(&w).unwrap());
        assert_eq!(w.public_inputs(2), membership_public_inputs(&cred.idp_credential_pk).as_slice());
    }

    #[test]
    fn invalid_credential_fails_fast() {
        let cs = compile(&BoilerplateProgram::membership()).unwrap();
        let mut cred = credential(1, 12345);
        cred.signature.s += 1u32;
        assert_eq!(
            build_witness(&cs, &cred.idp_credential_pk, &cred),
            Err(CircuitError::InvalidCredential)
        );
        // Bypassing the pre-check yields an unsatisfying witness instead.
        let (sys, w) = synthesize(&BoilerplateProgram::membership(), &membership_inputs(&cred)).unwrap();
        assert_eq!(sys, cs);
        assert!(!sys.evaluate(&w).unwrap());
    }

    #[test]
    fn parse_errors_carry_position() {
        let program = BoilerplateProgram::new(
            "def main(public point pk) {\n  assert_on_curve(pk)\n}",
            vec![Parameter::new("pk", Visibility::Public, ValueType::Point)],
        );
        match compile(&program) {
            Err(CircuitError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 1)),
            other => panic!("unexpected {other:?}"),
        }
        let program = BoilerplateProgram::new(
            "def main(public point pk) { point q = mul_base(pk); }",
            vec![Parameter::new("pk", Visibility::Public, ValueType::Point)],
        );
        assert!(matches!(compile(&program), Err(CircuitError::Parse { line: 1, .. })));
    }

    #[test]
    fn schema_mismatch_detected() {
        let mut program = BoilerplateProgram::membership();
        program.parameter_schema[0].visibility = Visibility::Private;
        assert!(matches!(compile(&program), Err(CircuitError::SchemaMismatch(_))));
    }
}
