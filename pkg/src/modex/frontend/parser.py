"""Problem DSL: tokenizer, recursive-descent parser and canonical printer.

Example::

    domain a b ;
    vocab Edge/2, Trans/2 ;
    module Mt := builtin transitive_closure(Edge, Trans) ;
    module Mf := builtin full_relation(Trans) ;
    expr E := project {Edge} (Mt * -Mf) ;
    solve E ;

Statements: ``domain``, ``vocab``, ``module``, ``expr``, ``init`` and
``solve``.  Module bodies are ``clause { lit | lit ; ... }``,
``table { {atom, ...} ; ... }`` (each row lists the true atoms) or
``builtin kind(args)``, optionally followed by ``with voc {P, ...}``.
Expressions use ``+`` < ``*`` < prefix ``-``; primaries are names,
``bot``, ``project {P,...} (E)``, ``select P==Q (E)``,
``select [theta] (E)`` and parentheses.  ``#`` starts a comment.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple

from ..algebra import (
    BUILTIN_KINDS,
    And,
    Atomic,
    AtomicModuleDef,
    Bot,
    ClauseBody,
    Complement,
    Eq,
    ExprError,
    ModuleExpr,
    Not,
    Or,
    Plus,
    Product,
    Project,
    Select,
    SelectTheta,
    TableBody,
    check_expr,
    lit_code,
    make_clauses,
    vocabulary_of,
)
from ..lattice import PartialStructure, Signature, SignatureError, TruthValue


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.msg, self.line, self.col = msg, line, col
        super().__init__(f"line {line}, col {col}: {msg}" if line else msg)


class Tok(NamedTuple):
    kind: str  # NAME, SYM, EOF
    text: str
    line: int
    col: int


_TOKEN = re.compile(r"\s+|#[^\n]*|(?P<name>[A-Za-z0-9_]+)|(?P<sym>:=|==|!=|[;,/{}()\[\]*+\-|&!=])")

KEYWORDS = {"domain", "vocab", "module", "expr", "init", "solve", "clause", "table", "builtin",
            "with", "voc", "project", "select", "bot"}


def tokenize(text: str) -> list[Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        if m.group("name"):
            toks.append(Tok("NAME", m.group("name"), line, pos - line_start + 1))
        elif m.group("sym"):
            toks.append(Tok("SYM", m.group("sym"), line, pos - line_start + 1))
        chunk = m.group(0)
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    toks.append(Tok("EOF", "", line, pos - line_start + 1))
    return toks


@dataclass
class ModuleSource:
    """What the text said about a module, kept for printing."""

    name: str
    kind: str  # clause | table | builtin
    voc: tuple[str, ...] | None
    clauses: list = field(default_factory=list)  # list of [(neg, atom_text)]
    rows: list = field(default_factory=list)  # list of [atom_text]
    builtin: str = ""
    args: tuple[str, ...] = ()


@dataclass
class ProblemSpec:
    sig: Signature
    interp: dict[str, AtomicModuleDef]
    exprs: dict[str, ModuleExpr]
    goal_name: str
    init: PartialStructure | None
    sources: list[ModuleSource]

    @property
    def goal(self) -> ModuleExpr:
        return self.exprs[self.goal_name] if self.goal_name in self.exprs else Atomic(self.goal_name)

    def initial(self) -> PartialStructure:
        return self.init if self.init is not None else PartialStructure.bottom(self.sig)

    def goal_vocabulary(self) -> frozenset[str]:
        return vocabulary_of(self.goal, self.interp, self.sig)


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # token helpers -----------------------------------------------------

    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: Tok | None = None) -> ParseError:
        t = tok or self.tok
        return ParseError(msg, t.line, t.col)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind != "EOF"

    def take(self, text: str | None = None, kind: str | None = None) -> Tok:
        t = self.tok
        if text is not None and (t.text != text or t.kind == "EOF"):
            raise self.error(f"expected {text!r}, found {t.text or 'end of input'!r}")
        if kind is not None and t.kind != kind:
            raise self.error(f"expected a name, found {t.text or 'end of input'!r}")
        self.i += 1
        return t

    def name(self) -> str:
        return self.take(kind="NAME").text

    def name_list(self, close: str) -> list[str]:
        out = []
        if not self.at(close):
            out.append(self.name())
            while self.at(","):
                self.take(",")
                out.append(self.name())
        return out

    # statements --------------------------------------------------------

    def parse(self) -> ProblemSpec:
        domain = None
        vocab: list[tuple[str, int]] = []
        raw_modules: list[tuple[ModuleSource, Tok]] = []
        raw_exprs: list[tuple[str, object, Tok]] = []
        raw_init = None
        goal = None
        while self.tok.kind != "EOF":
            t = self.tok
            kw = self.name()
            if kw == "domain":
                if domain is not None:
                    raise self.error("domain declared twice", t)
                domain = []
                while not self.at(";"):
                    domain.append(self.name())
            elif kw == "vocab":
                while True:
                    p = self.name()
                    self.take("/")
                    ar = self.take(kind="NAME")
                    if not ar.text.isdigit():
                        raise self.error("arity must be a number", ar)
                    vocab.append((p, int(ar.text)))
                    if not self.at(","):
                        break
                    self.take(",")
            elif kw == "module":
                name = self.name()
                self.take(":=")
                raw_modules.append((self.module_body(name), t))
            elif kw == "expr":
                name = self.name()
                self.take(":=")
                raw_exprs.append((name, self.expr(), t))
            elif kw == "init":
                raw_init = (self.init_body(), t)
            elif kw == "solve":
                gtok = self.tok
                goal = (self.name(), gtok)
            else:
                raise self.error(f"unknown statement {kw!r}", t)
            self.take(";")
        return self.resolve(domain, vocab, raw_modules, raw_exprs, raw_init, goal)

    def atom_text(self) -> str:
        p = self.name()
        if self.at("("):
            self.take("(")
            args = self.name_list(")")
            self.take(")")
            return f"{p}({','.join(args)})"
        return p

    def module_body(self, name: str) -> ModuleSource:
        kind_tok = self.tok
        kind = self.name()
        src = ModuleSource(name, kind, None)
        if kind == "clause":
            self.take("{")
            while not self.at("}"):
                lits = [self.literal()]
                while self.at("|"):
                    self.take("|")
                    lits.append(self.literal())
                src.clauses.append((lits, kind_tok))
                if self.at(";"):
                    self.take(";")
                elif not self.at("}"):
                    raise self.error("expected ';' or '}' after a clause")
            self.take("}")
        elif kind == "table":
            self.take("{")
            while not self.at("}"):
                self.take("{")
                row = []
                if not self.at("}"):
                    row.append(self.atom_text())
                    while self.at(","):
                        self.take(",")
                        row.append(self.atom_text())
                self.take("}")
                src.rows.append(row)
                if self.at(";"):
                    self.take(";")
                elif not self.at("}"):
                    raise self.error("expected ';' or '}' after a table row")
            self.take("}")
        elif kind == "builtin":
            btok = self.tok
            src.builtin = self.name()
            if src.builtin not in BUILTIN_KINDS:
                raise self.error(f"unknown builtin {src.builtin!r}; expected one of {', '.join(BUILTIN_KINDS)}", btok)
            self.take("(")
            src.args = tuple(self.name_list(")"))
            self.take(")")
        else:
            raise self.error(f"unknown module kind {kind!r}; expected clause, table or builtin", kind_tok)
        if self.at("with"):
            self.take("with")
            self.take("voc")
            self.take("{")
            src.voc = tuple(self.name_list("}"))
            self.take("}")
        return src

    def literal(self):
        neg = False
        if self.at("-"):
            self.take("-")
            neg = True
        t = self.tok
        return (neg, self.atom_text(), t)

    def init_body(self):
        self.take("{")
        vals = []
        while not self.at("}"):
            t = self.tok
            a = self.atom_text()
            self.take("=")
            v = self.take(kind="NAME")
            if v.text.lower() not in ("t", "f", "u", "i"):
                raise self.error("truth value must be one of t, f, u, i", v)
            vals.append((a, v.text.lower(), t))
            if self.at(","):
                self.take(",")
            elif not self.at("}"):
                raise self.error("expected ',' or '}'")
        self.take("}")
        return vals

    # expressions -------------------------------------------------------

    def expr(self):
        left = self.term()
        while self.at("+"):
            self.take("+")
            left = ("plus", left, self.term())
        return left

    def term(self):
        left = self.factor()
        while self.at("*"):
            self.take("*")
            left = ("prod", left, self.factor())
        return left

    def factor(self):
        if self.at("-"):
            self.take("-")
            return ("neg", self.factor())
        return self.primary()

    def primary(self):
        t = self.tok
        if self.at("("):
            self.take("(")
            e = self.expr()
            self.take(")")
            return e
        if t.kind != "NAME":
            raise self.error(f"expected an expression, found {t.text or 'end of input'!r}")
        if t.text == "bot":
            self.take()
            return ("bot",)
        if t.text == "project":
            self.take()
            self.take("{")
            start = self.i
            preds = self.name_list("}")
            ptoks = [x for x in self.toks[start:self.i] if x.kind == "NAME"]
            self.take("}")
            self.take("(")
            e = self.expr()
            self.take(")")
            return ("project", tuple(preds), e, t, ptoks)
        if t.text == "select":
            self.take()
            if self.at("["):
                self.take("[")
                th = self.theta()
                self.take("]")
                self.take("(")
                e = self.expr()
                self.take(")")
                return ("theta", th, e, t)
            q = self.name()
            self.take("==")
            r = self.name()
            self.take("(")
            e = self.expr()
            self.take(")")
            return ("select", q, r, e, t)
        self.take()
        return ("ref", t.text, t)

    def theta(self):
        left = self.theta_and()
        while self.at("|"):
            self.take("|")
            left = Or(left, self.theta_and())
        return left

    def theta_and(self):
        left = self.theta_not()
        while self.at("&"):
            self.take("&")
            left = And(left, self.theta_not())
        return left

    def theta_not(self):
        if self.at("!"):
            self.take("!")
            return Not(self.theta_not())
        if self.at("("):
            self.take("(")
            th = self.theta()
            self.take(")")
            return th
        q = self.name()
        if self.at("=="):
            self.take("==")
            return Eq(q, self.name())
        self.take("!=")
        return Not(Eq(q, self.name()))

    # resolution --------------------------------------------------------

    def resolve(self, domain, vocab, raw_modules, raw_exprs, raw_init, goal) -> ProblemSpec:
        if domain is None:
            raise ParseError("missing domain declaration")
        try:
            sig = Signature(domain, vocab)
        except SignatureError as exc:
            raise ParseError(str(exc)) from None
        interp: dict[str, AtomicModuleDef] = {}
        sources = []
        for src, tok in raw_modules:
            if src.name in interp:
                raise self.error(f"module {src.name!r} defined twice", tok)
            interp[src.name] = self.make_module(src, sig, tok)
            sources.append(src)
        exprs: dict[str, ModuleExpr] = {}
        for name, raw, tok in raw_exprs:
            if name in exprs or name in interp:
                raise self.error(f"name {name!r} defined twice", tok)
            e = self.build_expr(raw, interp, exprs, sig)
            try:
                check_expr(e, interp, sig)
            except (ExprError, SignatureError) as exc:
                raise self.error(str(exc), tok) from None
            exprs[name] = e
        init = None
        if raw_init is not None:
            vals, _ = raw_init
            buf = bytearray(len(sig))
            for a, v, tok in vals:
                try:
                    buf[sig.parse_atom(a)] = TruthValue.parse(v)
                except SignatureError as exc:
                    raise self.error(str(exc), tok) from None
            init = PartialStructure(sig, bytes(buf))
        if goal is None:
            raise ParseError("missing 'solve <name> ;' statement")
        gname, gtok = goal
        if gname not in exprs and gname not in interp:
            raise self.error(f"unknown name {gname!r}", gtok)
        return ProblemSpec(sig, interp, exprs, gname, init, sources)

    def make_module(self, src: ModuleSource, sig: Signature, tok: Tok) -> AtomicModuleDef:
        try:
            if src.kind == "clause":
                raw = []
                mentioned = []
                for lits, _ in src.clauses:
                    cl = []
                    for neg, a, atok in lits:
                        try:
                            k = sig.parse_atom(a)
                        except SignatureError as exc:
                            raise self.error(str(exc), atok) from None
                        mentioned.append(sig.atom(k).pred)
                        cl.append(lit_code(k, not neg))
                    raw.append(cl)
                body = ClauseBody(tuple(make_clauses(raw, where=f"module {src.name}")))
                voc = src.voc if src.voc is not None else tuple(dict.fromkeys(mentioned))
            elif src.kind == "table":
                rows = []
                mentioned = []
                for row in src.rows:
                    ks = frozenset(sig.parse_atom(a) for a in row)
                    mentioned.extend(sig.atom(k).pred for k in ks)
                    rows.append(ks)
                voc = src.voc if src.voc is not None else tuple(dict.fromkeys(mentioned))
                vmask = sum(1 << k for k in sig.indices(voc))
                for ks in rows:
                    if any(not vmask >> k & 1 for k in ks):
                        raise self.error(f"table row of {src.name} mentions atoms outside its vocabulary", tok)
                body = TableBody(tuple(rows), vmask)
            else:
                cls, nargs = BUILTIN_KINDS[src.builtin]
                if len(src.args) != nargs:
                    raise self.error(f"{src.builtin} takes {nargs} predicate argument(s)", tok)
                for a in src.args:
                    sig.arity(a)
                body = cls(*src.args)
                voc = src.voc if src.voc is not None else src.args
            return AtomicModuleDef(src.name, voc, body, sig)
        except (ExprError, SignatureError) as exc:
            raise self.error(f"module {src.name}: {exc}", tok) from None

    def build_expr(self, raw, interp, exprs, sig) -> ModuleExpr:
        tag = raw[0]
        if tag == "bot":
            return Bot()
        if tag == "ref":
            _, name, tok = raw
            if name in exprs:
                return exprs[name]
            if name in interp:
                return Atomic(name)
            raise self.error(f"unknown name {name!r}", tok)
        if tag == "plus":
            return Plus(self.build_expr(raw[1], interp, exprs, sig), self.build_expr(raw[2], interp, exprs, sig))
        if tag == "prod":
            return Product(self.build_expr(raw[1], interp, exprs, sig), self.build_expr(raw[2], interp, exprs, sig))
        if tag == "neg":
            return Complement(self.build_expr(raw[1], interp, exprs, sig))
        if tag == "project":
            _, preds, e, tok, ptoks = raw
            for ptok in ptoks:
                if ptok.text not in sig.predicates:
                    raise self.error(f"projection: unknown predicate {ptok.text!r}", ptok)
            delta = sig.check_subvocab(preds)
            return Project(delta, self.build_expr(e, interp, exprs, sig))
        if tag == "select":
            _, q, r, e, tok = raw
            out = Select(q, r, self.build_expr(e, interp, exprs, sig))
            try:
                check_expr(out, interp, sig)
            except (ExprError, SignatureError) as exc:
                raise self.error(str(exc), tok) from None
            return out
        if tag == "theta":
            _, th, e, tok = raw
            out = SelectTheta(th, self.build_expr(e, interp, exprs, sig))
            try:
                check_expr(out, interp, sig)
            except (ExprError, SignatureError) as exc:
                raise self.error(str(exc), tok) from None
            return out
        raise AssertionError(tag)


def parse_problem(text: str) -> ProblemSpec:
    """Parse DSL text; raises :class:`ParseError` with line and column."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing


def format_theta(th) -> str:
    if isinstance(th, Eq):
        return f"{th.q}=={th.r}"
    if isinstance(th, Not):
        if isinstance(th.arg, Eq):
            return f"{th.arg.q}!={th.arg.r}"
        return f"!({format_theta(th.arg)})"
    if isinstance(th, And):
        return f"({format_theta(th.left)} & {format_theta(th.right)})"
    if isinstance(th, Or):
        return f"({format_theta(th.left)} | {format_theta(th.right)})"
    raise ExprError(f"malformed selection formula: {th!r}")


def format_expr(e: ModuleExpr) -> str:
    """Fully parenthesised text that parses back to ``e``."""
    if isinstance(e, Bot):
        return "bot"
    if isinstance(e, Atomic):
        return e.name
    if isinstance(e, Product):
        return f"({format_expr(e.left)} * {format_expr(e.right)})"
    if isinstance(e, Plus):
        return f"({format_expr(e.left)} + {format_expr(e.right)})"
    if isinstance(e, Complement):
        return f"-{format_expr(e.expr)}"
    if isinstance(e, Project):
        return f"project {{{', '.join(sorted(e.delta))}}} ({format_expr(e.expr)})"
    if isinstance(e, Select):
        return f"select {e.q}=={e.r} ({format_expr(e.expr)})"
    if isinstance(e, SelectTheta):
        return f"select [{format_theta(e.theta)}] ({format_expr(e.expr)})"
    raise ExprError(f"not a module expression: {e!r}")


def _format_module(d: AtomicModuleDef) -> str:
    sig, body = d.sig, d.body
    voc = ", ".join(p for p, _ in sig.vocab if p in d.voc)
    if isinstance(body, ClauseBody):
        cls = []
        for c in body.clauses:
            cls.append(" | ".join(("-" if l & 1 else "") + sig.format_atom(l >> 1) for l in c))
        inner = " ; ".join(cls)
        text = f"clause {{ {inner} }}" if cls else "clause { }"
    elif isinstance(body, TableBody):
        rows = []
        for row in sorted(body.rows, key=lambda r: sorted(r)):
            rows.append("{" + ", ".join(sig.format_atom(k) for k in sorted(row)) + "}")
        text = "table { " + " ; ".join(rows) + " }" if rows else "table { }"
    else:
        args = {"transitive_closure": lambda b: (b.edge, b.trans),
                "full_relation": lambda b: (b.pred,),
                "bounds_leq": lambda b: (b.qc, b.qd)}[body.kind](body)
        text = f"builtin {body.kind}({', '.join(args)})"
    return f"module {d.name} := {text} with voc {{{voc}}} ;"


def format_problem(spec: ProblemSpec) -> str:
    sig = spec.sig
    lines = [f"domain {' '.join(sig.domain)} ;"]
    if sig.vocab:
        lines.append("vocab " + ", ".join(f"{p}/{a}" for p, a in sig.vocab) + " ;")
    for d in spec.interp.values():
        lines.append(_format_module(d))
    for name, e in spec.exprs.items():
        lines.append(f"expr {name} := {format_expr(e)} ;")
    if spec.init is not None:
        vals = [f"{sig.format_atom(k)} = {'utfi'[v]}" for k, v in enumerate(spec.init.data) if v]
        lines.append("init { " + ", ".join(vals) + " } ;")
    lines.append(f"solve {spec.goal_name} ;")
    return "\n".join(lines) + "\n"


def spec_key(spec: ProblemSpec):
    """Comparable summary of a parsed problem (used for round-trip checks)."""
    mods = []
    for name, d in spec.interp.items():
        b = d.body
        if isinstance(b, ClauseBody):
            body = ("clause", tuple(b.clauses))
        elif isinstance(b, TableBody):
            body = ("table", frozenset(b.rows), b.voc_mask)
        else:
            body = (b.kind, b)
        mods.append((name, d.voc, body))
    init = spec.init.data if spec.init is not None else None
    return (spec.sig, tuple(mods), tuple(spec.exprs.items()), spec.goal_name, init)
