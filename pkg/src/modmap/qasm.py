"""OpenQASM 2.0 subset: parse into :class:`Circuit`, emit back to text."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

from .circuit import BARRIER, MEASURE, RESET, Circuit, GateOp

# name -> (number of params, number of qubits); the qelib1.inc gate set
BUILTIN_GATES: dict[str, tuple[int, int]] = {
    "U": (3, 1), "CX": (0, 2),
    "u3": (3, 1), "u2": (2, 1), "u1": (1, 1), "u0": (1, 1), "u": (3, 1), "p": (1, 1),
    "id": (0, 1), "x": (0, 1), "y": (0, 1), "z": (0, 1), "h": (0, 1),
    "s": (0, 1), "sdg": (0, 1), "t": (0, 1), "tdg": (0, 1), "sx": (0, 1), "sxdg": (0, 1),
    "rx": (1, 1), "ry": (1, 1), "rz": (1, 1),
    "cx": (0, 2), "cy": (0, 2), "cz": (0, 2), "ch": (0, 2), "swap": (0, 2),
    "crx": (1, 2), "cry": (1, 2), "crz": (1, 2), "cu1": (1, 2), "cp": (1, 2), "cu3": (3, 2),
    "rxx": (1, 2), "rzz": (1, 2),
    "ccx": (0, 3), "cswap": (0, 3),
}

_FUNCS: dict[str, Callable[[float], float]] = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan,
    "exp": math.exp, "ln": math.log, "sqrt": math.sqrt,
}


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    column: int
    message: str
    kind: str  # lex | syntax | unsupported | semantic

    def __str__(self):
        return f"{self.line}:{self.column}: {self.kind} error: {self.message}"


class QasmError(Exception):
    def __init__(self, diagnostic: ParseDiagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<real>(\d+\.\d*|\.\d+)([eE][-+]?\d+)?|\d+[eE][-+]?\d+)
  | (?P<int>\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*")
  | (?P<sym>->|==|[;,()\[\]{}+\-*/^])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise QasmError(ParseDiagnostic(line, pos - line_start + 1, f"unexpected character {src[pos]!r}", "lex"))
        kind = m.lastgroup
        text = m.group()
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, text, line, pos - line_start + 1))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rfind("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


@dataclass
class _GateDef:
    params: list[str]
    args: list[str]
    body: list[tuple]  # (name, [expr], [argname], tok)


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0
        self.qregs: dict[str, tuple[int, int]] = {}  # name -> (offset, size)
        self.cregs: dict[str, tuple[int, int]] = {}
        self.nq = 0
        self.nc = 0
        self.gates: dict[str, _GateDef] = {}
        self.ops: list[GateOp] = []

    # -- token helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, msg: str, kind: str = "syntax", tok: _Tok | None = None):
        tok = tok or self.tok
        raise QasmError(ParseDiagnostic(tok.line, tok.col, msg, kind))

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("sym", "id"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text:
            self.fail(f"expected {text!r}, got {self.tok.text or 'end of input'!r}")
        return self.next()

    def ident(self) -> _Tok:
        if self.tok.kind != "id":
            self.fail(f"expected identifier, got {self.tok.text or 'end of input'!r}")
        return self.next()

    def integer(self) -> int:
        if self.tok.kind != "int":
            self.fail(f"expected integer, got {self.tok.text or 'end of input'!r}")
        return int(self.next().text)

    # -- expressions, compiled to closures over a parameter environment
    def expr(self):
        lhs = self.term()
        while self.tok.text in ("+", "-"):
            op = self.next().text
            rhs = self.term()
            lhs = (lambda a, b: lambda env: a(env) + b(env))(lhs, rhs) if op == "+" else \
                  (lambda a, b: lambda env: a(env) - b(env))(lhs, rhs)
        return lhs

    def term(self):
        lhs = self.factor()
        while self.tok.text in ("*", "/"):
            op = self.next().text
            rhs = self.factor()
            lhs = (lambda a, b: lambda env: a(env) * b(env))(lhs, rhs) if op == "*" else \
                  (lambda a, b: lambda env: a(env) / b(env))(lhs, rhs)
        return lhs

    def factor(self):
        if self.tok.text == "-":
            self.next()
            inner = self.factor()
            return lambda env: -inner(env)
        if self.tok.text == "+":
            self.next()
            return self.factor()
        base = self.primary()
        if self.tok.text == "^":
            self.next()
            exp = self.factor()
            return lambda env: base(env) ** exp(env)
        return base

    def primary(self):
        tok = self.tok
        if tok.kind in ("real", "int"):
            self.next()
            v = float(tok.text)
            return lambda env: v
        if tok.text == "(":
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "id":
            self.next()
            if tok.text == "pi":
                return lambda env: math.pi
            if tok.text in _FUNCS:
                fn = _FUNCS[tok.text]
                self.expect("(")
                e = self.expr()
                self.expect(")")
                return lambda env: fn(e(env))

            def lookup(env, name=tok.text, tok=tok):
                if name not in env:
                    raise QasmError(ParseDiagnostic(tok.line, tok.col, f"unknown parameter {name!r}", "semantic"))
                return env[name]
            return lookup
        self.fail(f"unexpected {tok.text or 'end of input'!r} in expression")

    def expr_list(self) -> list:
        out = []
        if self.accept("("):
            if not self.accept(")"):
                out.append(self.expr())
                while self.accept(","):
                    out.append(self.expr())
                self.expect(")")
        return out

    # -- operands
    def operand(self, regs: dict) -> tuple[list[int], _Tok]:
        name = self.ident()
        if name.text not in regs:
            kind = "register" if regs is self.qregs else "classical register"
            self.fail(f"undeclared {kind} {name.text!r}", "semantic", name)
        off, size = regs[name.text]
        if self.accept("["):
            idx_tok = self.tok
            idx = self.integer()
            self.expect("]")
            if idx >= size:
                self.fail(f"index {idx} out of bounds for {name.text}[{size}]", "semantic", idx_tok)
            return [off + idx], name
        return list(range(off, off + size)), name

    def broadcast(self, operands: list[tuple[list[int], _Tok]]) -> list[tuple[int, ...]]:
        sizes = {len(q) for q, _ in operands if len(q) != 1}
        if len(sizes) > 1:
            self.fail("register size mismatch in broadcast", "semantic", operands[0][1])
        n = sizes.pop() if sizes else 1
        return [tuple(q[k] if len(q) > 1 else q[0] for q, _ in operands) for k in range(n)]

    # -- statements
    def program(self) -> Circuit:
        if self.tok.text != "OPENQASM":
            self.fail("program must begin with 'OPENQASM 2.0;'")
        self.next()
        ver = self.tok
        if ver.kind not in ("real", "int"):
            self.fail("expected version number")
        self.next()
        if not ver.text.startswith("2"):
            self.fail(f"OpenQASM version {ver.text} is not supported", "unsupported", ver)
        self.expect(";")
        while self.tok.kind != "eof":
            self.statement()
        return Circuit(self.nq, tuple(self.ops), self.nc)

    def statement(self):
        tok = self.tok
        word = tok.text
        if word == "include":
            self.next()
            f = self.tok
            if f.kind != "string":
                self.fail("expected file name string")
            self.next()
            if f.text.strip('"') != "qelib1.inc":
                self.fail(f"cannot include {f.text}", "unsupported", f)
            self.expect(";")
        elif word in ("qreg", "creg"):
            self.next()
            name = self.ident()
            self.expect("[")
            size = self.integer()
            self.expect("]")
            self.expect(";")
            if name.text in self.qregs or name.text in self.cregs:
                self.fail(f"register {name.text!r} redeclared", "semantic", name)
            if word == "qreg":
                self.qregs[name.text] = (self.nq, size)
                self.nq += size
            else:
                self.cregs[name.text] = (self.nc, size)
                self.nc += size
        elif word == "gate":
            self.gate_def()
        elif word == "opaque":
            self.fail("opaque gates are not supported", "unsupported")
        elif word == "if":
            self.fail("classically controlled operations are not supported", "unsupported")
        elif word == "measure":
            self.next()
            qs = self.operand(self.qregs)
            self.expect("->")
            cs = self.operand(self.cregs)
            self.expect(";")
            if len(qs[0]) != len(cs[0]):
                self.fail("measure register size mismatch", "semantic", tok)
            for q, c in zip(qs[0], cs[0]):
                self.ops.append(GateOp(MEASURE, (q,), (), c))
        elif word == "reset":
            self.next()
            qs, _ = self.operand(self.qregs)
            self.expect(";")
            for q in qs:
                self.ops.append(GateOp(RESET, (q,)))
        elif word == "barrier":
            self.next()
            args = self.arg_list()
            qubits = tuple(dict.fromkeys(q for qs, _ in args for q in qs))
            self.ops.append(GateOp(BARRIER, qubits))
        elif tok.kind == "id":
            self.next()
            params = [e({}) for e in self.expr_list()]
            args = self.arg_list()
            for qubits in self.broadcast(args):
                self.apply(tok, params, qubits)
        else:
            self.fail(f"unexpected {word or 'end of input'!r}")

    def arg_list(self):
        args = [self.operand(self.qregs)]
        while self.accept(","):
            args.append(self.operand(self.qregs))
        self.expect(";")
        return args

    def gate_def(self):
        self.next()
        name = self.ident()
        params: list[str] = []
        if self.accept("("):
            if not self.accept(")"):
                params.append(self.ident().text)
                while self.accept(","):
                    params.append(self.ident().text)
                self.expect(")")
        args = [self.ident().text]
        while self.accept(","):
            args.append(self.ident().text)
        self.expect("{")
        body = []
        while not self.accept("}"):
            if self.tok.kind == "eof":
                self.fail("unterminated gate body")
            stok = self.ident()
            if stok.text == BARRIER:
                names = [self.ident()]
                while self.accept(","):
                    names.append(self.ident())
                self.expect(";")
                body.append((BARRIER, [], names, stok))
                continue
            exprs = self.expr_list()
            names = [self.ident()]
            while self.accept(","):
                names.append(self.ident())
            self.expect(";")
            for n in names:
                if n.text not in args:
                    self.fail(f"unknown gate argument {n.text!r}", "semantic", n)
            body.append((stok.text, exprs, names, stok))
        self.gates[name.text] = _GateDef(params, args, body)

    def apply(self, tok: _Tok, params: list[float], qubits: tuple[int, ...]):
        name = tok.text
        if len(set(qubits)) != len(qubits):
            self.fail(f"repeated qubit operand in {name}", "semantic", tok)
        if name in self.gates:
            g = self.gates[name]
            if len(params) != len(g.params) or len(qubits) != len(g.args):
                self.fail(f"gate {name} expects {len(g.params)} params and {len(g.args)} qubits", "semantic", tok)
            env = dict(zip(g.params, params))
            binding = dict(zip(g.args, qubits))
            for bname, exprs, names, btok in g.body:
                sub = tuple(binding[n.text] for n in names)
                if bname == BARRIER:
                    self.ops.append(GateOp(BARRIER, sub))
                else:
                    self.apply(btok, [e(env) for e in exprs], sub)
            return
        if name not in BUILTIN_GATES:
            self.fail(f"unknown gate {name!r}", "semantic", tok)
        npar, nq = BUILTIN_GATES[name]
        if len(params) != npar or len(qubits) != nq:
            self.fail(f"gate {name} expects {npar} params and {nq} qubits", "semantic", tok)
        self.ops.append(GateOp(name, qubits, tuple(params)))


def parse_qasm(src: str) -> Circuit:
    """Parse OpenQASM 2.0 source. Raises :class:`QasmError` with a diagnostic."""
    return _Parser(src).program()


def load_qasm(path) -> Circuit:
    with open(path, encoding="utf-8") as fh:
        return parse_qasm(fh.read())


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_qasm(c: Circuit) -> str:
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{c.num_qubits}];"]
    if c.num_clbits:
        lines.append(f"creg c[{c.num_clbits}];")
    for op in c.ops:
        args = ",".join(f"q[{q}]" for q in op.qubits)
        if op.name == MEASURE:
            if op.clbit is None:
                raise ValueError("measure without a classical bit cannot be emitted")
            lines.append(f"measure {args} -> c[{op.clbit}];")
        elif op.params:
            lines.append(f"{op.name}({','.join(_fmt(p) for p in op.params)}) {args};")
        else:
            lines.append(f"{op.name} {args};")
    return "\n".join(lines) + "\n"
