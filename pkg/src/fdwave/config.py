"""Run configuration: a TOML file parsed and validated before any compute.

Coefficients, initial data and source factors are arithmetic expressions in
``x`` (space) or ``t`` (time) using ``+ - * / ^``, parentheses, numbers, the
constants ``pi`` and ``e`` and the functions ``sin``, ``cos``, ``exp``,
``sqrt``. Expressions are compiled from a whitelisted Python AST, never
evaluated with ``eval``.
"""

from __future__ import annotations

import ast
import logging
import operator
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "Expression",
    "ProblemConfig",
    "RunConfig",
    "parse_expression",
    "load_config",
    "parse_config",
]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}
_CONSTS = {"pi": np.pi, "e": np.e}


@dataclass(frozen=True)
class Expression:
    """Compiled expression in one variable, vectorised over numpy arrays."""

    source: str
    variable: str
    _fn: Callable = field(repr=False, compare=False)

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        with np.errstate(all="ignore"):
            out = np.asarray(self._fn(v), dtype=float)
        return np.broadcast_to(out, v.shape).copy()


def _normalise(text: str) -> str:
    return text.replace("^", "**")


def _compile(node: ast.AST, variable: str, where: str) -> Callable:
    if isinstance(node, ast.Expression):
        return _compile(node.body, variable, where)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        c = float(node.value)
        return lambda v: c
    if isinstance(node, ast.Name):
        if node.id == variable:
            return lambda v: v
        if node.id in _CONSTS:
            c = _CONSTS[node.id]
            return lambda v: c
        raise ConfigError(f"{where}: unknown name {node.id!r} (variable is {variable!r})")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        lhs, rhs = _compile(node.left, variable, where), _compile(node.right, variable, where)
        return lambda v: op(lhs(v), rhs(v))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
        op = _UNOPS[type(node.op)]
        arg = _compile(node.operand, variable, where)
        return lambda v: op(arg(v))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1 or node.keywords:
            raise ConfigError(f"{where}: {node.func.id} takes exactly one argument")
        fn = _FUNCS[node.func.id]
        arg = _compile(node.args[0], variable, where)
        return lambda v: fn(arg(v))
    raise ConfigError(f"{where}: unsupported syntax {ast.dump(node)[:60]}")


def parse_expression(text, variable: str = "x", where: str = "expression") -> Expression:
    """Compile ``text`` (a string or a number) into a vectorised callable."""
    if isinstance(text, bool):
        raise ConfigError(f"{where}: expected an expression, got a boolean")
    if isinstance(text, (int, float)):
        text = repr(float(text))
    if not isinstance(text, str) or not text.strip():
        raise ConfigError(f"{where}: expected a nonempty expression string")
    try:
        tree = ast.parse(_normalise(text), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r}: {exc.msg}") from None
    return Expression(text, variable, _compile(tree, variable, where))


# ---------------------------------------------------------------------------
# schema


@dataclass(frozen=True)
class ProblemConfig:
    alpha: float
    x_L: float
    x_R: float
    n_interior: int
    T: float
    n_steps: int
    sides: tuple[str, ...]
    a: Expression
    B: Expression
    c: Expression
    a0: float
    B_prime: Expression | None
    init_a: Expression | None
    init_b: Expression | None
    f: Expression | None
    g: Expression | None
    g0: float | None
    g_prime: Expression | None
    n_modes: int | None


@dataclass(frozen=True)
class RunConfig:
    """Fully validated run description.

    ``tasks`` maps a subcommand name to its parameter table (already checked
    against the allowed keys); ``raw`` is the parsed TOML used for the manifest.
    """

    problem: ProblemConfig
    tasks: dict[str, dict[str, Any]]
    seed: int
    out_dir: Path | None
    plot_script: bool
    base_dir: Path
    raw: dict[str, Any]

    def task(self, name: str) -> dict[str, Any]:
        return dict(TASK_DEFAULTS[name], **self.tasks.get(name, {}))


TASK_DEFAULTS: dict[str, dict[str, Any]] = {
    "forward": {"picard": False},
    "adjoint": {"probes": 8, "sides": None},
    "invert": {
        "data": None,
        "lambda_reg": "discrepancy",
        "lambdas": [float(v) for v in np.logspace(-12, -1, 23)],
        "noise_level": 0.0,
        "tau": 1.1,
        "method": "normal-equations",
        "max_iters": 200,
        "truth": None,
    },
    "ucp": {"s": [2.0, 3.0, 5.0, 8.0, 10.0], "T_long": 20.0, "n_steps": 8000, "parabolic_refine": 4,
            "tolerance": 2e-2},
    "verify": {"suites": ["all"]},
}

_PROBLEM_KEYS = {"alpha", "x_L", "x_R", "n_interior", "T", "n_steps", "sides", "n_modes",
                 "coefficients", "initial", "source"}
_COEFF_KEYS = {"a", "B", "c", "a0", "B_prime"}
_INITIAL_KEYS = {"a", "b"}
_SOURCE_KEYS = {"f", "g", "g0", "g_prime"}
_TOP_KEYS = {"problem", "output", "seed"} | set(TASK_DEFAULTS)
_OUTPUT_KEYS = {"dir", "plot_script"}


def _reject_unknown(table: dict, allowed: set[str], where: str) -> None:
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"[{where}] unknown key(s) {extra}; allowed: {sorted(allowed)}")


def _table(parent: dict, key: str, where: str) -> dict:
    v = parent.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(f"{where}.{key} must be a table")
    return v


def _number(table: dict, key: str, where: str, default=None, kind=float):
    if key not in table:
        if default is None:
            raise ConfigError(f"{where}.{key} is required")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    if kind is int:
        if int(v) != v:
            raise ConfigError(f"{where}.{key} must be an integer, got {v!r}")
        return int(v)
    return float(v)


def _optional_expr(table: dict, key: str, variable: str, where: str) -> Expression | None:
    return parse_expression(table[key], variable, f"{where}.{key}") if key in table else None


def _parse_problem(p: dict) -> ProblemConfig:
    _reject_unknown(p, _PROBLEM_KEYS, "problem")
    alpha = _number(p, "alpha", "problem")
    if not 1.0 < alpha < 2.0:
        raise ConfigError(f"problem.alpha must lie in (1, 2), got {alpha}")
    x_L = _number(p, "x_L", "problem", 0.0)
    x_R = _number(p, "x_R", "problem", 1.0)
    if not x_R > x_L:
        raise ConfigError("problem.x_R must exceed problem.x_L")
    n_interior = _number(p, "n_interior", "problem", 63, int)
    n_steps = _number(p, "n_steps", "problem", 128, int)
    T = _number(p, "T", "problem", 1.0)
    if n_interior < 2 or n_steps < 2 or T <= 0:
        raise ConfigError("problem needs n_interior >= 2, n_steps >= 2 and T > 0")
    sides = p.get("sides", ["right"])
    if isinstance(sides, str):
        sides = [sides]
    if not sides or any(s not in ("left", "right") for s in sides) or len(set(sides)) != len(sides):
        raise ConfigError(f"problem.sides must be a subset of ['left', 'right'], got {sides!r}")
    n_modes = p.get("n_modes")
    if n_modes is not None:
        n_modes = _number(p, "n_modes", "problem", kind=int)
        if not 1 <= n_modes <= n_interior:
            raise ConfigError(f"problem.n_modes must lie in [1, {n_interior}]")

    co = _table(p, "coefficients", "problem")
    _reject_unknown(co, _COEFF_KEYS, "problem.coefficients")
    a = parse_expression(co.get("a", 1.0), "x", "problem.coefficients.a")
    B = parse_expression(co.get("B", 0.0), "x", "problem.coefficients.B")
    c = parse_expression(co.get("c", 0.0), "x", "problem.coefficients.c")
    xs = np.linspace(x_L, x_R, 2001)
    a_min = float(np.min(a(xs)))
    if not np.all(np.isfinite(a(xs))):
        raise ConfigError("problem.coefficients.a is not finite on the domain")
    a0 = _number(co, "a0", "problem.coefficients", a_min)
    if a0 <= 0:
        raise ConfigError(f"diffusion coefficient must be positive; problem.coefficients.a0 = {a0}")
    if a_min < a0:
        x_bad = xs[np.argmin(a(xs))]
        raise ConfigError(f"problem.coefficients.a drops to {a_min:.6g} < a0={a0} near x={x_bad:.4g}")
    for name, expr in (("B", B), ("c", c)):
        if not np.all(np.isfinite(expr(xs))):
            raise ConfigError(f"problem.coefficients.{name} is not finite on the domain")

    init = _table(p, "initial", "problem")
    _reject_unknown(init, _INITIAL_KEYS, "problem.initial")
    src = _table(p, "source", "problem")
    _reject_unknown(src, _SOURCE_KEYS, "problem.source")
    f = _optional_expr(src, "f", "x", "problem.source")
    g = _optional_expr(src, "g", "t", "problem.source")
    if f is not None and g is None:
        raise ConfigError("problem.source.f needs a time profile g")
    g0 = None
    if g is not None:
        if "g0" not in src:
            raise ConfigError("problem.source.g0 is required: the exact value g(0) is part of the source")
        g0 = _number(src, "g0", "problem.source")
        if abs(float(g(0.0)) - g0) > 1e-12 * max(1.0, abs(g0)):
            raise ConfigError(f"problem.source.g0 = {g0} disagrees with g(0) = {float(g(0.0))}")
    return ProblemConfig(
        alpha=alpha, x_L=x_L, x_R=x_R, n_interior=n_interior, T=T, n_steps=n_steps,
        sides=tuple(sides), a=a, B=B, c=c, a0=a0,
        B_prime=_optional_expr(co, "B_prime", "x", "problem.coefficients"),
        init_a=_optional_expr(init, "a", "x", "problem.initial"),
        init_b=_optional_expr(init, "b", "x", "problem.initial"),
        f=f, g=g, g0=g0, g_prime=_optional_expr(src, "g_prime", "t", "problem.source"),
        n_modes=n_modes,
    )


def _check_task(name: str, table: dict) -> dict:
    _reject_unknown(table, set(TASK_DEFAULTS[name]), name)
    out = dict(table)
    if name == "invert":
        lam = out.get("lambda_reg", "discrepancy")
        if isinstance(lam, str):
            if lam not in ("discrepancy", "lcurve"):
                raise ConfigError("invert.lambda_reg must be a number, 'discrepancy' or 'lcurve'")
        elif isinstance(lam, bool) or not isinstance(lam, (int, float)) or lam < 0:
            raise ConfigError("invert.lambda_reg must be nonnegative")
        if out.get("method", "normal-equations") not in ("normal-equations", "cgls"):
            raise ConfigError("invert.method must be 'normal-equations' or 'cgls'")
        if "noise_level" in out and _number(out, "noise_level", "invert") < 0:
            raise ConfigError("invert.noise_level must be nonnegative")
        if "lambdas" in out:
            lams = out["lambdas"]
            if not isinstance(lams, list) or len(lams) < 3 or any(
                    isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0 for v in lams):
                raise ConfigError("invert.lambdas must list at least three positive numbers")
            out["lambdas"] = sorted(float(v) for v in lams)
        if out.get("truth") is not None:
            parse_expression(out["truth"], "x", "invert.truth")
    elif name == "ucp":
        s = out.get("s", TASK_DEFAULTS["ucp"]["s"])
        if not isinstance(s, list) or not s or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in s):
            raise ConfigError("ucp.s must be a list of numbers")
        out["s"] = [float(v) for v in s]
        for key, kind in (("T_long", float), ("n_steps", int), ("parabolic_refine", int), ("tolerance", float)):
            if key in out:
                out[key] = _number(out, key, "ucp", kind=kind)
    elif name == "adjoint":
        probes = out.get("probes", 8)
        if isinstance(probes, list):
            for i, pr in enumerate(probes):
                if not isinstance(pr, dict):
                    raise ConfigError(f"adjoint.probes[{i}] must be a table")
                _reject_unknown(pr, {"side", "k", "samples", "expr"}, f"adjoint.probes[{i}]")
                if pr.get("side") not in ("left", "right"):
                    raise ConfigError(f"adjoint.probes[{i}].side must be 'left' or 'right'")
                if sum(k in pr for k in ("k", "samples", "expr")) != 1:
                    raise ConfigError(f"adjoint.probes[{i}] needs exactly one of k, samples, expr")
                if "expr" in pr:
                    parse_expression(pr["expr"], "t", f"adjoint.probes[{i}].expr")
        elif isinstance(probes, bool) or not isinstance(probes, int) or probes < 0:
            raise ConfigError("adjoint.probes must be a count or a list of probe tables")
    elif name == "verify":
        suites = out.get("suites", ["all"])
        if isinstance(suites, str):
            out["suites"] = [suites]
    return out


def parse_config(raw: dict, base_dir: Path | str = ".") -> RunConfig:
    """Validate a parsed TOML document."""
    _reject_unknown(raw, _TOP_KEYS, "top level")
    if "problem" not in raw:
        raise ConfigError("[problem] table is required")
    problem = _parse_problem(_table(raw, "problem", "top level"))
    tasks = {name: _check_task(name, _table(raw, name, "top level")) for name in TASK_DEFAULTS if name in raw}
    seed = _number(raw, "seed", "top level", 42, int)
    out = _table(raw, "output", "top level")
    _reject_unknown(out, _OUTPUT_KEYS, "output")
    base = Path(base_dir)
    out_dir = base / out["dir"] if "dir" in out else None
    return RunConfig(problem=problem, tasks=tasks, seed=seed, out_dir=out_dir,
                     plot_script=bool(out.get("plot_script", False)), base_dir=base, raw=raw)


def load_config(path: Path | str) -> RunConfig:
    """Read and validate a TOML file; syntax errors carry line and column."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw, path.parent)


def config_echo(cfg: RunConfig) -> dict[str, Any]:
    """Plain-data view of the run for the manifest."""
    p = asdict(cfg.problem)
    for k, v in list(p.items()):
        if isinstance(v, dict) and "source" in v:
            p[k] = v["source"]
    return {"problem": p, "tasks": {k: cfg.task(k) for k in cfg.tasks}, "seed": cfg.seed}
