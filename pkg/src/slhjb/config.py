"""Study configuration files, CSV output and surface persistence.

Configuration files are INI text::

    [model]
    name = bergman
    r_l = 0.1
    r_b = 0.15
    sigma = 0.4
    T = 1

    [payoff]
    type = call
    K = 100

    [scheme]
    gh-order = 2, 4
    interp = linear
    stepper = euler
    domain = auto            # or "lo, hi" in log-price
    price-domain = 25, 500   # alternative: bounds in price, mapped through log
    extrapolation = payoff_asymptotic
    N-rule = 2^4*2^k
    J-rule = N^2/4
    k-range = 1..6

    [measurement]
    intervals = 70:90, 130:170
    reference = exact        # or self-difference

    [output]
    path = report.csv

Every key is optional; missing ones take the defaults in ``DEFAULTS``.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import ConvergenceReport, RefinementRule, StudyPlan, bs_call
from .errors import ConfigurationError
from .interpolation import EXTRAPOLATION_MODES, INTERPOLANTS, Grid
from .problem import Butterfly, Call, TimeMesh, bergman_problem, default_log_domain
from .quadrature import MAX_ORDER, MIN_ORDER
from .solver import STEPPERS, ValueSurface

SCHEMA_VERSION = 1

DEFAULTS = {
    "model": {"name": "bergman", "r_l": "0.1", "r_b": "0.15", "sigma": "0.4", "T": "1"},
    "payoff": {"type": "call", "K": "100", "K1": "100", "K2": "300"},
    "scheme": {
        "gh-order": "2",
        "interp": "linear",
        "stepper": "euler",
        "domain": "auto",
        "price-domain": "",
        "extrapolation": "payoff_asymptotic",
        "N-rule": "2^4*2^k",
        "J-rule": "N^2/4",
        "k-range": "1..6",
    },
    "measurement": {"intervals": "70:90", "reference": "exact"},
    "output": {"path": ""},
}


@dataclass
class StudyConfig:
    model: dict = field(default_factory=dict)
    payoff: dict = field(default_factory=dict)
    M: tuple = (2,)
    interp: str = "linear"
    stepper: str = "euler"
    domain: tuple = None
    extrapolation: str = "payoff_asymptotic"
    N_rule: str = "2^4*2^k"
    J_rule: str = "N^2/4"
    k_range: tuple = (1, 6)
    intervals: list = field(default_factory=lambda: [(70.0, 90.0)])
    reference: str = "exact"
    output: str = ""

    def build_payoff(self):
        if self.payoff["type"] == "call":
            return Call(self.payoff["K"])
        return Butterfly(self.payoff["K1"], self.payoff["K2"])

    def build_problem(self):
        m = self.model
        return bergman_problem(r_l=m["r_l"], r_b=m["r_b"], sigma=m["sigma"], payoff=self.build_payoff(), T=m["T"])

    def domain_bounds(self):
        return self.domain if self.domain is not None else default_log_domain(self.build_payoff())

    def exact_reference(self):
        """Closed-form value as a function of price, when one exists.

        For a call the optimal funding is the borrowing rate throughout, so the
        value is the Black-Scholes price at ``r_b``.
        """
        if self.payoff["type"] != "call":
            return None
        m, K = self.model, self.payoff["K"]
        return lambda s: bs_call(s, K, m["r_b"], m["sigma"], m["T"])

    def plans(self):
        problem = self.build_problem()
        return [
            StudyPlan(
                problem=problem,
                M=M,
                interp=self.interp,
                stepper=self.stepper,
                domain=self.domain_bounds(),
                extrapolation=self.extrapolation,
                N_rule=self.N_rule,
                J_rule=self.J_rule,
                k_range=self.k_range,
                intervals=list(self.intervals),
                reference=self.reference,
                exact=self.exact_reference(),
            )
            for M in self.M
        ]


_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_map(text):
    """``{(section, key): line}`` and ``{section: line}`` located by scanning the raw text."""
    keys, sections, current = {}, {}, None
    for no, line in enumerate(text.splitlines(), start=1):
        if line[:1].isspace() and current is not None and _KEY.match(line) is None:
            continue
        m = _SECTION.match(line)
        if m:
            current = m.group(1).strip()
            sections.setdefault(current, no)
            continue
        m = _KEY.match(line)
        if m and current is not None:
            keys.setdefault((current, m.group(1).strip().lower()), no)
    return keys, sections


class _Reader:
    def __init__(self, text, source):
        self.source = source
        self.keys, self.sections = _line_map(text)
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
        self.cp.optionxform = str.lower
        try:
            self.cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigurationError(f"{source}: {exc}".replace("\n", " ")) from None

    def where(self, section, key=None):
        line = self.keys.get((section, key.lower())) if key else self.sections.get(section)
        loc = f"{self.source}:{line}" if line else self.source
        return f"{loc}: [{section}]" + (f" {key}" if key else "")

    def fail(self, section, key, message):
        raise ConfigurationError(f"{self.where(section, key)}: {message}")

    def get(self, section, key):
        if self.cp.has_section(section) and self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        return DEFAULTS[section][key]

    def number(self, section, key, positive=False):
        raw = self.get(section, key)
        try:
            value = float(raw)
        except ValueError:
            self.fail(section, key, f"expected a number, got {raw!r}")
        if not math.isfinite(value) or (positive and not value > 0):
            self.fail(section, key, f"expected a positive finite number, got {raw!r}")
        return value

    def choice(self, section, key, options):
        raw = self.get(section, key)
        if raw not in options:
            self.fail(section, key, f"expected one of {', '.join(options)}, got {raw!r}")
        return raw


def _pair(reader, section, key, raw):
    parts = [p.strip() for p in raw.split(",")]
    try:
        lo, hi = (float(p) for p in parts)
    except ValueError:
        reader.fail(section, key, f"expected 'lo, hi', got {raw!r}")
    if not lo < hi:
        reader.fail(section, key, f"bounds must be increasing, got {raw!r}")
    return lo, hi


def parse_config(text, source="<config>"):
    """Parse and validate study configuration text."""
    r = _Reader(text, source)
    for section in r.cp.sections():
        if section not in DEFAULTS:
            r.fail(section, None, f"unknown section (expected one of {', '.join(DEFAULTS)})")
        for key in r.cp.options(section):
            if key not in {k.lower() for k in DEFAULTS[section]}:
                r.fail(section, key, "unknown key")

    cfg = StudyConfig()
    name = r.get("model", "name")
    if name != "bergman":
        r.fail("model", "name", f"unknown model {name!r} (available: bergman)")
    cfg.model = {"name": name}
    for key in ("r_l", "r_b", "T"):
        cfg.model[key] = r.number("model", key, positive=True)
    cfg.model["sigma"] = r.number("model", "sigma")
    if cfg.model["sigma"] < 0:
        r.fail("model", "sigma", "volatility must be nonnegative")
    if cfg.model["r_l"] > cfg.model["r_b"]:
        r.fail("model", "r_l", "lending rate must not exceed the borrowing rate")

    ptype = r.choice("payoff", "type", ("call", "butterfly"))
    cfg.payoff = {"type": ptype}
    if ptype == "call":
        cfg.payoff["K"] = r.number("payoff", "K", positive=True)
    else:
        cfg.payoff["K1"] = r.number("payoff", "K1", positive=True)
        cfg.payoff["K2"] = r.number("payoff", "K2", positive=True)
        if not cfg.payoff["K1"] < cfg.payoff["K2"]:
            r.fail("payoff", "K2", "butterfly needs K1 < K2")

    raw = r.get("scheme", "gh-order")
    orders = []
    for part in raw.split(","):
        try:
            M = int(part.strip())
        except ValueError:
            r.fail("scheme", "gh-order", f"expected integers, got {raw!r}")
        if not MIN_ORDER <= M <= MAX_ORDER:
            r.fail("scheme", "gh-order", f"order {M} out of range [{MIN_ORDER}, {MAX_ORDER}]")
        orders.append(M)
    cfg.M = tuple(orders)
    cfg.interp = r.choice("scheme", "interp", INTERPOLANTS)
    cfg.stepper = r.choice("scheme", "stepper", STEPPERS)
    cfg.extrapolation = r.choice("scheme", "extrapolation", EXTRAPOLATION_MODES)
    dom = r.get("scheme", "domain")
    pdom = r.get("scheme", "price-domain")
    if pdom and dom != "auto":
        r.fail("scheme", "price-domain", "give either domain or price-domain, not both")
    if pdom:
        lo, hi = _pair(r, "scheme", "price-domain", pdom)
        if lo <= 0:
            r.fail("scheme", "price-domain", "price bounds must be positive")
        cfg.domain = (math.log(lo), math.log(hi))
    elif dom != "auto":
        cfg.domain = _pair(r, "scheme", "domain", dom)
    for key, attr, names in (("N-rule", "N_rule", ("k",)), ("J-rule", "J_rule", ("k", "N"))):
        text_rule = r.get("scheme", key)
        try:
            RefinementRule(text_rule, names=names)
        except ConfigurationError as exc:
            r.fail("scheme", key, str(exc))
        setattr(cfg, attr, text_rule)
    raw = r.get("scheme", "k-range")
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", raw)
    if not m or int(m.group(1)) > int(m.group(2)):
        r.fail("scheme", "k-range", f"expected 'first..last' with first <= last, got {raw!r}")
    cfg.k_range = (int(m.group(1)), int(m.group(2)))

    raw = r.get("measurement", "intervals")
    intervals = []
    for part in raw.split(","):
        try:
            lo, hi = (float(v) for v in part.split(":"))
        except ValueError:
            r.fail("measurement", "intervals", f"expected 'lo:hi, ...', got {raw!r}")
        if not 0 <= lo < hi:
            r.fail("measurement", "intervals", f"interval {part.strip()!r} must satisfy 0 <= lo < hi")
        intervals.append((lo, hi))
    cfg.intervals = intervals
    cfg.reference = r.choice("measurement", "reference", ("exact", "self-difference"))
    if cfg.reference == "exact" and ptype != "call":
        r.fail("measurement", "reference", "no closed-form reference for this payoff; use self-difference")
    cfg.output = r.get("output", "path")
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))


def shipped_config(name):
    """Path of a configuration file bundled with the package."""
    path = Path(__file__).with_name("configs") / name
    if not path.exists():
        raise ConfigurationError(f"no shipped config named {name!r}")
    return path


def emit_csv(obj, path):
    """Write a convergence report or the initial slice of a surface as CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if isinstance(obj, ConvergenceReport):
            w.writerow(obj.header())
            w.writerows(obj.table())
        elif isinstance(obj, ValueSurface):
            if obj.grid.dim != 1:
                raise ValueError("surface CSV dumps are defined for one-dimensional grids")
            w.writerow(["x", "s", "V", "policy"])
            x = obj.grid.axis(0)
            V = obj.values[0].reshape(-1)
            P = np.asarray(obj.controls)[obj.policy[0].reshape(-1)]
            for xm, vm, pm in zip(x, V, P):
                w.writerow([repr(float(xm)), repr(float(np.exp(xm))), repr(float(vm)), repr(float(pm))])
        else:
            raise TypeError(f"cannot write {type(obj).__name__} as CSV")


def save_surface(surface, path, all_slices=False):
    """Store a surface as ``.npz`` with a JSON header."""
    header = {
        "schema": SCHEMA_VERSION,
        "version": __version__,
        "model_hash": surface.model_hash,
        "grid": {
            "lower": list(surface.grid.lower),
            "upper": list(surface.grid.upper),
            "intervals": list(surface.grid.intervals),
            "extrapolation": surface.grid.extrapolation,
        },
        "mesh": {"N": surface.mesh.N, "T": surface.mesh.T},
        "M": surface.gh_order,
        "interp": surface.interp,
        "stepper": surface.stepper,
        "controls": [float(c) for c in surface.controls],
        "all_slices": bool(all_slices),
    }
    body = {"header": np.array(json.dumps(header)), "values_0": surface.values[0], "policy_0": surface.policy[0]}
    if all_slices:
        if any(v is None for v in surface.values) or any(p is None for p in surface.policy):
            raise ValueError("surface was computed with keep='initial'; all slices are not available")
        body["values"] = np.stack(surface.values)
        body["policy"] = np.stack(surface.policy)
    with open(path, "wb") as fh:
        np.savez(fh, **body)


def load_surface(path):
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("schema") != SCHEMA_VERSION:
            raise ConfigurationError(f"{path}: unsupported surface schema {header.get('schema')!r}")
        g = header["grid"]
        grid = Grid(tuple(g["lower"]), tuple(g["upper"]), tuple(g["intervals"]), g["extrapolation"])
        mesh = TimeMesh(header["mesh"]["N"], header["mesh"]["T"])
        N = mesh.N
        if header["all_slices"]:
            values = list(data["values"])
            policy = list(data["policy"])
        else:
            values = [data["values_0"]] + [None] * N
            policy = [data["policy_0"]] + [None] * (N - 1)
    return ValueSurface(
        grid=grid,
        mesh=mesh,
        values=values,
        policy=policy,
        controls=tuple(header["controls"]),
        interp=header["interp"],
        stepper=header["stepper"],
        gh_order=header["M"],
        model_hash=header["model_hash"],
    )
