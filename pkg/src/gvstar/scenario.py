"""Scenario files: flat key-value text with section headers, parsed completely before use.

    [scenario]      name, description, k_scale (inverse length for the k cut-off)
    [coords]        names = a, b, c ; orientation = 1 | -1
    [domain]        lo = ..., hi = ...
    [integration]   optional sub-box lo / hi (defaults to the domain)
    [constants]     name = number
    [metric]        g11 g12 g13 g22 g23 g33
    [T]             t1 t2 t3
    [twisted]       mode = explicit (u, v, gB11, gB12, gB22) | recover (k0, h0, step)
    [expect]        "<command> [suite|kind]" = pass | fail | <class verdict>

A [twisted] block replaces [metric] and [T] (coordinates must be x, y, s).
"""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .chart import ChartBox
from .exprlang import ExprError, Jet2, parse
from .geometry import METRIC_KEYS, MetricField, VectorField

__all__ = [
    "ScenarioError",
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "dump_scenario",
    "bundled_names",
    "bundled_path",
    "twisted_scenario",
]

T_KEYS = ("t1", "t2", "t3")
GB_KEYS = ("gB11", "gB12", "gB22")
PROBE_FRACTIONS = (0.1, 0.5, 0.9)


class ScenarioError(ValueError):
    pass


def _floats(text: str, what: str, count: int | None = 3) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ScenarioError(f"{what}: expected numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise ScenarioError(f"{what}: expected {count} numbers, got {len(vals)}")
    return vals


@dataclass
class Scenario:
    name: str
    coords: tuple[str, str, str]
    orientation: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    metric_src: dict[str, str] | None = None
    T_src: list[str] | None = None
    constants: dict[str, float] = field(default_factory=dict)
    region_lo: tuple[float, ...] | None = None
    region_hi: tuple[float, ...] | None = None
    twisted: dict[str, str] | None = None
    expect: dict[str, str] = field(default_factory=dict)
    description: str = ""
    k_scale: float = 1.0
    normalize_t: bool = False
    _spec: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        try:
            self.box = ChartBox(self.coords, self.lo, self.hi, self.orientation)
            self.region = (
                self.box.sub_box(self.region_lo, self.region_hi)
                if self.region_lo is not None else self.box
            )
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
        if self.twisted is None:
            if self.metric_src is None or self.T_src is None:
                raise ScenarioError("scenario needs [metric] and [T], or a [twisted] block")
            try:
                self.metric_exprs = [parse(self.metric_src[k], self.coords, self.constants) for k in METRIC_KEYS]
                self.T_exprs = [parse(s, self.coords, self.constants) for s in self.T_src]
            except ExprError as exc:
                raise ScenarioError(f"expression error: {exc}") from exc
        else:
            self._check_twisted()

    def _check_twisted(self):
        if tuple(self.coords) != ("x", "y", "s"):
            raise ScenarioError("a [twisted] scenario uses coordinates x, y, s")
        mode = self.twisted.get("mode", "explicit")
        need = {"explicit": ("u", "v"), "recover": ("k0", "h0")}.get(mode)
        if need is None:
            raise ScenarioError(f"[twisted] mode must be explicit or recover, got {mode!r}")
        missing = [k for k in need if k not in self.twisted]
        if missing:
            raise ScenarioError(f"[twisted] is missing {missing}")
        try:
            if mode == "explicit":
                for k in ("u", "v") + GB_KEYS:
                    parse(self.twisted.get(k, "1" if k != "gB12" else "0"), self.coords, self.constants)
            else:
                parse(self.twisted["k0"], self.coords, self.constants)
                float(self.twisted["h0"])
                float(self.twisted.get("step", "1e-3"))
        except ExprError as exc:
            raise ScenarioError(f"[twisted] expression error: {exc}") from exc
        except ValueError as exc:
            raise ScenarioError(f"[twisted] {exc}") from exc

    # -- fields -------------------------------------------------------------

    def twisted_spec(self):
        from .twisted import TwistedSpec, recover_profiles

        if self.twisted is None:
            return None
        if self._spec is None:
            t = self.twisted
            if t.get("mode", "explicit") == "recover":
                k0 = parse(t["k0"], self.coords, self.constants)
                self._spec = recover_profiles(k0, float(t["h0"]), self.box, step=float(t.get("step", "1e-3")))
                self._spec.sources.update({"k0": t["k0"], "h0": t["h0"]})
            else:
                gB = tuple(parse(t.get(k, "0" if k == "gB12" else "1"), self.coords, self.constants) for k in GB_KEYS)
                self._spec = TwistedSpec(
                    self.box, parse(t["u"], self.coords, self.constants), parse(t["v"], self.coords, self.constants), gB,
                    sources={k: t[k] for k in ("u", "v") + GB_KEYS if k in t},
                )
        return self._spec

    def metric(self) -> MetricField:
        if self.twisted is not None:
            return self.twisted_spec().metric()
        return MetricField(self.metric_exprs, self.metric_src)

    def reeb(self) -> VectorField:
        T = self.twisted_spec().reeb() if self.twisted is not None else VectorField(self.T_exprs, self.T_src)
        if not self.normalize_t:
            return T
        g = self.metric()

        def unit(i):
            def f(p):
                gj = g.jets(p)
                tj = [c(p) for c in T.components]
                n2 = _quadratic(gj, tj)
                return tj[i] * n2.sqrt().reciprocal()
            return f

        return VectorField([unit(0), unit(1), unit(2)])

    def probe_points(self) -> np.ndarray:
        axes = [lo + np.array(PROBE_FRACTIONS) * (hi - lo) for lo, hi in zip(self.lo, self.hi)]
        return np.stack(np.meshgrid(*axes, indexing="ij")).reshape(3, -1)

    def unit_defect(self) -> float:
        """max |g(T,T) - 1| over the 27 probe points."""
        p = self.probe_points()
        gj = self.metric().jets(p)
        tj = [c(p) for c in self.reeb().components]
        return float(np.max(np.abs(_quadratic(gj, tj).val - 1.0)))

    def check_unit(self, tol: float = 1e-8) -> float:
        d = self.unit_defect()
        if not d <= tol:
            raise ScenarioError(f"T is not unit: |g(T,T) - 1| = {d:.3e} at the probe points (use --normalize-t)")
        return d

    @property
    def k_cut(self) -> float:
        return 1e-8 * self.k_scale

    def expressions(self) -> dict[str, str]:
        """Every expression source the scenario defines, by key."""
        out = {}
        if self.metric_src:
            out.update(self.metric_src)
        if self.T_src:
            out.update(zip(T_KEYS, self.T_src))
        if self.twisted:
            out.update({f"twisted.{k}": v for k, v in self.twisted.items() if k in ("u", "v", "k0") + GB_KEYS})
        return out

    @property
    def digest(self) -> str:
        return hashlib.sha256(dump_scenario(self).encode()).hexdigest()


def _quadratic(gj: list[Jet2], tj: list[Jet2]) -> Jet2:
    g11, g12, g13, g22, g23, g33 = gj
    a, b, c = tj
    return g11 * a * a + g22 * b * b + g33 * c * c + 2.0 * (g12 * a * b + g13 * a * c + g23 * b * c)


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    return cp


def parse_scenario(text: str, normalize_t: bool = False) -> Scenario:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"malformed scenario file: {exc}") from None
    known = {"scenario", "coords", "domain", "integration", "constants", "metric", "T", "twisted", "expect"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ScenarioError(f"unknown sections {sorted(unknown)}")
    for sec in ("scenario", "coords", "domain"):
        if not cp.has_section(sec):
            raise ScenarioError(f"missing section [{sec}]")
    try:
        name = cp["scenario"]["name"]
        coords = tuple(v.strip() for v in cp["coords"]["names"].replace(",", " ").split())
        orientation = int(cp["coords"].get("orientation", "1"))
        lo = _floats(cp["domain"]["lo"], "domain lo")
        hi = _floats(cp["domain"]["hi"], "domain hi")
        k_scale = float(cp["scenario"].get("k_scale", "1"))
    except KeyError as exc:
        raise ScenarioError(f"missing key {exc}") from None
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    if len(coords) != 3:
        raise ScenarioError(f"[coords] names needs three names, got {coords}")
    region_lo = region_hi = None
    if cp.has_section("integration"):
        region_lo = _floats(cp["integration"]["lo"], "integration lo")
        region_hi = _floats(cp["integration"]["hi"], "integration hi")
    constants = {}
    if cp.has_section("constants"):
        for k, v in cp["constants"].items():
            try:
                constants[k] = float(v)
            except ValueError:
                raise ScenarioError(f"constant {k} is not a number: {v!r}") from None
    metric_src = T_src = twisted = None
    if cp.has_section("metric"):
        missing = [k for k in METRIC_KEYS if k not in cp["metric"]]
        if missing:
            raise ScenarioError(f"[metric] is missing {missing}")
        metric_src = {k: cp["metric"][k] for k in METRIC_KEYS}
    if cp.has_section("T"):
        missing = [k for k in T_KEYS if k not in cp["T"]]
        if missing:
            raise ScenarioError(f"[T] is missing {missing}")
        T_src = [cp["T"][k] for k in T_KEYS]
    if cp.has_section("twisted"):
        twisted = dict(cp["twisted"])
    expect = dict(cp["expect"]) if cp.has_section("expect") else {}
    return Scenario(
        name=name, coords=coords, orientation=orientation, lo=lo, hi=hi, metric_src=metric_src, T_src=T_src,
        constants=constants, region_lo=region_lo, region_hi=region_hi, twisted=twisted, expect=expect,
        description=cp["scenario"].get("description", ""), k_scale=k_scale, normalize_t=normalize_t,
    )


def load_scenario(path_or_name: str, normalize_t: bool = False) -> Scenario:
    """Read a scenario file, or a bundled scenario by name."""
    if path_or_name in bundled_names():
        text = bundled_path(path_or_name).read_text()
    else:
        try:
            with open(path_or_name, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario {path_or_name!r}: {exc.strerror}") from None
    return parse_scenario(text, normalize_t=normalize_t)


def _join(vals) -> str:
    return ", ".join(repr(float(v)) for v in vals)


def dump_scenario(sc: Scenario) -> str:
    cp = _parser()
    cp["scenario"] = {"name": sc.name}
    if sc.description:
        cp["scenario"]["description"] = sc.description
    if sc.k_scale != 1.0:
        cp["scenario"]["k_scale"] = repr(sc.k_scale)
    cp["coords"] = {"names": ", ".join(sc.coords), "orientation": str(sc.orientation)}
    cp["domain"] = {"lo": _join(sc.lo), "hi": _join(sc.hi)}
    if sc.region_lo is not None:
        cp["integration"] = {"lo": _join(sc.region_lo), "hi": _join(sc.region_hi)}
    if sc.constants:
        cp["constants"] = {k: repr(v) for k, v in sc.constants.items()}
    if sc.metric_src is not None:
        cp["metric"] = dict(sc.metric_src)
    if sc.T_src is not None:
        cp["T"] = dict(zip(T_KEYS, sc.T_src))
    if sc.twisted is not None:
        cp["twisted"] = dict(sc.twisted)
    if sc.expect:
        cp["expect"] = dict(sc.expect)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue().rstrip("\n") + "\n"


def twisted_scenario(spec, name: str, mode: str = "explicit", expect: dict | None = None) -> Scenario:
    """Scenario wrapping a TwistedSpec; recovered specs are stored by their ODE data."""
    if mode == "recover":
        block = {"mode": "recover", "k0": spec.sources["k0"], "h0": spec.sources["h0"],
                 "step": repr(spec.info.get("step", 1e-3))}
    else:
        missing = [k for k in ("u", "v") if k not in spec.sources]
        if missing:
            raise ScenarioError(f"profiles {missing} have no expression source; store the spec with mode=recover")
        block = {"mode": "explicit", **{k: v for k, v in spec.sources.items() if k in ("u", "v") + GB_KEYS}}
    b = spec.box
    return Scenario(name=name, coords=b.coord_names, orientation=b.orientation, lo=b.lo, hi=b.hi,
                    twisted=block, expect=dict(expect or {}))


def bundled_names() -> list[str]:
    root = resources.files("gvstar") / "scenarios"
    out = []
    for p in root.iterdir():
        if p.name.endswith(".ini"):
            cp = _parser()
            cp.read_string(p.read_text())
            out.append(cp["scenario"]["name"])
    return sorted(out)


def bundled_path(name: str):
    root = resources.files("gvstar") / "scenarios"
    for p in root.iterdir():
        if p.name.endswith(".ini"):
            cp = _parser()
            cp.read_string(p.read_text())
            if cp["scenario"]["name"] == name:
                return p
    raise ScenarioError(f"no bundled scenario named {name!r}")
