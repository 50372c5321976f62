"""Run configuration: presets, flat ``key = value`` files and validation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .assembly import GLDiscretization
from .linalg import GmresConfig
from .mesh import build_dof_map, multiconnected_mesh, read_mesh, unit_square_mesh


class ConfigError(ValueError):
    pass


PRESETS = ("square", "multiconnected", "custom")


@dataclass(frozen=True)
class SimConfig:
    preset: str = "square"
    mesh_file: str | None = None
    n: int = 40
    order: int = 2
    kappa: float = 10.0
    eta: float = 1.0
    H: float = 3.5
    tau: float = 0.01
    T: float = 20.0
    psi0: complex = 0.8 + 0.6j
    A0: tuple[float, float] = (0.0, 0.0)
    zeta_cap: float = 1.0 + math.sqrt(3.0)
    gmres: GmresConfig = GmresConfig()
    snapshot_interval: int = 100
    out: str | None = None
    # parameter name -> note, for values that are choices rather than published
    provenance: tuple[tuple[str, str], ...] = ()

    def n_steps(self) -> int:
        return int(round(self.T / self.tau)) if self.T > 0 else 0

    def validate(self) -> None:
        if self.preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {self.preset!r} (expected one of {', '.join(PRESETS)})")
        if self.preset == "custom" and not self.mesh_file:
            raise ConfigError("mesh_file: required for preset=custom")
        if not self.tau > 0:
            raise ConfigError(f"tau: time step must be positive, got {self.tau}")
        if not self.T >= 0:
            raise ConfigError(f"T: final time must be non-negative, got {self.T}")
        if not self.kappa > 0:
            raise ConfigError(f"kappa: must be positive, got {self.kappa}")
        if not self.eta > 0:
            raise ConfigError(f"eta: must be positive, got {self.eta}")
        if self.order not in (1, 2):
            raise ConfigError(f"order: must be 1 or 2, got {self.order}")
        if self.n < 1:
            raise ConfigError(f"n: must be >= 1, got {self.n}")
        if self.snapshot_interval < 0:
            raise ConfigError(f"snapshot_interval: must be >= 0, got {self.snapshot_interval}")
        if not self.zeta_cap > 0:
            raise ConfigError(f"zeta_cap: must be positive, got {self.zeta_cap}")

    def warnings(self) -> list[str]:
        out = []
        if self.tau > self.eta:
            out.append(f"tau={self.tau} > eta={self.eta}: energy stability not guaranteed")
        if self.T > 0 and abs(self.n_steps() * self.tau - self.T) > 1e-9 * self.T:
            out.append(f"T={self.T} is not a multiple of tau={self.tau}; "
                       f"running {self.n_steps()} steps to t={self.n_steps() * self.tau}")
        return out

    def override(self, **kw) -> "SimConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["psi0"] = _fmt_complex(self.psi0)
        d["A0"] = list(self.A0)
        d["provenance"] = dict(self.provenance)
        return d


def preset_square(kappa: float, **overrides) -> SimConfig:
    """Unit square, h = sqrt(2)/40, P2, H = 3.5, eta = 1, tau = 0.01, T = 20."""
    if not kappa > 0:
        raise ConfigError(f"kappa: must be positive, got {kappa}")
    cfg = SimConfig(preset="square", n=40, order=2, kappa=kappa, eta=1.0, H=3.5,
                    tau=0.01, T=20.0, psi0=0.8 + 0.6j, A0=(0.0, 0.0))
    return cfg.override(**overrides)


def preset_multiconnected(kappa: float, **overrides) -> SimConfig:
    """Square with a square hole, P2, H = 5.0, eta = 1, tau = 0.01, T = 20."""
    if not kappa > 0:
        raise ConfigError(f"kappa: must be positive, got {kappa}")
    cfg = SimConfig(preset="multiconnected", n=24, order=2, kappa=kappa, eta=1.0, H=5.0,
                    tau=0.01, T=20.0, psi0=0.8 + 0.6j, A0=(0.0, 0.0),
                    provenance=(("n", "mesh resolution n=24 is a chosen default, not a published value"),))
    return cfg.override(**overrides)


def preset_config(name: str, kappa: float, **overrides) -> SimConfig:
    if name == "square":
        return preset_square(kappa, **overrides)
    if name == "multiconnected":
        return preset_multiconnected(kappa, **overrides)
    if name == "custom":
        return SimConfig(preset="custom", kappa=kappa).override(**overrides)
    raise ConfigError(f"preset: unknown preset {name!r} (expected one of {', '.join(PRESETS)})")


# ----------------------------------------------------------------- parsing

def _fmt_complex(z: complex) -> str:
    z = complex(z)
    return f"{z.real!r}{'+' if z.imag >= 0 else '-'}{abs(z.imag)!r}j"


def _parse_complex(s: str) -> complex:
    return complex(s.replace(" ", "").replace("i", "j"))


def _parse_pair(s: str) -> tuple[float, float]:
    parts = [p for p in s.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {s!r}")
    return float(parts[0]), float(parts[1])


_SCALAR_KEYS = {
    "preset": str, "mesh_file": str, "n": int, "order": int, "kappa": float, "eta": float,
    "H": float, "tau": float, "T": float, "psi0": _parse_complex, "A0": _parse_pair,
    "zeta_cap": float, "snapshot_interval": int, "out": str,
}
_GMRES_KEYS = {"gmres_restart": ("restart", int), "gmres_tol": ("tol", float),
               "gmres_max_iter": ("max_iter", int), "preconditioner": ("preconditioner", str)}


def parse_pairs(text: str, source: str = "<config>") -> dict[str, str]:
    """Split ``key = value`` lines (``#`` comments, blank lines) or whitespace
    separated ``key=value`` tokens into a raw dict."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = [line] if line.count("=") <= 1 else line.split()
        for tok in tokens:
            if "=" not in tok:
                raise ConfigError(f"{source}:{lineno}: expected key = value, got {tok!r}")
            k, v = (s.strip() for s in tok.split("=", 1))
            raw[k] = v
    return raw


def config_from_mapping(raw: dict[str, str], base: SimConfig | None = None) -> SimConfig:
    """Resolve raw string values into a config.  A ``preset`` key selects the
    defaults; every other key overrides them.  Unknown keys are errors."""
    raw = dict(raw)
    kappa_txt = raw.get("kappa")
    if "preset" in raw:
        try:
            kappa = float(kappa_txt) if kappa_txt is not None else (base.kappa if base else 10.0)
        except ValueError as exc:
            raise ConfigError(f"kappa: cannot parse {kappa_txt!r} as a number") from exc
        cfg = preset_config(raw.pop("preset"), kappa)
    elif base is not None:
        cfg = base
    else:
        raise ConfigError("preset: missing required key")
    updates = {}
    gm = {}
    for key, val in raw.items():
        try:
            if key in _SCALAR_KEYS:
                updates[key] = _SCALAR_KEYS[key](val)
            elif key in _GMRES_KEYS:
                name, conv = _GMRES_KEYS[key]
                gm[name] = conv(val)
            else:
                raise ConfigError(f"{key}: unknown configuration key")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse value {val!r} ({exc})") from exc
    if gm:
        try:
            updates["gmres"] = replace(cfg.gmres, **gm)
        except ValueError as exc:
            raise ConfigError(f"gmres: {exc}") from exc
    cfg = cfg.override(**updates)
    cfg.validate()
    return cfg


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> SimConfig:
    """Read a config file (optional) and apply command-line overrides on top."""
    raw: dict[str, str] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from exc
        raw.update(parse_pairs(text, str(path)))
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    raw.update(ov)
    return config_from_mapping(raw)


def dump_config(cfg: SimConfig) -> str:
    lines = [f"preset = {cfg.preset}"]
    if cfg.mesh_file:
        lines.append(f"mesh_file = {cfg.mesh_file}")
    lines += [
        f"n = {cfg.n}", f"order = {cfg.order}", f"kappa = {cfg.kappa!r}", f"eta = {cfg.eta!r}",
        f"H = {cfg.H!r}", f"tau = {cfg.tau!r}", f"T = {cfg.T!r}",
        f"psi0 = {_fmt_complex(cfg.psi0)}", f"A0 = {cfg.A0[0]!r}, {cfg.A0[1]!r}",
        f"zeta_cap = {cfg.zeta_cap!r}", f"snapshot_interval = {cfg.snapshot_interval}",
        f"gmres_restart = {cfg.gmres.restart}", f"gmres_tol = {cfg.gmres.tol!r}",
        f"gmres_max_iter = {cfg.gmres.max_iter}", f"preconditioner = {cfg.gmres.preconditioner}",
    ]
    if cfg.out:
        lines.append(f"out = {cfg.out}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------- realisation

def build_mesh(cfg: SimConfig):
    if cfg.preset == "square":
        return unit_square_mesh(cfg.n)
    if cfg.preset == "multiconnected":
        return multiconnected_mesh(cfg.n)
    return read_mesh(cfg.mesh_file)


def build_discretization(cfg: SimConfig):
    mesh = build_mesh(cfg)
    dofmap = build_dof_map(mesh, cfg.order)
    return mesh, dofmap, GLDiscretization(mesh, dofmap)


def initial_fields(cfg: SimConfig, dofmap) -> tuple[np.ndarray, np.ndarray]:
    psi = np.full(dofmap.n_dofs, complex(cfg.psi0), dtype=complex)
    A = np.empty((2, dofmap.n_dofs))
    A[0], A[1] = cfg.A0
    return psi, A


__all__ = [
    "SimConfig", "ConfigError", "preset_square", "preset_multiconnected", "preset_config",
    "parse_pairs", "config_from_mapping", "load_config", "dump_config", "build_mesh",
    "build_discretization", "initial_fields",
]
