"""Validated protocol parameterization shared by protocol, simulator, analysis.

epsilon is always derived as f/n and never stored, so the three can not
drift apart. Presets are code constants; a plain-text config format
(key = value, # comments) plus CLI flags layer overrides on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

SYNC = "synchronous"
PSYNC = "partially_synchronous"

PRESET_NAMES = ("sync-eval", "psync-eval-49", "psync-eval-74", "psync-eval-98")


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    q: int
    p_sample: float
    p_vote: float
    p_prop: float
    f: int = 0
    kappa: int = 5
    model: str = PSYNC
    vote_forwarding: bool = False
    # candidate rule refinements; both default to the reading used by the
    # safety argument (see protocol module notes)
    lock_excludes_ancestors: bool = True
    verify_vote_proofs: bool = True
    txs_per_block: int = 1

    @property
    def epsilon(self) -> float:
        return self.f / self.n

    def with_epsilon(self, epsilon: float) -> "ProtocolParams":
        """Copy with f = floor(epsilon * n)."""
        return replace(self, f=int(math.floor(epsilon * self.n + 1e-12)))

    def replace(self, **kw) -> "ProtocolParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors


def validate(p: ProtocolParams) -> ValidationReport:
    """Every violated invariant, by field name; q <= f is a warning only."""
    errors = []
    warnings = []
    if p.n <= 0:
        errors.append(f"n: must be positive, got {p.n}")
    if p.f < 0:
        errors.append(f"f: must be non-negative, got {p.f}")
    if p.n > 0 and p.f >= p.n:
        errors.append(f"f: must be below n, got f={p.f} n={p.n}")
    if not 0 < p.q <= max(p.n, 1):
        errors.append(f"q: must be in 1..n, got {p.q}")
    if p.kappa < 1:
        errors.append(f"kappa: must be >= 1, got {p.kappa}")
    for name in ("p_sample", "p_vote", "p_prop"):
        v = getattr(p, name)
        if not 0.0 <= v <= 1.0:
            errors.append(f"{name}: probability out of range, got {v}")
    if p.model not in (SYNC, PSYNC):
        errors.append(f"model: must be {SYNC} or {PSYNC}, got {p.model!r}")
    elif p.n > 0:
        eps = p.epsilon
        if p.model == SYNC and not eps < 0.5:
            errors.append(f"epsilon: {eps:g} >= 1/2 under {SYNC}")
        if p.model == PSYNC and not eps < 1 / 3:
            errors.append(f"epsilon: {eps:g} >= 1/3 under {PSYNC}")
    if p.txs_per_block < 0:
        errors.append(f"txs_per_block: must be >= 0, got {p.txs_per_block}")
    if not errors and p.q <= p.f:
        warnings.append(
            f"q: {p.q} <= f = {p.f}; an adversary-only certificate is possible "
            "(its probability is what the safety analysis bounds)"
        )
    return ValidationReport(tuple(errors), tuple(warnings))


def preset(name: str) -> ProtocolParams:
    """Named parameter sets used throughout the evaluation.

    sync-eval:      n=500, q=49, p_sample=3/sqrt(n), p_vote=1.9q/n, p_prop=10/n
    psync-eval-%d:  n=500, q in {49,74,98}, p_sample=3/sqrt(n),
                    p_vote=1.45q/n, p_prop=6/n
    f defaults to 0; use with_epsilon() to set a fault fraction.
    """
    n = 500
    if name == "sync-eval":
        q = 49
        return ProtocolParams(
            n=n,
            q=q,
            p_sample=3 / math.sqrt(n),
            p_vote=1.9 * q / n,
            p_prop=10 / n,
            model=SYNC,
        )
    if name.startswith("psync-eval-"):
        try:
            q = int(name.rsplit("-", 1)[1])
        except ValueError:
            q = -1
        if q in (49, 74, 98):
            return ProtocolParams(
                n=n,
                q=q,
                p_sample=3 / math.sqrt(n),
                p_vote=1.45 * q / n,
                p_prop=6 / n,
                model=PSYNC,
            )
    raise ValueError(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}")


_BOOL_FIELDS = {"vote_forwarding", "lock_excludes_ancestors", "verify_vote_proofs"}
_INT_FIELDS = {"n", "q", "f", "kappa", "txs_per_block"}
_FLOAT_FIELDS = {"p_sample", "p_vote", "p_prop"}


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines; `#` starts a comment; blank lines ignored."""
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key in _BOOL_FIELDS:
            out[key] = _parse_bool(raw)
        elif key in _INT_FIELDS:
            out[key] = int(raw)
        elif key in _FLOAT_FIELDS or key == "epsilon":
            out[key] = float(raw)
        elif key == "model":
            out[key] = raw
        elif key == "preset":
            out[key] = raw
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return out


def from_config(cfg: dict, base: ProtocolParams | None = None) -> ProtocolParams:
    """Build params from a parsed config dict, over a preset or explicit base.

    Order: `preset` key (if any) establishes the base, remaining keys
    override it. `epsilon` is translated to f = floor(epsilon * n) after
    n is settled.
    """
    cfg = dict(cfg)
    preset_name = cfg.pop("preset", None)
    if preset_name is not None:
        base = preset(preset_name)
    epsilon = cfg.pop("epsilon", None)
    if base is None:
        required = {"n", "q", "p_sample", "p_vote", "p_prop"}
        missing = sorted(required - cfg.keys())
        if missing:
            raise ValueError(
                f"no preset given and required keys missing: {', '.join(missing)}"
            )
        base = ProtocolParams(
            n=cfg.pop("n"),
            q=cfg.pop("q"),
            p_sample=cfg.pop("p_sample"),
            p_vote=cfg.pop("p_vote"),
            p_prop=cfg.pop("p_prop"),
        )
    p = base.replace(**cfg) if cfg else base
    if epsilon is not None:
        p = p.with_epsilon(epsilon)
    return p


def to_config_text(p: ProtocolParams) -> str:
    """Round-trippable key = value rendering (parse -> identical params)."""
    lines = []
    for f_ in fields(p):
        value = getattr(p, f_.name)
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{f_.name} = {rendered}")
    return "\n".join(lines) + "\n"
